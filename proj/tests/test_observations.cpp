#include <doctest.h>

#include <cmath>

#include "bhvit/observations.hpp"

using namespace bhvit;

TEST_CASE("gaussian differential entropy at unit variance") {
  CHECK(gaussian_entropy(1.0) == doctest::Approx(1.4189385).epsilon(1e-6));
  CHECK_THROWS_AS(gaussian_entropy(0.0), DomainError);
}

TEST_CASE("binary attention rows approach the uniform distribution as k grows") {
  const auto rows = entropy_experiment({20, 200, 2000}, 256, 10, 7);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].ratio < rows[1].ratio);
  CHECK(rows[1].ratio < rows[2].ratio);
  CHECK(rows[2].ratio >= 0.99);
  for (const auto& r : rows)
    CHECK(std::fabs(r.h_emp - r.h_pred) / r.h_emp < 0.05);
}

TEST_CASE("de Moivre-Laplace: the Gaussian fit tightens as d grows") {
  const auto rows = demoivre_check({16, 64, 256}, 0.5, 4000, 7);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].ks_distance > rows[1].ks_distance);
  CHECK(rows[1].ks_distance > rows[2].ks_distance);
  CHECK(rows[2].ks_distance < 0.05);
  for (const auto& r : rows) CHECK(std::fabs(r.mean) < 2.0);
}

TEST_CASE("query shortcut densifies the attention gradient") {
  const ResidualSummary s = residual_gradient_experiment(4, 8, 50, 7);
  CHECK(s.strict_wins >= 48);
  CHECK(s.mean_with < s.mean_without);
  CHECK(s.mean_without > 0.5);  // the chain without the shortcut is mostly dead
}

TEST_CASE("adam factor curve rises from ~1.11 to the plateau") {
  const auto curve = adam_factor_curve(5000);
  REQUIRE(curve.size() == 5000);
  CHECK(curve.front().second == doctest::Approx(std::sqrt(0.999) / 0.9));
  CHECK(curve.back().second == doctest::Approx(3.51).epsilon(0.01));
  CHECK(curve[99].second < curve.back().second);
}
