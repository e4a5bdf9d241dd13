#include "bhvit/observations.hpp"

#include <algorithm>
#include <cmath>

#include "bhvit/autograd.hpp"
#include "bhvit/training.hpp"

namespace bhvit {

namespace {

constexpr double kPi = 3.14159265358979323846;

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

float sgn(float v) { return v >= 0.0f ? 1.0f : -1.0f; }

}  // namespace

double gaussian_entropy(double sigma2) {
  if (sigma2 <= 0.0) throw DomainError("gaussian_entropy: sigma^2 must be positive");
  return 0.5 * std::log(2.0 * kPi * std::exp(1.0) * sigma2);
}

std::vector<EntropyRow> entropy_experiment(const std::vector<int>& ks, int d, int trials,
                                           unsigned seed) {
  if (d < 1 || trials < 1) throw DomainError("entropy_experiment: d and trials must be positive");
  Rng rng(seed);
  std::binomial_distribution<int> bin(d, 0.5);
  std::vector<EntropyRow> rows;
  std::vector<double> x, p;
  for (int k : ks) {
    if (k < 2) throw DomainError("entropy_experiment: k must be at least 2");
    x.resize(static_cast<size_t>(k));
    p.resize(static_cast<size_t>(k));
    double h_emp = 0, h_pred = 0;
    for (int trial = 0; trial < trials; ++trial) {
      // each logit is a sum of d Rademacher products, normalized by d
      for (auto& v : x) v = static_cast<double>(2 * bin(rng) - d) / d;
      const double xmax = *std::max_element(x.begin(), x.end());
      double z = 0;
      for (size_t i = 0; i < x.size(); ++i) z += p[i] = std::exp(x[i] - xmax);
      double h = 0, mu = 0, var = 0, mu_s = 0;
      for (size_t i = 0; i < x.size(); ++i) {
        p[i] /= z;
        if (p[i] > 0) h -= p[i] * std::log(p[i]);
        mu += x[i];
        mu_s += p[i] * x[i];
      }
      mu /= k;
      for (double v : x) var += (v - mu) * (v - mu);
      var /= k;
      h_emp += h;
      h_pred += std::log(static_cast<double>(k)) + mu + 0.5 * var - mu_s;
    }
    EntropyRow row;
    row.k = k;
    row.d = d;
    row.h_emp = h_emp / trials;
    row.h_pred = h_pred / trials;
    row.ratio = row.h_emp / std::log(static_cast<double>(k));
    rows.push_back(row);
  }
  return rows;
}

std::vector<DemoivreRow> demoivre_check(const std::vector<int>& ds, double p, int samples,
                                        unsigned seed) {
  if (p <= 0.0 || p >= 1.0) throw DomainError("demoivre_check: p must be in (0,1)");
  if (samples < 2) throw DomainError("demoivre_check: need at least 2 samples");
  Rng rng(seed);
  std::vector<DemoivreRow> rows;
  std::vector<double> x(static_cast<size_t>(samples));
  for (int d : ds) {
    std::binomial_distribution<int> bin(d, p);
    double mean = 0;
    for (auto& v : x) mean += v = 2.0 * bin(rng) - d;
    mean /= samples;
    double var = 0;
    for (double v : x) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / (samples - 1));
    std::sort(x.begin(), x.end());
    double ks = 0;
    for (int i = 0; i < samples; ++i) {
      const double f = normal_cdf((x[static_cast<size_t>(i)] - mean) / sd);
      ks = std::max(ks, std::max(f - static_cast<double>(i) / samples,
                                 static_cast<double>(i + 1) / samples - f));
    }
    rows.push_back(DemoivreRow{d, ks, mean});
  }
  return rows;
}

ResidualTrial residual_gradient_trial(int t, int d, Rng& rng) {
  if (t < 2 || d < 1) throw DomainError("residual_gradient_trial: need t >= 2, d >= 1");
  const Tensor x = Tensor::randn({t, d}, rng);
  const Tensor wq = Tensor::randn({d, d}, rng, 0.5f);
  const Tensor wk = Tensor::randn({d, d}, rng, 0.5f);
  const Tensor wv = Tensor::randn({d, d}, rng, 0.5f);

  auto sign_of = [](const Tensor& src) {
    Tensor out(src.shape);
    for (size_t i = 0; i < src.data.size(); ++i) out.data[i] = sgn(src.data[i]);
    return out;
  };
  auto bmm = [&](const Tensor& a, const Tensor& b) {
    Tensor out({a.shape[0], b.shape[1]});
    for (int64_t i = 0; i < a.shape[0]; ++i)
      for (int64_t kk = 0; kk < a.shape[1]; ++kk)
        for (int64_t j = 0; j < b.shape[1]; ++j) out.at2(i, j) += a.at2(i, kk) * b.at2(kk, j);
    return out;
  };

  const Tensor bx = sign_of(x);
  const Tensor q = bmm(bx, sign_of(wq));
  const Tensor k = bmm(bx, sign_of(wk));
  const Tensor v = bmm(bx, sign_of(wv));
  const Tensor bq = sign_of(q), bk = sign_of(k), bv = sign_of(v);

  // scaled binary attention scores
  Tensor scores({t, t});
  const float inv_sqrt_d = 1.0f / std::sqrt(static_cast<float>(d));
  for (int64_t l = 0; l < t; ++l)
    for (int64_t m = 0; m < t; ++m) {
      float s = 0;
      for (int64_t i = 0; i < d; ++i) s += bq.at2(l, i) * bk.at2(m, i);
      scores.at2(l, m) = s * inv_sqrt_d;
    }
  Tensor a(scores.shape);
  softmax_rows(scores, a);

  // G[l][i]: upstream through B(A) with its half-open pass window, the
  // softmax diagonal term A(1-A)/sqrt(d), and the score dependence on B(Q)
  Tensor g({t, d});
  for (int64_t l = 0; l < t; ++l)
    for (int64_t i = 0; i < d; ++i) {
      float acc = 0;
      for (int64_t m = 0; m < t; ++m) {
        const float al = a.at2(l, m);
        if (al < 0.5f || al > 1.0f) continue;
        acc += bv.at2(m, i) * al * (1.0f - al) * inv_sqrt_d * bk.at2(m, i);
      }
      g.at2(l, i) = acc;
    }

  int64_t zero_with = 0, zero_without = 0;
  for (int64_t l = 0; l < t; ++l)
    for (int64_t i = 0; i < d; ++i) {
      const float mq = std::fabs(q.at2(l, i)) <= 1.0f ? 1.0f : 0.0f;
      const float chain = g.at2(l, i) * mq;
      for (int64_t j = 0; j < d; ++j) {
        const float mw = std::fabs(wq.at2(j, i)) <= 1.0f ? 1.0f : 0.0f;
        if (chain * bx.at2(l, j) * mw == 0.0f) ++zero_without;
        if ((1.0f + chain) * bx.at2(l, j) * mw == 0.0f) ++zero_with;
      }
    }
  const double total = static_cast<double>(t) * d * d;
  return ResidualTrial{zero_with / total, zero_without / total};
}

ResidualSummary residual_gradient_experiment(int t, int d, int trials, unsigned seed) {
  if (trials < 1) throw DomainError("residual_gradient_experiment: trials must be positive");
  Rng rng(seed);
  ResidualSummary s;
  s.trials = trials;
  for (int i = 0; i < trials; ++i) {
    const ResidualTrial r = residual_gradient_trial(t, d, rng);
    if (r.frac_with < r.frac_without) ++s.strict_wins;
    s.mean_with += r.frac_with;
    s.mean_without += r.frac_without;
  }
  s.mean_with /= trials;
  s.mean_without /= trials;
  return s;
}

std::vector<std::pair<int64_t, double>> adam_factor_curve(int64_t t_max) {
  if (t_max < 1) throw DomainError("adam_factor_curve: t_max must be positive");
  std::vector<std::pair<int64_t, double>> out;
  out.reserve(static_cast<size_t>(t_max));
  for (int64_t t = 1; t <= t_max; ++t) out.emplace_back(t, adam_factor(t));
  return out;
}

}  // namespace bhvit
