#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "bhvit/tensor.hpp"

namespace bhvit {

/// Differential entropy of a 1-D Gaussian, 0.5 * ln(2*pi*e*sigma^2).
double gaussian_entropy(double sigma2);

/// One attention row of k tokens over d channels: logits are sums of d
/// Rademacher products, normalized by d. Empirical softmax entropy against
/// the log-normal prediction ln(k) + mu + sigma^2/2 - mu_s.
struct EntropyRow {
  int k = 0, d = 0;
  double h_emp = 0, h_pred = 0, ratio = 0;  // ratio = h_emp / ln(k)
};
std::vector<EntropyRow> entropy_experiment(const std::vector<int>& ks, int d, int trials,
                                           unsigned seed);

/// Kolmogorov-Smirnov distance between binomial sums 2t-d and their fitted
/// Gaussian; shrinks as d grows.
struct DemoivreRow {
  int d = 0;
  double ks_distance = 0, mean = 0;
};
std::vector<DemoivreRow> demoivre_check(const std::vector<int>& ds, double p, int samples,
                                        unsigned seed);

/// Fraction of exactly-zero entries of dY/dW_q through the binary attention
/// gradient chain, with and without the Q-to-output shortcut.
struct ResidualTrial {
  double frac_with = 0, frac_without = 0;
};
ResidualTrial residual_gradient_trial(int t, int d, Rng& rng);

struct ResidualSummary {
  int strict_wins = 0;  // trials with frac_with < frac_without
  int trials = 0;
  double mean_with = 0, mean_without = 0;
};
ResidualSummary residual_gradient_experiment(int t, int d, int trials, unsigned seed);

/// (t, factor) series of the Adam update-magnitude factor.
std::vector<std::pair<int64_t, double>> adam_factor_curve(int64_t t_max);

}  // namespace bhvit
