#pragma once

#include <span>

namespace nasrec {

inline constexpr double kLoglossClamp = 1e-7;

// Mean binary cross-entropy with probabilities clamped to [eps, 1 - eps].
double metric_logloss(std::span<const double> probs, std::span<const float> labels);

// Mann-Whitney U / (n_pos * n_neg) with ties counted one half. Throws when
// only one class is present.
double metric_auc(std::span<const double> scores, std::span<const float> labels);

// Sample Pearson correlation. Throws on n < 2 or zero variance.
double pearson_rho(std::span<const double> x, std::span<const double> y);

// Tie-corrected Kendall tau-b. Throws on n < 2 or when either side is all ties.
double kendall_tau(std::span<const double> x, std::span<const double> y);

}  // namespace nasrec
