#pragma once

#include <cstdint>
#include <set>
#include <span>
#include <vector>
#include <string>

#include "nasrec/search_space.hpp"

// Slow, direct reference implementations used to check the library.
namespace nasrec::testing {

// Every distinct valid genotype of a small config, found by listing raw
// operator and connection lists (including invalid ones) and keeping what
// validate() accepts, deduplicated by canonical serialization.
std::set<std::string> brute_force_space(const SupernetConfig& cfg, DimConvention dims);

// Fraction of (positive, negative) pairs ranked correctly, ties one half.
double auc_pairwise(std::span<const double> scores, std::span<const float> labels);

// Mean binary cross-entropy in extended precision with the same clamp.
double logloss_reference(std::span<const double> probs, std::span<const float> labels);

// Textbook two-pass Pearson correlation in extended precision.
double pearson_reference(std::span<const double> x, std::span<const double> y);

// Tau-b from explicit concordant / discordant / tied pair counts.
double kendall_reference(std::span<const double> x, std::span<const double> y);

// Upper-tail p-value of Pearson's chi-square statistic for observed counts
// against category probabilities (degrees of freedom = categories - 1).
double chi_square_p(std::span<const double> counts, std::span<const double> probs);

}  // namespace nasrec::testing
