#include "nasrec/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "nasrec/error.hpp"

namespace nasrec {
namespace {

void check_lengths(const char* what, std::size_t a, std::size_t b) {
  if (a != b) {
    throw Error(std::string(what) + ": length mismatch (" + std::to_string(a) + " vs " +
                std::to_string(b) + ")");
  }
}

}  // namespace

double metric_logloss(std::span<const double> probs, std::span<const float> labels) {
  check_lengths("metric_logloss", probs.size(), labels.size());
  if (probs.empty()) throw Error("metric_logloss: empty input");
  double total = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = std::clamp(probs[i], kLoglossClamp, 1.0 - kLoglossClamp);
    total -= labels[i] > 0.5f ? std::log(p) : std::log1p(-p);
  }
  return total / static_cast<double>(probs.size());
}

double metric_auc(std::span<const double> scores, std::span<const float> labels) {
  check_lengths("metric_auc", scores.size(), labels.size());
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Sum of positive ranks, ties given their average rank.
  double rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t) {
      if (labels[order[t]] > 0.5f) {
        rank_sum += avg_rank;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw Error("metric_auc: both classes must be present");
  const double np = static_cast<double>(n_pos);
  const double u = rank_sum - np * (np + 1.0) / 2.0;
  return u / (np * static_cast<double>(n_neg));
}

double pearson_rho(std::span<const double> x, std::span<const double> y) {
  check_lengths("pearson_rho", x.size(), y.size());
  const std::size_t n = x.size();
  if (n < 2) throw Error("pearson_rho: need at least 2 points");
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw Error("pearson_rho: zero variance");
  return sxy / std::sqrt(sxx * syy);
}

double kendall_tau(std::span<const double> x, std::span<const double> y) {
  check_lengths("kendall_tau", x.size(), y.size());
  const std::size_t n = x.size();
  if (n < 2) throw Error("kendall_tau: need at least 2 points");
  // O(n^2) pair count; ranking experiments hold at most a few hundred points.
  long long concordant = 0, discordant = 0, tied_x = 0, tied_y = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double dx = x[i] - x[j];
      const double dy = y[i] - y[j];
      if (dx == 0.0 && dy == 0.0) continue;
      if (dx == 0.0) {
        ++tied_x;
      } else if (dy == 0.0) {
        ++tied_y;
      } else if ((dx > 0) == (dy > 0)) {
        ++concordant;
      } else {
        ++discordant;
      }
    }
  }
  const double n1 = static_cast<double>(concordant + discordant + tied_y);  // pairs untied in x
  const double n2 = static_cast<double>(concordant + discordant + tied_x);  // pairs untied in y
  if (n1 == 0.0 || n2 == 0.0) throw Error("kendall_tau: all values tied");
  return static_cast<double>(concordant - discordant) / std::sqrt(n1 * n2);
}

}  // namespace nasrec
