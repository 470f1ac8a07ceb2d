#pragma once

#include <cstdint>
#include <string_view>

#include "nasrec/random.hpp"
#include "nasrec/search_space.hpp"

namespace nasrec {

enum class SamplingStrategy {
  kSingleOpSingleConn,  // sosc
  kAnyOpAnyConn,        // aoac
  kSingleOpAnyConn,     // soac
};

const char* to_string(SamplingStrategy s);
SamplingStrategy parse_sampling_strategy(std::string_view name);

// Draws one subnet. Operator and connection subsets are uniform over the
// nonempty subsets (or singletons), dimensions are uniform over the menu and
// the Project-Concat flag is a fair coin when the config allows it.
Genotype sample(SamplingStrategy strategy, const SupernetConfig& cfg, Rng& rng);

struct WarmupSchedule {
  std::int64_t total_steps = 1;
  double warmup_fraction = 0.25;
};

// max(0, 1 - step / (warmup_fraction * total_steps)); 0 when the fraction is 0.
double warmup_p(const WarmupSchedule& sched, std::int64_t step);

// With probability warmup_p(step) the full supernet, otherwise sample().
Genotype sample_with_warmup(SamplingStrategy strategy, const WarmupSchedule& sched,
                            std::int64_t step, const SupernetConfig& cfg, Rng& rng);

}  // namespace nasrec
