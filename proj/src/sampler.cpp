#include "nasrec/sampler.hpp"

#include <string>

namespace nasrec {
namespace {

// Uniform nonempty subset of {0..n-1}: independent fair coins, empty draws
// rejected.
std::vector<std::size_t> nonempty_subset(std::size_t n, Rng& rng) {
  std::vector<std::size_t> out;
  while (out.empty()) {
    for (std::size_t i = 0; i < n; ++i) {
      if (coin_flip(rng)) out.push_back(i);
    }
  }
  return out;
}

std::vector<std::size_t> pick(std::size_t n, bool single, Rng& rng) {
  if (single) return {static_cast<std::size_t>(uniform_index(rng, n))};
  return nonempty_subset(n, rng);
}

}  // namespace

const char* to_string(SamplingStrategy s) {
  switch (s) {
    case SamplingStrategy::kSingleOpSingleConn: return "sosc";
    case SamplingStrategy::kAnyOpAnyConn: return "aoac";
    case SamplingStrategy::kSingleOpAnyConn: return "soac";
  }
  return "?";
}

SamplingStrategy parse_sampling_strategy(std::string_view name) {
  for (auto s : {SamplingStrategy::kSingleOpSingleConn, SamplingStrategy::kAnyOpAnyConn,
                 SamplingStrategy::kSingleOpAnyConn}) {
    if (name == to_string(s)) return s;
  }
  throw Error("unknown sampling strategy '" + std::string(name) + "' (expected sosc, aoac or soac)");
}

Genotype sample(SamplingStrategy strategy, const SupernetConfig& cfg, Rng& rng) {
  const bool single_op = strategy != SamplingStrategy::kAnyOpAnyConn;
  const bool single_conn = strategy == SamplingStrategy::kSingleOpSingleConn;
  Genotype g;
  for (std::size_t b = 1; b <= cfg.num_blocks; ++b) {
    BlockGenotype blk;
    for (auto i : pick(cfg.dense_ops.size(), single_op, rng)) {
      blk.dense_ops.push_back(
          {cfg.dense_ops[i], cfg.dense_dims[uniform_index(rng, cfg.dense_dims.size())]});
    }
    for (auto i : pick(cfg.sparse_ops.size(), single_op, rng)) {
      blk.sparse_ops.push_back(
          {cfg.sparse_ops[i], cfg.sparse_dims[uniform_index(rng, cfg.sparse_dims.size())]});
    }
    blk.dense_conns = pick(b, single_conn, rng);
    blk.sparse_conns = pick(b, single_conn, rng);
    blk.project_concat = cfg.allow_project_concat && coin_flip(rng);
    g.blocks.push_back(std::move(blk));
  }
  canonicalize(g);
  return g;
}

double warmup_p(const WarmupSchedule& sched, std::int64_t step) {
  if (step < 0) throw Error("warmup_p: negative step");
  const double span = sched.warmup_fraction * static_cast<double>(sched.total_steps);
  if (span <= 0.0) return 0.0;
  return std::max(0.0, 1.0 - static_cast<double>(step) / span);
}

Genotype sample_with_warmup(SamplingStrategy strategy, const WarmupSchedule& sched,
                            std::int64_t step, const SupernetConfig& cfg, Rng& rng) {
  const double p = warmup_p(sched, step);
  if (p > 0.0 && uniform_real(rng) < p) return full_supernet_genotype(cfg);
  return sample(strategy, cfg, rng);
}

}  // namespace nasrec
