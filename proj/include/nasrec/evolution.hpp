#pragma once

#include <cstdint>
#include <functional>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "nasrec/sampler.hpp"

namespace nasrec {

enum class MutationMode {
  kSampled,   // each mutation applies one uniformly drawn action
  kSequence,  // each mutation applies all six actions in order to one block
};

const char* to_string(MutationMode m);
MutationMode parse_mutation_mode(std::string_view name);

struct EvoConfig {
  std::size_t population = 64;
  std::size_t iterations = 100;
  std::size_t tournament = 32;
  std::size_t children = 16;
  std::size_t initial_mutations = 5;
  std::size_t decay_every = 20;
  std::size_t top_k = 15;
  MutationMode mutation_mode = MutationMode::kSampled;
  SamplingStrategy init_strategy = SamplingStrategy::kSingleOpAnyConn;
  std::uint64_t seed = 0;
};

void check_evo_config(const EvoConfig& c);
nlohmann::json to_json(const EvoConfig& c);
EvoConfig evo_config_from_json(const nlohmann::json& j);

enum class MutationAction {
  kDenseDim,
  kSparseDim,
  kDenseOp,
  kSparseOp,
  kConnections,
  kProjectConcat,
};

inline constexpr std::size_t kNumMutationActions = 6;
const char* to_string(MutationAction a);

struct Mutation {
  Genotype genotype;
  MutationAction action = MutationAction::kDenseDim;
  std::size_t block = 0;  // 1-based
};

// Re-samples one field of one uniformly chosen block:
//  dense/sparse dim: the dimension of one operator of that branch;
//  dense/sparse op: one operator of that branch becomes a kind not already
//    in the branch (or stays), with a fresh dimension;
//  connections: both connection subsets;
//  project-concat: the flag (stays off when the config disables it).
Mutation mutate_once(const Genotype& g, const SupernetConfig& cfg, Rng& rng);
// Applies `action` to block `block` (1-based).
Genotype apply_mutation(const Genotype& g, const SupernetConfig& cfg, MutationAction action,
                        std::size_t block, Rng& rng);
// All six actions in order on one uniformly chosen block.
Mutation mutate_sequence(const Genotype& g, const SupernetConfig& cfg, Rng& rng);

// max(1, initial_mutations - floor(iter / decay_every))
std::size_t mutations_per_child(std::size_t iter, const EvoConfig& cfg);

struct Individual {
  Genotype genotype;
  double fitness = 0.0;  // lower is better
  std::size_t birth_step = 0;
};

struct IterationRecord {
  std::size_t iter = 0;
  Individual parent;
  std::vector<Individual> children;
  double best = 0.0;  // best fitness seen so far
};

struct EvolutionResult {
  std::vector<Individual> population;  // oldest first
  std::vector<Individual> history;     // every evaluated individual, by birth
  std::vector<IterationRecord> iterations;
  std::vector<Individual> top;         // best distinct genotypes, ascending fitness
};

using Evaluator = std::function<double(const Genotype&)>;
using EvolutionLog = std::function<void(const nlohmann::json&)>;

// Regularized evolution: tournament selection, aging removal. A child whose
// evaluation throws is discarded and logged.
EvolutionResult evolve(const SupernetConfig& cfg, const EvoConfig& evo, const Evaluator& evaluate,
                       const EvolutionLog& log = {});

nlohmann::json to_json(const IterationRecord& r);

}  // namespace nasrec
