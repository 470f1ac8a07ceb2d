#include "nasrec/evolution.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <map>

namespace nasrec {
namespace {

std::vector<std::size_t> nonempty_subset(std::size_t n, Rng& rng) {
  std::vector<std::size_t> out;
  while (out.empty()) {
    for (std::size_t i = 0; i < n; ++i) {
      if (coin_flip(rng)) out.push_back(i);
    }
  }
  return out;
}

void resample_dim(std::vector<OpChoice>& ops, const std::vector<std::size_t>& dims, Rng& rng) {
  auto& op = ops[uniform_index(rng, ops.size())];
  op.dim = dims[uniform_index(rng, dims.size())];
}

void resample_op(std::vector<OpChoice>& ops, const std::vector<OperatorKind>& menu,
                 const std::vector<std::size_t>& dims, Rng& rng) {
  const std::size_t i = uniform_index(rng, ops.size());
  std::vector<OperatorKind> options;
  for (auto k : menu) {
    const bool taken = std::any_of(ops.begin(), ops.end(), [&](const OpChoice& o) { return o.kind == k; });
    if (!taken || k == ops[i].kind) options.push_back(k);
  }
  ops[i] = {options[uniform_index(rng, options.size())], dims[uniform_index(rng, dims.size())]};
}

constexpr MutationAction kActions[kNumMutationActions] = {
    MutationAction::kDenseDim,    MutationAction::kSparseDim,   MutationAction::kDenseOp,
    MutationAction::kSparseOp,    MutationAction::kConnections, MutationAction::kProjectConcat};

nlohmann::json individual_json(const Individual& ind) {
  return {{"genotype", to_json(ind.genotype)}, {"fitness", ind.fitness}, {"birth_step", ind.birth_step}};
}

}  // namespace

const char* to_string(MutationMode m) { return m == MutationMode::kSampled ? "sampled" : "sequence"; }

MutationMode parse_mutation_mode(std::string_view name) {
  if (name == "sampled") return MutationMode::kSampled;
  if (name == "sequence") return MutationMode::kSequence;
  throw Error("unknown mutation mode '" + std::string(name) + "' (expected sampled or sequence)");
}

void check_evo_config(const EvoConfig& c) {
  if (c.population == 0 || c.tournament == 0 || c.children == 0) {
    throw Error("evolution config: population, tournament and children must be positive");
  }
  if (c.tournament > c.population) throw Error("evolution config: tournament exceeds population");
  if (c.initial_mutations < 1) throw Error("evolution config: initial_mutations must be >= 1");
  if (c.decay_every < 1) throw Error("evolution config: decay_every must be >= 1");
}

nlohmann::json to_json(const EvoConfig& c) {
  return {{"population", c.population},       {"iterations", c.iterations},
          {"tournament", c.tournament},       {"children", c.children},
          {"initial_mutations", c.initial_mutations}, {"decay_every", c.decay_every},
          {"top_k", c.top_k},                 {"mutation_mode", to_string(c.mutation_mode)},
          {"init_strategy", to_string(c.init_strategy)}, {"seed", c.seed}};
}

EvoConfig evo_config_from_json(const nlohmann::json& j) {
  try {
    EvoConfig c;
    c.population = j.value("population", c.population);
    c.iterations = j.value("iterations", c.iterations);
    c.tournament = j.value("tournament", c.tournament);
    c.children = j.value("children", c.children);
    c.initial_mutations = j.value("initial_mutations", c.initial_mutations);
    c.decay_every = j.value("decay_every", c.decay_every);
    c.top_k = j.value("top_k", c.top_k);
    if (j.contains("mutation_mode")) {
      c.mutation_mode = parse_mutation_mode(j["mutation_mode"].get<std::string>());
    }
    if (j.contains("init_strategy")) {
      c.init_strategy = parse_sampling_strategy(j["init_strategy"].get<std::string>());
    }
    c.seed = j.value("seed", c.seed);
    check_evo_config(c);
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed evolution config: ") + e.what());
  }
}

const char* to_string(MutationAction a) {
  switch (a) {
    case MutationAction::kDenseDim: return "dense_dim";
    case MutationAction::kSparseDim: return "sparse_dim";
    case MutationAction::kDenseOp: return "dense_op";
    case MutationAction::kSparseOp: return "sparse_op";
    case MutationAction::kConnections: return "connections";
    case MutationAction::kProjectConcat: return "project_concat";
  }
  return "?";
}

Genotype apply_mutation(const Genotype& g, const SupernetConfig& cfg, MutationAction action,
                        std::size_t block, Rng& rng) {
  if (block < 1 || block > g.blocks.size()) throw Error("apply_mutation: block out of range");
  Genotype out = g;
  auto& blk = out.blocks[block - 1];
  switch (action) {
    case MutationAction::kDenseDim:
      resample_dim(blk.dense_ops, cfg.dense_dims, rng);
      break;
    case MutationAction::kSparseDim:
      resample_dim(blk.sparse_ops, cfg.sparse_dims, rng);
      break;
    case MutationAction::kDenseOp:
      resample_op(blk.dense_ops, cfg.dense_ops, cfg.dense_dims, rng);
      break;
    case MutationAction::kSparseOp:
      resample_op(blk.sparse_ops, cfg.sparse_ops, cfg.sparse_dims, rng);
      break;
    case MutationAction::kConnections:
      blk.dense_conns = nonempty_subset(block, rng);
      blk.sparse_conns = nonempty_subset(block, rng);
      break;
    case MutationAction::kProjectConcat:
      blk.project_concat = cfg.allow_project_concat && coin_flip(rng);
      break;
  }
  canonicalize(out);
  require_valid(out, cfg);
  return out;
}

Mutation mutate_once(const Genotype& g, const SupernetConfig& cfg, Rng& rng) {
  Mutation m;
  m.action = kActions[uniform_index(rng, kNumMutationActions)];
  m.block = 1 + uniform_index(rng, g.blocks.size());
  m.genotype = apply_mutation(g, cfg, m.action, m.block, rng);
  return m;
}

Mutation mutate_sequence(const Genotype& g, const SupernetConfig& cfg, Rng& rng) {
  Mutation m;
  m.block = 1 + uniform_index(rng, g.blocks.size());
  m.action = MutationAction::kProjectConcat;
  m.genotype = g;
  for (auto a : kActions) m.genotype = apply_mutation(m.genotype, cfg, a, m.block, rng);
  return m;
}

std::size_t mutations_per_child(std::size_t iter, const EvoConfig& cfg) {
  const std::size_t decay = iter / cfg.decay_every;
  return decay >= cfg.initial_mutations ? 1 : std::max<std::size_t>(1, cfg.initial_mutations - decay);
}

nlohmann::json to_json(const IterationRecord& r) {
  nlohmann::json children = nlohmann::json::array();
  nlohmann::json fitnesses = nlohmann::json::array();
  for (const auto& c : r.children) {
    children.push_back(to_json(c.genotype));
    fitnesses.push_back(c.fitness);
  }
  return {{"iter", r.iter},           {"parent", individual_json(r.parent)},
          {"children", children},     {"fitnesses", fitnesses},
          {"best", r.best}};
}

EvolutionResult evolve(const SupernetConfig& cfg, const EvoConfig& evo, const Evaluator& evaluate,
                       const EvolutionLog& log) {
  check_config(cfg);
  check_evo_config(evo);
  Rng rng(evo.seed);
  EvolutionResult result;
  std::deque<Individual> population;
  std::size_t birth = 0;
  double best = std::numeric_limits<double>::infinity();

  auto try_evaluate = [&](const Genotype& g, Individual& out) {
    try {
      const double f = evaluate(g);
      if (!std::isfinite(f)) throw Error("non-finite fitness");
      out = {g, f, birth++};
      return true;
    } catch (const std::exception& e) {
      if (log) log({{"event", "discarded"}, {"genotype", to_json(g)}, {"reason", e.what()}});
      return false;
    }
  };

  std::size_t failures = 0;
  while (population.size() < evo.population) {
    Individual ind;
    if (!try_evaluate(sample(evo.init_strategy, cfg, rng), ind)) {
      if (++failures > 10 * evo.population) throw Error("evolve: evaluator keeps failing");
      continue;
    }
    best = std::min(best, ind.fitness);
    population.push_back(ind);
    result.history.push_back(ind);
  }

  std::vector<std::size_t> idx(population.size());
  for (std::size_t iter = 0; iter < evo.iterations; ++iter) {
    // Tournament: distinct members drawn uniformly, best one wins.
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    const Individual* parent = nullptr;
    for (std::size_t t = 0; t < evo.tournament; ++t) {
      std::swap(idx[t], idx[t + uniform_index(rng, idx.size() - t)]);
      const Individual& cand = population[idx[t]];
      if (!parent || cand.fitness < parent->fitness ||
          (cand.fitness == parent->fitness && cand.birth_step < parent->birth_step)) {
        parent = &cand;
      }
    }
    IterationRecord rec;
    rec.iter = iter;
    rec.parent = *parent;

    const std::size_t n_mut = mutations_per_child(iter, evo);
    std::vector<Genotype> kids;
    for (std::size_t c = 0; c < evo.children; ++c) {
      Genotype child = rec.parent.genotype;
      for (std::size_t m = 0; m < n_mut; ++m) {
        child = evo.mutation_mode == MutationMode::kSampled ? mutate_once(child, cfg, rng).genotype
                                                            : mutate_sequence(child, cfg, rng).genotype;
      }
      kids.push_back(std::move(child));
    }
    // Children are inserted in index order; each pushes out the oldest member.
    for (const auto& child : kids) {
      Individual ind;
      if (!try_evaluate(child, ind)) continue;
      best = std::min(best, ind.fitness);
      rec.children.push_back(ind);
      result.history.push_back(ind);
      population.push_back(ind);
      population.pop_front();
    }
    rec.best = best;
    if (log) log(to_json(rec));
    result.iterations.push_back(std::move(rec));
  }

  result.population.assign(population.begin(), population.end());
  std::map<std::string, Individual> distinct;
  for (const auto& ind : result.history) {
    auto key = serialize(ind.genotype);
    auto it = distinct.find(key);
    if (it == distinct.end() || ind.fitness < it->second.fitness) distinct[key] = ind;
  }
  for (auto& [key, ind] : distinct) result.top.push_back(ind);
  std::stable_sort(result.top.begin(), result.top.end(),
                   [](const Individual& a, const Individual& b) { return a.fitness < b.fitness; });
  if (result.top.size() > evo.top_k) result.top.resize(evo.top_k);
  return result;
}

}  // namespace nasrec
