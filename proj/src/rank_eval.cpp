#include "nasrec/rank_eval.hpp"

#include <iomanip>

#include "nasrec/metrics.hpp"

namespace nasrec {

RankReport make_rank_report(std::vector<RankPair> pairs, std::vector<std::string> errors) {
  if (pairs.empty()) throw Error("rank report needs at least one pair");
  RankReport r;
  std::vector<double> x, y;
  for (const auto& p : pairs) {
    x.push_back(p.shared);
    y.push_back(p.scratch);
  }
  r.pearson_rho = pearson_rho(x, y);
  r.kendall_tau = kendall_tau(x, y);
  r.pairs = std::move(pairs);
  r.errors = std::move(errors);
  return r;
}

std::vector<double> shared_scores(const TrainState& state, const std::vector<Genotype>& genotypes,
                                  bool finetune, const CtrDataset& train, const CtrDataset& val) {
  std::vector<double> out;
  for (const auto& g : genotypes) {
    out.push_back(finetune ? finetune_last_fc(state, g, state.train.finetune_steps, train, val).logloss
                           : eval_subnet_shared(state, g, val).logloss);
  }
  return out;
}

std::vector<double> scratch_scores(const std::vector<Genotype>& genotypes, const SupernetConfig& cfg,
                                   const TrainConfig& recipe, const CtrDataset& train,
                                   const CtrDataset& val) {
  std::vector<double> out;
  for (const auto& g : genotypes) out.push_back(train_from_scratch(g, cfg, recipe, train, val).logloss);
  return out;
}

RankReport ranking_experiment(const TrainState& state, const RankOptions& options,
                              const CtrDataset& train, const CtrDataset& val,
                              const std::vector<Genotype>& genotypes) {
  std::vector<Genotype> candidates = genotypes;
  if (candidates.empty()) {
    Rng rng(options.seed);
    for (std::size_t i = 0; i < options.n_subnets; ++i) {
      candidates.push_back(sample(options.strategy, state.cfg, rng));
    }
  }
  std::vector<RankPair> pairs;
  std::vector<std::string> errors;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const std::string id = "g" + std::to_string(i);
    try {
      const auto& g = candidates[i];
      const double shared = options.finetune
                                ? finetune_last_fc(state, g, state.train.finetune_steps, train, val).logloss
                                : eval_subnet_shared(state, g, val).logloss;
      const double scratch = train_from_scratch(g, state.cfg, options.scratch, train, val).logloss;
      pairs.push_back({id, g, shared, scratch});
    } catch (const std::exception& e) {
      errors.push_back(id + ": " + e.what());
    }
  }
  return make_rank_report(std::move(pairs), std::move(errors));
}

nlohmann::json to_json(const RankReport& r) {
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& p : r.pairs) {
    pairs.push_back({{"id", p.id},
                     {"genotype", to_json(p.genotype)},
                     {"shared_logloss", p.shared},
                     {"scratch_logloss", p.scratch}});
  }
  return {{"pearson_rho", r.pearson_rho},
          {"kendall_tau", r.kendall_tau},
          {"n", r.pairs.size()},
          {"pairs", pairs},
          {"errors", r.errors}};
}

void write_scatter_csv(std::ostream& os, const RankReport& r) {
  os << "id,shared_logloss,scratch_logloss\n" << std::setprecision(10);
  for (const auto& p : r.pairs) os << p.id << ',' << p.shared << ',' << p.scratch << '\n';
}

}  // namespace nasrec
