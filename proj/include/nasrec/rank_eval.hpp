#pragma once

#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nasrec/trainer.hpp"

namespace nasrec {

struct RankPair {
  std::string id;
  Genotype genotype;
  double shared = 0.0;   // shared-weight validation log loss
  double scratch = 0.0;  // from-scratch validation log loss
};

struct RankReport {
  std::vector<RankPair> pairs;
  double pearson_rho = 0.0;
  double kendall_tau = 0.0;
  // Subnets skipped because training or evaluation failed.
  std::vector<std::string> errors;
};

// Computes both coefficients over the pairs (log losses on both axes).
RankReport make_rank_report(std::vector<RankPair> pairs, std::vector<std::string> errors = {});

struct RankOptions {
  std::size_t n_subnets = 100;
  bool finetune = false;
  SamplingStrategy strategy = SamplingStrategy::kSingleOpAnyConn;
  std::uint64_t seed = 0;
  // Recipe of the ground-truth trainings.
  TrainConfig scratch;
};

// Shared-weight scores of each genotype, fine-tuned when requested.
std::vector<double> shared_scores(const TrainState& state, const std::vector<Genotype>& genotypes,
                                  bool finetune, const CtrDataset& train, const CtrDataset& val);

// From-scratch validation log loss of each genotype.
std::vector<double> scratch_scores(const std::vector<Genotype>& genotypes, const SupernetConfig& cfg,
                                   const TrainConfig& recipe, const CtrDataset& train,
                                   const CtrDataset& val);

// Samples n_subnets genotypes (or uses `genotypes` when given), scores them
// with the supernet and from scratch, and correlates the two.
RankReport ranking_experiment(const TrainState& state, const RankOptions& options,
                              const CtrDataset& train, const CtrDataset& val,
                              const std::vector<Genotype>& genotypes = {});

nlohmann::json to_json(const RankReport& r);
// Header `id,shared_logloss,scratch_logloss`, one row per pair.
void write_scatter_csv(std::ostream& os, const RankReport& r);

}  // namespace nasrec
