#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include <nlohmann/json.hpp>

#include "nasrec/data.hpp"
#include "nasrec/network.hpp"
#include "nasrec/optim.hpp"
#include "nasrec/sampler.hpp"

namespace nasrec {

struct TrainConfig {
  std::size_t epochs = 1;
  std::size_t batch_size = 256;
  double base_lr = kDefaultBaseLr;
  std::uint64_t embedding_cap = 500000;  // 0 keeps full tables
  SamplingStrategy strategy = SamplingStrategy::kSingleOpAnyConn;
  double warmup_fraction = 0.25;
  std::uint64_t seed = 0;
  std::size_t finetune_steps = 500;
  std::size_t eval_batch_size = 1024;
};

nlohmann::json to_json(const TrainConfig& c);
// Missing keys keep their defaults.
TrainConfig train_config_from_json(const nlohmann::json& j);

struct EvalResult {
  double logloss = 0.0;
  double auc = 0.0;  // NaN when the split holds a single class
  std::size_t n_examples = 0;
};

nlohmann::json to_json(const EvalResult& r);

// Receives one JSON object per logged event (step, epoch, ...).
using LogSink = std::function<void(const nlohmann::json&)>;

struct TrainState {
  SupernetConfig cfg;
  TrainConfig train;
  Network<float> net;
  std::int64_t step = 0;
  std::vector<double> losses;  // one per optimizer step

  TrainState(const SupernetConfig& c, const TrainConfig& t)
      : cfg(c), train(t), net(c, t.seed, t.embedding_cap) {}
};

// Steps per epoch for a dataset of n rows.
std::int64_t steps_per_epoch(std::size_t n, std::size_t batch_size);

// Weight-sharing training: each mini-batch trains one sampled subnet of the
// supernet (full supernet with the warm-up probability), Adagrad with a
// cosine learning rate. Throws on a non-finite loss.
void train_supernet(TrainState& state, const CtrDataset& train, const LogSink& log = {});

// Forward-only metrics of a network over a dataset. For a supernet `g`
// selects the subnet; standalone networks ignore it.
EvalResult evaluate(Network<float>& net, const CtrDataset& data, const Genotype* g = nullptr,
                    std::size_t batch_size = 1024);

// Metrics of `g` with the shared supernet weights; leaves the state untouched.
EvalResult eval_subnet_shared(const TrainState& state, const Genotype& g, const CtrDataset& data);

// Copies the shared weights of `g`, retrains only the final FC for `steps`
// mini-batches of `train` (fresh Adagrad slots, constant base_lr) and
// evaluates on `eval`. The state is untouched.
EvalResult finetune_last_fc(const TrainState& state, const Genotype& g, std::size_t steps,
                            const CtrDataset& train, const CtrDataset& eval);

// Same, returning the fine-tuned standalone network.
Network<float> finetuned_subnet(const TrainState& state, const Genotype& g, std::size_t steps,
                                const CtrDataset& train);

// Trains a freshly initialized standalone subnet with the supernet recipe.
// full_embeddings drops the embedding cap.
EvalResult train_from_scratch(const Genotype& g, const SupernetConfig& cfg, const TrainConfig& tc,
                              const CtrDataset& train, const CtrDataset& eval,
                              bool full_embeddings = false, const LogSink& log = {});

struct ScoredGenotype {
  Genotype genotype;
  EvalResult eval;
};

// Ranks candidates by fine-tuned shared-weight log loss (ascending, ties by
// serialized genotype) and keeps the best k.
std::vector<ScoredGenotype> select_topk(const TrainState& state, const std::vector<Genotype>& candidates,
                                        std::size_t k, const CtrDataset& train,
                                        const CtrDataset& val, const LogSink& log = {});

}  // namespace nasrec
