#include "nasrec/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "nasrec/metrics.hpp"

namespace nasrec {
namespace {

// Derived seeds for the independent random streams of one run.
enum Stream : std::uint64_t { kBatchOrder = 1, kSampling = 2, kFinetune = 3 };

std::uint64_t stream_seed(std::uint64_t seed, Stream s) { return splitmix64(seed * 4 + s); }

// Seeded reshuffled mini-batches that wrap around epochs.
class BatchStream {
 public:
  BatchStream(const CtrDataset& ds, std::size_t batch_size, std::uint64_t seed)
      : ds_(ds), batch_size_(batch_size), rng_(seed), perm_(ds.size()) {
    if (ds.size() == 0) throw Error("training data is empty");
    if (batch_size == 0) throw Error("batch_size must be positive");
    std::iota(perm_.begin(), perm_.end(), std::size_t{0});
    shuffle(perm_, rng_);
  }

  Batch next() {
    if (pos_ >= perm_.size()) {
      shuffle(perm_, rng_);
      pos_ = 0;
    }
    const std::size_t n = std::min(batch_size_, perm_.size() - pos_);
    const std::size_t fd = ds_.num_dense, fc = ds_.num_sparse();
    dense_.resize(n * fd);
    ids_.resize(n * fc);
    labels_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t r = perm_[pos_ + i];
      std::copy_n(ds_.dense.begin() + r * fd, fd, dense_.begin() + i * fd);
      std::copy_n(ds_.ids.begin() + r * fc, fc, ids_.begin() + i * fc);
      labels_[i] = ds_.labels[r];
    }
    pos_ += n;
    return {n, dense_, ids_, labels_};
  }

 private:
  const CtrDataset& ds_;
  std::size_t batch_size_;
  Rng rng_;
  std::vector<std::size_t> perm_;
  std::size_t pos_ = 0;
  std::vector<float> dense_;
  std::vector<std::uint32_t> ids_;
  std::vector<float> labels_;
};

void check_features(const SupernetConfig& cfg, const CtrDataset& ds) {
  if (cfg.features.num_dense != ds.num_dense || cfg.features.vocab_sizes != ds.vocab_sizes) {
    throw Error("dataset features do not match the supernet config");
  }
}

// One optimizer step on a mini-batch; returns the loss.
double train_step(Network<float>& net, const Batch& batch, const Genotype* g, const Adagrad<float>& opt,
                  double lr) {
  Graph<float> graph(true);
  const NodeId logits = g ? net.forward(graph, batch, *g) : net.forward(graph, batch);
  const NodeId loss = bce_with_logits(graph, logits, batch.labels);
  const double value = graph.value(loss)[0];
  if (!std::isfinite(value)) return value;
  graph.backward(loss);
  opt.step(net.params(), lr);
  return value;
}

}  // namespace

nlohmann::json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"base_lr", c.base_lr},
          {"embedding_cap", c.embedding_cap},
          {"strategy", to_string(c.strategy)},
          {"warmup_fraction", c.warmup_fraction},
          {"seed", c.seed},
          {"finetune_steps", c.finetune_steps},
          {"eval_batch_size", c.eval_batch_size}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  try {
    TrainConfig c;
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.base_lr = j.value("base_lr", c.base_lr);
    c.embedding_cap = j.value("embedding_cap", c.embedding_cap);
    if (j.contains("strategy")) c.strategy = parse_sampling_strategy(j["strategy"].get<std::string>());
    c.warmup_fraction = j.value("warmup_fraction", c.warmup_fraction);
    c.seed = j.value("seed", c.seed);
    c.finetune_steps = j.value("finetune_steps", c.finetune_steps);
    c.eval_batch_size = j.value("eval_batch_size", c.eval_batch_size);
    if (c.epochs == 0 || c.batch_size == 0 || c.eval_batch_size == 0) {
      throw Error("epochs and batch sizes must be positive");
    }
    if (c.warmup_fraction < 0.0 || c.warmup_fraction > 1.0) {
      throw Error("warmup_fraction must lie in [0, 1]");
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed train config: ") + e.what());
  }
}

nlohmann::json to_json(const EvalResult& r) {
  nlohmann::json j = {{"logloss", r.logloss}, {"n_examples", r.n_examples}};
  j["auc"] = std::isnan(r.auc) ? nlohmann::json(nullptr) : nlohmann::json(r.auc);
  return j;
}

std::int64_t steps_per_epoch(std::size_t n, std::size_t batch_size) {
  return static_cast<std::int64_t>((n + batch_size - 1) / batch_size);
}

void train_supernet(TrainState& state, const CtrDataset& train, const LogSink& log) {
  check_features(state.cfg, train);
  const auto& tc = state.train;
  const std::int64_t total = steps_per_epoch(train.size(), tc.batch_size) *
                             static_cast<std::int64_t>(tc.epochs);
  const LrSchedule sched{tc.base_lr, total};
  const WarmupSchedule warmup{total, tc.warmup_fraction};
  const Adagrad<float> opt(tc.base_lr);
  BatchStream stream(train, tc.batch_size, stream_seed(tc.seed, kBatchOrder));
  Rng rng(stream_seed(tc.seed, kSampling));
  const std::int64_t per_epoch = steps_per_epoch(train.size(), tc.batch_size);
  double epoch_loss = 0.0;
  for (std::int64_t step = 0; step < total; ++step) {
    const Genotype g = sample_with_warmup(tc.strategy, warmup, step, state.cfg, rng);
    const Batch batch = stream.next();
    const double lr = cosine_lr(sched, step);
    const double loss = train_step(state.net, batch, &g, opt, lr);
    if (!std::isfinite(loss)) {
      throw Error("non-finite loss at batch " + std::to_string(step) + " with genotype " +
                  serialize(g));
    }
    state.losses.push_back(loss);
    state.step = step + 1;
    epoch_loss += loss;
    if (log) {
      log({{"event", "step"}, {"step", step}, {"loss", loss}, {"lr", lr},
           {"warmup_p", warmup_p(warmup, step)}});
    }
    if ((step + 1) % per_epoch == 0) {
      if (log) {
        log({{"event", "epoch"}, {"epoch", (step + 1) / per_epoch},
             {"mean_loss", epoch_loss / static_cast<double>(per_epoch)}});
      }
      epoch_loss = 0.0;
    }
  }
}

EvalResult evaluate(Network<float>& net, const CtrDataset& data, const Genotype* g,
                    std::size_t batch_size) {
  check_features(net.config(), data);
  if (data.size() == 0) throw Error("evaluate: empty dataset");
  std::vector<double> probs;
  probs.reserve(data.size());
  for (std::size_t begin = 0; begin < data.size(); begin += batch_size) {
    const std::size_t end = std::min(data.size(), begin + batch_size);
    Graph<float> graph(false);
    const Batch batch = data.batch(begin, end);
    const NodeId logits = net.is_standalone() || !g ? net.forward(graph, batch)
                                                    : net.forward(graph, batch, *g);
    for (float z : graph.value(logits).data()) probs.push_back(1.0 / (1.0 + std::exp(-double(z))));
  }
  EvalResult r;
  r.n_examples = data.size();
  r.logloss = metric_logloss(probs, data.labels);
  const auto pos = std::count(data.labels.begin(), data.labels.end(), 1.0f);
  r.auc = pos == 0 || static_cast<std::size_t>(pos) == data.size()
              ? std::numeric_limits<double>::quiet_NaN()
              : metric_auc(probs, data.labels);
  return r;
}

EvalResult eval_subnet_shared(const TrainState& state, const Genotype& g, const CtrDataset& data) {
  auto sub = state.net.extract_subnet(g);
  return evaluate(sub, data, nullptr, state.train.eval_batch_size);
}

Network<float> finetuned_subnet(const TrainState& state, const Genotype& g, std::size_t steps,
                                const CtrDataset& train) {
  auto sub = state.net.extract_subnet(g);
  if (steps == 0) return sub;
  check_features(state.cfg, train);
  sub.params().set_trainable([](const Parameter<float>& p) { return Network<float>::is_head(p); });
  const Adagrad<float> opt(state.train.base_lr);
  BatchStream stream(train, state.train.batch_size, stream_seed(state.train.seed, kFinetune));
  for (std::size_t step = 0; step < steps; ++step) {
    const Batch batch = stream.next();
    const double loss = train_step(sub, batch, nullptr, opt, state.train.base_lr);
    if (!std::isfinite(loss)) {
      throw Error("non-finite loss at fine-tuning batch " + std::to_string(step) +
                  " with genotype " + serialize(g));
    }
  }
  return sub;
}

EvalResult finetune_last_fc(const TrainState& state, const Genotype& g, std::size_t steps,
                            const CtrDataset& train, const CtrDataset& eval) {
  auto sub = finetuned_subnet(state, g, steps, train);
  return evaluate(sub, eval, nullptr, state.train.eval_batch_size);
}

EvalResult train_from_scratch(const Genotype& g, const SupernetConfig& cfg, const TrainConfig& tc,
                              const CtrDataset& train, const CtrDataset& eval,
                              bool full_embeddings, const LogSink& log) {
  check_features(cfg, train);
  // Initialize through a supernet so a subnet starts from the same
  // distribution whether it is trained alone or inside the supernet.
  auto net = Network<float>(cfg, tc.seed, full_embeddings ? 0 : tc.embedding_cap).extract_subnet(g);
  const std::int64_t total = steps_per_epoch(train.size(), tc.batch_size) *
                             static_cast<std::int64_t>(tc.epochs);
  const LrSchedule sched{tc.base_lr, total};
  const Adagrad<float> opt(tc.base_lr);
  BatchStream stream(train, tc.batch_size, stream_seed(tc.seed, kBatchOrder));
  for (std::int64_t step = 0; step < total; ++step) {
    const double lr = cosine_lr(sched, step);
    const double loss = train_step(net, stream.next(), nullptr, opt, lr);
    if (!std::isfinite(loss)) {
      throw Error("non-finite loss at batch " + std::to_string(step) + " with genotype " +
                  serialize(g));
    }
    if (log) log({{"event", "step"}, {"step", step}, {"loss", loss}, {"lr", lr}});
  }
  return evaluate(net, eval, nullptr, tc.eval_batch_size);
}

std::vector<ScoredGenotype> select_topk(const TrainState& state, const std::vector<Genotype>& candidates,
                                        std::size_t k, const CtrDataset& train,
                                        const CtrDataset& val, const LogSink& log) {
  if (k > candidates.size() && log) {
    log({{"event", "warning"},
         {"message", "k=" + std::to_string(k) + " exceeds the " +
                         std::to_string(candidates.size()) + " candidates; returning all"}});
  }
  std::vector<std::pair<std::string, ScoredGenotype>> scored;
  for (const auto& g : candidates) {
    Genotype c = g;
    canonicalize(c);
    const auto r = finetune_last_fc(state, c, state.train.finetune_steps, train, val);
    scored.push_back({serialize(c), {c, r}});
  }
  std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.second.eval.logloss != b.second.eval.logloss) {
      return a.second.eval.logloss < b.second.eval.logloss;
    }
    return a.first < b.first;
  });
  std::vector<ScoredGenotype> out;
  for (std::size_t i = 0; i < std::min(k, scored.size()); ++i) out.push_back(std::move(scored[i].second));
  return out;
}

}  // namespace nasrec
