#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nasrec/checkpoint.hpp"
#include "nasrec/rank_eval.hpp"
#include "nasrec/run.hpp"

namespace fs = std::filesystem;

namespace nasrec {
namespace {

// Flags shared by the subcommands; unset values leave the config untouched.
struct CommonFlags {
  std::string config;
  std::string dataset;
  std::string genotype;
  std::string supernet;
  std::string out = "nasrec_out";
  std::optional<std::string> preset;
  std::optional<std::string> strategy;
  std::optional<double> warmup_frac;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> batch_size;
  std::optional<double> lr;
  std::optional<std::uint64_t> embedding_cap;
  std::optional<std::size_t> finetune_steps;
  std::optional<std::size_t> blocks;
  std::optional<std::size_t> embedding_dim;
  std::vector<std::size_t> dense_dims;
  std::vector<std::size_t> sparse_dims;
};

struct EvoFlags {
  std::optional<std::size_t> population, iters, tournament, children, init_mutations, decay_every, top_k;
  std::optional<std::string> mutation_mode;
};

// Writes JSON lines to stdout and to <out>/<name>.jsonl.
class JsonLines {
 public:
  JsonLines(const fs::path& dir, const std::string& name) {
    fs::create_directories(dir);
    file_.open(dir / (name + ".jsonl"));
    if (!file_) throw Error("cannot write " + (dir / (name + ".jsonl")).string());
  }

  void operator()(const nlohmann::json& j) {
    const auto line = j.dump();
    std::cout << line << '\n' << std::flush;
    file_ << line << '\n' << std::flush;
  }

 private:
  std::ofstream file_;
};

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path.string());
  os << j.dump(2) << '\n';
}

void add_common(CLI::App* app, CommonFlags& f, bool dataset, bool genotype) {
  app->add_option("--config", f.config, "run config JSON (supernet, train, evolution, split, tsv)");
  app->add_option("--out", f.out, "output directory");
  app->add_option("--preset", f.preset, "nasrec_small or nasrec_full");
  app->add_option("--seed", f.seed, "seed for training, evolution and the data split");
  app->add_option("--blocks", f.blocks, "number of choice blocks");
  app->add_option("--dense-dims", f.dense_dims, "dense dimension menu");
  app->add_option("--sparse-dims", f.sparse_dims, "sparse dimension menu");
  app->add_option("--embedding-dim", f.embedding_dim, "embedding dimension");
  if (dataset) {
    app->add_option("--dataset", f.dataset, "TSV file or dataset cache")->required();
    app->add_option("--strategy", f.strategy, "path sampling: sosc, aoac or soac");
    app->add_option("--warmup-frac", f.warmup_frac, "fraction of steps with supernet warm-up");
    app->add_option("--epochs", f.epochs);
    app->add_option("--batch-size", f.batch_size);
    app->add_option("--lr", f.lr, "base learning rate");
    app->add_option("--embedding-cap", f.embedding_cap, "rows per embedding table, 0 for full tables");
    app->add_option("--finetune-steps", f.finetune_steps, "head fine-tuning steps");
  }
  if (genotype) app->add_option("--genotype", f.genotype, "genotype JSON file or inline JSON")->required();
}

void add_supernet_flag(CLI::App* app, CommonFlags& f) {
  app->add_option("--supernet", f.supernet, "directory of a trained supernet (trained here when omitted)");
}

RunConfig resolve_config(const CommonFlags& f) {
  RunConfig rc = f.config.empty() ? RunConfig{} : load_run_config(f.config);
  auto& s = rc.supernet;
  if (f.preset) {
    const auto p = preset(*f.preset);
    s.dense_ops = p.dense_ops;
    s.sparse_ops = p.sparse_ops;
  }
  if (f.blocks) s.num_blocks = *f.blocks;
  if (!f.dense_dims.empty()) s.dense_dims = f.dense_dims;
  if (!f.sparse_dims.empty()) s.sparse_dims = f.sparse_dims;
  if (f.embedding_dim) s.features.embedding_dim = *f.embedding_dim;
  auto& t = rc.train;
  if (f.strategy) t.strategy = parse_sampling_strategy(*f.strategy);
  if (f.warmup_frac) t.warmup_fraction = *f.warmup_frac;
  if (f.epochs) t.epochs = *f.epochs;
  if (f.batch_size) t.batch_size = *f.batch_size;
  if (f.lr) t.base_lr = *f.lr;
  if (f.embedding_cap) t.embedding_cap = *f.embedding_cap;
  if (f.finetune_steps) t.finetune_steps = *f.finetune_steps;
  if (f.seed) {
    t.seed = *f.seed;
    rc.evolution.seed = *f.seed;
    rc.split.seed = *f.seed;
  }
  if (t.warmup_fraction < 0.0 || t.warmup_fraction > 1.0) throw Error("--warmup-frac must lie in [0, 1]");
  // Re-run the validators on the merged values.
  t = train_config_from_json(to_json(t));
  check_config(s);
  return rc;
}

void apply_evo_flags(const EvoFlags& e, EvoConfig& c) {
  if (e.population) c.population = *e.population;
  if (e.iters) c.iterations = *e.iters;
  if (e.tournament) c.tournament = *e.tournament;
  if (e.children) c.children = *e.children;
  if (e.init_mutations) c.initial_mutations = *e.init_mutations;
  if (e.decay_every) c.decay_every = *e.decay_every;
  if (e.top_k) c.top_k = *e.top_k;
  if (e.mutation_mode) c.mutation_mode = parse_mutation_mode(*e.mutation_mode);
  check_evo_config(c);
}

struct LoadedData {
  DataSplits splits;
  std::size_t rows = 0;
};

// Loads and splits the dataset and sizes the supernet's raw features from it.
LoadedData load_data(const CommonFlags& f, RunConfig& rc) {
  const auto ds = load_dataset(f.dataset, rc.tsv);
  rc.supernet.features = feature_spec(ds, rc.supernet.features.embedding_dim);
  return {split(ds, rc.split), ds.size()};
}

TrainState obtain_supernet(const CommonFlags& f, RunConfig& rc, const DataSplits& data, JsonLines& log) {
  if (!f.supernet.empty()) {
    auto state = load_supernet(f.supernet);
    if (state.cfg.features.num_dense != rc.supernet.features.num_dense ||
        state.cfg.features.vocab_sizes != rc.supernet.features.vocab_sizes) {
      throw Error("supernet in " + f.supernet + " was trained on different features");
    }
    // Fine-tuning follows this run's recipe.
    state.train = rc.train;
    rc.supernet = state.cfg;
    log({{"event", "supernet_loaded"}, {"dir", f.supernet}, {"step", state.step}});
    return state;
  }
  TrainState state(rc.supernet, rc.train);
  train_supernet(state, data.train, [&](const nlohmann::json& j) {
    if (j["event"] != "step" || j["step"].get<std::int64_t>() % 100 == 0) log(j);
  });
  save_supernet(fs::path(f.out) / "supernet", state);
  log({{"event", "supernet_saved"}, {"dir", (fs::path(f.out) / "supernet").string()}, {"step", state.step}});
  return state;
}

nlohmann::json eval_json(const std::string& split_name, const EvalResult& r) {
  auto j = to_json(r);
  j["split"] = split_name;
  return j;
}

int cmd_synth(const fs::path& out, const SynthSpec& spec, bool tsv) {
  const auto ds = synth_generate(spec);
  fs::create_directories(out);
  const auto path = out / (tsv ? "synth.tsv" : "synth.bin");
  if (tsv) {
    std::ofstream os(path);
    if (!os) throw Error("cannot write " + path.string());
    for (std::size_t r = 0; r < ds.size(); ++r) {
      os << static_cast<int>(ds.labels[r]);
      // Dense values are stored after log1p; write the raw counterpart.
      for (std::size_t j = 0; j < ds.num_dense; ++j) os << '\t' << std::expm1(ds.dense[r * ds.num_dense + j]);
      for (std::size_t k = 0; k < ds.num_sparse(); ++k) os << "\tt" << ds.ids[r * ds.num_sparse() + k];
      os << '\n';
    }
  } else {
    save_cache(path, ds);
  }
  const double ctr = std::accumulate(ds.labels.begin(), ds.labels.end(), 0.0) / ds.size();
  std::cout << nlohmann::json{{"event", "synth"},           {"path", path.string()},
                              {"rows", ds.size()},          {"num_dense", ds.num_dense},
                              {"num_sparse", ds.num_sparse()}, {"structure", to_string(spec.structure)},
                              {"label_rate", ctr},          {"bayes_logloss", bayes_logloss(ds)}}
                   .dump()
            << '\n';
  return 0;
}

int run(int argc, char** argv) {
  CLI::App app{"Weight-sharing architecture search for recommender models"};
  app.require_subcommand(1);
  CommonFlags f;
  EvoFlags e;

  auto* train_cmd = app.add_subcommand("train-supernet", "train the weight-sharing supernet");
  add_common(train_cmd, f, true, false);

  auto* evolve_cmd = app.add_subcommand("evolve", "regularized evolution over the supernet");
  add_common(evolve_cmd, f, true, false);
  add_supernet_flag(evolve_cmd, f);
  evolve_cmd->add_option("--population", e.population);
  evolve_cmd->add_option("--iters", e.iters);
  evolve_cmd->add_option("--tournament", e.tournament);
  evolve_cmd->add_option("--children", e.children);
  evolve_cmd->add_option("--init-mutations", e.init_mutations);
  evolve_cmd->add_option("--decay-every", e.decay_every);
  evolve_cmd->add_option("--top-k", e.top_k);
  evolve_cmd->add_option("--mutation-mode", e.mutation_mode, "sampled or sequence");

  auto* rank_cmd = app.add_subcommand("rank-eval", "correlate shared-weight and from-scratch scores");
  add_common(rank_cmd, f, true, false);
  add_supernet_flag(rank_cmd, f);
  std::size_t rank_n = 100;
  bool rank_finetune = false;
  rank_cmd->add_option("--n", rank_n, "number of sampled subnets");
  rank_cmd->add_flag("--finetune", rank_finetune, "fine-tune the head before scoring");

  auto* scratch_cmd = app.add_subcommand("train-scratch", "train one genotype from scratch");
  add_common(scratch_cmd, f, true, true);
  bool full_embeddings = false;
  scratch_cmd->add_flag("--full-embeddings", full_embeddings, "drop the embedding cap");

  auto* eval_cmd = app.add_subcommand("eval-subnet", "evaluate a genotype with shared weights");
  add_common(eval_cmd, f, true, true);
  add_supernet_flag(eval_cmd, f);

  auto* ft_cmd = app.add_subcommand("finetune", "fine-tune a subnet's head and evaluate it");
  add_common(ft_cmd, f, true, true);
  add_supernet_flag(ft_cmd, f);

  auto* flops_cmd = app.add_subcommand("flops", "FLOP and parameter audit of a genotype");
  add_common(flops_cmd, f, false, true);
  std::size_t flops_batch = 1;
  std::uint64_t flops_cap = 0;
  flops_cmd->add_option("--batch", flops_batch, "batch size of the FLOP count");
  flops_cmd->add_option("--embedding-cap", flops_cap, "rows per embedding table, 0 for full tables");

  auto* card_cmd = app.add_subcommand("cardinality", "size of the search space");
  add_common(card_cmd, f, false, false);

  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic click-through dataset");
  SynthSpec synth;
  std::string structure = "pairwise-interaction";
  bool synth_tsv = false;
  synth_cmd->add_option("--out", f.out, "output directory");
  synth_cmd->add_option("--rows", synth.rows);
  synth_cmd->add_option("--num-dense", synth.num_dense);
  synth_cmd->add_option("--num-sparse", synth.num_sparse);
  synth_cmd->add_option("--vocab", synth.vocab);
  synth_cmd->add_option("--structure", structure, "logistic-linear or pairwise-interaction");
  synth_cmd->add_option("--signal", synth.signal);
  synth_cmd->add_option("--seed", synth.seed);
  synth_cmd->add_flag("--tsv", synth_tsv, "write TSV instead of the binary cache");

  CLI11_PARSE(app, argc, argv);
  const fs::path out = f.out;

  if (synth_cmd->parsed()) {
    synth.structure = parse_planted_structure(structure);
    return cmd_synth(out, synth, synth_tsv);
  }

  RunConfig rc = resolve_config(f);

  if (card_cmd->parsed()) {
    nlohmann::json j = {{"event", "cardinality"}, {"num_blocks", rc.supernet.num_blocks}};
    for (auto conv : {DimConvention::kPerOperator, DimConvention::kPerBranch}) {
      j[to_string(conv)] = {{"count", cardinality(rc.supernet, conv).str()}, {"convention", describe(conv)}};
    }
    std::cout << j.dump() << '\n';
    return 0;
  }

  if (flops_cmd->parsed()) {
    const auto g = load_genotype(f.genotype);
    require_valid(g, rc.supernet);
    const auto pc = param_count(g, rc.supernet, flops_cap);
    const auto fl = flop_count(g, rc.supernet, flops_batch);
    nlohmann::json audit = nlohmann::json::array();
    for (std::size_t i = 0; i < pc.audit.size(); ++i) {
      audit.push_back({{"layer", pc.audit[i].layer},
                       {"weights", pc.audit[i].weights},
                       {"biases", pc.audit[i].biases},
                       {"embeddings", pc.audit[i].embeddings},
                       {"flops", fl.audit[i].flops}});
    }
    std::cout << nlohmann::json{{"event", "flops"},
                                {"batch", flops_batch},
                                {"flops", fl.total},
                                {"weights_with_bias", pc.weights_with_bias},
                                {"weights_without_bias", pc.weights_without_bias},
                                {"embedding_weights", pc.embedding_weights},
                                {"audit", audit}}
                     .dump()
              << '\n';
    return 0;
  }

  const auto data = load_data(f, rc);
  const auto& sp = data.splits;

  if (train_cmd->parsed()) {
    JsonLines log(out, "train_supernet");
    log({{"event", "config"}, {"config", to_json(rc)}, {"rows", data.rows}});
    TrainState state(rc.supernet, rc.train);
    train_supernet(state, sp.train, [&](const nlohmann::json& j) { log(j); });
    save_supernet(out / "supernet", state);
    log(eval_json("val", eval_subnet_shared(state, full_supernet_genotype(state.cfg), sp.val)));
    log({{"event", "supernet_saved"}, {"dir", (out / "supernet").string()}, {"step", state.step}});
    return 0;
  }

  if (scratch_cmd->parsed()) {
    JsonLines log(out, "train_scratch");
    const auto g = load_genotype(f.genotype);
    require_valid(g, rc.supernet);
    log({{"event", "config"}, {"config", to_json(rc)}, {"genotype", to_json(g)}});
    const auto r = train_from_scratch(g, rc.supernet, rc.train, sp.train, sp.test, full_embeddings,
                                      [&](const nlohmann::json& j) {
                                        if (j["step"].get<std::int64_t>() % 100 == 0) log(j);
                                      });
    log(eval_json("test", r));
    return 0;
  }

  if (eval_cmd->parsed() || ft_cmd->parsed()) {
    const bool finetune = ft_cmd->parsed();
    JsonLines log(out, finetune ? "finetune" : "eval_subnet");
    auto state = obtain_supernet(f, rc, sp, log);
    auto g = load_genotype(f.genotype);
    require_valid(g, state.cfg);
    if (finetune) {
      auto sub = finetuned_subnet(state, g, rc.train.finetune_steps, sp.train);
      save_checkpoint(out / "finetuned.ckpt", sub.params(), rc.train.finetune_steps);
      log(eval_json("val", evaluate(sub, sp.val, nullptr, rc.train.eval_batch_size)));
      log(eval_json("test", evaluate(sub, sp.test, nullptr, rc.train.eval_batch_size)));
    } else {
      log(eval_json("val", eval_subnet_shared(state, g, sp.val)));
      log(eval_json("test", eval_subnet_shared(state, g, sp.test)));
    }
    return 0;
  }

  if (evolve_cmd->parsed()) {
    apply_evo_flags(e, rc.evolution);
    JsonLines log(out, "evolve");
    log({{"event", "config"}, {"config", to_json(rc)}});
    auto state = obtain_supernet(f, rc, sp, log);
    const auto steps = rc.train.finetune_steps;
    const auto result = evolve(
        state.cfg, rc.evolution,
        [&](const Genotype& g) { return finetune_last_fc(state, g, steps, sp.train, sp.val).logloss; },
        [&](const nlohmann::json& j) { log(j); });
    std::ofstream top(out / "top.jsonl");
    for (const auto& ind : result.top) {
      top << nlohmann::json{{"fitness", ind.fitness}, {"birth_step", ind.birth_step},
                            {"genotype", to_json(ind.genotype)}}
                 .dump()
          << '\n';
    }
    write_json(out / "best_genotype.json", to_json(result.top.front().genotype));
    log({{"event", "best"}, {"fitness", result.top.front().fitness},
         {"genotype", to_json(result.top.front().genotype)}});
    return 0;
  }

  if (rank_cmd->parsed()) {
    JsonLines log(out, "rank_eval");
    log({{"event", "config"}, {"config", to_json(rc)}});
    auto state = obtain_supernet(f, rc, sp, log);
    RankOptions opt;
    opt.n_subnets = rank_n;
    opt.finetune = rank_finetune;
    opt.strategy = rc.train.strategy;
    opt.seed = rc.train.seed;
    opt.scratch = rc.train;
    const auto report = ranking_experiment(state, opt, sp.train, sp.val);
    write_json(out / "rank_report.json", to_json(report));
    std::ofstream csv(out / "rank_scatter.csv");
    write_scatter_csv(csv, report);
    log({{"event", "rank_report"},
         {"n", report.pairs.size()},
         {"pearson_rho", report.pearson_rho},
         {"kendall_tau", report.kendall_tau},
         {"finetune", rank_finetune},
         {"errors", report.errors}});
    return 0;
  }
  return 0;
}

}  // namespace
}  // namespace nasrec

int main(int argc, char** argv) {
  try {
    return nasrec::run(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "nasrec: " << e.what() << '\n';
    return 1;
  }
}
