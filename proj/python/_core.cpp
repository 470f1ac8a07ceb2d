#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "nasrec/metrics.hpp"
#include "nasrec/rank_eval.hpp"
#include "nasrec/run.hpp"

namespace py = pybind11;
using nlohmann::json;

namespace nasrec {
namespace {

// Configs and genotypes cross the boundary as JSON text; the Python wrapper
// converts them to and from dicts.
SupernetConfig config_of(const std::string& text) { return supernet_config_from_json(json::parse(text)); }

std::string config_json(const std::string& preset_name) { return to_json(preset(preset_name)).dump(); }

std::string cardinality_json(const std::string& cfg_text) {
  const auto cfg = config_of(cfg_text);
  return json{{"per_operator", cardinality(cfg, DimConvention::kPerOperator).str()},
              {"per_branch", cardinality(cfg, DimConvention::kPerBranch).str()}}
      .dump();
}

std::vector<std::string> sample_json(const std::string& cfg_text, const std::string& strategy, std::size_t n,
                                     std::uint64_t seed) {
  const auto cfg = config_of(cfg_text);
  const auto s = parse_sampling_strategy(strategy);
  Rng rng(seed);
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(serialize(sample(s, cfg, rng)));
  return out;
}

std::vector<std::string> violations(const std::string& genotype_text, const std::string& cfg_text) {
  std::vector<std::string> out;
  for (const auto& v : validate(parse_genotype(genotype_text), config_of(cfg_text))) {
    out.push_back("block " + std::to_string(v.block) + " " + v.rule + ": " + v.detail);
  }
  return out;
}

std::string cost_json(const std::string& genotype_text, const std::string& cfg_text, std::size_t batch,
                      std::uint64_t embedding_cap) {
  const auto g = parse_genotype(genotype_text);
  const auto cfg = config_of(cfg_text);
  require_valid(g, cfg);
  const auto pc = param_count(g, cfg, embedding_cap);
  return json{{"flops", flop_count(g, cfg, batch).total},
              {"weights_with_bias", pc.weights_with_bias},
              {"weights_without_bias", pc.weights_without_bias},
              {"embedding_weights", pc.embedding_weights}}
      .dump();
}

std::string synth_json(const std::string& path, std::size_t rows, std::size_t num_dense, std::size_t num_sparse,
                       std::uint64_t vocab, const std::string& structure, std::uint64_t seed) {
  SynthSpec spec;
  spec.rows = rows;
  spec.num_dense = num_dense;
  spec.num_sparse = num_sparse;
  spec.vocab = vocab;
  spec.structure = parse_planted_structure(structure);
  spec.seed = seed;
  const auto ds = synth_generate(spec);
  save_cache(path, ds);
  return json{{"rows", ds.size()}, {"bayes_logloss", bayes_logloss(ds)}}.dump();
}

// Trains a supernet on the training split of a dataset and saves it to `out_dir`.
std::string train_supernet_json(const std::string& dataset, const std::string& run_text,
                                const std::string& out_dir) {
  auto rc = run_config_from_json(json::parse(run_text));
  const auto ds = load_dataset(dataset, rc.tsv);
  rc.supernet.features = feature_spec(ds, rc.supernet.features.embedding_dim);
  const auto sp = split(ds, rc.split);
  TrainState state(rc.supernet, rc.train);
  {
    py::gil_scoped_release release;
    train_supernet(state, sp.train);
  }
  save_supernet(out_dir, state);
  const auto r = eval_subnet_shared(state, full_supernet_genotype(state.cfg), sp.val);
  return json{{"steps", state.step}, {"final_loss", state.losses.back()}, {"val", to_json(r)}}.dump();
}

std::string eval_subnet_json(const std::string& supernet_dir, const std::string& dataset,
                             const std::string& genotype_text, std::size_t finetune_steps,
                             const std::string& run_text) {
  const auto rc = run_config_from_json(json::parse(run_text));
  const auto state = load_supernet(supernet_dir);
  const auto ds = load_dataset(dataset, rc.tsv);
  const auto sp = split(ds, rc.split);
  const auto g = parse_genotype(genotype_text);
  py::gil_scoped_release release;
  const auto r = finetune_last_fc(state, g, finetune_steps, sp.train, sp.val);
  return to_json(r).dump();
}

// Regularized evolution with a Python fitness callable taking genotype JSON.
std::string evolve_json(const std::string& cfg_text, const std::string& evo_text,
                        const std::function<double(const std::string&)>& fitness) {
  const auto cfg = config_of(cfg_text);
  const auto evo = evo_config_from_json(json::parse(evo_text));
  const auto r = evolve(cfg, evo, [&](const Genotype& g) { return fitness(serialize(g)); });
  json best = json::array(), top = json::array();
  for (const auto& rec : r.iterations) best.push_back(rec.best);
  for (const auto& ind : r.top) top.push_back({{"fitness", ind.fitness}, {"genotype", to_json(ind.genotype)}});
  return json{{"best", best}, {"top", top}, {"evaluated", r.history.size()}}.dump();
}

}  // namespace
}  // namespace nasrec

PYBIND11_MODULE(_core, m) {
  using namespace nasrec;
  m.doc() = "Weight-sharing architecture search for recommender models";

  py::register_exception<Error>(m, "NasrecError", PyExc_ValueError);

  m.def("preset_json", &config_json, py::arg("name"));
  m.def("cardinality_json", &cardinality_json, py::arg("config"));
  m.def("sample_json", &sample_json, py::arg("config"), py::arg("strategy"), py::arg("n"), py::arg("seed"));
  m.def("violations", &violations, py::arg("genotype"), py::arg("config"));
  m.def("cost_json", &cost_json, py::arg("genotype"), py::arg("config"), py::arg("batch") = 1,
        py::arg("embedding_cap") = 0);
  m.def("synth_json", &synth_json, py::arg("path"), py::arg("rows"), py::arg("num_dense"), py::arg("num_sparse"),
        py::arg("vocab"), py::arg("structure"), py::arg("seed"));
  m.def("train_supernet_json", &train_supernet_json, py::arg("dataset"), py::arg("run_config"),
        py::arg("out_dir"));
  m.def("eval_subnet_json", &eval_subnet_json, py::arg("supernet_dir"), py::arg("dataset"), py::arg("genotype"),
        py::arg("finetune_steps"), py::arg("run_config"));
  m.def("evolve_json", &evolve_json, py::arg("config"), py::arg("evolution"), py::arg("fitness"));
  m.def("mutations_per_child", [](std::size_t iter, std::size_t initial, std::size_t decay_every) {
    EvoConfig c;
    c.initial_mutations = initial;
    c.decay_every = decay_every;
    return mutations_per_child(iter, c);
  });

  m.def("warmup_p", [](std::int64_t total, double fraction, std::int64_t step) {
    return warmup_p(WarmupSchedule{total, fraction}, step);
  });
  m.def("logloss", [](const std::vector<double>& p, const std::vector<float>& y) { return metric_logloss(p, y); });
  m.def("auc", [](const std::vector<double>& s, const std::vector<float>& y) { return metric_auc(s, y); });
  m.def("pearson_rho", [](const std::vector<double>& x, const std::vector<double>& y) { return pearson_rho(x, y); });
  m.def("kendall_tau", [](const std::vector<double>& x, const std::vector<double>& y) { return kendall_tau(x, y); });
}
