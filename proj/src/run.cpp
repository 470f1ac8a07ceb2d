#include "nasrec/run.hpp"

#include <fstream>

#include "nasrec/checkpoint.hpp"

namespace nasrec {
namespace {

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

}  // namespace

RunConfig run_config_from_json(const nlohmann::json& j) {
  try {
    RunConfig c;
    if (!j.is_object()) throw Error("run config must be a JSON object");
    if (j.contains("supernet")) c.supernet = supernet_config_from_json(j["supernet"]);
    if (j.contains("train")) c.train = train_config_from_json(j["train"]);
    if (j.contains("evolution")) c.evolution = evo_config_from_json(j["evolution"]);
    if (j.contains("split")) {
      const auto& s = j["split"];
      c.split.train = s.value("train", c.split.train);
      c.split.val = s.value("val", c.split.val);
      c.split.test = s.value("test", c.split.test);
      c.split.seed = s.value("seed", c.split.seed);
    }
    if (j.contains("tsv")) {
      const auto& t = j["tsv"];
      c.tsv.num_dense = t.value("num_dense", c.tsv.num_dense);
      c.tsv.num_sparse = t.value("num_sparse", c.tsv.num_sparse);
      c.tsv.vocab_size = t.value("vocab_size", c.tsv.vocab_size);
      c.tsv.min_token_count = t.value("min_token_count", c.tsv.min_token_count);
    }
    for (const auto& [key, value] : j.items()) {
      if (key != "supernet" && key != "train" && key != "evolution" && key != "split" && key != "tsv") {
        throw Error("unknown run config section '" + key + "'");
      }
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed run config: ") + e.what());
  }
}

RunConfig load_run_config(const std::filesystem::path& path) { return run_config_from_json(read_json(path)); }

nlohmann::json to_json(const RunConfig& c) {
  return {{"supernet", to_json(c.supernet)},
          {"train", to_json(c.train)},
          {"evolution", to_json(c.evolution)},
          {"split", {{"train", c.split.train}, {"val", c.split.val}, {"test", c.split.test}, {"seed", c.split.seed}}},
          {"tsv",
           {{"num_dense", c.tsv.num_dense},
            {"num_sparse", c.tsv.num_sparse},
            {"vocab_size", c.tsv.vocab_size},
            {"min_token_count", c.tsv.min_token_count}}}};
}

Genotype load_genotype(const std::string& path_or_json) {
  const auto first = path_or_json.find_first_not_of(" \t\n");
  if (first != std::string::npos && path_or_json[first] == '{') return parse_genotype(path_or_json);
  return genotype_from_json(read_json(path_or_json));
}

void save_supernet(const std::filesystem::path& dir, const TrainState& state) {
  std::filesystem::create_directories(dir);
  save_checkpoint(dir / "supernet.ckpt", state.net.params(), static_cast<std::uint64_t>(state.step));
  std::ofstream os(dir / "supernet.json");
  if (!os) throw Error("cannot write " + (dir / "supernet.json").string());
  os << nlohmann::json{{"supernet", to_json(state.cfg)}, {"train", to_json(state.train)}}.dump(2) << '\n';
}

TrainState load_supernet(const std::filesystem::path& dir) {
  const auto meta = read_json(dir / "supernet.json");
  TrainState state(supernet_config_from_json(meta.at("supernet")), train_config_from_json(meta.at("train")));
  const auto ck = load_checkpoint(dir / "supernet.ckpt");
  restore_params(state.net.params(), ck.params);
  state.step = static_cast<std::int64_t>(ck.step);
  return state;
}

void restore_params(ParamStore<float>& params, const ParamStore<float>& saved) {
  if (params.size() != saved.size()) {
    throw Error("checkpoint holds " + std::to_string(saved.size()) + " parameters, network has " +
                std::to_string(params.size()));
  }
  for (auto& p : params) {
    const auto* q = saved.find(p.name);
    if (!q) throw Error("checkpoint lacks parameter " + p.name);
    if (q->value.shape() != p.value.shape()) throw Error("checkpoint shape mismatch for " + p.name);
    p.value = q->value;
    if (q->accum.size() == p.value.size()) p.accum = q->accum;
    p.trainable = q->trainable;
  }
}

}  // namespace nasrec
