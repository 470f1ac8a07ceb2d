#pragma once

#include <filesystem>

#include <nlohmann/json.hpp>

#include "nasrec/data.hpp"
#include "nasrec/evolution.hpp"
#include "nasrec/trainer.hpp"

namespace nasrec {

// Everything a command-line run can configure. In the config file each part
// sits under its own key:
//
//   {"supernet": {...}, "train": {...}, "evolution": {...},
//    "split": {"train": 0.8, "val": 0.1, "test": 0.1, "seed": 0},
//    "tsv": {"num_dense": 13, "num_sparse": 26, "vocab_size": 1000000,
//            "min_token_count": 1}}
//
// Missing keys keep their defaults.
struct RunConfig {
  SupernetConfig supernet = preset("nasrec_full");
  TrainConfig train;
  EvoConfig evolution;
  SplitSpec split;
  TsvSchema tsv;
};

RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& c);

// Reads a genotype from a JSON file, or from inline JSON text.
Genotype load_genotype(const std::string& path_or_json);

// A trained supernet on disk: supernet.ckpt (checkpoint format) plus
// supernet.json holding the supernet and training configs.
void save_supernet(const std::filesystem::path& dir, const TrainState& state);
TrainState load_supernet(const std::filesystem::path& dir);

// Copies checkpoint values and accumulators into matching parameters; throws
// on a missing name or shape mismatch.
void restore_params(ParamStore<float>& params, const ParamStore<float>& saved);

}  // namespace nasrec
