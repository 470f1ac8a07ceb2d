#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <span>
#include <string_view>
#include <vector>

#include "nasrec/network.hpp"

namespace nasrec {

// Click-through dataset with row-major feature matrices.
struct CtrDataset {
  std::size_t num_dense = 0;
  std::vector<std::uint64_t> vocab_sizes;  // one per categorical field
  std::vector<float> dense;                // rows x num_dense, after log1p
  std::vector<std::uint32_t> ids;          // rows x num_sparse, 0 = missing/rare
  std::vector<float> labels;               // rows, 0 or 1
  // Generator probabilities P(y=1 | x); only synthetic datasets carry them.
  std::vector<float> true_probs;

  std::size_t size() const { return labels.size(); }
  std::size_t num_sparse() const { return vocab_sizes.size(); }

  CtrDataset subset(std::span<const std::size_t> rows) const;
  // Rows [begin, end) as a network batch.
  Batch batch(std::size_t begin, std::size_t end) const;
  // Throws if the matrices disagree with the field counts or break the
  // label/id/finite-value invariants.
  void check() const;
};

// Feature spec the dataset was built with, for sizing networks.
RawFeatureSpec feature_spec(const CtrDataset& ds, std::size_t embedding_dim);

struct TsvSchema {
  std::size_t num_dense = 13;
  std::size_t num_sparse = 26;
  // Hashed vocabulary size of every categorical field (id 0 is reserved).
  std::uint64_t vocab_size = 1000000;
  // Tokens seen fewer times than this in the file map to id 0.
  std::size_t min_token_count = 1;
};

// Deterministic token id in [1, vocab): FNV-1a over the token, mixed with
// the field index through splitmix64. Distinct tokens may collide.
std::uint32_t hash_token(std::size_t field, std::string_view token, std::uint64_t vocab);

// Rows are `label \t dense... \t categorical...`. Missing dense values read
// as 0 and every dense value becomes log(1 + max(x, 0)).
CtrDataset parse_tsv(std::istream& in, const TsvSchema& schema);
CtrDataset load_tsv(const std::filesystem::path& path, const TsvSchema& schema);

struct SplitSpec {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
  std::uint64_t seed = 0;
};

struct DataSplits {
  CtrDataset train, val, test;
};

// Seeded permutation cut into train/val/test.
DataSplits split(const CtrDataset& ds, const SplitSpec& spec);

enum class PlantedStructure { kLogisticLinear, kPairwiseInteraction };

const char* to_string(PlantedStructure p);
PlantedStructure parse_planted_structure(std::string_view name);

struct SynthSpec {
  std::size_t rows = 100000;
  std::size_t num_dense = 4;
  std::size_t num_sparse = 8;
  std::uint64_t vocab = 100;
  PlantedStructure structure = PlantedStructure::kPairwiseInteraction;
  std::uint64_t seed = 0;
  std::size_t latent_dim = 4;   // pairwise mode
  std::size_t planted_pairs = 6;  // pairwise mode
  double signal = 1.5;          // scale of the planted logit terms
};

// Labels drawn from sigmoid(planted logit); the logit is a linear function
// of the features (logistic-linear) or a sum of latent dot products over a
// few planted field pairs plus a weak dense term (pairwise-interaction).
CtrDataset synth_generate(const SynthSpec& spec);

// Mean log loss of the generator's own probabilities.
double bayes_logloss(const CtrDataset& ds);

// Columnar binary cache, little-endian:
//
//   bytes 0..7  magic "NASRECD\0"
//   u32         format version (kDatasetCacheVersion)
//   u64         rows
//   u32         num_dense, u32 num_sparse, u8 has_true_probs
//   u64         vocab_sizes[num_sparse]
//   f32         labels[rows]
//   f32         dense column 0 [rows], column 1 [rows], ...
//   u32         id column 0 [rows], column 1 [rows], ...
//   f32         true_probs[rows]   (when has_true_probs)
inline constexpr std::uint32_t kDatasetCacheVersion = 1;

void save_cache(const std::filesystem::path& path, const CtrDataset& ds);
CtrDataset load_cache(const std::filesystem::path& path);
bool is_cache_file(const std::filesystem::path& path);

// Cache or TSV, detected by the magic bytes.
CtrDataset load_dataset(const std::filesystem::path& path, const TsvSchema& schema);

}  // namespace nasrec
