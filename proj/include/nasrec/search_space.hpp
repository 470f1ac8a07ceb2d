#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>
#include <nlohmann/json.hpp>

#include "nasrec/operators.hpp"

namespace nasrec {

using BigInt = boost::multiprecision::cpp_int;

struct RawFeatureSpec {
  std::size_t num_dense = 13;
  // One entry per categorical field.
  std::vector<std::uint64_t> vocab_sizes = std::vector<std::uint64_t>(26, 1000000);
  // dim_s, shared by every sparse tensor.
  std::size_t embedding_dim = 16;

  std::size_t num_sparse() const { return vocab_sizes.size(); }
};

// The supernet S = (connections, dimensions, operators) over num_blocks
// choice blocks.
struct SupernetConfig {
  std::size_t num_blocks = 7;
  std::vector<OperatorKind> dense_ops;
  std::vector<OperatorKind> sparse_ops;
  // Output widths of dense operators; the largest is the branch width dim_d.
  std::vector<std::size_t> dense_dims = {32, 64, 128, 256, 512};
  // Output row counts of sparse operators; the largest is N_s.
  std::vector<std::size_t> sparse_dims = {16, 32, 64};
  RawFeatureSpec features;
  bool balanced_dot_product = true;
  bool layer_norm = true;
  bool allow_project_concat = true;

  std::size_t max_dense_dim() const { return dense_dims.back(); }
  std::size_t max_sparse_rows() const { return sparse_dims.back(); }
};

// Throws Error if the config breaks its invariants.
void check_config(const SupernetConfig& cfg);

// "nasrec_small" or "nasrec_full".
SupernetConfig preset(std::string_view name);

struct OpChoice {
  OperatorKind kind = OperatorKind::kFC;
  std::size_t dim = 0;
  friend bool operator==(const OpChoice&, const OpChoice&) = default;
};

// Connection sources: 0 is the raw features, k >= 1 is block k.
struct BlockGenotype {
  std::vector<OpChoice> dense_ops;
  std::vector<OpChoice> sparse_ops;
  std::vector<std::size_t> dense_conns;
  std::vector<std::size_t> sparse_conns;
  bool project_concat = false;
  friend bool operator==(const BlockGenotype&, const BlockGenotype&) = default;
};

struct Genotype {
  std::vector<BlockGenotype> blocks;
  friend bool operator==(const Genotype&, const Genotype&) = default;
};

struct Violation {
  std::size_t block = 0;  // 1-based; 0 for genotype-level problems
  std::string rule;
  std::string detail;
};

std::vector<Violation> validate(const Genotype& g, const SupernetConfig& cfg);
// Throws Error listing every violation.
void require_valid(const Genotype& g, const SupernetConfig& cfg);

// Sorts operators by kind and connections ascending.
void canonicalize(Genotype& g);

// Every operator at its largest dimension, every connection, Project-Concat on.
Genotype full_supernet_genotype(const SupernetConfig& cfg);

inline constexpr int kGenotypeSchemaVersion = 1;
nlohmann::json to_json(const Genotype& g);
Genotype genotype_from_json(const nlohmann::json& j);
std::string serialize(const Genotype& g);
Genotype parse_genotype(std::string_view text);

nlohmann::json to_json(const SupernetConfig& cfg);
SupernetConfig supernet_config_from_json(const nlohmann::json& j);

// How operator dimensions enter the count.
//  kPerOperator: every sampled operator picks its own dimension, so a branch
//    with operator set S contributes |dims|^|S| choices.
//  kPerBranch: one dimension per branch shared by its operators, so the
//    operator subset and the dimension are independent factors.
// Both multiply nonempty operator subsets, nonempty dense and sparse
// connection subsets over {raw, 1..k-1}, and the Project-Concat flag.
enum class DimConvention { kPerOperator, kPerBranch };

const char* to_string(DimConvention c);
std::string describe(DimConvention c);
BigInt cardinality(const SupernetConfig& cfg, DimConvention convention);

struct EnumerationOptions {
  bool single_op_per_branch = false;
  DimConvention dims = DimConvention::kPerOperator;
};

// Lists every valid genotype of a small config in canonical form. Throws if
// the space exceeds `limit` genotypes.
std::vector<Genotype> enumerate_genotypes(const SupernetConfig& cfg,
                                          const EnumerationOptions& options = {},
                                          std::size_t limit = 1000000);

// Per-layer line of a cost audit. Counts refer to the standalone subnet.
struct AuditEntry {
  std::string layer;
  std::uint64_t weights = 0;     // matrix entries
  std::uint64_t biases = 0;      // bias vectors and layer-norm scale/shift
  std::uint64_t embeddings = 0;  // embedding table entries
  std::uint64_t flops = 0;
};

struct ParamCount {
  std::uint64_t weights_with_bias = 0;
  std::uint64_t weights_without_bias = 0;
  std::uint64_t embedding_weights = 0;
  std::vector<AuditEntry> audit;
};

// embedding_cap = 0 means uncapped tables.
ParamCount param_count(const Genotype& g, const SupernetConfig& cfg, std::uint64_t embedding_cap);

struct FlopCount {
  std::uint64_t total = 0;
  std::vector<AuditEntry> audit;
};

FlopCount flop_count(const Genotype& g, const SupernetConfig& cfg, std::size_t batch = 1);

// Widths of every source in the standalone form of a genotype: index 0 is
// the raw features, index k is block k.
struct SubnetLayout {
  std::vector<std::size_t> dense_width;
  std::vector<std::size_t> sparse_ops_rows;  // rows produced by the sparse branch
  std::vector<std::size_t> sparse_rows;      // plus the Project-Concat row when present
};

SubnetLayout subnet_layout(const Genotype& g, const SupernetConfig& cfg);

}  // namespace nasrec
