#include "nasrec/search_space.hpp"

#include <algorithm>
#include <functional>
#include <set>
#include <sstream>

namespace nasrec {
namespace {

bool contains(const std::vector<std::size_t>& v, std::size_t x) {
  return std::find(v.begin(), v.end(), x) != v.end();
}

bool contains(const std::vector<OperatorKind>& v, OperatorKind x) {
  return std::find(v.begin(), v.end(), x) != v.end();
}

std::size_t max_dim(const std::vector<OpChoice>& ops) {
  std::size_t m = 0;
  for (const auto& op : ops) m = std::max(m, op.dim);
  return m;
}

BigInt pow_big(std::uint64_t base, std::size_t exp) {
  BigInt r = 1;
  for (std::size_t i = 0; i < exp; ++i) r *= base;
  return r;
}

}  // namespace

void check_config(const SupernetConfig& cfg) {
  auto fail = [](const std::string& msg) { throw Error("invalid supernet config: " + msg); };
  if (cfg.num_blocks < 1) fail("num_blocks must be >= 1");
  if (cfg.dense_ops.empty() || cfg.sparse_ops.empty()) fail("operator menus must be nonempty");
  for (auto k : cfg.dense_ops) {
    if (!is_dense(k)) fail(std::string(to_string(k)) + " is not a dense operator");
  }
  for (auto k : cfg.sparse_ops) {
    if (!is_sparse(k)) fail(std::string(to_string(k)) + " is not a sparse operator");
  }
  auto check_menu = [&](const std::vector<std::size_t>& dims, const char* what) {
    if (dims.empty()) fail(std::string(what) + " menu is empty");
    for (std::size_t i = 0; i < dims.size(); ++i) {
      if (dims[i] == 0) fail(std::string(what) + " menu contains 0");
      if (i && dims[i] <= dims[i - 1]) fail(std::string(what) + " menu must be strictly increasing");
    }
  };
  check_menu(cfg.dense_dims, "dense dimension");
  check_menu(cfg.sparse_dims, "sparse dimension");
  if (std::set<OperatorKind>(cfg.dense_ops.begin(), cfg.dense_ops.end()).size() !=
      cfg.dense_ops.size()) {
    fail("duplicate dense operator");
  }
  if (std::set<OperatorKind>(cfg.sparse_ops.begin(), cfg.sparse_ops.end()).size() !=
      cfg.sparse_ops.size()) {
    fail("duplicate sparse operator");
  }
  if (cfg.features.num_dense == 0) fail("need at least one dense feature");
  if (cfg.features.num_sparse() == 0) fail("need at least one categorical feature");
  if (cfg.features.embedding_dim == 0) fail("embedding_dim must be positive");
  for (auto v : cfg.features.vocab_sizes) {
    if (v == 0) fail("vocabulary sizes must be positive");
  }
}

SupernetConfig preset(std::string_view name) {
  SupernetConfig cfg;
  if (name == "nasrec_small") {
    cfg.dense_ops = {OperatorKind::kFC, OperatorKind::kDotProduct};
    cfg.sparse_ops = {OperatorKind::kEmbedFC};
  } else if (name == "nasrec_full") {
    cfg.dense_ops = {OperatorKind::kFC, OperatorKind::kGating, OperatorKind::kSum,
                     OperatorKind::kDotProduct};
    cfg.sparse_ops = {OperatorKind::kEmbedFC, OperatorKind::kAttention};
  } else {
    throw Error("unknown preset '" + std::string(name) + "' (expected nasrec_small or nasrec_full)");
  }
  return cfg;
}

std::vector<Violation> validate(const Genotype& g, const SupernetConfig& cfg) {
  std::vector<Violation> out;
  if (g.blocks.size() != cfg.num_blocks) {
    out.push_back({0, "block-count",
                   "expected " + std::to_string(cfg.num_blocks) + " blocks, got " +
                       std::to_string(g.blocks.size())});
  }
  for (std::size_t i = 0; i < g.blocks.size(); ++i) {
    const std::size_t b = i + 1;
    const auto& blk = g.blocks[i];
    auto check_ops = [&](const std::vector<OpChoice>& ops, const std::vector<OperatorKind>& menu,
                         const std::vector<std::size_t>& dims, const std::string& branch) {
      if (ops.empty()) out.push_back({b, "nonempty-" + branch + "-branch", "no operator sampled"});
      std::set<OperatorKind> seen;
      for (const auto& op : ops) {
        if (!contains(menu, op.kind)) {
          out.push_back({b, branch + "-op-menu",
                         std::string(to_string(op.kind)) + " not in the " + branch + " menu"});
        }
        if (!seen.insert(op.kind).second) {
          out.push_back({b, "duplicate-op", std::string(to_string(op.kind)) + " sampled twice"});
        }
        if (!contains(dims, op.dim)) {
          out.push_back({b, branch + "-dim-menu",
                         "dimension " + std::to_string(op.dim) + " of " + to_string(op.kind) +
                             " not in the menu"});
        }
      }
    };
    check_ops(blk.dense_ops, cfg.dense_ops, cfg.dense_dims, "dense");
    check_ops(blk.sparse_ops, cfg.sparse_ops, cfg.sparse_dims, "sparse");

    auto check_conns = [&](const std::vector<std::size_t>& conns, const std::string& branch) {
      if (conns.empty()) {
        out.push_back({b, "nonempty-" + branch + "-conns", "no input connection"});
      }
      std::set<std::size_t> seen;
      for (auto s : conns) {
        if (s >= b) {
          out.push_back({b, "conn-order",
                         branch + " connection to source " + std::to_string(s) +
                             " is not an earlier block"});
        }
        if (!seen.insert(s).second) {
          out.push_back({b, "duplicate-conn", "source " + std::to_string(s) + " listed twice"});
        }
      }
    };
    check_conns(blk.dense_conns, "dense");
    check_conns(blk.sparse_conns, "sparse");
    if (blk.project_concat && !cfg.allow_project_concat) {
      out.push_back({b, "project-concat-disabled", "Project-Concat is disabled in this config"});
    }
  }
  return out;
}

void require_valid(const Genotype& g, const SupernetConfig& cfg) {
  const auto violations = validate(g, cfg);
  if (violations.empty()) return;
  std::ostringstream os;
  os << "invalid genotype:";
  for (const auto& v : violations) os << " [block " << v.block << ", " << v.rule << "] " << v.detail << ';';
  throw Error(os.str());
}

void canonicalize(Genotype& g) {
  auto by_kind = [](const OpChoice& a, const OpChoice& b) { return a.kind < b.kind; };
  for (auto& blk : g.blocks) {
    std::sort(blk.dense_ops.begin(), blk.dense_ops.end(), by_kind);
    std::sort(blk.sparse_ops.begin(), blk.sparse_ops.end(), by_kind);
    std::sort(blk.dense_conns.begin(), blk.dense_conns.end());
    std::sort(blk.sparse_conns.begin(), blk.sparse_conns.end());
  }
}

Genotype full_supernet_genotype(const SupernetConfig& cfg) {
  Genotype g;
  for (std::size_t b = 1; b <= cfg.num_blocks; ++b) {
    BlockGenotype blk;
    for (auto k : cfg.dense_ops) blk.dense_ops.push_back({k, cfg.max_dense_dim()});
    for (auto k : cfg.sparse_ops) blk.sparse_ops.push_back({k, cfg.max_sparse_rows()});
    for (std::size_t s = 0; s < b; ++s) {
      blk.dense_conns.push_back(s);
      blk.sparse_conns.push_back(s);
    }
    blk.project_concat = cfg.allow_project_concat;
    g.blocks.push_back(std::move(blk));
  }
  canonicalize(g);
  return g;
}

// ---------------------------------------------------------------------------
// JSON

nlohmann::json to_json(const Genotype& g) {
  using nlohmann::json;
  json blocks = json::array();
  for (const auto& blk : g.blocks) {
    auto ops = [](const std::vector<OpChoice>& v) {
      json a = json::array();
      for (const auto& op : v) a.push_back({{"kind", to_string(op.kind)}, {"dim", op.dim}});
      return a;
    };
    blocks.push_back({{"dense_ops", ops(blk.dense_ops)},
                      {"sparse_ops", ops(blk.sparse_ops)},
                      {"dense_conns", blk.dense_conns},
                      {"sparse_conns", blk.sparse_conns},
                      {"project_concat", blk.project_concat}});
  }
  return {{"version", kGenotypeSchemaVersion}, {"num_blocks", g.blocks.size()}, {"blocks", blocks}};
}

Genotype genotype_from_json(const nlohmann::json& j) {
  try {
    if (j.at("version").get<int>() != kGenotypeSchemaVersion) {
      throw Error("unsupported genotype schema version " + j.at("version").dump());
    }
    Genotype g;
    for (const auto& jb : j.at("blocks")) {
      BlockGenotype blk;
      auto ops = [](const nlohmann::json& a) {
        std::vector<OpChoice> v;
        for (const auto& jo : a) {
          v.push_back({parse_operator_kind(jo.at("kind").get<std::string>()),
                       jo.at("dim").get<std::size_t>()});
        }
        return v;
      };
      blk.dense_ops = ops(jb.at("dense_ops"));
      blk.sparse_ops = ops(jb.at("sparse_ops"));
      blk.dense_conns = jb.at("dense_conns").get<std::vector<std::size_t>>();
      blk.sparse_conns = jb.at("sparse_conns").get<std::vector<std::size_t>>();
      blk.project_concat = jb.at("project_concat").get<bool>();
      g.blocks.push_back(std::move(blk));
    }
    if (j.at("num_blocks").get<std::size_t>() != g.blocks.size()) {
      throw Error("num_blocks does not match the block list");
    }
    return g;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed genotype JSON: ") + e.what());
  }
}

std::string serialize(const Genotype& g) { return to_json(g).dump(); }

Genotype parse_genotype(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed genotype JSON: ") + e.what());
  }
  return genotype_from_json(j);
}

nlohmann::json to_json(const SupernetConfig& cfg) {
  auto names = [](const std::vector<OperatorKind>& v) {
    std::vector<std::string> out;
    for (auto k : v) out.emplace_back(to_string(k));
    return out;
  };
  return {{"num_blocks", cfg.num_blocks},
          {"dense_ops", names(cfg.dense_ops)},
          {"sparse_ops", names(cfg.sparse_ops)},
          {"dense_dims", cfg.dense_dims},
          {"sparse_dims", cfg.sparse_dims},
          {"num_dense_features", cfg.features.num_dense},
          {"vocab_sizes", cfg.features.vocab_sizes},
          {"embedding_dim", cfg.features.embedding_dim},
          {"balanced_dot_product", cfg.balanced_dot_product},
          {"layer_norm", cfg.layer_norm},
          {"allow_project_concat", cfg.allow_project_concat}};
}

SupernetConfig supernet_config_from_json(const nlohmann::json& j) {
  try {
    SupernetConfig cfg = preset(j.value("preset", std::string("nasrec_full")));
    auto kinds = [](const nlohmann::json& a) {
      std::vector<OperatorKind> v;
      for (const auto& s : a) v.push_back(parse_operator_kind(s.get<std::string>()));
      return v;
    };
    if (j.contains("num_blocks")) cfg.num_blocks = j["num_blocks"].get<std::size_t>();
    if (j.contains("dense_ops")) cfg.dense_ops = kinds(j["dense_ops"]);
    if (j.contains("sparse_ops")) cfg.sparse_ops = kinds(j["sparse_ops"]);
    if (j.contains("dense_dims")) cfg.dense_dims = j["dense_dims"].get<std::vector<std::size_t>>();
    if (j.contains("sparse_dims")) cfg.sparse_dims = j["sparse_dims"].get<std::vector<std::size_t>>();
    if (j.contains("num_dense_features")) {
      cfg.features.num_dense = j["num_dense_features"].get<std::size_t>();
    }
    if (j.contains("vocab_sizes")) {
      cfg.features.vocab_sizes = j["vocab_sizes"].get<std::vector<std::uint64_t>>();
    } else if (j.contains("num_sparse_features") || j.contains("vocab_size")) {
      cfg.features.vocab_sizes.assign(j.value("num_sparse_features", std::size_t{26}),
                                      j.value("vocab_size", std::uint64_t{1000000}));
    }
    if (j.contains("embedding_dim")) cfg.features.embedding_dim = j["embedding_dim"].get<std::size_t>();
    cfg.balanced_dot_product = j.value("balanced_dot_product", cfg.balanced_dot_product);
    cfg.layer_norm = j.value("layer_norm", cfg.layer_norm);
    cfg.allow_project_concat = j.value("allow_project_concat", cfg.allow_project_concat);
    check_config(cfg);
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed supernet config: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Cardinality and enumeration

const char* to_string(DimConvention c) {
  return c == DimConvention::kPerOperator ? "per_operator" : "per_branch";
}

std::string describe(DimConvention c) {
  const std::string common =
      " x nonempty dense connection subsets x nonempty sparse connection subsets"
      " (block k chooses among raw features and blocks 1..k-1) x Project-Concat flag,"
      " multiplied over blocks";
  if (c == DimConvention::kPerOperator) {
    return "per block: sum over nonempty operator subsets S of |dims|^|S| in each branch" + common;
  }
  return "per block: nonempty operator subsets x one shared dimension in each branch" + common;
}

BigInt cardinality(const SupernetConfig& cfg, DimConvention convention) {
  check_config(cfg);
  auto branch = [&](std::size_t n_ops, std::size_t n_dims) -> BigInt {
    if (convention == DimConvention::kPerOperator) return pow_big(1 + n_dims, n_ops) - 1;
    return (pow_big(2, n_ops) - 1) * n_dims;
  };
  const BigInt dense = branch(cfg.dense_ops.size(), cfg.dense_dims.size());
  const BigInt sparse = branch(cfg.sparse_ops.size(), cfg.sparse_dims.size());
  BigInt total = 1;
  for (std::size_t k = 1; k <= cfg.num_blocks; ++k) {
    const BigInt conns = pow_big(2, k) - 1;
    total *= dense * sparse * conns * conns * (cfg.allow_project_concat ? 2 : 1);
  }
  return total;
}

std::vector<Genotype> enumerate_genotypes(const SupernetConfig& cfg,
                                          const EnumerationOptions& options, std::size_t limit) {
  check_config(cfg);
  // Every choice for one branch: operator subset with dimensions.
  auto branch_choices = [&](const std::vector<OperatorKind>& menu,
                            const std::vector<std::size_t>& dims) {
    std::vector<std::vector<OpChoice>> out;
    const std::size_t n = menu.size();
    for (std::uint64_t mask = 1; mask < (1ULL << n); ++mask) {
      std::vector<OperatorKind> kinds;
      for (std::size_t i = 0; i < n; ++i) {
        if (mask & (1ULL << i)) kinds.push_back(menu[i]);
      }
      if (options.single_op_per_branch && kinds.size() != 1) continue;
      if (options.dims == DimConvention::kPerBranch) {
        for (auto d : dims) {
          std::vector<OpChoice> ops;
          for (auto k : kinds) ops.push_back({k, d});
          out.push_back(ops);
        }
      } else {
        std::vector<OpChoice> ops(kinds.size());
        std::function<void(std::size_t)> rec = [&](std::size_t i) {
          if (i == kinds.size()) {
            out.push_back(ops);
            return;
          }
          for (auto d : dims) {
            ops[i] = {kinds[i], d};
            rec(i + 1);
          }
        };
        rec(0);
      }
    }
    return out;
  };
  const auto dense_choices = branch_choices(cfg.dense_ops, cfg.dense_dims);
  const auto sparse_choices = branch_choices(cfg.sparse_ops, cfg.sparse_dims);
  auto conn_subsets = [](std::size_t k) {
    std::vector<std::vector<std::size_t>> out;
    for (std::uint64_t mask = 1; mask < (1ULL << k); ++mask) {
      std::vector<std::size_t> s;
      for (std::size_t i = 0; i < k; ++i) {
        if (mask & (1ULL << i)) s.push_back(i);
      }
      out.push_back(s);
    }
    return out;
  };

  std::vector<Genotype> out;
  Genotype current;
  current.blocks.resize(cfg.num_blocks);
  std::function<void(std::size_t)> rec = [&](std::size_t b) {
    if (b == cfg.num_blocks) {
      if (out.size() >= limit) {
        throw Error("enumerate_genotypes: space exceeds limit " + std::to_string(limit));
      }
      Genotype g = current;
      canonicalize(g);
      out.push_back(std::move(g));
      return;
    }
    const auto conns = conn_subsets(b + 1);
    auto& blk = current.blocks[b];
    for (const auto& d : dense_choices)
      for (const auto& s : sparse_choices)
        for (const auto& dc : conns)
          for (const auto& sc : conns)
            for (int pc = 0; pc < (cfg.allow_project_concat ? 2 : 1); ++pc) {
              blk.dense_ops = d;
              blk.sparse_ops = s;
              blk.dense_conns = dc;
              blk.sparse_conns = sc;
              blk.project_concat = pc != 0;
              rec(b + 1);
            }
  };
  rec(0);
  return out;
}

// ---------------------------------------------------------------------------
// Cost models of the standalone subnet

SubnetLayout subnet_layout(const Genotype& g, const SupernetConfig& cfg) {
  SubnetLayout l;
  l.dense_width.push_back(cfg.features.num_dense);
  l.sparse_ops_rows.push_back(cfg.features.num_sparse());
  l.sparse_rows.push_back(cfg.features.num_sparse());
  for (const auto& blk : g.blocks) {
    l.dense_width.push_back(max_dim(blk.dense_ops));
    l.sparse_ops_rows.push_back(max_dim(blk.sparse_ops));
    l.sparse_rows.push_back(max_dim(blk.sparse_ops) + (blk.project_concat ? 1 : 0));
  }
  return l;
}

namespace {

// Shared walk over the standalone subnet for both cost models.
std::vector<AuditEntry> cost_audit(const Genotype& g, const SupernetConfig& cfg,
                                   std::uint64_t embedding_cap, std::uint64_t batch) {
  require_valid(g, cfg);
  const auto layout = subnet_layout(g, cfg);
  const std::uint64_t ds = cfg.features.embedding_dim;
  const std::uint64_t B = batch;
  const bool ln = cfg.layer_norm;
  std::vector<AuditEntry> audit;

  for (std::size_t f = 0; f < cfg.features.num_sparse(); ++f) {
    std::uint64_t rows = cfg.features.vocab_sizes[f];
    if (embedding_cap) rows = std::min(rows, embedding_cap);
    audit.push_back({"embedding." + std::to_string(f), 0, 0, rows * ds, 0});
  }

  for (std::size_t i = 0; i < g.blocks.size(); ++i) {
    const std::size_t b = i + 1;
    const auto& blk = g.blocks[i];
    const std::string prefix = "block" + std::to_string(b) + ".";
    std::uint64_t in = 0, rows_in = 0;
    for (auto s : blk.dense_conns) in += layout.dense_width[s];
    for (auto s : blk.sparse_conns) rows_in += layout.sparse_rows[s];

    for (const auto& op : blk.dense_ops) {
      const std::uint64_t d = op.dim;
      AuditEntry e{prefix + to_string(op.kind)};
      switch (op.kind) {
        case OperatorKind::kFC:
          e.weights = in * d;
          e.biases = d;
          e.flops = 2 * B * in * d;
          break;
        case OperatorKind::kGating:
          e.weights = 2 * in * d;
          e.biases = 2 * d;
          e.flops = 2 * 2 * B * in * d;
          break;
        case OperatorKind::kSum:
          e.weights = in * d;
          e.biases = d;
          e.flops = 2 * B * in * d;
          break;
        case OperatorKind::kDotProduct: {
          const std::uint64_t rows = 1 + rows_in;
          const auto c = dot_product_weight_count(rows, d, cfg.balanced_dot_product);
          e.weights = in * ds + c.weights();
          e.biases = ds + c.biases;
          e.flops = 2 * B * in * ds;
          if (cfg.balanced_dot_product) {
            const std::uint64_t t = dot_product_projection_target(cfg.max_dense_dim());
            // Balanced projection target follows the branch width, not the
            // sampled width, so the row projection is shared by all widths.
            const auto cb = dot_product_weight_count(rows, cfg.max_dense_dim(), true);
            const std::uint64_t pairs = t * (t - 1) / 2;
            e.weights = in * ds + cb.row_projection + pairs * d;
            e.biases = ds + t + d;
            e.flops += 2 * B * rows * t * ds + 2 * B * t * ds * t + 2 * B * pairs * d;
          } else {
            const std::uint64_t pairs = rows * (rows - 1) / 2;
            e.flops += 2 * B * rows * ds * rows + 2 * B * pairs * d;
          }
          break;
        }
        default:
          break;
      }
      if (ln) {
        e.biases += 2 * d;
        e.flops += kLayerNormFlopsPerElement * B * d;
      }
      audit.push_back(e);
    }
    for (const auto& op : blk.sparse_ops) {
      const std::uint64_t n = op.dim;
      AuditEntry e{prefix + to_string(op.kind)};
      e.weights = rows_in * n;
      e.biases = n;
      e.flops = 2 * B * rows_in * n * ds;
      if (op.kind == OperatorKind::kAttention) {
        e.flops += 2 * B * rows_in * ds * rows_in                 // X X^T
                   + kSoftmaxFlopsPerElement * B * rows_in * rows_in  // softmax
                   + 2 * B * rows_in * rows_in * ds;              // weights X
      }
      if (ln) {
        e.biases += 2 * ds;
        e.flops += kLayerNormFlopsPerElement * B * n * ds;
      }
      audit.push_back(e);
    }
    if (blk.project_concat) {
      const std::uint64_t w = layout.dense_width[b];
      audit.push_back({prefix + "ProjectConcat", w * ds, ds, 0, 2 * B * w * ds});
    }
  }
  const std::uint64_t w = layout.dense_width.back();
  audit.push_back({"head", w, 1, 0, 2 * B * w});
  return audit;
}

}  // namespace

ParamCount param_count(const Genotype& g, const SupernetConfig& cfg, std::uint64_t embedding_cap) {
  ParamCount pc;
  pc.audit = cost_audit(g, cfg, embedding_cap, 1);
  for (const auto& e : pc.audit) {
    pc.weights_without_bias += e.weights;
    pc.weights_with_bias += e.weights + e.biases;
    pc.embedding_weights += e.embeddings;
  }
  return pc;
}

FlopCount flop_count(const Genotype& g, const SupernetConfig& cfg, std::size_t batch) {
  FlopCount fc;
  fc.audit = cost_audit(g, cfg, 0, batch);
  for (const auto& e : fc.audit) fc.total += e.flops;
  return fc;
}

}  // namespace nasrec
