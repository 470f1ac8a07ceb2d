#include "nasrec/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>

#include "nasrec/byteio.hpp"
#include "nasrec/random.hpp"

namespace nasrec {
namespace {

constexpr std::array<char, 8> kCacheMagic = {'N', 'A', 'S', 'R', 'E', 'C', 'D', '\0'};

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find('\t', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

CtrDataset CtrDataset::subset(std::span<const std::size_t> rows) const {
  CtrDataset out;
  out.num_dense = num_dense;
  out.vocab_sizes = vocab_sizes;
  const std::size_t fs = num_sparse();
  out.dense.reserve(rows.size() * num_dense);
  out.ids.reserve(rows.size() * fs);
  out.labels.reserve(rows.size());
  for (auto r : rows) {
    if (r >= size()) throw Error("CtrDataset::subset: row out of range");
    out.dense.insert(out.dense.end(), dense.begin() + r * num_dense,
                     dense.begin() + (r + 1) * num_dense);
    out.ids.insert(out.ids.end(), ids.begin() + r * fs, ids.begin() + (r + 1) * fs);
    out.labels.push_back(labels[r]);
    if (!true_probs.empty()) out.true_probs.push_back(true_probs[r]);
  }
  return out;
}

Batch CtrDataset::batch(std::size_t begin, std::size_t end) const {
  if (begin >= end || end > size()) throw Error("CtrDataset::batch: bad row range");
  const std::size_t n = end - begin;
  return {n, std::span<const float>(dense).subspan(begin * num_dense, n * num_dense),
          std::span<const std::uint32_t>(ids).subspan(begin * num_sparse(), n * num_sparse()),
          std::span<const float>(labels).subspan(begin, n)};
}

void CtrDataset::check() const {
  const std::size_t n = size();
  if (dense.size() != n * num_dense || ids.size() != n * num_sparse()) {
    throw Error("dataset matrices do not match the field counts");
  }
  if (!true_probs.empty() && true_probs.size() != n) throw Error("dataset true_probs size mismatch");
  for (float y : labels) {
    if (y != 0.0f && y != 1.0f) throw Error("dataset labels must be 0 or 1");
  }
  for (float x : dense) {
    if (!std::isfinite(x)) throw Error("dataset dense values must be finite");
  }
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= vocab_sizes[i % num_sparse()]) throw Error("dataset id outside its vocabulary");
  }
}

RawFeatureSpec feature_spec(const CtrDataset& ds, std::size_t embedding_dim) {
  RawFeatureSpec spec;
  spec.num_dense = ds.num_dense;
  spec.vocab_sizes = ds.vocab_sizes;
  spec.embedding_dim = embedding_dim;
  return spec;
}

std::uint32_t hash_token(std::size_t field, std::string_view token, std::uint64_t vocab) {
  if (vocab < 2) throw Error("hash_token: vocabulary must hold at least 2 ids");
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : token) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  h = splitmix64(h ^ splitmix64(field + 1));
  return static_cast<std::uint32_t>(1 + h % (vocab - 1));
}

CtrDataset parse_tsv(std::istream& in, const TsvSchema& schema) {
  if (schema.vocab_size < 2 || schema.vocab_size > (1ULL << 32)) {
    throw Error("TSV schema: vocab_size must be in [2, 2^32]");
  }
  const std::size_t cols = 1 + schema.num_dense + schema.num_sparse;
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(std::move(line));
  }

  std::vector<std::unordered_map<std::string, std::size_t>> counts;
  if (schema.min_token_count > 1) {
    counts.resize(schema.num_sparse);
    for (const auto& line : lines) {
      const auto fields = split_tabs(line);
      if (fields.size() != cols) continue;  // reported in the main pass
      for (std::size_t f = 0; f < schema.num_sparse; ++f) {
        const auto tok = fields[1 + schema.num_dense + f];
        if (!tok.empty()) ++counts[f][std::string(tok)];
      }
    }
  }

  CtrDataset ds;
  ds.num_dense = schema.num_dense;
  ds.vocab_sizes.assign(schema.num_sparse, schema.vocab_size);
  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    const auto fields = split_tabs(lines[ln]);
    const std::string where = "line " + std::to_string(ln + 1);
    if (fields.size() != cols) {
      throw Error(where + ": expected " + std::to_string(cols) + " columns, got " +
                  std::to_string(fields.size()));
    }
    if (fields[0] == "0") {
      ds.labels.push_back(0.0f);
    } else if (fields[0] == "1") {
      ds.labels.push_back(1.0f);
    } else {
      throw Error(where + ": label must be 0 or 1");
    }
    for (std::size_t j = 0; j < schema.num_dense; ++j) {
      const auto tok = fields[1 + j];
      double x = 0.0;
      if (!tok.empty()) {
        std::string s(tok);
        std::size_t used = 0;
        try {
          x = std::stod(s, &used);
        } catch (const std::exception&) {
          used = 0;
        }
        if (used != s.size() || !std::isfinite(x)) {
          throw Error(where + ": bad dense value '" + s + "' in column " + std::to_string(2 + j));
        }
      }
      ds.dense.push_back(static_cast<float>(std::log1p(std::max(x, 0.0))));
    }
    for (std::size_t f = 0; f < schema.num_sparse; ++f) {
      const auto tok = fields[1 + schema.num_dense + f];
      std::uint32_t id = 0;
      if (!tok.empty()) {
        const bool rare = !counts.empty() && counts[f][std::string(tok)] < schema.min_token_count;
        if (!rare) id = hash_token(f, tok, schema.vocab_size);
      }
      ds.ids.push_back(id);
    }
  }
  return ds;
}

CtrDataset load_tsv(const std::filesystem::path& path, const TsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open dataset: " + path.string());
  return parse_tsv(in, schema);
}

DataSplits split(const CtrDataset& ds, const SplitSpec& spec) {
  const std::size_t n = ds.size();
  if (n < 10) throw Error("split: need at least 10 rows");
  if (spec.train <= 0 || spec.val <= 0 || spec.test <= 0 ||
      std::abs(spec.train + spec.val + spec.test - 1.0) > 1e-9) {
    throw Error("split: fractions must be positive and sum to 1");
  }
  const auto n_train = static_cast<std::size_t>(std::llround(spec.train * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::llround(spec.val * static_cast<double>(n)));
  if (n_train == 0 || n_val == 0 || n_train + n_val >= n) throw Error("split: degenerate sizes");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(spec.seed);
  shuffle(perm, rng);
  const std::span<const std::size_t> p(perm);
  return {ds.subset(p.subspan(0, n_train)), ds.subset(p.subspan(n_train, n_val)),
          ds.subset(p.subspan(n_train + n_val))};
}

const char* to_string(PlantedStructure p) {
  return p == PlantedStructure::kLogisticLinear ? "logistic-linear" : "pairwise-interaction";
}

PlantedStructure parse_planted_structure(std::string_view name) {
  if (name == "logistic-linear") return PlantedStructure::kLogisticLinear;
  if (name == "pairwise-interaction") return PlantedStructure::kPairwiseInteraction;
  throw Error("unknown planted structure '" + std::string(name) + "'");
}

CtrDataset synth_generate(const SynthSpec& spec) {
  if (spec.rows == 0 || spec.num_dense == 0 || spec.num_sparse == 0 || spec.vocab < 2) {
    throw Error("synth_generate: rows, field counts and vocab must be positive (vocab >= 2)");
  }
  const bool pairwise = spec.structure == PlantedStructure::kPairwiseInteraction;
  if (pairwise && spec.num_sparse < 2) throw Error("synth_generate: pairwise mode needs 2 fields");
  Rng rng(spec.seed);
  const std::size_t fd = spec.num_dense, fc = spec.num_sparse, k = spec.latent_dim;

  // Planted parameters.
  std::vector<double> dense_w(fd);
  for (auto& w : dense_w) w = 0.5 * standard_normal(rng);
  std::vector<double> field_w;     // linear mode: fc x vocab
  std::vector<double> latent;      // pairwise mode: fc x vocab x k
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  if (pairwise) {
    latent.resize(fc * spec.vocab * k);
    for (auto& v : latent) v = standard_normal(rng) / std::sqrt(static_cast<double>(k));
    std::set<std::pair<std::size_t, std::size_t>> chosen;
    const std::size_t max_pairs = fc * (fc - 1) / 2;
    while (chosen.size() < std::min(spec.planted_pairs, max_pairs)) {
      std::size_t a = uniform_index(rng, fc), b = uniform_index(rng, fc);
      if (a == b) continue;
      chosen.insert({std::min(a, b), std::max(a, b)});
    }
    pairs.assign(chosen.begin(), chosen.end());
  } else {
    field_w.resize(fc * spec.vocab);
    for (auto& w : field_w) w = standard_normal(rng) / std::sqrt(static_cast<double>(fc));
  }

  CtrDataset ds;
  ds.num_dense = fd;
  ds.vocab_sizes.assign(fc, spec.vocab);
  ds.dense.reserve(spec.rows * fd);
  ds.ids.reserve(spec.rows * fc);
  for (std::size_t r = 0; r < spec.rows; ++r) {
    double dense_term = 0.0;
    for (std::size_t j = 0; j < fd; ++j) {
      const double x = std::log1p(std::exp(standard_normal(rng)));
      ds.dense.push_back(static_cast<float>(x));
      dense_term += dense_w[j] * (x - 0.8);
    }
    std::vector<std::uint32_t> row(fc);
    for (std::size_t f = 0; f < fc; ++f) {
      // Skewed popularity: low ids are frequent.
      const double u = uniform_real(rng);
      row[f] = static_cast<std::uint32_t>(
          1 + std::min<std::uint64_t>(spec.vocab - 2,
                                      static_cast<std::uint64_t>(static_cast<double>(spec.vocab - 1) * u * u)));
    }
    ds.ids.insert(ds.ids.end(), row.begin(), row.end());
    double logit = -0.5;
    if (pairwise) {
      double inter = 0.0;
      for (auto [a, b] : pairs) {
        const double* va = &latent[(a * spec.vocab + row[a]) * k];
        const double* vb = &latent[(b * spec.vocab + row[b]) * k];
        for (std::size_t i = 0; i < k; ++i) inter += va[i] * vb[i];
      }
      logit += spec.signal * inter + 0.5 * dense_term;
    } else {
      double lin = dense_term;
      for (std::size_t f = 0; f < fc; ++f) lin += field_w[f * spec.vocab + row[f]];
      logit += spec.signal * lin;
    }
    const double p = sigmoid(logit);
    ds.true_probs.push_back(static_cast<float>(p));
    ds.labels.push_back(uniform_real(rng) < p ? 1.0f : 0.0f);
  }
  return ds;
}

double bayes_logloss(const CtrDataset& ds) {
  if (ds.true_probs.size() != ds.size() || ds.size() == 0) {
    throw Error("bayes_logloss: dataset has no generator probabilities");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const double p = std::clamp<double>(ds.true_probs[i], 1e-7, 1.0 - 1e-7);
    total -= ds.labels[i] > 0.5f ? std::log(p) : std::log(1.0 - p);
  }
  return total / static_cast<double>(ds.size());
}

void save_cache(const std::filesystem::path& path, const CtrDataset& ds) {
  ds.check();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open cache for writing: " + path.string());
  const std::size_t n = ds.size(), fc = ds.num_sparse();
  os.write(kCacheMagic.data(), kCacheMagic.size());
  byteio::put<std::uint32_t>(os, kDatasetCacheVersion);
  byteio::put<std::uint64_t>(os, n);
  byteio::put<std::uint32_t>(os, static_cast<std::uint32_t>(ds.num_dense));
  byteio::put<std::uint32_t>(os, static_cast<std::uint32_t>(fc));
  byteio::put<std::uint8_t>(os, ds.true_probs.empty() ? 0 : 1);
  for (auto v : ds.vocab_sizes) byteio::put<std::uint64_t>(os, v);
  for (float y : ds.labels) byteio::put<float>(os, y);
  for (std::size_t j = 0; j < ds.num_dense; ++j) {
    for (std::size_t r = 0; r < n; ++r) byteio::put<float>(os, ds.dense[r * ds.num_dense + j]);
  }
  for (std::size_t f = 0; f < fc; ++f) {
    for (std::size_t r = 0; r < n; ++r) byteio::put<std::uint32_t>(os, ds.ids[r * fc + f]);
  }
  for (float p : ds.true_probs) byteio::put<float>(os, p);
  if (!os) throw Error("failed writing cache: " + path.string());
}

bool is_cache_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  std::array<char, 8> magic{};
  return is && is.read(magic.data(), magic.size()) && magic == kCacheMagic;
}

CtrDataset load_cache(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open cache: " + path.string());
  std::array<char, 8> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kCacheMagic) {
    throw Error("not a dataset cache: " + path.string());
  }
  const auto version = byteio::get<std::uint32_t>(is);
  if (version != kDatasetCacheVersion) {
    throw Error("unsupported dataset cache version " + std::to_string(version));
  }
  CtrDataset ds;
  const auto n = byteio::get<std::uint64_t>(is);
  ds.num_dense = byteio::get<std::uint32_t>(is);
  const std::size_t fc = byteio::get<std::uint32_t>(is);
  const bool has_probs = byteio::get<std::uint8_t>(is) != 0;
  for (std::size_t f = 0; f < fc; ++f) ds.vocab_sizes.push_back(byteio::get<std::uint64_t>(is));
  ds.labels.resize(n);
  for (auto& y : ds.labels) y = byteio::get<float>(is);
  ds.dense.resize(n * ds.num_dense);
  for (std::size_t j = 0; j < ds.num_dense; ++j) {
    for (std::size_t r = 0; r < n; ++r) ds.dense[r * ds.num_dense + j] = byteio::get<float>(is);
  }
  ds.ids.resize(n * fc);
  for (std::size_t f = 0; f < fc; ++f) {
    for (std::size_t r = 0; r < n; ++r) ds.ids[r * fc + f] = byteio::get<std::uint32_t>(is);
  }
  if (has_probs) {
    ds.true_probs.resize(n);
    for (auto& p : ds.true_probs) p = byteio::get<float>(is);
  }
  ds.check();
  return ds;
}

CtrDataset load_dataset(const std::filesystem::path& path, const TsvSchema& schema) {
  return is_cache_file(path) ? load_cache(path) : load_tsv(path, schema);
}

}  // namespace nasrec
