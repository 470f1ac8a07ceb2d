#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "nasrec/network.hpp"
#include "nasrec/sampler.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace nasrec {
namespace {

using testing::tiny_full_config;

bool has_rule(const std::vector<Violation>& v, std::size_t block, const std::string& rule) {
  return std::any_of(v.begin(), v.end(),
                     [&](const Violation& x) { return x.block == block && x.rule == rule; });
}

BigInt pow15(std::size_t n) {
  BigInt r = 1;
  for (std::size_t i = 0; i < n; ++i) r *= 15;
  return r;
}

TEST(Preset, OperatorMenus) {
  const auto small = preset("nasrec_small");
  EXPECT_EQ(small.dense_ops.size(), 2u);
  EXPECT_EQ(small.sparse_ops.size(), 1u);
  const auto full = preset("nasrec_full");
  EXPECT_EQ(full.dense_ops.size(), 4u);
  EXPECT_EQ(full.sparse_ops.size(), 2u);
  EXPECT_EQ(small.num_blocks, 7u);
  EXPECT_EQ(full.num_blocks, 7u);
  EXPECT_EQ(full.dense_dims, (std::vector<std::size_t>{32, 64, 128, 256, 512}));
  EXPECT_EQ(full.sparse_dims, (std::vector<std::size_t>{16, 32, 64}));
  EXPECT_THROW(preset("nasrec_medium"), Error);
}

TEST(Config, InvariantsAreChecked) {
  auto cfg = preset("nasrec_full");
  EXPECT_NO_THROW(check_config(cfg));
  auto bad = cfg;
  bad.dense_ops.push_back(OperatorKind::kEmbedFC);
  EXPECT_THROW(check_config(bad), Error);
  bad = cfg;
  bad.dense_dims = {64, 32};
  EXPECT_THROW(check_config(bad), Error);
  bad = cfg;
  bad.num_blocks = 0;
  EXPECT_THROW(check_config(bad), Error);
  bad = cfg;
  bad.sparse_dims.clear();
  EXPECT_THROW(check_config(bad), Error);
}

TEST(Config, JsonOverridesAndRoundTrip) {
  const auto j = nlohmann::json::parse(
      R"({"preset":"nasrec_small","num_blocks":3,"dense_dims":[8,16],"sparse_dims":[2,4],
          "num_dense_features":4,"num_sparse_features":5,"vocab_size":50,"embedding_dim":8})");
  const auto cfg = supernet_config_from_json(j);
  EXPECT_EQ(cfg.num_blocks, 3u);
  EXPECT_EQ(cfg.dense_ops.size(), 2u);
  EXPECT_EQ(cfg.features.vocab_sizes, std::vector<std::uint64_t>(5, 50));
  const auto back = supernet_config_from_json(to_json(cfg));
  EXPECT_EQ(to_json(back), to_json(cfg));
  EXPECT_THROW(supernet_config_from_json(nlohmann::json::parse(R"({"dense_ops":["Conv"]})")), Error);
}

TEST(Validate, EmptyDenseBranch) {
  const auto cfg = tiny_full_config(4);
  auto g = full_supernet_genotype(cfg);
  g.blocks[2].dense_ops.clear();
  const auto v = validate(g, cfg);
  EXPECT_TRUE(has_rule(v, 3, "nonempty-dense-branch"));
  EXPECT_EQ(v.size(), 1u);
}

TEST(Validate, ConnectionToLaterBlock) {
  const auto cfg = tiny_full_config(3);
  auto g = full_supernet_genotype(cfg);
  g.blocks[1].sparse_conns = {0, 2};
  EXPECT_TRUE(has_rule(validate(g, cfg), 2, "conn-order"));
  g.blocks[1].sparse_conns = {0, 3};
  EXPECT_TRUE(has_rule(validate(g, cfg), 2, "conn-order"));
}

TEST(Validate, EveryRule) {
  auto cfg = tiny_full_config(2);
  cfg.allow_project_concat = false;
  Genotype g = full_supernet_genotype(cfg);
  EXPECT_TRUE(validate(g, cfg).empty());

  auto with = [&](auto edit) {
    Genotype x = g;
    edit(x);
    return validate(x, cfg);
  };
  EXPECT_TRUE(has_rule(with([](Genotype& x) { x.blocks.pop_back(); }), 0, "block-count"));
  EXPECT_TRUE(has_rule(with([](Genotype& x) { x.blocks[0].sparse_ops.clear(); }), 1, "nonempty-sparse-branch"));
  EXPECT_TRUE(has_rule(with([](Genotype& x) { x.blocks[0].dense_ops[0].kind = OperatorKind::kAttention; }), 1,
                       "dense-op-menu"));
  EXPECT_TRUE(has_rule(with([](Genotype& x) { x.blocks[0].sparse_ops[0].kind = OperatorKind::kFC; }), 1,
                       "sparse-op-menu"));
  EXPECT_TRUE(has_rule(with([](Genotype& x) { x.blocks[1].dense_ops.push_back(x.blocks[1].dense_ops[0]); }), 2,
                       "duplicate-op"));
  EXPECT_TRUE(has_rule(with([](Genotype& x) { x.blocks[1].dense_ops[0].dim = 5; }), 2, "dense-dim-menu"));
  EXPECT_TRUE(has_rule(with([](Genotype& x) { x.blocks[1].sparse_ops[0].dim = 4; }), 2, "sparse-dim-menu"));
  EXPECT_TRUE(has_rule(with([](Genotype& x) { x.blocks[1].dense_conns.clear(); }), 2, "nonempty-dense-conns"));
  EXPECT_TRUE(has_rule(with([](Genotype& x) { x.blocks[1].sparse_conns.clear(); }), 2, "nonempty-sparse-conns"));
  EXPECT_TRUE(has_rule(with([](Genotype& x) { x.blocks[1].dense_conns = {1, 1}; }), 2, "duplicate-conn"));
  EXPECT_TRUE(has_rule(with([](Genotype& x) { x.blocks[0].project_concat = true; }), 1,
                       "project-concat-disabled"));
  EXPECT_THROW(require_valid(Genotype{}, cfg), Error);
}

TEST(Validate, SampledGenotypesAreValid) {
  const auto cfg = preset("nasrec_full");
  Rng rng(17);
  for (auto s : {SamplingStrategy::kSingleOpSingleConn, SamplingStrategy::kAnyOpAnyConn,
                 SamplingStrategy::kSingleOpAnyConn}) {
    for (int i = 0; i < 10000; ++i) {
      const auto g = sample(s, cfg, rng);
      ASSERT_TRUE(validate(g, cfg).empty()) << serialize(g);
    }
  }
}

TEST(GenotypeJson, RoundTripIsIdentity) {
  const auto cfg = preset("nasrec_full");
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    const auto g = sample(SamplingStrategy::kAnyOpAnyConn, cfg, rng);
    const auto text = serialize(g);
    EXPECT_EQ(parse_genotype(text), g);
    EXPECT_EQ(serialize(parse_genotype(text)), text);
  }
}

TEST(GenotypeJson, Schema) {
  Genotype g;
  g.blocks.push_back({{{OperatorKind::kFC, 32}}, {{OperatorKind::kEmbedFC, 16}}, {0}, {0}, true});
  const auto j = to_json(g);
  EXPECT_EQ(j["version"], kGenotypeSchemaVersion);
  EXPECT_EQ(j["num_blocks"], 1);
  EXPECT_EQ(j["blocks"][0]["dense_ops"][0]["kind"], "FC");
  EXPECT_EQ(j["blocks"][0]["dense_ops"][0]["dim"], 32);
  EXPECT_EQ(j["blocks"][0]["sparse_conns"], nlohmann::json::array({0}));
  EXPECT_EQ(j["blocks"][0]["project_concat"], true);
  EXPECT_THROW(parse_genotype(R"({"version":1,"num_blocks":2,"blocks":[]})"), Error);
  EXPECT_THROW(parse_genotype(R"({"version":9,"num_blocks":0,"blocks":[]})"), Error);
  EXPECT_THROW(parse_genotype("not json"), Error);
}

TEST(Canonicalize, SortsOperatorsAndConnections) {
  Genotype g;
  g.blocks.resize(3);
  g.blocks[2] = {{{OperatorKind::kSum, 8}, {OperatorKind::kFC, 4}},
                 {{OperatorKind::kAttention, 2}, {OperatorKind::kEmbedFC, 3}},
                 {2, 0},
                 {1, 0, 2},
                 false};
  canonicalize(g);
  EXPECT_EQ(g.blocks[2].dense_ops[0].kind, OperatorKind::kFC);
  EXPECT_EQ(g.blocks[2].sparse_ops[0].kind, OperatorKind::kEmbedFC);
  EXPECT_EQ(g.blocks[2].dense_conns, (std::vector<std::size_t>{0, 2}));
  EXPECT_EQ(g.blocks[2].sparse_conns, (std::vector<std::size_t>{0, 1, 2}));
}

TEST(Cardinality, FullOverSmallIsFifteenToTheN) {
  for (std::size_t n = 1; n <= 7; ++n) {
    auto full = preset("nasrec_full");
    auto small = preset("nasrec_small");
    full.num_blocks = small.num_blocks = n;
    EXPECT_EQ(cardinality(full, DimConvention::kPerBranch),
              cardinality(small, DimConvention::kPerBranch) * pow15(n))
        << n;
  }
}

TEST(Cardinality, PerOperatorRatioIsNotFifteenToTheN) {
  auto full = preset("nasrec_full");
  auto small = preset("nasrec_small");
  full.num_blocks = small.num_blocks = 1;
  EXPECT_NE(cardinality(full, DimConvention::kPerOperator),
            cardinality(small, DimConvention::kPerOperator) * 15);
}

TEST(Cardinality, ClosedFormsForOneBlock) {
  auto full = preset("nasrec_full");
  full.num_blocks = 1;
  // (6^4 - 1)(4^2 - 1) * 1 * 1 * 2 and (15 * 5)(3 * 3) * 2
  EXPECT_EQ(cardinality(full, DimConvention::kPerOperator), BigInt(1295 * 15 * 2));
  EXPECT_EQ(cardinality(full, DimConvention::kPerBranch), BigInt(75 * 9 * 2));
}

TEST(Cardinality, OneBlockMatchesBruteForce) {
  for (const char* name : {"nasrec_small", "nasrec_full"}) {
    auto cfg = preset(name);
    cfg.num_blocks = 1;
    for (auto conv : {DimConvention::kPerOperator, DimConvention::kPerBranch}) {
      const auto space = testing::brute_force_space(cfg, conv);
      EXPECT_EQ(BigInt(space.size()), cardinality(cfg, conv)) << name << " " << to_string(conv);
      EnumerationOptions opt;
      opt.dims = conv;
      EXPECT_EQ(enumerate_genotypes(cfg, opt).size(), space.size());
    }
  }
}

TEST(Cardinality, TwoBlocksShrunkenMatchesBruteForce) {
  auto cfg = preset("nasrec_full");
  cfg.num_blocks = 2;
  cfg.dense_ops = {OperatorKind::kFC, OperatorKind::kDotProduct};
  cfg.dense_dims = {4, 8};
  cfg.sparse_dims = {2};
  for (auto conv : {DimConvention::kPerOperator, DimConvention::kPerBranch}) {
    const auto space = testing::brute_force_space(cfg, conv);
    EXPECT_EQ(BigInt(space.size()), cardinality(cfg, conv));
    EnumerationOptions opt;
    opt.dims = conv;
    const auto listed = enumerate_genotypes(cfg, opt);
    std::set<std::string> names;
    for (const auto& g : listed) names.insert(serialize(g));
    EXPECT_EQ(names, space);
  }
}

TEST(Cardinality, SevenBlockFullOrderOfMagnitude) {
  const auto cfg = preset("nasrec_full");
  const auto per_op = cardinality(cfg, DimConvention::kPerOperator);
  const auto per_branch = cardinality(cfg, DimConvention::kPerBranch);
  EXPECT_GT(per_op, per_branch);
  EXPECT_GT(per_branch, BigInt(1) << 64);
}

TEST(Enumerate, SingleOpSpaceAndLimit) {
  auto cfg = preset("nasrec_small");
  cfg.num_blocks = 2;
  cfg.dense_dims = {16};
  cfg.sparse_dims = {8};
  cfg.allow_project_concat = false;
  EnumerationOptions opt;
  opt.single_op_per_branch = true;
  // block 1: 2 ops * 1 conn^2; block 2: 2 ops * 3 conns^2
  EXPECT_EQ(enumerate_genotypes(cfg, opt).size(), 2u * 18u);
  EXPECT_THROW(enumerate_genotypes(cfg, opt, 10), Error);
}

RawFeatureSpec features(std::size_t dense, std::size_t sparse, std::size_t dim) {
  RawFeatureSpec f;
  f.num_dense = dense;
  f.vocab_sizes.assign(sparse, 100);
  f.embedding_dim = dim;
  return f;
}

TEST(ParamCount, SingleFcBlock) {
  auto cfg = preset("nasrec_small");
  cfg.num_blocks = 1;
  cfg.dense_dims = {32};
  cfg.sparse_dims = {4};
  cfg.layer_norm = false;
  cfg.features = features(16, 2, 8);
  Genotype g;
  g.blocks.push_back({{{OperatorKind::kFC, 32}}, {{OperatorKind::kEmbedFC, 4}}, {0}, {0}, false});
  const auto pc = param_count(g, cfg, 0);
  const auto fc = std::find_if(pc.audit.begin(), pc.audit.end(),
                               [](const AuditEntry& e) { return e.layer == "block1.FC"; });
  ASSERT_NE(fc, pc.audit.end());
  EXPECT_EQ(fc->weights, 16u * 32u);
  EXPECT_EQ(fc->biases, 32u);
  EXPECT_EQ(pc.embedding_weights, 2u * 100u * 8u);
}

TEST(ParamCount, TotalsEqualAuditSums) {
  const auto cfg = tiny_full_config();
  Rng rng(9);
  for (int i = 0; i < 50; ++i) {
    const auto g = sample(SamplingStrategy::kAnyOpAnyConn, cfg, rng);
    const auto pc = param_count(g, cfg, 6);
    std::uint64_t w = 0, b = 0, e = 0;
    for (const auto& a : pc.audit) {
      w += a.weights;
      b += a.biases;
      e += a.embeddings;
    }
    EXPECT_EQ(pc.weights_without_bias, w);
    EXPECT_EQ(pc.weights_with_bias, w + b);
    EXPECT_EQ(pc.embedding_weights, e);
    const auto fl = flop_count(g, cfg);
    std::uint64_t f = 0;
    for (const auto& a : fl.audit) f += a.flops;
    EXPECT_EQ(fl.total, f);
  }
}

TEST(ParamCount, CapOnlyChangesEmbeddingRows) {
  const auto cfg = tiny_full_config();
  Rng rng(10);
  const auto g = sample(SamplingStrategy::kAnyOpAnyConn, cfg, rng);
  const auto capped = param_count(g, cfg, 6);
  const auto full = param_count(g, cfg, 0);
  EXPECT_EQ(capped.weights_with_bias, full.weights_with_bias);
  EXPECT_EQ(full.embedding_weights, (7u + 11u + 5u + 9u) * 4u);
  EXPECT_EQ(capped.embedding_weights, (6u + 6u + 5u + 6u) * 4u);
}

TEST(ParamCount, UnbalancedDotProductAtPaperScale) {
  auto cfg = preset("nasrec_full");
  cfg.num_blocks = 1;
  cfg.dense_dims = {512};
  cfg.sparse_dims = {448};
  cfg.balanced_dot_product = false;
  cfg.layer_norm = false;
  cfg.features = features(13, 447, 16);
  Genotype g;
  g.blocks.push_back({{{OperatorKind::kDotProduct, 512}}, {{OperatorKind::kEmbedFC, 448}}, {0}, {0}, false});
  const auto pc = param_count(g, cfg, 0);
  const auto dp = std::find_if(pc.audit.begin(), pc.audit.end(),
                               [](const AuditEntry& e) { return e.layer == "block1.DotProduct"; });
  ASSERT_NE(dp, pc.audit.end());
  // 447 sparse rows plus the dense row.
  const std::uint64_t head = dp->weights - 13u * 16u;
  EXPECT_EQ(head, 448ull * 447 / 2 * 512);
  EXPECT_GT(head, 50000000ull);
}

TEST(FlopCount, SingleFcTenToTwenty) {
  auto cfg = preset("nasrec_small");
  cfg.num_blocks = 1;
  cfg.dense_dims = {20};
  cfg.sparse_dims = {2};
  cfg.layer_norm = false;
  cfg.features = features(10, 2, 4);
  Genotype g;
  g.blocks.push_back({{{OperatorKind::kFC, 20}}, {{OperatorKind::kEmbedFC, 2}}, {0}, {0}, false});
  const auto fl = flop_count(g, cfg);
  const auto fc = std::find_if(fl.audit.begin(), fl.audit.end(),
                               [](const AuditEntry& e) { return e.layer == "block1.FC"; });
  EXPECT_EQ(fc->flops, 400u);
}

TEST(FlopCount, AttentionTerms) {
  auto cfg = preset("nasrec_full");
  cfg.num_blocks = 1;
  cfg.dense_dims = {4};
  cfg.sparse_dims = {3};
  cfg.layer_norm = false;
  cfg.features = features(2, 4, 8);
  Genotype g;
  g.blocks.push_back({{{OperatorKind::kFC, 4}}, {{OperatorKind::kAttention, 3}}, {0}, {0}, false});
  const auto fl = flop_count(g, cfg);
  const auto at = std::find_if(fl.audit.begin(), fl.audit.end(),
                               [](const AuditEntry& e) { return e.layer == "block1.Attention"; });
  // Scores and mixing 2*(4*4*8)*2, softmax 3 per score, row mapping 2*4*3*8.
  EXPECT_EQ(at->flops, 2u * (4 * 4 * 8) * 2 + 3u * 16 + 2u * 4 * 3 * 8);
}

TEST(FlopCount, LinearInBatch) {
  const auto cfg = tiny_full_config();
  Rng rng(12);
  for (int i = 0; i < 20; ++i) {
    const auto g = sample(SamplingStrategy::kAnyOpAnyConn, cfg, rng);
    EXPECT_EQ(flop_count(g, cfg, 2).total, 2 * flop_count(g, cfg, 1).total);
  }
}

TEST(FlopCount, MatchesExecutedKernelsAtBatchThree) {
  const auto cfg = tiny_full_config();
  Network<float> net(cfg, 2, 0);
  const auto data = testing::random_batch(cfg, 3, 1);
  Rng rng(13);
  for (int i = 0; i < 20; ++i) {
    const auto g = sample(SamplingStrategy::kAnyOpAnyConn, cfg, rng);
    auto sub = net.extract_subnet(g);
    Graph<float> graph(false);
    sub.forward(graph, data.view(3));
    EXPECT_EQ(graph.flops(), flop_count(g, cfg, 3).total) << serialize(g);
  }
}

TEST(Network, FullSamplingConsumesEveryOperator) {
  const auto cfg = tiny_full_config();
  Network<float> net(cfg, 2, 0);
  const auto sub = net.extract_subnet(full_supernet_genotype(cfg));
  for (std::size_t b = 1; b <= cfg.num_blocks; ++b) {
    for (const char* op : {"fc", "gating", "sum", "dp", "embedfc", "attention"}) {
      const std::string prefix = "b" + std::to_string(b) + "." + op + ".";
      const bool found = std::any_of(sub.params().begin(), sub.params().end(), [&](const auto& p) {
        return p.name.rfind(prefix, 0) == 0;
      });
      EXPECT_TRUE(found) << prefix;
    }
  }
}

TEST(Network, OneBlockLogitMatchesHandComposition) {
  auto cfg = preset("nasrec_small");
  cfg.num_blocks = 1;
  cfg.dense_dims = {3};
  cfg.sparse_dims = {2};
  cfg.layer_norm = false;
  cfg.allow_project_concat = false;
  cfg.features = features(2, 2, 2);
  cfg.features.vocab_sizes = {3, 3};
  Genotype g;
  g.blocks.push_back({{{OperatorKind::kFC, 3}}, {{OperatorKind::kEmbedFC, 2}}, {0}, {0}, false});
  Network<double> net = Network<float>(cfg, 5, 0).cast<double>().extract_subnet(g);
  const std::vector<float> dense = {0.5f, -1.0f};
  const std::vector<std::uint32_t> ids = {1, 2};
  const std::vector<float> labels = {1.0f};
  Graph<double> graph(false);
  const double logit = graph.value(net.forward(graph, {1, dense, ids, labels}))[0];

  const auto& p = net.params();
  const auto& w = p.get("b1.fc.w0").value;
  const auto& b = p.get("b1.fc.b").value;
  const auto& hw = p.get("head.w").value;
  const auto& hb = p.get("head.b").value;
  double expect = hb[0];
  for (std::size_t j = 0; j < 3; ++j) {
    double z = b[j];
    for (std::size_t k = 0; k < 2; ++k) z += dense[k] * w.at(k, j);
    expect += std::max(z, 0.0) * hw.at(j, 0);
  }
  EXPECT_NEAR(logit, expect, 1e-12);
}

}  // namespace
}  // namespace nasrec
