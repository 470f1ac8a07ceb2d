#include <gtest/gtest.h>

#include <cmath>

#include "nasrec/network.hpp"
#include "nasrec/sampler.hpp"
#include "test_util.hpp"

namespace nasrec {
namespace {

using testing::random_batch;
using testing::tiny_full_config;

TEST(Network, SubnetInsideSupernetMatchesStandalone) {
  const auto cfg = tiny_full_config();
  Network<float> net(cfg, 7, 0);
  const auto data = random_batch(cfg, 6, 3);
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const auto strategy = static_cast<SamplingStrategy>(trial % 3);
    const Genotype g = sample(strategy, cfg, rng);
    Graph<float> gs(false);
    const auto& shared = gs.value(net.forward(gs, data.view(6), g));
    auto sub = net.extract_subnet(g);
    Graph<float> ga(false);
    const auto& alone = ga.value(sub.forward(ga, data.view(6)));
    ASSERT_EQ(shared.shape(), alone.shape());
    for (std::size_t i = 0; i < shared.size(); ++i) {
      EXPECT_NEAR(shared[i], alone[i], 1e-6) << serialize(g);
    }
  }
}

TEST(Network, UnbalancedDotProductMatchesStandalone) {
  auto cfg = tiny_full_config(2);
  cfg.balanced_dot_product = false;
  Network<double> net(cfg, 5, 0);
  const auto data = random_batch(cfg, 4, 9);
  Rng rng(2);
  for (int trial = 0; trial < 30; ++trial) {
    const Genotype g = sample(SamplingStrategy::kAnyOpAnyConn, cfg, rng);
    Graph<double> gs(false);
    const auto& shared = gs.value(net.forward(gs, data.view(4), g));
    auto sub = net.extract_subnet(g);
    Graph<double> ga(false);
    const auto& alone = ga.value(sub.forward(ga, data.view(4)));
    for (std::size_t i = 0; i < shared.size(); ++i) EXPECT_NEAR(shared[i], alone[i], 1e-12);
  }
}

TEST(Network, ParamCountMatchesStandaloneStore) {
  const auto cfg = tiny_full_config();
  Network<float> net(cfg, 1, 0);
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const Genotype g = sample(SamplingStrategy::kAnyOpAnyConn, cfg, rng);
    auto sub = net.extract_subnet(g);
    std::uint64_t w = 0, b = 0, e = 0;
    for (const auto& p : sub.params()) {
      if (p.kind == ParamKind::kWeight) w += p.value.size();
      else if (p.kind == ParamKind::kEmbedding) e += p.value.size();
      else b += p.value.size();
    }
    const auto pc = param_count(g, cfg, 0);
    EXPECT_EQ(pc.weights_without_bias, w) << serialize(g);
    EXPECT_EQ(pc.weights_with_bias, w + b);
    EXPECT_EQ(pc.embedding_weights, e);
    const auto data = random_batch(cfg, 1, 1);
    Graph<float> graph(false);
    sub.forward(graph, data.view(1));
    EXPECT_EQ(flop_count(g, cfg, 1).total, graph.flops()) << serialize(g);
  }
}

}  // namespace
}  // namespace nasrec
