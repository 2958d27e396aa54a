#include <random>

#include <gtest/gtest.h>

#include "gpgraph/hierarchy.hpp"
#include "test_util.hpp"

namespace gpgraph {
namespace {

using testing::random_array;

GroupPartition random_partition(std::size_t n, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> lab(0, n > 1 ? n / 2 : 0);
  std::vector<std::size_t> labels(n);
  for (auto& l : labels) l = lab(rng);
  return GroupPartition::from_labels(labels);
}

TEST(PedGraph, SingleNodeIsOne) {
  InteractionGraph g = ped_graph(Array({1, 3, 2}, 0.5));
  EXPECT_EQ(g.node_count, 1u);
  for (std::size_t t = 0; t < 3; ++t) EXPECT_EQ(g.adjacency.at(t, 0, 0), 1.0);
}

TEST(PedGraph, InverseDistanceWeight) {
  Array obs({2, 1, 2});
  obs.at(1, 0, 0) = 2.0;
  InteractionGraph g = ped_graph(obs);
  EXPECT_EQ(g.weights.at(0, 0, 1), 0.5);
  EXPECT_EQ(g.weights.at(0, 0, 0), 0.0);
  // degree 1.5 on both sides
  EXPECT_NEAR(g.adjacency.at(0, 0, 1), 0.5 / 1.5, 1e-15);
  EXPECT_NEAR(g.adjacency.at(0, 0, 0), 1.0 / 1.5, 1e-15);
}

TEST(PedGraph, CoincidentPositionsHaveZeroWeight) {
  Array obs({2, 2, 2}, 1.0);
  InteractionGraph g = ped_graph(obs);
  EXPECT_EQ(g.weights.at(1, 0, 1), 0.0);
  EXPECT_TRUE(g.adjacency.all_finite());
}

TEST(PedGraph, RandomSymmetricAndFinite) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    InteractionGraph g = ped_graph(random_array({4, 8, 2}, rng, -5, 5));
    EXPECT_TRUE(g.adjacency.all_finite());
    for (std::size_t t = 0; t < 8; ++t)
      for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j) {
          EXPECT_EQ(g.adjacency.at(t, i, j), g.adjacency.at(t, j, i));
          EXPECT_GE(g.adjacency.at(t, i, j), 0.0);
        }
  }
}

TEST(PedGraph, PermutationEquivariant) {
  std::mt19937_64 rng(2);
  Array obs = random_array({5, 4, 2}, rng, -3, 3);
  const std::vector<std::size_t> perm = {4, 2, 0, 1, 3};
  Array po({5, 4, 2});
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t t = 0; t < 4; ++t)
      for (std::size_t c = 0; c < 2; ++c) po.at(i, t, c) = obs.at(perm[i], t, c);
  InteractionGraph a = ped_graph(obs), b = ped_graph(po);
  for (std::size_t t = 0; t < 4; ++t)
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 5; ++j)
        EXPECT_NEAR(b.adjacency.at(t, i, j), a.adjacency.at(t, perm[i], perm[j]), 1e-15);
}

TEST(MemberGraph, AllSingletonsIsDiagonal) {
  std::mt19937_64 rng(3);
  InteractionGraph g = member_graph(ped_graph(random_array({4, 3, 2}, rng)), GroupPartition::singletons(4));
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(g.adjacency.at(t, i, j), i == j ? 1.0 : 0.0);
}

TEST(MemberGraph, OneGroupEqualsPedGraph) {
  std::mt19937_64 rng(4);
  InteractionGraph p = ped_graph(random_array({4, 3, 2}, rng));
  InteractionGraph m = member_graph(p, GroupPartition::single_group(4));
  EXPECT_EQ(m.adjacency, p.adjacency);
  EXPECT_EQ(m.weights, p.weights);
}

TEST(MemberGraph, MasksCrossGroupEdgesOnly) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    InteractionGraph p = ped_graph(random_array({6, 3, 2}, rng, -4, 4));
    GroupPartition part = random_partition(6, rng);
    InteractionGraph m = member_graph(p, part);
    for (std::size_t t = 0; t < 3; ++t)
      for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = 0; j < 6; ++j) {
          const double want = part.same_group(i, j) ? p.weights.at(t, i, j) : 0.0;
          EXPECT_EQ(m.weights.at(t, i, j), want);
          EXPECT_LE(m.weights.at(t, i, j), p.weights.at(t, i, j));
        }
  }
}

TEST(MemberGraph, PartitionSizeMismatch) {
  EXPECT_THROW(member_graph(ped_graph(Array({3, 2, 2})), GroupPartition::singletons(4)),
               PartitionError);
}

TEST(GroupPool, Examples) {
  std::mt19937_64 rng(6);
  Array x = random_array({4, 3, 2}, rng);
  EXPECT_EQ(group_pool(x, GroupPartition::singletons(4)), x);
  Array two({2, 1, 1});
  two[0] = 2.0;
  two[1] = 4.0;
  EXPECT_EQ(group_pool(two, GroupPartition::single_group(2))[0], 3.0);
  EXPECT_EQ(group_pool(x, GroupPartition(4, {{0, 3}, {1}, {2}})).dim(0), 3u);
}

TEST(GroupUnpool, Examples) {
  std::mt19937_64 rng(7);
  Array x = random_array({4, 3, 2}, rng);
  EXPECT_EQ(group_unpool(x, GroupPartition::singletons(4)), x);
  EXPECT_THROW(group_unpool(x, GroupPartition::single_group(4)), PartitionError);
  GroupPartition part(4, {{0, 2}, {1, 3}});
  Array z = random_array({2, 3, 2}, rng);
  Array u = group_unpool(z, part);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t t = 0; t < 3; ++t)
      for (std::size_t c = 0; c < 2; ++c) EXPECT_EQ(u.at(i, t, c), z.at(part.member_of(i), t, c));
}

TEST(PoolAlgebra, ExactOnGroupConstantInputs) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    GroupPartition part = random_partition(7, rng);
    Array x = group_unpool(random_array({part.group_count(), 4, 3}, rng), part);
    EXPECT_EQ(group_unpool(group_pool(x, part), part), x);
  }
}

TEST(PoolAlgebra, Idempotent) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    GroupPartition part = random_partition(8, rng);
    Array x = random_array({8, 4, 3}, rng, -10, 10);
    Array once = group_unpool(group_pool(x, part), part);
    Array twice = group_unpool(group_pool(once, part), part);
    EXPECT_LE(max_abs_diff(once, twice), 1e-12);
  }
}

TEST(PoolAlgebra, NodeCountReduction) {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 100; ++trial) {
    GroupPartition part = random_partition(6, rng);
    const std::size_t k = group_pool(Array({6, 1, 1}), part).dim(0);
    EXPECT_LE(k, 6u);
    EXPECT_EQ(k == 6, part.all_singletons());
  }
}

TEST(GroupGraph, SingleGroupIsOne) {
  std::mt19937_64 rng(11);
  InteractionGraph g = group_graph(random_array({3, 4, 2}, rng), GroupPartition::single_group(3));
  EXPECT_EQ(g.node_count, 1u);
  EXPECT_EQ(g.adjacency, Array({4, 1, 1}, 1.0));
}

TEST(GroupGraph, SingletonsMatchPedGraph) {
  std::mt19937_64 rng(12);
  Array obs = random_array({2, 4, 2}, rng);
  EXPECT_EQ(group_graph(obs, GroupPartition::singletons(2)).adjacency, ped_graph(obs).adjacency);
}

TEST(GroupGraph, ConstructionOracle) {
  std::mt19937_64 rng(13);
  Array obs = random_array({6, 2, 2}, rng, -3, 3);
  GroupPartition part(6, {{0, 1, 2}, {3, 4, 5}});
  InteractionGraph g = group_graph(obs, part);
  ASSERT_EQ(g.node_count, 2u);
  for (std::size_t t = 0; t < 2; ++t) {
    double c[2][2] = {};
    for (std::size_t k = 0; k < 2; ++k)
      for (std::size_t i = 3 * k; i < 3 * k + 3; ++i)
        for (std::size_t d = 0; d < 2; ++d) c[k][d] += obs.at(i, t, d) / 3.0;
    const double w = 1.0 / std::hypot(c[0][0] - c[1][0], c[0][1] - c[1][1]);
    EXPECT_NEAR(g.weights.at(t, 0, 1), w, 1e-12);
    EXPECT_NEAR(g.adjacency.at(t, 0, 1), w / (1 + w), 1e-12);
    EXPECT_NEAR(g.adjacency.at(t, 0, 0), 1 / (1 + w), 1e-12);
  }
}

}  // namespace
}  // namespace gpgraph
