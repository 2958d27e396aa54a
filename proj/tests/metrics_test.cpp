#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "gpgraph/metrics.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace gpgraph {
namespace {

using testing::random_array;

GroupPartition random_partition(std::size_t n, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> lab(0, n);
  std::vector<std::size_t> labels(n);
  for (auto& l : labels) l = lab(rng);
  return GroupPartition::from_labels(labels);
}

TEST(Ade, Examples) {
  std::mt19937_64 rng(1);
  Array gt = random_array({3, 5, 2}, rng);
  EXPECT_EQ(ade(gt, gt), 0.0);
  Array off = gt;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t t = 0; t < 5; ++t) {
      off.at(i, t, 0) += 0.3;
      off.at(i, t, 1) += 0.4;
    }
  EXPECT_NEAR(ade(off, gt), 0.5, 1e-15);
  EXPECT_THROW(ade(gt, Array({3, 4, 2})), AlignmentError);
}

TEST(Ade, HandExpandedTwoByThree) {
  std::mt19937_64 rng(2);
  Array p = random_array({2, 3, 2}, rng), g = random_array({2, 3, 2}, rng);
  double s = 0.0;
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t t = 0; t < 3; ++t)
      s += std::sqrt(std::pow(p.at(i, t, 0) - g.at(i, t, 0), 2) + std::pow(p.at(i, t, 1) - g.at(i, t, 1), 2));
  EXPECT_NEAR(ade(p, g), s / 6.0, 1e-12);
}

TEST(Fde, Examples) {
  std::mt19937_64 rng(3);
  Array gt = random_array({2, 4, 2}, rng);
  EXPECT_EQ(fde(gt, gt), 0.0);
  Array p = gt;
  p.at(0, 3, 0) += 1.0;
  p.at(1, 3, 1) -= 1.0;
  EXPECT_NEAR(fde(p, gt), 1.0, 1e-15);
  EXPECT_NEAR(ade(p, gt), 0.25, 1e-15);
  Array one = random_array({3, 1, 2}, rng), other = random_array({3, 1, 2}, rng);
  EXPECT_EQ(ade(one, other), fde(one, other));
}

TEST(Col, ParallelTracksDoNotCollide) {
  Array s({1, 2, 5, 2});
  for (std::size_t t = 0; t < 5; ++t) {
    s.at(0, 0, t, 0) = s.at(0, 1, t, 0) = 0.5 * t;
    s.at(0, 1, t, 1) = 1.0;
  }
  EXPECT_EQ(col(s, 0.2), 0.0);
}

TEST(Col, CrossingTracksCollide) {
  Array s({2, 2, 3, 2});
  // sample 0: both pass through the origin at step 1; sample 1: far apart
  s.at(0, 0, 0, 0) = -1; s.at(0, 0, 2, 0) = 1;
  s.at(0, 1, 0, 1) = -1; s.at(0, 1, 2, 1) = 1;
  for (std::size_t t = 0; t < 3; ++t) s.at(1, 1, t, 0) = 10;
  EXPECT_EQ(col(s, 0.2), 50.0);
  EXPECT_EQ(col(Array({3, 1, 4, 2}), 0.2), 0.0);
}

TEST(Col, MatchesExhaustiveScanAndIsMonotone) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    Array s = random_array({4, 3, 5, 2}, rng, 0, 2);
    double expected = 0.0;
    for (std::size_t k = 0; k < 4; ++k) {
      int involved = 0;
      for (std::size_t i = 0; i < 3; ++i) {
        bool hit = false;
        for (std::size_t j = 0; j < 3; ++j)
          for (std::size_t t = 0; t < 5; ++t)
            if (j != i && std::hypot(s.at(k, i, t, 0) - s.at(k, j, t, 0), s.at(k, i, t, 1) - s.at(k, j, t, 1)) < 0.3)
              hit = true;
        involved += hit;
      }
      expected += involved / 3.0;
    }
    EXPECT_NEAR(col(s, 0.3), 100.0 * expected / 4.0, 1e-9);
    double prev = -1;
    for (double th : {0.0, 0.1, 0.2, 0.4, 0.8, 1.6}) {
      const double c = col(s, th);
      EXPECT_GE(c, prev);
      prev = c;
    }
  }
}

TEST(Tcc, Examples) {
  Array gt({1, 4, 2});
  for (std::size_t t = 0; t < 4; ++t) {
    gt.at(0, t, 0) = 0.5 * t;
    gt.at(0, t, 1) = -0.2 * t + 1;
  }
  EXPECT_NEAR(tcc(gt, gt), 1.0, 1e-15);
  Array rev({1, 4, 2});
  for (std::size_t t = 0; t < 4; ++t)
    for (std::size_t c = 0; c < 2; ++c) rev.at(0, t, c) = gt.at(0, 3 - t, c);
  EXPECT_NEAR(tcc(rev, gt), -1.0, 1e-15);
  Array flat({1, 4, 2}, 3.0);
  EXPECT_EQ(tcc(flat, gt), 0.0);
  EXPECT_THROW(tcc(Array({1, 1, 2}), Array({1, 1, 2})), DimensionError);
}

TEST(Tcc, MatchesTextbookPearson) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    Array p = random_array({3, 6, 2}, rng), g = random_array({3, 6, 2}, rng);
    double total = 0.0;
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t c = 0; c < 2; ++c) {
        // single-pass textbook form
        double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
        const double n = 6;
        for (std::size_t t = 0; t < 6; ++t) {
          const double x = p.at(i, t, c), y = g.at(i, t, c);
          sx += x; sy += y; sxx += x * x; syy += y * y; sxy += x * y;
        }
        total += (n * sxy - sx * sy) / std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
      }
    EXPECT_NEAR(tcc(p, g), total / 6.0, 1e-9);
  }
}

TEST(PwScores, Examples) {
  GroupPartition gt(4, {{0, 1, 2}, {3}});
  auto same = pw_scores(gt, gt);
  EXPECT_EQ(same.precision, 1.0);
  EXPECT_EQ(same.recall, 1.0);
  auto single = pw_scores(GroupPartition::singletons(4), gt);
  EXPECT_EQ(single.precision, 1.0);
  EXPECT_EQ(single.recall, 0.0);
  auto split = pw_scores(GroupPartition(4, {{0, 1}, {2}, {3}}), gt);
  EXPECT_EQ(split.precision, 1.0);
  EXPECT_NEAR(split.recall, 1.0 / 3.0, 1e-15);
  EXPECT_THROW(pw_scores(gt, GroupPartition::singletons(5)), AlignmentError);
}

TEST(GmitreScores, Examples) {
  GroupPartition gt(4, {{0, 1, 2}, {3}});
  auto same = gmitre_scores(gt, gt);
  EXPECT_EQ(same.precision, 1.0);
  EXPECT_EQ(same.recall, 1.0);
  auto pair = gmitre_scores(GroupPartition::singletons(2), GroupPartition::single_group(2));
  EXPECT_EQ(pair.recall, 0.0);
  auto split = gmitre_scores(GroupPartition(3, {{0, 1}, {2}}), GroupPartition::single_group(3));
  EXPECT_NEAR(split.recall, 0.5, 1e-15);
  EXPECT_THROW(gmitre_scores(gt, GroupPartition::singletons(3)), AlignmentError);
}

TEST(GroupScores, MatchBruteForceOracles) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + trial % 9;
    GroupPartition p = random_partition(n, rng), g = random_partition(n, rng);
    auto pw = pw_scores(p, g);
    auto pw_ref = oracle::pairwise(p, g);
    EXPECT_NEAR(pw.precision, pw_ref.precision, 1e-9);
    EXPECT_NEAR(pw.recall, pw_ref.recall, 1e-9);
    auto gm = gmitre_scores(p, g);
    auto gm_ref = oracle::group_mitre(p, g);
    EXPECT_NEAR(gm.precision, gm_ref.precision, 1e-9);
    EXPECT_NEAR(gm.recall, gm_ref.recall, 1e-9);
    const bool equal = p == g;
    EXPECT_EQ(equal, pw.precision == 1.0 && pw.recall == 1.0 && gm.precision == 1.0 && gm.recall == 1.0)
        << "trial " << trial;
    for (double v : {pw.precision, pw.recall, gm.precision, gm.recall}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(GroupScores, PermutationInvariant) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 6;
    std::vector<std::size_t> lp(n), lg(n), perm = {3, 0, 5, 1, 4, 2};
    std::uniform_int_distribution<std::size_t> lab(0, 3);
    for (std::size_t i = 0; i < n; ++i) { lp[i] = lab(rng); lg[i] = lab(rng); }
    std::vector<std::size_t> pp(n), pg(n);
    for (std::size_t i = 0; i < n; ++i) { pp[i] = lp[perm[i]]; pg[i] = lg[perm[i]]; }
    auto a = group_scores(GroupPartition::from_labels(lp), GroupPartition::from_labels(lg));
    auto b = group_scores(GroupPartition::from_labels(pp), GroupPartition::from_labels(pg));
    EXPECT_NEAR(a.pw.precision, b.pw.precision, 1e-12);
    EXPECT_NEAR(a.pw.recall, b.pw.recall, 1e-12);
    EXPECT_NEAR(a.gm.precision, b.gm.precision, 1e-12);
    EXPECT_NEAR(a.gm.recall, b.gm.recall, 1e-12);
  }
}

}  // namespace
}  // namespace gpgraph
