#include <algorithm>
#include <numeric>

#include <gtest/gtest.h>

#include "cgda/metrics.hpp"
#include "cgda/random.hpp"

using namespace cgda;

namespace {

ConfusionMatrix from_rows(const std::vector<std::vector<std::int64_t>>& rows) {
  ConfusionMatrix cm(static_cast<int>(rows.size()));
  for (int t = 0; t < cm.num_classes(); ++t) {
    for (int p = 0; p < cm.num_classes(); ++p) {
      cm.at(t, p) = rows[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
    }
  }
  return cm;
}

ConfusionMatrix random_matrix(Rng& rng, int c) {
  ConfusionMatrix cm(c);
  for (int t = 0; t < c; ++t) {
    for (int p = 0; p < c; ++p) cm.at(t, p) = static_cast<std::int64_t>(rng.index(20));
  }
  return cm;
}

}  // namespace

TEST(Confusion, PerfectPredictionsAreDiagonal) {
  const std::vector<int> y{0, 1, 2, 2, 1};
  const auto cm = confusion(y, y, 3);
  EXPECT_EQ(cm.total(), 5);
  for (int t = 0; t < 3; ++t) {
    for (int p = 0; p < 3; ++p) {
      if (t != p) EXPECT_EQ(cm.at(t, p), 0);
    }
  }
  EXPECT_EQ(cm.at(2, 2), 2);
}

TEST(Confusion, SingleMistake) {
  const auto cm = confusion(std::vector<int>{1}, std::vector<int>{0}, 2);
  EXPECT_EQ(cm.at(0, 1), 1);
  EXPECT_EQ(cm.at(0, 0) + cm.at(1, 0) + cm.at(1, 1), 0);
}

TEST(Confusion, OrderInvariant) {
  Rng rng(3);
  std::vector<int> p(50), t(50);
  for (std::size_t i = 0; i < 50; ++i) {
    p[i] = static_cast<int>(rng.index(4));
    t[i] = static_cast<int>(rng.index(4));
  }
  const auto before = confusion(p, t, 4);
  std::vector<std::size_t> order(50);
  std::iota(order.begin(), order.end(), 0u);
  rng.shuffle(std::span<std::size_t>(order));
  std::vector<int> p2, t2;
  for (auto i : order) {
    p2.push_back(p[i]);
    t2.push_back(t[i]);
  }
  EXPECT_TRUE(confusion(p2, t2, 4) == before);
}

TEST(Confusion, RejectsBadInput) {
  EXPECT_THROW(confusion(std::vector<int>{0, 1}, std::vector<int>{0}, 2), InvalidArgument);
  EXPECT_THROW(confusion(std::vector<int>{2}, std::vector<int>{0}, 2), InvalidArgument);
}

TEST(Dice, PerfectPredictions) {
  const std::vector<int> y{0, 1, 1, 2};
  const auto r = dice(confusion(y, y, 3));
  for (const auto& d : r.dice) EXPECT_EQ(d, 1.0);
  EXPECT_EQ(r.mdice, 1.0);
  EXPECT_EQ(r.midice, 1.0);
}

TEST(Dice, WorkedTwoClassExample) {
  const auto r = dice(from_rows({{8, 2}, {4, 6}}));
  EXPECT_NEAR(*r.dice[0], 16.0 / 22.0, 1e-12);
  EXPECT_NEAR(*r.dice[1], 12.0 / 18.0, 1e-12);
  EXPECT_NEAR(r.mdice, (16.0 / 22.0 + 12.0 / 18.0) / 2.0, 1e-12);
  EXPECT_NEAR(r.mdice, 0.6970, 5e-5);
  EXPECT_EQ(r.minor_class, 0);  // tie 10/10 goes to the lower index
}

TEST(Dice, AbsentClassIsExcluded) {
  const auto r = dice(from_rows({{8, 2, 0}, {4, 6, 0}, {0, 0, 0}}));
  EXPECT_FALSE(r.dice[2].has_value());
  EXPECT_NEAR(r.mdice, (16.0 / 22.0 + 12.0 / 18.0) / 2.0, 1e-12);
}

TEST(Dice, MinorClassIsSmallestPresentTruthCount) {
  const auto r = dice(from_rows({{50, 0, 0}, {0, 0, 0}, {3, 0, 2}}));
  EXPECT_EQ(r.minor_class, 2);
  EXPECT_NEAR(r.midice, 4.0 / 7.0, 1e-12);
}

TEST(Dice, EqualsF1) {
  Rng rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    const int c = 2 + static_cast<int>(rng.index(4));
    const auto cm = random_matrix(rng, c);
    const auto r = dice(cm);
    for (int k = 0; k < c; ++k) {
      const double tp = static_cast<double>(cm.at(k, k));
      const double pred = static_cast<double>(cm.predicted_count(k));
      const double truth = static_cast<double>(cm.truth_count(k));
      if (tp == 0.0) continue;
      const double precision = tp / pred, recall = tp / truth;
      const double f1 = 2.0 * precision * recall / (precision + recall);
      EXPECT_NEAR(*r.dice[static_cast<std::size_t>(k)], f1, 1e-12);
    }
    EXPECT_GE(r.mdice, 0.0);
    EXPECT_LE(r.mdice, 1.0);
  }
}

TEST(Dice, InvariantUnderClassRelabeling) {
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const int c = 3 + static_cast<int>(rng.index(3));
    const auto cm = random_matrix(rng, c);
    std::vector<int> perm(static_cast<std::size_t>(c));
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(std::span<int>(perm));
    ConfusionMatrix pm(c);
    for (int t = 0; t < c; ++t) {
      for (int p = 0; p < c; ++p) pm.at(perm[static_cast<std::size_t>(t)], perm[static_cast<std::size_t>(p)]) = cm.at(t, p);
    }
    const auto a = dice(cm), b = dice(pm);
    EXPECT_NEAR(a.mdice, b.mdice, 1e-12);
    for (int k = 0; k < c; ++k) {
      EXPECT_EQ(a.dice[static_cast<std::size_t>(k)], b.dice[static_cast<std::size_t>(perm[static_cast<std::size_t>(k)])]);
    }
    // Ties in truth counts may pick a different minority; the counts agree.
    EXPECT_EQ(cm.truth_count(a.minor_class), pm.truth_count(b.minor_class));
  }
}

TEST(Purity, SingleClassClustersArePure) {
  const std::vector<int> a{0, 0, 1, 1, 2};
  const std::vector<std::optional<int>> t{1, 1, 0, 0, 1};
  const auto r = purity(a, t, 2);
  EXPECT_EQ(r.overall, 1.0);
  EXPECT_EQ(r.per_class[0], 1.0);
  EXPECT_EQ(r.per_class[1], 1.0);
}

TEST(Purity, OneMixedCluster) {
  const std::vector<int> a{0, 0, 0};
  const std::vector<std::optional<int>> t{0, 0, 1};
  const auto r = purity(a, t, 2);
  EXPECT_NEAR(r.overall, 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(*r.per_class[0], 2.0 / 3.0, 1e-12);
  EXPECT_FALSE(r.per_class[1].has_value());
}

TEST(Purity, OneClusterEqualsMaxClassFrequency) {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 10 + rng.index(50);
    std::vector<std::optional<int>> t(n);
    std::vector<int> counts(4, 0);
    for (auto& v : t) {
      v = static_cast<int>(rng.index(4));
      ++counts[static_cast<std::size_t>(*v)];
    }
    const auto r = purity(std::vector<int>(n, 0), t, 4);
    EXPECT_NEAR(r.overall, static_cast<double>(*std::max_element(counts.begin(), counts.end())) / n, 1e-12);
  }
}

TEST(Purity, InvariantUnderClusterRelabeling) {
  Rng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<int> a(40);
    std::vector<std::optional<int>> t(40);
    for (std::size_t i = 0; i < 40; ++i) {
      a[i] = static_cast<int>(rng.index(6));
      t[i] = static_cast<int>(rng.index(3));
    }
    std::vector<int> relabel{5, 3, 0, 1, 4, 2};
    std::vector<int> b;
    for (int v : a) b.push_back(100 + relabel[static_cast<std::size_t>(v)]);
    const auto ra = purity(a, t, 3), rb = purity(b, t, 3);
    EXPECT_DOUBLE_EQ(ra.overall, rb.overall);
    EXPECT_EQ(ra.per_class, rb.per_class);
    EXPECT_GE(ra.overall, 0.0);
    EXPECT_LE(ra.overall, 1.0);
  }
}

TEST(Purity, MissingTruthIsAnError) {
  const std::vector<int> a{0, 1};
  const std::vector<std::optional<int>> t{0, std::nullopt};
  EXPECT_THROW(purity(a, t, 2), MissingTruth);
  EXPECT_THROW(purity(std::vector<int>{0}, t, 2), InvalidArgument);
}
