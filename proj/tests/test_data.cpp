#include <algorithm>
#include <array>
#include <map>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "cgda/data.hpp"
#include "cgda/dataset_io.hpp"

using namespace cgda;

namespace {

// Target-only train pool with `per_class[c]` samples of class c, labels
// visible (as a loaded, not-yet-split dataset would have them).
Dataset target_pool(const std::vector<int>& per_class) {
  Dataset ds(static_cast<int>(per_class.size()), 1);
  std::int64_t id = 0;
  for (std::size_t c = 0; c < per_class.size(); ++c) {
    for (int i = 0; i < per_class[c]; ++i) {
      Sample s;
      s.id = id++;
      s.features = Eigen::VectorXd::Constant(1, static_cast<double>(c));
      s.label = static_cast<int>(c);
      s.domain = Domain::Target;
      s.split = Split::Train;
      ds.add(std::move(s));
    }
  }
  return ds;
}

Eigen::VectorXd mean_of(const Dataset& ds, Domain d, int c) {
  EvalView ev(ds);
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(ds.dim());
  int n = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (ds.samples()[i].domain == d && ev.ground_truth(i) == c) {
      sum += ds.samples()[i].features;
      ++n;
    }
  }
  return sum / n;
}

std::string csv(const Dataset& ds) {
  std::ostringstream os;
  write_dataset(os, ds);
  return os.str();
}

}  // namespace

TEST(ParetoCounts, Examples) {
  EXPECT_EQ(pareto_counts(1000, 3, 1.0), (std::vector<int>{1000, 250, 111}));
  EXPECT_EQ(pareto_counts(10, 1, 2.0), (std::vector<int>{10}));
  EXPECT_EQ(pareto_counts(4, 3, 5.0), (std::vector<int>{4, 1, 1}));
  EXPECT_EQ(pareto_counts(600, 3, 1.0), (std::vector<int>{600, 150, 66}));
}

TEST(ParetoCounts, RejectsBadArguments) {
  EXPECT_THROW(pareto_counts(2, 3, 1.0), InvalidArgument);
  EXPECT_THROW(pareto_counts(10, 0, 1.0), InvalidArgument);
  EXPECT_THROW(pareto_counts(10, 3, 0.0), InvalidArgument);
}

TEST(ParetoCounts, NonIncreasingFromNmaxAndAtLeastOne) {
  for (int n_max : {1, 5, 17, 600, 10000}) {
    for (int c = 1; c <= std::min(n_max, 12); ++c) {
      for (double alpha : {0.1, 0.5, 1.0, 2.0, 7.5}) {
        const auto v = pareto_counts(n_max, c, alpha);
        ASSERT_EQ(v.size(), static_cast<std::size_t>(c));
        EXPECT_EQ(v[0], n_max);
        for (std::size_t i = 0; i < v.size(); ++i) {
          EXPECT_GE(v[i], 1);
          if (i > 0) EXPECT_LE(v[i], v[i - 1]);
        }
      }
    }
  }
}

TEST(Synthetic, TargetCountsFollowPareto) {
  SynthConfig cfg;
  const auto ds = generate_synthetic(cfg);
  EvalView ev(ds);
  std::vector<int> src(3, 0), tgt(3, 0);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    auto& v = ds.samples()[i].domain == Domain::Source ? src : tgt;
    ++v[static_cast<std::size_t>(*ev.ground_truth(i))];
  }
  EXPECT_EQ(src, (std::vector<int>{600, 150, 66}));
  EXPECT_EQ(tgt, (std::vector<int>{600, 150, 66}));
}

TEST(Synthetic, SameSeedIsByteIdentical) {
  SynthConfig cfg;
  cfg.seed = 42;
  EXPECT_EQ(csv(generate_synthetic(cfg)), csv(generate_synthetic(cfg)));
  auto other = cfg;
  other.seed = 43;
  EXPECT_NE(csv(generate_synthetic(cfg)), csv(generate_synthetic(other)));
}

TEST(Synthetic, SplitsAreStratifiedPerClassAndDomain) {
  SynthConfig cfg;
  const auto ds = generate_synthetic(cfg);
  EvalView ev(ds);
  // (domain, class) -> counts per split
  std::map<std::pair<int, int>, std::array<int, 3>> n;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& s = ds.samples()[i];
    ++n[{static_cast<int>(s.domain), *ev.ground_truth(i)}][static_cast<std::size_t>(s.split)];
  }
  for (const auto& [key, c] : n) {
    const int total = c[0] + c[1] + c[2];
    const auto expect = cgda::detail::split_sizes(total, cfg.val_fraction, cfg.test_fraction);
    EXPECT_EQ(c[0], expect[0]);
    EXPECT_EQ(c[1], expect[1]);
    EXPECT_EQ(c[2], expect[2]);
  }
}

TEST(Synthetic, ZeroShiftKeepsClassMeans) {
  // With identity shift the two domains share one generative process. The
  // difference of two means of n draws has per-axis std sigma*sqrt(2/n), so a
  // 4 sigma/sqrt(n) bound fails with probability ~0.5% per axis.
  int checks = 0, within4 = 0, within3 = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    SynthConfig cfg;
    cfg.seed = seed;
    cfg.domain_shift = rotation_shift(2, 0.0, 0.0);
    const auto ds = generate_synthetic(cfg);
    const auto counts = pareto_counts(cfg.n_max, cfg.num_classes, cfg.pareto_alpha);
    for (int c = 0; c < cfg.num_classes; ++c) {
      const Eigen::VectorXd d = mean_of(ds, Domain::Source, c) - mean_of(ds, Domain::Target, c);
      const double scale = cfg.noise_sigma / std::sqrt(static_cast<double>(counts[static_cast<std::size_t>(c)]));
      for (Eigen::Index j = 0; j < d.size(); ++j) {
        ++checks;
        within4 += std::abs(d(j)) < 4.0 * scale;
        within3 += std::abs(d(j)) < 3.0 * scale;
      }
    }
  }
  EXPECT_GE(within4, 0.99 * checks);
  EXPECT_GE(within3, 0.95 * checks);
}

TEST(Synthetic, SourceMeansSpacedBySeparation) {
  SynthConfig cfg;
  cfg.class_separation = 6.0;
  EXPECT_NEAR((class_mean(cfg, 1) - class_mean(cfg, 0)).norm(), 6.0, 1e-12);
  EXPECT_NEAR((class_mean(cfg, 2) - class_mean(cfg, 1)).norm(), 6.0, 1e-12);
}

TEST(Synthetic, RejectsDegenerateConfigs) {
  SynthConfig cfg;
  cfg.n_max = 2;
  EXPECT_THROW(generate_synthetic(cfg), InvalidArgument);
  cfg = SynthConfig{};
  cfg.domain_shift.matrix = Eigen::MatrixXd::Zero(2, 2);
  EXPECT_THROW(generate_synthetic(cfg), InvalidArgument);
  cfg = SynthConfig{};
  cfg.noise_sigma = 0.0;
  EXPECT_THROW(generate_synthetic(cfg), InvalidArgument);
}

TEST(SplitTarget, SmallFractionRaisedToOnePerClass) {
  const auto ds = split_target(target_pool({34, 33, 33}), 0.02, 1);
  const auto v = training_view(ds);
  EXPECT_EQ(v.labeled_target.size(), 3u);
  EXPECT_EQ(v.unlabeled_target.size(), 97u);
  std::set<int> classes(v.labeled_target.y.begin(), v.labeled_target.y.end());
  EXPECT_EQ(classes.size(), 3u);
}

TEST(SplitTarget, HalfOfBalancedPoolIsStratified) {
  const auto ds = split_target(target_pool({10, 10}), 0.5, 9);
  const auto v = training_view(ds);
  ASSERT_EQ(v.labeled_target.size(), 10u);
  EXPECT_EQ(std::count(v.labeled_target.y.begin(), v.labeled_target.y.end(), 0), 5);
  EXPECT_EQ(std::count(v.labeled_target.y.begin(), v.labeled_target.y.end(), 1), 5);
}

TEST(SplitTarget, PartitionsTrainPoolAndHidesLabels) {
  SynthConfig cfg;
  const auto raw = generate_synthetic(cfg);
  const auto ds = split_target(raw, 0.02, 5);
  const auto v = training_view(ds);
  std::set<std::int64_t> lab(v.labeled_target.ids.begin(), v.labeled_target.ids.end());
  std::set<std::int64_t> unl(v.unlabeled_target.ids.begin(), v.unlabeled_target.ids.end());
  std::set<std::int64_t> pool;
  for (const auto& s : ds.samples()) {
    if (s.domain == Domain::Target && s.split == Split::Train) pool.insert(s.id);
  }
  for (auto id : lab) EXPECT_EQ(unl.count(id), 0u);
  std::set<std::int64_t> both = lab;
  both.insert(unl.begin(), unl.end());
  EXPECT_EQ(both, pool);

  // Every hidden sample keeps its truth, and none exposes a label.
  EvalView ev(ds);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& s = ds.samples()[i];
    if (unl.count(s.id) && s.domain == Domain::Target) {
      EXPECT_FALSE(s.label.has_value());
      EXPECT_TRUE(ev.stored_truth(i).has_value());
    }
  }
  std::set<int> classes(v.labeled_target.y.begin(), v.labeled_target.y.end());
  EXPECT_EQ(classes.size(), 3u);
  const auto m = static_cast<double>(pool.size());
  EXPECT_EQ(v.labeled_target.size(), std::max<std::size_t>(3, static_cast<std::size_t>(std::lround(0.02 * m))));
}

TEST(SplitTarget, MissingClassIsInfeasible) {
  EXPECT_THROW(split_target(target_pool({5, 0, 5}), 0.5, 1), Infeasible);
}

TEST(SplitTarget, RejectsFractionOutsideUnitInterval) {
  EXPECT_THROW(split_target(target_pool({5, 5}), 0.0, 1), InvalidArgument);
  EXPECT_THROW(split_target(target_pool({5, 5}), 1.0, 1), InvalidArgument);
}

TEST(ClassProportions, Examples) {
  const std::vector<int> a{0, 0, 0, 1, 2};
  const auto p = class_proportions(a, 3);
  EXPECT_DOUBLE_EQ(p.p[0], 0.6);
  EXPECT_DOUBLE_EQ(p.p[1], 0.2);
  EXPECT_DOUBLE_EQ(p.p[2], 0.2);

  const std::vector<int> b{0, 1, 2};
  for (double x : class_proportions(b, 3).p) EXPECT_DOUBLE_EQ(x, 1.0 / 3.0);
}

TEST(ClassProportions, MissingClassNamesIt) {
  const std::vector<int> y{0, 1};
  try {
    class_proportions(y, 3);
    FAIL() << "expected MissingClass";
  } catch (const MissingClass& e) {
    EXPECT_EQ(e.missing_class(), 2);
  }
}

TEST(ClassProportions, SumsToOneAndIgnoresOrder) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<int> y;
    for (int c = 0; c < 4; ++c) y.push_back(c);
    for (int i = 0; i < 30; ++i) y.push_back(static_cast<int>(rng.index(4)));
    const auto p = class_proportions(y, 4);
    EXPECT_NEAR(std::accumulate(p.p.begin(), p.p.end(), 0.0), 1.0, 1e-9);
    rng.shuffle(std::span<int>(y));
    EXPECT_EQ(class_proportions(y, 4).p, p.p);
  }
}

TEST(DatasetInvariants, RejectsInconsistentSamples) {
  Dataset ds(3, 2);
  Sample s;
  s.features = Eigen::VectorXd::Zero(3);
  s.label = 0;
  EXPECT_THROW(ds.add(s), DimensionMismatch);
  s.features = Eigen::VectorXd::Zero(2);
  s.label = 3;
  EXPECT_THROW(ds.add(s), InvalidArgument);
  s.label.reset();
  s.domain = Domain::Source;
  EXPECT_THROW(ds.add(s), InvalidArgument);
  EXPECT_THROW(Dataset(1, 2), InvalidArgument);
}
