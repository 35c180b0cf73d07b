#include <cmath>
#include <filesystem>
#include <limits>

#include <gtest/gtest.h>

#include "cgda/io.hpp"
#include "cgda/nn.hpp"
#include "cgda/random.hpp"
#include "test_support.hpp"

using namespace cgda;
using cgda::testing::numeric_gradient;
using cgda::testing::relative_error;

namespace {

Model small_model(std::uint64_t seed, int in = 3, int hidden = 5, int embed = 4, int classes = 3) {
  return make_model(ModelShape{in, {hidden}, embed, classes}, seed);
}

// Single linear identity encoder of size d, classifier with zero weights.
Model identity_model(int d, int classes = 2) {
  Model m;
  m.encoder.push_back(DenseLayer{Eigen::MatrixXd::Identity(d, d), Eigen::VectorXd::Zero(d), Activation::Identity});
  m.classifier = DenseLayer{Eigen::MatrixXd::Zero(classes, d), Eigen::VectorXd::Zero(classes), Activation::Identity};
  return m;
}

Eigen::MatrixXd random_matrix(Rng& rng, int rows, int cols) {
  Eigen::MatrixXd x(rows, cols);
  for (int j = 0; j < cols; ++j) {
    for (int i = 0; i < rows; ++i) x(i, j) = rng.normal();
  }
  return x;
}

}  // namespace

TEST(Model, ZeroWeightsEmbedToBias) {
  auto m = small_model(1);
  for (auto& l : m.encoder) {
    l.weight.setZero();
    l.bias.setZero();
  }
  m.encoder.back().bias = Eigen::VectorXd::LinSpaced(4, 1, 4);
  const Eigen::VectorXd e = embed(m, Eigen::VectorXd::Ones(3));
  EXPECT_EQ(e, Eigen::VectorXd::LinSpaced(4, 1, 4));
}

TEST(Model, IdentityEncoderPassesInputThrough) {
  const auto m = identity_model(3);
  const Eigen::Vector3d x(1.5, -2.0, 0.25);
  EXPECT_EQ(embed(m, x), Eigen::VectorXd(x));
}

TEST(Model, BatchEncodingMatchesPerSample) {
  Rng rng(3);
  const auto m = small_model(2);
  const auto x = random_matrix(rng, 3, 6);
  const auto batch = encode(m, x);
  for (int j = 0; j < 6; ++j) {
    EXPECT_LT((batch.col(j) - embed(m, x.col(j))).norm(), 1e-12);
  }
}

TEST(Model, RejectsWrongInputWidth) {
  const auto m = small_model(2);
  EXPECT_THROW(embed(m, Eigen::VectorXd::Ones(2)), DimensionMismatch);
  EXPECT_THROW(make_model(ModelShape{2, {}, 2, 1}, 0), InvalidArgument);
}

TEST(Model, SameSeedSameWeights) {
  EXPECT_TRUE(small_model(9).encoder == small_model(9).encoder);
  EXPECT_FALSE(small_model(9).encoder == small_model(10).encoder);
}

TEST(Classify, ZeroClassifierIsUniform) {
  const auto m = identity_model(2, 4);
  const auto p = classify(m, Eigen::Vector2d(3, -1));
  for (int c = 0; c < 4; ++c) EXPECT_NEAR(p(c), 0.25, 1e-15);
}

TEST(Classify, ShiftInvariantAndStableForLargeLogits) {
  auto m = identity_model(2, 3);
  m.classifier.bias << 1.0, 2.0, 3.0;
  const auto a = classify(m, Eigen::Vector2d(0, 0));
  m.classifier.bias.array() += 1000.0;
  const auto b = classify(m, Eigen::Vector2d(0, 0));
  EXPECT_LT((a - b).norm(), 1e-12);
  EXPECT_TRUE(b.allFinite());
  EXPECT_NEAR(b.sum(), 1.0, 1e-12);

  m.classifier.bias << 20.0, 0.0, 0.0;
  EXPECT_GT(classify(m, Eigen::Vector2d(0, 0))(0), 1.0 - 1e-8);
}

TEST(CrossEntropy, UniformPredictionCostsLogC) {
  const auto m = identity_model(2, 5);
  Eigen::MatrixXd x(2, 3);
  x << 1, 2, 3, 4, 5, 6;
  const std::vector<int> y{0, 3, 4};
  EXPECT_NEAR(cross_entropy(m, x, y).loss, std::log(5.0), 1e-12);
}

TEST(CrossEntropy, GradientMatchesFiniteDifferences) {
  Rng rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    const auto m = small_model(static_cast<std::uint64_t>(trial));
    const auto x = random_matrix(rng, 3, 5);
    std::vector<int> y(5);
    for (auto& c : y) c = static_cast<int>(rng.index(3));
    const auto analytic = cross_entropy(m, x, y).grads.flatten();
    const auto numeric = numeric_gradient(m, [&](const Model& p) { return cross_entropy(p, x, y).loss; });
    EXPECT_LT(relative_error(analytic, numeric), 1e-4) << "trial " << trial;
  }
}

TEST(CrossEntropy, RejectsBadLabels) {
  const auto m = identity_model(2, 2);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Zero(2, 1);
  EXPECT_THROW(cross_entropy(m, x, std::vector<int>{2}), InvalidArgument);
  EXPECT_THROW(cross_entropy(m, x, std::vector<int>{0, 1}), DimensionMismatch);
}

TEST(Triplet, WorkedExamples) {
  const Eigen::Vector2d origin(0, 0), one(1, 0), two(2, 0);
  EXPECT_NEAR(triplet_loss(origin, origin, one, 0.5), 0.0, 1e-12);
  EXPECT_NEAR(triplet_loss(origin, two, one, 0.5), 3.5, 1e-12);
  Rng rng(1);
  for (int i = 0; i < 10; ++i) {
    const Eigen::VectorXd a = random_matrix(rng, 2, 1), p = random_matrix(rng, 2, 1);
    EXPECT_NEAR(triplet_loss(a, p, p, 0.75), 0.75, 1e-12);
  }
  EXPECT_THROW(triplet_loss(origin, origin, Eigen::VectorXd::Zero(3), 1.0), DimensionMismatch);
}

TEST(Triplet, ZeroExactlyWhenMarginIsMet) {
  Rng rng(2);
  for (int i = 0; i < 1000; ++i) {
    const Eigen::VectorXd a = random_matrix(rng, 3, 1), p = random_matrix(rng, 3, 1),
                          n = random_matrix(rng, 3, 1);
    const double l = triplet_loss(a, p, n, 0.5);
    EXPECT_GE(l, 0.0);
    const bool met = (a - p).squaredNorm() + 0.5 <= (a - n).squaredNorm();
    EXPECT_EQ(l <= 1e-12, met || std::abs((a - p).squaredNorm() + 0.5 - (a - n).squaredNorm()) < 1e-12);
  }
}

TEST(Triplet, InactiveTripletHasZeroGradient) {
  const auto m = small_model(4);
  Eigen::VectorXd a = Eigen::VectorXd::Zero(3), p = a, n = a;
  n(0) = 1000.0;
  const auto g = triplet_backward(m, a, p, n, 1.0);
  EXPECT_EQ(g.loss, 0.0);
  EXPECT_EQ(g.grads.flatten().norm(), 0.0);
}

TEST(Triplet, IdentityEncoderAnchorGradient) {
  auto m = identity_model(2);
  const Eigen::Vector2d a(0, 0), p(2, 0), n(0, 0.5);
  // With f = identity, dL/dfa = 2 (fn - fp); the bias gradient collects the
  // sum of the three branch gradients, which cancels.
  const auto g = triplet_backward(m, Eigen::VectorXd(a), Eigen::VectorXd(p), Eigen::VectorXd(n), 1.0);
  EXPECT_NEAR(g.loss, 4.0 - 0.25 + 1.0, 1e-12);
  EXPECT_LT(g.grads.encoder[0].bias.norm(), 1e-12);
  // Weight gradient: ga a^T + gp p^T + gn n^T.
  const Eigen::Vector2d ga = 2.0 * (n - p), gp = 2.0 * (p - a), gn = 2.0 * (a - n);
  const Eigen::Matrix2d expect = ga * a.transpose() + gp * p.transpose() + gn * n.transpose();
  EXPECT_LT((g.grads.encoder[0].weight - expect).norm(), 1e-12);
  EXPECT_EQ(g.grads.classifier.weight.norm(), 0.0);
}

TEST(Triplet, GradientMatchesFiniteDifferences) {
  Rng rng(23);
  for (int trial = 0; trial < 10; ++trial) {
    const auto m = small_model(static_cast<std::uint64_t>(100 + trial));
    const auto a = random_matrix(rng, 3, 4);
    const auto p = random_matrix(rng, 3, 4);
    const auto n = random_matrix(rng, 3, 4);
    const double margin = 5.0;  // keep every triplet active, away from the kink
    const auto analytic = triplet_backward(m, a, p, n, margin).grads.flatten();
    const auto numeric = numeric_gradient(m, [&](const Model& q) {
      return triplet_backward(q, a, p, n, margin).loss;
    });
    EXPECT_LT(relative_error(analytic, numeric), 1e-4) << "trial " << trial;
  }
}

TEST(Triplet, InvariantUnderRigidMotionOfEmbeddings) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::VectorXd a = random_matrix(rng, 3, 1), p = random_matrix(rng, 3, 1),
                          n = random_matrix(rng, 3, 1), t = random_matrix(rng, 3, 1);
    const Eigen::Matrix3d q = Eigen::HouseholderQR<Eigen::Matrix3d>(random_matrix(rng, 3, 3)).householderQ();
    const double base = triplet_loss(a, p, n, 0.5);
    EXPECT_NEAR(triplet_loss(q * a + t, q * p + t, q * n + t, 0.5), base, 1e-9);
  }
}

TEST(Sgd, ZeroGradientLeavesModel) {
  auto m = small_model(1);
  const auto before = m;
  Sgd opt(0.1, 0.9);
  opt.step(m, Gradients::zeros_like(m));
  EXPECT_TRUE(m.encoder == before.encoder);
  EXPECT_TRUE(m.classifier == before.classifier);
}

TEST(Sgd, PlainStepSubtractsGradient) {
  auto m = small_model(1);
  const auto before = m;
  auto g = Gradients::zeros_like(m);
  g.for_each([](auto& a) { a.setConstant(0.5); });
  Sgd opt(1.0, 0.0);
  opt.step(m, g);
  EXPECT_TRUE(m.encoder[0].weight.isApprox((before.encoder[0].weight.array() - 0.5).matrix()));
  EXPECT_TRUE(m.classifier.bias.isApprox((before.classifier.bias.array() - 0.5).matrix()));
}

// Loss 0.5 |p|^2 over all parameters, so the gradient is p itself.
TEST(Sgd, DescendsQuadraticBowl) {
  auto m = small_model(2);
  auto norm = [](const Model& x) {
    Gradients g = Gradients::zeros_like(x);
    for (std::size_t i = 0; i < x.encoder.size(); ++i) {
      g.encoder[i].weight = x.encoder[i].weight;
      g.encoder[i].bias = x.encoder[i].bias;
    }
    g.classifier.weight = x.classifier.weight;
    g.classifier.bias = x.classifier.bias;
    return g;
  };
  Sgd opt(0.1, 0.0);
  for (int step = 0; step < 100; ++step) opt.step(m, norm(m));
  EXPECT_LT(norm(m).flatten().norm(), 1e-3);
}

TEST(Sgd, NonFiniteGradientDiverges) {
  auto m = small_model(1);
  auto g = Gradients::zeros_like(m);
  g.classifier.bias(0) = std::numeric_limits<double>::quiet_NaN();
  Sgd opt(0.1, 0.9);
  EXPECT_THROW(opt.step(m, g), TrainingDiverged);
}

TEST(Checkpoint, RoundTripIsExact) {
  const auto m = small_model(12);
  const auto path = (std::filesystem::temp_directory_path() / "cgda_model.ckpt").string();
  save_model(m, path);
  const auto back = load_model(path);
  EXPECT_TRUE(back.encoder == m.encoder);
  EXPECT_TRUE(back.classifier == m.classifier);
  std::filesystem::remove(path);
}
