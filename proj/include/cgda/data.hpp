#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "cgda/error.hpp"
#include "cgda/random.hpp"

namespace cgda {

enum class Domain { Source, Target };
enum class Split { Train, Val, Test };

inline std::string_view to_string(Domain d) {
  return d == Domain::Source ? "source" : "target";
}

inline std::string_view to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "train";
}

// A training-visible sample. Held-out ground truth never lives here; it is
// stored on the Dataset and only reachable through EvalView.
struct Sample {
  std::int64_t id = 0;
  Eigen::VectorXd features;
  std::optional<int> label;
  Domain domain = Domain::Source;
  Split split = Split::Train;

  bool operator==(const Sample& o) const {
    return id == o.id && label == o.label && domain == o.domain &&
           split == o.split && features.size() == o.features.size() &&
           features == o.features;
  }
};

class EvalView;

class Dataset {
 public:
  Dataset(int num_classes, int dim) : num_classes_(num_classes), dim_(dim) {
    if (num_classes < 2) throw InvalidArgument("dataset needs at least 2 classes");
    if (dim < 1) throw InvalidArgument("dataset dimension must be >= 1");
  }

  // Appends a sample. `truth` is held-out ground truth for samples whose
  // label is hidden from training.
  void add(Sample s, std::optional<int> truth = std::nullopt) {
    if (s.features.size() != dim_) {
      throw DimensionMismatch("sample " + std::to_string(s.id) + " has " +
                              std::to_string(s.features.size()) +
                              " features, dataset dimension is " +
                              std::to_string(dim_));
    }
    check_class(s.label, s.id);
    check_class(truth, s.id);
    if (s.domain == Domain::Source && !s.label) {
      throw InvalidArgument("source sample " + std::to_string(s.id) +
                            " has no label");
    }
    samples_.push_back(std::move(s));
    truth_.push_back(truth);
  }

  int num_classes() const noexcept { return num_classes_; }
  int dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return samples_.size(); }
  const std::vector<Sample>& samples() const noexcept { return samples_; }

  bool operator==(const Dataset& o) const {
    return num_classes_ == o.num_classes_ && dim_ == o.dim_ &&
           samples_ == o.samples_ && truth_ == o.truth_;
  }

 private:
  friend class EvalView;

  void check_class(const std::optional<int>& c, std::int64_t id) const {
    if (c && (*c < 0 || *c >= num_classes_)) {
      throw InvalidArgument("sample " + std::to_string(id) + " has class " +
                            std::to_string(*c) + " outside [0, " +
                            std::to_string(num_classes_) + ")");
    }
  }

  int num_classes_;
  int dim_;
  std::vector<Sample> samples_;
  std::vector<std::optional<int>> truth_;
};

// Samples are stored column-wise (dim x n) everywhere in the library.
struct LabeledSet {
  Eigen::MatrixXd x;
  std::vector<int> y;
  std::vector<std::int64_t> ids;

  std::size_t size() const noexcept { return y.size(); }
  bool empty() const noexcept { return y.empty(); }
};

struct UnlabeledSet {
  Eigen::MatrixXd x;
  std::vector<std::int64_t> ids;

  std::size_t size() const noexcept { return ids.size(); }
  bool empty() const noexcept { return ids.empty(); }
};

namespace detail {

inline LabeledSet gather_labeled(const std::vector<const Sample*>& picked,
                                 const std::vector<int>& labels, int dim) {
  LabeledSet out;
  out.x.resize(dim, static_cast<Eigen::Index>(picked.size()));
  for (std::size_t i = 0; i < picked.size(); ++i) {
    out.x.col(static_cast<Eigen::Index>(i)) = picked[i]->features;
    out.ids.push_back(picked[i]->id);
  }
  out.y = labels;
  return out;
}

}  // namespace detail

// Everything the training code is allowed to see: D^s, D^t and D^u built from
// the train split, plus the labeled target validation split, using only the
// visible `label` field.
struct TrainingView {
  int num_classes = 0;
  LabeledSet source;
  LabeledSet labeled_target;
  UnlabeledSet unlabeled_target;
  LabeledSet target_validation;  // may be empty

  int dim() const { return static_cast<int>(source.x.rows()); }
};

inline TrainingView training_view(const Dataset& ds) {
  std::vector<const Sample*> src, tgt_l, tgt_u, tgt_v;
  std::vector<int> src_y, tgt_y, tgt_vy;
  for (const auto& s : ds.samples()) {
    if (s.domain == Domain::Target && s.split == Split::Val && s.label) {
      tgt_v.push_back(&s);
      tgt_vy.push_back(*s.label);
    }
    if (s.split != Split::Train) continue;
    if (s.domain == Domain::Source) {
      src.push_back(&s);
      src_y.push_back(*s.label);
    } else if (s.label) {
      tgt_l.push_back(&s);
      tgt_y.push_back(*s.label);
    } else {
      tgt_u.push_back(&s);
    }
  }
  TrainingView v;
  v.num_classes = ds.num_classes();
  v.source = detail::gather_labeled(src, src_y, ds.dim());
  v.labeled_target = detail::gather_labeled(tgt_l, tgt_y, ds.dim());
  v.target_validation = detail::gather_labeled(tgt_v, tgt_vy, ds.dim());
  v.unlabeled_target.x.resize(ds.dim(), static_cast<Eigen::Index>(tgt_u.size()));
  for (std::size_t i = 0; i < tgt_u.size(); ++i) {
    v.unlabeled_target.x.col(static_cast<Eigen::Index>(i)) = tgt_u[i]->features;
    v.unlabeled_target.ids.push_back(tgt_u[i]->id);
  }
  return v;
}

// Evaluation-only access to ground truth, including labels hidden from
// training. Training entry points never accept this type.
class EvalView {
 public:
  explicit EvalView(const Dataset& ds) : ds_(&ds) {}

  // Label if visible, otherwise the held-out truth.
  std::optional<int> ground_truth(std::size_t i) const {
    const auto& s = ds_->samples_[i];
    return s.label ? s.label : ds_->truth_[i];
  }

  // The raw truth column, as stored.
  const std::optional<int>& stored_truth(std::size_t i) const {
    return ds_->truth_[i];
  }

  // Samples of one domain/split with ground-truth labels. Samples without any
  // known class are skipped.
  LabeledSet labeled(Domain domain, Split split) const {
    std::vector<const Sample*> picked;
    std::vector<int> y;
    for (std::size_t i = 0; i < ds_->samples_.size(); ++i) {
      const auto& s = ds_->samples_[i];
      if (s.domain != domain || s.split != split) continue;
      if (auto t = ground_truth(i)) {
        picked.push_back(&s);
        y.push_back(*t);
      }
    }
    return detail::gather_labeled(picked, y, ds_->dim());
  }

  // Ground truth of the target train pool, ordered as D^t followed by D^u
  // (the same order training_view uses).
  std::vector<std::optional<int>> target_pool_truth() const {
    std::vector<std::optional<int>> labeled, unlabeled;
    for (std::size_t i = 0; i < ds_->samples_.size(); ++i) {
      const auto& s = ds_->samples_[i];
      if (s.domain != Domain::Target || s.split != Split::Train) continue;
      (s.label ? labeled : unlabeled).push_back(ground_truth(i));
    }
    labeled.insert(labeled.end(), unlabeled.begin(), unlabeled.end());
    return labeled;
  }

 private:
  const Dataset* ds_;
};

// Returns a copy of `ds` with the held-out truth of every hidden sample
// replaced by `fn(old_truth)`. Used to demonstrate that training never reads
// that column.
template <typename Fn>
Dataset with_truth_rewritten(const Dataset& ds, Fn fn) {
  EvalView ev(ds);
  Dataset out(ds.num_classes(), ds.dim());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    out.add(ds.samples()[i], fn(ev.stored_truth(i)));
  }
  return out;
}

// --- class imbalance -------------------------------------------------------

// Long-tailed per-class counts: n_max * rank^-(alpha+1), floored at 1.
inline std::vector<int> pareto_counts(int n_max, int num_classes, double alpha) {
  if (num_classes < 1 || n_max < num_classes || !(alpha > 0.0)) {
    throw InvalidArgument("pareto_counts requires n_max >= C >= 1 and alpha > 0");
  }
  std::vector<int> counts(static_cast<std::size_t>(num_classes));
  for (int c = 0; c < num_classes; ++c) {
    const double v = n_max * std::pow(static_cast<double>(c + 1), -(alpha + 1.0));
    // The epsilon absorbs pow() rounding for exact products such as 100/25.
    counts[static_cast<std::size_t>(c)] =
        std::max(1, static_cast<int>(std::floor(v + 1e-9)));
  }
  return counts;
}

// --- synthetic generation --------------------------------------------------

struct DomainShift {
  Eigen::MatrixXd matrix;
  Eigen::VectorXd offset;
};

// Rotation by `degrees` in the plane of the first two axes plus a translation
// of length `offset_norm` along the first axis, the one the class means are
// spaced along, so shifted classes straddle the source decision boundaries.
inline DomainShift rotation_shift(int dim, double degrees, double offset_norm) {
  DomainShift s;
  s.matrix = Eigen::MatrixXd::Identity(dim, dim);
  s.offset = Eigen::VectorXd::Zero(dim);
  if (dim >= 2) {
    const double t = degrees * std::numbers::pi / 180.0;
    s.matrix(0, 0) = std::cos(t);
    s.matrix(0, 1) = -std::sin(t);
    s.matrix(1, 0) = std::sin(t);
    s.matrix(1, 1) = std::cos(t);
  }
  s.offset(0) = offset_norm;
  return s;
}

struct SynthConfig {
  int num_classes = 3;
  int dim = 2;
  int n_max = 600;
  double pareto_alpha = 1.0;
  double class_separation = 4.0;
  double noise_sigma = 1.0;
  DomainShift domain_shift = rotation_shift(2, 30.0, 2.0);
  double val_fraction = 0.1;
  double test_fraction = 0.2;
  std::uint64_t seed = 0;
};

namespace detail {

inline void validate(const SynthConfig& cfg) {
  if (cfg.num_classes < 2) throw InvalidArgument("synthetic config: need C >= 2");
  if (cfg.dim < 1) throw InvalidArgument("synthetic config: need dim >= 1");
  if (cfg.n_max < cfg.num_classes) {
    throw InvalidArgument("synthetic config: n_max must be >= number of classes");
  }
  if (!(cfg.pareto_alpha > 0) || !(cfg.class_separation > 0) ||
      !(cfg.noise_sigma > 0)) {
    throw InvalidArgument(
        "synthetic config: pareto_alpha, class_separation and noise_sigma must be > 0");
  }
  if (cfg.val_fraction < 0 || cfg.test_fraction < 0 ||
      cfg.val_fraction + cfg.test_fraction >= 1.0) {
    throw InvalidArgument("synthetic config: split fractions must leave a train split");
  }
  const auto& m = cfg.domain_shift.matrix;
  if (m.rows() != cfg.dim || m.cols() != cfg.dim ||
      cfg.domain_shift.offset.size() != cfg.dim) {
    throw InvalidArgument("synthetic config: domain shift must be dim x dim plus dim offset");
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const auto& sv = svd.singularValues();
  const double smin = sv(sv.size() - 1);
  if (!(smin > 0) || sv(0) / smin >= 1e6) {
    throw InvalidArgument("synthetic config: domain shift matrix is singular or ill-conditioned");
  }
}

// Splits `n` items into (train, val, test) counts, keeping at least one in
// train.
inline std::array<int, 3> split_sizes(int n, double val_frac, double test_frac) {
  int n_test = static_cast<int>(std::lround(n * test_frac));
  int n_val = static_cast<int>(std::lround(n * val_frac));
  while (n - n_test - n_val < 1) {
    if (n_test > 0) {
      --n_test;
    } else {
      --n_val;
    }
  }
  return {n - n_val - n_test, n_val, n_test};
}

}  // namespace detail

inline Eigen::VectorXd class_mean(const SynthConfig& cfg, int c) {
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(cfg.dim);
  mu(0) = (c - 0.5 * (cfg.num_classes - 1)) * cfg.class_separation;
  return mu;
}

// Isotropic Gaussian classes spaced along the first axis; the target domain
// is the same process pushed through the affine shift. Both domains follow
// pareto_counts. Splits are stratified per (domain, class).
inline Dataset generate_synthetic(const SynthConfig& cfg) {
  detail::validate(cfg);
  const auto counts = pareto_counts(cfg.n_max, cfg.num_classes, cfg.pareto_alpha);
  Rng rng(cfg.seed);
  Dataset ds(cfg.num_classes, cfg.dim);
  std::int64_t next_id = 0;
  for (Domain domain : {Domain::Source, Domain::Target}) {
    for (int c = 0; c < cfg.num_classes; ++c) {
      const int n = counts[static_cast<std::size_t>(c)];
      const Eigen::VectorXd mu = class_mean(cfg, c);
      std::vector<Split> splits;
      const auto sizes = detail::split_sizes(n, cfg.val_fraction, cfg.test_fraction);
      splits.insert(splits.end(), static_cast<std::size_t>(sizes[0]), Split::Train);
      splits.insert(splits.end(), static_cast<std::size_t>(sizes[1]), Split::Val);
      splits.insert(splits.end(), static_cast<std::size_t>(sizes[2]), Split::Test);
      rng.shuffle(std::span<Split>(splits));
      for (int i = 0; i < n; ++i) {
        Eigen::VectorXd x(cfg.dim);
        for (int j = 0; j < cfg.dim; ++j) x(j) = mu(j) + cfg.noise_sigma * rng.normal();
        if (domain == Domain::Target) {
          x = cfg.domain_shift.matrix * x + cfg.domain_shift.offset;
        }
        ds.add(Sample{next_id++, std::move(x), c, domain,
                      splits[static_cast<std::size_t>(i)]});
      }
    }
  }
  return ds;
}

// --- target labeled/unlabeled split -----------------------------------------

// Keeps max(C, round(fraction * m)) target-train labels, stratified with at
// least one per class, and moves every other target-train label into the
// held-out truth column.
inline Dataset split_target(const Dataset& ds, double labeled_fraction,
                            std::uint64_t seed) {
  if (!(labeled_fraction > 0.0) || !(labeled_fraction < 1.0)) {
    throw InvalidArgument("labeled_fraction must lie in (0, 1)");
  }
  const int num_classes = ds.num_classes();
  EvalView ev(ds);
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(num_classes));
  std::size_t m = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& s = ds.samples()[i];
    if (s.domain != Domain::Target || s.split != Split::Train) continue;
    ++m;
    const auto t = ev.ground_truth(i);
    if (!t) throw Infeasible("target train sample " + std::to_string(s.id) +
                             " has no class to split on");
    by_class[static_cast<std::size_t>(*t)].push_back(i);
  }
  if (m == 0) throw Infeasible("target train set is empty");
  for (int c = 0; c < num_classes; ++c) {
    if (by_class[static_cast<std::size_t>(c)].empty()) {
      throw Infeasible("class " + std::to_string(c) + " has no target train samples");
    }
  }

  const auto want = std::max<std::size_t>(
      static_cast<std::size_t>(num_classes),
      static_cast<std::size_t>(std::lround(labeled_fraction * static_cast<double>(m))));
  const std::size_t n_lab = std::min(want, m);

  std::vector<std::size_t> alloc(static_cast<std::size_t>(num_classes));
  std::vector<double> quota(static_cast<std::size_t>(num_classes));
  std::size_t total = 0;
  for (std::size_t c = 0; c < alloc.size(); ++c) {
    quota[c] = static_cast<double>(n_lab) * static_cast<double>(by_class[c].size()) /
               static_cast<double>(m);
    alloc[c] = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(quota[c])));
    total += alloc[c];
  }
  while (total < n_lab) {
    std::size_t best = alloc.size();
    for (std::size_t c = 0; c < alloc.size(); ++c) {
      if (alloc[c] >= by_class[c].size()) continue;
      if (best == alloc.size() || quota[c] - alloc[c] > quota[best] - alloc[best]) best = c;
    }
    ++alloc[best];
    ++total;
  }
  while (total > n_lab) {
    std::size_t best = alloc.size();
    for (std::size_t c = 0; c < alloc.size(); ++c) {
      if (alloc[c] <= 1) continue;
      if (best == alloc.size() || alloc[c] - quota[c] > alloc[best] - quota[best]) best = c;
    }
    if (best == alloc.size()) break;
    --alloc[best];
    --total;
  }

  Rng rng(seed);
  std::vector<bool> keep(ds.size(), true);
  for (std::size_t c = 0; c < alloc.size(); ++c) {
    auto members = by_class[c];
    rng.shuffle(std::span<std::size_t>(members));
    for (std::size_t j = alloc[c]; j < members.size(); ++j) keep[members[j]] = false;
  }

  Dataset out(num_classes, ds.dim());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    Sample s = ds.samples()[i];
    const bool in_pool = s.domain == Domain::Target && s.split == Split::Train;
    if (!in_pool) {
      out.add(std::move(s), ev.stored_truth(i));
    } else if (keep[i]) {
      s.label = ev.ground_truth(i);
      out.add(std::move(s));
    } else {
      const auto t = ev.ground_truth(i);
      s.label.reset();
      out.add(std::move(s), t);
    }
  }
  return out;
}

// --- class proportions ------------------------------------------------------

struct ClassProportions {
  std::vector<double> p;

  double operator[](int c) const { return p[static_cast<std::size_t>(c)]; }
  std::size_t size() const noexcept { return p.size(); }
};

// Class ratio among the labeled target samples.
inline ClassProportions class_proportions(std::span<const int> labels, int num_classes) {
  std::vector<std::size_t> counts(static_cast<std::size_t>(num_classes), 0);
  for (int y : labels) {
    if (y < 0 || y >= num_classes) {
      throw InvalidArgument("label " + std::to_string(y) + " out of range");
    }
    ++counts[static_cast<std::size_t>(y)];
  }
  for (int c = 0; c < num_classes; ++c) {
    if (counts[static_cast<std::size_t>(c)] == 0) throw MissingClass(c);
  }
  ClassProportions out;
  for (auto n : counts) {
    out.p.push_back(static_cast<double>(n) / static_cast<double>(labels.size()));
  }
  return out;
}

}  // namespace cgda
