#pragma once

// Training loops: source pretraining (baseline S), CE on source + labeled
// target (baseline S+T), and the cluster-guided adaptation loop that
// alternates weakly-supervised clustering of target embeddings with
// CE + lambda * triplet training.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "cgda/data.hpp"
#include "cgda/error.hpp"
#include "cgda/metrics.hpp"
#include "cgda/nn.hpp"
#include "cgda/random.hpp"
#include "cgda/wsclust.hpp"

namespace cgda {

// Seed streams derived from TrainConfig::seed.
namespace stream {
inline constexpr std::uint64_t kPretrain = 11;
inline constexpr std::uint64_t kFineTune = 12;
inline constexpr std::uint64_t kTriplets = 13;
inline constexpr std::uint64_t kValidation = 14;
}  // namespace stream

struct AdaptConfig {
  TrainConfig train;
  WscConfig wsc;
  int max_rounds = 50;
  int patience = 5;
  double val_fraction_of_dt = 0.5;
  WscStage stage = WscStage::Full;
};

inline LabeledSet concat(const LabeledSet& a, const LabeledSet& b) {
  LabeledSet out;
  const auto rows = std::max(a.x.rows(), b.x.rows());
  out.x.resize(rows, a.x.cols() + b.x.cols());
  if (a.x.cols() > 0) out.x.leftCols(a.x.cols()) = a.x;
  if (b.x.cols() > 0) out.x.rightCols(b.x.cols()) = b.x;
  out.y = a.y;
  out.y.insert(out.y.end(), b.y.begin(), b.y.end());
  out.ids = a.ids;
  out.ids.insert(out.ids.end(), b.ids.begin(), b.ids.end());
  return out;
}

inline LabeledSet select(const LabeledSet& s, const std::vector<std::size_t>& idx) {
  LabeledSet out;
  out.x.resize(s.x.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) {
    out.x.col(static_cast<Eigen::Index>(i)) = s.x.col(static_cast<Eigen::Index>(idx[i]));
    out.y.push_back(s.y[idx[i]]);
    out.ids.push_back(s.ids[idx[i]]);
  }
  return out;
}

inline MetricReport evaluate(const Model& m, const LabeledSet& data, int num_classes) {
  const auto preds = predict(m, data.x);
  return dice(confusion(preds, data.y, num_classes));
}

// One pass over `pool` in shuffled mini-batches. `extra(model, grads)` may
// add further gradient terms before each step. Returns the sample-weighted
// mean CE loss.
template <typename Extra>
double train_epoch(Model& m, Sgd& opt, const LabeledSet& pool, int batch_size, Rng& rng,
                   Extra&& extra) {
  if (pool.empty()) throw InvalidArgument("training pool is empty");
  std::vector<std::size_t> order(pool.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(std::span<std::size_t>(order));
  const auto bs = static_cast<std::size_t>(std::max(1, batch_size));
  double total = 0.0;
  for (std::size_t start = 0; start < order.size(); start += bs) {
    const auto end = std::min(order.size(), start + bs);
    Eigen::MatrixXd x(pool.x.rows(), static_cast<Eigen::Index>(end - start));
    std::vector<int> y;
    for (std::size_t i = start; i < end; ++i) {
      x.col(static_cast<Eigen::Index>(i - start)) = pool.x.col(static_cast<Eigen::Index>(order[i]));
      y.push_back(pool.y[order[i]]);
    }
    auto ce = cross_entropy(m, x, y);
    total += ce.loss * static_cast<double>(y.size());
    extra(m, ce.grads);
    opt.step(m, ce.grads);
  }
  return total / static_cast<double>(pool.size());
}

struct TrainResult {
  Model model;
  std::vector<double> epoch_losses;
};

inline TrainResult train_ce(Model m, const LabeledSet& pool, int epochs, const TrainConfig& cfg,
                            std::uint64_t stream_id) {
  Sgd opt(cfg);
  Rng rng(mix_seed(cfg.seed, stream_id));
  TrainResult out;
  for (int e = 0; e < epochs; ++e) {
    out.epoch_losses.push_back(
        train_epoch(m, opt, pool, cfg.batch_size, rng, [](const Model&, Gradients&) {}));
  }
  out.model = std::move(m);
  return out;
}

// Baseline S: CE on D^s for epochs_per_round * pretrain_multiplier epochs.
inline TrainResult pretrain_source(const Model& m, const LabeledSet& source, const TrainConfig& cfg) {
  if (source.empty()) throw InvalidArgument("pretrain_source: D^s is empty");
  return train_ce(m, source, cfg.epochs_per_round * cfg.pretrain_multiplier, cfg,
                  stream::kPretrain);
}

// Baseline S+T: CE over D^s ∪ D^t, continuing from `m`. `epochs` defaults to
// epochs_per_round * pretrain_multiplier.
inline TrainResult train_s_plus_t(const Model& m, const LabeledSet& source,
                                  const LabeledSet& labeled_target, const TrainConfig& cfg,
                                  std::optional<int> epochs = std::nullopt) {
  if (source.empty() || labeled_target.empty()) {
    throw InvalidArgument("train_s_plus_t: both D^s and D^t must be nonempty");
  }
  return train_ce(m, concat(source, labeled_target),
                  epochs.value_or(cfg.epochs_per_round * cfg.pretrain_multiplier), cfg,
                  stream::kFineTune);
}

// --- triplet mining ---------------------------------------------------------

// anchor indexes D^t; positive and negative index D^u.
struct Triplet {
  std::size_t anchor = 0;
  std::size_t positive = 0;
  std::size_t negative = 0;
};

// Samples triplets from a clustering of the pool [D^t..., D^u...]: pool index
// i < m_t is D^t[i], otherwise D^u[i - m_t].
class TripletMiner {
 public:
  TripletMiner(const Clustering& cl, std::size_t m_t, std::size_t m_u) : m_t_(m_t) {
    if (cl.size() != m_t + m_u) throw DimensionMismatch("clustering does not cover D^t ∪ D^u");
    const auto groups = cl.members();
    for (const auto& g : groups) {
      Group grp;
      for (auto i : g) (i < m_t ? grp.labeled : grp.unlabeled).push_back(i);
      grp.offset = by_cluster_.size();
      by_cluster_.insert(by_cluster_.end(), grp.unlabeled.begin(), grp.unlabeled.end());
      groups_.push_back(std::move(grp));
    }
    for (std::size_t j = 0; j < groups_.size(); ++j) {
      const auto& g = groups_[j];
      if (!g.labeled.empty() && !g.unlabeled.empty() && g.unlabeled.size() < m_u) {
        eligible_.push_back(j);
      }
    }
  }

  bool has_eligible() const noexcept { return !eligible_.empty(); }
  std::size_t eligible_count() const noexcept { return eligible_.size(); }

  Triplet draw(Rng& rng) const {
    if (eligible_.empty()) {
      throw NoEligibleCluster("no cluster holds both labeled and unlabeled samples "
                              "with unlabeled samples elsewhere");
    }
    const auto& g = groups_[eligible_[rng.index(eligible_.size())]];
    Triplet t;
    t.anchor = g.labeled[rng.index(g.labeled.size())];
    t.positive = g.unlabeled[rng.index(g.unlabeled.size())] - m_t_;
    auto r = rng.index(by_cluster_.size() - g.unlabeled.size());
    if (r >= g.offset) r += g.unlabeled.size();
    t.negative = by_cluster_[r] - m_t_;
    return t;
  }

 private:
  struct Group {
    std::vector<std::size_t> labeled;
    std::vector<std::size_t> unlabeled;
    std::size_t offset = 0;
  };
  std::size_t m_t_;
  std::vector<Group> groups_;
  std::vector<std::size_t> by_cluster_;  // unlabeled pool indices grouped by cluster
  std::vector<std::size_t> eligible_;
};

inline std::vector<Triplet> mine_triplets(const Clustering& cl, std::size_t m_t, std::size_t m_u,
                                          std::size_t n, Rng& rng) {
  TripletMiner miner(cl, m_t, m_u);
  std::vector<Triplet> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(miner.draw(rng));
  return out;
}

// --- adaptation loop ----------------------------------------------------------

// The labeled data actually trained on and the set used for early stopping.
enum class ValidationSource { TargetSplit, LabeledTarget, SourceHoldout };

inline std::string_view to_string(ValidationSource v) {
  switch (v) {
    case ValidationSource::TargetSplit: return "target-split";
    case ValidationSource::LabeledTarget: return "labeled-target";
    case ValidationSource::SourceHoldout: return "source-holdout";
  }
  return "source-holdout";
}

struct ValidationPlan {
  LabeledSet source_train;
  LabeledSet target_train;
  LabeledSet validation;
  ValidationSource source = ValidationSource::TargetSplit;
};

namespace detail {

// Per class: holds out clamp(round(frac * n_c), lo, n_c - 1) samples.
inline std::pair<LabeledSet, LabeledSet> stratified_holdout(const LabeledSet& s, int num_classes,
                                                            double frac, std::size_t lo,
                                                            Rng& rng) {
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(num_classes));
  for (std::size_t i = 0; i < s.size(); ++i) by_class[static_cast<std::size_t>(s.y[i])].push_back(i);
  std::vector<bool> held(s.size(), false);
  for (auto& members : by_class) {
    if (members.size() < 2) continue;
    auto n_val = static_cast<std::size_t>(std::lround(frac * static_cast<double>(members.size())));
    n_val = std::clamp(n_val, lo, members.size() - 1);
    rng.shuffle(std::span<std::size_t>(members));
    for (std::size_t j = 0; j < n_val; ++j) held[members[j]] = true;
  }
  std::vector<std::size_t> keep, val;
  for (std::size_t i = 0; i < s.size(); ++i) (held[i] ? val : keep).push_back(i);
  return {select(s, keep), select(s, val)};
}

}  // namespace detail

// In order of preference: the dataset's labeled target validation split; a
// stratified val_fraction_of_dt of D^t when every class has >= 2 labeled
// target samples; a stratified 10% of D^s.
inline ValidationPlan plan_validation(const TrainingView& view, const AdaptConfig& cfg) {
  ValidationPlan plan;
  plan.source_train = view.source;
  plan.target_train = view.labeled_target;
  if (!view.target_validation.empty()) {
    plan.validation = view.target_validation;
    plan.source = ValidationSource::TargetSplit;
    return plan;
  }
  Rng rng(mix_seed(cfg.train.seed, stream::kValidation));
  std::vector<std::size_t> counts(static_cast<std::size_t>(view.num_classes), 0);
  for (int y : view.labeled_target.y) ++counts[static_cast<std::size_t>(y)];
  const bool target_ok =
      cfg.val_fraction_of_dt > 0 &&
      std::all_of(counts.begin(), counts.end(), [](std::size_t c) { return c >= 2; });
  if (target_ok) {
    auto [train, val] = detail::stratified_holdout(view.labeled_target, view.num_classes,
                                                   cfg.val_fraction_of_dt, 1, rng);
    plan.target_train = std::move(train);
    plan.validation = std::move(val);
    plan.source = ValidationSource::LabeledTarget;
  } else {
    auto [train, val] = detail::stratified_holdout(view.source, view.num_classes, 0.1, 1, rng);
    plan.source_train = std::move(train);
    plan.validation = std::move(val);
    plan.source = ValidationSource::SourceHoldout;
  }
  return plan;
}

struct RoundRecord {
  int round = 0;
  double loss_ce = 0.0;
  double loss_triplet = 0.0;
  double val_mdice = 0.0;
  double best_val_mdice = 0.0;
  int k = 0;
  bool triplets_used = false;
  std::optional<double> purity;  // diagnostic; needs ground truth
};

struct RunHistory {
  std::vector<RoundRecord> rounds;
  int best_round = 0;
  int stop_round = 0;
  std::string stop_reason;
  ValidationSource validation = ValidationSource::TargetSplit;
};

// Carries the history recorded up to the failing round.
class AdaptError : public Error {
 public:
  AdaptError(const std::string& what, RunHistory history)
      : Error(what), history_(std::move(history)) {}
  const RunHistory& history() const noexcept { return history_; }

 private:
  RunHistory history_;
};

struct AdaptHooks {
  // Replaces the validation mDice (round is 1-based).
  std::function<double(const Model&, int round)> validator;
  // Diagnostic purity of each round's clustering; must not influence training.
  // pool_ids gives the sample id of every clustered point.
  std::function<std::optional<double>(const Clustering&, std::span<const std::int64_t> pool_ids)>
      purity;
};

struct AdaptResult {
  Model best;
  Model last;
  RunHistory history;
  Clustering last_clustering;
  // Clustered pool, D^t (minus any validation holdout) then D^u.
  std::vector<std::int64_t> pool_ids;
  std::vector<std::optional<int>> pool_labels;
};

// Rounds of: embed D^t ∪ D^u, cluster, then epochs_per_round epochs of
// CE(D^s ∪ D^t) + lambda * triplet steps, then validation. Stops after
// `patience` rounds without a strictly better validation mDice, or after
// max_rounds. Returns the best snapshot.
inline AdaptResult adapt(const Model& pretrained, const TrainingView& view, const AdaptConfig& cfg,
                         const AdaptHooks& hooks = {}) {
  if (cfg.patience < 1) throw InvalidArgument("patience must be >= 1");
  if (cfg.max_rounds < 1) throw InvalidArgument("max_rounds must be >= 1");
  if (view.labeled_target.empty()) throw InvalidArgument("adapt: D^t is empty");

  const auto plan = plan_validation(view, cfg);
  const LabeledSet ce_pool = concat(plan.source_train, plan.target_train);
  const auto m_t = plan.target_train.size();
  const auto m_u = view.unlabeled_target.size();
  const auto p = class_proportions(plan.target_train.y, view.num_classes);

  Eigen::MatrixXd pool_x(view.dim(), static_cast<Eigen::Index>(m_t + m_u));
  if (m_t > 0) pool_x.leftCols(static_cast<Eigen::Index>(m_t)) = plan.target_train.x;
  if (m_u > 0) pool_x.rightCols(static_cast<Eigen::Index>(m_u)) = view.unlabeled_target.x;
  std::vector<std::optional<int>> pool_labels(m_t + m_u);
  for (std::size_t i = 0; i < m_t; ++i) pool_labels[i] = plan.target_train.y[i];

  AdaptResult out;
  out.history.validation = plan.source;
  out.pool_ids = plan.target_train.ids;
  out.pool_ids.insert(out.pool_ids.end(), view.unlabeled_target.ids.begin(),
                      view.unlabeled_target.ids.end());
  out.pool_labels = pool_labels;
  Model model = pretrained;
  Sgd opt(cfg.train);
  Rng ce_rng(mix_seed(cfg.train.seed, stream::kFineTune));
  Rng trip_rng(mix_seed(cfg.train.seed, stream::kTriplets));
  std::optional<double> best;
  int since_best = 0;
  out.best = model;

  for (int round = 1; round <= cfg.max_rounds; ++round) {
    RoundRecord rec;
    rec.round = round;
    try {
      WscConfig wsc = cfg.wsc;
      wsc.seed = mix_seed(cfg.wsc.seed, static_cast<std::uint64_t>(round));
      const Eigen::MatrixXd emb = encode(model, pool_x);
      auto cl = weakly_supervised_clustering(emb, pool_labels, p, m_u, wsc, cfg.stage);
      rec.k = cl.k();
      if (hooks.purity) rec.purity = hooks.purity(cl, out.pool_ids);

      const TripletMiner miner(cl, m_t, m_u);
      const bool use_triplets = cfg.train.lambda > 0.0 && miner.has_eligible();
      rec.triplets_used = use_triplets;
      double ce_sum = 0.0, trip_sum = 0.0;
      std::size_t trip_steps = 0;
      const auto n_trip = static_cast<Eigen::Index>(std::max(1, cfg.train.triplets_per_step));
      for (int e = 0; e < cfg.train.epochs_per_round; ++e) {
        ce_sum += train_epoch(model, opt, ce_pool, cfg.train.batch_size, ce_rng,
                              [&](const Model& m, Gradients& g) {
                                if (!use_triplets) return;
                                Eigen::MatrixXd a(view.dim(), n_trip), pos(view.dim(), n_trip),
                                    neg(view.dim(), n_trip);
                                for (Eigen::Index j = 0; j < n_trip; ++j) {
                                  const auto t = miner.draw(trip_rng);
                                  a.col(j) = plan.target_train.x.col(static_cast<Eigen::Index>(t.anchor));
                                  pos.col(j) = view.unlabeled_target.x.col(static_cast<Eigen::Index>(t.positive));
                                  neg.col(j) = view.unlabeled_target.x.col(static_cast<Eigen::Index>(t.negative));
                                }
                                auto tl = triplet_backward(m, a, pos, neg, cfg.train.margin);
                                trip_sum += tl.loss;
                                ++trip_steps;
                                g.add_scaled(tl.grads, cfg.train.lambda);
                              });
      }
      rec.loss_ce = cfg.train.epochs_per_round > 0 ? ce_sum / cfg.train.epochs_per_round : 0.0;
      rec.loss_triplet = trip_steps > 0 ? trip_sum / static_cast<double>(trip_steps) : 0.0;
      rec.val_mdice = hooks.validator ? hooks.validator(model, round)
                                      : evaluate(model, plan.validation, view.num_classes).mdice;
      out.last_clustering = std::move(cl);
    } catch (const Error& e) {
      throw AdaptError("round " + std::to_string(round) + ": " + e.what(), out.history);
    }

    if (!best || rec.val_mdice > *best) {
      best = rec.val_mdice;
      out.best = model;
      out.history.best_round = round;
      since_best = 0;
    } else {
      ++since_best;
    }
    rec.best_val_mdice = *best;
    out.history.rounds.push_back(rec);
    out.history.stop_round = round;
    if (since_best >= cfg.patience) {
      out.history.stop_reason = "patience";
      break;
    }
  }
  if (out.history.stop_reason.empty()) out.history.stop_reason = "max_rounds";
  out.last = std::move(model);
  return out;
}

}  // namespace cgda
