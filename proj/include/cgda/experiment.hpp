#pragma once

// Experiment drivers shared by the command-line tool and the acceptance
// suite: dataset construction, the S / S+T / adapt methods and the clustering
// ablation.

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "cgda/adapt.hpp"
#include "cgda/config.hpp"
#include "cgda/data.hpp"
#include "cgda/dataset_io.hpp"
#include "cgda/metrics.hpp"
#include "cgda/nn.hpp"
#include "cgda/wsclust.hpp"

namespace cgda {

// Loads `cfg.data` when set, otherwise synthesizes and splits the target.
inline Dataset make_dataset(const RunConfig& cfg) {
  if (!cfg.data.empty()) return load_dataset(cfg.data);
  return split_target(generate_synthetic(cfg.synth()), cfg.labeled_fraction, cfg.split_seed());
}

struct MethodRun {
  std::string method;
  Model model;
  std::vector<double> epoch_losses;   // s and s+t
  std::optional<RunHistory> history;  // adapt
  MetricReport test;
  std::optional<double> minor_purity;  // of the final clustering
  std::optional<Clustering> clustering;
  std::vector<std::int64_t> pool_ids;
  std::vector<std::optional<int>> pool_labels;  // visible labels only
};

namespace detail {

inline std::unordered_map<std::int64_t, std::size_t> index_by_id(const Dataset& ds) {
  std::unordered_map<std::int64_t, std::size_t> m;
  for (std::size_t i = 0; i < ds.size(); ++i) m.emplace(ds.samples()[i].id, i);
  return m;
}

// Ground truth for the given ids; nullopt entries where unknown.
inline std::vector<std::optional<int>> truth_of(const Dataset& ds,
                                                std::span<const std::int64_t> ids) {
  const auto idx = index_by_id(ds);
  const EvalView ev(ds);
  std::vector<std::optional<int>> out;
  out.reserve(ids.size());
  for (auto id : ids) out.push_back(ev.ground_truth(idx.at(id)));
  return out;
}

inline std::optional<PurityReport> try_purity(const Clustering& cl, const Dataset& ds,
                                              std::span<const std::int64_t> ids) {
  try {
    return purity(cl.assignment, truth_of(ds, ids), ds.num_classes());
  } catch (const MissingTruth&) {
    return std::nullopt;
  }
}

// Minority class of a truth vector (fewest nonzero count, lowest index on ties).
inline std::optional<int> minority(std::span<const std::optional<int>> truths, int num_classes) {
  std::vector<std::size_t> n(static_cast<std::size_t>(num_classes), 0);
  for (const auto& t : truths) {
    if (t) ++n[static_cast<std::size_t>(*t)];
  }
  std::optional<int> best;
  for (int c = 0; c < num_classes; ++c) {
    const auto nc = n[static_cast<std::size_t>(c)];
    if (nc > 0 && (!best || nc < n[static_cast<std::size_t>(*best)])) best = c;
  }
  return best;
}

inline std::optional<double> minor_purity(const Clustering& cl, const Dataset& ds,
                                          std::span<const std::int64_t> ids) {
  const auto truths = truth_of(ds, ids);
  const auto minor = minority(truths, ds.num_classes());
  if (!minor) return std::nullopt;
  try {
    // No cluster with a minority majority means the class was absorbed.
    return purity(cl.assignment, truths, ds.num_classes())
        .per_class[static_cast<std::size_t>(*minor)]
        .value_or(0.0);
  } catch (const MissingTruth&) {
    return std::nullopt;
  }
}

}  // namespace detail

inline LabeledSet target_test_set(const Dataset& ds) {
  auto test = EvalView(ds).labeled(Domain::Target, Split::Test);
  if (test.empty()) throw Infeasible("dataset has no labeled target test samples to evaluate on");
  return test;
}

inline MethodRun run_source_only(const RunConfig& cfg, const Dataset& ds) {
  const auto view = training_view(ds);
  auto r = pretrain_source(make_model(cfg.model_shape(ds.dim(), ds.num_classes()), cfg.init_seed()),
                           view.source, cfg.train());
  MethodRun out;
  out.method = "s";
  out.model = std::move(r.model);
  out.epoch_losses = std::move(r.epoch_losses);
  out.test = evaluate(out.model, target_test_set(ds), ds.num_classes());
  return out;
}

// Fine-tunes the S model on D^s ∪ D^t.
inline MethodRun run_s_plus_t(const RunConfig& cfg, const Dataset& ds) {
  const auto view = training_view(ds);
  const auto s = run_source_only(cfg, ds);
  auto r = train_s_plus_t(s.model, view.source, view.labeled_target, cfg.train());
  MethodRun out;
  out.method = "s+t";
  out.model = std::move(r.model);
  out.epoch_losses = std::move(r.epoch_losses);
  out.test = evaluate(out.model, target_test_set(ds), ds.num_classes());
  return out;
}

// Adapts the S model. Round purity is logged as a diagnostic when the
// dataset carries truth for the clustered pool.
inline MethodRun run_adapt(const RunConfig& cfg, const Dataset& ds,
                           WscStage stage = WscStage::Full) {
  const auto view = training_view(ds);
  const auto s = run_source_only(cfg, ds);
  AdaptConfig ac = cfg.adapt();
  ac.stage = stage;
  AdaptHooks hooks;
  hooks.purity = [&ds](const Clustering& cl, std::span<const std::int64_t> ids) -> std::optional<double> {
    if (auto p = detail::try_purity(cl, ds, ids)) return p->overall;
    return std::nullopt;
  };
  auto r = adapt(s.model, view, ac, hooks);
  MethodRun out;
  out.method = "adapt";
  out.model = std::move(r.best);
  out.history = std::move(r.history);
  out.test = evaluate(out.model, target_test_set(ds), ds.num_classes());
  if (auto p = detail::try_purity(r.last_clustering, ds, r.pool_ids)) out.test.purity = p->overall;
  out.minor_purity = detail::minor_purity(r.last_clustering, ds, r.pool_ids);
  out.clustering = std::move(r.last_clustering);
  out.pool_ids = std::move(r.pool_ids);
  out.pool_labels = std::move(r.pool_labels);
  return out;
}

struct StageClustering {
  Clustering clustering;
  std::vector<std::int64_t> pool_ids;
  std::optional<double> purity;
  std::optional<double> minor_purity;
};

// Clusters D^t ∪ D^u in the embedding of the source-trained model with one
// pipeline stage: the first-round clustering adapt would compute.
inline StageClustering cluster_in_source_embedding(const RunConfig& cfg, const Dataset& ds,
                                                   const Model& source_model, WscStage stage) {
  const auto view = training_view(ds);
  const auto m_t = view.labeled_target.size(), m_u = view.unlabeled_target.size();
  Eigen::MatrixXd x(view.dim(), static_cast<Eigen::Index>(m_t + m_u));
  if (m_t > 0) x.leftCols(static_cast<Eigen::Index>(m_t)) = view.labeled_target.x;
  if (m_u > 0) x.rightCols(static_cast<Eigen::Index>(m_u)) = view.unlabeled_target.x;
  std::vector<std::optional<int>> labels(m_t + m_u);
  for (std::size_t i = 0; i < m_t; ++i) labels[i] = view.labeled_target.y[i];
  WscConfig wsc = cfg.wsc();
  wsc.seed = mix_seed(wsc.seed, 1);
  StageClustering out;
  out.clustering = weakly_supervised_clustering(encode(source_model, x), labels,
                                                class_proportions(view.labeled_target.y, view.num_classes),
                                                m_u, wsc, stage);
  out.pool_ids = view.labeled_target.ids;
  out.pool_ids.insert(out.pool_ids.end(), view.unlabeled_target.ids.begin(), view.unlabeled_target.ids.end());
  if (auto p = detail::try_purity(out.clustering, ds, out.pool_ids)) out.purity = p->overall;
  out.minor_purity = detail::minor_purity(out.clustering, ds, out.pool_ids);
  return out;
}

}  // namespace cgda
