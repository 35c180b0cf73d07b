#pragma once

// Weakly-supervised clustering of target samples: k-means, refinement of
// conflicting clusters with soft-constrained k-means, and splitting of
// clusters that are too large for their labeled class.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <optional>
#include <set>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "cgda/data.hpp"
#include "cgda/error.hpp"
#include "cgda/random.hpp"

namespace cgda {

// Points are columns of a dim x n matrix.
using PointMatrix = Eigen::MatrixXd;

// Per target sample: visible class for D^t members, nullopt for D^u.
using LabelSpan = std::span<const std::optional<int>>;

struct WscConfig {
  int k = 30;
  double must_penalty = 1.0;
  int kmeans_max_iter = 100;
  int kmeans_restarts = 5;
  double tol = 1e-6;
  std::uint64_t seed = 0;
};

struct Clustering {
  std::vector<int> assignment;
  Eigen::MatrixXd centroids;  // dim x k
  // Sum of squared distances to the assigned centroid.
  double objective = 0.0;
  // Filled by proportion_split: clusters whose split attempt could not
  // produce two parts (all members identical).
  std::vector<bool> saturated;

  int k() const noexcept { return static_cast<int>(centroids.cols()); }
  std::size_t size() const noexcept { return assignment.size(); }

  std::vector<std::vector<std::size_t>> members() const {
    std::vector<std::vector<std::size_t>> out(static_cast<std::size_t>(k()));
    for (std::size_t i = 0; i < assignment.size(); ++i) {
      out[static_cast<std::size_t>(assignment[i])].push_back(i);
    }
    return out;
  }
};

struct ClusterStat {
  std::optional<int> labeled_class;  // c-bar; set when all labeled members agree
  std::size_t labeled_count = 0;
  std::size_t unlabeled_count = 0;
  bool conflicting = false;
};

inline std::vector<ClusterStat> cluster_stats(const Clustering& cl, LabelSpan labels) {
  if (labels.size() != cl.size()) throw DimensionMismatch("cluster_stats: label count differs from clustering size");
  std::vector<ClusterStat> out(static_cast<std::size_t>(cl.k()));
  for (std::size_t i = 0; i < cl.assignment.size(); ++i) {
    auto& st = out[static_cast<std::size_t>(cl.assignment[i])];
    const auto& y = labels[i];
    if (!y) {
      ++st.unlabeled_count;
      continue;
    }
    if (st.labeled_count == 0) {
      st.labeled_class = y;
    } else if (st.labeled_class != y) {
      st.conflicting = true;
    }
    ++st.labeled_count;
  }
  for (auto& st : out) {
    if (st.conflicting) st.labeled_class.reset();
  }
  return out;
}

// Must-link and cannot-link pairs over sample indices, each stored as (i, j)
// with i < j.
struct ConstraintSet {
  std::set<std::pair<std::size_t, std::size_t>> must_links;
  std::set<std::pair<std::size_t, std::size_t>> cannot_links;

  bool empty() const noexcept { return must_links.empty() && cannot_links.empty(); }

  static std::pair<std::size_t, std::size_t> ordered(std::size_t a, std::size_t b) {
    return a < b ? std::pair{a, b} : std::pair{b, a};
  }

  void add_must(std::size_t a, std::size_t b) {
    if (a == b) throw InvalidArgument("must-link on a single sample");
    const auto p = ordered(a, b);
    if (cannot_links.count(p)) throw InvalidArgument("pair is already cannot-linked");
    must_links.insert(p);
  }

  void add_cannot(std::size_t a, std::size_t b) {
    if (a == b) throw InvalidArgument("cannot-link on a single sample");
    const auto p = ordered(a, b);
    if (must_links.count(p)) throw InvalidArgument("pair is already must-linked");
    cannot_links.insert(p);
  }
};

namespace detail {

inline double sq_dist(const PointMatrix& pts, Eigen::Index i, const Eigen::MatrixXd& cents,
                      Eigen::Index j) {
  return (pts.col(i) - cents.col(j)).squaredNorm();
}

inline void check_points(const PointMatrix& points, int k) {
  if (k < 1) throw InvalidArgument("k must be >= 1");
  if (points.cols() == 0) throw InvalidArgument("cannot cluster an empty point set");
}

// k-means++ seeding.
inline Eigen::MatrixXd seed_centroids(const PointMatrix& pts, int k, Rng& rng) {
  const auto n = pts.cols();
  Eigen::MatrixXd cents(pts.rows(), k);
  std::vector<double> d2(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  auto pick = static_cast<Eigen::Index>(rng.index(static_cast<std::uint64_t>(n)));
  cents.col(0) = pts.col(pick);
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      auto& d = d2[static_cast<std::size_t>(i)];
      d = std::min(d, sq_dist(pts, i, cents, c - 1));
      total += d;
    }
    if (total > 0.0) {
      double r = rng.uniform() * total;
      pick = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        r -= d2[static_cast<std::size_t>(i)];
        if (r < 0.0) {
          pick = i;
          break;
        }
      }
      // Guard against landing on a zero-weight point through rounding.
      while (d2[static_cast<std::size_t>(pick)] <= 0.0 && pick > 0) --pick;
    } else {
      pick = static_cast<Eigen::Index>(rng.index(static_cast<std::uint64_t>(n)));
    }
    cents.col(c) = pts.col(pick);
  }
  return cents;
}

// Recomputes centroids as member means; empty clusters keep their previous
// position.
inline void update_centroids(const PointMatrix& pts, const std::vector<int>& assign,
                             Eigen::MatrixXd& cents) {
  Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(cents.rows(), cents.cols());
  std::vector<std::size_t> counts(static_cast<std::size_t>(cents.cols()), 0);
  for (std::size_t i = 0; i < assign.size(); ++i) {
    sums.col(assign[i]) += pts.col(static_cast<Eigen::Index>(i));
    ++counts[static_cast<std::size_t>(assign[i])];
  }
  for (Eigen::Index j = 0; j < cents.cols(); ++j) {
    const auto c = counts[static_cast<std::size_t>(j)];
    if (c > 0) cents.col(j) = sums.col(j) / static_cast<double>(c);
  }
}

inline double sq_objective(const PointMatrix& pts, const std::vector<int>& assign,
                           const Eigen::MatrixXd& cents) {
  double obj = 0.0;
  for (std::size_t i = 0; i < assign.size(); ++i) {
    obj += sq_dist(pts, static_cast<Eigen::Index>(i), cents, assign[i]);
  }
  return obj;
}

struct LinkGraph {
  std::vector<std::vector<std::size_t>> must;
  std::vector<std::vector<std::size_t>> cannot;
  std::vector<std::size_t> order;  // constrained points first, then the rest
  std::size_t must_count = 0;

  LinkGraph(std::size_t n, const ConstraintSet& cs) : must(n), cannot(n) {
    auto check = [n](std::size_t i) {
      if (i >= n) throw InvalidArgument("constraint refers to point outside the set");
    };
    for (auto [a, b] : cs.must_links) {
      check(b);
      must[a].push_back(b);
      must[b].push_back(a);
    }
    for (auto [a, b] : cs.cannot_links) {
      check(b);
      cannot[a].push_back(b);
      cannot[b].push_back(a);
    }
    must_count = cs.must_links.size();
    for (std::size_t i = 0; i < n; ++i) {
      if (!must[i].empty() || !cannot[i].empty()) order.push_back(i);
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (must[i].empty() && cannot[i].empty()) order.push_back(i);
    }
  }
};

struct LloydRun {
  std::vector<int> assignment;
  Eigen::MatrixXd centroids;
  double objective = 0.0;            // squared distances only
  double penalized_objective = 0.0;  // plus must_penalty per violated must-link
  std::optional<std::size_t> infeasible_point;
};

// One penalized Lloyd run from the given centroids. Assignment is a
// sequential sweep in `links.order`: each point picks the centroid with the
// least squared distance plus penalty for must-link partners already placed
// elsewhere, skipping centroids that hold a cannot-link partner. Ties go to
// the lowest centroid id.
inline LloydRun lloyd(const PointMatrix& pts, Eigen::MatrixXd cents, const LinkGraph& links,
                      const WscConfig& cfg,
                      const std::function<void(double)>& on_iteration) {
  const auto n = static_cast<std::size_t>(pts.cols());
  const auto k = static_cast<int>(cents.cols());
  LloydRun run;
  std::vector<int> assign(n, -1);
  for (int iter = 0; iter < std::max(1, cfg.kmeans_max_iter); ++iter) {
    std::vector<int> next(n, -1);
    for (std::size_t i : links.order) {
      int best = -1;
      double best_cost = std::numeric_limits<double>::infinity();
      for (int j = 0; j < k; ++j) {
        bool blocked = false;
        for (std::size_t q : links.cannot[i]) {
          if (next[q] == j) {
            blocked = true;
            break;
          }
        }
        if (blocked) continue;
        double cost = sq_dist(pts, static_cast<Eigen::Index>(i), cents, j);
        if (cfg.must_penalty != 0.0) {
          for (std::size_t q : links.must[i]) {
            if (next[q] >= 0 && next[q] != j) cost += cfg.must_penalty;
          }
        }
        if (cost < best_cost) {
          best_cost = cost;
          best = j;
        }
      }
      if (best < 0) {
        run.infeasible_point = i;
        return run;
      }
      next[i] = best;
    }
    const bool unchanged = next == assign;
    assign = std::move(next);
    Eigen::MatrixXd prev = cents;
    update_centroids(pts, assign, cents);
    if (on_iteration) on_iteration(sq_objective(pts, assign, cents));
    if (unchanged) break;
    double shift = 0.0;
    for (int j = 0; j < k; ++j) shift = std::max(shift, (cents.col(j) - prev.col(j)).norm());
    if (shift <= cfg.tol) break;
  }
  run.objective = sq_objective(pts, assign, cents);
  std::size_t violated = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t q : links.must[i]) {
      if (q > i && assign[q] != assign[i]) ++violated;
    }
  }
  run.penalized_objective = run.objective + cfg.must_penalty * static_cast<double>(violated);
  run.assignment = std::move(assign);
  run.centroids = std::move(cents);
  return run;
}

// Drops empty clusters, keeps the relative order of the rest, and recomputes
// every centroid as its member mean.
inline Clustering compact(const PointMatrix& pts, const std::vector<int>& assign, int k) {
  std::vector<int> remap(static_cast<std::size_t>(k), -1);
  for (int a : assign) remap[static_cast<std::size_t>(a)] = 0;
  int next = 0;
  for (auto& r : remap) {
    if (r == 0) r = next++;
  }
  Clustering out;
  out.assignment.resize(assign.size());
  for (std::size_t i = 0; i < assign.size(); ++i) {
    out.assignment[i] = remap[static_cast<std::size_t>(assign[i])];
  }
  out.centroids = Eigen::MatrixXd::Zero(pts.rows(), next);
  update_centroids(pts, out.assignment, out.centroids);
  out.objective = sq_objective(pts, out.assignment, out.centroids);
  return out;
}

inline Clustering from_groups(const PointMatrix& pts,
                              const std::vector<std::vector<std::size_t>>& groups) {
  std::vector<int> assign(static_cast<std::size_t>(pts.cols()), -1);
  int id = 0;
  for (const auto& g : groups) {
    if (g.empty()) continue;
    for (auto i : g) assign[i] = id;
    ++id;
  }
  return compact(pts, assign, id);
}

inline PointMatrix gather(const PointMatrix& pts, const std::vector<std::size_t>& idx) {
  PointMatrix out(pts.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) {
    out.col(static_cast<Eigen::Index>(i)) = pts.col(static_cast<Eigen::Index>(idx[i]));
  }
  return out;
}

inline Clustering constrained_kmeans(const PointMatrix& points, int k,
                                     const ConstraintSet& constraints, const WscConfig& cfg,
                                     const std::function<void(double)>& on_iteration) {
  check_points(points, k);
  const LinkGraph links(static_cast<std::size_t>(points.cols()), constraints);
  Rng rng(cfg.seed);
  std::optional<LloydRun> best;
  std::optional<std::size_t> first_failure;
  for (int r = 0; r < std::max(1, cfg.kmeans_restarts); ++r) {
    auto run = lloyd(points, seed_centroids(points, k, rng), links, cfg, on_iteration);
    if (run.infeasible_point) {
      if (!first_failure) first_failure = run.infeasible_point;
      continue;
    }
    if (!best || run.penalized_objective < best->penalized_objective) best = std::move(run);
  }
  if (!best) throw InfeasibleConstraints(*first_failure);
  return compact(points, best->assignment, k);
}

}  // namespace detail

// Lloyd's algorithm with k-means++ seeding; the best of cfg.kmeans_restarts
// runs by objective. `on_iteration`, if set, sees the objective after every
// update step.
inline Clustering kmeans(const PointMatrix& points, int k, const WscConfig& cfg,
                         const std::function<void(double)>& on_iteration = {}) {
  return detail::constrained_kmeans(points, k, ConstraintSet{}, cfg, on_iteration);
}

// Penalized Lloyd iteration with soft must-links (cost cfg.must_penalty per
// violated link) and hard cannot-links. Restarts are ranked by the penalized
// objective; restarts that hit an infeasible point are discarded.
inline Clustering soft_constrained_kmeans(const PointMatrix& points, int k,
                                          const ConstraintSet& constraints,
                                          const WscConfig& cfg) {
  return detail::constrained_kmeans(points, k, constraints, cfg, {});
}

// Links between labeled members of the same cluster: equal labels give a
// must-link, different labels a cannot-link.
inline ConstraintSet derive_constraints(const Clustering& cl, LabelSpan labels) {
  ConstraintSet cs;
  for (const auto& group : cl.members()) {
    std::vector<std::size_t> labeled;
    for (auto i : group) {
      if (labels[i]) labeled.push_back(i);
    }
    for (std::size_t a = 0; a < labeled.size(); ++a) {
      for (std::size_t b = a + 1; b < labeled.size(); ++b) {
        const auto i = labeled[a], j = labeled[b];
        if (labels[i] == labels[j]) {
          cs.add_must(i, j);
        } else {
          cs.add_cannot(i, j);
        }
      }
    }
  }
  return cs;
}

inline std::vector<int> conflicting_clusters(const Clustering& cl, LabelSpan labels) {
  std::vector<int> out;
  const auto stats = cluster_stats(cl, labels);
  for (std::size_t j = 0; j < stats.size(); ++j) {
    if (stats[j].conflicting) out.push_back(static_cast<int>(j));
  }
  return out;
}

// Number of sub-clusters used when re-clustering a conflicting cluster of
// `size` members out of `total` target samples.
inline int refinement_k(int k_total, std::size_t size, std::size_t total) {
  const auto ratio = static_cast<double>(k_total) * static_cast<double>(size) /
                     static_cast<double>(total);
  return std::max(2, static_cast<int>(std::lround(ratio)));
}

// Re-clusters every conflicting cluster over its own members with
// soft-constrained k-means; the other clusters pass through unchanged.
inline Clustering refine_conflicting(const PointMatrix& points, const Clustering& cl,
                                     LabelSpan labels, const WscConfig& cfg) {
  const auto conflicting = conflicting_clusters(cl, labels);
  if (conflicting.empty()) return cl;
  const auto groups = cl.members();
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t j = 0; j < groups.size(); ++j) {
    const auto& g = groups[j];
    if (!std::binary_search(conflicting.begin(), conflicting.end(), static_cast<int>(j))) {
      out.push_back(g);
      continue;
    }
    std::vector<std::optional<int>> local_labels;
    std::set<int> distinct;
    for (auto i : g) {
      local_labels.push_back(labels[i]);
      if (labels[i]) distinct.insert(*labels[i]);
    }
    Clustering whole;
    whole.assignment.assign(g.size(), 0);
    whole.centroids = Eigen::MatrixXd::Zero(points.rows(), 1);
    const auto cs = derive_constraints(whole, local_labels);
    const auto sub_points = detail::gather(points, g);

    int k_i = refinement_k(cfg.k, g.size(), static_cast<std::size_t>(points.cols()));
    k_i = std::max(k_i, static_cast<int>(distinct.size()));
    k_i = std::min(k_i, static_cast<int>(g.size()));
    WscConfig sub_cfg = cfg;
    sub_cfg.seed = mix_seed(cfg.seed, 0x1000 + j);
    // The sequential sweep can block a point even when k_i covers the label
    // count; with k_i >= labeled count a free centroid always remains.
    std::optional<Clustering> sub;
    while (!sub) {
      try {
        sub = soft_constrained_kmeans(sub_points, k_i, cs, sub_cfg);
      } catch (const InfeasibleConstraints& e) {
        if (k_i >= static_cast<int>(g.size())) {
          throw InfeasibleConstraints(g[e.point()]);
        }
        ++k_i;
      }
    }
    for (const auto& sg : sub->members()) {
      std::vector<std::size_t> mapped;
      for (auto li : sg) mapped.push_back(g[li]);
      out.push_back(std::move(mapped));
    }
  }
  return detail::from_groups(points, out);
}

// True when cluster `st` is too large for its labeled class.
inline bool exceeds_proportion(const ClusterStat& st, const ClassProportions& p,
                               std::size_t m_u) {
  return st.labeled_count > 0 && st.labeled_class &&
         static_cast<double>(m_u) * p[*st.labeled_class] <=
             static_cast<double>(st.unlabeled_count);
}

// Splits, by 2-means, every labeled cluster whose unlabeled count reaches
// m_u * p[c-bar], and keeps splitting the labeled halves until none does.
// Unlabeled halves are never split. `split_count`, if given, receives the
// number of splits performed.
inline Clustering proportion_split(const PointMatrix& points, const Clustering& cl,
                                   LabelSpan labels, const ClassProportions& p,
                                   std::size_t m_u, const WscConfig& cfg,
                                   std::size_t* split_count = nullptr) {
  if (!conflicting_clusters(cl, labels).empty()) {
    throw InvalidArgument("proportion_split requires a clustering without conflicting clusters");
  }
  auto groups = cl.members();
  std::vector<bool> saturated(groups.size(), false);
  std::deque<std::size_t> work;
  auto stat_of = [&](const std::vector<std::size_t>& g) {
    ClusterStat st;
    for (auto i : g) {
      if (labels[i]) {
        st.labeled_class = labels[i];
        ++st.labeled_count;
      } else {
        ++st.unlabeled_count;
      }
    }
    return st;
  };
  for (std::size_t j = 0; j < groups.size(); ++j) work.push_back(j);

  std::size_t splits = 0;
  WscConfig split_cfg = cfg;
  while (!work.empty()) {
    const auto j = work.front();
    work.pop_front();
    const auto& g = groups[j];
    if (g.size() < 2 || saturated[j]) continue;
    if (!exceeds_proportion(stat_of(g), p, m_u)) continue;

    split_cfg.seed = mix_seed(cfg.seed, 0x2000 + splits);
    const auto halves = kmeans(detail::gather(points, g), 2, split_cfg);
    if (halves.k() < 2) {
      saturated[j] = true;
      continue;
    }
    ++splits;
    std::vector<std::size_t> a, b;
    for (std::size_t li = 0; li < g.size(); ++li) {
      (halves.assignment[li] == 0 ? a : b).push_back(g[li]);
    }
    groups[j] = std::move(a);
    groups.push_back(std::move(b));
    saturated.push_back(false);
    for (auto idx : {j, groups.size() - 1}) {
      const auto st = stat_of(groups[idx]);
      if (st.labeled_count >= 1 && groups[idx].size() >= 2) work.push_back(idx);
    }
  }
  if (split_count) *split_count = splits;
  auto out = detail::from_groups(points, groups);
  out.saturated.assign(static_cast<std::size_t>(out.k()), false);
  // from_groups keeps group order (no group is empty), so ids line up.
  for (std::size_t j = 0; j < saturated.size(); ++j) out.saturated[j] = saturated[j];
  return out;
}

enum class WscStage { KMeansOnly, SoftConstrained, Full };

inline std::string_view to_string(WscStage s) {
  switch (s) {
    case WscStage::KMeansOnly: return "KM";
    case WscStage::SoftConstrained: return "SoftConst";
    case WscStage::Full: return "Full";
  }
  return "Full";
}

// k-means(K) -> refine_conflicting -> proportion_split. `stage` stops the
// pipeline early for ablations.
inline Clustering weakly_supervised_clustering(const PointMatrix& points, LabelSpan labels,
                                               const ClassProportions& p, std::size_t m_u,
                                               const WscConfig& cfg,
                                               WscStage stage = WscStage::Full) {
  if (labels.size() != static_cast<std::size_t>(points.cols())) {
    throw DimensionMismatch("label count does not match the number of points");
  }
  auto cl = kmeans(points, cfg.k, cfg);
  if (stage == WscStage::KMeansOnly) return cl;
  cl = refine_conflicting(points, cl, labels, cfg);
  if (stage == WscStage::SoftConstrained) return cl;
  return proportion_split(points, cl, labels, p, m_u, cfg);
}

}  // namespace cgda
