#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cgda/error.hpp"

namespace cgda {

// Rows are truth, columns are prediction.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_classes)
      : c_(num_classes), counts_(static_cast<std::size_t>(num_classes * num_classes), 0) {
    if (num_classes < 1) throw InvalidArgument("confusion matrix needs >= 1 class");
  }

  int num_classes() const noexcept { return c_; }

  std::int64_t& at(int truth, int pred) {
    return counts_[static_cast<std::size_t>(truth * c_ + pred)];
  }
  std::int64_t at(int truth, int pred) const {
    return counts_[static_cast<std::size_t>(truth * c_ + pred)];
  }

  std::int64_t total() const {
    std::int64_t t = 0;
    for (auto v : counts_) t += v;
    return t;
  }

  std::int64_t truth_count(int c) const {
    std::int64_t t = 0;
    for (int p = 0; p < c_; ++p) t += at(c, p);
    return t;
  }

  std::int64_t predicted_count(int c) const {
    std::int64_t t = 0;
    for (int r = 0; r < c_; ++r) t += at(r, c);
    return t;
  }

  bool operator==(const ConfusionMatrix&) const = default;

 private:
  int c_;
  std::vector<std::int64_t> counts_;
};

inline ConfusionMatrix confusion(std::span<const int> preds, std::span<const int> truths,
                                 int num_classes) {
  if (preds.size() != truths.size()) {
    throw InvalidArgument("confusion: " + std::to_string(preds.size()) + " predictions vs " +
                          std::to_string(truths.size()) + " truths");
  }
  ConfusionMatrix cm(num_classes);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const int t = truths[i], p = preds[i];
    if (t < 0 || t >= num_classes || p < 0 || p >= num_classes) {
      throw InvalidArgument("confusion: class index out of range at position " + std::to_string(i));
    }
    ++cm.at(t, p);
  }
  return cm;
}

struct MetricReport {
  std::vector<std::optional<double>> dice;  // nullopt where 2TP+FP+FN == 0
  double mdice = 0.0;
  double midice = 0.0;
  int minor_class = 0;
  std::optional<double> purity;
};

// Per-class Dice 2TP / (2TP + FP + FN). mdice averages the defined entries.
// The minor class is the class with the fewest (but > 0) truth samples; its
// Dice is midice.
inline MetricReport dice(const ConfusionMatrix& cm) {
  const int c_n = cm.num_classes();
  MetricReport r;
  r.dice.resize(static_cast<std::size_t>(c_n));
  double sum = 0.0;
  int defined = 0;
  std::optional<std::int64_t> minor_count;
  for (int c = 0; c < c_n; ++c) {
    const auto tp = cm.at(c, c);
    const auto fn = cm.truth_count(c) - tp;
    const auto fp = cm.predicted_count(c) - tp;
    const auto denom = 2 * tp + fp + fn;
    if (denom > 0) {
      const double d = 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
      r.dice[static_cast<std::size_t>(c)] = d;
      sum += d;
      ++defined;
    }
    const auto n = cm.truth_count(c);
    if (n > 0 && (!minor_count || n < *minor_count)) {
      minor_count = n;
      r.minor_class = c;
    }
  }
  r.mdice = defined > 0 ? sum / defined : 0.0;
  r.midice = r.dice[static_cast<std::size_t>(r.minor_class)].value_or(0.0);
  return r;
}

struct PurityReport {
  double overall = 0.0;
  // Per class c: purity over the clusters whose majority class is c;
  // nullopt when no cluster has majority c.
  std::vector<std::optional<double>> per_class;
};

// sum_j max_c |cluster_j ∩ class_c| / N. Majority ties go to the lower class.
inline PurityReport purity(std::span<const int> assignment,
                           std::span<const std::optional<int>> truths, int num_classes) {
  if (assignment.size() != truths.size()) {
    throw InvalidArgument("purity: assignment and truth lengths differ");
  }
  std::map<int, std::vector<std::int64_t>> table;
  for (std::size_t i = 0; i < truths.size(); ++i) {
    if (!truths[i]) throw MissingTruth("purity: sample " + std::to_string(i) + " has no ground truth");
    const int t = *truths[i];
    if (t < 0 || t >= num_classes) throw InvalidArgument("purity: class index out of range");
    auto& row = table[assignment[i]];
    if (row.empty()) row.assign(static_cast<std::size_t>(num_classes), 0);
    ++row[static_cast<std::size_t>(t)];
  }
  PurityReport r;
  std::vector<std::int64_t> maj_hits(static_cast<std::size_t>(num_classes), 0);
  std::vector<std::int64_t> maj_sizes(static_cast<std::size_t>(num_classes), 0);
  std::int64_t hits = 0;
  for (const auto& [cluster, row] : table) {
    std::size_t best = 0;
    std::int64_t size = 0;
    for (std::size_t c = 0; c < row.size(); ++c) {
      size += row[c];
      if (row[c] > row[best]) best = c;
    }
    hits += row[best];
    maj_hits[best] += row[best];
    maj_sizes[best] += size;
  }
  r.overall = truths.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(truths.size());
  r.per_class.resize(static_cast<std::size_t>(num_classes));
  for (std::size_t c = 0; c < r.per_class.size(); ++c) {
    if (maj_sizes[c] > 0) {
      r.per_class[c] = static_cast<double>(maj_hits[c]) / static_cast<double>(maj_sizes[c]);
    }
  }
  return r;
}

}  // namespace cgda
