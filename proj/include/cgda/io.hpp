#pragma once

// JSON/CSV serialization for checkpoints, run histories, metric reports and
// clusterings.

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "cgda/adapt.hpp"
#include "cgda/dataset_io.hpp"
#include "cgda/error.hpp"
#include "cgda/metrics.hpp"
#include "cgda/nn.hpp"
#include "cgda/wsclust.hpp"

namespace cgda {

using Json = nlohmann::ordered_json;

inline constexpr int kCheckpointVersion = 1;

// --- model checkpoint -------------------------------------------------------

namespace detail {

inline Json layer_to_json(const DenseLayer& l) {
  Json j;
  j["rows"] = l.weight.rows();
  j["cols"] = l.weight.cols();
  j["activation"] = l.activation == Activation::Relu ? "relu" : "identity";
  std::vector<double> w;
  for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
    for (Eigen::Index c = 0; c < l.weight.cols(); ++c) w.push_back(l.weight(r, c));
  }
  j["weight"] = w;
  j["bias"] = std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size());
  return j;
}

inline DenseLayer layer_from_json(const Json& j, const std::string& where) {
  DenseLayer l;
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  if (rows < 1 || cols < 1) throw InvalidArgument(where + ": non-positive shape");
  const auto w = j.at("weight").get<std::vector<double>>();
  const auto b = j.at("bias").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(w.size()) != rows * cols) {
    throw DimensionMismatch(where + ": weight has " + std::to_string(w.size()) +
                            " entries, shape says " + std::to_string(rows) + "x" +
                            std::to_string(cols));
  }
  if (static_cast<Eigen::Index>(b.size()) != rows) {
    throw DimensionMismatch(where + ": bias has " + std::to_string(b.size()) +
                            " entries, expected " + std::to_string(rows));
  }
  const auto act = j.at("activation").get<std::string>();
  if (act == "relu") l.activation = Activation::Relu;
  else if (act == "identity") l.activation = Activation::Identity;
  else throw InvalidArgument(where + ": unknown activation '" + act + "'");
  l.weight.resize(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) l.weight(r, c) = w[static_cast<std::size_t>(r * cols + c)];
  }
  l.bias = Eigen::Map<const Eigen::VectorXd>(b.data(), rows);
  return l;
}

}  // namespace detail

inline Json model_to_json(const Model& m) {
  Json j;
  j["format"] = "cgda-model";
  j["version"] = kCheckpointVersion;
  j["encoder"] = Json::array();
  for (const auto& l : m.encoder) j["encoder"].push_back(detail::layer_to_json(l));
  j["classifier"] = detail::layer_to_json(m.classifier);
  return j;
}

inline Model model_from_json(const Json& j) {
  try {
    if (j.value("format", "") != "cgda-model") throw InvalidArgument("not a model checkpoint");
    if (j.at("version").get<int>() != kCheckpointVersion) {
      throw InvalidArgument("unsupported checkpoint version " + j.at("version").dump());
    }
    Model m;
    const auto& enc = j.at("encoder");
    if (!enc.is_array() || enc.empty()) throw InvalidArgument("checkpoint has no encoder layers");
    for (std::size_t i = 0; i < enc.size(); ++i) {
      m.encoder.push_back(detail::layer_from_json(enc[i], "encoder layer " + std::to_string(i)));
      if (i > 0 && m.encoder[i].in_dim() != m.encoder[i - 1].out_dim()) {
        throw DimensionMismatch("encoder layer " + std::to_string(i) + " expects " +
                                std::to_string(m.encoder[i].in_dim()) + " inputs, previous layer gives " +
                                std::to_string(m.encoder[i - 1].out_dim()));
      }
    }
    m.classifier = detail::layer_from_json(j.at("classifier"), "classifier");
    if (m.classifier.in_dim() != m.embed_dim()) {
      throw DimensionMismatch("classifier expects " + std::to_string(m.classifier.in_dim()) +
                              " inputs, encoder gives " + std::to_string(m.embed_dim()));
    }
    return m;
  } catch (const Json::exception& e) {
    throw InvalidArgument(std::string("malformed checkpoint: ") + e.what());
  }
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open '" + path + "' for writing");
  os << text;
  if (!os) throw Error("failed writing '" + path + "'");
}

inline std::string read_text(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline void save_model(const Model& m, const std::string& path) {
  write_text(path, model_to_json(m).dump() + "\n");
}

inline Model load_model(const std::string& path) {
  Json j;
  try {
    j = Json::parse(read_text(path));
  } catch (const Json::exception& e) {
    throw InvalidArgument("checkpoint '" + path + "' is not valid JSON: " + e.what());
  }
  return model_from_json(j);
}

// --- metrics ------------------------------------------------------------------

inline Json to_json(const MetricReport& r) {
  Json j;
  j["dice"] = Json::array();
  for (const auto& d : r.dice) j["dice"].push_back(d ? Json(*d) : Json(nullptr));
  j["mdice"] = r.mdice;
  j["midice"] = r.midice;
  j["minor_class"] = r.minor_class;
  j["purity"] = r.purity ? Json(*r.purity) : Json(nullptr);
  return j;
}

inline std::string render_table(const MetricReport& r) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  os << "class  dice\n";
  for (std::size_t c = 0; c < r.dice.size(); ++c) {
    os << std::setw(5) << c << "  ";
    if (r.dice[c]) os << *r.dice[c];
    else os << "   n/a";
    if (static_cast<int>(c) == r.minor_class) os << "  (minor)";
    os << '\n';
  }
  os << "mDice   " << r.mdice << '\n';
  os << "MiDice  " << r.midice << '\n';
  if (r.purity) os << "purity  " << *r.purity << '\n';
  return os.str();
}

// --- run history ----------------------------------------------------------------

// `diagnostics` toggles ground-truth-derived fields (purity).
inline Json to_json(const RunHistory& h, bool diagnostics = true) {
  Json j;
  j["best_round"] = h.best_round;
  j["stop_round"] = h.stop_round;
  j["stop_reason"] = h.stop_reason;
  j["validation"] = std::string(to_string(h.validation));
  j["rounds"] = Json::array();
  for (const auto& r : h.rounds) {
    Json jr;
    jr["round"] = r.round;
    jr["loss_ce"] = r.loss_ce;
    jr["loss_triplet"] = r.loss_triplet;
    jr["val_mdice"] = r.val_mdice;
    jr["best_val_mdice"] = r.best_val_mdice;
    jr["k"] = r.k;
    jr["triplets_used"] = r.triplets_used;
    if (diagnostics) jr["purity"] = r.purity ? Json(*r.purity) : Json(nullptr);
    j["rounds"].push_back(std::move(jr));
  }
  return j;
}

inline std::string history_csv(const RunHistory& h) {
  std::ostringstream os;
  os << "round,loss_ce,loss_triplet,val_mdice,k,purity\n";
  os << std::setprecision(17);
  for (const auto& r : h.rounds) {
    os << r.round << ',' << r.loss_ce << ',' << r.loss_triplet << ',' << r.val_mdice << ','
       << r.k << ',';
    if (r.purity) os << *r.purity;
    os << '\n';
  }
  return os.str();
}

// FNV-1a over the training-derived part of the history.
inline std::uint64_t trajectory_hash(const RunHistory& h) {
  const auto s = to_json(h, false).dump();
  std::uint64_t x = 1469598103934665603ULL;
  for (unsigned char c : s) {
    x ^= c;
    x *= 1099511628211ULL;
  }
  return x;
}

// --- clustering export ------------------------------------------------------------

inline std::string clustering_csv(const Clustering& cl, std::span<const std::int64_t> sample_ids) {
  if (sample_ids.size() != cl.size()) throw DimensionMismatch("sample id count differs from clustering size");
  std::ostringstream os;
  os << "sample_id,cluster_id\n";
  for (std::size_t i = 0; i < cl.size(); ++i) os << sample_ids[i] << ',' << cl.assignment[i] << '\n';
  return os.str();
}

inline Json clustering_stats_json(const Clustering& cl, LabelSpan labels) {
  Json j;
  j["k"] = cl.k();
  j["clusters"] = Json::array();
  const auto stats = cluster_stats(cl, labels);
  for (std::size_t c = 0; c < stats.size(); ++c) {
    Json jc;
    jc["id"] = c;
    jc["labeled_class"] = stats[c].labeled_class ? Json(*stats[c].labeled_class) : Json(nullptr);
    jc["labeled_count"] = stats[c].labeled_count;
    jc["unlabeled_count"] = stats[c].unlabeled_count;
    if (c < cl.saturated.size()) jc["saturated"] = static_cast<bool>(cl.saturated[c]);
    j["clusters"].push_back(std::move(jc));
  }
  return j;
}

}  // namespace cgda
