#pragma once

// Flat key/value run configuration. Keys are kebab-case and double as CLI
// flags (`--pareto-alpha 1.0`); config files use `key = value` lines, with
// underscores accepted in place of dashes.

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

#include "cgda/adapt.hpp"
#include "cgda/data.hpp"
#include "cgda/error.hpp"
#include "cgda/nn.hpp"
#include "cgda/random.hpp"
#include "cgda/wsclust.hpp"

namespace cgda {

enum class Mode { GenData, S, SPlusT, Adapt, Ablate, Eval, Report };

inline std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::GenData: return "gen-data";
    case Mode::S: return "s";
    case Mode::SPlusT: return "s+t";
    case Mode::Adapt: return "adapt";
    case Mode::Ablate: return "ablate";
    case Mode::Eval: return "eval";
    case Mode::Report: return "report";
  }
  return "adapt";
}

inline std::optional<Mode> parse_mode(std::string_view s) {
  for (Mode m : {Mode::GenData, Mode::S, Mode::SPlusT, Mode::Adapt, Mode::Ablate, Mode::Eval,
                 Mode::Report}) {
    if (s == to_string(m)) return m;
  }
  return std::nullopt;
}

struct RunConfig {
  Mode mode = Mode::Adapt;
  std::uint64_t seed = 0;
  std::string data;        // dataset CSV; empty means synthesize
  std::string out = "out";
  std::string checkpoint;  // eval mode
  std::string inputs;      // report mode: comma-separated metrics.json files or run dirs

  // synthesis
  int classes = 3;
  int dim = 2;
  int n_max = 600;
  double pareto_alpha = 1.0;
  double class_separation = 4.0;
  double noise_sigma = 1.0;
  double shift_angle = 30.0;   // degrees
  double shift_offset = 2.0;   // in units of noise_sigma
  double val_fraction = 0.1;
  double test_fraction = 0.2;
  double labeled_fraction = 0.02;

  // clustering
  int k = 30;
  double must_penalty = 1.0;
  int kmeans_max_iter = 100;
  int kmeans_restarts = 5;
  double tol = 1e-6;

  // model / training
  std::vector<int> hidden{64};
  int embed_dim = 32;
  double margin = 1.0;
  double lambda = 1.0;
  double learning_rate = 1e-2;
  double momentum = 0.9;
  int batch_size = 32;
  int triplets_per_step = 32;
  int epochs_per_round = 5;
  int pretrain_multiplier = 4;

  // adaptation
  int max_rounds = 50;
  int patience = 5;
  double val_fraction_of_dt = 0.5;

  SynthConfig synth() const {
    SynthConfig s;
    s.num_classes = classes;
    s.dim = dim;
    s.n_max = n_max;
    s.pareto_alpha = pareto_alpha;
    s.class_separation = class_separation;
    s.noise_sigma = noise_sigma;
    s.domain_shift = rotation_shift(dim, shift_angle, shift_offset * noise_sigma);
    s.val_fraction = val_fraction;
    s.test_fraction = test_fraction;
    s.seed = seed;
    return s;
  }

  TrainConfig train() const {
    TrainConfig t;
    t.margin = margin;
    t.lambda = lambda;
    t.learning_rate = learning_rate;
    t.momentum = momentum;
    t.batch_size = batch_size;
    t.triplets_per_step = triplets_per_step;
    t.epochs_per_round = epochs_per_round;
    t.pretrain_multiplier = pretrain_multiplier;
    t.seed = seed;
    return t;
  }

  WscConfig wsc() const {
    WscConfig w;
    w.k = k;
    w.must_penalty = must_penalty;
    w.kmeans_max_iter = kmeans_max_iter;
    w.kmeans_restarts = kmeans_restarts;
    w.tol = tol;
    w.seed = mix_seed(seed, 3);
    return w;
  }

  AdaptConfig adapt() const {
    AdaptConfig a;
    a.train = train();
    a.wsc = wsc();
    a.max_rounds = max_rounds;
    a.patience = patience;
    a.val_fraction_of_dt = val_fraction_of_dt;
    return a;
  }

  ModelShape model_shape(int input_dim, int num_classes) const {
    return ModelShape{input_dim, hidden, embed_dim, num_classes};
  }

  std::uint64_t split_seed() const { return mix_seed(seed, 1); }
  std::uint64_t init_seed() const { return mix_seed(seed, 2); }
};

// Every problem found while resolving a configuration, reported together.
class ConfigError : public Error {
 public:
  explicit ConfigError(std::vector<std::string> problems)
      : Error(join(problems)), problems_(std::move(problems)) {}
  const std::vector<std::string>& problems() const noexcept { return problems_; }

 private:
  static std::string join(const std::vector<std::string>& p) {
    std::string s = "invalid configuration:";
    for (const auto& x : p) s += "\n  " + x;
    return s;
  }
  std::vector<std::string> problems_;
};

namespace detail {

inline std::size_t edit_distance(std::string_view a, std::string_view b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] != b[j - 1] ? 1u : 0u)});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
bool parse_value(const std::string& s, T& out) {
  if constexpr (std::is_same_v<T, std::string>) {
    out = s;
    return true;
  } else if constexpr (std::is_same_v<T, std::vector<int>>) {
    std::vector<int> v;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
      int x = 0;
      const auto t = trim(item);
      auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), x);
      if (ec != std::errc() || p != t.data() + t.size() || x < 1) return false;
      v.push_back(x);
    }
    out = std::move(v);
    return true;
  } else {
    T v{};
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) return false;
    out = v;
    return true;
  }
}

template <typename T>
const char* type_name() {
  if constexpr (std::is_same_v<T, std::string>) return "string";
  else if constexpr (std::is_same_v<T, std::vector<int>>) return "comma-separated positive integers";
  else if constexpr (std::is_floating_point_v<T>) return "number";
  else if constexpr (std::is_unsigned_v<T>) return "non-negative integer";
  else return "integer";
}

}  // namespace detail

// Key table: name -> (setter, getter-as-json).
class ConfigSchema {
 public:
  struct Entry {
    std::function<std::optional<std::string>(RunConfig&, const std::string&)> set;
    std::function<nlohmann::ordered_json(const RunConfig&)> get;
  };

  static const ConfigSchema& instance() {
    static const ConfigSchema s;
    return s;
  }

  const std::vector<std::string>& keys() const { return order_; }
  const std::map<std::string, std::string>& aliases() const { return aliases_; }

  // Canonical key for a spelling, or nullopt if unknown.
  std::optional<std::string> resolve(std::string key) const {
    std::replace(key.begin(), key.end(), '_', '-');
    if (entries_.count(key)) return key;
    if (auto it = aliases_.find(key); it != aliases_.end()) return it->second;
    return std::nullopt;
  }

  std::string nearest(std::string key) const {
    std::replace(key.begin(), key.end(), '_', '-');
    std::string best;
    std::size_t best_d = std::string::npos;
    auto consider = [&](const std::string& cand) {
      const auto d = detail::edit_distance(key, cand);
      if (d < best_d) {
        best_d = d;
        best = cand;
      }
    };
    for (const auto& k : order_) consider(k);
    for (const auto& [a, _] : aliases_) consider(a);
    return best;
  }

  const Entry& at(const std::string& canonical) const { return entries_.at(canonical); }

 private:
  template <typename T>
  void add(const std::string& name, T RunConfig::*field) {
    order_.push_back(name);
    entries_[name] = Entry{
        [field, name](RunConfig& c, const std::string& v) -> std::optional<std::string> {
          if (!detail::parse_value(v, c.*field)) {
            return name + ": expected " + detail::type_name<T>() + ", got '" + v + "'";
          }
          return std::nullopt;
        },
        [field](const RunConfig& c) { return nlohmann::ordered_json(c.*field); }};
  }

  ConfigSchema() {
    order_.push_back("mode");
    entries_["mode"] = Entry{
        [](RunConfig& c, const std::string& v) -> std::optional<std::string> {
          if (auto m = parse_mode(v)) {
            c.mode = *m;
            return std::nullopt;
          }
          return "mode: expected one of gen-data, s, s+t, adapt, ablate, eval, report; got '" + v + "'";
        },
        [](const RunConfig& c) { return nlohmann::ordered_json(std::string(to_string(c.mode))); }};
    add("seed", &RunConfig::seed);
    add("data", &RunConfig::data);
    add("out", &RunConfig::out);
    add("checkpoint", &RunConfig::checkpoint);
    add("inputs", &RunConfig::inputs);
    add("classes", &RunConfig::classes);
    add("dim", &RunConfig::dim);
    add("n-max", &RunConfig::n_max);
    add("pareto-alpha", &RunConfig::pareto_alpha);
    add("class-separation", &RunConfig::class_separation);
    add("noise-sigma", &RunConfig::noise_sigma);
    add("shift-angle", &RunConfig::shift_angle);
    add("shift-offset", &RunConfig::shift_offset);
    add("val-fraction", &RunConfig::val_fraction);
    add("test-fraction", &RunConfig::test_fraction);
    add("labeled-fraction", &RunConfig::labeled_fraction);
    add("k", &RunConfig::k);
    add("must-penalty", &RunConfig::must_penalty);
    add("kmeans-max-iter", &RunConfig::kmeans_max_iter);
    add("kmeans-restarts", &RunConfig::kmeans_restarts);
    add("tol", &RunConfig::tol);
    add("hidden", &RunConfig::hidden);
    add("embed-dim", &RunConfig::embed_dim);
    add("margin", &RunConfig::margin);
    add("lambda", &RunConfig::lambda);
    add("learning-rate", &RunConfig::learning_rate);
    add("momentum", &RunConfig::momentum);
    add("batch-size", &RunConfig::batch_size);
    add("triplets-per-step", &RunConfig::triplets_per_step);
    add("epochs-per-round", &RunConfig::epochs_per_round);
    add("pretrain-multiplier", &RunConfig::pretrain_multiplier);
    add("max-rounds", &RunConfig::max_rounds);
    add("patience", &RunConfig::patience);
    add("val-fraction-of-dt", &RunConfig::val_fraction_of_dt);
    aliases_ = {{"epsilon", "margin"}, {"lr", "learning-rate"}, {"output-dir", "out"},
                {"dataset-path", "data"}};
  }

  std::vector<std::string> order_;
  std::map<std::string, Entry> entries_;
  std::map<std::string, std::string> aliases_;
};

inline nlohmann::ordered_json to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  const auto& schema = ConfigSchema::instance();
  for (const auto& k : schema.keys()) j[k] = schema.at(k).get(c);
  return j;
}

// Raw key/value pairs from a config file. `#` starts a comment.
inline std::vector<std::pair<std::string, std::string>> parse_config_text(std::string_view text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::vector<std::string> problems;
  std::size_t line_no = 0;
  std::istringstream is{std::string(text)};
  std::string line;
  while (std::getline(is, line)) {
    ++line_no;
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    const auto t = detail::trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      problems.push_back("line " + std::to_string(line_no) + ": expected 'key = value'");
      continue;
    }
    out.emplace_back(detail::trim(t.substr(0, eq)), detail::trim(t.substr(eq + 1)));
  }
  if (!problems.empty()) throw ConfigError(std::move(problems));
  return out;
}

inline std::vector<std::string> validate(const RunConfig& c) {
  std::vector<std::string> p;
  auto need = [&p](bool ok, const char* msg) {
    if (!ok) p.emplace_back(msg);
  };
  need(c.classes >= 2, "classes must be >= 2");
  need(c.dim >= 1, "dim must be >= 1");
  need(c.n_max >= c.classes, "n-max must be >= classes");
  need(c.pareto_alpha > 0, "pareto-alpha must be > 0");
  need(c.class_separation > 0, "class-separation must be > 0");
  need(c.noise_sigma > 0, "noise-sigma must be > 0");
  need(c.labeled_fraction > 0 && c.labeled_fraction < 1, "labeled-fraction must lie in (0, 1)");
  need(c.k >= c.classes, "k must be >= classes");
  need(c.must_penalty >= 0, "must-penalty must be >= 0");
  need(c.kmeans_max_iter >= 1, "kmeans-max-iter must be >= 1");
  need(c.kmeans_restarts >= 1, "kmeans-restarts must be >= 1");
  need(c.tol >= 0, "tol must be >= 0");
  need(c.embed_dim >= 1, "embed-dim must be >= 1");
  need(c.margin > 0, "margin must be > 0");
  need(c.lambda >= 0, "lambda must be >= 0");
  need(c.learning_rate > 0, "learning-rate must be > 0");
  need(c.momentum >= 0 && c.momentum < 1, "momentum must lie in [0, 1)");
  need(c.batch_size >= 1, "batch-size must be >= 1");
  need(c.triplets_per_step >= 1, "triplets-per-step must be >= 1");
  need(c.epochs_per_round >= 1, "epochs-per-round must be >= 1");
  need(c.pretrain_multiplier >= 1, "pretrain-multiplier must be >= 1");
  need(c.max_rounds >= 1, "max-rounds must be >= 1");
  need(c.patience >= 1, "patience must be >= 1");
  need(c.val_fraction_of_dt >= 0 && c.val_fraction_of_dt < 1, "val-fraction-of-dt must lie in [0, 1)");
  need(!c.out.empty(), "out must be set");
  return p;
}

// Applies file entries then flag entries (flags win), collecting every
// unknown key, type error and range violation before failing.
inline RunConfig resolve_config(const std::vector<std::pair<std::string, std::string>>& file_entries,
                                const std::vector<std::pair<std::string, std::string>>& flag_entries) {
  RunConfig c;
  std::vector<std::string> problems;
  const auto& schema = ConfigSchema::instance();
  auto apply = [&](const std::vector<std::pair<std::string, std::string>>& entries) {
    for (const auto& [key, value] : entries) {
      const auto canon = schema.resolve(key);
      if (!canon) {
        problems.push_back("unknown key '" + key + "' (did you mean '" + schema.nearest(key) + "'?)");
        continue;
      }
      if (auto err = schema.at(*canon).set(c, value)) problems.push_back(*err);
    }
  };
  apply(file_entries);
  apply(flag_entries);
  if (problems.empty()) problems = validate(c);
  if (!problems.empty()) throw ConfigError(std::move(problems));
  return c;
}

inline RunConfig load_config(const std::string& path,
                             const std::vector<std::pair<std::string, std::string>>& flag_entries = {}) {
  std::vector<std::pair<std::string, std::string>> file_entries;
  if (!path.empty()) {
    std::ifstream is(path);
    if (!is) throw ConfigError({"cannot open config file '" + path + "'"});
    std::ostringstream ss;
    ss << is.rdbuf();
    file_entries = parse_config_text(ss.str());
  }
  return resolve_config(file_entries, flag_entries);
}

}  // namespace cgda
