#pragma once

// The `cgda` experiment driver. One binary, one mode per invocation:
//
//   cgda adapt --seed 7 --out runs/adapt-7
//   cgda report --inputs runs/adapt-7,runs/st-7 --out runs/summary
//
// Flags mirror config keys; `--config file` supplies defaults that flags
// override. Exit codes: 0 success, 1 usage/config error, 2 runtime error.

#include <cmath>
#include <filesystem>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"

#include "cgda/config.hpp"
#include "cgda/experiment.hpp"
#include "cgda/io.hpp"

namespace cgda::cli {

inline constexpr int kOk = 0;
inline constexpr int kUsage = 1;
inline constexpr int kRuntime = 2;

namespace detail {

namespace fs = std::filesystem;

// Provenance block every JSON artifact starts with.
inline Json header(const RunConfig& cfg) {
  Json j;
  j["tool"] = "cgda";
  j["mode"] = std::string(to_string(cfg.mode));
  j["seed"] = cfg.seed;
  j["config"] = to_json(cfg);
  return j;
}

class Outputs {
 public:
  explicit Outputs(const RunConfig& cfg) : dir_(cfg.out) { fs::create_directories(dir_); }

  void text(const std::string& name, const std::string& body) const {
    write_text((dir_ / name).string(), body);
  }
  void json(const std::string& name, const Json& j) const { text(name, j.dump(2) + "\n"); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

 private:
  fs::path dir_;
};

inline std::string epoch_csv(const std::vector<double>& losses) {
  std::ostringstream os;
  os << "round,loss_ce,loss_triplet,val_mdice,k,purity\n" << std::setprecision(17);
  for (std::size_t e = 0; e < losses.size(); ++e) os << e + 1 << ',' << losses[e] << ",0,,,\n";
  return os.str();
}

inline Json dataset_summary(const Dataset& ds) {
  Json j;
  j["num_classes"] = ds.num_classes();
  j["dim"] = ds.dim();
  j["samples"] = ds.size();
  std::map<std::string, std::size_t> counts;
  std::size_t hidden = 0;
  for (const auto& s : ds.samples()) {
    ++counts[std::string(to_string(s.domain)) + "/" + std::string(to_string(s.split))];
    if (!s.label) ++hidden;
  }
  for (const auto& [k, n] : counts) j["counts"][k] = n;
  j["unlabeled"] = hidden;
  return j;
}

inline void write_method(const RunConfig& cfg, const Outputs& out, const MethodRun& r,
                         std::ostream& os) {
  save_model(r.model, out.path("model.ckpt"));
  Json hist = header(cfg);
  hist["method"] = r.method;
  if (r.history) {
    hist["history"] = to_json(*r.history);
    out.text("history.csv", history_csv(*r.history));
  } else {
    hist["epoch_losses"] = r.epoch_losses;
    out.text("history.csv", epoch_csv(r.epoch_losses));
  }
  out.json("history.json", hist);

  Json met = header(cfg);
  met["method"] = r.method;
  met["test"] = to_json(r.test);
  if (r.minor_purity) met["minor_purity"] = *r.minor_purity;
  out.json("metrics.json", met);

  const auto table = "method " + r.method + " (seed " + std::to_string(cfg.seed) + ")\n" +
                     render_table(r.test);
  out.text("report.txt", table);
  os << table;

  if (r.clustering) {
    out.text("clusters.csv", clustering_csv(*r.clustering, r.pool_ids));
    Json cj = header(cfg);
    Json stats = clustering_stats_json(*r.clustering, r.pool_labels);
    for (auto& [k, v] : stats.items()) cj[k] = v;
    out.json("clusters.json", cj);
  }
}

inline void run_ablation(const RunConfig& cfg, const Dataset& ds, const Outputs& out,
                         std::ostream& os) {
  const auto source = run_source_only(cfg, ds);
  Json met = header(cfg);
  Json hist = header(cfg);
  met["reports"] = Json::array();
  std::ostringstream table;
  table << std::fixed << std::setprecision(4);
  table << "stage      mDice   MiDice  purity(r1)  minor-purity(r1)\n";
  for (WscStage stage : {WscStage::KMeansOnly, WscStage::SoftConstrained, WscStage::Full}) {
    const std::string tag(to_string(stage));
    const auto run = run_adapt(cfg, ds, stage);
    const auto first = cluster_in_source_embedding(cfg, ds, source.model, stage);
    Json r;
    r["tag"] = tag;
    r["test"] = to_json(run.test);
    r["minor_purity"] = run.minor_purity ? Json(*run.minor_purity) : Json(nullptr);
    r["first_round"]["k"] = first.clustering.k();
    r["first_round"]["purity"] = first.purity ? Json(*first.purity) : Json(nullptr);
    r["first_round"]["minor_purity"] = first.minor_purity ? Json(*first.minor_purity) : Json(nullptr);
    met["reports"].push_back(std::move(r));
    hist["histories"][tag] = to_json(*run.history);
    out.text("history-" + tag + ".csv", history_csv(*run.history));
    table << std::left << std::setw(10) << tag << ' ' << run.test.mdice << "  " << run.test.midice
          << "  " << first.purity.value_or(NAN) << "      " << first.minor_purity.value_or(NAN) << '\n';
  }
  out.json("metrics.json", met);
  out.json("history.json", hist);
  out.text("report.txt", table.str());
  os << table.str();
}

inline void run_eval(const RunConfig& cfg, const Dataset& ds, const Outputs& out,
                     std::ostream& os) {
  const auto model = load_model(cfg.checkpoint);
  if (model.input_dim() != ds.dim()) {
    throw DimensionMismatch("checkpoint expects " + std::to_string(model.input_dim()) +
                            " features, dataset has " + std::to_string(ds.dim()));
  }
  if (model.num_classes() != ds.num_classes()) {
    throw DimensionMismatch("checkpoint predicts " + std::to_string(model.num_classes()) +
                            " classes, dataset has " + std::to_string(ds.num_classes()));
  }
  const auto report = evaluate(model, target_test_set(ds), ds.num_classes());
  Json met = header(cfg);
  met["method"] = "eval";
  met["checkpoint"] = cfg.checkpoint;
  met["test"] = to_json(report);
  out.json("metrics.json", met);
  const auto table = render_table(report);
  out.text("report.txt", table);
  os << table;
}

struct Score {
  std::uint64_t seed;
  double mdice;
  double midice;
};

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (auto t = cgda::detail::trim(item); !t.empty()) out.push_back(t);
  }
  return out;
}

inline std::string metrics_path(const std::string& input) {
  return fs::is_directory(input) ? (fs::path(input) / "metrics.json").string() : input;
}

inline std::pair<double, double> mean_std(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  // Sample standard deviation; zero for a single run.
  return {m, v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0};
}

inline void run_report(const RunConfig& cfg, const Outputs& out, std::ostream& os) {
  std::map<std::string, std::vector<Score>> by_method;
  for (const auto& input : split_list(cfg.inputs)) {
    const auto path = metrics_path(input);
    Json j;
    try {
      j = Json::parse(read_text(path));
      const auto seed = j.at("seed").get<std::uint64_t>();
      if (j.contains("reports")) {
        for (const auto& r : j["reports"]) {
          by_method["ablate:" + r.at("tag").get<std::string>()].push_back(
              {seed, r.at("test").at("mdice").get<double>(), r.at("test").at("midice").get<double>()});
        }
      } else {
        by_method[j.at("method").get<std::string>()].push_back(
            {seed, j.at("test").at("mdice").get<double>(), j.at("test").at("midice").get<double>()});
      }
    } catch (const Json::exception& e) {
      throw InvalidArgument("'" + path + "' is not a cgda metrics file: " + e.what());
    }
  }

  Json rep = header(cfg);
  rep["methods"] = Json::object();
  std::ostringstream table;
  table << std::fixed << std::setprecision(4);
  table << "method          runs  mDice            MiDice\n";
  for (const auto& [method, scores] : by_method) {
    std::vector<double> md, mi;
    for (const auto& s : scores) {
      md.push_back(s.mdice);
      mi.push_back(s.midice);
    }
    const auto [md_m, md_s] = mean_std(md);
    const auto [mi_m, mi_s] = mean_std(mi);
    Json jm;
    jm["runs"] = scores.size();
    jm["mdice_mean"] = md_m;
    jm["mdice_std"] = md_s;
    jm["midice_mean"] = mi_m;
    jm["midice_std"] = mi_s;
    rep["methods"][method] = jm;
    table << std::left << std::setw(15) << method << ' ' << std::right << std::setw(4)
          << scores.size() << "  " << md_m << " ± " << md_s << "  " << mi_m << " ± " << mi_s
          << '\n';
  }

  // Paired by seed; the first run per seed counts.
  auto first_by_seed = [](const std::vector<Score>& v) {
    std::map<std::uint64_t, Score> m;
    for (const auto& s : v) m.emplace(s.seed, s);
    return m;
  };
  if (by_method.count("adapt") && by_method.count("s+t")) {
    const auto a = first_by_seed(by_method["adapt"]);
    const auto st = first_by_seed(by_method["s+t"]);
    int pairs = 0, wins = 0;
    for (const auto& [seed, s] : a) {
      if (auto it = st.find(seed); it != st.end()) {
        ++pairs;
        wins += s.mdice > it->second.mdice;
      }
    }
    rep["adapt_over_s+t"]["wins"] = wins;
    rep["adapt_over_s+t"]["pairs"] = pairs;
    table << "adapt beats s+t on mDice in " << wins << " of " << pairs << " paired seeds\n";
  }
  out.json("report.json", rep);
  out.text("report.txt", table.str());
  os << table.str();
}

// Input files named by the config must exist before any work starts.
inline std::vector<std::string> missing_inputs(const RunConfig& cfg) {
  std::vector<std::string> p;
  if (!cfg.data.empty() && !fs::exists(cfg.data)) p.push_back("data: no such file '" + cfg.data + "'");
  if (cfg.mode == Mode::Eval) {
    if (cfg.checkpoint.empty()) p.emplace_back("checkpoint: eval mode needs --checkpoint");
    else if (!fs::exists(cfg.checkpoint)) p.push_back("checkpoint: no such file '" + cfg.checkpoint + "'");
  }
  if (cfg.mode == Mode::Report) {
    const auto inputs = split_list(cfg.inputs);
    if (inputs.empty()) p.emplace_back("inputs: report mode needs --inputs a,b,...");
    for (const auto& in : inputs) {
      if (!fs::exists(metrics_path(in))) p.push_back("inputs: no metrics file at '" + metrics_path(in) + "'");
    }
  }
  return p;
}

inline void execute(const RunConfig& cfg, std::ostream& os) {
  const Outputs out(cfg);
  if (cfg.mode == Mode::Report) {
    run_report(cfg, out, os);
    return;
  }
  const auto ds = make_dataset(cfg);
  switch (cfg.mode) {
    case Mode::GenData: {
      save_dataset(ds, out.path("dataset.csv"));
      Json j = header(cfg);
      j["dataset"] = dataset_summary(ds);
      out.json("dataset.json", j);
      os << "wrote " << ds.size() << " samples to " << out.path("dataset.csv") << '\n';
      break;
    }
    case Mode::S: write_method(cfg, out, run_source_only(cfg, ds), os); break;
    case Mode::SPlusT: write_method(cfg, out, run_s_plus_t(cfg, ds), os); break;
    case Mode::Adapt: write_method(cfg, out, run_adapt(cfg, ds), os); break;
    case Mode::Ablate: run_ablation(cfg, ds, out, os); break;
    case Mode::Eval: run_eval(cfg, ds, out, os); break;
    case Mode::Report: break;
  }
}

}  // namespace detail

inline int run(int argc, const char* const* argv, std::ostream& os, std::ostream& err) {
  CLI::App app{"Cluster-guided semi-supervised domain adaptation experiments"};
  app.allow_extras();
  std::string mode_arg, config_path;
  app.add_option("command", mode_arg, "gen-data | s | s+t | adapt | ablate | eval | report (same as --mode)");
  app.add_option("--config", config_path, "key = value file; flags override it");

  const auto& schema = ConfigSchema::instance();
  std::map<std::string, std::string> values;
  std::vector<std::pair<std::string, CLI::Option*>> flags;
  for (const auto& key : schema.keys()) {
    flags.emplace_back(key, app.add_option("--" + key, values[key]));
  }
  for (const auto& [alias, target] : schema.aliases()) {
    flags.emplace_back(alias, app.add_option("--" + alias, values[alias], "alias of --" + target));
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, os, err);
    return code == 0 ? kOk : kUsage;
  }

  std::vector<std::string> problems;
  const auto extras = app.remaining();
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const auto& x = extras[i];
    if (x.rfind("--", 0) == 0) {
      const auto name = x.substr(2, x.find('=') == std::string::npos ? std::string::npos : x.find('=') - 2);
      problems.push_back("unknown flag '--" + name + "' (did you mean '--" + schema.nearest(name) + "'?)");
      if (x.find('=') == std::string::npos && i + 1 < extras.size() && extras[i + 1].rfind("--", 0) != 0) ++i;
    } else {
      problems.push_back("unexpected argument '" + x + "'");
    }
  }

  std::vector<std::pair<std::string, std::string>> flag_entries;
  if (!mode_arg.empty()) flag_entries.emplace_back("mode", mode_arg);
  for (const auto& [key, opt] : flags) {
    if (opt->count() > 0) flag_entries.emplace_back(key, values[key]);
  }

  RunConfig cfg;
  try {
    cfg = load_config(config_path, flag_entries);
  } catch (const ConfigError& e) {
    problems.insert(problems.end(), e.problems().begin(), e.problems().end());
  }
  if (problems.empty()) problems = detail::missing_inputs(cfg);
  if (!problems.empty()) {
    err << ConfigError(problems).what() << '\n';
    return kUsage;
  }

  try {
    detail::execute(cfg, os);
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return kOk;
}

}  // namespace cgda::cli
