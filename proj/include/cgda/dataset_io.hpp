#pragma once

#include <charconv>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "cgda/data.hpp"
#include "cgda/error.hpp"

namespace cgda {

// CSV layout: id,domain,split,label,truth,f0,...,f{d-1}. Files without the
// truth column are accepted on read.

namespace detail {

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

template <typename T>
std::optional<T> parse_number(std::string_view s) {
  T value{};
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, value);
  if (ec != std::errc() || ptr != end) return std::nullopt;
  return value;
}

inline void write_double(std::ostream& os, double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  os.write(buf, ptr - buf);
}

}  // namespace detail

inline void write_dataset(std::ostream& os, const Dataset& ds) {
  os << "id,domain,split,label,truth";
  for (int j = 0; j < ds.dim(); ++j) os << ",f" << j;
  os << '\n';
  EvalView ev(ds);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& s = ds.samples()[i];
    os << s.id << ',' << to_string(s.domain) << ',' << to_string(s.split) << ',';
    if (s.label) os << *s.label;
    os << ',';
    if (const auto& t = ev.stored_truth(i)) os << *t;
    for (Eigen::Index j = 0; j < s.features.size(); ++j) {
      os << ',';
      detail::write_double(os, s.features(j));
    }
    os << '\n';
  }
}

// Reads a dataset. The class count is the largest class index seen plus one
// (at least 2) unless `num_classes` is given.
inline Dataset read_dataset(std::istream& is, std::optional<int> num_classes = std::nullopt) {
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(is, line)) throw ParseError(1, "missing header");
  const auto header = detail::split_fields(line);
  static constexpr std::string_view kFixed[] = {"id", "domain", "split", "label"};
  for (std::size_t i = 0; i < 4; ++i) {
    if (i >= header.size() || header[i] != kFixed[i]) {
      throw ParseError(1, "expected column '" + std::string(kFixed[i]) + "' at position " +
                              std::to_string(i + 1));
    }
  }
  // The truth column is optional; without it no sample carries hidden truth.
  const bool has_truth = header.size() > 4 && header[4] == "truth";
  const std::size_t first_feature = has_truth ? 5 : 4;
  if (header.size() <= first_feature) throw ParseError(1, "header has no feature columns");
  const int dim = static_cast<int>(header.size() - first_feature);
  for (int j = 0; j < dim; ++j) {
    if (header[first_feature + static_cast<std::size_t>(j)] != "f" + std::to_string(j)) {
      throw ParseError(1, "expected feature column f" + std::to_string(j));
    }
  }

  struct Row {
    Sample s;
    std::optional<int> truth;
  };
  std::vector<Row> rows;
  int max_class = -1;
  auto parse_class = [&](std::string_view f, const char* what) -> std::optional<int> {
    if (f.empty()) return std::nullopt;
    auto v = detail::parse_number<int>(f);
    if (!v || *v < 0) throw ParseError(line_no, std::string("bad ") + what + " '" + std::string(f) + "'");
    max_class = std::max(max_class, *v);
    return v;
  };

  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = detail::split_fields(line);
    if (f.size() != header.size()) {
      throw ParseError(line_no, "row has " +
                                    std::to_string(f.size() - std::min(f.size(), first_feature)) +
                                    " features, expected " + std::to_string(dim));
    }
    Row r;
    auto id = detail::parse_number<std::int64_t>(f[0]);
    if (!id || *id < 0) throw ParseError(line_no, "bad id '" + std::string(f[0]) + "'");
    r.s.id = *id;
    if (f[1] == "source") r.s.domain = Domain::Source;
    else if (f[1] == "target") r.s.domain = Domain::Target;
    else throw ParseError(line_no, "bad domain '" + std::string(f[1]) + "'");
    if (f[2] == "train") r.s.split = Split::Train;
    else if (f[2] == "val") r.s.split = Split::Val;
    else if (f[2] == "test") r.s.split = Split::Test;
    else throw ParseError(line_no, "bad split '" + std::string(f[2]) + "'");
    r.s.label = parse_class(f[3], "label");
    if (has_truth) r.truth = parse_class(f[4], "truth");
    r.s.features.resize(dim);
    for (int j = 0; j < dim; ++j) {
      auto v = detail::parse_number<double>(f[first_feature + static_cast<std::size_t>(j)]);
      if (!v) throw ParseError(line_no, "bad feature f" + std::to_string(j));
      r.s.features(j) = *v;
    }
    if (r.s.domain == Domain::Source && !r.s.label) {
      throw ParseError(line_no, "source sample without label");
    }
    rows.push_back(std::move(r));
  }

  const int classes = num_classes.value_or(std::max(2, max_class + 1));
  if (max_class >= classes) {
    throw ParseError(line_no, "class index " + std::to_string(max_class) +
                                  " exceeds class count " + std::to_string(classes));
  }
  Dataset ds(classes, dim);
  for (auto& r : rows) ds.add(std::move(r.s), r.truth);
  return ds;
}

inline void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open '" + path + "' for writing");
  write_dataset(os, ds);
  if (!os) throw Error("failed writing '" + path + "'");
}

inline Dataset load_dataset(const std::string& path, std::optional<int> num_classes = std::nullopt) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open dataset '" + path + "'");
  try {
    return read_dataset(is, num_classes);
  } catch (const ParseError& e) {
    throw ParseError(e.line(), std::string(e.what()).substr(std::string(e.what()).find(": ") + 2) +
                                   " (in " + path + ")");
  }
}

}  // namespace cgda
