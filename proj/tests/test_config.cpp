#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "cgda/config.hpp"

using namespace cgda;

namespace {

using Entries = std::vector<std::pair<std::string, std::string>>;

std::vector<std::string> problems_of(const Entries& file, const Entries& flags = {}) {
  try {
    resolve_config(file, flags);
  } catch (const ConfigError& e) {
    return e.problems();
  }
  return {};
}

}  // namespace

TEST(Config, EmptyFileGivesDefaults) {
  const auto c = resolve_config(parse_config_text(""), {});
  EXPECT_EQ(c.k, 30);
  EXPECT_EQ(c.margin, 1.0);
  EXPECT_EQ(c.lambda, 1.0);
  EXPECT_EQ(c.pareto_alpha, 1.0);
  EXPECT_EQ(c.mode, Mode::Adapt);
}

TEST(Config, FlagBeatsFile) {
  const auto c = resolve_config(parse_config_text("k = 12\nmargin = 0.5\n"), {{"k", "7"}});
  EXPECT_EQ(c.k, 7);
  EXPECT_EQ(c.margin, 0.5);
}

TEST(Config, UnknownKeySuggestsNearest) {
  const auto p = problems_of({{"epsillon", "2"}});
  ASSERT_EQ(p.size(), 1u);
  EXPECT_NE(p[0].find("'epsillon'"), std::string::npos);
  EXPECT_NE(p[0].find("'epsilon'"), std::string::npos);
}

TEST(Config, ListsEveryProblem) {
  const auto p = problems_of({{"k", "many"}, {"margin", "wide"}, {"bogus", "1"}});
  EXPECT_EQ(p.size(), 3u);
}

TEST(Config, RangeChecksRunAfterParsing) {
  const auto p = problems_of({{"margin", "-1"}, {"patience", "0"}});
  EXPECT_EQ(p.size(), 2u);
}

TEST(Config, AliasesAndUnderscores) {
  const auto c = resolve_config({{"epsilon", "0.25"}, {"learning_rate", "0.1"}, {"output-dir", "x"}}, {});
  EXPECT_EQ(c.margin, 0.25);
  EXPECT_EQ(c.learning_rate, 0.1);
  EXPECT_EQ(c.out, "x");
}

TEST(Config, CommentsAndBadLines) {
  EXPECT_EQ(parse_config_text("# note\n k = 3 # trailing\n\n").size(), 1u);
  EXPECT_THROW(parse_config_text("k 3\n"), ConfigError);
}

TEST(Config, ModeAndHiddenParse) {
  const auto c = resolve_config({{"mode", "s+t"}, {"hidden", "32, 16"}}, {});
  EXPECT_EQ(c.mode, Mode::SPlusT);
  EXPECT_EQ(c.hidden, (std::vector<int>{32, 16}));
  EXPECT_EQ(problems_of({{"mode", "train"}}).size(), 1u);
}

TEST(Config, EchoRoundTrips) {
  const auto c = resolve_config({{"seed", "7"}, {"k", "12"}, {"hidden", "8,4"}}, {});
  Entries back;
  const auto echo = to_json(c);
  for (const auto& [k, v] : echo.items()) {
    if (v.is_string()) back.emplace_back(k, v.get<std::string>());
    else if (v.is_array()) {
      std::string s;
      for (const auto& x : v) s += (s.empty() ? "" : ",") + std::to_string(x.get<int>());
      back.emplace_back(k, s);
    } else {
      back.emplace_back(k, v.dump());
    }
  }
  EXPECT_EQ(to_json(resolve_config(back, {})), to_json(c));
}

TEST(Config, LoadsFile) {
  const auto path = (std::filesystem::temp_directory_path() / "cgda_test.cfg").string();
  std::ofstream(path) << "seed = 3\nk = 9\n";
  const auto c = load_config(path, {{"seed", "4"}});
  EXPECT_EQ(c.seed, 4u);
  EXPECT_EQ(c.k, 9);
  std::filesystem::remove(path);
  EXPECT_THROW(load_config(path), ConfigError);
}
