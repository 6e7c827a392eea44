#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <sstream>

#include <nlohmann/json.hpp>

#include "duopoly/runlog.hpp"
#include "temp_dir.hpp"

using nlohmann::json;
using duopoly::testing::slurp;
using duopoly::testing::spit;
using duopoly::testing::TempDir;

namespace {

struct CliResult {
  int status = -1;
  std::string out;
  std::string err;
};

CliResult cli(const TempDir& dir, const std::string& args) {
  const auto out = dir / "stdout.txt";
  const auto err = dir / "stderr.txt";
  const std::string cmd = std::string("'") + DUOPOLY_CLI + "' " + args + " >'" + out.string() + "' 2>'" +
                          err.string() + "'";
  const int raw = std::system(cmd.c_str());
  return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, slurp(out), slurp(err)};
}

json constant_config(const std::string& id, int rounds, const std::string& d = "1/300") {
  return json{{"run_id", id},       {"planning", false},   {"conversation", false}, {"persona", "None"},
              {"cost1", 2},         {"cost2", 2},          {"init_price1", 2},      {"init_price2", 2},
              {"d", d},             {"rounds", rounds},    {"stopping", "ex-post"},
              {"policy1", json{{"kind", "constant"}, {"price", 7}}},
              {"policy2", json{{"kind", "constant"}, {"price", 7}}}};
}

std::string write(const TempDir& dir, const std::string& name, const json& j) {
  spit(dir / name, j.dump(2));
  return (dir / name).string();
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

std::vector<std::string> fields(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

TEST(Cli, RunThenVerify) {
  TempDir dir;
  const auto cfg = write(dir, "c.json", constant_config("c", 450));
  const auto res = cli(dir, "run --config '" + cfg + "' --out-dir '" + (dir / "runs").string() + "'");
  ASSERT_EQ(res.status, 0) << res.err;
  const auto summary = json::parse(res.out);
  EXPECT_EQ(summary.at("rounds_executed"), 450);
  EXPECT_EQ(summary.at("stop_reason"), "max_rounds");
  EXPECT_EQ(summary.at("verdicts").at(0).at("kind"), "converged");

  const auto verify = cli(dir, "verify '" + (dir / "runs" / "c").string() + "'");
  EXPECT_EQ(verify.status, 0) << verify.out;
  for (const auto& [name, ok] : json::parse(verify.out).at("checks").items()) EXPECT_EQ(ok, "pass") << name;
}

TEST(Cli, VerifyNamesTamperedRoundAndFirm) {
  TempDir dir;
  const auto cfg = write(dir, "c.json", constant_config("c", 50));
  ASSERT_EQ(cli(dir, "run --config '" + cfg + "' --out-dir '" + dir.path().string() + "'").status, 0);
  const auto log_path = dir / "c" / duopoly::kRoundLogFile;
  auto lines = lines_of(slurp(log_path));
  ASSERT_EQ(lines.size(), 100u);
  auto j = json::parse(lines[41]);  // round 21, firm 2
  ASSERT_EQ(j.at("round"), 21);
  ASSERT_EQ(j.at("firm"), 2);
  j["profit"] = j.at("profit").get<double>() + 1.0;
  lines[41] = j.dump();
  std::string text;
  for (const auto& l : lines) text += l + "\n";
  spit(log_path, text);

  const auto res = cli(dir, "verify '" + (dir / "c").string() + "'");
  EXPECT_EQ(res.status, 1);
  const auto report = json::parse(res.out);
  ASSERT_FALSE(report.at("discrepancies").empty());
  const auto& d = report.at("discrepancies").at(0);
  EXPECT_EQ(d.at("check"), "demand_profit");
  EXPECT_EQ(d.at("round"), 21);
  EXPECT_EQ(d.at("firm"), 2);
}

TEST(Cli, ExportSeries) {
  TempDir dir;
  const auto cfg = write(dir, "c.json", constant_config("c", 800));
  ASSERT_EQ(cli(dir, "run --config '" + cfg + "' --out-dir '" + dir.path().string() + "'").status, 0);
  const auto res = cli(dir, "export '" + (dir / "c").string() + "' --out '" + (dir / "x").string() + "'");
  ASSERT_EQ(res.status, 0) << res.err;
  const auto csv = slurp(dir / "x" / "series.csv");
  const auto rows = lines_of(csv);
  ASSERT_EQ(rows.size(), 801u);
  EXPECT_EQ(rows[0], "round,price1,price2,pB,pM,pB2,pM2\r");
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto f = fields(rows[i]);
    ASSERT_EQ(f.size(), 7u) << rows[i];
    ASSERT_EQ(std::stoi(f[0]), static_cast<int>(i));
    ASSERT_DOUBLE_EQ(std::stod(f[1]), 7.0);
    ASSERT_DOUBLE_EQ(std::stod(f[3]), 6.0);
    ASSERT_DOUBLE_EQ(std::stod(f[4]), 8.0);
  }
  const auto summary = json::parse(slurp(dir / "x" / "series_summary.json"));
  EXPECT_EQ(summary.at("rounds"), 800);
  EXPECT_EQ(summary.at("formed_at"), 100);
}

TEST(Cli, ExportHomogeneousLeavesCartelEmpty) {
  TempDir dir;
  auto j = constant_config("h", 20, "1/300");
  j["beta"] = "1/300";
  const auto cfg = write(dir, "h.json", j);
  ASSERT_EQ(cli(dir, "run --config '" + cfg + "' --out-dir '" + dir.path().string() + "'").status, 0);
  ASSERT_EQ(cli(dir, "export '" + (dir / "h").string() + "'").status, 0);
  const auto rows = lines_of(slurp(dir / "h" / "series.csv"));
  ASSERT_EQ(rows.size(), 21u);
  const auto f = fields(rows[1]);
  ASSERT_EQ(f.size(), 7u);
  EXPECT_TRUE(f[4].empty());
  EXPECT_TRUE(f[6].empty());
  const auto summary = json::parse(slurp(dir / "h" / "series_summary.json"));
  EXPECT_TRUE(summary.at("cartel").is_null());
  EXPECT_TRUE(summary.at("formed_at").is_null());
}

TEST(Cli, ResumeExtendsRun) {
  TempDir dir;
  const auto cfg = write(dir, "c.json", constant_config("c", 30));
  ASSERT_EQ(cli(dir, "run --config '" + cfg + "' --out-dir '" + dir.path().string() + "'").status, 0);
  const auto res = cli(dir, "resume --resume '" + (dir / "c" / duopoly::kCheckpointFile).string() + "' --rounds 60");
  ASSERT_EQ(res.status, 0) << res.err;
  EXPECT_EQ(json::parse(res.out).at("rounds_executed"), 60);
  EXPECT_EQ(cli(dir, "verify '" + (dir / "c").string() + "'").status, 0);
}

TEST(Cli, ReplayWithoutCassetteFails) {
  TempDir dir;
  auto j = constant_config("r", 10);
  j.erase("policy1");
  j.erase("policy2");
  j["io_mode"] = "replay";
  j["cassette"] = "missing.jsonl";
  const auto cfg = write(dir, "r.json", j);
  const auto res = cli(dir, "run --config '" + cfg + "' --out-dir '" + dir.path().string() + "'");
  EXPECT_NE(res.status, 0);
  const auto err = json::parse(res.err);
  EXPECT_EQ(err.at("error"), "PolicyFailure");
  EXPECT_EQ(err.at("cause"), "CassetteExhausted");
}

TEST(Cli, ConfigErrorsAreReported) {
  TempDir dir;
  auto j = constant_config("e", 10);
  j.erase("cost2");
  const auto cfg = write(dir, "e.json", j);
  const auto res = cli(dir, "run --config '" + cfg + "'");
  EXPECT_EQ(res.status, 1);
  const auto err = json::parse(res.err);
  EXPECT_EQ(err.at("error"), "ConfigError");
  EXPECT_NE(err.at("message").get<std::string>().find("cost2"), std::string::npos);
}

TEST(Cli, ListsPresets) {
  TempDir dir;
  const auto res = cli(dir, "presets --preset-dir '" + std::string(DUOPOLY_PRESET_DIR) + "'");
  ASSERT_EQ(res.status, 0);
  EXPECT_EQ(lines_of(res.out).size(), 9u);
  EXPECT_NE(res.out.find("group7-comm-ablation"), std::string::npos);
}

TEST(Cli, RunsPresetRowWithOverrides) {
  TempDir dir;
  const auto res = cli(dir, "run --preset group1-basic --row 4 --rounds 5 --io replay --cassette '" +
                                (dir / "none.jsonl").string() + "' --preset-dir '" + DUOPOLY_PRESET_DIR +
                                "' --out-dir '" + dir.path().string() + "'");
  EXPECT_EQ(res.status, 1);
  EXPECT_EQ(json::parse(res.err).at("cause"), "CassetteExhausted");
  EXPECT_TRUE(std::filesystem::exists(dir / "group1-basic-row4" / duopoly::kCheckpointFile));
}
