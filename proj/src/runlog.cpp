#include "duopoly/runlog.hpp"

#include <charconv>
#include <cmath>
#include <fstream>

#include "duopoly/config.hpp"
#include "duopoly/errors.hpp"
#include "duopoly/llm_client.hpp"

namespace duopoly {

using nlohmann::json;
using nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

constexpr double kRecomputeTolerance = 1e-9;

std::string number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::MalformedLog, path.string() + ": " + e.what());
  }
}

struct LoadedRun {
  fs::path dir;
  RunConfig config;
  std::vector<RunLogLine> lines;
};

LoadedRun load_run(const fs::path& path) {
  LoadedRun run;
  run.dir = resolve_run_dir(path);
  run.config = load_config(run.dir / kConfigFile);
  const fs::path log = fs::is_directory(path) ? run.dir / kRoundLogFile : path;
  run.lines = read_run_log(log);
  return run;
}

/// Prices per firm in log order; assumes the pairing check has passed.
std::array<std::vector<double>, 2> price_series(const std::vector<RunLogLine>& lines) {
  std::array<std::vector<double>, 2> series;
  for (const auto& l : lines) {
    if (l.firm == 1 || l.firm == 2) series[static_cast<std::size_t>(l.firm - 1)].push_back(l.price);
  }
  return series;
}

}  // namespace

std::string format_log_line(const RunLogLine& line) {
  ordered_json j;
  j["run_id"] = line.run_id;
  j["round"] = line.round;
  j["firm"] = line.firm;
  j["price"] = line.price;
  j["demand"] = line.demand;
  j["profit"] = line.profit;
  j["rival_price"] = line.rival_price;
  j["reflected"] = line.reflected;
  j["conversed"] = line.conversed;
  if (line.strategy_digest) j["strategy_digest"] = *line.strategy_digest;
  if (line.strategy) j["strategy"] = *line.strategy;
  if (!line.messages.empty()) {
    ordered_json msgs = ordered_json::array();
    for (const auto& m : line.messages) {
      ordered_json o;
      o["order"] = m.order;
      o["exchange"] = m.exchange;
      o["text"] = m.text;
      msgs.push_back(o);
    }
    j["messages"] = msgs;
  }
  return j.dump();
}

RunLogLine parse_log_line(const std::string& text, std::size_t line_number) {
  const std::string where = "log line " + std::to_string(line_number);
  try {
    const json j = json::parse(text);
    RunLogLine l;
    l.run_id = j.at("run_id").get<std::string>();
    l.round = j.at("round").get<int>();
    l.firm = j.at("firm").get<int>();
    l.price = j.at("price").get<double>();
    l.demand = j.at("demand").get<double>();
    l.profit = j.at("profit").get<double>();
    l.rival_price = j.at("rival_price").get<double>();
    l.reflected = j.at("reflected").get<bool>();
    l.conversed = j.at("conversed").get<bool>();
    if (j.contains("strategy_digest")) l.strategy_digest = j["strategy_digest"].get<std::string>();
    if (j.contains("strategy")) l.strategy = j["strategy"].get<std::string>();
    if (j.contains("messages")) {
      for (const auto& m : j["messages"]) {
        l.messages.push_back({m.at("order").get<int>(), m.at("exchange").get<int>(), m.at("text").get<std::string>()});
      }
    }
    return l;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedLog, where + ": " + e.what());
  }
}

std::vector<RunLogLine> read_run_log(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::vector<RunLogLine> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    out.push_back(parse_log_line(line, n));
  }
  return out;
}

std::string_view to_string(VerdictKind kind) {
  switch (kind) {
    case VerdictKind::Converged: return "converged";
    case VerdictKind::BoundedOscillation: return "bounded_oscillation";
    case VerdictKind::NotStationary: return "not_stationary";
  }
  return "not_stationary";
}

json verdict_to_json(const StationarityVerdict& v) {
  json j{{"kind", std::string(to_string(v.kind))}, {"evaluated_at", v.evaluated_at}};
  if (v.kind == VerdictKind::Converged) j["center"] = v.center;
  if (v.kind == VerdictKind::BoundedOscillation) {
    j["lo"] = v.lo;
    j["hi"] = v.hi;
  }
  return j;
}

StationarityVerdict verdict_from_json(const json& j) {
  StationarityVerdict v;
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "converged") v.kind = VerdictKind::Converged;
  else if (kind == "bounded_oscillation") v.kind = VerdictKind::BoundedOscillation;
  else if (kind == "not_stationary") v.kind = VerdictKind::NotStationary;
  else throw Error(ErrorCode::MalformedLog, "unknown verdict kind " + kind);
  v.evaluated_at = j.at("evaluated_at").get<int>();
  v.center = j.value("center", 0.0);
  v.lo = j.value("lo", 0.0);
  v.hi = j.value("hi", 0.0);
  return v;
}

fs::path resolve_run_dir(const fs::path& path) {
  if (fs::is_directory(path)) return path;
  const auto parent = path.parent_path();
  return parent.empty() ? fs::path(".") : parent;
}

json VerifyReport::to_json() const {
  json j;
  j["ok"] = ok();
  j["checks"] = json::object();
  for (const auto& [name, passed] : checks) j["checks"][name] = passed ? "pass" : "fail";
  j["discrepancies"] = json::array();
  for (const auto& d : discrepancies) {
    json o{{"check", d.check}, {"message", d.message}};
    if (d.round > 0) o["round"] = d.round;
    if (d.firm > 0) o["firm"] = d.firm;
    j["discrepancies"].push_back(o);
  }
  return j;
}

VerifyReport verify_run(const fs::path& path) {
  const LoadedRun run = load_run(path);
  const RunConfig& cfg = run.config;
  const auto market = derive_market(cfg.market);
  const auto det = detector_params(cfg);
  VerifyReport report;
  auto fail = [&](const std::string& check, int round, int firm, std::string msg) {
    report.discrepancies.push_back({check, round, firm, std::move(msg)});
  };
  auto run_check = [&](const std::string& name, auto&& body) {
    const auto before = report.discrepancies.size();
    body();
    report.checks.emplace_back(name, report.discrepancies.size() == before);
  };

  const auto& lines = run.lines;
  const int rounds = static_cast<int>(lines.size() / 2);

  bool structure_ok = true;
  run_check("structure", [&] {
    if (lines.size() % 2 != 0) fail("structure", 0, 0, "odd number of log lines");
    for (std::size_t i = 0; i < lines.size(); ++i) {
      const int want_round = static_cast<int>(i / 2) + 1;
      const int want_firm = static_cast<int>(i % 2) + 1;
      if (lines[i].round != want_round || lines[i].firm != want_firm) {
        fail("structure", lines[i].round, lines[i].firm,
             "expected round " + std::to_string(want_round) + " firm " + std::to_string(want_firm));
      }
      if (lines[i].run_id != cfg.run_id) fail("structure", lines[i].round, lines[i].firm, "run_id differs from config");
    }
    if (rounds > cfg.max_rounds) fail("structure", 0, 0, "more rounds than configured");
    structure_ok = report.discrepancies.empty();
  });
  if (!structure_ok) return report;

  run_check("rival_price", [&] {
    for (int r = 0; r < rounds; ++r) {
      for (int f = 0; f < 2; ++f) {
        const auto& own = lines[static_cast<std::size_t>(2 * r + f)];
        const auto& other = lines[static_cast<std::size_t>(2 * r + 1 - f)];
        if (own.rival_price != other.price) fail("rival_price", own.round, own.firm, "rival_price differs from rival's price");
      }
    }
  });

  run_check("demand_profit", [&] {
    for (int r = 0; r < rounds; ++r) {
      const auto& l1 = lines[static_cast<std::size_t>(2 * r)];
      const auto& l2 = lines[static_cast<std::size_t>(2 * r + 1)];
      const auto out = profit(market, l1.price, l2.price);
      for (std::size_t f = 0; f < 2; ++f) {
        const auto& l = f == 0 ? l1 : l2;
        if (!(std::abs(l.demand - out.quantity[f]) <= kRecomputeTolerance)) {
          fail("demand_profit", l.round, l.firm, "demand " + number(l.demand) + " != " + number(out.quantity[f]));
        }
        if (!(std::abs(l.profit - out.profit[f]) <= kRecomputeTolerance)) {
          fail("demand_profit", l.round, l.firm, "profit " + number(l.profit) + " != " + number(out.profit[f]));
        }
      }
    }
  });

  run_check("phase_markers", [&] {
    for (const auto& l : lines) {
      const bool conv = cfg.conversation.enabled_at(l.round);
      const bool refl = reflection_due(l.round, cfg.memory) && cfg.planning.enabled_at(l.round);
      if (l.conversed != conv) fail("phase_markers", l.round, l.firm, "conversed marker disagrees with schedule");
      if (l.reflected != refl) fail("phase_markers", l.round, l.firm, "reflected marker disagrees with schedule");
      if (!conv && !l.messages.empty()) fail("phase_markers", l.round, l.firm, "messages outside a conversation round");
      if ((l.strategy_digest || l.strategy) && !refl) fail("phase_markers", l.round, l.firm, "strategy outside a reflection round");
      if (l.strategy_digest.has_value() != l.strategy.has_value() ||
          (l.strategy && sha256_hex(*l.strategy) != *l.strategy_digest)) {
        fail("phase_markers", l.round, l.firm, "strategy digest mismatch");
      }
    }
  });

  const auto series = price_series(lines);
  json summary;
  const bool have_summary = fs::exists(run.dir / kSummaryFile);
  if (have_summary) summary = read_json_file(run.dir / kSummaryFile);
  const bool stationary = have_summary && summary.value("stop_reason", "") == "stationary";

  run_check("stopping", [&] {
    if (cfg.stopping == StoppingMode::ExPost) {
      if (rounds != cfg.max_rounds) fail("stopping", rounds, 0, "ex-post run ended before the configured rounds");
      return;
    }
    for (int r = 1; r <= rounds; ++r) {
      const auto n = static_cast<std::size_t>(r);
      const auto d = stopping_check(std::span<const double>(series[0]).first(n),
                                    std::span<const double>(series[1]).first(n), det, r);
      if (r < rounds && d.decision != StopDecision::Continue) {
        fail("stopping", r, 0, "stopping rule fired but the run continued");
        return;
      }
      if (r == rounds && d.decision == StopDecision::Continue && rounds < cfg.max_rounds) {
        fail("stopping", r, 0, "run ended without a stopping decision");
      }
    }
  });

  run_check("detectors", [&] {
    if (!have_summary) {
      fail("detectors", 0, 0, "summary.json missing");
      return;
    }
    std::array<StationarityVerdict, 2> verdicts{};
    if (stationary) {
      verdicts = stopping_check(series[0], series[1], det, rounds).verdicts;
    } else {
      for (std::size_t f = 0; f < 2; ++f) verdicts[f] = evaluate_stationarity(series[f], det.convergence[f], det.oscillation[f]);
    }
    if (summary.value("rounds_executed", -1) != rounds) fail("detectors", 0, 0, "rounds_executed differs from the log");
    for (std::size_t f = 0; f < 2; ++f) {
      if (!summary.contains("verdicts") || summary["verdicts"][f] != verdict_to_json(verdicts[f])) {
        fail("detectors", 0, static_cast<int>(f) + 1, "verdict differs: recomputed " + verdict_to_json(verdicts[f]).dump());
      }
    }
    const auto refs = reference_prices(market);
    json formed = nullptr;
    if (refs.cartel) {
      const auto c = detect_collusion_formation(series[0], series[1], refs);
      if (c.formed_at) formed = *c.formed_at;
    }
    const json recorded = summary.contains("collusion") ? summary["collusion"].value("formed_at", json()) : json();
    if (recorded != formed) fail("detectors", 0, 0, "formed_at differs: recomputed " + formed.dump());
  });

  return report;
}

ExportFiles export_series(const fs::path& run_path, const fs::path& out_dir) {
  const LoadedRun run = load_run(run_path);
  const auto market = derive_market(run.config.market);
  const auto refs = reference_prices(market);
  const auto det = detector_params(run.config);
  for (std::size_t i = 0; i < run.lines.size(); ++i) {
    const int want_round = static_cast<int>(i / 2) + 1;
    const int want_firm = static_cast<int>(i % 2) + 1;
    if (run.lines[i].round != want_round || run.lines[i].firm != want_firm) {
      throw Error(ErrorCode::MalformedLog, "log line " + std::to_string(i + 1) + ": expected round " +
                                               std::to_string(want_round) + " firm " + std::to_string(want_firm));
    }
  }
  if (run.lines.size() % 2 != 0) throw Error(ErrorCode::MalformedLog, "log ends mid-round");
  const auto series = price_series(run.lines);

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  ExportFiles files{out_dir / "series.csv", out_dir / "series_summary.json"};
  std::ofstream csv(files.csv, std::ios::binary | std::ios::trunc);
  if (!csv) throw Error(ErrorCode::IoError, "cannot write " + files.csv.string());
  const std::string pb1 = number(refs.bertrand[0]), pb2 = number(refs.bertrand[1]);
  const std::string pm1 = refs.cartel ? number((*refs.cartel)[0]) : "";
  const std::string pm2 = refs.cartel ? number((*refs.cartel)[1]) : "";
  csv << "round,price1,price2,pB,pM,pB2,pM2\r\n";
  for (std::size_t r = 0; r < series[0].size(); ++r) {
    csv << (r + 1) << ',' << number(series[0][r]) << ',' << number(series[1][r]) << ',' << pb1 << ',' << pm1 << ','
        << pb2 << ',' << pm2 << "\r\n";
  }
  if (!csv) throw Error(ErrorCode::IoError, "write failed for " + files.csv.string());

  json summary;
  summary["run_id"] = run.config.run_id;
  summary["rounds"] = series[0].size();
  summary["bertrand"] = refs.bertrand;
  summary["cartel"] = refs.cartel ? json(*refs.cartel) : json(nullptr);
  summary["verdicts"] = json::array();
  for (std::size_t f = 0; f < 2; ++f) {
    summary["verdicts"].push_back(
        verdict_to_json(evaluate_stationarity(series[f], det.convergence[f], det.oscillation[f])));
  }
  json formed = nullptr;
  if (refs.cartel) {
    const auto c = detect_collusion_formation(series[0], series[1], refs);
    if (c.formed_at) formed = *c.formed_at;
  }
  summary["formed_at"] = formed;
  std::ofstream out(files.summary, std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + files.summary.string());
  out << summary.dump(2) << "\n";
  return files;
}

}  // namespace duopoly
