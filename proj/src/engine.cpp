#include "duopoly/engine.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "duopoly/errors.hpp"
#include "duopoly/runlog.hpp"

namespace duopoly {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kCheckpointFormat = "duopoly-checkpoint";
constexpr int kCheckpointVersion = 1;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t policy_seed(const RunConfig& cfg, std::size_t firm) {
  const auto& spec = cfg.policies[firm];
  return spec.seed ? *spec.seed : splitmix64(cfg.seed + firm + 1);
}

bool uses_llm(const RunConfig& cfg) {
  for (const auto& p : cfg.policies) {
    if (std::holds_alternative<LlmSpec>(p.kind)) return true;
  }
  return false;
}

void write_atomic(const fs::path& path, const std::string& content) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot rename " + tmp.string() + ": " + ec.message());
}

class RunLock {
 public:
  explicit RunLock(const fs::path& dir) : path_(dir / "run.lock") {
    const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0) {
      if (errno == EEXIST) {
        throw Error(ErrorCode::RunDirLocked,
                    dir.string() + " is in use by another run (remove run.lock if that run is gone)");
      }
      throw Error(ErrorCode::IoError, "cannot create " + path_.string() + ": " + std::strerror(errno));
    }
    const std::string pid = std::to_string(::getpid()) + "\n";
    [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
    ::close(fd);
  }
  ~RunLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  fs::path path_;
};

json record_to_json(const RoundRecord& r) {
  return json{{"round", r.round},   {"price", r.price},         {"demand", r.demand},
              {"profit", r.profit}, {"rival_price", r.rival_price}};
}

RoundRecord record_from_json(const json& j) {
  return RoundRecord{j.at("round").get<int>(), j.at("price").get<double>(), j.at("demand").get<double>(),
                     j.at("profit").get<double>(), j.at("rival_price").get<double>()};
}

std::string checksum_of(json doc) {
  doc.erase("checksum");
  return sha256_hex(doc.dump());
}

/// Keeps the first `rounds` rounds of an existing log.
void truncate_log(const fs::path& path, int rounds) {
  std::ifstream in(path);
  if (!in) return;
  std::string kept, line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    if (parse_log_line(line, n).round <= rounds) kept += line + "\n";
  }
  in.close();
  write_atomic(path, kept);
}

class Session {
 public:
  Session(RunConfig cfg, fs::path run_dir, EngineOptions opts)
      : cfg_(std::move(cfg)),
        run_dir_(std::move(run_dir)),
        opts_(std::move(opts)),
        market_(derive_market(cfg_.market)),
        refs_(reference_prices(market_)),
        det_(detector_params(cfg_)) {
    if (uses_llm(cfg_)) {
      ClientOptions co;
      co.mode = cfg_.io.mode;
      co.cassette = cfg_.io.cassette;
      co.endpoint = cfg_.model.endpoint;
      co.api_key_env = cfg_.model.api_key_env;
      client_ = std::make_shared<ChatClient>(co, opts_.transport);
    }
    for (std::size_t f = 0; f < 2; ++f) {
      PolicyContext ctx{market_, static_cast<int>(f), policy_seed(cfg_, f), llm_agent_config(cfg_, static_cast<int>(f)),
                        client_};
      policies_[f] = make_policy(cfg_.policies[f], ctx);
    }
  }

  void start_fresh() {
    const auto p = cfg_.initial_prices;
    const auto out = profit(market_, p[0], p[1]);
    for (std::size_t f = 0; f < 2; ++f) {
      history_[f] = {RoundRecord{0, p[f], out.quantity[f], out.profit[f], p[1 - f]}};
      series_[f].clear();
    }
    if (client_) client_->seek(0);
    write_atomic(log_path(), "");
  }

  void restore(const json& ck) {
    round_ = ck.at("round").get<int>();
    for (std::size_t f = 0; f < 2; ++f) {
      history_[f].clear();
      series_[f].clear();
      for (const auto& r : ck.at("histories")[f]) {
        history_[f].push_back(record_from_json(r));
        if (history_[f].back().round >= 1) series_[f].push_back(history_[f].back().price);
      }
      if (history_[f].size() != static_cast<std::size_t>(round_ + 1)) {
        throw Error(ErrorCode::ChecksumMismatch, "checkpoint history length does not match its round");
      }
      strategies_[f] = StrategyLog{};
      for (const auto& s : ck.at("strategy_logs")[f]) {
        strategies_[f].add(s.at("round").get<int>(), s.at("text").get<std::string>());
      }
      policies_[f]->load_state(ck.at("policy_states")[f]);
    }
    if (client_) client_->seek(ck.at("cassette_position").get<std::size_t>());
    const auto& stop = ck.at("stop");
    stationary_ = stop.at("stationary").get<bool>();
    for (std::size_t f = 0; f < 2; ++f) stop_verdicts_[f] = verdict_from_json(stop.at("verdicts")[f]);
    truncate_log(log_path(), round_);
  }

  RunResult execute() {
    write_config(run_dir_ / kConfigFile, cfg_);
    if (stationary_) return finish();
    std::ofstream log(log_path(), std::ios::app | std::ios::binary);
    if (!log) throw Error(ErrorCode::IoError, "cannot open " + log_path().string());

    for (int r = round_ + 1; r <= cfg_.max_rounds; ++r) {
      play_round(r, log);
      if (cfg_.stopping == StoppingMode::Online) {
        const auto outcome = stopping_check(series_[0], series_[1], det_, r);
        if (outcome.decision == StopDecision::Stop) {
          stationary_ = true;
          stop_verdicts_ = outcome.verdicts;
          break;
        }
        if (outcome.decision == StopDecision::HardStop) break;
      }
      if (opts_.checkpoint_every > 0 && r % opts_.checkpoint_every == 0 && r < cfg_.max_rounds) {
        write_checkpoint();
      }
    }
    return finish();
  }

 private:
  struct Snapshot {
    std::array<StrategyLog, 2> strategies;
    std::array<json, 2> policy_states;
    std::size_t cassette_position = 0;
  };

  fs::path log_path() const { return run_dir_ / kRoundLogFile; }

  Observation observe(std::size_t f, int r) const {
    Observation o;
    o.round = r;
    o.firm = static_cast<int>(f);
    o.own_cost = market_.params.cost(f);
    o.conversation_enabled = cfg_.conversation.enabled_at(r);
    o.window = window_view(history_[f], cfg_.memory);
    if (!strategies_[f].empty()) o.current_strategy = strategies_[f].entries().back().text;
    return o;
  }

  Observation reflection_observation(std::size_t f, int r) const {
    Observation o = observe(f, r);
    o.bins = summarize_history(std::span<const RoundRecord>(history_[f]).subspan(1), cfg_.memory);
    o.prior_strategies.assign(strategies_[f].entries().begin(), strategies_[f].entries().end());
    return o;
  }

  double accept_price(double price, std::size_t f) const {
    if (!std::isfinite(price) || price < 0.0) {
      throw Error(ErrorCode::PolicyFailure, "firm " + std::to_string(f + 1) + " returned an invalid price");
    }
    return quantize_price(price);
  }

  Snapshot snapshot() const {
    Snapshot s;
    s.strategies = strategies_;
    for (std::size_t f = 0; f < 2; ++f) s.policy_states[f] = policies_[f]->save_state();
    if (client_) s.cassette_position = client_->position();
    return s;
  }

  void rollback(const Snapshot& s, int completed) {
    for (std::size_t f = 0; f < 2; ++f) {
      history_[f].resize(static_cast<std::size_t>(completed + 1));
      series_[f].resize(static_cast<std::size_t>(completed));
      policies_[f]->load_state(s.policy_states[f]);
    }
    strategies_ = s.strategies;
    if (client_) client_->seek(s.cassette_position);
    round_ = completed;
  }

  void play_round(int r, std::ofstream& log) {
    const Snapshot snap = snapshot();
    try {
      std::array<Observation, 2> obs{observe(0, r), observe(1, r)};
      const bool conversed = cfg_.conversation.enabled_at(r);
      Transcript transcript{r, {}};
      if (conversed) {
        transcript = conversation_phase({policies_[0].get(), policies_[1].get()}, obs, r);
        for (auto& o : obs) o.transcript = transcript;
      }

      PricePair prices{};
      const std::array<std::size_t, 2> order =
          opts_.reverse_decision_order ? std::array<std::size_t, 2>{1, 0} : std::array<std::size_t, 2>{0, 1};
      for (const auto f : order) prices[f] = accept_price(policies_[f]->decide_price(obs[f]), f);

      const auto out = profit(market_, prices[0], prices[1]);
      for (std::size_t f = 0; f < 2; ++f) {
        history_[f].push_back(RoundRecord{r, prices[f], out.quantity[f], out.profit[f], prices[1 - f]});
        series_[f].push_back(prices[f]);
      }

      const bool reflected = reflection_due(r, cfg_.memory) && cfg_.planning.enabled_at(r);
      std::array<std::optional<std::string>, 2> revised;
      if (reflected) {
        for (std::size_t f = 0; f < 2; ++f) {
          revised[f] = policies_[f]->reflect(reflection_observation(f, r));
          if (revised[f]) strategies_[f].add(r, *revised[f]);
        }
      }

      std::string lines;
      for (std::size_t f = 0; f < 2; ++f) {
        RunLogLine line;
        line.run_id = cfg_.run_id;
        line.round = r;
        line.firm = static_cast<int>(f) + 1;
        line.price = prices[f];
        line.demand = out.quantity[f];
        line.profit = out.profit[f];
        line.rival_price = prices[1 - f];
        line.reflected = reflected;
        line.conversed = conversed;
        if (revised[f]) {
          line.strategy_digest = sha256_hex(*revised[f]);
          line.strategy = *revised[f];
        }
        for (std::size_t i = 0; i < transcript.messages.size(); ++i) {
          const auto& m = transcript.messages[i];
          if (m.speaker == static_cast<int>(f)) line.messages.push_back({static_cast<int>(i) + 1, m.exchange, m.text});
        }
        lines += format_log_line(line) + "\n";
      }
      log << lines;
      log.flush();
      if (!log) throw Error(ErrorCode::IoError, "cannot append to " + log_path().string());
      round_ = r;
    } catch (const Error&) {
      rollback(snap, r - 1);
      write_checkpoint();
      throw;
    }
  }

  json checkpoint_json() const {
    json ck;
    ck["format"] = kCheckpointFormat;
    ck["version"] = kCheckpointVersion;
    ck["run_id"] = cfg_.run_id;
    ck["round"] = round_;
    ck["config"] = config_to_json(cfg_);
    ck["config_digest"] = config_identity_digest(cfg_);
    ck["seeds"] = {policy_seed(cfg_, 0), policy_seed(cfg_, 1)};
    ck["histories"] = json::array();
    ck["strategy_logs"] = json::array();
    ck["policy_states"] = json::array();
    for (std::size_t f = 0; f < 2; ++f) {
      json h = json::array();
      for (const auto& r : history_[f]) h.push_back(record_to_json(r));
      ck["histories"].push_back(h);
      json s = json::array();
      for (const auto& e : strategies_[f].entries()) s.push_back({{"round", e.round}, {"text", e.text}});
      ck["strategy_logs"].push_back(s);
      ck["policy_states"].push_back(policies_[f]->save_state());
    }
    ck["cassette_position"] = client_ ? client_->position() : 0;
    ck["stop"] = {{"stationary", stationary_},
                  {"verdicts", {verdict_to_json(stop_verdicts_[0]), verdict_to_json(stop_verdicts_[1])}}};
    ck["checksum"] = checksum_of(ck);
    return ck;
  }

  void write_checkpoint() const { write_atomic(run_dir_ / kCheckpointFile, checkpoint_json().dump(1) + "\n"); }

  RunResult finish() {
    RunResult res;
    res.run_id = cfg_.run_id;
    res.rounds_executed = round_;
    res.run_dir = run_dir_;
    res.log_path = log_path();
    res.checkpoint_path = run_dir_ / kCheckpointFile;
    if (stationary_) {
      res.stop_reason = StopReason::Stationary;
      res.verdicts = stop_verdicts_;
    } else {
      res.stop_reason = StopReason::MaxRounds;
      for (std::size_t f = 0; f < 2; ++f) {
        res.verdicts[f] = evaluate_stationarity(series_[f], det_.convergence[f], det_.oscillation[f]);
      }
    }
    res.collusion_defined = refs_.cartel.has_value();
    if (res.collusion_defined) res.collusion = detect_collusion_formation(series_[0], series_[1], refs_);
    write_checkpoint();
    write_atomic(run_dir_ / kSummaryFile, result_to_json(res).dump(2) + "\n");
    return res;
  }

  RunConfig cfg_;
  fs::path run_dir_;
  EngineOptions opts_;
  DerivedMarket market_;
  ReferencePrices refs_;
  DetectorParams det_;
  std::shared_ptr<ChatClient> client_;
  std::array<std::unique_ptr<Policy>, 2> policies_;
  std::array<std::vector<RoundRecord>, 2> history_;
  std::array<std::vector<double>, 2> series_;
  std::array<StrategyLog, 2> strategies_;
  int round_ = 0;
  bool stationary_ = false;
  std::array<StationarityVerdict, 2> stop_verdicts_{};
};

fs::path prepare_run_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + dir.string() + ": " + ec.message());
  return dir;
}

json load_checkpoint(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  json ck;
  try {
    ck = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ChecksumMismatch, path.string() + " is not valid JSON: " + e.what());
  }
  if (!ck.is_object() || ck.value("format", "") != kCheckpointFormat) {
    throw Error(ErrorCode::ChecksumMismatch, path.string() + " is not a checkpoint");
  }
  if (!ck.contains("checksum") || !ck["checksum"].is_string() || ck["checksum"].get<std::string>() != checksum_of(ck)) {
    throw Error(ErrorCode::ChecksumMismatch, path.string() + " failed its checksum");
  }
  const int version = ck.value("version", 0);
  if (version != kCheckpointVersion) {
    throw Error(ErrorCode::VersionMismatch, "checkpoint version " + std::to_string(version) + ", expected " +
                                                std::to_string(kCheckpointVersion));
  }
  return ck;
}

void check_schedule_history(const PhaseSchedule& before, const PhaseSchedule& after, int completed,
                            const char* field) {
  for (int r = 1; r <= completed; ++r) {
    if (before.enabled_at(r) != after.enabled_at(r)) {
      throw Error(ErrorCode::ConfigError, std::string(field) + ": schedule changes round " + std::to_string(r) +
                                              ", which has already been played");
    }
  }
}

}  // namespace

std::string_view to_string(StopReason reason) {
  return reason == StopReason::Stationary ? "stationary" : "max_rounds";
}

json result_to_json(const RunResult& result) {
  json j;
  j["run_id"] = result.run_id;
  j["rounds_executed"] = result.rounds_executed;
  j["stop_reason"] = std::string(to_string(result.stop_reason));
  j["verdicts"] = {verdict_to_json(result.verdicts[0]), verdict_to_json(result.verdicts[1])};
  j["collusion"] = {{"defined", result.collusion_defined},
                    {"formed_at", result.collusion.formed_at ? json(*result.collusion.formed_at) : json(nullptr)}};
  j["log"] = result.log_path.filename().string();
  return j;
}

Transcript conversation_phase(std::array<Policy*, 2> agents, const std::array<Observation, 2>& base, int round,
                              int max_pairs) {
  Transcript t{round, {}};
  const std::size_t first = round % 2 == 1 ? 0 : 1;
  std::optional<std::string> inbound;
  for (int pair = 1; pair <= max_pairs; ++pair) {
    for (std::size_t k = 0; k < 2; ++k) {
      const std::size_t f = k == 0 ? first : 1 - first;
      Observation o = base[f];
      o.transcript = t;
      auto msg = agents[f]->converse(o, inbound);
      if (!msg || msg->empty()) return t;
      t.messages.push_back(TranscriptMessage{static_cast<int>(f), pair, *msg});
      inbound = std::move(msg);
    }
  }
  return t;
}

RunResult run(const RunConfig& config, const EngineOptions& options) {
  validate(config);
  const fs::path dir = prepare_run_dir(options.out_dir / config.run_id);
  RunLock lock(dir);
  Session session(config, dir, options);
  session.start_fresh();
  return session.execute();
}

RunResult resume(const fs::path& checkpoint, const ResumeOverrides& overrides, const EngineOptions& options) {
  const json ck = load_checkpoint(checkpoint);
  RunConfig stored;
  try {
    stored = config_from_json(ck.at("config"));
  } catch (const Error& e) {
    throw Error(ErrorCode::ChecksumMismatch, std::string("stored config is invalid: ") + e.what());
  }
  if (config_identity_digest(stored) != ck.at("config_digest").get<std::string>()) {
    throw Error(ErrorCode::ChecksumMismatch, "stored config does not match its digest");
  }

  RunConfig next = overrides.config.value_or(stored);
  if (overrides.rounds) next.max_rounds = *overrides.rounds;
  if (overrides.io_mode) next.io.mode = *overrides.io_mode;
  if (overrides.cassette) next.io.cassette = *overrides.cassette;
  const auto diffs = non_resumable_differences(stored, next);
  if (!diffs.empty()) {
    std::string names;
    for (const auto& d : diffs) names += (names.empty() ? "" : ", ") + d;
    throw Error(ErrorCode::ConfigError, "resume may only change schedules, rounds and I/O settings; changed: " + names);
  }
  validate(next);
  const int completed = ck.at("round").get<int>();
  if (next.max_rounds < completed) {
    throw Error(ErrorCode::ConfigError, "rounds: " + std::to_string(next.max_rounds) + " is below the " +
                                            std::to_string(completed) + " rounds already played");
  }
  check_schedule_history(stored.planning, next.planning, completed, "planning");
  check_schedule_history(stored.conversation, next.conversation, completed, "conversation");

  const fs::path dir = checkpoint.parent_path().empty() ? fs::path(".") : checkpoint.parent_path();
  RunLock lock(dir);
  Session session(next, dir, options);
  session.restore(ck);
  return session.execute();
}

}  // namespace duopoly
