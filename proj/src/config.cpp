#include "duopoly/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "duopoly/errors.hpp"

namespace duopoly {

using nlohmann::json;

namespace {

bool is_seed(const json& v) {
  return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
}

[[noreturn]] void config_error(const std::string& field, const std::string& what) {
  throw Error(ErrorCode::ConfigError, field + ": " + what);
}

void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.count(key)) config_error(where.empty() ? key : where + "." + key, "unknown key");
  }
}

const json& require(const json& obj, const std::string& key, const std::string& where = "") {
  auto it = obj.find(key);
  if (it == obj.end()) config_error(where.empty() ? key : where + "." + key, "missing required field");
  return *it;
}

template <class T>
T get_as(const json& value, const std::string& field) {
  try {
    return value.get<T>();
  } catch (const json::exception&) {
    config_error(field, "wrong type");
  }
}

int get_int(const json& value, const std::string& field) {
  if (!value.is_number_integer()) config_error(field, "expected an integer");
  return value.get<int>();
}

bool get_bool(const json& value, const std::string& field) {
  if (!value.is_boolean()) config_error(field, "expected true or false");
  return value.get<bool>();
}

std::string get_string(const json& value, const std::string& field) {
  if (!value.is_string()) config_error(field, "expected a string");
  return value.get<std::string>();
}

PhaseSchedule schedule_from_json(const json& value, const std::string& field) {
  if (value.is_boolean()) return PhaseSchedule(value.get<bool>());
  if (!value.is_array()) config_error(field, "expected a boolean or a list of segments");
  std::vector<ScheduleSegment> segments;
  for (std::size_t i = 0; i < value.size(); ++i) {
    const auto& seg = value[i];
    const std::string where = field + "[" + std::to_string(i) + "]";
    if (!seg.is_object()) config_error(where, "expected an object");
    reject_unknown(seg, {"from", "to", "enabled"}, where);
    ScheduleSegment s;
    s.from_round = get_int(require(seg, "from", where), where + ".from");
    s.to_round = seg.contains("to") ? get_int(seg["to"], where + ".to") : 0;
    s.enabled = get_bool(require(seg, "enabled", where), where + ".enabled");
    segments.push_back(s);
  }
  return PhaseSchedule(std::move(segments));
}

json schedule_to_json(const PhaseSchedule& schedule) {
  if (schedule.is_constant()) return schedule.segments().front().enabled;
  json out = json::array();
  for (const auto& s : schedule.segments()) {
    json seg{{"from", s.from_round}};
    if (s.to_round != 0) seg["to"] = s.to_round;
    seg["enabled"] = s.enabled;
    out.push_back(seg);
  }
  return out;
}

Persona persona_from_json(const json& value, const std::string& field) {
  try {
    return parse_persona(get_string(value, field));
  } catch (const Error&) {
    config_error(field, "expected Active, Aggressive or None");
  }
}

std::string persona_name(Persona p) {
  switch (p) {
    case Persona::Active: return "Active";
    case Persona::Aggressive: return "Aggressive";
    case Persona::None: return "None";
  }
  return "None";
}

std::vector<double> number_list(const json& value, const std::string& field) {
  if (!value.is_array()) config_error(field, "expected a list of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < value.size(); ++i) {
    out.push_back(parse_number(value[i], field + "[" + std::to_string(i) + "]"));
  }
  return out;
}

}  // namespace

double parse_number(const json& value, const std::string& field) {
  if (value.is_number()) return value.get<double>();
  if (!value.is_string()) config_error(field, "expected a number or an \"n/m\" fraction");
  const std::string text = value.get<std::string>();
  auto parse_part = [&](std::string_view part) {
    double out = 0.0;
    const auto* end = part.data() + part.size();
    auto [ptr, ec] = std::from_chars(part.data(), end, out);
    if (ec != std::errc() || ptr != end || part.empty()) {
      config_error(field, "cannot parse \"" + text + "\" as a number");
    }
    return out;
  };
  const auto slash = text.find('/');
  if (slash == std::string::npos) return parse_part(text);
  const double num = parse_part(std::string_view(text).substr(0, slash));
  const double den = parse_part(std::string_view(text).substr(slash + 1));
  if (den == 0.0) config_error(field, "zero denominator");
  return num / den;
}

PolicySpec policy_from_json(const json& j, const std::string& field) {
  std::string kind;
  json params = json::object();
  if (j.is_string()) {
    kind = j.get<std::string>();
  } else if (j.is_object()) {
    kind = get_string(require(j, "kind", field), field + ".kind");
    params = j;
    params.erase("kind");
  } else {
    config_error(field, "expected a policy name or object");
  }

  PolicySpec spec;
  if (params.contains("seed")) {
    if (!is_seed(params["seed"])) config_error(field + ".seed", "expected a non-negative integer");
    spec.seed = params["seed"].get<std::uint64_t>();
    params.erase("seed");
  }
  auto num = [&](const char* key, double fallback) {
    return params.contains(key) ? parse_number(params[key], field + "." + key) : fallback;
  };
  auto integer = [&](const char* key, int fallback) {
    return params.contains(key) ? get_int(params[key], field + "." + key) : fallback;
  };

  if (kind == "constant") {
    reject_unknown(params, {"price"}, field);
    spec.kind = ConstantSpec{num("price", ConstantSpec{}.price)};
  } else if (kind == "myopic") {
    reject_unknown(params, {}, field);
    spec.kind = MyopicBestResponseSpec{};
  } else if (kind == "grim_trigger") {
    reject_unknown(params, {"collusive_price", "punish_price", "tolerance", "punish_length"}, field);
    const GrimTriggerSpec d;
    spec.kind = GrimTriggerSpec{num("collusive_price", d.collusive_price), num("punish_price", d.punish_price),
                                num("tolerance", d.tolerance), integer("punish_length", d.punish_length)};
  } else if (kind == "qlearning") {
    reject_unknown(params, {"grid", "grid_points", "learning_rate", "discount", "exploration_decay"}, field);
    QLearningConfig q;
    if (params.contains("grid")) q.grid = number_list(params["grid"], field + ".grid");
    q.grid_points = integer("grid_points", q.grid_points);
    q.learning_rate = num("learning_rate", q.learning_rate);
    q.discount = num("discount", q.discount);
    q.exploration_decay = num("exploration_decay", q.exploration_decay);
    spec.kind = q;
  } else if (kind == "llm") {
    reject_unknown(params, {}, field);
    spec.kind = LlmSpec{};
  } else if (kind == "echo") {
    reject_unknown(params, {"seed_message", "price"}, field);
    EchoSpec e;
    if (params.contains("seed_message")) e.seed_message = get_string(params["seed_message"], field + ".seed_message");
    e.price = num("price", e.price);
    spec.kind = e;
  } else {
    config_error(field + ".kind", "unknown policy \"" + kind + "\"");
  }
  try {
    validate(spec);
  } catch (const Error& e) {
    config_error(field, e.what());
  }
  return spec;
}

json policy_to_json(const PolicySpec& spec) {
  json out{{"kind", std::string(kind_name(spec))}};
  if (const auto* s = std::get_if<ConstantSpec>(&spec.kind)) {
    out["price"] = s->price;
  } else if (const auto* g = std::get_if<GrimTriggerSpec>(&spec.kind)) {
    out["collusive_price"] = g->collusive_price;
    out["punish_price"] = g->punish_price;
    out["tolerance"] = g->tolerance;
    out["punish_length"] = g->punish_length;
  } else if (const auto* q = std::get_if<QLearningConfig>(&spec.kind)) {
    if (!q->grid.empty()) out["grid"] = q->grid;
    out["grid_points"] = q->grid_points;
    out["learning_rate"] = q->learning_rate;
    out["discount"] = q->discount;
    out["exploration_decay"] = q->exploration_decay;
  } else if (const auto* e = std::get_if<EchoSpec>(&spec.kind)) {
    out["seed_message"] = e->seed_message;
    out["price"] = e->price;
  }
  if (spec.seed) out["seed"] = *spec.seed;
  if (out.size() == 1) return out["kind"];
  return out;
}

RunConfig config_from_json(const json& j) {
  if (!j.is_object()) config_error("config", "expected a JSON object");
  reject_unknown(j,
                 {"run_id", "planning", "conversation", "persona", "cost1", "cost2", "init_price1",
                  "init_price2", "a", "beta", "d", "rounds", "policy1", "policy2", "seed", "io_mode",
                  "cassette", "model", "firm_names", "memory", "detectors", "stopping"},
                 "");
  RunConfig cfg;
  if (j.contains("run_id")) cfg.run_id = get_string(j["run_id"], "run_id");

  cfg.planning = schedule_from_json(require(j, "planning"), "planning");
  cfg.conversation = schedule_from_json(require(j, "conversation"), "conversation");

  const auto& persona = require(j, "persona");
  if (persona.is_array()) {
    if (persona.size() != 2) config_error("persona", "expected one persona or a pair");
    cfg.persona = {persona_from_json(persona[0], "persona[0]"), persona_from_json(persona[1], "persona[1]")};
  } else {
    const Persona p = persona_from_json(persona, "persona");
    cfg.persona = {p, p};
  }

  cfg.market.c1 = parse_number(require(j, "cost1"), "cost1");
  cfg.market.c2 = parse_number(require(j, "cost2"), "cost2");
  cfg.initial_prices = {parse_number(require(j, "init_price1"), "init_price1"),
                        parse_number(require(j, "init_price2"), "init_price2")};
  cfg.market.d = parse_number(require(j, "d"), "d");
  if (j.contains("beta")) cfg.market.beta = parse_number(j["beta"], "beta");
  if (j.contains("a")) cfg.market.a = parse_number(j["a"], "a");
  cfg.max_rounds = get_int(require(j, "rounds"), "rounds");

  if (j.contains("policy1")) cfg.policies[0] = policy_from_json(j["policy1"], "policy1");
  if (j.contains("policy2")) cfg.policies[1] = policy_from_json(j["policy2"], "policy2");

  if (j.contains("seed")) {
    if (!is_seed(j["seed"])) config_error("seed", "expected a non-negative integer");
    cfg.seed = j["seed"].get<std::uint64_t>();
  }
  if (j.contains("io_mode")) {
    try {
      cfg.io.mode = parse_io_mode(get_string(j["io_mode"], "io_mode"));
    } catch (const Error&) {
      config_error("io_mode", "expected live, record or replay");
    }
  }
  if (j.contains("cassette")) cfg.io.cassette = get_string(j["cassette"], "cassette");

  if (j.contains("model")) {
    const auto& m = j["model"];
    if (!m.is_object()) config_error("model", "expected an object");
    reject_unknown(m, {"model_id", "temperature", "max_tokens", "parse_retries", "word_budget", "endpoint", "api_key_env"},
                   "model");
    if (m.contains("model_id")) cfg.model.model_id = get_string(m["model_id"], "model.model_id");
    if (m.contains("temperature")) cfg.model.temperature = parse_number(m["temperature"], "model.temperature");
    if (m.contains("max_tokens")) cfg.model.max_tokens = get_int(m["max_tokens"], "model.max_tokens");
    if (m.contains("parse_retries")) cfg.model.parse_retries = get_int(m["parse_retries"], "model.parse_retries");
    if (m.contains("word_budget")) cfg.model.word_budget = get_int(m["word_budget"], "model.word_budget");
    if (m.contains("endpoint")) cfg.model.endpoint = get_string(m["endpoint"], "model.endpoint");
    if (m.contains("api_key_env")) cfg.model.api_key_env = get_string(m["api_key_env"], "model.api_key_env");
  }

  if (j.contains("firm_names")) {
    const auto& f = j["firm_names"];
    if (!f.is_array() || f.size() != 2) config_error("firm_names", "expected two names");
    cfg.firm_names = {get_string(f[0], "firm_names[0]"), get_string(f[1], "firm_names[1]")};
  }

  if (j.contains("memory")) {
    const auto& m = j["memory"];
    if (!m.is_object()) config_error("memory", "expected an object");
    reject_unknown(m, {"window_k", "bin_size", "max_bins", "reflection_period"}, "memory");
    if (m.contains("window_k")) cfg.memory.window_k = get_int(m["window_k"], "memory.window_k");
    if (m.contains("bin_size")) cfg.memory.bin_size = get_int(m["bin_size"], "memory.bin_size");
    if (m.contains("max_bins")) cfg.memory.max_bins = get_int(m["max_bins"], "memory.max_bins");
    if (m.contains("reflection_period"))
      cfg.memory.reflection_period = get_int(m["reflection_period"], "memory.reflection_period");
  }

  if (j.contains("detectors")) {
    const auto& d = j["detectors"];
    if (!d.is_object()) config_error("detectors", "expected an object");
    reject_unknown(d, {"epsilon", "theta", "convergence_window", "oscillation_bound", "oscillation_window"}, "detectors");
    if (d.contains("epsilon")) cfg.detectors.epsilon = parse_number(d["epsilon"], "detectors.epsilon");
    if (d.contains("theta")) cfg.detectors.theta = parse_number(d["theta"], "detectors.theta");
    if (d.contains("convergence_window"))
      cfg.detectors.convergence_window = get_int(d["convergence_window"], "detectors.convergence_window");
    if (d.contains("oscillation_bound"))
      cfg.detectors.oscillation_bound = parse_number(d["oscillation_bound"], "detectors.oscillation_bound");
    if (d.contains("oscillation_window"))
      cfg.detectors.oscillation_window = get_int(d["oscillation_window"], "detectors.oscillation_window");
  }

  if (j.contains("stopping")) {
    const auto s = get_string(j["stopping"], "stopping");
    if (s == "online") cfg.stopping = StoppingMode::Online;
    else if (s == "ex-post") cfg.stopping = StoppingMode::ExPost;
    else config_error("stopping", "expected \"online\" or \"ex-post\"");
  }

  validate(cfg);
  return cfg;
}

json config_to_json(const RunConfig& cfg) {
  json j;
  j["run_id"] = cfg.run_id;
  j["planning"] = schedule_to_json(cfg.planning);
  j["conversation"] = schedule_to_json(cfg.conversation);
  if (cfg.persona[0] == cfg.persona[1]) {
    j["persona"] = persona_name(cfg.persona[0]);
  } else {
    j["persona"] = {persona_name(cfg.persona[0]), persona_name(cfg.persona[1])};
  }
  j["cost1"] = cfg.market.c1;
  j["cost2"] = cfg.market.c2;
  j["init_price1"] = cfg.initial_prices[0];
  j["init_price2"] = cfg.initial_prices[1];
  j["a"] = cfg.market.a;
  j["beta"] = cfg.market.beta;
  j["d"] = cfg.market.d;
  j["rounds"] = cfg.max_rounds;
  j["policy1"] = policy_to_json(cfg.policies[0]);
  j["policy2"] = policy_to_json(cfg.policies[1]);
  j["seed"] = cfg.seed;
  j["io_mode"] = std::string(to_string(cfg.io.mode));
  if (!cfg.io.cassette.empty()) j["cassette"] = cfg.io.cassette;
  j["model"] = {{"model_id", cfg.model.model_id},       {"temperature", cfg.model.temperature},
                {"max_tokens", cfg.model.max_tokens},   {"parse_retries", cfg.model.parse_retries},
                {"word_budget", cfg.model.word_budget}, {"endpoint", cfg.model.endpoint},
                {"api_key_env", cfg.model.api_key_env}};
  j["firm_names"] = cfg.firm_names;
  j["memory"] = {{"window_k", cfg.memory.window_k},
                 {"bin_size", cfg.memory.bin_size},
                 {"max_bins", cfg.memory.max_bins},
                 {"reflection_period", cfg.memory.reflection_period}};
  json det{{"theta", cfg.detectors.theta},
           {"convergence_window", cfg.detectors.convergence_window},
           {"oscillation_window", cfg.detectors.oscillation_window}};
  if (cfg.detectors.epsilon) det["epsilon"] = *cfg.detectors.epsilon;
  if (cfg.detectors.oscillation_bound) det["oscillation_bound"] = *cfg.detectors.oscillation_bound;
  j["detectors"] = det;
  j["stopping"] = cfg.stopping == StoppingMode::Online ? "online" : "ex-post";
  return j;
}

void validate(const RunConfig& cfg) {
  if (cfg.run_id.empty()) config_error("run_id", "must not be empty");
  if (cfg.run_id.find_first_of("/\\") != std::string::npos) config_error("run_id", "must not contain path separators");
  if (cfg.max_rounds < 1 || cfg.max_rounds > kMaxRounds) {
    config_error("rounds", "must be in [1, " + std::to_string(kMaxRounds) + "]");
  }
  if (!(cfg.initial_prices[0] >= 0.0)) config_error("init_price1", "must be >= 0");
  if (!(cfg.initial_prices[1] >= 0.0)) config_error("init_price2", "must be >= 0");
  try {
    derive_market(cfg.market);
  } catch (const Error& e) {
    config_error("market", e.what());
  }
  cfg.planning.validate(cfg.max_rounds, "planning");
  cfg.conversation.validate(cfg.max_rounds, "conversation");
  for (int i = 0; i < 2; ++i) {
    try {
      validate(cfg.policies[static_cast<std::size_t>(i)]);
    } catch (const Error& e) {
      config_error("policy" + std::to_string(i + 1), e.what());
    }
  }
  try {
    validate(cfg.memory);
  } catch (const Error& e) {
    config_error("memory", e.what());
  }
  const auto& d = cfg.detectors;
  if (d.epsilon && !(*d.epsilon > 0.0)) config_error("detectors.epsilon", "must be positive");
  if (!(d.theta > 0.0 && d.theta < 1.0)) config_error("detectors.theta", "must be in (0, 1)");
  if (d.convergence_window < 1) config_error("detectors.convergence_window", "must be >= 1");
  if (d.oscillation_bound && !(*d.oscillation_bound >= 0.0)) config_error("detectors.oscillation_bound", "must be >= 0");
  if (d.oscillation_window < 1) config_error("detectors.oscillation_window", "must be >= 1");
  for (int i = 0; i < 2; ++i) {
    try {
      validate(llm_agent_config(cfg, i));
    } catch (const Error& e) {
      config_error("model", e.what());
    }
  }
  try {
    detector_params(cfg);
  } catch (const Error& e) {
    config_error("detectors", e.what());
  }
  if (cfg.firm_names[0].empty() || cfg.firm_names[1].empty()) config_error("firm_names", "must not be empty");
  const bool uses_llm = std::any_of(cfg.policies.begin(), cfg.policies.end(),
                                    [](const PolicySpec& p) { return std::holds_alternative<LlmSpec>(p.kind); });
  if (uses_llm && cfg.io.mode != IoMode::Live && cfg.io.cassette.empty()) {
    config_error("cassette", "required for record and replay modes");
  }
}

DetectorParams detector_params(const RunConfig& cfg) {
  DetectorParams params = default_detector_params(derive_market(cfg.market));
  for (std::size_t i = 0; i < 2; ++i) {
    if (cfg.detectors.epsilon) params.convergence[i].epsilon = *cfg.detectors.epsilon;
    params.convergence[i].theta = cfg.detectors.theta;
    params.convergence[i].window = cfg.detectors.convergence_window;
    if (cfg.detectors.oscillation_bound) params.oscillation[i].bound = *cfg.detectors.oscillation_bound;
    params.oscillation[i].window = cfg.detectors.oscillation_window;
  }
  params.hard_cap = cfg.max_rounds;
  return params;
}

LlmAgentConfig llm_agent_config(const RunConfig& cfg, int firm) {
  const auto f = static_cast<std::size_t>(firm);
  LlmAgentConfig out;
  out.model_id = cfg.model.model_id;
  out.temperature = cfg.model.temperature;
  out.max_tokens = cfg.model.max_tokens;
  out.firm_name = cfg.firm_names[f];
  out.rival_firm_name = cfg.firm_names[1 - f];
  out.firm_cost = cfg.market.cost(f);
  out.persona = cfg.persona[f];
  out.parse_retries = cfg.model.parse_retries;
  out.word_budget = cfg.model.word_budget;
  return out;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ConfigError, "cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ConfigError, path.string() + ": " + e.what());
  }
  RunConfig cfg = config_from_json(j);
  if (!cfg.io.cassette.empty() && std::filesystem::path(cfg.io.cassette).is_relative()) {
    cfg.io.cassette = (path.parent_path() / cfg.io.cassette).lexically_normal().string();
  }
  return cfg;
}

void write_config(const std::filesystem::path& path, const RunConfig& cfg) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << config_to_json(cfg).dump(2) << "\n";
}

namespace {

const std::set<std::string> kResumableKeys{"planning", "conversation", "rounds", "io_mode", "cassette"};

}  // namespace

std::string config_identity_digest(const RunConfig& cfg) {
  json j = config_to_json(cfg);
  for (const auto& k : kResumableKeys) j.erase(k);
  return sha256_hex(j.dump());
}

std::vector<std::string> non_resumable_differences(const RunConfig& before, const RunConfig& after) {
  const json a = config_to_json(before);
  const json b = config_to_json(after);
  std::set<std::string> keys;
  for (const auto& [k, _] : a.items()) keys.insert(k);
  for (const auto& [k, _] : b.items()) keys.insert(k);
  std::vector<std::string> out;
  for (const auto& k : keys) {
    if (kResumableKeys.count(k)) continue;
    if (!a.contains(k) || !b.contains(k) || a[k] != b[k]) out.push_back(k);
  }
  return out;
}

PresetGroup load_preset_group(const std::filesystem::path& preset_dir, const std::string& name) {
  const auto path = preset_dir / (name + ".json");
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ConfigError, "unknown preset \"" + name + "\"");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ConfigError, path.string() + ": " + e.what());
  }
  PresetGroup group;
  group.name = name;
  group.title = j.value("title", "");
  const auto& rows = j.at("rows");
  for (std::size_t i = 0; i < rows.size(); ++i) {
    json row = rows[i];
    if (!row.contains("run_id")) row["run_id"] = name + "-row" + std::to_string(i + 1);
    try {
      group.rows.push_back(config_from_json(row));
    } catch (const Error& e) {
      throw Error(ErrorCode::ConfigError, name + " row " + std::to_string(i + 1) + ": " + e.what());
    }
  }
  return group;
}

RunConfig load_preset(const std::filesystem::path& preset_dir, const std::string& name, int row) {
  auto group = load_preset_group(preset_dir, name);
  if (row < 1 || static_cast<std::size_t>(row) > group.rows.size()) {
    throw Error(ErrorCode::ConfigError,
                "preset " + name + " has " + std::to_string(group.rows.size()) + " rows, asked for " +
                    std::to_string(row));
  }
  return group.rows[static_cast<std::size_t>(row - 1)];
}

std::vector<std::string> list_presets(const std::filesystem::path& preset_dir) {
  std::vector<std::string> out;
  std::error_code ec;
  for (const auto& entry : std::filesystem::directory_iterator(preset_dir, ec)) {
    if (entry.path().extension() == ".json") out.push_back(entry.path().stem().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace duopoly
