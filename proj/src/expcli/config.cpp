#include "basinlab/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace basinlab {

namespace {

using nlohmann::json;

// Typed access to one JSON object with strict key checking. Every lookup is
// recorded so leftover (unknown) keys can be reported.
class Section {
 public:
  Section(const json& doc, std::string path) : doc_(doc), path_(std::move(path)) {
    if (!doc_.is_object()) throw ConfigError(path_.empty() ? "<document>" : path_, "expected an object");
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  bool has(const std::string& key) {
    seen_.insert(key);
    return doc_.contains(key);
  }

  double number(const std::string& key, double fallback) {
    if (!has(key)) return fallback;
    const json& v = doc_.at(key);
    if (!v.is_number()) throw ConfigError(field(key), "expected a number");
    return v.get<double>();
  }

  int integer(const std::string& key, int fallback) {
    if (!has(key)) return fallback;
    const json& v = doc_.at(key);
    if (!v.is_number_integer()) throw ConfigError(field(key), "expected an integer");
    return v.get<int>();
  }

  std::uint64_t unsigned_integer(const std::string& key, std::uint64_t fallback) {
    if (!has(key)) return fallback;
    const json& v = doc_.at(key);
    if (!v.is_number_unsigned()) throw ConfigError(field(key), "expected a non-negative integer");
    return v.get<std::uint64_t>();
  }

  bool boolean(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    const json& v = doc_.at(key);
    if (!v.is_boolean()) throw ConfigError(field(key), "expected true or false");
    return v.get<bool>();
  }

  std::string string(const std::string& key, const std::string& fallback) {
    if (!has(key)) return fallback;
    const json& v = doc_.at(key);
    if (!v.is_string()) throw ConfigError(field(key), "expected a string");
    return v.get<std::string>();
  }

  template <class T>
  std::vector<T> list(const std::string& key, const std::vector<T>& fallback) {
    if (!has(key)) return fallback;
    const json& v = doc_.at(key);
    if (!v.is_array()) throw ConfigError(field(key), "expected an array");
    std::vector<T> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const json& e = v[i];
      const std::string at = field(key) + "[" + std::to_string(i) + "]";
      if constexpr (std::is_same_v<T, std::string>) {
        if (!e.is_string()) throw ConfigError(at, "expected a string");
      } else if constexpr (std::is_integral_v<T>) {
        if (!e.is_number_integer()) throw ConfigError(at, "expected an integer");
      } else {
        if (!e.is_number()) throw ConfigError(at, "expected a number");
      }
      out.push_back(e.get<T>());
    }
    return out;
  }

  const json* child(const std::string& key) {
    if (!has(key)) return nullptr;
    return &doc_.at(key);
  }

  void finish() const {
    for (auto it = doc_.begin(); it != doc_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError(field(it.key()), "unknown key");
  }

 private:
  const json& doc_;
  std::string path_;
  std::set<std::string> seen_;
};

void require(bool ok, const std::string& field, const std::string& what) {
  if (!ok) throw ConfigError(field, what);
}

void check_tag(const std::string& tag, const std::string& field) {
  const auto& tags = experiment_tags();
  if (std::find(tags.begin(), tags.end(), tag) == tags.end())
    throw ConfigError(field, "unknown experiment '" + tag + "'");
}

}  // namespace

GameSpec ExperimentConfig::make_game() const {
  try {
    return game_from_json(game);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError("game", e.what());
  }
}

std::vector<Arm> ExperimentConfig::arm_list() const {
  std::vector<Arm> out;
  for (std::size_t i = 0; i < arms.size(); ++i) {
    try {
      out.push_back(parse_arm(arms[i]));
    } catch (const ContractError& e) {
      throw ConfigError("arms[" + std::to_string(i) + "]", e.what());
    }
  }
  return out;
}

Schedule ExperimentConfig::outer_schedule() const {
  Schedule s = schedule;
  s.lambda = lambda;
  return s;
}

RunOptions ExperimentConfig::run_options() const {
  RunOptions o;
  o.mode = mode;
  o.batch = batch;
  o.tau = tau;
  return o;
}

ExperimentConfig default_config(const std::string& experiment) {
  check_tag(experiment, "experiment");
  ExperimentConfig c;
  c.experiment = experiment;
  c.output = "out/" + experiment;
  if (experiment == "ablate" || experiment == "tausweep") c.arms = {"pg", "own_only", "peer_only", "meta_mapg"};
  if (experiment == "cooldown" || experiment == "props") {
    c.seeds = 80;
    c.schedule.total_steps = 2000;
  }
  if (experiment == "sadiag") c.batch = {256, 100, true};
  return c;
}

ExperimentConfig config_from_json(const nlohmann::json& doc, const std::string& experiment) {
  Section root(doc, "");
  std::string tag = root.string("experiment", experiment.empty() ? "sweep" : experiment);
  check_tag(tag, "experiment");
  if (!experiment.empty() && tag != experiment)
    throw ConfigError("experiment", "config is tagged '" + tag + "' but command is '" + experiment + "'");

  ExperimentConfig c = default_config(tag);
  if (const json* g = root.child("game")) {
    if (!g->is_object()) throw ConfigError("game", "expected an object");
    c.game = *g;
  }
  c.arms = root.list<std::string>("arms", c.arms);
  require(!c.arms.empty(), "arms", "at least one arm is required");
  c.arm_list();
  c.lambda = root.number("lambda", c.lambda);
  require(c.lambda >= 0.0, "lambda", "must be non-negative");

  if (const json* s = root.child("schedule")) {
    Section sec(*s, "schedule");
    const std::string rule =
        sec.string("step_rule", c.schedule.step_rule == StepRule::constant ? "constant" : "harmonic");
    require(rule == "constant" || rule == "harmonic", "schedule.step_rule", "expected constant or harmonic");
    c.schedule.step_rule = rule == "constant" ? StepRule::constant : StepRule::harmonic;
    c.schedule.alpha = sec.number("alpha", c.schedule.alpha);
    c.schedule.c = sec.number("c", c.schedule.c);
    c.schedule.n0 = sec.number("n0", c.schedule.n0);
    c.schedule.total_steps = sec.integer("total_steps", c.schedule.total_steps);
    sec.finish();
  }
  require(c.schedule.total_steps >= 1, "schedule.total_steps", "must be at least 1");
  require(c.schedule.alpha >= 0.0, "schedule.alpha", "must be non-negative");
  require(c.schedule.c > 0.0 && c.schedule.n0 > 0.0, "schedule", "c and n0 must be positive");

  if (const json* u = root.child("unroll")) {
    Section sec(*u, "unroll");
    c.unroll.length = sec.integer("length", c.unroll.length);
    c.unroll.inner_step_own = sec.number("inner_step_own", c.unroll.inner_step_own);
    c.unroll.inner_step_peer = sec.number("inner_step_peer", c.unroll.inner_step_peer);
    sec.finish();
  }
  require(c.unroll.length >= 0, "unroll.length", "must be non-negative");
  require(c.unroll.inner_step_own >= 0.0 && c.unroll.inner_step_peer >= 0.0, "unroll", "inner steps must be >= 0");

  if (const json* gr = root.child("grid")) {
    Section sec(*gr, "grid");
    c.grid.n1 = sec.integer("n1", c.grid.n1);
    c.grid.n2 = sec.integer("n2", c.grid.n2);
    c.grid.lo = sec.number("lo", c.grid.lo);
    c.grid.hi = sec.number("hi", c.grid.hi);
    c.seeds_per_cell = sec.integer("seeds_per_cell", c.seeds_per_cell);
    sec.finish();
  }
  require(c.grid.n1 >= 1 && c.grid.n2 >= 1, "grid", "n1 and n2 must be at least 1");
  require(c.grid.lo > 0.0 && c.grid.hi < 1.0 && c.grid.lo <= c.grid.hi, "grid", "need 0 < lo <= hi < 1");
  require(c.seeds_per_cell >= 1, "grid.seeds_per_cell", "must be at least 1");

  c.seeds = root.integer("seeds", c.seeds);
  require(c.seeds >= 1, "seeds", "must be at least 1");
  c.master_seed = root.unsigned_integer("master_seed", c.master_seed);
  try {
    c.mode = parse_mode(root.string("mode", to_string(c.mode)));
  } catch (const ContractError& e) {
    throw ConfigError("mode", e.what());
  }

  if (const json* b = root.child("batch")) {
    Section sec(*b, "batch");
    c.batch.count = sec.integer("count", c.batch.count);
    c.batch.horizon = sec.integer("horizon", c.batch.horizon);
    c.batch.baseline = sec.boolean("baseline", c.batch.baseline);
    sec.finish();
  }
  require(c.batch.count >= 1 && c.batch.horizon >= 1, "batch", "count and horizon must be at least 1");

  c.tau = root.number("tau", c.tau);
  require(c.tau > 0.0 && c.tau < 1.0, "tau", "must lie in (0, 1)");
  c.output = root.string("output", c.output);

  if (const json* s = root.child("cooldown")) {
    Section sec(*s, "cooldown");
    auto& cd = c.cooldown;
    cd.handoff = sec.integer("handoff", cd.handoff);
    cd.cool_rule = sec.string("cool_rule", cd.cool_rule);
    cd.rho_cool = sec.number("rho_cool", cd.rho_cool);
    cd.deep_inits = sec.integer("deep_inits", cd.deep_inits);
    cd.deep_lo = sec.number("deep_lo", cd.deep_lo);
    cd.deep_hi = sec.number("deep_hi", cd.deep_hi);
    sec.finish();
  }
  require(c.cooldown.handoff >= 1, "cooldown.handoff", "must be at least 1");
  require(c.cooldown.cool_rule == "hard_zero" || c.cooldown.cool_rule == "geometric", "cooldown.cool_rule",
          "expected hard_zero or geometric");
  require(c.cooldown.rho_cool >= 0.0 && c.cooldown.rho_cool < 1.0, "cooldown.rho_cool", "must lie in [0, 1)");
  require(c.cooldown.deep_inits >= 1, "cooldown.deep_inits", "must be at least 1");
  require(c.cooldown.deep_lo > 0.0 && c.cooldown.deep_hi < 1.0 && c.cooldown.deep_lo <= c.cooldown.deep_hi,
          "cooldown", "need 0 < deep_lo <= deep_hi < 1");

  if (const json* s = root.child("props")) {
    Section sec(*s, "props");
    auto& p = c.props;
    p.entropy_weight = sec.number("entropy_weight", p.entropy_weight);
    p.start_probabilities = sec.list<double>("start_probabilities", p.start_probabilities);
    p.radius = sec.number("radius", p.radius);
    p.mu_samples = sec.integer("mu_samples", p.mu_samples);
    p.lipschitz_samples = sec.integer("lipschitz_samples", p.lipschitz_samples);
    p.drift_samples = sec.integer("drift_samples", p.drift_samples);
    p.shift_lambdas = sec.list<double>("shift_lambdas", p.shift_lambdas);
    sec.finish();
  }
  require(c.props.entropy_weight >= 0.0, "props.entropy_weight", "must be non-negative");
  require(c.props.radius > 0.0, "props.radius", "must be positive");
  require(c.props.mu_samples >= 1 && c.props.lipschitz_samples >= 1 && c.props.drift_samples >= 1, "props",
          "sample counts must be at least 1");
  require(!c.props.shift_lambdas.empty(), "props.shift_lambdas", "must not be empty");
  for (double p : c.props.start_probabilities)
    require(p > 0.0 && p < 1.0, "props.start_probabilities", "entries must lie in (0, 1)");

  if (const json* s = root.child("sadiag")) {
    Section sec(*s, "sadiag");
    auto& d = c.sadiag;
    if (const json* pts = sec.child("points")) {
      if (!pts->is_array()) throw ConfigError("sadiag.points", "expected an array of probability pairs");
      d.points.clear();
      for (std::size_t i = 0; i < pts->size(); ++i) {
        const json& e = (*pts)[i];
        const std::string at = "sadiag.points[" + std::to_string(i) + "]";
        if (!e.is_array()) throw ConfigError(at, "expected an array of numbers");
        std::vector<double> p;
        for (const auto& x : e) {
          if (!x.is_number()) throw ConfigError(at, "expected numbers");
          const double v = x.get<double>();
          require(v > 0.0 && v < 1.0, at, "probabilities must lie in (0, 1)");
          p.push_back(v);
        }
        d.points.push_back(std::move(p));
      }
    }
    d.lambda = sec.number("lambda", d.lambda);
    d.repeats = sec.integer("repeats", d.repeats);
    d.bias_horizons = sec.list<int>("bias_horizons", d.bias_horizons);
    d.moment_lengths = sec.list<int>("moment_lengths", d.moment_lengths);
    d.moment_arm = sec.string("moment_arm", d.moment_arm);
    d.moment_lambda = sec.number("moment_lambda", d.moment_lambda);
    d.moment_repeats = sec.integer("moment_repeats", d.moment_repeats);
    sec.finish();
  }
  require(c.sadiag.repeats >= 50, "sadiag.repeats", "must be at least 50");
  require(c.sadiag.moment_repeats >= 1, "sadiag.moment_repeats", "must be at least 1");
  require(!c.sadiag.points.empty(), "sadiag.points", "must not be empty");
  require(c.sadiag.lambda >= 0.0 && c.sadiag.moment_lambda >= 0.0, "sadiag", "lambdas must be non-negative");
  try {
    parse_arm(c.sadiag.moment_arm);
  } catch (const ContractError& e) {
    throw ConfigError("sadiag.moment_arm", e.what());
  }
  for (int l : c.sadiag.moment_lengths) require(l >= 0, "sadiag.moment_lengths", "entries must be non-negative");
  for (std::size_t k = 0; k < c.sadiag.bias_horizons.size(); ++k)
    require(c.sadiag.bias_horizons[k] >= 1 && (k == 0 || c.sadiag.bias_horizons[k] > c.sadiag.bias_horizons[k - 1]),
            "sadiag.bias_horizons", "must be positive and strictly increasing");

  if (const json* s = root.child("lambda_sweep")) {
    Section sec(*s, "lambda_sweep");
    c.lambdas = sec.list<double>("lambdas", c.lambdas);
    c.lambda_slack = sec.number("slack", c.lambda_slack);
    sec.finish();
  }
  require(!c.lambdas.empty(), "lambda_sweep.lambdas", "must not be empty");
  require(std::is_sorted(c.lambdas.begin(), c.lambdas.end()), "lambda_sweep.lambdas", "must be ascending");
  require(std::find(c.lambdas.begin(), c.lambdas.end(), 0.0) != c.lambdas.end(), "lambda_sweep.lambdas",
          "must include 0");

  if (const json* s = root.child("normctl")) {
    Section sec(*s, "normctl");
    c.early_steps = sec.integer("early_steps", c.early_steps);
    sec.finish();
  }
  require(c.early_steps >= 1, "normctl.early_steps", "must be at least 1");

  if (const json* s = root.child("tausweep")) {
    Section sec(*s, "tausweep");
    c.taus = sec.list<double>("taus", c.taus);
    sec.finish();
  }
  require(!c.taus.empty(), "tausweep.taus", "must not be empty");
  for (double t : c.taus) require(t > 0.0 && t < 1.0, "tausweep.taus", "entries must lie in (0, 1)");

  root.finish();
  c.make_game();
  return c;
}

ExperimentConfig parse_config(const std::string& text, const std::string& experiment) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    std::size_t line = 1;
    std::size_t column = 1;
    const std::size_t end = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
    for (std::size_t i = 0; i < end; ++i) {
      if (text[i] == '\n') {
        ++line;
        column = 1;
      } else {
        ++column;
      }
    }
    std::string msg = e.what();
    if (const auto pos = msg.find("parse error"); pos != std::string::npos) msg = msg.substr(pos);
    throw ConfigError("<document>",
                      "invalid JSON at line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + msg);
  }
  return config_from_json(doc, experiment);
}

ExperimentConfig load_config(const std::string& path, const std::string& experiment) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("<document>", "cannot read config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), experiment);
}

nlohmann::json config_to_json(const ExperimentConfig& c) {
  json j;
  j["experiment"] = c.experiment;
  j["game"] = game_to_json(c.make_game());
  j["arms"] = c.arms;
  j["lambda"] = c.lambda;
  j["schedule"] = {{"step_rule", c.schedule.step_rule == StepRule::constant ? "constant" : "harmonic"},
                   {"alpha", c.schedule.alpha},
                   {"c", c.schedule.c},
                   {"n0", c.schedule.n0},
                   {"total_steps", c.schedule.total_steps}};
  j["unroll"] = {{"length", c.unroll.length},
                 {"inner_step_own", c.unroll.inner_step_own},
                 {"inner_step_peer", c.unroll.inner_step_peer}};
  j["grid"] = {{"n1", c.grid.n1}, {"n2", c.grid.n2}, {"lo", c.grid.lo}, {"hi", c.grid.hi},
               {"seeds_per_cell", c.seeds_per_cell}};
  j["seeds"] = c.seeds;
  j["master_seed"] = c.master_seed;
  j["mode"] = to_string(c.mode);
  j["batch"] = {{"count", c.batch.count}, {"horizon", c.batch.horizon}, {"baseline", c.batch.baseline}};
  j["tau"] = c.tau;
  j["output"] = c.output;
  j["cooldown"] = {{"handoff", c.cooldown.handoff},       {"cool_rule", c.cooldown.cool_rule},
                   {"rho_cool", c.cooldown.rho_cool},     {"deep_inits", c.cooldown.deep_inits},
                   {"deep_lo", c.cooldown.deep_lo},       {"deep_hi", c.cooldown.deep_hi}};
  j["props"] = {{"entropy_weight", c.props.entropy_weight},
                {"start_probabilities", c.props.start_probabilities},
                {"radius", c.props.radius},
                {"mu_samples", c.props.mu_samples},
                {"lipschitz_samples", c.props.lipschitz_samples},
                {"drift_samples", c.props.drift_samples},
                {"shift_lambdas", c.props.shift_lambdas}};
  j["sadiag"] = {{"points", c.sadiag.points},
                 {"lambda", c.sadiag.lambda},
                 {"repeats", c.sadiag.repeats},
                 {"bias_horizons", c.sadiag.bias_horizons},
                 {"moment_lengths", c.sadiag.moment_lengths},
                 {"moment_arm", c.sadiag.moment_arm},
                 {"moment_lambda", c.sadiag.moment_lambda},
                 {"moment_repeats", c.sadiag.moment_repeats}};
  j["lambda_sweep"] = {{"lambdas", c.lambdas}, {"slack", c.lambda_slack}};
  j["normctl"] = {{"early_steps", c.early_steps}};
  j["tausweep"] = {{"taus", c.taus}};
  return j;
}

}  // namespace basinlab
