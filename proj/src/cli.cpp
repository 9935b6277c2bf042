#include "lyaplearn/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <variant>

#include "CLI11.hpp"
#include "json.hpp"
#include "lyaplearn/dynsys.hpp"
#include "lyaplearn/experiments.hpp"
#include "lyaplearn/io.hpp"
#include "lyaplearn/lyap.hpp"
#include "lyaplearn/net.hpp"

#ifndef LYAPLEARN_VERSION
#define LYAPLEARN_VERSION "dev"
#endif

namespace lyl::cli {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Kind { real, count, text, flag, reals, counts };

struct Param {
  std::string key;
  Kind kind;
  json def;
  std::string help;
};

using Params = std::vector<Param>;

void add(Params& ps, std::string key, Kind kind, json def, std::string help) {
  ps.push_back({std::move(key), kind, std::move(def), std::move(help)});
}

void add_common(Params& ps, const std::string& command) {
  add(ps, "out", Kind::text, command == "lyap" ? "" : "runs/" + command,
      command == "lyap" ? "output directory (empty: print only)" : "output directory");
  add(ps, "seed", Kind::count, 0, "base seed for all random streams");
  add(ps, "threads", Kind::count, 1, "worker threads for independent runs");
}

void add_data(Params& ps) {
  const RegimeShiftConfig d;
  add(ps, "n", Kind::count, d.n_per_regime, "states per regime");
  add(ps, "dt", Kind::real, d.dt, "integration step");
  add(ps, "transient", Kind::count, d.transient, "discarded integration steps before the first state");
  add(ps, "scale", Kind::real, d.scale, "states are divided by this");
  add(ps, "jitter", Kind::real, d.jitter, "seeded perturbation of x0 per coordinate");
  add(ps, "x0", Kind::reals, json(std::vector<double>(d.x0.begin(), d.x0.end())), "initial state x,y,z");
  add(ps, "sigma-a", Kind::real, d.params_a.sigma, "first regime sigma");
  add(ps, "rho-a", Kind::real, d.params_a.rho, "first regime rho");
  add(ps, "beta-a", Kind::real, d.params_a.beta, "first regime beta");
  add(ps, "sigma-b", Kind::real, d.params_b.sigma, "second regime sigma");
  add(ps, "rho-b", Kind::real, d.params_b.rho, "second regime rho");
  add(ps, "beta-b", Kind::real, d.params_b.beta, "second regime beta");
}

void add_training(Params& ps) {
  const TrainConfig t;
  add(ps, "horizon", Kind::count, t.lyap_horizon, "self-generated steps for the training-time exponent");
  add(ps, "lr", Kind::real, t.learning_rate, "learning rate");
  add(ps, "optimizer", Kind::text, to_string(t.optimizer), "adam or sgd");
  add(ps, "layers", Kind::counts, json(t.layer_sizes), "layer sizes");
  add(ps, "activation", Kind::text, to_string(t.activation), "hidden activation: tanh or identity");
  add(ps, "eval-steps", Kind::count, t.eval_steps, "steps of the final spectrum evaluation");
  add(ps, "eval-transient", Kind::count, t.eval_transient, "discarded steps before the final evaluation");
}

Params params_for(const std::string& command) {
  Params ps;
  add_common(ps, command);
  if (command == "gen") {
    add_data(ps);
  } else if (command == "train") {
    add_data(ps);
    add_training(ps);
    add(ps, "regularizer", Kind::text, "none", "none, lyapunov, l1, l2 or dropout");
    add(ps, "alpha", Kind::real, 0.0, "regularizer weight");
    add(ps, "dropout", Kind::real, 0.0, "dropout probability (regularizer dropout)");
    add(ps, "data", Kind::text, "", "trajectory CSV to train on instead of generating one");
  } else if (command == "bench") {
    add_data(ps);
    add_training(ps);
    add(ps, "seeds", Kind::count, 10, "matched seeds");
    add(ps, "alpha", Kind::real, 1.0, "lyapunov weight");
    add(ps, "l1", Kind::real, 1e-4, "L1 weight");
    add(ps, "l2", Kind::real, 1e-3, "L2 weight");
    add(ps, "dropout", Kind::real, 0.2, "dropout probability");
  } else if (command == "sweep") {
    add_data(ps);
    add_training(ps);
    add(ps, "seeds", Kind::count, 10, "matched seeds");
    add(ps, "alphas", Kind::reals, json(default_alpha_grid()), "lyapunov weights to evaluate");
  } else if (command == "synth") {
    const SynthConfig s;
    add(ps, "target", Kind::real, s.target_lambda, "target largest exponent (per step)");
    add(ps, "layers", Kind::counts, json(s.layer_sizes), "layer sizes");
    add(ps, "activation", Kind::text, to_string(s.activation), "hidden activation");
    add(ps, "lr", Kind::real, s.learning_rate, "Adam learning rate");
    add(ps, "horizon", Kind::count, s.horizon, "spectrum horizon per optimizer step");
    add(ps, "budget", Kind::count, s.step_budget, "optimizer steps per restart");
    add(ps, "restarts", Kind::count, s.max_restarts, "restarts with fresh seeds");
    add(ps, "c", Kind::real, s.hinge_weight, "weight of the dissipativity hinge");
    add(ps, "m", Kind::real, s.hinge_margin, "hinge margin on the exponent sum");
    add(ps, "eval-every", Kind::count, s.eval_every, "optimizer steps between checks");
    add(ps, "eval-steps", Kind::count, s.eval_steps, "orbit length of the periodic check");
    add(ps, "final-steps", Kind::count, s.final_steps, "orbit length of the final check");
    add(ps, "transient", Kind::count, s.transient, "discarded orbit steps before a check");
    add(ps, "tol", Kind::real, s.tolerance, "accepted |lambda_1 - target|");
    add(ps, "bound", Kind::real, s.bound, "orbit must stay inside this max-norm");
    add(ps, "gain", Kind::real, s.init_gain, "initial weight scale relative to 1/sqrt(fan_in)");
    add(ps, "screen-draws", Kind::count, s.screen_draws, "initial networks tried per restart");
    add(ps, "screen-steps", Kind::count, s.screen_steps, "orbit length of the screening check");
  } else if (command == "lyap") {
    const OracleOptions o;
    add(ps, "map", Kind::text, "logistic", "oracle map: linear, logistic or lorenz");
    add(ps, "network", Kind::text, "", "saved network to analyse instead of an oracle map");
    add(ps, "r", Kind::real, o.logistic_r, "logistic parameter");
    add(ps, "dt", Kind::real, o.dt, "Lorenz step");
    add(ps, "sigma", Kind::real, o.lorenz.sigma, "Lorenz sigma");
    add(ps, "rho", Kind::real, o.lorenz.rho, "Lorenz rho");
    add(ps, "beta", Kind::real, o.lorenz.beta, "Lorenz beta");
    add(ps, "steps", Kind::count, 100000, "steps T");
    add(ps, "transient", Kind::count, 1000, "discarded steps");
    add(ps, "x0", Kind::reals, json::array(), "start state (empty: map default)");
    add(ps, "spectrum", Kind::flag, true, "also compute the full spectrum by QR");
  }
  return ps;
}

const std::vector<std::string>& commands() {
  static const std::vector<std::string> names{"gen", "train", "bench", "sweep", "synth", "lyap"};
  return names;
}

std::string describe(const std::string& command) {
  if (command == "gen") return "generate a regime-shift Lorenz trajectory";
  if (command == "train") return "train one network online over a trajectory";
  if (command == "bench") return "lyapunov vs L1/L2/dropout over matched seeds";
  if (command == "sweep") return "mean loss ratio across lyapunov weights";
  if (command == "synth") return "train a network whose orbit is a chaotic attractor";
  return "Lyapunov exponents of an oracle map or a saved network";
}

// ---- value parsing ----

std::optional<double> parse_real(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::optional<std::uint64_t> parse_count(const std::string& s) {
  if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) return std::nullopt;
  try {
    return std::stoull(s);
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  if (s.empty()) return out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) out.push_back(item);
  return out;
}

// Flag text -> typed JSON value, or an error description.
std::variant<json, std::string> from_text(const Param& p, const std::string& text) {
  switch (p.kind) {
    case Kind::real:
      if (auto v = parse_real(text)) return json(*v);
      return "expected a number, got '" + text + "'";
    case Kind::count:
      if (auto v = parse_count(text)) return json(*v);
      return "expected a non-negative integer, got '" + text + "'";
    case Kind::text: return json(text);
    case Kind::flag:
      if (text == "true" || text == "1") return json(true);
      if (text == "false" || text == "0") return json(false);
      return "expected true or false, got '" + text + "'";
    case Kind::reals:
    case Kind::counts: {
      json arr = json::array();
      for (const auto& item : split_list(text)) {
        if (p.kind == Kind::reals) {
          auto v = parse_real(item);
          if (!v) return "expected a comma-separated list of numbers, got '" + text + "'";
          arr.push_back(*v);
        } else {
          auto v = parse_count(item);
          if (!v) return "expected a comma-separated list of integers, got '" + text + "'";
          arr.push_back(*v);
        }
      }
      return arr;
    }
  }
  return std::string("unsupported");
}

// Config-file value -> normalised JSON value, or an error description.
std::variant<json, std::string> from_config(const Param& p, const json& v) {
  auto is_count = [](const json& x) {
    return x.is_number_unsigned() || (x.is_number_integer() && x.get<std::int64_t>() >= 0);
  };
  switch (p.kind) {
    case Kind::real:
      if (v.is_number()) return json(v.get<double>());
      return std::string("expected a number");
    case Kind::count:
      if (is_count(v)) return json(v.get<std::uint64_t>());
      return std::string("expected a non-negative integer");
    case Kind::text:
      if (v.is_string()) return v;
      return std::string("expected a string");
    case Kind::flag:
      if (v.is_boolean()) return v;
      return std::string("expected true or false");
    case Kind::reals:
    case Kind::counts: {
      if (v.is_string()) return from_text(p, v.get<std::string>());
      if (!v.is_array()) return std::string("expected a list");
      json arr = json::array();
      for (const auto& x : v) {
        if (p.kind == Kind::reals && x.is_number()) {
          arr.push_back(x.get<double>());
        } else if (p.kind == Kind::counts && is_count(x)) {
          arr.push_back(x.get<std::uint64_t>());
        } else {
          return std::string(p.kind == Kind::reals ? "expected a list of numbers" : "expected a list of integers");
        }
      }
      return arr;
    }
  }
  return std::string("unsupported");
}

const char* type_name(Kind k) {
  switch (k) {
    case Kind::real: return "NUM";
    case Kind::count: return "INT";
    case Kind::flag: return "BOOL";
    case Kind::reals: return "NUM,...";
    case Kind::counts: return "INT,...";
    default: return "TEXT";
  }
}

std::string join(const std::vector<std::string>& items, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? sep : "") + items[i];
  return out;
}

std::string default_text(const Param& p) {
  if (p.kind == Kind::text) return p.def.get<std::string>();
  if (p.kind == Kind::reals || p.kind == Kind::counts) {
    std::vector<std::string> parts;
    for (const auto& v : p.def) parts.push_back(v.is_number_float() ? format_double(v.get<double>()) : v.dump());
    return join(parts, ",");
  }
  if (p.kind == Kind::real) return format_double(p.def.get<double>());
  return p.def.dump();
}

struct Resolved {
  json cfg;
  std::vector<std::string> errors;  // bad values keep their default and are reported later with the rest
};

// defaults < config file < flags
Resolved resolve(const Params& ps, const std::string& command, const std::string& config_path,
             const std::map<std::string, std::string>& given) {
  std::vector<std::string> errors;
  json cfg = json::object();
  for (const auto& p : ps) cfg[p.key] = p.def;

  if (!config_path.empty()) {
    json file;
    try {
      file = json::parse(read_text_file(config_path));
    } catch (const json::parse_error& e) {
      throw ConfigError("config " + config_path + " is not valid JSON: " + e.what());
    }
    if (!file.is_object()) throw ConfigError("config " + config_path + " must be a JSON object");
    if (file.contains("resolved_config")) {
      if (file.value("command", command) != command)
        throw ConfigError("manifest " + config_path + " was written by '" + file.value("command", std::string()) +
                          "', not '" + command + "'");
      file = file["resolved_config"];
      if (!file.is_object()) throw ConfigError("manifest resolved_config must be an object");
    }
    for (const auto& [key, value] : file.items()) {
      auto it = std::find_if(ps.begin(), ps.end(), [&](const Param& p) { return p.key == key; });
      if (it == ps.end()) {
        errors.push_back(key + ": unknown key for '" + command + "'");
        continue;
      }
      auto parsed = from_config(*it, value);
      if (auto* e = std::get_if<std::string>(&parsed)) {
        errors.push_back(key + ": " + *e);
      } else {
        cfg[key] = std::get<json>(parsed);
      }
    }
  }
  for (const auto& p : ps) {
    auto it = given.find(p.key);
    if (it == given.end()) continue;
    auto parsed = from_text(p, it->second);
    if (auto* e = std::get_if<std::string>(&parsed)) {
      errors.push_back(p.key + ": " + *e);
    } else {
      cfg[p.key] = std::get<json>(parsed);
    }
  }
  return {std::move(cfg), std::move(errors)};
}

// ---- typed configs with every problem reported at once ----

class Problems {
 public:
  explicit Problems(std::vector<std::string> earlier = {}) : list_(std::move(earlier)) {}
  void add(std::string msg) { list_.push_back(std::move(msg)); }
  void check(bool ok, std::string msg) {
    if (!ok) add(std::move(msg));
  }
  template <class F>
  void capture(F&& f) {
    try {
      f();
    } catch (const std::invalid_argument& e) {
      add(e.what());
    }
  }
  void raise() const {
    if (!list_.empty()) throw ConfigError(join(list_, "; "));
  }

 private:
  std::vector<std::string> list_;
};

std::size_t count_of(const json& c, const char* key) { return c.at(key).get<std::size_t>(); }
double real_of(const json& c, const char* key) { return c.at(key).get<double>(); }
std::string text_of(const json& c, const char* key) { return c.at(key).get<std::string>(); }

RegimeShiftConfig data_config(const json& c, Problems& pr) {
  RegimeShiftConfig d;
  d.n_per_regime = count_of(c, "n");
  d.dt = real_of(c, "dt");
  d.transient = count_of(c, "transient");
  d.scale = real_of(c, "scale");
  d.jitter = real_of(c, "jitter");
  const auto x0 = c.at("x0").get<std::vector<double>>();
  d.params_a = {real_of(c, "sigma-a"), real_of(c, "rho-a"), real_of(c, "beta-a")};
  d.params_b = {real_of(c, "sigma-b"), real_of(c, "rho-b"), real_of(c, "beta-b")};
  pr.check(d.n_per_regime >= 1, "n must be >= 1");
  pr.check(d.dt > 0.0, "dt must be > 0");
  pr.check(d.scale > 0.0, "scale must be > 0");
  pr.check(d.jitter >= 0.0, "jitter must be >= 0");
  pr.check(x0.size() == 3, "x0 needs exactly 3 values");
  if (x0.size() == 3) d.x0 = {x0[0], x0[1], x0[2]};
  return d;
}

template <class F>
auto parse_tag(Problems& pr, const std::string& key, const std::string& value, F&& f) -> decltype(f(value)) {
  try {
    return f(value);
  } catch (const std::invalid_argument& e) {
    pr.add(key + ": " + e.what());
    return {};
  }
}

TrainConfig train_config(const json& c, Problems& pr) {
  TrainConfig t;
  t.seed = c.at("seed").get<std::uint64_t>();
  t.lyap_horizon = count_of(c, "horizon");
  t.learning_rate = real_of(c, "lr");
  t.optimizer = parse_tag(pr, "optimizer", text_of(c, "optimizer"), optimizer_from_string);
  t.layer_sizes = c.at("layers").get<std::vector<std::size_t>>();
  t.activation = parse_tag(pr, "activation", text_of(c, "activation"), activation_from_string);
  t.eval_steps = count_of(c, "eval-steps");
  t.eval_transient = count_of(c, "eval-transient");
  return t;
}

SynthConfig synth_config(const json& c, Problems& pr) {
  SynthConfig s;
  s.seed = c.at("seed").get<std::uint64_t>();
  s.target_lambda = real_of(c, "target");
  s.layer_sizes = c.at("layers").get<std::vector<std::size_t>>();
  s.activation = parse_tag(pr, "activation", text_of(c, "activation"), activation_from_string);
  s.learning_rate = real_of(c, "lr");
  s.horizon = count_of(c, "horizon");
  s.step_budget = count_of(c, "budget");
  s.max_restarts = count_of(c, "restarts");
  s.hinge_weight = real_of(c, "c");
  s.hinge_margin = real_of(c, "m");
  s.eval_every = count_of(c, "eval-every");
  s.eval_steps = count_of(c, "eval-steps");
  s.final_steps = count_of(c, "final-steps");
  s.transient = count_of(c, "transient");
  s.tolerance = real_of(c, "tol");
  s.bound = real_of(c, "bound");
  s.init_gain = real_of(c, "gain");
  s.screen_draws = count_of(c, "screen-draws");
  s.screen_steps = count_of(c, "screen-steps");
  return s;
}

// ---- outputs ----

struct Output {
  fs::path dir;
  std::map<std::string, std::string> files;  // name -> contents, written in name order

  void add(const std::string& name, std::string text) { files[name] = std::move(text); }
};

std::string stream_text(const std::function<void(std::ostream&)>& write) {
  std::ostringstream ss;
  write(ss);
  return ss.str();
}

void commit(const Output& o, const std::string& command, const std::string& config_path, const json& resolved,
            double wall_time) {
  std::error_code ec;
  fs::create_directories(o.dir, ec);
  if (ec) throw IoError("cannot create " + o.dir.string() + ": " + ec.message());
  for (const auto& [name, text] : o.files) write_text_file(o.dir / name, text);
  json manifest;
  manifest["command"] = command;
  manifest["config_path"] = config_path;
  manifest["output_dir"] = o.dir.string();
  manifest["resolved_config"] = resolved;
  manifest["tool_version"] = LYAPLEARN_VERSION;
  manifest["wall_time"] = wall_time;
  write_text_file(o.dir / "manifest.json", manifest.dump(2) + "\n");
}

// ---- commands; each validates fully before producing any output ----

using Clock = std::chrono::steady_clock;

struct Context {
  std::string command;
  std::string config_path;
  json cfg;
  std::vector<std::string> type_errors;
  std::ostream& out;
  Clock::time_point start;
};

double elapsed(const Context& ctx) { return std::chrono::duration<double>(Clock::now() - ctx.start).count(); }

fs::path require_out(const Context& ctx, Problems& pr) {
  const std::string out = text_of(ctx.cfg, "out");
  pr.check(!out.empty(), "out must not be empty");
  return out;
}

void finish(const Context& ctx, const Output& o) {
  commit(o, ctx.command, ctx.config_path, ctx.cfg, elapsed(ctx));
  ctx.out << "wrote " << o.dir.string() << "\n";
}

void cmd_gen(const Context& ctx) {
  Problems pr(ctx.type_errors);
  const fs::path dir = require_out(ctx, pr);
  const RegimeShiftConfig d = data_config(ctx.cfg, pr);
  pr.raise();
  const Trajectory traj = generate_regime_shift(d, ctx.cfg.at("seed").get<std::uint64_t>());
  Output o{dir, {}};
  o.add("trajectory.csv", stream_text([&](std::ostream& s) { write_trajectory_csv(s, traj); }));
  o.add("trajectory.json", trajectory_sidecar(traj).dump(2) + "\n");
  finish(ctx, o);
}

void cmd_train(const Context& ctx) {
  Problems pr(ctx.type_errors);
  const fs::path dir = require_out(ctx, pr);
  const RegimeShiftConfig d = data_config(ctx.cfg, pr);
  TrainConfig t = train_config(ctx.cfg, pr);
  t.regularizer = parse_tag(pr, "regularizer", text_of(ctx.cfg, "regularizer"), regularizer_from_string);
  t.alpha = real_of(ctx.cfg, "alpha");
  t.dropout_p = real_of(ctx.cfg, "dropout");
  pr.capture([&] { validate(t); });
  pr.raise();

  const std::string data = text_of(ctx.cfg, "data");
  const Trajectory traj = data.empty() ? generate_regime_shift(d, t.seed) : load_trajectory(data);
  if (traj.dim() != t.layer_sizes.front())
    throw ConfigError("layers: network dimension " + std::to_string(t.layer_sizes.front()) +
                      " does not match the trajectory dimension " + std::to_string(traj.dim()));
  const ExperimentResult res = train_online(t, traj);

  Output o{dir, {}};
  o.add("series.csv", stream_text([&](std::ostream& s) { write_series_csv(s, res); }));
  o.add("run.json", run_summary(res, "series.csv").dump(2) + "\n");
  o.add("network.txt", stream_text([&](std::ostream& s) { write_network(s, res.final_params); }));
  ctx.out << "post_shift_mse_sum " << format_double(res.post_shift_mse_sum) << "\n";
  finish(ctx, o);
}

BenchmarkOptions bench_options(const Context& ctx, Problems& pr) {
  BenchmarkOptions opts;
  opts.n_seeds = count_of(ctx.cfg, "seeds");
  opts.threads = std::max<std::size_t>(1, count_of(ctx.cfg, "threads"));
  pr.check(opts.n_seeds >= 1, "seeds must be >= 1");
  return opts;
}

void cmd_bench(const Context& ctx) {
  Problems pr(ctx.type_errors);
  const fs::path dir = require_out(ctx, pr);
  const RegimeShiftConfig d = data_config(ctx.cfg, pr);
  const TrainConfig t = train_config(ctx.cfg, pr);
  const BenchmarkOptions opts = bench_options(ctx, pr);
  const std::vector<RegularizerSpec> specs{{Regularizer::lyapunov, real_of(ctx.cfg, "alpha")},
                                           {Regularizer::l1, real_of(ctx.cfg, "l1")},
                                           {Regularizer::l2, real_of(ctx.cfg, "l2")},
                                           {Regularizer::dropout, real_of(ctx.cfg, "dropout")}};
  const char* keys[] = {"alpha", "l1", "l2", "dropout"};
  for (std::size_t i = 0; i < specs.size(); ++i) {
    TrainConfig v = t;
    v.regularizer = specs[i].tag;
    (specs[i].tag == Regularizer::dropout ? v.dropout_p : v.alpha) = specs[i].param;
    try {
      validate(v);
    } catch (const std::invalid_argument& e) {
      pr.add(std::string(keys[i]) + ": " + e.what());
    }
  }
  pr.capture([&] { validate(t); });
  pr.raise();

  const BenchmarkResult res = run_benchmark(t, d, specs, opts);
  Output o{dir, {}};
  o.add("bench.csv", stream_text([&](std::ostream& s) { write_benchmark_csv(s, res.rows); }));
  // per-seed detail, including the vanilla spectrum used for the dissipativity check
  std::ostringstream runs;
  runs << "seed,regularizer,param,post_shift_mse_sum,ratio,skipped_reg_steps,eval_sum\n";
  for (std::size_t s = 0; s < res.vanilla.size(); ++s) {
    const auto& v = res.vanilla[s];
    auto eval_sum = [](const ExperimentResult& r) {
      return r.eval_spectrum ? format_double(r.eval_spectrum->sum_exponents) : std::string("nan");
    };
    runs << v.seed << ",none,0," << format_double(v.post_shift_mse_sum) << ",1,0," << eval_sum(v) << "\n";
    for (std::size_t k = 0; k < specs.size(); ++k) {
      const auto& r = res.variants[s][k];
      runs << r.seed << ',' << to_string(specs[k].tag) << ',' << format_double(specs[k].param) << ','
           << format_double(r.post_shift_mse_sum) << ',' << format_double(loss_ratio(v, r).ratio) << ','
           << r.skipped_reg_steps << ',' << eval_sum(r) << "\n";
    }
  }
  o.add("runs.csv", runs.str());
  write_benchmark_csv(ctx.out, res.rows);
  finish(ctx, o);
}

void cmd_sweep(const Context& ctx) {
  Problems pr(ctx.type_errors);
  const fs::path dir = require_out(ctx, pr);
  const RegimeShiftConfig d = data_config(ctx.cfg, pr);
  TrainConfig t = train_config(ctx.cfg, pr);
  const BenchmarkOptions opts = bench_options(ctx, pr);
  const auto alphas = ctx.cfg.at("alphas").get<std::vector<double>>();
  pr.check(!alphas.empty(), "alphas must not be empty");
  for (double a : alphas) pr.check(a >= 0.0, "alphas must be >= 0");
  pr.capture([&] { validate(t); });
  pr.raise();

  const auto curve = sweep_alpha(t, d, alphas, opts);
  Output o{dir, {}};
  o.add("sweep.csv", stream_text([&](std::ostream& s) { write_sweep_csv(s, curve); }));
  write_sweep_csv(ctx.out, curve);
  finish(ctx, o);
}

void cmd_synth(const Context& ctx) {
  Problems pr(ctx.type_errors);
  const fs::path dir = require_out(ctx, pr);
  const SynthConfig s = synth_config(ctx.cfg, pr);
  pr.capture([&] { validate(s); });
  pr.raise();

  const AttractorResult res = synthesize_attractor(s);
  json report = spectrum_report(res.spectrum);
  report["target"] = s.target_lambda;
  report["restarts"] = res.restarts;
  report["steps"] = res.steps;
  report["seed"] = res.seed;
  report["orbit"] = "orbit.csv";
  report["network"] = "network.txt";
  Output o{dir, {}};
  o.add("attractor.json", report.dump(2) + "\n");
  o.add("network.txt", stream_text([&](std::ostream& os) { write_network(os, res.params); }));
  o.add("orbit.csv", stream_text([&](std::ostream& os) {
          os << "t,x,y,z\n";
          for (std::size_t i = 0; i < res.trajectory.size(); ++i) {
            os << i;
            for (double v : res.trajectory.states[i]) os << ',' << format_double(v);
            os << '\n';
          }
        }));
  ctx.out << "lambda_1 " << format_double(res.spectrum.exponents.front()) << " sum "
          << format_double(res.spectrum.sum_exponents) << "\n";
  finish(ctx, o);
}

void cmd_lyap(const Context& ctx) {
  Problems pr(ctx.type_errors);
  const std::string out = text_of(ctx.cfg, "out");
  const std::string network = text_of(ctx.cfg, "network");
  const std::string map_name = text_of(ctx.cfg, "map");
  const std::size_t steps = count_of(ctx.cfg, "steps");
  const std::size_t transient = count_of(ctx.cfg, "transient");
  const bool full = ctx.cfg.at("spectrum").get<bool>();
  std::vector<double> x0 = ctx.cfg.at("x0").get<std::vector<double>>();
  pr.check(steps >= 1, "steps must be >= 1");
  OracleOptions opts;
  opts.logistic_r = real_of(ctx.cfg, "r");
  opts.dt = real_of(ctx.cfg, "dt");
  opts.lorenz = {real_of(ctx.cfg, "sigma"), real_of(ctx.cfg, "rho"), real_of(ctx.cfg, "beta")};
  pr.check(opts.dt > 0.0, "dt must be > 0");
  if (network.empty()) {
    const auto names = oracle_map_names();
    pr.check(std::find(names.begin(), names.end(), map_name) != names.end(),
             "map: unknown map '" + map_name + "' (expected " + join(names, ", ") + ")");
  }
  pr.raise();

  json report;
  if (!network.empty()) {
    std::istringstream text(read_text_file(network));
    NetworkParams net;
    try {
      net = read_network(text);
    } catch (const std::exception& e) {
      throw IoError(network + ": " + e.what());
    }
    if (net.input_dim() != net.output_dim()) throw ConfigError("network: not a square map");
    if (x0.empty()) x0.assign(net.input_dim(), 0.1);
    if (x0.size() != net.input_dim()) throw ConfigError("x0: expected " + std::to_string(net.input_dim()) + " values");
    report["source"] = network;
    const NetworkMap<double> map(net);
    report["lambda_max"] = largest_exponent(map, std::span<const double>(x0), steps, 1, transient);
    if (full) report["spectrum"] = spectrum_report(spectrum_of_network<double>(net, x0, steps, transient));
  } else {
    const OracleMap map = make_oracle_map(map_name, opts);
    if (x0.empty()) x0.assign(map.dim(), map_name == "lorenz" ? 1.0 : 0.3);
    if (x0.size() != map.dim()) throw ConfigError("x0: expected " + std::to_string(map.dim()) + " values");
    report["source"] = map_name;
    const double lam = largest_exponent(map, std::span<const double>(x0), steps, 1, transient);
    report["lambda_max"] = lam;
    if (map_name == "lorenz") report["lambda_max_per_time"] = lam / opts.dt;
    if (full) {
      std::vector<double> x = x0;
      for (std::size_t t = 0; t < transient; ++t) x = map.step(x);
      SpectrumAccumulator<double> acc;
      for (std::size_t t = 0; t < steps; ++t) {
        acc.push(map.jacobian(x));
        x = map.step(x);
      }
      report["spectrum"] = spectrum_report(acc.finish());
    }
  }
  report["steps"] = steps;
  report["transient"] = transient;
  ctx.out << report.dump(2) << "\n";
  if (!out.empty()) {
    Output o{out, {}};
    o.add("spectrum.json", report.dump(2) + "\n");
    finish(ctx, o);
  }
}

void dispatch(const Context& ctx) {
  if (ctx.command == "gen") return cmd_gen(ctx);
  if (ctx.command == "train") return cmd_train(ctx);
  if (ctx.command == "bench") return cmd_bench(ctx);
  if (ctx.command == "sweep") return cmd_sweep(ctx);
  if (ctx.command == "synth") return cmd_synth(ctx);
  return cmd_lyap(ctx);
}

int fail(std::ostream& err, int code, const char* kind, const std::string& msg) {
  std::string line = msg;
  std::replace(line.begin(), line.end(), '\n', ' ');
  err << "error: " << kind << ": " << line << "\n";
  return code;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Lyapunov-exponent learning toolkit", "lyaplearn"};
  app.set_version_flag("--version", LYAPLEARN_VERSION);
  app.require_subcommand(1);

  struct Bound {
    CLI::App* sub;
    Params params;
    std::map<std::string, std::string> values;
    std::map<std::string, CLI::Option*> options;
    std::string config;
  };
  std::vector<std::unique_ptr<Bound>> bound;
  for (const auto& name : commands()) {
    auto b = std::make_unique<Bound>();
    b->sub = app.add_subcommand(name, describe(name));
    b->params = params_for(name);
    b->sub->add_option("--config", b->config, "JSON config file or a manifest to replay");
    for (const auto& p : b->params) {
      CLI::Option* opt = b->sub->add_option("--" + p.key, b->values[p.key], p.help);
      opt->default_str(default_text(p))->type_name(type_name(p.kind));
      b->options[p.key] = opt;
    }
    bound.push_back(std::move(b));
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      app.exit(e, out, err);
      return kExitOk;
    }
    return fail(err, kExitConfig, "config", e.what());
  }

  for (const auto& b : bound) {
    if (!b->sub->parsed()) continue;
    const std::string command = b->sub->get_name();
    try {
      std::map<std::string, std::string> given;
      for (const auto& [key, opt] : b->options)
        if (opt->count() > 0) given[key] = b->values[key];
      Resolved r = resolve(b->params, command, b->config, given);
      Context ctx{command, b->config, std::move(r.cfg), std::move(r.errors), out, Clock::now()};
      dispatch(ctx);
      return kExitOk;
    } catch (const ConfigError& e) {
      return fail(err, kExitConfig, "config", e.what());
    } catch (const std::invalid_argument& e) {
      return fail(err, kExitConfig, "config", e.what());
    } catch (const IoError& e) {
      return fail(err, kExitIo, "io", e.what());
    } catch (const fs::filesystem_error& e) {
      return fail(err, kExitIo, "io", e.what());
    } catch (const NumericalError& e) {
      return fail(err, kExitNumerical, "numerical", e.what());
    } catch (const DomainError& e) {
      return fail(err, kExitNumerical, "numerical", e.what());
    } catch (const GradientError& e) {
      return fail(err, kExitNumerical, "numerical", e.what());
    } catch (const std::exception& e) {
      return fail(err, kExitInternal, "internal", e.what());
    }
  }
  return fail(err, kExitConfig, "config", "no command given");
}

}  // namespace lyl::cli
