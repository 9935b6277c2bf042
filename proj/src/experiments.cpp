#include "lyaplearn/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <sstream>
#include <thread>

#include "lyaplearn/random.hpp"

namespace lyl {

std::string to_string(Regularizer r) {
  switch (r) {
    case Regularizer::none: return "none";
    case Regularizer::lyapunov: return "lyapunov";
    case Regularizer::l1: return "l1";
    case Regularizer::l2: return "l2";
    case Regularizer::dropout: return "dropout";
  }
  return "none";
}

Regularizer regularizer_from_string(const std::string& s) {
  if (s == "none" || s == "vanilla") return Regularizer::none;
  if (s == "lyapunov") return Regularizer::lyapunov;
  if (s == "l1") return Regularizer::l1;
  if (s == "l2") return Regularizer::l2;
  if (s == "dropout") return Regularizer::dropout;
  throw std::invalid_argument("unknown regularizer '" + s + "'");
}

std::string to_string(OptimizerKind o) { return o == OptimizerKind::adam ? "adam" : "sgd"; }

OptimizerKind optimizer_from_string(const std::string& s) {
  if (s == "adam") return OptimizerKind::adam;
  if (s == "sgd") return OptimizerKind::sgd;
  throw std::invalid_argument("unknown optimizer '" + s + "'");
}

void validate(const TrainConfig& cfg) {
  std::vector<std::string> bad;
  if (!(cfg.alpha >= 0.0) || !std::isfinite(cfg.alpha)) bad.push_back("alpha must be finite and >= 0");
  if (!(cfg.dropout_p >= 0.0 && cfg.dropout_p < 1.0)) bad.push_back("dropout_p must lie in [0, 1)");
  if (cfg.lyap_horizon < 1) bad.push_back("lyap_horizon must be >= 1");
  if (!(cfg.learning_rate > 0.0)) bad.push_back("learning_rate must be > 0");
  if (cfg.layer_sizes.size() < 2) bad.push_back("layer_sizes needs at least two entries");
  for (std::size_t s : cfg.layer_sizes)
    if (s == 0) {
      bad.push_back("layer_sizes entries must be positive");
      break;
    }
  if (cfg.layer_sizes.size() >= 2 && cfg.layer_sizes.front() != cfg.layer_sizes.back())
    bad.push_back("layer_sizes must start and end with the state dimension");
  if (cfg.eval_steps < 1) bad.push_back("eval_steps must be >= 1");
  if (!bad.empty()) {
    std::string msg = "invalid training config:";
    for (const auto& b : bad) msg += " " + b + ";";
    throw std::invalid_argument(msg);
  }
}

Adam::Adam(std::size_t n, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0) {}

void Adam::step(std::span<double> params, std::span<const double> grads) {
  if (params.size() != m_.size() || grads.size() != m_.size()) throw std::invalid_argument("Adam: size mismatch");
  beta1_pow_ *= beta1_;
  beta2_pow_ *= beta2_;
  const double c1 = 1.0 - beta1_pow_;
  const double c2 = 1.0 - beta2_pow_;
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grads[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grads[i] * grads[i];
    params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
  }
}

namespace {

// Adam or plain gradient descent behind one call.
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, std::size_t n, double lr) : kind_(kind), lr_(lr), adam_(n, lr) {}
  void step(std::span<double> params, std::span<const double> grads) {
    if (kind_ == OptimizerKind::adam) {
      adam_.step(params, grads);
    } else {
      for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr_ * grads[i];
    }
  }

 private:
  OptimizerKind kind_;
  double lr_;
  Adam adam_;
};

std::vector<Var> constants(Tape& tape, std::span<const double> x) {
  std::vector<Var> out;
  out.reserve(x.size());
  for (double v : x) out.push_back(tape.constant(v));
  return out;
}

std::vector<Var> weight_leaves(const TapeNetwork& net) {
  std::vector<Var> w;
  for (const auto& layer : net.layers) w.insert(w.end(), layer.weight.data().begin(), layer.weight.data().end());
  return w;
}

}  // namespace

StepLoss record_step_loss(const TrainConfig& cfg, const TapeNetwork& net, std::span<const double> x,
                          std::span<const double> target, const DropoutMask* dropout) {
  Tape& tape = *net.layers.front().bias.front().tape;
  const auto xv = constants(tape, x);
  const auto pred = forward(net, std::span<const Var>(xv), nullptr, dropout);
  if (pred.size() != target.size()) throw std::invalid_argument("target dimension does not match network output");
  std::vector<Var> sq;
  sq.reserve(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) sq.push_back(square(pred[i] - target[i]));
  const Var mse = sum(std::span<const Var>(sq));

  StepLoss out{mse, mse.value(), 0.0, false};
  switch (cfg.regularizer) {
    case Regularizer::lyapunov: {
      if (cfg.alpha == 0.0) break;
      try {
        const Var lambda = largest_exponent(NetworkMap<Var>(net), std::span<const Var>(xv), cfg.lyap_horizon, 1);
        out.reg = lambda.value();
        out.total = mse + cfg.alpha * abs(lambda);
      } catch (const NumericalError&) {
        out.skipped = true;
      } catch (const DomainError&) {
        out.skipped = true;
      }
      break;
    }
    case Regularizer::l1: {
      std::vector<Var> a;
      for (const Var& w : weight_leaves(net)) a.push_back(abs(w));
      const Var r = sum(std::span<const Var>(a));
      out.reg = r.value();
      out.total = mse + cfg.alpha * r;
      break;
    }
    case Regularizer::l2: {
      const auto w = weight_leaves(net);
      const Var r = dot(std::span<const Var>(w), std::span<const Var>(w));
      out.reg = r.value();
      out.total = mse + cfg.alpha * r;
      break;
    }
    case Regularizer::none:
    case Regularizer::dropout: break;
  }
  return out;
}

ExperimentResult train_online(const TrainConfig& cfg, const Trajectory& traj) {
  validate(cfg);
  if (traj.size() < 2) throw std::invalid_argument("train_online: trajectory needs at least two states");
  if (traj.dim() != cfg.layer_sizes.front())
    throw std::invalid_argument("train_online: state dimension does not match the network");

  NetworkParams init = init_network(cfg.layer_sizes, cfg.seed, cfg.activation);
  std::vector<double> theta = flatten(init);
  Tape tape;
  TapeNetwork net = bind(init, tape);
  const std::vector<Var> leaves = flatten(net);
  const std::size_t checkpoint = tape.checkpoint();
  Optimizer opt(cfg.optimizer, theta.size(), cfg.learning_rate);
  Engine dropout_rng = make_stream(cfg.seed, "dropout");

  ExperimentResult res;
  res.config = cfg;
  res.seed = cfg.seed;
  res.shift_index = traj.shift_index.value_or(0);
  const std::size_t steps = traj.size() - 1;
  res.per_step_mse.reserve(steps);
  res.per_step_reg.reserve(steps);

  std::vector<double> grads(theta.size());
  for (std::size_t t = 0; t < steps; ++t) {
    tape.truncate(checkpoint);
    DropoutMask mask;
    const bool use_dropout = cfg.regularizer == Regularizer::dropout && cfg.dropout_p > 0.0;
    if (use_dropout) mask = draw_dropout_mask(net, cfg.dropout_p, [&] { return uniform01(dropout_rng); });

    const StepLoss loss =
        record_step_loss(cfg, net, traj.states[t], traj.states[t + 1], use_dropout ? &mask : nullptr);
    if (!std::isfinite(loss.total.value()))
      throw NumericalError("non-finite loss at step " + std::to_string(t));

    const Gradients g = tape.backward(loss.total);
    for (std::size_t i = 0; i < leaves.size(); ++i) grads[i] = g[leaves[i]];
    opt.step(theta, grads);
    for (std::size_t i = 0; i < leaves.size(); ++i) tape.set_value(leaves[i], theta[i]);

    res.per_step_mse.push_back(loss.mse);
    if (loss.skipped) {
      res.per_step_reg.push_back(std::numeric_limits<double>::quiet_NaN());
      ++res.skipped_reg_steps;
    } else {
      res.per_step_reg.push_back(loss.reg);
    }
  }

  for (std::size_t t = res.shift_index; t < res.per_step_mse.size(); ++t) res.post_shift_mse_sum += res.per_step_mse[t];

  res.final_params = unflatten(cfg.layer_sizes, cfg.activation, theta);
  try {
    res.eval_spectrum = spectrum_of_network<double>(res.final_params, traj.states.back(), cfg.eval_steps,
                                                    cfg.eval_transient);
  } catch (const NumericalError& e) {
    res.eval_error = e.what();
  }
  return res;
}

RatioReport loss_ratio(const ExperimentResult& vanilla, const ExperimentResult& regularized) {
  if (vanilla.shift_index != regularized.shift_index || vanilla.per_step_mse.size() != regularized.per_step_mse.size())
    throw std::invalid_argument("loss_ratio: results do not share shift index and length");
  if (regularized.post_shift_mse_sum == 0.0) throw std::domain_error("loss_ratio: zero denominator");
  RatioReport r;
  r.ratio = vanilla.post_shift_mse_sum / regularized.post_shift_mse_sum;
  double num = 0.0, den = 0.0;
  for (std::size_t t = vanilla.shift_index; t < vanilla.per_step_mse.size(); ++t) {
    num += vanilla.per_step_mse[t];
    den += regularized.per_step_mse[t];
    if (den == 0.0) throw std::domain_error("loss_ratio: zero cumulative denominator at step " + std::to_string(t));
    r.ratio_series.push_back(num / den);
  }
  r.q1 = r.median = r.q3 = r.ratio;
  return r;
}

Quartiles quartiles(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("quartiles: empty input");
  std::sort(values.begin(), values.end());
  auto at = [&](double p) {
    const double pos = p * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
  };
  return {at(0.25), at(0.5), at(0.75)};
}

namespace {

TrainConfig variant_config(const TrainConfig& base, const RegularizerSpec& spec, std::uint64_t seed) {
  TrainConfig cfg = base;
  cfg.seed = seed;
  cfg.regularizer = spec.tag;
  cfg.alpha = 0.0;
  cfg.dropout_p = 0.0;
  if (spec.tag == Regularizer::dropout) {
    cfg.dropout_p = spec.param;
  } else if (spec.tag != Regularizer::none) {
    cfg.alpha = spec.param;
  }
  return cfg;
}

template <class Job>
void run_jobs(std::size_t count, std::size_t threads, Job&& job) {
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        job(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t n = std::max<std::size_t>(1, std::min(threads, count));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < n; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  // first failure in job order, independent of scheduling
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace

BenchmarkResult run_benchmark(const TrainConfig& base, const RegimeShiftConfig& data,
                              const std::vector<RegularizerSpec>& regularizers, const BenchmarkOptions& opts) {
  if (opts.n_seeds < 1) throw std::invalid_argument("run_benchmark: n_seeds must be >= 1");
  validate(base);
  for (const auto& spec : regularizers) validate(variant_config(base, spec, base.seed));

  const std::size_t n_seeds = opts.n_seeds;
  const std::size_t n_var = regularizers.size();
  std::vector<Trajectory> trajs(n_seeds);
  for (std::size_t s = 0; s < n_seeds; ++s) trajs[s] = generate_regime_shift(data, base.seed + s);

  // job = seed * (n_var + 1) + slot; slot 0 is vanilla
  const std::size_t per_seed = n_var + 1;
  std::vector<ExperimentResult> results(n_seeds * per_seed);
  run_jobs(results.size(), opts.threads, [&](std::size_t job) {
    const std::size_t s = job / per_seed;
    const std::size_t slot = job % per_seed;
    const RegularizerSpec spec = slot == 0 ? RegularizerSpec{} : regularizers[slot - 1];
    results[job] = train_online(variant_config(base, spec, base.seed + s), trajs[s]);
  });

  BenchmarkResult out;
  for (std::size_t v = 0; v < n_var; ++v) {
    BenchmarkRow row;
    row.spec = regularizers[v];
    for (std::size_t s = 0; s < n_seeds; ++s)
      row.ratios.push_back(loss_ratio(results[s * per_seed], results[s * per_seed + v + 1]).ratio);
    double total = 0.0;
    for (double r : row.ratios) total += r;
    row.mean_ratio = total / static_cast<double>(n_seeds);
    const Quartiles q = quartiles(row.ratios);
    row.q1 = q.q1;
    row.median = q.median;
    row.q3 = q.q3;
    out.rows.push_back(std::move(row));
  }
  std::stable_sort(out.rows.begin(), out.rows.end(),
                   [](const BenchmarkRow& a, const BenchmarkRow& b) { return a.mean_ratio > b.mean_ratio; });
  if (opts.keep_runs) {
    out.variants.resize(n_seeds);
    for (std::size_t s = 0; s < n_seeds; ++s) {
      out.vanilla.push_back(std::move(results[s * per_seed]));
      for (std::size_t v = 0; v < n_var; ++v) out.variants[s].push_back(std::move(results[s * per_seed + v + 1]));
    }
  }
  return out;
}

std::vector<double> default_alpha_grid() { return {0.01, 0.03, 0.1, 0.3, 1.0, 3.0, 10.0}; }

std::vector<SweepPoint> sweep_alpha(const TrainConfig& base, const RegimeShiftConfig& data,
                                    const std::vector<double>& alphas, const BenchmarkOptions& opts) {
  if (alphas.empty()) throw std::invalid_argument("sweep_alpha: empty alpha grid");
  std::vector<RegularizerSpec> specs;
  for (double a : alphas) {
    if (!(a >= 0.0)) throw std::invalid_argument("sweep_alpha: alphas must be >= 0");
    specs.push_back({Regularizer::lyapunov, a});
  }
  BenchmarkOptions o = opts;
  o.keep_runs = false;
  const BenchmarkResult bench = run_benchmark(base, data, specs, o);
  std::vector<SweepPoint> curve;
  for (double a : alphas) {
    for (const auto& row : bench.rows) {
      if (row.spec.param == a) {
        curve.push_back({a, row.mean_ratio, row.q1, row.median, row.q3});
        break;
      }
    }
  }
  return curve;
}

void validate(const SynthConfig& cfg) {
  std::vector<std::string> bad;
  if (!(cfg.target_lambda > 0.0)) bad.push_back("target_lambda must be > 0");
  if (cfg.layer_sizes.size() < 2 || cfg.layer_sizes.front() != cfg.layer_sizes.back())
    bad.push_back("layer_sizes must describe a square map");
  if (!(cfg.learning_rate > 0.0)) bad.push_back("learning_rate must be > 0");
  if (cfg.horizon < 1) bad.push_back("horizon must be >= 1");
  if (cfg.step_budget < 1) bad.push_back("step_budget must be >= 1");
  if (cfg.max_restarts < 1) bad.push_back("max_restarts must be >= 1");
  if (cfg.eval_every < 1) bad.push_back("eval_every must be >= 1");
  if (cfg.eval_steps < 1 || cfg.final_steps < 1) bad.push_back("eval_steps and final_steps must be >= 1");
  if (!(cfg.tolerance > 0.0)) bad.push_back("tolerance must be > 0");
  if (!(cfg.bound > 0.0)) bad.push_back("bound must be > 0");
  if (!(cfg.init_gain > 0.0)) bad.push_back("init_gain must be > 0");
  if (cfg.screen_draws < 1 || cfg.screen_steps < 1) bad.push_back("screen_draws and screen_steps must be >= 1");
  if (!bad.empty()) {
    std::string msg = "invalid synthesis config:";
    for (const auto& b : bad) msg += " " + b + ";";
    throw std::invalid_argument(msg);
  }
}

AttractorCheck check_attractor(const NetworkParams& net, std::span<const double> x0, const SynthConfig& cfg,
                               std::size_t steps, bool keep_orbit) {
  AttractorCheck out;
  out.trajectory.dt = 1.0;
  out.trajectory.generator = "network-attractor";
  std::vector<double> x(x0.begin(), x0.end());
  double max_abs = 0.0;
  try {
    for (std::size_t t = 0; t < cfg.transient; ++t) x = forward(net, std::span<const double>(x));
    SpectrumAccumulator<double> acc;
    ForwardCache<double> cache;
    for (std::size_t t = 0; t < steps; ++t) {
      if (keep_orbit) out.trajectory.states.push_back(x);
      for (double v : x) max_abs = std::max(max_abs, std::abs(v));
      auto next = forward(net, std::span<const double>(x), &cache);
      acc.push(input_jacobian(net, cache));
      x = std::move(next);
      for (double v : x)
        if (!std::isfinite(v)) throw DivergenceError(t);
    }
    out.spectrum = acc.finish();
  } catch (const NumericalError&) {
    return out;
  }
  out.bounded = max_abs < cfg.bound;
  const ChaosReport rep = is_chaotic_attractor(out.spectrum);
  out.accepted = out.bounded && rep.chaotic && std::abs(rep.largest - cfg.target_lambda) < cfg.tolerance;
  return out;
}

namespace {

// First of up to screen_draws scaled initialisations whose orbit from x0 is
// chaotic and bounded; the last draw when none is.
NetworkParams screened_init(const SynthConfig& cfg, std::uint64_t seed, std::span<const double> x0) {
  SynthConfig quick = cfg;
  quick.transient = 0;
  NetworkParams net;
  for (std::size_t k = 0; k < cfg.screen_draws; ++k) {
    net = init_network(cfg.layer_sizes, stream_seed(seed, "screen-" + std::to_string(k)), cfg.activation);
    for (auto& layer : net.layers)
      for (double& w : layer.weight.data()) w *= cfg.init_gain;
    const AttractorCheck c = check_attractor(net, x0, quick, cfg.screen_steps, false);
    if (c.bounded && c.spectrum.horizon > 0 && is_chaotic_attractor(c.spectrum).chaotic) break;
  }
  return net;
}

}  // namespace

AttractorResult synthesize_attractor(const SynthConfig& cfg) {
  validate(cfg);
  std::optional<SpectrumEstimate> last;
  std::size_t total_steps = 0;
  const std::size_t d = cfg.layer_sizes.front();
  for (std::size_t restart = 0; restart < cfg.max_restarts; ++restart) {
    const std::uint64_t seed = stream_seed(cfg.seed, "synth-restart-" + std::to_string(restart));
    Engine rng = make_stream(seed, "data");
    auto random_start = [&] {
      std::vector<double> x(d);
      for (double& v : x) v = uniform(rng, -1.0, 1.0);
      return x;
    };
    std::vector<double> x = random_start();

    const NetworkParams init = screened_init(cfg, seed, x);
    std::vector<double> theta = flatten(init);
    Tape tape;
    TapeNetwork net = bind(init, tape);
    const std::vector<Var> leaves = flatten(net);
    const std::size_t checkpoint = tape.checkpoint();
    Adam opt(theta.size(), cfg.learning_rate);
    std::vector<double> grads(theta.size());
    NetworkParams current = init;

    for (std::size_t step = 1; step <= cfg.step_budget; ++step) {
      ++total_steps;
      tape.truncate(checkpoint);
      try {
        // orbit in plain doubles, Jacobians on the tape at those fixed states
        SpectrumAccumulator<Var> acc;
        std::vector<double> state = x;
        for (std::size_t t = 0; t < cfg.horizon; ++t) {
          const auto xv = constants(tape, state);
          acc.push(input_jacobian(net, std::span<const Var>(xv)));
          state = forward(current, std::span<const double>(state));
          for (double v : state)
            if (!(std::abs(v) <= kDivergenceBound)) throw DivergenceError(t + 1);
        }
        const auto spec = acc.finish();
        const Var hinge = max(spec.sum_exponents + cfg.hinge_margin, 0.0);
        const Var loss = square(spec.exponents.front() - cfg.target_lambda) + cfg.hinge_weight * square(hinge);
        const Gradients g = tape.backward(loss);
        for (std::size_t i = 0; i < leaves.size(); ++i) grads[i] = g[leaves[i]];
        opt.step(theta, grads);
        for (std::size_t i = 0; i < leaves.size(); ++i) tape.set_value(leaves[i], theta[i]);
        current = unflatten(cfg.layer_sizes, cfg.activation, theta);
        x = std::move(state);
      } catch (const NumericalError&) {
        x = random_start();
        continue;
      } catch (const DomainError&) {
        x = random_start();
        continue;
      }

      if (step % cfg.eval_every != 0) continue;
      const AttractorCheck quick = check_attractor(current, x, cfg, cfg.eval_steps, false);
      if (quick.spectrum.horizon > 0) last = quick.spectrum;
      if (!quick.accepted) continue;
      AttractorCheck full = check_attractor(current, x, cfg, cfg.final_steps, true);
      if (!full.accepted) continue;
      AttractorResult res;
      res.params = current;
      res.trajectory = std::move(full.trajectory);
      res.spectrum = std::move(full.spectrum);
      res.restarts = restart;
      res.steps = total_steps;
      res.seed = seed;
      return res;
    }
  }
  std::ostringstream msg;
  msg << "attractor synthesis did not reach lambda_1 = " << cfg.target_lambda << " within " << cfg.max_restarts
      << " restarts";
  throw NonConvergenceError(msg.str(), last);
}

}  // namespace lyl
