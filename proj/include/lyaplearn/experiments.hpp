#pragma once

// Online regime-shift training with the Lyapunov regularizer and its
// baselines, loss-ratio evaluation, and attractor synthesis.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lyaplearn/dynsys.hpp"
#include "lyaplearn/errors.hpp"
#include "lyaplearn/lyap.hpp"
#include "lyaplearn/net.hpp"

namespace lyl {

enum class Regularizer { none, lyapunov, l1, l2, dropout };
enum class OptimizerKind { adam, sgd };

std::string to_string(Regularizer r);
Regularizer regularizer_from_string(const std::string& s);
std::string to_string(OptimizerKind o);
OptimizerKind optimizer_from_string(const std::string& s);

struct TrainConfig {
  Regularizer regularizer = Regularizer::none;
  double alpha = 0.0;       // weight of the regularizer term
  double dropout_p = 0.0;   // only used with Regularizer::dropout
  std::size_t lyap_horizon = 20;
  double learning_rate = 1e-3;
  OptimizerKind optimizer = OptimizerKind::adam;
  std::uint64_t seed = 0;
  std::vector<std::size_t> layer_sizes{3, 50, 50, 50, 3};
  Activation activation = Activation::tanh;
  // Full-spectrum evaluation of the trained network, started at the last data state.
  std::size_t eval_steps = 1000;
  std::size_t eval_transient = 100;
};

/// Throws std::invalid_argument listing every invalid field.
void validate(const TrainConfig& cfg);

struct ExperimentResult {
  std::vector<double> per_step_mse;
  std::vector<double> per_step_reg;  // NaN marks a skipped regularizer step
  double post_shift_mse_sum = 0.0;
  std::size_t shift_index = 0;
  std::uint64_t seed = 0;
  std::size_t skipped_reg_steps = 0;
  TrainConfig config;
  NetworkParams final_params;
  std::optional<SpectrumEstimate> eval_spectrum;
  std::string eval_error;
};

/// Adam with bias correction, operating on a flat parameter vector.
class Adam {
 public:
  Adam(std::size_t n, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(std::span<double> params, std::span<const double> grads);

 private:
  double lr_, beta1_, beta2_, eps_;
  double beta1_pow_ = 1.0, beta2_pow_ = 1.0;
  std::vector<double> m_, v_;
};

/// Loss recorded on a tape for one online step, split into its parts.
struct StepLoss {
  Var total;
  double mse = 0.0;
  double reg = 0.0;     // unweighted regularizer value (lambda for lyapunov)
  bool skipped = false; // lyapunov term dropped after a numerical failure
};

/// Records the composite loss ||target - F(x)||^2 + alpha * R on the tape.
/// R is |lambda_hat| for lyapunov, sum|W| for l1, sum W^2 for l2 (weights only).
StepLoss record_step_loss(const TrainConfig& cfg, const TapeNetwork& net, std::span<const double> x,
                          std::span<const double> target, const DropoutMask* dropout);

/// One pass over the trajectory, one optimizer step per time point.
ExperimentResult train_online(const TrainConfig& cfg, const Trajectory& traj);

struct RatioReport {
  double ratio = 0.0;
  std::vector<double> ratio_series;  // cumulative ratio from shift_index on
  double q1 = 0.0, median = 0.0, q3 = 0.0;
};

/// r = vanilla post-shift MSE sum / regularized post-shift MSE sum.
RatioReport loss_ratio(const ExperimentResult& vanilla, const ExperimentResult& regularized);

struct Quartiles {
  double q1, median, q3;
};
/// Linear-interpolation quartiles.
Quartiles quartiles(std::vector<double> values);

struct RegularizerSpec {
  Regularizer tag = Regularizer::none;
  double param = 0.0;  // alpha, or dropout probability
};

struct BenchmarkRow {
  RegularizerSpec spec;
  double mean_ratio = 0.0;
  double q1 = 0.0, median = 0.0, q3 = 0.0;
  std::vector<double> ratios;  // per seed
};

struct BenchmarkResult {
  std::vector<BenchmarkRow> rows;                       // sorted by mean ratio, descending
  std::vector<ExperimentResult> vanilla;                // per seed
  std::vector<std::vector<ExperimentResult>> variants;  // [seed][regularizer]
};

struct BenchmarkOptions {
  std::size_t n_seeds = 10;
  std::size_t threads = 1;
  bool keep_runs = true;
};

/// Seed s uses base.seed + s for the trajectory, the initial network and the
/// dropout stream; every variant of one seed shares trajectory and init.
BenchmarkResult run_benchmark(const TrainConfig& base, const RegimeShiftConfig& data,
                              const std::vector<RegularizerSpec>& regularizers, const BenchmarkOptions& opts);

struct SweepPoint {
  double alpha = 0.0;
  double mean_ratio = 0.0;
  double q1 = 0.0, median = 0.0, q3 = 0.0;
};

std::vector<double> default_alpha_grid();
std::vector<SweepPoint> sweep_alpha(const TrainConfig& base, const RegimeShiftConfig& data,
                                    const std::vector<double>& alphas, const BenchmarkOptions& opts);

struct SynthConfig {
  double target_lambda = 0.104;
  std::vector<std::size_t> layer_sizes{3, 10, 3};
  Activation activation = Activation::tanh;
  double learning_rate = 1e-3;
  std::size_t horizon = 40;          // training-time spectrum horizon
  std::size_t step_budget = 50000;   // optimizer steps per restart
  std::size_t max_restarts = 5;
  double hinge_weight = 10.0;        // c
  double hinge_margin = 0.1;         // m
  std::size_t eval_every = 500;
  std::size_t eval_steps = 20000;
  std::size_t final_steps = 100000;
  std::size_t transient = 1000;
  double tolerance = 0.05;
  double bound = 10.0;
  // Each restart screens up to screen_draws initial networks, weights scaled
  // by init_gain, and trains the first one whose orbit is already chaotic.
  double init_gain = 2.0;
  std::size_t screen_draws = 100;
  std::size_t screen_steps = 5000;
  std::uint64_t seed = 0;
};

void validate(const SynthConfig& cfg);

struct AttractorResult {
  NetworkParams params;
  Trajectory trajectory;  // post-transient orbit
  SpectrumEstimate spectrum;
  std::size_t restarts = 0;
  std::size_t steps = 0;
  std::uint64_t seed = 0;
};

class NonConvergenceError : public NumericalError {
 public:
  NonConvergenceError(const std::string& what, std::optional<SpectrumEstimate> last)
      : NumericalError(what), last_(std::move(last)) {}
  const std::optional<SpectrumEstimate>& last_spectrum() const { return last_; }

 private:
  std::optional<SpectrumEstimate> last_;
};

/// Trains a network whose own orbit is a chaotic attractor with
/// lambda_1 close to target, using loss (lambda_1 - target)^2 + c max(0, sum + m)^2.
/// The loss gradient holds the orbit fixed and differentiates only the
/// Jacobians along it; the term through the states grows like exp(lambda_1 T)
/// and swamps the useful signal once the map is chaotic.
AttractorResult synthesize_attractor(const SynthConfig& cfg);

/// Long-horizon check of a synthesized network: spectrum, orbit and bound.
struct AttractorCheck {
  SpectrumEstimate spectrum;
  Trajectory trajectory;
  bool bounded = false;
  bool accepted = false;
};
AttractorCheck check_attractor(const NetworkParams& net, std::span<const double> x0, const SynthConfig& cfg,
                               std::size_t steps, bool keep_orbit);

}  // namespace lyl
