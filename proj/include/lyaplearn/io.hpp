#pragma once

// File formats: trajectory CSV + JSON sidecar, per-step series CSV, run JSON,
// benchmark/sweep tables. Doubles are written with 17 significant digits so
// reading them back is exact.

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"
#include "lyaplearn/dynsys.hpp"
#include "lyaplearn/experiments.hpp"

namespace lyl {

/// Failure to read or write a file.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string format_double(double v);

nlohmann::json to_json(const LorenzParams& p);
LorenzParams lorenz_params_from_json(const nlohmann::json& j);

/// t,x,y,z,regime (t is the step index, regime 1 from shift_index on).
void write_trajectory_csv(std::ostream& out, const Trajectory& traj);
/// {dt, shift_index, scale, params_a, params_b, seed, generator}
nlohmann::json trajectory_sidecar(const Trajectory& traj);
/// Writes <stem>.csv and <stem>.json into dir.
void save_trajectory(const std::filesystem::path& dir, const std::string& stem, const Trajectory& traj);
/// Reads a trajectory CSV; metadata comes from the sidecar next to it when present.
Trajectory load_trajectory(const std::filesystem::path& csv);

/// step,mse,reg; skipped regularizer steps are written as nan.
void write_series_csv(std::ostream& out, const ExperimentResult& res);

nlohmann::json to_json(const TrainConfig& cfg);
nlohmann::json run_summary(const ExperimentResult& res, const std::string& series_file);

/// regularizer,param,mean_ratio,q1,median,q3
void write_benchmark_csv(std::ostream& out, const std::vector<BenchmarkRow>& rows);
void write_sweep_csv(std::ostream& out, const std::vector<SweepPoint>& curve);

void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace lyl
