#include "lyaplearn/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace lyl {

namespace fs = std::filesystem;

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

nlohmann::json to_json(const LorenzParams& p) { return {{"sigma", p.sigma}, {"rho", p.rho}, {"beta", p.beta}}; }

LorenzParams lorenz_params_from_json(const nlohmann::json& j) {
  return {j.at("sigma").get<double>(), j.at("rho").get<double>(), j.at("beta").get<double>()};
}

void write_trajectory_csv(std::ostream& out, const Trajectory& traj) {
  if (traj.dim() != 3) throw std::invalid_argument("trajectory CSV needs 3-dimensional states");
  out << "t,x,y,z,regime\n";
  const std::size_t shift = traj.shift_index.value_or(traj.size());
  for (std::size_t i = 0; i < traj.size(); ++i) {
    const auto& s = traj.states[i];
    out << i << ',' << format_double(s[0]) << ',' << format_double(s[1]) << ',' << format_double(s[2]) << ','
        << (i >= shift ? 1 : 0) << '\n';
  }
}

nlohmann::json trajectory_sidecar(const Trajectory& traj) {
  nlohmann::json j;
  j["dt"] = traj.dt;
  j["shift_index"] = traj.shift_index ? nlohmann::json(*traj.shift_index) : nlohmann::json(nullptr);
  j["scale"] = traj.scale;
  j["params_a"] = to_json(traj.params_a);
  j["params_b"] = to_json(traj.params_b);
  j["seed"] = traj.seed;
  j["generator"] = traj.generator;
  return j;
}

void save_trajectory(const fs::path& dir, const std::string& stem, const Trajectory& traj) {
  std::ostringstream csv;
  write_trajectory_csv(csv, traj);
  write_text_file(dir / (stem + ".csv"), csv.str());
  write_text_file(dir / (stem + ".json"), trajectory_sidecar(traj).dump(2) + "\n");
}

Trajectory load_trajectory(const fs::path& csv) {
  std::istringstream in(read_text_file(csv));
  std::string line;
  if (!std::getline(in, line) || line != "t,x,y,z,regime")
    throw IoError(csv.string() + ": expected header t,x,y,z,regime");
  Trajectory traj;
  std::optional<std::size_t> first_shifted;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++row;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    if (cells.size() != 5) throw IoError(csv.string() + ": row " + std::to_string(row) + " does not have 5 fields");
    std::vector<double> s(3);
    for (int k = 0; k < 3; ++k) {
      char* end = nullptr;
      s[k] = std::strtod(cells[k + 1].c_str(), &end);
      if (end == cells[k + 1].c_str() || !std::isfinite(s[k]))
        throw IoError(csv.string() + ": bad value '" + cells[k + 1] + "' in row " + std::to_string(row));
    }
    if (cells[4] == "1" && !first_shifted) first_shifted = traj.states.size();
    traj.states.push_back(std::move(s));
  }
  if (traj.states.size() < 2) throw IoError(csv.string() + ": fewer than two states");
  traj.shift_index = first_shifted;
  traj.generator = "csv";

  fs::path side = csv;
  side.replace_extension(".json");
  if (fs::exists(side)) {
    try {
      const auto j = nlohmann::json::parse(read_text_file(side));
      traj.dt = j.at("dt").get<double>();
      traj.scale = j.at("scale").get<double>();
      if (!j.at("shift_index").is_null()) traj.shift_index = j.at("shift_index").get<std::size_t>();
      traj.params_a = lorenz_params_from_json(j.at("params_a"));
      traj.params_b = lorenz_params_from_json(j.at("params_b"));
      traj.seed = j.at("seed").get<std::uint64_t>();
      traj.generator = j.value("generator", traj.generator);
    } catch (const nlohmann::json::exception& e) {
      throw IoError(side.string() + ": " + e.what());
    }
  }
  if (traj.shift_index && (*traj.shift_index == 0 || *traj.shift_index >= traj.size()))
    throw IoError(csv.string() + ": shift index outside the trajectory");
  return traj;
}

void write_series_csv(std::ostream& out, const ExperimentResult& res) {
  out << "step,mse,reg\n";
  for (std::size_t t = 0; t < res.per_step_mse.size(); ++t)
    out << t << ',' << format_double(res.per_step_mse[t]) << ',' << format_double(res.per_step_reg[t]) << '\n';
}

nlohmann::json to_json(const TrainConfig& cfg) {
  return {{"regularizer", to_string(cfg.regularizer)},
          {"alpha", cfg.alpha},
          {"dropout", cfg.dropout_p},
          {"horizon", cfg.lyap_horizon},
          {"lr", cfg.learning_rate},
          {"optimizer", to_string(cfg.optimizer)},
          {"seed", cfg.seed},
          {"layers", cfg.layer_sizes},
          {"activation", to_string(cfg.activation)},
          {"eval_steps", cfg.eval_steps},
          {"eval_transient", cfg.eval_transient}};
}

nlohmann::json run_summary(const ExperimentResult& res, const std::string& series_file) {
  nlohmann::json j;
  j["config"] = to_json(res.config);
  j["seed"] = res.seed;
  j["shift_index"] = res.shift_index;
  j["steps"] = res.per_step_mse.size();
  j["post_shift_mse_sum"] = res.post_shift_mse_sum;
  j["skipped_reg_steps"] = res.skipped_reg_steps;
  j["series"] = series_file;
  if (res.eval_spectrum) {
    j["eval_spectrum"] = spectrum_report(*res.eval_spectrum);
  } else {
    j["eval_spectrum"] = nullptr;
    j["eval_error"] = res.eval_error;
  }
  return j;
}

void write_benchmark_csv(std::ostream& out, const std::vector<BenchmarkRow>& rows) {
  out << "regularizer,param,mean_ratio,q1,median,q3\n";
  for (const auto& r : rows)
    out << to_string(r.spec.tag) << ',' << format_double(r.spec.param) << ',' << format_double(r.mean_ratio) << ','
        << format_double(r.q1) << ',' << format_double(r.median) << ',' << format_double(r.q3) << '\n';
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepPoint>& curve) {
  out << "regularizer,param,mean_ratio,q1,median,q3\n";
  for (const auto& p : curve)
    out << "lyapunov," << format_double(p.alpha) << ',' << format_double(p.mean_ratio) << ',' << format_double(p.q1)
        << ',' << format_double(p.median) << ',' << format_double(p.q3) << '\n';
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  out.close();
  if (!out) throw IoError("write to " + path.string() + " failed");
}

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace lyl
