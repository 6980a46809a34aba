#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "comet/experiments.hpp"

namespace {

enum ExitCode { kOk = 0, kConfig = 2, kConvergence = 3, kNumerical = 4 };

comet::Json load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw comet::ConfigError("cannot open config " + path);
  try {
    return comet::Json::parse(in);
  } catch (const comet::Json::exception& e) {
    throw comet::ConfigError("config " + path + " is not valid JSON: " + e.what());
  }
}

void print_flags(const comet::ConvergenceReport& report) {
  for (const auto& f : report.flags) {
    if (!f.message.empty())
      std::cerr << "  " << f.column << " point " << f.point << ": " << f.message << "\n";
    else
      std::cerr << "  " << f.curve << "/" << f.column << " point " << f.point << " (" << f.coordinate
                << "): " << f.value << " -> " << f.rerun << ", shift " << f.shift << "\n";
  }
}

int run_command(const std::string& experiment, const std::string& config_path, const std::string& out_dir,
                bool full_scale, int threads) {
  comet::Json cfg = load_config(config_path);
  if (!cfg.is_object()) throw comet::ConfigError("config must be a JSON object");
  if (full_scale) cfg["full_scale"] = true;
  if (threads > 0) cfg["threads"] = threads;
  const auto ds = comet::run_experiment(experiment, cfg, out_dir, &std::cerr);
  std::cout << "wrote " << ds.tables.size() << " CSV files and manifest.json to " << out_dir << "/" << experiment
            << " in " << ds.manifest["wall_time_s"].get<double>() << " s\n";
  if (ds.convergence.skipped) {
    std::cout << "convergence check skipped: " << ds.convergence.note << "\n";
    return kOk;
  }
  std::cout << "convergence: " << ds.convergence.points_checked << " points rechecked at 1.5x n_max, "
            << ds.convergence.flags.size() << " flagged\n";
  if (!ds.convergence.ok()) {
    print_flags(ds.convergence);
    return kConvergence;
  }
  return kOk;
}

int check_command(const std::string& dir, int threads) {
  const auto report = comet::check_dataset(dir, std::max(1, threads));
  std::cout << report.to_json().dump(2) << "\n";
  if (!report.ok()) {
    print_flags(report);
    return kConvergence;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Experiment runner for center-of-mass quantum metrology datasets"};
  app.require_subcommand(1);

  std::string experiment, config_path, out_dir = "out", dir;
  bool full_scale = false;
  int threads = 0;
  auto* run = app.add_subcommand("run", "Run one experiment and write its CSVs and manifest");
  run->add_option("experiment", experiment, "fig1..fig6, homodyne or analytic-table")->required();
  run->add_option("--config", config_path, "JSON config with dimensionless ratios")->required();
  run->add_option("--out", out_dir, "Output directory")->capture_default_str();
  run->add_flag("--full-scale", full_scale, "Use the full-size parameter set (slow)");
  run->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);

  auto* check = app.add_subcommand("check", "Rerun part of a dataset at 1.5x n_max and report shifts");
  check->add_option("dir", dir, "Directory holding manifest.json")->required();
  check->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kConfig;
  }

  try {
    if (run->parsed()) return run_command(experiment, config_path, out_dir, full_scale, threads);
    return check_command(dir, threads);
  } catch (const comet::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const comet::TruncationError& e) {
    std::cerr << "convergence failure: " << e.what() << "\n";
    return kConvergence;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  }
}
