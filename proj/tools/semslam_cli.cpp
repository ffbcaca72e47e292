// Command-line front end: simulate synthetic datasets, solve them, evaluate
// trajectories, and export trajectory plots.
//
// Exit codes: 0 success, 1 usage error, 2 runtime error.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "semslam/io_eval.hpp"
#include "semslam/optimizer.hpp"
#include "semslam/plot.hpp"
#include "semslam/simulator.hpp"

namespace {

struct SimulateArgs {
  std::string config_path;
  std::string out_path;
  std::uint64_t seed = 0;
};

struct SolveArgs {
  std::string dataset_path;
  std::string out_path;
  std::string traj_out_path;
  std::string assoc = "auto";
  double delta = 1e-3;
  int em_iters = 10;
  double sigma_v = -1.0;  // < 0: take the dataset's value
  double spawn_threshold = 8.0;
  bool no_orientation = false;
};

struct EvalArgs {
  std::string est_path;
  std::string gt_path;
  std::string metric = "ate";
  int rpe_delta = 1;
};

struct PlotArgs {
  std::string solution_path;
  std::string gt_path;
  std::string out_path;
};

int run_simulate(const SimulateArgs& args) {
  const semslam::SimConfig cfg = semslam::read_sim_config(args.config_path);
  const semslam::Dataset ds =
      semslam::make_dataset(cfg.world, cfg.trajectory, cfg.noise, args.seed);
  const std::size_t bytes = semslam::write_dataset(ds, args.out_path);
  std::size_t detections = 0;
  for (const auto& kf : ds.keyframes) detections += kf.detections.size();
  std::cout << "landmarks: " << ds.ground_truth.landmarks.size() << "\n"
            << "keyframes: " << ds.keyframes.size() << "\n"
            << "detections: " << detections << "\n"
            << "wrote " << args.out_path << " (" << bytes << " bytes)\n";
  return 0;
}

int run_solve(const SolveArgs& args) {
  const semslam::Dataset ds = semslam::read_dataset(args.dataset_path);
  semslam::SolverConfig cfg;
  cfg.delta_prune = args.delta;
  cfg.max_em_iters = args.em_iters;
  cfg.sigma_v = args.sigma_v >= 0.0 ? args.sigma_v : ds.noise_config.sigma_v;
  cfg.spawn_threshold = args.spawn_threshold;
  cfg.use_orientation = !args.no_orientation;
  if (args.assoc == "exact") {
    cfg.assoc = semslam::AssocMode::kExact;
  } else if (args.assoc == "factored") {
    cfg.assoc = semslam::AssocMode::kFactored;
  } else {
    cfg.assoc = semslam::AssocMode::kAuto;
  }

  const semslam::Solution sol = semslam::run_em(ds, cfg);
  for (std::size_t i = 0; i < sol.iterations.size(); ++i) {
    std::cout << "iter " << (i + 1) << ": cost "
              << semslam::format_double(sol.iterations[i].cost, 9) << " (spawned "
              << sol.iterations[i].spawned << ")\n";
  }
  semslam::write_solution(sol, args.out_path);
  std::string traj_path = args.traj_out_path;
  if (traj_path.empty()) {
    traj_path =
        std::filesystem::path(args.out_path).replace_extension(".traj.txt").string();
  }
  semslam::export_trajectory(sol.trajectory, traj_path);
  std::cout << "wrote " << args.out_path << "\n"
            << "wrote " << traj_path << "\n";
  return 0;
}

int run_eval(const EvalArgs& args) {
  const auto est = semslam::import_trajectory(args.est_path);
  const auto gt = semslam::import_trajectory(args.gt_path);
  double value = 0.0;
  if (args.metric == "ate") {
    value = semslam::ate(est, gt);
  } else {
    value = semslam::rpe(est, gt, args.rpe_delta);
  }
  std::printf("%s: %.4f\n", args.metric.c_str(), value);
  return 0;
}

int run_plot(const PlotArgs& args) {
  const semslam::Solution sol = semslam::read_solution(args.solution_path);
  std::vector<semslam::Se3Pose> gt;
  const bool has_gt = !args.gt_path.empty();
  if (has_gt) gt = semslam::import_trajectory(args.gt_path);
  semslam::write_solution_svg(sol, has_gt ? &gt : nullptr, args.out_path);
  std::cout << "wrote " << args.out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semantic SLAM back-end: simulate, solve, evaluate, plot"};
  app.require_subcommand(1);

  SimulateArgs sim;
  CLI::App* simulate = app.add_subcommand(
      "simulate", "Generate a synthetic dataset from a config file");
  simulate->add_option("--config", sim.config_path, "Config JSON (world/trajectory/noise)")
      ->required();
  simulate->add_option("--out", sim.out_path, "Output dataset JSON")->required();
  simulate->add_option("--seed", sim.seed, "Random seed")->default_val(0);

  SolveArgs sol;
  CLI::App* solve = app.add_subcommand("solve", "Run the EM solver on a dataset");
  solve->add_option("--dataset", sol.dataset_path, "Dataset JSON")->required();
  solve->add_option("--out", sol.out_path, "Output solution JSON")->required();
  solve->add_option("--traj-out", sol.traj_out_path,
                    "Estimated trajectory path (default: --out with .traj.txt)");
  solve->add_option("--assoc", sol.assoc, "Association weights: auto|exact|factored")
      ->check(CLI::IsMember({"auto", "exact", "factored"}))
      ->default_val("auto");
  solve->add_option("--delta", sol.delta, "Weight pruning threshold")
      ->default_val(1e-3);
  solve->add_option("--em-iters", sol.em_iters, "Maximum EM iterations")
      ->default_val(10);
  solve->add_option("--sigma-v", sol.sigma_v,
                    "Orientation deviation (default: the dataset's value)");
  solve->add_option("--spawn-threshold", sol.spawn_threshold,
                    "Landmark spawn gate in log-likelihood units")
      ->default_val(8.0);
  solve->add_flag("--no-orientation", sol.no_orientation,
                  "Drop orientation terms (shape features only)");

  EvalArgs ev;
  CLI::App* eval_cmd =
      app.add_subcommand("eval", "Compare an estimated trajectory to ground truth");
  eval_cmd->add_option("--est", ev.est_path, "Estimated trajectory file")->required();
  eval_cmd->add_option("--gt", ev.gt_path, "Ground-truth trajectory file")->required();
  eval_cmd->add_option("--metric", ev.metric, "ate|rpe")
      ->check(CLI::IsMember({"ate", "rpe"}))
      ->default_val("ate");
  eval_cmd->add_option("--rpe-delta", ev.rpe_delta, "Frame gap for rpe")
      ->default_val(1);

  PlotArgs plot;
  CLI::App* plot_cmd = app.add_subcommand("plot", "Render a solution to SVG");
  plot_cmd->add_option("--solution", plot.solution_path, "Solution JSON")->required();
  plot_cmd->add_option("--gt", plot.gt_path, "Optional ground-truth trajectory file");
  plot_cmd->add_option("--out", plot.out_path, "Output SVG path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    std::cerr << app.help() << "\n";
    return 1;
  }

  try {
    if (*simulate) return run_simulate(sim);
    if (*solve) return run_solve(sol);
    if (*eval_cmd) return run_eval(ev);
    if (*plot_cmd) return run_plot(plot);
  } catch (const semslam::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
