// SPDX-License-Identifier: Apache-2.0
//
// Command-line driver for the routing simulator: single experiments,
// batching x routing matrices, the exhaustive two-instance partition
// study, RL training/evaluation, and profile calibration.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "routesim/experiment.hpp"

namespace fs = std::filesystem;
using namespace routesim;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

int cmd_run(const std::string& config_path, std::optional<std::uint64_t> seed,
            std::optional<std::string> out_dir) {
  auto cfg = ExperimentConfig::from_file(config_path);
  if (seed) cfg.seed = *seed;
  if (out_dir) cfg.output_dir = *out_dir;
  auto out = run_experiment(cfg);
  emit_report(out.report, out.trajectory, cfg.output_dir);
  std::cout << "completed " << out.report.completed << " requests; makespan "
            << format_double(out.report.makespan_s) << " s; mean E2E "
            << format_double(out.report.e2e.mean) << " s\n"
            << "report written to " << cfg.output_dir << "\n";
  return 0;
}

int cmd_matrix(const std::string& config_path,
               std::optional<std::uint64_t> seed,
               std::optional<std::string> out_dir) {
  auto cfg = ExperimentConfig::from_file(config_path);
  if (seed) cfg.seed = *seed;
  if (out_dir) cfg.output_dir = *out_dir;
  auto cells = run_matrix(cfg);
  std::ostringstream csv;
  csv << "batching,routing,makespan_s,total_e2e_s,mean_e2e_s,p99_e2e_s,"
         "mean_ttft_s,mean_tbt_s,preemptions\n";
  for (const auto& c : cells) {
    csv << c.batching << ',' << c.routing << ','
        << format_double(c.report.makespan_s) << ','
        << format_double(c.report.total_e2e_s) << ','
        << format_double(c.report.e2e.mean) << ','
        << format_double(c.report.e2e.p99) << ','
        << format_double(c.report.ttft.mean) << ','
        << format_double(c.report.tbt.mean) << ','
        << c.report.total_preemptions << '\n';
  }
  write_text(fs::path(cfg.output_dir) / "matrix.csv", csv.str());
  std::cout << csv.str();
  std::cout << "matrix written to " << cfg.output_dir << "/matrix.csv\n";
  return 0;
}

int cmd_partition(const std::string& config_path,
                  std::optional<std::uint64_t> seed,
                  std::optional<std::string> out_dir) {
  auto cfg = ExperimentConfig::from_file(config_path);
  if (seed) cfg.seed = *seed;
  if (out_dir) cfg.output_dir = *out_dir;
  auto requests = partition_requests(cfg.partition, cfg.seed);
  auto study = brute_force_partition(requests, cfg.profile, cfg.instance);

  std::ostringstream csv;
  csv << "mask,total_e2e_s,makespan_s\n";
  for (const auto& a : study.assignments) {
    csv << a.mask << ',' << format_double(a.total_e2e_s) << ','
        << format_double(a.makespan_s) << '\n';
  }
  write_text(fs::path(cfg.output_dir) / "partition.csv", csv.str());

  nlohmann::ordered_json j;
  j["n_requests"] = cfg.partition.n_requests;
  j["assignments"] = study.assignments.size();
  j["best_total_e2e_s"] = study.best_total_e2e;
  j["worst_total_e2e_s"] = study.worst_total_e2e;
  j["mean_total_e2e_s"] = study.mean_total_e2e;
  j["best_mask"] = study.best_mask;
  j["mean_over_best"] = study.mean_total_e2e / study.best_total_e2e;
  write_text(fs::path(cfg.output_dir) / "partition_summary.json",
             j.dump(2) + "\n");
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, std::optional<int> episodes,
              std::optional<std::uint64_t> seed,
              std::optional<std::string> out_dir) {
  auto cfg = ExperimentConfig::from_file(config_path);
  if (episodes) cfg.train.episodes = *episodes;
  if (seed) cfg.seed = *seed;
  if (out_dir) cfg.output_dir = *out_dir;
  auto [agent, stats] = train_from_config(cfg, cfg.reward.shaping);

  fs::create_directories(cfg.output_dir);
  auto agent_path = (fs::path(cfg.output_dir) / "agent.bin").string();
  agent.save(agent_path);

  std::ostringstream csv;
  csv << "episode,cumulative_reward,mean_e2e_s,makespan_s,epsilon,"
         "shaping_c,discount,mean_loss,transitions,finished\n";
  for (const auto& ep : stats) {
    csv << ep.episode << ',' << format_double(ep.cumulative_reward) << ','
        << format_double(ep.mean_e2e) << ',' << format_double(ep.makespan)
        << ',' << format_double(ep.epsilon) << ','
        << format_double(ep.shaping_c) << ',' << format_double(ep.discount)
        << ',' << format_double(ep.mean_loss) << ',' << ep.transitions << ','
        << (ep.finished ? 1 : 0) << '\n';
  }
  write_text(fs::path(cfg.output_dir) / "training_stats.csv", csv.str());
  std::cout << "trained " << stats.size() << " episodes ("
            << to_string(cfg.reward.shaping) << " shaping); agent saved to "
            << agent_path << "\n";
  return 0;
}

int cmd_evaluate(const std::string& config_path, const std::string& agent_path,
                 std::vector<std::string> policies,
                 std::vector<std::uint64_t> seeds,
                 std::optional<std::string> out_dir) {
  auto cfg = ExperimentConfig::from_file(config_path);
  if (out_dir) cfg.output_dir = *out_dir;
  if (seeds.empty()) seeds = cfg.train.eval_seeds;
  if (policies.empty()) {
    policies = {"round_robin", "jsq", "max_capacity", "min_min",
                "decode_balancer"};
  }

  std::vector<EvaluationRow> rows;
  if (!agent_path.empty()) {
    DqnAgent agent = DqnAgent::load(agent_path);
    rows.push_back(evaluate_policy(cfg, "rl", seeds, &agent));
  }
  for (const auto& p : policies) {
    rows.push_back(evaluate_policy(cfg, p, seeds));
  }

  std::ostringstream csv;
  csv << "policy,mean_e2e_s,mean_makespan_s,mean_ttft_s\n";
  for (const auto& r : rows) {
    csv << r.policy << ',' << format_double(r.mean_e2e) << ','
        << format_double(r.mean_makespan) << ',' << format_double(r.mean_ttft)
        << '\n';
  }
  write_text(fs::path(cfg.output_dir) / "evaluation.csv", csv.str());
  std::cout << csv.str();
  return 0;
}

int cmd_calibrate(const std::string& input,
                  std::optional<std::string> out_file) {
  auto profile = calibrate_profile(input);
  auto j = profile_to_json(profile);
  if (out_file) {
    write_text(*out_file, j.dump(2) + "\n");
    std::cout << "profile written to " << *out_file << "\n";
  } else {
    std::cout << j.dump(2) << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LLM serving cluster simulator with pluggable request routing"};
  app.require_subcommand(1);

  std::string config_path;
  std::string input_path;
  std::string agent_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<std::string> out_file;
  std::optional<int> episodes;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> policies;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "experiment config (JSON)")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "override the config seed");
    sub->add_option("--out", out_dir, "override the output directory");
  };

  auto* run = app.add_subcommand("run", "run one configured experiment");
  add_common(run);

  auto* matrix =
      app.add_subcommand("matrix", "run the batching x routing grid");
  add_common(matrix);

  auto* partition = app.add_subcommand(
      "partition", "exhaustive two-instance assignment study");
  add_common(partition);

  auto* train = app.add_subcommand("train", "train the routing agent");
  add_common(train);
  train->add_option("--episodes", episodes, "override train.episodes");

  auto* evaluate = app.add_subcommand(
      "evaluate", "compare a frozen agent against heuristics");
  add_common(evaluate);
  evaluate->add_option("--agent", agent_path, "agent checkpoint path")
      ->check(CLI::ExistingFile);
  evaluate->add_option("--seeds", seeds, "evaluation seeds");
  evaluate->add_option("--policies", policies, "heuristics to compare");

  auto* calibrate = app.add_subcommand(
      "calibrate", "fit profile slopes from a measured-latency CSV");
  calibrate->add_option("--input", input_path, "CSV: phase,tokens,seconds")
      ->required()
      ->check(CLI::ExistingFile);
  calibrate->add_option("--out", out_file, "write the profile JSON here");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(config_path, seed, out_dir);
    if (matrix->parsed()) return cmd_matrix(config_path, seed, out_dir);
    if (partition->parsed()) return cmd_partition(config_path, seed, out_dir);
    if (train->parsed()) return cmd_train(config_path, episodes, seed, out_dir);
    if (evaluate->parsed()) {
      return cmd_evaluate(config_path, agent_path, policies, seeds, out_dir);
    }
    if (calibrate->parsed()) return cmd_calibrate(input_path, out_file);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
