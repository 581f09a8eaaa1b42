#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "ddamaze/checkpoint.hpp"
#include "ddamaze/dqn.hpp"
#include "ddamaze/experiment.hpp"
#include "ddamaze/render.hpp"
#include "ddamaze/service.hpp"

using namespace ddamaze;

namespace {

HttpServer* g_server = nullptr;

void handle_signal(int) {
  if (g_server) g_server->stop();
}

std::string default_metrics_path(const std::string& ckpt) {
  const auto dot = ckpt.rfind(".json");
  const std::string stem = dot == std::string::npos ? ckpt : ckpt.substr(0, dot);
  return stem + ".metrics.csv";
}

std::vector<int> parse_actions(const std::string& text, int room_count) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    if (item == "end" || item == "E") {
      out.push_back(room_count);
    } else {
      out.push_back(std::stoi(item));
    }
  }
  return out;
}

int cmd_pretrain(const std::string& grid_path, const std::string& profile_name, int episodes, std::uint64_t seed,
                 const std::string& out, std::string metrics_path, int eval_mazes, bool baseline, bool quiet) {
  auto grid = std::make_shared<const RoomGrid>(load_grid(grid_path));
  const PlayerProfile profile = load_profile(profile_name);
  TrainConfig config;
  config.seed = seed;
  config.pretrain_episodes = episodes;
  config.network = shape_for(*grid);
  config.validate();
  if (metrics_path.empty()) metrics_path = default_metrics_path(out);

  double window = 0.0;
  int window_n = 0;
  auto progress = [&](const EpisodeMetrics& m) {
    window += m.abs_error;
    ++window_n;
    if (!quiet && (m.episode + 1) % 1000 == 0) {
      std::fprintf(stderr, "episode %d  mean |rating - target| (last %d) %.3f  epsilon %.3f\n", m.episode + 1,
                   window_n, window / window_n, m.epsilon);
      window = 0.0;
      window_n = 0;
    }
  };
  PretrainResult result = pretrain(grid, profile, config, progress);
  save_agent(result.agent, out);
  write_metrics_csv(metrics_path, result.metrics);

  std::printf("checkpoint %s\nmetrics %s\n", out.c_str(), metrics_path.c_str());
  if (eval_mazes > 0) {
    const auto greedy = evaluate(result.agent, profile, eval_mazes, 0.0, seed + 1);
    std::printf("greedy mean |rating - %g| over %d mazes: %.3f\n", config.target_rating, eval_mazes,
                greedy.mean_abs_error);
    if (baseline) {
      const auto random = evaluate(result.agent, profile, eval_mazes, 1.0, seed + 1);
      std::printf("random mean |rating - %g| over %d mazes: %.3f\n", config.target_rating, eval_mazes,
                  random.mean_abs_error);
    }
  }
  return 0;
}

int cmd_evaluate(const std::string& ckpt, const std::string& profile_name, int mazes, double epsilon,
                 std::uint64_t seed) {
  Agent agent = load_agent(ckpt);
  const PlayerProfile profile = profile_name.empty() ? agent.sim_profile() : load_profile(profile_name);
  const auto result = evaluate(agent, profile, mazes, epsilon, seed);
  std::printf("profile %s  mazes %d  epsilon %g\n", profile.name.c_str(), mazes, epsilon);
  std::printf("mean |rating - %g| %.3f\nmean rating %.3f\nmean rooms connected %.3f\nmean room passes %.3f\n",
              agent.config().target_rating, result.mean_abs_error, result.mean_rating,
              result.mean_rooms_connected, result.mean_room_passes);
  return 0;
}

int cmd_experiment(const std::string& ckpt, const std::string& first, const std::string& second,
                   const ExperimentOptions& options, const std::string& json_out, const std::string& save_to) {
  Agent agent = load_agent(ckpt);
  if (!first.empty() && load_profile(first).name != agent.sim_profile().name) {
    std::fprintf(stderr, "error: checkpoint was pretrained on profile '%s', not '%s'\n",
                 agent.sim_profile().name.c_str(), first.c_str());
    return 1;
  }
  const auto report = run_experiment(agent, load_profile(second), options);
  std::fputs(experiment_to_text(report).c_str(), stdout);
  if (!json_out.empty()) write_file_atomic(json_out, experiment_to_json(report).dump(2) + "\n");
  if (!save_to.empty()) save_agent(agent, save_to);
  return 0;
}

int cmd_serve(ServiceConfig config) {
  std::string source;
  Agent base = load_base_agent(config, &source);
  std::fprintf(stderr, "base agent: %s\n", source.c_str());
  AdaptationService service(std::move(base), config);
  HttpServer server(service);
  const int port = server.bind(config.host, config.port);
  std::printf("listening on %s:%d\n", config.host.c_str(), port);
  std::fflush(stdout);
  g_server = &server;
  std::signal(SIGINT, handle_signal);
  std::signal(SIGTERM, handle_signal);
  server.run();
  g_server = nullptr;
  return 0;
}

int cmd_validate_grid(const std::string& path) {
  RoomGrid grid;
  try {
    grid = load_grid(path);
  } catch (const GridError& e) {
    std::printf("%s\n", e.what());
    return 1;
  }
  const auto report = validate_grid(grid);
  std::fputs(report.to_string().c_str(), stdout);
  return report.ok() ? 0 : 1;
}

int cmd_render(const std::string& path) {
  std::string text;
  if (path == "-") {
    std::ostringstream ss;
    ss << std::cin.rdbuf();
    text = ss.str();
  } else {
    text = read_file(path);
  }
  std::fputs(render_maze(maze_from_json(text)).c_str(), stdout);
  return 0;
}

int cmd_maze(const std::string& grid_path, const std::string& actions, const std::string& ckpt, double epsilon,
             std::uint64_t seed) {
  std::string json;
  if (!ckpt.empty()) {
    Agent agent = load_agent(ckpt);
    agent.rng().seed(splitmix64(seed));
    json = maze_to_json(agent.build_maze(epsilon).maze);
  } else {
    auto grid = std::make_shared<const RoomGrid>(load_grid(grid_path));
    json = maze_to_json(replay(grid, parse_actions(actions, grid->room_count())));
  }
  std::puts(json.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive exergame maze generation with deep Q-learning"};
  app.require_subcommand(1);

  auto* pretrain_cmd = app.add_subcommand("pretrain", "Pretrain an agent on a simulated player");
  std::string grid_path = "default", profile = "average", out, metrics;
  int episodes = TrainConfig{}.pretrain_episodes, eval_mazes = 100;
  std::uint64_t seed = 1;
  bool baseline = false, quiet = false;
  pretrain_cmd->add_option("--grid", grid_path, "Grid JSON file or 'default'");
  pretrain_cmd->add_option("--profile", profile, "novice, average, athlete or a profile JSON file");
  pretrain_cmd->add_option("--episodes", episodes, "Simulated episodes")->check(CLI::NonNegativeNumber);
  pretrain_cmd->add_option("--seed", seed, "Master seed");
  pretrain_cmd->add_option("--out", out, "Checkpoint path")->required();
  pretrain_cmd->add_option("--metrics", metrics, "Metrics CSV path (default: next to the checkpoint)");
  pretrain_cmd->add_option("--eval-mazes", eval_mazes, "Greedy evaluation mazes (0 skips)")
      ->check(CLI::NonNegativeNumber);
  pretrain_cmd->add_flag("--baseline", baseline, "Also evaluate the epsilon = 1 random policy");
  pretrain_cmd->add_flag("--quiet", quiet, "No progress output");

  auto* eval_cmd = app.add_subcommand("evaluate", "Rate mazes built by a checkpoint");
  std::string ckpt, eval_profile;
  int eval_n = 100;
  double eval_eps = 0.0;
  std::uint64_t eval_seed = 1;
  eval_cmd->add_option("--ckpt", ckpt, "Checkpoint path")->required();
  eval_cmd->add_option("--profile", eval_profile, "Rater profile (default: the checkpoint's)");
  eval_cmd->add_option("--mazes", eval_n, "Evaluation mazes")->check(CLI::PositiveNumber);
  eval_cmd->add_option("--epsilon", eval_eps, "Exploration rate")->check(CLI::Range(0.0, 1.0));
  eval_cmd->add_option("--seed", eval_seed, "Seed");

  auto* exp_cmd = app.add_subcommand("experiment", "Online adaptation to a simulated player");
  std::string exp_ckpt, first_profile, second_profile, exp_json, exp_save;
  ExperimentOptions exp_options;
  exp_cmd->add_option("--ckpt", exp_ckpt, "Pretrained checkpoint")->required();
  exp_cmd->add_option("--first-profile", first_profile, "Profile the checkpoint was pretrained on");
  exp_cmd->add_option("--second-profile", second_profile, "Profile of the player rating served mazes")
      ->required();
  exp_cmd->add_option("--ratings", exp_options.rounds, "Rounds")->check(CLI::PositiveNumber);
  exp_cmd->add_option("--seed", exp_options.seed, "Seed");
  exp_cmd->add_option("--epsilon", exp_options.epsilon, "Serving epsilon")->check(CLI::Range(0.0, 1.0));
  exp_cmd->add_option("--estimate-runs", exp_options.estimate_runs, "Walks per expected-difficulty estimate")
      ->check(CLI::PositiveNumber);
  exp_cmd->add_option("--json", exp_json, "Write the report as JSON");
  exp_cmd->add_option("--save", exp_save, "Save the adapted agent");

  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP adaptation service");
  std::string config_path, serve_ckpt, serve_dir, serve_profile, serve_host;
  int serve_port = -1;
  bool no_persist = false;
  serve_cmd->add_option("--config", config_path, "Service config JSON");
  serve_cmd->add_option("--ckpt", serve_ckpt, "Pretrained checkpoint");
  serve_cmd->add_option("--port", serve_port, "Port (0 picks a free one)")->check(CLI::Range(0, 65535));
  serve_cmd->add_option("--host", serve_host, "Bind address");
  serve_cmd->add_option("--checkpoint-dir", serve_dir, "Session checkpoint directory");
  serve_cmd->add_option("--profile", serve_profile, "Profile of the pretrained weights to look up");
  serve_cmd->add_flag("--no-persist", no_persist, "Keep sessions in memory only");

  auto* validate_cmd = app.add_subcommand("validate-grid", "Check a grid file");
  std::string validate_path;
  validate_cmd->add_option("grid", validate_path, "Grid JSON file or 'default'")->required();

  auto* render_cmd = app.add_subcommand("render", "Print a maze JSON file as text art");
  std::string render_path;
  render_cmd->add_option("maze", render_path, "Maze JSON file, or - for stdin")->required();

  auto* maze_cmd = app.add_subcommand("maze", "Print maze JSON from actions or a checkpoint");
  std::string maze_grid = "default", maze_actions, maze_ckpt;
  double maze_eps = 0.0;
  std::uint64_t maze_seed = 1;
  maze_cmd->add_option("--grid", maze_grid, "Grid JSON file or 'default'");
  maze_cmd->add_option("--actions", maze_actions, "Comma-separated room ids, 'end' for the end room");
  maze_cmd->add_option("--ckpt", maze_ckpt, "Build with this agent instead");
  maze_cmd->add_option("--epsilon", maze_eps, "Exploration rate with --ckpt")->check(CLI::Range(0.0, 1.0));
  maze_cmd->add_option("--seed", maze_seed, "Seed with --ckpt");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*pretrain_cmd) {
      return cmd_pretrain(grid_path, profile, episodes, seed, out, metrics, eval_mazes, baseline, quiet);
    }
    if (*eval_cmd) return cmd_evaluate(ckpt, eval_profile, eval_n, eval_eps, eval_seed);
    if (*exp_cmd) return cmd_experiment(exp_ckpt, first_profile, second_profile, exp_options, exp_json, exp_save);
    if (*serve_cmd) {
      ServiceConfig config = load_service_config(config_path);
      if (!serve_ckpt.empty()) config.checkpoint = serve_ckpt;
      if (serve_port >= 0) config.port = serve_port;
      if (!serve_host.empty()) config.host = serve_host;
      if (!serve_dir.empty()) config.checkpoint_dir = serve_dir;
      if (!serve_profile.empty()) config.profile = serve_profile;
      if (no_persist) config.persist = false;
      return cmd_serve(config);
    }
    if (*validate_cmd) return cmd_validate_grid(validate_path);
    if (*render_cmd) return cmd_render(render_path);
    if (*maze_cmd) return cmd_maze(maze_grid, maze_actions, maze_ckpt, maze_eps, maze_seed);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
