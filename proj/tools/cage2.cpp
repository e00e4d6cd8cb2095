// Command-line front end: train, evaluate, replay, simulate, scenario validate.

#include "cage2/harness.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace cage2;

namespace {

Scenario scenario_or_default(const std::string& path) {
  if (path.empty()) return default_scenario();
  return load_scenario(read_text_file(path));
}

Environment environment_for(const std::string& scenario_path, double detection) {
  Environment env = Environment::defaults(scenario_or_default(scenario_path));
  env.observation.detection_probability = detection;
  return env;
}

int run_train(const std::string& config_path, std::optional<std::uint64_t> seed, const std::string& out_override,
              std::optional<unsigned> threads) {
  TrainConfig cfg = TrainConfig::parse(read_text_file(config_path));
  if (seed) cfg.seeds = {*seed};
  if (!out_override.empty()) cfg.output_dir = out_override;
  if (threads) cfg.threads = *threads;
  cfg.validate();
  Environment env = make_environment(cfg, fs::path(config_path).parent_path());
  std::fprintf(stderr, "training %zu seed(s): %zu iterations x %zu episodes, T=%zu, M=%zu -> %s\n", cfg.seeds.size(),
               cfg.iterations, cfg.episodes, cfg.horizon, cfg.particles, cfg.output_dir.c_str());
  train(env, cfg, cfg.output_dir, seed.has_value(), [](const CurveRow& r) {
    std::fprintf(stderr, "seed %llu iter %zu: mean %.3f std %.3f accept %.3f\n",
                 static_cast<unsigned long long>(r.seed), r.iteration, r.mean_reward, r.std_reward,
                 r.particle_accept_rate);
  });
  return 0;
}

struct EvalArgs {
  std::string checkpoint;
  std::string baseline;
  std::string attacker = "bline";
  std::size_t horizon = 100;
  std::size_t episodes = 100;
  std::uint64_t seed = 0;
  std::string scenario;
  double detection = 0.95;
  std::size_t particles = 1000;
  std::size_t budget = 100;
  bool greedy = false;
  unsigned threads = 1;
  std::string out_dir;
};

int run_evaluate(const EvalArgs& a) {
  Environment env = environment_for(a.scenario, a.detection);
  AttackerStrategyId id = parse_attacker_id(a.attacker);
  EvalReport rep;
  std::string label;
  fs::path dir;
  if (!a.baseline.empty()) {
    label = a.baseline;
    if (a.baseline == "idle")
      rep = evaluate_defender(env, [] { return IdleDefender{}; }, id, a.horizon, a.episodes, a.seed, a.threads);
    else if (a.baseline == "random")
      rep = evaluate_defender(env, [] { return RandomDefender{}; }, id, a.horizon, a.episodes, a.seed, a.threads);
    else
      throw std::invalid_argument("--baseline must be idle or random");
    dir = a.out_dir.empty() ? fs::path(".") : fs::path(a.out_dir);
  } else {
    Checkpoint cp = load_checkpoint(a.checkpoint);
    label = fs::path(a.checkpoint).filename().string();
    rep = evaluate(env, cp, id, a.horizon, a.episodes, a.seed,
                   EvalOptions{a.particles, a.budget, a.greedy, a.threads});
    dir = a.out_dir.empty() ? fs::path(a.checkpoint).parent_path() : fs::path(a.out_dir);
    if (dir.empty()) dir = ".";
  }
  append_eval_csv(dir, label, rep);
  std::printf("%s vs %s, T=%zu, %zu episodes: %.3f +- %.3f\n", label.c_str(), to_string(id).c_str(), rep.horizon,
              rep.episodes, rep.mean, rep.std);
  return 0;
}

struct SimArgs {
  std::string checkpoint;
  std::string defender = "idle";
  std::string attacker = "bline";
  std::size_t horizon = 30;
  std::uint64_t seed = 0;
  std::string scenario;
  double detection = 0.95;
  std::size_t particles = 1000;
  bool greedy = false;
  std::string out;
};

int run_simulate(const SimArgs& a) {
  Environment env = environment_for(a.scenario, a.detection);
  AttackerStrategyId id = parse_attacker_id(a.attacker);
  Rng env_rng = derive_rng({a.seed, kEnvStream});
  Rng agent_rng = derive_rng({a.seed, kAgentStream});
  std::vector<TraceStep> trace;
  if (!a.checkpoint.empty()) {
    Checkpoint cp = load_checkpoint(a.checkpoint);
    if (cp.fingerprint != scenario_fingerprint(env.scenario)) throw FingerprintMismatch("checkpoint fingerprint mismatch");
    PolicyDefender d(cp.params, FilterLimits{a.particles, 100, 1}, a.greedy);
    run_episode(env, d, id, a.horizon, env_rng, agent_rng, nullptr, &trace);
  } else if (a.defender == "idle") {
    IdleDefender d;
    run_episode(env, d, id, a.horizon, env_rng, agent_rng, nullptr, &trace);
  } else if (a.defender == "random") {
    RandomDefender d;
    run_episode(env, d, id, a.horizon, env_rng, agent_rng, nullptr, &trace);
  } else {
    throw std::invalid_argument("--defender must be idle or random (or pass --checkpoint)");
  }
  if (a.out.empty()) {
    write_trace(std::cout, env.scenario, trace);
  } else {
    std::ofstream out(a.out, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + a.out + "'");
    write_trace(out, env.scenario, trace);
  }
  return 0;
}

int run_replay(const std::string& path, const std::string& scenario_path) {
  Scenario s = scenario_or_default(scenario_path);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::cout << render_trace(s, read_trace(in, s));
  return 0;
}

int run_validate(const std::string& path) {
  Scenario s = load_scenario(read_text_file(path));
  std::printf("ok: %zu hosts, %zu services, %zu subnets, target %s, fingerprint %016llx\n", s.host_count(),
              s.service_count(), s.subnet_count(), s.target_host_name().c_str(),
              static_cast<unsigned long long>(scenario_fingerprint(s)));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CAGE-2 POMDP simulator and belief-filtered PPO defender"};
  app.require_subcommand(1);

  std::string config_path, train_out;
  std::optional<std::uint64_t> train_seed;
  std::optional<unsigned> train_threads;
  auto* train_cmd = app.add_subcommand("train", "train one policy per seed");
  train_cmd->add_option("--config", config_path, "JSON training config")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--seed", train_seed, "train only this seed");
  train_cmd->add_option("--out", train_out, "override the run directory");
  train_cmd->add_option("--threads", train_threads, "episode workers");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("evaluate", "evaluate a checkpoint or a baseline defender");
  auto* cp_opt = eval_cmd->add_option("--checkpoint", ev.checkpoint, "checkpoint file")->check(CLI::ExistingFile);
  auto* bl_opt = eval_cmd->add_option("--baseline", ev.baseline, "idle or random instead of a checkpoint")
                     ->check(CLI::IsMember({"idle", "random"}));
  cp_opt->excludes(bl_opt);
  eval_cmd->add_option("--attacker", ev.attacker)->check(CLI::IsMember({"bline", "meander"}));
  eval_cmd->add_option("--horizon", ev.horizon)->check(CLI::IsMember({30, 50, 100}));
  eval_cmd->add_option("--episodes", ev.episodes)->check(CLI::PositiveNumber);
  eval_cmd->add_option("--seed", ev.seed);
  eval_cmd->add_option("--scenario", ev.scenario, "scenario JSON (default: bundled)");
  eval_cmd->add_option("--detection", ev.detection, "IDS detection probability")->check(CLI::Range(0.0, 1.0));
  eval_cmd->add_option("--particles", ev.particles)->check(CLI::PositiveNumber);
  eval_cmd->add_option("--budget-factor", ev.budget)->check(CLI::PositiveNumber);
  eval_cmd->add_flag("--greedy", ev.greedy, "take the most probable action");
  eval_cmd->add_option("--threads", ev.threads)->check(CLI::PositiveNumber);
  eval_cmd->add_option("--out", ev.out_dir, "directory receiving eval.csv");

  std::string trace_path, replay_scenario;
  auto* replay_cmd = app.add_subcommand("replay", "render a trajectory dump");
  replay_cmd->add_option("trace", trace_path)->required();
  replay_cmd->add_option("--scenario", replay_scenario);

  SimArgs sim;
  auto* sim_cmd = app.add_subcommand("simulate", "play one episode and dump its trajectory");
  sim_cmd->add_option("--checkpoint", sim.checkpoint)->check(CLI::ExistingFile);
  sim_cmd->add_option("--defender", sim.defender)->check(CLI::IsMember({"idle", "random"}));
  sim_cmd->add_option("--attacker", sim.attacker)->check(CLI::IsMember({"bline", "meander"}));
  sim_cmd->add_option("--horizon", sim.horizon)->check(CLI::PositiveNumber);
  sim_cmd->add_option("--seed", sim.seed);
  sim_cmd->add_option("--scenario", sim.scenario);
  sim_cmd->add_option("--detection", sim.detection)->check(CLI::Range(0.0, 1.0));
  sim_cmd->add_option("--particles", sim.particles)->check(CLI::PositiveNumber);
  sim_cmd->add_flag("--greedy", sim.greedy);
  sim_cmd->add_option("--out", sim.out, "output file (default: stdout)");

  std::string scenario_file;
  auto* scenario_cmd = app.add_subcommand("scenario", "scenario utilities");
  scenario_cmd->require_subcommand(1);
  auto* validate_cmd = scenario_cmd->add_subcommand("validate", "check a scenario config");
  validate_cmd->add_option("file", scenario_file)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) return run_train(config_path, train_seed, train_out, train_threads);
    if (*eval_cmd) {
      if (ev.checkpoint.empty() && ev.baseline.empty()) throw std::invalid_argument("evaluate needs --checkpoint or --baseline");
      return run_evaluate(ev);
    }
    if (*replay_cmd) return run_replay(trace_path, replay_scenario);
    if (*sim_cmd) return run_simulate(sim);
    if (*validate_cmd) return run_validate(scenario_file);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
