#pragma once

// Training, action selection, evaluation and run-directory outputs.

#include "cage2/adversary.hpp"
#include "cage2/belief.hpp"
#include "cage2/default_scenario.hpp"
#include "cage2/dynamics.hpp"
#include "cage2/policy.hpp"
#include "cage2/trajectory.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace cage2 {

// Everything an episode needs besides the two players.
struct Environment {
  Scenario scenario;
  RewardTable rewards;
  ObservationConfig observation;
  ExploitSelectionPolicy selection;

  static Environment defaults(Scenario s) {
    Environment env{std::move(s), {}, {}, {}};
    env.rewards = RewardTable::defaults(env.scenario);
    env.selection = ExploitSelectionPolicy::defaults(env.scenario);
    return env;
  }
};

// ---------------------------------------------------------------------------
// Config

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  std::size_t iterations = 400;
  std::size_t episodes = 100;
  std::size_t horizon = 100;
  AttackerDistribution attacker;
  std::string exploit_mode = "priority";
  std::vector<std::string> exploit_priority;  // empty: scenario service order
  std::size_t particles = 100;
  std::size_t eval_particles = 1000;
  std::size_t attempt_budget_factor = 100;
  double detection_probability = 0.95;
  PpoConfig ppo;
  std::vector<std::size_t> hidden{64, 64};
  std::vector<std::uint64_t> seeds{0, 108, 153, 701};
  std::string output_dir = "runs/default";
  unsigned threads = 1;
  bool particle_diagnostics = false;
  std::string scenario_path;           // empty: bundled default
  std::optional<nlohmann::json> rewards;  // overrides on top of the default table

  void validate() const {
    auto positive = [](std::size_t v, const char* name) {
      if (v == 0) throw ConfigError(std::string(name) + " must be positive");
    };
    positive(iterations, "iterations");
    positive(episodes, "episodes");
    positive(horizon, "horizon");
    positive(particles, "particles");
    positive(eval_particles, "eval_particles");
    positive(attempt_budget_factor, "attempt_budget_factor");
    positive(ppo.epochs, "ppo.epochs");
    positive(threads, "threads");
    if (seeds.empty()) throw ConfigError("seeds must not be empty");
    if (!attacker.valid()) throw ConfigError("attacker weights must be nonnegative and sum to 1");
    if (!(detection_probability >= 0.0 && detection_probability <= 1.0))
      throw ConfigError("detection_probability must lie in [0, 1]");
    if (exploit_mode != "priority" && exploit_mode != "uniform")
      throw ConfigError("exploit_selection.mode must be 'priority' or 'uniform'");
    if (!(ppo.learning_rate > 0.0) || !(ppo.clip > 0.0) || !(ppo.gamma > 0.0 && ppo.gamma <= 1.0))
      throw ConfigError("ppo: learning_rate and clip must be positive, gamma in (0, 1]");
    if (!(ppo.beta1 >= 0.0 && ppo.beta1 < 1.0) || !(ppo.beta2 >= 0.0 && ppo.beta2 < 1.0))
      throw ConfigError("ppo: betas must lie in [0, 1)");
    for (std::size_t h : hidden) positive(h, "hidden layer width");
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["iterations"] = iterations;
    j["episodes"] = episodes;
    j["horizon"] = horizon;
    j["attacker"] = {{"bline", attacker.bline}, {"meander", attacker.meander}};
    j["exploit_selection"] = {{"mode", exploit_mode}, {"priority", exploit_priority}};
    j["particles"] = particles;
    j["eval_particles"] = eval_particles;
    j["attempt_budget_factor"] = attempt_budget_factor;
    j["detection_probability"] = detection_probability;
    j["ppo"] = {{"learning_rate", ppo.learning_rate}, {"beta1", ppo.beta1},
                {"beta2", ppo.beta2},                 {"adam_epsilon", ppo.adam_epsilon},
                {"epochs", ppo.epochs},               {"clip", ppo.clip},
                {"gamma", ppo.gamma},                 {"value_coef", ppo.value_coef},
                {"entropy_coef", ppo.entropy_coef},   {"normalize_advantages", ppo.normalize_advantages}};
    j["hidden"] = hidden;
    j["seeds"] = seeds;
    j["output_dir"] = output_dir;
    j["threads"] = threads;
    j["particle_diagnostics"] = particle_diagnostics;
    if (!scenario_path.empty()) j["scenario"] = scenario_path;
    if (rewards) j["rewards"] = *rewards;
    return j;
  }

  static TrainConfig from_json(const nlohmann::json& j) {
    static const std::vector<std::string> known = {
        "iterations", "episodes", "horizon", "attacker", "exploit_selection", "particles", "eval_particles",
        "attempt_budget_factor", "detection_probability", "ppo", "hidden", "seeds", "output_dir", "threads",
        "particle_diagnostics", "scenario", "rewards"};
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it)
      if (std::find(known.begin(), known.end(), it.key()) == known.end())
        throw ConfigError("unknown config key '" + it.key() + "'");
    TrainConfig c;
    try {
      auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
      };
      get("iterations", c.iterations);
      get("episodes", c.episodes);
      get("horizon", c.horizon);
      if (j.contains("attacker")) {
        const auto& a = j.at("attacker");
        if (a.is_string()) {
          c.attacker = AttackerDistribution::point(parse_attacker_id(a.get<std::string>()));
        } else {
          c.attacker.bline = a.value("bline", 0.0);
          c.attacker.meander = a.value("meander", 0.0);
        }
      }
      if (j.contains("exploit_selection")) {
        const auto& e = j.at("exploit_selection");
        c.exploit_mode = e.value("mode", std::string("priority"));
        if (e.contains("priority")) c.exploit_priority = e.at("priority").get<std::vector<std::string>>();
      }
      get("particles", c.particles);
      get("eval_particles", c.eval_particles);
      get("attempt_budget_factor", c.attempt_budget_factor);
      get("detection_probability", c.detection_probability);
      if (j.contains("ppo")) {
        const auto& p = j.at("ppo");
        c.ppo.learning_rate = p.value("learning_rate", c.ppo.learning_rate);
        c.ppo.beta1 = p.value("beta1", c.ppo.beta1);
        c.ppo.beta2 = p.value("beta2", c.ppo.beta2);
        c.ppo.adam_epsilon = p.value("adam_epsilon", c.ppo.adam_epsilon);
        c.ppo.epochs = p.value("epochs", c.ppo.epochs);
        c.ppo.clip = p.value("clip", c.ppo.clip);
        c.ppo.gamma = p.value("gamma", c.ppo.gamma);
        c.ppo.value_coef = p.value("value_coef", c.ppo.value_coef);
        c.ppo.entropy_coef = p.value("entropy_coef", c.ppo.entropy_coef);
        c.ppo.normalize_advantages = p.value("normalize_advantages", c.ppo.normalize_advantages);
      }
      get("hidden", c.hidden);
      get("seeds", c.seeds);
      get("output_dir", c.output_dir);
      get("threads", c.threads);
      get("particle_diagnostics", c.particle_diagnostics);
      get("scenario", c.scenario_path);
      if (j.contains("rewards")) c.rewards = j.at("rewards");
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
    c.validate();
    return c;
  }

  static TrainConfig parse(const std::string& text) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    return from_json(j);
  }
};

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Applies {"action_cost": {"Restore": -1, ..}, "subnet_cost": {"1": -0.1, ..},
// "interruption_cost": {"OP-SERVER": -10, ..}} on top of the defaults.
inline RewardTable reward_table_from_json(const Scenario& s, const nlohmann::json& j) {
  RewardTable t = RewardTable::defaults(s);
  static const std::map<std::string, DefenderActionType> names = {
      {"Idle", DefenderActionType::Idle},
      {"Analyse", DefenderActionType::Analyse},
      {"Decoy", DefenderActionType::Decoy},
      {"Neutralise", DefenderActionType::Neutralise},
      {"Restore", DefenderActionType::Restore}};
  if (j.contains("action_cost"))
    for (auto& [k, v] : j.at("action_cost").items()) {
      auto it = names.find(k);
      if (it == names.end()) throw ConfigError("rewards.action_cost: unknown action '" + k + "'");
      t.action_cost[static_cast<std::size_t>(it->second)] = v.get<double>();
    }
  if (j.contains("subnet_cost"))
    for (auto& [k, v] : j.at("subnet_cost").items()) {
      SubnetId z = std::stoi(k);
      auto& subnets = s.subnets();
      if (std::find(subnets.begin(), subnets.end(), z) == subnets.end())
        throw ConfigError("rewards.subnet_cost: unknown subnet " + k);
      t.subnet_cost[s.subnet_position(z)] = v.get<double>();
    }
  if (j.contains("interruption_cost"))
    for (auto& [k, v] : j.at("interruption_cost").items()) {
      auto h = s.find_host(k);
      if (!h) throw ConfigError("rewards.interruption_cost: unknown host '" + k + "'");
      t.interruption_cost[*h] = v.get<double>();
    }
  if (!t.valid(s)) throw ConfigError("rewards: all costs must be nonpositive");
  return t;
}

// Builds the environment for a config. Relative scenario paths resolve
// against `base_dir` (the directory holding the config file).
inline Environment make_environment(const TrainConfig& cfg, const std::filesystem::path& base_dir = {}) {
  Scenario scenario = default_scenario();
  if (!cfg.scenario_path.empty()) {
    std::filesystem::path p = cfg.scenario_path;
    if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
    scenario = load_scenario(read_text_file(p.string()));
  }
  Environment env = Environment::defaults(std::move(scenario));
  env.observation.detection_probability = cfg.detection_probability;
  if (cfg.rewards) env.rewards = reward_table_from_json(env.scenario, *cfg.rewards);
  if (!cfg.exploit_priority.empty()) {
    env.selection.priority.clear();
    for (const std::string& name : cfg.exploit_priority) env.selection.priority.push_back(env.scenario.service_index(name));
    if (!env.selection.valid(env.scenario))
      throw ConfigError("exploit_selection.priority must list every service exactly once");
  }
  if (cfg.exploit_mode == "uniform") env.selection.mode = ExploitSelectionPolicy::Mode::Uniform;
  return env;
}

// ---------------------------------------------------------------------------
// Defenders. Each is reset with the true initial state at the start of an
// episode and then asked for one action per step given the latest observation.

struct DefenderChoice {
  DefenderAction action;
  std::size_t index = 0;
  double log_prob = 0.0;
  std::vector<double> features;  // encoding of the state the policy acted on
};

class IdleDefender {
 public:
  void reset(const Environment&, const State&, AttackerStrategyId) {}
  DefenderChoice choose(const Environment&, const Observation&, Rng&) { return {}; }
};

class RandomDefender {
 public:
  void reset(const Environment&, const State&, AttackerStrategyId) {}
  DefenderChoice choose(const Environment& env, const Observation&, Rng& rng) {
    const std::size_t n = defender_action_count(env.scenario);
    DefenderChoice c;
    c.index = uniform_index(rng, n);
    c.action = defender_action_from_index(env.scenario, c.index);
    c.log_prob = -std::log(double(n));
    return c;
  }
};

struct Selection {
  DefenderAction action;
  std::size_t action_index = 0;
  double log_prob = 0.0;
  ParticleSet<State> particles;
  State representative;
  std::optional<FilterDiagnostics> diagnostics;  // empty on the first step
};

// One decision of the belief-filtered policy. Without a previous action (the
// first step, where S_1 is known) the particle set is taken as is; otherwise
// it is filtered through d_prev and o. A representative state is then drawn
// uniformly from the particles and fed to the policy.
inline Selection select_action(const Environment& env, const AttackerStrategy& attacker,
                               const ParticleSet<State>& belief, const Observation& o,
                               const std::optional<DefenderAction>& d_prev, const PolicyParams& params,
                               const FilterLimits& limits, Rng& rng, bool greedy = false) {
  Selection out;
  if (d_prev) {
    const DefenderAction d = *d_prev;
    auto simulate = [&](const State& parent, Rng& sub) {
      StepResult r = step(env.scenario, parent, d, attacker, env.observation, env.rewards, sub);
      return std::pair<State, Observation>(std::move(r.state), std::move(r.observation));
    };
    auto filtered = particle_filter_update(belief, o, simulate, limits, rng);
    out.particles = std::move(filtered.particles);
    out.diagnostics = filtered.diagnostics;
  } else {
    out.particles = belief;
  }
  out.representative = representative_state(out.particles, rng);
  PolicyOutput po = forward(params, encode_state(env.scenario, out.representative));
  SampledAction a = greedy ? greedy_action(po.probabilities) : sample_action(po.probabilities, rng);
  out.action_index = a.index;
  out.log_prob = a.log_probability;
  out.action = defender_action_from_index(env.scenario, a.index);
  return out;
}

struct ParticleStepDiagnostics {
  std::size_t t = 0;
  double acceptance_rate = 1.0;
  std::size_t unique_particles = 0;
  bool deprived = false;
};

class PolicyDefender {
 public:
  PolicyDefender(const PolicyParams& params, FilterLimits limits, bool greedy = false)
      : params_(&params), limits_(limits), greedy_(greedy) {}

  void reset(const Environment& env, const State& initial, AttackerStrategyId id) {
    attacker_.emplace(env.scenario, id, env.selection);
    particles_ = ParticleSet<State>::known(initial, limits_.particle_count);
    previous_.reset();
    t_ = 0;
  }

  DefenderChoice choose(const Environment& env, const Observation& o, Rng& rng) {
    ++t_;
    Selection sel = select_action(env, *attacker_, particles_, o, previous_, *params_, limits_, rng, greedy_);
    if (sel.diagnostics) {
      attempts_ += sel.diagnostics->attempts;
      accepted_ += sel.diagnostics->accepted;
      deprivations_ += sel.diagnostics->deprived ? 1 : 0;
      if (record_steps_)
        steps_.push_back({t_, sel.diagnostics->acceptance_rate(), unique_particles(sel.particles, StateHash{}),
                          sel.diagnostics->deprived});
    }
    particles_ = std::move(sel.particles);
    previous_ = sel.action;
    DefenderChoice c;
    c.action = sel.action;
    c.index = sel.action_index;
    c.log_prob = sel.log_prob;
    c.features = encode_state(env.scenario, sel.representative);
    return c;
  }

  void record_steps(bool on) { record_steps_ = on; }
  const std::vector<ParticleStepDiagnostics>& step_diagnostics() const { return steps_; }
  std::size_t attempts() const { return attempts_; }
  std::size_t accepted() const { return accepted_; }
  std::size_t deprivations() const { return deprivations_; }
  const ParticleSet<State>& particles() const { return particles_; }

 private:
  const PolicyParams* params_;
  FilterLimits limits_;
  bool greedy_;
  std::optional<AttackerStrategy> attacker_;
  ParticleSet<State> particles_;
  std::optional<DefenderAction> previous_;
  std::size_t t_ = 0;
  std::size_t attempts_ = 0, accepted_ = 0, deprivations_ = 0;
  bool record_steps_ = false;
  std::vector<ParticleStepDiagnostics> steps_;
};

// ---------------------------------------------------------------------------
// Episodes

// Plays one episode of `horizon` steps and returns the undiscounted
// cumulative reward. `env_rng` drives the attacker and observation noise,
// `agent_rng` the defender (filter, representative draw, action sampling).
template <typename Defender>
double run_episode(const Environment& env, Defender& defender, AttackerStrategyId attacker_id, std::size_t horizon,
                   Rng& env_rng, Rng& agent_rng, TrajectoryBuffer* buffer = nullptr,
                   std::vector<TraceStep>* trace = nullptr) {
  const Scenario& s = env.scenario;
  const AttackerStrategy attacker(s, attacker_id, env.selection);
  State st = initial_state(s);
  Observation o = initial_observation(s);
  defender.reset(env, st, attacker_id);
  double total = 0.0;
  for (std::size_t t = 1; t <= horizon; ++t) {
    DefenderChoice c = defender.choose(env, o, agent_rng);
    StepResult r = step(s, st, c.action, attacker, env.observation, env.rewards, env_rng);
    total += r.reward;
    if (buffer) buffer->push(c.features, c.index, c.log_prob, r.reward, t == horizon);
    if (trace) trace->push_back({t, st, c.action, r.attacker_action, r.observation, r.reward});
    st = std::move(r.state);
    o = std::move(r.observation);
  }
  return total;
}

struct Summary {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation (n - 1); 0 for a single value
  std::size_t n = 0;
};

inline Summary summarize(const std::vector<double>& xs) {
  Summary out;
  out.n = xs.size();
  if (xs.empty()) return out;
  for (double x : xs) out.mean += x;
  out.mean /= double(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - out.mean) * (x - out.mean);
    out.std = std::sqrt(ss / double(xs.size() - 1));
  }
  return out;
}

// Runs `count` jobs, indexed 0..count-1, on up to `threads` workers.
inline void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& job) {
  if (threads <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) job(i);
    return;
  }
  std::vector<std::jthread> workers;
  std::vector<std::exception_ptr> errors(threads);
  for (unsigned w = 0; w < threads; ++w)
    workers.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < count; i += threads) job(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  workers.clear();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// Random stream roles under a (seed, iteration, episode) path.
enum StreamRole : std::uint64_t { kInitStream = 0x1417, kEnvStream = 1, kAgentStream = 2, kEvalStream = 0xe7a1 };

// ---------------------------------------------------------------------------
// Training

struct CurveRow {
  std::uint64_t seed = 0;
  std::size_t iteration = 0;
  double mean_reward = 0.0;
  double std_reward = 0.0;
  double particle_accept_rate = 1.0;
};

inline constexpr std::string_view kCurvesHeader = "seed,iteration,mean_reward,std_reward,particle_accept_rate";
inline constexpr std::string_view kEvalHeader = "checkpoint,attacker,horizon,episodes,seed,mean_reward,std_reward";

inline std::string format_curve_row(const CurveRow& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%llu,%zu,%.10g,%.10g,%.10g", static_cast<unsigned long long>(r.seed), r.iteration,
                r.mean_reward, r.std_reward, r.particle_accept_rate);
  return buf;
}

struct IterationResult {
  CurveRow row;
  TrajectoryBuffer buffer;
  std::vector<ParticleStepDiagnostics> diagnostics;  // per episode, concatenated
  std::vector<std::size_t> diagnostic_episode;
};

// Collects one iteration of rollouts with the current parameters.
inline IterationResult collect_iteration(const Environment& env, const TrainConfig& cfg, const PolicyParams& params,
                                         std::uint64_t seed, std::size_t iteration) {
  const std::size_t dim = encoded_dimension(env.scenario);
  std::vector<TrajectoryBuffer> buffers(cfg.episodes, TrajectoryBuffer(dim));
  std::vector<double> returns(cfg.episodes);
  std::vector<std::size_t> attempts(cfg.episodes), accepted(cfg.episodes);
  std::vector<std::vector<ParticleStepDiagnostics>> diag(cfg.episodes);
  FilterLimits limits{cfg.particles, cfg.attempt_budget_factor, 1};

  parallel_for(cfg.episodes, cfg.threads, [&](std::size_t e) {
    Rng env_rng = derive_rng({seed, iteration, e, kEnvStream});
    Rng agent_rng = derive_rng({seed, iteration, e, kAgentStream});
    AttackerStrategyId id = sample_attacker(cfg.attacker, env_rng);
    PolicyDefender defender(params, limits);
    defender.record_steps(cfg.particle_diagnostics);
    returns[e] = run_episode(env, defender, id, cfg.horizon, env_rng, agent_rng, &buffers[e]);
    attempts[e] = defender.attempts();
    accepted[e] = defender.accepted();
    diag[e] = defender.step_diagnostics();
  });

  IterationResult out;
  out.buffer = TrajectoryBuffer(dim);
  std::size_t total_attempts = 0, total_accepted = 0;
  for (std::size_t e = 0; e < cfg.episodes; ++e) {
    out.buffer.append(buffers[e]);
    total_attempts += attempts[e];
    total_accepted += accepted[e];
    for (auto& d : diag[e]) {
      out.diagnostics.push_back(d);
      out.diagnostic_episode.push_back(e);
    }
  }
  Summary s = summarize(returns);
  out.row = {seed, iteration, s.mean, s.std,
             total_attempts == 0 ? 1.0 : double(total_accepted) / double(total_attempts)};
  return out;
}

struct TrainResult {
  std::vector<CurveRow> curves;
  std::map<std::uint64_t, PolicyParams> params;
};

inline NetworkShape network_shape(const Scenario& s, const std::vector<std::size_t>& hidden) {
  return NetworkShape(encoded_dimension(s), defender_action_count(s), hidden);
}

class TrainingAborted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Trains one policy per seed. When `run_dir` is non-empty the run directory
// receives curves.csv, checkpoint-<seed> and config-snapshot; `append_curves`
// keeps rows already in curves.csv (used for per-seed invocations).
inline TrainResult train(const Environment& env, const TrainConfig& cfg, const std::filesystem::path& run_dir = {},
                         bool append_curves = false, const std::function<void(const CurveRow&)>& progress = {}) {
  cfg.validate();
  const std::uint64_t fingerprint = scenario_fingerprint(env.scenario);
  std::ofstream curves, particle_log;
  if (!run_dir.empty()) {
    std::filesystem::create_directories(run_dir);
    const auto curves_path = run_dir / "curves.csv";
    const bool fresh = !append_curves || !std::filesystem::exists(curves_path) ||
                       std::filesystem::file_size(curves_path) == 0;
    curves.open(curves_path, fresh ? std::ios::binary | std::ios::trunc : std::ios::binary | std::ios::app);
    if (!curves) throw std::runtime_error("cannot write " + curves_path.string());
    if (fresh) curves << kCurvesHeader << '\n';
    nlohmann::ordered_json snap = cfg.to_json();
    snap["scenario_fingerprint"] = [&] {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fingerprint));
      return std::string(buf);
    }();
    std::ofstream(run_dir / "config-snapshot", std::ios::binary) << snap.dump(2) << '\n';
    if (cfg.particle_diagnostics) {
      particle_log.open(run_dir / "particles.csv", std::ios::binary | std::ios::trunc);
      particle_log << "seed,iteration,episode,t,acceptance_rate,unique_particles,deprived\n";
    }
  }

  TrainResult result;
  const NetworkShape shape = network_shape(env.scenario, cfg.hidden);
  for (std::uint64_t seed : cfg.seeds) {
    Rng init = derive_rng({seed, kInitStream});
    PolicyParams params = PolicyParams::initialize(shape, init);
    OptimizerState opt = OptimizerState::for_params(params);
    for (std::size_t it = 1; it <= cfg.iterations; ++it) {
      IterationResult ir = collect_iteration(env, cfg, params, seed, it);
      if (curves) {
        curves << format_curve_row(ir.row) << '\n';
        curves.flush();
      }
      if (particle_log) {
        char buf[160];
        for (std::size_t i = 0; i < ir.diagnostics.size(); ++i) {
          const auto& d = ir.diagnostics[i];
          std::snprintf(buf, sizeof buf, "%llu,%zu,%zu,%zu,%.10g,%zu,%d\n", static_cast<unsigned long long>(seed), it,
                        ir.diagnostic_episode[i], d.t, d.acceptance_rate, d.unique_particles, d.deprived ? 1 : 0);
          particle_log << buf;
        }
      }
      result.curves.push_back(ir.row);
      if (progress) progress(ir.row);
      try {
        ppo_update(params, opt, ir.buffer, cfg.ppo);
      } catch (const NonFiniteLoss& e) {
        // ppo_update left the parameters untouched; keep them on disk.
        if (!run_dir.empty()) save_checkpoint((run_dir / ("checkpoint-" + std::to_string(seed))).string(), params, fingerprint);
        throw TrainingAborted("seed " + std::to_string(seed) + ", iteration " + std::to_string(it) + ": " + e.what());
      }
    }
    if (!run_dir.empty()) save_checkpoint((run_dir / ("checkpoint-" + std::to_string(seed))).string(), params, fingerprint);
    result.params.emplace(seed, std::move(params));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Evaluation

struct EvalReport {
  AttackerStrategyId attacker = AttackerStrategyId::BLine;
  std::size_t horizon = 0;
  std::size_t episodes = 0;
  std::uint64_t seed = 0;
  double mean = 0.0;
  double std = 0.0;
  std::vector<double> returns;
};

class FingerprintMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Undiscounted cumulative reward over `episodes` episodes. `make_defender`
// builds a fresh defender per episode.
template <typename MakeDefender>
EvalReport evaluate_defender(const Environment& env, MakeDefender&& make_defender, AttackerStrategyId attacker,
                             std::size_t horizon, std::size_t episodes, std::uint64_t seed, unsigned threads = 1) {
  if (horizon == 0 || episodes == 0) throw std::invalid_argument("evaluate: horizon and episodes must be positive");
  EvalReport rep;
  rep.attacker = attacker;
  rep.horizon = horizon;
  rep.episodes = episodes;
  rep.seed = seed;
  rep.returns.resize(episodes);
  parallel_for(episodes, threads, [&](std::size_t e) {
    Rng env_rng = derive_rng({seed, kEvalStream, e, kEnvStream});
    Rng agent_rng = derive_rng({seed, kEvalStream, e, kAgentStream});
    auto defender = make_defender();
    rep.returns[e] = run_episode(env, defender, attacker, horizon, env_rng, agent_rng);
  });
  Summary s = summarize(rep.returns);
  rep.mean = s.mean;
  rep.std = s.std;
  return rep;
}

struct EvalOptions {
  std::size_t particles = 1000;
  std::size_t attempt_budget_factor = 100;
  bool greedy = false;
  unsigned threads = 1;
};

inline EvalReport evaluate(const Environment& env, const Checkpoint& cp, AttackerStrategyId attacker,
                           std::size_t horizon, std::size_t episodes, std::uint64_t seed, const EvalOptions& opt = {}) {
  if (cp.fingerprint != scenario_fingerprint(env.scenario))
    throw FingerprintMismatch("checkpoint was trained on a different scenario (fingerprint mismatch)");
  if (!(cp.params.shape == network_shape(env.scenario, cp.params.shape.hidden())))
    throw FingerprintMismatch("checkpoint dimensions do not match the scenario");
  FilterLimits limits{opt.particles, opt.attempt_budget_factor, 1};
  return evaluate_defender(
      env, [&] { return PolicyDefender(cp.params, limits, opt.greedy); }, attacker, horizon, episodes, seed,
      opt.threads);
}

inline std::string format_eval_row(const std::string& label, const EvalReport& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%s,%s,%zu,%zu,%llu,%.10g,%.10g", label.c_str(), to_string(r.attacker).c_str(),
                r.horizon, r.episodes, static_cast<unsigned long long>(r.seed), r.mean, r.std);
  return buf;
}

// Appends a row to <dir>/eval.csv, writing the header for a new file.
inline void append_eval_csv(const std::filesystem::path& dir, const std::string& label, const EvalReport& r) {
  std::filesystem::create_directories(dir);
  const auto path = dir / "eval.csv";
  const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  if (fresh) out << kEvalHeader << '\n';
  out << format_eval_row(label, r) << '\n';
}

}  // namespace cage2
