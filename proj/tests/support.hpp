#pragma once

// Helpers shared by the unit tests and the acceptance binary.

#include "cage2/harness.hpp"

#include <cmath>
#include <fstream>
#include <string>
#include <vector>

namespace cage2::testing {

inline HostIndex H(const std::string& name) { return default_scenario().host_index(name); }
inline ServiceIndex E(const std::string& name) { return default_scenario().service_index(name); }

// The committed B-LINE vs always-Idle trace (detection probability 1, T=30).
inline std::vector<TraceStep> load_hand_trace() {
  std::ifstream in(std::string(CAGE2_FIXTURE_DIR) + "/bline_idle_t30.jsonl");
  return read_trace(in, default_scenario());
}

inline std::vector<TraceStep> simulate_bline_idle(std::size_t horizon, std::uint64_t seed) {
  Environment env = Environment::defaults(default_scenario());
  env.observation.detection_probability = 1.0;
  IdleDefender idle;
  Rng env_rng = derive_rng({seed, kEnvStream});
  Rng agent_rng = derive_rng({seed, kAgentStream});
  std::vector<TraceStep> trace;
  run_episode(env, idle, AttackerStrategyId::BLine, horizon, env_rng, agent_rng, nullptr, &trace);
  return trace;
}

// Empty string when equal, otherwise a description of the first difference.
inline std::string compare_traces(const std::vector<TraceStep>& expected, const std::vector<TraceStep>& got) {
  const Scenario& s = default_scenario();
  if (expected.size() != got.size())
    return "length " + std::to_string(got.size()) + " != " + std::to_string(expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) {
    const TraceStep& a = expected[i];
    const TraceStep& b = got[i];
    std::string at = "t=" + std::to_string(a.t) + ": ";
    if (a.t != b.t) return at + "step index differs";
    if (!(a.state == b.state)) return at + "state " + state_digest(b.state) + " != " + state_digest(a.state);
    if (!(a.defender == b.defender)) return at + "defender " + to_string(s, b.defender);
    if (!(a.attacker == b.attacker))
      return at + "attacker " + to_string(s, b.attacker) + " != " + to_string(s, a.attacker);
    if (a.observation != b.observation)
      return at + "observation " + observation_string(b.observation) + " != " + observation_string(a.observation);
    if (std::abs(a.reward - b.reward) > 1e-12)
      return at + "reward " + std::to_string(b.reward) + " != " + std::to_string(a.reward);
  }
  return {};
}

// Reward written out directly from the reward parameter table, sharing no
// code with the dynamics module.
inline double reference_reward(const State& st, const DefenderAction& d) {
  double r = d.type == DefenderActionType::Restore ? -1.0 : 0.0;
  for (std::size_t h = 0; h < st.size(); ++h) {
    const std::string& name = default_scenario().host(h).name;
    const char a = letter(st[h].access);
    const bool held = a == 'U' || a == 'R' || a == 'P' || a == 'I';
    if (held) {
      if (name.rfind("CLIENT", 0) == 0) r += -0.1;
      else r += -1.0;  // enterprise and operational subnets
    }
    if (a == 'I' && name == "OP-SERVER") r += -10.0;
  }
  return r;
}

inline State random_state(const Scenario& s, Rng& rng) {
  State st = initial_state(s);
  for (HostIndex h = 0; h < s.host_count(); ++h) {
    st[h].access = static_cast<AccessState>(uniform_index(rng, kAccessStateCount));
    for (ServiceIndex e = 0; e < s.service_count(); ++e)
      if (uniform01(rng) < 0.2) st[h].running.insert(e);
    if (st[h].access != AccessState::Hidden && st[h].access != AccessState::Known) st[h].scanned = st[h].running;
  }
  return st;
}

inline DefenderAction random_defender_action(const Scenario& s, Rng& rng) {
  return defender_action_from_index(s, uniform_index(rng, defender_action_count(s)));
}

inline AttackerAction random_attacker_action(const Scenario& s, Rng& rng) {
  const HostIndex h = uniform_index(rng, s.host_count());
  switch (uniform_index(rng, 5)) {
    case 0: return AttackerAction::discover(s.subnets()[uniform_index(rng, s.subnet_count())]);
    case 1: return AttackerAction::scan(h);
    case 2: return AttackerAction::exploit(uniform_index(rng, s.service_count()), h);
    case 3: return AttackerAction::escalate(h);
    default: return AttackerAction::interrupt(h);
  }
}

}  // namespace cage2::testing
