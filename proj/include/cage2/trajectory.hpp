#pragma once

// Line-delimited JSON trajectory dumps. One record per step t:
//   {"t":1,"state":"<digest of S_t>","defender":"Idle","attacker":"Discover(1)",
//    "observation":"HHHHHHHHHHH","reward":0.0}
// where the observation is O_{t+1} (produced by the step) and reward is R_t.

#include "cage2/dynamics.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace cage2 {

struct TraceStep {
  std::size_t t = 0;
  State state;
  DefenderAction defender;
  AttackerAction attacker;
  Observation observation;
  double reward = 0.0;
};

class TraceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::string trace_line(const Scenario& s, const TraceStep& step) {
  nlohmann::ordered_json j;
  j["t"] = step.t;
  j["state"] = state_digest(step.state);
  j["defender"] = to_string(s, step.defender);
  j["attacker"] = to_string(s, step.attacker);
  j["observation"] = observation_string(step.observation);
  j["reward"] = step.reward;
  return j.dump();
}

inline void write_trace(std::ostream& out, const Scenario& s, const std::vector<TraceStep>& steps) {
  for (const TraceStep& step : steps) out << trace_line(s, step) << '\n';
}

inline TraceStep parse_trace_line(const Scenario& s, const std::string& line, std::size_t line_number = 0) {
  const std::string where = "trace line " + std::to_string(line_number);
  try {
    auto j = nlohmann::ordered_json::parse(line);
    TraceStep step;
    step.t = j.at("t").get<std::size_t>();
    step.state = parse_state_digest(j.at("state").get<std::string>());
    step.defender = parse_defender_action(s, j.at("defender").get<std::string>());
    step.attacker = parse_attacker_action(s, j.at("attacker").get<std::string>());
    for (char c : j.at("observation").get<std::string>()) step.observation.push_back(observation_from_letter(c));
    step.reward = j.at("reward").get<double>();
    if (step.state.size() != s.host_count() || step.observation.size() != s.host_count())
      throw TraceError(where + ": host count does not match the scenario");
    return step;
  } catch (const TraceError&) {
    throw;
  } catch (const std::exception& e) {
    throw TraceError(where + ": " + e.what());
  }
}

inline std::vector<TraceStep> read_trace(std::istream& in, const Scenario& s) {
  std::vector<TraceStep> steps;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    steps.push_back(parse_trace_line(s, line, number));
  }
  if (steps.empty()) throw TraceError("trace is empty");
  return steps;
}

inline double trace_total_reward(const std::vector<TraceStep>& steps) {
  double total = 0.0;
  for (const TraceStep& st : steps) total += st.reward;
  return total;
}

// Human-readable table, one row per step, followed by the cumulative reward.
inline std::string render_trace(const Scenario& s, const std::vector<TraceStep>& steps) {
  std::ostringstream out;
  char buf[512];
  std::snprintf(buf, sizeof buf, "%4s  %-24s  %-30s  %-*s  %9s  %s\n", "t", "defender", "attacker",
                int(s.host_count()), "obs", "reward", "access");
  out << buf;
  for (const TraceStep& st : steps) {
    std::string access;
    for (const HostState& h : st.state.hosts) access.push_back(letter(h.access));
    std::snprintf(buf, sizeof buf, "%4zu  %-24s  %-30s  %-*s  %9.3f  %s\n", st.t, to_string(s, st.defender).c_str(),
                  to_string(s, st.attacker).c_str(), int(s.host_count()), observation_string(st.observation).c_str(),
                  st.reward, access.c_str());
    out << buf;
  }
  std::snprintf(buf, sizeof buf, "cumulative reward: %.6f over %zu steps\n", trace_total_reward(steps), steps.size());
  out << buf;
  return out.str();
}

}  // namespace cage2
