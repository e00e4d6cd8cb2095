#pragma once

// POMDP core: per-host state, defender/attacker actions, the two-phase
// transition, the IDS observation function and the defender reward.

#include "cage2/random.hpp"
#include "cage2/scenario.hpp"

#include <array>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace cage2 {

// Attacker access state I_{h,t}.
enum class AccessState : std::uint8_t {
  Hidden,       // H
  Known,        // K
  Scanned,      // S
  UserExploit,  // U
  RootExploit,  // R
  Privileged,   // P
  Interrupted,  // I
};
inline constexpr std::size_t kAccessStateCount = 7;

inline constexpr std::array<char, kAccessStateCount> kAccessLetters = {'H', 'K', 'S', 'U', 'R', 'P', 'I'};

inline char letter(AccessState a) { return kAccessLetters[static_cast<std::size_t>(a)]; }

inline AccessState access_state_from_letter(char c) {
  for (std::size_t i = 0; i < kAccessStateCount; ++i)
    if (kAccessLetters[i] == c) return static_cast<AccessState>(i);
  throw std::invalid_argument(std::string("unknown access state '") + c + "'");
}

// U, R, P or I: the states that count as compromised in the reward.
inline bool compromised(AccessState a) {
  return a == AccessState::UserExploit || a == AccessState::RootExploit ||
         a == AccessState::Privileged || a == AccessState::Interrupted;
}

struct HostState {
  AccessState access = AccessState::Hidden;
  ServiceSet running;
  ServiceSet scanned;
  friend bool operator==(const HostState&, const HostState&) = default;
};

struct State {
  std::vector<HostState> hosts;

  std::size_t size() const { return hosts.size(); }
  HostState& operator[](HostIndex h) { return hosts[h]; }
  const HostState& operator[](HostIndex h) const { return hosts[h]; }

  friend bool operator==(const State&, const State&) = default;
  friend auto operator<=>(const State& a, const State& b) {
    return std::lexicographical_compare_three_way(
        a.hosts.begin(), a.hosts.end(), b.hosts.begin(), b.hosts.end(),
        [](const HostState& x, const HostState& y) {
          if (auto c = x.access <=> y.access; c != 0) return c;
          if (auto c = x.running.bits() <=> y.running.bits(); c != 0) return c;
          return x.scanned.bits() <=> y.scanned.bits();
        });
  }
};

struct StateHash {
  std::size_t operator()(const State& s) const {
    std::uint64_t h = 0x9ae16a3b2f90404full;
    for (const HostState& hs : s.hosts) {
      std::uint64_t v = (static_cast<std::uint64_t>(hs.access) << 56) ^
                        (static_cast<std::uint64_t>(hs.running.bits()) << 24) ^ hs.scanned.bits();
      h = mix_seed(h, v);
    }
    return static_cast<std::size_t>(h);
  }
};

// ---------------------------------------------------------------------------
// Actions

enum class DefenderActionType : std::uint8_t { Idle, Analyse, Decoy, Neutralise, Restore };
inline constexpr std::size_t kDefenderActionTypeCount = 5;

struct DefenderAction {
  DefenderActionType type = DefenderActionType::Idle;
  HostIndex target = 0;
  ServiceIndex service = 0;  // Decoy only

  static DefenderAction idle() { return {}; }
  static DefenderAction analyse(HostIndex h) { return {DefenderActionType::Analyse, h, 0}; }
  static DefenderAction decoy(ServiceIndex e, HostIndex h) { return {DefenderActionType::Decoy, h, e}; }
  static DefenderAction neutralise(HostIndex h) { return {DefenderActionType::Neutralise, h, 0}; }
  static DefenderAction restore(HostIndex h) { return {DefenderActionType::Restore, h, 0}; }

  bool targets(HostIndex h) const { return type != DefenderActionType::Idle && target == h; }

  friend bool operator==(const DefenderAction& a, const DefenderAction& b) {
    if (a.type != b.type) return false;
    if (a.type == DefenderActionType::Idle) return true;
    if (a.target != b.target) return false;
    return a.type != DefenderActionType::Decoy || a.service == b.service;
  }
};

// Size of the defender action space: Idle plus {A, D_1..D_m, N, R} x H.
inline std::size_t defender_action_count(const Scenario& s) {
  return 1 + s.host_count() * (s.service_count() + 3);
}

// Index layout: 0 is Idle; then host-major blocks of (Analyse, Decoy_1..m,
// Neutralise, Restore).
inline DefenderAction defender_action_from_index(const Scenario& s, std::size_t index) {
  if (index >= defender_action_count(s)) throw std::out_of_range("defender action index out of range");
  if (index == 0) return DefenderAction::idle();
  const std::size_t block = s.service_count() + 3;
  const HostIndex h = (index - 1) / block;
  const std::size_t k = (index - 1) % block;
  if (k == 0) return DefenderAction::analyse(h);
  if (k <= s.service_count()) return DefenderAction::decoy(k - 1, h);
  if (k == s.service_count() + 1) return DefenderAction::neutralise(h);
  return DefenderAction::restore(h);
}

inline std::size_t defender_action_index(const Scenario& s, const DefenderAction& d) {
  const std::size_t block = s.service_count() + 3;
  const std::size_t base = 1 + d.target * block;
  switch (d.type) {
    case DefenderActionType::Idle: return 0;
    case DefenderActionType::Analyse: return base;
    case DefenderActionType::Decoy: return base + 1 + d.service;
    case DefenderActionType::Neutralise: return base + s.service_count() + 1;
    case DefenderActionType::Restore: return base + s.service_count() + 2;
  }
  return 0;
}

enum class AttackerActionType : std::uint8_t { Discover, Scan, Exploit, PrivilegeEscalate, Interrupt };

struct AttackerAction {
  AttackerActionType type = AttackerActionType::Discover;
  HostIndex target = 0;      // every type except Discover
  SubnetId subnet = 0;       // Discover only
  ServiceIndex service = 0;  // Exploit only

  static AttackerAction discover(SubnetId z) { return {AttackerActionType::Discover, 0, z, 0}; }
  static AttackerAction scan(HostIndex h) { return {AttackerActionType::Scan, h, 0, 0}; }
  static AttackerAction exploit(ServiceIndex e, HostIndex h) { return {AttackerActionType::Exploit, h, 0, e}; }
  static AttackerAction escalate(HostIndex h) { return {AttackerActionType::PrivilegeEscalate, h, 0, 0}; }
  static AttackerAction interrupt(HostIndex h) { return {AttackerActionType::Interrupt, h, 0, 0}; }

  bool targets(HostIndex h) const { return type != AttackerActionType::Discover && target == h; }

  friend bool operator==(const AttackerAction& a, const AttackerAction& b) {
    if (a.type != b.type) return false;
    if (a.type == AttackerActionType::Discover) return a.subnet == b.subnet;
    if (a.target != b.target) return false;
    return a.type != AttackerActionType::Exploit || a.service == b.service;
  }
};

// ---------------------------------------------------------------------------
// Observations

enum class HostObservation : std::uint8_t {
  Hidden,       // H: not scanned
  Scanned,      // S
  Compromised,  // C: IDS alarm
  Privileged,   // P
  Unmalwared,   // U: Neutralise was performed
  Nothing,      // N: no detected activity
};

inline constexpr std::array<char, 6> kObservationLetters = {'H', 'S', 'C', 'P', 'U', 'N'};

inline char letter(HostObservation o) { return kObservationLetters[static_cast<std::size_t>(o)]; }

inline HostObservation observation_from_letter(char c) {
  for (std::size_t i = 0; i < kObservationLetters.size(); ++i)
    if (kObservationLetters[i] == c) return static_cast<HostObservation>(i);
  throw std::invalid_argument(std::string("unknown observation '") + c + "'");
}

using Observation = std::vector<HostObservation>;

inline Observation initial_observation(const Scenario& s) {
  return Observation(s.host_count(), HostObservation::Hidden);
}

inline std::string observation_string(const Observation& o) {
  std::string out;
  for (HostObservation x : o) out.push_back(letter(x));
  return out;
}

struct ObservationConfig {
  // P[N_d = 1]: probability that the IDS raises an alarm on an exploit.
  double detection_probability = 0.95;
};

// ---------------------------------------------------------------------------
// Reward

struct RewardTable {
  std::array<double, kDefenderActionTypeCount> action_cost{};  // by DefenderActionType
  std::vector<double> subnet_cost;                             // by subnet position
  std::vector<double> interruption_cost;                       // by host

  // Restore -1, other actions 0; subnet 1 -0.1, subnets 2 and 3 -1 (any other
  // subnet id -1); -10 for interrupting the target host, 0 elsewhere.
  static RewardTable defaults(const Scenario& s) {
    RewardTable t;
    t.action_cost[static_cast<std::size_t>(DefenderActionType::Restore)] = -1.0;
    for (SubnetId z : s.subnets()) t.subnet_cost.push_back(z == 1 ? -0.1 : -1.0);
    t.interruption_cost.assign(s.host_count(), 0.0);
    t.interruption_cost[s.target_host()] = -10.0;
    return t;
  }

  bool valid(const Scenario& s) const {
    if (subnet_cost.size() != s.subnet_count() || interruption_cost.size() != s.host_count()) return false;
    for (double c : action_cost)
      if (!(c <= 0.0)) return false;
    for (double c : subnet_cost)
      if (!(c <= 0.0)) return false;
    for (double c : interruption_cost)
      if (!(c <= 0.0)) return false;
    return true;
  }
};

// ---------------------------------------------------------------------------
// Transitions

inline State initial_state(const Scenario& s) {
  State st;
  st.hosts.resize(s.host_count());
  for (HostIndex h = 0; h < s.host_count(); ++h)
    st.hosts[h] = HostState{AccessState::Hidden, s.provided(h), ServiceSet{}};
  return st;
}

// S_t -> S'_t. Scanned sets are never touched by the defender.
inline State apply_defender(const Scenario& s, State st, const DefenderAction& d) {
  if (d.type == DefenderActionType::Idle) return st;
  HostState& host = st[d.target];
  switch (d.type) {
    case DefenderActionType::Neutralise:
      if (host.access == AccessState::UserExploit) host.access = AccessState::Scanned;
      break;
    case DefenderActionType::Restore:
      if (compromised(host.access)) host.access = AccessState::Scanned;
      host.running = s.provided(d.target);
      break;
    case DefenderActionType::Decoy:
      host.running.insert(d.service);
      break;
    default:
      break;
  }
  return st;
}

// H -> K for every hidden host connected (g_M) from a privileged host. The
// condition does not reference A_t, so it runs after every attacker action.
inline void reveal_connected(const Scenario& s, const State& before, State& after) {
  for (HostIndex hp = 0; hp < s.host_count(); ++hp) {
    if (before[hp].access != AccessState::Privileged) continue;
    if (auto h = s.connectivity_of(hp); h && before[*h].access == AccessState::Hidden)
      after[*h].access = AccessState::Known;
  }
}

// S'_t -> S_{t+1}. Running sets are never touched by the attacker.
inline State apply_attacker(const Scenario& s, const State& st, const AttackerAction& a) {
  State next = st;
  switch (a.type) {
    case AttackerActionType::Discover: {
      bool allowed = a.subnet == s.entry_subnet();
      if (!allowed) {
        for (HostIndex h = 0; h < s.host_count(); ++h) {
          if (s.subnet_of(h) == a.subnet && (st[h].access == AccessState::Privileged ||
                                             st[h].access == AccessState::Interrupted)) {
            allowed = true;
            break;
          }
        }
      }
      if (allowed) {
        for (HostIndex h = 0; h < s.host_count(); ++h)
          if (s.subnet_of(h) == a.subnet && st[h].access == AccessState::Hidden)
            next[h].access = AccessState::Known;
      }
      break;
    }
    case AttackerActionType::Scan:
      // A hidden host cannot be scanned; any other host has its scanned set
      // refreshed from the (post-defender) running set.
      if (st[a.target].access == AccessState::Hidden) break;
      if (st[a.target].access == AccessState::Known) next[a.target].access = AccessState::Scanned;
      next[a.target].scanned = st[a.target].running;
      break;
    case AttackerActionType::Exploit:
      if (st[a.target].access == AccessState::Scanned) {
        switch (s.access(a.target, a.service)) {
          case ServiceAccess::kUser: next[a.target].access = AccessState::UserExploit; break;
          case ServiceAccess::kSuperuser: next[a.target].access = AccessState::RootExploit; break;
          default: break;  // decoy or N-access service: the exploit fails
        }
      }
      break;
    case AttackerActionType::PrivilegeEscalate:
      if (st[a.target].access == AccessState::UserExploit || st[a.target].access == AccessState::RootExploit)
        next[a.target].access = AccessState::Privileged;
      break;
    case AttackerActionType::Interrupt:
      if (st[a.target].access == AccessState::Privileged) next[a.target].access = AccessState::Interrupted;
      break;
  }
  reveal_connected(s, st, next);
  return next;
}

// First matching case wins, in this order: hidden/known, scanned this step,
// exploit (undetected / detected), neutralise, restore, analyse on U/R,
// analyse on P/I, otherwise N. N_d is drawn once, only when A_{t-1} is an
// exploit.
inline Observation observe(const Scenario& s, const State& st_next, const DefenderAction& d_prev,
                           const AttackerAction& a_prev, const ObservationConfig& cfg, Rng& rng) {
  bool detected = false;
  if (a_prev.type == AttackerActionType::Exploit)
    detected = std::bernoulli_distribution(cfg.detection_probability)(rng);

  Observation o(s.host_count(), HostObservation::Nothing);
  for (HostIndex h = 0; h < s.host_count(); ++h) {
    const AccessState acc = st_next[h].access;
    HostObservation& out = o[h];
    if (acc == AccessState::Hidden || acc == AccessState::Known) {
      out = HostObservation::Hidden;
    } else if (a_prev.type == AttackerActionType::Scan && a_prev.target == h) {
      out = HostObservation::Scanned;
    } else if (a_prev.type == AttackerActionType::Exploit && a_prev.target == h) {
      out = detected ? HostObservation::Compromised : HostObservation::Scanned;
    } else if (d_prev.type == DefenderActionType::Neutralise && d_prev.target == h) {
      out = HostObservation::Unmalwared;
    } else if (d_prev.type == DefenderActionType::Restore && d_prev.target == h) {
      out = HostObservation::Nothing;
    } else if (d_prev.type == DefenderActionType::Analyse && d_prev.target == h &&
               (acc == AccessState::UserExploit || acc == AccessState::RootExploit)) {
      out = HostObservation::Compromised;
    } else if (d_prev.type == DefenderActionType::Analyse && d_prev.target == h &&
               (acc == AccessState::Privileged || acc == AccessState::Interrupted)) {
      out = HostObservation::Privileged;
    } else {
      out = HostObservation::Nothing;
    }
  }
  return o;
}

// R_t evaluated on the pre-transition state S_t together with D_t.
inline double reward(const Scenario& s, const State& st, const DefenderAction& d, const RewardTable& tbl) {
  double r = tbl.action_cost[static_cast<std::size_t>(d.type)];
  for (HostIndex h = 0; h < s.host_count(); ++h) {
    const AccessState a = st[h].access;
    if (compromised(a)) r += tbl.subnet_cost[s.subnet_position(s.subnet_of(h))];
    if (a == AccessState::Interrupted) r += tbl.interruption_cost[h];
  }
  return r;
}

struct StepResult {
  State state;
  Observation observation;
  double reward = 0.0;
  AttackerAction attacker_action;
};

// Any callable (const Scenario&, const State&, Rng&) -> AttackerAction.
template <typename AttackerPolicy>
StepResult step(const Scenario& s, const State& st, const DefenderAction& d, AttackerPolicy&& attacker,
                const ObservationConfig& obs_cfg, const RewardTable& tbl, Rng& rng) {
  StepResult out;
  out.reward = reward(s, st, d, tbl);
  State intermediate = apply_defender(s, st, d);
  out.attacker_action = attacker(s, static_cast<const State&>(intermediate), rng);
  out.state = apply_attacker(s, intermediate, out.attacker_action);
  out.observation = observe(s, out.state, d, out.attacker_action, obs_cfg, rng);
  return out;
}

// ---------------------------------------------------------------------------
// Text forms shared by the trajectory format and diagnostics.

inline std::string to_string(const Scenario& s, const DefenderAction& d) {
  switch (d.type) {
    case DefenderActionType::Idle: return "Idle";
    case DefenderActionType::Analyse: return "Analyse(" + s.host(d.target).name + ")";
    case DefenderActionType::Decoy:
      return "Decoy(" + s.service_name(d.service) + "," + s.host(d.target).name + ")";
    case DefenderActionType::Neutralise: return "Neutralise(" + s.host(d.target).name + ")";
    case DefenderActionType::Restore: return "Restore(" + s.host(d.target).name + ")";
  }
  return "?";
}

inline std::string to_string(const Scenario& s, const AttackerAction& a) {
  switch (a.type) {
    case AttackerActionType::Discover: return "Discover(" + std::to_string(a.subnet) + ")";
    case AttackerActionType::Scan: return "Scan(" + s.host(a.target).name + ")";
    case AttackerActionType::Exploit:
      return "Exploit(" + s.service_name(a.service) + "," + s.host(a.target).name + ")";
    case AttackerActionType::PrivilegeEscalate: return "PrivilegeEscalate(" + s.host(a.target).name + ")";
    case AttackerActionType::Interrupt: return "Interrupt(" + s.host(a.target).name + ")";
  }
  return "?";
}

namespace detail {

// Splits "Name(arg1,arg2)" into name and arguments.
inline std::pair<std::string, std::vector<std::string>> split_call(const std::string& text) {
  auto open = text.find('(');
  if (open == std::string::npos) return {text, {}};
  if (text.back() != ')') throw std::invalid_argument("malformed action '" + text + "'");
  std::vector<std::string> args;
  std::string inner = text.substr(open + 1, text.size() - open - 2);
  std::size_t start = 0;
  while (true) {
    auto comma = inner.find(',', start);
    args.push_back(inner.substr(start, comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return {text.substr(0, open), args};
}

}  // namespace detail

inline DefenderAction parse_defender_action(const Scenario& s, const std::string& text) {
  auto [name, args] = detail::split_call(text);
  auto arity = [&](std::size_t n) {
    if (args.size() != n) throw std::invalid_argument("wrong argument count in '" + text + "'");
  };
  if (name == "Idle") { arity(0); return DefenderAction::idle(); }
  if (name == "Analyse") { arity(1); return DefenderAction::analyse(s.host_index(args[0])); }
  if (name == "Decoy") { arity(2); return DefenderAction::decoy(s.service_index(args[0]), s.host_index(args[1])); }
  if (name == "Neutralise") { arity(1); return DefenderAction::neutralise(s.host_index(args[0])); }
  if (name == "Restore") { arity(1); return DefenderAction::restore(s.host_index(args[0])); }
  throw std::invalid_argument("unknown defender action '" + text + "'");
}

inline AttackerAction parse_attacker_action(const Scenario& s, const std::string& text) {
  auto [name, args] = detail::split_call(text);
  auto arity = [&](std::size_t n) {
    if (args.size() != n) throw std::invalid_argument("wrong argument count in '" + text + "'");
  };
  if (name == "Discover") { arity(1); return AttackerAction::discover(std::stoi(args[0])); }
  if (name == "Scan") { arity(1); return AttackerAction::scan(s.host_index(args[0])); }
  if (name == "Exploit") { arity(2); return AttackerAction::exploit(s.service_index(args[0]), s.host_index(args[1])); }
  if (name == "PrivilegeEscalate") { arity(1); return AttackerAction::escalate(s.host_index(args[0])); }
  if (name == "Interrupt") { arity(1); return AttackerAction::interrupt(s.host_index(args[0])); }
  throw std::invalid_argument("unknown attacker action '" + text + "'");
}

// Lossless compact state digest: per host "<access letter>:<running hex>:<scanned hex>",
// hosts joined by '|'.
inline std::string state_digest(const State& st) {
  std::string out;
  char buf[32];
  for (std::size_t h = 0; h < st.size(); ++h) {
    if (h) out.push_back('|');
    std::snprintf(buf, sizeof buf, "%c:%x:%x", letter(st[h].access), st[h].running.bits(), st[h].scanned.bits());
    out += buf;
  }
  return out;
}

inline State parse_state_digest(const std::string& digest) {
  State st;
  std::size_t start = 0;
  while (start <= digest.size()) {
    auto bar = digest.find('|', start);
    std::string part = digest.substr(start, bar == std::string::npos ? std::string::npos : bar - start);
    unsigned running = 0, scanned = 0;
    char acc = 0;
    if (std::sscanf(part.c_str(), "%c:%x:%x", &acc, &running, &scanned) != 3)
      throw std::invalid_argument("malformed state digest '" + part + "'");
    st.hosts.push_back(HostState{access_state_from_letter(acc), ServiceSet(running), ServiceSet(scanned)});
    if (bar == std::string::npos) break;
    start = bar + 1;
  }
  return st;
}

}  // namespace cage2
