#include "support.hpp"

#include <gtest/gtest.h>

#include <chrono>
#include <set>

using namespace cage2;
using namespace cage2::testing;

namespace {

const Scenario& S() { return default_scenario(); }

ServiceSet services(std::initializer_list<const char*> names) {
  ServiceSet out;
  for (const char* n : names) out.insert(E(n));
  return out;
}

using Edge = std::pair<char, char>;

// Access-state edges each phase may take (self-loops are always allowed).
const std::set<Edge> kDefenderEdges = {{'U', 'S'}, {'R', 'S'}, {'P', 'S'}, {'I', 'S'}};
const std::set<Edge> kAttackerEdges = {{'H', 'K'}, {'K', 'S'}, {'S', 'U'}, {'S', 'R'},
                                       {'U', 'P'}, {'R', 'P'}, {'P', 'I'}};

Environment det_env() {
  Environment env = Environment::defaults(S());
  env.observation.detection_probability = 1.0;
  return env;
}

}  // namespace

// --- initial_state ---------------------------------------------------------

TEST(InitialState, DefaultScenario) {
  State st = initial_state(S());
  ASSERT_EQ(st.size(), 11u);
  const HostState& c1 = st[H("CLIENT-1")];
  EXPECT_EQ(c1.access, AccessState::Hidden);
  EXPECT_EQ(c1.running, services({"SSH", "FTP"}));
  EXPECT_TRUE(c1.scanned.empty());
  for (HostIndex h = 0; h < st.size(); ++h) {
    EXPECT_EQ(st[h].access, AccessState::Hidden);
    EXPECT_EQ(st[h].running, S().provided(h));
    EXPECT_TRUE(st[h].scanned.empty());
  }
}

TEST(InitialState, SingleHostAndIdempotent) {
  Scenario one = load_scenario(R"({"subnets":[1],"services":["X","Y"],"target_host":"A",
    "hosts":[{"name":"A","subnet":1,"services":{"Y":"S"}}]})");
  State st = initial_state(one);
  ASSERT_EQ(st.size(), 1u);
  EXPECT_EQ(st[0].access, AccessState::Hidden);
  EXPECT_EQ(st[0].running.bits(), 0b10u);
  EXPECT_TRUE(st[0].scanned.empty());
  EXPECT_EQ(initial_state(S()), initial_state(S()));
}

// --- apply_defender --------------------------------------------------------

TEST(ApplyDefender, NeutraliseUserAccess) {
  State st = initial_state(S());
  st[H("ENT-1")].access = AccessState::UserExploit;
  State next = apply_defender(S(), st, DefenderAction::neutralise(H("ENT-1")));
  EXPECT_EQ(next[H("ENT-1")].access, AccessState::Scanned);
}

TEST(ApplyDefender, NeutraliseDoesNotTouchRootExploit) {
  State st = initial_state(S());
  st[H("ENT-1")].access = AccessState::RootExploit;
  EXPECT_EQ(apply_defender(S(), st, DefenderAction::neutralise(H("ENT-1"))), st);
}

TEST(ApplyDefender, RestoreClearsAccessAndDecoys) {
  State st = initial_state(S());
  HostIndex c1 = H("CLIENT-1");
  st[c1].access = AccessState::Privileged;
  st[c1].running.insert(E("SMTP"));
  st[c1].running.insert(E("RDS"));
  st[c1].scanned = st[c1].running;
  State next = apply_defender(S(), st, DefenderAction::restore(c1));
  EXPECT_EQ(next[c1].access, AccessState::Scanned);
  EXPECT_EQ(next[c1].running, services({"SSH", "FTP"}));
  EXPECT_EQ(next[c1].scanned, st[c1].scanned);  // the defender never changes F
}

TEST(ApplyDefender, IdleIsIdentity) {
  Rng rng(7);
  for (int i = 0; i < 50; ++i) {
    State st = random_state(S(), rng);
    EXPECT_EQ(apply_defender(S(), st, DefenderAction::idle()), st);
  }
}

TEST(ApplyDefender, DecoyAddsServiceOnce) {
  State st = initial_state(S());
  HostIndex c1 = H("CLIENT-1");
  State once = apply_defender(S(), st, DefenderAction::decoy(E("SMTP"), c1));
  EXPECT_EQ(once[c1].running, services({"SSH", "FTP", "SMTP"}));
  EXPECT_EQ(apply_defender(S(), once, DefenderAction::decoy(E("SMTP"), c1)), once);
  EXPECT_EQ(apply_defender(S(), st, DefenderAction::decoy(E("SSH"), c1)), st);
}

// --- apply_attacker --------------------------------------------------------

TEST(ApplyAttacker, DiscoverEntrySubnet) {
  State next = apply_attacker(S(), initial_state(S()), AttackerAction::discover(1));
  for (HostIndex h = 0; h < next.size(); ++h)
    EXPECT_EQ(next[h].access, S().subnet_of(h) == 1 ? AccessState::Known : AccessState::Hidden) << h;
}

TEST(ApplyAttacker, DiscoverNeedsRootFootholdOutsideEntry) {
  State st = initial_state(S());
  EXPECT_EQ(apply_attacker(S(), st, AttackerAction::discover(2)), st);
  st[H("ENT-1")].access = AccessState::Privileged;
  State next = apply_attacker(S(), st, AttackerAction::discover(2));
  EXPECT_EQ(next[H("ENT-0")].access, AccessState::Known);
  EXPECT_EQ(next[H("ENT-2")].access, AccessState::Known);
}

TEST(ApplyAttacker, ScanRecordsRunningIncludingDecoy) {
  State st = initial_state(S());
  HostIndex c1 = H("CLIENT-1");
  st[c1].access = AccessState::Known;
  st[c1].running.insert(E("SMTP"));
  State next = apply_attacker(S(), st, AttackerAction::scan(c1));
  EXPECT_EQ(next[c1].access, AccessState::Scanned);
  EXPECT_EQ(next[c1].scanned, services({"SSH", "FTP", "SMTP"}));
}

TEST(ApplyAttacker, RescanAfterRestoreDropsDecoy) {
  State st = initial_state(S());
  HostIndex c1 = H("CLIENT-1");
  st[c1].access = AccessState::Known;
  st[c1].running.insert(E("SMTP"));
  st = apply_attacker(S(), st, AttackerAction::scan(c1));
  st = apply_defender(S(), st, DefenderAction::restore(c1));
  State next = apply_attacker(S(), st, AttackerAction::scan(c1));
  EXPECT_EQ(next[c1].scanned, services({"SSH", "FTP"}));
}

TEST(ApplyAttacker, ExploitOutcomes) {
  State st = initial_state(S());
  HostIndex c1 = H("CLIENT-1"), c2 = H("CLIENT-2");
  st[c1].access = AccessState::Scanned;
  st[c1].running.insert(E("SMTP"));
  st[c2].access = AccessState::Scanned;
  // decoy
  EXPECT_EQ(apply_attacker(S(), st, AttackerAction::exploit(E("SMTP"), c1))[c1].access, AccessState::Scanned);
  // t = S
  EXPECT_EQ(apply_attacker(S(), st, AttackerAction::exploit(E("SSH"), c1))[c1].access, AccessState::RootExploit);
  // t = U
  EXPECT_EQ(apply_attacker(S(), st, AttackerAction::exploit(E("FTP"), c1))[c1].access, AccessState::UserExploit);
  // t = N
  EXPECT_EQ(apply_attacker(S(), st, AttackerAction::exploit(E("SMB"), c2))[c2].access, AccessState::Scanned);
  // not in S: no-op
  st[c1].access = AccessState::Known;
  EXPECT_EQ(apply_attacker(S(), st, AttackerAction::exploit(E("SSH"), c1))[c1].access, AccessState::Known);
}

TEST(ApplyAttacker, EscalateAndInterrupt) {
  State st = initial_state(S());
  HostIndex h = H("ENT-0");
  st[h].access = AccessState::UserExploit;
  EXPECT_EQ(apply_attacker(S(), st, AttackerAction::escalate(h))[h].access, AccessState::Privileged);
  st[h].access = AccessState::RootExploit;
  EXPECT_EQ(apply_attacker(S(), st, AttackerAction::escalate(h))[h].access, AccessState::Privileged);
  EXPECT_EQ(apply_attacker(S(), st, AttackerAction::interrupt(h))[h].access, AccessState::RootExploit);
  st[h].access = AccessState::Privileged;
  EXPECT_EQ(apply_attacker(S(), st, AttackerAction::interrupt(h))[h].access, AccessState::Interrupted);
}

TEST(ApplyAttacker, ConnectivityRevealIndependentOfAction) {
  State st = initial_state(S());
  st[H("ENT-2")].access = AccessState::Privileged;
  for (AttackerAction a : {AttackerAction::discover(1), AttackerAction::scan(H("CLIENT-4")),
                           AttackerAction::interrupt(H("ENT-2")), AttackerAction::escalate(H("ENT-0"))}) {
    State next = apply_attacker(S(), st, a);
    EXPECT_EQ(next[H("OP-SERVER")].access, AccessState::Known) << to_string(S(), a);
  }
}

TEST(ApplyAttacker, RunningNeverChanges) {
  Rng rng(3);
  for (int i = 0; i < 500; ++i) {
    State st = random_state(S(), rng);
    State next = apply_attacker(S(), st, random_attacker_action(S(), rng));
    for (HostIndex h = 0; h < st.size(); ++h) EXPECT_EQ(next[h].running, st[h].running);
  }
}

// --- observe ---------------------------------------------------------------

TEST(Observe, Cases) {
  Rng rng(1);
  ObservationConfig cfg{1.0};
  State st = initial_state(S());
  HostIndex c1 = H("CLIENT-1"), c2 = H("CLIENT-2"), e1 = H("ENT-1");
  st[c1].access = AccessState::Known;
  st[c2].access = AccessState::Scanned;
  st[e1].access = AccessState::Privileged;
  auto obs = [&](DefenderAction d, AttackerAction a, HostIndex h) { return observe(S(), st, d, a, cfg, rng)[h]; };
  const auto idle = DefenderAction::idle();
  const auto nothing = AttackerAction::discover(3);
  EXPECT_EQ(obs(idle, nothing, c1), HostObservation::Hidden);
  EXPECT_EQ(obs(idle, AttackerAction::scan(c2), c2), HostObservation::Scanned);
  EXPECT_EQ(obs(DefenderAction::neutralise(c2), nothing, c2), HostObservation::Unmalwared);
  EXPECT_EQ(obs(DefenderAction::restore(c2), nothing, c2), HostObservation::Nothing);
  EXPECT_EQ(obs(DefenderAction::analyse(e1), nothing, e1), HostObservation::Privileged);
  EXPECT_EQ(obs(idle, nothing, c2), HostObservation::Nothing);
  EXPECT_EQ(obs(idle, nothing, e1), HostObservation::Nothing);
  // exploit: detected vs undetected
  EXPECT_EQ(obs(idle, AttackerAction::exploit(E("RDS"), c2), c2), HostObservation::Compromised);
  cfg.detection_probability = 0.0;
  EXPECT_EQ(obs(idle, AttackerAction::exploit(E("RDS"), c2), c2), HostObservation::Scanned);
  // analyse on U/R -> C
  st[c2].access = AccessState::RootExploit;
  EXPECT_EQ(obs(DefenderAction::analyse(c2), nothing, c2), HostObservation::Compromised);
  // scan outranks the defender-driven cases
  EXPECT_EQ(obs(DefenderAction::restore(c2), AttackerAction::scan(c2), c2), HostObservation::Scanned);
  // hidden/known outranks everything
  EXPECT_EQ(obs(DefenderAction::analyse(c1), AttackerAction::scan(c1), c1), HostObservation::Hidden);
}

TEST(Observe, DetectionOnlyDrawnOnExploit) {
  ObservationConfig cfg{0.5};
  State st = initial_state(S());
  Rng a(11), b(11);
  observe(S(), st, DefenderAction::idle(), AttackerAction::scan(0), cfg, a);
  EXPECT_EQ(a(), b());
}

TEST(Observe, DetectionFrequency) {
  ObservationConfig cfg{0.95};
  State st = initial_state(S());
  st[0].access = AccessState::Scanned;
  Rng rng(5);
  int alarms = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i)
    alarms += observe(S(), st, DefenderAction::idle(), AttackerAction::exploit(0, 0), cfg, rng)[0] ==
              HostObservation::Compromised;
  EXPECT_NEAR(double(alarms) / n, 0.95, 3 * std::sqrt(0.95 * 0.05 / n));
}

// --- reward ----------------------------------------------------------------

TEST(Reward, Examples) {
  const RewardTable tbl = RewardTable::defaults(S());
  EXPECT_EQ(reward(S(), initial_state(S()), DefenderAction::idle(), tbl), 0.0);

  State st = initial_state(S());
  st[H("ENT-1")].access = AccessState::UserExploit;
  EXPECT_DOUBLE_EQ(reward(S(), st, DefenderAction::restore(H("CLIENT-1")), tbl), -2.0);

  State op = initial_state(S());
  op[H("OP-SERVER")].access = AccessState::Interrupted;
  EXPECT_DOUBLE_EQ(reward(S(), op, DefenderAction::idle(), tbl), -11.0);
}

TEST(Reward, TableDefaults) {
  const RewardTable tbl = RewardTable::defaults(S());
  EXPECT_EQ(tbl.action_cost[std::size_t(DefenderActionType::Restore)], -1.0);
  EXPECT_EQ(tbl.action_cost[std::size_t(DefenderActionType::Idle)], 0.0);
  EXPECT_EQ(tbl.action_cost[std::size_t(DefenderActionType::Analyse)], 0.0);
  EXPECT_EQ(tbl.action_cost[std::size_t(DefenderActionType::Decoy)], 0.0);
  EXPECT_EQ(tbl.action_cost[std::size_t(DefenderActionType::Neutralise)], 0.0);
  EXPECT_EQ(tbl.subnet_cost, (std::vector<double>{-0.1, -1.0, -1.0}));
  EXPECT_EQ(tbl.interruption_cost[H("OP-SERVER")], -10.0);
  EXPECT_EQ(tbl.interruption_cost[H("OP-HOST-0")], 0.0);
  EXPECT_TRUE(tbl.valid(S()));
}

TEST(Reward, NonPositiveAndZeroOnlyWhenClean) {
  const RewardTable tbl = RewardTable::defaults(S());
  Rng rng(19);
  for (int i = 0; i < 2000; ++i) {
    State st = random_state(S(), rng);
    DefenderAction d = random_defender_action(S(), rng);
    double r = reward(S(), st, d, tbl);
    EXPECT_LE(r, 0.0);
    bool clean = d.type != DefenderActionType::Restore;
    for (const HostState& h : st.hosts) clean = clean && !compromised(h.access);
    EXPECT_EQ(r == 0.0, clean);
  }
}

// --- step ------------------------------------------------------------------

TEST(Step, RestoreEveryStepAgainstInactiveAttacker) {
  Environment env = det_env();
  auto inactive = [](const Scenario&, const State&, Rng&) { return AttackerAction::discover(3); };
  State st = initial_state(S());
  Rng rng(0);
  for (int t = 0; t < 10; ++t) {
    StepResult r = step(S(), st, DefenderAction::restore(H("CLIENT-2")), inactive, env.observation, env.rewards, rng);
    EXPECT_EQ(r.reward, -1.0);
    for (const HostState& h : r.state.hosts) EXPECT_EQ(h.access, AccessState::Hidden);
    st = r.state;
  }
}

TEST(Step, DefenderActsBeforeAttacker) {
  // The attacker sees the post-defender state: after Restore, CLIENT-1 is
  // back to S and B-LINE exploits it again instead of escalating.
  Environment env = det_env();
  AttackerStrategy bline(S(), AttackerStrategyId::BLine);
  State st = initial_state(S());
  for (HostIndex h = 0; h < 4; ++h) st[h].access = AccessState::Known;
  HostIndex c1 = H("CLIENT-1");
  st[c1].access = AccessState::RootExploit;
  st[c1].scanned = st[c1].running;
  Rng rng(0);
  StepResult r = step(S(), st, DefenderAction::restore(c1), bline, env.observation, env.rewards, rng);
  EXPECT_EQ(r.attacker_action, AttackerAction::exploit(E("SSH"), c1));
  EXPECT_EQ(r.state[c1].access, AccessState::RootExploit);
  EXPECT_DOUBLE_EQ(r.reward, -1.0 - 0.1);  // reward is evaluated on S_t
}

TEST(Step, Deterministic) {
  Environment env = Environment::defaults(S());
  AttackerStrategy meander(S(), AttackerStrategyId::Meander);
  Rng gen(23);
  for (int i = 0; i < 100; ++i) {
    State st = random_state(S(), gen);
    DefenderAction d = random_defender_action(S(), gen);
    const std::uint64_t seed = gen();
    Rng a(seed), b(seed);
    StepResult x = step(S(), st, d, meander, env.observation, env.rewards, a);
    StepResult y = step(S(), st, d, meander, env.observation, env.rewards, b);
    EXPECT_EQ(x.state, y.state);
    EXPECT_EQ(x.observation, y.observation);
    EXPECT_EQ(x.reward, y.reward);
    EXPECT_EQ(x.attacker_action, y.attacker_action);
  }
}

TEST(Step, HandTracedBlineEpisode) {
  auto start = std::chrono::steady_clock::now();
  std::vector<TraceStep> got = simulate_bline_idle(30, 0);
  auto elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  EXPECT_EQ(compare_traces(load_hand_trace(), got), "");
  EXPECT_NEAR(trace_total_reward(got), -189.7, 1e-9);
  EXPECT_LT(elapsed, 1.0);
  // Seed-independent with detection forced.
  EXPECT_EQ(compare_traces(got, simulate_bline_idle(30, 12345)), "");
}

// --- properties ------------------------------------------------------------

TEST(Properties, AccessEdgesFollowStateMachine) {
  const Scenario& s = S();
  Rng rng(2024);
  std::set<Edge> seen_attacker;
  for (int episode = 0; episode < 400; ++episode) {
    State st = initial_state(s);
    for (int t = 0; t < 60; ++t) {
      // Bias the attacker toward useful actions so deep states are reached.
      AttackerAction a = uniform01(rng) < 0.5 ? AttackerStrategy(s, AttackerStrategyId::Meander)(s, st, rng)
                                              : random_attacker_action(s, rng);
      DefenderAction d = uniform01(rng) < 0.7 ? DefenderAction::idle() : random_defender_action(s, rng);
      State mid = apply_defender(s, st, d);
      State next = apply_attacker(s, mid, a);
      for (HostIndex h = 0; h < s.host_count(); ++h) {
        Edge de{letter(st[h].access), letter(mid[h].access)};
        Edge ae{letter(mid[h].access), letter(next[h].access)};
        if (de.first != de.second) { EXPECT_TRUE(kDefenderEdges.count(de)) << de.first << "->" << de.second; }
        if (ae.first != ae.second) {
          EXPECT_TRUE(kAttackerEdges.count(ae)) << ae.first << "->" << ae.second;
          seen_attacker.insert(ae);
        }
        // structural invariants
        EXPECT_TRUE(s.provided(h).is_subset_of(next[h].running));
        if (next[h].access == AccessState::Hidden || next[h].access == AccessState::Known) {
          EXPECT_TRUE(next[h].scanned.empty());
        }
        EXPECT_EQ(mid[h].scanned, st[h].scanned);
      }
      st = next;
    }
  }
  EXPECT_EQ(seen_attacker, kAttackerEdges);  // the fuzzer exercised every edge
}

TEST(Properties, ScannedSetsGrowOnlyThroughScanUnderStrategies) {
  const Scenario& s = S();
  Rng rng(77);
  for (AttackerStrategyId id : {AttackerStrategyId::BLine, AttackerStrategyId::Meander}) {
    AttackerStrategy attacker(s, id);
    for (int episode = 0; episode < 100; ++episode) {
      State st = initial_state(s);
      for (int t = 0; t < 60; ++t) {
        DefenderAction d = random_defender_action(s, rng);
        State mid = apply_defender(s, st, d);
        AttackerAction a = attacker(s, mid, rng);
        State next = apply_attacker(s, mid, a);
        for (HostIndex h = 0; h < s.host_count(); ++h) {
          EXPECT_TRUE(st[h].scanned.is_subset_of(next[h].scanned));
          if (!(a.type == AttackerActionType::Scan && a.target == h)) { EXPECT_EQ(next[h].scanned, st[h].scanned); }
          // running changes only through Decoy (grow) or Restore (reset)
          if (!d.targets(h)) { EXPECT_EQ(next[h].running, st[h].running); }
        }
        st = next;
      }
    }
  }
}

TEST(Properties, ObservationHasOneValuePerHost) {
  const Scenario& s = S();
  Rng rng(8);
  for (int i = 0; i < 1000; ++i) {
    State st = random_state(s, rng);
    Observation o = observe(s, st, random_defender_action(s, rng), random_attacker_action(s, rng),
                            ObservationConfig{0.5}, rng);
    ASSERT_EQ(o.size(), s.host_count());
    for (HostIndex h = 0; h < s.host_count(); ++h) {
      if (st[h].access == AccessState::Hidden || st[h].access == AccessState::Known)
        EXPECT_EQ(o[h], HostObservation::Hidden);
      else
        EXPECT_NE(o[h], HostObservation::Hidden);
    }
  }
}

// --- action indexing and text forms ----------------------------------------

TEST(Actions, IndexRoundTrip) {
  const Scenario& s = S();
  EXPECT_EQ(defender_action_count(s), 1 + 11 * (3 + 9));
  EXPECT_EQ(defender_action_from_index(s, 0), DefenderAction::idle());
  for (std::size_t i = 0; i < defender_action_count(s); ++i) {
    DefenderAction d = defender_action_from_index(s, i);
    EXPECT_EQ(defender_action_index(s, d), i);
    EXPECT_EQ(parse_defender_action(s, to_string(s, d)), d);
  }
}

TEST(Actions, AttackerTextRoundTrip) {
  const Scenario& s = S();
  Rng rng(4);
  for (int i = 0; i < 200; ++i) {
    AttackerAction a = random_attacker_action(s, rng);
    EXPECT_EQ(parse_attacker_action(s, to_string(s, a)), a);
  }
  EXPECT_EQ(to_string(s, AttackerAction::exploit(E("SSH"), H("CLIENT-1"))), "Exploit(SSH,CLIENT-1)");
  EXPECT_THROW(parse_attacker_action(s, "Teleport(CLIENT-1)"), std::exception);
}

TEST(Actions, StateDigestRoundTrip) {
  Rng rng(6);
  for (int i = 0; i < 200; ++i) {
    State st = random_state(S(), rng);
    EXPECT_EQ(parse_state_digest(state_digest(st)), st);
  }
}
