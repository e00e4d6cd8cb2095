#include "support.hpp"
#include "toy_pomdp.hpp"

#include <gtest/gtest.h>

using namespace cage2;
using namespace cage2::testing;

namespace {

// s -> s+1 (mod 3), observation reveals the state.
struct RotatingChain {
  std::size_t num_states() const { return 3; }
  double transition(std::size_t s, int, std::size_t next) const { return next == (s + 1) % 3 ? 1.0 : 0.0; }
  double observation(int o, std::size_t next, int) const { return std::size_t(o) == next ? 1.0 : 0.0; }
};

// Two sticky states with uninformative observations.
struct CoinFlip {
  std::size_t num_states() const { return 2; }
  double transition(std::size_t s, int, std::size_t next) const { return s == next ? 1.0 : 0.0; }
  double observation(int, std::size_t, int) const { return 0.5; }
};

auto toy_sim(const ToyPomdp& m, int d) {
  return [&m, d](std::size_t s, Rng& rng) { return m.simulate(s, d, rng); };
}

}  // namespace

TEST(ExactBayes, IdentifyingObservationGivesPointMass) {
  auto b = exact_bayes_update<int, int>(RotatingChain{}, {0.2, 0.5, 0.3}, 0, 2);
  EXPECT_EQ(b, (ExactBelief{0.0, 0.0, 1.0}));
}

TEST(ExactBayes, SymmetricNoiseKeepsUniform) {
  auto b = exact_bayes_update<int, int>(CoinFlip{}, {0.5, 0.5}, 0, 1);
  EXPECT_DOUBLE_EQ(b[0], 0.5);
  EXPECT_DOUBLE_EQ(b[1], 0.5);
}

TEST(ExactBayes, ThreeStateHandEnumeration) {
  // Predicted (uniform prior, action 0): (0.9, 1.0, 1.1) / 3.
  // Times P[o=0 | s'] = (0.9, 0.4, 0.2) -> (0.81, 0.40, 0.22) / 3 -> 81:40:22.
  auto b = exact_bayes_update<int, int>(ToyPomdp{}, {1.0 / 3, 1.0 / 3, 1.0 / 3}, 0, 0);
  EXPECT_NEAR(b[0], 81.0 / 143, 1e-12);
  EXPECT_NEAR(b[1], 40.0 / 143, 1e-12);
  EXPECT_NEAR(b[2], 22.0 / 143, 1e-12);
  double total = b[0] + b[1] + b[2];
  EXPECT_NEAR(total, 1.0, 1e-9);
}

TEST(ExactBayes, ImpossibleObservationThrows) {
  EXPECT_THROW((exact_bayes_update<int, int>(RotatingChain{}, {1.0, 0.0, 0.0}, 0, 0)), ImpossibleObservation);
}

TEST(ParticleFilter, FirstStepIsKnownState) {
  State s1 = initial_state(default_scenario());
  auto p = ParticleSet<State>::known(s1, 100);
  EXPECT_EQ(p.size(), 100u);
  EXPECT_DOUBLE_EQ(belief_estimate(p, s1), 1.0);
}

TEST(ParticleFilter, DeterministicModelAcceptsEveryCandidate) {
  const Scenario& s = default_scenario();
  Environment env = Environment::defaults(s);
  env.observation.detection_probability = 1.0;
  AttackerStrategy bline(s, AttackerStrategyId::BLine);
  State st = initial_state(s);
  auto p = ParticleSet<State>::known(st, 50);
  Rng env_rng(1), filter_rng(2);
  for (int t = 0; t < 20; ++t) {
    StepResult truth = step(s, st, DefenderAction::idle(), bline, env.observation, env.rewards, env_rng);
    auto sim = [&](const State& parent, Rng& rng) {
      StepResult r = step(s, parent, DefenderAction::idle(), bline, env.observation, env.rewards, rng);
      return std::pair<State, Observation>(r.state, r.observation);
    };
    auto res = particle_filter_update(p, truth.observation, sim, FilterLimits{50, 100, 1}, filter_rng);
    EXPECT_EQ(res.diagnostics.attempts, 50u);
    EXPECT_EQ(res.diagnostics.accepted, 50u);
    EXPECT_FALSE(res.diagnostics.deprived);
    EXPECT_DOUBLE_EQ(belief_estimate(res.particles, truth.state), 1.0);
    p = res.particles;
    st = truth.state;
  }
}

TEST(ParticleFilter, MatchesExactBayesOnToy) {
  ToyPomdp m;
  const std::vector<std::pair<int, int>> history = {{0, 0}, {0, 1}, {1, 1}, {0, 0}};
  double tv_sum = 0.0;
  const int trials = 20;
  for (int trial = 0; trial < trials; ++trial) {
    Rng rng = derive_rng({std::uint64_t(trial)});
    ExactBelief exact{1.0, 0.0, 0.0};
    auto p = ParticleSet<std::size_t>::known(0, 10000);
    for (auto [d, o] : history) {
      exact = exact_bayes_update<int, int>(m, exact, d, o);
      p = particle_filter_update(p, o, toy_sim(m, d), FilterLimits{10000, 100, 1}, rng).particles;
    }
    tv_sum += total_variation(particle_histogram(p, 3), exact);
  }
  EXPECT_LT(tv_sum / trials, 0.05);
}

TEST(ParticleFilter, AcceptedParticlesAreReachableAndConsistent) {
  ToyPomdp m;
  Rng rng(3);
  auto p = ParticleSet<std::size_t>::known(0, 500);
  p = particle_filter_update(p, 1, toy_sim(m, 1), FilterLimits{500, 100, 1}, rng).particles;
  // From state 0 the rotating action only reaches state 1.
  for (std::size_t s : p.particles) EXPECT_EQ(s, 1u);
  p = particle_filter_update(p, 0, toy_sim(m, 0), FilterLimits{500, 100, 1}, rng).particles;
  for (std::size_t s : p.particles) {
    EXPECT_GT(m.transition(1, 0, s), 0.0);
    EXPECT_GT(m.observation(0, s, 0), 0.0);
  }
}

TEST(ParticleFilter, ReproducibleAndThreadIndependent) {
  ToyPomdp m;
  ParticleSet<std::size_t> prior{{0, 1, 2, 2, 1, 0, 0}};
  auto run = [&](unsigned threads) {
    Rng rng(99);
    return particle_filter_update(prior, 1, toy_sim(m, 0), FilterLimits{300, 100, threads}, rng);
  };
  auto a = run(1), b = run(1), c = run(3);
  EXPECT_EQ(a.particles.particles, b.particles.particles);
  EXPECT_EQ(a.particles.particles, c.particles.particles);
  EXPECT_EQ(a.diagnostics.attempts, c.diagnostics.attempts);
}

TEST(ParticleFilter, DeprivationRefillsFromAccepted) {
  ToyPomdp m;
  Rng rng(4);
  auto p = ParticleSet<std::size_t>::known(2, 100);
  // Budget of 1 attempt per particle: roughly 80% of candidates match o=1.
  auto res = particle_filter_update(p, 1, toy_sim(m, 0), FilterLimits{100, 1, 1}, rng);
  EXPECT_EQ(res.diagnostics.attempts, 100u);
  EXPECT_LT(res.diagnostics.accepted, 100u);
  EXPECT_GT(res.diagnostics.accepted, 0u);
  EXPECT_TRUE(res.diagnostics.deprived);
  EXPECT_FALSE(res.diagnostics.refilled_from_rejects);
  EXPECT_EQ(res.particles.size(), 100u);
}

TEST(ParticleFilter, DeprivationRefillsFromClosestRejects) {
  // Observations are per-host vectors; none can match, the closest ones win.
  auto sim = [](const int& s, Rng& rng) {
    int next = int(uniform_index(rng, 2));
    std::vector<int> obs = next == 0 ? std::vector<int>{7, 0, 0} : std::vector<int>{7, 7, 0};
    return std::pair<int, std::vector<int>>(next + s, obs);
  };
  Rng rng(5);
  auto res = particle_filter_update(ParticleSet<int>::known(0, 20), std::vector<int>{7, 7, 7}, sim,
                                    FilterLimits{20, 10, 1}, rng);
  EXPECT_EQ(res.diagnostics.accepted, 0u);
  EXPECT_TRUE(res.diagnostics.refilled_from_rejects);
  ASSERT_EQ(res.particles.size(), 20u);
  for (int s : res.particles.particles) EXPECT_EQ(s, 1);
}

TEST(ParticleFilter, EmptyInputRejected) {
  Rng rng(0);
  ToyPomdp m;
  EXPECT_THROW(particle_filter_update(ParticleSet<std::size_t>{}, 0, toy_sim(m, 0), FilterLimits{}, rng),
               std::invalid_argument);
}

TEST(BeliefEstimate, Examples) {
  ParticleSet<int> all{{4, 4, 4}};
  EXPECT_DOUBLE_EQ(belief_estimate(all, 4), 1.0);
  EXPECT_DOUBLE_EQ(belief_estimate(all, 5), 0.0);
  ParticleSet<int> mix{{1, 1, 2, 1}};
  EXPECT_DOUBLE_EQ(belief_estimate(mix, 1), 0.75);
}

TEST(RepresentativeState, Examples) {
  Rng rng(6);
  EXPECT_EQ(representative_state(ParticleSet<int>{{3, 3, 3}}, rng), 3);
  EXPECT_EQ(representative_state(ParticleSet<int>{{8}}, rng), 8);
  ParticleSet<int> two{{0, 1}};
  int ones = 0;
  for (int i = 0; i < 10000; ++i) ones += representative_state(two, rng);
  EXPECT_NEAR(ones / 10000.0, 0.5, 0.03);
  EXPECT_THROW(representative_state(ParticleSet<int>{}, rng), std::invalid_argument);
}

TEST(UniqueParticles, Counts) {
  ParticleSet<int> p{{1, 2, 2, 3, 3, 3}};
  EXPECT_EQ(unique_particles(p, std::hash<int>{}), 3u);
}
