#pragma once

// Belief tracking. The exact Bayes filter works on any enumerable POMDP and
// serves as an oracle for small models; the rejection-sampling particle
// filter is what runs inside the defender.

#include "cage2/random.hpp"

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <iterator>
#include <limits>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <thread>
#include <unordered_set>
#include <vector>

namespace cage2 {

// ---------------------------------------------------------------------------
// Exact Bayes filter

class ImpossibleObservation : public std::runtime_error {
 public:
  ImpossibleObservation() : std::runtime_error("observation has zero probability under the current belief") {}
};

// A model whose state space is {0, .., num_states()-1}.
template <typename M, typename Action, typename Obs>
concept EnumerablePomdp = requires(const M& m, std::size_t s, const Action& d, const Obs& o) {
  { m.num_states() } -> std::convertible_to<std::size_t>;
  { m.transition(s, d, s) } -> std::convertible_to<double>;   // P[s' | s, d]
  { m.observation(o, s, d) } -> std::convertible_to<double>;  // Z[o | s', d]
};

using ExactBelief = std::vector<double>;

// b_t(s') = eta * Z(o | s', d) * sum_s P(s' | s, d) b_{t-1}(s).
template <typename Action, typename Obs, typename Model>
  requires EnumerablePomdp<Model, Action, Obs>
ExactBelief exact_bayes_update(const Model& model, const ExactBelief& prior, const Action& d, const Obs& o) {
  const std::size_t n = model.num_states();
  ExactBelief post(n, 0.0);
  for (std::size_t next = 0; next < n; ++next) {
    double predicted = 0.0;
    for (std::size_t s = 0; s < n; ++s)
      if (prior[s] != 0.0) predicted += model.transition(s, d, next) * prior[s];
    post[next] = model.observation(o, next, d) * predicted;
  }
  const double mass = std::accumulate(post.begin(), post.end(), 0.0);
  if (!(mass > 0.0)) throw ImpossibleObservation();
  for (double& p : post) p /= mass;
  return post;
}

inline double total_variation(const std::vector<double>& p, const std::vector<double>& q) {
  double d = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) d += std::abs(p[i] - q[i]);
  return 0.5 * d;
}

// ---------------------------------------------------------------------------
// Particle filter

template <typename State>
struct ParticleSet {
  std::vector<State> particles;

  static ParticleSet known(const State& s, std::size_t count) { return {std::vector<State>(count, s)}; }

  std::size_t size() const { return particles.size(); }
  bool empty() const { return particles.empty(); }
};

struct FilterLimits {
  std::size_t particle_count = 100;
  // Candidate simulations allowed per update, as a multiple of particle_count.
  std::size_t attempt_budget_factor = 100;
  unsigned threads = 1;
};

struct FilterDiagnostics {
  std::size_t attempts = 0;
  std::size_t accepted = 0;
  bool deprived = false;
  // Set when nothing matched and the set was rebuilt from the closest misses.
  bool refilled_from_rejects = false;

  double acceptance_rate() const { return attempts == 0 ? 1.0 : double(accepted) / double(attempts); }
};

template <typename State>
struct FilterResult {
  ParticleSet<State> particles;
  FilterDiagnostics diagnostics;
};

namespace detail {

template <typename Obs>
std::size_t observation_mismatch(const Obs& a, const Obs& b) {
  if constexpr (requires { a.size(); a[0]; }) {
    std::size_t n = std::min(a.size(), b.size());
    std::size_t d = std::max(a.size(), b.size()) - n;
    for (std::size_t i = 0; i < n; ++i) d += a[i] == b[i] ? 0 : 1;
    return d;
  } else {
    return a == b ? 0 : 1;
  }
}

}  // namespace detail

// Rejection-sampling update. `simulate(state, rng)` executes the previous
// defender action from `state` (defender phase, attacker phase, observation
// draw) and returns {next_state, observation}. A candidate is accepted iff its
// observation equals `observed` exactly.
//
// Candidate i draws its parent and runs its simulation on a substream derived
// from (base seed, i), so candidates can be evaluated concurrently and the
// result does not depend on the thread count: acceptance is in index order.
//
// When the budget runs out with k < M accepted, the accepted particles are
// resampled with replacement up to M. With k = 0, the candidates whose
// observations matched the most entries are resampled instead.
template <typename State, typename Obs, typename Simulate>
FilterResult<State> particle_filter_update(const ParticleSet<State>& previous, const Obs& observed,
                                           Simulate&& simulate, const FilterLimits& limits, Rng& rng) {
  if (previous.empty()) throw std::invalid_argument("particle filter: empty input particle set");
  const std::size_t target = limits.particle_count;
  const std::size_t budget = std::max<std::size_t>(target * limits.attempt_budget_factor, target);
  const std::uint64_t base = rng();

  struct Candidate {
    State state;
    Obs observation;
  };
  auto run_candidate = [&](std::size_t index) {
    Rng sub(mix_seed(base, index));
    const State& parent = previous.particles[uniform_index(sub, previous.size())];
    auto [next, obs] = simulate(parent, sub);
    return Candidate{std::move(next), std::move(obs)};
  };

  FilterResult<State> result;
  auto& accepted = result.particles.particles;
  accepted.reserve(target);
  std::vector<State> closest;
  std::size_t closest_distance = std::numeric_limits<std::size_t>::max();

  std::size_t next_index = 0;
  const unsigned threads = std::max(1u, limits.threads);
  std::vector<std::optional<Candidate>> batch;
  while (accepted.size() < target && next_index < budget) {
    const std::size_t want = target - accepted.size();
    const std::size_t batch_size = std::min(budget - next_index, threads == 1 ? want : std::max<std::size_t>(want, 4 * threads));
    batch.assign(batch_size, std::nullopt);
    if (threads == 1) {
      for (std::size_t i = 0; i < batch_size; ++i) batch[i] = run_candidate(next_index + i);
    } else {
      std::vector<std::jthread> workers;
      for (unsigned w = 0; w < threads; ++w) {
        workers.emplace_back([&, w] {
          for (std::size_t i = w; i < batch_size; i += threads) batch[i] = run_candidate(next_index + i);
        });
      }
    }
    for (std::size_t i = 0; i < batch_size; ++i) {
      ++result.diagnostics.attempts;
      Candidate& c = *batch[i];
      if (c.observation == observed) {
        if (accepted.size() < target) accepted.push_back(std::move(c.state));
      } else if (accepted.empty()) {
        std::size_t d = detail::observation_mismatch(c.observation, observed);
        if (d < closest_distance) {
          closest_distance = d;
          closest.clear();
        }
        if (d == closest_distance) closest.push_back(std::move(c.state));
      }
      if (accepted.size() == target) break;
    }
    next_index += batch_size;
  }
  result.diagnostics.accepted = accepted.size();

  if (accepted.size() < target) {
    result.diagnostics.deprived = true;
    const std::vector<State>& pool = accepted.empty() ? closest : accepted;
    result.diagnostics.refilled_from_rejects = accepted.empty();
    std::vector<State> source(pool.begin(), pool.end());
    while (accepted.size() < target) accepted.push_back(source[uniform_index(rng, source.size())]);
  }
  return result;
}

// b_hat(s) = (1/M) * #{particles equal to s}.
template <typename State>
double belief_estimate(const ParticleSet<State>& p, const State& s) {
  if (p.empty()) return 0.0;
  auto count = std::count(p.particles.begin(), p.particles.end(), s);
  return double(count) / double(p.size());
}

// S_hat ~ Uniform(P_t).
template <typename State>
const State& representative_state(const ParticleSet<State>& p, Rng& rng) {
  if (p.empty()) throw std::invalid_argument("representative_state: empty particle set");
  return p.particles[uniform_index(rng, p.size())];
}

template <typename State, typename Hash>
std::size_t unique_particles(const ParticleSet<State>& p, Hash hash) {
  std::unordered_set<State, Hash> seen(p.particles.begin(), p.particles.end(), p.size(), hash);
  return seen.size();
}

}  // namespace cage2
