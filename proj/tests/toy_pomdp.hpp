#pragma once

// A small enumerable POMDP used to check the particle filter against the
// exact Bayes filter.

#include "cage2/belief.hpp"

#include <array>
#include <utility>

namespace cage2::testing {

struct ToyPomdp {
  // transition[d][s][s']
  std::array<std::array<std::array<double, 3>, 3>, 2> transition_table{{
      {{{0.6, 0.3, 0.1}, {0.2, 0.5, 0.3}, {0.1, 0.2, 0.7}}},
      {{{0.0, 1.0, 0.0}, {0.0, 0.0, 1.0}, {1.0, 0.0, 0.0}}},
  }};
  // observation[s'][o], independent of the action
  std::array<std::array<double, 2>, 3> observation_table{{{0.9, 0.1}, {0.4, 0.6}, {0.2, 0.8}}};

  std::size_t num_states() const { return 3; }
  double transition(std::size_t s, int d, std::size_t next) const { return transition_table[d][s][next]; }
  double observation(int o, std::size_t next, int) const { return observation_table[next][o]; }

  std::pair<std::size_t, int> simulate(std::size_t s, int d, Rng& rng) const {
    double u = uniform01(rng);
    std::size_t next = 2;
    for (std::size_t k = 0; k < 3; ++k) {
      u -= transition_table[d][s][k];
      if (u < 0.0) {
        next = k;
        break;
      }
    }
    int o = uniform01(rng) < observation_table[next][0] ? 0 : 1;
    return {next, o};
  }
};

inline std::vector<double> particle_histogram(const ParticleSet<std::size_t>& p, std::size_t n) {
  std::vector<double> h(n, 0.0);
  for (std::size_t s : p.particles) h[s] += 1.0 / double(p.size());
  return h;
}

}  // namespace cage2::testing
