#pragma once

// Fixed attacker strategies. Both are functions of the current true state
// only: no attacker memory is carried between steps.

#include "cage2/dynamics.hpp"

#include <algorithm>
#include <deque>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace cage2 {

enum class AttackerStrategyId : std::uint8_t { BLine, Meander };

inline std::string to_string(AttackerStrategyId id) { return id == AttackerStrategyId::BLine ? "bline" : "meander"; }

inline AttackerStrategyId parse_attacker_id(const std::string& name) {
  if (name == "bline" || name == "b-line" || name == "BLine") return AttackerStrategyId::BLine;
  if (name == "meander" || name == "Meander") return AttackerStrategyId::Meander;
  throw std::invalid_argument("unknown attacker strategy '" + name + "'");
}

// P(Pi_A) as weights over {BLine, Meander}.
struct AttackerDistribution {
  double bline = 1.0;
  double meander = 0.0;

  static AttackerDistribution point(AttackerStrategyId id) {
    return id == AttackerStrategyId::BLine ? AttackerDistribution{1.0, 0.0} : AttackerDistribution{0.0, 1.0};
  }
  bool valid() const {
    return bline >= 0.0 && meander >= 0.0 && std::abs(bline + meander - 1.0) < 1e-9;
  }
};

inline AttackerStrategyId sample_attacker(const AttackerDistribution& dist, Rng& rng) {
  if (!dist.valid()) throw std::invalid_argument("attacker distribution weights must be nonnegative and sum to 1");
  if (dist.meander == 0.0) return AttackerStrategyId::BLine;
  if (dist.bline == 0.0) return AttackerStrategyId::Meander;
  return uniform01(rng) < dist.bline ? AttackerStrategyId::BLine : AttackerStrategyId::Meander;
}

// Which scanned service the attacker exploits. In priority mode, services are
// ranked by the access they appear to grant (S before U before N), ties by
// position in `priority`. A decoy appears to grant the best access that
// service grants anywhere in the scenario, so decoys are picked like the real
// thing. Uniform mode picks any scanned service with equal probability.
struct ExploitSelectionPolicy {
  enum class Mode : std::uint8_t { Priority, Uniform };
  Mode mode = Mode::Priority;
  std::vector<ServiceIndex> priority;  // permutation of the scenario services

  static ExploitSelectionPolicy defaults(const Scenario& s) {
    ExploitSelectionPolicy p;
    p.priority.resize(s.service_count());
    std::iota(p.priority.begin(), p.priority.end(), ServiceIndex{0});
    return p;
  }

  static ExploitSelectionPolicy uniform(const Scenario& s) {
    auto p = defaults(s);
    p.mode = Mode::Uniform;
    return p;
  }

  bool valid(const Scenario& s) const {
    if (priority.size() != s.service_count()) return false;
    std::vector<bool> seen(s.service_count(), false);
    for (ServiceIndex e : priority) {
      if (e >= s.service_count() || seen[e]) return false;
      seen[e] = true;
    }
    return true;
  }
};

// Access that service e appears to grant on host h.
inline ServiceAccess apparent_access(const Scenario& s, HostIndex h, ServiceIndex e) {
  ServiceAccess real = s.access(h, e);
  if (real != ServiceAccess::kNotAService) return real;
  ServiceAccess best = ServiceAccess::kNone;
  for (HostIndex other = 0; other < s.host_count(); ++other) {
    ServiceAccess a = s.access(other, e);
    if (a != ServiceAccess::kNotAService && access_rank(a) > access_rank(best)) best = a;
  }
  return best;
}

// Returns nullopt when nothing has been scanned on h.
inline std::optional<ServiceIndex> select_exploit(const Scenario& s, const HostState& host, HostIndex h,
                                                  const ExploitSelectionPolicy& sel, Rng* rng) {
  if (host.scanned.empty()) return std::nullopt;
  if (sel.mode == ExploitSelectionPolicy::Mode::Uniform && rng != nullptr) {
    std::vector<ServiceIndex> options;
    for (ServiceIndex e = 0; e < s.service_count(); ++e)
      if (host.scanned.contains(e)) options.push_back(e);
    return options[uniform_index(*rng, options.size())];
  }
  std::optional<ServiceIndex> best;
  int best_rank = -1;
  for (ServiceIndex e : sel.priority) {
    if (!host.scanned.contains(e)) continue;
    int rank = access_rank(apparent_access(s, h, e));
    if (rank > best_rank) {
      best_rank = rank;
      best = e;
    }
  }
  return best;
}

namespace detail {

// One step of local progress on a known, not yet privileged host.
inline AttackerAction advance_host(const Scenario& s, const State& st, HostIndex h,
                                   const ExploitSelectionPolicy& sel, Rng* rng) {
  switch (st[h].access) {
    case AccessState::Known:
      return AttackerAction::scan(h);
    case AccessState::Scanned:
      if (auto e = select_exploit(s, st[h], h, sel, rng)) return AttackerAction::exploit(*e, h);
      return AttackerAction::scan(h);
    case AccessState::UserExploit:
    case AccessState::RootExploit:
      return AttackerAction::escalate(h);
    default:
      return AttackerAction::interrupt(h);
  }
}

inline bool foothold(AccessState a) { return a == AccessState::Privileged || a == AccessState::Interrupted; }

}  // namespace detail

// The B-LINE kill chain: the shortest host path from the entry subnet to the
// target, where h can be followed by g_M(h) or by any host sharing its subnet
// (reached through Discover once h is privileged). Ties go to scenario order.
inline std::vector<HostIndex> bline_path(const Scenario& s) {
  const std::size_t n = s.host_count();
  std::vector<std::optional<HostIndex>> parent(n);
  std::vector<bool> seen(n, false);
  std::deque<HostIndex> queue;
  for (HostIndex h = 0; h < n; ++h) {
    if (s.subnet_of(h) == s.entry_subnet()) {
      seen[h] = true;
      queue.push_back(h);
    }
  }
  while (!queue.empty()) {
    HostIndex h = queue.front();
    queue.pop_front();
    if (h == s.target_host()) break;
    auto visit = [&](HostIndex next) {
      if (seen[next]) return;
      seen[next] = true;
      parent[next] = h;
      queue.push_back(next);
    };
    if (auto c = s.connectivity_of(h)) visit(*c);
    for (HostIndex other = 0; other < n; ++other)
      if (s.subnet_of(other) == s.subnet_of(h)) visit(other);
  }
  if (!seen[s.target_host()]) return {};
  std::vector<HostIndex> path;
  for (std::optional<HostIndex> h = s.target_host(); h; h = parent[*h]) path.push_back(*h);
  std::reverse(path.begin(), path.end());
  return path;
}

// Works on the deepest host of the kill chain the attacker still knows about.
// If the defender pushed that host back to S, it is simply exploited again.
inline AttackerAction bline_action(const Scenario& s, const std::vector<HostIndex>& path, const State& st,
                                   const ExploitSelectionPolicy& sel, Rng* rng = nullptr) {
  if (path.empty()) return AttackerAction::discover(s.entry_subnet());
  std::optional<std::size_t> deepest;
  for (std::size_t i = path.size(); i-- > 0;) {
    if (st[path[i]].access != AccessState::Hidden) {
      deepest = i;
      break;
    }
  }
  if (!deepest) return AttackerAction::discover(s.subnet_of(path.front()));

  const HostIndex h = path[*deepest];
  const AccessState acc = st[h].access;
  if (acc == AccessState::Privileged || acc == AccessState::Interrupted) {
    if (h == s.target_host()) return AttackerAction::interrupt(h);
    // Next hop still hidden: it is either revealed by g_M during this step or
    // needs a Discover of its subnet.
    return AttackerAction::discover(s.subnet_of(path[*deepest + 1]));
  }
  return detail::advance_host(s, st, h, sel, rng);
}

inline AttackerAction bline_action(const Scenario& s, const State& st, const ExploitSelectionPolicy& sel) {
  return bline_action(s, bline_path(s), st, sel, nullptr);
}

// Breadth-first exploration. Priority: interrupt the target once privileged;
// otherwise discover any subnet that has hidden hosts and can be discovered;
// otherwise advance a uniformly chosen known host that is not yet privileged,
// in the first subnet (from the deepest foothold subnet onwards) that still
// has such hosts.
inline AttackerAction meander_action(const Scenario& s, const State& st, const ExploitSelectionPolicy& sel,
                                     Rng& rng) {
  const HostIndex target = s.target_host();
  if (detail::foothold(st[target].access)) return AttackerAction::interrupt(target);

  for (SubnetId z : s.subnets()) {
    bool has_hidden = false, has_foothold = false;
    for (HostIndex h = 0; h < s.host_count(); ++h) {
      if (s.subnet_of(h) != z) continue;
      has_hidden |= st[h].access == AccessState::Hidden;
      has_foothold |= detail::foothold(st[h].access);
    }
    if (has_hidden && (z == s.entry_subnet() || has_foothold)) return AttackerAction::discover(z);
  }

  std::size_t first = 0;
  for (HostIndex h = 0; h < s.host_count(); ++h)
    if (detail::foothold(st[h].access)) first = std::max(first, s.subnet_position(s.subnet_of(h)));

  for (std::size_t zi = first; zi < s.subnet_count(); ++zi) {
    std::vector<HostIndex> pending;
    for (HostIndex h = 0; h < s.host_count(); ++h) {
      if (s.subnet_position(s.subnet_of(h)) != zi) continue;
      AccessState a = st[h].access;
      if (a == AccessState::Known || a == AccessState::Scanned || a == AccessState::UserExploit ||
          a == AccessState::RootExploit)
        pending.push_back(h);
    }
    if (!pending.empty()) {
      HostIndex h = pending[uniform_index(rng, pending.size())];
      return detail::advance_host(s, st, h, sel, &rng);
    }
  }
  return AttackerAction::discover(s.entry_subnet());
}

// Bundles a strategy id with its selection policy; usable as the attacker
// callable of step().
class AttackerStrategy {
 public:
  AttackerStrategy(const Scenario& s, AttackerStrategyId id, ExploitSelectionPolicy sel)
      : id_(id), selection_(std::move(sel)), path_(bline_path(s)) {
    if (!selection_.valid(s)) throw std::invalid_argument("exploit priority must be a permutation of the services");
  }
  AttackerStrategy(const Scenario& s, AttackerStrategyId id)
      : AttackerStrategy(s, id, ExploitSelectionPolicy::defaults(s)) {}

  AttackerStrategyId id() const { return id_; }
  const ExploitSelectionPolicy& selection() const { return selection_; }

  AttackerAction operator()(const Scenario& s, const State& st, Rng& rng) const {
    if (id_ == AttackerStrategyId::BLine) return bline_action(s, path_, st, selection_, &rng);
    return meander_action(s, st, selection_, rng);
  }

 private:
  AttackerStrategyId id_;
  ExploitSelectionPolicy selection_;
  std::vector<HostIndex> path_;
};

}  // namespace cage2
