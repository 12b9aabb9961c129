#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "hfel/prng.hpp"
#include "hfel/resource_alloc.hpp"
#include "hfel/scenario.hpp"

// Device-to-server association search. Starting from a nearest-server or
// seeded random partition, single-device transfers and two-device exchanges
// are applied whenever they strictly reduce the summed group cost, until no
// move helps. Group evaluations are memoized per server, keyed by the member
// set, since the same composition recurs many times during the sweeps.

namespace hfel {

struct Evaluation {
  AllocationSolution alloc;  // empty maps for an empty group
  double utility = 0.0;      // minus the weighted group cost; 0 for empty groups
};

class GroupEvaluator {
 public:
  virtual ~GroupEvaluator() = default;
  // `members` is sorted.
  virtual Evaluation evaluate(int server_id, const std::vector<int>& members) = 0;
};

// Full joint optimization of frequencies and bandwidth per group.
class OptimalEvaluator : public GroupEvaluator {
 public:
  OptimalEvaluator(const World& world, const SystemConfig& cfg, SolverOptions opt = {})
      : world_(world), cfg_(cfg), opt_(opt) {}

  Evaluation evaluate(int server_id, const std::vector<int>& members) override {
    if (members.empty()) return {};
    Evaluation ev;
    ev.alloc = solve_allocation(members, world_, world_.server(server_id), cfg_, opt_);
    ev.utility = -ev.alloc.cost.weighted;
    return ev;
  }

 private:
  const World& world_;
  const SystemConfig& cfg_;
  SolverOptions opt_;
};

// Fixed-policy evaluation: no inner optimization, the allocation is a pure
// function of the membership (uniform or distance-proportional bandwidth,
// frozen per-device frequencies).
class FixedPolicyEvaluator : public GroupEvaluator {
 public:
  enum class BandwidthPolicy { Uniform, InverseDistance };

  FixedPolicyEvaluator(const Scenario& scenario, const SystemConfig& cfg, BandwidthPolicy policy,
                       std::uint64_t seed)
      : scenario_(scenario), cfg_(cfg), policy_(policy) {
    Prng rng = Prng::substream(seed, 0xf1d0);
    for (const DeviceProfile& d : scenario.world.devices)
      frozen_freq_.push_back(rng.uniform(d.freq_min_hz, d.freq_max_hz));
  }

  const std::vector<double>& frozen_frequencies() const { return frozen_freq_; }

  Evaluation evaluate(int server_id, const std::vector<int>& members) override {
    if (members.empty()) return {};
    GroupAllocation alloc;
    alloc.server_id = server_id;
    alloc.members = members;
    double total = 0.0;
    std::vector<double> share(members.size());
    for (size_t i = 0; i < members.size(); ++i) {
      if (policy_ == BandwidthPolicy::Uniform) {
        share[i] = 1.0;
      } else {
        const double l = std::max(scenario_.distance(members[i], server_id), 1e-9);
        share[i] = 1.0 / l;
      }
      total += share[i];
    }
    for (size_t i = 0; i < members.size(); ++i) {
      alloc.freqs[members[i]] = frozen_freq_[static_cast<size_t>(members[i])];
      alloc.betas[members[i]] = share[i] / total;
    }
    Evaluation ev;
    ev.alloc.freqs = alloc.freqs;
    ev.alloc.betas = alloc.betas;
    ev.alloc.cost = group_cost(alloc, scenario_.world, cfg_);
    ev.utility = -ev.alloc.cost.weighted;
    return ev;
  }

 private:
  const Scenario& scenario_;
  const SystemConfig& cfg_;
  BandwidthPolicy policy_;
  std::vector<double> frozen_freq_;
};

// Memoizing wrapper: one history map per server, keyed by the member set.
class CachingEvaluator : public GroupEvaluator {
 public:
  explicit CachingEvaluator(GroupEvaluator& inner) : inner_(inner) {}

  Evaluation evaluate(int server_id, const std::vector<int>& members) override {
    auto& history = history_[server_id];
    auto it = history.find(members);
    if (it != history.end()) {
      ++hits_;
      return it->second;
    }
    ++misses_;
    Evaluation ev = inner_.evaluate(server_id, members);
    history.emplace(members, ev);
    return ev;
  }

  long long hits() const { return hits_; }
  long long misses() const { return misses_; }

 private:
  GroupEvaluator& inner_;
  std::map<int, std::map<std::vector<int>, Evaluation>> history_;
  long long hits_ = 0;
  long long misses_ = 0;
};

struct AssociationStrategy {
  std::map<int, std::vector<int>> groups;  // server -> sorted members
  std::map<int, AllocationSolution> allocations;
  std::map<int, double> utilities;
  std::vector<int> server_of;  // device -> server

  // Summed weighted group cost (the quantity the search minimizes).
  double objective() const {
    double total = 0.0;
    for (const auto& [sid, u] : utilities) total -= u;
    return total;
  }

  std::vector<GroupAllocation> group_allocations() const {
    std::vector<GroupAllocation> out;
    for (const auto& [sid, members] : groups) {
      GroupAllocation g;
      g.server_id = sid;
      g.members = members;
      if (!members.empty()) {
        const AllocationSolution& sol = allocations.at(sid);
        g.freqs = sol.freqs;
        g.betas = sol.betas;
      }
      out.push_back(std::move(g));
    }
    return out;
  }
};

struct AssociationOptions {
  enum class Init { Nearest, Random };
  Init init = Init::Nearest;
  std::uint64_t seed = 1;
  int min_donor_size = 3;        // a transfer donor must keep strictly more than two members
  int exchanges_per_round = -1;  // randomized attempts per round; -1 means one per device
  int max_rounds = 10000;
  double min_gain = 1e-9;        // strict improvement threshold for accepting a move
};

enum class MoveStatus {
  Accepted,
  NoGain,
  SameGroup,
  DonorTooSmall,
  NotAvailable,
};

struct MoveOutcome {
  MoveStatus status = MoveStatus::NoGain;
  double gain = 0.0;
  bool accepted() const { return status == MoveStatus::Accepted; }
};

struct TraceRow {
  int round = 0;
  char kind = 'T';  // 'T' transfer, 'X' exchange
  int device_a = -1;
  int device_b = -1;  // -1 for transfers
  int server_from = -1;
  int server_to = -1;
  double gain = 0.0;
  double objective_after = 0.0;
};

struct AssociationResult {
  AssociationStrategy strategy;
  std::vector<TraceRow> trace;
  bool converged = false;
  int rounds = 0;
  long long accepted = 0;
};

namespace detail {

inline std::vector<int> without(const std::vector<int>& sorted, int id) {
  std::vector<int> out;
  out.reserve(sorted.size() - 1);
  for (int v : sorted)
    if (v != id) out.push_back(v);
  return out;
}

inline std::vector<int> with(const std::vector<int>& sorted, int id) {
  std::vector<int> out;
  out.reserve(sorted.size() + 1);
  bool placed = false;
  for (int v : sorted) {
    if (!placed && id < v) {
      out.push_back(id);
      placed = true;
    }
    out.push_back(v);
  }
  if (!placed) out.push_back(id);
  return out;
}

inline void apply_group(AssociationStrategy& strategy, int server_id, std::vector<int> members,
                        const Evaluation& ev) {
  strategy.groups[server_id] = std::move(members);
  strategy.allocations[server_id] = ev.alloc;
  strategy.utilities[server_id] = ev.utility;
}

}  // namespace detail

inline AssociationStrategy initialize_association(const Scenario& scenario,
                                                  GroupEvaluator& evaluator,
                                                  const AssociationOptions& opt) {
  const World& world = scenario.world;
  AssociationStrategy strategy;
  strategy.server_of.assign(world.devices.size(), -1);
  for (const EdgeServerProfile& s : world.servers) strategy.groups[s.id] = {};

  Prng rng = Prng::substream(opt.seed, 0xa550);
  for (const DeviceProfile& d : world.devices) {
    std::vector<int> candidates;
    for (const EdgeServerProfile& s : world.servers)
      if (s.available_devices.count(d.id)) candidates.push_back(s.id);
    if (candidates.empty())
      throw ScenarioError("device " + std::to_string(d.id) + " has no reachable server");
    int chosen;
    if (opt.init == AssociationOptions::Init::Random) {
      chosen = candidates[rng.below(candidates.size())];
    } else {
      chosen = candidates[0];
      double best = scenario.distance(d.id, chosen);
      for (int sid : candidates) {
        const double l = scenario.distance(d.id, sid);
        if (l < best) {
          best = l;
          chosen = sid;
        }
      }
    }
    strategy.groups[chosen].push_back(d.id);
    strategy.server_of[static_cast<size_t>(d.id)] = chosen;
  }
  for (auto& [sid, members] : strategy.groups) {
    std::sort(members.begin(), members.end());
    const Evaluation ev = evaluator.evaluate(sid, members);
    strategy.allocations[sid] = ev.alloc;
    strategy.utilities[sid] = ev.utility;
  }
  return strategy;
}

// Moves device `device` to server `to` if the summed utility strictly
// improves. The strategy is updated in place on acceptance.
inline MoveOutcome try_transfer(AssociationStrategy& strategy, int device, int to,
                                const Scenario& scenario, GroupEvaluator& evaluator,
                                const AssociationOptions& opt) {
  const int from = strategy.server_of.at(static_cast<size_t>(device));
  if (from == to) return {MoveStatus::SameGroup, 0.0};
  if (scenario.world.server(to).available_devices.count(device) == 0)
    return {MoveStatus::NotAvailable, 0.0};
  const std::vector<int>& donor = strategy.groups.at(from);
  if (static_cast<int>(donor.size()) < opt.min_donor_size)
    return {MoveStatus::DonorTooSmall, 0.0};

  const std::vector<int> donor_after = detail::without(donor, device);
  const std::vector<int> receiver_after = detail::with(strategy.groups.at(to), device);
  const Evaluation donor_ev = evaluator.evaluate(from, donor_after);
  const Evaluation receiver_ev = evaluator.evaluate(to, receiver_after);
  const double gain = donor_ev.utility + receiver_ev.utility -
                      (strategy.utilities.at(from) + strategy.utilities.at(to));
  if (!(gain > opt.min_gain)) return {MoveStatus::NoGain, gain};

  detail::apply_group(strategy, from, donor_after, donor_ev);
  detail::apply_group(strategy, to, receiver_after, receiver_ev);
  strategy.server_of[static_cast<size_t>(device)] = to;
  return {MoveStatus::Accepted, gain};
}

// Swaps two devices between their groups if the summed utility strictly
// improves.
inline MoveOutcome try_exchange(AssociationStrategy& strategy, int device_a, int device_b,
                                const Scenario& scenario, GroupEvaluator& evaluator,
                                const AssociationOptions& opt) {
  const int sa = strategy.server_of.at(static_cast<size_t>(device_a));
  const int sb = strategy.server_of.at(static_cast<size_t>(device_b));
  if (sa == sb) return {MoveStatus::SameGroup, 0.0};
  if (scenario.world.server(sb).available_devices.count(device_a) == 0 ||
      scenario.world.server(sa).available_devices.count(device_b) == 0)
    return {MoveStatus::NotAvailable, 0.0};

  const std::vector<int> a_after = detail::with(detail::without(strategy.groups.at(sa), device_a), device_b);
  const std::vector<int> b_after = detail::with(detail::without(strategy.groups.at(sb), device_b), device_a);
  const Evaluation a_ev = evaluator.evaluate(sa, a_after);
  const Evaluation b_ev = evaluator.evaluate(sb, b_after);
  const double gain =
      a_ev.utility + b_ev.utility - (strategy.utilities.at(sa) + strategy.utilities.at(sb));
  if (!(gain > opt.min_gain)) return {MoveStatus::NoGain, gain};

  detail::apply_group(strategy, sa, a_after, a_ev);
  detail::apply_group(strategy, sb, b_after, b_ev);
  strategy.server_of[static_cast<size_t>(device_a)] = sb;
  strategy.server_of[static_cast<size_t>(device_b)] = sa;
  return {MoveStatus::Accepted, gain};
}

// Local search to a stable point. Each round: a deterministic sweep of all
// (device, target server) transfers in index order, then a batch of seeded
// random exchange attempts. A round that accepts nothing triggers the full
// deterministic exchange sweep; only when that also accepts nothing is the
// strategy declared stable.
inline AssociationResult run_association(const Scenario& scenario, GroupEvaluator& evaluator,
                                         const AssociationOptions& opt) {
  AssociationResult result;
  AssociationStrategy& strategy = result.strategy;
  strategy = initialize_association(scenario, evaluator, opt);

  const int num_devices = static_cast<int>(scenario.world.devices.size());
  const int num_servers = static_cast<int>(scenario.world.servers.size());
  const int exchange_attempts = opt.exchanges_per_round < 0 ? num_devices : opt.exchanges_per_round;
  Prng exchange_rng = Prng::substream(opt.seed, 0xe8c);

  auto record = [&](int round, char kind, int da, int db, int sf, int st, double gain) {
    ++result.accepted;
    result.trace.push_back({round, kind, da, db, sf, st, gain, strategy.objective()});
  };

  for (result.rounds = 1; result.rounds <= opt.max_rounds; ++result.rounds) {
    long long accepted_this_round = 0;

    for (int dev = 0; dev < num_devices; ++dev) {
      for (int target = 0; target < num_servers; ++target) {
        const int from = strategy.server_of[static_cast<size_t>(dev)];
        if (target == from) continue;
        const MoveOutcome out = try_transfer(strategy, dev, target, scenario, evaluator, opt);
        if (out.accepted()) {
          ++accepted_this_round;
          record(result.rounds, 'T', dev, -1, from, target, out.gain);
        }
      }
    }

    for (int attempt = 0; attempt < exchange_attempts; ++attempt) {
      const int a = static_cast<int>(exchange_rng.below(static_cast<std::uint64_t>(num_devices)));
      const int b = static_cast<int>(exchange_rng.below(static_cast<std::uint64_t>(num_devices)));
      if (a == b) continue;
      const int sa = strategy.server_of[static_cast<size_t>(a)];
      const int sb = strategy.server_of[static_cast<size_t>(b)];
      const MoveOutcome out = try_exchange(strategy, a, b, scenario, evaluator, opt);
      if (out.accepted()) {
        ++accepted_this_round;
        record(result.rounds, 'X', a, b, sa, sb, out.gain);
      }
    }

    if (accepted_this_round == 0) {
      long long certified = 0;
      for (int a = 0; a < num_devices && certified == 0; ++a) {
        for (int b = a + 1; b < num_devices; ++b) {
          const int sa = strategy.server_of[static_cast<size_t>(a)];
          const int sb = strategy.server_of[static_cast<size_t>(b)];
          if (sa == sb) continue;
          const MoveOutcome out = try_exchange(strategy, a, b, scenario, evaluator, opt);
          if (out.accepted()) {
            ++certified;
            record(result.rounds, 'X', a, b, sa, sb, out.gain);
            break;  // state changed: restart the outer loop
          }
        }
      }
      if (certified == 0) {
        result.converged = true;
        return result;
      }
    }
  }
  result.rounds = opt.max_rounds;
  result.converged = false;  // cap reached; best-so-far strategy returned
  return result;
}

struct AuditReport {
  long long improving_moves = 0;
  long long checked = 0;
  double best_gain = 0.0;  // most positive gain found (0 when stable)
};

// Exhaustively re-tests every feasible transfer and exchange at a strategy
// without modifying it.
inline AuditReport audit_stability(const AssociationStrategy& strategy, const Scenario& scenario,
                                   GroupEvaluator& evaluator, const AssociationOptions& opt) {
  AuditReport report;
  const World& world = scenario.world;
  auto probe = [&](int sid, const std::vector<int>& members) {
    return evaluator.evaluate(sid, members).utility;
  };

  for (const DeviceProfile& d : world.devices) {
    const int from = strategy.server_of.at(static_cast<size_t>(d.id));
    const std::vector<int>& donor = strategy.groups.at(from);
    if (static_cast<int>(donor.size()) < opt.min_donor_size) continue;
    for (const EdgeServerProfile& s : world.servers) {
      if (s.id == from || s.available_devices.count(d.id) == 0) continue;
      ++report.checked;
      const double gain = probe(from, detail::without(donor, d.id)) +
                          probe(s.id, detail::with(strategy.groups.at(s.id), d.id)) -
                          (strategy.utilities.at(from) + strategy.utilities.at(s.id));
      report.best_gain = std::max(report.best_gain, gain);
      if (gain > opt.min_gain) ++report.improving_moves;
    }
  }

  const int num_devices = static_cast<int>(world.devices.size());
  for (int a = 0; a < num_devices; ++a) {
    for (int b = a + 1; b < num_devices; ++b) {
      const int sa = strategy.server_of.at(static_cast<size_t>(a));
      const int sb = strategy.server_of.at(static_cast<size_t>(b));
      if (sa == sb) continue;
      if (world.server(sb).available_devices.count(a) == 0 ||
          world.server(sa).available_devices.count(b) == 0)
        continue;
      ++report.checked;
      const double gain =
          probe(sa, detail::with(detail::without(strategy.groups.at(sa), a), b)) +
          probe(sb, detail::with(detail::without(strategy.groups.at(sb), b), a)) -
          (strategy.utilities.at(sa) + strategy.utilities.at(sb));
      report.best_gain = std::max(report.best_gain, gain);
      if (gain > opt.min_gain) ++report.improving_moves;
    }
  }
  return report;
}

}  // namespace hfel
