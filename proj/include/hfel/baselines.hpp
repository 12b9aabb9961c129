#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hfel/association.hpp"
#include "hfel/cost_model.hpp"
#include "hfel/resource_alloc.hpp"
#include "hfel/scenario.hpp"

// The scheduling scheme under test plus the six comparison schemes. Every
// scheme returns the same record so the harness can emit paired rows:
//   hfel            association search + optimal per-group allocation
//   random          seeded random association, optimal allocation
//   greedy          nearest-server association, optimal allocation
//   comp_opt        frequencies optimized, bandwidth split uniformly
//   comm_opt        bandwidth optimized, frequencies frozen at random draws
//   uniform         association search under uniform-bandwidth random-f policy
//   proportional    association search under inverse-distance-bandwidth policy
// comp_opt / comm_opt default to the greedy association and can also be
// evaluated on a caller-provided strategy (the *_hfel_assoc variants).

namespace hfel {

struct SchemeOutcome {
  std::string scheme;
  AssociationStrategy strategy;
  CostBreakdown system_cost;   // one global round, cloud uplinks included
  double edge_objective = 0.0; // summed weighted group costs (no cloud terms)
  int rounds = 0;
  long long accepted = 0;
  bool converged = true;
};

namespace detail {

inline SchemeOutcome finish_outcome(std::string name, AssociationStrategy strategy,
                                    const Scenario& scenario) {
  SchemeOutcome out;
  out.scheme = std::move(name);
  out.edge_objective = strategy.objective();
  out.system_cost = global_cost(strategy.group_allocations(), scenario.world, scenario.cfg);
  out.strategy = std::move(strategy);
  return out;
}

// Partition chosen by a fixed rule, each group solved to optimality.
inline AssociationStrategy solved_partition(const Scenario& scenario,
                                            const std::vector<int>& server_of,
                                            const SolverOptions& solver_opt) {
  const World& world = scenario.world;
  AssociationStrategy strategy;
  strategy.server_of = server_of;
  for (const EdgeServerProfile& s : world.servers) strategy.groups[s.id] = {};
  for (size_t dev = 0; dev < server_of.size(); ++dev)
    strategy.groups[server_of[dev]].push_back(static_cast<int>(dev));
  for (auto& [sid, members] : strategy.groups) {
    std::sort(members.begin(), members.end());
    if (members.empty()) {
      strategy.utilities[sid] = 0.0;
      continue;
    }
    AllocationSolution sol =
        solve_allocation(members, world, world.server(sid), scenario.cfg, solver_opt);
    strategy.utilities[sid] = -sol.cost.weighted;
    strategy.allocations[sid] = std::move(sol);
  }
  return strategy;
}

inline std::vector<int> nearest_assignment(const Scenario& scenario) {
  std::vector<int> server_of;
  for (const DeviceProfile& d : scenario.world.devices) {
    int chosen = -1;
    double best = 0.0;
    for (const EdgeServerProfile& s : scenario.world.servers) {
      if (s.available_devices.count(d.id) == 0) continue;
      const double l = scenario.distance(d.id, s.id);
      if (chosen < 0 || l < best) {
        chosen = s.id;
        best = l;
      }
    }
    if (chosen < 0) throw ScenarioError("device " + std::to_string(d.id) + " has no reachable server");
    server_of.push_back(chosen);
  }
  return server_of;
}

}  // namespace detail

inline SchemeOutcome run_hfel(const Scenario& scenario, const AssociationOptions& opt = {},
                              const SolverOptions& solver_opt = {}) {
  OptimalEvaluator inner(scenario.world, scenario.cfg, solver_opt);
  CachingEvaluator cache(inner);
  AssociationResult res = run_association(scenario, cache, opt);
  SchemeOutcome out = detail::finish_outcome("hfel", std::move(res.strategy), scenario);
  out.rounds = res.rounds;
  out.accepted = res.accepted;
  out.converged = res.converged;
  return out;
}

inline SchemeOutcome random_association(const Scenario& scenario, std::uint64_t seed,
                                        const SolverOptions& solver_opt = {}) {
  Prng rng = Prng::substream(seed, 0x7a2d);
  std::vector<int> server_of;
  for (const DeviceProfile& d : scenario.world.devices) {
    std::vector<int> candidates;
    for (const EdgeServerProfile& s : scenario.world.servers)
      if (s.available_devices.count(d.id)) candidates.push_back(s.id);
    if (candidates.empty())
      throw ScenarioError("device " + std::to_string(d.id) + " has no reachable server");
    server_of.push_back(candidates[rng.below(candidates.size())]);
  }
  return detail::finish_outcome("random", detail::solved_partition(scenario, server_of, solver_opt),
                                scenario);
}

inline SchemeOutcome greedy_association(const Scenario& scenario,
                                        const SolverOptions& solver_opt = {}) {
  return detail::finish_outcome(
      "greedy", detail::solved_partition(scenario, detail::nearest_assignment(scenario), solver_opt),
      scenario);
}

// Frequencies optimized per group, bandwidth fixed to an even split.
inline SchemeOutcome computation_only(const Scenario& scenario,
                                      const AssociationStrategy& base_strategy,
                                      const std::string& label = "comp_opt",
                                      const SolverOptions& solver_opt = {}) {
  const World& world = scenario.world;
  AssociationStrategy strategy;
  strategy.server_of = base_strategy.server_of;
  strategy.groups = base_strategy.groups;
  for (const auto& [sid, members] : strategy.groups) {
    if (members.empty()) {
      strategy.utilities[sid] = 0.0;
      continue;
    }
    std::vector<double> betas(members.size(), 1.0 / static_cast<double>(members.size()));
    AllocationSolution sol =
        solve_freq_only(members, world, world.server(sid), scenario.cfg, betas, solver_opt);
    strategy.utilities[sid] = -sol.cost.weighted;
    strategy.allocations[sid] = std::move(sol);
  }
  return detail::finish_outcome(label, std::move(strategy), scenario);
}

inline SchemeOutcome computation_only(const Scenario& scenario,
                                      const SolverOptions& solver_opt = {}) {
  return computation_only(
      scenario,
      detail::solved_partition(scenario, detail::nearest_assignment(scenario), solver_opt),
      "comp_opt", solver_opt);
}

// Bandwidth optimized per group, frequencies frozen at seeded uniform draws.
inline SchemeOutcome communication_only(const Scenario& scenario, std::uint64_t seed,
                                        const AssociationStrategy& base_strategy,
                                        const std::string& label = "comm_opt",
                                        const SolverOptions& solver_opt = {}) {
  const World& world = scenario.world;
  Prng rng = Prng::substream(seed, 0xc0c0);
  std::vector<double> frozen;
  for (const DeviceProfile& d : world.devices)
    frozen.push_back(rng.uniform(d.freq_min_hz, d.freq_max_hz));

  AssociationStrategy strategy;
  strategy.server_of = base_strategy.server_of;
  strategy.groups = base_strategy.groups;
  for (const auto& [sid, members] : strategy.groups) {
    if (members.empty()) {
      strategy.utilities[sid] = 0.0;
      continue;
    }
    std::vector<double> freqs;
    for (int id : members) freqs.push_back(frozen[static_cast<size_t>(id)]);
    AllocationSolution sol =
        solve_beta_only(members, world, world.server(sid), scenario.cfg, freqs, solver_opt);
    strategy.utilities[sid] = -sol.cost.weighted;
    strategy.allocations[sid] = std::move(sol);
  }
  return detail::finish_outcome(label, std::move(strategy), scenario);
}

inline SchemeOutcome communication_only(const Scenario& scenario, std::uint64_t seed,
                                        const SolverOptions& solver_opt = {}) {
  return communication_only(
      scenario, seed,
      detail::solved_partition(scenario, detail::nearest_assignment(scenario), solver_opt),
      "comm_opt", solver_opt);
}

// Association search under the scheme's own (non-optimizing) allocation rule.
inline SchemeOutcome uniform_allocation(const Scenario& scenario, std::uint64_t seed,
                                        AssociationOptions opt = {}) {
  opt.seed = seed;
  FixedPolicyEvaluator inner(scenario, scenario.cfg, FixedPolicyEvaluator::BandwidthPolicy::Uniform,
                             seed);
  CachingEvaluator cache(inner);
  AssociationResult res = run_association(scenario, cache, opt);
  SchemeOutcome out = detail::finish_outcome("uniform", std::move(res.strategy), scenario);
  out.rounds = res.rounds;
  out.accepted = res.accepted;
  out.converged = res.converged;
  return out;
}

inline SchemeOutcome proportional_allocation(const Scenario& scenario, std::uint64_t seed,
                                             AssociationOptions opt = {}) {
  opt.seed = seed;
  FixedPolicyEvaluator inner(scenario, scenario.cfg,
                             FixedPolicyEvaluator::BandwidthPolicy::InverseDistance, seed);
  CachingEvaluator cache(inner);
  AssociationResult res = run_association(scenario, cache, opt);
  SchemeOutcome out = detail::finish_outcome("proportional", std::move(res.strategy), scenario);
  out.rounds = res.rounds;
  out.accepted = res.accepted;
  out.converged = res.converged;
  return out;
}

}  // namespace hfel
