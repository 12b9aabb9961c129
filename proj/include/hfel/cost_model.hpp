#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "hfel/types.hpp"

// Pure per-round cost formulas: computation delay/energy of local training,
// uplink delay/energy of model transmission, and their aggregation into group
// and system costs for one global round. All logarithms are natural; model
// sizes and rates are in nats.

namespace hfel {

// Number of local gradient passes needed to reach the local accuracy target.
inline double local_iteration_count(const SystemConfig& cfg) {
  validate(cfg);
  return cfg.local_iter_scale * std::log(1.0 / cfg.local_accuracy);
}

// Number of edge aggregation rounds needed to reach the edge accuracy target.
inline double edge_iteration_count(const SystemConfig& cfg) {
  validate(cfg);
  if (cfg.local_accuracy == 1.0)
    throw ConstraintError("edge_iteration_count: local_accuracy = 1 is degenerate");
  return cfg.edge_iter_scale * std::log(1.0 / cfg.edge_accuracy) / (1.0 - cfg.local_accuracy);
}

inline void check_freq_bounds(const DeviceProfile& dev, double freq_hz) {
  if (!(freq_hz >= dev.freq_min_hz && freq_hz <= dev.freq_max_hz))
    throw ConstraintError("frequency " + std::to_string(freq_hz) + " outside [" +
                          std::to_string(dev.freq_min_hz) + ", " + std::to_string(dev.freq_max_hz) +
                          "] for device " + std::to_string(dev.id));
}

// Delay of all local passes of one edge round at CPU frequency freq_hz.
inline double comp_delay_s(const DeviceProfile& dev, double freq_hz, const SystemConfig& cfg) {
  check_freq_bounds(dev, freq_hz);
  return local_iteration_count(cfg) * dev.cycles_per_local_pass() / freq_hz;
}

// Energy of all local passes of one edge round.
inline double comp_energy_j(const DeviceProfile& dev, double freq_hz, const SystemConfig& cfg) {
  check_freq_bounds(dev, freq_hz);
  return local_iteration_count(cfg) * 0.5 * dev.capacitance * freq_hz * freq_hz *
         dev.cycles_per_local_pass();
}

// Achievable uplink rate for a bandwidth share beta of the server's band.
inline double tx_rate_nats(const DeviceProfile& dev, double beta, const EdgeServerProfile& server,
                           const SystemConfig& cfg) {
  if (!(beta > 0.0 && beta <= 1.0))
    throw ConstraintError("bandwidth share " + std::to_string(beta) + " outside (0,1]");
  const double snr = dev.gain_for(server.id) * dev.tx_power_w / cfg.noise_w;
  return beta * server.bandwidth_hz * std::log1p(snr);
}

struct CommCost {
  double delay_s = 0.0;
  double energy_j = 0.0;
};

// Delay and energy of uploading one model update to the server.
inline CommCost comm_cost(const DeviceProfile& dev, double beta, const EdgeServerProfile& server,
                          const SystemConfig& cfg) {
  const double rate = tx_rate_nats(dev, beta, server, cfg);
  const double delay = dev.update_nats / rate;
  return {delay, delay * dev.tx_power_w};
}

// Energy and bottleneck delay of one server's training group across all edge
// rounds. Energy adds over members; delay is set by the slowest member.
inline CostBreakdown group_cost(const GroupAllocation& alloc, const World& world,
                                const SystemConfig& cfg) {
  validate(alloc, world);
  const EdgeServerProfile& server = world.server(alloc.server_id);
  const double rounds = edge_iteration_count(cfg);
  double energy_sum = 0.0;
  double worst = 0.0;
  for (int id : alloc.members) {
    const DeviceProfile& dev = world.device(id);
    const double f = alloc.freqs.at(id);
    const double beta = alloc.betas.at(id);
    const CommCost com = comm_cost(dev, beta, server, cfg);
    energy_sum += com.energy_j + comp_energy_j(dev, f, cfg);
    worst = std::max(worst, com.delay_s + comp_delay_s(dev, f, cfg));
  }
  return make_cost(rounds * energy_sum, rounds * worst, cfg);
}

// Cloud-uplink cost of one server after its edge rounds complete.
inline CommCost cloud_upload_cost(const EdgeServerProfile& server) {
  const double delay = server.cloud_update_nats / server.cloud_rate_nats;
  return {delay, delay * server.cloud_power_w};
}

// System-wide energy and delay of one global round. `groups` must partition
// the full device set; servers with empty groups contribute nothing (they
// have no aggregate to upload).
inline CostBreakdown global_cost(const std::vector<GroupAllocation>& groups, const World& world,
                                 const SystemConfig& cfg) {
  std::vector<char> seen(world.devices.size(), 0);
  size_t assigned = 0;
  for (const GroupAllocation& g : groups) {
    for (int id : g.members) {
      if (id < 0 || static_cast<size_t>(id) >= world.devices.size() || seen[static_cast<size_t>(id)])
        throw ScenarioError("groups do not form a partition: device " + std::to_string(id) +
                            " repeated or unknown");
      seen[static_cast<size_t>(id)] = 1;
      ++assigned;
    }
  }
  if (assigned != world.devices.size())
    throw ScenarioError("groups do not form a partition: " + std::to_string(assigned) + " of " +
                        std::to_string(world.devices.size()) + " devices assigned");

  double energy_sum = 0.0;
  double worst = 0.0;
  for (const GroupAllocation& g : groups) {
    if (g.members.empty()) continue;
    const CostBreakdown edge = group_cost(g, world, cfg);
    const CommCost cloud = cloud_upload_cost(world.server(g.server_id));
    energy_sum += edge.energy_j + cloud.energy_j;
    worst = std::max(worst, edge.delay_s + cloud.delay_s);
  }
  return make_cost(energy_sum, worst, cfg);
}

}  // namespace hfel
