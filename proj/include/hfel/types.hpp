#pragma once

#include <cmath>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace hfel {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A value violates a model invariant or an operation precondition.
class ConstraintError : public Error {
 public:
  using Error::Error;
};

// A scenario is structurally unusable (orphan device, bad geometry, broken
// partition).
class ScenarioError : public Error {
 public:
  using Error::Error;
};

// The closed-form bandwidth rule is undefined for the given weights.
class DegenerateWeightsError : public Error {
 public:
  using Error::Error;
};

// Unparseable scenario/config input; message names the offending field.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Training iterate diverged (step size too large).
class StepSizeError : public Error {
 public:
  using Error::Error;
};

// Accuracy targets, iteration-model constants and objective weights shared by
// the whole system.
struct SystemConfig {
  double local_accuracy = 0.9;   // in (0,1); smaller is stricter
  double edge_accuracy = 0.9;    // in (0,1)
  double local_iter_scale = 1.0; // multiplier of the local-iteration count
  double edge_iter_scale = 1.0;  // multiplier of the edge-round count
  double energy_weight = 0.5;    // >= 0
  double delay_weight = 0.5;     // >= 0, energy_weight + delay_weight > 0
  double noise_w = 1e-8;         // background noise power, watts
};

inline void validate(const SystemConfig& cfg) {
  auto fail = [](const std::string& what) { throw ConstraintError("SystemConfig: " + what); };
  if (!(cfg.local_accuracy > 0.0 && cfg.local_accuracy < 1.0)) fail("local_accuracy must lie in (0,1)");
  if (!(cfg.edge_accuracy > 0.0 && cfg.edge_accuracy < 1.0)) fail("edge_accuracy must lie in (0,1)");
  if (!(cfg.local_iter_scale > 0.0)) fail("local_iter_scale must be positive");
  if (!(cfg.edge_iter_scale > 0.0)) fail("edge_iter_scale must be positive");
  if (cfg.energy_weight < 0.0) fail("energy_weight must be nonnegative");
  if (cfg.delay_weight < 0.0) fail("delay_weight must be nonnegative");
  if (!(cfg.energy_weight + cfg.delay_weight > 0.0)) fail("at least one objective weight must be positive");
  if (!(cfg.noise_w > 0.0)) fail("noise_w must be positive");
}

// One mobile device. channel_gain holds the frozen link gain towards every
// candidate server (the gain depends on the device-server distance, so it is
// stored per pair).
struct DeviceProfile {
  int id = -1;
  double cycles_per_sample = 0.0;  // CPU cycles to process one sample
  double num_samples = 0.0;        // local dataset size
  double freq_min_hz = 0.0;
  double freq_max_hz = 0.0;
  double capacitance = 0.0;        // chipset coefficient; energy/cycle = capacitance/2 * f^2
  double tx_power_w = 0.0;
  double update_nats = 0.0;        // size of one model update
  std::map<int, double> channel_gain;  // server id -> gain

  double cycles_per_local_pass() const { return cycles_per_sample * num_samples; }

  double gain_for(int server_id) const {
    auto it = channel_gain.find(server_id);
    if (it == channel_gain.end())
      throw ConstraintError("device " + std::to_string(id) + " has no channel gain for server " +
                            std::to_string(server_id));
    return it->second;
  }
};

inline void validate(const DeviceProfile& d) {
  auto fail = [&](const std::string& what) {
    throw ConstraintError("DeviceProfile " + std::to_string(d.id) + ": " + what);
  };
  if (!(d.cycles_per_sample > 0.0)) fail("cycles_per_sample must be positive");
  if (!(d.num_samples > 0.0)) fail("num_samples must be positive");
  if (!(d.freq_min_hz > 0.0)) fail("freq_min_hz must be positive");
  if (!(d.freq_max_hz >= d.freq_min_hz)) fail("freq_max_hz must be >= freq_min_hz");
  if (!(d.capacitance > 0.0)) fail("capacitance must be positive");
  if (!(d.tx_power_w > 0.0)) fail("tx_power_w must be positive");
  if (!(d.update_nats > 0.0)) fail("update_nats must be positive");
  for (const auto& [sid, g] : d.channel_gain)
    if (!(g > 0.0)) fail("channel gain for server " + std::to_string(sid) + " must be positive");
}

// One edge server plus its uplink to the cloud.
struct EdgeServerProfile {
  int id = -1;
  double bandwidth_hz = 0.0;
  double cloud_rate_nats = 5e6;      // uplink rate to the cloud, nats/s
  double cloud_power_w = 1.0;        // uplink transmit power
  double cloud_update_nats = 25000;  // size of the aggregated update
  std::set<int> available_devices;
};

inline void validate(const EdgeServerProfile& s) {
  auto fail = [&](const std::string& what) {
    throw ConstraintError("EdgeServerProfile " + std::to_string(s.id) + ": " + what);
  };
  if (!(s.bandwidth_hz > 0.0)) fail("bandwidth_hz must be positive");
  if (!(s.cloud_rate_nats > 0.0)) fail("cloud_rate_nats must be positive");
  if (s.cloud_power_w < 0.0) fail("cloud_power_w must be nonnegative");
  if (!(s.cloud_update_nats > 0.0)) fail("cloud_update_nats must be positive");
  if (s.available_devices.empty()) fail("available_devices must be non-empty");
}

struct World {
  std::vector<DeviceProfile> devices;   // index == id
  std::vector<EdgeServerProfile> servers;  // index == id

  const DeviceProfile& device(int id) const { return devices.at(static_cast<size_t>(id)); }
  const EdgeServerProfile& server(int id) const { return servers.at(static_cast<size_t>(id)); }
};

// Resource assignment for the training group of one server.
struct GroupAllocation {
  int server_id = -1;
  std::vector<int> members;        // sorted device ids
  std::map<int, double> freqs;     // Hz per member
  std::map<int, double> betas;     // bandwidth share per member, (0,1]
};

inline void validate(const GroupAllocation& a, const World& world) {
  const EdgeServerProfile& srv = world.server(a.server_id);
  double beta_sum = 0.0;
  for (int id : a.members) {
    const DeviceProfile& d = world.device(id);
    if (srv.available_devices.count(id) == 0)
      throw ConstraintError("device " + std::to_string(id) + " is not available to server " +
                            std::to_string(a.server_id));
    auto fit = a.freqs.find(id);
    auto bit = a.betas.find(id);
    if (fit == a.freqs.end() || bit == a.betas.end())
      throw ConstraintError("allocation missing entries for device " + std::to_string(id));
    if (!(fit->second >= d.freq_min_hz && fit->second <= d.freq_max_hz))
      throw ConstraintError("frequency out of bounds for device " + std::to_string(id));
    if (!(bit->second > 0.0 && bit->second <= 1.0))
      throw ConstraintError("bandwidth share out of (0,1] for device " + std::to_string(id));
    beta_sum += bit->second;
  }
  if (beta_sum > 1.0 + 1e-9)
    throw ConstraintError("bandwidth shares of server " + std::to_string(a.server_id) +
                          " sum to " + std::to_string(beta_sum) + " > 1");
}

struct CostBreakdown {
  double energy_j = 0.0;
  double delay_s = 0.0;
  double weighted = 0.0;
};

inline CostBreakdown make_cost(double energy_j, double delay_s, const SystemConfig& cfg) {
  return {energy_j, delay_s, cfg.energy_weight * energy_j + cfg.delay_weight * delay_s};
}

}  // namespace hfel
