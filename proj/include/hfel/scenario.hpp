#pragma once

#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "hfel/prng.hpp"
#include "hfel/types.hpp"

// Synthetic deployment generator and its on-disk format. Devices and servers
// are dropped uniformly into a square area; device parameters are drawn from
// the standard simulation ranges; channel gains follow a distance power-law
// and are frozen per (device, server) pair at build time.

namespace hfel {

struct Vec2 {
  double x = 0.0, y = 0.0;
};

inline double dist(const Vec2& a, const Vec2& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

struct ScenarioParams {
  int num_devices = 0;
  int num_servers = 0;
  std::uint64_t seed = 1;
  double area_m = 500.0;

  // Device draw ranges.
  double density_lo = 30.0, density_hi = 100.0;    // cycles per bit
  double train_mb_lo = 5.0, train_mb_hi = 10.0;    // training data, MB
  double freq_min_hz = 1e9, freq_max_hz = 1e10;
  double capacitance = 2e-28;
  double tx_power_w = 0.2;
  double update_nats = 25000.0;

  // Server side.
  double bandwidth_hz = 1e7;
  double cloud_rate_nats = 5e6;   // assumed; echoed in output preambles
  double cloud_power_w = 1.0;     // assumed
  double cloud_update_nats = 25000.0;  // aggregate comparable in size to a local update

  // Geometry.
  double avail_radius_m = 250.0;  // servers within this radius are reachable
  double pathloss_gain = 1.0;     // gain at the reference distance
  double pathloss_ref_m = 1.0;
  double pathloss_exp = 3.0;
};

struct Scenario {
  ScenarioParams params;
  SystemConfig cfg;
  std::vector<Vec2> device_pos;
  std::vector<Vec2> server_pos;
  World world;

  double distance(int device, int server) const {
    return dist(device_pos.at(static_cast<size_t>(device)), server_pos.at(static_cast<size_t>(server)));
  }
};

inline double pathloss_gain(const ScenarioParams& p, double distance_m) {
  const double d = std::max(distance_m, p.pathloss_ref_m);  // clamp inside the reference distance
  return p.pathloss_gain * std::pow(p.pathloss_ref_m / d, p.pathloss_exp);
}

constexpr double kBitsPerMb = 8e6;

inline Scenario generate_scenario(const ScenarioParams& params, const SystemConfig& cfg) {
  validate(cfg);
  if (params.num_devices < 1 || params.num_servers < 1)
    throw ScenarioError("generate_scenario: need at least one device and one server");
  Scenario sc;
  sc.params = params;
  sc.cfg = cfg;

  Prng geo = Prng::substream(params.seed, 0x6e0);
  Prng dev_rng = Prng::substream(params.seed, 0x6e1);
  for (int i = 0; i < params.num_devices; ++i)
    sc.device_pos.push_back({geo.uniform(0.0, params.area_m), geo.uniform(0.0, params.area_m)});
  for (int k = 0; k < params.num_servers; ++k)
    sc.server_pos.push_back({geo.uniform(0.0, params.area_m), geo.uniform(0.0, params.area_m)});

  for (int k = 0; k < params.num_servers; ++k) {
    EdgeServerProfile s;
    s.id = k;
    s.bandwidth_hz = params.bandwidth_hz;
    s.cloud_rate_nats = params.cloud_rate_nats;
    s.cloud_power_w = params.cloud_power_w;
    s.cloud_update_nats = params.cloud_update_nats;
    sc.world.servers.push_back(s);
  }

  for (int i = 0; i < params.num_devices; ++i) {
    DeviceProfile d;
    d.id = i;
    d.cycles_per_sample = dev_rng.uniform(params.density_lo, params.density_hi);  // cycles per bit
    d.num_samples = dev_rng.uniform(params.train_mb_lo, params.train_mb_hi) * kBitsPerMb;  // bits
    d.freq_min_hz = params.freq_min_hz;
    d.freq_max_hz = params.freq_max_hz;
    d.capacitance = params.capacitance;
    d.tx_power_w = params.tx_power_w;
    d.update_nats = params.update_nats;

    // Reachable servers; fall back to the nearest one so nobody is orphaned.
    int nearest = 0;
    double nearest_d = std::numeric_limits<double>::infinity();
    for (int k = 0; k < params.num_servers; ++k) {
      const double l = dist(sc.device_pos[static_cast<size_t>(i)], sc.server_pos[static_cast<size_t>(k)]);
      if (l < nearest_d) {
        nearest_d = l;
        nearest = k;
      }
      if (l <= params.avail_radius_m) {
        d.channel_gain[k] = pathloss_gain(params, l);
        sc.world.servers[static_cast<size_t>(k)].available_devices.insert(i);
      }
    }
    if (d.channel_gain.empty()) {
      d.channel_gain[nearest] = pathloss_gain(params, nearest_d);
      sc.world.servers[static_cast<size_t>(nearest)].available_devices.insert(i);
    }
    validate(d);
    sc.world.devices.push_back(d);
  }
  for (const EdgeServerProfile& s : sc.world.servers)
    if (!s.available_devices.empty()) validate(s);
  return sc;
}

// ---------------------------------------------------------------------------
// Scenario file format: '#' comments, "key value" header lines, then
// [devices] / [servers] / [availability] / [gains] tables.

namespace detail {

inline std::string fmt_exact(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

class FieldReader {
 public:
  FieldReader(std::istringstream& in, const std::string& context) : in_(in), context_(context) {}
  double num(const std::string& field) {
    double v;
    if (!(in_ >> v)) throw FormatError("scenario: missing or malformed field '" + field + "' in " + context_);
    return v;
  }
  int integer(const std::string& field) { return static_cast<int>(num(field)); }

 private:
  std::istringstream& in_;
  std::string context_;
};

}  // namespace detail

inline void save_scenario(const Scenario& sc, std::ostream& out) {
  using detail::fmt_exact;
  out << "# hfel scenario\n";
  out << "format_version 1\n";
  out << "seed " << sc.params.seed << "\n";
  out << "area_m " << fmt_exact(sc.params.area_m) << "\n";
  out << "avail_radius_m " << fmt_exact(sc.params.avail_radius_m) << "\n";
  out << "pathloss_gain " << fmt_exact(sc.params.pathloss_gain) << "\n";
  out << "pathloss_ref_m " << fmt_exact(sc.params.pathloss_ref_m) << "\n";
  out << "pathloss_exp " << fmt_exact(sc.params.pathloss_exp) << "\n";
  out << "local_accuracy " << fmt_exact(sc.cfg.local_accuracy) << "\n";
  out << "edge_accuracy " << fmt_exact(sc.cfg.edge_accuracy) << "\n";
  out << "local_iter_scale " << fmt_exact(sc.cfg.local_iter_scale) << "\n";
  out << "edge_iter_scale " << fmt_exact(sc.cfg.edge_iter_scale) << "\n";
  out << "energy_weight " << fmt_exact(sc.cfg.energy_weight) << "\n";
  out << "delay_weight " << fmt_exact(sc.cfg.delay_weight) << "\n";
  out << "noise_w " << fmt_exact(sc.cfg.noise_w) << "\n";
  out << "devices " << sc.world.devices.size() << "\n";
  out << "servers " << sc.world.servers.size() << "\n";
  out << "[devices]\n";
  out << "# id x_m y_m cycles_per_sample num_samples freq_min_hz freq_max_hz capacitance tx_power_w update_nats\n";
  for (const DeviceProfile& d : sc.world.devices) {
    const Vec2& p = sc.device_pos[static_cast<size_t>(d.id)];
    out << d.id << ' ' << fmt_exact(p.x) << ' ' << fmt_exact(p.y) << ' '
        << fmt_exact(d.cycles_per_sample) << ' ' << fmt_exact(d.num_samples) << ' '
        << fmt_exact(d.freq_min_hz) << ' ' << fmt_exact(d.freq_max_hz) << ' '
        << fmt_exact(d.capacitance) << ' ' << fmt_exact(d.tx_power_w) << ' '
        << fmt_exact(d.update_nats) << "\n";
  }
  out << "[servers]\n";
  out << "# id x_m y_m bandwidth_hz cloud_rate_nats cloud_power_w cloud_update_nats\n";
  for (const EdgeServerProfile& s : sc.world.servers) {
    const Vec2& p = sc.server_pos[static_cast<size_t>(s.id)];
    out << s.id << ' ' << fmt_exact(p.x) << ' ' << fmt_exact(p.y) << ' '
        << fmt_exact(s.bandwidth_hz) << ' ' << fmt_exact(s.cloud_rate_nats) << ' '
        << fmt_exact(s.cloud_power_w) << ' ' << fmt_exact(s.cloud_update_nats) << "\n";
  }
  out << "[gains]\n";
  out << "# device server gain\n";
  for (const DeviceProfile& d : sc.world.devices)
    for (const auto& [sid, g] : d.channel_gain)
      out << d.id << ' ' << sid << ' ' << detail::fmt_exact(g) << "\n";
}

inline void save_scenario(const Scenario& sc, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open scenario file for writing: " + path);
  save_scenario(sc, out);
}

inline Scenario load_scenario(std::istream& in) {
  Scenario sc;
  std::map<std::string, double> header;
  std::string line;
  std::string section;
  int expected_devices = -1, expected_servers = -1;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (line[0] == '[') {
      section = line;
      continue;
    }
    std::istringstream ls(line);
    if (section.empty()) {
      std::string key;
      ls >> key;
      double value;
      if (!(ls >> value)) throw FormatError("scenario: malformed header value for '" + key + "'");
      header[key] = value;
      if (key == "devices") expected_devices = static_cast<int>(value);
      if (key == "servers") expected_servers = static_cast<int>(value);
    } else if (section == "[devices]") {
      detail::FieldReader f(ls, "[devices]");
      DeviceProfile d;
      d.id = f.integer("id");
      Vec2 p{f.num("x_m"), f.num("y_m")};
      d.cycles_per_sample = f.num("cycles_per_sample");
      d.num_samples = f.num("num_samples");
      d.freq_min_hz = f.num("freq_min_hz");
      d.freq_max_hz = f.num("freq_max_hz");
      d.capacitance = f.num("capacitance");
      d.tx_power_w = f.num("tx_power_w");
      d.update_nats = f.num("update_nats");
      if (d.id != static_cast<int>(sc.world.devices.size()))
        throw FormatError("scenario: device ids must be consecutive from 0");
      sc.world.devices.push_back(d);
      sc.device_pos.push_back(p);
    } else if (section == "[servers]") {
      detail::FieldReader f(ls, "[servers]");
      EdgeServerProfile s;
      s.id = f.integer("id");
      Vec2 p{f.num("x_m"), f.num("y_m")};
      s.bandwidth_hz = f.num("bandwidth_hz");
      s.cloud_rate_nats = f.num("cloud_rate_nats");
      s.cloud_power_w = f.num("cloud_power_w");
      s.cloud_update_nats = f.num("cloud_update_nats");
      if (s.id != static_cast<int>(sc.world.servers.size()))
        throw FormatError("scenario: server ids must be consecutive from 0");
      sc.world.servers.push_back(s);
      sc.server_pos.push_back(p);
    } else if (section == "[gains]") {
      detail::FieldReader f(ls, "[gains]");
      const int device = f.integer("device");
      const int server = f.integer("server");
      const double gain = f.num("gain");
      if (device < 0 || device >= static_cast<int>(sc.world.devices.size()))
        throw FormatError("scenario: gain row references unknown device " + std::to_string(device));
      if (server < 0 || server >= static_cast<int>(sc.world.servers.size()))
        throw FormatError("scenario: gain row references unknown server " + std::to_string(server));
      sc.world.devices[static_cast<size_t>(device)].channel_gain[server] = gain;
      sc.world.servers[static_cast<size_t>(server)].available_devices.insert(device);
    } else {
      throw FormatError("scenario: unknown section " + section);
    }
  }

  auto need = [&](const std::string& key) {
    auto it = header.find(key);
    if (it == header.end()) throw FormatError("scenario: missing header field '" + key + "'");
    return it->second;
  };
  sc.params.seed = static_cast<std::uint64_t>(need("seed"));
  sc.params.area_m = need("area_m");
  sc.params.avail_radius_m = need("avail_radius_m");
  sc.params.pathloss_gain = need("pathloss_gain");
  sc.params.pathloss_ref_m = need("pathloss_ref_m");
  sc.params.pathloss_exp = need("pathloss_exp");
  sc.cfg.local_accuracy = need("local_accuracy");
  sc.cfg.edge_accuracy = need("edge_accuracy");
  sc.cfg.local_iter_scale = need("local_iter_scale");
  sc.cfg.edge_iter_scale = need("edge_iter_scale");
  sc.cfg.energy_weight = need("energy_weight");
  sc.cfg.delay_weight = need("delay_weight");
  sc.cfg.noise_w = need("noise_w");
  sc.params.num_devices = static_cast<int>(sc.world.devices.size());
  sc.params.num_servers = static_cast<int>(sc.world.servers.size());
  if (expected_devices >= 0 && expected_devices != sc.params.num_devices)
    throw FormatError("scenario: header 'devices' disagrees with the device table");
  if (expected_servers >= 0 && expected_servers != sc.params.num_servers)
    throw FormatError("scenario: header 'servers' disagrees with the server table");

  validate(sc.cfg);
  for (const DeviceProfile& d : sc.world.devices) {
    if (d.channel_gain.empty())
      throw ScenarioError("scenario: device " + std::to_string(d.id) + " has no reachable server");
    validate(d);
  }
  for (const EdgeServerProfile& s : sc.world.servers)
    if (!s.available_devices.empty()) validate(s);
  return sc;
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open scenario file: " + path);
  return load_scenario(in);
}

}  // namespace hfel
