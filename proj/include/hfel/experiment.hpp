#pragma once

#include <cstdint>
#include <cstdio>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "hfel/baselines.hpp"
#include "hfel/scenario.hpp"

// Monte-Carlo sweep runner. A preset fixes the sweep variable (device or
// server count), the weight mode, and the scheme list; every trial generates
// one scenario that all schemes consume, so comparisons are paired. Ratios
// are taken against the uniform scheme per trial and then averaged.

namespace hfel {

namespace detail {

inline std::string fmt_num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

}  // namespace detail

struct ExperimentPreset {
  std::string name;
  enum class Sweep { Devices, Servers } sweep = Sweep::Devices;
  std::vector<int> sweep_values;
  int fixed_other = 5;  // server count when sweeping devices, and vice versa
  enum class WeightMode { DelayOnly, EnergyOnly, RandomSplit } weights = WeightMode::RandomSplit;
  int trials = 20;
  std::vector<std::string> schemes;  // empty means all
  AssociationOptions::Init hfel_init = AssociationOptions::Init::Nearest;
  double area_m = 500.0;

  static const std::vector<std::string>& all_schemes() {
    static const std::vector<std::string> names = {
        "hfel",    "random",       "greedy",         "comp_opt",           "comm_opt",
        "uniform", "proportional", "comp_opt_hfel",  "comm_opt_hfel"};
    return names;
  }
};

inline ExperimentPreset preset_by_name(const std::string& name) {
  ExperimentPreset p;
  p.name = name;
  const std::vector<int> device_range = {15, 30, 45, 60};
  const std::vector<int> server_range = {5, 10, 15, 20, 25};
  auto device_sweep = [&] {
    p.sweep = ExperimentPreset::Sweep::Devices;
    p.sweep_values = device_range;
    p.fixed_other = 5;
  };
  auto server_sweep = [&] {
    p.sweep = ExperimentPreset::Sweep::Servers;
    p.sweep_values = server_range;
    p.fixed_other = 60;
  };
  if (name == "delay_vs_devices") {
    device_sweep();
    p.weights = ExperimentPreset::WeightMode::DelayOnly;
  } else if (name == "energy_vs_devices") {
    device_sweep();
    p.weights = ExperimentPreset::WeightMode::EnergyOnly;
  } else if (name == "cost_vs_devices") {
    device_sweep();
    p.weights = ExperimentPreset::WeightMode::RandomSplit;
  } else if (name == "delay_vs_servers") {
    server_sweep();
    p.weights = ExperimentPreset::WeightMode::DelayOnly;
  } else if (name == "energy_vs_servers") {
    server_sweep();
    p.weights = ExperimentPreset::WeightMode::EnergyOnly;
  } else if (name == "cost_vs_servers") {
    server_sweep();
    p.weights = ExperimentPreset::WeightMode::RandomSplit;
  } else if (name == "iters_vs_devices") {
    device_sweep();
    p.weights = ExperimentPreset::WeightMode::RandomSplit;
    p.schemes = {"hfel"};
    p.hfel_init = AssociationOptions::Init::Random;  // iteration counts from a cold start
  } else if (name == "iters_vs_servers") {
    server_sweep();
    p.weights = ExperimentPreset::WeightMode::RandomSplit;
    p.schemes = {"hfel"};
    p.hfel_init = AssociationOptions::Init::Random;
  } else if (name == "smoke") {
    p.sweep = ExperimentPreset::Sweep::Devices;
    p.sweep_values = {6, 8};
    p.fixed_other = 2;
    p.weights = ExperimentPreset::WeightMode::RandomSplit;
    p.trials = 1;
  } else {
    throw FormatError("unknown preset '" + name + "'");
  }
  if (p.schemes.empty()) p.schemes = ExperimentPreset::all_schemes();
  return p;
}

struct TrialRecord {
  std::string sweep_var;
  int sweep_value = 0;
  int trial = 0;
  std::string scheme;
  double lambda_energy = 0.0;
  double lambda_delay = 0.0;
  double energy_j = 0.0;
  double delay_s = 0.0;
  double weighted = 0.0;
  double edge_objective = 0.0;
  double ratio_vs_uniform = 0.0;  // weighted / uniform's weighted, same trial
  int rounds = 0;
  long long accepted = 0;
  bool converged = true;
  std::string status = "ok";
};

struct ExperimentResult {
  ExperimentPreset preset;
  std::uint64_t base_seed = 0;
  std::vector<TrialRecord> rows;

  // Mean of a column per (sweep value, scheme), ok rows only.
  std::map<std::pair<int, std::string>, double> mean_weighted() const {
    return mean_of([](const TrialRecord& r) { return r.weighted; });
  }
  std::map<std::pair<int, std::string>, double> mean_ratio() const {
    return mean_of([](const TrialRecord& r) { return r.ratio_vs_uniform; });
  }
  std::map<std::pair<int, std::string>, double> mean_accepted() const {
    return mean_of([](const TrialRecord& r) { return static_cast<double>(r.accepted); });
  }

 private:
  template <typename F>
  std::map<std::pair<int, std::string>, double> mean_of(F field) const {
    std::map<std::pair<int, std::string>, std::pair<double, int>> acc;
    for (const TrialRecord& r : rows) {
      if (r.status != "ok") continue;
      auto& slot = acc[{r.sweep_value, r.scheme}];
      slot.first += field(r);
      slot.second += 1;
    }
    std::map<std::pair<int, std::string>, double> out;
    for (const auto& [key, slot] : acc) out[key] = slot.first / slot.second;
    return out;
  }
};

inline SystemConfig config_for_trial(const ExperimentPreset& preset, std::uint64_t base_seed,
                                     int trial) {
  SystemConfig cfg;
  cfg.local_accuracy = 0.9;
  cfg.edge_accuracy = 0.9;
  cfg.local_iter_scale = 1.0;
  cfg.edge_iter_scale = 1.0;
  cfg.noise_w = 1e-8;
  switch (preset.weights) {
    case ExperimentPreset::WeightMode::DelayOnly:
      cfg.energy_weight = 0.0;
      cfg.delay_weight = 1.0;
      break;
    case ExperimentPreset::WeightMode::EnergyOnly:
      cfg.energy_weight = 1.0;
      cfg.delay_weight = 0.0;
      break;
    case ExperimentPreset::WeightMode::RandomSplit: {
      Prng rng = Prng::substream(base_seed + static_cast<std::uint64_t>(trial), 0x3e1);
      cfg.energy_weight = rng.uniform();
      cfg.delay_weight = 1.0 - cfg.energy_weight;
      break;
    }
  }
  return cfg;
}

// Runs one scheme on one scenario. Seeds are derived from the scenario seed
// so schemes are independent but reproducible.
inline SchemeOutcome run_scheme(const std::string& scheme, const Scenario& scenario,
                                const ExperimentPreset& preset, const SchemeOutcome* hfel_outcome) {
  const std::uint64_t seed = scenario.params.seed;
  AssociationOptions assoc;
  assoc.seed = seed;
  assoc.init = preset.hfel_init;
  if (scheme == "hfel") return run_hfel(scenario, assoc);
  if (scheme == "random") return random_association(scenario, seed);
  if (scheme == "greedy") return greedy_association(scenario);
  if (scheme == "comp_opt") return computation_only(scenario);
  if (scheme == "comm_opt") return communication_only(scenario, seed);
  if (scheme == "uniform") return uniform_allocation(scenario, seed, assoc);
  if (scheme == "proportional") return proportional_allocation(scenario, seed, assoc);
  if (scheme == "comp_opt_hfel") {
    if (!hfel_outcome) throw ScenarioError("comp_opt_hfel requires the hfel scheme in the same trial");
    return computation_only(scenario, hfel_outcome->strategy, "comp_opt_hfel");
  }
  if (scheme == "comm_opt_hfel") {
    if (!hfel_outcome) throw ScenarioError("comm_opt_hfel requires the hfel scheme in the same trial");
    return communication_only(scenario, seed, hfel_outcome->strategy, "comm_opt_hfel");
  }
  throw FormatError("unknown scheme '" + scheme + "'");
}

inline ExperimentResult run_experiment(const ExperimentPreset& preset, std::uint64_t base_seed) {
  if (preset.sweep_values.empty())
    throw ConstraintError("run_experiment: preset '" + preset.name + "' has an empty sweep range");
  if (preset.trials < 1)
    throw ConstraintError("run_experiment: preset '" + preset.name + "' needs at least one trial");
  ExperimentResult result;
  result.preset = preset;
  result.base_seed = base_seed;
  const bool sweep_devices = preset.sweep == ExperimentPreset::Sweep::Devices;
  for (int value : preset.sweep_values) {
    for (int trial = 0; trial < preset.trials; ++trial) {
      ScenarioParams params;
      params.num_devices = sweep_devices ? value : preset.fixed_other;
      params.num_servers = sweep_devices ? preset.fixed_other : value;
      params.seed = base_seed + static_cast<std::uint64_t>(trial);
      params.area_m = preset.area_m;
      const SystemConfig cfg = config_for_trial(preset, base_seed, trial);
      const Scenario scenario = generate_scenario(params, cfg);

      std::vector<TrialRecord> trial_rows;
      SchemeOutcome hfel_outcome;
      bool have_hfel = false;
      double uniform_weighted = 0.0;
      bool have_uniform = false;
      for (const std::string& scheme : preset.schemes) {
        TrialRecord row;
        row.sweep_var = sweep_devices ? "devices" : "servers";
        row.sweep_value = value;
        row.trial = trial;
        row.scheme = scheme;
        row.lambda_energy = cfg.energy_weight;
        row.lambda_delay = cfg.delay_weight;
        try {
          SchemeOutcome out =
              run_scheme(scheme, scenario, preset, have_hfel ? &hfel_outcome : nullptr);
          row.energy_j = out.system_cost.energy_j;
          row.delay_s = out.system_cost.delay_s;
          row.weighted = out.system_cost.weighted;
          row.edge_objective = out.edge_objective;
          row.rounds = out.rounds;
          row.accepted = out.accepted;
          row.converged = out.converged;
          if (scheme == "uniform") {
            uniform_weighted = out.system_cost.weighted;
            have_uniform = true;
          }
          if (scheme == "hfel") {
            hfel_outcome = std::move(out);
            have_hfel = true;
          }
        } catch (const Error& e) {
          row.status = std::string("failed: ") + e.what();
        }
        trial_rows.push_back(std::move(row));
      }
      for (TrialRecord& row : trial_rows) {
        if (row.status == "ok" && have_uniform && uniform_weighted > 0.0)
          row.ratio_vs_uniform = row.weighted / uniform_weighted;
        result.rows.push_back(std::move(row));
      }
    }
  }
  return result;
}

inline void write_csv(const ExperimentResult& result, std::ostream& out) {
  using detail::fmt_num;
  const ExperimentPreset& p = result.preset;
  out << "# hfel sweep results\n";
  out << "# format_version 1\n";
  out << "# preset " << p.name << "\n";
  out << "# base_seed " << result.base_seed << "\n";
  out << "# trials " << p.trials << "\n";
  out << "# sweep " << (p.sweep == ExperimentPreset::Sweep::Devices ? "devices" : "servers") << "\n";
  out << "# fixed_other " << p.fixed_other << "\n";
  out << "# weight_mode "
      << (p.weights == ExperimentPreset::WeightMode::DelayOnly
              ? "delay_only"
              : p.weights == ExperimentPreset::WeightMode::EnergyOnly ? "energy_only" : "random_split")
      << "\n";
  out << "# assumed cloud uplink: rate 5e6 nats/s, power 1 W, update 25000 nats\n";
  out << "sweep_var,sweep_value,trial,scheme,lambda_energy,lambda_delay,energy_j,delay_s,"
         "weighted_cost,edge_objective,ratio_vs_uniform,rounds,accepted_moves,converged,status\n";
  for (const TrialRecord& r : result.rows) {
    out << r.sweep_var << ',' << r.sweep_value << ',' << r.trial << ',' << r.scheme << ','
        << fmt_num(r.lambda_energy) << ',' << fmt_num(r.lambda_delay) << ',' << fmt_num(r.energy_j)
        << ',' << fmt_num(r.delay_s) << ',' << fmt_num(r.weighted) << ','
        << fmt_num(r.edge_objective) << ',' << fmt_num(r.ratio_vs_uniform) << ',' << r.rounds << ','
        << r.accepted << ',' << (r.converged ? 1 : 0) << ',' << r.status << "\n";
  }
}

inline void write_trace_csv(const std::vector<TraceRow>& trace, std::ostream& out) {
  out << "# hfel adjustment trace\n";
  out << "# format_version 1\n";
  out << "round,kind,device_a,device_b,server_from,server_to,gain,objective_after\n";
  for (const TraceRow& t : trace) {
    out << t.round << ',' << t.kind << ',' << t.device_a << ',' << t.device_b << ','
        << t.server_from << ',' << t.server_to << ',' << detail::fmt_num(t.gain) << ','
        << detail::fmt_num(t.objective_after) << "\n";
  }
}

}  // namespace hfel
