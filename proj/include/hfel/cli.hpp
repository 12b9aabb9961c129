#pragma once

#include <fstream>
#include <iostream>
#include <memory>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hfel/baselines.hpp"
#include "hfel/experiment.hpp"
#include "hfel/fedsim.hpp"
#include "hfel/resource_alloc.hpp"
#include "hfel/scenario.hpp"

// Command-line front end:
//   gen     write a generated scenario file
//   solve   run one scheme on one scenario, emit allocations + cost
//   sweep   run an experiment preset, emit the results CSV
//   audit   stability and oracle checks on a solved scenario
//   fedsim  hierarchical training trajectory on a synthetic task

namespace hfel {

namespace detail {

inline std::unique_ptr<std::ofstream> open_out(const std::string& path) {
  auto f = std::make_unique<std::ofstream>(path);
  if (!*f) throw FormatError("cannot open output file: " + path);
  return f;
}

inline void write_solve_output(const SchemeOutcome& out, const std::string& scheme,
                               std::uint64_t seed, std::ostream& os) {
  os << "# hfel solve\n";
  os << "# format_version 1\n";
  os << "# scheme " << scheme << "\n";
  os << "# seed " << seed << "\n";
  os << "# cloud uplink parameters come from the scenario file (default: rate 5e6 nats/s, power 1 W, update 25000 nats)\n";
  os << "[allocations]\n";
  os << "server,device,freq_hz,beta\n";
  for (const auto& [sid, members] : out.strategy.groups) {
    if (members.empty()) continue;
    const AllocationSolution& sol = out.strategy.allocations.at(sid);
    for (int dev : members)
      os << sid << ',' << dev << ',' << fmt_num(sol.freqs.at(dev)) << ','
         << fmt_num(sol.betas.at(dev)) << "\n";
  }
  os << "[cost]\n";
  os << "energy_j,delay_s,weighted_cost,edge_objective,rounds,accepted_moves,converged\n";
  os << fmt_num(out.system_cost.energy_j) << ',' << fmt_num(out.system_cost.delay_s) << ','
     << fmt_num(out.system_cost.weighted) << ',' << fmt_num(out.edge_objective) << ',' << out.rounds
     << ',' << out.accepted << ',' << (out.converged ? 1 : 0) << "\n";
}

}  // namespace detail

inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"hfel: edge-association and resource-allocation scheduling simulator"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "generate a scenario file");
  int gen_devices = 15, gen_servers = 5;
  std::uint64_t gen_seed = 1;
  double gen_area = 500.0, gen_radius = 250.0;
  double gen_lambda_e = 0.5;
  std::string gen_out;
  gen->add_option("--devices,-n", gen_devices, "device count")->check(CLI::PositiveNumber);
  gen->add_option("--servers,-k", gen_servers, "server count")->check(CLI::PositiveNumber);
  gen->add_option("--seed", gen_seed, "generator seed");
  gen->add_option("--area", gen_area, "square side, meters");
  gen->add_option("--radius", gen_radius, "availability radius, meters");
  gen->add_option("--lambda-energy", gen_lambda_e, "energy weight in [0,1]; delay gets the rest");
  gen->add_option("--out,-o", gen_out, "output path (default stdout)");

  // solve
  auto* solve = app.add_subcommand("solve", "run one scheme on a scenario");
  std::string solve_scenario, solve_scheme = "hfel", solve_out, solve_trace;
  std::uint64_t solve_seed = 1;
  solve->add_option("--scenario,-s", solve_scenario, "scenario file")->required();
  solve->add_option("--scheme", solve_scheme,
                    "hfel|random|greedy|comp_opt|comm_opt|uniform|proportional");
  solve->add_option("--seed", solve_seed, "seed for seeded schemes");
  solve->add_option("--out,-o", solve_out, "output path (default stdout)");
  solve->add_option("--trace", solve_trace, "write the adjustment trace CSV here (hfel only)");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "run an experiment preset");
  std::string sweep_preset = "cost_vs_devices", sweep_out;
  std::uint64_t sweep_seed = 1;
  int sweep_trials = -1;
  sweep->add_option("--preset", sweep_preset,
                    "delay|energy|cost _vs_ devices|servers, iters_vs_*, smoke");
  sweep->add_option("--trials", sweep_trials, "trials per sweep point (preset default if unset)")
      ->check(CLI::PositiveNumber);
  sweep->add_option("--seed", sweep_seed, "base seed");
  sweep->add_option("--out,-o", sweep_out, "output path (default stdout)");

  // audit
  auto* audit = app.add_subcommand("audit", "stability + oracle checks on a solved scenario");
  std::string audit_scenario;
  std::uint64_t audit_seed = 1;
  audit->add_option("--scenario,-s", audit_scenario, "scenario file")->required();
  audit->add_option("--seed", audit_seed, "association seed");

  // fedsim
  auto* fed = app.add_subcommand("fedsim", "synthetic hierarchical training trajectory");
  int fed_devices = 30, fed_groups = 5, fed_dim = 8, fed_rounds = 200;
  int fed_local = 2, fed_edge = 3;
  double fed_lr = 0.1;
  double fed_theta = 0.0, fed_epsilon = 0.0;
  std::uint64_t fed_seed = 1;
  std::string fed_out, fed_task = "quadratic";
  fed->add_option("--devices", fed_devices)->check(CLI::PositiveNumber);
  fed->add_option("--groups", fed_groups)->check(CLI::PositiveNumber);
  fed->add_option("--dim", fed_dim)->check(CLI::PositiveNumber);
  fed->add_option("--rounds", fed_rounds)->check(CLI::PositiveNumber);
  fed->add_option("--local-steps", fed_local)->check(CLI::PositiveNumber);
  fed->add_option("--edge-rounds", fed_edge)->check(CLI::PositiveNumber);
  fed->add_option("--theta", fed_theta,
                  "derive --local-steps from this local accuracy target instead");
  fed->add_option("--epsilon", fed_epsilon,
                  "derive --edge-rounds from this edge accuracy target (needs --theta)");
  fed->add_option("--lr", fed_lr, "learning rate");
  fed->add_option("--seed", fed_seed);
  fed->add_option("--task", fed_task, "quadratic|logistic");
  fed->add_option("--out,-o", fed_out, "output path (default stdout)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return 0;
    }
    err << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (gen->parsed()) {
      ScenarioParams params;
      params.num_devices = gen_devices;
      params.num_servers = gen_servers;
      params.seed = gen_seed;
      params.area_m = gen_area;
      params.avail_radius_m = gen_radius;
      SystemConfig cfg;
      if (gen_lambda_e < 0.0 || gen_lambda_e > 1.0)
        throw FormatError("--lambda-energy must lie in [0,1]");
      cfg.energy_weight = gen_lambda_e;
      cfg.delay_weight = 1.0 - gen_lambda_e;
      const Scenario sc = generate_scenario(params, cfg);
      if (gen_out.empty()) {
        save_scenario(sc, out);
      } else {
        auto f = detail::open_out(gen_out);
        save_scenario(sc, *f);
      }
      return 0;
    }

    if (solve->parsed()) {
      const Scenario sc = load_scenario(solve_scenario);
      ExperimentPreset preset;  // defaults; only the init policy matters here
      SchemeOutcome outcome;
      if (solve_scheme == "hfel" && !solve_trace.empty()) {
        OptimalEvaluator inner(sc.world, sc.cfg);
        CachingEvaluator cache(inner);
        AssociationOptions assoc;
        assoc.seed = solve_seed;
        AssociationResult res = run_association(sc, cache, assoc);
        auto f = detail::open_out(solve_trace);
        write_trace_csv(res.trace, *f);
        outcome = detail::finish_outcome("hfel", std::move(res.strategy), sc);
        outcome.rounds = res.rounds;
        outcome.accepted = res.accepted;
        outcome.converged = res.converged;
      } else {
        Scenario seeded = sc;
        seeded.params.seed = solve_seed;
        outcome = run_scheme(solve_scheme, seeded, preset, nullptr);
      }
      if (solve_out.empty()) {
        detail::write_solve_output(outcome, solve_scheme, solve_seed, out);
      } else {
        auto f = detail::open_out(solve_out);
        detail::write_solve_output(outcome, solve_scheme, solve_seed, *f);
      }
      return 0;
    }

    if (sweep->parsed()) {
      ExperimentPreset preset = preset_by_name(sweep_preset);
      if (sweep_trials > 0) preset.trials = sweep_trials;
      const ExperimentResult result = run_experiment(preset, sweep_seed);
      if (sweep_out.empty()) {
        write_csv(result, out);
      } else {
        auto f = detail::open_out(sweep_out);
        write_csv(result, *f);
      }
      for (const TrialRecord& r : result.rows)
        if (r.status != "ok") {
          err << "warning: " << r.scheme << " value=" << r.sweep_value << " trial=" << r.trial
              << " " << r.status << "\n";
        }
      return 0;
    }

    if (audit->parsed()) {
      const Scenario sc = load_scenario(audit_scenario);
      OptimalEvaluator inner(sc.world, sc.cfg);
      CachingEvaluator cache(inner);
      AssociationOptions assoc;
      assoc.seed = audit_seed;
      AssociationResult res = run_association(sc, cache, assoc);
      bool ok = res.converged;
      out << (res.converged ? "PASS" : "FAIL") << " association converged (rounds=" << res.rounds
          << ", accepted=" << res.accepted << ")\n";

      const AuditReport report = audit_stability(res.strategy, sc, cache, assoc);
      ok = ok && report.improving_moves == 0;
      out << (report.improving_moves == 0 ? "PASS" : "FAIL") << " stability audit (checked "
          << report.checked << " moves, best residual gain " << detail::fmt_num(report.best_gain)
          << ")\n";

      bool beta_ok = true, oracle_ok = true;
      for (const auto& [sid, members] : res.strategy.groups) {
        if (members.empty()) continue;
        const AllocationSolution& sol = res.strategy.allocations.at(sid);
        double beta_sum = 0.0;
        for (const auto& [dev, b] : sol.betas) beta_sum += b;
        if (std::abs(beta_sum - 1.0) > 1e-9) beta_ok = false;
        if (members.size() <= 3) {
          const AllocationSolution ref =
              grid_oracle(members, sc.world, sc.world.server(sid), sc.cfg, 64);
          if (sol.cost.weighted > ref.cost.weighted * (1.0 + 1e-3) + 1e-12) oracle_ok = false;
        }
      }
      ok = ok && beta_ok && oracle_ok;
      out << (beta_ok ? "PASS" : "FAIL") << " bandwidth shares sum to one per group\n";
      out << (oracle_ok ? "PASS" : "FAIL") << " solver matches grid oracle on small groups\n";
      return ok ? 0 : 1;
    }

    if (fed->parsed()) {
      std::unique_ptr<SyntheticTask> task;
      if (fed_task == "quadratic")
        task = std::make_unique<QuadraticTask>(QuadraticTask::random(fed_devices, fed_dim, fed_seed));
      else if (fed_task == "logistic")
        task = std::make_unique<LogisticTask>(LogisticTask::random(fed_devices, fed_dim, 20, fed_seed));
      else
        throw FormatError("unknown task '" + fed_task + "' (want quadratic or logistic)");
      if (fed_theta > 0.0 || fed_epsilon > 0.0) {
        SystemConfig accuracy_cfg;
        accuracy_cfg.local_accuracy = fed_theta > 0.0 ? fed_theta : 0.9;
        accuracy_cfg.edge_accuracy = fed_epsilon > 0.0 ? fed_epsilon : 0.9;
        fed_local = rounded_local_steps(accuracy_cfg);
        fed_edge = rounded_edge_rounds(accuracy_cfg);
      }
      std::vector<std::vector<int>> groups(static_cast<size_t>(fed_groups));
      for (int n = 0; n < fed_devices; ++n)
        groups[static_cast<size_t>(n % fed_groups)].push_back(n);
      const FedTrajectory traj =
          run_global_rounds(*task, groups, fed_rounds, fed_local, fed_edge, fed_lr);
      auto write = [&](std::ostream& os) {
        os << "# hfel fedsim trajectory\n";
        os << "# format_version 1\n";
        os << "# local_steps " << fed_local << " edge_rounds " << fed_edge << "\n";
        os << "round,global_objective";
        for (int g = 0; g < fed_groups; ++g) os << ",group_" << g;
        os << "\n";
        for (size_t r = 0; r < traj.global_objective.size(); ++r) {
          os << r << ',' << detail::fmt_num(traj.global_objective[r]);
          for (double v : traj.group_objective[r]) os << ',' << detail::fmt_num(v);
          os << "\n";
        }
      };
      if (fed_out.empty()) {
        write(out);
      } else {
        auto f = detail::open_out(fed_out);
        write(*f);
      }
      return 0;
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace hfel
