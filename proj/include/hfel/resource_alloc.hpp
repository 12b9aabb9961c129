#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "hfel/cost_model.hpp"
#include "hfel/types.hpp"

// Joint bandwidth/CPU-frequency allocation for a single server's training
// group. The per-device cost collapses into four constants; the bandwidth
// split has a closed form in the frequencies, which leaves a box-constrained
// minimization over frequencies alone. That reduced problem is solved by
// projected gradient descent on a log-sum-exp smoothing of the bottleneck
// term (temperature shrinks across outer rounds), followed by a coordinate
// polish against the exact objective. A brute-force grid oracle verifies the
// solver in tests.

namespace hfel {

struct PerDeviceConstants {
  double comm_energy_coeff = 0.0;  // J; upload energy is comm_energy_coeff / beta
  double comp_energy_coeff = 0.0;  // J/Hz^2; compute energy is comp_energy_coeff * f^2
  double comm_time_coeff = 0.0;    // s; upload delay is comm_time_coeff / beta
  double comp_cycles = 0.0;        // cycles; compute delay is comp_cycles / f
};

struct GroupConstants {
  std::vector<int> members;
  std::vector<PerDeviceConstants> dev;
  std::vector<double> freq_lo, freq_hi;
  double delay_factor = 0.0;   // weight of the bottleneck term in the objective
  bool energy_weighted = false;  // true iff the energy weight is positive
};

// Collapses weights, iteration counts and device/channel parameters into the
// per-device constants of the group objective
//   sum_n (comm_energy/beta_n + comp_energy * f_n^2)
//     + delay_factor * max_n (comm_time/beta_n + comp_cycles/f_n),
// which equals the weighted group cost for every feasible (f, beta).
inline GroupConstants build_constants(const std::vector<int>& members, const World& world,
                                      const EdgeServerProfile& server, const SystemConfig& cfg) {
  validate(cfg);
  if (members.empty()) throw ConstraintError("build_constants: empty training group");
  const double local_passes = local_iteration_count(cfg);
  const double rounds = edge_iteration_count(cfg);
  GroupConstants gc;
  gc.members = members;
  gc.delay_factor = cfg.delay_weight * rounds;
  gc.energy_weighted = cfg.energy_weight > 0.0;
  gc.dev.reserve(members.size());
  for (int id : members) {
    const DeviceProfile& d = world.device(id);
    if (server.available_devices.count(id) == 0)
      throw ConstraintError("build_constants: device " + std::to_string(id) +
                            " not available to server " + std::to_string(server.id));
    const double snr = d.gain_for(server.id) * d.tx_power_w / cfg.noise_w;
    const double full_band_rate = server.bandwidth_hz * std::log1p(snr);
    PerDeviceConstants c;
    c.comm_time_coeff = d.update_nats / full_band_rate;
    c.comm_energy_coeff = cfg.energy_weight * rounds * d.tx_power_w * c.comm_time_coeff;
    c.comp_cycles = local_passes * d.cycles_per_local_pass();
    c.comp_energy_coeff =
        cfg.energy_weight * rounds * local_passes * 0.5 * d.capacitance * d.cycles_per_local_pass();
    gc.dev.push_back(c);
    gc.freq_lo.push_back(d.freq_min_hz);
    gc.freq_hi.push_back(d.freq_max_hz);
  }
  return gc;
}

// Group objective at explicit frequencies and bandwidth shares.
inline double group_objective(const std::vector<double>& freqs, const std::vector<double>& betas,
                              const GroupConstants& gc) {
  double sum = 0.0, worst = 0.0;
  for (size_t i = 0; i < gc.dev.size(); ++i) {
    const PerDeviceConstants& c = gc.dev[i];
    sum += c.comm_energy_coeff / betas[i] + c.comp_energy_coeff * freqs[i] * freqs[i];
    worst = std::max(worst, c.comm_time_coeff / betas[i] + c.comp_cycles / freqs[i]);
  }
  return sum + gc.delay_factor * worst;
}

// Optimal bandwidth shares as a function of the frequencies: shares are
// proportional to the cube root of
//   x_n = comm_energy_coeff_n + 2 * comp_energy_coeff_n * f_n^3
//           * comm_time_coeff_n / comp_cycles_n,
// and sum to one. Undefined when the energy weight is zero (all x vanish).
inline std::vector<double> closed_form_beta(const std::vector<double>& freqs,
                                            const GroupConstants& gc) {
  if (!gc.energy_weighted)
    throw DegenerateWeightsError(
        "closed_form_beta: undefined when the energy weight is zero (all terms vanish)");
  std::vector<double> beta(gc.dev.size());
  double total = 0.0;
  for (size_t i = 0; i < gc.dev.size(); ++i) {
    const PerDeviceConstants& c = gc.dev[i];
    const double f = freqs[i];
    const double x =
        c.comm_energy_coeff + 2.0 * c.comp_energy_coeff * f * f * f * c.comm_time_coeff / c.comp_cycles;
    beta[i] = std::cbrt(x);
    total += beta[i];
  }
  if (!(total > 0.0)) throw DegenerateWeightsError("closed_form_beta: zero normalization");
  for (double& b : beta) b /= total;
  return beta;
}

// Bandwidth shares that equalize every member's per-round completion time at
// the given frequencies (the bottleneck-optimal split, used when only delay
// is weighted). Solved by bisection on the common completion time.
inline std::vector<double> equalize_bottleneck_beta(const std::vector<double>& freqs,
                                                    const GroupConstants& gc) {
  const size_t n = gc.dev.size();
  std::vector<double> floor_time(n);
  double lo = 0.0, comm_total = 0.0;
  for (size_t i = 0; i < n; ++i) {
    floor_time[i] = gc.dev[i].comp_cycles / freqs[i];
    lo = std::max(lo, floor_time[i]);
    comm_total += gc.dev[i].comm_time_coeff;
  }
  if (n == 1) return {1.0};
  // share_i(t) = comm_time_i / (t - floor_i) decreases in t; find t with sum = 1.
  double hi = lo + comm_total;  // sum(hi) <= 1 by construction
  const double base = lo;
  lo = std::nextafter(lo, std::numeric_limits<double>::infinity());
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    double s = 0.0;
    for (size_t i = 0; i < n; ++i) s += gc.dev[i].comm_time_coeff / (mid - floor_time[i]);
    (s > 1.0 ? lo : hi) = mid;
    if (hi - lo <= 1e-15 * std::max(1.0, base)) break;
  }
  const double t = 0.5 * (lo + hi);
  std::vector<double> beta(n);
  double total = 0.0;
  for (size_t i = 0; i < n; ++i) {
    beta[i] = gc.dev[i].comm_time_coeff / (t - floor_time[i]);
    total += beta[i];
  }
  for (double& b : beta) b /= total;
  return beta;
}

// Objective of the frequency-only problem obtained by substituting the
// closed-form bandwidth shares.
inline double reduced_objective(const std::vector<double>& freqs, const GroupConstants& gc) {
  return group_objective(freqs, closed_form_beta(freqs, gc), gc);
}

struct SolverStats {
  int iterations = 0;
  double residual = 0.0;  // scale-free projected-gradient norm at the solution
  bool converged = true;
};

struct AllocationSolution {
  std::map<int, double> freqs;
  std::map<int, double> betas;
  CostBreakdown cost;
  SolverStats stats;
};

struct SolverOptions {
  double tol = 1e-6;          // projected-gradient norm target (objective-scaled)
  int max_iterations = 10000; // across all smoothing rounds
  int smoothing_rounds = 8;
  double smoothing_shrink = 0.08;
};

class SolverFailure : public Error {
 public:
  SolverFailure(const std::string& what, AllocationSolution best_so_far)
      : Error(what), best(std::move(best_so_far)) {}
  AllocationSolution best;
};

namespace detail {

enum class BetaRule { ClosedForm, Fixed };

// Objective evaluator with preallocated per-device columns. Holds a base
// point whose terms are cached so that probes differing in one or two
// coordinates cost O(n) with no heap traffic; the smoothing phase and the
// exact-max refiners both run on top of it.
class FreqEval {
 public:
  FreqEval(const GroupConstants& gc, BetaRule rule, std::vector<double> fixed_beta)
      : gc_(gc),
        rule_(rule),
        fixed_beta_(std::move(fixed_beta)),
        n_(gc.dev.size()),
        cube_coeff_(n_),
        inv_fixed_(n_),
        base_f_(n_),
        s_(n_),
        a_over_s_(n_),
        d_over_s_(n_),
        bf2_(n_),
        comp_time_(n_),
        scratch_bn_(n_),
        scratch_wt_(n_) {
    fixed_energy_ = 0.0;
    for (size_t i = 0; i < n_; ++i) {
      const PerDeviceConstants& c = gc_.dev[i];
      cube_coeff_[i] = 2.0 * c.comp_energy_coeff * c.comm_time_coeff / c.comp_cycles;
      if (rule_ == BetaRule::Fixed) {
        inv_fixed_[i] = 1.0 / fixed_beta_[i];
        fixed_energy_ += c.comm_energy_coeff * inv_fixed_[i];
      }
    }
  }

  size_t size() const { return n_; }
  const GroupConstants& constants() const { return gc_; }

  void betas(const std::vector<double>& f, std::vector<double>& out) const {
    if (rule_ == BetaRule::Fixed) {
      out = fixed_beta_;
      return;
    }
    out.resize(n_);
    double total = 0.0;
    for (size_t i = 0; i < n_; ++i) {
      out[i] = std::cbrt(gc_.dev[i].comm_energy_coeff + cube_coeff_[i] * f[i] * f[i] * f[i]);
      total += out[i];
    }
    for (double& b : out) b /= total;
  }

  // ---- base-point machinery ----

  void set_base(const std::vector<double>& f) {
    s_sum_ = a_sum_ = bf2_sum_ = 0.0;
    for (size_t i = 0; i < n_; ++i) load_column(i, f[i]);
    base_f_ = f;
  }

  void commit(size_t i, double fi) {
    s_sum_ -= s_[i];
    a_sum_ -= a_over_s_[i];
    bf2_sum_ -= bf2_[i];
    load_column(i, fi);
    base_f_[i] = fi;
  }

  const std::vector<double>& base_freqs() const { return base_f_; }

  double base_value() const {
    double worst = 0.0;
    for (size_t i = 0; i < n_; ++i) {
      const double t = bottleneck_term(i, s_sum_);
      if (t > worst) worst = t;
    }
    return energy_sum(s_sum_) + gc_.delay_factor * worst;
  }

  // Objective with coordinate i replaced by fi, all else at the base.
  double value_with(size_t i, double fi) const {
    Column ci = column_at(i, fi);
    const double s_sum = s_sum_ - s_[i] + ci.s;
    double worst = ci.d_over_s * s_sum + ci.comp_time;
    for (size_t k = 0; k < n_; ++k) {
      if (k == i) continue;
      const double t = bottleneck_term(k, s_sum);
      if (t > worst) worst = t;
    }
    const double a_sum = a_sum_ - a_over_s_[i] + ci.a_over_s;
    const double energy = (rule_ == BetaRule::ClosedForm ? a_sum * s_sum : fixed_energy_) +
                          bf2_sum_ - bf2_[i] + ci.bf2;
    return energy + gc_.delay_factor * worst;
  }

  // Objective with coordinates i and j replaced.
  double value_with2(size_t i, double fi, size_t j, double fj) const {
    Column ci = column_at(i, fi);
    Column cj = column_at(j, fj);
    const double s_sum = s_sum_ - s_[i] - s_[j] + ci.s + cj.s;
    double worst = std::max(ci.d_over_s * s_sum + ci.comp_time, cj.d_over_s * s_sum + cj.comp_time);
    for (size_t k = 0; k < n_; ++k) {
      if (k == i || k == j) continue;
      const double t = bottleneck_term(k, s_sum);
      if (t > worst) worst = t;
    }
    const double a_sum = a_sum_ - a_over_s_[i] - a_over_s_[j] + ci.a_over_s + cj.a_over_s;
    const double energy = (rule_ == BetaRule::ClosedForm ? a_sum * s_sum : fixed_energy_) +
                          bf2_sum_ - bf2_[i] - bf2_[j] + ci.bf2 + cj.bf2;
    return energy + gc_.delay_factor * worst;
  }

  // ---- full-point smoothed evaluation (no base update) ----

  // Log-sum-exp smoothed objective; fills the gradient when asked.
  double smoothed(const std::vector<double>& f, double temperature, std::vector<double>* grad) {
    double s_sum = 0.0;
    if (rule_ == BetaRule::ClosedForm) {
      for (size_t i = 0; i < n_; ++i) {
        scratch_wt_[i] = std::cbrt(gc_.dev[i].comm_energy_coeff + cube_coeff_[i] * f[i] * f[i] * f[i]);
        s_sum += scratch_wt_[i];  // scratch_wt_ holds s until the weights are formed
      }
    }
    double energy = 0.0, worst = -std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < n_; ++i) {
      const PerDeviceConstants& c = gc_.dev[i];
      const double inv_beta = rule_ == BetaRule::ClosedForm ? s_sum / scratch_wt_[i] : inv_fixed_[i];
      energy += c.comm_energy_coeff * inv_beta + c.comp_energy_coeff * f[i] * f[i];
      scratch_bn_[i] = c.comm_time_coeff * inv_beta + c.comp_cycles / f[i];
      worst = std::max(worst, scratch_bn_[i]);
    }
    double wsum = 0.0;
    for (size_t i = 0; i < n_; ++i) {
      scratch_bn_[i] = std::exp((scratch_bn_[i] - worst) / temperature);
      wsum += scratch_bn_[i];
    }
    const double value = energy + gc_.delay_factor * (worst + temperature * std::log(wsum));

    if (grad) {
      grad->assign(n_, 0.0);
      if (rule_ == BetaRule::ClosedForm) {
        double a_over_s = 0.0, wd_over_s = 0.0;
        for (size_t i = 0; i < n_; ++i) {
          scratch_bn_[i] /= wsum;  // softmax weights
          a_over_s += gc_.dev[i].comm_energy_coeff / scratch_wt_[i];
          wd_over_s += scratch_bn_[i] * gc_.dev[i].comm_time_coeff / scratch_wt_[i];
        }
        for (size_t k = 0; k < n_; ++k) {
          const PerDeviceConstants& c = gc_.dev[k];
          const double s = scratch_wt_[k];
          const double ds = cube_coeff_[k] * f[k] * f[k] / (s * s);
          const double own =
              (c.comm_energy_coeff + gc_.delay_factor * scratch_bn_[k] * c.comm_time_coeff) * s_sum /
              (s * s);
          (*grad)[k] = ds * (a_over_s + gc_.delay_factor * wd_over_s - own) +
                       2.0 * c.comp_energy_coeff * f[k] -
                       gc_.delay_factor * scratch_bn_[k] * c.comp_cycles / (f[k] * f[k]);
        }
      } else {
        for (size_t k = 0; k < n_; ++k) {
          const PerDeviceConstants& c = gc_.dev[k];
          (*grad)[k] = 2.0 * c.comp_energy_coeff * f[k] -
                       gc_.delay_factor * (scratch_bn_[k] / wsum) * c.comp_cycles / (f[k] * f[k]);
        }
      }
    }
    return value;
  }

 private:
  struct Column {
    double s, a_over_s, d_over_s, bf2, comp_time;
  };

  Column column_at(size_t i, double fi) const {
    const PerDeviceConstants& c = gc_.dev[i];
    Column col;
    if (rule_ == BetaRule::ClosedForm) {
      col.s = std::cbrt(c.comm_energy_coeff + cube_coeff_[i] * fi * fi * fi);
      col.a_over_s = c.comm_energy_coeff / col.s;
      col.d_over_s = c.comm_time_coeff / col.s;
    } else {
      col.s = 0.0;
      col.a_over_s = 0.0;
      col.d_over_s = c.comm_time_coeff * inv_fixed_[i];  // beta fixed: term is d/beta directly
    }
    col.bf2 = c.comp_energy_coeff * fi * fi;
    col.comp_time = c.comp_cycles / fi;
    return col;
  }

  void load_column(size_t i, double fi) {
    const Column col = column_at(i, fi);
    s_[i] = col.s;
    a_over_s_[i] = col.a_over_s;
    d_over_s_[i] = col.d_over_s;
    bf2_[i] = col.bf2;
    comp_time_[i] = col.comp_time;
    s_sum_ += col.s;
    a_sum_ += col.a_over_s;
    bf2_sum_ += col.bf2;
  }

  double bottleneck_term(size_t k, double s_sum) const {
    return rule_ == BetaRule::ClosedForm ? d_over_s_[k] * s_sum + comp_time_[k]
                                         : d_over_s_[k] + comp_time_[k];
  }

  double energy_sum(double s_sum) const {
    return (rule_ == BetaRule::ClosedForm ? a_sum_ * s_sum : fixed_energy_) + bf2_sum_;
  }

  const GroupConstants& gc_;
  BetaRule rule_;
  std::vector<double> fixed_beta_;
  size_t n_;
  std::vector<double> cube_coeff_, inv_fixed_;
  double fixed_energy_ = 0.0;

  std::vector<double> base_f_, s_, a_over_s_, d_over_s_, bf2_, comp_time_;
  double s_sum_ = 0.0, a_sum_ = 0.0, bf2_sum_ = 0.0;

  std::vector<double> scratch_bn_, scratch_wt_;
};

inline double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

// Projected gradient descent over normalized coordinates z in [0,1]^n with
// Armijo backtracking. Returns the scale-free projected-gradient norm.
inline double descend(FreqEval& eval, std::vector<double>& z, double temperature, double tol,
                      int iter_cap, int& iters_used) {
  const size_t n = eval.size();
  const GroupConstants& g = eval.constants();
  std::vector<double> f(n), grad_f(n), grad_z(n), trial(n), trial_f(n);
  auto fill_freqs = [&](const std::vector<double>& zz, std::vector<double>& out) {
    for (size_t i = 0; i < n; ++i) out[i] = g.freq_lo[i] + zz[i] * (g.freq_hi[i] - g.freq_lo[i]);
  };

  fill_freqs(z, f);
  double value = eval.smoothed(f, temperature, &grad_f);
  double step = 0.25;
  double pg_norm = std::numeric_limits<double>::infinity();
  while (iters_used < iter_cap) {
    const double scale = std::max(std::abs(value), 1e-12);
    pg_norm = 0.0;
    for (size_t i = 0; i < n; ++i) {
      grad_z[i] = grad_f[i] * (g.freq_hi[i] - g.freq_lo[i]);
      const double moved = clamp01(z[i] - grad_z[i] / scale) - z[i];
      pg_norm += moved * moved;
    }
    pg_norm = std::sqrt(pg_norm);
    if (pg_norm <= tol) break;

    bool accepted = false;
    for (int bt = 0; bt < 60 && iters_used < iter_cap; ++bt) {
      double decrease = 0.0;
      for (size_t i = 0; i < n; ++i) {
        trial[i] = clamp01(z[i] - step * grad_z[i] / scale);
        decrease += grad_z[i] * (z[i] - trial[i]);
      }
      ++iters_used;
      fill_freqs(trial, trial_f);
      const double trial_value = eval.smoothed(trial_f, temperature, nullptr);
      if (trial_value <= value - 1e-4 * decrease) {
        z = trial;
        fill_freqs(z, f);
        value = eval.smoothed(f, temperature, &grad_f);
        step = std::min(step * 2.0, 1e6);
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;  // step underflow: as converged as the smoothing allows
  }
  return pg_norm;
}

// Exact 1-D minimization along each coordinate in turn (golden section; the
// coordinate restrictions are convex for in-range parameters).
inline void coordinate_refine(FreqEval& eval, std::vector<double>& z, double z_tol) {
  const size_t n = eval.size();
  const GroupConstants& g = eval.constants();
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  std::vector<double> f(n);
  for (size_t i = 0; i < n; ++i) f[i] = g.freq_lo[i] + z[i] * (g.freq_hi[i] - g.freq_lo[i]);

  for (int sweep = 0; sweep < 40; ++sweep) {
    eval.set_base(f);  // resync sums each sweep
    double value = eval.base_value();
    const double before = value;
    for (size_t i = 0; i < n; ++i) {
      const double lo_f = g.freq_lo[i], hi_f = g.freq_hi[i];
      auto line = [&](double zi) { return eval.value_with(i, lo_f + zi * (hi_f - lo_f)); };
      double a = 0.0, b = 1.0;
      double c = b - inv_phi * (b - a);
      double d = a + inv_phi * (b - a);
      double fc = line(c), fd = line(d);
      while (b - a > z_tol) {
        if (fc < fd) {
          b = d;
          d = c;
          fd = fc;
          c = b - inv_phi * (b - a);
          fc = line(c);
        } else {
          a = c;
          c = d;
          fc = fd;
          d = a + inv_phi * (b - a);
          fd = line(d);
        }
      }
      const double cand = 0.5 * (a + b);
      const double vc = line(cand);
      if (vc < value) {
        z[i] = cand;
        f[i] = lo_f + cand * (hi_f - lo_f);
        eval.commit(i, f[i]);
        value = vc;
      }
    }
    if (before - value <= 1e-14 * std::max(std::abs(value), 1e-12)) break;
  }
}

// Pattern moves over coordinate pairs; follows the tie ridges of the exact
// bottleneck term that single-coordinate moves cannot track. Quadratic in the
// group size, so reserved for small groups.
inline void pair_refine(FreqEval& eval, std::vector<double>& z) {
  const size_t n = eval.size();
  if (n < 2) return;
  const GroupConstants& g = eval.constants();
  std::vector<double> f(n);
  auto z_to_f = [&](size_t i, double zi) { return g.freq_lo[i] + zi * (g.freq_hi[i] - g.freq_lo[i]); };
  for (size_t i = 0; i < n; ++i) f[i] = z_to_f(i, z[i]);
  eval.set_base(f);
  double value = eval.base_value();

  static constexpr double kDirs[4][2] = {{1, 1}, {1, -1}, {-1, 1}, {-1, -1}};
  for (double h = 0.02; h >= 1e-10; h *= 0.5) {
    for (int sweep = 0; sweep < 40; ++sweep) {
      bool improved = false;
      for (size_t i = 0; i < n; ++i) {
        for (size_t j = i + 1; j < n; ++j) {
          for (const auto& dir : kDirs) {
            const double zi = clamp01(z[i] + dir[0] * h);
            const double zj = clamp01(z[j] + dir[1] * h);
            if (zi == z[i] && zj == z[j]) continue;
            const double fi = z_to_f(i, zi), fj = z_to_f(j, zj);
            const double v = eval.value_with2(i, fi, j, fj);
            if (v < value) {
              z[i] = zi;
              z[j] = zj;
              eval.commit(i, fi);
              eval.commit(j, fj);
              value = v;
              improved = true;
            }
          }
        }
      }
      if (!improved) break;
    }
  }
}

inline AllocationSolution package_solution(const std::vector<int>& members,
                                           const std::vector<double>& freqs,
                                           const std::vector<double>& betas, const World& world,
                                           int server_id, const SystemConfig& cfg,
                                           SolverStats stats) {
  GroupAllocation alloc;
  alloc.server_id = server_id;
  alloc.members = members;
  AllocationSolution sol;
  for (size_t i = 0; i < members.size(); ++i) {
    alloc.freqs[members[i]] = freqs[i];
    alloc.betas[members[i]] = betas[i];
  }
  sol.freqs = alloc.freqs;
  sol.betas = alloc.betas;
  sol.cost = group_cost(alloc, world, cfg);
  sol.stats = stats;
  return sol;
}

inline AllocationSolution solve_frequency_problem(FreqEval& eval, const std::vector<int>& members,
                                                  const World& world, int server_id,
                                                  const SystemConfig& cfg,
                                                  const SolverOptions& opt) {
  const GroupConstants& gc = eval.constants();
  const size_t n = eval.size();
  std::vector<double> z(n);
  for (size_t i = 0; i < n; ++i) {
    const double geo = std::sqrt(gc.freq_lo[i] * gc.freq_hi[i]);
    z[i] = (geo - gc.freq_lo[i]) / (gc.freq_hi[i] - gc.freq_lo[i]);
  }
  std::vector<double> freqs(n);
  auto refresh_freqs = [&] {
    for (size_t i = 0; i < n; ++i) freqs[i] = gc.freq_lo[i] + z[i] * (gc.freq_hi[i] - gc.freq_lo[i]);
  };

  // Initial temperature from the spread of the bottleneck terms.
  double t_lo = std::numeric_limits<double>::infinity(), t_hi = 0.0;
  {
    refresh_freqs();
    std::vector<double> b0;
    eval.betas(freqs, b0);
    for (size_t i = 0; i < n; ++i) {
      const double t = gc.dev[i].comm_time_coeff / b0[i] + gc.dev[i].comp_cycles / freqs[i];
      t_lo = std::min(t_lo, t);
      t_hi = std::max(t_hi, t);
    }
  }
  double temperature = std::max(t_hi - t_lo, 1e-3 * (1.0 + t_hi));

  // Smoothing rounds run on per-round budgets with tolerances that tighten as
  // the temperature falls; the exact-max refinement below does the last mile.
  int iters = 0;
  double residual = std::numeric_limits<double>::infinity();
  bool converged = true;
  const int round_budget =
      std::max(1, std::min(150, opt.max_iterations / (opt.smoothing_rounds + 2)));
  for (int round = 0; round < opt.smoothing_rounds; ++round) {
    const double round_tol = std::max(opt.tol, 1e-3 * std::pow(opt.smoothing_shrink, round));
    residual = detail::descend(eval, z, temperature, round_tol,
                               std::min(opt.max_iterations, iters + round_budget), iters);
    if (iters >= opt.max_iterations) {
      converged = false;
      break;
    }
    temperature = std::max(temperature * opt.smoothing_shrink, 1e-12 * (1.0 + t_hi));
  }
  if (converged) {
    detail::coordinate_refine(eval, z, n <= 6 ? 1e-12 : 1e-10);
    if (n <= 6) detail::pair_refine(eval, z);
    // Residual reported at the final smoothing temperature.
    residual = detail::descend(eval, z, temperature, opt.tol,
                               std::min(opt.max_iterations, iters + round_budget), iters);
    if (iters >= opt.max_iterations) converged = false;
    detail::coordinate_refine(eval, z, n <= 6 ? 1e-12 : 1e-10);
    if (n <= 6) detail::pair_refine(eval, z);
  }

  refresh_freqs();
  std::vector<double> betas;
  eval.betas(freqs, betas);
  AllocationSolution sol =
      package_solution(members, freqs, betas, world, server_id, cfg, {iters, residual, converged});
  if (!converged)
    throw SolverFailure("allocation solver hit the iteration cap (" +
                            std::to_string(opt.max_iterations) + ")",
                        sol);
  return sol;
}

}  // namespace detail

// Joint optimum of the group: frequencies from the reduced problem, bandwidth
// from the closed form (or the bottleneck equalizer when only delay counts).
inline AllocationSolution solve_allocation(const std::vector<int>& members, const World& world,
                                           const EdgeServerProfile& server, const SystemConfig& cfg,
                                           const SolverOptions& opt = {}) {
  const GroupConstants gc = build_constants(members, world, server, cfg);
  if (!gc.energy_weighted) {
    // Delay-only: every bottleneck term falls with f, so run at max frequency
    // and split bandwidth to equalize completion times.
    std::vector<double> freqs = gc.freq_hi;
    std::vector<double> betas = equalize_bottleneck_beta(freqs, gc);
    return detail::package_solution(members, freqs, betas, world, server.id, cfg, {0, 0.0, true});
  }
  detail::FreqEval eval(gc, detail::BetaRule::ClosedForm, {});
  return detail::solve_frequency_problem(eval, members, world, server.id, cfg, opt);
}

// Frequency optimization with the bandwidth split frozen (used by the
// computation-only comparison scheme).
inline AllocationSolution solve_freq_only(const std::vector<int>& members, const World& world,
                                          const EdgeServerProfile& server, const SystemConfig& cfg,
                                          const std::vector<double>& fixed_betas,
                                          const SolverOptions& opt = {}) {
  const GroupConstants gc = build_constants(members, world, server, cfg);
  detail::FreqEval eval(gc, detail::BetaRule::Fixed, fixed_betas);
  return detail::solve_frequency_problem(eval, members, world, server.id, cfg, opt);
}

// Bandwidth optimization with frequencies frozen (used by the
// communication-only comparison scheme). The closed form does not apply at
// arbitrary frozen frequencies, so the share problem is solved directly on
// the simplex.
inline AllocationSolution solve_beta_only(const std::vector<int>& members, const World& world,
                                          const EdgeServerProfile& server, const SystemConfig& cfg,
                                          const std::vector<double>& fixed_freqs,
                                          const SolverOptions& opt = {}) {
  const GroupConstants gc = build_constants(members, world, server, cfg);
  const size_t n = gc.dev.size();
  if (!gc.energy_weighted) {
    std::vector<double> betas = equalize_bottleneck_beta(fixed_freqs, gc);
    return detail::package_solution(members, fixed_freqs, betas, world, server.id, cfg,
                                    {0, 0.0, true});
  }
  if (gc.delay_factor == 0.0) {
    // Pure energy: minimize sum a_n/beta_n on the simplex; shares go with
    // sqrt(a_n).
    std::vector<double> betas(n);
    double total = 0.0;
    for (size_t i = 0; i < n; ++i) {
      betas[i] = std::sqrt(gc.dev[i].comm_energy_coeff);
      total += betas[i];
    }
    for (double& b : betas) b /= total;
    return detail::package_solution(members, fixed_freqs, betas, world, server.id, cfg,
                                    {0, 0.0, true});
  }

  // General case: projected descent over the simplex with the smoothed max.
  std::vector<double> floor_time(n);
  for (size_t i = 0; i < n; ++i) floor_time[i] = gc.dev[i].comp_cycles / fixed_freqs[i];
  auto objective = [&](const std::vector<double>& beta) {
    return group_objective(fixed_freqs, beta, gc);
  };
  auto smoothed = [&](const std::vector<double>& beta, double temp, std::vector<double>* grad) {
    double energy = 0.0, worst = -std::numeric_limits<double>::infinity();
    std::vector<double> bn(n);
    for (size_t i = 0; i < n; ++i) {
      energy += gc.dev[i].comm_energy_coeff / beta[i] +
                gc.dev[i].comp_energy_coeff * fixed_freqs[i] * fixed_freqs[i];
      bn[i] = gc.dev[i].comm_time_coeff / beta[i] + floor_time[i];
      worst = std::max(worst, bn[i]);
    }
    double wsum = 0.0;
    std::vector<double> weight(n);
    for (size_t i = 0; i < n; ++i) {
      weight[i] = std::exp((bn[i] - worst) / temp);
      wsum += weight[i];
    }
    const double value = energy + gc.delay_factor * (worst + temp * std::log(wsum));
    if (grad) {
      grad->assign(n, 0.0);
      for (size_t i = 0; i < n; ++i)
        (*grad)[i] = -(gc.dev[i].comm_energy_coeff +
                       gc.delay_factor * (weight[i] / wsum) * gc.dev[i].comm_time_coeff) /
                     (beta[i] * beta[i]);
    }
    return value;
  };
  // Euclidean projection onto { beta >= eps, sum beta = 1 }.
  auto project = [&](std::vector<double> v) {
    const double eps = 1e-9;
    std::vector<double> u(v);
    for (double& x : u) x -= eps;
    std::vector<double> sorted(u);
    std::sort(sorted.begin(), sorted.end(), std::greater<double>());
    const double target = 1.0 - eps * static_cast<double>(n);
    double cum = 0.0, theta = 0.0;
    for (size_t i = 0; i < n; ++i) {
      cum += sorted[i];
      const double cand = (cum - target) / static_cast<double>(i + 1);
      if (i + 1 == n || sorted[i + 1] <= cand) {
        theta = cand;
        break;
      }
    }
    for (size_t i = 0; i < n; ++i) v[i] = std::max(u[i] - theta, 0.0) + eps;
    return v;
  };

  std::vector<double> beta(n, 1.0 / static_cast<double>(n));
  double t_spread = 0.0;
  for (size_t i = 0; i < n; ++i)
    t_spread = std::max(t_spread, gc.dev[i].comm_time_coeff * n + floor_time[i]);
  double temp = std::max(1e-3 * (1.0 + t_spread), 1e-12);
  {
    double worst = 0.0, best = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < n; ++i) {
      const double t = gc.dev[i].comm_time_coeff * n + floor_time[i];
      worst = std::max(worst, t);
      best = std::min(best, t);
    }
    temp = std::max(worst - best, 1e-3 * (1.0 + worst));
  }
  int iters = 0;
  double residual = 0.0;
  const int round_budget = std::max(1, opt.max_iterations / (opt.smoothing_rounds + 2));
  for (int round = 0; round < opt.smoothing_rounds; ++round) {
    std::vector<double> grad;
    double value = smoothed(beta, temp, &grad);
    double step = 0.25;
    const int round_cap = std::min(opt.max_iterations, iters + round_budget);
    while (iters < round_cap) {
      const double scale = std::max(std::abs(value), 1e-12);
      std::vector<double> moved = project([&] {
        std::vector<double> v(beta);
        for (size_t i = 0; i < n; ++i) v[i] -= grad[i] / scale;
        return v;
      }());
      residual = 0.0;
      for (size_t i = 0; i < n; ++i) residual += (moved[i] - beta[i]) * (moved[i] - beta[i]);
      residual = std::sqrt(residual);
      if (residual <= opt.tol) break;
      bool accepted = false;
      for (int bt = 0; bt < 60 && iters < round_cap; ++bt) {
        std::vector<double> trial = project([&] {
          std::vector<double> v(beta);
          for (size_t i = 0; i < n; ++i) v[i] -= step * grad[i] / scale;
          return v;
        }());
        ++iters;
        const double tv = smoothed(trial, temp, nullptr);
        double decrease = 0.0;
        for (size_t i = 0; i < n; ++i) decrease += grad[i] * (beta[i] - trial[i]);
        if (tv <= value - 1e-4 * decrease) {
          beta = trial;
          value = smoothed(beta, temp, &grad);
          step = std::min(step * 2.0, 1e6);
          accepted = true;
          break;
        }
        step *= 0.5;
      }
      if (!accepted) break;
    }
    temp = std::max(temp * opt.smoothing_shrink, 1e-12);
  }
  // Pairwise polish on the exact objective (moves preserve the simplex).
  double value = objective(beta);
  for (double h = 0.02; h >= 1e-12; h *= 0.5) {
    for (int sweep = 0; sweep < 40; ++sweep) {
      bool improved = false;
      for (size_t i = 0; i < n; ++i) {
        for (size_t j = 0; j < n; ++j) {
          if (i == j) continue;
          if (beta[j] - h < 1e-9) continue;
          beta[i] += h;
          beta[j] -= h;
          ++iters;
          const double v = objective(beta);
          if (v < value) {
            value = v;
            improved = true;
          } else {
            beta[i] -= h;
            beta[j] += h;
          }
        }
      }
      if (!improved) break;
    }
  }
  return detail::package_solution(members, fixed_freqs, beta, world, server.id, cfg,
                                  {iters, residual, true});
}

// Exhaustive reference search over the frequency box (test oracle). Bandwidth
// at each grid point follows the same rule as the solver. The requested
// per-dimension resolution is rounded up to the next 2^k + 1 lattice so that
// doubling the request yields a strict refinement of the grid.
inline AllocationSolution grid_oracle(const std::vector<int>& members, const World& world,
                                      const EdgeServerProfile& server, const SystemConfig& cfg,
                                      int grid_points) {
  if (members.size() > 4)
    throw ConstraintError("grid_oracle: at most four devices (combinatorial blowup)");
  if (grid_points < 50) throw ConstraintError("grid_oracle: need at least 50 points per dimension");
  const GroupConstants gc = build_constants(members, world, server, cfg);
  const size_t n = gc.dev.size();

  int lattice = 2;
  while (lattice + 1 < grid_points) lattice *= 2;
  const int points = lattice + 1;

  struct Column {
    std::vector<double> freq, bf2, comp_time, a_over_s, d_over_s, s;
  };
  std::vector<Column> col(n);
  for (size_t i = 0; i < n; ++i) {
    Column& c = col[i];
    c.freq.resize(points);
    c.bf2.resize(points);
    c.comp_time.resize(points);
    c.s.resize(points);
    c.a_over_s.resize(points);
    c.d_over_s.resize(points);
    const PerDeviceConstants& d = gc.dev[i];
    for (int j = 0; j < points; ++j) {
      const double f = gc.freq_lo[i] + (gc.freq_hi[i] - gc.freq_lo[i]) *
                                            static_cast<double>(j) / static_cast<double>(points - 1);
      c.freq[j] = f;
      c.bf2[j] = d.comp_energy_coeff * f * f;
      c.comp_time[j] = d.comp_cycles / f;
      if (gc.energy_weighted) {
        const double x =
            d.comm_energy_coeff + 2.0 * d.comp_energy_coeff * f * f * f * d.comm_time_coeff / d.comp_cycles;
        c.s[j] = std::cbrt(x);
        c.a_over_s[j] = d.comm_energy_coeff / c.s[j];
        c.d_over_s[j] = d.comm_time_coeff / c.s[j];
      }
    }
  }

  std::vector<int> idx(n, 0);
  std::vector<int> best_idx(n, 0);
  double best = std::numeric_limits<double>::infinity();
  std::vector<double> freqs(n);
  for (;;) {
    double value;
    if (gc.energy_weighted) {
      double s_total = 0.0, a_term = 0.0, bf2 = 0.0;
      for (size_t i = 0; i < n; ++i) {
        s_total += col[i].s[idx[i]];
        a_term += col[i].a_over_s[idx[i]];
        bf2 += col[i].bf2[idx[i]];
      }
      double worst = 0.0;
      for (size_t i = 0; i < n; ++i)
        worst = std::max(worst, col[i].d_over_s[idx[i]] * s_total + col[i].comp_time[idx[i]]);
      value = a_term * s_total + bf2 + gc.delay_factor * worst;
    } else {
      for (size_t i = 0; i < n; ++i) freqs[i] = col[i].freq[idx[i]];
      value = group_objective(freqs, equalize_bottleneck_beta(freqs, gc), gc);
    }
    if (value < best) {
      best = value;
      best_idx = idx;
    }
    size_t digit = 0;
    while (digit < n && ++idx[digit] == points) idx[digit++] = 0;
    if (digit == n) break;
  }

  for (size_t i = 0; i < n; ++i) freqs[i] = col[i].freq[best_idx[i]];
  const std::vector<double> betas =
      gc.energy_weighted ? closed_form_beta(freqs, gc) : equalize_bottleneck_beta(freqs, gc);
  return detail::package_solution(members, freqs, betas, world, server.id, cfg, {0, 0.0, true});
}

// Residuals of the stationarity system behind the closed-form bandwidth rule,
// with multipliers recovered from the rule's own parameterization. All
// entries are normalized to be scale-free:
//   beta_stationarity    gap in phi * beta^3 = x (relative to x)
//   freq_stationarity    gap in 2 b f = tau E / f^2 under the recovered tau
//   multiplier_balance   gap between delay_factor and sum(tau), relative
//   complementarity      tau-weighted slack of the bottleneck ties, relative
//                        to the objective, plus the share-sum slack
//   beta_sum_gap         |sum beta - 1|
//   bounds_gap           worst relative violation of the f box / share range
struct KktResiduals {
  double beta_stationarity = 0.0;
  double freq_stationarity = 0.0;
  double multiplier_balance = 0.0;
  double complementarity = 0.0;
  double beta_sum_gap = 0.0;
  double bounds_gap = 0.0;

  double max_residual() const {
    return std::max({beta_stationarity, freq_stationarity, multiplier_balance, complementarity,
                     beta_sum_gap, bounds_gap});
  }
};

inline KktResiduals kkt_residuals(const std::vector<double>& freqs,
                                  const std::vector<double>& betas, const GroupConstants& gc) {
  const size_t n = gc.dev.size();
  KktResiduals r;
  std::vector<double> tau(n), x(n), tie(n);
  double tau_sum = 0.0, worst = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const PerDeviceConstants& c = gc.dev[i];
    const double f = freqs[i];
    tau[i] = 2.0 * c.comp_energy_coeff * f * f * f / c.comp_cycles;
    tau_sum += tau[i];
    x[i] = c.comm_energy_coeff + tau[i] * c.comm_time_coeff;
    tie[i] = c.comm_time_coeff / betas[i] + c.comp_cycles / f;
    worst = std::max(worst, tie[i]);
  }
  double cbrt_sum = 0.0;
  for (size_t i = 0; i < n; ++i) cbrt_sum += std::cbrt(x[i]);
  const double phi = cbrt_sum * cbrt_sum * cbrt_sum;
  const double objective = group_objective(freqs, betas, gc);
  const double obj_scale = std::max(std::abs(objective), 1e-12);

  double beta_sum = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const PerDeviceConstants& c = gc.dev[i];
    beta_sum += betas[i];
    r.beta_stationarity =
        std::max(r.beta_stationarity, std::abs(phi * betas[i] * betas[i] * betas[i] - x[i]) /
                                          std::max(x[i], 1e-300));
    const double fs = 2.0 * c.comp_energy_coeff * freqs[i] - tau[i] * c.comp_cycles / (freqs[i] * freqs[i]);
    r.freq_stationarity =
        std::max(r.freq_stationarity,
                 std::abs(fs) * freqs[i] / obj_scale);
    r.complementarity = std::max(r.complementarity, tau[i] * (worst - tie[i]) / obj_scale);
    const double lo = gc.freq_lo[i], hi = gc.freq_hi[i];
    r.bounds_gap = std::max({r.bounds_gap, (lo - freqs[i]) / hi, (freqs[i] - hi) / hi,
                             -betas[i], betas[i] - 1.0});
  }
  r.beta_sum_gap = std::abs(beta_sum - 1.0);
  r.multiplier_balance =
      std::abs(gc.delay_factor - tau_sum) / std::max(gc.delay_factor, 1e-12);
  r.complementarity = std::max(r.complementarity, phi * std::abs(beta_sum - 1.0) / obj_scale);
  return r;
}

}  // namespace hfel
