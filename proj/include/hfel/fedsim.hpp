#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "hfel/cost_model.hpp"
#include "hfel/prng.hpp"
#include "hfel/types.hpp"

// Hierarchical training loop on synthetic convex tasks: devices take local
// gradient steps, edge groups average their members' models every local
// block, and the cloud averages the edge models once per global round. All
// averages are weighted by the devices' data sizes. Quadratic tasks share
// their curvature across devices so the weighted optimum is the exact fixed
// point of the loop and serves as an oracle.

namespace hfel {

using ModelVec = std::vector<double>;

class SyntheticTask {
 public:
  virtual ~SyntheticTask() = default;
  virtual int num_devices() const = 0;
  virtual int dimension() const = 0;
  virtual double data_weight(int device) const = 0;
  virtual double device_objective(int device, const ModelVec& w) const = 0;
  virtual ModelVec device_gradient(int device, const ModelVec& w) const = 0;

  double global_objective(const ModelVec& w) const {
    double total = 0.0, weight = 0.0;
    for (int n = 0; n < num_devices(); ++n) {
      total += data_weight(n) * device_objective(n, w);
      weight += data_weight(n);
    }
    return total / weight;
  }
};

// Per-device objective 0.5 * sum_d curvature[d] * (w[d] - center[n][d])^2
// with curvature shared across devices.
class QuadraticTask : public SyntheticTask {
 public:
  QuadraticTask(std::vector<double> curvature, std::vector<ModelVec> centers,
                std::vector<double> weights)
      : curvature_(std::move(curvature)), centers_(std::move(centers)), weights_(std::move(weights)) {
    for (double c : curvature_)
      if (!(c > 0.0)) throw ConstraintError("QuadraticTask: curvature must be positive");
    for (double w : weights_)
      if (!(w > 0.0)) throw ConstraintError("QuadraticTask: data weights must be positive");
  }

  static QuadraticTask random(int num_devices, int dimension, std::uint64_t seed) {
    Prng rng = Prng::substream(seed, 0xfed);
    std::vector<double> curvature(static_cast<size_t>(dimension));
    for (double& c : curvature) c = rng.uniform(0.5, 2.0);
    std::vector<ModelVec> centers;
    std::vector<double> weights;
    for (int n = 0; n < num_devices; ++n) {
      ModelVec c(static_cast<size_t>(dimension));
      for (double& v : c) v = rng.uniform(-1.0, 1.0);
      centers.push_back(std::move(c));
      weights.push_back(rng.uniform(1.0, 10.0));
    }
    return QuadraticTask(std::move(curvature), std::move(centers), std::move(weights));
  }

  int num_devices() const override { return static_cast<int>(centers_.size()); }
  int dimension() const override { return static_cast<int>(curvature_.size()); }
  double data_weight(int device) const override { return weights_.at(static_cast<size_t>(device)); }

  double device_objective(int device, const ModelVec& w) const override {
    const ModelVec& c = centers_.at(static_cast<size_t>(device));
    double v = 0.0;
    for (size_t d = 0; d < curvature_.size(); ++d) {
      const double diff = w[d] - c[d];
      v += 0.5 * curvature_[d] * diff * diff;
    }
    return v;
  }

  ModelVec device_gradient(int device, const ModelVec& w) const override {
    const ModelVec& c = centers_.at(static_cast<size_t>(device));
    ModelVec g(curvature_.size());
    for (size_t d = 0; d < curvature_.size(); ++d) g[d] = curvature_[d] * (w[d] - c[d]);
    return g;
  }

  double max_curvature() const {
    double m = 0.0;
    for (double c : curvature_) m = std::max(m, c);
    return m;
  }

  // Weighted optimum; exact because the curvature is shared.
  ModelVec global_optimum() const {
    ModelVec opt(curvature_.size(), 0.0);
    double wsum = 0.0;
    for (size_t n = 0; n < centers_.size(); ++n) {
      for (size_t d = 0; d < curvature_.size(); ++d) opt[d] += weights_[n] * centers_[n][d];
      wsum += weights_[n];
    }
    for (double& v : opt) v /= wsum;
    return opt;
  }

 private:
  std::vector<double> curvature_;
  std::vector<ModelVec> centers_;
  std::vector<double> weights_;
};

// Two-class logistic regression on fixed synthetic points (convex; no closed
// optimum, used for qualitative runs only).
class LogisticTask : public SyntheticTask {
 public:
  static LogisticTask random(int num_devices, int dimension, int samples_per_device,
                             std::uint64_t seed) {
    LogisticTask t;
    Prng rng = Prng::substream(seed, 0x109);
    ModelVec truth(static_cast<size_t>(dimension));
    for (double& v : truth) v = rng.uniform(-1.0, 1.0);
    t.dimension_ = dimension;
    for (int n = 0; n < num_devices; ++n) {
      Device dev;
      for (int s = 0; s < samples_per_device; ++s) {
        ModelVec x(static_cast<size_t>(dimension));
        double dot = 0.0;
        for (size_t d = 0; d < x.size(); ++d) {
          x[d] = rng.uniform(-1.0, 1.0);
          dot += x[d] * truth[d];
        }
        dev.points.push_back(std::move(x));
        dev.labels.push_back(rng.uniform() < 1.0 / (1.0 + std::exp(-dot)) ? 1.0 : 0.0);
      }
      dev.weight = static_cast<double>(samples_per_device);
      t.devices_.push_back(std::move(dev));
    }
    return t;
  }

  int num_devices() const override { return static_cast<int>(devices_.size()); }
  int dimension() const override { return dimension_; }
  double data_weight(int device) const override { return devices_.at(static_cast<size_t>(device)).weight; }

  double device_objective(int device, const ModelVec& w) const override {
    const Device& dev = devices_.at(static_cast<size_t>(device));
    double loss = 0.0;
    for (size_t s = 0; s < dev.points.size(); ++s) {
      double dot = 0.0;
      for (size_t d = 0; d < w.size(); ++d) dot += w[d] * dev.points[s][d];
      // log(1 + e^z) - y z, numerically stable for either sign of z
      loss += (dot > 0.0 ? dot + std::log1p(std::exp(-dot)) : std::log1p(std::exp(dot))) -
              dev.labels[s] * dot;
    }
    return loss / static_cast<double>(dev.points.size());
  }

  ModelVec device_gradient(int device, const ModelVec& w) const override {
    const Device& dev = devices_.at(static_cast<size_t>(device));
    ModelVec g(w.size(), 0.0);
    for (size_t s = 0; s < dev.points.size(); ++s) {
      double dot = 0.0;
      for (size_t d = 0; d < w.size(); ++d) dot += w[d] * dev.points[s][d];
      const double p = 1.0 / (1.0 + std::exp(-dot));
      const double err = p - dev.labels[s];
      for (size_t d = 0; d < w.size(); ++d) g[d] += err * dev.points[s][d];
    }
    for (double& v : g) v /= static_cast<double>(dev.points.size());
    return g;
  }

 private:
  struct Device {
    std::vector<ModelVec> points;
    std::vector<double> labels;
    double weight = 0.0;
  };
  std::vector<Device> devices_;
  int dimension_ = 0;
};

// The analytic iteration counts are real-valued multiplicative factors in the
// cost model; the simulation loop needs whole iterations, so it rounds them
// up (and runs at least one).
inline int rounded_local_steps(const SystemConfig& cfg) {
  return std::max(1, static_cast<int>(std::ceil(local_iteration_count(cfg))));
}

inline int rounded_edge_rounds(const SystemConfig& cfg) {
  return std::max(1, static_cast<int>(std::ceil(edge_iteration_count(cfg))));
}

// `steps` plain gradient steps on one device's objective.
inline ModelVec local_update(const SyntheticTask& task, int device, ModelVec w, int steps,
                             double learning_rate) {
  if (steps < 1) throw ConstraintError("local_update: steps must be >= 1");
  if (!(learning_rate > 0.0)) throw ConstraintError("local_update: learning rate must be positive");
  for (int s = 0; s < steps; ++s) {
    const ModelVec g = task.device_gradient(device, w);
    double norm2 = 0.0;
    for (size_t d = 0; d < w.size(); ++d) {
      w[d] -= learning_rate * g[d];
      norm2 += w[d] * w[d];
    }
    if (!std::isfinite(norm2) || norm2 > 1e100)
      throw StepSizeError("local_update: iterate diverged; reduce the learning rate");
  }
  return w;
}

// Data-size-weighted mean of models.
inline ModelVec weighted_mean(const std::vector<ModelVec>& models, const std::vector<double>& weights) {
  if (models.empty()) throw ConstraintError("weighted_mean: empty model set");
  ModelVec out(models[0].size(), 0.0);
  double wsum = 0.0;
  for (size_t i = 0; i < models.size(); ++i) {
    for (size_t d = 0; d < out.size(); ++d) out[d] += weights[i] * models[i][d];
    wsum += weights[i];
  }
  for (double& v : out) v /= wsum;
  return out;
}

inline ModelVec edge_aggregate(const std::vector<ModelVec>& device_models,
                               const std::vector<double>& data_weights) {
  return weighted_mean(device_models, data_weights);
}

inline ModelVec cloud_aggregate(const std::vector<ModelVec>& edge_models,
                                const std::vector<double>& group_weights) {
  return weighted_mean(edge_models, group_weights);
}

struct FedTrajectory {
  std::vector<double> global_objective;              // one entry per global round
  std::vector<std::vector<double>> group_objective;  // per round, per group
  long long local_steps_total = 0;
  ModelVec final_model;
};

// Full hierarchical loop: `edge_rounds` blocks of `local_steps` gradient
// steps with an edge aggregation after each block, then one cloud
// aggregation, repeated for `global_rounds`.
inline FedTrajectory run_global_rounds(const SyntheticTask& task,
                                       const std::vector<std::vector<int>>& groups,
                                       int global_rounds, int local_steps, int edge_rounds,
                                       double learning_rate) {
  if (local_steps < 1 || edge_rounds < 1)
    throw ConstraintError("run_global_rounds: local_steps and edge_rounds must be >= 1");
  std::vector<char> seen(static_cast<size_t>(task.num_devices()), 0);
  for (const auto& g : groups)
    for (int n : g) {
      if (n < 0 || n >= task.num_devices() || seen[static_cast<size_t>(n)])
        throw ScenarioError("run_global_rounds: groups must partition the devices");
      seen[static_cast<size_t>(n)] = 1;
    }
  for (char c : seen)
    if (!c) throw ScenarioError("run_global_rounds: groups must partition the devices");

  FedTrajectory traj;
  ModelVec global(static_cast<size_t>(task.dimension()), 0.0);
  std::vector<ModelVec> device_model(static_cast<size_t>(task.num_devices()), global);

  std::vector<double> group_weight;
  for (const auto& g : groups) {
    double w = 0.0;
    for (int n : g) w += task.data_weight(n);
    group_weight.push_back(w);
  }

  for (int round = 0; round < global_rounds; ++round) {
    std::vector<ModelVec> edge_model(groups.size());
    for (size_t gi = 0; gi < groups.size(); ++gi) {
      if (groups[gi].empty()) continue;
      std::vector<ModelVec> members;
      std::vector<double> weights;
      for (int n : groups[gi]) members.push_back(device_model[static_cast<size_t>(n)]);
      for (int n : groups[gi]) weights.push_back(task.data_weight(n));
      for (int er = 0; er < edge_rounds; ++er) {
        for (size_t mi = 0; mi < members.size(); ++mi) {
          members[mi] = local_update(task, groups[gi][mi], members[mi], local_steps, learning_rate);
          traj.local_steps_total += local_steps;
        }
        const ModelVec aggregated = edge_aggregate(members, weights);
        for (ModelVec& m : members) m = aggregated;
      }
      edge_model[gi] = members[0];
    }

    std::vector<ModelVec> present_models;
    std::vector<double> present_weights;
    for (size_t gi = 0; gi < groups.size(); ++gi) {
      if (groups[gi].empty()) continue;
      present_models.push_back(edge_model[gi]);
      present_weights.push_back(group_weight[gi]);
    }
    global = cloud_aggregate(present_models, present_weights);
    for (ModelVec& m : device_model) m = global;

    traj.global_objective.push_back(task.global_objective(global));
    std::vector<double> per_group;
    for (size_t gi = 0; gi < groups.size(); ++gi) {
      if (groups[gi].empty()) {
        per_group.push_back(0.0);
        continue;
      }
      double v = 0.0, w = 0.0;
      for (int n : groups[gi]) {
        v += task.data_weight(n) * task.device_objective(n, edge_model[gi]);
        w += task.data_weight(n);
      }
      per_group.push_back(v / w);
    }
    traj.group_objective.push_back(std::move(per_group));
  }
  traj.final_model = global;
  return traj;
}

}  // namespace hfel
