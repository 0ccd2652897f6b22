// SPDX-License-Identifier: Apache-2.0
//
// Behavior cloning: cross-entropy between the policy's logits and the expert
// action at every step of an expert trajectory. Recurrent policies are
// unrolled over the whole episode (full backprop through time).
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "maea/autodiff.hpp"
#include "maea/error.hpp"
#include "maea/gridworld.hpp"
#include "maea/policy.hpp"
#include "maea/rng.hpp"

namespace maea {

struct TrainConfig {
  int epochs = 5;
  /// (observation, action) pairs per optimizer step.
  int batch_size = 32;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip_norm = 5.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (epochs <= 0 || batch_size <= 0 || !(learning_rate > 0) || !(beta1 > 0) || !(beta2 > 0) || !(epsilon > 0) ||
        !(clip_norm > 0)) {
      throw Error("train config: every hyperparameter must be positive");
    }
  }
};

struct EpochLog {
  int epoch = 0;
  double loss = 0.0;
  double accuracy = 0.0;
  friend bool operator==(const EpochLog&, const EpochLog&) = default;
};

struct TrainLog {
  std::vector<EpochLog> epochs;
  friend bool operator==(const TrainLog&, const TrainLog&) = default;
};

inline void write_train_log(std::ostream& out, const TrainLog& log) {
  out << "epoch,loss,accuracy\n";
  char buf[96];
  for (const auto& e : log.epochs) {
    std::snprintf(buf, sizeof buf, "%d,%.6g,%.6g\n", e.epoch, e.loss, e.accuracy);
    out << buf;
  }
}

struct Accuracy {
  double overall = 0.0;
  double interact = 0.0;
  double non_interact = 0.0;
  std::size_t total = 0;
  std::size_t interact_count = 0;
  std::size_t non_interact_count = 0;
};

struct StepPrediction {
  std::size_t trajectory_id = 0;
  std::size_t t = 0;
  int predicted = 0;
  int expert = 0;
};

/// Teacher-forced predictions: the hidden state is driven by the expert's
/// observation history, never by the policy's own rollout.
inline std::vector<StepPrediction> predict_dataset(const PolicyParameters& params, const Dataset& data) {
  std::vector<StepPrediction> out;
  for (const auto& traj : data) {
    Tensor hidden = initial_hidden(params.desc);
    for (std::size_t t = 0; t < traj.steps.size(); ++t) {
      const StepTrace trace = policy_step(params, traj.steps[t].obs, hidden);
      const Tensor logits = trace.logits();
      out.push_back({traj.id, t + 1, static_cast<int>(argmax(logits.data())), static_cast<int>(traj.steps[t].expert)});
      hidden = trace.hidden();
    }
  }
  return out;
}

inline Accuracy accuracy_from_predictions(const std::vector<StepPrediction>& preds) {
  if (preds.empty()) throw Error("evaluate_accuracy: empty dataset");
  Accuracy acc;
  std::size_t correct = 0;
  std::size_t correct_interact = 0;
  std::size_t correct_non = 0;
  for (const auto& p : preds) {
    const bool ok = p.predicted == p.expert;
    ++acc.total;
    correct += ok;
    if (is_interact(static_cast<Action>(p.expert))) {
      ++acc.interact_count;
      correct_interact += ok;
    } else {
      ++acc.non_interact_count;
      correct_non += ok;
    }
  }
  acc.overall = static_cast<double>(correct) / static_cast<double>(acc.total);
  if (acc.interact_count) acc.interact = static_cast<double>(correct_interact) / static_cast<double>(acc.interact_count);
  if (acc.non_interact_count) {
    acc.non_interact = static_cast<double>(correct_non) / static_cast<double>(acc.non_interact_count);
  }
  return acc;
}

/// Next-action accuracy, overall and split by the expert action's interact flag.
inline Accuracy evaluate_accuracy(const PolicyParameters& params, const Dataset& data) {
  return accuracy_from_predictions(predict_dataset(params, data));
}

/// Held-out split: the last 10% of trajectories by id (at least one when the
/// dataset has two or more trajectories).
inline std::pair<Dataset, Dataset> split_holdout(Dataset data) {
  std::stable_sort(data.begin(), data.end(), [](const Trajectory& a, const Trajectory& b) { return a.id < b.id; });
  std::size_t held = data.size() / 10;
  if (held == 0 && data.size() >= 2) held = 1;
  Dataset test(data.end() - static_cast<std::ptrdiff_t>(held), data.end());
  data.resize(data.size() - held);
  return {std::move(data), std::move(test)};
}

using GradientSet = std::map<std::string, Tensor>;

/// Scales `grads` in place so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
inline double clip_gradients(GradientSet& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& [_, g] : grads)
    for (double v : g.data()) sq += v * v;
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double factor = max_norm / norm;
    for (auto& [_, g] : grads)
      for (double& v : g.data()) v *= factor;
  }
  return norm;
}

class Adam {
 public:
  Adam(const PolicyParameters& params, const TrainConfig& cfg) : cfg_(cfg) {
    for (const auto& [name, t] : params.tensors) {
      m_.emplace(name, Tensor(t.dims()));
      v_.emplace(name, Tensor(t.dims()));
    }
  }

  void update(PolicyParameters& params, const GradientSet& grads) {
    ++step_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (auto& [name, w] : params.tensors) {
      const Tensor& g = grads.at(name);
      Tensor& m = m_.at(name);
      Tensor& v = v_.at(name);
      for (std::size_t i = 0; i < w.size(); ++i) {
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
        w[i] -= cfg_.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.epsilon);
      }
    }
  }

 private:
  TrainConfig cfg_;
  std::map<std::string, Tensor> m_;
  std::map<std::string, Tensor> v_;
  long step_ = 0;
};

/// Sum of cross-entropies over steps [first, last) of one trajectory;
/// parameter gradients are added into `grads`. Recurrent policies run from
/// the start of the episode so every loss backpropagates through its full
/// history. Returns the loss sum.
inline double accumulate_steps(const PolicyParameters& params, const Trajectory& traj, std::size_t first,
                               std::size_t last, GradientSet& grads) {
  if (first >= last || last > traj.steps.size()) throw Error("accumulate_steps: bad step range");
  ad::Tape tape;
  const BoundParams bound(tape, params);
  const bool recurrent = params.desc.family == Family::Recurrent;
  ad::Var hidden;
  if (recurrent) hidden = tape.input(initial_hidden(params.desc));
  ad::Var total;
  for (std::size_t t = recurrent ? 0 : first; t < last; ++t) {
    const auto& st = traj.steps[t];
    const StepOutputs out = forward_step(tape, bound, st.obs, hidden);
    hidden = out.hidden;
    if (t < first) continue;
    const ad::Var loss = ad::cross_entropy(out.logits, static_cast<std::size_t>(st.expert));
    total = total.valid() ? total + loss : loss;
  }
  const ad::GradientMap g = tape.backward(total);
  for (const auto& [name, var] : bound.all()) {
    Tensor& acc = grads.at(name);
    const Tensor& d = g[var];
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += d[i];
  }
  return total.value()[0];
}

struct StepRange {
  std::size_t trajectory = 0;
  std::size_t first = 0;
  std::size_t last = 0;
};

/// Cuts the step stream of the trajectories in `order` into consecutive
/// batches of `batch_size` (observation, action) pairs. A trajectory that
/// straddles a boundary contributes a step range to each side.
inline std::vector<std::vector<StepRange>> make_batches(const Dataset& data, const std::vector<std::size_t>& order,
                                                        std::size_t batch_size) {
  std::vector<std::vector<StepRange>> batches(1);
  std::size_t filled = 0;
  for (std::size_t k : order) {
    std::size_t t = 0;
    const std::size_t T = data[k].steps.size();
    while (t < T) {
      if (filled == batch_size) {
        batches.emplace_back();
        filled = 0;
      }
      const std::size_t take = std::min(T - t, batch_size - filled);
      batches.back().push_back({k, t, t + take});
      t += take;
      filled += take;
    }
  }
  if (batches.back().empty()) batches.pop_back();
  return batches;
}

struct TrainResult {
  PolicyParameters params;
  TrainLog log;
};

/// Optional per-epoch observer (epoch log entry just appended).
using EpochCallback = std::function<void(const EpochLog&)>;

inline TrainResult train(const Dataset& dataset, const PolicyDescriptor& desc, const TrainConfig& cfg,
                         const EpochCallback& on_epoch = {}) {
  cfg.validate();
  if (dataset.empty()) throw Error("train: empty dataset");
  auto [train_set, held_out] = split_holdout(dataset);
  const Dataset& eval_set = held_out.empty() ? train_set : held_out;

  TrainResult result;
  result.params = init_policy(desc, cfg.seed);
  Adam optimizer(result.params, cfg);
  Rng shuffle_rng(derive_seed(cfg.seed, 0x5eed));

  std::vector<std::size_t> order(train_set.size());
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.below(i)]);

    double loss_sum = 0.0;
    std::size_t step_count = 0;
    double accuracy = 0.0;
    try {
      for (const auto& batch : make_batches(train_set, order, static_cast<std::size_t>(cfg.batch_size))) {
        GradientSet grads;
        for (const auto& [name, t] : result.params.tensors) grads.emplace(name, Tensor(t.dims()));
        std::size_t batch_steps = 0;
        for (const StepRange& r : batch) {
          loss_sum += accumulate_steps(result.params, train_set[r.trajectory], r.first, r.last, grads);
          batch_steps += r.last - r.first;
        }
        step_count += batch_steps;
        for (auto& [_, g] : grads)
          for (double& v : g.data()) v /= static_cast<double>(batch_steps);
        clip_gradients(grads, cfg.clip_norm);
        optimizer.update(result.params, grads);
      }
      if (!std::isfinite(loss_sum)) throw Error("non-finite loss");
      accuracy = evaluate_accuracy(result.params, eval_set).overall;
    } catch (const Error& e) {
      throw Error("train: diverged in epoch " + std::to_string(epoch) + " (last good epoch " +
                  std::to_string(epoch - 1) + "): " + e.what());
    }
    result.log.epochs.push_back({epoch, loss_sum / static_cast<double>(step_count), accuracy});
    if (on_epoch) on_epoch(result.log.epochs.back());
  }
  return result;
}

}  // namespace maea
