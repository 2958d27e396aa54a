#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "gpgraph/errors.hpp"
#include "gpgraph/model.hpp"
#include "gpgraph/partition.hpp"
#include "gpgraph/tape.hpp"
#include "gpgraph/trajectories.hpp"

namespace gpgraph {

enum class OptimizerKind { Sgd, Adam };

inline std::string to_string(OptimizerKind k) { return k == OptimizerKind::Sgd ? "sgd" : "adam"; }

inline OptimizerKind parse_optimizer(std::string_view s) {
  if (s == "sgd") return OptimizerKind::Sgd;
  if (s == "adam") return OptimizerKind::Adam;
  throw UsageError("unknown optimizer '" + std::string(s) + "' (expected sgd or adam)");
}

struct TrainConfig {
  std::size_t epochs = 200;
  double learning_rate = 1e-3;
  OptimizerKind optimizer = OptimizerKind::Adam;
  std::size_t batch = 1;  // windows per optimizer step; gradients are averaged
  double group_weight = 0.0;  // lambda for the supervised grouping loss
  double grad_clip = 0.0;     // global gradient-norm cap, 0 disables
  std::uint64_t seed = 0;
  bool fixed_ratio = false;
  // parameters whose name starts with one of these prefixes are not updated
  std::vector<std::string> frozen;

  void validate() const {
    if (!(learning_rate > 0)) throw ConfigError("learning rate must be positive");
    if (epochs < 1) throw ConfigError("epochs must be at least 1");
    if (batch < 1) throw ConfigError("batch must be at least 1");
    if (!(group_weight >= 0)) throw ConfigError("group loss weight must be non-negative");
    if (!(grad_clip >= 0)) throw ConfigError("gradient clip must be non-negative");
  }

  bool is_frozen(const std::string& name) const {
    return std::any_of(frozen.begin(), frozen.end(),
                       [&](const std::string& p) { return name.rfind(p, 0) == 0; });
  }
};

struct TrainingExample {
  TrajectoryWindow window;
  std::optional<GroupPartition> labels;
};

// Adam / SGD with one state slot per parameter, in visit order.
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double lr) : kind_(kind), lr_(lr) {}

  void step(Model& model, const std::vector<Array>& grads, const TrainConfig& cfg) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    if (m_.empty()) {
      for (const Array& g : grads) {
        m_.emplace_back(g.shape());
        v_.emplace_back(g.shape());
      }
    }
    ++t_;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    std::size_t k = 0;
    Model::visit(model, [&](const std::string& name, Array& p) {
      const Array& g = grads[k];
      Array& m = m_[k];
      Array& v = v_[k];
      ++k;
      if (cfg.is_frozen(name)) return;
      for (std::size_t i = 0; i < p.size(); ++i) {
        if (kind_ == OptimizerKind::Sgd) {
          p[i] -= lr_ * g[i];
          continue;
        }
        m[i] = b1 * m[i] + (1 - b1) * g[i];
        v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
        p[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
      }
    });
  }

 private:
  OptimizerKind kind_;
  double lr_;
  std::uint64_t t_ = 0;
  std::vector<Array> m_, v_;
};

struct StepResult {
  double loss = 0.0;
  double nll = 0.0;
  std::size_t groups = 0;
};

// Loss and parameter gradients (in visit order) of one window.
inline StepResult window_gradients(Model& model, const TrainingExample& ex, const TrainConfig& cfg,
                                   std::vector<Array>& grads) {
  model.fixed_ratio = cfg.fixed_ratio;
  Tape tape;
  ParameterBindings bindings;
  ForwardOutput out = forward(tape, model, ex.window, &bindings,
                              cfg.group_weight > 0 ? ex.labels : std::nullopt, cfg.group_weight);
  const double loss = out.loss.value()[0];
  if (!std::isfinite(loss)) throw NumericError("non-finite training loss", out.loss.id());
  tape.backward(out.loss);
  grads.clear();
  grads.reserve(bindings.size());
  for (const auto& b : bindings) {
    Array g = b.var.grad();
    if (!g.all_finite()) throw NumericError("non-finite parameter gradient", b.var.id());
    grads.push_back(std::move(g));
  }
  return {loss, out.nll.value()[0], out.partition.group_count()};
}

inline void clip_gradients(std::vector<Array>& grads, double cap) {
  if (!(cap > 0)) return;
  double sq = 0.0;
  for (const Array& g : grads)
    for (double v : g.values()) sq += v * v;
  const double norm = std::sqrt(sq);
  if (norm <= cap) return;
  for (Array& g : grads)
    for (double& v : g.values()) v *= cap / norm;
}

// Forward, backward and one update over a batch of windows (gradients
// averaged). Returns the mean loss before the update; a non-finite loss or
// gradient aborts the step with no update.
inline StepResult train_step(Model& model, Optimizer& opt,
                             std::span<const TrainingExample* const> batch,
                             const TrainConfig& cfg) {
  if (batch.empty()) throw ConfigError("train_step: empty batch");
  StepResult total;
  std::vector<Array> sum, grads;
  for (const TrainingExample* ex : batch) {
    StepResult r = window_gradients(model, *ex, cfg, grads);
    total.loss += r.loss;
    total.nll += r.nll;
    total.groups += r.groups;
    if (sum.empty()) {
      sum = std::move(grads);
    } else {
      for (std::size_t k = 0; k < sum.size(); ++k)
        for (std::size_t i = 0; i < sum[k].size(); ++i) sum[k][i] += grads[k][i];
    }
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (Array& g : sum)
    for (double& v : g.values()) v *= inv;
  clip_gradients(sum, cfg.grad_clip);
  opt.step(model, sum, cfg);
  total.loss *= inv;
  total.nll *= inv;
  return total;
}

inline StepResult train_step(Model& model, Optimizer& opt, const TrainingExample& ex,
                             const TrainConfig& cfg) {
  const TrainingExample* one[] = {&ex};
  return train_step(model, opt, one, cfg);
}

struct TrainResult {
  std::vector<double> epoch_loss;  // mean pre-update loss per epoch
  std::vector<double> epoch_nll;
};

// Epoch loop with a seeded shuffle. `on_epoch` (optional) sees each epoch's
// index and mean loss.
template <typename Callback>
TrainResult fit(Model& model, const std::vector<TrainingExample>& data, const TrainConfig& cfg,
                Callback&& on_epoch) {
  cfg.validate();
  if (data.empty()) throw ConfigError("fit: empty dataset");
  model.fixed_ratio = cfg.fixed_ratio;
  Optimizer opt(cfg.optimizer, cfg.learning_rate);
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(data.size());
  TrainResult result;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    // Fisher-Yates with explicit draws, so the order does not depend on the
    // standard library's shuffle implementation
    for (std::size_t i = order.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(rng() % i);
      std::swap(order[i - 1], order[j]);
    }
    double loss = 0.0, nll = 0.0;
    std::vector<const TrainingExample*> batch;
    for (std::size_t s = 0; s < order.size(); s += cfg.batch) {
      batch.clear();
      for (std::size_t b = s; b < std::min(order.size(), s + cfg.batch); ++b)
        batch.push_back(&data[order[b]]);
      try {
        StepResult r = train_step(model, opt, batch, cfg);
        loss += r.loss * static_cast<double>(batch.size());
        nll += r.nll * static_cast<double>(batch.size());
      } catch (const NumericError& e) {
        throw NumericError("epoch " + std::to_string(epoch) + ", step " +
                               std::to_string(s / cfg.batch) + ": " + e.what(),
                           e.node());
      }
    }
    result.epoch_loss.push_back(loss / static_cast<double>(data.size()));
    result.epoch_nll.push_back(nll / static_cast<double>(data.size()));
    on_epoch(epoch, result.epoch_loss.back());
  }
  return result;
}

inline TrainResult fit(Model& model, const std::vector<TrainingExample>& data,
                       const TrainConfig& cfg) {
  return fit(model, data, cfg, [](std::size_t, double) {});
}

inline double mean_nll(const Model& model, const std::vector<TrainingExample>& data) {
  double acc = 0.0;
  for (const auto& ex : data) {
    Tape tape;
    acc += forward(tape, const_cast<Model&>(model), ex.window, nullptr).nll.value()[0];
  }
  return data.empty() ? 0.0 : acc / static_cast<double>(data.size());
}

inline nlohmann::json train_sidecar(const TrainConfig& cfg, const TrainResult& r,
                                    const Model& m) {
  nlohmann::json j;
  j["config"] = {{"epochs", cfg.epochs},
                 {"learning_rate", cfg.learning_rate},
                 {"optimizer", to_string(cfg.optimizer)},
                 {"batch", cfg.batch},
                 {"group_weight", cfg.group_weight},
                 {"grad_clip", cfg.grad_clip},
                 {"seed", cfg.seed},
                 {"fixed_ratio", cfg.fixed_ratio},
                 {"obs_length", m.predictor.obs_length},
                 {"pred_length", m.predictor.pred_length},
                 {"temperature", m.group.temperature}};
  j["loss_trace"] = r.epoch_loss;
  j["nll_trace"] = r.epoch_nll;
  j["pi"] = m.group.pi();
  j["parameter_count"] = m.parameter_count();
  return j;
}

}  // namespace gpgraph
