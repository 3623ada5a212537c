#include "spikesplit/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "spikesplit/error.hpp"
#include "spikesplit/random.hpp"

namespace spikesplit {

double cross_entropy(const Tensor& logits, std::span<const std::size_t> labels, Tensor* grad) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size()) {
    throw ShapeError("cross_entropy: logits " + dims_to_string(logits.dims()) + " vs " +
                     std::to_string(labels.size()) + " labels");
  }
  const std::size_t b = logits.dim(0);
  const std::size_t k = logits.dim(1);
  if (grad) *grad = Tensor(logits.dims());
  double total = 0;
  for (std::size_t i = 0; i < b; ++i) {
    if (labels[i] >= k) throw ValueError("label outside class range");
    const Real* row = logits.data() + i * k;
    const Real mx = *std::max_element(row, row + k);
    double z = 0;
    for (std::size_t j = 0; j < k; ++j) z += std::exp(row[j] - mx);
    const double log_z = mx + std::log(z);
    total += log_z - row[labels[i]];
    if (grad) {
      Real* g = grad->data() + i * k;
      for (std::size_t j = 0; j < k; ++j) {
        g[j] = (std::exp(row[j] - log_z) - (j == labels[i] ? 1.0 : 0.0)) / static_cast<Real>(b);
      }
    }
  }
  return total / static_cast<double>(b);
}

double compute_gradients(Model& model, const Tensor& images, std::span<const std::size_t> labels,
                         std::size_t timesteps, const TrainOptions& opts, double loss_scale) {
  model.zero_grad();
  const Tensor logits = model.forward_train(images, timesteps, opts);
  Tensor grad;
  const double loss = cross_entropy(logits, labels, &grad);
  grad *= loss_scale;
  model.backward(grad);
  return loss;
}

void SgdMomentum::step(const std::vector<Param*>& params, double lr) {
  if (velocity_.empty()) {
    velocity_.reserve(params.size());
    for (const Param* p : params) velocity_.emplace_back(p->value.dims());
  }
  if (velocity_.size() != params.size()) throw StateError("optimizer reused with a different parameter set");
  for (std::size_t i = 0; i < params.size(); ++i) {
    Param& p = *params[i];
    if (!p.trainable) continue;
    Real* v = velocity_[i].data();
    Real* w = p.value.data();
    const Real* g = p.grad.data();
    for (std::size_t j = 0; j < p.value.numel(); ++j) {
      v[j] = momentum_ * v[j] + g[j];
      w[j] -= lr * v[j];
    }
  }
}

double scheduled_lr(const TrainConfig& cfg, std::size_t epoch) {
  if (!cfg.cosine || cfg.epochs == 0) return cfg.learning_rate;
  return cfg.learning_rate * 0.5 *
         (1 + std::cos(std::numbers::pi * static_cast<double>(epoch) / static_cast<double>(cfg.epochs)));
}

EvalResult evaluate_model(const Model& model, const Dataset& data, std::size_t timesteps, std::size_t batch_size) {
  if (data.size() == 0) throw ValueError("cannot evaluate on an empty dataset");
  if (model.arch().classes != data.classes || model.arch().input != data.sample_shape()) {
    throw ShapeError("dataset does not fit architecture " + model.arch().name);
  }
  std::size_t correct = 0;
  double loss = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    idx.resize(std::min(batch_size, data.size() - start));
    std::iota(idx.begin(), idx.end(), start);
    const Tensor logits = model.infer(data.gather(idx), timesteps);
    const auto labels = data.gather_labels(idx);
    loss += cross_entropy(logits, labels) * static_cast<double>(idx.size());
    const std::size_t k = logits.dim(1);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const Real* row = logits.data() + i * k;
      if (static_cast<std::size_t>(std::max_element(row, row + k) - row) == labels[i]) ++correct;
    }
  }
  return {static_cast<double>(correct) / static_cast<double>(data.size()), loss / static_cast<double>(data.size())};
}

double evaluate(const Model& model, const Dataset& data, std::size_t timesteps) {
  return evaluate_model(model, data, timesteps).accuracy;
}

double evaluate(const Checkpoint& ckpt, const ArchitectureSpec& arch, const Dataset& data, std::size_t timesteps) {
  return evaluate(model_from_checkpoint(arch, ckpt), data, timesteps);
}

double accuracy_drop(double reference_accuracy, double current_accuracy) {
  return 100.0 * (reference_accuracy - current_accuracy);
}

double accuracy_drop(const Model& reference, const Model& current, const Dataset& data, std::size_t timesteps) {
  return accuracy_drop(evaluate(reference, data, timesteps), evaluate(current, data, timesteps));
}

TrainMetrics train(Model& model, const Dataset& data, const TrainConfig& cfg) {
  data.validate();
  if (cfg.batch_size == 0) throw ValueError("batch size must be >= 1");
  if (!(cfg.learning_rate >= 0.0)) throw ValueError("learning rate must be >= 0");
  const bool frozen = cfg.learning_rate == 0.0;
  auto params = model.parameters();
  SgdMomentum opt(cfg.momentum);
  Rng rng(cfg.shuffle_seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainMetrics metrics;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = scheduled_lr(cfg, epoch);
    std::shuffle(order.begin(), order.end(), rng.engine());
    double loss_sum = 0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::span<const std::size_t> idx(order.data() + start, std::min(cfg.batch_size, order.size() - start));
      std::vector<Tensor> saved;
      if (frozen) {
        for (const Param* p : params) saved.push_back(p->value);
      }
      const double loss = compute_gradients(model, data.gather(idx), data.gather_labels(idx), cfg.timesteps,
                                            cfg.options);
      if (!std::isfinite(loss)) {
        throw TrainingDiverged("loss became " + std::to_string(loss) + " at epoch " + std::to_string(epoch + 1) +
                               ", batch " + std::to_string(batches + 1) + " (lr " + std::to_string(lr) + ")");
      }
      if (frozen) {
        for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = saved[i];
      } else {
        opt.step(params, lr);
      }
      loss_sum += loss;
      ++batches;
    }
    for (const Param* p : params) {
      if (!p->value.all_finite()) throw TrainingDiverged("parameter " + p->name + " became non-finite");
    }
    const EvalResult ev = evaluate_model(model, data, cfg.timesteps);
    metrics.epochs.push_back({epoch + 1, loss_sum / static_cast<double>(batches), ev.loss, ev.accuracy, lr});
  }
  return metrics;
}

TwoStepResult train_two_step(Model base, const Dataset& data, const TwoStepConfig& cfg) {
  TwoStepResult r;
  r.step1 = train(base, data, cfg.step1);
  r.base_checkpoint = capture(base);
  r.model = base;
  r.model.insert_bottleneck(
      cfg.split, make_bottleneck(base.arch().split_shape(cfg.split), cfg.bottleneck_out, cfg.step2.timesteps),
      cfg.bottleneck_seed);
  r.step2 = train(r.model, data, cfg.step2);
  r.checkpoint = capture(r.model);
  r.base = std::move(base);
  return r;
}

}  // namespace spikesplit
