#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "spikesplit/checkpoint.hpp"
#include "spikesplit/dataset.hpp"
#include "spikesplit/network.hpp"

namespace spikesplit {

/// Raised when the loss stops being finite.
class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Mean cross-entropy of logits (B, K); writes d(loss)/d(logits) into `grad` when given.
double cross_entropy(const Tensor& logits, std::span<const std::size_t> labels, Tensor* grad = nullptr);

/// Clears gradients, runs forward_train/backward for one batch and returns the
/// loss. Gradients of `loss_scale * loss` are left in each Param::grad.
double compute_gradients(Model& model, const Tensor& images, std::span<const std::size_t> labels,
                         std::size_t timesteps, const TrainOptions& opts = {}, double loss_scale = 1.0);

/// SGD with classical momentum: v = m*v + g; p -= lr*v. Skips non-trainable params.
class SgdMomentum {
 public:
  explicit SgdMomentum(double momentum = 0.9) : momentum_(momentum) {}
  void step(const std::vector<Param*>& params, double lr);
  void reset() { velocity_.clear(); }

 private:
  double momentum_;
  std::vector<Tensor> velocity_;
};

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 16;
  double learning_rate = 0.1;  // 0 freezes the model, running statistics included
  double momentum = 0.9;
  bool cosine = true;
  std::size_t timesteps = 2;
  std::uint64_t shuffle_seed = 7;
  TrainOptions options;
};

/// lr * (1 + cos(pi * epoch / epochs)) / 2 when cosine, else lr.
double scheduled_lr(const TrainConfig& cfg, std::size_t epoch);

struct EpochMetrics {
  std::size_t epoch = 0;
  double batch_loss = 0;  // mean train-mode loss over the epoch's batches
  double loss = 0;        // eval-mode loss on the training set after the epoch
  double accuracy = 0;    // eval-mode top-1 on the training set after the epoch
  double learning_rate = 0;

  friend bool operator==(const EpochMetrics&, const EpochMetrics&) = default;
};

struct TrainMetrics {
  std::vector<EpochMetrics> epochs;
  const EpochMetrics& last() const { return epochs.back(); }
};

TrainMetrics train(Model& model, const Dataset& data, const TrainConfig& cfg);

struct EvalResult {
  double accuracy = 0;
  double loss = 0;
};

EvalResult evaluate_model(const Model& model, const Dataset& data, std::size_t timesteps,
                          std::size_t batch_size = 64);
/// Top-1 accuracy in [0, 1].
double evaluate(const Model& model, const Dataset& data, std::size_t timesteps);
/// Restores the checkpoint onto `arch` first; mismatches throw.
double evaluate(const Checkpoint& ckpt, const ArchitectureSpec& arch, const Dataset& data, std::size_t timesteps);

/// Reference accuracy minus current accuracy, in percentage points.
double accuracy_drop(double reference_accuracy, double current_accuracy);
double accuracy_drop(const Model& reference, const Model& current, const Dataset& data, std::size_t timesteps);

struct TwoStepConfig {
  TrainConfig step1;
  TrainConfig step2;
  std::size_t split = 1;
  Shape3 bottleneck_out;
  std::uint64_t bottleneck_seed = 11;
};

struct TwoStepResult {
  Model base;   // after step 1
  Model model;  // after step 2, bottleneck inserted
  TrainMetrics step1;
  TrainMetrics step2;
  Checkpoint base_checkpoint;
  Checkpoint checkpoint;
};

/// Step 1 trains the network alone; step 2 inserts the bottleneck at the split
/// and fine-tunes every parameter jointly.
TwoStepResult train_two_step(Model base, const Dataset& data, const TwoStepConfig& cfg);

}  // namespace spikesplit
