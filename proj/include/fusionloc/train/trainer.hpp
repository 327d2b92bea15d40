#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "fusionloc/eval/metrics.hpp"
#include "fusionloc/nn/optim.hpp"
#include "fusionloc/train/config.hpp"
#include "fusionloc/train/pipeline.hpp"

namespace fusionloc::train {

struct LossPoint {
  std::size_t step = 0;
  double loss = 0.0;
  double beta = 0.0;
  double gamma = 0.0;
};

struct EvalPoint {
  std::size_t epoch = 0;
  eval::EvalReport report;
};

/// Owns the network, the optimizer over all of its parameters (the loss
/// balance terms included) and the single rng that drives shuffling,
/// augmentation, dropout and sampling starts.
class Trainer {
 public:
  Trainer(const RunConfig& cfg, const data::ImageNorm& norm);

  /// One optimizer step on the given examples; returns the batch loss.
  /// Throws DivergenceError on a non-finite loss, before any update.
  double step(std::span<const Example> examples, std::span<const std::size_t> indices);
  /// Shuffled mini-batches over every example; a trailing batch of one is
  /// dropped. Stops early when max_steps is reached.
  void run_epoch(std::span<const Example> examples);
  bool finished() const;

  /// Eval-mode predictions in example order; leaves the rng untouched.
  std::vector<core::Pose2D> predict(std::span<const Example> examples, std::size_t batch_size = 64);
  eval::EvalReport evaluate(std::span<const Example> examples, std::vector<eval::FrameRecord>* records = nullptr);

  /// checkpoint.bin (parameters, buffers, optimizer moments, f64), checkpoint.txt
  /// (epoch, step, config hash, rng state), config.ini, norm.txt and loss.csv.
  void save(const std::filesystem::path& dir) const;
  static std::unique_ptr<Trainer> load(const std::filesystem::path& dir);

  model::FusionLocNet& net() { return *net_; }
  const RunConfig& config() const { return cfg_; }
  const data::ImageNorm& norm() const { return norm_; }
  std::size_t epoch() const { return epoch_; }
  std::size_t step_count() const { return static_cast<std::size_t>(adam_->step_count()); }
  const std::vector<LossPoint>& loss_curve() const { return curve_; }
  Rng& rng() { return rng_; }

 private:
  RunConfig cfg_;
  data::ImageNorm norm_;
  Rng rng_;
  std::unique_ptr<model::FusionLocNet> net_;
  std::unique_ptr<nn::Adam> adam_;
  std::size_t epoch_ = 0;
  std::vector<LossPoint> curve_;
};

void save_loss_curve(std::span<const LossPoint> curve, const std::filesystem::path& path);
std::vector<LossPoint> load_loss_curve(const std::filesystem::path& path);

struct TrainOptions {
  /// Checkpoints, loss curve and evaluation reports go here when set.
  std::filesystem::path out_dir;
  std::function<void(const std::string&)> log;
};

/// Runs epochs until the trainer is finished, evaluating every eval_every
/// epochs and at the end when eval examples are given.
std::vector<EvalPoint> fit(Trainer& trainer, std::span<const Example> train_examples,
                           std::span<const Example> eval_examples, const TrainOptions& options = {});

}  // namespace fusionloc::train
