#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "adsr/dataset.hpp"
#include "adsr/models.hpp"
#include "adsr/tape.hpp"

namespace adsr {

enum class LossKind { l2, l1 };

LossKind parse_loss_kind(const std::string& s);

/// Mean squared (l2) or mean absolute (l1) error.
double loss_value(const Tensor& pred, const Tensor& target, LossKind kind);

namespace ops {
Var loss(Tape& tape, const Var& pred, const Tensor& target, LossKind kind);
}

// ---------------------------------------------------------------------------
// ADAM with per-group learning rates

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct OptimizerSlot {
  ParamRef param;
  std::vector<double> m;
  std::vector<double> v;
};

struct OptimizerState {
  std::vector<OptimizerSlot> slots;
  std::uint64_t step = 0;
  double lr_conv = 3e-4;
  double lr_adder = 3e-3;
  AdamHyper hyper;
  /// Rescales each adder weight gradient to eta * sqrt(numel) / ||g||
  /// before the update.
  bool adaptive_adder_scaling = false;
  double adaptive_eta = 0.1;
  /// Global gradient-norm clip; <= 0 disables.
  double clip_norm = 0.0;

  static OptimizerState create(const std::vector<ParamRef>& params, double lr_conv,
                               double lr_adder);
  double lr_for(ParamGroup g) const noexcept { return g == ParamGroup::adder ? lr_adder : lr_conv; }
};

/// Zeroes every parameter gradient.
void zero_grad(OptimizerState& state);

/// One bias-corrected ADAM update over all slots; exponents are clamped to
/// [kAlphaMin, kAlphaMax] afterwards. Throws StateError if a parameter has no
/// gradient buffer.
void adam_step(OptimizerState& state);

// ---------------------------------------------------------------------------

struct ModelConfig {
  Variant variant = Variant::adder;
  int depth = 8;
  int width = 16;
  AdderOptions adder;
};

struct DataConfig {
  std::string train_dir;  // empty -> synthetic corpus
  std::string val_dir;
  std::size_t synthetic_train = 24;
  std::size_t synthetic_val = 6;
  std::size_t image_size = 64;
  std::uint64_t synthetic_seed = 1234;
  std::size_t stride = 32;
  Augment augment{};
};

struct TrainConfig {
  double lr_conv = 3e-4;
  double lr_adder = 3e-3;
  std::size_t batch_size = 8;
  std::size_t patch_size = 32;
  std::size_t epochs = 20;
  std::uint64_t seed = 1;
  LossKind loss = LossKind::l2;
  int scale = 2;
  double clip_norm = 0.0;
  bool adaptive_adder_lr = false;
  /// Multiply both learning rates by `lr_decay_gamma` every `lr_decay_every`
  /// epochs; 0 disables.
  std::size_t lr_decay_every = 0;
  double lr_decay_gamma = 0.5;

  ModelConfig model;
  DataConfig data;
  std::string out_dir;  // checkpoint and metrics CSV; empty -> nothing written

  /// Throws ConfigError for invalid combinations.
  void validate() const;
};

/// Flat INI text: `[section]` headers (train, model, data, output) and
/// `key = value` lines. Unknown keys are errors.
TrainConfig parse_train_config(const std::string& text);
TrainConfig load_train_config(const std::string& path);

/// The long-run preset: 20-layer width-64 model with step decay.
TrainConfig vdsr_preset();

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_psnr = 0.0;
};

/// Full validation images as (lr_upsampled, hr) pairs.
struct ValidationSet {
  std::vector<Tensor> lr;
  std::vector<Tensor> hr;
  std::size_t scale = 2;

  bool empty() const noexcept { return hr.empty(); }
};

ValidationSet make_validation_set(const std::vector<ImagePlane>& hr_images, std::size_t scale);

/// Mean PSNR (peak 1, border crop = scale) of the model in eval mode.
double evaluate_psnr(Model& model, const ValidationSet& val);
/// Mean PSNR of the bicubic input itself.
double bicubic_psnr(const ValidationSet& val);

struct TrainResult {
  std::vector<EpochRecord> history;
  std::vector<double> step_losses;
  double bicubic_val_psnr = 0.0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Trains in place. Deterministic for a fixed config. A NaN loss or
/// non-finite activation raises NumericalError naming the layer.
TrainResult train(Model& model, const PatchSet& data, const ValidationSet& val,
                  const TrainConfig& cfg, const EpochCallback& on_epoch = {});

/// Builds data and model from the config, trains, and (if out_dir is set)
/// writes model.adsr and metrics.csv there.
struct TrainingRun {
  Model model;
  TrainResult result;
};
TrainingRun run_training(const TrainConfig& cfg, const EpochCallback& on_epoch = {});

std::string metrics_csv(const std::vector<EpochRecord>& history);

}  // namespace adsr
