#include "adsr/training.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <fmt/format.h>

#include "adsr/error.hpp"
#include "adsr/metrics.hpp"
#include "adsr/resample.hpp"

namespace adsr {

LossKind parse_loss_kind(const std::string& s) {
  if (s == "l2" || s == "mse") return LossKind::l2;
  if (s == "l1" || s == "mae") return LossKind::l1;
  throw ConfigError("unknown loss '" + s + "' (l2 | l1)");
}

double loss_value(const Tensor& pred, const Tensor& target, LossKind kind) {
  if (pred.shape() != target.shape()) {
    throw ShapeError("loss: " + pred.shape().str() + " vs " + target.shape().str());
  }
  if (pred.empty()) throw ShapeError("loss of empty tensors");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    acc += kind == LossKind::l2 ? d * d : std::fabs(d);
  }
  return acc / static_cast<double>(pred.size());
}

namespace ops {

Var loss(Tape& tape, const Var& pred, const Tensor& target, LossKind kind) {
  const double value = loss_value(*pred, target, kind);
  return tape.record(kind == LossKind::l2 ? "mse" : "l1", Tensor({1, 1, 1, 1}, value), {pred},
                     [pred, target, kind](const Tensor& o) {
                       if (!pred->requires_grad()) return;
                       const double g = o.grad()[0] / static_cast<double>(pred->size());
                       auto dst = pred->grad();
                       for (std::size_t i = 0; i < dst.size(); ++i) {
                         const double d = (*pred)[i] - target[i];
                         dst[i] += kind == LossKind::l2
                                       ? 2.0 * d * g
                                       : static_cast<double>((d > 0.0) - (d < 0.0)) * g;
                       }
                     });
}

}  // namespace ops

// ---------------------------------------------------------------------------

OptimizerState OptimizerState::create(const std::vector<ParamRef>& params, double lr_conv,
                                      double lr_adder) {
  OptimizerState s;
  s.lr_conv = lr_conv;
  s.lr_adder = lr_adder;
  for (const auto& p : params) {
    s.slots.push_back({p, std::vector<double>(p.tensor->size(), 0.0),
                       std::vector<double>(p.tensor->size(), 0.0)});
  }
  return s;
}

void zero_grad(OptimizerState& state) {
  for (auto& slot : state.slots) slot.param.tensor->zero_grad();
}

void adam_step(OptimizerState& state) {
  for (const auto& slot : state.slots) {
    if (!slot.param.tensor->has_grad()) {
      throw StateError("parameter '" + slot.param.name + "' has no gradient");
    }
  }
  for (const auto& slot : state.slots) {
    for (double g : std::as_const(*slot.param.tensor).grad()) {
      if (!std::isfinite(g)) {
        throw NumericalError("non-finite gradient in parameter '" + slot.param.name + "'");
      }
    }
  }

  double clip = 1.0;
  if (state.clip_norm > 0.0) {
    double sq = 0.0;
    for (const auto& slot : state.slots) {
      for (double g : std::as_const(*slot.param.tensor).grad()) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    if (norm > state.clip_norm) clip = state.clip_norm / norm;
  }

  ++state.step;
  const auto& h = state.hyper;
  const double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.step));
  for (auto& slot : state.slots) {
    Tensor& p = *slot.param.tensor;
    const auto grad = std::as_const(p).grad();
    double scale = clip;
    if (state.adaptive_adder_scaling && slot.param.group == ParamGroup::adder &&
        !slot.param.is_exponent && p.shape().h > 1) {
      double sq = 0.0;
      for (double g : grad) sq += g * g;
      if (sq > 0.0) {
        scale *= state.adaptive_eta * std::sqrt(static_cast<double>(p.size())) / std::sqrt(sq);
      }
    }
    const double lr = state.lr_for(slot.param.group);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double g = grad[i] * scale;
      slot.m[i] = h.beta1 * slot.m[i] + (1.0 - h.beta1) * g;
      slot.v[i] = h.beta2 * slot.v[i] + (1.0 - h.beta2) * g * g;
      const double mhat = slot.m[i] / bc1, vhat = slot.v[i] / bc2;
      p[i] -= lr * mhat / (std::sqrt(vhat) + h.eps);
    }
    if (slot.param.is_exponent) {
      for (double& a : p.data()) a = std::clamp(a, kAlphaMin, kAlphaMax);
    }
  }
}

// ---------------------------------------------------------------------------
// Configuration

void TrainConfig::validate() const {
  if (!(lr_conv > 0.0) || !(lr_adder > 0.0)) throw ConfigError("learning rates must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (scale < 2 || scale > 4) throw ConfigError("scale must be 2, 3 or 4");
  if (patch_size == 0 || patch_size % static_cast<std::size_t>(scale) != 0) {
    throw ConfigError("patch_size must be a positive multiple of the scale");
  }
  if (patch_size < 3) throw ConfigError("patch_size must cover the 3x3 kernels");
  if (model.depth < 3) throw ConfigError("depth must be at least 3");
  if (model.width < 1) throw ConfigError("width must be at least 1");
  if (data.stride == 0) throw ConfigError("stride must be positive");
  if (lr_decay_every > 0 && !(lr_decay_gamma > 0.0)) throw ConfigError("lr_decay_gamma must be positive");
}

TrainConfig vdsr_preset() {
  TrainConfig c;
  c.model.depth = 20;
  c.model.width = 64;
  c.patch_size = 40;  // needs a multiple of the scale; 42 for x3
  c.batch_size = 64;
  c.epochs = 80;
  c.lr_decay_every = 20;
  c.lr_decay_gamma = 0.5;
  c.data.stride = 40;
  c.data.augment = {true, true};
  return c;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  std::istringstream in(v);
  T out{};
  if (!(in >> out) || !in.eof()) throw ConfigError("bad value for '" + key + "': '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "on" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "off" || v == "0" || v == "no") return false;
  throw ConfigError("bad boolean for '" + key + "': '" + v + "'");
}

}  // namespace

TrainConfig parse_train_config(const std::string& text) {
  TrainConfig c;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find_first_of("#;"); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(fmt::format("config line {}: bad section header", lineno));
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(fmt::format("config line {}: expected key = value", lineno));
    const std::string key = trim(line.substr(0, eq)), v = trim(line.substr(eq + 1));
    const std::string full = section.empty() ? key : section + "." + key;

    if (full == "preset") {
      if (v == "vdsr") {
        c = vdsr_preset();
      } else if (v != "desk") {
        throw ConfigError("unknown preset '" + v + "'");
      }
    } else if (full == "train.lr_conv") c.lr_conv = parse_number<double>(full, v);
    else if (full == "train.lr_adder") c.lr_adder = parse_number<double>(full, v);
    else if (full == "train.batch_size") c.batch_size = parse_number<std::size_t>(full, v);
    else if (full == "train.patch_size") c.patch_size = parse_number<std::size_t>(full, v);
    else if (full == "train.epochs") c.epochs = parse_number<std::size_t>(full, v);
    else if (full == "train.seed") c.seed = parse_number<std::uint64_t>(full, v);
    else if (full == "train.loss") c.loss = parse_loss_kind(v);
    else if (full == "train.scale") c.scale = parse_number<int>(full, v);
    else if (full == "train.clip_norm") c.clip_norm = parse_number<double>(full, v);
    else if (full == "train.adaptive_adder_lr") c.adaptive_adder_lr = parse_bool(full, v);
    else if (full == "train.lr_decay_every") c.lr_decay_every = parse_number<std::size_t>(full, v);
    else if (full == "train.lr_decay_gamma") c.lr_decay_gamma = parse_number<double>(full, v);
    else if (full == "model.variant") {
      if (v == "conv") c.model.variant = Variant::conv;
      else if (v == "adder") c.model.variant = Variant::adder;
      else throw ConfigError("unknown variant '" + v + "'");
    } else if (full == "model.depth") c.model.depth = parse_number<int>(full, v);
    else if (full == "model.width") c.model.width = parse_number<int>(full, v);
    else if (full == "model.self_shortcut") c.model.adder.self_shortcut = parse_bool(full, v);
    else if (full == "model.power_activation") c.model.adder.power_activation = parse_bool(full, v);
    else if (full == "data.train_dir") c.data.train_dir = v;
    else if (full == "data.val_dir") c.data.val_dir = v;
    else if (full == "data.synthetic_train") c.data.synthetic_train = parse_number<std::size_t>(full, v);
    else if (full == "data.synthetic_val") c.data.synthetic_val = parse_number<std::size_t>(full, v);
    else if (full == "data.image_size") c.data.image_size = parse_number<std::size_t>(full, v);
    else if (full == "data.synthetic_seed") c.data.synthetic_seed = parse_number<std::uint64_t>(full, v);
    else if (full == "data.stride") c.data.stride = parse_number<std::size_t>(full, v);
    else if (full == "data.flips") c.data.augment.flips = parse_bool(full, v);
    else if (full == "data.rotations") c.data.augment.rotations = parse_bool(full, v);
    else if (full == "output.dir") c.out_dir = v;
    else throw ConfigError(fmt::format("config line {}: unknown key '{}'", lineno, full));
  }
  c.validate();
  return c;
}

TrainConfig load_train_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_train_config(ss.str());
}

// ---------------------------------------------------------------------------
// Evaluation

ValidationSet make_validation_set(const std::vector<ImagePlane>& hr_images, std::size_t scale) {
  ValidationSet val;
  val.scale = scale;
  for (const auto& img : hr_images) {
    const ImagePlane hr = to_unit(mod_crop(img, scale));
    val.hr.push_back(plane_to_tensor(hr));
    val.lr.push_back(plane_to_tensor(degrade(hr, scale)));
  }
  return val;
}

double evaluate_psnr(Model& model, const ValidationSet& val) {
  if (val.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < val.hr.size(); ++i) {
    const Tensor pred = model.forward(val.lr[i], false);
    const auto& s = pred.shape();
    total += psnr(pred.data(), val.hr[i].data(), s.w, s.h, 1.0, val.scale);
  }
  return total / static_cast<double>(val.hr.size());
}

double bicubic_psnr(const ValidationSet& val) {
  if (val.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < val.hr.size(); ++i) {
    const auto& s = val.hr[i].shape();
    total += psnr(val.lr[i].data(), val.hr[i].data(), s.w, s.h, 1.0, val.scale);
  }
  return total / static_cast<double>(val.hr.size());
}

// ---------------------------------------------------------------------------
// Training loop

namespace {

Tensor stack(const PatchSet& data, const std::vector<std::size_t>& order, std::size_t begin,
             std::size_t end, bool hr) {
  const std::size_t p = data.patch;
  Tensor out({end - begin, 1, p, p});
  for (std::size_t b = begin; b < end; ++b) {
    const Tensor& src = hr ? data.pairs[order[b]].hr : data.pairs[order[b]].lr;
    std::copy(src.data().begin(), src.data().end(), out.data().begin() + (b - begin) * p * p);
  }
  return out;
}

}  // namespace

TrainResult train(Model& model, const PatchSet& data, const ValidationSet& val,
                  const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  if (data.empty()) throw ParameterError("training set is empty");

  OptimizerState opt = OptimizerState::create(model.parameters(), cfg.lr_conv, cfg.lr_adder);
  opt.clip_norm = cfg.clip_norm;
  opt.adaptive_adder_scaling = cfg.adaptive_adder_lr;

  TrainResult result;
  result.bicubic_val_psnr = bicubic_psnr(val);

  std::mt19937_64 rng(splitmix64(cfg.seed ^ 0x5eedULL));
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    if (cfg.lr_decay_every > 0 && epoch > 1 && (epoch - 1) % cfg.lr_decay_every == 0) {
      opt.lr_conv *= cfg.lr_decay_gamma;
      opt.lr_adder *= cfg.lr_decay_gamma;
    }
    // Fisher-Yates with raw draws so the order does not depend on the
    // standard library's distribution implementation.
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);

    double epoch_loss = 0.0;
    std::size_t steps = 0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const std::size_t e = std::min(order.size(), b + cfg.batch_size);
      Tape tape;
      const Var x = make_var(stack(data, order, b, e, false));
      const Tensor target = stack(data, order, b, e, true);
      const Var pred = model.forward(tape, x, true);
      const Var loss = ops::loss(tape, pred, target, cfg.loss);
      const double lv = (*loss)[0];
      if (!std::isfinite(lv)) {
        throw NumericalError(fmt::format("non-finite loss at epoch {} step {}", epoch, steps));
      }
      zero_grad(opt);
      tape.backward(loss);
      adam_step(opt);
      result.step_losses.push_back(lv);
      epoch_loss += lv;
      ++steps;
    }
    EpochRecord rec{epoch, epoch_loss / static_cast<double>(steps), evaluate_psnr(model, val)};
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return result;
}

std::string metrics_csv(const std::vector<EpochRecord>& history) {
  std::string out = "epoch,train_loss,val_psnr\n";
  for (const auto& r : history) out += fmt::format("{},{:.17g},{:.17g}\n", r.epoch, r.train_loss, r.val_psnr);
  return out;
}

TrainingRun run_training(const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  const auto scale = static_cast<std::size_t>(cfg.scale);
  const auto& d = cfg.data;
  const std::vector<ImagePlane> train_images =
      d.train_dir.empty() ? synthetic_corpus(d.synthetic_train, d.image_size, d.image_size, d.synthetic_seed)
                          : load_luminance_dir(d.train_dir);
  const std::vector<ImagePlane> val_images =
      d.val_dir.empty()
          ? synthetic_corpus(d.synthetic_val, d.image_size, d.image_size, splitmix64(d.synthetic_seed + 0x7a1ULL))
          : load_luminance_dir(d.val_dir);

  const PatchSet patches = make_patchset(train_images, scale, cfg.patch_size, d.stride, d.augment);
  const ValidationSet val = make_validation_set(val_images, scale);

  TrainingRun run{build_tiny_vdsr(cfg.model.variant, cfg.model.depth, cfg.model.width, cfg.scale,
                                  cfg.seed, cfg.model.adder),
                  {}};
  run.result = train(run.model, patches, val, cfg, on_epoch);

  if (!cfg.out_dir.empty()) {
    std::filesystem::create_directories(cfg.out_dir);
    save_checkpoint((std::filesystem::path(cfg.out_dir) / "model.adsr").string(), run.model.to_checkpoint());
    std::ofstream csv(std::filesystem::path(cfg.out_dir) / "metrics.csv");
    csv << metrics_csv(run.result.history);
  }
  return run;
}

}  // namespace adsr
