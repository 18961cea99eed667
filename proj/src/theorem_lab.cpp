#include "adsr/theorem_lab.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "adsr/adder_ops.hpp"
#include "adsr/error.hpp"

namespace adsr {

double TheoremReport::measured(const std::string& name) const {
  for (const auto& [k, v] : measurements) {
    if (k == name) return v;
  }
  throw StateError("report has no measurement '" + name + "'");
}

nlohmann::json TheoremReport::to_json() const {
  nlohmann::json j;
  j["theorem"] = theorem;
  j["d"] = d;
  j["c"] = c;
  j["seed"] = seed;
  j["trials"] = trials;
  j["measurements"] = nlohmann::json::object();
  for (const auto& [k, v] : measurements) {
    j["measurements"][k] = std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(fmt::format("{}", v));
  }
  j["checks"] = checks;
  j["verdict"] = pass ? "pass" : "fail";
  return j;
}

std::string TheoremReport::summary() const {
  std::string out = fmt::format("[{}] {} (d={}, c={}, trials={}, seed={})\n", pass ? "pass" : "FAIL",
                                theorem, d, c, trials, seed);
  for (const auto& [k, v] : measurements) out += fmt::format("    {:<34} {:.12g}\n", k, v);
  for (const auto& chk : checks) out += fmt::format("    check: {}\n", chk);
  return out;
}

namespace {

Tensor crop_top_left(const Tensor& y, std::size_t h, std::size_t w) {
  const auto& s = y.shape();
  Tensor out({s.n, s.c, h, w});
  for (std::size_t b = 0; b < s.n; ++b) {
    for (std::size_t c = 0; c < s.c; ++c) {
      for (std::size_t i = 0; i < h; ++i) {
        for (std::size_t j = 0; j < w; ++j) out.at(b, c, i, j) = y.at(b, c, i, j);
      }
    }
  }
  return out;
}

// Adder layer mapping (n, c, d, d) onto the same shape: padding d/2 and a
// top-left crop (a no-op for odd d).
Tensor identity_candidate(const Tensor& x, const Tensor& w) {
  const std::size_t k = w.shape().h;
  const Tensor y = adder_correlate(x, w, Geometry{1, k / 2});
  return crop_top_left(y, x.shape().h, x.shape().w);
}

double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::fabs(x));
  return m;
}

// Relative L2 error of the best bare-adder fit to the identity on `x`.
double fit_identity(const Tensor& x, std::size_t k, std::uint64_t seed, const IdentityOptions& opt) {
  const std::size_t c = x.shape().c;
  const double bound = std::sqrt(6.0 / static_cast<double>(k * k * c));
  Var w = make_param(seeded_uniform({c, c, k, k}, -bound, bound, seed));
  OptimizerState state = OptimizerState::create({ParamRef{"w", w, ParamGroup::adder}}, opt.lr, opt.lr);
  const Geometry g{1, k / 2};
  const std::size_t h = x.shape().h, wd = x.shape().w;
  double norm_x = 0.0;
  for (double v : x.data()) norm_x += v * v;
  norm_x = std::sqrt(norm_x);

  double best = std::numeric_limits<double>::infinity();
  for (std::size_t step = 0; step <= opt.opt_steps; ++step) {
    const Tensor full = adder_correlate(x, *w, g);
    Tensor dy(full.shape(), 0.0);
    double err = 0.0;
    const double inv = 1.0 / static_cast<double>(x.size());
    for (std::size_t b = 0; b < x.shape().n; ++b) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t i = 0; i < h; ++i) {
          for (std::size_t j = 0; j < wd; ++j) {
            const double diff = full.at(b, ch, i, j) - x.at(b, ch, i, j);
            err += diff * diff;
            dy.at(b, ch, i, j) = 2.0 * diff * inv;
          }
        }
      }
    }
    best = std::min(best, std::sqrt(err) / norm_x);
    if (step == opt.opt_steps) break;
    zero_grad(state);
    const LayerGrads grads = adder_backward(x, *w, g, dy);
    accumulate_grad(*w, grads.dw.data());
    adam_step(state);
  }
  return best;
}

}  // namespace

TheoremReport verify_identity_impossibility(int d, int c, std::size_t trials, std::uint64_t seed,
                                            const IdentityOptions& options) {
  if (d < 1 || c < 1) throw ParameterError("d and c must be at least 1");
  const auto dd = static_cast<std::size_t>(d), cc = static_cast<std::size_t>(c);
  TheoremReport r;
  r.theorem = "identity";
  r.d = d;
  r.c = c;
  r.seed = seed;
  r.trials = trials;

  // (a) sign obstruction on inputs dominating the filter magnitude.
  double max_output = -std::numeric_limits<double>::infinity();
  double min_margin = std::numeric_limits<double>::infinity();
  double min_residual = std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < trials; ++t) {
    const std::uint64_t s = splitmix64(seed + 2 * t);
    const Tensor w = seeded_uniform({cc, cc, dd, dd}, -1.0, 1.0, s);
    const double wmax = max_abs(w.data());
    const Tensor x = seeded_uniform({1, cc, dd, dd}, wmax + 0.5, wmax + 1.5, splitmix64(s));
    const Tensor y = identity_candidate(x, w);
    double residual = 0.0, xmin = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < y.size(); ++i) {
      max_output = std::max(max_output, y[i]);
      residual = std::max(residual, std::fabs(x[i] - y[i]));
      xmin = std::min(xmin, x[i]);
    }
    min_residual = std::min(min_residual, residual);
    min_margin = std::min(min_margin, residual - xmin);
  }
  if (trials == 0) max_output = min_margin = min_residual = 0.0;

  // Non-positivity on arbitrary-sign inputs.
  std::size_t evaluated = 0, positive = 0;
  for (std::uint64_t t = 0; evaluated < options.evaluations; ++t) {
    const std::uint64_t s = splitmix64(seed ^ (0xabcdULL + t));
    const std::size_t ch = 1 + s % 4, k = (s >> 8) % 2 == 0 ? 1 : 3;
    const Tensor x = seeded_uniform({1, ch, 8, 8}, -3.0, 3.0, splitmix64(s + 1));
    const Tensor w = seeded_uniform({ch, ch, k, k}, -3.0, 3.0, splitmix64(s + 2));
    const Tensor y = adder_correlate(x, w, Geometry{1, k / 2});
    for (double v : y.data()) positive += v > 0.0 ? 1 : 0;
    evaluated += y.size();
  }

  // (b) optimization: bare adder layer fitted to the identity.
  const std::size_t k = dd;
  const Tensor x_fit = seeded_uniform({4, cc, std::max<std::size_t>(dd, 8), std::max<std::size_t>(dd, 8)},
                                      0.1, 1.0, splitmix64(seed + 0xf17ULL));
  double min_rel = std::numeric_limits<double>::infinity();
  for (std::size_t restart = 0; restart < options.restarts; ++restart) {
    min_rel = std::min(min_rel, fit_identity(x_fit, k, splitmix64(seed + 0x1000ULL + restart), options));
  }
  if (options.restarts == 0) min_rel = 0.0;

  // Shortcut contrast at init.
  const std::size_t k_odd = dd % 2 == 1 ? dd : dd + 1;
  AdderLayerParams block = AdderLayerParams::create(cc, cc, k_odd, splitmix64(seed + 0x5c), 0.0);
  const PowerActParams alpha = PowerActParams::create(1.0);
  const Tensor y_block = self_shortcut_block(x_fit, block, alpha, true);
  double shortcut_residual = 0.0;
  for (std::size_t i = 0; i < x_fit.size(); ++i) {
    shortcut_residual = std::max(shortcut_residual, std::fabs(y_block[i] - x_fit[i]));
  }

  r.measurements = {
      {"analytic_max_output", max_output},
      {"analytic_min_residual", min_residual},
      {"analytic_min_residual_minus_min_x", min_margin},
      {"nonpositivity_evaluations", static_cast<double>(evaluated)},
      {"nonpositivity_violations", static_cast<double>(positive)},
      {"fit_min_relative_error", min_rel},
      {"fit_restarts", static_cast<double>(options.restarts)},
      {"fit_steps", static_cast<double>(options.opt_steps)},
      {"shortcut_init_residual", shortcut_residual},
  };
  r.checks = {"analytic_max_output <= 0", "analytic_min_residual_minus_min_x >= 0",
              "analytic_min_residual > 0", "nonpositivity_violations == 0",
              "fit_min_relative_error >= 0.5", "shortcut_init_residual < 1e-6"};
  r.pass = max_output <= 0.0 && min_margin >= 0.0 && (trials == 0 || min_residual > 0.0) &&
           positive == 0 && min_rel >= 0.5 && shortcut_residual < 1e-6;
  return r;
}

double constant_response(const Tensor& w, double s) {
  const auto& ws = w.shape();
  if (ws.n != 1 || ws.h != ws.w) throw ShapeError("constant_response expects a (1, c, d, d) filter");
  const Tensor x({1, ws.c, ws.h, ws.w}, s);
  return adder_correlate(x, w, Geometry{1, 0})[0];
}

TheoremReport verify_highpass_impossibility(int d, int c, std::size_t trials, std::uint64_t seed) {
  if (d < 1 || c < 1) throw ParameterError("d and c must be at least 1");
  const auto dd = static_cast<std::size_t>(d), cc = static_cast<std::size_t>(c);
  TheoremReport r;
  r.theorem = "highpass";
  r.d = d;
  r.c = c;
  r.seed = seed;
  r.trials = trials;

  const double expected = -static_cast<double>(dd * dd * cc);
  double max_dev = 0.0, min_slope = std::numeric_limits<double>::infinity(),
         max_slope = -std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < trials; ++t) {
    const std::uint64_t s = splitmix64(seed + t);
    const Tensor w = seeded_uniform({1, cc, dd, dd}, -1.0, 1.0, s);
    const double level = max_abs(w.data()) + 0.5 + static_cast<double>(splitmix64(s) % 1000) / 500.0;
    const double slope = constant_response(w, level + 1.0) - constant_response(w, level);
    max_dev = std::max(max_dev, std::fabs(slope - expected));
    min_slope = std::min(min_slope, slope);
    max_slope = std::max(max_slope, slope);
  }
  if (trials == 0) min_slope = max_slope = expected;

  // The 2x2 high-pass conv cancels every constant image exactly.
  const std::size_t extent = std::max<std::size_t>(dd, 2);
  Tensor hp({1, cc, 2, 2});
  for (std::size_t ch = 0; ch < cc; ++ch) {
    hp.at(0, ch, 0, 0) = -1.0;
    hp.at(0, ch, 0, 1) = 1.0;
    hp.at(0, ch, 1, 0) = 1.0;
    hp.at(0, ch, 1, 1) = -1.0;
  }
  double conv_max = 0.0;
  for (std::size_t t = 0; t < std::max<std::size_t>(trials, 1); ++t) {
    const double level = 0.5 + static_cast<double>(t);
    for (double sv : {level, level + 1.0}) {
      const Tensor y = conv2d(Tensor({1, cc, extent, extent}, sv), hp, Geometry{1, 0});
      conv_max = std::max(conv_max, max_abs(y.data()));
    }
  }

  r.measurements = {{"expected_slope", expected},
                    {"min_slope", min_slope},
                    {"max_slope", max_slope},
                    {"max_slope_deviation", max_dev},
                    {"conv_highpass_max_response", conv_max}};
  r.checks = {"max_slope_deviation <= 1e-9", "conv_highpass_max_response == 0"};
  r.pass = max_dev <= 1e-9 && conv_max == 0.0;
  return r;
}

// ---------------------------------------------------------------------------

const AblationCell& AblationTable::cell(bool shortcut, bool power) const {
  for (const auto& c : cells) {
    if (c.self_shortcut == shortcut && c.power_activation == power) return c;
  }
  throw StateError("ablation table lacks the requested cell");
}

bool AblationTable::ordering_holds(double min_gap) const {
  const AblationCell& best = cell(true, true);
  const AblationCell& worst = cell(false, false);
  if (best.diverged) return false;
  for (const auto& c : cells) {
    if (c.diverged) continue;
    if (c.val_psnr > best.val_psnr) return false;
    if (!worst.diverged && c.val_psnr < worst.val_psnr) return false;
  }
  const double worst_psnr = worst.diverged ? -std::numeric_limits<double>::infinity() : worst.val_psnr;
  return best.val_psnr - worst_psnr >= min_gap;
}

std::string AblationTable::table() const {
  std::string out = fmt::format("{:<16} {:<12} {:>10}\n", "self-shortcut", "power act.", "PSNR (dB)");
  for (const auto& c : cells) {
    out += fmt::format("{:<16} {:<12} {:>10}\n", c.self_shortcut ? "yes" : "no",
                       c.power_activation ? "yes" : "no",
                       c.diverged ? "diverged" : fmt::format("{:.3f}", c.val_psnr));
  }
  out += fmt::format("{:<29} {:>10.3f}\n", "bicubic", bicubic_psnr);
  return out;
}

AblationTable ablation_contrast(const TrainConfig& base, std::size_t epochs) {
  TrainConfig cfg = base;
  cfg.epochs = epochs;
  cfg.model.variant = Variant::adder;
  cfg.validate();
  const auto scale = static_cast<std::size_t>(cfg.scale);
  const auto& d = cfg.data;
  const auto train_images = d.train_dir.empty()
                                ? synthetic_corpus(d.synthetic_train, d.image_size, d.image_size, d.synthetic_seed)
                                : load_luminance_dir(d.train_dir);
  const auto val_images =
      d.val_dir.empty()
          ? synthetic_corpus(d.synthetic_val, d.image_size, d.image_size, splitmix64(d.synthetic_seed + 0x7a1ULL))
          : load_luminance_dir(d.val_dir);
  const PatchSet patches = make_patchset(train_images, scale, cfg.patch_size, d.stride, d.augment);
  const ValidationSet val = make_validation_set(val_images, scale);

  AblationTable table;
  table.bicubic_psnr = bicubic_psnr(val);
  for (bool shortcut : {false, true}) {
    for (bool power : {false, true}) {
      AblationCell cell;
      cell.self_shortcut = shortcut;
      cell.power_activation = power;
      cfg.model.adder = {shortcut, power};
      Model model = build_tiny_vdsr(Variant::adder, cfg.model.depth, cfg.model.width, cfg.scale,
                                    cfg.seed, cfg.model.adder);
      try {
        const TrainResult res = train(model, patches, val, cfg);
        cell.val_psnr = res.history.empty() ? evaluate_psnr(model, val) : res.history.back().val_psnr;
      } catch (const NumericalError& e) {
        cell.diverged = true;
        cell.error = e.what();
      }
      table.cells.push_back(cell);
    }
  }
  return table;
}

}  // namespace adsr
