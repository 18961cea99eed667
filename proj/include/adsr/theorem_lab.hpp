#pragma once

// Empirical checks of two structural limits of adder layers:
//  * identity: a bare adder layer never reproduces a positive input, since
//    every output is <= 0;
//  * high-pass: the response to a constant image s*E is affine in s with
//    slope -d^2 c, so no adder filter can cancel flat regions.
// Plus a contrast showing the self-shortcut block realizes the identity.

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "adsr/training.hpp"

namespace adsr {

struct TheoremReport {
  std::string theorem;  // "identity" or "highpass"
  int d = 0;
  int c = 0;
  std::uint64_t seed = 0;
  std::size_t trials = 0;
  /// Named measurements; the verdict is recomputed from these alone.
  std::vector<std::pair<std::string, double>> measurements;
  /// Named bounds a measurement is compared against.
  std::vector<std::string> checks;
  bool pass = false;

  double measured(const std::string& name) const;
  nlohmann::json to_json() const;
  std::string summary() const;
};

struct IdentityOptions {
  std::size_t evaluations = 1'000'000;  // non-positivity sweep size
  std::size_t restarts = 10;
  std::size_t opt_steps = 2000;
  double lr = 1e-2;
};

/// Analytic sign obstruction over `trials` random filters, the
/// non-positivity sweep, gradient-descent fits of a bare adder layer to the
/// identity (expected to plateau at relative error >= 0.5), and the
/// shortcut block at init (expected residual < 1e-6).
TheoremReport verify_identity_impossibility(int d, int c, std::size_t trials, std::uint64_t seed,
                                            const IdentityOptions& options = {});

/// Constant-image slope r(s+1) - r(s) == -d^2 c to 1e-9 for `trials` random
/// filters, and the 2x2 [[-1,1],[1,-1]] conv response == 0 exactly.
TheoremReport verify_highpass_impossibility(int d, int c, std::size_t trials, std::uint64_t seed);

/// Response of an adder filter w (shape (1, c, d, d)) to the constant image
/// s*E of the same extent.
double constant_response(const Tensor& w, double s);

struct AblationCell {
  bool self_shortcut = false;
  bool power_activation = false;
  double val_psnr = 0.0;
  bool diverged = false;
  std::string error;
};

struct AblationTable {
  std::vector<AblationCell> cells;  // (shortcut, power): (-,-), (-,+), (+,-), (+,+)
  double bicubic_psnr = 0.0;

  const AblationCell& cell(bool shortcut, bool power) const;
  /// (+,+) is the maximum and (-,-) the minimum, separated by `min_gap` dB.
  bool ordering_holds(double min_gap) const;
  std::string table() const;
};

/// Trains the four adder variants on identical data and seeds. The base
/// config supplies data, schedule and width/depth; epochs = `epochs`.
AblationTable ablation_contrast(const TrainConfig& base, std::size_t epochs);

}  // namespace adsr
