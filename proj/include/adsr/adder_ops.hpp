#pragma once

// Adder correlation, convolution baseline, batch normalization, the learnable
// power activation and the self-shortcut adder block.
//
// Weight layout for both conv and adder layers is (c_out, c_in, k, k).
// Padding is zero padding; padded taps take part in the adder distance as
// |0 - w|.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "adsr/tape.hpp"
#include "adsr/tensor.hpp"

namespace adsr {

struct Geometry {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

/// Output extent along one axis; throws ShapeError when the padded input is
/// smaller than the kernel.
std::size_t output_extent(std::size_t in, std::size_t k, Geometry g);

/// Backward rule for the adder distance.
enum class AdderGradient {
  surrogate,  // dW = dY (X - W), dX = dY clamp(W - X, -1, 1)
  sign,       // true subgradient of -|X - W|
};

struct BatchNormParams {
  Var gamma;  // (1, c, 1, 1)
  Var beta;   // (1, c, 1, 1)
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  static BatchNormParams create(std::size_t channels, double gamma_init);
  std::size_t channels() const noexcept { return running_mean.size(); }
};

struct AdderLayerParams {
  Var weight;  // (c_out, c_in, k, k)
  BatchNormParams bn;
  std::size_t stride = 1;
  std::size_t padding = 0;

  /// Uniform fan-in init in [-b, b], b = sqrt(6 / (k^2 c_in)), "same"
  /// padding, stride 1. Requires odd k.
  static AdderLayerParams create(std::size_t c_in, std::size_t c_out, std::size_t k,
                                 std::uint64_t seed, double bn_gamma_init = 1.0);

  std::size_t c_out() const noexcept { return weight->shape().n; }
  std::size_t c_in() const noexcept { return weight->shape().c; }
  std::size_t kernel() const noexcept { return weight->shape().h; }
  Geometry geometry() const noexcept { return {stride, padding}; }
};

/// Learnable exponent, stored as a (1,1,1,1) parameter.
struct PowerActParams {
  Var alpha;

  static PowerActParams create(double alpha = 1.0);
  double value() const noexcept { return (*alpha)[0]; }
};

inline constexpr double kAlphaMin = 0.1;
inline constexpr double kAlphaMax = 4.0;

/// "Same" padding for an odd kernel; ParameterError for even k.
std::size_t same_padding(std::size_t k);

// ---------------------------------------------------------------------------
// Kernels (no tape)

Tensor adder_correlate(const Tensor& x, const Tensor& w, Geometry g);
Tensor adder_correlate(const Tensor& x, const AdderLayerParams& p);

struct LayerGrads {
  Tensor dx;
  Tensor dw;
};

LayerGrads adder_backward(const Tensor& x, const Tensor& w, Geometry g, const Tensor& dy,
                          AdderGradient rule = AdderGradient::surrogate);
LayerGrads adder_backward(const Tensor& x, const AdderLayerParams& p, const Tensor& dy);

Tensor conv2d(const Tensor& x, const Tensor& w, Geometry g);
Tensor conv2d(const Tensor& x, const AdderLayerParams& p);
LayerGrads conv2d_backward(const Tensor& x, const Tensor& w, Geometry g, const Tensor& dy);

/// sign(y) |y|^alpha elementwise.
Tensor power_activation(const Tensor& y, const PowerActParams& a);
Tensor power_activation(const Tensor& y, double alpha);

// ---------------------------------------------------------------------------
// Differentiable ops

namespace ops {

Var adder2d(Tape& tape, const Var& x, const Var& w, Geometry g,
            AdderGradient rule = AdderGradient::surrogate);
Var conv2d(Tape& tape, const Var& x, const Var& w, Geometry g);

/// Training mode normalizes with batch statistics and updates the running
/// estimates; eval mode uses the running estimates.
Var batch_norm(Tape& tape, const Var& x, BatchNormParams& bn, bool training);

/// Signed power sign(y)|y|^alpha. Gradients at y = 0 are defined as 0.
Var power_activation(Tape& tape, const Var& y, const Var& alpha);
/// max(y, 0)^alpha, the rectified form used inside blocks. At y = 0 the
/// gradient wrt y is 1 for alpha <= 1 and 0 above.
Var power_relu(Tape& tape, const Var& y, const Var& alpha);

}  // namespace ops

enum class Activation { none, relu, power_relu };

/// Y = X + act(BN(adder(X))) when `shortcut`, else act(BN(adder(X))).
/// `power` must be non-null for Activation::power_relu.
Var adder_block(Tape& tape, const Var& x, AdderLayerParams& p, const PowerActParams* power,
                Activation act, bool training, bool shortcut = true);

/// Tape-free forward of the self-shortcut block.
Tensor self_shortcut_block(const Tensor& x, AdderLayerParams& p, const PowerActParams& a,
                           bool training);

}  // namespace adsr
