#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "adsr/adder_ops.hpp"
#include "adsr/checkpoint.hpp"
#include "adsr/tape.hpp"

namespace adsr {

enum class LayerKind {
  conv,         // cross-correlation followed by `activation`
  adder_block,  // X + act(BN(adder(X)))
  adder_plain,  // act(BN(adder(X))), no self-shortcut
};

struct LayerSpec {
  LayerKind kind = LayerKind::conv;
  std::size_t c_in = 1;
  std::size_t c_out = 1;
  std::size_t k = 3;
  Activation activation = Activation::relu;

  bool is_adder() const noexcept { return kind != LayerKind::conv; }
  bool operator==(const LayerSpec&) const = default;
};

struct NetworkSpec {
  std::vector<LayerSpec> layers;
  bool global_residual = true;
  int scale = 2;

  /// Throws ConfigError on: empty list, non-conv first/last layer, even
  /// kernels, channel chain breaks, shortcut blocks with c_in != c_out,
  /// scale outside {2, 3, 4}.
  void validate() const;
  bool operator==(const NetworkSpec&) const = default;
};

std::string to_string(LayerKind kind);
std::string to_string(Activation act);
LayerKind parse_layer_kind(const std::string& s);
Activation parse_activation(const std::string& s);

/// Text format, one layer per line: `kind c_in c_out k activation`.
/// Optional directives `scale N` and `residual on|off`; `#` starts a comment.
NetworkSpec parse_network_spec(std::istream& in);
NetworkSpec parse_network_spec_text(const std::string& text);
NetworkSpec load_network_spec(const std::string& path);
std::string format_network_spec(const NetworkSpec& spec);

enum class Variant { conv, adder };

/// Toggles for the ablation study; both on for the standard adder model.
struct AdderOptions {
  bool self_shortcut = true;
  bool power_activation = true;
};

/// Spec of the tiny pre-upsampling model: conv(1->width) +
/// (depth-2) interior layers + conv(width->1), global residual.
NetworkSpec tiny_vdsr_spec(Variant variant, int depth, int width, int scale,
                           AdderOptions options = {});

/// Reference VDSR: 20 layers of 3x3, width 64, single channel.
NetworkSpec vdsr_spec(Variant variant, int scale = 2);

enum class ParamGroup { conv, adder };

struct ParamRef {
  std::string name;
  Var tensor;
  ParamGroup group;
  bool is_exponent = false;
};

struct Layer {
  LayerSpec spec;
  AdderLayerParams params;  // bn is unset for conv layers
  std::optional<PowerActParams> power;
};

/// Receives (layer index, output) for every layer during forward.
using FeatureSink = std::function<void(std::size_t, const Tensor&)>;

class Model {
 public:
  /// Materializes parameters for `spec`. Conv and adder weights use the
  /// fan-in uniform init; the last conv starts at zero; shortcut blocks
  /// start with BN gamma 0, plain adder layers with gamma 1.
  static Model build(const NetworkSpec& spec, std::uint64_t seed);

  const NetworkSpec& spec() const noexcept { return spec_; }
  std::vector<Layer>& layers() noexcept { return layers_; }
  const std::vector<Layer>& layers() const noexcept { return layers_; }

  /// X is (n, c_in, h, w); output has the same shape. Throws
  /// NumericalError naming the first layer whose output is not finite.
  Var forward(Tape& tape, const Var& x, bool training, const FeatureSink& sink = {});
  Tensor forward(const Tensor& x, bool training = false, const FeatureSink& sink = {});

  std::vector<ParamRef> parameters() const;
  std::size_t parameter_count() const;

  /// Deep copy with independent parameter storage.
  Model clone() const;

  Checkpoint to_checkpoint() const;
  static Model from_checkpoint(const Checkpoint& ckpt);

 private:
  static Model from_checkpoint_unchecked(const Checkpoint& ckpt);

  NetworkSpec spec_;
  std::vector<Layer> layers_;
};

Model build_tiny_vdsr(Variant variant, int depth, int width, int scale, std::uint64_t seed,
                      AdderOptions options = {});

/// Closed-form parameter count: sum of k^2 c_in c_out, plus 2 c_out per
/// BN and one exponent per power activation.
std::size_t expected_parameter_count(const NetworkSpec& spec);

}  // namespace adsr
