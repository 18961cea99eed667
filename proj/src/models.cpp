#include "adsr/models.hpp"

#include <fstream>
#include <sstream>

#include "adsr/error.hpp"

namespace adsr {

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv: return "conv";
    case LayerKind::adder_block: return "adder_block";
    case LayerKind::adder_plain: return "adder_plain";
  }
  return "?";
}

std::string to_string(Activation act) {
  switch (act) {
    case Activation::none: return "none";
    case Activation::relu: return "relu";
    case Activation::power_relu: return "power_relu";
  }
  return "?";
}

LayerKind parse_layer_kind(const std::string& s) {
  if (s == "conv") return LayerKind::conv;
  if (s == "adder_block") return LayerKind::adder_block;
  if (s == "adder_plain") return LayerKind::adder_plain;
  throw ConfigError("unknown layer kind '" + s + "'");
}

Activation parse_activation(const std::string& s) {
  if (s == "none") return Activation::none;
  if (s == "relu") return Activation::relu;
  if (s == "power_relu") return Activation::power_relu;
  throw ConfigError("unknown activation '" + s + "'");
}

void NetworkSpec::validate() const {
  if (layers.empty()) throw ConfigError("network spec has no layers");
  if (scale < 2 || scale > 4) throw ConfigError("scale must be 2, 3 or 4");
  if (layers.front().kind != LayerKind::conv || layers.back().kind != LayerKind::conv) {
    throw ConfigError("first and last layers must be convolutional");
  }
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    const std::string where = "layer " + std::to_string(i) + ": ";
    if (l.c_in == 0 || l.c_out == 0) throw ConfigError(where + "channel counts must be positive");
    if (l.k == 0 || l.k % 2 == 0) throw ConfigError(where + "kernel must be odd");
    if (l.kind == LayerKind::adder_block && l.c_in != l.c_out) {
      throw ConfigError(where + "adder_block requires c_in == c_out");
    }
    if (i > 0 && layers[i - 1].c_out != l.c_in) {
      throw ConfigError(where + "c_in does not match previous c_out");
    }
  }
}

NetworkSpec parse_network_spec(std::istream& in) {
  NetworkSpec spec;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string head;
    if (!(ls >> head)) continue;
    const std::string where = "spec line " + std::to_string(lineno) + ": ";
    if (head == "scale") {
      if (!(ls >> spec.scale)) throw ConfigError(where + "expected an integer scale");
    } else if (head == "residual") {
      std::string v;
      ls >> v;
      if (v != "on" && v != "off") throw ConfigError(where + "residual takes on|off");
      spec.global_residual = v == "on";
    } else {
      LayerSpec l;
      l.kind = parse_layer_kind(head);
      std::string act;
      if (!(ls >> l.c_in >> l.c_out >> l.k >> act)) {
        throw ConfigError(where + "expected `kind c_in c_out k activation`");
      }
      l.activation = parse_activation(act);
      spec.layers.push_back(l);
    }
    std::string extra;
    if (ls >> extra) throw ConfigError(where + "unexpected token '" + extra + "'");
  }
  spec.validate();
  return spec;
}

NetworkSpec parse_network_spec_text(const std::string& text) {
  std::istringstream in(text);
  return parse_network_spec(in);
}

NetworkSpec load_network_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open spec file '" + path + "'");
  return parse_network_spec(in);
}

std::string format_network_spec(const NetworkSpec& spec) {
  std::ostringstream out;
  out << "scale " << spec.scale << "\n";
  out << "residual " << (spec.global_residual ? "on" : "off") << "\n";
  for (const auto& l : spec.layers) {
    out << to_string(l.kind) << ' ' << l.c_in << ' ' << l.c_out << ' ' << l.k << ' '
        << to_string(l.activation) << "\n";
  }
  return out.str();
}

NetworkSpec tiny_vdsr_spec(Variant variant, int depth, int width, int scale,
                           AdderOptions options) {
  if (depth < 3) throw ConfigError("depth must be at least 3");
  if (width < 1) throw ConfigError("width must be at least 1");
  const auto w = static_cast<std::size_t>(width);
  NetworkSpec spec;
  spec.scale = scale;
  spec.global_residual = true;
  spec.layers.push_back({LayerKind::conv, 1, w, 3, Activation::relu});
  for (int i = 0; i < depth - 2; ++i) {
    if (variant == Variant::conv) {
      spec.layers.push_back({LayerKind::conv, w, w, 3, Activation::relu});
    } else {
      spec.layers.push_back({options.self_shortcut ? LayerKind::adder_block : LayerKind::adder_plain,
                             w, w, 3,
                             options.power_activation ? Activation::power_relu : Activation::relu});
    }
  }
  spec.layers.push_back({LayerKind::conv, w, 1, 3, Activation::none});
  spec.validate();
  return spec;
}

NetworkSpec vdsr_spec(Variant variant, int scale) { return tiny_vdsr_spec(variant, 20, 64, scale); }

// ---------------------------------------------------------------------------

Model Model::build(const NetworkSpec& spec, std::uint64_t seed) {
  spec.validate();
  Model m;
  m.spec_ = spec;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& ls = spec.layers[i];
    Layer layer{ls, {}, std::nullopt};
    const double gamma0 = ls.kind == LayerKind::adder_block ? 0.0 : 1.0;
    layer.params = AdderLayerParams::create(ls.c_in, ls.c_out, ls.k, splitmix64(seed + i), gamma0);
    if (ls.kind == LayerKind::conv) layer.params.bn = BatchNormParams{};
    if (i + 1 == spec.layers.size()) {
      for (double& v : layer.params.weight->data()) v = 0.0;
    }
    if (ls.activation == Activation::power_relu) layer.power = PowerActParams::create(1.0);
    m.layers_.push_back(std::move(layer));
  }
  return m;
}

Model build_tiny_vdsr(Variant variant, int depth, int width, int scale, std::uint64_t seed,
                      AdderOptions options) {
  return Model::build(tiny_vdsr_spec(variant, depth, width, scale, options), seed);
}

Var Model::forward(Tape& tape, const Var& x, bool training, const FeatureSink& sink) {
  const std::size_t c_in = spec_.layers.front().c_in;
  if (x->shape().c != c_in) {
    throw ShapeError("model expects " + std::to_string(c_in) + " input channels, got " +
                     std::to_string(x->shape().c));
  }
  Var h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    Layer& layer = layers_[i];
    const PowerActParams* power = layer.power ? &*layer.power : nullptr;
    if (layer.spec.kind == LayerKind::conv) {
      h = ops::conv2d(tape, h, layer.params.weight, layer.params.geometry());
      if (layer.spec.activation == Activation::relu) {
        h = ops::relu(tape, h);
      } else if (layer.spec.activation == Activation::power_relu) {
        h = ops::power_relu(tape, h, power->alpha);
      }
    } else {
      h = adder_block(tape, h, layer.params, power, layer.spec.activation, training,
                      layer.spec.kind == LayerKind::adder_block);
    }
    if (!h->all_finite()) {
      throw NumericalError("non-finite activations in layer " + std::to_string(i) + " (" +
                           to_string(layer.spec.kind) + ")");
    }
    if (sink) sink(i, *h);
  }
  if (spec_.global_residual) {
    if (h->shape() != x->shape()) {
      throw ShapeError("global residual needs body output " + h->shape().str() + " == input " +
                       x->shape().str());
    }
    h = ops::add(tape, x, h);
  }
  return h;
}

Tensor Model::forward(const Tensor& x, bool training, const FeatureSink& sink) {
  Tape tape;
  return *forward(tape, make_var(x), training, sink);
}

std::vector<ParamRef> Model::parameters() const {
  std::vector<ParamRef> out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Layer& l = layers_[i];
    const std::string prefix = "layer" + std::to_string(i) + ".";
    const ParamGroup group = l.spec.is_adder() ? ParamGroup::adder : ParamGroup::conv;
    out.push_back({prefix + "weight", l.params.weight, group});
    if (l.params.bn.gamma) {
      out.push_back({prefix + "bn_gamma", l.params.bn.gamma, group});
      out.push_back({prefix + "bn_beta", l.params.bn.beta, group});
    }
    if (l.power) out.push_back({prefix + "alpha", l.power->alpha, group, true});
  }
  return out;
}

std::size_t Model::parameter_count() const {
  std::size_t total = 0;
  for (const auto& p : parameters()) total += p.tensor->size();
  return total;
}

Model Model::clone() const {
  Model m;
  m.spec_ = spec_;
  for (const Layer& l : layers_) {
    Layer c = l;
    c.params.weight = make_param(Tensor(l.params.weight->shape(), l.params.weight->storage()));
    if (l.params.bn.gamma) {
      c.params.bn.gamma = make_param(Tensor(l.params.bn.gamma->shape(), l.params.bn.gamma->storage()));
      c.params.bn.beta = make_param(Tensor(l.params.bn.beta->shape(), l.params.bn.beta->storage()));
    }
    if (l.power) c.power = PowerActParams::create(l.power->value());
    m.layers_.push_back(std::move(c));
  }
  return m;
}

Checkpoint Model::to_checkpoint() const {
  Checkpoint ckpt;
  auto& h = ckpt.header;
  h["format"] = "adsr-model";
  h["spec"] = format_network_spec(spec_);
  h["alpha"] = nlohmann::json::object();
  h["bn"] = nlohmann::json::object();
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Layer& l = layers_[i];
    const std::string name = "layer" + std::to_string(i);
    ckpt.tensors.emplace_back(name + ".weight", Tensor(l.params.weight->shape(), l.params.weight->storage()));
    if (l.params.bn.gamma) {
      ckpt.tensors.emplace_back(name + ".bn_gamma", Tensor(l.params.bn.gamma->shape(), l.params.bn.gamma->storage()));
      ckpt.tensors.emplace_back(name + ".bn_beta", Tensor(l.params.bn.beta->shape(), l.params.bn.beta->storage()));
      h["bn"][name] = {{"running_mean", l.params.bn.running_mean},
                       {"running_var", l.params.bn.running_var},
                       {"momentum", l.params.bn.momentum},
                       {"eps", l.params.bn.eps}};
    }
    if (l.power) h["alpha"][name] = l.power->value();
  }
  return ckpt;
}

Model Model::from_checkpoint(const Checkpoint& ckpt) {
  try {
    return from_checkpoint_unchecked(ckpt);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed model header: ") + e.what(), 0);
  }
}

Model Model::from_checkpoint_unchecked(const Checkpoint& ckpt) {
  const auto& h = ckpt.header;
  if (h.value("format", std::string{}) != "adsr-model") {
    throw FormatError("checkpoint is not an adsr model", 0);
  }
  Model m = Model::build(parse_network_spec_text(h.at("spec").get<std::string>()), 0);
  auto copy_into = [&](const std::string& name, const Var& dst) {
    const Tensor& src = ckpt.tensor(name);
    if (src.shape() != dst->shape()) {
      throw FormatError("tensor '" + name + "' has shape " + src.shape().str() + ", expected " +
                        dst->shape().str(), 0);
    }
    std::copy(src.data().begin(), src.data().end(), dst->data().begin());
  };
  for (std::size_t i = 0; i < m.layers_.size(); ++i) {
    Layer& l = m.layers_[i];
    const std::string name = "layer" + std::to_string(i);
    copy_into(name + ".weight", l.params.weight);
    if (l.params.bn.gamma) {
      copy_into(name + ".bn_gamma", l.params.bn.gamma);
      copy_into(name + ".bn_beta", l.params.bn.beta);
      const auto& bn = h.at("bn").at(name);
      l.params.bn.running_mean = bn.at("running_mean").get<std::vector<double>>();
      l.params.bn.running_var = bn.at("running_var").get<std::vector<double>>();
      l.params.bn.momentum = bn.at("momentum").get<double>();
      l.params.bn.eps = bn.at("eps").get<double>();
      if (l.params.bn.running_mean.size() != l.spec.c_out ||
          l.params.bn.running_var.size() != l.spec.c_out) {
        throw FormatError("BN statistics for " + name + " have the wrong length", 0);
      }
    }
    if (l.power) (*l.power->alpha)[0] = h.at("alpha").at(name).get<double>();
  }
  return m;
}

std::size_t expected_parameter_count(const NetworkSpec& spec) {
  std::size_t total = 0;
  for (const auto& l : spec.layers) {
    total += l.k * l.k * l.c_in * l.c_out;
    if (l.is_adder()) total += 2 * l.c_out;
    if (l.activation == Activation::power_relu) total += 1;
  }
  return total;
}

}  // namespace adsr
