#include "adsr/adder_ops.hpp"

#include <algorithm>
#include <cmath>

#include "adsr/error.hpp"

namespace adsr {
namespace {

void check_layer_shapes(const Tensor& x, const Tensor& w, const char* op) {
  const auto& ws = w.shape();
  if (ws.h != ws.w) throw ShapeError(std::string(op) + ": kernel must be square, got " + ws.str());
  if (x.shape().c != ws.c) {
    throw ShapeError(std::string(op) + ": input has " + std::to_string(x.shape().c) +
                     " channels, weights expect " + std::to_string(ws.c));
  }
}

// Zero-padded copy of one batch sample, (c, h + 2p, w + 2p).
struct Padded {
  std::size_t c, h, w;
  std::vector<double> data;

  const double* row(std::size_t ch, std::size_t r) const { return data.data() + (ch * h + r) * w; }
  double* row(std::size_t ch, std::size_t r) { return data.data() + (ch * h + r) * w; }
};

Padded pad_sample(const Tensor& x, std::size_t b, std::size_t p) {
  const auto& s = x.shape();
  Padded out{s.c, s.h + 2 * p, s.w + 2 * p, {}};
  out.data.assign(out.c * out.h * out.w, 0.0);
  for (std::size_t ch = 0; ch < s.c; ++ch) {
    for (std::size_t r = 0; r < s.h; ++r) {
      const double* src = &x.data()[x.index(b, ch, r, 0)];
      std::copy(src, src + s.w, out.row(ch, r + p) + p);
    }
  }
  return out;
}

// Adds the interior of a padded gradient buffer into dx for sample b.
void unpad_accumulate(const Padded& src, Tensor& dx, std::size_t b, std::size_t p) {
  const auto& s = dx.shape();
  for (std::size_t ch = 0; ch < s.c; ++ch) {
    for (std::size_t r = 0; r < s.h; ++r) {
      const double* from = src.row(ch, r + p) + p;
      double* to = &dx.data()[dx.index(b, ch, r, 0)];
      for (std::size_t col = 0; col < s.w; ++col) to[col] += from[col];
    }
  }
}

Shape layer_output_shape(const Tensor& x, const Tensor& w, Geometry g) {
  const std::size_t k = w.shape().h;
  return {x.shape().n, w.shape().n, output_extent(x.shape().h, k, g),
          output_extent(x.shape().w, k, g)};
}

double clamp_unit(double v) { return std::clamp(v, -1.0, 1.0); }

double sign_of(double v) { return static_cast<double>((v > 0.0) - (v < 0.0)); }

}  // namespace

std::size_t output_extent(std::size_t in, std::size_t k, Geometry g) {
  if (g.stride == 0) throw ParameterError("stride must be positive");
  if (k == 0) throw ParameterError("kernel extent must be positive");
  const std::size_t padded = in + 2 * g.padding;
  if (padded < k) {
    throw ShapeError("padded extent " + std::to_string(padded) + " smaller than kernel " +
                     std::to_string(k));
  }
  return (padded - k) / g.stride + 1;
}

std::size_t same_padding(std::size_t k) {
  if (k % 2 == 0) throw ParameterError("same padding requires an odd kernel, got k=" + std::to_string(k));
  return (k - 1) / 2;
}

BatchNormParams BatchNormParams::create(std::size_t channels, double gamma_init) {
  BatchNormParams bn;
  bn.gamma = make_param(Tensor({1, channels, 1, 1}, gamma_init));
  bn.beta = make_param(Tensor({1, channels, 1, 1}, 0.0));
  bn.running_mean.assign(channels, 0.0);
  bn.running_var.assign(channels, 1.0);
  return bn;
}

AdderLayerParams AdderLayerParams::create(std::size_t c_in, std::size_t c_out, std::size_t k,
                                          std::uint64_t seed, double bn_gamma_init) {
  AdderLayerParams p;
  p.padding = same_padding(k);
  const double bound = std::sqrt(6.0 / static_cast<double>(k * k * c_in));
  p.weight = make_param(seeded_uniform({c_out, c_in, k, k}, -bound, bound, seed));
  p.bn = BatchNormParams::create(c_out, bn_gamma_init);
  return p;
}

PowerActParams PowerActParams::create(double alpha) {
  if (!(alpha > 0.0)) throw ParameterError("power activation exponent must be positive");
  return {make_param(Tensor({1, 1, 1, 1}, alpha))};
}

// ---------------------------------------------------------------------------
// Adder correlation

Tensor adder_correlate(const Tensor& x, const Tensor& w, Geometry g) {
  check_layer_shapes(x, w, "adder_correlate");
  const Shape os = layer_output_shape(x, w, g);
  const std::size_t k = w.shape().h, cin = w.shape().c, s = g.stride;
  Tensor y(os, 0.0);
  for (std::size_t b = 0; b < os.n; ++b) {
    const Padded xp = pad_sample(x, b, g.padding);
    for (std::size_t q = 0; q < os.c; ++q) {
      double* yq = &y.data()[y.index(b, q, 0, 0)];
      for (std::size_t ch = 0; ch < cin; ++ch) {
        for (std::size_t i = 0; i < k; ++i) {
          for (std::size_t j = 0; j < k; ++j) {
            const double wv = w.at(q, ch, i, j);
            for (std::size_t m = 0; m < os.h; ++m) {
              const double* xr = xp.row(ch, m * s + i) + j;
              double* yr = yq + m * os.w;
              for (std::size_t n = 0; n < os.w; ++n) yr[n] -= std::fabs(xr[n * s] - wv);
            }
          }
        }
      }
    }
  }
  return y;
}

Tensor adder_correlate(const Tensor& x, const AdderLayerParams& p) {
  return adder_correlate(x, *p.weight, p.geometry());
}

LayerGrads adder_backward(const Tensor& x, const Tensor& w, Geometry g, const Tensor& dy,
                          AdderGradient rule) {
  check_layer_shapes(x, w, "adder_backward");
  const Shape os = layer_output_shape(x, w, g);
  if (dy.shape() != os) {
    throw ShapeError("adder_backward: dY " + dy.shape().str() + " but output is " + os.str());
  }
  const std::size_t k = w.shape().h, cin = w.shape().c, s = g.stride;
  LayerGrads out{Tensor(x.shape(), 0.0), Tensor(w.shape(), 0.0)};
  for (std::size_t b = 0; b < os.n; ++b) {
    const Padded xp = pad_sample(x, b, g.padding);
    Padded dxp{xp.c, xp.h, xp.w, std::vector<double>(xp.data.size(), 0.0)};
    for (std::size_t q = 0; q < os.c; ++q) {
      const double* dyq = &dy.data()[dy.index(b, q, 0, 0)];
      for (std::size_t ch = 0; ch < cin; ++ch) {
        for (std::size_t i = 0; i < k; ++i) {
          for (std::size_t j = 0; j < k; ++j) {
            const double wv = w.at(q, ch, i, j);
            double acc = 0.0;
            for (std::size_t m = 0; m < os.h; ++m) {
              const double* xr = xp.row(ch, m * s + i) + j;
              double* dxr = dxp.row(ch, m * s + i) + j;
              const double* dyr = dyq + m * os.w;
              if (rule == AdderGradient::surrogate) {
                for (std::size_t n = 0; n < os.w; ++n) {
                  const double diff = xr[n * s] - wv;
                  acc += dyr[n] * diff;
                  dxr[n * s] += dyr[n] * clamp_unit(-diff);
                }
              } else {
                for (std::size_t n = 0; n < os.w; ++n) {
                  const double sg = sign_of(xr[n * s] - wv);
                  acc += dyr[n] * sg;
                  dxr[n * s] -= dyr[n] * sg;
                }
              }
            }
            out.dw.at(q, ch, i, j) += acc;
          }
        }
      }
    }
    unpad_accumulate(dxp, out.dx, b, g.padding);
  }
  return out;
}

LayerGrads adder_backward(const Tensor& x, const AdderLayerParams& p, const Tensor& dy) {
  return adder_backward(x, *p.weight, p.geometry(), dy);
}

// ---------------------------------------------------------------------------
// Convolution

Tensor conv2d(const Tensor& x, const Tensor& w, Geometry g) {
  check_layer_shapes(x, w, "conv2d");
  const Shape os = layer_output_shape(x, w, g);
  const std::size_t k = w.shape().h, cin = w.shape().c, s = g.stride;
  Tensor y(os, 0.0);
  for (std::size_t b = 0; b < os.n; ++b) {
    const Padded xp = pad_sample(x, b, g.padding);
    for (std::size_t q = 0; q < os.c; ++q) {
      double* yq = &y.data()[y.index(b, q, 0, 0)];
      for (std::size_t ch = 0; ch < cin; ++ch) {
        for (std::size_t i = 0; i < k; ++i) {
          for (std::size_t j = 0; j < k; ++j) {
            const double wv = w.at(q, ch, i, j);
            for (std::size_t m = 0; m < os.h; ++m) {
              const double* xr = xp.row(ch, m * s + i) + j;
              double* yr = yq + m * os.w;
              for (std::size_t n = 0; n < os.w; ++n) yr[n] += xr[n * s] * wv;
            }
          }
        }
      }
    }
  }
  return y;
}

Tensor conv2d(const Tensor& x, const AdderLayerParams& p) {
  return conv2d(x, *p.weight, p.geometry());
}

LayerGrads conv2d_backward(const Tensor& x, const Tensor& w, Geometry g, const Tensor& dy) {
  check_layer_shapes(x, w, "conv2d_backward");
  const Shape os = layer_output_shape(x, w, g);
  if (dy.shape() != os) {
    throw ShapeError("conv2d_backward: dY " + dy.shape().str() + " but output is " + os.str());
  }
  const std::size_t k = w.shape().h, cin = w.shape().c, s = g.stride;
  LayerGrads out{Tensor(x.shape(), 0.0), Tensor(w.shape(), 0.0)};
  for (std::size_t b = 0; b < os.n; ++b) {
    const Padded xp = pad_sample(x, b, g.padding);
    Padded dxp{xp.c, xp.h, xp.w, std::vector<double>(xp.data.size(), 0.0)};
    for (std::size_t q = 0; q < os.c; ++q) {
      const double* dyq = &dy.data()[dy.index(b, q, 0, 0)];
      for (std::size_t ch = 0; ch < cin; ++ch) {
        for (std::size_t i = 0; i < k; ++i) {
          for (std::size_t j = 0; j < k; ++j) {
            const double wv = w.at(q, ch, i, j);
            double acc = 0.0;
            for (std::size_t m = 0; m < os.h; ++m) {
              const double* xr = xp.row(ch, m * s + i) + j;
              double* dxr = dxp.row(ch, m * s + i) + j;
              const double* dyr = dyq + m * os.w;
              for (std::size_t n = 0; n < os.w; ++n) {
                acc += dyr[n] * xr[n * s];
                dxr[n * s] += dyr[n] * wv;
              }
            }
            out.dw.at(q, ch, i, j) += acc;
          }
        }
      }
    }
    unpad_accumulate(dxp, out.dx, b, g.padding);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Power activation

Tensor power_activation(const Tensor& y, double alpha) {
  if (!(alpha > 0.0)) throw ParameterError("power activation exponent must be positive");
  Tensor out(y.shape());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double v = y[i];
    out[i] = alpha == 1.0 ? v : sign_of(v) * std::pow(std::fabs(v), alpha);
  }
  return out;
}

Tensor power_activation(const Tensor& y, const PowerActParams& a) {
  return power_activation(y, a.value());
}

namespace ops {

Var adder2d(Tape& tape, const Var& x, const Var& w, Geometry g, AdderGradient rule) {
  Tensor y = adder_correlate(*x, *w, g);
  return tape.record("adder2d", std::move(y), {x, w}, [x, w, g, rule](const Tensor& o) {
    Tensor dy(o.shape(), std::vector<double>(o.grad().begin(), o.grad().end()));
    LayerGrads grads = adder_backward(*x, *w, g, dy, rule);
    accumulate_grad(*x, grads.dx.data());
    accumulate_grad(*w, grads.dw.data());
  });
}

Var conv2d(Tape& tape, const Var& x, const Var& w, Geometry g) {
  Tensor y = adsr::conv2d(*x, *w, g);
  return tape.record("conv2d", std::move(y), {x, w}, [x, w, g](const Tensor& o) {
    Tensor dy(o.shape(), std::vector<double>(o.grad().begin(), o.grad().end()));
    LayerGrads grads = conv2d_backward(*x, *w, g, dy);
    accumulate_grad(*x, grads.dx.data());
    accumulate_grad(*w, grads.dw.data());
  });
}

Var batch_norm(Tape& tape, const Var& x, BatchNormParams& bn, bool training) {
  const Shape s = x->shape();
  const std::size_t C = s.c, plane = s.plane();
  if (bn.channels() != C) {
    throw ShapeError("batch_norm: " + std::to_string(C) + " channels, params for " +
                     std::to_string(bn.channels()));
  }
  const std::size_t count = s.n * plane;
  if (training && count < 2) {
    throw ParameterError("batch_norm training mode needs at least 2 values per channel");
  }

  std::vector<double> mean(C), inv_std(C);
  if (training) {
    for (std::size_t c = 0; c < C; ++c) {
      double acc = 0.0;
      for (std::size_t b = 0; b < s.n; ++b) {
        const double* p = &x->data()[x->index(b, c, 0, 0)];
        for (std::size_t i = 0; i < plane; ++i) acc += p[i];
      }
      const double mu = acc / static_cast<double>(count);
      double sq = 0.0;
      for (std::size_t b = 0; b < s.n; ++b) {
        const double* p = &x->data()[x->index(b, c, 0, 0)];
        for (std::size_t i = 0; i < plane; ++i) sq += (p[i] - mu) * (p[i] - mu);
      }
      const double var = sq / static_cast<double>(count);
      mean[c] = mu;
      inv_std[c] = 1.0 / std::sqrt(var + bn.eps);
      const double unbiased = sq / static_cast<double>(count - 1);
      bn.running_mean[c] = (1.0 - bn.momentum) * bn.running_mean[c] + bn.momentum * mu;
      bn.running_var[c] = (1.0 - bn.momentum) * bn.running_var[c] + bn.momentum * unbiased;
    }
  } else {
    for (std::size_t c = 0; c < C; ++c) {
      mean[c] = bn.running_mean[c];
      inv_std[c] = 1.0 / std::sqrt(std::max(bn.running_var[c], 0.0) + bn.eps);
    }
  }

  Tensor xhat(s), y(s);
  for (std::size_t b = 0; b < s.n; ++b) {
    for (std::size_t c = 0; c < C; ++c) {
      const double g = (*bn.gamma)[c], be = (*bn.beta)[c];
      const std::size_t base = x->index(b, c, 0, 0);
      for (std::size_t i = 0; i < plane; ++i) {
        const double xh = ((*x)[base + i] - mean[c]) * inv_std[c];
        xhat[base + i] = xh;
        y[base + i] = g * xh + be;
      }
    }
  }

  Var gamma = bn.gamma, beta = bn.beta;
  return tape.record(
      "batch_norm", std::move(y), {x, gamma, beta},
      [x, gamma, beta, xhat = std::move(xhat), inv_std, training, s](const Tensor& o) {
        const auto dy = o.grad();
        const std::size_t C = s.c, plane = s.plane();
        const double count = static_cast<double>(s.n * plane);
        std::vector<double> dgamma(C, 0.0), dbeta(C, 0.0);
        for (std::size_t b = 0; b < s.n; ++b) {
          for (std::size_t c = 0; c < C; ++c) {
            const std::size_t base = xhat.index(b, c, 0, 0);
            for (std::size_t i = 0; i < plane; ++i) {
              dgamma[c] += dy[base + i] * xhat[base + i];
              dbeta[c] += dy[base + i];
            }
          }
        }
        if (x->requires_grad()) {
          auto dx = x->grad();
          for (std::size_t b = 0; b < s.n; ++b) {
            for (std::size_t c = 0; c < C; ++c) {
              const double scale = (*gamma)[c] * inv_std[c];
              const std::size_t base = xhat.index(b, c, 0, 0);
              if (training) {
                const double mdy = dbeta[c] / count, mdyx = dgamma[c] / count;
                for (std::size_t i = 0; i < plane; ++i) {
                  dx[base + i] += scale * (dy[base + i] - mdy - xhat[base + i] * mdyx);
                }
              } else {
                for (std::size_t i = 0; i < plane; ++i) dx[base + i] += scale * dy[base + i];
              }
            }
          }
        }
        accumulate_grad(*gamma, dgamma);
        accumulate_grad(*beta, dbeta);
      });
}

Var power_activation(Tape& tape, const Var& y, const Var& alpha) {
  const double a = (*alpha)[0];
  Tensor out = adsr::power_activation(*y, a);
  return tape.record("power_activation", std::move(out), {y, alpha}, [y, alpha, a](const Tensor& o) {
    const auto g = o.grad();
    double dalpha = 0.0;
    std::vector<double> dy(g.size(), 0.0);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = (*y)[i];
      if (v == 0.0) continue;
      const double mag = std::fabs(v);
      const double p = std::pow(mag, a);
      dy[i] = g[i] * a * p / mag;
      dalpha += g[i] * sign_of(v) * p * std::log(mag);
    }
    accumulate_grad(*y, dy);
    accumulate_grad(*alpha, std::span<const double>(&dalpha, 1));
  });
}

Var power_relu(Tape& tape, const Var& y, const Var& alpha) {
  const double a = (*alpha)[0];
  if (!(a > 0.0)) throw ParameterError("power activation exponent must be positive");
  Tensor out(y->shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = (*y)[i];
    out[i] = v <= 0.0 ? 0.0 : (a == 1.0 ? v : std::pow(v, a));
  }
  return tape.record("power_relu", std::move(out), {y, alpha}, [y, alpha, a](const Tensor& o) {
    const auto g = o.grad();
    double dalpha = 0.0;
    std::vector<double> dy(g.size(), 0.0);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = (*y)[i];
      if (v < 0.0) continue;
      if (v == 0.0) {
        // Kink: slope 1 (the right derivative at a = 1) unless a > 1.
        if (a <= 1.0) dy[i] = g[i];
        continue;
      }
      const double p = a == 1.0 ? v : std::pow(v, a);
      dy[i] = g[i] * a * p / v;
      dalpha += g[i] * p * std::log(v);
    }
    accumulate_grad(*y, dy);
    accumulate_grad(*alpha, std::span<const double>(&dalpha, 1));
  });
}

}  // namespace ops

Var adder_block(Tape& tape, const Var& x, AdderLayerParams& p, const PowerActParams* power,
                Activation act, bool training, bool shortcut) {
  if (shortcut) {
    if (p.c_in() != p.c_out()) {
      throw ConfigError("self-shortcut needs c_in == c_out, got " + std::to_string(p.c_in()) +
                        " -> " + std::to_string(p.c_out()));
    }
    if (p.stride != 1 || 2 * p.padding + 1 != p.kernel()) {
      throw ConfigError("self-shortcut needs stride 1 and same padding");
    }
  }
  Var h = ops::adder2d(tape, x, p.weight, p.geometry());
  h = ops::batch_norm(tape, h, p.bn, training);
  switch (act) {
    case Activation::none:
      break;
    case Activation::relu:
      h = ops::relu(tape, h);
      break;
    case Activation::power_relu:
      if (power == nullptr) throw ConfigError("power_relu activation needs an exponent");
      h = ops::power_relu(tape, h, power->alpha);
      break;
  }
  return shortcut ? ops::add(tape, x, h) : h;
}

Tensor self_shortcut_block(const Tensor& x, AdderLayerParams& p, const PowerActParams& a,
                           bool training) {
  Tape tape;
  Var in = make_var(x, true);
  return *adder_block(tape, in, p, &a, Activation::power_relu, training, true);
}

}  // namespace adsr
