#include <doctest.h>

#include "adsr/adder_ops.hpp"
#include "adsr/error.hpp"
#include "oracles.hpp"

using namespace adsr;

namespace {

Tensor scalar(double v) { return Tensor({1, 1, 1, 1}, v); }

std::vector<double> grad_vec(const Var& v) {
  const auto g = std::as_const(*v).grad();
  return {g.begin(), g.end()};
}

// Weighted sum with fixed random weights, so every output gets a distinct
// upstream gradient.
Var probe_loss(Tape& tape, const Var& y, std::uint64_t seed) {
  return ops::sum(tape, ops::mul_const(tape, y, seeded_uniform(y->shape(), -1, 1, seed)));
}

}  // namespace

TEST_CASE("adder correlate: scalar example and maximum at X == W") {
  CHECK(adder_correlate(scalar(5), scalar(3), {})[0] == -2.0);
  const Tensor w = seeded_uniform({1, 2, 3, 3}, -1, 1, 1);
  const Tensor x(w.shape(), std::vector<double>(w.storage()));
  CHECK(adder_correlate(x, w, {})[0] == 0.0);
}

TEST_CASE("adder and conv match brute-force loops on random cases") {
  double worst_adder = 0.0, worst_conv = 0.0;
  for (std::uint64_t t = 0; t < 100; ++t) {
    const std::size_t cin = 1 + t % 3, cout = 1 + (t / 3) % 3, k = (t % 2) ? 3 : 1;
    const std::size_t stride = 1 + (t / 7) % 2, pad = (t / 5) % 2 ? k / 2 : 0;
    const Tensor x = seeded_uniform({1 + t % 2, cin, 5, 4}, -2, 2, 1000 + t);
    const Tensor w = seeded_uniform({cout, cin, k, k}, -2, 2, 2000 + t);
    const Geometry g{stride, pad};
    worst_adder = std::max(worst_adder, oracle::max_abs_diff(adder_correlate(x, w, g).data(),
                                                             oracle::adder(x, w, stride, pad).data()));
    worst_conv = std::max(worst_conv, oracle::max_abs_diff(conv2d(x, w, g).data(),
                                                           oracle::conv(x, w, stride, pad).data()));
  }
  CHECK(worst_adder <= 1e-12);
  CHECK(worst_conv <= 1e-12);
}

TEST_CASE("spec-sized random adder case") {
  const Tensor x = seeded_uniform({1, 2, 4, 4}, -1, 1, 3);
  const Tensor w = seeded_uniform({3, 2, 3, 3}, -1, 1, 4);
  const Tensor y = adder_correlate(x, w, {1, 1});
  CHECK(y.shape() == Shape{1, 3, 4, 4});
  CHECK(oracle::max_abs_diff(y.data(), oracle::adder(x, w, 1, 1).data()) <= 1e-12);
  for (double v : y.data()) CHECK(v <= 0.0);
}

TEST_CASE("geometry and shape errors") {
  CHECK(output_extent(5, 3, {1, 1}) == 5);
  CHECK(output_extent(5, 3, {2, 1}) == 3);
  CHECK(output_extent(4, 3, {1, 0}) == 2);
  CHECK_THROWS_AS(output_extent(2, 3, {1, 0}), ShapeError);
  CHECK_THROWS_AS(same_padding(2), ParameterError);
  CHECK(same_padding(5) == 2);
  const Tensor x({1, 2, 4, 4});
  const Tensor w({1, 3, 3, 3});
  CHECK_THROWS_AS(adder_correlate(x, w, {1, 1}), ShapeError);
  CHECK_THROWS_AS(conv2d(x, w, {1, 1}), ShapeError);
  CHECK_THROWS_AS(AdderLayerParams::create(2, 2, 4, 0), ParameterError);
}

TEST_CASE("joint translation invariance and non-positivity") {
  for (std::uint64_t t = 0; t < 20; ++t) {
    const Tensor x = seeded_uniform({1, 2, 5, 5}, -3, 3, 50 + t);
    const Tensor w = seeded_uniform({2, 2, 3, 3}, -3, 3, 80 + t);
    const double shift = 0.25 * static_cast<double>(t) - 2.0;  // dyadic, so sums stay exact
    Tensor xs = x, ws = w;
    for (double& v : xs.data()) v += shift;
    for (double& v : ws.data()) v += shift;
    const Tensor a = adder_correlate(x, w, {1, 0});
    const Tensor b = adder_correlate(xs, ws, {1, 0});
    CHECK(oracle::max_abs_diff(a.data(), b.data()) <= 1e-12);
    for (double v : a.data()) CHECK(v <= 0.0);
  }
}

TEST_CASE("surrogate backward examples") {
  const LayerGrads g = adder_backward(scalar(5), scalar(3), {}, scalar(1));
  CHECK(g.dw[0] == 2.0);
  CHECK(g.dx[0] == -1.0);

  const Tensor w = seeded_uniform({2, 2, 3, 3}, -1, 1, 9);
  const Tensor x({1, 2, 3, 3}, std::vector<double>(w.storage().begin(), w.storage().begin() + 18));
  Tensor w_same({1, 2, 3, 3}, std::vector<double>(x.storage()));
  const LayerGrads z = adder_backward(x, w_same, {}, scalar(0.7));
  for (double v : z.dw.data()) CHECK(v == 0.0);
  for (double v : z.dx.data()) CHECK(v == 0.0);
}

TEST_CASE("surrogate backward matches its closed form") {
  const Tensor x = seeded_uniform({2, 2, 4, 4}, -2, 2, 31);
  const Tensor w = seeded_uniform({3, 2, 3, 3}, -2, 2, 32);
  const Geometry g{1, 1};
  const Tensor dy = seeded_uniform({2, 3, 4, 4}, -1, 1, 33);
  const LayerGrads got = adder_backward(x, w, g, dy);

  Tensor dw(w.shape()), dx(x.shape());
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t q = 0; q < 3; ++q)
      for (std::size_t m = 0; m < 4; ++m)
        for (std::size_t n = 0; n < 4; ++n)
          for (std::size_t c = 0; c < 2; ++c)
            for (std::size_t i = 0; i < 3; ++i)
              for (std::size_t j = 0; j < 3; ++j) {
                const long yi = static_cast<long>(m + i) - 1, xj = static_cast<long>(n + j) - 1;
                const double xv = oracle::padded(x, b, c, yi, xj);
                dw.at(q, c, i, j) += dy.at(b, q, m, n) * (xv - w.at(q, c, i, j));
                if (yi >= 0 && xj >= 0 && yi < 4 && xj < 4) {
                  dx.at(b, c, static_cast<std::size_t>(yi), static_cast<std::size_t>(xj)) +=
                      dy.at(b, q, m, n) * std::clamp(w.at(q, c, i, j) - xv, -1.0, 1.0);
                }
              }
  CHECK(oracle::max_abs_diff(got.dw.data(), dw.data()) <= 1e-12);
  CHECK(oracle::max_abs_diff(got.dx.data(), dx.data()) <= 1e-12);
}

TEST_CASE("sign subgradient matches finite differences away from kinks") {
  // Values on a coarse grid offset by 0.05 keep |x - w| >= 0.05 > 1e-2.
  Tensor x = seeded_uniform({1, 2, 4, 4}, -2, 2, 41);
  Tensor w = seeded_uniform({2, 2, 3, 3}, -2, 2, 42);
  for (double& v : x.data()) v = std::round(v * 5.0) / 5.0;
  for (double& v : w.data()) v = std::round(v * 5.0) / 5.0 + 0.1;
  const Geometry g{1, 1};
  const Tensor y = adder_correlate(x, w, g);
  const Tensor r = seeded_uniform(y.shape(), -1, 1, 43);
  const LayerGrads an = adder_backward(x, w, g, r, AdderGradient::sign);
  auto f = [&] {
    const Tensor out = adder_correlate(x, w, g);
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * r[i];
    return s;
  };
  CHECK(oracle::max_rel_err(an.dw.data(), oracle::numeric_grad(w, f)) < 1e-4);
  CHECK(oracle::max_rel_err(an.dx.data(), oracle::numeric_grad(x, f)) < 1e-4);
}

TEST_CASE("tape adder2d routes the chosen rule") {
  Var x = make_var(seeded_uniform({1, 1, 3, 3}, -1, 1, 51), true);
  Var w = make_param(seeded_uniform({1, 1, 3, 3}, -1, 1, 52));
  Tape tape;
  tape.backward(ops::sum(tape, ops::adder2d(tape, x, w, {1, 1}, AdderGradient::sign)));
  const LayerGrads ref = adder_backward(*x, *w, {1, 1}, Tensor({1, 1, 3, 3}, 1.0), AdderGradient::sign);
  CHECK(grad_vec(w) == ref.dw.storage());
  CHECK(grad_vec(x) == ref.dx.storage());
}

TEST_CASE("conv backward matches finite differences") {
  Tensor x = seeded_uniform({2, 2, 4, 4}, -1, 1, 61);
  Tensor w = seeded_uniform({3, 2, 3, 3}, -1, 1, 62);
  const Geometry g{1, 1};
  const Tensor r = seeded_uniform({2, 3, 4, 4}, -1, 1, 63);
  const LayerGrads an = conv2d_backward(x, w, g, r);
  auto f = [&] {
    const Tensor out = conv2d(x, w, g);
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * r[i];
    return s;
  };
  CHECK(oracle::max_rel_err(an.dw.data(), oracle::numeric_grad(w, f)) < 1e-4);
  CHECK(oracle::max_rel_err(an.dx.data(), oracle::numeric_grad(x, f)) < 1e-4);
}

TEST_CASE("conv identity and high-pass examples") {
  const Tensor x = seeded_uniform({1, 1, 4, 5}, -1, 1, 71);
  CHECK(conv2d(x, scalar(1.0), {}).storage() == x.storage());
  const Tensor hp({1, 1, 2, 2}, std::vector<double>{-1, 1, 1, -1});
  const Tensor flat = conv2d(Tensor({1, 1, 4, 4}, 3.25), hp, {});
  for (double v : flat.storage()) CHECK(v == 0.0);
}

TEST_CASE("power activation values, oddness and monotonicity") {
  CHECK(power_activation(scalar(-4), 0.5)[0] == doctest::Approx(-2.0));
  const Tensor y = seeded_uniform({1, 1, 1, 64}, -3, 3, 81);
  CHECK(power_activation(y, 1.0).storage() == y.storage());
  CHECK_THROWS_AS(power_activation(y, 0.0), ParameterError);
  CHECK_THROWS_AS(power_activation(y, -1.0), ParameterError);
  for (double a : {0.3, 0.7, 1.5, 3.0}) {
    Tensor neg = y;
    for (double& v : neg.data()) v = -v;
    const Tensor p = power_activation(y, a), pn = power_activation(neg, a);
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(pn[i] == -p[i]);
    Tensor sorted = y;
    std::sort(sorted.storage().begin(), sorted.storage().end());
    const Tensor ps = power_activation(sorted, a);
    for (std::size_t i = 1; i < ps.size(); ++i) CHECK(ps[i] > ps[i - 1]);
  }
}

TEST_CASE("power activation gradients") {
  Tensor y0 = seeded_uniform({1, 2, 3, 3}, -2, 2, 91);
  for (double& v : y0.data()) {
    if (std::fabs(v) < 1e-2) v = 0.5;
  }
  for (double a : {0.5, 1.0, 2.5}) {
    Var y = make_var(y0, true);
    Var alpha = make_param(scalar(a));
    Tape tape;
    tape.backward(probe_loss(tape, ops::power_activation(tape, y, alpha), 5));
    auto f = [&] {
      Tape t;
      return (*probe_loss(t, ops::power_activation(t, y, alpha), 5))[0];
    };
    CHECK(oracle::max_rel_err(grad_vec(y), oracle::numeric_grad(*y, f)) < 1e-4);
    CHECK(oracle::max_rel_err(grad_vec(alpha), oracle::numeric_grad(*alpha, f)) < 1e-4);
  }

  Var zero = make_var(Tensor({1, 1, 1, 2}, 0.0), true);
  Var alpha = make_param(scalar(0.5));
  Tape tape;
  tape.backward(ops::sum(tape, ops::power_activation(tape, zero, alpha)));
  for (double g : grad_vec(zero)) CHECK(g == 0.0);
  CHECK(grad_vec(alpha)[0] == 0.0);
}

TEST_CASE("rectified power gradients") {
  Tensor y0 = seeded_uniform({1, 2, 3, 3}, -2, 2, 95);
  for (double& v : y0.data()) {
    if (std::fabs(v) < 1e-2) v = 0.5;
  }
  Var y = make_var(y0, true);
  Var alpha = make_param(scalar(1.7));
  Tape tape;
  Var out = ops::power_relu(tape, y, alpha);
  for (std::size_t i = 0; i < y0.size(); ++i) {
    CHECK((*out)[i] == doctest::Approx(y0[i] > 0 ? std::pow(y0[i], 1.7) : 0.0));
  }
  tape.backward(probe_loss(tape, out, 6));
  auto f = [&] {
    Tape t;
    return (*probe_loss(t, ops::power_relu(t, y, alpha), 6))[0];
  };
  CHECK(oracle::max_rel_err(grad_vec(y), oracle::numeric_grad(*y, f)) < 1e-4);
  CHECK(oracle::max_rel_err(grad_vec(alpha), oracle::numeric_grad(*alpha, f)) < 1e-4);
}

TEST_CASE("batch norm statistics and running estimates") {
  BatchNormParams bn = BatchNormParams::create(2, 1.0);
  (*bn.gamma)[0] = 2.0;
  (*bn.gamma)[1] = 0.5;
  (*bn.beta)[0] = 0.3;
  (*bn.beta)[1] = -1.0;
  Var x = make_var(seeded_uniform({3, 2, 4, 4}, -2, 5, 101));
  Tape tape;
  const Var y = ops::batch_norm(tape, x, bn, true);
  for (std::size_t c = 0; c < 2; ++c) {
    double mean = 0.0, sq = 0.0, xm = 0.0, xsq = 0.0;
    const double n = 48.0;
    for (std::size_t b = 0; b < 3; ++b)
      for (std::size_t i = 0; i < 16; ++i) {
        mean += y->at(b, c, i / 4, i % 4);
        xm += x->at(b, c, i / 4, i % 4);
      }
    mean /= n;
    xm /= n;
    for (std::size_t b = 0; b < 3; ++b)
      for (std::size_t i = 0; i < 16; ++i) {
        sq += std::pow(y->at(b, c, i / 4, i % 4) - mean, 2);
        xsq += std::pow(x->at(b, c, i / 4, i % 4) - xm, 2);
      }
    const double var_b = xsq / n;
    CHECK(mean == doctest::Approx((*bn.beta)[c]).epsilon(1e-9));
    // The eps term shrinks the std by the factor sqrt(var / (var + eps)).
    CHECK(std::sqrt(sq / n) == doctest::Approx((*bn.gamma)[c] * std::sqrt(var_b / (var_b + 1e-5))).epsilon(1e-6));
    CHECK(bn.running_mean[c] == doctest::Approx(0.1 * xm));
    CHECK(bn.running_var[c] == doctest::Approx(0.9 + 0.1 * xsq / (n - 1)));
  }

  BatchNormParams unit = BatchNormParams::create(1, 1.0);
  Tensor z({1, 1, 1, 4}, std::vector<double>{-1.5, -0.5, 0.5, 1.5});
  const double s = std::sqrt(1.25);
  for (double& v : z.data()) v /= s;  // zero mean, unit variance
  Tape t2;
  const Var out = ops::batch_norm(t2, make_var(z), unit, true);
  CHECK(oracle::max_abs_diff(out->data(), z.data()) < 1e-5);

  Tape t3;
  const Var ev = ops::batch_norm(t3, make_var(z), unit, false);
  for (std::size_t i = 0; i < z.size(); ++i) {
    CHECK((*ev)[i] == doctest::Approx((z[i] - unit.running_mean[0]) / std::sqrt(unit.running_var[0] + 1e-5)));
  }
  BatchNormParams tiny = BatchNormParams::create(1, 1.0);
  Tape t4;
  CHECK_THROWS_AS(ops::batch_norm(t4, make_var(scalar(1.0)), tiny, true), ParameterError);
}

TEST_CASE("batch norm gradients match finite differences") {
  for (bool training : {true, false}) {
    BatchNormParams bn = BatchNormParams::create(2, 1.0);
    (*bn.gamma)[0] = 1.3;
    (*bn.gamma)[1] = -0.7;
    (*bn.beta)[1] = 0.2;
    bn.running_mean = {0.1, -0.3};
    bn.running_var = {1.7, 0.4};
    const BatchNormParams frozen = bn;
    Var x = make_var(seeded_uniform({2, 2, 3, 3}, -1, 2, 111), true);
    auto eval = [&](Tape& t) {
      BatchNormParams local = frozen;
      local.gamma = bn.gamma;
      local.beta = bn.beta;
      return probe_loss(t, ops::batch_norm(t, x, local, training), 7);
    };
    Tape tape;
    tape.backward(eval(tape));
    auto f = [&] {
      Tape t;
      return (*eval(t))[0];
    };
    CHECK(oracle::max_rel_err(grad_vec(x), oracle::numeric_grad(*x, f)) < 1e-4);
    CHECK(oracle::max_rel_err(grad_vec(bn.gamma), oracle::numeric_grad(*bn.gamma, f)) < 1e-4);
    CHECK(oracle::max_rel_err(grad_vec(bn.beta), oracle::numeric_grad(*bn.beta, f)) < 1e-4);
  }
}

TEST_CASE("self-shortcut block") {
  AdderLayerParams p = AdderLayerParams::create(3, 3, 3, 5, 0.0);
  const PowerActParams a = PowerActParams::create(1.4);
  const Tensor x = seeded_uniform({2, 3, 5, 5}, -1, 1, 121);
  CHECK(self_shortcut_block(x, p, a, true).storage() == x.storage());
  CHECK(self_shortcut_block(x, p, a, false).storage() == x.storage());

  // Compositional oracle with a nonzero gamma.
  AdderLayerParams q = AdderLayerParams::create(3, 3, 3, 6, 0.8);
  AdderLayerParams q2 = q;
  q2.bn = BatchNormParams::create(3, 0.8);
  const Tensor y = self_shortcut_block(x, q, a, true);
  Tape tape;
  const Var bn = ops::batch_norm(tape, make_var(adder_correlate(x, q2)), q2.bn, true);
  Tensor branch = *bn;
  for (double& v : branch.data()) v = v > 0.0 ? std::pow(v, 1.4) : 0.0;
  double bound = 0.0;
  for (double v : branch.data()) bound = std::max(bound, std::fabs(v));
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(y[i] == doctest::Approx(x[i] + branch[i]).epsilon(1e-12));
    CHECK(std::fabs(y[i] - x[i]) <= bound + 1e-12);
  }

  AdderLayerParams wide = AdderLayerParams::create(2, 3, 3, 7, 0.0);
  Tape t2;
  Var xv = make_var(seeded_uniform({1, 2, 4, 4}, -1, 1, 8));
  CHECK_THROWS_AS(adder_block(t2, xv, wide, &a, Activation::power_relu, true), ConfigError);
}

TEST_CASE("a block at identity init still receives gradient") {
  for (Activation act : {Activation::relu, Activation::power_relu}) {
    AdderLayerParams p = AdderLayerParams::create(2, 2, 3, 9, 0.0);
    PowerActParams a = PowerActParams::create(1.0);
    Var x = make_var(seeded_uniform({2, 2, 5, 5}, -1, 1, 10));
    Tape tape;
    Var y = adder_block(tape, x, p, &a, act, true);
    CHECK(y->storage() == x->storage());
    tape.backward(probe_loss(tape, y, 11));
    double g = 0.0, b = 0.0;
    for (double v : grad_vec(p.bn.gamma)) g += std::fabs(v);
    for (double v : grad_vec(p.bn.beta)) b += std::fabs(v);
    CHECK(g > 0.0);
    CHECK(b > 0.0);
  }
}

TEST_CASE("forward is bitwise deterministic") {
  const Tensor x = seeded_uniform({2, 4, 8, 8}, -1, 1, 131);
  const Tensor w = seeded_uniform({4, 4, 3, 3}, -1, 1, 132);
  CHECK(adder_correlate(x, w, {1, 1}).storage() == adder_correlate(x, w, {1, 1}).storage());
  CHECK(conv2d(x, w, {1, 1}).storage() == conv2d(x, w, {1, 1}).storage());
}
