#include "adsr/tape.hpp"

#include <algorithm>

#include "adsr/error.hpp"

namespace adsr {

Var make_var(Tensor t, bool requires_grad) {
  auto v = std::make_shared<Tensor>(std::move(t));
  v->set_requires_grad(requires_grad);
  return v;
}

Var make_param(Tensor t) { return make_var(std::move(t), true); }

void accumulate_grad(Tensor& v, std::span<const double> g) {
  if (!v.requires_grad()) return;
  auto dst = v.grad();
  if (dst.size() != g.size()) throw ShapeError("gradient length mismatch for " + v.shape().str());
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
}

Var Tape::record(std::string name, Tensor value, const std::vector<Var>& inputs,
                 BackwardFn backward) {
  if (consumed_) throw StateError("tape already consumed; reset() before recording '" + name + "'");
  if (check_finite_ && !value.all_finite()) {
    throw NumericalError("non-finite output in op '" + name + "'");
  }
  const bool needs = std::any_of(inputs.begin(), inputs.end(),
                                 [](const Var& v) { return v && v->requires_grad(); });
  auto out = make_var(std::move(value), needs);
  if (needs) entries_.push_back(Entry{std::move(name), out, std::move(backward)});
  return out;
}

void Tape::backward(const Var& loss) {
  if (consumed_) throw StateError("backward called twice on the same tape");
  if (!loss || loss->size() != 1) {
    throw ShapeError("backward requires a scalar loss, got " +
                     (loss ? loss->shape().str() : std::string("null")));
  }
  const auto it = std::find_if(entries_.begin(), entries_.end(),
                               [&](const Entry& e) { return e.output == loss; });
  if (it == entries_.end()) throw StateError("loss was not produced on this tape");

  for (auto& e : entries_) e.output->zero_grad();
  loss->grad()[0] = 1.0;

  visited_.clear();
  visited_.reserve(entries_.size());
  for (auto e = entries_.rbegin(); e != entries_.rend(); ++e) {
    visited_.push_back(e->name);
    e->backward(*e->output);
  }
  consumed_ = true;
}

void Tape::reset() {
  entries_.clear();
  visited_.clear();
  consumed_ = false;
}

namespace ops {

Var add(Tape& tape, const Var& a, const Var& b) {
  if (a->shape() != b->shape()) {
    throw ShapeError("add: " + a->shape().str() + " vs " + b->shape().str());
  }
  Tensor out(a->shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (*a)[i] + (*b)[i];
  return tape.record("add", std::move(out), {a, b}, [a, b](const Tensor& o) {
    accumulate_grad(*a, o.grad());
    accumulate_grad(*b, o.grad());
  });
}

Var scale(Tape& tape, const Var& a, double s) {
  Tensor out(a->shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (*a)[i] * s;
  return tape.record("scale", std::move(out), {a}, [a, s](const Tensor& o) {
    if (!a->requires_grad()) return;
    auto g = o.grad();
    auto dst = a->grad();
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i] * s;
  });
}

Var mul_const(Tape& tape, const Var& a, const Tensor& c) {
  if (a->shape() != c.shape()) {
    throw ShapeError("mul_const: " + a->shape().str() + " vs " + c.shape().str());
  }
  Tensor out(a->shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (*a)[i] * c[i];
  return tape.record("mul_const", std::move(out), {a}, [a, c](const Tensor& o) {
    if (!a->requires_grad()) return;
    auto g = o.grad();
    auto dst = a->grad();
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i] * c[i];
  });
}

Var sum(Tape& tape, const Var& a) {
  double s = 0.0;
  for (double v : a->data()) s += v;
  return tape.record("sum", Tensor({1, 1, 1, 1}, s), {a}, [a](const Tensor& o) {
    if (!a->requires_grad()) return;
    const double g = o.grad()[0];
    for (double& d : a->grad()) d += g;
  });
}

Var mean(Tape& tape, const Var& a) {
  if (a->empty()) throw ShapeError("mean of an empty tensor");
  double s = 0.0;
  for (double v : a->data()) s += v;
  const double inv = 1.0 / static_cast<double>(a->size());
  return tape.record("mean", Tensor({1, 1, 1, 1}, s * inv), {a}, [a, inv](const Tensor& o) {
    if (!a->requires_grad()) return;
    const double g = o.grad()[0] * inv;
    for (double& d : a->grad()) d += g;
  });
}

Var relu(Tape& tape, const Var& a) {
  Tensor out(a->shape());
  // NaN passes through so the per-layer finiteness check can see it.
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (*a)[i] <= 0.0 ? 0.0 : (*a)[i];
  return tape.record("relu", std::move(out), {a}, [a](const Tensor& o) {
    if (!a->requires_grad()) return;
    auto g = o.grad();
    auto dst = a->grad();
    // Right derivative at the kink: a zero-gamma BN feeding this op sits
    // exactly at 0 and must still receive gradient.
    for (std::size_t i = 0; i < g.size(); ++i) {
      if ((*a)[i] >= 0.0) dst[i] += g[i];
    }
  });
}

}  // namespace ops
}  // namespace adsr
