#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "adsr/tensor.hpp"

namespace adsr {

/// Shared handle to a tensor living on (or feeding) a tape.
using Var = std::shared_ptr<Tensor>;

Var make_var(Tensor t, bool requires_grad = false);
Var make_param(Tensor t);

/// Records operations in execution order and replays their backward rules
/// in exact reverse order. A tape can be consumed once; call reset() to
/// record a fresh graph.
class Tape {
 public:
  /// Reads `out.grad()` and accumulates into the gradients of the op inputs.
  using BackwardFn = std::function<void(const Tensor& out)>;

  struct Entry {
    std::string name;
    Var output;
    BackwardFn backward;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Records `value` as the output of op `name`. The output requires a
  /// gradient iff any input does; otherwise nothing is recorded.
  Var record(std::string name, Tensor value, const std::vector<Var>& inputs, BackwardFn backward);

  /// Populates gradients of every requires-grad tensor reachable from
  /// `loss`. Parameter gradients accumulate; the optimizer zeroes them.
  void backward(const Var& loss);

  void reset();

  bool consumed() const noexcept { return consumed_; }
  std::size_t size() const noexcept { return entries_.size(); }
  const std::vector<Entry>& entries() const noexcept { return entries_; }

  /// Op names in the order the last backward() visited them.
  const std::vector<std::string>& backward_order() const noexcept { return visited_; }

  /// When enabled, record() rejects non-finite outputs with a
  /// NumericalError naming the op.
  void set_check_finite(bool on) noexcept { check_finite_ = on; }

 private:
  std::vector<Entry> entries_;
  std::vector<std::string> visited_;
  bool consumed_ = false;
  bool check_finite_ = false;
};

/// Adds `g` into the gradient of `v` when it participates in backward.
void accumulate_grad(Tensor& v, std::span<const double> g);

namespace ops {

Var add(Tape& tape, const Var& a, const Var& b);
Var scale(Tape& tape, const Var& a, double s);
/// Elementwise product with a constant tensor of the same shape.
Var mul_const(Tape& tape, const Var& a, const Tensor& c);
Var sum(Tape& tape, const Var& a);
Var mean(Tape& tape, const Var& a);
/// Gradient 1 at exactly 0 (right derivative).
Var relu(Tape& tape, const Var& a);

}  // namespace ops
}  // namespace adsr
