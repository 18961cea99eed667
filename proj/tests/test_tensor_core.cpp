#include <doctest.h>

#include <limits>
#include <sstream>

#include "adsr/checkpoint.hpp"
#include "adsr/error.hpp"
#include "adsr/tape.hpp"
#include "oracles.hpp"

using namespace adsr;

TEST_CASE("tensor construction and fill") {
  Tensor z({1, 1, 2, 2});
  CHECK(z.size() == 4);
  for (double v : z.data()) CHECK(v == 0.0);
  CHECK_FALSE(z.has_grad());

  const Tensor one = tensor_new({1, 1, 1, 1}, 3.5);
  CHECK(one[0] == 3.5);

  const Tensor empty({0, 1, 1, 1}, 1.0);
  CHECK(empty.size() == 0);
  CHECK(empty.empty());
}

TEST_CASE("shape overflow and data length mismatch") {
  const std::size_t big = std::numeric_limits<std::size_t>::max() / 2;
  CHECK_THROWS_AS(Tensor({big, 4, 1, 1}), ShapeError);
  CHECK_THROWS_AS(Tensor({1, 1, 2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
}

TEST_CASE("row-major indexing") {
  Tensor t({2, 3, 4, 5});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<double>(i);
  CHECK(t.at(1, 2, 3, 4) == static_cast<double>(t.size() - 1));
  CHECK(t.at(0, 1, 0, 0) == 20.0);
  CHECK(t.at(1, 0, 0, 0) == 60.0);
}

TEST_CASE("seeded_uniform is deterministic and in range") {
  const Tensor a = seeded_uniform({1, 1, 4, 4}, -1.0, 1.0, 7);
  const Tensor b = seeded_uniform({1, 1, 4, 4}, -1.0, 1.0, 7);
  const Tensor c = seeded_uniform({1, 1, 4, 4}, -1.0, 1.0, 8);
  CHECK(a.storage() == b.storage());
  CHECK(a.storage() != c.storage());
  for (double v : a.data()) {
    CHECK(v >= -1.0);
    CHECK(v < 1.0);
  }
  CHECK_THROWS_AS(seeded_uniform({1, 1, 1, 1}, 1.0, 1.0, 0), ParameterError);
  CHECK_THROWS_AS(seeded_uniform({1, 1, 1, 1}, 2.0, 1.0, 0), ParameterError);
}

TEST_CASE("grad buffer lifecycle") {
  Tensor t({1, 1, 1, 3});
  CHECK_THROWS_AS(std::as_const(t).grad(), StateError);
  auto g = t.grad();
  CHECK(g.size() == 3);
  g[1] = 2.0;
  t.zero_grad();
  CHECK(std::as_const(t).grad()[1] == 0.0);
  t.drop_grad();
  CHECK_FALSE(t.has_grad());
}

TEST_CASE("backward of sum and of scaled sum") {
  Tape tape;
  Var w = make_param(seeded_uniform({1, 2, 2, 2}, -1, 1, 3));
  tape.backward(ops::sum(tape, w));
  for (double g : std::as_const(*w).grad()) CHECK(g == 1.0);

  Tape t2;
  w->zero_grad();
  Tensor c = seeded_uniform({1, 2, 2, 2}, -2, 2, 4);
  t2.backward(ops::sum(t2, ops::mul_const(t2, w, c)));
  for (std::size_t i = 0; i < c.size(); ++i) CHECK(std::as_const(*w).grad()[i] == c[i]);
}

TEST_CASE("fan-out accumulates and backward runs in reverse order") {
  Tape tape;
  Var w = make_param(Tensor({1, 1, 1, 2}, std::vector<double>{1.0, -2.0}));
  Var a = ops::scale(tape, w, 3.0);
  Var b = ops::add(tape, a, w);
  Var loss = ops::sum(tape, b);
  tape.backward(loss);
  CHECK(std::as_const(*w).grad()[0] == doctest::Approx(4.0));
  CHECK(std::as_const(*w).grad()[1] == doctest::Approx(4.0));
  const std::vector<std::string> expected{"sum", "add", "scale"};
  CHECK(tape.backward_order() == expected);
}

TEST_CASE("tape misuse") {
  Tape tape;
  Var w = make_param(Tensor({1, 1, 1, 2}, 1.0));
  Var s = ops::sum(tape, w);
  Var notscalar = ops::scale(tape, w, 2.0);
  CHECK_THROWS_AS(tape.backward(notscalar), ShapeError);
  tape.backward(s);
  CHECK(tape.consumed());
  CHECK_THROWS_AS(tape.backward(s), StateError);

  Tape other;
  Var foreign = ops::sum(other, w);
  Tape fresh;
  Var mine = ops::sum(fresh, w);
  (void)mine;
  CHECK_THROWS_AS(fresh.backward(foreign), StateError);
  tape.reset();
  CHECK_FALSE(tape.consumed());
}

TEST_CASE("non-finite outputs are rejected when checking is on") {
  Tape tape;
  tape.set_check_finite(true);
  Var w = make_param(Tensor({1, 1, 1, 1}, 1.0));
  Tensor inf({1, 1, 1, 1}, std::numeric_limits<double>::infinity());
  CHECK_THROWS_AS(ops::mul_const(tape, w, inf), NumericalError);
}

TEST_CASE("composite graph matches central differences") {
  Tensor x0 = seeded_uniform({1, 1, 3, 3}, -1, 1, 11);
  Tensor c1 = seeded_uniform({1, 1, 3, 3}, -1, 1, 12);
  Tensor c2 = seeded_uniform({1, 1, 3, 3}, -1, 1, 13);
  Var w = make_param(x0);
  auto build = [&](Tape& tape) {
    Var h = ops::relu(tape, ops::mul_const(tape, w, c1));
    Var z = ops::add(tape, ops::mul_const(tape, h, c2), ops::scale(tape, w, 0.5));
    return ops::mean(tape, ops::mul_const(tape, z, c1));
  };
  Tape tape;
  tape.backward(build(tape));
  const std::vector<double> analytic(std::as_const(*w).grad().begin(), std::as_const(*w).grad().end());
  Tensor& wt = *w;
  const auto numeric = oracle::numeric_grad(wt, [&] {
    Tape t;
    return (*build(t))[0];
  });
  CHECK(oracle::max_rel_err(analytic, numeric) < 1e-5);
}

TEST_CASE("gradient linearity") {
  Var w = make_param(seeded_uniform({1, 1, 2, 3}, -1, 1, 21));
  const Tensor c = seeded_uniform({1, 1, 2, 3}, -1, 1, 22);
  auto grad_of = [&](double a, double b) {
    w->zero_grad();
    Tape t;
    Var l1 = ops::sum(t, ops::relu(t, ops::mul_const(t, w, c)));
    Var l2 = ops::mean(t, ops::mul_const(t, w, c));
    t.backward(ops::add(t, ops::scale(t, l1, a), ops::scale(t, l2, b)));
    return std::vector<double>(std::as_const(*w).grad().begin(), std::as_const(*w).grad().end());
  };
  const auto g1 = grad_of(1, 0), g2 = grad_of(0, 1), mix = grad_of(2.5, -1.5);
  for (std::size_t i = 0; i < g1.size(); ++i) CHECK(mix[i] == doctest::Approx(2.5 * g1[i] - 1.5 * g2[i]));
}

TEST_CASE("checkpoint round trip") {
  Checkpoint ck;
  ck.header["note"] = "hello";
  ck.tensors.emplace_back("a", seeded_uniform({1, 2, 3, 4}, -1, 1, 5));
  ck.tensors.emplace_back("b", Tensor({1, 1, 1, 1}, -0.0));
  std::stringstream ss;
  write_checkpoint(ss, ck);
  const std::string bytes = ss.str();
  CHECK(bytes.substr(0, 5) == "ADSR1");

  std::stringstream in(bytes);
  const Checkpoint back = read_checkpoint(in);
  CHECK(back.header.at("note") == "hello");
  CHECK_FALSE(back.header.contains("tensors"));
  CHECK(back.tensor("a").storage() == ck.tensors[0].second.storage());
  CHECK(back.tensor("a").shape() == Shape{1, 2, 3, 4});
  CHECK(std::signbit(back.tensor("b")[0]));
  CHECK_THROWS_AS(back.tensor("missing"), FormatError);
}

TEST_CASE("checkpoint corruption is reported with offsets") {
  Checkpoint ck;
  ck.tensors.emplace_back("a", Tensor({1, 1, 2, 2}, 1.0));
  std::stringstream ss;
  write_checkpoint(ss, ck);
  const std::string good = ss.str();

  std::string bad_magic = good;
  bad_magic[0] = 'X';
  std::stringstream s1(bad_magic);
  try {
    read_checkpoint(s1);
    FAIL("expected a format error");
  } catch (const FormatError& e) {
    CHECK(e.offset() == 0);
  }

  std::stringstream s2(good.substr(0, good.size() - 3));
  CHECK_THROWS_AS(read_checkpoint(s2), FormatError);
  std::stringstream s3(good + "x");
  CHECK_THROWS_AS(read_checkpoint(s3), FormatError);
  std::stringstream s4(good.substr(0, 9));
  CHECK_THROWS_AS(read_checkpoint(s4), FormatError);
}
