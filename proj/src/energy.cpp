#include "adsr/energy.hpp"

#include <fmt/format.h>

#include "adsr/error.hpp"

namespace adsr {

std::vector<LayerOps> count_ops(const NetworkSpec& spec, std::size_t height, std::size_t width) {
  spec.validate();
  const std::uint64_t hw = static_cast<std::uint64_t>(height) * width;
  std::vector<LayerOps> out;
  out.reserve(spec.layers.size());
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    // All layers are stride 1 with same padding, so every output is h x w.
    const std::uint64_t macs = static_cast<std::uint64_t>(l.k) * l.k * l.c_in * l.c_out * hw;
    LayerOps ops;
    ops.name = "layer" + std::to_string(i) + ":" + to_string(l.kind);
    ops.kind = l.kind;
    if (l.kind == LayerKind::conv) {
      ops.n_mul = macs;
      ops.n_add = macs;
    } else {
      ops.n_add = 2 * macs;
    }
    if (l.kind == LayerKind::adder_block) ops.overhead_add += l.c_out * hw;
    if (l.activation == Activation::power_relu) ops.overhead_mul += l.c_out * hw;
    out.push_back(std::move(ops));
  }
  return out;
}

OpTotals total_ops(const std::vector<LayerOps>& layers, bool include_overhead) {
  OpTotals t;
  for (const auto& l : layers) {
    t.n_mul += l.n_mul + (include_overhead ? l.overhead_mul : 0);
    t.n_add += l.n_add + (include_overhead ? l.overhead_add : 0);
  }
  return t;
}

CnnConvention parse_cnn_convention(const std::string& s) {
  if (s == "mul-plus-add") return CnnConvention::mul_plus_add;
  if (s == "mul-only") return CnnConvention::mul_only;
  throw ConfigError("unknown CNN pricing convention '" + s + "' (mul-only | mul-plus-add)");
}

std::string to_string(CnnConvention c) {
  return c == CnnConvention::mul_only ? "mul-only" : "mul-plus-add";
}

namespace {

double price(std::uint64_t mul, std::uint64_t add, bool mul_only) {
  return kMulPicojoule * static_cast<double>(mul) +
         (mul_only ? 0.0 : kAddPicojoule * static_cast<double>(add));
}

}  // namespace

EnergyReport energy(const std::vector<LayerOps>& counts, EnergyOptions options) {
  bool all_conv = true;
  for (const auto& l : counts) all_conv = all_conv && l.kind == LayerKind::conv;

  EnergyReport r;
  r.convention = options.convention;
  r.priced_as_cnn = all_conv && options.convention == CnnConvention::mul_only;
  for (const auto& l : counts) {
    EnergyRow row;
    row.name = l.name;
    row.n_mul = l.n_mul + (options.include_overhead ? l.overhead_mul : 0);
    row.n_add = l.n_add + (options.include_overhead ? l.overhead_add : 0);
    row.picojoule = price(row.n_mul, row.n_add, r.priced_as_cnn);
    r.total_mul += row.n_mul;
    r.total_add += row.n_add;
    r.rows.push_back(std::move(row));
  }
  r.total_picojoule = price(r.total_mul, r.total_add, r.priced_as_cnn);
  return r;
}

EnergyReport energy(OpTotals totals, bool is_cnn, CnnConvention convention) {
  EnergyReport r;
  r.convention = convention;
  r.priced_as_cnn = is_cnn && convention == CnnConvention::mul_only;
  r.total_mul = totals.n_mul;
  r.total_add = totals.n_add;
  r.total_picojoule = price(totals.n_mul, totals.n_add, r.priced_as_cnn);
  r.rows.push_back({"total", totals.n_mul, totals.n_add, r.total_picojoule});
  return r;
}

std::string EnergyReport::table() const {
  std::string out = fmt::format("{:<24} {:>14} {:>14} {:>14}\n", "layer", "#Mul (G)", "#Add (G)",
                                "energy (GpJ)");
  for (const auto& row : rows) {
    out += fmt::format("{:<24} {:>14.4f} {:>14.4f} {:>14.4f}\n", row.name, row.n_mul / 1e9,
                       row.n_add / 1e9, row.picojoule / 1e9);
  }
  out += fmt::format("{:<24} {:>14.1f} {:>14.1f} {:>14.1f}\n", "total", total_mul / 1e9,
                     total_add / 1e9, total_picojoule / 1e9);
  out += fmt::format("pricing: {} ({} pJ/mul, {} pJ/add{})\n", to_string(convention),
                     kMulPicojoule, kAddPicojoule,
                     priced_as_cnn ? ", additions not charged" : "");
  return out;
}

std::string EnergyReport::csv() const {
  std::string out = "name,n_mul,n_add,pJ\n";
  for (const auto& row : rows) {
    out += fmt::format("{},{},{},{:.6e}\n", row.name, row.n_mul, row.n_add, row.picojoule);
  }
  out += fmt::format("total,{},{},{:.6e}\n", total_mul, total_add, total_picojoule);
  return out;
}

}  // namespace adsr
