#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "adsr/models.hpp"

namespace adsr {

/// 32-bit floating point operation costs.
inline constexpr double kMulPicojoule = 3.7;
inline constexpr double kAddPicojoule = 0.9;

/// Operation counts of one layer at a given output resolution. The core
/// counts are the layer's correlation; the overhead counts are the
/// self-shortcut additions and power-activation multiplications.
struct LayerOps {
  std::string name;
  LayerKind kind = LayerKind::conv;
  std::uint64_t n_mul = 0;
  std::uint64_t n_add = 0;
  std::uint64_t overhead_mul = 0;
  std::uint64_t overhead_add = 0;
};

/// conv: n_mul = n_add = k^2 c_in c_out h w.
/// adder: n_mul = 0, n_add = 2 k^2 c_in c_out h w.
/// self-shortcut: +c_out h w additions; power activation: +c_out h w
/// multiplications (both in the overhead fields).
std::vector<LayerOps> count_ops(const NetworkSpec& spec, std::size_t height, std::size_t width);

struct OpTotals {
  std::uint64_t n_mul = 0;
  std::uint64_t n_add = 0;
};

/// Sums the core counts, plus the overhead counts when requested.
OpTotals total_ops(const std::vector<LayerOps>& layers, bool include_overhead);

/// How an all-convolutional network is priced. mul_only charges 3.7 pJ per
/// multiplication and nothing for its additions; networks with adder layers
/// are always priced mul_plus_add.
enum class CnnConvention { mul_plus_add, mul_only };

CnnConvention parse_cnn_convention(const std::string& s);
std::string to_string(CnnConvention c);

struct EnergyRow {
  std::string name;
  std::uint64_t n_mul = 0;
  std::uint64_t n_add = 0;
  double picojoule = 0.0;
};

struct EnergyReport {
  std::vector<EnergyRow> rows;
  std::uint64_t total_mul = 0;
  std::uint64_t total_add = 0;
  double total_picojoule = 0.0;
  CnnConvention convention = CnnConvention::mul_plus_add;
  bool priced_as_cnn = false;  // true when mul_only applied

  /// Fixed-column table with totals in G units.
  std::string table() const;
  /// name,n_mul,n_add,pJ per row plus a "total" row.
  std::string csv() const;
};

struct EnergyOptions {
  CnnConvention convention = CnnConvention::mul_plus_add;
  bool include_overhead = true;
};

EnergyReport energy(const std::vector<LayerOps>& counts, EnergyOptions options = {});

/// Prices aggregate counts directly (e.g. published #Mul/#Add totals).
/// `is_cnn` selects whether the convention applies.
EnergyReport energy(OpTotals totals, bool is_cnn, CnnConvention convention);

}  // namespace adsr
