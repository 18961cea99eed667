#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "adsr/tensor.hpp"

namespace adsr {

/// On-disk container:
///   "ADSR1" | u64 LE header length | UTF-8 JSON header | f64 LE arrays
/// The header's "tensors" array lists {name, shape} in payload order; any
/// other header keys belong to the caller.
struct Checkpoint {
  nlohmann::json header = nlohmann::json::object();
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor& tensor(const std::string& name) const;
};

inline constexpr char kCheckpointMagic[] = "ADSR1";

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace adsr
