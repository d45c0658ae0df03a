#pragma once

#include <string>
#include <vector>

#include "unijdot/tensor.hpp"

namespace unijdot {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// Container layout: magic "UJDT", u32 version, u32 tensor count, then per
// tensor: u32 name length + bytes, u32 rank, u32 dims, raw little-endian
// 32-bit floats. Round-trips bit-exactly.
void write_checkpoint(const std::string& path,
                      const std::vector<NamedTensor>& tensors);

std::vector<NamedTensor> read_checkpoint(const std::string& path);

// Lookup helper; throws DataError naming the missing section.
const Tensor& checkpoint_get(const std::vector<NamedTensor>& tensors,
                             const std::string& name);

}  // namespace unijdot
