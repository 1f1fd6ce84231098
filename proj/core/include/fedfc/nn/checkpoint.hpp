#pragma once

#include <string>

#include "fedfc/nn/model.hpp"

namespace fedfc::nn {

// Binary container, little-endian, layout documented in the project README:
//   magic "FEDFCCKP" | u32 version | u32 len + architecture id |
//   u32 tensor count | per tensor: u32 len + id, u32 rows, u32 cols,
//   rows*cols f64 in row-major order.
// Buffers (BN running stats) are included so a loaded model evaluates
// identically to the saved one.
void save_checkpoint(MlpModel& model, const std::string& path);
MlpModel load_checkpoint(const std::string& path);

}  // namespace fedfc::nn
