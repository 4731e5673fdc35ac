#pragma once

// Binary checkpoint layout, all integers and floats little-endian:
//
//   bytes 0..7   magic "TTACKPT\0"
//   byte  8      format version (kCheckpointVersion)
//   u32          input_dim
//   u32          layer count L
//   L times:     u32 out_dim, u8 activation (0 identity, 1 relu)
//   L times:     f64 eps,
//                f64[out*in] weight (row-major), f64[out] bias,
//                f64[out] gamma, f64[out] beta,
//                f64[out] running_mean, f64[out] running_var
//
// Stats mode is a runtime setting and is not stored; loaded models use
// SourceStats.

#include <cstdint>
#include <filesystem>
#include <iosfwd>

#include "tta/nn.hpp"

namespace tta {

inline constexpr std::uint8_t kCheckpointVersion = 1;

void write_checkpoint(const SmallClassifier& model, std::ostream& out);
SmallClassifier read_checkpoint(std::istream& in);

void save_checkpoint(const SmallClassifier& model, const std::filesystem::path& path);
SmallClassifier load_checkpoint(const std::filesystem::path& path);

}  // namespace tta
