#pragma once

// RIMT binary tensor files.
//
//   offset  size        field
//   0       4           magic "RIMT"
//   4       1           version (1)
//   5       1           dtype: 0 f32, 1 f64, 2 complex64, 3 complex128 (interleaved re, im)
//   6       1           rank
//   7       8 * rank    dims, u64 little-endian
//   ...                 payload, row-major little-endian IEEE-754
//
// Complex payloads hold 2 * product(dims) scalars.

#include "rim/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

namespace rim {

enum class Dtype : std::uint8_t { f32 = 0, f64 = 1, complex64 = 2, complex128 = 3 };

std::size_t element_size(Dtype dtype);
bool is_complex(Dtype dtype);

struct RimtArray {
  Dtype dtype = Dtype::f64;
  std::vector<std::uint64_t> dims;
  std::vector<double> values;  // interleaved for complex dtypes

  std::uint64_t element_count() const;
  std::size_t payload_bytes() const { return static_cast<std::size_t>(element_count()) * element_size(dtype); }
};

void write_rimt(std::ostream& os, const RimtArray& array);
/// Throws ArtifactError on a malformed or truncated stream.
RimtArray read_rimt(std::istream& is);

void save_rimt(const std::filesystem::path& path, const RimtArray& array);
RimtArray load_rimt(const std::filesystem::path& path);

/// Real tensors map onto f64 arrays with the same dims.
RimtArray to_rimt(const Tensor& t, Dtype dtype = Dtype::f64);
/// Complex arrays become [dims..., 2] tensors.
Tensor from_rimt(const RimtArray& array);

}  // namespace rim
