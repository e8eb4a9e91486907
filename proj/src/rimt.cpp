#include "rim/rimt.hpp"

#include "rim/errors.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace rim {

namespace {

constexpr std::array<char, 4> kMagic{'R', 'I', 'M', 'T'};
constexpr std::uint8_t kVersion = 1;

void put_u64(std::ostream& os, std::uint64_t v) {
  std::array<char, 8> b;
  for (int i = 0; i < 8; ++i) b[static_cast<std::size_t>(i)] = static_cast<char>((v >> (8 * i)) & 0xffu);
  os.write(b.data(), 8);
}

void put_u32(std::ostream& os, std::uint32_t v) {
  std::array<char, 4> b;
  for (int i = 0; i < 4; ++i) b[static_cast<std::size_t>(i)] = static_cast<char>((v >> (8 * i)) & 0xffu);
  os.write(b.data(), 4);
}

std::uint64_t get_u64(std::istream& is) {
  std::array<unsigned char, 8> b{};
  if (!is.read(reinterpret_cast<char*>(b.data()), 8)) throw ArtifactError("rimt: truncated header");
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[static_cast<std::size_t>(i)];
  return v;
}

std::uint32_t get_u32(std::istream& is) {
  std::array<unsigned char, 4> b{};
  if (!is.read(reinterpret_cast<char*>(b.data()), 4)) throw ArtifactError("rimt: truncated payload");
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[static_cast<std::size_t>(i)];
  return v;
}

}  // namespace

std::size_t element_size(Dtype dtype) {
  switch (dtype) {
    case Dtype::f32: return 4;
    case Dtype::f64: return 8;
    case Dtype::complex64: return 8;
    case Dtype::complex128: return 16;
  }
  throw std::invalid_argument("rimt: unknown dtype");
}

bool is_complex(Dtype dtype) { return dtype == Dtype::complex64 || dtype == Dtype::complex128; }

std::uint64_t RimtArray::element_count() const {
  std::uint64_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

void write_rimt(std::ostream& os, const RimtArray& a) {
  if (a.dims.size() > 255) throw std::invalid_argument("rimt: rank above 255");
  const std::uint64_t scalars = a.element_count() * (is_complex(a.dtype) ? 2 : 1);
  if (scalars != a.values.size()) throw std::invalid_argument("rimt: value count does not match dims");
  os.write(kMagic.data(), 4);
  const std::array<char, 3> head{static_cast<char>(kVersion), static_cast<char>(a.dtype),
                                 static_cast<char>(a.dims.size())};
  os.write(head.data(), 3);
  for (auto d : a.dims) put_u64(os, d);
  const bool single = a.dtype == Dtype::f32 || a.dtype == Dtype::complex64;
  for (double v : a.values) {
    if (single)
      put_u32(os, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    else
      put_u64(os, std::bit_cast<std::uint64_t>(v));
  }
  if (!os) throw IoError("rimt: write failed");
}

RimtArray read_rimt(std::istream& is) {
  std::array<char, 4> magic{};
  if (!is.read(magic.data(), 4) || magic != kMagic) throw ArtifactError("rimt: bad magic");
  std::array<unsigned char, 3> head{};
  if (!is.read(reinterpret_cast<char*>(head.data()), 3)) throw ArtifactError("rimt: truncated header");
  if (head[0] != kVersion) throw ArtifactError("rimt: unsupported version " + std::to_string(head[0]));
  if (head[1] > 3) throw ArtifactError("rimt: unknown dtype " + std::to_string(head[1]));
  RimtArray a;
  a.dtype = static_cast<Dtype>(head[1]);
  a.dims.resize(head[2]);
  for (auto& d : a.dims) d = get_u64(is);
  const std::uint64_t scalars = a.element_count() * (is_complex(a.dtype) ? 2 : 1);
  if (scalars > (std::uint64_t{1} << 34)) throw ArtifactError("rimt: implausible dims");
  a.values.resize(static_cast<std::size_t>(scalars));
  const bool single = a.dtype == Dtype::f32 || a.dtype == Dtype::complex64;
  for (auto& v : a.values)
    v = single ? static_cast<double>(std::bit_cast<float>(get_u32(is))) : std::bit_cast<double>(get_u64(is));
  return a;
}

void save_rimt(const std::filesystem::path& path, const RimtArray& array) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("rimt: cannot open " + path.string() + " for writing");
  write_rimt(os, array);
}

RimtArray load_rimt(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ArtifactError("rimt: cannot open " + path.string());
  return read_rimt(is);
}

RimtArray to_rimt(const Tensor& t, Dtype dtype) {
  if (is_complex(dtype)) {
    if (t.dim(-1) != 2) throw std::invalid_argument("rimt: complex dtype needs a trailing (re, im) axis");
    RimtArray a;
    a.dtype = dtype;
    for (std::size_t i = 0; i + 1 < t.shape().size(); ++i) a.dims.push_back(static_cast<std::uint64_t>(t.shape()[i]));
    a.values.assign(t.data().begin(), t.data().end());
    return a;
  }
  RimtArray a;
  a.dtype = dtype;
  for (Index d : t.shape()) a.dims.push_back(static_cast<std::uint64_t>(d));
  a.values.assign(t.data().begin(), t.data().end());
  return a;
}

Tensor from_rimt(const RimtArray& a) {
  Shape shape;
  for (auto d : a.dims) shape.push_back(static_cast<Index>(d));
  if (is_complex(a.dtype)) shape.push_back(2);
  return Tensor::from_data(std::move(shape), a.values);
}

}  // namespace rim
