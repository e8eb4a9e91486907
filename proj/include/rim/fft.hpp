#pragma once

// Discrete Fourier transforms over Eigen vectors.
//
// Forward convention: X[k] = sum_n x[n] exp(-j 2 pi k n / N), unnormalized.
// The inverse carries the 1/N factor. Power-of-two lengths go through an
// iterative radix-2 FFT; every other length falls back to the direct O(N^2)
// sum, which is also what the tests use as the reference.

#include <Eigen/Core>

#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace rim {

template <typename Scalar>
using ComplexVector = Eigen::Matrix<std::complex<Scalar>, Eigen::Dynamic, 1>;

enum class Direction { forward, inverse };

constexpr bool is_power_of_two(Eigen::Index n) { return n > 0 && (n & (n - 1)) == 0; }

namespace detail {

template <typename Scalar>
std::vector<std::complex<Scalar>> twiddles(Eigen::Index n, Direction dir) {
  const Scalar sign = dir == Direction::forward ? Scalar(-1) : Scalar(1);
  std::vector<std::complex<Scalar>> w(static_cast<std::size_t>(n));
  for (Eigen::Index k = 0; k < n; ++k) {
    const Scalar angle = sign * Scalar(2) * std::numbers::pi_v<Scalar> * Scalar(k) / Scalar(n);
    w[static_cast<std::size_t>(k)] = std::polar(Scalar(1), angle);
  }
  return w;
}

template <typename Derived>
auto to_complex(const Eigen::MatrixBase<Derived>& x) {
  using Real = typename Eigen::NumTraits<typename Derived::Scalar>::Real;
  ComplexVector<Real> out = x.derived().template cast<std::complex<Real>>();
  return out;
}

}  // namespace detail

/// Direct O(N^2) transform. Exponents are reduced modulo N before lookup so
/// the table has only N entries.
template <typename Derived>
auto dft_direct(const Eigen::MatrixBase<Derived>& input, Direction dir = Direction::forward) {
  auto x = detail::to_complex(input);
  using Complex = typename decltype(x)::Scalar;
  using Real = typename Complex::value_type;
  const Eigen::Index n = x.size();
  if (n == 0) throw std::invalid_argument("dft: empty input");
  const auto w = detail::twiddles<Real>(n, dir);
  ComplexVector<Real> out(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    Complex acc(0, 0);
    for (Eigen::Index i = 0; i < n; ++i) acc += x[i] * w[static_cast<std::size_t>((k * i) % n)];
    out[k] = acc;
  }
  if (dir == Direction::inverse) out /= Real(n);
  return out;
}

/// Unnormalized forward transform (or 1/N-normalized inverse).
template <typename Derived>
auto fft(const Eigen::MatrixBase<Derived>& input, Direction dir = Direction::forward) {
  auto x = detail::to_complex(input);
  using Real = typename decltype(x)::Scalar::value_type;
  const Eigen::Index n = x.size();
  if (n == 0) throw std::invalid_argument("fft: empty input");
  if (!is_power_of_two(n)) return dft_direct(x, dir);

  for (Eigen::Index i = 1, j = 0; i < n; ++i) {
    Eigen::Index bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(x[i], x[j]);
  }
  const auto w = detail::twiddles<Real>(n, dir);
  for (Eigen::Index len = 2; len <= n; len <<= 1) {
    const Eigen::Index half = len / 2;
    const Eigen::Index stride = n / len;
    for (Eigen::Index start = 0; start < n; start += len) {
      for (Eigen::Index k = 0; k < half; ++k) {
        const auto u = x[start + k];
        const auto v = x[start + k + half] * w[static_cast<std::size_t>(k * stride)];
        x[start + k] = u + v;
        x[start + k + half] = u - v;
      }
    }
  }
  if (dir == Direction::inverse) x /= Real(n);
  return x;
}

template <typename Derived>
auto ifft(const Eigen::MatrixBase<Derived>& spectrum) {
  return fft(spectrum, Direction::inverse);
}

/// Signed frequency of bin k for an N-point transform at sample rate fs.
/// Bins above N/2 map to negative frequencies; bin N/2 is reported as +fs/2.
inline double bin_frequency(Eigen::Index k, Eigen::Index n, double fs) {
  const Eigen::Index signed_k = k <= n / 2 ? k : k - n;
  return static_cast<double>(signed_k) * fs / static_cast<double>(n);
}

}  // namespace rim
