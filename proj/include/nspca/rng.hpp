#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>

#include <Eigen/Core>

namespace nspca::rng {

// All randomness in the project flows through SplitMix64 streams. A stream is
// keyed by a 64-bit value derived from (user seed, purpose tag, indices...),
// so independent work items (trials, blocks, path steps) draw from disjoint
// streams regardless of scheduling order.

inline constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ull;

inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// Purpose tags. Keys derived with distinct tags never collide with each other.
enum Tag : std::uint64_t {
  kTagPathInit = 0x01,
  kTagPathPlane = 0x02,
  kTagSampleLatent = 0x03,
  kTagSampleNoise = 0x04,
  kTagIterateInit = 0x05,
  kTagTrial = 0x06,
  kTagInstance = 0x07,
  kTagNoiseFit = 0x08,
  kTagWishart = 0x09,
};

inline std::uint64_t derive(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
  std::uint64_t key = mix64(seed + kGamma);
  for (std::uint64_t p : path) key = mix64(key ^ (p + kGamma));
  return key;
}

namespace detail {

// Ziggurat layers for the standard normal (128 boxes, Marsaglia-Tsang
// parameters). Gaussian draws dominate the sampling cost of every
// experiment, and the ziggurat needs no transcendental call on the fast
// path.
struct ZigguratTable {
  double x[129];
  double f[129];

  ZigguratTable() {
    constexpr double r = 3.442619855899;
    constexpr double v = 9.91256303526217e-3;
    x[0] = v / std::exp(-0.5 * r * r);
    x[1] = r;
    f[0] = std::exp(-0.5 * x[0] * x[0]);
    f[1] = std::exp(-0.5 * r * r);
    for (int i = 2; i < 128; ++i) {
      x[i] = std::sqrt(-2.0 * std::log(v / x[i - 1] + std::exp(-0.5 * x[i - 1] * x[i - 1])));
      f[i] = std::exp(-0.5 * x[i] * x[i]);
    }
    x[128] = 0.0;
    f[128] = 1.0;
  }
};

inline const ZigguratTable& ziggurat() {
  static const ZigguratTable table;
  return table;
}

}  // namespace detail

class Stream {
 public:
  explicit Stream(std::uint64_t key) : state_(key) {}

  std::uint64_t next_u64() {
    state_ += kGamma;
    return mix64(state_);
  }

  // Uniform on (0, 1]; never 0, so log() is safe.
  double next_unit() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  double next_gaussian() {
    const auto& zig = detail::ziggurat();
    for (;;) {
      const std::uint64_t bits = next_u64();
      const int layer = static_cast<int>(bits & 127u);
      // Signed uniform in (-1, 1) from the top 57 bits.
      const double u =
          static_cast<double>(static_cast<std::int64_t>(bits & ~127ull)) * 0x1.0p-63;
      const double z = u * zig.x[layer];
      if (std::abs(z) < zig.x[layer + 1]) return z;
      if (layer == 0) return tail_sample(u < 0.0);
      const double h = zig.f[layer + 1] +
                       next_unit() * (zig.f[layer] - zig.f[layer + 1]);
      if (h < std::exp(-0.5 * z * z)) return z;
    }
  }

  void fill_gaussian(double* dst, Eigen::Index n) {
    for (Eigen::Index i = 0; i < n; ++i) dst[i] = next_gaussian();
  }

  void fill_gaussian(Eigen::Ref<Eigen::MatrixXd> m) {
    if (m.innerStride() == 1 && m.outerStride() == m.rows()) {
      fill_gaussian(m.data(), m.size());
    } else {
      for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = next_gaussian();
    }
  }

 private:
  double tail_sample(bool negative) {
    constexpr double r = 3.442619855899;
    for (;;) {
      const double xx = -std::log(next_unit()) / r;
      const double yy = -std::log(next_unit());
      if (yy + yy > xx * xx) return negative ? -(r + xx) : (r + xx);
    }
  }

  std::uint64_t state_;
};

}  // namespace nspca::rng
