#include "mfrisk/rng.hpp"

#include <cmath>

namespace mfrisk {

namespace {

constexpr std::uint32_t kM0 = 0xD2511F53u;
constexpr std::uint32_t kM1 = 0xCD9E8D57u;
constexpr std::uint32_t kW0 = 0x9E3779B9u;
constexpr std::uint32_t kW1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t p = std::uint64_t(a) * b;
  hi = std::uint32_t(p >> 32);
  lo = std::uint32_t(p);
}

inline std::array<double, 2> box_muller(const Philox4x32::Counter& w) {
  const double u1 = to_unit_open_closed(w[0], w[1]);
  const double u2 = to_unit_open_closed(w[2], w[3]);
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double phi = 2.0 * M_PI * u2;
  return {r * std::cos(phi), r * std::sin(phi)};
}

}  // namespace

Philox4x32::Counter Philox4x32::block(Counter c, Key k) {
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kM0, c[0], hi0, lo0);
    mulhilo(kM1, c[2], hi1, lo1);
    c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
    k[0] += kW0;
    k[1] += kW1;
  }
  return c;
}

NormalStream::NormalStream(std::uint64_t seed, std::uint64_t replica, StreamTag tag)
    : key_{std::uint32_t(seed), std::uint32_t(seed >> 32)},
      replica_(std::uint32_t(replica)),
      tag_(std::uint32_t(tag)) {}

void NormalStream::fill(std::uint32_t step, std::span<double> out) const {
  const std::size_t n = out.size();
  for (std::size_t pair = 0; 2 * pair < n; ++pair) {
    const auto z = box_muller(Philox4x32::block({std::uint32_t(pair), step, replica_, tag_}, key_));
    out[2 * pair] = z[0];
    if (2 * pair + 1 < n) out[2 * pair + 1] = z[1];
  }
}

double NormalStream::at(std::uint32_t step, std::uint32_t component) const {
  const auto z = box_muller(Philox4x32::block({component / 2, step, replica_, tag_}, key_));
  return z[component % 2];
}

}  // namespace mfrisk
