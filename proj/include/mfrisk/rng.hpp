#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string_view>

namespace mfrisk {

/// Philox4x32-10 counter-based generator (Salmon et al., Random123).
/// Stateless: every output block is a pure function of (counter, key).
class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Counter block(Counter ctr, Key key);
};

/// Stream tags occupying counter word 3.
enum class StreamTag : std::uint32_t {
  Agents = 0,           ///< agent noise in the homogeneous / heterogeneous systems
  Reduced = 1,          ///< one-dimensional reduced SDE
  PartialAverages = 2,  ///< K-dimensional partial-average system
  Linearized = 3,       ///< linearized fluctuation system
  Initial = 4,          ///< random initial conditions
  Oracle = 5,           ///< test-side Monte Carlo oracles
};

inline constexpr std::string_view kRngName = "philox4x32-10";
inline constexpr std::string_view kRngLayout =
    "key=(seed_lo,seed_hi); counter=(component_pair,step,replica,stream_tag); "
    "box-muller on 53-bit uniforms, component 2k gets r*cos, 2k+1 gets r*sin";

/// Standard normals addressed by (seed, replica, stream, step, component).
class NormalStream {
 public:
  NormalStream(std::uint64_t seed, std::uint64_t replica, StreamTag tag);

  /// Fills out[j] with the normal for (step, component j).
  void fill(std::uint32_t step, std::span<double> out) const;
  /// One normal for (step, component).
  double at(std::uint32_t step, std::uint32_t component) const;

 private:
  Philox4x32::Key key_;
  std::uint32_t replica_;
  std::uint32_t tag_;
};

/// Maps 53 bits to (0, 1].
inline double to_unit_open_closed(std::uint32_t hi, std::uint32_t lo) {
  const std::uint64_t bits = ((std::uint64_t(hi) << 32) | lo) >> 11;
  return (double(bits) + 1.0) * 0x1.0p-53;
}

}  // namespace mfrisk
