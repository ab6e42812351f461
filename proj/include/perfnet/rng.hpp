#pragma once

#include <array>
#include <cstdint>

namespace perfnet {

/// Philox4x32-10 block function (Salmon et al., "Parallel random numbers:
/// as easy as 1, 2, 3"). Pure: the same (counter, key) always yields the
/// same four words.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

/// Distinct purposes get disjoint stream ids so that, for example, the
/// Monte Carlo risk estimate never consumes the sampling stream of an agent.
enum class StreamPurpose : std::uint32_t {
  sampling = 0,
  risk = 1,
  probe = 2,
  partition = 3,
  synthetic = 4,
  misc = 5,
};

constexpr std::uint32_t stream_id(StreamPurpose purpose, std::uint32_t index) {
  return (static_cast<std::uint32_t>(purpose) << 24) | (index & 0x00ffffffu);
}

/// Counter-based stream keyed by (seed, stream, epoch). Draw k of the
/// stream is a pure function of (seed, stream, epoch, k), so results do not
/// depend on which thread evaluates which agent, or in what order.
class CounterStream {
 public:
  CounterStream(std::uint64_t seed, std::uint32_t stream, std::uint64_t epoch);

  std::uint32_t next_u32();
  std::uint64_t next_u64();
  /// Uniform on the open interval (0, 1).
  double uniform();
  double normal();
  /// Uniform integer in [0, bound). bound must be positive.
  std::uint64_t below(std::uint64_t bound);

  std::uint64_t draws() const noexcept { return draw_; }

 private:
  void refill();

  std::array<std::uint32_t, 2> key_;
  std::uint32_t stream_;
  std::uint64_t epoch_;
  std::uint64_t draw_ = 0;  // index of the next 4-word block
  std::array<std::uint32_t, 4> buffer_{};
  int available_ = 0;
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace perfnet
