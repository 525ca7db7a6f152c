#pragma once

#include <array>
#include <cstdint>

namespace mmrisk {

using Block4 = std::array<std::uint64_t, 4>;
using Key2 = std::array<std::uint64_t, 2>;

// Philox4x64-10 counter-based bijection (Salmon et al., Random123).
inline Block4 philox4x64(Block4 ctr, Key2 key) {
  constexpr std::uint64_t m0 = 0xD2E7470EE14C6C93ULL, m1 = 0xCA5A826395121157ULL;
  constexpr std::uint64_t w0 = 0x9E3779B97F4A7C15ULL, w1 = 0xBB67AE8584CAA73BULL;
  for (int r = 0; r < 10; ++r) {
    const unsigned __int128 p0 = static_cast<unsigned __int128>(m0) * ctr[0];
    const unsigned __int128 p1 = static_cast<unsigned __int128>(m1) * ctr[2];
    const std::uint64_t hi0 = static_cast<std::uint64_t>(p0 >> 64), lo0 = static_cast<std::uint64_t>(p0);
    const std::uint64_t hi1 = static_cast<std::uint64_t>(p1 >> 64), lo1 = static_cast<std::uint64_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += w0;
    key[1] += w1;
  }
  return ctr;
}

// Independent stream keyed by (seed, stream id). Replication r of a run with
// seed s always sees the same numbers, whatever thread executes it.
class RandomStream {
 public:
  RandomStream(std::uint64_t seed, std::uint64_t stream) : key_{seed, stream} {}

  std::uint64_t next_u64() {
    if (pos_ == 4) {
      buf_ = philox4x64(ctr_, key_);
      if (++ctr_[0] == 0) ++ctr_[1];
      pos_ = 0;
    }
    return buf_[pos_++];
  }

  // Uniform on the open interval (0, 1).
  double uniform() { return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53; }

  double operator()() { return uniform(); }

 private:
  Key2 key_;
  Block4 ctr_{0, 0, 0, 0};
  Block4 buf_{};
  int pos_ = 4;
};

}  // namespace mmrisk
