#pragma once

// Philox4x32-10 counter-based generator (Salmon et al., "Parallel random
// numbers: as easy as 1, 2, 3") with keyed substreams.
//
// Substream layout: the 64-bit master seed is the Philox key. The 128-bit
// counter holds a 64-bit block index in words 0-1 and a 64-bit stream id in
// words 2-3. Stream ids are derived by SplitMix64-chaining
// (purpose, year, index), so every (purpose, year, index) triple owns 2^64
// blocks of output that no other triple touches. A consumer that always
// draws from its own triple gets the same numbers no matter how work is
// scheduled across threads.

#include <array>
#include <cstdint>

namespace gaudit::rng {

using Block = std::array<std::uint32_t, 4>;

Block philox4x32_10(Block counter, std::array<std::uint32_t, 2> key) noexcept;

std::uint64_t splitmix64(std::uint64_t x) noexcept;

enum class Purpose : std::uint64_t {
  kPerson = 1,     // synthetic panel rows
  kTree = 2,       // bootstrap + per-split component draws
  kMarketEffects = 3,
};

std::uint64_t stream_id(Purpose purpose, std::int64_t year, std::uint64_t index) noexcept;

class Stream {
 public:
  Stream(std::uint64_t master_seed, std::uint64_t stream_id) noexcept;
  Stream(std::uint64_t master_seed, Purpose purpose, std::int64_t year,
         std::uint64_t index) noexcept
      : Stream(master_seed, stream_id(purpose, year, index)) {}

  std::uint32_t next_u32() noexcept;
  std::uint64_t next_u64() noexcept;
  // Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept;
  // Unbiased uniform integer in [0, bound); bound must be > 0.
  std::uint64_t below(std::uint64_t bound) noexcept;
  // Standard normal via Box-Muller (one value per call).
  double normal() noexcept;
  bool bernoulli(double p) noexcept { return uniform() < p; }

 private:
  std::array<std::uint32_t, 2> key_;
  std::uint64_t stream_;
  std::uint64_t block_ = 0;
  Block buffer_{};
  int used_ = 4;
};

}  // namespace gaudit::rng
