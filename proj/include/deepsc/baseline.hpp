#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "deepsc/channel.hpp"
#include "deepsc/speech.hpp"

namespace deepsc {

// G.711 A-law (A = 87.6, 8 bits, 256 levels). Decode returns segment midpoints.
namespace alaw {
std::uint8_t encode(float sample);   // sample clamped to [-1, 1]
float decode(std::uint8_t code);
}  // namespace alaw

// MSB-first bit (un)packing; bits are stored one per byte as 0/1.
std::vector<std::uint8_t> pack_bits_msb(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> unpack_bits_msb(std::span<const std::uint8_t> bits);

// Fixed pseudorandom bijection used between the two turbo constituents.
class Interleaver {
 public:
  Interleaver(int n, std::uint64_t seed);
  int size() const { return static_cast<int>(perm_.size()); }
  int map(int i) const { return perm_[static_cast<std::size_t>(i)]; }
  int inverse(int i) const { return inv_[static_cast<std::size_t>(i)]; }

 private:
  std::vector<int> perm_, inv_;
};

// Rate-1/3 turbo code: two RSC(13,15 octal, memory 3) constituents joined by
// the interleaver; encoder 1 trellis-terminated with 3 tail pairs; iterative
// SOVA decoding with extrinsic scaling.
class TurboCodec {
 public:
  static constexpr int kMemory = 3;
  static constexpr int kTailBits = 2 * kMemory;  // (systematic, parity1) pairs
  static constexpr std::uint64_t kInterleaverSeed = 0xC0DE;
  static constexpr float kExtrinsicScale = 0.7f;

  explicit TurboCodec(int block_length = 512, int iterations = 5);

  int block_length() const { return k_; }
  int coded_length() const { return 3 * k_ + kTailBits; }
  int iterations() const { return iterations_; }
  const Interleaver& interleaver() const { return interleaver_; }

  // [systematic K | parity1 K | parity2 K | tail pairs], K = block_length.
  std::vector<std::uint8_t> encode(std::span<const std::uint8_t> bits) const;

  // llrs: log(P(bit=0)/P(bit=1)) per coded bit, same layout as encode output.
  std::vector<std::uint8_t> decode_sova(std::span<const double> llrs) const;
  std::vector<std::uint8_t> decode_sova(std::span<const double> llrs, int iterations) const;

 private:
  int k_;
  int iterations_;
  Interleaver interleaver_;
};

// Gray-mapped square 64-QAM with unit average symbol energy (scale 1/sqrt(42)).
class Qam64 {
 public:
  static constexpr int kBitsPerSymbol = 6;
  static double scale() { return kScale; }

  struct Modulated {
    std::vector<float> iq;  // interleaved re/im
    int pad_bits = 0;       // zero bits appended to reach a 6-bit boundary
  };

  static Modulated modulate(std::span<const std::uint8_t> bits);
  static std::vector<std::uint8_t> demodulate_hard(std::span<const float> iq);
  // Equalizes by the realization's h and computes max-log LLRs with effective
  // noise sigma2 / |h|^2 per symbol. Output is log(P0/P1) per bit.
  static std::vector<double> demodulate_soft(std::span<const float> iq,
                                             const ChannelRealization& realization);

 private:
  static constexpr double kScale = 0.15430334996209191;  // 1/sqrt(42)
};

struct BaselineResult {
  SpeechClip recovered;
  std::int64_t n_symbols = 0;      // channel uses per clip
  std::int64_t flagged_symbols = 0;
};

// Full telephony chain: A-law -> turbo -> 64-QAM -> channel -> SOVA -> A-law.
BaselineResult baseline_transmit(const SpeechClip& clip, const ChannelSpec& spec,
                                 std::uint64_t stream_seed);

// Debug dump: one block of textual 0/1 per line.
void dump_bit_blocks(const std::string& path, std::span<const std::uint8_t> bits,
                     int block_len);

}  // namespace deepsc
