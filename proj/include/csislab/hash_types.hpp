#pragma once

#include <bit>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "csislab/common.hpp"

namespace csislab {

/// Fixed-length bit string produced by a perceptual hash function.
///
/// Bit k lives in word k / 64 at position k % 64. The hex form is written
/// most-significant bit first, i.e. bit n-1 leads; for 256-bit hashes this is
/// the layout used by the reference PDQ tools.
class PerceptualHash {
 public:
  PerceptualHash() = default;

  explicit PerceptualHash(std::size_t bits) : bits_(bits), words_((bits + 63) / 64, 0) {}

  std::size_t size() const noexcept { return bits_; }
  bool empty() const noexcept { return bits_ == 0; }

  bool bit(std::size_t k) const { return (words_[k >> 6] >> (k & 63)) & 1ULL; }

  void set(std::size_t k, bool value = true) {
    const std::uint64_t mask = 1ULL << (k & 63);
    if (value) {
      words_[k >> 6] |= mask;
    } else {
      words_[k >> 6] &= ~mask;
    }
  }

  void flip(std::size_t k) { words_[k >> 6] ^= 1ULL << (k & 63); }

  std::span<const std::uint64_t> words() const noexcept { return words_; }

  std::size_t popcount() const noexcept {
    std::size_t n = 0;
    for (auto w : words_) n += static_cast<std::size_t>(std::popcount(w));
    return n;
  }

  PerceptualHash complement() const {
    PerceptualHash out = *this;
    for (auto& w : out.words_) w = ~w;
    out.mask_tail();
    return out;
  }

  /// PDQ-style quality score in [0, 100]; 0 marks a degenerate input.
  int quality() const noexcept { return quality_; }
  void set_quality(int q) noexcept { quality_ = q; }
  bool degenerate() const noexcept { return quality_ == 0; }

  std::string to_hex() const {
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string out;
    out.reserve(bits_ / 4);
    for (std::size_t nib = bits_ / 4; nib-- > 0;) {
      unsigned v = 0;
      for (int b = 3; b >= 0; --b) v = (v << 1) | (bit(nib * 4 + static_cast<std::size_t>(b)) ? 1u : 0u);
      out.push_back(kDigits[v]);
    }
    return out;
  }

  /// Parses lowercase or uppercase hex; the bit length is 4 * digits.
  static PerceptualHash from_hex(std::string_view hex) {
    require(!hex.empty(), ErrorCode::FormatError, "empty hash string");
    PerceptualHash h(hex.size() * 4);
    for (std::size_t i = 0; i < hex.size(); ++i) {
      const char c = hex[i];
      unsigned v;
      if (c >= '0' && c <= '9') {
        v = static_cast<unsigned>(c - '0');
      } else if (c >= 'a' && c <= 'f') {
        v = static_cast<unsigned>(c - 'a' + 10);
      } else if (c >= 'A' && c <= 'F') {
        v = static_cast<unsigned>(c - 'A' + 10);
      } else {
        throw Error(ErrorCode::FormatError, "invalid hex digit in '" + std::string(hex) + "'");
      }
      const std::size_t nib = hex.size() - 1 - i;
      for (int b = 0; b < 4; ++b) h.set(nib * 4 + static_cast<std::size_t>(b), (v >> b) & 1u);
    }
    return h;
  }

  friend bool operator==(const PerceptualHash& a, const PerceptualHash& b) noexcept {
    return a.bits_ == b.bits_ && a.words_ == b.words_;
  }

  friend std::strong_ordering operator<=>(const PerceptualHash& a, const PerceptualHash& b) noexcept {
    if (auto c = a.bits_ <=> b.bits_; c != 0) return c;
    return a.words_ <=> b.words_;
  }

 private:
  void mask_tail() {
    if (bits_ % 64 != 0 && !words_.empty()) words_.back() &= (1ULL << (bits_ % 64)) - 1;
  }

  std::size_t bits_ = 0;
  std::vector<std::uint64_t> words_;
  int quality_ = 100;
};

struct PerceptualHashHasher {
  std::size_t operator()(const PerceptualHash& h) const noexcept {
    std::uint64_t acc = 0x9e3779b97f4a7c15ULL ^ h.size();
    for (auto w : h.words()) acc = (acc ^ w) * 0x100000001b3ULL + (acc >> 29);
    return static_cast<std::size_t>(acc);
  }
};

enum class DistanceKind { Hamming, NormalizedL1 };

struct DistanceMetric {
  DistanceKind kind = DistanceKind::NormalizedL1;

  friend bool operator==(const DistanceMetric&, const DistanceMetric&) = default;
};

inline std::string_view to_string(DistanceKind k) {
  return k == DistanceKind::Hamming ? "hamming" : "normalized-l1";
}

inline DistanceKind parse_distance_kind(std::string_view s) {
  if (s == "hamming") return DistanceKind::Hamming;
  if (s == "normalized-l1" || s == "l1") return DistanceKind::NormalizedL1;
  throw Error(ErrorCode::InvalidArgument, "unknown distance metric '" + std::string(s) + "'");
}

/// Number of differing bits. Throws LengthMismatch on unequal lengths.
inline int hamming(const PerceptualHash& a, const PerceptualHash& b) {
  require(a.size() == b.size(), ErrorCode::LengthMismatch,
          "hash lengths " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
  const auto wa = a.words();
  const auto wb = b.words();
  int d = 0;
  for (std::size_t i = 0; i < wa.size(); ++i) d += std::popcount(wa[i] ^ wb[i]);
  return d;
}

inline double distance(const PerceptualHash& a, const PerceptualHash& b, DistanceMetric metric = {}) {
  const int d = hamming(a, b);
  if (metric.kind == DistanceKind::Hamming) return static_cast<double>(d);
  return static_cast<double>(d) / static_cast<double>(a.size());
}

enum class HashKind { Pdq, SurrogateProjection };

inline std::string_view to_string(HashKind k) { return k == HashKind::Pdq ? "pdq" : "surrogate-projection"; }

inline HashKind parse_hash_kind(std::string_view s) {
  if (s == "pdq") return HashKind::Pdq;
  if (s == "surrogate-projection" || s == "surrogate") return HashKind::SurrogateProjection;
  throw Error(ErrorCode::InvalidArgument, "unknown hash kind '" + std::string(s) + "'");
}

struct HashFunctionSpec {
  HashKind kind = HashKind::Pdq;
  std::size_t output_bits = 256;
  std::uint64_t seed = 0;

  static HashFunctionSpec pdq() { return {HashKind::Pdq, 256, 0}; }

  static HashFunctionSpec surrogate(std::size_t bits, std::uint64_t seed) {
    return {HashKind::SurrogateProjection, bits, seed};
  }

  void validate() const {
    if (kind == HashKind::Pdq) {
      require(output_bits == 256, ErrorCode::InvalidArgument, "pdq hashes are 256 bits");
    } else {
      require(output_bits >= 64 && output_bits <= 512 && output_bits % 4 == 0, ErrorCode::InvalidArgument,
              "surrogate output_bits must be a multiple of 4 in [64, 512]");
    }
  }

  friend bool operator==(const HashFunctionSpec&, const HashFunctionSpec&) = default;
};

}  // namespace csislab
