#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "csislab/common.hpp"
#include "csislab/hash_types.hpp"
#include "csislab/parallel.hpp"
#include "csislab/rng.hpp"

namespace csislab {

enum class Provenance : std::uint8_t { Legitimate = 0, Poison = 1 };

inline std::string_view to_string(Provenance p) { return p == Provenance::Poison ? "poison" : "legitimate"; }

/// The scanned hash set C. Entries are unique; each carries a provenance tag.
class HashDatabase {
 public:
  HashDatabase() = default;
  explicit HashDatabase(HashFunctionSpec spec) : spec_(spec) {}

  const HashFunctionSpec& spec() const noexcept { return spec_; }
  std::size_t bits() const noexcept { return spec_.output_bits; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  const std::vector<PerceptualHash>& entries() const noexcept { return entries_; }
  const std::vector<Provenance>& tags() const noexcept { return tags_; }
  std::size_t duplicates() const noexcept { return duplicates_; }

  std::size_t poison_count() const noexcept {
    return static_cast<std::size_t>(std::count(tags_.begin(), tags_.end(), Provenance::Poison));
  }

  double poison_fraction() const noexcept {
    return entries_.empty() ? 0.0 : static_cast<double>(poison_count()) / static_cast<double>(entries_.size());
  }

  bool contains(const PerceptualHash& h) const { return index_.contains(h); }

  /// Inserts unless the bit pattern is already present (first tag wins).
  /// Returns whether the entry was new.
  bool insert(const PerceptualHash& h, Provenance tag) {
    require(h.size() == spec_.output_bits, ErrorCode::LengthMismatch,
            "entry has " + std::to_string(h.size()) + " bits, database expects " + std::to_string(spec_.output_bits));
    if (index_.contains(h)) {
      ++duplicates_;
      return false;
    }
    index_.emplace(h, entries_.size());
    entries_.push_back(h);
    tags_.push_back(tag);
    return true;
  }

 private:
  HashFunctionSpec spec_;
  std::vector<PerceptualHash> entries_;
  std::vector<Provenance> tags_;
  std::unordered_map<PerceptualHash, std::size_t, PerceptualHashHasher> index_;
  std::size_t duplicates_ = 0;
};

inline HashDatabase db_build(std::span<const PerceptualHash> hashes, std::span<const Provenance> tags,
                             const HashFunctionSpec& spec) {
  require(!hashes.empty(), ErrorCode::EmptyInput, "database needs at least one hash");
  require(tags.size() == hashes.size() || tags.size() == 1, ErrorCode::InvalidArgument,
          "tags must be one per hash or a single shared tag");
  HashDatabase db(spec);
  for (std::size_t i = 0; i < hashes.size(); ++i) db.insert(hashes[i], tags.size() == 1 ? tags[0] : tags[i]);
  return db;
}

inline HashDatabase db_build(std::span<const PerceptualHash> hashes, Provenance tag, const HashFunctionSpec& spec) {
  const std::array<Provenance, 1> one{tag};
  return db_build(hashes, one, spec);
}

/// Entries of `b` are appended after those of `a`; shared patterns keep a's tag.
inline HashDatabase db_merge(const HashDatabase& a, const HashDatabase& b) {
  require(a.bits() == b.bits(), ErrorCode::LengthMismatch, "merging databases of different hash lengths");
  HashDatabase out(a.spec());
  for (std::size_t i = 0; i < a.size(); ++i) out.insert(a.entries()[i], a.tags()[i]);
  for (std::size_t i = 0; i < b.size(); ++i) out.insert(b.entries()[i], b.tags()[i]);
  return out;
}

// --------------------------------------------------------------------------
// Matching

struct MatchConfig {
  DistanceMetric metric;
  double threshold = 0.0;

  void validate(std::size_t bits) const {
    require(std::isfinite(threshold) && threshold >= 0.0, ErrorCode::InvalidArgument, "threshold must be >= 0");
    if (metric.kind == DistanceKind::NormalizedL1) {
      require(threshold <= 1.0, ErrorCode::InvalidArgument, "normalized threshold must lie in [0, 1]");
    } else {
      require(threshold == std::floor(threshold) && threshold <= static_cast<double>(bits),
              ErrorCode::InvalidArgument, "hamming threshold must be an integer in [0, n]");
    }
  }
};

/// Converts a hamming count into the configured metric's units.
inline double metric_value(int hamming_distance, std::size_t bits, DistanceMetric metric) {
  if (metric.kind == DistanceKind::Hamming) return static_cast<double>(hamming_distance);
  return static_cast<double>(hamming_distance) / static_cast<double>(bits);
}

/// The flagging rule D <= t, evaluated on an exact hamming count.
inline bool within(int hamming_distance, std::size_t bits, const MatchConfig& cfg) {
  return metric_value(hamming_distance, bits, cfg.metric) <= cfg.threshold;
}

struct MatchResult {
  bool flagged = false;
  double best_distance = std::numeric_limits<double>::infinity();
  int best_hamming = -1;
  std::optional<std::size_t> best_index;
  std::optional<Provenance> best_provenance;
  bool empty_database = false;
};

/// Index and hamming distance of the closest entry (first one on ties).
inline std::pair<std::size_t, int> nearest_entry(const PerceptualHash& h, const HashDatabase& db) {
  require(!db.empty(), ErrorCode::EmptyDatabase, "database is empty");
  require(h.size() == db.bits(), ErrorCode::LengthMismatch,
          "query has " + std::to_string(h.size()) + " bits, database holds " + std::to_string(db.bits()));
  const auto q = h.words();
  const std::size_t nw = q.size();
  int best = std::numeric_limits<int>::max();
  std::size_t best_i = 0;
  const auto& entries = db.entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto e = entries[i].words();
    int d = 0;
    for (std::size_t w = 0; w < nw; ++w) d += std::popcount(q[w] ^ e[w]);
    if (d < best) {
      best = d;
      best_i = i;
      if (d == 0) break;
    }
  }
  return {best_i, best};
}

inline MatchResult flag(const PerceptualHash& h, const HashDatabase& db, const MatchConfig& cfg) {
  MatchResult r;
  if (db.empty()) {
    require(h.size() == db.bits(), ErrorCode::LengthMismatch, "query length differs from database");
    r.empty_database = true;
    return r;
  }
  const auto [idx, d] = nearest_entry(h, db);
  r.best_hamming = d;
  r.best_distance = metric_value(d, db.bits(), cfg.metric);
  r.best_index = idx;
  r.best_provenance = db.tags()[idx];
  r.flagged = within(d, db.bits(), cfg);
  return r;
}

/// Per-query minimum hamming distance to the database.
inline std::vector<int> min_distances(std::span<const PerceptualHash> queries, const HashDatabase& db,
                                      unsigned workers = 1) {
  std::vector<int> out(queries.size());
  parallel_for(queries.size(), workers, [&](std::size_t i) { out[i] = nearest_entry(queries[i], db).second; });
  return out;
}

/// Fraction of a min-distance profile within the threshold.
inline double flagged_fraction(std::span<const int> min_hamming, std::size_t bits, const MatchConfig& cfg) {
  require(!min_hamming.empty(), ErrorCode::EmptyInput, "rate over an empty set");
  std::size_t n = 0;
  for (int d : min_hamming) n += within(d, bits, cfg) ? 1 : 0;
  return static_cast<double>(n) / static_cast<double>(min_hamming.size());
}

inline double fpr(std::span<const PerceptualHash> benign, const HashDatabase& db, const MatchConfig& cfg,
                  unsigned workers = 1) {
  require(!benign.empty(), ErrorCode::EmptyInput, "empty benign set");
  cfg.validate(db.bits());
  const auto mins = min_distances(benign, db, workers);
  return flagged_fraction(mins, db.bits(), cfg);
}

/// Achievable thresholds in ascending order: k or k/n for k = 0..n.
inline std::vector<double> threshold_grid(std::size_t bits, DistanceMetric metric) {
  std::vector<double> grid(bits + 1);
  for (std::size_t k = 0; k <= bits; ++k) grid[k] = metric_value(static_cast<int>(k), bits, metric);
  return grid;
}

struct CurvePoint {
  double threshold = 0.0;
  double rate = 0.0;
};

struct Calibration {
  double threshold = 0.0;
  int hamming_threshold = 0;
  double achieved_fpr = 0.0;
  std::vector<CurvePoint> curve;  // FPR at every grid threshold
};

/// Rate at every grid threshold for a fixed min-distance profile.
inline std::vector<CurvePoint> rate_curve(std::span<const int> min_hamming, std::size_t bits, DistanceMetric metric) {
  require(!min_hamming.empty(), ErrorCode::EmptyInput, "rate over an empty set");
  std::vector<std::size_t> hist(bits + 1, 0);
  for (int d : min_hamming) ++hist[static_cast<std::size_t>(d)];
  std::vector<CurvePoint> curve(bits + 1);
  std::size_t cum = 0;
  for (std::size_t k = 0; k <= bits; ++k) {
    cum += hist[k];
    curve[k] = {metric_value(static_cast<int>(k), bits, metric),
                static_cast<double>(cum) / static_cast<double>(min_hamming.size())};
  }
  return curve;
}

/// Largest grid threshold whose benign flag rate stays at or under the target.
inline Calibration calibrate_threshold(std::span<const int> benign_min_hamming, std::size_t bits, double target_fpr,
                                       DistanceMetric metric = {}) {
  require(target_fpr >= 0.0 && target_fpr <= 1.0, ErrorCode::InvalidArgument, "target_fpr must lie in [0, 1]");
  Calibration c;
  c.curve = rate_curve(benign_min_hamming, bits, metric);
  require(c.curve[0].rate <= target_fpr, ErrorCode::UnreachableTarget,
          "even t = 0 flags " + std::to_string(c.curve[0].rate) + " of the benign set");
  for (std::size_t k = 0; k <= bits; ++k) {
    if (c.curve[k].rate <= target_fpr) {
      c.threshold = c.curve[k].threshold;
      c.hamming_threshold = static_cast<int>(k);
      c.achieved_fpr = c.curve[k].rate;
    }
  }
  return c;
}

inline Calibration calibrate_threshold(std::span<const PerceptualHash> benign, const HashDatabase& db,
                                       double target_fpr, DistanceMetric metric = {}, unsigned workers = 1) {
  require(!benign.empty(), ErrorCode::EmptyInput, "empty benign set");
  const auto mins = min_distances(benign, db, workers);
  return calibrate_threshold(mins, db.bits(), target_fpr, metric);
}

// --------------------------------------------------------------------------
// Pairwise distance curve over a benign set

enum class PairMode { AllPairs, RandomPairs };

inline std::string_view to_string(PairMode m) { return m == PairMode::AllPairs ? "all-pairs" : "random-pairs"; }

struct PairwiseCurve {
  PairMode mode = PairMode::AllPairs;
  std::size_t pairs = 0;
  std::vector<CurvePoint> curve;  // fraction of pairs within each threshold
};

/// All-pairs uses every i<j; random-pairs draws `max_pairs` pairs of distinct
/// indices with replacement.
inline PairwiseCurve pairwise_curve(std::span<const PerceptualHash> hashes, PairMode mode, std::size_t max_pairs,
                                    std::uint64_t seed, DistanceMetric metric = {}) {
  require(hashes.size() >= 2, ErrorCode::EmptyInput, "pairwise curve needs at least two hashes");
  const std::size_t bits = hashes[0].size();
  std::vector<std::size_t> hist(bits + 1, 0);
  PairwiseCurve out;
  out.mode = mode;
  if (mode == PairMode::AllPairs) {
    for (std::size_t i = 0; i < hashes.size(); ++i)
      for (std::size_t j = i + 1; j < hashes.size(); ++j) ++hist[static_cast<std::size_t>(hamming(hashes[i], hashes[j]))];
    out.pairs = hashes.size() * (hashes.size() - 1) / 2;
  } else {
    require(max_pairs > 0, ErrorCode::InvalidArgument, "random-pairs needs a positive pair count");
    Rng rng = make_rng(seed, "pairwise");
    for (std::size_t p = 0; p < max_pairs; ++p) {
      const auto i = uniform_index(rng, hashes.size());
      auto j = uniform_index(rng, hashes.size() - 1);
      if (j >= i) ++j;
      ++hist[static_cast<std::size_t>(hamming(hashes[i], hashes[j]))];
    }
    out.pairs = max_pairs;
  }
  std::size_t cum = 0;
  out.curve.resize(bits + 1);
  for (std::size_t k = 0; k <= bits; ++k) {
    cum += hist[k];
    out.curve[k] = {metric_value(static_cast<int>(k), bits, metric),
                    static_cast<double>(cum) / static_cast<double>(out.pairs)};
  }
  return out;
}

// --------------------------------------------------------------------------
// Database file: "CSDB", u16 version, u16 bit length, u64 count, then per
// entry ceil(n/8) bytes (most significant bit first) and one tag byte. All
// integers are big-endian.

inline constexpr std::uint16_t kDbFormatVersion = 1;

namespace detail {

template <typename T>
void put_be(std::ostream& out, T v) {
  for (int i = static_cast<int>(sizeof(T)) - 1; i >= 0; --i) out.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

template <typename T>
T get_be(std::istream& in) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    const int c = in.get();
    require(c != std::char_traits<char>::eof(), ErrorCode::FormatError, "truncated database file");
    v = static_cast<T>((v << 8) | static_cast<T>(c));
  }
  return v;
}

}  // namespace detail

inline std::vector<std::uint8_t> hash_to_bytes(const PerceptualHash& h) {
  const std::size_t n = h.size();
  std::vector<std::uint8_t> out((n + 7) / 8, 0);
  // Byte 0 holds the leading bits; a partial final byte is left-aligned.
  for (std::size_t pos = 0; pos < n; ++pos)
    if (h.bit(n - 1 - pos)) out[pos / 8] |= static_cast<std::uint8_t>(0x80u >> (pos % 8));
  return out;
}

inline PerceptualHash hash_from_bytes(std::span<const std::uint8_t> bytes, std::size_t bits) {
  require(bytes.size() == (bits + 7) / 8, ErrorCode::FormatError, "bit block size mismatch");
  PerceptualHash h(bits);
  for (std::size_t pos = 0; pos < bits; ++pos)
    if (bytes[pos / 8] & (0x80u >> (pos % 8))) h.set(bits - 1 - pos);
  return h;
}

inline void save_db(const std::filesystem::path& path, const HashDatabase& db) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::IoError, "cannot write " + path.string());
  out.write("CSDB", 4);
  detail::put_be<std::uint16_t>(out, kDbFormatVersion);
  detail::put_be<std::uint16_t>(out, static_cast<std::uint16_t>(db.bits()));
  detail::put_be<std::uint64_t>(out, db.size());
  for (std::size_t i = 0; i < db.size(); ++i) {
    const auto bytes = hash_to_bytes(db.entries()[i]);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out.put(static_cast<char>(db.tags()[i]));
  }
  require(out.good(), ErrorCode::IoError, "write failed for " + path.string());
}

/// The file does not record the hash kind: 256-bit files load as PDQ unless a
/// spec is supplied.
inline HashDatabase load_db(const std::filesystem::path& path, std::optional<HashFunctionSpec> spec = std::nullopt) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::IoError, "cannot read " + path.string());
  char magic[4] = {};
  in.read(magic, 4);
  require(in.gcount() == 4 && std::string_view(magic, 4) == "CSDB", ErrorCode::FormatError, "bad magic");
  const auto version = detail::get_be<std::uint16_t>(in);
  require(version == kDbFormatVersion, ErrorCode::FormatError, "unsupported version " + std::to_string(version));
  const auto bits = detail::get_be<std::uint16_t>(in);
  const auto count = detail::get_be<std::uint64_t>(in);
  if (!spec) spec = bits == 256 ? HashFunctionSpec::pdq() : HashFunctionSpec::surrogate(bits, 0);
  require(spec->output_bits == bits, ErrorCode::LengthMismatch, "spec does not match file bit length");
  HashDatabase db(*spec);
  std::vector<std::uint8_t> block((bits + 7) / 8);
  for (std::uint64_t i = 0; i < count; ++i) {
    in.read(reinterpret_cast<char*>(block.data()), static_cast<std::streamsize>(block.size()));
    require(in.gcount() == static_cast<std::streamsize>(block.size()), ErrorCode::FormatError, "truncated entry");
    const int tag = in.get();
    require(tag == 0 || tag == 1, ErrorCode::FormatError, "bad provenance tag");
    db.insert(hash_from_bytes(block, bits), static_cast<Provenance>(tag));
  }
  return db;
}

}  // namespace csislab
