#pragma once

// Constant-memory error sketch.
//
// K arrays of 2^L buckets; each bucket accumulates (count, label sum,
// base-prediction sum) over every record hashed into it. Storage is fixed at
// construction and never grows with the stream.
//
// Snapshot layout (all integers and floats little-endian):
//
//   offset  size  field
//   0       4     magic "ECSK"
//   4       4     u32 format version (1)
//   8       8     u64 dim
//   16      4     u32 bits_per_hash (L)
//   20      4     u32 num_hashes (K)
//   24      8     u64 seed
//   32      ...   K * 2^L * 3 f64, ordered [array][bucket][sum_x, sum_y, sum_ybase]
//
// Per-array totals and the accepted-write counter are rebuilt from the cells
// on restore; the filtered-write counter is not persisted.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "errcomp/errors.hpp"
#include "errcomp/lsh.hpp"

namespace errcomp {

struct MemoryRecord {
  std::vector<double> hidden;
  double label = 0.0;      // 0 or 1
  double base_pred = 0.0;  // in [0, 1]
};

struct NeighborEntry {
  double similarity = 0.0;
  double label = 0.0;
  double base_pred = 0.0;
};

enum class NeighborSource { sketch, oracle };

struct Neighborhood {
  std::vector<NeighborEntry> entries;
  NeighborSource source = NeighborSource::sketch;
};

// bucket_mean divides label and prediction sums by the bucket count so the
// readouts stay in [0, 1]; total_normalized divides all three sums by the array
// total.
enum class Readout { bucket_mean, total_normalized };

// Records whose absolute error |label - base_pred| does not exceed sigma are
// skipped. Shared by both memory implementations.
inline bool passes_error_filter(double label, double base_pred, std::optional<double> sigma) {
  return !sigma || std::abs(label - base_pred) > *sigma;
}

inline void validate_record_values(double label, double base_pred) {
  if (label != 0.0 && label != 1.0)
    throw InvalidParameter("memory record: label must be 0 or 1");
  if (!(base_pred >= 0.0 && base_pred <= 1.0))
    throw InvalidParameter("memory record: base_pred must lie in [0, 1]");
}

inline void validate_sigma(std::optional<double> sigma) {
  if (sigma && !(*sigma >= 0.0 && *sigma <= 1.0))
    throw InvalidParameter("filter threshold must lie in [0, 1]");
}

class ErrorSketch {
 public:
  static constexpr char kMagic[4] = {'E', 'C', 'S', 'K'};
  static constexpr std::uint32_t kVersion = 1;
  static constexpr std::size_t kHeaderBytes = 32;

  struct Cell {
    double sum_x = 0.0;
    double sum_y = 0.0;
    double sum_ybase = 0.0;
  };

  explicit ErrorSketch(const SrpParams& params, Readout readout = Readout::bucket_mean)
      : bank_(params),
        readout_(readout),
        cells_(bank_.num_buckets() * static_cast<std::size_t>(bank_.num_hashes())),
        totals_(static_cast<std::size_t>(bank_.num_hashes()), 0.0),
        scratch_(static_cast<std::size_t>(bank_.num_hashes())) {}

  const SrpHashBank& bank() const { return bank_; }
  std::size_t dim() const { return bank_.dim(); }
  int num_arrays() const { return bank_.num_hashes(); }
  std::size_t num_buckets() const { return bank_.num_buckets(); }
  Readout readout() const { return readout_; }
  void set_readout(Readout r) { readout_ = r; }

  std::uint64_t writes_accepted() const { return writes_accepted_; }
  std::uint64_t writes_filtered() const { return writes_filtered_; }
  std::span<const double> totals() const { return totals_; }

  const Cell& cell(int array, std::uint32_t bucket) const {
    return cells_[static_cast<std::size_t>(array) * num_buckets() + bucket];
  }

  // Number of double accumulators held; 2^L * K * 3 for the sketch's lifetime.
  std::size_t accumulator_count() const { return cells_.size() * 3; }
  std::size_t accumulator_bytes() const { return cells_.size() * sizeof(Cell); }

  bool write(std::span<const double> hidden, double label, double base_pred,
             std::optional<double> sigma = std::nullopt) {
    if (hidden.size() != dim()) throw DimensionMismatch(dim(), hidden.size());
    validate_record_values(label, base_pred);
    validate_sigma(sigma);
    if (!passes_error_filter(label, base_pred, sigma)) {
      ++writes_filtered_;
      return false;
    }
    bank_.bucket_indices(hidden, scratch_);
    const std::size_t stride = num_buckets();
    for (std::size_t k = 0; k < scratch_.size(); ++k) {
      Cell& c = cells_[k * stride + scratch_[k]];
      c.sum_x += 1.0;
      c.sum_y += label;
      c.sum_ybase += base_pred;
      totals_[k] += 1.0;
    }
    ++writes_accepted_;
    return true;
  }

  bool write(const MemoryRecord& r, std::optional<double> sigma = std::nullopt) {
    return write(r.hidden, r.label, r.base_pred, sigma);
  }

  // One entry per array whose query bucket holds mass. Returns nullopt when
  // every array misses.
  std::optional<Neighborhood> try_read(std::span<const double> query) const {
    if (query.size() != dim()) throw DimensionMismatch(dim(), query.size());
    std::vector<std::uint32_t> idx(static_cast<std::size_t>(num_arrays()));
    bank_.bucket_indices(query, idx);
    Neighborhood n;
    n.source = NeighborSource::sketch;
    n.entries.reserve(idx.size());
    const std::size_t stride = num_buckets();
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const Cell& c = cells_[k * stride + idx[k]];
      if (c.sum_x <= 0.0) continue;
      const double total = totals_[k];
      const double denom = readout_ == Readout::bucket_mean ? c.sum_x : total;
      n.entries.push_back({c.sum_x / total, c.sum_y / denom, c.sum_ybase / denom});
    }
    if (n.entries.empty()) return std::nullopt;
    return n;
  }

  Neighborhood read(std::span<const double> query) const {
    auto n = try_read(query);
    if (!n) throw EmptyNeighborhood();
    return std::move(*n);
  }

  void reset() {
    std::fill(cells_.begin(), cells_.end(), Cell{});
    std::fill(totals_.begin(), totals_.end(), 0.0);
    writes_accepted_ = 0;
    writes_filtered_ = 0;
  }

  // Full-scan recount of every array; true when it equals the running totals.
  bool audit() const {
    const std::size_t stride = num_buckets();
    for (std::size_t k = 0; k < totals_.size(); ++k) {
      double sum = 0.0;
      for (std::size_t b = 0; b < stride; ++b) {
        const Cell& c = cells_[k * stride + b];
        if (c.sum_x < 0.0 || c.sum_y < 0.0 || c.sum_ybase < 0.0) return false;
        if (c.sum_y > c.sum_x || c.sum_ybase > c.sum_x + 1e-9 * c.sum_x) return false;
        sum += c.sum_x;
      }
      if (sum != totals_[k]) return false;
    }
    return true;
  }

  std::vector<std::uint8_t> snapshot() const {
    std::vector<std::uint8_t> out;
    out.reserve(kHeaderBytes + cells_.size() * 3 * 8);
    out.insert(out.end(), kMagic, kMagic + 4);
    put_u32(out, kVersion);
    put_u64(out, dim());
    put_u32(out, static_cast<std::uint32_t>(bank_.bits_per_hash()));
    put_u32(out, static_cast<std::uint32_t>(bank_.num_hashes()));
    put_u64(out, bank_.seed());
    for (const Cell& c : cells_) {
      put_f64(out, c.sum_x);
      put_f64(out, c.sum_y);
      put_f64(out, c.sum_ybase);
    }
    return out;
  }

  static SrpParams snapshot_params(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < kHeaderBytes || std::memcmp(bytes.data(), kMagic, 4) != 0)
      throw FormatError("sketch snapshot: bad magic or truncated header");
    const std::uint32_t version = get_u32(bytes, 4);
    if (version != kVersion)
      throw FormatError("sketch snapshot: unsupported version " + std::to_string(version));
    SrpParams p;
    p.dim = static_cast<std::size_t>(get_u64(bytes, 8));
    p.bits_per_hash = static_cast<int>(get_u32(bytes, 16));
    p.num_hashes = static_cast<int>(get_u32(bytes, 20));
    p.seed = get_u64(bytes, 24);
    return p;
  }

  static ErrorSketch restore(std::span<const std::uint8_t> bytes, const SrpParams& expected,
                             Readout readout = Readout::bucket_mean) {
    const SrpParams p = snapshot_params(bytes);
    if (!(p == expected))
      throw FormatError("sketch snapshot: parameter mismatch (dim/L/K/seed differ)");
    ErrorSketch s(p, readout);
    const std::size_t need = kHeaderBytes + s.cells_.size() * 3 * 8;
    if (bytes.size() != need)
      throw FormatError("sketch snapshot: expected " + std::to_string(need) + " bytes, got " +
                        std::to_string(bytes.size()));
    std::size_t off = kHeaderBytes;
    const std::size_t stride = s.num_buckets();
    for (std::size_t i = 0; i < s.cells_.size(); ++i) {
      Cell& c = s.cells_[i];
      c.sum_x = get_f64(bytes, off);
      c.sum_y = get_f64(bytes, off + 8);
      c.sum_ybase = get_f64(bytes, off + 16);
      off += 24;
      s.totals_[i / stride] += c.sum_x;
    }
    s.writes_accepted_ = s.totals_.empty() ? 0 : static_cast<std::uint64_t>(s.totals_[0]);
    return s;
  }

 private:
  static void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  static void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  static void put_f64(std::vector<std::uint8_t>& out, double v) {
    put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  static std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t off) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[off + i]) << (8 * i);
    return v;
  }
  static std::uint64_t get_u64(std::span<const std::uint8_t> b, std::size_t off) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[off + i]) << (8 * i);
    return v;
  }
  static double get_f64(std::span<const std::uint8_t> b, std::size_t off) {
    return std::bit_cast<double>(get_u64(b, off));
  }

  SrpHashBank bank_;
  Readout readout_;
  std::vector<Cell> cells_;  // [array][bucket]
  std::vector<double> totals_;
  std::vector<std::uint32_t> scratch_;  // write-path bucket indices
  std::uint64_t writes_accepted_ = 0;
  std::uint64_t writes_filtered_ = 0;
};

}  // namespace errcomp
