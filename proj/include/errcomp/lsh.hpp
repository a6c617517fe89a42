#pragma once

// Signed random projections (SimHash).
//
// A bank holds K independent sets of L Gaussian hyperplanes. Each set maps a
// vector to an L-bit bucket index; the first hyperplane of a set supplies the
// most significant bit. Hyperplanes are regenerated from the seed and never
// persisted: set k draws from the substream substream_seed(seed, k) using the
// polar normal sampler in random.hpp.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "errcomp/errors.hpp"
#include "errcomp/random.hpp"

namespace errcomp {

inline constexpr int kMaxBitsPerHash = 30;

struct SrpParams {
  std::size_t dim = 0;
  int bits_per_hash = 0;  // L
  int num_hashes = 0;     // K
  std::uint64_t seed = 0;

  friend bool operator==(const SrpParams&, const SrpParams&) = default;
};

// Set when a query vector projects to zero on every hyperplane it touched,
// which happens for the zero vector. Such inputs hash to bucket 0 everywhere.
struct HashStatus {
  bool zero_input = false;
};

inline int hash_bit(std::span<const double> plane, std::span<const double> x) {
  if (plane.size() != x.size()) throw DimensionMismatch(plane.size(), x.size());
  double dot = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) dot += plane[i] * x[i];
  return dot > 0.0 ? 1 : 0;  // sign(0) -> 0
}

// (1 - arccos(cosine)/pi)^bits, the probability that two vectors with the
// given cosine share an L-bit SRP bucket.
inline double collision_probability(double cosine, int bits) {
  if (bits < 1) throw InvalidParameter("collision_probability: bits must be >= 1");
  if (cosine > 1.0) cosine = 1.0;
  if (cosine < -1.0) cosine = -1.0;
  const double p = 1.0 - std::acos(cosine) / std::numbers::pi;
  return std::pow(p, bits);
}

class SrpHashBank {
 public:
  explicit SrpHashBank(const SrpParams& params) : params_(params) {
    if (params.dim < 1) throw InvalidParameter("SrpHashBank: dim must be >= 1");
    if (params.bits_per_hash < 1 || params.bits_per_hash > kMaxBitsPerHash)
      throw InvalidParameter("SrpHashBank: bits_per_hash must be in [1, 30], got " +
                             std::to_string(params.bits_per_hash));
    if (params.num_hashes < 1) throw InvalidParameter("SrpHashBank: num_hashes must be >= 1");

    const std::size_t per_set = static_cast<std::size_t>(params.bits_per_hash) * params.dim;
    planes_.resize(per_set * static_cast<std::size_t>(params.num_hashes));
    for (int k = 0; k < params.num_hashes; ++k) {
      Rng rng(substream_seed(params.seed, static_cast<std::uint64_t>(k)));
      double* out = planes_.data() + per_set * static_cast<std::size_t>(k);
      for (std::size_t i = 0; i < per_set; ++i) out[i] = rng.normal();
    }
  }

  SrpHashBank(std::size_t dim, int bits_per_hash, int num_hashes, std::uint64_t seed)
      : SrpHashBank(SrpParams{dim, bits_per_hash, num_hashes, seed}) {}

  const SrpParams& params() const { return params_; }
  std::size_t dim() const { return params_.dim; }
  int bits_per_hash() const { return params_.bits_per_hash; }
  int num_hashes() const { return params_.num_hashes; }
  std::uint64_t seed() const { return params_.seed; }
  std::size_t num_hyperplanes() const {
    return static_cast<std::size_t>(params_.bits_per_hash) * params_.num_hashes;
  }
  std::size_t num_buckets() const { return std::size_t{1} << params_.bits_per_hash; }

  std::span<const double> hyperplane(int set, int bit) const {
    const std::size_t offset =
        (static_cast<std::size_t>(set) * params_.bits_per_hash + static_cast<std::size_t>(bit)) *
        params_.dim;
    return {planes_.data() + offset, params_.dim};
  }

  std::uint32_t bucket_index(int set, std::span<const double> x, bool* all_zero = nullptr) const {
    if (x.size() != params_.dim) throw DimensionMismatch(params_.dim, x.size());
    std::uint32_t index = 0;
    bool zero = true;
    for (int j = 0; j < params_.bits_per_hash; ++j) {
      const auto plane = hyperplane(set, j);
      double dot = 0.0;
      for (std::size_t i = 0; i < params_.dim; ++i) dot += plane[i] * x[i];
      if (dot != 0.0) zero = false;
      index = (index << 1) | (dot > 0.0 ? 1u : 0u);
    }
    if (all_zero) *all_zero = zero;
    return index;
  }

  // Writes K indices into out (size K).
  void bucket_indices(std::span<const double> x, std::span<std::uint32_t> out,
                      HashStatus* status = nullptr) const {
    if (x.size() != params_.dim) throw DimensionMismatch(params_.dim, x.size());
    if (out.size() != static_cast<std::size_t>(params_.num_hashes))
      throw DimensionMismatch(static_cast<std::size_t>(params_.num_hashes), out.size());
    bool zero_everywhere = true;
    for (int k = 0; k < params_.num_hashes; ++k) {
      bool zero = false;
      out[static_cast<std::size_t>(k)] = bucket_index(k, x, &zero);
      zero_everywhere = zero_everywhere && zero;
    }
    if (status) status->zero_input = zero_everywhere;
  }

  std::vector<std::uint32_t> bucket_indices(std::span<const double> x,
                                            HashStatus* status = nullptr) const {
    std::vector<std::uint32_t> out(static_cast<std::size_t>(params_.num_hashes));
    bucket_indices(x, out, status);
    return out;
  }

 private:
  SrpParams params_;
  std::vector<double> planes_;  // [set][bit][dim]
};

}  // namespace errcomp
