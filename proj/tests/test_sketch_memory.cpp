#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <set>
#include <vector>

#include "errcomp/sketch_memory.hpp"
#include "oracles.hpp"

using namespace errcomp;

namespace {

std::vector<double> random_vec(Rng& rng, std::size_t d) {
  std::vector<double> v(d);
  for (double& x : v) x = rng.normal();
  return v;
}

std::size_t nonzero_buckets(const ErrorSketch& s, int array) {
  std::size_t n = 0;
  for (std::uint32_t b = 0; b < s.num_buckets(); ++b) n += s.cell(array, b).sum_x > 0 ? 1 : 0;
  return n;
}

}  // namespace

TEST(ErrorSketch, SingleWriteBookkeeping) {
  ErrorSketch s(SrpParams{4, 4, 2, 1});
  const std::vector<double> h{0.5, -1.0, 2.0, 0.1};
  EXPECT_TRUE(s.write(h, 1.0, 0.3));
  const auto idx = s.bank().bucket_indices(h);
  for (int k = 0; k < 2; ++k) {
    EXPECT_EQ(nonzero_buckets(s, k), 1u);
    const auto& c = s.cell(k, idx[k]);
    EXPECT_EQ(c.sum_x, 1.0);
    EXPECT_EQ(c.sum_y, 1.0);
    EXPECT_EQ(c.sum_ybase, 0.3);
  }
  EXPECT_EQ(s.totals()[0], 1.0);
  EXPECT_EQ(s.totals()[1], 1.0);
  EXPECT_EQ(s.writes_accepted(), 1u);
}

TEST(ErrorSketch, FilterSkipsSmallErrors) {
  ErrorSketch s(SrpParams{4, 4, 2, 1});
  const std::vector<double> h{1, 2, 3, 4};
  EXPECT_FALSE(s.write(h, 1.0, 0.9, 0.2));
  EXPECT_EQ(s.writes_filtered(), 1u);
  EXPECT_EQ(s.writes_accepted(), 0u);
  EXPECT_EQ(s.totals()[0], 0.0);
  EXPECT_FALSE(s.try_read(h).has_value());
  // |0 - 0.9| = 0.9 > 0.2 passes.
  EXPECT_TRUE(s.write(h, 0.0, 0.9, 0.2));
}

TEST(ErrorSketch, RejectsInvalidRecords) {
  ErrorSketch s(SrpParams{3, 4, 2, 1});
  EXPECT_THROW(s.write(std::vector<double>{1, 2}, 1.0, 0.5), DimensionMismatch);
  EXPECT_THROW(s.write(std::vector<double>{1, 2, 3}, 1.0, 1.5), InvalidParameter);
  EXPECT_THROW(s.write(std::vector<double>{1, 2, 3}, 0.5, 0.5), InvalidParameter);
  EXPECT_THROW(s.write(std::vector<double>{1, 2, 3}, 1.0, 0.5, 1.5), InvalidParameter);
  EXPECT_THROW((void)s.read(std::vector<double>{1}), DimensionMismatch);
}

TEST(ErrorSketch, ThousandWritesAudit) {
  ErrorSketch s(SrpParams{8, 6, 5, 3});
  const auto before = s.accumulator_count();
  Rng rng(5);
  for (int i = 0; i < 1000; ++i) s.write(random_vec(rng, 8), rng.bernoulli(0.4) ? 1.0 : 0.0, rng.uniform01());
  for (int k = 0; k < 5; ++k) {
    EXPECT_EQ(s.totals()[k], 1000.0);
    double recount = 0;
    for (std::uint32_t b = 0; b < s.num_buckets(); ++b) recount += s.cell(k, b).sum_x;
    EXPECT_EQ(recount, 1000.0);
  }
  EXPECT_TRUE(s.audit());
  EXPECT_EQ(s.accumulator_count(), before);
  EXPECT_EQ(s.accumulator_count(), std::size_t{64} * 5 * 3);
}

TEST(ErrorSketch, ReadAfterSingleWrite) {
  ErrorSketch s(SrpParams{4, 8, 6, 2});
  const std::vector<double> h{0.2, 0.4, -0.6, 1.0};
  s.write(h, 1.0, 0.3);
  const auto n = s.read(h);
  ASSERT_EQ(n.entries.size(), 6u);
  for (const auto& e : n.entries) {
    EXPECT_EQ(e.similarity, 1.0);
    EXPECT_EQ(e.label, 1.0);
    EXPECT_EQ(e.base_pred, 0.3);
  }
}

TEST(ErrorSketch, BucketMeanOfRepeatedVector) {
  ErrorSketch s(SrpParams{4, 8, 6, 2});
  const std::vector<double> u{1.0, -2.0, 0.5, 0.25};
  for (int i = 0; i < 10; ++i) s.write(u, i < 5 ? 1.0 : 0.0, 0.4);
  for (const auto& e : s.read(u).entries) {
    EXPECT_DOUBLE_EQ(e.label, 0.5);
    EXPECT_DOUBLE_EQ(e.base_pred, 0.4);
  }
}

TEST(ErrorSketch, TotalNormalizedReadoutDividesByTotal) {
  ErrorSketch s(SrpParams{2, 8, 4, 3}, Readout::total_normalized);
  const std::vector<double> u{1.0, 0.0}, v{-1.0, 0.0};
  for (int i = 0; i < 3; ++i) s.write(u, 1.0, 0.5);
  s.write(v, 0.0, 0.5);  // opposite vectors never share a bucket
  for (const auto& e : s.read(u).entries) {
    EXPECT_DOUBLE_EQ(e.similarity, 0.75);
    EXPECT_DOUBLE_EQ(e.label, 0.75);      // 3 / 4
    EXPECT_DOUBLE_EQ(e.base_pred, 0.375); // 1.5 / 4
  }
}

TEST(ErrorSketch, FreshSketchHasEmptyNeighborhood) {
  ErrorSketch s(SrpParams{3, 4, 3, 1});
  EXPECT_THROW((void)s.read(std::vector<double>{1, 2, 3}), EmptyNeighborhood);
}

TEST(ErrorSketch, SkipsEmptyArraysOnly) {
  // With L large relative to the data, some arrays miss a far query while
  // others still hit; entries never exceed K and are never zero-mass.
  ErrorSketch s(SrpParams{6, 3, 16, 8});
  Rng rng(3);
  for (int i = 0; i < 5; ++i) s.write(random_vec(rng, 6), 1.0, 0.2);
  for (int q = 0; q < 50; ++q) {
    auto n = s.try_read(random_vec(rng, 6));
    if (!n) continue;
    EXPECT_LE(n->entries.size(), 16u);
    for (const auto& e : n->entries) EXPECT_GT(e.similarity, 0.0);
  }
}

TEST(ErrorSketch, ResetClearsCountsKeepsBank) {
  ErrorSketch s(SrpParams{5, 6, 4, 17});
  Rng rng(8);
  const auto probe = random_vec(rng, 5);
  const auto idx_before = s.bank().bucket_indices(probe);
  for (int i = 0; i < 100; ++i) s.write(random_vec(rng, 5), 1.0, 0.5);
  s.reset();
  EXPECT_THROW((void)s.read(probe), EmptyNeighborhood);
  EXPECT_EQ(s.writes_accepted(), 0u);
  EXPECT_EQ(s.bank().bucket_indices(probe), idx_before);
  s.reset();  // idempotent
  EXPECT_TRUE(s.audit());
}

TEST(ErrorSketch, FilteredWritesLeaveReadsUnchanged) {
  ErrorSketch a(SrpParams{6, 5, 8, 4}), b(SrpParams{6, 5, 8, 4});
  Rng rng(21);
  const double sigma = 0.3;
  for (int i = 0; i < 400; ++i) {
    const auto h = random_vec(rng, 6);
    const double y = rng.bernoulli(0.5) ? 1.0 : 0.0;
    const double p = rng.uniform01();
    a.write(h, y, p, sigma);
    if (std::abs(y - p) > sigma) b.write(h, y, p);
  }
  for (int q = 0; q < 100; ++q) {
    const auto h = random_vec(rng, 6);
    auto na = a.try_read(h), nb = b.try_read(h);
    ASSERT_EQ(na.has_value(), nb.has_value());
    if (!na) continue;
    ASSERT_EQ(na->entries.size(), nb->entries.size());
    for (std::size_t i = 0; i < na->entries.size(); ++i) {
      EXPECT_EQ(na->entries[i].similarity, nb->entries[i].similarity);
      EXPECT_EQ(na->entries[i].label, nb->entries[i].label);
    }
  }
}

TEST(ErrorSketch, SnapshotRoundTrip) {
  const SrpParams p{8, 7, 6, 99};
  ErrorSketch s(p);
  Rng rng(4);
  for (int i = 0; i < 1000; ++i) s.write(random_vec(rng, 8), rng.bernoulli(0.3) ? 1.0 : 0.0, rng.uniform01());
  const auto bytes = s.snapshot();
  EXPECT_EQ(bytes.size(), ErrorSketch::kHeaderBytes + std::size_t{128} * 6 * 3 * 8);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "ECSK");
  const ErrorSketch r = ErrorSketch::restore(bytes, p);
  EXPECT_TRUE(r.audit());
  EXPECT_EQ(r.writes_accepted(), 1000u);
  for (int q = 0; q < 200; ++q) {
    const auto h = random_vec(rng, 8);
    auto a = s.try_read(h), b = r.try_read(h);
    ASSERT_EQ(a.has_value(), b.has_value());
    if (!a) continue;
    ASSERT_EQ(a->entries.size(), b->entries.size());
    for (std::size_t i = 0; i < a->entries.size(); ++i) {
      EXPECT_EQ(a->entries[i].similarity, b->entries[i].similarity);
      EXPECT_EQ(a->entries[i].label, b->entries[i].label);
      EXPECT_EQ(a->entries[i].base_pred, b->entries[i].base_pred);
    }
  }
}

TEST(ErrorSketch, SnapshotHeaderLayout) {
  ErrorSketch s(SrpParams{3, 2, 1, 0x0102030405060708ULL});
  s.write(std::vector<double>{1, 1, 1}, 1.0, 0.25);
  const auto b = s.snapshot();
  // version 1, dim 3, L 2, K 1, seed, little-endian
  EXPECT_EQ(b[4], 1);
  EXPECT_EQ(b[8], 3);
  EXPECT_EQ(b[16], 2);
  EXPECT_EQ(b[20], 1);
  EXPECT_EQ(b[24], 0x08);
  EXPECT_EQ(b[31], 0x01);
  ASSERT_EQ(b.size(), 32u + 4 * 3 * 8);
}

TEST(ErrorSketch, RestoreRejectsMismatch) {
  const SrpParams p{4, 5, 3, 1};
  ErrorSketch s(p);
  const auto bytes = s.snapshot();
  SrpParams wrong = p;
  wrong.bits_per_hash = 6;
  EXPECT_THROW(ErrorSketch::restore(bytes, wrong), FormatError);
  auto bad = bytes;
  bad[4] = 9;  // version
  EXPECT_THROW(ErrorSketch::restore(bad, p), FormatError);
  bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(ErrorSketch::restore(bad, p), FormatError);
  bad = bytes;
  bad.pop_back();
  EXPECT_THROW(ErrorSketch::restore(bad, p), FormatError);
}

TEST(ErrorSketch, EmptySnapshotRestoresEmpty) {
  const SrpParams p{4, 5, 3, 1};
  const ErrorSketch r = ErrorSketch::restore(ErrorSketch(p).snapshot(), p);
  EXPECT_THROW((void)r.read(std::vector<double>{1, 0, 0, 0}), EmptyNeighborhood);
}

// E[sum_x[b_q] / N] = (1/N) sum_j p(q, x_j)^L; checked by averaging the
// readout over independently seeded sketches.
TEST(ErrorSketch, RaceDensityLaw) {
  const std::size_t d = 8;
  const int L = 3;
  Rng rng(31);
  const auto q = random_vec(rng, d);
  std::vector<std::vector<double>> pts;
  for (int j = 0; j < 60; ++j) {
    // Mix of near and far points relative to q.
    auto v = random_vec(rng, d);
    const double w = j < 30 ? 2.0 : 0.0;
    for (std::size_t i = 0; i < d; ++i) v[i] += w * q[i];
    pts.push_back(v);
  }
  double expected = 0.0;
  for (const auto& x : pts) expected += collision_probability(oracle::naive_cosine(x, q), L);
  expected /= static_cast<double>(pts.size());

  double mean = 0.0;
  const int sketches = 200;
  for (int s = 0; s < sketches; ++s) {
    ErrorSketch sk(SrpParams{d, L, 1, 1000 + static_cast<std::uint64_t>(s)});
    for (const auto& x : pts) sk.write(x, 1.0, 0.5);
    auto n = sk.try_read(q);
    mean += n ? n->entries.front().similarity : 0.0;
  }
  mean /= sketches;
  EXPECT_NEAR(mean, expected, 0.2 * expected);
}
