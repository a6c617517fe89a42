#include <gtest/gtest.h>

#include <vector>

#include "errcomp/oracle_memory.hpp"
#include "errcomp/sketch_memory.hpp"
#include "oracles.hpp"

using namespace errcomp;

namespace {

OracleMemory make(std::size_t dim, std::size_t capacity, std::size_t k = 5) {
  OracleParams p;
  p.dim = dim;
  p.capacity = capacity;
  p.k = k;
  return OracleMemory(p);
}

}  // namespace

TEST(OracleMemory, FifoEviction) {
  auto m = make(2, 2);
  m.store(std::vector<double>{1, 0}, 1.0, 0.1);
  m.store(std::vector<double>{0, 1}, 0.0, 0.2);
  m.store(std::vector<double>{1, 1}, 1.0, 0.3);
  ASSERT_EQ(m.size(), 2u);
  EXPECT_EQ(m.at(0).base_pred, 0.2);
  EXPECT_EQ(m.at(1).base_pred, 0.3);
}

TEST(OracleMemory, FilterRejectsSmallError) {
  auto m = make(2, 10);
  EXPECT_FALSE(m.store(std::vector<double>{1, 0}, 1.0, 0.95, 0.1));
  EXPECT_EQ(m.size(), 0u);
}

TEST(OracleMemory, HundredStoresUnderCapacity) {
  auto m = make(3, 1000);
  Rng rng(1);
  for (int i = 0; i < 100; ++i) m.store(std::vector<double>{rng.normal(), rng.normal(), rng.normal()}, 0.0, 0.5);
  EXPECT_EQ(m.size(), 100u);
}

TEST(OracleMemory, SelfSimilarity) {
  auto m = make(3, 10);
  const std::vector<double> u{0.3, -0.2, 0.9};
  m.store(u, 1.0, 0.2);
  const auto n = m.top_k(u, 5);
  ASSERT_EQ(n.entries.size(), 1u);
  EXPECT_NEAR(n.entries[0].similarity, 1.0, 1e-12);
  EXPECT_EQ(n.entries[0].label, 1.0);
  EXPECT_EQ(n.entries[0].base_pred, 0.2);
  EXPECT_EQ(n.source, NeighborSource::oracle);
}

TEST(OracleMemory, NearestByCosine) {
  auto m = make(2, 10);
  m.store(std::vector<double>{1, 0}, 1.0, 0.5);
  m.store(std::vector<double>{0, 1}, 0.0, 0.5);
  const auto n = m.top_k(std::vector<double>{1, 0.1}, 1);
  ASSERT_EQ(n.entries.size(), 1u);
  EXPECT_EQ(n.entries[0].label, 1.0);
}

TEST(OracleMemory, TiesOlderFirst) {
  auto m = make(2, 10);
  m.store(std::vector<double>{2, 0}, 1.0, 0.1);
  m.store(std::vector<double>{5, 0}, 0.0, 0.2);
  const auto n = m.top_k(std::vector<double>{1, 0}, 2);
  EXPECT_EQ(n.entries[0].base_pred, 0.1);
  EXPECT_EQ(n.entries[1].base_pred, 0.2);
}

TEST(OracleMemory, EmptyAndErrors) {
  auto m = make(2, 10);
  EXPECT_THROW((void)m.top_k(std::vector<double>{1, 0}, 3), EmptyNeighborhood);
  EXPECT_FALSE(m.try_read(std::vector<double>{1, 0}).has_value());
  EXPECT_THROW(m.store(std::vector<double>{1}, 1.0, 0.5), DimensionMismatch);
  OracleParams bad;
  bad.dim = 2;
  bad.capacity = 0;
  EXPECT_THROW(OracleMemory{bad}, InvalidParameter);
}

TEST(OracleMemory, MatchesExhaustiveSort) {
  Rng rng(12);
  for (std::size_t corpus : {50u, 500u, 10000u}) {
    auto m = make(6, corpus);
    std::vector<MemoryRecord> all;
    for (std::size_t i = 0; i < corpus; ++i) {
      MemoryRecord r;
      r.hidden.resize(6);
      for (double& v : r.hidden) v = rng.normal();
      r.label = rng.bernoulli(0.5) ? 1.0 : 0.0;
      r.base_pred = rng.uniform01();
      m.store(r);
      all.push_back(r);
    }
    const int queries = corpus >= 10000 ? 5 : 30;
    for (int q = 0; q < queries; ++q) {
      std::vector<double> query(6);
      for (double& v : query) v = rng.normal();
      const auto got = m.top_k(query, 10).entries;
      const auto want = oracle::full_sort_top_k(all, query, 10);
      ASSERT_EQ(got.size(), want.size());
      for (std::size_t i = 0; i < got.size(); ++i) {
        EXPECT_NEAR(got[i].similarity, want[i].similarity, 1e-12);
        EXPECT_EQ(got[i].label, want[i].label);
        EXPECT_EQ(got[i].base_pred, want[i].base_pred);
        EXPECT_GE(got[i].similarity, -1.0);
        EXPECT_LE(got[i].similarity, 1.0);
        if (i) {
          EXPECT_LE(got[i].similarity, got[i - 1].similarity);
        }
      }
    }
  }
}

TEST(OracleMemory, SameAcceptanceSetAsSketch) {
  auto m = make(4, 100000);
  ErrorSketch s(SrpParams{4, 6, 3, 1});
  Rng rng(77);
  for (int i = 0; i < 500; ++i) {
    std::vector<double> h(4);
    for (double& v : h) v = rng.normal();
    const double y = rng.bernoulli(0.3) ? 1.0 : 0.0;
    const double p = rng.uniform01();
    EXPECT_EQ(m.store(h, y, p, 0.25), s.write(h, y, p, 0.25));
  }
  EXPECT_EQ(m.size(), s.writes_accepted());
}

TEST(OracleMemory, DownSampling) {
  OracleParams p;
  p.dim = 2;
  p.capacity = 100000;
  p.keep_probability = 0.25;
  p.seed = 3;
  OracleMemory m(p);
  for (int i = 0; i < 4000; ++i) m.store(std::vector<double>{1, 0}, 1.0, 0.0);
  EXPECT_NEAR(static_cast<double>(m.size()) / 4000.0, 0.25, 0.03);
}
