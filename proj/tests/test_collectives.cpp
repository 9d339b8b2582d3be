/*
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <gtest/gtest.h>

#include <random>

#include "spardl/collectives.hpp"
#include "support/oracles.hpp"

using namespace spardl;

namespace {

std::vector<WorkerId> iota_group(int m) {
  std::vector<WorkerId> group(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) group[static_cast<std::size_t>(i)] = i;
  return group;
}

std::vector<SparseBlock> random_payloads(std::mt19937_64& rng, int m,
                                         Index max_nnz) {
  std::vector<SparseBlock> blocks;
  for (int i = 0; i < m; ++i) {
    blocks.push_back(oracle::random_block(
        rng, i, {i * 100, i * 100 + 50}, 1 + static_cast<Index>(rng() % max_nnz)));
  }
  return blocks;
}

TEST(Bruck, SingleWorkerIsIdentityWithZeroRounds) {
  Fabric fabric(1);
  std::mt19937_64 rng(3);
  auto blocks = random_payloads(rng, 1, 10);
  auto result = bruck_all_gather(fabric, iota_group(1), blocks);
  ASSERT_EQ(result.size(), 1u);
  EXPECT_EQ(result[0][0], blocks[0]);
  EXPECT_EQ(fabric.report().max_rounds, 0);
}

TEST(Bruck, FourWorkersEqualPayloadCost) {
  // All-gather of equal payloads: each worker receives the other three, so
  // with s scalars per payload the received volume is 3s over 2 rounds.
  const Index nnz = 5;
  const std::int64_t s = 2 * nnz;
  Fabric fabric(4);
  std::vector<SparseBlock> blocks;
  for (int i = 0; i < 4; ++i) {
    SparseBlock b;
    b.block_id = i;
    b.range = {0, 100};
    for (Index e = 0; e < nnz; ++e) b.entries.push_back({e * 4 + i, 1.0 + i});
    blocks.push_back(b);
  }
  auto result = bruck_all_gather(fabric, iota_group(4), blocks);
  auto rep = fabric.report();
  EXPECT_EQ(rep.max_rounds, 2);
  EXPECT_EQ(rep.max_scalars_received, 3 * s);
  for (int i = 0; i < 4; ++i) {
    for (int src = 0; src < 4; ++src) {
      EXPECT_EQ(result[static_cast<std::size_t>(i)]
                      [static_cast<std::size_t>(src)],
                blocks[static_cast<std::size_t>(src)]);
    }
  }
}

TEST(Bruck, MatchesNaiveGatherForSixWorkers) {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 100; ++trial) {
    Fabric fabric(6);
    auto blocks = random_payloads(rng, 6, 12);
    auto result = bruck_all_gather(fabric, iota_group(6), blocks);
    // Naive oracle: every worker directly holds every source's payload.
    for (int i = 0; i < 6; ++i) {
      for (int src = 0; src < 6; ++src) {
        EXPECT_EQ(result[static_cast<std::size_t>(i)]
                        [static_cast<std::size_t>(src)],
                  blocks[static_cast<std::size_t>(src)]);
      }
    }
  }
}

TEST(Bruck, RoundCountIsCeilLog2) {
  std::mt19937_64 rng(43);
  for (int m = 1; m <= 64; ++m) {
    Fabric fabric(m);
    std::vector<SparseBlock> blocks;
    for (int i = 0; i < m; ++i) {
      blocks.push_back(oracle::random_block(rng, i, {0, 4}, 1));
    }
    bruck_all_gather(fabric, iota_group(m), blocks);
    EXPECT_EQ(fabric.report().max_rounds, ceil_log2(m)) << "m=" << m;
  }
}

TEST(Bruck, RejectsEmptyGroup) {
  Fabric fabric(2);
  EXPECT_THROW(bruck_all_gather(fabric, {}, {}), group_size_error);
}

TEST(RecursiveDoubling, TwoWorkersOneRound) {
  Fabric fabric(2);
  std::mt19937_64 rng(5);
  auto blocks = random_payloads(rng, 2, 8);
  auto result = recursive_doubling_all_gather(fabric, iota_group(2), blocks);
  EXPECT_EQ(fabric.report().max_rounds, 1);
  for (int i = 0; i < 2; ++i) {
    EXPECT_EQ(result[static_cast<std::size_t>(i)][0], blocks[0]);
    EXPECT_EQ(result[static_cast<std::size_t>(i)][1], blocks[1]);
  }
}

TEST(RecursiveDoubling, AgreesWithBruckOnPowersOfTwo) {
  std::mt19937_64 rng(47);
  for (int m : {1, 2, 4, 8, 16}) {
    if (m == 1) continue;  // no exchange either way
    auto blocks = random_payloads(rng, m, 10);
    Fabric fa(m), fb(m);
    auto rd = recursive_doubling_all_gather(fa, iota_group(m), blocks);
    auto bk = bruck_all_gather(fb, iota_group(m), blocks);
    EXPECT_EQ(rd, bk) << "m=" << m;
    EXPECT_EQ(fa.report().max_rounds, fb.report().max_rounds);
  }
}

TEST(RecursiveDoubling, RejectsNonPowerOfTwo) {
  Fabric fabric(6);
  std::mt19937_64 rng(7);
  auto blocks = random_payloads(rng, 6, 4);
  EXPECT_THROW(recursive_doubling_all_gather(fabric, iota_group(6), blocks),
               group_size_error);
}

TEST(TopkA, SingleWorkerReturnsLocalTopK) {
  Fabric fabric(1);
  GradientVector g(std::vector<double>{0.5, -3.0, 2.0, 0.1});
  auto result = topka_baseline(fabric, {g}, 2);
  ASSERT_EQ(result.size(), 1u);
  ASSERT_EQ(result[0].nnz(), 2);
  EXPECT_EQ(result[0].entries[0], (Entry{1, -3.0}));
  EXPECT_EQ(result[0].entries[1], (Entry{2, 2.0}));
  EXPECT_EQ(fabric.report().max_rounds, 0);
}

TEST(TopkA, TableRowCostExactly) {
  // P=4, k=100: ceil(log2 4) = 2 rounds and 2(P-1)k = 600 scalars.
  std::mt19937_64 rng(53);
  Fabric fabric(4);
  std::vector<GradientVector> grads;
  for (int w = 0; w < 4; ++w) {
    grads.push_back(oracle::dense_gradient(rng, 500));
  }
  auto result = topka_baseline(fabric, grads, 100);
  auto rep = fabric.report();
  EXPECT_EQ(rep.max_rounds, 2);
  EXPECT_EQ(rep.max_scalars_received, 600);
  for (int w = 1; w < 4; ++w) {
    EXPECT_EQ(result[static_cast<std::size_t>(w)], result[0]);
  }
}

TEST(TopkA, MatchesPerIndexContributionOracle) {
  std::mt19937_64 rng(59);
  Fabric fabric(5);
  const Index n = 60;
  const Index k = 10;
  std::vector<GradientVector> grads;
  for (int w = 0; w < 5; ++w) grads.push_back(oracle::dense_gradient(rng, n));
  auto result = topka_baseline(fabric, grads, k);
  // Oracle: value at j sums exactly the workers whose local top-k kept j.
  std::map<Index, double> expected;
  for (const auto& g : grads) {
    SparseBlock whole;
    whole.block_id = 0;
    whole.range = {0, n};
    for (Index i = 0; i < n; ++i) whole.entries.push_back({i, g[i]});
    for (const Entry& e : oracle::sort_select(whole.entries, k)) {
      expected[e.index] += e.value;
    }
  }
  ASSERT_EQ(static_cast<std::size_t>(result[0].nnz()), expected.size());
  for (const Entry& e : result[0].entries) {
    EXPECT_DOUBLE_EQ(e.value, expected.at(e.index));
  }
}

TEST(TopkA, SharedRankingEqualsDenseReferenceOnUnion) {
  // When every worker ranks indexes identically, all local selections agree
  // and the merged result equals the dense sum restricted to that support.
  std::mt19937_64 rng(61);
  const Index n = 40;
  const Index k = 8;
  GradientVector base = oracle::dense_gradient(rng, n);
  std::vector<GradientVector> grads;
  for (int w = 0; w < 4; ++w) {
    GradientVector g(n);
    for (Index i = 0; i < n; ++i) {
      g[i] = base[i] * (1.0 + 0.01 * (w + 1));  // same magnitude order
    }
    grads.push_back(g);
  }
  Fabric fabric(4);
  auto result = topka_baseline(fabric, grads, k);
  GradientVector dense = dense_all_reduce_reference(grads);
  ASSERT_EQ(result[0].nnz(), k);
  for (const Entry& e : result[0].entries) {
    EXPECT_NEAR(e.value, dense[e.index], 1e-12);
  }
}

TEST(TopkA, RejectsOversizedK) {
  Fabric fabric(2);
  std::vector<GradientVector> grads{GradientVector(4), GradientVector(4)};
  EXPECT_THROW(topka_baseline(fabric, grads, 5), config_error);
}

TEST(DenseReference, SingleInputUnchanged) {
  GradientVector g(std::vector<double>{1.0, -2.0});
  auto sum = dense_all_reduce_reference({g});
  EXPECT_EQ(sum.values, g.values);
}

TEST(DenseReference, OppositeInputsCancel) {
  GradientVector g(std::vector<double>{1.5, -2.25, 0.75});
  GradientVector neg(std::vector<double>{-1.5, 2.25, -0.75});
  auto sum = dense_all_reduce_reference({g, neg});
  for (double v : sum.values) EXPECT_EQ(v, 0.0);
}

TEST(DenseReference, MatchesColumnSumOracle) {
  std::mt19937_64 rng(67);
  std::vector<GradientVector> grads;
  for (int w = 0; w < 5; ++w) {
    grads.push_back(oracle::integer_gradient(rng, 32));
  }
  auto sum = dense_all_reduce_reference(grads);
  auto expected = oracle::column_sum(grads);
  EXPECT_EQ(sum.values, expected.values);
}

}  // namespace
