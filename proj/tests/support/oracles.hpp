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

// Independent reference implementations used as test oracles. Everything
// here recomputes expected values by brute force and must stay decoupled
// from the library code paths it checks (only the basic data types are
// shared).

#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <vector>

#include "spardl/sparse.hpp"

namespace oracle {

using spardl::Entry;
using spardl::GradientVector;
using spardl::Index;
using spardl::IndexRange;
using spardl::SparseBlock;

/// Dense-accumulate reference for index-wise sparse addition.
inline std::map<Index, double> dense_accumulate(
    const std::vector<SparseBlock>& blocks) {
  std::map<Index, double> acc;
  for (const SparseBlock& b : blocks) {
    for (const Entry& e : b.entries) acc[e.index] += e.value;
  }
  return acc;
}

/// Reference top-k: full sort with the (|value| desc, index asc) rule.
inline std::vector<Entry> sort_select(std::vector<Entry> entries,
                                      Index budget) {
  std::stable_sort(entries.begin(), entries.end(),
                   [](const Entry& a, const Entry& b) {
                     const double ma = std::fabs(a.value);
                     const double mb = std::fabs(b.value);
                     if (ma != mb) return ma > mb;
                     return a.index < b.index;
                   });
  if (static_cast<Index>(entries.size()) > budget) {
    entries.resize(static_cast<std::size_t>(budget));
  }
  std::sort(entries.begin(), entries.end(),
            [](const Entry& a, const Entry& b) { return a.index < b.index; });
  return entries;
}

/// Column-wise sum of dense gradients, worker-rank order.
inline GradientVector column_sum(const std::vector<GradientVector>& grads) {
  GradientVector out(grads.at(0).size());
  for (const auto& g : grads) {
    for (Index i = 0; i < g.size(); ++i) out[i] += g[i];
  }
  return out;
}

/// Deterministic random sparse block over the given range.
inline SparseBlock random_block(std::mt19937_64& rng, int block_id,
                                IndexRange range, Index nnz,
                                bool integer_values = false) {
  std::vector<Index> indexes;
  for (Index i = range.lo; i < range.hi; ++i) indexes.push_back(i);
  std::shuffle(indexes.begin(), indexes.end(), rng);
  nnz = std::min<Index>(nnz, range.size());
  indexes.resize(static_cast<std::size_t>(nnz));
  std::sort(indexes.begin(), indexes.end());
  SparseBlock block;
  block.block_id = block_id;
  block.range = range;
  std::uniform_int_distribution<int> ints(-9, 9);
  std::uniform_real_distribution<double> reals(-1.0, 1.0);
  for (Index idx : indexes) {
    double v = integer_values ? static_cast<double>(ints(rng))
                              : reals(rng);
    block.entries.push_back({idx, v});
  }
  return block;
}

/// Dense random gradient with no zero coordinates (every block saturates
/// its selection budget).
inline GradientVector dense_gradient(std::mt19937_64& rng, Index n) {
  GradientVector g(n);
  std::uniform_real_distribution<double> mag(0.5, 1.5);
  std::bernoulli_distribution sign(0.5);
  for (Index i = 0; i < n; ++i) {
    g[i] = (sign(rng) ? 1.0 : -1.0) * mag(rng);
  }
  return g;
}

/// Integer-valued random gradient in a small range; many tied magnitudes.
inline GradientVector integer_gradient(std::mt19937_64& rng, Index n,
                                       int max_abs = 8) {
  GradientVector g(n);
  std::uniform_int_distribution<int> ints(-max_abs, max_abs);
  for (Index i = 0; i < n; ++i) g[i] = static_cast<double>(ints(rng));
  return g;
}

}  // namespace oracle
