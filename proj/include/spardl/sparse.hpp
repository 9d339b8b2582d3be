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

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "spardl/error.hpp"

namespace spardl {

using Index = std::int64_t;

/// Dense gradient vector of a fixed model dimension N.
struct GradientVector {
  std::vector<double> values;

  GradientVector() = default;
  explicit GradientVector(Index n, double fill = 0.0)
      : values(static_cast<std::size_t>(n), fill) {}
  explicit GradientVector(std::vector<double> v) : values(std::move(v)) {}

  Index size() const { return static_cast<Index>(values.size()); }
  double& operator[](Index i) { return values[static_cast<std::size_t>(i)]; }
  double operator[](Index i) const {
    return values[static_cast<std::size_t>(i)];
  }
};

/// Half-open index interval [lo, hi).
struct IndexRange {
  Index lo = 0;
  Index hi = 0;

  Index size() const { return hi - lo; }
  bool contains(Index i) const { return i >= lo && i < hi; }
  bool operator==(const IndexRange&) const = default;
};

/// One (index, value) coordinate of a sparse gradient. Transmission volume
/// of an entry is two scalars: the index and the value.
struct Entry {
  Index index = 0;
  double value = 0.0;

  bool operator==(const Entry&) const = default;
};

/// Sparse gradient block in coordinate format. Entries are sorted by index,
/// duplicate-free, and confined to the block's range.
struct SparseBlock {
  int block_id = 0;
  IndexRange range;
  std::vector<Entry> entries;

  Index nnz() const { return static_cast<Index>(entries.size()); }
  bool empty() const { return entries.empty(); }

  bool operator==(const SparseBlock&) const = default;
};

/// Contiguous nearly-equal split of [0, N) into B blocks. The first
/// (N mod B) blocks get the extra index.
struct BlockPartition {
  Index n = 0;
  int block_count = 0;
  std::vector<IndexRange> ranges;

  const IndexRange& range_of(int block_id) const {
    return ranges[static_cast<std::size_t>(block_id)];
  }

  int block_of(Index i) const {
    // All blocks have size base or base+1 with the long ones first.
    const Index base = n / block_count;
    const Index rem = n % block_count;
    const Index split = rem * (base + 1);
    if (i < split) return static_cast<int>(i / (base + 1));
    return static_cast<int>(rem + (i - split) / base);
  }
};

inline BlockPartition partition(Index n, int block_count) {
  if (block_count <= 0 || static_cast<Index>(block_count) > n) {
    throw partition_error("partition requires 1 <= B <= N, got B=" +
                          std::to_string(block_count) +
                          " N=" + std::to_string(n));
  }
  BlockPartition part;
  part.n = n;
  part.block_count = block_count;
  part.ranges.reserve(static_cast<std::size_t>(block_count));
  const Index base = n / block_count;
  const Index rem = n % block_count;
  Index lo = 0;
  for (int b = 0; b < block_count; ++b) {
    const Index len = base + (b < rem ? 1 : 0);
    part.ranges.push_back({lo, lo + len});
    lo += len;
  }
  return part;
}

/// Selection order: larger |value| first, ties broken by smaller index.
/// Every selection in the library uses this comparator so that workers
/// holding identical blocks always make identical choices.
inline bool selection_before(const Entry& a, const Entry& b) {
  const double ma = std::fabs(a.value);
  const double mb = std::fabs(b.value);
  if (ma != mb) return ma > mb;
  return a.index < b.index;
}

struct TopKResult {
  SparseBlock selected;
  SparseBlock discarded;
};

/// Keeps the min(budget, nnz) entries of largest absolute value; the rest
/// go to `discarded`. Selected and discarded partition the input exactly.
inline TopKResult top_k_select(const SparseBlock& block, Index budget) {
  if (budget < 0) throw error("top_k_select: negative budget");
  TopKResult out;
  out.selected.block_id = block.block_id;
  out.selected.range = block.range;
  out.discarded.block_id = block.block_id;
  out.discarded.range = block.range;
  if (budget >= block.nnz()) {
    out.selected.entries = block.entries;
    return out;
  }
  std::vector<Entry> order = block.entries;
  const auto mid = order.begin() + static_cast<std::ptrdiff_t>(budget);
  // selection_before is a total order (indexes are unique), so nth_element
  // partitions deterministically; each side is then restored to index order.
  std::nth_element(order.begin(), mid, order.end(), selection_before);
  auto by_index = [](const Entry& a, const Entry& b) {
    return a.index < b.index;
  };
  out.selected.entries.assign(order.begin(), mid);
  std::sort(out.selected.entries.begin(), out.selected.entries.end(),
            by_index);
  out.discarded.entries.assign(mid, order.end());
  std::sort(out.discarded.entries.begin(), out.discarded.entries.end(),
            by_index);
  return out;
}

/// Selects from a dense slice of `g`; every index of `range` is treated as
/// an entry (explicit zeros included), so selected + discarded always cover
/// the whole slice.
inline TopKResult top_k_select_slice(const GradientVector& g, int block_id,
                                     const IndexRange& range, Index budget) {
  SparseBlock dense;
  dense.block_id = block_id;
  dense.range = range;
  dense.entries.reserve(static_cast<std::size_t>(range.size()));
  for (Index i = range.lo; i < range.hi; ++i) {
    dense.entries.push_back({i, g[i]});
  }
  return top_k_select(dense, budget);
}

/// Index-wise sum of two blocks of the same id. Entries summing to exact
/// zero are retained: they still occupy transmission volume and remain
/// eligible for selection.
inline SparseBlock merge_add(const SparseBlock& a, const SparseBlock& b) {
  if (a.block_id != b.block_id) {
    throw block_mismatch_error("merge_add: block ids differ (" +
                               std::to_string(a.block_id) + " vs " +
                               std::to_string(b.block_id) + ")");
  }
  SparseBlock out;
  out.block_id = a.block_id;
  out.range = a.range;
  out.entries.reserve(a.entries.size() + b.entries.size());
  auto ia = a.entries.begin();
  auto ib = b.entries.begin();
  while (ia != a.entries.end() && ib != b.entries.end()) {
    if (ia->index < ib->index) {
      out.entries.push_back(*ia++);
    } else if (ib->index < ia->index) {
      out.entries.push_back(*ib++);
    } else {
      out.entries.push_back({ia->index, ia->value + ib->value});
      ++ia;
      ++ib;
    }
  }
  out.entries.insert(out.entries.end(), ia, a.entries.end());
  out.entries.insert(out.entries.end(), ib, b.entries.end());
  return out;
}

/// Multiplies every entry value by `factor` (used for residual shares).
inline SparseBlock scale(const SparseBlock& block, double factor) {
  SparseBlock out = block;
  for (Entry& e : out.entries) e.value *= factor;
  return out;
}

/// The synchronized sparse gradient every worker holds after an All-Reduce:
/// sorted (index, value) entries over [0, N), at most k of them.
struct GlobalSparseGradient {
  Index n = 0;
  std::vector<Entry> entries;

  Index nnz() const { return static_cast<Index>(entries.size()); }
  bool operator==(const GlobalSparseGradient&) const = default;
};

/// Checks the structural invariants of a block; used by debug assertions
/// and tests rather than on every hot-path operation.
inline bool well_formed(const SparseBlock& block) {
  Index prev = block.range.lo - 1;
  for (const Entry& e : block.entries) {
    if (!block.range.contains(e.index)) return false;
    if (e.index <= prev) return false;
    prev = e.index;
  }
  return true;
}

}  // namespace spardl
