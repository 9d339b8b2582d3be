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

#include <cstdint>
#include <vector>

#include "spardl/error.hpp"
#include "spardl/fabric.hpp"
#include "spardl/mathutil.hpp"
#include "spardl/sparse.hpp"

namespace spardl {

/// Several collectives can share one fabric round when they operate on
/// disjoint worker groups. A GroupGather describes one group's gather: the
/// participating workers (fabric ids) and each member's contributed block.
struct GroupGather {
  std::vector<WorkerId> workers;
  std::vector<SparseBlock> blocks;  // blocks[i] belongs to workers[i]
};

/// Result of an all-gather for one group: result[i][s] is the block
/// contributed by group member s, as held by member i after the gather.
using GatherResult = std::vector<std::vector<SparseBlock>>;

namespace detail {

/// Bruck all-gather over any group size m, run for every group in the same
/// fabric rounds. At step t each member sends its first min(2^t, m - 2^t)
/// accumulated blocks to the member 2^t positions down and receives from
/// 2^t positions up; the accumulated buffer stays in rotated source order
/// and the final reordering is a free local remap.
inline std::vector<GatherResult> bruck_all_gather_multi(
    Fabric& fabric, const std::vector<GroupGather>& groups) {
  std::size_t group_count = groups.size();
  std::vector<std::vector<std::vector<SparseBlock>>> buf(group_count);
  int max_steps = 0;
  for (std::size_t g = 0; g < group_count; ++g) {
    const auto& grp = groups[g];
    const int m = static_cast<int>(grp.workers.size());
    if (m == 0) throw group_size_error("all-gather on empty group");
    if (grp.blocks.size() != grp.workers.size()) {
      throw group_size_error("group has blocks != workers");
    }
    buf[g].resize(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) {
      buf[g][static_cast<std::size_t>(i)] = {grp.blocks[i]};
    }
    max_steps = std::max(max_steps, ceil_log2(m));
  }

  for (int t = 0; t < max_steps; ++t) {
    const int dist = 1 << t;
    Fabric::RoundPlan plan(static_cast<std::size_t>(fabric.worker_count()));
    for (std::size_t g = 0; g < group_count; ++g) {
      const auto& grp = groups[g];
      const int m = static_cast<int>(grp.workers.size());
      if (dist >= m) continue;  // this group already finished
      const int count = std::min(dist, m - dist);
      for (int i = 0; i < m; ++i) {
        const int target = (i - dist + m) % m;
        Fabric::Send send;
        send.target = grp.workers[static_cast<std::size_t>(target)];
        send.payload.assign(
            buf[g][static_cast<std::size_t>(i)].begin(),
            buf[g][static_cast<std::size_t>(i)].begin() + count);
        plan[static_cast<std::size_t>(grp.workers[static_cast<std::size_t>(
            i)])] = std::move(send);
      }
    }
    auto inbox = fabric.exchange(std::move(plan));
    for (std::size_t g = 0; g < group_count; ++g) {
      const auto& grp = groups[g];
      const int m = static_cast<int>(grp.workers.size());
      if (dist >= m) continue;
      for (int i = 0; i < m; ++i) {
        auto& received = inbox[static_cast<std::size_t>(
            grp.workers[static_cast<std::size_t>(i)])];
        auto& mine = buf[g][static_cast<std::size_t>(i)];
        mine.insert(mine.end(), std::make_move_iterator(received.begin()),
                    std::make_move_iterator(received.end()));
      }
    }
  }

  std::vector<GatherResult> out(group_count);
  for (std::size_t g = 0; g < group_count; ++g) {
    const int m = static_cast<int>(groups[g].workers.size());
    out[g].resize(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) {
      auto& row = out[g][static_cast<std::size_t>(i)];
      row.resize(static_cast<std::size_t>(m));
      for (int t = 0; t < m; ++t) {
        row[static_cast<std::size_t>((i + t) % m)] =
            std::move(buf[g][static_cast<std::size_t>(i)]
                         [static_cast<std::size_t>(t)]);
      }
    }
  }
  return out;
}

}  // namespace detail

/// Bruck all-gather for one group: every member ends up holding all m
/// contributed blocks ordered by source rank, after ceil(log2 m) rounds.
inline GatherResult bruck_all_gather(Fabric& fabric,
                                     const std::vector<WorkerId>& workers,
                                     const std::vector<SparseBlock>& blocks) {
  std::vector<GroupGather> groups{{workers, blocks}};
  return detail::bruck_all_gather_multi(fabric, groups)[0];
}

/// Recursive-doubling all-gather; only defined for power-of-two groups. At
/// step t each member exchanges everything it has accumulated with the
/// member at XOR-distance 2^t. Output is identical to bruck_all_gather.
inline GatherResult recursive_doubling_all_gather(
    Fabric& fabric, const std::vector<WorkerId>& workers,
    const std::vector<SparseBlock>& blocks) {
  const int m = static_cast<int>(workers.size());
  if (m == 0) throw group_size_error("all-gather on empty group");
  if (!is_power_of_two(m)) {
    throw group_size_error(
        "recursive doubling requires a power-of-two group, got m=" +
        std::to_string(m));
  }
  if (blocks.size() != workers.size()) {
    throw group_size_error("group has blocks != workers");
  }
  // held[i] = contiguous aligned slot range [slot_lo, slot_lo + len).
  std::vector<std::vector<SparseBlock>> slots(
      static_cast<std::size_t>(m),
      std::vector<SparseBlock>(static_cast<std::size_t>(m)));
  for (int i = 0; i < m; ++i) {
    slots[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)] =
        blocks[static_cast<std::size_t>(i)];
  }
  for (int dist = 1; dist < m; dist <<= 1) {
    Fabric::RoundPlan plan(static_cast<std::size_t>(fabric.worker_count()));
    for (int i = 0; i < m; ++i) {
      const int partner = i ^ dist;
      // i currently holds the aligned group of `dist` slots containing i.
      const int lo = i & ~(dist - 1);
      Fabric::Send send;
      send.target = workers[static_cast<std::size_t>(partner)];
      for (int s = lo; s < lo + dist; ++s) {
        send.payload.push_back(
            slots[static_cast<std::size_t>(i)][static_cast<std::size_t>(s)]);
      }
      plan[static_cast<std::size_t>(workers[static_cast<std::size_t>(i)])] =
          std::move(send);
    }
    auto inbox = fabric.exchange(std::move(plan));
    for (int i = 0; i < m; ++i) {
      const int partner = i ^ dist;
      const int plo = partner & ~(dist - 1);
      auto& received =
          inbox[static_cast<std::size_t>(workers[static_cast<std::size_t>(i)])];
      for (int s = 0; s < dist; ++s) {
        slots[static_cast<std::size_t>(i)][static_cast<std::size_t>(plo + s)] =
            std::move(received[static_cast<std::size_t>(s)]);
      }
    }
  }
  return slots;
}

/// Top-k All-Gather baseline: every worker selects its local top-k, the k
/// entry sets are Bruck all-gathered, and each worker merges them by index.
/// The merged union is kept unsparsified, so a worker receives exactly
/// 2(P-1)k scalars over ceil(log2 P) rounds.
inline std::vector<GlobalSparseGradient> topka_baseline(
    Fabric& fabric, const std::vector<GradientVector>& gradients, Index k) {
  const int p = fabric.worker_count();
  if (static_cast<std::size_t>(p) != gradients.size()) {
    throw config_error("topka: gradient count != worker count");
  }
  const Index n = gradients[0].size();
  if (k > n) throw config_error("topka: k must satisfy k <= N");
  std::vector<WorkerId> group(static_cast<std::size_t>(p));
  std::vector<SparseBlock> locals(static_cast<std::size_t>(p));
  for (int w = 0; w < p; ++w) {
    group[static_cast<std::size_t>(w)] = w;
    locals[static_cast<std::size_t>(w)] =
        top_k_select_slice(gradients[static_cast<std::size_t>(w)], 0, {0, n},
                           k)
            .selected;
  }
  GatherResult gathered = bruck_all_gather(fabric, group, locals);
  std::vector<GlobalSparseGradient> out(static_cast<std::size_t>(p));
  for (int w = 0; w < p; ++w) {
    SparseBlock acc;
    acc.block_id = 0;
    acc.range = {0, n};
    for (int s = 0; s < p; ++s) {
      acc = merge_add(acc, gathered[static_cast<std::size_t>(w)]
                               [static_cast<std::size_t>(s)]);
    }
    out[static_cast<std::size_t>(w)].n = n;
    out[static_cast<std::size_t>(w)].entries = std::move(acc.entries);
  }
  return out;
}

/// Naive exact all-reduce: element-wise sum in worker-rank order, returned
/// to every worker. Used as a correctness oracle and as the dense trainer
/// baseline; it does not touch the fabric and carries no ledger cost.
inline GradientVector dense_all_reduce_reference(
    const std::vector<GradientVector>& gradients) {
  if (gradients.empty()) throw group_size_error("all-reduce on empty group");
  GradientVector sum(gradients[0].size());
  for (const GradientVector& g : gradients) {
    if (g.size() != sum.size()) {
      throw config_error("dense all-reduce: dimension mismatch");
    }
    for (Index i = 0; i < sum.size(); ++i) sum[i] += g[i];
  }
  return sum;
}

}  // namespace spardl
