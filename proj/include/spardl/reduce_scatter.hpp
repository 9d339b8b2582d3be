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
#include <functional>
#include <optional>
#include <vector>

#include "spardl/error.hpp"
#include "spardl/fabric.hpp"
#include "spardl/mathutil.hpp"
#include "spardl/sparse.hpp"

namespace spardl {

/// When to re-sparsify blocks during the reduce-scatter. `optimized`
/// sparsifies only the blocks of the next sending bag after each merge
/// (plus the reserved block once at the end); `naive` re-sparsifies every
/// held block after every merge. Both keep every transmitted block within
/// budget.
enum class SrsTiming { optimized, naive };

/// A worker's division of the m block positions into one preservation bag
/// and l = ceil(log2 m) sending bags. Bag j (1-based) holds 2^(j-1)
/// consecutive positions starting at rank+1, wrapping modulo m; the last
/// bag holds the E = m - 2^(l-1) positions that remain.
struct BagSchedule {
  int team_size = 1;
  int worker_rank = 0;
  int l = 0;
  int preservation = 0;
  std::vector<std::vector<int>> sending_bags;  // sending_bags[j-1] = bag j
  int remainder = 0;                           // E

  bool operator==(const BagSchedule&) const = default;
};

inline BagSchedule build_bags(int team_size, int worker_rank) {
  if (team_size < 1 || worker_rank < 0 || worker_rank >= team_size) {
    throw config_error("build_bags: rank out of range");
  }
  BagSchedule sched;
  sched.team_size = team_size;
  sched.worker_rank = worker_rank;
  sched.preservation = worker_rank;
  sched.l = ceil_log2(team_size);
  if (team_size == 1) return sched;
  sched.remainder = team_size - (1 << (sched.l - 1));
  sched.sending_bags.resize(static_cast<std::size_t>(sched.l));
  int next = worker_rank + 1;
  for (int j = 1; j <= sched.l; ++j) {
    const int size = (j < sched.l) ? (1 << (j - 1)) : sched.remainder;
    auto& bag = sched.sending_bags[static_cast<std::size_t>(j - 1)];
    bag.reserve(static_cast<std::size_t>(size));
    for (int s = 0; s < size; ++s) {
      bag.push_back(next % team_size);
      ++next;
    }
  }
  return sched;
}

/// Called whenever a selection discards entries that should be collected
/// as residual state: (fabric worker id, block position, discarded
/// entries, share weight).
using DiscardSink =
    std::function<void(WorkerId, int, const SparseBlock&, double)>;

inline DiscardSink null_discard_sink() {
  return [](WorkerId, int, const SparseBlock&, double) {};
}

/// One team participating in a reduce-scatter round series: the fabric ids
/// of its members (team rank = position in this vector) and, per member,
/// one block per position. All blocks must already be within budget.
struct SrsTeam {
  std::vector<WorkerId> workers;
  // blocks[i][b] = member i's block for position b.
  std::vector<std::vector<SparseBlock>> blocks;
};

namespace detail {

struct SrsWorkerState {
  BagSchedule sched;
  std::vector<std::optional<SparseBlock>> held;  // indexed by position
};

inline void sparsify_block(std::optional<SparseBlock>& slot, Index budget,
                           WorkerId worker, const DiscardSink& on_discard) {
  if (!slot.has_value() || slot->nnz() <= budget) return;
  TopKResult split = top_k_select(*slot, budget);
  if (!split.discarded.empty()) {
    on_discard(worker, split.discarded.block_id, split.discarded, 1.0);
  }
  *slot = std::move(split.selected);
}

}  // namespace detail

/// Spar-Reduce-Scatter over every team in lockstep (all teams must share
/// one size so rounds align). After l rounds each member holds only its
/// preservation block, reduced over the team and sparsified to the budget;
/// every transmitted block carries at most `budget` entries.
///
/// Returns, per team, the members' preservation blocks.
inline std::vector<std::vector<SparseBlock>> run_srs_teams(
    Fabric& fabric, std::vector<SrsTeam> teams, Index budget,
    SrsTiming timing = SrsTiming::optimized,
    const DiscardSink& on_discard = null_discard_sink()) {
  if (teams.empty()) throw group_size_error("reduce-scatter with no teams");
  const int m = static_cast<int>(teams[0].workers.size());
  for (const auto& team : teams) {
    if (static_cast<int>(team.workers.size()) != m) {
      throw group_size_error("reduce-scatter teams must share one size");
    }
  }
  const int l = ceil_log2(m);

  std::vector<std::vector<detail::SrsWorkerState>> state(teams.size());
  for (std::size_t t = 0; t < teams.size(); ++t) {
    state[t].resize(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) {
      auto& ws = state[t][static_cast<std::size_t>(i)];
      ws.sched = build_bags(m, i);
      ws.held.resize(static_cast<std::size_t>(m));
      if (static_cast<int>(teams[t].blocks[static_cast<std::size_t>(i)]
                               .size()) != m) {
        throw config_error("reduce-scatter: member needs one block per position");
      }
      for (int b = 0; b < m; ++b) {
        auto& block =
            teams[t].blocks[static_cast<std::size_t>(i)][static_cast<std::size_t>(b)];
        if (block.nnz() > budget) {
          throw config_error(
              "reduce-scatter: initial block exceeds budget; sparsify during "
              "dividing first");
        }
        ws.held[static_cast<std::size_t>(b)] = std::move(block);
      }
    }
  }

  for (int step = 1; step <= l; ++step) {
    const int dist = 1 << (l - step);
    const int bag_index = l - step + 1;  // bags go out from B_l down to B_1
    Fabric::RoundPlan plan(static_cast<std::size_t>(fabric.worker_count()));
    for (std::size_t t = 0; t < teams.size(); ++t) {
      for (int i = 0; i < m; ++i) {
        auto& ws = state[t][static_cast<std::size_t>(i)];
        const auto& bag =
            ws.sched.sending_bags[static_cast<std::size_t>(bag_index - 1)];
        Fabric::Send send;
        send.target =
            teams[t].workers[static_cast<std::size_t>((i + dist) % m)];
        for (int pos : bag) {
          auto& slot = ws.held[static_cast<std::size_t>(pos)];
          if (!slot.has_value()) {
            throw theorem_violation_error("sending a block already given up");
          }
          if (slot->nnz() > budget) {
            throw error("budget discipline violated before send");
          }
          send.payload.push_back(std::move(*slot));
          slot.reset();
        }
        plan[static_cast<std::size_t>(
            teams[t].workers[static_cast<std::size_t>(i)])] = std::move(send);
      }
    }
    auto inbox = fabric.exchange(std::move(plan));
    for (std::size_t t = 0; t < teams.size(); ++t) {
      for (int i = 0; i < m; ++i) {
        auto& ws = state[t][static_cast<std::size_t>(i)];
        const WorkerId self =
            teams[t].workers[static_cast<std::size_t>(i)];
        for (SparseBlock& received : inbox[static_cast<std::size_t>(self)]) {
          if (received.block_id < 0 || received.block_id >= m) {
            throw theorem_violation_error("received block id out of range");
          }
          auto& slot = ws.held[static_cast<std::size_t>(received.block_id)];
          if (!slot.has_value()) {
            // The arriving bag must be a subset of the blocks still held.
            throw theorem_violation_error(
                "received block " + std::to_string(received.block_id) +
                " not held by worker " + std::to_string(self));
          }
          *slot = merge_add(*slot, received);
        }
        if (timing == SrsTiming::naive) {
          for (auto& slot : ws.held) {
            detail::sparsify_block(slot, budget, self, on_discard);
          }
        } else if (step < l) {
          // Only the blocks leaving next round need to be back in budget.
          const auto& next_bag =
              ws.sched.sending_bags[static_cast<std::size_t>(bag_index - 2)];
          for (int pos : next_bag) {
            detail::sparsify_block(ws.held[static_cast<std::size_t>(pos)],
                                   budget, self, on_discard);
          }
        }
      }
    }
  }

  std::vector<std::vector<SparseBlock>> out(teams.size());
  for (std::size_t t = 0; t < teams.size(); ++t) {
    out[t].reserve(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) {
      auto& ws = state[t][static_cast<std::size_t>(i)];
      const WorkerId self = teams[t].workers[static_cast<std::size_t>(i)];
      auto& kept = ws.held[static_cast<std::size_t>(ws.sched.preservation)];
      if (!kept.has_value()) {
        throw error("preservation block missing after reduce-scatter");
      }
      // The reserved block is sparsified once, after the last merge.
      detail::sparsify_block(kept, budget, self, on_discard);
      out[t].push_back(std::move(*kept));
    }
  }
  return out;
}

/// Single-team convenience wrapper.
inline std::vector<SparseBlock> run_srs(
    Fabric& fabric, std::vector<WorkerId> workers,
    std::vector<std::vector<SparseBlock>> blocks, Index budget,
    SrsTiming timing = SrsTiming::optimized,
    const DiscardSink& on_discard = null_discard_sink()) {
  std::vector<SrsTeam> teams{{std::move(workers), std::move(blocks)}};
  return run_srs_teams(fabric, std::move(teams), budget, timing,
                       on_discard)[0];
}

struct SrsCost {
  std::int64_t rounds = 0;
  std::int64_t scalars = 0;
};

/// Closed-form cost of one reduce-scatter phase: ceil(log2 m) rounds and
/// 2k(m-1)/m scalars received per worker, for a total selection count k
/// divisible by m.
inline SrsCost expected_cost_srs(std::int64_t m, std::int64_t k) {
  if (m < 1) throw config_error("expected_cost_srs: m >= 1 required");
  if (k % m != 0) throw config_error("expected_cost_srs: m must divide k");
  if (m == 1) return {0, 0};
  return {ceil_log2(m), 2 * (k / m) * (m - 1)};
}

}  // namespace spardl
