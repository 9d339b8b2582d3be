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
#include <ostream>
#include <vector>

#include "spardl/collectives.hpp"
#include "spardl/error.hpp"
#include "spardl/fabric.hpp"
#include "spardl/mathutil.hpp"
#include "spardl/reduce_scatter.hpp"
#include "spardl/sparse.hpp"

namespace spardl {

/// Adaptive pre-selection budget for B-SAG, driven like a congestion
/// window: the step keeps its direction while the union-size signal agrees
/// with it (doubling after one confirmation) and flips sign at half size
/// when the signal turns. h is clamped to [k/P, dk/P]; the step is left
/// untouched by clamping.
class HController {
 public:
  HController(std::int64_t workers, std::int64_t k, std::int64_t teams)
      : lower_(static_cast<double>(k) / static_cast<double>(workers)),
        upper_(static_cast<double>(teams * k) /
               static_cast<double>(workers)),
        target_(teams * k / workers),
        h_(lower_),
        step_(0.01 * static_cast<double>(k) *
              static_cast<double>(teams - 1) /
              static_cast<double>(workers)),
        flag_(false) {
    if (workers < 1 || teams < 1 || k < 1 || k % workers != 0 ||
        teams * k % workers != 0) {
      throw config_error("HController: invalid (P, k, d)");
    }
  }

  double h() const { return h_; }
  double step() const { return step_; }
  bool flag() const { return flag_; }
  std::int64_t target() const { return target_; }

  /// Integer selection budget for the next gather.
  Index budget() const {
    return std::max<Index>(1, static_cast<Index>(std::llround(h_)));
  }

  /// Feeds back the union size N_t observed after one gather and moves h.
  void observe(std::int64_t n_t) {
    const bool over = n_t > target_;
    const bool rising = step_ > 0.0;
    if (over != rising) {  // XOR: signal agrees with the current direction
      if (flag_) {
        step_ *= 2.0;
        flag_ = false;
      } else {
        flag_ = true;
      }
    } else {
      step_ = -step_ / 2.0;
      flag_ = false;
    }
    h_ = std::clamp(h_ + step_, lower_, upper_);
  }

 private:
  double lower_;
  double upper_;
  std::int64_t target_;
  double h_;
  double step_;
  bool flag_;
};

inline void controller_update(HController& ctrl, std::int64_t n_t) {
  ctrl.observe(n_t);
}

/// One position group: the d workers (one per team) holding blocks of the
/// same position, to be synchronized to an identical reduced block.
struct PositionGroup {
  std::vector<WorkerId> workers;
  std::vector<SparseBlock> blocks;  // blocks[i] belongs to workers[i]
};

/// Splits a unit of discarded mass into `count` dyadic shares (each a
/// power of two, summing to one). Equal shares for power-of-two counts;
/// otherwise the larger shares go to the lower group indexes. Dyadic
/// shares keep integer-valued runs exactly conservative, which thirds or
/// fifths cannot.
inline std::vector<double> dyadic_shares(int count) {
  std::vector<double> shares{1.0};
  while (static_cast<int>(shares.size()) < count) {
    const double half = shares.front() / 2.0;
    shares.erase(shares.begin());
    shares.push_back(half);
    shares.push_back(half);
    std::sort(shares.rbegin(), shares.rend());
  }
  return shares;
}

/// Recursive-doubling team synchronization for a power-of-two number of
/// teams. At step t partners at XOR-distance 2^t swap their whole block,
/// merge by index, and select back to L; after a step every worker of a
/// merged subgroup holds the same block, so a discard at step t is shared
/// 2^(t+1) ways.
inline std::vector<std::vector<SparseBlock>> rsag_groups(
    Fabric& fabric, std::vector<PositionGroup> groups, Index budget,
    const DiscardSink& on_discard = null_discard_sink()) {
  if (groups.empty()) throw group_size_error("rsag with no groups");
  const int d = static_cast<int>(groups[0].workers.size());
  if (d < 2 || !is_power_of_two(d)) {
    throw group_size_error("rsag requires a power-of-two team count >= 2");
  }
  for (auto& g : groups) {
    if (static_cast<int>(g.workers.size()) != d ||
        g.blocks.size() != g.workers.size()) {
      throw group_size_error("rsag groups must share one size");
    }
  }
  const int steps = exact_log2(d);
  for (int t = 0; t < steps; ++t) {
    const int dist = 1 << t;
    Fabric::RoundPlan plan(static_cast<std::size_t>(fabric.worker_count()));
    for (auto& g : groups) {
      for (int i = 0; i < d; ++i) {
        Fabric::Send send;
        send.target = g.workers[static_cast<std::size_t>(i ^ dist)];
        send.payload = {g.blocks[static_cast<std::size_t>(i)]};
        plan[static_cast<std::size_t>(g.workers[static_cast<std::size_t>(i)])] =
            std::move(send);
      }
    }
    auto inbox = fabric.exchange(std::move(plan));
    const double share = 1.0 / static_cast<double>(2 * dist);
    for (auto& g : groups) {
      for (int i = 0; i < d; ++i) {
        const WorkerId self = g.workers[static_cast<std::size_t>(i)];
        auto& received = inbox[static_cast<std::size_t>(self)];
        SparseBlock merged = merge_add(g.blocks[static_cast<std::size_t>(i)],
                                       received.at(0));
        if (merged.nnz() > budget) {
          TopKResult split = top_k_select(merged, budget);
          on_discard(self, split.discarded.block_id, split.discarded, share);
          merged = std::move(split.selected);
        }
        g.blocks[static_cast<std::size_t>(i)] = std::move(merged);
      }
    }
  }
  std::vector<std::vector<SparseBlock>> out;
  out.reserve(groups.size());
  for (auto& g : groups) out.push_back(std::move(g.blocks));
  return out;
}

struct BsagGroupResult {
  std::vector<SparseBlock> blocks;  // identical content per member
  std::int64_t union_size = 0;      // N_t before the final selection
};

/// Bruck-based team synchronization for any number of teams. Each worker
/// first selects top-h of its block (the whole remainder is its own
/// discard), the h-entry blocks travel through a Bruck all-gather with no
/// intermediate truncation, and the identical union-sum is selected down
/// to L on every worker, the discard being split across the group.
///
/// Selecting mid-transport would compress blocks in different orders on
/// different workers and break consistency; the pre-selection plus final
/// selection keeps every worker bit-identical.
inline std::vector<BsagGroupResult> bsag_groups(
    Fabric& fabric, std::vector<PositionGroup> groups,
    const std::vector<Index>& pre_budgets, Index budget,
    const DiscardSink& on_discard = null_discard_sink()) {
  if (groups.empty()) throw group_size_error("bsag with no groups");
  if (pre_budgets.size() != groups.size()) {
    throw config_error("bsag: one pre-selection budget per group");
  }
  const int d = static_cast<int>(groups[0].workers.size());
  if (d < 2) throw group_size_error("bsag requires >= 2 teams");
  for (auto& g : groups) {
    if (static_cast<int>(g.workers.size()) != d ||
        g.blocks.size() != g.workers.size()) {
      throw group_size_error("bsag groups must share one size");
    }
  }

  std::vector<GroupGather> gathers(groups.size());
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    auto& g = groups[gi];
    gathers[gi].workers = g.workers;
    gathers[gi].blocks.resize(g.blocks.size());
    for (int i = 0; i < d; ++i) {
      SparseBlock& block = g.blocks[static_cast<std::size_t>(i)];
      if (block.nnz() > pre_budgets[gi]) {
        TopKResult split = top_k_select(block, pre_budgets[gi]);
        on_discard(g.workers[static_cast<std::size_t>(i)],
                   split.discarded.block_id, split.discarded, 1.0);
        block = std::move(split.selected);
      }
      gathers[gi].blocks[static_cast<std::size_t>(i)] = std::move(block);
    }
  }

  auto gathered = detail::bruck_all_gather_multi(fabric, gathers);

  const std::vector<double> shares = dyadic_shares(d);
  std::vector<BsagGroupResult> out(groups.size());
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    auto& g = groups[gi];
    out[gi].blocks.resize(static_cast<std::size_t>(d));
    for (int i = 0; i < d; ++i) {
      SparseBlock acc = gathered[gi][static_cast<std::size_t>(i)][0];
      for (int s = 1; s < d; ++s) {
        acc = merge_add(acc,
                        gathered[gi][static_cast<std::size_t>(i)]
                                [static_cast<std::size_t>(s)]);
      }
      out[gi].union_size = acc.nnz();
      if (acc.nnz() > budget) {
        TopKResult split = top_k_select(acc, budget);
        on_discard(g.workers[static_cast<std::size_t>(i)],
                   split.discarded.block_id, split.discarded,
                   shares[static_cast<std::size_t>(i)]);
        acc = std::move(split.selected);
      }
      out[gi].blocks[static_cast<std::size_t>(i)] = std::move(acc);
    }
  }
  return out;
}

/// Single-group conveniences.
inline std::vector<SparseBlock> rsag(Fabric& fabric,
                                     std::vector<WorkerId> workers,
                                     std::vector<SparseBlock> blocks,
                                     Index budget,
                                     const DiscardSink& on_discard =
                                         null_discard_sink()) {
  std::vector<PositionGroup> groups{{std::move(workers), std::move(blocks)}};
  return rsag_groups(fabric, std::move(groups), budget, on_discard)[0];
}

inline BsagGroupResult bsag(Fabric& fabric, std::vector<WorkerId> workers,
                            std::vector<SparseBlock> blocks, Index pre_budget,
                            Index budget,
                            const DiscardSink& on_discard =
                                null_discard_sink()) {
  std::vector<PositionGroup> groups{{std::move(workers), std::move(blocks)}};
  return bsag_groups(fabric, std::move(groups), {pre_budget}, budget,
                     on_discard)[0];
}

enum class SagMode { none, rsag, bsag };

inline const char* to_string(SagMode mode) {
  switch (mode) {
    case SagMode::none: return "none";
    case SagMode::rsag: return "rsag";
    case SagMode::bsag: return "bsag";
  }
  return "?";
}

struct CostRange {
  std::int64_t rounds = 0;
  std::int64_t scalars_low = 0;
  std::int64_t scalars_high = 0;  // == scalars_low for exact modes

  bool exact() const { return scalars_low == scalars_high; }
};

/// Closed-form total cost of a full synchronization at the given team
/// structure: reduce-scatter + team synchronization + the final
/// all-gather. Exact for none/rsag; an interval for bsag, whose transport
/// volume depends on the adaptive pre-selection budget and index overlap.
inline CostRange expected_cost_sag(std::int64_t workers, std::int64_t k,
                                   std::int64_t teams, SagMode mode) {
  if (workers < 1 || k < 1 || k % workers != 0) {
    throw config_error("expected_cost_sag: k must be divisible by P");
  }
  if (teams < 1 || workers % teams != 0) {
    throw config_error("expected_cost_sag: d must divide P");
  }
  const std::int64_t c = k / workers;
  const std::int64_t p = workers;
  const std::int64_t d = teams;
  switch (mode) {
    case SagMode::none: {
      if (d != 1) throw config_error("expected_cost_sag: none requires d=1");
      const std::int64_t scalars = 4 * c * (p - 1);
      return {2 * ceil_log2(p), scalars, scalars};
    }
    case SagMode::rsag: {
      if (d < 2 || !is_power_of_two(d)) {
        throw config_error("rsag requires power-of-two d");
      }
      const std::int64_t lg = exact_log2(d);
      const std::int64_t scalars = 2 * c * (2 * p - 2 * d) + 2 * c * d * lg;
      return {2 * ceil_log2(p / d) + lg, scalars, scalars};
    }
    case SagMode::bsag: {
      if (d < 2) throw config_error("bsag requires d >= 2");
      const std::int64_t m = p / d;
      const std::int64_t low = 2 * c * (d + m - 2);  // = 2k(d^2+P-2d)/(Pd)
      const std::int64_t high = 2 * c * (d * d + 2 * p - 3 * d);
      return {2 * ceil_log2(m) + ceil_log2(d), low, high};
    }
  }
  throw config_error("expected_cost_sag: unknown mode");
}

/// Per-phase interval for the bsag transport itself (the middle phase).
inline CostRange bsag_phase_cost(std::int64_t workers, std::int64_t k,
                                 std::int64_t teams) {
  if (teams < 2 || workers % teams != 0 || k % workers != 0) {
    throw config_error("bsag_phase_cost: invalid (P, k, d)");
  }
  const std::int64_t c = k / workers;
  const std::int64_t d = teams;
  return {ceil_log2(d), 2 * c * (d - 1), 2 * c * d * (d - 1)};
}

/// Table-row cost of the top-k all-gather baseline.
inline CostRange topka_cost(std::int64_t workers, std::int64_t k) {
  const std::int64_t scalars = 2 * (workers - 1) * k;
  return {ceil_log2(workers), scalars, scalars};
}

/// One line of the controller trace CSV.
inline void write_controller_trace_header(std::ostream& os) {
  os << "iteration,h,step,flag,N_t,L\n";
}

inline void write_controller_trace_row(std::ostream& os, std::int64_t iter,
                                       const HController& ctrl,
                                       std::int64_t n_t) {
  os << iter << ',' << ctrl.h() << ',' << ctrl.step() << ','
     << (ctrl.flag() ? 1 : 0) << ',' << n_t << ',' << ctrl.target() << '\n';
}

}  // namespace spardl
