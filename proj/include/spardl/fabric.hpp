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
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "spardl/error.hpp"
#include "spardl/sparse.hpp"

namespace spardl {

/// Worker ids are 0-indexed integers in [0, P).
using WorkerId = int;

/// Per-worker cost in the alpha-beta model: `rounds` counts transmission
/// rounds the worker took part in (alpha units) and `scalars_received`
/// counts scalars delivered to it (beta units; two per COO entry).
struct WorkerCost {
  std::int64_t rounds = 0;
  std::int64_t scalars_received = 0;

  bool operator==(const WorkerCost&) const = default;
};

struct LedgerReport {
  std::vector<WorkerCost> per_worker;
  std::int64_t max_rounds = 0;
  std::int64_t max_scalars_received = 0;
};

/// Deterministic in-process message fabric for P logical workers.
///
/// Communication happens in lockstep rounds: a round is one `exchange`
/// call, which delivers every message before any worker proceeds. No loss,
/// reordering, or delay is modeled. Every worker that sends or receives in
/// a round pays one latency unit; receivers additionally pay the scalar
/// volume of their incoming payload.
class Fabric {
 public:
  struct Send {
    WorkerId target = 0;
    std::vector<SparseBlock> payload;
  };

  /// One entry per worker; disengaged means the worker stays silent.
  using RoundPlan = std::vector<std::optional<Send>>;

  explicit Fabric(int worker_count)
      : costs_(static_cast<std::size_t>(worker_count)) {
    if (worker_count < 1) throw config_error("fabric needs >= 1 worker");
  }

  int worker_count() const { return static_cast<int>(costs_.size()); }

  /// Executes one lockstep round. At most one message may target a worker;
  /// a duplicate target is a bug in the calling schedule, not a runtime
  /// condition, and aborts the run.
  std::vector<std::vector<SparseBlock>> exchange(RoundPlan plan) {
    const int p = worker_count();
    if (static_cast<int>(plan.size()) != p) {
      throw schedule_violation_error("round plan size != worker count");
    }
    std::vector<std::vector<SparseBlock>> inbox(plan.size());
    std::vector<bool> targeted(plan.size(), false);
    std::vector<bool> participated(plan.size(), false);
    for (WorkerId source = 0; source < p; ++source) {
      auto& send = plan[static_cast<std::size_t>(source)];
      if (!send.has_value()) continue;
      const WorkerId target = send->target;
      if (target < 0 || target >= p) {
        throw schedule_violation_error("message target out of range: " +
                                       std::to_string(target));
      }
      if (targeted[static_cast<std::size_t>(target)]) {
        throw schedule_violation_error(
            "two messages target worker " + std::to_string(target) +
            " in one round");
      }
      targeted[static_cast<std::size_t>(target)] = true;
      participated[static_cast<std::size_t>(source)] = true;
      participated[static_cast<std::size_t>(target)] = true;
      // Volume is recomputed from the payload, never caller-supplied.
      std::int64_t volume = 0;
      for (const SparseBlock& b : send->payload) volume += 2 * b.nnz();
      costs_[static_cast<std::size_t>(target)].scalars_received += volume;
      inbox[static_cast<std::size_t>(target)] = std::move(send->payload);
    }
    for (std::size_t w = 0; w < participated.size(); ++w) {
      if (participated[w]) costs_[w].rounds += 1;
    }
    return inbox;
  }

  const std::vector<WorkerCost>& ledger() const { return costs_; }

  LedgerReport report() const {
    LedgerReport rep;
    rep.per_worker = costs_;
    for (const WorkerCost& c : costs_) {
      rep.max_rounds = std::max(rep.max_rounds, c.rounds);
      rep.max_scalars_received =
          std::max(rep.max_scalars_received, c.scalars_received);
    }
    return rep;
  }

  /// Cost accumulated since an earlier snapshot, as max over workers.
  WorkerCost delta_since(const std::vector<WorkerCost>& snapshot) const {
    WorkerCost delta;
    for (std::size_t w = 0; w < costs_.size(); ++w) {
      delta.rounds = std::max(delta.rounds, costs_[w].rounds -
                                                snapshot[w].rounds);
      delta.scalars_received =
          std::max(delta.scalars_received,
                   costs_[w].scalars_received - snapshot[w].scalars_received);
    }
    return delta;
  }

 private:
  std::vector<WorkerCost> costs_;
};

inline void write_ledger_csv(std::ostream& os, const Fabric& fabric) {
  os << "worker_id,rounds,scalars_received\n";
  const auto& ledger = fabric.ledger();
  for (std::size_t w = 0; w < ledger.size(); ++w) {
    os << w << ',' << ledger[w].rounds << ',' << ledger[w].scalars_received
       << '\n';
  }
}

}  // namespace spardl
