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

#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "spardl/collectives.hpp"
#include "spardl/error.hpp"
#include "spardl/fabric.hpp"
#include "spardl/mathutil.hpp"
#include "spardl/reduce_scatter.hpp"
#include "spardl/residual.hpp"
#include "spardl/sag.hpp"
#include "spardl/sparse.hpp"

namespace spardl {

inline const char* to_string(SrsTiming timing) {
  return timing == SrsTiming::optimized ? "optimized" : "naive";
}

struct ClusterConfig {
  std::int64_t workers = 1;      // P
  std::int64_t dimension = 1;    // N
  std::int64_t k = 1;            // total selection count
  std::int64_t teams = 1;        // d
  SagMode sag = SagMode::none;
  ResidualMode residual = ResidualMode::gres;
  SrsTiming timing = SrsTiming::optimized;
  std::uint64_t seed = 0;

  std::int64_t team_size() const { return workers / teams; }
  /// Per-block selection budget L = d*k/P; equals k/P for a single team.
  std::int64_t block_budget() const { return teams * k / workers; }
};

inline void validate(const ClusterConfig& cfg) {
  if (cfg.workers < 1) throw config_error("P must be >= 1");
  if (cfg.dimension < 1) throw config_error("N must be >= 1");
  if (cfg.k < 1 || cfg.k > cfg.dimension) {
    throw config_error("k must satisfy 1 <= k <= N");
  }
  if (cfg.k % cfg.workers != 0) {
    throw config_error("k must be divisible by P");
  }
  if (cfg.teams < 1 || cfg.workers % cfg.teams != 0) {
    throw config_error("d must divide P");
  }
  if (cfg.sag == SagMode::none && cfg.teams != 1) {
    throw config_error("sag=none requires d=1");
  }
  if (cfg.sag != SagMode::none && cfg.teams == 1) {
    throw config_error("d=1 requires sag=none");
  }
  if (cfg.sag == SagMode::rsag && !is_power_of_two(cfg.teams)) {
    throw config_error("rsag requires power-of-two d");
  }
  if (cfg.team_size() > cfg.dimension) {
    throw config_error("N must allow P/d blocks (N >= P/d)");
  }
}

/// Per-worker state that persists across iterations: the residual store
/// and, under bsag, the adaptive pre-selection controller.
struct WorkerState {
  ResidualStore residual;
  std::optional<HController> controller;
};

inline std::vector<WorkerState> make_worker_states(const ClusterConfig& cfg) {
  validate(cfg);
  std::vector<WorkerState> states;
  states.reserve(static_cast<std::size_t>(cfg.workers));
  for (std::int64_t w = 0; w < cfg.workers; ++w) {
    WorkerState ws{ResidualStore(cfg.residual, cfg.dimension), std::nullopt};
    if (cfg.sag == SagMode::bsag) {
      ws.controller.emplace(cfg.workers, cfg.k, cfg.teams);
    }
    states.push_back(std::move(ws));
  }
  return states;
}

/// True when all workers hold bit-identical synchronized gradients.
inline bool verify_consistency(
    const std::vector<GlobalSparseGradient>& per_worker) {
  for (std::size_t w = 1; w < per_worker.size(); ++w) {
    if (!(per_worker[w] == per_worker[0])) return false;
  }
  return true;
}

struct PhaseCost {
  std::int64_t rounds = 0;
  std::int64_t scalars = 0;
};

struct RunResult {
  GlobalSparseGradient global;
  std::vector<GlobalSparseGradient> per_worker;
  bool consistent = false;
  bool conservation_applicable = false;  // only gres claims conservation
  double conservation_error = 0.0;       // max per-coordinate relative error
  LedgerReport ledger;
  PhaseCost srs_phase;
  PhaseCost sag_phase;
  PhaseCost gather_phase;
  CostRange predicted;
  std::vector<std::int64_t> union_sizes;  // bsag N_t per position group
};

/// Closed-form prediction matching this configuration (exact for
/// none/rsag, an interval for bsag).
inline CostRange expected_cost(const ClusterConfig& cfg) {
  validate(cfg);
  return expected_cost_sag(cfg.workers, cfg.k, cfg.teams, cfg.sag);
}

/// The full sparse All-Reduce: residual add, dividing with per-block
/// selection, reduce-scatter inside each team, cross-team synchronization,
/// all-gather inside each team, and residual finalization. Every worker
/// ends holding an identical sparse gradient of at most k entries.
inline RunResult spardl_all_reduce(Fabric& fabric, const ClusterConfig& cfg,
                                   const std::vector<GradientVector>& grads,
                                   std::vector<WorkerState>& states) {
  validate(cfg);
  const int p = static_cast<int>(cfg.workers);
  if (fabric.worker_count() != p ||
      grads.size() != static_cast<std::size_t>(p) ||
      states.size() != static_cast<std::size_t>(p)) {
    throw config_error("worker count mismatch between fabric/inputs/states");
  }
  const int m = static_cast<int>(cfg.team_size());
  const int d = static_cast<int>(cfg.teams);
  const Index budget = cfg.block_budget();
  const BlockPartition part = partition(cfg.dimension, m);

  DiscardSink sink = [&states](WorkerId w, int block_id,
                               const SparseBlock& discarded, double weight) {
    states[static_cast<std::size_t>(w)].residual.record_inproc(block_id,
                                                               discarded,
                                                               weight);
  };

  // 1) previous residual in, snapshot, 2) divide and pre-select.
  std::vector<GradientVector> combined(static_cast<std::size_t>(p));
  std::vector<std::vector<SparseBlock>> divided(static_cast<std::size_t>(p));
  for (int w = 0; w < p; ++w) {
    auto& store = states[static_cast<std::size_t>(w)].residual;
    if (store.mode() != cfg.residual) {
      throw config_error("residual store mode differs from configuration");
    }
    combined[static_cast<std::size_t>(w)] =
        store.apply(grads[static_cast<std::size_t>(w)]);
    store.begin_iteration(combined[static_cast<std::size_t>(w)], part);
    divided[static_cast<std::size_t>(w)].reserve(static_cast<std::size_t>(m));
    for (int b = 0; b < m; ++b) {
      TopKResult split = top_k_select_slice(
          combined[static_cast<std::size_t>(w)], b, part.range_of(b), budget);
      if (!split.discarded.empty()) {
        store.record_dividing_remainder(split.discarded);
        store.record_inproc(b, split.discarded, 1.0);
      }
      divided[static_cast<std::size_t>(w)].push_back(
          std::move(split.selected));
    }
  }

  // 3) reduce-scatter within each team (teams are contiguous rank ranges).
  auto before_srs = fabric.ledger();
  std::vector<SrsTeam> teams(static_cast<std::size_t>(d));
  for (int t = 0; t < d; ++t) {
    auto& team = teams[static_cast<std::size_t>(t)];
    for (int i = 0; i < m; ++i) {
      const int w = t * m + i;
      team.workers.push_back(w);
      team.blocks.push_back(std::move(divided[static_cast<std::size_t>(w)]));
    }
  }
  auto reduced = run_srs_teams(fabric, std::move(teams), budget, cfg.timing,
                               sink);
  auto srs_delta = fabric.delta_since(before_srs);

  // 4) cross-team synchronization of each position group.
  auto before_sag = fabric.ledger();
  std::vector<std::int64_t> union_sizes;
  if (d > 1) {
    std::vector<PositionGroup> groups(static_cast<std::size_t>(m));
    for (int g = 0; g < m; ++g) {
      auto& group = groups[static_cast<std::size_t>(g)];
      for (int t = 0; t < d; ++t) {
        group.workers.push_back(t * m + g);
        group.blocks.push_back(std::move(
            reduced[static_cast<std::size_t>(t)][static_cast<std::size_t>(g)]));
      }
    }
    if (cfg.sag == SagMode::rsag) {
      auto synced = rsag_groups(fabric, std::move(groups), budget, sink);
      for (int g = 0; g < m; ++g) {
        for (int t = 0; t < d; ++t) {
          reduced[static_cast<std::size_t>(t)][static_cast<std::size_t>(g)] =
              std::move(synced[static_cast<std::size_t>(g)]
                              [static_cast<std::size_t>(t)]);
        }
      }
    } else {
      std::vector<Index> pre_budgets(static_cast<std::size_t>(m));
      for (int g = 0; g < m; ++g) {
        const auto& group = groups[static_cast<std::size_t>(g)];
        Index h = 0;
        for (std::size_t i = 0; i < group.workers.size(); ++i) {
          const auto& ctrl =
              states[static_cast<std::size_t>(group.workers[i])].controller;
          if (!ctrl.has_value()) {
            throw config_error("bsag requires controller state per worker");
          }
          const Index b = ctrl->budget();
          if (i == 0) {
            h = b;
          } else if (b != h) {
            throw consistency_error(
                "position group controllers disagree on h");
          }
        }
        pre_budgets[static_cast<std::size_t>(g)] = h;
      }
      auto synced = bsag_groups(fabric, std::move(groups), pre_budgets,
                                budget, sink);
      union_sizes.reserve(static_cast<std::size_t>(m));
      for (int g = 0; g < m; ++g) {
        const auto& res = synced[static_cast<std::size_t>(g)];
        union_sizes.push_back(res.union_size);
        for (int t = 0; t < d; ++t) {
          const int w = t * m + g;
          states[static_cast<std::size_t>(w)].controller->observe(
              res.union_size);
          reduced[static_cast<std::size_t>(t)][static_cast<std::size_t>(g)] =
              res.blocks[static_cast<std::size_t>(t)];
        }
      }
    }
  }
  auto sag_delta = fabric.delta_since(before_sag);

  // 5) all-gather the position blocks within each team.
  auto before_gather = fabric.ledger();
  std::vector<GroupGather> gathers(static_cast<std::size_t>(d));
  for (int t = 0; t < d; ++t) {
    auto& gather = gathers[static_cast<std::size_t>(t)];
    for (int i = 0; i < m; ++i) {
      gather.workers.push_back(t * m + i);
      gather.blocks.push_back(std::move(
          reduced[static_cast<std::size_t>(t)][static_cast<std::size_t>(i)]));
    }
  }
  auto gathered = detail::bruck_all_gather_multi(fabric, gathers);
  auto gather_delta = fabric.delta_since(before_gather);

  // 6) assemble, audit, finalize.
  RunResult result;
  result.per_worker.resize(static_cast<std::size_t>(p));
  for (int t = 0; t < d; ++t) {
    for (int i = 0; i < m; ++i) {
      const int w = t * m + i;
      GlobalSparseGradient& global =
          result.per_worker[static_cast<std::size_t>(w)];
      global.n = cfg.dimension;
      for (int b = 0; b < m; ++b) {
        const SparseBlock& block =
            gathered[static_cast<std::size_t>(t)][static_cast<std::size_t>(i)]
                    [static_cast<std::size_t>(b)];
        global.entries.insert(global.entries.end(), block.entries.begin(),
                              block.entries.end());
      }
      if (global.nnz() > cfg.k) {
        throw error("global gradient exceeded k entries");
      }
    }
  }
  result.consistent = verify_consistency(result.per_worker);
  result.global = result.per_worker[0];
  result.union_sizes = std::move(union_sizes);

  for (int w = 0; w < p; ++w) {
    states[static_cast<std::size_t>(w)].residual.finalize(result.global);
  }

  result.conservation_applicable = cfg.residual == ResidualMode::gres;
  double max_err = 0.0;
  {
    std::vector<double> lhs(static_cast<std::size_t>(cfg.dimension), 0.0);
    for (int w = 0; w < p; ++w) {
      for (Index i = 0; i < cfg.dimension; ++i) {
        lhs[static_cast<std::size_t>(i)] +=
            combined[static_cast<std::size_t>(w)][i];
      }
    }
    std::vector<double> rhs(static_cast<std::size_t>(cfg.dimension), 0.0);
    for (const Entry& e : result.global.entries) {
      rhs[static_cast<std::size_t>(e.index)] += e.value;
    }
    for (int w = 0; w < p; ++w) {
      const GradientVector& carry =
          states[static_cast<std::size_t>(w)].residual.carry();
      for (Index i = 0; i < cfg.dimension; ++i) {
        rhs[static_cast<std::size_t>(i)] += carry[i];
      }
    }
    for (Index i = 0; i < cfg.dimension; ++i) {
      const double denom =
          std::max(1.0, std::fabs(lhs[static_cast<std::size_t>(i)]));
      max_err = std::max(
          max_err, std::fabs(lhs[static_cast<std::size_t>(i)] -
                             rhs[static_cast<std::size_t>(i)]) / denom);
    }
  }
  result.conservation_error = max_err;

  result.ledger = fabric.report();
  result.srs_phase = {srs_delta.rounds, srs_delta.scalars_received};
  result.sag_phase = {sag_delta.rounds, sag_delta.scalars_received};
  result.gather_phase = {gather_delta.rounds, gather_delta.scalars_received};
  result.predicted = expected_cost(cfg);
  return result;
}

inline void write_run_report_header(std::ostream& os) {
  os << "P,N,k,d,sag,residual,timing,seed,max_rounds,max_scalars,"
        "predicted_rounds,predicted_scalars_low,predicted_scalars_high,"
        "consistent,conservation_error\n";
}

inline void write_run_report_row(std::ostream& os, const ClusterConfig& cfg,
                                 const RunResult& result) {
  os << cfg.workers << ',' << cfg.dimension << ',' << cfg.k << ','
     << cfg.teams << ',' << to_string(cfg.sag) << ','
     << to_string(cfg.residual) << ',' << to_string(cfg.timing) << ','
     << cfg.seed << ',' << result.ledger.max_rounds << ','
     << result.ledger.max_scalars_received << ',' << result.predicted.rounds
     << ',' << result.predicted.scalars_low << ','
     << result.predicted.scalars_high << ','
     << (result.consistent ? 1 : 0) << ',' << result.conservation_error
     << '\n';
}

}  // namespace spardl
