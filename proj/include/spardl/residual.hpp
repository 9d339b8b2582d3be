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
#include <cstdint>
#include <string>
#include <vector>

#include "spardl/error.hpp"
#include "spardl/sparse.hpp"

namespace spardl {

/// Which discarded gradients are carried to the next iteration.
///
///  - gres: everything. Indexes present in the final global gradient take
///    the in-procedure discards accumulated at this worker; all other
///    indexes keep their pristine pre-division value (local and
///    end-procedure residual).
///  - pres: the pristine copy zeroed at the final global indexes;
///    in-procedure discards are dropped.
///  - lres: only the remainder of the initial per-block selection; every
///    transmission-phase discard is dropped.
enum class ResidualMode { gres, pres, lres };

inline const char* to_string(ResidualMode mode) {
  switch (mode) {
    case ResidualMode::gres: return "gres";
    case ResidualMode::pres: return "pres";
    case ResidualMode::lres: return "lres";
  }
  return "?";
}

/// Per-worker residual state for one synchronization. Lifecycle per
/// iteration: apply_residual consumes the carried residual, begin_iteration
/// snapshots the combined gradients, record_* calls accumulate discards,
/// finalize produces the residual carried to the next iteration.
class ResidualStore {
 public:
  ResidualStore(ResidualMode mode, Index n)
      : mode_(mode), n_(n), carry_(n) {}

  ResidualMode mode() const { return mode_; }
  Index dimension() const { return n_; }
  const GradientVector& carry() const { return carry_; }

  /// Residual from the previous iteration plus the fresh gradients. The
  /// carried residual is consumed.
  GradientVector apply(const GradientVector& gradients) {
    if (gradients.size() != n_) {
      throw config_error("apply_residual: dimension mismatch");
    }
    GradientVector combined = gradients;
    for (Index i = 0; i < n_; ++i) combined[i] += carry_[i];
    carry_ = GradientVector(n_);
    return combined;
  }

  /// Snapshots the combined gradients (Algorithm state G_copy) and resets
  /// the per-block discard accumulators.
  void begin_iteration(const GradientVector& combined,
                       const BlockPartition& part) {
    if (in_iteration_) {
      throw state_error("begin_iteration called twice without finalize");
    }
    if (combined.size() != n_ || part.n != n_) {
      throw config_error("begin_iteration: dimension mismatch");
    }
    g_copy_ = combined;
    part_ = part;
    xi_.assign(static_cast<std::size_t>(part.block_count), SparseBlock{});
    for (int b = 0; b < part.block_count; ++b) {
      xi_[static_cast<std::size_t>(b)].block_id = b;
      xi_[static_cast<std::size_t>(b)].range = part.range_of(b);
    }
    dividing_remainder_ = GradientVector(n_);
    in_iteration_ = true;
  }

  /// Remembers the part of the local gradient that the initial per-block
  /// selection left behind (the lres source).
  void record_dividing_remainder(const SparseBlock& remainder) {
    require_in_iteration("record_dividing_remainder");
    for (const Entry& e : remainder.entries) dividing_remainder_[e.index] = e.value;
  }

  /// Accumulates weight * discarded into this worker's in-procedure
  /// residual for the block. Weight 1 records a full discard; fractional
  /// weights split a discard that several workers observed identically.
  void record_inproc(int block_id, const SparseBlock& discarded,
                     double weight) {
    require_in_iteration("record_inproc");
    if (block_id < 0 || block_id >= part_.block_count) {
      throw config_error("record_inproc: unknown block id");
    }
    if (weight <= 0.0 || weight > 1.0) {
      throw config_error("record_inproc: weight must be in (0, 1]");
    }
    auto& acc = xi_[static_cast<std::size_t>(block_id)];
    for (const Entry& e : discarded.entries) {
      if (!acc.range.contains(e.index)) {
        throw config_error("record_inproc: index " + std::to_string(e.index) +
                           " outside block range");
      }
    }
    SparseBlock scaled = scale(discarded, weight);
    scaled.block_id = block_id;
    scaled.range = acc.range;
    acc = merge_add(acc, scaled);
  }

  /// Computes the residual carried to the next iteration from the final
  /// synchronized gradient. May be called once per iteration.
  const GradientVector& finalize(const GlobalSparseGradient& final_global) {
    require_in_iteration("finalize");
    switch (mode_) {
      case ResidualMode::gres: {
        carry_ = g_copy_;
        for (const Entry& e : final_global.entries) {
          carry_[e.index] = xi_value(e.index);
        }
        break;
      }
      case ResidualMode::pres: {
        carry_ = g_copy_;
        for (const Entry& e : final_global.entries) carry_[e.index] = 0.0;
        break;
      }
      case ResidualMode::lres: {
        carry_ = dividing_remainder_;
        break;
      }
    }
    in_iteration_ = false;
    return carry_;
  }

  /// In-procedure accumulator value at one index (0 when absent).
  double xi_value(Index index) const {
    const auto& acc = xi_[static_cast<std::size_t>(part_.block_of(index))];
    auto it = std::lower_bound(
        acc.entries.begin(), acc.entries.end(), index,
        [](const Entry& e, Index i) { return e.index < i; });
    if (it != acc.entries.end() && it->index == index) return it->value;
    return 0.0;
  }

 private:
  void require_in_iteration(const char* op) const {
    if (!in_iteration_) {
      throw state_error(std::string(op) + " outside an iteration");
    }
  }

  ResidualMode mode_;
  Index n_;
  GradientVector carry_;
  GradientVector g_copy_;
  GradientVector dividing_remainder_;
  std::vector<SparseBlock> xi_;
  BlockPartition part_;
  bool in_iteration_ = false;
};

/// Free-function spellings matching the operation names used elsewhere.
inline GradientVector apply_residual(const GradientVector& gradients,
                                     ResidualStore& store) {
  return store.apply(gradients);
}

inline void record_inproc(ResidualStore& store, int block_id,
                          const SparseBlock& discarded, double weight) {
  store.record_inproc(block_id, discarded, weight);
}

inline const GradientVector& finalize(ResidualStore& store,
                                      const GlobalSparseGradient& final_global) {
  return store.finalize(final_global);
}

}  // namespace spardl
