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
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "spardl/collectives.hpp"
#include "spardl/error.hpp"
#include "spardl/fabric.hpp"
#include "spardl/pipeline.hpp"
#include "spardl/residual.hpp"
#include "spardl/sparse.hpp"

namespace spardl {

/// Sharded linear-regression instance: disjoint feature shards per worker,
/// labels from a hidden weight vector plus Gaussian noise. Deterministic
/// for a given seed. The global system is overdetermined (P*S > N) so the
/// least-squares optimum has a strictly positive loss to converge against.
struct SyntheticTask {
  std::uint64_t seed = 0;
  Index dimension = 0;          // N
  int workers = 0;              // P
  Index samples_per_worker = 0; // S
  double noise_sigma = 0.0;
  std::vector<double> true_weights;
  // features[w] is row-major S x N; labels[w] has S entries.
  std::vector<std::vector<double>> features;
  std::vector<std::vector<double>> labels;
};

inline SyntheticTask make_task(std::uint64_t seed, Index dimension,
                               int workers, Index samples_per_worker,
                               double noise_sigma) {
  SyntheticTask task;
  task.seed = seed;
  task.dimension = dimension;
  task.workers = workers;
  task.samples_per_worker = samples_per_worker;
  task.noise_sigma = noise_sigma;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dimension));
  task.true_weights.resize(static_cast<std::size_t>(dimension));
  for (double& v : task.true_weights) v = scale * normal(rng);
  task.features.resize(static_cast<std::size_t>(workers));
  task.labels.resize(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    auto& x = task.features[static_cast<std::size_t>(w)];
    auto& y = task.labels[static_cast<std::size_t>(w)];
    x.resize(static_cast<std::size_t>(samples_per_worker * dimension));
    y.resize(static_cast<std::size_t>(samples_per_worker));
    for (double& v : x) v = normal(rng);
    for (Index s = 0; s < samples_per_worker; ++s) {
      double dot = 0.0;
      const double* row =
          x.data() + static_cast<std::size_t>(s * dimension);
      for (Index j = 0; j < dimension; ++j) {
        dot += row[static_cast<std::size_t>(j)] *
               task.true_weights[static_cast<std::size_t>(j)];
      }
      y[static_cast<std::size_t>(s)] = dot + noise_sigma * normal(rng);
    }
  }
  return task;
}

/// Default desk-scale instance used by the command-line harness.
inline SyntheticTask make_default_task(std::uint64_t seed) {
  return make_task(seed, 1200, 4, 1200, 0.1);
}

/// Exact gradient of the mean squared error of the linear model on one
/// worker's shard, with the shard's sum of squared errors as a byproduct.
inline GradientVector local_gradient(const SyntheticTask& task, int worker,
                                     const std::vector<double>& weights,
                                     double* sum_squared_error = nullptr) {
  const Index n = task.dimension;
  const Index s_count = task.samples_per_worker;
  const auto& x = task.features[static_cast<std::size_t>(worker)];
  const auto& y = task.labels[static_cast<std::size_t>(worker)];
  GradientVector grad(n);
  double sse = 0.0;
  for (Index s = 0; s < s_count; ++s) {
    const double* row = x.data() + static_cast<std::size_t>(s * n);
    double dot = 0.0;
    for (Index j = 0; j < n; ++j) {
      dot += row[static_cast<std::size_t>(j)] *
             weights[static_cast<std::size_t>(j)];
    }
    const double r = dot - y[static_cast<std::size_t>(s)];
    sse += r * r;
    const double c = 2.0 * r / static_cast<double>(s_count);
    for (Index j = 0; j < n; ++j) {
      grad[j] += c * row[static_cast<std::size_t>(j)];
    }
  }
  if (sum_squared_error != nullptr) *sum_squared_error = sse;
  return grad;
}

/// Training loss over the union of all shards.
inline double global_loss(const SyntheticTask& task,
                          const std::vector<double>& weights) {
  double sse = 0.0;
  for (int w = 0; w < task.workers; ++w) {
    double part = 0.0;
    local_gradient(task, w, weights, &part);
    sse += part;
  }
  return sse / static_cast<double>(task.workers * task.samples_per_worker);
}

enum class Synchronizer { dense, topka, spardl };

inline const char* to_string(Synchronizer s) {
  switch (s) {
    case Synchronizer::dense: return "dense";
    case Synchronizer::topka: return "topka";
    case Synchronizer::spardl: return "spardl";
  }
  return "?";
}

struct TrainConfig {
  std::int64_t iterations = 500;
  double learning_rate = 0.05;
  double decay_factor = 0.1;
  std::int64_t decay_at = 400;
  double density = 0.01;  // k = density * N
  Synchronizer synchronizer = Synchronizer::spardl;
  // For spardl: teams / sag / residual / timing; dimension and k are
  // derived from the task and density.
  ClusterConfig cluster;
};

struct TrainResult {
  std::vector<double> loss;  // loss of the weights entering each iteration
  LedgerReport ledger;       // cumulative over all iterations
  std::vector<double> final_weights;
  std::string label;         // synchronizer[-residual] tag for CSV output
};

namespace detail {

/// Snaps a value to a fixed binary grid. Summing grid-aligned gradients is
/// exact in any association order, which keeps distributed reductions
/// bit-identical to the rank-ordered dense reference.
inline double snap_to_grid(double v) {
  return std::ldexp(std::nearbyint(std::ldexp(v, 24)), -24);
}

inline void snap_gradient(GradientVector& g) {
  for (double& v : g.values) v = snap_to_grid(v);
}

}  // namespace detail

/// Synchronous SGD over the task with the selected synchronizer. Every
/// worker applies the identical synchronized gradient; weight vectors are
/// compared bitwise after every iteration and any divergence aborts the
/// run.
inline TrainResult train(const SyntheticTask& task, const TrainConfig& config) {
  const int p = task.workers;
  const Index n = task.dimension;
  if (config.density <= 0.0 || config.density > 1.0) {
    throw config_error("density must be in (0, 1]");
  }
  const Index k = static_cast<Index>(std::llround(
      config.density * static_cast<double>(n)));
  if (k < 1 || k > n) throw config_error("density yields k outside [1, N]");

  ClusterConfig cluster = config.cluster;
  cluster.workers = p;
  cluster.dimension = n;
  cluster.k = k;

  Fabric fabric(p);
  std::vector<WorkerState> states;
  if (config.synchronizer == Synchronizer::spardl) {
    validate(cluster);
    states = make_worker_states(cluster);
  }

  // Local error feedback for the top-k all-gather baseline.
  std::vector<GradientVector> topka_carry(
      static_cast<std::size_t>(p), GradientVector(n));

  std::vector<std::vector<double>> weights(
      static_cast<std::size_t>(p),
      std::vector<double>(static_cast<std::size_t>(n), 0.0));

  TrainResult result;
  result.loss.reserve(static_cast<std::size_t>(config.iterations));
  result.label = to_string(config.synchronizer);
  if (config.synchronizer == Synchronizer::spardl) {
    result.label += std::string("-") + to_string(cluster.residual);
  }

  for (std::int64_t iter = 0; iter < config.iterations; ++iter) {
    const double lr = config.learning_rate *
                      (iter >= config.decay_at ? config.decay_factor : 1.0);

    double sse_total = 0.0;
    std::vector<GradientVector> grads(static_cast<std::size_t>(p));
    for (int w = 0; w < p; ++w) {
      double sse = 0.0;
      grads[static_cast<std::size_t>(w)] =
          local_gradient(task, w, weights[static_cast<std::size_t>(w)], &sse);
      detail::snap_gradient(grads[static_cast<std::size_t>(w)]);
      sse_total += sse;
    }
    result.loss.push_back(
        sse_total / static_cast<double>(p * task.samples_per_worker));

    switch (config.synchronizer) {
      case Synchronizer::dense: {
        GradientVector sum = dense_all_reduce_reference(grads);
        const double step = lr / static_cast<double>(p);
        for (int w = 0; w < p; ++w) {
          auto& wv = weights[static_cast<std::size_t>(w)];
          for (Index j = 0; j < n; ++j) {
            wv[static_cast<std::size_t>(j)] -= step * sum[j];
          }
        }
        break;
      }
      case Synchronizer::topka: {
        std::vector<GradientVector> accumulated(static_cast<std::size_t>(p));
        for (int w = 0; w < p; ++w) {
          accumulated[static_cast<std::size_t>(w)] = GradientVector(n);
          for (Index j = 0; j < n; ++j) {
            accumulated[static_cast<std::size_t>(w)][j] =
                grads[static_cast<std::size_t>(w)][j] +
                topka_carry[static_cast<std::size_t>(w)][j];
          }
        }
        auto synced = topka_baseline(fabric, accumulated, k);
        for (int w = 0; w < p; ++w) {
          // Remainder of the local selection feeds back next iteration.
          auto selected = top_k_select_slice(
              accumulated[static_cast<std::size_t>(w)], 0, {0, n}, k)
                              .selected;
          auto& carry = topka_carry[static_cast<std::size_t>(w)];
          carry = accumulated[static_cast<std::size_t>(w)];
          for (const Entry& e : selected.entries) carry[e.index] = 0.0;
        }
        const double step = lr / static_cast<double>(p);
        for (int w = 0; w < p; ++w) {
          auto& wv = weights[static_cast<std::size_t>(w)];
          for (const Entry& e : synced[static_cast<std::size_t>(w)].entries) {
            wv[static_cast<std::size_t>(e.index)] -= step * e.value;
          }
        }
        break;
      }
      case Synchronizer::spardl: {
        RunResult run = spardl_all_reduce(fabric, cluster, grads, states);
        if (!run.consistent) {
          throw consistency_error("workers diverged during synchronization");
        }
        const double step = lr / static_cast<double>(p);
        for (int w = 0; w < p; ++w) {
          auto& wv = weights[static_cast<std::size_t>(w)];
          for (const Entry& e :
               run.per_worker[static_cast<std::size_t>(w)].entries) {
            wv[static_cast<std::size_t>(e.index)] -= step * e.value;
          }
        }
        break;
      }
    }

    for (int w = 1; w < p; ++w) {
      if (weights[static_cast<std::size_t>(w)] != weights[0]) {
        throw consistency_error("model replicas diverged at iteration " +
                                std::to_string(iter));
      }
    }
  }

  result.ledger = fabric.report();
  result.final_weights = weights[0];
  return result;
}

inline void write_loss_csv_header(std::ostream& os) {
  os << "iteration,loss,synchronizer,seed\n";
}

inline void write_loss_csv_rows(std::ostream& os, const TrainResult& result,
                                std::uint64_t seed) {
  for (std::size_t i = 0; i < result.loss.size(); ++i) {
    os << i << ',' << result.loss[i] << ',' << result.label << ',' << seed
       << '\n';
  }
  // Ledger totals as a trailing comment row.
  os << "# ledger synchronizer=" << result.label << " seed=" << seed
     << " max_rounds=" << result.ledger.max_rounds
     << " max_scalars_received=" << result.ledger.max_scalars_received
     << '\n';
}

}  // namespace spardl
