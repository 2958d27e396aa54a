#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "gpgraph/array.hpp"
#include "gpgraph/errors.hpp"
#include "gpgraph/ops.hpp"
#include "gpgraph/partition.hpp"
#include "gpgraph/tape.hpp"

namespace gpgraph {

// Per-timestep interaction graph. `weights` holds the raw edge weights
// (no self-loops); `adjacency` is D^-1/2 (W + I) D^-1/2, computed once from
// them. Both are T x n x n. Node features travel separately so the same graph
// can be encoded with different inputs.
struct InteractionGraph {
  std::size_t node_count = 0;
  Array weights;
  Array adjacency;
};

// Raw inverse-distance weights between tracks (N x T x 2): 1/|p_i - p_j| per
// step, zero on the diagonal and for coincident positions.
inline Array inverse_distance_weights(const Array& pos) {
  require_rank(pos, 3, "inverse_distance_weights");
  if (pos.dim(2) != 2) {
    throw DimensionError("inverse_distance_weights: expected N x T x 2, got " +
                         shape_string(pos.shape()));
  }
  const std::size_t n = pos.dim(0), tt = pos.dim(1);
  Array w({tt, n, n});
  for (std::size_t t = 0; t < tt; ++t)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        const double dist = std::hypot(pos.at(i, t, 0) - pos.at(j, t, 0),
                                       pos.at(i, t, 1) - pos.at(j, t, 1));
        const double v = dist > 0 ? 1.0 / dist : 0.0;
        w.at(t, i, j) = v;
        w.at(t, j, i) = v;
      }
  return w;
}

inline Array normalize_adjacency(const Array& weights) {
  require_rank(weights, 3, "normalize_adjacency");
  const std::size_t tt = weights.dim(0), n = weights.dim(1);
  Array a({tt, n, n});
  std::vector<double> inv_sqrt_deg(n);
  for (std::size_t t = 0; t < tt; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      double deg = 1.0;
      for (std::size_t j = 0; j < n; ++j)
        if (j != i) deg += weights.at(t, i, j);
      inv_sqrt_deg[i] = 1.0 / std::sqrt(deg);
    }
    // upper triangle mirrored, so the result is exactly symmetric
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i; j < n; ++j) {
        const double w = i == j ? 1.0 : weights.at(t, i, j);
        a.at(t, i, j) = a.at(t, j, i) = w * inv_sqrt_deg[i] * inv_sqrt_deg[j];
      }
  }
  return a;
}

inline InteractionGraph graph_from_weights(Array weights) {
  InteractionGraph g;
  g.node_count = weights.rank() == 3 ? weights.dim(1) : 0;
  g.adjacency = normalize_adjacency(weights);
  g.weights = std::move(weights);
  return g;
}

// Complete agent-wise graph over absolute positions N x T x 2.
inline InteractionGraph ped_graph(const Array& obs) {
  return graph_from_weights(inverse_distance_weights(obs));
}

// Intra-group graph: the agent graph with every cross-group edge removed.
inline InteractionGraph member_graph(const InteractionGraph& g_ped, const GroupPartition& part) {
  if (part.universe_size() != g_ped.node_count) {
    throw PartitionError("member_graph: partition over " + std::to_string(part.universe_size()) +
                         " pedestrians applied to a graph of " +
                         std::to_string(g_ped.node_count));
  }
  Array w = g_ped.weights;
  const std::size_t n = g_ped.node_count;
  for (std::size_t t = 0; t < w.dim(0); ++t)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (!part.same_group(i, j)) w.at(t, i, j) = 0.0;
  return graph_from_weights(std::move(w));
}

// Average pooling of member rows into one row per group.
inline Var group_pool(Var x, const GroupPartition& part) { return segment_mean(x, part); }

inline Array group_pool(const Array& x, const GroupPartition& part) {
  Tape t;
  return group_pool(t.constant(x), part).value();
}

// Copies each group row back to all of its members.
inline Var group_unpool(Var z, const GroupPartition& part) {
  if (z.value().rank() < 1 || z.shape()[0] != part.group_count()) {
    throw PartitionError("group_unpool: " + std::to_string(part.group_count()) +
                         " groups but features " + shape_string(z.shape()));
  }
  return gather_rows(z, part.membership());
}

inline Array group_unpool(const Array& z, const GroupPartition& part) {
  Tape t;
  return group_unpool(t.constant(z), part).value();
}

// Inter-group graph over member-mean positions.
inline InteractionGraph group_graph(const Array& obs, const GroupPartition& part) {
  return ped_graph(group_pool(obs, part));
}

}  // namespace gpgraph
