#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "gpgraph/array.hpp"
#include "gpgraph/errors.hpp"
#include "gpgraph/ops.hpp"
#include "gpgraph/partition.hpp"
#include "gpgraph/tape.hpp"

namespace gpgraph {

// Leaf var of a trainable array together with the array it updates.
struct BoundParameter {
  Array* target = nullptr;
  Var var;
};
using ParameterBindings = std::vector<BoundParameter>;

inline Var bind_parameter(Tape& tape, Array& value, ParameterBindings* out) {
  Var v = tape.leaf(value, out != nullptr);
  if (out) out->push_back({&value, v});
  return v;
}

// PyTorch-style default: U(-g/sqrt(fan_in), g/sqrt(fan_in)) with g = 1.
inline Array uniform_init(Shape shape, std::size_t fan_in, std::mt19937_64& rng,
                          double gain = 1.0) {
  const double bound = gain / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> u(-bound, bound);
  Array a(std::move(shape));
  for (auto& v : a.values()) v = u(rng);
  return a;
}

inline constexpr double kInitialThreshold = 1.0;
inline constexpr double kDefaultTemperature = 0.1;
inline constexpr double kInitialSlope = 0.25;
// He-uniform scale for the grouping convs. With the default scale embedding
// distances come out ~0.1 on walking-speed input, so pi = 1 would merge every
// pedestrian at the start; at this scale it pools roughly half the nodes.
inline constexpr double kEmbedGain = 2.449489742783178;  // sqrt(6)

// ---------------------------------------------------------------------------
// Union-find over pedestrian indices.

class UnionFind {
 public:
  explicit UnionFind(std::size_t n) : parent_(n), size_(n, 1) {
    std::iota(parent_.begin(), parent_.end(), std::size_t{0});
  }

  std::size_t find(std::size_t x) {
    std::size_t root = x;
    while (parent_[root] != root) root = parent_[root];
    while (parent_[x] != root) {
      const std::size_t next = parent_[x];
      parent_[x] = root;
      x = next;
    }
    return root;
  }

  // Returns false when a and b were already joined.
  bool unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    if (size_[a] < size_[b]) std::swap(a, b);
    parent_[b] = a;
    size_[a] += size_[b];
    --components_delta_;
    return true;
  }

  std::size_t components() const noexcept {
    return static_cast<std::size_t>(static_cast<std::ptrdiff_t>(parent_.size()) +
                                    components_delta_);
  }

  GroupPartition partition() {
    std::vector<std::size_t> labels(parent_.size());
    for (std::size_t i = 0; i < parent_.size(); ++i) labels[i] = find(i);
    return GroupPartition::from_labels(labels);
  }

 private:
  std::vector<std::size_t> parent_;
  std::vector<std::size_t> size_;
  std::ptrdiff_t components_delta_ = 0;
};

// ---------------------------------------------------------------------------
// Parameters of the grouping embedding and threshold.

struct GroupParams {
  static constexpr std::size_t kKernel = 3;
  static constexpr std::size_t kChannels = 16;

  Array conv1_kernel;  // 3 x 2 x 16
  Array conv1_bias;    // 16
  Array conv1_slope;   // 1
  Array conv2_kernel;  // 3 x 16 x 16
  Array conv2_bias;    // 16
  Array conv2_slope;   // 1
  Array threshold;     // 1, the learnable pi
  double temperature = kDefaultTemperature;

  static GroupParams init(std::mt19937_64& rng, double pi = kInitialThreshold,
                          double tau = kDefaultTemperature) {
    if (!(tau > 0)) throw ConfigError("temperature must be positive");
    GroupParams p;
    p.conv1_kernel = uniform_init({kKernel, 2, kChannels}, kKernel * 2, rng, kEmbedGain);
    p.conv1_bias = uniform_init({kChannels}, kKernel * 2, rng, kEmbedGain);
    p.conv1_slope = Array::scalar(kInitialSlope);
    p.conv2_kernel = uniform_init({kKernel, kChannels, kChannels}, kKernel * kChannels, rng, kEmbedGain);
    p.conv2_bias = uniform_init({kChannels}, kKernel * kChannels, rng, kEmbedGain);
    p.conv2_slope = Array::scalar(kInitialSlope);
    p.threshold = Array::scalar(pi);
    p.temperature = tau;
    return p;
  }

  double pi() const { return threshold[0]; }

  // Visits every trainable array with a stable name.
  template <typename Self, typename F>
  static void visit(Self& self, F&& f) {
    f("group.conv1.kernel", self.conv1_kernel);
    f("group.conv1.bias", self.conv1_bias);
    f("group.conv1.slope", self.conv1_slope);
    f("group.conv2.kernel", self.conv2_kernel);
    f("group.conv2.bias", self.conv2_bias);
    f("group.conv2.slope", self.conv2_slope);
    f("group.pi", self.threshold);
  }
};

struct GroupVars {
  Var conv1_kernel, conv1_bias, conv1_slope;
  Var conv2_kernel, conv2_bias, conv2_slope;
  Var threshold;
};

// Registers the parameters on the tape. With `bindings` null they are
// constants (inference); otherwise they are trainable leaves.
inline GroupVars bind(Tape& tape, GroupParams& p, ParameterBindings* bindings) {
  GroupVars v;
  v.conv1_kernel = bind_parameter(tape, p.conv1_kernel, bindings);
  v.conv1_bias = bind_parameter(tape, p.conv1_bias, bindings);
  v.conv1_slope = bind_parameter(tape, p.conv1_slope, bindings);
  v.conv2_kernel = bind_parameter(tape, p.conv2_kernel, bindings);
  v.conv2_bias = bind_parameter(tape, p.conv2_bias, bindings);
  v.conv2_slope = bind_parameter(tape, p.conv2_slope, bindings);
  v.threshold = bind_parameter(tape, p.threshold, bindings);
  return v;
}

// ---------------------------------------------------------------------------
// Operations

// Per-pedestrian embedding of relative tracks (N x T x 2 -> N x 16): two
// temporal convolutions with PReLU, then the mean over time.
inline Var embed(Var obs_rel, const GroupVars& p) {
  Var h = prelu(temporal_conv(obs_rel, p.conv1_kernel, p.conv1_bias), p.conv1_slope);
  h = prelu(temporal_conv(h, p.conv2_kernel, p.conv2_bias), p.conv2_slope);
  return time_mean(h);
}

// Plain Euclidean distances between rows; symmetric with a zero diagonal.
inline Array distance_matrix(const Array& e) {
  Tape t;
  return pairwise_distance(t.constant(e)).value();
}

// Unordered index pairs (i < j) with d[i,j] <= pi.
inline std::vector<std::pair<std::size_t, std::size_t>> colleague_pairs(const Array& d,
                                                                        double pi) {
  require_rank(d, 2, "colleague_pairs");
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < d.dim(0); ++i)
    for (std::size_t j = i + 1; j < d.dim(1); ++j)
      if (d.at(i, j) <= pi) pairs.emplace_back(i, j);
  return pairs;
}

// Transitive closure of the colleague relation. Pedestrians without any
// colleague are singleton groups.
inline GroupPartition assign_groups(const Array& d, double pi) {
  require_rank(d, 2, "assign_groups");
  if (d.dim(0) != d.dim(1)) {
    throw DimensionError("assign_groups: distance matrix must be square, got " +
                         shape_string(d.shape()));
  }
  UnionFind uf(d.dim(0));
  for (const auto& [i, j] : colleague_pairs(d, pi)) uf.unite(i, j);
  return uf.partition();
}

// Threshold that merges closest pairs (single linkage) until the node count
// has dropped by `reduction` (0.5 halves it, rounding the kept count up).
// Used by the fixed-ratio grouping ablation in place of the learned pi.
inline double fixed_ratio_threshold(const Array& d, double reduction = 0.5) {
  require_rank(d, 2, "fixed_ratio_threshold");
  if (reduction < 0 || reduction >= 1) {
    throw ConfigError("fixed_ratio_threshold: reduction must lie in [0, 1)");
  }
  const std::size_t n = d.dim(0);
  const auto target = static_cast<std::size_t>(
      std::max(1.0, std::ceil(static_cast<double>(n) * (1.0 - reduction))));
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
  std::stable_sort(pairs.begin(), pairs.end(), [&](const auto& a, const auto& b) {
    return d.at(a.first, a.second) < d.at(b.first, b.second);
  });
  UnionFind uf(n);
  double threshold = 0.0;
  for (const auto& [i, j] : pairs) {
    if (uf.components() <= target) break;
    if (uf.unite(i, j)) threshold = d.at(i, j);
  }
  return threshold;
}

// Column-stochastic soft assignment
//   a[i,j] = s(i,j) / sum_r s(r,j),   s(i,j) = sigmoid((pi - d[i,j]) / tau),
// evaluated as a column softmax of log-sigmoids so it stays finite for any pi.
inline Var soft_assignment(Var d, Var pi, double tau) {
  if (!(tau > 0)) throw ConfigError("soft_assignment: temperature must be positive");
  require_rank(d.value(), 2, "soft_assignment");
  Var logits = affine(sub(broadcast(pi, d.shape()), d), 1.0 / tau);
  return column_softmax(log_sigmoid(logits));
}

// Straight-through estimator over N x F rows: forward value `hard`, adjoint
// that of the soft mix A^T x, i.e. stop(hard - A^T x) + A^T x.
inline Var st_features(Var hard, Var x, Var a) {
  const Array& xv = x.value();
  const Array& av = a.value();
  require_rank(xv, 2, "st_features");
  require_rank(av, 2, "st_features");
  if (av.dim(0) != av.dim(1) || av.dim(0) != xv.dim(0) || hard.shape() != x.shape()) {
    throw DimensionError("st_features: assignment " + shape_string(av.shape()) +
                         " does not match features " + shape_string(xv.shape()) + " / " +
                         shape_string(hard.shape()));
  }
  Var mixed = matmul(transpose(a), x);
  return add(stop_gradient(sub(hard, mixed)), mixed);
}

// x' = stop(x - A^T x) + A^T x: the forward value is x; the adjoint reaches A
// (hence the embedding and pi) through the A^T x term only.
inline Var st_features(Var x, Var a) { return st_features(x, x, a); }

// Binary cross-entropy between the same-group probability
// sigmoid((pi - d) / tau) and the 0/1 same-group indicator, averaged over
// unordered pairs i < j. Zero when there are no pairs.
inline Var supervised_group_loss(Var d, Var pi, double tau, const GroupPartition& labels) {
  if (!(tau > 0)) throw ConfigError("supervised_group_loss: temperature must be positive");
  require_rank(d.value(), 2, "supervised_group_loss");
  const std::size_t n = d.shape()[0];
  if (labels.universe_size() != n) {
    throw AlignmentError("group labels cover " + std::to_string(labels.universe_size()) +
                         " pedestrians, distance matrix has " + std::to_string(n));
  }
  Tape& tape = d.tape();
  const std::size_t pairs = n * (n - 1) / 2;
  if (pairs == 0) return tape.constant(Array::scalar(0.0));
  Array same({n, n}), diff({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      (labels.same_group(i, j) ? same : diff).at(i, j) = 1.0;
    }
  Var logits = affine(sub(broadcast(pi, d.shape()), d), 1.0 / tau);
  Var ll = add(mul(tape.constant(same), log_sigmoid(logits)),
               mul(tape.constant(diff), log_sigmoid(affine(logits, -1.0))));
  return affine(sum(ll), -1.0 / static_cast<double>(pairs));
}

}  // namespace gpgraph
