#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "gpgraph/array.hpp"
#include "gpgraph/errors.hpp"
#include "gpgraph/grouping.hpp"
#include "gpgraph/hierarchy.hpp"
#include "gpgraph/metrics.hpp"
#include "gpgraph/ops.hpp"
#include "gpgraph/partition.hpp"
#include "gpgraph/tape.hpp"

namespace gpgraph {

inline constexpr std::size_t kGaussianParams = 5;  // mu_x, mu_y, log s_x, log s_y, pre-tanh rho
inline constexpr double kRhoScale = 1.0 - 1e-6;   // keeps |rho| < 1 strictly
inline constexpr double kSigmaFloor = 1e-6;        // applied when sampling only
inline constexpr std::size_t kDefaultSamples = 20;

struct PredictorParams {
  static constexpr std::size_t kChannels = 16;
  static constexpr std::size_t kKernel = 3;

  std::size_t obs_length = 8;
  std::size_t pred_length = 12;

  // theta: shared by the agent, member and group branches
  Array gc_weight, gc_bias, gc_slope;  // 1 x 2 x C graph convolution
  Array res_weight, res_bias;          // 1 x 2 x C residual (self) branch
  Array tc1_kernel, tc1_bias, tc1_slope;
  Array tc2_kernel, tc2_bias, tc2_slope;
  // psi: fusion, time extrapolation and output head
  Array fuse_weight, fuse_bias, fuse_slope;  // 1 x 3C x C
  Array ext1_kernel, ext1_bias, ext1_slope;  // 3 x T_obs x T_pred
  Array ext2_kernel, ext2_bias, ext2_slope;
  Array ext3_kernel, ext3_bias, ext3_slope;
  Array out_weight, out_bias;  // 1 x C x 5

  static PredictorParams init(std::mt19937_64& rng, std::size_t t_obs = 8,
                              std::size_t t_pred = 12) {
    if (t_obs < 1 || t_pred < 1) throw ConfigError("predictor: sequence lengths must be >= 1");
    constexpr std::size_t c = kChannels, k = kKernel;
    PredictorParams p;
    p.obs_length = t_obs;
    p.pred_length = t_pred;
    auto conv = [&](Array& w, Array& b, std::size_t kk, std::size_t ci, std::size_t co) {
      w = uniform_init({kk, ci, co}, kk * ci, rng);
      b = uniform_init({co}, kk * ci, rng);
    };
    conv(p.gc_weight, p.gc_bias, 1, 2, c);
    conv(p.res_weight, p.res_bias, 1, 2, c);
    conv(p.tc1_kernel, p.tc1_bias, k, c, c);
    conv(p.tc2_kernel, p.tc2_bias, k, c, c);
    conv(p.fuse_weight, p.fuse_bias, 1, 3 * c, c);
    conv(p.ext1_kernel, p.ext1_bias, k, t_obs, t_pred);
    conv(p.ext2_kernel, p.ext2_bias, k, t_pred, t_pred);
    conv(p.ext3_kernel, p.ext3_bias, k, t_pred, t_pred);
    conv(p.out_weight, p.out_bias, 1, c, kGaussianParams);
    for (Array* s : {&p.gc_slope, &p.tc1_slope, &p.tc2_slope, &p.fuse_slope, &p.ext1_slope,
                     &p.ext2_slope, &p.ext3_slope})
      *s = Array::scalar(kInitialSlope);
    return p;
  }

  template <typename Self, typename F>
  static void visit(Self& self, F&& f) {
    f("theta.gc.weight", self.gc_weight);
    f("theta.gc.bias", self.gc_bias);
    f("theta.gc.slope", self.gc_slope);
    f("theta.res.weight", self.res_weight);
    f("theta.res.bias", self.res_bias);
    f("theta.tc1.kernel", self.tc1_kernel);
    f("theta.tc1.bias", self.tc1_bias);
    f("theta.tc1.slope", self.tc1_slope);
    f("theta.tc2.kernel", self.tc2_kernel);
    f("theta.tc2.bias", self.tc2_bias);
    f("theta.tc2.slope", self.tc2_slope);
    f("psi.fuse.weight", self.fuse_weight);
    f("psi.fuse.bias", self.fuse_bias);
    f("psi.fuse.slope", self.fuse_slope);
    f("psi.ext1.kernel", self.ext1_kernel);
    f("psi.ext1.bias", self.ext1_bias);
    f("psi.ext1.slope", self.ext1_slope);
    f("psi.ext2.kernel", self.ext2_kernel);
    f("psi.ext2.bias", self.ext2_bias);
    f("psi.ext2.slope", self.ext2_slope);
    f("psi.ext3.kernel", self.ext3_kernel);
    f("psi.ext3.bias", self.ext3_bias);
    f("psi.ext3.slope", self.ext3_slope);
    f("psi.out.weight", self.out_weight);
    f("psi.out.bias", self.out_bias);
  }
};

struct ThetaVars {
  Var gc_weight, gc_bias, gc_slope;
  Var res_weight, res_bias;
  Var tc1_kernel, tc1_bias, tc1_slope;
  Var tc2_kernel, tc2_bias, tc2_slope;
};

struct PsiVars {
  Var fuse_weight, fuse_bias, fuse_slope;
  Var ext1_kernel, ext1_bias, ext1_slope;
  Var ext2_kernel, ext2_bias, ext2_slope;
  Var ext3_kernel, ext3_bias, ext3_slope;
  Var out_weight, out_bias;
};

struct PredictorVars {
  ThetaVars theta;
  PsiVars psi;
};

inline PredictorVars bind(Tape& tape, PredictorParams& p, ParameterBindings* bindings) {
  auto b = [&](Array& a) { return bind_parameter(tape, a, bindings); };
  PredictorVars v;
  v.theta = {b(p.gc_weight),  b(p.gc_bias),    b(p.gc_slope), b(p.res_weight),
             b(p.res_bias),   b(p.tc1_kernel), b(p.tc1_bias), b(p.tc1_slope),
             b(p.tc2_kernel), b(p.tc2_bias),   b(p.tc2_slope)};
  v.psi = {b(p.fuse_weight), b(p.fuse_bias),  b(p.fuse_slope), b(p.ext1_kernel),
           b(p.ext1_bias),   b(p.ext1_slope), b(p.ext2_kernel), b(p.ext2_bias),
           b(p.ext2_slope),  b(p.ext3_kernel), b(p.ext3_bias), b(p.ext3_slope),
           b(p.out_weight),  b(p.out_bias)};
  return v;
}

// Graph convolution (with a 1x1 residual branch carrying each node's own
// signal) followed by two temporal convolutions. The same theta is applied
// whichever graph is passed. x: nodes x T x 2 -> nodes x T x C.
inline Var encode(const InteractionGraph& g, Var x, const ThetaVars& w) {
  if (x.value().rank() != 3 || x.shape()[0] != g.node_count) {
    throw DimensionError("encode: features " + shape_string(x.shape()) + " for a graph of " +
                         std::to_string(g.node_count) + " nodes");
  }
  Var mixed = graph_mix(g.adjacency, temporal_conv(x, w.gc_weight, w.gc_bias));
  Var h = prelu(add(mixed, temporal_conv(x, w.res_weight, w.res_bias)), w.gc_slope);
  h = prelu(temporal_conv(h, w.tc1_kernel, w.tc1_bias), w.tc1_slope);
  return prelu(temporal_conv(h, w.tc2_kernel, w.tc2_bias), w.tc2_slope);
}

// Fuses the three branch features (each N x T_obs x C) and extrapolates the
// time axis to T_pred by convolving over channels with time as the channel
// dimension (residual after the first layer). Returns raw Gaussian parameters
// N x T_pred x 5.
inline Var integrate(Var agent_f, Var member_f, Var group_f, const PsiVars& w) {
  if (agent_f.shape() != member_f.shape() || agent_f.shape() != group_f.shape()) {
    throw AlignmentError("integrate: branch features " + shape_string(agent_f.shape()) + ", " +
                         shape_string(member_f.shape()) + ", " + shape_string(group_f.shape()));
  }
  Var h = concat_last({agent_f, member_f, group_f});
  h = prelu(temporal_conv(h, w.fuse_weight, w.fuse_bias), w.fuse_slope);
  h = swap_last_two(h);  // N x C x T_obs
  h = prelu(temporal_conv(h, w.ext1_kernel, w.ext1_bias), w.ext1_slope);
  h = add(prelu(temporal_conv(h, w.ext2_kernel, w.ext2_bias), w.ext2_slope), h);
  h = add(prelu(temporal_conv(h, w.ext3_kernel, w.ext3_bias), w.ext3_slope), h);
  h = swap_last_two(h);  // N x T_pred x C
  return temporal_conv(h, w.out_weight, w.out_bias);
}

// Activated bivariate Gaussian per pedestrian and step.
struct GaussianField {
  Array params;  // N x T x 5, raw

  std::size_t size() const { return params.dim(0); }
  std::size_t steps() const { return params.dim(1); }
  double mu_x(std::size_t n, std::size_t t) const { return params.at(n, t, 0); }
  double mu_y(std::size_t n, std::size_t t) const { return params.at(n, t, 1); }
  double sigma_x(std::size_t n, std::size_t t) const { return std::exp(params.at(n, t, 2)); }
  double sigma_y(std::size_t n, std::size_t t) const { return std::exp(params.at(n, t, 3)); }
  double rho(std::size_t n, std::size_t t) const {
    return kRhoScale * std::tanh(params.at(n, t, 4));
  }
};

// Mean over pedestrians and steps of the bivariate normal negative
// log-density of the target displacements (N x T x 2).
inline Var nll_loss(Var params, const Array& target) {
  const Shape& s = params.shape();
  if (s.size() != 3 || s[2] != kGaussianParams || target.rank() != 3 || target.dim(0) != s[0] ||
      target.dim(1) != s[1] || target.dim(2) != 2) {
    throw AlignmentError("nll_loss: parameters " + shape_string(s) + " vs target " +
                         shape_string(target.shape()));
  }
  Tape& tape = params.tape();
  Array tx({s[0], s[1]}), ty({s[0], s[1]});
  for (std::size_t n = 0; n < s[0]; ++n)
    for (std::size_t t = 0; t < s[1]; ++t) {
      tx.at(n, t) = target.at(n, t, 0);
      ty.at(n, t) = target.at(n, t, 1);
    }
  Var lsx = select_last(params, 2), lsy = select_last(params, 3);
  Var zx = div(sub(tape.constant(tx), select_last(params, 0)), exp(lsx));
  Var zy = div(sub(tape.constant(ty), select_last(params, 1)), exp(lsy));
  Var rho = affine(tanh(select_last(params, 4)), kRhoScale);
  Var one_minus = affine(square(rho), -1.0, 1.0);
  Var quad = sub(add(square(zx), square(zy)), affine(mul(rho, mul(zx, zy)), 2.0));
  Var per_point = add(add(lsx, lsy), add(affine(log(one_minus), 0.5), affine(div(quad, one_minus), 0.5)));
  return affine(mean(per_point), 1.0, std::log(2.0 * std::numbers::pi));
}

enum class SamplingMode { Scene, Pedestrian, Group };

inline std::string to_string(SamplingMode m) {
  switch (m) {
    case SamplingMode::Scene: return "scene";
    case SamplingMode::Pedestrian: return "pedestrian";
    case SamplingMode::Group: return "group";
  }
  return "?";
}

inline SamplingMode parse_sampling_mode(std::string_view s) {
  if (s == "scene") return SamplingMode::Scene;
  if (s == "pedestrian") return SamplingMode::Pedestrian;
  if (s == "group") return SamplingMode::Group;
  throw UsageError("unknown sampling mode '" + std::string(s) +
                   "' (expected scene, pedestrian or group)");
}

// Standardized noise S x N x T x 2. One noise sequence is drawn per sharing
// unit: the whole scene, each pedestrian, or each group; units are drawn in
// order, so group mode over singletons reproduces pedestrian mode exactly.
inline Array sample_noise(SamplingMode mode, const GroupPartition* part, std::size_t n,
                          std::size_t steps, std::size_t count, std::uint64_t seed) {
  std::vector<std::size_t> unit_of(n, 0);
  std::size_t units = 1;
  switch (mode) {
    case SamplingMode::Scene: break;
    case SamplingMode::Pedestrian:
      for (std::size_t i = 0; i < n; ++i) unit_of[i] = i;
      units = n;
      break;
    case SamplingMode::Group:
      if (part == nullptr) throw UsageError("group sampling requires a group partition");
      if (part->universe_size() != n) {
        throw UsageError("group sampling: partition covers " +
                         std::to_string(part->universe_size()) + " pedestrians, field has " +
                         std::to_string(n));
      }
      unit_of = part->membership();
      units = part->group_count();
      break;
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Array eps({count, n, steps, 2});
  std::vector<double> draw(units * steps * 2);
  for (std::size_t s = 0; s < count; ++s) {
    for (double& v : draw) v = normal(rng);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t t = 0; t < steps; ++t)
        for (std::size_t c = 0; c < 2; ++c)
          eps.at(s, i, t, c) = draw[(unit_of[i] * steps + t) * 2 + c];
  }
  return eps;
}

// Absolute trajectories S x N x T x 2: noise is shaped by each step's
// covariance (Cholesky factor), displacements are accumulated and offset by
// the last observed positions (N x 2).
inline Array sample(const GaussianField& field, const Array& last_observed, SamplingMode mode,
                    const GroupPartition* part, std::uint64_t seed,
                    std::size_t count = kDefaultSamples) {
  const std::size_t n = field.size(), tt = field.steps();
  if (last_observed.rank() != 2 || last_observed.dim(0) != n || last_observed.dim(1) != 2) {
    throw AlignmentError("sample: last positions " + shape_string(last_observed.shape()) +
                         " for " + std::to_string(n) + " pedestrians");
  }
  const Array eps = sample_noise(mode, part, n, tt, count, seed);
  Array out({count, n, tt, 2});
  for (std::size_t s = 0; s < count; ++s)
    for (std::size_t i = 0; i < n; ++i) {
      double x = last_observed.at(i, 0), y = last_observed.at(i, 1);
      for (std::size_t t = 0; t < tt; ++t) {
        const double sx = std::max(field.sigma_x(i, t), kSigmaFloor);
        const double sy = std::max(field.sigma_y(i, t), kSigmaFloor);
        const double r = field.rho(i, t);
        const double e1 = eps.at(s, i, t, 0), e2 = eps.at(s, i, t, 1);
        x += field.mu_x(i, t) + sx * e1;
        y += field.mu_y(i, t) + sy * (r * e1 + std::sqrt(1.0 - r * r) * e2);
        out.at(s, i, t, 0) = x;
        out.at(s, i, t, 1) = y;
      }
    }
  return out;
}

inline Array sample_slice(const Array& samples, std::size_t k) {
  require_rank(samples, 4, "sample_slice");
  const std::size_t w = samples.size() / samples.dim(0);
  std::vector<double> v(samples.values().begin() + static_cast<std::ptrdiff_t>(k * w),
                        samples.values().begin() + static_cast<std::ptrdiff_t>((k + 1) * w));
  return Array({samples.dim(1), samples.dim(2), samples.dim(3)}, std::move(v));
}

// Index of the sample with the lowest ADE against the ground truth; the first
// wins ties.
inline std::size_t best_of_k(const Array& samples, const Array& gt) {
  require_rank(samples, 4, "best_of_k");
  if (samples.dim(0) == 0) throw ConfigError("best_of_k: no samples");
  std::size_t best = 0;
  double best_err = 0.0;
  for (std::size_t k = 0; k < samples.dim(0); ++k) {
    const double e = ade(sample_slice(samples, k), gt);
    if (k == 0 || e < best_err) {
      best = k;
      best_err = e;
    }
  }
  return best;
}

}  // namespace gpgraph
