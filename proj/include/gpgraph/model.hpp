#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "gpgraph/array.hpp"
#include "gpgraph/binary_io.hpp"
#include "gpgraph/errors.hpp"
#include "gpgraph/grouping.hpp"
#include "gpgraph/hierarchy.hpp"
#include "gpgraph/ops.hpp"
#include "gpgraph/partition.hpp"
#include "gpgraph/predictor.hpp"
#include "gpgraph/tape.hpp"
#include "gpgraph/trajectories.hpp"

namespace gpgraph {

// All learnable state: grouping (phi, pi) and predictor (theta, psi).
struct Model {
  GroupParams group;
  PredictorParams predictor;
  // Ablation: replace the learned threshold by one that halves the node count.
  bool fixed_ratio = false;

  static Model init(std::uint64_t seed, std::size_t t_obs = kDefaultObsLength,
                    std::size_t t_pred = kDefaultPredLength, double pi = kInitialThreshold,
                    double tau = kDefaultTemperature) {
    std::mt19937_64 rng(seed);
    Model m;
    m.group = GroupParams::init(rng, pi, tau);
    m.predictor = PredictorParams::init(rng, t_obs, t_pred);
    return m;
  }

  template <typename Self, typename F>
  static void visit(Self& self, F&& f) {
    GroupParams::visit(self.group, f);
    PredictorParams::visit(self.predictor, f);
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    visit(*this, [&](const std::string&, const Array& a) { n += a.size(); });
    return n;
  }
};

struct ForwardOutput {
  GroupPartition partition;
  Var distances;  // N x N embedding distances
  Var threshold;  // the pi used for this window (a constant under fixed_ratio)
  Var params;     // N x T_pred x 5 raw Gaussian parameters
  Var nll;
  Var group_loss;  // invalid unless labels were given
  Var loss;
};

struct ModelVars {
  GroupVars group;
  PredictorVars predictor;
};

inline ModelVars bind(Tape& tape, Model& m, ParameterBindings* bindings) {
  ModelVars v;
  v.group = bind(tape, m.group, bindings);
  v.predictor = bind(tape, m.predictor, bindings);
  return v;
}

// Vars given in Model::visit order.
inline ModelVars model_vars_from(std::span<const Var> v) {
  constexpr std::size_t kCount = 7 + 11 + 14;
  if (v.size() != kCount) {
    throw DimensionError("model_vars_from: expected " + std::to_string(kCount) + " vars, got " +
                         std::to_string(v.size()));
  }
  std::size_t k = 0;
  auto next = [&] { return v[k++]; };
  ModelVars m;
  GroupVars& g = m.group;
  for (Var* p : {&g.conv1_kernel, &g.conv1_bias, &g.conv1_slope, &g.conv2_kernel, &g.conv2_bias,
                 &g.conv2_slope, &g.threshold})
    *p = next();
  ThetaVars& t = m.predictor.theta;
  for (Var* p : {&t.gc_weight, &t.gc_bias, &t.gc_slope, &t.res_weight, &t.res_bias, &t.tc1_kernel,
                 &t.tc1_bias, &t.tc1_slope, &t.tc2_kernel, &t.tc2_bias, &t.tc2_slope})
    *p = next();
  PsiVars& s = m.predictor.psi;
  for (Var* p : {&s.fuse_weight, &s.fuse_bias, &s.fuse_slope, &s.ext1_kernel, &s.ext1_bias,
                 &s.ext1_slope, &s.ext2_kernel, &s.ext2_bias, &s.ext2_slope, &s.ext3_kernel,
                 &s.ext3_bias, &s.ext3_slope, &s.out_weight, &s.out_bias})
    *p = next();
  return m;
}

// One window through grouping, hierarchy and predictor. The hard partition
// from the current phi and pi decides the pooling structure; the group-branch
// input is straight-through: its value is the hard group mean, its adjoint
// that of the soft mix A^T x, which reaches phi and pi.
inline ForwardOutput forward(Tape& tape, const Model& model, const ModelVars& vars,
                             const TrajectoryWindow& w,
                             const std::optional<GroupPartition>& labels = std::nullopt,
                             double group_weight = 0.0) {
  const std::size_t n = w.size();
  if (n == 0) throw ConfigError("forward: empty window");
  if (w.obs_length() != model.predictor.obs_length ||
      w.pred_length() != model.predictor.pred_length) {
    throw AlignmentError("forward: window lengths " + std::to_string(w.obs_length()) + "/" +
                         std::to_string(w.pred_length()) + " do not match the model's " +
                         std::to_string(model.predictor.obs_length) + "/" +
                         std::to_string(model.predictor.pred_length));
  }
  const GroupVars& gv = vars.group;
  const PredictorVars& pv = vars.predictor;
  const double tau = model.group.temperature;

  const Array obs_rel = to_relative(w);
  Var x = tape.constant(obs_rel);
  Var d = pairwise_distance(embed(x, gv));

  Var pi = gv.threshold;
  if (model.fixed_ratio) pi = tape.constant(Array::scalar(fixed_ratio_threshold(d.value())));
  GroupPartition part = assign_groups(d.value(), pi.value()[0]);
  Var a = soft_assignment(d, pi, tau);

  const std::size_t tt = w.obs_length();
  Var hard = group_unpool(group_pool(x, part), part);
  Var x_st = reshape(st_features(reshape(hard, {n, tt * 2}), reshape(x, {n, tt * 2}), a),
                     {n, tt, 2});
  Var z = group_pool(x_st, part);

  const InteractionGraph g_ped = ped_graph(w.obs);
  const InteractionGraph g_member = member_graph(g_ped, part);
  const InteractionGraph g_group = group_graph(w.obs, part);

  Var agent_f = encode(g_ped, x, pv.theta);
  Var member_f = encode(g_member, x, pv.theta);
  Var group_f = group_unpool(encode(g_group, z, pv.theta), part);
  Var params = integrate(agent_f, member_f, group_f, pv.psi);

  ForwardOutput out{part, d, pi, params, nll_loss(params, future_relative(w)), Var(), Var()};
  out.loss = out.nll;
  if (labels) {
    out.group_loss = supervised_group_loss(d, pi, tau, *labels);
    if (group_weight != 0.0) out.loss = add(out.loss, affine(out.group_loss, group_weight));
  }
  return out;
}

// Binds the model's parameters (trainable leaves when `bindings` is given,
// constants otherwise) and runs the forward pass.
inline ForwardOutput forward(Tape& tape, Model& model, const TrajectoryWindow& w,
                             ParameterBindings* bindings,
                             const std::optional<GroupPartition>& labels = std::nullopt,
                             double group_weight = 0.0) {
  return forward(tape, model, bind(tape, model, bindings), w, labels, group_weight);
}

// Inference only: partition and Gaussian field for a window.
struct Prediction {
  GroupPartition partition;
  GaussianField field;
};

inline Prediction predict(const Model& model, const TrajectoryWindow& w) {
  Model& m = const_cast<Model&>(model);  // bound as constants; never written
  Tape tape;
  ForwardOutput out = forward(tape, m, w, nullptr);
  return {out.partition, GaussianField{out.params.value()}};
}

inline Array last_observed_positions(const TrajectoryWindow& w) {
  Array last({w.size(), 2});
  for (std::size_t i = 0; i < w.size(); ++i)
    for (std::size_t c = 0; c < 2; ++c) last.at(i, c) = w.obs.at(i, w.obs_length() - 1, c);
  return last;
}

// ---------------------------------------------------------------------------
// Checkpoint: "GPG1" | u64 tensor count | per tensor: name, u64 rank, u64
// dims, raw little-endian doubles. The temperature and the fixed-ratio flag
// are stored as scalar tensors next to the parameters.

inline constexpr char kCheckpointMagic[4] = {'G', 'P', 'G', '1'};

inline std::map<std::string, Array> model_tensors(const Model& m) {
  std::map<std::string, Array> t;
  Model::visit(m, [&](const std::string& name, const Array& a) { t.emplace(name, a); });
  t.emplace("group.tau", Array::scalar(m.group.temperature));
  t.emplace("config.fixed_ratio", Array::scalar(m.fixed_ratio ? 1.0 : 0.0));
  return t;
}

inline void write_checkpoint(std::ostream& out, const Model& m) {
  out.write(kCheckpointMagic, 4);
  std::vector<std::pair<std::string, const Array*>> order;
  Model::visit(m, [&](const std::string& name, const Array& a) { order.emplace_back(name, &a); });
  const Array tau = Array::scalar(m.group.temperature);
  const Array fixed = Array::scalar(m.fixed_ratio ? 1.0 : 0.0);
  order.emplace_back("group.tau", &tau);
  order.emplace_back("config.fixed_ratio", &fixed);
  binary::write_u64(out, order.size());
  for (const auto& [name, a] : order) {
    binary::write_string(out, name);
    binary::write_u64(out, a->rank());
    for (std::size_t d : a->shape()) binary::write_u64(out, d);
    for (double v : a->values()) binary::write_f64(out, v);
  }
}

inline Model read_checkpoint(std::istream& in) {
  char magic[4];
  binary::read_exact(in, magic, 4);
  if (std::string(magic, 4) != std::string(kCheckpointMagic, 4)) {
    throw FormatError("checkpoint: bad magic bytes");
  }
  std::map<std::string, Array> tensors;
  const std::uint64_t count = binary::read_u64(in);
  for (std::uint64_t k = 0; k < count; ++k) {
    std::string name = binary::read_string(in);
    const std::uint64_t rank = binary::read_u64(in);
    if (rank > 8) throw FormatError("checkpoint: tensor '" + name + "' has rank " + std::to_string(rank));
    Shape shape(rank);
    for (auto& d : shape) d = binary::read_u64(in);
    const std::size_t size = shape_size(shape);
    if (size > (std::size_t{1} << 28)) throw FormatError("checkpoint: tensor '" + name + "' too large");
    std::vector<double> values(size);
    for (double& v : values) v = binary::read_f64(in);
    tensors.insert_or_assign(std::move(name), Array(std::move(shape), std::move(values)));
  }
  auto take = [&](const std::string& name) -> Array& {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw FormatError("checkpoint: missing tensor '" + name + "'");
    return it->second;
  };
  Model m;
  Model::visit(m, [&](const std::string& name, Array& a) { a = take(name); });
  m.group.temperature = take("group.tau")[0];
  m.fixed_ratio = take("config.fixed_ratio")[0] != 0.0;
  const Array& ext1 = m.predictor.ext1_kernel;
  if (ext1.rank() != 3) throw FormatError("checkpoint: malformed predictor tensors");
  m.predictor.obs_length = ext1.dim(1);
  m.predictor.pred_length = ext1.dim(2);
  // shape check against a freshly initialized model of the same lengths
  std::mt19937_64 rng(0);
  Model ref;
  ref.group = GroupParams::init(rng);
  ref.predictor = PredictorParams::init(rng, m.predictor.obs_length, m.predictor.pred_length);
  auto want = model_tensors(ref);
  for (const auto& [name, a] : model_tensors(m)) {
    if (a.shape() != want.at(name).shape()) {
      throw FormatError("checkpoint: tensor '" + name + "' has shape " + shape_string(a.shape()) +
                        ", expected " + shape_string(want.at(name).shape()));
    }
  }
  return m;
}

inline void save_checkpoint(const std::string& path, const Model& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  write_checkpoint(out, m);
  if (!out) throw IoError("failed writing checkpoint: " + path);
}

inline Model load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  return read_checkpoint(in);
}

}  // namespace gpgraph
