#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <gtest/gtest.h>

#include "gpgraph/grad_check.hpp"
#include "gpgraph/synth.hpp"
#include "gpgraph/training.hpp"

namespace gpgraph {
namespace {

TrajectoryWindow synth_window(std::uint64_t seed, std::size_t groups = 2, double noise = 0.02) {
  SynthSpec spec;
  spec.group_count = groups;
  spec.min_size = 1;
  spec.max_size = 2;
  spec.noise = noise;
  spec.seed = seed;
  return make_windows(generate(spec).scene).at(0);
}

// A window whose embedding distances straddle pi, so the soft assignment is
// not saturated and the hard partition is neither all-singleton nor one group.
Model model_with_median_threshold(const TrajectoryWindow& w, std::uint64_t seed) {
  Model m = Model::init(seed);
  Tape t;
  Array d = forward(t, m, w, nullptr).distances.value();
  std::vector<double> off;
  for (std::size_t i = 0; i < d.dim(0); ++i)
    for (std::size_t j = i + 1; j < d.dim(0); ++j) off.push_back(d.at(i, j));
  std::sort(off.begin(), off.end());
  m.group.threshold[0] = 0.5 * (off[off.size() / 2 - 1] + off[off.size() / 2]);
  m.group.temperature = std::max(0.5 * (off.back() - off.front()), 1e-3);
  return m;
}

TrajectoryWindow four_pedestrians() {
  SynthSpec spec;
  spec.group_count = 2;
  spec.min_size = spec.max_size = 2;
  spec.noise = 0.05;
  spec.seed = 11;
  return make_windows(generate(spec).scene).at(0);
}

TEST(Forward, ShapesAndPartition) {
  TrajectoryWindow w = synth_window(1, 3);
  Model m = Model::init(0);
  Tape t;
  ForwardOutput out = forward(t, m, w, nullptr);
  EXPECT_EQ(out.params.shape(), (Shape{w.size(), 12, 5}));
  EXPECT_EQ(out.partition.universe_size(), w.size());
  EXPECT_TRUE(std::isfinite(out.nll.value()[0]));
  EXPECT_FALSE(out.group_loss.valid());
}

TEST(Forward, ValuesIdenticalWithAndWithoutRecording) {
  TrajectoryWindow w = four_pedestrians();
  Model m = model_with_median_threshold(w, 3);
  Tape a, b;
  ParameterBindings bindings;
  ForwardOutput x = forward(a, m, w, &bindings);
  ForwardOutput y = forward(b, m, w, nullptr);
  EXPECT_EQ(x.params.value(), y.params.value());
  EXPECT_EQ(x.partition, y.partition);
  EXPECT_FALSE(bindings.empty());
}

TEST(Forward, PartitionFollowsCurrentThreshold) {
  TrajectoryWindow w = synth_window(2, 3);
  Model m = Model::init(0);
  m.group.threshold[0] = -1.0;
  Tape t;
  EXPECT_TRUE(forward(t, m, w, nullptr).partition.all_singletons());
  m.group.threshold[0] = 1e9;
  EXPECT_EQ(forward(t, m, w, nullptr).partition.group_count(), 1u);
}

TEST(Forward, FixedRatioHalvesNodes) {
  TrajectoryWindow w = synth_window(3, 4);
  Model m = Model::init(0);
  m.fixed_ratio = true;
  Tape t;
  EXPECT_EQ(forward(t, m, w, nullptr).partition.group_count(), (w.size() + 1) / 2);
}

TEST(Forward, LengthMismatchIsAlignmentError) {
  TrajectoryWindow w = synth_window(4);
  Model m = Model::init(0, 6, 12);
  Tape t;
  EXPECT_THROW(forward(t, m, w, nullptr), AlignmentError);
}

TEST(Forward, EndToEndAdjointsMatchFiniteDifferences) {
  TrajectoryWindow w = four_pedestrians();
  Model base = model_with_median_threshold(w, 5);
  std::vector<Array> leaves;
  Model::visit(base, [&](const std::string&, const Array& a) { leaves.push_back(a); });
  GroupPartition labels(4, {{0, 1}, {2, 3}});
  auto report = grad_check_report(
      [&](Tape& t, std::span<const Var> v) {
        return forward(t, base, model_vars_from(v), w, labels, 1.0).loss;
      },
      leaves);
  EXPECT_LE(report.max_rel_error, 1e-4) << "leaf " << report.leaf << " entry " << report.entry;
  // pi is the 7th group array
  EXPECT_GT(std::abs(report.analytic[6][0]), 1e-8);
}

std::string checkpoint_bytes(const Model& m) {
  std::ostringstream os;
  write_checkpoint(os, m);
  return os.str();
}

TEST(Checkpoint, RoundTripIsExact) {
  Model m = Model::init(9, 8, 12, 0.7, 0.3);
  m.fixed_ratio = true;
  std::istringstream is(checkpoint_bytes(m));
  Model r = read_checkpoint(is);
  EXPECT_EQ(checkpoint_bytes(r), checkpoint_bytes(m));
  EXPECT_EQ(r.group.pi(), 0.7);
  EXPECT_EQ(r.group.temperature, 0.3);
  EXPECT_TRUE(r.fixed_ratio);
  EXPECT_EQ(r.predictor.obs_length, 8u);
  EXPECT_EQ(r.predictor.pred_length, 12u);
}

TEST(Checkpoint, StartsWithMagicAndStoresThetaOnce) {
  const std::string bytes = checkpoint_bytes(Model::init(1));
  EXPECT_EQ(bytes.substr(0, 4), "GPG1");
  std::size_t pos = 0, hits = 0;
  while ((pos = bytes.find("theta.tc1.kernel", pos)) != std::string::npos) {
    ++hits;
    ++pos;
  }
  EXPECT_EQ(hits, 1u);
}

TEST(Checkpoint, CorruptInputIsFormatError) {
  std::string bytes = checkpoint_bytes(Model::init(1));
  std::istringstream bad_magic("GPG2" + bytes.substr(4));
  EXPECT_THROW(read_checkpoint(bad_magic), FormatError);
  std::istringstream truncated(bytes.substr(0, bytes.size() / 2));
  EXPECT_THROW(read_checkpoint(truncated), FormatError);
  EXPECT_THROW(load_checkpoint("/nonexistent/model.gpg"), IoError);
}

TEST(TrainStep, ReturnsPreUpdateLossAndChangesWeights) {
  TrajectoryWindow w = synth_window(5);
  Model m = Model::init(2);
  Tape t;
  const double before = forward(t, m, w, nullptr).loss.value()[0];
  const std::string bytes = checkpoint_bytes(m);
  Optimizer opt(OptimizerKind::Adam, 1e-3);
  StepResult r = train_step(m, opt, TrainingExample{w, std::nullopt}, TrainConfig{});
  EXPECT_EQ(r.loss, before);
  EXPECT_NE(checkpoint_bytes(m), bytes);
}

TEST(TrainStep, NonFiniteLossAbortsWithoutUpdate) {
  TrajectoryWindow w = synth_window(6);
  w.fut.at(0, 3, 1) = std::numeric_limits<double>::infinity();
  Model m = Model::init(2);
  const std::string bytes = checkpoint_bytes(m);
  Optimizer opt(OptimizerKind::Adam, 1e-3);
  EXPECT_THROW(train_step(m, opt, TrainingExample{w, std::nullopt}, TrainConfig{}), NumericError);
  EXPECT_EQ(checkpoint_bytes(m), bytes);
}

TEST(TrainStep, FrozenGroupingReducesToPlainPredictor) {
  TrajectoryWindow w = synth_window(7);
  Model m = Model::init(3);
  const GroupParams group_before = m.group;
  TrainConfig cfg;
  cfg.frozen = {"group."};
  Optimizer opt(OptimizerKind::Adam, 1e-3);
  double first = 0.0, last = 0.0;
  for (int i = 0; i < 30; ++i) {
    last = train_step(m, opt, TrainingExample{w, std::nullopt}, cfg).loss;
    if (i == 0) first = last;
  }
  EXPECT_LT(last, first);
  EXPECT_EQ(m.group.conv1_kernel, group_before.conv1_kernel);
  EXPECT_EQ(m.group.pi(), group_before.pi());
}

TEST(TrainStep, SupervisedLossUsesLabels) {
  TrajectoryWindow w = four_pedestrians();
  Model m = Model::init(4);
  TrainConfig cfg;
  cfg.group_weight = 1.0;
  GroupPartition labels(4, {{0, 1}, {2, 3}});
  Tape t;
  const double nll = forward(t, m, w, nullptr).nll.value()[0];
  const double bce = forward(t, m, w, nullptr, labels, 1.0).group_loss.value()[0];
  Optimizer opt(OptimizerKind::Adam, 1e-3);
  StepResult r = train_step(m, opt, TrainingExample{w, labels}, cfg);
  EXPECT_NEAR(r.loss, nll + bce, 1e-12);
}

TEST(Fit, OneWindowOneEpoch) {
  Model m = Model::init(0);
  TrainConfig cfg;
  cfg.epochs = 1;
  TrainResult r = fit(m, {TrainingExample{synth_window(8), std::nullopt}}, cfg);
  EXPECT_EQ(r.epoch_loss.size(), 1u);
}

TEST(Fit, RejectsBadConfig) {
  Model m = Model::init(0);
  std::vector<TrainingExample> data = {TrainingExample{synth_window(8), std::nullopt}};
  TrainConfig cfg;
  cfg.learning_rate = 0;
  EXPECT_THROW(fit(m, data, cfg), ConfigError);
  cfg = TrainConfig{};
  cfg.epochs = 0;
  EXPECT_THROW(fit(m, data, cfg), ConfigError);
  EXPECT_THROW(fit(m, {}, TrainConfig{}), ConfigError);
}

TEST(Fit, DeterministicReplay) {
  std::vector<TrainingExample> data;
  for (std::uint64_t s = 0; s < 4; ++s) data.push_back({synth_window(20 + s), std::nullopt});
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.seed = 42;
  cfg.batch = 2;
  Model a = Model::init(1), b = Model::init(1);
  TrainResult ra = fit(a, data, cfg), rb = fit(b, data, cfg);
  EXPECT_EQ(ra.epoch_loss, rb.epoch_loss);
  EXPECT_EQ(checkpoint_bytes(a), checkpoint_bytes(b));
}

TEST(Fit, RepeatedStepsHalveNll) {
  TrajectoryWindow w = synth_window(9);
  Model m = Model::init(5);
  Tape t;
  const double initial = forward(t, m, w, nullptr).nll.value()[0];
  TrainConfig cfg;
  cfg.epochs = 200;
  fit(m, {TrainingExample{w, std::nullopt}}, cfg);
  const double final_nll = forward(t, m, w, nullptr).nll.value()[0];
  EXPECT_LE(final_nll, initial - 0.5 * std::abs(initial));
}

}  // namespace
}  // namespace gpgraph
