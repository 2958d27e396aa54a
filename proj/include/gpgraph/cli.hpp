#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "gpgraph/errors.hpp"
#include "gpgraph/metrics.hpp"
#include "gpgraph/model.hpp"
#include "gpgraph/plot.hpp"
#include "gpgraph/predictor.hpp"
#include "gpgraph/synth.hpp"
#include "gpgraph/training.hpp"
#include "gpgraph/trajectories.hpp"

namespace gpgraph::cli {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

inline constexpr const char* kLabelSuffix = ".groups.txt";

inline bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

// Expands files and directories into a sorted file list. Inside a directory,
// trajectory files are *.txt except label sidecars (*.groups.txt); label
// files are the sidecars.
inline std::vector<std::string> expand(const std::vector<std::string>& paths, bool labels) {
  std::vector<std::string> files;
  for (const std::string& p : paths) {
    if (!fs::exists(p)) throw IoError("no such file or directory: " + p);
    if (!fs::is_directory(p)) {
      files.push_back(p);
      continue;
    }
    std::vector<std::string> found;
    for (const auto& e : fs::directory_iterator(p)) {
      if (!e.is_regular_file()) continue;
      const std::string name = e.path().string();
      const bool sidecar = ends_with(name, kLabelSuffix);
      if (labels ? sidecar : (!sidecar && ends_with(name, ".txt"))) found.push_back(name);
    }
    std::sort(found.begin(), found.end());
    files.insert(files.end(), found.begin(), found.end());
  }
  return files;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& content) {
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << content;
  if (!out) throw IoError("failed writing " + path);
}

struct LoadedWindow {
  std::string id;  // "<file stem>:<start frame>"
  TrainingExample example;
};

inline std::vector<LoadedWindow> load_windows(const std::vector<std::string>& data,
                                              const std::vector<std::string>& labels,
                                              std::size_t t_obs, std::size_t t_pred,
                                              std::size_t stride) {
  const auto files = expand(data, false);
  const auto label_files = expand(labels, true);
  if (files.empty()) throw UsageError("no trajectory files found in --data");
  if (!label_files.empty() && label_files.size() != files.size()) {
    throw UsageError("--labels gives " + std::to_string(label_files.size()) +
                     " files for " + std::to_string(files.size()) + " trajectory files");
  }
  std::vector<LoadedWindow> out;
  for (std::size_t f = 0; f < files.size(); ++f) {
    Scene scene;
    try {
      scene = parse_dataset(read_file(files[f]));
    } catch (const ParseError& e) {
      throw ParseError(files[f] + ": " + e.what(), e.line());
    }
    std::optional<GroupLabelSet> ls;
    if (!label_files.empty()) ls = parse_group_labels(read_file(label_files[f]));
    std::string stem = fs::path(files[f]).stem().string();
    for (auto& w : make_windows(scene, t_obs, t_pred, stride)) {
      LoadedWindow lw;
      lw.id = stem + ":" + std::to_string(w.start_frame);
      if (ls) lw.example.labels = labels_for_window(*ls, w);
      lw.example.window = std::move(w);
      out.push_back(std::move(lw));
    }
  }
  if (out.empty()) throw UsageError("the data contains no complete windows");
  return out;
}

// Independent, well-mixed per-window seed (splitmix64 of seed and index).
inline std::uint64_t window_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline std::string num(double v) { return detail::format_double(v); }

// Runs f(i) for i in [0, n) on `jobs` threads; results must be written to
// per-index slots so output order does not depend on scheduling.
template <typename F>
void parallel_for(std::size_t n, std::size_t jobs, F&& f) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t j = 0; j < jobs; ++j)
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) {
        try {
          f(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          next = n;
        }
      }
    });
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

// ---------------------------------------------------------------------------
// Evaluation

struct WindowEval {
  TrajectoryScores scores;
  GroupPartition partition;
  Array samples;
};

inline WindowEval evaluate_window(const Model& model, const TrajectoryWindow& w, SamplingMode mode,
                                  std::size_t samples, double col_threshold, std::uint64_t seed) {
  Prediction p = predict(model, w);
  WindowEval e{{}, p.partition, sample(p.field, last_observed_positions(w), mode, &p.partition,
                                       seed, samples)};
  const Array best = sample_slice(e.samples, best_of_k(e.samples, w.fut));
  e.scores.ade = ade(best, w.fut);
  e.scores.fde = fde(best, w.fut);
  e.scores.col = col(e.samples, col_threshold);
  e.scores.tcc = w.pred_length() >= 2 ? tcc(best, w.fut) : 0.0;
  return e;
}

struct EvalReport {
  std::string csv;  // window_id,metric,value
  nlohmann::json summary;
};

inline EvalReport evaluate(const Model& model, const std::vector<LoadedWindow>& windows,
                           SamplingMode mode, std::size_t samples, double col_threshold,
                           std::uint64_t seed, std::size_t jobs) {
  std::vector<TrajectoryScores> scores(windows.size());
  parallel_for(windows.size(), jobs, [&](std::size_t i) {
    scores[i] = evaluate_window(model, windows[i].example.window, mode, samples, col_threshold,
                                window_seed(seed, i))
                    .scores;
  });
  EvalReport r;
  std::string csv = "window_id,metric,value\n";
  TrajectoryScores mean;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const auto& s = scores[i];
    const std::string& id = windows[i].id;
    csv += id + ",ade," + num(s.ade) + "\n" + id + ",fde," + num(s.fde) + "\n" + id + ",col," +
           num(s.col) + "\n" + id + ",tcc," + num(s.tcc) + "\n";
    mean.ade += s.ade;
    mean.fde += s.fde;
    mean.col += s.col;
    mean.tcc += s.tcc;
  }
  const double n = static_cast<double>(windows.size());
  r.csv = std::move(csv);
  r.summary = {{"windows", windows.size()},
               {"mode", to_string(mode)},
               {"samples", samples},
               {"col_threshold", col_threshold},
               {"seed", seed},
               {"ade", mean.ade / n},
               {"fde", mean.fde / n},
               {"col", mean.col / n},
               {"tcc", mean.tcc / n}};
  return r;
}

// Grouping over many windows, scores pooled across windows.
struct GroupReport {
  std::string partitions;
  std::optional<ScoreCounts> pw, gm;
};

inline GroupReport group_windows(const Model& model, const std::vector<LoadedWindow>& windows,
                                 std::size_t jobs) {
  std::vector<GroupPartition> parts(windows.size());
  parallel_for(windows.size(), jobs, [&](std::size_t i) {
    parts[i] = predict(model, windows[i].example.window).partition;
  });
  GroupReport r;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const auto& w = windows[i].example.window;
    r.partitions += "# window " + windows[i].id + "\n";
    for (const auto& g : parts[i].groups()) {
      for (std::size_t k = 0; k < g.size(); ++k)
        r.partitions += (k ? " " : "") + std::to_string(w.ped_ids[g[k]]);
      r.partitions += "\n";
    }
    if (const auto& labels = windows[i].example.labels) {
      if (!r.pw) r.pw.emplace(), r.gm.emplace();
      *r.pw += pw_counts(parts[i], *labels);
      *r.gm += gmitre_counts(parts[i], *labels);
    }
  }
  return r;
}

inline nlohmann::json group_scores_json(const GroupReport& r) {
  if (!r.pw) return nlohmann::json::object();
  const PrecisionRecall pw = r.pw->scores(), gm = r.gm->scores();
  return {{"pw_precision", pw.precision},
          {"pw_recall", pw.recall},
          {"gm_precision", gm.precision},
          {"gm_recall", gm.recall}};
}

// ---------------------------------------------------------------------------
// Command line

inline constexpr const char* kFooter = R"(Outputs:
  synth  <out>/scene_NNN.txt          frame ped x y, tab separated
         <out>/scene_NNN.groups.txt   one group per line, space-separated ped ids
  train  <checkpoint>                 binary "GPG1" tensors
         <checkpoint>.json            config, loss trace, final pi
         <checkpoint>.loss.csv        epoch,loss,nll
  eval   <out>/windows.csv            window_id,metric,value (metric: ade fde col tcc)
         <out>/summary.json           mean scores over windows
  group  <out>                        "# window <id>" then one group per line
         <out>.scores.json            pooled PW/GM precision and recall (with --labels)
  plot   <out>                        SVG figure of one window
Exit status: 0 success, 1 usage error, 2 runtime error.)";

struct Options {
  std::vector<std::string> data, labels;
  std::string checkpoint, out;
  std::uint64_t seed = 0;
  std::size_t samples = kDefaultSamples;
  double col_threshold = kDefaultCollisionThreshold;
  std::string mode = "group";
  std::size_t jobs = 1;
  bool supervised = false;
  bool fixed_ratio = false;
  // windows
  std::size_t obs_length = kDefaultObsLength, pred_length = kDefaultPredLength, stride = 1;
  // training
  std::size_t epochs = 200, batch = 1;
  double lr = 1e-3, grad_clip = 0.0, pi = kInitialThreshold, tau = kDefaultTemperature;
  std::string optimizer = "adam";
  // synth
  std::size_t scenes = 1, groups_min = 2, groups_max = 4;
  SynthSpec spec;
  double divergence = 0.0;
  // plot
  std::size_t window = 0;
};

inline void cmd_synth(const Options& o, std::ostream& log) {
  if (o.groups_min < 1 || o.groups_min > o.groups_max) throw UsageError("invalid --groups range");
  for (std::size_t s = 0; s < o.scenes; ++s) {
    SynthSpec spec = o.spec;
    spec.seed = window_seed(o.seed, s);
    spec.group_count = o.groups_min + static_cast<std::size_t>(spec.seed % (o.groups_max - o.groups_min + 1));
    SynthScene scene = scenario_split_merge(spec, o.divergence);
    std::ostringstream name;
    name << "scene_" << std::setw(3) << std::setfill('0') << s;
    const std::string base = (fs::path(o.out) / name.str()).string();
    write_file(base + ".txt", write_dataset(scene.scene));
    std::ostringstream labels;
    write_group_labels(labels, scene.labels);
    write_file(base + kLabelSuffix, labels.str());
  }
  log << "wrote " << o.scenes << " scene(s) to " << o.out << "\n";
}

inline void cmd_train(const Options& o, std::ostream& log) {
  if (o.supervised && o.labels.empty()) throw UsageError("--supervised requires --labels");
  auto windows = load_windows(o.data, o.labels, o.obs_length, o.pred_length, o.stride);
  std::vector<TrainingExample> data;
  for (auto& w : windows) data.push_back(std::move(w.example));
  TrainConfig cfg;
  cfg.epochs = o.epochs;
  cfg.learning_rate = o.lr;
  cfg.optimizer = parse_optimizer(o.optimizer);
  cfg.batch = o.batch;
  cfg.group_weight = o.supervised ? 1.0 : 0.0;
  cfg.grad_clip = o.grad_clip;
  cfg.seed = o.seed;
  cfg.fixed_ratio = o.fixed_ratio;
  cfg.validate();
  Model model = Model::init(o.seed, o.obs_length, o.pred_length, o.pi, o.tau);
  TrainResult r = fit(model, data, cfg, [&](std::size_t e, double loss) {
    if ((e + 1) % 10 == 0 || e + 1 == cfg.epochs)
      log << "epoch " << e + 1 << "/" << cfg.epochs << " loss " << loss << "\n";
  });
  save_checkpoint(o.checkpoint, model);
  write_file(o.checkpoint + ".json", train_sidecar(cfg, r, model).dump(2) + "\n");
  std::string csv = "epoch,loss,nll\n";
  for (std::size_t e = 0; e < r.epoch_loss.size(); ++e)
    csv += std::to_string(e + 1) + "," + num(r.epoch_loss[e]) + "," + num(r.epoch_nll[e]) + "\n";
  write_file(o.checkpoint + ".loss.csv", csv);
  log << "trained on " << data.size() << " window(s); checkpoint " << o.checkpoint << "\n";
}

inline Model load_model(const Options& o) {
  Model m = load_checkpoint(o.checkpoint);
  if (o.fixed_ratio) m.fixed_ratio = true;
  return m;
}

inline void cmd_eval(const Options& o, std::ostream& log) {
  Model model = load_model(o);
  auto windows = load_windows(o.data, {}, model.predictor.obs_length, model.predictor.pred_length, o.stride);
  EvalReport r = evaluate(model, windows, parse_sampling_mode(o.mode), o.samples,
                          o.col_threshold, o.seed, o.jobs);
  write_file((fs::path(o.out) / "windows.csv").string(), r.csv);
  write_file((fs::path(o.out) / "summary.json").string(), r.summary.dump(2) + "\n");
  log << r.summary.dump() << "\n";
}

inline void cmd_group(const Options& o, std::ostream& out, std::ostream& log) {
  Model model = load_model(o);
  auto windows = load_windows(o.data, o.labels, model.predictor.obs_length,
                              model.predictor.pred_length, o.stride);
  GroupReport r = group_windows(model, windows, o.jobs);
  if (o.out.empty()) {
    out << r.partitions;
  } else {
    write_file(o.out, r.partitions);
  }
  if (r.pw) {
    const auto scores = group_scores_json(r);
    if (!o.out.empty()) write_file(o.out + ".scores.json", scores.dump(2) + "\n");
    log << scores.dump() << "\n";
  }
}

inline void cmd_plot(const Options& o, std::ostream& log) {
  Model model = load_model(o);
  auto windows = load_windows(o.data, {}, model.predictor.obs_length, model.predictor.pred_length, o.stride);
  if (o.window >= windows.size()) {
    throw UsageError("--window " + std::to_string(o.window) + " out of range (" +
                     std::to_string(windows.size()) + " windows)");
  }
  const auto& w = windows[o.window].example.window;
  WindowEval e = evaluate_window(model, w, parse_sampling_mode(o.mode), o.samples, o.col_threshold,
                                 window_seed(o.seed, o.window));
  write_file(o.out, render_svg({w, e.partition, e.samples}));
  log << "wrote " << o.out << " (window " << windows[o.window].id << ")\n";
}

// Parses and runs one command. Never throws; returns the exit status.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  Options o;
  CLI::App app{"Group-aware pedestrian trajectory prediction", "gpgraph"};
  app.footer(kFooter);
  app.require_subcommand(1);

  auto add_data = [&](CLI::App* c, bool labels_allowed) {
    c->add_option("--data", o.data, "trajectory file or directory (repeatable)")->required();
    if (labels_allowed) c->add_option("--labels", o.labels, "group label file or directory (repeatable)");
    c->add_option("--stride", o.stride, "window stride in frames")->check(CLI::PositiveNumber);
  };
  auto add_eval_flags = [&](CLI::App* c) {
    c->add_option("--samples", o.samples, "samples per window")->check(CLI::PositiveNumber);
    c->add_option("--col-threshold", o.col_threshold, "collision distance in metres");
    c->add_option("--mode", o.mode, "sampling mode: scene | pedestrian | group");
  };

  CLI::App* synth = app.add_subcommand("synth", "generate synthetic scenes with group labels");
  synth->add_option("--out", o.out, "output directory")->required();
  synth->add_option("--seed", o.seed);
  synth->add_option("--scenes", o.scenes)->check(CLI::PositiveNumber);
  synth->add_option("--groups-min", o.groups_min);
  synth->add_option("--groups-max", o.groups_max);
  synth->add_option("--size-min", o.spec.min_size);
  synth->add_option("--size-max", o.spec.max_size);
  synth->add_option("--frames", o.spec.frames);
  synth->add_option("--noise", o.spec.noise, "positional noise sigma, m");
  synth->add_option("--spacing", o.spec.spacing, "lateral member spacing, m");
  synth->add_option("--speed-min", o.spec.min_speed);
  synth->add_option("--speed-max", o.spec.max_speed);
  synth->add_option("--velocity-gap", o.spec.min_velocity_gap, "minimum velocity difference between groups, m/s");
  synth->add_option("--area", o.spec.area, "side of the square holding group start points, m");
  synth->add_option("--split", o.divergence, "first group splits apart by this many metres mid-scene");

  CLI::App* train = app.add_subcommand("train", "train a model");
  add_data(train, true);
  train->add_option("--checkpoint", o.checkpoint, "output checkpoint path")->required();
  train->add_option("--seed", o.seed);
  train->add_option("--epochs", o.epochs)->check(CLI::PositiveNumber);
  train->add_option("--lr", o.lr);
  train->add_option("--batch", o.batch, "windows per optimizer step")->check(CLI::PositiveNumber);
  train->add_option("--optimizer", o.optimizer, "adam | sgd");
  train->add_option("--grad-clip", o.grad_clip, "global gradient-norm cap (0 = off)");
  train->add_option("--pi", o.pi, "initial grouping threshold");
  train->add_option("--tau", o.tau, "soft-assignment temperature");
  train->add_option("--obs-len", o.obs_length)->check(CLI::PositiveNumber);
  train->add_option("--pred-len", o.pred_length)->check(CLI::PositiveNumber);
  train->add_flag("--supervised", o.supervised, "add the group BCE loss (weight 1); needs --labels");
  train->add_flag("--fixed-ratio", o.fixed_ratio, "threshold that halves the node count instead of pi");

  CLI::App* eval = app.add_subcommand("eval", "score predictions (ADE, FDE, COL, TCC)");
  add_data(eval, false);
  eval->add_option("--checkpoint", o.checkpoint)->required();
  eval->add_option("--out", o.out, "output directory")->required();
  eval->add_option("--seed", o.seed);
  eval->add_option("--jobs", o.jobs, "worker threads")->check(CLI::PositiveNumber);
  eval->add_flag("--fixed-ratio", o.fixed_ratio);
  add_eval_flags(eval);

  CLI::App* group = app.add_subcommand("group", "print predicted groups; scores them with --labels");
  add_data(group, true);
  group->add_option("--checkpoint", o.checkpoint)->required();
  group->add_option("--out", o.out, "output file (default stdout)");
  group->add_option("--jobs", o.jobs)->check(CLI::PositiveNumber);
  group->add_flag("--fixed-ratio", o.fixed_ratio);

  CLI::App* plot = app.add_subcommand("plot", "render one window as SVG");
  add_data(plot, false);
  plot->add_option("--checkpoint", o.checkpoint)->required();
  plot->add_option("--out", o.out, "output SVG path")->required();
  plot->add_option("--window", o.window, "window index");
  plot->add_option("--seed", o.seed);
  plot->add_flag("--fixed-ratio", o.fixed_ratio);
  add_eval_flags(plot);

  std::vector<std::string> args;
  for (int i = argc - 1; i > 0; --i) args.emplace_back(argv[i]);
  try {
    app.parse(std::move(args));
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (o.checkpoint.size() && !synth->parsed() && !train->parsed() && !fs::exists(o.checkpoint))
      throw IoError("no such checkpoint: " + o.checkpoint);
    parse_sampling_mode(o.mode);
    if (synth->parsed()) cmd_synth(o, err);
    if (train->parsed()) cmd_train(o, err);
    if (eval->parsed()) cmd_eval(o, err);
    if (group->parsed()) cmd_group(o, out, err);
    if (plot->parsed()) cmd_plot(o, err);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError& e) {  // bad flag values (lr, synth ranges, ...)
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace gpgraph::cli
