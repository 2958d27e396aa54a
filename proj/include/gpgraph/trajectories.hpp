#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "gpgraph/array.hpp"
#include "gpgraph/binary_io.hpp"
#include "gpgraph/errors.hpp"
#include "gpgraph/partition.hpp"

namespace gpgraph {

using FrameId = std::int64_t;
using PedId = std::int64_t;
using Point = std::array<double, 2>;

// Seconds between consecutive annotated frames (2.5 fps).
inline constexpr double kDefaultFrameInterval = 0.4;
inline constexpr std::size_t kDefaultObsLength = 8;
inline constexpr std::size_t kDefaultPredLength = 12;

struct RawRecord {
  FrameId frame_id = 0;
  PedId ped_id = 0;
  double x = 0.0;
  double y = 0.0;
};

// All tracks of one recording on a uniform frame grid.
struct Scene {
  FrameId first_frame = 0;
  FrameId frame_step = 1;
  std::size_t frame_count = 0;
  // ped id -> (frame id -> world position in meters)
  std::map<PedId, std::map<FrameId, Point>> tracks;

  FrameId frame_at(std::size_t index) const {
    return first_frame + static_cast<FrameId>(index) * frame_step;
  }

  std::vector<FrameId> frames() const {
    std::vector<FrameId> f(frame_count);
    for (std::size_t i = 0; i < frame_count; ++i) f[i] = frame_at(i);
    return f;
  }
};

// Observed and future tracks of the pedestrians present throughout one
// window. Row order of obs and fut follows ped_ids.
struct TrajectoryWindow {
  FrameId start_frame = 0;
  std::vector<PedId> ped_ids;
  Array obs;  // N x T_obs x 2, absolute meters
  Array fut;  // N x T_pred x 2, absolute meters

  std::size_t size() const noexcept { return ped_ids.size(); }
  std::size_t obs_length() const { return obs.dim(1); }
  std::size_t pred_length() const { return fut.dim(1); }

  Point last_observed(std::size_t n) const {
    const std::size_t t = obs.dim(1) - 1;
    return {obs.at(n, t, 0), obs.at(n, t, 1)};
  }

  friend bool operator==(const TrajectoryWindow&, const TrajectoryWindow&) = default;
};

// Ground-truth groups as pedestrian ids. Pedestrians not listed are alone.
struct GroupLabelSet {
  std::vector<std::vector<PedId>> groups;
};

namespace detail {

inline bool parse_number(std::string_view tok, double& out) {
  const char* first = tok.data();
  const char* last = tok.data() + tok.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last && std::isfinite(out);
}

inline bool parse_integral(std::string_view tok, std::int64_t& out) {
  double v = 0.0;
  if (!parse_number(tok, v) || v != std::floor(v) || std::abs(v) > 9.0e15) return false;
  out = static_cast<std::int64_t>(v);
  return true;
}

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    const std::size_t start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace detail

// Reads whitespace-separated "frame ped x y" rows. Frame ids must lie on a
// uniform grid: every gap between distinct frame ids is a whole multiple of
// the smallest gap, and frames with no annotation are allowed.
inline Scene parse_dataset(std::istream& in) {
  std::vector<RawRecord> records;
  std::set<std::pair<FrameId, PedId>> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto fields = detail::split_ws(line);
    if (fields.empty()) continue;
    if (fields.size() != 4) {
      throw ParseError("expected 4 fields (frame ped x y), got " +
                           std::to_string(fields.size()),
                       line_no);
    }
    RawRecord r;
    if (!detail::parse_integral(fields[0], r.frame_id)) {
      throw ParseError("frame id is not an integer: '" + std::string(fields[0]) + "'", line_no);
    }
    if (!detail::parse_integral(fields[1], r.ped_id)) {
      throw ParseError("pedestrian id is not an integer: '" + std::string(fields[1]) + "'",
                       line_no);
    }
    if (!detail::parse_number(fields[2], r.x) || !detail::parse_number(fields[3], r.y)) {
      throw ParseError("coordinate is not a finite number", line_no);
    }
    if (!seen.emplace(r.frame_id, r.ped_id).second) {
      throw ParseError("duplicate (frame " + std::to_string(r.frame_id) + ", ped " +
                           std::to_string(r.ped_id) + ")",
                       line_no);
    }
    records.push_back(r);
  }

  Scene scene;
  if (records.empty()) return scene;

  std::set<FrameId> frame_set;
  for (const auto& r : records) frame_set.insert(r.frame_id);
  const std::vector<FrameId> frames(frame_set.begin(), frame_set.end());
  FrameId step = 0;
  for (std::size_t i = 1; i < frames.size(); ++i) {
    const FrameId gap = frames[i] - frames[i - 1];
    step = step == 0 ? gap : std::min(step, gap);
  }
  if (step == 0) step = 1;
  for (std::size_t i = 1; i < frames.size(); ++i) {
    if ((frames[i] - frames[i - 1]) % step != 0) {
      throw FormatError("non-uniform frame stride: gap " +
                        std::to_string(frames[i] - frames[i - 1]) + " between frames " +
                        std::to_string(frames[i - 1]) + " and " + std::to_string(frames[i]) +
                        " is not a multiple of " + std::to_string(step));
    }
  }
  scene.first_frame = frames.front();
  scene.frame_step = step;
  scene.frame_count = static_cast<std::size_t>((frames.back() - frames.front()) / step) + 1;
  for (const auto& r : records) scene.tracks[r.ped_id][r.frame_id] = {r.x, r.y};
  return scene;
}

inline Scene parse_dataset(const std::string& text) {
  std::istringstream in(text);
  return parse_dataset(in);
}

// Inverse of parse_dataset: rows sorted by frame then pedestrian, coordinates
// in shortest round-trip form.
inline void write_dataset(std::ostream& out, const Scene& scene) {
  std::map<FrameId, std::vector<std::pair<PedId, Point>>> by_frame;
  for (const auto& [ped, track] : scene.tracks)
    for (const auto& [frame, p] : track) by_frame[frame].emplace_back(ped, p);
  for (const auto& [frame, rows] : by_frame)
    for (const auto& [ped, p] : rows)
      out << frame << '\t' << ped << '\t' << detail::format_double(p[0]) << '\t'
          << detail::format_double(p[1]) << '\n';
}

inline std::string write_dataset(const Scene& scene) {
  std::ostringstream out;
  write_dataset(out, scene);
  return out.str();
}

// Slides a window of t_obs + t_pred frames over the scene grid. Each window
// keeps only pedestrians annotated at every one of its frames, ordered by
// pedestrian id; windows left empty are dropped.
inline std::vector<TrajectoryWindow> make_windows(const Scene& scene,
                                                  std::size_t t_obs = kDefaultObsLength,
                                                  std::size_t t_pred = kDefaultPredLength,
                                                  std::size_t stride = 1) {
  if (t_obs < 1 || t_pred < 1 || stride < 1) {
    throw ConfigError("make_windows: t_obs, t_pred and stride must all be at least 1");
  }
  const std::size_t len = t_obs + t_pred;
  std::vector<TrajectoryWindow> windows;
  for (std::size_t s = 0; s + len <= scene.frame_count; s += stride) {
    TrajectoryWindow w;
    w.start_frame = scene.frame_at(s);
    std::vector<std::vector<Point>> rows;
    for (const auto& [ped, track] : scene.tracks) {
      std::vector<Point> pts;
      pts.reserve(len);
      for (std::size_t f = 0; f < len; ++f) {
        auto it = track.find(scene.frame_at(s + f));
        if (it == track.end()) break;
        pts.push_back(it->second);
      }
      if (pts.size() != len) continue;
      w.ped_ids.push_back(ped);
      rows.push_back(std::move(pts));
    }
    if (rows.empty()) continue;
    const std::size_t n = rows.size();
    w.obs = Array({n, t_obs, 2});
    w.fut = Array({n, t_pred, 2});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t f = 0; f < len; ++f)
        for (std::size_t c = 0; c < 2; ++c) {
          if (f < t_obs) {
            w.obs.at(i, f, c) = rows[i][f][c];
          } else {
            w.fut.at(i, f - t_obs, c) = rows[i][f][c];
          }
        }
    windows.push_back(std::move(w));
  }
  return windows;
}

// Per-step displacements of an N x T x 2 track array; step 0 is zero.
inline Array to_relative(const Array& abs) {
  require_rank(abs, 3, "to_relative");
  Array rel(abs.shape());
  for (std::size_t n = 0; n < abs.dim(0); ++n)
    for (std::size_t t = 1; t < abs.dim(1); ++t)
      for (std::size_t c = 0; c < 2; ++c) rel.at(n, t, c) = abs.at(n, t, c) - abs.at(n, t - 1, c);
  return rel;
}

inline Array to_relative(const TrajectoryWindow& w) { return to_relative(w.obs); }

// Inverse of to_relative given each track's first absolute position (N x 2).
inline Array from_relative(const Array& rel, const Array& first) {
  require_rank(rel, 3, "from_relative");
  Array abs(rel.shape());
  for (std::size_t n = 0; n < rel.dim(0); ++n)
    for (std::size_t c = 0; c < 2; ++c) {
      double acc = first.at(n, c);
      for (std::size_t t = 0; t < rel.dim(1); ++t) {
        if (t > 0) acc += rel.at(n, t, c);
        abs.at(n, t, c) = acc;
      }
    }
  return abs;
}

// Future displacements: step 0 is measured from the last observed position.
inline Array future_relative(const TrajectoryWindow& w) {
  const std::size_t n = w.size(), tp = w.pred_length(), to = w.obs_length();
  Array rel({n, tp, 2});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t t = 0; t < tp; ++t)
      for (std::size_t c = 0; c < 2; ++c) {
        const double prev = t == 0 ? w.obs.at(i, to - 1, c) : w.fut.at(i, t - 1, c);
        rel.at(i, t, c) = w.fut.at(i, t, c) - prev;
      }
  return rel;
}

// ---------------------------------------------------------------------------
// Group labels: one group per line, space-separated pedestrian ids.

inline GroupLabelSet parse_group_labels(std::istream& in) {
  GroupLabelSet labels;
  std::set<PedId> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto fields = detail::split_ws(line);
    if (fields.empty() || fields.front().starts_with('#')) continue;
    std::vector<PedId> group;
    for (auto tok : fields) {
      PedId id = 0;
      if (!detail::parse_integral(tok, id)) {
        throw ParseError("pedestrian id is not an integer: '" + std::string(tok) + "'", line_no);
      }
      if (!seen.insert(id).second) {
        throw ParseError("pedestrian " + std::to_string(id) + " listed in two groups", line_no);
      }
      group.push_back(id);
    }
    labels.groups.push_back(std::move(group));
  }
  return labels;
}

inline GroupLabelSet parse_group_labels(const std::string& text) {
  std::istringstream in(text);
  return parse_group_labels(in);
}

// Singleton groups are omitted.
inline void write_group_labels(std::ostream& out, const GroupLabelSet& labels) {
  for (const auto& g : labels.groups) {
    if (g.size() < 2) continue;
    for (std::size_t i = 0; i < g.size(); ++i) out << (i ? " " : "") << g[i];
    out << '\n';
  }
}

// Restricts labels to the pedestrians of a window. Pedestrians of the window
// that no group mentions become singletons.
inline GroupPartition labels_for_window(const GroupLabelSet& labels,
                                        const TrajectoryWindow& w) {
  std::map<PedId, std::size_t> row;
  for (std::size_t i = 0; i < w.ped_ids.size(); ++i) row[w.ped_ids[i]] = i;
  std::vector<std::vector<std::size_t>> groups;
  std::vector<bool> covered(w.size(), false);
  for (const auto& g : labels.groups) {
    std::vector<std::size_t> members;
    for (PedId id : g) {
      auto it = row.find(id);
      if (it == row.end()) continue;
      if (covered[it->second]) {
        throw AlignmentError("pedestrian " + std::to_string(id) + " labelled twice");
      }
      covered[it->second] = true;
      members.push_back(it->second);
    }
    if (!members.empty()) groups.push_back(std::move(members));
  }
  for (std::size_t i = 0; i < w.size(); ++i)
    if (!covered[i]) groups.push_back({i});
  return GroupPartition(w.size(), std::move(groups));
}

// Converts a partition over window rows back into id-based labels.
inline GroupLabelSet partition_to_labels(const GroupPartition& part,
                                         const std::vector<PedId>& ped_ids) {
  if (part.universe_size() != ped_ids.size()) {
    throw AlignmentError("partition covers " + std::to_string(part.universe_size()) +
                         " pedestrians, window has " + std::to_string(ped_ids.size()));
  }
  GroupLabelSet labels;
  for (const auto& g : part.groups()) {
    std::vector<PedId> ids;
    for (std::size_t i : g) ids.push_back(ped_ids[i]);
    labels.groups.push_back(std::move(ids));
  }
  return labels;
}

// ---------------------------------------------------------------------------
// Binary window cache.
//
//   "GPWC" | u8 version | u64 count | count x window
//   window: i64 start_frame | u64 N | u32 T_obs | u32 T_pred |
//           N x i64 ped id | obs f64 values | fut f64 values
// All integers and floats little-endian.

inline constexpr char kWindowCacheMagic[4] = {'G', 'P', 'W', 'C'};
inline constexpr std::uint8_t kWindowCacheVersion = 1;

inline void write_window_cache(std::ostream& out, const std::vector<TrajectoryWindow>& windows) {
  out.write(kWindowCacheMagic, 4);
  out.put(static_cast<char>(kWindowCacheVersion));
  binary::write_u64(out, windows.size());
  for (const auto& w : windows) {
    binary::write_i64(out, w.start_frame);
    binary::write_u64(out, w.size());
    binary::write_u32(out, static_cast<std::uint32_t>(w.obs_length()));
    binary::write_u32(out, static_cast<std::uint32_t>(w.pred_length()));
    for (PedId id : w.ped_ids) binary::write_i64(out, id);
    for (double v : w.obs.values()) binary::write_f64(out, v);
    for (double v : w.fut.values()) binary::write_f64(out, v);
  }
}

inline std::vector<TrajectoryWindow> read_window_cache(std::istream& in) {
  char magic[4];
  binary::read_exact(in, magic, 4);
  if (!std::equal(magic, magic + 4, kWindowCacheMagic)) {
    throw FormatError("not a window cache (bad magic)");
  }
  char version = 0;
  binary::read_exact(in, &version, 1);
  if (static_cast<std::uint8_t>(version) != kWindowCacheVersion) {
    throw FormatError("unsupported window cache version " +
                      std::to_string(static_cast<int>(static_cast<std::uint8_t>(version))));
  }
  const std::uint64_t count = binary::read_u64(in);
  std::vector<TrajectoryWindow> windows;
  for (std::uint64_t k = 0; k < count; ++k) {
    TrajectoryWindow w;
    w.start_frame = binary::read_i64(in);
    const std::uint64_t n = binary::read_u64(in);
    const std::uint32_t to = binary::read_u32(in);
    const std::uint32_t tp = binary::read_u32(in);
    if (n > (1u << 20) || to == 0 || tp == 0) throw FormatError("corrupt window header");
    for (std::uint64_t i = 0; i < n; ++i) w.ped_ids.push_back(binary::read_i64(in));
    w.obs = Array({n, to, 2});
    w.fut = Array({n, tp, 2});
    for (auto& v : w.obs.values()) v = binary::read_f64(in);
    for (auto& v : w.fut.values()) v = binary::read_f64(in);
    windows.push_back(std::move(w));
  }
  return windows;
}

}  // namespace gpgraph
