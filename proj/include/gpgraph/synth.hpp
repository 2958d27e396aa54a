#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <utility>
#include <vector>

#include "gpgraph/errors.hpp"
#include "gpgraph/trajectories.hpp"

namespace gpgraph {

// Straight-line group kinematics: members of a group share one velocity and
// walk side by side, offset perpendicular to the heading.
struct SynthSpec {
  std::size_t group_count = 3;
  std::size_t min_size = 1;
  std::size_t max_size = 3;
  double min_speed = 0.8;  // m/s
  double max_speed = 1.6;
  double min_heading = 0.0;  // radians, uniform
  double max_heading = 2.0 * std::numbers::pi;
  double spacing = 0.6;  // lateral distance between neighbouring members, m
  // Distinct groups differ in velocity by at least this much (m/s), so a
  // motion-only grouper can tell them apart. 0 disables the constraint.
  double min_velocity_gap = 0.4;
  double noise = 0.0;    // i.i.d. positional noise sigma, m
  double area = 12.0;    // group start points are uniform in [-area/2, area/2]^2
  FrameId frame_step = 10;
  double frame_interval = kDefaultFrameInterval;  // seconds per frame step
  std::size_t frames = 20;
  std::uint64_t seed = 0;

  void validate() const {
    if (frames == 0) throw ConfigError("synth: frame count must be positive");
    if (group_count == 0) throw ConfigError("synth: group count must be positive");
    if (min_size == 0 || min_size > max_size) throw ConfigError("synth: invalid group size range");
    if (!(min_speed <= max_speed) || min_speed < 0) throw ConfigError("synth: invalid speed range");
    if (!(min_heading <= max_heading)) throw ConfigError("synth: invalid heading range");
    if (!(noise >= 0) || !(spacing >= 0) || !(area >= 0) || !(min_velocity_gap >= 0)) {
      throw ConfigError("synth: noise, spacing, area and velocity gap must be non-negative");
    }
    if (frame_step <= 0 || !(frame_interval > 0)) {
      throw ConfigError("synth: frame step and interval must be positive");
    }
  }
};

struct SynthScene {
  Scene scene;
  GroupLabelSet labels;  // every group including singletons
};

namespace detail {

inline constexpr int kMaxVelocityDraws = 10000;

// `divergence` > 0 makes the members of the first group (if it has at least
// two) swerve apart around the middle of the sequence and re-converge.
inline SynthScene generate_scene(const SynthSpec& spec, double divergence) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  auto uniform = [&](double lo, double hi) {
    return lo == hi ? lo : std::uniform_real_distribution<double>(lo, hi)(rng);
  };
  std::normal_distribution<double> normal(0.0, 1.0);

  SynthScene out;
  out.scene.first_frame = 0;
  out.scene.frame_step = spec.frame_step;
  out.scene.frame_count = spec.frames;
  PedId next_id = 1;
  const double half = spec.area / 2.0;
  std::vector<std::array<double, 2>> velocities;
  for (std::size_t g = 0; g < spec.group_count; ++g) {
    const auto size = static_cast<std::size_t>(std::uniform_int_distribution<std::size_t>(
        spec.min_size, spec.max_size)(rng));
    const double cx = uniform(-half, half), cy = uniform(-half, half);
    double speed = 0, heading = 0, vx = 0, vy = 0;
    for (int attempt = 0;; ++attempt) {
      if (attempt == kMaxVelocityDraws) {
        throw ConfigError("synth: cannot place " + std::to_string(spec.group_count) +
                          " groups with velocity gap " + std::to_string(spec.min_velocity_gap) +
                          " m/s in the speed/heading ranges");
      }
      speed = uniform(spec.min_speed, spec.max_speed);
      heading = uniform(spec.min_heading, spec.max_heading);
      vx = speed * std::cos(heading), vy = speed * std::sin(heading);
      bool clear = true;
      for (const auto& v : velocities) clear = clear && std::hypot(vx - v[0], vy - v[1]) >= spec.min_velocity_gap;
      if (clear) break;
    }
    velocities.push_back({vx, vy});
    const double px = -std::sin(heading), py = std::cos(heading);  // lateral unit vector
    std::vector<PedId> members;
    for (std::size_t m = 0; m < size; ++m) {
      const PedId id = next_id++;
      members.push_back(id);
      const double lane = static_cast<double>(m) - static_cast<double>(size - 1) / 2.0;
      auto& track = out.scene.tracks[id];
      for (std::size_t f = 0; f < spec.frames; ++f) {
        const double time = static_cast<double>(f) * spec.frame_interval;
        double offset = lane * spec.spacing;
        if (g == 0 && size >= 2 && divergence > 0 && spec.frames > 1) {
          // smooth bump, zero at both ends of the sequence
          const double phase = static_cast<double>(f) / static_cast<double>(spec.frames - 1);
          const double bump = std::sin(std::numbers::pi * phase);
          offset += (lane >= 0 ? 1.0 : -1.0) * divergence * bump * bump / 2.0;
        }
        double x = cx + vx * time + px * offset;
        double y = cy + vy * time + py * offset;
        if (spec.noise > 0) {
          x += spec.noise * normal(rng);
          y += spec.noise * normal(rng);
        }
        track[spec.frame_step * static_cast<FrameId>(f)] = {x, y};
      }
    }
    out.labels.groups.push_back(std::move(members));
  }
  return out;
}

}  // namespace detail

inline SynthScene generate(const SynthSpec& spec) { return detail::generate_scene(spec, 0.0); }

// Same scene as generate() except that the first group splits sideways
// (total extra separation `divergence` metres at the midpoint) and rejoins;
// its label is unchanged.
inline SynthScene scenario_split_merge(const SynthSpec& spec, double divergence) {
  if (!(divergence >= 0)) throw ConfigError("synth: divergence must be non-negative");
  return detail::generate_scene(spec, divergence);
}

}  // namespace gpgraph
