#pragma once

#include <cmath>
#include <cstddef>
#include <set>
#include <string>
#include <vector>

#include "gpgraph/array.hpp"
#include "gpgraph/errors.hpp"
#include "gpgraph/partition.hpp"

namespace gpgraph {

inline constexpr double kDefaultCollisionThreshold = 0.2;

struct TrajectoryScores {
  double ade = 0.0;
  double fde = 0.0;
  double col = 0.0;
  double tcc = 0.0;
};

struct PrecisionRecall {
  double precision = 1.0;
  double recall = 1.0;
};

// Numerators and denominators behind a precision/recall pair, so scores can
// be pooled over many windows before dividing.
struct ScoreCounts {
  double precision_num = 0.0, precision_den = 0.0;
  double recall_num = 0.0, recall_den = 0.0;

  ScoreCounts& operator+=(const ScoreCounts& o) {
    precision_num += o.precision_num;
    precision_den += o.precision_den;
    recall_num += o.recall_num;
    recall_den += o.recall_den;
    return *this;
  }
  PrecisionRecall scores() const {
    return {precision_den > 0 ? precision_num / precision_den : 1.0,
            recall_den > 0 ? recall_num / recall_den : 1.0};
  }
};

struct GroupScores {
  PrecisionRecall pw;
  PrecisionRecall gm;
};

namespace detail {

inline void require_tracks(const Array& pred, const Array& gt, const char* what) {
  if (pred.shape() != gt.shape() || pred.rank() != 3 || pred.dim(2) != 2) {
    throw AlignmentError(std::string(what) + ": prediction " + shape_string(pred.shape()) +
                         " vs ground truth " + shape_string(gt.shape()));
  }
}

inline double point_distance(const Array& a, const Array& b, std::size_t n, std::size_t t) {
  return std::hypot(a.at(n, t, 0) - b.at(n, t, 0), a.at(n, t, 1) - b.at(n, t, 1));
}

inline void require_same_universe(const GroupPartition& a, const GroupPartition& b) {
  if (a.universe_size() != b.universe_size()) {
    throw AlignmentError("group scores: partitions cover " + std::to_string(a.universe_size()) +
                         " and " + std::to_string(b.universe_size()) + " pedestrians");
  }
}

}  // namespace detail

// Mean pointwise Euclidean error over all pedestrians and steps (N x T x 2).
inline double ade(const Array& pred, const Array& gt) {
  detail::require_tracks(pred, gt, "ade");
  const std::size_t n = pred.dim(0), tt = pred.dim(1);
  if (n * tt == 0) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t t = 0; t < tt; ++t) acc += detail::point_distance(pred, gt, i, t);
  return acc / static_cast<double>(n * tt);
}

inline double fde(const Array& pred, const Array& gt) {
  detail::require_tracks(pred, gt, "fde");
  const std::size_t n = pred.dim(0), tt = pred.dim(1);
  if (n == 0 || tt == 0) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += detail::point_distance(pred, gt, i, tt - 1);
  return acc / static_cast<double>(n);
}

// Percentage of pedestrians that come closer than `threshold` to another
// pedestrian at some predicted step, averaged over samples (S x N x T x 2).
inline double col(const Array& samples, double threshold = kDefaultCollisionThreshold) {
  require_rank(samples, 4, "col");
  const std::size_t s = samples.dim(0), n = samples.dim(1), tt = samples.dim(2);
  if (s == 0 || n < 2) return 0.0;
  double total = 0.0;
  std::vector<char> hit(n);
  for (std::size_t k = 0; k < s; ++k) {
    std::fill(hit.begin(), hit.end(), 0);
    for (std::size_t t = 0; t < tt; ++t)
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
          const double d = std::hypot(samples.at(k, i, t, 0) - samples.at(k, j, t, 0),
                                      samples.at(k, i, t, 1) - samples.at(k, j, t, 1));
          if (d < threshold) hit[i] = hit[j] = 1;
        }
    std::size_t count = 0;
    for (char h : hit) count += h != 0;
    total += static_cast<double>(count) / static_cast<double>(n);
  }
  return 100.0 * total / static_cast<double>(s);
}

// Pearson correlation; a series without variance correlates 0.
inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const std::size_t n = a.size();
  if (n < 2 || b.size() != n) return 0.0;
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa <= 0.0 || sbb <= 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

// Per-pedestrian Pearson correlation of the x and y series, averaged over the
// two axes and then over pedestrians.
inline double tcc(const Array& pred, const Array& gt) {
  detail::require_tracks(pred, gt, "tcc");
  const std::size_t n = pred.dim(0), tt = pred.dim(1);
  if (tt < 2) throw DimensionError("tcc: needs at least two steps");
  if (n == 0) return 0.0;
  double acc = 0.0;
  std::vector<double> a(tt), b(tt);
  for (std::size_t i = 0; i < n; ++i) {
    double axes = 0.0;
    for (std::size_t c = 0; c < 2; ++c) {
      for (std::size_t t = 0; t < tt; ++t) {
        a[t] = pred.at(i, t, c);
        b[t] = gt.at(i, t, c);
      }
      axes += pearson(a, b);
    }
    acc += axes / 2.0;
  }
  return acc / static_cast<double>(n);
}

inline ScoreCounts pw_counts(const GroupPartition& pred, const GroupPartition& gt) {
  detail::require_same_universe(pred, gt);
  // count pairs through group intersections rather than enumerating pairs
  auto pairs = [](std::size_t m) { return static_cast<double>(m * (m - 1) / 2); };
  ScoreCounts c;
  for (const auto& g : pred.groups()) c.precision_den += pairs(g.size());
  for (const auto& g : gt.groups()) c.recall_den += pairs(g.size());
  std::vector<std::size_t> overlap(gt.group_count());
  for (const auto& g : pred.groups()) {
    std::fill(overlap.begin(), overlap.end(), 0);
    for (std::size_t i : g) ++overlap[gt.member_of(i)];
    for (std::size_t k : overlap) c.precision_num += pairs(k);
  }
  c.recall_num = c.precision_num;
  return c;
}

// Pairwise precision/recall of same-group pairs. An empty denominator scores 1.
inline PrecisionRecall pw_scores(const GroupPartition& pred, const GroupPartition& gt) {
  return pw_counts(pred, gt).scores();
}

namespace detail {

// Partition over 2N nodes where node N + i is the fake counterpart of i. A
// fake is created for every pedestrian that is a singleton in either input;
// it joins its pedestrian where the pedestrian is alone and stays alone
// otherwise, so both augmented partitions share one universe.
inline GroupPartition augment_with_fakes(const GroupPartition& p, const std::vector<char>& fake) {
  const std::size_t n = p.universe_size();
  std::vector<std::vector<std::size_t>> groups;
  for (const auto& g : p.groups()) {
    groups.push_back(g);
    if (g.size() == 1 && fake[g[0]]) groups.back().push_back(n + g[0]);
  }
  for (std::size_t i = 0; i < n; ++i) {
    const bool alone = p.group(p.member_of(i)).size() == 1;
    if (!fake[i]) groups.push_back({n + i});  // unused fake: inert singleton
    else if (!alone) groups.push_back({n + i});
  }
  return GroupPartition(2 * n, std::move(groups));
}

// Adds sum_q (|q| - parts(q)) and sum_q (|q| - 1), parts counted in `other`.
inline void mitre_terms(const GroupPartition& ref, const GroupPartition& other, double& num,
                        double& den) {
  for (const auto& q : ref.groups()) {
    std::set<std::size_t> parts;
    for (std::size_t i : q) parts.insert(other.member_of(i));
    num += static_cast<double>(q.size() - parts.size());
    den += static_cast<double>(q.size() - 1);
  }
}

}  // namespace detail

inline ScoreCounts gmitre_counts(const GroupPartition& pred, const GroupPartition& gt) {
  detail::require_same_universe(pred, gt);
  const std::size_t n = gt.universe_size();
  std::vector<char> fake(n, 0);
  for (std::size_t i = 0; i < n; ++i)
    fake[i] = pred.group(pred.member_of(i)).size() == 1 || gt.group(gt.member_of(i)).size() == 1;
  const GroupPartition ap = detail::augment_with_fakes(pred, fake);
  const GroupPartition ag = detail::augment_with_fakes(gt, fake);
  ScoreCounts c;
  detail::mitre_terms(ap, ag, c.precision_num, c.precision_den);
  detail::mitre_terms(ag, ap, c.recall_num, c.recall_den);
  return c;
}

inline PrecisionRecall gmitre_scores(const GroupPartition& pred, const GroupPartition& gt) {
  return gmitre_counts(pred, gt).scores();
}

inline GroupScores group_scores(const GroupPartition& pred, const GroupPartition& gt) {
  return {pw_scores(pred, gt), gmitre_scores(pred, gt)};
}

}  // namespace gpgraph
