#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "gpgraph/errors.hpp"

namespace gpgraph {

// Disjoint cover of pedestrian indices 0..N-1.
//
// Groups are stored with members ascending and groups ordered by their
// smallest member, so two partitions describing the same sets compare equal.
class GroupPartition {
 public:
  GroupPartition() = default;

  // Validates and canonicalizes. Throws PartitionError on an empty group,
  // an out-of-range index, overlap, or an uncovered index.
  GroupPartition(std::size_t n, std::vector<std::vector<std::size_t>> groups)
      : member_of_(n, kUnassigned) {
    for (auto& g : groups) {
      if (g.empty()) throw PartitionError("empty group in partition");
      std::sort(g.begin(), g.end());
    }
    std::sort(groups.begin(), groups.end(),
              [](const auto& a, const auto& b) { return a.front() < b.front(); });
    for (std::size_t k = 0; k < groups.size(); ++k) {
      for (std::size_t i : groups[k]) {
        if (i >= n) {
          throw PartitionError("index " + std::to_string(i) +
                               " outside universe of size " + std::to_string(n));
        }
        if (member_of_[i] != kUnassigned) {
          throw PartitionError("index " + std::to_string(i) +
                               " appears in more than one group");
        }
        member_of_[i] = k;
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (member_of_[i] == kUnassigned) {
        throw PartitionError("index " + std::to_string(i) + " is not covered");
      }
    }
    groups_ = std::move(groups);
  }

  static GroupPartition singletons(std::size_t n) {
    std::vector<std::vector<std::size_t>> g(n);
    for (std::size_t i = 0; i < n; ++i) g[i] = {i};
    return GroupPartition(n, std::move(g));
  }

  static GroupPartition single_group(std::size_t n) {
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), std::size_t{0});
    return n == 0 ? GroupPartition() : GroupPartition(n, {std::move(all)});
  }

  // Partition from a label per index; equal labels share a group.
  static GroupPartition from_labels(const std::vector<std::size_t>& labels) {
    std::vector<std::vector<std::size_t>> groups;
    std::vector<std::pair<std::size_t, std::size_t>> seen;  // label -> group
    for (std::size_t i = 0; i < labels.size(); ++i) {
      auto it = std::find_if(seen.begin(), seen.end(),
                             [&](const auto& p) { return p.first == labels[i]; });
      if (it == seen.end()) {
        seen.emplace_back(labels[i], groups.size());
        groups.push_back({i});
      } else {
        groups[it->second].push_back(i);
      }
    }
    return GroupPartition(labels.size(), std::move(groups));
  }

  std::size_t universe_size() const noexcept { return member_of_.size(); }
  std::size_t group_count() const noexcept { return groups_.size(); }
  const std::vector<std::vector<std::size_t>>& groups() const noexcept {
    return groups_;
  }
  const std::vector<std::size_t>& group(std::size_t k) const { return groups_.at(k); }
  std::size_t member_of(std::size_t i) const { return member_of_.at(i); }
  const std::vector<std::size_t>& membership() const noexcept { return member_of_; }

  bool same_group(std::size_t i, std::size_t j) const {
    return member_of_.at(i) == member_of_.at(j);
  }

  bool all_singletons() const noexcept {
    return groups_.size() == member_of_.size();
  }

  friend bool operator==(const GroupPartition& a, const GroupPartition& b) {
    return a.groups_ == b.groups_ && a.member_of_ == b.member_of_;
  }

 private:
  static constexpr std::size_t kUnassigned = static_cast<std::size_t>(-1);

  std::vector<std::vector<std::size_t>> groups_;
  std::vector<std::size_t> member_of_;
};

}  // namespace gpgraph
