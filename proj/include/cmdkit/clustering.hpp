#pragma once

#include <cstddef>
#include <cstdint>
#include <variant>
#include <vector>

#include <json.hpp>

#include "cmdkit/correlation.hpp"
#include "cmdkit/trajectory.hpp"

namespace cmdkit {

struct FixedModes {
  std::size_t modes = 10;
  bool operator==(const FixedModes&) const = default;
};

struct DistanceThreshold {
  double t = 0.5;  // in (0, 1]
  bool operator==(const DistanceThreshold&) const = default;
};

/// Threshold at half of the largest pairwise distance among the samples.
struct HalfMaxDistance {
  bool operator==(const HalfMaxDistance&) const = default;
};

using ClusterCut = std::variant<FixedModes, DistanceThreshold, HalfMaxDistance>;

struct ClusterConfig {
  std::size_t sample_size = kDefaultSampleSize;  // K
  ClusterCut cut = HalfMaxDistance{};
  double epsilon = 0.1;  // diagnostic only: fraction with |corr| >= 1 - epsilon
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const ClusterConfig&) const = default;
};

nlohmann::json to_json(const ClusterConfig& cfg);
ClusterConfig cluster_config_from_json(const nlohmann::json& j);

/// One agglomeration step. Leaves are 0..K-1; the cluster created by merge s
/// has id K + s (the usual linkage-matrix numbering).
struct Merge {
  std::size_t left = 0;
  std::size_t right = 0;
  double height = 0.0;
  std::size_t size = 0;

  bool operator==(const Merge&) const = default;
};

struct Dendrogram {
  std::size_t leaves = 0;
  std::vector<Merge> merges;  // leaves - 1 entries, non-decreasing heights
  double max_distance = 0.0;  // largest pairwise distance among the leaves
};

/// Distance used for clustering: 1 - |corr|.
inline double correlation_distance(double c) { return 1.0 - std::abs(c); }

/// Complete-linkage (farthest point) agglomeration on 1 - |c(i, j)|. At each
/// step the closest pair of clusters is merged, ties resolved towards the
/// lexicographically smallest pair of cluster slots. Throws Error(Shape) for
/// a non-symmetric input or a diagonal that is not 1.
Dendrogram linkage(const CorrelationMatrix& c);

/// Flat labels 0..M-1 numbered by first appearance over the leaves.
/// FixedModes(M): smallest threshold leaving at most M clusters.
/// DistanceThreshold(t): every merge of height <= t.
std::vector<int> cut(const Dendrogram& d, const ClusterCut& how);

/// Threshold actually applied for a cut (for FixedModes: the largest merge
/// height kept, 0 when no merge is applied).
double resolved_threshold(const Dendrogram& d, const ClusterCut& how);

nlohmann::json to_json(const Dendrogram& d);

struct Reference {
  int mode = 0;
  std::size_t row = 0;                // row in the snapshot matrix
  std::size_t sample_position = 0;    // position in SampleSet::indices
  std::vector<double> trajectory;
};

/// Per cluster, the member maximising the sum of |corr| to the other members;
/// near-ties (within 1e-12 per member) go to the lowest row index.
std::vector<Reference> choose_references(const SnapshotMatrix& m, const std::vector<int>& labels,
                                         const SampleSet& sample, const CorrelationMatrix& c);

std::vector<Reference> choose_references(const SnapshotMatrix& m, const std::vector<int>& labels,
                                         const SampleSet& sample);

}  // namespace cmdkit
