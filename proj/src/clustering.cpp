#include "cmdkit/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "cmdkit/error.hpp"

namespace cmdkit {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Number of leading merges applied by a cut.
std::size_t merges_applied(const Dendrogram& d, const ClusterCut& how) {
  const auto& merges = d.merges;
  auto prefix_at_or_below = [&](double t) {
    std::size_t p = 0;
    while (p < merges.size() && merges[p].height <= t) ++p;
    return p;
  };
  if (const auto* fixed = std::get_if<FixedModes>(&how)) {
    // Merges of equal height are applied together, so the result can have
    // fewer than M clusters when ties straddle the cut.
    std::size_t p = 0;
    while (d.leaves - p > fixed->modes && p < merges.size()) {
      const double h = merges[p].height;
      while (p < merges.size() && merges[p].height == h) ++p;
    }
    return p;
  }
  if (const auto* thr = std::get_if<DistanceThreshold>(&how)) return prefix_at_or_below(thr->t);
  if (d.max_distance == 0.0) return merges.size();
  return prefix_at_or_below(0.5 * d.max_distance);
}

}  // namespace

void ClusterConfig::validate() const {
  if (sample_size == 0) throw Error(ErrorKind::Config, "sample size K must be positive");
  if (const auto* fixed = std::get_if<FixedModes>(&cut)) {
    if (fixed->modes == 0) throw Error(ErrorKind::Config, "number of modes M must be positive");
    if (fixed->modes > sample_size) throw Error(ErrorKind::Config, "number of modes M must not exceed K");
  }
  if (const auto* thr = std::get_if<DistanceThreshold>(&cut)) {
    if (!(thr->t > 0.0 && thr->t <= 1.0)) throw Error(ErrorKind::Config, "threshold t must lie in (0, 1]");
  }
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw Error(ErrorKind::Config, "epsilon must lie in (0, 1)");
}

nlohmann::json to_json(const ClusterConfig& cfg) {
  nlohmann::json cut;
  if (const auto* fixed = std::get_if<FixedModes>(&cfg.cut)) {
    cut = {{"kind", "fixed_modes"}, {"M", fixed->modes}};
  } else if (const auto* thr = std::get_if<DistanceThreshold>(&cfg.cut)) {
    cut = {{"kind", "threshold"}, {"t", thr->t}};
  } else {
    cut = {{"kind", "half_max_distance"}};
  }
  return {{"K", cfg.sample_size}, {"cut", cut}, {"epsilon", cfg.epsilon}, {"seed", cfg.seed}};
}

ClusterConfig cluster_config_from_json(const nlohmann::json& j) {
  try {
    ClusterConfig cfg;
    cfg.sample_size = j.at("K").get<std::size_t>();
    cfg.epsilon = j.at("epsilon").get<double>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    const auto& cut = j.at("cut");
    const auto kind = cut.at("kind").get<std::string>();
    if (kind == "fixed_modes") {
      cfg.cut = FixedModes{cut.at("M").get<std::size_t>()};
    } else if (kind == "threshold") {
      cfg.cut = DistanceThreshold{cut.at("t").get<double>()};
    } else if (kind == "half_max_distance") {
      cfg.cut = HalfMaxDistance{};
    } else {
      throw Error(ErrorKind::Schema, "unknown cut kind '" + kind + "'");
    }
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Schema, std::string("cluster config: ") + e.what());
  }
}

Dendrogram linkage(const CorrelationMatrix& c) {
  const std::size_t k = c.size;
  if (k == 0 || c.values.size() != k * k) throw Error(ErrorKind::Shape, "linkage: empty or ragged matrix");
  std::vector<double> dist(k * k);
  double max_distance = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    if (std::abs(c(i, i) - 1.0) > 1e-12) throw Error(ErrorKind::Shape, "linkage: diagonal must be 1");
    for (std::size_t j = 0; j < k; ++j) {
      if (std::abs(c(i, j) - c(j, i)) > 1e-12) throw Error(ErrorKind::Shape, "linkage: matrix is not symmetric");
      const double d = i == j ? 0.0 : std::max(0.0, correlation_distance(c(std::min(i, j), std::max(i, j))));
      dist[i * k + j] = d;
      max_distance = std::max(max_distance, d);
    }
  }

  std::vector<bool> active(k, true);
  std::vector<std::size_t> id(k), size(k, 1), nn(k, 0);
  std::vector<double> nn_dist(k, kInf);
  std::iota(id.begin(), id.end(), std::size_t{0});

  // Nearest active neighbour with a larger slot index, ties to the smallest slot.
  auto refresh = [&](std::size_t i) {
    nn_dist[i] = kInf;
    for (std::size_t j = i + 1; j < k; ++j) {
      if (active[j] && dist[i * k + j] < nn_dist[i]) {
        nn_dist[i] = dist[i * k + j];
        nn[i] = j;
      }
    }
  };
  for (std::size_t i = 0; i < k; ++i) refresh(i);

  Dendrogram out;
  out.leaves = k;
  out.max_distance = max_distance;
  out.merges.reserve(k - 1);
  for (std::size_t step = 0; step + 1 < k; ++step) {
    std::size_t a = k;
    double best = kInf;
    for (std::size_t i = 0; i < k; ++i) {
      if (active[i] && nn_dist[i] < best) {
        best = nn_dist[i];
        a = i;
      }
    }
    const std::size_t b = nn[a];
    out.merges.push_back({std::min(id[a], id[b]), std::max(id[a], id[b]), best, size[a] + size[b]});

    for (std::size_t h = 0; h < k; ++h) {
      if (!active[h] || h == a || h == b) continue;
      const double merged = std::max(dist[a * k + h], dist[b * k + h]);
      dist[a * k + h] = merged;
      dist[h * k + a] = merged;
    }
    active[b] = false;
    id[a] = k + step;
    size[a] += size[b];
    refresh(a);
    for (std::size_t h = 0; h < b; ++h) {
      if (!active[h] || h == a) continue;
      if (nn[h] == b || nn[h] == a) refresh(h);
    }
  }
  return out;
}

std::vector<int> cut(const Dendrogram& d, const ClusterCut& how) {
  const std::size_t k = d.leaves;
  const std::size_t applied = merges_applied(d, how);
  std::vector<std::size_t> parent(2 * k, 0);
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  for (std::size_t s = 0; s < applied; ++s) {
    parent[d.merges[s].left] = k + s;
    parent[d.merges[s].right] = k + s;
  }
  auto root = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x];
    return x;
  };
  std::vector<int> labels(k, -1);
  std::vector<int> label_of_root(2 * k, -1);
  int next = 0;
  for (std::size_t leaf = 0; leaf < k; ++leaf) {
    const std::size_t r = root(leaf);
    if (label_of_root[r] < 0) label_of_root[r] = next++;
    labels[leaf] = label_of_root[r];
  }
  return labels;
}

double resolved_threshold(const Dendrogram& d, const ClusterCut& how) {
  if (const auto* thr = std::get_if<DistanceThreshold>(&how)) return thr->t;
  if (std::holds_alternative<HalfMaxDistance>(how)) return 0.5 * d.max_distance;
  const std::size_t applied = merges_applied(d, how);
  return applied == 0 ? 0.0 : d.merges[applied - 1].height;
}

nlohmann::json to_json(const Dendrogram& d) {
  nlohmann::json merges = nlohmann::json::array();
  for (const auto& m : d.merges)
    merges.push_back({{"left", m.left}, {"right", m.right}, {"height", m.height}, {"size", m.size}});
  return {{"leaves", d.leaves}, {"max_distance", d.max_distance}, {"merges", merges}};
}

std::vector<Reference> choose_references(const SnapshotMatrix& m, const std::vector<int>& labels,
                                         const SampleSet& sample, const CorrelationMatrix& c) {
  const std::size_t k = sample.indices.size();
  if (labels.size() != k || c.size != k)
    throw Error(ErrorKind::Shape, "choose_references: labels, sample and matrix sizes differ");
  const int clusters = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
  std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(clusters));
  for (std::size_t p = 0; p < k; ++p) {
    if (labels[p] < 0) throw Error(ErrorKind::Shape, "choose_references: negative label");
    members[static_cast<std::size_t>(labels[p])].push_back(p);
  }

  std::vector<Reference> refs;
  refs.reserve(members.size());
  for (std::size_t mode = 0; mode < members.size(); ++mode) {
    const auto& group = members[mode];
    if (group.empty()) throw Error(ErrorKind::Degenerate, "cluster " + std::to_string(mode) + " is empty");
    const double tie = 1e-12 * static_cast<double>(group.size());
    std::size_t best = group.front();
    double best_sum = -1.0;
    // Sample positions are sorted by row index, so scanning in order makes
    // the first of several near-equal sums the lowest row.
    for (std::size_t p : group) {
      double sum = 0.0;
      for (std::size_t q : group) sum += std::abs(c(p, q));
      if (sum > best_sum + tie) {
        best_sum = sum;
        best = p;
      }
    }
    const std::size_t row = sample.indices[best];
    const auto traj = m.row(row);
    refs.push_back({static_cast<int>(mode), row, best, std::vector<double>(traj.begin(), traj.end())});
  }
  return refs;
}

std::vector<Reference> choose_references(const SnapshotMatrix& m, const std::vector<int>& labels,
                                         const SampleSet& sample) {
  return choose_references(m, labels, sample, corr_matrix(m, sample));
}

}  // namespace cmdkit
