#include "cmdkit/correlation.hpp"

#include <algorithm>
#include <cmath>

#include "cmdkit/error.hpp"
#include "cmdkit/parallel.hpp"
#include "cmdkit/random.hpp"

namespace cmdkit {

namespace {

double dot(std::span<const double> a, std::span<const double> b) noexcept {
  double acc = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) acc += a[k] * b[k];
  return acc;
}

double clamp_unit(double c) noexcept { return std::clamp(c, -1.0, 1.0); }

// Centralized row scaled to unit norm; empty when the row has zero variance.
std::vector<double> unit_profile(std::span<const double> row) {
  CentralizedRow c = centralize(row);
  if (c.norm == 0.0) return {};
  for (double& v : c.values) v /= c.norm;
  return std::move(c.values);
}

// Draws `count` distinct entries of pool (partial Fisher-Yates); pool is permuted.
void draw_distinct(std::vector<std::size_t>& pool, std::size_t count, Rng& rng,
                   std::vector<std::size_t>& out) {
  count = std::min(count, pool.size());
  for (std::size_t t = 0; t < count; ++t) {
    const std::size_t j = t + rng.index(pool.size() - t);
    std::swap(pool[t], pool[j]);
    out.push_back(pool[t]);
  }
}

}  // namespace

bool is_zero_variance(std::span<const double> row) noexcept {
  return std::all_of(row.begin(), row.end(), [&](double v) { return v == row.front(); });
}

CentralizedRow centralize(std::span<const double> row) {
  CentralizedRow out;
  out.values.assign(row.size(), 0.0);
  if (row.empty() || is_zero_variance(row)) return out;
  double sum = 0.0;
  for (double v : row) sum += v;
  const double mean = sum / static_cast<double>(row.size());
  double sq = 0.0;
  for (std::size_t k = 0; k < row.size(); ++k) {
    out.values[k] = row[k] - mean;
    sq += out.values[k] * out.values[k];
  }
  out.norm = std::sqrt(sq);
  return out;
}

double corr(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw Error(ErrorKind::Shape, "corr: trajectories differ in length");
  if (u.size() < 2) throw Error(ErrorKind::Shape, "corr: need at least two epochs");
  const CentralizedRow cu = centralize(u);
  const CentralizedRow cv = centralize(v);
  if (cu.norm == 0.0 || cv.norm == 0.0)
    throw Error(ErrorKind::Undefined, "corr: zero-variance trajectory");
  const double su = dot(cu.values, cu.values), sv = dot(cv.values, cv.values);
  return clamp_unit(dot(cu.values, cv.values) / std::sqrt(su * sv));
}

SampleSet sample_representatives(const SnapshotMatrix& m, std::size_t k, std::uint64_t seed) {
  if (k == 0) throw Error(ErrorKind::Config, "sample size K must be positive");
  if (k > m.rows())
    throw Error(ErrorKind::Config, "sample size K=" + std::to_string(k) + " exceeds N=" +
                                       std::to_string(m.rows()));
  const auto& layers = m.layers();
  std::vector<std::vector<std::size_t>> eligible_per_layer(layers.size());
  std::size_t eligible = 0;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    for (std::size_t i = layers[l].start_row; i < layers[l].start_row + layers[l].row_count; ++i) {
      if (!is_zero_variance(m.row(i))) eligible_per_layer[l].push_back(i);
    }
    eligible += eligible_per_layer[l].size();
  }
  if (eligible < k)
    throw Error(ErrorKind::Degenerate, "only " + std::to_string(eligible) +
                                           " nonconstant weights, cannot sample K=" + std::to_string(k));

  Rng rng(seed);
  std::vector<std::size_t> chosen;
  chosen.reserve(k);
  if (k / 2 > layers.size()) {
    const std::size_t per_layer = k / (2 * layers.size());
    for (auto& pool : eligible_per_layer) draw_distinct(pool, per_layer, rng, chosen);
  }
  std::vector<bool> taken(m.rows(), false);
  for (auto i : chosen) taken[i] = true;
  std::vector<std::size_t> rest;
  rest.reserve(eligible - chosen.size());
  for (const auto& pool : eligible_per_layer) {
    std::vector<std::size_t> sorted = pool;
    std::sort(sorted.begin(), sorted.end());
    for (auto i : sorted)
      if (!taken[i]) rest.push_back(i);
  }
  draw_distinct(rest, k - chosen.size(), rng, chosen);

  SampleSet out;
  out.seed = seed;
  out.indices = std::move(chosen);
  std::sort(out.indices.begin(), out.indices.end());
  for (auto i : out.indices) ++out.per_layer_counts[m.layer_of(i)];
  return out;
}

CorrelationMatrix corr_matrix(const SnapshotMatrix& m, const SampleSet& s) {
  const std::size_t k = s.indices.size();
  std::vector<std::vector<double>> unit(k);
  for (std::size_t a = 0; a < k; ++a) {
    if (s.indices[a] >= m.rows()) throw Error(ErrorKind::Index, "sample index out of range");
    unit[a] = unit_profile(m.row(s.indices[a]));
    if (unit[a].empty())
      throw Error(ErrorKind::Undefined, "sampled weight " + std::to_string(s.indices[a]) +
                                            " has zero variance");
  }
  CorrelationMatrix c{k, std::vector<double>(k * k, 0.0)};
  for (std::size_t a = 0; a < k; ++a) {
    c(a, a) = 1.0;
    for (std::size_t b = a + 1; b < k; ++b) {
      const double v = clamp_unit(dot(unit[a], unit[b]));
      c(a, b) = v;
      c(b, a) = v;
    }
  }
  return c;
}

std::vector<ModeAssignment> assign_to_modes(const SnapshotMatrix& m,
                                            const std::vector<std::vector<double>>& references,
                                            unsigned threads) {
  if (references.empty()) throw Error(ErrorKind::Config, "assign_to_modes needs at least one reference");
  std::vector<std::vector<double>> centred;
  std::vector<double> sq;
  centred.reserve(references.size());
  for (std::size_t r = 0; r < references.size(); ++r) {
    if (references[r].size() != m.epochs())
      throw Error(ErrorKind::Shape, "reference " + std::to_string(r) + " has the wrong epoch count");
    CentralizedRow c = centralize(references[r]);
    if (c.norm == 0.0) throw Error(ErrorKind::Undefined, "reference " + std::to_string(r) + " has zero variance");
    sq.push_back(dot(c.values, c.values));
    centred.push_back(std::move(c.values));
  }

  std::vector<ModeAssignment> out(m.rows());
  parallel_for(m.rows(), resolve_threads(threads), [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const CentralizedRow c = centralize(m.row(i));
      if (c.norm == 0.0) {
        out[i] = {kStaticMode, 0.0};
        continue;
      }
      const double own = dot(c.values, c.values);
      int best = 0;
      double best_corr = 0.0, best_abs = -1.0;
      for (std::size_t r = 0; r < centred.size(); ++r) {
        const double v = clamp_unit(dot(c.values, centred[r]) / std::sqrt(own * sq[r]));
        if (std::abs(v) > best_abs) {
          best = static_cast<int>(r);
          best_corr = v;
          best_abs = std::abs(v);
        }
      }
      out[i] = {best, best_corr};
    }
  });
  return out;
}

}  // namespace cmdkit
