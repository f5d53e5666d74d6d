#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "cmdkit/trajectory.hpp"

namespace cmdkit {

/// Trajectory minus its mean over all epochs, with the Euclidean norm of the result.
struct CentralizedRow {
  std::vector<double> values;
  double norm = 0.0;
};

/// True when every entry equals the first one; correlation is undefined there.
bool is_zero_variance(std::span<const double> row) noexcept;

CentralizedRow centralize(std::span<const double> row);

/// Pearson correlation over the epoch axis, clamped to [-1, 1].
/// Throws Error(Undefined) if either input has zero variance.
double corr(std::span<const double> u, std::span<const double> v);

/// Symmetric K x K matrix, row-major.
struct CorrelationMatrix {
  std::size_t size = 0;
  std::vector<double> values;

  double operator()(std::size_t i, std::size_t j) const { return values[i * size + j]; }
  double& operator()(std::size_t i, std::size_t j) { return values[i * size + j]; }
};

struct SampleSet {
  std::vector<std::size_t> indices;  // sorted, unique
  std::uint64_t seed = 0;
  std::map<std::string, std::size_t> per_layer_counts;
};

inline constexpr std::size_t kDefaultSampleSize = 1000;

/// Draws K distinct nonconstant rows. When K/2 exceeds the layer count, each
/// layer first receives floor(K / (2 * layers)) uniform draws from its own
/// rows and the remainder is drawn uniformly from the whole matrix; otherwise
/// all K are uniform. Throws Error(Degenerate) when fewer than K rows are
/// nonconstant.
SampleSet sample_representatives(const SnapshotMatrix& m, std::size_t k, std::uint64_t seed);

/// Correlations among the sampled rows; unit diagonal, exactly symmetric.
CorrelationMatrix corr_matrix(const SnapshotMatrix& m, const SampleSet& s);

struct ModeAssignment {
  int mode = -1;      // -1: static (zero-variance) row
  double corr = 0.0;  // signed correlation with the chosen reference
};

inline constexpr int kStaticMode = -1;

/// Assigns every row to the reference of maximal |corr|, ties to the lowest
/// mode id. Cost O(N * M * T); rows are independent, so the result does not
/// depend on the worker count.
std::vector<ModeAssignment> assign_to_modes(const SnapshotMatrix& m,
                                            const std::vector<std::vector<double>>& references,
                                            unsigned threads = 1);

}  // namespace cmdkit
