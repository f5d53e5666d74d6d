#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace cmdkit {

struct LayerSpan {
  std::string name;
  std::size_t start_row = 0;
  std::size_t row_count = 0;

  bool operator==(const LayerSpan&) const = default;
};

using LayerIndex = std::vector<LayerSpan>;

/// Single layer "all" covering n rows.
LayerIndex single_layer(std::size_t n, std::string name = "all");

/// Throws Error(Index) unless spans are sorted, contiguous, disjoint and cover
/// exactly rows [0, n).
void validate_layers(const LayerIndex& layers, std::size_t n);

/// N weights x (T+1) epochs, one weight's whole trajectory per row.
///
/// Immutable once constructed; every constructor validates the layer index
/// and rejects non-finite values, so a SnapshotMatrix is always valid.
class SnapshotMatrix {
 public:
  SnapshotMatrix(std::size_t rows, std::size_t epochs, std::vector<double> values,
                 LayerIndex layers);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t epochs() const noexcept { return epochs_; }
  /// Last epoch index T (epochs() == T + 1).
  std::size_t last_epoch() const noexcept { return epochs_ - 1; }

  std::span<const double> row(std::size_t i) const noexcept {
    return {values_.data() + i * epochs_, epochs_};
  }
  double at(std::size_t i, std::size_t k) const noexcept {
    return values_[i * epochs_ + k];
  }
  std::span<const double> values() const noexcept { return values_; }
  const LayerIndex& layers() const noexcept { return layers_; }

  /// Name of the layer owning row i.
  const std::string& layer_of(std::size_t i) const;

  /// Copy of column k as a snapshot vector.
  std::vector<double> column(std::size_t k) const;

  bool operator==(const SnapshotMatrix&) const = default;

 private:
  std::size_t rows_;
  std::size_t epochs_;
  std::vector<double> values_;
  LayerIndex layers_;
};

struct EpochSelection {
  enum class Kind { Full, TruncateFrom, Subsample };

  Kind kind = Kind::Full;
  /// first_epoch for TruncateFrom, factor for Subsample, 0 for Full.
  std::size_t parameter = 0;
  /// Original epoch indices kept, strictly increasing.
  std::vector<std::size_t> retained_epochs;

  static EpochSelection full(std::size_t epochs);

  bool operator==(const EpochSelection&) const = default;
};

const char* to_string(EpochSelection::Kind kind) noexcept;
EpochSelection::Kind epoch_kind_from_string(const std::string& s);

struct SelectedTrajectory {
  SnapshotMatrix matrix;
  EpochSelection selection;
};

/// Keeps epochs first_epoch..T. Requires 0 <= first_epoch < T.
SelectedTrajectory truncate_history(const SnapshotMatrix& m, std::size_t first_epoch);

/// Keeps epochs {0, f, 2f, ...} without any pre-filtering. Requires f >= 2
/// and at least two retained epochs.
SelectedTrajectory subsample_epochs(const SnapshotMatrix& m, std::size_t factor);

/// Restricts m to the given original epoch indices.
SnapshotMatrix select_epochs(const SnapshotMatrix& m,
                             std::span<const std::size_t> epochs);

// On-disk format "CMDT" (little-endian):
//   magic "CMDT", u32 version=1, u64 N, u64 T+1, u32 layer_count,
//   per layer {u16 name_len, name bytes, u64 start_row, u64 row_count},
//   N*(T+1) float64 values, row-major.
// A CSV file with header "weight_id,epoch_0,...,epoch_T" is also accepted
// for small matrices (N <= 10000); it loads as a single layer "all".

inline constexpr std::uint32_t kTrajectoryVersion = 1;
inline constexpr std::size_t kCsvMaxRows = 10000;

SnapshotMatrix load_trajectory(const std::filesystem::path& path);
void save_trajectory(const SnapshotMatrix& m, const std::filesystem::path& path);

SnapshotMatrix parse_trajectory_csv(const std::string& text);
std::string format_trajectory_csv(const SnapshotMatrix& m);

/// Serialized CMDT bytes, exposed for hashing and in-memory round trips.
std::vector<std::uint8_t> encode_trajectory(const SnapshotMatrix& m);
SnapshotMatrix decode_trajectory(std::span<const std::uint8_t> bytes);

}  // namespace cmdkit
