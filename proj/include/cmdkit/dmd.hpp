#pragma once

#include <complex>
#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "cmdkit/trajectory.hpp"

namespace cmdkit {

using Complex = std::complex<double>;

/// Exact DMD of rank r:
///   w_i^k ~ sum_j alpha_j phi_j(i) lambda_j^k.
struct DmdModel {
  std::size_t rank = 0;
  std::size_t rows = 0;
  std::vector<Complex> eigenvalues;
  std::vector<Complex> amplitudes;
  std::vector<std::vector<Complex>> modes;  // rank vectors of length rows
  std::vector<double> singular_values;      // all singular values of X
  LayerIndex layers;
  std::vector<std::string> warnings;
};

/// Snapshot pairs X = W[:, 0..T-1], X' = W[:, 1..T]; rank-r truncated SVD of
/// X; reduced operator U_r* X' V_r S_r^-1; its eigenpairs give lambda and the
/// exact-DMD modes X' V_r S_r^-1 w. Amplitudes are the least-squares fit of
/// the first snapshot. A rank above the numerical rank of X is reduced with
/// a warning.
DmdModel dmd_fit(const SnapshotMatrix& m, std::size_t rank);

struct DmdReconstruction {
  SnapshotMatrix matrix;      // real part
  bool overflow = false;      // some |lambda|^k term was clamped
  double max_imag = 0.0;      // largest |imaginary part| dropped
};

DmdReconstruction dmd_reconstruct(const DmdModel& model, std::size_t epochs);

// JSON: {r, N, eigenvalues:[{re,im}], amplitudes:[{re,im}], singular_values,
// layers, warnings, modes:{file, format:"DMDM"}}. The modes live in a binary
// sidecar: magic "DMDM", u32 version=1, u64 N, u64 r, then r blocks of N
// (re, im) float64 pairs, little-endian, one block per mode.
void save_dmd(const DmdModel& model, const std::filesystem::path& json_path);
DmdModel load_dmd(const std::filesystem::path& json_path);

/// Sidecar path used by save_dmd: "<json_path>.modes.bin".
std::filesystem::path dmd_modes_path(const std::filesystem::path& json_path);

}  // namespace cmdkit
