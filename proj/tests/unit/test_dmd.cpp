#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "cmdkit/dmd.hpp"
#include "cmdkit/error.hpp"
#include "cmdkit/generators.hpp"
#include "cmdkit/random.hpp"
#include "cmdkit/report.hpp"

using namespace cmdkit;
namespace fs = std::filesystem;

namespace {

// Q = S diag(eigs) S^-1 for a fixed well-conditioned S.
DenseMatrix similar_to(const std::vector<double>& eigs, std::uint64_t seed) {
  const auto n = static_cast<Eigen::Index>(eigs.size());
  Rng rng(seed);
  Eigen::MatrixXd s(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) s(i, j) = (i == j ? 2.0 : 0.0) + rng.uniform(-0.5, 0.5);
  Eigen::VectorXd d(n);
  for (Eigen::Index i = 0; i < n; ++i) d(i) = eigs[static_cast<std::size_t>(i)];
  const Eigen::MatrixXd q = s * d.asDiagonal() * s.inverse();
  DenseMatrix out{eigs.size(), eigs.size(), {}};
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) out.data.push_back(q(i, j));
  return out;
}

fs::path temp_path(const std::string& name) {
  return fs::temp_directory_path() / ("cmdkit_dmd_" + std::to_string(::getpid()) + "_" + name);
}

}  // namespace

TEST(Dmd, SingleExponential) {
  std::vector<double> v(51);
  for (std::size_t k = 0; k < v.size(); ++k) v[k] = std::pow(0.9, static_cast<double>(k));
  SnapshotMatrix m(1, 51, v, single_layer(1));
  const auto model = dmd_fit(m, 1);
  ASSERT_EQ(model.rank, 1u);
  EXPECT_NEAR(model.eigenvalues[0].real(), 0.9, 1e-8);
  EXPECT_NEAR(model.eigenvalues[0].imag(), 0.0, 1e-12);
  const auto rec = dmd_reconstruct(model, 51);
  EXPECT_FALSE(rec.overflow);
  for (std::size_t k = 0; k < 51; ++k) EXPECT_NEAR(rec.matrix.at(0, k), v[k], 1e-8);
}

TEST(Dmd, ConstantMatrix) {
  SnapshotMatrix m(3, 6, std::vector<double>{2, 2, 2, 2, 2, 2, -1, -1, -1, -1, -1, -1, 5, 5, 5, 5, 5, 5},
                   single_layer(3));
  const auto model = dmd_fit(m, 1);
  EXPECT_NEAR(model.eigenvalues[0].real(), 1.0, 1e-12);
  const auto rec = dmd_reconstruct(model, 6);
  EXPECT_NEAR(rec.matrix.at(2, 5), 5.0, 1e-12);
}

TEST(Dmd, TwoModeLinearSystem) {
  const auto q = similar_to({0.95, 0.8}, 3);
  const std::vector<double> w0{1.0, -0.5};
  const auto m = generate_linear_system(q, w0, 60);
  const auto model = dmd_fit(m, 2);
  EXPECT_NEAR(model.eigenvalues[0].real(), 0.95, 1e-6);
  EXPECT_NEAR(model.eigenvalues[1].real(), 0.8, 1e-6);
  const auto rec = dmd_reconstruct(model, 61);
  EXPECT_LT(weights_mse(m, rec.matrix), 1e-20);
}

TEST(Dmd, LiftedLinearSystemRecoversEigenvalues) {
  // 3 eigenvalues embedded in 20 observed coordinates.
  const auto q = similar_to({0.97, 0.9, 0.6}, 4);
  const auto small = generate_linear_system(q, std::vector<double>{1.0, 0.7, -0.4}, 80);
  Rng rng(5);
  std::vector<double> v(20 * 81);
  for (std::size_t i = 0; i < 20; ++i) {
    double c[3];
    for (auto& x : c) x = rng.normal();
    for (std::size_t k = 0; k < 81; ++k)
      v[i * 81 + k] = c[0] * small.at(0, k) + c[1] * small.at(1, k) + c[2] * small.at(2, k);
  }
  SnapshotMatrix m(20, 81, v, single_layer(20));
  const auto model = dmd_fit(m, 3);
  std::vector<double> got;
  for (const auto& z : model.eigenvalues) got.push_back(z.real());
  EXPECT_NEAR(got[0], 0.97, 1e-6);
  EXPECT_NEAR(got[1], 0.9, 1e-6);
  EXPECT_NEAR(got[2], 0.6, 1e-6);
  EXPECT_LT(weights_mse(m, dmd_reconstruct(model, 81).matrix), 1e-18);
}

TEST(Dmd, ComplexPairGivesRealReconstruction) {
  const double rho = 0.97, theta = 0.3;
  DenseMatrix q{2, 2, {rho * std::cos(theta), -rho * std::sin(theta), rho * std::sin(theta), rho * std::cos(theta)}};
  const auto m = generate_linear_system(q, std::vector<double>{1.0, 0.0}, 40);
  const auto model = dmd_fit(m, 2);
  EXPECT_NEAR(std::abs(model.eigenvalues[0]), rho, 1e-9);
  EXPECT_NEAR(std::abs(model.eigenvalues[0].imag()), rho * std::sin(theta), 1e-9);
  const auto rec = dmd_reconstruct(model, 41);
  EXPECT_LT(rec.max_imag, 1e-9);
  EXPECT_LT(weights_mse(m, rec.matrix), 1e-20);
}

TEST(Dmd, FirstSnapshotIsLeastSquaresFit) {
  Rng rng(6);
  std::vector<double> v(8 * 12);
  for (auto& x : v) x = rng.normal();
  SnapshotMatrix m(8, 12, v, single_layer(8));
  const auto model = dmd_fit(m, 3);
  const auto rec = dmd_reconstruct(model, 12);
  // Residual of snapshot 0 is orthogonal to every mode.
  for (const auto& phi : model.modes) {
    Complex acc = 0;
    for (std::size_t i = 0; i < 8; ++i) acc += std::conj(phi[i]) * (m.at(i, 0) - rec.matrix.at(i, 0));
    EXPECT_LT(std::abs(acc), 1e-9);
  }
}

TEST(Dmd, RankChecksAndShrink) {
  SnapshotMatrix m(2, 4, std::vector<double>{1, 2, 3, 4, 2, 4, 6, 8}, single_layer(2));
  EXPECT_THROW(dmd_fit(m, 0), Error);
  EXPECT_THROW(dmd_fit(m, 3), Error);
  const auto model = dmd_fit(m, 2);  // rows are collinear
  EXPECT_EQ(model.rank, 1u);
  ASSERT_EQ(model.warnings.size(), 1u);
}

TEST(Dmd, OverflowIsClamped) {
  std::vector<double> v(10);
  for (std::size_t k = 0; k < 10; ++k) v[k] = std::pow(50.0, static_cast<double>(k));
  SnapshotMatrix m(1, 10, v, single_layer(1));
  const auto model = dmd_fit(m, 1);
  const auto rec = dmd_reconstruct(model, 400);
  EXPECT_TRUE(rec.overflow);
  for (double x : rec.matrix.values()) EXPECT_TRUE(std::isfinite(x));
}

TEST(Dmd, SaveLoadRoundTrip) {
  Rng rng(7);
  std::vector<double> v(6 * 9);
  for (auto& x : v) x = rng.normal();
  SnapshotMatrix m(6, 9, v, {{"a", 0, 2}, {"b", 2, 4}});
  const auto model = dmd_fit(m, 4);
  const auto path = temp_path("dmd.json");
  save_dmd(model, path);
  EXPECT_TRUE(fs::exists(dmd_modes_path(path)));
  const auto back = load_dmd(path);
  EXPECT_EQ(back.rank, model.rank);
  EXPECT_EQ(back.eigenvalues, model.eigenvalues);
  EXPECT_EQ(back.amplitudes, model.amplitudes);
  EXPECT_EQ(back.modes, model.modes);
  EXPECT_EQ(back.layers, model.layers);
  EXPECT_TRUE(dmd_reconstruct(back, 9).matrix == dmd_reconstruct(model, 9).matrix);

  std::ofstream(dmd_modes_path(path), std::ios::binary | std::ios::trunc) << "XXXX";
  EXPECT_THROW(load_dmd(path), Error);
  fs::remove(path);
  fs::remove(dmd_modes_path(path));
}
