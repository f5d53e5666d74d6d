#include <gtest/gtest.h>

#include <bit>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <unistd.h>

#include "cmdkit/decomposition.hpp"
#include "cmdkit/error.hpp"
#include "cmdkit/generators.hpp"
#include "cmdkit/random.hpp"
#include "cmdkit/report.hpp"

using namespace cmdkit;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Normal equations [sum r^2, sum r; sum r, n] [a; b] = [sum w r; sum w]
// solved by Cramer's rule in extended precision.
std::pair<double, double> brute_affine(std::span<const double> w, std::span<const double> r) {
  long double srr = 0, sr = 0, swr = 0, sw = 0;
  const long double n = static_cast<long double>(r.size());
  for (std::size_t k = 0; k < r.size(); ++k) {
    srr += static_cast<long double>(r[k]) * r[k];
    sr += r[k];
    swr += static_cast<long double>(w[k]) * r[k];
    sw += w[k];
  }
  const long double det = srr * n - sr * sr;
  return {static_cast<double>((swr * n - sr * sw) / det), static_cast<double>((srr * sw - sr * swr) / det)};
}

SyntheticModes exact_modes(std::size_t n, std::size_t epochs, std::size_t modes, std::uint64_t seed,
                           std::size_t layers = 1) {
  SyntheticModesConfig cfg;
  cfg.n = n;
  cfg.epochs = epochs;
  cfg.modes = modes;
  cfg.profile_kinds = {};
  for (std::size_t m = 0; m < modes; ++m)
    cfg.profile_kinds.push_back(static_cast<ProfileKind>(m % 3));
  cfg.layers = layers;
  cfg.seed = seed;
  return generate_synthetic_modes(cfg);
}

fs::path temp_path(const std::string& name) {
  return fs::temp_directory_path() / ("cmdkit_dec_" + std::to_string(::getpid()) + "_" + name);
}

}  // namespace

TEST(FitAffine, ExactAffineRow) {
  const std::vector<double> r{0.3, -1.2, 2.5, 0.7, 1.1};
  std::vector<double> w(5);
  for (int k = 0; k < 5; ++k) w[k] = 2.0 * r[k] + 1.0;
  const auto c = fit_affine(w, r);
  EXPECT_NEAR(c.a[0], 2.0, 1e-15);
  EXPECT_NEAR(c.b[0], 1.0, 1e-15);
}

TEST(FitAffine, OrthogonalRowGivesMean) {
  const std::vector<double> r{1, 2, 3, 4};
  const std::vector<double> w{1, -1, -1, 1};  // orthogonal to r - mean(r)
  const auto c = fit_affine(w, r);
  EXPECT_NEAR(c.a[0], 0.0, 1e-15);
  EXPECT_NEAR(c.b[0], 0.0, 1e-15);
  const std::vector<double> w2{6, 4, 4, 6};
  EXPECT_NEAR(fit_affine(w2, r).b[0], 5.0, 1e-15);
}

TEST(FitAffine, MatchesBruteForceSolver) {
  Rng rng(21);
  for (int mode = 0; mode < 20; ++mode) {
    std::vector<double> r(101), rows(50 * 101);
    for (auto& x : r) x = rng.normal(0.5, 2.0);
    for (auto& x : rows) x = rng.normal();
    const auto c = fit_affine(rows, r);
    for (std::size_t i = 0; i < 50; ++i) {
      const auto [a, b] = brute_affine(std::span(rows).subspan(i * 101, 101), r);
      EXPECT_NEAR(c.a[i], a, 1e-9 * std::max(1.0, std::abs(a)));
      EXPECT_NEAR(c.b[i], b, 1e-9 * std::max(1.0, std::abs(b)));
    }
  }
}

TEST(FitAffine, IsLeastSquaresMinimizer) {
  Rng rng(22);
  std::vector<double> r(30), w(30);
  for (auto& x : r) x = rng.normal();
  for (auto& x : w) x = rng.normal();
  const auto c = fit_affine(w, r);
  auto residual = [&](double a, double b) {
    double s = 0;
    for (int k = 0; k < 30; ++k) s += (w[k] - a * r[k] - b) * (w[k] - a * r[k] - b);
    return s;
  };
  const double best = residual(c.a[0], c.b[0]);
  for (double da = -0.5; da <= 0.5; da += 0.05)
    for (double db = -0.5; db <= 0.5; db += 0.05) EXPECT_LE(best, residual(c.a[0] + da, c.b[0] + db) + 1e-12);
  // Slope equals cov(w, r) / var(r).
  double mr = 0, mw = 0;
  for (int k = 0; k < 30; ++k) {
    mr += r[k] / 30;
    mw += w[k] / 30;
  }
  double cov = 0, var = 0;
  for (int k = 0; k < 30; ++k) {
    cov += (w[k] - mw) * (r[k] - mr);
    var += (r[k] - mr) * (r[k] - mr);
  }
  EXPECT_NEAR(c.a[0], cov / var, 1e-12);
}

TEST(FitAffine, Errors) {
  const std::vector<double> flat{3, 3, 3}, w{1, 2, 3};
  try {
    fit_affine(w, flat);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Degenerate);
  }
  const std::vector<double> r{1, 2};
  EXPECT_THROW(fit_affine(w, r), Error);
}

TEST(Decompose, RecoversExactModes) {
  const auto syn = exact_modes(3000, 60, 5, 31, 3);
  ClusterConfig cfg;
  cfg.cut = FixedModes{5};
  cfg.sample_size = 300;
  const auto model = decompose(syn.weights, cfg);
  ASSERT_EQ(model.mode_count(), 5u);
  std::map<int, int> mapping;
  for (std::size_t i = 0; i < 3000; ++i) {
    auto [it, inserted] = mapping.emplace(model.weights[i].mode, syn.labels[i]);
    ASSERT_EQ(it->second, syn.labels[i]);
    EXPECT_NEAR(std::abs(model.weights[i].corr), 1.0, 1e-12);
  }
  const auto recon = reconstruct(model);
  EXPECT_LE(weights_mse(syn.weights, recon), 1e-18);
  EXPECT_EQ(recon.layers(), syn.weights.layers());
  for (std::size_t i = 0; i < 3000; ++i)
    for (std::size_t k = 0; k < 61; k += 10) EXPECT_NEAR(recon.at(i, k), syn.weights.at(i, k), 1e-12);
  for (const auto& mode : model.modes) {
    EXPECT_EQ(model.weights[mode.reference_row].a, 1.0);
    EXPECT_EQ(model.weights[mode.reference_row].b, 0.0);
    for (std::size_t k = 0; k < 61; ++k) EXPECT_EQ(recon.at(mode.reference_row, k), syn.weights.at(mode.reference_row, k));
  }
}

TEST(Decompose, SingleModeIsRankOnePlusOffset) {
  const auto syn = exact_modes(200, 30, 3, 4);
  ClusterConfig cfg;
  cfg.cut = FixedModes{1};
  cfg.sample_size = 50;
  const auto model = decompose(syn.weights, cfg);
  ASSERT_EQ(model.mode_count(), 1u);
  const auto recon = reconstruct(model);
  const auto& ref = model.modes[0].reference;
  for (std::size_t i = 0; i < 200; ++i)
    for (std::size_t k = 0; k < 31; ++k)
      EXPECT_NEAR(recon.at(i, k), model.weights[i].a * ref[k] + model.weights[i].b, 1e-12);
}

TEST(Decompose, StaticRows) {
  auto syn = exact_modes(40, 20, 2, 5);
  std::vector<double> v(syn.weights.values().begin(), syn.weights.values().end());
  for (std::size_t k = 0; k < 21; ++k) v[7 * 21 + k] = 0.25;
  SnapshotMatrix m(40, 21, v, single_layer(40));
  ClusterConfig cfg;
  cfg.cut = FixedModes{2};
  cfg.sample_size = 39;
  const auto model = decompose(m, cfg);
  EXPECT_EQ(model.weights[7].mode, kStaticMode);
  EXPECT_EQ(model.weights[7].a, 0.0);
  EXPECT_EQ(model.weights[7].b, 0.25);
  const auto recon = reconstruct(model);
  for (std::size_t k = 0; k < 21; ++k) EXPECT_EQ(recon.at(7, k), 0.25);

  cfg.sample_size = 40;  // clamped to N, but only 39 rows vary
  try {
    decompose(m, cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Degenerate);
  }
}

TEST(Decompose, ThresholdCut) {
  const auto syn = exact_modes(500, 40, 4, 6);
  ClusterConfig cfg;
  cfg.sample_size = 100;
  cfg.cut = DistanceThreshold{1e-9};
  const auto model = decompose(syn.weights, cfg);
  EXPECT_EQ(model.mode_count(), 4u);
  EXPECT_EQ(model.threshold, 1e-9);
  cfg.cut = HalfMaxDistance{};
  const auto def = decompose(syn.weights, cfg);
  EXPECT_GE(def.mode_count(), 1u);
  EXPECT_GT(def.threshold, 0.0);
}

TEST(Decompose, KClampedToN) {
  const auto syn = exact_modes(30, 10, 2, 7);
  ClusterConfig cfg;  // K = 1000 > N
  cfg.cut = FixedModes{2};
  const auto model = decompose(syn.weights, cfg);
  EXPECT_EQ(model.sample.size(), 30u);
}

TEST(Decompose, DeterministicAcrossThreads) {
  SyntheticModesConfig scfg;
  scfg.n = 2000;
  scfg.epochs = 30;
  scfg.modes = 6;
  scfg.profile_kinds = {ProfileKind::Oscillatory};
  scfg.noise_sigma = 0.05;
  scfg.seed = 3;
  const auto syn = generate_synthetic_modes(scfg);
  ClusterConfig cfg;
  cfg.sample_size = 200;
  cfg.cut = FixedModes{6};
  cfg.seed = 17;
  const auto a = decompose(syn.weights, cfg, {1, {}});
  const auto b = decompose(syn.weights, cfg, {4, {}});
  EXPECT_TRUE(a == b);
  EXPECT_EQ(dump_json(to_json(a)), dump_json(to_json(b)));
}

TEST(Decompose, MseShrinksWithMoreModes) {
  SyntheticModesConfig scfg;
  scfg.n = 1500;
  scfg.epochs = 40;
  scfg.modes = 12;
  scfg.profile_kinds = {ProfileKind::Oscillatory};
  scfg.noise_sigma = 0.02;
  double total_small = 0, total_large = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    scfg.seed = seed;
    const auto syn = generate_synthetic_modes(scfg);
    ClusterConfig cfg;
    cfg.sample_size = 300;
    cfg.seed = seed;
    cfg.cut = FixedModes{2};
    total_small += weights_mse(syn.weights, reconstruct(decompose(syn.weights, cfg)));
    cfg.cut = FixedModes{12};
    total_large += weights_mse(syn.weights, reconstruct(decompose(syn.weights, cfg)));
  }
  EXPECT_LT(total_large, total_small);
}

TEST(Decompose, EpochSelectionAndFullReconstruction) {
  const auto syn = exact_modes(300, 40, 3, 8);
  const auto sub = subsample_epochs(syn.weights, 3);
  ClusterConfig cfg;
  cfg.sample_size = 60;
  cfg.cut = FixedModes{3};
  const auto model = decompose(sub.matrix, cfg, {1, sub.selection});
  EXPECT_EQ(model.epochs, sub.matrix.epochs());
  EXPECT_EQ(model.epoch_selection, sub.selection);
  const auto full = reconstruct_with(model, syn.weights);
  EXPECT_EQ(full.epochs(), 41u);
  EXPECT_LE(weights_mse(syn.weights, full), 1e-18);
  EXPECT_THROW(decompose(sub.matrix, cfg, {1, EpochSelection::full(41)}), Error);
}

TEST(ModelIo, RoundTripIsBitExact) {
  SyntheticModesConfig scfg;
  scfg.n = 400;
  scfg.epochs = 25;
  scfg.modes = 3;
  scfg.noise_sigma = 0.1;
  const auto syn = generate_synthetic_modes(scfg);
  ClusterConfig cfg;
  cfg.sample_size = 80;
  cfg.cut = DistanceThreshold{0.4};
  const auto model = decompose(syn.weights, cfg);
  const auto path = temp_path("model.json");
  save_model(model, path);
  const auto back = load_model(path);
  EXPECT_TRUE(back == model);
  for (std::size_t i = 0; i < model.rows(); ++i) {
    EXPECT_EQ(std::bit_cast<std::uint64_t>(back.weights[i].a), std::bit_cast<std::uint64_t>(model.weights[i].a));
    EXPECT_EQ(std::bit_cast<std::uint64_t>(back.weights[i].b), std::bit_cast<std::uint64_t>(model.weights[i].b));
  }
  fs::remove(path);
}

TEST(ModelIo, SchemaViolations) {
  const auto syn = exact_modes(60, 12, 2, 9);
  ClusterConfig cfg;
  cfg.sample_size = 20;
  cfg.cut = FixedModes{2};
  const json j = to_json(decompose(syn.weights, cfg));
  auto kind = [](const json& doc) {
    try {
      model_from_json(doc);
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::Io;
  };
  EXPECT_EQ(kind(j), ErrorKind::Io);  // valid document, nothing thrown

  json missing = j;
  missing.erase("weights");
  EXPECT_EQ(kind(missing), ErrorKind::Schema);

  json tampered = j;
  tampered["modes"][0]["reference_values"][3] = 123.0;
  EXPECT_EQ(kind(tampered), ErrorKind::Schema);

  json bad_mode = j;
  bad_mode["weights"][0]["mode"] = 7;
  EXPECT_EQ(kind(bad_mode), ErrorKind::Schema);

  json bad_corr = j;
  bad_corr["weights"][1]["corr"] = 1.5;
  EXPECT_EQ(kind(bad_corr), ErrorKind::Schema);

  const auto path = temp_path("broken.json");
  std::ofstream(path) << "{not json";
  EXPECT_THROW(load_model(path), Error);
  fs::remove(path);
}
