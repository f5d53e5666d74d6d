#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>

#include "cmdkit/correlation.hpp"
#include "cmdkit/error.hpp"
#include "cmdkit/generators.hpp"

using namespace cmdkit;
using nlohmann::json;

namespace {

DenseMatrix dense(std::size_t r, std::size_t c, std::vector<double> v) { return {r, c, std::move(v)}; }

// Batch-form GD on the same network, written against Eigen.
struct ReferenceMlp {
  std::vector<Eigen::MatrixXd> w;
  std::vector<Eigen::VectorXd> b;

  ReferenceMlp(const MlpTaskConfig& cfg, const std::vector<double>& flat) {
    std::size_t pos = 0;
    for (std::size_t l = 0; l + 1 < cfg.layer_widths.size(); ++l) {
      const auto in = static_cast<Eigen::Index>(cfg.layer_widths[l]);
      const auto out = static_cast<Eigen::Index>(cfg.layer_widths[l + 1]);
      Eigen::MatrixXd wl(out, in);
      for (Eigen::Index o = 0; o < out; ++o)
        for (Eigen::Index i = 0; i < in; ++i) wl(o, i) = flat[pos++];
      Eigen::VectorXd bl(out);
      for (Eigen::Index o = 0; o < out; ++o) bl(o) = flat[pos++];
      w.push_back(wl);
      b.push_back(bl);
    }
  }

  std::vector<double> flat() const {
    std::vector<double> out;
    for (std::size_t l = 0; l < w.size(); ++l) {
      for (Eigen::Index o = 0; o < w[l].rows(); ++o)
        for (Eigen::Index i = 0; i < w[l].cols(); ++i) out.push_back(w[l](o, i));
      for (Eigen::Index o = 0; o < b[l].size(); ++o) out.push_back(b[l](o));
    }
    return out;
  }

  // Returns mean loss and accuracy; when lr > 0 takes one GD step.
  std::pair<double, double> step(const Eigen::MatrixXd& x, const Eigen::VectorXi& y, double lr) {
    const auto n = x.cols();
    std::vector<Eigen::MatrixXd> a{x};
    for (std::size_t l = 0; l < w.size(); ++l) {
      Eigen::MatrixXd z = (w[l] * a.back()).colwise() + b[l];
      a.push_back(l + 1 < w.size() ? Eigen::MatrixXd(z.array().tanh()) : z);
    }
    const Eigen::MatrixXd& logits = a.back();
    Eigen::MatrixXd prob(logits.rows(), n);
    double loss = 0;
    int correct = 0;
    for (Eigen::Index s = 0; s < n; ++s) {
      const Eigen::VectorXd e = (logits.col(s).array() - logits.col(s).maxCoeff()).exp();
      prob.col(s) = e / e.sum();
      loss -= std::log(prob(y(s), s));
      Eigen::Index arg;
      logits.col(s).maxCoeff(&arg);
      if (arg == y(s)) ++correct;
    }
    if (lr > 0) {
      Eigen::MatrixXd delta = prob;
      for (Eigen::Index s = 0; s < n; ++s) delta(y(s), s) -= 1.0;
      delta /= static_cast<double>(n);
      for (std::size_t l = w.size(); l-- > 0;) {
        const Eigen::MatrixXd gw = delta * a[l].transpose();
        const Eigen::VectorXd gb = delta.rowwise().sum();
        if (l > 0) delta = (w[l].transpose() * delta).array() * (1.0 - a[l].array().square());
        w[l] -= lr * gw;
        b[l] -= lr * gb;
      }
    }
    return {loss / static_cast<double>(n), static_cast<double>(correct) / static_cast<double>(n)};
  }
};

}  // namespace

TEST(ToyRegression, ZeroStepKeepsInitialWeights) {
  ToyRegressionConfig cfg;
  cfg.d = 2;
  cfg.m = 3;
  cfg.n = 5;
  cfg.eta_schedule = {0.0};
  cfg.epochs = 10;
  const auto m = generate_toy_regression(cfg);
  ASSERT_EQ(m.rows(), 6u);
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t k = 0; k < m.epochs(); ++k) EXPECT_EQ(m.at(i, k), m.at(i, 0));
}

TEST(ToyRegression, HandIteration) {
  ToyRegressionConfig cfg;
  cfg.eta_schedule = {0.5};
  cfg.epochs = 4;
  cfg.x = dense(1, 1, {1.0});
  cfg.y = dense(1, 1, {2.0});
  cfg.w0 = dense(1, 1, {0.0});
  const auto m = generate_toy_regression(cfg);
  const std::vector<double> expected{0, 1, 1.5, 1.75, 1.875};
  for (std::size_t k = 0; k < expected.size(); ++k) EXPECT_DOUBLE_EQ(m.at(0, k), expected[k]);
}

TEST(ToyRegression, ConvergesToNormalEquationSolution) {
  ToyRegressionConfig cfg;
  cfg.d = 2;
  cfg.m = 3;
  cfg.n = 6;
  cfg.epochs = 4000;
  cfg.eta_schedule = {0.02};
  cfg.seed = 5;
  cfg.label_noise = 0.3;
  const auto traj = generate_toy_regression(cfg);

  // Rebuild x, y from a second run with fixed operands to know them exactly.
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(3, 6);
  Eigen::MatrixXd y(2, 6);
  DenseMatrix xd{3, 6, {}}, yd{2, 6, {}};
  for (int i = 0; i < 18; ++i) xd.data.push_back(std::sin(1.0 + i * 0.7) + 0.1 * i);
  for (int i = 0; i < 12; ++i) yd.data.push_back(std::cos(0.3 * i));
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 6; ++c) x(r, c) = xd(r, c);
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 6; ++c) y(r, c) = yd(r, c);
  cfg.x = xd;
  cfg.y = yd;
  const double lmax = (x * x.transpose()).selfadjointView<Eigen::Lower>().eigenvalues().maxCoeff();
  cfg.eta_schedule = {1.0 / lmax};
  const auto fixed = generate_toy_regression(cfg);
  const Eigen::MatrixXd w_star = y * x.transpose() * (x * x.transpose()).inverse();
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(fixed.at(r * 3 + c, cfg.epochs), w_star(r, c), 1e-6);

  // Loss is non-increasing for eta < 2 / lambda_max.
  double prev = INFINITY;
  for (std::size_t k = 0; k < fixed.epochs(); k += 50) {
    Eigen::MatrixXd w(2, 3);
    for (int r = 0; r < 2; ++r)
      for (int c = 0; c < 3; ++c) w(r, c) = fixed.at(r * 3 + c, k);
    const double loss = 0.5 * (y - w * x).squaredNorm();
    EXPECT_LE(loss, prev + 1e-12);
    prev = loss;
  }
  EXPECT_EQ(traj.rows(), 6u);
}

TEST(ToyRegression, AugmentedIncrementsChangeDirection) {
  ToyRegressionConfig cfg;
  cfg.d = 2;
  cfg.m = 4;
  cfg.n = 8;
  cfg.epochs = 40;
  cfg.eta_schedule = {0.01};
  cfg.augmented = true;
  cfg.seed = 9;
  const auto m = generate_toy_regression(cfg);
  int sign_changes = 0;
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t k = 1; k + 1 < m.epochs(); ++k) {
      const double d1 = m.at(i, k) - m.at(i, k - 1), d2 = m.at(i, k + 1) - m.at(i, k);
      if (d1 * d2 < 0) ++sign_changes;
    }
  EXPECT_GT(sign_changes, 10);
  EXPECT_TRUE(generate_toy_regression(cfg) == m);
}

TEST(ToyRegression, DivergenceNamesEpoch) {
  ToyRegressionConfig cfg;
  cfg.d = 1;
  cfg.m = 1;
  cfg.n = 1;
  cfg.x = dense(1, 1, {10.0});
  cfg.y = dense(1, 1, {1.0});
  cfg.eta_schedule = {1.0};
  cfg.epochs = 50;
  try {
    generate_toy_regression(cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Divergence);
    EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos);
  }
}

TEST(ToyRegression, ConfigJson) {
  const json j = json::parse(R"({"d":2,"m":3,"n":4,"eta_schedule":[0.1],"augmented":true,"epochs":5,"seed":1,"init_scale":0.5})");
  const auto cfg = toy_regression_config_from_json(j);
  EXPECT_EQ(cfg.m, 3u);
  EXPECT_TRUE(cfg.augmented);
  EXPECT_EQ(toy_regression_config_from_json(to_json(cfg)).init_scale, 0.5);
  json extra = j;
  extra["bogus"] = 1;
  EXPECT_THROW(toy_regression_config_from_json(extra), Error);
  json bad = j;
  bad["eta_schedule"] = {0.1, 0.2};
  EXPECT_THROW(generate_toy_regression(toy_regression_config_from_json(bad)), Error);
}

TEST(Mlp, MatchesIndependentGradientDescent) {
  MlpTaskConfig cfg;
  cfg.layer_widths = {2, 16, 2};
  cfg.epochs = 150;
  cfg.learning_rate = 0.05;
  cfg.dataset = {400, 0.3, 1};
  cfg.seed = 2;
  const auto run = generate_mlp_training(cfg);
  ASSERT_EQ(run.log.size(), 151u);
  ASSERT_EQ(run.weights.rows(), cfg.parameter_count());

  const auto cloud = make_point_cloud(cfg.dataset, 0);
  Eigen::MatrixXd x(2, 400);
  Eigen::VectorXi y(400);
  for (int s = 0; s < 400; ++s) {
    x(0, s) = cloud.features[2 * s];
    x(1, s) = cloud.features[2 * s + 1];
    y(s) = cloud.labels[s];
  }
  ReferenceMlp ref(cfg, init_mlp_parameters(cfg));
  for (std::size_t k = 0; k <= cfg.epochs; ++k) {
    const auto flat = ref.flat();
    for (std::size_t i = 0; i < flat.size(); i += 7) ASSERT_NEAR(run.weights.at(i, k), flat[i], 1e-10) << k;
    const auto [loss, acc] = ref.step(x, y, k < cfg.epochs ? cfg.learning_rate : 0.0);
    ASSERT_NEAR(run.log[k].train_loss, loss, 1e-10);
    ASSERT_EQ(run.log[k].train_accuracy, acc);
  }
  EXPECT_GT(run.log.back().train_accuracy, 0.9);
}

TEST(Mlp, LayerIndexAndDeterminism) {
  MlpTaskConfig cfg;
  cfg.layer_widths = {2, 4, 3, 2};
  cfg.epochs = 5;
  const auto layers = mlp_layer_index(cfg);
  ASSERT_EQ(layers.size(), 6u);
  EXPECT_EQ(layers[0].name, "dense0.weight");
  EXPECT_EQ(layers[0].row_count, 8u);
  EXPECT_EQ(layers[1].name, "dense0.bias");
  EXPECT_EQ(layers[5].name, "dense2.bias");
  const auto a = generate_mlp_training(cfg);
  const auto b = generate_mlp_training(cfg);
  EXPECT_TRUE(a.weights == b.weights);
  EXPECT_EQ(a.weights.layers(), layers);
}

TEST(Mlp, ZeroLearningRate) {
  MlpTaskConfig cfg;
  cfg.learning_rate = 0.0;
  cfg.epochs = 4;
  const auto run = generate_mlp_training(cfg);
  for (std::size_t i = 0; i < run.weights.rows(); ++i)
    for (std::size_t k = 1; k < run.weights.epochs(); ++k) ASSERT_EQ(run.weights.at(i, k), run.weights.at(i, 0));
  for (const auto& e : run.log) EXPECT_EQ(e, run.log[0]);
}

TEST(Mlp, EvaluateWeightsMatchesLog) {
  MlpTaskConfig cfg;
  cfg.epochs = 20;
  cfg.seed = 4;
  const auto run = generate_mlp_training(cfg);
  for (std::size_t k = 0; k < run.weights.epochs(); k += 5) {
    const auto m = evaluate_weights(cfg, run.weights, k);
    EXPECT_NEAR(m.train_loss, run.log[k].train_loss, 1e-12);
    EXPECT_NEAR(m.test_loss, run.log[k].test_loss, 1e-12);
    EXPECT_EQ(m.test_accuracy, run.log[k].test_accuracy);
  }
  std::vector<double> zeros(cfg.parameter_count(), 0.0);
  const auto z = evaluate_parameters(cfg, zeros);
  EXPECT_NEAR(z.test_accuracy, 0.5, 0.05);
  EXPECT_NEAR(z.test_loss, std::log(2.0), 1e-12);
  EXPECT_THROW(evaluate_parameters(cfg, std::vector<double>(3, 0.0)), Error);
}

TEST(Mlp, ConfigValidation) {
  MlpTaskConfig cfg;
  cfg.layer_widths = {2, 2};
  EXPECT_THROW(cfg.validate(), Error);
  cfg.layer_widths = {2, 500, 500, 2};
  EXPECT_THROW(cfg.validate(), Error);
  const json j = json::parse(R"({"layer_widths":[2,8,2],"epochs":3,"learning_rate":0.1,"dataset":{"count":20,"noise":0.2,"seed":3},"seed":7})");
  const auto parsed = mlp_task_config_from_json(j);
  EXPECT_EQ(parsed.dataset.count, 20u);
  EXPECT_EQ(to_json(parsed), j);
  json bad = j;
  bad["dataset"]["extra"] = true;
  EXPECT_THROW(mlp_task_config_from_json(bad), Error);
}

TEST(SyntheticModes, IdenticalRowsForOneUnitMode) {
  SyntheticModesConfig cfg;
  cfg.n = 6;
  cfg.epochs = 10;
  cfg.modes = 1;
  cfg.a_min = cfg.a_max = 1.0;
  cfg.allow_negative = false;
  cfg.b_min = cfg.b_max = 0.0;
  const auto s = generate_synthetic_modes(cfg);
  for (std::size_t i = 1; i < 6; ++i)
    for (std::size_t k = 0; k < 11; ++k) EXPECT_EQ(s.weights.at(i, k), s.weights.at(0, k));
}

TEST(SyntheticModes, CorrelationStructure) {
  SyntheticModesConfig cfg;
  cfg.n = 30;
  cfg.epochs = 60;
  cfg.modes = 3;
  cfg.profile_kinds = {ProfileKind::ExponentialDecay, ProfileKind::PiecewiseLinear, ProfileKind::Oscillatory};
  cfg.layers = 3;
  cfg.seed = 8;
  const auto s = generate_synthetic_modes(cfg);
  ASSERT_EQ(s.profiles.size(), 3u);
  for (std::size_t i = 0; i < 30; ++i) {
    EXPECT_EQ(s.labels[i], static_cast<int>(i % 3));
    for (std::size_t j = 0; j < 30; ++j) {
      const double c = std::abs(corr(s.weights.row(i), s.weights.row(j)));
      if (s.labels[i] == s.labels[j])
        EXPECT_NEAR(c, 1.0, 1e-12);
      else
        EXPECT_LT(c, 1.0 - 1e-6);
    }
    for (std::size_t k = 0; k <= 60; ++k)
      EXPECT_NEAR(s.weights.at(i, k), s.a[i] * s.profiles[s.labels[i]][k] + s.b[i], 1e-12);
  }
  // Direct Pearson evaluation of the three base profiles.
  for (int p = 0; p < 3; ++p)
    for (int q = p + 1; q < 3; ++q) {
      const auto& u = s.profiles[p];
      const auto& v = s.profiles[q];
      double mu = 0, mv = 0;
      for (std::size_t k = 0; k < u.size(); ++k) {
        mu += u[k];
        mv += v[k];
      }
      mu /= u.size();
      mv /= v.size();
      double uv = 0, uu = 0, vv = 0;
      for (std::size_t k = 0; k < u.size(); ++k) {
        uv += (u[k] - mu) * (v[k] - mv);
        uu += (u[k] - mu) * (u[k] - mu);
        vv += (v[k] - mv) * (v[k] - mv);
      }
      EXPECT_LT(std::abs(uv / std::sqrt(uu * vv)), 1.0 - 1e-6);
    }
  EXPECT_EQ(s.weights.layers().size(), 3u);
  EXPECT_TRUE(generate_synthetic_modes(cfg).weights == s.weights);
}

TEST(SyntheticModes, ConfigJson) {
  const json j = json::parse(
      R"({"N":50,"T":20,"M_true":2,"profile_kinds":["oscillatory","piecewise-linear"],"a_range":[0.5,2],"b_range":[-1,1],"noise_sigma":0.01,"seed":3})");
  const auto cfg = synthetic_modes_config_from_json(j);
  EXPECT_EQ(cfg.kind_of(1), ProfileKind::PiecewiseLinear);
  EXPECT_EQ(synthetic_modes_config_from_json(to_json(cfg)).n, 50u);
  json bad = j;
  bad["M_true"] = 60;
  EXPECT_THROW(synthetic_modes_config_from_json(bad).validate(), Error);
  bad = j;
  bad["noise_sigma"] = -1;
  EXPECT_THROW(synthetic_modes_config_from_json(bad).validate(), Error);
  EXPECT_THROW(profile_kind_from_string("square"), Error);
}

TEST(LinearSystem, IteratesMap) {
  DenseMatrix q{2, 2, {0.5, 0.1, 0.0, 0.9}};
  const std::vector<double> w0{1.0, 2.0};
  const auto m = generate_linear_system(q, w0, 3);
  EXPECT_DOUBLE_EQ(m.at(0, 1), 0.5 + 0.2);
  EXPECT_DOUBLE_EQ(m.at(1, 1), 1.8);
  EXPECT_DOUBLE_EQ(m.at(1, 3), 2.0 * 0.9 * 0.9 * 0.9);
}
