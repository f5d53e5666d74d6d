#include "cmdkit/dmd.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>

#include "cmdkit/error.hpp"

namespace cmdkit {

namespace {

using nlohmann::json;

constexpr double kRankTolerance = 1e-10;   // relative to the largest singular value
constexpr double kMagnitudeLimit = 1e300;  // clamp for lambda^k growth
constexpr std::uint8_t kModesMagic[4] = {0x44, 0x4D, 0x44, 0x4D};  // "DMDM"

json complex_list(const std::vector<Complex>& values) {
  json out = json::array();
  for (const auto& z : values) out.push_back({{"re", z.real()}, {"im", z.imag()}});
  return out;
}

std::vector<Complex> complex_list_from(const json& j) {
  std::vector<Complex> out;
  for (const auto& z : j) out.emplace_back(z.at("re").get<double>(), z.at("im").get<double>());
  return out;
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v, int width = 8) {
  for (int b = 0; b < width; ++b) out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
}

std::uint64_t get_u64(const std::vector<std::uint8_t>& in, std::size_t& pos, int width = 8) {
  if (in.size() - pos < static_cast<std::size_t>(width)) throw Error(ErrorKind::Format, "unexpected end of data");
  std::uint64_t v = 0;
  for (int b = 0; b < width; ++b) v |= std::uint64_t{in[pos + b]} << (8 * b);
  pos += static_cast<std::size_t>(width);
  return v;
}

}  // namespace

DmdModel dmd_fit(const SnapshotMatrix& m, std::size_t rank) {
  const std::size_t n = m.rows();
  const std::size_t pairs = m.last_epoch();
  if (rank == 0 || rank > std::min(n, pairs))
    throw Error(ErrorKind::Config, "DMD rank must lie in 1..min(N, T) = " + std::to_string(std::min(n, pairs)));

  Eigen::MatrixXd x(n, pairs), x_next(n, pairs);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < pairs; ++k) {
      x(i, k) = m.at(i, k);
      x_next(i, k) = m.at(i, k + 1);
    }

  Eigen::BDCSVD<Eigen::MatrixXd> svd(x, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (svd.info() != Eigen::Success) throw Error(ErrorKind::Numeric, "SVD of the snapshot matrix failed");
  const Eigen::VectorXd& sigma = svd.singularValues();

  DmdModel model;
  model.rows = n;
  model.layers = m.layers();
  model.singular_values.assign(sigma.data(), sigma.data() + sigma.size());

  std::size_t numerical_rank = 0;
  for (Eigen::Index i = 0; i < sigma.size(); ++i)
    if (sigma(i) > kRankTolerance * sigma(0)) ++numerical_rank;
  if (numerical_rank == 0) throw Error(ErrorKind::Degenerate, "snapshot matrix is zero");
  if (rank > numerical_rank) {
    model.warnings.push_back("requested rank " + std::to_string(rank) + " exceeds numerical rank " +
                             std::to_string(numerical_rank) + "; using " + std::to_string(numerical_rank));
    rank = numerical_rank;
  }
  model.rank = rank;

  const auto r = static_cast<Eigen::Index>(rank);
  const Eigen::MatrixXd u = svd.matrixU().leftCols(r);
  const Eigen::MatrixXd v = svd.matrixV().leftCols(r);
  const Eigen::VectorXd inv_sigma = sigma.head(r).cwiseInverse();
  const Eigen::MatrixXd projected = x_next * v * inv_sigma.asDiagonal();  // N x r
  const Eigen::MatrixXd reduced = u.transpose() * projected;              // r x r

  Eigen::EigenSolver<Eigen::MatrixXd> eig(reduced, true);
  if (eig.info() != Eigen::Success) throw Error(ErrorKind::Numeric, "eigendecomposition of the reduced operator failed");
  const Eigen::VectorXcd lambda = eig.eigenvalues();
  const Eigen::MatrixXcd vectors = eig.eigenvectors();

  // Largest |lambda| first; conjugate pairs with positive imaginary part first.
  std::vector<Eigen::Index> order(static_cast<std::size_t>(r));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    const double ma = std::abs(lambda(a)), mb = std::abs(lambda(b));
    if (ma != mb) return ma > mb;
    return lambda(a).imag() > lambda(b).imag();
  });

  Eigen::MatrixXcd phi(static_cast<Eigen::Index>(n), r);
  const Eigen::MatrixXcd projected_c = projected.cast<Complex>();
  for (Eigen::Index j = 0; j < r; ++j) {
    const Eigen::Index src = order[static_cast<std::size_t>(j)];
    model.eigenvalues.push_back(lambda(src));
    phi.col(j) = projected_c * vectors.col(src);
  }

  Eigen::VectorXcd first(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) first(static_cast<Eigen::Index>(i)) = Complex(m.at(i, 0), 0.0);
  const Eigen::VectorXcd alpha = phi.completeOrthogonalDecomposition().solve(first);

  for (Eigen::Index j = 0; j < r; ++j) {
    model.amplitudes.push_back(alpha(j));
    model.modes.emplace_back(phi.col(j).data(), phi.col(j).data() + n);
  }
  return model;
}

DmdReconstruction dmd_reconstruct(const DmdModel& model, std::size_t epochs) {
  if (epochs < 2) throw Error(ErrorKind::Config, "reconstruction needs at least two epochs");
  if (model.eigenvalues.size() != model.rank || model.amplitudes.size() != model.rank ||
      model.modes.size() != model.rank)
    throw Error(ErrorKind::Schema, "DMD model is inconsistent");
  const std::size_t n = model.rows;
  std::vector<Complex> scaled(model.rank);  // alpha_j * lambda_j^k
  for (std::size_t j = 0; j < model.rank; ++j) scaled[j] = model.amplitudes[j];

  bool overflow = false;
  double max_imag = 0.0;
  std::vector<double> values(n * epochs);
  for (std::size_t k = 0; k < epochs; ++k) {
    for (std::size_t i = 0; i < n; ++i) {
      Complex acc = 0.0;
      for (std::size_t j = 0; j < model.rank; ++j) acc += scaled[j] * model.modes[j][i];
      double re = acc.real();
      if (!std::isfinite(re) || std::abs(re) > kMagnitudeLimit) {
        overflow = true;
        re = std::isnan(re) ? 0.0 : std::copysign(kMagnitudeLimit, re);
      }
      if (std::isfinite(acc.imag())) max_imag = std::max(max_imag, std::abs(acc.imag()));
      values[i * epochs + k] = re;
    }
    for (std::size_t j = 0; j < model.rank; ++j) {
      scaled[j] *= model.eigenvalues[j];
      const double mag = std::abs(scaled[j]);
      if (!std::isfinite(mag) || mag > kMagnitudeLimit) {
        overflow = true;
        scaled[j] = std::polar(kMagnitudeLimit, std::arg(scaled[j]));
      }
    }
  }
  LayerIndex layers = model.layers.empty() ? single_layer(n) : model.layers;
  return {SnapshotMatrix(n, epochs, std::move(values), std::move(layers)), overflow, max_imag};
}

std::filesystem::path dmd_modes_path(const std::filesystem::path& json_path) {
  auto p = json_path;
  p += ".modes.bin";
  return p;
}

void save_dmd(const DmdModel& model, const std::filesystem::path& json_path) {
  const auto modes_path = dmd_modes_path(json_path);
  std::vector<std::uint8_t> bytes(kModesMagic, kModesMagic + 4);
  put_u64(bytes, 1, 4);
  put_u64(bytes, model.rows);
  put_u64(bytes, model.rank);
  for (const auto& mode : model.modes)
    for (const auto& z : mode) {
      put_u64(bytes, std::bit_cast<std::uint64_t>(z.real()));
      put_u64(bytes, std::bit_cast<std::uint64_t>(z.imag()));
    }
  {
    std::ofstream out(modes_path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + modes_path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }

  json layers = json::array();
  for (const auto& l : model.layers)
    layers.push_back({{"name", l.name}, {"start_row", l.start_row}, {"row_count", l.row_count}});
  const json j{{"r", model.rank},
               {"N", model.rows},
               {"eigenvalues", complex_list(model.eigenvalues)},
               {"amplitudes", complex_list(model.amplitudes)},
               {"singular_values", model.singular_values},
               {"layers", layers},
               {"warnings", model.warnings},
               {"modes", {{"file", modes_path.filename().string()}, {"format", "DMDM"}}}};
  std::ofstream out(json_path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + json_path.string());
  out << j.dump() << '\n';
}

DmdModel load_dmd(const std::filesystem::path& json_path) {
  std::ifstream in(json_path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + json_path.string());
  DmdModel model;
  std::filesystem::path modes_path;
  try {
    const json j = json::parse(in);
    model.rank = j.at("r").get<std::size_t>();
    model.rows = j.at("N").get<std::size_t>();
    model.eigenvalues = complex_list_from(j.at("eigenvalues"));
    model.amplitudes = complex_list_from(j.at("amplitudes"));
    model.singular_values = j.at("singular_values").get<std::vector<double>>();
    for (const auto& l : j.at("layers"))
      model.layers.push_back(
          {l.at("name").get<std::string>(), l.at("start_row").get<std::size_t>(), l.at("row_count").get<std::size_t>()});
    model.warnings = j.at("warnings").get<std::vector<std::string>>();
    if (j.at("modes").at("format").get<std::string>() != "DMDM") throw Error(ErrorKind::Schema, "unknown DMD modes format");
    modes_path = json_path.parent_path() / j.at("modes").at("file").get<std::string>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Schema, std::string("DMD model: ") + e.what());
  }

  std::ifstream bin(modes_path, std::ios::binary);
  if (!bin) throw Error(ErrorKind::Io, "cannot open " + modes_path.string());
  const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(bin), std::istreambuf_iterator<char>()};
  if (bytes.size() < 4 || !std::equal(kModesMagic, kModesMagic + 4, bytes.begin()))
    throw Error(ErrorKind::Format, "bad magic: not a DMDM modes file");
  std::size_t pos = 4;
  if (get_u64(bytes, pos, 4) != 1) throw Error(ErrorKind::Format, "unsupported DMDM version");
  if (get_u64(bytes, pos) != model.rows || get_u64(bytes, pos) != model.rank)
    throw Error(ErrorKind::Format, "DMDM header does not match the model");
  model.modes.assign(model.rank, std::vector<Complex>(model.rows));
  for (auto& mode : model.modes)
    for (auto& z : mode) {
      const double re = std::bit_cast<double>(get_u64(bytes, pos));
      const double im = std::bit_cast<double>(get_u64(bytes, pos));
      z = Complex(re, im);
    }
  if (model.eigenvalues.size() != model.rank || model.amplitudes.size() != model.rank)
    throw Error(ErrorKind::Schema, "DMD model lists do not match r");
  return model;
}

}  // namespace cmdkit
