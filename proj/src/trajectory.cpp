#include "cmdkit/trajectory.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "cmdkit/error.hpp"

namespace cmdkit {

namespace {

constexpr std::uint8_t kMagic[4] = {0x43, 0x4D, 0x44, 0x54};  // "CMDT"

class ByteWriter {
 public:
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
  void raw(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    bytes_.insert(bytes_.end(), p, p + n);
  }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }
  void reserve(std::size_t n) { bytes_.reserve(n); }

 private:
  void put(std::uint64_t v, int width) {
    for (int b = 0; b < width; ++b) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
  }
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  double f64() { return std::bit_cast<double>(get(8)); }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw Error(ErrorKind::Format, "unexpected end of data");
  }
  std::uint64_t get(int width) {
    need(static_cast<std::size_t>(width));
    std::uint64_t v = 0;
    for (int b = 0; b < width; ++b) v |= std::uint64_t{bytes_[pos_ + b]} << (8 * b);
    pos_ += static_cast<std::size_t>(width);
    return v;
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

bool looks_like_csv(std::span<const std::uint8_t> bytes) {
  static constexpr std::string_view header = "weight_id";
  return bytes.size() >= header.size() &&
         std::equal(header.begin(), header.end(), bytes.begin(),
                    [](char c, std::uint8_t b) { return static_cast<std::uint8_t>(c) == b; });
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace

LayerIndex single_layer(std::size_t n, std::string name) {
  return {LayerSpan{std::move(name), 0, n}};
}

void validate_layers(const LayerIndex& layers, std::size_t n) {
  if (layers.empty()) throw Error(ErrorKind::Index, "layer index is empty");
  std::size_t next = 0;
  for (const auto& layer : layers) {
    if (layer.row_count == 0)
      throw Error(ErrorKind::Index, "layer '" + layer.name + "' has no rows");
    if (layer.start_row != next)
      throw Error(ErrorKind::Index, "layer '" + layer.name + "' starts at row " +
                                        std::to_string(layer.start_row) + ", expected " +
                                        std::to_string(next));
    next += layer.row_count;
  }
  if (next != n)
    throw Error(ErrorKind::Index, "layer spans cover " + std::to_string(next) + " rows, matrix has " +
                                      std::to_string(n));
}

SnapshotMatrix::SnapshotMatrix(std::size_t rows, std::size_t epochs, std::vector<double> values,
                               LayerIndex layers)
    : rows_(rows), epochs_(epochs), values_(std::move(values)), layers_(std::move(layers)) {
  if (rows_ < 1) throw Error(ErrorKind::Shape, "trajectory needs at least one weight");
  if (epochs_ < 2) throw Error(ErrorKind::Shape, "trajectory needs at least two epochs");
  if (values_.size() != rows_ * epochs_)
    throw Error(ErrorKind::Shape, "value count does not match N*(T+1)");
  validate_layers(layers_, rows_);
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i]))
      throw Error(ErrorKind::Data, "non-finite value at weight " + std::to_string(i / epochs_) +
                                       ", epoch " + std::to_string(i % epochs_));
  }
}

const std::string& SnapshotMatrix::layer_of(std::size_t i) const {
  auto it = std::upper_bound(layers_.begin(), layers_.end(), i,
                             [](std::size_t row, const LayerSpan& l) { return row < l.start_row; });
  return std::prev(it)->name;
}

std::vector<double> SnapshotMatrix::column(std::size_t k) const {
  std::vector<double> col(rows_);
  for (std::size_t i = 0; i < rows_; ++i) col[i] = at(i, k);
  return col;
}

EpochSelection EpochSelection::full(std::size_t epochs) {
  EpochSelection s;
  s.retained_epochs.resize(epochs);
  for (std::size_t k = 0; k < epochs; ++k) s.retained_epochs[k] = k;
  return s;
}

const char* to_string(EpochSelection::Kind kind) noexcept {
  switch (kind) {
    case EpochSelection::Kind::Full: return "full";
    case EpochSelection::Kind::TruncateFrom: return "truncate_from";
    case EpochSelection::Kind::Subsample: return "subsample";
  }
  return "full";
}

EpochSelection::Kind epoch_kind_from_string(const std::string& s) {
  if (s == "full") return EpochSelection::Kind::Full;
  if (s == "truncate_from") return EpochSelection::Kind::TruncateFrom;
  if (s == "subsample") return EpochSelection::Kind::Subsample;
  throw Error(ErrorKind::Schema, "unknown epoch selection kind '" + s + "'");
}

SnapshotMatrix select_epochs(const SnapshotMatrix& m, std::span<const std::size_t> epochs) {
  std::vector<double> values(m.rows() * epochs.size());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const auto row = m.row(i);
    for (std::size_t c = 0; c < epochs.size(); ++c) {
      if (epochs[c] >= m.epochs()) throw Error(ErrorKind::Config, "epoch index out of range");
      values[i * epochs.size() + c] = row[epochs[c]];
    }
  }
  return SnapshotMatrix(m.rows(), epochs.size(), std::move(values), m.layers());
}

SelectedTrajectory truncate_history(const SnapshotMatrix& m, std::size_t first_epoch) {
  if (first_epoch >= m.last_epoch())
    throw Error(ErrorKind::Config, "truncate_from " + std::to_string(first_epoch) +
                                       " leaves fewer than two epochs (T=" +
                                       std::to_string(m.last_epoch()) + ")");
  EpochSelection sel;
  sel.kind = EpochSelection::Kind::TruncateFrom;
  sel.parameter = first_epoch;
  for (std::size_t k = first_epoch; k < m.epochs(); ++k) sel.retained_epochs.push_back(k);
  return {select_epochs(m, sel.retained_epochs), std::move(sel)};
}

SelectedTrajectory subsample_epochs(const SnapshotMatrix& m, std::size_t factor) {
  if (factor < 2) throw Error(ErrorKind::Config, "subsample factor must be at least 2");
  EpochSelection sel;
  sel.kind = EpochSelection::Kind::Subsample;
  sel.parameter = factor;
  for (std::size_t k = 0; k < m.epochs(); k += factor) sel.retained_epochs.push_back(k);
  if (sel.retained_epochs.size() < 2)
    throw Error(ErrorKind::Config, "subsample factor " + std::to_string(factor) +
                                       " retains only epoch 0 (T=" +
                                       std::to_string(m.last_epoch()) + ")");
  return {select_epochs(m, sel.retained_epochs), std::move(sel)};
}

std::vector<std::uint8_t> encode_trajectory(const SnapshotMatrix& m) {
  ByteWriter w;
  w.reserve(64 + m.values().size() * 8);
  w.raw(kMagic, 4);
  w.u32(kTrajectoryVersion);
  w.u64(m.rows());
  w.u64(m.epochs());
  w.u32(static_cast<std::uint32_t>(m.layers().size()));
  for (const auto& layer : m.layers()) {
    if (layer.name.size() > UINT16_MAX) throw Error(ErrorKind::Format, "layer name too long");
    w.u16(static_cast<std::uint16_t>(layer.name.size()));
    w.raw(layer.name.data(), layer.name.size());
    w.u64(layer.start_row);
    w.u64(layer.row_count);
  }
  for (double v : m.values()) w.f64(v);
  return w.take();
}

SnapshotMatrix decode_trajectory(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || !std::equal(kMagic, kMagic + 4, bytes.begin()))
    throw Error(ErrorKind::Format, "bad magic: not a CMDT trajectory");
  ByteReader r(bytes.subspan(4));
  const std::uint32_t version = r.u32();
  if (version != kTrajectoryVersion)
    throw Error(ErrorKind::Format, "unsupported CMDT version " + std::to_string(version));
  const std::uint64_t n = r.u64();
  const std::uint64_t epochs = r.u64();
  const std::uint32_t layer_count = r.u32();
  LayerIndex layers;
  layers.reserve(std::min<std::uint32_t>(layer_count, 1u << 16));
  for (std::uint32_t l = 0; l < layer_count; ++l) {
    const std::uint16_t len = r.u16();
    LayerSpan span;
    span.name = r.str(len);
    span.start_row = r.u64();
    span.row_count = r.u64();
    layers.push_back(std::move(span));
  }
  if (n == 0 || epochs == 0 || r.remaining() / 8 / epochs < n)
    throw Error(ErrorKind::Format, "unexpected end of data");
  std::vector<double> values(n * epochs);
  for (auto& v : values) v = r.f64();
  if (r.remaining() != 0) throw Error(ErrorKind::Format, "trailing bytes after payload");
  return SnapshotMatrix(n, epochs, std::move(values), std::move(layers));
}

SnapshotMatrix parse_trajectory_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::Format, "empty CSV trajectory");
  const auto header = split(trim(line), ',');
  if (header.size() < 3 || trim(header[0]) != "weight_id")
    throw Error(ErrorKind::Format, "CSV header must be weight_id,epoch_0,...,epoch_T");
  const std::size_t epochs = header.size() - 1;
  for (std::size_t k = 0; k < epochs; ++k) {
    if (trim(header[k + 1]) != "epoch_" + std::to_string(k))
      throw Error(ErrorKind::Format, "CSV header column " + std::to_string(k + 1) +
                                         " must be epoch_" + std::to_string(k));
  }
  std::vector<double> values;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto cells = split(trim(line), ',');
    if (cells.size() != header.size())
      throw Error(ErrorKind::Format, "CSV row " + std::to_string(n) + " has " +
                                         std::to_string(cells.size()) + " cells, expected " +
                                         std::to_string(header.size()));
    std::size_t id = 0;
    const auto idcell = trim(cells[0]);
    auto [iptr, iec] = std::from_chars(idcell.data(), idcell.data() + idcell.size(), id);
    if (iec != std::errc{} || iptr != idcell.data() + idcell.size() || id != n)
      throw Error(ErrorKind::Format, "CSV weight_id must be 0..N-1 in order (row " +
                                         std::to_string(n) + ")");
    for (std::size_t k = 1; k < cells.size(); ++k) {
      const auto cell = trim(cells[k]);
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc{} || ptr != cell.data() + cell.size())
        throw Error(ErrorKind::Format, "CSV row " + std::to_string(n) + ": cannot parse '" +
                                           std::string(cell) + "'");
      values.push_back(v);
    }
    if (++n > kCsvMaxRows)
      throw Error(ErrorKind::Format, "CSV trajectories are limited to " +
                                         std::to_string(kCsvMaxRows) + " weights; use CMDT");
  }
  if (n == 0) throw Error(ErrorKind::Format, "CSV trajectory has no rows");
  return SnapshotMatrix(n, epochs, std::move(values), single_layer(n));
}

std::string format_trajectory_csv(const SnapshotMatrix& m) {
  if (m.rows() > kCsvMaxRows)
    throw Error(ErrorKind::Config, "CSV export is limited to " + std::to_string(kCsvMaxRows) +
                                       " weights");
  std::string out = "weight_id";
  for (std::size_t k = 0; k < m.epochs(); ++k) out += ",epoch_" + std::to_string(k);
  out += '\n';
  char buf[32];
  for (std::size_t i = 0; i < m.rows(); ++i) {
    out += std::to_string(i);
    for (double v : m.row(i)) {
      auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
      out += ',';
      out.append(buf, ptr);
    }
    out += '\n';
  }
  return out;
}

SnapshotMatrix load_trajectory(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  if (looks_like_csv(bytes)) return parse_trajectory_csv(std::string(bytes.begin(), bytes.end()));
  return decode_trajectory(bytes);
}

void save_trajectory(const SnapshotMatrix& m, const std::filesystem::path& path) {
  const auto bytes = encode_trajectory(m);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

}  // namespace cmdkit
