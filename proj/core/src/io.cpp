#include "dtm/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace dtm {

struct CsvWriter::Impl {
  std::ofstream out;
};

CsvWriter::CsvWriter(const std::string& path, const std::vector<std::string>& columns)
    : impl_(new Impl), n_cols_(columns.size()) {
  impl_->out.open(path);
  if (!impl_->out) {
    delete impl_;
    throw std::runtime_error("CsvWriter: cannot open " + path);
  }
  for (std::size_t i = 0; i < columns.size(); ++i)
    impl_->out << columns[i] << (i + 1 < columns.size() ? "," : "");
  impl_->out << '\n';
}

CsvWriter::~CsvWriter() { delete impl_; }

void CsvWriter::row(const std::vector<std::string>& cells) {
  if (cells.size() != n_cols_) throw std::invalid_argument("CsvWriter: column count mismatch");
  for (std::size_t i = 0; i < cells.size(); ++i)
    impl_->out << cells[i] << (i + 1 < cells.size() ? "," : "");
  impl_->out << '\n';
}

std::string CsvWriter::num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_trace_csv(const std::string& path, const ControlTrace& trace) {
  CsvWriter csv(path, {"t", "u_norm", "c_score", "c_control", "c_terminal", "total", "residual"});
  for (const auto& r : trace)
    csv.row({std::to_string(r.t), CsvWriter::num(r.u_norm), CsvWriter::num(r.parts.c_score),
             CsvWriter::num(r.parts.c_control), CsvWriter::num(r.parts.c_terminal),
             CsvWriter::num(r.parts.total), CsvWriter::num(r.residual)});
}

void write_pgm(const std::string& path, const Vec& data, std::size_t rows, std::size_t cols) {
  if (rows * cols != data.size()) throw std::invalid_argument("write_pgm: shape mismatch");
  double lo = data[0], hi = data[0];
  for (double v : data) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const double span = (hi > lo) ? (hi - lo) : 1.0;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_pgm: cannot open " + path);
  out << "P2\n" << cols << " " << rows << "\n255\n";
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const int v = static_cast<int>(std::lround(255.0 * (data[r * cols + c] - lo) / span));
      out << v << (c + 1 < cols ? " " : "");
    }
    out << '\n';
  }
}

namespace {
constexpr char kTensorMagic[4] = {'D', 'T', 'M', 'T'};
constexpr std::uint32_t kTensorVersion = 1;
}  // namespace

void write_tensor(const std::string& path, const std::vector<std::uint64_t>& dims,
                  const Vec& data) {
  std::uint64_t n = 1;
  for (auto d : dims) n *= d;
  if (n != data.size()) throw std::invalid_argument("write_tensor: dims do not match data size");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_tensor: cannot open " + path);
  out.write(kTensorMagic, 4);
  const std::uint32_t ver = kTensorVersion;
  const std::uint32_t nd = static_cast<std::uint32_t>(dims.size());
  out.write(reinterpret_cast<const char*>(&ver), sizeof(ver));
  out.write(reinterpret_cast<const char*>(&nd), sizeof(nd));
  out.write(reinterpret_cast<const char*>(dims.data()),
            static_cast<std::streamsize>(dims.size() * sizeof(std::uint64_t)));
  out.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(double)));
  if (!out) throw std::runtime_error("write_tensor: write failed for " + path);
}

std::pair<std::vector<std::uint64_t>, Vec> read_tensor(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_tensor: cannot open " + path);
  char magic[4];
  std::uint32_t ver = 0, nd = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&ver), sizeof(ver));
  in.read(reinterpret_cast<char*>(&nd), sizeof(nd));
  if (!in || std::memcmp(magic, kTensorMagic, 4) != 0 || ver != kTensorVersion)
    throw std::runtime_error("read_tensor: bad header in " + path);
  std::vector<std::uint64_t> dims(nd);
  in.read(reinterpret_cast<char*>(dims.data()),
          static_cast<std::streamsize>(nd * sizeof(std::uint64_t)));
  std::uint64_t n = 1;
  for (auto d : dims) n *= d;
  Vec data(n);
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(n * sizeof(double)));
  if (!in) throw std::runtime_error("read_tensor: truncated file " + path);
  return {std::move(dims), std::move(data)};
}

bool make_directories(const std::string& path) {
  std::error_code ec;
  std::filesystem::create_directories(path, ec);
  return !ec;
}

}  // namespace dtm
