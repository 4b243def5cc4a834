#ifndef DTM_IO_HPP
#define DTM_IO_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "dtm/numerics.hpp"
#include "dtm/samplers.hpp"

namespace dtm {

/// Deterministic CSV writer: fixed column order, %.17g floats, '\n' endings.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& columns);
  ~CsvWriter();
  CsvWriter(const CsvWriter&) = delete;
  CsvWriter& operator=(const CsvWriter&) = delete;

  void row(const std::vector<std::string>& cells);
  static std::string num(double v);

 private:
  struct Impl;
  Impl* impl_;
  std::size_t n_cols_;
};

void write_trace_csv(const std::string& path, const ControlTrace& trace);

/// 8-bit ASCII PGM (P2); data is min-max scaled to 0..255.
void write_pgm(const std::string& path, const Vec& data, std::size_t rows, std::size_t cols);

/// Flat binary tensor: "DTMT", u32 version, u32 ndim, u64 dims[], float64
/// row-major data, little-endian.
void write_tensor(const std::string& path, const std::vector<std::uint64_t>& dims, const Vec& data);
std::pair<std::vector<std::uint64_t>, Vec> read_tensor(const std::string& path);

bool make_directories(const std::string& path);

}  // namespace dtm

#endif  // DTM_IO_HPP
