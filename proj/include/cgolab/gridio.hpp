#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "cgolab/common.hpp"

namespace cgolab::io {

// Binary grid container. On disk: magic "CGOG", version u16, rank u8,
// dims as u64 each, then row-major little-endian f64 payload. Complex
// grids are stored with a trailing dimension of 2 (interleaved re/im).
struct Grid {
  std::vector<std::uint64_t> dims;
  std::vector<double> data;

  std::size_t size() const {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return n;
  }
};

void write_grid(const std::filesystem::path& path, const Grid& g);
Grid read_grid(const std::filesystem::path& path);

Grid complex_grid(const std::vector<std::uint64_t>& dims,
                  const std::vector<complex>& values);
std::vector<complex> grid_as_complex(const Grid& g);

// RFC-4180 CSV with a mandatory header row.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path,
            const std::vector<std::string>& header);
  void row(const std::vector<std::string>& cells);
  static std::string num(double v);

 private:
  std::ofstream out_;
  std::size_t ncols_;
};

// FNV-1a, used for golden-file regression on report artifacts.
std::uint64_t fnv1a(const void* data, std::size_t n);
std::uint64_t hash_file(const std::filesystem::path& path);

}  // namespace cgolab::io
