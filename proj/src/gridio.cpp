#include "cgolab/gridio.hpp"

#include <bit>
#include <cstring>
#include <sstream>

namespace cgolab::io {

namespace {

static_assert(std::endian::native == std::endian::little,
              "grid format is little-endian; big-endian hosts unsupported");

template <class T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}

}  // namespace

void write_grid(const std::filesystem::path& path, const Grid& g) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "cannot open " + path.string() + " for writing");
  out.write("CGOG", 4);
  put<std::uint16_t>(out, 1);
  put<std::uint8_t>(out, static_cast<std::uint8_t>(g.dims.size()));
  for (auto d : g.dims) put<std::uint64_t>(out, d);
  require(g.data.size() == g.size(), "grid payload size mismatch");
  out.write(reinterpret_cast<const char*>(g.data.data()),
            static_cast<std::streamsize>(g.data.size() * sizeof(double)));
  require(out.good(), "short write to " + path.string());
}

Grid read_grid(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "cannot open " + path.string());
  char magic[4];
  in.read(magic, 4);
  require(std::memcmp(magic, "CGOG", 4) == 0, "bad magic in " + path.string());
  auto version = get<std::uint16_t>(in);
  require(version == 1, "unsupported grid version");
  auto rank = get<std::uint8_t>(in);
  Grid g;
  g.dims.resize(rank);
  for (auto& d : g.dims) d = get<std::uint64_t>(in);
  g.data.resize(g.size());
  in.read(reinterpret_cast<char*>(g.data.data()),
          static_cast<std::streamsize>(g.data.size() * sizeof(double)));
  require(in.good(), "short read from " + path.string());
  return g;
}

Grid complex_grid(const std::vector<std::uint64_t>& dims,
                  const std::vector<complex>& values) {
  Grid g;
  g.dims = dims;
  g.dims.push_back(2);
  g.data.resize(2 * values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    g.data[2 * i] = values[i].real();
    g.data[2 * i + 1] = values[i].imag();
  }
  require(g.data.size() == g.size(), "complex grid dims mismatch");
  return g;
}

std::vector<complex> grid_as_complex(const Grid& g) {
  require(!g.dims.empty() && g.dims.back() == 2,
          "grid is not complex-interleaved");
  std::vector<complex> v(g.data.size() / 2);
  for (std::size_t i = 0; i < v.size(); ++i)
    v[i] = complex(g.data[2 * i], g.data[2 * i + 1]);
  return v;
}

CsvWriter::CsvWriter(const std::filesystem::path& path,
                     const std::vector<std::string>& header)
    : out_(path), ncols_(header.size()) {
  require(out_.good(), "cannot open " + path.string() + " for writing");
  row(header);
}

void CsvWriter::row(const std::vector<std::string>& cells) {
  require(cells.size() == ncols_, "csv row width mismatch");
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const std::string& c = cells[i];
    bool quote = c.find_first_of(",\"\n") != std::string::npos;
    if (i) out_ << ',';
    if (quote) {
      out_ << '"';
      for (char ch : c) {
        if (ch == '"') out_ << '"';
        out_ << ch;
      }
      out_ << '"';
    } else {
      out_ << c;
    }
  }
  out_ << "\r\n";
}

std::string CsvWriter::num(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::uint64_t fnv1a(const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 14695981039346656037ull;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t hash_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "cannot open " + path.string());
  std::vector<char> buf((std::istreambuf_iterator<char>(in)),
                        std::istreambuf_iterator<char>());
  return fnv1a(buf.data(), buf.size());
}

}  // namespace cgolab::io
