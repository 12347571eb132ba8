// rhmeta array files: little-endian float64 arrays behind a small versioned header.
//
// Layout (all integers little-endian):
//   bytes 0..7   magic "RHMARRAY"
//   u32          format version (1)
//   u32          ndim
//   u64 x ndim   shape
//   f64 x prod(shape), row-major
#pragma once

#include "rhmeta/common.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>

namespace rhmeta::io {

namespace fs = std::filesystem;

inline constexpr char kArrayMagic[8] = {'R', 'H', 'M', 'A', 'R', 'R', 'A', 'Y'};
inline constexpr std::uint32_t kArrayVersion = 1;

static_assert(std::endian::native == std::endian::little, "array files assume a little-endian host");

struct Array {
    std::vector<std::uint64_t> shape;
    std::vector<double> data; ///< row-major

    std::uint64_t size() const {
        return std::accumulate(shape.begin(), shape.end(), std::uint64_t{1}, std::multiplies<>());
    }
};

inline void write_array(const fs::path &path, const Array &a) {
    require(a.size() == a.data.size(), "write_array: shape does not match data size");
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot open " + path.string() + " for writing");
    const auto ndim = static_cast<std::uint32_t>(a.shape.size());
    out.write(kArrayMagic, sizeof kArrayMagic);
    out.write(reinterpret_cast<const char *>(&kArrayVersion), sizeof kArrayVersion);
    out.write(reinterpret_cast<const char *>(&ndim), sizeof ndim);
    out.write(reinterpret_cast<const char *>(a.shape.data()), static_cast<std::streamsize>(ndim * sizeof(std::uint64_t)));
    out.write(reinterpret_cast<const char *>(a.data.data()), static_cast<std::streamsize>(a.data.size() * sizeof(double)));
    if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

inline Array read_array(const fs::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
    char magic[8];
    std::uint32_t version = 0, ndim = 0;
    in.read(magic, sizeof magic);
    in.read(reinterpret_cast<char *>(&version), sizeof version);
    in.read(reinterpret_cast<char *>(&ndim), sizeof ndim);
    if (!in || std::memcmp(magic, kArrayMagic, sizeof magic) != 0)
        throw Error(ErrorKind::Io, path.string() + " is not an array file");
    if (version != kArrayVersion)
        throw Error(ErrorKind::Io, path.string() + ": unsupported array format version " + std::to_string(version));
    if (ndim > 8) throw Error(ErrorKind::Io, path.string() + ": corrupt header (ndim " + std::to_string(ndim) + ")");
    Array a;
    a.shape.resize(ndim);
    in.read(reinterpret_cast<char *>(a.shape.data()), static_cast<std::streamsize>(ndim * sizeof(std::uint64_t)));
    a.data.resize(a.size());
    in.read(reinterpret_cast<char *>(a.data.data()), static_cast<std::streamsize>(a.data.size() * sizeof(double)));
    if (!in) throw Error(ErrorKind::Io, path.string() + ": truncated array file");
    return a;
}

/// Matrices are stored as 2-D arrays (rows x cols), row-major on disk.
inline void write_matrix(const fs::path &path, const Matrix &m) {
    Array a;
    a.shape = {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())};
    a.data.resize(static_cast<std::size_t>(m.size()));
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(a.data.data(), m.rows(),
                                                                                         m.cols()) = m;
    write_array(path, a);
}

inline Matrix read_matrix(const fs::path &path) {
    const Array a = read_array(path);
    if (a.shape.size() != 2) throw Error(ErrorKind::Io, path.string() + ": expected a 2-D array");
    return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        a.data.data(), static_cast<Eigen::Index>(a.shape[0]), static_cast<Eigen::Index>(a.shape[1]));
}

inline void write_vector(const fs::path &path, const Vector &v) {
    write_array(path, Array{{static_cast<std::uint64_t>(v.size())}, std::vector<double>(v.data(), v.data() + v.size())});
}

inline Vector read_vector(const fs::path &path) {
    const Array a = read_array(path);
    if (a.shape.size() != 1) throw Error(ErrorKind::Io, path.string() + ": expected a 1-D array");
    return Eigen::Map<const Vector>(a.data.data(), static_cast<Eigen::Index>(a.data.size()));
}

inline void write_text(const fs::path &path, const std::string &text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

inline std::string read_text(const fs::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

/// Shortest round-trip decimal form of x (for CSV cells).
inline std::string format_double(double x) {
    char buf[32];
    for (int prec = 15; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, x);
        if (std::strtod(buf, nullptr) == x) break;
    }
    return buf;
}

/// Comma-separated table with a header row and LF line endings.
class CsvWriter {
  public:
    explicit CsvWriter(std::vector<std::string> header) : columns_(header.size()) { append_row_text(header); }

    void row(const std::vector<double> &values) {
        require(values.size() == columns_, "csv: row width does not match header");
        std::vector<std::string> cells;
        cells.reserve(values.size());
        for (double v : values) cells.push_back(format_double(v));
        append_row_text(cells);
    }

    const std::string &str() const { return text_; }
    void save(const fs::path &path) const { write_text(path, text_); }

  private:
    void append_row_text(const std::vector<std::string> &cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) text_ += ',';
            text_ += cells[i];
        }
        text_ += '\n';
    }

    std::size_t columns_;
    std::string text_;
};

/// FNV-1a 64-bit digest, used for config and snapshot provenance tags.
inline std::uint64_t fnv1a(const void *data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL) {
    const auto *p = static_cast<const unsigned char *>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

} // namespace rhmeta::io
