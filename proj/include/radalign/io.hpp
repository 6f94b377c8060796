#pragma once

#include "radalign/common.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

namespace radalign::io {

static_assert(std::endian::native == std::endian::little,
              "serialization assumes a little-endian host");

inline void write_u32(std::ostream& os, uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

inline void write_u64(std::ostream& os, uint64_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

inline void write_f64(std::ostream& os, double v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

inline void write_bytes(std::ostream& os, const void* data, size_t len) {
    os.write(static_cast<const char*>(data), static_cast<std::streamsize>(len));
}

inline void write_string(std::ostream& os, const std::string& s) {
    write_u32(os, static_cast<uint32_t>(s.size()));
    write_bytes(os, s.data(), s.size());
}

inline void read_exact(std::istream& is, void* out, size_t len, const char* what) {
    is.read(static_cast<char*>(out), static_cast<std::streamsize>(len));
    if (static_cast<size_t>(is.gcount()) != len)
        throw FormatError(std::string("truncated file while reading ") + what);
}

inline uint32_t read_u32(std::istream& is, const char* what = "u32") {
    uint32_t v;
    read_exact(is, &v, sizeof v, what);
    return v;
}

inline uint64_t read_u64(std::istream& is, const char* what = "u64") {
    uint64_t v;
    read_exact(is, &v, sizeof v, what);
    return v;
}

inline double read_f64(std::istream& is, const char* what = "f64") {
    double v;
    read_exact(is, &v, sizeof v, what);
    return v;
}

inline std::string read_string(std::istream& is, const char* what = "string") {
    uint32_t len = read_u32(is, what);
    std::string s(len, '\0');
    if (len > 0) read_exact(is, s.data(), len, what);
    return s;
}

inline void write_magic(std::ostream& os, const char magic[4]) {
    os.write(magic, 4);
}

inline uint64_t remaining_bytes(std::istream& is) {
    auto pos = is.tellg();
    is.seekg(0, std::ios::end);
    auto end = is.tellg();
    is.seekg(pos);
    return pos < 0 || end < pos ? 0 : static_cast<uint64_t>(end - pos);
}

// Guards matrix/entry counts read from headers against truncated or
// corrupt files before anything is allocated.
inline void expect_payload(std::istream& is, uint64_t bytes_needed, const char* what) {
    if (remaining_bytes(is) < bytes_needed)
        throw FormatError(std::string("truncated file: ") + what + " needs " +
                          std::to_string(bytes_needed) + " more bytes");
}

inline void expect_magic(std::istream& is, const char magic[4], const char* format_name) {
    char buf[4];
    read_exact(is, buf, 4, "magic");
    if (std::memcmp(buf, magic, 4) != 0)
        throw FormatError(std::string("bad magic, not a ") + format_name + " file");
}

// Row-major float64 matrix payload, shape written by the caller.
inline void write_matrix_data(std::ostream& os, const Matrix& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            write_f64(os, m(r, c));
}

inline Matrix read_matrix_data(std::istream& is, Eigen::Index rows, Eigen::Index cols) {
    if (rows < 0 || cols < 0) throw FormatError("negative matrix dimensions");
    expect_payload(is, static_cast<uint64_t>(rows) * static_cast<uint64_t>(cols) * 8,
                   "matrix data");
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c)
            m(r, c) = read_f64(is, "matrix data");
    return m;
}

// Writes through a temp file in the same directory, then renames into place.
inline void atomic_write(const std::filesystem::path& path,
                         const std::function<void(std::ostream&)>& writer) {
    namespace fs = std::filesystem;
    fs::path dir = path.parent_path();
    if (!dir.empty()) fs::create_directories(dir);
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw FileError(tmp.string(), "cannot open for writing");
        writer(os);
        os.flush();
        if (!os) throw FileError(tmp.string(), "write failed");
    }
    fs::rename(tmp, path);
}

inline std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FileError(path.string(), "cannot open file");
    return is;
}

inline std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FileError(path.string(), "cannot open file");
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

inline uint64_t file_fingerprint(const std::filesystem::path& path) {
    std::string bytes = read_text_file(path);
    return fnv1a64(bytes.data(), bytes.size());
}

}  // namespace radalign::io
