#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "codeq/matrix.hpp"

// Readers and writers for the .fvecs / .bvecs / .ivecs record formats used
// by the standard ANN benchmark distributions: each record is a little-endian
// 32-bit dimension header followed by d payload elements (f32 / u8 / i32).
// All records must share one dimension. Files are validated with a cheap
// header walk before the full matrix is allocated.

namespace codeq {

struct IntTable {
    std::size_t rows = 0;
    std::size_t dim = 0;
    std::vector<std::int32_t> data;

    const std::int32_t* row(std::size_t r) const { return data.data() + r * dim; }
};

namespace detail {

// Walks all record headers; returns (rows, dim). Throws on any structural
// problem: negative/zero d, inconsistent d, or a truncated record.
inline std::pair<std::size_t, std::size_t> walk_vecs(std::ifstream& is,
                                                     const std::string& path,
                                                     std::size_t elem_size) {
    is.seekg(0, std::ios::end);
    std::int64_t file_size = is.tellg();
    is.seekg(0, std::ios::beg);
    CODEQ_REQUIRE(file_size > 0, "read_vecs: '", path, "' is empty");

    std::int32_t d0 = 0;
    is.read(reinterpret_cast<char*>(&d0), 4);
    CODEQ_REQUIRE(is.gcount() == 4, "read_vecs: '", path, "' truncated header");
    CODEQ_REQUIRE(d0 > 0, "read_vecs: '", path, "' has non-positive dimension ", d0);

    std::int64_t record = 4 + static_cast<std::int64_t>(d0) *
                                      static_cast<std::int64_t>(elem_size);
    CODEQ_REQUIRE(file_size % record == 0, "read_vecs: '", path, "' size ",
                  file_size, " is not a multiple of the record size ", record);
    std::size_t rows = static_cast<std::size_t>(file_size / record);

    for (std::size_t r = 1; r < rows; ++r) {
        is.seekg(static_cast<std::streamoff>(r) * record, std::ios::beg);
        std::int32_t d = 0;
        is.read(reinterpret_cast<char*>(&d), 4);
        CODEQ_REQUIRE(is.gcount() == 4, "read_vecs: '", path, "' truncated record ", r);
        CODEQ_REQUIRE(d == d0, "read_vecs: '", path, "' inconsistent dimension at record ",
                      r, " (", d, " vs ", d0, ")");
    }
    is.seekg(0, std::ios::beg);
    return {rows, static_cast<std::size_t>(d0)};
}

} // namespace detail

inline DenseMatrix read_fvecs(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    CODEQ_REQUIRE(is.is_open(), "read_fvecs: cannot open '", path, "'");
    auto [rows, dim] = detail::walk_vecs(is, path, 4);
    DenseMatrix out(rows, dim);
    for (std::size_t r = 0; r < rows; ++r) {
        is.seekg(4, std::ios::cur);
        is.read(reinterpret_cast<char*>(out.row(r)),
                static_cast<std::streamsize>(dim * 4));
        CODEQ_REQUIRE(is.good(), "read_fvecs: '", path, "' truncated at record ", r);
    }
    out.check_finite();
    return out;
}

// Bytes widen to their exact real value (255 -> 255.0f).
inline DenseMatrix read_bvecs(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    CODEQ_REQUIRE(is.is_open(), "read_bvecs: cannot open '", path, "'");
    auto [rows, dim] = detail::walk_vecs(is, path, 1);
    DenseMatrix out(rows, dim);
    std::vector<std::uint8_t> buf(dim);
    for (std::size_t r = 0; r < rows; ++r) {
        is.seekg(4, std::ios::cur);
        is.read(reinterpret_cast<char*>(buf.data()),
                static_cast<std::streamsize>(dim));
        CODEQ_REQUIRE(is.good(), "read_bvecs: '", path, "' truncated at record ", r);
        for (std::size_t j = 0; j < dim; ++j) {
            out.at(r, j) = static_cast<float>(buf[j]);
        }
    }
    return out;
}

inline IntTable read_ivecs(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    CODEQ_REQUIRE(is.is_open(), "read_ivecs: cannot open '", path, "'");
    auto [rows, dim] = detail::walk_vecs(is, path, 4);
    IntTable out;
    out.rows = rows;
    out.dim = dim;
    out.data.resize(rows * dim);
    for (std::size_t r = 0; r < rows; ++r) {
        is.seekg(4, std::ios::cur);
        is.read(reinterpret_cast<char*>(out.data.data() + r * dim),
                static_cast<std::streamsize>(dim * 4));
        CODEQ_REQUIRE(is.good(), "read_ivecs: '", path, "' truncated at record ", r);
    }
    return out;
}

// Reads any of the three vector formats by the `kind` tag ("fvecs" | "bvecs");
// integer data goes through read_ivecs directly.
inline DenseMatrix read_vecs(const std::string& path, const std::string& kind) {
    if (kind == "fvecs") {
        return read_fvecs(path);
    }
    if (kind == "bvecs") {
        return read_bvecs(path);
    }
    fail("read_vecs: unknown kind '", kind, "' (expected fvecs or bvecs)");
}

// Picks the reader from the file extension.
inline DenseMatrix read_vecs_auto(const std::string& path) {
    auto dot = path.find_last_of('.');
    CODEQ_REQUIRE(dot != std::string::npos, "read_vecs_auto: no extension on '",
                  path, "'");
    return read_vecs(path, path.substr(dot + 1));
}

inline void write_fvecs(const std::string& path, const DenseMatrix& x) {
    std::ofstream os(path, std::ios::binary);
    CODEQ_REQUIRE(os.is_open(), "write_fvecs: cannot open '", path, "'");
    std::int32_t d = static_cast<std::int32_t>(x.dim);
    for (std::size_t r = 0; r < x.rows; ++r) {
        os.write(reinterpret_cast<const char*>(&d), 4);
        os.write(reinterpret_cast<const char*>(x.row(r)),
                 static_cast<std::streamsize>(x.dim * 4));
    }
    CODEQ_REQUIRE(os.good(), "write_fvecs: write to '", path, "' failed");
}

inline void write_bvecs(const std::string& path, const DenseMatrix& x) {
    std::ofstream os(path, std::ios::binary);
    CODEQ_REQUIRE(os.is_open(), "write_bvecs: cannot open '", path, "'");
    std::int32_t d = static_cast<std::int32_t>(x.dim);
    std::vector<std::uint8_t> buf(x.dim);
    for (std::size_t r = 0; r < x.rows; ++r) {
        for (std::size_t j = 0; j < x.dim; ++j) {
            float v = x.at(r, j);
            CODEQ_REQUIRE(v >= 0.0f && v <= 255.0f && v == static_cast<float>(static_cast<std::uint8_t>(v)),
                          "write_bvecs: value ", v, " not representable as a byte");
            buf[j] = static_cast<std::uint8_t>(v);
        }
        os.write(reinterpret_cast<const char*>(&d), 4);
        os.write(reinterpret_cast<const char*>(buf.data()),
                 static_cast<std::streamsize>(x.dim));
    }
    CODEQ_REQUIRE(os.good(), "write_bvecs: write to '", path, "' failed");
}

inline void write_ivecs(const std::string& path, const IntTable& t) {
    std::ofstream os(path, std::ios::binary);
    CODEQ_REQUIRE(os.is_open(), "write_ivecs: cannot open '", path, "'");
    std::int32_t d = static_cast<std::int32_t>(t.dim);
    for (std::size_t r = 0; r < t.rows; ++r) {
        os.write(reinterpret_cast<const char*>(&d), 4);
        os.write(reinterpret_cast<const char*>(t.row(r)),
                 static_cast<std::streamsize>(t.dim * 4));
    }
    CODEQ_REQUIRE(os.good(), "write_ivecs: write to '", path, "' failed");
}

} // namespace codeq
