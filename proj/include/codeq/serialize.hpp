#pragma once

#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>

#include "codeq/codes.hpp"
#include "codeq/itq.hpp"
#include "codeq/kmeans.hpp"
#include "codeq/linear_decoders.hpp"
#include "codeq/matrix.hpp"
#include "codeq/nn_decoder.hpp"
#include "codeq/pq.hpp"

// Single-file model format: an 8-byte magic string, a format version, a model
// kind tag and a shape header, followed by raw little-endian tensors (32-bit
// floats, 64-bit sizes). Round-trips are bit-exact.

namespace codeq {

inline constexpr char kModelMagic[8] = {'C', 'O', 'D', 'E', 'Q', 'M', 'D', 'L'};
inline constexpr std::uint32_t kModelFormatVersion = 1;

enum class ModelKind : std::uint32_t {
    kmeans = 1,
    pq = 2,
    itq = 3,
    decoder_lut = 4,
    topline = 5,
    nn_decoder = 6,
    codes = 7,
};

class StreamWriter {
public:
    explicit StreamWriter(std::ostream& os) : os_(os) {}

    void bytes(const void* p, std::size_t n) {
        os_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
        CODEQ_REQUIRE(os_.good(), "serialize: write failed");
    }
    void u32(std::uint32_t v) { bytes(&v, 4); }
    void u64(std::uint64_t v) { bytes(&v, 8); }
    void f64(double v) { bytes(&v, 8); }
    void f32s(const float* p, std::size_t n) { bytes(p, n * 4); }

private:
    std::ostream& os_;
};

class StreamReader {
public:
    explicit StreamReader(std::istream& is) : is_(is) {}

    void bytes(void* p, std::size_t n) {
        is_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        CODEQ_REQUIRE(is_.gcount() == static_cast<std::streamsize>(n),
                      "deserialize: truncated stream");
    }
    std::uint32_t u32() {
        std::uint32_t v;
        bytes(&v, 4);
        return v;
    }
    std::uint64_t u64() {
        std::uint64_t v;
        bytes(&v, 8);
        return v;
    }
    double f64() {
        double v;
        bytes(&v, 8);
        return v;
    }
    void f32s(float* p, std::size_t n) { bytes(p, n * 4); }

private:
    std::istream& is_;
};

namespace detail {

inline void write_header(StreamWriter& w, ModelKind kind) {
    w.bytes(kModelMagic, sizeof(kModelMagic));
    w.u32(kModelFormatVersion);
    w.u32(static_cast<std::uint32_t>(kind));
}

inline ModelKind read_header(StreamReader& r) {
    char magic[8];
    r.bytes(magic, sizeof(magic));
    CODEQ_REQUIRE(std::memcmp(magic, kModelMagic, sizeof(magic)) == 0,
                  "deserialize: bad magic string; not a model file");
    std::uint32_t version = r.u32();
    CODEQ_REQUIRE(version == kModelFormatVersion, "deserialize: format version ",
                  version, " unsupported (expected ", kModelFormatVersion, ")");
    return static_cast<ModelKind>(r.u32());
}

inline void expect_kind(StreamReader& r, ModelKind want) {
    ModelKind got = read_header(r);
    CODEQ_REQUIRE(got == want, "deserialize: model kind tag ",
                  static_cast<std::uint32_t>(got), " does not match expected ",
                  static_cast<std::uint32_t>(want));
}

} // namespace detail

// ---- KMeansModel ----

inline void save_model(std::ostream& os, const KMeansModel& m) {
    StreamWriter w(os);
    detail::write_header(w, ModelKind::kmeans);
    w.u64(m.centroids.rows);
    w.u64(m.centroids.dim);
    w.u64(m.iterations_run);
    w.f64(m.final_mse);
    w.f32s(m.centroids.data.data(), m.centroids.data.size());
}

inline void load_model(std::istream& is, KMeansModel& m) {
    StreamReader r(is);
    detail::expect_kind(r, ModelKind::kmeans);
    std::size_t k = r.u64(), d = r.u64();
    m.iterations_run = r.u64();
    m.final_mse = r.f64();
    m.centroids = DenseMatrix(k, d);
    r.f32s(m.centroids.data.data(), k * d);
    m.centroids.check_finite();
    m.mse_history.clear();
}

// ---- PQModel ----

inline void save_model(std::ostream& os, const PQModel& m) {
    StreamWriter w(os);
    detail::write_header(w, ModelKind::pq);
    w.u64(m.codebook.m);
    w.u64(m.codebook.ksub);
    w.u64(m.codebook.dsub);
    w.u64(m.bits);
    w.u32(m.codebook.has_rotation() ? 1 : 0);
    w.f32s(m.codebook.centroids.data(), m.codebook.centroids.size());
    if (m.codebook.has_rotation()) {
        w.f32s(m.codebook.rotation.data(), m.codebook.rotation.size());
    }
}

inline void load_model(std::istream& is, PQModel& m) {
    StreamReader r(is);
    detail::expect_kind(r, ModelKind::pq);
    m.codebook.m = r.u64();
    m.codebook.ksub = r.u64();
    m.codebook.dsub = r.u64();
    m.bits = r.u64();
    bool rot = r.u32() != 0;
    m.codebook.centroids.resize(m.codebook.m * m.codebook.ksub * m.codebook.dsub);
    r.f32s(m.codebook.centroids.data(), m.codebook.centroids.size());
    if (rot) {
        m.codebook.rotation.resize(m.codebook.dim() * m.codebook.dim());
        r.f32s(m.codebook.rotation.data(), m.codebook.rotation.size());
    } else {
        m.codebook.rotation.clear();
    }
    m.codebook.validate();
    m.subspace_mse.clear();
    m.opq_objective.clear();
}

// ---- ITQModel ----

inline void save_model(std::ostream& os, const ITQModel& m) {
    StreamWriter w(os);
    detail::write_header(w, ModelKind::itq);
    w.u64(m.dim());
    w.u64(m.bits());
    w.f32s(m.mean.data(), m.mean.size());
    w.f32s(m.pca.data.data(), m.pca.data.size());
    w.f32s(m.rotation.data.data(), m.rotation.data.size());
    w.f32s(m.basis.basis.data.data(), m.basis.basis.data.size());
}

inline void load_model(std::istream& is, ITQModel& m) {
    StreamReader r(is);
    detail::expect_kind(r, ModelKind::itq);
    std::size_t d = r.u64(), bits = r.u64();
    m.mean.resize(d);
    r.f32s(m.mean.data(), d);
    m.pca = DenseMatrix(bits, d);
    r.f32s(m.pca.data.data(), bits * d);
    m.rotation = DenseMatrix(bits, bits);
    r.f32s(m.rotation.data.data(), bits * bits);
    m.basis.m = bits;
    m.basis.dim = d;
    m.basis.basis = DenseMatrix(bits, d);
    r.f32s(m.basis.basis.data.data(), bits * d);
    m.objective.clear();
}

// ---- DecoderLUT ----

inline void save_model(std::ostream& os, const DecoderLUT& m) {
    StreamWriter w(os);
    detail::write_header(w, ModelKind::decoder_lut);
    w.u64(m.m);
    w.u64(m.ksub);
    w.u64(m.dim);
    w.f32s(m.tables.data(), m.tables.size());
}

inline void load_model(std::istream& is, DecoderLUT& m) {
    StreamReader r(is);
    detail::expect_kind(r, ModelKind::decoder_lut);
    m.m = r.u64();
    m.ksub = r.u64();
    m.dim = r.u64();
    m.tables.resize(m.m * m.ksub * m.dim);
    r.f32s(m.tables.data(), m.tables.size());
}

// ---- ToplineDecoder ----

inline void save_model(std::ostream& os, const ToplineDecoder& m) {
    StreamWriter w(os);
    detail::write_header(w, ModelKind::topline);
    w.u64(m.m);
    w.u64(m.bits);
    w.u64(m.dim);
    w.u64(m.table.rows);
    w.f32s(m.table.data.data(), m.table.data.size());
    for (std::uint64_t c : m.counts) {
        w.u64(c);
    }
}

inline void load_model(std::istream& is, ToplineDecoder& m) {
    StreamReader r(is);
    detail::expect_kind(r, ModelKind::topline);
    m.m = r.u64();
    m.bits = r.u64();
    m.dim = r.u64();
    std::size_t k = r.u64();
    m.table = DenseMatrix(k, m.dim);
    r.f32s(m.table.data.data(), k * m.dim);
    m.counts.resize(k);
    for (std::size_t i = 0; i < k; ++i) {
        m.counts[i] = r.u64();
    }
}

// ---- NNDecoderParams ----

inline void save_model(std::ostream& os, const NNDecoderParams& m) {
    StreamWriter w(os);
    detail::write_header(w, ModelKind::nn_decoder);
    w.u64(m.m);
    w.u64(m.ksub);
    w.u64(m.dim);
    w.u64(m.hidden);
    w.u64(m.blocks.size());
    w.f32s(m.lut.data(), m.lut.size());
    for (const auto& b : m.blocks) {
        w.f32s(b.bn_gamma.data(), b.bn_gamma.size());
        w.f32s(b.bn_beta.data(), b.bn_beta.size());
        w.f32s(b.bn_running_mean.data(), b.bn_running_mean.size());
        w.f32s(b.bn_running_var.data(), b.bn_running_var.size());
        w.f32s(b.w1.data(), b.w1.size());
        w.f32s(b.b1.data(), b.b1.size());
        w.f32s(b.w2.data(), b.w2.size());
        w.f32s(b.b2.data(), b.b2.size());
    }
}

inline void load_model(std::istream& is, NNDecoderParams& m) {
    StreamReader r(is);
    detail::expect_kind(r, ModelKind::nn_decoder);
    std::size_t mm = r.u64(), ksub = r.u64(), dim = r.u64(), hidden = r.u64();
    std::size_t nblocks = r.u64();
    m = NNDecoderParams::shaped(mm, ksub, dim, hidden, nblocks);
    r.f32s(m.lut.data(), m.lut.size());
    for (auto& b : m.blocks) {
        r.f32s(b.bn_gamma.data(), b.bn_gamma.size());
        r.f32s(b.bn_beta.data(), b.bn_beta.size());
        r.f32s(b.bn_running_mean.data(), b.bn_running_mean.size());
        r.f32s(b.bn_running_var.data(), b.bn_running_var.size());
        r.f32s(b.w1.data(), b.w1.size());
        r.f32s(b.b1.data(), b.b1.size());
        r.f32s(b.w2.data(), b.w2.size());
        r.f32s(b.b2.data(), b.b2.size());
    }
    CODEQ_REQUIRE(m.all_finite(), "deserialize: non-finite NN parameter");
}

// ---- CodeArray ----

inline void save_model(std::ostream& os, const CodeArray& m) {
    StreamWriter w(os);
    detail::write_header(w, ModelKind::codes);
    w.u64(m.n);
    w.u64(m.m);
    w.u64(m.bits);
    w.bytes(m.payload.data(), m.payload.size());
}

inline void load_model(std::istream& is, CodeArray& m) {
    StreamReader r(is);
    detail::expect_kind(r, ModelKind::codes);
    std::size_t n = r.u64(), mm = r.u64(), bits = r.u64();
    m = CodeArray(n, mm, bits);
    r.bytes(m.payload.data(), m.payload.size());
}

// File convenience wrappers.

template <typename Model>
void save_model_file(const std::string& path, const Model& m) {
    std::ofstream os(path, std::ios::binary);
    CODEQ_REQUIRE(os.is_open(), "save_model_file: cannot open '", path, "'");
    save_model(os, m);
    os.flush();
    CODEQ_REQUIRE(os.good(), "save_model_file: write to '", path, "' failed");
}

template <typename Model>
void load_model_file(const std::string& path, Model& m) {
    std::ifstream is(path, std::ios::binary);
    CODEQ_REQUIRE(is.is_open(), "load_model_file: cannot open '", path, "'");
    load_model(is, m);
}

// Kind tag of a model file without loading it.
inline ModelKind peek_model_kind(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    CODEQ_REQUIRE(is.is_open(), "peek_model_kind: cannot open '", path, "'");
    StreamReader r(is);
    return detail::read_header(r);
}

} // namespace codeq
