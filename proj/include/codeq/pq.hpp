#pragma once

#include <cstdint>
#include <vector>

#include "codeq/codes.hpp"
#include "codeq/kmeans.hpp"
#include "codeq/matrix.hpp"

namespace codeq {

// Per-subspace encoder tables, plus an optional pre-rotation. The rotation
// convention is row-vector form: encoding sees x' = x * R, decoding undoes
// it with xhat = xhat' * R^T.
struct SubspaceCodebook {
    std::size_t m = 0;
    std::size_t ksub = 0;
    std::size_t dsub = 0;
    std::vector<float> centroids;  // m * ksub * dsub
    std::vector<float> rotation;   // empty, or d*d row-major orthogonal

    std::size_t dim() const { return m * dsub; }
    bool has_rotation() const { return !rotation.empty(); }

    const float* centroid(std::size_t sub, std::size_t k) const {
        return centroids.data() + (sub * ksub + k) * dsub;
    }
    float* centroid(std::size_t sub, std::size_t k) {
        return centroids.data() + (sub * ksub + k) * dsub;
    }

    // max |R^T R - I|; 0 when no rotation is set
    double rotation_orthogonality_error() const {
        if (!has_rotation()) {
            return 0.0;
        }
        std::size_t d = dim();
        double worst = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            for (std::size_t j = i; j < d; ++j) {
                double acc = 0.0;
                for (std::size_t r = 0; r < d; ++r) {
                    acc += static_cast<double>(rotation[r * d + i]) *
                           static_cast<double>(rotation[r * d + j]);
                }
                double err = std::abs(acc - (i == j ? 1.0 : 0.0));
                if (err > worst) {
                    worst = err;
                }
            }
        }
        return worst;
    }

    void validate() const {
        CODEQ_REQUIRE(centroids.size() == m * ksub * dsub,
                      "SubspaceCodebook: centroid tensor size mismatch");
        if (has_rotation()) {
            CODEQ_REQUIRE(rotation.size() == dim() * dim(),
                          "SubspaceCodebook: rotation must be d x d");
            double err = rotation_orthogonality_error();
            CODEQ_REQUIRE(err <= 1e-4,
                          "SubspaceCodebook: rotation not orthogonal, |R^T R - I| = ", err);
        }
    }
};

struct PQModel {
    SubspaceCodebook codebook;
    std::size_t bits = 0;                     // b in PQ m x b
    std::vector<double> subspace_mse;         // per-subspace k-means MSE
    std::vector<double> opq_objective;        // filled by opq_train only

    std::size_t m() const { return codebook.m; }
    std::size_t ksub() const { return codebook.ksub; }
    std::size_t dim() const { return codebook.dim(); }
};

// x' = x * R for one row vector, 64-bit accumulation.
inline void rotate_forward(const std::vector<float>& rotation, std::size_t d,
                           const float* x, float* out) {
    for (std::size_t j = 0; j < d; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            acc += static_cast<double>(x[i]) * static_cast<double>(rotation[i * d + j]);
        }
        out[j] = static_cast<float>(acc);
    }
}

// xhat = xhat' * R^T
inline void rotate_backward(const std::vector<float>& rotation, std::size_t d,
                            const float* x, float* out) {
    for (std::size_t i = 0; i < d; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            acc += static_cast<double>(x[j]) * static_cast<double>(rotation[i * d + j]);
        }
        out[i] = static_cast<float>(acc);
    }
}

inline DenseMatrix apply_rotation_forward(const PQModel& model, const DenseMatrix& x) {
    if (!model.codebook.has_rotation()) {
        return x;
    }
    DenseMatrix out(x.rows, x.dim);
    for (std::size_t r = 0; r < x.rows; ++r) {
        rotate_forward(model.codebook.rotation, x.dim, x.row(r), out.row(r));
    }
    return out;
}

// Independent k-means per subspace slice.
inline PQModel pq_train(const DenseMatrix& x, std::size_t m, std::size_t bits,
                        std::size_t iters = 25, std::uint64_t seed = 0) {
    CODEQ_REQUIRE(m >= 1 && x.dim % m == 0, "pq_train: d=", x.dim,
                  " not divisible by m=", m);
    CODEQ_REQUIRE(valid_code_bits(bits), "pq_train: bits must be in {1,4,8,16}");
    std::size_t ksub = std::size_t{1} << bits;
    CODEQ_REQUIRE(ksub <= x.rows, "pq_train: 2^b=", ksub, " exceeds rows=", x.rows);

    PQModel model;
    model.bits = bits;
    model.codebook.m = m;
    model.codebook.ksub = ksub;
    model.codebook.dsub = x.dim / m;
    model.codebook.centroids.resize(m * ksub * model.codebook.dsub);
    model.subspace_mse.resize(m);

    for (std::size_t sub = 0; sub < m; ++sub) {
        DenseMatrix slice = x.slice_cols(sub * model.codebook.dsub,
                                         (sub + 1) * model.codebook.dsub);
        KMeansModel km = kmeans_train(slice, ksub, iters, seed + sub);
        model.subspace_mse[sub] = km.final_mse;
        std::copy(km.centroids.data.begin(), km.centroids.data.end(),
                  model.codebook.centroid(sub, 0));
    }
    return model;
}

namespace detail {

// Nearest sub-centroid in one subspace, ties to lowest index.
inline std::uint32_t encode_subvector(const SubspaceCodebook& cb, std::size_t sub,
                                      const float* xsub) {
    double best = std::numeric_limits<double>::infinity();
    std::uint32_t best_k = 0;
    for (std::size_t k = 0; k < cb.ksub; ++k) {
        double d = l2_sqr(xsub, cb.centroid(sub, k), cb.dsub);
        if (d < best) {
            best = d;
            best_k = static_cast<std::uint32_t>(k);
        }
    }
    return best_k;
}

} // namespace detail

inline CodeArray pq_encode(const PQModel& model, const DenseMatrix& x) {
    CODEQ_REQUIRE(x.dim == model.dim(), "pq_encode: dim ", x.dim,
                  " != model dim ", model.dim());
    const SubspaceCodebook& cb = model.codebook;
    CodeArray codes(x.rows, cb.m, model.bits);
    std::vector<float> rotated(x.dim);
    for (std::size_t r = 0; r < x.rows; ++r) {
        const float* xr = x.row(r);
        if (cb.has_rotation()) {
            rotate_forward(cb.rotation, x.dim, xr, rotated.data());
            xr = rotated.data();
        }
        for (std::size_t sub = 0; sub < cb.m; ++sub) {
            codes.set(r, sub, detail::encode_subvector(cb, sub, xr + sub * cb.dsub));
        }
    }
    return codes;
}

// Concatenation of per-subspace centroids; rotation models rotate back.
inline DenseMatrix natural_decode(const PQModel& model, const CodeArray& codes) {
    const SubspaceCodebook& cb = model.codebook;
    CODEQ_REQUIRE(codes.m == cb.m && codes.bits == model.bits,
                  "natural_decode: codes incompatible with model");
    DenseMatrix out(codes.n, model.dim());
    std::vector<float> cat(model.dim());
    for (std::size_t r = 0; r < codes.n; ++r) {
        for (std::size_t sub = 0; sub < cb.m; ++sub) {
            std::uint32_t k = codes.get(r, sub);
            std::copy_n(cb.centroid(sub, k), cb.dsub, cat.data() + sub * cb.dsub);
        }
        if (cb.has_rotation()) {
            rotate_backward(cb.rotation, model.dim(), cat.data(), out.row(r));
        } else {
            std::copy(cat.begin(), cat.end(), out.row(r));
        }
    }
    return out;
}

} // namespace codeq
