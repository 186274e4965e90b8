#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "codeq/codes.hpp"
#include "codeq/matrix.hpp"
#include "codeq/pq.hpp"

namespace codeq {

// Additive decoder tables: m LUTs of K' rows, each row a full d-dimensional
// vector. Decoding SUMS the m selected rows; it never concatenates.
struct DecoderLUT {
    std::size_t m = 0;
    std::size_t ksub = 0;
    std::size_t dim = 0;
    std::vector<float> tables;  // m * ksub * dim

    const float* row(std::size_t sub, std::size_t k) const {
        return tables.data() + (sub * ksub + k) * dim;
    }
    float* row(std::size_t sub, std::size_t k) {
        return tables.data() + (sub * ksub + k) * dim;
    }
};

inline DenseMatrix aq_decode(const DecoderLUT& lut, const CodeArray& codes) {
    CODEQ_REQUIRE(codes.m == lut.m, "aq_decode: m mismatch");
    CODEQ_REQUIRE((std::size_t{1} << codes.bits) == lut.ksub,
                  "aq_decode: 2^bits != LUT rows per subquantizer");
    DenseMatrix out(codes.n, lut.dim);
    std::vector<double> acc(lut.dim);
    for (std::size_t r = 0; r < codes.n; ++r) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::size_t sub = 0; sub < lut.m; ++sub) {
            const float* row = lut.row(sub, codes.get(r, sub));
            for (std::size_t j = 0; j < lut.dim; ++j) {
                acc[j] += row[j];
            }
        }
        for (std::size_t j = 0; j < lut.dim; ++j) {
            out.at(r, j) = static_cast<float>(acc[j]);
        }
    }
    return out;
}

// The natural decoder expressed as additive LUTs: subspace centroids embedded
// into their coordinate block (and rotated back for OPQ). For rotation-free
// models aq_decode on this LUT reproduces natural_decode exactly.
inline DecoderLUT lut_from_pq(const PQModel& model) {
    const SubspaceCodebook& cb = model.codebook;
    DecoderLUT lut;
    lut.m = cb.m;
    lut.ksub = cb.ksub;
    lut.dim = cb.dim();
    lut.tables.assign(lut.m * lut.ksub * lut.dim, 0.0f);
    std::vector<float> embedded(lut.dim);
    for (std::size_t sub = 0; sub < cb.m; ++sub) {
        for (std::size_t k = 0; k < cb.ksub; ++k) {
            std::fill(embedded.begin(), embedded.end(), 0.0f);
            std::copy_n(cb.centroid(sub, k), cb.dsub, embedded.data() + sub * cb.dsub);
            if (cb.has_rotation()) {
                rotate_backward(cb.rotation, lut.dim, embedded.data(), lut.row(sub, k));
            } else {
                std::copy(embedded.begin(), embedded.end(), lut.row(sub, k));
            }
        }
    }
    return lut;
}

// Scale-aware default ridge weight: 1e-3 * trace(I^T I) / (m K'), and
// trace(I^T I) = n * m since every row selects one entry per subquantizer.
inline double aq_default_lambda(std::size_t n, std::size_t ksub) {
    return 1e-3 * static_cast<double>(n) / static_cast<double>(ksub);
}

// Least-squares fit of the decoder tables: minimize |X - C I|^2 + lambda |C|^2
// over C via the normal equations (I^T I + lambda Id) C = I^T X, shared
// across output dimensions. At lambda = 0 the Gram matrix is structurally
// rank-deficient (block columns sum to the same vector), so the minimum-norm
// solution is taken through an eigendecomposition pseudo-inverse.
inline DecoderLUT aq_fit(const CodeArray& codes, const DenseMatrix& x,
                         double lambda) {
    CODEQ_REQUIRE(codes.n == x.rows, "aq_fit: codes and vectors not row-aligned");
    CODEQ_REQUIRE(codes.n > 0, "aq_fit: empty training set");
    CODEQ_REQUIRE(lambda >= 0.0, "aq_fit: lambda must be >= 0");

    const std::size_t m = codes.m;
    const std::size_t ksub = std::size_t{1} << codes.bits;
    const std::size_t cols = m * ksub;
    const std::size_t d = x.dim;

    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(cols, cols);
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(cols, d);
    std::vector<std::uint32_t> ks(m);
    for (std::size_t r = 0; r < codes.n; ++r) {
        for (std::size_t i = 0; i < m; ++i) {
            ks[i] = static_cast<std::uint32_t>(i * ksub) + codes.get(r, i);
        }
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < m; ++j) {
                gram(ks[i], ks[j]) += 1.0;
            }
        }
        const float* row = x.row(r);
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < d; ++j) {
                rhs(ks[i], j) += static_cast<double>(row[j]);
            }
        }
    }

    Eigen::MatrixXd lhs = gram;
    lhs.diagonal().array() += lambda;

    Eigen::MatrixXd solution;
    if (lambda > 0.0) {
        Eigen::LLT<Eigen::MatrixXd> llt(lhs);
        if (llt.info() == Eigen::Success) {
            solution = llt.solve(rhs);
        }
    }
    if (solution.size() == 0) {
        // lambda = 0, or a Cholesky failure: minimum-norm solve.
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(lhs);
        CODEQ_REQUIRE(eig.info() == Eigen::Success, "aq_fit: eigendecomposition failed");
        const Eigen::VectorXd& evals = eig.eigenvalues();
        double cutoff = evals(cols - 1) * 1e-10;
        CODEQ_REQUIRE(cutoff > 0.0,
                      "aq_fit: singular system at lambda=", lambda,
                      "; retry with lambda > 0");
        Eigen::VectorXd inv = (evals.array() > cutoff)
                                      .select(evals.array().inverse(), 0.0);
        solution = eig.eigenvectors() * inv.asDiagonal() *
                   (eig.eigenvectors().transpose() * rhs);
    }

    // The normal equations must hold to 1e-6 relative residual.
    double resid = (lhs * solution - rhs).norm();
    double scale = std::max(rhs.norm(), 1e-300);
    CODEQ_REQUIRE(resid / scale <= 1e-6,
                  "aq_fit: singular system (normal-equation residual ",
                  resid / scale, "); retry with larger lambda");

    DecoderLUT lut;
    lut.m = m;
    lut.ksub = ksub;
    lut.dim = d;
    lut.tables.resize(cols * d);
    for (std::size_t c = 0; c < cols; ++c) {
        for (std::size_t j = 0; j < d; ++j) {
            lut.tables[c * d + j] = static_cast<float>(solution(c, j));
        }
    }
    return lut;
}

// Per-code empirical means over the whole (enumerable) code space.
struct ToplineDecoder {
    std::size_t m = 0;
    std::size_t bits = 0;
    std::size_t dim = 0;
    DenseMatrix table;                 // K x d, K = 2^(m*bits)
    std::vector<std::uint64_t> counts; // training occupancy per code

    std::size_t code_space() const { return table.rows; }
};

inline std::size_t combined_code(const CodeArray& codes, std::size_t r) {
    std::size_t idx = 0;
    for (std::size_t i = 0; i < codes.m; ++i) {
        idx |= static_cast<std::size_t>(codes.get(r, i)) << (i * codes.bits);
    }
    return idx;
}

// Row k of the table is the mean of training vectors with combined code k:
// the best possible decoder for the fixed encoder, measured on the training
// set. Unoccupied codes fall back to the natural reconstruction when an
// encoder model is supplied, otherwise to the global training mean.
inline ToplineDecoder topline_fit(const CodeArray& codes, const DenseMatrix& x,
                                  const PQModel* fallback = nullptr) {
    CODEQ_REQUIRE(codes.n == x.rows && codes.n > 0, "topline_fit: row mismatch");
    std::size_t total_bits = codes.m * codes.bits;
    CODEQ_REQUIRE(total_bits <= 24, "topline_fit: 2^", total_bits,
                  " codes exceed the 2^24 guard");
    std::size_t space = std::size_t{1} << total_bits;

    ToplineDecoder dec;
    dec.m = codes.m;
    dec.bits = codes.bits;
    dec.dim = x.dim;
    dec.table = DenseMatrix(space, x.dim);
    dec.counts.assign(space, 0);

    std::vector<double> sums(space * x.dim, 0.0);
    std::vector<double> global(x.dim, 0.0);
    for (std::size_t r = 0; r < codes.n; ++r) {
        std::size_t k = combined_code(codes, r);
        dec.counts[k]++;
        const float* row = x.row(r);
        double* dst = sums.data() + k * x.dim;
        for (std::size_t j = 0; j < x.dim; ++j) {
            dst[j] += row[j];
            global[j] += row[j];
        }
    }

    CodeArray one(1, codes.m, codes.bits);
    for (std::size_t k = 0; k < space; ++k) {
        if (dec.counts[k] > 0) {
            double inv = 1.0 / static_cast<double>(dec.counts[k]);
            for (std::size_t j = 0; j < x.dim; ++j) {
                dec.table.at(k, j) = static_cast<float>(sums[k * x.dim + j] * inv);
            }
        } else if (fallback) {
            for (std::size_t i = 0; i < codes.m; ++i) {
                one.set(0, i, static_cast<std::uint32_t>((k >> (i * codes.bits)) &
                                                         ((1u << codes.bits) - 1)));
            }
            DenseMatrix rec = natural_decode(*fallback, one);
            std::copy_n(rec.row(0), x.dim, dec.table.row(k));
        } else {
            for (std::size_t j = 0; j < x.dim; ++j) {
                dec.table.at(k, j) =
                        static_cast<float>(global[j] / static_cast<double>(codes.n));
            }
        }
    }
    return dec;
}

inline DenseMatrix topline_decode(const ToplineDecoder& dec, const CodeArray& codes) {
    CODEQ_REQUIRE(codes.m == dec.m && codes.bits == dec.bits,
                  "topline_decode: code shape mismatch");
    DenseMatrix out(codes.n, dec.dim);
    for (std::size_t r = 0; r < codes.n; ++r) {
        std::size_t k = combined_code(codes, r);
        std::copy_n(dec.table.row(k), dec.dim, out.row(r));
    }
    return out;
}

} // namespace codeq
