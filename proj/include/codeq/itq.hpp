#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "codeq/codes.hpp"
#include "codeq/matrix.hpp"
#include "codeq/opq.hpp"

namespace codeq {

// m projection directions u_i, stacked as rows.
struct BinaryProjection {
    std::size_t m = 0;
    std::size_t dim = 0;
    DenseMatrix basis;  // m x d

    // max |U U^T - I_m|
    double orthonormality_error() const {
        double worst = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = i; j < m; ++j) {
                double acc = 0.0;
                for (std::size_t c = 0; c < dim; ++c) {
                    acc += static_cast<double>(basis.at(i, c)) *
                           static_cast<double>(basis.at(j, c));
                }
                double err = std::abs(acc - (i == j ? 1.0 : 0.0));
                if (err > worst) {
                    worst = err;
                }
            }
        }
        return worst;
    }
};

struct ITQModel {
    std::vector<float> mean;       // d, training mean
    DenseMatrix pca;               // m x d, top-m principal directions as rows
    DenseMatrix rotation;          // m x m orthogonal
    BinaryProjection basis;        // rows u_i = (R^T P), so k_i = sign(u_i . (x - mean))
    std::vector<double> objective; // ||B - V R||^2 / n per iteration

    std::size_t dim() const { return mean.size(); }
    std::size_t bits() const { return basis.m; }
};

// PCA projection followed by alternating minimization of the binarization
// loss ||B - V R||^2 over sign matrices B and m x m rotations R. The
// rotation starts at the identity, so zero iterations leaves the plain
// PCA basis.
inline ITQModel itq_train(const DenseMatrix& x, std::size_t m,
                          std::size_t iters = 50, std::uint64_t seed = 0) {
    CODEQ_REQUIRE(m >= 1 && m <= x.dim, "itq_train: need 1 <= m <= d, got m=", m,
                  " d=", x.dim);
    CODEQ_REQUIRE(x.rows >= 2, "itq_train: need at least 2 rows");
    x.check_finite();
    (void)seed;  // deterministic; kept for interface uniformity

    std::size_t n = x.rows;
    std::size_t d = x.dim;

    ITQModel model;
    model.mean.assign(d, 0.0f);
    std::vector<double> mean_acc(d, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
        const float* row = x.row(r);
        for (std::size_t j = 0; j < d; ++j) {
            mean_acc[j] += row[j];
        }
    }
    for (std::size_t j = 0; j < d; ++j) {
        model.mean[j] = static_cast<float>(mean_acc[j] / static_cast<double>(n));
    }

    // Covariance of the centered data, then the top-m eigenvectors.
    Eigen::MatrixXd xc(n, d);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t j = 0; j < d; ++j) {
            xc(r, j) = static_cast<double>(x.at(r, j)) - static_cast<double>(model.mean[j]);
        }
    }
    Eigen::MatrixXd cov = (xc.transpose() * xc) / static_cast<double>(n);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    CODEQ_REQUIRE(eig.info() == Eigen::Success, "itq_train: eigendecomposition failed");

    model.pca = DenseMatrix(m, d);
    for (std::size_t i = 0; i < m; ++i) {
        // eigenvalues ascending; take the largest m
        Eigen::VectorXd v = eig.eigenvectors().col(d - 1 - i);
        for (std::size_t j = 0; j < d; ++j) {
            model.pca.at(i, j) = static_cast<float>(v(j));
        }
    }

    Eigen::MatrixXd p(m, d);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            p(i, j) = static_cast<double>(model.pca.at(i, j));
        }
    }
    Eigen::MatrixXd v = xc * p.transpose();  // n x m projected data
    Eigen::MatrixXd rot = Eigen::MatrixXd::Identity(m, m);

    for (std::size_t it = 0; it < iters; ++it) {
        Eigen::MatrixXd vr = v * rot;
        Eigen::MatrixXd b(n, m);
        for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t i = 0; i < m; ++i) {
                b(r, i) = vr(r, i) >= 0.0 ? 1.0 : -1.0;  // sign(0) = +1
            }
        }
        rot = detail::procrustes_rotation(v.transpose() * b);
        model.objective.push_back((b - v * rot).squaredNorm() / static_cast<double>(n));
    }

    model.rotation = DenseMatrix(m, m);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            model.rotation.at(i, j) = static_cast<float>(rot(i, j));
        }
    }

    // basis rows: u_i = sum_j R[j][i] p_j, i.e. U = R^T P
    Eigen::MatrixXd u = rot.transpose() * p;
    model.basis.m = m;
    model.basis.dim = d;
    model.basis.basis = DenseMatrix(m, d);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            model.basis.basis.at(i, j) = static_cast<float>(u(i, j));
        }
    }
    return model;
}

// Sign codes: bit 1 stands for +1, bit 0 for -1; sign(0) = +1.
inline CodeArray binary_encode(const ITQModel& model, const DenseMatrix& x) {
    CODEQ_REQUIRE(x.dim == model.dim(), "binary_encode: dim mismatch");
    std::size_t m = model.bits();
    CodeArray codes(x.rows, m, 1);
    for (std::size_t r = 0; r < x.rows; ++r) {
        const float* row = x.row(r);
        for (std::size_t i = 0; i < m; ++i) {
            const float* u = model.basis.basis.row(i);
            double proj = 0.0;
            for (std::size_t j = 0; j < x.dim; ++j) {
                proj += static_cast<double>(u[j]) *
                        (static_cast<double>(row[j]) - static_cast<double>(model.mean[j]));
            }
            codes.set(r, i, proj >= 0.0 ? 1u : 0u);
        }
    }
    return codes;
}

// q_k = mean + (1/sqrt(d)) * sum_i k_i u_i with k_i in {-1,+1}.
inline DenseMatrix binary_naive_decode(const ITQModel& model, const CodeArray& codes) {
    CODEQ_REQUIRE(codes.bits == 1, "binary_naive_decode: expected 1-bit codes");
    CODEQ_REQUIRE(codes.m == model.bits(), "binary_naive_decode: code length mismatch");
    std::size_t d = model.dim();
    double scale = 1.0 / std::sqrt(static_cast<double>(d));
    DenseMatrix out(codes.n, d);
    std::vector<double> acc(d);
    for (std::size_t r = 0; r < codes.n; ++r) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::size_t i = 0; i < codes.m; ++i) {
            double s = codes.get(r, i) ? scale : -scale;
            const float* u = model.basis.basis.row(i);
            for (std::size_t j = 0; j < d; ++j) {
                acc[j] += s * static_cast<double>(u[j]);
            }
        }
        for (std::size_t j = 0; j < d; ++j) {
            out.at(r, j) = static_cast<float>(acc[j] + static_cast<double>(model.mean[j]));
        }
    }
    return out;
}

} // namespace codeq
