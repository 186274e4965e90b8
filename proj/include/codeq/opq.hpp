#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "codeq/pq.hpp"

namespace codeq {

namespace detail {

// Orthogonal Procrustes: the orthogonal R maximizing tr(R^T M).
inline Eigen::MatrixXd procrustes_rotation(const Eigen::MatrixXd& m) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    return svd.matrixU() * svd.matrixV().transpose();
}

} // namespace detail

// Non-parametric alternating optimization: starting from the plain PQ
// solution at R = I, alternate Lloyd refinement of the subspace codebooks on
// the rotated data with a Procrustes update of the rotation. Warm-starting
// the codebooks keeps the objective non-increasing across outer iterations.
inline PQModel opq_train(const DenseMatrix& x, std::size_t m, std::size_t bits,
                         std::size_t outer_iters = 20, std::uint64_t seed = 0,
                         std::size_t kmeans_iters = 25) {
    PQModel model = pq_train(x, m, bits, kmeans_iters, seed);
    std::size_t d = x.dim;
    model.codebook.rotation.assign(d * d, 0.0f);
    for (std::size_t i = 0; i < d; ++i) {
        model.codebook.rotation[i * d + i] = 1.0f;
    }

    Eigen::MatrixXd rot = Eigen::MatrixXd::Identity(d, d);
    Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
            xmap(x.data.data(), x.rows, d);
    Eigen::MatrixXd xd = xmap.cast<double>();

    for (std::size_t outer = 0; outer < outer_iters; ++outer) {
        // Fix R: refine the per-subspace codebooks on X * R.
        Eigen::MatrixXd xrot = xd * rot;
        DenseMatrix xr(x.rows, d);
        for (std::size_t r = 0; r < x.rows; ++r) {
            for (std::size_t j = 0; j < d; ++j) {
                xr.at(r, j) = static_cast<float>(xrot(r, j));
            }
        }
        if (outer > 0) {
            for (std::size_t sub = 0; sub < m; ++sub) {
                DenseMatrix slice = xr.slice_cols(sub * model.codebook.dsub,
                                                  (sub + 1) * model.codebook.dsub);
                DenseMatrix init(model.codebook.ksub, model.codebook.dsub);
                std::copy_n(model.codebook.centroid(sub, 0), init.data.size(),
                            init.data.data());
                KMeansModel km = kmeans_refine(std::move(init), slice, kmeans_iters);
                model.subspace_mse[sub] = km.final_mse;
                std::copy(km.centroids.data.begin(), km.centroids.data.end(),
                          model.codebook.centroid(sub, 0));
            }
        }

        // Fix the codes: reconstruct in rotated space, then Procrustes.
        PQModel plain;  // rotation-free view of the current codebooks
        plain.bits = model.bits;
        plain.codebook = model.codebook;
        plain.codebook.rotation.clear();
        CodeArray codes = pq_encode(plain, xr);
        DenseMatrix y = natural_decode(plain, codes);

        double obj = 0.0;
        for (std::size_t r = 0; r < x.rows; ++r) {
            obj += l2_sqr(xr.row(r), y.row(r), d);
        }
        model.opq_objective.push_back(obj / static_cast<double>(x.rows));

        Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
                ymap(y.data.data(), y.rows, d);
        rot = detail::procrustes_rotation(xd.transpose() * ymap.cast<double>());
    }

    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            model.codebook.rotation[i * d + j] = static_cast<float>(rot(i, j));
        }
    }
    model.codebook.validate();
    return model;
}

} // namespace codeq
