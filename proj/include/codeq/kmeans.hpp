#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <vector>

#include "codeq/matrix.hpp"

namespace codeq {

struct KMeansModel {
    DenseMatrix centroids;       // K x d
    std::size_t iterations_run = 0;
    double final_mse = 0.0;
    std::vector<double> mse_history;  // one entry per assignment pass
};

// Index of the nearest row of `table` to x, squared-L2, ties to lowest index.
inline std::size_t nearest_row(const float* x, const DenseMatrix& table,
                               double* out_dist = nullptr) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_i = 0;
    for (std::size_t i = 0; i < table.rows; ++i) {
        double d = l2_sqr(x, table.row(i), table.dim);
        if (d < best) {
            best = d;
            best_i = i;
        }
    }
    if (out_dist) {
        *out_dist = best;
    }
    return best_i;
}

namespace detail {

// k-means++ seeding: first center uniform, then D^2 sampling.
inline DenseMatrix kmeanspp_init(const DenseMatrix& x, std::size_t k, Rng& rng) {
    DenseMatrix centroids(k, x.dim);
    std::uniform_int_distribution<std::size_t> first(0, x.rows - 1);
    std::size_t c0 = first(rng);
    std::copy_n(x.row(c0), x.dim, centroids.row(0));

    std::vector<double> min_d2(x.rows);
    for (std::size_t r = 0; r < x.rows; ++r) {
        min_d2[r] = l2_sqr(x.row(r), centroids.row(0), x.dim);
    }
    for (std::size_t c = 1; c < k; ++c) {
        double total = 0.0;
        for (double v : min_d2) {
            total += v;
        }
        std::size_t pick = 0;
        if (total > 0.0) {
            std::uniform_real_distribution<double> u(0.0, total);
            double target = u(rng);
            double acc = 0.0;
            pick = x.rows - 1;
            for (std::size_t r = 0; r < x.rows; ++r) {
                acc += min_d2[r];
                if (acc >= target) {
                    pick = r;
                    break;
                }
            }
        } else {
            // All remaining mass at zero: duplicate data; any point works.
            pick = first(rng);
        }
        std::copy_n(x.row(pick), x.dim, centroids.row(c));
        for (std::size_t r = 0; r < x.rows; ++r) {
            double d = l2_sqr(x.row(r), centroids.row(c), x.dim);
            if (d < min_d2[r]) {
                min_d2[r] = d;
            }
        }
    }
    return centroids;
}

// Move every empty cluster onto the worst-reconstructed point of the biggest
// cluster. Counts are updated so chained empties pick different donors.
inline void reseed_empty_clusters(const DenseMatrix& x,
                                  const std::vector<std::uint32_t>& assign,
                                  DenseMatrix& centroids,
                                  std::vector<std::size_t>& counts) {
    std::vector<char> donated(x.rows, 0);
    for (std::size_t c = 0; c < centroids.rows; ++c) {
        if (counts[c] != 0) {
            continue;
        }
        std::size_t donor = 0;
        for (std::size_t j = 1; j < counts.size(); ++j) {
            if (counts[j] > counts[donor]) {
                donor = j;
            }
        }
        if (counts[donor] <= 1) {
            break;  // nothing left to split
        }
        double worst = -1.0;
        std::size_t worst_r = 0;
        for (std::size_t r = 0; r < x.rows; ++r) {
            if (assign[r] != donor || donated[r]) {
                continue;
            }
            double d = l2_sqr(x.row(r), centroids.row(donor), x.dim);
            if (d > worst) {
                worst = d;
                worst_r = r;
            }
        }
        std::copy_n(x.row(worst_r), x.dim, centroids.row(c));
        donated[worst_r] = 1;
        counts[donor]--;
        counts[c]++;
    }
}

} // namespace detail

// Lloyd iterations from given starting centroids. The returned MSE history
// is the mean squared distance of each point to its assigned centroid,
// measured after every assignment pass; it is non-increasing.
inline KMeansModel kmeans_refine(DenseMatrix centroids, const DenseMatrix& x,
                                 std::size_t iters) {
    std::size_t k = centroids.rows;
    CODEQ_REQUIRE(k >= 1 && x.rows >= k, "kmeans_refine: need 1 <= K <= rows");
    CODEQ_REQUIRE(centroids.dim == x.dim, "kmeans_refine: dim mismatch");

    KMeansModel model;
    model.centroids = std::move(centroids);

    std::vector<std::uint32_t> assign(x.rows, 0);
    std::vector<std::size_t> counts(k, 0);

    auto assign_pass = [&]() -> std::pair<double, bool> {
        double acc = 0.0;
        bool changed = false;
        std::fill(counts.begin(), counts.end(), std::size_t{0});
        for (std::size_t r = 0; r < x.rows; ++r) {
            double d = 0.0;
            std::size_t c = nearest_row(x.row(r), model.centroids, &d);
            if (assign[r] != c) {
                changed = true;
                assign[r] = static_cast<std::uint32_t>(c);
            }
            counts[c]++;
            acc += d;
        }
        return {acc / static_cast<double>(x.rows), changed};
    };

    auto update_means = [&]() {
        std::vector<double> sums(k * x.dim, 0.0);
        for (std::size_t r = 0; r < x.rows; ++r) {
            double* dst = sums.data() + assign[r] * x.dim;
            const float* src = x.row(r);
            for (std::size_t j = 0; j < x.dim; ++j) {
                dst[j] += src[j];
            }
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] == 0) {
                continue;  // handled by reseeding
            }
            double inv = 1.0 / static_cast<double>(counts[c]);
            for (std::size_t j = 0; j < x.dim; ++j) {
                model.centroids.at(c, j) = static_cast<float>(sums[c * x.dim + j] * inv);
            }
        }
        detail::reseed_empty_clusters(x, assign, model.centroids, counts);
    };

    auto [mse, changed] = assign_pass();
    model.mse_history.push_back(mse);
    for (std::size_t it = 0; it < iters; ++it) {
        update_means();
        std::tie(mse, changed) = assign_pass();
        model.mse_history.push_back(mse);
        model.iterations_run = it + 1;
        if (!changed) {
            break;
        }
    }
    // A final assignment pass may have emptied a reseeded cluster; restore
    // the no-empty-cluster invariant (bounded, converges immediately in
    // practice since reseeded centroids sit on data points).
    for (int round = 0; round < 8; ++round) {
        if (std::find(counts.begin(), counts.end(), std::size_t{0}) == counts.end()) {
            break;
        }
        detail::reseed_empty_clusters(x, assign, model.centroids, counts);
        std::tie(mse, changed) = assign_pass();
        model.mse_history.push_back(mse);
    }
    model.final_mse = model.mse_history.back();
    return model;
}

// k-means++ seeding followed by Lloyd iterations.
inline KMeansModel kmeans_train(const DenseMatrix& x, std::size_t k,
                                std::size_t iters = 25,
                                std::uint64_t seed = 0) {
    CODEQ_REQUIRE(k >= 1, "kmeans_train: K must be >= 1");
    CODEQ_REQUIRE(x.rows >= k, "kmeans_train: K=", k, " exceeds rows=", x.rows);
    x.check_finite();
    Rng rng(seed);
    return kmeans_refine(detail::kmeanspp_init(x, k, rng), x, iters);
}

} // namespace codeq
