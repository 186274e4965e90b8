#include <catch2/catch_amalgamated.hpp>

#include "codeq/pq.hpp"
#include "codeq/synthetic.hpp"

using namespace codeq;

TEST_CASE("m=1 degenerates to plain k-means") {
    GaussianMixture mix({8, 4, 2.0, 0.9, 0.3}, 9);
    DenseMatrix x = mix.sample(400, 1);
    PQModel pq = pq_train(x, 1, 4, 12, 77);
    KMeansModel km = kmeans_train(x, 16, 12, 77);
    REQUIRE(pq.codebook.centroids == km.centroids.data);
    REQUIRE(pq.subspace_mse[0] == km.final_mse);
}

TEST_CASE("m=d with 1 bit is per-coordinate 2-means") {
    GaussianMixture mix({4, 3, 2.0, 0.9, 0.3}, 10);
    DenseMatrix x = mix.sample(200, 2);
    PQModel pq = pq_train(x, 4, 1, 12, 5);
    REQUIRE(pq.codebook.dsub == 1);
    for (std::size_t j = 0; j < 4; ++j) {
        DenseMatrix col = x.slice_cols(j, j + 1);
        KMeansModel km = kmeans_train(col, 2, 12, 5 + j);
        REQUIRE(pq.codebook.centroid(j, 0)[0] == km.centroids.at(0, 0));
        REQUIRE(pq.codebook.centroid(j, 1)[0] == km.centroids.at(1, 0));
    }
}

TEST_CASE("total reconstruction MSE equals the sum of per-subspace MSEs") {
    GaussianMixture mix({16, 6, 2.0, 0.9, 0.3}, 11);
    DenseMatrix x = mix.sample(1500, 3);
    PQModel pq = pq_train(x, 2, 8, 20, 1);

    CodeArray codes = pq_encode(pq, x);
    double total = mean_sq_error(x, natural_decode(pq, codes));
    double per_subspace = pq.subspace_mse[0] + pq.subspace_mse[1];
    REQUIRE(total == Catch::Approx(per_subspace).epsilon(1e-9));
}

TEST_CASE("a concatenation of centroids encodes to itself") {
    GaussianMixture mix({8, 4, 2.0, 0.9, 0.3}, 12);
    DenseMatrix x = mix.sample(600, 4);
    PQModel pq = pq_train(x, 2, 8, 15, 2);

    DenseMatrix probe(1, 8);
    std::copy_n(pq.codebook.centroid(0, 3), 4, probe.row(0));
    std::copy_n(pq.codebook.centroid(1, 7), 4, probe.row(0) + 4);
    CodeArray code = pq_encode(pq, probe);
    REQUIRE(code.get(0, 0) == 3);
    REQUIRE(code.get(0, 1) == 7);
    REQUIRE(mean_sq_error(probe, natural_decode(pq, code)) == 0.0);
}

TEST_CASE("encoding matches the exhaustive per-subspace search") {
    GaussianMixture mix({12, 5, 2.0, 0.9, 0.3}, 13);
    DenseMatrix train = mix.sample(800, 5);
    DenseMatrix probe = mix.sample(200, 6);
    PQModel pq = pq_train(train, 3, 4, 15, 3);
    CodeArray codes = pq_encode(pq, probe);

    for (std::size_t r = 0; r < probe.rows; ++r) {
        for (std::size_t sub = 0; sub < 3; ++sub) {
            const float* xsub = probe.row(r) + sub * pq.codebook.dsub;
            double best = std::numeric_limits<double>::infinity();
            std::uint32_t best_k = 0;
            for (std::uint32_t k = 0; k < pq.ksub(); ++k) {
                double d = l2_sqr(xsub, pq.codebook.centroid(sub, k),
                                  pq.codebook.dsub);
                if (d < best) {
                    best = d;
                    best_k = k;
                }
            }
            REQUIRE(codes.get(r, sub) == best_k);
        }
    }
}

TEST_CASE("equidistant sub-centroids break toward the smaller index") {
    // hand-built model: subspace centroids at -1 and +1, probe at 0
    PQModel pq;
    pq.bits = 4;
    pq.codebook.m = 1;
    pq.codebook.ksub = 16;
    pq.codebook.dsub = 1;
    pq.codebook.centroids.assign(16, 100.0f);
    pq.codebook.centroids[2] = -1.0f;  // centroid index 2
    pq.codebook.centroids[5] = 1.0f;   // centroid index 5, same distance to 0
    DenseMatrix probe(1, 1);
    probe.at(0, 0) = 0.0f;
    CodeArray code = pq_encode(pq, probe);
    REQUIRE(code.get(0, 0) == 2);
}

TEST_CASE("natural decode with m=1 is a centroid lookup") {
    GaussianMixture mix({4, 4, 2.0, 0.9, 0.3}, 14);
    DenseMatrix x = mix.sample(300, 7);
    PQModel pq = pq_train(x, 1, 4, 10, 4);
    CodeArray codes = pq_encode(pq, x);
    DenseMatrix rec = natural_decode(pq, codes);
    for (std::size_t r = 0; r < x.rows; ++r) {
        const float* c = pq.codebook.centroid(0, codes.get(r, 0));
        for (std::size_t j = 0; j < x.dim; ++j) {
            REQUIRE(rec.at(r, j) == c[j]);
        }
    }
}

TEST_CASE("indivisible dimension and dimension mismatches are rejected") {
    GaussianMixture mix({6, 3, 2.0, 0.9, 0.3}, 15);
    DenseMatrix x = mix.sample(64, 8);
    REQUIRE_THROWS_AS(pq_train(x, 4, 4, 5, 0), Error);  // 6 % 4 != 0
    PQModel pq = pq_train(x, 2, 4, 5, 0);
    DenseMatrix wrong = mix.sample(10, 9).slice_cols(0, 4);
    REQUIRE_THROWS_AS(pq_encode(pq, wrong), Error);
}

TEST_CASE("encoding is deterministic") {
    GaussianMixture mix({8, 4, 2.0, 0.9, 0.3}, 16);
    DenseMatrix x = mix.sample(500, 8);
    PQModel a = pq_train(x, 2, 4, 10, 42);
    PQModel b = pq_train(x, 2, 4, 10, 42);
    REQUIRE(a.codebook.centroids == b.codebook.centroids);
    REQUIRE(pq_encode(a, x).payload == pq_encode(b, x).payload);
}
