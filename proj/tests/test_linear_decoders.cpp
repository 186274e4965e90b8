#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>

#include "codeq/itq.hpp"
#include "codeq/linear_decoders.hpp"
#include "codeq/synthetic.hpp"

using namespace codeq;

namespace {

ITQModel identity_basis_model(std::size_t d) {
    ITQModel m;
    m.mean.assign(d, 0.0f);
    m.pca = DenseMatrix(d, d);
    m.rotation = DenseMatrix(d, d);
    m.basis.m = d;
    m.basis.dim = d;
    m.basis.basis = DenseMatrix(d, d);
    for (std::size_t i = 0; i < d; ++i) {
        m.pca.at(i, i) = 1.0f;
        m.rotation.at(i, i) = 1.0f;
        m.basis.basis.at(i, i) = 1.0f;
    }
    return m;
}

} // namespace

TEST_CASE("identity basis: naive binary decode is k / sqrt(d)") {
    std::size_t d = 8;
    ITQModel m = identity_basis_model(d);
    CodeArray codes = pack_codes({1, 0, 1, 1, 0, 0, 1, 0}, 1, d, 1);
    DenseMatrix rec = binary_naive_decode(m, codes);
    double s = 1.0 / std::sqrt(static_cast<double>(d));
    std::vector<double> expect = {s, -s, s, s, -s, -s, s, -s};
    for (std::size_t j = 0; j < d; ++j) {
        REQUIRE(rec.at(0, j) == Catch::Approx(expect[j]).margin(1e-7));
    }
}

TEST_CASE("squared distance between naive reconstructions is (4/d) * Hamming") {
    GaussianMixture mix({16, 4, 2.0, 0.9, 0.3}, 40);
    DenseMatrix x = mix.sample(400, 41);
    ITQModel m = itq_train(x, 12, 30, 0);
    // strip the mean: the law holds before the mean shift
    m.mean.assign(m.mean.size(), 0.0f);

    Rng rng(7);
    std::uniform_int_distribution<std::uint32_t> bit(0, 1);
    std::vector<std::uint32_t> raw(64 * 12);
    for (auto& v : raw) {
        v = bit(rng);
    }
    CodeArray codes = pack_codes(raw, 64, 12, 1);
    DenseMatrix rec = binary_naive_decode(m, codes);
    for (std::size_t a = 0; a < 16; ++a) {
        for (std::size_t b = 0; b < 16; ++b) {
            std::size_t ham = 0;
            for (std::size_t i = 0; i < 12; ++i) {
                ham += codes.get(a, i) != codes.get(b, i);
            }
            double expect = 4.0 * static_cast<double>(ham) / 16.0;
            REQUIRE(l2_sqr(rec.row(a), rec.row(b), 16) ==
                    Catch::Approx(expect).margin(1e-6));
        }
    }
}

TEST_CASE("all-ones code with an orthonormal basis has norm sqrt(m/d)") {
    GaussianMixture mix({16, 4, 2.0, 0.9, 0.3}, 42);
    DenseMatrix x = mix.sample(300, 43);
    ITQModel m = itq_train(x, 10, 20, 0);
    m.mean.assign(m.mean.size(), 0.0f);
    CodeArray ones = pack_codes(std::vector<std::uint32_t>(10, 1), 1, 10, 1);
    DenseMatrix rec = binary_naive_decode(m, ones);
    double norm2 = 0.0;
    for (std::size_t j = 0; j < 16; ++j) {
        norm2 += static_cast<double>(rec.at(0, j)) * rec.at(0, j);
    }
    REQUIRE(std::sqrt(norm2) == Catch::Approx(std::sqrt(10.0 / 16.0)).margin(1e-5));
}

TEST_CASE("binary naive decode rejects non-binary codes") {
    ITQModel m = identity_basis_model(4);
    CodeArray wide(3, 4, 4);
    REQUIRE_THROWS_AS(binary_naive_decode(m, wide), Error);
}

TEST_CASE("topline with singleton cells memorizes the training set") {
    GaussianMixture mix({8, 4, 2.0, 0.9, 0.3}, 44);
    DenseMatrix x = mix.sample(40, 45);
    // craft codes so that every vector owns a distinct code
    std::vector<std::uint32_t> raw(40 * 2);
    for (std::uint32_t r = 0; r < 40; ++r) {
        raw[r * 2] = r % 16;
        raw[r * 2 + 1] = r / 16;
    }
    CodeArray codes = pack_codes(raw, 40, 2, 4);
    ToplineDecoder top = topline_fit(codes, x);
    REQUIRE(mean_sq_error(x, topline_decode(top, codes)) == 0.0);
}

TEST_CASE("m=1 topline equals the converged k-means centroids") {
    GaussianMixture mix({8, 4, 2.0, 0.9, 0.3}, 46);
    DenseMatrix x = mix.sample(600, 47);
    PQModel pq = pq_train(x, 1, 4, 200, 3);  // run k-means to convergence
    CodeArray codes = pq_encode(pq, x);
    ToplineDecoder top = topline_fit(codes, x, &pq);
    for (std::size_t k = 0; k < 16; ++k) {
        REQUIRE(top.counts[k] > 0);
        for (std::size_t j = 0; j < 8; ++j) {
            REQUIRE(top.table.at(k, j) == pq.codebook.centroid(0, k)[j]);
        }
    }
}

TEST_CASE("topline is optimal on the training set") {
    GaussianMixture mix({16, 8, 2.0, 0.9, 0.3}, 48);
    DenseMatrix x = mix.sample(3000, 49);
    PQModel pq = pq_train(x, 4, 4, 15, 5);
    CodeArray codes = pq_encode(pq, x);
    ToplineDecoder top = topline_fit(codes, x, &pq);
    double mse_top = mean_sq_error(x, topline_decode(top, codes));

    double mse_nat = mean_sq_error(x, natural_decode(pq, codes));
    REQUIRE(mse_top <= mse_nat + 1e-9);

    DecoderLUT lut = aq_fit(codes, x, aq_default_lambda(codes.n, 16));
    REQUIRE(mse_top <= mean_sq_error(x, aq_decode(lut, codes)) + 1e-9);

    // and against an arbitrary perturbed decoder
    ToplineDecoder bent = top;
    for (auto& v : bent.table.data) {
        v += 0.01f;
    }
    REQUIRE(mse_top <= mean_sq_error(x, topline_decode(bent, codes)) + 1e-9);
}

TEST_CASE("empty topline cells fall back to the natural reconstruction") {
    GaussianMixture mix({8, 4, 2.0, 0.9, 0.3}, 50);
    DenseMatrix x = mix.sample(30, 51);  // far fewer rows than 2^8 codes
    PQModel pq = pq_train(x, 2, 4, 10, 6);
    CodeArray codes = pq_encode(pq, x);
    ToplineDecoder top = topline_fit(codes, x, &pq);

    std::size_t empty = 0;
    CodeArray probe(1, 2, 4);
    for (std::size_t k = 0; k < top.code_space(); ++k) {
        if (top.counts[k] != 0) {
            continue;
        }
        ++empty;
        probe.set(0, 0, static_cast<std::uint32_t>(k & 15));
        probe.set(0, 1, static_cast<std::uint32_t>(k >> 4));
        DenseMatrix nat = natural_decode(pq, probe);
        for (std::size_t j = 0; j < 8; ++j) {
            REQUIRE(top.table.at(k, j) == nat.at(0, j));
        }
    }
    REQUIRE(empty > 0);
}

TEST_CASE("topline guards the 2^24 code-space limit") {
    DenseMatrix x(2, 4);
    CodeArray codes(2, 2, 16);  // 32-bit code space
    REQUIRE_THROWS_AS(topline_fit(codes, x), Error);
}

TEST_CASE("aq_fit with m=1 and lambda=0 recovers per-cluster means") {
    GaussianMixture mix({8, 4, 2.0, 0.9, 0.3}, 52);
    DenseMatrix x = mix.sample(500, 53);
    PQModel pq = pq_train(x, 1, 4, 100, 7);
    CodeArray codes = pq_encode(pq, x);
    DecoderLUT lut = aq_fit(codes, x, 0.0);
    ToplineDecoder top = topline_fit(codes, x, &pq);
    for (std::size_t k = 0; k < 16; ++k) {
        for (std::size_t j = 0; j < 8; ++j) {
            REQUIRE(lut.row(0, k)[j] ==
                    Catch::Approx(top.table.at(k, j)).margin(1e-5));
        }
    }
}

TEST_CASE("zero targets give a zero decoder for any lambda") {
    DenseMatrix x(50, 4);
    std::vector<std::uint32_t> raw(50 * 2);
    Rng rng(3);
    std::uniform_int_distribution<std::uint32_t> d4(0, 15);
    for (auto& v : raw) {
        v = d4(rng);
    }
    CodeArray codes = pack_codes(raw, 50, 2, 4);
    for (double lambda : {0.0, 0.5, 10.0}) {
        DecoderLUT lut = aq_fit(codes, x, lambda);
        for (float v : lut.tables) {
            REQUIRE(v == 0.0f);
        }
    }
}

TEST_CASE("tiny instance matches a dense least-squares oracle") {
    // n=6, m=2, K'=2, d=1
    DenseMatrix x(6, 1, {0.5f, -1.0f, 2.0f, 0.0f, 1.5f, -0.5f});
    CodeArray codes = pack_codes({0, 1, 1, 0, 1, 1, 0, 0, 0, 1, 1, 1}, 6, 2, 1);

    Eigen::MatrixXd design = Eigen::MatrixXd::Zero(6, 4);
    for (std::size_t r = 0; r < 6; ++r) {
        design(r, codes.get(r, 0)) = 1.0;
        design(r, 2 + codes.get(r, 1)) = 1.0;
    }
    Eigen::VectorXd target(6);
    for (std::size_t r = 0; r < 6; ++r) {
        target(r) = x.at(r, 0);
    }
    Eigen::VectorXd oracle =
            design.completeOrthogonalDecomposition().solve(target);

    DecoderLUT lut = aq_fit(codes, x, 0.0);
    for (std::size_t c = 0; c < 4; ++c) {
        REQUIRE(lut.tables[c] == Catch::Approx(oracle(c)).margin(1e-6));
    }
}

TEST_CASE("aq dominates the natural decoder at lambda=0") {
    GaussianMixture mix({16, 8, 2.0, 0.9, 0.3}, 54);
    DenseMatrix x = mix.sample(4000, 55);
    PQModel pq = pq_train(x, 4, 4, 15, 8);
    CodeArray codes = pq_encode(pq, x);
    double mse_nat = mean_sq_error(x, natural_decode(pq, codes));
    double mse_aq = mean_sq_error(x, aq_decode(aq_fit(codes, x, 0.0), codes));
    REQUIRE(mse_aq <= mse_nat + 1e-9);
}

TEST_CASE("binary aq dominates the naive sign decoder at lambda=0") {
    GaussianMixture mix({64, 8, 2.0, 0.9, 0.3}, 56);
    DenseMatrix x = mix.sample(2000, 57);
    ITQModel itq = itq_train(x, 64, 25, 0);
    CodeArray codes = binary_encode(itq, x);
    double mse_naive = mean_sq_error(x, binary_naive_decode(itq, codes));
    double mse_aq = mean_sq_error(x, aq_decode(aq_fit(codes, x, 0.0), codes));
    REQUIRE(mse_aq <= mse_naive + 1e-9);
}

TEST_CASE("training MSE is non-decreasing in lambda") {
    GaussianMixture mix({8, 6, 2.0, 0.9, 0.3}, 58);
    DenseMatrix x = mix.sample(1500, 59);
    PQModel pq = pq_train(x, 2, 4, 15, 9);
    CodeArray codes = pq_encode(pq, x);
    double prev = -1.0;
    for (double lambda : {0.0, 1e-3, 1e-1, 1.0, 10.0, 100.0, 1000.0}) {
        double mse = mean_sq_error(x, aq_decode(aq_fit(codes, x, lambda), codes));
        REQUIRE(mse >= prev - 1e-9);
        prev = mse;
    }
}

TEST_CASE("negative lambda is rejected") {
    DenseMatrix x(4, 1, {1.0f, 2.0f, 3.0f, 4.0f});
    CodeArray codes = pack_codes({0, 1, 0, 1}, 4, 1, 1);
    REQUIRE_THROWS_AS(aq_fit(codes, x, -0.5), Error);
}

TEST_CASE("pq embedded as additive LUTs decodes identically") {
    GaussianMixture mix({12, 6, 2.0, 0.9, 0.3}, 60);
    DenseMatrix x = mix.sample(700, 61);
    PQModel pq = pq_train(x, 3, 4, 15, 10);
    CodeArray codes = pq_encode(pq, x);
    DecoderLUT lut = lut_from_pq(pq);
    DenseMatrix a = aq_decode(lut, codes);
    DenseMatrix b = natural_decode(pq, codes);
    REQUIRE(a.data == b.data);  // exact, not approximate
}

TEST_CASE("the all-zero LUT reconstructs zero") {
    DecoderLUT lut;
    lut.m = 2;
    lut.ksub = 16;
    lut.dim = 4;
    lut.tables.assign(2 * 16 * 4, 0.0f);
    CodeArray codes = pack_codes({3, 9}, 1, 2, 4);
    DenseMatrix rec = aq_decode(lut, codes);
    for (float v : rec.data) {
        REQUIRE(v == 0.0f);
    }
}

TEST_CASE("aq normal equations hold to 1e-6 relative residual") {
    GaussianMixture mix({16, 8, 2.0, 0.9, 0.3}, 62);
    DenseMatrix x = mix.sample(2500, 63);
    PQModel pq = pq_train(x, 4, 4, 12, 11);
    CodeArray codes = pq_encode(pq, x);
    for (double lambda : {0.0, 1e-2, 1.0}) {
        DecoderLUT lut = aq_fit(codes, x, lambda);  // residual checked inside
        const std::size_t cols = 4 * 16;
        // re-verify externally with an independent accumulation
        Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(cols, cols);
        Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(cols, x.dim);
        for (std::size_t r = 0; r < codes.n; ++r) {
            std::vector<std::size_t> ks(4);
            for (std::size_t i = 0; i < 4; ++i) {
                ks[i] = i * 16 + codes.get(r, i);
            }
            for (std::size_t i = 0; i < 4; ++i) {
                for (std::size_t j = 0; j < 4; ++j) {
                    gram(ks[i], ks[j]) += 1.0;
                }
                for (std::size_t j = 0; j < x.dim; ++j) {
                    rhs(ks[i], j) += x.at(r, j);
                }
            }
        }
        gram.diagonal().array() += lambda;
        Eigen::MatrixXd c(cols, x.dim);
        for (std::size_t i = 0; i < cols; ++i) {
            for (std::size_t j = 0; j < x.dim; ++j) {
                c(i, j) = lut.tables[i * x.dim + j];
            }
        }
        double rel = (gram * c - rhs).norm() / rhs.norm();
        REQUIRE(rel <= 2e-6);  // float storage of C adds a hair of noise
    }
}
