#include <catch2/catch_amalgamated.hpp>

#include "codeq/nn_decoder.hpp"
#include "codeq/nn_train.hpp"
#include "codeq/pq.hpp"
#include "codeq/synthetic.hpp"

using namespace codeq;

namespace {

// Small double-precision net with random weights for exact-math checks.
NNParamsT<double> tiny_net(std::size_t m, std::size_t ksub, std::size_t d,
                           std::size_t h, std::size_t blocks, std::uint64_t seed) {
    auto p = NNParamsT<double>::shaped(m, ksub, d, h, blocks);
    Rng rng(seed);
    std::normal_distribution<double> gauss(0.0, 0.5);
    visit_trainable(p, [&](auto& t) {
        for (Eigen::Index i = 0; i < t.size(); ++i) {
            t.data()[i] = gauss(rng);
        }
    });
    for (auto& b : p.blocks) {
        b.bn_gamma = b.bn_gamma.array().abs() + 0.5;  // keep scales positive
    }
    return p;
}

CodeArray random_codes(std::size_t n, std::size_t m, std::size_t bits,
                       std::uint64_t seed) {
    Rng rng(seed);
    std::uniform_int_distribution<std::uint32_t> dist(0, (1u << bits) - 1);
    std::vector<std::uint32_t> raw(n * m);
    for (auto& v : raw) {
        v = dist(rng);
    }
    return pack_codes(raw, n, m, bits);
}

// Central finite differences of the training loss wrt every parameter.
void check_gradients(NNParamsT<double>& p, const CodeArray& codes,
                     const DenseMatrix& targets,
                     const std::vector<std::uint32_t>& anchors,
                     const LossConfig& loss_cfg) {
    auto [loss, grads] = nn_backward(p, codes, targets, anchors, loss_cfg);
    REQUIRE(std::isfinite(loss));

    const double h = 1e-6;
    double max_rel = 0.0;
    std::vector<double*> tensors;
    std::vector<Eigen::Index> sizes;
    visit_trainable(p, [&](auto& t) {
        tensors.push_back(t.data());
        sizes.push_back(t.size());
    });
    std::vector<const double*> gtensors;
    visit_trainable(grads, [&](auto& t) { gtensors.push_back(t.data()); });

    for (std::size_t ti = 0; ti < tensors.size(); ++ti) {
        for (Eigen::Index i = 0; i < sizes[ti]; ++i) {
            double saved = tensors[ti][i];
            tensors[ti][i] = saved + h;
            double up = nn_training_loss(p, codes, targets, anchors, loss_cfg);
            tensors[ti][i] = saved - h;
            double down = nn_training_loss(p, codes, targets, anchors, loss_cfg);
            tensors[ti][i] = saved;
            double fd = (up - down) / (2 * h);
            double analytic = gtensors[ti][i];
            double rel = std::abs(fd - analytic) /
                         std::max({std::abs(fd), std::abs(analytic), 1e-4});
            max_rel = std::max(max_rel, rel);
        }
    }
    REQUIRE(max_rel <= 1e-4);
}

} // namespace

TEST_CASE("analytic gradients match central finite differences (64-bit)") {
    // m=2, b=2, d=4, h=8, batch=8
    auto p = tiny_net(2, 16, 4, 8, 1, 100);
    CodeArray codes = random_codes(8, 2, 4, 101);
    // 4-valued subindices stored with 4-bit width; values stay < 4
    Rng rng(102);
    std::normal_distribution<float> gauss(0.0f, 1.0f);
    DenseMatrix targets(8, 4);
    for (auto& v : targets.data) {
        v = gauss(rng);
    }
    std::vector<std::uint32_t> anchors(8);
    std::iota(anchors.begin(), anchors.end(), 0u);

    SECTION("reconstruction loss only") {
        check_gradients(p, codes, targets, anchors, LossConfig{});
    }

    SECTION("with the triplet term active") {
        TripletSet trip;
        trip.pos = {1, 2, 3, 4, 5, 6, 7, 0};
        trip.neg = {2, 3, 4, 5, 6, 7, 0, 1};
        LossConfig cfg;
        cfg.triplet_weight = 1.0;
        cfg.margin = 0.35;
        cfg.triplets = &trip;
        check_gradients(p, codes, targets, anchors, cfg);
    }

    SECTION("two blocks") {
        auto p2 = tiny_net(2, 16, 4, 8, 2, 103);
        check_gradients(p2, codes, targets, anchors, LossConfig{});
    }
}

TEST_CASE("block-free forward equals aq_decode exactly") {
    GaussianMixture mix({8, 4, 2.0, 0.9, 0.3}, 70);
    DenseMatrix x = mix.sample(600, 71);
    PQModel pq = pq_train(x, 2, 4, 10, 1);
    CodeArray codes = pq_encode(pq, x);
    DecoderLUT lut = aq_fit(codes, x, aq_default_lambda(codes.n, 16));

    auto p = NNDecoderParams::shaped(2, 16, 8, 0, 0);
    for (std::size_t r = 0; r < 2 * 16; ++r) {
        for (std::size_t j = 0; j < 8; ++j) {
            p.lut(r, j) = lut.tables[r * 8 + j];
        }
    }
    DenseMatrix a = nn_forward(p, codes, ForwardMode::eval);
    DenseMatrix b = aq_decode(lut, codes);
    REQUIRE(a.data == b.data);  // bit-for-bit
}

TEST_CASE("eval-mode forward is deterministic") {
    auto pd = tiny_net(2, 16, 4, 8, 1, 104);
    auto p = params_cast<float>(pd);
    CodeArray codes = random_codes(32, 2, 4, 105);
    DenseMatrix a = nn_forward(p, codes, ForwardMode::eval);
    DenseMatrix b = nn_forward(p, codes, ForwardMode::eval);
    REQUIRE(a.data == b.data);
}

TEST_CASE("zero weights and a beta offset give a constant output") {
    auto p = NNDecoderParams::shaped(2, 16, 3, 6, 1);
    p.blocks[0].b2 = NNRow<float>::Constant(3, 2.5f);
    // lut zero, affine weights zero, bn_beta anything: output rows all b2
    p.blocks[0].bn_beta = NNRow<float>::Constant(3, 7.0f);
    CodeArray codes = random_codes(16, 2, 4, 106);
    DenseMatrix out = nn_forward(p, codes, ForwardMode::eval);
    for (std::size_t r = 0; r < 16; ++r) {
        for (std::size_t j = 0; j < 3; ++j) {
            REQUIRE(out.at(r, j) == 2.5f);
        }
    }
}

TEST_CASE("train mode rejects a batch of one") {
    auto p = NNDecoderParams::shaped(2, 16, 3, 6, 1);
    CodeArray codes = random_codes(1, 2, 4, 107);
    REQUIRE_THROWS_AS(nn_forward(p, codes, ForwardMode::train), Error);
}

TEST_CASE("zero reconstruction error and satisfied margins give zero gradients") {
    // lut rows chosen so the decoder reproduces its targets exactly
    std::size_t d = 3;
    auto p = NNParamsT<double>::shaped(1, 16, d, 0, 0);
    for (std::size_t k = 0; k < 4; ++k) {
        for (std::size_t j = 0; j < d; ++j) {
            p.lut(k, j) = static_cast<double>(k) + 0.25 * static_cast<double>(j);
        }
    }
    CodeArray codes = pack_codes({0, 1, 2, 3}, 4, 1, 4);
    DenseMatrix targets(4, d);
    for (std::size_t r = 0; r < 4; ++r) {
        for (std::size_t j = 0; j < d; ++j) {
            targets.at(r, j) = static_cast<float>(p.lut(r, j));
        }
    }
    std::vector<std::uint32_t> anchors = {0, 1, 2, 3};

    TripletSet trip;
    trip.pos = {1, 0, 3, 2};   // adjacent codes: close reconstructions
    trip.neg = {3, 3, 0, 0};   // far ones
    LossConfig cfg;
    cfg.triplet_weight = 1.0;
    cfg.margin = 1e-3;  // much smaller than the pos/neg gap
    cfg.triplets = &trip;

    auto [loss, grads] = nn_backward(p, codes, targets, anchors, cfg);
    REQUIRE(loss == Catch::Approx(0.0).margin(1e-12));
    visit_trainable(grads, [&](auto& g) {
        for (Eigen::Index i = 0; i < g.size(); ++i) {
            REQUIRE(g.data()[i] == 0.0);
        }
    });
}

TEST_CASE("lut rows outside the batch receive zero gradient") {
    auto p = tiny_net(2, 16, 4, 8, 1, 108);
    // batch only ever selects subindices 0 and 1
    CodeArray codes = pack_codes({0, 1, 1, 0, 0, 0, 1, 1}, 4, 2, 4);
    DenseMatrix targets(4, 4);
    Rng rng(109);
    std::normal_distribution<float> gauss(0.0f, 1.0f);
    for (auto& v : targets.data) {
        v = gauss(rng);
    }
    std::vector<std::uint32_t> anchors = {0, 1, 2, 3};
    auto [loss, grads] = nn_backward(p, codes, targets, anchors, LossConfig{});
    for (std::size_t sub = 0; sub < 2; ++sub) {
        for (std::size_t k = 2; k < 16; ++k) {  // never selected
            for (std::size_t j = 0; j < 4; ++j) {
                REQUIRE(grads.lut(sub * 16 + k, j) == 0.0);
            }
        }
        bool any = false;  // selected rows do move
        for (std::size_t k = 0; k < 2; ++k) {
            for (std::size_t j = 0; j < 4; ++j) {
                any |= grads.lut(sub * 16 + k, j) != 0.0;
            }
        }
        REQUIRE(any);
    }
}

TEST_CASE("reconstruction loss basics") {
    auto x = DenseMatrix::from_rows({{1.0f, 2.0f}, {3.0f, 4.0f}});
    REQUIRE(reconstruction_loss(x, x) == 0.0);
    auto a = DenseMatrix::from_rows({{0.0f, 0.0f}});
    auto b = DenseMatrix::from_rows({{3.0f, 4.0f}});
    REQUIRE(reconstruction_loss(a, b) == Catch::Approx(25.0));

    GaussianMixture mix({8, 4, 2.0, 0.9, 0.3}, 72);
    DenseMatrix u = mix.sample(64, 73), v = mix.sample(64, 74);
    double naive = 0.0;
    for (std::size_t r = 0; r < 64; ++r) {
        for (std::size_t j = 0; j < 8; ++j) {
            double diff = static_cast<double>(u.at(r, j)) - v.at(r, j);
            naive += diff * diff;
        }
    }
    naive /= 64.0;
    REQUIRE(reconstruction_loss(u, v) == Catch::Approx(naive).epsilon(1e-12));
}

TEST_CASE("triplet loss hinge values") {
    std::vector<float> x = {0.0f, 0.0f};
    std::vector<float> pos = {1.0f, 0.0f};             // d^2 = 1
    std::vector<float> neg = {std::sqrt(2.0f), 0.0f};  // d^2 = 2

    REQUIRE(triplet_loss(x.data(), pos.data(), neg.data(), 2, 0.5) ==
            Catch::Approx(0.0).margin(1e-6));
    REQUIRE(triplet_loss(x.data(), pos.data(), neg.data(), 2, 1.5) ==
            Catch::Approx(0.5).margin(1e-6));
    // equal reconstructions: the loss is the margin itself
    REQUIRE(triplet_loss(x.data(), pos.data(), pos.data(), 2, 0.7) ==
            Catch::Approx(0.7).margin(1e-7));
    REQUIRE_THROWS_AS(triplet_loss(x.data(), pos.data(), neg.data(), 2, 0.0),
                      Error);
}

TEST_CASE("triplet mining on three collinear points") {
    auto x = DenseMatrix::from_rows({{0.0f}, {1.0f}, {3.0f}});
    TripletSet t = mine_triplets(x, 1, 5);
    REQUIRE(t.pos[0] == 1);  // nearest to 0.0 is 1.0
    REQUIRE(t.neg[0] == 2);
    REQUIRE(t.pos[1] == 0);
    REQUIRE(t.neg[1] == 2);
    REQUIRE(t.pos[2] == 1);
    REQUIRE(t.neg[2] == 0);
}

TEST_CASE("mined positives are strictly closer than negatives") {
    GaussianMixture mix({8, 4, 2.0, 0.9, 0.3}, 75);
    DenseMatrix x = mix.sample(300, 76);
    TripletSet t = mine_triplets(x, 5, 9);
    for (std::size_t r = 0; r < x.rows; ++r) {
        REQUIRE(l2_sqr(x.row(r), x.row(t.pos[r]), x.dim) <=
                l2_sqr(x.row(r), x.row(t.neg[r]), x.dim));
    }
}

TEST_CASE("mined ranks match an exhaustive sort") {
    GaussianMixture mix({6, 3, 2.0, 0.9, 0.3}, 77);
    DenseMatrix x = mix.sample(80, 78);
    std::size_t kpos = 4;
    TripletSet t = mine_triplets(x, kpos, 11);
    for (std::size_t r = 0; r < x.rows; ++r) {
        std::vector<std::pair<double, std::uint32_t>> all;
        for (std::size_t o = 0; o < x.rows; ++o) {
            if (o != r) {
                all.emplace_back(l2_sqr(x.row(r), x.row(o), x.dim),
                                 static_cast<std::uint32_t>(o));
            }
        }
        std::sort(all.begin(), all.end());
        REQUIRE(t.neg[r] == all[kpos].second);
        bool pos_in_range = false;
        for (std::size_t i = 0; i < kpos; ++i) {
            pos_in_range |= all[i].second == t.pos[r];
        }
        REQUIRE(pos_in_range);
    }
}

TEST_CASE("too few rows for mining is rejected") {
    auto x = DenseMatrix::from_rows({{0.0f}, {1.0f}});
    REQUIRE_THROWS_AS(mine_triplets(x, 1, 0), Error);
}

TEST_CASE("train-mode batchnorm output has mean beta and variance gamma^2") {
    auto pd = tiny_net(2, 16, 6, 12, 1, 110);
    auto p = params_cast<float>(pd);
    CodeArray codes = random_codes(512, 2, 4, 111);

    // probe the normalized activation via a pass-through affine pair
    p.blocks[0].w1.setZero();
    p.blocks[0].w2.setZero();
    for (std::size_t j = 0; j < 6; ++j) {
        p.blocks[0].w1(j, j) = 1.0f;
        p.blocks[0].w1(j, 6 + j) = -1.0f;
        p.blocks[0].w2(j, j) = 1.0f;
        p.blocks[0].w2(6 + j, j) = -1.0f;
    }
    p.blocks[0].b1.setZero();
    p.blocks[0].b2.setZero();
    DenseMatrix out = nn_forward(p, codes, ForwardMode::train);

    for (std::size_t j = 0; j < 6; ++j) {
        double mean = 0.0;
        for (std::size_t r = 0; r < out.rows; ++r) {
            mean += out.at(r, j);
        }
        mean /= static_cast<double>(out.rows);
        double var = 0.0;
        for (std::size_t r = 0; r < out.rows; ++r) {
            double c = out.at(r, j) - mean;
            var += c * c;
        }
        var /= static_cast<double>(out.rows);
        REQUIRE(mean == Catch::Approx(p.blocks[0].bn_beta(j)).margin(1e-3));
        double g2 = static_cast<double>(p.blocks[0].bn_gamma(j)) *
                    p.blocks[0].bn_gamma(j);
        REQUIRE(var == Catch::Approx(g2).margin(1e-3 * std::max(1.0, g2)));
    }
}
