#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include "codeq/codeq.hpp"

using namespace codeq;

namespace {

DenseMatrix random_matrix(std::size_t rows, std::size_t dim, std::uint64_t seed) {
    Rng rng(seed);
    std::normal_distribution<float> gauss(0.0f, 1.0f);
    DenseMatrix x(rows, dim);
    for (auto& v : x.data) {
        v = gauss(rng);
    }
    return x;
}

template <typename Model>
std::string to_bytes(const Model& m) {
    std::ostringstream os(std::ios::binary);
    save_model(os, m);
    return os.str();
}

template <typename Model>
Model from_bytes(const std::string& bytes) {
    std::istringstream is(bytes, std::ios::binary);
    Model m;
    load_model(is, m);
    return m;
}

} // namespace

TEST_CASE("DenseMatrix rejects non-finite entries") {
    REQUIRE_THROWS_AS(DenseMatrix(1, 2, {1.0f, NAN}), Error);
    REQUIRE_THROWS_AS(DenseMatrix(1, 2, {INFINITY, 0.0f}), Error);
    REQUIRE_THROWS_AS(DenseMatrix(2, 1, {0.0f, -INFINITY}), Error);
    REQUIRE_NOTHROW(DenseMatrix(2, 2, {1.0f, -2.0f, 0.0f, 3.5f}));
}

TEST_CASE("DenseMatrix length invariant") {
    REQUIRE_THROWS_AS(DenseMatrix(2, 2, {1.0f, 2.0f, 3.0f}), Error);
}

TEST_CASE("mean_sq_error on a 3-4-5 pair") {
    auto a = DenseMatrix::from_rows({{0.0f, 0.0f}});
    auto b = DenseMatrix::from_rows({{3.0f, 4.0f}});
    REQUIRE(mean_sq_error(a, b) == Catch::Approx(25.0));
}

TEST_CASE("pq model serialization round-trips bit-exactly") {
    DenseMatrix x = random_matrix(300, 16, 1);
    PQModel model = pq_train(x, 4, 4, 10, 9);
    std::string bytes = to_bytes(model);
    PQModel back = from_bytes<PQModel>(bytes);
    REQUIRE(back.codebook.centroids == model.codebook.centroids);
    REQUIRE(back.bits == model.bits);
    REQUIRE(!back.codebook.has_rotation());
    // serialize(deserialize(bytes)) is the identity too
    REQUIRE(to_bytes(back) == bytes);
}

TEST_CASE("opq rotation survives the round-trip") {
    DenseMatrix x = random_matrix(256, 8, 2);
    PQModel model = opq_train(x, 2, 4, 3, 5, 8);
    PQModel back = from_bytes<PQModel>(to_bytes(model));
    REQUIRE(back.codebook.rotation == model.codebook.rotation);
    REQUIRE(back.codebook.centroids == model.codebook.centroids);
}

TEST_CASE("kmeans/itq/lut/topline/codes round-trips are bit-exact") {
    DenseMatrix x = random_matrix(200, 8, 3);

    KMeansModel km = kmeans_train(x, 5, 8, 1);
    KMeansModel km2 = from_bytes<KMeansModel>(to_bytes(km));
    REQUIRE(km2.centroids.data == km.centroids.data);
    REQUIRE(km2.final_mse == km.final_mse);
    REQUIRE(km2.iterations_run == km.iterations_run);

    ITQModel itq = itq_train(x, 6, 10, 4);
    ITQModel itq2 = from_bytes<ITQModel>(to_bytes(itq));
    REQUIRE(itq2.mean == itq.mean);
    REQUIRE(itq2.basis.basis.data == itq.basis.basis.data);
    REQUIRE(itq2.pca.data == itq.pca.data);
    REQUIRE(itq2.rotation.data == itq.rotation.data);

    PQModel pq = pq_train(x, 2, 4, 8, 2);
    CodeArray codes = pq_encode(pq, x);
    CodeArray codes2 = from_bytes<CodeArray>(to_bytes(codes));
    REQUIRE(codes2.payload == codes.payload);
    REQUIRE(codes2.n == codes.n);

    DecoderLUT lut = aq_fit(codes, x, 1e-3);
    DecoderLUT lut2 = from_bytes<DecoderLUT>(to_bytes(lut));
    REQUIRE(lut2.tables == lut.tables);

    ToplineDecoder top = topline_fit(codes, x, &pq);
    ToplineDecoder top2 = from_bytes<ToplineDecoder>(to_bytes(top));
    REQUIRE(top2.table.data == top.table.data);
    REQUIRE(top2.counts == top.counts);
}

TEST_CASE("nn decoder round-trip reproduces the forward output exactly") {
    DenseMatrix x = random_matrix(512, 8, 6);
    PQModel pq = pq_train(x, 2, 4, 8, 3);
    CodeArray codes = pq_encode(pq, x);

    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 64;
    cfg.seed = 11;
    TrainResult res = train_decoder(codes, x,
                                    DecoderHandle::slice_codes(codes, 0, 64),
                                    x.slice_rows(0, 64), cfg);
    NNDecoderParams back = from_bytes<NNDecoderParams>(to_bytes(res.params));

    DenseMatrix out1 = nn_decode_range(res.params, codes, 0, 100);
    DenseMatrix out2 = nn_decode_range(back, codes, 0, 100);
    REQUIRE(out1.data == out2.data);
    REQUIRE(to_bytes(back) == to_bytes(res.params));
}

TEST_CASE("corrupted magic is an explicit format error") {
    DenseMatrix x = random_matrix(64, 4, 7);
    PQModel model = pq_train(x, 2, 4, 5, 1);
    std::string bytes = to_bytes(model);
    bytes[0] = 'X';
    try {
        from_bytes<PQModel>(bytes);
        FAIL("expected a format error");
    } catch (const Error& e) {
        REQUIRE(std::string(e.what()).find("magic") != std::string::npos);
    }
}

TEST_CASE("truncated stream is rejected") {
    DenseMatrix x = random_matrix(64, 4, 7);
    PQModel model = pq_train(x, 2, 4, 5, 1);
    std::string bytes = to_bytes(model);
    bytes.resize(bytes.size() / 2);
    REQUIRE_THROWS_AS(from_bytes<PQModel>(bytes), Error);
}

TEST_CASE("unsupported version and wrong kind tag are rejected") {
    DenseMatrix x = random_matrix(64, 4, 7);
    PQModel model = pq_train(x, 2, 4, 5, 1);
    std::string bytes = to_bytes(model);

    std::string bad_version = bytes;
    bad_version[8] = 42;  // version field follows the 8-byte magic
    REQUIRE_THROWS_AS(from_bytes<PQModel>(bad_version), Error);

    REQUIRE_THROWS_AS(from_bytes<KMeansModel>(bytes), Error);
}
