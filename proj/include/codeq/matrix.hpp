#pragma once

#include <cstddef>
#include <cstring>
#include <initializer_list>
#include <utility>
#include <vector>

#include "codeq/common.hpp"

namespace codeq {

// Row-major matrix of 32-bit floats. Reductions over entries are done in
// 64-bit by the algorithms operating on it. Entries are checked finite at
// every ingestion point; non-finite input is rejected up front.
struct DenseMatrix {
    std::size_t rows = 0;
    std::size_t dim = 0;
    std::vector<float> data;

    DenseMatrix() = default;

    DenseMatrix(std::size_t rows_, std::size_t dim_)
            : rows(rows_), dim(dim_), data(rows_ * dim_, 0.0f) {}

    DenseMatrix(std::size_t rows_, std::size_t dim_, std::vector<float> values)
            : rows(rows_), dim(dim_), data(std::move(values)) {
        CODEQ_REQUIRE(data.size() == rows * dim,
                      "DenseMatrix: data length ", data.size(), " != rows*dim ",
                      rows * dim);
        check_finite();
    }

    static DenseMatrix from_rows(std::initializer_list<std::initializer_list<float>> r) {
        DenseMatrix out;
        out.rows = r.size();
        out.dim = r.size() ? r.begin()->size() : 0;
        out.data.reserve(out.rows * out.dim);
        for (const auto& row : r) {
            CODEQ_REQUIRE(row.size() == out.dim, "DenseMatrix: ragged rows");
            out.data.insert(out.data.end(), row.begin(), row.end());
        }
        out.check_finite();
        return out;
    }

    const float* row(std::size_t i) const { return data.data() + i * dim; }
    float* row(std::size_t i) { return data.data() + i * dim; }

    float at(std::size_t r, std::size_t c) const { return data[r * dim + c]; }
    float& at(std::size_t r, std::size_t c) { return data[r * dim + c]; }

    void check_finite() const {
        for (std::size_t i = 0; i < data.size(); ++i) {
            if (!is_finite(data[i])) {
                fail("DenseMatrix: non-finite entry at flat index ", i,
                     " (row ", dim ? i / dim : 0, ", col ", dim ? i % dim : 0, ")");
            }
        }
    }

    // Copies rows [begin, end) into a new matrix.
    DenseMatrix slice_rows(std::size_t begin, std::size_t end) const {
        CODEQ_REQUIRE(begin <= end && end <= rows, "slice_rows: bad range [",
                      begin, ", ", end, ") for ", rows, " rows");
        DenseMatrix out(end - begin, dim);
        std::memcpy(out.data.data(), data.data() + begin * dim,
                    (end - begin) * dim * sizeof(float));
        return out;
    }

    // Copies columns [begin, end) of every row (a subspace view).
    DenseMatrix slice_cols(std::size_t begin, std::size_t end) const {
        CODEQ_REQUIRE(begin <= end && end <= dim, "slice_cols: bad range");
        DenseMatrix out(rows, end - begin);
        for (std::size_t r = 0; r < rows; ++r) {
            std::memcpy(out.row(r), row(r) + begin, (end - begin) * sizeof(float));
        }
        return out;
    }
};

// Squared Euclidean distance with 64-bit accumulation.
inline double l2_sqr(const float* a, const float* b, std::size_t d) {
    double acc = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        double diff = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        acc += diff * diff;
    }
    return acc;
}

// Mean over rows of the squared reconstruction error, 64-bit accumulation.
inline double mean_sq_error(const DenseMatrix& x, const DenseMatrix& xhat) {
    CODEQ_REQUIRE(x.rows == xhat.rows && x.dim == xhat.dim,
                  "mean_sq_error: shape mismatch");
    CODEQ_REQUIRE(x.rows > 0, "mean_sq_error: empty input");
    double acc = 0.0;
    for (std::size_t r = 0; r < x.rows; ++r) {
        acc += l2_sqr(x.row(r), xhat.row(r), x.dim);
    }
    return acc / static_cast<double>(x.rows);
}

} // namespace codeq
