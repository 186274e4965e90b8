#pragma once

#include <bit>
#include <chrono>
#include <cstring>
#include <functional>
#include <queue>
#include <vector>

#include "codeq/codes.hpp"
#include "codeq/matrix.hpp"
#include "codeq/pq.hpp"

namespace codeq {

// Top-R hits for one query: distances ascending, ties broken toward the
// lower database id, ids unique.
struct QueryResult {
    std::vector<std::uint32_t> ids;
    std::vector<double> dists;
};

struct SearchResultSet {
    std::vector<QueryResult> queries;
    double scan_ms = 0.0;
    double rerank_ms = 0.0;
};

namespace detail {

// Bounded selection of the R best (dist, id) pairs; worse = (bigger dist,
// bigger id).
class TopR {
public:
    explicit TopR(std::size_t r) : r_(r) {}

    void push(double dist, std::uint32_t id) {
        if (heap_.size() < r_) {
            heap_.emplace(dist, id);
        } else if (std::pair<double, std::uint32_t>(dist, id) < heap_.top()) {
            heap_.pop();
            heap_.emplace(dist, id);
        }
    }

    QueryResult finish() {
        QueryResult out;
        out.ids.resize(heap_.size());
        out.dists.resize(heap_.size());
        for (std::size_t i = heap_.size(); i-- > 0;) {
            out.dists[i] = heap_.top().first;
            out.ids[i] = heap_.top().second;
            heap_.pop();
        }
        return out;
    }

private:
    std::size_t r_;
    std::priority_queue<std::pair<double, std::uint32_t>> heap_;
};

inline double elapsed_ms(std::chrono::steady_clock::time_point t0) {
    auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count();
}

} // namespace detail

// Per-subspace table of squared distances from (the rotated) query to every
// sub-centroid: tab[sub * ksub + k].
inline std::vector<double> adc_table(const PQModel& model, const float* query) {
    const SubspaceCodebook& cb = model.codebook;
    std::vector<float> rotated;
    if (cb.has_rotation()) {
        rotated.resize(cb.dim());
        rotate_forward(cb.rotation, cb.dim(), query, rotated.data());
        query = rotated.data();
    }
    std::vector<double> tab(cb.m * cb.ksub);
    for (std::size_t sub = 0; sub < cb.m; ++sub) {
        const float* qsub = query + sub * cb.dsub;
        for (std::size_t k = 0; k < cb.ksub; ++k) {
            tab[sub * cb.ksub + k] = l2_sqr(qsub, cb.centroid(sub, k), cb.dsub);
        }
    }
    return tab;
}

// Compressed-domain ADC: m table lookups per code, no decompression.
inline QueryResult adc_scan_pq(const float* query, const PQModel& model,
                               const CodeArray& codes, std::size_t r) {
    CODEQ_REQUIRE(codes.m == model.m() && codes.bits == model.bits,
                  "adc_scan_pq: codes incompatible with model");
    CODEQ_REQUIRE(r >= 1, "adc_scan_pq: R must be >= 1");
    std::vector<double> tab = adc_table(model, query);
    const std::size_t ksub = model.ksub();
    detail::TopR top(std::min(r, codes.n));
    for (std::size_t v = 0; v < codes.n; ++v) {
        double dist = 0.0;
        for (std::size_t sub = 0; sub < codes.m; ++sub) {
            dist += tab[sub * ksub + codes.get(v, sub)];
        }
        top.push(dist, static_cast<std::uint32_t>(v));
    }
    return top.finish();
}

inline SearchResultSet adc_scan_pq(const DenseMatrix& queries, const PQModel& model,
                                   const CodeArray& codes, std::size_t r) {
    CODEQ_REQUIRE(queries.dim == model.dim(), "adc_scan_pq: query dim mismatch");
    SearchResultSet out;
    out.queries.resize(queries.rows);
    auto t0 = std::chrono::steady_clock::now();
    for (std::size_t q = 0; q < queries.rows; ++q) {
        out.queries[q] = adc_scan_pq(queries.row(q), model, codes, r);
    }
    out.scan_ms = detail::elapsed_ms(t0);
    return out;
}

// Hamming distance between two packed 1-bit codes, word-wise XOR+popcount.
inline std::size_t hamming_distance(const CodeArray& a, std::size_t ra,
                                    const CodeArray& b, std::size_t rb) {
    CODEQ_REQUIRE(a.bits == 1 && b.bits == 1 && a.m == b.m,
                  "hamming_distance: incompatible binary codes");
    std::size_t nbytes = a.code_size();
    const std::uint8_t* pa = a.payload.data() + ra * nbytes;
    const std::uint8_t* pb = b.payload.data() + rb * nbytes;
    std::size_t dist = 0;
    std::size_t i = 0;
    for (; i + 8 <= nbytes; i += 8) {
        std::uint64_t wa, wb;
        std::memcpy(&wa, pa + i, 8);
        std::memcpy(&wb, pb + i, 8);
        dist += static_cast<std::size_t>(std::popcount(wa ^ wb));
    }
    for (; i < nbytes; ++i) {
        dist += static_cast<std::size_t>(
                std::popcount(static_cast<unsigned>(pa[i] ^ pb[i])));
    }
    return dist;
}

// Symmetric comparison for binary codes: rank by Hamming distance.
inline QueryResult sdc_scan_binary(const CodeArray& query_codes, std::size_t qrow,
                                   const CodeArray& codes, std::size_t r) {
    CODEQ_REQUIRE(r >= 1, "sdc_scan_binary: R must be >= 1");
    detail::TopR top(std::min(r, codes.n));
    for (std::size_t v = 0; v < codes.n; ++v) {
        top.push(static_cast<double>(hamming_distance(query_codes, qrow, codes, v)),
                 static_cast<std::uint32_t>(v));
    }
    return top.finish();
}

inline SearchResultSet sdc_scan_binary(const CodeArray& query_codes,
                                       const CodeArray& codes, std::size_t r) {
    SearchResultSet out;
    out.queries.resize(query_codes.n);
    auto t0 = std::chrono::steady_clock::now();
    for (std::size_t q = 0; q < query_codes.n; ++q) {
        out.queries[q] = sdc_scan_binary(query_codes, q, codes, r);
    }
    out.scan_ms = detail::elapsed_ms(t0);
    return out;
}

// Exact squared-Euclidean ranking against explicitly decoded vectors.
inline QueryResult adc_scan_decoded(const float* query, const DenseMatrix& recons,
                                    std::size_t r) {
    CODEQ_REQUIRE(r >= 1, "adc_scan_decoded: R must be >= 1");
    detail::TopR top(std::min(r, recons.rows));
    for (std::size_t v = 0; v < recons.rows; ++v) {
        top.push(l2_sqr(query, recons.row(v), recons.dim),
                 static_cast<std::uint32_t>(v));
    }
    return top.finish();
}

inline SearchResultSet adc_scan_decoded(const DenseMatrix& queries,
                                        const DenseMatrix& recons, std::size_t r) {
    CODEQ_REQUIRE(queries.dim == recons.dim, "adc_scan_decoded: dim mismatch");
    SearchResultSet out;
    out.queries.resize(queries.rows);
    auto t0 = std::chrono::steady_clock::now();
    for (std::size_t q = 0; q < queries.rows; ++q) {
        out.queries[q] = adc_scan_decoded(queries.row(q), recons, r);
    }
    out.scan_ms = detail::elapsed_ms(t0);
    return out;
}

// Chunk-decoded exhaustive scan: decode_fn(start, count) reconstructs rows
// [start, start+count) of the database; memory stays at chunk scale.
inline SearchResultSet scan_decoded_chunked(
        const DenseMatrix& queries, std::size_t n_base, std::size_t r,
        const std::function<DenseMatrix(std::size_t, std::size_t)>& decode_fn,
        std::size_t chunk = 16384) {
    SearchResultSet out;
    std::vector<detail::TopR> tops;
    tops.reserve(queries.rows);
    for (std::size_t q = 0; q < queries.rows; ++q) {
        tops.emplace_back(std::min(r, n_base));
    }
    auto t0 = std::chrono::steady_clock::now();
    for (std::size_t start = 0; start < n_base; start += chunk) {
        std::size_t count = std::min(chunk, n_base - start);
        DenseMatrix rec = decode_fn(start, count);
        CODEQ_REQUIRE(rec.rows == count && rec.dim == queries.dim,
                      "scan_decoded_chunked: bad chunk shape");
        for (std::size_t q = 0; q < queries.rows; ++q) {
            const float* query = queries.row(q);
            for (std::size_t v = 0; v < count; ++v) {
                tops[q].push(l2_sqr(query, rec.row(v), rec.dim),
                             static_cast<std::uint32_t>(start + v));
            }
        }
    }
    out.queries.resize(queries.rows);
    for (std::size_t q = 0; q < queries.rows; ++q) {
        out.queries[q] = tops[q].finish();
    }
    out.scan_ms = detail::elapsed_ms(t0);
    return out;
}

// Re-ranks the first L shortlist entries by exact distance to a stronger
// decoder's reconstructions; entries beyond L keep their first-stage order.
inline QueryResult rerank(const float* query, const QueryResult& first,
                          const std::function<const float*(std::uint32_t)>& recon_of,
                          std::size_t dim, std::size_t shortlist) {
    CODEQ_REQUIRE(shortlist >= 1, "rerank: shortlist size must be >= 1");
    std::size_t l = std::min(shortlist, first.ids.size());
    std::vector<std::pair<double, std::uint32_t>> scored(l);
    for (std::size_t i = 0; i < l; ++i) {
        scored[i] = {l2_sqr(query, recon_of(first.ids[i]), dim), first.ids[i]};
    }
    std::sort(scored.begin(), scored.end());
    QueryResult out = first;
    for (std::size_t i = 0; i < l; ++i) {
        out.dists[i] = scored[i].first;
        out.ids[i] = scored[i].second;
    }
    return out;
}

inline QueryResult rerank(const float* query, const QueryResult& first,
                          const DenseMatrix& strong_recons, std::size_t shortlist) {
    return rerank(
            query, first,
            [&](std::uint32_t id) { return strong_recons.row(id); },
            strong_recons.dim, shortlist);
}

// Exact nearest neighbor id per query, 64-bit accumulation, ties to lowest id.
inline std::vector<std::uint32_t> compute_ground_truth(const DenseMatrix& base,
                                                       const DenseMatrix& queries) {
    CODEQ_REQUIRE(base.dim == queries.dim, "compute_ground_truth: dim mismatch");
    CODEQ_REQUIRE(base.rows >= 1, "compute_ground_truth: empty base");
    std::vector<std::uint32_t> gt(queries.rows);
    for (std::size_t q = 0; q < queries.rows; ++q) {
        double best = std::numeric_limits<double>::infinity();
        std::uint32_t best_id = 0;
        const float* query = queries.row(q);
        for (std::size_t v = 0; v < base.rows; ++v) {
            double d = l2_sqr(query, base.row(v), base.dim);
            if (d < best) {
                best = d;
                best_id = static_cast<std::uint32_t>(v);
            }
        }
        gt[q] = best_id;
    }
    return gt;
}

// Rate of queries whose exact nearest neighbor shows up in the first R hits.
inline double recall_at(const SearchResultSet& results,
                        const std::vector<std::uint32_t>& gt, std::size_t r) {
    CODEQ_REQUIRE(results.queries.size() == gt.size(),
                  "recall_at: results and ground truth differ in query count");
    CODEQ_REQUIRE(!gt.empty(), "recall_at: missing ground truth");
    std::size_t hits = 0;
    for (std::size_t q = 0; q < gt.size(); ++q) {
        const auto& ids = results.queries[q].ids;
        std::size_t limit = std::min(r, ids.size());
        for (std::size_t i = 0; i < limit; ++i) {
            if (ids[i] == gt[q]) {
                ++hits;
                break;
            }
        }
    }
    return static_cast<double>(hits) / static_cast<double>(gt.size());
}

// Median wall-clock milliseconds over `reps` runs of fn().
template <typename F>
double median_time_ms(F&& fn, std::size_t reps = 5) {
    std::vector<double> times(reps);
    for (std::size_t i = 0; i < reps; ++i) {
        auto t0 = std::chrono::steady_clock::now();
        fn();
        times[i] = detail::elapsed_ms(t0);
    }
    std::sort(times.begin(), times.end());
    return times[reps / 2];
}

} // namespace codeq
