#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <numeric>
#include <string>
#include <vector>

#include "codeq/codes.hpp"
#include "codeq/linear_decoders.hpp"
#include "codeq/matrix.hpp"

namespace codeq {

constexpr double kBatchNormEps = 1e-5;
constexpr double kBatchNormMomentum = 0.1;

template <typename R>
using NNMat = Eigen::Matrix<R, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename R>
using NNRow = Eigen::Matrix<R, 1, Eigen::Dynamic>;

// One batchnorm + FC/ReLU/FC block mapping R^d -> R^d.
template <typename R>
struct NNBlockT {
    NNRow<R> bn_gamma, bn_beta;          // d
    NNRow<R> bn_running_mean, bn_running_var;
    NNMat<R> w1;                         // d x h
    NNRow<R> b1;                         // h
    NNMat<R> w2;                         // h x d
    NNRow<R> b2;                         // d
};

template <typename R>
struct NNParamsT {
    std::size_t m = 0, ksub = 0, dim = 0, hidden = 0;
    NNMat<R> lut;  // (m * ksub) x dim
    std::vector<NNBlockT<R>> blocks;

    static NNParamsT shaped(std::size_t m_, std::size_t ksub_, std::size_t dim_,
                            std::size_t hidden_, std::size_t block_count) {
        NNParamsT p;
        p.m = m_;
        p.ksub = ksub_;
        p.dim = dim_;
        p.hidden = hidden_;
        p.lut = NNMat<R>::Zero(m_ * ksub_, dim_);
        p.blocks.resize(block_count);
        for (auto& b : p.blocks) {
            b.bn_gamma = NNRow<R>::Ones(dim_);
            b.bn_beta = NNRow<R>::Zero(dim_);
            b.bn_running_mean = NNRow<R>::Zero(dim_);
            b.bn_running_var = NNRow<R>::Ones(dim_);
            b.w1 = NNMat<R>::Zero(dim_, hidden_);
            b.b1 = NNRow<R>::Zero(hidden_);
            b.w2 = NNMat<R>::Zero(hidden_, dim_);
            b.b2 = NNRow<R>::Zero(dim_);
        }
        return p;
    }

    bool all_finite() const {
        auto ok = [](const auto& mat) { return mat.allFinite(); };
        if (!ok(lut)) {
            return false;
        }
        for (const auto& b : blocks) {
            if (!ok(b.bn_gamma) || !ok(b.bn_beta) || !ok(b.bn_running_mean) ||
                !ok(b.bn_running_var) || !ok(b.w1) || !ok(b.b1) || !ok(b.w2) ||
                !ok(b.b2)) {
                return false;
            }
        }
        return true;
    }
};

using NNDecoderParams = NNParamsT<float>;

template <typename To, typename From>
NNParamsT<To> params_cast(const NNParamsT<From>& p) {
    NNParamsT<To> out;
    out.m = p.m;
    out.ksub = p.ksub;
    out.dim = p.dim;
    out.hidden = p.hidden;
    out.lut = p.lut.template cast<To>();
    out.blocks.resize(p.blocks.size());
    for (std::size_t i = 0; i < p.blocks.size(); ++i) {
        out.blocks[i].bn_gamma = p.blocks[i].bn_gamma.template cast<To>();
        out.blocks[i].bn_beta = p.blocks[i].bn_beta.template cast<To>();
        out.blocks[i].bn_running_mean = p.blocks[i].bn_running_mean.template cast<To>();
        out.blocks[i].bn_running_var = p.blocks[i].bn_running_var.template cast<To>();
        out.blocks[i].w1 = p.blocks[i].w1.template cast<To>();
        out.blocks[i].b1 = p.blocks[i].b1.template cast<To>();
        out.blocks[i].w2 = p.blocks[i].w2.template cast<To>();
        out.blocks[i].b2 = p.blocks[i].b2.template cast<To>();
    }
    return out;
}

// Visits every trainable tensor in a fixed order (running stats excluded).
// The callback must accept any Eigen dense object (generic lambda).
template <typename R, typename F>
void visit_trainable(NNParamsT<R>& p, F&& f) {
    f(p.lut);
    for (auto& b : p.blocks) {
        f(b.bn_gamma);
        f(b.bn_beta);
        f(b.w1);
        f(b.b1);
        f(b.w2);
        f(b.b2);
    }
}

namespace detail {

template <typename R>
struct BlockCache {
    NNMat<R> y_in;
    NNRow<R> mean, inv_std;  // batch stats actually used by the pass
    NNMat<R> xhat;
    NNMat<R> h1;  // pre-ReLU
    NNMat<R> a;   // post-ReLU
};

template <typename R>
struct ForwardCache {
    NNMat<R> y0;
    std::vector<BlockCache<R>> blocks;
    NNMat<R> out;
};

// One forward pass over `idx`-selected codes. Train mode normalizes by batch
// statistics; eval mode by running statistics. Running stats move only when
// update_running is set (the optimizer path), never during loss probing.
template <typename R>
void nn_forward_batch(NNParamsT<R>& p, const CodeArray& codes,
                      const std::uint32_t* idx, std::size_t bs, bool train,
                      bool update_running, ForwardCache<R>& cache) {
    CODEQ_REQUIRE(codes.m == p.m && (std::size_t{1} << codes.bits) == p.ksub,
                  "nn_forward: codes incompatible with LUT shape");
    CODEQ_REQUIRE(!train || bs >= 2,
                  "nn_forward: train mode needs batch size >= 2 (batchnorm)");

    // The LUT sum accumulates in 64-bit regardless of R so that the
    // block-free network reproduces aq_decode bit for bit.
    cache.y0.resize(bs, p.dim);
    std::vector<double> acc(p.dim);
    for (std::size_t r = 0; r < bs; ++r) {
        std::size_t row = idx ? idx[r] : r;
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::size_t sub = 0; sub < p.m; ++sub) {
            const R* lrow = p.lut.data() + (sub * p.ksub + codes.get(row, sub)) * p.dim;
            for (std::size_t j = 0; j < p.dim; ++j) {
                acc[j] += static_cast<double>(lrow[j]);
            }
        }
        for (std::size_t j = 0; j < p.dim; ++j) {
            cache.y0(r, j) = static_cast<R>(acc[j]);
        }
    }

    cache.blocks.resize(p.blocks.size());
    NNMat<R> y = cache.y0;
    for (std::size_t bi = 0; bi < p.blocks.size(); ++bi) {
        auto& blk = p.blocks[bi];
        auto& c = cache.blocks[bi];
        c.y_in = y;
        if (train) {
            c.mean = c.y_in.colwise().mean();
            NNRow<R> var =
                    (c.y_in.rowwise() - c.mean).array().square().colwise().mean().matrix();
            c.inv_std = (var.array() + static_cast<R>(kBatchNormEps)).rsqrt().matrix();
            if (update_running) {
                R mom = static_cast<R>(kBatchNormMomentum);
                R unbias = static_cast<R>(bs) / static_cast<R>(bs - 1);
                blk.bn_running_mean = (1 - mom) * blk.bn_running_mean + mom * c.mean;
                blk.bn_running_var =
                        (1 - mom) * blk.bn_running_var + mom * unbias * var;
            }
        } else {
            c.mean = blk.bn_running_mean;
            c.inv_std = (blk.bn_running_var.array() + static_cast<R>(kBatchNormEps))
                                .rsqrt()
                                .matrix();
        }
        c.xhat = ((c.y_in.rowwise() - c.mean).array().rowwise() * c.inv_std.array())
                         .matrix();
        NNMat<R> z = ((c.xhat.array().rowwise() * blk.bn_gamma.array()).rowwise() +
                      blk.bn_beta.array())
                             .matrix();
        c.h1 = (z * blk.w1).rowwise() + blk.b1;
        c.a = c.h1.cwiseMax(static_cast<R>(0));
        y = (c.a * blk.w2).rowwise() + blk.b2;
    }
    cache.out = std::move(y);
}

// Backpropagates d(loss)/d(out) through the cached pass; gradients are
// accumulated into `g` (same shapes as the parameters).
template <typename R>
void nn_backward_batch(const NNParamsT<R>& p, const CodeArray& codes,
                       const std::uint32_t* idx, std::size_t bs,
                       const ForwardCache<R>& cache, const NNMat<R>& dout,
                       NNParamsT<R>& g) {
    NNMat<R> dy = dout;
    const R bsr = static_cast<R>(bs);
    for (std::size_t bi = p.blocks.size(); bi-- > 0;) {
        const auto& blk = p.blocks[bi];
        const auto& c = cache.blocks[bi];
        auto& gb = g.blocks[bi];

        gb.w2 += c.a.transpose() * dy;
        gb.b2 += dy.colwise().sum();
        NNMat<R> da = dy * blk.w2.transpose();
        NNMat<R> dh1 =
                ((c.h1.array() > 0).template cast<R>() * da.array()).matrix();
        NNMat<R> z = ((c.xhat.array().rowwise() * blk.bn_gamma.array()).rowwise() +
                      blk.bn_beta.array())
                             .matrix();
        gb.w1 += z.transpose() * dh1;
        gb.b1 += dh1.colwise().sum();
        NNMat<R> dz = dh1 * blk.w1.transpose();

        gb.bn_gamma += (dz.array() * c.xhat.array()).colwise().sum().matrix();
        gb.bn_beta += dz.colwise().sum();

        NNMat<R> dxhat = (dz.array().rowwise() * blk.bn_gamma.array()).matrix();
        NNMat<R> centered = c.y_in.rowwise() - c.mean;
        NNRow<R> inv3 = c.inv_std.array().cube().matrix();
        NNRow<R> dvar = (static_cast<R>(-0.5) *
                         (dxhat.array() * centered.array()).colwise().sum() *
                         inv3.array())
                                .matrix();
        NNRow<R> dmean =
                (-(dxhat.array().colwise().sum() * c.inv_std.array()) +
                 dvar.array() * (static_cast<R>(-2.0) / bsr) *
                         centered.array().colwise().sum())
                        .matrix();
        dy = ((dxhat.array().rowwise() * c.inv_std.array()) +
              (centered.array().rowwise() *
               (dvar.array() * (static_cast<R>(2.0) / bsr))))
                     .matrix();
        dy.rowwise() += dmean / bsr;
    }
    for (std::size_t r = 0; r < bs; ++r) {
        std::size_t row = idx ? idx[r] : r;
        for (std::size_t sub = 0; sub < p.m; ++sub) {
            g.lut.row(sub * p.ksub + codes.get(row, sub)) += dy.row(r);
        }
    }
}

} // namespace detail

enum class ForwardMode { train, eval };

// Whole-array forward. Train mode uses and updates batch statistics.
template <typename R>
DenseMatrix nn_forward(NNParamsT<R>& params, const CodeArray& codes,
                       ForwardMode mode) {
    detail::ForwardCache<R> cache;
    detail::nn_forward_batch(params, codes, nullptr, codes.n,
                             mode == ForwardMode::train,
                             mode == ForwardMode::train, cache);
    DenseMatrix out(codes.n, params.dim);
    for (std::size_t r = 0; r < codes.n; ++r) {
        for (std::size_t j = 0; j < params.dim; ++j) {
            out.at(r, j) = static_cast<float>(cache.out(r, j));
        }
    }
    return out;
}

// Eval-mode decode of rows [start, start+count), for chunked scans.
template <typename R>
DenseMatrix nn_decode_range(const NNParamsT<R>& params, const CodeArray& codes,
                            std::size_t start, std::size_t count) {
    CODEQ_REQUIRE(start + count <= codes.n, "nn_decode_range: out of range");
    std::vector<std::uint32_t> idx(count);
    std::iota(idx.begin(), idx.end(), static_cast<std::uint32_t>(start));
    detail::ForwardCache<R> cache;
    auto& p = const_cast<NNParamsT<R>&>(params);  // eval path never writes
    detail::nn_forward_batch(p, codes, idx.data(), count, false, false, cache);
    DenseMatrix out(count, params.dim);
    for (std::size_t r = 0; r < count; ++r) {
        for (std::size_t j = 0; j < params.dim; ++j) {
            out.at(r, j) = static_cast<float>(cache.out(r, j));
        }
    }
    return out;
}

inline double reconstruction_loss(const DenseMatrix& x, const DenseMatrix& xhat) {
    return mean_sq_error(x, xhat);
}

// Hinge on the gap between anchor-positive and anchor-negative squared
// distances in reconstruction space.
inline double triplet_loss(const float* x, const float* x_pos_recon,
                           const float* x_neg_recon, std::size_t d, double margin) {
    CODEQ_REQUIRE(margin > 0.0, "triplet_loss: margin must be > 0");
    double dp = l2_sqr(x, x_pos_recon, d);
    double dn = l2_sqr(x, x_neg_recon, d);
    return std::max(0.0, dp - dn + margin);
}

struct TripletSet {
    std::vector<std::uint32_t> pos;  // per anchor
    std::vector<std::uint32_t> neg;
    double mean_kpos_sq_dist = 0.0;  // mean squared distance to the kpos-th neighbor
};

// Exact-neighborhood mining: the positive is drawn uniformly from the kpos
// exact nearest neighbors of each anchor, the negative is the (kpos+1)-th.
// Brute force, O(n^2 d); intended for training-set scale.
inline TripletSet mine_triplets(const DenseMatrix& x, std::size_t kpos,
                                std::uint64_t seed) {
    CODEQ_REQUIRE(kpos >= 1, "mine_triplets: kpos must be >= 1");
    CODEQ_REQUIRE(x.rows > kpos + 1, "mine_triplets: need more than kpos+1 rows");
    Rng rng(seed);
    TripletSet out;
    out.pos.resize(x.rows);
    out.neg.resize(x.rows);
    std::vector<std::pair<double, std::uint32_t>> dist(x.rows - 1);
    double kth_acc = 0.0;
    for (std::size_t r = 0; r < x.rows; ++r) {
        std::size_t w = 0;
        for (std::size_t o = 0; o < x.rows; ++o) {
            if (o == r) {
                continue;
            }
            dist[w++] = {l2_sqr(x.row(r), x.row(o), x.dim),
                         static_cast<std::uint32_t>(o)};
        }
        std::partial_sort(dist.begin(), dist.begin() + kpos + 1, dist.end());
        std::uniform_int_distribution<std::size_t> pick(0, kpos - 1);
        out.pos[r] = dist[pick(rng)].second;
        out.neg[r] = dist[kpos].second;
        kth_acc += dist[kpos - 1].first;
    }
    out.mean_kpos_sq_dist = kth_acc / static_cast<double>(x.rows);
    return out;
}

struct LossConfig {
    double triplet_weight = 0.0;
    double margin = 0.1;
    const TripletSet* triplets = nullptr;  // required when triplet_weight > 0
};

struct BatchGradResult {
    double loss = 0.0;        // recon + weighted triplet
    double recon_loss = 0.0;  // recon term alone
};

namespace detail {

// Train-mode loss and gradients over one batch of anchors. With triplets the
// anchor, positive and negative codes share a single stacked forward pass
// (batchnorm statistics are computed over the stacked batch).
template <typename R>
BatchGradResult nn_batch_gradients(NNParamsT<R>& params, const CodeArray& codes,
                                      const NNMat<R>& targets,
                                      const std::uint32_t* anchors, std::size_t bs,
                                      const LossConfig& loss_cfg, bool update_running,
                                      NNParamsT<R>* grads) {
    bool triplet = loss_cfg.triplet_weight > 0.0;
    CODEQ_REQUIRE(!triplet || loss_cfg.triplets,
                  "nn_batch_gradients: triplet loss needs a mined TripletSet");
    std::vector<std::uint32_t> stacked(anchors, anchors + bs);
    if (triplet) {
        stacked.resize(3 * bs);
        for (std::size_t b = 0; b < bs; ++b) {
            stacked[bs + b] = loss_cfg.triplets->pos[anchors[b]];
            stacked[2 * bs + b] = loss_cfg.triplets->neg[anchors[b]];
        }
    }

    ForwardCache<R> cache;
    nn_forward_batch(params, codes, stacked.data(), stacked.size(), true,
                     update_running, cache);

    BatchGradResult res;
    NNMat<R> dout = NNMat<R>::Zero(stacked.size(), params.dim);
    const R two_over_bs = static_cast<R>(2.0) / static_cast<R>(bs);

    double recon_acc = 0.0;
    for (std::size_t b = 0; b < bs; ++b) {
        NNRow<R> diff = cache.out.row(b) - targets.row(b);
        recon_acc += static_cast<double>(diff.squaredNorm());
        dout.row(b) = two_over_bs * diff;
    }
    res.recon_loss = recon_acc / static_cast<double>(bs);
    res.loss = res.recon_loss;

    if (triplet) {
        double hinge_acc = 0.0;
        const R lw = static_cast<R>(loss_cfg.triplet_weight);
        for (std::size_t b = 0; b < bs; ++b) {
            NNRow<R> dpos = cache.out.row(bs + b) - targets.row(b);
            NNRow<R> dneg = cache.out.row(2 * bs + b) - targets.row(b);
            double hinge = static_cast<double>(dpos.squaredNorm()) -
                           static_cast<double>(dneg.squaredNorm()) + loss_cfg.margin;
            if (hinge > 0.0) {
                hinge_acc += hinge;
                dout.row(bs + b) += lw * two_over_bs * dpos;
                dout.row(2 * bs + b) -= lw * two_over_bs * dneg;
            }
        }
        res.loss += loss_cfg.triplet_weight * hinge_acc / static_cast<double>(bs);
    }

    if (grads) {
        nn_backward_batch(params, codes, stacked.data(), stacked.size(), cache,
                          dout, *grads);
    }
    return res;
}

} // namespace detail

// Gradients of the total loss for one batch (train-mode statistics, running
// stats untouched). `targets` holds the raw anchor vectors, row-aligned with
// `anchors`.
template <typename R>
std::pair<double, NNParamsT<R>> nn_backward(NNParamsT<R>& params,
                                            const CodeArray& codes,
                                            const DenseMatrix& targets,
                                            const std::vector<std::uint32_t>& anchors,
                                            const LossConfig& loss_cfg) {
    CODEQ_REQUIRE(targets.rows == anchors.size(), "nn_backward: target rows must match anchors");
    CODEQ_REQUIRE(targets.dim == params.dim, "nn_backward: dim mismatch");
    NNMat<R> t(anchors.size(), params.dim);
    for (std::size_t r = 0; r < anchors.size(); ++r) {
        for (std::size_t j = 0; j < params.dim; ++j) {
            t(r, j) = static_cast<R>(targets.at(r, j));
        }
    }
    auto grads = NNParamsT<R>::shaped(params.m, params.ksub, params.dim,
                                      params.hidden, params.blocks.size());
    auto res = detail::nn_batch_gradients(params, codes, t, anchors.data(),
                                          anchors.size(), loss_cfg, false, &grads);
    return {res.loss, std::move(grads)};
}

// Same loss with no gradient computation; the pure function used by the
// finite-difference checks.
template <typename R>
double nn_training_loss(NNParamsT<R>& params, const CodeArray& codes,
                        const DenseMatrix& targets,
                        const std::vector<std::uint32_t>& anchors,
                        const LossConfig& loss_cfg) {
    NNMat<R> t(anchors.size(), params.dim);
    for (std::size_t r = 0; r < anchors.size(); ++r) {
        for (std::size_t j = 0; j < params.dim; ++j) {
            t(r, j) = static_cast<R>(targets.at(r, j));
        }
    }
    auto res = detail::nn_batch_gradients<R>(params, codes, t, anchors.data(),
                                             anchors.size(), loss_cfg, false, nullptr);
    return res.loss;
}

} // namespace codeq
