#pragma once

#include <string>
#include <vector>

#include "codeq/nn_decoder.hpp"

namespace codeq {

// Training hyperparameters. The defaults are the fixed operating point:
// 300 epochs, batches of 256, Adam at lr 5e-4 with a halve-on-plateau
// schedule and no weight decay.
struct TrainConfig {
    std::size_t epochs = 300;
    std::size_t batch_size = 256;
    double lr = 5e-4;
    double lr_decay = 0.5;
    std::size_t plateau_patience = 10;
    double min_lr = 1e-6;
    double weight_decay = 0.0;
    double triplet_weight = 0.0;
    double margin = 0.0;     // <= 0: 0.1 x mean squared kpos-th neighbor distance
    std::size_t kpos = 10;
    std::uint64_t seed = 0;
    std::size_t hidden = 0;      // 0: 2 * d
    std::size_t block_count = 1;
    std::string optimizer = "adam";
    double init_lambda = -1.0;   // < 0: scale-aware default ridge weight
};

struct EpochStats {
    std::size_t epoch = 0;   // 0 is the pre-training state
    double train_mse = 0.0;  // epoch 0: full-set eval; later: mean batch loss
    double val_mse = 0.0;
    double lr = 0.0;
};

struct TrainResult {
    NNDecoderParams params;  // best-validation snapshot
    std::vector<EpochStats> history;
    bool diverged = false;
};

namespace detail {

template <typename R>
class Optimizer {
public:
    Optimizer(const std::string& kind, double lr, double weight_decay)
            : lr_(lr), weight_decay_(weight_decay) {
        if (kind == "adam") {
            kind_ = Kind::adam;
        } else if (kind == "sgd") {
            kind_ = Kind::sgd;
        } else if (kind == "rmsprop") {
            kind_ = Kind::rmsprop;
        } else if (kind == "adadelta") {
            kind_ = Kind::adadelta;
        } else {
            fail("Optimizer: unknown kind '", kind, "'");
        }
    }

    void set_lr(double lr) { lr_ = lr; }
    double lr() const { return lr_; }

    void step(NNParamsT<R>& params, NNParamsT<R>& grads) {
        ++t_;
        // pair the parameter and gradient tensors by traversal order
        std::vector<std::pair<R*, Eigen::Index>> ps, gs;
        visit_trainable(params, [&](auto& t) { ps.emplace_back(t.data(), t.size()); });
        visit_trainable(grads, [&](auto& t) { gs.emplace_back(t.data(), t.size()); });
        for (std::size_t i = 0; i < ps.size(); ++i) {
            sizes_slot(i, ps[i].second);
            update_tensor(i, ps[i].first, gs[i].first, ps[i].second);
        }
    }

private:
    enum class Kind { adam, sgd, rmsprop, adadelta };

    void sizes_slot(std::size_t slot, Eigen::Index n) {
        if (slot >= s1_.size()) {
            s1_.resize(slot + 1);
            s2_.resize(slot + 1);
        }
        if (s1_[slot].size() != n) {
            s1_[slot] = Eigen::Matrix<R, Eigen::Dynamic, 1>::Zero(n);
            s2_[slot] = Eigen::Matrix<R, Eigen::Dynamic, 1>::Zero(n);
        }
    }

    void update_tensor(std::size_t slot, R* p_data, const R* g_data,
                       Eigen::Index n) {
        Eigen::Map<Eigen::Matrix<R, Eigen::Dynamic, 1>> pv(p_data, n);
        Eigen::Matrix<R, Eigen::Dynamic, 1> g =
                Eigen::Map<const Eigen::Matrix<R, Eigen::Dynamic, 1>>(g_data, n);
        if (weight_decay_ > 0.0) {
            g += static_cast<R>(weight_decay_) * pv;
        }
        auto& s1 = s1_[slot];
        auto& s2 = s2_[slot];
        const R lr = static_cast<R>(lr_);
        switch (kind_) {
            case Kind::adam: {
                const R b1 = static_cast<R>(0.9), b2 = static_cast<R>(0.999);
                const R eps = static_cast<R>(1e-8);
                s1 = b1 * s1 + (1 - b1) * g;
                s2 = b2 * s2 + (1 - b2) * g.cwiseProduct(g);
                R c1 = 1 - std::pow(b1, static_cast<R>(t_));
                R c2 = 1 - std::pow(b2, static_cast<R>(t_));
                pv.array() -= lr * (s1.array() / c1) /
                              ((s2.array() / c2).sqrt() + eps);
                break;
            }
            case Kind::sgd: {
                const R mom = static_cast<R>(0.9);
                s1 = mom * s1 + g;
                pv -= lr * s1;
                break;
            }
            case Kind::rmsprop: {
                const R alpha = static_cast<R>(0.99), eps = static_cast<R>(1e-8);
                s2 = alpha * s2 + (1 - alpha) * g.cwiseProduct(g);
                pv.array() -= lr * g.array() / (s2.array().sqrt() + eps);
                break;
            }
            case Kind::adadelta: {
                const R rho = static_cast<R>(0.9), eps = static_cast<R>(1e-6);
                s2 = rho * s2 + (1 - rho) * g.cwiseProduct(g);
                Eigen::Matrix<R, Eigen::Dynamic, 1> delta =
                        ((s1.array() + eps).sqrt() / (s2.array() + eps).sqrt() *
                         g.array())
                                .matrix();
                s1 = rho * s1 + (1 - rho) * delta.cwiseProduct(delta);
                pv -= lr * delta;
                break;
            }
        }
    }

    Kind kind_ = Kind::adam;
    double lr_;
    double weight_decay_;
    long t_ = 0;
    std::vector<Eigen::Matrix<R, Eigen::Dynamic, 1>> s1_, s2_;
};

// Identity-pass block init: with h = 2d the FC pair reproduces its input
// exactly (ReLU split into positive and negative parts), and gamma/beta set
// to the input statistics make batchnorm a near-no-op, so the whole network
// starts out computing the additive-LUT reconstruction.
template <typename R>
void init_blocks(NNParamsT<R>& p, const std::vector<double>& y0_mean,
                 const std::vector<double>& y0_var, Rng& rng) {
    bool identity = p.hidden == 2 * p.dim;
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    for (auto& blk : p.blocks) {
        for (std::size_t j = 0; j < p.dim; ++j) {
            blk.bn_gamma(j) = static_cast<R>(std::sqrt(y0_var[j] + kBatchNormEps));
            blk.bn_beta(j) = static_cast<R>(y0_mean[j]);
            blk.bn_running_mean(j) = static_cast<R>(y0_mean[j]);
            blk.bn_running_var(j) = static_cast<R>(y0_var[j]);
        }
        if (identity) {
            blk.w1.setZero();
            blk.w2.setZero();
            for (std::size_t j = 0; j < p.dim; ++j) {
                blk.w1(j, j) = static_cast<R>(1);
                blk.w1(j, p.dim + j) = static_cast<R>(-1);
                blk.w2(j, j) = static_cast<R>(1);
                blk.w2(p.dim + j, j) = static_cast<R>(-1);
            }
        } else {
            double lim1 = std::sqrt(6.0 / static_cast<double>(p.dim + p.hidden));
            for (Eigen::Index i = 0; i < blk.w1.size(); ++i) {
                blk.w1.data()[i] = static_cast<R>(uni(rng) * lim1);
            }
            for (Eigen::Index i = 0; i < blk.w2.size(); ++i) {
                blk.w2.data()[i] = static_cast<R>(uni(rng) * lim1);
            }
        }
        blk.b1.setZero();
        blk.b2.setZero();
    }
}

} // namespace detail

// Eval-mode reconstruction MSE over a whole code array, chunked.
template <typename R>
double nn_eval_mse(const NNParamsT<R>& params, const CodeArray& codes,
                   const DenseMatrix& x, std::size_t chunk = 8192) {
    CODEQ_REQUIRE(codes.n == x.rows, "nn_eval_mse: row mismatch");
    double acc = 0.0;
    for (std::size_t start = 0; start < codes.n; start += chunk) {
        std::size_t count = std::min(chunk, codes.n - start);
        DenseMatrix rec = nn_decode_range(params, codes, start, count);
        for (std::size_t r = 0; r < count; ++r) {
            acc += l2_sqr(x.row(start + r), rec.row(r), x.dim);
        }
    }
    return acc / static_cast<double>(codes.n);
}

// Trains the decoder on fixed codes: LUT initialized from the closed-form
// additive fit, minibatch descent on reconstruction loss (plus an optional
// triplet term), halve-on-plateau learning-rate schedule driven by the
// validation loss. Returns the best-validation parameters and the per-epoch
// loss history. A non-finite loss stops training and flags divergence.
inline TrainResult train_decoder(const CodeArray& codes_train, const DenseMatrix& x_train,
                                 const CodeArray& codes_val, const DenseMatrix& x_val,
                                 const TrainConfig& cfg) {
    CODEQ_REQUIRE(codes_train.n == x_train.rows, "train_decoder: train rows misaligned");
    CODEQ_REQUIRE(codes_val.n == x_val.rows, "train_decoder: val rows misaligned");
    CODEQ_REQUIRE(codes_val.n > 0, "train_decoder: empty validation set");
    CODEQ_REQUIRE(cfg.batch_size >= 2, "train_decoder: batch size must be >= 2");
    CODEQ_REQUIRE(codes_train.n >= cfg.batch_size,
                  "train_decoder: fewer training rows than one batch");

    const std::size_t d = x_train.dim;
    const std::size_t ksub = std::size_t{1} << codes_train.bits;
    const std::size_t hidden = cfg.hidden ? cfg.hidden : 2 * d;

    double lambda = cfg.init_lambda >= 0.0
                            ? cfg.init_lambda
                            : aq_default_lambda(codes_train.n, ksub);
    DecoderLUT lut0 = aq_fit(codes_train, x_train, lambda);

    auto params = NNDecoderParams::shaped(codes_train.m, ksub, d, hidden,
                                          cfg.block_count);
    for (std::size_t rowi = 0; rowi < lut0.m * lut0.ksub; ++rowi) {
        for (std::size_t j = 0; j < d; ++j) {
            params.lut(rowi, j) = lut0.tables[rowi * d + j];
        }
    }

    Rng rng(cfg.seed);
    if (cfg.block_count > 0) {
        DenseMatrix y0 = aq_decode(lut0, codes_train);
        std::vector<double> mean(d, 0.0), var(d, 0.0);
        for (std::size_t r = 0; r < y0.rows; ++r) {
            for (std::size_t j = 0; j < d; ++j) {
                mean[j] += y0.at(r, j);
            }
        }
        for (std::size_t j = 0; j < d; ++j) {
            mean[j] /= static_cast<double>(y0.rows);
        }
        for (std::size_t r = 0; r < y0.rows; ++r) {
            for (std::size_t j = 0; j < d; ++j) {
                double c = y0.at(r, j) - mean[j];
                var[j] += c * c;
            }
        }
        for (std::size_t j = 0; j < d; ++j) {
            var[j] /= static_cast<double>(y0.rows);
        }
        detail::init_blocks(params, mean, var, rng);
    }

    LossConfig loss_cfg;
    TripletSet triplets;
    if (cfg.triplet_weight > 0.0) {
        triplets = mine_triplets(x_train, cfg.kpos, cfg.seed + 1);
        loss_cfg.triplet_weight = cfg.triplet_weight;
        loss_cfg.margin = cfg.margin > 0.0
                                  ? cfg.margin
                                  : 0.1 * triplets.mean_kpos_sq_dist;
        loss_cfg.triplets = &triplets;
    }

    detail::Optimizer<float> opt(cfg.optimizer, cfg.lr, cfg.weight_decay);
    auto grads = NNDecoderParams::shaped(params.m, params.ksub, d, hidden,
                                         cfg.block_count);

    TrainResult result;
    result.history.push_back({0, nn_eval_mse(params, codes_train, x_train),
                              nn_eval_mse(params, codes_val, x_val), cfg.lr});
    result.params = params;
    double best_val = result.history.back().val_mse;
    std::size_t stall = 0;

    NNMat<float> targets(cfg.batch_size, d);
    std::vector<std::uint32_t> order(codes_train.n);
    std::iota(order.begin(), order.end(), 0u);

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double loss_acc = 0.0;
        std::size_t batches = 0;
        bool finite = true;
        // last partial batch dropped: batchnorm needs full-size batches
        for (std::size_t start = 0; start + cfg.batch_size <= codes_train.n;
             start += cfg.batch_size) {
            for (std::size_t b = 0; b < cfg.batch_size; ++b) {
                const float* row = x_train.row(order[start + b]);
                for (std::size_t j = 0; j < d; ++j) {
                    targets(b, j) = row[j];
                }
            }
            visit_trainable(grads, [](auto& g) { g.setZero(); });
            auto res = detail::nn_batch_gradients(params, codes_train, targets,
                                                  order.data() + start,
                                                  cfg.batch_size, loss_cfg, true,
                                                  &grads);
            if (!std::isfinite(res.loss)) {
                finite = false;
                break;
            }
            opt.step(params, grads);
            if (!params.all_finite()) {
                finite = false;
                break;
            }
            loss_acc += res.recon_loss;
            ++batches;
        }
        double train_mse = batches ? loss_acc / static_cast<double>(batches)
                                   : std::numeric_limits<double>::quiet_NaN();
        double val_mse = finite ? nn_eval_mse(params, codes_val, x_val)
                                : std::numeric_limits<double>::quiet_NaN();
        result.history.push_back({epoch, train_mse, val_mse, opt.lr()});
        if (!finite || !std::isfinite(train_mse) || !std::isfinite(val_mse)) {
            result.diverged = true;
            break;
        }
        if (val_mse < best_val) {
            best_val = val_mse;
            result.params = params;
            stall = 0;
        } else if (++stall >= cfg.plateau_patience) {
            opt.set_lr(std::max(opt.lr() * cfg.lr_decay, cfg.min_lr));
            stall = 0;
        }
    }
    return result;
}

} // namespace codeq
