#pragma once

#include <filesystem>
#include <optional>
#include <set>

#include "codeq/config.hpp"
#include "codeq/csv.hpp"
#include "codeq/itq.hpp"
#include "codeq/nn_train.hpp"
#include "codeq/opq.hpp"
#include "codeq/search.hpp"
#include "codeq/serialize.hpp"
#include "codeq/synthetic.hpp"
#include "codeq/vecs_io.hpp"

namespace codeq {

// ---------------------------------------------------------------------------
// Data resolution: explicit fvecs/bvecs paths when provided, otherwise the
// bundled synthetic Gaussian mixture. Ground truth is loaded from an ivecs
// file when given and computed exactly otherwise.
// ---------------------------------------------------------------------------

struct DataBundle {
    DenseMatrix train;
    DenseMatrix base;
    DenseMatrix queries;
    std::vector<std::uint32_t> gt;
};

namespace detail {

inline void config_data_keys(std::set<std::string>& keys) {
    keys.insert({"train", "base", "query", "gt", "d", "components", "n_train",
                 "n_base", "n_query", "data_seed", "max_train"});
}

inline void config_nn_keys(std::set<std::string>& keys) {
    keys.insert({"nn_epochs", "nn_batch_size", "nn_lr", "nn_lr_decay",
                 "nn_patience", "nn_min_lr", "nn_weight_decay",
                 "nn_triplet_weight", "nn_margin", "nn_kpos", "nn_hidden",
                 "nn_blocks", "nn_optimizer", "nn_val_fraction", "nn_init_lambda"});
    keys.insert({"encoder", "m", "b", "encoder_iters", "opq_iters", "itq_iters",
                 "seed", "name", "out"});
}

} // namespace detail

inline DataBundle load_experiment_data(const Config& cfg) {
    DataBundle data;
    if (cfg.has("train")) {
        data.train = read_vecs_auto(cfg.require_str("train"));
        data.base = read_vecs_auto(cfg.require_str("base"));
        data.queries = read_vecs_auto(cfg.require_str("query"));
        std::uint64_t max_train = cfg.get_u64("max_train", 0);
        if (max_train > 0 && data.train.rows > max_train) {
            data.train = data.train.slice_rows(0, max_train);
        }
    } else {
        MixtureSpec spec;
        spec.dim = cfg.get_u64("d", 32);
        spec.components = cfg.get_u64("components", 32);
        std::uint64_t seed = cfg.get_u64("data_seed", 7);
        GaussianMixture mix(spec, seed);
        data.train = mix.sample(cfg.get_u64("n_train", 20000), seed + 1);
        data.base = mix.sample(cfg.get_u64("n_base", 20000), seed + 2);
        data.queries = mix.sample(cfg.get_u64("n_query", 1000), seed + 3);
    }
    if (cfg.has("gt")) {
        IntTable t = read_ivecs(cfg.require_str("gt"));
        CODEQ_REQUIRE(t.rows == data.queries.rows,
                      "load_experiment_data: ground-truth rows != query rows");
        data.gt.resize(t.rows);
        for (std::size_t r = 0; r < t.rows; ++r) {
            data.gt[r] = static_cast<std::uint32_t>(t.row(r)[0]);
        }
    } else {
        data.gt = compute_ground_truth(data.base, data.queries);
    }
    return data;
}

inline TrainConfig train_config_from(const Config& cfg, std::uint64_t seed) {
    TrainConfig tc;
    tc.epochs = cfg.get_u64("nn_epochs", tc.epochs);
    tc.batch_size = cfg.get_u64("nn_batch_size", tc.batch_size);
    tc.lr = cfg.get_f64("nn_lr", tc.lr);
    tc.lr_decay = cfg.get_f64("nn_lr_decay", tc.lr_decay);
    tc.plateau_patience = cfg.get_u64("nn_patience", tc.plateau_patience);
    tc.min_lr = cfg.get_f64("nn_min_lr", tc.min_lr);
    tc.weight_decay = cfg.get_f64("nn_weight_decay", tc.weight_decay);
    tc.triplet_weight = cfg.get_f64("nn_triplet_weight", tc.triplet_weight);
    tc.margin = cfg.get_f64("nn_margin", tc.margin);
    tc.kpos = cfg.get_u64("nn_kpos", tc.kpos);
    tc.hidden = cfg.get_u64("nn_hidden", tc.hidden);
    tc.block_count = cfg.get_u64("nn_blocks", tc.block_count);
    tc.optimizer = cfg.get_str("nn_optimizer", tc.optimizer);
    tc.init_lambda = cfg.get_f64("nn_init_lambda", tc.init_lambda);
    tc.seed = seed;
    return tc;
}

inline void write_loss_history_csv(const std::string& path,
                                   const std::vector<EpochStats>& history) {
    CsvWriter w(path, {"epoch", "train_mse", "val_mse", "lr"});
    for (const auto& e : history) {
        w.row({std::to_string(e.epoch), fmt_g(e.train_mse), fmt_g(e.val_mse),
               fmt_g(e.lr)});
    }
}

inline void export_results_csv(const std::string& path, const SearchResultSet& res) {
    CsvWriter w(path, {"query_id", "rank", "db_id", "distance"});
    for (std::size_t q = 0; q < res.queries.size(); ++q) {
        const auto& qr = res.queries[q];
        for (std::size_t i = 0; i < qr.ids.size(); ++i) {
            w.row({std::to_string(q), std::to_string(i),
                   std::to_string(qr.ids[i]), fmt_g(qr.dists[i])});
        }
    }
}

// ---------------------------------------------------------------------------
// Encoder / decoder plumbing shared by the drivers.
// ---------------------------------------------------------------------------

// A trained encoder plus everything needed to produce reconstructions.
struct TrainedStack {
    std::string encoder_kind;  // pq | opq | itq
    std::optional<PQModel> pq;
    std::optional<ITQModel> itq;
    CodeArray base_codes;
    CodeArray train_codes;
};

inline TrainedStack train_and_encode(const Config& cfg, const DataBundle& data,
                                     std::uint64_t seed) {
    TrainedStack s;
    s.encoder_kind = cfg.get_str("encoder", "pq");
    std::size_t m = cfg.get_u64("m", 8);
    std::size_t b = cfg.get_u64("b", 8);
    std::size_t iters = cfg.get_u64("encoder_iters", 25);
    if (s.encoder_kind == "pq") {
        s.pq = pq_train(data.train, m, b, iters, seed);
    } else if (s.encoder_kind == "opq") {
        s.pq = opq_train(data.train, m, b, cfg.get_u64("opq_iters", 20), seed, iters);
    } else if (s.encoder_kind == "itq") {
        s.itq = itq_train(data.train, m, cfg.get_u64("itq_iters", 50), seed);
    } else {
        fail("train_and_encode: unknown encoder '", s.encoder_kind, "'");
    }
    if (s.pq) {
        s.base_codes = pq_encode(*s.pq, data.base);
        s.train_codes = pq_encode(*s.pq, data.train);
    } else {
        s.base_codes = binary_encode(*s.itq, data.base);
        s.train_codes = binary_encode(*s.itq, data.train);
    }
    return s;
}

// Reconstruction source for chunked scans: one of the four decoder families
// applied to the base codes.
class DecoderHandle {
public:
    enum class Kind { natural, topline, aq, nn };

    static DecoderHandle natural(const TrainedStack& s) {
        DecoderHandle h;
        h.kind_ = Kind::natural;
        h.stack_ = &s;
        return h;
    }
    static DecoderHandle topline(const TrainedStack& s, ToplineDecoder dec) {
        DecoderHandle h;
        h.kind_ = Kind::topline;
        h.stack_ = &s;
        h.topline_ = std::move(dec);
        return h;
    }
    static DecoderHandle aq(const TrainedStack& s, DecoderLUT lut) {
        DecoderHandle h;
        h.kind_ = Kind::aq;
        h.stack_ = &s;
        h.lut_ = std::move(lut);
        return h;
    }
    static DecoderHandle nn(const TrainedStack& s, NNDecoderParams params) {
        DecoderHandle h;
        h.kind_ = Kind::nn;
        h.stack_ = &s;
        h.nn_ = std::move(params);
        return h;
    }

    Kind kind() const { return kind_; }
    const NNDecoderParams& nn_params() const { return *nn_; }

    // Decodes rows [start, start+count) of `codes`.
    DenseMatrix decode_range(const CodeArray& codes, std::size_t start,
                             std::size_t count) const {
        CodeArray sub = slice_codes(codes, start, count);
        switch (kind_) {
            case Kind::natural:
                return stack_->pq ? natural_decode(*stack_->pq, sub)
                                  : binary_naive_decode(*stack_->itq, sub);
            case Kind::topline:
                return topline_decode(*topline_, sub);
            case Kind::aq:
                return aq_decode(*lut_, sub);
            case Kind::nn:
                return nn_decode_range(*nn_, sub, 0, sub.n);
        }
        fail("DecoderHandle: bad kind");
    }

    DenseMatrix decode_all(const CodeArray& codes) const {
        return decode_range(codes, 0, codes.n);
    }

    static CodeArray slice_codes(const CodeArray& codes, std::size_t start,
                                 std::size_t count) {
        CODEQ_REQUIRE(start + count <= codes.n, "slice_codes: out of range");
        CodeArray sub(count, codes.m, codes.bits);
        std::size_t cs = codes.code_size();
        std::copy_n(codes.payload.data() + start * cs, count * cs,
                    sub.payload.data());
        return sub;
    }

    static CodeArray gather_codes(const CodeArray& codes,
                                  const std::vector<std::uint32_t>& ids) {
        CodeArray sub(ids.size(), codes.m, codes.bits);
        std::size_t cs = codes.code_size();
        for (std::size_t i = 0; i < ids.size(); ++i) {
            std::copy_n(codes.payload.data() + ids[i] * cs, cs,
                        sub.payload.data() + i * cs);
        }
        return sub;
    }

private:
    Kind kind_ = Kind::natural;
    const TrainedStack* stack_ = nullptr;
    std::optional<ToplineDecoder> topline_;
    std::optional<DecoderLUT> lut_;
    std::optional<NNDecoderParams> nn_;
};

// Splits the training rows into a training part and a validation tail for
// decoder training.
struct TrainValSplit {
    DenseMatrix x_train, x_val;
    CodeArray c_train, c_val;
};

inline TrainValSplit split_train_val(const DenseMatrix& x, const CodeArray& codes,
                                     double val_fraction) {
    std::size_t nval = std::max<std::size_t>(
            1, static_cast<std::size_t>(static_cast<double>(x.rows) * val_fraction));
    CODEQ_REQUIRE(nval < x.rows, "split_train_val: validation fraction too large");
    std::size_t ntrain = x.rows - nval;
    TrainValSplit s;
    s.x_train = x.slice_rows(0, ntrain);
    s.x_val = x.slice_rows(ntrain, x.rows);
    s.c_train = DecoderHandle::slice_codes(codes, 0, ntrain);
    s.c_val = DecoderHandle::slice_codes(codes, ntrain, nval);
    return s;
}

// Builds a decoder by name over a trained stack. "natural" is free; the
// others fit on the (already encoded) training split.
inline DecoderHandle fit_decoder(const std::string& name, const Config& cfg,
                                 const TrainedStack& stack, const DataBundle& data,
                                 std::uint64_t seed,
                                 std::vector<EpochStats>* nn_history = nullptr) {
    if (name == "natural") {
        return DecoderHandle::natural(stack);
    }
    if (name == "topline") {
        return DecoderHandle::topline(
                stack, topline_fit(stack.train_codes, data.train,
                                   stack.pq ? &*stack.pq : nullptr));
    }
    if (name == "aq") {
        double lambda = cfg.get_f64("aq_lambda", -1.0);
        if (lambda < 0.0) {
            lambda = aq_default_lambda(stack.train_codes.n,
                                       std::size_t{1} << stack.train_codes.bits);
        }
        return DecoderHandle::aq(stack, aq_fit(stack.train_codes, data.train, lambda));
    }
    if (name == "nn") {
        TrainValSplit split = split_train_val(data.train, stack.train_codes,
                                              cfg.get_f64("nn_val_fraction", 0.1));
        TrainConfig tc = train_config_from(cfg, seed);
        TrainResult res = train_decoder(split.c_train, split.x_train, split.c_val,
                                        split.x_val, tc);
        CODEQ_REQUIRE(!res.diverged, "fit_decoder: nn training diverged");
        if (nn_history) {
            *nn_history = res.history;
        }
        return DecoderHandle::nn(stack, std::move(res.params));
    }
    fail("fit_decoder: unknown decoder '", name, "'");
}

// Full-database ranking with a decoder: the natural PQ decoder goes through
// the compressed-domain LUT scan, everything else through chunked explicit
// reconstruction.
inline SearchResultSet scan_with_decoder(const DataBundle& data,
                                         const TrainedStack& stack,
                                         const DecoderHandle& dec, std::size_t r) {
    if (dec.kind() == DecoderHandle::Kind::natural && stack.pq) {
        return adc_scan_pq(data.queries, *stack.pq, stack.base_codes, r);
    }
    return scan_decoded_chunked(
            data.queries, stack.base_codes.n, r,
            [&](std::size_t start, std::size_t count) {
                return dec.decode_range(stack.base_codes, start, count);
            });
}

// ---------------------------------------------------------------------------
// Recall experiment: train encoder, fit the requested decoders, rank the
// whole base per query, aggregate Recall@R over seeds.
// ---------------------------------------------------------------------------

struct RecallRow {
    std::string config;
    std::string encoder;
    std::string decoder;
    std::size_t r = 0;
    double recall_mean = 0.0;
    double recall_std = 0.0;
    std::size_t n_seeds = 0;
};

struct RecallExperimentResult {
    std::vector<RecallRow> rows;
};

inline const std::vector<std::string> kRecallSummaryHeader = {
        "config", "encoder", "decoder", "R", "recall_mean", "recall_std", "n_seeds"};

inline std::set<std::string> recall_experiment_keys() {
    std::set<std::string> keys;
    detail::config_data_keys(keys);
    detail::config_nn_keys(keys);
    keys.insert({"decoders", "r_list", "n_seeds", "aq_lambda"});
    return keys;
}

inline RecallExperimentResult run_recall_experiment(const Config& cfg) {
    cfg.require_known(recall_experiment_keys());
    DataBundle data = load_experiment_data(cfg);

    std::string name = cfg.get_str("name", cfg.get_str("encoder", "pq") +
                                                   std::to_string(cfg.get_u64("m", 8)) + "x" +
                                                   std::to_string(cfg.get_u64("b", 8)));
    std::vector<std::string> decoders =
            cfg.get_str_list("decoders", {"natural", "aq", "nn"});
    std::vector<std::uint64_t> r_list = cfg.get_u64_list("r_list", {1, 10, 100});
    std::size_t n_seeds = cfg.get_u64("n_seeds", 5);
    std::uint64_t seed0 = cfg.get_u64("seed", 0);
    bool binary = cfg.get_str("encoder", "pq") == "itq";

    // recalls[decoder][R] -> per-seed values
    std::map<std::string, std::map<std::uint64_t, std::vector<double>>> recalls;
    std::size_t rmax = 1;
    for (auto r : r_list) {
        rmax = std::max<std::size_t>(rmax, r);
    }

    for (std::size_t si = 0; si < n_seeds; ++si) {
        std::uint64_t seed = seed0 + si;
        TrainedStack stack = train_and_encode(cfg, data, seed);
        for (const std::string& dname : decoders) {
            SearchResultSet res;
            if (dname == "sdc") {
                CODEQ_REQUIRE(binary, "run_recall_experiment: sdc needs the itq encoder");
                CodeArray qcodes = binary_encode(*stack.itq, data.queries);
                res = sdc_scan_binary(qcodes, stack.base_codes, rmax);
            } else {
                DecoderHandle dec = fit_decoder(dname, cfg, stack, data, seed);
                res = scan_with_decoder(data, stack, dec, rmax);
            }
            for (auto r : r_list) {
                recalls[dname][r].push_back(recall_at(res, data.gt, r));
            }
        }
    }

    RecallExperimentResult out;
    for (const std::string& dname : decoders) {
        for (auto r : r_list) {
            const auto& vals = recalls[dname][r];
            double mean = 0.0;
            for (double v : vals) {
                mean += v;
            }
            mean /= static_cast<double>(vals.size());
            double var = 0.0;
            for (double v : vals) {
                var += (v - mean) * (v - mean);
            }
            double sdev = vals.size() > 1
                                  ? std::sqrt(var / static_cast<double>(vals.size() - 1))
                                  : 0.0;
            out.rows.push_back({name, cfg.get_str("encoder", "pq"), dname,
                                static_cast<std::size_t>(r), mean, sdev,
                                vals.size()});
        }
    }

    if (cfg.has("out")) {
        std::filesystem::create_directories(cfg.require_str("out"));
        CsvWriter w(cfg.require_str("out") + "/recall_summary.csv",
                    kRecallSummaryHeader);
        for (const auto& row : out.rows) {
            w.row({row.config, row.encoder, row.decoder, std::to_string(row.r),
                   fmt_g(row.recall_mean), fmt_g(row.recall_std),
                   std::to_string(row.n_seeds)});
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Preliminary experiment: train/validation MSE of k-means and PQ encoders
// with natural / topline / NN decoders across a training-set-size grid.
// ---------------------------------------------------------------------------

struct PrelimRow {
    std::string encoder;   // pq1x16 is the k-means arm
    std::string decoder;   // natural | topline | nn
    std::size_t ntrain = 0;
    double train_mse = 0.0;
    double val_mse = 0.0;
};

inline const std::vector<std::string> kPrelimHeader = {"encoder", "decoder",
                                                       "ntrain", "train_mse",
                                                       "val_mse"};

inline std::set<std::string> prelim_keys() {
    std::set<std::string> keys;
    detail::config_data_keys(keys);
    detail::config_nn_keys(keys);
    keys.insert({"arms", "ntrain_grid", "n_val"});
    return keys;
}

// "pqMxB" -> (m, b); "kmeansB" -> (1, B)
inline std::pair<std::size_t, std::size_t> parse_arm(const std::string& arm) {
    std::size_t pos = arm.find('x');
    CODEQ_REQUIRE(arm.size() > 3 && arm.substr(0, 2) == "pq" && pos != std::string::npos,
                  "parse_arm: expected pqMxB, got '", arm, "'");
    return {std::stoul(arm.substr(2, pos - 2)), std::stoul(arm.substr(pos + 1))};
}

inline std::vector<PrelimRow> run_preliminary_experiment(const Config& cfg) {
    cfg.require_known(prelim_keys());
    DataBundle data = load_experiment_data(cfg);
    std::vector<std::string> arms =
            cfg.get_str_list("arms", {"pq1x16", "pq2x8", "pq4x4"});
    std::vector<std::uint64_t> grid = cfg.get_u64_list(
            "ntrain_grid", {10000, 30000, 100000, 300000, 1000000});
    std::size_t iters = cfg.get_u64("encoder_iters", 25);
    std::uint64_t seed = cfg.get_u64("seed", 0);

    // The validation set: a held-out slice of the base sample.
    std::size_t nval = std::min<std::size_t>(cfg.get_u64("n_val", 10000),
                                             data.base.rows);
    DenseMatrix x_val = data.base.slice_rows(0, nval);

    std::vector<PrelimRow> rows;
    for (std::uint64_t ntrain : grid) {
        if (ntrain > data.train.rows) {
            continue;  // grid capped by the pool
        }
        DenseMatrix x_train = data.train.slice_rows(0, ntrain);
        for (const std::string& arm : arms) {
            auto [m, b] = parse_arm(arm);
            std::size_t ksub = std::size_t{1} << b;
            if (ksub > ntrain) {
                continue;  // cannot train 2^b centroids on fewer points
            }
            PQModel model = pq_train(x_train, m, b, iters, seed);
            CodeArray ct = pq_encode(model, x_train);
            CodeArray cv = pq_encode(model, x_val);

            DenseMatrix nat_t = natural_decode(model, ct);
            DenseMatrix nat_v = natural_decode(model, cv);
            rows.push_back({arm, "natural", ntrain, mean_sq_error(x_train, nat_t),
                            mean_sq_error(x_val, nat_v)});

            ToplineDecoder top = topline_fit(ct, x_train, &model);
            rows.push_back({arm, "topline", ntrain,
                            mean_sq_error(x_train, topline_decode(top, ct)),
                            mean_sq_error(x_val, topline_decode(top, cv))});

            if (m > 1) {
                TrainConfig tc = train_config_from(cfg, seed);
                TrainResult res = train_decoder(ct, x_train, cv, x_val, tc);
                CODEQ_REQUIRE(!res.diverged, "prelim: nn training diverged");
                rows.push_back({arm, "nn", ntrain,
                                nn_eval_mse(res.params, ct, x_train),
                                nn_eval_mse(res.params, cv, x_val)});
            }
        }
    }

    if (cfg.has("out")) {
        std::filesystem::create_directories(cfg.require_str("out"));
        CsvWriter w(cfg.require_str("out") + "/prelim.csv", kPrelimHeader);
        for (const auto& r : rows) {
            w.row({r.encoder, r.decoder, std::to_string(r.ntrain),
                   fmt_g(r.train_mse), fmt_g(r.val_mse)});
        }
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Re-ranking sweep: first-stage compressed-domain scan, second-stage exact
// re-ordering of the top L with a stronger decoder, across an L grid.
// ---------------------------------------------------------------------------

struct RerankRow {
    std::string config;
    std::size_t shortlist = 0;  // 0 is the no-reranking baseline
    std::size_t r = 0;
    double recall = 0.0;
    double scan_ms = 0.0;
    double rerank_ms = 0.0;
};

inline const std::vector<std::string> kRerankHeader = {"config", "L",      "R",
                                                       "recall", "scan_ms", "rerank_ms"};

inline std::set<std::string> rerank_keys() {
    std::set<std::string> keys;
    detail::config_data_keys(keys);
    detail::config_nn_keys(keys);
    keys.insert({"strong_decoder", "shortlist_grid", "r_list", "aq_lambda",
                 "timing_reps"});
    return keys;
}

inline std::vector<RerankRow> run_rerank_sweep(const Config& cfg) {
    cfg.require_known(rerank_keys());
    DataBundle data = load_experiment_data(cfg);
    std::uint64_t seed = cfg.get_u64("seed", 0);
    std::vector<std::uint64_t> grid = cfg.get_u64_list(
            "shortlist_grid", {2, 5, 10, 20, 50, 100, 200, 500, 1000});
    std::vector<std::uint64_t> r_list = cfg.get_u64_list("r_list", {1, 10, 100});
    std::size_t reps = cfg.get_u64("timing_reps", 5);
    std::string name = cfg.get_str("name", "rerank");

    TrainedStack stack = train_and_encode(cfg, data, seed);
    CODEQ_REQUIRE(stack.pq.has_value(), "run_rerank_sweep: first stage is the PQ scan");
    DecoderHandle strong = fit_decoder(cfg.get_str("strong_decoder", "nn"), cfg,
                                       stack, data, seed);

    std::size_t rmax = 1;
    for (auto r : r_list) {
        rmax = std::max<std::size_t>(rmax, r);
    }
    for (auto l : grid) {
        rmax = std::max<std::size_t>(rmax, l);
    }

    SearchResultSet first;
    double scan_ms = median_time_ms(
            [&] { first = adc_scan_pq(data.queries, *stack.pq, stack.base_codes, rmax); },
            reps);

    std::vector<RerankRow> rows;
    for (auto r : r_list) {
        rows.push_back({name, 0, static_cast<std::size_t>(r),
                        recall_at(first, data.gt, r), scan_ms, 0.0});
    }

    for (auto l : grid) {
        SearchResultSet reranked;
        double rerank_ms = median_time_ms(
                [&] {
                    reranked.queries.clear();
                    reranked.queries.resize(data.queries.rows);
                    for (std::size_t q = 0; q < data.queries.rows; ++q) {
                        const auto& fq = first.queries[q];
                        std::size_t take = std::min<std::size_t>(l, fq.ids.size());
                        std::vector<std::uint32_t> ids(fq.ids.begin(),
                                                       fq.ids.begin() + take);
                        CodeArray sub = DecoderHandle::gather_codes(stack.base_codes, ids);
                        DenseMatrix rec = strong.decode_all(sub);
                        reranked.queries[q] = rerank(
                                data.queries.row(q), fq,
                                [&](std::uint32_t id) {
                                    for (std::size_t i = 0; i < ids.size(); ++i) {
                                        if (ids[i] == id) {
                                            return rec.row(i);
                                        }
                                    }
                                    fail("rerank: id not in shortlist");
                                },
                                rec.dim, take);
                    }
                },
                reps);
        for (auto r : r_list) {
            rows.push_back({name, static_cast<std::size_t>(l),
                            static_cast<std::size_t>(r),
                            recall_at(reranked, data.gt, r), scan_ms, rerank_ms});
        }
    }

    if (cfg.has("out")) {
        std::filesystem::create_directories(cfg.require_str("out"));
        CsvWriter w(cfg.require_str("out") + "/rerank.csv", kRerankHeader);
        for (const auto& row : rows) {
            w.row({row.config, std::to_string(row.shortlist), std::to_string(row.r),
                   fmt_g(row.recall), fmt_g(row.scan_ms), fmt_g(row.rerank_ms)});
        }
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Sensitivity sweep: one-factor-at-a-time grids over the decoder
// hyperparameters, each run emitting its full loss history.
// ---------------------------------------------------------------------------

struct SensitivityRun {
    std::string param;
    std::string value;
    bool diverged = false;
    std::vector<EpochStats> history;
};

inline const std::vector<std::string> kSensitivityIndexHeader = {
        "run", "param", "value", "epochs", "final_train_mse", "final_val_mse",
        "diverged"};

inline std::set<std::string> sensitivity_keys() {
    std::set<std::string> keys;
    detail::config_data_keys(keys);
    detail::config_nn_keys(keys);
    keys.insert({"s_hidden", "s_blocks", "s_lr", "s_optimizer", "s_batch",
                 "s_lr_decay", "s_weight_decay"});
    return keys;
}

inline std::vector<SensitivityRun> run_sensitivity_sweep(const Config& cfg) {
    cfg.require_known(sensitivity_keys());
    DataBundle data = load_experiment_data(cfg);
    std::uint64_t seed = cfg.get_u64("seed", 0);

    TrainedStack stack = train_and_encode(cfg, data, seed);
    TrainValSplit split = split_train_val(data.train, stack.train_codes,
                                          cfg.get_f64("nn_val_fraction", 0.1));

    struct Axis {
        std::string key;
        std::vector<std::string> values;
    };
    std::vector<Axis> axes;
    for (const char* key : {"s_hidden", "s_blocks", "s_lr", "s_optimizer",
                            "s_batch", "s_lr_decay", "s_weight_decay"}) {
        if (cfg.has(key)) {
            axes.push_back({key, cfg.get_str_list(key, {})});
        }
    }
    CODEQ_REQUIRE(!axes.empty(), "run_sensitivity_sweep: no s_* grid specified");

    std::vector<SensitivityRun> runs;
    for (const Axis& axis : axes) {
        for (const std::string& value : axis.values) {
            TrainConfig tc = train_config_from(cfg, seed);
            if (axis.key == "s_hidden") {
                tc.hidden = std::stoul(value);
            } else if (axis.key == "s_blocks") {
                tc.block_count = std::stoul(value);
            } else if (axis.key == "s_lr") {
                tc.lr = std::stod(value);
            } else if (axis.key == "s_optimizer") {
                tc.optimizer = value;
            } else if (axis.key == "s_batch") {
                tc.batch_size = std::stoul(value);
            } else if (axis.key == "s_lr_decay") {
                tc.lr_decay = std::stod(value);
            } else if (axis.key == "s_weight_decay") {
                tc.weight_decay = std::stod(value);
            }
            TrainResult res = train_decoder(split.c_train, split.x_train,
                                            split.c_val, split.x_val, tc);
            runs.push_back({axis.key.substr(2), value, res.diverged,
                            std::move(res.history)});
        }
    }

    if (cfg.has("out")) {
        std::string out = cfg.require_str("out");
        std::filesystem::create_directories(out);
        CsvWriter w(out + "/sensitivity_index.csv", kSensitivityIndexHeader);
        for (std::size_t i = 0; i < runs.size(); ++i) {
            const auto& run = runs[i];
            write_loss_history_csv(out + "/loss_" + std::to_string(i) + ".csv",
                                   run.history);
            w.row({std::to_string(i), run.param, run.value,
                   std::to_string(run.history.size() - 1),
                   fmt_g(run.history.back().train_mse),
                   fmt_g(run.history.back().val_mse),
                   run.diverged ? "1" : "0"});
        }
    }
    return runs;
}

} // namespace codeq
