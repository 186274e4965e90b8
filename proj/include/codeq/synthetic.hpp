#pragma once

#include "codeq/matrix.hpp"

namespace codeq {

struct MixtureSpec {
    std::size_t dim = 32;
    std::size_t components = 32;
    double spread = 2.0;        // scale of the component means
    double factor_scale = 0.9;  // low-rank within-component structure
    double noise = 0.3;         // isotropic residual
};

// Seeded Gaussian-mixture generator. Each component carries a random
// low-rank factor matrix, so coordinates are correlated across subspaces and
// decoders that exploit inter-subspace structure have something to gain.
class GaussianMixture {
public:
    GaussianMixture(const MixtureSpec& spec, std::uint64_t seed) : spec_(spec) {
        CODEQ_REQUIRE(spec.dim >= 2 && spec.components >= 1,
                      "GaussianMixture: need dim >= 2 and components >= 1");
        Rng rng(seed);
        std::normal_distribution<double> gauss(0.0, 1.0);
        rank_ = std::max<std::size_t>(2, spec.dim / 4);
        means_.resize(spec.components * spec.dim);
        factors_.resize(spec.components * spec.dim * rank_);
        for (auto& v : means_) {
            v = spec.spread * gauss(rng);
        }
        double fs = spec.factor_scale / std::sqrt(static_cast<double>(rank_));
        for (auto& v : factors_) {
            v = fs * gauss(rng);
        }
    }

    // Draws n vectors; each call with a distinct seed gives an independent
    // but reproducible sample of the same mixture.
    DenseMatrix sample(std::size_t n, std::uint64_t seed) const {
        Rng rng(seed);
        std::normal_distribution<double> gauss(0.0, 1.0);
        std::uniform_int_distribution<std::size_t> comp(0, spec_.components - 1);
        DenseMatrix out(n, spec_.dim);
        std::vector<double> z(rank_);
        for (std::size_t r = 0; r < n; ++r) {
            std::size_t c = comp(rng);
            for (std::size_t t = 0; t < rank_; ++t) {
                z[t] = gauss(rng);
            }
            const double* mu = means_.data() + c * spec_.dim;
            const double* f = factors_.data() + c * spec_.dim * rank_;
            for (std::size_t j = 0; j < spec_.dim; ++j) {
                double acc = mu[j];
                for (std::size_t t = 0; t < rank_; ++t) {
                    acc += f[j * rank_ + t] * z[t];
                }
                acc += spec_.noise * gauss(rng);
                out.at(r, j) = static_cast<float>(acc);
            }
        }
        return out;
    }

private:
    MixtureSpec spec_;
    std::size_t rank_ = 0;
    std::vector<double> means_;
    std::vector<double> factors_;
};

} // namespace codeq
