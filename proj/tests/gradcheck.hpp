#pragma once
// Central-finite-difference gradient check of the full loss path
// (forward -> per-task cross entropy -> fixed-weight combination) against
// the analytic backward pass, in double precision.

#include <cmath>
#include <string>
#include <vector>

#include "actigen/model.hpp"
#include "actigen/trainer.hpp"

namespace gradcheck {

struct Result {
    double max_rel = 0.0;
    std::string worst_tensor;
    size_t params_checked = 0;
};

inline double loss_value(const actigen::ModelParams<double>& params,
                         const std::vector<uint16_t>& bins, int batch,
                         const std::array<double, 3>& alpha, bool training, uint64_t dropout_seed) {
    actigen::ForwardCache<double> cache;
    if (training) {
        actigen::Rng rng(dropout_seed);  // reseeded per evaluation: identical masks
        actigen::forward(bins.data(), batch, params, true, &rng, cache);
    } else {
        actigen::forward(bins.data(), batch, params, false, nullptr, cache);
    }
    const auto task = actigen::combined_loss_grad<double>(cache, bins.data(), alpha, nullptr);
    return actigen::combine(task, alpha);
}

// h = 1e-4 in double keeps truncation ~1e-9 and roundoff ~1e-12: both far
// below the 1e-4 acceptance bound.
inline Result run(const actigen::ModelConfig& cfg, uint64_t seed, bool training = false,
                  double h = 1e-4) {
    const int batch = 2;
    auto params = actigen::init_params<double>(cfg, seed);
    actigen::Rng bin_rng(seed + 1);
    std::vector<uint16_t> bins(static_cast<size_t>(batch) * cfg.seq_len * actigen::kNumChannels);
    for (auto& b : bins)
        b = static_cast<uint16_t>(bin_rng.below(static_cast<uint64_t>(cfg.num_bins)));
    const std::array<double, 3> alpha{0.6, 0.3, std::sqrt(1.0 - 0.36 - 0.09)};
    const uint64_t dropout_seed = seed + 2;

    actigen::ForwardCache<double> cache;
    std::vector<double> dlogits, analytic;
    if (training) {
        actigen::Rng rng(dropout_seed);
        actigen::forward(bins.data(), batch, params, true, &rng, cache);
    } else {
        actigen::forward(bins.data(), batch, params, false, nullptr, cache);
    }
    (void)actigen::combined_loss_grad<double>(cache, bins.data(), alpha, &dlogits);
    actigen::backward(cache, dlogits.data(), params, analytic);

    Result result;
    result.params_checked = params.values.size();
    for (size_t i = 0; i < params.values.size(); ++i) {
        const double orig = params.values[i];
        params.values[i] = orig + h;
        const double up = loss_value(params, bins, batch, alpha, training, dropout_seed);
        params.values[i] = orig - h;
        const double dn = loss_value(params, bins, batch, alpha, training, dropout_seed);
        params.values[i] = orig;
        const double fd = (up - dn) / (2.0 * h);
        const double denom = std::max(1e-6, std::abs(analytic[i]) + std::abs(fd));
        const double rel = std::abs(analytic[i] - fd) / denom;
        if (rel > result.max_rel) {
            result.max_rel = rel;
            result.worst_tensor = params.layout.tensor_at(i).name;
        }
    }
    return result;
}

}  // namespace gradcheck
