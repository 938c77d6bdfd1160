#include "actigen/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "actigen/csv.hpp"

namespace actigen {

namespace fs = std::filesystem;

void TrainConfig::validate() const {
    if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
    if (batch_size <= 0) throw std::invalid_argument("batch_size must be positive");
    if (!(initial_lr > 0.0)) throw std::invalid_argument("initial_lr must be positive");
    if (!(decay_factor > 0.0)) throw std::invalid_argument("decay_factor must be positive");
    if (decay_interval <= 0) throw std::invalid_argument("decay_interval must be positive");
    const double sum = split_fractions[0] + split_fractions[1] + split_fractions[2];
    if (std::abs(sum - 1.0) > 1e-9)
        throw std::invalid_argument("split fractions must sum to 1");
    for (const double f : split_fractions)
        if (f < 0.0) throw std::invalid_argument("split fractions must be non-negative");
}

double lr_at_epoch(int epoch, const TrainConfig& cfg) {
    if (epoch < 0) throw std::invalid_argument("epoch must be >= 0");
    const int decays = epoch / cfg.decay_interval;
    return cfg.initial_lr / std::pow(cfg.decay_factor, static_cast<double>(decays));
}

// ---------------------------------------------------------------------------
// shake-shake weights
// ---------------------------------------------------------------------------

ShakeShakeWeights shake_from_draws(const std::array<double, 3>& draws) {
    std::array<double, 3> a{std::abs(draws[0]), std::abs(draws[1]), std::abs(draws[2])};
    const double norm = std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]);
    if (norm == 0.0) return fixed_shake_weights();
    return {{a[0] / norm, a[1] / norm, a[2] / norm}};
}

ShakeShakeWeights sample_shake_weights(Rng& rng) {
    return shake_from_draws({rng.gaussian(), rng.gaussian(), rng.gaussian()});
}

ShakeShakeWeights fixed_shake_weights() {
    const double v = 1.0 / std::sqrt(3.0);
    return {{v, v, v}};
}

// ---------------------------------------------------------------------------
// losses
// ---------------------------------------------------------------------------

template <class T>
double cross_entropy(const T* logits, int seq, int vocab, const uint16_t* next_bins) {
    if (seq < 2) throw std::invalid_argument("cross_entropy needs seq >= 2");
    double total = 0;
    for (int t = 0; t < seq - 1; ++t) {
        const uint16_t target = next_bins[t];
        if (target >= vocab)
            throw std::invalid_argument("target bin " + std::to_string(target) + " out of range");
        const T* row = logits + static_cast<size_t>(t) * vocab;
        double m = row[0];
        for (int j = 1; j < vocab; ++j) m = std::max(m, static_cast<double>(row[j]));
        double z = 0;
        for (int j = 0; j < vocab; ++j) z += std::exp(static_cast<double>(row[j]) - m);
        total += m + std::log(z) - static_cast<double>(row[target]);
    }
    return total / static_cast<double>(seq - 1);
}

template double cross_entropy<float>(const float*, int, int, const uint16_t*);
template double cross_entropy<double>(const double*, int, int, const uint16_t*);

template <class T>
std::array<double, 3> combined_loss_grad(const ForwardCache<T>& cache, const uint16_t* bins,
                                         const std::array<double, 3>& alpha,
                                         std::vector<T>* dlogits) {
    const ModelConfig& cfg = cache.config;
    const int batch = cache.batch, seq = cfg.seq_len, vocab = cfg.num_bins;
    const int predict = seq - 1;
    const double inv_count = 1.0 / (static_cast<double>(batch) * predict);

    if (dlogits != nullptr) dlogits->assign(cache.logits.size(), T(0));

    std::array<double, 3> loss{};
    for (int b = 0; b < batch; ++b) {
        for (int t = 0; t < predict; ++t) {
            const size_t row = static_cast<size_t>(b) * seq + t;
            for (int c = 0; c < kNumChannels; ++c) {
                const uint16_t target =
                    bins[(row + 1) * kNumChannels + c];  // day t+1, same window
                if (target >= vocab)
                    throw std::invalid_argument("target bin out of range");
                const T* lrow = cache.logits.data() + (row * kNumChannels + c) * vocab;
                double m = lrow[0];
                for (int j = 1; j < vocab; ++j) m = std::max(m, static_cast<double>(lrow[j]));
                double z = 0;
                for (int j = 0; j < vocab; ++j) z += std::exp(static_cast<double>(lrow[j]) - m);
                loss[c] += m + std::log(z) - static_cast<double>(lrow[target]);
                if (dlogits != nullptr) {
                    T* grow = dlogits->data() + (row * kNumChannels + c) * vocab;
                    const double scale = alpha[c] * inv_count;
                    const double inv_z = 1.0 / z;
                    for (int j = 0; j < vocab; ++j) {
                        const double p = std::exp(static_cast<double>(lrow[j]) - m) * inv_z;
                        grow[j] = static_cast<T>(p * scale);
                    }
                    grow[target] -= static_cast<T>(scale);
                }
            }
        }
    }
    for (int c = 0; c < kNumChannels; ++c) loss[c] *= inv_count;
    return loss;
}

template std::array<double, 3> combined_loss_grad<float>(const ForwardCache<float>&,
                                                         const uint16_t*,
                                                         const std::array<double, 3>&,
                                                         std::vector<float>*);
template std::array<double, 3> combined_loss_grad<double>(const ForwardCache<double>&,
                                                          const uint16_t*,
                                                          const std::array<double, 3>&,
                                                          std::vector<double>*);

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

template <class T>
void adam_step(std::vector<T>& params, const std::vector<T>& grads, AdamState<T>& state,
               double lr, double beta1, double beta2, double epsilon,
               const ParamLayout* layout) {
    if (grads.size() != params.size()) throw std::invalid_argument("adam_step: size mismatch");
    if (state.m.empty()) {
        state.m.assign(params.size(), T(0));
        state.v.assign(params.size(), T(0));
    }
    if (state.m.size() != params.size()) throw std::invalid_argument("adam_step: stale state");

    for (size_t i = 0; i < grads.size(); ++i) {
        if (!std::isfinite(static_cast<double>(grads[i]))) {
            std::string where = layout != nullptr ? layout->tensor_at(i).name : "<unknown>";
            throw std::runtime_error("non-finite gradient in tensor " + where);
        }
    }

    state.step += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
    const long long n = static_cast<long long>(params.size());
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < n; ++i) {
        const double g = static_cast<double>(grads[static_cast<size_t>(i)]);
        const double m = beta1 * static_cast<double>(state.m[static_cast<size_t>(i)]) +
                         (1.0 - beta1) * g;
        const double v = beta2 * static_cast<double>(state.v[static_cast<size_t>(i)]) +
                         (1.0 - beta2) * g * g;
        state.m[static_cast<size_t>(i)] = static_cast<T>(m);
        state.v[static_cast<size_t>(i)] = static_cast<T>(v);
        const double mhat = m / bc1;
        const double vhat = v / bc2;
        params[static_cast<size_t>(i)] -= static_cast<T>(lr * mhat / (std::sqrt(vhat) + epsilon));
    }
}

template void adam_step<float>(std::vector<float>&, const std::vector<float>&, AdamState<float>&,
                               double, double, double, double, const ParamLayout*);
template void adam_step<double>(std::vector<double>&, const std::vector<double>&,
                                AdamState<double>&, double, double, double, double,
                                const ParamLayout*);

// ---------------------------------------------------------------------------
// split
// ---------------------------------------------------------------------------

std::unordered_map<std::string, Split> SplitResult::assignment() const {
    std::unordered_map<std::string, Split> out;
    for (const auto& id : train) out[id] = Split::kTrain;
    for (const auto& id : val) out[id] = Split::kVal;
    for (const auto& id : test) out[id] = Split::kTest;
    return out;
}

SplitResult split_by_individual(std::vector<std::string> ids,
                                const std::array<double, 3>& fractions, uint64_t seed) {
    const double sum = fractions[0] + fractions[1] + fractions[2];
    if (std::abs(sum - 1.0) > 1e-9 || fractions[0] < 0 || fractions[1] < 0 || fractions[2] < 0)
        throw std::invalid_argument("split fractions must be non-negative and sum to 1");
    if (ids.empty()) throw std::invalid_argument("no individuals to split");

    std::sort(ids.begin(), ids.end());  // input order must not matter
    Rng rng(derive_seed(seed, 0x5b17));
    rng.shuffle(ids);

    const auto n = static_cast<int64_t>(ids.size());
    const auto n_train =
        static_cast<int64_t>(std::floor(fractions[0] * static_cast<double>(n) + 1e-9));
    const auto n_val =
        static_cast<int64_t>(std::floor(fractions[1] * static_cast<double>(n) + 1e-9));

    SplitResult out;
    out.train.assign(ids.begin(), ids.begin() + n_train);
    out.val.assign(ids.begin() + n_train, ids.begin() + n_train + n_val);
    out.test.assign(ids.begin() + n_train + n_val, ids.end());

    // a requested (positive-fraction) split must receive at least one individual
    if (fractions[0] > 0 && out.train.empty())
        throw std::invalid_argument("train split received zero individuals");
    if (fractions[1] > 0 && out.val.empty())
        throw std::invalid_argument("val split received zero individuals");
    if (fractions[2] > 0 && out.test.empty())
        throw std::invalid_argument("test split received zero individuals");
    return out;
}

// ---------------------------------------------------------------------------
// training loop
// ---------------------------------------------------------------------------

namespace {

void gather_batch(const WindowSet& data, const std::vector<int64_t>& ids, size_t first,
                  size_t count, std::vector<uint16_t>& out) {
    const size_t stride =
        static_cast<size_t>(data.batch.window_len) * data.batch.num_channels;
    out.resize(count * stride);
    for (size_t i = 0; i < count; ++i) {
        const uint16_t* src = data.batch.window(ids[first + i]);
        std::copy(src, src + stride, out.data() + i * stride);
    }
}

std::string checkpoint_name(int epoch) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "epoch_%03d.agck", epoch);
    return buf;
}

}  // namespace

std::array<double, 4> evaluate_loss(const ModelParams<float>& params, const WindowSet& data,
                                    const std::vector<int64_t>& windows, int batch_size) {
    if (windows.empty()) throw std::invalid_argument("evaluate_loss: no windows");
    const ShakeShakeWeights w = fixed_shake_weights();
    std::array<double, 3> task{};
    std::vector<uint16_t> batch_bins;
    ForwardCache<float> cache;
    double weight_total = 0;
    for (size_t first = 0; first < windows.size(); first += static_cast<size_t>(batch_size)) {
        const size_t count = std::min(static_cast<size_t>(batch_size), windows.size() - first);
        gather_batch(data, windows, first, count, batch_bins);
        forward(batch_bins.data(), static_cast<int>(count), params, /*training=*/false, nullptr,
                cache);
        const auto losses = combined_loss_grad<float>(cache, batch_bins.data(), w.alpha, nullptr);
        for (int c = 0; c < kNumChannels; ++c) task[c] += losses[c] * static_cast<double>(count);
        weight_total += static_cast<double>(count);
    }
    for (int c = 0; c < kNumChannels; ++c) task[c] /= weight_total;
    return {task[0], task[1], task[2], combine(task, w.alpha)};
}

TrainResult train(const WindowSet& data, const std::vector<int64_t>& train_windows,
                  const std::vector<int64_t>& val_windows, const ModelConfig& model_cfg,
                  const TrainConfig& cfg, const std::string& out_dir) {
    cfg.validate();
    model_cfg.validate();
    if (train_windows.empty()) throw std::invalid_argument("train: no training windows");
    if (data.batch.window_len != model_cfg.seq_len)
        throw std::invalid_argument("train: window length does not match model seq_len");
    for (const uint16_t b : data.batch.bins) {
        if (b >= model_cfg.num_bins)
            throw std::invalid_argument("train: window bin exceeds model num_bins");
    }

    const bool emit = !out_dir.empty();
    if (emit) fs::create_directories(out_dir);

    TrainResult result;
    result.params = init_params<float>(model_cfg, derive_seed(cfg.seed, 1));
    Rng shuffle_rng(derive_seed(cfg.seed, 2));
    Rng shake_rng(derive_seed(cfg.seed, 3));
    Rng dropout_rng(derive_seed(cfg.seed, 4));

    AdamState<float> opt;
    std::vector<int64_t> order = train_windows;
    std::vector<uint16_t> batch_bins;
    std::vector<float> dlogits, grads;
    ForwardCache<float> cache;

    std::ofstream loss_log;
    if (emit) {
        loss_log.open(fs::path(out_dir) / "loss_log.csv", std::ios::binary | std::ios::trunc);
        loss_log << "epoch,step,lr,loss_hr,loss_sleep,loss_steps,loss_combined\n";
    }

    const CheckpointMeta meta{static_cast<int64_t>(train_windows.size()),
                              static_cast<int64_t>(train_windows.size()) * model_cfg.seq_len,
                              cfg.epochs, cfg.seed};
    if (emit && cfg.epochs == 0) {
        result.final_checkpoint = (fs::path(out_dir) / "final.agck").string();
        save_checkpoint(result.final_checkpoint, result.params, meta);
    }

    int64_t global_step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = lr_at_epoch(epoch, cfg);
        shuffle_rng.shuffle(order);

        double epoch_combined = 0;
        int64_t epoch_steps = 0;
        for (size_t first = 0; first < order.size(); first += static_cast<size_t>(cfg.batch_size)) {
            const size_t count =
                std::min(static_cast<size_t>(cfg.batch_size), order.size() - first);
            gather_batch(data, order, first, count, batch_bins);

            const ShakeShakeWeights w = sample_shake_weights(shake_rng);
            std::array<double, 3> task{};
            double combined = 0;
            try {
                // a diverged model shows up either as a non-finite activation
                // (forward throws) or a non-finite loss/gradient
                forward(batch_bins.data(), static_cast<int>(count), result.params,
                        /*training=*/true, &dropout_rng, cache);
                task = combined_loss_grad<float>(cache, batch_bins.data(), w.alpha, &dlogits);
                combined = combine(task, w.alpha);
                if (!std::isfinite(combined)) throw std::runtime_error("non-finite loss");
                backward(cache, dlogits.data(), result.params, grads);
                adam_step(result.params.values, grads, opt, lr, cfg.beta1, cfg.beta2, cfg.epsilon,
                          &result.params.layout);
            } catch (const std::runtime_error&) {
                result.nan_abort = true;
                break;
            }

            result.steps.push_back({epoch, global_step, lr, task, combined});
            if (emit) {
                loss_log << epoch << ',' << global_step << ',' << csv::format_value(lr) << ','
                         << csv::format_value(task[0]) << ',' << csv::format_value(task[1]) << ','
                         << csv::format_value(task[2]) << ',' << csv::format_value(combined)
                         << "\n";
            }
            epoch_combined += combined;
            ++epoch_steps;
            ++global_step;
        }
        if (result.nan_abort) break;

        EpochSummary summary;
        summary.epoch = epoch;
        summary.mean_train_combined =
            epoch_steps > 0 ? epoch_combined / static_cast<double>(epoch_steps) : 0.0;
        if (!val_windows.empty()) {
            const auto val = evaluate_loss(result.params, data, val_windows, cfg.batch_size);
            summary.val_task = {val[0], val[1], val[2]};
            summary.val_combined = val[3];
        }
        result.epochs.push_back(summary);

        if (emit) save_checkpoint((fs::path(out_dir) / checkpoint_name(epoch)).string(),
                                  result.params, meta);
    }

    if (emit) {
        if (!result.nan_abort && cfg.epochs > 0) {
            result.final_checkpoint = (fs::path(out_dir) / "final.agck").string();
            save_checkpoint(result.final_checkpoint, result.params, meta);
        } else if (result.nan_abort && !result.epochs.empty()) {
            // keep the last completed epoch's checkpoint as the final state
            result.final_checkpoint =
                (fs::path(out_dir) / checkpoint_name(result.epochs.back().epoch)).string();
        }
        std::ofstream val_log(fs::path(out_dir) / "val_log.csv",
                              std::ios::binary | std::ios::trunc);
        val_log << "epoch,val_hr,val_sleep,val_steps,val_combined\n";
        for (const EpochSummary& e : result.epochs) {
            val_log << e.epoch << ',' << csv::format_value(e.val_task[0]) << ','
                    << csv::format_value(e.val_task[1]) << ',' << csv::format_value(e.val_task[2])
                    << ',' << csv::format_value(e.val_combined) << "\n";
        }
    }
    return result;
}

}  // namespace actigen
