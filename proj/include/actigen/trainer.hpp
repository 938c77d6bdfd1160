#pragma once
// Teacher-forced next-day training: position t predicts day t+1 for every
// t < seq_len-1. Per-task cross-entropy losses are mixed with a freshly
// sampled random unit-norm weight vector each optimization step; validation
// losses use fixed equal weights (1/sqrt(3) each) so runs stay comparable.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "actigen/data_pipeline.hpp"
#include "actigen/model.hpp"
#include "actigen/rng.hpp"

namespace actigen {

struct TrainConfig {
    int epochs = 15;
    double initial_lr = 1e-3;
    double decay_factor = 10.0;  // lr divides by this every decay_interval epochs
    int decay_interval = 5;
    int batch_size = 64;
    double beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8;
    uint64_t seed = 42;
    std::array<double, 3> split_fractions{0.8, 0.1, 0.1};

    void validate() const;
};

double lr_at_epoch(int epoch, const TrainConfig& cfg);

// ---------------------------------------------------------------------------
// loss mixing
// ---------------------------------------------------------------------------

struct ShakeShakeWeights {
    std::array<double, 3> alpha{};  // non-negative, ||alpha||_2 == 1
};

// |draws| normalized to unit L2 norm (all-zero draws fall back to equal weights)
ShakeShakeWeights shake_from_draws(const std::array<double, 3>& draws);
ShakeShakeWeights sample_shake_weights(Rng& rng);
// fixed weights used for validation/evaluation losses
ShakeShakeWeights fixed_shake_weights();

// ---------------------------------------------------------------------------
// losses
// ---------------------------------------------------------------------------

// Single-task, single-sequence: mean over the seq-1 predicting positions of
// -log softmax(logits[t])[next_bins[t]]. logits is [seq, vocab] and
// next_bins[t] is the bin for day t+1.
template <class T>
double cross_entropy(const T* logits, int seq, int vocab, const uint16_t* next_bins);

// Batched fused loss + gradient over cached logits. Returns the per-task mean
// losses; dlogits (matching cache.logits) is filled with
// alpha[c] * (softmax - onehot) / (batch * (seq-1)) at predicting positions.
template <class T>
std::array<double, 3> combined_loss_grad(const ForwardCache<T>& cache, const uint16_t* bins,
                                         const std::array<double, 3>& alpha,
                                         std::vector<T>* dlogits);

inline double combine(const std::array<double, 3>& task_losses,
                      const std::array<double, 3>& alpha) {
    return alpha[0] * task_losses[0] + alpha[1] * task_losses[1] + alpha[2] * task_losses[2];
}

// ---------------------------------------------------------------------------
// optimizer
// ---------------------------------------------------------------------------

template <class T>
struct AdamState {
    std::vector<T> m, v;
    int64_t step = 0;
};

// Bias-corrected Adam, elementwise. Throws (naming the tensor when a layout
// is supplied) on non-finite gradients.
template <class T>
void adam_step(std::vector<T>& params, const std::vector<T>& grads, AdamState<T>& state,
               double lr, double beta1, double beta2, double epsilon,
               const ParamLayout* layout = nullptr);

// ---------------------------------------------------------------------------
// splitting
// ---------------------------------------------------------------------------

struct SplitResult {
    std::vector<std::string> train, val, test;
    std::unordered_map<std::string, Split> assignment() const;
};

// Deterministic under seed; every id lands in exactly one split. A split
// with a positive fraction that still ends up empty is an error.
SplitResult split_by_individual(std::vector<std::string> ids,
                                const std::array<double, 3>& fractions, uint64_t seed);

// ---------------------------------------------------------------------------
// training loop
// ---------------------------------------------------------------------------

struct StepLog {
    int epoch = 0;
    int64_t step = 0;
    double lr = 0;
    std::array<double, 3> task_loss{};
    double combined = 0;
};

struct EpochSummary {
    int epoch = 0;
    double mean_train_combined = 0;  // mean of per-step combined losses
    std::array<double, 3> val_task{};
    double val_combined = 0;  // fixed-weight combination
};

struct TrainResult {
    ModelParams<float> params;
    std::vector<StepLog> steps;
    std::vector<EpochSummary> epochs;
    bool nan_abort = false;
    std::string final_checkpoint;  // empty when out_dir is empty
};

// Runs the full loop over the given training windows. When out_dir is
// non-empty, emits one checkpoint per epoch plus `final.agck`, and
// `loss_log.csv` with per-step rows (`epoch,step,lr,loss_hr,loss_sleep,
// loss_steps,loss_combined`) and `val_log.csv` with per-epoch rows.
// Deterministic under cfg.seed. On a NaN loss the last good checkpoint is
// kept and the result is flagged.
TrainResult train(const WindowSet& data, const std::vector<int64_t>& train_windows,
                  const std::vector<int64_t>& val_windows, const ModelConfig& model_cfg,
                  const TrainConfig& cfg, const std::string& out_dir);

// Fixed-weight loss of a parameter set over the given windows (no dropout).
std::array<double, 4> evaluate_loss(const ModelParams<float>& params, const WindowSet& data,
                                    const std::vector<int64_t>& windows, int batch_size);

}  // namespace actigen
