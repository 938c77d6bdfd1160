#pragma once
// Quantitative comparison of real and generated sequence sets: next-day MAE
// per channel, mean pairwise cosine similarity, mean pairwise DTW distance
// (intra-set values serve as the reference optimum for cross-set values),
// plus a flattened feature export for external manifold/embedding tools.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "actigen/data_pipeline.hpp"
#include "actigen/model.hpp"

namespace actigen {

double cosine_similarity(const std::vector<double>& x, const std::vector<double>& y);

// Classic DTW on a single channel with absolute-difference local cost:
// D(i,j) = |x_i - y_j| + min(D(i-1,j), D(i,j-1), D(i-1,j-1)).
double dtw_distance(const std::vector<double>& x, const std::vector<double>& y);

// Sequence sets hold equal-length multichannel sequences twice over: scaled
// to [0,1] (flattened, channel-interleaved — the cosine/export space) and in
// original units (the DTW space).
struct SequenceSet {
    int len = 21;
    int channels = kNumChannels;
    std::vector<double> scaled;    // [n][len*channels]
    std::vector<double> original;  // [n][len*channels]
    std::vector<std::string> ids;

    int64_t count() const {
        return ids.empty() ? static_cast<int64_t>(scaled.size()) / (len * channels)
                           : static_cast<int64_t>(ids.size());
    }
    std::vector<double> scaled_vector(int64_t i) const;
    std::vector<double> channel_sequence(int64_t i, int c, bool use_original) const;
};

SequenceSet sequence_set_from_windows(const WindowSet& set, const std::vector<int64_t>& windows);

// Multichannel DTW: per-channel distances summed.
double dtw_between(const SequenceSet& a, int64_t i, const SequenceSet& b, int64_t j,
                   bool original_units);
double cosine_between(const SequenceSet& a, int64_t i, const SequenceSet& b, int64_t j,
                      bool scaled_space);

enum class PairMetric { kCosine, kDtw };

struct MetricStats {
    double mean = 0.0;
    double stddev = 0.0;
    int64_t pairs = 0;
};

// Intra mode (b == nullptr): unordered distinct pairs within `a`. Cross mode:
// pairs from a x b. When the pair count exceeds max_pairs, pairs are sampled
// uniformly (deterministic under seed).
MetricStats pairwise_stats(const SequenceSet& a, const SequenceSet* b, PairMetric metric,
                           bool preferred_space, int64_t max_pairs, uint64_t seed);

// Greedy next-day predictions (argmax-bin midpoints) vs the true values, in
// original units, averaged over every predicting position of the windows.
std::array<double, kNumChannels> next_day_mae(const ModelParams<float>& params,
                                              const WindowSet& data,
                                              const std::vector<int64_t>& windows,
                                              int batch_size = 64);

// One row per sequence: id, set label, then len*channels scaled values.
void export_features(const std::string& path, const SequenceSet& real,
                     const SequenceSet& generated);

struct EvalReport {
    std::array<double, kNumChannels> mae{};
    MetricStats cosine_intra_real, cosine_intra_generated, cosine_cross;
    MetricStats dtw_intra_real, dtw_intra_generated, dtw_cross;
    int64_t real_sequences = 0;
    int64_t generated_sequences = 0;
    int64_t max_pairs = 0;
    uint64_t pair_seed = 0;
    int64_t training_size_days = -1;
    std::string cosine_space = "scaled";
    std::string dtw_space = "original";

    std::string to_json() const;  // pretty-printed, schema-versioned
};

void write_eval_report(const std::string& path, const EvalReport& report);

// `training_size,mae_hr,mae_sleep,mae_steps` rows (appends when append=true).
void write_summary_csv(const std::string& path, const EvalReport& report, bool append = false);

}  // namespace actigen
