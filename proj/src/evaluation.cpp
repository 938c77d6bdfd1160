#include "actigen/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "actigen/csv.hpp"
#include "actigen/rng.hpp"

namespace actigen {

using nlohmann::json;

double cosine_similarity(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.empty())
        throw std::invalid_argument("cosine_similarity: length mismatch");
    double dot = 0, nx = 0, ny = 0;
    for (size_t i = 0; i < x.size(); ++i) {
        dot += x[i] * y[i];
        nx += x[i] * x[i];
        ny += y[i] * y[i];
    }
    if (nx == 0.0 || ny == 0.0)
        throw std::invalid_argument("cosine_similarity: zero-norm vector");
    return dot / (std::sqrt(nx) * std::sqrt(ny));
}

double dtw_distance(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.empty() || y.empty()) throw std::invalid_argument("dtw_distance: empty sequence");
    const size_t n = x.size(), m = y.size();
    // one rolling row of the DP table
    std::vector<double> prev(m), curr(m);
    for (size_t j = 0; j < m; ++j) {
        const double cost = std::abs(x[0] - y[j]);
        prev[j] = cost + (j == 0 ? 0.0 : prev[j - 1]);
    }
    for (size_t i = 1; i < n; ++i) {
        curr[0] = std::abs(x[i] - y[0]) + prev[0];
        for (size_t j = 1; j < m; ++j) {
            const double best = std::min({prev[j], curr[j - 1], prev[j - 1]});
            curr[j] = std::abs(x[i] - y[j]) + best;
        }
        prev.swap(curr);
    }
    return prev[m - 1];
}

std::vector<double> SequenceSet::scaled_vector(int64_t i) const {
    const size_t stride = static_cast<size_t>(len) * channels;
    return {scaled.begin() + static_cast<int64_t>(stride) * i,
            scaled.begin() + static_cast<int64_t>(stride) * (i + 1)};
}

std::vector<double> SequenceSet::channel_sequence(int64_t i, int c, bool use_original) const {
    const std::vector<double>& src = use_original ? original : scaled;
    const size_t stride = static_cast<size_t>(len) * channels;
    std::vector<double> out(static_cast<size_t>(len));
    for (int t = 0; t < len; ++t)
        out[static_cast<size_t>(t)] =
            src[static_cast<size_t>(i) * stride + static_cast<size_t>(t) * channels + c];
    return out;
}

SequenceSet sequence_set_from_windows(const WindowSet& set, const std::vector<int64_t>& windows) {
    SequenceSet out;
    out.len = set.batch.window_len;
    out.channels = set.batch.num_channels;
    const size_t stride = static_cast<size_t>(out.len) * out.channels;
    out.scaled.reserve(windows.size() * stride);
    out.original.reserve(windows.size() * stride);
    for (const int64_t w : windows) {
        const uint16_t* bins = set.batch.window(w);
        const double* orig = set.has_originals() ? set.original_window(w) : nullptr;
        for (size_t k = 0; k < stride; ++k) {
            const int c = static_cast<int>(k % static_cast<size_t>(out.channels));
            if (orig != nullptr) {
                out.scaled.push_back(set.scaler.scale01(orig[k], c));
                out.original.push_back(orig[k]);
            } else {
                // fall back to bin midpoints when pre-quantization values are absent
                const double mid = dequantize(bins[k], c, set.scaler);
                out.scaled.push_back(set.scaler.scale01(mid, c));
                out.original.push_back(mid);
            }
        }
        const auto& src = set.batch.sources[static_cast<size_t>(w)];
        out.ids.push_back(src.individual_id + "@" + std::to_string(src.start_day));
    }
    return out;
}

double dtw_between(const SequenceSet& a, int64_t i, const SequenceSet& b, int64_t j,
                   bool original_units) {
    double total = 0;
    for (int c = 0; c < a.channels; ++c)
        total += dtw_distance(a.channel_sequence(i, c, original_units),
                              b.channel_sequence(j, c, original_units));
    return total;
}

double cosine_between(const SequenceSet& a, int64_t i, const SequenceSet& b, int64_t j,
                      bool scaled_space) {
    if (scaled_space) return cosine_similarity(a.scaled_vector(i), b.scaled_vector(j));
    const size_t stride = static_cast<size_t>(a.len) * a.channels;
    std::vector<double> va(a.original.begin() + static_cast<int64_t>(stride) * i,
                           a.original.begin() + static_cast<int64_t>(stride) * (i + 1));
    std::vector<double> vb(b.original.begin() + static_cast<int64_t>(stride) * j,
                           b.original.begin() + static_cast<int64_t>(stride) * (j + 1));
    return cosine_similarity(va, vb);
}

MetricStats pairwise_stats(const SequenceSet& a, const SequenceSet* b, PairMetric metric,
                           bool preferred_space, int64_t max_pairs, uint64_t seed) {
    // a cross comparison of two content-identical sets is the intra statistic
    // (otherwise self-pairs would inflate it)
    const bool intra =
        b == nullptr || (a.scaled == b->scaled && a.original == b->original);
    const SequenceSet& bb = intra ? a : *b;
    const int64_t na = a.count(), nb = bb.count();
    if (na == 0 || nb == 0) throw std::invalid_argument("pairwise_stats: empty set");
    if (intra && na < 2)
        throw std::invalid_argument("pairwise_stats: intra mode needs at least 2 sequences");
    if (max_pairs <= 0) throw std::invalid_argument("pairwise_stats: max_pairs must be positive");

    std::vector<std::pair<int64_t, int64_t>> pairs;
    const int64_t all = intra ? na * (na - 1) / 2 : na * nb;
    if (all <= max_pairs) {
        pairs.reserve(static_cast<size_t>(all));
        if (intra) {
            for (int64_t i = 0; i < na; ++i)
                for (int64_t j = i + 1; j < na; ++j) pairs.emplace_back(i, j);
        } else {
            for (int64_t i = 0; i < na; ++i)
                for (int64_t j = 0; j < nb; ++j) pairs.emplace_back(i, j);
        }
    } else {
        // uniform sample of index pairs (with replacement across draws)
        Rng rng(derive_seed(seed, 0xda7a));
        pairs.reserve(static_cast<size_t>(max_pairs));
        for (int64_t k = 0; k < max_pairs; ++k) {
            if (intra) {
                int64_t i = static_cast<int64_t>(rng.below(static_cast<uint64_t>(na)));
                int64_t j = static_cast<int64_t>(rng.below(static_cast<uint64_t>(na - 1)));
                if (j >= i) ++j;  // distinct
                if (i > j) std::swap(i, j);
                pairs.emplace_back(i, j);
            } else {
                pairs.emplace_back(static_cast<int64_t>(rng.below(static_cast<uint64_t>(na))),
                                   static_cast<int64_t>(rng.below(static_cast<uint64_t>(nb))));
            }
        }
    }

    std::vector<double> vals(pairs.size());
    const long long np = static_cast<long long>(pairs.size());
#pragma omp parallel for schedule(dynamic, 64)
    for (long long k = 0; k < np; ++k) {
        const auto [i, j] = pairs[static_cast<size_t>(k)];
        vals[static_cast<size_t>(k)] = metric == PairMetric::kCosine
                                           ? cosine_between(a, i, bb, j, preferred_space)
                                           : dtw_between(a, i, bb, j, preferred_space);
    }

    // fixed-order reduction keeps the result reproducible
    double sum = 0;
    for (const double v : vals) sum += v;
    const double mean = sum / static_cast<double>(vals.size());
    double sq = 0;
    for (const double v : vals) sq += (v - mean) * (v - mean);
    const double stddev =
        vals.size() > 1 ? std::sqrt(sq / static_cast<double>(vals.size() - 1)) : 0.0;
    return {mean, stddev, static_cast<int64_t>(vals.size())};
}

std::array<double, kNumChannels> next_day_mae(const ModelParams<float>& params,
                                              const WindowSet& data,
                                              const std::vector<int64_t>& windows,
                                              int batch_size) {
    if (windows.empty()) throw std::invalid_argument("next_day_mae: empty test set");
    const int seq = params.config.seq_len, vocab = params.config.num_bins;
    if (data.batch.window_len != seq)
        throw std::invalid_argument("next_day_mae: window length mismatch");

    std::array<double, kNumChannels> abs_err{};
    int64_t positions = 0;
    ForwardCache<float> cache;
    std::vector<uint16_t> batch_bins;
    const size_t stride = static_cast<size_t>(seq) * kNumChannels;

    for (size_t first = 0; first < windows.size(); first += static_cast<size_t>(batch_size)) {
        const size_t count = std::min(static_cast<size_t>(batch_size), windows.size() - first);
        batch_bins.resize(count * stride);
        for (size_t i = 0; i < count; ++i) {
            const uint16_t* src = data.batch.window(windows[first + i]);
            std::copy(src, src + stride, batch_bins.data() + i * stride);
        }
        forward(batch_bins.data(), static_cast<int>(count), params, false, nullptr, cache);

        for (size_t i = 0; i < count; ++i) {
            const int64_t w = windows[first + i];
            const double* orig = data.has_originals() ? data.original_window(w) : nullptr;
            for (int t = 0; t < seq - 1; ++t) {
                const size_t row = i * static_cast<size_t>(seq) + static_cast<size_t>(t);
                for (int c = 0; c < kNumChannels; ++c) {
                    const float* lrow =
                        cache.logits.data() + (row * kNumChannels + c) * vocab;
                    int best = 0;
                    for (int j = 1; j < vocab; ++j)
                        if (lrow[j] > lrow[best]) best = j;
                    const double pred = dequantize(best, c, data.scaler);
                    const size_t target_idx =
                        (static_cast<size_t>(t) + 1) * kNumChannels + static_cast<size_t>(c);
                    const double truth =
                        orig != nullptr
                            ? orig[target_idx]
                            : dequantize(data.batch.window(w)[target_idx], c, data.scaler);
                    abs_err[static_cast<size_t>(c)] += std::abs(pred - truth);
                }
                ++positions;
            }
        }
    }
    for (double& e : abs_err) e /= static_cast<double>(positions);
    return abs_err;
}

void export_features(const std::string& path, const SequenceSet& real,
                     const SequenceSet& generated) {
    if (real.len != generated.len || real.channels != generated.channels)
        throw std::invalid_argument("export_features: ragged sequence lengths");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::invalid_argument("cannot write " + path);

    out << "id,set";
    for (int t = 0; t < real.len; ++t)
        for (int c = 0; c < real.channels; ++c)
            out << ",d" << t << "_" << kChannelNames[c];
    out << "\n";

    const auto emit = [&out](const SequenceSet& set, const char* label) {
        const size_t stride = static_cast<size_t>(set.len) * set.channels;
        for (int64_t i = 0; i < set.count(); ++i) {
            out << (set.ids.empty() ? ("seq" + std::to_string(i)) : set.ids[static_cast<size_t>(i)])
                << ',' << label;
            for (size_t k = 0; k < stride; ++k)
                out << ',' << csv::format_value(set.scaled[static_cast<size_t>(i) * stride + k]);
            out << "\n";
        }
    };
    emit(real, "real");
    emit(generated, "generated");
    if (!out) throw std::runtime_error("write failed: " + path);
}

namespace {

json stats_json(const MetricStats& s) {
    return json{{"mean", s.mean}, {"stddev", s.stddev}, {"pairs", s.pairs}};
}

}  // namespace

std::string EvalReport::to_json() const {
    json j;
    j["schema_version"] = 1;
    j["mae"] = {{"resting_hr", mae[0]}, {"sleep_minutes", mae[1]}, {"steps", mae[2]}};
    j["cosine"] = {{"space", cosine_space},
                   {"intra_real", stats_json(cosine_intra_real)},
                   {"intra_generated", stats_json(cosine_intra_generated)},
                   {"cross", stats_json(cosine_cross)}};
    j["dtw"] = {{"space", dtw_space},
                {"intra_real", stats_json(dtw_intra_real)},
                {"intra_generated", stats_json(dtw_intra_generated)},
                {"cross", stats_json(dtw_cross)}};
    j["counts"] = {{"real_sequences", real_sequences},
                   {"generated_sequences", generated_sequences},
                   {"max_pairs", max_pairs}};
    j["pair_seed"] = pair_seed;
    j["training_size_days"] = training_size_days;
    return j.dump(2);
}

void write_eval_report(const std::string& path, const EvalReport& report) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::invalid_argument("cannot write " + path);
    out << report.to_json() << "\n";
    if (!out) throw std::runtime_error("write failed: " + path);
}

void write_summary_csv(const std::string& path, const EvalReport& report, bool append) {
    const bool exists = append && std::ifstream(path).good();
    std::ofstream out(path, std::ios::binary | (append ? std::ios::app : std::ios::trunc));
    if (!out) throw std::invalid_argument("cannot write " + path);
    if (!exists) out << "training_size,mae_hr,mae_sleep,mae_steps\n";
    out << report.training_size_days << ',' << csv::format_value(report.mae[0]) << ','
        << csv::format_value(report.mae[1]) << ',' << csv::format_value(report.mae[2]) << "\n";
    if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace actigen
