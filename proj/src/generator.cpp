#include "actigen/generator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace actigen {

void GenerationConfig::validate() const {
    if (horizon < 1) throw std::invalid_argument("horizon must be >= 1");
    for (const double t : temperatures)
        if (!(t > 0.0)) throw std::invalid_argument("temperatures must be positive");
}

namespace {

// logits of the final position, per channel, from a single-window forward
std::array<std::vector<float>, kNumChannels> last_position_logits(
    const uint16_t* window, const ModelParams<float>& params, ForwardCache<float>& cache) {
    forward(window, /*batch=*/1, params, /*training=*/false, nullptr, cache);
    const int seq = params.config.seq_len, bins = params.config.num_bins;
    std::array<std::vector<float>, kNumChannels> out;
    for (int c = 0; c < kNumChannels; ++c) {
        const float* row =
            cache.logits.data() + (static_cast<size_t>(seq - 1) * kNumChannels + c) * bins;
        out[c].assign(row, row + bins);
    }
    return out;
}

}  // namespace

std::array<std::vector<float>, kNumChannels> next_day_distributions(
    const uint16_t* window, const ModelParams<float>& params) {
    ForwardCache<float> cache;
    auto logits = last_position_logits(window, params, cache);
    for (int c = 0; c < kNumChannels; ++c) {
        const auto probs = temperature_distribution(logits[c].data(),
                                                    static_cast<int>(logits[c].size()), 1.0);
        for (size_t j = 0; j < probs.size(); ++j) logits[c][j] = static_cast<float>(probs[j]);
    }
    return logits;
}

std::vector<double> temperature_distribution(const float* logits, int n, double temperature) {
    if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
    std::vector<double> p(static_cast<size_t>(n));
    double m = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < n; ++j) m = std::max(m, static_cast<double>(logits[j]) / temperature);
    double z = 0;
    for (int j = 0; j < n; ++j) {
        p[static_cast<size_t>(j)] = std::exp(static_cast<double>(logits[j]) / temperature - m);
        z += p[static_cast<size_t>(j)];
    }
    for (double& v : p) v /= z;
    return p;
}

int temperature_sample(const float* logits, int n, double temperature, Rng& rng) {
    const std::vector<double> p = temperature_distribution(logits, n, temperature);
    const double u = rng.uniform01();
    double cum = 0;
    for (int j = 0; j < n; ++j) {
        cum += p[static_cast<size_t>(j)];
        if (u < cum) return j;
    }
    return n - 1;  // guard against accumulated rounding
}

GeneratedSeries generate(const uint16_t* prompt, const ModelParams<float>& params,
                         const ScalerBinSpec& scaler, const GenerationConfig& config,
                         const std::string& prompt_id) {
    config.validate();
    if (params.config.num_bins != scaler.num_bins)
        throw std::invalid_argument("generate: model and scaler bin counts differ");
    const int seq = params.config.seq_len;

    GeneratedSeries out;
    out.prompt_id = prompt_id;
    out.bins.reserve(static_cast<size_t>(config.horizon) * kNumChannels);
    out.values.reserve(static_cast<size_t>(config.horizon) * kNumChannels);

    std::vector<uint16_t> window(prompt, prompt + static_cast<size_t>(seq) * kNumChannels);
    Rng rng(derive_seed(config.seed, 0x9e11));
    ForwardCache<float> cache;

    for (int step = 0; step < config.horizon; ++step) {
        const auto logits = last_position_logits(window.data(), params, cache);
        std::array<uint16_t, kNumChannels> sampled{};
        for (int c = 0; c < kNumChannels; ++c) {
            const int bin = temperature_sample(logits[c].data(),
                                               static_cast<int>(logits[c].size()),
                                               config.temperatures[static_cast<size_t>(c)], rng);
            sampled[static_cast<size_t>(c)] = static_cast<uint16_t>(bin);
            out.bins.push_back(static_cast<uint16_t>(bin));
            out.values.push_back(dequantize(bin, c, scaler));
        }
        // slide: drop day 0, append the sampled day
        std::copy(window.begin() + kNumChannels, window.end(), window.begin());
        const size_t tail = window.size() - kNumChannels;
        for (int c = 0; c < kNumChannels; ++c)
            window[tail + static_cast<size_t>(c)] = sampled[static_cast<size_t>(c)];
    }
    out.final_window = std::move(window);
    return out;
}

}  // namespace actigen
