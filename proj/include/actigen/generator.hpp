#pragma once
// Autoregressive synthesis: seed with a held-out 21-day window, predict the
// next day's three bin distributions, temperature-scale, sample each channel
// independently, slide the window forward by one day, repeat. Sampled bins
// (not dequantized values) feed back into the window so generation stays in
// the model's discrete vocabulary.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "actigen/data_pipeline.hpp"
#include "actigen/model.hpp"
#include "actigen/rng.hpp"

namespace actigen {

struct GenerationConfig {
    int horizon = 120;
    // logits are divided by the temperature before the softmax;
    // T > 1 flattens, T -> 0 approaches argmax
    std::array<double, kNumChannels> temperatures{1.0, 2.0, 2.0};
    uint64_t seed = 0;

    void validate() const;
};

// Softmax of the final position's three task logit vectors.
std::array<std::vector<float>, kNumChannels> next_day_distributions(
    const uint16_t* window, const ModelParams<float>& params);

// softmax(logits / temperature) as probabilities (exposed for testing).
std::vector<double> temperature_distribution(const float* logits, int n, double temperature);

int temperature_sample(const float* logits, int n, double temperature, Rng& rng);

struct GeneratedSeries {
    std::string prompt_id;
    std::vector<uint16_t> bins;    // [horizon][channels]
    std::vector<double> values;    // [horizon][channels], original units (bin midpoints)
    std::vector<uint16_t> final_window;  // window content after the last step
};

// Deterministic function of (params, prompt, config.seed).
GeneratedSeries generate(const uint16_t* prompt, const ModelParams<float>& params,
                         const ScalerBinSpec& scaler, const GenerationConfig& config,
                         const std::string& prompt_id);

}  // namespace actigen
