#pragma once
// Desk-scale synthetic wearable cohort: per-individual baselines, a weekly
// additive pattern, AR(1)-correlated noise, and low-coverage days. Steps get
// multiplicative lognormal noise so consecutive days can differ by orders of
// magnitude, like real step counts; resting HR and sleep stay symmetric.

#include <array>
#include <cstdint>
#include <vector>

#include "actigen/data_pipeline.hpp"

namespace actigen {

struct ChannelModel {
    double baseline_location = 0.0;  // mean of the per-individual baseline
    double baseline_spread = 0.0;    // controls both baseline spread and daily noise
    double weekly_amplitude = 0.0;   // additive day-of-week pattern, peak-to-center
};

struct CohortConfig {
    int num_individuals = 200;
    int num_days = 365;
    uint64_t seed = 42;
    std::array<ChannelModel, kNumChannels> channels{{
        {62.0, 5.0, 1.5},      // resting HR (bpm)
        {430.0, 45.0, 25.0},   // sleep (minutes)
        {7500.0, 6000.0, 900.0}  // steps (count)
    }};
    double ar_coeff = 0.6;          // lag-1 autocorrelation of the daily noise, in [0,1)
    double missingness_rate = 0.05; // fraction of days with coverage below the filter

    void validate() const;
};

// Deterministic under (seed); each individual draws from its own derived
// stream, so parallel generation matches sequential output exactly.
std::vector<IndividualSeries> simulate_cohort(const CohortConfig& config);

// Day-of-week shape in [-1, 1]; multiplied by weekly_amplitude.
double weekday_shape(int day_index);

}  // namespace actigen
