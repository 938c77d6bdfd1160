#include "actigen/synthetic_cohort.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "actigen/rng.hpp"

namespace actigen {

void CohortConfig::validate() const {
    if (num_individuals <= 0) throw std::invalid_argument("num_individuals must be positive");
    if (num_days < 21) throw std::invalid_argument("num_days must be at least 21");
    if (!(ar_coeff >= 0.0 && ar_coeff < 1.0))
        throw std::invalid_argument("ar_coeff must be in [0,1)");
    if (!(missingness_rate >= 0.0 && missingness_rate < 1.0))
        throw std::invalid_argument("missingness_rate must be in [0,1)");
    for (int c = 0; c < kNumChannels; ++c) {
        if (channels[c].baseline_location <= 0.0)
            throw std::invalid_argument(std::string("baseline_location must be positive for ") +
                                        kChannelNames[c]);
        if (channels[c].baseline_spread < 0.0 || channels[c].weekly_amplitude < 0.0)
            throw std::invalid_argument("spread and weekly_amplitude must be non-negative");
    }
}

double weekday_shape(int day_index) {
    constexpr double kTwoPi = 6.28318530717958647692528676655900577;
    return std::cos(kTwoPi * static_cast<double>(day_index % 7) / 7.0);
}

namespace {

IndividualSeries simulate_individual(const CohortConfig& cfg, int index) {
    Rng rng(derive_seed(cfg.seed, static_cast<uint64_t>(index)));

    IndividualSeries series;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "ind_%05d", index);
    series.individual_id = buf;

    // fixed per-individual baselines; steps noise acts on a log scale with
    // sigma = spread / location (the coefficient of variation)
    std::array<double, kNumChannels> baseline{};
    for (int c = 0; c < kNumChannels; ++c) {
        baseline[c] = cfg.channels[c].baseline_location +
                      cfg.channels[c].baseline_spread * rng.gaussian();
    }
    baseline[kRestingHr] = std::max(baseline[kRestingHr], 30.0);
    baseline[kSleepMinutes] = std::clamp(baseline[kSleepMinutes], 60.0, 1200.0);
    baseline[kSteps] = std::max(baseline[kSteps], 200.0);

    std::array<double, kNumChannels> sigma{};
    sigma[kRestingHr] = cfg.channels[kRestingHr].baseline_spread;
    sigma[kSleepMinutes] = cfg.channels[kSleepMinutes].baseline_spread;
    sigma[kSteps] = cfg.channels[kSteps].baseline_spread / cfg.channels[kSteps].baseline_location;

    // AR(1) with stationary marginal std = sigma: z' = rho z + sqrt(1-rho^2) sigma eps
    const double rho = cfg.ar_coeff;
    const double innov = std::sqrt(1.0 - rho * rho);
    std::array<double, kNumChannels> z{};
    for (int c = 0; c < kNumChannels; ++c) z[c] = sigma[c] * rng.gaussian();

    series.days.reserve(static_cast<size_t>(cfg.num_days));
    for (int day = 0; day < cfg.num_days; ++day) {
        if (day > 0) {
            for (int c = 0; c < kNumChannels; ++c)
                z[c] = rho * z[c] + innov * sigma[c] * rng.gaussian();
        }
        DayRecord rec;
        rec.individual_id = series.individual_id;
        rec.day_index = day;

        const double shape = weekday_shape(day);
        const double hr = baseline[kRestingHr] +
                          cfg.channels[kRestingHr].weekly_amplitude * shape + z[kRestingHr];
        rec.resting_hr = std::max(hr, 1.0);

        const double sleep = baseline[kSleepMinutes] +
                             cfg.channels[kSleepMinutes].weekly_amplitude * shape +
                             z[kSleepMinutes];
        rec.sleep_minutes = std::clamp(sleep, 0.0, static_cast<double>(kMinutesPerDay));

        const double step_level =
            std::max(baseline[kSteps] + cfg.channels[kSteps].weekly_amplitude * shape, 0.0);
        rec.steps = std::round(step_level * std::exp(z[kSteps]));

        const double u = rng.uniform01();
        if (u < cfg.missingness_rate) {
            rec.coverage_fraction = 0.30 + 0.50 * rng.uniform01();  // fails the > 0.8 filter
        } else {
            rec.coverage_fraction = 0.81 + 0.19 * rng.uniform01();
        }
        rec.validate();
        series.days.push_back(std::move(rec));
    }
    return series;
}

}  // namespace

std::vector<IndividualSeries> simulate_cohort(const CohortConfig& config) {
    config.validate();
    std::vector<IndividualSeries> out(static_cast<size_t>(config.num_individuals));
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < config.num_individuals; ++i) {
        out[static_cast<size_t>(i)] = simulate_individual(config, i);
    }
    return out;
}

}  // namespace actigen
