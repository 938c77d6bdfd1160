#pragma once
// Day-level activity records -> scaled, binned 21-day windows, and back.
//
// The corpus flows through: aggregate (optional, from minute data) ->
// coverage filter + per-individual mean imputation -> min/max scaler fit on
// the training individuals -> quantization into evenly spaced bins ->
// fixed-length windows.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace actigen {

inline constexpr int kNumChannels = 3;
enum Channel : int { kRestingHr = 0, kSleepMinutes = 1, kSteps = 2 };
inline constexpr const char* kChannelNames[kNumChannels] = {"resting_hr", "sleep_minutes", "steps"};

inline constexpr int kMinutesPerDay = 1440;

// One person-day of aggregated activity. A null channel means "not observed".
struct DayRecord {
    std::string individual_id;
    int day_index = 0;
    std::optional<double> resting_hr;     // bpm, > 0 when present
    std::optional<double> sleep_minutes;  // [0, 1440] when present
    std::optional<double> steps;          // >= 0 when present
    double coverage_fraction = 0.0;       // recorded minutes / 1440, in [0, 1]

    std::optional<double> channel(int c) const {
        return c == kRestingHr ? resting_hr : (c == kSleepMinutes ? sleep_minutes : steps);
    }
    void set_channel(int c, std::optional<double> v) {
        (c == kRestingHr ? resting_hr : (c == kSleepMinutes ? sleep_minutes : steps)) = v;
    }
    void validate() const;  // throws std::invalid_argument on an invariant violation
};

struct IndividualSeries {
    std::string individual_id;
    std::vector<DayRecord> days;  // day_index strictly increasing
};

// Per-channel scaling bounds plus the shared quantization grid.
struct ScalerBinSpec {
    std::array<double, kNumChannels> min_value{};
    std::array<double, kNumChannels> max_value{};
    int num_bins = 100;

    void validate() const;
    double scale01(double v, int c) const {  // clamped to [0,1]
        const double s = (v - min_value[c]) / (max_value[c] - min_value[c]);
        return s < 0.0 ? 0.0 : (s > 1.0 ? 1.0 : s);
    }
};

int quantize(double value, int channel, const ScalerBinSpec& spec);
double dequantize(int bin, int channel, const ScalerBinSpec& spec);  // bin midpoint

struct WindowBatch {
    struct Source {
        std::string individual_id;
        int start_day = 0;
    };
    int window_len = 21;
    int num_channels = kNumChannels;
    std::vector<uint16_t> bins;  // [count][window_len][num_channels]
    std::vector<Source> sources;

    int64_t count() const {
        return window_len == 0 ? 0
                               : static_cast<int64_t>(bins.size()) / (window_len * num_channels);
    }
    const uint16_t* window(int64_t w) const {
        return bins.data() + static_cast<size_t>(w) * window_len * num_channels;
    }
    void append(const WindowBatch& other);
};

enum class Split : uint8_t { kTrain = 0, kVal = 1, kTest = 2 };
const char* split_name(Split s);
Split split_from_name(const std::string& name);

// A preprocessed corpus: windows, the scaler that produced them, per-window
// split labels, and the pre-quantization values (kept so evaluation can
// report errors against the true signal rather than bin midpoints).
struct WindowSet {
    WindowBatch batch;
    ScalerBinSpec scaler;
    std::vector<Split> split;       // per window; empty = unlabeled
    std::vector<double> originals;  // [count][window_len][channels]; empty if unavailable

    std::vector<int64_t> windows_of(Split s) const;
    bool has_originals() const { return !originals.empty(); }
    const double* original_window(int64_t w) const {
        return originals.data() + static_cast<size_t>(w) * batch.window_len * batch.num_channels;
    }
};

// ---------------------------------------------------------------------------
// minute-level ingestion (optional path; the day CSV below is the primary one)
// ---------------------------------------------------------------------------

struct MinuteRecord {
    std::string individual_id;
    long long minute_index = 0;  // minutes since study start; day = index / 1440
    std::optional<double> heart_rate;
    bool asleep = false;
    double steps = 0.0;
};

struct IngestStats {
    int64_t accepted = 0;
    int64_t rejected = 0;
};

std::vector<DayRecord> aggregate_days(const std::vector<MinuteRecord>& minutes,
                                      IngestStats* stats = nullptr);

// CSV `individual_id,minute_index,heart_rate,is_asleep,steps`; malformed rows
// are rejected and tallied rather than aborting the ingest.
std::vector<DayRecord> read_minute_csv(const std::string& path, IngestStats& stats);

// ---------------------------------------------------------------------------
// day-level corpus
// ---------------------------------------------------------------------------

// CSV `individual_id,day_index,resting_hr,sleep_minutes,steps,coverage`,
// empty fields for missing values, LF line endings.
std::vector<IndividualSeries> read_day_csv(const std::string& path);
void write_day_csv(const std::string& path, const std::vector<IndividualSeries>& corpus);

std::vector<IndividualSeries> group_by_individual(std::vector<DayRecord> days);

struct FilterImputeLog {
    std::vector<std::string> dropped_individuals;  // all-missing channel after the filter
    int64_t low_coverage_days = 0;
    int64_t imputed_values = 0;
};

// Days at or below min_coverage lose all three channels; every missing value
// is then replaced by the individual's mean of the channel's observed values.
// Returns nullopt (and logs the drop) when some channel has no observed value.
std::optional<IndividualSeries> filter_and_impute(const IndividualSeries& series,
                                                  double min_coverage, FilterImputeLog& log);

std::vector<IndividualSeries> filter_and_impute_all(const std::vector<IndividualSeries>& corpus,
                                                    double min_coverage, FilterImputeLog& log);

// Global per-channel extrema over the given (already imputed) series.
// Throws on an empty corpus, missing values, or a degenerate (min==max) channel.
ScalerBinSpec fit_scaler(const std::vector<IndividualSeries>& corpus, int num_bins);

struct WindowingLog {
    std::vector<std::string> skipped_individuals;  // shorter than one window
};

// Consecutive quantized windows at the given stride (21 = non-overlapping).
WindowBatch make_windows(const IndividualSeries& series, const ScalerBinSpec& spec, int stride = 21);

// Corpus-level windowing with split labels and retained original values.
WindowSet build_window_set(const std::vector<IndividualSeries>& corpus, const ScalerBinSpec& spec,
                           int stride, const std::unordered_map<std::string, Split>& assignment,
                           WindowingLog& log);

// ---------------------------------------------------------------------------
// window file: binary, little-endian. Layout:
//   magic "AGWB", u32 version, u32 num_windows, u32 window_len, u32 num_channels,
//   then u16 bin indices in [window][day][channel] order.
// A JSON sidecar at <path>.json carries the scaler plus per-window metadata.
// ---------------------------------------------------------------------------

void write_window_file(const std::string& path, const WindowSet& set);
WindowSet read_window_file(const std::string& path);

}  // namespace actigen
