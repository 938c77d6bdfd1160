#include "actigen/data_pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "actigen/binary_io.hpp"
#include "actigen/csv.hpp"

namespace actigen {

using nlohmann::json;

void DayRecord::validate() const {
    if (!(coverage_fraction >= 0.0 && coverage_fraction <= 1.0))
        throw std::invalid_argument("coverage_fraction out of [0,1] for " + individual_id +
                                    " day " + std::to_string(day_index));
    if (resting_hr && !(*resting_hr > 0.0))
        throw std::invalid_argument("resting_hr must be > 0 for " + individual_id + " day " +
                                    std::to_string(day_index));
    if (sleep_minutes && !(*sleep_minutes >= 0.0 && *sleep_minutes <= kMinutesPerDay))
        throw std::invalid_argument("sleep_minutes out of [0,1440] for " + individual_id +
                                    " day " + std::to_string(day_index));
    if (steps && !(*steps >= 0.0))
        throw std::invalid_argument("steps must be >= 0 for " + individual_id + " day " +
                                    std::to_string(day_index));
}

void ScalerBinSpec::validate() const {
    if (num_bins <= 0) throw std::invalid_argument("num_bins must be positive");
    for (int c = 0; c < kNumChannels; ++c) {
        if (!(min_value[c] < max_value[c]))
            throw std::invalid_argument(std::string("degenerate scaler channel ") +
                                        kChannelNames[c] + ": min == max");
    }
}

int quantize(double value, int channel, const ScalerBinSpec& spec) {
    const double scaled = spec.scale01(value, channel);
    const int bin = static_cast<int>(std::floor(scaled * spec.num_bins));
    return std::min(bin, spec.num_bins - 1);
}

double dequantize(int bin, int channel, const ScalerBinSpec& spec) {
    if (bin < 0 || bin >= spec.num_bins)
        throw std::invalid_argument("bin " + std::to_string(bin) + " out of [0," +
                                    std::to_string(spec.num_bins - 1) + "]");
    const double s = (bin + 0.5) / spec.num_bins;
    return spec.min_value[channel] + s * (spec.max_value[channel] - spec.min_value[channel]);
}

void WindowBatch::append(const WindowBatch& other) {
    bins.insert(bins.end(), other.bins.begin(), other.bins.end());
    sources.insert(sources.end(), other.sources.begin(), other.sources.end());
}

const char* split_name(Split s) {
    switch (s) {
        case Split::kTrain: return "train";
        case Split::kVal: return "val";
        case Split::kTest: return "test";
    }
    return "?";
}

Split split_from_name(const std::string& name) {
    if (name == "train") return Split::kTrain;
    if (name == "val") return Split::kVal;
    if (name == "test") return Split::kTest;
    throw std::invalid_argument("unknown split '" + name + "'");
}

std::vector<int64_t> WindowSet::windows_of(Split s) const {
    std::vector<int64_t> out;
    for (int64_t w = 0; w < batch.count(); ++w) {
        if (split.empty() || split[static_cast<size_t>(w)] == s) out.push_back(w);
    }
    return out;
}

// ---------------------------------------------------------------------------
// minute-level aggregation
// ---------------------------------------------------------------------------

std::vector<DayRecord> aggregate_days(const std::vector<MinuteRecord>& minutes, IngestStats* stats) {
    struct DayAccum {
        double hr_sum = 0;
        int64_t hr_count = 0;
        double sleep_sum = 0;
        double step_sum = 0;
        int64_t minutes = 0;
    };
    std::map<std::pair<std::string, long long>, DayAccum> days;

    for (const MinuteRecord& m : minutes) {
        if (m.minute_index < 0 || m.individual_id.empty()) {
            if (stats) ++stats->rejected;
            continue;
        }
        DayAccum& acc = days[{m.individual_id, m.minute_index / kMinutesPerDay}];
        ++acc.minutes;
        if (m.heart_rate) {
            acc.hr_sum += *m.heart_rate;
            ++acc.hr_count;
        }
        if (m.asleep) acc.sleep_sum += 1.0;
        acc.step_sum += m.steps;
        if (stats) ++stats->accepted;
    }

    std::vector<DayRecord> out;
    out.reserve(days.size());
    for (const auto& [key, acc] : days) {
        DayRecord rec;
        rec.individual_id = key.first;
        rec.day_index = static_cast<int>(key.second);
        rec.coverage_fraction = static_cast<double>(acc.minutes) / kMinutesPerDay;
        if (acc.hr_count > 0) rec.resting_hr = acc.hr_sum / static_cast<double>(acc.hr_count);
        rec.sleep_minutes = acc.sleep_sum;
        rec.steps = acc.step_sum;
        rec.validate();
        out.push_back(std::move(rec));
    }
    return out;
}

std::vector<DayRecord> read_minute_csv(const std::string& path, IngestStats& stats) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open " + path);
    std::string line;
    size_t line_no = 0;
    std::vector<MinuteRecord> minutes;
    while (std::getline(in, line)) {
        ++line_no;
        if (line_no == 1) continue;  // header
        if (line.empty()) continue;
        const auto f = csv::split_line(line);
        try {
            if (f.size() != 5) throw std::invalid_argument("expected 5 fields");
            MinuteRecord m;
            m.individual_id = f[0];
            m.minute_index = csv::parse_int(f[1], "minute_index", line_no);
            if (m.minute_index < 0) throw std::invalid_argument("negative minute_index");
            m.heart_rate = csv::parse_optional_double(f[2], "heart_rate", line_no);
            m.asleep = csv::parse_int(f[3], "is_asleep", line_no) != 0;
            m.steps = csv::parse_double(f[4], "steps", line_no);
            minutes.push_back(std::move(m));
        } catch (const std::invalid_argument&) {
            ++stats.rejected;
        }
    }
    return aggregate_days(minutes, &stats);
}

// ---------------------------------------------------------------------------
// day-level CSV
// ---------------------------------------------------------------------------

static const char* kDayCsvHeader = "individual_id,day_index,resting_hr,sleep_minutes,steps,coverage";

std::vector<IndividualSeries> read_day_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open " + path);
    std::string line;
    size_t line_no = 0;
    std::vector<DayRecord> days;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line_no == 1) {
            if (line != kDayCsvHeader)
                throw std::invalid_argument(path + ": unexpected header '" + line + "'");
            continue;
        }
        if (line.empty()) continue;
        const auto f = csv::split_line(line);
        if (f.size() != 6)
            throw std::invalid_argument(path + ": expected 6 fields at line " +
                                        std::to_string(line_no));
        DayRecord rec;
        rec.individual_id = f[0];
        if (rec.individual_id.empty())
            throw std::invalid_argument(path + ": empty individual_id at line " +
                                        std::to_string(line_no));
        rec.day_index = static_cast<int>(csv::parse_int(f[1], "day_index", line_no));
        rec.resting_hr = csv::parse_optional_double(f[2], "resting_hr", line_no);
        rec.sleep_minutes = csv::parse_optional_double(f[3], "sleep_minutes", line_no);
        rec.steps = csv::parse_optional_double(f[4], "steps", line_no);
        rec.coverage_fraction = csv::parse_double(f[5], "coverage", line_no);
        try {
            rec.validate();
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument(path + " line " + std::to_string(line_no) + ": " + e.what());
        }
        days.push_back(std::move(rec));
    }
    if (days.empty()) throw std::invalid_argument(path + ": no data rows");
    return group_by_individual(std::move(days));
}

void write_day_csv(const std::string& path, const std::vector<IndividualSeries>& corpus) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::invalid_argument("cannot write " + path);
    out << kDayCsvHeader << "\n";
    auto field = [](const std::optional<double>& v) {
        return v ? csv::format_value(*v) : std::string();
    };
    for (const IndividualSeries& s : corpus) {
        for (const DayRecord& d : s.days) {
            out << s.individual_id << ',' << d.day_index << ',' << field(d.resting_hr) << ','
                << field(d.sleep_minutes) << ',' << field(d.steps) << ','
                << csv::format_value(d.coverage_fraction) << "\n";
        }
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

std::vector<IndividualSeries> group_by_individual(std::vector<DayRecord> days) {
    std::map<std::string, IndividualSeries> by_id;
    for (DayRecord& d : days) {
        IndividualSeries& s = by_id[d.individual_id];
        s.individual_id = d.individual_id;
        s.days.push_back(std::move(d));
    }
    std::vector<IndividualSeries> out;
    out.reserve(by_id.size());
    for (auto& [id, series] : by_id) {
        std::sort(series.days.begin(), series.days.end(),
                  [](const DayRecord& a, const DayRecord& b) { return a.day_index < b.day_index; });
        for (size_t i = 1; i < series.days.size(); ++i) {
            if (series.days[i].day_index == series.days[i - 1].day_index)
                throw std::invalid_argument("duplicate day " +
                                            std::to_string(series.days[i].day_index) + " for " + id);
        }
        out.push_back(std::move(series));
    }
    return out;
}

// ---------------------------------------------------------------------------
// filter + impute
// ---------------------------------------------------------------------------

std::optional<IndividualSeries> filter_and_impute(const IndividualSeries& series,
                                                  double min_coverage, FilterImputeLog& log) {
    if (series.days.empty()) throw std::invalid_argument("empty series for " + series.individual_id);

    IndividualSeries out = series;
    for (DayRecord& d : out.days) {
        if (d.coverage_fraction <= min_coverage) {
            for (int c = 0; c < kNumChannels; ++c) d.set_channel(c, std::nullopt);
            ++log.low_coverage_days;
        }
    }

    std::array<double, kNumChannels> mean{};
    for (int c = 0; c < kNumChannels; ++c) {
        double sum = 0;
        int64_t n = 0;
        for (const DayRecord& d : out.days) {
            if (const auto v = d.channel(c)) {
                sum += *v;
                ++n;
            }
        }
        if (n == 0) {
            log.dropped_individuals.push_back(series.individual_id);
            return std::nullopt;
        }
        mean[c] = sum / static_cast<double>(n);
    }

    for (DayRecord& d : out.days) {
        for (int c = 0; c < kNumChannels; ++c) {
            if (!d.channel(c)) {
                d.set_channel(c, mean[c]);
                ++log.imputed_values;
            }
        }
    }
    return out;
}

std::vector<IndividualSeries> filter_and_impute_all(const std::vector<IndividualSeries>& corpus,
                                                    double min_coverage, FilterImputeLog& log) {
    std::vector<IndividualSeries> out;
    out.reserve(corpus.size());
    for (const IndividualSeries& s : corpus) {
        if (auto kept = filter_and_impute(s, min_coverage, log)) out.push_back(std::move(*kept));
    }
    return out;
}

ScalerBinSpec fit_scaler(const std::vector<IndividualSeries>& corpus, int num_bins) {
    if (corpus.empty()) throw std::invalid_argument("fit_scaler: empty corpus");
    ScalerBinSpec spec;
    spec.num_bins = num_bins;
    spec.min_value.fill(std::numeric_limits<double>::infinity());
    spec.max_value.fill(-std::numeric_limits<double>::infinity());
    for (const IndividualSeries& s : corpus) {
        for (const DayRecord& d : s.days) {
            for (int c = 0; c < kNumChannels; ++c) {
                const auto v = d.channel(c);
                if (!v) throw std::invalid_argument("fit_scaler: missing value in " + s.individual_id);
                spec.min_value[c] = std::min(spec.min_value[c], *v);
                spec.max_value[c] = std::max(spec.max_value[c], *v);
            }
        }
    }
    spec.validate();  // rejects constant channels
    return spec;
}

// ---------------------------------------------------------------------------
// windowing
// ---------------------------------------------------------------------------

WindowBatch make_windows(const IndividualSeries& series, const ScalerBinSpec& spec, int stride) {
    if (stride <= 0) throw std::invalid_argument("stride must be positive");
    WindowBatch batch;
    const int len = batch.window_len;
    const int n = static_cast<int>(series.days.size());
    for (int start = 0; start + len <= n; start += stride) {
        for (int t = 0; t < len; ++t) {
            const DayRecord& d = series.days[static_cast<size_t>(start + t)];
            for (int c = 0; c < kNumChannels; ++c) {
                const auto v = d.channel(c);
                if (!v)
                    throw std::invalid_argument("make_windows: missing value in " +
                                                series.individual_id);
                batch.bins.push_back(static_cast<uint16_t>(quantize(*v, c, spec)));
            }
        }
        batch.sources.push_back({series.individual_id, series.days[static_cast<size_t>(start)].day_index});
    }
    return batch;
}

WindowSet build_window_set(const std::vector<IndividualSeries>& corpus, const ScalerBinSpec& spec,
                           int stride, const std::unordered_map<std::string, Split>& assignment,
                           WindowingLog& log) {
    WindowSet set;
    set.scaler = spec;
    const int len = set.batch.window_len;
    for (const IndividualSeries& s : corpus) {
        const WindowBatch w = make_windows(s, spec, stride);
        if (w.count() == 0) {
            log.skipped_individuals.push_back(s.individual_id);
            continue;
        }
        const auto it = assignment.find(s.individual_id);
        const Split sp = it == assignment.end() ? Split::kTrain : it->second;
        for (int64_t i = 0; i < w.count(); ++i) set.split.push_back(sp);
        // retain pre-quantization values alongside the bins
        const int n = static_cast<int>(s.days.size());
        for (int start = 0; start + len <= n; start += stride) {
            for (int t = 0; t < len; ++t) {
                const DayRecord& d = s.days[static_cast<size_t>(start + t)];
                for (int c = 0; c < kNumChannels; ++c) set.originals.push_back(*d.channel(c));
            }
        }
        set.batch.append(w);
    }
    return set;
}

// ---------------------------------------------------------------------------
// window file IO
// ---------------------------------------------------------------------------

static constexpr uint32_t kWindowFormatVersion = 1;

void write_window_file(const std::string& path, const WindowSet& set) {
    std::string bytes;
    bytes.reserve(20 + set.batch.bins.size() * 2);
    bytes += "AGWB";
    bin::put_u32(bytes, kWindowFormatVersion);
    bin::put_u32(bytes, static_cast<uint32_t>(set.batch.count()));
    bin::put_u32(bytes, static_cast<uint32_t>(set.batch.window_len));
    bin::put_u32(bytes, static_cast<uint32_t>(set.batch.num_channels));
    for (const uint16_t b : set.batch.bins) bin::put_u16(bytes, b);
    bin::write_file(path, bytes);

    json side;
    side["format_version"] = kWindowFormatVersion;
    side["scaler"] = {{"num_bins", set.scaler.num_bins},
                      {"min", set.scaler.min_value},
                      {"max", set.scaler.max_value}};
    json windows = json::array();
    for (int64_t w = 0; w < set.batch.count(); ++w) {
        json entry;
        entry["individual_id"] = set.batch.sources[static_cast<size_t>(w)].individual_id;
        entry["start_day"] = set.batch.sources[static_cast<size_t>(w)].start_day;
        if (!set.split.empty()) entry["split"] = split_name(set.split[static_cast<size_t>(w)]);
        windows.push_back(std::move(entry));
    }
    side["windows"] = std::move(windows);
    if (set.has_originals()) side["originals"] = set.originals;

    std::ofstream out(path + ".json", std::ios::binary | std::ios::trunc);
    if (!out) throw std::invalid_argument("cannot write " + path + ".json");
    out << side.dump() << "\n";
    if (!out) throw std::runtime_error("write failed: " + path + ".json");
}

WindowSet read_window_file(const std::string& path) {
    bin::Reader r(path);
    if (r.str(4) != "AGWB") throw std::runtime_error(path + ": bad magic");
    const uint32_t version = r.u32();
    if (version != kWindowFormatVersion)
        throw std::runtime_error(path + ": unsupported version " + std::to_string(version));
    const uint32_t count = r.u32();
    const uint32_t len = r.u32();
    const uint32_t channels = r.u32();
    if (channels != kNumChannels)
        throw std::runtime_error(path + ": expected 3 channels, got " + std::to_string(channels));

    WindowSet set;
    set.batch.window_len = static_cast<int>(len);
    set.batch.num_channels = static_cast<int>(channels);
    const size_t total = static_cast<size_t>(count) * len * channels;
    set.batch.bins.reserve(total);
    for (size_t i = 0; i < total; ++i) set.batch.bins.push_back(r.u16());

    std::ifstream side_in(path + ".json");
    if (!side_in) throw std::runtime_error("missing sidecar " + path + ".json");
    json side = json::parse(side_in);
    set.scaler.num_bins = side.at("scaler").at("num_bins").get<int>();
    const auto mins = side.at("scaler").at("min").get<std::vector<double>>();
    const auto maxs = side.at("scaler").at("max").get<std::vector<double>>();
    if (mins.size() != kNumChannels || maxs.size() != kNumChannels)
        throw std::runtime_error(path + ".json: bad scaler");
    std::copy(mins.begin(), mins.end(), set.scaler.min_value.begin());
    std::copy(maxs.begin(), maxs.end(), set.scaler.max_value.begin());
    set.scaler.validate();

    const json& windows = side.at("windows");
    if (windows.size() != count) throw std::runtime_error(path + ".json: window count mismatch");
    for (const json& entry : windows) {
        set.batch.sources.push_back(
            {entry.at("individual_id").get<std::string>(), entry.at("start_day").get<int>()});
        if (entry.contains("split")) set.split.push_back(split_from_name(entry.at("split")));
    }
    if (!set.split.empty() && set.split.size() != count)
        throw std::runtime_error(path + ".json: split labels incomplete");
    if (side.contains("originals")) {
        set.originals = side.at("originals").get<std::vector<double>>();
        if (set.originals.size() != total)
            throw std::runtime_error(path + ".json: originals size mismatch");
    }

    for (const uint16_t b : set.batch.bins) {
        if (b >= set.scaler.num_bins) throw std::runtime_error(path + ": bin index out of range");
    }
    return set;
}

}  // namespace actigen
