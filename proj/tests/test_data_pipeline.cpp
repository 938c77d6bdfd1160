#include <doctest.h>

#include <cmath>
#include <fstream>

#include "actigen/data_pipeline.hpp"
#include "test_util.hpp"

using namespace actigen;

namespace {

IndividualSeries series_with_coverage(const std::vector<double>& coverage) {
    IndividualSeries s;
    s.individual_id = "p1";
    for (size_t i = 0; i < coverage.size(); ++i) {
        DayRecord d;
        d.individual_id = "p1";
        d.day_index = static_cast<int>(i);
        d.resting_hr = 60.0 + static_cast<double>(i);
        d.sleep_minutes = 400.0 + 10.0 * static_cast<double>(i);
        d.steps = 8000.0 + 100.0 * static_cast<double>(i);
        d.coverage_fraction = coverage[i];
        s.days.push_back(d);
    }
    return s;
}

ScalerBinSpec unit_scaler(int bins = 100) {
    ScalerBinSpec spec;
    spec.num_bins = bins;
    for (int c = 0; c < kNumChannels; ++c) {
        spec.min_value[static_cast<size_t>(c)] = 0.0;
        spec.max_value[static_cast<size_t>(c)] = 1.0;
    }
    return spec;
}

}  // namespace

TEST_SUITE("data_pipeline") {

TEST_CASE("aggregate_days handles a fully covered constant day") {
    std::vector<MinuteRecord> minutes;
    for (int m = 0; m < 1440; ++m) {
        MinuteRecord rec;
        rec.individual_id = "p1";
        rec.minute_index = m;
        rec.heart_rate = 60.0;
        rec.asleep = m < 400;
        rec.steps = 10.0;
        minutes.push_back(rec);
    }
    const auto days = aggregate_days(minutes);
    REQUIRE(days.size() == 1);
    CHECK(days[0].resting_hr == 60.0);
    CHECK(days[0].sleep_minutes == 400.0);
    CHECK(days[0].steps == 14400.0);
    CHECK(days[0].coverage_fraction == 1.0);
}

TEST_CASE("aggregate_days computes half coverage and the HR mean") {
    std::vector<MinuteRecord> minutes;
    for (int m = 0; m < 720; ++m) {
        MinuteRecord rec;
        rec.individual_id = "p1";
        rec.minute_index = m;
        rec.steps = 0.0;
        if (m == 0) rec.heart_rate = 58.0;
        if (m == 1) rec.heart_rate = 62.0;
        minutes.push_back(rec);
    }
    const auto days = aggregate_days(minutes);
    REQUIRE(days.size() == 1);
    CHECK(days[0].coverage_fraction == doctest::Approx(0.5));
    CHECK(days[0].resting_hr == doctest::Approx(60.0));  // mean of {58, 62}
}

TEST_CASE("aggregate_days rejects malformed records into the tally") {
    std::vector<MinuteRecord> minutes(3);
    minutes[0] = {"p1", 10, 60.0, false, 1.0};
    minutes[1] = {"p1", -5, 60.0, false, 1.0};  // bad timestamp
    minutes[2] = {"", 11, 60.0, false, 1.0};    // missing id
    IngestStats stats;
    const auto days = aggregate_days(minutes, &stats);
    CHECK(days.size() == 1);
    CHECK(stats.accepted == 1);
    CHECK(stats.rejected == 2);
}

TEST_CASE("minute CSV ingest tallies malformed rows instead of aborting") {
    testutil::TempDir dir("minutes");
    std::ofstream out(dir.file("minutes.csv"));
    out << "individual_id,minute_index,heart_rate,is_asleep,steps\n";
    for (int m = 0; m < 10; ++m) out << "p1," << m << ",60,0,5\n";
    out << "p1,not_a_minute,60,0,5\n";
    out << "p1,11,sixty,0,5\n";
    out.close();
    IngestStats stats;
    const auto days = read_minute_csv(dir.file("minutes.csv"), stats);
    REQUIRE(days.size() == 1);
    CHECK(stats.rejected == 2);
    CHECK(*days[0].steps == 50.0);
    CHECK(days[0].coverage_fraction == doctest::Approx(10.0 / 1440.0));
}

TEST_CASE("filter_and_impute replaces a low-coverage day with the channel means") {
    // coverage {0.9, 0.79, 0.85}: the middle day fails the > 0.8 filter
    auto s = series_with_coverage({0.9, 0.79, 0.85});
    FilterImputeLog log;
    const auto out = filter_and_impute(s, 0.8, log);
    REQUIRE(out.has_value());
    CHECK(log.low_coverage_days == 1);
    CHECK(log.imputed_values == 3);
    // mean of days 1 and 3 per channel
    CHECK(*out->days[1].resting_hr == doctest::Approx((60.0 + 62.0) / 2));
    CHECK(*out->days[1].sleep_minutes == doctest::Approx((400.0 + 420.0) / 2));
    CHECK(*out->days[1].steps == doctest::Approx((8000.0 + 8200.0) / 2));
    // untouched days keep their values
    CHECK(*out->days[0].resting_hr == 60.0);
    CHECK(*out->days[2].resting_hr == 62.0);
}

TEST_CASE("filter_and_impute is the identity on fully covered data") {
    const auto s = series_with_coverage({0.9, 0.95, 1.0});
    FilterImputeLog log;
    const auto out = filter_and_impute(s, 0.8, log);
    REQUIRE(out.has_value());
    CHECK(log.imputed_values == 0);
    for (size_t i = 0; i < s.days.size(); ++i) {
        CHECK(*out->days[i].resting_hr == *s.days[i].resting_hr);
        CHECK(*out->days[i].sleep_minutes == *s.days[i].sleep_minutes);
        CHECK(*out->days[i].steps == *s.days[i].steps);
    }
}

TEST_CASE("filter_and_impute fills a missing value with the per-individual mean") {
    auto s = series_with_coverage({0.9, 0.9, 0.9});
    s.days[0].resting_hr = 60.0;
    s.days[1].resting_hr = std::nullopt;  // missing channel on a covered day
    s.days[2].resting_hr = 70.0;
    FilterImputeLog log;
    const auto out = filter_and_impute(s, 0.8, log);
    REQUIRE(out.has_value());
    CHECK(*out->days[1].resting_hr == doctest::Approx(65.0));
}

TEST_CASE("filter_and_impute drops an individual with an all-missing channel") {
    auto s = series_with_coverage({0.5, 0.6, 0.7});  // every day fails the filter
    FilterImputeLog log;
    const auto out = filter_and_impute(s, 0.8, log);
    CHECK(!out.has_value());
    REQUIRE(log.dropped_individuals.size() == 1);
    CHECK(log.dropped_individuals[0] == "p1");
}

TEST_CASE("imputation preserves the per-channel mean") {
    Rng rng(99);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> coverage(30);
        for (auto& c : coverage) c = rng.uniform01() < 0.3 ? 0.5 : 0.9;
        coverage[0] = coverage[1] = 0.9;  // keep at least two observed days
        auto s = series_with_coverage(coverage);
        for (auto& d : s.days) {
            d.resting_hr = 40.0 + 50.0 * rng.uniform01();
            d.sleep_minutes = 1440.0 * rng.uniform01();
            d.steps = 20000.0 * rng.uniform01();
        }
        std::array<double, kNumChannels> before{};
        std::array<int64_t, kNumChannels> n{};
        for (const auto& d : s.days) {
            if (d.coverage_fraction > 0.8) {
                for (int c = 0; c < kNumChannels; ++c) {
                    before[static_cast<size_t>(c)] += *d.channel(c);
                    ++n[static_cast<size_t>(c)];
                }
            }
        }
        FilterImputeLog log;
        const auto out = filter_and_impute(s, 0.8, log);
        REQUIRE(out.has_value());
        for (int c = 0; c < kNumChannels; ++c) {
            double after = 0;
            for (const auto& d : out->days) after += *d.channel(c);
            after /= static_cast<double>(out->days.size());
            const double mean_before =
                before[static_cast<size_t>(c)] / static_cast<double>(n[static_cast<size_t>(c)]);
            CHECK(testutil::rel_err(after, mean_before) < 1e-12);
        }
    }
}

TEST_CASE("fit_scaler finds the global extrema") {
    auto a = series_with_coverage({0.9, 0.9});
    a.days[0].resting_hr = 55.0;
    a.days[1].resting_hr = 65.0;
    auto b = series_with_coverage({0.9, 0.9});
    b.individual_id = "p2";
    b.days[0].resting_hr = 60.0;
    b.days[1].resting_hr = 80.0;
    const auto spec = fit_scaler({a, b}, 100);
    CHECK(spec.min_value[kRestingHr] == 55.0);
    CHECK(spec.max_value[kRestingHr] == 80.0);
    CHECK(spec.num_bins == 100);
}

TEST_CASE("fit_scaler rejects a degenerate corpus") {
    const auto s = series_with_coverage({0.9});  // single day: min == max everywhere
    CHECK_THROWS_AS((void)fit_scaler({s}, 100), std::invalid_argument);
}

TEST_CASE("quantize maps scaled values onto bin edges") {
    const auto spec = unit_scaler();
    CHECK(quantize(0.0, 0, spec) == 0);
    CHECK(quantize(1.0, 0, spec) == 99);  // upper edge clamps to the last bin
    CHECK(quantize(0.5, 0, spec) == 50);
    CHECK(quantize(-5.0, 0, spec) == 0);   // out-of-range clamps
    CHECK(quantize(25.0, 0, spec) == 99);
}

TEST_CASE("dequantize returns bin midpoints and validates the index") {
    const auto spec = unit_scaler();
    CHECK(dequantize(0, 0, spec) == doctest::Approx(0.005));
    CHECK(dequantize(99, 0, spec) == doctest::Approx(0.995));
    CHECK_THROWS_AS((void)dequantize(100, 0, spec), std::invalid_argument);
    CHECK_THROWS_AS((void)dequantize(-1, 0, spec), std::invalid_argument);
}

TEST_CASE("quantize/dequantize round trip stays within half a bin width") {
    ScalerBinSpec spec;
    spec.num_bins = 100;
    spec.min_value = {35.0, 0.0, 0.0};
    spec.max_value = {180.0, 1440.0, 50000.0};
    Rng rng(4242);
    for (int c = 0; c < kNumChannels; ++c) {
        const double lo = spec.min_value[static_cast<size_t>(c)];
        const double hi = spec.max_value[static_cast<size_t>(c)];
        const double half_bin = (hi - lo) / (2.0 * spec.num_bins);
        for (int i = 0; i < 1000; ++i) {
            const double v = lo + (hi - lo) * rng.uniform01();
            const double rt = dequantize(quantize(v, c, spec), c, spec);
            CHECK(std::abs(v - rt) <= half_bin + 1e-12);
        }
    }
}

TEST_CASE("quantize is monotone non-decreasing") {
    const auto spec = unit_scaler();
    Rng rng(77);
    for (int i = 0; i < 1000; ++i) {
        double a = 2.0 * rng.uniform01() - 0.5;
        double b = 2.0 * rng.uniform01() - 0.5;
        if (a > b) std::swap(a, b);
        CHECK(quantize(a, 1, spec) <= quantize(b, 1, spec));
    }
}

TEST_CASE("make_windows yields floor(len/21) non-overlapping windows") {
    auto make_series = [](int days) {
        std::vector<double> coverage(static_cast<size_t>(days), 0.9);
        return series_with_coverage(coverage);
    };
    ScalerBinSpec spec;
    spec.num_bins = 100;
    spec.min_value = {50.0, 300.0, 7000.0};
    spec.max_value = {500.0, 4500.0, 50000.0};

    CHECK(make_windows(make_series(365), spec).count() == 17);
    CHECK(make_windows(make_series(21), spec).count() == 1);
    CHECK(make_windows(make_series(20), spec).count() == 0);

    // every source day lands in at most one window
    const auto batch = make_windows(make_series(365), spec);
    for (int64_t w = 0; w + 1 < batch.count(); ++w)
        CHECK(batch.sources[static_cast<size_t>(w + 1)].start_day -
                  batch.sources[static_cast<size_t>(w)].start_day ==
              21);
}

TEST_CASE("build_window_set logs too-short individuals") {
    auto long_series = series_with_coverage(std::vector<double>(42, 0.9));
    auto short_series = series_with_coverage(std::vector<double>(20, 0.9));
    short_series.individual_id = "p2";
    for (auto& d : short_series.days) d.individual_id = "p2";
    ScalerBinSpec spec;
    spec.num_bins = 100;
    spec.min_value = {50.0, 300.0, 7000.0};
    spec.max_value = {500.0, 4500.0, 50000.0};
    WindowingLog log;
    const auto set = build_window_set({long_series, short_series}, spec, 21,
                                      {{"p1", Split::kTrain}, {"p2", Split::kTrain}}, log);
    CHECK(set.batch.count() == 2);
    REQUIRE(log.skipped_individuals.size() == 1);
    CHECK(log.skipped_individuals[0] == "p2");
    CHECK(set.has_originals());
}

TEST_CASE("window file round trips exactly") {
    testutil::TempDir dir("windows");
    auto set = testutil::make_window_set(5, 21, 100, 31337);
    set.split = {Split::kTrain, Split::kTrain, Split::kVal, Split::kTest, Split::kTrain};
    set.originals.resize(set.batch.bins.size());
    for (size_t i = 0; i < set.originals.size(); ++i)
        set.originals[i] = static_cast<double>(set.batch.bins[i]) / 100.0;

    const std::string path = dir.file("w.agwb");
    write_window_file(path, set);
    const auto loaded = read_window_file(path);
    CHECK(loaded.batch.bins == set.batch.bins);
    CHECK(loaded.batch.window_len == set.batch.window_len);
    CHECK(loaded.split == set.split);
    CHECK(loaded.originals == set.originals);
    REQUIRE(loaded.batch.sources.size() == set.batch.sources.size());
    for (size_t i = 0; i < set.batch.sources.size(); ++i) {
        CHECK(loaded.batch.sources[i].individual_id == set.batch.sources[i].individual_id);
        CHECK(loaded.batch.sources[i].start_day == set.batch.sources[i].start_day);
    }

    // magic check
    std::ofstream bad(dir.file("bad.agwb"), std::ios::binary);
    bad << "NOPE";
    bad.close();
    CHECK_THROWS((void)read_window_file(dir.file("bad.agwb")));
}

TEST_CASE("day CSV round trips and reports malformed rows with line numbers") {
    testutil::TempDir dir("csv");
    const auto s = series_with_coverage({0.9, 0.7, 1.0});
    write_day_csv(dir.file("days.csv"), {s});
    const auto loaded = read_day_csv(dir.file("days.csv"));
    REQUIRE(loaded.size() == 1);
    REQUIRE(loaded[0].days.size() == 3);
    CHECK(*loaded[0].days[1].resting_hr == doctest::Approx(61.0));
    CHECK(loaded[0].days[1].coverage_fraction == doctest::Approx(0.7));

    std::ofstream out(dir.file("bad.csv"));
    out << "individual_id,day_index,resting_hr,sleep_minutes,steps,coverage\n";
    out << "p1,0,60,400,8000,0.9\n";
    out << "p1,1,sixty,400,8000,0.9\n";
    out.close();
    try {
        (void)read_day_csv(dir.file("bad.csv"));
        FAIL("expected a parse error");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
}

TEST_CASE("missing fields in the day CSV stay missing") {
    testutil::TempDir dir("csvmiss");
    std::ofstream out(dir.file("days.csv"));
    out << "individual_id,day_index,resting_hr,sleep_minutes,steps,coverage\n";
    out << "p1,0,,400,8000,0.9\n";
    out << "p1,1,60,400,8000,0.9\n";
    out.close();
    const auto loaded = read_day_csv(dir.file("days.csv"));
    REQUIRE(loaded.size() == 1);
    CHECK(!loaded[0].days[0].resting_hr.has_value());
    CHECK(loaded[0].days[1].resting_hr.has_value());
}

TEST_CASE("DayRecord invariants are enforced") {
    DayRecord d;
    d.individual_id = "p1";
    d.coverage_fraction = 1.5;
    CHECK_THROWS_AS(d.validate(), std::invalid_argument);
    d.coverage_fraction = 0.9;
    d.resting_hr = -3.0;
    CHECK_THROWS_AS(d.validate(), std::invalid_argument);
    d.resting_hr = 60.0;
    d.sleep_minutes = 2000.0;
    CHECK_THROWS_AS(d.validate(), std::invalid_argument);
    d.sleep_minutes = 400.0;
    d.steps = -1.0;
    CHECK_THROWS_AS(d.validate(), std::invalid_argument);
    d.steps = 0.0;
    CHECK_NOTHROW(d.validate());
}

}  // TEST_SUITE
