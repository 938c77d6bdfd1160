#include "actigen/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <stdexcept>

#include "actigen/csv.hpp"

namespace actigen::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

std::string file_checksum(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    uint64_t h = 0xcbf29ce484222325ull;
    char buf[1 << 16];
    while (in) {
        in.read(buf, sizeof(buf));
        const std::streamsize got = in.gcount();
        for (std::streamsize i = 0; i < got; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ull;
        }
    }
    char out[19];
    std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
    return out;
}

void write_manifest(const std::string& subcommand, const json& config,
                    const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs,
                    const std::vector<uint64_t>& seeds, double duration_seconds,
                    const std::string& primary_output) {
    json manifest;
    manifest["schema_version"] = 1;
    manifest["subcommand"] = subcommand;
    manifest["config"] = config;
    manifest["seeds"] = seeds;
    manifest["duration_seconds"] = duration_seconds;
    auto entries = [](const std::vector<std::string>& paths) {
        json arr = json::array();
        for (const std::string& p : paths)
            arr.push_back({{"path", p}, {"checksum", file_checksum(p)}});
        return arr;
    };
    manifest["inputs"] = entries(inputs);
    manifest["outputs"] = entries(outputs);

    const std::string path = primary_output + ".manifest.json";
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::invalid_argument("cannot write " + path);
    out << manifest.dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

SynthReport run_synth(const CohortConfig& config, const std::string& out_csv) {
    const auto corpus = simulate_cohort(config);
    write_day_csv(out_csv, corpus);
    SynthReport report;
    report.individuals = static_cast<int64_t>(corpus.size());
    for (const auto& s : corpus) report.day_rows += static_cast<int64_t>(s.days.size());
    return report;
}

// ---------------------------------------------------------------------------
// preprocess
// ---------------------------------------------------------------------------

PreprocessReport run_preprocess(const PreprocessOptions& opt) {
    const auto raw = read_day_csv(opt.input_csv);

    PreprocessReport report;
    report.individuals_in = static_cast<int64_t>(raw.size());

    FilterImputeLog impute_log;
    const auto imputed = filter_and_impute_all(raw, opt.min_coverage, impute_log);
    report.dropped = static_cast<int64_t>(impute_log.dropped_individuals.size());
    report.low_coverage_days = impute_log.low_coverage_days;
    report.imputed_values = impute_log.imputed_values;

    std::vector<std::string> ids;
    ids.reserve(imputed.size());
    for (const auto& s : imputed) ids.push_back(s.individual_id);
    const SplitResult split = split_by_individual(ids, opt.split_fractions, opt.seed);
    const auto assignment = split.assignment();

    // scaler bounds come from the training individuals only
    std::vector<IndividualSeries> train_series;
    for (const auto& s : imputed)
        if (assignment.at(s.individual_id) == Split::kTrain) train_series.push_back(s);
    const ScalerBinSpec scaler = fit_scaler(train_series, opt.num_bins);

    WindowingLog window_log;
    WindowSet set = build_window_set(imputed, scaler, opt.stride, assignment, window_log);
    report.skipped_short = static_cast<int64_t>(window_log.skipped_individuals.size());
    report.individuals_kept = static_cast<int64_t>(imputed.size()) - report.skipped_short;
    for (size_t w = 0; w < set.split.size(); ++w)
        ++report.windows_per_split[static_cast<size_t>(set.split[w])];

    write_window_file(opt.out_windows, set);
    return report;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

std::vector<int64_t> subsample_train_windows(const WindowSet& data, double fraction,
                                             uint64_t seed) {
    if (!(fraction > 0.0 && fraction <= 1.0))
        throw std::invalid_argument("fraction must be in (0,1]");
    const auto train = data.windows_of(Split::kTrain);
    if (fraction == 1.0) return train;

    std::map<std::string, std::vector<int64_t>> by_individual;
    for (const int64_t w : train)
        by_individual[data.batch.sources[static_cast<size_t>(w)].individual_id].push_back(w);

    std::vector<std::string> ids;
    for (const auto& [id, _] : by_individual) ids.push_back(id);
    Rng rng(derive_seed(seed, 0xf7ac));
    rng.shuffle(ids);

    const auto keep = std::max<int64_t>(
        1, static_cast<int64_t>(std::llround(fraction * static_cast<double>(ids.size()))));
    std::vector<int64_t> out;
    for (int64_t i = 0; i < keep && i < static_cast<int64_t>(ids.size()); ++i) {
        const auto& w = by_individual[ids[static_cast<size_t>(i)]];
        out.insert(out.end(), w.begin(), w.end());
    }
    std::sort(out.begin(), out.end());
    return out;
}

TrainReport run_train(const TrainRunOptions& opt) {
    const WindowSet data = read_window_file(opt.windows_path);
    const auto train_windows = subsample_train_windows(data, opt.fraction, opt.train.seed);
    const auto val_windows = data.windows_of(Split::kVal);

    std::set<std::string> individuals;
    for (const int64_t w : train_windows)
        individuals.insert(data.batch.sources[static_cast<size_t>(w)].individual_id);

    const TrainResult result = train(data, train_windows, val_windows, opt.model, opt.train,
                                     opt.out_dir);

    TrainReport report;
    report.train_windows = static_cast<int64_t>(train_windows.size());
    report.train_days = report.train_windows * data.batch.window_len;
    report.train_individuals = static_cast<int64_t>(individuals.size());
    report.steps = static_cast<int64_t>(result.steps.size());
    report.nan_abort = result.nan_abort;
    report.final_checkpoint = result.final_checkpoint;
    if (!result.steps.empty()) report.final_train_loss = result.steps.back().combined;
    if (!result.epochs.empty()) report.final_val_loss = result.epochs.back().val_combined;
    return report;
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

namespace {

struct PromptRef {
    int64_t window = -1;
    std::string id;
};

std::vector<PromptRef> resolve_prompts(const WindowSet& data, const GenerateOptions& opt) {
    std::vector<PromptRef> prompts;
    if (!opt.explicit_prompts.empty()) {
        for (const std::string& ref : opt.explicit_prompts) {
            const size_t at = ref.rfind('@');
            if (at == std::string::npos)
                throw std::invalid_argument("prompt reference must be <individual>@<start_day>: " +
                                            ref);
            const std::string id = ref.substr(0, at);
            const int start = static_cast<int>(csv::parse_int(ref.substr(at + 1), "start_day", 0));
            int64_t found = -1;
            for (int64_t w = 0; w < data.batch.count(); ++w) {
                const auto& src = data.batch.sources[static_cast<size_t>(w)];
                if (src.individual_id == id && src.start_day == start) {
                    found = w;
                    break;
                }
            }
            if (found < 0) throw std::invalid_argument("prompt window not found: " + ref);
            prompts.push_back({found, ref});
        }
        return prompts;
    }

    const auto pool = data.windows_of(opt.prompt_split);
    if (pool.empty())
        throw std::invalid_argument(std::string("no windows in the ") +
                                    split_name(opt.prompt_split) + " split to prompt from");
    if (opt.num_prompts <= 0) throw std::invalid_argument("prompts must be >= 1");
    Rng rng(derive_seed(opt.gen.seed, 0x6e0));
    for (int i = 0; i < opt.num_prompts; ++i) {
        const int64_t w = pool[static_cast<size_t>(rng.below(pool.size()))];
        const auto& src = data.batch.sources[static_cast<size_t>(w)];
        prompts.push_back({w, src.individual_id + "@" + std::to_string(src.start_day)});
    }
    return prompts;
}

}  // namespace

GenerateReport run_generate(const GenerateOptions& opt) {
    opt.gen.validate();
    const ModelParams<float> params = load_checkpoint(opt.checkpoint);
    const WindowSet data = read_window_file(opt.windows_path);
    if (params.config.num_bins != data.scaler.num_bins)
        throw std::invalid_argument("checkpoint and window file disagree on num_bins");
    if (params.config.seq_len != data.batch.window_len)
        throw std::invalid_argument("checkpoint and window file disagree on window length");

    const auto prompts = resolve_prompts(data, opt);
    std::vector<GeneratedSeries> series(prompts.size());

    // independent runs over shared immutable params
#pragma omp parallel for schedule(dynamic)
    for (long long i = 0; i < static_cast<long long>(prompts.size()); ++i) {
        GenerationConfig cfg = opt.gen;
        cfg.seed = derive_seed(opt.gen.seed, static_cast<uint64_t>(i) + 1);
        series[static_cast<size_t>(i)] =
            generate(data.batch.window(prompts[static_cast<size_t>(i)].window), params,
                     data.scaler, cfg, prompts[static_cast<size_t>(i)].id);
    }

    std::ofstream out(opt.out_csv, std::ios::binary | std::ios::trunc);
    if (!out) throw std::invalid_argument("cannot write " + opt.out_csv);
    out << "prompt_id,day,resting_hr,sleep_minutes,steps\n";
    int64_t rows = 0;
    for (const auto& s : series) {
        for (int day = 0; day * kNumChannels < static_cast<int>(s.values.size()); ++day) {
            out << s.prompt_id << ',' << day;
            for (int c = 0; c < kNumChannels; ++c)
                out << ',' << csv::format_value(s.values[static_cast<size_t>(day) * kNumChannels +
                                                         static_cast<size_t>(c)]);
            out << "\n";
            ++rows;
        }
    }
    if (!out) throw std::runtime_error("write failed: " + opt.out_csv);
    out.close();

    // sidecar records the scaler so evaluation can detect mismatched inputs
    json side;
    side["scaler"] = {{"num_bins", data.scaler.num_bins},
                      {"min", data.scaler.min_value},
                      {"max", data.scaler.max_value}};
    side["seed"] = opt.gen.seed;
    side["horizon"] = opt.gen.horizon;
    side["temperatures"] = opt.gen.temperatures;
    {
        json plist = json::array();
        for (const auto& p : prompts) plist.push_back(p.id);
        side["prompts"] = std::move(plist);
    }
    std::ofstream side_out(opt.out_csv + ".json", std::ios::binary | std::ios::trunc);
    side_out << side.dump() << "\n";

    if (!opt.bin_trace_csv.empty()) {
        std::ofstream trace(opt.bin_trace_csv, std::ios::binary | std::ios::trunc);
        trace << "prompt_id,day,bin_hr,bin_sleep,bin_steps\n";
        for (const auto& s : series) {
            for (int day = 0; day * kNumChannels < static_cast<int>(s.bins.size()); ++day) {
                trace << s.prompt_id << ',' << day;
                for (int c = 0; c < kNumChannels; ++c)
                    trace << ','
                          << s.bins[static_cast<size_t>(day) * kNumChannels +
                                    static_cast<size_t>(c)];
                trace << "\n";
            }
        }
    }

    if (!opt.plot_csv.empty()) {
        // long format: generated series next to the prompt individuals' real
        // values over the same horizon, for external figure tools
        std::ofstream plot(opt.plot_csv, std::ios::binary | std::ios::trunc);
        plot << "series_id,day,channel,value,set\n";
        for (const auto& s : series) {
            for (int day = 0; day * kNumChannels < static_cast<int>(s.values.size()); ++day)
                for (int c = 0; c < kNumChannels; ++c)
                    plot << s.prompt_id << ',' << day << ',' << kChannelNames[c] << ','
                         << csv::format_value(s.values[static_cast<size_t>(day) * kNumChannels +
                                                       static_cast<size_t>(c)])
                         << ",generated\n";
        }
        if (data.has_originals()) {
            std::set<std::string> emitted;
            for (const auto& p : prompts) {
                const auto& src = data.batch.sources[static_cast<size_t>(p.window)];
                if (!emitted.insert(src.individual_id).second) continue;
                // contiguous real values for this individual, window by window
                std::map<int, int64_t> by_start;
                for (int64_t w = 0; w < data.batch.count(); ++w) {
                    const auto& ws = data.batch.sources[static_cast<size_t>(w)];
                    if (ws.individual_id == src.individual_id) by_start[ws.start_day] = w;
                }
                int day = 0;
                for (const auto& [start, w] : by_start) {
                    const double* vals = data.original_window(w);
                    for (int t = 0; t < data.batch.window_len && day < opt.gen.horizon;
                         ++t, ++day)
                        for (int c = 0; c < kNumChannels; ++c)
                            plot << src.individual_id << ',' << day << ',' << kChannelNames[c]
                                 << ','
                                 << csv::format_value(
                                        vals[static_cast<size_t>(t) * kNumChannels +
                                             static_cast<size_t>(c)])
                                 << ",real\n";
                }
            }
        }
    }

    GenerateReport report;
    report.series = static_cast<int64_t>(series.size());
    report.rows = rows;
    return report;
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

SequenceSet load_generated_sequences(const std::string& csv_path, const ScalerBinSpec& scaler,
                                     int window_len) {
    std::ifstream in(csv_path);
    if (!in) throw std::invalid_argument("cannot open " + csv_path);
    std::string line;
    size_t line_no = 0;

    std::vector<std::string> order;
    std::map<std::string, std::map<int, std::array<double, kNumChannels>>> by_id;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line_no == 1) {
            if (line != "prompt_id,day,resting_hr,sleep_minutes,steps")
                throw std::invalid_argument(csv_path + ": unexpected header");
            continue;
        }
        if (line.empty()) continue;
        const auto f = csv::split_line(line);
        if (f.size() != 5)
            throw std::invalid_argument(csv_path + ": expected 5 fields at line " +
                                        std::to_string(line_no));
        const std::string& id = f[0];
        if (by_id.find(id) == by_id.end()) order.push_back(id);
        const int day = static_cast<int>(csv::parse_int(f[1], "day", line_no));
        by_id[id][day] = {csv::parse_double(f[2], "resting_hr", line_no),
                          csv::parse_double(f[3], "sleep_minutes", line_no),
                          csv::parse_double(f[4], "steps", line_no)};
    }

    SequenceSet out;
    out.len = window_len;
    for (const std::string& id : order) {
        const auto& days = by_id[id];
        std::vector<std::array<double, kNumChannels>> values;
        values.reserve(days.size());
        for (const auto& [day, v] : days) values.push_back(v);
        const int64_t windows = static_cast<int64_t>(values.size()) / window_len;
        for (int64_t w = 0; w < windows; ++w) {
            for (int t = 0; t < window_len; ++t) {
                const auto& v = values[static_cast<size_t>(w * window_len + t)];
                for (int c = 0; c < kNumChannels; ++c) {
                    out.original.push_back(v[static_cast<size_t>(c)]);
                    out.scaled.push_back(scaler.scale01(v[static_cast<size_t>(c)], c));
                }
            }
            out.ids.push_back(id + "#w" + std::to_string(w));
        }
    }
    if (out.ids.empty())
        throw std::invalid_argument(csv_path + ": no complete windows of generated data");
    return out;
}

namespace {

void check_generated_scaler(const std::string& generated_csv, const ScalerBinSpec& scaler) {
    std::ifstream side(generated_csv + ".json");
    if (!side) return;  // no sidecar, nothing to check against
    const json j = json::parse(side);
    if (!j.contains("scaler")) return;
    const auto mins = j.at("scaler").at("min").get<std::vector<double>>();
    const auto maxs = j.at("scaler").at("max").get<std::vector<double>>();
    const int bins = j.at("scaler").at("num_bins").get<int>();
    bool match = bins == scaler.num_bins && mins.size() == kNumChannels;
    for (int c = 0; match && c < kNumChannels; ++c)
        match = mins[static_cast<size_t>(c)] == scaler.min_value[static_cast<size_t>(c)] &&
                maxs[static_cast<size_t>(c)] == scaler.max_value[static_cast<size_t>(c)];
    if (!match)
        throw std::invalid_argument("scaler mismatch between real windows and generated data");
}

}  // namespace

EvalReport run_evaluate(const EvaluateOptions& opt) {
    CheckpointMeta meta;
    const ModelParams<float> params = load_checkpoint(opt.checkpoint, &meta);
    const WindowSet data = read_window_file(opt.windows_path);
    if (params.config.seq_len != data.batch.window_len ||
        params.config.num_bins != data.scaler.num_bins)
        throw std::invalid_argument("checkpoint and window file are dimensionally inconsistent");
    check_generated_scaler(opt.generated_csv, data.scaler);

    const auto eval_windows = data.windows_of(opt.eval_split);
    if (eval_windows.empty())
        throw std::invalid_argument(std::string("no windows in the ") +
                                    split_name(opt.eval_split) + " split");
    const SequenceSet real = sequence_set_from_windows(data, eval_windows);
    const SequenceSet generated =
        load_generated_sequences(opt.generated_csv, data.scaler, data.batch.window_len);

    EvalReport report;
    report.mae = next_day_mae(params, data, eval_windows);
    report.real_sequences = real.count();
    report.generated_sequences = generated.count();
    report.max_pairs = opt.max_pairs;
    report.pair_seed = opt.seed;
    report.training_size_days = meta.training_days;
    report.cosine_space = opt.cosine_scaled_space ? "scaled" : "original";
    report.dtw_space = opt.dtw_original_units ? "original" : "scaled";

    report.cosine_intra_real = pairwise_stats(real, nullptr, PairMetric::kCosine,
                                              opt.cosine_scaled_space, opt.max_pairs, opt.seed);
    report.cosine_intra_generated =
        generated.count() >= 2
            ? pairwise_stats(generated, nullptr, PairMetric::kCosine, opt.cosine_scaled_space,
                             opt.max_pairs, opt.seed)
            : MetricStats{};
    report.cosine_cross = pairwise_stats(real, &generated, PairMetric::kCosine,
                                         opt.cosine_scaled_space, opt.max_pairs, opt.seed);
    report.dtw_intra_real = pairwise_stats(real, nullptr, PairMetric::kDtw,
                                           opt.dtw_original_units, opt.max_pairs, opt.seed);
    report.dtw_intra_generated =
        generated.count() >= 2
            ? pairwise_stats(generated, nullptr, PairMetric::kDtw, opt.dtw_original_units,
                             opt.max_pairs, opt.seed)
            : MetricStats{};
    report.dtw_cross = pairwise_stats(real, &generated, PairMetric::kDtw, opt.dtw_original_units,
                                      opt.max_pairs, opt.seed);

    if (!opt.report_json.empty()) write_eval_report(opt.report_json, report);
    if (!opt.summary_csv.empty()) write_summary_csv(opt.summary_csv, report, opt.append_summary);
    if (!opt.features_csv.empty()) export_features(opt.features_csv, real, generated);
    return report;
}

// ---------------------------------------------------------------------------
// reproduce
// ---------------------------------------------------------------------------

std::vector<ReproduceRow> run_reproduce(const ReproduceOptions& opt, std::ostream& log) {
    fs::create_directories(opt.workdir);
    const fs::path work(opt.workdir);

    const std::string corpus_csv = (work / "corpus.csv").string();
    log << "[reproduce] simulating cohort: " << opt.cohort.num_individuals << " x "
        << opt.cohort.num_days << " days\n";
    run_synth(opt.cohort, corpus_csv);

    PreprocessOptions pre = opt.preprocess;
    pre.input_csv = corpus_csv;
    pre.out_windows = (work / "windows.agwb").string();
    const PreprocessReport prep = run_preprocess(pre);
    log << "[reproduce] windows: train " << prep.windows_per_split[0] << ", val "
        << prep.windows_per_split[1] << ", test " << prep.windows_per_split[2] << "\n";

    const std::string summary_csv = (work / "summary.csv").string();
    const std::string trend_csv = (work / "trend.csv").string();
    std::ofstream trend(trend_csv, std::ios::binary | std::ios::trunc);
    trend << "fraction,train_days,val_loss,cosine_cross,cosine_intra_real,dtw_cross,dtw_intra_real\n";

    std::vector<ReproduceRow> rows;
    bool first = true;
    for (const double fraction : opt.fractions) {
        char tag[32];
        std::snprintf(tag, sizeof(tag), "frac_%g", fraction);
        const fs::path run_dir = work / tag;

        TrainRunOptions train_opt;
        train_opt.windows_path = pre.out_windows;
        train_opt.out_dir = run_dir.string();
        train_opt.model = opt.model;
        train_opt.train = opt.train;
        train_opt.fraction = fraction;
        log << "[reproduce] training on fraction " << fraction << "..." << std::flush;
        const TrainReport tr = run_train(train_opt);
        log << " done (" << tr.train_windows << " windows, val loss " << tr.final_val_loss
            << ")\n";

        GenerateOptions gen_opt;
        gen_opt.checkpoint = tr.final_checkpoint;
        gen_opt.windows_path = pre.out_windows;
        gen_opt.out_csv = (run_dir / "generated.csv").string();
        gen_opt.num_prompts = opt.num_prompts;
        gen_opt.gen = opt.gen;
        run_generate(gen_opt);

        EvaluateOptions eval_opt;
        eval_opt.checkpoint = tr.final_checkpoint;
        eval_opt.windows_path = pre.out_windows;
        eval_opt.generated_csv = gen_opt.out_csv;
        eval_opt.report_json = (run_dir / "eval_report.json").string();
        eval_opt.summary_csv = summary_csv;
        eval_opt.append_summary = !first;
        const EvalReport report = run_evaluate(eval_opt);

        ReproduceRow row;
        row.fraction = fraction;
        row.train_days = tr.train_days;
        row.mae = report.mae;
        row.cosine_cross = report.cosine_cross.mean;
        row.dtw_cross = report.dtw_cross.mean;
        row.val_loss = tr.final_val_loss;
        rows.push_back(row);

        trend << csv::format_value(fraction) << ',' << tr.train_days << ','
              << csv::format_value(row.val_loss) << ',' << csv::format_value(row.cosine_cross)
              << ',' << csv::format_value(report.cosine_intra_real.mean) << ','
              << csv::format_value(row.dtw_cross) << ','
              << csv::format_value(report.dtw_intra_real.mean) << "\n";
        log << "[reproduce] fraction " << fraction << ": mae_hr " << report.mae[0]
            << ", cosine_cross " << row.cosine_cross << ", dtw_cross " << row.dtw_cross << "\n";
        first = false;
    }
    return rows;
}

}  // namespace actigen::pipeline
