// actigen: synthesize wearable activity cohorts, preprocess them into binned
// windows, train the multi-task attention model, sample new sequences, and
// score them against held-out data. Exit codes: 0 success, 2 validation
// error, 3 runtime/numerical error.

#include <chrono>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "actigen/csv.hpp"
#include "actigen/pipeline.hpp"

namespace {

using nlohmann::json;
using namespace actigen;

constexpr int kExitValidation = 2;
constexpr int kExitRuntime = 3;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

// --config JSON files: keys mirror the long flag names. Values set here act
// as defaults, so explicit flags still win (flags > config file > built-ins).
json load_config_json(int argc, char** argv) {
    std::string path;
    for (int i = 1; i < argc - 1; ++i) {
        if (std::string(argv[i]) == "--config") path = argv[i + 1];
    }
    if (path.empty()) return json::object();
    if (!std::filesystem::exists(path)) {
        if (const char* dir = std::getenv("ACTIGEN_CONFIG_DIR")) {
            const auto resolved = std::filesystem::path(dir) / path;
            if (std::filesystem::exists(resolved)) path = resolved.string();
        }
    }
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open config file " + path);
    return json::parse(in);
}

template <class T>
void from_config(const json& cfg, const char* key, T& target) {
    if (cfg.contains(key)) target = cfg.at(key).get<T>();
}

void add_config_flag(CLI::App* cmd, std::string& sink) {
    cmd->add_option("--config", sink, "JSON config file (keys mirror the long flag names)");
}

struct GlobalArgs {
    int threads = 0;
};

void apply_threads(int threads) {
#ifdef _OPENMP
    if (threads > 0) omp_set_num_threads(threads);
#else
    (void)threads;
#endif
}

json model_config_json(const ModelConfig& m) {
    return json{{"d_model", m.d_model},   {"num_heads", m.num_heads},
                {"num_blocks", m.num_blocks}, {"ffn_hidden", m.ffn_hidden},
                {"num_bins", m.num_bins}, {"seq_len", m.seq_len},
                {"dropout_p", m.dropout_p}};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"actigen: multi-task self-attention generator for wearable activity series"};
    app.require_subcommand(1);

    GlobalArgs global;
    app.add_option("--threads", global.threads, "worker threads (0 = library default)");

    json cfg = json::object();
    try {
        cfg = load_config_json(argc, argv);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    }
    std::string config_path_sink;

    // ----- synth-data -----------------------------------------------------
    auto* synth = app.add_subcommand("synth-data", "simulate a synthetic activity cohort");
    CohortConfig cohort;
    std::string synth_out = "corpus.csv";
    from_config(cfg, "individuals", cohort.num_individuals);
    from_config(cfg, "days", cohort.num_days);
    from_config(cfg, "seed", cohort.seed);
    from_config(cfg, "ar-coeff", cohort.ar_coeff);
    from_config(cfg, "missingness", cohort.missingness_rate);
    from_config(cfg, "out", synth_out);
    synth->add_option("--individuals", cohort.num_individuals, "number of individuals")
        ->capture_default_str();
    synth->add_option("--days", cohort.num_days, "days per individual")->capture_default_str();
    synth->add_option("--seed", cohort.seed, "simulation seed")->capture_default_str();
    synth->add_option("--ar-coeff", cohort.ar_coeff, "lag-1 noise autocorrelation, in [0,1)")
        ->capture_default_str();
    synth->add_option("--missingness", cohort.missingness_rate,
                      "fraction of low-coverage days, in [0,1)")
        ->capture_default_str();
    synth->add_option("--hr-baseline", cohort.channels[0].baseline_location)->capture_default_str();
    synth->add_option("--hr-spread", cohort.channels[0].baseline_spread)->capture_default_str();
    synth->add_option("--hr-weekly", cohort.channels[0].weekly_amplitude)->capture_default_str();
    synth->add_option("--sleep-baseline", cohort.channels[1].baseline_location)
        ->capture_default_str();
    synth->add_option("--sleep-spread", cohort.channels[1].baseline_spread)->capture_default_str();
    synth->add_option("--sleep-weekly", cohort.channels[1].weekly_amplitude)
        ->capture_default_str();
    synth->add_option("--steps-baseline", cohort.channels[2].baseline_location)
        ->capture_default_str();
    synth->add_option("--steps-spread", cohort.channels[2].baseline_spread)->capture_default_str();
    synth->add_option("--steps-weekly", cohort.channels[2].weekly_amplitude)
        ->capture_default_str();
    synth->add_option("--out", synth_out, "output day-level CSV path")->capture_default_str();
    add_config_flag(synth, config_path_sink);

    // ----- preprocess -----------------------------------------------------
    auto* prep = app.add_subcommand("preprocess",
                                    "filter, impute, scale, and window a day-level CSV");
    pipeline::PreprocessOptions prep_opt;
    prep_opt.out_windows = "windows.agwb";
    std::string split_spec = "0.8,0.1,0.1";
    from_config(cfg, "input", prep_opt.input_csv);
    from_config(cfg, "out", prep_opt.out_windows);
    from_config(cfg, "stride", prep_opt.stride);
    from_config(cfg, "bins", prep_opt.num_bins);
    from_config(cfg, "min-coverage", prep_opt.min_coverage);
    from_config(cfg, "seed", prep_opt.seed);
    from_config(cfg, "split", split_spec);
    prep->add_option("--input", prep_opt.input_csv, "day-level CSV")->required();
    prep->add_option("--out", prep_opt.out_windows, "output window file (.agwb + .json sidecar)")
        ->capture_default_str();
    prep->add_option("--stride", prep_opt.stride, "window stride in days (21 = non-overlapping)")
        ->capture_default_str();
    prep->add_option("--bins", prep_opt.num_bins, "quantization bins per channel")
        ->capture_default_str();
    prep->add_option("--min-coverage", prep_opt.min_coverage,
                     "days need coverage strictly above this to keep their values")
        ->capture_default_str();
    prep->add_option("--split", split_spec, "train,val,test fractions")->capture_default_str();
    prep->add_option("--seed", prep_opt.seed, "split seed")->capture_default_str();
    add_config_flag(prep, config_path_sink);

    // ----- train ------------------------------------------------------------
    auto* tr = app.add_subcommand("train", "train the model on a window file");
    pipeline::TrainRunOptions train_opt;
    train_opt.out_dir = "run";
    bool tiny = false;
    from_config(cfg, "windows", train_opt.windows_path);
    from_config(cfg, "out-dir", train_opt.out_dir);
    from_config(cfg, "epochs", train_opt.train.epochs);
    from_config(cfg, "lr", train_opt.train.initial_lr);
    from_config(cfg, "batch", train_opt.train.batch_size);
    from_config(cfg, "seed", train_opt.train.seed);
    from_config(cfg, "fraction", train_opt.fraction);
    tr->add_option("--windows", train_opt.windows_path, "window file from preprocess")
        ->required();
    tr->add_option("--out-dir", train_opt.out_dir,
                   "run directory (checkpoints per epoch + final.agck + loss_log.csv)")
        ->capture_default_str();
    tr->add_option("--epochs", train_opt.train.epochs)->capture_default_str();
    tr->add_option("--lr", train_opt.train.initial_lr, "initial learning rate")
        ->capture_default_str();
    tr->add_option("--decay-factor", train_opt.train.decay_factor)->capture_default_str();
    tr->add_option("--decay-interval", train_opt.train.decay_interval, "epochs between decays")
        ->capture_default_str();
    tr->add_option("--batch", train_opt.train.batch_size)->capture_default_str();
    tr->add_option("--seed", train_opt.train.seed)->capture_default_str();
    tr->add_option("--fraction", train_opt.fraction,
                   "train on this fraction of training individuals, in (0,1]")
        ->capture_default_str();
    tr->add_option("--d-model", train_opt.model.d_model)->capture_default_str();
    tr->add_option("--heads", train_opt.model.num_heads)->capture_default_str();
    tr->add_option("--blocks", train_opt.model.num_blocks)->capture_default_str();
    tr->add_option("--ffn-hidden", train_opt.model.ffn_hidden)->capture_default_str();
    tr->add_option("--dropout", train_opt.model.dropout_p)->capture_default_str();
    tr->add_flag("--tiny", tiny, "tiny architecture preset (d_model 8, 2 heads, 1 block)");
    add_config_flag(tr, config_path_sink);

    // ----- generate ---------------------------------------------------------
    auto* gen = app.add_subcommand("generate", "sample new sequences from a checkpoint");
    pipeline::GenerateOptions gen_opt;
    gen_opt.out_csv = "generated.csv";
    std::string prompt_split = "test";
    from_config(cfg, "checkpoint", gen_opt.checkpoint);
    from_config(cfg, "windows", gen_opt.windows_path);
    from_config(cfg, "out", gen_opt.out_csv);
    from_config(cfg, "prompts", gen_opt.num_prompts);
    from_config(cfg, "horizon", gen_opt.gen.horizon);
    from_config(cfg, "seed", gen_opt.gen.seed);
    gen->add_option("--checkpoint", gen_opt.checkpoint)->required();
    gen->add_option("--windows", gen_opt.windows_path, "window file providing prompts + scaler")
        ->required();
    gen->add_option("--out", gen_opt.out_csv, "generated CSV path")->capture_default_str();
    gen->add_option("--prompts,--random-prompts", gen_opt.num_prompts,
                    "random prompts drawn from --prompt-split")
        ->capture_default_str();
    gen->add_option("--prompt", gen_opt.explicit_prompts,
                    "explicit prompt <individual>@<start_day> (repeatable)");
    gen->add_option("--prompt-split", prompt_split, "split to draw prompts from")
        ->capture_default_str();
    gen->add_option("--horizon", gen_opt.gen.horizon, "days to generate per prompt")
        ->capture_default_str();
    gen->add_option("--temperature-hr", gen_opt.gen.temperatures[0])->capture_default_str();
    gen->add_option("--temperature-sleep", gen_opt.gen.temperatures[1])->capture_default_str();
    gen->add_option("--temperature-steps", gen_opt.gen.temperatures[2])->capture_default_str();
    gen->add_option("--seed", gen_opt.gen.seed)->capture_default_str();
    gen->add_option("--bin-trace", gen_opt.bin_trace_csv, "optional bin trace CSV");
    gen->add_option("--plot-csv", gen_opt.plot_csv, "optional long-format CSV for figures");
    add_config_flag(gen, config_path_sink);

    // ----- evaluate ---------------------------------------------------------
    auto* ev = app.add_subcommand("evaluate", "score generated data against held-out windows");
    pipeline::EvaluateOptions eval_opt;
    eval_opt.report_json = "eval_report.json";
    std::string eval_split = "test";
    std::string cosine_space = "scaled";
    std::string dtw_space = "original";
    from_config(cfg, "checkpoint", eval_opt.checkpoint);
    from_config(cfg, "windows", eval_opt.windows_path);
    from_config(cfg, "generated", eval_opt.generated_csv);
    from_config(cfg, "max-pairs", eval_opt.max_pairs);
    from_config(cfg, "seed", eval_opt.seed);
    ev->add_option("--checkpoint", eval_opt.checkpoint)->required();
    ev->add_option("--windows", eval_opt.windows_path)->required();
    ev->add_option("--generated", eval_opt.generated_csv, "generated CSV from `generate`")
        ->required();
    ev->add_option("--report", eval_opt.report_json, "output report JSON")
        ->capture_default_str();
    ev->add_option("--summary-csv", eval_opt.summary_csv,
                   "optional summary CSV (training_size,mae_hr,mae_sleep,mae_steps)");
    ev->add_option("--features-csv", eval_opt.features_csv,
                   "optional flattened feature export for external embedding tools");
    ev->add_option("--max-pairs", eval_opt.max_pairs, "cap on sampled metric pairs")
        ->capture_default_str();
    ev->add_option("--seed", eval_opt.seed, "pair-sampling seed")->capture_default_str();
    ev->add_option("--split", eval_split, "split to evaluate against")->capture_default_str();
    ev->add_option("--cosine-space", cosine_space, "scaled|original")->capture_default_str();
    ev->add_option("--dtw-space", dtw_space, "original|scaled")->capture_default_str();
    add_config_flag(ev, config_path_sink);

    // ----- reproduce ----------------------------------------------------------
    auto* rep = app.add_subcommand(
        "reproduce", "full chain at several training-set fractions; emits the scaling table");
    pipeline::ReproduceOptions rep_opt;
    rep_opt.workdir = "reproduce";
    std::string fractions_spec = "0.005,0.01,0.1,1.0";
    from_config(cfg, "workdir", rep_opt.workdir);
    from_config(cfg, "seed", rep_opt.cohort.seed);
    rep->add_option("--workdir", rep_opt.workdir)->capture_default_str();
    rep->add_option("--individuals", rep_opt.cohort.num_individuals)->capture_default_str();
    rep->add_option("--days", rep_opt.cohort.num_days)->capture_default_str();
    rep->add_option("--seed", rep_opt.cohort.seed)->capture_default_str();
    rep->add_option("--epochs", rep_opt.train.epochs)->capture_default_str();
    rep->add_option("--fractions", fractions_spec, "comma-separated training fractions")
        ->capture_default_str();
    rep->add_option("--prompts", rep_opt.num_prompts)->capture_default_str();
    rep->add_option("--horizon", rep_opt.gen.horizon)->capture_default_str();
    add_config_flag(rep, config_path_sink);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitValidation;
    }
    apply_threads(global.threads);

    const auto start = Clock::now();
    try {
        if (synth->parsed()) {
            cohort.validate();
            const auto report = pipeline::run_synth(cohort, synth_out);
            pipeline::write_manifest(
                "synth-data",
                json{{"individuals", cohort.num_individuals},
                     {"days", cohort.num_days},
                     {"seed", cohort.seed},
                     {"ar_coeff", cohort.ar_coeff},
                     {"missingness", cohort.missingness_rate},
                     {"out", synth_out}},
                {}, {synth_out}, {cohort.seed}, seconds_since(start), synth_out);
            std::cout << "wrote " << report.day_rows << " day rows for " << report.individuals
                      << " individuals to " << synth_out << "\n";
        } else if (prep->parsed()) {
            const auto parts = actigen::csv::split_line(split_spec);
            if (parts.size() != 3)
                throw std::invalid_argument("--split needs three comma-separated fractions");
            for (int i = 0; i < 3; ++i)
                prep_opt.split_fractions[static_cast<size_t>(i)] =
                    actigen::csv::parse_double(parts[static_cast<size_t>(i)], "split fraction", 0);
            const auto report = pipeline::run_preprocess(prep_opt);
            pipeline::write_manifest(
                "preprocess",
                json{{"input", prep_opt.input_csv},
                     {"out", prep_opt.out_windows},
                     {"stride", prep_opt.stride},
                     {"bins", prep_opt.num_bins},
                     {"min_coverage", prep_opt.min_coverage},
                     {"split", prep_opt.split_fractions},
                     {"seed", prep_opt.seed}},
                {prep_opt.input_csv}, {prep_opt.out_windows, prep_opt.out_windows + ".json"},
                {prep_opt.seed}, seconds_since(start), prep_opt.out_windows);
            std::cout << "individuals: " << report.individuals_in << " in, "
                      << report.individuals_kept << " kept, " << report.dropped << " dropped, "
                      << report.skipped_short << " too short\n"
                      << "low-coverage days: " << report.low_coverage_days
                      << ", imputed values: " << report.imputed_values << "\n"
                      << "windows: train " << report.windows_per_split[0] << ", val "
                      << report.windows_per_split[1] << ", test " << report.windows_per_split[2]
                      << "\n";
        } else if (tr->parsed()) {
            if (tiny) {
                const ModelConfig t = tiny_model_config();
                train_opt.model.d_model = t.d_model;
                train_opt.model.num_heads = t.num_heads;
                train_opt.model.num_blocks = t.num_blocks;
                train_opt.model.ffn_hidden = t.ffn_hidden;
            }
            train_opt.model.validate();
            train_opt.train.validate();
            const auto report = pipeline::run_train(train_opt);
            const std::string primary = report.final_checkpoint.empty()
                                            ? train_opt.out_dir + "/loss_log.csv"
                                            : report.final_checkpoint;
            pipeline::write_manifest(
                "train",
                json{{"windows", train_opt.windows_path},
                     {"out_dir", train_opt.out_dir},
                     {"fraction", train_opt.fraction},
                     {"model", model_config_json(train_opt.model)},
                     {"epochs", train_opt.train.epochs},
                     {"lr", train_opt.train.initial_lr},
                     {"batch", train_opt.train.batch_size},
                     {"seed", train_opt.train.seed}},
                {train_opt.windows_path}, {primary}, {train_opt.train.seed},
                seconds_since(start), primary);
            std::cout << "trained on " << report.train_windows << " windows ("
                      << report.train_individuals << " individuals, " << report.train_days
                      << " days), " << report.steps << " steps\n";
            if (report.nan_abort)
                std::cout << "aborted on non-finite loss; last good checkpoint: "
                          << report.final_checkpoint << "\n";
            else
                std::cout << "final checkpoint: " << report.final_checkpoint
                          << " (val loss " << report.final_val_loss << ")\n";
            if (report.nan_abort) return kExitRuntime;
        } else if (gen->parsed()) {
            gen_opt.prompt_split = split_from_name(prompt_split);
            gen_opt.gen.validate();
            const auto report = pipeline::run_generate(gen_opt);
            pipeline::write_manifest(
                "generate",
                json{{"checkpoint", gen_opt.checkpoint},
                     {"windows", gen_opt.windows_path},
                     {"out", gen_opt.out_csv},
                     {"prompts", gen_opt.num_prompts},
                     {"horizon", gen_opt.gen.horizon},
                     {"temperatures", gen_opt.gen.temperatures},
                     {"seed", gen_opt.gen.seed}},
                {gen_opt.checkpoint, gen_opt.windows_path}, {gen_opt.out_csv},
                {gen_opt.gen.seed}, seconds_since(start), gen_opt.out_csv);
            std::cout << "generated " << report.rows << " day rows across " << report.series
                      << " series to " << gen_opt.out_csv << "\n";
        } else if (ev->parsed()) {
            eval_opt.eval_split = split_from_name(eval_split);
            if (cosine_space != "scaled" && cosine_space != "original")
                throw std::invalid_argument("--cosine-space must be scaled|original");
            if (dtw_space != "scaled" && dtw_space != "original")
                throw std::invalid_argument("--dtw-space must be original|scaled");
            eval_opt.cosine_scaled_space = cosine_space == "scaled";
            eval_opt.dtw_original_units = dtw_space == "original";
            const EvalReport report = pipeline::run_evaluate(eval_opt);
            pipeline::write_manifest(
                "evaluate",
                json{{"checkpoint", eval_opt.checkpoint},
                     {"windows", eval_opt.windows_path},
                     {"generated", eval_opt.generated_csv},
                     {"max_pairs", eval_opt.max_pairs},
                     {"seed", eval_opt.seed},
                     {"split", eval_split},
                     {"cosine_space", cosine_space},
                     {"dtw_space", dtw_space}},
                {eval_opt.checkpoint, eval_opt.windows_path, eval_opt.generated_csv},
                {eval_opt.report_json}, {eval_opt.seed}, seconds_since(start),
                eval_opt.report_json);
            std::cout << report.to_json() << "\n";
        } else if (rep->parsed()) {
            const auto parts = actigen::csv::split_line(fractions_spec);
            rep_opt.fractions.clear();
            for (const auto& p : parts)
                rep_opt.fractions.push_back(actigen::csv::parse_double(p, "fraction", 0));
            rep_opt.preprocess.seed = rep_opt.cohort.seed;
            rep_opt.train.seed = rep_opt.cohort.seed;
            const auto rows = pipeline::run_reproduce(rep_opt, std::cout);
            const std::string summary = rep_opt.workdir + "/summary.csv";
            pipeline::write_manifest(
                "reproduce",
                json{{"workdir", rep_opt.workdir},
                     {"individuals", rep_opt.cohort.num_individuals},
                     {"days", rep_opt.cohort.num_days},
                     {"seed", rep_opt.cohort.seed},
                     {"fractions", rep_opt.fractions},
                     {"epochs", rep_opt.train.epochs}},
                {}, {summary, rep_opt.workdir + "/trend.csv"}, {rep_opt.cohort.seed},
                seconds_since(start), summary);
            std::cout << "training_size,mae_hr,mae_sleep,mae_steps\n";
            for (const auto& row : rows)
                std::cout << row.train_days << ',' << row.mae[0] << ',' << row.mae[1] << ','
                          << row.mae[2] << "\n";
        }
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return 0;
}
