#pragma once
// File-to-file orchestration of the full pipeline. The CLI subcommands,
// the `reproduce` meta-command, and the acceptance suite all run through
// these entry points so they exercise the same file formats.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "actigen/evaluation.hpp"
#include "actigen/generator.hpp"
#include "actigen/model.hpp"
#include "actigen/synthetic_cohort.hpp"
#include "actigen/trainer.hpp"

namespace actigen::pipeline {

// FNV-1a 64-bit hash of a file's bytes, as a hex string.
std::string file_checksum(const std::string& path);

struct ManifestEntry {
    std::string path;
    std::string checksum;
};

// One manifest per run: subcommand, resolved config, seeds, input/output
// paths with checksums, wall-clock duration. Written to
// <primary_output>.manifest.json.
void write_manifest(const std::string& subcommand, const nlohmann::json& config,
                    const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs,
                    const std::vector<uint64_t>& seeds, double duration_seconds,
                    const std::string& primary_output);

// ---------------------------------------------------------------------------

struct SynthReport {
    int64_t individuals = 0;
    int64_t day_rows = 0;
};
SynthReport run_synth(const CohortConfig& config, const std::string& out_csv);

struct PreprocessOptions {
    std::string input_csv;
    std::string out_windows;
    int stride = 21;
    int num_bins = 100;
    double min_coverage = 0.8;
    std::array<double, 3> split_fractions{0.8, 0.1, 0.1};
    uint64_t seed = 42;
};
struct PreprocessReport {
    int64_t individuals_in = 0;
    int64_t individuals_kept = 0;
    int64_t dropped = 0;
    int64_t skipped_short = 0;
    int64_t low_coverage_days = 0;
    int64_t imputed_values = 0;
    std::array<int64_t, 3> windows_per_split{};
};
PreprocessReport run_preprocess(const PreprocessOptions& opt);

struct TrainRunOptions {
    std::string windows_path;
    std::string out_dir;
    ModelConfig model;
    TrainConfig train;
    double fraction = 1.0;  // fraction of training individuals to keep
};
struct TrainReport {
    int64_t train_windows = 0;
    int64_t train_days = 0;
    int64_t train_individuals = 0;
    int64_t steps = 0;
    double final_train_loss = 0;
    double final_val_loss = 0;
    bool nan_abort = false;
    std::string final_checkpoint;
};
TrainReport run_train(const TrainRunOptions& opt);

struct GenerateOptions {
    std::string checkpoint;
    std::string windows_path;
    std::string out_csv;
    std::string bin_trace_csv;  // optional
    std::string plot_csv;       // optional, long format for external figure tools
    int num_prompts = 10;                       // random prompts from the prompt split
    std::vector<std::string> explicit_prompts;  // "<individual>@<start_day>" references
    Split prompt_split = Split::kTest;
    GenerationConfig gen;
};
struct GenerateReport {
    int64_t series = 0;
    int64_t rows = 0;
};
GenerateReport run_generate(const GenerateOptions& opt);

struct EvaluateOptions {
    std::string checkpoint;
    std::string windows_path;
    std::string generated_csv;
    std::string report_json;
    std::string summary_csv;   // optional
    std::string features_csv;  // optional
    bool append_summary = false;
    int64_t max_pairs = 10000;
    uint64_t seed = 7;
    bool cosine_scaled_space = true;  // flag: cosine on scaled windows (default) or original units
    bool dtw_original_units = true;   // flag: DTW on original units (default) or scaled
    Split eval_split = Split::kTest;
};
EvalReport run_evaluate(const EvaluateOptions& opt);

struct ReproduceOptions {
    std::string workdir;
    CohortConfig cohort;
    ModelConfig model;
    TrainConfig train;
    PreprocessOptions preprocess;  // input/output paths are filled in
    std::vector<double> fractions{0.005, 0.01, 0.1, 1.0};
    int num_prompts = 20;
    GenerationConfig gen;
};
struct ReproduceRow {
    double fraction = 0;
    int64_t train_days = 0;
    std::array<double, 3> mae{};
    double cosine_cross = 0;
    double dtw_cross = 0;
    double val_loss = 0;
};
// Chains synth -> preprocess -> (train -> generate -> evaluate) per fraction
// and writes summary.csv plus trend.csv under workdir.
std::vector<ReproduceRow> run_reproduce(const ReproduceOptions& opt, std::ostream& log);

// Training-window subsampling by individual: keeps round(fraction * n) >= 1
// of the training individuals (seeded), returning their window indices.
std::vector<int64_t> subsample_train_windows(const WindowSet& data, double fraction,
                                             uint64_t seed);

// Generated-series CSV (`prompt_id,day,resting_hr,sleep_minutes,steps`)
// re-windowed into a sequence set using the given scaler.
SequenceSet load_generated_sequences(const std::string& csv_path, const ScalerBinSpec& scaler,
                                     int window_len);

}  // namespace actigen::pipeline
