// Acceptance suite: runs every acceptance criterion at its stated tolerance
// and prints one pass/fail line per criterion. Exit code is the number of
// failed criteria. Pass a directory argument to keep the working artifacts.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "actigen/evaluation.hpp"
#include "actigen/generator.hpp"
#include "actigen/model.hpp"
#include "actigen/pipeline.hpp"
#include "actigen/synthetic_cohort.hpp"
#include "actigen/trainer.hpp"
#include "gradcheck.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace actigen;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void criterion(int number, const std::string& name, const std::function<std::string()>& body) {
    const auto start = Clock::now();
    std::string detail;
    bool ok = true;
    try {
        detail = body();
    } catch (const std::exception& e) {
        ok = false;
        detail = std::string("exception: ") + e.what();
    }
    if (!detail.empty() && detail.rfind("FAIL", 0) == 0) ok = false;
    const double secs = std::chrono::duration<double>(Clock::now() - start).count();
    std::printf("[%s] %2d. %-28s %s (%.1fs)\n", ok ? "PASS" : "FAIL", number, name.c_str(),
                detail.c_str(), secs);
    std::fflush(stdout);
    if (!ok) ++failures;
}

std::string pass(const std::string& detail) { return detail; }
std::string fail(const std::string& detail) { return "FAIL: " + detail; }

// exhaustive DTW over all monotone alignments
double dtw_exhaustive(const std::vector<double>& x, const std::vector<double>& y, size_t i,
                      size_t j) {
    const double cost = std::abs(x[i] - y[j]);
    if (i == 0 && j == 0) return cost;
    double best = std::numeric_limits<double>::infinity();
    if (i > 0) best = std::min(best, dtw_exhaustive(x, y, i - 1, j));
    if (j > 0) best = std::min(best, dtw_exhaustive(x, y, i, j - 1));
    if (i > 0 && j > 0) best = std::min(best, dtw_exhaustive(x, y, i - 1, j - 1));
    return cost + best;
}

}  // namespace

int main(int argc, char** argv) {
    const fs::path work = argc > 1 ? fs::path(argv[1])
                                   : fs::temp_directory_path() /
                                         ("actigen_accept_" +
                                          std::to_string(std::random_device{}()));
    fs::create_directories(work);
    const bool keep = argc > 1;

    // ---- 1. gradient correctness --------------------------------------------
    criterion(1, "gradient-correctness", [] {
        const auto result = gradcheck::run(tiny_model_config(), 1234, /*training=*/false, 1e-4);
        std::ostringstream os;
        os << "max_rel=" << result.max_rel << " over " << result.params_checked
           << " params, worst=" << result.worst_tensor;
        if (result.max_rel >= 1e-4) return fail(os.str());
        return pass(os.str());
    });

    // ---- 2. causality ----------------------------------------------------------
    criterion(2, "causality", [] {
        ModelConfig cfg;  // full-size model
        const auto params = init_params<float>(cfg, 99);
        const int batch = 2;
        const auto bins = testutil::random_bins(
            static_cast<int64_t>(batch) * cfg.seq_len * kNumChannels, cfg.num_bins, 100);
        ForwardCache<float> base;
        forward(bins.data(), batch, params, false, nullptr, base);

        Rng rng(101);
        const size_t row_logits = static_cast<size_t>(kNumChannels) * cfg.num_bins;
        for (int trial = 0; trial < 100; ++trial) {
            auto mutated = bins;
            const int b = static_cast<int>(rng.below(batch));
            const int t = 1 + static_cast<int>(rng.below(static_cast<uint64_t>(cfg.seq_len - 1)));
            const int c = static_cast<int>(rng.below(kNumChannels));
            const size_t idx = (static_cast<size_t>(b) * cfg.seq_len + t) * kNumChannels + c;
            mutated[idx] = static_cast<uint16_t>(
                (mutated[idx] + 1 + rng.below(static_cast<uint64_t>(cfg.num_bins - 1))) %
                cfg.num_bins);
            ForwardCache<float> shifted;
            forward(mutated.data(), batch, params, false, nullptr, shifted);
            for (int tt = 0; tt < t; ++tt) {
                const size_t off = (static_cast<size_t>(b) * cfg.seq_len + tt) * row_logits;
                for (size_t j = 0; j < row_logits; ++j) {
                    if (base.logits[off + j] != shifted.logits[off + j])
                        return fail("logits at position " + std::to_string(tt) +
                                    " changed after perturbing day " + std::to_string(t));
                }
            }
        }
        return pass("100 random perturbations left earlier logits bitwise unchanged");
    });

    // ---- 3. overfit sanity ------------------------------------------------------
    criterion(3, "overfit-sanity", [] {
        ModelConfig cfg = tiny_model_config();
        cfg.dropout_p = 0.0;
        auto set = testutil::make_window_set(32, cfg.seq_len, cfg.num_bins, 93);
        std::vector<int64_t> windows(32);
        std::iota(windows.begin(), windows.end(), 0);
        TrainConfig tc;
        tc.epochs = 400;
        tc.batch_size = 32;
        tc.decay_factor = 1.0;
        tc.initial_lr = 1e-2;
        tc.seed = 5;
        const auto result = train(set, windows, {}, cfg, tc, "");
        double last10 = 0;
        for (size_t i = result.steps.size() - 10; i < result.steps.size(); ++i)
            last10 += result.steps[i].combined;
        last10 /= 10.0;
        std::ostringstream os;
        os << "mean combined loss " << last10 << " after 400 steps (initial "
           << result.steps.front().combined << ")";
        if (!(last10 < 0.5)) return fail(os.str());
        return pass(os.str());
    });

    // ---- 4. quantization ---------------------------------------------------------
    criterion(4, "quantization", [] {
        ScalerBinSpec spec;
        spec.num_bins = 100;
        spec.min_value = {35.0, 0.0, 0.0};
        spec.max_value = {180.0, 1440.0, 50000.0};
        Rng rng(4242);
        double worst = 0;
        for (int c = 0; c < kNumChannels; ++c) {
            const double lo = spec.min_value[static_cast<size_t>(c)];
            const double hi = spec.max_value[static_cast<size_t>(c)];
            const double half_bin = (hi - lo) / (2.0 * spec.num_bins);
            double prev_v = lo;
            int prev_bin = 0;
            for (int i = 0; i < 1000; ++i) {
                const double v = lo + (hi - lo) * rng.uniform01();
                const int bin = quantize(v, c, spec);
                const double err = std::abs(v - dequantize(bin, c, spec));
                worst = std::max(worst, err / half_bin);
                if (err > half_bin + 1e-12)
                    return fail("round-trip error exceeds half a bin width");
                if (v >= prev_v && bin < prev_bin) return fail("quantize is not monotone");
                if (v >= prev_v) {
                    prev_v = v;
                    prev_bin = bin;
                }
            }
        }
        std::ostringstream os;
        os << "3000 round trips within half a bin (worst " << worst << " of the bound), monotone";
        return pass(os.str());
    });

    // ---- 5. DTW oracle equivalence -----------------------------------------------
    criterion(5, "dtw-oracle", [] {
        Rng rng(2025);
        for (int trial = 0; trial < 500; ++trial) {
            const size_t nx = 1 + rng.below(6), ny = 1 + rng.below(6);
            std::vector<double> x(nx), y(ny);
            for (auto& v : x) v = 10.0 * rng.uniform01();
            for (auto& v : y) v = 10.0 * rng.uniform01();
            const double dp = dtw_distance(x, y);
            if (dp != dtw_exhaustive(x, y, nx - 1, ny - 1))
                return fail("DP disagrees with exhaustive alignment enumeration");
            if (dtw_distance(y, x) != dp) return fail("DTW is not symmetric");
            if (dtw_distance(x, x) != 0.0) return fail("dtw(x,x) != 0");
            if (nx == ny) {
                double diagonal = 0;
                for (size_t i = 0; i < nx; ++i) diagonal += std::abs(x[i] - y[i]);
                if (dp > diagonal + 1e-12) return fail("diagonal-path upper bound violated");
            }
        }
        return pass("500 random pairs match exhaustive enumeration exactly");
    });

    // ---- 6. shake-shake -----------------------------------------------------------
    criterion(6, "shake-shake", [] {
        Rng rng(515);
        double mean[3] = {0, 0, 0};
        const int draws = 100000;
        for (int i = 0; i < draws; ++i) {
            const auto w = sample_shake_weights(rng);
            const double norm = std::sqrt(w.alpha[0] * w.alpha[0] + w.alpha[1] * w.alpha[1] +
                                          w.alpha[2] * w.alpha[2]);
            if (std::abs(norm - 1.0) > 1e-9) return fail("||alpha|| deviates from 1 beyond 1e-9");
            for (int c = 0; c < 3; ++c) {
                if (w.alpha[static_cast<size_t>(c)] < 0.0) return fail("negative component");
                mean[c] += w.alpha[static_cast<size_t>(c)];
            }
        }
        for (double& m : mean) m /= draws;
        const double spread = std::max({mean[0], mean[1], mean[2]}) -
                              std::min({mean[0], mean[1], mean[2]});
        std::ostringstream os;
        os << "1e5 draws unit-norm, component means (" << mean[0] << ", " << mean[1] << ", "
           << mean[2] << ")";
        if (spread >= 0.01) return fail(os.str());
        return pass(os.str());
    });

    // ---- 7. LR schedule -------------------------------------------------------------
    criterion(7, "lr-schedule", [] {
        TrainConfig cfg;  // 1e-3, factor 10 every 5 epochs, 15 epochs
        const double expected[3] = {1e-3, 1e-4, 1e-5};
        std::set<double> distinct;
        for (int e = 0; e < 15; ++e) {
            const double lr = lr_at_epoch(e, cfg);
            distinct.insert(lr);
            const double want = expected[e / 5];
            if (std::abs(lr - want) / want > 1e-12)
                return fail("epoch " + std::to_string(e) + " lr " + std::to_string(lr));
        }
        if (distinct.size() != 3) return fail("expected exactly 3 distinct rates");
        return pass("epochs 0-14 produce {1e-3 x5, 1e-4 x5, 1e-5 x5}");
    });

    // ---- 8. desk-scale scaling trend (full pipeline) ---------------------------------
    // shared artifacts for criterion 8 and the similarity-ordering check below
    std::string windows_path, gen_full_csv;
    double cosine_full = 0, cosine_small = 0, intra_real_mean = 0;
    bool trend_ready = false;
    criterion(8, "scaling-trend", [&] {
        CohortConfig cohort;  // 200 x 365, seed 42
        const std::string corpus = (work / "corpus.csv").string();
        pipeline::run_synth(cohort, corpus);

        pipeline::PreprocessOptions pre;
        pre.input_csv = corpus;
        pre.out_windows = (work / "windows.agwb").string();
        pre.seed = 42;
        pipeline::run_preprocess(pre);
        windows_path = pre.out_windows;

        auto train_at = [&](double fraction, const std::string& tag) {
            pipeline::TrainRunOptions opt;
            opt.windows_path = pre.out_windows;
            opt.out_dir = (work / tag).string();
            opt.fraction = fraction;  // full-size model, default training schedule
            return pipeline::run_train(opt);
        };
        const auto full = train_at(1.0, "run_full");
        const auto small = train_at(0.01, "run_small");

        auto generate_from = [&](const std::string& ckpt, const std::string& out) {
            pipeline::GenerateOptions gen;
            gen.checkpoint = ckpt;
            gen.windows_path = pre.out_windows;
            gen.out_csv = out;
            gen.num_prompts = 20;
            gen.gen.horizon = 120;
            gen.gen.seed = 7;
            pipeline::run_generate(gen);
        };
        gen_full_csv = (work / "gen_full.csv").string();
        generate_from(full.final_checkpoint, gen_full_csv);
        generate_from(small.final_checkpoint, (work / "gen_small.csv").string());

        auto evaluate = [&](const std::string& gen_csv, const std::string& tag) {
            pipeline::EvaluateOptions ev;
            ev.checkpoint = tag == "full" ? full.final_checkpoint : small.final_checkpoint;
            ev.windows_path = pre.out_windows;
            ev.generated_csv = gen_csv;
            ev.report_json = (work / ("report_" + tag + ".json")).string();
            return pipeline::run_evaluate(ev);
        };
        const auto report_full = evaluate(gen_full_csv, "full");
        const auto report_small = evaluate((work / "gen_small.csv").string(), "small");

        cosine_full = report_full.cosine_cross.mean;
        cosine_small = report_small.cosine_cross.mean;
        intra_real_mean = report_full.cosine_intra_real.mean;
        trend_ready = true;

        std::ostringstream os;
        os << "val loss " << full.final_val_loss << " (100%) vs " << small.final_val_loss
           << " (1%); cross-cosine " << cosine_full << " vs " << cosine_small;
        if (!(full.final_val_loss < small.final_val_loss))
            return fail(os.str() + " - validation loss did not improve with more data");
        if (!(cosine_full - cosine_small > 0.01))
            return fail(os.str() + " - cosine margin below 0.01");
        return pass(os.str());
    });

    // ---- 9. generation contract -------------------------------------------------------
    criterion(9, "generation-contract", [] {
        const ModelConfig cfg = tiny_model_config();
        const auto params = init_params<float>(cfg, 31);
        ScalerBinSpec scaler;
        scaler.num_bins = cfg.num_bins;
        scaler.min_value = {40.0, 100.0, 0.0};
        scaler.max_value = {90.0, 700.0, 30000.0};
        const auto prompt =
            testutil::random_bins(cfg.seq_len * kNumChannels, cfg.num_bins, 32);
        GenerationConfig gen;
        gen.horizon = 60;
        gen.seed = 33;
        const auto a = generate(prompt.data(), params, scaler, gen, "p");
        const auto b = generate(prompt.data(), params, scaler, gen, "p");
        if (a.bins != b.bins) return fail("generation is not deterministic under the seed");
        if (a.final_window.size() != prompt.size())
            return fail("window length changed during generation");
        for (int day = 0; day < gen.horizon; ++day) {
            for (int c = 0; c < kNumChannels; ++c) {
                const double v =
                    a.values[static_cast<size_t>(day) * kNumChannels + static_cast<size_t>(c)];
                if (v < scaler.min_value[static_cast<size_t>(c)] ||
                    v > scaler.max_value[static_cast<size_t>(c)])
                    return fail("generated value escaped the scaler range");
            }
        }
        // temperature-argmax invariance on the final-position logits
        std::vector<float> logits(static_cast<size_t>(cfg.num_bins));
        testutil::fill_random(logits, 34, 2.0);
        const auto ref = temperature_distribution(logits.data(), cfg.num_bins, 1.0);
        const auto ref_mode = std::max_element(ref.begin(), ref.end()) - ref.begin();
        for (const double temp : {0.3, 2.0, 7.0}) {
            const auto p = temperature_distribution(logits.data(), cfg.num_bins, temp);
            if (std::max_element(p.begin(), p.end()) - p.begin() != ref_mode)
                return fail("temperature changed the modal bin");
        }
        return pass("window invariant, in-range outputs, seeded determinism, argmax invariance");
    });

    // ---- 10. checkpoint round trip -------------------------------------------------------
    criterion(10, "checkpoint-roundtrip", [&] {
        const ModelConfig cfg;  // full-size model
        const auto params = init_params<float>(cfg, 41);
        const auto bins = testutil::random_bins(
            static_cast<int64_t>(4) * cfg.seq_len * kNumChannels, cfg.num_bins, 42);
        ForwardCache<float> before;
        forward(bins.data(), 4, params, false, nullptr, before);
        const std::string path = (work / "roundtrip.agck").string();
        save_checkpoint(path, params);
        const auto loaded = load_checkpoint(path);
        ForwardCache<float> after;
        forward(bins.data(), 4, loaded, false, nullptr, after);
        if (before.logits != after.logits) return fail("logits changed across save/load");
        return pass("save -> load -> forward is bit-identical on a fixed batch");
    });

    // ---- similarity ordering (module invariant; uses criterion 8 artifacts) --------------
    criterion(11, "similarity-ordering", [&] {
        if (!trend_ready) return fail("criterion 8 artifacts unavailable");
        const auto data = read_window_file(windows_path);
        const auto test_windows = data.windows_of(Split::kTest);
        const auto real = sequence_set_from_windows(data, test_windows);

        // uniform-random generator baseline: bins drawn uniformly, dequantized
        SequenceSet uniform;
        uniform.len = data.batch.window_len;
        Rng rng(77);
        for (int i = 0; i < 100; ++i) {
            for (int t = 0; t < uniform.len; ++t) {
                for (int c = 0; c < kNumChannels; ++c) {
                    const int bin = static_cast<int>(rng.below(data.scaler.num_bins));
                    const double v = dequantize(bin, c, data.scaler);
                    uniform.original.push_back(v);
                    uniform.scaled.push_back(data.scaler.scale01(v, c));
                }
            }
            uniform.ids.push_back("uniform" + std::to_string(i));
        }
        const auto baseline =
            pairwise_stats(real, &uniform, PairMetric::kCosine, true, 10000, 7);

        std::ostringstream os;
        os << "cross " << cosine_full << " <= intra-real " << intra_real_mean
           << " + 0.02; uniform baseline " << baseline.mean;
        if (!(cosine_full <= intra_real_mean + 0.02)) return fail(os.str());
        if (!(cosine_full > baseline.mean) || !(intra_real_mean > baseline.mean))
            return fail(os.str());
        return pass(os.str());
    });

    if (!keep) {
        std::error_code ec;
        fs::remove_all(work, ec);
    } else {
        std::cout << "artifacts kept in " << work << "\n";
    }
    std::printf("%d of 11 checks failed\n", failures);
    return failures;
}
