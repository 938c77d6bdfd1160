// Times the OpenMP kernels against the serial references on the model's hot
// shapes, and a full train step at both 1 thread and the machine maximum.
// Also verifies that the parallel and serial paths agree bitwise.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "actigen/kernels.hpp"
#include "actigen/model.hpp"
#include "actigen/reference_kernels.hpp"
#include "actigen/rng.hpp"
#include "actigen/trainer.hpp"

using namespace actigen;
using Clock = std::chrono::steady_clock;

namespace {

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

void set_threads(int n) {
#ifdef _OPENMP
    omp_set_num_threads(n);
#else
    (void)n;
#endif
}

template <class Fn>
double best_ms(Fn&& fn, int reps = 5) {
    double best = 1e18;
    for (int r = 0; r < reps; ++r) {
        const auto start = Clock::now();
        fn();
        const double ms =
            std::chrono::duration<double, std::milli>(Clock::now() - start).count();
        best = std::min(best, ms);
    }
    return best;
}

void fill(std::vector<float>& v, uint64_t seed) {
    Rng rng(seed);
    for (float& x : v) x = static_cast<float>(2.0 * rng.uniform01() - 1.0);
}

bool bitwise_equal(const std::vector<float>& a, const std::vector<float>& b) {
    return a == b;
}

void report(const std::string& name, double serial_ms, double parallel_ms, bool exact) {
    std::printf("%-34s %10.3f ms %10.3f ms %8.2fx   %s\n", name.c_str(), serial_ms, parallel_ms,
                serial_ms / parallel_ms, exact ? "bitwise-equal" : "MISMATCH");
}

void bench_matmul(int m, int k, int n) {
    std::vector<float> a(static_cast<size_t>(m) * k), b(static_cast<size_t>(k) * n);
    std::vector<float> c_ser(static_cast<size_t>(m) * n), c_par(c_ser.size());
    fill(a, 1);
    fill(b, 2);
    const double serial = best_ms([&] { refk::matmul(a.data(), b.data(), c_ser.data(), m, k, n); });
    const double parallel =
        best_ms([&] { kernels::matmul(a.data(), b.data(), c_par.data(), m, k, n); });
    char name[64];
    std::snprintf(name, sizeof(name), "matmul %dx%dx%d", m, k, n);
    report(name, serial, parallel, bitwise_equal(c_ser, c_par));
}

void bench_attention(int batch, int heads, int seq, int dk) {
    const int total = batch * heads;
    std::vector<float> q(static_cast<size_t>(total) * seq * dk), k(q.size()), v(q.size());
    std::vector<float> out_ser(q.size()), out_par(q.size());
    std::vector<float> probs_ser(static_cast<size_t>(total) * seq * seq), probs_par(probs_ser.size());
    fill(q, 3);
    fill(k, 4);
    fill(v, 5);
    const float scale = 1.0f / std::sqrt(static_cast<float>(dk));

    const double serial = best_ms([&] {
        refk::attention_batch(q.data(), k.data(), v.data(), out_ser.data(), probs_ser.data(),
                              total, seq, dk, scale);
    });
    const double parallel = best_ms([&] {
#pragma omp parallel for schedule(static)
        for (int i = 0; i < total; ++i) {
            const size_t off = static_cast<size_t>(i) * seq * dk;
            kernels::attention_head_forward(q.data() + off, k.data() + off, v.data() + off,
                                            out_par.data() + off,
                                            probs_par.data() + static_cast<size_t>(i) * seq * seq,
                                            seq, dk, dk, scale);
        }
    });
    char name[64];
    std::snprintf(name, sizeof(name), "attention %dx%d heads, T=%d", batch, heads, seq);
    report(name, serial, parallel, bitwise_equal(out_ser, out_par));
}

void bench_train_step() {
    const ModelConfig cfg;  // full-size architecture
    auto params = init_params<float>(cfg, 7);
    const int batch = 64;
    Rng bin_rng(8);
    std::vector<uint16_t> bins(static_cast<size_t>(batch) * cfg.seq_len * kNumChannels);
    for (auto& b : bins) b = static_cast<uint16_t>(bin_rng.below(cfg.num_bins));

    auto one_step = [&](std::vector<float>& logits_out) {
        ForwardCache<float> cache;
        forward(bins.data(), batch, params, false, nullptr, cache);
        std::vector<float> dlogits;
        (void)combined_loss_grad<float>(cache, bins.data(), fixed_shake_weights().alpha,
                                        &dlogits);
        std::vector<float> grads;
        backward(cache, dlogits.data(), params, grads);
        logits_out = std::move(cache.logits);
    };

    std::vector<float> logits_ser, logits_par;
    set_threads(1);
    const double serial = best_ms([&] { one_step(logits_ser); }, 3);
    set_threads(max_threads());
    const double parallel = best_ms([&] { one_step(logits_par); }, 3);
    report("forward+backward, batch 64", serial, parallel, bitwise_equal(logits_ser, logits_par));
}

}  // namespace

int main() {
    std::printf("threads available: %d\n", max_threads());
    std::printf("%-34s %13s %13s %9s   %s\n", "kernel", "serial", "parallel", "speedup",
                "outputs");

    bench_matmul(1344, 64, 64);    // q/k/v/o projections over a 64-window batch
    bench_matmul(1344, 64, 256);   // ffn expansion
    bench_matmul(1344, 256, 64);   // ffn contraction
    bench_matmul(1344, 64, 100);   // output heads
    bench_attention(64, 4, 21, 16);
    bench_train_step();
    return 0;
}
