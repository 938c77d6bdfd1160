#include "actigen/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "actigen/binary_io.hpp"
#include "actigen/kernels.hpp"

namespace actigen {

using nlohmann::json;

namespace {
constexpr double kLayerNormEps = 1e-5;
constexpr double kInitStd = 0.02;
}  // namespace

void ModelConfig::validate() const {
    if (d_model <= 0 || num_heads <= 0 || num_blocks <= 0 || ffn_hidden <= 0 || num_bins <= 0 ||
        seq_len <= 1)
        throw std::invalid_argument("model dimensions must be positive (seq_len >= 2)");
    if (d_model % num_heads != 0)
        throw std::invalid_argument("d_model must be divisible by num_heads");
    if (num_channels != kNumChannels)
        throw std::invalid_argument("num_channels must be 3");
    if (!(dropout_p >= 0.0 && dropout_p < 1.0))
        throw std::invalid_argument("dropout_p must be in [0,1)");
    if (num_bins > 65536) throw std::invalid_argument("num_bins exceeds u16 bin storage");
}

ModelConfig tiny_model_config() {
    ModelConfig cfg;
    cfg.d_model = 8;
    cfg.num_heads = 2;
    cfg.num_blocks = 1;
    cfg.ffn_hidden = 16;
    cfg.num_bins = 5;
    cfg.seq_len = 4;
    cfg.dropout_p = 0.1;
    return cfg;
}

ParamLayout ParamLayout::create(const ModelConfig& cfg) {
    cfg.validate();
    ParamLayout layout;
    auto add = [&layout](const std::string& name, std::vector<int> shape) {
        size_t size = 1;
        for (const int d : shape) size *= static_cast<size_t>(d);
        layout.tensors.push_back({name, std::move(shape), layout.total, size});
        layout.total += size;
        return layout.tensors.back().offset;
    };

    for (int c = 0; c < kNumChannels; ++c)
        layout.token_embed[c] = add(std::string("token_embed.") + kChannelNames[c],
                                    {cfg.num_bins, cfg.d_model});
    layout.pos_embed = add("pos_embed", {cfg.seq_len, cfg.d_model});

    layout.blocks.resize(static_cast<size_t>(cfg.num_blocks));
    for (int b = 0; b < cfg.num_blocks; ++b) {
        const std::string p = "block" + std::to_string(b) + ".";
        BlockOffsets& off = layout.blocks[static_cast<size_t>(b)];
        off.ln1_gain = add(p + "norm1.gain", {cfg.d_model});
        off.ln1_bias = add(p + "norm1.bias", {cfg.d_model});
        off.wq = add(p + "attn.wq", {cfg.d_model, cfg.d_model});
        off.wk = add(p + "attn.wk", {cfg.d_model, cfg.d_model});
        off.wv = add(p + "attn.wv", {cfg.d_model, cfg.d_model});
        off.wo = add(p + "attn.wo", {cfg.d_model, cfg.d_model});
        off.ln2_gain = add(p + "norm2.gain", {cfg.d_model});
        off.ln2_bias = add(p + "norm2.bias", {cfg.d_model});
        off.ffn_w1 = add(p + "ffn.w1", {cfg.d_model, cfg.ffn_hidden});
        off.ffn_b1 = add(p + "ffn.b1", {cfg.ffn_hidden});
        off.ffn_w2 = add(p + "ffn.w2", {cfg.ffn_hidden, cfg.d_model});
        off.ffn_b2 = add(p + "ffn.b2", {cfg.d_model});
    }
    layout.final_gain = add("final_norm.gain", {cfg.d_model});
    layout.final_bias = add("final_norm.bias", {cfg.d_model});
    for (int c = 0; c < kNumChannels; ++c) {
        layout.head_w[c] = add(std::string("head.") + kChannelNames[c] + ".w",
                               {cfg.d_model, cfg.num_bins});
        layout.head_b[c] = add(std::string("head.") + kChannelNames[c] + ".b", {cfg.num_bins});
    }
    return layout;
}

const TensorSpec* ParamLayout::find(std::string_view name) const {
    for (const TensorSpec& t : tensors) {
        if (t.name == name) return &t;
    }
    return nullptr;
}

const TensorSpec& ParamLayout::tensor_at(size_t flat_index) const {
    for (const TensorSpec& t : tensors) {
        if (flat_index >= t.offset && flat_index < t.offset + t.size) return t;
    }
    throw std::out_of_range("parameter index out of range");
}

template <class T>
ModelParams<T> init_params(const ModelConfig& cfg, uint64_t seed) {
    ModelParams<T> params(cfg);
    Rng rng(derive_seed(seed, 0x1417));
    for (const TensorSpec& t : params.layout.tensors) {
        T* data = params.values.data() + t.offset;
        const bool is_gain = t.name.ends_with("gain");
        const bool is_bias = t.name.ends_with("bias") || t.name.ends_with(".b1") ||
                             t.name.ends_with(".b2") || t.name.ends_with(".b");
        if (is_gain) {
            std::fill(data, data + t.size, T(1));
        } else if (is_bias) {
            std::fill(data, data + t.size, T(0));
        } else {
            for (size_t i = 0; i < t.size; ++i)
                data[i] = static_cast<T>(kInitStd * rng.gaussian());
        }
    }
    return params;
}

// ---------------------------------------------------------------------------
// forward
// ---------------------------------------------------------------------------

namespace {

template <class T>
void check_finite(const std::vector<T>& x, const char* layer) {
    const long long n = static_cast<long long>(x.size());
    bool ok = true;
#pragma omp parallel for schedule(static) reduction(&& : ok)
    for (long long i = 0; i < n; ++i) ok = ok && std::isfinite(x[static_cast<size_t>(i)]);
    if (!ok) throw std::runtime_error(std::string("non-finite activation in ") + layer);
}

template <class T>
void draw_keep_mask(Rng& rng, double keep_p, std::vector<uint8_t>& mask, size_t n) {
    mask.resize(n);
    for (size_t i = 0; i < n; ++i) mask[i] = rng.uniform01() < keep_p ? 1 : 0;
}

// inverted dropout: kept elements are scaled by 1/keep_p so expectations match
template <class T>
void apply_keep_mask(T* x, const std::vector<uint8_t>& mask, double keep_p) {
    const T scale = static_cast<T>(1.0 / keep_p);
    const long long n = static_cast<long long>(mask.size());
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < n; ++i) x[i] = mask[static_cast<size_t>(i)] ? x[i] * scale : T(0);
}

template <class T>
void mask_gradient(const T* dy, const std::vector<uint8_t>& mask, double keep_p, T* dx, size_t n) {
    if (mask.empty()) {
        std::copy(dy, dy + n, dx);
        return;
    }
    const T scale = static_cast<T>(1.0 / keep_p);
    const long long nn = static_cast<long long>(n);
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < nn; ++i)
        dx[i] = mask[static_cast<size_t>(i)] ? dy[i] * scale : T(0);
}

}  // namespace

template <class T>
void embed(const uint16_t* bins, int batch, const ModelParams<T>& params, T* out) {
    const ModelConfig& cfg = params.config;
    const int seq = cfg.seq_len, d = cfg.d_model;
    const int rows = batch * seq;
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < kNumChannels; ++c) {
            const uint16_t bin = bins[static_cast<size_t>(r) * kNumChannels + c];
            if (bin >= cfg.num_bins)
                throw std::invalid_argument("bin index " + std::to_string(bin) +
                                            " out of range for channel " + kChannelNames[c]);
        }
    }
#pragma omp parallel for schedule(static)
    for (int r = 0; r < rows; ++r) {
        const int t = r % seq;
        T* row = out + static_cast<size_t>(r) * d;
        const T* pos = params.at(params.layout.pos_embed) + static_cast<size_t>(t) * d;
        std::copy(pos, pos + d, row);
        for (int c = 0; c < kNumChannels; ++c) {
            const uint16_t bin = bins[static_cast<size_t>(r) * kNumChannels + c];
            const T* tok = params.at(params.layout.token_embed[c]) + static_cast<size_t>(bin) * d;
            for (int j = 0; j < d; ++j) row[j] += tok[j];
        }
    }
}

template <class T>
void causal_attention(const T* q, const T* k, const T* v, int seq, int dk, T* out, T* probs) {
    std::vector<T> local_probs;
    if (probs == nullptr) {
        local_probs.resize(static_cast<size_t>(seq) * seq);
        probs = local_probs.data();
    }
    const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dk)));
    kernels::attention_head_forward(q, k, v, out, probs, seq, dk, dk, scale);
}

template <class T>
void forward(const uint16_t* bins, int batch, const ModelParams<T>& params, bool training,
             Rng* dropout_rng, ForwardCache<T>& cache) {
    const ModelConfig& cfg = params.config;
    cfg.validate();
    if (batch <= 0) throw std::invalid_argument("batch must be positive");
    if (training && cfg.dropout_p > 0.0 && dropout_rng == nullptr)
        throw std::invalid_argument("training forward requires a dropout rng");

    const int seq = cfg.seq_len, d = cfg.d_model, heads = cfg.num_heads, dk = cfg.head_dim();
    const int ffn = cfg.ffn_hidden, bins_n = cfg.num_bins;
    const int rows = batch * seq;
    const size_t nd = static_cast<size_t>(rows) * d;
    const double keep_p = 1.0 - cfg.dropout_p;
    const bool use_dropout = training && cfg.dropout_p > 0.0;
    const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dk)));

    // the cache object is reused across calls so its buffers keep their
    // allocations; every element is overwritten below
    cache.batch = batch;
    cache.training = training;
    cache.config = cfg;
    cache.bins.assign(bins, bins + static_cast<size_t>(rows) * kNumChannels);
    cache.blocks.resize(static_cast<size_t>(cfg.num_blocks));

    static thread_local std::vector<T> x, branch;
    x.resize(nd);
    branch.resize(nd);
    embed(bins, batch, params, x.data());
    check_finite(x, "embedding");
    for (int b = 0; b < cfg.num_blocks; ++b) {
        auto& bc = cache.blocks[static_cast<size_t>(b)];
        const auto& off = params.layout.blocks[static_cast<size_t>(b)];
        const std::string label = "block" + std::to_string(b);

        bc.ln1_xhat.resize(nd);
        bc.ln1_out.resize(nd);
        bc.ln1_istd.resize(static_cast<size_t>(rows));
        kernels::layer_norm_forward(x.data(), params.at(off.ln1_gain), params.at(off.ln1_bias),
                                    bc.ln1_out.data(), bc.ln1_xhat.data(), bc.ln1_istd.data(),
                                    rows, d, static_cast<T>(kLayerNormEps));

        bc.q.resize(nd);
        bc.k.resize(nd);
        bc.v.resize(nd);
        kernels::matmul(bc.ln1_out.data(), params.at(off.wq), bc.q.data(), rows, d, d);
        kernels::matmul(bc.ln1_out.data(), params.at(off.wk), bc.k.data(), rows, d, d);
        kernels::matmul(bc.ln1_out.data(), params.at(off.wv), bc.v.data(), rows, d, d);

        bc.probs.resize(static_cast<size_t>(batch) * heads * seq * seq);  // heads write all entries
        bc.att_concat.resize(nd);
        const int bh = batch * heads;
#pragma omp parallel for schedule(static)
        for (int i = 0; i < bh; ++i) {
            const int bi = i / heads, h = i % heads;
            const size_t base = static_cast<size_t>(bi) * seq * d + static_cast<size_t>(h) * dk;
            kernels::attention_head_forward(
                bc.q.data() + base, bc.k.data() + base, bc.v.data() + base,
                bc.att_concat.data() + base, bc.probs.data() + static_cast<size_t>(i) * seq * seq,
                seq, dk, d, scale);
        }

        kernels::matmul(bc.att_concat.data(), params.at(off.wo), branch.data(), rows, d, d);
        if (use_dropout) {
            draw_keep_mask<T>(*dropout_rng, keep_p, bc.attn_keep, nd);
            apply_keep_mask(branch.data(), bc.attn_keep, keep_p);
        } else {
            bc.attn_keep.clear();
        }
        kernels::add_inplace(x.data(), branch.data(), nd);
        check_finite(x, (label + ".attention").c_str());

        bc.ln2_xhat.resize(nd);
        bc.ln2_out.resize(nd);
        bc.ln2_istd.resize(static_cast<size_t>(rows));
        kernels::layer_norm_forward(x.data(), params.at(off.ln2_gain), params.at(off.ln2_bias),
                                    bc.ln2_out.data(), bc.ln2_xhat.data(), bc.ln2_istd.data(),
                                    rows, d, static_cast<T>(kLayerNormEps));

        bc.ffn_pre.resize(static_cast<size_t>(rows) * ffn);
        bc.ffn_act.resize(static_cast<size_t>(rows) * ffn);
        kernels::matmul(bc.ln2_out.data(), params.at(off.ffn_w1), bc.ffn_pre.data(), rows, d, ffn);
        kernels::add_bias(bc.ffn_pre.data(), params.at(off.ffn_b1), rows, ffn);
        kernels::gelu_forward(bc.ffn_pre.data(), bc.ffn_act.data(), bc.ffn_pre.size());
        kernels::matmul(bc.ffn_act.data(), params.at(off.ffn_w2), branch.data(), rows, ffn, d);
        kernels::add_bias(branch.data(), params.at(off.ffn_b2), rows, d);
        if (use_dropout) {
            draw_keep_mask<T>(*dropout_rng, keep_p, bc.ffn_keep, nd);
            apply_keep_mask(branch.data(), bc.ffn_keep, keep_p);
        } else {
            bc.ffn_keep.clear();
        }
        kernels::add_inplace(x.data(), branch.data(), nd);
        check_finite(x, (label + ".ffn").c_str());
    }

    cache.final_xhat.resize(nd);
    cache.final_out.resize(nd);
    cache.final_istd.resize(static_cast<size_t>(rows));
    kernels::layer_norm_forward(x.data(), params.at(params.layout.final_gain),
                                params.at(params.layout.final_bias), cache.final_out.data(),
                                cache.final_xhat.data(), cache.final_istd.data(), rows, d,
                                static_cast<T>(kLayerNormEps));

    cache.logits.resize(static_cast<size_t>(rows) * kNumChannels * bins_n);
    static thread_local std::vector<T> head_out;
    head_out.resize(static_cast<size_t>(rows) * bins_n);
    // raw pointers: thread_local vectors must not be named inside the
    // parallel regions, where workers would see their own empty instances
    T* const head_ptr = head_out.data();
    T* const logits_ptr = cache.logits.data();
    for (int c = 0; c < kNumChannels; ++c) {
        kernels::matmul(cache.final_out.data(), params.at(params.layout.head_w[c]), head_ptr,
                        rows, d, bins_n);
        kernels::add_bias(head_ptr, params.at(params.layout.head_b[c]), rows, bins_n);
#pragma omp parallel for schedule(static)
        for (int r = 0; r < rows; ++r) {
            const T* src = head_ptr + static_cast<size_t>(r) * bins_n;
            T* dst = logits_ptr + (static_cast<size_t>(r) * kNumChannels + c) * bins_n;
            std::copy(src, src + bins_n, dst);
        }
    }
    check_finite(cache.logits, "heads");
}

// ---------------------------------------------------------------------------
// backward
// ---------------------------------------------------------------------------

template <class T>
void backward(const ForwardCache<T>& cache, const T* dlogits, const ModelParams<T>& params,
              std::vector<T>& grads) {
    if (!cache.valid()) throw std::runtime_error("backward: missing forward cache");
    if (!(cache.config == params.config))
        throw std::invalid_argument("backward: cache/params config mismatch");

    const ModelConfig& cfg = params.config;
    const int batch = cache.batch;
    const int seq = cfg.seq_len, d = cfg.d_model, heads = cfg.num_heads, dk = cfg.head_dim();
    const int ffn = cfg.ffn_hidden, bins_n = cfg.num_bins;
    const int rows = batch * seq;
    const size_t nd = static_cast<size_t>(rows) * d;
    const double keep_p = 1.0 - cfg.dropout_p;
    const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dk)));

    grads.assign(params.layout.total, T(0));
    const ParamLayout& L = params.layout;

    // heads (scratch buffers are thread-local so repeated steps reuse pages;
    // only raw pointers may appear inside the parallel regions)
    static thread_local std::vector<T> dx, dx_prev, chan, branch, dmid, dq, dkv, dv, dn;
    dx.assign(nd, T(0));
    chan.resize(static_cast<size_t>(rows) * bins_n);
    T* const chan_ptr = chan.data();
    for (int c = 0; c < kNumChannels; ++c) {
#pragma omp parallel for schedule(static)
        for (int r = 0; r < rows; ++r) {
            const T* src = dlogits + (static_cast<size_t>(r) * kNumChannels + c) * bins_n;
            std::copy(src, src + bins_n, chan_ptr + static_cast<size_t>(r) * bins_n);
        }
        kernels::matmul_at_b(cache.final_out.data(), chan.data(), grads.data() + L.head_w[c],
                             rows, d, bins_n);
        kernels::column_sums(chan.data(), grads.data() + L.head_b[c], rows, bins_n);
        kernels::matmul_a_bt(chan.data(), params.at(L.head_w[c]), dx.data(), rows, bins_n, d,
                             /*accumulate=*/true);
    }

    // final norm
    dx_prev.assign(nd, T(0));
    kernels::layer_norm_backward(dx.data(), params.at(L.final_gain), cache.final_xhat.data(),
                                 cache.final_istd.data(), dx_prev.data(),
                                 grads.data() + L.final_gain, grads.data() + L.final_bias, rows, d);
    dx.swap(dx_prev);

    branch.resize(nd);
    dmid.resize(std::max(nd, static_cast<size_t>(rows) * ffn));
    dq.resize(nd);
    dkv.resize(nd);
    dv.resize(nd);
    dn.resize(nd);
    for (int b = cfg.num_blocks - 1; b >= 0; --b) {
        const auto& bc = cache.blocks[static_cast<size_t>(b)];
        const auto& off = L.blocks[static_cast<size_t>(b)];

        // ffn branch: x_out = x_mid + dropout(ffn(norm2(x_mid)))
        mask_gradient(dx.data(), bc.ffn_keep, keep_p, branch.data(), nd);
        kernels::column_sums(branch.data(), grads.data() + off.ffn_b2, rows, d);
        kernels::matmul_at_b(bc.ffn_act.data(), branch.data(), grads.data() + off.ffn_w2, rows,
                             ffn, d);
        std::vector<T>& dact = dmid;
        kernels::matmul_a_bt(branch.data(), params.at(off.ffn_w2), dact.data(), rows, d, ffn);
        kernels::gelu_backward(bc.ffn_pre.data(), dact.data(), dact.data(),
                               static_cast<size_t>(rows) * ffn);
        kernels::column_sums(dact.data(), grads.data() + off.ffn_b1, rows, ffn);
        kernels::matmul_at_b(bc.ln2_out.data(), dact.data(), grads.data() + off.ffn_w1, rows, d,
                             ffn);
        std::fill(dn.begin(), dn.end(), T(0));
        kernels::matmul_a_bt(dact.data(), params.at(off.ffn_w1), dn.data(), rows, ffn, d);
        kernels::layer_norm_backward(dn.data(), params.at(off.ln2_gain), bc.ln2_xhat.data(),
                                     bc.ln2_istd.data(), dx.data(), grads.data() + off.ln2_gain,
                                     grads.data() + off.ln2_bias, rows, d);

        // attention branch: x_mid = x_in + dropout(W_O . attn(norm1(x_in)))
        mask_gradient(dx.data(), bc.attn_keep, keep_p, branch.data(), nd);
        kernels::matmul_at_b(bc.att_concat.data(), branch.data(), grads.data() + off.wo, rows, d,
                             d);
        std::vector<T>& datt = dmid;
        kernels::matmul_a_bt(branch.data(), params.at(off.wo), datt.data(), rows, d, d);

        std::fill(dq.begin(), dq.end(), T(0));
        std::fill(dkv.begin(), dkv.end(), T(0));
        std::fill(dv.begin(), dv.end(), T(0));
        const int bh = batch * heads;
        const T* const datt_ptr = datt.data();
        T* const dq_ptr = dq.data();
        T* const dkv_ptr = dkv.data();
        T* const dv_ptr = dv.data();
#pragma omp parallel for schedule(static)
        for (int i = 0; i < bh; ++i) {
            const int bi = i / heads, h = i % heads;
            const size_t base = static_cast<size_t>(bi) * seq * d + static_cast<size_t>(h) * dk;
            std::vector<T> scratch(static_cast<size_t>(seq));
            kernels::attention_head_backward(
                bc.q.data() + base, bc.k.data() + base, bc.v.data() + base,
                bc.probs.data() + static_cast<size_t>(i) * seq * seq, datt_ptr + base,
                dq_ptr + base, dkv_ptr + base, dv_ptr + base, seq, dk, d, scale,
                scratch.data());
        }

        kernels::matmul_at_b(bc.ln1_out.data(), dq.data(), grads.data() + off.wq, rows, d, d);
        kernels::matmul_at_b(bc.ln1_out.data(), dkv.data(), grads.data() + off.wk, rows, d, d);
        kernels::matmul_at_b(bc.ln1_out.data(), dv.data(), grads.data() + off.wv, rows, d, d);
        std::fill(dn.begin(), dn.end(), T(0));
        kernels::matmul_a_bt(dq.data(), params.at(off.wq), dn.data(), rows, d, d, true);
        kernels::matmul_a_bt(dkv.data(), params.at(off.wk), dn.data(), rows, d, d, true);
        kernels::matmul_a_bt(dv.data(), params.at(off.wv), dn.data(), rows, d, d, true);
        kernels::layer_norm_backward(dn.data(), params.at(off.ln1_gain), bc.ln1_xhat.data(),
                                     bc.ln1_istd.data(), dx.data(), grads.data() + off.ln1_gain,
                                     grads.data() + off.ln1_bias, rows, d);
    }

    // embeddings: serial scatter keeps the accumulation order fixed
    for (int r = 0; r < rows; ++r) {
        const T* dxr = dx.data() + static_cast<size_t>(r) * d;
        for (int c = 0; c < kNumChannels; ++c) {
            const uint16_t bin = cache.bins[static_cast<size_t>(r) * kNumChannels + c];
            T* g = grads.data() + L.token_embed[c] + static_cast<size_t>(bin) * d;
            for (int j = 0; j < d; ++j) g[j] += dxr[j];
        }
    }
    const T* const dx_ptr = dx.data();
    T* const pos_grad = grads.data() + L.pos_embed;
#pragma omp parallel for schedule(static)
    for (int t = 0; t < seq; ++t) {
        T* g = pos_grad + static_cast<size_t>(t) * d;
        for (int bi = 0; bi < batch; ++bi) {
            const T* dxr = dx_ptr + (static_cast<size_t>(bi) * seq + t) * d;
            for (int j = 0; j < d; ++j) g[j] += dxr[j];
        }
    }
}

// ---------------------------------------------------------------------------
// checkpoint IO
// ---------------------------------------------------------------------------

namespace {

constexpr uint32_t kCheckpointVersion = 1;

json config_to_json(const ModelConfig& cfg) {
    return json{{"d_model", cfg.d_model},       {"num_heads", cfg.num_heads},
                {"num_blocks", cfg.num_blocks}, {"ffn_hidden", cfg.ffn_hidden},
                {"num_bins", cfg.num_bins},     {"num_channels", cfg.num_channels},
                {"seq_len", cfg.seq_len},       {"dropout_p", cfg.dropout_p}};
}

ModelConfig config_from_json(const json& j) {
    ModelConfig cfg;
    cfg.d_model = j.at("d_model").get<int>();
    cfg.num_heads = j.at("num_heads").get<int>();
    cfg.num_blocks = j.at("num_blocks").get<int>();
    cfg.ffn_hidden = j.at("ffn_hidden").get<int>();
    cfg.num_bins = j.at("num_bins").get<int>();
    cfg.num_channels = j.at("num_channels").get<int>();
    cfg.seq_len = j.at("seq_len").get<int>();
    cfg.dropout_p = j.at("dropout_p").get<double>();
    return cfg;
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelParams<float>& params,
                     const CheckpointMeta& meta) {
    json header;
    header["format_version"] = kCheckpointVersion;
    header["config"] = config_to_json(params.config);
    header["meta"] = {{"training_windows", meta.training_windows},
                      {"training_days", meta.training_days},
                      {"epochs", meta.epochs},
                      {"seed", meta.seed}};
    json manifest = json::array();
    for (const TensorSpec& t : params.layout.tensors) {
        manifest.push_back({{"name", t.name},
                            {"shape", t.shape},
                            {"offset", t.offset * sizeof(float)},
                            {"size", t.size}});
    }
    header["tensors"] = std::move(manifest);
    const std::string header_str = header.dump();

    std::string bytes;
    bytes.reserve(8 + header_str.size() + params.values.size() * sizeof(float));
    bytes += "AGCK";
    bin::put_u32(bytes, static_cast<uint32_t>(header_str.size()));
    bytes += header_str;
    for (const float v : params.values) bin::put_f32(bytes, v);
    bin::write_file(path, bytes);
}

ModelParams<float> load_checkpoint(const std::string& path, CheckpointMeta* meta) {
    bin::Reader r(path);
    if (r.str(4) != "AGCK") throw std::runtime_error(path + ": bad magic");
    const uint32_t header_len = r.u32();
    const json header = json::parse(r.str(header_len));
    const uint32_t version = header.at("format_version").get<uint32_t>();
    if (version != kCheckpointVersion)
        throw std::runtime_error(path + ": unsupported version " + std::to_string(version));

    ModelParams<float> params(config_from_json(header.at("config")));
    if (meta != nullptr && header.contains("meta")) {
        const json& m = header.at("meta");
        meta->training_windows = m.value("training_windows", int64_t{-1});
        meta->training_days = m.value("training_days", int64_t{-1});
        meta->epochs = m.value("epochs", -1);
        meta->seed = m.value("seed", uint64_t{0});
    }

    const size_t payload_start = r.pos();
    size_t loaded = 0;
    for (const json& entry : header.at("tensors")) {
        const std::string name = entry.at("name").get<std::string>();
        const TensorSpec* spec = params.layout.find(name);
        if (spec == nullptr) throw std::runtime_error(path + ": unknown tensor " + name);
        if (entry.at("size").get<size_t>() != spec->size ||
            entry.at("shape").get<std::vector<int>>() != spec->shape)
            throw std::runtime_error(path + ": shape mismatch for " + name);
        r.seek(payload_start + entry.at("offset").get<size_t>());
        float* dst = params.values.data() + spec->offset;
        for (size_t i = 0; i < spec->size; ++i) dst[i] = r.f32();
        ++loaded;
    }
    if (loaded != params.layout.tensors.size())
        throw std::runtime_error(path + ": incomplete tensor manifest");
    return params;
}

// explicit instantiations: float for training/inference, double for the
// finite-difference gradient checks
template ModelParams<float> init_params<float>(const ModelConfig&, uint64_t);
template ModelParams<double> init_params<double>(const ModelConfig&, uint64_t);
template void embed<float>(const uint16_t*, int, const ModelParams<float>&, float*);
template void embed<double>(const uint16_t*, int, const ModelParams<double>&, double*);
template void causal_attention<float>(const float*, const float*, const float*, int, int, float*,
                                      float*);
template void causal_attention<double>(const double*, const double*, const double*, int, int,
                                       double*, double*);
template void forward<float>(const uint16_t*, int, const ModelParams<float>&, bool, Rng*,
                             ForwardCache<float>&);
template void forward<double>(const uint16_t*, int, const ModelParams<double>&, bool, Rng*,
                              ForwardCache<double>&);
template void backward<float>(const ForwardCache<float>&, const float*, const ModelParams<float>&,
                              std::vector<float>&);
template void backward<double>(const ForwardCache<double>&, const double*,
                               const ModelParams<double>&, std::vector<double>&);

}  // namespace actigen
