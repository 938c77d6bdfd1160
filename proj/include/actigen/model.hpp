#pragma once
// Decoder-only multi-task transformer with hand-written forward and
// reverse-mode gradient passes.
//
// Architecture: per-channel token embeddings (summed) + learned positional
// embeddings, then num_blocks of pre-norm blocks
//     x = x + dropout(W_O . multihead_causal_attention(norm1(x)))
//     x = x + dropout(ffn(norm2(x)))        ffn = W2 . gelu(W1 . + b1) + b2
// followed by a final layer norm and three linear heads, one per channel,
// each producing num_bins logits per position.
//
// Conventions: activations are [batch*seq, d_model] row-major; attention
// probabilities [batch][head][seq][seq]; logits [batch][seq][channel][bins].
// All parameters live in one flat vector described by ParamLayout, so the
// optimizer, serializer, and gradient checker can treat them uniformly.

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "actigen/data_pipeline.hpp"
#include "actigen/rng.hpp"

namespace actigen {

using Scalar = float;  // working precision; double instantiations exist for gradient checking

struct ModelConfig {
    int d_model = 64;
    int num_heads = 4;
    int num_blocks = 3;
    int ffn_hidden = 256;
    int num_bins = 100;
    int num_channels = kNumChannels;
    int seq_len = 21;
    double dropout_p = 0.1;

    int head_dim() const { return d_model / num_heads; }
    void validate() const;

    bool operator==(const ModelConfig&) const = default;
};

// Built-in presets: the full-size architecture above, and a tiny one for
// fast tests (d_model 8, 2 heads, 1 block, seq_len 4, 5 bins).
ModelConfig tiny_model_config();

struct TensorSpec {
    std::string name;
    std::vector<int> shape;
    size_t offset = 0;  // element offset into the flat parameter vector
    size_t size = 0;
};

struct ParamLayout {
    struct BlockOffsets {
        size_t ln1_gain, ln1_bias, wq, wk, wv, wo;
        size_t ln2_gain, ln2_bias, ffn_w1, ffn_b1, ffn_w2, ffn_b2;
    };

    std::vector<TensorSpec> tensors;
    size_t total = 0;

    std::array<size_t, kNumChannels> token_embed{};
    size_t pos_embed = 0;
    std::vector<BlockOffsets> blocks;
    size_t final_gain = 0, final_bias = 0;
    std::array<size_t, kNumChannels> head_w{};
    std::array<size_t, kNumChannels> head_b{};

    static ParamLayout create(const ModelConfig& cfg);
    const TensorSpec* find(std::string_view name) const;
    // tensor containing the given flat element index (for error messages)
    const TensorSpec& tensor_at(size_t flat_index) const;
};

template <class T>
struct ModelParams {
    ModelConfig config;
    ParamLayout layout;
    std::vector<T> values;

    ModelParams() = default;
    explicit ModelParams(const ModelConfig& cfg)
        : config(cfg), layout(ParamLayout::create(cfg)), values(layout.total, T(0)) {}

    T* at(size_t offset) { return values.data() + offset; }
    const T* at(size_t offset) const { return values.data() + offset; }
};

// Weights ~ N(0, 0.02^2), biases 0, layer-norm gains 1.
template <class T>
ModelParams<T> init_params(const ModelConfig& cfg, uint64_t seed);

template <class T>
struct ForwardCache {
    int batch = 0;
    bool training = false;
    ModelConfig config;
    std::vector<uint16_t> bins;  // input copy, [batch*seq*channels]

    struct BlockCache {
        std::vector<T> ln1_xhat, ln1_out, ln1_istd;
        std::vector<T> q, k, v;
        std::vector<T> probs;            // [batch*heads*seq*seq]
        std::vector<T> att_concat;       // heads concatenated, before W_O
        std::vector<uint8_t> attn_keep;  // dropout keep mask; empty unless training
        std::vector<T> ln2_xhat, ln2_out, ln2_istd;
        std::vector<T> ffn_pre, ffn_act;
        std::vector<uint8_t> ffn_keep;
    };
    std::vector<BlockCache> blocks;
    std::vector<T> final_xhat, final_out, final_istd;
    std::vector<T> logits;  // [batch][seq][channel][bins]

    bool valid() const { return batch > 0 && !logits.empty(); }
    size_t logits_size() const { return logits.size(); }
};

// out[b,t,:] = sum_c token_embed[c][bin(b,t,c)] + pos_embed[t]
template <class T>
void embed(const uint16_t* bins, int batch, const ModelParams<T>& params, T* out);

// Single-head causal attention on contiguous [seq, dk] matrices; row t of
// the output is a convex combination of value rows 0..t.
template <class T>
void causal_attention(const T* q, const T* k, const T* v, int seq, int dk, T* out,
                      T* probs = nullptr);

// dropout_rng must be non-null when training (masks are drawn from it and
// cached for the backward pass). Throws on a bad bin index or a non-finite
// activation (the error names the first offending layer).
template <class T>
void forward(const uint16_t* bins, int batch, const ModelParams<T>& params, bool training,
             Rng* dropout_rng, ForwardCache<T>& cache);

// dLoss/dtheta for every parameter, given dLoss/dlogits. Requires the cache
// of the forward call that produced the logits.
template <class T>
void backward(const ForwardCache<T>& cache, const T* dlogits, const ModelParams<T>& params,
              std::vector<T>& grads);

// ---------------------------------------------------------------------------
// checkpoint file: magic "AGCK", u32 JSON header length, JSON header
// (format version, config, tensor manifest with byte offsets), then raw
// little-endian f32 tensor payloads in manifest order.
// ---------------------------------------------------------------------------

struct CheckpointMeta {
    int64_t training_windows = -1;
    int64_t training_days = -1;
    int epochs = -1;
    uint64_t seed = 0;
};

void save_checkpoint(const std::string& path, const ModelParams<float>& params,
                     const CheckpointMeta& meta = {});
ModelParams<float> load_checkpoint(const std::string& path, CheckpointMeta* meta = nullptr);

}  // namespace actigen
