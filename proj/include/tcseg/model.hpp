#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tcseg/autodiff.hpp"
#include "tcseg/tensor.hpp"

namespace tcseg {

/// Network stage selection used by the ablation study: attention alone, the
/// dilation stack before or after it, the symmetric pair, and the symmetric
/// pair with temporal pooling around the attention.
enum class Variant {
    attention_only,
    head_dilation,
    tail_dilation,
    symmetric,
    symmetric_pooled,
};

Variant variant_from_string(const std::string& s);
std::string to_string(Variant v);
const std::vector<Variant>& all_variants();

struct VariantLayout {
    bool encoder_blocks = false;
    bool decoder_blocks = false;
    bool pooled = false;
};

VariantLayout layout_of(Variant v);

struct ModelConfig {
    int num_layers = 10;  // dilated layers per stack, dilations 2^0..2^(L-1)
    int channels = 128;   // f
    int kernel_size = 3;
    int d_k = 16;         // query/key feature dimension
    int num_classes = 0;
    int input_dim = 128;  // D
    double dropout_rate = 0.5;
    bool pooling_enabled = true;
    Variant variant = Variant::symmetric_pooled;

    static constexpr int pool_window = 4;

    void validate() const;
    /// True when this configuration runs the 4x1 pool / 1x4 upsample pair.
    bool pooled() const { return layout_of(variant).pooled && pooling_enabled; }
};

/// Parameter container shared between values (SeqTensor), tape bindings
/// (NodeId) and optimizer slots. Weight layouts follow conv1d: a k-tap conv
/// from cin to cout channels stores cout x (k*cin); per-frame projections
/// without bias (the attention Q/K/V maps) store cin x cout.
template <typename T>
struct Conv1x1T {
    T w;  // cout x cin
    T b;  // 1 x cout
};

template <typename T>
struct DilatedBlockT {
    T w1;  // f x 3f, dilated conv
    T b1;  // 1 x f
    T w2;  // f x f, pointwise conv
    T b2;  // 1 x f
};

template <typename T>
struct AttentionParamsT {
    T wq;  // f x d_k
    T wk;  // f x d_k
    T wv;  // f x f
    T ln1_gain, ln1_bias;  // 1 x f
    Conv1x1T<T> ffn1, ffn2;
    T ln2_gain, ln2_bias;  // 1 x f
};

template <typename T>
struct NetParamsT {
    Conv1x1T<T> input_proj;
    std::vector<DilatedBlockT<T>> encoder;
    AttentionParamsT<T> attention;
    std::vector<DilatedBlockT<T>> decoder;
    Conv1x1T<T> head;
};

using ModelParams = NetParamsT<SeqTensor>;
using BoundParams = NetParamsT<NodeId>;

/// Visits every tensor with a stable dotted name; the visitation order
/// defines the flattened parameter order used everywhere (optimizer state,
/// checkpoints, gradient checks).
template <typename T, typename F>
void visit_params(NetParamsT<T>& p, F&& f) {
    f("input_proj.w", p.input_proj.w);
    f("input_proj.b", p.input_proj.b);
    for (size_t i = 0; i < p.encoder.size(); ++i) {
        const std::string base = "encoder." + std::to_string(i) + ".";
        f(base + "w1", p.encoder[i].w1);
        f(base + "b1", p.encoder[i].b1);
        f(base + "w2", p.encoder[i].w2);
        f(base + "b2", p.encoder[i].b2);
    }
    f("attention.wq", p.attention.wq);
    f("attention.wk", p.attention.wk);
    f("attention.wv", p.attention.wv);
    f("attention.ln1_gain", p.attention.ln1_gain);
    f("attention.ln1_bias", p.attention.ln1_bias);
    f("attention.ffn1.w", p.attention.ffn1.w);
    f("attention.ffn1.b", p.attention.ffn1.b);
    f("attention.ffn2.w", p.attention.ffn2.w);
    f("attention.ffn2.b", p.attention.ffn2.b);
    f("attention.ln2_gain", p.attention.ln2_gain);
    f("attention.ln2_bias", p.attention.ln2_bias);
    for (size_t i = 0; i < p.decoder.size(); ++i) {
        const std::string base = "decoder." + std::to_string(i) + ".";
        f(base + "w1", p.decoder[i].w1);
        f(base + "b1", p.decoder[i].b1);
        f(base + "w2", p.decoder[i].w2);
        f(base + "b2", p.decoder[i].b2);
    }
    f("head.w", p.head.w);
    f("head.b", p.head.b);
}

template <typename T, typename F>
void visit_params(const NetParamsT<T>& p, F&& f) {
    visit_params(const_cast<NetParamsT<T>&>(p),
                 [&f](const std::string& name, T& t) { f(name, const_cast<const T&>(t)); });
}

std::vector<std::string> param_names(const ModelParams& p);
std::vector<SeqTensor*> flatten(ModelParams& p);
std::vector<const SeqTensor*> flatten(const ModelParams& p);

/// Seeded uniform init in [-1/sqrt(fan_in), 1/sqrt(fan_in)]; layernorm gains
/// start at 1 and biases at 0. Stage vectors are sized per the variant.
ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed);
ModelParams zeros_like(const ModelParams& p);
int dilated_block_count(const ModelParams& p);
long param_count(const ModelParams& p);

/// Leaf-record every parameter on the tape, preserving structure.
BoundParams bind_params(Tape& tape, const ModelParams& p);
/// Rebuild the structured view from leaves created in visit order
/// (the gradcheck entry point).
BoundParams bind_from_ids(const ModelConfig& cfg, const std::vector<NodeId>& ids);
/// Read back d(loss)/d(param) for every bound leaf after tape.backward().
ModelParams collect_grads(const Tape& tape, const BoundParams& bp);

struct ForwardOptions {
    bool training = false;
    Rng* dropout_rng = nullptr;       // required when training with dropout_rate > 0
    bool attention_identity = false;  // test hook: bypass the attention block
};

struct EncodeOut {
    NodeId features;   // T' x f
    int original_len;  // T before pooling
};

/// ReLU(dilated conv) followed by a pointwise conv, dropout (training only)
/// and the residual add. Output shape equals input shape.
NodeId dilated_residual_block(Tape& tape, const ModelConfig& cfg,
                              const DilatedBlockT<NodeId>& blk, NodeId x, int dilation,
                              const ForwardOptions& opts);

/// Input projection, the encoder dilation stack, and (when configured) the
/// 4x1 max pool. `x` is a T x D leaf or intermediate node.
EncodeOut encode(Tape& tape, const ModelConfig& cfg, const BoundParams& p, NodeId x,
                 const ForwardOptions& opts);

/// Scaled dot-product self-attention with residual + layernorm and the
/// two-layer pointwise feed-forward sublayer.
NodeId attention_block(Tape& tape, const ModelConfig& cfg, const BoundParams& p, NodeId h);

/// 1x4 upsampling back to `original_len` (when pooling is configured)
/// followed by the decoder dilation stack.
NodeId decode(Tape& tape, const ModelConfig& cfg, const BoundParams& p, NodeId h,
              int original_len, const ForwardOptions& opts);

/// Full forward pass to per-frame class probabilities (T x C).
NodeId forward_probs(Tape& tape, const ModelConfig& cfg, const BoundParams& p,
                     const SeqTensor& x, const ForwardOptions& opts);

std::vector<int> argmax_labels(const SeqTensor& probs);

struct Prediction {
    SeqTensor probs;
    std::vector<int> labels;
};

/// Evaluation-mode prediction (dropout off).
Prediction predict(const ModelConfig& cfg, const ModelParams& params, const SeqTensor& x);

struct NamedGradCheck {
    std::string component;
    GradCheckReport report;
};

/// Central-difference battery over every differentiable op (conv at dilations
/// 1/2/512, pool, upsample, layernorm, softmax, attention block, cross
/// entropy) plus the composed small model, step 1e-5 and tolerance 1e-4.
std::vector<NamedGradCheck> gradient_check_suite(std::uint64_t seed);

}  // namespace tcseg
