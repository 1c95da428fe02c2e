#include "tcseg/model.hpp"

#include <cmath>
#include <stdexcept>

namespace tcseg {

Variant variant_from_string(const std::string& s) {
    if (s == "attention_only") return Variant::attention_only;
    if (s == "head_dilation") return Variant::head_dilation;
    if (s == "tail_dilation") return Variant::tail_dilation;
    if (s == "symmetric") return Variant::symmetric;
    if (s == "symmetric_pooled") return Variant::symmetric_pooled;
    throw std::invalid_argument("unknown variant '" + s + "'");
}

std::string to_string(Variant v) {
    switch (v) {
        case Variant::attention_only: return "attention_only";
        case Variant::head_dilation: return "head_dilation";
        case Variant::tail_dilation: return "tail_dilation";
        case Variant::symmetric: return "symmetric";
        case Variant::symmetric_pooled: return "symmetric_pooled";
    }
    throw std::logic_error("unreachable");
}

const std::vector<Variant>& all_variants() {
    static const std::vector<Variant> v = {
        Variant::attention_only, Variant::head_dilation, Variant::tail_dilation,
        Variant::symmetric, Variant::symmetric_pooled};
    return v;
}

VariantLayout layout_of(Variant v) {
    switch (v) {
        case Variant::attention_only: return {false, false, false};
        case Variant::head_dilation: return {true, false, false};
        case Variant::tail_dilation: return {false, true, false};
        case Variant::symmetric: return {true, true, false};
        case Variant::symmetric_pooled: return {true, true, true};
    }
    throw std::logic_error("unreachable");
}

void ModelConfig::validate() const {
    if (num_layers < 1) throw std::invalid_argument("config: num_layers must be >= 1");
    if (channels < 1) throw std::invalid_argument("config: channels must be >= 1");
    if (kernel_size < 1 || kernel_size % 2 == 0)
        throw std::invalid_argument("config: kernel_size must be odd and positive");
    if (d_k < 1) throw std::invalid_argument("config: d_k must be >= 1");
    if (num_classes < 1) throw std::invalid_argument("config: num_classes must be >= 1");
    if (input_dim < 1) throw std::invalid_argument("config: input_dim must be >= 1");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0)
        throw std::invalid_argument("config: dropout_rate must be in [0,1)");
}

std::vector<std::string> param_names(const ModelParams& p) {
    std::vector<std::string> names;
    visit_params(p, [&](const std::string& n, const SeqTensor&) { names.push_back(n); });
    return names;
}

std::vector<SeqTensor*> flatten(ModelParams& p) {
    std::vector<SeqTensor*> out;
    visit_params(p, [&](const std::string&, SeqTensor& t) { out.push_back(&t); });
    return out;
}

std::vector<const SeqTensor*> flatten(const ModelParams& p) {
    std::vector<const SeqTensor*> out;
    visit_params(p, [&](const std::string&, const SeqTensor& t) { out.push_back(&t); });
    return out;
}

namespace {

// Structure with default-constructed tensors, stage vectors sized per variant.
template <typename T>
NetParamsT<T> make_structure(const ModelConfig& cfg) {
    NetParamsT<T> p;
    const VariantLayout lay = layout_of(cfg.variant);
    if (lay.encoder_blocks) p.encoder.resize(static_cast<size_t>(cfg.num_layers));
    if (lay.decoder_blocks) p.decoder.resize(static_cast<size_t>(cfg.num_layers));
    return p;
}

SeqTensor uniform_init(int rows, int cols, int fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    SeqTensor t(rows, cols);
    for (double& v : t.data()) v = rng.uniform(-bound, bound);
    return t;
}

}  // namespace

ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    const int f = cfg.channels;
    const int k = cfg.kernel_size;

    ModelParams p = make_structure<SeqTensor>(cfg);
    p.input_proj.w = uniform_init(f, cfg.input_dim, cfg.input_dim, rng);
    p.input_proj.b = uniform_init(1, f, cfg.input_dim, rng);

    auto init_block = [&](DilatedBlockT<SeqTensor>& blk) {
        blk.w1 = uniform_init(f, k * f, k * f, rng);
        blk.b1 = uniform_init(1, f, k * f, rng);
        blk.w2 = uniform_init(f, f, f, rng);
        blk.b2 = uniform_init(1, f, f, rng);
    };
    for (auto& blk : p.encoder) init_block(blk);

    p.attention.wq = uniform_init(f, cfg.d_k, f, rng);
    p.attention.wk = uniform_init(f, cfg.d_k, f, rng);
    p.attention.wv = uniform_init(f, f, f, rng);
    p.attention.ln1_gain = SeqTensor(1, f, 1.0);
    p.attention.ln1_bias = SeqTensor(1, f, 0.0);
    p.attention.ffn1.w = uniform_init(f, f, f, rng);
    p.attention.ffn1.b = uniform_init(1, f, f, rng);
    p.attention.ffn2.w = uniform_init(f, f, f, rng);
    p.attention.ffn2.b = uniform_init(1, f, f, rng);
    p.attention.ln2_gain = SeqTensor(1, f, 1.0);
    p.attention.ln2_bias = SeqTensor(1, f, 0.0);

    for (auto& blk : p.decoder) init_block(blk);

    p.head.w = uniform_init(cfg.num_classes, f, f, rng);
    p.head.b = uniform_init(1, cfg.num_classes, f, rng);
    return p;
}

ModelParams zeros_like(const ModelParams& p) {
    ModelParams z = p;
    visit_params(z, [](const std::string&, SeqTensor& t) { t.fill(0.0); });
    return z;
}

int dilated_block_count(const ModelParams& p) {
    return static_cast<int>(p.encoder.size() + p.decoder.size());
}

long param_count(const ModelParams& p) {
    long n = 0;
    visit_params(p, [&](const std::string&, const SeqTensor& t) { n += t.size(); });
    return n;
}

BoundParams bind_params(Tape& tape, const ModelParams& p) {
    BoundParams bp;
    bp.encoder.resize(p.encoder.size());
    bp.decoder.resize(p.decoder.size());
    auto src = flatten(p);
    size_t i = 0;
    visit_params(bp, [&](const std::string&, NodeId& id) { id = tape.leaf(*src[i++]); });
    return bp;
}

BoundParams bind_from_ids(const ModelConfig& cfg, const std::vector<NodeId>& ids) {
    BoundParams bp = make_structure<NodeId>(cfg);
    size_t i = 0;
    visit_params(bp, [&](const std::string&, NodeId& id) {
        if (i >= ids.size()) throw std::invalid_argument("bind_from_ids: too few ids");
        id = ids[i++];
    });
    if (i != ids.size()) throw std::invalid_argument("bind_from_ids: too many ids");
    return bp;
}

ModelParams collect_grads(const Tape& tape, const BoundParams& bp) {
    ModelParams g;
    g.encoder.resize(bp.encoder.size());
    g.decoder.resize(bp.decoder.size());
    std::vector<NodeId> ids;
    visit_params(bp, [&](const std::string&, const NodeId& id) { ids.push_back(id); });
    size_t i = 0;
    visit_params(g, [&](const std::string&, SeqTensor& t) { t = tape.grad(ids[i++]); });
    return g;
}

namespace {

NodeId conv_pointwise(Tape& tape, NodeId x, NodeId w, NodeId b, int cin, int cout) {
    return tape.conv1d(x, w, b, ConvSpec{1, 1, cin, cout});
}

}  // namespace

NodeId dilated_residual_block(Tape& tape, const ModelConfig& cfg,
                              const DilatedBlockT<NodeId>& blk, NodeId x, int dilation,
                              const ForwardOptions& opts) {
    const int f = cfg.channels;
    NodeId hidden = tape.relu(
        tape.conv1d(x, blk.w1, blk.b1, ConvSpec{cfg.kernel_size, dilation, f, f}));
    NodeId out = conv_pointwise(tape, hidden, blk.w2, blk.b2, f, f);
    if (opts.training && cfg.dropout_rate > 0.0) {
        if (opts.dropout_rng == nullptr)
            throw std::invalid_argument("forward: training with dropout needs an rng");
        out = tape.dropout(out, cfg.dropout_rate, *opts.dropout_rng);
    }
    return tape.add(x, out);
}

namespace {

NodeId run_stack(Tape& tape, const ModelConfig& cfg, const std::vector<DilatedBlockT<NodeId>>& blocks,
                 NodeId x, const ForwardOptions& opts) {
    int dilation = 1;
    for (const auto& blk : blocks) {
        x = dilated_residual_block(tape, cfg, blk, x, dilation, opts);
        dilation *= 2;
    }
    return x;
}

}  // namespace

EncodeOut encode(Tape& tape, const ModelConfig& cfg, const BoundParams& p, NodeId x,
                 const ForwardOptions& opts) {
    const int T = tape.value(x).rows();
    NodeId h = conv_pointwise(tape, x, p.input_proj.w, p.input_proj.b, cfg.input_dim,
                              cfg.channels);
    h = run_stack(tape, cfg, p.encoder, h, opts);
    if (cfg.pooled()) h = tape.maxpool_time(h, ModelConfig::pool_window);
    return {h, T};
}

NodeId attention_block(Tape& tape, const ModelConfig& cfg, const BoundParams& p, NodeId h) {
    const auto& at = p.attention;
    NodeId q = tape.matmul(h, at.wq);
    NodeId k = tape.matmul(h, at.wk);
    NodeId v = tape.matmul(h, at.wv);
    NodeId attn = tape.softmax_rows(
        tape.scale(tape.matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(cfg.d_k))));
    NodeId z = tape.matmul(attn, v);

    constexpr double ln_eps = 1e-5;
    NodeId normed = tape.layernorm(tape.add(h, z), at.ln1_gain, at.ln1_bias, ln_eps);
    NodeId ffn = tape.relu(
        conv_pointwise(tape, normed, at.ffn1.w, at.ffn1.b, cfg.channels, cfg.channels));
    ffn = conv_pointwise(tape, ffn, at.ffn2.w, at.ffn2.b, cfg.channels, cfg.channels);
    return tape.layernorm(tape.add(normed, ffn), at.ln2_gain, at.ln2_bias, ln_eps);
}

NodeId decode(Tape& tape, const ModelConfig& cfg, const BoundParams& p, NodeId h,
              int original_len, const ForwardOptions& opts) {
    if (cfg.pooled())
        h = tape.upsample_time(h, ModelConfig::pool_window, original_len);
    return run_stack(tape, cfg, p.decoder, h, opts);
}

NodeId forward_probs(Tape& tape, const ModelConfig& cfg, const BoundParams& p,
                     const SeqTensor& x, const ForwardOptions& opts) {
    if (x.rows() < 1) throw std::invalid_argument("forward: empty input sequence");
    if (x.cols() != cfg.input_dim)
        throw std::invalid_argument("forward: input has " + std::to_string(x.cols()) +
                                    " channels, config expects " + std::to_string(cfg.input_dim));
    EncodeOut enc = encode(tape, cfg, p, tape.leaf(x), opts);
    NodeId h = opts.attention_identity ? enc.features
                                       : attention_block(tape, cfg, p, enc.features);
    h = decode(tape, cfg, p, h, enc.original_len, opts);
    NodeId logits = conv_pointwise(tape, h, p.head.w, p.head.b, cfg.channels, cfg.num_classes);
    return tape.softmax_rows(logits);
}

std::vector<int> argmax_labels(const SeqTensor& probs) {
    std::vector<int> labels(static_cast<size_t>(probs.rows()));
    for (int t = 0; t < probs.rows(); ++t) {
        int best = 0;
        for (int c = 1; c < probs.cols(); ++c)
            if (probs.at(t, c) > probs.at(t, best)) best = c;  // ties keep the lowest class
        labels[static_cast<size_t>(t)] = best;
    }
    return labels;
}

Prediction predict(const ModelConfig& cfg, const ModelParams& params, const SeqTensor& x) {
    Tape tape;
    BoundParams bp = bind_params(tape, params);
    NodeId probs = forward_probs(tape, cfg, bp, x, ForwardOptions{});
    Prediction pred;
    pred.probs = tape.value(probs);
    pred.labels = argmax_labels(pred.probs);
    return pred;
}

}  // namespace tcseg
