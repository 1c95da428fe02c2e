#include <cmath>

#include "tcseg/model.hpp"

namespace tcseg {

namespace {

constexpr double kStep = 1e-5;
constexpr double kTol = 1e-4;

SeqTensor rand_tensor(int rows, int cols, Rng& rng, double lo = -1.0, double hi = 1.0) {
    SeqTensor t(rows, cols);
    for (double& v : t.data()) v = rng.uniform(lo, hi);
    return t;
}

// sum(y y^T) keeps the probe sensitive to every output coordinate and sign
NodeId squared_sum(Tape& tape, NodeId y) { return tape.sum(tape.matmul_nt(y, y)); }

}  // namespace

std::vector<NamedGradCheck> gradient_check_suite(std::uint64_t seed) {
    std::vector<NamedGradCheck> out;
    Rng rng(seed);

    for (int dil : {1, 2, 512}) {
        const int T = 12, cin = 2, cout = 3;
        ConvSpec spec{3, dil, cin, cout};
        std::vector<SeqTensor> theta = {rand_tensor(T, cin, rng), rand_tensor(cout, 3 * cin, rng),
                                        rand_tensor(1, cout, rng, 0.1, 0.5)};
        TapeFn f = [spec](Tape& tape, const std::vector<NodeId>& ids) {
            return squared_sum(tape, tape.conv1d(ids[0], ids[1], ids[2], spec));
        };
        out.push_back({"conv1d_dilation_" + std::to_string(dil),
                       gradcheck(f, theta, {"x", "w", "b"}, kStep, kTol, seed + dil)});
    }

    {
        std::vector<SeqTensor> theta = {rand_tensor(10, 3, rng)};
        TapeFn f = [](Tape& tape, const std::vector<NodeId>& ids) {
            return squared_sum(tape, tape.maxpool_time(ids[0], 4));
        };
        out.push_back({"maxpool", gradcheck(f, theta, {"x"}, kStep, kTol, seed + 20)});
    }
    {
        std::vector<SeqTensor> theta = {rand_tensor(3, 3, rng)};
        TapeFn f = [](Tape& tape, const std::vector<NodeId>& ids) {
            return squared_sum(tape, tape.upsample_time(ids[0], 4, 11));
        };
        out.push_back({"upsample", gradcheck(f, theta, {"x"}, kStep, kTol, seed + 21)});
    }
    {
        std::vector<SeqTensor> theta = {rand_tensor(6, 4, rng), rand_tensor(1, 4, rng, 0.5, 1.5),
                                        rand_tensor(1, 4, rng)};
        const SeqTensor mixer = rand_tensor(6, 4, rng);
        TapeFn f = [mixer](Tape& tape, const std::vector<NodeId>& ids) {
            NodeId y = tape.layernorm(ids[0], ids[1], ids[2], 1e-5);
            return tape.sum(tape.matmul_nt(y, tape.leaf(mixer)));
        };
        out.push_back(
            {"layernorm", gradcheck(f, theta, {"x", "gain", "bias"}, kStep, kTol, seed + 22)});
    }
    {
        std::vector<SeqTensor> theta = {rand_tensor(5, 4, rng)};
        const SeqTensor mixer = rand_tensor(5, 4, rng);
        TapeFn f = [mixer](Tape& tape, const std::vector<NodeId>& ids) {
            NodeId y = tape.softmax_rows(ids[0]);
            return tape.sum(tape.matmul_nt(y, tape.leaf(mixer)));
        };
        out.push_back({"softmax", gradcheck(f, theta, {"x"}, kStep, kTol, seed + 23)});
    }
    {
        std::vector<SeqTensor> theta = {rand_tensor(6, 3, rng)};
        const std::vector<int> labels = {0, 1, 2, 2, 1, 0};
        TapeFn f = [labels](Tape& tape, const std::vector<NodeId>& ids) {
            return tape.cross_entropy(tape.softmax_rows(ids[0]), labels);
        };
        out.push_back({"cross_entropy", gradcheck(f, theta, {"logits"}, kStep, kTol, seed + 24)});
    }

    {
        // full attention block, T=8, f=4, d_k=3
        ModelConfig cfg;
        cfg.num_layers = 1;
        cfg.channels = 4;
        cfg.d_k = 3;
        cfg.num_classes = 2;
        cfg.input_dim = 4;
        cfg.dropout_rate = 0.0;
        cfg.variant = Variant::attention_only;
        const int f_ch = cfg.channels;
        std::vector<SeqTensor> theta = {
            rand_tensor(8, f_ch, rng),                 // h
            rand_tensor(f_ch, cfg.d_k, rng),           // wq
            rand_tensor(f_ch, cfg.d_k, rng),           // wk
            rand_tensor(f_ch, f_ch, rng),              // wv
            rand_tensor(1, f_ch, rng, 0.5, 1.5),       // ln1 gain
            rand_tensor(1, f_ch, rng),                 // ln1 bias
            rand_tensor(f_ch, f_ch, rng),              // ffn1 w
            rand_tensor(1, f_ch, rng, 0.1, 0.4),       // ffn1 b
            rand_tensor(f_ch, f_ch, rng),              // ffn2 w
            rand_tensor(1, f_ch, rng),                 // ffn2 b
            rand_tensor(1, f_ch, rng, 0.5, 1.5),       // ln2 gain
            rand_tensor(1, f_ch, rng),                 // ln2 bias
        };
        TapeFn fn = [cfg](Tape& tape, const std::vector<NodeId>& ids) {
            BoundParams bp;
            bp.attention.wq = ids[1];
            bp.attention.wk = ids[2];
            bp.attention.wv = ids[3];
            bp.attention.ln1_gain = ids[4];
            bp.attention.ln1_bias = ids[5];
            bp.attention.ffn1.w = ids[6];
            bp.attention.ffn1.b = ids[7];
            bp.attention.ffn2.w = ids[8];
            bp.attention.ffn2.b = ids[9];
            bp.attention.ln2_gain = ids[10];
            bp.attention.ln2_bias = ids[11];
            return squared_sum(tape, attention_block(tape, cfg, bp, ids[0]));
        };
        out.push_back({"attention_block",
                       gradcheck(fn, theta,
                                 {"h", "wq", "wk", "wv", "ln1_gain", "ln1_bias", "ffn1.w",
                                  "ffn1.b", "ffn2.w", "ffn2.b", "ln2_gain", "ln2_bias"},
                                 kStep, kTol, seed + 25)});
    }

    {
        // composed model, dropout off: L=2, f=4, d_k=3, C=3, T=12
        ModelConfig cfg;
        cfg.num_layers = 2;
        cfg.channels = 4;
        cfg.d_k = 3;
        cfg.num_classes = 3;
        cfg.input_dim = 5;
        cfg.dropout_rate = 0.0;
        cfg.variant = Variant::symmetric_pooled;
        ModelParams params = init_params(cfg, seed + 26);
        const SeqTensor x = rand_tensor(12, cfg.input_dim, rng);
        const std::vector<int> labels = {0, 1, 2, 0, 1, 2, 0, 1, 2, 0, 1, 2};
        std::vector<SeqTensor> theta;
        for (const SeqTensor* t : flatten(params)) theta.push_back(*t);
        TapeFn fn = [cfg, x, labels](Tape& tape, const std::vector<NodeId>& ids) {
            BoundParams bp = bind_from_ids(cfg, ids);
            return tape.cross_entropy(forward_probs(tape, cfg, bp, x, ForwardOptions{}), labels);
        };
        out.push_back({"composed_model",
                       gradcheck(fn, theta, param_names(params), kStep, kTol, seed + 27)});
    }
    return out;
}

}  // namespace tcseg
