#include <doctest.h>

#include <limits>
#include <stdexcept>

#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "tcseg/checkpoint.hpp"
#include "tcseg/model.hpp"
#include "tcseg/rng.hpp"

using namespace tcseg;

namespace {

ModelConfig small_config(Variant variant = Variant::symmetric_pooled) {
    ModelConfig cfg;
    cfg.num_layers = 2;
    cfg.channels = 4;
    cfg.d_k = 3;
    cfg.num_classes = 3;
    cfg.input_dim = 5;
    cfg.dropout_rate = 0.0;
    cfg.variant = variant;
    return cfg;
}

SeqTensor random_input(int T, int D, std::uint64_t seed) {
    Rng rng(seed);
    SeqTensor x(T, D);
    for (double& v : x.data()) v = rng.uniform(-1.0, 1.0);
    return x;
}

// Encoder-output dependency test: does a bump at `dist` frames from frame 0
// change the encoder value at frame 0? Weights are all-positive with a large
// positive conv bias, so every ReLU stays in its linear region and positive
// perturbations cannot cancel.
bool perturbation_reaches(int num_layers, int dist, int T = 64) {
    ModelConfig cfg;
    cfg.num_layers = num_layers;
    cfg.channels = 2;
    cfg.d_k = 2;
    cfg.num_classes = 2;
    cfg.input_dim = 2;
    cfg.dropout_rate = 0.0;
    cfg.variant = Variant::symmetric;  // no pooling

    ModelParams params = init_params(cfg, 1);
    visit_params(params, [](const std::string& name, SeqTensor& t) {
        const bool is_b1 = name.find(".b1") != std::string::npos;
        t.fill(is_b1 ? 100.0 : 0.05);
    });

    auto encode_at0 = [&](const SeqTensor& x) {
        Tape tape;
        BoundParams bp = bind_params(tape, params);
        EncodeOut enc = encode(tape, cfg, bp, tape.leaf(x), ForwardOptions{});
        return tape.value(enc.features).at(0, 0);
    };

    SeqTensor x(T, 2, 0.1);
    const double base = encode_at0(x);
    SeqTensor bumped = x;
    bumped.at(dist, 0) += 1.0;
    return std::fabs(encode_at0(bumped) - base) > 1e-12;
}

}  // namespace

TEST_CASE("variant layouts and structural counts") {
    CHECK(layout_of(Variant::attention_only).encoder_blocks == false);
    CHECK(layout_of(Variant::symmetric_pooled).pooled == true);
    CHECK(layout_of(Variant::symmetric).pooled == false);

    for (Variant v : all_variants()) {
        ModelConfig cfg = small_config(v);
        cfg.num_layers = 10;
        ModelParams p = init_params(cfg, 3);
        const VariantLayout lay = layout_of(v);
        const int expected =
            (lay.encoder_blocks ? 10 : 0) + (lay.decoder_blocks ? 10 : 0);
        CHECK(dilated_block_count(p) == expected);
    }
    // full model carries 2L dilated blocks, the baseline none
    CHECK(dilated_block_count(init_params(small_config(), 3)) == 4);
    CHECK(dilated_block_count(init_params(small_config(Variant::attention_only), 3)) == 0);

    CHECK(variant_from_string("symmetric_pooled") == Variant::symmetric_pooled);
    CHECK_THROWS_AS(variant_from_string("bogus"), std::invalid_argument);
    for (Variant v : all_variants()) CHECK(variant_from_string(to_string(v)) == v);
}

TEST_CASE("all variants produce T x C outputs on odd lengths") {
    for (Variant v : all_variants()) {
        ModelConfig cfg = small_config(v);
        ModelParams params = init_params(cfg, 11);
        const SeqTensor x = random_input(103, cfg.input_dim, 5);
        Prediction pred = predict(cfg, params, x);
        CHECK(pred.probs.rows() == 103);
        CHECK(pred.probs.cols() == cfg.num_classes);
        CHECK(pred.labels.size() == 103);
        CHECK(pred.probs.all_finite());
    }
}

TEST_CASE("shape preservation across many lengths") {
    ModelConfig cfg = small_config();
    ModelParams params = init_params(cfg, 7);
    for (int T = 1; T <= 100; T += 7) {
        Prediction pred = predict(cfg, params, random_input(T, cfg.input_dim, 100 + T));
        CHECK(pred.probs.rows() == T);
        CHECK(pred.probs.cols() == cfg.num_classes);
    }
}

TEST_CASE("encode pools 400 frames down to 100") {
    ModelConfig cfg = small_config();
    ModelParams params = init_params(cfg, 13);
    Tape tape;
    BoundParams bp = bind_params(tape, params);
    EncodeOut enc = encode(tape, cfg, bp, tape.leaf(random_input(400, cfg.input_dim, 2)),
                           ForwardOptions{});
    CHECK(tape.value(enc.features).rows() == 100);
    CHECK(enc.original_len == 400);
}

TEST_CASE("zero-weight dilated block is the identity") {
    ModelConfig cfg = small_config();
    Tape tape;
    DilatedBlockT<NodeId> blk;
    blk.w1 = tape.leaf(SeqTensor(4, 12, 0.0));
    blk.b1 = tape.leaf(SeqTensor(1, 4, 0.0));
    blk.w2 = tape.leaf(SeqTensor(4, 4, 0.0));
    blk.b2 = tape.leaf(SeqTensor(1, 4, 0.0));
    const SeqTensor x = random_input(9, 4, 21);
    NodeId out = dilated_residual_block(tape, cfg, blk, tape.leaf(x), 2, ForwardOptions{});
    CHECK(tape.value(out).data() == x.data());
}

TEST_CASE("dilated block keeps length for large dilations") {
    ModelConfig cfg = small_config();
    ModelParams params = init_params(cfg, 17);
    const SeqTensor x = random_input(13, cfg.channels, 22);
    for (int l = 0; l <= 13; ++l) {
        Tape tape;
        BoundParams bp = bind_params(tape, params);
        NodeId out = dilated_residual_block(tape, cfg, bp.encoder[0], tape.leaf(x), 1 << l,
                                            ForwardOptions{});
        CHECK(tape.value(out).rows() == 13);
    }
}

TEST_CASE("encoder dependency half-width is exactly 2^L - 1") {
    for (int L : {1, 2, 3}) {
        const int reach = (1 << L) - 1;
        CAPTURE(L);
        CHECK(perturbation_reaches(L, reach));
        CHECK_FALSE(perturbation_reaches(L, reach + 1));
    }
}

TEST_CASE("attention rows are stochastic and strictly positive") {
    ModelConfig cfg = small_config();
    ModelParams params = init_params(cfg, 23);
    Tape tape;
    BoundParams bp = bind_params(tape, params);
    NodeId h = tape.leaf(random_input(16, cfg.channels, 31));
    NodeId q = tape.matmul(h, bp.attention.wq);
    NodeId k = tape.matmul(h, bp.attention.wk);
    NodeId attn = tape.softmax_rows(
        tape.scale(tape.matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(cfg.d_k))));
    const SeqTensor& a = tape.value(attn);
    REQUIRE(a.rows() == 16);
    REQUIRE(a.cols() == 16);
    for (int t = 0; t < a.rows(); ++t) {
        double sum = 0.0;
        for (int c = 0; c < a.cols(); ++c) {
            CHECK(a.at(t, c) > 0.0);
            sum += a.at(t, c);
        }
        CHECK(std::fabs(sum - 1.0) <= 1e-9);
    }
}

TEST_CASE("attention output rows stay in the convex envelope of V rows") {
    ModelConfig cfg = small_config();
    ModelParams params = init_params(cfg, 29);
    Tape tape;
    BoundParams bp = bind_params(tape, params);
    NodeId h = tape.leaf(random_input(16, cfg.channels, 37));
    NodeId q = tape.matmul(h, bp.attention.wq);
    NodeId k = tape.matmul(h, bp.attention.wk);
    NodeId v = tape.matmul(h, bp.attention.wv);
    NodeId attn = tape.softmax_rows(
        tape.scale(tape.matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(cfg.d_k))));
    NodeId z = tape.matmul(attn, v);
    const SeqTensor& vv = tape.value(v);
    const SeqTensor& zv = tape.value(z);
    for (int c = 0; c < vv.cols(); ++c) {
        double lo = vv.at(0, c), hi = vv.at(0, c);
        for (int t = 1; t < vv.rows(); ++t) {
            lo = std::min(lo, vv.at(t, c));
            hi = std::max(hi, vv.at(t, c));
        }
        for (int t = 0; t < zv.rows(); ++t) {
            CHECK(zv.at(t, c) >= lo - 1e-12);
            CHECK(zv.at(t, c) <= hi + 1e-12);
        }
    }
}

TEST_CASE("single-frame attention is a pass-through of V") {
    ModelConfig cfg = small_config();
    ModelParams params = init_params(cfg, 41);
    Tape tape;
    BoundParams bp = bind_params(tape, params);
    NodeId h = tape.leaf(random_input(1, cfg.channels, 43));
    NodeId q = tape.matmul(h, bp.attention.wq);
    NodeId k = tape.matmul(h, bp.attention.wk);
    NodeId v = tape.matmul(h, bp.attention.wv);
    NodeId attn = tape.softmax_rows(
        tape.scale(tape.matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(cfg.d_k))));
    CHECK(tape.value(attn).at(0, 0) == doctest::Approx(1.0));
    NodeId z = tape.matmul(attn, v);
    for (int c = 0; c < cfg.channels; ++c)
        CHECK(tape.value(z).at(0, c) == doctest::Approx(tape.value(v).at(0, c)));
}

TEST_CASE("decode rejects an impossible original length") {
    ModelConfig cfg = small_config();
    ModelParams params = init_params(cfg, 47);
    Tape tape;
    BoundParams bp = bind_params(tape, params);
    NodeId h = tape.leaf(random_input(5, cfg.channels, 51));
    CHECK_THROWS_AS(decode(tape, cfg, bp, h, 21, ForwardOptions{}), std::invalid_argument);
}

TEST_CASE("uniform head: zero weights give 1/C probabilities") {
    ModelConfig cfg = small_config();
    ModelParams params = init_params(cfg, 53);
    params.head.w.fill(0.0);
    params.head.b.fill(0.0);
    Prediction pred = predict(cfg, params, random_input(10, cfg.input_dim, 55));
    for (double v : pred.probs.data()) CHECK(v == doctest::Approx(1.0 / 3.0));
    // argmax ties break to the lowest class index
    for (int lab : pred.labels) CHECK(lab == 0);
}

TEST_CASE("probability rows sum to one") {
    ModelConfig cfg = small_config();
    ModelParams params = init_params(cfg, 59);
    Prediction pred = predict(cfg, params, random_input(33, cfg.input_dim, 61));
    for (int t = 0; t < pred.probs.rows(); ++t) {
        double sum = 0.0;
        for (int c = 0; c < pred.probs.cols(); ++c) sum += pred.probs.at(t, c);
        CHECK(std::fabs(sum - 1.0) <= 1e-9);
    }
}

TEST_CASE("evaluation passes are bit-identical and dropout only acts in training") {
    ModelConfig cfg = small_config();
    cfg.dropout_rate = 0.5;
    ModelParams params = init_params(cfg, 67);
    const SeqTensor x = random_input(24, cfg.input_dim, 71);

    Prediction p1 = predict(cfg, params, x);
    Prediction p2 = predict(cfg, params, x);
    CHECK(p1.probs.data() == p2.probs.data());

    // training mode with dropout differs from evaluation mode
    Tape tape;
    BoundParams bp = bind_params(tape, params);
    Rng rng(5);
    ForwardOptions train_opts;
    train_opts.training = true;
    train_opts.dropout_rng = &rng;
    NodeId probs = forward_probs(tape, cfg, bp, x, train_opts);
    CHECK(tape.value(probs).data() != p1.probs.data());
}

TEST_CASE("fixed seed gives bit-identical parameters") {
    ModelConfig cfg = small_config();
    ModelParams a = init_params(cfg, 1234);
    ModelParams b = init_params(cfg, 1234);
    ModelParams c = init_params(cfg, 1235);
    auto fa = flatten(a);
    auto fb = flatten(b);
    auto fc = flatten(c);
    bool any_diff = false;
    for (size_t i = 0; i < fa.size(); ++i) {
        CHECK(fa[i]->data() == fb[i]->data());
        any_diff = any_diff || fa[i]->data() != fc[i]->data();
    }
    CHECK(any_diff);
}

TEST_CASE("attention-identity hook bounds the no-pooling network's reach") {
    ModelConfig cfg = small_config(Variant::symmetric);
    cfg.input_dim = 2;
    cfg.channels = 2;
    ModelParams params = init_params(cfg, 73);
    const int T = 40;
    const SeqTensor x = random_input(T, cfg.input_dim, 79);

    ForwardOptions opts;
    opts.attention_identity = true;
    auto run = [&](const SeqTensor& input) {
        Tape tape;
        BoundParams bp = bind_params(tape, params);
        return tape.value(forward_probs(tape, cfg, bp, input, opts));
    };
    const SeqTensor base = run(x);

    // encoder + decoder stacks each reach 2^L - 1 = 3 frames
    const int reach = 2 * ((1 << cfg.num_layers) - 1);
    SeqTensor far = x;
    far.at(reach + 1, 0) += 10.0;
    const SeqTensor moved = run(far);
    for (int c = 0; c < cfg.num_classes; ++c)
        CHECK(moved.at(0, c) == doctest::Approx(base.at(0, c)).epsilon(1e-12));

    // with real attention the same far perturbation propagates everywhere
    opts.attention_identity = false;
    const SeqTensor base_attn = run(x);
    SeqTensor far2 = x;
    far2.at(reach + 1, 0) += 10.0;
    const SeqTensor moved_attn = run(far2);
    double diff = 0.0;
    for (int c = 0; c < cfg.num_classes; ++c)
        diff += std::fabs(moved_attn.at(0, c) - base_attn.at(0, c));
    CHECK(diff > 0.0);
}

TEST_CASE("gradcheck through encode-attention-decode") {
    ModelConfig cfg = small_config();
    cfg.num_layers = 2;
    cfg.channels = 4;
    cfg.d_k = 3;
    cfg.num_classes = 3;
    ModelParams params = init_params(cfg, 83);
    const SeqTensor x = random_input(12, cfg.input_dim, 89);
    std::vector<int> labels = {0, 1, 2, 0, 1, 2, 0, 1, 2, 0, 1, 2};

    std::vector<SeqTensor> theta;
    for (const SeqTensor* t : flatten(params)) theta.push_back(*t);
    TapeFn f = [&](Tape& tape, const std::vector<NodeId>& ids) {
        BoundParams bp = bind_from_ids(cfg, ids);
        NodeId probs = forward_probs(tape, cfg, bp, x, ForwardOptions{});
        return tape.cross_entropy(probs, labels);
    };
    GradCheckReport rep =
        gradcheck(f, theta, param_names(params), 1e-5, 1e-4, 97, 200);
    INFO(rep.to_text());
    CHECK(rep.pass);
}

TEST_CASE("checkpoint round trip is bit-exact") {
    namespace fs = std::filesystem;
    ModelConfig cfg = small_config();
    ModelParams params = init_params(cfg, 101);
    ClassVocab vocab({"reach", "grasp", "release"});

    const fs::path path = fs::temp_directory_path() /
                          ("tcseg_ckpt_" + std::to_string(::getpid()) + ".bin");
    save_checkpoint(path, cfg, params, vocab);
    Checkpoint ck = load_checkpoint(path);

    CHECK(ck.config.num_layers == cfg.num_layers);
    CHECK(ck.config.channels == cfg.channels);
    CHECK(ck.config.variant == cfg.variant);
    CHECK(ck.vocab.names() == vocab.names());
    auto fa = flatten(params);
    auto fb = flatten(ck.params);
    REQUIRE(fa.size() == fb.size());
    for (size_t i = 0; i < fa.size(); ++i) CHECK(fa[i]->data() == fb[i]->data());

    // saving the loaded model reproduces the file byte for byte
    const fs::path path2 = path.string() + ".2";
    save_checkpoint(path2, ck.config, ck.params, ck.vocab);
    std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
    std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(b1 == b2);
    fs::remove(path);
    fs::remove(path2);

    CHECK_THROWS_AS(load_checkpoint(fs::temp_directory_path() / "missing_ckpt.bin"),
                    std::runtime_error);
}
