#include "tcseg/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "tcseg/metrics.hpp"
#include "tcseg/rng.hpp"

namespace tcseg {

void TrainConfig::validate() const {
    if (epochs < 1) throw std::invalid_argument("train config: epochs must be >= 1");
    if (beta1 <= 0.0 || beta1 >= 1.0 || beta2 <= 0.0 || beta2 >= 1.0)
        throw std::invalid_argument("train config: betas must be in (0,1)");
    if (eps_adam <= 0.0) throw std::invalid_argument("train config: eps_adam must be > 0");
    if (clip_norm < 0.0) throw std::invalid_argument("train config: clip_norm must be >= 0");
}

double cross_entropy_loss(const SeqTensor& probs, const std::vector<int>& labels) {
    Tape tape;
    return tape.value(tape.cross_entropy(tape.leaf(probs), labels)).at(0, 0);
}

AdamState AdamState::for_params(const ModelParams& p) {
    AdamState st;
    st.m = zeros_like(p);
    st.v = zeros_like(p);
    st.step = 0;
    return st;
}

void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state,
               const TrainConfig& cfg) {
    cfg.validate();
    auto pt = flatten(params);
    auto gt = flatten(grads);
    auto mt = flatten(state.m);
    auto vt = flatten(state.v);
    const std::vector<std::string> names = param_names(params);
    if (gt.size() != pt.size() || mt.size() != pt.size() || vt.size() != pt.size())
        throw std::invalid_argument("adam_step: parameter/gradient structure mismatch");

    double scale = 1.0;
    if (cfg.clip_norm > 0.0) {
        double norm2 = 0.0;
        for (const SeqTensor* g : gt)
            for (double vv : g->data()) norm2 += vv * vv;
        const double norm = std::sqrt(norm2);
        if (norm > cfg.clip_norm) scale = cfg.clip_norm / norm;
    }

    state.step += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));

    for (size_t i = 0; i < pt.size(); ++i) {
        if (!gt[i]->same_shape(*pt[i]))
            throw std::invalid_argument("adam_step: gradient shape mismatch for " + names[i]);
        std::vector<double>& p = pt[i]->data();
        const std::vector<double>& g = gt[i]->data();
        std::vector<double>& m = mt[i]->data();
        std::vector<double>& v = vt[i]->data();
        for (size_t j = 0; j < p.size(); ++j) {
            const double gj = g[j] * scale;
            if (!std::isfinite(gj))
                throw std::runtime_error("adam_step: non-finite gradient in " + names[i] + "[" +
                                         std::to_string(j) + "]");
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * gj;
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * gj * gj;
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            p[j] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.eps_adam);
        }
    }
}

TrainLog train(const std::vector<Trial>& dataset, const ModelConfig& mcfg, ModelParams& params,
               const TrainConfig& tcfg, const EpochCallback& on_epoch) {
    mcfg.validate();
    tcfg.validate();
    if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
    for (const Trial& t : dataset) {
        if (t.features.cols() != mcfg.input_dim)
            throw std::invalid_argument("train: trial " + t.id + " has feature dim " +
                                        std::to_string(t.features.cols()) + ", config expects " +
                                        std::to_string(mcfg.input_dim));
        if (static_cast<size_t>(t.features.rows()) != t.labels.size())
            throw std::invalid_argument("train: trial " + t.id + " frame/label count mismatch");
    }

    AdamState state = AdamState::for_params(params);
    Rng order_rng(mix_seed(tcfg.seed, 0x5eaf00dULL));
    Rng dropout_rng(mix_seed(tcfg.seed, 0xd20b0a7ULL));

    std::vector<int> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);

    TrainLog log;
    for (int epoch = 1; epoch <= tcfg.epochs; ++epoch) {
        if (tcfg.shuffle) {
            for (size_t i = dataset.size(); i > 1; --i) {
                const size_t j = static_cast<size_t>(
                    order_rng.uniform_int(0, static_cast<int>(i) - 1));
                std::swap(order[i - 1], order[j]);
            }
        }

        double loss_sum = 0.0;
        long frames = 0;
        long correct = 0;
        for (size_t step = 0; step < order.size(); ++step) {
            const Trial& trial = dataset[static_cast<size_t>(order[step])];
            Tape tape;
            BoundParams bp = bind_params(tape, params);
            ForwardOptions opts;
            opts.training = true;
            opts.dropout_rng = &dropout_rng;
            NodeId probs = forward_probs(tape, mcfg, bp, trial.features, opts);
            NodeId loss = tape.cross_entropy(probs, trial.labels);

            const double loss_value = tape.value(loss).at(0, 0);
            if (!std::isfinite(loss_value))
                throw std::runtime_error("train: non-finite loss at epoch " +
                                         std::to_string(epoch) + ", video " + trial.id);
            loss_sum += loss_value;

            const std::vector<int> pred = argmax_labels(tape.value(probs));
            for (size_t i = 0; i < pred.size(); ++i) correct += pred[i] == trial.labels[i];
            frames += static_cast<long>(pred.size());

            tape.backward(loss);
            ModelParams grads = collect_grads(tape, bp);
            adam_step(params, grads, state, tcfg);
        }

        TrainLogEntry entry;
        entry.epoch = epoch;
        entry.mean_loss = loss_sum / static_cast<double>(order.size());
        entry.frame_accuracy = 100.0 * static_cast<double>(correct) / static_cast<double>(frames);
        log.entries.push_back(entry);
        if (on_epoch) on_epoch(entry);
    }
    return log;
}

}  // namespace tcseg
