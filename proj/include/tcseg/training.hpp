#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tcseg/data_io.hpp"
#include "tcseg/model.hpp"

namespace tcseg {

struct TrainConfig {
    int epochs = 30;
    double learning_rate = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.98;
    double eps_adam = 1e-9;
    std::uint64_t seed = 0;
    bool shuffle = true;
    double clip_norm = 0.0;  // opt-in global gradient-norm clip, 0 disables

    void validate() const;
};

/// Mean negative log-likelihood over frames, log clamped at log(1e-12).
/// Same definition as Tape::cross_entropy, usable outside a tape.
double cross_entropy_loss(const SeqTensor& probs, const std::vector<int>& labels);

struct AdamState {
    ModelParams m;
    ModelParams v;
    long step = 0;

    static AdamState for_params(const ModelParams& p);
};

/// One bias-corrected Adam update. Rejects non-finite gradients with a
/// diagnostic naming the offending parameter.
void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state,
               const TrainConfig& cfg);

struct TrainLogEntry {
    int epoch = 0;         // 1-based
    double mean_loss = 0.0;
    double frame_accuracy = 0.0;  // percent, over the epoch's training outputs
};

struct TrainLog {
    std::vector<TrainLogEntry> entries;
};

using EpochCallback = std::function<void(const TrainLogEntry&)>;

/// Full-sequence training: one video per optimization step, videos shuffled
/// each epoch with the run seed, dropout active. Updates `params` in place.
TrainLog train(const std::vector<Trial>& dataset, const ModelConfig& mcfg, ModelParams& params,
               const TrainConfig& tcfg, const EpochCallback& on_epoch = nullptr);

}  // namespace tcseg
