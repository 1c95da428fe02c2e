#pragma once

#include <filesystem>

#include "tcseg/data_io.hpp"
#include "tcseg/model.hpp"

namespace tcseg {

struct Checkpoint {
    ModelConfig config;
    ModelParams params;
    ClassVocab vocab;
};

/// Versioned little-endian binary container: magic "TCSGCKP1", the model
/// configuration, the class vocabulary, then every named parameter tensor in
/// visit order as (name, rows, cols, float64 data). Save/load round-trips
/// are bit-exact.
void save_checkpoint(const std::filesystem::path& path, const ModelConfig& cfg,
                     const ModelParams& params, const ClassVocab& vocab);

Checkpoint load_checkpoint(const std::filesystem::path& path);

/// The sidecar ordered class list, one name per line.
void save_vocab(const std::filesystem::path& path, const ClassVocab& vocab);
ClassVocab load_vocab(const std::filesystem::path& path);

}  // namespace tcseg
