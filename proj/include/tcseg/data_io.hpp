#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tcseg/tensor.hpp"

namespace tcseg {

/// Ordered gesture-name list; ids are positions. The order is what gets
/// persisted, so predictions stay label-stable across save/load.
class ClassVocab {
public:
    ClassVocab() = default;
    explicit ClassVocab(std::vector<std::string> names);

    /// Id of `name`, or -1 when absent.
    int id_of(const std::string& name) const;
    /// Id of `name`, appending it when absent.
    int add(const std::string& name);

    const std::string& name_of(int id) const;
    int size() const { return static_cast<int>(names_.size()); }
    const std::vector<std::string>& names() const { return names_; }

private:
    std::vector<std::string> names_;
};

/// One labeled sequence: per-frame feature vectors plus gesture labels.
struct Trial {
    std::string id;
    std::string user;
    SeqTensor features;       // T x D
    std::vector<int> labels;  // length T
};

struct LoadOptions {
    /// When the feature and label files disagree on frame count, truncate
    /// both to the shorter instead of failing.
    bool truncate_mismatch = false;
};

/// Parses a `.feat` text matrix (one frame per line, D space- or
/// comma-separated decimals) and a `.lbl` file (one label token per line).
/// NaN/Inf tokens, malformed rows and unknown labels are rejected.
/// `allow_new_labels` switches the vocab into building mode.
Trial load_trial(const std::string& trial_id, const std::string& user,
                 const std::filesystem::path& feat_path, const std::filesystem::path& lbl_path,
                 ClassVocab& vocab, bool allow_new_labels, const LoadOptions& opts,
                 std::vector<std::string>* warnings = nullptr);

/// Feature matrix alone, same `.feat` format and validation as load_trial.
SeqTensor load_features(const std::filesystem::path& feat_path);

void save_trial(const Trial& trial, const ClassVocab& vocab,
                const std::filesystem::path& feat_path, const std::filesystem::path& lbl_path);

struct ManifestEntry {
    std::string id;
    std::string user;
    std::filesystem::path feat_path;  // resolved relative to the manifest
    std::filesystem::path lbl_path;
};

/// Text table, one trial per line: `<id> <user> <feat path> <lbl path>`.
/// Blank lines and lines starting with '#' are skipped.
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries);

struct Dataset {
    std::vector<Trial> trials;
    ClassVocab vocab;
    std::vector<std::string> warnings;
};

/// Loads every manifest trial. With no fixed vocab the class vocabulary is
/// built from the sorted set of label names across all files, so it does not
/// depend on manifest row order.
Dataset load_dataset(const std::filesystem::path& manifest, const LoadOptions& opts,
                     const ClassVocab* fixed_vocab = nullptr);

struct Fold {
    std::string held_out_user;
    std::vector<int> train_ids;  // indices into the trial list
    std::vector<int> test_ids;
};

struct FoldPlan {
    std::vector<Fold> folds;
};

/// Leave-one-user-out folds, one per distinct user, ordered by user id.
/// Requires at least two users.
FoldPlan build_louo(const std::vector<Trial>& trials);

struct SynthConfig {
    int num_users = 2;
    int trials_per_user = 4;
    int num_classes = 4;
    int feature_dim = 16;
    int frames = 300;
    int mean_segment_len = 30;
    double noise_level = 1.0;
    std::uint64_t seed = 1;
};

/// Deterministic synthetic gesture streams: segment labels follow a Markov
/// chain with geometric segment lengths; features are per-class prototype
/// vectors plus seeded noise plus a slow sinusoidal drift (both scaled by
/// noise_level), so single frames are ambiguous but temporal context is not.
std::vector<Trial> synth_dataset(const SynthConfig& cfg);

/// "g0".."g{n-1}", the vocabulary matching synth_dataset labels.
ClassVocab synth_vocab(int num_classes);

}  // namespace tcseg
