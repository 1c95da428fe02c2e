#include "tcseg/data_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "tcseg/rng.hpp"

namespace tcseg {

namespace fs = std::filesystem;

ClassVocab::ClassVocab(std::vector<std::string> names) : names_(std::move(names)) {
    std::set<std::string> seen;
    for (const std::string& n : names_) {
        if (!seen.insert(n).second)
            throw std::invalid_argument("vocab: duplicate class name '" + n + "'");
    }
}

int ClassVocab::id_of(const std::string& name) const {
    auto it = std::find(names_.begin(), names_.end(), name);
    return it == names_.end() ? -1 : static_cast<int>(it - names_.begin());
}

int ClassVocab::add(const std::string& name) {
    int id = id_of(name);
    if (id >= 0) return id;
    names_.push_back(name);
    return static_cast<int>(names_.size()) - 1;
}

const std::string& ClassVocab::name_of(int id) const {
    if (id < 0 || id >= size()) throw std::out_of_range("vocab: id out of range");
    return names_[static_cast<size_t>(id)];
}

namespace {

[[noreturn]] void parse_error(const fs::path& file, int line, const std::string& what) {
    throw std::runtime_error(file.string() + ":" + std::to_string(line) + ": " + what);
}

// Strict decimal parse; rejects trailing junk and non-finite values.
double parse_number(const std::string& tok, const fs::path& file, int line) {
    size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(tok, &used);
    } catch (const std::exception&) {
        parse_error(file, line, "non-numeric feature token '" + tok + "'");
    }
    if (used != tok.size()) parse_error(file, line, "malformed feature token '" + tok + "'");
    if (!std::isfinite(v)) parse_error(file, line, "non-finite feature token '" + tok + "'");
    return v;
}

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ' ' || ch == '\t' || ch == ',' || ch == '\r') {
            if (!cur.empty()) out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::vector<std::vector<double>> read_feature_rows(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open feature file " + path.string());
    std::vector<std::vector<double>> rows;
    std::string line;
    int lineno = 0;
    size_t dim = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::vector<std::string> toks = split_fields(line);
        if (toks.empty()) continue;
        std::vector<double> row;
        row.reserve(toks.size());
        for (const std::string& t : toks) row.push_back(parse_number(t, path, lineno));
        if (dim == 0) {
            dim = row.size();
        } else if (row.size() != dim) {
            parse_error(path, lineno,
                        "row has " + std::to_string(row.size()) + " values, expected " +
                            std::to_string(dim));
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw std::runtime_error("feature file " + path.string() + " is empty");
    return rows;
}

std::vector<std::string> read_label_tokens(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open label file " + path.string());
    std::vector<std::string> labels;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string tok = trim(line);
        if (tok.empty()) continue;
        if (tok.find_first_of(" \t") != std::string::npos)
            parse_error(path, lineno, "label line has multiple tokens");
        labels.push_back(std::move(tok));
    }
    if (labels.empty()) throw std::runtime_error("label file " + path.string() + " is empty");
    return labels;
}

}  // namespace

SeqTensor load_features(const fs::path& feat_path) {
    std::vector<std::vector<double>> rows = read_feature_rows(feat_path);
    SeqTensor t(static_cast<int>(rows.size()), static_cast<int>(rows[0].size()));
    for (size_t i = 0; i < rows.size(); ++i)
        for (size_t j = 0; j < rows[i].size(); ++j)
            t.at(static_cast<int>(i), static_cast<int>(j)) = rows[i][j];
    return t;
}

Trial load_trial(const std::string& trial_id, const std::string& user, const fs::path& feat_path,
                 const fs::path& lbl_path, ClassVocab& vocab, bool allow_new_labels,
                 const LoadOptions& opts, std::vector<std::string>* warnings) {
    std::vector<std::vector<double>> rows = read_feature_rows(feat_path);
    std::vector<std::string> label_names = read_label_tokens(lbl_path);

    size_t frames = rows.size();
    if (rows.size() != label_names.size()) {
        if (!opts.truncate_mismatch) {
            throw std::runtime_error("trial " + trial_id + ": " + std::to_string(rows.size()) +
                                     " feature frames but " + std::to_string(label_names.size()) +
                                     " labels (" + feat_path.string() + ", " + lbl_path.string() +
                                     ")");
        }
        frames = std::min(rows.size(), label_names.size());
        if (warnings) {
            warnings->push_back("trial " + trial_id + ": truncated to " + std::to_string(frames) +
                                " frames (features " + std::to_string(rows.size()) + ", labels " +
                                std::to_string(label_names.size()) + ")");
        }
    }

    Trial t;
    t.id = trial_id;
    t.user = user;
    t.features = SeqTensor(static_cast<int>(frames), static_cast<int>(rows[0].size()));
    for (size_t i = 0; i < frames; ++i)
        for (size_t j = 0; j < rows[i].size(); ++j)
            t.features.at(static_cast<int>(i), static_cast<int>(j)) = rows[i][j];

    t.labels.reserve(frames);
    for (size_t i = 0; i < frames; ++i) {
        int id = allow_new_labels ? vocab.add(label_names[i]) : vocab.id_of(label_names[i]);
        if (id < 0)
            throw std::runtime_error("trial " + trial_id + ": unknown label '" + label_names[i] +
                                     "' (" + lbl_path.string() + ")");
        t.labels.push_back(id);
    }
    return t;
}

void save_trial(const Trial& trial, const ClassVocab& vocab, const fs::path& feat_path,
                const fs::path& lbl_path) {
    std::ofstream feat(feat_path);
    if (!feat) throw std::runtime_error("cannot write " + feat_path.string());
    feat.precision(17);
    for (int t = 0; t < trial.features.rows(); ++t) {
        for (int c = 0; c < trial.features.cols(); ++c) {
            if (c) feat << ' ';
            feat << trial.features.at(t, c);
        }
        feat << '\n';
    }
    std::ofstream lbl(lbl_path);
    if (!lbl) throw std::runtime_error("cannot write " + lbl_path.string());
    for (int id : trial.labels) lbl << vocab.name_of(id) << '\n';
}

std::vector<ManifestEntry> read_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open manifest " + path.string());
    const fs::path base = path.parent_path();
    std::vector<ManifestEntry> entries;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        std::vector<std::string> f = split_fields(stripped);
        if (f.size() != 4)
            parse_error(path, lineno,
                        "expected 4 fields (id user feat lbl), got " + std::to_string(f.size()));
        ManifestEntry e;
        e.id = f[0];
        e.user = f[1];
        e.feat_path = fs::path(f[2]).is_absolute() ? fs::path(f[2]) : base / f[2];
        e.lbl_path = fs::path(f[3]).is_absolute() ? fs::path(f[3]) : base / f[3];
        entries.push_back(std::move(e));
    }
    if (entries.empty()) throw std::runtime_error("manifest " + path.string() + " lists no trials");
    return entries;
}

void write_manifest(const fs::path& path, const std::vector<ManifestEntry>& entries) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "# trial_id user feat_path lbl_path\n";
    for (const ManifestEntry& e : entries)
        out << e.id << ' ' << e.user << ' ' << e.feat_path.filename().string() << ' '
            << e.lbl_path.filename().string() << '\n';
}

Dataset load_dataset(const fs::path& manifest, const LoadOptions& opts,
                     const ClassVocab* fixed_vocab) {
    std::vector<ManifestEntry> entries = read_manifest(manifest);

    Dataset ds;
    bool building = fixed_vocab == nullptr;
    if (building) {
        // Sorted union of label names so ids do not depend on row order.
        std::set<std::string> names;
        for (const ManifestEntry& e : entries)
            for (const std::string& n : read_label_tokens(e.lbl_path)) names.insert(n);
        ds.vocab = ClassVocab(std::vector<std::string>(names.begin(), names.end()));
    } else {
        ds.vocab = *fixed_vocab;
    }

    std::set<std::string> ids;
    for (const ManifestEntry& e : entries) {
        if (!ids.insert(e.id).second)
            throw std::runtime_error("manifest: duplicate trial id '" + e.id + "'");
        ds.trials.push_back(
            load_trial(e.id, e.user, e.feat_path, e.lbl_path, ds.vocab, false, opts, &ds.warnings));
    }

    const int dim = ds.trials.front().features.cols();
    for (const Trial& t : ds.trials) {
        if (t.features.cols() != dim)
            throw std::runtime_error("trial " + t.id + ": feature dim " +
                                     std::to_string(t.features.cols()) + " differs from " +
                                     std::to_string(dim));
    }
    return ds;
}

FoldPlan build_louo(const std::vector<Trial>& trials) {
    std::map<std::string, std::vector<int>> by_user;  // ordered -> deterministic folds
    for (size_t i = 0; i < trials.size(); ++i)
        by_user[trials[i].user].push_back(static_cast<int>(i));
    if (by_user.size() < 2)
        throw std::invalid_argument("build_louo: need at least 2 distinct users, got " +
                                    std::to_string(by_user.size()));
    FoldPlan plan;
    for (const auto& [user, test_ids] : by_user) {
        Fold fold;
        fold.held_out_user = user;
        fold.test_ids = test_ids;
        for (size_t i = 0; i < trials.size(); ++i)
            if (trials[i].user != user) fold.train_ids.push_back(static_cast<int>(i));
        plan.folds.push_back(std::move(fold));
    }
    return plan;
}

ClassVocab synth_vocab(int num_classes) {
    std::vector<std::string> names;
    names.reserve(static_cast<size_t>(num_classes));
    for (int c = 0; c < num_classes; ++c) names.push_back("g" + std::to_string(c));
    return ClassVocab(std::move(names));
}

std::vector<Trial> synth_dataset(const SynthConfig& cfg) {
    if (cfg.num_users < 1 || cfg.trials_per_user < 1 || cfg.num_classes < 1 ||
        cfg.feature_dim < 1 || cfg.frames < 1 || cfg.mean_segment_len < 1)
        throw std::invalid_argument("synth_dataset: all counts must be positive");
    if (cfg.noise_level < 0.0)
        throw std::invalid_argument("synth_dataset: noise_level must be >= 0");

    // Class prototypes are shared across the dataset: unit-norm directions.
    Rng proto_rng(mix_seed(cfg.seed, 0x70726f746fULL));
    std::vector<std::vector<double>> protos(static_cast<size_t>(cfg.num_classes));
    for (auto& p : protos) {
        p.resize(static_cast<size_t>(cfg.feature_dim));
        double norm2 = 0.0;
        for (double& v : p) {
            v = proto_rng.gaussian();
            norm2 += v * v;
        }
        const double inv = 1.0 / std::sqrt(std::max(norm2, 1e-12));
        for (double& v : p) v *= inv;
    }

    std::vector<Trial> trials;
    const double p_end = 1.0 / static_cast<double>(cfg.mean_segment_len);
    for (int u = 0; u < cfg.num_users; ++u) {
        for (int k = 0; k < cfg.trials_per_user; ++k) {
            Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(u) * 1000 + k + 1));
            Trial t;
            t.user = "user" + std::to_string(u);
            t.id = t.user + "_trial" + std::to_string(k);

            // Markov segment chain, geometric lengths with the configured mean.
            t.labels.reserve(static_cast<size_t>(cfg.frames));
            int label = rng.uniform_int(0, cfg.num_classes - 1);
            while (static_cast<int>(t.labels.size()) < cfg.frames) {
                int len = 1;
                while (rng.uniform() > p_end) ++len;
                for (int i = 0; i < len && static_cast<int>(t.labels.size()) < cfg.frames; ++i)
                    t.labels.push_back(label);
                if (cfg.num_classes > 1) {
                    const int step = rng.uniform_int(1, cfg.num_classes - 1);
                    label = (label + step) % cfg.num_classes;
                }
            }

            // Slow drift: one random direction per trial, sinusoidal in time.
            std::vector<double> drift_dir(static_cast<size_t>(cfg.feature_dim));
            for (double& v : drift_dir) v = rng.gaussian();
            double norm2 = 0.0;
            for (double v : drift_dir) norm2 += v * v;
            const double inv = 1.0 / std::sqrt(std::max(norm2, 1e-12));
            for (double& v : drift_dir) v *= inv;
            const double period = 4.0 * static_cast<double>(cfg.mean_segment_len);
            const double phase = rng.uniform(0.0, 6.283185307179586);
            const double drift_amp = 0.5 * cfg.noise_level;

            t.features = SeqTensor(cfg.frames, cfg.feature_dim);
            for (int f = 0; f < cfg.frames; ++f) {
                const auto& proto = protos[static_cast<size_t>(t.labels[static_cast<size_t>(f)])];
                const double drift =
                    drift_amp * std::sin(6.283185307179586 * f / period + phase);
                for (int d = 0; d < cfg.feature_dim; ++d) {
                    t.features.at(f, d) = proto[static_cast<size_t>(d)] +
                                          cfg.noise_level * rng.gaussian() +
                                          drift * drift_dir[static_cast<size_t>(d)];
                }
            }
            trials.push_back(std::move(t));
        }
    }
    return trials;
}

}  // namespace tcseg
