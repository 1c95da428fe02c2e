// tcseg: train, evaluate and ablate the temporal segmentation network on
// feature/label sequence files. Run `tcseg --help` for the command list.

#include <CLI11.hpp>

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "tcseg/checkpoint.hpp"
#include "tcseg/data_io.hpp"
#include "tcseg/metrics.hpp"
#include "tcseg/model.hpp"
#include "tcseg/training.hpp"

namespace fs = std::filesystem;
using namespace tcseg;

namespace {

struct RunConfig {
    // model
    int layers = 10;
    int channels = 128;
    int dk = 16;
    double dropout = 0.5;
    std::string variant = "symmetric_pooled";
    bool no_pooling = false;
    // training
    int epochs = 30;
    double lr = 0.01;
    std::uint64_t seed = 1;
    double clip_norm = 0.0;
    // io
    std::string manifest;
    std::string out;
    std::string checkpoint;
    std::string features;
    bool truncate_mismatch = false;
    bool truth_debug = false;
    int jobs = 0;  // 0 = min(folds, cores)
    int repeats = 1;
    std::string sweep_layers = "2,6,10,14";
    // synthetic generator
    int users = 2;
    int trials_per_user = 4;
    int classes = 4;
    int dim = 16;
    int frames = 300;
    int mean_seg_len = 30;
    double noise = 1.0;
};

ModelConfig model_config_from(const RunConfig& rc, int num_classes, int input_dim) {
    ModelConfig mc;
    mc.num_layers = rc.layers;
    mc.channels = rc.channels;
    mc.d_k = rc.dk;
    mc.num_classes = num_classes;
    mc.input_dim = input_dim;
    mc.dropout_rate = rc.dropout;
    mc.pooling_enabled = !rc.no_pooling;
    mc.variant = variant_from_string(rc.variant);
    mc.validate();
    return mc;
}

TrainConfig train_config_from(const RunConfig& rc, std::uint64_t seed) {
    TrainConfig tc;
    tc.epochs = rc.epochs;
    tc.learning_rate = rc.lr;
    tc.seed = seed;
    tc.clip_norm = rc.clip_norm;
    tc.validate();
    return tc;
}

fs::path ensure_out_dir(const RunConfig& rc) {
    if (rc.out.empty()) throw std::runtime_error("--out <dir> is required for this command");
    fs::path dir(rc.out);
    fs::create_directories(dir);
    return dir;
}

// Resolved key=value echo; feeding this file back through --config reproduces
// the run.
void echo_config(const fs::path& dir, const std::string& command, const RunConfig& rc) {
    std::ofstream os(dir / "config.txt");
    os << "# resolved configuration, command: " << command << "\n";
    os << "seed=" << rc.seed << "\n";
    os << "epochs=" << rc.epochs << "\n";
    os << "lr=" << rc.lr << "\n";
    os << "layers=" << rc.layers << "\n";
    os << "channels=" << rc.channels << "\n";
    os << "dk=" << rc.dk << "\n";
    os << "dropout=" << rc.dropout << "\n";
    os << "variant=" << rc.variant << "\n";
    os << "no-pooling=" << (rc.no_pooling ? "true" : "false") << "\n";
    os << "clip-norm=" << rc.clip_norm << "\n";
    os << "jobs=" << rc.jobs << "\n";
    os << "truncate-mismatch=" << (rc.truncate_mismatch ? "true" : "false") << "\n";
    os << "sweep-layers=" << rc.sweep_layers << "\n";
    os << "repeats=" << rc.repeats << "\n";
    if (!rc.manifest.empty()) os << "manifest=" << fs::absolute(rc.manifest).string() << "\n";
    if (!rc.checkpoint.empty())
        os << "checkpoint=" << fs::absolute(rc.checkpoint).string() << "\n";
    if (!rc.features.empty()) os << "features=" << fs::absolute(rc.features).string() << "\n";
    os << "users=" << rc.users << "\n";
    os << "trials-per-user=" << rc.trials_per_user << "\n";
    os << "classes=" << rc.classes << "\n";
    os << "dim=" << rc.dim << "\n";
    os << "frames=" << rc.frames << "\n";
    os << "mean-seg-len=" << rc.mean_seg_len << "\n";
    os << "noise=" << rc.noise << "\n";
}

void write_train_log(const fs::path& path, const TrainLog& log) {
    std::ofstream os(path);
    os.precision(10);
    for (const TrainLogEntry& e : log.entries)
        os << "epoch=" << e.epoch << " loss=" << e.mean_loss << " acc=" << e.frame_accuracy
           << "\n";
}

std::string metrics_row(const std::string& name, const MetricsReport& r) {
    char buf[200];
    std::snprintf(buf, sizeof(buf), "%-24s %8.2f %8.2f %8.2f %8.2f %8.2f", name.c_str(),
                  r.frame_acc, r.edit, r.f1_10, r.f1_25, r.f1_50);
    return buf;
}

std::string metrics_header() {
    char buf[200];
    std::snprintf(buf, sizeof(buf), "%-24s %8s %8s %8s %8s %8s", "", "acc", "edit", "f1@10",
                  "f1@25", "f1@50");
    return buf;
}

std::vector<int> parse_int_list(const std::string& csv) {
    std::vector<int> out;
    std::stringstream ss(csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (tok.empty()) continue;
        out.push_back(std::stoi(tok));
    }
    if (out.empty()) throw std::runtime_error("empty layer list '" + csv + "'");
    return out;
}

Dataset load_cli_dataset(const RunConfig& rc, const ClassVocab* fixed_vocab = nullptr) {
    if (rc.manifest.empty()) throw std::runtime_error("--manifest <file> is required");
    LoadOptions opts;
    opts.truncate_mismatch = rc.truncate_mismatch;
    Dataset ds = load_dataset(rc.manifest, opts, fixed_vocab);
    for (const std::string& w : ds.warnings) std::cerr << "warning: " << w << "\n";
    return ds;
}

// ---------------------------------------------------------------------------
// commands

int cmd_train(const RunConfig& rc) {
    const fs::path out = ensure_out_dir(rc);
    echo_config(out, "train", rc);

    Dataset ds = load_cli_dataset(rc);
    ModelConfig mc = model_config_from(rc, ds.vocab.size(), ds.trials[0].features.cols());
    TrainConfig tc = train_config_from(rc, rc.seed);

    std::cout << "training on " << ds.trials.size() << " trials, " << ds.vocab.size()
              << " classes, dim " << mc.input_dim << ", variant " << rc.variant << "\n";
    ModelParams params = init_params(mc, rc.seed);
    TrainLog log = train(ds.trials, mc, params, tc, [](const TrainLogEntry& e) {
        std::printf("epoch=%d loss=%.6f acc=%.2f\n", e.epoch, e.mean_loss, e.frame_accuracy);
    });

    write_train_log(out / "train.log", log);
    save_checkpoint(out / "checkpoint.bin", mc, params, ds.vocab);
    save_vocab(out / "vocab.txt", ds.vocab);
    std::cout << "wrote " << (out / "checkpoint.bin").string() << "\n";
    return 0;
}

struct TrialScore {
    std::string id;
    MetricsReport report;
    long frames = 0;
};

MetricsReport evaluate_trials(const ModelConfig& mc, const ModelParams& params,
                              const std::vector<Trial>& trials, const std::vector<int>& ids,
                              bool truth_debug, std::vector<TrialScore>* per_trial) {
    std::vector<MetricsReport> reports;
    std::vector<long> frames;
    for (int idx : ids) {
        const Trial& t = trials[static_cast<size_t>(idx)];
        std::vector<int> pred_labels;
        if (truth_debug) {
            pred_labels = t.labels;
        } else {
            pred_labels = predict(mc, params, t.features).labels;
        }
        MetricsReport r = evaluate(pred_labels, t.labels);
        reports.push_back(r);
        frames.push_back(static_cast<long>(t.labels.size()));
        if (per_trial) per_trial->push_back({t.id, r, frames.back()});
    }
    return aggregate(reports, frames);
}

int cmd_eval(const RunConfig& rc) {
    if (rc.checkpoint.empty()) throw std::runtime_error("--checkpoint <file> is required");
    Checkpoint ck = load_checkpoint(rc.checkpoint);
    Dataset ds = load_cli_dataset(rc, &ck.vocab);
    if (ds.trials[0].features.cols() != ck.config.input_dim)
        throw std::runtime_error("dataset feature dim " +
                                 std::to_string(ds.trials[0].features.cols()) +
                                 " does not match checkpoint input dim " +
                                 std::to_string(ck.config.input_dim));

    std::vector<int> ids(ds.trials.size());
    for (size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int>(i);
    std::vector<TrialScore> per_trial;
    MetricsReport agg =
        evaluate_trials(ck.config, ck.params, ds.trials, ids, rc.truth_debug, &per_trial);

    std::cout << metrics_header() << "\n";
    for (const TrialScore& s : per_trial) std::cout << metrics_row(s.id, s.report) << "\n";
    std::cout << metrics_row("aggregate", agg) << "\n";

    if (!rc.out.empty()) {
        const fs::path out = ensure_out_dir(rc);
        echo_config(out, "eval", rc);
        std::ofstream os(out / "eval_report.txt");
        for (const TrialScore& s : per_trial)
            os << "[trial " << s.id << "]\n" << format_report(s.report);
        os << "[aggregate]\n" << format_report(agg);
        std::cout << "wrote " << (out / "eval_report.txt").string() << "\n";
    }
    return 0;
}

struct FoldResult {
    std::string user;
    MetricsReport report;                 // per-fold aggregate over its test trials
    long frames = 0;                      // test frames in the fold
    std::vector<TrialScore> trial_scores;
    ModelParams params;
    TrainLog log;
};

int cmd_louo(const RunConfig& rc) {
    const fs::path out = ensure_out_dir(rc);
    echo_config(out, "louo", rc);

    Dataset ds = load_cli_dataset(rc);
    ModelConfig mc = model_config_from(rc, ds.vocab.size(), ds.trials[0].features.cols());
    FoldPlan plan = build_louo(ds.trials);
    const int n_folds = static_cast<int>(plan.folds.size());

    int jobs = rc.jobs > 0 ? rc.jobs
                           : std::min<int>(n_folds,
                                           std::max(1u, std::thread::hardware_concurrency()));
    jobs = std::min(jobs, n_folds);
    std::cout << n_folds << " folds, " << jobs << " parallel jobs\n";

    std::vector<FoldResult> results(static_cast<size_t>(n_folds));
    std::atomic<int> next{0};
    std::atomic<bool> failed{false};
    std::string failure;
    std::mutex failure_mu;

    auto worker = [&]() {
        for (int i = next.fetch_add(1); i < n_folds; i = next.fetch_add(1)) {
            if (failed.load()) return;
            try {
                const Fold& fold = plan.folds[static_cast<size_t>(i)];
                std::vector<Trial> train_set;
                for (int id : fold.train_ids)
                    train_set.push_back(ds.trials[static_cast<size_t>(id)]);

                // per-fold seed derived from the run seed and fold index
                TrainConfig tc = train_config_from(rc, mix_seed(rc.seed, 100 + i));
                FoldResult& res = results[static_cast<size_t>(i)];
                res.user = fold.held_out_user;
                res.params = init_params(mc, mix_seed(rc.seed, 200 + i));
                res.log = train(train_set, mc, res.params, tc);
                res.report = evaluate_trials(mc, res.params, ds.trials, fold.test_ids, false,
                                             &res.trial_scores);
                for (const TrialScore& s : res.trial_scores) res.frames += s.frames;
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lock(failure_mu);
                failed.store(true);
                failure = e.what();
            }
        }
    };
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (std::thread& th : pool) th.join();
    if (failed.load()) throw std::runtime_error("fold failed: " + failure);

    // coverage check: test sets must partition the trial set
    std::vector<int> covered(ds.trials.size(), 0);
    for (const Fold& fold : plan.folds)
        for (int id : fold.test_ids) covered[static_cast<size_t>(id)] += 1;
    const bool partition_ok =
        std::all_of(covered.begin(), covered.end(), [](int c) { return c == 1; });

    // fold artifacts and reports, written in fold order for stable bytes
    std::vector<MetricsReport> fold_reports;
    std::vector<long> fold_frames;
    std::vector<MetricsReport> seq_reports;
    std::vector<long> seq_frames;
    std::ofstream os(out / "louo_report.txt");
    std::cout << metrics_header() << "\n";
    for (int i = 0; i < n_folds; ++i) {
        const FoldResult& res = results[static_cast<size_t>(i)];
        const fs::path fold_dir = out / ("fold_" + res.user);
        fs::create_directories(fold_dir);
        save_checkpoint(fold_dir / "checkpoint.bin", mc, res.params, ds.vocab);
        save_vocab(fold_dir / "vocab.txt", ds.vocab);
        write_train_log(fold_dir / "train.log", res.log);

        os << "[fold " << res.user << "]\n" << format_report(res.report);
        for (const TrialScore& s : res.trial_scores) {
            os << "[trial " << s.id << "]\n" << format_report(s.report);
            seq_reports.push_back(s.report);
            seq_frames.push_back(s.frames);
        }
        fold_reports.push_back(res.report);
        fold_frames.push_back(res.frames);
        std::cout << metrics_row("fold " + res.user, res.report) << "\n";
    }
    const MetricsReport agg_folds = aggregate(fold_reports, fold_frames);
    const MetricsReport agg_seqs = aggregate(seq_reports, seq_frames);
    os << "[aggregate_folds]\n" << format_report(agg_folds);
    os << "[aggregate_sequences]\n" << format_report(agg_seqs);
    os << "partition=" << (partition_ok ? "ok" : "BROKEN") << " trials=" << ds.trials.size()
       << "\n";
    std::cout << metrics_row("aggregate(folds)", agg_folds) << "\n";
    std::cout << metrics_row("aggregate(sequences)", agg_seqs) << "\n";
    std::cout << "partition " << (partition_ok ? "ok" : "BROKEN") << "\n";
    if (!partition_ok) throw std::runtime_error("LOUO folds do not partition the trials");
    return 0;
}

int cmd_ablate(const RunConfig& rc) {
    const fs::path out = ensure_out_dir(rc);
    echo_config(out, "ablate", rc);

    Dataset ds = load_cli_dataset(rc);
    // held-out split: the first LOUO fold when there are >= 2 users,
    // otherwise train and evaluate on everything (degenerate but usable)
    std::vector<int> train_ids, test_ids;
    std::string held;
    {
        std::vector<int> all(ds.trials.size());
        for (size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
        std::set<std::string> users;
        for (const Trial& t : ds.trials) users.insert(t.user);
        if (users.size() >= 2) {
            FoldPlan plan = build_louo(ds.trials);
            train_ids = plan.folds[0].train_ids;
            test_ids = plan.folds[0].test_ids;
            held = plan.folds[0].held_out_user;
        } else {
            train_ids = all;
            test_ids = all;
            held = "(none)";
        }
    }
    std::cout << "ablation: train " << train_ids.size() << " trials, test " << test_ids.size()
              << " trials (held-out user " << held << ")\n";

    std::vector<Trial> train_set;
    for (int id : train_ids) train_set.push_back(ds.trials[static_cast<size_t>(id)]);

    // each row is the mean over --repeats independent seeded runs; desk-scale
    // test splits are small enough that single runs are too noisy to rank
    auto run_row = [&](const std::string& name, const ModelConfig& mc, std::uint64_t stage) {
        MetricsReport mean;
        for (int rep = 0; rep < rc.repeats; ++rep) {
            const std::uint64_t rep_stream = stage * 1000 + static_cast<std::uint64_t>(rep);
            TrainConfig tc = train_config_from(rc, mix_seed(rc.seed, rep_stream));
            ModelParams params = init_params(mc, mix_seed(rc.seed, rep_stream + 5000));
            train(train_set, mc, params, tc);
            MetricsReport one = evaluate_trials(mc, params, ds.trials, test_ids, false, nullptr);
            mean.frame_acc += one.frame_acc / rc.repeats;
            mean.edit += one.edit / rc.repeats;
            mean.f1_10 += one.f1_10 / rc.repeats;
            mean.f1_25 += one.f1_25 / rc.repeats;
            mean.f1_50 += one.f1_50 / rc.repeats;
        }
        std::cout << metrics_row(name, mean) << "\n";
        return mean;
    };

    std::ofstream os(out / "ablation.txt");
    os << metrics_header() << "\n";
    std::cout << metrics_header() << "\n";

    std::uint64_t stage = 1;
    for (Variant v : all_variants()) {
        RunConfig vrc = rc;
        vrc.variant = to_string(v);
        ModelConfig mc = model_config_from(vrc, ds.vocab.size(), ds.trials[0].features.cols());
        MetricsReport rep = run_row(to_string(v), mc, stage++);
        os << metrics_row(to_string(v), rep) << "\n";
    }
    for (int L : parse_int_list(rc.sweep_layers)) {
        RunConfig lrc = rc;
        lrc.layers = L;
        lrc.variant = "symmetric_pooled";
        ModelConfig mc = model_config_from(lrc, ds.vocab.size(), ds.trials[0].features.cols());
        const std::string name = std::to_string(L) + "_layers";
        MetricsReport rep = run_row(name, mc, stage++);
        os << metrics_row(name, rep) << "\n";
    }
    std::cout << "wrote " << (out / "ablation.txt").string() << "\n";
    return 0;
}

int cmd_gradcheck(const RunConfig& rc) {
    std::vector<NamedGradCheck> suite = gradient_check_suite(rc.seed);
    bool all_pass = true;
    for (const NamedGradCheck& g : suite) {
        std::cout << "== " << g.component << " ==\n" << g.report.to_text();
        all_pass = all_pass && g.report.pass;
    }
    std::cout << (all_pass ? "gradcheck PASS" : "gradcheck FAIL") << "\n";
    return all_pass ? 0 : 1;
}

int cmd_synth(const RunConfig& rc) {
    const fs::path out = ensure_out_dir(rc);
    echo_config(out, "synth", rc);

    SynthConfig sc;
    sc.num_users = rc.users;
    sc.trials_per_user = rc.trials_per_user;
    sc.num_classes = rc.classes;
    sc.feature_dim = rc.dim;
    sc.frames = rc.frames;
    sc.mean_segment_len = rc.mean_seg_len;
    sc.noise_level = rc.noise;
    sc.seed = rc.seed;

    std::vector<Trial> trials = synth_dataset(sc);
    ClassVocab vocab = synth_vocab(sc.num_classes);

    std::vector<ManifestEntry> entries;
    for (const Trial& t : trials) {
        ManifestEntry e;
        e.id = t.id;
        e.user = t.user;
        e.feat_path = out / (t.id + ".feat");
        e.lbl_path = out / (t.id + ".lbl");
        save_trial(t, vocab, e.feat_path, e.lbl_path);
        entries.push_back(std::move(e));
    }
    write_manifest(out / "manifest.txt", entries);
    save_vocab(out / "vocab.txt", vocab);
    std::cout << "wrote " << trials.size() << " trials to " << out.string() << "\n";
    return 0;
}

int cmd_predict(const RunConfig& rc) {
    if (rc.checkpoint.empty()) throw std::runtime_error("--checkpoint <file> is required");
    if (rc.features.empty()) throw std::runtime_error("--features <file> is required");
    const fs::path out = ensure_out_dir(rc);
    echo_config(out, "predict", rc);

    Checkpoint ck = load_checkpoint(rc.checkpoint);
    SeqTensor feats = load_features(rc.features);
    Prediction pred = predict(ck.config, ck.params, feats);

    std::ofstream lbl(out / "predictions.lbl");
    for (int id : pred.labels) lbl << ck.vocab.name_of(id) << '\n';

    std::ofstream segs(out / "segments.txt");
    segs << "# label start end\n";
    for (const Segment& s : to_segments(pred.labels))
        segs << ck.vocab.name_of(s.label) << ' ' << s.start << ' ' << s.end << '\n';

    std::cout << "predicted " << pred.labels.size() << " frames, "
              << to_segments(pred.labels).size() << " segments\n";
    std::cout << "wrote " << (out / "predictions.lbl").string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"temporal sequence segmentation: dilated encoder/attention/decoder network"};
    app.require_subcommand(1);

    RunConfig rc;
    app.set_config("--config", "", "key=value config file; command-line flags override it");
    app.add_option("--seed", rc.seed, "run seed (drives init, shuffling, dropout, folds)");
    app.add_option("--epochs", rc.epochs, "training epochs");
    app.add_option("--lr", rc.lr, "Adam learning rate");
    app.add_option("--layers", rc.layers, "dilated layers per stack");
    app.add_option("--channels", rc.channels, "feature channels f");
    app.add_option("--dk", rc.dk, "query/key dimension");
    app.add_option("--dropout", rc.dropout, "dropout rate in [0,1)");
    app.add_option("--variant", rc.variant,
                   "attention_only|head_dilation|tail_dilation|symmetric|symmetric_pooled");
    app.add_flag("--no-pooling", rc.no_pooling, "disable the 4x1 pool / 1x4 upsample pair");
    app.add_option("--clip-norm", rc.clip_norm, "global gradient-norm clip (0 = off)");
    app.add_option("--out", rc.out, "output directory");
    app.add_option("--jobs", rc.jobs, "parallel fold jobs (0 = min(folds, cores))");
    app.add_flag("--truncate-mismatch", rc.truncate_mismatch,
                 "truncate trials whose feature/label lengths differ");
    app.add_option("--manifest", rc.manifest, "dataset manifest (id user feat lbl per line)");
    app.add_option("--checkpoint", rc.checkpoint, "checkpoint file to load");
    app.add_option("--features", rc.features, ".feat file to predict on");
    app.add_flag("--truth-debug", rc.truth_debug,
                 "eval: score ground truth against itself (sanity mode)");
    app.add_option("--sweep-layers", rc.sweep_layers, "ablate: comma list of layer counts");
    app.add_option("--repeats", rc.repeats, "ablate: seeded runs averaged per row");
    app.add_option("--users", rc.users, "synth: number of users");
    app.add_option("--trials-per-user", rc.trials_per_user, "synth: trials per user");
    app.add_option("--classes", rc.classes, "synth: gesture classes");
    app.add_option("--dim", rc.dim, "synth: feature dimension");
    app.add_option("--frames", rc.frames, "synth: frames per trial");
    app.add_option("--mean-seg-len", rc.mean_seg_len, "synth: mean segment length");
    app.add_option("--noise", rc.noise, "synth: noise level");

    auto* train_cmd = app.add_subcommand("train", "train a model on a manifest");
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a manifest");
    auto* louo_cmd = app.add_subcommand("louo", "leave-one-user-out cross validation");
    auto* ablate_cmd = app.add_subcommand("ablate", "variant and layer-count study");
    auto* gradcheck_cmd = app.add_subcommand("gradcheck", "finite-difference gradient checks");
    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic dataset");
    auto* predict_cmd = app.add_subcommand("predict", "label a feature file with a checkpoint");
    for (CLI::App* sub : app.get_subcommands({}))
        sub->fallthrough();  // shared flags may follow the command name

    CLI11_PARSE(app, argc, argv);

    try {
        if (train_cmd->parsed()) return cmd_train(rc);
        if (eval_cmd->parsed()) return cmd_eval(rc);
        if (louo_cmd->parsed()) return cmd_louo(rc);
        if (ablate_cmd->parsed()) return cmd_ablate(rc);
        if (gradcheck_cmd->parsed()) return cmd_gradcheck(rc);
        if (synth_cmd->parsed()) return cmd_synth(rc);
        if (predict_cmd->parsed()) return cmd_predict(rc);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
