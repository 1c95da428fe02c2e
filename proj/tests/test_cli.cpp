#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("tcseg_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter()++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    static int& counter() {
        static int c = 0;
        return c;
    }
};

int run_cli(const std::string& args, const fs::path& log) {
    const std::string cmd =
        std::string(TCSEG_BIN_PATH) + " " + args + " > " + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int count_lines(const fs::path& p) {
    std::ifstream in(p);
    std::string line;
    int n = 0;
    while (std::getline(in, line)) ++n;
    return n;
}

// tiny synthetic dataset + fast model flags shared by the commands below
const char* kTinyData = "--users 2 --trials-per-user 2 --classes 2 --dim 4 --frames 40 "
                        "--mean-seg-len 10 --noise 0.3";
const char* kTinyModel = "--layers 1 --channels 4 --dk 2 --dropout 0.25";

}  // namespace

TEST_CASE("synth is deterministic and writes the full file set") {
    TempDir dir;
    const fs::path a = dir.path / "a";
    const fs::path b = dir.path / "b";
    REQUIRE(run_cli(std::string("synth --seed 7 ") + kTinyData + " --out " + a.string(),
                    dir.path / "log_a") == 0);
    REQUIRE(run_cli(std::string("synth --seed 7 ") + kTinyData + " --out " + b.string(),
                    dir.path / "log_b") == 0);

    CHECK(fs::exists(a / "manifest.txt"));
    CHECK(fs::exists(a / "vocab.txt"));
    CHECK(fs::exists(a / "user0_trial0.feat"));
    CHECK(fs::exists(a / "user1_trial1.lbl"));

    for (const auto& entry : fs::directory_iterator(a)) {
        const fs::path other = b / entry.path().filename();
        REQUIRE(fs::exists(other));
        CHECK(slurp(entry.path()) == slurp(other));
    }

    // a different seed changes the data
    const fs::path c = dir.path / "c";
    REQUIRE(run_cli(std::string("synth --seed 8 ") + kTinyData + " --out " + c.string(),
                    dir.path / "log_c") == 0);
    CHECK(slurp(a / "user0_trial0.feat") != slurp(c / "user0_trial0.feat"));
}

TEST_CASE("train, eval, predict round trip") {
    TempDir dir;
    const fs::path data = dir.path / "data";
    REQUIRE(run_cli(std::string("synth --seed 3 ") + kTinyData + " --out " + data.string(),
                    dir.path / "log") == 0);

    const fs::path run1 = dir.path / "run1";
    const std::string train_args = std::string("train --manifest ") +
                                   (data / "manifest.txt").string() + " " + kTinyModel +
                                   " --epochs 2 --lr 0.01 --seed 5 --out ";
    REQUIRE(run_cli(train_args + run1.string(), dir.path / "log_train") == 0);
    CHECK(fs::exists(run1 / "config.txt"));
    CHECK(fs::exists(run1 / "checkpoint.bin"));
    CHECK(fs::exists(run1 / "vocab.txt"));
    CHECK(count_lines(run1 / "train.log") == 2);

    // identical seed and config give byte-identical checkpoints
    const fs::path run2 = dir.path / "run2";
    REQUIRE(run_cli(train_args + run2.string(), dir.path / "log_train2") == 0);
    CHECK(slurp(run1 / "checkpoint.bin") == slurp(run2 / "checkpoint.bin"));

    // --epochs 1 gives a one-entry log
    const fs::path run3 = dir.path / "run3";
    REQUIRE(run_cli(std::string("train --manifest ") + (data / "manifest.txt").string() + " " +
                        kTinyModel + " --epochs 1 --seed 5 --out " + run3.string(),
                    dir.path / "log_train3") == 0);
    CHECK(count_lines(run3 / "train.log") == 1);

    // evaluation writes per-trial sections and the aggregate
    const fs::path evaldir = dir.path / "eval";
    REQUIRE(run_cli(std::string("eval --checkpoint ") + (run1 / "checkpoint.bin").string() +
                        " --manifest " + (data / "manifest.txt").string() + " --out " +
                        evaldir.string(),
                    dir.path / "log_eval") == 0);
    const std::string report = slurp(evaldir / "eval_report.txt");
    CHECK(report.find("[trial user0_trial0]") != std::string::npos);
    CHECK(report.find("[aggregate]") != std::string::npos);
    for (const char* key : {"acc=", "edit=", "f1_10=", "f1_25=", "f1_50="})
        CHECK(report.find(key) != std::string::npos);

    // truth-debug mode scores 100 everywhere
    const fs::path truthdir = dir.path / "truth";
    REQUIRE(run_cli(std::string("eval --truth-debug --checkpoint ") +
                        (run1 / "checkpoint.bin").string() + " --manifest " +
                        (data / "manifest.txt").string() + " --out " + truthdir.string(),
                    dir.path / "log_truth") == 0);
    const std::string truth_report = slurp(truthdir / "eval_report.txt");
    CHECK(truth_report.find("acc=100.00") != std::string::npos);
    CHECK(truth_report.find("f1_50=100.00") != std::string::npos);
    CHECK(truth_report.find("edit=100.00") != std::string::npos);

    // predict: one label line per frame plus a segment listing
    const fs::path preddir = dir.path / "pred";
    REQUIRE(run_cli(std::string("predict --checkpoint ") + (run1 / "checkpoint.bin").string() +
                        " --features " + (data / "user0_trial0.feat").string() + " --out " +
                        preddir.string(),
                    dir.path / "log_pred") == 0);
    CHECK(count_lines(preddir / "predictions.lbl") == 40);
    CHECK(fs::exists(preddir / "segments.txt"));
}

TEST_CASE("config file values are applied and overridden by flags") {
    TempDir dir;
    const fs::path data = dir.path / "data";
    REQUIRE(run_cli(std::string("synth --seed 3 ") + kTinyData + " --out " + data.string(),
                    dir.path / "log") == 0);

    std::ofstream cfg(dir.path / "run.cfg");
    cfg << "epochs=1\nlayers=1\nchannels=4\ndk=2\ndropout=0.25\nseed=5\n"
        << "manifest=" << (data / "manifest.txt").string() << "\n";
    cfg.close();

    const fs::path run = dir.path / "cfg_run";
    REQUIRE(run_cli("train --config " + (dir.path / "run.cfg").string() + " --out " +
                        run.string(),
                    dir.path / "log_cfg") == 0);
    CHECK(count_lines(run / "train.log") == 1);
    // the echoed config reflects the resolved values
    const std::string echoed = slurp(run / "config.txt");
    CHECK(echoed.find("epochs=1") != std::string::npos);
    CHECK(echoed.find("channels=4") != std::string::npos);

    // a flag overrides the file
    const fs::path run2 = dir.path / "cfg_run2";
    REQUIRE(run_cli("train --config " + (dir.path / "run.cfg").string() +
                        " --epochs 2 --out " + run2.string(),
                    dir.path / "log_cfg2") == 0);
    CHECK(count_lines(run2 / "train.log") == 2);
    CHECK(slurp(run2 / "config.txt").find("epochs=2") != std::string::npos);
}

TEST_CASE("louo writes fold reports, aggregates and the partition check") {
    TempDir dir;
    const fs::path data = dir.path / "data";
    REQUIRE(run_cli(std::string("synth --seed 11 ") + kTinyData + " --out " + data.string(),
                    dir.path / "log") == 0);

    const fs::path out = dir.path / "louo";
    REQUIRE(run_cli(std::string("louo --manifest ") + (data / "manifest.txt").string() + " " +
                        kTinyModel + " --epochs 1 --seed 5 --jobs 2 --out " + out.string(),
                    dir.path / "log_louo") == 0);

    CHECK(fs::exists(out / "fold_user0" / "checkpoint.bin"));
    CHECK(fs::exists(out / "fold_user1" / "checkpoint.bin"));
    const std::string report = slurp(out / "louo_report.txt");
    CHECK(report.find("[fold user0]") != std::string::npos);
    CHECK(report.find("[fold user1]") != std::string::npos);
    CHECK(report.find("[aggregate_folds]") != std::string::npos);
    CHECK(report.find("[aggregate_sequences]") != std::string::npos);
    CHECK(report.find("partition=ok trials=4") != std::string::npos);
}

TEST_CASE("gradcheck command passes and reports per-parameter errors") {
    TempDir dir;
    const fs::path log = dir.path / "log";
    REQUIRE(run_cli("gradcheck --seed 1", log) == 0);
    const std::string text = slurp(log);
    CHECK(text.find("composed_model") != std::string::npos);
    CHECK(text.find("max_rel_err") != std::string::npos);
    CHECK(text.find("gradcheck PASS") != std::string::npos);
}

TEST_CASE("errors surface as nonzero exit codes") {
    TempDir dir;
    CHECK(run_cli("train --manifest /nonexistent/manifest.txt --out " +
                      (dir.path / "x").string(),
                  dir.path / "log1") != 0);
    CHECK(run_cli("eval --manifest /nonexistent/manifest.txt", dir.path / "log2") != 0);
    CHECK(run_cli("predict", dir.path / "log3") != 0);
    CHECK(run_cli("definitely-not-a-command", dir.path / "log4") != 0);

    // parse errors carry file and line
    const fs::path bad = dir.path / "bad.feat";
    std::ofstream(bad) << "1.0 2.0\n3.0 oops\n";
    std::ofstream(dir.path / "bad.lbl") << "a\na\n";
    std::ofstream(dir.path / "m.txt") << "t u bad.feat bad.lbl\n";
    CHECK(run_cli("train --manifest " + (dir.path / "m.txt").string() + " --out " +
                      (dir.path / "y").string(),
                  dir.path / "log5") != 0);
    const std::string err = slurp(dir.path / "log5");
    CHECK(err.find("bad.feat:2") != std::string::npos);
}
