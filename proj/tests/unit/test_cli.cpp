#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "chf/cli.hpp"
#include "chf/dataset.hpp"
#include "chf/rng.hpp"

using namespace chf;
namespace fs = std::filesystem;

namespace {

struct CliResult {
    int code = 0;
    std::string out;
    std::string err;
};

CliResult cli(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    CliResult r;
    r.code = run_cli(args, out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "chf_cli_test" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
    REQUIRE(out.good());
}

std::string tiny_hyper_block() {
    return "[hyperparameters]\n"
           "epochs = 6\n"
           "lr0 = 0.01\n"
           "batch_size = 0\n"
           "hidden_widths = 6\n"
           "activation = tanh\n"
           "n_members = 2\n"
           "bnn_hidden_widths = 6\n"
           "bnn_samples = 20\n"
           "max_inducing = 8\n"
           "mc_train = 2\n"
           "mc_predict = 8\n";
}

constexpr std::size_t kRecords = 200;

/// One shared synthetic records file per test binary run.
const fs::path& records_csv() {
    static const fs::path path = [] {
        const fs::path dir = fresh_dir("data");
        const fs::path csv = dir / "records.csv";
        const auto r = cli({"synth", "--n", std::to_string(kRecords), "--seed", "99",
                            "--base", "biasi", "--noise", "0.05", "--out", csv.string()});
        REQUIRE(r.code == 0);
        return csv;
    }();
    return path;
}

}  // namespace

TEST_CASE("help and usage errors use the documented exit codes") {
    const auto help = cli({"--help"});
    CHECK(help.code == 0);
    CHECK(help.out.find("synth") != std::string::npos);
    CHECK(help.out.find("suite") != std::string::npos);

    const auto bad_flag = cli({"synth", "--frobnicate"});
    CHECK(bad_flag.code == 2);
    CHECK_FALSE(bad_flag.err.empty());

    const auto no_sub = cli({});
    CHECK(no_sub.code == 2);

    const auto no_config = cli({"train"});
    CHECK(no_config.code == 2);
    CHECK(no_config.err.find("error:") != std::string::npos);
}

TEST_CASE("synth writes deterministic record files") {
    const auto dir = fresh_dir("synth");
    const fs::path a = dir / "a.csv";
    const fs::path b = dir / "b.csv";
    const auto ra = cli({"synth", "--n", "50", "--seed", "7", "--base", "bowring",
                         "--noise", "0.02", "--out", a.string()});
    CHECK(ra.code == 0);
    CHECK(ra.out.find("wrote 50 synthetic records") != std::string::npos);
    const auto rb = cli({"synth", "--n", "50", "--seed", "7", "--base", "bowring",
                         "--noise", "0.02", "--out", b.string()});
    CHECK(rb.code == 0);
    CHECK(read_file(a) == read_file(b));
    CHECK(read_file(a).rfind("d_m,l_m,p_mpa,", 0) == 0);

    const auto bad = cli({"synth", "--n", "50", "--seed", "7", "--base", "biasi",
                          "--noise", "-0.5", "--out", (dir / "c.csv").string()});
    CHECK(bad.code == 3);
}

TEST_CASE("prepare filters, splits and scales with reproducible artifacts") {
    const auto dir = fresh_dir("prepare");
    const auto r = cli({"prepare", "--input", records_csv().string(), "--out",
                        dir.string(), "--seed", "31"});
    CHECK(r.code == 0);
    CHECK(r.out.find("filter criteria:") != std::string::npos);
    CHECK(r.out.find("diameter_m") != std::string::npos);
    CHECK(fs::exists(dir / "filtered.csv"));
    CHECK(fs::exists(dir / "split.json"));
    CHECK(fs::exists(dir / "scaler.json"));

    const auto dir2 = fresh_dir("prepare2");
    const auto r2 = cli({"prepare", "--input", records_csv().string(), "--out",
                         dir2.string(), "--seed", "31"});
    CHECK(r2.code == 0);
    CHECK(read_file(dir / "filtered.csv") == read_file(dir2 / "filtered.csv"));
    CHECK(read_file(dir / "split.json") == read_file(dir2 / "split.json"));
    CHECK(read_file(dir / "scaler.json") == read_file(dir2 / "scaler.json"));

    const auto missing = cli({"prepare", "--input", (dir / "nope.csv").string(),
                              "--out", dir.string()});
    CHECK(missing.code == 1);
    CHECK(missing.err.find("error:") != std::string::npos);
}

TEST_CASE("prepare falls back to the output environment variable") {
    const auto dir = fresh_dir("prepare_env");
    setenv("CHF_HYBRID_OUT", dir.c_str(), 1);
    const auto r = cli({"prepare", "--input", records_csv().string(), "--seed", "1"});
    unsetenv("CHF_HYBRID_OUT");
    CHECK(r.code == 0);
    CHECK(fs::exists(dir / "filtered.csv"));
}

TEST_CASE("train runs an experiment from a config file and replays its manifest") {
    const auto dir = fresh_dir("train");
    const fs::path cfg_path = dir / "run.cfg";
    write_file(cfg_path,
               "# tiny training run\n"
               "[dataset]\n"
               "records = " + records_csv().string() + "\n"
               "f_train = 0.8\n"
               "f_val = 0.1\n"
               "f_test = 0.1\n"
               "[seeds]\n"
               "master = 4242\n"
               "[method]\n"
               "name = ensemble\n"
               "[base]\n"
               "name = biasi\n"
               "[scenario]\n"
               "name = plentiful\n" +
               tiny_hyper_block() +
               "[output]\n"
               "dir = " + dir.string() + "\n");

    const auto r = cli({"train", "--config", cfg_path.string()});
    CHECK(r.code == 0);
    CHECK(r.out.find("ensemble_biasi_plentiful:") != std::string::npos);
    const fs::path run_dir = dir / "ensemble_biasi_plentiful";
    for (const char* name : {"manifest.json", "metrics.json", "model.json",
                             "predictions.csv", "test_records.csv", "parity.csv",
                             "rstd_hist.csv", "rstd_kde.csv", "calibration.csv"}) {
        CAPTURE(name);
        CHECK(fs::exists(run_dir / name));
    }

    // the config used seeds.master, so the split seed follows the master fanout;
    // reconstructing that split lets the manifest be replayed elsewhere
    const fs::path split_path = dir / "split.json";
    const DatasetSplit split = shuffle_split(
        kRecords, 0.8, 0.1, 0.1, derive_seed(4242, SeedStream::shuffle, 0));
    write_split_json(split_path.string(), split);

    const auto replay_dir = fresh_dir("train_replay");
    const auto replay = cli({"train", "--replay", (run_dir / "manifest.json").string(),
                             "--records", records_csv().string(), "--split",
                             split_path.string(), "--out", replay_dir.string()});
    CAPTURE(replay.err);
    CHECK(replay.code == 0);
    const fs::path replay_run = replay_dir / "ensemble_biasi_plentiful";
    CHECK(read_file(replay_run / "manifest.json") == read_file(run_dir / "manifest.json"));
    CHECK(read_file(replay_run / "metrics.json") == read_file(run_dir / "metrics.json"));
    CHECK(read_file(replay_run / "predictions.csv") ==
          read_file(run_dir / "predictions.csv"));

    // replay rejects flags without a manifest and manifests against other data
    const auto stray = cli({"train", "--config", cfg_path.string(), "--records",
                            records_csv().string()});
    CHECK(stray.code == 2);

    const auto other_records = fresh_dir("train_alt") / "records.csv";
    const auto synth = cli({"synth", "--n", std::to_string(kRecords), "--seed", "100",
                            "--base", "biasi", "--noise", "0.05", "--out",
                            other_records.string()});
    REQUIRE(synth.code == 0);
    const auto mismatch = cli({"train", "--replay", (run_dir / "manifest.json").string(),
                               "--records", other_records.string(), "--split",
                               split_path.string(), "--out",
                               (fresh_dir("train_bad")).string()});
    CHECK(mismatch.code == 3);
    CHECK(mismatch.err.find("hash mismatch") != std::string::npos);
}

TEST_CASE("config schema violations map to exit 2 and domain errors to exit 3") {
    const auto dir = fresh_dir("badcfg");
    const std::string valid_head =
        "[dataset]\n"
        "records = " + records_csv().string() + "\n"
        "[seeds]\n"
        "master = 1\n"
        "[method]\n"
        "name = ensemble\n"
        "[base]\n"
        "name = none\n"
        "[scenario]\n"
        "name = plentiful\n";

    const fs::path unknown_key = dir / "unknown.cfg";
    write_file(unknown_key, valid_head + "[hyperparameters]\nwarp_factor = 9\n");
    const auto unknown = cli({"train", "--config", unknown_key.string()});
    CHECK(unknown.code == 2);
    CHECK(unknown.err.find("warp_factor") != std::string::npos);

    const fs::path bad_number = dir / "number.cfg";
    write_file(bad_number, valid_head + "[hyperparameters]\nepochs = twelve\n");
    CHECK(cli({"train", "--config", bad_number.string()}).code == 2);

    const fs::path no_section = dir / "nosection.cfg";
    write_file(no_section, "records = x.csv\n");
    CHECK(cli({"train", "--config", no_section.string()}).code == 2);

    const fs::path duplicate = dir / "dup.cfg";
    write_file(duplicate, valid_head + "[hyperparameters]\nepochs = 5\nepochs = 6\n");
    CHECK(cli({"train", "--config", duplicate.string()}).code == 2);

    const fs::path bad_domain = dir / "domain.cfg";
    write_file(bad_domain, valid_head + "[hyperparameters]\nepochs = -5\n");
    CHECK(cli({"train", "--config", bad_domain.string()}).code == 3);

    // both seed styles at once are contradictory
    const fs::path two_seeds = dir / "seeds.cfg";
    write_file(two_seeds,
               "[dataset]\nrecords = " + records_csv().string() + "\n" +
               "[seeds]\nmaster = 1\nsplit = 2\ntrain = 3\nsample = 4\n" +
               "[method]\nname = ensemble\n[base]\nname = none\n" +
               "[scenario]\nname = plentiful\n");
    CHECK(cli({"train", "--config", two_seeds.string()}).code == 2);
}

TEST_CASE("suite runs the full grid and report rebuilds its comparison table") {
    const auto dir = fresh_dir("suite");
    const fs::path cfg_path = dir / "suite.cfg";
    write_file(cfg_path,
               "[dataset]\n"
               "records = " + records_csv().string() + "\n"
               "[seeds]\n"
               "master = 777\n" +
               tiny_hyper_block() +
               "bnn_epochs = 4\n"
               "dgp_epochs = 4\n"
               "dgp_lr0 = 0.02\n"
               "[output]\n"
               "dir = " + dir.string() + "\n");

    const auto r = cli({"suite", "--config", cfg_path.string(), "--jobs", "1"});
    CAPTURE(r.err);
    CHECK(r.code == 0);
    CHECK(fs::exists(dir / "comparison.csv"));
    CHECK(fs::exists(dir / "suite_manifest.json"));
    CHECK(fs::exists(dir / "split.json"));
    CHECK(fs::exists(dir / "ensemble_none_plentiful" / "metrics.json"));
    CHECK(fs::exists(dir / "dgp_bowring_limited" / "manifest.json"));

    const auto comparison = read_file(dir / "comparison.csv");
    CHECK(comparison.rfind("method,base,scenario,", 0) == 0);

    // a suite config must not pin a single method, base, or scenario
    const fs::path pinned = dir / "pinned.cfg";
    write_file(pinned,
               "[dataset]\nrecords = " + records_csv().string() + "\n" +
               "[seeds]\nmaster = 777\n[method]\nname = ensemble\n");
    const auto rejected = cli({"suite", "--config", pinned.string()});
    CHECK(rejected.code == 2);
    CHECK(rejected.err.find("method.name") != std::string::npos);

    // rebuild the table from the per-run artifacts
    const auto report_dir = fresh_dir("report");
    const auto report = cli({"report", "--runs", dir.string(), "--out",
                             report_dir.string()});
    CAPTURE(report.err);
    CHECK(report.code == 0);
    CHECK(read_file(report_dir / "comparison.csv") == comparison);

    // a pressure-window slice reports per-run coverage
    const auto bwr = cli({"report", "--runs", dir.string(), "--out",
                          report_dir.string(), "--bwr-filter"});
    CHECK(bwr.code == 0);
    CHECK(bwr.out.find("BWR pressure window") != std::string::npos);

    // a missing expected run maps to exit 5
    fs::remove(dir / "bnn_biasi_limited" / "metrics.json");
    const auto missing = cli({"report", "--runs", dir.string(), "--out",
                              (fresh_dir("report2")).string()});
    CHECK(missing.code == 5);
    CHECK(missing.err.find("bnn_biasi_limited") != std::string::npos);

    // a nonexistent runs directory maps to exit 1
    const auto no_dir = cli({"report", "--runs", (dir / "void").string()});
    CHECK(no_dir.code == 1);
}
