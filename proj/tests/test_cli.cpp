#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include <json.hpp>

#include "ildnet/commands.hpp"
#include "ildnet/config.hpp"
#include "ildnet/data.hpp"

using namespace ildnet;
namespace fs = std::filesystem;

namespace {

std::string fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir.string();
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE_MESSAGE(bool(in), path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// commands print progress summaries; keep them out of the test log
struct CoutCapture {
    std::ostringstream buffer;
    std::streambuf* saved;
    CoutCapture() : saved(std::cout.rdbuf(buffer.rdbuf())) {}
    ~CoutCapture() { std::cout.rdbuf(saved); }
    std::string text() const { return buffer.str(); }
};

int run_cli(const std::string& args, const std::string& log) {
    const std::string cmd = std::string(ILDNET_CLI_PATH) + " " + args + " > " + log + " 2>&1";
    const int status = std::system(cmd.c_str());
    REQUIRE(status != -1);
    REQUIRE(WIFEXITED(status));
    return WEXITSTATUS(status);
}

// settings small enough for a sub-second training run
RunConfig tiny_train_config(const std::string& out_dir) {
    RunConfig cfg = RunConfig::defaults();
    cfg.set("data.synthetic", "true");
    cfg.set("data.per_class", "12");
    cfg.set("patch_size", "8");
    cfg.set("arch.blocks", "4:3");
    cfg.set("arch.dense", "16");
    cfg.set("arch.dropout", "0.25");
    cfg.set("epochs", "2");
    cfg.set("batch_size", "8");
    cfg.set("lr", "0.01");
    cfg.set("validation_fraction", "0");
    cfg.set("test_per_class", "4");
    cfg.set("augment.factor", "1");
    cfg.set("out.dir", out_dir);
    return cfg;
}

}  // namespace

TEST_CASE("defaults parse into the reference architecture") {
    RunConfig cfg = RunConfig::defaults();
    CHECK(cfg.get("seed") == "42");
    CHECK(cfg.get_u64("epochs") == 50);
    CHECK(cfg.get_double("lr") == 0.00001);
    CHECK(cfg.get_bool("augment.enabled"));

    ArchitectureSpec arch = cfg.architecture();
    REQUIRE(arch.conv_blocks.size() == 4);
    CHECK(arch.conv_blocks[0].filters == 32);
    CHECK(arch.conv_blocks[0].kernel == 7);
    CHECK(arch.conv_blocks[3].filters == 128);
    CHECK(arch.conv_blocks[3].kernel == 3);
    CHECK(arch.dense_units == std::vector<std::size_t>{1024, 512, 256});
    CHECK(arch.num_classes == 5);
    CHECK(arch.input_height == 32);
    CHECK(arch.input_channels == 3);

    TrainingConfig tcfg = cfg.training();
    CHECK(tcfg.loss == LossKind::cross_entropy);
    CHECK(tcfg.batch_size == 32);
    CHECK(tcfg.validation_fraction == 0.1);

    std::vector<HUWindow> windows = cfg.hu_windows();
    REQUIRE(windows.size() == 3);
    CHECK(windows[0].lo == -1400.0);
    CHECK(windows[0].hi == -950.0);
    CHECK(windows[2].hi == 240.0);

    CHECK(cfg.transforms().size() == 7);
}

TEST_CASE("configuration rejects unknown keys and bad values") {
    RunConfig cfg = RunConfig::defaults();
    CHECK_THROWS_AS(cfg.set("no_such_key", "1"), ConfigError);
    CHECK_THROWS_AS(cfg.get("no_such_key"), ConfigError);
    CHECK_THROWS_AS(cfg.set_pair("epochs"), ConfigError);

    cfg.set_pair("epochs=3");
    CHECK(cfg.get_u64("epochs") == 3);

    cfg.set("epochs", "abc");
    CHECK_THROWS_AS(cfg.get_u64("epochs"), ConfigError);
    CHECK_THROWS_AS(cfg.get_int("epochs"), ConfigError);
    cfg.set("lr", "fast");
    CHECK_THROWS_AS(cfg.get_double("lr"), ConfigError);
    cfg.set("augment.enabled", "maybe");
    CHECK_THROWS_AS(cfg.get_bool("augment.enabled"), ConfigError);
    cfg.set("loss", "hinge");
    CHECK_THROWS_AS(cfg.training(), ConfigError);
    cfg.set("hu.windows", "nocolon");
    CHECK_THROWS_AS(cfg.hu_windows(), ConfigError);
}

TEST_CASE("canonical text is sorted and hashes are stable") {
    RunConfig a = RunConfig::defaults();
    const std::string canon = a.canonical();
    CHECK(canon.find("seed=42\n") != std::string::npos);
    std::vector<std::string> lines;
    std::istringstream ss(canon);
    for (std::string line; std::getline(ss, line);) lines.push_back(line);
    CHECK(std::is_sorted(lines.begin(), lines.end()));

    RunConfig b = RunConfig::defaults();
    CHECK(a.hash() == b.hash());
    CHECK(a.hash().size() == 16);
    b.set("seed", "43");
    CHECK(a.hash() != b.hash());
}

TEST_CASE("config files support comments and override order") {
    const std::string dir = fresh_dir("ildnet_cli_cfg");
    const std::string path = dir + "/run.cfg";
    {
        std::ofstream out(path);
        out << "# experiment settings\n";
        out << "\n";
        out << "epochs = 7   # short run\n";
        out << "lr=0.001\n";
    }
    RunConfig cfg = RunConfig::defaults();
    cfg.load_file(path);
    CHECK(cfg.get_u64("epochs") == 7);
    CHECK(cfg.get_double("lr") == 0.001);

    { std::ofstream out(path); out << "epochs=1\nepochs=2\n"; }
    RunConfig dup = RunConfig::defaults();
    try {
        dup.load_file(path);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK_MESSAGE(std::string(e.what()).find(":2:") != std::string::npos, e.what());
    }

    { std::ofstream out(path); out << "mystery=1\n"; }
    CHECK_THROWS_AS(RunConfig::defaults().load_file(path), ConfigError);
    { std::ofstream out(path); out << "just words\n"; }
    CHECK_THROWS_AS(RunConfig::defaults().load_file(path), ConfigError);
    CHECK_THROWS_AS(RunConfig::defaults().load_file(dir + "/absent.cfg"), ConfigError);
    fs::remove_all(dir);
}

TEST_CASE("dataset selection requires exactly one source") {
    RunConfig cfg = RunConfig::defaults();
    CoutCapture quiet;
    CHECK_THROWS_AS(cmd_train(cfg), ConfigError);  // nothing configured

    cfg.set("data.synthetic", "true");
    cfg.set("data.store", "somewhere");
    CHECK_THROWS_AS(cmd_train(cfg), ConfigError);  // two sources
}

TEST_CASE("synth writes a loadable patch store") {
    const std::string dir = fresh_dir("ildnet_cli_synth");
    RunConfig cfg = RunConfig::defaults();
    cfg.set("data.per_class", "4");
    cfg.set("patch_size", "8");
    cfg.set("out.dir", dir);
    CoutCapture quiet;
    CHECK(cmd_synth(cfg) == 0);
    CHECK(quiet.text().find("synthesized 20 patches") != std::string::npos);

    std::vector<Patch> got = load_patch_store(dir);
    REQUIRE(got.size() == 20);
    CHECK(got[0].pixels.shape() == Shape{8, 8, 3});
    fs::remove_all(dir);
}

TEST_CASE("train writes checkpoint, curves, and reports") {
    const std::string dir = fresh_dir("ildnet_cli_train");
    RunConfig cfg = tiny_train_config(dir);
    {
        CoutCapture quiet;
        CHECK(cmd_train(cfg) == 0);
        // 12 per class, 4 held out, times 2 after one augmentation pass
        CHECK(quiet.text().find("trained on 80 patches, tested on 20") != std::string::npos);
    }

    CHECK(fs::exists(dir + "/checkpoint.ckpt"));
    CHECK(fs::exists(dir + "/report.txt"));

    std::istringstream curves(read_file(dir + "/curves.csv"));
    std::vector<std::string> lines;
    for (std::string line; std::getline(curves, line);) lines.push_back(line);
    REQUIRE(lines.size() == 3);  // header plus two epochs
    CHECK(lines[0] == "epoch,train_loss,train_accuracy,val_loss,val_accuracy");
    CHECK(lines[1].substr(0, 2) == "1,");

    nlohmann::json j = nlohmann::json::parse(read_file(dir + "/report.json"));
    REQUIRE(j["classes"].size() == 5);
    CHECK(j["classes"][0] == "H");
    long long total = 0;
    for (const auto& row : j["confusion_matrix"])
        for (const auto& v : row) total += v.get<long long>();
    CHECK(total == 20);
    CHECK(j["accuracy"].get<double>() >= 0.0);
    CHECK(j["accuracy"].get<double>() <= 1.0);

    Checkpoint ckpt = load_checkpoint(dir + "/checkpoint.ckpt");
    CHECK(ckpt.meta.seed == 42);
    CHECK(ckpt.meta.epoch == 2);
    CHECK(ckpt.meta.config_hash == cfg.hash());
    CHECK(ckpt.net.spec().input_height == 8);
    fs::remove_all(dir);
}

TEST_CASE("identical train runs produce identical artifacts") {
    // the output directory is part of the hashed configuration, so the rerun
    // must target the same directory; the first run's bytes are kept in memory
    const std::string dir = fresh_dir("ildnet_cli_det");
    {
        CoutCapture quiet;
        CHECK(cmd_train(tiny_train_config(dir)) == 0);
    }
    const std::string ckpt = read_file(dir + "/checkpoint.ckpt");
    const std::string report = read_file(dir + "/report.json");
    const std::string curves = read_file(dir + "/curves.csv");
    {
        CoutCapture quiet;
        CHECK(cmd_train(tiny_train_config(dir)) == 0);
    }
    CHECK(ckpt != "");
    CHECK(read_file(dir + "/checkpoint.ckpt") == ckpt);
    CHECK(read_file(dir + "/report.json") == report);
    CHECK(read_file(dir + "/curves.csv") == curves);
    fs::remove_all(dir);
}

TEST_CASE("evaluate scores a checkpoint against a store") {
    const std::string train_dir = fresh_dir("ildnet_cli_eval_train");
    const std::string store_dir = fresh_dir("ildnet_cli_eval_store");
    const std::string eval_dir = fresh_dir("ildnet_cli_eval_out");

    RunConfig cfg = tiny_train_config(train_dir);
    {
        CoutCapture quiet;
        CHECK(cmd_train(cfg) == 0);
    }
    write_patch_store(store_dir, synthesize_dataset(3, 7, 8, 3));

    RunConfig eval_cfg = RunConfig::defaults();
    eval_cfg.set("out.dir", eval_dir);
    {
        CoutCapture quiet;
        CHECK(cmd_evaluate(eval_cfg, train_dir + "/checkpoint.ckpt", store_dir) == 0);
    }
    nlohmann::json j = nlohmann::json::parse(read_file(eval_dir + "/eval_report.json"));
    CHECK(j["per_class"].size() == 5);
    long long total = 0;
    for (const auto& row : j["confusion_matrix"])
        for (const auto& v : row) total += v.get<long long>();
    CHECK(total == 15);

    CHECK_THROWS_AS(cmd_evaluate(eval_cfg, train_dir + "/checkpoint.ckpt", store_dir + "_missing"),
                    DataError);
    CHECK_THROWS_AS(cmd_evaluate(eval_cfg, train_dir + "/nothing.ckpt", store_dir), DataError);

    fs::remove_all(train_dir);
    fs::remove_all(store_dir);
    fs::remove_all(eval_dir);
}

TEST_CASE("predict classifies files and flags the broken ones") {
    const std::string dir = fresh_dir("ildnet_cli_predict");
    RunConfig cfg = tiny_train_config(dir);
    {
        CoutCapture quiet;
        CHECK(cmd_train(cfg) == 0);
    }
    const std::string ckpt = dir + "/checkpoint.ckpt";

    std::vector<Patch> patches = synthesize_dataset(1, 3, 8, 3);
    const std::string good = dir + "/good.patch";
    write_patch_file(good, patches[0]);

    {
        CoutCapture quiet;
        CHECK(cmd_predict(cfg, ckpt, {good}) == 0);
        CHECK(quiet.text().find(good) != std::string::npos);
    }

    // wrong geometry is a per-file failure, not a crash
    Patch odd = patches[0];
    odd.pixels = TensorF({4, 4, 1});
    const std::string bad = dir + "/bad.patch";
    write_patch_file(bad, odd);
    {
        CoutCapture quiet;
        CHECK(cmd_predict(cfg, ckpt, {good, bad}) == 2);
        CHECK(quiet.text().find(good) != std::string::npos);  // good file still classified
    }
    {
        CoutCapture quiet;
        CHECK(cmd_predict(cfg, ckpt, {dir + "/absent.patch"}) == 2);
    }
    CHECK_THROWS_AS(cmd_predict(cfg, dir + "/absent.ckpt", {good}), DataError);
    fs::remove_all(dir);
}

TEST_CASE("extract turns annotated scans into a store") {
    const std::string root = fresh_dir("ildnet_cli_scans");
    const std::string store = fresh_dir("ildnet_cli_scans_store");
    fs::create_directories(root + "/scan1");

    SliceImage slice;
    slice.width = 64;
    slice.height = 64;
    slice.hu.assign(64 * 64, -900.0f);
    write_slice_pgm(root + "/scan1/slice1.pgm", slice);
    {
        std::ofstream out(root + "/scan1/annotations.txt");
        out << "slice1 GG 0,0 64,0 64,32 0,32\n";
        out << "slice1 FB 0,32 32,32 32,64 0,64\n";
    }

    RunConfig cfg = RunConfig::defaults();
    cfg.set("data.dir", root);
    cfg.set("out.dir", store);
    {
        CoutCapture quiet;
        CHECK(cmd_extract(cfg) == 0);
        CHECK(quiet.text().find("extracted 3 patches") != std::string::npos);
    }
    std::vector<Patch> got = load_patch_store(store);
    REQUIRE(got.size() == 3);
    CHECK(got[0].label == 1);
    CHECK(got[2].label == 4);

    RunConfig missing = RunConfig::defaults();
    missing.set("out.dir", store);
    CHECK_THROWS_AS(cmd_extract(missing), ConfigError);

    fs::remove_all(root);
    fs::remove_all(store);
}

TEST_CASE("binary maps error classes to exit codes") {
    const std::string dir = fresh_dir("ildnet_cli_spawn");
    const std::string log = dir + "/log.txt";

    CHECK(run_cli("", log) == 1);  // a subcommand is required
    CHECK(run_cli("--help", log) == 0);
    CHECK(read_file(log).find("train") != std::string::npos);

    CHECK(run_cli("train", log) == 1);  // no dataset configured
    CHECK(read_file(log).find("config error") != std::string::npos);

    CHECK(run_cli("--set bogus=1 synth", log) == 1);
    CHECK(read_file(log).find("unknown config key") != std::string::npos);

    CHECK(run_cli("predict " + dir + "/absent.ckpt " + dir + "/absent.patch", log) == 2);
    CHECK(read_file(log).find("data error") != std::string::npos);

    CHECK(run_cli("evaluate", log) == 1);  // missing required arguments
    fs::remove_all(dir);
}

TEST_CASE("binary runs the synthetic pipeline end to end") {
    const std::string dir = fresh_dir("ildnet_cli_spawn2");
    const std::string log = dir + "/log.txt";
    const std::string store = dir + "/store";

    CHECK(run_cli("synth --set data.per_class=2 --set patch_size=8 --set out.dir=" + store, log) == 0);
    CHECK(read_file(log).find("synthesized 10 patches") != std::string::npos);
    CHECK(fs::exists(store + "/manifest.tsv"));
    CHECK(fs::exists(store + "/patches.bin"));
    fs::remove_all(dir);
}

TEST_CASE("binary honors config files with command-line overrides") {
    const std::string dir = fresh_dir("ildnet_cli_spawn3");
    const std::string log = dir + "/log.txt";
    const std::string cfg_path = dir + "/run.cfg";
    {
        std::ofstream out(cfg_path);
        out << "# tiny store\n";
        out << "data.per_class = 2\n";
        out << "patch_size = 8\n";
        out << "out.dir = " << dir << "/from_file\n";
    }
    CHECK(run_cli("--config " + cfg_path + " synth", log) == 0);
    CHECK(fs::exists(dir + "/from_file/manifest.tsv"));

    // --set wins over the file
    CHECK(run_cli("--config " + cfg_path + " --set out.dir=" + dir + "/from_set synth", log) == 0);
    CHECK(fs::exists(dir + "/from_set/manifest.tsv"));

    { std::ofstream out(cfg_path); out << "mystery = 1\n"; }
    CHECK(run_cli("--config " + cfg_path + " synth", log) == 1);
    fs::remove_all(dir);
}

TEST_CASE("binary reports numeric failures as exit code 3") {
    const std::string dir = fresh_dir("ildnet_cli_spawn4");
    const std::string log = dir + "/log.txt";
    const std::string store = dir + "/store";

    std::vector<Patch> patches = synthesize_dataset(6, 2, 8, 3);
    patches[0].pixels[0] = std::nanf("");
    write_patch_store(store, patches);

    const std::string args =
        "train --set data.store=" + store +
        " --set patch_size=8 --set arch.blocks=4:3 --set arch.dense=16 --set arch.dropout=0.25"
        " --set epochs=1 --set batch_size=8 --set lr=0.001 --set validation_fraction=0"
        " --set test_per_class=2 --set augment.enabled=false --set out.dir=" + dir + "/out";
    CHECK(run_cli(args, log) == 3);
    CHECK(read_file(log).find("numeric error") != std::string::npos);
    fs::remove_all(dir);
}
