#include "ildnet/commands.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <json.hpp>

#include "ildnet/data.hpp"
#include "ildnet/metrics.hpp"
#include "ildnet/model.hpp"
#include "ildnet/optim.hpp"
#include "ildnet/rng.hpp"

namespace fs = std::filesystem;

namespace ildnet {

namespace {

std::vector<std::string> class_names(std::size_t k) {
    std::vector<std::string> names;
    if (k == kClassNames.size())
        for (const char* n : kClassNames) names.emplace_back(n);
    return names;
}

std::string per_class_counts(const std::vector<Patch>& patches, std::size_t k) {
    std::vector<std::size_t> counts(k, 0);
    for (const Patch& p : patches)
        if (p.label < k) ++counts[p.label];
    std::string out;
    for (std::size_t c = 0; c < k; ++c) {
        if (c) out += " ";
        out += (k == kClassNames.size() ? label_name(c) : "class" + std::to_string(c)) + "=" +
               std::to_string(counts[c]);
    }
    return out;
}

std::vector<Patch> load_dataset(const RunConfig& cfg) {
    const std::string store = cfg.get("data.store");
    const std::string dir = cfg.get("data.dir");
    const bool synthetic = cfg.get_bool("data.synthetic");
    const int sources = int(!store.empty()) + int(!dir.empty()) + int(synthetic);
    if (sources == 0)
        throw ConfigError("no dataset configured: set data.store, data.dir, or data.synthetic");
    if (sources > 1)
        throw ConfigError("ambiguous dataset: set only one of data.store, data.dir, data.synthetic");
    if (!store.empty()) return load_patch_store(store);
    if (!dir.empty())
        return load_annotated_scans(dir, cfg.hu_windows(), cfg.get_u64("patch_size"),
                                    cfg.get_double("coverage"));
    return synthesize_dataset(cfg.get_u64("data.per_class"), cfg.get_u64("seed"),
                              cfg.get_u64("patch_size"), cfg.hu_windows().size());
}

std::string out_path(const RunConfig& cfg, const std::string& name) {
    const fs::path dir = cfg.get("out.dir");
    fs::create_directories(dir);
    return (dir / name).string();
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError(path + ": cannot open for writing");
    out << text;
    if (!out) throw DataError(path + ": write failed");
}

struct HoldoutRun {
    NetworkF net;
    std::vector<EpochRecord> records;
    ConfusionMatrix cm;
    std::size_t train_size = 0;
    std::size_t test_size = 0;
};

// Shared hold-out protocol: stratified split, augmentation of the training
// side only, fit, evaluation on the untouched test patches.
HoldoutRun run_holdout(const std::vector<Patch>& patches, const RunConfig& cfg,
                       const ArchitectureSpec& arch, const TrainingConfig& tcfg,
                       std::uint64_t net_seed) {
    SplitResult split = stratified_split(patches, cfg.get_u64("test_per_class"), cfg.get_u64("seed"),
                                         arch.num_classes);
    std::vector<Patch> train_patches = std::move(split.train);
    if (cfg.get_bool("augment.enabled"))
        train_patches = expand_training_set(train_patches, cfg.transforms(),
                                            cfg.get_u64("augment.factor"), cfg.get_u64("seed"),
                                            cfg.get_bool("augment.keep_originals"));

    HoldoutRun run;
    run.train_size = train_patches.size();
    run.test_size = split.test.size();
    Dataset train = stack_patches(train_patches);
    Dataset test = stack_patches(split.test);

    run.net = NetworkF::build(arch, net_seed);
    run.records = fit(run.net, train, nullptr, tcfg);
    const std::vector<std::size_t> preds = predict_labels(run.net, test.x, tcfg.batch_size);
    run.cm = confusion(test.y, preds, arch.num_classes, class_names(arch.num_classes));
    return run;
}

}  // namespace

int cmd_extract(const RunConfig& cfg) {
    const std::string dir = cfg.get("data.dir");
    if (dir.empty()) throw ConfigError("extract: data.dir is not set");
    const std::vector<Patch> patches = load_annotated_scans(
        dir, cfg.hu_windows(), cfg.get_u64("patch_size"), cfg.get_double("coverage"));
    if (patches.empty()) throw DataError("extract: no grid cell reached the coverage threshold");
    const std::string store = cfg.get("out.dir");
    write_patch_store(store, patches);
    std::cout << "extracted " << patches.size() << " patches from " << dir << "\n";
    std::cout << "per class: " << per_class_counts(patches, kClassNames.size()) << "\n";
    std::cout << "store written to " << store << "\n";
    return 0;
}

int cmd_synth(const RunConfig& cfg) {
    const std::vector<Patch> patches =
        synthesize_dataset(cfg.get_u64("data.per_class"), cfg.get_u64("seed"),
                           cfg.get_u64("patch_size"), cfg.hu_windows().size());
    const std::string store = cfg.get("out.dir");
    write_patch_store(store, patches);
    std::cout << "synthesized " << patches.size() << " patches\n";
    std::cout << "per class: " << per_class_counts(patches, kClassNames.size()) << "\n";
    std::cout << "store written to " << store << "\n";
    return 0;
}

int cmd_train(const RunConfig& cfg) {
    const std::vector<Patch> patches = load_dataset(cfg);
    const ArchitectureSpec arch = cfg.architecture();
    const TrainingConfig tcfg = cfg.training();
    HoldoutRun run = run_holdout(patches, cfg, arch, tcfg, tcfg.seed);

    CheckpointMeta meta;
    meta.seed = tcfg.seed;
    meta.epoch = tcfg.epochs;
    meta.config_hash = cfg.hash();
    save_checkpoint(run.net, meta, out_path(cfg, "checkpoint.ckpt"));
    write_curves_csv(out_path(cfg, "curves.csv"), run.records);
    const std::string report = render_report(run.cm);
    write_text(out_path(cfg, "report.txt"), report);
    write_text(out_path(cfg, "report.json"), report_json(run.cm));

    std::cout << "trained on " << run.train_size << " patches, tested on " << run.test_size << "\n";
    if (!run.records.empty()) {
        const EpochRecord& last = run.records.back();
        std::cout << "final epoch " << last.epoch << ": train loss " << last.train_loss
                  << ", train accuracy " << last.train_accuracy;
        if (last.val_accuracy) std::cout << ", val accuracy " << *last.val_accuracy;
        std::cout << "\n";
    }
    std::cout << report;
    std::cout << "checkpoint, curves, and reports written to " << cfg.get("out.dir") << "\n";
    return 0;
}

int cmd_crossval(const RunConfig& cfg) {
    const std::vector<Patch> patches = load_dataset(cfg);
    const ArchitectureSpec arch = cfg.architecture();
    const TrainingConfig tcfg = cfg.training();
    const std::size_t k = cfg.get_u64("kfold.k");
    const std::vector<std::size_t> fold_of =
        kfold_assign(patches, k, cfg.get_bool("kfold.stratified"), tcfg.seed, arch.num_classes);

    std::vector<ConfusionMatrix> fold_cms;
    for (std::size_t f = 0; f < k; ++f) {
        std::vector<Patch> train_patches, test_patches;
        for (std::size_t i = 0; i < patches.size(); ++i)
            (fold_of[i] == f ? test_patches : train_patches).push_back(patches[i]);
        if (cfg.get_bool("augment.enabled"))
            train_patches = expand_training_set(train_patches, cfg.transforms(),
                                                cfg.get_u64("augment.factor"), tcfg.seed,
                                                cfg.get_bool("augment.keep_originals"));
        Dataset train = stack_patches(train_patches);
        Dataset test = stack_patches(test_patches);

        NetworkF net = NetworkF::build(arch, derive_seed(tcfg.seed, "fold/" + std::to_string(f)));
        fit(net, train, nullptr, tcfg);
        const std::vector<std::size_t> preds = predict_labels(net, test.x, tcfg.batch_size);
        ConfusionMatrix cm = confusion(test.y, preds, arch.num_classes, class_names(arch.num_classes));

        const std::string stem = "fold" + std::to_string(f + 1) + "_report";
        write_text(out_path(cfg, stem + ".txt"), render_report(cm));
        write_text(out_path(cfg, stem + ".json"), report_json(cm));
        std::cout << "fold " << f + 1 << "/" << k << ": accuracy " << micro_accuracy(cm) << " on "
                  << test_patches.size() << " patches\n";
        fold_cms.push_back(std::move(cm));
    }

    const FoldAggregate agg = aggregate_folds(fold_cms);
    std::string text = render_report(agg.pooled);
    char buf[128];
    std::snprintf(buf, sizeof buf, "\nmean of folds: accuracy %.4f%%, f average %.4f%%\n",
                  agg.mean_accuracy * 100.0, agg.mean_f_avg * 100.0);
    text += buf;
    std::snprintf(buf, sizeof buf, "pooled:        accuracy %.4f%%, f average %.4f%%\n",
                  agg.pooled_accuracy * 100.0, agg.pooled_f_avg * 100.0);
    text += buf;
    write_text(out_path(cfg, "crossval_report.txt"), text);

    nlohmann::ordered_json j;
    j["folds"] = nlohmann::ordered_json::array();
    for (std::size_t f = 0; f < k; ++f) {
        nlohmann::ordered_json e;
        e["fold"] = f + 1;
        e["accuracy"] = micro_accuracy(fold_cms[f]);
        e["f_avg"] = f_avg(agg.per_fold[f]);
        j["folds"].push_back(e);
    }
    j["mean_accuracy"] = agg.mean_accuracy;
    j["mean_f_avg"] = agg.mean_f_avg;
    j["pooled"] = nlohmann::ordered_json::parse(report_json(agg.pooled));
    write_text(out_path(cfg, "crossval_report.json"), j.dump(2) + "\n");

    std::cout << text;
    std::cout << "fold and aggregate reports written to " << cfg.get("out.dir") << "\n";
    return 0;
}

int cmd_tune(const RunConfig& cfg) {
    struct Variant {
        const char* name;
        std::vector<ConvBlockSpec> blocks;
        LossKind loss;
        const char* loss_name;
    };
    // Filter ladders under comparison; kernels shrink 7 -> 5 -> 3 as depth
    // grows, matching the reference architecture's progression.
    const std::vector<ConvBlockSpec> conv3{{16, 7}, {32, 5}, {64, 3}};
    const std::vector<ConvBlockSpec> conv4{{32, 7}, {64, 5}, {32, 3}, {128, 3}};
    const std::vector<ConvBlockSpec> conv5{{32, 7}, {64, 5}, {32, 3}, {64, 3}, {128, 3}};
    const std::vector<Variant> variants = {
        {"conv3-ce", conv3, LossKind::cross_entropy, "cross_entropy"},
        {"conv3-mse", conv3, LossKind::mean_squared_error, "mse"},
        {"conv4-ce", conv4, LossKind::cross_entropy, "cross_entropy"},
        {"conv4-mse", conv4, LossKind::mean_squared_error, "mse"},
        {"conv5-ce", conv5, LossKind::cross_entropy, "cross_entropy"},
        {"conv5-mse", conv5, LossKind::mean_squared_error, "mse"},
    };

    const std::vector<Patch> patches = load_dataset(cfg);
    const ArchitectureSpec base = cfg.architecture();
    const TrainingConfig base_tcfg = cfg.training();

    std::string table = "variant    loss           accuracy     f_avg\n";
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (const Variant& v : variants) {
        ArchitectureSpec arch = base;
        arch.conv_blocks = v.blocks;
        arch.validate();
        TrainingConfig tcfg = base_tcfg;
        tcfg.loss = v.loss;
        const HoldoutRun run =
            run_holdout(patches, cfg, arch, tcfg, derive_seed(base_tcfg.seed, std::string("tune/") + v.name));
        const double acc = micro_accuracy(run.cm);
        const double f = f_avg(class_metrics(run.cm));
        char buf[128];
        std::snprintf(buf, sizeof buf, "%-10s %-14s %8.4f%% %8.4f%%\n", v.name, v.loss_name,
                      acc * 100.0, f * 100.0);
        table += buf;
        std::cout << buf << std::flush;

        nlohmann::ordered_json row;
        row["variant"] = v.name;
        row["conv_blocks"] = nlohmann::ordered_json::array();
        for (const ConvBlockSpec& b : v.blocks)
            row["conv_blocks"].push_back({{"filters", b.filters}, {"kernel", b.kernel}});
        row["loss"] = v.loss_name;
        row["accuracy"] = acc;
        row["f_avg"] = f;
        rows.push_back(row);
    }

    write_text(out_path(cfg, "tune_report.txt"), table);
    nlohmann::ordered_json j;
    j["variants"] = rows;
    write_text(out_path(cfg, "tune_report.json"), j.dump(2) + "\n");
    std::cout << "tuning table written to " << cfg.get("out.dir") << "\n";
    return 0;
}

int cmd_evaluate(const RunConfig& cfg, const std::string& checkpoint_path,
                 const std::string& store_dir) {
    Checkpoint ckpt = load_checkpoint(checkpoint_path);
    const std::vector<Patch> patches = load_patch_store(store_dir);
    const Dataset data = stack_patches(patches);
    const std::vector<std::size_t> preds =
        predict_labels(ckpt.net, data.x, cfg.get_u64("batch_size"));
    const ConfusionMatrix cm = confusion(data.y, preds, ckpt.net.spec().num_classes,
                                         class_names(ckpt.net.spec().num_classes));
    const std::string report = render_report(cm);
    write_text(out_path(cfg, "eval_report.txt"), report);
    write_text(out_path(cfg, "eval_report.json"), report_json(cm));
    std::cout << report;
    return 0;
}

int cmd_predict(const RunConfig& cfg, const std::string& checkpoint_path,
                const std::vector<std::string>& patch_files) {
    (void)cfg;
    Checkpoint ckpt = load_checkpoint(checkpoint_path);
    const ArchitectureSpec& spec = ckpt.net.spec();
    bool failed = false;
    for (const std::string& path : patch_files) {
        try {
            const Patch patch = read_patch_file(path);
            const Shape& s = patch.pixels.shape();
            if (s[0] != spec.input_height || s[1] != spec.input_width || s[2] != spec.input_channels)
                throw DataError(path + ": patch " + shape_str(s) + " does not match network input " +
                                std::to_string(spec.input_height) + "x" +
                                std::to_string(spec.input_width) + "x" +
                                std::to_string(spec.input_channels));
            TensorF batch = patch.pixels.reshaped({1, s[0], s[1], s[2]});
            const TensorF probs = ckpt.net.infer(batch);
            const std::size_t cls = argmax_rows(probs)[0];
            std::cout << path << "\t"
                      << (spec.num_classes == kClassNames.size() ? label_name(cls)
                                                                 : "class" + std::to_string(cls));
            char buf[16];
            for (std::size_t j = 0; j < probs.dim(1); ++j) {
                std::snprintf(buf, sizeof buf, " %.4f", double(probs.at2(0, j)));
                std::cout << buf;
            }
            std::cout << "\n";
        } catch (const DataError& e) {
            std::cerr << "ildnet: " << e.what() << "\n";
            failed = true;
        }
    }
    return failed ? 2 : 0;
}

}  // namespace ildnet
