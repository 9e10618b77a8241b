#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ildnet/commands.hpp"
#include "ildnet/config.hpp"
#include "ildnet/errors.hpp"

namespace {

// Applies --config and --set in order: file first, then overrides.
ildnet::RunConfig make_config(const std::string& config_file,
                              const std::vector<std::string>& overrides) {
    ildnet::RunConfig cfg = ildnet::RunConfig::defaults();
    if (!config_file.empty()) cfg.load_file(config_file);
    for (const std::string& pair : overrides) cfg.set_pair(pair);
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"CT lung patch classification: extraction, training, evaluation"};
    app.require_subcommand(1);

    std::string config_file;
    std::vector<std::string> overrides;
    app.add_option("--config", config_file, "configuration file (key=value lines)")
        ->check(CLI::ExistingFile);
    app.add_option("--set", overrides, "override one configuration key (key=value)");

    // --config and --set live on the root app; fallthrough lets them appear
    // after the subcommand name as well
    CLI::App* extract = app.add_subcommand("extract", "turn annotated scans into a patch store");
    CLI::App* synth = app.add_subcommand("synth", "write a synthetic patch store");
    CLI::App* train = app.add_subcommand("train", "train on a hold-out split and report");
    CLI::App* crossval = app.add_subcommand("crossval", "k-fold cross-validation");
    CLI::App* tune = app.add_subcommand("tune", "compare architecture and loss variants");

    CLI::App* evaluate = app.add_subcommand("evaluate", "score a checkpoint against a patch store");
    std::string eval_checkpoint, eval_store;
    evaluate->add_option("checkpoint", eval_checkpoint, "checkpoint file")->required();
    evaluate->add_option("store", eval_store, "patch store directory")->required();

    CLI::App* predict = app.add_subcommand("predict", "classify individual patch files");
    std::string predict_checkpoint;
    std::vector<std::string> predict_files;
    predict->add_option("checkpoint", predict_checkpoint, "checkpoint file")->required();
    predict->add_option("patches", predict_files, "patch files")->required();

    for (CLI::App* sub : {extract, synth, train, crossval, tune, evaluate, predict})
        sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        const ildnet::RunConfig cfg = make_config(config_file, overrides);
        if (extract->parsed()) return ildnet::cmd_extract(cfg);
        if (synth->parsed()) return ildnet::cmd_synth(cfg);
        if (train->parsed()) return ildnet::cmd_train(cfg);
        if (crossval->parsed()) return ildnet::cmd_crossval(cfg);
        if (tune->parsed()) return ildnet::cmd_tune(cfg);
        if (evaluate->parsed()) return ildnet::cmd_evaluate(cfg, eval_checkpoint, eval_store);
        if (predict->parsed()) return ildnet::cmd_predict(cfg, predict_checkpoint, predict_files);
        std::cerr << "ildnet: no subcommand\n";
        return 1;
    } catch (const ildnet::ConfigError& e) {
        std::cerr << "ildnet: config error: " << e.what() << "\n";
        return 1;
    } catch (const ildnet::ShapeError& e) {
        std::cerr << "ildnet: config error: " << e.what() << "\n";
        return 1;
    } catch (const ildnet::DataError& e) {
        std::cerr << "ildnet: data error: " << e.what() << "\n";
        return 2;
    } catch (const ildnet::NumericError& e) {
        std::cerr << "ildnet: numeric error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "ildnet: error: " << e.what() << "\n";
        return 1;
    }
}
