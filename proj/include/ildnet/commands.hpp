#pragma once

#include <string>
#include <vector>

#include "ildnet/config.hpp"

namespace ildnet {

// Subcommand bodies. Each reads its inputs per the configuration, writes its
// outputs under out.dir, prints a summary to stdout, and returns the process
// exit code. Invalid configuration, broken data, and numeric failures
// propagate as the corresponding exceptions for main() to map to exit codes.

// Scan directories -> patch store (manifest.tsv + patches.bin) in out.dir.
int cmd_extract(const RunConfig& cfg);

// Synthetic dataset -> patch store in out.dir.
int cmd_synth(const RunConfig& cfg);

// Hold-out protocol: stratified split, augmentation of the training side,
// training, evaluation. Writes checkpoint.ckpt, curves.csv, report.txt,
// report.json.
int cmd_train(const RunConfig& cfg);

// k-fold protocol over the whole dataset; per-fold and aggregate reports.
int cmd_crossval(const RunConfig& cfg);

// Trains the fixed architecture/loss variant grid on one shared split and
// tabulates test accuracy and F average per variant.
int cmd_tune(const RunConfig& cfg);

// Evaluates a checkpoint against a patch store.
int cmd_evaluate(const RunConfig& cfg, const std::string& checkpoint_path,
                 const std::string& store_dir);

// Classifies individual patch files; per-file failures are reported on
// stderr and turn the exit code to 2 without stopping the batch.
int cmd_predict(const RunConfig& cfg, const std::string& checkpoint_path,
                const std::vector<std::string>& patch_files);

}  // namespace ildnet
