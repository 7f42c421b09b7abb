#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "llab/config.hpp"
#include "llab/io.hpp"
#include "llab/param.hpp"
#include "llab/quantizer.hpp"
#include "llab/trainer.hpp"

namespace llab {

// One cell of the variants x bit-widths x seeds grid.
struct GridRun {
    int bits = 0;
    std::string variant;
    std::uint64_t seed = 0;
    ParamVector params;  // snapped to the quant grid
    ModelQuant quant;
    std::vector<EpochStats> history;
};

std::string run_tag(const std::string& model, const std::string& variant, int bits,
                    std::uint64_t seed);

// Builds the config echo stored in checkpoints for one run.
std::string train_echo(const ExperimentConfig& cfg, const std::string& variant, int bits,
                       std::uint64_t seed);

// Trains the full grid (parallel across runs when cfg.jobs > 1), then runs
// the enabled analyses and writes every artifact through the manifest.
std::vector<GridRun> run_experiment(const ExperimentConfig& cfg, Manifest& manifest,
                                    std::ostream& log);

}  // namespace llab
