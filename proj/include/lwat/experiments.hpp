#ifndef LWAT_EXPERIMENTS_HPP
#define LWAT_EXPERIMENTS_HPP

#include <array>
#include <ostream>
#include <string>
#include <vector>

#include "lwat/analysis.hpp"
#include "lwat/config.hpp"
#include "lwat/data.hpp"
#include "lwat/nn.hpp"
#include "lwat/train.hpp"

// Desk-scale experiment drivers shared by the CLI repro subcommand and the
// acceptance suite.

namespace lwat::repro {

struct DataPair {
    Dataset train;
    Dataset test;
};

// Dataset specs: "cifar10:<dir>" (data_batch_1..5.bin + test_batch.bin),
// "cifar100:<dir>" (train.bin + test.bin), "synthetic-cifar:k=v,..."
// (seed, per_class, test_per_class, noise, distractor, max_shift, classes),
// "blobs:k=v,..." (classes, per_class, dim, spread, seed).
DataPair resolve_dataset(const std::string& spec);

std::array<int64_t, 3> parse_widths(const std::string& spec);

// One training run: build the model from the recipe, train, measure clean
// test accuracy.
struct Recipe {
    std::string arch = "small-conv";
    std::array<int64_t, 3> widths = {16, 32, 64};
    int64_t inputDim = 1024;
    int64_t inputChannels = 3;
    int64_t classes = 10;
    int gradaccPrefix = -1;
    double dropout = 0.0;
    TrainConfig train;
};

Recipe recipe_from_config(const ExperimentConfig& cfg);

struct RunResult {
    Model model;
    TrainTrace trace;
    double testAcc = 0; // fraction
};

RunResult run_recipe(const Dataset& trainData, const Dataset& testData, const Recipe& recipe,
                     std::ostream* log = nullptr);

// --- toy example: baseline / fgs-orig / ours-orig on grayscale data ---
struct ToyParams {
    int epochs = 60;
    int64_t batch = 125;
    LrSchedule lr{0.05, 5.0, 25};
    double weightDecay = 5e-4;
    double momentum = 0.9;
    double epsOurs = 10.0; // normalized mode
    double epsFgs = 0.06;  // pixel units
    double alphaFgs = 0.5;
    uint64_t seed = 0;
};

struct ToyResult {
    Model baseline, fgs, ours;
    double accBaseline = 0, accFgs = 0, accOurs = 0; // percent
};

ToyResult run_toy(const Dataset& trainGray, const Dataset& testGray, const ToyParams& p,
                  std::ostream* log = nullptr);

// --- adversarial-strength comparison on an undefended small-conv net ---
struct CompareAdvParams {
    Recipe recipe;                      // trained with mode=baseline
    std::vector<double> epsList = {0.05, 0.1, 0.15, 0.2};
    int64_t attackBatch = 1;            // k=1 is the fidelity mode
};

struct CompareAdvResult {
    EpsSweepReport fgs;             // fgs-input
    EpsSweepReport cached;          // cached-layerwise
    EpsSweepReport cachedInputOnly; // cached-input-only
};

CompareAdvResult run_compare_adv(const Dataset& trainData, const Dataset& testData,
                                 const CompareAdvParams& p, std::ostream* log = nullptr);

// --- training-variant comparison under an fgs-input test sweep ---
struct VariantsParams {
    Recipe base;                                       // shared hyperparameters
    std::vector<TrainMode> modes = {TrainMode::Baseline, TrainMode::FgsOrig, TrainMode::FgsInter,
                                    TrainMode::OursOrig, TrainMode::OursJoint};
    std::vector<double> epsList = {0.02, 0.04, 0.06, 0.08, 0.1};
    double epsFgs = 0.06;   // input-space training eps for fgs modes
    double epsOurs = 10.0;  // normalized training eps for ours/random modes
};

struct VariantsResult {
    std::vector<std::string> names;
    std::vector<EpsSweepReport> sweeps; // one per mode, first row is clean
};

VariantsResult run_variants(const Dataset& trainData, const Dataset& testData,
                            const VariantsParams& p, std::ostream* log = nullptr);

// --- incremental gradacc placement sweep ---
struct LayerSweepParams {
    Recipe base; // mode forced to ours-orig
    std::vector<int> prefixes = {1, 2, 3};
    std::vector<uint64_t> seeds = {0, 1, 2};
};

struct LayerSweepResult {
    std::vector<int> prefixes;
    std::vector<std::vector<double>> accPerSeed; // [prefix][seed], percent
    std::vector<double> meanAcc;                 // percent
};

LayerSweepResult run_layer_sweep(const Dataset& trainData, const Dataset& testData,
                                 const LayerSweepParams& p, std::ostream* log = nullptr);

// markdown tables mirroring the published layout
std::string toy_markdown(const ToyResult& r);
std::string compare_adv_markdown(const CompareAdvResult& r);
std::string variants_markdown(const VariantsResult& r);
std::string layer_sweep_markdown(const LayerSweepResult& r);

} // namespace lwat::repro

#endif // LWAT_EXPERIMENTS_HPP
