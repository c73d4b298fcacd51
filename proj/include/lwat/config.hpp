#ifndef LWAT_CONFIG_HPP
#define LWAT_CONFIG_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "lwat/train.hpp"

namespace lwat {

// Flat key = value experiment description (# comments allowed). Unknown keys
// are rejected; parse -> serialize -> parse is a fixed point.
struct ExperimentConfig {
    // training
    TrainConfig train;
    // model
    std::string arch = "small-conv";
    int64_t classes = 10;
    std::string convWidths = "16:32:64";
    int gradaccPrefix = -1;
    double dropout = 0.0;
    // data
    std::string dataset = "synthetic-cifar";
    bool grayscale = false;
    bool normalizeData = false;
    int64_t trainPerClass = 0; // 0 = all
    // outputs & analysis
    std::string outDir = "runs";
    std::vector<double> evalEps = {0.0};
    std::string evalAttack = "fgs-input";
    bool runEval = false;
    bool runSpectrum = false;
    int spectrumSamples = 20;
    int spectrumTopK = 50;
    bool runBound = false;
    int boundTrials = 100;
    int threads = 1;

    static ExperimentConfig parse(const std::string& text);
    static ExperimentConfig load(const std::string& path);
    std::string serialize() const;      // canonical order and formatting
    std::string hash() const;           // fnv-1a64 of the canonical form, hex
    void validate() const;
};

} // namespace lwat

#endif // LWAT_CONFIG_HPP
