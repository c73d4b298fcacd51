#ifndef LWAT_TRAIN_HPP
#define LWAT_TRAIN_HPP

#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "lwat/data.hpp"
#include "lwat/nn.hpp"

namespace lwat {

enum class TrainMode { Baseline, FgsOrig, FgsInter, OursOrig, OursJoint, Random };

std::string to_string(TrainMode mode);
TrainMode train_mode_from_string(const std::string& name);

struct LrSchedule {
    double base = 0.1;
    double dropFactor = 5.0;
    int dropPeriod = 50;
};

// base * (1/factor)^floor(epoch/period)
double lr_at(const LrSchedule& s, int epoch);

struct TrainConfig {
    TrainMode mode = TrainMode::Baseline;
    double epsBase = 0.0;
    double alpha = 0.5; // joint-loss clean weight; ours-orig behaves as alpha=0
    int epochs = 10;
    int64_t batchSize = 128;
    LrSchedule lr;
    double momentum = 0.9;
    double weightDecay = 5e-4;
    uint64_t seed = 0;
    bool epsNormalize = true; // per-layer eps_l = eps * (max-min) of the tap gradient
    bool flip = false;
};

struct EpochRecord {
    int epoch = 0;
    double lr = 0;
    double trainLoss = 0; // objective value, averaged over seen samples
    double trainErr = 0;  // computed on perturbed activations
    double testErr = 0;
    double seconds = 0;
};

struct TrainTrace {
    std::vector<EpochRecord> epochs;
};

// CSV columns: epoch, lr, train_loss, train_err, test_err
void write_trace_csv(std::ostream& os, const TrainTrace& trace);

// g' = g + wd*theta; v <- mu*v - lr*g'; theta <- theta + mu*v - lr*g'
// (v on the right-hand sides of the theta update is the refreshed velocity).
void sgd_nesterov_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads,
                       std::vector<Tensor>& velocity, const std::vector<bool>& decayMask,
                       double lr, double momentum, double weightDecay);

// Per-iteration instrumentation for structural tests.
struct GradAccSnapshot {
    bool injected = false;
    Tensor rUsed;          // cache applied during this forward (pre-update)
    float epsUsed = 0;
    Tensor tapGrad;        // backward tap this iteration
    float gradMax = 0, gradMin = 0;
    Tensor rNew;           // cache after the update
    float epsNew = 0;
};

struct IterEvent {
    int64_t t = 0;
    int epoch = 0;
    double loss = 0;
    std::vector<GradAccSnapshot> layers;
    std::vector<Tensor> randomInjections; // random mode only
};

using IterObserver = std::function<void(const IterEvent&)>;

// Trains in place and returns the per-epoch trace. Dispatches on cfg.mode.
TrainTrace train(Model& model, const Dataset& trainData, const Dataset& testData,
                 const TrainConfig& cfg, const IterObserver& observer = nullptr);

// Mode-checked entry points.
TrainTrace train_ours(Model& model, const Dataset& trainData, const Dataset& testData,
                      const TrainConfig& cfg, const IterObserver& observer = nullptr);
TrainTrace train_fgs(Model& model, const Dataset& trainData, const Dataset& testData,
                     const TrainConfig& cfg, const IterObserver& observer = nullptr);
TrainTrace train_random(Model& model, const Dataset& trainData, const Dataset& testData,
                        const TrainConfig& cfg, const IterObserver& observer = nullptr);

// Eval-mode top-1 accuracy in [0,1].
double evaluate_accuracy(Model& model, const Dataset& data, int64_t batchSize = 250);

} // namespace lwat

#endif // LWAT_TRAIN_HPP
