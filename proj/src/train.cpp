#include "lwat/train.hpp"

#include <chrono>
#include <cmath>

#include "lwat/rng.hpp"

namespace lwat {

std::string to_string(TrainMode mode) {
    switch (mode) {
        case TrainMode::Baseline: return "baseline";
        case TrainMode::FgsOrig: return "fgs-orig";
        case TrainMode::FgsInter: return "fgs-inter";
        case TrainMode::OursOrig: return "ours-orig";
        case TrainMode::OursJoint: return "ours-joint";
        case TrainMode::Random: return "random";
    }
    return "?";
}

TrainMode train_mode_from_string(const std::string& name) {
    if (name == "baseline") return TrainMode::Baseline;
    if (name == "fgs-orig") return TrainMode::FgsOrig;
    if (name == "fgs-inter") return TrainMode::FgsInter;
    if (name == "ours-orig") return TrainMode::OursOrig;
    if (name == "ours-joint") return TrainMode::OursJoint;
    if (name == "random") return TrainMode::Random;
    throw ConfigError("unknown training mode '" + name + "'");
}

double lr_at(const LrSchedule& s, int epoch) {
    const int drops = epoch / s.dropPeriod;
    return s.base * std::pow(1.0 / s.dropFactor, drops);
}

void write_trace_csv(std::ostream& os, const TrainTrace& trace) {
    os << "epoch,lr,train_loss,train_err,test_err\n";
    for (const EpochRecord& r : trace.epochs)
        os << r.epoch << ',' << r.lr << ',' << r.trainLoss << ',' << r.trainErr << ','
           << r.testErr << '\n';
}

void sgd_nesterov_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads,
                       std::vector<Tensor>& velocity, const std::vector<bool>& decayMask,
                       double lr, double momentum, double weightDecay) {
    if (params.size() != grads.size() || params.size() != velocity.size())
        throw DimensionError("sgd: parameter/gradient/velocity counts differ");
    const float flr = static_cast<float>(lr);
    const float mu = static_cast<float>(momentum);
    for (size_t p = 0; p < params.size(); ++p) {
        Tensor& th = params[p];
        const Tensor& g = grads[p];
        Tensor& v = velocity[p];
        if (!th.same_shape(g) || !th.same_shape(v))
            throw DimensionError("sgd: shape mismatch on parameter " + std::to_string(p));
        const float wd = decayMask.empty() || decayMask[p] ? static_cast<float>(weightDecay) : 0.f;
        for (int64_t i = 0; i < th.size(); ++i) {
            const float gp = g[i] + wd * th[i];
            const float vn = mu * v[i] - flr * gp;
            v[i] = vn;
            th[i] += mu * vn - flr * gp;
            if (!std::isfinite(th[i]))
                throw NumericError("sgd: non-finite parameter update (param " + std::to_string(p) +
                                   ")");
        }
    }
}

double evaluate_accuracy(Model& model, const Dataset& data, int64_t batchSize) {
    BatchStream stream(data, batchSize, /*dropLast=*/false, /*flip=*/false, /*shuffled=*/false, 0);
    stream.start_epoch(0);
    int64_t correct = 0, total = 0;
    while (auto b = stream.next()) {
        const Tensor logits = model.logits_eval(b->x);
        const auto pred = argmax(logits, 1);
        for (size_t i = 0; i < b->y.size(); ++i) {
            correct += pred[i] == b->y[i];
            ++total;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(total);
}

namespace {

int64_t count_correct(const Tensor& logits, const std::vector<int>& labels) {
    const auto pred = argmax(logits, 1);
    int64_t correct = 0;
    for (size_t i = 0; i < labels.size(); ++i) correct += pred[i] == labels[i];
    return correct;
}

std::vector<Tensor> zeros_like(const std::vector<Tensor>& ts) {
    std::vector<Tensor> out;
    out.reserve(ts.size());
    for (const Tensor& t : ts) out.emplace_back(t.shape());
    return out;
}

void axpy_grads(std::vector<Tensor>& acc, const std::vector<Tensor>& g, float w) {
    for (size_t i = 0; i < acc.size(); ++i)
        for (int64_t j = 0; j < acc[i].size(); ++j) acc[i][j] += w * g[i][j];
}

struct BatchResult {
    double loss = 0;      // objective value
    int64_t correct = 0;  // on perturbed activations where applicable
};

class Trainer {
public:
    Trainer(Model& model, const TrainConfig& cfg, const IterObserver& observer)
        : model_(model), cfg_(cfg), observer_(observer), noiseRng_(mix64(cfg.seed) ^ 0x9015eULL) {
        velocity_ = zeros_like(model.params());
    }

    TrainTrace run(const Dataset& trainData, const Dataset& testData) {
        const bool cached = cfg_.mode == TrainMode::OursOrig || cfg_.mode == TrainMode::OursJoint ||
                            cfg_.mode == TrainMode::Random;
        BatchStream stream(trainData, cfg_.batchSize, /*dropLast=*/cached, cfg_.flip,
                           /*shuffled=*/true, cfg_.seed);
        model_.set_mode(Mode::Train);
        model_.reset_gradacc();
        TrainTrace trace;
        int64_t t = 0;
        for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
            const auto tick = std::chrono::steady_clock::now();
            const double lr = lr_at(cfg_.lr, epoch);
            stream.start_epoch(epoch);
            double lossSum = 0;
            int64_t correct = 0, seen = 0;
            while (auto b = stream.next()) {
                BatchResult r;
                try {
                    r = step(*b, lr, t, epoch);
                } catch (const NumericError& e) {
                    throw NumericError(std::string(e.what()) + " at iteration " + std::to_string(t));
                } catch (const DimensionError& e) {
                    throw DimensionError(std::string(e.what()) + " at iteration " + std::to_string(t));
                }
                const int64_t k = static_cast<int64_t>(b->y.size());
                lossSum += r.loss * static_cast<double>(k);
                correct += r.correct;
                seen += k;
                ++t;
            }
            EpochRecord rec;
            rec.epoch = epoch;
            rec.lr = lr;
            rec.trainLoss = lossSum / static_cast<double>(seen);
            rec.trainErr = 1.0 - static_cast<double>(correct) / static_cast<double>(seen);
            model_.set_mode(Mode::Eval);
            rec.testErr = 1.0 - evaluate_accuracy(model_, testData);
            model_.set_mode(Mode::Train);
            rec.seconds =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - tick).count();
            trace.epochs.push_back(rec);
        }
        model_.set_mode(Mode::Eval);
        return trace;
    }

private:
    BatchResult step(const Batch& b, double lr, int64_t t, int epoch) {
        switch (cfg_.mode) {
            case TrainMode::Baseline: return step_baseline(b, lr, t);
            case TrainMode::OursOrig:
            case TrainMode::OursJoint: return step_ours(b, lr, t);
            case TrainMode::FgsOrig: return step_fgs_orig(b, lr, t);
            case TrainMode::FgsInter: return step_fgs_inter(b, lr, t);
            case TrainMode::Random: return step_random(b, lr, t);
        }
        throw ConfigError("unhandled training mode");
        (void)epoch;
    }

    void optimizer_step(const std::vector<Tensor>& grads, double lr) {
        sgd_nesterov_step(model_.params(), grads, velocity_, model_.decay_mask(), lr,
                          cfg_.momentum, cfg_.weightDecay);
    }

    uint64_t drop_seed(int64_t t) const { return counter_hash(mix64(cfg_.seed) ^ 0xd407ULL, t); }

    BatchResult step_baseline(const Batch& b, double lr, int64_t t) {
        Tape tape;
        auto bind = model_.bind_params(tape);
        FwdCtx ctx = FwdCtx::train(drop_seed(t));
        ctx.withTaps = false;
        auto pass = model_.forward_loss(tape, bind, b.x, b.y, ctx);
        auto grads = tape.backward(pass.loss, Tensor({1}, {1.f}));
        optimizer_step(grads.paramGrads, lr);
        return {tape.value(pass.loss)[0], count_correct(tape.value(pass.logits), b.y)};
    }

    // Algorithm 1: forward with the previous batch's caches, one backward,
    // refresh every cache from the perturbed pass's taps, then step.
    BatchResult step_ours(const Batch& b, double lr, int64_t t) {
        const bool joint = cfg_.mode == TrainMode::OursJoint;
        Tape tape;
        auto bind = model_.bind_params(tape);

        // snapshot pre-update caches for the observer
        IterEvent ev;
        if (observer_) {
            ev.t = t;
            for (int i = 0; i < model_.gradacc_count(); ++i) {
                const GradAccState& s = model_.gradacc(i);
                GradAccSnapshot snap;
                snap.injected = s.active && s.epsLayer != 0.f;
                snap.rUsed = s.r;
                snap.epsUsed = s.epsLayer;
                ev.layers.push_back(std::move(snap));
            }
        }

        Tape::Id lossId;
        Tape::Id pertLogits;
        if (joint) {
            FwdCtx cctx = FwdCtx::train(drop_seed(t));
            cctx.inject = false;
            cctx.withTaps = false;
            cctx.tapTag = "c";
            auto clean = model_.forward_loss(tape, bind, b.x, b.y, cctx);
            FwdCtx pctx = FwdCtx::train(drop_seed(t));
            pctx.tapTag = "p";
            auto pert = model_.forward_loss(tape, bind, b.x, b.y, pctx);
            pertLogits = pert.logits;
            lossId = tape.add(tape.scale(clean.loss, static_cast<float>(cfg_.alpha)),
                              tape.scale(pert.loss, static_cast<float>(1.0 - cfg_.alpha)));
        } else {
            FwdCtx pctx = FwdCtx::train(drop_seed(t));
            pctx.tapTag = "p";
            auto pert = model_.forward_loss(tape, bind, b.x, b.y, pctx);
            pertLogits = pert.logits;
            lossId = pert.loss;
        }
        tape.set_output(lossId);
        auto grads = tape.backward(lossId, Tensor({1}, {1.f}));

        for (int i = 0; i < model_.gradacc_count(); ++i) {
            const Tensor& tapGrad = grads.tap(Model::tap_name(i, "p"));
            model_.gradacc(i) = gradacc_update(model_.gradacc(i), tapGrad,
                                               static_cast<float>(cfg_.epsBase), cfg_.epsNormalize);
            if (observer_) {
                GradAccSnapshot& snap = ev.layers[static_cast<size_t>(i)];
                snap.tapGrad = tapGrad;
                snap.gradMax = max(tapGrad);
                snap.gradMin = min(tapGrad);
                snap.rNew = model_.gradacc(i).r;
                snap.epsNew = model_.gradacc(i).epsLayer;
            }
        }
        optimizer_step(grads.paramGrads, lr);
        const double loss = tape.value(lossId)[0];
        if (observer_) {
            ev.loss = loss;
            observer_(ev);
        }
        return {loss, count_correct(tape.value(pertLogits), b.y)};
    }

    // Eq. (3): one extra clean pass provides r_fgs = eps*sign(grad_x J); the
    // joint gradient is alpha*clean + (1-alpha)*perturbed.
    BatchResult step_fgs_orig(const Batch& b, double lr, int64_t t) {
        Tape t1;
        auto bind1 = model_.bind_params(t1);
        FwdCtx ctx1 = FwdCtx::train(drop_seed(t));
        ctx1.inject = false;
        ctx1.withTaps = false;
        Tape::Id x1 = t1.input(b.x);
        t1.tap("x", x1);
        Tape::Id logits1 = model_.forward_logits(t1, bind1, x1, ctx1);
        Tape::Id loss1 = t1.softmax_xent(logits1, b.y);
        auto g1 = t1.backward(loss1, Tensor({1}, {1.f}));

        Tensor xinGrad = g1.tap("x");
        if (!all_finite(xinGrad)) throw NumericError("fgs: non-finite input gradient");
        Tensor xAdv(b.x.shape());
        const float eps = static_cast<float>(cfg_.epsBase);
        for (int64_t i = 0; i < xAdv.size(); ++i) {
            const float s = xinGrad[i] > 0.f ? 1.f : (xinGrad[i] < 0.f ? -1.f : 0.f);
            xAdv[i] = b.x[i] + eps * s;
        }

        Tape t2;
        auto bind2 = model_.bind_params(t2);
        auto pass2 = model_.forward_loss(t2, bind2, xAdv, b.y, ctx1);
        auto g2 = t2.backward(pass2.loss, Tensor({1}, {1.f}));

        std::vector<Tensor> grads = zeros_like(model_.params());
        axpy_grads(grads, g1.paramGrads, static_cast<float>(cfg_.alpha));
        axpy_grads(grads, g2.paramGrads, static_cast<float>(1.0 - cfg_.alpha));
        optimizer_step(grads, lr);
        const double loss = cfg_.alpha * t1.value(loss1)[0] +
                            (1.0 - cfg_.alpha) * t2.value(pass2.loss)[0];
        return {loss, count_correct(t2.value(pass2.logits), b.y)};
    }

    // Same-batch FGS gradients injected at the gradacc points instead of the
    // input; joint loss as above.
    BatchResult step_fgs_inter(const Batch& b, double lr, int64_t t) {
        Tape t1;
        auto bind1 = model_.bind_params(t1);
        FwdCtx ctx1 = FwdCtx::train(drop_seed(t));
        ctx1.inject = false;
        ctx1.tapTag = "f";
        auto pass1 = model_.forward_loss(t1, bind1, b.x, b.y, ctx1);
        auto g1 = t1.backward(pass1.loss, Tensor({1}, {1.f}));

        for (int i = 0; i < model_.gradacc_count(); ++i)
            model_.gradacc(i) = gradacc_update(model_.gradacc(i), g1.tap(Model::tap_name(i, "f")),
                                               static_cast<float>(cfg_.epsBase), cfg_.epsNormalize);

        Tape t2;
        auto bind2 = model_.bind_params(t2);
        FwdCtx ctx2 = FwdCtx::train(drop_seed(t));
        ctx2.inject = true;
        ctx2.withTaps = false;
        auto pass2 = model_.forward_loss(t2, bind2, b.x, b.y, ctx2);
        auto g2 = t2.backward(pass2.loss, Tensor({1}, {1.f}));

        std::vector<Tensor> grads = zeros_like(model_.params());
        axpy_grads(grads, g1.paramGrads, static_cast<float>(cfg_.alpha));
        axpy_grads(grads, g2.paramGrads, static_cast<float>(1.0 - cfg_.alpha));
        optimizer_step(grads, lr);
        const double loss = cfg_.alpha * t1.value(pass1.loss)[0] +
                            (1.0 - cfg_.alpha) * t2.value(pass2.loss)[0];
        return {loss, count_correct(t2.value(pass2.logits), b.y)};
    }

    // Gaussian layerwise noise of the same intensity, resampled per batch.
    // t=0 runs clean (injection shapes come from the previous forward).
    BatchResult step_random(const Batch& b, double lr, int64_t t) {
        Tape tape;
        auto bind = model_.bind_params(tape);
        FwdCtx ctx = FwdCtx::train(drop_seed(t));
        ctx.inject = false;
        ctx.tapTag = "";

        std::vector<Tensor> injections(static_cast<size_t>(model_.gradacc_count()));
        if (t > 0 && cfg_.epsBase != 0.0) {
            const float eps = static_cast<float>(cfg_.epsBase);
            for (size_t i = 0; i < noiseShapes_.size(); ++i) {
                Tensor noise(noiseShapes_[i]);
                for (int64_t j = 0; j < noise.size(); ++j)
                    noise[j] = eps * static_cast<float>(noiseRng_.normal());
                injections[i] = std::move(noise);
            }
            ctx.injectOverride = &injections;
        }
        auto pass = model_.forward_loss(tape, bind, b.x, b.y, ctx);
        auto grads = tape.backward(pass.loss, Tensor({1}, {1.f}));

        // record activation shapes for the next batch's draws
        noiseShapes_.clear();
        for (int i = 0; i < model_.gradacc_count(); ++i)
            noiseShapes_.push_back(grads.tap(Model::tap_name(i, "")).shape());

        optimizer_step(grads.paramGrads, lr);
        if (observer_) {
            IterEvent ev;
            ev.t = t;
            ev.loss = tape.value(pass.loss)[0];
            ev.randomInjections = std::move(injections);
            observer_(ev);
        }
        return {tape.value(pass.loss)[0], count_correct(tape.value(pass.logits), b.y)};
    }

    Model& model_;
    const TrainConfig& cfg_;
    const IterObserver& observer_;
    std::vector<Tensor> velocity_;
    Rng noiseRng_;
    std::vector<Shape> noiseShapes_;
};

} // namespace

TrainTrace train(Model& model, const Dataset& trainData, const Dataset& testData,
                 const TrainConfig& cfg, const IterObserver& observer) {
    if (cfg.alpha < 0.0 || cfg.alpha > 1.0) throw ConfigError("alpha must be in [0,1]");
    TrainConfig effective = cfg;
    if (cfg.mode == TrainMode::OursOrig) effective.alpha = 0.0; // single perturbed objective
    Trainer tr(model, effective, observer);
    return tr.run(trainData, testData);
}

TrainTrace train_ours(Model& model, const Dataset& trainData, const Dataset& testData,
                      const TrainConfig& cfg, const IterObserver& observer) {
    if (cfg.mode != TrainMode::OursOrig && cfg.mode != TrainMode::OursJoint)
        throw ConfigError("train_ours: mode must be ours-orig or ours-joint");
    return train(model, trainData, testData, cfg, observer);
}

TrainTrace train_fgs(Model& model, const Dataset& trainData, const Dataset& testData,
                     const TrainConfig& cfg, const IterObserver& observer) {
    if (cfg.mode != TrainMode::FgsOrig && cfg.mode != TrainMode::FgsInter)
        throw ConfigError("train_fgs: mode must be fgs-orig or fgs-inter");
    return train(model, trainData, testData, cfg, observer);
}

TrainTrace train_random(Model& model, const Dataset& trainData, const Dataset& testData,
                        const TrainConfig& cfg, const IterObserver& observer) {
    if (cfg.mode != TrainMode::Random) throw ConfigError("train_random: mode must be random");
    return train(model, trainData, testData, cfg, observer);
}

} // namespace lwat
