#include "lwat/analysis.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "lwat/autodiff.hpp"
#include "lwat/svd.hpp"

namespace lwat {

std::string to_string(AttackKind kind) {
    switch (kind) {
        case AttackKind::FgsInput: return "fgs-input";
        case AttackKind::CachedLayerwise: return "cached-layerwise";
        case AttackKind::CachedInputOnly: return "cached-input-only";
    }
    return "?";
}

AttackKind attack_from_string(const std::string& name) {
    if (name == "fgs-input") return AttackKind::FgsInput;
    if (name == "cached-layerwise") return AttackKind::CachedLayerwise;
    if (name == "cached-input-only") return AttackKind::CachedInputOnly;
    throw ConfigError("unknown attack '" + name + "'");
}

namespace {
inline float std_divisor(float stdev) { return stdev + 1e-8f; } // matches normalize()
} // namespace

Tensor fgs_attack(Model& model, const Tensor& x, const std::vector<int>& y, double eps,
                  const std::optional<DataStats>& stats) {
    if (eps == 0.0) return x;

    Tape tape;
    auto bind = model.bind_params(tape);
    FwdCtx ctx = FwdCtx::eval();
    Tape::Id xi = tape.input(x);
    tape.tap("x", xi);
    Tape::Id logits = model.forward_logits(tape, bind, xi, ctx);
    Tape::Id loss = tape.softmax_xent(logits, y);
    auto grads = tape.backward(loss, Tensor({1}, {1.f}));
    const Tensor& g = grads.tap("x");

    const int64_t n = x.extent(0);
    const int64_t c = x.rank() >= 2 ? x.extent(1) : 1;
    const int64_t sp = x.size() / (n * c);
    Tensor out(x.shape());
    for (int64_t i = 0; i < n; ++i)
        for (int64_t ch = 0; ch < c; ++ch) {
            float step = static_cast<float>(eps);
            float lo = 0.f, hi = 1.f;
            if (stats) {
                const float d = std_divisor(stats->stdev[ch]);
                const float m = stats->mean[ch];
                step = static_cast<float>(eps) / d;
                lo = (0.f - m) / d;
                hi = (1.f - m) / d;
            }
            const int64_t base = (i * c + ch) * sp;
            for (int64_t k = 0; k < sp; ++k) {
                const float gv = g[base + k];
                const float s = gv > 0.f ? 1.f : (gv < 0.f ? -1.f : 0.f);
                out[base + k] = std::clamp(x[base + k] + step * s, lo, hi);
            }
        }
    return out;
}

double cached_layerwise_attack(Model& model, const Dataset& data, double eps, bool inputOnly,
                               int64_t batchSize) {
    if (!inputOnly && model.gradacc_count() == 0)
        throw InputError("cached attack: model has no gradacc insertion points");

    // operate on scratch caches; the model's own states are untouched
    std::vector<GradAccState> saved;
    for (int i = 0; i < model.gradacc_count(); ++i) saved.push_back(model.gradacc(i));
    model.reset_gradacc();

    Tensor inputCache; // sign cache for the input-only variant
    int64_t correct = 0, total = 0;
    BatchStream stream(data, batchSize, /*dropLast=*/false, /*flip=*/false, /*shuffled=*/false, 0);
    stream.start_epoch(0);
    while (auto b = stream.next()) {
        Tensor x = b->x;
        if (inputOnly && inputCache.defined() && inputCache.same_shape(x) && eps != 0.0) {
            for (int64_t i = 0; i < x.size(); ++i)
                x[i] += static_cast<float>(eps) * inputCache[i];
        }

        Tape tape;
        auto bind = model.bind_params(tape);
        FwdCtx ctx = FwdCtx::evalInjected();
        if (inputOnly) {
            ctx.inject = false;
            ctx.withTaps = false;
        }
        Tape::Id xi = tape.input(x);
        if (inputOnly) tape.tap("gin", xi);
        Tape::Id logits = model.forward_logits(tape, bind, xi, ctx);
        correct += [&] {
            const auto pred = argmax(tape.value(logits), 1);
            int64_t ok = 0;
            for (size_t i = 0; i < b->y.size(); ++i) ok += pred[i] == b->y[i];
            return ok;
        }();
        total += static_cast<int64_t>(b->y.size());

        Tape::Id loss = tape.softmax_xent(logits, b->y);
        auto grads = tape.backward(loss, Tensor({1}, {1.f}));
        if (inputOnly) {
            inputCache = sign(grads.tap("gin"));
        } else {
            for (int i = 0; i < model.gradacc_count(); ++i) {
                // fixed per-layer intensity: the published attack tables use
                // raw eps for every layer
                GradAccState s = gradacc_update(GradAccState{}, grads.tap(Model::tap_name(i, "")),
                                                static_cast<float>(eps), /*normalize=*/false);
                model.gradacc(i) = std::move(s);
            }
        }
    }

    for (int i = 0; i < model.gradacc_count(); ++i) model.gradacc(i) = saved[static_cast<size_t>(i)];
    return static_cast<double>(correct) / static_cast<double>(total);
}

EpsSweepReport eps_sweep(Model& model, const Dataset& data, AttackKind attack,
                         std::vector<double> epsList, int64_t batchSize) {
    for (size_t i = 1; i < epsList.size(); ++i)
        if (epsList[i] <= epsList[i - 1])
            throw InputError("eps_sweep: eps list must be strictly increasing");
    if (epsList.empty() || epsList.front() != 0.0) epsList.insert(epsList.begin(), 0.0);

    EpsSweepReport report;
    report.attack = to_string(attack);
    report.model = model.descriptor();
    report.split = data.split == Split::Test ? "test" : "train";

    for (double eps : epsList) {
        double acc = 0.0;
        if (attack == AttackKind::FgsInput) {
            BatchStream stream(data, batchSize, false, false, /*shuffled=*/false, 0);
            stream.start_epoch(0);
            int64_t correct = 0, total = 0;
            while (auto b = stream.next()) {
                const Tensor xAdv = fgs_attack(model, b->x, b->y, eps, data.stats);
                const Tensor logits = model.logits_eval(xAdv);
                const auto pred = argmax(logits, 1);
                for (size_t i = 0; i < b->y.size(); ++i) correct += pred[i] == b->y[i];
                total += static_cast<int64_t>(b->y.size());
            }
            acc = static_cast<double>(correct) / static_cast<double>(total);
        } else {
            acc = cached_layerwise_attack(model, data, eps,
                                          attack == AttackKind::CachedInputOnly, batchSize);
        }
        report.rows.push_back({eps, 100.0 * acc});
    }
    return report;
}

Tensor encoder_jacobian(Model& model, const Tensor& x) {
    return jacobian<float>(
        [&](Tape& tape, Tape::Id xi) {
            auto bind = model.bind_params(tape);
            return model.forward_encoder(tape, bind, xi, FwdCtx::eval());
        },
        x);
}

SpectrumReport singular_spectrum(Model& model, const Dataset& data, int nSamples, int topK) {
    if (nSamples < 1) throw InputError("singular_spectrum: need at least one sample");
    nSamples = static_cast<int>(std::min<int64_t>(nSamples, data.size()));
    const int64_t rowLen = data.images.size() / data.size();
    Shape sampleShape = data.images.shape();
    sampleShape[0] = 1;

    std::vector<double> avg;
    for (int s = 0; s < nSamples; ++s) {
        Tensor x(sampleShape, std::vector<float>(data.images.data() + s * rowLen,
                                                 data.images.data() + (s + 1) * rowLen));
        const Tensor jac = encoder_jacobian(model, x);
        const std::vector<double> sv = singular_values(jac);
        if (avg.empty()) avg.assign(sv.size(), 0.0);
        for (size_t i = 0; i < sv.size(); ++i) avg[i] += sv[i];
    }
    for (double& v : avg) v /= static_cast<double>(nSamples);
    if (static_cast<int>(avg.size()) > topK) avg.resize(static_cast<size_t>(topK));

    SpectrumReport report;
    report.sigma = std::move(avg);
    report.samples = nSamples;
    report.model = model.descriptor();
    return report;
}

BoundCheck bound_check_with(const Tensor& jac, const std::vector<double>& sigma,
                            const Tensor& delta) {
    const int64_t n = jac.extent(0), m = jac.extent(1);
    if (delta.size() != m)
        throw DimensionError("bound check: delta length " + std::to_string(delta.size()) +
                             " vs jacobian columns " + std::to_string(m));
    double lhs2 = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int64_t j = 0; j < m; ++j)
            acc += static_cast<double>(jac[i * m + j]) * static_cast<double>(delta[j]);
        lhs2 += acc * acc;
    }
    double frob2 = 0.0;
    for (double s : sigma) frob2 += s * s;
    BoundCheck r;
    r.lhs = std::sqrt(lhs2);
    r.rhs = std::sqrt(frob2) * l2_norm(delta);
    r.ok = r.lhs <= r.rhs + 1e-9;
    return r;
}

BoundCheck perturbation_bound_check(Model& model, const Tensor& x, const Tensor& delta) {
    const Tensor jac = encoder_jacobian(model, x);
    return bound_check_with(jac, singular_values(jac), delta);
}

Tensor project2d(const Tensor& features) {
    if (features.rank() != 2)
        throw DimensionError("project2d: expects [N x d], got " + shape_str(features.shape()));
    const int64_t n = features.extent(0), d = features.extent(1);

    std::vector<double> mean(static_cast<size_t>(d), 0.0);
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < d; ++j) mean[static_cast<size_t>(j)] += features[i * d + j];
    for (double& m : mean) m /= static_cast<double>(n);

    Tensor64 cov({d, d});
    for (int64_t i = 0; i < n; ++i)
        for (int64_t a = 0; a < d; ++a) {
            const double va = features[i * d + a] - mean[static_cast<size_t>(a)];
            for (int64_t bIdx = a; bIdx < d; ++bIdx) {
                const double vb = features[i * d + bIdx] - mean[static_cast<size_t>(bIdx)];
                cov[a * d + bIdx] += va * vb;
            }
        }
    for (int64_t a = 0; a < d; ++a)
        for (int64_t bIdx = a; bIdx < d; ++bIdx) {
            cov[a * d + bIdx] /= static_cast<double>(n);
            cov[bIdx * d + a] = cov[a * d + bIdx];
        }

    auto svd = jacobi_svd(cov);
    const int64_t take = std::min<int64_t>(2, d);
    Tensor out({n, 2});
    for (int64_t comp = 0; comp < take; ++comp) {
        // deterministic orientation: largest-magnitude loading positive
        double best = 0.0;
        for (int64_t j = 0; j < d; ++j) {
            const double v = svd.v[j * d + comp];
            if (std::abs(v) > std::abs(best)) best = v;
        }
        const double flip = best < 0.0 ? -1.0 : 1.0;
        for (int64_t i = 0; i < n; ++i) {
            double acc = 0.0;
            for (int64_t j = 0; j < d; ++j)
                acc += (features[i * d + j] - mean[static_cast<size_t>(j)]) * svd.v[j * d + comp];
            out[i * 2 + comp] = static_cast<float>(flip * acc);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// report io
// ---------------------------------------------------------------------------

void write_sweep_csv(std::ostream& os, const EpsSweepReport& report) {
    os << "eps,accuracy\n";
    for (const auto& r : report.rows) os << r.eps << ',' << r.accuracy << '\n';
}

std::string sweep_to_json(const EpsSweepReport& report) {
    nlohmann::json j;
    j["kind"] = "eps-sweep";
    j["model"] = report.model;
    j["params"] = {{"attack", report.attack}, {"split", report.split}};
    j["rows"] = nlohmann::json::array();
    for (const auto& r : report.rows) j["rows"].push_back({{"eps", r.eps}, {"accuracy", r.accuracy}});
    return j.dump(2);
}

EpsSweepReport sweep_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    if (j.value("kind", "") != "eps-sweep") throw FormatError("not an eps-sweep report");
    EpsSweepReport report;
    report.model = j.value("model", "");
    report.attack = j["params"].value("attack", "");
    report.split = j["params"].value("split", "test");
    for (const auto& r : j["rows"])
        report.rows.push_back({r.at("eps").get<double>(), r.at("accuracy").get<double>()});
    return report;
}

void write_spectrum_csv(std::ostream& os, const SpectrumReport& report) {
    os << "index,sigma\n";
    for (size_t i = 0; i < report.sigma.size(); ++i) os << i << ',' << report.sigma[i] << '\n';
}

std::string spectrum_to_json(const SpectrumReport& report) {
    nlohmann::json j;
    j["kind"] = "spectrum";
    j["model"] = report.model;
    j["params"] = {{"samples", report.samples}};
    j["rows"] = report.sigma;
    return j.dump(2);
}

SpectrumReport spectrum_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    if (j.value("kind", "") != "spectrum") throw FormatError("not a spectrum report");
    SpectrumReport report;
    report.model = j.value("model", "");
    report.samples = j["params"].value("samples", 0);
    report.sigma = j["rows"].get<std::vector<double>>();
    return report;
}

} // namespace lwat
