#include "lwat/nn.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "lwat/kernels.hpp"
#include "lwat/rng.hpp"
#include "lwat/serialize.hpp"

namespace lwat {

// ---------------------------------------------------------------------------
// gradient accumulation layer
// ---------------------------------------------------------------------------

Tensor gradacc_forward(const GradAccState& state, const Tensor& x) {
    if (!state.active) return x;
    if (!state.r.same_shape(x))
        throw StaleCacheError("gradacc: cached r " + shape_str(state.r.shape()) +
                              " does not match activation " + shape_str(x.shape()) +
                              " (partial batch?)");
    Tensor out(x.shape());
    const float e = state.epsLayer;
    for (int64_t i = 0; i < x.size(); ++i) out[i] = x[i] + e * state.r[i];
    return out;
}

GradAccState gradacc_update(GradAccState state, const Tensor& tapGrad, float epsBase,
                            bool normalize) {
    if (!all_finite(tapGrad))
        throw NumericError("gradacc: non-finite entries in the tap gradient");
    state.r = sign(tapGrad);
    state.epsScale = epsBase;
    if (normalize) {
        const float range = max(tapGrad) - min(tapGrad);
        state.epsLayer = epsBase * range;
    } else {
        state.epsLayer = epsBase;
    }
    state.active = true;
    return state;
}

// ---------------------------------------------------------------------------
// public layer surfaces
// ---------------------------------------------------------------------------

Tensor batchnorm_forward(const Tensor& x, const Tensor& gamma, const Tensor& beta, Mode mode,
                         Tensor& runMean, Tensor& runVar, float momentum, float eps) {
    if (mode == Mode::Eval) return batchnorm_eval(x, gamma, beta, runMean, runVar, eps).y;
    BnForward<float> r = batchnorm_train(x, gamma, beta, eps);
    for (int64_t c = 0; c < runMean.size(); ++c) {
        runMean[c] = momentum * runMean[c] + (1.f - momentum) * r.mean[c];
        runVar[c] = momentum * runVar[c] + (1.f - momentum) * r.var[c];
    }
    return r.y;
}

float softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
    return softmax_xent(logits, labels).loss;
}

// ---------------------------------------------------------------------------
// model
// ---------------------------------------------------------------------------

Model::Model(std::string descriptor, std::vector<LayerSpec> layers, std::vector<Tensor> params,
             std::vector<Tensor> buffers, int gradaccCount)
    : desc_(std::move(descriptor)),
      layers_(std::move(layers)),
      params_(std::move(params)),
      buffers_(std::move(buffers)),
      gradacc_(static_cast<size_t>(gradaccCount)) {
    decayMask_.assign(params_.size(), true);
    for (const LayerSpec& l : layers_)
        if (l.kind == LayerKind::BatchNorm) {
            decayMask_[static_cast<size_t>(l.p0)] = false;
            decayMask_[static_cast<size_t>(l.p1)] = false;
        }
}

void Model::reset_gradacc() {
    for (auto& s : gradacc_) s = GradAccState{};
}

std::string Model::tap_name(int i, const std::string& tag) {
    std::string name = "g" + std::to_string(i);
    if (!tag.empty()) name += "/" + tag;
    return name;
}

Model::ParamBinding Model::bind_params(Tape& tape) const {
    ParamBinding bind;
    bind.reserve(params_.size());
    for (const Tensor& p : params_) bind.push_back(tape.param(p));
    return bind;
}

size_t Model::encoder_end() const {
    for (size_t i = layers_.size(); i-- > 0;)
        if (layers_[i].kind == LayerKind::Fc) return i;
    throw ConfigError("model '" + desc_ + "' has no fc classifier layer");
}

Tape::Id Model::forward_range(Tape& tape, const ParamBinding& bind, Tape::Id x, const FwdCtx& ctx,
                              size_t beginLayer, size_t endLayer) {
    const bool train = ctx.mode == Mode::Train;
    Tape::Id cur = x;
    for (size_t li = beginLayer; li < endLayer; ++li) {
        const LayerSpec& l = layers_[li];
        switch (l.kind) {
            case LayerKind::Fc: {
                const Tensor& v = tape.value(cur);
                if (v.rank() != 2) {
                    const int64_t n = v.extent(0);
                    cur = tape.reshape(cur, {n, v.size() / n});
                }
                cur = tape.add_rowvec(tape.matmul(cur, bind[static_cast<size_t>(l.p0)]),
                                      bind[static_cast<size_t>(l.p1)]);
                break;
            }
            case LayerKind::Conv:
                cur = tape.add_chanvec(tape.conv2d(cur, bind[static_cast<size_t>(l.p0)], l.stride, l.pad),
                                       bind[static_cast<size_t>(l.p1)]);
                break;
            case LayerKind::BatchNorm: {
                if (train) {
                    cur = tape.batchnorm_train(cur, bind[static_cast<size_t>(l.p0)],
                                               bind[static_cast<size_t>(l.p1)], 1e-5f);
                    auto [m, v] = tape.batchnorm_stats(cur);
                    Tensor& rm = buffers_[static_cast<size_t>(l.b0)];
                    Tensor& rv = buffers_[static_cast<size_t>(l.b1)];
                    for (int64_t c = 0; c < rm.size(); ++c) {
                        rm[c] = 0.9f * rm[c] + 0.1f * m[c];
                        rv[c] = 0.9f * rv[c] + 0.1f * v[c];
                    }
                } else {
                    cur = tape.batchnorm_eval(
                        cur, bind[static_cast<size_t>(l.p0)], bind[static_cast<size_t>(l.p1)],
                        tape.constant(buffers_[static_cast<size_t>(l.b0)]),
                        tape.constant(buffers_[static_cast<size_t>(l.b1)]), 1e-5f);
                }
                break;
            }
            case LayerKind::Tanh:
                cur = tape.tanh(cur);
                break;
            case LayerKind::Relu:
                cur = tape.relu(cur);
                break;
            case LayerKind::MaxPool:
                cur = tape.maxpool2d(cur, l.kh, l.kw, l.stride);
                break;
            case LayerKind::Dropout:
                if (train && l.rate > 0.0)
                    cur = tape.dropout(cur, l.rate, counter_hash(ctx.dropoutSeed, li));
                break;
            case LayerKind::GradAcc: {
                const size_t gi = static_cast<size_t>(l.gacc);
                if (ctx.injectOverride) {
                    const Tensor& noise = (*ctx.injectOverride)[gi];
                    if (noise.defined()) {
                        const Tensor& v = tape.value(cur);
                        if (!noise.same_shape(v))
                            throw StaleCacheError("gradacc " + std::to_string(l.gacc) +
                                                  ": injected noise " + shape_str(noise.shape()) +
                                                  " vs activation " + shape_str(v.shape()));
                        cur = tape.add(cur, tape.constant(noise));
                    }
                } else if (ctx.inject) {
                    const GradAccState& s = gradacc_[gi];
                    if (s.active && s.epsLayer != 0.f) {
                        const Tensor& v = tape.value(cur);
                        if (!s.r.same_shape(v))
                            throw StaleCacheError("gradacc " + std::to_string(l.gacc) +
                                                  ": cached r " + shape_str(s.r.shape()) +
                                                  " vs activation " + shape_str(v.shape()));
                        cur = tape.add(cur, tape.constant(scale(s.r, s.epsLayer)));
                    }
                }
                if (ctx.withTaps) tape.tap(tap_name(l.gacc, ctx.tapTag), cur);
                break;
            }
        }
    }
    return cur;
}

Tape::Id Model::forward_logits(Tape& tape, const ParamBinding& bind, Tape::Id x, const FwdCtx& ctx) {
    return forward_range(tape, bind, x, ctx, 0, layers_.size());
}

Tape::Id Model::forward_encoder(Tape& tape, const ParamBinding& bind, Tape::Id x, const FwdCtx& ctx) {
    Tape::Id h = forward_range(tape, bind, x, ctx, 0, encoder_end());
    const Tensor& v = tape.value(h);
    if (v.rank() != 2) {
        const int64_t n = v.extent(0);
        h = tape.reshape(h, {n, v.size() / n});
    }
    return h;
}

Model::Pass Model::forward_loss(Tape& tape, const ParamBinding& bind, const Tensor& x,
                                const std::vector<int>& labels, const FwdCtx& ctx) {
    Pass p{};
    p.input = tape.input(x);
    p.logits = forward_logits(tape, bind, p.input, ctx);
    p.loss = tape.softmax_xent(p.logits, labels);
    return p;
}

Tensor Model::logits_eval(const Tensor& x) {
    Tape tape;
    ParamBinding bind = bind_params(tape);
    const Tape::Id id = forward_logits(tape, bind, tape.input(x), FwdCtx::eval());
    return tape.value(id);
}

// ---------------------------------------------------------------------------
// factory
// ---------------------------------------------------------------------------

namespace {

struct Builder {
    std::vector<LayerSpec> layers;
    std::vector<Tensor> params;
    std::vector<Tensor> buffers;
    int gaccCount = 0;
    Rng rng;
    bool reluGain; // kaiming for relu nets, xavier for tanh nets

    explicit Builder(uint64_t seed, bool reluInit) : rng(seed), reluGain(reluInit) {}

    Tensor uniform_init(Shape shape, double bound) {
        Tensor t(std::move(shape));
        for (int64_t i = 0; i < t.size(); ++i)
            t[i] = static_cast<float>(rng.uniform(-bound, bound));
        return t;
    }

    void fc(int64_t in, int64_t out) {
        const double bound = reluGain ? std::sqrt(6.0 / static_cast<double>(in))
                                      : std::sqrt(6.0 / static_cast<double>(in + out));
        LayerSpec l{LayerKind::Fc};
        l.in = in;
        l.out = out;
        l.p0 = static_cast<int>(params.size());
        params.push_back(uniform_init({in, out}, bound)); // stored input-major
        l.p1 = static_cast<int>(params.size());
        params.push_back(Tensor({out}));
        layers.push_back(l);
    }

    void conv(int64_t in, int64_t out, int64_t k, int64_t stride, int64_t pad) {
        const int64_t fanIn = in * k * k;
        const double bound = reluGain ? std::sqrt(6.0 / static_cast<double>(fanIn))
                                      : std::sqrt(6.0 / static_cast<double>(fanIn + out * k * k));
        LayerSpec l{LayerKind::Conv};
        l.in = in;
        l.out = out;
        l.kh = l.kw = k;
        l.stride = stride;
        l.pad = pad;
        l.p0 = static_cast<int>(params.size());
        params.push_back(uniform_init({out, in, k, k}, bound));
        l.p1 = static_cast<int>(params.size());
        params.push_back(Tensor({out}));
        layers.push_back(l);
    }

    void batchnorm(int64_t c) {
        LayerSpec l{LayerKind::BatchNorm};
        l.in = l.out = c;
        l.p0 = static_cast<int>(params.size());
        params.push_back(Tensor::ones({c}));
        l.p1 = static_cast<int>(params.size());
        params.push_back(Tensor({c}));
        l.b0 = static_cast<int>(buffers.size());
        buffers.push_back(Tensor({c}));
        l.b1 = static_cast<int>(buffers.size());
        buffers.push_back(Tensor::ones({c}));
        layers.push_back(l);
    }

    void act(LayerKind k) { layers.push_back(LayerSpec{k}); }

    void pool(int64_t k, int64_t stride) {
        LayerSpec l{LayerKind::MaxPool};
        l.kh = l.kw = k;
        l.stride = stride;
        layers.push_back(l);
    }

    void dropout(double rate) {
        if (rate <= 0.0) return;
        if (rate >= 1.0) throw ConfigError("dropout rate must be in [0,1)");
        LayerSpec l{LayerKind::Dropout};
        l.rate = rate;
        layers.push_back(l);
    }

    void gradacc(bool enabled) {
        if (!enabled) return;
        LayerSpec l{LayerKind::GradAcc};
        l.gacc = gaccCount++;
        layers.push_back(l);
    }
};

int64_t parse_i64(const std::string& v, const std::string& key) {
    try {
        return std::stoll(v);
    } catch (...) {
        throw ConfigError("bad integer for '" + key + "': " + v);
    }
}

} // namespace

Model build_model(const std::string& arch, const BuildOptions& optsIn) {
    BuildOptions opts = optsIn;
    std::string name = arch;

    // Full descriptors round-trip through here (checkpoint loading).
    if (arch.find(',') != std::string::npos) {
        std::stringstream ss(arch);
        std::string tok;
        std::getline(ss, tok, ',');
        name = tok;
        while (std::getline(ss, tok, ',')) {
            const auto eq = tok.find('=');
            if (eq == std::string::npos) throw ConfigError("bad descriptor field: " + tok);
            const std::string k = tok.substr(0, eq), v = tok.substr(eq + 1);
            if (k == "in")
                opts.inputChannels = opts.inputDim = parse_i64(v, k);
            else if (k == "c")
                opts.classes = parse_i64(v, k);
            else if (k == "gacc")
                opts.gradaccPrefix = static_cast<int>(parse_i64(v, k));
            else if (k == "drop")
                opts.dropout = std::stod(v);
            else if (k == "w") {
                std::stringstream ws(v);
                std::string wtok;
                for (auto& slot : opts.convWidths) {
                    if (!std::getline(ws, wtok, ':')) throw ConfigError("descriptor w= needs 3 widths");
                    slot = parse_i64(wtok, k);
                }
            } else {
                throw ConfigError("unknown descriptor field '" + k + "'");
            }
        }
    }

    auto gaccOn = [&](int slot, int total) {
        const int prefix = opts.gradaccPrefix < 0 ? total : opts.gradaccPrefix;
        if (prefix > total)
            throw ConfigError("gradacc prefix " + std::to_string(prefix) + " exceeds " +
                              std::to_string(total) + " insertion points");
        return slot < prefix;
    };

    if (name == "toy-fc") {
        Builder b(opts.seed, /*reluInit=*/false);
        b.fc(opts.inputDim, 1024);
        b.gradacc(gaccOn(0, 2));
        b.act(LayerKind::Tanh);
        b.fc(1024, 512);
        b.gradacc(gaccOn(1, 2));
        b.act(LayerKind::Tanh);
        b.dropout(opts.dropout);
        b.fc(512, opts.classes);
        std::ostringstream d;
        d << "toy-fc,in=" << opts.inputDim << ",c=" << opts.classes << ",gacc=" << b.gaccCount
          << ",drop=" << opts.dropout;
        return Model(d.str(), std::move(b.layers), std::move(b.params), std::move(b.buffers),
                     b.gaccCount);
    }

    if (name == "small-conv") {
        Builder b(opts.seed, /*reluInit=*/true);
        int64_t c = opts.inputChannels;
        for (int blk = 0; blk < 3; ++blk) {
            const int64_t w = opts.convWidths[static_cast<size_t>(blk)];
            b.conv(c, w, 3, 1, 1);
            b.batchnorm(w);
            b.gradacc(gaccOn(blk, 3));
            b.act(LayerKind::Relu);
            b.pool(2, 2);
            c = w;
        }
        b.dropout(opts.dropout);
        b.fc(c * 4 * 4, opts.classes); // 32x32 input pooled three times
        std::ostringstream d;
        d << "small-conv,in=" << opts.inputChannels << ",c=" << opts.classes << ",w="
          << opts.convWidths[0] << ":" << opts.convWidths[1] << ":" << opts.convWidths[2]
          << ",gacc=" << b.gaccCount << ",drop=" << opts.dropout;
        return Model(d.str(), std::move(b.layers), std::move(b.params), std::move(b.buffers),
                     b.gaccCount);
    }

    throw ConfigError("unknown architecture '" + name + "'");
}

// ---------------------------------------------------------------------------
// checkpoints
// ---------------------------------------------------------------------------

namespace {
constexpr char kCheckpointMagic[4] = {'L', 'W', 'C', 'K'};
constexpr uint8_t kCheckpointVersion = 1;
} // namespace

void save_checkpoint(const std::string& path, const Model& model) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for write: " + path);
    os.write(kCheckpointMagic, 4);
    os.put(static_cast<char>(kCheckpointVersion));
    const std::string& d = model.descriptor();
    wire::put_u32(os, static_cast<uint32_t>(d.size()));
    os.write(d.data(), static_cast<std::streamsize>(d.size()));
    for (const Tensor& p : model.params()) save_tensor(os, p);
    for (const Tensor& b : model.buffers()) save_tensor(os, b);
    if (!os) throw IoError("checkpoint write failed: " + path);
}

Model load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open for read: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kCheckpointMagic, 4) != 0)
        throw FormatError("checkpoint: bad magic (expected LWCK): " + path);
    const int version = is.get();
    if (version != kCheckpointVersion)
        throw FormatError("checkpoint: unsupported version " + std::to_string(version));
    const uint32_t dlen = wire::get_u32(is);
    std::string desc(dlen, '\0');
    is.read(desc.data(), dlen);
    if (!is) throw FormatError("checkpoint: truncated descriptor");

    BuildOptions opts;
    Model model = build_model(desc, opts);
    for (Tensor& p : model.params()) {
        Tensor t = load_tensor(is);
        if (!t.same_shape(p))
            throw FormatError("checkpoint: parameter shape " + shape_str(t.shape()) +
                              " does not match " + shape_str(p.shape()));
        p = std::move(t);
    }
    for (Tensor& b : model.buffers()) {
        Tensor t = load_tensor(is);
        if (!t.same_shape(b))
            throw FormatError("checkpoint: buffer shape " + shape_str(t.shape()) +
                              " does not match " + shape_str(b.shape()));
        b = std::move(t);
    }
    return model;
}

} // namespace lwat
