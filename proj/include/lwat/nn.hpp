#ifndef LWAT_NN_HPP
#define LWAT_NN_HPP

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "lwat/autodiff.hpp"
#include "lwat/tensor.hpp"

namespace lwat {

enum class Mode { Train, Eval };

enum class LayerKind { Fc, Conv, BatchNorm, Tanh, Relu, MaxPool, Dropout, GradAcc };

struct LayerSpec {
    LayerKind kind;
    int64_t in = 0, out = 0;                       // fc dims / conv channels
    int64_t kh = 0, kw = 0, stride = 1, pad = 0;   // conv / pool geometry
    double rate = 0.0;                             // dropout
    // slots resolved at build time
    int p0 = -1, p1 = -1;                          // weight/bias or gamma/beta
    int b0 = -1, b1 = -1;                          // bn running mean/var
    int gacc = -1;                                 // gradacc state slot
};

// Cached sign-gradient perturbation for one insertion point.
// r entries are in {-1, 0, +1}; the injected perturbation is epsLayer * r,
// so its inf-norm is bounded by epsLayer exactly.
struct GradAccState {
    Tensor r;
    float epsScale = 0.f;  // base epsilon
    float epsLayer = 0.f;  // normalized per-layer epsilon
    bool active = false;
};

// Injection: active -> x + epsLayer * r, otherwise x unchanged bitwise.
Tensor gradacc_forward(const GradAccState& state, const Tensor& x);

// Cache refresh from the backward tap: r <- sign(tapGrad) and
// epsLayer <- epsBase * (max - min) over the tap gradient; with
// normalization disabled epsLayer is epsBase for every layer.
GradAccState gradacc_update(GradAccState state, const Tensor& tapGrad, float epsBase,
                            bool normalize = true);

// Public batchnorm surface; train mode also folds the batch statistics into
// the running buffers with the given momentum.
Tensor batchnorm_forward(const Tensor& x, const Tensor& gamma, const Tensor& beta, Mode mode,
                         Tensor& runMean, Tensor& runVar, float momentum = 0.9f,
                         float eps = 1e-5f);

// Mean cross-entropy after a stabilized softmax.
float softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels);

// Forward behavior switches. Injection only ever happens for active states
// with a nonzero epsLayer.
struct FwdCtx {
    Mode mode = Mode::Train;
    bool inject = true;      // honor active gradacc caches
    bool withTaps = true;    // register g<i> taps at gradacc outputs
    std::string tapTag;      // tap names become g<i>/<tag> when non-empty
    uint64_t dropoutSeed = 0;
    // when set, entry i is added at insertion point i instead of the cached
    // sign perturbation (random-noise baseline)
    const std::vector<Tensor>* injectOverride = nullptr;

    static FwdCtx train(uint64_t dropSeed) { return {Mode::Train, true, true, "", dropSeed, nullptr}; }
    static FwdCtx eval() { return {Mode::Eval, false, false, "", 0, nullptr}; }
    // eval-time behavior with cached perturbations re-enabled (attack mode)
    static FwdCtx evalInjected() { return {Mode::Eval, true, true, "", 0, nullptr}; }
};

class Model {
public:
    Model() = default;
    Model(std::string descriptor, std::vector<LayerSpec> layers, std::vector<Tensor> params,
          std::vector<Tensor> buffers, int gradaccCount);

    const std::string& descriptor() const { return desc_; }
    const std::vector<LayerSpec>& layers() const { return layers_; }

    std::vector<Tensor>& params() { return params_; }
    const std::vector<Tensor>& params() const { return params_; }
    std::vector<Tensor>& buffers() { return buffers_; }
    const std::vector<Tensor>& buffers() const { return buffers_; }
    // true where weight decay applies (everything except bn gamma/beta)
    const std::vector<bool>& decay_mask() const { return decayMask_; }

    Mode mode() const { return mode_; }
    void set_mode(Mode m) { mode_ = m; }

    int gradacc_count() const { return static_cast<int>(gradacc_.size()); }
    GradAccState& gradacc(int i) { return gradacc_[static_cast<size_t>(i)]; }
    const GradAccState& gradacc(int i) const { return gradacc_[static_cast<size_t>(i)]; }
    void reset_gradacc();
    static std::string tap_name(int i, const std::string& tag);

    // Registers every parameter on the tape once; ids align with params()
    // and with GradientSet::paramGrads. Passes sharing a tape share the
    // binding so joint losses accumulate into one gradient set.
    using ParamBinding = std::vector<Tape::Id>;
    ParamBinding bind_params(Tape& tape) const;

    // Builds the full graph; x must match the architecture's input layout
    // (rank-4 images or pre-flattened rows). Returns the logits id.
    Tape::Id forward_logits(Tape& tape, const ParamBinding& bind, Tape::Id x, const FwdCtx& ctx);

    // Network through the last hidden activation, flattened to [N x d].
    Tape::Id forward_encoder(Tape& tape, const ParamBinding& bind, Tape::Id x, const FwdCtx& ctx);

    struct Pass {
        Tape::Id input;
        Tape::Id logits;
        Tape::Id loss;
    };
    Pass forward_loss(Tape& tape, const ParamBinding& bind, const Tensor& x,
                      const std::vector<int>& labels, const FwdCtx& ctx);

    // Plain eval-mode logits (no taps, no injection).
    Tensor logits_eval(const Tensor& x);

private:
    Tape::Id forward_range(Tape& tape, const ParamBinding& bind, Tape::Id x, const FwdCtx& ctx,
                           size_t beginLayer, size_t endLayer);
    size_t encoder_end() const; // index of the final fc layer

    std::string desc_;
    std::vector<LayerSpec> layers_;
    std::vector<Tensor> params_;
    std::vector<Tensor> buffers_;
    std::vector<bool> decayMask_;
    std::vector<GradAccState> gradacc_;
    Mode mode_ = Mode::Train;
};

struct BuildOptions {
    int64_t classes = 10;
    int64_t inputChannels = 3;                    // small-conv
    int64_t inputDim = 1024;                      // toy-fc (gray 32x32)
    int gradaccPrefix = -1;                       // -1 -> every insertion point
    std::array<int64_t, 3> convWidths = {16, 32, 64};
    double dropout = 0.0;                         // toy-scale ablation only
    uint64_t seed = 0;
};

// Architectures: "toy-fc" (fc 1024 - tanh - fc 512 - tanh - fc C, insertion
// after each hidden fc) and "small-conv" (3 conv-bn-relu-pool blocks + fc,
// insertion after each bn). Also accepts a full descriptor string as
// produced by Model::descriptor().
Model build_model(const std::string& arch, const BuildOptions& opts = {});

// Checkpoints: magic "LWCK", u8 version, length-prefixed descriptor, then
// params and buffers in registration order. GradAccState is not persisted.
void save_checkpoint(const std::string& path, const Model& model);
Model load_checkpoint(const std::string& path);

} // namespace lwat

#endif // LWAT_NN_HPP
