#ifndef LWAT_AUTODIFF_HPP
#define LWAT_AUTODIFF_HPP

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lwat/errors.hpp"
#include "lwat/kernels.hpp"
#include "lwat/rng.hpp"
#include "lwat/tensor.hpp"

// Reverse-mode differentiation over a recorded forward pass. Values carry
// integer ids; named taps expose the loss gradient at arbitrary
// intermediate activations after a backward sweep.

namespace lwat {

template <typename T>
struct GradientSetT {
    std::vector<TensorT<T>> paramGrads;          // by param registration order
    std::map<std::string, TensorT<T>> tapGrads;  // by tap name

    const TensorT<T>& tap(const std::string& name) const {
        auto it = tapGrads.find(name);
        if (it == tapGrads.end()) throw InputError("no tap gradient named '" + name + "'");
        return it->second;
    }
};

using GradientSet = GradientSetT<float>;

enum class Op : uint8_t {
    Leaf,
    MatMul,
    Add,
    Mul,
    AddRowVec,
    AddChanVec,
    Scale,
    Tanh,
    Relu,
    Reshape,
    Conv2d,
    MaxPool2d,
    BatchNormTrain,
    BatchNormEval,
    Dropout,
    SoftmaxXent,
};

struct OpAttrs {
    int64_t i0 = 0, i1 = 0, i2 = 0; // stride/pad or kh/kw/stride
    double s0 = 0.0;                // scale factor, dropout rate, bn eps
    Shape shape;                    // reshape target
    std::vector<int> labels;        // softmax_xent
    uint64_t seed = 0;              // dropout mask stream
};

template <typename T>
class TapeT {
public:
    using Id = int32_t;

    // --- leaves ---
    Id input(TensorT<T> v) { return push_value(std::move(v)); }

    Id constant(TensorT<T> v) { return push_value(std::move(v)); }

    Id param(TensorT<T> v) {
        const Id id = push_value(std::move(v));
        paramIds_.push_back(id);
        return id;
    }

    // --- primitives ---
    Id matmul(Id a, Id b) { return emit(Op::MatMul, {a, b}, {}); }
    Id add(Id a, Id b) { return emit(Op::Add, {a, b}, {}); }
    Id mul(Id a, Id b) { return emit(Op::Mul, {a, b}, {}); }
    Id add_rowvec(Id x, Id b) { return emit(Op::AddRowVec, {x, b}, {}); }
    Id add_chanvec(Id x, Id b) { return emit(Op::AddChanVec, {x, b}, {}); }
    Id scale(Id a, T s) {
        OpAttrs at;
        at.s0 = static_cast<double>(s);
        return emit(Op::Scale, {a}, at);
    }
    Id tanh(Id a) { return emit(Op::Tanh, {a}, {}); }
    Id relu(Id a) { return emit(Op::Relu, {a}, {}); }
    Id reshape(Id a, Shape s) {
        OpAttrs at;
        at.shape = std::move(s);
        return emit(Op::Reshape, {a}, at);
    }
    Id conv2d(Id x, Id k, int64_t stride, int64_t pad) {
        OpAttrs at;
        at.i0 = stride;
        at.i1 = pad;
        return emit(Op::Conv2d, {x, k}, at);
    }
    Id maxpool2d(Id x, int64_t kh, int64_t kw, int64_t stride) {
        OpAttrs at;
        at.i0 = kh;
        at.i1 = kw;
        at.i2 = stride;
        return emit(Op::MaxPool2d, {x}, at);
    }
    Id batchnorm_train(Id x, Id gamma, Id beta, T eps) {
        OpAttrs at;
        at.s0 = static_cast<double>(eps);
        return emit(Op::BatchNormTrain, {x, gamma, beta}, at);
    }
    // Running stats enter as constants: no gradient flows into them.
    Id batchnorm_eval(Id x, Id gamma, Id beta, Id runMean, Id runVar, T eps) {
        OpAttrs at;
        at.s0 = static_cast<double>(eps);
        return emit(Op::BatchNormEval, {x, gamma, beta, runMean, runVar}, at);
    }
    Id dropout(Id x, double rate, uint64_t maskSeed) {
        if (rate < 0.0 || rate >= 1.0) throw InputError("dropout: rate must be in [0,1)");
        OpAttrs at;
        at.s0 = rate;
        at.seed = maskSeed;
        return emit(Op::Dropout, {x}, at);
    }
    Id softmax_xent(Id logits, std::vector<int> labels) {
        OpAttrs at;
        at.labels = std::move(labels);
        return emit(Op::SoftmaxXent, {logits}, at);
    }

    // Name-keyed dispatch into the primitive registry; the entry point for
    // callers that assemble graphs generically.
    Id apply(std::string_view name, const std::vector<Id>& in, const OpAttrs& attrs = {}) {
        const Op op = lookup_op(name);
        return emit(op, in, attrs);
    }

    static bool is_registered(std::string_view name) {
        for (const auto& e : op_names())
            if (name == e.first) return true;
        return false;
    }

    // --- taps ---
    void tap(const std::string& name, Id v) {
        if (taps_.count(name)) throw InputError("tap '" + name + "' registered twice in one pass");
        taps_[name] = v;
    }
    const std::map<std::string, Id>& taps() const { return taps_; }

    // --- access ---
    const TensorT<T>& value(Id id) const { return values_[static_cast<size_t>(id)]; }
    size_t num_nodes() const { return nodes_.size(); }
    size_t num_values() const { return values_.size(); }
    size_t num_params() const { return paramIds_.size(); }
    Id output() const { return outputId_; }
    void set_output(Id id) { outputId_ = id; }

    // Batch statistics saved by the batchnorm_train node that produced
    // `bnOut`; used by callers that fold them into running buffers.
    std::pair<const TensorT<T>&, const TensorT<T>&> batchnorm_stats(Id bnOut) const {
        for (const Node& nd : nodes_)
            if (nd.out == bnOut && nd.op == Op::BatchNormTrain)
                return {nd.saved[2], nd.saved[3]};
        throw InputError("batchnorm_stats: id does not name a batchnorm_train output");
    }

    // Re-executes every recorded node from the stored leaf values.
    TensorT<T> replay() {
        for (Node& nd : nodes_) forward_node(nd);
        if (outputId_ < 0) throw InputError("replay: no output recorded");
        return values_[static_cast<size_t>(outputId_)];
    }

    // Reverse sweep from `out` seeded with `seed`; returns gradients for all
    // params plus the adjoints at every registered tap. Linear in `seed`.
    GradientSetT<T> backward(Id out, const TensorT<T>& seed) const {
        const TensorT<T>& ov = values_[static_cast<size_t>(out)];
        if (!seed.same_shape(ov))
            throw DimensionError("backward: seed shape " + shape_str(seed.shape()) +
                                 " does not match output " + shape_str(ov.shape()));
        std::vector<TensorT<T>> adj(values_.size());
        adj[static_cast<size_t>(out)] = seed;
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
            const Node& nd = *it;
            const TensorT<T>& g = adj[static_cast<size_t>(nd.out)];
            if (!g.defined()) continue;
            backward_node(nd, g, adj);
        }
        GradientSetT<T> gs;
        gs.paramGrads.reserve(paramIds_.size());
        for (Id pid : paramIds_) {
            TensorT<T>& a = adj[static_cast<size_t>(pid)];
            gs.paramGrads.push_back(a.defined() ? std::move(a)
                                                : TensorT<T>(values_[static_cast<size_t>(pid)].shape()));
        }
        for (const auto& [name, id] : taps_) {
            TensorT<T>& a = adj[static_cast<size_t>(id)];
            gs.tapGrads[name] = a.defined() ? std::move(a)
                                            : TensorT<T>(values_[static_cast<size_t>(id)].shape());
        }
        return gs;
    }

    GradientSetT<T> backward(const TensorT<T>& seed) const { return backward(outputId_, seed); }

private:
    struct Node {
        Op op;
        std::vector<Id> in;
        Id out;
        OpAttrs attrs;
        // saved forward state for the backward pass
        std::vector<TensorT<T>> saved;
        std::vector<TensorT<T>> cols;
        std::vector<int64_t> argmax;
    };

    static const std::vector<std::pair<std::string_view, Op>>& op_names() {
        static const std::vector<std::pair<std::string_view, Op>> table = {
            {"matmul", Op::MatMul},
            {"add", Op::Add},
            {"mul", Op::Mul},
            {"add_rowvec", Op::AddRowVec},
            {"add_chanvec", Op::AddChanVec},
            {"scale", Op::Scale},
            {"tanh", Op::Tanh},
            {"relu", Op::Relu},
            {"reshape", Op::Reshape},
            {"conv2d", Op::Conv2d},
            {"maxpool2d", Op::MaxPool2d},
            {"batchnorm_train", Op::BatchNormTrain},
            {"batchnorm_eval", Op::BatchNormEval},
            {"dropout", Op::Dropout},
            {"softmax_xent", Op::SoftmaxXent},
        };
        return table;
    }

    static Op lookup_op(std::string_view name) {
        for (const auto& e : op_names())
            if (name == e.first) return e.second;
        throw UnsupportedOpError("primitive '" + std::string(name) + "' is not registered");
    }

    Id push_value(TensorT<T> v) {
        values_.push_back(std::move(v));
        return static_cast<Id>(values_.size() - 1);
    }

    Id emit(Op op, std::vector<Id> in, OpAttrs attrs) {
        nodes_.push_back(Node{op, std::move(in), -1, std::move(attrs), {}, {}, {}});
        Node& nd = nodes_.back();
        nd.out = push_value(TensorT<T>());
        forward_node(nd);
        return nd.out;
    }

    const TensorT<T>& in_val(const Node& nd, size_t i) const {
        return values_[static_cast<size_t>(nd.in[i])];
    }

    void forward_node(Node& nd) {
        TensorT<T>& out = values_[static_cast<size_t>(nd.out)];
        switch (nd.op) {
            case Op::MatMul:
                out = lwat::matmul(in_val(nd, 0), in_val(nd, 1));
                break;
            case Op::Add:
                out = lwat::add(in_val(nd, 0), in_val(nd, 1));
                break;
            case Op::Mul:
                out = lwat::mul(in_val(nd, 0), in_val(nd, 1));
                break;
            case Op::AddRowVec:
                out = lwat::add_rowvec(in_val(nd, 0), in_val(nd, 1));
                break;
            case Op::AddChanVec:
                out = lwat::add_chanvec(in_val(nd, 0), in_val(nd, 1));
                break;
            case Op::Scale:
                out = lwat::scale(in_val(nd, 0), static_cast<T>(nd.attrs.s0));
                break;
            case Op::Tanh:
                out = lwat::tanh_t(in_val(nd, 0));
                break;
            case Op::Relu:
                out = lwat::relu(in_val(nd, 0));
                break;
            case Op::Reshape:
                out = in_val(nd, 0).reshaped(nd.attrs.shape);
                break;
            case Op::Conv2d:
                out = lwat::conv2d(in_val(nd, 0), in_val(nd, 1), nd.attrs.i0, nd.attrs.i1, &nd.cols);
                break;
            case Op::MaxPool2d: {
                auto r = lwat::maxpool2d(in_val(nd, 0), nd.attrs.i0, nd.attrs.i1, nd.attrs.i2);
                out = std::move(r.y);
                nd.argmax = std::move(r.argmax);
                break;
            }
            case Op::BatchNormTrain: {
                auto r = lwat::batchnorm_train(in_val(nd, 0), in_val(nd, 1), in_val(nd, 2),
                                               static_cast<T>(nd.attrs.s0));
                out = std::move(r.y);
                nd.saved.clear();
                nd.saved.push_back(std::move(r.xhat));
                nd.saved.push_back(std::move(r.rstd));
                nd.saved.push_back(std::move(r.mean));
                nd.saved.push_back(std::move(r.var));
                break;
            }
            case Op::BatchNormEval: {
                auto r = lwat::batchnorm_eval(in_val(nd, 0), in_val(nd, 1), in_val(nd, 2),
                                              in_val(nd, 3), in_val(nd, 4),
                                              static_cast<T>(nd.attrs.s0));
                out = std::move(r.y);
                nd.saved.clear();
                nd.saved.push_back(std::move(r.xhat));
                nd.saved.push_back(std::move(r.rstd));
                break;
            }
            case Op::Dropout: {
                const TensorT<T>& x = in_val(nd, 0);
                if (nd.saved.empty()) { // masks survive replay bit-exactly
                    Rng rng(nd.attrs.seed);
                    const T keepScale = static_cast<T>(1.0 / (1.0 - nd.attrs.s0));
                    TensorT<T> mask(x.shape());
                    for (int64_t i = 0; i < mask.size(); ++i)
                        mask[i] = rng.uniform() < nd.attrs.s0 ? T{0} : keepScale;
                    nd.saved.push_back(std::move(mask));
                }
                out = lwat::mul(x, nd.saved[0]);
                break;
            }
            case Op::SoftmaxXent: {
                auto r = lwat::softmax_xent(in_val(nd, 0), nd.attrs.labels);
                out = TensorT<T>({1}, {r.loss});
                nd.saved.clear();
                nd.saved.push_back(std::move(r.probs));
                break;
            }
            default:
                throw UnsupportedOpError("node references an unregistered primitive");
        }
    }

    static void accumulate(std::vector<TensorT<T>>& adj, Id id, TensorT<T> g) {
        TensorT<T>& slot = adj[static_cast<size_t>(id)];
        if (!slot.defined()) {
            slot = std::move(g);
            return;
        }
        detail::require_same_shape(slot, g, "adjoint accumulate");
        for (int64_t i = 0; i < slot.size(); ++i) slot[i] += g[i];
    }

    void backward_node(const Node& nd, const TensorT<T>& g, std::vector<TensorT<T>>& adj) const {
        switch (nd.op) {
            case Op::MatMul:
                accumulate(adj, nd.in[0], matmul_nt(g, in_val(nd, 1)));
                accumulate(adj, nd.in[1], matmul_tn(in_val(nd, 0), g));
                break;
            case Op::Add:
                accumulate(adj, nd.in[0], g);
                accumulate(adj, nd.in[1], g);
                break;
            case Op::Mul:
                accumulate(adj, nd.in[0], lwat::mul(g, in_val(nd, 1)));
                accumulate(adj, nd.in[1], lwat::mul(g, in_val(nd, 0)));
                break;
            case Op::AddRowVec:
                accumulate(adj, nd.in[0], g);
                accumulate(adj, nd.in[1], rowvec_sum(g));
                break;
            case Op::AddChanVec:
                accumulate(adj, nd.in[0], g);
                accumulate(adj, nd.in[1], chan_sum(g));
                break;
            case Op::Scale:
                accumulate(adj, nd.in[0], lwat::scale(g, static_cast<T>(nd.attrs.s0)));
                break;
            case Op::Tanh: {
                const TensorT<T>& y = values_[static_cast<size_t>(nd.out)];
                accumulate(adj, nd.in[0],
                           zip(g, y, [](T gv, T yv) { return gv * (T{1} - yv * yv); }));
                break;
            }
            case Op::Relu: {
                const TensorT<T>& x = in_val(nd, 0);
                // subgradient at exactly 0 is 0
                accumulate(adj, nd.in[0], zip(g, x, [](T gv, T xv) { return xv > T{0} ? gv : T{0}; }));
                break;
            }
            case Op::Reshape:
                accumulate(adj, nd.in[0], g.reshaped(in_val(nd, 0).shape()));
                break;
            case Op::Conv2d: {
                TensorT<T> gin, gk;
                conv2d_backward(g, in_val(nd, 1), in_val(nd, 0).shape(), nd.cols, nd.attrs.i0,
                                nd.attrs.i1, gin, gk);
                accumulate(adj, nd.in[0], std::move(gin));
                accumulate(adj, nd.in[1], std::move(gk));
                break;
            }
            case Op::MaxPool2d:
                accumulate(adj, nd.in[0], maxpool2d_backward(g, in_val(nd, 0).shape(), nd.argmax));
                break;
            case Op::BatchNormTrain: {
                auto r = batchnorm_backward_train(g, in_val(nd, 1), nd.saved[0], nd.saved[1]);
                accumulate(adj, nd.in[0], std::move(r.gx));
                accumulate(adj, nd.in[1], std::move(r.ggamma));
                accumulate(adj, nd.in[2], std::move(r.gbeta));
                break;
            }
            case Op::BatchNormEval: {
                auto r = batchnorm_backward_eval(g, in_val(nd, 1), nd.saved[0], nd.saved[1]);
                accumulate(adj, nd.in[0], std::move(r.gx));
                accumulate(adj, nd.in[1], std::move(r.ggamma));
                accumulate(adj, nd.in[2], std::move(r.gbeta));
                break;
            }
            case Op::Dropout:
                accumulate(adj, nd.in[0], lwat::mul(g, nd.saved[0]));
                break;
            case Op::SoftmaxXent:
                accumulate(adj, nd.in[0], softmax_xent_backward(g[0], nd.saved[0], nd.attrs.labels));
                break;
            default:
                throw UnsupportedOpError("node references an unregistered primitive");
        }
    }

    std::vector<TensorT<T>> values_;
    std::vector<Node> nodes_;
    std::vector<Id> paramIds_;
    std::map<std::string, Id> taps_;
    Id outputId_ = -1;
};

using Tape = TapeT<float>;
using Tape64 = TapeT<double>;

// Records a forward closure: build(tape) returns the output id.
template <typename T, typename F>
std::pair<TensorT<T>, TapeT<T>> record(F&& build) {
    TapeT<T> tape;
    const typename TapeT<T>::Id out = build(tape);
    tape.set_output(out);
    return {tape.value(out), std::move(tape)};
}

// Full Jacobian of a vector-valued closure at x, one reverse pass per output
// coordinate (one-hot seeds). encode(tape, xId) -> output id; output must be
// a vector ([n] or [1 x n]).
template <typename T, typename F>
TensorT<T> jacobian(F&& encode, const TensorT<T>& x) {
    TapeT<T> tape;
    const typename TapeT<T>::Id xid = tape.input(x);
    tape.tap("__jac_input", xid);
    const typename TapeT<T>::Id out = encode(tape, xid);
    const TensorT<T>& ov = tape.value(out);
    const bool isVec = ov.rank() == 1 || (ov.rank() == 2 && ov.extent(0) == 1);
    if (!isVec)
        throw DimensionError("jacobian: output must be a vector, got " + shape_str(ov.shape()));
    const int64_t n = ov.size();
    const int64_t m = x.size();
    TensorT<T> jac({n, m});
    for (int64_t i = 0; i < n; ++i) {
        TensorT<T> seed(ov.shape());
        seed[i] = T{1};
        GradientSetT<T> gs = tape.backward(out, seed);
        const TensorT<T>& row = gs.tapGrads.at("__jac_input");
        std::copy(row.data(), row.data() + m, jac.data() + i * m);
    }
    return jac;
}

} // namespace lwat

#endif // LWAT_AUTODIFF_HPP
