#include <doctest.h>

#include <cstring>

#include "lwat/autodiff.hpp"
#include "support/oracles.hpp"

using namespace lwat;
using lwat::testing::fd_gradient;
using lwat::testing::max_rel_err;
using lwat::testing::random_tensor;

TEST_SUITE_BEGIN("autodiff");

TEST_CASE("record identity closure") {
    Tensor x({2}, {3, 4});
    auto [out, tape] = record<float>([&](Tape& t) { return t.input(x); });
    CHECK(tape.num_values() == 1);
    CHECK(tape.num_nodes() == 0);
    CHECK(out[0] == 3.f);
    Tensor rep = tape.replay();
    CHECK(std::memcmp(rep.data(), out.data(), sizeof(float) * out.size()) == 0);
}

TEST_CASE("record tanh(Wx+b) has 3 nodes in topological order") {
    Rng rng(1);
    Tensor w = random_tensor<float>({3, 4}, rng);
    Tensor x = random_tensor<float>({4, 1}, rng);
    Tensor b = random_tensor<float>({3}, rng);
    auto [out, tape] = record<float>([&](Tape& t) {
        auto h = t.matmul(t.param(w), t.input(x));
        auto hb = t.add_rowvec(t.reshape(h, {1, 3}), t.param(b));
        return t.tanh(hb);
    });
    CHECK(tape.num_nodes() == 4); // matmul, reshape, add_rowvec, tanh
    Tensor rep = tape.replay();
    CHECK(std::memcmp(rep.data(), out.data(), sizeof(float) * out.size()) == 0);
}

TEST_CASE("backward of x squared at 3") {
    Tensor x({1}, {3.f});
    auto [out, tape] = record<float>([&](Tape& t) {
        auto xi = t.param(x);
        return t.mul(xi, xi);
    });
    CHECK(out[0] == 9.f);
    auto gs = tape.backward(Tensor({1}, {1.f}));
    CHECK(gs.paramGrads[0][0] == doctest::Approx(6.f));
}

TEST_CASE("backward of tanh at 0 is 1") {
    Tensor x({1}, {0.f});
    auto [out, tape] = record<float>([&](Tape& t) { return t.tanh(t.param(x)); });
    auto gs = tape.backward(Tensor({1}, {1.f}));
    CHECK(gs.paramGrads[0][0] == doctest::Approx(1.f));
}

TEST_CASE("backward seed shape mismatch") {
    Tensor x({2}, {1, 2});
    auto [out, tape] = record<float>([&](Tape& t) { return t.tanh(t.param(x)); });
    CHECK_THROWS_AS(tape.backward(Tensor({3})), DimensionError);
}

TEST_CASE("unregistered primitive") {
    Tape t;
    auto a = t.input(Tensor({1}, {1.f}));
    CHECK(Tape::is_registered("matmul"));
    CHECK(!Tape::is_registered("fused_gelu"));
    CHECK_THROWS_AS(t.apply("fused_gelu", {a}), UnsupportedOpError);
}

TEST_CASE("duplicate tap name is rejected") {
    Tape t;
    auto a = t.input(Tensor({1}, {1.f}));
    t.tap("h", a);
    CHECK_THROWS_AS(t.tap("h", a), InputError);
}

// MLP gradients vs central finite differences, 64-bit, h=1e-5.
TEST_CASE("two-layer MLP parameter gradients match finite differences") {
    for (uint64_t seed = 0; seed < 5; ++seed) {
        Rng rng(100 + seed);
        Tensor64 x = random_tensor<double>({2, 6}, rng);
        Tensor64 w1 = random_tensor<double>({4, 6}, rng);
        Tensor64 b1 = random_tensor<double>({4}, rng);
        Tensor64 w2 = random_tensor<double>({3, 4}, rng);
        Tensor64 b2 = random_tensor<double>({3}, rng);
        Tensor64 seedT = random_tensor<double>({2, 3}, rng);

        auto loss = [&](const Tensor64& w1v, const Tensor64& b1v, const Tensor64& w2v,
                        const Tensor64& b2v) {
            Tensor64 h = tanh_t(add_rowvec(matmul_nt(x, w1v), b1v));
            Tensor64 o = add_rowvec(matmul_nt(h, w2v), b2v);
            double s = 0.0;
            for (int64_t i = 0; i < o.size(); ++i) s += o[i] * seedT[i];
            return s;
        };

        TapeT<double> tp;
        auto xi = tp.input(x);
        auto w1t = tp.param(transpose2d(w1)); // [6 x 4]
        auto b1i = tp.param(b1);
        auto w2t = tp.param(transpose2d(w2)); // [4 x 3]
        auto b2i = tp.param(b2);
        auto h = tp.tanh(tp.add_rowvec(tp.matmul(xi, w1t), b1i));
        auto o = tp.add_rowvec(tp.matmul(h, w2t), b2i);
        tp.set_output(o);
        auto gs = tp.backward(seedT);

        auto fdw1 = fd_gradient(
            [&](const Tensor64& v) { return loss(transpose2d(v), b1, w2, b2); }, transpose2d(w1));
        auto fdb1 = fd_gradient([&](const Tensor64& v) { return loss(w1, v, w2, b2); }, b1);
        auto fdw2 = fd_gradient(
            [&](const Tensor64& v) { return loss(w1, b1, transpose2d(v), b2); }, transpose2d(w2));
        auto fdb2 = fd_gradient([&](const Tensor64& v) { return loss(w1, b1, w2, v); }, b2);

        CHECK(max_rel_err(gs.paramGrads[0], fdw1) < 1e-4);
        CHECK(max_rel_err(gs.paramGrads[1], fdb1) < 1e-4);
        CHECK(max_rel_err(gs.paramGrads[2], fdw2) < 1e-4);
        CHECK(max_rel_err(gs.paramGrads[3], fdb2) < 1e-4);
    }
}

TEST_CASE("backward is linear in the seed") {
    Rng rng(7);
    Tensor64 x = random_tensor<double>({3, 5}, rng);
    Tensor64 w = random_tensor<double>({5, 2}, rng);
    TapeT<double> t;
    auto xi = t.input(x);
    auto wi = t.param(w);
    auto o = t.tanh(t.matmul(xi, wi));
    t.set_output(o);

    Tensor64 s1 = random_tensor<double>({3, 2}, rng);
    Tensor64 s2 = random_tensor<double>({3, 2}, rng);
    const double a = rng.uniform(-2, 2), b = rng.uniform(-2, 2);
    Tensor64 mix(s1.shape());
    for (int64_t i = 0; i < mix.size(); ++i) mix[i] = a * s1[i] + b * s2[i];

    auto g1 = t.backward(s1).paramGrads[0];
    auto g2 = t.backward(s2).paramGrads[0];
    auto gm = t.backward(mix).paramGrads[0];
    for (int64_t i = 0; i < gm.size(); ++i)
        CHECK(gm[i] == doctest::Approx(a * g1[i] + b * g2[i]).epsilon(1e-10));
}

TEST_CASE("tap gradients on a linear network match the analytic product") {
    Rng rng(9);
    Tensor64 a = random_tensor<double>({4, 6}, rng); // h = A x
    Tensor64 b = random_tensor<double>({3, 4}, rng); // y = B h
    Tensor64 x = random_tensor<double>({6, 1}, rng);
    Tensor64 s = random_tensor<double>({3, 1}, rng);

    TapeT<double> t;
    auto xi = t.input(x);
    auto h = t.matmul(t.constant(a), xi);
    t.tap("hidden", h);
    auto y = t.matmul(t.constant(b), h);
    t.set_output(y);
    auto gs = t.backward(s);

    // dJ/dh = B^T s
    Tensor64 expect = matmul(transpose2d(b), s);
    CHECK(max_rel_err(gs.tap("hidden"), expect) < 1e-12);
}

TEST_CASE("jacobian of a linear map is the matrix itself") {
    Rng rng(21);
    Tensor64 a = random_tensor<double>({4, 7}, rng);
    Tensor64 x = random_tensor<double>({7, 1}, rng);
    Tensor64 j = jacobian<double>(
        [&](TapeT<double>& t, TapeT<double>::Id xi) {
            return t.reshape(t.matmul(t.constant(a), xi), {1, 4});
        },
        x);
    REQUIRE(j.shape() == Shape{4, 7});
    CHECK(max_rel_err(j, a) < 1e-12);
}

TEST_CASE("jacobian of elementwise tanh is diagonal") {
    Rng rng(22);
    Tensor64 x = random_tensor<double>({1, 5}, rng);
    Tensor64 j = jacobian<double>(
        [&](TapeT<double>& t, TapeT<double>::Id xi) { return t.tanh(xi); }, x);
    for (int64_t i = 0; i < 5; ++i)
        for (int64_t k = 0; k < 5; ++k) {
            const double expect = i == k ? 1.0 - std::tanh(x[i]) * std::tanh(x[i]) : 0.0;
            CHECK(j[i * 5 + k] == doctest::Approx(expect).epsilon(1e-12));
        }
}

TEST_CASE("jacobian of a small net matches finite differences") {
    Rng rng(23);
    Tensor64 w1 = random_tensor<double>({12, 8}, rng);
    Tensor64 w2 = random_tensor<double>({8, 4}, rng);
    Tensor64 x = random_tensor<double>({1, 12}, rng);

    auto encode = [&](TapeT<double>& t, TapeT<double>::Id xi) {
        return t.matmul(t.tanh(t.matmul(xi, t.constant(w1))), t.constant(w2));
    };
    Tensor64 j = jacobian<double>(encode, x);
    REQUIRE(j.shape() == Shape{4, 12});

    auto f = [&](const Tensor64& xv) {
        return matmul(tanh_t(matmul(xv, w1)), w2);
    };
    for (int64_t o = 0; o < 4; ++o) {
        Tensor64 fdRow = fd_gradient(
            [&](const Tensor64& xv) { return f(xv)[o]; }, x);
        for (int64_t i = 0; i < 12; ++i)
            CHECK(lwat::testing::rel_err(j[o * 12 + i], fdRow[i]) < 1e-4);
    }
}

TEST_CASE("jacobian rejects non-vector outputs") {
    Rng rng(25);
    Tensor64 x = random_tensor<double>({2, 3}, rng);
    CHECK_THROWS_AS(jacobian<double>(
                        [&](TapeT<double>& t, TapeT<double>::Id xi) { return t.tanh(xi); }, x),
                    DimensionError);
}

TEST_SUITE_END();
