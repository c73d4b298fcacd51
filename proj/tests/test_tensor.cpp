#include <doctest.h>

#include <cstring>
#include <sstream>

#include "lwat/serialize.hpp"
#include "lwat/tensor.hpp"
#include "lwat/threading.hpp"
#include "support/oracles.hpp"

using namespace lwat;
using lwat::testing::conv2d_naive;
using lwat::testing::random_tensor;

TEST_SUITE_BEGIN("tensor");

TEST_CASE("shape invariants") {
    CHECK_THROWS_AS(Tensor(Shape{}), DimensionError);
    CHECK_THROWS_AS(Tensor({2, 0}), DimensionError);
    CHECK_THROWS_AS(Tensor({3}, {1.f, 2.f}), DimensionError);
    Tensor t({2, 3});
    CHECK(t.size() == 6);
    CHECK(t.rank() == 2);
}

TEST_CASE("matmul identity") {
    Rng rng(7);
    Tensor b = random_tensor<float>({3, 5}, rng);
    Tensor i3 = Tensor::identity(3);
    Tensor c = matmul(i3, b);
    for (int64_t k = 0; k < b.size(); ++k) CHECK(c[k] == b[k]);
}

TEST_CASE("matmul hand arithmetic") {
    Tensor a({2, 2}, {1, 2, 3, 4});
    Tensor b({2, 1}, {5, 6});
    Tensor c = matmul(a, b);
    CHECK(c.shape() == Shape{2, 1});
    CHECK(c[0] == doctest::Approx(17));
    CHECK(c[1] == doctest::Approx(39));
}

TEST_CASE("matmul shape mismatch names both shapes") {
    Tensor a({2, 3});
    Tensor b({4, 5});
    try {
        matmul(a, b);
        FAIL("expected DimensionError");
    } catch (const DimensionError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("[2x3]") != std::string::npos);
        CHECK(msg.find("[4x5]") != std::string::npos);
    }
}

TEST_CASE("matmul associativity on random tensors") {
    Rng rng(11);
    for (int trial = 0; trial < 8; ++trial) {
        const int64_t m = 1 + static_cast<int64_t>(rng.below(6));
        const int64_t k = 1 + static_cast<int64_t>(rng.below(6));
        const int64_t n = 1 + static_cast<int64_t>(rng.below(6));
        const int64_t p = 1 + static_cast<int64_t>(rng.below(6));
        Tensor a = random_tensor<float>({m, k}, rng);
        Tensor b = random_tensor<float>({k, n}, rng);
        Tensor c = random_tensor<float>({n, p}, rng);
        Tensor left = matmul(matmul(a, b), c);
        Tensor right = matmul(a, matmul(b, c));
        double num = 0.0;
        for (int64_t i = 0; i < left.size(); ++i)
            num += (left[i] - right[i]) * (left[i] - right[i]);
        // products can cancel to near zero, so measure against the natural
        // scale of the triple product
        const double productScale = l2_norm(a) * l2_norm(b) * l2_norm(c);
        CHECK(std::sqrt(num) <= 1e-5 * productScale);
    }
}

TEST_CASE("matmul transpose variants agree with plain matmul") {
    Rng rng(13);
    Tensor a = random_tensor<float>({4, 6}, rng);
    Tensor b = random_tensor<float>({6, 3}, rng);
    Tensor bt = transpose2d(b);
    Tensor at = transpose2d(a);
    Tensor r1 = matmul_nt(a, bt);
    Tensor r2 = matmul_tn(at, b);
    Tensor ref = matmul(a, b);
    for (int64_t i = 0; i < ref.size(); ++i) {
        CHECK(r1[i] == doctest::Approx(ref[i]).epsilon(1e-5));
        CHECK(r2[i] == doctest::Approx(ref[i]).epsilon(1e-5));
    }
}

TEST_CASE("conv2d all-ones 3x3") {
    Tensor in = Tensor::ones({1, 1, 3, 3});
    Tensor k = Tensor::ones({1, 1, 3, 3});
    Tensor out = conv2d(in, k, 1, 0);
    CHECK(out.shape() == Shape{1, 1, 1, 1});
    CHECK(out[0] == doctest::Approx(9));
}

TEST_CASE("conv2d delta kernel reproduces interior") {
    Rng rng(3);
    Tensor in = random_tensor<float>({1, 1, 6, 6}, rng);
    Tensor k({1, 1, 3, 3});
    k.at({0, 0, 1, 1}) = 1.f; // centered delta
    Tensor out = conv2d(in, k, 1, 0);
    CHECK(out.shape() == Shape{1, 1, 4, 4});
    for (int64_t y = 0; y < 4; ++y)
        for (int64_t x = 0; x < 4; ++x)
            CHECK(out.at({0, 0, y, x}) == doctest::Approx(in.at({0, 0, y + 1, x + 1})));
}

// The 1e-6 agreement bound is meaningful in the 64-bit gradient-check
// precision; in f32 the im2col and naive paths round differently, so that
// sweep uses an f32 roundoff allowance instead.
template <typename T>
static void conv_oracle_sweep(double tol) {
    Rng rng(5);
    for (int64_t n : {1, 2, 4})
        for (int64_t c : {1, 3, 4})
            for (int64_t f : {1, 2})
                for (int64_t hw : {4, 8})
                    for (int64_t k : {1, 3})
                        for (int64_t stride : {1, 2})
                            for (int64_t pad : {0, 1}) {
                                TensorT<T> in = random_tensor<T>({n, c, hw, hw}, rng);
                                TensorT<T> kr = random_tensor<T>({f, c, k, k}, rng);
                                TensorT<T> fast = conv2d(in, kr, stride, pad);
                                TensorT<T> ref = conv2d_naive(in, kr, stride, pad);
                                REQUIRE(fast.shape() == ref.shape());
                                for (int64_t i = 0; i < fast.size(); ++i)
                                    CHECK(std::abs(static_cast<double>(fast[i] - ref[i])) < tol);
                            }
}

TEST_CASE("conv2d matches the naive loop oracle across shapes (64-bit)") {
    conv_oracle_sweep<double>(1e-6);
}

TEST_CASE("conv2d matches the naive loop oracle across shapes (f32)") {
    conv_oracle_sweep<float>(2e-5);
}

TEST_CASE("conv2d random 2x3x8x8 vs reference") {
    Rng rng(17);
    Tensor64 in = random_tensor<double>({2, 3, 8, 8}, rng);
    Tensor64 kr = random_tensor<double>({4, 3, 3, 3}, rng);
    Tensor64 fast = conv2d(in, kr, 1, 1);
    Tensor64 ref = conv2d_naive(in, kr, 1, 1);
    for (int64_t i = 0; i < fast.size(); ++i) CHECK(std::abs(fast[i] - ref[i]) < 1e-6);
}

TEST_CASE("conv2d kernel larger than padded input") {
    Tensor in = Tensor::ones({1, 1, 3, 3});
    Tensor k = Tensor::ones({1, 1, 5, 5});
    CHECK_THROWS_AS(conv2d(in, k, 1, 0), DimensionError);
    CHECK_NOTHROW(conv2d(in, k, 1, 1)); // padded input is 5x5
}

TEST_CASE("sign definition and range") {
    Tensor t({3}, {-0.5f, 0.0f, 3.1f});
    Tensor s = sign(t);
    CHECK(s[0] == -1.f);
    CHECK(s[1] == 0.f);
    CHECK(s[2] == 1.f);

    Rng rng(23);
    Tensor r = random_tensor<float>({128}, rng, -10, 10);
    Tensor sr = sign(r);
    Tensor ssr = sign(sr);
    for (int64_t i = 0; i < r.size(); ++i) {
        CHECK((sr[i] == -1.f || sr[i] == 0.f || sr[i] == 1.f));
        CHECK(ssr[i] == sr[i]); // idempotent
    }
    CHECK(linf_norm(sr) <= 1.0);
}

TEST_CASE("elementwise and reductions") {
    Tensor t({2}, {-3, 2});
    CHECK(linf_norm(t) == doctest::Approx(3));
    CHECK(l2_norm(t) == doctest::Approx(std::sqrt(13.0)));

    Tensor c = Tensor::full({4, 4}, 2.5f);
    CHECK(mean(c) == doctest::Approx(2.5));

    Tensor v({3}, {1, 2, 3});
    CHECK(var(v) == doctest::Approx(2.0 / 3.0)); // population variance
    CHECK(max(v) == 3.f);
    CHECK(min(v) == 1.f);
    CHECK(sum(v) == doctest::Approx(6.0));

    Tensor a({2, 2}, {1, 2, 3, 4});
    Tensor b({2, 2}, {10, 20, 30, 40});
    CHECK(add(a, b)[3] == 44.f);
    CHECK(sub(b, a)[0] == 9.f);
    CHECK(mul(a, b)[1] == 40.f);
    CHECK(scale(a, 2.f)[2] == 6.f);
    CHECK_THROWS_AS(add(a, Tensor({3})), DimensionError);

    CHECK(relu(Tensor({3}, {-1, 0, 2}))[0] == 0.f);
    CHECK(tanh_t(Tensor({1}, {0.f}))[0] == 0.f);
    CHECK(exp_t(Tensor({1}, {0.f}))[0] == 1.f);
    CHECK(log_t(Tensor({1}, {1.f}))[0] == 0.f);
    CHECK(clamp(Tensor({2}, {-5, 5}), -1.f, 1.f)[0] == -1.f);
}

TEST_CASE("argmax ties break to the lowest index") {
    Tensor t({2, 3}, {1, 5, 5, 7, 7, 2});
    auto idx = argmax(t, 1);
    CHECK(idx[0] == 1);
    CHECK(idx[1] == 0);
    CHECK_THROWS_AS(argmax(t, 2), DimensionError);

    Tensor u({2, 2}, {1, 4, 3, 2});
    auto cols = argmax(u, 0);
    CHECK(cols[0] == 1);
    CHECK(cols[1] == 0);
}

TEST_CASE("serialization round-trip is bitwise identical") {
    Rng rng(31);
    Tensor t = random_tensor<float>({3, 4, 2}, rng, -100, 100);
    t[5] = -0.f; // sign of zero must survive
    std::stringstream ss;
    save_tensor(ss, t);
    Tensor u = load_tensor(ss);
    REQUIRE(u.shape() == t.shape());
    CHECK(std::memcmp(u.data(), t.data(), sizeof(float) * t.size()) == 0);
}

TEST_CASE("serialization rejects corrupt streams") {
    std::stringstream empty;
    CHECK_THROWS_AS(load_tensor(empty), FormatError);

    std::stringstream bad("XXXX");
    CHECK_THROWS_AS(load_tensor(bad), FormatError);

    Tensor t({2, 2}, {1, 2, 3, 4});
    std::stringstream ss;
    save_tensor(ss, t);
    std::string bytes = ss.str();
    bytes.resize(bytes.size() - 3); // truncate payload
    std::stringstream cut(bytes);
    CHECK_THROWS_AS(load_tensor(cut), FormatError);
}

TEST_CASE("wire format layout is as documented") {
    Tensor t({2}, {1.0f, -2.0f});
    std::stringstream ss;
    save_tensor(ss, t);
    const std::string b = ss.str();
    REQUIRE(b.size() == 4 + 1 + 1 + 4 + 8);
    CHECK(b.substr(0, 4) == "LWAT");
    CHECK(b[4] == 1); // version
    CHECK(b[5] == 1); // rank
    CHECK(static_cast<unsigned char>(b[6]) == 2); // extent 2, little-endian
    CHECK(static_cast<unsigned char>(b[7]) == 0);
}

TEST_CASE("kernels are bitwise deterministic across thread counts") {
    Rng rng(41);
    Tensor a = random_tensor<float>({37, 19}, rng);
    Tensor b = random_tensor<float>({19, 23}, rng);
    set_num_threads(1);
    Tensor c1 = matmul(a, b);
    set_num_threads(4);
    Tensor c4 = matmul(a, b);
    set_num_threads(1);
    CHECK(std::memcmp(c1.data(), c4.data(), sizeof(float) * c1.size()) == 0);
}

TEST_SUITE_END();
