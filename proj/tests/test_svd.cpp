#include <doctest.h>

#include <algorithm>

#include "lwat/svd.hpp"
#include "support/oracles.hpp"

using namespace lwat;
using lwat::testing::random_tensor;
using lwat::testing::sym_eigenvalues;

TEST_SUITE_BEGIN("svd");

TEST_CASE("identity map has unit spectrum") {
    auto r = jacobi_svd(Tensor64::identity(6));
    for (double s : r.sigma) CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("diagonal matrix") {
    Tensor64 d({3, 3});
    d.at({0, 0}) = 3;
    d.at({1, 1}) = 2;
    d.at({2, 2}) = 1;
    auto r = jacobi_svd(d);
    CHECK(r.sigma[0] == doctest::Approx(3.0));
    CHECK(r.sigma[1] == doctest::Approx(2.0));
    CHECK(r.sigma[2] == doctest::Approx(1.0));
}

TEST_CASE("random 8x5 matches Gram-matrix eigen oracle") {
    Rng rng(5);
    Tensor64 a = random_tensor<double>({8, 5}, rng);
    auto r = jacobi_svd(a);

    Tensor64 gram = matmul(transpose2d(a), a); // A^T A, 5x5
    auto ev = sym_eigenvalues(gram);
    std::sort(ev.begin(), ev.end(), std::greater<>());
    REQUIRE(ev.size() == r.sigma.size());
    for (size_t i = 0; i < ev.size(); ++i)
        CHECK(std::abs(std::sqrt(std::max(ev[i], 0.0)) - r.sigma[i]) < 1e-8);
}

TEST_CASE("spectrum is non-negative and non-increasing") {
    Rng rng(9);
    for (int trial = 0; trial < 10; ++trial) {
        const int64_t m = 2 + static_cast<int64_t>(rng.below(7));
        const int64_t n = 2 + static_cast<int64_t>(rng.below(7));
        auto r = jacobi_svd(random_tensor<double>({m, n}, rng));
        for (size_t i = 0; i < r.sigma.size(); ++i) {
            CHECK(r.sigma[i] >= 0.0);
            if (i) CHECK(r.sigma[i] <= r.sigma[i - 1] + 1e-15);
        }
    }
}

TEST_CASE("U Sigma V^T reconstructs the input") {
    Rng rng(11);
    for (int trial = 0; trial < 10; ++trial) {
        const int64_t m = 2 + static_cast<int64_t>(rng.below(6));
        const int64_t n = 2 + static_cast<int64_t>(rng.below(6));
        Tensor64 a = random_tensor<double>({m, n}, rng);
        auto r = jacobi_svd(a);
        const int64_t k = static_cast<int64_t>(r.sigma.size());
        Tensor64 us = r.u;
        for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < k; ++j) us[i * k + j] *= r.sigma[static_cast<size_t>(j)];
        Tensor64 rec = matmul(us, transpose2d(r.v));
        double num = 0.0, den = 0.0;
        for (int64_t i = 0; i < a.size(); ++i) {
            num += (rec[i] - a[i]) * (rec[i] - a[i]);
            den += a[i] * a[i];
        }
        CHECK(std::sqrt(num) <= 1e-6 * std::sqrt(den));
    }
}

TEST_CASE("tall and wide inputs agree") {
    Rng rng(13);
    Tensor64 a = random_tensor<double>({7, 3}, rng);
    auto r1 = jacobi_svd(a);
    auto r2 = jacobi_svd(transpose2d(a));
    for (size_t i = 0; i < r1.sigma.size(); ++i)
        CHECK(r1.sigma[i] == doctest::Approx(r2.sigma[i]).epsilon(1e-12));
}

TEST_CASE("singular_values helper on f32 data") {
    Tensor a({2, 2}, {2, 0, 0, 1});
    auto sv = singular_values(a);
    CHECK(sv[0] == doctest::Approx(2.0));
    CHECK(sv[1] == doctest::Approx(1.0));
}

TEST_SUITE_END();
