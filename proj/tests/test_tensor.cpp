#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ildnet/rng.hpp"
#include "ildnet/tensor.hpp"

using namespace ildnet;

namespace {

TensorD random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
    TensorD t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

}  // namespace

TEST_CASE("construction and element access") {
    TensorF t({2, 3});
    CHECK(t.size() == 6);
    CHECK(t.rank() == 2);
    for (std::size_t i = 0; i < t.size(); ++i) CHECK(t[i] == 0.0f);

    t.at2(1, 2) = 5.0f;
    CHECK(t[5] == 5.0f);

    TensorF full = TensorF::full({2, 2}, 3.5f);
    CHECK(full[0] == 3.5f);
    CHECK(full[3] == 3.5f);

    CHECK_THROWS_AS(TensorF({2, 2}, {1.0f, 2.0f, 3.0f}), ShapeError);
}

TEST_CASE("shape string") {
    CHECK(shape_str({32, 32, 3}) == "32x32x3");
    CHECK(shape_str({}) == "scalar");
}

TEST_CASE("reshape round-trips bit for bit") {
    Rng rng(7);
    TensorD t = random_tensor(rng, {3, 4, 5});
    TensorD back = t.reshaped({60}).reshaped({5, 4, 3}).reshaped({3, 4, 5});
    REQUIRE(back.shape() == t.shape());
    for (std::size_t i = 0; i < t.size(); ++i) CHECK(back[i] == t[i]);

    CHECK_THROWS_AS(t.reshaped({7, 7}), ShapeError);
}

TEST_CASE("matmul identity and zeros") {
    TensorF eye({3, 3});
    for (std::size_t i = 0; i < 3; ++i) eye.at2(i, i) = 1.0f;
    Rng rng(11);
    TensorF a = random_tensor(rng, {3, 3}).cast<float>();

    TensorF left = matmul(eye, a);
    TensorF right = matmul(a, eye);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(left[i] == a[i]);
        CHECK(right[i] == a[i]);
    }

    TensorF zero({3, 3});
    TensorF z = matmul(a, zero);
    for (std::size_t i = 0; i < z.size(); ++i) CHECK(z[i] == 0.0f);
}

TEST_CASE("matmul known product") {
    TensorF a({2, 2}, {1, 2, 3, 4});
    TensorF b({2, 2}, {5, 6, 7, 8});
    TensorF c = matmul(a, b);
    CHECK(c.at2(0, 0) == 19.0f);
    CHECK(c.at2(0, 1) == 22.0f);
    CHECK(c.at2(1, 0) == 43.0f);
    CHECK(c.at2(1, 1) == 50.0f);
}

TEST_CASE("matmul rejects mismatched shapes, naming both") {
    TensorF a({2, 3});
    TensorF b({4, 5});
    try {
        matmul(a, b);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("2x3") != std::string::npos);
        CHECK(msg.find("4x5") != std::string::npos);
    }
}

TEST_CASE("matmul associativity within 1e-10 on doubles") {
    Rng rng(99);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t m = 1 + rng.below(6), k = 1 + rng.below(6);
        const std::size_t p = 1 + rng.below(6), n = 1 + rng.below(6);
        TensorD a = random_tensor(rng, {m, k});
        TensorD b = random_tensor(rng, {k, p});
        TensorD c = random_tensor(rng, {p, n});
        TensorD lhs = matmul(matmul(a, b), c);
        TensorD rhs = matmul(a, matmul(b, c));
        for (std::size_t i = 0; i < lhs.size(); ++i) {
            const double scale = std::max({1.0, std::abs(lhs[i]), std::abs(rhs[i])});
            CHECK(std::abs(lhs[i] - rhs[i]) / scale < 1e-10);
        }
    }
}

TEST_CASE("matmul_at_b equals transpose then multiply") {
    Rng rng(5);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t m = 1 + rng.below(5), p = 1 + rng.below(5), n = 1 + rng.below(5);
        TensorD a = random_tensor(rng, {m, p});
        TensorD b = random_tensor(rng, {m, n});
        TensorD direct = matmul_at_b(a, b);
        TensorD via_t = matmul(transpose2d(a), b);
        REQUIRE(direct.shape() == via_t.shape());
        for (std::size_t i = 0; i < direct.size(); ++i)
            CHECK(std::abs(direct[i] - via_t[i]) < 1e-12);
    }
}

TEST_CASE("transpose2d") {
    TensorF a({2, 3}, {1, 2, 3, 4, 5, 6});
    TensorF t = transpose2d(a);
    REQUIRE(t.shape() == Shape{3, 2});
    CHECK(t.at2(0, 0) == 1.0f);
    CHECK(t.at2(2, 1) == 6.0f);
    CHECK(t.at2(1, 0) == 2.0f);
}

TEST_CASE("pad2d surrounds with the fill value and keeps the interior") {
    TensorF x({1, 2, 2, 1}, {1, 2, 3, 4});
    TensorF p = pad2d(x, 1, 1, 1, 1);
    REQUIRE(p.shape() == Shape{1, 4, 4, 1});
    double sum = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) sum += p[i];
    CHECK(sum == 10.0);  // padding adds nothing
    CHECK(p.at4(0, 1, 1, 0) == 1.0f);
    CHECK(p.at4(0, 2, 2, 0) == 4.0f);
    CHECK(p.at4(0, 0, 0, 0) == 0.0f);
    CHECK(p.at4(0, 3, 3, 0) == 0.0f);

    TensorF asym = pad2d(x, 0, 2, 1, 0, 9.0f);
    REQUIRE(asym.shape() == Shape{1, 4, 3, 1});
    CHECK(asym.at4(0, 0, 1, 0) == 1.0f);
    CHECK(asym.at4(0, 3, 0, 0) == 9.0f);

    CHECK_THROWS_AS(pad2d(TensorF({2, 2}), 1, 1, 1, 1), ShapeError);
}

TEST_CASE("non-finite products are rejected") {
    TensorF a({1, 1}, {3e38f});
    TensorF b({1, 1}, {3e38f});
    CHECK_THROWS_AS(matmul(a, b), NumericError);
}

TEST_CASE("cast between precisions") {
    TensorD d({2}, {1.25, -0.5});
    TensorF f = d.cast<float>();
    CHECK(f[0] == 1.25f);
    CHECK(f[1] == -0.5f);
    TensorD back = f.cast<double>();
    CHECK(back[0] == 1.25);
}
