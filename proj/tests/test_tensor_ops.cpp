#include <doctest.h>

#include <cmath>
#include <vector>

#include "prunecoder/errors.hpp"
#include "prunecoder/ops.hpp"
#include "prunecoder/rng.hpp"

using namespace prunecoder;

namespace {

TensorD random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
    TensorD t(std::move(shape));
    for (auto& v : t.data()) v = scale * rng.normal();
    return t;
}

TensorD naive_matmul(const TensorD& a, const TensorD& b) {
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    TensorD c({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s += a.at(i, p) * b.at(p, j);
            c.at(i, j) = s;
        }
    }
    return c;
}

// Maclaurin series for erf, independent of std::erf.
double erf_series(double x) {
    double term = x, sum = x;
    for (int n = 1; n < 60; ++n) {
        term *= -x * x / n;
        sum += term / (2 * n + 1);
    }
    return 2.0 / std::sqrt(std::acos(-1.0)) * sum;
}

}  // namespace

TEST_CASE("matmul identity and row selector") {
    const auto b = TensorD::matrix({{1, 2}, {3, 4}});
    CHECK(ops::matmul(TensorD::matrix({{1, 0}, {0, 1}}), b) == b);
    const auto sel = ops::matmul(TensorD::matrix({{1, 0}, {0, 0}}), TensorD::matrix({{5, 6}, {7, 8}}));
    CHECK(sel == TensorD::matrix({{5, 6}, {0, 0}}));
}

TEST_CASE("matmul matches a triple-loop oracle on random shapes up to 8x8x8") {
    Rng rng(11);
    for (std::size_t m = 1; m <= 8; m += 3) {
        for (std::size_t k = 1; k <= 8; k += 2) {
            for (std::size_t n = 1; n <= 8; n += 3) {
                const auto a = random_tensor({m, k}, rng);
                const auto b = random_tensor({k, n}, rng);
                const auto got = ops::matmul(a, b);
                const auto want = naive_matmul(a, b);
                for (std::size_t i = 0; i < got.size(); ++i) CHECK(std::abs(got[i] - want[i]) < 1e-12);
            }
        }
    }
}

TEST_CASE("matmul rejects mismatched inner dimensions") {
    CHECK_THROWS_AS(ops::matmul(TensorD({2, 3}), TensorD({2, 3})), UsageError);
}

TEST_CASE("matmul is bitwise identical across thread counts") {
    Rng rng(3);
    const auto a = random_tensor({17, 9}, rng);
    const auto b = random_tensor({9, 13}, rng);
    ops::set_num_threads(1);
    const auto one = ops::matmul(a, b);
    ops::set_num_threads(4);
    const auto four = ops::matmul(a, b);
    ops::set_num_threads(1);
    CHECK(one == four);
}

TEST_CASE("softmax examples") {
    auto s = ops::softmax(TensorD::vector({0, 0}));
    CHECK(s[0] == doctest::Approx(0.5));
    CHECK(s[1] == doctest::Approx(0.5));
    s = ops::softmax(TensorD::vector({0, std::log(3.0)}));
    CHECK(s[0] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(s[1] == doctest::Approx(0.75).epsilon(1e-12));
    s = ops::softmax(TensorD::vector({1000, 1000}));
    CHECK(s[0] == 0.5);
    CHECK(s[1] == 0.5);
}

TEST_CASE("softmax rows are nonnegative and sum to one for large inputs") {
    Rng rng(5);
    for (int seed = 0; seed < 10; ++seed) {
        const auto x = random_tensor({6, 7}, rng, 1e4 / 4);
        const auto y = ops::softmax(x);
        for (std::size_t r = 0; r < y.rows(); ++r) {
            double sum = 0.0;
            for (double v : y.row(r)) {
                CHECK(v >= 0.0);
                sum += v;
            }
            CHECK(std::abs(sum - 1.0) < 1e-6);
        }
    }
}

TEST_CASE("softmax along a leading axis") {
    const auto x = TensorD::matrix({{0, 1}, {0, 1}});
    const auto y = ops::softmax(x, 0);
    for (double v : y.data()) CHECK(v == doctest::Approx(0.5));
}

TEST_CASE("layer_norm examples") {
    const auto gamma = TensorD::vector({2, 3, 4});
    const auto beta = TensorD::vector({0.5, -1, 7});
    const auto c = ops::layer_norm(TensorD::matrix({{3, 3, 3}}), gamma, beta, 1e-12);
    CHECK(c[0] == doctest::Approx(0.5));
    CHECK(c[1] == doctest::Approx(-1));
    CHECK(c[2] == doctest::Approx(7));

    const auto y = ops::layer_norm(TensorD::matrix({{1, 3}}), TensorD::vector({1, 1}), TensorD::vector({0, 0}), 0.0);
    CHECK(y[0] == doctest::Approx(-1.0));
    CHECK(y[1] == doctest::Approx(1.0));
}

TEST_CASE("layer_norm output has zero mean and unit variance") {
    Rng rng(17);
    const std::size_t n = 64;
    const auto x = random_tensor({1, n}, rng, 5.0);
    const auto y = ops::layer_norm(x, TensorD({n}, 1.0), TensorD({n}, 0.0), 1e-12);
    double mean = 0.0, var = 0.0;
    for (double v : y.data()) mean += v;
    mean /= n;
    for (double v : y.data()) var += (v - mean) * (v - mean);
    var /= n;
    CHECK(std::abs(mean) < 1e-6);
    CHECK(std::abs(var - 1.0) < 1e-4);
}

TEST_CASE("gelu is the exact Gaussian-CDF form") {
    CHECK(ops::gelu(0.0) == 0.0);
    const double oracle = 1.0 * 0.5 * (1.0 + erf_series(1.0 / std::sqrt(2.0)));
    CHECK(std::abs(oracle - 0.841345) < 1e-5);
    CHECK(std::abs(ops::gelu(1.0) - oracle) < 1e-12);
    CHECK(std::abs(ops::gelu(10.0) - 10.0) < 1e-6);
    for (double x : {-2.5, -0.3, 0.7, 1.9}) {
        CHECK(ops::gelu(x) == doctest::Approx(x * 0.5 * (1.0 + erf_series(x / std::sqrt(2.0)))).epsilon(1e-12));
    }
}

TEST_CASE("cross_entropy examples") {
    const std::vector<int> one{0};
    const auto uniform = ops::cross_entropy(TensorD::matrix({{0.3, 0.3, 0.3, 0.3}}), std::span<const int>(one));
    CHECK(uniform.loss == doctest::Approx(std::log(4.0)).epsilon(1e-12));
    CHECK(std::abs(uniform.loss - 1.386294) < 1e-6);

    const auto two = ops::cross_entropy(TensorD::matrix({{1, 0}}), std::span<const int>(one));
    CHECK(two.loss == doctest::Approx(std::log1p(std::exp(-1.0))).epsilon(1e-12));
    CHECK(std::abs(two.loss - 0.313262) < 1e-6);

    const auto sat = ops::cross_entropy(TensorD::matrix({{50, 0, 0}}), std::span<const int>(one));
    CHECK(sat.loss < 1e-6);
    CHECK(sat.loss > 0.0);
}

TEST_CASE("cross_entropy gradient is softmax minus one-hot over the batch") {
    const std::vector<int> labels{1, 0};
    const auto ce = ops::cross_entropy(TensorD::matrix({{0, std::log(3.0)}, {0, 0}}), std::span<const int>(labels));
    CHECK(ce.dlogits.at(0, 0) == doctest::Approx(0.25 / 2));
    CHECK(ce.dlogits.at(0, 1) == doctest::Approx(-0.25 / 2));
    CHECK(ce.dlogits.at(1, 0) == doctest::Approx(-0.5 / 2));
    CHECK(ce.dlogits.at(1, 1) == doctest::Approx(0.5 / 2));
}

TEST_CASE("cross_entropy rejects out-of-range labels") {
    const std::vector<int> bad{2};
    CHECK_THROWS_AS(ops::cross_entropy(TensorD::matrix({{0, 0}}), std::span<const int>(bad)), UsageError);
}

TEST_CASE("dropout is inverted, keyed and defaults to identity at p=0") {
    Rng rng(9);
    const auto x = random_tensor({32, 32}, rng);
    const auto none = ops::dropout(x, 0.0, {1, 2, 3});
    CHECK(none.output == x);

    const auto a = ops::dropout(x, 0.25, {1, 2, 3});
    const auto b = ops::dropout(x, 0.25, {1, 2, 3});
    const auto c = ops::dropout(x, 0.25, {1, 3, 3});
    CHECK(a.output == b.output);
    CHECK_FALSE(a.output == c.output);
    std::size_t dropped = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (a.scale[i] == 0.0) {
            ++dropped;
            CHECK(a.output[i] == 0.0);
        } else {
            CHECK(a.scale[i] == doctest::Approx(1.0 / 0.75));
        }
    }
    CHECK(dropped > 200);
    CHECK(dropped < 320);
}

TEST_CASE("grad_check examples") {
    Rng rng(21);
    const ops::Primitive mm = [](const std::vector<TensorD>& in) { return ops::dual_matmul(in[0], in[1]); };
    const auto r = ops::grad_check(mm, {random_tensor({3, 3}, rng), random_tensor({3, 3}, rng)}, 1e-6);
    CHECK(r.max_rel_error < 1e-7);

    const ops::Primitive ln = [](const std::vector<TensorD>& in) {
        return ops::dual_layer_norm(in[0], in[1], in[2], 1e-12);
    };
    const auto l = ops::grad_check(ln, {random_tensor({3, 5}, rng), random_tensor({5}, rng), random_tensor({5}, rng)},
                                   1e-6);
    CHECK(l.max_rel_error < 1e-5);
}

TEST_CASE("every primitive passes grad_check over ten seeds") {
    struct Case {
        const char* name;
        ops::Primitive primitive;
        std::vector<Shape> shapes;
    };
    const std::vector<Case> cases{
        {"matmul", [](const auto& in) { return ops::dual_matmul(in[0], in[1]); }, {{3, 4}, {4, 2}}},
        {"linear", [](const auto& in) { return ops::dual_linear(in[0], in[1], in[2]); }, {{3, 4}, {5, 4}, {5}}},
        {"softmax", [](const auto& in) { return ops::dual_softmax(in[0]); }, {{3, 5}}},
        {"layer_norm", [](const auto& in) { return ops::dual_layer_norm(in[0], in[1], in[2], 1e-12); },
         {{3, 6}, {6}, {6}}},
        {"gelu", [](const auto& in) { return ops::dual_gelu(in[0]); }, {{4, 4}}},
        {"tanh", [](const auto& in) { return ops::dual_tanh(in[0]); }, {{4, 4}}},
    };
    for (const auto& c : cases) {
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            Rng rng(mix_keys({seed, 77}));
            std::vector<TensorD> point;
            for (const auto& s : c.shapes) point.push_back(random_tensor(s, rng));
            const auto r = ops::grad_check(c.primitive, point, 1e-6, seed);
            INFO(c.name << " seed " << seed);
            CHECK(r.max_rel_error < 1e-4);
        }
    }
}

TEST_CASE("cross_entropy gradient passes a finite-difference check") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(seed);
        const auto logits = random_tensor({3, 4}, rng, 2.0);
        const std::vector<int> labels{static_cast<int>(rng.below(4)), static_cast<int>(rng.below(4)),
                                      static_cast<int>(rng.below(4))};
        const auto analytic = ops::cross_entropy(logits, std::span<const int>(labels)).dlogits;
        const auto r = ops::grad_check_scalar(
            [&](std::span<const double> p) {
                return ops::cross_entropy(TensorD({3, 4}, std::vector<double>(p.begin(), p.end())),
                                          std::span<const int>(labels))
                    .loss;
            },
            logits.data(), analytic.data(), 1e-6);
        CHECK(r.max_rel_error < 1e-4);
    }
}

TEST_CASE("primitives are pure") {
    Rng rng(2);
    const auto x = random_tensor({4, 6}, rng);
    const auto g = random_tensor({6}, rng);
    const auto b = random_tensor({6}, rng);
    CHECK(ops::layer_norm(x, g, b, 1e-12) == ops::layer_norm(x, g, b, 1e-12));
    CHECK(ops::gelu(x) == ops::gelu(x));
    CHECK(ops::softmax(x) == ops::softmax(x));
}

TEST_CASE("relative_error uses the documented denominator") {
    CHECK(ops::relative_error(1.0, 1.0) == 0.0);
    CHECK(ops::relative_error(2.0, 1.0) == doctest::Approx(0.5));
    CHECK(ops::relative_error(0.0, 1e-9) == doctest::Approx(0.1));
}
