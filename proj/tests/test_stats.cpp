#include <catch2/catch_amalgamated.hpp>

#include "qsmf/stats.hpp"

using namespace qsmf;
using Catch::Approx;

TEST_CASE("percentile interpolates linearly", "[stats]") {
    std::vector<double> x{1, 2, 3, 4};
    CHECK(percentile(x, 0) == 1.0);
    CHECK(percentile(x, 100) == 4.0);
    CHECK(percentile(x, 50) == Approx(2.5));
    CHECK(iqr(x) == Approx(1.5));
    CHECK_THROWS_AS(percentile(x, 101), ArgumentError);
}

TEST_CASE("pearson and spearman on hand data", "[stats]") {
    std::vector<double> x{1, 2, 3, 4, 5};
    std::vector<double> y{2, 4, 6, 8, 10};
    CHECK(pearson(x, y) == Approx(1.0));
    std::vector<double> yn{10, 8, 6, 4, 2};
    CHECK(pearson(x, yn) == Approx(-1.0));
    // monotone nonlinear: spearman 1, pearson < 1
    std::vector<double> ym{1, 8, 27, 64, 125};
    CHECK(spearman(x, ym) == Approx(1.0));
    CHECK(pearson(x, ym) < 1.0);
    CHECK_THROWS_AS(pearson(x, std::vector<double>{1, 1, 1, 1, 1}), UndefinedMetricError);
}

TEST_CASE("average ranks handle ties", "[stats]") {
    std::vector<double> x{3.0, 1.0, 3.0, 2.0};
    const auto r = average_ranks(x);
    CHECK(r[1] == Approx(1.0));
    CHECK(r[3] == Approx(2.0));
    CHECK(r[0] == Approx(3.5));
    CHECK(r[2] == Approx(3.5));
}

TEST_CASE("zscore has zero mean and unit population variance", "[stats]") {
    std::vector<double> x{0.3, 1.7, 2.2, -0.4, 5.0};
    const auto z = zscore(x);
    double m = 0.0, v = 0.0;
    for (double zi : z) m += zi;
    m /= static_cast<double>(z.size());
    for (double zi : z) v += zi * zi;
    v /= static_cast<double>(z.size());
    CHECK(std::abs(m) < 1e-12);
    CHECK(v == Approx(1.0).epsilon(1e-12));
}

TEST_CASE("solve_dense solves a known system", "[stats]") {
    // [2 1; 1 3] x = [5; 10] -> x = (1, 3)
    const auto x = solve_dense({2, 1, 1, 3}, {5, 10});
    CHECK(x[0] == Approx(1.0));
    CHECK(x[1] == Approx(3.0));
}

TEST_CASE("ols residuals are orthogonal to the design", "[stats]") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1, 1);
    const std::size_t n = 60;
    std::vector<double> c1(n), c2(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
        c1[i] = u(rng);
        c2[i] = u(rng);
        y[i] = 2.0 + 0.5 * c1[i] - 1.5 * c2[i] + 0.1 * u(rng);
    }
    const auto r = ols_residuals(y, {c1, c2});
    double d1 = 0.0, d2 = 0.0, d0 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        d0 += r[i];
        d1 += r[i] * c1[i];
        d2 += r[i] * c2[i];
    }
    CHECK(std::abs(d0) < 1e-9);
    CHECK(std::abs(d1) < 1e-9);
    CHECK(std::abs(d2) < 1e-9);
}

TEST_CASE("collinear design columns are dropped, not fatal", "[stats]") {
    std::vector<double> c1{1, 2, 3, 4};
    std::vector<double> c2{2, 4, 6, 8};  // 2*c1
    std::vector<double> y{1, 0, 1, 0};
    CHECK_NOTHROW(ols_residuals(y, {c1, c2}));
}

TEST_CASE("bootstrap ci contains the point estimate", "[stats]") {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> g(0, 1);
    std::vector<double> x(200), y(200);
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] = g(rng);
        y[i] = 0.6 * x[i] + 0.8 * g(rng);
    }
    const double point = pearson(x, y);
    const auto ci = bootstrap_ci(
        x, y, [](std::span<const double> a, std::span<const double> b) { return pearson(a, b); },
        500, 42);
    CHECK(ci.lo <= point);
    CHECK(ci.hi >= point);
    CHECK(ci.hi - ci.lo < 0.5);
}
