#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "monodiff/monotone_graph.hpp"
#include "oracles.hpp"

using monodiff::MonotoneGraph;
using Catch::Approx;

TEST_CASE("resolvent closed-form anchors") {
    auto linear = MonotoneGraph::power_law(1.0);
    CHECK(linear.resolvent(1.0, 2.0) == Approx(1.0));  // (1+lambda)v = u

    auto cubic = MonotoneGraph::power_law(3.0);
    CHECK(cubic.resolvent(1.0, 2.0) == Approx(1.0).margin(1e-12));  // v + v^3 = 2

    for (auto& [name, g] : oracle::graph_zoo()) {
        INFO(name);
        CHECK(g.resolvent(0.7, 0.0) == 0.0);  // 0 in Psi(0) pins the fixed point
    }

    auto step = MonotoneGraph::step();
    CHECK(step.resolvent(1.0, 0.5) == Approx(0.0).margin(1e-13));  // jump interval absorbs u
    CHECK(step.yosida(1.0, 0.5) == Approx(0.5));                   // selection theta = 0.5
}

TEST_CASE("resolvent rejects bad input") {
    auto g = MonotoneGraph::power_law(2.0);
    CHECK_THROWS_AS(g.resolvent(1.0, std::nan("")), monodiff::NonFiniteInput);
    CHECK_THROWS_AS(g.resolvent(-1.0, 1.0), std::invalid_argument);
}

TEST_CASE("yosida anchors and derived value") {
    auto linear = MonotoneGraph::power_law(1.0);
    CHECK(linear.yosida(1.0, 2.0) == Approx(1.0));

    // oracle: bisection on v + 0.01 v^3 = 1, independent of the library solver
    auto cubic = MonotoneGraph::power_law(3.0);
    const double v = oracle::bisect_root([](double w) { return w + 0.01 * w * w * w - 1.0; }, 0.0, 1.0);
    const double expected = (1.0 - v) / 0.01;
    CHECK(cubic.yosida(0.01, 1.0) == Approx(expected).margin(1e-9));
}

TEST_CASE("potential anchors") {
    auto linear = MonotoneGraph::power_law(1.0);
    CHECK(linear.potential(2.0) == Approx(2.0));  // y^2/2

    auto fd = MonotoneGraph::fast_diffusion();
    const double quad = oracle::trapezoid([](double r) { return std::sqrt(r); }, 0.0, 4.0);
    CHECK(quad == Approx(16.0 / 3.0).margin(1e-6));
    CHECK(fd.potential(4.0) == Approx(16.0 / 3.0).margin(1e-12));

    for (auto& [name, g] : oracle::graph_zoo()) {
        INFO(name);
        CHECK(g.potential(0.0) == 0.0);
    }
}

TEST_CASE("custom potential falls back to quadrature") {
    auto g = MonotoneGraph::custom("atan_like", [](double s) { return std::atan(s) + 0.2 * s; });
    const double ref = oracle::trapezoid([](double s) { return std::atan(s) + 0.2 * s; }, 0.0, 2.0);
    CHECK(g.potential(2.0) == Approx(ref).margin(1e-7));
    CHECK(g.potential(-2.0) == Approx(oracle::trapezoid(
        [](double s) { return -(std::atan(s) + 0.2 * s); }, -2.0, 0.0)).margin(1e-7));
}

TEST_CASE("conjugate anchors") {
    auto linear = MonotoneGraph::power_law(1.0);
    CHECK(linear.conjugate(3.0) == Approx(4.5));  // quadratic is self-conjugate
    for (auto& [name, g] : oracle::graph_zoo()) {
        INFO(name);
        CHECK(g.conjugate(0.0) == Approx(0.0).margin(1e-12));
    }

    // oracle: dense grid + golden refinement of sup{py - j(y)}
    auto fd = MonotoneGraph::fast_diffusion();
    auto neg = [&](double y) { return -(2.0 * y - fd.potential(y)); };
    double coarse_best = 0.0, coarse_arg = 0.0;
    for (int i = 0; i <= 20000; ++i) {
        const double y = -100.0 + i * 0.01;
        if (-neg(y) > coarse_best) {
            coarse_best = -neg(y);
            coarse_arg = y;
        }
    }
    const double ystar = oracle::golden_min(neg, coarse_arg - 0.02, coarse_arg + 0.02);
    CHECK(2.0 * ystar - fd.potential(ystar) == Approx(8.0 / 3.0).margin(1e-8));
    CHECK(fd.conjugate(2.0) == Approx(8.0 / 3.0).margin(1e-10));

    // out-of-range conjugate of a bounded-range graph is +inf
    auto step = MonotoneGraph::step();
    CHECK(std::isinf(step.conjugate(2.0)));
    CHECK(step.conjugate(0.7) == Approx(0.0).margin(1e-12));
}

TEST_CASE("moreau envelope matches brute-force minimization") {
    auto linear = MonotoneGraph::power_law(1.0);
    // grid oracle for j_lambda(1), lambda=1
    double best = 1e300;
    for (int i = 0; i <= 400000; ++i) {
        const double v = -2.0 + i * 1e-5;
        best = std::min(best, linear.potential(v) + 0.5 * (1.0 - v) * (1.0 - v));
    }
    CHECK(best == Approx(0.25).margin(1e-9));
    CHECK(linear.moreau_envelope(1.0, 1.0) == Approx(0.25).margin(1e-12));

    auto sgn = MonotoneGraph::sign_graph();
    CHECK(sgn.moreau_envelope(1.0, 2.0) == Approx(1.5).margin(1e-12));  // Huber value

    for (auto& [name, g] : oracle::graph_zoo()) {
        INFO(name);
        CHECK(g.moreau_envelope(0.37, 0.0) == Approx(0.0).margin(1e-14));
    }
}

TEST_CASE("fenchel gap anchors") {
    auto linear = MonotoneGraph::power_law(1.0);
    CHECK(linear.fenchel_gap(3.0, 3.0) == Approx(0.0).margin(1e-12));
    CHECK(linear.fenchel_gap(1.0, 0.0) == Approx(0.5).margin(1e-12));
    auto step = MonotoneGraph::step();
    CHECK(step.fenchel_gap(0.0, 0.7) == Approx(0.0).margin(1e-12));  // multivalued equality
}

TEST_CASE("randomized convex-calculus properties", "[property]") {
    std::mt19937_64 rng(20240811);
    std::uniform_real_distribution<double> pt(-8.0, 8.0);
    std::uniform_real_distribution<double> lg(-3.0, 1.0);

    for (auto& [name, g] : oracle::graph_zoo()) {
        INFO(name);
        for (int trial = 0; trial < 300; ++trial) {
            const double lambda = std::pow(10.0, lg(rng));
            const double u = pt(rng), v = pt(rng);

            const double ru = g.resolvent(lambda, u);
            const double rv = g.resolvent(lambda, v);
            CHECK(std::abs(ru - rv) <= std::abs(u - v) + 1e-10);

            const double yu = g.yosida(lambda, u);
            const double yv = g.yosida(lambda, v);
            CHECK(std::abs(yu - yv) <= std::abs(u - v) / lambda + 1e-9);
            if (u < v) CHECK(yu <= yv + 1e-9);

            // envelope domination and the Moreau identity against golden search
            const double env = g.moreau_envelope(lambda, u);
            CHECK(env <= g.potential(u) + 1e-10);
            auto objective = [&](double w) {
                return g.potential(w) + (u - w) * (u - w) / (2.0 * lambda);
            };
            const double lim = std::abs(u) + 1.0;
            const double wstar = oracle::golden_min(objective, -lim, lim);
            CHECK(env == Approx(objective(wstar)).margin(1e-6));
            CHECK(std::abs(wstar - ru) < 1e-5);

            // Fenchel-Young inequality, equality on graph pairs
            const double p = g.minimal_section(v);
            const double gap_any = g.fenchel_gap(u, p);
            CHECK(gap_any >= -1e-9);
            const double gap_graph = g.fenchel_gap(v, p);
            CHECK(gap_graph <= 1e-8 * (1.0 + std::abs(p * v)));

            // inclusion: yosida value lies in Psi(resolvent)
            const auto vals = g.values(ru);
            CHECK(yu >= vals.lo - 1e-8 * (1.0 + std::abs(yu)));
            CHECK(yu <= vals.hi + 1e-8 * (1.0 + std::abs(yu)));
        }
    }
}

TEST_CASE("moreau envelope increases to j as lambda decreases") {
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> pt(-5.0, 5.0);
    for (auto& [name, g] : oracle::graph_zoo()) {
        INFO(name);
        for (int trial = 0; trial < 50; ++trial) {
            const double u = pt(rng);
            double prev = -1.0;
            const double lambda_min = 1e-3;
            for (double lambda : {1.0, 0.1, 0.01, lambda_min}) {
                const double env = g.moreau_envelope(lambda, u);
                CHECK(env >= prev - 1e-10);
                prev = env;
            }
            // j(u) - j_lambda(u) <= (lambda/2) Psi0(u)^2 by convexity
            const double p = g.minimal_section(u);
            CHECK(g.potential(u) - prev <=
                  0.5 * lambda_min * p * p + 1e-8 * (1.0 + std::abs(g.potential(u))));
        }
    }
}

TEST_CASE("h3 symmetry and superlinearity probes") {
    std::vector<double> grid;
    for (double s = 1e-2; s <= 1.2e3; s *= 1.4) grid.push_back(s);

    auto even = MonotoneGraph::power_law(2.0);
    auto rep = even.check_h3(grid);
    CHECK(rep.sup_ratio == Approx(1.0).margin(1e-9));
    CHECK(rep.surjective);
    CHECK(rep.full_domain);

    auto skew = MonotoneGraph::custom("skew_linear",
                                      [](double s) { return s >= 0 ? s : 2.0 * s; });
    auto rep2 = skew.check_h3(grid);
    CHECK(rep2.sup_ratio == Approx(2.0).margin(1e-6));

    std::vector<double> mild;
    for (double s = 1e-2; s <= 500.0; s *= 1.4) mild.push_back(s);
    auto expg = MonotoneGraph::exponential_power(1.0, 1.0);
    auto rep3 = expg.check_h3(mild);
    CHECK(rep3.sup_ratio == Approx(1.0).margin(1e-9));
    CHECK(rep3.surjective);

    // bounded range: the superlinearity probe of j must fail
    auto step = MonotoneGraph::step();
    auto rep4 = step.check_h3(grid);
    CHECK_FALSE(rep4.surjective);

    CHECK_THROWS_AS(even.check_h3(std::vector<double>{1.0, 0.5, 2.0, 3.0}),
                    std::invalid_argument);
}

TEST_CASE("exponential overflow saturates with a flag") {
    auto g = MonotoneGraph::exponential_power(1.0, 1.0);
    g.clear_overflow();
    const double v = g.minimal_section(800.0);
    CHECK(std::isfinite(v));
    CHECK(v == MonotoneGraph::kSaturation);
    CHECK(g.overflow_occurred());
    g.clear_overflow();
    CHECK_FALSE(g.overflow_occurred());
}

TEST_CASE("piecewise construction validates monotonicity and normalization") {
    CHECK_THROWS_AS(MonotoneGraph::piecewise_linear({{0.0, 1.0, 2.0}}, 0.0, 0.0),
                    std::invalid_argument);  // 0 not in Psi(0)
    CHECK_THROWS_AS(MonotoneGraph::piecewise_linear({{0.0, -1.0, 1.0}, {1.0, 0.5, 0.7}}, 0.0, 0.0),
                    std::invalid_argument);  // decreasing across nodes
    CHECK_THROWS_AS(MonotoneGraph::custom("bad", [](double s) { return -s; }),
                    std::invalid_argument);  // not monotone
    CHECK_THROWS_AS(MonotoneGraph::custom("shifted", [](double s) { return s + 1.0; }),
                    std::invalid_argument);  // Psi(0) != 0
}
