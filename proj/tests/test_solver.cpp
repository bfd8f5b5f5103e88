#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "monodiff/solver.hpp"
#include "oracles.hpp"

using namespace monodiff;
using Catch::Approx;

namespace {

SolverConfig quick_config(double dt, double T, std::vector<double> schedule) {
    SolverConfig cfg;
    cfg.dt = dt;
    cfg.T = T;
    cfg.lambda_schedule = std::move(schedule);
    cfg.inner_tol = 1e-11;
    cfg.snapshots = 17;
    return cfg;
}

} // namespace

TEST_CASE("step_regularized: zero fixed point and linear one-step identity") {
    SpatialOperator op(1, 16);
    auto linear = MonotoneGraph::power_law(1.0);

    const Field zero = op.zero_field();
    Field y = step_regularized(linear, op, 0.5, zero, zero, 1e-2);
    CHECK(norm_l2(y) <= 1e-12);

    const double lambda = 0.25, dt = 5e-3;
    const double c = 1.0 / (1.0 + lambda) + lambda;
    const Field e1 = op.eigenvector(0);
    const Field y1 = step_regularized(linear, op, lambda, e1, zero, dt);
    const double factor = 1.0 / (1.0 + dt * c * op.eigenvalue(0));
    for (std::size_t i = 0; i < y1.size(); ++i)
        CHECK(y1[i] == Approx(factor * e1[i]).margin(1e-9));
}

TEST_CASE("porous medium step converges to the fine-step reference") {
    SpatialOperator op(1, 16);
    auto pm = MonotoneGraph::power_law(2.0);
    const Field x = op.eigenvector(0);
    const double T = 0.05, lambda = 0.1;

    auto march = [&](double dt) {
        SolverConfig cfg = quick_config(dt, T, {lambda});
        DrivingNoise noise = DrivingNoise::zero(op, cfg.steps());
        return solve_shifted(pm, op, x, noise, cfg).state.back();
    };
    const Field coarse = march(1e-3);
    const Field fine = march(1e-5);
    Field diff = coarse;
    diff -= fine;
    CHECK(norm_h_minus1(diff) / norm_h_minus1(fine) < 1e-2);
}

TEST_CASE("solve_additive: zero data stays zero") {
    SpatialOperator op(1, 8);
    auto g = MonotoneGraph::fast_diffusion();
    auto spec = NoiseSpec::zero_noise(op, 1.0, 3);
    SolverConfig cfg = quick_config(1e-3, 0.016, {0.5, 0.25});
    const WienerPath w = sample_wiener(op.modes(), cfg.dt, cfg.steps(), 3);
    auto path = solve_additive(g, op, op.zero_field(), spec, w, cfg);
    for (const auto& f : path.state) CHECK(norm_l2(f) <= 1e-12);
}

TEST_CASE("linear graph matches the lambda-shifted heat semigroup") {
    SpatialOperator op(1, 16);
    auto linear = MonotoneGraph::power_law(1.0);
    const double lambda = 1e-3, dt = 2e-4, T = 0.02;
    SolverConfig cfg = quick_config(dt, T, {lambda});
    auto spec = NoiseSpec::zero_noise(op, 1.0, 1);
    const WienerPath w = sample_wiener(op.modes(), dt, cfg.steps(), 1);
    const Field x = op.eigenvector(0);
    auto path = solve_additive(linear, op, x, spec, w, cfg);

    const double c = 1.0 / (1.0 + lambda) + lambda;
    const double mu = op.eigenvalue(0);
    for (std::size_t s = 0; s < path.times.size(); ++s) {
        const double exact = std::exp(-c * mu * path.times[s]);
        Field diff = path.state[s];
        diff.axpy(-exact, x);
        CHECK(norm_h_minus1(diff) <= 2e-3 * norm_h_minus1(x));
    }
}

TEST_CASE("fast diffusion from a nonnegative bump stays nonnegative and decays") {
    SpatialOperator op(1, 24);
    auto fd = MonotoneGraph::fast_diffusion();
    const Field x = bump_field(op, 0.5, 0.3, 1.0);
    SolverConfig cfg = quick_config(1e-3, 0.064, {0.5, 0.25, 0.125});
    DrivingNoise noise = DrivingNoise::zero(op, cfg.steps());
    auto path = solve_shifted(fd, op, x, noise, cfg);

    double prev = std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < path.state.size(); ++s) {
        for (std::size_t i = 0; i < path.state[s].size(); ++i)
            CHECK(path.state[s][i] >= -1e-8);
        const double nrm = norm_h_minus1(path.state[s]);
        CHECK(nrm <= prev + 1e-9);
        prev = nrm;
    }
}

TEST_CASE("deterministic energy decay across the graph zoo") {
    SpatialOperator op(1, 12);
    SolverConfig cfg = quick_config(2e-3, 0.032, {0.25, 0.125});
    const Field x = bump_field(op, 0.45, 0.35, 0.8);
    for (auto& [name, g] : oracle::graph_zoo()) {
        INFO(name);
        DrivingNoise noise = DrivingNoise::zero(op, cfg.steps());
        auto path = solve_shifted(g, op, x, noise, cfg);
        double prev = std::numeric_limits<double>::infinity();
        for (std::size_t s = 0; s < path.state.size(); ++s) {
            const double half = path.ledger.half_y_norm2[s];
            CHECK(half <= prev + 1e-9);
            prev = half;
        }
    }
}

TEST_CASE("lambda continuation distances shrink along the schedule") {
    SpatialOperator op(1, 16);
    auto pm = MonotoneGraph::power_law(2.0);
    const Field x = bump_field(op, 0.5, 0.3, 1.0);
    SolverConfig cfg = quick_config(1e-3, 0.064, SolverConfig::geometric_schedule(1.0, 6));
    DrivingNoise noise = DrivingNoise::zero(op, cfg.steps());
    auto path = solve_shifted(pm, op, x, noise, cfg);
    const auto& cauchy = path.ledger.lambda_cauchy;
    REQUIRE(cauchy.size() == 5);
    for (std::size_t i = 1; i < cauchy.size(); ++i)
        CHECK(cauchy[i].second <= cauchy[i - 1].second * 1.01 + 1e-12);
}

TEST_CASE("schedule that cannot refine is rejected") {
    SpatialOperator op(1, 8);
    auto pm = MonotoneGraph::power_law(2.0);
    const Field x = bump_field(op, 0.5, 0.3, 1.0);
    // a negligible first refinement followed by a huge one must trip the guard
    SolverConfig cfg = quick_config(2e-3, 0.016, {1.0, 0.9999, 1e-4});
    DrivingNoise noise = DrivingNoise::zero(op, cfg.steps());
    CHECK_THROWS_AS(solve_shifted(pm, op, x, noise, cfg), ScheduleTooCoarse);
}

TEST_CASE("selection extraction: zero path, linear graph, jump graph") {
    SpatialOperator op(1, 8);
    SolverConfig cfg = quick_config(1e-3, 0.016, {0.25});

    auto linear = MonotoneGraph::power_law(1.0);
    {
        DrivingNoise noise = DrivingNoise::zero(op, cfg.steps());
        auto path = solve_shifted(linear, op, op.zero_field(), noise, cfg);
        auto cert = extract_selection(linear, path.lambda_final, path);
        CHECK(cert.max_gap == 0.0);
        CHECK(cert.int_j_state == 0.0);
    }
    {
        const Field x = op.eigenvector(0);
        DrivingNoise noise = DrivingNoise::zero(op, cfg.steps());
        auto path = solve_shifted(linear, op, x, noise, cfg);
        // eta = X/(1+lambda) pointwise for the linear graph
        for (std::size_t s = 0; s < path.state.size(); ++s)
            for (std::size_t i = 0; i < path.state[s].size(); ++i)
                CHECK(path.selection[s][i] ==
                      Approx(path.state[s][i] / 1.25).margin(1e-10));
        auto cert = extract_selection(linear, path.lambda_final, path);
        CHECK(cert.max_gap <= 0.25 * path.ledger.max_abs_state);  // O(lambda)
        CHECK(cert.max_resolvent_gap <= 1e-10);
    }
    {
        auto step = MonotoneGraph::step();
        Field x = op.zero_field();
        for (std::size_t i = 0; i < x.size(); ++i) x[i] = (op.coordinate(int(i)) - 0.5);
        DrivingNoise noise = DrivingNoise::zero(op, cfg.steps());
        auto path = solve_shifted(step, op, x, noise, cfg);
        for (std::size_t s = 0; s < path.state.size(); ++s) {
            for (std::size_t i = 0; i < path.state[s].size(); ++i) {
                const double eta = path.selection[s][i];
                CHECK(eta >= -1e-9);
                CHECK(eta <= 1.0 + 1e-9);
            }
        }
        auto cert = extract_selection(step, path.lambda_final, path);
        CHECK(cert.max_resolvent_gap <= 1e-9);
    }
}

TEST_CASE("weak-form balance holds along solved paths") {
    // X(t^n) + A sum_j dt PsiTilde(X^j) = x + W_G(t^n) up to the accumulated
    // inner tolerance; with the selection eta instead of the full flux the
    // defect is the lambda-weighted remainder.
    SpatialOperator op(1, 12);
    auto fd = MonotoneGraph::fast_diffusion();
    auto spec = NoiseSpec::additive_eigen_decay(op, 2.0, 1.0, 1.0, 0, 88);
    SolverConfig cfg = quick_config(1e-3, 0.032, {0.5, 0.25});
    const Field x = bump_field(op, 0.5, 0.3, 0.5);
    const WienerPath w = sample_wiener(op.modes(), cfg.dt, cfg.steps(), 88);

    ConvolutionPath conv = convolution_path(spec, op, w);
    DrivingNoise noise;
    noise.w.assign(conv.w.begin(), conv.w.begin() + long(cfg.steps()) + 1);
    noise.delta_sup = conv.delta_sup;
    double hs = 0;
    for (std::size_t k = 0; k < spec.g.size(); ++k) hs += spec.g[k] * spec.g[k] / op.eigenvalue(k);
    noise.hs_h_sq.assign(cfg.steps(), hs);

    std::vector<Field> states;
    auto path = solve_shifted(fd, op, x, noise, cfg, &states);
    const double lambda = path.lambda_final;

    Field flux_sum = op.zero_field();
    Field eta_sum = op.zero_field();
    for (std::size_t n = 1; n <= cfg.steps(); ++n) {
        for (std::size_t i = 0; i < flux_sum.size(); ++i) {
            const double eta = fd.yosida(lambda, states[n][i]);
            eta_sum[i] += cfg.dt * eta;
            flux_sum[i] += cfg.dt * (eta + lambda * states[n][i]);
        }
    }
    Field residual = states.back();
    residual += op.apply(flux_sum);
    residual -= x;
    residual -= noise.w.back();
    CHECK(norm_h_minus1(residual) <= cfg.inner_tol * double(cfg.steps()));

    Field residual_eta = states.back();
    residual_eta += op.apply(eta_sum);
    residual_eta -= x;
    residual_eta -= noise.w.back();
    double max_state = 0;
    for (const Field& s : states) max_state = std::max(max_state, norm_h_minus1(s));
    CHECK(norm_h_minus1(residual_eta) <=
          lambda * cfg.T * op.max_eigenvalue() * max_state + 1e-8);
}

TEST_CASE("pathwise solve is deterministic") {
    SpatialOperator op(1, 12);
    auto fd = MonotoneGraph::fast_diffusion();
    auto spec = NoiseSpec::additive_eigen_decay(op, 2.0, 1.0, 1.0, 0, 42);
    SolverConfig cfg = quick_config(1e-3, 0.032, {0.5, 0.25});
    const Field x = bump_field(op, 0.5, 0.25, 0.6);
    const WienerPath w = sample_wiener(op.modes(), cfg.dt, cfg.steps(), 42);
    auto p1 = solve_additive(fd, op, x, spec, w, cfg);
    auto p2 = solve_additive(fd, op, x, spec, w, cfg);
    for (std::size_t s = 0; s < p1.state.size(); ++s)
        for (std::size_t i = 0; i < p1.state[s].size(); ++i)
            CHECK(p1.state[s][i] == p2.state[s][i]);
}

TEST_CASE("two-dimensional solve: decay, positivity, selection") {
    SpatialOperator op(2, 6);
    auto pm = MonotoneGraph::power_law(2.0);
    const Field x = bump_field(op, 0.5, 0.35, 1.0);
    SolverConfig cfg = quick_config(2e-3, 0.032, {0.25, 0.125});
    DrivingNoise noise = DrivingNoise::zero(op, cfg.steps());
    auto path = solve_shifted(pm, op, x, noise, cfg);
    double prev = std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < path.state.size(); ++s) {
        const double nrm = norm_h_minus1(path.state[s]);
        CHECK(nrm <= prev + 1e-9);
        prev = nrm;
        for (std::size_t i = 0; i < path.state[s].size(); ++i)
            CHECK(path.state[s][i] >= -1e-8);
    }
    auto cert = extract_selection(pm, path.lambda_final, path);
    CHECK(cert.max_resolvent_gap <= 1e-9);
}

TEST_CASE("inner solver reports failure when starved") {
    SpatialOperator op(2, 4);  // no Newton fallback in 2d
    auto pm = MonotoneGraph::power_law(2.0);
    SolverConfig cfg = quick_config(0.5, 1.0, {0.01});
    cfg.inner_tol = 1e-300;
    cfg.inner_max_iter = 3;
    cfg.anderson_depth = 0;
    const Field x = bump_field(op, 0.5, 0.3, 2.0);
    DrivingNoise noise = DrivingNoise::zero(op, cfg.steps());
    CHECK_THROWS_AS(solve_shifted(pm, op, x, noise, cfg), InnerNoConvergence);
}

TEST_CASE("picard: anchored coefficient converges one step past the first") {
    SpatialOperator op(1, 8);
    auto pm = MonotoneGraph::power_law(2.0);
    const Field x = bump_field(op, 0.5, 0.3, 0.5);

    auto spec = NoiseSpec::multiplicative(0.3, 0.1, 1.0, 1.0, 17);
    spec.K = op.modes();
    spec.anchor.assign(x.values().begin(), x.values().end());

    SolverConfig cfg = quick_config(2e-3, 0.032, {0.25, 0.125});
    cfg.picard.alpha = 1.0;
    cfg.picard.tol = 1e-9;
    auto result = picard_solve(pm, op, x, spec, cfg, 4);
    CHECK(result.converged);
    CHECK(result.iterations == 2);          // gamma is constant in X
    CHECK(result.distances[1] <= 1e-12);
    CHECK(result.lipschitz == 0.0);
}

TEST_CASE("picard: zero scale reduces to the deterministic solve") {
    SpatialOperator op(1, 8);
    auto fd = MonotoneGraph::fast_diffusion();
    const Field x = bump_field(op, 0.5, 0.3, 0.5);
    auto spec = NoiseSpec::multiplicative(0.0, 0.1, 1.0, 1.0, 18);
    spec.K = op.modes();
    SolverConfig cfg = quick_config(2e-3, 0.032, {0.25, 0.125});
    cfg.picard.alpha = 0.5;
    auto result = picard_solve(fd, op, x, spec, cfg, 2);
    CHECK(result.converged);

    DrivingNoise noise = DrivingNoise::zero(op, cfg.steps());
    auto det = solve_shifted(fd, op, x, noise, cfg);
    Field diff = result.representative.state.back();
    diff -= det.state.back();
    CHECK(norm_h_minus1(diff) <= 1e-10);
}

TEST_CASE("picard distances are reproducible under common random numbers") {
    SpatialOperator op(1, 8);
    auto pm = MonotoneGraph::power_law(2.0);
    const Field x = bump_field(op, 0.5, 0.3, 0.5);
    auto spec = NoiseSpec::multiplicative(0.4, 0.1, 1.0, 1.0, 19);
    spec.K = op.modes();
    const double L = lipschitz_constant(spec, op);
    SolverConfig cfg = quick_config(2e-3, 0.032, {0.25, 0.125});
    cfg.picard.alpha = 4.0 * L * L;
    cfg.picard.tol = 1e-7;
    auto r1 = picard_solve(pm, op, x, spec, cfg, 4);
    auto r2 = picard_solve(pm, op, x, spec, cfg, 4, 3);  // threaded run
    REQUIRE(r1.distances.size() == r2.distances.size());
    for (std::size_t i = 0; i < r1.distances.size(); ++i)
        CHECK(r1.distances[i] == r2.distances[i]);
    CHECK(r1.converged);
    for (double ratio : r1.ratios) CHECK(ratio < 1.0);
}
