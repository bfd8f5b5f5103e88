#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "monodiff/errors.hpp"
#include "monodiff/monotone_graph.hpp"
#include "monodiff/noise.hpp"
#include "monodiff/solver.hpp"
#include "monodiff/spatial_operator.hpp"

namespace monodiff {

/// Outcome of one numerical check; reproducible bit-for-bit from
/// (inputs, seeds). The series rows feed the flat (check,time,measured,bound)
/// CSV; `measured` holds named summary scalars.
struct CheckReport {
    std::string name;
    bool passed = false;
    double tolerance = 0.0;
    std::size_t sample_size = 0;
    std::uint64_t seed = 0;
    std::vector<std::pair<std::string, double>> measured;
    std::vector<std::array<double, 3>> series;  // (time, measured, bound)
    std::string note;
};

/// Discrete residual of the pathwise energy identity at the snapshot times:
/// R(t) = 0.5|X(t)|^2 - 0.5|x|^2 + sum dt (flux, X) - sum <X, dW_G> - 0.5 int ||G||^2.
/// The flux PsiTilde_lambda(X) is the drift the scheme actually integrated
/// (so the residual carries no lambda bias), its time integral is taken at
/// the implicit points where the scheme acts, and the stochastic sum is
/// left-point. What remains is the centered quadratic variation plus the
/// scheme's O(dt) dissipation.
inline std::vector<double> energy_residual_series(const SolutionPath& path) {
    const Ledger& led = path.ledger;
    if (led.half_x_norm2.empty()) throw MissingNoiseLedger("path carries no diagnostics ledger");
    std::vector<double> r(led.half_x_norm2.size());
    for (std::size_t s = 0; s < r.size(); ++s) {
        r[s] = led.half_x_norm2[s] - led.half_x_norm2[0] + led.int_flux_state[s] -
               led.stoch_sum[s] - 0.5 * led.hs_time_integral[s];
    }
    return r;
}

/// Ito energy identity over an ensemble of additive solves. With noise the
/// pass rule is statistical (ensemble mean within 3 standard errors of zero
/// at every snapshot); without noise the identity is deterministic and the
/// residual must shrink at first order when dt is halved.
inline CheckReport check_energy_identity(const MonotoneGraph& g, const SpatialOperator& op,
                                         const Field& x, const NoiseSpec& spec,
                                         const SolverConfig& cfg, std::size_t ensemble,
                                         int workers = 1) {
    CheckReport rep;
    rep.name = "energy_identity";
    rep.seed = spec.seed;

    bool zero_noise = true;
    for (double gv : spec.g) zero_noise = zero_noise && gv == 0.0;

    if (zero_noise) {
        rep.sample_size = 1;
        const WienerPath w = sample_wiener(std::max<std::size_t>(1, spec.g.size()), cfg.dt,
                                           cfg.steps(), spec.seed);
        SolutionPath p1 = solve_additive(g, op, x, spec, w, cfg);
        SolverConfig cfg2 = cfg;
        cfg2.dt = cfg.dt / 2.0;
        const WienerPath w2 = sample_wiener(std::max<std::size_t>(1, spec.g.size()), cfg2.dt,
                                            cfg2.steps(), spec.seed);
        SolutionPath p2 = solve_additive(g, op, x, spec, w2, cfg2);
        const double r1 = std::abs(energy_residual_series(p1).back());
        const double r2 = std::abs(energy_residual_series(p2).back());
        rep.measured = {{"residual_dt", r1}, {"residual_dt_half", r2}};
        const double floor = 1e-13 * (1.0 + norm_h_minus1(x));
        rep.tolerance = 1.5;  // required shrink factor for an O(dt) defect
        rep.passed = (r1 <= floor && r2 <= floor) || r2 * 1.5 <= r1;
        rep.note = "deterministic reduction: integration-by-parts defect, first order in dt";
        rep.series.push_back({p1.times.back(), r1, floor});
        rep.series.push_back({p2.times.back(), r2, floor});
        return rep;
    }

    rep.sample_size = ensemble;
    std::vector<std::vector<double>> residuals(ensemble);
    std::vector<double> times;
    parallel_members(ensemble, workers, [&](std::size_t m) {
        const WienerPath w = sample_wiener(spec.g.size(), cfg.dt, cfg.steps(),
                                           rng::derive(spec.seed, m));
        SolutionPath p = solve_additive(g, op, x, spec, w, cfg);
        residuals[m] = energy_residual_series(p);
        if (m == 0) times = p.times;
    });
    const std::size_t S = residuals[0].size();
    rep.passed = true;
    rep.tolerance = 3.0;  // standard errors
    double worst_pull = 0.0;
    for (std::size_t s = 1; s < S; ++s) {
        double mean = 0;
        for (std::size_t m = 0; m < ensemble; ++m) mean += residuals[m][s];
        mean /= double(ensemble);
        double var = 0;
        for (std::size_t m = 0; m < ensemble; ++m) {
            const double d = residuals[m][s] - mean;
            var += d * d;
        }
        var /= double(ensemble - 1);
        const double se = std::sqrt(var / double(ensemble));
        const double band = 3.0 * se + 1e-14 * (1.0 + norm_h_minus1(x));
        rep.series.push_back({times[s], mean, band});
        if (std::abs(mean) > band) rep.passed = false;
        if (se > 0) worst_pull = std::max(worst_pull, std::abs(mean) / (se + 1e-300));
    }
    rep.measured = {{"worst_pull_se", worst_pull}};
    return rep;
}

/// Mean absolute terminal energy residual over an ensemble; the dt-scaling
/// gate of the energy identity compares this at dt and dt/4.
inline double mean_abs_energy_residual(const MonotoneGraph& g, const SpatialOperator& op,
                                       const Field& x, const NoiseSpec& spec,
                                       const SolverConfig& cfg, std::size_t ensemble,
                                       int workers = 1) {
    std::vector<double> vals(ensemble, 0.0);
    parallel_members(ensemble, workers, [&](std::size_t m) {
        const WienerPath w = sample_wiener(spec.g.size(), cfg.dt, cfg.steps(),
                                           rng::derive(spec.seed, m));
        SolutionPath p = solve_additive(g, op, x, spec, w, cfg);
        vals[m] = std::abs(energy_residual_series(p).back());
    });
    double s = 0;
    for (double v : vals) s += v;
    return s / double(ensemble);
}

/// A priori bound of the regularized solve, with the constant reconstructed
/// from the path's own data: C = |Q_T| + 1, N the smallest threshold with
/// j*(+-s) > 2 C delta s beyond it, and
/// C1 (1+|x|^2) = 2 (0.5|x|^2 + N C delta + (lambda/2) int W^2).
/// Asserts both the energy bound and the lambda-weighted defect bound.
inline CheckReport check_apriori(const SolutionPath& path, const MonotoneGraph& g, const Field& x) {
    const Ledger& led = path.ledger;
    if (led.half_y_norm2.empty()) throw MissingNoiseLedger("path carries no diagnostics ledger");
    CheckReport rep;
    rep.name = "apriori_bound";
    rep.sample_size = 1;

    const double lambda = path.lambda_final;
    const double T = path.times.back();
    const double delta = led.delta_sup;
    const double C = T + 1.0;  // exceeds the discrete |Q_T| (unit domain)

    // tail threshold: smallest grid point beyond which j*(+-s) > 2 C delta s
    double N = 0.0;
    if (delta > 0) {
        double worst_fail = 0.0;
        double s = 1e-3;
        for (int i = 0; i < 90; ++i, s *= 2.0) {
            const double need = 2.0 * C * delta * s;
            if (!(g.conjugate(s) > need) || !(g.conjugate(-s) > need)) worst_fail = s;
        }
        N = worst_fail * 2.0;
    }

    const double x2 = inner_h_minus1(x, x);
    const double K = 0.5 * x2 + N * C * delta + 0.5 * lambda * led.int_w2.back();
    const double rhs = 2.0 * K;
    const double c1 = rhs / (1.0 + x2);

    double worst_ratio = 0.0;
    rep.passed = true;
    for (std::size_t s = 0; s < led.half_y_norm2.size(); ++s) {
        const double lhs = led.half_y_norm2[s] + led.int_j_z[s] + led.int_jstar_eta[s] +
                           led.int_defect2[s] / (2.0 * lambda);
        rep.series.push_back({path.times[s], lhs, rhs * 1.05});
        if (rhs > 0) worst_ratio = std::max(worst_ratio, lhs / rhs);
        if (lhs > rhs * 1.05 + 1e-14) rep.passed = false;
    }
    // lambda-weighted defect (the resolvent-projection residue)
    const double defect = led.int_defect2.back();
    const double defect_bound = 2.0 * lambda * c1 * (1.0 + x2);
    if (defect > defect_bound * 1.05 + 1e-14) rep.passed = false;

    rep.tolerance = 1.05;
    rep.measured = {{"tightest_ratio", worst_ratio},
                    {"c1", c1},
                    {"tail_threshold", N},
                    {"delta_sup", delta},
                    {"defect", defect},
                    {"defect_bound", defect_bound}};
    return rep;
}

/// Two-path stability under common random numbers:
/// E|Y_{G1}(t,x) - Y_{G2}(t,y)|^2 <= |x-y|^2 + int_0^t ||G1-G2||^2_{HS(L2,H)}
/// with 5% slack at every snapshot. Both runs of each member share the
/// Wiener seed derived from spec1.seed. The expectation is estimated with
/// the exact martingale and quadratic-variation control variates (both have
/// mean zero), so the comparison measures the monotone dissipation margin
/// instead of chi-square sampling noise.
inline CheckReport check_two_path_stability(const MonotoneGraph& g, const SpatialOperator& op,
                                            const NoiseSpec& spec1, const NoiseSpec& spec2,
                                            const Field& x, const Field& y,
                                            const SolverConfig& cfg, std::size_t ensemble,
                                            int workers = 1) {
    if (spec1.g.size() != spec2.g.size())
        throw ConfigInvalid("two-path check needs equal truncations");
    CheckReport rep;
    rep.name = "two_path_stability";
    rep.seed = spec1.seed;
    rep.sample_size = ensemble;

    double hs_diff = 0.0;
    for (std::size_t k = 0; k < spec1.g.size(); ++k) {
        const double d = spec1.g[k] - spec2.g[k];
        hs_diff += d * d / op.eigenvalue(k);
    }
    Field dx0 = x;
    dx0 -= y;
    const double dx2 = inner_h_minus1(dx0, dx0);

    const std::size_t steps = cfg.steps();
    const auto snap = detail::snapshot_indices(steps, cfg.snapshots);
    std::vector<double> times(snap.size());
    for (std::size_t s = 0; s < snap.size(); ++s) times[s] = double(snap[s]) * cfg.dt;

    auto driving = [&](const NoiseSpec& spec, const WienerPath& w) {
        DrivingNoise noise;
        bool zero = true;
        for (double gv : spec.g) zero = zero && gv == 0.0;
        if (zero) return DrivingNoise::zero(op, steps);
        ConvolutionPath conv = convolution_path(spec, op, w);
        noise.w = std::move(conv.w);
        noise.w.resize(steps + 1, op.zero_field());
        for (const Field& wf : noise.w) noise.delta_sup = std::max(noise.delta_sup, norm_sup(wf));
        double hs = 0.0;
        for (std::size_t k = 0; k < spec.g.size(); ++k) hs += spec.g[k] * spec.g[k] / op.eigenvalue(k);
        noise.hs_h_sq.assign(steps, hs);
        return noise;
    };

    std::vector<std::vector<double>> lhs(ensemble);
    parallel_members(ensemble, workers, [&](std::size_t m) {
        const std::uint64_t ws = rng::derive(spec1.seed, m);
        const WienerPath w = sample_wiener(spec1.g.size(), cfg.dt, cfg.steps(), ws);
        const DrivingNoise n1 = driving(spec1, w);
        const DrivingNoise n2 = driving(spec2, w);
        std::vector<Field> s1, s2;
        solve_shifted(g, op, x, n1, cfg, &s1);
        solve_shifted(g, op, y, n2, cfg, &s2);
        lhs[m].resize(snap.size());
        double mart = 0, qvdev = 0;
        std::size_t cursor = 0;
        auto record = [&](std::size_t n) {
            if (cursor < snap.size() && snap[cursor] == n) {
                Field d = s1[n];
                d -= s2[n];
                lhs[m][cursor] = inner_h_minus1(d, d) - mart - qvdev;
                ++cursor;
            }
        };
        record(0);
        for (std::size_t n = 0; n < steps; ++n) {
            Field ddw = n1.w[n + 1];
            ddw -= n1.w[n];
            ddw -= n2.w[n + 1];
            ddw += n2.w[n];
            Field dn = s1[n];
            dn -= s2[n];
            mart += 2.0 * inner_h_minus1(ddw, dn);
            qvdev += inner_h_minus1(ddw, ddw) - cfg.dt * hs_diff;
            record(n + 1);
        }
    });

    rep.passed = true;
    rep.tolerance = 1.05;
    double worst_margin = 0.0;
    for (std::size_t s = 0; s < times.size(); ++s) {
        double mean = 0;
        for (std::size_t m = 0; m < ensemble; ++m) mean += lhs[m][s];
        mean /= double(ensemble);
        const double bound = dx2 + times[s] * hs_diff;
        rep.series.push_back({times[s], mean, bound * 1.05});
        if (mean > bound * 1.05 + 1e-13 * (1.0 + dx2)) rep.passed = false;
        if (bound > 0) worst_margin = std::max(worst_margin, mean / bound);
    }
    rep.measured = {{"worst_lhs_over_bound", worst_margin},
                    {"initial_gap_sq", dx2},
                    {"hs_diff_sq", hs_diff}};
    return rep;
}

/// Lipschitz dependence of the state-dependent-noise solution on the initial
/// datum: ratios E|X(t,x)-X(t,y)|^2 / |x-y|^2 must agree within a factor of
/// 3 across pairs and stay under exp(2 L^2 t) (1 + 10%).
inline CheckReport check_lipschitz_solution_map(const MonotoneGraph& g, const SpatialOperator& op,
                                                const NoiseSpec& spec,
                                                const std::vector<std::pair<Field, Field>>& pairs,
                                                const SolverConfig& cfg, std::size_t ensemble,
                                                int workers = 1) {
    CheckReport rep;
    rep.name = "lipschitz_solution_map";
    rep.seed = spec.seed;
    rep.sample_size = ensemble;
    const double L = lipschitz_constant(spec, op);
    rep.measured.push_back({"lipschitz_L", L});

    double rmin = std::numeric_limits<double>::infinity(), rmax = 0.0;
    bool growth_ok = true;
    int used = 0;
    for (const auto& [xa, xb] : pairs) {
        Field d = xa;
        d -= xb;
        const double d2 = inner_h_minus1(d, d);
        if (d2 == 0.0) continue;  // 0/0 pair skipped by convention
        ++used;
        PicardResult ra = picard_solve(g, op, xa, spec, cfg, ensemble, workers);
        PicardResult rb = picard_solve(g, op, xb, spec, cfg, ensemble, workers);
        double pair_sup = 0.0;
        for (std::size_t s = 0; s < ra.times.size(); ++s) {
            double mean = 0;
            for (std::size_t m = 0; m < ensemble; ++m) {
                Field dd = ra.ensemble_states[m][s];
                dd -= rb.ensemble_states[m][s];
                const double nd = norm_h_minus1(dd);
                mean += nd * nd;
            }
            mean /= double(ensemble);
            const double ratio = mean / d2;
            const double growth = std::exp(2.0 * L * L * ra.times[s]) * 1.1;
            rep.series.push_back({ra.times[s], ratio, growth});
            if (ratio > growth + 1e-12) growth_ok = false;
            pair_sup = std::max(pair_sup, ratio);
        }
        rep.measured.push_back({"pair_" + std::to_string(used) + "_sup_ratio", pair_sup});
        rmin = std::min(rmin, pair_sup);
        rmax = std::max(rmax, pair_sup);
    }
    rep.tolerance = 3.0;
    rep.passed = used > 0 && growth_ok && rmax <= 3.0 * rmin;
    rep.measured.push_back({"pair_spread", rmin > 0 ? rmax / rmin : 0.0});
    return rep;
}

/// Selection certificate: the extracted eta lies in Psi(X) up to a Fenchel
/// gap that scales with lambda_final, and the convex integrals are finite.
inline CheckReport check_selection(const SolutionPath& path, const MonotoneGraph& g) {
    CheckReport rep;
    rep.name = "selection_certificate";
    rep.sample_size = path.state.size();
    const double lambda = path.lambda_final;
    const double tol = 10.0 * lambda * (1.0 + path.ledger.max_abs_state);
    double max_gap = 0.0;
    for (std::size_t s = 0; s < path.state.size(); ++s) {
        double snap_gap = 0.0;
        const Field& X = path.state[s];
        const Field& eta = path.selection[s];
        for (std::size_t i = 0; i < X.size(); ++i)
            snap_gap = std::max(snap_gap, g.fenchel_gap(X[i], eta[i]));
        rep.series.push_back({path.times[s], snap_gap, tol});
        max_gap = std::max(max_gap, snap_gap);
    }
    const double jX = path.ledger.int_j_state.empty() ? 0.0 : path.ledger.int_j_state.back();
    const double jse = path.ledger.int_jstar_eta.empty() ? 0.0 : path.ledger.int_jstar_eta.back();
    rep.tolerance = tol;
    rep.passed = max_gap <= tol && std::isfinite(jX) && std::isfinite(jse);
    rep.measured = {{"max_fenchel_gap", max_gap},
                    {"int_j_state", jX},
                    {"int_jstar_eta", jse},
                    {"lambda_final", lambda}};
    return rep;
}

} // namespace monodiff
