#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "monodiff/errors.hpp"
#include "monodiff/monotone_graph.hpp"
#include "monodiff/noise.hpp"
#include "monodiff/spatial_operator.hpp"

namespace monodiff {

struct PicardConfig {
    double alpha = 1.0;
    double tol = 1e-6;
    int max_iter = 15;
};

struct SolverConfig {
    double dt = 1e-3;
    double T = 0.256;
    std::vector<double> lambda_schedule{1.0, 0.5, 0.25, 0.125, 0.0625, 0.03125, 0.015625, 0.0078125};
    double inner_tol = 1e-10;
    int inner_max_iter = 600;
    int anderson_depth = 4;
    int snapshots = 65;
    PicardConfig picard;

    static std::vector<double> geometric_schedule(double lambda0, int levels, double factor = 0.5) {
        std::vector<double> s(levels);
        double v = lambda0;
        for (int i = 0; i < levels; ++i, v *= factor) s[i] = v;
        return s;
    }

    std::size_t steps() const { return std::max<std::size_t>(1, std::size_t(std::llround(T / dt))); }

    void validate() const {
        if (!(dt > 0) || !(T > 0) || dt > T * (1 + 1e-12)) throw ConfigInvalid("need 0 < dt <= T");
        if (lambda_schedule.empty()) throw ConfigInvalid("lambda schedule is empty");
        for (std::size_t i = 0; i < lambda_schedule.size(); ++i) {
            if (!(lambda_schedule[i] > 0)) throw ConfigInvalid("lambda values must be positive");
            if (i > 0 && !(lambda_schedule[i] < lambda_schedule[i - 1]))
                throw ConfigInvalid("lambda schedule must be strictly decreasing");
        }
        if (!(inner_tol > 0) || inner_max_iter < 1) throw ConfigInvalid("bad inner solver parameters");
        if (snapshots < 2) throw ConfigInvalid("need at least 2 snapshots");
    }
};

/// The driving noise of one pathwise solve: cumulative W_G at step times and
/// the per-step squared HS(L^2,H) norm of the frozen coefficient.
struct DrivingNoise {
    std::vector<Field> w;            // size steps+1, w[0] = 0
    std::vector<double> hs_h_sq;     // size steps
    double delta_sup = 0.0;

    static DrivingNoise zero(const SpatialOperator& op, std::size_t steps) {
        DrivingNoise d;
        d.w.assign(steps + 1, op.zero_field());
        d.hs_h_sq.assign(steps, 0.0);
        return d;
    }

    bool is_zero() const {
        for (double v : hs_h_sq) if (v != 0.0) return false;
        return delta_sup == 0.0;
    }
};

/// Diagnostics accumulated along the final-lambda pass; every vector is a
/// running sum (or pointwise value) sampled at the snapshot times.
struct Ledger {
    std::vector<double> half_y_norm2;      // 0.5 |y(t)|^2_{-1}
    std::vector<double> half_x_norm2;      // 0.5 |X(t)|^2_{-1}
    std::vector<double> int_j_z;           // sum dt int j(z_lambda)      (implicit point)
    std::vector<double> int_jstar_eta;     // sum dt int j*(eta_lambda)   (implicit point)
    std::vector<double> int_j_state;       // sum dt int j(X)             (implicit point)
    std::vector<double> int_defect2;       // sum dt int (X - z_lambda)^2
    std::vector<double> int_w2;            // sum dt int W_G^2
    std::vector<double> int_abs_eta;       // sum dt int |eta_lambda|
    std::vector<double> int_flux_state;    // sum dt (PsiTilde(X), X)     (implicit point)
    std::vector<double> stoch_sum;         // sum <X^j, dW_G^j>_{-1}      (left point, Ito)
    std::vector<double> hs_time_integral;  // sum dt ||G(t^j)||^2_{HS(L^2,H)}
    std::vector<double> noise_qv;          // sum |dW_G^j|^2_{-1} (realized quadratic variation)
    std::vector<double> dissipation;       // sum |y^{j+1}-y^j|^2_{-1} (scheme dissipation)
    double delta_sup = 0.0;
    double max_abs_state = 0.0;
    std::vector<std::pair<double, double>> lambda_cauchy;  // (lambda_i, sup_t |y_i - y_{i-1}|_{-1})
    long inner_iterations = 0;
    long newton_fallbacks = 0;
};

struct SolutionPath {
    std::vector<double> times;
    std::vector<Field> state;      // X at snapshot times
    std::vector<Field> selection;  // eta = Psi_lambda(X) at snapshot times
    double lambda_final = 0.0;
    Ledger ledger;
};

namespace detail {

inline std::vector<std::size_t> snapshot_indices(std::size_t steps, int snapshots) {
    const std::size_t count = std::min<std::size_t>(snapshots, steps + 1);
    std::vector<std::size_t> idx;
    idx.reserve(count);
    for (std::size_t s = 0; s < count; ++s) {
        const std::size_t i = std::size_t(std::llround(double(s) * double(steps) / double(count - 1)));
        if (idx.empty() || i > idx.back()) idx.push_back(i);
    }
    return idx;
}

/// Solves X + dt A PsiTilde_lambda(X) = b by the spectrally preconditioned
/// damped fixed point with Anderson mixing; the preconditioner Lipschitz
/// estimate c adapts to the slopes actually met. A semismooth Newton
/// fallback on the inverse-graph substitution covers badly conditioned
/// (steep or jump) graphs in one dimension.
class ImplicitStep {
public:
    ImplicitStep(const MonotoneGraph& g, const SpatialOperator& op, double lambda, double dt,
                 const SolverConfig& cfg)
        : g_(g), op_(op), lambda_(lambda), dt_(dt), cfg_(cfg) {
        c_ = lambda_ + 1.0;
    }

    double flux_scalar(double s) const { return g_.yosida(lambda_, s) + lambda_ * s; }

    Field flux_field(const Field& v) const {
        Field f = op_.zero_field();
        for (std::size_t i = 0; i < v.size(); ++i) f[i] = flux_scalar(v[i]);
        return f;
    }

    /// Selection eta = Psi_lambda(X) pointwise.
    Field selection_field(const Field& v) const {
        Field f = op_.zero_field();
        for (std::size_t i = 0; i < v.size(); ++i) f[i] = g_.yosida(lambda_, v[i]);
        return f;
    }

    long iterations_used() const { return iterations_; }
    long newton_fallbacks() const { return fallbacks_; }

    Field solve(const Field& b, const Field& x0) {
        seed_slope_estimate(b, x0);
        Field v = x0;
        Field flux = flux_field(v);
        Field best = v;
        double best_res = std::numeric_limits<double>::infinity();
        double prev_res = std::numeric_limits<double>::infinity();
        double omega = 1.0;
        int bad_streak = 0;
        hist_v_.clear();
        hist_f_.clear();

        for (int it = 0; it < cfg_.inner_max_iter; ++it) {
            ++iterations_;
            Field r = op_.apply(flux);
            r *= dt_;
            r += v;
            r -= b;
            auto rc = op_.to_coeffs(r);
            double res2 = 0.0;
            for (std::size_t k = 0; k < rc.size(); ++k) res2 += rc[k] * rc[k] / op_.eigenvalue(k);
            const double res = std::sqrt(res2);
            if (res < best_res) {
                best_res = res;
                best = v;
            }
            if (res <= cfg_.inner_tol) return v;

            if (res > prev_res) {
                ++bad_streak;
                hist_v_.clear();
                hist_f_.clear();
                if (bad_streak >= 2) omega = std::max(omega * 0.5, 1.0 / 32.0);
            } else {
                bad_streak = 0;
                omega = std::min(1.0, omega * 1.25);
            }
            prev_res = res;

            // preconditioned residual d = (1 + dt c A)^{-1} r
            for (std::size_t k = 0; k < rc.size(); ++k) rc[k] /= 1.0 + dt_ * c_ * op_.eigenvalue(k);
            Field d = op_.from_coeffs(rc);

            Field v_next = anderson_step(v, d, omega);
            Field flux_next = flux_field(v_next);
            update_slope_estimate(v, v_next, flux, flux_next);
            v = std::move(v_next);
            flux = std::move(flux_next);
        }

        // fallback: semismooth Newton on the inverse-graph substitution
        if (op_.dim() == 1) {
            ++fallbacks_;
            Field out = op_.zero_field();
            if (newton_1d(b, best, out)) return out;
        }
        throw InnerNoConvergence(
            "implicit step did not reach tol " + std::to_string(cfg_.inner_tol) +
                " (best residual " + std::to_string(best_res) + "); consider reducing dt",
            best_res);
    }

private:
    void seed_slope_estimate(const Field& b, const Field& x0) {
        double range = 1.0;
        for (std::size_t i = 0; i < b.size(); ++i)
            range = std::max({range, std::abs(b[i]), std::abs(x0[i])});
        double cmax = lambda_;
        double prev_s = -range, prev_f = flux_scalar(-range);
        for (int i = 1; i <= 64; ++i) {
            const double s = -range + 2.0 * range * i / 64.0;
            const double f = flux_scalar(s);
            cmax = std::max(cmax, (f - prev_f) / (s - prev_s));
            prev_s = s;
            prev_f = f;
        }
        c_ = std::min(cmax, lambda_ + 1.0 / lambda_);
    }

    void update_slope_estimate(const Field& v0, const Field& v1, const Field& f0, const Field& f1) {
        double cmax = c_;
        for (std::size_t i = 0; i < v0.size(); ++i) {
            const double dv = std::abs(v1[i] - v0[i]);
            if (dv > 1e-12) cmax = std::max(cmax, std::abs(f1[i] - f0[i]) / dv);
        }
        cmax = std::min(cmax, lambda_ + 1.0 / lambda_);
        if (cmax > c_ * 1.2) {
            c_ = cmax;
            hist_v_.clear();
            hist_f_.clear();
        }
    }

    Field anderson_step(const Field& v, const Field& d, double omega) {
        Field f = d;
        f *= -1.0;  // residual of the fixed-point map v -> v - d
        Field v_next = v;
        const std::size_t cols = hist_v_.size();
        bool mixed = false;
        if (cfg_.anderson_depth > 0 && cols > 0) {
            std::vector<std::vector<double>> dF(cols), dV(cols);
            for (std::size_t j = 0; j < cols; ++j) {
                dF[j].resize(f.size());
                dV[j].resize(f.size());
                const Field& fj = hist_f_[j];
                const Field& vj = hist_v_[j];
                const Field& fj1 = (j + 1 < cols) ? hist_f_[j + 1] : f;
                const Field& vj1 = (j + 1 < cols) ? hist_v_[j + 1] : v;
                for (std::size_t i = 0; i < f.size(); ++i) {
                    dF[j][i] = fj1[i] - fj[i];
                    dV[j][i] = vj1[i] - vj[i];
                }
            }
            std::vector<double> gram(cols * cols, 0.0), rhs(cols, 0.0);
            for (std::size_t a = 0; a < cols; ++a) {
                for (std::size_t bc = a; bc < cols; ++bc) {
                    double s = 0;
                    for (std::size_t i = 0; i < f.size(); ++i) s += dF[a][i] * dF[bc][i];
                    gram[a * cols + bc] = gram[bc * cols + a] = s;
                }
                double s = 0;
                for (std::size_t i = 0; i < f.size(); ++i) s += dF[a][i] * f[i];
                rhs[a] = s;
            }
            double trace = 0;
            for (std::size_t a = 0; a < cols; ++a) trace += gram[a * cols + a];
            for (std::size_t a = 0; a < cols; ++a) gram[a * cols + a] += 1e-12 * trace + 1e-300;
            if (solve_small(gram, rhs, cols)) {
                for (std::size_t i = 0; i < f.size(); ++i) {
                    double corr = 0;
                    for (std::size_t j = 0; j < cols; ++j) corr += rhs[j] * (dV[j][i] + omega * dF[j][i]);
                    v_next[i] = v[i] + omega * f[i] - corr;
                }
                mixed = true;
            }
        }
        if (!mixed) v_next.axpy(omega, f);
        hist_v_.push_back(v);
        hist_f_.push_back(f);
        while (int(hist_v_.size()) > std::max(1, cfg_.anderson_depth)) {
            hist_v_.pop_front();
            hist_f_.pop_front();
        }
        return v_next;
    }

    static bool solve_small(std::vector<double>& a, std::vector<double>& b, std::size_t n) {
        for (std::size_t col = 0; col < n; ++col) {
            std::size_t piv = col;
            for (std::size_t row = col + 1; row < n; ++row)
                if (std::abs(a[row * n + col]) > std::abs(a[piv * n + col])) piv = row;
            if (std::abs(a[piv * n + col]) < 1e-300) return false;
            if (piv != col) {
                for (std::size_t j = 0; j < n; ++j) std::swap(a[col * n + j], a[piv * n + j]);
                std::swap(b[col], b[piv]);
            }
            for (std::size_t row = col + 1; row < n; ++row) {
                const double fmul = a[row * n + col] / a[col * n + col];
                for (std::size_t j = col; j < n; ++j) a[row * n + j] -= fmul * a[col * n + j];
                b[row] -= fmul * b[col];
            }
        }
        for (std::size_t row = n; row-- > 0;) {
            double s = b[row];
            for (std::size_t j = row + 1; j < n; ++j) s -= a[row * n + j] * b[j];
            b[row] = s / a[row * n + row];
        }
        return true;
    }

    // inverse of PsiTilde_lambda through a single resolvent call:
    // z = (1 + Lambda Psi)^{-1}(w / lambda), Lambda = (1 + lambda^2)/lambda,
    // then v = (z + lambda w)/(1 + lambda^2).
    double flux_inverse(double w) const {
        const double Lambda = (1.0 + lambda_ * lambda_) / lambda_;
        const double z = g_.resolvent(Lambda, w / lambda_);
        return (z + lambda_ * w) / (1.0 + lambda_ * lambda_);
    }

    bool newton_1d(const Field& b, const Field& v_start, Field& out) {
        const std::size_t n = op_.points();
        const double ih2 = dt_ / (op_.h() * op_.h());
        std::vector<double> w(n), H(n), dlt(n);
        for (std::size_t i = 0; i < n; ++i) w[i] = flux_scalar(v_start[i]);
        const double slope_lo = 0.5 * lambda_ / (1.0 + lambda_ * lambda_);
        const double slope_hi = 1.0 / lambda_;

        auto eval_residual = [&](const std::vector<double>& wv, std::vector<double>& Hv) {
            double nrm = 0;
            for (std::size_t i = 0; i < n; ++i) {
                const double wl = i > 0 ? wv[i - 1] : 0.0;
                const double wr = i + 1 < n ? wv[i + 1] : 0.0;
                Hv[i] = flux_inverse(wv[i]) + ih2 * (2.0 * wv[i] - wl - wr) - b[i];
                nrm += Hv[i] * Hv[i];
            }
            return std::sqrt(nrm);
        };

        double hn = eval_residual(w, H);
        std::vector<double> diag(n), wt(n), Ht(n);
        for (int it = 0; it < 80; ++it) {
            Field r = op_.zero_field();
            for (std::size_t i = 0; i < n; ++i) r[i] = H[i];
            if (norm_h_minus1(r) <= cfg_.inner_tol) {
                for (std::size_t i = 0; i < n; ++i) out[i] = flux_inverse(w[i]);
                return true;
            }
            for (std::size_t i = 0; i < n; ++i) {
                const double dgen = 1e-7 * (1.0 + std::abs(w[i]));
                double s = (flux_inverse(w[i] + dgen) - flux_inverse(w[i] - dgen)) / (2.0 * dgen);
                diag[i] = std::clamp(s, slope_lo, slope_hi) + 2.0 * ih2;
            }
            // Thomas solve of (diag, -ih2, -ih2) dlt = -H
            std::vector<double> cp(n), dp(n);
            cp[0] = -ih2 / diag[0];
            dp[0] = -H[0] / diag[0];
            for (std::size_t i = 1; i < n; ++i) {
                const double den = diag[i] + ih2 * cp[i - 1];
                cp[i] = -ih2 / den;
                dp[i] = (-H[i] + ih2 * dp[i - 1]) / den;
            }
            dlt[n - 1] = dp[n - 1];
            for (std::size_t i = n - 1; i-- > 0;) dlt[i] = dp[i] - cp[i] * dlt[i + 1];

            double t = 1.0;
            bool accepted = false;
            for (int ls = 0; ls < 40; ++ls, t *= 0.5) {
                for (std::size_t i = 0; i < n; ++i) wt[i] = w[i] + t * dlt[i];
                const double hn_t = eval_residual(wt, Ht);
                if (hn_t <= (1.0 - 1e-4 * t) * hn) {
                    w.swap(wt);
                    H.swap(Ht);
                    hn = hn_t;
                    accepted = true;
                    break;
                }
            }
            if (!accepted) return false;
        }
        return false;
    }

    const MonotoneGraph& g_;
    const SpatialOperator& op_;
    double lambda_;
    double dt_;
    const SolverConfig& cfg_;
    double c_;
    std::deque<Field> hist_v_;
    std::deque<Field> hist_f_;
    long iterations_ = 0;
    long fallbacks_ = 0;
};

} // namespace detail

/// One implicit Euler step of the shifted random equation:
/// y^{n+1} + dt A PsiTilde_lambda(y^{n+1} + W^{n+1}) = y^n.
inline Field step_regularized(const MonotoneGraph& g, const SpatialOperator& op, double lambda,
                              const Field& y_n, const Field& w_next, double dt,
                              const SolverConfig& cfg = {}) {
    if (!(lambda > 0)) throw std::invalid_argument("lambda must be positive");
    detail::ImplicitStep stepper(g, op, lambda, dt, cfg);
    Field b = y_n;
    b += w_next;
    Field x = stepper.solve(b, b);
    x -= w_next;
    return x;
}

/// Pathwise solve of the shifted equation under a given driving noise path,
/// with lambda-continuation along cfg.lambda_schedule (warm-starting each
/// level from the previous one) and full diagnostics on the final level.
/// When full_states is given it receives X(t^n) = y(t^n) + W(t^n) at every
/// step time of the final level.
inline SolutionPath solve_shifted(const MonotoneGraph& g, const SpatialOperator& op, const Field& x,
                                  const DrivingNoise& noise, const SolverConfig& cfg,
                                  std::vector<Field>* full_states = nullptr) {
    cfg.validate();
    if (!x.all_finite()) throw NonFiniteInput("initial state has non-finite entries");
    const std::size_t steps = cfg.steps();
    if (noise.w.size() != steps + 1) throw MissingNoiseLedger("driving noise does not cover the horizon");
    if (noise.hs_h_sq.size() != steps) throw MissingNoiseLedger("per-step HS norms missing");

    const auto snap = detail::snapshot_indices(steps, cfg.snapshots);
    SolutionPath path;
    path.lambda_final = cfg.lambda_schedule.back();
    Ledger& led = path.ledger;

    std::vector<Field> y_prev;  // previous lambda level, all step times

    for (std::size_t li = 0; li < cfg.lambda_schedule.size(); ++li) {
        const double lambda = cfg.lambda_schedule[li];
        const bool final_level = li + 1 == cfg.lambda_schedule.size();
        detail::ImplicitStep stepper(g, op, lambda, cfg.dt, cfg);

        std::vector<Field> y_cur;
        y_cur.reserve(steps + 1);
        y_cur.push_back(x);

        if (final_level) {
            const std::size_t S = snap.size();
            led.half_y_norm2.assign(S, 0.0);
            led.half_x_norm2.assign(S, 0.0);
            led.int_j_z.assign(S, 0.0);
            led.int_jstar_eta.assign(S, 0.0);
            led.int_j_state.assign(S, 0.0);
            led.int_defect2.assign(S, 0.0);
            led.int_w2.assign(S, 0.0);
            led.int_abs_eta.assign(S, 0.0);
            led.int_flux_state.assign(S, 0.0);
            led.stoch_sum.assign(S, 0.0);
            led.hs_time_integral.assign(S, 0.0);
            led.noise_qv.assign(S, 0.0);
            led.dissipation.assign(S, 0.0);
            led.delta_sup = noise.delta_sup;
            if (full_states) {
                full_states->clear();
                full_states->reserve(steps + 1);
            }
        }

        double s_jz = 0, s_jstar = 0, s_jx = 0, s_def = 0, s_w2 = 0, s_abs = 0;
        double s_flux = 0, s_stoch = 0, s_hs = 0, s_qv = 0, s_diss = 0;
        const double vol = op.cell_volume();
        std::size_t snap_cursor = 0;

        auto record_snapshot = [&](std::size_t n, const Field& y_n, const Field& x_n) {
            if (snap_cursor < snap.size() && snap[snap_cursor] == n) {
                const double ny = norm_h_minus1(y_n);
                const double nx = norm_h_minus1(x_n);
                led.half_y_norm2[snap_cursor] = 0.5 * ny * ny;
                led.half_x_norm2[snap_cursor] = 0.5 * nx * nx;
                led.int_j_z[snap_cursor] = s_jz;
                led.int_jstar_eta[snap_cursor] = s_jstar;
                led.int_j_state[snap_cursor] = s_jx;
                led.int_defect2[snap_cursor] = s_def;
                led.int_w2[snap_cursor] = s_w2;
                led.int_abs_eta[snap_cursor] = s_abs;
                led.int_flux_state[snap_cursor] = s_flux;
                led.stoch_sum[snap_cursor] = s_stoch;
                led.hs_time_integral[snap_cursor] = s_hs;
                led.noise_qv[snap_cursor] = s_qv;
                led.dissipation[snap_cursor] = s_diss;
                path.times.push_back(double(n) * cfg.dt);
                path.state.push_back(x_n);
                path.selection.push_back(stepper.selection_field(x_n));
                ++snap_cursor;
            }
        };

        if (final_level) {
            led.max_abs_state = norm_sup(x);
            record_snapshot(0, x, x);  // W(0) = 0, so X(0) = x
            if (full_states) full_states->push_back(x);
        }

        for (std::size_t n = 0; n < steps; ++n) {
            const Field& y_n = y_cur[n];
            Field b = y_n;
            b += noise.w[n + 1];

            Field x0 = b;
            if (!y_prev.empty()) {
                x0 = y_prev[n + 1];
                x0 += noise.w[n + 1];
            }
            Field x_next = stepper.solve(b, x0);

            if (final_level) {
                // the Ito sum is left-point in the state at t^n
                Field x_n = y_n;
                x_n += noise.w[n];
                Field dw = noise.w[n + 1];
                dw -= noise.w[n];
                s_stoch += inner_h_minus1(x_n, dw);
                s_hs += cfg.dt * noise.hs_h_sq[n];
                s_qv += inner_h_minus1(dw, dw);

                // implicit-point terms at X^{n+1}, where the scheme's drift
                // actually acts
                double jz = 0, jst = 0, jx = 0, de = 0, w2 = 0, ab = 0, fl = 0;
                for (std::size_t i = 0; i < x_next.size(); ++i) {
                    const double xv = x_next[i];
                    const double eta = g.yosida(lambda, xv);
                    const double z = xv - lambda * eta;
                    jz += g.potential(z);
                    jst += g.conjugate(eta);
                    jx += g.potential(xv);
                    de += (xv - z) * (xv - z);
                    const double wv = noise.w[n + 1][i];
                    w2 += wv * wv;
                    ab += std::abs(eta);
                    fl += (eta + lambda * xv) * xv;
                }
                s_jz += cfg.dt * vol * jz;
                s_jstar += cfg.dt * vol * jst;
                s_jx += cfg.dt * vol * jx;
                s_def += cfg.dt * vol * de;
                s_w2 += cfg.dt * vol * w2;
                s_abs += cfg.dt * vol * ab;
                s_flux += cfg.dt * vol * fl;
                led.max_abs_state = std::max(led.max_abs_state, norm_sup(x_next));
                if (full_states) full_states->push_back(x_next);
            }

            Field y_next = x_next;
            y_next -= noise.w[n + 1];
            if (final_level) {
                Field dy = y_next;
                dy -= y_n;
                s_diss += inner_h_minus1(dy, dy);
                record_snapshot(n + 1, y_next, x_next);
            }
            y_cur.push_back(std::move(y_next));
        }

        if (!y_prev.empty()) {
            double dist = 0;
            for (std::size_t s : snap) {
                Field d = y_cur[s];
                d -= y_prev[s];
                dist = std::max(dist, norm_h_minus1(d));
            }
            led.lambda_cauchy.emplace_back(lambda, dist);
            const std::size_t nc = led.lambda_cauchy.size();
            if (nc >= 2) {
                // mild wobble at coarse lambda is tolerated; a substantial
                // increase means the previous refinement was a no-op
                const double prev = led.lambda_cauchy[nc - 2].second;
                const double cur = led.lambda_cauchy[nc - 1].second;
                if (cur > prev * 1.5 + 1e-12 && prev > 1e-12)
                    throw ScheduleTooCoarse("lambda continuation distance increased: " +
                                            std::to_string(prev) + " -> " + std::to_string(cur));
            }
        }
        led.inner_iterations += stepper.iterations_used();
        led.newton_fallbacks += stepper.newton_fallbacks();
        y_prev = std::move(y_cur);
    }
    return path;
}

/// Strong solve of the additive-noise equation: samples the stochastic
/// convolution of the diagonal spec and runs the shifted pathwise solver.
inline SolutionPath solve_additive(const MonotoneGraph& g, const SpatialOperator& op, const Field& x,
                                   const NoiseSpec& spec, const WienerPath& wiener,
                                   const SolverConfig& cfg) {
    spec.validate(op);
    const std::size_t steps = cfg.steps();
    if (wiener.steps < steps) throw MissingNoiseLedger("wiener path shorter than the solve horizon");

    DrivingNoise noise;
    bool all_zero = true;
    for (double gv : spec.g) all_zero = all_zero && gv == 0.0;
    if (all_zero) {
        noise = DrivingNoise::zero(op, steps);
    } else {
        ConvolutionPath conv = convolution_path(spec, op, wiener);
        noise.w = std::move(conv.w);
        noise.w.resize(steps + 1, op.zero_field());
        noise.delta_sup = 0.0;
        for (const Field& w : noise.w) noise.delta_sup = std::max(noise.delta_sup, norm_sup(w));
        double hs_h = 0.0;
        for (std::size_t k = 0; k < spec.g.size(); ++k)
            hs_h += spec.g[k] * spec.g[k] / op.eigenvalue(k);
        noise.hs_h_sq.assign(steps, hs_h);
    }
    return solve_shifted(g, op, x, noise, cfg);
}

struct SelectionCertificate {
    double max_gap = 0.0;            // max of j(X)+j*(eta)-eta X over snapshots
    double max_resolvent_gap = 0.0;  // same gap at the resolvent-projected state z
    double int_j_state = 0.0;
    double int_jstar_eta = 0.0;
};

/// Certificate that the stored selection eta(t^n) = Psi_lambda(X(t^n)) is an
/// admissible section: the Fenchel gap at (X, eta) scales with lambda, the
/// gap at the projected state (z, eta) with the scalar-solve tolerance.
inline SelectionCertificate extract_selection(const MonotoneGraph& g, double lambda,
                                              const SolutionPath& path) {
    SelectionCertificate cert;
    for (std::size_t s = 0; s < path.state.size(); ++s) {
        const Field& X = path.state[s];
        const Field& eta = path.selection[s];
        for (std::size_t i = 0; i < X.size(); ++i) {
            cert.max_gap = std::max(cert.max_gap, g.fenchel_gap(X[i], eta[i]));
            const double z = X[i] - lambda * eta[i];
            cert.max_resolvent_gap = std::max(cert.max_resolvent_gap, g.fenchel_gap(z, eta[i]));
        }
    }
    if (!path.ledger.int_j_state.empty()) {
        cert.int_j_state = path.ledger.int_j_state.back();
        cert.int_jstar_eta = path.ledger.int_jstar_eta.back();
    }
    return cert;
}

/// Run fn(member) for member = 0..count-1 on up to `workers` threads;
/// the callable writes into member-indexed slots, so results do not depend
/// on scheduling order.
inline void parallel_members(std::size_t count, int workers, const std::function<void(std::size_t)>& fn) {
    if (workers <= 1 || count <= 1) {
        for (std::size_t m = 0; m < count; ++m) fn(m);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::string error_message;
    std::mutex err_mutex;
    std::vector<std::thread> pool;
    const int nthreads = std::min<int>(workers, int(count));
    for (int t = 0; t < nthreads; ++t) {
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t m = next.fetch_add(1);
                if (m >= count || failed.load()) return;
                try {
                    fn(m);
                } catch (const std::exception& e) {
                    std::lock_guard<std::mutex> lk(err_mutex);
                    failed.store(true);
                    if (error_message.empty()) error_message = e.what();
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (failed.load()) throw Error("ensemble member failed: " + error_message);
}

struct PicardResult {
    SolutionPath representative;  // member 0, final iterate
    std::vector<double> distances;
    std::vector<double> ratios;
    double lipschitz = 0.0;
    double alpha = 0.0;
    int iterations = 0;
    bool converged = false;
    std::vector<double> times;                        // snapshot times
    std::vector<std::vector<Field>> ensemble_states;  // member x snapshot
};

/// Fixed-point iteration of the map that freezes G(t) = B(X^{(k)}(t)),
/// solves the additive problem pathwise, and re-evaluates B. Distances are
/// measured in the exponentially weighted ensemble norm
/// ||X||_alpha = sup_t (E e^{-2 alpha t} |X(t)|_{-1}^2)^{1/2}
/// over a common-random-numbers ensemble (member seeds derive from
/// spec.seed, fixed across iterates).
inline PicardResult picard_solve(const MonotoneGraph& g, const SpatialOperator& op, const Field& x,
                                 const NoiseSpec& spec, const SolverConfig& cfg,
                                 std::size_t ensemble, int workers = 1) {
    if (spec.kind != NoiseSpec::Kind::Multiplicative)
        throw std::invalid_argument("picard_solve: multiplicative spec required");
    spec.validate(op);
    cfg.validate();
    if (ensemble < 1) throw std::invalid_argument("picard_solve: empty ensemble");

    PicardResult result;
    result.lipschitz = lipschitz_constant(spec, op);
    result.alpha = cfg.picard.alpha;
    if (!(result.alpha > result.lipschitz * result.lipschitz))
        throw std::invalid_argument("picard alpha must exceed L^2 = " +
                                    std::to_string(result.lipschitz * result.lipschitz));

    const std::size_t steps = cfg.steps();
    const auto snap = detail::snapshot_indices(steps, cfg.snapshots);
    result.times.resize(snap.size());
    for (std::size_t s = 0; s < snap.size(); ++s) result.times[s] = double(snap[s]) * cfg.dt;

    const std::vector<double> diag_h = hs_diagonal(op, HsTarget::H, spec.gamma);
    const std::size_t K = std::min(spec.K == 0 ? op.modes() : spec.K, op.modes());

    std::vector<std::vector<Field>> cur(ensemble, std::vector<Field>(steps + 1, x));
    std::vector<std::vector<Field>> nxt(ensemble);
    std::vector<SolutionPath> member_paths(ensemble);

    int no_contraction_streak = 0;
    for (int k = 0; k < cfg.picard.max_iter; ++k) {
        parallel_members(ensemble, workers, [&](std::size_t m) {
            const WienerPath wiener = sample_wiener(K, cfg.dt, steps, rng::derive(spec.seed, m));
            DrivingNoise noise;
            noise.w.reserve(steps + 1);
            noise.w.push_back(op.zero_field());
            noise.hs_h_sq.assign(steps, 0.0);
            for (std::size_t n = 0; n < steps; ++n) {
                const Field phi = apply_B(spec, op, cur[m][n]);
                const double hs = hs_norm_multiplier(phi, diag_h);
                noise.hs_h_sq[n] = hs * hs;
                const Field zeta = white_increment_field(op, wiener, K, n);
                Field wn = noise.w.back();
                for (std::size_t i = 0; i < wn.size(); ++i) wn[i] += phi[i] * zeta[i];
                noise.delta_sup = std::max(noise.delta_sup, norm_sup(wn));
                noise.w.push_back(std::move(wn));
            }
            std::vector<Field> states;
            member_paths[m] = solve_shifted(g, op, x, noise, cfg, &states);
            nxt[m] = std::move(states);
        });

        double dist = 0.0;
        for (std::size_t s = 0; s < snap.size(); ++s) {
            double mean = 0.0;
            for (std::size_t m = 0; m < ensemble; ++m) {
                Field d = nxt[m][snap[s]];
                d -= cur[m][snap[s]];
                const double nd = norm_h_minus1(d);
                mean += nd * nd;
            }
            mean /= double(ensemble);
            dist = std::max(dist, std::exp(-2.0 * cfg.picard.alpha * result.times[s]) * mean);
        }
        dist = std::sqrt(dist);
        result.distances.push_back(dist);
        if (result.distances.size() >= 2) {
            const double prev = result.distances[result.distances.size() - 2];
            const double ratio = prev > 0 ? dist / prev : 0.0;
            result.ratios.push_back(ratio);
            if (ratio >= 1.0 && prev > cfg.picard.tol) {
                if (++no_contraction_streak >= 3)
                    throw NoContraction("picard ratios stayed >= 1 for 3 iterations; increase alpha");
            } else {
                no_contraction_streak = 0;
            }
        }
        cur.swap(nxt);
        result.iterations = k + 1;
        if (dist < cfg.picard.tol) {
            result.converged = true;
            break;
        }
    }

    result.representative = std::move(member_paths[0]);
    result.ensemble_states.resize(ensemble);
    for (std::size_t m = 0; m < ensemble; ++m) {
        result.ensemble_states[m].reserve(snap.size());
        for (std::size_t s : snap) result.ensemble_states[m].push_back(cur[m][s]);
    }
    return result;
}

} // namespace monodiff
