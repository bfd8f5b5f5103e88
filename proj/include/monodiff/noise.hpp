#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "monodiff/errors.hpp"
#include "monodiff/rng.hpp"
#include "monodiff/spatial_operator.hpp"

namespace monodiff {

/// Target space of a Hilbert-Schmidt norm: H = H^{-1}, or D(A^gamma).
enum class HsTarget { H, FractionalDomain };

/// Diagonal-in-eigenbasis diffusion coefficients (additive case) or the
/// smoothed multiplication map B(X) = scale*(1+eps A)^{-delta} X
/// (multiplicative case).
struct NoiseSpec {
    enum class Kind { Additive, Multiplicative };

    Kind kind = Kind::Additive;
    std::vector<double> g;    // mode coefficients, sorted eigen order (additive)
    double gamma = 1.0;       // smoothness target; must exceed dim/2
    std::size_t K = 0;        // truncation (modes actually driven)
    std::uint64_t seed = 0;

    // multiplicative parameters
    double scale = 0.0;
    double eps = 0.0;
    double delta = 0.0;
    std::vector<double> anchor;  // optional: freeze the multiplier at a fixed field

    static NoiseSpec additive(std::vector<double> coeffs, double gamma, std::uint64_t seed) {
        NoiseSpec s;
        s.kind = Kind::Additive;
        s.K = coeffs.size();
        s.g = std::move(coeffs);
        s.gamma = gamma;
        s.seed = seed;
        return s;
    }

    /// g_k = amplitude * mu_k^{-exponent} on the leading K modes (K=0: all).
    static NoiseSpec additive_eigen_decay(const SpatialOperator& op, double exponent,
                                          double amplitude, double gamma,
                                          std::size_t K, std::uint64_t seed) {
        const std::size_t k = K == 0 ? op.modes() : K;
        std::vector<double> coeffs(k);
        for (std::size_t i = 0; i < k; ++i) coeffs[i] = amplitude * std::pow(op.eigenvalue(i), -exponent);
        return additive(std::move(coeffs), gamma, seed);
    }

    static NoiseSpec zero_noise(const SpatialOperator& op, double gamma, std::uint64_t seed) {
        return additive(std::vector<double>(op.modes(), 0.0), gamma, seed);
    }

    static NoiseSpec multiplicative(double scale, double eps, double delta, double gamma,
                                    std::uint64_t seed) {
        if (!(eps > 0) && delta != 0.0)
            throw std::invalid_argument("multiplicative: eps must be positive when delta > 0");
        NoiseSpec s;
        s.kind = Kind::Multiplicative;
        s.scale = scale;
        s.eps = eps;
        s.delta = delta;
        s.gamma = gamma;
        s.seed = seed;
        return s;
    }

    void validate(const SpatialOperator& op) const {
        if (!(gamma > 0.5 * op.dim()))
            throw GammaViolation("noise gamma must exceed dim/2: gamma=" + std::to_string(gamma) +
                                 ", dim=" + std::to_string(op.dim()));
        if (kind == Kind::Additive) {
            if (g.size() > op.modes()) throw ConfigInvalid("more mode coefficients than grid modes");
            if (K != g.size()) throw ConfigInvalid("truncation K must match coefficient count");
        } else {
            if (!anchor.empty() && anchor.size() != op.points())
                throw ConfigInvalid("anchor field does not match the grid");
        }
    }
};

/// Increments of the truncated cylindrical Wiener process. Values are
/// regenerated on demand from the counter-based generator keyed by
/// (seed, mode, step), so the path is reproducible irrespective of the
/// order or thread in which increments are consumed.
struct WienerPath {
    double dt = 0;
    std::size_t steps = 0;
    std::size_t modes = 0;
    std::uint64_t seed = 0;

    /// Delta beta_k over step n: N(0, dt), independent across (k, n).
    double increment(std::size_t mode, std::size_t step) const {
        return std::sqrt(dt) * rng::normal(seed, mode, step);
    }
};

inline WienerPath sample_wiener(std::size_t modes, double dt, std::size_t steps, std::uint64_t seed) {
    if (modes < 1 || steps < 1 || !(dt > 0)) throw std::invalid_argument("sample_wiener: bad arguments");
    return WienerPath{dt, steps, modes, seed};
}

/// ||G||_{HS(L^2, target)} of a diagonal additive spec. A Cauchy tail test
/// flags profiles whose partial sums are still moving: the last K/4 terms
/// must contribute at most 1% of the total.
inline double hs_norm(const NoiseSpec& spec, const SpatialOperator& op, HsTarget target) {
    if (spec.kind != NoiseSpec::Kind::Additive)
        throw std::invalid_argument("hs_norm: additive spec required");
    const std::size_t K = std::min(spec.g.size(), op.modes());
    double total = 0.0, tail = 0.0;
    const std::size_t tail_start = K - std::max<std::size_t>(1, K / 4);
    for (std::size_t k = 0; k < K; ++k) {
        const double mu = op.eigenvalue(k);
        const double w = target == HsTarget::H ? 1.0 / mu : std::pow(mu, 2.0 * spec.gamma);
        const double term = spec.g[k] * spec.g[k] * w;
        total += term;
        if (k >= tail_start) tail += term;
    }
    if (total > 0 && tail > 0.01 * total)
        throw Divergent("HS partial sums fail the tail test: tail fraction " +
                        std::to_string(tail / total));
    return std::sqrt(total);
}

/// Stochastic convolution W_G(t^n) = sum_k g_k beta_k(t^n) e_k at the step
/// times t^0..t^steps, together with delta = sup_n |W_G(t^n)|_inf.
struct ConvolutionPath {
    std::vector<Field> w;
    double delta_sup = 0.0;
};

inline ConvolutionPath convolution_path(const NoiseSpec& spec, const SpatialOperator& op,
                                        const WienerPath& wiener) {
    if (spec.kind != NoiseSpec::Kind::Additive)
        throw std::invalid_argument("convolution_path: additive spec required");
    const std::size_t K = std::min(spec.g.size(), op.modes());
    ConvolutionPath path;
    path.w.reserve(wiener.steps + 1);
    path.w.push_back(op.zero_field());
    std::vector<double> beta(op.modes(), 0.0);
    std::vector<double> coeffs(op.modes(), 0.0);
    for (std::size_t n = 0; n < wiener.steps; ++n) {
        for (std::size_t k = 0; k < K; ++k) {
            beta[k] += wiener.increment(k, n);
            coeffs[k] = spec.g[k] * beta[k];
        }
        path.w.push_back(op.from_coeffs(coeffs));
        path.delta_sup = std::max(path.delta_sup, norm_sup(path.w.back()));
    }
    return path;
}

// ---- multiplicative machinery ------------------------------------------------

/// (1 + eps A)^{-delta} u for real delta >= 0 (spectral).
inline Field fractional_smoothing(const SpatialOperator& op, double eps, double delta, const Field& u) {
    if (delta == 0.0 || eps == 0.0) return u;
    auto c = op.to_coeffs(u);
    for (std::size_t k = 0; k < c.size(); ++k) c[k] *= std::pow(1.0 + eps * op.eigenvalue(k), -delta);
    return op.from_coeffs(c);
}

/// The multiplier field phi of the multiplication operator B(X):
/// (B(X) u)(xi) = phi(xi) u(xi) with phi = scale*(1+eps A)^{-delta} X
/// (or the anchored field if the spec carries one).
inline Field apply_B(const NoiseSpec& spec, const SpatialOperator& op, const Field& X) {
    if (spec.kind != NoiseSpec::Kind::Multiplicative)
        throw std::invalid_argument("apply_B: multiplicative spec required");
    spec.validate(op);
    if (!spec.anchor.empty()) {
        Field a(op, spec.anchor);
        Field phi = fractional_smoothing(op, spec.eps, spec.delta, a);
        phi *= spec.scale;
        return phi;
    }
    Field phi = fractional_smoothing(op, spec.eps, spec.delta, X);
    phi *= spec.scale;
    return phi;
}

/// Diagonal weights d(xi) with ||phi * .||^2_{HS(L^2,target)} = sum phi^2 d.
/// These are the diagonals of A^{-1} (target H) or A^{2 gamma} (target
/// D(A^gamma)) as matrices on value vectors.
inline std::vector<double> hs_diagonal(const SpatialOperator& op, HsTarget target, double gamma) {
    return op.operator_power_diagonal(target == HsTarget::H ? -1.0 : 2.0 * gamma);
}

inline double hs_norm_multiplier(const Field& phi, const std::vector<double>& diag) {
    double s = 0;
    for (std::size_t i = 0; i < phi.size(); ++i) s += phi[i] * phi[i] * diag[i];
    return std::sqrt(std::max(0.0, s));
}

/// Exact Lipschitz constant of X -> B(X) as a map H -> L_HS(L^2, H):
/// the operator norm of d -> phi(d)-multiplication, by power iteration on
/// the associated positive semidefinite form. For an anchored spec the map
/// is constant and L = 0.
inline double lipschitz_constant(const NoiseSpec& spec, const SpatialOperator& op,
                                 int max_iter = 400, double tol = 1e-13) {
    if (spec.kind != NoiseSpec::Kind::Multiplicative)
        throw std::invalid_argument("lipschitz_constant: multiplicative spec required");
    if (!spec.anchor.empty() || spec.scale == 0.0) return 0.0;
    const std::size_t M = op.modes();
    const std::vector<double> diag = hs_diagonal(op, HsTarget::H, spec.gamma);
    // parameterize d = sum a_k sqrt(mu_k) e_k so that |d|_{-1} = |a|_2;
    // the form is a^T T^* D T a with T a = scale * smoothed from_coeffs(...)
    std::vector<double> wk(M);
    for (std::size_t k = 0; k < M; ++k)
        wk[k] = spec.scale * std::sqrt(op.eigenvalue(k)) *
                std::pow(1.0 + spec.eps * op.eigenvalue(k), -spec.delta);
    std::vector<double> a(M, 1.0 / std::sqrt(double(M)));
    double lam = 0.0;
    const double vol = op.cell_volume();
    for (int it = 0; it < max_iter; ++it) {
        // phi = T a
        std::vector<double> c(M);
        for (std::size_t k = 0; k < M; ++k) c[k] = wk[k] * a[k];
        Field phi = op.from_coeffs(c);
        // apply the diagonal, pull back through the adjoint of from_coeffs
        Field dphi = op.zero_field();
        for (std::size_t i = 0; i < M; ++i) dphi[i] = diag[i] * phi[i];
        auto ct = op.to_coeffs(dphi);
        std::vector<double> next(M);
        double nrm = 0.0;
        for (std::size_t k = 0; k < M; ++k) {
            next[k] = wk[k] * ct[k] / vol;
            nrm += next[k] * next[k];
        }
        nrm = std::sqrt(nrm);
        if (nrm == 0.0) return 0.0;
        double lam_new = 0.0;
        for (std::size_t k = 0; k < M; ++k) lam_new += a[k] * next[k];
        for (std::size_t k = 0; k < M; ++k) a[k] = next[k] / nrm;
        if (it > 4 && std::abs(lam_new - lam) <= tol * (1.0 + std::abs(lam_new))) {
            lam = lam_new;
            break;
        }
        lam = lam_new;
    }
    return std::sqrt(std::max(0.0, lam));
}

/// Spatial white-noise field of one step: sum_{k<K} e_k dbeta_k^n.
inline Field white_increment_field(const SpatialOperator& op, const WienerPath& wiener,
                                   std::size_t K, std::size_t step) {
    std::vector<double> c(op.modes(), 0.0);
    const std::size_t kk = std::min(K == 0 ? op.modes() : K, op.modes());
    for (std::size_t k = 0; k < kk; ++k) c[k] = wiener.increment(k, step);
    return op.from_coeffs(c);
}

} // namespace monodiff
