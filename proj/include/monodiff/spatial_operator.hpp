#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "monodiff/errors.hpp"
#include "monodiff/monotone_graph.hpp"

namespace monodiff {

class SpatialOperator;

/// A real grid function on the interior points of the operator's grid.
class Field {
public:
    explicit Field(const SpatialOperator& op);
    Field(const SpatialOperator& op, std::vector<double> values);

    const SpatialOperator& op() const { return *op_; }
    std::size_t size() const { return values_.size(); }
    double operator[](std::size_t i) const { return values_[i]; }
    double& operator[](std::size_t i) { return values_[i]; }
    std::span<const double> values() const { return values_; }
    std::span<double> values() { return values_; }

    Field& operator+=(const Field& o) { check(o); for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += o.values_[i]; return *this; }
    Field& operator-=(const Field& o) { check(o); for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= o.values_[i]; return *this; }
    Field& operator*=(double a) { for (double& v : values_) v *= a; return *this; }
    friend Field operator+(Field a, const Field& b) { a += b; return a; }
    friend Field operator-(Field a, const Field& b) { a -= b; return a; }
    friend Field operator*(double a, Field b) { b *= a; return b; }

    /// y += a*x
    void axpy(double a, const Field& x) { check(x); for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += a * x.values_[i]; }

    bool all_finite() const {
        for (double v : values_) if (!std::isfinite(v)) return false;
        return true;
    }

    void check(const Field& o) const {
        if (op_ != o.op_) throw OperatorMismatch("fields belong to different operators");
    }

private:
    const SpatialOperator* op_;
    std::vector<double> values_;
};

/// Discrete Dirichlet Laplacian on the unit interval (dim=1) or unit square
/// (dim=2): second-order central differences on n interior points per axis,
/// h = 1/(n+1). The full spectral decomposition is available in closed form
/// (sine modes), so A^gamma and (1+eps A)^{-m} are applied exactly.
class SpatialOperator {
public:
    SpatialOperator(int dim, int n, std::size_t point_cap = std::size_t(1) << 16)
        : dim_(dim), n_(n), h_(1.0 / (n + 1)) {
        if (dim != 1 && dim != 2) throw std::invalid_argument("dim must be 1 or 2");
        if (n < 2) throw std::invalid_argument("n must be >= 2");
        points_ = dim == 1 ? std::size_t(n) : std::size_t(n) * n;
        if (points_ > point_cap)
            throw SizeLimit("grid size " + std::to_string(points_) + " exceeds cap " + std::to_string(point_cap));

        // 1D sine basis: e_k(x_i) = sqrt(2) sin((k+1) pi x_i), orthonormal in
        // the h-weighted inner product; mu_k = (4/h^2) sin^2((k+1) pi h / 2).
        sine_.resize(std::size_t(n) * n);
        mu_axis_.resize(n);
        for (int k = 0; k < n; ++k) {
            const double s = std::sin(0.5 * (k + 1) * pi() * h_);
            mu_axis_[k] = 4.0 / (h_ * h_) * s * s;
            for (int i = 0; i < n; ++i)
                sine_[std::size_t(k) * n + i] = std::sqrt(2.0) * std::sin((k + 1) * pi() * (i + 1) * h_);
        }

        // global mode ordering: ascending eigenvalue, lexicographic tie-break
        order_.resize(points_);
        std::iota(order_.begin(), order_.end(), std::size_t(0));
        if (dim_ == 2) {
            std::sort(order_.begin(), order_.end(), [&](std::size_t a, std::size_t b) {
                const double ma = mu_axis_[a / n_] + mu_axis_[a % n_];
                const double mb = mu_axis_[b / n_] + mu_axis_[b % n_];
                if (ma != mb) return ma < mb;
                return a < b;
            });
        }
        mu_sorted_.resize(points_);
        for (std::size_t s = 0; s < points_; ++s) mu_sorted_[s] = tensor_mu(order_[s]);
    }

    int dim() const { return dim_; }
    int n() const { return n_; }
    double h() const { return h_; }
    std::size_t points() const { return points_; }
    std::size_t modes() const { return points_; }
    double cell_volume() const { return dim_ == 1 ? h_ : h_ * h_; }

    double eigenvalue(std::size_t k) const { return mu_sorted_[k]; }
    double min_eigenvalue() const { return mu_sorted_.front(); }
    double max_eigenvalue() const { return mu_sorted_.back(); }

    /// Per-axis mode indices (1-based count is index+1) of sorted mode k.
    std::array<int, 2> mode_indices(std::size_t k) const {
        const std::size_t t = order_[k];
        if (dim_ == 1) return {int(t), -1};
        return {int(t / n_), int(t % n_)};
    }

    Field eigenvector(std::size_t k) const {
        Field e = zero_field();
        const std::size_t t = order_[k];
        if (dim_ == 1) {
            for (int i = 0; i < n_; ++i) e[i] = sine_[t * n_ + i];
        } else {
            const std::size_t kx = t / n_, ky = t % n_;
            for (int ix = 0; ix < n_; ++ix)
                for (int iy = 0; iy < n_; ++iy)
                    e[std::size_t(ix) * n_ + iy] = sine_[kx * n_ + ix] * sine_[ky * n_ + iy];
        }
        return e;
    }

    Field zero_field() const { return Field(*this); }

    /// Grid coordinate of interior index i along an axis: (i+1)h.
    double coordinate(int i) const { return (i + 1) * h_; }

    // ---- transforms --------------------------------------------------------

    /// Eigen-coefficients in sorted mode order: c_k = (u, e_k)_{L^2}.
    std::vector<double> to_coeffs(const Field& u) const {
        std::vector<double> c(points_);
        if (dim_ == 1) {
            for (int k = 0; k < n_; ++k) {
                double s = 0;
                for (int i = 0; i < n_; ++i) s += sine_[std::size_t(k) * n_ + i] * u[i];
                c[k] = h_ * s;
            }
        } else {
            std::vector<double> tmp(points_);
            // contract x axis, then y axis
            for (int kx = 0; kx < n_; ++kx)
                for (int iy = 0; iy < n_; ++iy) {
                    double s = 0;
                    for (int ix = 0; ix < n_; ++ix) s += sine_[std::size_t(kx) * n_ + ix] * u[std::size_t(ix) * n_ + iy];
                    tmp[std::size_t(kx) * n_ + iy] = s;
                }
            std::vector<double> ct(points_);
            for (int kx = 0; kx < n_; ++kx)
                for (int ky = 0; ky < n_; ++ky) {
                    double s = 0;
                    for (int iy = 0; iy < n_; ++iy) s += sine_[std::size_t(ky) * n_ + iy] * tmp[std::size_t(kx) * n_ + iy];
                    ct[std::size_t(kx) * n_ + ky] = h_ * h_ * s;
                }
            for (std::size_t k = 0; k < points_; ++k) c[k] = ct[order_[k]];
        }
        return c;
    }

    Field from_coeffs(std::span<const double> c) const {
        if (c.size() != points_) throw std::invalid_argument("coefficient count mismatch");
        Field u = zero_field();
        if (dim_ == 1) {
            for (int i = 0; i < n_; ++i) {
                double s = 0;
                for (int k = 0; k < n_; ++k) s += c[k] * sine_[std::size_t(k) * n_ + i];
                u[i] = s;
            }
        } else {
            std::vector<double> ct(points_);
            for (std::size_t k = 0; k < points_; ++k) ct[order_[k]] = c[k];
            std::vector<double> tmp(points_);
            for (int kx = 0; kx < n_; ++kx)
                for (int iy = 0; iy < n_; ++iy) {
                    double s = 0;
                    for (int ky = 0; ky < n_; ++ky) s += ct[std::size_t(kx) * n_ + ky] * sine_[std::size_t(ky) * n_ + iy];
                    tmp[std::size_t(kx) * n_ + iy] = s;
                }
            for (int ix = 0; ix < n_; ++ix)
                for (int iy = 0; iy < n_; ++iy) {
                    double s = 0;
                    for (int kx = 0; kx < n_; ++kx) s += sine_[std::size_t(kx) * n_ + ix] * tmp[std::size_t(kx) * n_ + iy];
                    u[std::size_t(ix) * n_ + iy] = s;
                }
        }
        return u;
    }

    // ---- operator actions ---------------------------------------------------

    /// A u by the finite-difference stencil (zero Dirichlet rows eliminated).
    Field apply(const Field& u) const {
        Field r = zero_field();
        const double ih2 = 1.0 / (h_ * h_);
        if (dim_ == 1) {
            for (int i = 0; i < n_; ++i) {
                const double l = i > 0 ? u[i - 1] : 0.0;
                const double rr = i + 1 < n_ ? u[i + 1] : 0.0;
                r[i] = (2.0 * u[i] - l - rr) * ih2;
            }
        } else {
            for (int ix = 0; ix < n_; ++ix)
                for (int iy = 0; iy < n_; ++iy) {
                    const std::size_t p = std::size_t(ix) * n_ + iy;
                    const double xl = ix > 0 ? u[p - n_] : 0.0;
                    const double xr = ix + 1 < n_ ? u[p + n_] : 0.0;
                    const double yl = iy > 0 ? u[p - 1] : 0.0;
                    const double yr = iy + 1 < n_ ? u[p + 1] : 0.0;
                    r[p] = (4.0 * u[p] - xl - xr - yl - yr) * ih2;
                }
        }
        return r;
    }

    Field apply_inverse(const Field& u) const { return spectral_map(u, [&](double mu) { return 1.0 / mu; }); }

    /// (1 + eps A)^{-m} u, spectrally exact; eps = 0 is the identity.
    Field smoothing_resolvent(double eps, int m, const Field& u) const {
        if (eps < 0) throw std::invalid_argument("eps must be >= 0");
        if (m < 1) throw std::invalid_argument("m must be >= 1");
        if (eps == 0.0) return u;
        return spectral_map(u, [&](double mu) { return std::pow(1.0 + eps * mu, -double(m)); });
    }

    Field fractional_apply(double gamma, const Field& u) const {
        if (gamma == 0.0) return u;
        return spectral_map(u, [&](double mu) { return std::pow(mu, gamma); });
    }

    // ---- dense kernels (small grids; used by oracle-grade checks) -----------

    /// Row-major matrix of (1 + eps A)^{-m} acting on value vectors.
    std::vector<double> resolvent_matrix(double eps, int m, std::size_t dense_cap = 4096) const {
        return dense_function_matrix([&](double mu) { return std::pow(1.0 + eps * mu, -double(m)); }, dense_cap);
    }

    /// Diagonal of A^power as a matrix on value vectors, e.g. power = -1
    /// gives the Green-function diagonal used by Hilbert-Schmidt sums.
    std::vector<double> operator_power_diagonal(double power) const {
        std::vector<double> d(points_, 0.0);
        const double w = cell_volume();
        for (std::size_t k = 0; k < points_; ++k) {
            const Field e = eigenvector(k);
            const double f = std::pow(mu_sorted_[k], power);
            for (std::size_t p = 0; p < points_; ++p) d[p] += w * f * e[p] * e[p];
        }
        return d;
    }

private:
    static double pi() { return 3.14159265358979323846264338327950288; }

    double tensor_mu(std::size_t t) const {
        return dim_ == 1 ? mu_axis_[t] : mu_axis_[t / n_] + mu_axis_[t % n_];
    }

    template <typename F>
    Field spectral_map(const Field& u, F&& f) const {
        std::vector<double> c = to_coeffs(u);
        for (std::size_t k = 0; k < points_; ++k) c[k] *= f(mu_sorted_[k]);
        return from_coeffs(c);
    }

    template <typename F>
    std::vector<double> dense_function_matrix(F&& f, std::size_t dense_cap) const {
        if (points_ > dense_cap)
            throw SizeLimit("dense matrix assembly capped at " + std::to_string(dense_cap) + " points");
        std::vector<double> mat(points_ * points_, 0.0);
        const double w = cell_volume();
        for (std::size_t k = 0; k < points_; ++k) {
            const Field e = eigenvector(k);
            const double fk = f(mu_sorted_[k]);
            for (std::size_t p = 0; p < points_; ++p) {
                const double a = w * fk * e[p];
                for (std::size_t q = 0; q < points_; ++q) mat[p * points_ + q] += a * e[q];
            }
        }
        return mat;
    }

    int dim_;
    int n_;
    double h_;
    std::size_t points_;
    std::vector<double> sine_;      // n x n 1D sine basis, row k = mode k
    std::vector<double> mu_axis_;   // 1D eigenvalues
    std::vector<std::size_t> order_;    // sorted mode -> tensor index
    std::vector<double> mu_sorted_;
};

inline Field::Field(const SpatialOperator& op) : op_(&op), values_(op.points(), 0.0) {}

inline Field::Field(const SpatialOperator& op, std::vector<double> values)
    : op_(&op), values_(std::move(values)) {
    if (values_.size() != op.points()) throw std::invalid_argument("field size does not match operator grid");
}

// ---- norms and inner products ---------------------------------------------

inline double inner_l2(const Field& u, const Field& v) {
    u.check(v);
    double s = 0;
    for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * v[i];
    return u.op().cell_volume() * s;
}

inline double norm_l2(const Field& u) { return std::sqrt(std::max(0.0, inner_l2(u, u))); }

inline double norm_sup(const Field& u) {
    double s = 0;
    for (std::size_t i = 0; i < u.size(); ++i) s = std::max(s, std::abs(u[i]));
    return s;
}

/// <u,v>_{-1} = (A^{-1}u, v), computed spectrally.
inline double inner_h_minus1(const Field& u, const Field& v) {
    u.check(v);
    const auto cu = u.op().to_coeffs(u);
    const auto cv = u.op().to_coeffs(v);
    double s = 0;
    for (std::size_t k = 0; k < cu.size(); ++k) s += cu[k] * cv[k] / u.op().eigenvalue(k);
    return s;
}

inline double norm_h_minus1(const Field& u) { return std::sqrt(std::max(0.0, inner_h_minus1(u, u))); }

/// |A^gamma u|_{L^2}; gamma = 0 is L^2, gamma = -1/2 is the H^{-1} norm.
inline double fractional_norm(double gamma, const Field& u) {
    const auto c = u.op().to_coeffs(u);
    double s = 0;
    for (std::size_t k = 0; k < c.size(); ++k) s += std::pow(u.op().eigenvalue(k), 2.0 * gamma) * c[k] * c[k];
    return std::sqrt(std::max(0.0, s));
}

/// Max pointwise violation of j((1+eps A)^{-m} u) <= (1+eps A)^{-m} j(u).
/// Nonpositive results mean the inequality holds everywhere.
inline double jensen_violation(const SpatialOperator& op, double eps, int m,
                               const MonotoneGraph& g, const Field& u) {
    Field ju = op.zero_field();
    for (std::size_t i = 0; i < u.size(); ++i) ju[i] = g.potential(u[i]);
    const Field ru = op.smoothing_resolvent(eps, m, u);
    const Field rju = op.smoothing_resolvent(eps, m, ju);
    double worst = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < u.size(); ++i) worst = std::max(worst, g.potential(ru[i]) - rju[i]);
    return worst;
}

// ---- simple initial-data constructors --------------------------------------

inline Field eigenmode_field(const SpatialOperator& op, std::size_t k, double amplitude) {
    Field e = op.eigenvector(k);
    e *= amplitude;
    return e;
}

/// Smooth compactly supported bump centered at c with radius w (per axis
/// distance scaled into a single radial profile).
inline Field bump_field(const SpatialOperator& op, double center, double width, double amplitude) {
    Field u = op.zero_field();
    const int n = op.n();
    auto profile = [&](double rho2) { return rho2 < 1.0 ? std::exp(-rho2 / (1.0 - rho2)) : 0.0; };
    if (op.dim() == 1) {
        for (int i = 0; i < n; ++i) {
            const double d = (op.coordinate(i) - center) / width;
            u[i] = amplitude * profile(d * d);
        }
    } else {
        for (int ix = 0; ix < n; ++ix)
            for (int iy = 0; iy < n; ++iy) {
                const double dx = (op.coordinate(ix) - center) / width;
                const double dy = (op.coordinate(iy) - center) / width;
                u[std::size_t(ix) * n + iy] = amplitude * profile(dx * dx + dy * dy);
            }
    }
    return u;
}

} // namespace monodiff
