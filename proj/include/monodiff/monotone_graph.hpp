#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "monodiff/errors.hpp"

namespace monodiff {

/// Closed value interval of a (possibly multivalued) graph at a point.
struct GraphValues {
    double lo;
    double hi;
    bool single() const { return lo == hi; }
};

struct RootOptions {
    double tol = 1e-13;  // relative residual tolerance of scalar solves
    int max_iter = 256;
};

struct H3Report {
    double sup_ratio;   // empirical sup of j(-s)/j(s) over the grid tail
    bool surjective;    // j finite with superlinear tail probe
    bool full_domain;   // j* finite with superlinear tail probe
};

/// A maximal monotone graph on R x R with potential j normalized so that
/// j(0) = 0 and j >= 0 (requires 0 in Psi(0)).
///
/// Multivalued points are exposed as closed intervals; pointwise evaluation
/// uses the minimal section (element of least absolute value). All built-in
/// families have full domain; jump graphs are constructed with their jumps
/// already filled, so a non-maximal graph cannot be represented.
class MonotoneGraph {
public:
    enum class Family { PowerLaw, FastDiffusion, Logarithmic, ExponentialPower, PiecewiseLinear, Custom };

    /// Values saturate at this magnitude instead of overflowing to inf.
    static constexpr double kSaturation = 1e300;

    // ---- factories -------------------------------------------------------

    /// Psi(s) = sign(s)|s|^r, j(y) = |y|^{r+1}/(r+1).
    static MonotoneGraph power_law(double r, RootOptions opts = {}) {
        if (!(r > 0)) throw std::invalid_argument("power_law: r must be positive");
        MonotoneGraph g(Family::PowerLaw, opts);
        g.r_ = r;
        g.name_ = "power_law(r=" + fmt(r) + ")";
        return g;
    }

    /// Psi(s) = sign(s)sqrt(|s|); the r = 1/2 power law.
    static MonotoneGraph fast_diffusion(RootOptions opts = {}) {
        MonotoneGraph g(Family::FastDiffusion, opts);
        g.r_ = 0.5;
        g.name_ = "fast_diffusion";
        return g;
    }

    /// Psi(s) = sign(s)(log(mu+|s|) - log(mu)).
    static MonotoneGraph logarithmic(double mu, RootOptions opts = {}) {
        if (!(mu > 0)) throw std::invalid_argument("logarithmic: mu must be positive");
        MonotoneGraph g(Family::Logarithmic, opts);
        g.mu_ = mu;
        g.name_ = "logarithmic(mu=" + fmt(mu) + ")";
        return g;
    }

    /// Psi(s) = sign(s)(exp(a|s|^p) - 1), a > 0, p >= 1.
    static MonotoneGraph exponential_power(double a, double p, RootOptions opts = {}) {
        if (!(a > 0) || !(p >= 1)) throw std::invalid_argument("exponential_power: need a>0, p>=1");
        MonotoneGraph g(Family::ExponentialPower, opts);
        g.a_ = a;
        g.p_ = p;
        g.name_ = "exponential_power(a=" + fmt(a) + ",p=" + fmt(p) + ")";
        return g;
    }

    /// One breakpoint of a piecewise-linear graph. The jump at s is the
    /// closed interval [psi_left, psi_right] (equal for a continuous node).
    struct Breakpoint {
        double s;
        double psi_left;
        double psi_right;
    };

    /// Piecewise-linear monotone graph. Between consecutive breakpoints the
    /// graph interpolates linearly from psi_right of the left node to
    /// psi_left of the right node; beyond the end nodes it extends with the
    /// given slopes. Jumps are stored filled, so the result is maximal.
    static MonotoneGraph piecewise_linear(std::vector<Breakpoint> nodes,
                                          double slope_left, double slope_right,
                                          RootOptions opts = {}) {
        if (nodes.empty()) throw std::invalid_argument("piecewise_linear: need at least one breakpoint");
        if (!(slope_left >= 0) || !(slope_right >= 0))
            throw std::invalid_argument("piecewise_linear: extension slopes must be >= 0");
        MonotoneGraph g(Family::PiecewiseLinear, opts);
        for (const auto& b : nodes)
            g.nodes_.push_back({b.s, std::min(b.psi_left, b.psi_right), std::max(b.psi_left, b.psi_right)});
        std::sort(g.nodes_.begin(), g.nodes_.end(), [](const Node& a, const Node& b) { return a.s < b.s; });
        for (std::size_t i = 0; i + 1 < g.nodes_.size(); ++i) {
            if (!(g.nodes_[i].s < g.nodes_[i + 1].s))
                throw std::invalid_argument("piecewise_linear: breakpoints must be strictly increasing");
            if (!(g.nodes_[i].hi <= g.nodes_[i + 1].lo))
                throw std::invalid_argument("piecewise_linear: node values must be monotone");
        }
        g.slope_left_ = slope_left;
        g.slope_right_ = slope_right;
        g.build_piecewise_potential();
        g.name_ = "piecewise_linear(" + std::to_string(g.nodes_.size()) + " nodes)";
        if (std::abs(g.minimal_section(0.0)) > 1e-12)
            throw std::invalid_argument("piecewise_linear: graph must satisfy 0 in Psi(0)");
        return g;
    }

    /// Heaviside-type graph: 0 for s<0, [0,1] at 0, 1 for s>0.
    static MonotoneGraph step(RootOptions opts = {}) {
        auto g = piecewise_linear({{0.0, 0.0, 1.0}}, 0.0, 0.0, opts);
        g.name_ = "step";
        return g;
    }

    /// Sign graph: -1 for s<0, [-1,1] at 0, 1 for s>0; potential j(y)=|y|.
    static MonotoneGraph sign_graph(RootOptions opts = {}) {
        auto g = piecewise_linear({{0.0, -1.0, 1.0}}, 0.0, 0.0, opts);
        g.name_ = "sign";
        return g;
    }

    /// Custom single-valued monotone map with optional closed-form potential.
    /// The potential is shifted so that j(0) = 0.
    static MonotoneGraph custom(std::string name, std::function<double(double)> psi,
                                std::function<double(double)> potential = {},
                                RootOptions opts = {}) {
        if (!psi) throw std::invalid_argument("custom: psi must be callable");
        MonotoneGraph g(Family::Custom, opts);
        g.custom_psi_ = std::move(psi);
        g.custom_j_ = std::move(potential);
        g.name_ = std::move(name);
        if (std::abs(g.custom_psi_(0.0)) > 1e-12)
            throw std::invalid_argument("custom: graph must satisfy Psi(0) = 0");
        // coarse monotonicity screen
        double prev = g.custom_psi_(-8.0);
        for (int i = 1; i <= 16; ++i) {
            const double s = -8.0 + i;
            const double v = g.custom_psi_(s);
            if (v < prev - 1e-12) throw std::invalid_argument("custom: psi is not monotone");
            prev = v;
        }
        if (g.custom_j_) g.custom_j0_ = g.custom_j_(0.0);
        return g;
    }

    // ---- pointwise graph data --------------------------------------------

    Family family() const { return family_; }
    const std::string& name() const { return name_; }
    const RootOptions& root_options() const { return opts_; }

    bool overflow_occurred() const { return overflow_.load(std::memory_order_relaxed); }
    void clear_overflow() const { overflow_.store(false, std::memory_order_relaxed); }

    /// Closed value interval Psi(s) = [lo, hi].
    GraphValues values(double s) const {
        switch (family_) {
            case Family::PowerLaw:
            case Family::FastDiffusion: {
                const double v = s == 0.0 ? 0.0 : sgn(s) * std::pow(std::abs(s), r_);
                return {v, v};
            }
            case Family::Logarithmic: {
                const double v = sgn(s) * std::log1p(std::abs(s) / mu_);
                return {v, v};
            }
            case Family::ExponentialPower: {
                const double v = s == 0.0 ? 0.0 : sgn(s) * saturate(std::expm1(a_ * std::pow(std::abs(s), p_)));
                return {v, v};
            }
            case Family::PiecewiseLinear:
                return piecewise_values(s);
            case Family::Custom: {
                const double v = custom_psi_(s);
                return {v, v};
            }
        }
        return {0, 0};
    }

    /// Minimal section: the element of Psi(s) of least absolute value.
    double minimal_section(double s) const {
        const GraphValues v = values(s);
        if (v.lo <= 0.0 && 0.0 <= v.hi) return 0.0;
        return v.hi < 0.0 ? v.hi : v.lo;
    }

    // ---- resolvent calculus ----------------------------------------------

    /// Unique v with v + lambda*theta = u for some theta in Psi(v).
    double resolvent(double lambda, double u) const {
        require_lambda(lambda);
        if (!std::isfinite(u)) throw NonFiniteInput(name_ + ": resolvent input is not finite");
        if (u == 0.0) return 0.0;  // 0 in Psi(0) pins the fixed point
        switch (family_) {
            case Family::PowerLaw:
            case Family::FastDiffusion:
                if (r_ == 1.0) return u / (1.0 + lambda);
                return sgn(u) * odd_resolvent(lambda, std::abs(u), [&](double w) { return std::pow(w, r_); },
                                              [&](double w) { return w > 0 ? r_ * std::pow(w, r_ - 1.0) : std::numeric_limits<double>::infinity(); });
            case Family::Logarithmic:
                return sgn(u) * odd_resolvent(lambda, std::abs(u), [&](double w) { return std::log1p(w / mu_); },
                                              [&](double w) { return 1.0 / (mu_ + w); });
            case Family::ExponentialPower:
                return sgn(u) * odd_resolvent(lambda, std::abs(u),
                                              [&](double w) { return saturate(std::expm1(a_ * std::pow(w, p_))); },
                                              [&](double w) {
                                                  if (w <= 0) return p_ > 1.0 ? 0.0 : a_;
                                                  const double wp = std::pow(w, p_);
                                                  return saturate(a_ * p_ * std::pow(w, p_ - 1.0) * std::exp(std::min(a_ * wp, 690.0)));
                                              });
            case Family::PiecewiseLinear:
                return piecewise_resolvent(lambda, u);
            case Family::Custom:
                return generic_resolvent(lambda, u);
        }
        return 0.0;
    }

    /// Yosida approximation Psi_lambda(u) = (u - resolvent(lambda,u))/lambda.
    double yosida(double lambda, double u) const {
        return (u - resolvent(lambda, u)) / lambda;
    }

    // ---- convex potential calculus ---------------------------------------

    /// Potential j(y) = int_0^y Psi0(r) dr, normalized with j(0)=0, j>=0.
    double potential(double y) const {
        switch (family_) {
            case Family::PowerLaw:
            case Family::FastDiffusion:
                return std::pow(std::abs(y), r_ + 1.0) / (r_ + 1.0);
            case Family::Logarithmic: {
                const double w = std::abs(y);
                return (mu_ + w) * std::log1p(w / mu_) - w;
            }
            case Family::ExponentialPower: {
                const double w = std::abs(y);
                if (p_ == 1.0) return saturate(std::expm1(a_ * w) / a_ - w);
                return saturate(quadrature_potential(w));
            }
            case Family::PiecewiseLinear:
                return piecewise_potential(y);
            case Family::Custom: {
                if (custom_j_) return custom_j_(y) - custom_j0_;
                return quadrature_potential_signed(y);
            }
        }
        return 0.0;
    }

    /// Legendre conjugate j*(p) = sup_y { p y - j(y) } >= 0. Returns +inf
    /// when p lies outside the closure of the range of Psi.
    double conjugate(double p) const {
        if (!std::isfinite(p)) throw NonFiniteInput(name_ + ": conjugate input is not finite");
        const double q = std::abs(p);
        switch (family_) {
            case Family::PowerLaw:
            case Family::FastDiffusion:
                return r_ / (r_ + 1.0) * std::pow(q, (r_ + 1.0) / r_);
            case Family::Logarithmic:
                return saturate(mu_ * (std::expm1(q) - q));
            case Family::ExponentialPower: {
                const double ystar = std::pow(std::log1p(q) / a_, 1.0 / p_);
                return std::max(0.0, q * ystar - potential(ystar));
            }
            case Family::PiecewiseLinear:
                return piecewise_conjugate(p);
            case Family::Custom: {
                const double ystar = inverse_point(p);
                return std::max(0.0, p * ystar - potential(ystar));
            }
        }
        return 0.0;
    }

    /// Moreau envelope j_lambda(u) = j(z) + (u-z)^2/(2 lambda), z the resolvent.
    double moreau_envelope(double lambda, double u) const {
        const double z = resolvent(lambda, u);
        const double d = u - z;
        return potential(z) + d * d / (2.0 * lambda);
    }

    /// Fenchel-Young gap j(y) + j*(p) - p*y; nonnegative, zero iff p in Psi(y).
    double fenchel_gap(double y, double p) const {
        const double js = conjugate(p);
        if (!std::isfinite(js)) return js;
        return potential(y) + js - p * y;
    }

    // ---- hypothesis probes -------------------------------------------------

    /// Empirical probes of the symmetry ratio limsup j(-s)/j(s) and of the
    /// superlinearity of j and j* along the tail of a positive grid.
    H3Report check_h3(std::span<const double> s_grid) const {
        if (s_grid.size() < 4) throw std::invalid_argument("check_h3: grid too small");
        for (std::size_t i = 0; i < s_grid.size(); ++i) {
            if (!(s_grid[i] > 0) || (i > 0 && !(s_grid[i] > s_grid[i - 1])))
                throw std::invalid_argument("check_h3: grid must be strictly increasing and positive");
        }
        const std::size_t m = s_grid.size();
        std::vector<double> jp(m), jm(m), cp(m), cm(m);
        for (std::size_t i = 0; i < m; ++i) {
            jp[i] = potential(s_grid[i]);
            jm[i] = potential(-s_grid[i]);
            if (!std::isfinite(jp[i]) || !std::isfinite(jm[i]))
                throw DomainViolation(name_ + ": potential is infinite on the probe grid");
            cp[i] = conjugate(s_grid[i]);
            cm[i] = conjugate(-s_grid[i]);
        }
        H3Report rep{};
        const std::size_t tail = m / 2;
        rep.sup_ratio = 0.0;
        for (std::size_t i = tail; i < m; ++i) {
            const double ratio = jp[i] == 0.0 ? (jm[i] == 0.0 ? 1.0 : std::numeric_limits<double>::infinity())
                                              : jm[i] / jp[i];
            rep.sup_ratio = std::max(rep.sup_ratio, ratio);
        }
        rep.surjective = superlinear_tail(s_grid, jp, tail) && superlinear_tail(s_grid, jm, tail);
        bool conj_finite = true;
        for (std::size_t i = 0; i < m; ++i)
            conj_finite = conj_finite && std::isfinite(cp[i]) && std::isfinite(cm[i]);
        rep.full_domain = conj_finite && superlinear_tail(s_grid, cp, tail) && superlinear_tail(s_grid, cm, tail);
        return rep;
    }

    // copyable despite the atomic overflow flag
    MonotoneGraph(const MonotoneGraph& o) { *this = o; }
    MonotoneGraph& operator=(const MonotoneGraph& o) {
        if (this != &o) {
            family_ = o.family_; name_ = o.name_; r_ = o.r_; mu_ = o.mu_; a_ = o.a_; p_ = o.p_;
            nodes_ = o.nodes_; slope_left_ = o.slope_left_; slope_right_ = o.slope_right_;
            node_potential_ = o.node_potential_; potential_at_zero_ = o.potential_at_zero_;
            custom_psi_ = o.custom_psi_; custom_j_ = o.custom_j_; custom_j0_ = o.custom_j0_;
            opts_ = o.opts_;
            overflow_.store(o.overflow_.load(std::memory_order_relaxed), std::memory_order_relaxed);
        }
        return *this;
    }
    MonotoneGraph(MonotoneGraph&& o) noexcept { *this = o; }
    MonotoneGraph& operator=(MonotoneGraph&& o) noexcept { return *this = static_cast<const MonotoneGraph&>(o); }

private:
    struct Node {
        double s, lo, hi;
    };

    MonotoneGraph(Family f, RootOptions opts) : family_(f), opts_(opts) {}

    static double sgn(double s) { return s < 0.0 ? -1.0 : 1.0; }

    static std::string fmt(double x) {
        std::ostringstream os;
        os << x;
        return os.str();
    }

    double saturate(double x) const {
        if (std::abs(x) >= kSaturation || !std::isfinite(x)) {
            overflow_.store(true, std::memory_order_relaxed);
            return std::isnan(x) ? kSaturation : sgn(x) * kSaturation;
        }
        return x;
    }

    static void require_lambda(double lambda) {
        if (!(lambda > 0)) throw std::invalid_argument("lambda must be positive");
    }

    static bool superlinear_tail(std::span<const double> s, const std::vector<double>& f, std::size_t tail) {
        // f(s)/s must be nondecreasing and actually grow along the tail;
        // saturated entries count as already superlinear.
        double first = -1.0, last = -1.0, prev = -std::numeric_limits<double>::infinity();
        for (std::size_t i = tail; i < f.size(); ++i) {
            if (f[i] >= kSaturation) continue;
            const double ratio = f[i] / s[i];
            if (ratio < prev * (1.0 - 1e-9) - 1e-12) return false;
            prev = std::max(prev, ratio);
            if (first < 0) first = ratio;
            last = ratio;
        }
        if (first < 0) return true;  // whole tail saturated
        return last >= 1.5 * first + 1e-12;
    }

    // Safeguarded Newton/bisection for odd continuous families: solves
    // w + lambda*psi(w) = U on [0, U] for U > 0 (psi(0)=0 makes the bracket valid).
    template <typename Psi, typename DPsi>
    double odd_resolvent(double lambda, double U, Psi&& psi, DPsi&& dpsi) const {
        double lo = 0.0, hi = U;
        double w = U / 2.0;
        const double ftol = opts_.tol * (1.0 + U);
        for (int it = 0; it < opts_.max_iter; ++it) {
            const double f = w + lambda * psi(w) - U;
            if (std::abs(f) <= ftol) return w;
            if (f > 0) hi = w; else lo = w;
            const double d = 1.0 + lambda * dpsi(w);
            double next = std::numeric_limits<double>::quiet_NaN();
            if (std::isfinite(d) && d > 0) next = w - f / d;
            if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
            if (hi - lo <= opts_.tol * (1.0 + hi)) return 0.5 * (lo + hi);
            w = next;
        }
        throw NoConvergence(name_ + ": resolvent iteration exhausted");
    }

    // ---- piecewise-linear machinery ---------------------------------------

    GraphValues piecewise_values(double s) const {
        const auto& nd = nodes_;
        if (s < nd.front().s) {
            const double v = nd.front().lo - slope_left_ * (nd.front().s - s);
            return {v, v};
        }
        if (s > nd.back().s) {
            const double v = nd.back().hi + slope_right_ * (s - nd.back().s);
            return {v, v};
        }
        // locate segment or node by binary search
        std::size_t i = std::upper_bound(nd.begin(), nd.end(), s,
                                         [](double x, const Node& n) { return x < n.s; }) -
                        nd.begin();
        if (i > 0 && nd[i - 1].s == s) return {nd[i - 1].lo, nd[i - 1].hi};
        const Node& l = nd[i - 1];
        const Node& r = nd[i];
        const double m = (r.lo - l.hi) / (r.s - l.s);
        const double v = l.hi + m * (s - l.s);
        return {v, v};
    }

    double piecewise_resolvent(double lambda, double u) const {
        const auto& nd = nodes_;
        // left extension: v + lambda(lo0 - slope_left (s0 - v)) = u
        if (u < nd.front().s + lambda * nd.front().lo) {
            return (u - lambda * (nd.front().lo - slope_left_ * nd.front().s)) / (1.0 + lambda * slope_left_);
        }
        if (u > nd.back().s + lambda * nd.back().hi) {
            return (u - lambda * (nd.back().hi - slope_right_ * nd.back().s)) / (1.0 + lambda * slope_right_);
        }
        for (std::size_t i = 0; i < nd.size(); ++i) {
            if (u <= nd[i].s + lambda * nd[i].hi) {
                if (u >= nd[i].s + lambda * nd[i].lo) return nd[i].s;  // jump absorbs u
                // inside segment (i-1, i)
                const Node& l = nd[i - 1];
                const Node& r = nd[i];
                const double m = (r.lo - l.hi) / (r.s - l.s);
                return (u - lambda * (l.hi - m * l.s)) / (1.0 + lambda * m);
            }
        }
        return nd.back().s;  // unreachable
    }

    void build_piecewise_potential() {
        // cumulative exact integral of the a.e. single-valued branch,
        // relative to the first node; trapezoids on segments
        node_potential_.assign(nodes_.size(), 0.0);
        for (std::size_t i = 0; i + 1 < nodes_.size(); ++i) {
            const double seg = 0.5 * (nodes_[i].hi + nodes_[i + 1].lo) * (nodes_[i + 1].s - nodes_[i].s);
            node_potential_[i + 1] = node_potential_[i] + seg;
        }
        potential_at_zero_ = piecewise_antiderivative(0.0);
    }

    double piecewise_antiderivative(double y) const {
        const auto& nd = nodes_;
        if (y <= nd.front().s) {
            const double d = nd.front().s - y;
            // psi(v) = lo0 - slope_left (s0 - v) on the left extension
            return -(nd.front().lo * d - 0.5 * slope_left_ * d * d);
        }
        if (y >= nd.back().s) {
            const double d = y - nd.back().s;
            return node_potential_.back() + nd.back().hi * d + 0.5 * slope_right_ * d * d;
        }
        std::size_t i = std::upper_bound(nd.begin(), nd.end(), y,
                                         [](double x, const Node& n) { return x < n.s; }) -
                        nd.begin();
        const Node& l = nd[i - 1];
        const Node& r = nd[i];
        const double m = (r.lo - l.hi) / (r.s - l.s);
        const double d = y - l.s;
        return node_potential_[i - 1] + l.hi * d + 0.5 * m * d * d;
    }

    double piecewise_potential(double y) const {
        const double j = piecewise_antiderivative(y) - potential_at_zero_;
        return std::max(0.0, j);
    }

    double piecewise_conjugate(double p) const {
        const auto& nd = nodes_;
        const double range_lo = slope_left_ > 0 ? -std::numeric_limits<double>::infinity()
                                                : nd.front().lo;
        const double range_hi = slope_right_ > 0 ? std::numeric_limits<double>::infinity()
                                                 : nd.back().hi;
        if (p < range_lo || p > range_hi) return std::numeric_limits<double>::infinity();
        double ystar;
        if (p < nd.front().lo) {
            ystar = nd.front().s - (nd.front().lo - p) / slope_left_;
        } else if (p > nd.back().hi) {
            ystar = nd.back().s + (p - nd.back().hi) / slope_right_;
        } else {
            ystar = nd.back().s;
            for (std::size_t i = 0; i < nd.size(); ++i) {
                if (p <= nd[i].hi) {
                    if (p >= nd[i].lo) {
                        ystar = nd[i].s;
                    } else {
                        const Node& l = nd[i - 1];
                        const Node& r = nd[i];
                        const double m = (r.lo - l.hi) / (r.s - l.s);
                        ystar = m > 0 ? l.s + (p - l.hi) / m : l.s;  // flat segment: left end maximizes
                    }
                    break;
                }
            }
        }
        return std::max(0.0, p * ystar - potential(ystar));
    }

    // ---- generic (Custom) machinery ----------------------------------------

    // Trichotomy bisection on v -> v + lambda Psi(v) with doubling bracket.
    double generic_resolvent(double lambda, double u) const {
        const double psi0 = std::abs(minimal_section(u));
        double half = lambda * psi0 + 1.0;
        double a = u - half, b = u + half;
        int expand = 0;
        auto fhi = [&](double v) { return v + lambda * values(v).hi; };
        auto flo = [&](double v) { return v + lambda * values(v).lo; };
        while (fhi(a) > u) {
            half *= 2.0;
            a = u - half;
            if (++expand > opts_.max_iter) throw NoConvergence(name_ + ": resolvent bracket expansion failed");
        }
        while (flo(b) < u) {
            half *= 2.0;
            b = u + half;
            if (++expand > opts_.max_iter) throw NoConvergence(name_ + ": resolvent bracket expansion failed");
        }
        for (int it = 0; it < 200; ++it) {
            const double v = 0.5 * (a + b);
            const GraphValues gv = values(v);
            if (v + lambda * gv.hi < u) {
                a = v;
            } else if (v + lambda * gv.lo > u) {
                b = v;
            } else {
                return v;  // u falls inside the value interval at v
            }
            if (b - a <= opts_.tol * (1.0 + std::abs(u))) break;
        }
        return 0.5 * (a + b);
    }

    // Any element of Psi^{-1}(p), by expanding-bracket bisection.
    double inverse_point(double p) const {
        double lo = -1.0, hi = 1.0;
        int expand = 0;
        while (values(lo).lo > p) {
            lo *= 2.0;
            if (++expand > 220) throw NoConvergence(name_ + ": conjugate bracket expansion failed");
        }
        while (values(hi).hi < p) {
            hi *= 2.0;
            if (++expand > 220) throw NoConvergence(name_ + ": conjugate bracket expansion failed");
        }
        for (int it = 0; it < 200; ++it) {
            const double y = 0.5 * (lo + hi);
            const GraphValues gv = values(y);
            if (gv.hi < p) {
                lo = y;
            } else if (gv.lo > p) {
                hi = y;
            } else {
                return y;
            }
            if (hi - lo <= opts_.tol * (1.0 + std::abs(hi) + std::abs(lo))) break;
        }
        return 0.5 * (lo + hi);
    }

    // ---- quadrature ---------------------------------------------------------

    double quadrature_potential(double w) const {  // int_0^w of the positive branch
        if (w == 0.0) return 0.0;
        auto f = [&](double t) { return values(t).lo; };
        return adaptive_simpson(f, 0.0, w);
    }

    double quadrature_potential_signed(double y) const {
        if (y == 0.0) return 0.0;
        auto f = [&](double t) { return minimal_section(t); };
        const double j = y > 0 ? adaptive_simpson(f, 0.0, y) : -adaptive_simpson(f, y, 0.0);
        return std::max(0.0, j);
    }

    template <typename F>
    double adaptive_simpson(F&& f, double a, double b) const {
        const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
        const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        const double scale = 1.0 + std::abs(whole);
        double result = simpson_recurse(f, a, b, fa, fm, fb, whole, 1e-12 * scale, 48);
        return result;
    }

    template <typename F>
    double simpson_recurse(F&& f, double a, double b, double fa, double fm, double fb,
                           double whole, double tol, int depth) const {
        const double m = 0.5 * (a + b);
        const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
        const double flm = f(lm), frm = f(rm);
        const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        const double delta = left + right - whole;
        if (std::abs(delta) <= 15.0 * tol || std::abs(b - a) < 1e-14 * (1.0 + std::abs(a)))
            return left + right + delta / 15.0;
        if (depth <= 0) throw QuadratureFailure(name_ + ": potential quadrature did not converge");
        return simpson_recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
               simpson_recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
    }

    Family family_;
    std::string name_;
    double r_ = 0, mu_ = 0, a_ = 0, p_ = 0;
    std::vector<Node> nodes_;
    double slope_left_ = 0, slope_right_ = 0;
    std::vector<double> node_potential_;
    double potential_at_zero_ = 0;
    std::function<double(double)> custom_psi_;
    std::function<double(double)> custom_j_;
    double custom_j0_ = 0;
    RootOptions opts_;
    mutable std::atomic<bool> overflow_{false};
};

} // namespace monodiff
