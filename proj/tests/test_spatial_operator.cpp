#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "monodiff/monotone_graph.hpp"
#include "monodiff/spatial_operator.hpp"
#include "oracles.hpp"

using namespace monodiff;
using Catch::Approx;

namespace {

Eigen::MatrixXd stencil_matrix(const SpatialOperator& op) {
    const std::size_t M = op.points();
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(M, M);
    for (std::size_t j = 0; j < M; ++j) {
        Field e = op.zero_field();
        e[j] = 1.0;
        const Field Ae = op.apply(e);
        for (std::size_t i = 0; i < M; ++i) A(i, j) = Ae[i];
    }
    return A;
}

Field random_field(const SpatialOperator& op, std::mt19937_64& rng) {
    std::normal_distribution<double> nd;
    Field u = op.zero_field();
    for (std::size_t i = 0; i < u.size(); ++i) u[i] = nd(rng);
    return u;
}

} // namespace

TEST_CASE("eigenvalues match the dense eigensolver") {
    for (int n : {3, 8, 17, 32}) {
        SpatialOperator op(1, n);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(stencil_matrix(op));
        for (std::size_t k = 0; k < op.modes(); ++k)
            CHECK(op.eigenvalue(k) == Approx(es.eigenvalues()[k]).margin(1e-10));
    }
    SpatialOperator op3(1, 3);
    CHECK(op3.eigenvalue(0) == Approx(64.0 * std::pow(std::sin(M_PI / 8.0), 2)).margin(1e-12));

    for (int n : {3, 6}) {
        SpatialOperator op(2, n);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(stencil_matrix(op));
        for (std::size_t k = 0; k < op.modes(); ++k)
            CHECK(op.eigenvalue(k) == Approx(es.eigenvalues()[k]).margin(1e-10));
    }
}

TEST_CASE("eigenpairs satisfy the stencil relation exactly") {
    for (int dim : {1, 2}) {
        SpatialOperator op(dim, dim == 1 ? 16 : 6);
        for (std::size_t k = 0; k < op.modes(); ++k) {
            const Field e = op.eigenvector(k);
            const Field Ae = op.apply(e);
            for (std::size_t i = 0; i < e.size(); ++i)
                CHECK(Ae[i] == Approx(op.eigenvalue(k) * e[i]).margin(1e-10 * (1.0 + op.eigenvalue(k))));
        }
    }
}

TEST_CASE("eigenvectors are orthonormal in the weighted inner product") {
    SpatialOperator op(2, 5);
    for (std::size_t a = 0; a < op.modes(); ++a) {
        const Field ea = op.eigenvector(a);
        for (std::size_t b = a; b < op.modes(); ++b) {
            const double ip = inner_l2(ea, op.eigenvector(b));
            CHECK(ip == Approx(a == b ? 1.0 : 0.0).margin(1e-10));
        }
    }
}

TEST_CASE("continuum limit of the first eigenvalue") {
    SpatialOperator op(1, 256);
    CHECK(op.eigenvalue(0) == Approx(M_PI * M_PI).epsilon(1e-3));
}

TEST_CASE("2d mode ordering is ascending with lexicographic ties") {
    SpatialOperator op(2, 5);
    for (std::size_t k = 1; k < op.modes(); ++k) {
        CHECK(op.eigenvalue(k) >= op.eigenvalue(k - 1) - 1e-12);
        if (op.eigenvalue(k) == op.eigenvalue(k - 1)) {
            const auto a = op.mode_indices(k - 1);
            const auto b = op.mode_indices(k);
            CHECK(a[0] * op.n() + a[1] < b[0] * op.n() + b[1]);
        }
    }
}

TEST_CASE("h-minus-1 norms against the dense solve oracle") {
    SpatialOperator op(1, 8);
    CHECK(norm_h_minus1(op.eigenvector(0)) == Approx(1.0 / std::sqrt(op.eigenvalue(0))).margin(1e-12));
    CHECK(norm_h_minus1(op.zero_field()) == 0.0);

    const Eigen::MatrixXd A = stencil_matrix(op);
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const Field u = random_field(op, rng);
        Eigen::VectorXd uv(op.points());
        for (std::size_t i = 0; i < op.points(); ++i) uv[i] = u[i];
        const Eigen::VectorXd w = A.ldlt().solve(uv);
        const double dense = std::sqrt(op.cell_volume() * w.dot(uv));
        CHECK(norm_h_minus1(u) == Approx(dense).margin(1e-9));
    }
}

TEST_CASE("h-minus-1 inner product is bilinear and polarization-consistent") {
    SpatialOperator op(1, 8);
    CHECK(inner_h_minus1(op.eigenvector(0), op.eigenvector(1)) == Approx(0.0).margin(1e-12));
    std::mt19937_64 rng(6);
    const Eigen::MatrixXd A = stencil_matrix(op);
    for (int trial = 0; trial < 20; ++trial) {
        const Field u = random_field(op, rng);
        const Field v = random_field(op, rng);
        const double nu = norm_h_minus1(u);
        CHECK(inner_h_minus1(u, u) == Approx(nu * nu).margin(1e-10));
        Eigen::VectorXd uv(op.points()), vv(op.points());
        for (std::size_t i = 0; i < op.points(); ++i) {
            uv[i] = u[i];
            vv[i] = v[i];
        }
        const double dense = op.cell_volume() * A.ldlt().solve(uv).dot(vv);
        CHECK(inner_h_minus1(u, v) == Approx(dense).margin(1e-9));
        CHECK(inner_h_minus1(u, v) == Approx(inner_h_minus1(v, u)).margin(1e-12));
    }

    SpatialOperator other(1, 9);
    CHECK_THROWS_AS(inner_h_minus1(op.zero_field(), other.zero_field()), OperatorMismatch);
}

TEST_CASE("smoothing resolvent: identity, diagonal action, sub-Markov bounds") {
    SpatialOperator op(1, 12);
    std::mt19937_64 rng(7);
    const Field u = random_field(op, rng);
    const Field same = op.smoothing_resolvent(0.0, 3, u);
    for (std::size_t i = 0; i < u.size(); ++i) CHECK(same[i] == u[i]);

    for (std::size_t k : {std::size_t(0), std::size_t(3)}) {
        const Field e = op.eigenvector(k);
        const Field r = op.smoothing_resolvent(0.2, 2, e);
        const double factor = std::pow(1.0 + 0.2 * op.eigenvalue(k), -2.0);
        for (std::size_t i = 0; i < e.size(); ++i)
            CHECK(r[i] == Approx(factor * e[i]).margin(1e-12));
    }

    // constant-one field stays in (0, 1] pointwise
    Field ones = op.zero_field();
    for (std::size_t i = 0; i < ones.size(); ++i) ones[i] = 1.0;
    const Field r = op.smoothing_resolvent(0.3, 1, ones);
    for (std::size_t i = 0; i < r.size(); ++i) {
        CHECK(r[i] > 0.0);
        CHECK(r[i] <= 1.0 + 1e-12);
    }
}

TEST_CASE("dense resolvent matrix is sub-Markov") {
    for (int dim : {1, 2}) {
        SpatialOperator op(dim, dim == 1 ? 32 : 5);
        for (double eps : {0.01, 0.1, 1.0}) {
            const auto R = op.resolvent_matrix(eps, 1);
            const std::size_t M = op.points();
            for (std::size_t i = 0; i < M; ++i) {
                double row = 0;
                for (std::size_t j = 0; j < M; ++j) {
                    CHECK(R[i * M + j] >= -1e-12);
                    row += R[i * M + j];
                }
                CHECK(row <= 1.0 + 1e-12);
                CHECK(R[i * M + i] > 0.0);
            }
        }
    }
}

TEST_CASE("resolvent powers form a semigroup") {
    SpatialOperator op(1, 10);
    std::mt19937_64 rng(8);
    const Field u = random_field(op, rng);
    for (double eps : {0.05, 0.5}) {
        Field iterated = u;
        for (int i = 0; i < 3; ++i) iterated = op.smoothing_resolvent(eps, 1, iterated);
        const Field direct = op.smoothing_resolvent(eps, 3, u);
        for (std::size_t i = 0; i < u.size(); ++i)
            CHECK(direct[i] == Approx(iterated[i]).margin(1e-10));
    }
}

TEST_CASE("fractional norms recover the standard ones") {
    SpatialOperator op(1, 16);
    std::mt19937_64 rng(9);
    const Field u = random_field(op, rng);
    CHECK(fractional_norm(0.0, u) == Approx(norm_l2(u)).margin(1e-10));
    CHECK(fractional_norm(-0.5, u) == Approx(norm_h_minus1(u)).margin(1e-10));
    CHECK(fractional_norm(0.0, op.eigenvector(0)) == Approx(1.0).margin(1e-12));
    CHECK(fractional_norm(1.0, op.eigenvector(0)) == Approx(op.eigenvalue(0)).margin(1e-9));
}

TEST_CASE("spectral reconstruction matches the stencil") {
    for (int dim : {1, 2}) {
        SpatialOperator op(dim, dim == 1 ? 64 : 8);
        std::mt19937_64 rng(10);
        for (int trial = 0; trial < 5; ++trial) {
            const Field u = random_field(op, rng);
            auto c = op.to_coeffs(u);
            for (std::size_t k = 0; k < c.size(); ++k) c[k] *= op.eigenvalue(k);
            const Field spectral = op.from_coeffs(c);
            const Field stencil = op.apply(u);
            for (std::size_t i = 0; i < u.size(); ++i)
                CHECK(spectral[i] == Approx(stencil[i]).margin(1e-9 * (1.0 + std::abs(stencil[i]))));
        }
    }
}

TEST_CASE("norm ordering |u|_{-1} <= mu_1^{-1/2} |u|_{L2}") {
    SpatialOperator op(1, 24);
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 30; ++trial) {
        const Field u = random_field(op, rng);
        CHECK(norm_h_minus1(u) <= norm_l2(u) / std::sqrt(op.eigenvalue(0)) + 1e-12);
    }
}

TEST_CASE("jensen inequality for the smoothing resolvent") {
    SpatialOperator op(1, 8);
    auto quad = MonotoneGraph::power_law(1.0);
    std::mt19937_64 rng(12);

    // eps = 0 is the identity: violation exactly 0
    const Field u0 = random_field(op, rng);
    CHECK(jensen_violation(op, 0.0, 1, quad, u0) == Approx(0.0).margin(1e-15));

    // dense-matrix oracle at e1, quadratic potential
    {
        const Field e = op.eigenvector(0);
        const auto R = op.resolvent_matrix(0.1, 1);
        const std::size_t M = op.points();
        double worst = -1e300;
        for (std::size_t i = 0; i < M; ++i) {
            double ru = 0, rju = 0;
            for (std::size_t j = 0; j < M; ++j) {
                ru += R[i * M + j] * e[j];
                rju += R[i * M + j] * quad.potential(e[j]);
            }
            worst = std::max(worst, quad.potential(ru) - rju);
        }
        CHECK(worst <= 1e-10);
        CHECK(jensen_violation(op, 0.1, 1, quad, e) == Approx(worst).margin(1e-10));
    }

    // constant field through the sub-Markov weights
    Field c = op.zero_field();
    for (std::size_t i = 0; i < c.size(); ++i) c[i] = 1.7;
    CHECK(jensen_violation(op, 0.2, 1, quad, c) <= 1e-10);

    // random graphs, fields, eps, m in {1,3}
    auto zoo = oracle::graph_zoo();
    std::uniform_real_distribution<double> ed(0.01, 1.0);
    for (int trial = 0; trial < 60; ++trial) {
        const auto& g = zoo[trial % zoo.size()].second;
        const Field u = random_field(op, rng);
        double maxj = 0;
        for (std::size_t i = 0; i < u.size(); ++i) maxj = std::max(maxj, std::abs(g.potential(u[i])));
        const int m = trial % 2 == 0 ? 1 : 3;
        CHECK(jensen_violation(op, ed(rng), m, g, u) <= 1e-8 * (1.0 + maxj));
    }
}

TEST_CASE("construction guards") {
    CHECK_THROWS_AS(SpatialOperator(3, 8), std::invalid_argument);
    CHECK_THROWS_AS(SpatialOperator(1, 1), std::invalid_argument);
    CHECK_THROWS_AS(SpatialOperator(2, 300), SizeLimit);  // 90000 > default cap
    SpatialOperator op(1, 4);
    CHECK_THROWS_AS(Field(op, std::vector<double>(3, 0.0)), std::invalid_argument);
}
