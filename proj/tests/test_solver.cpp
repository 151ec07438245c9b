#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Eigenvalues>

#include "latscat/solver.hpp"

using namespace latscat;
using Catch::Matchers::WithinAbs;

namespace {

std::shared_ptr<const EnergySurface> surf(const TrigPolynomial& p, double lambda, int n) {
    return std::make_shared<const EnergySurface>(extract(p, lambda, n));
}

Eigen::MatrixXcd dense(const LatticeHamiltonian& H) { return Eigen::MatrixXcd(H.matrix); }

}  // namespace

TEST_CASE("square lattice stencil") {
    auto H = build_hamiltonian(square_lattice(1), LatticePotential::zero(1), 16);
    REQUIRE(H.size() == 33);
    auto A = dense(H);
    for (int i = 0; i < 33; ++i) {
        CHECK(A(i, i) == Complex(1.0));
        if (i + 1 < 33) CHECK(A(i, i + 1) == Complex(-0.5));
        if (i + 2 < 33) CHECK(A(i, i + 2) == Complex(0.0));
    }
    auto H2 = build_hamiltonian(square_lattice(2), LatticePotential::zero(2), 16);
    auto c = *H2.index({0, 0});
    auto B = dense(H2);
    CHECK(B(c, c) == Complex(2.0));
    CHECK(B(c, *H2.index({1, 0})) == Complex(-0.5));
    CHECK(B(c, *H2.index({0, -1})) == Complex(-0.5));
    CHECK(B(c, *H2.index({1, 1})) == Complex(0.0));
}

TEST_CASE("triangular lattice stencil") {
    auto H = build_hamiltonian(triangular_lattice(), LatticePotential::zero(2), 16);
    auto A = dense(H);
    auto c = *H.index({0, 0});
    CHECK(A(c, c) == Complex(3.0));
    int hops = 0;
    for (Eigen::Index j = 0; j < A.cols(); ++j)
        if (j != Eigen::Index(c) && A(c, j) != Complex(0.0)) {
            CHECK(A(c, j) == Complex(-0.5));
            ++hops;
        }
    CHECK(hops == 6);
    CHECK(A(c, *H.index({1, 1})) == Complex(-0.5));
    CHECK(A(c, *H.index({-1, -1})) == Complex(-0.5));
    CHECK(A(c, *H.index({1, -1})) == Complex(0.0));
}

TEST_CASE("potential sits on the diagonal and the box matrix is Hermitian") {
    auto V = LatticePotential::gaussian(2, 0.3, 2.0);
    auto H = build_hamiltonian(square_lattice(2), V, 16);
    auto A = dense(H);
    CHECK((A - A.adjoint()).cwiseAbs().maxCoeff() == 0.0);
    auto c = *H.index({0, 0});
    CHECK_THAT(A(c, c).real(), WithinAbs(2.0 + V(Site{0, 0}), 1e-15));
    CHECK(H.hermitian());

    BoundarySpec b{Boundary::Absorbing, 4, 0.5};
    auto Ha = build_hamiltonian(square_lattice(1), LatticePotential::zero(1), 16, b);
    auto Aa = dense(Ha);
    CHECK(!Ha.hermitian());
    CHECK(Aa(0, 0).imag() == -0.5);
    CHECK(Aa(16, 16).imag() == 0.0);
}

TEST_CASE("free box spectrum lies inside the band") {
    for (auto p : {square_lattice(1), square_lattice(2), triangular_lattice()}) {
        auto H = build_hamiltonian(p, LatticePotential::zero(p.dim()), 16);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(dense(H));
        const double top = p.dim() == 1 ? 2.0 : (p.name() == "square" ? 4.0 : 4.5);
        CHECK(es.eigenvalues().minCoeff() >= -1e-12);
        CHECK(es.eigenvalues().maxCoeff() <= top + 1e-12);
    }
}

TEST_CASE("windowed plane waves are approximate eigenvectors") {
    auto p = square_lattice(2);
    auto H = build_hamiltonian(p, LatticePotential::zero(2), 40);
    auto s = extract(p, 1.0, 32);
    auto Phi = plane_waves(H, s);
    Eigen::VectorXd win(H.size());
    for (std::size_t i = 0; i < H.size(); ++i) {
        double r2 = H.sites[i][0] * H.sites[i][0] + H.sites[i][1] * H.sites[i][1];
        win[i] = std::exp(-r2 / (2 * 10.0 * 10.0));
    }
    for (std::size_t j = 0; j < s.size(); j += 3) {
        Eigen::VectorXcd f = win.asDiagonal() * Phi.col(j);
        Eigen::VectorXcd Hf = H.matrix * f;
        double rq = (f.adjoint() * Hf)(0, 0).real() / f.squaredNorm();
        CHECK_THAT(rq, WithinAbs(1.0, 0.05));
    }
}

TEST_CASE("zero potential scatters trivially") {
    for (int d : {1, 2}) {
        auto p = square_lattice(d);
        auto s = surf(p, 1.0, 32);
        auto res = extrapolate(p, LatticePotential::zero(d), s, {0.4, 0.2, 0.1}, {32});
        CHECK(res.t_onshell.cwiseAbs().maxCoeff() == 0.0);
        CHECK(res.s_matrix.matrix == Eigen::MatrixXcd::Identity(s->size(), s->size()));
        CHECK(res.unitarity_defect == 0.0);
    }
}

TEST_CASE("weak coupling reproduces the first Born term") {
    // t = (2 pi)^-d sum_n V(n) exp(-i n.(xi_i - xi_j)) + O(V^2)
    auto p = square_lattice(2);
    auto s = surf(p, 1.0, 32);
    auto H = build_hamiltonian(p, LatticePotential::gaussian(2, 1.0, 1.5), 24);
    auto born = [&](double kappa) {
        Eigen::MatrixXcd F = Eigen::MatrixXcd::Zero(s->size(), s->size());
        for (std::size_t i = 0; i < s->size(); ++i)
            for (std::size_t j = 0; j < s->size(); ++j) {
                Vec d = s->point(i).xi - s->point(j).xi;
                for (std::size_t n = 0; n < H.size(); ++n)
                    F(i, j) += kappa * H.potential[n] *
                               std::polar(1.0, -(H.sites[n][0] * d[0] + H.sites[n][1] * d[1])) / (4 * pi * pi);
            }
        return F;
    };
    auto remainder = [&](double kappa) {
        auto Hk = build_hamiltonian(p, LatticePotential::gaussian(2, kappa, 1.5), 24);
        auto t = t_onshell(Hk, *s, 0.5);
        return (t - born(kappa)).cwiseAbs().maxCoeff();
    };
    double r1 = remainder(0.02), r2 = remainder(0.01);
    CHECK(r1 / r2 > 3.8);
    CHECK(r1 / r2 < 4.2);
    CHECK(r1 < 5e-2 * born(0.02).cwiseAbs().maxCoeff());
}

TEST_CASE("solver preconditions") {
    auto p = square_lattice(2);
    auto s = surf(p, 1.0, 32);
    auto H = build_hamiltonian(p, LatticePotential::gaussian(2, 0.1, 2.0), 16);
    try {
        t_onshell(H, *s, 0.5 * eps_floor(H, *s));
        FAIL("expected EpsBelowFloor");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::EpsBelowFloor);
    }
    TrigPolynomial wide(1, {{Site{0, 0}, 1.0}, {Site{5, 0}, -0.5}, {Site{-5, 0}, -0.5}});
    try {
        build_hamiltonian(wide, LatticePotential::zero(1), 16);
        FAIL("expected StencilTooWide");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::StencilTooWide);
    }
    CHECK_THROWS_AS(build_hamiltonian(p, LatticePotential::zero(2), 8), Error);
    CHECK_THROWS_AS(extrapolate(p, LatticePotential::zero(2), s, {0.1}, {32}), Error);
    CHECK_THROWS_AS(extrapolate(p, LatticePotential::zero(2), s, {0.1, 0.2}, {32}), Error);
    CHECK_THROWS_AS(extrapolate(p, LatticePotential::zero(2), s, {0.2, 0.1}, {32, 24}), Error);
}

TEST_CASE("single impurity: closed form, transfer matrix and box solver agree") {
    auto p = square_lattice(1);
    const double g = 0.3;
    auto V = LatticePotential::table(1, {{Site{0, 0}, g}}, 3.0);
    for (double lambda : {0.3, 1.0, 1.7}) {
        double k = std::acos(1 - lambda);
        Complex tau = 1.0 / (1.0 + Complex(0, g / std::sin(k)));
        Complex r = Complex(0, -g) / (std::sin(k) + Complex(0, g));
        auto S = transfer_matrix_1d(p, V, lambda);
        CHECK(std::abs(S(0, 0) - tau) <= 1e-12);
        CHECK(std::abs(S(1, 1) - tau) <= 1e-12);
        CHECK(std::abs(S(0, 1) - r) <= 1e-12);
        CHECK(std::abs(S(1, 0) - r) <= 1e-12);
        auto s = surf(p, lambda, 0);
        auto res = extrapolate(p, V, s, {0.02, 0.01, 0.005}, {2000});
        CHECK((res.s_matrix.matrix - S).cwiseAbs().maxCoeff() <= 1e-3);
    }
}

TEST_CASE("transfer matrix oracle versus the box solver") {
    auto p = square_lattice(1);
    auto V = LatticePotential::gaussian(1, 0.05, 3.0);
    for (double lambda : {0.3, 0.7, 1.0, 1.5}) {
        auto s = surf(p, lambda, 0);
        auto exact = transfer_matrix_1d(p, V, lambda);
        CHECK(unitarity_defect(exact) <= 1e-12);
        auto res = extrapolate(p, V.clipped(2000), s, {0.02, 0.01, 0.005}, {2000, 4000});
        CHECK((res.s_matrix.matrix - exact).cwiseAbs().maxCoeff() <= 1e-3);
        CHECK(res.unitarity_defect <= 1e-3);
        CHECK(res.optical_residual <= 1e-3);
    }
}

TEST_CASE("finer eps sweeps tighten the optical theorem") {
    auto p = square_lattice(1);
    auto V = LatticePotential::gaussian(1, 0.1, 2.0);
    auto s = surf(p, 1.0, 0);
    auto coarse = extrapolate(p, V, s, {0.2, 0.1}, {400});
    auto fine = extrapolate(p, V, s, {0.02, 0.01, 0.005}, {2000});
    CHECK(fine.optical_residual < coarse.optical_residual);
    CHECK(fine.extrapolation_residual < coarse.extrapolation_residual);
}

TEST_CASE("reciprocity for a real off-centre potential") {
    // H is complex symmetric, so t(xi, eta) = t(-eta, -xi) at every eps
    auto p = square_lattice(1);
    auto V = LatticePotential::gaussian(1, 0.2, 2.0, {3.0, 0.0});
    auto s = extract(p, 0.8, 0);
    auto H = build_hamiltonian(p, V, 200);
    auto t = t_onshell(H, s, 0.05);
    CHECK(std::abs(t(0, 0) - t(1, 1)) <= 1e-12 * t.cwiseAbs().maxCoeff());
    CHECK(std::abs(t(0, 1) - t(1, 0)) > 1e-6);  // the potential is not even, so this is a real test
}

TEST_CASE("box size convergence is enforced") {
    auto p = square_lattice(2);
    auto s = surf(p, 1.0, 32);
    auto V = LatticePotential::power_law(2, 0.1, 2.0, 1.5);
    ExtrapolationOptions o;
    o.l_tol = 1e-12;
    try {
        extrapolate(p, V, s, {0.5, 0.25}, {16, 20}, o);
        FAIL("expected NoConvergenceInL");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::NoConvergenceInL);
    }
}

TEST_CASE("two-dimensional S-matrix is nearly unitary") {
    auto p = square_lattice(2);
    auto s = surf(p, 1.0, 32);
    auto res = extrapolate(p, LatticePotential::gaussian(2, 0.1, 2.0), s, {0.24, 0.12, 0.06}, {48});
    CHECK(res.unitarity_defect <= 5e-3);
    CHECK(res.L_used == 48);
    auto flipped = assemble_smatrix(res.t_onshell, s, {+1.0, MeasureWeights::GelfandLeray});
    CHECK(unitarity_defect(flipped.matrix) > 10 * res.unitarity_defect);
}
