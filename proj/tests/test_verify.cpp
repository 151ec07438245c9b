#include <catch2/catch_amalgamated.hpp>

#include "latscat/verify.hpp"

using namespace latscat;
using Catch::Matchers::WithinAbs;

namespace {

std::shared_ptr<const EnergySurface> surf(const TrigPolynomial& p, double lambda, int n) {
    return std::make_shared<const EnergySurface>(extract(p, lambda, n));
}

QuantizeOptions opts(double x_max, double a_inf = 0.0) {
    QuantizeOptions o;
    o.x_max = x_max;
    o.a_inf = a_inf;
    return o;
}

SurfaceKernel born_kernel(std::shared_ptr<const EnergySurface> s, const BornPhase& b, double kappa, double x_max) {
    return quantize_symbol(
        s, [&](double x, const SurfacePoint& sp) { return std::polar(1.0, -kappa * b.psi(x, sp)); }, opts(x_max, 1.0));
}

SurfaceKernel psi_kernel(std::shared_ptr<const EnergySurface> s, const BornPhase& b, double x_max) {
    return quantize_symbol(s, [&](double x, const SurfacePoint& sp) -> Complex { return b.psi(x, sp); }, opts(x_max));
}

// one small d=2 scattering problem shared by several cases
struct SmallSquare {
    std::shared_ptr<const EnergySurface> s = surf(square_lattice(2), 1.0, 32);
    BornPhase phase{LatticePotential::gaussian(2, 1.0, 2.0), 2};
    SurfaceKernel born1 = psi_kernel(s, phase, 30.0);
    std::vector<ComparisonRow> rows;
    SmallSquare() {
        for (double kappa : {0.1, 0.05}) {
            auto res = extrapolate(square_lattice(2), LatticePotential::gaussian(2, kappa, 2.0), s, {0.24, 0.12, 0.06},
                                   {48});
            rows.push_back(born_compare(res, born_kernel(s, phase, kappa, 30.0), born1, kappa));
        }
    }
};

const SmallSquare& small_square() {
    static const SmallSquare fixture;
    return fixture;
}

}  // namespace

TEST_CASE("born_compare on the free problem is identically zero") {
    auto s = surf(square_lattice(2), 1.0, 32);
    auto res = extrapolate(square_lattice(2), LatticePotential::zero(2), s, {0.4, 0.2}, {32});
    BornPhase b(LatticePotential::zero(2), 2);
    auto row = born_compare(res, born_kernel(s, b, 0.1, 30.0), psi_kernel(s, b, 30.0), 0.1);
    CHECK(row.norm_s_minus_i == 0.0);
    CHECK(row.norm_first_order == 0.0);
    CHECK(row.norm_born == 0.0);
    CHECK(row.odd_part_per_kappa == 0.0);
    CHECK(row.ordering_ok);

    ComparisonReport rep;
    rep.rows = {row, row};
    CHECK(theorem_gate(rep, 0.0));
    CHECK(rep.vacuous);
}

TEST_CASE("kernels from different surfaces are refused") {
    auto s1 = surf(square_lattice(2), 1.0, 32);
    auto s2 = surf(square_lattice(2), 1.0, 48);
    auto res = extrapolate(square_lattice(2), LatticePotential::zero(2), s1, {0.4, 0.2}, {32});
    BornPhase b(LatticePotential::zero(2), 2);
    try {
        born_compare(res, born_kernel(s2, b, 0.1, 30.0), psi_kernel(s1, b, 30.0), 0.1);
        FAIL("expected SurfaceMismatch");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::SurfaceMismatch);
    }
}

TEST_CASE("norm ordering and second-order scaling on a small problem") {
    const auto& f = small_square();
    for (auto& row : f.rows) {
        CHECK(row.ordering_ok);
        CHECK(row.norm_born < row.norm_first_order);
        CHECK(row.unitarity_defect <= 5e-3);
    }
    ComparisonReport rep;
    rep.rows = f.rows;
    CHECK_THAT(scaling_ratio(rep), WithinAbs(4.0, 0.5));
    CHECK(theorem_gate(rep, 0.0));
    CHECK(rep.pass_scaling);
    CHECK_FALSE(rep.vacuous);
}

TEST_CASE("the Hermitian part is gauge-stable across couplings") {
    // (S - S*)/2 is first order in kappa; its size per unit coupling must not drift
    const auto& f = small_square();
    double a = f.rows[0].odd_part_per_kappa, b = f.rows[1].odd_part_per_kappa;
    CHECK(std::abs(a - b) <= 0.1 * b);
    CHECK(b > 0.0);
}

TEST_CASE("gate rejects a first-order remainder") {
    ComparisonReport rep;
    ComparisonRow a, b;
    a.kappa = 0.1;
    b.kappa = 0.05;
    a.norm_s_minus_i = 0.4;
    b.norm_s_minus_i = 0.2;
    a.norm_first_order = 0.02;
    b.norm_first_order = 0.01;
    a.norm_born = b.norm_born = 0.001;
    rep.rows = {a, b};
    rep.gated_row = 1;
    CHECK_FALSE(theorem_gate(rep, 0.0));
    CHECK_THAT(rep.scaling_ratio, WithinAbs(2.0, 1e-12));
    CHECK(rep.pass_unitarity);
    CHECK_FALSE(rep.pass_scaling);

    rep.decay_applicable = true;
    b.norm_first_order = 0.005;
    rep.rows = {a, b};
    rep.fit_s_minus_i = {DecayFit{}};
    rep.separation = 0.2;
    CHECK_FALSE(theorem_gate(rep, 2.5));
    CHECK(rep.pass_scaling);
    CHECK_FALSE(rep.pass_decay);
    rep.separation = 0.8;
    CHECK(theorem_gate(rep, 2.5));
}

TEST_CASE("decay fit recovers symbol smoothness") {
    auto s = surf(square_lattice(2), 1.0, 64);
    SECTION("smooth symbol decays fast") {
        BornPhase b(LatticePotential::gaussian(2, 1.0, 2.0), 2);
        auto K = psi_kernel(s, b, 30.0);
        auto fit = decay_order_fit(K, 4, 16);
        CHECK(fit.exponent < -6.0);
    }
    SECTION("power-law symbol decays at its own rate") {
        auto K = quantize_symbol(
            s, [](double x, const SurfacePoint&) -> Complex { return std::pow(1.0 + x * x, -0.75); }, opts(2000.0));
        auto fit = decay_order_fit(K, 4, 16);
        CHECK(fit.modes.size() == 13);
        // the same log-log fit applied to the symbol periodized over the 64 surface modes
        const double dz = 2 * pi / s->components[0].length;
        auto periodized = [&](int q) {
            double sum = 0.0;
            for (int k = -20000; k <= 20000; ++k) sum += std::pow(1.0 + std::pow(dz * (q + 64.0 * k), 2), -0.75);
            return sum;
        };
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        for (int q = 4; q <= 16; ++q) {
            double x = std::log(double(q)), y = std::log(periodized(q));
            sx += x, sy += y, sxx += x * x, sxy += x * y;
        }
        double expected = (13 * sxy - sx * sy) / (13 * sxx - sx * sx);
        CHECK_THAT(fit.exponent, WithinAbs(expected, 0.1));
        CHECK(fit.exponent < -1.0);
    }
    SECTION("diagonal kernels carry no modes") {
        Eigen::MatrixXcd I = Eigen::MatrixXcd::Identity(64, 64);
        try {
            decay_order_fit(I, 4, 16);
            FAIL("expected InsufficientModes");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::InsufficientModes);
        }
    }
    CHECK_THROWS_AS(decay_order_fit(Eigen::MatrixXcd::Ones(64, 64), 0, 16), Error);
    CHECK_THROWS_AS(decay_order_fit(Eigen::MatrixXcd::Ones(64, 64), 4, 40), Error);
}

TEST_CASE("d=1 forward amplitude carries the Born phase") {
    auto p = square_lattice(1);
    auto s = surf(p, 1.0, 0);
    auto shape = LatticePotential::gaussian(1, 1.0, 3.0);
    double psi0 = xray_phase(shape, *s, 0.0, 0);
    std::vector<double> err;
    for (double kappa : {0.02, 0.01}) {
        auto S = transfer_matrix_1d(p, shape.scaled(kappa), 1.0);
        err.push_back(std::abs(std::arg(S(0, 0)) + kappa * psi0));
        CHECK(std::abs(std::abs(S(0, 0)) - 1.0) <= 1e-6);
    }
    CHECK(err[0] <= 1e-2 * 0.02 * psi0);
    CHECK(err[0] / err[1] > 3.5);
}
