#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "latscat/quantize.hpp"

using namespace latscat;
using Catch::Matchers::WithinAbs;

namespace {

std::shared_ptr<const EnergySurface> surf(const TrigPolynomial& p, double lambda, int n) {
    return std::make_shared<const EnergySurface>(extract(p, lambda, n));
}

QuantizeOptions opts(double x_max, Quantization c = Quantization::Weyl) {
    QuantizeOptions o;
    o.x_max = x_max;
    o.convention = c;
    return o;
}

double max_abs(const Eigen::MatrixXcd& A) { return A.cwiseAbs().maxCoeff(); }

}  // namespace

TEST_CASE("constant symbol quantizes to the identity exactly") {
    auto s = surf(square_lattice(2), 1.0, 64);
    for (auto c : {Quantization::Weyl, Quantization::Right}) {
        auto o = opts(40.0, c);
        o.a_inf = 1.0;
        auto K = quantize_symbol(s, [](double, const SurfacePoint&) { return Complex(1.0); }, o);
        CHECK(K.matrix == Eigen::MatrixXcd::Identity(64, 64));
    }
    auto s1 = surf(square_lattice(1), 1.0, 0);
    auto K1 = quantize_symbol(s1, [](double, const SurfacePoint&) { return Complex(1.0); }, opts(1.0));
    CHECK(K1.matrix == Eigen::MatrixXcd::Identity(2, 2));
}

TEST_CASE("exp(-i psi) with V=0 is the identity") {
    auto s = surf(square_lattice(2), 1.0, 32);
    BornPhase b(LatticePotential::zero(2), 2);
    auto o = opts(30.0);
    o.a_inf = 1.0;
    auto K = quantize_symbol(s, [&](double x, const SurfacePoint& sp) { return std::polar(1.0, -b.psi(x, sp)); }, o);
    CHECK(K.matrix == Eigen::MatrixXcd::Identity(32, 32));
}

TEST_CASE("Gaussian phase symbol: surface Fourier coefficients match the closed form") {
    // right quantization evaluates the symbol at the column node, so the
    // transform of column j over i - j returns a(-zeta_q, j) for every dual mode q
    const double kappa = 0.1, sigma = 2.0;
    auto s = surf(square_lattice(2), 1.0, 64);
    const auto& c = s->components[0];
    BornPhase b(LatticePotential::gaussian(2, kappa, sigma), 2);
    auto K = quantize_symbol(s, [&](double x, const SurfacePoint& sp) -> Complex { return b.psi(x, sp); },
                             opts(30.0, Quantization::Right));
    const int N = 64;
    const double dz = 2 * pi / c.length;
    double worst = 0.0;
    for (int j = 0; j < N; j += 5) {
        double speed = c.node(j).speed;
        for (int q = -N / 2 + 1; q < N / 2; ++q) {
            Complex sum{};
            for (int i = 0; i < N; ++i) sum += K.matrix(i, j) * std::polar(1.0, 2 * pi * double(i - j) * q / N);
            double z = dz * q;
            double exact = kappa * sigma * std::sqrt(pi) * std::exp(-z * z / (sigma * sigma)) / speed;
            worst = std::max(worst, std::abs(sum - exact));
        }
    }
    CHECK(worst <= 1e-4);
}

TEST_CASE("real even symbols give Hermitian Weyl kernels") {
    auto s = surf(square_lattice(2), 1.0, 64);
    BornPhase b(LatticePotential::gaussian(2, 0.1, 2.0), 2);
    auto K = quantize_symbol(s, [&](double x, const SurfacePoint& sp) -> Complex { return b.psi(x, sp); }, opts(30.0));
    CHECK(max_abs(K.matrix - K.matrix.adjoint()) <= 1e-10);
}

TEST_CASE("multi-component surfaces quantize block diagonally") {
    auto s = surf(triangular_lattice(), 4.25, 32);
    REQUIRE(s->components.size() == 2);
    BornPhase b(LatticePotential::gaussian(2, 0.1, 2.0), 2);
    auto K = quantize_symbol(s, [&](double x, const SurfacePoint& sp) -> Complex { return b.psi(x, sp); }, opts(30.0));
    CHECK(K.matrix.block(0, 32, 32, 32).cwiseAbs().maxCoeff() == 0.0);
    CHECK(K.matrix.block(32, 0, 32, 32).cwiseAbs().maxCoeff() == 0.0);
    CHECK(K.matrix.block(0, 0, 32, 32).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("Born exponential versus its first-order expansion scales like kappa^2") {
    auto s = surf(square_lattice(2), 1.0, 64);
    BornPhase b(LatticePotential::power_law(2, 1.0, 2.0, 2.5).clipped(48), 2);
    auto o = opts(75.0);
    auto K1 = quantize_symbol(s, [&](double x, const SurfacePoint& sp) -> Complex { return b.psi(x, sp); }, o);
    o.a_inf = 1.0;
    auto rem = [&](double kappa) {
        auto E = quantize_symbol(
            s, [&](double x, const SurfacePoint& sp) { return std::polar(1.0, -kappa * b.psi(x, sp)); }, o);
        Eigen::MatrixXcd I = Eigen::MatrixXcd::Identity(64, 64);
        return op_norm(E.matrix - (I - Complex(0, kappa) * K1.matrix));
    };
    double ratio = rem(0.1) / rem(0.05);
    CHECK(ratio >= 3.5);
    CHECK(ratio <= 4.5);
}

TEST_CASE("folded tail matches a wider truncation") {
    auto s = surf(square_lattice(2), 1.0, 32);
    auto a = [](double x, const SurfacePoint& sp) -> Complex {
        return 1.0 / ((1.0 + x * x) * sp.speed);
    };
    auto on = opts(40.0);
    on.tail_tol = 1e-4;
    auto narrow = quantize_symbol(s, a, on);
    auto wide = quantize_symbol(s, a, opts(1000.0));
    auto o2 = opts(40.0);
    o2.fold_tail = false;
    auto cut = quantize_symbol(s, a, o2);
    double with_fold = op_norm(narrow.matrix - wide.matrix);
    double without = op_norm(cut.matrix - wide.matrix);
    CHECK(with_fold < 0.1 * without);
}

TEST_CASE("symbols that are not integrable are rejected") {
    auto s = surf(square_lattice(2), 1.0, 32);
    auto slow = [](double x, const SurfacePoint&) -> Complex { return 1.0 / std::sqrt(1.0 + x * x); };
    try {
        quantize_symbol(s, slow, opts(20.0));
        FAIL("expected TailTooFat");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::TailTooFat);
    }
}

TEST_CASE("restriction symbol") {
    auto s = extract(square_lattice(2), 1.0, 32);
    auto V = LatticePotential::gaussian(2, 0.1, 2.0);
    for (std::size_t j = 0; j < s.size(); j += 3)
        for (double x : {0.0, 1.5})
            CHECK_THAT(restriction_symbol(V, s, x, j), WithinAbs(xray_phase(V, s, x, j) / (2 * pi), 1e-14));
    CHECK(restriction_symbol(LatticePotential::zero(2), s, 0.3, 0) == 0.0);
    auto s1 = extract(square_lattice(1), 0.5, 0);
    auto G = LatticePotential::gaussian(1, 1.0, 1.0);
    for (std::size_t j = 0; j < 2; ++j)
        CHECK_THAT(restriction_symbol(G, s1, 0.0, j), WithinAbs(std::sqrt(pi) / (2 * pi * s1.point(j).speed), 1e-9));
}

TEST_CASE("restriction formula against the torus grid") {
    auto s2 = surf(square_lattice(2), 1.0, 64);
    // the gap to the exact restriction is sub-principal and shrinks like sigma^-2
    auto r2 = restriction_check(LatticePotential::gaussian(2, 0.1, 4.0), s2, 256, opts(60.0));
    CHECK(r2.rel_err <= 1e-2);
    auto narrow = restriction_check(LatticePotential::gaussian(2, 0.1, 2.0), s2, 256, opts(30.0));
    CHECK(narrow.rel_err > r2.rel_err);
    auto s1 = surf(square_lattice(1), 1.0, 0);
    auto r1 = restriction_check(LatticePotential::gaussian(1, 0.1, 2.0), s1, 256, opts(1.0));
    CHECK(r1.rel_err <= 1e-3);
    auto r0 = restriction_check(LatticePotential::zero(2), s2, 64, opts(30.0));
    CHECK(r0.rel_err == 0.0);
}

TEST_CASE("restriction check refuses an underresolved grid") {
    auto s = surf(square_lattice(2), 1.0, 32);
    auto V = LatticePotential::gaussian(2, 0.1, 6.0);
    try {
        restriction_check(V, s, 16, opts(60.0));
        FAIL("expected GridUnderresolved");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::GridUnderresolved);
    }
}

TEST_CASE("kernel export") {
    auto s = surf(triangular_lattice(), 4.25, 32);
    BornPhase b(LatticePotential::gaussian(2, 0.1, 2.0), 2);
    auto o = opts(30.0);
    o.a_inf = 1.0;
    auto K = quantize_symbol(s, [&](double x, const SurfacePoint& sp) { return std::polar(1.0, -b.psi(x, sp)); }, o);
    std::ostringstream bin;
    write_kernel_binary(bin, K);
    std::string bytes = bin.str();
    REQUIRE(bytes.size() == 16 + 16 * 64 * 64);
    CHECK(bytes.substr(0, 4) == "SKRN");
    CHECK(static_cast<unsigned char>(bytes[4]) == 64);
    CHECK(static_cast<unsigned char>(bytes[8]) == 2);
    std::uint32_t comps = 0;
    auto M = read_kernel_binary(bytes, &comps);
    CHECK(comps == 2);
    CHECK(M == K.matrix);
    CHECK_THROWS_AS(read_kernel_binary(bytes.substr(0, 100)), Error);

    std::ostringstream csv;
    write_kernel_csv(csv, K);
    std::istringstream is(csv.str());
    std::string line;
    std::getline(is, line);
    CHECK(line == "i,j,re,im");
    int rows = 0;
    while (std::getline(is, line)) ++rows;
    CHECK(rows == 64 * 64);
}
