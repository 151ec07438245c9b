#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "latscat/dispersion.hpp"

using namespace latscat;
using Catch::Matchers::WithinAbs;

TEST_CASE("square lattice values") {
    auto p = square_lattice(2);
    CHECK_THAT(p.eval({0, 0}), WithinAbs(0.0, 1e-15));
    CHECK_THAT(p.eval({-pi, -pi}), WithinAbs(4.0, 1e-14));
    auto p1 = square_lattice(1);
    CHECK_THAT(p1.eval({pi / 2, 0}), WithinAbs(1.0, 1e-15));
}

TEST_CASE("triangular lattice maximum") {
    auto p = triangular_lattice();
    CHECK_THAT(p.eval({2 * pi / 3, 2 * pi / 3}), WithinAbs(4.5, 1e-14));
    CHECK_THAT(p.eval({0, 0}), WithinAbs(0.0, 1e-15));
}

TEST_CASE("square lattice velocity") {
    auto p = square_lattice(2);
    Vec v = p.velocity({pi / 2, 0});
    CHECK_THAT(v[0], WithinAbs(1.0, 1e-15));
    CHECK_THAT(v[1], WithinAbs(0.0, 1e-15));
}

TEST_CASE("velocity vanishes at critical points") {
    for (auto p : {square_lattice(1), square_lattice(2), triangular_lattice()}) {
        auto t = thresholds(p, 32);
        for (auto& c : t.critical_points) CHECK(norm(p.velocity(c)) < 1e-12);
    }
}

TEST_CASE("velocity matches central differences") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-pi, pi);
    const double h = 1e-5;
    for (auto p : {square_lattice(2), triangular_lattice()}) {
        for (int k = 0; k < 100; ++k) {
            Vec xi{u(rng), u(rng)};
            Vec v = p.velocity(xi);
            double fx = (p.eval(xi + Vec{h, 0}) - p.eval(xi - Vec{h, 0})) / (2 * h);
            double fy = (p.eval(xi + Vec{0, h}) - p.eval(xi - Vec{0, h})) / (2 * h);
            CHECK_THAT(v[0], WithinAbs(fx, 1e-8));
            CHECK_THAT(v[1], WithinAbs(fy, 1e-8));
        }
    }
    // the triangular example point
    auto p = triangular_lattice();
    Vec v = p.velocity({pi / 2, 0});
    CHECK_THAT(v[0], WithinAbs(1.0 + std::sin(pi / 2), 1e-15));
    CHECK_THAT(v[1], WithinAbs(std::sin(pi / 2), 1e-15));
}

TEST_CASE("square lattice reflection symmetry") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-pi, pi);
    auto p = square_lattice(2);
    for (int k = 0; k < 100; ++k) {
        Vec xi{u(rng), u(rng)};
        Vec refl = canonicalize(Vec{pi, pi} - xi, 2);
        CHECK_THAT(p.eval(refl), WithinAbs(4.0 - p.eval(xi), 1e-12));
    }
}

TEST_CASE("thresholds of the square lattices") {
    auto t2 = thresholds(square_lattice(2), 32);
    REQUIRE(t2.values.size() == 3);
    CHECK_THAT(t2.values[0], WithinAbs(0.0, 1e-12));
    CHECK_THAT(t2.values[1], WithinAbs(2.0, 1e-12));
    CHECK_THAT(t2.values[2], WithinAbs(4.0, 1e-12));
    CHECK(t2.critical_points.size() == 4);

    auto t1 = thresholds(square_lattice(1), 32);
    REQUIRE(t1.values.size() == 2);
    CHECK_THAT(t1.values[0], WithinAbs(0.0, 1e-12));
    CHECK_THAT(t1.values[1], WithinAbs(2.0, 1e-12));
}

TEST_CASE("thresholds of the triangular lattice") {
    // the three saddles (pi,0), (0,pi), (pi,pi) all sit at energy 4
    auto t = thresholds(triangular_lattice(), 64);
    CHECK(t.critical_points.size() == 6);
    REQUIRE(t.values.size() == 3);
    CHECK_THAT(t.values[0], WithinAbs(0.0, 1e-12));
    CHECK_THAT(t.values[1], WithinAbs(4.0, 1e-12));
    CHECK_THAT(t.values[2], WithinAbs(4.5, 1e-12));
    auto p = triangular_lattice();
    for (Vec s : {Vec{-pi, 0}, Vec{0, -pi}, Vec{-pi, -pi}}) CHECK_THAT(p.eval(s), WithinAbs(4.0, 1e-14));
}

TEST_CASE("threshold values are stable under grid doubling") {
    for (auto p : {square_lattice(2), triangular_lattice()}) {
        auto a = thresholds(p, 32), b = thresholds(p, 64);
        REQUIRE(a.values.size() == b.values.size());
        for (std::size_t k = 0; k < a.values.size(); ++k) CHECK_THAT(a.values[k], WithinAbs(b.values[k], 1e-9));
    }
}

TEST_CASE("every threshold value is attained at a listed critical point") {
    auto p = triangular_lattice();
    auto t = thresholds(p, 32);
    for (double v : t.values) {
        bool hit = false;
        for (auto& c : t.critical_points) hit = hit || std::abs(p.eval(c) - v) < 1e-9;
        CHECK(hit);
    }
}

TEST_CASE("coefficient symmetry is enforced") {
    TrigPolynomial::Coeffs c{{Site{1, 0}, 1.0}, {Site{-1, 0}, 0.5}};
    CHECK_THROWS_AS(TrigPolynomial(1, c), Error);
    CHECK_THROWS_AS(thresholds(square_lattice(2), 8), Error);
}

TEST_CASE("table dispersion equals the named square lattice") {
    TrigPolynomial::Coeffs c{{Site{0, 0}, 1.0}, {Site{1, 0}, -0.5}, {Site{-1, 0}, -0.5}};
    TrigPolynomial p(1, c);
    auto q = square_lattice(1);
    for (double x : {-3.0, -1.0, 0.2, 2.5}) CHECK(p.eval({x, 0}) == q.eval({x, 0}));
}

TEST_CASE("canonicalization maps to [-pi, pi)") {
    CHECK(wrap_angle(pi) == -pi);
    CHECK_THAT(wrap_angle(3 * pi / 2), WithinAbs(-pi / 2, 1e-15));
    Vec c = canonicalize({7.0, -7.0}, 2);
    CHECK(c[0] >= -pi);
    CHECK(c[0] < pi);
    CHECK(c[1] >= -pi);
    CHECK(c[1] < pi);
}
