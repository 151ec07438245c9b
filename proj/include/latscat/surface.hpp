#ifndef LATSCAT_SURFACE_HPP
#define LATSCAT_SURFACE_HPP

#include <boost/math/tools/roots.hpp>
#include <iomanip>
#include <memory>
#include <ostream>

#include "dispersion.hpp"
#include "quadrature.hpp"

namespace latscat {

struct SurfacePoint {
    Vec xi{0, 0};
    Vec velocity{0, 0};
    Vec tangent{0, 0};
    double speed = 0.0;
};

struct SurfaceComponent {
    std::vector<Vec> points;
    std::vector<Vec> tangents;
    std::vector<Vec> velocities;
    std::vector<double> gl_weights;
    std::vector<double> quad_weights;
    bool closed = false;
    double length = 0.0;  // arc length (d=2)
    Vec seed{0, 0};
    // d=2: 2N samples at half the arc step, even entries coincide with the nodes
    std::vector<SurfacePoint> half_nodes;

    std::size_t size() const { return points.size(); }
    double arc_step() const { return points.empty() ? 0.0 : length / points.size(); }
    double volume() const {
        double s = 0.0;
        for (double w : quad_weights) s += w;
        return s;
    }
    SurfacePoint node(std::size_t j) const {
        return {points[j], velocities[j], tangents[j], norm(velocities[j])};
    }
};

struct EnergySurface {
    int dim = 1;
    double lambda = 0.0;
    std::vector<SurfaceComponent> components;
    double dist_to_threshold = 0.0;

    std::size_t size() const {
        std::size_t n = 0;
        for (auto& c : components) n += c.size();
        return n;
    }
    std::size_t offset(std::size_t comp) const {
        std::size_t n = 0;
        for (std::size_t c = 0; c < comp; ++c) n += components[c].size();
        return n;
    }
    std::pair<std::size_t, std::size_t> locate(std::size_t j) const {
        for (std::size_t c = 0; c < components.size(); ++c) {
            if (j < components[c].size()) return {c, j};
            j -= components[c].size();
        }
        throw Error(ErrorKind::InvalidArgument, "surface index out of range");
    }
    SurfacePoint point(std::size_t j) const {
        auto [c, k] = locate(j);
        return components[c].node(k);
    }
    std::vector<double> weights() const {
        std::vector<double> w;
        for (auto& c : components) w.insert(w.end(), c.quad_weights.begin(), c.quad_weights.end());
        return w;
    }
    double max_speed() const {
        double m = 0.0;
        for (auto& c : components)
            for (auto& v : c.velocities) m = std::max(m, norm(v));
        return m;
    }
    double volume() const {
        double s = 0.0;
        for (auto& c : components) s += c.volume();
        return s;
    }
};

namespace detail {

inline Vec project_on_shell(const TrigPolynomial& p, double lambda, Vec xi) {
    for (int it = 0; it < 30; ++it) {
        double g = p.eval(xi) - lambda;
        if (std::abs(g) <= 1e-14) break;
        Vec v = p.velocity(xi);
        double v2 = dot(v, v);
        if (v2 == 0.0) throw Error(ErrorKind::ThresholdTooClose, "zero velocity during projection");
        xi = xi - (g / v2) * v;
    }
    return xi;
}

// co-orientation: cross(tangent, v) = |v| > 0
inline Vec unit_tangent(const TrigPolynomial& p, const Vec& xi) {
    Vec v = p.velocity(xi);
    double s = norm(v);
    return {v[1] / s, -v[0] / s};
}

inline Vec rk4(const TrigPolynomial& p, double lambda, Vec xi, double ds) {
    Vec k1 = unit_tangent(p, xi);
    Vec k2 = unit_tangent(p, xi + (0.5 * ds) * k1);
    Vec k3 = unit_tangent(p, xi + (0.5 * ds) * k2);
    Vec k4 = unit_tangent(p, xi + ds * k3);
    Vec next = xi + (ds / 6.0) * (k1 + (2.0 * k2) + (2.0 * k3) + k4);
    return project_on_shell(p, lambda, next);
}

// march `steps` steps of length ds from xi (unwrapped coordinates), substeps <= 0.005
inline std::vector<Vec> march(const TrigPolynomial& p, double lambda, Vec xi, double ds, int steps) {
    int sub = std::max(1, static_cast<int>(std::ceil(std::abs(ds) / 0.005)));
    double h = ds / sub;
    std::vector<Vec> out{xi};
    out.reserve(steps + 1);
    for (int s = 0; s < steps; ++s) {
        for (int k = 0; k < sub; ++k) xi = rk4(p, lambda, xi, h);
        out.push_back(xi);
    }
    return out;
}

inline SurfacePoint make_point(const TrigPolynomial& p, const Vec& xi_raw, int dim) {
    SurfacePoint sp;
    sp.xi = canonicalize(xi_raw, dim);
    sp.velocity = p.velocity(sp.xi);
    sp.speed = norm(sp.velocity);
    if (dim == 2) sp.tangent = {sp.velocity[1] / sp.speed, -sp.velocity[0] / sp.speed};
    return sp;
}

inline SurfaceComponent trace_component(const TrigPolynomial& p, double lambda, const Vec& seed, int n_target) {
    // first pass: coarse march to detect closure and estimate the length
    const double h1 = 0.01;
    const long cap = 100L * n_target;
    Vec start = seed;
    Vec xi = start;
    double s = 0.0;
    bool left = false;
    double ell = -1.0;
    for (long step = 1; step <= cap; ++step) {
        xi = march(p, lambda, xi, h1, 1).back();
        s += h1;
        Vec d = torus_diff(start, xi, 2);
        double dist = norm(d);
        if (dist > 4 * h1) left = true;
        if (left && dist < 2 * h1) {
            double ahead = dot(d, unit_tangent(p, xi));
            if (ahead >= 0.0 && ahead < h1) {
                ell = s + ahead;
                break;
            }
        }
    }
    if (ell < 0) throw Error(ErrorKind::OpenCurveOverflow, "level curve did not close within the step budget");

    // refinement: 2N equal arc steps, adjust the length until the curve closes on itself
    const int n = n_target;
    std::vector<Vec> pts;
    for (int it = 0; it < 12; ++it) {
        pts = march(p, lambda, start, ell / (2 * n), 2 * n);
        Vec d = torus_diff(start, pts.back(), 2);
        double delta = dot(d, unit_tangent(p, pts.back()));
        ell += delta;
        if (std::abs(delta) < 1e-13 * std::max(1.0, ell)) break;
    }
    pts = march(p, lambda, start, ell / (2 * n), 2 * n);

    SurfaceComponent c;
    c.closed = true;
    c.length = ell;
    c.seed = canonicalize(seed, 2);
    const double h = ell / n;
    for (int m = 0; m < 2 * n; ++m) c.half_nodes.push_back(make_point(p, pts[m], 2));
    for (int j = 0; j < n; ++j) {
        const auto& sp = c.half_nodes[2 * j];
        c.points.push_back(sp.xi);
        c.velocities.push_back(sp.velocity);
        c.tangents.push_back(sp.tangent);
        c.gl_weights.push_back(1.0 / sp.speed);
        c.quad_weights.push_back(h / sp.speed);
    }
    return c;
}

}  // namespace detail

inline EnergySurface extract(const TrigPolynomial& p, double lambda, int n_target) {
    const int dim = p.dim();
    auto thr = thresholds(p, 64);
    EnergySurface surf;
    surf.dim = dim;
    surf.lambda = lambda;
    surf.dist_to_threshold = thr.distance(lambda);
    if (!(surf.dist_to_threshold >= 1e-3))
        throw Error(ErrorKind::ThresholdTooClose,
                    "lambda=" + std::to_string(lambda) + " is within 1e-3 of a threshold value");

    auto g = [&](const Vec& xi) { return p.eval(xi) - lambda; };
    auto refine_edge = [&](Vec a, Vec b) {
        // root of g on the segment a -> b, sign change guaranteed
        auto f = [&](double t) { return g(a + t * (b - a)); };
        boost::uintmax_t iters = 200;
        auto r = boost::math::tools::toms748_solve(f, 0.0, 1.0, boost::math::tools::eps_tolerance<double>(52), iters);
        double t = 0.5 * (r.first + r.second);
        return a + t * (b - a);
    };

    if (dim == 1) {
        const int n = 4096;
        const double h = 2 * pi / n;
        SurfaceComponent c;
        std::vector<double> right, leftm;
        for (int i = 0; i < n; ++i) {
            Vec a{-pi + i * h, 0}, b{-pi + (i + 1) * h, 0};
            double ga = g(a), gb = g(b);
            if (ga == 0.0) {
                (p.velocity(a)[0] > 0 ? right : leftm).push_back(a[0]);
                continue;
            }
            if (ga * gb < 0) {
                Vec x = detail::project_on_shell(p, lambda, refine_edge(a, b));
                x = canonicalize(x, 1);
                (p.velocity(x)[0] > 0 ? right : leftm).push_back(x[0]);
            }
        }
        std::sort(right.begin(), right.end());
        std::sort(leftm.begin(), leftm.end(), std::greater<>());
        for (auto* list : {&right, &leftm}) {
            for (double x : *list) {
                Vec xi{x, 0};
                Vec v = p.velocity(xi);
                c.points.push_back(xi);
                c.velocities.push_back(v);
                c.tangents.push_back({0, 0});
                c.gl_weights.push_back(1.0 / std::abs(v[0]));
                c.quad_weights.push_back(1.0 / std::abs(v[0]));
                c.half_nodes.push_back({xi, v, {0, 0}, std::abs(v[0])});
            }
        }
        if (c.points.empty()) throw Error(ErrorKind::InvalidArgument, "energy outside the band: empty surface");
        surf.components.push_back(std::move(c));
        return surf;
    }

    if (n_target < 32) throw Error(ErrorKind::InvalidArgument, "n_target must be at least 32 in d=2");
    if (n_target % 2) ++n_target;

    // seeds from sign changes along the edges of a 64x64 grid
    const int gn = 64;
    const double h = 2 * pi / gn;
    std::vector<double> gv(gn * gn);
    for (int a = 0; a < gn; ++a)
        for (int b = 0; b < gn; ++b) gv[a * gn + b] = g({-pi + a * h, -pi + b * h});
    std::vector<Vec> seeds;
    for (int a = 0; a < gn; ++a) {
        for (int b = 0; b < gn; ++b) {
            Vec x0{-pi + a * h, -pi + b * h};
            double g0 = gv[a * gn + b];
            double g1 = gv[((a + 1) % gn) * gn + b];
            double g2 = gv[a * gn + (b + 1) % gn];
            if (g0 * g1 < 0) seeds.push_back(refine_edge(x0, x0 + Vec{h, 0}));
            if (g0 * g2 < 0) seeds.push_back(refine_edge(x0, x0 + Vec{0, h}));
        }
    }
    for (auto& s : seeds) s = canonicalize(detail::project_on_shell(p, lambda, s), 2);
    std::sort(seeds.begin(), seeds.end());
    if (seeds.empty()) throw Error(ErrorKind::InvalidArgument, "energy outside the band: empty surface");

    std::vector<bool> covered(seeds.size(), false);
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        if (covered[i]) continue;
        auto comp = detail::trace_component(p, lambda, seeds[i], n_target);
        double step = comp.arc_step();
        for (std::size_t k = 0; k < seeds.size(); ++k) {
            if (covered[k]) continue;
            for (auto& hp : comp.half_nodes) {
                if (norm(torus_diff(hp.xi, seeds[k], 2)) < step) {
                    covered[k] = true;
                    break;
                }
            }
        }
        surf.components.push_back(std::move(comp));
    }
    return surf;
}

inline void write_surface_csv(std::ostream& os, const EnergySurface& s) {
    os << std::setprecision(17);
    os << "component,index";
    for (int k = 1; k <= s.dim; ++k) os << ",xi_" << k;
    for (int k = 1; k <= s.dim; ++k) os << ",v_" << k;
    os << ",gl_weight,quad_weight\n";
    for (std::size_t c = 0; c < s.components.size(); ++c) {
        auto& comp = s.components[c];
        for (std::size_t j = 0; j < comp.size(); ++j) {
            os << c << ',' << j;
            for (int k = 0; k < s.dim; ++k) os << ',' << comp.points[j][k];
            for (int k = 0; k < s.dim; ++k) os << ',' << comp.velocities[j][k];
            os << ',' << comp.gl_weights[j] << ',' << comp.quad_weights[j] << '\n';
        }
    }
}

struct CoareaResult {
    double lhs = 0.0;
    double rhs = 0.0;
    double rel_err = 0.0;
    int grid_n = 0;
    std::vector<double> smeared;  // one value per eps
};

// Surface integral of f against m_lambda versus the eps -> 0 limit of the
// Lorentzian-smeared volume integral (1/pi) int Im[(p0 - lambda - i eps)^-1] f dxi.
inline CoareaResult coarea_check(const EnergySurface& surface, const TrigPolynomial& p,
                                 const std::function<double(const Vec&)>& f, const std::vector<double>& eps_list,
                                 int max_grid = 0) {
    if (eps_list.size() < 3) throw Error(ErrorKind::InvalidArgument, "coarea_check needs at least 3 eps values");
    for (std::size_t k = 1; k < eps_list.size(); ++k)
        if (!(eps_list[k] < eps_list[k - 1])) throw Error(ErrorKind::InvalidArgument, "eps_list must decrease");
    const int dim = p.dim();
    CoareaResult out;
    double abs_lhs = 0.0;
    for (auto& c : surface.components)
        for (std::size_t j = 0; j < c.size(); ++j) {
            out.lhs += c.quad_weights[j] * f(c.points[j]);
            abs_lhs += c.quad_weights[j] * std::abs(f(c.points[j]));
        }

    if (max_grid == 0) max_grid = dim == 1 ? (1 << 20) : 4096;
    int n = dim == 1 ? 1024 : 64;
    auto integrate = [&](int n) {
        std::vector<double> acc(eps_list.size(), 0.0);
        const double h = 2 * pi / n;
        const int ny = dim == 2 ? n : 1;
        for (int a = 0; a < n; ++a) {
            std::vector<double> row(eps_list.size(), 0.0);
            for (int b = 0; b < ny; ++b) {
                Vec xi{-pi + (a + 0.5) * h, dim == 2 ? -pi + (b + 0.5) * h : 0.0};
                double e = p.eval(xi) - surface.lambda;
                double fv = f(xi);
                if (fv == 0.0) continue;
                for (std::size_t k = 0; k < eps_list.size(); ++k) {
                    double eps = eps_list[k];
                    row[k] += fv * eps / (e * e + eps * eps);
                }
            }
            for (std::size_t k = 0; k < eps_list.size(); ++k) acc[k] += row[k];
        }
        for (auto& v : acc) v *= std::pow(h, dim) / pi;
        return acc;
    };
    std::vector<double> prev = integrate(n);
    bool ok = false;
    while (2 * n <= max_grid) {
        n *= 2;
        auto cur = integrate(n);
        double change = 0.0;
        for (std::size_t k = 0; k < cur.size(); ++k) change = std::max(change, std::abs(cur[k] - prev[k]));
        prev = cur;
        if (change < 1e-6) {
            ok = true;
            break;
        }
    }
    if (!ok) throw Error(ErrorKind::GridUnderresolved, "smeared volume integral not converged at grid " + std::to_string(n));
    out.grid_n = n;
    out.smeared = prev;
    out.rhs = quad::neville_at_zero(eps_list, prev);
    // integrands that average to zero on the surface are measured against int |f| instead
    double scale = std::max(std::abs(out.rhs), abs_lhs);
    out.rel_err = scale == 0.0 ? std::abs(out.lhs) : std::abs(out.lhs - out.rhs) / scale;
    return out;
}

}  // namespace latscat

#endif
