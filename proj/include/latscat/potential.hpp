#ifndef LATSCAT_POTENTIAL_HPP
#define LATSCAT_POTENTIAL_HPP

#include <boost/math/interpolators/cardinal_cubic_b_spline.hpp>
#include <boost/math/special_functions/erf.hpp>
#include <limits>
#include <map>
#include <memory>
#include <optional>

#include "surface.hpp"

namespace latscat {

enum class PotentialKind { Zero, Gaussian, PowerLaw, Compact, Table };

inline const char* to_string(PotentialKind k) {
    switch (k) {
        case PotentialKind::Zero: return "zero";
        case PotentialKind::Gaussian: return "gaussian";
        case PotentialKind::PowerLaw: return "power_law";
        case PotentialKind::Compact: return "compact";
        case PotentialKind::Table: return "table";
    }
    return "unknown";
}

namespace detail {

// tensor-product cubic spline through a rectangular table, zero-padded by two
// cells on every side and identically zero beyond the padding
class TableSpline {
public:
    TableSpline() = default;
    TableSpline(int dim, const std::map<Site, double>& values) : dim_(dim) {
        if (values.empty()) return;
        lo_ = {std::numeric_limits<int>::max(), std::numeric_limits<int>::max()};
        hi_ = {std::numeric_limits<int>::min(), std::numeric_limits<int>::min()};
        for (auto& [n, v] : values) {
            for (int k = 0; k < 2; ++k) {
                lo_[k] = std::min(lo_[k], n[k]);
                hi_[k] = std::max(hi_[k], n[k]);
            }
        }
        for (int k = 0; k < dim; ++k) {
            lo_[k] -= 2;
            hi_[k] += 2;
        }
        nx_ = hi_[0] - lo_[0] + 1;
        ny_ = dim == 2 ? hi_[1] - lo_[1] + 1 : 1;
        f_.assign(nx_ * ny_, 0.0);
        for (auto& [n, v] : values) f_[idx(n[0] - lo_[0], n[1] - lo_[1])] = v;
        fx_.assign(f_.size(), 0.0);
        fy_.assign(f_.size(), 0.0);
        fxy_.assign(f_.size(), 0.0);
        auto deriv = [](const std::vector<double>& line) {
            std::vector<double> d(line.size(), 0.0);
            if (line.size() < 4) return d;
            boost::math::interpolators::cardinal_cubic_b_spline<double> s(line.begin(), line.end(), 0.0, 1.0, 0.0,
                                                                           0.0);
            for (std::size_t i = 0; i < line.size(); ++i) d[i] = s.prime(double(i));
            return d;
        };
        for (int b = 0; b < ny_; ++b) {
            std::vector<double> line(nx_);
            for (int a = 0; a < nx_; ++a) line[a] = f_[idx(a, b)];
            auto d = deriv(line);
            for (int a = 0; a < nx_; ++a) fx_[idx(a, b)] = d[a];
        }
        if (dim == 2) {
            for (int a = 0; a < nx_; ++a) {
                std::vector<double> line(ny_), linex(ny_);
                for (int b = 0; b < ny_; ++b) {
                    line[b] = f_[idx(a, b)];
                    linex[b] = fx_[idx(a, b)];
                }
                auto d = deriv(line);
                auto dx = deriv(linex);
                for (int b = 0; b < ny_; ++b) {
                    fy_[idx(a, b)] = d[b];
                    fxy_[idx(a, b)] = dx[b];
                }
            }
        }
    }

    double operator()(const Vec& x) const {
        if (f_.empty()) return 0.0;
        double u = x[0] - lo_[0];
        double w = dim_ == 2 ? x[1] - lo_[1] : 0.0;
        if (u < 0 || u > nx_ - 1 || w < 0 || (dim_ == 2 && w > ny_ - 1)) return 0.0;
        int a = std::min(static_cast<int>(u), nx_ - 2);
        double tu = u - a;
        if (dim_ == 1) return hermite(f_[a], f_[a + 1], fx_[a], fx_[a + 1], tu);
        int b = std::min(static_cast<int>(w), ny_ - 2);
        double tw = w - b;
        // Hermite in x on both bounding rows for values and y-derivatives, then in y
        double v0 = hermite(f_[idx(a, b)], f_[idx(a + 1, b)], fx_[idx(a, b)], fx_[idx(a + 1, b)], tu);
        double v1 = hermite(f_[idx(a, b + 1)], f_[idx(a + 1, b + 1)], fx_[idx(a, b + 1)], fx_[idx(a + 1, b + 1)], tu);
        double d0 = hermite(fy_[idx(a, b)], fy_[idx(a + 1, b)], fxy_[idx(a, b)], fxy_[idx(a + 1, b)], tu);
        double d1 =
            hermite(fy_[idx(a, b + 1)], fy_[idx(a + 1, b + 1)], fxy_[idx(a, b + 1)], fxy_[idx(a + 1, b + 1)], tu);
        return hermite(v0, v1, d0, d1, tw);
    }

    // half-width of a centred square containing the support
    double extent() const {
        if (f_.empty()) return 0.0;
        double r = 0.0;
        for (int k = 0; k < dim_; ++k) r = std::max({r, std::abs(double(lo_[k])), std::abs(double(hi_[k]))});
        return r;
    }

private:
    static double hermite(double p0, double p1, double m0, double m1, double t) {
        double t2 = t * t, t3 = t2 * t;
        return (2 * t3 - 3 * t2 + 1) * p0 + (t3 - 2 * t2 + t) * m0 + (-2 * t3 + 3 * t2) * p1 + (t3 - t2) * m1;
    }
    std::size_t idx(int a, int b) const { return static_cast<std::size_t>(a) * ny_ + b; }

    int dim_ = 1;
    Site lo_{0, 0}, hi_{0, 0};
    int nx_ = 0, ny_ = 1;
    std::vector<double> f_, fx_, fy_, fxy_;
};

}  // namespace detail

// integration window along the ray t -> X + t v: numeric part [lo, hi] plus
// closed-form tails beyond each end
struct RayWindow {
    double lo = 0.0, hi = 0.0;
    bool empty = true;
    double tail_left = 0.0, tail_right = 0.0;
    double tail_error = 0.0;
    double center = 0.0;  // closest approach, used as a panel anchor
    double scale = 1.0;   // natural length along t
};

class LatticePotential {
public:
    LatticePotential() = default;

    static LatticePotential zero(int dim) {
        LatticePotential p;
        p.dim_ = dim;
        p.kind_ = PotentialKind::Zero;
        p.amplitude_ = 0.0;
        return p;
    }
    static LatticePotential gaussian(int dim, double kappa, double sigma, Vec center = {0, 0}) {
        check_width(sigma);
        LatticePotential p;
        p.dim_ = dim;
        p.kind_ = PotentialKind::Gaussian;
        p.amplitude_ = kappa;
        p.width_ = sigma;
        p.center_ = center;
        p.certify();
        return p;
    }
    static LatticePotential power_law(int dim, double kappa, double sigma, double mu, Vec center = {0, 0}) {
        check_width(sigma);
        if (!(mu > 1.0)) throw Error(ErrorKind::DecayTooSlow, "decay order must exceed 1, got " + std::to_string(mu));
        LatticePotential p;
        p.dim_ = dim;
        p.kind_ = PotentialKind::PowerLaw;
        p.amplitude_ = kappa;
        p.width_ = sigma;
        p.decay_ = mu;
        p.center_ = center;
        p.certify();
        return p;
    }
    // smooth bump kappa * exp(1 - 1/(1 - r^2/sigma^2)) supported in r < sigma
    static LatticePotential compact(int dim, double kappa, double sigma, Vec center = {0, 0}) {
        check_width(sigma);
        LatticePotential p;
        p.dim_ = dim;
        p.kind_ = PotentialKind::Compact;
        p.amplitude_ = kappa;
        p.width_ = sigma;
        p.center_ = center;
        p.certify();
        return p;
    }
    static LatticePotential table(int dim, const std::map<Site, double>& values, double mu) {
        if (!(mu > 1.0)) throw Error(ErrorKind::DecayTooSlow, "decay order must exceed 1, got " + std::to_string(mu));
        LatticePotential p;
        p.dim_ = dim;
        p.kind_ = PotentialKind::Table;
        p.amplitude_ = 1.0;
        p.decay_ = mu;
        p.values_ = std::make_shared<std::map<Site, double>>(values);
        p.spline_ = std::make_shared<detail::TableSpline>(dim, values);
        p.certify();
        return p;
    }

    int dim() const { return dim_; }
    PotentialKind kind() const { return kind_; }
    double amplitude() const { return amplitude_; }
    double width() const { return width_; }
    Vec center() const { return center_; }
    std::optional<int> clip_radius() const { return clip_; }
    double decay_constant() const { return decay_constant_; }

    // declared decay order; rapidly decaying kinds report infinity
    double decay_order() const {
        if (kind_ == PotentialKind::PowerLaw || kind_ == PotentialKind::Table) return decay_;
        return std::numeric_limits<double>::infinity();
    }

    bool is_zero() const { return kind_ == PotentialKind::Zero || amplitude_ == 0.0; }

    LatticePotential scaled(double k) const {
        LatticePotential p = *this;
        p.amplitude_ *= k;
        p.decay_constant_ *= std::abs(k);
        return p;
    }

    // restrict to the box |n|_inf <= R; the smooth extension is cut at R + 1/2
    LatticePotential clipped(int R) const {
        LatticePotential p = *this;
        p.clip_ = R;
        return p;
    }

    // smooth extension, respecting the clip box
    double smooth(const Vec& x) const {
        if (clip_) {
            double b = *clip_ + 0.5;
            if (std::abs(x[0]) > b || (dim_ == 2 && std::abs(x[1]) > b)) return 0.0;
        }
        return amplitude_ * shape(x);
    }
    // without the box cut, for integrating along chords already inside the box
    double smooth_unclipped(const Vec& x) const { return amplitude_ * shape(x); }

    double operator()(const Site& n) const {
        if (clip_ && (std::abs(n[0]) > *clip_ || std::abs(n[1]) > *clip_)) return 0.0;
        if (kind_ == PotentialKind::Table) {
            auto it = values_->find(n);
            return it == values_->end() ? 0.0 : amplitude_ * it->second;
        }
        return amplitude_ * shape({double(n[0]), double(n[1])});
    }

    // smallest R with |V(n)| <= tol * |kappa| for every |n|_inf > R (capped at limit)
    int effective_radius(double tol, int limit) const {
        if (is_zero()) return 0;
        int r;
        if (kind_ == PotentialKind::Table) {
            r = static_cast<int>(std::ceil(spline_->extent()));
        } else {
            // catalog shapes are radially decreasing; |n|_inf > R keeps n at distance >= R + 1 - |c|_inf
            double c = std::max(std::abs(center_[0]), std::abs(center_[1]));
            r = 0;
            while (r <= limit) {
                double d = std::max(0.0, r + 1 - c);
                if (d > 0 && shape(center_ + Vec{d, 0.0}) <= tol) break;
                ++r;
            }
        }
        if (clip_) r = std::min(r, *clip_);
        return r;
    }

    // certified integration window for t -> smooth(X + t v) with absolute tail tolerance
    // tol measured for unit amplitude (so the window does not depend on the coupling)
    RayWindow ray_window(const Vec& X, const Vec& v, double tol, double t_max) const {
        RayWindow w;
        if (is_zero()) return w;
        double v2 = dot(v, v);
        double vn = std::sqrt(v2);
        Vec rel = X - center_;
        double t0 = -dot(rel, v) / v2;
        Vec closest = rel + t0 * v;
        double b2 = dot(closest, closest);
        w.center = t0;
        w.empty = false;
        switch (kind_) {
            case PotentialKind::Zero: w.empty = true; return w;
            case PotentialKind::Gaussian: {
                w.scale = width_ / vn;
                // int_{|u|>T} e^{-(b^2 + v^2 u^2)/s^2} du = e^{-b^2/s^2} s sqrt(pi)/|v| erfc(T|v|/s)
                double pref = std::exp(-b2 / (width_ * width_)) * width_ * std::sqrt(pi) / vn;
                double T = 0.0;
                if (pref > tol) T = width_ / vn * boost::math::erfc_inv(tol / pref);
                w.lo = t0 - T;
                w.hi = t0 + T;
                w.tail_error = tol;
                if (T == 0.0) w.empty = true;
                break;
            }
            case PotentialKind::Compact: {
                w.scale = width_ / vn;
                double r2 = width_ * width_ - b2;
                if (r2 <= 0) {
                    w.empty = true;
                    return w;
                }
                double T = std::sqrt(r2) / vn;
                w.lo = t0 - T;
                w.hi = t0 + T;
                break;
            }
            case PotentialKind::Table: {
                double e = spline_->extent() + 1.0;
                w.scale = 1.0 / vn;
                // chord through the bounding disc of the padded table
                double R2 = 2.0 * e * e;
                Vec relo = X;  // table coordinates are absolute
                double s0 = -dot(relo, v) / v2;
                Vec cl = relo + s0 * v;
                double r2 = R2 - dot(cl, cl);
                if (r2 <= 0) {
                    w.empty = true;
                    return w;
                }
                double T = std::sqrt(r2) / vn;
                w.lo = s0 - T;
                w.hi = s0 + T;
                w.center = s0;
                break;
            }
            case PotentialKind::PowerLaw: {
                w.scale = width_ / vn;
                // integrand s^mu (s^2 + b^2 + v^2 u^2)^{-mu/2} = A u^{-mu} (1 + c/u^2)^{-mu/2}
                const double mu = decay_;
                const double A = std::pow(width_ / vn, mu);
                const double c = (width_ * width_ + b2) / v2;
                double T = 50.0 * std::sqrt(c);
                if (clip_) {
                    w.lo = t0 - T;
                    w.hi = t0 + T;
                    break;
                }
                auto next_term = [&](double T) {
                    return A * (mu * (mu + 2) / 8.0) * c * c * std::pow(T, -3.0 - mu) / (mu + 3.0);
                };
                while (next_term(T) > 0.5 * tol) {
                    T *= 2.0;
                    if (T > t_max)
                        throw Error(ErrorKind::TailBoundUnachievable, "power-law ray tail needs T > " +
                                                                          std::to_string(t_max));
                }
                double tail = A * (std::pow(T, 1.0 - mu) / (mu - 1.0) - 0.5 * mu * c * std::pow(T, -1.0 - mu) / (mu + 1.0));
                w.lo = t0 - T;
                w.hi = t0 + T;
                w.tail_left = tail;
                w.tail_right = tail;
                w.tail_error = 2 * next_term(T);
                break;
            }
        }
        if (clip_ && !w.empty) {
            // chord of the ray inside the box [-R-1/2, R+1/2]^d; tails vanish
            double B = *clip_ + 0.5;
            double lo = -std::numeric_limits<double>::infinity(), hi = std::numeric_limits<double>::infinity();
            for (int k = 0; k < dim_; ++k) {
                if (std::abs(v[k]) < 1e-300) {
                    if (std::abs(X[k]) > B) lo = 1, hi = 0;
                    continue;
                }
                double t1 = (-B - X[k]) / v[k], t2 = (B - X[k]) / v[k];
                lo = std::max(lo, std::min(t1, t2));
                hi = std::min(hi, std::max(t1, t2));
            }
            w.tail_left = w.tail_right = w.tail_error = 0.0;
            if (!(hi > lo)) {
                w.empty = true;
                return w;
            }
            if (kind_ == PotentialKind::PowerLaw) {
                // algebraic tails are cut by the box: integrate the whole chord
                w.lo = lo;
                w.hi = hi;
            } else {
                w.lo = std::max(w.lo, lo);
                w.hi = std::min(w.hi, hi);
            }
            if (!(w.hi > w.lo)) w.empty = true;
        }
        return w;
    }

    // |V~(x)| <= C <x>^{-mu} spot-checked along rays out to |x| = 1e3
    void certify() {
        if (kind_ == PotentialKind::Zero) return;
        double mu = decay_order();
        double m = std::isfinite(mu) ? mu : 0.0;
        double C = 0.0;
        for (int k = 0; k < 16; ++k) {
            double a = 2 * pi * k / 16;
            Vec dir{std::cos(a), dim_ == 2 ? std::sin(a) : (k % 2 ? -1.0 : 1.0)};
            if (dim_ == 1) dir = {k % 2 ? -1.0 : 1.0, 0.0};
            for (int e = 0; e <= 60; ++e) {
                double r = e == 0 ? 0.0 : std::pow(10.0, 3.0 * e / 60.0);
                Vec x = r * dir;
                double bound = std::abs(amplitude_ * shape(x)) * std::pow(1.0 + r * r, 0.5 * m);
                if (!std::isfinite(bound)) throw Error(ErrorKind::DecayTooSlow, "potential is not finite");
                C = std::max(C, bound);
            }
        }
        if (std::isfinite(mu)) {
            // the weighted profile must not keep growing at the far end of the rays
            Vec far{1000.0, 0.0};
            double at_end = std::abs(amplitude_ * shape(far)) * std::pow(1.0 + 1e6, 0.5 * m);
            if (at_end > 1.05 * C && at_end > 1e-300)
                throw Error(ErrorKind::DecayTooSlow, "decay certificate fails at |x| = 1e3");
        }
        decay_constant_ = C;
    }

private:
    static void check_width(double s) {
        if (!(s > 0)) throw Error(ErrorKind::InvalidArgument, "potential width must be positive");
    }

    double shape(const Vec& x) const {
        Vec r = x - center_;
        double r2 = r[0] * r[0] + (dim_ == 2 ? r[1] * r[1] : 0.0);
        switch (kind_) {
            case PotentialKind::Zero: return 0.0;
            case PotentialKind::Gaussian: return std::exp(-r2 / (width_ * width_));
            case PotentialKind::PowerLaw: return std::pow(1.0 + r2 / (width_ * width_), -0.5 * decay_);
            case PotentialKind::Compact: {
                double q = r2 / (width_ * width_);
                return q < 1.0 ? std::exp(1.0 - 1.0 / (1.0 - q)) : 0.0;
            }
            case PotentialKind::Table: return (*spline_)(x);
        }
        return 0.0;
    }

    int dim_ = 1;
    PotentialKind kind_ = PotentialKind::Zero;
    double amplitude_ = 0.0;
    double width_ = 1.0;
    double decay_ = 0.0;
    Vec center_{0, 0};
    std::optional<int> clip_;
    double decay_constant_ = 0.0;
    std::shared_ptr<const std::map<Site, double>> values_;
    std::shared_ptr<const detail::TableSpline> spline_;
};

struct PhaseOptions {
    double tol = 1e-9;     // absolute tail tolerance for a unit-amplitude potential
    double t_max = 1e6;    // largest admissible truncation length
    double rel_tol = 1e-12;  // quadrature tolerance on each panel
};

// e_perp = v rotated by +pi/2, normalized (d=2); zero fiber in d=1
inline Vec fiber_basis(const SurfacePoint& sp, int dim) {
    if (dim == 1) return {0, 0};
    return {-sp.velocity[1] / sp.speed, sp.velocity[0] / sp.speed};
}

// int_{a}^{b} V~(X + t v) dt over the part of [a, b] inside the certified window,
// plus closed-form tails when the range is unbounded on that side
inline double ray_integral(const LatticePotential& V, const Vec& X, const Vec& v, double a, double b,
                           const PhaseOptions& opt) {
    if (V.is_zero()) return 0.0;
    RayWindow w = V.ray_window(X, v, opt.tol, opt.t_max);
    double total = 0.0;
    if (a == -std::numeric_limits<double>::infinity()) total += V.amplitude() * w.tail_left;
    if (b == std::numeric_limits<double>::infinity()) total += V.amplitude() * w.tail_right;
    if (w.empty) return total;
    double lo = std::max(a, w.lo), hi = std::min(b, w.hi);
    if (!(hi > lo)) return total;
    auto f = [&](double t) { return V.smooth_unclipped(X + t * v); };
    // panels growing geometrically away from the closest approach
    std::vector<double> cuts{lo, hi};
    double c = std::clamp(w.center, lo, hi);
    cuts.push_back(c);
    for (double d = w.scale; c + d < hi; d *= 2) cuts.push_back(c + d);
    for (double d = w.scale; c - d > lo; d *= 2) cuts.push_back(c - d);
    std::sort(cuts.begin(), cuts.end());
    for (std::size_t k = 0; k + 1 < cuts.size(); ++k) total += quad::integrate(f, cuts[k], cuts[k + 1], opt.rel_tol);
    return total;
}

class BornPhase {
public:
    BornPhase(LatticePotential V, int dim, PhaseOptions opt = {}) : V_(std::move(V)), dim_(dim), opt_(opt) {
        if (V_.dim() != dim) throw Error(ErrorKind::InvalidArgument, "potential and surface dimensions differ");
    }

    const LatticePotential& potential() const { return V_; }
    const PhaseOptions& options() const { return opt_; }

    Vec base_point(double x, const SurfacePoint& sp) const {
        if (dim_ == 1 && x != 0.0) throw Error(ErrorKind::InvalidArgument, "d=1 fiber is {0}");
        return x * fiber_basis(sp, dim_);
    }

    double psi_at(const Vec& X, const SurfacePoint& sp) const {
        constexpr double inf = std::numeric_limits<double>::infinity();
        return ray_integral(V_, X, sp.velocity, -inf, inf, opt_);
    }
    // psi_+ = int_0^inf, psi_- = int_0^{-inf} = -int_{-inf}^0
    double psi_plus_at(const Vec& X, const SurfacePoint& sp) const {
        return ray_integral(V_, X, sp.velocity, 0.0, std::numeric_limits<double>::infinity(), opt_);
    }
    double psi_minus_at(const Vec& X, const SurfacePoint& sp) const {
        return -ray_integral(V_, X, sp.velocity, -std::numeric_limits<double>::infinity(), 0.0, opt_);
    }

    double psi(double x, const SurfacePoint& sp) const { return psi_at(base_point(x, sp), sp); }
    double psi_plus(double x, const SurfacePoint& sp) const { return psi_plus_at(base_point(x, sp), sp); }
    double psi_minus(double x, const SurfacePoint& sp) const { return psi_minus_at(base_point(x, sp), sp); }

private:
    LatticePotential V_;
    int dim_;
    PhaseOptions opt_;
};

inline double xray_phase(const LatticePotential& V, const EnergySurface& s, double x, std::size_t j,
                         PhaseOptions opt = {}) {
    return BornPhase(V, s.dim, opt).psi(x, s.point(j));
}

inline double half_phase(const LatticePotential& V, const EnergySurface& s, double x, std::size_t j, int sign,
                         PhaseOptions opt = {}) {
    BornPhase b(V, s.dim, opt);
    return sign > 0 ? b.psi_plus(x, s.point(j)) : b.psi_minus(x, s.point(j));
}

struct TransportSample {
    double x;
    std::size_t j;
    double s;
};

inline double transport_residual(const LatticePotential& V, const EnergySurface& surf,
                                 const std::vector<TransportSample>& samples, PhaseOptions opt = {}) {
    BornPhase b(V, surf.dim, opt);
    const double h = 1e-4;
    double worst = 0.0;
    for (auto& smp : samples) {
        SurfacePoint sp = surf.point(smp.j);
        Vec base = b.base_point(smp.x, sp);
        Vec at = base + smp.s * sp.velocity;
        double up = b.psi_plus_at(at + h * sp.velocity, sp);
        double dn = b.psi_plus_at(at - h * sp.velocity, sp);
        double r = std::abs((up - dn) / (2 * h) + V.smooth(at));
        worst = std::max(worst, r);
    }
    return worst;
}

}  // namespace latscat

#endif
