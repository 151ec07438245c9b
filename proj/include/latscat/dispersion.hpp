#ifndef LATSCAT_DISPERSION_HPP
#define LATSCAT_DISPERSION_HPP

#include <limits>
#include <map>
#include <string>

#include "common.hpp"

namespace latscat {

// p0(xi) = sum_k c_k exp(i k.xi), real because c_{-k} = c_k
class TrigPolynomial {
public:
    using Coeffs = std::map<Site, double>;

    TrigPolynomial() = default;
    TrigPolynomial(int dim, Coeffs coeffs, std::string name = "table") : dim_(dim), name_(std::move(name)) {
        if (dim != 1 && dim != 2) throw Error(ErrorKind::InvalidArgument, "dispersion dimension must be 1 or 2");
        for (auto& [k, c] : coeffs) {
            if (dim == 1 && k[1] != 0) throw Error(ErrorKind::InvalidArgument, "d=1 frequency with nonzero second entry");
            if (c != 0.0) coeffs_[k] = c;
        }
        for (auto& [k, c] : coeffs_) {
            auto it = coeffs_.find(Site{-k[0], -k[1]});
            double partner = it == coeffs_.end() ? 0.0 : it->second;
            if (std::abs(partner - c) > 1e-14 * std::max(1.0, std::abs(c)))
                throw Error(ErrorKind::InvalidArgument,
                            "coefficients are not symmetric (c_{-k} != c_k) at k=(" + std::to_string(k[0]) + "," +
                                std::to_string(k[1]) + ")");
        }
    }

    int dim() const { return dim_; }
    const Coeffs& coeffs() const { return coeffs_; }
    const std::string& name() const { return name_; }

    double coeff(const Site& k) const {
        auto it = coeffs_.find(k);
        return it == coeffs_.end() ? 0.0 : it->second;
    }

    double eval(const Vec& xi) const {
        double re = 0.0;
        for (auto& [k, c] : coeffs_) re += c * std::cos(k[0] * xi[0] + k[1] * xi[1]);
        return re;
    }

    Vec velocity(const Vec& xi) const {
        Vec v{0.0, 0.0};
        for (auto& [k, c] : coeffs_) {
            double s = c * std::sin(k[0] * xi[0] + k[1] * xi[1]);
            v[0] -= k[0] * s;
            v[1] -= k[1] * s;
        }
        return v;
    }

    std::array<double, 4> hessian(const Vec& xi) const {
        std::array<double, 4> h{0, 0, 0, 0};
        for (auto& [k, c] : coeffs_) {
            double cs = c * std::cos(k[0] * xi[0] + k[1] * xi[1]);
            h[0] -= k[0] * k[0] * cs;
            h[1] -= k[0] * k[1] * cs;
            h[3] -= k[1] * k[1] * cs;
        }
        h[2] = h[1];
        return h;
    }

    int stencil_radius() const {
        int r = 0;
        for (auto& [k, c] : coeffs_) r = std::max({r, std::abs(k[0]), std::abs(k[1])});
        return r;
    }

    bool nearest_neighbor_1d() const {
        return dim_ == 1 && stencil_radius() == 1;
    }

private:
    int dim_ = 1;
    std::string name_ = "table";
    Coeffs coeffs_;
};

// sum_j (1 - cos xi_j)
inline TrigPolynomial square_lattice(int d) {
    TrigPolynomial::Coeffs c;
    c[{0, 0}] = d;
    c[{1, 0}] = -0.5;
    c[{-1, 0}] = -0.5;
    if (d == 2) {
        c[{0, 1}] = -0.5;
        c[{0, -1}] = -0.5;
    }
    return TrigPolynomial(d, c, "square");
}

// 3 - cos xi_1 - cos xi_2 - cos(xi_1 + xi_2)
inline TrigPolynomial triangular_lattice() {
    TrigPolynomial::Coeffs c;
    c[{0, 0}] = 3.0;
    for (Site k : {Site{1, 0}, Site{0, 1}, Site{1, 1}}) {
        c[k] = -0.5;
        c[{-k[0], -k[1]}] = -0.5;
    }
    return TrigPolynomial(2, c, "triangular");
}

struct ThresholdSet {
    std::vector<double> values;
    std::vector<Vec> critical_points;

    double distance(double lambda) const {
        double d = std::numeric_limits<double>::infinity();
        for (double t : values) d = std::min(d, std::abs(lambda - t));
        return d;
    }
};

namespace detail {

inline bool newton_critical(const TrigPolynomial& p, Vec& xi) {
    const int dim = p.dim();
    for (int it = 0; it < 60; ++it) {
        Vec v = p.velocity(xi);
        if (norm(v) < 1e-14) return true;
        auto h = p.hessian(xi);
        Vec step{0, 0};
        if (dim == 1) {
            if (std::abs(h[0]) < 1e-300) return false;
            step[0] = v[0] / h[0];
        } else {
            double det = h[0] * h[3] - h[1] * h[2];
            if (std::abs(det) < 1e-300) return false;
            step[0] = (h[3] * v[0] - h[1] * v[1]) / det;
            step[1] = (-h[2] * v[0] + h[0] * v[1]) / det;
        }
        if (norm(step) > 1.0) step = (1.0 / norm(step)) * step;
        xi = canonicalize(xi - step, dim);
    }
    return norm(p.velocity(xi)) < 1e-12;
}

}  // namespace detail

inline ThresholdSet thresholds(const TrigPolynomial& p, int grid_n) {
    if (grid_n < 16) throw Error(ErrorKind::InvalidArgument, "thresholds needs grid_n >= 16");
    const int dim = p.dim();
    const double h = 2.0 * pi / grid_n;

    // seeding floor: |v| small compared to the largest Hessian entry times a cell size
    double hmax = 0.0;
    for (auto& [k, c] : p.coeffs()) hmax += std::abs(c) * (k[0] * k[0] + k[1] * k[1]);
    const double floor = hmax * h;

    ThresholdSet out;
    std::vector<Vec> failed;
    const int ny = dim == 2 ? grid_n : 1;
    for (int a = 0; a < grid_n; ++a) {
        for (int b = 0; b < ny; ++b) {
            Vec seed{-pi + a * h, dim == 2 ? -pi + b * h : 0.0};
            Vec xi = seed;
            if (detail::newton_critical(p, xi)) {
                bool dup = false;
                for (auto& c : out.critical_points)
                    if (norm(torus_diff(c, xi, dim)) < 1e-6) dup = true;
                if (!dup) out.critical_points.push_back(xi);
            } else if (norm(p.velocity(seed)) < floor) {
                failed.push_back(seed);
            }
        }
    }
    // a near-critical cell whose seed diverged is fine if another seed found its point
    for (auto& seed : failed) {
        bool covered = false;
        for (auto& c : out.critical_points)
            if (norm(torus_diff(c, seed, dim)) < 1.5 * h * std::sqrt(double(dim))) covered = true;
        if (!covered)
            throw Error(ErrorKind::NonConvergence,
                        "Newton failed near (" + std::to_string(seed[0]) + ", " + std::to_string(seed[1]) + ")");
    }
    std::sort(out.critical_points.begin(), out.critical_points.end());

    std::vector<double> vals;
    for (auto& c : out.critical_points) vals.push_back(p.eval(c));
    std::sort(vals.begin(), vals.end());
    for (double v : vals)
        if (out.values.empty() || std::abs(v - out.values.back()) > 1e-9) out.values.push_back(v);
    if (out.values.empty()) throw Error(ErrorKind::NonConvergence, "no critical point found");
    return out;
}

}  // namespace latscat

#endif
