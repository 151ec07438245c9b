#ifndef LATSCAT_QUADRATURE_HPP
#define LATSCAT_QUADRATURE_HPP

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/legendre.hpp>

#include "common.hpp"

namespace latscat::quad {

// adaptive Gauss-Kronrod (15/31) on a finite interval, relative tolerance
template <class F>
double integrate(F&& f, double a, double b, double rel_tol = 1e-12, double* err = nullptr) {
    if (!(b > a)) return 0.0;
    double e = 0.0;
    double v = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, b, 15, rel_tol, &e);
    if (err) *err = e;
    return v;
}

struct Rule {
    std::vector<double> nodes, weights;
};

// Gauss-Legendre on [-1, 1]
inline Rule gauss_legendre(int n) {
    if (n < 1) throw Error(ErrorKind::InvalidArgument, "Gauss-Legendre order must be positive");
    Rule r;
    auto zeros = boost::math::legendre_p_zeros<double>(n);
    for (double z : zeros) {
        double dp = boost::math::legendre_p_prime(n, z);
        double w = 2.0 / ((1.0 - z * z) * dp * dp);
        r.nodes.push_back(z);
        r.weights.push_back(w);
        if (z != 0.0) {
            r.nodes.push_back(-z);
            r.weights.push_back(w);
        }
    }
    return r;
}

// Polynomial extrapolation to x = 0 through (xs[k], ys[k]) by Neville's scheme.
// Works for any value type with +, - and scalar *.
template <class T>
T neville_at_zero(const std::vector<double>& xs, std::vector<T> ys) {
    const std::size_t n = xs.size();
    if (n == 0 || ys.size() != n) throw Error(ErrorKind::InvalidArgument, "extrapolation needs matching samples");
    for (std::size_t m = 1; m < n; ++m) {
        for (std::size_t i = 0; i + m < n; ++i) {
            double x0 = xs[i], x1 = xs[i + m];
            // P_{i..i+m}(0) = (x1 * P_{i..i+m-1} - x0 * P_{i+1..i+m}) / (x1 - x0)
            ys[i] = (x1 * ys[i] - x0 * ys[i + 1]) * (1.0 / (x1 - x0));
        }
    }
    return ys[0];
}

}  // namespace latscat::quad

#endif
