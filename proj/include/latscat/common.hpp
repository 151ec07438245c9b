#ifndef LATSCAT_COMMON_HPP
#define LATSCAT_COMMON_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace latscat {

using Complex = std::complex<double>;
inline constexpr double pi = std::numbers::pi;
inline constexpr Complex I_unit{0.0, 1.0};

// torus points, covectors and lattice sites all live in at most two dimensions;
// in d=1 the second slot stays zero
using Vec = std::array<double, 2>;
using Site = std::array<int, 2>;

inline double dot(const Vec& a, const Vec& b) { return a[0] * b[0] + a[1] * b[1]; }
inline double norm(const Vec& a) { return std::hypot(a[0], a[1]); }
inline Vec operator+(const Vec& a, const Vec& b) { return {a[0] + b[0], a[1] + b[1]}; }
inline Vec operator-(const Vec& a, const Vec& b) { return {a[0] - b[0], a[1] - b[1]}; }
inline Vec operator*(double s, const Vec& a) { return {s * a[0], s * a[1]}; }

inline double wrap_angle(double x) {
    double y = std::fmod(x + pi, 2.0 * pi);
    if (y < 0) y += 2.0 * pi;
    y -= pi;
    if (y >= pi) y -= 2.0 * pi;
    return y;
}

inline Vec canonicalize(const Vec& xi, int dim) {
    Vec out{wrap_angle(xi[0]), 0.0};
    if (dim == 2) out[1] = wrap_angle(xi[1]);
    return out;
}

// smallest representative of a - b on the torus
inline Vec torus_diff(const Vec& a, const Vec& b, int dim) {
    Vec d{wrap_angle(a[0] - b[0]), 0.0};
    if (dim == 2) d[1] = wrap_angle(a[1] - b[1]);
    return d;
}

enum class ErrorKind {
    NonConvergence,
    ThresholdTooClose,
    OpenCurveOverflow,
    GridUnderresolved,
    DecayTooSlow,
    TailBoundUnachievable,
    TailTooFat,
    StencilTooWide,
    SolverSingular,
    EpsBelowFloor,
    NoConvergenceInL,
    SupportTooWide,
    SurfaceMismatch,
    InsufficientModes,
    Config,
    InvalidArgument,
};

inline const char* to_string(ErrorKind k) {
    switch (k) {
        case ErrorKind::NonConvergence: return "NonConvergence";
        case ErrorKind::ThresholdTooClose: return "ThresholdTooClose";
        case ErrorKind::OpenCurveOverflow: return "OpenCurveOverflow";
        case ErrorKind::GridUnderresolved: return "GridUnderresolved";
        case ErrorKind::DecayTooSlow: return "DecayTooSlow";
        case ErrorKind::TailBoundUnachievable: return "TailBoundUnachievable";
        case ErrorKind::TailTooFat: return "TailTooFat";
        case ErrorKind::StencilTooWide: return "StencilTooWide";
        case ErrorKind::SolverSingular: return "SolverSingular";
        case ErrorKind::EpsBelowFloor: return "EpsBelowFloor";
        case ErrorKind::NoConvergenceInL: return "NoConvergenceInL";
        case ErrorKind::SupportTooWide: return "SupportTooWide";
        case ErrorKind::SurfaceMismatch: return "SurfaceMismatch";
        case ErrorKind::InsufficientModes: return "InsufficientModes";
        case ErrorKind::Config: return "ConfigError";
        case ErrorKind::InvalidArgument: return "InvalidArgument";
    }
    return "Unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind), detail_(what) {}
    ErrorKind kind() const noexcept { return kind_; }
    const std::string& detail() const noexcept { return detail_; }

private:
    ErrorKind kind_;
    std::string detail_;
};

// Static partition of [0, n) into contiguous chunks; every index is processed by
// exactly one worker so results written per index do not depend on jobs.
inline void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
    if (jobs <= 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(jobs), n);
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                std::size_t lo = n * w / workers, hi = n * (w + 1) / workers;
                for (std::size_t i = lo; i < hi; ++i) fn(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace latscat

#endif
