#ifndef LATSCAT_QUANTIZE_HPP
#define LATSCAT_QUANTIZE_HPP

#include <Eigen/Dense>
#include <bit>
#include <cstdint>
#include <ostream>

#include "potential.hpp"

namespace latscat {

enum class Quantization { Weyl, Right };

// Operator on L^2(Sigma, m_lambda) in the orthonormal discretization:
// matrix = W^{1/2} K W^{1/2} where K is the kernel against the quadrature weights.
struct SurfaceKernel {
    std::shared_ptr<const EnergySurface> surface;
    Eigen::MatrixXcd matrix;
    std::vector<double> weights;
    std::string convention;

    std::size_t size() const { return static_cast<std::size_t>(matrix.rows()); }

    Eigen::MatrixXcd kernel() const {
        Eigen::VectorXd s(weights.size());
        for (std::size_t j = 0; j < weights.size(); ++j) s[j] = 1.0 / std::sqrt(weights[j]);
        return s.asDiagonal() * matrix * s.asDiagonal();
    }

    static SurfaceKernel identity(std::shared_ptr<const EnergySurface> s, std::string convention = "identity") {
        SurfaceKernel k;
        k.weights = s->weights();
        k.matrix = Eigen::MatrixXcd::Identity(k.weights.size(), k.weights.size());
        k.surface = std::move(s);
        k.convention = std::move(convention);
        return k;
    }
};

// symbol a(x, point) with x the fiber coordinate along e_perp
using SurfaceSymbol = std::function<Complex(double, const SurfacePoint&)>;

struct QuantizeOptions {
    double x_max = 0.0;
    int n_x = 64;
    Complex a_inf{0.0, 0.0};
    Quantization convention = Quantization::Weyl;
    bool fold_tail = true;  // add the aliased tail beyond x_max (Euler-Maclaurin); off = plain truncation
    double tail_tol = 1e-6;
    int jobs = 1;
};

inline std::string convention_tag(const QuantizeOptions& o) {
    return o.convention == Quantization::Weyl ? "weyl-midpoint" : "right(a(-D,xi))";
}

namespace detail {

// sum over the aliases q = r + kN beyond |q| > Q of b(zeta_q), by the midpoint
// Euler-Maclaurin rule (1/(N dz)) int_{z0(r)}^inf b; returns per-residue tails
inline std::vector<Complex> folded_tail(const std::function<Complex(double)>& b, int N, int Q, double dz, int n_x,
                                        double tol, const std::string& where) {
    std::vector<Complex> tail(N, Complex{});
    // exact zero beyond the cut (finite-support symbols): nothing to add
    bool all_zero = true;
    for (int k = 0; k <= 32 && all_zero; ++k) {
        double z = dz * Q * (1.0 + 3.0 * k / 32.0);
        if (b(z) != Complex{} || b(-z) != Complex{}) all_zero = false;
    }
    if (all_zero) return tail;

    // decay estimate from the far samples
    double z1 = dz * (Q + N), z2 = 2 * z1, z3 = 4 * z1;
    double a1 = std::abs(b(z1)) + std::abs(b(-z1));
    double a2 = std::abs(b(z2)) + std::abs(b(-z2));
    double a3 = std::abs(b(z3)) + std::abs(b(-z3));
    if (a2 > 0 && a3 > 0) {
        double p = std::log2(a2 / a3);
        if (p <= 1.05 && a1 > 1e-300)
            throw Error(ErrorKind::TailTooFat,
                        where + ": symbol decays like |x|^-" + std::to_string(p) + ", not integrable");
    }

    auto rule = quad::gauss_legendre(n_x);
    auto rule_half = quad::gauss_legendre(std::max(2, n_x / 2));
    auto rule8 = quad::gauss_legendre(8);
    // int_Z^inf g(z) dz with z = Z / u^2, u in (0, 1]
    auto semi = [&](const std::function<Complex(double)>& g, double Z, const quad::Rule& r) {
        Complex s{};
        for (std::size_t k = 0; k < r.nodes.size(); ++k) {
            double u = 0.5 * (r.nodes[k] + 1.0);
            s += 0.5 * r.weights[k] * g(Z / (u * u)) * (2.0 * Z / (u * u * u));
        }
        return s;
    };
    auto piece = [&](const std::function<Complex(double)>& g, double a, double c) {
        Complex s{};
        for (std::size_t k = 0; k < rule8.nodes.size(); ++k)
            s += 0.5 * (c - a) * rule8.weights[k] * g(0.5 * (a + c) + 0.5 * (c - a) * rule8.nodes[k]);
        return s;
    };
    double err = 0.0;
    for (int side : {+1, -1}) {
        auto g = [&](double z) { return b(side * z); };
        // lower limits z0(r) = dz (q_first(r) - N/2), q_first the first alias beyond Q on this side
        std::vector<std::pair<double, int>> lims;
        for (int r = 0; r < N; ++r) {
            int rs = side > 0 ? r : (N - r) % N;  // residue of -q
            long first = Q + 1 + ((rs - (Q + 1)) % N + N) % N;
            lims.push_back({dz * (first - 0.5 * N), r});
        }
        std::sort(lims.begin(), lims.end());
        double Z = lims.back().first;
        Complex inf_part = semi(g, Z, rule);
        err += std::abs(inf_part - semi(g, Z, rule_half));
        Complex acc = inf_part;
        tail[lims.back().second] += acc;
        for (int k = N - 2; k >= 0; --k) {
            acc += piece(g, lims[k].first, lims[k + 1].first);
            tail[lims[k].second] += acc;
        }
        // next Euler-Maclaurin term, spacing N dz, derivative by differences
        double h = N * dz;
        double zl = lims.front().first;
        Complex d1 = (g(zl + 1e-3 * h) - g(zl)) / (1e-3 * h);
        err += h * std::abs(d1) / 24.0;
    }
    for (auto& t : tail) t /= (N * dz);
    if (err / (N * dz) > tol)
        throw Error(ErrorKind::TailTooFat, where + ": tail beyond x_max not certified (estimate " +
                                               std::to_string(err / (N * dz)) + "), increase x_max");
    return tail;
}

}  // namespace detail

inline SurfaceKernel quantize_symbol(std::shared_ptr<const EnergySurface> surface, const SurfaceSymbol& a,
                                     const QuantizeOptions& opt) {
    const std::size_t Ntot = surface->size();
    SurfaceKernel K;
    K.weights = surface->weights();
    K.matrix = Eigen::MatrixXcd::Zero(Ntot, Ntot);
    K.convention = convention_tag(opt);

    if (surface->dim == 1) {
        auto& c = surface->components[0];
        for (std::size_t j = 0; j < c.size(); ++j) K.matrix(j, j) = a(0.0, c.node(j));
        K.surface = std::move(surface);
        return K;
    }
    if (!(opt.x_max > 0)) throw Error(ErrorKind::InvalidArgument, "x_max must be positive");

    std::size_t off = 0;
    for (std::size_t ci = 0; ci < surface->components.size(); ++ci) {
        const auto& comp = surface->components[ci];
        const int N = static_cast<int>(comp.size());
        const double dz = 2 * pi / comp.length;
        const int Q = static_cast<int>(std::ceil(opt.x_max / dz));
        const bool weyl = opt.convention == Quantization::Weyl;
        const int M = weyl ? 2 * N : N;

        // G[m](d) = (1/N) sum_r exp(-2 pi i d r / N) F[m](r), d in [-N/2, N/2)
        std::vector<std::vector<Complex>> G(M, std::vector<Complex>(N));
        parallel_for(M, opt.jobs, [&](std::size_t mi) {
            const SurfacePoint& hp = comp.half_nodes[weyl ? mi : 2 * mi];
            // the fiber coordinate pairs with the arc-length dual as x = -zeta
            auto b = [&](double zeta) { return a(-zeta, hp) - opt.a_inf; };
            std::vector<Complex> F(N, Complex{});
            for (int q = -Q; q <= Q; ++q) F[((q % N) + N) % N] += b(dz * q);
            if (opt.fold_tail) {
                auto t = detail::folded_tail(b, N, Q, dz, opt.n_x, opt.tail_tol,
                                             "component " + std::to_string(ci));
                for (int r = 0; r < N; ++r) F[r] += t[r];
            }
            for (int d = -N / 2; d < N - N / 2; ++d) {
                Complex s{};
                for (int r = 0; r < N; ++r) s += std::polar(1.0, -2 * pi * double(d) * r / N) * F[r];
                G[mi][d + N / 2] = s / double(N);
            }
        });

        for (int i = 0; i < N; ++i) {
            for (int j = 0; j < N; ++j) {
                int d = ((i - j + N / 2) % N + N) % N - N / 2;
                Complex v;
                if (weyl) {
                    v = G[((2 * j + d) % (2 * N) + 2 * N) % (2 * N)][d + N / 2];
                    if (N % 2 == 0 && d == -N / 2)
                        v = 0.5 * (v + G[((2 * j + d + N) % (2 * N) + 2 * N) % (2 * N)][d + N / 2]);
                } else {
                    v = G[j][d + N / 2];
                }
                if (i == j) v += opt.a_inf;
                K.matrix(off + i, off + j) = v;
            }
        }
        off += N;
    }
    K.surface = std::move(surface);
    return K;
}

// (1/2 pi) int a(x e_perp + t n, xi) dt for a multiplication symbol a, with n = v(xi)
inline double restriction_symbol(const LatticePotential& a, const EnergySurface& s, double x, std::size_t j,
                                 PhaseOptions opt = {}) {
    SurfacePoint sp = s.point(j);
    Vec X = x * fiber_basis(sp, s.dim);
    constexpr double inf = std::numeric_limits<double>::infinity();
    return ray_integral(a, X, sp.velocity, -inf, inf, opt) / (2 * pi);
}

struct RestrictionReport {
    double rel_err = 0.0;
    double norm_symbol = 0.0;  // route (i)
    double norm_grid = 0.0;    // route (ii)
    double grid_change = 0.0;  // relative change of route (ii) between grid_n/2 and grid_n
};

inline double op_norm(const Eigen::MatrixXcd& A) {
    if (A.size() == 0) return 0.0;
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(A);
    return svd.singularValues()(0);
}

// route (ii): w_i^{1/2} (2 pi)^{-d} sum_{n in box} a(n) e^{-i n.(xi_i - xi_j)} w_j^{1/2}
inline Eigen::MatrixXcd grid_restriction(const LatticePotential& a, const EnergySurface& s, int grid_n) {
    const int dim = s.dim;
    const std::size_t N = s.size();
    std::vector<Vec> xi(N);
    std::vector<double> w = s.weights();
    for (std::size_t j = 0; j < N; ++j) xi[j] = s.point(j).xi;
    const int lo = -grid_n / 2, hi = grid_n - grid_n / 2;  // [lo, hi)
    const int ny = dim == 2 ? grid_n : 1;
    std::vector<double> vals(static_cast<std::size_t>(grid_n) * ny);
    std::vector<int> rows;
    for (int a1 = lo; a1 < hi; ++a1) {
        bool any = false;
        for (int b = 0; b < ny; ++b) {
            double v = a(Site{a1, dim == 2 ? lo + b : 0});
            vals[static_cast<std::size_t>(a1 - lo) * ny + b] = v;
            any = any || v != 0.0;
        }
        if (any) rows.push_back(a1);
    }
    const double norm_c = std::pow(2 * pi, -dim);
    Eigen::MatrixXcd B(N, N);
    std::vector<Complex> e2(ny);
    for (std::size_t i = 0; i < N; ++i) {
        for (std::size_t j = i; j < N; ++j) {
            Vec d = xi[i] - xi[j];
            if (dim == 2) {
                Complex step = std::polar(1.0, -d[1]);
                Complex cur = std::polar(1.0, -d[1] * lo);
                for (int b = 0; b < ny; ++b) {
                    e2[b] = cur;
                    cur *= step;
                }
            } else {
                e2[0] = 1.0;
            }
            Complex sum{};
            for (int a1 : rows) {
                const double* row = &vals[static_cast<std::size_t>(a1 - lo) * ny];
                Complex inner{};
                for (int b = 0; b < ny; ++b) inner += row[b] * e2[b];
                sum += inner * std::polar(1.0, -d[0] * a1);
            }
            B(i, j) = std::sqrt(w[i] * w[j]) * norm_c * sum;
            if (j != i) B(j, i) = std::conj(B(i, j));
        }
    }
    return B;
}

inline RestrictionReport restriction_check(const LatticePotential& a, std::shared_ptr<const EnergySurface> s,
                                           int torus_grid_n, const QuantizeOptions& qopt, PhaseOptions popt = {}) {
    RestrictionReport rep;
    Eigen::MatrixXcd B2 = grid_restriction(a, *s, torus_grid_n);
    Eigen::MatrixXcd B2h = grid_restriction(a, *s, torus_grid_n / 2);
    rep.norm_grid = op_norm(B2);
    if (rep.norm_grid > 0) rep.grid_change = op_norm(B2 - B2h) / rep.norm_grid;
    if (rep.grid_change > 1e-3)
        throw Error(ErrorKind::GridUnderresolved,
                    "grid restriction changes by " + std::to_string(rep.grid_change) + " between grids");
    const int dim = s->dim;
    BornPhase phase(a, dim, popt);
    auto sym = [&](double x, const SurfacePoint& sp) -> Complex { return phase.psi(x, sp) / (2 * pi); };
    SurfaceKernel B1 = quantize_symbol(s, sym, qopt);
    rep.norm_symbol = op_norm(B1.matrix);
    double diff = op_norm(B1.matrix - B2);
    rep.rel_err = rep.norm_grid > 0 ? diff / rep.norm_grid : diff;
    return rep;
}

// --- export ---

inline void write_kernel_csv(std::ostream& os, const SurfaceKernel& K) {
    os << std::setprecision(17) << "i,j,re,im\n";
    for (Eigen::Index i = 0; i < K.matrix.rows(); ++i)
        for (Eigen::Index j = 0; j < K.matrix.cols(); ++j)
            os << i << ',' << j << ',' << K.matrix(i, j).real() << ',' << K.matrix(i, j).imag() << '\n';
}

namespace detail {
inline void put_u32(std::ostream& os, std::uint32_t v) {
    char b[4];
    for (int k = 0; k < 4; ++k) b[k] = static_cast<char>((v >> (8 * k)) & 0xFF);
    os.write(b, 4);
}
inline void put_f64(std::ostream& os, double d) {
    std::uint64_t v = std::bit_cast<std::uint64_t>(d);
    char b[8];
    for (int k = 0; k < 8; ++k) b[k] = static_cast<char>((v >> (8 * k)) & 0xFF);
    os.write(b, 8);
}
inline std::uint32_t get_u32(const unsigned char* p) {
    return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) | (std::uint32_t(p[3]) << 24);
}
inline double get_f64(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int k = 7; k >= 0; --k) v = (v << 8) | p[k];
    return std::bit_cast<double>(v);
}
}  // namespace detail

// "SKRN", u32 N, u32 components, u32 reserved (0), then row-major (re, im) f64 pairs
inline void write_kernel_binary(std::ostream& os, const SurfaceKernel& K) {
    os.write("SKRN", 4);
    detail::put_u32(os, static_cast<std::uint32_t>(K.matrix.rows()));
    detail::put_u32(os, static_cast<std::uint32_t>(K.surface ? K.surface->components.size() : 1));
    detail::put_u32(os, 0);
    for (Eigen::Index i = 0; i < K.matrix.rows(); ++i)
        for (Eigen::Index j = 0; j < K.matrix.cols(); ++j) {
            detail::put_f64(os, K.matrix(i, j).real());
            detail::put_f64(os, K.matrix(i, j).imag());
        }
}

inline Eigen::MatrixXcd read_kernel_binary(const std::string& bytes, std::uint32_t* components = nullptr) {
    if (bytes.size() < 16 || bytes.compare(0, 4, "SKRN") != 0)
        throw Error(ErrorKind::InvalidArgument, "not a kernel file");
    auto p = reinterpret_cast<const unsigned char*>(bytes.data());
    std::uint32_t N = detail::get_u32(p + 4);
    if (components) *components = detail::get_u32(p + 8);
    if (bytes.size() != 16 + 16ull * N * N) throw Error(ErrorKind::InvalidArgument, "kernel file truncated");
    Eigen::MatrixXcd M(N, N);
    const unsigned char* q = p + 16;
    for (std::uint32_t i = 0; i < N; ++i)
        for (std::uint32_t j = 0; j < N; ++j, q += 16) M(i, j) = Complex(detail::get_f64(q), detail::get_f64(q + 8));
    return M;
}

}  // namespace latscat

#endif
