#ifndef LATSCAT_SOLVER_HPP
#define LATSCAT_SOLVER_HPP

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <optional>

#include "quantize.hpp"

namespace latscat {

enum class Boundary { Hard, Absorbing };

struct BoundarySpec {
    Boundary kind = Boundary::Hard;
    int width = 0;          // absorbing layer width in sites
    double strength = 0.5;  // peak imaginary potential of the quartic ramp
};

class LatticeHamiltonian {
public:
    int dim = 1;
    int L = 0;
    BoundarySpec boundary;
    Eigen::SparseMatrix<Complex> matrix;
    std::vector<double> potential;  // V(n) per site, same ordering as sites
    std::vector<Site> sites;

    std::size_t side() const { return static_cast<std::size_t>(2 * L + 1); }
    std::size_t size() const { return sites.size(); }
    std::optional<std::size_t> index(const Site& n) const {
        if (std::abs(n[0]) > L || std::abs(n[1]) > L || (dim == 1 && n[1] != 0)) return std::nullopt;
        if (dim == 1) return static_cast<std::size_t>(n[0] + L);
        return static_cast<std::size_t>(n[0] + L) * side() + static_cast<std::size_t>(n[1] + L);
    }
    bool hermitian() const { return boundary.kind == Boundary::Hard; }
    bool potential_is_zero() const {
        return std::all_of(potential.begin(), potential.end(), [](double v) { return v == 0.0; });
    }
};

// (H0 phi)(n) = sum_k c_k phi(n + k), restricted to the box [-L, L]^d
inline LatticeHamiltonian build_hamiltonian(const TrigPolynomial& p, const LatticePotential& V, int L,
                                            BoundarySpec boundary = {}) {
    if (L < 16) throw Error(ErrorKind::InvalidArgument, "box radius must be at least 16");
    if (p.stencil_radius() > L / 4)
        throw Error(ErrorKind::StencilTooWide, "stencil radius " + std::to_string(p.stencil_radius()) +
                                                   " too wide for L=" + std::to_string(L));
    if (V.dim() != p.dim()) throw Error(ErrorKind::InvalidArgument, "potential and dispersion dimensions differ");
    LatticeHamiltonian H;
    H.dim = p.dim();
    H.L = L;
    H.boundary = boundary;
    const int ny = H.dim == 2 ? 2 * L + 1 : 1;
    for (int a = -L; a <= L; ++a)
        for (int b = 0; b < ny; ++b) H.sites.push_back({a, H.dim == 2 ? b - L : 0});
    const std::size_t n = H.sites.size();
    H.potential.resize(n);
    std::vector<Eigen::Triplet<Complex>> trip;
    trip.reserve(n * (p.coeffs().size() + 1));
    for (std::size_t i = 0; i < n; ++i) {
        const Site& s = H.sites[i];
        H.potential[i] = V(s);
        for (auto& [k, c] : p.coeffs()) {
            auto j = H.index({s[0] + k[0], s[1] + k[1]});
            if (!j) continue;
            double val = c;
            if (*j == i) val += H.potential[i];
            trip.emplace_back(i, *j, Complex(val, 0.0));
        }
        if (p.coeff({0, 0}) == 0.0 && H.potential[i] != 0.0) trip.emplace_back(i, i, Complex(H.potential[i], 0.0));
        if (boundary.kind == Boundary::Absorbing && boundary.width > 0) {
            int depth = 0;
            for (int k = 0; k < H.dim; ++k) depth = std::max(depth, std::abs(s[k]) - (L - boundary.width));
            if (depth > 0) {
                double r = double(depth) / boundary.width;
                trip.emplace_back(i, i, Complex(0.0, -boundary.strength * r * r * r * r));
            }
        }
    }
    H.matrix.resize(n, n);
    H.matrix.setFromTriplets(trip.begin(), trip.end());
    H.matrix.makeCompressed();
    return H;
}

inline double eps_floor(const LatticeHamiltonian& H, const EnergySurface& s) {
    return 4.0 * s.max_speed() / (2 * H.L + 1);
}

// plane waves (2 pi)^{-d/2} e^{i n.xi_j} on the box, one column per surface point
inline Eigen::MatrixXcd plane_waves(const LatticeHamiltonian& H, const EnergySurface& s) {
    const std::size_t N = s.size();
    Eigen::MatrixXcd Phi(H.size(), N);
    const double c = std::pow(2 * pi, -0.5 * H.dim);
    for (std::size_t j = 0; j < N; ++j) {
        Vec xi = s.point(j).xi;
        for (std::size_t i = 0; i < H.size(); ++i)
            Phi(i, j) = std::polar(c, H.sites[i][0] * xi[0] + H.sites[i][1] * xi[1]);
    }
    return Phi;
}

// t_ij = <phi_i, V phi_j> + <phi_i, V u_j>,  (lambda + i eps - H) u_j = V phi_j
inline Eigen::MatrixXcd t_onshell(const LatticeHamiltonian& H, const EnergySurface& s, double eps, int jobs = 1) {
    const std::size_t N = s.size();
    if (H.potential_is_zero()) return Eigen::MatrixXcd::Zero(N, N);
    if (H.hermitian() && eps < eps_floor(H, s))
        throw Error(ErrorKind::EpsBelowFloor, "eps=" + std::to_string(eps) + " below level-spacing floor " +
                                                  std::to_string(eps_floor(H, s)) + " at L=" + std::to_string(H.L));
    Eigen::SparseMatrix<Complex> A(H.size(), H.size());
    A.setIdentity();
    A *= Complex(s.lambda, eps);
    A -= H.matrix;
    A.makeCompressed();
    Eigen::SparseLU<Eigen::SparseMatrix<Complex>, Eigen::COLAMDOrdering<int>> lu;
    lu.compute(A);
    if (lu.info() != Eigen::Success) throw Error(ErrorKind::SolverSingular, "sparse factorization failed");

    Eigen::MatrixXcd Phi = plane_waves(H, s);
    Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(H.potential.data(), H.potential.size());
    Eigen::MatrixXcd rhs = v.asDiagonal() * Phi;
    Eigen::MatrixXcd U(H.size(), N);
    // column chunks are independent; each chunk is solved identically regardless of jobs
    const std::size_t chunk = 8;
    const std::size_t nchunks = (N + chunk - 1) / chunk;
    parallel_for(nchunks, jobs, [&](std::size_t c) {
        std::size_t lo = c * chunk, n = std::min(chunk, N - lo);
        Eigen::MatrixXcd part = lu.solve(rhs.middleCols(lo, n));
        U.middleCols(lo, n) = part;
    });
    if (!U.allFinite()) throw Error(ErrorKind::SolverSingular, "non-finite resolvent solution");
    return Phi.adjoint() * (v.asDiagonal() * (Phi + U));
}

enum class MeasureWeights { GelfandLeray, ArcLength };

struct SMatrixOptions {
    double sign = -1.0;  // S = I + sign * 2 pi i t
    MeasureWeights weights = MeasureWeights::GelfandLeray;
};

inline std::vector<double> smatrix_weights(const EnergySurface& s, MeasureWeights mw) {
    std::vector<double> w = s.weights();
    if (mw == MeasureWeights::ArcLength) {
        std::size_t j = 0;
        for (auto& c : s.components)
            for (std::size_t k = 0; k < c.size(); ++k, ++j) w[j] = s.dim == 2 ? c.arc_step() : 1.0;
    }
    return w;
}

// orthonormal form W^{1/2} S W^{-1/2} = I - 2 pi i W^{1/2} t W^{1/2}
inline SurfaceKernel assemble_smatrix(const Eigen::MatrixXcd& t, std::shared_ptr<const EnergySurface> s,
                                      SMatrixOptions opt = {}) {
    SurfaceKernel K;
    K.weights = s->weights();
    std::vector<double> w = smatrix_weights(*s, opt.weights);
    Eigen::VectorXd sw(w.size());
    for (std::size_t j = 0; j < w.size(); ++j) sw[j] = std::sqrt(w[j]);
    const std::size_t N = w.size();
    K.matrix = Eigen::MatrixXcd::Identity(N, N) + Complex(0.0, opt.sign * 2 * pi) * (sw.asDiagonal() * t * sw.asDiagonal());
    K.surface = std::move(s);
    K.convention = "smatrix";
    return K;
}

inline double unitarity_defect(const Eigen::MatrixXcd& B) {
    return op_norm(B * B.adjoint() - Eigen::MatrixXcd::Identity(B.rows(), B.cols()));
}

// max_j | -Im t_jj - pi sum_i |t_ij|^2 w_i |, relative to max |t|
inline double optical_residual(const Eigen::MatrixXcd& t, const std::vector<double>& w) {
    double tmax = t.cwiseAbs().maxCoeff();
    if (tmax == 0.0) return 0.0;
    double worst = 0.0;
    for (Eigen::Index j = 0; j < t.cols(); ++j) {
        double s = 0.0;
        for (Eigen::Index i = 0; i < t.rows(); ++i) s += std::norm(t(i, j)) * w[i];
        worst = std::max(worst, std::abs(-t(j, j).imag() - pi * s));
    }
    return worst / tmax;
}

struct ExtrapolationOptions {
    BoundarySpec boundary;
    double l_tol = 1e-3;
    int jobs = 1;
};

struct ScatteringResult {
    SurfaceKernel s_matrix;
    Eigen::MatrixXcd t_onshell;
    std::vector<double> eps_used;
    int L_used = 0;
    double extrapolation_residual = 0.0;
    double unitarity_defect = 0.0;
    double optical_residual = 0.0;
    std::vector<int> L_tried;
    std::vector<double> L_changes;  // max |t_L - t_prev| per consecutive pair
    bool L_checked = false;
    double eps_slope_ratio = 0.0;  // |t(e0)-t(e0/2)| / |t(e0/2)-t(e0/4)|
    bool possible_point_spectrum = false;
};

struct EpsSweep {
    Eigen::MatrixXcd t;
    double residual = 0.0;
    double slope_ratio = 0.0;
};

inline EpsSweep extrapolate_eps(const LatticeHamiltonian& H, const EnergySurface& s, const std::vector<double>& eps,
                                int jobs) {
    if (eps.size() < 2) throw Error(ErrorKind::InvalidArgument, "need at least two eps values");
    for (std::size_t k = 1; k < eps.size(); ++k)
        if (!(eps[k] < eps[k - 1])) throw Error(ErrorKind::InvalidArgument, "eps_list must decrease");
    std::vector<Eigen::MatrixXcd> ts;
    for (double e : eps) ts.push_back(t_onshell(H, s, e, jobs));
    EpsSweep out;
    out.t = quad::neville_at_zero(eps, ts);
    // one order lower: drop the largest eps
    std::vector<double> e2(eps.begin() + 1, eps.end());
    std::vector<Eigen::MatrixXcd> t2(ts.begin() + 1, ts.end());
    Eigen::MatrixXcd lower = e2.size() >= 2 ? quad::neville_at_zero(e2, t2) : t2[0];
    out.residual = (out.t - lower).cwiseAbs().maxCoeff();
    if (ts.size() >= 3) {
        double d1 = (ts[0] - ts[1]).cwiseAbs().maxCoeff();
        double d2 = (ts[1] - ts[2]).cwiseAbs().maxCoeff();
        out.slope_ratio = d2 > 0 ? d1 / d2 * (eps[1] - eps[2]) / (eps[0] - eps[1]) : 0.0;
    }
    return out;
}

inline ScatteringResult extrapolate(const TrigPolynomial& p, const LatticePotential& V,
                                    std::shared_ptr<const EnergySurface> s, const std::vector<double>& eps_list,
                                    const std::vector<int>& L_list, ExtrapolationOptions opt = {},
                                    SMatrixOptions smat = {}) {
    if (L_list.empty()) throw Error(ErrorKind::InvalidArgument, "L_list is empty");
    for (std::size_t k = 1; k < L_list.size(); ++k)
        if (L_list[k] <= L_list[k - 1]) throw Error(ErrorKind::InvalidArgument, "L_list must increase");
    ScatteringResult res;
    res.eps_used = eps_list;
    std::optional<EpsSweep> prev;
    bool accepted = false;
    for (int L : L_list) {
        auto H = build_hamiltonian(p, V, L, opt.boundary);
        EpsSweep cur = extrapolate_eps(H, *s, eps_list, opt.jobs);
        res.L_tried.push_back(L);
        bool done = false;
        if (H.potential_is_zero()) {
            done = true;  // nothing to converge
        } else if (prev) {
            double change = (cur.t - prev->t).cwiseAbs().maxCoeff();
            res.L_changes.push_back(change);
            res.L_checked = true;
            done = change < opt.l_tol;
        } else if (L_list.size() == 1) {
            done = true;
        }
        prev = cur;
        res.L_used = L;
        if (done) {
            accepted = true;
            break;
        }
    }
    if (!accepted)
        throw Error(ErrorKind::NoConvergenceInL, "extrapolated t still changes by " +
                                                     std::to_string(res.L_changes.back()) + " at L=" +
                                                     std::to_string(L_list.back()));
    res.t_onshell = prev->t;
    res.extrapolation_residual = prev->residual;
    res.eps_slope_ratio = prev->slope_ratio;
    // O(eps) model: consecutive differences should shrink like the eps steps (ratio ~ 1)
    res.possible_point_spectrum =
        prev->slope_ratio != 0.0 && (prev->slope_ratio > 3.0 || prev->slope_ratio < 1.0 / 3.0);
    res.s_matrix = assemble_smatrix(res.t_onshell, s, smat);
    res.unitarity_defect = unitarity_defect(res.s_matrix.matrix);
    res.optical_residual = optical_residual(res.t_onshell, s->weights());
    return res;
}

// Exact 2x2 S for nearest-neighbour d=1 dispersions, basis (+xi, -xi) with the
// right-mover first, matching assemble_smatrix on the extracted surface.
inline Eigen::Matrix2cd transfer_matrix_1d(const TrigPolynomial& p, const LatticePotential& V, double lambda,
                                           int max_support = 100000) {
    if (!p.nearest_neighbor_1d()) throw Error(ErrorKind::InvalidArgument, "transfer matrix needs a d=1 nearest-neighbour dispersion");
    const double c0 = p.coeff({0, 0}), c1 = p.coeff({1, 0});
    int R = V.effective_radius(1e-17, max_support);
    if (R > max_support) throw Error(ErrorKind::SupportTooWide, "potential support exceeds " + std::to_string(max_support));
    // right-moving root: v = -2 c1 sin xi > 0
    double cx = (lambda - c0) / (2 * c1);
    if (std::abs(cx) >= 1.0) throw Error(ErrorKind::InvalidArgument, "energy outside the band");
    double xi = std::acos(cx);
    if (-2 * c1 * std::sin(xi) < 0) xi = -xi;
    auto pot = [&](long n) { return V(Site{static_cast<int>(n), 0}); };
    auto e = [&](long n, double k) { return std::polar(1.0, n * k); };

    // incoming from the left: pure transmitted wave e^{i n xi} beyond R
    Complex up = e(R + 2, xi), cur = e(R + 1, xi);
    for (long n = R + 1; n >= -R - 1; --n) {
        Complex down = ((lambda - c0 - pot(n)) * cur - c1 * up) / c1;
        up = cur;
        cur = down;
    }
    // cur = u_{-R-2}, up = u_{-R-1}
    auto decompose = [&](long n1, Complex u1, long n2, Complex u2, double k) {
        // u = A e^{i n k} + B e^{-i n k}
        Eigen::Matrix2cd M;
        M << e(n1, k), e(n1, -k), e(n2, k), e(n2, -k);
        Eigen::Vector2cd rhs(u1, u2);
        return Eigen::Vector2cd(M.partialPivLu().solve(rhs));
    };
    Eigen::Vector2cd ab = decompose(-R - 1, up, -R - 2, cur, xi);
    Complex tau_l = 1.0 / ab[0], r_l = ab[1] / ab[0];

    // incoming from the right: pure transmitted wave e^{-i n xi} below -R
    Complex dn = e(-R - 2, -xi);
    cur = e(-R - 1, -xi);
    for (long n = -R - 1; n <= R + 1; ++n) {
        Complex upn = ((lambda - c0 - pot(n)) * cur - c1 * dn) / c1;
        dn = cur;
        cur = upn;
    }
    Eigen::Vector2cd cd = decompose(R + 1, dn, R + 2, cur, -xi);
    Complex tau_r = 1.0 / cd[0], r_r = cd[1] / cd[0];

    Eigen::Matrix2cd S;
    S << tau_l, r_r, r_l, tau_r;
    return S;
}

}  // namespace latscat

#endif
