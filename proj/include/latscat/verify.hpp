#ifndef LATSCAT_VERIFY_HPP
#define LATSCAT_VERIFY_HPP

#include "solver.hpp"

namespace latscat {

struct ComparisonRow {
    double kappa = 0.0;
    double norm_s_minus_i = 0.0;        // |S - I|
    double norm_first_order = 0.0;      // |S - (I - i kappa Op(psi))|
    double norm_born = 0.0;             // |S - Op(exp(-i kappa psi))|
    double odd_part_per_kappa = 0.0;    // |(S - S^*)/2| / kappa
    double unitarity_defect = 0.0;
    double extrapolation_residual = 0.0;
    double optical_residual = 0.0;
    int L_used = 0;
    bool ordering_ok = false;
    bool possible_point_spectrum = false;
};

struct DecayFit {
    double exponent = 0.0;
    std::vector<int> modes;
    std::vector<double> amplitudes;
};

struct ComparisonReport {
    double lambda = 0.0;
    std::vector<double> kappa_sweep;
    std::vector<ComparisonRow> rows;
    std::size_t gated_row = 0;
    double scaling_ratio = 0.0;
    bool decay_applicable = false;
    std::vector<DecayFit> fit_s_minus_i;     // per component, gated row
    std::vector<DecayFit> fit_s_minus_born;  // per component, gated row
    double separation = 0.0;                 // min over components of (exp(S-I) - exp(S-Born))
    bool vacuous = false;
    bool pass_unitarity = false;
    bool pass_scaling = false;
    bool pass_decay = false;
    bool pass = false;
    std::string note;
};

inline void check_same_surface(const SurfaceKernel& a, const SurfaceKernel& b) {
    if (a.size() != b.size() || a.surface != b.surface)
        throw Error(ErrorKind::SurfaceMismatch, "kernels live on different surface discretizations");
}

// born: Op(exp(-i kappa psi)); born1: Op(psi) for the unit-amplitude potential
inline ComparisonRow born_compare(const ScatteringResult& result, const SurfaceKernel& born,
                                  const SurfaceKernel& born1, double kappa) {
    const SurfaceKernel& S = result.s_matrix;
    check_same_surface(S, born);
    check_same_surface(S, born1);
    const auto N = static_cast<Eigen::Index>(S.size());
    Eigen::MatrixXcd I = Eigen::MatrixXcd::Identity(N, N);
    ComparisonRow row;
    row.kappa = kappa;
    row.norm_s_minus_i = op_norm(S.matrix - I);
    row.norm_first_order = op_norm(S.matrix - (I - Complex(0.0, kappa) * born1.matrix));
    row.norm_born = op_norm(S.matrix - born.matrix);
    row.odd_part_per_kappa = kappa != 0.0 ? op_norm(0.5 * (S.matrix - S.matrix.adjoint())) / kappa : 0.0;
    row.unitarity_defect = result.unitarity_defect;
    row.extrapolation_residual = result.extrapolation_residual;
    row.optical_residual = result.optical_residual;
    row.L_used = result.L_used;
    row.possible_point_spectrum = result.possible_point_spectrum;
    const double slack = 1e-12;
    row.ordering_ok = row.norm_born <= row.norm_first_order + slack && row.norm_first_order <= row.norm_s_minus_i + slack;
    return row;
}

// Row-wise surface Fourier transform sigma_i(q) = sum_j B_ij exp(2 pi i (i - j) q / N):
// the discrete symbol at dual mode q seen from point i.  a(q) = max_i max(|sigma_i(q)|, |sigma_i(-q)|).
inline DecayFit decay_order_fit(const Eigen::MatrixXcd& B, int q_lo, int q_hi) {
    const auto N = static_cast<int>(B.rows());
    if (q_lo < 1 || q_hi <= q_lo || q_hi > N / 2)
        throw Error(ErrorKind::InvalidArgument, "mode range must lie in [1, N/2]");
    double bmax = B.cwiseAbs().maxCoeff();
    double offmax = 0.0;
    for (int i = 0; i < N; ++i)
        for (int j = 0; j < N; ++j)
            if (i != j) offmax = std::max(offmax, std::abs(B(i, j)));
    if (bmax == 0.0 || offmax <= 1e-14 * bmax)
        throw Error(ErrorKind::InsufficientModes, "kernel has no off-diagonal content");
    const double floor = 1e-14 * bmax * N;
    DecayFit fit;
    for (int q = q_lo; q <= q_hi; ++q) {
        double a = 0.0;
        for (int i = 0; i < N; ++i) {
            Complex sp{}, sm{};
            for (int j = 0; j < N; ++j) {
                double ph = 2 * pi * double(i - j) * q / N;
                sp += B(i, j) * std::polar(1.0, ph);
                sm += B(i, j) * std::polar(1.0, -ph);
            }
            a = std::max({a, std::abs(sp), std::abs(sm)});
        }
        if (a > floor) {
            fit.modes.push_back(q);
            fit.amplitudes.push_back(a);
        }
    }
    if (fit.modes.size() < 3) throw Error(ErrorKind::InsufficientModes, "fewer than 3 modes above the noise floor");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = fit.modes.size();
    for (std::size_t k = 0; k < fit.modes.size(); ++k) {
        double x = std::log(double(fit.modes[k])), y = std::log(fit.amplitudes[k]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    fit.exponent = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    return fit;
}

inline Eigen::MatrixXcd component_block(const SurfaceKernel& K, std::size_t comp) {
    const auto& s = *K.surface;
    auto off = static_cast<Eigen::Index>(s.offset(comp));
    auto n = static_cast<Eigen::Index>(s.components[comp].size());
    return K.matrix.block(off, off, n, n);
}

inline DecayFit decay_order_fit(const SurfaceKernel& K, int q_lo, int q_hi, std::size_t comp = 0) {
    if (!K.surface || K.surface->dim != 2 || !K.surface->components[comp].closed)
        throw Error(ErrorKind::InvalidArgument, "decay fit needs a closed d=2 component");
    return decay_order_fit(component_block(K, comp), q_lo, q_hi);
}

struct GateThresholds {
    double unitarity = 5e-3;
    double ratio_lo = 3.5, ratio_hi = 4.5;
    double separation = 0.5;
};

// ratio of first-order remainders between the two largest couplings, rescaled to a
// halving step so that an O(kappa^2) remainder gives 4
inline double scaling_ratio(const ComparisonReport& r) {
    if (r.rows.size() < 2) return 0.0;
    const auto& a = r.rows[0];
    const auto& b = r.rows[1];
    if (b.norm_first_order == 0.0) return 0.0;
    double k = a.kappa / b.kappa;
    return a.norm_first_order / b.norm_first_order * 4.0 / (k * k);
}

inline bool theorem_gate(ComparisonReport& report, double mu, GateThresholds th = {}) {
    (void)mu;
    bool all_zero = !report.rows.empty();
    for (auto& row : report.rows)
        if (row.norm_s_minus_i > 1e-12 || row.norm_born > 1e-12 || row.norm_first_order > 1e-12) all_zero = false;
    if (all_zero) {
        report.vacuous = true;
        report.pass_unitarity = report.pass_scaling = report.pass_decay = report.pass = true;
        report.note = "vacuous pass: all norms vanish";
        return true;
    }
    if (report.rows.empty()) return report.pass = false;
    const auto& g = report.rows[report.gated_row];
    report.pass_unitarity = g.unitarity_defect <= th.unitarity;
    report.scaling_ratio = scaling_ratio(report);
    report.pass_scaling = report.rows.size() >= 2 && report.scaling_ratio >= th.ratio_lo && report.scaling_ratio <= th.ratio_hi;
    if (report.decay_applicable) {
        report.pass_decay = !report.fit_s_minus_i.empty() && report.separation >= th.separation;
    } else {
        report.pass_decay = true;
    }
    report.pass = report.pass_unitarity && report.pass_scaling && report.pass_decay;
    return report.pass;
}

}  // namespace latscat

#endif
