// observables.hpp
// State observables and time-series statistics: block occupations, the
// state-reduction Lyapunov functional, purity, numerical rank, exponent fits
// and limit classification.

#pragma once

#include "qfb/generators.hpp"

#include <optional>

namespace qfb {

/// p_j = Tr(rho Pi_j).
inline RVector occupations(const CMatrix& rho, const SubspaceDecomposition& decomp) {
    require_square(rho, decomp.total_dim(), "occupations");
    RVector p(static_cast<Index>(decomp.num_blocks()));
    for (std::size_t j = 0; j < decomp.num_blocks(); ++j) {
        const Index o = decomp.offset(j);
        Real s = 0.0;
        for (Index i = o; i < o + decomp.block_dim(j); ++i) s += rho(i, i).real();
        p(static_cast<Index>(j)) = s;
    }
    return p;
}

/// V(rho) = sum_{i != j} sqrt(p_i p_j) over ordered pairs.
inline Real lyapunov_qsr_from_occupations(const RVector& p) {
    // (sum_i sqrt p_i)^2 - sum_i p_i, with negatives from round-off clipped.
    Real s = 0.0, t = 0.0;
    for (Index i = 0; i < p.size(); ++i) {
        const Real pi = std::max(0.0, p(i));
        s += std::sqrt(pi);
        t += pi;
    }
    return std::max(0.0, s * s - t);
}

inline Real lyapunov_qsr(const CMatrix& rho, const SubspaceDecomposition& decomp) {
    return lyapunov_qsr_from_occupations(occupations(rho, decomp));
}

/// Psi^k_n(rho) = Re{l_n} - sum_j Re{l_j} Tr(rho Pi_j), evaluated on occupations.
inline Real psi_k_n(const RVector& re_l, const RVector& p, Index n) {
    check_lengths(re_l.size(), p.size(), "psi_k_n");
    require(n >= 0 && n < p.size(), ErrorCode::index_out_of_range, "psi_k_n");
    return re_l(n) - re_l.dot(p);
}

inline Real purity(const CMatrix& rho) { return (rho * rho).trace().real(); }

inline int numerical_state_rank(const CMatrix& rho, Real eps = 1e-8) {
    Eigen::SelfAdjointEigenSolver<CMatrix> es(hermitian_part(rho), Eigen::EigenvaluesOnly);
    int r = 0;
    for (Index i = 0; i < es.eigenvalues().size(); ++i)
        if (es.eigenvalues()(i) > eps) ++r;
    return r;
}

// ---------------------------------------------------------------------------
// Exponent fits
// ---------------------------------------------------------------------------

struct ExponentFit {
    Real slope = 0;
    Real intercept = 0;
    Real t_start = 0;
    Real t_end = 0;
    Real r_squared = 0;
    int n_points = 0;
};

/// Least-squares slope of log(value) against t over [t_start, t_end], using
/// only points with value > 1e-12.
inline ExponentFit fit_exponent(const std::vector<Real>& times, const std::vector<Real>& values,
                                Real t_start, Real t_end) {
    check_lengths(times.size(), values.size(), "fit_exponent");
    require(t_start < t_end, ErrorCode::insufficient_points, "fit window must have t_start < t_end");
    std::vector<Real> xs, ys;
    for (std::size_t i = 0; i < times.size(); ++i) {
        if (times[i] < t_start - 1e-12 || times[i] > t_end + 1e-12) continue;
        if (!(values[i] > 1e-12) || !std::isfinite(values[i])) continue;
        xs.push_back(times[i]);
        ys.push_back(std::log(values[i]));
    }
    require(xs.size() >= 10, ErrorCode::insufficient_points,
            "fit_exponent: " + std::to_string(xs.size()) + " usable points in window (need 10)");
    const Real n = static_cast<Real>(xs.size());
    Real mx = 0, my = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= n;
    my /= n;
    Real sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
        syy += (ys[i] - my) * (ys[i] - my);
    }
    ExponentFit f;
    f.slope = sxx > 0 ? sxy / sxx : 0.0;
    f.intercept = my - f.slope * mx;
    f.t_start = t_start;
    f.t_end = t_end;
    f.n_points = static_cast<int>(xs.size());
    f.r_squared = (sxx > 0 && syy > 0) ? (sxy * sxy) / (sxx * syy) : 1.0;
    return f;
}

/// Index j with p_j >= threshold in the final occupation vector, if any.
inline std::optional<std::size_t> classify_limit(const RVector& final_occupations,
                                                 Real threshold = 0.99) {
    for (Index j = 0; j < final_occupations.size(); ++j)
        if (final_occupations(j) >= threshold) return static_cast<std::size_t>(j);
    return std::nullopt;
}

/// Linear-interpolated quantile of an unsorted sample (q in [0, 1]).
inline Real quantile(std::vector<Real> xs, Real q) {
    require(!xs.empty(), ErrorCode::insufficient_points, "quantile of empty sample");
    std::sort(xs.begin(), xs.end());
    const Real pos = q * static_cast<Real>(xs.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, xs.size() - 1);
    const Real w = pos - static_cast<Real>(lo);
    return xs[lo] * (1.0 - w) + xs[hi] * w;
}

}  // namespace qfb
