// filtering.hpp
// Estimators and the feedback law: reduced occupation filter (Y- and
// W-driven Euler-Maruyama steps), the full density-matrix filter, and
// u(q) = a (1 - q_target)^b.

#pragma once

#include "qfb/generators.hpp"

#include <boost/math/special_functions/fpclassify.hpp>
#include <boost/math/interpolators/pchip.hpp>

#include <memory>

namespace qfb {

enum class FeedbackKind { poly, custom_table };

/// u(q) = a (1 - q_target)^b for `poly`. For `custom_table`, u = g(1 - q_target)
/// with g the monotone cubic Hermite (PCHIP) interpolant of (x, u) knots,
/// held constant past the last knot.
struct FeedbackLaw {
    FeedbackKind kind = FeedbackKind::poly;
    Real a = 4.0;
    Real b = 2.0;
    std::size_t target_index = 0;
    std::vector<std::pair<Real, Real>> table;

    void validate() const {
        if (kind == FeedbackKind::poly) {
            require(a > 0.0, ErrorCode::configuration, "feedback gain a must be > 0");
            require(b > 1.0, ErrorCode::configuration, "feedback exponent b must be > 1");
        } else {
            require(table.size() >= 4, ErrorCode::configuration, "custom_table needs >= 4 knots");
            for (std::size_t i = 1; i < table.size(); ++i)
                require(table[i].first > table[i - 1].first, ErrorCode::configuration,
                        "custom_table knots must be strictly increasing");
            require(table.front().first == 0.0 && table.front().second == 0.0,
                    ErrorCode::configuration, "custom_table must start at (0, 0)");
            for (const auto& [x, y] : table)
                require(std::isfinite(x) && std::isfinite(y) && y >= 0.0, ErrorCode::configuration,
                        "custom_table values must be finite and >= 0");
        }
    }

    Real operator()(const RVector& q) const {
        const Real x = std::clamp(1.0 - q(static_cast<Index>(target_index)), 0.0, 1.0);
        if (kind == FeedbackKind::poly) return a * std::pow(x, b);
        if (!interp_) build();
        if (x >= table.back().first) return table.back().second;
        return (*interp_)(x);
    }
    Real operator()(const SimplexVector& q) const { return (*this)(q.components()); }

private:
    using Pchip = boost::math::interpolators::pchip<std::vector<Real>>;
    mutable std::shared_ptr<const Pchip> interp_;

    void build() const {
        validate();
        std::vector<Real> xs, ys;
        for (const auto& [x, y] : table) {
            xs.push_back(x);
            ys.push_back(y);
        }
        interp_ = std::make_shared<const Pchip>(std::move(xs), std::move(ys));
    }
};

inline Real feedback(const FeedbackLaw& law, const SimplexVector& q) {
    law.validate();
    return law(q);
}

struct ReducedFilterConfig {
    RateMatrix Gamma;
    std::vector<ReducedChannel> channels;
    Real clamp_eps = 1e-12;

    Index size() const { return Gamma.size(); }
};

/// Builds the reduced-filter configuration from a QND model's channels.
/// Throws a configuration error when Gamma violates C1.
inline ReducedFilterConfig make_reduced_filter_config(const RMatrix& gamma,
                                                      const std::vector<std::vector<Complex>>& l,
                                                      const std::vector<Real>& theta_hat,
                                                      Real clamp_eps = 1e-12) {
    check_lengths(l.size(), theta_hat.size(), "make_reduced_filter_config");
    ReducedFilterConfig cfg{RateMatrix(gamma), {}, clamp_eps};
    for (std::size_t k = 0; k < l.size(); ++k) {
        check_lengths(l[k].size(), static_cast<std::size_t>(gamma.rows()),
                      "make_reduced_filter_config l-values");
        cfg.channels.push_back({real_parts(l[k]), theta_hat[k]});
    }
    return cfg;
}

/// Clamp to [eps, 1] and renormalize; returns the L1 size of the change.
inline Real clamp_to_simplex(RVector& q, Real eps) {
    const RVector before = q;
    for (Index i = 0; i < q.size(); ++i) q(i) = std::clamp(q(i), eps, 1.0);
    q /= q.sum();
    return (q - before).lpNorm<1>();
}

namespace detail {
inline void require_finite_increments(const std::vector<Real>& d, const char* what) {
    for (Real x : d)
        require(std::isfinite(x), ErrorCode::propagation, std::string(what) + ": non-finite increment");
}
}  // namespace detail

/// Euler-Maruyama step of the Y-driven reduced filter followed by the simplex
/// projection. `correction`, when given, receives the L1 size of the projection.
inline SimplexVector step_reduced_filter(const ReducedFilterConfig& cfg, const SimplexVector& q,
                                         Real u, const std::vector<Real>& dY, Real dt,
                                         Real* correction = nullptr) {
    require(dt > 0.0, ErrorCode::configuration, "dt must be > 0");
    check_lengths(dY.size(), cfg.channels.size(), "step_reduced_filter");
    detail::require_finite_increments(dY, "step_reduced_filter");
    const RVector& x = q.components();
    const Index n = x.size();
    require(n == cfg.size(), ErrorCode::dimension_mismatch, "step_reduced_filter: size");
    RVector next = x;
    cfg.Gamma.apply_add(x, u * dt, next);
    for (std::size_t k = 0; k < cfg.channels.size(); ++k) {
        const auto& ch = cfg.channels[k];
        const Real lam = ch.re_l.dot(x);
        const Real sq = std::sqrt(ch.theta_hat);
        const Real innov = dY[k] - 2.0 * sq * lam * dt;
        for (Index i = 0; i < n; ++i) next(i) += 2.0 * x(i) * sq * (ch.re_l(i) - lam) * innov;
    }
    require(next.allFinite(), ErrorCode::propagation, "step_reduced_filter: non-finite state");
    const Real c = clamp_to_simplex(next, cfg.clamp_eps);
    if (correction) *correction = c;
    return SimplexVector::unchecked(std::move(next));
}

/// W-driven form of the same step: innovation T_k dt + dW_k with
/// T_k = output_drift_k - 2 sqrt(theta_hat_k) Lambda_k(q).
inline SimplexVector step_reduced_filter_w(const ReducedFilterConfig& cfg, const SimplexVector& q,
                                           Real u, const std::vector<Real>& dW,
                                           const std::vector<Real>& output_drifts, Real dt,
                                           Real* correction = nullptr) {
    require(dt > 0.0, ErrorCode::configuration, "dt must be > 0");
    check_lengths(dW.size(), cfg.channels.size(), "step_reduced_filter_w");
    detail::require_finite_increments(dW, "step_reduced_filter_w");
    const auto f = reduced_fields_w(cfg.Gamma, cfg.channels, u, q.components(), output_drifts);
    RVector next = q.components() + f.drift * dt;
    for (std::size_t k = 0; k < dW.size(); ++k) next += f.diffusion[k] * dW[k];
    require(next.allFinite(), ErrorCode::propagation, "step_reduced_filter_w: non-finite state");
    const Real c = clamp_to_simplex(next, cfg.clamp_eps);
    if (correction) *correction = c;
    return SimplexVector::unchecked(std::move(next));
}

/// Euler-Maruyama step of the full filter with fixed nominal parameters
/// (H0 frozen at its nominal value, gamma_hat, theta_hat) and no perturbation
/// term, followed by projection onto density matrices.
inline DensityMatrix step_full_filter(const SystemModel& model, const CMatrix& H0_nominal,
                                      const DensityMatrix& rho_hat, Real u,
                                      const std::vector<Real>& dY, Real dt,
                                      Real* correction = nullptr) {
    require(dt > 0.0, ErrorCode::configuration, "dt must be > 0");
    check_lengths(dY.size(), model.channels.size(), "step_full_filter");
    detail::require_finite_increments(dY, "step_full_filter");
    const CMatrix& r = rho_hat.mat();
    CMatrix next = r + lindblad_drift_nominal(model, H0_nominal, u, r) * dt;
    for (std::size_t k = 0; k < dY.size(); ++k) {
        const auto& ch = model.channels[k];
        const Real sq = std::sqrt(ch.theta_hat());
        const Real pred = sq * 2.0 * (ch.L * r).trace().real();
        next += (sq * (dY[k] - pred * dt)) * backaction(ch.L, r);
    }
    require(next.allFinite(), ErrorCode::propagation, "step_full_filter: non-finite state");
    auto proj = project_to_states(next);
    if (correction) *correction = proj.correction;
    return DensityMatrix(std::move(proj.rho));
}

inline DensityMatrix step_full_filter(const SystemModel& model, const DensityMatrix& rho_hat,
                                      Real u, const std::vector<Real>& dY, Real dt) {
    return step_full_filter(model, model.H0.nominal(), rho_hat, u, dY, dt);
}

}  // namespace qfb
