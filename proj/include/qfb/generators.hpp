// generators.hpp
// Drift and diffusion fields: dissipator, Lindblad generator, measurement
// back-action, perturbation, reduced-filter fields and the Stratonovich
// deterministic fields. All functions are pure.

#pragma once

#include "qfb/model.hpp"

#include <sstream>

namespace qfb {

// ---------------------------------------------------------------------------
// Density-matrix fields
// ---------------------------------------------------------------------------

/// D_L(rho) = L rho L* - 1/2 L*L rho - 1/2 rho L*L.
inline CMatrix dissipator(const CMatrix& L, const CMatrix& rho) {
    require(L.rows() == rho.rows() && L.cols() == rho.cols() && L.rows() == L.cols(),
            ErrorCode::dimension_mismatch, "dissipator");
    const CMatrix LdL = L.adjoint() * L;
    CMatrix out = L * rho * L.adjoint();
    out.noalias() -= 0.5 * (LdL * rho);
    out.noalias() -= 0.5 * (rho * LdL);
    return out;
}

/// G_L(rho) = L rho + rho L* - Tr((L + L*) rho) rho.
inline CMatrix backaction(const CMatrix& L, const CMatrix& rho) {
    require(L.rows() == rho.rows() && L.cols() == rho.cols(), ErrorCode::dimension_mismatch,
            "backaction");
    const Complex c = (L * rho).trace() + (L.adjoint() * rho).trace();
    CMatrix out = L * rho;
    out += rho * L.adjoint();
    out -= c * rho;
    return out;
}

/// -i[H0(t) + u H1, rho] + sum_k gamma_k(t) D_{L_k}(rho).
inline CMatrix lindblad_drift(const SystemModel& model, Real t, Real u, const CMatrix& rho) {
    require_square(rho, model.dim(), "lindblad_drift");
    const CMatrix H = model.H0.eval(t) + u * model.H1;
    CMatrix out = -kI * commutator(H, rho);
    for (const auto& ch : model.channels) out += ch.gamma.eval(t) * dissipator(ch.L, rho);
    return out;
}

/// Same as lindblad_drift with constant nominal Hamiltonian/couplings.
inline CMatrix lindblad_drift_nominal(const SystemModel& model, const CMatrix& H0_nominal,
                                      Real u, const CMatrix& rho) {
    require_square(rho, model.dim(), "lindblad_drift_nominal");
    const CMatrix H = H0_nominal + u * model.H1;
    CMatrix out = -kI * commutator(H, rho);
    for (const auto& ch : model.channels) out += ch.gamma_hat * dissipator(ch.L, rho);
    return out;
}

/// -i[H~0(t), rho] + sum_k D_{C_k(t)}(rho).
inline CMatrix perturbation_drift(const PerturbationModel& pert, Real t, const CMatrix& rho) {
    const Index n = rho.rows();
    require(pert.H_tilde.dim() == n, ErrorCode::dimension_mismatch, "perturbation_drift");
    CMatrix out = -kI * commutator(pert.H_tilde.eval(t), rho);
    for (const auto& c : pert.C_ops) {
        require_square(c.M, n, "perturbation_drift C_k");
        // D_{sqrt(r) M} = r D_M
        out += c.rate.eval(t) * dissipator(c.M, rho);
    }
    return out;
}

/// Measurement-record drift sqrt(theta_k(t)) Tr((L_k + L_k*) rho).
inline Real output_drift(const MeasurementChannel& ch, Real t, const CMatrix& rho) {
    require(ch.L.rows() == rho.rows(), ErrorCode::dimension_mismatch, "output_drift");
    const Real theta = ch.theta(t);
    if (theta <= 0.0) return 0.0;
    return std::sqrt(theta) * 2.0 * (ch.L * rho).trace().real();
}

/// Ito drift and diffusion of the plant SME.
struct FieldEvaluation {
    CMatrix drift;
    std::vector<CMatrix> diffusion;
};

inline FieldEvaluation sme_fields(const SystemModel& model, Real t, Real u, const CMatrix& rho,
                                  bool with_perturbation = true) {
    FieldEvaluation f;
    f.drift = lindblad_drift(model, t, u, rho);
    if (with_perturbation) f.drift += perturbation_drift(model.perturbation, t, rho);
    f.diffusion.reserve(model.channels.size());
    for (const auto& ch : model.channels)
        f.diffusion.push_back(std::sqrt(std::max(0.0, ch.theta(t))) * backaction(ch.L, rho));
    return f;
}

// ---------------------------------------------------------------------------
// Reduced (occupation-space) fields
// ---------------------------------------------------------------------------

inline void check_lengths(std::size_t a, std::size_t b, const char* what) {
    require(a == b, ErrorCode::dimension_mismatch,
            std::string(what) + ": length mismatch " + std::to_string(a) + " vs " +
                std::to_string(b));
}

inline RVector real_parts(const std::vector<Complex>& l) {
    RVector r(static_cast<Index>(l.size()));
    for (std::size_t j = 0; j < l.size(); ++j) r(static_cast<Index>(j)) = l[j].real();
    return r;
}

/// Lambda_k(q) = sum_j Re{l_j} q_j.
inline Real lambda_k(const RVector& re_l, const RVector& q) {
    check_lengths(re_l.size(), q.size(), "lambda_k");
    return re_l.dot(q);
}
inline Real lambda_k(const std::vector<Complex>& l, const SimplexVector& q) {
    return lambda_k(real_parts(l), q.components());
}

/// Phi^k_n(q) = Re{l_n} - Lambda_k(q).
inline Real phi_k_n(const RVector& re_l, const RVector& q, Index n) {
    check_lengths(re_l.size(), q.size(), "phi_k_n");
    require(n >= 0 && n < q.size(), ErrorCode::index_out_of_range, "phi_k_n");
    return re_l(n) - re_l.dot(q);
}
inline Real phi_k_n(const std::vector<Complex>& l, const SimplexVector& q, Index n) {
    return phi_k_n(real_parts(l), q.components(), n);
}

/// Occupation-space back-action: 2 p_n (Re{l_n} - sum_j Re{l_j} p_j).
inline RVector diag_backaction(const RVector& re_l, const RVector& p) {
    check_lengths(re_l.size(), p.size(), "diag_backaction");
    const Real lam = re_l.dot(p);
    return 2.0 * p.cwiseProduct((re_l.array() - lam).matrix());
}

/// One measurement channel as seen by the reduced filter.
struct ReducedChannel {
    RVector re_l;
    Real theta_hat = 1.0;
};

struct C1Report {
    bool pass = true;
    Real max_column_sum_defect = 0;
    Real max_diagonal = 0;      // must be < 0
    Real min_off_diagonal = 0;  // must be >= 0
    std::string violation;
};

inline C1Report c1_report(const RMatrix& gamma) {
    C1Report r;
    if (gamma.rows() != gamma.cols() || gamma.rows() == 0) {
        r.pass = false;
        r.violation = "Gamma must be square and non-empty";
        return r;
    }
    const Index n = gamma.rows();
    r.max_diagonal = -std::numeric_limits<Real>::infinity();
    r.min_off_diagonal = std::numeric_limits<Real>::infinity();
    for (Index j = 0; j < n; ++j) {
        const Real cs = gamma.col(j).sum();
        r.max_column_sum_defect = std::max(r.max_column_sum_defect, std::abs(cs));
        if (std::abs(cs) > 1e-12 && r.violation.empty())
            r.violation = "column " + std::to_string(j) + " sums to " + std::to_string(cs);
        r.max_diagonal = std::max(r.max_diagonal, gamma(j, j));
        if (!(gamma(j, j) < 0.0) && r.violation.empty())
            r.violation = "diagonal entry " + std::to_string(j) + " is not negative";
        for (Index i = 0; i < n; ++i) {
            if (i == j) continue;
            r.min_off_diagonal = std::min(r.min_off_diagonal, gamma(i, j));
            if (gamma(i, j) < 0.0 && r.violation.empty()) {
                std::ostringstream os;
                os << "off-diagonal entry (" << i << "," << j << ") = " << gamma(i, j) << " < 0";
                r.violation = os.str();
            }
        }
    }
    if (n == 1) r.min_off_diagonal = 0.0;
    r.pass = r.violation.empty();
    return r;
}

/// C1-validated rate matrix with a cached nonzero list so that applying it
/// costs O(nnz).
class RateMatrix {
public:
    RateMatrix() = default;
    explicit RateMatrix(RMatrix gamma) : gamma_(std::move(gamma)) {
        const auto rep = c1_report(gamma_);
        require(rep.pass, ErrorCode::configuration, "C1 violated: " + rep.violation);
        for (Index i = 0; i < gamma_.rows(); ++i)
            for (Index j = 0; j < gamma_.cols(); ++j)
                if (gamma_(i, j) != 0.0) nz_.push_back({i, j, gamma_(i, j)});
    }

    const RMatrix& dense() const noexcept { return gamma_; }
    Index size() const noexcept { return gamma_.rows(); }

    /// out += scale * Gamma q
    void apply_add(const RVector& q, Real scale, RVector& out) const {
        for (const auto& e : nz_) out(e.i) += scale * e.v * q(e.j);
    }

private:
    struct Entry {
        Index i, j;
        Real v;
    };
    RMatrix gamma_;
    std::vector<Entry> nz_;
};

struct ReducedFieldEvaluation {
    RVector drift;
    std::vector<RVector> diffusion;  // one column per channel
};

/// Y-driven reduced filter fields: drift excludes the dY term, i.e.
///   dq = drift dt + sum_k diffusion_k dY_k.
/// drift_n = u (Gamma q)_n - 4 q_n sum_k theta_hat_k Phi^k_n Lambda_k.
inline ReducedFieldEvaluation reduced_fields(const RateMatrix& gamma,
                                             const std::vector<ReducedChannel>& channels, Real u,
                                             const RVector& q) {
    const Index n = q.size();
    require(gamma.size() == n, ErrorCode::dimension_mismatch, "reduced_fields: Gamma size");
    ReducedFieldEvaluation f;
    f.drift = RVector::Zero(n);
    gamma.apply_add(q, u, f.drift);
    f.diffusion.reserve(channels.size());
    for (const auto& ch : channels) {
        check_lengths(ch.re_l.size(), n, "reduced_fields");
        const Real lam = ch.re_l.dot(q);
        const Real sq = std::sqrt(ch.theta_hat);
        RVector col(n);
        for (Index i = 0; i < n; ++i) {
            const Real phi = ch.re_l(i) - lam;
            col(i) = 2.0 * q(i) * sq * phi;
            f.drift(i) -= 4.0 * q(i) * ch.theta_hat * phi * lam;
        }
        f.diffusion.push_back(std::move(col));
    }
    return f;
}

/// W-driven form: dq = drift dt + sum_k diffusion_k dW_k with
/// drift_n = u (Gamma q)_n + 2 q_n sum_k sqrt(theta_hat_k) Phi^k_n T_k, where
/// T_k = sqrt(theta_k) Tr((L_k + L_k*) rho) - 2 sqrt(theta_hat_k) Lambda_k(q).
inline ReducedFieldEvaluation reduced_fields_w(const RateMatrix& gamma,
                                               const std::vector<ReducedChannel>& channels,
                                               Real u, const RVector& q,
                                               const std::vector<Real>& output_drifts) {
    const Index n = q.size();
    require(gamma.size() == n, ErrorCode::dimension_mismatch, "reduced_fields_w: Gamma size");
    check_lengths(output_drifts.size(), channels.size(), "reduced_fields_w");
    ReducedFieldEvaluation f;
    f.drift = RVector::Zero(n);
    gamma.apply_add(q, u, f.drift);
    for (std::size_t k = 0; k < channels.size(); ++k) {
        const auto& ch = channels[k];
        const Real lam = ch.re_l.dot(q);
        const Real sq = std::sqrt(ch.theta_hat);
        const Real innovation = output_drifts[k] - 2.0 * sq * lam;
        RVector col(n);
        for (Index i = 0; i < n; ++i) {
            col(i) = 2.0 * q(i) * sq * (ch.re_l(i) - lam);
            f.drift(i) += col(i) * innovation;
        }
        f.diffusion.push_back(std::move(col));
    }
    return f;
}

// ---------------------------------------------------------------------------
// Stratonovich deterministic fields
// ---------------------------------------------------------------------------

/// Stratonovich-corrected Lindblad part L~^u_{gamma,eta}(t, rho).
inline CMatrix stratonovich_lindblad(const SystemModel& model, Real t, Real u,
                                     const CMatrix& rho) {
    require_square(rho, model.dim(), "stratonovich_lindblad");
    const CMatrix H = model.H0.eval(t) + u * model.H1;
    CMatrix out = -kI * commutator(H, rho);
    for (const auto& ch : model.channels) {
        const Real g = ch.gamma.eval(t), e = ch.eta.eval(t);
        const CMatrix& L = ch.L;
        const CMatrix Ld = L.adjoint();
        const CMatrix LdL = Ld * L;
        const CMatrix X = L + Ld;
        const Real trx2 = ((X * L + Ld * X) * rho).trace().real();  // = Tr(X^2 rho) for normal L
        CMatrix term = 2.0 * (1.0 - e) * (L * rho * Ld);
        term -= (LdL + e * (L * L)) * rho;
        term -= rho * (LdL + e * (Ld * Ld));
        term += e * trx2 * rho;
        out += 0.5 * g * term;
    }
    return out;
}

/// L~ + P + sum_k sqrt(theta_k(t)) G_{L_k}(rho) V_k.
inline CMatrix stratonovich_plant_field(const SystemModel& model, Real t, Real u,
                                        const CMatrix& rho, const std::vector<Real>& V,
                                        bool with_perturbation = true) {
    check_lengths(V.size(), model.channels.size(), "stratonovich_plant_field");
    CMatrix out = stratonovich_lindblad(model, t, u, rho);
    if (with_perturbation) out += perturbation_drift(model.perturbation, t, rho);
    for (std::size_t k = 0; k < V.size(); ++k) {
        const auto& ch = model.channels[k];
        out += (std::sqrt(std::max(0.0, ch.theta(t))) * V[k]) * backaction(ch.L, rho);
    }
    return out;
}

/// Delta_n(q) = 2 q_n sum_k theta_hat_k [sum_j q_j Re{l_j} Phi^k_j - (Phi^k_n)^2].
inline RVector stratonovich_filter_correction(const std::vector<ReducedChannel>& channels,
                                              const RVector& q) {
    const Index n = q.size();
    RVector delta = RVector::Zero(n);
    for (const auto& ch : channels) {
        check_lengths(ch.re_l.size(), n, "stratonovich_filter_correction");
        const Real lam = ch.re_l.dot(q);
        Real s = 0.0;
        for (Index j = 0; j < n; ++j) s += q(j) * ch.re_l(j) * (ch.re_l(j) - lam);
        for (Index i = 0; i < n; ++i) {
            const Real phi = ch.re_l(i) - lam;
            delta(i) += 2.0 * q(i) * ch.theta_hat * (s - phi * phi);
        }
    }
    return delta;
}

/// f^u_n(q) + Delta_n(q) + 2 q_n sum_k sqrt(theta_hat_k) Phi^k_n(q) V_k.
inline RVector stratonovich_filter_field(const RateMatrix& gamma,
                                         const std::vector<ReducedChannel>& channels, Real u,
                                         const RVector& q, const std::vector<Real>& V) {
    check_lengths(V.size(), channels.size(), "stratonovich_filter_field");
    auto f = reduced_fields(gamma, channels, u, q);
    RVector out = f.drift + stratonovich_filter_correction(channels, q);
    for (std::size_t k = 0; k < V.size(); ++k) out += V[k] * f.diffusion[k];
    return out;
}

}  // namespace qfb
