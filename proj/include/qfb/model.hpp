// model.hpp
// Model-core types: QND subspace decomposition, density matrices, closed-form
// schedules, measurement channels, perturbations and the full system model.

#pragma once

#include "qfb/core.hpp"

#include <algorithm>
#include <limits>
#include <numbers>
#include <optional>
#include <utility>

namespace qfb {

// ---------------------------------------------------------------------------
// Subspace decomposition H = H_0 + ... + H_d realized as contiguous blocks of
// the computational basis.
// ---------------------------------------------------------------------------

/// Diagonal 0/1 projectors, one per block, in basis order.
inline std::vector<CMatrix> make_projectors(const std::vector<int>& block_dims) {
    require(!block_dims.empty(), ErrorCode::invalid_decomposition, "empty block list");
    Index n = 0;
    for (int b : block_dims) {
        require(b >= 1, ErrorCode::invalid_decomposition, "block dimension must be >= 1");
        n += b;
    }
    std::vector<CMatrix> out;
    out.reserve(block_dims.size());
    Index off = 0;
    for (int b : block_dims) {
        CMatrix p = CMatrix::Zero(n, n);
        for (Index i = off; i < off + b; ++i) p(i, i) = 1.0;
        out.push_back(std::move(p));
        off += b;
    }
    return out;
}

class SubspaceDecomposition {
public:
    SubspaceDecomposition() = default;

    explicit SubspaceDecomposition(std::vector<int> block_dims)
        : dims_(std::move(block_dims)), projectors_(make_projectors(dims_)) {
        offsets_.resize(dims_.size());
        Index off = 0;
        for (std::size_t j = 0; j < dims_.size(); ++j) {
            offsets_[j] = off;
            off += dims_[j];
        }
        total_ = off;
    }

    const std::vector<int>& block_dims() const noexcept { return dims_; }
    Index total_dim() const noexcept { return total_; }
    /// Number of blocks, d + 1.
    std::size_t num_blocks() const noexcept { return dims_.size(); }
    Index offset(std::size_t j) const { return offsets_.at(j); }
    Index block_dim(std::size_t j) const { return dims_.at(j); }
    const CMatrix& projector(std::size_t j) const { return projectors_.at(j); }
    const std::vector<CMatrix>& projectors() const noexcept { return projectors_; }

    void check_index(std::size_t j) const {
        require(j < dims_.size(), ErrorCode::index_out_of_range,
                "block index " + std::to_string(j) + " out of range (d+1 = " +
                    std::to_string(dims_.size()) + ")");
    }

    /// Block of X mapping H_j to H_i, i.e. the matrix of Pi_i X Pi_j restricted.
    CMatrix block(const CMatrix& x, std::size_t i, std::size_t j) const {
        check_index(i);
        check_index(j);
        return x.block(offsets_[i], offsets_[j], dims_[i], dims_[j]);
    }

    /// Basis indices not belonging to block s, in ascending order.
    std::vector<Index> complement_indices(std::size_t s) const {
        check_index(s);
        std::vector<Index> idx;
        for (Index i = 0; i < total_; ++i)
            if (i < offsets_[s] || i >= offsets_[s] + dims_[s]) idx.push_back(i);
        return idx;
    }

    /// Block label of a basis index.
    std::size_t block_of(Index i) const {
        for (std::size_t j = 0; j < dims_.size(); ++j)
            if (i >= offsets_[j] && i < offsets_[j] + dims_[j]) return j;
        throw Error(ErrorCode::index_out_of_range, "basis index out of range");
    }

    bool operator==(const SubspaceDecomposition& o) const { return dims_ == o.dims_; }

private:
    std::vector<int> dims_;
    std::vector<Index> offsets_;
    Index total_ = 0;
    std::vector<CMatrix> projectors_;
};

/// Hilbert-Schmidt distance ||rho - Pi_j rho Pi_j||.
inline Real distance_to_subspace(const CMatrix& rho, const SubspaceDecomposition& decomp,
                                 std::size_t j) {
    decomp.check_index(j);
    require_square(rho, decomp.total_dim(), "distance_to_subspace");
    const Index o = decomp.offset(j), b = decomp.block_dim(j);
    // ||rho||^2 minus the squared norm of the (j,j) block.
    const Real total = rho.squaredNorm();
    const Real inner = rho.block(o, o, b, b).squaredNorm();
    return std::sqrt(std::max(0.0, total - inner));
}

/// Four-block split of X w.r.t. H_S = H_s and H_R = its complement.
struct BlockSplit {
    CMatrix S;  // S -> S
    CMatrix P;  // R -> S
    CMatrix Q;  // S -> R
    CMatrix R;  // R -> R
};

inline BlockSplit block_split(const CMatrix& x, const SubspaceDecomposition& decomp,
                              std::size_t s) {
    decomp.check_index(s);
    require_square(x, decomp.total_dim(), "block_split");
    const Index o = decomp.offset(s), b = decomp.block_dim(s);
    const auto comp = decomp.complement_indices(s);
    const Index r = static_cast<Index>(comp.size());
    BlockSplit out{x.block(o, o, b, b), CMatrix(b, r), CMatrix(r, b), CMatrix(r, r)};
    for (Index i = 0; i < b; ++i)
        for (Index k = 0; k < r; ++k) {
            out.P(i, k) = x(o + i, comp[k]);
            out.Q(k, i) = x(comp[k], o + i);
        }
    for (Index i = 0; i < r; ++i)
        for (Index k = 0; k < r; ++k) out.R(i, k) = x(comp[i], comp[k]);
    return out;
}

inline CMatrix block_reassemble(const BlockSplit& parts, const SubspaceDecomposition& decomp,
                                std::size_t s) {
    decomp.check_index(s);
    const Index n = decomp.total_dim();
    const Index o = decomp.offset(s), b = decomp.block_dim(s);
    const auto comp = decomp.complement_indices(s);
    const Index r = static_cast<Index>(comp.size());
    require(parts.S.rows() == b && parts.R.rows() == r, ErrorCode::dimension_mismatch,
            "block_reassemble: block sizes");
    CMatrix x(n, n);
    x.block(o, o, b, b) = parts.S;
    for (Index i = 0; i < b; ++i)
        for (Index k = 0; k < r; ++k) {
            x(o + i, comp[k]) = parts.P(i, k);
            x(comp[k], o + i) = parts.Q(k, i);
        }
    for (Index i = 0; i < r; ++i)
        for (Index k = 0; k < r; ++k) x(comp[i], comp[k]) = parts.R(i, k);
    return x;
}

// ---------------------------------------------------------------------------
// Density matrices
// ---------------------------------------------------------------------------

struct StateTolerances {
    Real trace_tol = 1e-9;
    Real herm_tol = 1e-10;
    Real psd_tol = 1e-10;
};

struct StateReport {
    Real hermiticity_defect = 0;
    Real trace_defect = 0;
    Real min_eigenvalue = 0;
    bool hermitian_ok = true;
    bool trace_ok = true;
    bool psd_ok = true;
    bool pass() const { return hermitian_ok && trace_ok && psd_ok; }
};

inline StateReport validate_state(const CMatrix& rho, const StateTolerances& tol = {}) {
    StateReport r;
    if (rho.rows() != rho.cols() || rho.rows() == 0 || !rho.allFinite()) {
        r.hermitian_ok = r.trace_ok = r.psd_ok = false;
        r.hermiticity_defect = r.trace_defect = std::numeric_limits<Real>::infinity();
        r.min_eigenvalue = -std::numeric_limits<Real>::infinity();
        return r;
    }
    r.hermiticity_defect = hermiticity_defect(rho);
    r.trace_defect = std::abs(rho.trace() - Complex(1.0));
    Eigen::SelfAdjointEigenSolver<CMatrix> es(hermitian_part(rho), Eigen::EigenvaluesOnly);
    r.min_eigenvalue = es.eigenvalues()(0);
    r.hermitian_ok = r.hermiticity_defect <= tol.herm_tol;
    r.trace_ok = r.trace_defect <= tol.trace_tol;
    r.psd_ok = r.min_eigenvalue >= -tol.psd_tol;
    return r;
}

/// Density matrix value type. Construction from a raw matrix does not
/// validate; use `checked` where an invalid state is a caller error.
class DensityMatrix {
public:
    DensityMatrix() = default;
    explicit DensityMatrix(CMatrix m) : m_(std::move(m)) {}

    static DensityMatrix checked(CMatrix m, const StateTolerances& tol = {}) {
        const auto rep = validate_state(m, tol);
        require(rep.pass(), ErrorCode::configuration,
                "invalid density matrix (herm " + std::to_string(rep.hermiticity_defect) +
                    ", trace " + std::to_string(rep.trace_defect) + ", min eig " +
                    std::to_string(rep.min_eigenvalue) + ")");
        return DensityMatrix(std::move(m));
    }
    static DensityMatrix basis_state(Index n, Index i) {
        CMatrix m = CMatrix::Zero(n, n);
        m(i, i) = 1.0;
        return DensityMatrix(std::move(m));
    }
    static DensityMatrix maximally_mixed(Index n) {
        return DensityMatrix(CMatrix::Identity(n, n) / static_cast<Real>(n));
    }
    static DensityMatrix diagonal(const RVector& p) {
        return DensityMatrix(p.cast<Complex>().asDiagonal().toDenseMatrix());
    }

    const CMatrix& mat() const noexcept { return m_; }
    CMatrix& mat() noexcept { return m_; }
    Index dim() const noexcept { return m_.rows(); }

private:
    CMatrix m_;
};

struct ProjectionResult {
    CMatrix rho;
    Real correction = 0;  // ||rho_out - rho_in|| (HS norm)
    Real min_eigenvalue_before = 0;
};

/// Symmetrize, clip negative eigenvalues, and renormalize the trace.
inline ProjectionResult project_to_states(const CMatrix& raw) {
    ProjectionResult out;
    CMatrix h = hermitian_part(raw);
    Eigen::SelfAdjointEigenSolver<CMatrix> es(h);
    RVector ev = es.eigenvalues();
    out.min_eigenvalue_before = ev(0);
    if (ev(0) < 0.0) {
        ev = ev.cwiseMax(0.0);
        const Real s = ev.sum();
        require(s > 0.0, ErrorCode::propagation, "projection: zero trace after clipping");
        ev /= s;
        const auto& v = es.eigenvectors();
        out.rho = v * ev.cast<Complex>().asDiagonal() * v.adjoint();
        out.rho = hermitian_part(out.rho);
    } else {
        const Complex tr = h.trace();
        require(tr.real() > 0.0, ErrorCode::propagation, "projection: non-positive trace");
        out.rho = h / tr.real();
    }
    out.correction = hs_norm(out.rho - raw);
    return out;
}

// ---------------------------------------------------------------------------
// Schedules: closed-form waveforms evaluated on demand.
// ---------------------------------------------------------------------------

enum class ScheduleKind { constant, sine, triangle, linear_drift };

inline const char* to_string(ScheduleKind k) {
    switch (k) {
        case ScheduleKind::constant: return "constant";
        case ScheduleKind::sine: return "sine";
        case ScheduleKind::triangle: return "triangle";
        case ScheduleKind::linear_drift: return "linear_drift";
    }
    return "constant";
}

inline std::optional<ScheduleKind> schedule_kind_from_string(const std::string& s) {
    if (s == "constant") return ScheduleKind::constant;
    if (s == "sine") return ScheduleKind::sine;
    if (s == "triangle") return ScheduleKind::triangle;
    if (s == "linear_drift") return ScheduleKind::linear_drift;
    return std::nullopt;
}

struct Schedule {
    ScheduleKind kind = ScheduleKind::constant;
    Real base = 0.0;
    Real rel_amplitude = 0.0;
    Real period = 1.0;
    Real phase = 0.0;
    Real drift_rate = 0.0;

    static Schedule constant(Real v) { return {ScheduleKind::constant, v, 0, 1, 0, 0}; }
    static Schedule sine(Real base, Real amp, Real period, Real phase = 0.0) {
        return {ScheduleKind::sine, base, amp, period, phase, 0};
    }
    static Schedule triangle(Real base, Real amp, Real period, Real phase = 0.0) {
        return {ScheduleKind::triangle, base, amp, period, phase, 0};
    }
    static Schedule linear_drift(Real base, Real rate, Real period) {
        return {ScheduleKind::linear_drift, base, 0, period, 0, rate};
    }

    /// Symmetric triangle wave in phase with sin(x), range [-1, 1].
    static Real triangle_wave(Real x) {
        return (2.0 / std::numbers::pi) * std::asin(std::clamp(std::sin(x), -1.0, 1.0));
    }

    Real eval(Real t) const {
        switch (kind) {
            case ScheduleKind::constant: return base;
            case ScheduleKind::sine:
                return base * (1.0 + rel_amplitude *
                                         std::sin(2.0 * std::numbers::pi * t / period + phase));
            case ScheduleKind::triangle:
                return base * (1.0 + rel_amplitude *
                                         triangle_wave(2.0 * std::numbers::pi * t / period + phase));
            case ScheduleKind::linear_drift: return base * (1.0 + drift_rate * t / period);
        }
        return base;
    }

    /// Value with all modulation removed.
    Real nominal() const { return base; }

    /// Declared range over [0, horizon].
    std::pair<Real, Real> bounds(Real horizon) const {
        Real a = base, b = base;
        switch (kind) {
            case ScheduleKind::constant: break;
            case ScheduleKind::sine:
            case ScheduleKind::triangle:
                a = base * (1.0 - std::abs(rel_amplitude));
                b = base * (1.0 + std::abs(rel_amplitude));
                break;
            case ScheduleKind::linear_drift:
                a = base;
                b = base * (1.0 + drift_rate * horizon / period);
                break;
        }
        return {std::min(a, b), std::max(a, b)};
    }
    Real lower(Real horizon) const { return bounds(horizon).first; }
    Real upper(Real horizon) const { return bounds(horizon).second; }

    bool is_constant() const {
        return kind == ScheduleKind::constant ||
               ((kind == ScheduleKind::sine || kind == ScheduleKind::triangle) &&
                rel_amplitude == 0.0) ||
               (kind == ScheduleKind::linear_drift && drift_rate == 0.0);
    }

    /// Largest excursion outside the declared bounds found by dense sampling
    /// (`per_period` points per period over [0, horizon]); 0 when within.
    Real bound_violation(Real horizon, int per_period = 10000) const {
        const auto [lo, hi] = bounds(horizon);
        const Real span = std::max(horizon, 0.0);
        const long n = std::max<long>(
            2, static_cast<long>(std::ceil(per_period * std::max(1.0, span / period))) + 1);
        Real worst = 0.0;
        for (long i = 0; i < n; ++i) {
            const Real t = span * static_cast<Real>(i) / static_cast<Real>(n - 1);
            const Real v = eval(t);
            const Real tol = 1e-12 * (1.0 + std::abs(v));
            worst = std::max({worst, lo - v - tol, v - hi - tol});
        }
        return std::max(0.0, worst);
    }

    bool operator==(const Schedule&) const = default;
};

/// X(t) = X_const + sum_i s_i(t) X_i.
struct ScheduledMatrix {
    struct Term {
        Schedule schedule;
        CMatrix matrix;
    };
    CMatrix constant;
    std::vector<Term> terms;

    ScheduledMatrix() = default;
    explicit ScheduledMatrix(CMatrix c) : constant(std::move(c)) {}

    static ScheduledMatrix zero(Index n) { return ScheduledMatrix(CMatrix::Zero(n, n)); }

    ScheduledMatrix& add(Schedule s, CMatrix m) {
        terms.push_back({s, std::move(m)});
        return *this;
    }

    Index dim() const { return constant.rows(); }

    CMatrix eval(Real t) const {
        CMatrix out = constant;
        for (const auto& term : terms) out.noalias() += term.schedule.eval(t) * term.matrix;
        return out;
    }
    void eval_into(Real t, CMatrix& out) const {
        out = constant;
        for (const auto& term : terms) out.noalias() += term.schedule.eval(t) * term.matrix;
    }

    /// Operator with every schedule frozen at its nominal (base) value.
    CMatrix nominal() const {
        CMatrix out = constant;
        for (const auto& term : terms) out += term.schedule.nominal() * term.matrix;
        return out;
    }

    bool is_zero() const {
        if (constant.size() && constant.norm() != 0.0) return false;
        for (const auto& t : terms)
            if (t.matrix.norm() != 0.0 && !(t.schedule.is_constant() && t.schedule.base == 0.0))
                return false;
        return true;
    }
};

/// C(t) = sqrt(rate(t)) * M.
struct NoiseOperator {
    Schedule rate;
    CMatrix M;

    CMatrix eval(Real t) const { return std::sqrt(std::max(0.0, rate.eval(t))) * M; }
    Real sqrt_rate(Real t) const { return std::sqrt(std::max(0.0, rate.eval(t))); }
};

struct PerturbationModel {
    ScheduledMatrix H_tilde;
    std::vector<NoiseOperator> C_ops;

    static PerturbationModel none(Index n) { return {ScheduledMatrix::zero(n), {}}; }

    bool is_zero() const {
        if (!H_tilde.is_zero()) return false;
        for (const auto& c : C_ops)
            if (c.M.norm() != 0.0) return false;
        return true;
    }
};

// ---------------------------------------------------------------------------
// Measurement channels and the system model
// ---------------------------------------------------------------------------

struct MeasurementChannel {
    CMatrix L;
    Schedule gamma = Schedule::constant(1.0);
    Schedule eta = Schedule::constant(1.0);
    Real gamma_hat = 1.0;
    Real eta_hat = 1.0;
    std::optional<std::vector<Complex>> l_values;

    Real theta(Real t) const { return eta.eval(t) * gamma.eval(t); }
    Real theta_hat() const { return eta_hat * gamma_hat; }
    Real theta_lower(Real horizon) const { return eta.lower(horizon) * gamma.lower(horizon); }
    Real theta_upper(Real horizon) const { return eta.upper(horizon) * gamma.upper(horizon); }
};

class SimplexVector {
public:
    SimplexVector() = default;

    /// Validates nonnegativity and unit sum (1e-9).
    explicit SimplexVector(RVector q) : q_(std::move(q)) {
        require(q_.size() > 0, ErrorCode::configuration, "empty simplex vector");
        require(q_.allFinite(), ErrorCode::configuration, "non-finite simplex vector");
        require(q_.minCoeff() >= 0.0, ErrorCode::configuration, "negative simplex component");
        require(std::abs(q_.sum() - 1.0) <= 1e-9, ErrorCode::configuration,
                "simplex components must sum to 1");
    }

    static SimplexVector uniform(Index n) {
        return SimplexVector(RVector::Constant(n, 1.0 / static_cast<Real>(n)));
    }
    static SimplexVector vertex(Index n, Index i) {
        RVector q = RVector::Zero(n);
        q(i) = 1.0;
        return SimplexVector(std::move(q));
    }
    /// Skips validation; callers guarantee simplex membership.
    static SimplexVector unchecked(RVector q) {
        SimplexVector s;
        s.q_ = std::move(q);
        return s;
    }

    const RVector& components() const noexcept { return q_; }
    Real operator[](Index i) const { return q_(i); }
    Index size() const noexcept { return q_.size(); }

    bool is_valid(Real tol = 1e-9) const {
        return q_.size() > 0 && q_.allFinite() && q_.minCoeff() >= 0.0 &&
               std::abs(q_.sum() - 1.0) <= tol;
    }

private:
    RVector q_;
};

struct SystemModel {
    SubspaceDecomposition decomposition;
    ScheduledMatrix H0;
    CMatrix H1;
    std::vector<MeasurementChannel> channels;
    PerturbationModel perturbation;
    std::size_t target_index = 0;

    Index dim() const { return decomposition.total_dim(); }

    /// Dimension consistency; structural assumptions live in the verifier.
    void check_dimensions() const {
        const Index n = dim();
        require(n > 0, ErrorCode::dimension_mismatch, "empty decomposition");
        require_square(H0.constant, n, "H0");
        for (const auto& t : H0.terms) require_square(t.matrix, n, "H0 term");
        require_square(H1, n, "H1");
        require_square(perturbation.H_tilde.constant, n, "H_tilde");
        for (const auto& t : perturbation.H_tilde.terms) require_square(t.matrix, n, "H_tilde term");
        for (const auto& c : perturbation.C_ops) require_square(c.M, n, "C_k");
        for (const auto& ch : channels) require_square(ch.L, n, "L_k");
        decomposition.check_index(target_index);
    }

    /// Copy with the perturbation restricted to its block-diagonal part, the
    /// strongest structure under which every block stays invariant.
    SystemModel with_block_diagonal_perturbation() const;
};

/// Zero every entry of X coupling distinct blocks.
inline CMatrix block_diagonal_part(const CMatrix& x, const SubspaceDecomposition& decomp) {
    CMatrix out = CMatrix::Zero(x.rows(), x.cols());
    for (std::size_t j = 0; j < decomp.num_blocks(); ++j) {
        const Index o = decomp.offset(j), b = decomp.block_dim(j);
        out.block(o, o, b, b) = x.block(o, o, b, b);
    }
    return out;
}

inline SystemModel SystemModel::with_block_diagonal_perturbation() const {
    SystemModel m = *this;
    auto& ht = m.perturbation.H_tilde;
    ht.constant = block_diagonal_part(ht.constant, decomposition);
    for (auto& t : ht.terms) t.matrix = block_diagonal_part(t.matrix, decomposition);
    std::vector<NoiseOperator> kept;
    for (auto c : m.perturbation.C_ops) {
        c.M = block_diagonal_part(c.M, decomposition);
        if (c.M.norm() > 0.0) kept.push_back(std::move(c));
    }
    m.perturbation.C_ops = std::move(kept);
    return m;
}

}  // namespace qfb
