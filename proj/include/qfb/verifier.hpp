// verifier.hpp
// Structural certification of a SystemModel, reduced-filter rate matrix and
// feedback law, plus the closed-form constants and exponent bounds.

#pragma once

#include "qfb/engine.hpp"

#include <map>
#include <set>

namespace qfb {

inline constexpr Real kStructTol = 1e-10;
inline constexpr Real kRankTol = 1e-8;

// ---------------------------------------------------------------------------
// l-values
// ---------------------------------------------------------------------------

/// l_{k,j} such that L = sum_j l_j Pi_j; throws non-qnd naming the block.
inline std::vector<Complex> extract_l_values(const CMatrix& L, const SubspaceDecomposition& decomp,
                                             Real tol = kStructTol) {
    require_square(L, decomp.total_dim(), "extract_l_values");
    const std::size_t nb = decomp.num_blocks();
    std::vector<Complex> l(nb);
    for (std::size_t i = 0; i < nb; ++i) {
        for (std::size_t j = 0; j < nb; ++j) {
            const CMatrix b = decomp.block(L, i, j);
            if (i != j) {
                require(hs_norm(b) <= tol, ErrorCode::non_qnd,
                        "off-diagonal block (" + std::to_string(i) + "," + std::to_string(j) +
                            ") has norm " + format_real(hs_norm(b)));
                continue;
            }
            const Complex v = b.trace() / static_cast<Real>(b.rows());
            const Real dev = hs_norm(b - v * CMatrix::Identity(b.rows(), b.cols()));
            require(dev <= tol, ErrorCode::non_qnd,
                    "diagonal block " + std::to_string(i) + " is not a multiple of the identity (defect " +
                        format_real(dev) + ")");
            l[i] = v;
        }
    }
    return l;
}

inline std::vector<Complex> extract_l_values(const MeasurementChannel& ch,
                                             const SubspaceDecomposition& decomp) {
    return extract_l_values(ch.L, decomp);
}

// ---------------------------------------------------------------------------
// Report types
// ---------------------------------------------------------------------------

struct CheckResult {
    bool pass = true;
    Real margin = 0;  // violation size or slack; meaning is per check
    std::string detail;
};

struct ChannelConstants {
    std::vector<Complex> l;
    Real c_bar = 0, c_under = 0, l_under = 0, l_bar = 0;
    Real theta_lower = 0, theta_upper = 0, theta_hat = 0;
    Real chi_lower = 0, chi_upper = 0;
    Real A = 0, B = 0;
};

struct VerificationReport {
    std::vector<std::pair<std::string, CheckResult>> checks;
    std::vector<ChannelConstants> channels;
    Real E_l = 0;
    Real C = std::numeric_limits<Real>::quiet_NaN();
    Real qsr_exponent_bound = 0;
    Real feedback_exponent_bound = std::numeric_limits<Real>::quiet_NaN();
    Real chi_bound_margin = std::numeric_limits<Real>::quiet_NaN();
    std::vector<std::size_t> invariant_set;
    std::vector<std::pair<std::size_t, Real>> instability_margins;
    bool eta_upper_below_one = false;
    bool corollary1 = false;
    Index kalman_rank = 0;
    Real horizon = 0;
    std::vector<std::string> warnings;

    void set(const std::string& name, CheckResult r) {
        for (auto& [n, c] : checks)
            if (n == name) {
                c = std::move(r);
                return;
            }
        checks.emplace_back(name, std::move(r));
    }
    const CheckResult& get(const std::string& name) const {
        for (const auto& [n, c] : checks)
            if (n == name) return c;
        throw Error(ErrorCode::configuration, "no check named " + name);
    }
    bool has(const std::string& name) const {
        for (const auto& [n, c] : checks)
            if (n == name) return true;
        return false;
    }
    bool pass(const std::string& name) const { return has(name) && get(name).pass; }
    bool all_pass(const std::vector<std::string>& names) const {
        for (const auto& n : names)
            if (!pass(n)) return false;
        return true;
    }
    std::vector<std::string> failed(const std::vector<std::string>& names) const {
        std::vector<std::string> out;
        for (const auto& n : names)
            if (!pass(n)) out.push_back(n);
        return out;
    }

    /// Flat key/value pairs in a stable order.
    std::vector<std::pair<std::string, std::string>> key_values() const {
        std::vector<std::pair<std::string, std::string>> kv;
        auto b = [](bool x) { return std::string(x ? "true" : "false"); };
        kv.emplace_back("horizon", format_real(horizon));
        for (const auto& [n, c] : checks) {
            kv.emplace_back(n + ".pass", b(c.pass));
            kv.emplace_back(n + ".margin", format_real(c.margin));
            if (!c.detail.empty()) kv.emplace_back(n + ".detail", c.detail);
        }
        kv.emplace_back("E_l", format_real(E_l));
        kv.emplace_back("C", format_real(C));
        kv.emplace_back("qsr_exponent_bound", format_real(qsr_exponent_bound));
        kv.emplace_back("feedback_exponent_bound", format_real(feedback_exponent_bound));
        kv.emplace_back("chi_bound_margin", format_real(chi_bound_margin));
        std::string e;
        for (std::size_t i = 0; i < invariant_set.size(); ++i)
            e += (i ? "," : "") + std::to_string(invariant_set[i]);
        kv.emplace_back("invariant_set", e);
        for (const auto& [n, m] : instability_margins)
            kv.emplace_back("instability_margin." + std::to_string(n), format_real(m));
        kv.emplace_back("eta_upper_below_one", b(eta_upper_below_one));
        kv.emplace_back("corollary1", b(corollary1));
        kv.emplace_back("kalman_rank", std::to_string(kalman_rank));
        for (std::size_t k = 0; k < channels.size(); ++k) {
            const auto& c = channels[k];
            const std::string p = "channel." + std::to_string(k) + ".";
            for (std::size_t j = 0; j < c.l.size(); ++j) {
                kv.emplace_back(p + "l." + std::to_string(j) + ".re", format_real(c.l[j].real()));
                kv.emplace_back(p + "l." + std::to_string(j) + ".im", format_real(c.l[j].imag()));
            }
            kv.emplace_back(p + "c_bar", format_real(c.c_bar));
            kv.emplace_back(p + "c_under", format_real(c.c_under));
            kv.emplace_back(p + "l_under", format_real(c.l_under));
            kv.emplace_back(p + "l_bar", format_real(c.l_bar));
            kv.emplace_back(p + "theta_lower", format_real(c.theta_lower));
            kv.emplace_back(p + "theta_upper", format_real(c.theta_upper));
            kv.emplace_back(p + "theta_hat", format_real(c.theta_hat));
            kv.emplace_back(p + "chi_lower", format_real(c.chi_lower));
            kv.emplace_back(p + "chi_upper", format_real(c.chi_upper));
            kv.emplace_back(p + "A", format_real(c.A));
            kv.emplace_back(p + "B", format_real(c.B));
        }
        for (std::size_t i = 0; i < warnings.size(); ++i)
            kv.emplace_back("warning." + std::to_string(i), warnings[i]);
        return kv;
    }

    std::string to_text(const std::string& prefix = "") const {
        std::string out;
        for (const auto& [k, v] : key_values()) out += prefix + k + " = " + v + "\n";
        return out;
    }
};

// ---------------------------------------------------------------------------
// Time sampling
// ---------------------------------------------------------------------------

inline void collect_periods(const Schedule& s, std::set<Real>& periods) {
    if (!s.is_constant()) periods.insert(s.period);
}

/// Grid with 10^3 points per shortest schedule period over [0, horizon],
/// endpoints included; a single point when every schedule is constant.
inline std::vector<Real> sample_times(const SystemModel& model, Real horizon,
                                      int per_period = 1000) {
    std::set<Real> periods;
    for (const auto& t : model.H0.terms) collect_periods(t.schedule, periods);
    for (const auto& ch : model.channels) {
        collect_periods(ch.gamma, periods);
        collect_periods(ch.eta, periods);
    }
    for (const auto& t : model.perturbation.H_tilde.terms) collect_periods(t.schedule, periods);
    for (const auto& c : model.perturbation.C_ops) collect_periods(c.rate, periods);
    if (periods.empty() || horizon <= 0.0) return {0.0};
    const Real p = *periods.begin();
    const long n = std::max<long>(2, static_cast<long>(std::ceil(per_period * horizon / p)) + 1);
    std::vector<Real> ts(static_cast<std::size_t>(n));
    for (long i = 0; i < n; ++i) ts[static_cast<std::size_t>(i)] = horizon * static_cast<Real>(i) / static_cast<Real>(n - 1);
    return ts;
}

// ---------------------------------------------------------------------------
// Individual checks
// ---------------------------------------------------------------------------

inline Real off_block_norm(const CMatrix& x, const SubspaceDecomposition& decomp) {
    return hs_norm(x - block_diagonal_part(x, decomp));
}

inline CheckResult check_A1(const SystemModel& model, const std::vector<Real>& ts) {
    CheckResult r;
    for (std::size_t k = 0; k < model.channels.size(); ++k) {
        try {
            extract_l_values(model.channels[k].L, model.decomposition);
        } catch (const Error& e) {
            r.pass = false;
            r.margin = std::max(r.margin, off_block_norm(model.channels[k].L, model.decomposition));
            if (r.detail.empty()) r.detail = "L_" + std::to_string(k) + ": " + e.what();
        }
    }
    Real worst = 0.0;
    for (Real t : ts) worst = std::max(worst, off_block_norm(model.H0.eval(t), model.decomposition));
    if (worst > kStructTol) {
        r.pass = false;
        if (r.detail.empty()) r.detail = "H0(t) not block-diagonal";
    }
    r.margin = std::max(r.margin, worst);
    return r;
}

/// Leakage conditions out of block s at one time: (||H_P||, ||C_Q|| max, ||sum C_S* C_P||).
struct LeakageNorms {
    Real h_p = 0, c_q = 0, cross = 0;
    Real max() const { return std::max({h_p, c_q, cross}); }
};

inline LeakageNorms leakage_norms(const PerturbationModel& pert, const SubspaceDecomposition& decomp,
                                  std::size_t s, Real t) {
    LeakageNorms n;
    n.h_p = hs_norm(block_split(pert.H_tilde.eval(t), decomp, s).P);
    CMatrix cross;
    bool first = true;
    for (const auto& c : pert.C_ops) {
        const auto parts = block_split(c.eval(t), decomp, s);
        n.c_q = std::max(n.c_q, hs_norm(parts.Q));
        const CMatrix term = parts.S.adjoint() * parts.P;
        if (first) {
            cross = term;
            first = false;
        } else {
            cross += term;
        }
    }
    if (!first) n.cross = hs_norm(cross);
    return n;
}

inline CheckResult check_A2(const PerturbationModel& pert, const SubspaceDecomposition& decomp,
                            std::size_t target, const std::vector<Real>& ts) {
    CheckResult r;
    LeakageNorms worst;
    for (Real t : ts) {
        const auto n = leakage_norms(pert, decomp, target, t);
        worst.h_p = std::max(worst.h_p, n.h_p);
        worst.c_q = std::max(worst.c_q, n.c_q);
        worst.cross = std::max(worst.cross, n.cross);
    }
    r.margin = worst.max();
    r.pass = r.margin <= kStructTol;
    if (!r.pass) {
        if (worst.h_p > kStructTol) r.detail = "H_tilde couples the target block to its complement";
        else if (worst.c_q > kStructTol) r.detail = "a noise operator maps the target block out";
        else r.detail = "sum_k C_S* C_P does not vanish";
    }
    return r;
}

/// Blocks j whose invariant set survives the perturbation (leakage conditions
/// hold with j in place of the target) when u = 0.
inline std::vector<std::size_t> invariant_blocks(const PerturbationModel& pert,
                                                 const SubspaceDecomposition& decomp,
                                                 const std::vector<Real>& ts) {
    std::vector<std::size_t> e;
    for (std::size_t j = 0; j < decomp.num_blocks(); ++j)
        if (check_A2(pert, decomp, j, ts).pass) e.push_back(j);
    return e;
}

inline CheckResult check_Aqsr(const PerturbationModel& pert, const SubspaceDecomposition& decomp,
                              const std::vector<Real>& ts) {
    CheckResult r;
    for (Real t : ts) {
        r.margin = std::max(r.margin, off_block_norm(pert.H_tilde.eval(t), decomp));
        for (const auto& c : pert.C_ops) r.margin = std::max(r.margin, off_block_norm(c.eval(t), decomp));
    }
    r.pass = r.margin <= kStructTol;
    if (!r.pass) r.detail = "perturbation not block-diagonal";
    return r;
}

/// E_l = min_{i != j} sum_k theta_lower_k (Re l_ki - Re l_kj)^2.
inline Real compute_qsr_constant(const std::vector<std::vector<Complex>>& l,
                                 const std::vector<Real>& theta_lower) {
    check_lengths(l.size(), theta_lower.size(), "compute_qsr_constant");
    if (l.empty()) return 0.0;
    const std::size_t nb = l.front().size();
    if (nb < 2) return std::numeric_limits<Real>::infinity();
    Real best = std::numeric_limits<Real>::infinity();
    for (std::size_t i = 0; i < nb; ++i)
        for (std::size_t j = i + 1; j < nb; ++j) {
            Real s = 0.0;
            for (std::size_t k = 0; k < l.size(); ++k) {
                const Real d = l[k][i].real() - l[k][j].real();
                s += theta_lower[k] * d * d;
            }
            best = std::min(best, s);
        }
    return best;
}

/// c_bar, c_under, l_under, l_bar for one channel w.r.t. the target block.
inline void channel_spread(const std::vector<Complex>& l, std::size_t target, ChannelConstants& c) {
    Real mn = std::numeric_limits<Real>::infinity(), mx = -mn;
    for (std::size_t n = 0; n < l.size(); ++n) {
        if (n == target) continue;
        mn = std::min(mn, l[n].real());
        mx = std::max(mx, l[n].real());
    }
    const Real l0 = l[target].real();
    if (!std::isfinite(mn)) mn = mx = l0;
    c.c_bar = l0 - mn;
    c.c_under = l0 - mx;
    c.l_under = std::min(std::abs(c.c_under), std::abs(c.c_bar));
    c.l_bar = std::max(std::abs(c.c_under), std::abs(c.c_bar));
}

inline CheckResult check_A5(const std::vector<ChannelConstants>& cs) {
    CheckResult r;
    r.margin = std::numeric_limits<Real>::infinity();
    for (std::size_t k = 0; k < cs.size(); ++k) {
        const Real slack = std::max(-cs[k].c_bar, cs[k].c_under);
        r.margin = std::min(r.margin, slack);
        if (!(cs[k].c_bar <= 0.0 || cs[k].c_under >= 0.0)) {
            r.pass = false;
            if (r.detail.empty())
                r.detail = "channel " + std::to_string(k) + ": c_bar > 0 and c_under < 0";
        }
    }
    if (cs.empty()) r.margin = 0;
    return r;
}

/// Eigenvalue clusters of a Hermitian matrix; returns orthonormal bases.
inline std::vector<CMatrix> eigenspaces(const CMatrix& h, Real tol) {
    Eigen::SelfAdjointEigenSolver<CMatrix> es(hermitian_part(h));
    const auto& ev = es.eigenvalues();
    std::vector<CMatrix> out;
    Index start = 0;
    for (Index i = 1; i <= ev.size(); ++i) {
        if (i == ev.size() || ev(i) - ev(i - 1) > tol) {
            out.push_back(es.eigenvectors().middleCols(start, i - start));
            start = i;
        }
    }
    return out;
}

struct HautusResult {
    CheckResult overall;
    std::vector<std::pair<std::size_t, bool>> per_block;
    bool corollary1 = false;
};

inline HautusResult check_A6_hautus(const CMatrix& H1, const SubspaceDecomposition& decomp,
                                    std::size_t target) {
    require_square(H1, decomp.total_dim(), "check_A6_hautus");
    HautusResult out;
    out.overall.margin = std::numeric_limits<Real>::infinity();
    const Real scale = std::max<Real>(1.0, hs_norm(H1));
    for (std::size_t j = 0; j < decomp.num_blocks(); ++j) {
        if (j == target) continue;
        const CMatrix hjj = decomp.block(H1, j, j);
        const Index dj = hjj.rows();
        const Index rest = decomp.total_dim() - dj;
        bool ok = rest > 0;
        for (const auto& V : eigenspaces(hjj, 1e-8 * scale)) {
            if (!ok) break;
            CMatrix M(rest, V.cols());
            Index row = 0;
            for (std::size_t i = 0; i < decomp.num_blocks(); ++i) {
                if (i == j) continue;
                const CMatrix bij = decomp.block(H1, i, j);
                M.middleRows(row, bij.rows()) = bij * V;
                row += bij.rows();
            }
            const Index rk = numerical_rank(M, kRankTol);
            Eigen::JacobiSVD<CMatrix> svd(M);
            const auto& s = svd.singularValues();
            out.overall.margin = std::min(out.overall.margin, s.size() ? s(s.size() - 1) : 0.0);
            if (rk < V.cols()) ok = false;
        }
        if (rest == 0) out.overall.margin = 0.0;
        out.per_block.emplace_back(j, ok);
        if (!ok) {
            out.overall.pass = false;
            if (out.overall.detail.empty())
                out.overall.detail = "block " + std::to_string(j) + " has an eigenvector of its diagonal block annihilated by every off-diagonal block";
        }
    }
    if (out.per_block.empty()) out.overall.margin = 0.0;
    // Corollary: injectivity of every off-diagonal block.
    out.corollary1 = decomp.num_blocks() > 1;
    for (std::size_t n = 0; n < decomp.num_blocks() && out.corollary1; ++n)
        for (std::size_t i = 0; i < decomp.num_blocks(); ++i) {
            if (i == n) continue;
            const CMatrix b = decomp.block(H1, i, n);
            if (numerical_rank(b, kRankTol) < b.cols()) {
                out.corollary1 = false;
                break;
            }
        }
    return out;
}

struct KalmanResult {
    Index rank = 0;
    Index a7_required = 0;
    Index actrl_required = 0;
    CheckResult a7, actrl;
};

inline KalmanResult check_A7_kalman(const CMatrix& H1, const SubspaceDecomposition& decomp,
                                    std::size_t target) {
    require_square(H1, decomp.total_dim(), "check_A7_kalman");
    const auto parts = block_split(H1, decomp, target);
    const Index r = parts.R.rows();
    const Index s = parts.S.rows();
    const Index N = decomp.total_dim();
    KalmanResult out;
    out.a7_required = N - 1 - s;
    out.actrl_required = N - s;
    if (r > 0) {
        CMatrix K(r, r * s);
        CMatrix blk = parts.Q;
        for (Index p = 0; p < r; ++p) {
            K.middleCols(p * s, s) = blk;
            blk = parts.R * blk;
        }
        out.rank = numerical_rank(K, kRankTol);
    }
    out.a7.pass = out.rank >= out.a7_required;
    out.a7.margin = static_cast<Real>(out.rank - out.a7_required);
    out.actrl.pass = out.rank >= out.actrl_required;
    out.actrl.margin = static_cast<Real>(out.rank - out.actrl_required);
    const std::string d = "rank " + std::to_string(out.rank);
    out.a7.detail = d + " (need " + std::to_string(out.a7_required) + ")";
    out.actrl.detail = d + " (need " + std::to_string(out.actrl_required) + ")";
    return out;
}

inline CheckResult check_C1(const RMatrix& gamma) {
    const auto rep = c1_report(gamma);
    CheckResult r;
    r.pass = rep.pass;
    r.margin = rep.max_column_sum_defect;
    r.detail = rep.violation;
    return r;
}

/// Ratios Re l_0 / Re l_n over n != target with Re l_n != 0.
inline std::vector<Real> c2_ratios(const std::vector<Complex>& l, std::size_t target) {
    std::vector<Real> out;
    for (std::size_t n = 0; n < l.size(); ++n)
        if (n != target && l[n].real() != 0.0) out.push_back(l[target].real() / l[n].real());
    return out;
}

inline CheckResult check_C2(const std::vector<ChannelConstants>& cs, std::size_t target) {
    CheckResult r;
    r.margin = std::numeric_limits<Real>::infinity();
    for (std::size_t k = 0; k < cs.size(); ++k) {
        const auto& c = cs[k];
        const auto ratios = c2_ratios(c.l, target);
        if (ratios.empty()) continue;
        const bool upper = c.c_bar <= 0.0, lower = c.c_under >= 0.0;
        if (!upper && !lower) {
            r.pass = false;
            r.margin = std::min(r.margin, -std::numeric_limits<Real>::infinity());
            if (r.detail.empty()) r.detail = "channel " + std::to_string(k) + ": no branch applies";
            continue;
        }
        if (upper) {
            const Real slack = *std::min_element(ratios.begin(), ratios.end()) - (2.0 * c.chi_upper - 1.0);
            r.margin = std::min(r.margin, slack);
            if (!(slack > 0.0)) {
                r.pass = false;
                if (r.detail.empty()) r.detail = "channel " + std::to_string(k) + ": 2 chi_upper - 1 >= min ratio";
            }
        }
        if (lower) {
            const Real slack = (2.0 * c.chi_lower - 1.0) - *std::max_element(ratios.begin(), ratios.end());
            r.margin = std::min(r.margin, slack);
            if (!(slack > 0.0)) {
                r.pass = false;
                if (r.detail.empty()) r.detail = "channel " + std::to_string(k) + ": 2 chi_lower - 1 <= max ratio";
            }
        }
    }
    if (!std::isfinite(r.margin) && r.pass) {
        r.margin = 0.0;
        if (r.detail.empty()) r.detail = "vacuous";
    }
    return r;
}

inline std::vector<Real> chi_grid(Real lo, Real hi, int n = 101) {
    std::vector<Real> g(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) g[static_cast<std::size_t>(i)] = n == 1 ? lo : lo + (hi - lo) * i / (n - 1);
    return g;
}

/// Fills A, B; returns C3 result and sets C (NaN when some A vanishes).
inline CheckResult check_C3(std::vector<ChannelConstants>& cs, std::size_t target, Real& C,
                            Real& chi_bound_margin) {
    CheckResult r;
    r.margin = std::numeric_limits<Real>::infinity();
    C = 0.0;
    chi_bound_margin = std::numeric_limits<Real>::infinity();
    bool a_zero = false;
    for (std::size_t k = 0; k < cs.size(); ++k) {
        auto& c = cs[k];
        const Real l0 = std::abs(c.l[target].real());
        c.A = c.l_under * c.l_under * std::min(c.chi_lower * c.chi_lower, 1.0);
        c.B = 2.0 * c.l_bar * l0 * std::max(1.0 - c.chi_lower, c.chi_upper - 1.0);
        if (l0 == 0.0) {
            r.margin = std::min(r.margin, c.l_under);
            if (!(c.l_under > 0.0)) {
                r.pass = false;
                if (r.detail.empty()) r.detail = "channel " + std::to_string(k) + ": Re l_0 = 0 and l_under = 0";
            }
        } else {
            r.margin = std::min(r.margin, c.A - c.B);
            if (!(c.A > c.B)) {
                r.pass = false;
                if (r.detail.empty()) r.detail = "channel " + std::to_string(k) + ": A <= B";
            }
        }
        if (c.A == 0.0) {
            a_zero = true;
        } else {
            C += c.theta_hat * (2.0 * c.A - c.B) * (2.0 * c.A - c.B) / (2.0 * c.A);
        }
        for (Real chi : chi_grid(c.chi_lower, c.chi_upper)) {
            const Real v = c.l_under * c.l_under * std::min(chi * chi, 1.0) -
                           2.0 * c.l_bar * std::abs((chi - 1.0) * c.l[target].real());
            chi_bound_margin = std::min(chi_bound_margin, v - (c.A - c.B));
        }
    }
    if (a_zero) {
        C = std::numeric_limits<Real>::quiet_NaN();
        r.pass = false;
        if (r.detail.empty()) r.detail = "division guard: A_k = 0";
    }
    if (cs.empty()) {
        r.margin = 0;
        chi_bound_margin = 0;
    }
    return r;
}

/// R_{k,n}(chi) = (Re l_n - Re l_0)((2 chi - 1) Re l_n - Re l_0).
inline Real r_kn(const std::vector<Complex>& l, std::size_t target, std::size_t n, Real chi) {
    const Real ln = l[n].real(), l0 = l[target].real();
    return (ln - l0) * ((2.0 * chi - 1.0) * ln - l0);
}

/// min over the chi grid of sum_k theta_hat_k R_{k,n}; R is affine in each
/// chi_k so the minimum splits channel by channel.
inline Real check_instability_margin(const std::vector<ChannelConstants>& cs, std::size_t target,
                                     std::size_t n, int grid = 101) {
    Real total = 0.0;
    for (const auto& c : cs) {
        Real mn = std::numeric_limits<Real>::infinity();
        for (Real chi : chi_grid(c.chi_lower, c.chi_upper, grid)) mn = std::min(mn, r_kn(c.l, target, n, chi));
        total += c.theta_hat * mn;
    }
    return total;
}

/// Sampled A4 properties: u(e_0) = 0, u(e_n) > 0, u >= 0 and finite on a
/// deterministic sample of the simplex; smoothness from the law's kind.
inline CheckResult check_A4(const FeedbackLaw& law, Index n_blocks, std::size_t target,
                            int n_samples = 2000) {
    CheckResult r;
    try {
        law.validate();
    } catch (const Error& e) {
        r.pass = false;
        r.detail = e.what();
        return r;
    }
    if (law.target_index != target) {
        r.pass = false;
        r.detail = "feedback target differs from model target";
        return r;
    }
    const Real u0 = law(SimplexVector::vertex(n_blocks, static_cast<Index>(target)));
    r.margin = std::numeric_limits<Real>::infinity();
    if (u0 != 0.0) {
        r.pass = false;
        r.detail = "u(e_target) != 0";
    }
    for (Index n = 0; n < n_blocks; ++n) {
        if (n == static_cast<Index>(target)) continue;
        const Real un = law(SimplexVector::vertex(n_blocks, n));
        r.margin = std::min(r.margin, un);
        if (!(un > 0.0)) {
            r.pass = false;
            if (r.detail.empty()) r.detail = "u(e_" + std::to_string(n) + ") <= 0";
        }
    }
    CounterRng rng(0xA4A4A4A4ULL);
    std::exponential_distribution<Real> ex(1.0);
    for (int s = 0; s < n_samples; ++s) {
        RVector q(n_blocks);
        for (Index i = 0; i < n_blocks; ++i) q(i) = ex(rng);
        q /= q.sum();
        const Real u = law(q);
        if (!(std::isfinite(u) && u >= 0.0)) {
            r.pass = false;
            if (r.detail.empty()) r.detail = "u negative or non-finite on the simplex";
            break;
        }
    }
    if (n_blocks == 1) r.margin = 0.0;
    return r;
}

/// Every schedule stays inside its declared bounds over [0, horizon].
inline CheckResult check_schedules(const SystemModel& model, Real horizon) {
    CheckResult r;
    auto visit = [&](const Schedule& s) { r.margin = std::max(r.margin, s.bound_violation(horizon)); };
    for (const auto& t : model.H0.terms) visit(t.schedule);
    for (const auto& ch : model.channels) {
        visit(ch.gamma);
        visit(ch.eta);
    }
    for (const auto& t : model.perturbation.H_tilde.terms) visit(t.schedule);
    for (const auto& c : model.perturbation.C_ops) visit(c.rate);
    r.pass = r.margin == 0.0;
    if (!r.pass) r.detail = "a schedule leaves its declared range";
    return r;
}

/// Hermiticity of H0(t), H_tilde(t), H1 and the channel parameter ranges.
inline CheckResult check_model(const SystemModel& model, const std::vector<Real>& ts, Real horizon,
                               std::vector<std::string>& warnings) {
    CheckResult r;
    try {
        model.check_dimensions();
    } catch (const Error& e) {
        r.pass = false;
        r.detail = e.what();
        return r;
    }
    Real worst = hermiticity_defect(model.H1);
    if (worst > 1e-12) {
        r.pass = false;
        r.detail = "H1 not Hermitian";
    }
    for (Real t : ts) {
        const Real a = hermiticity_defect(model.H0.eval(t));
        const Real b = hermiticity_defect(model.perturbation.H_tilde.eval(t));
        if (std::max(a, b) > kStructTol && r.detail.empty()) r.detail = "H0(t) or H_tilde(t) not Hermitian";
        worst = std::max({worst, a, b});
    }
    if (worst > kStructTol) r.pass = false;
    for (std::size_t k = 0; k < model.channels.size(); ++k) {
        const auto& ch = model.channels[k];
        const auto [gl, gu] = ch.gamma.bounds(horizon);
        const auto [el, eu] = ch.eta.bounds(horizon);
        const std::string p = "channel " + std::to_string(k) + ": ";
        if (!(gl > 0.0)) {
            r.pass = false;
            if (r.detail.empty()) r.detail = p + "gamma lower bound must be > 0";
        }
        if (!(el > 0.0 && eu <= 1.0)) {
            r.pass = false;
            if (r.detail.empty()) r.detail = p + "eta range must lie in (0, 1]";
        }
        if (!(ch.gamma_hat > 0.0 && ch.eta_hat > 0.0 && ch.eta_hat <= 1.0)) {
            r.pass = false;
            if (r.detail.empty()) r.detail = p + "nominal gamma/eta out of range";
        }
        if (ch.gamma_hat < gl || ch.gamma_hat > gu)
            warnings.push_back(p + "gamma_hat outside [gamma_lower, gamma_upper]");
        if (ch.eta_hat < el || ch.eta_hat > eu)
            warnings.push_back(p + "eta_hat outside [eta_lower, eta_upper]");
        const Real th = ch.theta_hat(), tl = ch.theta_lower(horizon), tu = ch.theta_upper(horizon);
        if (th < tl || th > tu) warnings.push_back(p + "theta_hat outside [theta_lower, theta_upper]");
    }
    r.margin = worst;
    return r;
}

// ---------------------------------------------------------------------------
// Full verification
// ---------------------------------------------------------------------------

/// Checks required before a feedback simulation.
inline const std::vector<std::string>& feedback_checks() {
    static const std::vector<std::string> v{"model", "schedules", "A1", "A2", "A3", "A4", "A5",
                                            "A6",    "A7",        "C1", "C2", "C3"};
    return v;
}
/// Checks required before an uncontrolled state-reduction run.
inline const std::vector<std::string>& qsr_checks() {
    static const std::vector<std::string> v{"model", "schedules", "A1", "A3", "A-qsr"};
    return v;
}
/// Checks required before a deterministic control-system run.
inline const std::vector<std::string>& deterministic_checks() {
    static const std::vector<std::string> v{"model", "schedules", "A1", "A2", "A4", "A6", "A7", "C1"};
    return v;
}

inline VerificationReport verify(const SystemModel& model, const RMatrix& gamma,
                                 const FeedbackLaw& law, Real horizon) {
    VerificationReport rep;
    rep.horizon = horizon;
    const auto& decomp = model.decomposition;
    const auto ts = sample_times(model, horizon);
    const std::size_t target = model.target_index;

    rep.set("model", check_model(model, ts, horizon, rep.warnings));
    if (!rep.pass("model")) return rep;
    rep.set("schedules", check_schedules(model, horizon));
    rep.set("A1", check_A1(model, ts));
    rep.set("A2", check_A2(model.perturbation, decomp, target, ts));
    rep.set("A-qsr", check_Aqsr(model.perturbation, decomp, ts));
    rep.invariant_set = invariant_blocks(model.perturbation, decomp, ts);

    bool qnd = true;
    std::vector<std::vector<Complex>> ls;
    std::vector<Real> tl;
    for (const auto& ch : model.channels) {
        try {
            ls.push_back(ch.l_values ? *ch.l_values : extract_l_values(ch.L, decomp));
        } catch (const Error&) {
            qnd = false;
            break;
        }
        tl.push_back(ch.theta_lower(horizon));
    }
    rep.eta_upper_below_one = !model.channels.empty();
    for (const auto& ch : model.channels)
        if (!(ch.eta.upper(horizon) < 1.0)) rep.eta_upper_below_one = false;

    if (qnd && !model.channels.empty()) {
        for (std::size_t k = 0; k < model.channels.size(); ++k) {
            const auto& ch = model.channels[k];
            ChannelConstants c;
            c.l = ls[k];
            channel_spread(c.l, target, c);
            c.theta_lower = ch.theta_lower(horizon);
            c.theta_upper = ch.theta_upper(horizon);
            c.theta_hat = ch.theta_hat();
            c.chi_lower = std::sqrt(c.theta_lower / c.theta_hat);
            c.chi_upper = std::sqrt(c.theta_upper / c.theta_hat);
            rep.channels.push_back(std::move(c));
        }
        rep.E_l = compute_qsr_constant(ls, tl);
        rep.qsr_exponent_bound = -rep.E_l / 2.0;
        CheckResult a3;
        a3.pass = rep.E_l > 0.0;
        a3.margin = rep.E_l;
        if (!a3.pass) a3.detail = "two blocks share Re l on every channel";
        rep.set("A3", a3);
        rep.set("A5", check_A5(rep.channels));
        rep.set("C2", check_C2(rep.channels, target));
        rep.set("C3", check_C3(rep.channels, target, rep.C, rep.chi_bound_margin));
        if (std::isfinite(rep.C)) rep.feedback_exponent_bound = -rep.C / 2.0;
        for (std::size_t n = 0; n < decomp.num_blocks(); ++n)
            if (n != target) rep.instability_margins.emplace_back(n, check_instability_margin(rep.channels, target, n));
    } else {
        const std::string why = model.channels.empty() ? "no measurement channels" : "non-QND measurement";
        for (const char* name : {"A3", "A5", "C2", "C3"}) rep.set(name, {false, 0.0, why});
    }
    rep.set("A4", check_A4(law, static_cast<Index>(decomp.num_blocks()), target));
    auto h = check_A6_hautus(model.H1, decomp, target);
    rep.corollary1 = h.corollary1;
    rep.set("A6", h.overall);
    auto kal = check_A7_kalman(model.H1, decomp, target);
    rep.kalman_rank = kal.rank;
    rep.set("A7", kal.a7);
    rep.set("A-ctrl", kal.actrl);
    rep.set("C1", check_C1(gamma));
    return rep;
}

}  // namespace qfb
