// analysis.hpp
// Monte Carlo probes: the one-step generator of the state-reduction
// functional against its closed form, and the escape drift of the filter
// from an undesired invariant set.

#pragma once

#include "qfb/verifier.hpp"

namespace qfb {

// ---------------------------------------------------------------------------
// Generator of V_qsr
// ---------------------------------------------------------------------------

/// -1/2 sum_{i != j} sqrt(p_i p_j) sum_k theta_k(t) (Re l_ki - Re l_kj)^2.
inline Real qsr_generator_closed_form(const SystemModel& model, const CMatrix& rho, Real t) {
    const RVector p = occupations(rho, model.decomposition);
    Real s = 0.0;
    std::vector<std::vector<Complex>> ls;
    for (const auto& ch : model.channels) ls.push_back(extract_l_values(ch.L, model.decomposition));
    for (Index i = 0; i < p.size(); ++i)
        for (Index j = 0; j < p.size(); ++j) {
            if (i == j) continue;
            Real w = 0.0;
            for (std::size_t k = 0; k < ls.size(); ++k) {
                const Real d = ls[k][static_cast<std::size_t>(i)].real() - ls[k][static_cast<std::size_t>(j)].real();
                w += model.channels[k].theta(t) * d * d;
            }
            s += std::sqrt(std::max(0.0, p(i) * p(j))) * w;
        }
    return -0.5 * s;
}

struct GeneratorOracleResult {
    Real analytic = 0;
    Real empirical = 0;       // plain sample mean of dV / dt
    Real std_error = 0;
    Real reduced = 0;         // antithetic + polynomial control variates
    Real reduced_std_error = 0;
    long n_samples = 0;
    Real dt = 0;
};

/// One-step Monte Carlo estimate of the generator of V_qsr at rho with u = 0.
/// Standard normals are drawn independently of dt, so calls that differ only
/// in dt share random numbers.
inline GeneratorOracleResult generator_oracle_qsr(const SystemModel& model, const CMatrix& rho,
                                                  Real dt, long n_samples = 100000,
                                                  std::uint64_t seed = 7, Real t = 0.0) {
    require(dt > 0.0, ErrorCode::configuration, "dt_probe must be > 0");
    require(n_samples >= 10, ErrorCode::insufficient_points, "generator oracle needs >= 10 samples");
    for (std::size_t k = 0; k < model.channels.size(); ++k) extract_l_values(model.channels[k].L, model.decomposition);
    const auto& decomp = model.decomposition;
    const std::size_t m = model.channels.size();
    PlantStepper plant(model, true);
    WienerSource noise(seed, 0);
    const Real v0 = lyapunov_qsr(rho, decomp);
    const Real sdt = std::sqrt(dt);

    GeneratorOracleResult out;
    out.analytic = qsr_generator_closed_form(model, rho, t);
    out.n_samples = n_samples;
    out.dt = dt;

    std::vector<Real> z(m), dW(m);
    auto incr = [&](Real sign) {
        for (std::size_t k = 0; k < m; ++k) dW[k] = sign * sdt * z[k];
        const auto ps = plant.step(rho, t, 0.0, dW, dt);
        return (lyapunov_qsr(ps.rho.mat(), decomp) - v0) / dt;
    };

    // Regression of the antithetic mean on centred z^2 and z^4 moments.
    Eigen::MatrixXd X(n_samples, 3);
    Eigen::VectorXd g(n_samples);
    Real sum = 0.0, sum2 = 0.0;
    for (long s = 0; s < n_samples; ++s) {
        for (auto& x : z) x = noise.standard_normal();
        const Real plus = incr(1.0), minus = incr(-1.0);
        sum += plus;
        sum2 += plus * plus;
        Real c2 = 0.0, c4 = 0.0;
        for (Real x : z) {
            c2 += x * x - 1.0;
            c4 += x * x * x * x - 3.0;
        }
        X(s, 0) = 1.0;
        X(s, 1) = c2;
        X(s, 2) = c4;
        g(s) = 0.5 * (plus + minus);
    }
    const Real n = static_cast<Real>(n_samples);
    out.empirical = sum / n;
    out.std_error = std::sqrt(std::max(0.0, (sum2 / n - out.empirical * out.empirical) / (n - 1.0)));
    const Eigen::VectorXd beta = X.colPivHouseholderQr().solve(g);
    const Eigen::VectorXd resid = g - X * beta;
    out.reduced = beta(0);
    out.reduced_std_error = std::sqrt(resid.squaredNorm() / (n - 3.0) / n);
    return out;
}

struct BiasHalvingResult {
    GeneratorOracleResult coarse, fine;
    Real ratio = 0;  // (reduced(dt) - analytic) / (reduced(dt/2) - analytic)
};

inline BiasHalvingResult generator_bias_halving(const SystemModel& model, const CMatrix& rho, Real dt,
                                                long n_samples = 100000, std::uint64_t seed = 7) {
    BiasHalvingResult r;
    r.coarse = generator_oracle_qsr(model, rho, dt, n_samples, seed);
    r.fine = generator_oracle_qsr(model, rho, dt / 2.0, n_samples, seed);
    const Real e1 = r.coarse.reduced - r.coarse.analytic;
    const Real e2 = r.fine.reduced - r.fine.analytic;
    r.ratio = e2 != 0.0 ? e1 / e2 : std::numeric_limits<Real>::quiet_NaN();
    return r;
}

// ---------------------------------------------------------------------------
// Escape from an undesired invariant set
// ---------------------------------------------------------------------------

struct InstabilityOptions {
    int n_paths = 2000;
    Real window = 0.05;  // drift measurement span
    Real dt = 1e-3;
    Real q_start = 1e-6;  // initial filter weight on the undesired block
    Real lambda = 0.1;
    int exit_paths = 200;
    Real exit_horizon = 20.0;
    std::uint64_t seed = 11;
};

struct InstabilityWitness {
    std::size_t n = 0;
    Real drift = 0;            // mean d/dt of log(1/q_n)
    Real drift_std_error = 0;
    Real analytic_drift = 0;   // -2 sum_k theta_hat_k R_{k,n}(chi_k(t)), window average
    Real margin = 0;           // grid minimum of sum_k theta_hat_k R_{k,n}
    int exited = 0;            // paths leaving the lambda-ball within exit_horizon
    int exit_paths = 0;
    Real exit_time_mean = 0;   // over exited paths
    Real exit_time_median = 0;
    bool negative() const { return drift < 0.0; }
};

/// Starts with rho in I(H_n) and q_hat = (1 - q_start) e_target + q_start e_n,
/// runs the coupled system with feedback and measures the drift of log(1/q_n)
/// over a short window plus exit times from B_lambda(H_n) x B_lambda(e_target).
inline InstabilityWitness instability_witness(const SystemModel& model, const ReducedFilterConfig& filter,
                                              const FeedbackLaw& law, std::size_t n,
                                              const InstabilityOptions& opt = {}) {
    const auto& decomp = model.decomposition;
    decomp.check_index(n);
    const std::size_t target = model.target_index;
    InstabilityWitness w;
    w.n = n;

    CMatrix rho0 = decomp.projector(n) / static_cast<Real>(decomp.block_dim(n));
    RVector q0 = RVector::Zero(filter.size());
    q0(static_cast<Index>(target)) = 1.0 - opt.q_start;
    q0(static_cast<Index>(n)) += opt.q_start;
    InitialConditions init{DensityMatrix(rho0), SimplexVector(q0), std::nullopt};

    SimulationConfig cfg;
    cfg.dt = opt.dt;
    cfg.horizon = opt.window;
    cfg.feedback_on = true;
    cfg.enable_perturbation = true;
    cfg.record_stride = static_cast<int>(std::max<long>(1, cfg.n_steps()));
    cfg.n_trajectories = opt.n_paths;
    cfg.seed = opt.seed;

    std::vector<Real> rates(static_cast<std::size_t>(opt.n_paths));
    for (int i = 0; i < opt.n_paths; ++i) {
        const auto rec = run_trajectory(model, filter, law, cfg, init, static_cast<std::uint64_t>(i));
        const Real qa = rec.q_hat.front()[static_cast<Index>(n)];
        const Real qb = rec.q_hat.back()[static_cast<Index>(n)];
        rates[static_cast<std::size_t>(i)] = (std::log(qa) - std::log(qb)) / (rec.times.back() - rec.times.front());
    }
    Real s = 0.0, s2 = 0.0;
    for (Real r : rates) {
        s += r;
        s2 += r * r;
    }
    const Real np = static_cast<Real>(opt.n_paths);
    w.drift = s / np;
    w.drift_std_error = std::sqrt(std::max(0.0, (s2 / np - w.drift * w.drift) / (np - 1.0)));

    std::vector<std::vector<Complex>> ls;
    std::vector<ChannelConstants> cs;
    for (const auto& ch : model.channels) {
        ls.push_back(extract_l_values(ch.L, decomp));
        ChannelConstants c;
        c.l = ls.back();
        c.theta_hat = ch.theta_hat();
        c.chi_lower = std::sqrt(ch.theta_lower(opt.exit_horizon) / c.theta_hat);
        c.chi_upper = std::sqrt(ch.theta_upper(opt.exit_horizon) / c.theta_hat);
        cs.push_back(std::move(c));
    }
    w.margin = check_instability_margin(cs, target, n);
    const int n_t = 50;
    Real acc = 0.0;
    for (int i = 0; i < n_t; ++i) {
        const Real t = opt.window * (i + 0.5) / n_t;
        Real v = 0.0;
        for (std::size_t k = 0; k < model.channels.size(); ++k) {
            const auto& ch = model.channels[k];
            v += ch.theta_hat() * r_kn(ls[k], target, n, std::sqrt(ch.theta(t) / ch.theta_hat()));
        }
        acc += -2.0 * v;
    }
    w.analytic_drift = acc / n_t;

    SimulationConfig ecfg = cfg;
    ecfg.horizon = opt.exit_horizon;
    ecfg.record_stride = 1000000;
    std::vector<Real> exits;
    const RVector e_target = RVector::Unit(filter.size(), static_cast<Index>(target));
    for (int i = 0; i < opt.exit_paths; ++i) {
        Real t_exit = -1.0;
        auto obs = [&](long, Real t, const CMatrix& rho, const SimplexVector& q, Real) {
            if (distance_to_subspace(rho, decomp, n) >= opt.lambda ||
                (q.components() - e_target).norm() >= opt.lambda) {
                t_exit = t;
                return false;
            }
            return true;
        };
        run_trajectory(model, filter, law, ecfg, init, 1000000u + static_cast<std::uint64_t>(i), obs);
        if (t_exit >= 0.0) exits.push_back(t_exit);
    }
    w.exit_paths = opt.exit_paths;
    w.exited = static_cast<int>(exits.size());
    if (!exits.empty()) {
        Real e = 0.0;
        for (Real x : exits) e += x;
        w.exit_time_mean = e / static_cast<Real>(exits.size());
        w.exit_time_median = quantile(exits, 0.5);
    }
    return w;
}

}  // namespace qfb
