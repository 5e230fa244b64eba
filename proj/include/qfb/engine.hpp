// engine.hpp
// Coupled plant + filter trajectories: counter-based noise, the plant
// Euler-Maruyama step with projection, single trajectories, Monte Carlo
// batches and the deterministic RK4 runner for the Stratonovich fields.

#pragma once

#include "qfb/filtering.hpp"
#include "qfb/observables.hpp"

#include <atomic>
#include <functional>
#include <cstdint>
#include <random>
#include <thread>

namespace qfb {

// ---------------------------------------------------------------------------
// Noise
// ---------------------------------------------------------------------------

inline constexpr std::uint64_t splitmix64_mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Stream key for trajectory `index` under a global seed.
inline constexpr std::uint64_t substream_key(std::uint64_t seed, std::uint64_t index) {
    return splitmix64_mix(splitmix64_mix(seed ^ 0x6A09E667F3BCC909ULL) +
                          splitmix64_mix(index + 0x9E3779B97F4A7C15ULL));
}

/// Counter-based generator: output n is mix(key + n * golden). Satisfies
/// UniformRandomBitGenerator.
class CounterRng {
public:
    using result_type = std::uint64_t;

    explicit CounterRng(std::uint64_t key = 0) : key_(key) {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return ~result_type{0}; }

    result_type operator()() { return splitmix64_mix(key_ + (++counter_) * 0x9E3779B97F4A7C15ULL); }

    std::uint64_t counter() const noexcept { return counter_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

class WienerSource {
public:
    WienerSource(std::uint64_t seed, std::uint64_t index) : rng_(substream_key(seed, index)) {}

    Real standard_normal() { return normal_(rng_); }

    void increments(std::vector<Real>& dW, Real dt) {
        const Real s = std::sqrt(dt);
        for (auto& x : dW) x = s * normal_(rng_);
    }

private:
    CounterRng rng_;
    std::normal_distribution<Real> normal_{0.0, 1.0};
};

// ---------------------------------------------------------------------------
// Plant step
// ---------------------------------------------------------------------------

struct PlantStep {
    DensityMatrix rho;
    std::vector<Real> dY;
    Real correction = 0;  // HS size of the projection
    StateReport report;
};

/// Reusable plant stepper; precomputes products of the fixed operators.
class PlantStepper {
public:
    PlantStepper(const SystemModel& model, bool with_perturbation)
        : model_(model), with_pert_(with_perturbation) {
        model.check_dimensions();
        const Index n = model.dim();
        for (const auto& ch : model.channels) {
            Ld_.push_back(ch.L.adjoint());
            LdL_.push_back(ch.L.adjoint() * ch.L);
        }
        if (with_pert_) {
            for (const auto& c : model.perturbation.C_ops) {
                Md_.push_back(c.M.adjoint());
                MdM_.push_back(c.M.adjoint() * c.M);
            }
        }
        H_.resize(n, n);
        Ht_.resize(n, n);
        next_.resize(n, n);
        tmp_.resize(n, n);
        tmp2_.resize(n, n);
    }

    std::size_t num_channels() const { return model_.channels.size(); }

    /// Euler-Maruyama step; dY is evaluated at the pre-step state.
    PlantStep step(const CMatrix& rho, Real t, Real u, const std::vector<Real>& dW, Real dt) {
        check_lengths(dW.size(), model_.channels.size(), "step_plant");
        for (Real x : dW)
            require(std::isfinite(x), ErrorCode::propagation, "step_plant: non-finite dW");
        require_square(rho, model_.dim(), "step_plant");
        PlantStep out;
        out.dY.resize(dW.size());

        model_.H0.eval_into(t, H_);
        if (u != 0.0) H_.noalias() += u * model_.H1;
        next_ = rho;
        tmp_.noalias() = H_ * rho;
        tmp2_.noalias() = rho * H_;
        next_ += (-kI * dt) * (tmp_ - tmp2_);

        if (with_pert_) {
            const auto& ht = model_.perturbation.H_tilde;
            if (!ht.is_zero()) {
                ht.eval_into(t, Ht_);
                tmp_.noalias() = Ht_ * rho;
                tmp2_.noalias() = rho * Ht_;
                next_ += (-kI * dt) * (tmp_ - tmp2_);
            }
            for (std::size_t c = 0; c < model_.perturbation.C_ops.size(); ++c) {
                const auto& op = model_.perturbation.C_ops[c];
                add_dissipator(op.M, Md_[c], MdM_[c], rho, op.rate.eval(t) * dt);
            }
        }

        for (std::size_t k = 0; k < model_.channels.size(); ++k) {
            const auto& ch = model_.channels[k];
            add_dissipator(ch.L, Ld_[k], LdL_[k], rho, ch.gamma.eval(t) * dt);
            const Real theta = ch.theta(t);
            const Real sq = std::sqrt(std::max(0.0, theta));
            const Complex c = (ch.L * rho).trace() + (Ld_[k] * rho).trace();
            out.dY[k] = sq * c.real() * dt + dW[k];
            if (sq != 0.0 && dW[k] != 0.0) {
                tmp_.noalias() = ch.L * rho;
                tmp_.noalias() += rho * Ld_[k];
                tmp_ -= c * rho;
                next_ += (sq * dW[k]) * tmp_;
            }
        }
        require(next_.allFinite(), ErrorCode::propagation, "step_plant: non-finite state");
        auto proj = project_to_states(next_);
        out.correction = proj.correction;
        out.report = validate_state(proj.rho);
        out.rho = DensityMatrix(std::move(proj.rho));
        return out;
    }

private:
    void add_dissipator(const CMatrix& L, const CMatrix& Ld, const CMatrix& LdL, const CMatrix& rho,
                        Real scale) {
        if (scale == 0.0) return;
        tmp_.noalias() = L * rho;
        tmp2_.noalias() = tmp_ * Ld;
        tmp2_.noalias() -= 0.5 * (LdL * rho);
        tmp2_.noalias() -= 0.5 * (rho * LdL);
        next_ += scale * tmp2_;
    }

    const SystemModel& model_;
    bool with_pert_;
    std::vector<CMatrix> Ld_, LdL_, Md_, MdM_;
    CMatrix H_, Ht_, next_, tmp_, tmp2_;
};

inline PlantStep step_plant(const SystemModel& model, const DensityMatrix& rho, Real t, Real u,
                            const std::vector<Real>& dW, Real dt, bool with_perturbation = true) {
    require(dt > 0.0, ErrorCode::configuration, "dt must be > 0");
    PlantStepper s(model, with_perturbation);
    return s.step(rho.mat(), t, u, dW, dt);
}

// ---------------------------------------------------------------------------
// Trajectories
// ---------------------------------------------------------------------------

struct SimulationConfig {
    Real dt = 1e-3;
    Real horizon = 25.0;
    int n_trajectories = 100;
    std::uint64_t seed = 42;
    int record_stride = 10;
    bool enable_full_filter = false;
    bool enable_perturbation = true;
    bool feedback_on = true;
    bool record_y = false;
    bool keep_records = true;
    /// Worker threads for Monte Carlo; results do not depend on it.
    int n_workers = 0;
    /// Thresholds used in diagnostics.
    Real correction_tol = 1e-8;
    Real rank_eps = 1e-8;

    void validate() const {
        require(dt > 0.0 && std::isfinite(dt), ErrorCode::configuration, "dt must be > 0");
        require(horizon == 0.0 || horizon >= dt, ErrorCode::configuration,
                "horizon must be 0 or >= dt");
        require(n_trajectories >= 1, ErrorCode::configuration, "n_trajectories must be >= 1");
        require(record_stride >= 1, ErrorCode::configuration, "record_stride must be >= 1");
    }
    long n_steps() const { return horizon == 0.0 ? 0 : std::lround(horizon / dt); }
};

struct InitialConditions {
    DensityMatrix rho0;
    SimplexVector q0;
    std::optional<DensityMatrix> rho_hat0;  // full filter; maximally mixed if absent
};

struct TrajectoryDiagnostics {
    long steps = 0;
    long plant_corrections_over_tol = 0;
    long filter_corrections_over_tol = 0;
    Real max_plant_correction = 0;
    Real max_filter_correction = 0;
    long state_failures = 0;
    long simplex_failures = 0;
    long rank_decreases = 0;
    bool aborted = false;
    std::string abort_message;

    void merge(const TrajectoryDiagnostics& o) {
        steps += o.steps;
        plant_corrections_over_tol += o.plant_corrections_over_tol;
        filter_corrections_over_tol += o.filter_corrections_over_tol;
        max_plant_correction = std::max(max_plant_correction, o.max_plant_correction);
        max_filter_correction = std::max(max_filter_correction, o.max_filter_correction);
        state_failures += o.state_failures;
        simplex_failures += o.simplex_failures;
        rank_decreases += o.rank_decreases;
    }
};

struct TrajectoryRecord {
    std::vector<Real> times;
    std::vector<RVector> occupations;
    std::vector<Real> d0;
    std::vector<Real> v_qsr;
    std::vector<SimplexVector> q_hat;
    std::vector<Real> u;
    std::vector<Real> purity;
    std::vector<int> rank;
    std::vector<std::vector<Real>> y_increments;  // summed over each record interval
    std::vector<RVector> full_filter_occupations;
    TrajectoryDiagnostics diagnostics;

    std::size_t size() const { return times.size(); }
};

/// Optional per-step observer: (step, t_after, rho, q, u). Returning false
/// ends the trajectory after recording the current state.
using StepObserver = std::function<bool(long, Real, const CMatrix&, const SimplexVector&, Real)>;

inline TrajectoryRecord run_trajectory(const SystemModel& model, const ReducedFilterConfig& filter,
                                       const FeedbackLaw& law_in, const SimulationConfig& cfg,
                                       const InitialConditions& init, std::uint64_t traj_index,
                                       const StepObserver& observer = {}) {
    cfg.validate();
    const FeedbackLaw law = law_in;
    if (cfg.feedback_on) law.validate();
    require(init.rho0.dim() == model.dim(), ErrorCode::dimension_mismatch, "initial state");
    require(init.q0.size() == filter.size(), ErrorCode::dimension_mismatch, "initial filter");
    require(filter.size() == static_cast<Index>(model.decomposition.num_blocks()),
            ErrorCode::dimension_mismatch, "filter size vs blocks");
    const std::size_t m = model.channels.size();
    require(filter.channels.size() == m, ErrorCode::dimension_mismatch, "filter channels");

    PlantStepper plant(model, cfg.enable_perturbation);
    WienerSource noise(cfg.seed, traj_index);
    const auto& decomp = model.decomposition;
    const std::size_t target = model.target_index;
    const CMatrix H0_nominal = model.H0.nominal();

    TrajectoryRecord rec;
    CMatrix rho = init.rho0.mat();
    SimplexVector q = init.q0;
    DensityMatrix rho_hat =
        init.rho_hat0 ? *init.rho_hat0 : DensityMatrix::maximally_mixed(model.dim());
    Real u = cfg.feedback_on ? law(q) : 0.0;
    std::vector<Real> dW(m), y_acc(m, 0.0);

    auto record = [&](Real t) {
        const RVector p = occupations(rho, decomp);
        rec.times.push_back(t);
        rec.occupations.push_back(p);
        rec.d0.push_back(distance_to_subspace(rho, decomp, target));
        rec.v_qsr.push_back(lyapunov_qsr_from_occupations(p));
        rec.q_hat.push_back(q);
        rec.u.push_back(u);
        rec.purity.push_back(purity(rho));
        const int r = numerical_state_rank(rho, cfg.rank_eps);
        if (!rec.rank.empty() && r < rec.rank.back()) ++rec.diagnostics.rank_decreases;
        rec.rank.push_back(r);
        if (cfg.record_y) {
            rec.y_increments.push_back(y_acc);
            std::fill(y_acc.begin(), y_acc.end(), 0.0);
        }
        if (cfg.enable_full_filter) rec.full_filter_occupations.push_back(occupations(rho_hat.mat(), decomp));
    };

    record(0.0);
    const long n_steps = cfg.n_steps();
    auto& diag = rec.diagnostics;
    try {
        for (long i = 0; i < n_steps; ++i) {
            const Real t = static_cast<Real>(i) * cfg.dt;
            noise.increments(dW, cfg.dt);
            PlantStep ps = plant.step(rho, t, u, dW, cfg.dt);
            if (!ps.report.pass()) ++diag.state_failures;
            if (ps.correction > cfg.correction_tol) ++diag.plant_corrections_over_tol;
            diag.max_plant_correction = std::max(diag.max_plant_correction, ps.correction);

            Real fc = 0.0;
            q = step_reduced_filter(filter, q, u, ps.dY, cfg.dt, &fc);
            if (!q.is_valid()) ++diag.simplex_failures;
            if (fc > cfg.correction_tol) ++diag.filter_corrections_over_tol;
            diag.max_filter_correction = std::max(diag.max_filter_correction, fc);

            if (cfg.enable_full_filter)
                rho_hat = step_full_filter(model, H0_nominal, rho_hat, u, ps.dY, cfg.dt);
            if (cfg.record_y)
                for (std::size_t k = 0; k < m; ++k) y_acc[k] += ps.dY[k];

            rho = std::move(ps.rho.mat());
            u = cfg.feedback_on ? law(q) : 0.0;
            ++diag.steps;
            const Real t_next = static_cast<Real>(i + 1) * cfg.dt;
            const bool go_on = !observer || observer(i, t_next, rho, q, u);
            if ((i + 1) % cfg.record_stride == 0 || i + 1 == n_steps || !go_on) record(t_next);
            if (!go_on) break;
        }
    } catch (const Error& e) {
        diag.aborted = true;
        diag.abort_message = e.what();
    }
    return rec;
}

// ---------------------------------------------------------------------------
// Monte Carlo
// ---------------------------------------------------------------------------

struct MonteCarloResult {
    std::vector<Real> times;
    std::vector<Real> d0_mean, d0_q10, d0_q90, v_qsr_mean;
    std::vector<RVector> occupations_mean;
    std::vector<Real> final_d0;           // per completed trajectory, index order
    std::vector<RVector> final_occupations;
    std::vector<std::optional<ExponentFit>> d0_fits;  // per completed trajectory
    std::vector<std::uint64_t> completed_indices;
    std::vector<TrajectoryRecord> records;  // empty unless keep_records
    TrajectoryDiagnostics totals;
    int n_aborted = 0;
    std::vector<std::string> abort_messages;
};

inline int default_workers() {
    const unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
}

/// Runs `count` independent jobs on a worker pool; job i writes only slot i.
template <class Job>
void parallel_for_index(std::size_t count, int n_workers, Job&& job) {
    const int w = std::max(1, std::min<int>(n_workers <= 0 ? default_workers() : n_workers,
                                            static_cast<int>(count)));
    if (w == 1) {
        for (std::size_t i = 0; i < count; ++i) job(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(w));
    for (int k = 0; k < w; ++k)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < count; i = next++) job(i);
        });
    for (auto& th : pool) th.join();
}

inline MonteCarloResult run_monte_carlo(const SystemModel& model, const ReducedFilterConfig& filter,
                                        const FeedbackLaw& law, const SimulationConfig& cfg,
                                        const InitialConditions& init,
                                        Real fit_start_fraction = 0.2) {
    cfg.validate();
    const auto n = static_cast<std::size_t>(cfg.n_trajectories);
    std::vector<TrajectoryRecord> recs(n);
    parallel_for_index(n, cfg.n_workers, [&](std::size_t i) {
        recs[i] = run_trajectory(model, filter, law, cfg, init, i);
    });

    MonteCarloResult out;
    std::vector<const TrajectoryRecord*> done;
    for (std::size_t i = 0; i < n; ++i) {
        out.totals.merge(recs[i].diagnostics);
        if (recs[i].diagnostics.aborted) {
            ++out.n_aborted;
            out.abort_messages.push_back("trajectory " + std::to_string(i) + ": " +
                                         recs[i].diagnostics.abort_message);
        } else {
            done.push_back(&recs[i]);
            out.completed_indices.push_back(i);
        }
    }
    if (!done.empty()) {
        out.times = done.front()->times;
        const std::size_t T = out.times.size();
        const Index nb = done.front()->occupations.front().size();
        std::vector<Real> col(done.size());
        for (std::size_t s = 0; s < T; ++s) {
            Real vs = 0.0;
            RVector occ = RVector::Zero(nb);
            for (std::size_t j = 0; j < done.size(); ++j) {
                col[j] = done[j]->d0[s];
                vs += done[j]->v_qsr[s];
                occ += done[j]->occupations[s];
            }
            Real ds = 0.0;
            for (Real x : col) ds += x;
            const Real inv = 1.0 / static_cast<Real>(done.size());
            out.d0_mean.push_back(ds * inv);
            out.v_qsr_mean.push_back(vs * inv);
            out.occupations_mean.push_back(occ * inv);
            out.d0_q10.push_back(quantile(col, 0.1));
            out.d0_q90.push_back(quantile(col, 0.9));
        }
        const Real t_end = out.times.back();
        for (const auto* r : done) {
            out.final_d0.push_back(r->d0.back());
            out.final_occupations.push_back(r->occupations.back());
            try {
                out.d0_fits.push_back(fit_exponent(r->times, r->d0, fit_start_fraction * t_end, t_end));
            } catch (const Error&) {
                out.d0_fits.push_back(std::nullopt);
            }
        }
    }
    if (cfg.keep_records) out.records = std::move(recs);
    return out;
}

// ---------------------------------------------------------------------------
// Deterministic Stratonovich control system
// ---------------------------------------------------------------------------

struct DeterministicConfig {
    Real dt = 1e-3;
    Real horizon = 10.0;
    bool feedback_on = true;
    bool enable_perturbation = true;
    int record_stride = 10;
};

struct DeterministicTrajectory {
    std::vector<Real> times;
    std::vector<Real> d0;
    std::vector<RVector> occupations;
    std::vector<RVector> q;
    std::vector<Real> purity;
    std::vector<Real> u;
    CMatrix rho_final;
    RVector q_final;
    Real max_trace_defect = 0;
    Real max_simplex_defect = 0;  // |sum q - 1| and negative parts
};

/// Classical RK4 on (rho_v, q_v) driven by control signals v_k(t).
inline DeterministicTrajectory run_deterministic(const SystemModel& model,
                                                 const ReducedFilterConfig& filter,
                                                 const FeedbackLaw& law,
                                                 const std::vector<Schedule>& v,
                                                 const SimplexVector& q0, const DensityMatrix& rho0,
                                                 const DeterministicConfig& cfg) {
    require(cfg.dt > 0.0, ErrorCode::configuration, "dt must be > 0");
    require(cfg.horizon >= 0.0, ErrorCode::configuration, "horizon must be >= 0");
    require(cfg.record_stride >= 1, ErrorCode::configuration, "record_stride must be >= 1");
    check_lengths(v.size(), model.channels.size(), "run_deterministic: control signals");
    if (cfg.feedback_on) law.validate();
    const auto& decomp = model.decomposition;

    struct State {
        CMatrix rho;
        RVector q;
    };
    auto field = [&](Real t, const State& s) {
        const Real u = cfg.feedback_on ? law(s.q) : 0.0;
        std::vector<Real> V(v.size());
        for (std::size_t k = 0; k < v.size(); ++k) {
            const auto& ch = model.channels[k];
            V[k] = v[k].eval(t) + std::sqrt(std::max(0.0, ch.theta(t))) *
                                      ((ch.L * s.rho).trace() + (ch.L.adjoint() * s.rho).trace()).real();
        }
        return State{stratonovich_plant_field(model, t, u, s.rho, V, cfg.enable_perturbation),
                     stratonovich_filter_field(filter.Gamma, filter.channels, u, s.q, V)};
    };

    DeterministicTrajectory out;
    State s{rho0.mat(), q0.components()};
    auto record = [&](Real t) {
        out.times.push_back(t);
        out.d0.push_back(distance_to_subspace(s.rho, decomp, model.target_index));
        out.occupations.push_back(occupations(s.rho, decomp));
        out.q.push_back(s.q);
        out.purity.push_back(purity(s.rho));
        out.u.push_back(cfg.feedback_on ? law(s.q) : 0.0);
        out.max_trace_defect = std::max(out.max_trace_defect, std::abs(s.rho.trace() - Complex(1.0)));
        out.max_simplex_defect =
            std::max({out.max_simplex_defect, std::abs(s.q.sum() - 1.0), -s.q.minCoeff()});
    };
    record(0.0);
    const long n_steps = cfg.horizon == 0.0 ? 0 : std::lround(cfg.horizon / cfg.dt);
    const Real h = cfg.dt;
    for (long i = 0; i < n_steps; ++i) {
        const Real t = static_cast<Real>(i) * h;
        const State k1 = field(t, s);
        const State k2 = field(t + 0.5 * h, {s.rho + 0.5 * h * k1.rho, s.q + 0.5 * h * k1.q});
        const State k3 = field(t + 0.5 * h, {s.rho + 0.5 * h * k2.rho, s.q + 0.5 * h * k2.q});
        const State k4 = field(t + h, {s.rho + h * k3.rho, s.q + h * k3.q});
        s.rho += (h / 6.0) * (k1.rho + 2.0 * k2.rho + 2.0 * k3.rho + k4.rho);
        s.q += (h / 6.0) * (k1.q + 2.0 * k2.q + 2.0 * k3.q + k4.q);
        require(s.rho.allFinite() && s.q.allFinite(), ErrorCode::propagation,
                "run_deterministic: non-finite state");
        if ((i + 1) % cfg.record_stride == 0 || i + 1 == n_steps) record(static_cast<Real>(i + 1) * h);
    }
    out.rho_final = s.rho;
    out.q_final = s.q;
    return out;
}

}  // namespace qfb
