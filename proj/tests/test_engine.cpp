#include "support.hpp"

#include <gtest/gtest.h>

using namespace qfb;
using namespace qfb::testing;

namespace {

Real max_abs(const CMatrix& m) { return m.cwiseAbs().maxCoeff(); }

SystemModel inert_model(Index n) {
    SystemModel m;
    m.decomposition = SubspaceDecomposition(std::vector<int>(static_cast<std::size_t>(n), 1));
    m.H0 = ScheduledMatrix::zero(n);
    m.H1 = CMatrix::Zero(n, n);
    MeasurementChannel ch;
    ch.L = CMatrix::Zero(n, n);
    m.channels.push_back(ch);
    m.perturbation = PerturbationModel::none(n);
    return m;
}

SimulationConfig short_sim(Real horizon, int n = 4) {
    SimulationConfig s;
    s.horizon = horizon;
    s.n_trajectories = n;
    s.record_stride = 5;
    s.n_workers = 1;
    return s;
}

}  // namespace

TEST(Noise, StreamsAreReproducibleAndDistinct) {
    WienerSource a(42, 0), b(42, 0), c(42, 1), d(43, 0);
    for (int i = 0; i < 10; ++i) {
        const Real x = a.standard_normal();
        EXPECT_EQ(x, b.standard_normal());
        EXPECT_NE(x, c.standard_normal());
        EXPECT_NE(x, d.standard_normal());
    }
}

TEST(Noise, IncrementVariance) {
    WienerSource w(7, 3);
    std::vector<Real> dW(1);
    Real s2 = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        w.increments(dW, 1e-3);
        s2 += dW[0] * dW[0];
    }
    EXPECT_NEAR(s2 / n, 1e-3, 5e-3 * 1e-3 * 5.0);
}

TEST(PlantStep, InertModel) {
    std::mt19937_64 rng(30);
    const auto m = inert_model(3);
    const CMatrix rho = random_state(3, rng);
    const auto s = step_plant(m, DensityMatrix(rho), 0.0, 0.0, {0.02}, 1e-3);
    EXPECT_LE(max_abs(s.rho.mat() - rho), 1e-15);
    EXPECT_EQ(s.dY[0], 0.02);
}

TEST(PlantStep, TargetInvariantUnderPresetPerturbation) {
    const auto c = preset_three_level(Modulation::slow, true);
    SubspaceDecomposition dec({1, 1, 1});
    std::mt19937_64 rng(31);
    std::normal_distribution<Real> g;
    CMatrix rho = diag3(1, 0, 0);
    PlantStepper plant(c.model, true);
    for (int i = 0; i < 1000; ++i) {
        const Real u = c.feedback(SimplexVector::vertex(3, 0));
        auto s = plant.step(rho, i * 1e-3, u, {std::sqrt(1e-3) * g(rng)}, 1e-3);
        rho = s.rho.mat();
        EXPECT_NEAR((dec.projector(0) * rho).trace().real(), 1.0, 1e-8);
    }
}

TEST(PlantStep, SingleStepDenseOracle) {
    const auto c = preset_three_level(Modulation::slow, true);
    const CMatrix r = CMatrix::Identity(3, 3) / 3.0;
    const Real dt = 1e-3, dW = 0.01;
    const CMatrix Jz = jz();
    // t = 0: omega = 1.5, gamma = 1.6, eta = 0.4, gamma_phi = 1.8, gamma_down = 1.5.
    CMatrix Ht = diag3(0.2, 0.1, 0.4);
    Ht(1, 2) = Ht(2, 1) = 0.5;
    CMatrix E12 = CMatrix::Zero(3, 3);
    E12(1, 2) = 1.0;
    auto D = [&](const CMatrix& L) {
        return CMatrix(L * r * L.adjoint() - 0.5 * (L.adjoint() * L * r + r * L.adjoint() * L));
    };
    const CMatrix H = 1.5 * Jz;
    CMatrix drift = -kI * (H * r - r * H) + 1.6 * D(Jz);
    drift += -kI * (Ht * r - r * Ht) + 1.8 * D(Jz) + 1.5 * D(E12);
    const Real tr = (2.0 * Jz * r).trace().real();
    const CMatrix G = Jz * r + r * Jz - tr * r;
    const CMatrix expect = r + drift * dt + std::sqrt(0.64) * G * dW;
    const auto s = step_plant(c.model, DensityMatrix(r), 0.0, 0.0, {dW}, dt);
    EXPECT_LE(max_abs(s.rho.mat() - expect), 1e-13);
    EXPECT_NEAR(s.dY[0], std::sqrt(0.64) * tr * dt + dW, 1e-17);
    EXPECT_TRUE(s.report.pass());
}

TEST(PlantStep, StateValidAfterProjection) {
    std::mt19937_64 rng(32);
    std::normal_distribution<Real> g;
    const auto c = preset_three_level(Modulation::fast, true);
    for (int i = 0; i < 2000; ++i) {
        const auto s = step_plant(c.model, DensityMatrix(random_state(3, rng)), 0.1 * i, std::abs(g(rng)),
                                  {0.2 * g(rng)}, 1e-2);
        EXPECT_TRUE(validate_state(s.rho.mat()).pass());
    }
}

TEST(Trajectory, ZeroHorizonHasOnlyInitialRecord) {
    const auto c = preset_three_level(Modulation::slow, true);
    auto sim = short_sim(0.0);
    const auto rec = run_trajectory(c.model, c.reduced_filter(), c.feedback, sim, c.initial(), 0);
    ASSERT_EQ(rec.size(), 1u);
    EXPECT_EQ(rec.times[0], 0.0);
    EXPECT_EQ(rec.d0[0], 1.0);
    EXPECT_EQ(rec.rank[0], 1);
}

TEST(Trajectory, UncontrolledExcitedStateStaysPut) {
    auto c = preset_three_level(Modulation::slow, false);
    auto sim = short_sim(2.0);
    sim.enable_perturbation = false;
    sim.feedback_on = false;
    const auto rec = run_trajectory(c.model, c.reduced_filter(), c.feedback, sim, c.initial(), 3);
    for (Real d : rec.d0) EXPECT_NEAR(d, 1.0, 1e-6);
}

TEST(Trajectory, DeterministicForSeed) {
    const auto c = preset_three_level(Modulation::fast, true);
    auto sim = short_sim(1.0);
    sim.record_y = true;
    const auto f = c.reduced_filter();
    const auto a = run_trajectory(c.model, f, c.feedback, sim, c.initial(), 5);
    const auto b = run_trajectory(c.model, f, c.feedback, sim, c.initial(), 5);
    const auto other = run_trajectory(c.model, f, c.feedback, sim, c.initial(), 6);
    EXPECT_EQ(a.d0, b.d0);
    EXPECT_EQ(a.u, b.u);
    EXPECT_EQ(a.y_increments, b.y_increments);
    EXPECT_NE(a.d0, other.d0);
}

TEST(Trajectory, SeriesShareLengthAndOccupationsNormalized) {
    const auto c = preset_three_level(Modulation::fast, true);
    auto sim = short_sim(0.503);
    sim.record_y = true;
    sim.enable_full_filter = true;
    const auto rec = run_trajectory(c.model, c.reduced_filter(), c.feedback, sim, c.initial(), 0);
    const std::size_t n = rec.size();
    EXPECT_EQ(n, 102u);  // every 5th of 503 steps plus the initial and final states
    for (auto len : {rec.d0.size(), rec.v_qsr.size(), rec.q_hat.size(), rec.u.size(), rec.purity.size(),
                     rec.rank.size(), rec.occupations.size(), rec.y_increments.size(),
                     rec.full_filter_occupations.size()})
        EXPECT_EQ(len, n);
    for (const auto& p : rec.occupations) EXPECT_NEAR(p.sum(), 1.0, 1e-8);
    EXPECT_NEAR(rec.times.back(), 0.503, 1e-12);
}

TEST(Trajectory, ObserverStopsEarly) {
    const auto c = preset_three_level(Modulation::fast, true);
    auto sim = short_sim(1.0);
    long seen = 0;
    const auto rec = run_trajectory(c.model, c.reduced_filter(), c.feedback, sim, c.initial(), 0,
                                    [&](long i, Real, const CMatrix&, const SimplexVector&, Real) {
                                        seen = i;
                                        return i < 12;
                                    });
    EXPECT_EQ(seen, 12);
    EXPECT_NEAR(rec.times.back(), 0.013, 1e-12);
}

TEST(MonteCarlo, SingleTrajectoryEqualsRecord) {
    const auto c = preset_three_level(Modulation::fast, true);
    auto sim = short_sim(0.5, 1);
    const auto f = c.reduced_filter();
    const auto mc = run_monte_carlo(c.model, f, c.feedback, sim, c.initial());
    const auto rec = run_trajectory(c.model, f, c.feedback, sim, c.initial(), 0);
    EXPECT_EQ(mc.d0_mean, rec.d0);
    EXPECT_EQ(mc.d0_q10, rec.d0);
    EXPECT_EQ(mc.d0_q90, rec.d0);
    EXPECT_EQ(mc.v_qsr_mean, rec.v_qsr);
}

TEST(MonteCarlo, IndependentOfWorkerCount) {
    const auto c = preset_three_level(Modulation::fast, true);
    auto sim = short_sim(0.3, 6);
    const auto f = c.reduced_filter();
    sim.n_workers = 1;
    const auto a = run_monte_carlo(c.model, f, c.feedback, sim, c.initial());
    sim.n_workers = 3;
    const auto b = run_monte_carlo(c.model, f, c.feedback, sim, c.initial());
    EXPECT_EQ(a.d0_mean, b.d0_mean);
    EXPECT_EQ(a.d0_q90, b.d0_q90);
    EXPECT_EQ(a.v_qsr_mean, b.v_qsr_mean);
    EXPECT_EQ(a.final_d0, b.final_d0);
}

TEST(MonteCarlo, RankAndStateDiagnosticsClean) {
    const auto c = preset_three_level(Modulation::slow, true);
    auto sim = short_sim(2.0, 8);
    const auto mc = run_monte_carlo(c.model, c.reduced_filter(), c.feedback, sim, c.initial());
    EXPECT_EQ(mc.n_aborted, 0);
    EXPECT_EQ(mc.totals.state_failures, 0);
    EXPECT_EQ(mc.totals.simplex_failures, 0);
}

TEST(Deterministic, UnitaryWhenUnmeasured) {
    std::mt19937_64 rng(33);
    auto m = inert_model(3);
    m.H0 = ScheduledMatrix(random_hermitian(3, rng));
    m.H1 = random_hermitian(3, rng);
    RMatrix G(3, 3);
    G << -1, 1, 0, 1, -2, 1, 0, 1, -1;
    const auto f = make_reduced_filter_config(G, {{0.0, 0.0, 0.0}}, {0.5});
    DeterministicConfig dc;
    dc.dt = 1e-3;
    dc.horizon = 5.0;
    dc.feedback_on = false;
    CMatrix rho = random_state(3, rng);
    Eigen::SelfAdjointEigenSolver<CMatrix> es(rho);
    const CVector v = es.eigenvectors().col(2);
    const CMatrix pure = v * v.adjoint();
    const auto tr = run_deterministic(m, f, FeedbackLaw{}, {Schedule::constant(0.0)}, SimplexVector::uniform(3),
                                      DensityMatrix(pure), dc);
    for (Real p : tr.purity) EXPECT_NEAR(p, 1.0, 1e-8);
    EXPECT_LE(tr.max_trace_defect, 1e-8);
}

TEST(Deterministic, RecurrenceWitness) {
    const auto c = preset_three_level(Modulation::slow, true);
    DeterministicConfig dc;
    dc.dt = 1e-3;
    dc.horizon = 20.0;
    dc.record_stride = 100;
    const auto tr = run_deterministic(c.model, c.reduced_filter(), c.feedback, {Schedule::constant(3.0)},
                                      SimplexVector(c.q0), DensityMatrix(c.rho0), dc);
    EXPECT_LT(*std::min_element(tr.d0.begin(), tr.d0.end()), 0.1);
    EXPECT_LE(tr.max_trace_defect, 1e-8);
    EXPECT_LE(tr.max_simplex_defect, 1e-8);
}

TEST(Deterministic, FourthOrderConvergence) {
    const auto c = preset_three_level(Modulation::slow, true);
    const auto f = c.reduced_filter();
    CMatrix rho0 = CMatrix::Identity(3, 3) / 3.0;
    rho0(0, 1) = rho0(1, 0) = 0.1;
    auto endpoint = [&](Real dt) {
        DeterministicConfig dc;
        dc.dt = dt;
        dc.horizon = 1.0;
        dc.record_stride = 1000000;
        const auto tr = run_deterministic(c.model, f, c.feedback, {Schedule::sine(0.5, 0.5, 1.0)},
                                          SimplexVector(c.q0), DensityMatrix(rho0), dc);
        return tr.rho_final;
    };
    const CMatrix a = endpoint(0.02), b = endpoint(0.01), d = endpoint(0.005);
    const Real ratio = hs_norm(a - b) / hs_norm(b - d);
    EXPECT_GT(ratio, 14.0);
    EXPECT_LT(ratio, 18.0);
}
