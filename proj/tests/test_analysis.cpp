#include "support.hpp"

#include <gtest/gtest.h>

using namespace qfb;
using namespace qfb::testing;

namespace {

RVector vec(std::initializer_list<Real> xs) {
    RVector v(static_cast<Index>(xs.size()));
    Index i = 0;
    for (Real x : xs) v(i++) = x;
    return v;
}

}  // namespace

TEST(Occupations, Examples) {
    SubspaceDecomposition d3({1, 1, 1});
    EXPECT_LE((occupations(CMatrix::Identity(3, 3) / 3.0, d3) - RVector::Constant(3, 1.0 / 3.0)).norm(), 1e-15);
    EXPECT_EQ(occupations(diag3(0, 0, 1), d3), vec({0, 0, 1}));
    SubspaceDecomposition d12({1, 2});
    EXPECT_LE((occupations(diag3(0.2, 0.3, 0.5), d12) - vec({0.2, 0.8})).norm(), 1e-15);
}

TEST(Occupations, SumToOne) {
    std::mt19937_64 rng(50);
    SubspaceDecomposition d({2, 1, 3});
    for (int i = 0; i < 1000; ++i) EXPECT_NEAR(occupations(random_state(6, rng), d).sum(), 1.0, 1e-10);
}

TEST(LyapunovQsr, Examples) {
    SubspaceDecomposition d3({1, 1, 1});
    EXPECT_EQ(lyapunov_qsr(diag3(1, 0, 0), d3), 0.0);
    EXPECT_NEAR(lyapunov_qsr(CMatrix::Identity(3, 3) / 3.0, d3), 2.0, 1e-15);
    EXPECT_NEAR(lyapunov_qsr(diag3(0.5, 0.5, 0), d3), 1.0, 1e-15);
}

TEST(LyapunovQsr, PairSumOracle) {
    std::mt19937_64 rng(51);
    SubspaceDecomposition d({1, 2, 1, 1});
    for (int i = 0; i < 500; ++i) {
        const RVector p = occupations(random_state(5, rng), d);
        Real v = 0.0;
        for (Index a = 0; a < p.size(); ++a)
            for (Index b = 0; b < p.size(); ++b)
                if (a != b) v += std::sqrt(p(a) * p(b));
        EXPECT_NEAR(lyapunov_qsr_from_occupations(p), v, 1e-13);
        EXPECT_GE(v, 0.0);
    }
}

TEST(Psi, Examples) {
    const RVector l = vec({1, 0, -1});
    EXPECT_NEAR(psi_k_n(l, vec({0.5, 0.3, 0.2}), 0), 0.7, 1e-15);
    for (Index n = 0; n < 3; ++n) EXPECT_EQ(psi_k_n(l, RVector::Unit(3, n), n), 0.0);
    EXPECT_THROW(psi_k_n(l, vec({0.5, 0.5}), 0), Error);
}

TEST(Psi, TwinOfPhi) {
    std::mt19937_64 rng(52);
    SubspaceDecomposition d3({1, 1, 1});
    const RVector l = vec({1, 0, -1});
    for (int i = 0; i < 1000; ++i) {
        const RVector p = occupations(random_state(3, rng), d3);
        for (Index n = 0; n < 3; ++n) EXPECT_EQ(psi_k_n(l, p, n), phi_k_n(l, p, n));
    }
}

TEST(Psi, SandwichInequalities) {
    std::mt19937_64 rng(53);
    const auto c = preset_three_level(Modulation::slow, true);
    const auto l = extract_l_values(c.model.channels[0].L, c.model.decomposition);
    ChannelConstants k;
    channel_spread(l, 0, k);
    const RVector re = real_parts(l);
    long bad = 0;
    for (int i = 0; i < 100000; ++i) {
        const RVector p = occupations(random_state(3, rng), c.model.decomposition);
        const Real psi = psi_k_n(re, p, 0), w = 1.0 - p(0);
        if (!(k.c_bar * w >= psi - 1e-14 && psi >= k.c_under * w - 1e-14)) ++bad;
        const RVector q = random_simplex(3, rng);
        const Real phi = phi_k_n(re, q, 0), wq = 1.0 - q(0);
        if (!(k.c_bar * wq >= phi - 1e-14 && phi >= k.c_under * wq - 1e-14)) ++bad;
    }
    EXPECT_EQ(bad, 0);
}

TEST(PurityRank, Examples) {
    EXPECT_EQ(purity(diag3(1, 0, 0)), 1.0);
    EXPECT_EQ(numerical_state_rank(diag3(1, 0, 0)), 1);
    EXPECT_NEAR(purity(CMatrix::Identity(3, 3) / 3.0), 1.0 / 3.0, 1e-15);
    EXPECT_EQ(numerical_state_rank(CMatrix::Identity(3, 3) / 3.0), 3);
    EXPECT_NEAR(purity(diag3(0.9, 0.1, 0)), 0.82, 1e-15);
    EXPECT_EQ(numerical_state_rank(diag3(0.9, 0.1, 0)), 2);
    EXPECT_EQ(numerical_state_rank(diag3(1.0 - 1e-9, 1e-9, 0)), 1);
}

TEST(DistanceBound, SquaredDistanceAtMostTwiceLeakage) {
    std::mt19937_64 rng(54);
    std::uniform_int_distribution<int> rk(1, 3);
    std::normal_distribution<Real> g;
    SubspaceDecomposition d3({1, 1, 1});
    Real worst = 0.0;
    for (int i = 0; i < 100000; ++i) {
        const int r = rk(rng);
        CMatrix G(3, r);
        for (Index a = 0; a < 3; ++a)
            for (Index b = 0; b < r; ++b) G(a, b) = Complex(g(rng), g(rng));
        CMatrix rho = G * G.adjoint();
        rho /= rho.trace().real();
        const Real d0 = distance_to_subspace(rho, d3, 0);
        const Real leak = 1.0 - rho(0, 0).real();
        worst = std::max(worst, d0 * d0 - 2.0 * leak);
    }
    EXPECT_LE(worst, 1e-14);
}

TEST(FitExponent, Examples) {
    std::vector<Real> t, v, flat;
    for (int i = 0; i <= 100; ++i) {
        t.push_back(0.1 * i);
        v.push_back(std::exp(-0.5 * t.back()));
        flat.push_back(3.0);
    }
    const auto f = fit_exponent(t, v, 0.0, 10.0);
    EXPECT_NEAR(f.slope, -0.5, 1e-9);
    EXPECT_NEAR(f.intercept, 0.0, 1e-9);
    EXPECT_EQ(f.n_points, 101);
    EXPECT_NEAR(f.r_squared, 1.0, 1e-12);
    EXPECT_NEAR(fit_exponent(t, flat, 0.0, 10.0).slope, 0.0, 1e-15);
    const auto w = fit_exponent(t, v, 2.0, 8.0);
    EXPECT_EQ(w.n_points, 61);
    EXPECT_NEAR(w.slope, -0.5, 1e-9);
}

TEST(FitExponent, InsufficientPoints) {
    std::vector<Real> t, v;
    for (int i = 0; i <= 100; ++i) {
        t.push_back(0.1 * i);
        v.push_back(i < 95 ? 0.0 : 1.0);
    }
    try {
        fit_exponent(t, v, 0.0, 10.0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::insufficient_points);
    }
    EXPECT_THROW(fit_exponent(t, v, 5.0, 5.0), Error);
}

TEST(ClassifyLimit, Examples) {
    EXPECT_EQ(classify_limit(vec({1, 0, 0})), std::optional<std::size_t>(0));
    EXPECT_EQ(classify_limit(vec({0.5, 0.5, 0})), std::nullopt);
    EXPECT_EQ(classify_limit(vec({0.005, 0.005, 0.99})), std::optional<std::size_t>(2));
}

TEST(Quantile, Interpolates) {
    EXPECT_EQ(quantile({3.0, 1.0, 2.0}, 0.5), 2.0);
    EXPECT_NEAR(quantile({0.0, 10.0}, 0.1), 1.0, 1e-15);
    EXPECT_THROW(quantile({}, 0.5), Error);
}

TEST(GeneratorOracle, InvariantPoint) {
    const auto m = qnd_oracle_model();
    const auto r = generator_oracle_qsr(m, diag3(1, 0, 0), 1e-4, 1000);
    EXPECT_EQ(r.analytic, 0.0);
    EXPECT_EQ(r.empirical, 0.0);
}

TEST(GeneratorOracle, ClosedFormAtMaximallyMixed) {
    const auto m = qnd_oracle_model();
    // ordered pairs (0,1),(1,2) differ by 1, (0,2) by 2: 2 * (1 + 1 + 4) / 3 weighted by theta_hat
    const Real expect = -0.5 * (2.0 * (1.0 + 1.0 + 4.0) / 3.0) * 0.6;
    EXPECT_NEAR(qsr_generator_closed_form(m, CMatrix::Identity(3, 3) / 3.0, 0.0), expect, 1e-15);
}

TEST(GeneratorOracle, EmpiricalMatchesClosedForm) {
    const auto m = qnd_oracle_model();
    const auto r = generator_oracle_qsr(m, CMatrix::Identity(3, 3) / 3.0, 1e-4, 100000);
    EXPECT_LE(std::abs(r.empirical - r.analytic), 3.0 * r.std_error);
    EXPECT_LE(std::abs(r.reduced - r.analytic), 1e-2 * std::abs(r.analytic));
}

TEST(GeneratorOracle, BiasHalvesWithStep) {
    const auto m = qnd_oracle_model();
    const auto b = generator_bias_halving(m, CMatrix::Identity(3, 3) / 3.0, 1e-4, 20000);
    EXPECT_GT(b.ratio, 1.5);
    EXPECT_LT(b.ratio, 2.5);
}

TEST(GeneratorOracle, RejectsNonQnd) {
    auto m = qnd_oracle_model();
    m.channels[0].L(0, 1) = m.channels[0].L(1, 0) = 0.1;
    EXPECT_THROW(generator_oracle_qsr(m, CMatrix::Identity(3, 3) / 3.0, 1e-4, 100), Error);
}

TEST(InstabilityWitness, NegativeDriftNearUndesiredSets) {
    const auto c = preset_three_level(Modulation::slow, true);
    InstabilityOptions opt;
    opt.exit_paths = 50;
    for (std::size_t n : {1u, 2u}) {
        const auto w = instability_witness(c.model, c.reduced_filter(), c.feedback, n, opt);
        EXPECT_TRUE(w.negative()) << n;
        EXPECT_GT(w.margin, 0.0);
        EXPECT_LE(std::abs(w.drift - w.analytic_drift), 0.5 * std::abs(w.analytic_drift)) << n;
        EXPECT_EQ(w.exited, w.exit_paths);
    }
}

TEST(InstabilityWitness, FlatMeasurementGivesNoEscape) {
    auto c = preset_three_level(Modulation::slow, true);
    c.model.channels[0].L = CMatrix::Identity(3, 3);
    const auto f = make_reduced_filter_config(c.gamma, {{1.0, 1.0, 1.0}}, {0.6});
    InstabilityOptions opt;
    opt.n_paths = 200;
    opt.exit_paths = 0;
    const auto w = instability_witness(c.model, f, c.feedback, 2, opt);
    EXPECT_EQ(w.analytic_drift, 0.0);
    EXPECT_EQ(w.margin, 0.0);
    EXPECT_FALSE(w.drift < -4.0 * w.drift_std_error);
}
