#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace qfb;
using namespace qfb::testing;

namespace {

const Real kThetaLo = 0.4608, kThetaHi = 0.8448, kThetaHat = 0.6;

std::vector<Complex> lv(std::initializer_list<Real> xs) {
    std::vector<Complex> out;
    for (Real x : xs) out.emplace_back(x, 0.0);
    return out;
}

ChannelConstants constants(std::vector<Complex> l, Real chi_lo, Real chi_hi, Real theta_hat = kThetaHat,
                           std::size_t target = 0) {
    ChannelConstants c;
    c.l = std::move(l);
    channel_spread(c.l, target, c);
    c.theta_hat = theta_hat;
    c.chi_lower = chi_lo;
    c.chi_upper = chi_hi;
    c.theta_lower = chi_lo * chi_lo * theta_hat;
    c.theta_upper = chi_hi * chi_hi * theta_hat;
    return c;
}

Real preset_chi_lo() { return std::sqrt(kThetaLo / kThetaHat); }
Real preset_chi_hi() { return std::sqrt(kThetaHi / kThetaHat); }

RMatrix path_gamma() {
    RMatrix G(3, 3);
    G << -1, 1, 0, 1, -2, 1, 0, 1, -1;
    return G;
}

VerificationReport preset_report(const ExperimentConfig& c) {
    return verify(c.model, c.gamma, c.feedback, c.sim.horizon);
}

}  // namespace

TEST(LValues, Examples) {
    SubspaceDecomposition d3({1, 1, 1});
    const auto l = extract_l_values(jz(), d3);
    ASSERT_EQ(l.size(), 3u);
    EXPECT_EQ(l[0], Complex(1.0));
    EXPECT_EQ(l[1], Complex(0.0));
    EXPECT_EQ(l[2], Complex(-1.0));
    SubspaceDecomposition d21({2, 1});
    const auto one = extract_l_values(CMatrix::Identity(3, 3), d21);
    ASSERT_EQ(one.size(), 2u);
    EXPECT_EQ(one[0], Complex(1.0));
    EXPECT_EQ(one[1], Complex(1.0));
}

TEST(LValues, NonQndNamesBlock) {
    SubspaceDecomposition d3({1, 1, 1});
    CMatrix L = jz();
    L(0, 1) = 0.2;
    try {
        extract_l_values(L, d3);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::non_qnd);
        EXPECT_NE(std::string(e.what()).find("(0,1)"), std::string::npos);
    }
    SubspaceDecomposition d21({2, 1});
    try {
        extract_l_values(jz(), d21);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::non_qnd);
        EXPECT_NE(std::string(e.what()).find("block 0"), std::string::npos);
    }
}

TEST(A2, Examples) {
    const auto c = preset_three_level(Modulation::slow, true);
    const auto ts = sample_times(c.model, 25.0);
    EXPECT_TRUE(check_A2(c.model.perturbation, c.model.decomposition, 0, ts).pass);
    PerturbationModel p = PerturbationModel::none(3);
    EXPECT_TRUE(check_A2(p, c.model.decomposition, 0, ts).pass);
    p.H_tilde.constant(0, 1) = 0.3;
    p.H_tilde.constant(1, 0) = 0.3;
    const auto r = check_A2(p, c.model.decomposition, 0, ts);
    EXPECT_FALSE(r.pass);
    EXPECT_NEAR(r.margin, 0.3, 1e-15);
}

TEST(A2, NoiseLeakageAndCrossTerm) {
    SubspaceDecomposition d({1, 1, 1});
    PerturbationModel p = PerturbationModel::none(3);
    CMatrix M = CMatrix::Zero(3, 3);
    M(1, 0) = 1.0;  // maps the target block out
    p.C_ops.push_back({Schedule::constant(0.25), M});
    auto r = check_A2(p, d, 0, {0.0});
    EXPECT_FALSE(r.pass);
    EXPECT_NEAR(r.margin, 0.5, 1e-15);
    p.C_ops[0].M = CMatrix::Zero(3, 3);
    p.C_ops[0].M(0, 0) = 1.0;
    p.C_ops[0].M(0, 2) = 1.0;  // S* P nonzero
    r = check_A2(p, d, 0, {0.0});
    EXPECT_FALSE(r.pass);
    EXPECT_NEAR(r.margin, 0.25, 1e-15);
}

TEST(QsrConstant, Examples) {
    const Real E = compute_qsr_constant({lv({1, 0, -1})}, {kThetaLo});
    EXPECT_NEAR(E, 0.4608, 1e-15);
    EXPECT_NEAR(-E / 2.0, -0.2304, 1e-15);
    EXPECT_EQ(compute_qsr_constant({lv({1, 1, -1})}, {kThetaLo}), 0.0);
    EXPECT_GT(compute_qsr_constant({lv({1, 1, 0}), lv({0, 1, 1})}, {0.5, 0.5}), 0.0);
    EXPECT_EQ(compute_qsr_constant({lv({1, 1, 0})}, {0.5}), 0.0);
}

TEST(A5, Examples) {
    auto c = constants(lv({1, 0, -1}), 1.0, 1.0);
    EXPECT_EQ(c.c_under, 1.0);
    EXPECT_EQ(c.c_bar, 2.0);
    EXPECT_EQ(c.l_under, 1.0);
    EXPECT_EQ(c.l_bar, 2.0);
    EXPECT_TRUE(check_A5({c}).pass);

    c = constants(lv({0, 1, -1}), 1.0, 1.0);
    EXPECT_EQ(c.c_bar, 1.0);
    EXPECT_EQ(c.c_under, -1.0);
    EXPECT_FALSE(check_A5({c}).pass);

    c = constants(lv({1, 1, 1}), 1.0, 1.0);
    EXPECT_EQ(c.c_bar, 0.0);
    EXPECT_EQ(c.c_under, 0.0);
    EXPECT_TRUE(check_A5({c}).pass);
}

TEST(A6, Examples) {
    const auto c = preset_three_level(Modulation::slow, true);
    const auto h = check_A6_hautus(c.model.H1, c.model.decomposition, 0);
    EXPECT_TRUE(h.overall.pass);
    ASSERT_EQ(h.per_block.size(), 2u);
    EXPECT_EQ(h.per_block[0].first, 1u);
    EXPECT_TRUE(h.per_block[0].second);
    EXPECT_TRUE(h.per_block[1].second);

    EXPECT_FALSE(check_A6_hautus(CMatrix::Zero(3, 3), c.model.decomposition, 0).overall.pass);

    const auto bd = check_A6_hautus(diag3(0.3, -1.0, 2.0), c.model.decomposition, 0);
    EXPECT_FALSE(bd.overall.pass);
    for (const auto& [j, ok] : bd.per_block) EXPECT_FALSE(ok);
}

TEST(A6, CorollaryImpliesHautus) {
    std::mt19937_64 rng(40);
    std::uniform_int_distribution<int> nb(2, 4), bd(1, 3), zero(0, 3);
    int implied = 0;
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<int> dims(static_cast<std::size_t>(nb(rng)));
        for (auto& x : dims) x = bd(rng);
        SubspaceDecomposition d(dims);
        CMatrix H = random_hermitian(d.total_dim(), rng);
        if (zero(rng) == 0) {  // knock out one coupling now and then
            const Index o0 = d.offset(0), o1 = d.offset(1);
            H.block(o1, o0, d.block_dim(1), d.block_dim(0)).setZero();
            H.block(o0, o1, d.block_dim(0), d.block_dim(1)).setZero();
        }
        const auto h = check_A6_hautus(H, d, 0);
        if (h.corollary1) {
            ++implied;
            EXPECT_TRUE(h.overall.pass);
        }
    }
    EXPECT_GT(implied, 10);
}

TEST(A7, Examples) {
    const auto c = preset_three_level(Modulation::slow, true);
    const auto k = check_A7_kalman(c.model.H1, c.model.decomposition, 0);
    EXPECT_EQ(k.rank, 2);
    EXPECT_TRUE(k.a7.pass);
    EXPECT_TRUE(k.actrl.pass);

    CMatrix H = c.model.H1;
    H(1, 0) = H(0, 1) = 0.0;
    const auto z = check_A7_kalman(H, c.model.decomposition, 0);
    EXPECT_EQ(z.rank, 0);
    EXPECT_FALSE(z.a7.pass);
    EXPECT_FALSE(z.actrl.pass);

    SubspaceDecomposition d21({2, 1});
    CMatrix G = CMatrix::Zero(3, 3);
    G(2, 0) = G(0, 2) = 1.0;
    const auto s = check_A7_kalman(G, d21, 0);
    EXPECT_EQ(s.rank, 1);
    EXPECT_TRUE(s.a7.pass);
    EXPECT_TRUE(s.actrl.pass);
}

TEST(C1, Examples) {
    EXPECT_TRUE(check_C1(path_gamma()).pass);
    EXPECT_FALSE(check_C1(RMatrix::Zero(3, 3)).pass);
    RMatrix G = path_gamma();
    G(0, 2) = -0.5;
    G(2, 2) = -0.5;
    EXPECT_FALSE(check_C1(G).pass);
}

TEST(C2, PresetLowerBranch) {
    const auto c = constants(lv({1, 0, -1}), preset_chi_lo(), preset_chi_hi());
    EXPECT_NEAR(c.chi_upper, 1.1866, 1e-4);
    const auto r = check_C2({c}, 0);
    EXPECT_TRUE(r.pass);
    EXPECT_NEAR(2.0 * preset_chi_lo() - 1.0, 0.7528, 1e-4);
    EXPECT_NEAR(r.margin, (2.0 * preset_chi_lo() - 1.0) - (-1.0), 1e-15);
}

TEST(C2, UpperBranchFails) {
    const auto c = constants(lv({-2, -1, -1}), 1.0, 3.0);
    ASSERT_LE(c.c_bar, 0.0);
    const auto r = check_C2({c}, 0);
    EXPECT_FALSE(r.pass);
    EXPECT_NEAR(r.margin, 2.0 - 5.0, 1e-15);
}

TEST(C2, VacuousWhenComplementSilent) {
    const auto r = check_C2({constants(lv({1, 0, 0}), 0.5, 2.0)}, 0);
    EXPECT_TRUE(r.pass);
    EXPECT_EQ(r.detail, "vacuous");
}

TEST(C3, PresetConstants) {
    std::vector<ChannelConstants> cs{constants(lv({1, 0, -1}), preset_chi_lo(), preset_chi_hi())};
    Real C = 0, chi_margin = 0;
    const auto r = check_C3(cs, 0, C, chi_margin);
    const Real cl = preset_chi_lo(), ch = preset_chi_hi();
    const Real A = std::min(cl * cl, 1.0);
    const Real B = 2.0 * 2.0 * 1.0 * std::max(1.0 - cl, ch - 1.0);
    EXPECT_TRUE(r.pass);
    EXPECT_NEAR(cs[0].A, A, 1e-15);
    EXPECT_NEAR(cs[0].B, B, 1e-15);
    EXPECT_NEAR(cs[0].A, 0.7681, 1e-4);
    EXPECT_NEAR(cs[0].B, 0.7464, 1e-4);
    EXPECT_NEAR(C, kThetaHat * (2 * A - B) * (2 * A - B) / (2 * A), 1e-15);
    EXPECT_GE(C / 2.0, 0.1208);
    EXPECT_LE(C / 2.0, 0.1228);
    EXPECT_GE(chi_margin, 0.0);
}

TEST(C3, ExactlyKnownTheta) {
    std::vector<ChannelConstants> cs{constants(lv({1, 0, -1}), 1.0, 1.0)};
    Real C = 0, chi_margin = 0;
    EXPECT_TRUE(check_C3(cs, 0, C, chi_margin).pass);
    EXPECT_EQ(cs[0].B, 0.0);
    EXPECT_NEAR(C, 2.0 * kThetaHat * cs[0].A, 1e-15);
    EXPECT_NEAR(C, 2.0 * kThetaHat * 1.0, 1e-15);
}

TEST(C3, ZeroTargetValueBranch) {
    std::vector<ChannelConstants> cs{constants(lv({0, 1, 2}), 0.8, 1.3)};
    Real C = 0, chi_margin = 0;
    EXPECT_TRUE(check_C3(cs, 0, C, chi_margin).pass);
    EXPECT_EQ(cs[0].B, 0.0);
    EXPECT_GT(C, 0.0);
}

TEST(C3, DivisionGuard) {
    std::vector<ChannelConstants> cs{constants(lv({1, 1, 1}), 1.0, 1.0)};
    Real C = 0, chi_margin = 0;
    const auto r = check_C3(cs, 0, C, chi_margin);
    EXPECT_FALSE(r.pass);
    EXPECT_TRUE(std::isnan(C));
}

TEST(C3, SmallNominalThetaFails) {
    const Real th = 0.3;
    std::vector<ChannelConstants> cs{
        constants(lv({1, 0, -1}), std::sqrt(kThetaLo / th), std::sqrt(kThetaHi / th), th)};
    Real C = 0, chi_margin = 0;
    EXPECT_FALSE(check_C3(cs, 0, C, chi_margin).pass);
}

TEST(C3, ConstantMonotoneUnderNestedIntervals) {
    std::mt19937_64 rng(41);
    std::uniform_real_distribution<Real> w(0.0, 0.3), th(0.2, 2.0);
    int checked = 0;
    for (int trial = 0; trial < 500; ++trial) {
        const Real a = w(rng), b = w(rng), t = th(rng);
        Real prev = -1.0;
        bool live = false;
        for (Real s = 1.0; s >= 0.0; s -= 0.1) {
            std::vector<ChannelConstants> cs{constants(lv({1, 0, -1}), 1.0 - s * a, 1.0 + s * b, t)};
            Real C = 0, chi_margin = 0;
            const bool ok = check_C3(cs, 0, C, chi_margin).pass;
            if (s == 1.0) live = ok;
            if (!live) break;
            EXPECT_TRUE(ok);
            EXPECT_GE(C, prev - 1e-14);
            prev = C;
        }
        if (live) ++checked;
    }
    EXPECT_GT(checked, 50);
}

TEST(InstabilityMargin, PresetValues) {
    const std::vector<ChannelConstants> cs{constants(lv({1, 0, -1}), preset_chi_lo(), preset_chi_hi())};
    EXPECT_NEAR(check_instability_margin(cs, 0, 1), kThetaHat, 1e-15);
    EXPECT_NEAR(check_instability_margin(cs, 0, 2), 4.0 * preset_chi_lo() * kThetaHat, 1e-12);
    EXPECT_NEAR(check_instability_margin(cs, 0, 2), 2.10, 5e-3);
    const std::vector<ChannelConstants> flat{constants(lv({1, 1, 1}), 0.9, 1.1)};
    EXPECT_EQ(check_instability_margin(flat, 0, 1), 0.0);
}

TEST(A4, PolynomialLaw) {
    FeedbackLaw law;
    EXPECT_TRUE(check_A4(law, 3, 0).pass);
    law.target_index = 1;
    EXPECT_FALSE(check_A4(law, 3, 0).pass);
    law.target_index = 0;
    law.b = 0.5;
    EXPECT_FALSE(check_A4(law, 3, 0).pass);
}

TEST(Verify, PresetReproducesConstants) {
    const auto c = preset_three_level(Modulation::slow, true);
    const auto rep = preset_report(c);
    ASSERT_EQ(rep.channels.size(), 1u);
    const auto& ch = rep.channels[0];
    EXPECT_NEAR(ch.theta_lower, 0.4608, 1e-12);
    EXPECT_NEAR(ch.theta_upper, 0.8448, 1e-12);
    EXPECT_EQ(ch.c_under, 1.0);
    EXPECT_EQ(ch.l_under, 1.0);
    EXPECT_EQ(ch.l_bar, 2.0);
    EXPECT_GE(rep.C / 2.0, 0.1208);
    EXPECT_LE(rep.C / 2.0, 0.1228);
    EXPECT_NEAR(rep.feedback_exponent_bound, -rep.C / 2.0, 1e-15);
    EXPECT_NEAR(rep.E_l, 0.4608, 1e-12);
    EXPECT_NEAR(rep.qsr_exponent_bound, -0.2304, 1e-12);
    for (const char* name : {"A1", "A2", "A3", "A4", "A5", "A6", "A7", "C1", "C2", "C3", "A-ctrl"})
        EXPECT_TRUE(rep.pass(name)) << name;
    EXPECT_FALSE(rep.pass("A-qsr"));
    EXPECT_TRUE(rep.all_pass(feedback_checks()));
    EXPECT_EQ(rep.invariant_set, std::vector<std::size_t>{0});
    ASSERT_EQ(rep.instability_margins.size(), 2u);
    EXPECT_GT(rep.instability_margins[0].second, 0.0);
    EXPECT_GT(rep.instability_margins[1].second, 0.0);
    EXPECT_TRUE(rep.eta_upper_below_one);
    EXPECT_LT(rep.feedback_exponent_bound, 0.0);
    EXPECT_LT(rep.qsr_exponent_bound, 0.0);
}

TEST(Verify, FastPresetSameConstants) {
    const auto s = preset_report(preset_three_level(Modulation::slow, true));
    const auto f = preset_report(preset_three_level(Modulation::fast, true));
    EXPECT_NEAR(s.C, f.C, 1e-12);
    EXPECT_NEAR(s.channels[0].theta_lower, f.channels[0].theta_lower, 1e-12);
}

TEST(Verify, QsrRestrictionPassesAqsr) {
    const auto c = preset_three_level_qsr(Modulation::slow);
    const auto rep = verify(c.model, c.gamma, c.feedback, c.sim.horizon);
    EXPECT_TRUE(rep.all_pass(qsr_checks()));
    EXPECT_EQ(rep.invariant_set, (std::vector<std::size_t>{0, 1, 2}));
}

TEST(Verify, SmallNominalThetaFailsC3) {
    auto c = preset_three_level(Modulation::slow, true);
    c.model.channels[0].eta_hat = 0.25;
    const auto rep = preset_report(c);
    EXPECT_FALSE(rep.pass("C3"));
    EXPECT_FALSE(rep.all_pass(feedback_checks()));
}

TEST(Verify, NonQndMeasurement) {
    auto c = preset_three_level(Modulation::slow, true);
    c.model.channels[0].L(0, 1) = c.model.channels[0].L(1, 0) = 0.1;
    const auto rep = preset_report(c);
    EXPECT_FALSE(rep.pass("A1"));
    EXPECT_FALSE(rep.pass("A3"));
    EXPECT_FALSE(rep.pass("C3"));
    EXPECT_NE(rep.get("A1").detail.find("(0,1)"), std::string::npos);
}

TEST(Verify, UnitEfficiencyFlagged) {
    auto c = preset_three_level(Modulation::slow, true);
    c.model.channels[0].eta = Schedule::constant(1.0);
    c.model.channels[0].eta_hat = 1.0;
    EXPECT_FALSE(preset_report(c).eta_upper_below_one);
}

TEST(Verify, ReportDoesNotMutateModel) {
    const auto c = preset_three_level(Modulation::slow, true);
    const auto before = emit_config(c);
    preset_report(c);
    EXPECT_EQ(emit_config(c), before);
}

TEST(Verify, KeyValuesStable) {
    const auto c = preset_three_level(Modulation::slow, true);
    EXPECT_EQ(preset_report(c).to_text(), preset_report(c).to_text());
    const auto kv = preset_report(c).key_values();
    EXPECT_EQ(kv.front().first, "horizon");
}
