#include "qfb/commands.hpp"

#include <chrono>

namespace qfb {

ExperimentConfig synthetic_qnd_model(int n, std::uint64_t seed) {
    require(n >= 2, ErrorCode::configuration, "bench dimension must be >= 2");
    CounterRng rng(substream_key(seed, static_cast<std::uint64_t>(n)));
    std::uniform_real_distribution<Real> unif(-1.0, 1.0);
    const Index N = n;

    ExperimentConfig c;
    c.name = "synthetic-" + std::to_string(n);
    c.model.decomposition = SubspaceDecomposition(std::vector<int>(static_cast<std::size_t>(n), 1));
    c.model.target_index = 0;
    CMatrix L = CMatrix::Zero(N, N);
    for (Index i = 0; i < N; ++i) L(i, i) = static_cast<Real>(i) / static_cast<Real>(N - 1) * 2.0 - 1.0 + 0.1 * unif(rng) / N;
    CMatrix H1(N, N);
    for (Index i = 0; i < N; ++i)
        for (Index j = 0; j < N; ++j) H1(i, j) = Complex(unif(rng), unif(rng));
    c.model.H1 = hermitian_part(H1);
    CMatrix H0 = CMatrix::Zero(N, N);
    for (Index i = 0; i < N; ++i) H0(i, i) = unif(rng);
    c.model.H0 = ScheduledMatrix(H0);
    MeasurementChannel ch;
    ch.L = L;
    ch.gamma = Schedule::constant(1.0);
    ch.eta = Schedule::constant(0.5);
    ch.gamma_hat = 1.0;
    ch.eta_hat = 0.5;
    c.model.channels.push_back(ch);
    c.model.perturbation = PerturbationModel::none(N);
    c.gamma = RMatrix::Zero(N, N);
    for (Index i = 0; i + 1 < N; ++i) {
        c.gamma(i, i + 1) = c.gamma(i + 1, i) = 1.0;
        c.gamma(i, i) -= 1.0;
        c.gamma(i + 1, i + 1) -= 1.0;
    }
    c.q0 = RVector::Constant(N, 1.0 / static_cast<Real>(N));
    c.rho0 = DensityMatrix::maximally_mixed(N).mat();
    c.controls.assign(1, Schedule::constant(0.0));
    return c;
}

namespace {

using Clock = std::chrono::steady_clock;

template <class Step>
Real time_per_step(Step&& step, Real min_seconds) {
    long reps = 16;
    Real best = std::numeric_limits<Real>::infinity();
    for (int round = 0; round < 3; ++round) {
        while (true) {
            const auto t0 = Clock::now();
            for (long i = 0; i < reps; ++i) step(i);
            const Real el = std::chrono::duration<Real>(Clock::now() - t0).count();
            if (el >= min_seconds / 3.0) {
                best = std::min(best, el / static_cast<Real>(reps));
                break;
            }
            reps *= 2;
        }
    }
    return best * 1e6;
}

}  // namespace

std::vector<BenchRow> run_bench(const std::vector<int>& dims, std::uint64_t seed, Real min_seconds) {
    std::vector<BenchRow> rows;
    const Real dt = 1e-3;
    for (int n : dims) {
        const ExperimentConfig c = synthetic_qnd_model(n, seed);
        const auto filter = c.reduced_filter();
        const CMatrix H0n = c.model.H0.nominal();
        WienerSource noise(seed, static_cast<std::uint64_t>(n));
        std::vector<std::vector<Real>> dYs(1024, std::vector<Real>(1));
        for (auto& d : dYs) noise.increments(d, dt);

        DensityMatrix rho_hat = DensityMatrix::maximally_mixed(n);
        SimplexVector q = SimplexVector(c.q0);
        BenchRow r;
        r.n = n;
        r.full_us = time_per_step(
            [&](long i) {
                rho_hat = step_full_filter(c.model, H0n, rho_hat, 0.3, dYs[static_cast<std::size_t>(i) & 1023u], dt);
            },
            min_seconds);
        r.reduced_us = time_per_step(
            [&](long i) { q = step_reduced_filter(filter, q, 0.3, dYs[static_cast<std::size_t>(i) & 1023u], dt); },
            min_seconds);
        rows.push_back(r);
    }
    return rows;
}

CsvTable bench_table(const std::vector<BenchRow>& rows) {
    CsvTable t;
    t.columns = {"N", "full_us", "reduced_us", "ratio"};
    for (const auto& r : rows) t.rows.push_back({static_cast<Real>(r.n), r.full_us, r.reduced_us, r.ratio()});
    return t;
}

bool bench_ratio_increasing(const std::vector<BenchRow>& rows) {
    for (std::size_t i = 1; i < rows.size(); ++i)
        if (!(rows[i].ratio() > rows[i - 1].ratio())) return false;
    return !rows.empty();
}

}  // namespace qfb
