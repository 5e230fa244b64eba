#pragma once

#include "qfb/commands.hpp"
#include "qfb/analysis.hpp"

#include <random>

namespace qfb::testing {

inline CMatrix random_complex(Index n, std::mt19937_64& rng) {
    std::normal_distribution<Real> g;
    CMatrix m(n, n);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < n; ++j) m(i, j) = Complex(g(rng), g(rng));
    return m;
}

/// Ginibre-type random density matrix of full rank.
inline CMatrix random_state(Index n, std::mt19937_64& rng) {
    const CMatrix g = random_complex(n, rng);
    CMatrix rho = g * g.adjoint();
    return rho / rho.trace().real();
}

inline CMatrix random_hermitian(Index n, std::mt19937_64& rng) {
    return hermitian_part(random_complex(n, rng));
}

inline RVector random_simplex(Index n, std::mt19937_64& rng) {
    std::exponential_distribution<Real> e(1.0);
    RVector q(n);
    for (Index i = 0; i < n; ++i) q(i) = e(rng);
    return q / q.sum();
}

inline CMatrix diag3(Real a, Real b, Real c) {
    CMatrix m = CMatrix::Zero(3, 3);
    m(0, 0) = a;
    m(1, 1) = b;
    m(2, 2) = c;
    return m;
}

inline CMatrix jz() { return diag3(1.0, 0.0, -1.0); }

/// Block-diagonal perturbation, gamma and eta frozen at their nominal values.
inline SystemModel qnd_oracle_model() {
    auto m = preset_three_level_qsr(Modulation::slow).model;
    for (auto& ch : m.channels) {
        ch.gamma = Schedule::constant(ch.gamma_hat);
        ch.eta = Schedule::constant(ch.eta_hat);
    }
    return m;
}

}  // namespace qfb::testing
