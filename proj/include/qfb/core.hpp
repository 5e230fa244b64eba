// core.hpp
// Scalar/matrix aliases, error type, and small linear-algebra helpers shared
// by every qfb module.

#pragma once

#include <Eigen/Dense>

#include <charconv>
#include <cmath>
#include <complex>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace qfb {

using Real = double;
using Complex = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using RMatrix = Eigen::MatrixXd;
using RVector = Eigen::VectorXd;
using CVector = Eigen::VectorXcd;
using Index = Eigen::Index;

inline constexpr Complex kI{0.0, 1.0};

enum class ErrorCode {
    invalid_decomposition,
    dimension_mismatch,
    index_out_of_range,
    configuration,
    propagation,
    non_qnd,
    insufficient_points,
    parse,
    missing_section,
    io,
};

inline const char* to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::invalid_decomposition: return "invalid-decomposition";
        case ErrorCode::dimension_mismatch: return "dimension-mismatch";
        case ErrorCode::index_out_of_range: return "index-out-of-range";
        case ErrorCode::configuration: return "configuration";
        case ErrorCode::propagation: return "propagation";
        case ErrorCode::non_qnd: return "non-qnd";
        case ErrorCode::insufficient_points: return "insufficient-points";
        case ErrorCode::parse: return "parse";
        case ErrorCode::missing_section: return "missing-section";
        case ErrorCode::io: return "io";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

inline void require(bool cond, ErrorCode code, const std::string& what) {
    if (!cond) throw Error(code, what);
}

inline void require_square(const CMatrix& m, Index n, const char* what) {
    require(m.rows() == n && m.cols() == n, ErrorCode::dimension_mismatch,
            std::string(what) + ": expected " + std::to_string(n) + "x" + std::to_string(n) +
                ", got " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
}

/// Hilbert-Schmidt norm, Tr(X X*)^{1/2}. The only matrix norm used in qfb.
inline Real hs_norm(const CMatrix& x) { return x.norm(); }

inline CMatrix commutator(const CMatrix& a, const CMatrix& b) { return a * b - b * a; }

inline CMatrix hermitian_part(const CMatrix& x) { return 0.5 * (x + x.adjoint()); }

inline Real hermiticity_defect(const CMatrix& x) { return hs_norm(x - x.adjoint()); }

/// Numerical rank with a threshold relative to the largest singular value.
/// Matrices whose largest singular value is below `abs_floor` have rank 0.
inline Index numerical_rank(const CMatrix& m, Real rel_tol = 1e-8, Real abs_floor = 1e-13) {
    if (m.size() == 0) return 0;
    Eigen::JacobiSVD<CMatrix> svd(m);
    const auto& s = svd.singularValues();
    if (s.size() == 0 || s(0) <= abs_floor) return 0;
    Index r = 0;
    for (Index i = 0; i < s.size(); ++i)
        if (s(i) > rel_tol * s(0)) ++r;
    return r;
}

inline bool all_finite(const CMatrix& m) { return m.allFinite(); }

/// Shortest-form 17-significant-digit decimal text; round-trips doubles.
inline std::string format_real(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

}  // namespace qfb
