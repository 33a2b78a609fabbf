#include "lps/prox.hpp"

#include "lps/error.hpp"

#include <complex>
#define lapack_complex_float std::complex<float>
#define lapack_complex_double std::complex<double>
#include <lapacke.h>

#include <algorithm>
#include <cmath>
#include <string>

namespace lps {

double soft(double x, double alpha) {
    const double r = std::abs(x);
    if (!(r > alpha)) return 0.0;
    return x > 0 ? r - alpha : alpha - r;
}

Complex soft(Complex z, double alpha) {
    const double r = std::abs(z);
    if (!(r > alpha)) return {0.0, 0.0};
    const double m = r - alpha;
    return {z.real() * m / r, z.imag() * m / r};
}

Complex garrote(Complex z, double alpha) {
    const double r = std::abs(z);
    if (!(r > alpha)) return {0.0, 0.0};
    const double w = 1.0 - (alpha * alpha) / (r * r);
    return z * w;
}

SvdFactors svd(const Eigen::MatrixXcd& X) {
    if (!X.allFinite()) throw NumericalError("svd: non-finite input");
    const auto m = X.rows(), n = X.cols(), k = std::min(m, n);
    SvdFactors f;
    if (k == 0) {
        f.U.resize(m, 0);
        f.V.resize(n, 0);
        return f;
    }
    Eigen::MatrixXcd A = X;
    Eigen::MatrixXcd VT(k, n);
    f.U.resize(m, k);
    f.sigma.resize(k);
    const lapack_int info = LAPACKE_zgesdd(LAPACK_COL_MAJOR, 'S', static_cast<lapack_int>(m), static_cast<lapack_int>(n),
                                           A.data(), static_cast<lapack_int>(m), f.sigma.data(), f.U.data(),
                                           static_cast<lapack_int>(m), VT.data(), static_cast<lapack_int>(k));
    if (info != 0) throw NumericalError("svd: zgesdd failed with info " + std::to_string(info));
    f.V = VT.adjoint();
    if (!f.U.allFinite() || !f.V.allFinite() || !f.sigma.allFinite())
        throw NumericalError("svd: did not converge to finite factors");
    return f;
}

Eigen::MatrixXcd svt(const Eigen::MatrixXcd& X, double alpha) {
    return activate_spectral(ActivationMode::Simple, X, alpha, 1.0);
}

std::string_view to_string(ActivationMode m) {
    switch (m) {
    case ActivationMode::Simple: return "simple";
    case ActivationMode::Soft: return "soft";
    case ActivationMode::Garrote: return "garrote";
    }
    return "?";
}

ActivationMode parse_activation(std::string_view s) {
    if (s == "simple") return ActivationMode::Simple;
    if (s == "soft") return ActivationMode::Soft;
    if (s == "garrote") return ActivationMode::Garrote;
    throw UsageError("unknown activation mode '" + std::string(s) + "'");
}

void ActivationParams::validate() const {
    if (!(threshold_L >= 0) || !(threshold_S >= 0))
        throw UsageError("activation thresholds must be finite and >= 0");
    if (!std::isfinite(threshold_L) || !std::isfinite(threshold_S) || !std::isfinite(slope_L) ||
        !std::isfinite(slope_S))
        throw UsageError("activation parameters must be finite");
}

Shrinkage shrink(ActivationMode mode, double r, double alpha, double slope) {
    Shrinkage g;
    if (!(r > alpha)) return g;
    switch (mode) {
    case ActivationMode::Simple:
        g.value = r - alpha;
        g.d_r = 1.0;
        g.d_alpha = -1.0;
        break;
    case ActivationMode::Soft:
        g.value = slope * (r - alpha);
        g.d_r = slope;
        g.d_alpha = -slope;
        g.d_slope = r - alpha;
        break;
    case ActivationMode::Garrote:
        g.value = r - alpha * alpha / r;
        g.d_r = 1.0 + alpha * alpha / (r * r);
        g.d_alpha = -2.0 * alpha / r;
        break;
    }
    return g;
}

Complex activate(ActivationMode mode, Complex z, double alpha, double slope) {
    switch (mode) {
    case ActivationMode::Simple: return soft(z, alpha);
    case ActivationMode::Soft: return slope * soft(z, alpha);
    case ActivationMode::Garrote: return garrote(z, alpha);
    }
    throw UsageError("unknown activation mode");
}

Eigen::MatrixXcd activate_elementwise(ActivationMode mode, const Eigen::MatrixXcd& Z, double alpha,
                                      double slope) {
    Eigen::MatrixXcd out(Z.rows(), Z.cols());
    const Eigen::Index n = Z.size();
    const Complex* in = Z.data();
    Complex* o = out.data();
#pragma omp parallel for schedule(static)
    for (Eigen::Index i = 0; i < n; ++i) o[i] = activate(mode, in[i], alpha, slope);
    return out;
}

Eigen::MatrixXcd activate_spectral(ActivationMode mode, const Eigen::MatrixXcd& X, double alpha,
                                   double slope, SvdFactors* factors) {
    SvdFactors f = svd(X);
    const Eigen::Index r = f.sigma.size();
    Eigen::VectorXd g(r);
    for (Eigen::Index i = 0; i < r; ++i) {
        const double s = f.sigma(i);
        switch (mode) {
        case ActivationMode::Simple: g(i) = soft(s, alpha); break;
        case ActivationMode::Soft: g(i) = slope * soft(s, alpha); break;
        case ActivationMode::Garrote: g(i) = s > alpha ? s - alpha * alpha / s : 0.0; break;
        }
    }
    Eigen::Index rank = 0;
    while (rank < r && g(rank) != 0.0) ++rank;
    // sigma is sorted and every mode is monotone, so nonzero outputs form a prefix.
    Eigen::MatrixXcd out = f.U.leftCols(rank) * g.head(rank).asDiagonal() * f.V.leftCols(rank).adjoint();
    if (factors) *factors = std::move(f);
    return out;
}

Eigen::MatrixXcd apply_activation(const ActivationParams& params, Branch branch, const Eigen::MatrixXcd& input) {
    params.validate();
    const double a = params.threshold(branch), s = params.slope(branch);
    return branch == Branch::S ? activate_elementwise(params.mode, input, a, s)
                               : activate_spectral(params.mode, input, a, s);
}

} // namespace lps
