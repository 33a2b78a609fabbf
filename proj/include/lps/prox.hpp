#pragma once

#include "lps/core.hpp"

#include <string>
#include <string_view>

namespace lps {

/// Magnitude soft-thresholding, phase preserved: z * max(|z| - alpha, 0) / |z|.
double soft(double x, double alpha);
Complex soft(Complex z, double alpha);

/// Non-negative garrote: z * max(0, 1 - alpha^2 / |z|^2).
Complex garrote(Complex z, double alpha);

/// Thin SVD X = U diag(sigma) V^H with r = min(m, n) and sigma descending.
struct SvdFactors {
    Eigen::MatrixXcd U;     // m x r
    Eigen::VectorXd sigma;  // r
    Eigen::MatrixXcd V;     // n x r
};

/// Throws NumericalError on non-finite input or output.
SvdFactors svd(const Eigen::MatrixXcd& X);

/// U diag(soft(sigma, alpha)) V^H.
Eigen::MatrixXcd svt(const Eigen::MatrixXcd& X, double alpha);

enum class ActivationMode { Simple, Soft, Garrote };
enum class Branch { L, S };

std::string_view to_string(ActivationMode m);
ActivationMode parse_activation(std::string_view s);

/// Learnable thresholding parameters of one layer. Slopes only count in soft mode.
struct ActivationParams {
    ActivationMode mode = ActivationMode::Simple;
    double threshold_L = 0, threshold_S = 0;
    double slope_L = 1, slope_S = 1;

    /// 2 for simple/garrote, 4 for soft.
    std::size_t count() const { return mode == ActivationMode::Soft ? 4 : 2; }
    double threshold(Branch b) const { return b == Branch::L ? threshold_L : threshold_S; }
    double slope(Branch b) const {
        if (mode != ActivationMode::Soft) return 1.0;
        return b == Branch::L ? slope_L : slope_S;
    }
    void validate() const;
    bool operator==(const ActivationParams&) const = default;
};

/// Radial shrinkage r -> g(r) of each mode with its partial derivatives. Kinks get the
/// zero subgradient: the active region is r > alpha strictly.
struct Shrinkage {
    double value = 0, d_r = 0, d_alpha = 0, d_slope = 0;
};
Shrinkage shrink(ActivationMode mode, double r, double alpha, double slope);

/// Elementwise activation of a complex value (phase preserved). Simple mode is soft().
Complex activate(ActivationMode mode, Complex z, double alpha, double slope);

/// Elementwise over a matrix.
Eigen::MatrixXcd activate_elementwise(ActivationMode mode, const Eigen::MatrixXcd& Z, double alpha,
                                      double slope);

/// Activation applied to singular values. Simple mode is svt(). Optionally returns the
/// factors of X.
Eigen::MatrixXcd activate_spectral(ActivationMode mode, const Eigen::MatrixXcd& X, double alpha,
                                   double slope, SvdFactors* factors = nullptr);

/// S branch acts elementwise, L branch on singular values; threshold taken from params.
Eigen::MatrixXcd apply_activation(const ActivationParams& params, Branch branch, const Eigen::MatrixXcd& input);

} // namespace lps
