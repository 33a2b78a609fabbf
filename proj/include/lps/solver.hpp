#pragma once

// Chambolle-Pock primal-dual iteration for
//
//   min_{L,S} 1/2 ||A(L + S) - d||^2 + lambda_L ||L||_* + lambda_S ||T S||_1
//
// The k-space dual M only enters the primal updates through A*M, so the production
// iteration carries W = A*M in image space and applies A*A through the Toeplitz normal
// operator. solve_reference() runs the literal k-space form with the direct operators.

#include "lps/core.hpp"
#include "lps/operators.hpp"
#include "lps/prox.hpp"

#include <memory>
#include <optional>
#include <vector>

namespace lps {

struct StepSizes {
    double rho = 0, tau = 0;
};

struct ProblemOptions {
    int power_iterations = 100;
    std::uint64_t power_seed = 0x5eed;
    /// rho = tau = step_fraction / sqrt(4 ||A||^2 + ||T||^2).
    double step_fraction = 0.99;
    /// Overrides the estimate when set (e.g. to share steps across a dataset).
    std::optional<StepSizes> steps;
};

/// Everything about one dataset that stays fixed across iterations.
class ReconProblem {
public:
    ReconProblem(const KSpaceDataset& data, const CoilSensitivities& sens, const ProblemOptions& opts = {});

    const EncodingOperator& A() const { return A_; }
    const NormalOperator& AhA() const { return AhA_; }
    const TemporalDiff& T() const { return T_; }
    const Eigen::VectorXcd& data() const { return d_; }
    const Casorati& Ahd() const { return Ahd_; }
    /// Best rank-1 approximation of A*d, scaled to the least-squares multiple fitting d.
    const Casorati& initial_L() const { return L0_; }

    double norm_A() const { return norm_A_; }
    double norm_T() const { return norm_T_; }
    StepSizes steps() const { return steps_; }
    std::size_t nx() const { return A_.nx(); }
    std::size_t ny() const { return A_.ny(); }
    std::size_t nt() const { return A_.nt(); }

private:
    EncodingOperator A_;
    NormalOperator AhA_;
    TemporalDiff T_;
    Eigen::VectorXcd d_;
    Casorati Ahd_, L0_;
    double norm_A_ = 0, norm_T_ = 0;
    StepSizes steps_;
};

/// Iterate of the image-space form. W = A*M.
struct LSState {
    Casorati L, S, Lbar, Sbar, W, N;
    StepSizes steps;
    std::size_t iter = 0;
};

/// L = initial_L(), Lbar = L, S = Sbar = W = N = 0.
LSState initial_state(const ReconProblem& P);

/// Activation inputs and factors of one iteration, recorded for differentiation.
struct StepTrace {
    Casorati Z;         // N + rho T Sbar, input of the S-branch activation
    SvdFactors factors; // of L - tau W, input of the L-branch activation
};

/// One iteration with thresholds (tau * threshold_L) on singular values and threshold_S on
/// the dual. Simple mode with (lambda_L, lambda_S) is the classical step.
/// Throws NumericalError if the new iterate is not finite.
void cpa_step(const ReconProblem& P, LSState& st, const ActivationParams& act, StepTrace* trace = nullptr);

struct SolveConfig {
    double lambda_L = 0.0234;
    double lambda_S = 1.6e-5;
    std::size_t max_iter = 100;
    /// Stop once ||x_k+1 - x_k|| / ||x_k|| < stop_tol, x = L + S.
    std::optional<double> stop_tol;
};

struct Reconstruction {
    Casorati L, S;
    std::size_t iterations = 0;
    Casorati sum() const { return L + S; }
};

Reconstruction cpa_solve(const ReconProblem& P, const SolveConfig& cfg);

/// Literal k-space iteration with the direct A and A*; for verification.
Reconstruction solve_reference(const ReconProblem& P, const SolveConfig& cfg);

/// 1/2 ||A(L+S) - d||^2 + lambda_L ||L||_* + lambda_S ||T S||_1 (A applied directly).
double objective(const Casorati& L, const Casorati& S, const ReconProblem& P, double lambda_L, double lambda_S);

struct Example {
    std::shared_ptr<const ReconProblem> problem;
    Casorati truth;
};

struct GridSearchResult {
    double lambda_L = 0, lambda_S = 0;
    double best_mae = 0;
    /// mae[i][j] for lambda_L_grid[i], lambda_S_grid[j].
    std::vector<std::vector<double>> mae;
};

/// Minimizes the mean whole-sequence MAE over the set; ties go to the smaller lambda_L,
/// then the smaller lambda_S. cfg.lambda_* are ignored.
GridSearchResult grid_search(const std::vector<Example>& train, const std::vector<double>& lambda_L_grid,
                             const std::vector<double>& lambda_S_grid, const SolveConfig& cfg);

} // namespace lps
