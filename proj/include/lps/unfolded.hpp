#pragma once

// Deep-unfolded L+S network: layer k is one CPA iteration whose two thresholding steps are
// replaced by learnable activations. Gradients are computed by a hand-written reverse pass
// over a per-layer tape.

#include "lps/solver.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace lps {

struct UnfoldedModel {
    ActivationMode mode = ActivationMode::Simple;
    bool tied = true;
    std::size_t layers = 100;
    /// One record when tied, `layers` records otherwise.
    std::vector<ActivationParams> params;

    /// Thresholds (lambda_L, lambda_S), slopes 1.
    static UnfoldedModel make(ActivationMode mode, bool tied, std::size_t layers, double lambda_L, double lambda_S);

    const ActivationParams& layer(std::size_t k) const { return tied ? params.front() : params.at(k); }
    /// 2K / 4K untied, 2 / 4 tied.
    std::size_t parameter_count() const;

    /// Per record: threshold_L, threshold_S, then slope_L, slope_S in soft mode.
    std::vector<double> flatten() const;
    void unflatten(std::span<const double> values);
    /// Clamps thresholds at zero.
    void project();
    void validate() const;
};

struct GradientTape {
    std::vector<StepTrace> steps;
    /// Optional per-layer input states (record_states = true).
    std::vector<LSState> states;
};

struct ForwardResult {
    Casorati L, S;
    GradientTape tape;
    Casorati sum() const { return L + S; }
};

/// Runs the K layers from initial_state(P). Throws NumericalError naming the failing layer.
ForwardResult forward(const UnfoldedModel& model, const ReconProblem& P, bool record_states = false);

/// Loss and gradient w.r.t. the reconstruction L + S.
struct LossValue {
    double value = 0;
    Casorati grad;
};

/// Mean |recon - gt| over the first ceil(fraction * nt) frames.
double mae_loss(const Casorati& recon, const Casorati& gt, double fraction);
double mae_loss(const ImageSequence& recon, const ImageSequence& gt, double fraction);
LossValue mae_loss_with_grad(const Casorati& recon, const Casorati& gt, double fraction);

enum class SvdBackend {
    Exact,  ///< full SVD perturbation
    Frozen, ///< U, V held constant
};

struct BackwardResult {
    std::vector<double> grad; // flatten() layout
    std::size_t fallbacks = 0; // layers that fell back to the frozen backend
};

BackwardResult backward(const UnfoldedModel& model, const ReconProblem& P, const GradientTape& tape,
                        const Casorati& grad_recon, SvdBackend backend = SvdBackend::Exact);

/// Vector-Jacobian product of the spectral activation X -> U g(sigma) V^H at the recorded
/// factors. Adds the threshold/slope partials to d_alpha / d_slope. Returns false if it had
/// to fall back to the frozen backend because of a singular-value cluster.
bool spectral_vjp(ActivationMode mode, const SvdFactors& f, double alpha, double slope, const Casorati& gout,
                  SvdBackend backend, Casorati& gin, double& d_alpha, double& d_slope);

/// Vector-Jacobian product of the elementwise activation.
void elementwise_vjp(ActivationMode mode, const Casorati& Z, double alpha, double slope, const Casorati& gout,
                     Casorati& gin, double& d_alpha, double& d_slope);

struct AdamState {
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    std::vector<double> m, v;
    std::size_t t = 0;

    /// In-place update of params with gradient grad.
    void step(std::vector<double>& params, const std::vector<double>& grad, double lr);
};

struct TrainConfig {
    std::size_t epochs = 200;
    double learning_rate = 2e-4;
    double loss_fraction = 0.15;
    std::size_t batch_size = 1;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    std::uint64_t seed = 0;
    SvdBackend backend = SvdBackend::Exact;

    void validate() const;
};

struct TrainResult {
    UnfoldedModel model;
    double initial_loss = 0;
    std::vector<double> history; // mean training loss per epoch
    std::size_t fallbacks = 0;
};

/// Adam on the fractional MAE, sequences shuffled per epoch, thresholds projected to >= 0
/// after every step. Throws NumericalError with the epoch index on divergence.
TrainResult train(UnfoldedModel model, const std::vector<Example>& dataset, const TrainConfig& cfg);

/// `layer_index,branch,name,value` per parameter (layer_index = -1 when tied), preceded by a
/// `# activation = <mode>, layers = <K>` comment line.
void write_params(const std::filesystem::path& path, const UnfoldedModel& model);
UnfoldedModel read_params(const std::filesystem::path& path);

} // namespace lps
