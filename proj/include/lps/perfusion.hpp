#pragma once

// Pixel-wise ATH fits by Levenberg-Marquardt on transformed parameters
// (log F_p, logit E, log T_c, log v_e).

#include "lps/core.hpp"
#include "lps/kinetics.hpp"

#include <span>
#include <string>
#include <vector>

namespace lps {

struct FitConfig {
    Perfusion init{0.3, 0.3, 8.0, 0.3};
    std::size_t max_iter = 200;
    double step_tol = 1e-8;
    double damping = 1e-3;
    /// Refit non-converged pixels from the fit of their ROI mean curve.
    bool retry = true;
    SignalParams signal;
    /// Frames averaged for the pre-contrast baseline; 0 uses all frames before the AIF onset.
    std::size_t baseline_frames = 0;
};

struct PixelFit {
    Perfusion p;
    double residual = 0; // sum of squares
    double initial_residual = 0;
    bool converged = false;
    std::size_t iterations = 0;
};

/// Levenberg-Marquardt in (log F_p, logit E, log T_c, log v_e), projected onto F_p in
/// [1e-3, 10], T_c in [0.1, 120] s, v_e in [1e-3, 1].
PixelFit fit_pixel(std::span<const double> conc, std::span<const double> aif, double dt, const Perfusion& init,
                   const FitConfig& cfg = {});

/// Concentration curves from the magnitude of each pixel, baseline = mean of the first
/// `baseline_frames` frames.
std::vector<std::vector<double>> concentration_curves(const ImageSequence& seq, std::size_t baseline_frames,
                                                      const SignalParams& sp, std::vector<std::uint8_t>* clamped = nullptr);

/// Fits every pixel in the union of the masks.
PerfusionMaps fit_maps(const ImageSequence& seq, const std::vector<RoiMask>& masks, std::span<const double> aif,
                       double dt, const FitConfig& cfg, double aif_onset);

struct RoiError {
    std::string roi;
    MapParam parameter;
    double mean_rel_err_pct = 0;
    std::size_t pixels = 0;
    std::size_t excluded = 0; // |ref| < 1e-12
};

struct RoiReport {
    std::vector<RoiError> rows;

    const RoiError& at(const std::string& roi, MapParam p) const;
    /// CSV with header `roi,parameter,mean_rel_err_pct`.
    std::string csv() const;
};

/// Parameters reported: F_p, E, T_c, K_trans, PS.
const std::vector<MapParam>& report_params();

RoiReport roi_relative_error(const PerfusionMaps& est, const PerfusionMaps& ref, const std::vector<RoiMask>& masks);

/// Percentage-point differences a - b, same layout.
RoiReport difference(const RoiReport& a, const RoiReport& b);

} // namespace lps
