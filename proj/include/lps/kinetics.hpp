#pragma once

// Tracer kinetics shared by the simulator and the fitter: ATH residue, gamma-variate AIF,
// tissue curves, and the signal model.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace lps {

/// F_p in mL/min/mL, E in [0, 1), T_c in s, v_e in (0, 1].
struct Perfusion {
    double Fp = 0.3, E = 0.3, Tc = 8.0, ve = 0.3;

    bool valid() const;
};

struct DerivedParams {
    double Ktrans = 0, PS = 0;
};

/// K_trans = E F_p, PS = -F_p ln(1 - E).
DerivedParams derive_params(const Perfusion& p);

/// 1 on [0, T_c), E exp(-(E F_p / v_e)(t - T_c)) afterwards, F_p converted to 1/s.
double ath_residue(double t, const Perfusion& p);

/// A (t - t0)^a exp(-(t - t0)/b) for t > t0, A chosen so the peak (at t0 + a b) is 1.
struct GammaVariate {
    double t0 = 5.0, a = 2.0, b = 4.0;

    double operator()(double t) const;
    std::vector<double> sample(std::span<const double> times) const;
};

/// F_p (aif * R)(t_n) on the grid t_n = n dt, with the AIF linearly interpolated between its
/// samples (zero before t = 0) and the residue integrated exactly on each segment.
std::vector<double> tissue_curve(const Perfusion& p, std::span<const double> aif, double dt);

enum class SignalMode { Linear, Spgr };

struct SignalParams {
    SignalMode mode = SignalMode::Linear;
    double gain = 1.0;      // linear: S = baseline + gain C
    double TR = 7.5e-3;     // s
    double flip_deg = 20.0; // degrees
    double R10 = 1.0 / 1.4; // 1/s
    double r1 = 4.5;        // relaxivity, 1/(s * concentration unit)
};

std::string_view to_string(SignalMode m);
SignalMode parse_signal_mode(std::string_view s);

/// Intensity for concentration C. In spgr mode M0 is chosen so that C = 0 gives `baseline`.
double signal_model(double C, double baseline, const SignalParams& sp);

struct ConcentrationSample {
    double value = 0;
    bool clamped = false;
};

/// Inverse of signal_model; spgr by bisection. Samples outside the invertible range are
/// clamped and flagged.
ConcentrationSample to_concentration(double S, double baseline, const SignalParams& sp);

struct RoiMask {
    std::string name;
    std::vector<std::uint8_t> inside; // nx * ny, x fastest
};

/// Per-pixel kinetic parameters. Unfitted pixels hold zeros with fitted = 0.
struct PerfusionMaps {
    std::size_t nx = 0, ny = 0;
    std::vector<double> Fp, E, Tc, ve, Ktrans, PS, residual;
    std::vector<std::uint8_t> converged, fitted;

    PerfusionMaps() = default;
    PerfusionMaps(std::size_t nx, std::size_t ny);

    void set(std::size_t pixel, const Perfusion& p, double residual, bool converged);
    Perfusion at(std::size_t pixel) const;
};

enum class MapParam { Fp, E, Tc, ve, Ktrans, PS };
std::string_view to_string(MapParam p);
const std::vector<double>& field(const PerfusionMaps& m, MapParam p);

} // namespace lps
