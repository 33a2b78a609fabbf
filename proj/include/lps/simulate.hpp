#pragma once

// Desk-scale DCE phantom and golden-angle radial multi-coil acquisition.
//
// Frame f covers spokes [f * spf, (f + 1) * spf) and is imaged at t = f * dt with
// dt = spf * decimation * TR: the stack-of-stars slices only cost temporal resolution.
// Trajectories, sensitivities, samples and the ground truth are rounded to binary32 when
// generated, so a dataset read back from disk is identical to the one in memory.

#include "lps/core.hpp"
#include "lps/io.hpp"
#include "lps/kinetics.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace lps {

/// Angle of spoke i in degrees: i * 180 (sqrt(5) - 1) / 2 mod 180.
double golden_angle_deg(std::size_t i);

/// nspokes x nread points, radius uniform in [-0.5, 0.5).
std::vector<KPoint> golden_trajectory(std::size_t nspokes, std::size_t nread, std::size_t first_spoke = 0);

/// Gaussian lobes centred on the image border at equal angles, with a smooth phase, scaled
/// so that the sum of squared magnitudes is 1 at every pixel.
CoilSensitivities synth_sensitivities(std::size_t ncoils, std::size_t nx, std::size_t ny);

/// Pixel coordinates, not normalised. angle in radians.
struct Ellipse {
    double cx = 0, cy = 0, ax = 1, ay = 1, angle = 0;

    bool contains(double x, double y) const;
};

struct RoiSpec {
    std::string name;
    Ellipse region;
    double baseline = 0;
    Perfusion perfusion;
};

struct PhantomSpec {
    std::size_t nx = 32, ny = 32, nt_full = 64;
    double dt = 0.96; // s
    Ellipse head;
    double head_baseline = 0;
    Perfusion head_perfusion;
    Ellipse vessel; // carries the AIF itself
    double vessel_baseline = 0;
    std::vector<RoiSpec> rois;
    double background = 0;
    SignalParams signal;
    GammaVariate aif;

    void validate() const;
    std::vector<double> times() const;

    /// Head with a vessel and four ROIs (left muscle, right muscle, tongue, tumour). Geometry
    /// and kinetics are jittered by the seed; intensities are multiplied by intensity_scale.
    static PhantomSpec desk(std::size_t nx, std::size_t ny, std::size_t nt, double dt, std::uint64_t seed,
                            double intensity_scale = 0.01);
};

struct AcquisitionConfig {
    std::size_t ncoils = 4;
    std::size_t nread = 0; // 0: 2 * nx
    std::size_t spokes_per_frame = 8;
    std::size_t decimation = 16;
    std::size_t spokes_total = 0; // 0: nt * spokes_per_frame * decimation
    double TR = 7.5e-3;
    double flip_deg = 20.0;
    double TE = 1.6e-3; // stored only
    double noise_sigma = 1e-3;
    std::uint64_t seed = 0;
    /// Iterations of the ground-truth least-squares solve.
    std::size_t truth_iterations = 300;

    double frame_period() const { return static_cast<double>(spokes_per_frame * decimation) * TR; }
    void validate(const PhantomSpec& spec) const;
};

/// Noiseless phantom intensity frames.
ImageSequence render_phantom(const PhantomSpec& spec);
PerfusionMaps true_maps(const PhantomSpec& spec);
std::vector<RoiMask> roi_masks(const PhantomSpec& spec);

struct Simulation {
    KSpaceDataset data;
    CoilSensitivities sens;
    ImageSequence truth;
    ImageSequence phantom;
    PerfusionMaps maps;
    std::vector<RoiMask> masks;
    std::vector<double> aif; // sampled on the frame grid
    io::Manifest manifest;
};

/// Undersampled noisy data plus the ground truth reconstructed from fully sampled
/// (spokes_per_frame * decimation spokes per frame) noiseless data.
Simulation simulate_dataset(const PhantomSpec& spec, const AcquisitionConfig& acq);

/// Directory: dataset files, truth.cseq, phantom.cseq, maps.rseq (param, ny, nx),
/// masks.rseq (roi, ny, nx), aif.rseq, manifest.txt.
void write_simulation(const std::filesystem::path& dir, const Simulation& sim);
Simulation read_simulation(const std::filesystem::path& dir);

/// Order of the maps.rseq planes.
const std::vector<MapParam>& map_order();
io::RawArray maps_to_raw(const PerfusionMaps& m);
PerfusionMaps maps_from_raw(const io::RawArray& a);

} // namespace lps
