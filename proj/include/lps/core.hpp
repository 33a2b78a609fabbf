#pragma once

#include <Eigen/Core>

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace lps {

using Complex = std::complex<double>;

/// Pixels x frames. Column f holds frame f with x fastest, then y.
using Casorati = Eigen::MatrixXcd;
using CasoratiView = Eigen::Map<const Casorati>;

struct Shape {
    std::size_t nx = 1, ny = 1, nt = 1;

    std::size_t pixels() const { return nx * ny; }
    std::size_t size() const { return nx * ny * nt; }
    bool operator==(const Shape&) const = default;
};

/// Complex dynamic image stack (x, y, t), x fastest. Immutable after construction,
/// rejects non-finite samples.
class ImageSequence {
public:
    ImageSequence() = default;
    ImageSequence(Shape shape, std::vector<Complex> values);
    /// Zero-filled sequence.
    explicit ImageSequence(Shape shape);

    const Shape& shape() const { return shape_; }
    std::size_t nx() const { return shape_.nx; }
    std::size_t ny() const { return shape_.ny; }
    std::size_t nt() const { return shape_.nt; }

    std::span<const Complex> values() const { return values_; }
    const Complex& operator()(std::size_t x, std::size_t y, std::size_t t) const {
        return values_[x + shape_.nx * (y + shape_.ny * t)];
    }

private:
    Shape shape_{};
    std::vector<Complex> values_;
};

/// Element (p, f) is pixel p of frame f. Zero-copy.
CasoratiView to_casorati(const ImageSequence& seq);
ImageSequence from_casorati(const Eigen::Ref<const Casorati>& m, std::size_t nx, std::size_t ny);

struct KPoint {
    double kx = 0, ky = 0; // cycles/pixel
};

/// Radial multi-coil samples. Sample (c, s, r) lives at index (c * nspokes + s) * nread + r,
/// trajectory point (s, r) at s * nread + r.
class KSpaceDataset {
public:
    KSpaceDataset() = default;
    KSpaceDataset(std::size_t ncoils, std::size_t nspokes, std::size_t nread,
                  std::vector<Complex> samples, std::vector<KPoint> traj,
                  std::vector<std::size_t> binning);

    std::size_t ncoils() const { return ncoils_; }
    std::size_t nspokes() const { return nspokes_; }
    std::size_t nread() const { return nread_; }
    /// Number of frames covered by the binning.
    std::size_t nframes() const { return binning_.empty() ? 0 : binning_.back() + 1; }

    std::span<const Complex> samples() const { return samples_; }
    std::span<const KPoint> traj() const { return traj_; }
    std::span<const std::size_t> binning() const { return binning_; }

    /// Same geometry, new sample values.
    KSpaceDataset with_samples(std::vector<Complex> samples) const;

private:
    std::size_t ncoils_ = 0, nspokes_ = 0, nread_ = 0;
    std::vector<Complex> samples_;
    std::vector<KPoint> traj_;
    std::vector<std::size_t> binning_;
};

/// One complex map per coil, each nx*ny with x fastest.
class CoilSensitivities {
public:
    CoilSensitivities() = default;
    CoilSensitivities(std::size_t nx, std::size_t ny, std::vector<Eigen::VectorXcd> maps);

    std::size_t ncoils() const { return maps_.size(); }
    std::size_t nx() const { return nx_; }
    std::size_t ny() const { return ny_; }
    const Eigen::VectorXcd& map(std::size_t c) const { return maps_[c]; }
    /// Sum over coils of |s_c|^2 per pixel.
    Eigen::VectorXd sum_of_squares() const;

    /// All-ones single coil.
    static CoilSensitivities unit(std::size_t nx, std::size_t ny);

private:
    std::size_t nx_ = 0, ny_ = 0;
    std::vector<Eigen::VectorXcd> maps_;
};

} // namespace lps
