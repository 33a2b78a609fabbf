#include "lps/core.hpp"

#include "lps/error.hpp"

#include <cmath>
#include <string>

namespace lps {

namespace {

bool finite(const Complex& z) { return std::isfinite(z.real()) && std::isfinite(z.imag()); }

} // namespace

ImageSequence::ImageSequence(Shape shape, std::vector<Complex> values)
    : shape_(shape), values_(std::move(values)) {
    if (shape_.nx == 0 || shape_.ny == 0 || shape_.nt == 0)
        throw UsageError("ImageSequence: every dimension must be >= 1");
    if (values_.size() != shape_.size())
        throw UsageError("ImageSequence: expected " + std::to_string(shape_.size()) +
                         " values, got " + std::to_string(values_.size()));
    for (const auto& z : values_)
        if (!finite(z)) throw NumericalError("ImageSequence: non-finite value");
}

ImageSequence::ImageSequence(Shape shape)
    : ImageSequence(shape, std::vector<Complex>(shape.size())) {}

CasoratiView to_casorati(const ImageSequence& seq) {
    return CasoratiView(seq.values().data(), static_cast<Eigen::Index>(seq.shape().pixels()),
                        static_cast<Eigen::Index>(seq.nt()));
}

ImageSequence from_casorati(const Eigen::Ref<const Casorati>& m, std::size_t nx, std::size_t ny) {
    if (static_cast<std::size_t>(m.rows()) != nx * ny)
        throw UsageError("from_casorati: row count does not match nx*ny");
    std::vector<Complex> v(static_cast<std::size_t>(m.size()));
    for (Eigen::Index f = 0; f < m.cols(); ++f)
        for (Eigen::Index p = 0; p < m.rows(); ++p)
            v[static_cast<std::size_t>(p + f * m.rows())] = m(p, f);
    return ImageSequence({nx, ny, static_cast<std::size_t>(m.cols())}, std::move(v));
}

KSpaceDataset::KSpaceDataset(std::size_t ncoils, std::size_t nspokes, std::size_t nread,
                             std::vector<Complex> samples, std::vector<KPoint> traj,
                             std::vector<std::size_t> binning)
    : ncoils_(ncoils), nspokes_(nspokes), nread_(nread), samples_(std::move(samples)),
      traj_(std::move(traj)), binning_(std::move(binning)) {
    if (ncoils_ == 0 || nspokes_ == 0 || nread_ == 0)
        throw UsageError("KSpaceDataset: empty dimension");
    if (samples_.size() != ncoils_ * nspokes_ * nread_)
        throw UsageError("KSpaceDataset: sample count mismatch");
    if (traj_.size() != nspokes_ * nread_)
        throw UsageError("KSpaceDataset: trajectory size mismatch");
    if (binning_.size() != nspokes_) throw UsageError("KSpaceDataset: binning size mismatch");
    if (binning_.front() != 0) throw UsageError("KSpaceDataset: frame 0 has no spokes");
    for (std::size_t s = 1; s < nspokes_; ++s) {
        // Non-decreasing with no skipped frame keeps every bin non-empty.
        if (binning_[s] < binning_[s - 1] || binning_[s] > binning_[s - 1] + 1)
            throw UsageError("KSpaceDataset: binning must be non-decreasing without gaps");
    }
    for (const auto& k : traj_) {
        if (!std::isfinite(k.kx) || !std::isfinite(k.ky) || std::hypot(k.kx, k.ky) > 0.5 + 1e-6)
            throw UsageError("KSpaceDataset: trajectory point outside the Nyquist disc");
    }
    for (const auto& z : samples_)
        if (!finite(z)) throw NumericalError("KSpaceDataset: non-finite sample");
}

KSpaceDataset KSpaceDataset::with_samples(std::vector<Complex> samples) const {
    return KSpaceDataset(ncoils_, nspokes_, nread_, std::move(samples), traj_, binning_);
}

CoilSensitivities::CoilSensitivities(std::size_t nx, std::size_t ny, std::vector<Eigen::VectorXcd> maps)
    : nx_(nx), ny_(ny), maps_(std::move(maps)) {
    if (maps_.empty()) throw UsageError("CoilSensitivities: need at least one coil");
    for (const auto& m : maps_) {
        if (static_cast<std::size_t>(m.size()) != nx_ * ny_)
            throw UsageError("CoilSensitivities: map size mismatch");
        if (!m.allFinite()) throw NumericalError("CoilSensitivities: non-finite value");
    }
}

Eigen::VectorXd CoilSensitivities::sum_of_squares() const {
    Eigen::VectorXd s = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nx_ * ny_));
    for (const auto& m : maps_) s += m.cwiseAbs2();
    return s;
}

CoilSensitivities CoilSensitivities::unit(std::size_t nx, std::size_t ny) {
    return CoilSensitivities(nx, ny, {Eigen::VectorXcd::Ones(static_cast<Eigen::Index>(nx * ny))});
}

} // namespace lps
