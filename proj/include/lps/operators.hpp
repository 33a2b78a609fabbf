#pragma once

// Linear operators of the L+S reconstruction:
//   A   multi-coil radial encoding, exact nonuniform DFT with a 1/sqrt(nx*ny) factor
//   A*  its conjugate transpose (no density compensation)
//   A*A Toeplitz-embedded normal operator, exact up to FFT rounding
//   T   non-circular forward differences along time, T^T its transpose
//
// Kernels in this header are OpenMP-parallel over independent outputs; each output is a
// serial sum in a fixed order, so results do not depend on the thread count. The serial
// reference versions in lps::reference evaluate every phase factor directly and are kept for
// testing and benchmarking.

#include "lps/core.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

namespace lps {

/// Caps the OpenMP worker count (0 keeps the runtime default).
void set_threads(int n);

class EncodingOperator {
public:
    EncodingOperator(CoilSensitivities sens, const KSpaceDataset& geometry);

    std::size_t nx() const { return sens_.nx(); }
    std::size_t ny() const { return sens_.ny(); }
    std::size_t nt() const { return nt_; }
    std::size_t ncoils() const { return sens_.ncoils(); }
    std::size_t nspokes() const { return nspokes_; }
    std::size_t nread() const { return nread_; }
    std::size_t nsamples() const { return ncoils() * nspokes_ * nread_; }

    const CoilSensitivities& sensitivities() const { return sens_; }
    std::span<const KPoint> traj() const { return traj_; }
    std::span<const std::size_t> binning() const { return binning_; }
    /// First spoke of each frame, plus one past the end.
    std::span<const std::size_t> frame_offsets() const { return frame_start_; }

    /// Centered pixel coordinate: x - nx/2.
    double xc(std::size_t x) const { return static_cast<double>(x) - static_cast<double>(nx() / 2); }
    double yc(std::size_t y) const { return static_cast<double>(y) - static_cast<double>(ny() / 2); }

    Eigen::VectorXcd forward(const Casorati& x) const;
    Casorati adjoint(const Eigen::VectorXcd& y) const;

    KSpaceDataset forward(const ImageSequence& seq) const;
    ImageSequence adjoint(const KSpaceDataset& data) const;

private:
    void check_image(const Casorati& x) const;

    CoilSensitivities sens_;
    std::vector<KPoint> traj_;
    std::vector<std::size_t> binning_;
    std::vector<std::size_t> frame_start_;
    std::size_t nt_ = 0, nspokes_ = 0, nread_ = 0;
    double scale_ = 1.0;
};

/// A*A applied through per-frame circulant embedding on a (2*ny) x (2*nx) grid.
class NormalOperator {
public:
    explicit NormalOperator(const EncodingOperator& A);
    ~NormalOperator();
    NormalOperator(const NormalOperator&) = delete;
    NormalOperator& operator=(const NormalOperator&) = delete;
    NormalOperator(NormalOperator&&) noexcept;
    NormalOperator& operator=(NormalOperator&&) noexcept;

    std::size_t pixels() const;
    std::size_t nt() const;

    void apply(const Casorati& x, Casorati& out) const;
    Casorati apply(const Casorati& x) const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

class TemporalDiff {
public:
    explicit TemporalDiff(std::size_t nt);

    std::size_t nt() const { return nt_; }

    /// pixels x (nt - 1): column f = x[:, f+1] - x[:, f].
    Casorati forward(const Casorati& x) const;
    Casorati adjoint(const Casorati& d) const;

private:
    std::size_t nt_;
};

using NormalApply = std::function<void(const Casorati&, Casorati&)>;

/// Largest singular value of B from power iteration on its normal operator B*B, starting
/// from a seeded Gaussian block of shape rows x cols. Nondecreasing in n_iter.
double op_norm(const NormalApply& normal, Eigen::Index rows, Eigen::Index cols, int n_iter,
               std::uint64_t seed);

double op_norm(const NormalOperator& AhA, int n_iter, std::uint64_t seed);
double op_norm(const TemporalDiff& T, Eigen::Index pixels, int n_iter, std::uint64_t seed);

namespace reference {

/// Serial direct summation with one exp() per (sample, pixel).
Eigen::VectorXcd forward(const EncodingOperator& A, const Casorati& x);
Casorati adjoint(const EncodingOperator& A, const Eigen::VectorXcd& y);
/// adjoint(forward(x)).
Casorati normal(const EncodingOperator& A, const Casorati& x);

} // namespace reference

} // namespace lps
