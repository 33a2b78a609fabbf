#include "lps/operators.hpp"

#include "lps/error.hpp"
#include "lps/random.hpp"

#include <fftw3.h>
#include <omp.h>

#include <cmath>
#include <mutex>
#include <numbers>

namespace lps {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// FFTW planning is not thread-safe.
std::mutex& fftw_planner_mutex() {
    static std::mutex m;
    return m;
}

// Unit phasors exp(sign * 2*pi*i * k * coord(j)) for j in [0, n).
template <class Coord>
void phasors(double k, std::size_t n, Coord coord, double sign, std::vector<double>& re,
             std::vector<double>& im) {
    re.resize(n);
    im.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
        const double ph = sign * kTwoPi * k * coord(j);
        re[j] = std::cos(ph);
        im[j] = std::sin(ph);
    }
}

} // namespace

void set_threads(int n) {
    if (n > 0) omp_set_num_threads(n);
}

EncodingOperator::EncodingOperator(CoilSensitivities sens, const KSpaceDataset& geometry)
    : sens_(std::move(sens)), traj_(geometry.traj().begin(), geometry.traj().end()),
      binning_(geometry.binning().begin(), geometry.binning().end()), nt_(geometry.nframes()),
      nspokes_(geometry.nspokes()), nread_(geometry.nread()) {
    if (sens_.ncoils() != geometry.ncoils())
        throw UsageError("EncodingOperator: coil count differs between sensitivities and data");
    scale_ = 1.0 / std::sqrt(static_cast<double>(sens_.nx() * sens_.ny()));
    frame_start_.assign(nt_ + 1, nspokes_);
    for (std::size_t s = nspokes_; s-- > 0;) frame_start_[binning_[s]] = s;
}

void EncodingOperator::check_image(const Casorati& x) const {
    if (static_cast<std::size_t>(x.rows()) != nx() * ny() || static_cast<std::size_t>(x.cols()) != nt_)
        throw UsageError("EncodingOperator: image shape mismatch");
}

Eigen::VectorXcd EncodingOperator::forward(const Casorati& x) const {
    check_image(x);
    const std::size_t NX = nx(), NY = ny(), npix = NX * NY;
    Eigen::VectorXcd out(static_cast<Eigen::Index>(nsamples()));
    const auto jobs = static_cast<long>(ncoils() * nspokes_);

#pragma omp parallel
    {
        std::vector<double> wr(npix), wi(npix), exr, exi, eyr, eyi;
#pragma omp for schedule(static)
        for (long job = 0; job < jobs; ++job) {
            const auto c = static_cast<std::size_t>(job) / nspokes_;
            const auto s = static_cast<std::size_t>(job) % nspokes_;
            const auto f = static_cast<Eigen::Index>(binning_[s]);
            const auto& sm = sens_.map(c);
            for (std::size_t p = 0; p < npix; ++p) {
                const Complex w = sm(static_cast<Eigen::Index>(p)) * x(static_cast<Eigen::Index>(p), f);
                wr[p] = w.real();
                wi[p] = w.imag();
            }
            for (std::size_t r = 0; r < nread_; ++r) {
                const KPoint k = traj_[s * nread_ + r];
                phasors(k.kx, NX, [&](std::size_t j) { return xc(j); }, -1.0, exr, exi);
                phasors(k.ky, NY, [&](std::size_t j) { return yc(j); }, -1.0, eyr, eyi);
                double ar = 0, ai = 0;
                for (std::size_t y = 0; y < NY; ++y) {
                    double rr = 0, ri = 0;
                    const double* pr = &wr[y * NX];
                    const double* pi = &wi[y * NX];
                    for (std::size_t xx = 0; xx < NX; ++xx) {
                        rr += exr[xx] * pr[xx] - exi[xx] * pi[xx];
                        ri += exr[xx] * pi[xx] + exi[xx] * pr[xx];
                    }
                    ar += eyr[y] * rr - eyi[y] * ri;
                    ai += eyr[y] * ri + eyi[y] * rr;
                }
                out(static_cast<Eigen::Index>((c * nspokes_ + s) * nread_ + r)) = Complex(ar, ai) * scale_;
            }
        }
    }
    return out;
}

Casorati EncodingOperator::adjoint(const Eigen::VectorXcd& y) const {
    if (static_cast<std::size_t>(y.size()) != nsamples())
        throw UsageError("EncodingOperator: k-space size mismatch");
    const std::size_t NX = nx(), NY = ny(), npix = NX * NY;
    Casorati out = Casorati::Zero(static_cast<Eigen::Index>(npix), static_cast<Eigen::Index>(nt_));

#pragma omp parallel
    {
        std::vector<double> ir(npix), ii(npix), exr, exi, eyr, eyi;
#pragma omp for schedule(static)
        for (long fl = 0; fl < static_cast<long>(nt_); ++fl) {
            const auto f = static_cast<std::size_t>(fl);
            for (std::size_t c = 0; c < ncoils(); ++c) {
                std::fill(ir.begin(), ir.end(), 0.0);
                std::fill(ii.begin(), ii.end(), 0.0);
                for (std::size_t s = frame_start_[f]; s < frame_start_[f + 1]; ++s) {
                    for (std::size_t r = 0; r < nread_; ++r) {
                        const KPoint k = traj_[s * nread_ + r];
                        const Complex v = y(static_cast<Eigen::Index>((c * nspokes_ + s) * nread_ + r));
                        phasors(k.kx, NX, [&](std::size_t j) { return xc(j); }, 1.0, exr, exi);
                        phasors(k.ky, NY, [&](std::size_t j) { return yc(j); }, 1.0, eyr, eyi);
                        for (std::size_t yy = 0; yy < NY; ++yy) {
                            const double tr = v.real() * eyr[yy] - v.imag() * eyi[yy];
                            const double ti = v.real() * eyi[yy] + v.imag() * eyr[yy];
                            double* pr = &ir[yy * NX];
                            double* pi = &ii[yy * NX];
                            for (std::size_t xx = 0; xx < NX; ++xx) {
                                pr[xx] += tr * exr[xx] - ti * exi[xx];
                                pi[xx] += tr * exi[xx] + ti * exr[xx];
                            }
                        }
                    }
                }
                const auto& sm = sens_.map(c);
                for (std::size_t p = 0; p < npix; ++p) {
                    const auto pi = static_cast<Eigen::Index>(p);
                    out(pi, fl) += std::conj(sm(pi)) * Complex(ir[p], ii[p]) * scale_;
                }
            }
        }
    }
    return out;
}

KSpaceDataset EncodingOperator::forward(const ImageSequence& seq) const {
    const Casorati x = to_casorati(seq);
    const Eigen::VectorXcd y = forward(x);
    return KSpaceDataset(ncoils(), nspokes_, nread_, std::vector<Complex>(y.begin(), y.end()), traj_, binning_);
}

ImageSequence EncodingOperator::adjoint(const KSpaceDataset& data) const {
    if (data.ncoils() != ncoils() || data.nspokes() != nspokes_ || data.nread() != nread_)
        throw UsageError("EncodingOperator: dataset geometry mismatch");
    const Eigen::VectorXcd y =
        Eigen::Map<const Eigen::VectorXcd>(data.samples().data(), static_cast<Eigen::Index>(data.samples().size()));
    return from_casorati(adjoint(y), nx(), ny());
}

// --- Toeplitz normal operator ---------------------------------------------------------

struct NormalOperator::Impl {
    std::size_t nx = 0, ny = 0, nt = 0, gx = 0, gy = 0;
    std::vector<Eigen::VectorXcd> sens;
    std::vector<std::vector<Complex>> spectra; // per frame, pre-divided by gx*gy
    fftw_plan fwd = nullptr;
    // Separable passes for apply(): only the first ny rows of the padded grid carry input and
    // only they are read back, so the row transforms skip the other half.
    fftw_plan rows_fwd = nullptr, cols_fwd = nullptr, cols_bwd = nullptr, rows_bwd = nullptr;

    ~Impl() {
        std::lock_guard lock(fftw_planner_mutex());
        for (fftw_plan p : {fwd, rows_fwd, cols_fwd, cols_bwd, rows_bwd})
            if (p) fftw_destroy_plan(p);
    }
};

NormalOperator::NormalOperator(const EncodingOperator& A) : impl_(std::make_unique<Impl>()) {
    auto& m = *impl_;
    m.nx = A.nx();
    m.ny = A.ny();
    m.nt = A.nt();
    m.gx = 2 * m.nx;
    m.gy = 2 * m.ny;
    for (std::size_t c = 0; c < A.ncoils(); ++c) m.sens.push_back(A.sensitivities().map(c));
    const std::size_t gsize = m.gx * m.gy;
    const double inv_n = 1.0 / static_cast<double>(m.nx * m.ny);
    const double inv_g = 1.0 / static_cast<double>(gsize);
    const auto dx = static_cast<long>(m.nx), dy = static_cast<long>(m.ny);

    {
        std::lock_guard lock(fftw_planner_mutex());
        auto* buf = fftw_alloc_complex(gsize);
        m.fwd = fftw_plan_dft_2d(static_cast<int>(m.gy), static_cast<int>(m.gx), buf, buf, FFTW_FORWARD,
                                 FFTW_ESTIMATE);
        const int gx = static_cast<int>(m.gx), gy = static_cast<int>(m.gy), ny = static_cast<int>(m.ny);
        auto rows = [&](int sign) {
            return fftw_plan_many_dft(1, &gx, ny, buf, nullptr, 1, gx, buf, nullptr, 1, gx, sign, FFTW_ESTIMATE);
        };
        auto cols = [&](int sign) {
            return fftw_plan_many_dft(1, &gy, gx, buf, nullptr, gx, 1, buf, nullptr, gx, 1, sign, FFTW_ESTIMATE);
        };
        m.rows_fwd = rows(FFTW_FORWARD);
        m.cols_fwd = cols(FFTW_FORWARD);
        m.cols_bwd = cols(FFTW_BACKWARD);
        m.rows_bwd = rows(FFTW_BACKWARD);
        fftw_free(buf);
    }

    m.spectra.assign(m.nt, {});
    const auto traj = A.traj();
    const auto starts = A.frame_offsets();
    const std::size_t nread = A.nread();
#pragma omp parallel
    {
        auto* buf = fftw_alloc_complex(gsize);
        Eigen::MatrixXcd Ex, Ey, H;
#pragma omp for schedule(static)
        for (long fl = 0; fl < static_cast<long>(m.nt); ++fl) {
            const auto f = static_cast<std::size_t>(fl);
            // h(d) = (1/N) sum_s exp(+2 pi i k_s . d) = (Ey^T Ex)(dy, dx), d in [-(n-1), n-1]^2.
            const std::size_t first = starts[f] * nread;
            const auto ns = static_cast<Eigen::Index>((starts[f + 1] - starts[f]) * nread);
            Ex.resize(ns, 2 * dx - 1);
            Ey.resize(ns, 2 * dy - 1);
            for (Eigen::Index s = 0; s < ns; ++s) {
                const KPoint k = traj[first + static_cast<std::size_t>(s)];
                for (long j = 0; j < 2 * dx - 1; ++j) Ex(s, j) = std::polar(1.0, kTwoPi * k.kx * double(j - dx + 1));
                for (long j = 0; j < 2 * dy - 1; ++j) Ey(s, j) = std::polar(1.0, kTwoPi * k.ky * double(j - dy + 1));
            }
            H.noalias() = Ey.transpose() * Ex;
            for (std::size_t i = 0; i < gsize; ++i) buf[i][0] = buf[i][1] = 0.0;
            for (long jy = 0; jy < 2 * dy - 1; ++jy) {
                const std::size_t row = static_cast<std::size_t>((jy - dy + 1 + long(m.gy)) % long(m.gy)) * m.gx;
                for (long jx = 0; jx < 2 * dx - 1; ++jx) {
                    const std::size_t idx = row + static_cast<std::size_t>((jx - dx + 1 + long(m.gx)) % long(m.gx));
                    buf[idx][0] = H(jy, jx).real() * inv_n;
                    buf[idx][1] = H(jy, jx).imag() * inv_n;
                }
            }
            fftw_execute_dft(m.fwd, buf, buf);
            auto& spec = m.spectra[f];
            spec.resize(gsize);
            for (std::size_t i = 0; i < gsize; ++i) spec[i] = Complex(buf[i][0], buf[i][1]) * inv_g;
        }
        fftw_free(buf);
    }
}

NormalOperator::~NormalOperator() = default;
NormalOperator::NormalOperator(NormalOperator&&) noexcept = default;
NormalOperator& NormalOperator::operator=(NormalOperator&&) noexcept = default;

std::size_t NormalOperator::pixels() const { return impl_->nx * impl_->ny; }
std::size_t NormalOperator::nt() const { return impl_->nt; }

void NormalOperator::apply(const Casorati& x, Casorati& out) const {
    const auto& m = *impl_;
    const std::size_t npix = m.nx * m.ny, gsize = m.gx * m.gy;
    if (static_cast<std::size_t>(x.rows()) != npix || static_cast<std::size_t>(x.cols()) != m.nt)
        throw UsageError("NormalOperator: image shape mismatch");
    out.resize(x.rows(), x.cols());

#pragma omp parallel
    {
        auto* buf = fftw_alloc_complex(gsize);
#pragma omp for schedule(static)
        for (long fl = 0; fl < static_cast<long>(m.nt); ++fl) {
            const auto& spec = m.spectra[static_cast<std::size_t>(fl)];
            auto col = out.col(fl);
            col.setZero();
            for (const auto& sm : m.sens) {
                std::fill(&buf[0][0], &buf[0][0] + 2 * gsize, 0.0);
                for (std::size_t y = 0; y < m.ny; ++y)
                    for (std::size_t xx = 0; xx < m.nx; ++xx) {
                        const auto p = static_cast<Eigen::Index>(xx + m.nx * y);
                        const Complex v = sm(p) * x(p, fl);
                        buf[xx + m.gx * y][0] = v.real();
                        buf[xx + m.gx * y][1] = v.imag();
                    }
                fftw_execute_dft(m.rows_fwd, buf, buf);
                fftw_execute_dft(m.cols_fwd, buf, buf);
                for (std::size_t i = 0; i < gsize; ++i) {
                    const double br = buf[i][0], bi = buf[i][1];
                    const double sr = spec[i].real(), si = spec[i].imag();
                    buf[i][0] = br * sr - bi * si;
                    buf[i][1] = br * si + bi * sr;
                }
                fftw_execute_dft(m.cols_bwd, buf, buf);
                fftw_execute_dft(m.rows_bwd, buf, buf);
                for (std::size_t y = 0; y < m.ny; ++y)
                    for (std::size_t xx = 0; xx < m.nx; ++xx) {
                        const auto p = static_cast<Eigen::Index>(xx + m.nx * y);
                        col(p) += std::conj(sm(p)) * Complex(buf[xx + m.gx * y][0], buf[xx + m.gx * y][1]);
                    }
            }
        }
        fftw_free(buf);
    }
}

Casorati NormalOperator::apply(const Casorati& x) const {
    Casorati out;
    apply(x, out);
    return out;
}

// --- temporal differences ---------------------------------------------------------------

TemporalDiff::TemporalDiff(std::size_t nt) : nt_(nt) {
    if (nt < 2) throw UsageError("TemporalDiff: need at least 2 frames");
}

Casorati TemporalDiff::forward(const Casorati& x) const {
    if (static_cast<std::size_t>(x.cols()) != nt_) throw UsageError("TemporalDiff: frame count mismatch");
    const auto n = static_cast<Eigen::Index>(nt_);
    return x.rightCols(n - 1) - x.leftCols(n - 1);
}

Casorati TemporalDiff::adjoint(const Casorati& d) const {
    if (static_cast<std::size_t>(d.cols()) + 1 != nt_) throw UsageError("TemporalDiff: frame count mismatch");
    const auto n = static_cast<Eigen::Index>(nt_);
    Casorati x(d.rows(), n);
    x.col(0) = -d.col(0);
    for (Eigen::Index f = 1; f < n - 1; ++f) x.col(f) = d.col(f - 1) - d.col(f);
    x.col(n - 1) = d.col(n - 2);
    return x;
}

// --- operator norms ----------------------------------------------------------------------

double op_norm(const NormalApply& normal, Eigen::Index rows, Eigen::Index cols, int n_iter,
               std::uint64_t seed) {
    if (n_iter < 1) throw UsageError("op_norm: n_iter must be >= 1");
    Rng rng(seed);
    Casorati x(rows, cols);
    for (Eigen::Index j = 0; j < x.cols(); ++j)
        for (Eigen::Index i = 0; i < x.rows(); ++i) x(i, j) = Complex(rng.normal(), rng.normal());
    x /= x.norm();
    Casorati y;
    double lambda = 0;
    for (int it = 0; it < n_iter; ++it) {
        normal(x, y);
        // Rayleigh quotient of the normalized power iterate; m_{2k+1}/m_{2k} is nondecreasing.
        lambda = x.cwiseProduct(y.conjugate()).sum().real();
        const double ny = y.norm();
        if (ny == 0.0) return 0.0;
        x = y / ny;
    }
    return std::sqrt(std::max(lambda, 0.0));
}

double op_norm(const NormalOperator& AhA, int n_iter, std::uint64_t seed) {
    return op_norm([&](const Casorati& x, Casorati& y) { AhA.apply(x, y); },
                   static_cast<Eigen::Index>(AhA.pixels()), static_cast<Eigen::Index>(AhA.nt()), n_iter, seed);
}

double op_norm(const TemporalDiff& T, Eigen::Index pixels, int n_iter, std::uint64_t seed) {
    return op_norm([&](const Casorati& x, Casorati& y) { y = T.adjoint(T.forward(x)); }, pixels,
                   static_cast<Eigen::Index>(T.nt()), n_iter, seed);
}

// --- serial reference ---------------------------------------------------------------------

namespace reference {

Eigen::VectorXcd forward(const EncodingOperator& A, const Casorati& x) {
    const std::size_t NX = A.nx(), NY = A.ny();
    const double scale = 1.0 / std::sqrt(static_cast<double>(NX * NY));
    Eigen::VectorXcd out(static_cast<Eigen::Index>(A.nsamples()));
    for (std::size_t c = 0; c < A.ncoils(); ++c) {
        const auto& sm = A.sensitivities().map(c);
        for (std::size_t s = 0; s < A.nspokes(); ++s) {
            const auto f = static_cast<Eigen::Index>(A.binning()[s]);
            for (std::size_t r = 0; r < A.nread(); ++r) {
                const KPoint k = A.traj()[s * A.nread() + r];
                Complex acc = 0;
                for (std::size_t y = 0; y < NY; ++y)
                    for (std::size_t xx = 0; xx < NX; ++xx) {
                        const auto p = static_cast<Eigen::Index>(xx + NX * y);
                        const double ph = -kTwoPi * (k.kx * A.xc(xx) + k.ky * A.yc(y));
                        acc += sm(p) * x(p, f) * std::polar(1.0, ph);
                    }
                out(static_cast<Eigen::Index>((c * A.nspokes() + s) * A.nread() + r)) = acc * scale;
            }
        }
    }
    return out;
}

Casorati adjoint(const EncodingOperator& A, const Eigen::VectorXcd& y) {
    const std::size_t NX = A.nx(), NY = A.ny();
    const double scale = 1.0 / std::sqrt(static_cast<double>(NX * NY));
    Casorati out = Casorati::Zero(static_cast<Eigen::Index>(NX * NY), static_cast<Eigen::Index>(A.nt()));
    for (std::size_t c = 0; c < A.ncoils(); ++c) {
        const auto& sm = A.sensitivities().map(c);
        for (std::size_t s = 0; s < A.nspokes(); ++s) {
            const auto f = static_cast<Eigen::Index>(A.binning()[s]);
            for (std::size_t r = 0; r < A.nread(); ++r) {
                const KPoint k = A.traj()[s * A.nread() + r];
                const Complex v = y(static_cast<Eigen::Index>((c * A.nspokes() + s) * A.nread() + r));
                for (std::size_t yy = 0; yy < NY; ++yy)
                    for (std::size_t xx = 0; xx < NX; ++xx) {
                        const auto p = static_cast<Eigen::Index>(xx + NX * yy);
                        const double ph = kTwoPi * (k.kx * A.xc(xx) + k.ky * A.yc(yy));
                        out(p, f) += std::conj(sm(p)) * v * std::polar(1.0, ph) * scale;
                    }
            }
        }
    }
    return out;
}

Casorati normal(const EncodingOperator& A, const Casorati& x) { return adjoint(A, forward(A, x)); }

} // namespace reference

} // namespace lps
