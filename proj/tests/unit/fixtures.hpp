#pragma once

// Small seeded problems shared by the unit tests.

#include "lps/error.hpp"
#include "lps/random.hpp"
#include "lps/simulate.hpp"
#include "lps/solver.hpp"

#include <memory>

namespace lps::test {

inline Casorati random_casorati(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed, double scale = 1.0) {
    Rng rng(seed);
    Casorati m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = scale * Complex(rng.normal(), rng.normal());
    return m;
}

inline Eigen::VectorXcd random_vector(Eigen::Index n, std::uint64_t seed) {
    Rng rng(seed);
    Eigen::VectorXcd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = Complex(rng.normal(), rng.normal());
    return v;
}

/// Golden-angle geometry with random samples; spf spokes per frame.
inline KSpaceDataset random_dataset(std::size_t nx, std::size_t nt, std::size_t spf, std::size_t ncoils,
                                    std::uint64_t seed, std::size_t nread = 0) {
    if (nread == 0) nread = 2 * nx;
    const std::size_t nspokes = nt * spf;
    std::vector<std::size_t> bins(nspokes);
    for (std::size_t s = 0; s < nspokes; ++s) bins[s] = s / spf;
    const auto y = random_vector(static_cast<Eigen::Index>(ncoils * nspokes * nread), seed);
    return KSpaceDataset(ncoils, nspokes, nread, std::vector<Complex>(y.data(), y.data() + y.size()),
                         golden_trajectory(nspokes, nread), bins);
}

/// Data generated from a rank-2 plus temporally sparse image with noise.
inline std::shared_ptr<ReconProblem> structured_problem(std::size_t n, std::size_t nt, std::size_t spf,
                                                        std::uint64_t seed, double noise = 0.05) {
    const auto sens = synth_sensitivities(2, n, n);
    const KSpaceDataset geo = random_dataset(n, nt, spf, 2, seed);
    const EncodingOperator A(sens, geo);
    const auto P = static_cast<Eigen::Index>(n * n);
    Casorati x = random_casorati(P, 2, seed + 1) * random_casorati(2, static_cast<Eigen::Index>(nt), seed + 2);
    Rng rng(seed + 3);
    for (int j = 0; j < 3; ++j) {
        const auto p = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(P)));
        const auto f = static_cast<Eigen::Index>(rng.below(nt));
        x.block(p, f, 1, x.cols() - f).array() += Complex(2.0, 0.0);
    }
    Eigen::VectorXcd y = A.forward(x) + noise * random_vector(static_cast<Eigen::Index>(A.nsamples()), seed + 4);
    return std::make_shared<ReconProblem>(geo.with_samples(std::vector<Complex>(y.data(), y.data() + y.size())),
                                          sens);
}

inline double rel_err(const Casorati& a, const Casorati& b) {
    const double d = b.norm();
    return d > 0 ? (a - b).norm() / d : (a - b).norm();
}

} // namespace lps::test
