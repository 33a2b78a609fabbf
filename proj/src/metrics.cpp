#include "lps/metrics.hpp"

#include "lps/error.hpp"

#include <algorithm>
#include <cmath>

namespace lps {

std::size_t loss_frames(double fraction, std::size_t nt) {
    if (!(fraction > 0.0 && fraction <= 1.0)) throw UsageError("loss fraction must be in (0, 1]");
    // The small offset keeps e.g. 0.15 * 20 = 3.0000000000000004 at 3 frames.
    const auto n = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(nt) - 1e-9));
    return std::clamp<std::size_t>(n, 1, nt);
}

double mean_abs_error(const Casorati& a, const Casorati& b, std::size_t frames) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw UsageError("mean_abs_error: shape mismatch");
    if (frames == 0 || frames > static_cast<std::size_t>(a.cols()))
        throw UsageError("mean_abs_error: bad frame count");
    const auto f = static_cast<Eigen::Index>(frames);
    double sum = 0;
    for (Eigen::Index j = 0; j < f; ++j)
        for (Eigen::Index i = 0; i < a.rows(); ++i) sum += std::abs(a(i, j) - b(i, j));
    return sum / static_cast<double>(a.rows() * f);
}

double mean_abs_error(const Casorati& a, const Casorati& b) {
    return mean_abs_error(a, b, static_cast<std::size_t>(a.cols()));
}

double mae(const ImageSequence& seq, const ImageSequence& ref) {
    if (!(seq.shape() == ref.shape())) throw UsageError("mae: shape mismatch");
    return mean_abs_error(to_casorati(seq), to_casorati(ref));
}

} // namespace lps
