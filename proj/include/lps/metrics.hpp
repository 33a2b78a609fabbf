#pragma once

#include "lps/core.hpp"

namespace lps {

/// Number of leading frames covered by a loss fraction: ceil(fraction * nt), at least 1.
std::size_t loss_frames(double fraction, std::size_t nt);

/// Mean of |a - b| over all pixels of the first `frames` frames.
double mean_abs_error(const Casorati& a, const Casorati& b, std::size_t frames);
double mean_abs_error(const Casorati& a, const Casorati& b);

/// Whole-sequence MAE between two sequences of equal shape.
double mae(const ImageSequence& seq, const ImageSequence& ref);

} // namespace lps
