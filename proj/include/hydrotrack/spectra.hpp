#pragma once

#include <vector>

#include "hydrotrack/types.hpp"

namespace hydrotrack {

// Absorbance A[c] = log10(i0[c] / (gains[c] * I[c])). Throws zero_intensity
// if any gain-corrected intensity is <= 0.
ChannelArray compute_absorbance(const SpectralFrame& frame,
                                const CalibrationProfile& profile);

// Per-channel multiplication of raw intensities by the profile gains.
SpectralFrame apply_gains(const SpectralFrame& frame,
                          const CalibrationProfile& profile);

// Least-squares gain fit from paired absorbance series of the same scene:
// log10 g[c] = mean_t(A_measured[t,c] - A_reference[t,c]). The returned
// profile carries neutral i0 (incident intensity is not recoverable from
// absorbances) and created_at_ms = last measured timestamp.
CalibrationProfile fit_channel_gains(const AbsorbanceSeries& measured,
                                     const AbsorbanceSeries& reference);

// Frames -> absorbance series under one profile. Timestamps must be strictly
// increasing.
AbsorbanceSeries absorbance_series(const std::vector<SpectralFrame>& frames,
                                   const CalibrationProfile& profile,
                                   const ChannelMap& map);

}  // namespace hydrotrack
