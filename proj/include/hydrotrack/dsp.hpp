#pragma once

#include <complex>
#include <vector>

#include "hydrotrack/types.hpp"

namespace hydrotrack {

// Band-pass description. Requires 0 < low < high < sample_rate/2 and an
// overall order in {2, 4, 6, 8} (order/2 pole pairs per band edge).
struct BandSpec {
  double low_hz = 0.01;
  double high_hz = 0.2;
  double sample_rate_hz = 1.0;
  int order = 2;
};

void validate(const BandSpec& spec);

// One direct-form-II-transposed second order section, a0 normalized to 1.
struct Biquad {
  double b0 = 1.0, b1 = 0.0, b2 = 0.0;
  double a1 = 0.0, a2 = 0.0;
};

struct BiquadCascade {
  std::vector<Biquad> sections;
};

// Pole radius check: |a2| < 1 and |a1| < 1 + a2.
bool is_stable(const Biquad& q);
bool is_stable(const BiquadCascade& cascade);

// One direct-form-II-transposed step; z0/z1 are the section state. Shared by
// the offline filters and the streaming runtime so both produce bit-identical
// causal outputs.
inline double biquad_step(const Biquad& q, double x, double& z0, double& z1) {
  double y = q.b0 * x + z0;
  z0 = q.b1 * x - q.a1 * y + z1;
  z1 = q.b2 * x - q.a2 * y;
  return y;
}

// Digital Butterworth band-pass via analog prototype, LP->BP transform and
// bilinear transform with frequency pre-warping. Unit gain at the geometric
// centre of the pre-warped band; -3 dB (1/sqrt(2)) at the band edges.
BiquadCascade design_butterworth_bandpass(const BandSpec& spec);

std::complex<double> frequency_response(const BiquadCascade& cascade,
                                        double freq_hz, double sample_rate_hz);

// Single forward pass with zero initial state.
Eigen::VectorXd filter_causal(const BiquadCascade& cascade,
                              const Eigen::Ref<const Eigen::VectorXd>& x);

// Edge padding consumed by filtfilt on each side.
int filtfilt_pad_length(const BiquadCascade& cascade);

// Zero-phase forward-backward filtering with odd-reflection edge padding and
// steady-state section initial conditions. Requires
// x.size() > filtfilt_pad_length(cascade), else too_short.
Eigen::VectorXd filtfilt(const BiquadCascade& cascade,
                         const Eigen::Ref<const Eigen::VectorXd>& x);

struct EvmParams {
  double alpha = 10.0;
  BandSpec band;
};

// Eulerian temporal magnification of each channel:
// y = x + alpha * bandpass(x), band-pass applied zero-phase.
// Timestamps must be uniform at band.sample_rate_hz within 1% jitter.
AbsorbanceSeries eulerian_magnify(const AbsorbanceSeries& series,
                                  const EvmParams& params);

// Linear-interpolation resample onto a uniform grid anchored at the first
// timestamp. Input timestamps must be strictly increasing and the output
// grid must contain at least two samples.
AbsorbanceSeries resample_uniform(const AbsorbanceSeries& series,
                                  double target_rate_hz);

}  // namespace hydrotrack
