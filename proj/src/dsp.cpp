#include "hydrotrack/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace hydrotrack {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;

void filter_section(const Biquad& q, Eigen::VectorXd& x, double z0,
                    double z1) {
  for (Eigen::Index i = 0; i < x.size(); ++i)
    x[i] = biquad_step(q, x[i], z0, z1);
}

// Steady-state DF2T state of a section driven by constant input x0.
// Solves the fixed point of the state recurrence; used by filtfilt so the
// startup transient of a constant signal is zero.
void steady_state(const Biquad& q, double x0, double& z0, double& z1) {
  double h1 = (q.b0 + q.b1 + q.b2) / (1.0 + q.a1 + q.a2);
  z0 = (h1 - q.b0) * x0;
  z1 = (q.b2 - q.a2 * h1) * x0;
}

double section_dc_gain(const Biquad& q) {
  return (q.b0 + q.b1 + q.b2) / (1.0 + q.a1 + q.a2);
}

}  // namespace

void validate(const BandSpec& spec) {
  if (!(spec.sample_rate_hz > 0.0) || !std::isfinite(spec.sample_rate_hz))
    fail(errc::invalid_band, "band spec: sample rate must be positive");
  if (!std::isfinite(spec.low_hz) || !std::isfinite(spec.high_hz))
    fail(errc::invalid_band, "band spec: non-finite band edge");
  if (!(0.0 < spec.low_hz && spec.low_hz < spec.high_hz &&
        spec.high_hz < 0.5 * spec.sample_rate_hz))
    fail(errc::invalid_band,
         "band spec: requires 0 < low < high < sample_rate / 2");
  if (spec.order != 2 && spec.order != 4 && spec.order != 6 &&
      spec.order != 8)
    fail(errc::invalid_band, "band spec: order must be one of 2, 4, 6, 8");
}

bool is_stable(const Biquad& q) {
  return std::abs(q.a2) < 1.0 && std::abs(q.a1) < 1.0 + q.a2;
}

bool is_stable(const BiquadCascade& cascade) {
  return std::all_of(cascade.sections.begin(), cascade.sections.end(),
                     [](const Biquad& q) { return is_stable(q); });
}

BiquadCascade design_butterworth_bandpass(const BandSpec& spec) {
  validate(spec);
  const double fs = spec.sample_rate_hz;
  const int n = spec.order / 2;  // analog low-pass prototype order

  // Pre-warp band edges so the bilinear transform lands them exactly.
  const double w_low = 2.0 * fs * std::tan(kPi * spec.low_hz / fs);
  const double w_high = 2.0 * fs * std::tan(kPi * spec.high_hz / fs);
  const double w0 = std::sqrt(w_low * w_high);
  const double bw = w_high - w_low;

  // Unit-cutoff Butterworth prototype poles, upper half plane plus the real
  // pole for odd orders.
  std::vector<std::complex<double>> proto;
  for (int k = 1; k <= n; ++k) {
    double theta = kPi * (2.0 * k + n - 1.0) / (2.0 * n);
    proto.emplace_back(std::cos(theta), std::sin(theta));
  }

  // Low-pass to band-pass: each prototype pole p solves
  // s^2 - (bw p) s + w0^2 = 0, giving two band-pass poles.
  std::vector<std::complex<double>> analog;
  for (const auto& p : proto) {
    std::complex<double> b = bw * p * 0.5;
    std::complex<double> d = std::sqrt(b * b - w0 * w0);
    analog.push_back(b + d);
    analog.push_back(b - d);
  }

  // Bilinear transform. Numerator zeros (n at s=0, n at infinity) map to
  // z = +1 and z = -1, folded below as the fixed [1, 0, -1] section
  // numerator.
  std::vector<std::complex<double>> digital;
  for (const auto& s : analog)
    digital.push_back((2.0 * fs + s) / (2.0 * fs - s));

  // Split into conjugate pairs and real poles, then form one section per
  // pair with real coefficients.
  std::vector<std::complex<double>> upper;
  std::vector<double> real_poles;
  for (const auto& z : digital) {
    if (std::abs(z.imag()) > 1e-12 * std::max(1.0, std::abs(z.real()))) {
      if (z.imag() > 0.0) upper.push_back(z);
    } else {
      real_poles.push_back(z.real());
    }
  }
  std::sort(real_poles.begin(), real_poles.end());
  std::sort(upper.begin(), upper.end(),
            [](const std::complex<double>& a, const std::complex<double>& b) {
              return a.real() != b.real() ? a.real() < b.real()
                                          : a.imag() < b.imag();
            });

  BiquadCascade cascade;
  for (const auto& z : upper) {
    Biquad q;
    q.b0 = 1.0;
    q.b1 = 0.0;
    q.b2 = -1.0;
    q.a1 = -2.0 * z.real();
    q.a2 = std::norm(z);
    cascade.sections.push_back(q);
  }
  for (std::size_t i = 0; i + 1 < real_poles.size(); i += 2) {
    Biquad q;
    q.b0 = 1.0;
    q.b1 = 0.0;
    q.b2 = -1.0;
    q.a1 = -(real_poles[i] + real_poles[i + 1]);
    q.a2 = real_poles[i] * real_poles[i + 1];
    cascade.sections.push_back(q);
  }
  if (real_poles.size() % 2 != 0)
    fail(errc::invalid_band,
         "butterworth design: unpaired real pole, order " +
             std::to_string(spec.order));

  // Normalize unit gain at the digital image of the analog centre frequency.
  const double f_center = std::atan(w0 / (2.0 * fs)) * fs / kPi;
  double mag = std::abs(frequency_response(cascade, f_center, fs));
  if (!(mag > 0.0) || !std::isfinite(mag))
    fail(errc::invalid_band, "butterworth design: degenerate centre gain");
  const double g = std::pow(1.0 / mag, 1.0 / cascade.sections.size());
  for (Biquad& q : cascade.sections) {
    q.b0 *= g;
    q.b1 *= g;
    q.b2 *= g;
  }

  if (!is_stable(cascade))
    fail(errc::invalid_band, "butterworth design: unstable section");
  return cascade;
}

std::complex<double> frequency_response(const BiquadCascade& cascade,
                                        double freq_hz,
                                        double sample_rate_hz) {
  const double w = 2.0 * kPi * freq_hz / sample_rate_hz;
  const std::complex<double> z1 = std::polar(1.0, -w);
  const std::complex<double> z2 = z1 * z1;
  std::complex<double> h(1.0, 0.0);
  for (const Biquad& q : cascade.sections)
    h *= (q.b0 + q.b1 * z1 + q.b2 * z2) / (1.0 + q.a1 * z1 + q.a2 * z2);
  return h;
}

Eigen::VectorXd filter_causal(const BiquadCascade& cascade,
                              const Eigen::Ref<const Eigen::VectorXd>& x) {
  Eigen::VectorXd y = x;
  for (const Biquad& q : cascade.sections) filter_section(q, y, 0.0, 0.0);
  return y;
}

int filtfilt_pad_length(const BiquadCascade& cascade) {
  return 6 * static_cast<int>(cascade.sections.size());
}

Eigen::VectorXd filtfilt(const BiquadCascade& cascade,
                         const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (cascade.sections.empty())
    fail(errc::invalid_argument, "filtfilt: empty cascade");
  const Eigen::Index n = x.size();
  const Eigen::Index pad = filtfilt_pad_length(cascade);
  if (n <= pad)
    fail(errc::too_short, "filtfilt: signal length " + std::to_string(n) +
                              " must exceed pad length " +
                              std::to_string(pad));

  // Odd reflection about the end points suppresses edge transients.
  Eigen::VectorXd ext(n + 2 * pad);
  for (Eigen::Index i = 0; i < pad; ++i)
    ext[i] = 2.0 * x[0] - x[pad - i];
  ext.segment(pad, n) = x;
  for (Eigen::Index i = 0; i < pad; ++i)
    ext[pad + n + i] = 2.0 * x[n - 1] - x[n - 2 - i];

  auto pass = [&cascade](Eigen::VectorXd& sig) {
    const double x0 = sig[0];
    double scale = 1.0;  // cumulative DC gain of upstream sections
    for (const Biquad& q : cascade.sections) {
      double z0, z1;
      steady_state(q, scale * x0, z0, z1);
      filter_section(q, sig, z0, z1);
      scale *= section_dc_gain(q);
    }
  };

  pass(ext);
  ext.reverseInPlace();
  pass(ext);
  ext.reverseInPlace();
  return ext.segment(pad, n);
}

AbsorbanceSeries eulerian_magnify(const AbsorbanceSeries& series,
                                  const EvmParams& params) {
  validate(series);
  validate(params.band);
  if (!std::isfinite(params.alpha) || params.alpha < 0.0)
    fail(errc::invalid_argument, "eulerian_magnify: alpha must be >= 0");

  const double nominal_ms = 1000.0 / params.band.sample_rate_hz;
  for (Eigen::Index t = 1; t < series.timestamps_ms.size(); ++t) {
    double dt = static_cast<double>(series.timestamps_ms[t] -
                                    series.timestamps_ms[t - 1]);
    if (std::abs(dt - nominal_ms) > 0.01 * nominal_ms)
      fail(errc::non_uniform_sampling,
           "eulerian_magnify: sample interval " + std::to_string(dt) +
               " ms deviates more than 1% from nominal " +
               std::to_string(nominal_ms) + " ms");
  }

  const BiquadCascade cascade = design_butterworth_bandpass(params.band);
  AbsorbanceSeries out;
  out.timestamps_ms = series.timestamps_ms;
  out.channel_map = series.channel_map;
  out.values.resize(series.values.rows(), kChannelCount);
  for (int c = 0; c < kChannelCount; ++c)
    out.values.col(c) =
        series.values.col(c) +
        params.alpha * filtfilt(cascade, series.values.col(c));
  return out;
}

AbsorbanceSeries resample_uniform(const AbsorbanceSeries& series,
                                  double target_rate_hz) {
  validate(series);
  if (!(target_rate_hz > 0.0) || !std::isfinite(target_rate_hz))
    fail(errc::invalid_argument,
         "resample_uniform: target rate must be positive");
  const Eigen::Index n = series.sample_count();
  if (n < 2)
    fail(errc::too_short, "resample_uniform: need at least two samples");

  const double step_ms = 1000.0 / target_rate_hz;
  const double t0 = static_cast<double>(series.timestamps_ms[0]);
  const double span =
      static_cast<double>(series.timestamps_ms[n - 1]) - t0;
  const Eigen::Index n_out =
      static_cast<Eigen::Index>(std::floor(span / step_ms + 1e-9)) + 1;
  if (n_out < 2)
    fail(errc::too_short,
         "resample_uniform: span shorter than one output step");

  AbsorbanceSeries out;
  out.channel_map = series.channel_map;
  out.timestamps_ms.resize(n_out);
  out.values.resize(n_out, kChannelCount);
  Eigen::Index seg = 0;
  for (Eigen::Index k = 0; k < n_out; ++k) {
    double t = t0 + static_cast<double>(k) * step_ms;
    double t_last = static_cast<double>(series.timestamps_ms[n - 1]);
    if (t > t_last) t = t_last;
    while (seg + 2 < n &&
           static_cast<double>(series.timestamps_ms[seg + 1]) < t)
      ++seg;
    double ta = static_cast<double>(series.timestamps_ms[seg]);
    double tb = static_cast<double>(series.timestamps_ms[seg + 1]);
    double u = (t - ta) / (tb - ta);
    if (u < 0.0) u = 0.0;
    if (u > 1.0) u = 1.0;
    out.values.row(k) =
        (1.0 - u) * series.values.row(seg) + u * series.values.row(seg + 1);
    out.timestamps_ms[k] = std::llround(t);
  }
  return out;
}

}  // namespace hydrotrack
