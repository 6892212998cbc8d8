#include "hydrotrack/spectra.hpp"

#include <cmath>
#include <sstream>

namespace hydrotrack {

namespace {

const double kDefaultWavelengths[kChannelCount] = {
    410, 435, 460, 485, 510, 535, 560, 585, 610,
    645, 680, 705, 730, 760, 810, 860, 900, 940};

}  // namespace

const char* to_string(HydrationLabel label) {
  switch (label) {
    case HydrationLabel::FullyHydrated: return "FullyHydrated";
    case HydrationLabel::MidHydrated: return "MidHydrated";
    case HydrationLabel::Dehydrated: return "Dehydrated";
  }
  fail(errc::invalid_argument, "unknown hydration label");
}

HydrationLabel label_from_code(int code) {
  if (code < 0 || code >= kClassCount)
    fail(errc::invalid_argument,
         "hydration label code out of range: " + std::to_string(code));
  return static_cast<HydrationLabel>(code);
}

const ChannelMap& ChannelMap::default_map() {
  static const ChannelMap map = [] {
    ChannelMap m;
    for (int c = 0; c < kChannelCount; ++c)
      m.wavelengths_nm[c] = kDefaultWavelengths[c];
    return m;
  }();
  return map;
}

std::string ChannelMap::channel_name(int c) const {
  std::ostringstream out;
  out << "ch" << static_cast<long long>(std::llround(wavelengths_nm[c]));
  return out.str();
}

void validate(const ChannelMap& map) {
  if (!map.wavelengths_nm.isFinite().all())
    fail(errc::invalid_argument, "channel map: non-finite wavelength");
  for (int c = 1; c < kChannelCount; ++c)
    if (!(map.wavelengths_nm[c] > map.wavelengths_nm[c - 1]))
      fail(errc::invalid_argument,
           "channel map: wavelengths not strictly increasing");
  if (map.wavelengths_nm[0] != 410.0 ||
      map.wavelengths_nm[kChannelCount - 1] != 940.0)
    fail(errc::invalid_argument, "channel map: must span 410..940 nm");
}

void validate(const SpectralFrame& frame) {
  if (!frame.channels.isFinite().all())
    fail(errc::invalid_argument, "spectral frame: non-finite channel value");
  if ((frame.channels < 0.0).any())
    fail(errc::invalid_argument, "spectral frame: negative channel value");
}

CalibrationProfile CalibrationProfile::identity(std::int64_t created_at_ms) {
  CalibrationProfile p;
  p.created_at_ms = created_at_ms;
  return p;
}

void validate(const CalibrationProfile& profile) {
  if (!profile.i0.isFinite().all() || (profile.i0 <= 0.0).any())
    fail(errc::invalid_argument, "calibration profile: i0 must be positive");
  if (!profile.gains.isFinite().all() || (profile.gains <= 0.0).any())
    fail(errc::invalid_argument, "calibration profile: gains must be positive");
}

void validate(const AbsorbanceSeries& series) {
  validate(series.channel_map);
  if (series.timestamps_ms.size() != series.values.rows())
    fail(errc::shape_mismatch,
         "absorbance series: timestamp count does not match row count");
  if (!series.values.array().isFinite().all())
    fail(errc::invalid_argument, "absorbance series: non-finite value");
  for (Eigen::Index t = 1; t < series.timestamps_ms.size(); ++t)
    if (series.timestamps_ms[t] <= series.timestamps_ms[t - 1])
      fail(errc::invalid_argument,
           "absorbance series: timestamps not strictly increasing");
}

ChannelArray compute_absorbance(const SpectralFrame& frame,
                                const CalibrationProfile& profile) {
  validate(frame);
  validate(profile);
  ChannelArray corrected = profile.gains * frame.channels;
  for (int c = 0; c < kChannelCount; ++c)
    if (corrected[c] <= 0.0)
      fail(errc::zero_intensity,
           "compute_absorbance: non-positive intensity on channel " +
               std::to_string(c));
  return (profile.i0 / corrected).log10();
}

SpectralFrame apply_gains(const SpectralFrame& frame,
                          const CalibrationProfile& profile) {
  validate(frame);
  validate(profile);
  SpectralFrame out;
  out.timestamp_ms = frame.timestamp_ms;
  out.channels = profile.gains * frame.channels;
  return out;
}

CalibrationProfile fit_channel_gains(const AbsorbanceSeries& measured,
                                     const AbsorbanceSeries& reference) {
  validate(measured);
  validate(reference);
  if (measured.sample_count() == 0)
    fail(errc::degenerate_reference, "fit_channel_gains: empty series");
  if (measured.sample_count() != reference.sample_count())
    fail(errc::shape_mismatch,
         "fit_channel_gains: measured and reference sample counts differ");
  if (!same_channels(measured.channel_map, reference.channel_map))
    fail(errc::shape_mismatch,
         "fit_channel_gains: measured and reference channel maps differ");

  // A_measured - A_reference = log10(g) for every sample, so the
  // least-squares gain is the mean difference per channel.
  ChannelArray mean_diff =
      (measured.values - reference.values).colwise().mean().transpose().array();
  CalibrationProfile profile;
  profile.gains =
      mean_diff.unaryExpr([](double d) { return std::pow(10.0, d); });
  profile.created_at_ms = measured.timestamps_ms[measured.sample_count() - 1];
  if (!profile.gains.isFinite().all() || (profile.gains <= 0.0).any())
    fail(errc::degenerate_reference,
         "fit_channel_gains: fitted gains are not finite positive");
  return profile;
}

bool same_channels(const ChannelMap& a, const ChannelMap& b) {
  return (a.wavelengths_nm == b.wavelengths_nm).all();
}

AbsorbanceSeries absorbance_series(const std::vector<SpectralFrame>& frames,
                                   const CalibrationProfile& profile,
                                   const ChannelMap& map) {
  validate(map);
  validate(profile);
  AbsorbanceSeries series;
  series.channel_map = map;
  series.timestamps_ms.resize(static_cast<Eigen::Index>(frames.size()));
  series.values.resize(static_cast<Eigen::Index>(frames.size()),
                       kChannelCount);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (i > 0 && frames[i].timestamp_ms <= frames[i - 1].timestamp_ms)
      fail(errc::out_of_order_frame,
           "absorbance_series: timestamps not strictly increasing at row " +
               std::to_string(i));
    series.timestamps_ms[static_cast<Eigen::Index>(i)] =
        frames[i].timestamp_ms;
    series.values.row(static_cast<Eigen::Index>(i)) =
        compute_absorbance(frames[i], profile).transpose();
  }
  return series;
}

}  // namespace hydrotrack
