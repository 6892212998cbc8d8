#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "hydrotrack/error.hpp"

namespace hydrotrack {

inline constexpr int kChannelCount = 18;
inline constexpr int kClassCount = 3;
inline constexpr int kStatsPerChannel = 6;
inline constexpr int kFeatureCount = kChannelCount * kStatsPerChannel;

// Bumped whenever the feature layout changes; embedded in models so a model
// is never applied to features with a different layout.
inline constexpr std::uint16_t kFeatureVersion = 1;

using ChannelArray = Eigen::Array<double, kChannelCount, 1>;
// One row per sample, one column per channel. Column-major, so per-channel
// slices are contiguous for filtering.
using SeriesMatrix = Eigen::Matrix<double, Eigen::Dynamic, kChannelCount>;
using TimeVector = Eigen::Matrix<std::int64_t, Eigen::Dynamic, 1>;

enum class HydrationLabel : std::uint8_t {
  FullyHydrated = 0,
  MidHydrated = 1,
  Dehydrated = 2,
};

const char* to_string(HydrationLabel label);
HydrationLabel label_from_code(int code);

// Wavelengths of the sensor channels, strictly increasing, in nanometres.
struct ChannelMap {
  ChannelArray wavelengths_nm;

  // Nominal centre wavelengths of the triple-sensor 18 channel layout.
  static const ChannelMap& default_map();
  // Column header for channel c, e.g. "ch410".
  std::string channel_name(int c) const;
};

void validate(const ChannelMap& map);
bool same_channels(const ChannelMap& a, const ChannelMap& b);

struct SpectralFrame {
  std::int64_t timestamp_ms = 0;
  ChannelArray channels = ChannelArray::Zero();
};

void validate(const SpectralFrame& frame);

struct CalibrationProfile {
  ChannelArray i0 = ChannelArray::Ones();
  ChannelArray gains = ChannelArray::Ones();
  std::int64_t created_at_ms = 0;

  static CalibrationProfile identity(std::int64_t created_at_ms = 0);
};

void validate(const CalibrationProfile& profile);

struct AbsorbanceSeries {
  TimeVector timestamps_ms;
  SeriesMatrix values;  // rows align with timestamps_ms
  ChannelMap channel_map = ChannelMap::default_map();

  Eigen::Index sample_count() const { return values.rows(); }
};

void validate(const AbsorbanceSeries& series);

}  // namespace hydrotrack
