#pragma once

#include <array>
#include <string>
#include <vector>

#include "hydrotrack/types.hpp"

namespace hydrotrack {

// Sliding window geometry in seconds. Converted to sample counts with the
// series sample rate; both must land on whole samples.
struct WindowSpec {
  double length_s = 60.0;
  double stride_s = 10.0;
};

void validate(const WindowSpec& spec);

// Per-channel stats, in feature order. Feature index = channel * 6 + stat.
enum class ChannelStat {
  Mean = 0,
  Std = 1,
  Min = 2,
  Max = 3,
  Rms = 4,
  MeanAbsDiff = 5,
};

inline constexpr std::array<const char*, kStatsPerChannel> kStatNames = {
    "mean", "std", "min", "max", "rms", "meanabsdiff"};

using FeatureArray = Eigen::Matrix<double, kFeatureCount, 1>;

struct FeatureVector {
  FeatureArray values;
  std::int64_t window_start_ms = 0;
  std::int64_t window_end_ms = 0;
};

// Column names "ch410_mean" .. "ch940_meanabsdiff", feature order.
std::vector<std::string> feature_names(const ChannelMap& map);

// Windowed stats over a uniformly sampled series. Sample rate is inferred
// from the first timestamp step. Throws too_short if fewer samples than one
// window.
std::vector<FeatureVector> extract_features(const AbsorbanceSeries& series,
                                            const WindowSpec& spec);

// One contiguous labeled recording from a single subject.
struct Recording {
  AbsorbanceSeries series;
  HydrationLabel label = HydrationLabel::FullyHydrated;
  int subject_id = 0;
};

struct LabeledDataset {
  Eigen::MatrixXd features;  // rows x kFeatureCount
  std::vector<HydrationLabel> labels;
  std::vector<int> subject_ids;

  Eigen::Index rows() const { return features.rows(); }
};

void validate(const LabeledDataset& dataset);

struct DatasetBuildResult {
  LabeledDataset dataset;
  int skipped_recordings = 0;
};

// Windows every recording and concatenates rows; recordings shorter than one
// window are skipped and counted.
DatasetBuildResult build_dataset(const std::vector<Recording>& recordings,
                                 const WindowSpec& spec);

}  // namespace hydrotrack
