#include "hydrotrack/features.hpp"

#include <cmath>

namespace hydrotrack {

void validate(const WindowSpec& spec) {
  if (!std::isfinite(spec.length_s) || !(spec.length_s > 0.0))
    fail(errc::invalid_window, "window spec: length must be positive");
  if (!std::isfinite(spec.stride_s) || !(spec.stride_s > 0.0))
    fail(errc::invalid_window, "window spec: stride must be positive");
  if (spec.stride_s > spec.length_s)
    fail(errc::invalid_window, "window spec: stride must not exceed length");
}

std::vector<std::string> feature_names(const ChannelMap& map) {
  validate(map);
  std::vector<std::string> names;
  names.reserve(kFeatureCount);
  for (int c = 0; c < kChannelCount; ++c)
    for (int s = 0; s < kStatsPerChannel; ++s)
      names.push_back(map.channel_name(c) + "_" + kStatNames[s]);
  return names;
}

namespace {

// Converts a duration in seconds to a whole sample count at dt_ms spacing.
Eigen::Index to_samples(double seconds, double dt_ms, const char* what) {
  double exact = seconds * 1000.0 / dt_ms;
  double rounded = std::round(exact);
  if (rounded < 1.0 || std::abs(exact - rounded) > 1e-6 * rounded)
    fail(errc::invalid_window,
         std::string("window spec: ") + what +
             " is not a whole number of samples");
  return static_cast<Eigen::Index>(rounded);
}

}  // namespace

std::vector<FeatureVector> extract_features(const AbsorbanceSeries& series,
                                            const WindowSpec& spec) {
  validate(series);
  validate(spec);
  const Eigen::Index n = series.sample_count();
  if (n < 2)
    fail(errc::too_short, "extract_features: need at least two samples");

  const double dt_ms = static_cast<double>(series.timestamps_ms[1] -
                                           series.timestamps_ms[0]);
  for (Eigen::Index t = 1; t < n; ++t) {
    double dt = static_cast<double>(series.timestamps_ms[t] -
                                    series.timestamps_ms[t - 1]);
    if (std::abs(dt - dt_ms) > 0.01 * dt_ms)
      fail(errc::non_uniform_sampling,
           "extract_features: series is not uniformly sampled");
  }
  const Eigen::Index window = to_samples(spec.length_s, dt_ms, "length");
  const Eigen::Index stride = to_samples(spec.stride_s, dt_ms, "stride");
  if (window < 2)
    fail(errc::invalid_window, "window spec: window must cover >= 2 samples");
  if (n < window)
    fail(errc::too_short,
         "extract_features: series shorter than one window");

  const Eigen::Index count = (n - window) / stride + 1;
  std::vector<FeatureVector> out;
  out.reserve(static_cast<std::size_t>(count));
  const double w = static_cast<double>(window);

  for (Eigen::Index i = 0; i < count; ++i) {
    const Eigen::Index start = i * stride;
    FeatureVector fv;
    fv.window_start_ms = series.timestamps_ms[start];
    fv.window_end_ms = series.timestamps_ms[start + window - 1];
    for (int c = 0; c < kChannelCount; ++c) {
      auto col = series.values.col(c).segment(start, window);
      const double mean = col.sum() / w;
      const double sumsq = col.squaredNorm();
      // Population variance; the window is the whole population of interest.
      const double var = std::max(0.0, sumsq / w - mean * mean);
      double abs_diff = 0.0;
      for (Eigen::Index t = 1; t < window; ++t)
        abs_diff += std::abs(col[t] - col[t - 1]);
      fv.values[c * kStatsPerChannel + 0] = mean;
      fv.values[c * kStatsPerChannel + 1] = std::sqrt(var);
      fv.values[c * kStatsPerChannel + 2] = col.minCoeff();
      fv.values[c * kStatsPerChannel + 3] = col.maxCoeff();
      fv.values[c * kStatsPerChannel + 4] = std::sqrt(sumsq / w);
      fv.values[c * kStatsPerChannel + 5] =
          abs_diff / static_cast<double>(window - 1);
    }
    out.push_back(fv);
  }
  return out;
}

void validate(const LabeledDataset& dataset) {
  if (dataset.features.cols() != kFeatureCount)
    fail(errc::shape_mismatch, "dataset: feature column count must be " +
                                   std::to_string(kFeatureCount));
  const std::size_t rows = static_cast<std::size_t>(dataset.features.rows());
  if (dataset.labels.size() != rows || dataset.subject_ids.size() != rows)
    fail(errc::shape_mismatch,
         "dataset: labels and subject ids must match row count");
  if (!dataset.features.array().isFinite().all())
    fail(errc::invalid_argument, "dataset: non-finite feature value");
}

DatasetBuildResult build_dataset(const std::vector<Recording>& recordings,
                                 const WindowSpec& spec) {
  validate(spec);
  DatasetBuildResult result;
  std::vector<FeatureVector> rows;
  std::vector<HydrationLabel> labels;
  std::vector<int> subjects;
  for (const Recording& rec : recordings) {
    std::vector<FeatureVector> fvs;
    try {
      fvs = extract_features(rec.series, spec);
    } catch (const Error& e) {
      if (e.code() == errc::too_short) {
        ++result.skipped_recordings;
        continue;
      }
      throw;
    }
    for (const FeatureVector& fv : fvs) {
      rows.push_back(fv);
      labels.push_back(rec.label);
      subjects.push_back(rec.subject_id);
    }
  }
  result.dataset.features.resize(static_cast<Eigen::Index>(rows.size()),
                                 kFeatureCount);
  for (std::size_t i = 0; i < rows.size(); ++i)
    result.dataset.features.row(static_cast<Eigen::Index>(i)) =
        rows[i].values.transpose();
  result.dataset.labels = std::move(labels);
  result.dataset.subject_ids = std::move(subjects);
  return result;
}

}  // namespace hydrotrack
