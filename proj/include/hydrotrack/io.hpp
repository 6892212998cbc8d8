#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "hydrotrack/edge.hpp"
#include "hydrotrack/features.hpp"
#include "hydrotrack/forest.hpp"
#include "hydrotrack/types.hpp"

namespace hydrotrack {

// Shortest round-trip decimal form, used for every floating point value we
// write so that identical runs produce byte-identical artifacts.
std::string format_double(double value);
double parse_double(std::string_view text, const std::string& what);
std::int64_t parse_int(std::string_view text, const std::string& what);

// Frame CSV: header "timestamp_ms,ch410,...,ch940", one frame per line.
void write_frames_csv(std::ostream& out,
                      const std::vector<SpectralFrame>& frames,
                      const ChannelMap& map);
std::vector<SpectralFrame> read_frames_csv(std::istream& in,
                                           const ChannelMap& map);

// Absorbance series use the same column layout as frames.
void write_series_csv(std::ostream& out, const AbsorbanceSeries& series);
AbsorbanceSeries read_series_csv(std::istream& in, const ChannelMap& map);

// Profile JSON with exactly the keys "i0", "gains", "created_at_ms".
std::string profile_to_json(const CalibrationProfile& profile);
CalibrationProfile profile_from_json(const std::string& text);

// Dataset CSV: header "subject,label,<feature names>".
void write_dataset_csv(std::ostream& out, const LabeledDataset& dataset,
                       const ChannelMap& map);
LabeledDataset read_dataset_csv(std::istream& in, const ChannelMap& map);

// Full-precision forest JSON, the editable/debuggable model form.
std::string forest_to_json(const ForestModel& model);
ForestModel forest_from_json(const std::string& text);

std::string report_to_json(const EvalReport& report);
std::string report_table(const EvalReport& report);

// External predictions CSV: header "row_index,predicted_label"; row indices
// must cover 0..rows-1 exactly once for the dataset being scored.
std::vector<std::pair<std::int64_t, HydrationLabel>> read_predictions_csv(
    std::istream& in);

// Streaming output line: "timestamp_ms,label,p0,p1,p2".
std::string format_stream_line(const StreamResult& result);

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);
void write_bytes(const std::filesystem::path& path,
                 const std::vector<std::uint8_t>& bytes);
std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace hydrotrack
