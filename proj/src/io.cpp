#include "hydrotrack/io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "json.hpp"

namespace hydrotrack {

namespace {

using nlohmann::json;

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

std::string_view strip_cr(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

std::string frames_header(const ChannelMap& map) {
  std::string header = "timestamp_ms";
  for (int c = 0; c < kChannelCount; ++c)
    header += "," + map.channel_name(c);
  return header;
}

std::string dataset_header(const ChannelMap& map) {
  std::string header = "subject,label";
  for (const std::string& name : feature_names(map)) header += "," + name;
  return header;
}

void expect_header(std::istream& in, const std::string& expected,
                   const std::string& what) {
  std::string line;
  if (!std::getline(in, line))
    fail(errc::parse_error, what + ": missing header line");
  if (std::string(strip_cr(line)) != expected)
    fail(errc::parse_error,
         what + ": header does not match \"" + expected + "\"");
}

json to_json_array(const ChannelArray& values) {
  json arr = json::array();
  for (int c = 0; c < kChannelCount; ++c) arr.push_back(values[c]);
  return arr;
}

ChannelArray channel_array_from_json(const json& arr,
                                     const std::string& what) {
  if (!arr.is_array() || arr.size() != kChannelCount)
    fail(errc::parse_error, what + ": expected an array of 18 numbers");
  ChannelArray out;
  for (int c = 0; c < kChannelCount; ++c) {
    const json& v = arr[static_cast<std::size_t>(c)];
    if (!v.is_number())
      fail(errc::parse_error, what + ": non-numeric entry");
    out[c] = v.get<double>();
  }
  return out;
}

json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    fail(errc::parse_error, what + ": " + e.what());
  }
}

}  // namespace

std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  if (ec != std::errc())
    fail(errc::io_error, "format_double: conversion failed");
  return std::string(buf, ptr);
}

double parse_double(std::string_view text, const std::string& what) {
  double value = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last)
    fail(errc::parse_error,
         what + ": \"" + std::string(text) + "\" is not a number");
  return value;
}

std::int64_t parse_int(std::string_view text, const std::string& what) {
  std::int64_t value = 0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last)
    fail(errc::parse_error,
         what + ": \"" + std::string(text) + "\" is not an integer");
  return value;
}

void write_frames_csv(std::ostream& out,
                      const std::vector<SpectralFrame>& frames,
                      const ChannelMap& map) {
  validate(map);
  out << frames_header(map) << '\n';
  for (const SpectralFrame& frame : frames) {
    out << frame.timestamp_ms;
    for (int c = 0; c < kChannelCount; ++c)
      out << ',' << format_double(frame.channels[c]);
    out << '\n';
  }
}

std::vector<SpectralFrame> read_frames_csv(std::istream& in,
                                           const ChannelMap& map) {
  validate(map);
  expect_header(in, frames_header(map), "frames csv");
  std::vector<SpectralFrame> frames;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view body = strip_cr(line);
    if (body.empty()) continue;
    auto fields = split_fields(body);
    if (fields.size() != 1 + kChannelCount)
      fail(errc::parse_error, "frames csv line " + std::to_string(line_no) +
                                  ": expected 19 fields");
    SpectralFrame frame;
    frame.timestamp_ms = parse_int(
        fields[0], "frames csv line " + std::to_string(line_no));
    for (int c = 0; c < kChannelCount; ++c)
      frame.channels[c] =
          parse_double(fields[static_cast<std::size_t>(c) + 1],
                       "frames csv line " + std::to_string(line_no));
    validate(frame);
    frames.push_back(frame);
  }
  return frames;
}

void write_series_csv(std::ostream& out, const AbsorbanceSeries& series) {
  validate(series);
  out << frames_header(series.channel_map) << '\n';
  for (Eigen::Index t = 0; t < series.sample_count(); ++t) {
    out << series.timestamps_ms[t];
    for (int c = 0; c < kChannelCount; ++c)
      out << ',' << format_double(series.values(t, c));
    out << '\n';
  }
}

AbsorbanceSeries read_series_csv(std::istream& in, const ChannelMap& map) {
  validate(map);
  expect_header(in, frames_header(map), "series csv");
  std::vector<std::int64_t> timestamps;
  std::vector<double> values;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view body = strip_cr(line);
    if (body.empty()) continue;
    auto fields = split_fields(body);
    if (fields.size() != 1 + kChannelCount)
      fail(errc::parse_error, "series csv line " + std::to_string(line_no) +
                                  ": expected 19 fields");
    timestamps.push_back(
        parse_int(fields[0], "series csv line " + std::to_string(line_no)));
    for (int c = 0; c < kChannelCount; ++c)
      values.push_back(
          parse_double(fields[static_cast<std::size_t>(c) + 1],
                       "series csv line " + std::to_string(line_no)));
  }
  AbsorbanceSeries series;
  series.channel_map = map;
  series.timestamps_ms.resize(static_cast<Eigen::Index>(timestamps.size()));
  series.values.resize(static_cast<Eigen::Index>(timestamps.size()),
                       kChannelCount);
  for (std::size_t t = 0; t < timestamps.size(); ++t) {
    series.timestamps_ms[static_cast<Eigen::Index>(t)] = timestamps[t];
    for (int c = 0; c < kChannelCount; ++c)
      series.values(static_cast<Eigen::Index>(t), c) =
          values[t * kChannelCount + static_cast<std::size_t>(c)];
  }
  validate(series);
  return series;
}

std::string profile_to_json(const CalibrationProfile& profile) {
  validate(profile);
  json j;
  j["i0"] = to_json_array(profile.i0);
  j["gains"] = to_json_array(profile.gains);
  j["created_at_ms"] = profile.created_at_ms;
  return j.dump(2) + "\n";
}

CalibrationProfile profile_from_json(const std::string& text) {
  json j = parse_json(text, "profile json");
  if (!j.is_object() || j.size() != 3 || !j.contains("i0") ||
      !j.contains("gains") || !j.contains("created_at_ms"))
    fail(errc::parse_error,
         "profile json: expected exactly the keys i0, gains, created_at_ms");
  CalibrationProfile profile;
  profile.i0 = channel_array_from_json(j["i0"], "profile json i0");
  profile.gains = channel_array_from_json(j["gains"], "profile json gains");
  if (!j["created_at_ms"].is_number_integer())
    fail(errc::parse_error, "profile json: created_at_ms must be integer");
  profile.created_at_ms = j["created_at_ms"].get<std::int64_t>();
  validate(profile);
  return profile;
}

void write_dataset_csv(std::ostream& out, const LabeledDataset& dataset,
                       const ChannelMap& map) {
  validate(dataset);
  out << dataset_header(map) << '\n';
  for (Eigen::Index r = 0; r < dataset.rows(); ++r) {
    out << dataset.subject_ids[static_cast<std::size_t>(r)] << ','
        << static_cast<int>(dataset.labels[static_cast<std::size_t>(r)]);
    for (int f = 0; f < kFeatureCount; ++f)
      out << ',' << format_double(dataset.features(r, f));
    out << '\n';
  }
}

LabeledDataset read_dataset_csv(std::istream& in, const ChannelMap& map) {
  expect_header(in, dataset_header(map), "dataset csv");
  std::vector<int> subjects;
  std::vector<HydrationLabel> labels;
  std::vector<double> values;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view body = strip_cr(line);
    if (body.empty()) continue;
    auto fields = split_fields(body);
    if (fields.size() != 2 + kFeatureCount)
      fail(errc::parse_error, "dataset csv line " + std::to_string(line_no) +
                                  ": expected 110 fields");
    const std::string where = "dataset csv line " + std::to_string(line_no);
    subjects.push_back(static_cast<int>(parse_int(fields[0], where)));
    labels.push_back(
        label_from_code(static_cast<int>(parse_int(fields[1], where))));
    for (int f = 0; f < kFeatureCount; ++f)
      values.push_back(
          parse_double(fields[static_cast<std::size_t>(f) + 2], where));
  }
  LabeledDataset dataset;
  dataset.subject_ids = std::move(subjects);
  dataset.labels = std::move(labels);
  dataset.features.resize(
      static_cast<Eigen::Index>(dataset.subject_ids.size()), kFeatureCount);
  for (Eigen::Index r = 0; r < dataset.features.rows(); ++r)
    for (int f = 0; f < kFeatureCount; ++f)
      dataset.features(r, f) =
          values[static_cast<std::size_t>(r) * kFeatureCount +
                 static_cast<std::size_t>(f)];
  validate(dataset);
  return dataset;
}

std::string forest_to_json(const ForestModel& model) {
  json j;
  j["format"] = "hydrotrack-forest";
  j["feature_version"] = model.feature_version;
  j["n_features"] = model.n_features;
  j["params"] = {{"n_estimators", model.params.n_estimators},
                 {"max_depth", model.params.max_depth},
                 {"max_features", model.params.max_features},
                 {"seed", model.params.seed}};
  json trees = json::array();
  for (const Tree& tree : model.trees) {
    json nodes = json::array();
    for (const TreeNode& node : tree.nodes) {
      json n;
      n["feature"] = node.feature;
      n["threshold"] = node.threshold;
      n["left"] = node.left;
      n["right"] = node.right;
      n["counts"] = {node.class_counts[0], node.class_counts[1],
                     node.class_counts[2]};
      nodes.push_back(std::move(n));
    }
    trees.push_back(json{{"nodes", std::move(nodes)}});
  }
  j["trees"] = std::move(trees);
  return j.dump(2) + "\n";
}

ForestModel forest_from_json(const std::string& text) {
  json j = parse_json(text, "forest json");
  if (!j.is_object() || j.value("format", "") != "hydrotrack-forest")
    fail(errc::parse_error, "forest json: not a hydrotrack-forest document");
  ForestModel model;
  try {
    model.feature_version = j.at("feature_version").get<std::uint16_t>();
    if (model.feature_version != kFeatureVersion)
      fail(errc::version_mismatch,
           "forest json: feature version " +
               std::to_string(model.feature_version) +
               " not supported (expected " +
               std::to_string(kFeatureVersion) + ")");
    model.n_features = j.at("n_features").get<int>();
    const json& params = j.at("params");
    model.params.n_estimators = params.at("n_estimators").get<int>();
    model.params.max_depth = params.at("max_depth").get<int>();
    model.params.max_features = params.at("max_features").get<int>();
    model.params.seed = params.at("seed").get<std::uint64_t>();
    for (const json& jt : j.at("trees")) {
      Tree tree;
      for (const json& jn : jt.at("nodes")) {
        TreeNode node;
        node.feature = jn.at("feature").get<std::int32_t>();
        node.threshold = jn.at("threshold").get<double>();
        node.left = jn.at("left").get<std::int32_t>();
        node.right = jn.at("right").get<std::int32_t>();
        const json& counts = jn.at("counts");
        if (!counts.is_array() || counts.size() != kClassCount)
          fail(errc::parse_error, "forest json: counts must have 3 entries");
        for (int c = 0; c < kClassCount; ++c)
          node.class_counts[static_cast<std::size_t>(c)] =
              counts[static_cast<std::size_t>(c)].get<std::int64_t>();
        tree.nodes.push_back(node);
      }
      model.trees.push_back(std::move(tree));
    }
  } catch (const json::exception& e) {
    fail(errc::parse_error, std::string("forest json: ") + e.what());
  }
  if (model.trees.empty())
    fail(errc::parse_error, "forest json: no trees");
  return model;
}

std::string report_to_json(const EvalReport& report) {
  json j;
  j["rows"] = report.row_count;
  j["accuracy"] = report.accuracy;
  j["precision"] = report.precision;
  j["recall"] = report.recall;
  j["f1"] = report.f1;
  j["macro_f1"] = report.macro_f1;
  json confusion = json::array();
  for (int r = 0; r < kClassCount; ++r) {
    json row = json::array();
    for (int c = 0; c < kClassCount; ++c) row.push_back(report.confusion(r, c));
    confusion.push_back(std::move(row));
  }
  j["confusion"] = std::move(confusion);
  return j.dump(2) + "\n";
}

std::string report_table(const EvalReport& report) {
  char buf[160];
  std::string out;
  std::snprintf(buf, sizeof buf, "rows %lld  accuracy %.4f  macro-f1 %.4f\n",
                static_cast<long long>(report.row_count), report.accuracy,
                report.macro_f1);
  out += buf;
  std::snprintf(buf, sizeof buf, "%-15s %9s %9s %9s\n", "class", "precision",
                "recall", "f1");
  out += buf;
  for (int c = 0; c < kClassCount; ++c) {
    std::snprintf(buf, sizeof buf, "%-15s %9.4f %9.4f %9.4f\n",
                  to_string(static_cast<HydrationLabel>(c)),
                  report.precision[static_cast<std::size_t>(c)],
                  report.recall[static_cast<std::size_t>(c)],
                  report.f1[static_cast<std::size_t>(c)]);
    out += buf;
  }
  out += "confusion (rows = truth, cols = predicted)\n";
  for (int r = 0; r < kClassCount; ++r) {
    std::snprintf(buf, sizeof buf, "%-15s %9lld %9lld %9lld\n",
                  to_string(static_cast<HydrationLabel>(r)),
                  static_cast<long long>(report.confusion(r, 0)),
                  static_cast<long long>(report.confusion(r, 1)),
                  static_cast<long long>(report.confusion(r, 2)));
    out += buf;
  }
  return out;
}

std::vector<std::pair<std::int64_t, HydrationLabel>> read_predictions_csv(
    std::istream& in) {
  expect_header(in, "row_index,predicted_label", "predictions csv");
  std::vector<std::pair<std::int64_t, HydrationLabel>> out;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view body = strip_cr(line);
    if (body.empty()) continue;
    auto fields = split_fields(body);
    if (fields.size() != 2)
      fail(errc::parse_error, "predictions csv line " +
                                  std::to_string(line_no) +
                                  ": expected 2 fields");
    const std::string where =
        "predictions csv line " + std::to_string(line_no);
    std::int64_t row = parse_int(fields[0], where);
    HydrationLabel label =
        label_from_code(static_cast<int>(parse_int(fields[1], where)));
    out.emplace_back(row, label);
  }
  return out;
}

std::string format_stream_line(const StreamResult& result) {
  std::string line = std::to_string(result.timestamp_ms);
  line += ',';
  line += std::to_string(static_cast<int>(result.label));
  for (int c = 0; c < kClassCount; ++c) {
    line += ',';
    line += format_double(result.probabilities[static_cast<std::size_t>(c)]);
  }
  return line;
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(errc::io_error, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes(
      (std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) fail(errc::io_error, "read failed for " + path.string());
  return bytes;
}

void write_bytes(const std::filesystem::path& path,
                 const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(errc::io_error, "cannot open " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(errc::io_error, "write failed for " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(errc::io_error, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) fail(errc::io_error, "read failed for " + path.string());
  return buf.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(errc::io_error, "cannot open " + path.string());
  out << text;
  if (!out) fail(errc::io_error, "write failed for " + path.string());
}

}  // namespace hydrotrack
