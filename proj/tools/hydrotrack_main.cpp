// Command line front end wiring the pipeline together: synthetic data
// generation, calibration, preprocessing, training, evaluation and the
// streaming runtime.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"

#include "hydrotrack/edge.hpp"
#include "hydrotrack/forest.hpp"
#include "hydrotrack/io.hpp"
#include "hydrotrack/rng.hpp"
#include "hydrotrack/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace hydrotrack;

namespace {

enum class LogLevel { Debug = 0, Info = 1, Quiet = 2 };

LogLevel log_level() {
  static LogLevel level = [] {
    const char* env = std::getenv("HYDROTRACK_LOG");
    if (!env) return LogLevel::Info;
    std::string v(env);
    if (v == "debug") return LogLevel::Debug;
    if (v == "info") return LogLevel::Info;
    if (v == "quiet") return LogLevel::Quiet;
    std::cerr << "[hydrotrack] unknown HYDROTRACK_LOG value \"" << v
              << "\", using info\n";
    return LogLevel::Info;
  }();
  return level;
}

void log_info(const std::string& msg) {
  if (log_level() <= LogLevel::Info)
    std::cerr << "[hydrotrack] " << msg << "\n";
}

void log_debug(const std::string& msg) {
  if (log_level() <= LogLevel::Debug)
    std::cerr << "[hydrotrack] " << msg << "\n";
}

// Binds command options so a --config JSON file can fill any of them; flags
// given on the command line win. Also renders the resolved values back out.
struct Binder {
  std::map<std::string, CLI::Option*> options;
  std::map<std::string, std::function<void(const json&)>> setters;
  std::map<std::string, std::function<json()>> getters;

  template <typename T>
  CLI::Option* bind(CLI::App* cmd, const std::string& name, T& var,
                    const std::string& desc) {
    CLI::Option* opt = cmd->add_option("--" + name, var, desc);
    setters[name] = [&var](const json& v) { var = v.get<T>(); };
    getters[name] = [&var]() { return json(var); };
    options[name] = opt;
    return opt;
  }

  CLI::Option* bind_flag(CLI::App* cmd, const std::string& name, bool& var,
                         const std::string& desc) {
    CLI::Option* opt = cmd->add_flag("--" + name, var, desc);
    setters[name] = [&var](const json& v) { var = v.get<bool>(); };
    getters[name] = [&var]() { return json(var); };
    options[name] = opt;
    return opt;
  }

  void apply_config(const fs::path& path) {
    json config;
    try {
      config = json::parse(read_text(path));
    } catch (const json::exception& e) {
      fail(errc::invalid_config,
           "config " + path.string() + ": " + e.what());
    }
    if (!config.is_object())
      fail(errc::invalid_config,
           "config " + path.string() + ": expected a JSON object");
    for (const auto& [key, value] : config.items()) {
      auto setter = setters.find(key);
      if (setter == setters.end())
        fail(errc::invalid_config,
             "config " + path.string() + ": unknown key \"" + key + "\"");
      if (options.at(key)->count() > 0) continue;  // flags override config
      try {
        setter->second(value);
      } catch (const json::exception&) {
        fail(errc::invalid_config, "config " + path.string() + ": key \"" +
                                       key + "\" has the wrong type");
      }
    }
  }

  json resolved() const {
    json out = json::object();
    for (const auto& [name, getter] : getters) out[name] = getter();
    return out;
  }
};

// Every command echoes its resolved configuration and, when an output
// directory is set, writes it to <out>/run_config.json. stream keeps stdout
// as a pure classification feed, so its echo goes to stderr.
void echo_config(const std::string& command, const Binder& binder,
                 const std::string& out_dir) {
  json resolved = binder.resolved();
  resolved["command"] = command;
  std::string text = resolved.dump(2) + "\n";
  (command == "stream" ? std::cerr : std::cout) << text;
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_text(fs::path(out_dir) / "run_config.json", text);
  }
}

fs::path require_out(const std::string& out_dir) {
  if (out_dir.empty())
    fail(errc::invalid_config, "--out directory is required");
  fs::create_directories(out_dir);
  return fs::path(out_dir);
}

BandSpec band_from(double low, double high, double rate, int order) {
  BandSpec band;
  band.low_hz = low;
  band.high_hz = high;
  band.sample_rate_hz = rate;
  band.order = order;
  validate(band);
  return band;
}

ForestModel read_model_file(const fs::path& path) {
  if (path.extension() == ".json")
    return forest_from_json(read_text(path));
  return decode_model(load_compact(read_bytes(path)));
}

// Shared dataset assembly: raw frames -> absorbance -> uniform resample ->
// magnification -> windowed features.
LabeledDataset dataset_from_manifest(const fs::path& manifest_path,
                                     const PipelineParams& pipeline) {
  json manifest;
  try {
    manifest = json::parse(read_text(manifest_path));
  } catch (const json::exception& e) {
    fail(errc::parse_error,
         "manifest " + manifest_path.string() + ": " + e.what());
  }
  const fs::path base = manifest_path.parent_path();
  const ChannelMap& map = ChannelMap::default_map();

  std::vector<Recording> recordings;
  try {
    for (const json& subject : manifest.at("subjects")) {
      int subject_id = subject.at("id").get<int>();
      CalibrationProfile profile = profile_from_json(
          read_text(base / subject.at("profile").get<std::string>()));
      for (const json& rec : subject.at("recordings")) {
        fs::path path = base / rec.at("path").get<std::string>();
        std::ifstream in(path);
        if (!in) fail(errc::io_error, "cannot open " + path.string());
        std::vector<SpectralFrame> frames = read_frames_csv(in, map);
        AbsorbanceSeries series = absorbance_series(frames, profile, map);
        AbsorbanceSeries uniform =
            resample_uniform(series, pipeline.band.sample_rate_hz);
        EvmParams evm{pipeline.alpha, pipeline.band};
        AbsorbanceSeries magnified = eulerian_magnify(uniform, evm);
        recordings.push_back(
            Recording{std::move(magnified),
                      label_from_code(rec.at("label").get<int>()),
                      subject_id});
      }
    }
  } catch (const json::exception& e) {
    fail(errc::parse_error,
         "manifest " + manifest_path.string() + ": " + e.what());
  }

  DatasetBuildResult built = build_dataset(recordings, pipeline.window);
  if (built.skipped_recordings > 0)
    log_info(std::to_string(built.skipped_recordings) +
             " recording(s) shorter than one window were skipped");
  return std::move(built.dataset);
}

// ---------------------------------------------------------------------------

struct CommonOpts {
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
};

struct PipelineOpts {
  double band_low = 0.01;
  double band_high = 0.2;
  int band_order = 2;
  double rate_hz = 1.0;
  double alpha = 10.0;
  double window_s = 60.0;
  double stride_s = 10.0;

  PipelineParams params() const {
    PipelineParams p;
    p.band = band_from(band_low, band_high, rate_hz, band_order);
    p.alpha = alpha;
    p.window.length_s = window_s;
    p.window.stride_s = stride_s;
    validate(p.window);
    return p;
  }
};

void bind_common(CLI::App* cmd, Binder& binder, CommonOpts& opts) {
  cmd->add_option("--config", opts.config,
                  "JSON config file; command line flags override it");
  binder.bind(cmd, "out", opts.out, "output directory");
  binder.bind(cmd, "seed", opts.seed, "deterministic RNG seed");
}

void bind_pipeline(CLI::App* cmd, Binder& binder, PipelineOpts& opts) {
  binder.bind(cmd, "band-low", opts.band_low, "band-pass low edge, Hz");
  binder.bind(cmd, "band-high", opts.band_high, "band-pass high edge, Hz");
  binder.bind(cmd, "order", opts.band_order, "band-pass order (2/4/6/8)");
  binder.bind(cmd, "rate", opts.rate_hz, "sample rate, Hz");
  binder.bind(cmd, "alpha", opts.alpha, "magnification factor");
  binder.bind(cmd, "window-length", opts.window_s, "window length, seconds");
  binder.bind(cmd, "stride", opts.stride_s, "window stride, seconds");
}

struct ForestOpts {
  int trees = 80;
  int depth = 5;
  int max_features = 0;

  ForestParams params(std::uint64_t seed) const {
    ForestParams p;
    p.n_estimators = trees;
    p.max_depth = depth;
    p.max_features = max_features;
    p.seed = seed;
    return p;
  }
};

void bind_forest(CLI::App* cmd, Binder& binder, ForestOpts& opts) {
  binder.bind(cmd, "trees", opts.trees, "number of trees");
  binder.bind(cmd, "depth", opts.depth, "maximum tree depth");
  binder.bind(cmd, "max-features", opts.max_features,
              "features tried per split, 0 = sqrt");
}

// ---------------------------------------------------------------------------

int cmd_gen_data(const CommonOpts& common, const std::string& preset,
                 int subjects, double duration_s, const PipelineOpts& pipe,
                 double noise_sigma, bool gain_errors) {
  fs::path out = require_out(common.out);
  const ChannelMap& map = ChannelMap::default_map();

  if (preset == "solutions") {
    SolutionSimOptions options;
    options.noise_sigma = noise_sigma;
    options.gain_errors = gain_errors;
    options.seed = common.seed;
    SolutionSim sim =
        simulate_solution(default_solution(200.0), 256, options);
    {
      std::ofstream f(out / "solution_measured.csv");
      write_series_csv(f, sim.measured);
    }
    {
      std::ofstream f(out / "solution_reference.csv");
      write_series_csv(f, resample_to_channels(sim.reference, map));
    }
    json truth;
    truth["hidden_gains"] = std::vector<double>(
        sim.hidden_gains.data(), sim.hidden_gains.data() + kChannelCount);
    write_text(out / "solution_truth.json", truth.dump(2) + "\n");
    log_info("wrote solution series to " + out.string());
    return 0;
  }

  CohortSpec cohort;
  if (preset == "default") {
    cohort = default_cohort();
  } else if (preset == "chance") {
    cohort = chance_cohort();
  } else {
    fail(errc::invalid_config,
         "unknown preset \"" + preset + "\" (default, chance, solutions)");
  }
  if (subjects > 0) cohort.n_subjects = subjects;

  SessionSpec session = SessionSpec::standard(duration_s, pipe.rate_hz);
  session.trajectory = Trajectory::three_plateaus(duration_s);

  json manifest;
  manifest["rate_hz"] = pipe.rate_hz;
  manifest["channel_map"] = std::vector<double>(
      map.wavelengths_nm.data(), map.wavelengths_nm.data() + kChannelCount);
  json subjects_json = json::array();

  PipelineParams pl = pipe.params();
  CohortResult result = generate_cohort(cohort, session, pl, common.seed);
  for (const SubjectData& subject : result.subjects) {
    fs::path dir = out / ("subject" + std::to_string(subject.spec.subject_id));
    fs::create_directories(dir);
    write_text(dir / "profile.json", profile_to_json(subject.profile));
    json recs = json::array();
    for (const ParticipantRecording& rec : subject.recordings) {
      std::string name = "segment" + std::to_string(rec.segment_index) +
                         ".csv";
      std::ofstream f(dir / name);
      write_frames_csv(f, rec.frames, map);
      json entry;
      entry["path"] = ("subject" + std::to_string(subject.spec.subject_id)) +
                      "/" + name;
      entry["label"] = static_cast<int>(rec.label);
      entry["segment"] = rec.segment_index;
      recs.push_back(std::move(entry));
    }
    json sj;
    sj["id"] = subject.spec.subject_id;
    sj["profile"] = ("subject" + std::to_string(subject.spec.subject_id)) +
                    "/profile.json";
    sj["recordings"] = std::move(recs);
    subjects_json.push_back(std::move(sj));
  }
  manifest["subjects"] = std::move(subjects_json);
  write_text(out / "manifest.json", manifest.dump(2) + "\n");

  {
    std::ofstream f(out / "dataset.csv");
    write_dataset_csv(f, result.dataset, map);
  }
  log_info("wrote " + std::to_string(result.subjects.size()) +
           " subjects and a " + std::to_string(result.dataset.rows()) +
           " row dataset to " + out.string());
  return 0;
}

int cmd_calibrate(const CommonOpts& common, const std::string& measured_path,
                  const std::string& reference_path,
                  const std::string& i0_frames_path) {
  fs::path out = require_out(common.out);
  const ChannelMap& map = ChannelMap::default_map();

  std::ifstream measured_file(measured_path);
  if (!measured_file) fail(errc::io_error, "cannot open " + measured_path);
  AbsorbanceSeries measured = read_series_csv(measured_file, map);
  std::ifstream reference_file(reference_path);
  if (!reference_file) fail(errc::io_error, "cannot open " + reference_path);
  AbsorbanceSeries reference = read_series_csv(reference_file, map);

  CalibrationProfile profile = fit_channel_gains(measured, reference);
  if (!i0_frames_path.empty()) {
    std::ifstream i0_file(i0_frames_path);
    if (!i0_file) fail(errc::io_error, "cannot open " + i0_frames_path);
    std::vector<SpectralFrame> frames = read_frames_csv(i0_file, map);
    if (frames.empty())
      fail(errc::degenerate_data, "incident intensity file has no frames");
    ChannelArray mean = ChannelArray::Zero();
    for (const SpectralFrame& frame : frames) mean += frame.channels;
    mean /= static_cast<double>(frames.size());
    if ((mean <= 0.0).any())
      fail(errc::degenerate_data,
           "incident intensity must be positive on every channel");
    profile.i0 = mean;
  }

  write_text(out / "profile.json", profile_to_json(profile));
  log_info("wrote profile to " + (out / "profile.json").string());
  return 0;
}

int cmd_preprocess(const CommonOpts& common, const std::string& input_path,
                   const std::string& profile_path, const PipelineOpts& pipe,
                   bool print_filter) {
  fs::path out = require_out(common.out);
  const ChannelMap& map = ChannelMap::default_map();
  PipelineParams pl = pipe.params();

  if (print_filter) {
    BiquadCascade cascade = design_butterworth_bandpass(pl.band);
    json filter;
    filter["order"] = pl.band.order;
    filter["low_hz"] = pl.band.low_hz;
    filter["high_hz"] = pl.band.high_hz;
    filter["sample_rate_hz"] = pl.band.sample_rate_hz;
    json sections = json::array();
    for (const Biquad& q : cascade.sections)
      sections.push_back({{"b0", q.b0},
                          {"b1", q.b1},
                          {"b2", q.b2},
                          {"a1", q.a1},
                          {"a2", q.a2}});
    filter["sections"] = std::move(sections);
    std::string text = filter.dump(2) + "\n";
    std::cout << text;
    write_text(out / "filter.json", text);
  }

  CalibrationProfile profile =
      profile_path.empty() ? CalibrationProfile::identity()
                           : profile_from_json(read_text(profile_path));
  std::ifstream input(input_path);
  if (!input) fail(errc::io_error, "cannot open " + input_path);
  std::vector<SpectralFrame> frames = read_frames_csv(input, map);
  AbsorbanceSeries series = absorbance_series(frames, profile, map);
  AbsorbanceSeries uniform = resample_uniform(series, pl.band.sample_rate_hz);
  EvmParams evm{pl.alpha, pl.band};
  AbsorbanceSeries magnified = eulerian_magnify(uniform, evm);

  {
    std::ofstream f(out / "absorbance.csv");
    write_series_csv(f, uniform);
  }
  {
    std::ofstream f(out / "magnified.csv");
    write_series_csv(f, magnified);
  }
  log_info("wrote absorbance.csv and magnified.csv to " + out.string());
  return 0;
}

int cmd_train(const CommonOpts& common, const std::string& manifest_path,
              const std::string& dataset_path, const PipelineOpts& pipe,
              const ForestOpts& forest) {
  fs::path out = require_out(common.out);
  const ChannelMap& map = ChannelMap::default_map();

  LabeledDataset dataset;
  if (!dataset_path.empty()) {
    std::ifstream f(dataset_path);
    if (!f) fail(errc::io_error, "cannot open " + dataset_path);
    dataset = read_dataset_csv(f, map);
  } else if (!manifest_path.empty()) {
    dataset = dataset_from_manifest(manifest_path, pipe.params());
    std::ofstream f(out / "dataset.csv");
    write_dataset_csv(f, dataset, map);
  } else {
    fail(errc::invalid_config, "train needs --manifest or --dataset");
  }
  log_info("training on " + std::to_string(dataset.rows()) + " rows");

  ForestParams params = forest.params(common.seed);

  // Stratified 80/20 holdout for the human-readable report; the shipped
  // model is refit on all rows.
  Rng rng(splitmix64(params.seed));
  std::vector<Eigen::Index> train_rows, test_rows;
  for (int c = 0; c < kClassCount; ++c) {
    std::vector<Eigen::Index> class_rows;
    for (Eigen::Index r = 0; r < dataset.rows(); ++r)
      if (static_cast<int>(dataset.labels[static_cast<std::size_t>(r)]) == c)
        class_rows.push_back(r);
    if (class_rows.empty()) continue;
    if (class_rows.size() < 2) {
      train_rows.insert(train_rows.end(), class_rows.begin(),
                        class_rows.end());
      continue;
    }
    rng.shuffle(class_rows);
    std::size_t n_test =
        std::clamp<std::size_t>(class_rows.size() / 5, 1,
                                class_rows.size() - 1);
    for (std::size_t i = 0; i < class_rows.size(); ++i)
      (i < n_test ? test_rows : train_rows).push_back(class_rows[i]);
  }
  auto subset = [&](const std::vector<Eigen::Index>& rows) {
    LabeledDataset d;
    d.features.resize(static_cast<Eigen::Index>(rows.size()), kFeatureCount);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      d.features.row(static_cast<Eigen::Index>(i)) =
          dataset.features.row(rows[i]);
      d.labels.push_back(dataset.labels[static_cast<std::size_t>(rows[i])]);
      d.subject_ids.push_back(
          dataset.subject_ids[static_cast<std::size_t>(rows[i])]);
    }
    return d;
  };

  ForestModel holdout_model = train_forest(subset(train_rows), params);
  EvalReport holdout = evaluate(holdout_model, subset(test_rows));
  write_text(out / "report.json", report_to_json(holdout));
  write_text(out / "report.txt", report_table(holdout));
  if (log_level() <= LogLevel::Info) std::cerr << report_table(holdout);

  ForestModel model = train_forest(dataset, params);
  write_text(out / "model.json", forest_to_json(model));
  CompactModel compact = compile_model(model);
  write_bytes(out / "model.bin", compact.bytes);

  std::vector<Eigen::Index> mismatched =
      audit_argmax(model, compact, dataset.features);
  if (!mismatched.empty())
    fail(errc::corrupt_model,
         "compiled model disagrees with the trained model on " +
             std::to_string(mismatched.size()) + " training rows");
  log_info("model.bin is " + std::to_string(compact.bytes.size()) +
           " bytes, train-set argmax agreement verified");
  return 0;
}

int cmd_evaluate(const CommonOpts& common, const std::string& dataset_path,
                 const std::string& model_path,
                 const std::string& predictions_path) {
  fs::path out = require_out(common.out);
  const ChannelMap& map = ChannelMap::default_map();
  std::ifstream f(dataset_path);
  if (!f) fail(errc::io_error, "cannot open " + dataset_path);
  LabeledDataset dataset = read_dataset_csv(f, map);

  EvalReport report;
  if (!predictions_path.empty()) {
    std::ifstream p(predictions_path);
    if (!p) fail(errc::io_error, "cannot open " + predictions_path);
    auto predictions = read_predictions_csv(p);
    if (static_cast<Eigen::Index>(predictions.size()) != dataset.rows())
      fail(errc::shape_mismatch,
           "predictions cover " + std::to_string(predictions.size()) +
               " rows, dataset has " + std::to_string(dataset.rows()));
    std::vector<HydrationLabel> predicted(predictions.size(),
                                          HydrationLabel::FullyHydrated);
    std::vector<char> seen(predictions.size(), 0);
    for (const auto& [row, label] : predictions) {
      if (row < 0 || row >= dataset.rows() ||
          seen[static_cast<std::size_t>(row)])
        fail(errc::parse_error,
             "predictions must cover each row index exactly once");
      seen[static_cast<std::size_t>(row)] = 1;
      predicted[static_cast<std::size_t>(row)] = label;
    }
    report = evaluate_labels(dataset.labels, predicted);
  } else if (!model_path.empty()) {
    ForestModel model = read_model_file(model_path);
    report = evaluate(model, dataset);
  } else {
    fail(errc::invalid_config,
         "evaluate needs --model or --external-predictions");
  }

  write_text(out / "report.json", report_to_json(report));
  write_text(out / "report.txt", report_table(report));
  std::cout << report_table(report);
  return 0;
}

int cmd_cv(const CommonOpts& common, const std::string& dataset_path,
           int folds, bool grouped, const ForestOpts& forest) {
  fs::path out = require_out(common.out);
  std::ifstream f(dataset_path);
  if (!f) fail(errc::io_error, "cannot open " + dataset_path);
  LabeledDataset dataset = read_dataset_csv(f, ChannelMap::default_map());

  CvResult cv = cross_validate(dataset, folds, grouped,
                               forest.params(common.seed), common.seed);
  json j;
  j["folds"] = folds;
  j["grouped"] = grouped;
  j["mean_accuracy"] = cv.mean_accuracy;
  j["std_accuracy"] = cv.std_accuracy;
  json fold_list = json::array();
  for (const FoldResult& fold : cv.folds) {
    json fj;
    fj["accuracy"] = fold.report.accuracy;
    fj["train_accuracy"] = fold.train_accuracy;
    fj["rows"] = fold.report.row_count;
    if (grouped) fj["subjects"] = fold.test_subjects;
    fold_list.push_back(std::move(fj));
  }
  j["fold_results"] = std::move(fold_list);
  std::string text = j.dump(2) + "\n";
  write_text(out / "cv.json", text);
  std::cout << text;
  return 0;
}

int cmd_per_subject(const CommonOpts& common, const std::string& dataset_path,
                    const ForestOpts& forest) {
  fs::path out = require_out(common.out);
  std::ifstream f(dataset_path);
  if (!f) fail(errc::io_error, "cannot open " + dataset_path);
  LabeledDataset dataset = read_dataset_csv(f, ChannelMap::default_map());

  PerSubjectResult result =
      per_subject_evaluate(dataset, forest.params(common.seed), common.seed);
  json j;
  json subjects = json::array();
  for (const SubjectResult& s : result.subjects) {
    json sj;
    sj["subject"] = s.subject_id;
    sj["accuracy"] = s.report.accuracy;
    sj["macro_f1"] = s.report.macro_f1;
    sj["train_rows"] = s.train_rows;
    sj["test_rows"] = s.test_rows;
    subjects.push_back(std::move(sj));
  }
  j["subjects"] = std::move(subjects);
  j["skipped_subjects"] = result.skipped_subjects;
  std::string text = j.dump(2) + "\n";
  write_text(out / "per_subject.json", text);
  std::cout << text;
  return 0;
}

int cmd_compile(const CommonOpts& common, const std::string& model_path,
                const std::string& audit_dataset_path) {
  fs::path out = require_out(common.out);
  ForestModel model = forest_from_json(read_text(model_path));
  CompactModel compact = compile_model(model);
  write_bytes(out / "model.bin", compact.bytes);

  if (!audit_dataset_path.empty()) {
    std::ifstream f(audit_dataset_path);
    if (!f) fail(errc::io_error, "cannot open " + audit_dataset_path);
    LabeledDataset dataset =
        read_dataset_csv(f, ChannelMap::default_map());
    std::vector<Eigen::Index> mismatched =
        audit_argmax(model, compact, dataset.features);
    if (!mismatched.empty())
      fail(errc::corrupt_model,
           "compiled model disagrees with the source model on " +
               std::to_string(mismatched.size()) + " rows");
    log_info("audit passed on " + std::to_string(dataset.rows()) + " rows");
  }
  log_info("model.bin is " + std::to_string(compact.bytes.size()) + " bytes");
  return 0;
}

int cmd_stream(const CommonOpts& common, const std::string& model_path,
               const std::string& profile_path, const std::string& input_path,
               const PipelineOpts& pipe, const std::string& pace) {
  CompactModel model = load_compact(read_bytes(model_path));
  CalibrationProfile profile =
      profile_path.empty() ? CalibrationProfile::identity()
                           : profile_from_json(read_text(profile_path));
  PipelineParams pl = pipe.params();

  StreamConfig config;
  config.window = pl.window;
  config.evm = EvmParams{pl.alpha, pl.band};
  config.profile = profile;
  StreamState state(config);

  std::ifstream file;
  std::istream* in = &std::cin;
  if (input_path != "-") {
    file.open(input_path);
    if (!file) fail(errc::io_error, "cannot open " + input_path);
    in = &file;
  }
  const bool real_pace = pace == "real";
  if (!real_pace && pace != "fast")
    fail(errc::invalid_config, "--pace must be real or fast");

  std::ofstream out_file;
  if (!common.out.empty()) {
    fs::path out = require_out(common.out);
    out_file.open(out / "stream_output.csv", std::ios::trunc);
  }

  const ChannelMap& map = ChannelMap::default_map();
  std::string line;
  if (!std::getline(*in, line))
    fail(errc::parse_error, "stream input: missing header line");
  std::string expected = "timestamp_ms";
  for (int c = 0; c < kChannelCount; ++c)
    expected += "," + map.channel_name(c);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != expected)
    fail(errc::parse_error, "stream input: unexpected header");

  std::int64_t frames = 0, emitted = 0;
  std::int64_t first_ts = 0;
  auto start = std::chrono::steady_clock::now();
  std::size_t line_no = 1;
  while (std::getline(*in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream fields(line);
    SpectralFrame frame;
    std::string token;
    if (!std::getline(fields, token, ','))
      fail(errc::parse_error, "stream input line " + std::to_string(line_no));
    frame.timestamp_ms =
        parse_int(token, "stream input line " + std::to_string(line_no));
    for (int c = 0; c < kChannelCount; ++c) {
      if (!std::getline(fields, token, ','))
        fail(errc::parse_error, "stream input line " +
                                    std::to_string(line_no) +
                                    ": expected 19 fields");
      frame.channels[c] = parse_double(
          token, "stream input line " + std::to_string(line_no));
    }
    if (std::getline(fields, token, ','))
      fail(errc::parse_error, "stream input line " + std::to_string(line_no) +
                                  ": expected 19 fields");

    if (frames == 0) first_ts = frame.timestamp_ms;
    if (real_pace) {
      auto target = start + std::chrono::milliseconds(frame.timestamp_ms -
                                                      first_ts);
      std::this_thread::sleep_until(target);
    }

    std::optional<StreamResult> result = state.push(frame, model);
    ++frames;
    if (result) {
      std::string out_line = format_stream_line(*result);
      std::cout << out_line << "\n";
      std::cout.flush();
      if (out_file.is_open()) out_file << out_line << "\n";
      ++emitted;
    }
  }
  log_info("processed " + std::to_string(frames) + " frames, emitted " +
           std::to_string(emitted) + " classifications");
  return 0;
}

int cmd_plot_data(const CommonOpts& common, const std::string& what,
                  int channel) {
  fs::path out = require_out(common.out);
  const ChannelMap& map = ChannelMap::default_map();

  if (what == "solutions") {
    SolutionSimOptions options;
    options.n_samples = 1;
    options.seed = common.seed;
    std::ostringstream csv;
    csv << "wavelength_nm,blank,c200,c400\n";
    SolutionSim blank =
        simulate_solution(default_solution(0.0), 256, options);
    SolutionSim c200 =
        simulate_solution(default_solution(200.0), 256, options);
    SolutionSim c400 =
        simulate_solution(default_solution(400.0), 256, options);
    for (int c = 0; c < kChannelCount; ++c) {
      csv << format_double(map.wavelengths_nm[c]) << ','
          << format_double(blank.measured.values(0, c)) << ','
          << format_double(c200.measured.values(0, c)) << ','
          << format_double(c400.measured.values(0, c)) << '\n';
    }
    write_text(out / "plot_solutions.csv", csv.str());
    log_info("wrote plot_solutions.csv");
    return 0;
  }
  if (what != "evm")
    fail(errc::invalid_config,
         "--what must be solutions or evm, got \"" + what + "\"");
  if (channel < 0 || channel >= kChannelCount)
    fail(errc::invalid_config, "--channel must be in [0, 17]");

  SessionSpec session = SessionSpec::standard(900.0, 1.0);
  session.trajectory = Trajectory::three_plateaus(900.0);
  PipelineParams pl = default_pipeline(1.0);
  CohortSpec cohort = default_cohort();
  cohort.n_subjects = 1;
  CohortResult cohortResult =
      generate_cohort(cohort, session, pl, common.seed);
  const SubjectData& subject = cohortResult.subjects.front();

  std::vector<SpectralFrame> all_frames;
  for (const ParticipantRecording& rec : subject.recordings)
    all_frames.insert(all_frames.end(), rec.frames.begin(),
                      rec.frames.end());
  AbsorbanceSeries series =
      absorbance_series(all_frames, subject.profile, map);
  EvmParams evm{pl.alpha, pl.band};
  AbsorbanceSeries magnified = eulerian_magnify(series, evm);

  std::ostringstream csv;
  csv << "timestamp_ms,raw,magnified\n";
  for (Eigen::Index t = 0; t < series.sample_count(); ++t)
    csv << series.timestamps_ms[t] << ','
        << format_double(series.values(t, channel)) << ','
        << format_double(magnified.values(t, channel)) << '\n';
  write_text(out / "plot_evm.csv", csv.str());
  log_info("wrote plot_evm.csv");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hydration tracking pipeline"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate synthetic sessions");
  Binder gen_binder;
  CommonOpts gen_common;
  PipelineOpts gen_pipe;
  std::string gen_preset = "default";
  int gen_subjects = 0;
  double gen_duration = 1800.0;
  double gen_noise = 0.0;
  bool gen_gain_errors = false;
  bind_common(gen, gen_binder, gen_common);
  bind_pipeline(gen, gen_binder, gen_pipe);
  gen_binder.bind(gen, "preset", gen_preset,
                  "default | chance | solutions");
  gen_binder.bind(gen, "subjects", gen_subjects,
                  "subject count (0 = preset default)");
  gen_binder.bind(gen, "duration", gen_duration, "session length, seconds");
  gen_binder.bind(gen, "noise", gen_noise,
                  "solution preset: absorbance noise sigma");
  gen_binder.bind_flag(gen, "gain-errors", gen_gain_errors,
                       "solution preset: hidden per-channel gain errors");

  // calibrate
  auto* cal = app.add_subcommand("calibrate", "fit channel gains");
  Binder cal_binder;
  CommonOpts cal_common;
  std::string cal_measured, cal_reference, cal_i0;
  bind_common(cal, cal_binder, cal_common);
  cal_binder.bind(cal, "measured", cal_measured,
                  "measured absorbance series CSV");
  cal_binder.bind(cal, "reference", cal_reference,
                  "reference absorbance series CSV");
  cal_binder.bind(cal, "i0-frames", cal_i0,
                  "optional incident intensity frames CSV");

  // preprocess
  auto* pre = app.add_subcommand("preprocess",
                                 "absorbance, resampling, magnification");
  Binder pre_binder;
  CommonOpts pre_common;
  PipelineOpts pre_pipe;
  std::string pre_input, pre_profile;
  bool pre_print_filter = false;
  bind_common(pre, pre_binder, pre_common);
  bind_pipeline(pre, pre_binder, pre_pipe);
  pre_binder.bind(pre, "input", pre_input, "raw frames CSV");
  pre_binder.bind(pre, "profile", pre_profile,
                  "calibration profile JSON (identity when omitted)");
  pre_binder.bind_flag(pre, "print-filter", pre_print_filter,
                       "dump the designed band-pass sections as JSON");

  // train
  auto* train = app.add_subcommand("train", "train and compile a model");
  Binder train_binder;
  CommonOpts train_common;
  PipelineOpts train_pipe;
  ForestOpts train_forest_opts;
  std::string train_manifest, train_dataset;
  bind_common(train, train_binder, train_common);
  bind_pipeline(train, train_binder, train_pipe);
  bind_forest(train, train_binder, train_forest_opts);
  train_binder.bind(train, "manifest", train_manifest,
                    "manifest.json from gen-data");
  train_binder.bind(train, "dataset", train_dataset,
                    "precomputed feature dataset CSV");

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "score a model or predictions");
  Binder eval_binder;
  CommonOpts eval_common;
  std::string eval_dataset, eval_model, eval_predictions;
  bind_common(eval, eval_binder, eval_common);
  eval_binder.bind(eval, "dataset", eval_dataset, "feature dataset CSV");
  eval_binder.bind(eval, "model", eval_model, "model.bin or model.json");
  eval_binder.bind(eval, "external-predictions", eval_predictions,
                   "predictions CSV (row_index,predicted_label)");

  // cv
  auto* cv = app.add_subcommand("cv", "cross validation");
  Binder cv_binder;
  CommonOpts cv_common;
  ForestOpts cv_forest;
  std::string cv_dataset;
  int cv_folds = 5;
  bool cv_grouped = false;
  bind_common(cv, cv_binder, cv_common);
  bind_forest(cv, cv_binder, cv_forest);
  cv_binder.bind(cv, "dataset", cv_dataset, "feature dataset CSV");
  cv_binder.bind(cv, "folds", cv_folds, "fold count");
  cv_binder.bind_flag(cv, "grouped", cv_grouped,
                      "assign whole subjects to folds");

  // per-subject
  auto* per = app.add_subcommand("per-subject", "personalised models");
  Binder per_binder;
  CommonOpts per_common;
  ForestOpts per_forest;
  std::string per_dataset;
  bind_common(per, per_binder, per_common);
  bind_forest(per, per_binder, per_forest);
  per_binder.bind(per, "dataset", per_dataset, "feature dataset CSV");

  // compile
  auto* comp = app.add_subcommand("compile", "serialize a model to bytes");
  Binder comp_binder;
  CommonOpts comp_common;
  std::string comp_model, comp_audit;
  bind_common(comp, comp_binder, comp_common);
  comp_binder.bind(comp, "model", comp_model, "model.json to compile");
  comp_binder.bind(comp, "audit-dataset", comp_audit,
                   "verify argmax agreement on this dataset");

  // stream
  auto* stream = app.add_subcommand("stream", "streaming inference");
  Binder stream_binder;
  CommonOpts stream_common;
  PipelineOpts stream_pipe;
  std::string stream_model, stream_profile, stream_input = "-";
  std::string stream_pace = "fast";
  bind_common(stream, stream_binder, stream_common);
  bind_pipeline(stream, stream_binder, stream_pipe);
  stream_binder.bind(stream, "model", stream_model, "compact model.bin");
  stream_binder.bind(stream, "profile", stream_profile,
                     "calibration profile JSON (identity when omitted)");
  stream_binder.bind(stream, "input", stream_input,
                     "frames CSV path, - for stdin");
  stream_binder.bind(stream, "pace", stream_pace,
                     "fast (as fast as possible) or real (timestamp pace)");

  // plot-data
  auto* plot = app.add_subcommand("plot-data", "write plot-ready CSVs");
  Binder plot_binder;
  CommonOpts plot_common;
  std::string plot_what = "solutions";
  int plot_channel = 14;
  bind_common(plot, plot_binder, plot_common);
  plot_binder.bind(plot, "what", plot_what, "solutions | evm");
  plot_binder.bind(plot, "channel", plot_channel,
                   "channel index for evm plots");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  struct Cmd {
    CLI::App* app;
    Binder* binder;
    CommonOpts* common;
    std::function<int()> run;
  };
  std::vector<Cmd> commands = {
      {gen, &gen_binder, &gen_common,
       [&] {
         return cmd_gen_data(gen_common, gen_preset, gen_subjects,
                             gen_duration, gen_pipe, gen_noise,
                             gen_gain_errors);
       }},
      {cal, &cal_binder, &cal_common,
       [&] {
         return cmd_calibrate(cal_common, cal_measured, cal_reference,
                              cal_i0);
       }},
      {pre, &pre_binder, &pre_common,
       [&] {
         return cmd_preprocess(pre_common, pre_input, pre_profile, pre_pipe,
                               pre_print_filter);
       }},
      {train, &train_binder, &train_common,
       [&] {
         return cmd_train(train_common, train_manifest, train_dataset,
                          train_pipe, train_forest_opts);
       }},
      {eval, &eval_binder, &eval_common,
       [&] {
         return cmd_evaluate(eval_common, eval_dataset, eval_model,
                             eval_predictions);
       }},
      {cv, &cv_binder, &cv_common,
       [&] {
         return cmd_cv(cv_common, cv_dataset, cv_folds, cv_grouped,
                       cv_forest);
       }},
      {per, &per_binder, &per_common,
       [&] { return cmd_per_subject(per_common, per_dataset, per_forest); }},
      {comp, &comp_binder, &comp_common,
       [&] { return cmd_compile(comp_common, comp_model, comp_audit); }},
      {stream, &stream_binder, &stream_common,
       [&] {
         return cmd_stream(stream_common, stream_model, stream_profile,
                           stream_input, stream_pipe, stream_pace);
       }},
      {plot, &plot_binder, &plot_common,
       [&] { return cmd_plot_data(plot_common, plot_what, plot_channel); }},
  };

  try {
    for (Cmd& cmd : commands) {
      if (!cmd.app->parsed()) continue;
      if (!cmd.common->config.empty())
        cmd.binder->apply_config(cmd.common->config);
      echo_config(cmd.app->get_name(), *cmd.binder, cmd.common->out);
      log_debug("running " + cmd.app->get_name());
      return cmd.run();
    }
    std::cerr << "error: no subcommand selected\n";
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_class(e.code());
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
}
