#include <cmath>
#include <vector>

#include "doctest.h"
#include "helpers.hpp"
#include "hydrotrack/io.hpp"
#include "hydrotrack/synth.hpp"

using namespace hydrotrack;

TEST_CASE("solution absorbance is linear in concentration") {
  SolutionSpec blank = default_solution(0.0);
  SolutionSpec c200 = default_solution(200.0);
  SolutionSpec c400 = default_solution(400.0);
  for (int c = 0; c < kChannelCount; ++c) {
    double a0 = blank.solvent_baseline[c];
    double a2 = c200.solvent_baseline[c] + 200.0 * c200.absorptivity[c];
    double a4 = c400.solvent_baseline[c] + 400.0 * c400.absorptivity[c];
    CHECK(a2 > a0);
    CHECK(a4 > a2);
    CHECK(a4 - a2 == doctest::Approx(a2 - a0).epsilon(1e-12));
  }
}

TEST_CASE("noiseless solution measurement equals the reference") {
  SolutionSimOptions options;
  options.n_samples = 20;
  options.seed = 5;
  SolutionSim sim = simulate_solution(default_solution(300.0), 200, options);
  CHECK((sim.hidden_gains == 1.0).all());

  AbsorbanceSeries reference =
      resample_to_channels(sim.reference, ChannelMap::default_map());
  REQUIRE(reference.sample_count() == sim.measured.sample_count());
  double max_diff =
      (reference.values - sim.measured.values).cwiseAbs().maxCoeff();
  CHECK(max_diff < 1e-12);
}

TEST_CASE("hidden gain errors stay inside the configured range") {
  SolutionSimOptions options;
  options.n_samples = 5;
  options.gain_errors = true;
  options.max_log10_gain_error = 0.05;
  options.seed = 21;
  SolutionSim sim = simulate_solution(default_solution(100.0), 128, options);
  bool any_off_unity = false;
  for (int c = 0; c < kChannelCount; ++c) {
    double lg = std::log10(sim.hidden_gains[c]);
    CHECK(std::abs(lg) <= 0.05 + 1e-12);
    if (std::abs(lg) > 1e-6) any_off_unity = true;
  }
  CHECK(any_off_unity);
}

TEST_CASE("reference grid always contains the channel wavelengths") {
  SolutionSimOptions options;
  options.n_samples = 3;
  SolutionSim sim = simulate_solution(default_solution(150.0), 64, options);
  const ChannelMap& map = ChannelMap::default_map();
  for (int c = 0; c < kChannelCount; ++c) {
    bool found = false;
    for (Eigen::Index i = 0; i < sim.reference.wavelengths_nm.size(); ++i)
      if (sim.reference.wavelengths_nm[i] == map.wavelengths_nm[c])
        found = true;
    CHECK(found);
  }
}

TEST_CASE("trajectories are clamped and nondecreasing") {
  Trajectory t = Trajectory::three_plateaus(1800.0);
  validate(t, 1800.0);
  CHECK(t.at(-50.0) == doctest::Approx(t.at(0.0)));
  CHECK(t.at(5000.0) == doctest::Approx(t.at(1800.0)));
  double prev = -1.0;
  for (double s = 0.0; s <= 1800.0; s += 10.0) {
    double level = t.at(s);
    CHECK(level >= prev - 1e-12);
    CHECK(level >= 0.0);
    CHECK(level <= 1.0);
    prev = level;
  }
  // Segment midpoints land in the three label bands.
  CHECK(t.at(300.0) < 1.0 / 3.0);
  CHECK(t.at(900.0) >= 1.0 / 3.0);
  CHECK(t.at(900.0) < 2.0 / 3.0);
  CHECK(t.at(1500.0) >= 2.0 / 3.0);
}

TEST_CASE("participant sessions split into three labeled thirds") {
  SessionSpec session = SessionSpec::standard(600.0, 1.0);
  session.trajectory = Trajectory::three_plateaus(600.0);
  ParticipantSpec spec;
  spec.subject_id = 3;
  spec.attenuation = 0.8;
  spec.baseline = ChannelArray::Constant(0.3);
  spec.sensitivity = ChannelArray::Constant(0.2);
  spec.seed = 77;

  auto recordings = simulate_participant(spec, session);
  REQUIRE(recordings.size() == 3);
  CHECK(recordings[0].label == HydrationLabel::FullyHydrated);
  CHECK(recordings[1].label == HydrationLabel::MidHydrated);
  CHECK(recordings[2].label == HydrationLabel::Dehydrated);
  CHECK(recordings[0].frames.size() == 200);
  CHECK(recordings[1].frames.size() == 200);
  CHECK(recordings[2].frames.size() == 200);

  std::int64_t prev_ts = -1;
  for (const auto& rec : recordings)
    for (const SpectralFrame& frame : rec.frames) {
      CHECK(frame.timestamp_ms > prev_ts);
      prev_ts = frame.timestamp_ms;
      CHECK((frame.channels > 0.0).all());
    }
}

TEST_CASE("dehydration lowers measured intensity") {
  SessionSpec session = SessionSpec::standard(600.0, 1.0);
  session.trajectory = Trajectory::three_plateaus(600.0);
  ParticipantSpec spec;
  spec.attenuation = 1.0;
  spec.baseline = ChannelArray::Constant(0.2);
  spec.sensitivity = ChannelArray::Constant(0.25);
  spec.noise_sigma = 0.0;
  spec.seed = 5;

  auto recordings = simulate_participant(spec, session);
  auto mean_intensity = [](const ParticipantRecording& rec, int channel) {
    double acc = 0.0;
    for (const SpectralFrame& f : rec.frames) acc += f.channels[channel];
    return acc / static_cast<double>(rec.frames.size());
  };
  for (int c = 0; c < kChannelCount; c += 5) {
    CHECK(mean_intensity(recordings[0], c) > mean_intensity(recordings[1], c));
    CHECK(mean_intensity(recordings[1], c) > mean_intensity(recordings[2], c));
  }
}

TEST_CASE("cohort generation is deterministic and well formed") {
  CohortSpec cohort = default_cohort();
  cohort.n_subjects = 3;
  SessionSpec session = SessionSpec::standard(420.0, 1.0);
  session.trajectory = Trajectory::three_plateaus(420.0);
  PipelineParams pipeline = default_pipeline(1.0);

  CohortResult a = generate_cohort(cohort, session, pipeline, 31);
  CohortResult b = generate_cohort(cohort, session, pipeline, 31);
  REQUIRE(a.subjects.size() == 3);
  CHECK(a.dataset.rows() == b.dataset.rows());
  CHECK((a.dataset.features.array() == b.dataset.features.array()).all());

  CohortResult c = generate_cohort(cohort, session, pipeline, 32);
  CHECK((a.dataset.features.array() != c.dataset.features.array()).any());

  // 420 s -> 140 s per segment -> 9 windows each, three segments, three
  // subjects.
  CHECK(a.dataset.rows() == 3 * 3 * 9);
  std::array<int, kClassCount> per_class{};
  for (HydrationLabel l : a.dataset.labels)
    ++per_class[static_cast<int>(l)];
  CHECK(per_class[0] == per_class[1]);
  CHECK(per_class[1] == per_class[2]);

  for (const SubjectData& subject : a.subjects) {
    CHECK((subject.profile.i0 == session.incident_i0).all());
    CHECK((subject.profile.gains == 1.0).all());
    CHECK(subject.spec.attenuation >= cohort.attenuation_min);
    CHECK(subject.spec.attenuation <= cohort.attenuation_max);
  }
}

TEST_CASE("chance cohort carries no hydration signal") {
  CohortSpec cohort = chance_cohort();
  CHECK(cohort.n_subjects >= 2);
  SessionSpec session = SessionSpec::standard(420.0, 1.0);
  session.trajectory = Trajectory::three_plateaus(420.0);
  CohortResult result =
      generate_cohort(cohort, session, default_pipeline(1.0), 8);
  // Labels still cycle through all three classes.
  std::array<int, kClassCount> per_class{};
  for (HydrationLabel l : result.dataset.labels)
    ++per_class[static_cast<int>(l)];
  for (int c = 0; c < kClassCount; ++c) CHECK(per_class[c] > 0);
  // The per-subject pulse amplitude no longer tracks the label.
  for (const SubjectData& subject : result.subjects)
    CHECK(subject.spec.pulse_gain == 0.0);
}

TEST_CASE("pipeline defaults") {
  PipelineParams p = default_pipeline(2.0);
  CHECK(p.band.low_hz == doctest::Approx(0.01));
  CHECK(p.band.high_hz == doctest::Approx(0.2));
  CHECK(p.band.sample_rate_hz == doctest::Approx(2.0));
  CHECK(p.alpha == doctest::Approx(10.0));
  CHECK(p.window.length_s == doctest::Approx(60.0));
  CHECK(p.window.stride_s == doctest::Approx(10.0));
}
