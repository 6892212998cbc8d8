#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "hydrotrack/dsp.hpp"
#include "hydrotrack/features.hpp"
#include "hydrotrack/spectra.hpp"

namespace hydrotrack {

// ---------------------------------------------------------------------------
// Bench solutions: static samples with a known spectrum, used to exercise the
// calibration path end to end with a recoverable ground truth.

struct SolutionSpec {
  double concentration_mg = 200.0;
  // Absorbance added per mg at each channel wavelength.
  ChannelArray absorptivity = ChannelArray::Zero();
  // Absorbance of the blank solvent.
  ChannelArray solvent_baseline = ChannelArray::Zero();
};

// Smooth two-band absorptivity preset; linear in concentration.
SolutionSpec default_solution(double concentration_mg);

struct SolutionSimOptions {
  int n_samples = 100;
  double rate_hz = 1.0;
  // Additive measurement noise per sample and channel, absorbance units.
  double noise_sigma = 0.0;
  // When true, each channel gets a hidden gain distortion the calibration
  // fit is expected to recover.
  bool gain_errors = false;
  // Half-range of log10(gain) when gain errors are enabled.
  double max_log10_gain_error = 0.05;
  std::uint64_t seed = 0;
};

// High-resolution reference measurement of the same solution: a fine
// wavelength grid (always containing the channel wavelengths, so channel
// resampling is exact) with one row per time sample.
struct ReferenceSpectrum {
  Eigen::VectorXd wavelengths_nm;
  Eigen::MatrixXd values;  // samples x wavelengths
  TimeVector timestamps_ms;
};

struct SolutionSim {
  AbsorbanceSeries measured;   // as seen by the uncalibrated sensor
  ReferenceSpectrum reference;  // ideal instrument, noiseless
  ChannelArray hidden_gains;   // gains a perfect calibration recovers
};

SolutionSim simulate_solution(const SolutionSpec& spec,
                              int reference_resolution,
                              const SolutionSimOptions& options);

// Linear interpolation of the reference rows onto the channel wavelengths.
AbsorbanceSeries resample_to_channels(const ReferenceSpectrum& reference,
                                      const ChannelMap& map);

// ---------------------------------------------------------------------------
// Participant sessions: deterministic intensity traces following a
// dehydration trajectory, segmented into labeled thirds.

// Piecewise-linear dehydration level over session time, values in [0, 1],
// nondecreasing.
struct Trajectory {
  std::vector<std::pair<double, double>> knots;  // (time_s, level)

  double at(double time_s) const;
  static Trajectory linear_ramp(double duration_s);
  // Three near-flat levels (~0.13, ~0.52, ~0.91 at the segment midpoints)
  // with short ramps between them.
  static Trajectory three_plateaus(double duration_s);
};

void validate(const Trajectory& trajectory, double duration_s);

struct SessionSpec {
  double duration_s = 1800.0;
  double rate_hz = 1.0;
  ChannelArray incident_i0 = ChannelArray::Constant(10000.0);
  Trajectory trajectory;

  static SessionSpec standard(double duration_s = 1800.0,
                              double rate_hz = 1.0);
};

struct ParticipantSpec {
  int subject_id = 0;
  // Wavelength-independent skin/coupling attenuation in (0, 1].
  double attenuation = 1.0;
  // Absorbance at full hydration.
  ChannelArray baseline = ChannelArray::Zero();
  // Extra absorbance per unit dehydration level.
  ChannelArray sensitivity = ChannelArray::Zero();
  // Additive intensity noise (counts).
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;

  // In-band physiological oscillation whose absorbance amplitude grows with
  // dehydration: (pulse_base + pulse_gain * level) * pulse_profile.
  double pulse_freq_hz = 0.0;
  double pulse_base = 0.0;
  double pulse_gain = 0.0;
  ChannelArray pulse_profile = ChannelArray::Zero();

  // Out-of-band interference tone with a slow random-walk envelope.
  double interference_freq_hz = 0.0;
  double interference_amp = 0.0;
  ChannelArray interference_profile = ChannelArray::Zero();
  double interference_tau_s = 120.0;
};

struct ParticipantRecording {
  std::vector<SpectralFrame> frames;
  HydrationLabel label = HydrationLabel::FullyHydrated;
  int segment_index = 0;
};

// Simulates one session and cuts it into three equal-duration segments,
// labeled by the trajectory level at each segment's midpoint
// (< 1/3 fully hydrated, < 2/3 mid, else dehydrated).
std::vector<ParticipantRecording> simulate_participant(
    const ParticipantSpec& spec, const SessionSpec& session);

// ---------------------------------------------------------------------------
// Cohorts: several participants with randomized physiology, pushed through
// the full preprocessing pipeline into one labeled dataset.

struct CohortSpec {
  int n_subjects = 6;
  double attenuation_min = 0.60, attenuation_max = 1.0;
  double baseline_level = 0.35;
  double baseline_jitter = 0.03;
  double sensitivity_min = 0.15, sensitivity_max = 0.25;
  double noise_sigma = 3.0;
  double pulse_freq_hz = 0.045;
  double pulse_base_min = 0.008, pulse_base_max = 0.014;
  double pulse_gain_min = 0.100, pulse_gain_max = 0.140;
  double interference_freq_hz = 0.45;
  double interference_min = 0.05, interference_max = 0.15;
  double interference_tau_s = 120.0;
};

CohortSpec default_cohort();
// Same nuisance structure but zero hydration effect; classifiers should sit
// at chance on it.
CohortSpec chance_cohort();

struct PipelineParams {
  BandSpec band;
  double alpha = 10.0;
  WindowSpec window;
};

PipelineParams default_pipeline(double sample_rate_hz = 1.0);

struct SubjectData {
  ParticipantSpec spec;
  CalibrationProfile profile;
  std::vector<ParticipantRecording> recordings;
};

struct CohortResult {
  LabeledDataset dataset;
  std::vector<SubjectData> subjects;
  int skipped_recordings = 0;
};

// Simulates every subject, applies calibration, magnification and windowing,
// and stacks the rows. alpha = 0 gives the unmagnified pipeline.
CohortResult generate_cohort(const CohortSpec& cohort,
                             const SessionSpec& session,
                             const PipelineParams& pipeline,
                             std::uint64_t seed);

}  // namespace hydrotrack
