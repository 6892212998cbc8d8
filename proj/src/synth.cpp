#include "hydrotrack/synth.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "hydrotrack/rng.hpp"

namespace hydrotrack {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

double gauss_bump(double x, double centre, double width) {
  double u = (x - centre) / width;
  return std::exp(-u * u);
}

// Piecewise-linear interpolation through the 18 channel knots; the channel
// values define the continuous spectrum.
double interp_channels(const ChannelArray& values, const ChannelMap& map,
                       double wavelength_nm) {
  const ChannelArray& wl = map.wavelengths_nm;
  if (wavelength_nm <= wl[0]) return values[0];
  if (wavelength_nm >= wl[kChannelCount - 1])
    return values[kChannelCount - 1];
  int c = 0;
  while (c + 2 < kChannelCount && wl[c + 1] < wavelength_nm) ++c;
  double u = (wavelength_nm - wl[c]) / (wl[c + 1] - wl[c]);
  return values[c] + u * (values[c + 1] - values[c]);
}

std::int64_t sample_timestamp_ms(std::int64_t k, double rate_hz) {
  return std::llround(static_cast<double>(k) * 1000.0 / rate_hz);
}

}  // namespace

SolutionSpec default_solution(double concentration_mg) {
  SolutionSpec spec;
  spec.concentration_mg = concentration_mg;
  const ChannelArray& wl = ChannelMap::default_map().wavelengths_nm;
  for (int c = 0; c < kChannelCount; ++c) {
    spec.absorptivity[c] = (0.8 * gauss_bump(wl[c], 560.0, 80.0) +
                            0.5 * gauss_bump(wl[c], 900.0, 60.0)) /
                           400.0;
    spec.solvent_baseline[c] = 0.10 + 0.04 * (wl[c] - 410.0) / 530.0;
  }
  return spec;
}

SolutionSim simulate_solution(const SolutionSpec& spec,
                              int reference_resolution,
                              const SolutionSimOptions& options) {
  if (!std::isfinite(spec.concentration_mg) || spec.concentration_mg < 0.0)
    fail(errc::invalid_argument,
         "simulate_solution: concentration must be >= 0");
  if (!spec.absorptivity.isFinite().all() ||
      (spec.absorptivity < 0.0).any())
    fail(errc::invalid_argument,
         "simulate_solution: absorptivity must be finite and >= 0");
  if (!spec.solvent_baseline.isFinite().all())
    fail(errc::invalid_argument,
         "simulate_solution: non-finite solvent baseline");
  if (reference_resolution < 2)
    fail(errc::invalid_argument,
         "simulate_solution: reference resolution must be >= 2");
  if (options.n_samples < 1)
    fail(errc::invalid_argument, "simulate_solution: need >= 1 sample");
  if (!(options.rate_hz > 0.0))
    fail(errc::invalid_argument, "simulate_solution: rate must be positive");
  if (options.noise_sigma < 0.0 || options.max_log10_gain_error < 0.0)
    fail(errc::invalid_argument, "simulate_solution: negative noise range");

  const ChannelMap& map = ChannelMap::default_map();
  const ChannelArray truth =
      spec.solvent_baseline + spec.concentration_mg * spec.absorptivity;

  // Fine grid = uniform grid union channel wavelengths, so interpolating the
  // reference back onto the channels reproduces the truth exactly.
  std::set<double> grid_set;
  for (int i = 0; i < reference_resolution; ++i)
    grid_set.insert(410.0 + (940.0 - 410.0) * static_cast<double>(i) /
                                static_cast<double>(reference_resolution - 1));
  for (int c = 0; c < kChannelCount; ++c)
    grid_set.insert(map.wavelengths_nm[c]);

  SolutionSim sim;
  sim.reference.wavelengths_nm.resize(
      static_cast<Eigen::Index>(grid_set.size()));
  {
    Eigen::Index i = 0;
    for (double wl : grid_set) sim.reference.wavelengths_nm[i++] = wl;
  }
  const Eigen::Index n_wl = sim.reference.wavelengths_nm.size();
  const Eigen::Index n = options.n_samples;
  Eigen::VectorXd spectrum(n_wl);
  for (Eigen::Index i = 0; i < n_wl; ++i)
    spectrum[i] =
        interp_channels(truth, map, sim.reference.wavelengths_nm[i]);
  sim.reference.values = spectrum.transpose().replicate(n, 1);
  sim.reference.timestamps_ms.resize(n);
  for (Eigen::Index k = 0; k < n; ++k)
    sim.reference.timestamps_ms[k] = sample_timestamp_ms(k, options.rate_hz);

  Rng rng(options.seed);
  sim.hidden_gains = ChannelArray::Ones();
  if (options.gain_errors)
    for (int c = 0; c < kChannelCount; ++c)
      sim.hidden_gains[c] = std::pow(
          10.0, rng.uniform(-options.max_log10_gain_error,
                            options.max_log10_gain_error));

  sim.measured.channel_map = map;
  sim.measured.timestamps_ms = sim.reference.timestamps_ms;
  sim.measured.values.resize(n, kChannelCount);
  for (Eigen::Index k = 0; k < n; ++k) {
    for (int c = 0; c < kChannelCount; ++c) {
      double a = truth[c] + std::log10(sim.hidden_gains[c]);
      if (options.noise_sigma > 0.0)
        a += rng.gaussian(0.0, options.noise_sigma);
      sim.measured.values(k, c) = a;
    }
  }
  return sim;
}

AbsorbanceSeries resample_to_channels(const ReferenceSpectrum& reference,
                                      const ChannelMap& map) {
  validate(map);
  const Eigen::Index n_wl = reference.wavelengths_nm.size();
  if (n_wl < 2)
    fail(errc::degenerate_reference,
         "resample_to_channels: need >= 2 reference wavelengths");
  if (reference.values.cols() != n_wl ||
      reference.values.rows() != reference.timestamps_ms.size())
    fail(errc::shape_mismatch,
         "resample_to_channels: reference shape mismatch");
  for (Eigen::Index i = 1; i < n_wl; ++i)
    if (!(reference.wavelengths_nm[i] > reference.wavelengths_nm[i - 1]))
      fail(errc::degenerate_reference,
           "resample_to_channels: wavelengths not strictly increasing");
  if (map.wavelengths_nm[0] < reference.wavelengths_nm[0] ||
      map.wavelengths_nm[kChannelCount - 1] >
          reference.wavelengths_nm[n_wl - 1])
    fail(errc::degenerate_reference,
         "resample_to_channels: channels outside the reference grid");

  AbsorbanceSeries out;
  out.channel_map = map;
  out.timestamps_ms = reference.timestamps_ms;
  out.values.resize(reference.values.rows(), kChannelCount);
  for (int c = 0; c < kChannelCount; ++c) {
    double target = map.wavelengths_nm[c];
    Eigen::Index i = 0;
    while (i + 2 < n_wl && reference.wavelengths_nm[i + 1] < target) ++i;
    double lo = reference.wavelengths_nm[i];
    double hi = reference.wavelengths_nm[i + 1];
    double u = (target - lo) / (hi - lo);
    if (u < 0.0) u = 0.0;
    if (u > 1.0) u = 1.0;
    out.values.col(c) = (1.0 - u) * reference.values.col(i) +
                        u * reference.values.col(i + 1);
  }
  return out;
}

double Trajectory::at(double time_s) const {
  if (knots.empty())
    fail(errc::invalid_argument, "trajectory: no knots");
  if (time_s <= knots.front().first) return knots.front().second;
  if (time_s >= knots.back().first) return knots.back().second;
  std::size_t i = 0;
  while (i + 2 < knots.size() && knots[i + 1].first < time_s) ++i;
  double u = (time_s - knots[i].first) /
             (knots[i + 1].first - knots[i].first);
  return knots[i].second + u * (knots[i + 1].second - knots[i].second);
}

Trajectory Trajectory::linear_ramp(double duration_s) {
  return Trajectory{{{0.0, 0.0}, {duration_s, 1.0}}};
}

Trajectory Trajectory::three_plateaus(double duration_s) {
  const double t = duration_s;
  return Trajectory{{{0.0, 0.10},
                     {0.30 * t, 0.15},
                     {0.36 * t, 0.48},
                     {0.63 * t, 0.55},
                     {0.70 * t, 0.88},
                     {t, 0.95}}};
}

void validate(const Trajectory& trajectory, double duration_s) {
  if (trajectory.knots.size() < 2)
    fail(errc::invalid_argument, "trajectory: need >= 2 knots");
  for (std::size_t i = 0; i < trajectory.knots.size(); ++i) {
    const auto& [t, v] = trajectory.knots[i];
    if (!std::isfinite(t) || !std::isfinite(v) || v < 0.0 || v > 1.0)
      fail(errc::invalid_argument,
           "trajectory: levels must be finite in [0, 1]");
    if (i > 0) {
      if (t <= trajectory.knots[i - 1].first)
        fail(errc::invalid_argument,
             "trajectory: knot times must be strictly increasing");
      if (v < trajectory.knots[i - 1].second)
        fail(errc::invalid_argument,
             "trajectory: dehydration level must be nondecreasing");
    }
  }
  if (trajectory.knots.front().first > 0.0 ||
      trajectory.knots.back().first < duration_s)
    fail(errc::invalid_argument,
         "trajectory: knots must cover [0, duration]");
}

SessionSpec SessionSpec::standard(double duration_s, double rate_hz) {
  SessionSpec session;
  session.duration_s = duration_s;
  session.rate_hz = rate_hz;
  session.trajectory = Trajectory::linear_ramp(duration_s);
  return session;
}

std::vector<ParticipantRecording> simulate_participant(
    const ParticipantSpec& spec, const SessionSpec& session) {
  if (!(session.duration_s > 0.0) || !(session.rate_hz > 0.0))
    fail(errc::invalid_argument,
         "simulate_participant: duration and rate must be positive");
  validate(session.trajectory, session.duration_s);
  if (!session.incident_i0.isFinite().all() ||
      (session.incident_i0 <= 0.0).any())
    fail(errc::invalid_argument,
         "simulate_participant: incident intensity must be positive");
  if (!(spec.attenuation > 0.0) || spec.attenuation > 1.0)
    fail(errc::invalid_argument,
         "simulate_participant: attenuation must be in (0, 1]");
  if (!spec.baseline.isFinite().all() || !spec.sensitivity.isFinite().all())
    fail(errc::invalid_argument,
         "simulate_participant: non-finite absorbance parameters");
  if (spec.noise_sigma < 0.0 || spec.pulse_base < 0.0 ||
      spec.pulse_gain < 0.0 || spec.interference_amp < 0.0)
    fail(errc::invalid_argument,
         "simulate_participant: negative amplitude parameter");

  const std::int64_t n =
      std::llround(session.duration_s * session.rate_hz);
  if (n < 3)
    fail(errc::too_short,
         "simulate_participant: session must cover >= 3 samples");

  Rng rng(spec.seed);
  const bool wander =
      spec.interference_amp > 0.0 && spec.interference_tau_s > 0.0;
  const double rho =
      wander ? std::exp(-1.0 / (spec.interference_tau_s * session.rate_hz))
             : 0.0;
  const double env_sigma =
      wander ? 0.3 * std::sqrt(1.0 - rho * rho) : 0.0;
  double env = 1.0;

  std::vector<SpectralFrame> frames(static_cast<std::size_t>(n));
  for (std::int64_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) / session.rate_hz;
    const double level = session.trajectory.at(t);
    if (wander) {
      env = 1.0 + rho * (env - 1.0) + rng.gaussian(0.0, env_sigma);
      if (env < 0.0) env = 0.0;
      if (env > 2.0) env = 2.0;
    }
    const double pulse_amp = spec.pulse_base + spec.pulse_gain * level;
    const double pulse = pulse_amp * std::sin(kTwoPi * spec.pulse_freq_hz * t);
    const double interference =
        spec.interference_amp * env *
        std::sin(kTwoPi * spec.interference_freq_hz * t);

    SpectralFrame& frame = frames[static_cast<std::size_t>(k)];
    frame.timestamp_ms = sample_timestamp_ms(k, session.rate_hz);
    for (int c = 0; c < kChannelCount; ++c) {
      const double absorbance = spec.baseline[c] +
                                level * spec.sensitivity[c] +
                                pulse * spec.pulse_profile[c] +
                                interference * spec.interference_profile[c];
      double intensity = session.incident_i0[c] * spec.attenuation *
                         std::pow(10.0, -absorbance);
      if (spec.noise_sigma > 0.0)
        intensity += rng.gaussian(0.0, spec.noise_sigma);
      if (intensity < 1e-6) intensity = 1e-6;
      frame.channels[c] = intensity;
    }
  }

  // Three equal-duration segments labeled by the trajectory level at each
  // segment's midpoint.
  std::vector<ParticipantRecording> recordings(3);
  const std::int64_t b1 = n / 3;
  const std::int64_t b2 = 2 * n / 3;
  const std::int64_t bounds[4] = {0, b1, b2, n};
  for (int s = 0; s < 3; ++s) {
    ParticipantRecording& rec = recordings[static_cast<std::size_t>(s)];
    rec.segment_index = s;
    rec.frames.assign(
        frames.begin() + static_cast<std::ptrdiff_t>(bounds[s]),
        frames.begin() + static_cast<std::ptrdiff_t>(bounds[s + 1]));
    const double mid_t =
        (static_cast<double>(bounds[s]) + static_cast<double>(bounds[s + 1])) /
        2.0 / session.rate_hz;
    const double level = session.trajectory.at(mid_t);
    rec.label = level < 1.0 / 3.0
                    ? HydrationLabel::FullyHydrated
                    : (level < 2.0 / 3.0 ? HydrationLabel::MidHydrated
                                         : HydrationLabel::Dehydrated);
  }
  return recordings;
}

CohortSpec default_cohort() { return CohortSpec{}; }

CohortSpec chance_cohort() {
  CohortSpec spec;
  spec.sensitivity_min = 0.0;
  spec.sensitivity_max = 0.0;
  spec.pulse_gain_min = 0.0;
  spec.pulse_gain_max = 0.0;
  return spec;
}

PipelineParams default_pipeline(double sample_rate_hz) {
  PipelineParams p;
  p.band.low_hz = 0.01;
  p.band.high_hz = 0.2;
  p.band.sample_rate_hz = sample_rate_hz;
  p.band.order = 2;
  p.alpha = 10.0;
  p.window.length_s = 60.0;
  p.window.stride_s = 10.0;
  return p;
}

CohortResult generate_cohort(const CohortSpec& cohort,
                             const SessionSpec& session,
                             const PipelineParams& pipeline,
                             std::uint64_t seed) {
  if (cohort.n_subjects < 1)
    fail(errc::invalid_argument, "generate_cohort: need >= 1 subject");
  if (cohort.attenuation_min > cohort.attenuation_max ||
      cohort.sensitivity_min > cohort.sensitivity_max ||
      cohort.pulse_base_min > cohort.pulse_base_max ||
      cohort.pulse_gain_min > cohort.pulse_gain_max ||
      cohort.interference_min > cohort.interference_max)
    fail(errc::invalid_argument, "generate_cohort: inverted parameter range");
  validate(pipeline.band);
  validate(pipeline.window);

  const ChannelMap& map = ChannelMap::default_map();
  const ChannelArray& wl = map.wavelengths_nm;

  CohortResult result;
  std::vector<Recording> rows;
  for (int s = 0; s < cohort.n_subjects; ++s) {
    std::uint64_t state =
        seed ^ (0x9E3779B97F4A7C15ULL *
                (static_cast<std::uint64_t>(static_cast<std::uint32_t>(s)) +
                 1));
    Rng rng(splitmix64(state));

    ParticipantSpec spec;
    spec.subject_id = s;
    spec.attenuation =
        rng.uniform(cohort.attenuation_min, cohort.attenuation_max);
    const double sens_scale =
        rng.uniform(cohort.sensitivity_min, cohort.sensitivity_max);
    for (int c = 0; c < kChannelCount; ++c) {
      spec.baseline[c] = cohort.baseline_level +
                         0.10 * gauss_bump(wl[c], 700.0, 120.0) +
                         rng.uniform(-cohort.baseline_jitter,
                                     cohort.baseline_jitter);
      spec.sensitivity[c] =
          sens_scale * (0.3 + gauss_bump(wl[c], 810.0, 100.0));
      spec.pulse_profile[c] = gauss_bump(wl[c], 860.0, 90.0);
      spec.interference_profile[c] =
          0.35 + 0.65 * gauss_bump(wl[c], 485.0, 150.0);
    }
    spec.noise_sigma = cohort.noise_sigma;
    spec.pulse_freq_hz = cohort.pulse_freq_hz;
    spec.pulse_base = rng.uniform(cohort.pulse_base_min, cohort.pulse_base_max);
    spec.pulse_gain = rng.uniform(cohort.pulse_gain_min, cohort.pulse_gain_max);
    spec.interference_freq_hz = cohort.interference_freq_hz;
    spec.interference_amp =
        rng.uniform(cohort.interference_min, cohort.interference_max);
    spec.interference_tau_s = cohort.interference_tau_s;
    spec.seed = rng.next_u64();

    SubjectData subject;
    subject.spec = spec;
    subject.recordings = simulate_participant(spec, session);
    subject.profile.i0 = session.incident_i0;
    subject.profile.gains = ChannelArray::Ones();
    subject.profile.created_at_ms =
        subject.recordings.back().frames.back().timestamp_ms;

    for (const ParticipantRecording& rec : subject.recordings) {
      AbsorbanceSeries series =
          absorbance_series(rec.frames, subject.profile, map);
      EvmParams evm;
      evm.alpha = pipeline.alpha;
      evm.band = pipeline.band;
      AbsorbanceSeries magnified = eulerian_magnify(series, evm);
      rows.push_back(Recording{std::move(magnified), rec.label, s});
    }
    result.subjects.push_back(std::move(subject));
  }

  DatasetBuildResult built = build_dataset(rows, pipeline.window);
  result.dataset = std::move(built.dataset);
  result.skipped_recordings = built.skipped_recordings;
  return result;
}

}  // namespace hydrotrack
