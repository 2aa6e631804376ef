#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "msaf/eeg_io.hpp"
#include "msaf/microstates.hpp"

namespace msaf {

/// Extra state sequence mixed into the recording: same templates, its own
/// uniform transitions and dwell, modulated by a carrier. Not part of the truth.
struct BackgroundProcess {
  double carrier_hz = 10.0;
  double amplitude = 1.0;  // relative to the main process
  double mean_dwell_ms = 150.0;
};

struct SynthConfig {
  std::vector<std::string> channels = standard_19_channels();
  double fs = 200.0;
  double duration = 30.0;  // seconds
  std::size_t k = 4;
  Matrix transition;                 // k x k, zero diagonal; empty = uniform
  std::vector<double> mean_dwell_ms;  // per state; empty = 100 ms each
  double snr = std::numeric_limits<double>::infinity();
  std::vector<double> amplitude;  // per state; empty = 1
  double amplitude_uv = 30.0;
  double envelope_depth = 0.25;  // sigma_t = 1 + depth * sin(2 pi 0.1 t + phase)
  double segment_peak_depth = 0.5;  // GFP dip at segment edges relative to the centre
  double carrier_hz = 0.0;          // 0 = no carrier
  std::vector<BackgroundProcess> background;
  std::optional<MicrostateMaps> templates;  // default: canonical_templates
  std::string subject_id = "synth";
  std::optional<std::string> label;
  std::uint64_t seed = 0;

  /// Throws InvalidConfig when an invariant fails.
  void validate() const;
};

struct SynthOutput {
  Recording rec;
  Segmentation truth;
  MicrostateMaps maps;
};

/// A-, B-, C- and F-like maps as cosine fields v = cos(w * angle(p, axis)):
/// A axis (1,1,0), B its left-right mirror, C the nose axis, F the left ear.
/// Average-referenced, unit norm.
MicrostateMaps canonical_templates(const Montage& montage);

/// Row-stochastic, zero-diagonal matrix with P(i -> j) proportional to weight[j].
Matrix transition_from_weights(const std::vector<double>& weight);

SynthOutput generate(const SynthConfig& cfg);

struct ClassProfile {
  std::string label;
  std::vector<double> transition_weight;  // per destination state
  std::vector<double> mean_dwell_ms;
};

/// NC, MCI, DEM with C occurrence falling and F occurrence rising toward DEM.
std::vector<ClassProfile> default_profiles();

struct CohortConfig {
  SynthConfig base;
  std::vector<ClassProfile> profiles = default_profiles();
  std::size_t n_per_class = 10;
  double jitter = 0.1;  // multiplicative per-subject jitter of weights and dwells
  std::uint64_t seed = 0;
};

std::vector<SynthOutput> make_cohort(const CohortConfig& cfg);

/// Cohort whose class information lives only in a 6 Hz-modulated process;
/// class-neutral processes ride on 2, 11 and 22 Hz carriers.
CohortConfig theta_encoded_cohort(std::size_t n_per_class, std::uint64_t seed);

}  // namespace msaf
