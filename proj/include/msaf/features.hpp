#pragma once

#include <span>
#include <string>
#include <vector>

#include "msaf/eeg_io.hpp"
#include "msaf/microstates.hpp"

namespace msaf {

struct StateRun {
  int state = 0;
  std::size_t start = 0;
  std::size_t length = 0;

  bool operator==(const StateRun&) const = default;
};

/// Maximal runs of equal labels; concatenating them rebuilds `states`.
std::vector<StateRun> state_runs(std::span<const int> states);

/// The five per-state metrics, in feature-table order.
struct StateMetrics {
  double gev = 0.0;
  double mean_corr = 0.0;
  double occurrence = 0.0;  // segments per second
  double time_cov = 0.0;    // fraction of samples
  double mean_dur = 0.0;    // milliseconds
};

struct FeatureVector {
  std::vector<std::string> state_labels;
  std::vector<StateMetrics> states;
  double gfp = 0.0;

  /// Flattened as <label>_gev, _meancorr, _occurrence, _timecov, _meandur per
  /// state, then gfp.
  std::vector<double> values() const;
};

std::vector<std::string> feature_names(const std::vector<std::string>& state_labels);

enum class GfpAggregate { Mean, Median };

struct FeatureOptions {
  /// Excludes the first and last run from occurrence and mean duration.
  bool trim_edge_runs = false;
  GfpAggregate gfp_aggregate = GfpAggregate::Mean;
};

/// Throws TooShort below one second of data. States that never occur get zeros.
FeatureVector extract_features(const Segmentation& seg, const FeatureOptions& opt = {});

/// One row per subject in the given order. Throws InconsistentStates when the
/// state labels differ between vectors and DuplicateSubject on repeated ids.
FeatureTable build_feature_table(const std::vector<std::string>& subject_ids,
                                 const std::vector<FeatureVector>& vectors,
                                 const std::vector<std::string>& class_labels,
                                 std::vector<std::string> class_order = {});

}  // namespace msaf
