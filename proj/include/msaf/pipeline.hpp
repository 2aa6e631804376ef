#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "msaf/eeg_io.hpp"
#include "msaf/explain.hpp"
#include "msaf/features.hpp"
#include "msaf/microstates.hpp"
#include "msaf/models.hpp"
#include "msaf/synth.hpp"

namespace msaf {

/// One preprocessing step: name plus numeric parameters.
/// bandpass{low, high}, notch{f0, bw}, resample{fs}, crop{start, end},
/// zscore, average_reference, laplacian.
struct PreprocessStep {
  std::string name;
  std::vector<std::pair<std::string, double>> params;

  double param(const std::string& key) const;
};

struct MicrostateConfig {
  KMeansOptions kmeans;
  double min_peak_distance_ms = 0.0;
  double min_segment_ms = 0.0;
  std::string labeling = "template";  // template | file | none
  std::filesystem::path label_file;
};

struct ExplainConfig {
  ExplainMethod method = ExplainMethod::Auto;
  std::string split;  // all | train | test; required
  std::size_t background_cap = 100;
  std::size_t kernel_samples = 512;
};

struct PipelineConfig {
  std::filesystem::path input_dir;
  std::vector<std::string> montage;  // expected channel order; empty = taken from the first recording
  std::vector<PreprocessStep> preprocess;
  MicrostateConfig microstates;
  FeatureOptions features;
  ModelSpec model;
  std::optional<ParamGrid> grid;
  std::size_t cv_folds = 5;
  ExplainConfig explain;
  std::vector<std::string> stats_tests = {"sw", "kw", "dunn"};
  std::uint64_t seed = 0;
  std::filesystem::path out_dir = "out";
};

/// Default preprocessing: 0.5-40 Hz band-pass, z-score, average reference.
std::vector<PreprocessStep> default_preprocess();

/// Parses a JSON pipeline config; unknown keys are InvalidConfig. Relative
/// paths resolve against `base_dir`.
PipelineConfig parse_pipeline_config(const std::string& text, const std::filesystem::path& base_dir = {});
PipelineConfig load_pipeline_config(const std::filesystem::path& path);
std::string pipeline_config_to_json(const PipelineConfig& cfg);
std::vector<PreprocessStep> parse_preprocess_steps(const std::string& json_array_text);

/// FNV-1a 64 of the text, as 16 hex digits.
std::string fnv1a_hex(const std::string& text);

Recording preprocess_recording(const Recording& rec, const std::vector<PreprocessStep>& steps);

/// All recordings of a directory, checked against the montage and for a shared rate.
std::vector<Recording> load_recordings(const std::filesystem::path& dir, const std::vector<std::string>& montage = {});

/// Throws InvalidConfig/InvalidBand when a step cannot apply at rate fs.
void validate_steps(const std::vector<PreprocessStep>& steps, double fs);

std::vector<MicrostateMaps> fit_all_subject_maps(const std::vector<Recording>& recs, const MicrostateConfig& cfg,
                                                 std::uint64_t seed);
MicrostateMaps label_group_maps(const MicrostateMaps& group, const MicrostateConfig& cfg, const Montage& montage);
std::vector<Segmentation> backfit_all(const std::vector<Recording>& recs, const MicrostateMaps& maps,
                                      double min_segment_ms);
FeatureTable features_table(const std::vector<Recording>& recs, const std::vector<Segmentation>& segs,
                            const FeatureOptions& opt);
FeatureTable features_table(const std::vector<SegmentationFile>& segs, const FeatureOptions& opt);

struct TrainOutcome {
  ModelSpec spec;
  std::optional<GridResult> grid;
  CvReport cv;
  TrainedModel model;  // refit on every subject with the chosen spec
};

TrainOutcome train_and_evaluate(const FeatureTable& table, const ModelSpec& spec, const std::optional<ParamGrid>& grid,
                                std::size_t folds, std::uint64_t seed);

/// Explains the chosen split: `all` uses the final model over every subject;
/// `train` / `test` refit on the training part of CV fold 0 and explain that
/// part or the held-out part. The background is always training data.
ShapExplanation explain_split(const FeatureTable& table, const TrainOutcome& outcome, const ExplainConfig& cfg,
                              std::size_t folds, std::uint64_t seed);

/// Shapiro-Wilk per class, Kruskal-Wallis and Dunn per feature, as JSON.
std::string stats_report_json(const FeatureTable& table, const std::vector<std::string>& tests);

std::string grid_result_json(const GridResult& g);

struct PipelineSummary {
  double cv_accuracy = 0.0;
  double cv_accuracy_std = 0.0;
  double cv_macro_f1 = 0.0;
};

struct SegmentedCohort {
  std::vector<Recording> recs;  // preprocessed
  MicrostateMaps maps;          // labelled group maps
  std::vector<Segmentation> segs;
  FeatureTable table;
};

/// Preprocessing, subject and group maps, labelling, backfitting and features:
/// the in-memory part of run_pipeline before training.
SegmentedCohort segment_cohort(const std::vector<Recording>& raw, const PipelineConfig& cfg);

/// Runs every stage, writing artifacts under cfg.out_dir.
PipelineSummary run_pipeline(const PipelineConfig& cfg);

struct Band {
  std::string name;
  double low = 0.0;
  double high = 0.0;
};

std::vector<Band> default_bands();
Band parse_band(const std::string& text);

struct BandSweepRow {
  Band band;
  PipelineSummary summary;
};

/// Runs segmentation through cross-validation once per band with a shared seed.
/// Writes band_sweep.csv, band_sweep.json and band_sweep.svg.
std::vector<BandSweepRow> band_sweep(const PipelineConfig& cfg, const std::vector<Band>& bands);

/// Writes a synthetic cohort as recording pairs plus truth segmentations.
void write_cohort(const std::vector<SynthOutput>& cohort, const std::filesystem::path& dir);
CohortConfig parse_cohort_config(const std::string& text);

/// Error document for a failed stage.
std::string error_json(const std::string& stage, const std::exception& e);

}  // namespace msaf
