#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "msaf/eeg_io.hpp"
#include "msaf/matrix.hpp"

namespace msaf {

struct GfpSeries {
  std::vector<double> values;
  double fs = 0.0;
};

/// k unit-norm, average-referenced topographies (one per row) with labels.
/// Rows are polarity-class representatives: m and -m denote the same state.
struct MicrostateMaps {
  Matrix maps;  // k x K
  std::vector<std::string> labels;
  std::vector<std::string> channels;
  double gev_total = 0.0;

  std::size_t k() const noexcept { return maps.rows(); }
  std::size_t n_channels() const noexcept { return maps.cols(); }
};

/// Per-sample state labels with the |spatial correlation| and GFP behind them.
struct Segmentation {
  std::vector<int> states;   // in [0, k) or -1 for unlabeled
  std::vector<double> corr;  // |corr(map_state, x_t)|
  GfpSeries gfp;
  double fs = 0.0;
  MicrostateMaps source_maps;

  std::size_t size() const noexcept { return states.size(); }
};

/// Population spatial standard deviation across channels at every sample.
GfpSeries gfp(const Recording& rec);

/// Strict local maxima of g, ascending. With min_distance_samples > 1, peaks are
/// kept greedily by descending height and any peak closer than the minimum
/// distance to a kept one is dropped.
std::vector<std::size_t> find_gfp_peaks(const GfpSeries& g, std::size_t min_distance_samples = 0);
std::vector<std::size_t> find_gfp_peaks_ms(const GfpSeries& g, double min_distance_ms);

/// Pearson correlation of two channel vectors.
double spatial_correlation(std::span<const double> a, std::span<const double> b);

/// Topographies at the given sample indices, one per row (n x K).
Matrix topographies_at(const Recording& rec, std::span<const std::size_t> samples);

struct KMeansOptions {
  std::size_t k = 4;
  std::size_t n_inits = 10;
  std::size_t max_iter = 300;
  double tol = 1e-6;
  std::uint64_t seed = 0;
};

/// GEV after each accepted iteration of one restart.
struct KMeansTrace {
  std::vector<double> gev;
};

/// Polarity-invariant modified k-means over rows of `samples` (n x K, average
/// referenced). Assignment maximizes squared correlation; each centroid is the
/// dominant eigenvector of its cluster scatter. Best restart by GEV.
/// When `traces` is non-null it receives one trace per restart.
MicrostateMaps modified_kmeans(const Matrix& samples, const KMeansOptions& opt,
                               std::vector<KMeansTrace>* traces = nullptr);

/// Assignment of every row of `samples` to the map with the largest squared
/// correlation; ties go to the lowest index.
std::vector<int> assign_polarity_invariant(const Matrix& samples, const Matrix& maps);

struct GevResult {
  double total = 0.0;
  std::vector<double> per_state;
};

/// GFP^2-weighted squared correlation between each sample and its assigned map,
/// over Σ GFP^2. `samples` holds one topography per row; label -1 contributes 0.
GevResult gev(const Matrix& samples, const Matrix& maps, std::span<const int> labels);
GevResult gev(const Recording& rec, const Segmentation& seg);

struct KSelection {
  std::size_t chosen_k = 0;
  std::vector<std::size_t> ks;
  std::vector<double> gev_curve;
};

/// Fits every k in `k_range` and picks the smallest k after which adding the next
/// candidate gains less than `min_gain` GEV (the last k when no gain is small).
KSelection select_k(const Matrix& samples, const std::vector<std::size_t>& k_range,
                    const KMeansOptions& base, double min_gain = 0.01);

/// Subject-level maps from the GFP peaks of one recording.
MicrostateMaps fit_subject_maps(const Recording& rec, const KMeansOptions& opt,
                                double min_peak_distance_ms = 0.0);

/// Second-level clustering over the concatenated maps of all subjects.
MicrostateMaps group_cluster(const std::vector<MicrostateMaps>& subject_maps, const KMeansOptions& opt);

/// Labels every sample with argmax |corr| over the maps (ties to lowest index).
/// Segments shorter than min_segment_ms are absorbed sample by sample into the
/// adjacent segment whose map correlates better at that sample.
Segmentation backfit(const Recording& rec, const MicrostateMaps& maps, double min_segment_ms = 0.0);

/// Matches maps to templates by the Hungarian algorithm on |corr| and returns the
/// maps reordered into template order, renamed, and sign-aligned to the templates.
MicrostateMaps label_maps(const MicrostateMaps& maps, const MicrostateMaps& templates);

/// Applies a manual map-index -> name assignment and orders states by name.
MicrostateMaps label_maps(const MicrostateMaps& maps, const std::map<std::size_t, std::string>& names);

/// Optimal assignment for a rows x cols score matrix (rows <= cols) maximizing the
/// total score; returns the column chosen for each row.
std::vector<std::size_t> hungarian_maximize(const Matrix& score);

std::string maps_to_json(const MicrostateMaps& maps);
MicrostateMaps maps_from_json(const std::string& text);
void save_maps(const MicrostateMaps& maps, const std::filesystem::path& path);
MicrostateMaps load_maps(const std::filesystem::path& path);

std::map<std::size_t, std::string> load_label_file(const std::filesystem::path& path);

std::string segmentation_to_json(const Segmentation& seg, const std::string& subject_id,
                                 const std::optional<std::string>& label);
struct SegmentationFile {
  std::string subject_id;
  std::optional<std::string> label;
  Segmentation seg;
};
SegmentationFile segmentation_from_json(const std::string& text);

/// Scalp map as standalone SVG: azimuthal equidistant projection, nose up, left
/// ear left, inverse-distance interpolation, red positive / blue negative.
std::string render_topography_svg(const Montage& montage, std::span<const double> values,
                                  const std::string& title);

}  // namespace msaf
