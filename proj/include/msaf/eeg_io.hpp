#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "msaf/matrix.hpp"

namespace msaf {

using Vec3 = std::array<double, 3>;

/// Ordered channel names with unit-sphere electrode positions.
/// Head frame: +x toward the right ear, +y toward the nose, +z toward the vertex.
class Montage {
 public:
  Montage() = default;
  Montage(std::vector<std::string> names, std::vector<Vec3> positions);

  std::size_t size() const noexcept { return names_.size(); }
  const std::vector<std::string>& names() const noexcept { return names_; }
  const std::vector<Vec3>& positions() const noexcept { return positions_; }
  bool has_positions() const noexcept { return !positions_.empty(); }

  /// Index of a channel, case-insensitive; nullopt when absent.
  std::optional<std::size_t> index_of(const std::string& name) const;

  bool operator==(const Montage&) const = default;

 private:
  std::vector<std::string> names_;
  std::vector<Vec3> positions_;
};

/// Montage with positions from the built-in spherical 10-20 table (docs/montage.md).
/// Lookup is case-insensitive and accepts the old temporal names (T3/T4/T5/T6).
Montage standard_1020_montage(const std::vector<std::string>& names);

/// Names known to standard_1020_montage, in table order.
std::vector<std::string> known_1020_channels();

/// The 19-channel 10-20 set used for clinical resting-state EEG.
std::vector<std::string> standard_19_channels();

/// Channels x samples potentials (microvolts) plus acquisition metadata.
struct Recording {
  Montage montage;
  double fs = 0.0;
  Matrix data;  // K x T
  std::string subject_id;
  std::optional<std::string> label;
  std::vector<std::string> provenance;

  std::size_t n_channels() const noexcept { return data.rows(); }
  std::size_t n_samples() const noexcept { return data.cols(); }
  double duration() const noexcept { return static_cast<double>(n_samples()) / fs; }

  /// Throws ShapeMismatch / NonFiniteData / InvalidConfig when the invariants fail.
  void validate() const;
};

/// Reads `<stem>.eegb` and its `<stem>.json` sidecar. `path` may name either file
/// or the stem itself.
Recording load_recording(const std::filesystem::path& path);

/// Writes `<stem>.eegb` and `<stem>.json`; deterministic byte output.
void save_recording(const Recording& rec, const std::filesystem::path& path);

/// All recordings (*.eegb) in a directory, sorted by file name.
std::vector<std::filesystem::path> list_recordings(const std::filesystem::path& dir);

/// Subjects x features table with integer class labels and a class-name map.
struct FeatureTable {
  std::vector<std::string> subject_ids;
  std::vector<int> labels;
  std::vector<std::string> class_names;
  std::vector<std::string> feature_names;
  Matrix values;  // subjects x features

  std::size_t n_subjects() const noexcept { return values.rows(); }
  std::size_t n_features() const noexcept { return values.cols(); }
  std::size_t n_classes() const noexcept { return class_names.size(); }

  /// Index of a class name, or -1.
  int class_index(const std::string& name) const;
};

/// Default class order: NC, MCI, DEM when every name is one of those, otherwise
/// sorted unique names.
std::vector<std::string> default_class_order(const std::vector<std::string>& names);

void save_feature_table(const FeatureTable& table, const std::filesystem::path& path);
FeatureTable load_feature_table(const std::filesystem::path& path,
                                const std::vector<std::string>& class_order = {});

/// Shortest round-trip decimal text for a double.
std::string format_double(double v);

/// Writes text to `path` through a `.partial` file that is renamed on success.
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

std::string read_text(const std::filesystem::path& path);

}  // namespace msaf
