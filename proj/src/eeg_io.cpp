#include "msaf/eeg_io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include <json.hpp>

#include "msaf/error.hpp"

namespace msaf {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'E', 'E', 'G', 'B', '0', '0', '0', '1'};

struct SphericalEntry {
  const char* name;
  double theta;  // signed inclination from the vertex, degrees (negative = left)
  double phi;    // azimuth, degrees
};

// Idealized spherical 10-20 positions (BESA convention).
constexpr SphericalEntry kTable1020[] = {
    {"Fp1", -90, -72}, {"Fpz", 90, 90},  {"Fp2", 90, 72},  {"F7", -90, -36}, {"F3", -60, -51},
    {"Fz", 45, 90},    {"F4", 60, 51},   {"F8", 90, 36},   {"T7", -90, 0},   {"C3", -45, 0},
    {"Cz", 0, 0},      {"C4", 45, 0},    {"T8", 90, 0},    {"P7", -90, 36},  {"P3", -60, 51},
    {"Pz", 45, -90},   {"P4", 60, -51},  {"P8", 90, -36},  {"O1", -90, 72},  {"Oz", 90, -90},
    {"O2", 90, -72},   {"A1", -120, 0},  {"A2", 120, 0},
};

const std::map<std::string, std::string>& aliases() {
  static const std::map<std::string, std::string> a = {
      {"t3", "T7"}, {"t4", "T8"}, {"t5", "P7"}, {"t6", "P8"}};
  return a;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::optional<Vec3> lookup_1020(const std::string& name) {
  std::string key = lower(name);
  if (auto it = aliases().find(key); it != aliases().end()) key = lower(it->second);
  for (const auto& e : kTable1020) {
    if (lower(e.name) == key) {
      const double t = e.theta * std::numbers::pi / 180.0;
      const double p = e.phi * std::numbers::pi / 180.0;
      Vec3 v{std::sin(t) * std::cos(p), std::sin(t) * std::sin(p), std::cos(t)};
      // exact zeros where the trig table leaves 1e-17 residue
      for (auto& c : v)
        if (std::abs(c) < 1e-15) c = 0.0;
      return v;
    }
  }
  return std::nullopt;
}

fs::path stem_of(const fs::path& path) {
  fs::path p = path;
  if (p.extension() == ".eegb" || p.extension() == ".json") p.replace_extension();
  return p;
}

fs::path with_ext(const fs::path& stem, const char* ext) {
  fs::path p = stem;
  p += ext;
  return p;
}

double parse_double(const std::string& s, const std::string& context) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  while (first < last && *first == ' ') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) {
    // from_chars rejects "inf"/"nan" spellings produced by other tools
    throw Error(ErrorCode::ParseError, "cannot parse number '" + s + "' in " + context);
  }
  return v;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    if (!cell.empty() && cell.back() == '\r') cell.pop_back();
    out.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

Montage::Montage(std::vector<std::string> names, std::vector<Vec3> positions)
    : names_(std::move(names)), positions_(std::move(positions)) {
  if (names_.size() < 2) throw Error(ErrorCode::InvalidConfig, "montage needs at least two channels");
  std::set<std::string> seen;
  for (const auto& n : names_) {
    if (n.empty()) throw Error(ErrorCode::InvalidConfig, "empty channel name");
    if (!seen.insert(lower(n)).second)
      throw Error(ErrorCode::InvalidConfig, "duplicate channel name " + n);
  }
  if (!positions_.empty()) {
    if (positions_.size() != names_.size())
      throw Error(ErrorCode::InvalidConfig, "positions/names length mismatch");
    for (const auto& p : positions_) {
      const double norm = std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
      if (std::abs(norm - 1.0) > 1e-9)
        throw Error(ErrorCode::InvalidConfig, "electrode position not on the unit sphere");
    }
  }
}

std::optional<std::size_t> Montage::index_of(const std::string& name) const {
  const std::string key = lower(name);
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (lower(names_[i]) == key) return i;
  return std::nullopt;
}

Montage standard_1020_montage(const std::vector<std::string>& names) {
  std::vector<Vec3> pos;
  pos.reserve(names.size());
  for (const auto& n : names) {
    auto p = lookup_1020(n);
    if (!p) throw Error(ErrorCode::UnknownChannel, "not a 10-20 label: " + n);
    pos.push_back(*p);
  }
  return Montage(names, std::move(pos));
}

std::vector<std::string> known_1020_channels() {
  std::vector<std::string> out;
  for (const auto& e : kTable1020) out.emplace_back(e.name);
  return out;
}

std::vector<std::string> standard_19_channels() {
  return {"Fp1", "Fp2", "F7", "F3", "Fz", "F4", "F8", "T7", "C3", "Cz",
          "C4",  "T8",  "P7", "P3", "Pz", "P4", "P8", "O1", "O2"};
}

void Recording::validate() const {
  if (!(fs > 0.0) || !std::isfinite(fs)) throw Error(ErrorCode::InvalidConfig, "fs must be > 0");
  if (data.cols() < 1) throw Error(ErrorCode::ShapeMismatch, "recording has no samples");
  if (data.rows() < 2) throw Error(ErrorCode::InsufficientChannels, "recording needs K >= 2");
  if (data.rows() != montage.size())
    throw Error(ErrorCode::ShapeMismatch, "channel count differs from montage");
  for (double v : data.data())
    if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteData, "NaN/Inf in recording data");
}

Recording load_recording(const fs::path& path) {
  const fs::path stem = stem_of(path);
  const fs::path sidecar = with_ext(stem, ".json");
  const fs::path payload = with_ext(stem, ".eegb");
  if (!fs::exists(sidecar)) throw Error(ErrorCode::MissingSidecar, sidecar.string());

  json meta;
  try {
    meta = json::parse(read_text(sidecar));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, sidecar.string() + ": " + e.what());
  }

  Recording rec;
  std::vector<std::string> channels;
  std::size_t n_samples = 0;
  try {
    rec.subject_id = meta.at("subject_id").get<std::string>();
    rec.fs = meta.at("fs").get<double>();
    channels = meta.at("channels").get<std::vector<std::string>>();
    n_samples = meta.at("n_samples").get<std::size_t>();
    if (meta.contains("label") && !meta["label"].is_null()) rec.label = meta["label"].get<std::string>();
    if (meta.contains("provenance"))
      rec.provenance = meta["provenance"].get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, sidecar.string() + ": " + e.what());
  }

  bool all_known = std::all_of(channels.begin(), channels.end(),
                               [](const std::string& n) { return lookup_1020(n).has_value(); });
  rec.montage = all_known ? standard_1020_montage(channels) : Montage(channels, {});

  std::ifstream in(payload, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + payload.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
    throw Error(ErrorCode::BadMagic, payload.string());

  const std::size_t k = channels.size();
  const std::size_t expected = k * n_samples;
  const std::size_t body = bytes.size() - sizeof(kMagic);
  if (body % 4 != 0 || body / 4 != expected)
    throw Error(ErrorCode::ShapeMismatch, "declared " + std::to_string(k) + "x" +
                                              std::to_string(n_samples) + " but payload holds " +
                                              std::to_string(body / 4) + " floats");

  std::vector<double> values(expected);
  const char* src = bytes.data() + sizeof(kMagic);
  for (std::size_t i = 0; i < expected; ++i) {
    std::uint32_t raw;
    std::memcpy(&raw, src + 4 * i, 4);
    if constexpr (std::endian::native == std::endian::big) raw = __builtin_bswap32(raw);
    float f;
    std::memcpy(&f, &raw, 4);
    if (!std::isfinite(f)) throw Error(ErrorCode::NonFiniteData, payload.string());
    values[i] = static_cast<double>(f);
  }
  rec.data = Matrix(k, n_samples, std::move(values));
  rec.validate();
  return rec;
}

void save_recording(const Recording& rec, const fs::path& path) {
  const fs::path stem = stem_of(path);
  json meta;
  meta["subject_id"] = rec.subject_id;
  meta["fs"] = rec.fs;
  meta["channels"] = rec.montage.names();
  meta["n_samples"] = rec.n_samples();
  if (rec.label) meta["label"] = *rec.label;
  meta["provenance"] = rec.provenance;

  std::string payload(kMagic, sizeof(kMagic));
  payload.resize(sizeof(kMagic) + 4 * rec.data.data().size());
  char* dst = payload.data() + sizeof(kMagic);
  for (double v : rec.data.data()) {
    float f = static_cast<float>(v);
    std::uint32_t raw;
    std::memcpy(&raw, &f, 4);
    if constexpr (std::endian::native == std::endian::big) raw = __builtin_bswap32(raw);
    std::memcpy(dst, &raw, 4);
    dst += 4;
  }
  write_text_atomic(with_ext(stem, ".eegb"), payload);
  write_text_atomic(with_ext(stem, ".json"), meta.dump(2) + "\n");
}

std::vector<fs::path> list_recordings(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorCode::IoFailure, "not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".eegb") out.push_back(entry.path());
  std::sort(out.begin(), out.end());
  return out;
}

int FeatureTable::class_index(const std::string& name) const {
  for (std::size_t i = 0; i < class_names.size(); ++i)
    if (class_names[i] == name) return static_cast<int>(i);
  return -1;
}

std::vector<std::string> default_class_order(const std::vector<std::string>& names) {
  static const std::vector<std::string> clinical = {"NC", "MCI", "DEM"};
  std::set<std::string> unique(names.begin(), names.end());
  bool all_clinical = std::all_of(unique.begin(), unique.end(), [](const std::string& n) {
    return std::find(clinical.begin(), clinical.end(), n) != clinical.end();
  });
  if (all_clinical) {
    std::vector<std::string> out;
    for (const auto& c : clinical)
      if (unique.count(c)) out.push_back(c);
    return out;
  }
  return {unique.begin(), unique.end()};
}

void save_feature_table(const FeatureTable& table, const fs::path& path) {
  std::string out = "subject_id,label";
  for (const auto& f : table.feature_names) out += "," + f;
  out += "\n";
  for (std::size_t i = 0; i < table.n_subjects(); ++i) {
    out += table.subject_ids[i] + "," + table.class_names.at(static_cast<std::size_t>(table.labels[i]));
    for (double v : table.values.row(i)) out += "," + format_double(v);
    out += "\n";
  }
  write_text_atomic(path, out);
}

FeatureTable load_feature_table(const fs::path& path, const std::vector<std::string>& class_order) {
  std::istringstream in(read_text(path));
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::ParseError, "empty feature table");
  auto header = split_csv_line(line);
  if (header.size() < 3 || header[0] != "subject_id" || header[1] != "label")
    throw Error(ErrorCode::ParseError, "feature table header must start with subject_id,label");

  FeatureTable t;
  t.feature_names.assign(header.begin() + 2, header.end());
  std::vector<std::string> label_names;
  std::vector<double> values;
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    auto cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw Error(ErrorCode::ShapeMismatch, "row width differs from header: " + line);
    if (!seen.insert(cells[0]).second)
      throw Error(ErrorCode::DuplicateSubject, "duplicate subject_id " + cells[0]);
    t.subject_ids.push_back(cells[0]);
    label_names.push_back(cells[1]);
    for (std::size_t c = 2; c < cells.size(); ++c) {
      double v = parse_double(cells[c], path.string());
      if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteData, "non-finite feature value");
      values.push_back(v);
    }
  }
  t.class_names = class_order.empty() ? default_class_order(label_names) : class_order;
  for (const auto& name : label_names) {
    int idx = t.class_index(name);
    if (idx < 0) throw Error(ErrorCode::InvalidConfig, "label '" + name + "' not in class order");
    t.labels.push_back(idx);
  }
  t.values = Matrix(t.subject_ids.size(), t.feature_names.size(), std::move(values));
  return t;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

void write_text_atomic(const fs::path& path, const std::string& text) {
  fs::path partial = path;
  partial += ".partial";
  {
    std::ofstream out(partial, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw Error(ErrorCode::IoFailure, "write failed for " + path.string());
  }
  std::error_code ec;
  fs::rename(partial, path, ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot rename onto " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace msaf
