#include "msaf/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "msaf/error.hpp"
#include "msaf/parallel.hpp"
#include "msaf/preprocess.hpp"
#include "msaf/random.hpp"
#include "msaf/stats.hpp"

namespace msaf {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr const char* kVersion = "1.0.0";

// Seed streams per pipeline stage.
enum SeedStream : std::uint64_t { kSubjectMaps = 1, kGroupMaps = 2, kModel = 3, kFolds = 4, kExplain = 5 };

[[noreturn]] void bad_config(const std::string& msg) { throw Error(ErrorCode::InvalidConfig, msg); }

void check_keys(const ordered_json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) bad_config(where + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key())) bad_config("unknown key '" + it.key() + "' in " + where);
}

PreprocessStep parse_step(const ordered_json& j) {
  if (!j.is_object() || !j.contains("step")) bad_config("preprocess steps need a 'step' name");
  PreprocessStep s;
  s.name = j.at("step").get<std::string>();
  static const std::map<std::string, std::vector<std::string>> known = {
      {"bandpass", {"low", "high"}}, {"notch", {"f0", "bw"}}, {"resample", {"fs"}}, {"crop", {"start", "end"}},
      {"zscore", {}},                {"average_reference", {}}, {"laplacian", {}}};
  const auto it = known.find(s.name);
  if (it == known.end()) bad_config("unknown preprocess step '" + s.name + "'");
  std::set<std::string> allowed(it->second.begin(), it->second.end());
  allowed.insert("step");
  check_keys(j, allowed, "preprocess step " + s.name);
  for (const auto& key : it->second) {
    if (!j.contains(key)) bad_config("preprocess step " + s.name + " needs '" + key + "'");
    s.params.emplace_back(key, j.at(key).get<double>());
  }
  return s;
}

ordered_json step_json(const PreprocessStep& s) {
  ordered_json j;
  j["step"] = s.name;
  for (const auto& [k, v] : s.params) j[k] = v;
  return j;
}

ordered_json grid_json(const ParamGrid& g) {
  ordered_json j = ordered_json::object();
  for (const auto& [name, values] : g) j[name] = values;
  return j;
}

void write_dir_atomically(const fs::path& dir, const std::function<void(const fs::path&)>& fill) {
  fs::path partial = dir;
  partial += ".partial";
  fs::remove_all(partial);
  fs::create_directories(partial);
  fill(partial);
  fs::remove_all(dir);
  fs::rename(partial, dir);
}

std::string bar_chart_svg(const std::vector<std::pair<std::string, double>>& bars, const std::string& title,
                          const std::string& ylabel) {
  constexpr double kW = 80.0, kH = 220.0, kLeft = 50.0, kTop = 30.0;
  const double width = kLeft + kW * static_cast<double>(bars.size()) + 20.0;
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << kTop + kH + 40 << "\">\n";
  svg << "<text x=\"" << width / 2 << "\" y=\"18\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">"
      << title << "</text>\n";
  svg << "<line x1=\"" << kLeft << "\" y1=\"" << kTop + kH << "\" x2=\"" << width - 10 << "\" y2=\"" << kTop + kH
      << "\" stroke=\"black\"/>\n";
  svg << "<text x=\"12\" y=\"" << kTop + kH / 2 << "\" transform=\"rotate(-90 12 " << kTop + kH / 2
      << ")\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << ylabel << "</text>\n";
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const double h = kH * std::clamp(bars[i].second, 0.0, 1.0);
    const double x = kLeft + kW * static_cast<double>(i) + 10.0;
    svg << "<rect x=\"" << x << "\" y=\"" << kTop + kH - h << "\" width=\"" << kW - 20 << "\" height=\"" << h
        << "\" fill=\"#43a047\"/>\n";
    svg << "<text x=\"" << x + (kW - 20) / 2 << "\" y=\"" << kTop + kH + 16
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << bars[i].first << "</text>\n";
    svg << "<text x=\"" << x + (kW - 20) / 2 << "\" y=\"" << kTop + kH - h - 4
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">"
        << format_double(std::round(bars[i].second * 1000.0) / 1000.0) << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

std::string sanitize(std::string s) {
  for (char& c : s)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') c = '_';
  return s;
}

}  // namespace

double PreprocessStep::param(const std::string& key) const {
  for (const auto& [k, v] : params)
    if (k == key) return v;
  throw Error(ErrorCode::InvalidConfig, "step " + name + " lacks parameter " + key);
}

std::vector<PreprocessStep> default_preprocess() {
  return {{"bandpass", {{"low", 0.5}, {"high", 40.0}}}, {"zscore", {}}, {"average_reference", {}}};
}

std::vector<PreprocessStep> parse_preprocess_steps(const std::string& text) {
  try {
    const auto j = ordered_json::parse(text);
    if (!j.is_array()) bad_config("preprocess must be an array of steps");
    std::vector<PreprocessStep> steps;
    for (const auto& s : j) steps.push_back(parse_step(s));
    return steps;
  } catch (const ordered_json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("preprocess steps: ") + e.what());
  }
}

PipelineConfig parse_pipeline_config(const std::string& text, const fs::path& base_dir) {
  PipelineConfig cfg;
  try {
    const auto j = ordered_json::parse(text);
    check_keys(j, {"input_dir", "montage", "preprocess", "microstates", "features", "model", "cv_folds", "explain",
                   "stats", "seed", "out"},
               "pipeline config");
    auto resolve = [&](const std::string& p) {
      fs::path path(p);
      return path.is_relative() && !base_dir.empty() ? base_dir / path : path;
    };
    if (j.contains("input_dir")) cfg.input_dir = resolve(j["input_dir"].get<std::string>());
    if (j.contains("montage")) cfg.montage = j["montage"].get<std::vector<std::string>>();
    if (j.contains("preprocess")) {
      cfg.preprocess.clear();
      for (const auto& s : j["preprocess"]) cfg.preprocess.push_back(parse_step(s));
    } else {
      cfg.preprocess = default_preprocess();
    }
    if (j.contains("microstates")) {
      const auto& m = j["microstates"];
      check_keys(m, {"k", "n_inits", "max_iter", "tol", "min_peak_distance_ms", "min_segment_ms", "labeling", "label_file"},
                 "microstates");
      cfg.microstates.kmeans.k = m.value("k", cfg.microstates.kmeans.k);
      cfg.microstates.kmeans.n_inits = m.value("n_inits", cfg.microstates.kmeans.n_inits);
      cfg.microstates.kmeans.max_iter = m.value("max_iter", cfg.microstates.kmeans.max_iter);
      cfg.microstates.kmeans.tol = m.value("tol", cfg.microstates.kmeans.tol);
      cfg.microstates.min_peak_distance_ms = m.value("min_peak_distance_ms", 0.0);
      cfg.microstates.min_segment_ms = m.value("min_segment_ms", 0.0);
      cfg.microstates.labeling = m.value("labeling", std::string("template"));
      if (m.contains("label_file")) cfg.microstates.label_file = resolve(m["label_file"].get<std::string>());
    }
    if (j.contains("features")) {
      const auto& f = j["features"];
      check_keys(f, {"trim_edge_runs", "gfp"}, "features");
      cfg.features.trim_edge_runs = f.value("trim_edge_runs", false);
      const auto agg = f.value("gfp", std::string("mean"));
      if (agg == "mean") cfg.features.gfp_aggregate = GfpAggregate::Mean;
      else if (agg == "median") cfg.features.gfp_aggregate = GfpAggregate::Median;
      else bad_config("features.gfp must be mean or median");
    }
    if (j.contains("model")) {
      const auto& m = j["model"];
      check_keys(m, {"kind", "params", "grid", "balanced"}, "model");
      cfg.model.kind = model_kind_from_string(m.value("kind", std::string("svm")));
      if (m.contains("params")) {
        check_keys(m["params"], {"C", "gamma", "gamma_rbf", "tol", "n_estimators", "max_depth", "min_samples_split",
                                 "max_features", "n_rounds", "learning_rate", "lambda", "gamma_leaf",
                                 "min_child_weight", "patience"},
                   "model.params");
        for (auto it = m["params"].begin(); it != m["params"].end(); ++it)
          set_param(cfg.model, it.key(), it.value().get<double>());
      }
      const bool balanced = m.value("balanced", false);
      cfg.model.svm.balanced = cfg.model.forest.balanced = cfg.model.boost.balanced = balanced;
      if (m.contains("grid") && !m["grid"].is_null()) {
        if (m["grid"].is_string()) {
          if (m["grid"].get<std::string>() != "default") bad_config("model.grid must be an object or \"default\"");
          cfg.grid = default_grid(cfg.model.kind);
        } else {
          cfg.grid = grid_from_json(m["grid"].dump());
        }
      }
    }
    cfg.cv_folds = j.value("cv_folds", cfg.cv_folds);
    if (j.contains("explain")) {
      const auto& e = j["explain"];
      check_keys(e, {"method", "split", "background_cap", "kernel_samples"}, "explain");
      cfg.explain.method = explain_method_from_string(e.value("method", std::string("auto")));
      cfg.explain.split = e.value("split", std::string());
      cfg.explain.background_cap = e.value("background_cap", cfg.explain.background_cap);
      cfg.explain.kernel_samples = e.value("kernel_samples", cfg.explain.kernel_samples);
    }
    if (j.contains("stats")) cfg.stats_tests = j["stats"].get<std::vector<std::string>>();
    cfg.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("out")) cfg.out_dir = resolve(j["out"].get<std::string>());
  } catch (const ordered_json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("pipeline config: ") + e.what());
  }
  if (cfg.microstates.kmeans.k < 1) bad_config("microstates.k must be >= 1");
  if (cfg.cv_folds < 2) bad_config("cv_folds must be >= 2");
  const auto& lab = cfg.microstates.labeling;
  if (lab != "template" && lab != "file" && lab != "none") bad_config("labeling must be template, file or none");
  if (lab == "file" && cfg.microstates.label_file.empty()) bad_config("labeling=file needs label_file");
  for (const auto& t : cfg.stats_tests)
    if (t != "sw" && t != "kw" && t != "dunn") bad_config("unknown stats test '" + t + "'");
  return cfg;
}

PipelineConfig load_pipeline_config(const fs::path& path) {
  return parse_pipeline_config(read_text(path), path.parent_path());
}

std::string pipeline_config_to_json(const PipelineConfig& cfg) {
  ordered_json j;
  j["input_dir"] = cfg.input_dir.string();
  j["montage"] = cfg.montage;
  j["preprocess"] = ordered_json::array();
  for (const auto& s : cfg.preprocess) j["preprocess"].push_back(step_json(s));
  const auto& k = cfg.microstates.kmeans;
  j["microstates"] = {{"k", k.k},
                      {"n_inits", k.n_inits},
                      {"max_iter", k.max_iter},
                      {"tol", k.tol},
                      {"min_peak_distance_ms", cfg.microstates.min_peak_distance_ms},
                      {"min_segment_ms", cfg.microstates.min_segment_ms},
                      {"labeling", cfg.microstates.labeling},
                      {"label_file", cfg.microstates.label_file.string()}};
  j["features"] = {{"trim_edge_runs", cfg.features.trim_edge_runs},
                   {"gfp", cfg.features.gfp_aggregate == GfpAggregate::Mean ? "mean" : "median"}};
  ordered_json params;
  switch (cfg.model.kind) {
    case ModelKind::Svm: params = {{"C", cfg.model.svm.c}, {"gamma", cfg.model.svm.gamma_rbf}, {"tol", cfg.model.svm.tol}}; break;
    case ModelKind::Forest:
      params = {{"n_estimators", cfg.model.forest.n_estimators}, {"max_depth", cfg.model.forest.max_depth},
                {"min_samples_split", cfg.model.forest.min_samples_split}, {"max_features", cfg.model.forest.max_features}};
      break;
    case ModelKind::Boosted:
      params = {{"n_rounds", cfg.model.boost.n_rounds},   {"learning_rate", cfg.model.boost.learning_rate},
                {"max_depth", cfg.model.boost.max_depth}, {"lambda", cfg.model.boost.lambda},
                {"gamma_leaf", cfg.model.boost.gamma_leaf}, {"min_child_weight", cfg.model.boost.min_child_weight},
                {"patience", cfg.model.boost.patience}};
      break;
  }
  j["model"] = {{"kind", to_string(cfg.model.kind)},
                {"params", params},
                {"grid", cfg.grid ? grid_json(*cfg.grid) : ordered_json()},
                {"balanced", cfg.model.svm.balanced}};
  j["cv_folds"] = cfg.cv_folds;
  j["explain"] = {{"method", to_string(cfg.explain.method)},
                  {"split", cfg.explain.split},
                  {"background_cap", cfg.explain.background_cap},
                  {"kernel_samples", cfg.explain.kernel_samples}};
  j["stats"] = cfg.stats_tests;
  j["seed"] = cfg.seed;
  j["out"] = cfg.out_dir.string();
  return j.dump(2) + "\n";
}

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void validate_steps(const std::vector<PreprocessStep>& steps, double fs) {
  double rate = fs;
  for (const auto& s : steps) {
    if (s.name == "bandpass") {
      const double lo = s.param("low"), hi = s.param("high");
      if (!(lo > 0.0) || !(hi > lo) || !(hi < rate / 2.0))
        throw Error(ErrorCode::InvalidBand, "band " + format_double(lo) + "-" + format_double(hi) +
                                                " Hz is not inside (0, " + format_double(rate / 2.0) + ")");
    } else if (s.name == "notch") {
      const double f0 = s.param("f0"), bw = s.param("bw");
      if (!(bw > 0.0) || !(f0 - bw / 2.0 > 0.0) || !(f0 + bw / 2.0 < rate / 2.0))
        throw Error(ErrorCode::InvalidBand, "notch band does not fit below Nyquist");
    } else if (s.name == "resample") {
      if (!(s.param("fs") > 0.0)) throw Error(ErrorCode::InvalidRate, "resample rate must be positive");
      rate = s.param("fs");
    } else if (s.name == "crop") {
      if (!(s.param("end") > s.param("start")) || s.param("start") < 0.0)
        throw Error(ErrorCode::InvalidConfig, "crop needs 0 <= start < end");
    }
  }
}

Recording preprocess_recording(const Recording& rec, const std::vector<PreprocessStep>& steps) {
  validate_steps(steps, rec.fs);
  Recording out = rec;
  for (const auto& s : steps) {
    if (s.name == "bandpass") out = bandpass(out, s.param("low"), s.param("high"));
    else if (s.name == "notch") out = notch(out, s.param("f0"), s.param("bw"));
    else if (s.name == "resample") out = resample(out, s.param("fs"));
    else if (s.name == "crop") out = crop(out, s.param("start"), s.param("end"));
    else if (s.name == "zscore") out = zscore_channels(out);
    else if (s.name == "average_reference") out = average_reference(out);
    else if (s.name == "laplacian") out = surface_laplacian(out);
    else bad_config("unknown preprocess step '" + s.name + "'");
  }
  return out;
}

std::vector<Recording> load_recordings(const fs::path& dir, const std::vector<std::string>& montage) {
  if (!fs::is_directory(dir)) throw Error(ErrorCode::InvalidConfig, "input directory " + dir.string() + " not found");
  const auto paths = list_recordings(dir);
  if (paths.empty()) throw Error(ErrorCode::InvalidConfig, "no recordings in " + dir.string());
  std::vector<Recording> recs(paths.size());
  parallel_for(paths.size(), [&](std::size_t i) { recs[i] = load_recording(paths[i]); });
  const auto& expected = montage.empty() ? recs.front().montage.names() : montage;
  std::set<std::string> ids;
  for (const auto& r : recs) {
    if (r.montage.names() != expected)
      throw Error(ErrorCode::MontageMismatch, "recording " + r.subject_id + " uses a different channel order");
    if (r.fs != recs.front().fs)
      throw Error(ErrorCode::RateMismatch, "recording " + r.subject_id + " has a different sampling rate");
    if (!ids.insert(r.subject_id).second) throw Error(ErrorCode::DuplicateSubject, "subject " + r.subject_id + " repeats");
  }
  return recs;
}

std::vector<MicrostateMaps> fit_all_subject_maps(const std::vector<Recording>& recs, const MicrostateConfig& cfg,
                                                 std::uint64_t seed) {
  std::vector<MicrostateMaps> out(recs.size());
  parallel_for(recs.size(), [&](std::size_t i) {
    KMeansOptions opt = cfg.kmeans;
    opt.seed = derive_seed(seed, i);
    out[i] = fit_subject_maps(recs[i], opt, cfg.min_peak_distance_ms);
  });
  return out;
}

MicrostateMaps label_group_maps(const MicrostateMaps& group, const MicrostateConfig& cfg, const Montage& montage) {
  if (cfg.labeling == "none") return group;
  if (cfg.labeling == "file") return label_maps(group, load_label_file(cfg.label_file));
  const auto templates = canonical_templates(montage);
  if (templates.k() < group.k())
    throw Error(ErrorCode::InvalidConfig, "template labeling supports k <= 4; use a label file or labeling=none");
  return label_maps(group, templates);
}

std::vector<Segmentation> backfit_all(const std::vector<Recording>& recs, const MicrostateMaps& maps,
                                      double min_segment_ms) {
  std::vector<Segmentation> out(recs.size());
  parallel_for(recs.size(), [&](std::size_t i) { out[i] = backfit(recs[i], maps, min_segment_ms); });
  return out;
}

FeatureTable features_table(const std::vector<Recording>& recs, const std::vector<Segmentation>& segs,
                            const FeatureOptions& opt) {
  std::vector<FeatureVector> vectors(segs.size());
  parallel_for(segs.size(), [&](std::size_t i) { vectors[i] = extract_features(segs[i], opt); });
  std::vector<std::string> ids, labels;
  for (const auto& r : recs) {
    if (!r.label) throw Error(ErrorCode::InvalidConfig, "recording " + r.subject_id + " has no class label");
    ids.push_back(r.subject_id);
    labels.push_back(*r.label);
  }
  return build_feature_table(ids, vectors, labels);
}

FeatureTable features_table(const std::vector<SegmentationFile>& segs, const FeatureOptions& opt) {
  std::vector<FeatureVector> vectors(segs.size());
  parallel_for(segs.size(), [&](std::size_t i) { vectors[i] = extract_features(segs[i].seg, opt); });
  std::vector<std::string> ids, labels;
  for (const auto& s : segs) {
    if (!s.label) throw Error(ErrorCode::InvalidConfig, "segmentation " + s.subject_id + " has no class label");
    ids.push_back(s.subject_id);
    labels.push_back(*s.label);
  }
  return build_feature_table(ids, vectors, labels);
}

TrainOutcome train_and_evaluate(const FeatureTable& table, const ModelSpec& spec, const std::optional<ParamGrid>& grid,
                                std::size_t folds, std::uint64_t seed) {
  TrainOutcome out;
  out.spec = spec;
  const std::uint64_t model_seed = derive_seed(seed, kModel);
  out.spec.svm.seed = out.spec.forest.seed = out.spec.boost.seed = model_seed;
  const std::uint64_t fold_seed = derive_seed(seed, kFolds);
  if (grid) {
    out.grid = grid_search(out.spec, *grid, table.values, table.labels, table.n_classes(), folds, fold_seed);
    out.spec = out.grid->best_spec;
  }
  out.cv = stratified_kfold_cv(out.spec, table.values, table.labels, table.n_classes(), folds, fold_seed);
  out.model = train(out.spec, table.values, table.labels, table.n_classes());
  return out;
}

ShapExplanation explain_split(const FeatureTable& table, const TrainOutcome& outcome, const ExplainConfig& cfg,
                              std::size_t folds, std::uint64_t seed) {
  if (cfg.split != "all" && cfg.split != "train" && cfg.split != "test")
    throw Error(ErrorCode::InvalidConfig, "explain split must be all, train or test");
  ExplainOptions opt;
  opt.method = cfg.method;
  opt.background_cap = cfg.background_cap;
  opt.kernel.n_samples = cfg.kernel_samples;
  opt.seed = derive_seed(seed, kExplain);
  opt.kernel.seed = derive_seed(opt.seed, 1);

  ShapExplanation e;
  std::vector<std::size_t> instances;
  if (cfg.split == "all") {
    for (std::size_t i = 0; i < table.n_subjects(); ++i) instances.push_back(i);
    e = explain_model(outcome.model, table.values, table.values, opt);
    e.background = "all subjects";
  } else {
    const auto fold = stratified_folds(table.labels, folds, derive_seed(seed, kFolds));
    std::vector<std::size_t> train_rows, test_rows;
    for (std::size_t i = 0; i < fold.size(); ++i) (fold[i] == 0 ? test_rows : train_rows).push_back(i);
    const Matrix xtr = table.values.select_rows(train_rows);
    std::vector<int> ytr;
    for (auto i : train_rows) ytr.push_back(table.labels[i]);
    const auto model = train(outcome.spec, xtr, ytr, table.n_classes());
    instances = cfg.split == "train" ? train_rows : test_rows;
    e = explain_model(model, xtr, table.values.select_rows(instances), opt);
    e.background = "training part of fold 0";
  }
  e.split = cfg.split;
  e.feature_names = table.feature_names;
  e.class_names = table.class_names;
  for (auto i : instances) e.instance_ids.push_back(table.subject_ids[i]);
  return e;
}

std::string stats_report_json(const FeatureTable& table, const std::vector<std::string>& tests) {
  const bool sw = std::count(tests.begin(), tests.end(), "sw") > 0;
  const bool kw = std::count(tests.begin(), tests.end(), "kw") > 0;
  const bool dunn = std::count(tests.begin(), tests.end(), "dunn") > 0;
  std::vector<ordered_json> rows(table.n_features());
  parallel_for(table.n_features(), [&](std::size_t f) {
    std::vector<std::vector<double>> groups(table.n_classes());
    for (std::size_t i = 0; i < table.n_subjects(); ++i)
      groups[static_cast<std::size_t>(table.labels[i])].push_back(table.values(i, f));
    std::vector<std::vector<double>> present;
    std::vector<std::string> present_names;
    for (std::size_t c = 0; c < groups.size(); ++c) {
      if (groups[c].empty()) continue;
      present.push_back(groups[c]);
      present_names.push_back(table.class_names[c]);
    }
    ordered_json row;
    row["feature"] = table.feature_names[f];
    if (sw) {
      ordered_json list = ordered_json::array();
      for (std::size_t g = 0; g < present.size(); ++g) {
        try {
          const auto r = shapiro_wilk(present[g]);
          list.push_back({{"class", present_names[g]}, {"W", r.statistic}, {"p", r.p_value}, {"n", present[g].size()}});
        } catch (const Error& e) {
          list.push_back({{"class", present_names[g]}, {"error", to_string(e.code())}});
        }
      }
      row["shapiro_wilk"] = list;
    }
    if (kw) {
      try {
        const auto r = kruskal_wallis(present);
        row["kruskal_wallis"] = {{"H", r.statistic}, {"df", r.df}, {"p", r.p_value}, {"had_ties", r.had_ties}};
      } catch (const Error& e) {
        row["kruskal_wallis"] = {{"error", to_string(e.code())}};
      }
    }
    if (dunn) {
      try {
        ordered_json list = ordered_json::array();
        for (const auto& p : dunn_posthoc(present))
          list.push_back({{"a", present_names[p.group_a]},
                          {"b", present_names[p.group_b]},
                          {"z", p.z},
                          {"p", p.p_value},
                          {"p_adj", p.p_adjusted}});
        row["dunn_bonferroni"] = list;
      } catch (const Error& e) {
        row["dunn_bonferroni"] = {{"error", to_string(e.code())}};
      }
    }
    rows[f] = std::move(row);
  });
  ordered_json j;
  j["classes"] = table.class_names;
  j["n_subjects"] = table.n_subjects();
  j["features"] = rows;
  return j.dump(2) + "\n";
}

std::string grid_result_json(const GridResult& g) {
  ordered_json rows = ordered_json::array();
  for (const auto& r : g.rows) {
    ordered_json params = ordered_json::object();
    for (const auto& [k, v] : r.params) params[k] = v;
    rows.push_back({{"params", params},
                    {"accuracy_mean", r.accuracy.mean},
                    {"accuracy_std", r.accuracy.std},
                    {"macro_f1_mean", r.macro_f1.mean}});
  }
  ordered_json j{{"best", g.best}, {"rows", rows}};
  return j.dump(2) + "\n";
}

namespace {

template <typename F>
auto stage(const std::string& name, F&& body) {
  spdlog::info("stage {}", name);
  try {
    return body();
  } catch (Error& e) {
    throw Error(e.code(), "[" + name + "] " + std::string(e.what()).substr(to_string(e.code()).size() + 2));
  }
}

}  // namespace

SegmentedCohort segment_cohort(const std::vector<Recording>& raw, const PipelineConfig& cfg) {
  SegmentedCohort r;
  r.recs = stage("preprocess", [&] {
    std::vector<Recording> out(raw.size());
    parallel_for(raw.size(), [&](std::size_t i) { out[i] = preprocess_recording(raw[i], cfg.preprocess); });
    return out;
  });
  r.maps = stage("segment", [&] {
    const auto subject = fit_all_subject_maps(r.recs, cfg.microstates, derive_seed(cfg.seed, kSubjectMaps));
    KMeansOptions opt = cfg.microstates.kmeans;
    opt.seed = derive_seed(cfg.seed, kGroupMaps);
    auto group = group_cluster(subject, opt);
    return label_group_maps(group, cfg.microstates, r.recs.front().montage);
  });
  r.segs = stage("backfit", [&] { return backfit_all(r.recs, r.maps, cfg.microstates.min_segment_ms); });
  r.table = stage("features", [&] { return features_table(r.recs, r.segs, cfg.features); });
  return r;
}

namespace {

std::vector<Recording> load_and_validate(const PipelineConfig& cfg) {
  return stage("load", [&] {
    auto raw = load_recordings(cfg.input_dir, cfg.montage);
    validate_steps(cfg.preprocess, raw.front().fs);
    return raw;
  });
}

}  // namespace

PipelineSummary run_pipeline(const PipelineConfig& cfg) {
  if (cfg.explain.split.empty())
    throw Error(ErrorCode::InvalidConfig, "explain.split must be set to all, train or test");
  if (cfg.explain.split != "all" && cfg.explain.split != "train" && cfg.explain.split != "test")
    throw Error(ErrorCode::InvalidConfig, "explain.split must be all, train or test");
  const auto raw = load_and_validate(cfg);
  // Artifacts accumulate in <out>.partial and are promoted only when every stage succeeded.
  fs::path out = cfg.out_dir;
  out += ".partial";
  fs::remove_all(out);
  fs::create_directories(out);

  auto seg = segment_cohort(raw, cfg);
  save_maps(seg.maps, out / "maps.json");
  write_dir_atomically(out / "topo", [&](const fs::path& dir) {
    for (std::size_t s = 0; s < seg.maps.k(); ++s)
      write_text_atomic(dir / ("map_" + sanitize(seg.maps.labels[s]) + ".svg"),
                        render_topography_svg(seg.recs.front().montage, seg.maps.maps.row(s), seg.maps.labels[s]));
  });
  write_dir_atomically(out / "segmentations", [&](const fs::path& dir) {
    for (std::size_t i = 0; i < seg.recs.size(); ++i)
      write_text_atomic(dir / (seg.recs[i].subject_id + ".json"),
                        segmentation_to_json(seg.segs[i], seg.recs[i].subject_id, seg.recs[i].label));
  });
  save_feature_table(seg.table, out / "features.csv");

  const auto outcome = stage("train", [&] { return train_and_evaluate(seg.table, cfg.model, cfg.grid, cfg.cv_folds, cfg.seed); });
  write_text_atomic(out / "model.json", model_to_json(outcome.model, seg.table.class_names, seg.table.feature_names));
  {
    auto j = json::parse(cv_report_to_json(outcome.cv, seg.table.class_names));
    j["model"] = to_string(outcome.spec.kind);
    if (outcome.grid) j["grid"] = json::parse(grid_result_json(*outcome.grid));
    write_text_atomic(out / "eval.json", j.dump(2) + "\n");
  }

  const auto expl = stage("explain", [&] { return explain_split(seg.table, outcome, cfg.explain, cfg.cv_folds, cfg.seed); });
  write_text_atomic(out / "shap.json", explanation_to_json(expl));
  write_text_atomic(out / "ranking.csv", ranking_csv(expl));
  for (std::size_t c = 0; c < expl.class_names.size(); ++c)
    write_text_atomic(out / ("ranking_" + sanitize(expl.class_names[c]) + ".svg"),
                      ranking_svg(global_ranking(expl, c), "SHAP ranking: " + expl.class_names[c]));

  const auto stats = stage("stats", [&] { return stats_report_json(seg.table, cfg.stats_tests); });
  write_text_atomic(out / "stats.json", stats);

  ordered_json manifest;
  manifest["tool"] = "msaf";
  manifest["version"] = kVersion;
  manifest["seed"] = cfg.seed;
  // The output location is not part of the analysis, so it stays out of the hash.
  PipelineConfig hashed = cfg;
  hashed.out_dir.clear();
  manifest["config_hash"] = fnv1a_hex(pipeline_config_to_json(hashed));
  manifest["n_subjects"] = seg.table.n_subjects();
  manifest["artifacts"] = ordered_json::array();
  std::vector<fs::path> produced;
  for (const auto& entry : fs::directory_iterator(out)) produced.push_back(entry.path().filename());
  std::sort(produced.begin(), produced.end());
  for (const auto& name : produced) manifest["artifacts"].push_back(name.string());
  write_text_atomic(out / "manifest.json", manifest.dump(2) + "\n");
  produced.emplace_back("manifest.json");

  fs::create_directories(cfg.out_dir);
  fs::remove(cfg.out_dir / "error.json");
  for (const auto& name : produced) {
    fs::remove_all(cfg.out_dir / name);
    fs::rename(out / name, cfg.out_dir / name);
  }
  fs::remove_all(out);

  PipelineSummary s;
  s.cv_accuracy = outcome.cv.accuracy.mean;
  s.cv_accuracy_std = outcome.cv.accuracy.std;
  s.cv_macro_f1 = outcome.cv.macro_f1.mean;
  return s;
}

std::vector<Band> default_bands() {
  return {{"delta", 1.0, 4.0}, {"theta", 4.0, 8.0}, {"alpha", 8.0, 13.0}, {"beta", 13.0, 30.0}};
}

Band parse_band(const std::string& text) {
  for (const auto& b : default_bands())
    if (b.name == text) return b;
  if (text == "gamma") return {"gamma", 30.0, 45.0};
  const auto colon = text.find(':');
  const auto body = colon == std::string::npos ? text : text.substr(colon + 1);
  const auto dash = body.find('-');
  if (dash == std::string::npos) throw Error(ErrorCode::InvalidBand, "band '" + text + "' is neither a name nor lo-hi");
  Band b;
  try {
    b.low = std::stod(body.substr(0, dash));
    b.high = std::stod(body.substr(dash + 1));
  } catch (const std::exception&) {
    throw Error(ErrorCode::InvalidBand, "band '" + text + "' has non-numeric edges");
  }
  b.name = colon == std::string::npos ? body : text.substr(0, colon);
  return b;
}

std::vector<BandSweepRow> band_sweep(const PipelineConfig& cfg, const std::vector<Band>& bands) {
  if (bands.empty()) throw Error(ErrorCode::InvalidConfig, "band sweep needs at least one band");
  const auto raw = load_and_validate(cfg);
  std::vector<BandSweepRow> rows;
  for (const auto& band : bands) {
    PipelineConfig bc = cfg;
    bool replaced = false;
    for (auto& s : bc.preprocess) {
      if (s.name != "bandpass") continue;
      s.params = {{"low", band.low}, {"high", band.high}};
      replaced = true;
    }
    if (!replaced) bc.preprocess.insert(bc.preprocess.begin(), {"bandpass", {{"low", band.low}, {"high", band.high}}});
    validate_steps(bc.preprocess, raw.front().fs);
  }
  const fs::path out = cfg.out_dir;
  fs::create_directories(out);
  for (const auto& band : bands) {
    spdlog::info("band {} ({}-{} Hz)", band.name, band.low, band.high);
    PipelineConfig bc = cfg;
    bool replaced = false;
    for (auto& s : bc.preprocess) {
      if (s.name != "bandpass") continue;
      s.params = {{"low", band.low}, {"high", band.high}};
      replaced = true;
    }
    if (!replaced) bc.preprocess.insert(bc.preprocess.begin(), {"bandpass", {{"low", band.low}, {"high", band.high}}});
    auto seg = segment_cohort(raw, bc);
    const auto outcome = stage("train", [&] { return train_and_evaluate(seg.table, bc.model, bc.grid, bc.cv_folds, bc.seed); });
    const fs::path bdir = out / "bands" / sanitize(band.name);
    fs::create_directories(bdir);
    save_feature_table(seg.table, bdir / "features.csv");
    write_text_atomic(bdir / "eval.json", cv_report_to_json(outcome.cv, seg.table.class_names));
    BandSweepRow row;
    row.band = band;
    row.summary.cv_accuracy = outcome.cv.accuracy.mean;
    row.summary.cv_accuracy_std = outcome.cv.accuracy.std;
    row.summary.cv_macro_f1 = outcome.cv.macro_f1.mean;
    rows.push_back(row);
  }

  std::ostringstream csv;
  csv << "band,low_hz,high_hz,accuracy_mean,accuracy_std,macro_f1_mean\n";
  ordered_json j;
  j["bands"] = ordered_json::array();
  std::vector<std::pair<std::string, double>> bars;
  for (const auto& r : rows) {
    csv << r.band.name << ',' << format_double(r.band.low) << ',' << format_double(r.band.high) << ','
        << format_double(r.summary.cv_accuracy) << ',' << format_double(r.summary.cv_accuracy_std) << ','
        << format_double(r.summary.cv_macro_f1) << '\n';
    j["bands"].push_back({{"band", r.band.name},
                          {"low_hz", r.band.low},
                          {"high_hz", r.band.high},
                          {"accuracy_mean", r.summary.cv_accuracy},
                          {"accuracy_std", r.summary.cv_accuracy_std},
                          {"macro_f1_mean", r.summary.cv_macro_f1}});
    bars.emplace_back(r.band.name, r.summary.cv_accuracy);
  }
  std::vector<std::size_t> order(rows.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return rows[a].summary.cv_accuracy > rows[b].summary.cv_accuracy;
  });
  j["ranking"] = ordered_json::array();
  for (auto i : order) j["ranking"].push_back(rows[i].band.name);
  write_text_atomic(out / "band_sweep.csv", csv.str());
  write_text_atomic(out / "band_sweep.json", j.dump(2) + "\n");
  write_text_atomic(out / "band_sweep.svg", bar_chart_svg(bars, "CV accuracy by band", "accuracy"));
  return rows;
}

void write_cohort(const std::vector<SynthOutput>& cohort, const fs::path& dir) {
  fs::create_directories(dir / "truth");
  for (const auto& s : cohort) {
    save_recording(s.rec, dir / s.rec.subject_id);
    write_text_atomic(dir / "truth" / (s.rec.subject_id + ".json"),
                      segmentation_to_json(s.truth, s.rec.subject_id, s.rec.label));
  }
  if (!cohort.empty()) save_maps(cohort.front().maps, dir / "truth" / "templates.json");
}

CohortConfig parse_cohort_config(const std::string& text) {
  try {
    const auto j = ordered_json::parse(text);
    check_keys(j, {"preset", "n_per_class", "jitter", "seed", "fs", "duration", "snr", "amplitude_uv", "carrier_hz",
                   "envelope_depth", "segment_peak_depth", "channels", "profiles", "background"},
               "synth config");
    const auto preset = j.value("preset", std::string("default"));
    CohortConfig cfg;
    if (preset == "theta") cfg = theta_encoded_cohort(10, 0);
    else if (preset != "default") bad_config("synth preset must be default or theta");
    cfg.n_per_class = j.value("n_per_class", cfg.n_per_class);
    cfg.jitter = j.value("jitter", cfg.jitter);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.base.fs = j.value("fs", cfg.base.fs);
    cfg.base.duration = j.value("duration", cfg.base.duration);
    if (j.contains("snr")) {
      const auto& s = j["snr"];
      if (s.is_null() || (s.is_string() && s.get<std::string>() == "inf"))
        cfg.base.snr = std::numeric_limits<double>::infinity();
      else
        cfg.base.snr = s.get<double>();
    }
    cfg.base.amplitude_uv = j.value("amplitude_uv", cfg.base.amplitude_uv);
    cfg.base.carrier_hz = j.value("carrier_hz", cfg.base.carrier_hz);
    cfg.base.envelope_depth = j.value("envelope_depth", cfg.base.envelope_depth);
    cfg.base.segment_peak_depth = j.value("segment_peak_depth", cfg.base.segment_peak_depth);
    if (j.contains("channels")) cfg.base.channels = j["channels"].get<std::vector<std::string>>();
    if (j.contains("profiles")) {
      cfg.profiles.clear();
      for (const auto& p : j["profiles"]) {
        check_keys(p, {"label", "transition_weight", "mean_dwell_ms"}, "synth profile");
        cfg.profiles.push_back({p.at("label").get<std::string>(), p.at("transition_weight").get<std::vector<double>>(),
                                p.at("mean_dwell_ms").get<std::vector<double>>()});
      }
    }
    if (j.contains("background")) {
      cfg.base.background.clear();
      for (const auto& b : j["background"]) {
        check_keys(b, {"carrier_hz", "amplitude", "mean_dwell_ms"}, "synth background process");
        cfg.base.background.push_back({b.value("carrier_hz", 10.0), b.value("amplitude", 1.0),
                                       b.value("mean_dwell_ms", 150.0)});
      }
    }
    return cfg;
  } catch (const ordered_json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("synth config: ") + e.what());
  }
}

std::string error_json(const std::string& stage_name, const std::exception& e) {
  ordered_json j;
  if (const auto* err = dynamic_cast<const Error*>(&e)) {
    j["error"] = to_string(err->code());
    const auto cat = category_of(err->code());
    j["category"] = cat == ErrorCategory::Config ? "config" : cat == ErrorCategory::Data ? "data" : "numeric";
  } else {
    j["error"] = "Internal";
    j["category"] = "data";
  }
  // Pipeline stages tag their errors as "[stage] ..."; surface the innermost tag.
  std::string stage_path = stage_name;
  const std::string what = e.what();
  const auto open = what.find('[');
  const auto close = what.find(']', open == std::string::npos ? 0 : open);
  if (open != std::string::npos && close != std::string::npos && open < close)
    stage_path += "/" + what.substr(open + 1, close - open - 1);
  j["stage"] = stage_path;
  j["message"] = what;
  return j.dump() + "\n";
}

}  // namespace msaf
