#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>
#include <string>
#include <vector>

#include "msaf/error.hpp"
#include "msaf/parallel.hpp"
#include "msaf/pipeline.hpp"
#include "msaf/random.hpp"
#include "msaf/stats.hpp"

namespace fs = std::filesystem;
using namespace msaf;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  unsigned threads = 0;
  std::string log_level = "warn";
};

int exit_code_of(ErrorCode code) {
  switch (category_of(code)) {
    case ErrorCategory::Config: return 2;
    case ErrorCategory::Data: return 3;
    case ErrorCategory::Numeric: return 4;
  }
  return 3;
}

std::vector<std::string> split_csv(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) out.push_back(item);
  return out;
}

fs::path require_out(const Globals& g, const std::string& verb) {
  if (g.out.empty()) throw Error(ErrorCode::InvalidConfig, verb + " needs --out");
  return g.out;
}

std::uint64_t seed_or(const Globals& g, std::uint64_t fallback) { return g.seed ? *g.seed : fallback; }

std::vector<std::filesystem::path> json_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorCode::InvalidConfig, "directory " + dir.string() + " not found");
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".json") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  if (out.empty()) throw Error(ErrorCode::InvalidConfig, "no JSON files in " + dir.string());
  return out;
}

KMeansOptions kmeans_options(std::size_t k, std::size_t n_inits, std::size_t max_iter, double tol, std::uint64_t seed) {
  KMeansOptions opt;
  opt.k = k;
  opt.n_inits = n_inits;
  opt.max_iter = max_iter;
  opt.tol = tol;
  opt.seed = seed;
  return opt;
}

// Keeps a single class column of an explanation.
ShapExplanation restrict_class(const ShapExplanation& e, const std::string& cls) {
  std::size_t c = e.class_names.size();
  for (std::size_t i = 0; i < e.class_names.size(); ++i)
    if (e.class_names[i] == cls) c = i;
  if (c == e.class_names.size()) throw Error(ErrorCode::InvalidConfig, "unknown class '" + cls + "'");
  ShapExplanation out = e;
  out.class_names = {cls};
  out.phi0 = {e.phi0[c]};
  for (auto& m : out.phi) {
    Matrix one(m.rows(), 1);
    for (std::size_t f = 0; f < m.rows(); ++f) one(f, 0) = m(f, c);
    m = std::move(one);
  }
  for (auto& row : out.scores) row = {row[c]};
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"msaf: EEG microstate analysis pipeline"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "JSON configuration file");
  app.add_option("--seed", g.seed, "master seed; overrides the config");
  app.add_option("--out", g.out, "output file or directory");
  app.add_option("--threads", g.threads, "worker threads (0 = hardware concurrency)");
  app.add_option("--log-level", g.log_level, "trace|debug|info|warn|error|off");

  std::string stage_name;
  std::function<void()> action;

  // preprocess
  auto* pre = app.add_subcommand("preprocess", "apply ordered preprocessing steps to recordings");
  std::string pre_input;
  pre->add_option("input", pre_input, "recording directory or file");
  pre->callback([&] {
    action = [&] {
      if (g.config.empty()) throw Error(ErrorCode::InvalidConfig, "preprocess needs --config with the step list");
      const auto text = read_text(g.config);
      const auto j = nlohmann::json::parse(text, nullptr, false);
      std::vector<PreprocessStep> steps;
      fs::path input = pre_input;
      fs::path out = g.out;
      if (j.is_array()) {
        steps = parse_preprocess_steps(text);
      } else {
        const auto cfg = load_pipeline_config(g.config);
        steps = cfg.preprocess;
        if (input.empty()) input = cfg.input_dir;
        if (out.empty()) out = cfg.out_dir;
      }
      if (input.empty()) throw Error(ErrorCode::InvalidConfig, "preprocess needs an input");
      if (out.empty()) throw Error(ErrorCode::InvalidConfig, "preprocess needs --out");
      std::vector<Recording> recs;
      if (fs::is_directory(input)) recs = load_recordings(input);
      else recs.push_back(load_recording(input));
      for (const auto& r : recs) validate_steps(steps, r.fs);
      fs::create_directories(out);
      std::vector<Recording> done(recs.size());
      parallel_for(recs.size(), [&](std::size_t i) { done[i] = preprocess_recording(recs[i], steps); });
      for (const auto& r : done) save_recording(r, out / r.subject_id);
    };
  });

  // synth
  auto* syn = app.add_subcommand("synth", "generate a synthetic labelled cohort");
  std::string syn_preset;
  std::size_t syn_n = 0;
  syn->add_option("--preset", syn_preset, "default|theta when no --config is given");
  syn->add_option("--n-per-class", syn_n, "subjects per class");
  syn->callback([&] {
    action = [&] {
      CohortConfig cfg;
      if (!g.config.empty()) cfg = parse_cohort_config(read_text(g.config));
      else if (syn_preset == "theta") cfg = theta_encoded_cohort(cfg.n_per_class, 0);
      else if (!syn_preset.empty() && syn_preset != "default")
        throw Error(ErrorCode::InvalidConfig, "unknown preset " + syn_preset);
      if (syn_n > 0) cfg.n_per_class = syn_n;
      cfg.seed = seed_or(g, cfg.seed);
      write_cohort(make_cohort(cfg), require_out(g, "synth"));
    };
  });

  // segment
  auto* seg = app.add_subcommand("segment", "fit subject-level maps at GFP peaks");
  std::string seg_input;
  std::size_t seg_k = 4, seg_inits = 10, seg_iter = 300;
  double seg_tol = 1e-6, seg_peak_ms = 0.0;
  seg->add_option("input", seg_input, "preprocessed recording directory")->required();
  seg->add_option("--k", seg_k, "number of maps");
  seg->add_option("--n-inits", seg_inits, "k-means restarts");
  seg->add_option("--max-iter", seg_iter, "iterations per restart");
  seg->add_option("--tol", seg_tol, "GEV convergence tolerance");
  seg->add_option("--min-peak-distance-ms", seg_peak_ms, "minimum GFP peak spacing");
  seg->callback([&] {
    action = [&] {
      const auto recs = load_recordings(seg_input);
      MicrostateConfig mc;
      mc.kmeans = kmeans_options(seg_k, seg_inits, seg_iter, seg_tol, 0);
      mc.min_peak_distance_ms = seg_peak_ms;
      const auto maps = fit_all_subject_maps(recs, mc, seed_or(g, 0));
      const fs::path out = require_out(g, "segment");
      fs::create_directories(out);
      for (std::size_t i = 0; i < recs.size(); ++i) save_maps(maps[i], out / (recs[i].subject_id + ".json"));
    };
  });

  // group-maps
  auto* grp = app.add_subcommand("group-maps", "cluster subject maps into group maps");
  std::string grp_input;
  std::size_t grp_k = 4, grp_inits = 10, grp_iter = 300;
  double grp_tol = 1e-6;
  grp->add_option("input", grp_input, "directory of subject map files")->required();
  grp->add_option("--k", grp_k, "number of group maps");
  grp->add_option("--n-inits", grp_inits, "k-means restarts");
  grp->add_option("--max-iter", grp_iter, "iterations per restart");
  grp->add_option("--tol", grp_tol, "GEV convergence tolerance");
  grp->callback([&] {
    action = [&] {
      std::vector<MicrostateMaps> subject;
      for (const auto& p : json_files(grp_input)) subject.push_back(load_maps(p));
      const auto maps = group_cluster(subject, kmeans_options(grp_k, grp_inits, grp_iter, grp_tol, seed_or(g, 0)));
      save_maps(maps, require_out(g, "group-maps"));
    };
  });

  // label
  auto* lab = app.add_subcommand("label", "name maps by template matching or a label file");
  std::string lab_maps, lab_file, lab_templates;
  lab->add_option("maps", lab_maps, "maps JSON")->required();
  lab->add_option("--label-file", lab_file, "JSON {\"index\": \"name\"}");
  lab->add_option("--templates", lab_templates, "maps JSON used as templates (default: built-in A/B/C/F)");
  lab->callback([&] {
    action = [&] {
      const auto maps = load_maps(lab_maps);
      MicrostateMaps out;
      if (!lab_file.empty()) out = label_maps(maps, load_label_file(lab_file));
      else if (!lab_templates.empty()) out = label_maps(maps, load_maps(lab_templates));
      else out = label_maps(maps, canonical_templates(standard_1020_montage(maps.channels)));
      save_maps(out, require_out(g, "label"));
    };
  });

  // backfit
  auto* bf = app.add_subcommand("backfit", "label every sample with the best-matching map");
  std::string bf_input, bf_maps;
  double bf_min_ms = 0.0;
  bf->add_option("input", bf_input, "preprocessed recording directory")->required();
  bf->add_option("--maps", bf_maps, "group maps JSON")->required();
  bf->add_option("--min-segment-ms", bf_min_ms, "shortest segment kept");
  bf->callback([&] {
    action = [&] {
      const auto recs = load_recordings(bf_input);
      const auto maps = load_maps(bf_maps);
      const auto segs = backfit_all(recs, maps, bf_min_ms);
      const fs::path out = require_out(g, "backfit");
      fs::create_directories(out);
      for (std::size_t i = 0; i < recs.size(); ++i)
        write_text_atomic(out / (recs[i].subject_id + ".json"),
                          segmentation_to_json(segs[i], recs[i].subject_id, recs[i].label));
    };
  });

  // features
  auto* fea = app.add_subcommand("features", "extract per-subject microstate features");
  std::string fea_input, fea_gfp = "mean";
  bool fea_trim = false;
  fea->add_option("input", fea_input, "segmentation directory")->required();
  fea->add_flag("--trim-edge-runs", fea_trim, "exclude the first and last run from run statistics");
  fea->add_option("--gfp", fea_gfp, "mean|median");
  fea->callback([&] {
    action = [&] {
      FeatureOptions opt;
      opt.trim_edge_runs = fea_trim;
      if (fea_gfp == "median") opt.gfp_aggregate = GfpAggregate::Median;
      else if (fea_gfp != "mean") throw Error(ErrorCode::InvalidConfig, "--gfp must be mean or median");
      std::vector<SegmentationFile> segs;
      for (const auto& p : json_files(fea_input)) segs.push_back(segmentation_from_json(read_text(p)));
      save_feature_table(features_table(segs, opt), require_out(g, "features"));
    };
  });

  // train
  auto* tr = app.add_subcommand("train", "cross-validate and fit a classifier");
  std::string tr_model = "svm", tr_features, tr_grid, tr_eval;
  std::size_t tr_cv = 5;
  std::vector<std::string> tr_params;
  bool tr_balanced = false;
  tr->add_option("--model", tr_model, "svm|rf|gbt");
  tr->add_option("--features", tr_features, "features CSV")->required();
  tr->add_option("--grid", tr_grid, "grid JSON file or 'default'");
  tr->add_option("--cv", tr_cv, "folds");
  tr->add_option("--param", tr_params, "name=value hyperparameter overrides");
  tr->add_option("--eval", tr_eval, "where to write the CV report (default: next to the model)");
  tr->add_flag("--balanced", tr_balanced, "inverse-frequency class weights");
  tr->callback([&] {
    action = [&] {
      const auto table = load_feature_table(tr_features);
      ModelSpec spec;
      spec.kind = model_kind_from_string(tr_model);
      spec.svm.balanced = spec.forest.balanced = spec.boost.balanced = tr_balanced;
      for (const auto& p : tr_params) {
        const auto eq = p.find('=');
        if (eq == std::string::npos) throw Error(ErrorCode::InvalidConfig, "--param expects name=value");
        double value = 0.0;
        try {
          value = std::stod(p.substr(eq + 1));
        } catch (const std::exception&) {
          throw Error(ErrorCode::InvalidConfig, "--param " + p + " has a non-numeric value");
        }
        set_param(spec, p.substr(0, eq), value);
      }
      std::optional<ParamGrid> grid;
      if (tr_grid == "default") grid = default_grid(spec.kind);
      else if (!tr_grid.empty()) grid = grid_from_json(read_text(tr_grid));
      const auto outcome = train_and_evaluate(table, spec, grid, tr_cv, seed_or(g, 0));
      const fs::path out = require_out(g, "train");
      if (out.has_parent_path()) fs::create_directories(out.parent_path());
      write_text_atomic(out, model_to_json(outcome.model, table.class_names, table.feature_names));
      auto report = nlohmann::json::parse(cv_report_to_json(outcome.cv, table.class_names));
      report["model"] = to_string(outcome.spec.kind);
      if (outcome.grid) report["grid"] = nlohmann::json::parse(grid_result_json(*outcome.grid));
      fs::path eval_path = tr_eval.empty() ? fs::path(out).replace_extension(".eval.json") : fs::path(tr_eval);
      write_text_atomic(eval_path, report.dump(2) + "\n");
      std::cout << "cv accuracy " << format_double(outcome.cv.accuracy.mean) << " +- "
                << format_double(outcome.cv.accuracy.std) << "\n"
                << eval_report_table(outcome.cv.pooled, table.class_names);
    };
  });

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "score a trained model on a feature table");
  std::string ev_model, ev_features;
  ev->add_option("model", ev_model, "model JSON")->required();
  ev->add_option("features", ev_features, "features CSV")->required();
  ev->callback([&] {
    action = [&] {
      const auto loaded = model_from_json(read_text(ev_model));
      const auto table = load_feature_table(ev_features, loaded.class_names);
      if (!loaded.feature_names.empty() && loaded.feature_names != table.feature_names)
        throw Error(ErrorCode::DimensionMismatch, "feature columns differ from the model's");
      const auto report = evaluate(table.labels, predict(loaded.model, table.values), loaded.class_names.size());
      if (!g.out.empty()) write_text_atomic(g.out, eval_report_to_json(report, loaded.class_names));
      std::cout << eval_report_table(report, loaded.class_names);
    };
  });

  // explain
  auto* ex = app.add_subcommand("explain", "SHAP values for a trained model");
  std::string ex_model, ex_features, ex_method = "auto", ex_split, ex_class;
  std::size_t ex_bg = 100, ex_kernel = 512, ex_cv = 5;
  ex->add_option("model", ex_model, "model JSON")->required();
  ex->add_option("features", ex_features, "features CSV")->required();
  ex->add_option("--method", ex_method, "auto|exact|kernel|tree");
  ex->add_option("--split", ex_split, "all|train|test (train/test use CV fold 0 of --cv)")->required();
  ex->add_option("--class", ex_class, "keep only this class");
  ex->add_option("--background-cap", ex_bg, "maximum background rows");
  ex->add_option("--kernel-samples", ex_kernel, "Kernel SHAP coalition budget");
  ex->add_option("--cv", ex_cv, "folds used to define the train/test split");
  ex->callback([&] {
    action = [&] {
      const auto loaded = model_from_json(read_text(ex_model));
      const auto table = load_feature_table(ex_features, loaded.class_names);
      if (!loaded.feature_names.empty() && loaded.feature_names != table.feature_names)
        throw Error(ErrorCode::DimensionMismatch, "feature columns differ from the model's");
      if (ex_split != "all" && ex_split != "train" && ex_split != "test")
        throw Error(ErrorCode::InvalidConfig, "--split must be all, train or test");
      const std::uint64_t seed = seed_or(g, 0);
      ExplainOptions opt;
      opt.method = explain_method_from_string(ex_method);
      opt.background_cap = ex_bg;
      opt.kernel.n_samples = ex_kernel;
      opt.seed = derive_seed(seed, 5);
      opt.kernel.seed = derive_seed(opt.seed, 1);
      std::vector<std::size_t> bg_rows, rows;
      if (ex_split == "all") {
        for (std::size_t i = 0; i < table.n_subjects(); ++i) rows.push_back(i);
        bg_rows = rows;
      } else {
        const auto fold = stratified_folds(table.labels, ex_cv, derive_seed(seed, 4));
        for (std::size_t i = 0; i < fold.size(); ++i) {
          if (fold[i] != 0) bg_rows.push_back(i);
          if ((fold[i] == 0) == (ex_split == "test")) rows.push_back(i);
        }
      }
      auto e = explain_model(loaded.model, table.values.select_rows(bg_rows), table.values.select_rows(rows), opt);
      e.split = ex_split;
      e.background = ex_split == "all" ? "all subjects" : "training part of fold 0";
      e.feature_names = table.feature_names;
      e.class_names = loaded.class_names;
      for (auto i : rows) e.instance_ids.push_back(table.subject_ids[i]);
      if (!ex_class.empty()) e = restrict_class(e, ex_class);
      write_text_atomic(require_out(g, "explain"), explanation_to_json(e));
    };
  });

  // explain-rank
  auto* rk = app.add_subcommand("explain-rank", "global mean |SHAP| ranking per class");
  std::string rk_input;
  rk->add_option("shap", rk_input, "SHAP JSON")->required();
  rk->callback([&] {
    action = [&] {
      const auto e = explanation_from_json(read_text(rk_input));
      const fs::path out = require_out(g, "explain-rank");
      write_text_atomic(out, ranking_csv(e));
      for (std::size_t c = 0; c < e.class_names.size(); ++c) {
        fs::path svg = out;
        svg.replace_filename(out.stem().string() + "_" + e.class_names[c] + ".svg");
        write_text_atomic(svg, ranking_svg(global_ranking(e, c), "SHAP ranking: " + e.class_names[c]));
      }
    };
  });

  // stats
  auto* st = app.add_subcommand("stats", "Shapiro-Wilk, Kruskal-Wallis and Dunn tests per feature");
  std::string st_input, st_tests = "sw,kw,dunn";
  st->add_option("features", st_input, "features CSV")->required();
  st->add_option("--tests", st_tests, "comma-separated subset of sw,kw,dunn");
  st->callback([&] {
    action = [&] {
      const auto tests = split_csv(st_tests);
      for (const auto& t : tests)
        if (t != "sw" && t != "kw" && t != "dunn") throw Error(ErrorCode::InvalidConfig, "unknown test " + t);
      write_text_atomic(require_out(g, "stats"), stats_report_json(load_feature_table(st_input), tests));
    };
  });

  // topo
  auto* tp = app.add_subcommand("topo", "render one SVG scalp map per microstate");
  std::string tp_input;
  tp->add_option("maps", tp_input, "maps JSON")->required();
  tp->callback([&] {
    action = [&] {
      const auto maps = load_maps(tp_input);
      const auto montage = standard_1020_montage(maps.channels);
      const fs::path out = require_out(g, "topo");
      fs::create_directories(out);
      for (std::size_t s = 0; s < maps.k(); ++s)
        write_text_atomic(out / ("map_" + maps.labels[s] + ".svg"),
                          render_topography_svg(montage, maps.maps.row(s), maps.labels[s]));
    };
  });

  // band-sweep
  auto* bs = app.add_subcommand("band-sweep", "cross-validated accuracy per frequency band");
  std::string bs_bands = "delta,theta,alpha,beta";
  bs->add_option("--bands", bs_bands, "names (delta,theta,alpha,beta,gamma) or name:lo-hi, comma separated");
  bs->callback([&] {
    action = [&] {
      if (g.config.empty()) throw Error(ErrorCode::InvalidConfig, "band-sweep needs --config");
      auto cfg = load_pipeline_config(g.config);
      if (g.seed) cfg.seed = *g.seed;
      if (!g.out.empty()) cfg.out_dir = g.out;
      std::vector<Band> bands;
      for (const auto& b : split_csv(bs_bands)) bands.push_back(parse_band(b));
      for (const auto& r : band_sweep(cfg, bands))
        std::cout << r.band.name << " " << format_double(r.summary.cv_accuracy) << "\n";
    };
  });

  // run
  auto* run = app.add_subcommand("run", "full pipeline from recordings to statistics");
  run->callback([&] {
    action = [&] {
      if (g.config.empty()) throw Error(ErrorCode::InvalidConfig, "run needs --config");
      auto cfg = load_pipeline_config(g.config);
      if (g.seed) cfg.seed = *g.seed;
      if (!g.out.empty()) cfg.out_dir = g.out;
      const auto s = run_pipeline(cfg);
      std::cout << "cv accuracy " << format_double(s.cv_accuracy) << " +- " << format_double(s.cv_accuracy_std)
                << ", macro-F1 " << format_double(s.cv_macro_f1) << "\n";
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return e.get_exit_code() == 0 ? app.exit(e) : (app.exit(e), 2);
  }

  for (auto* sub : app.get_subcommands()) stage_name = sub->get_name();
  try {
    spdlog::set_default_logger(spdlog::stderr_color_mt("msaf"));
    spdlog::set_level(spdlog::level::from_str(g.log_level));
    set_thread_count(g.threads > 0 ? g.threads : std::max(1u, std::thread::hardware_concurrency()));
    action();
  } catch (const Error& e) {
    const auto doc = error_json(stage_name, e);
    std::cerr << doc;
    if (stage_name == "run" && !g.config.empty()) {
      try {
        auto cfg = load_pipeline_config(g.config);
        const fs::path out = g.out.empty() ? cfg.out_dir : fs::path(g.out);
        fs::create_directories(out);
        write_text_atomic(out / "error.json", doc);
      } catch (const std::exception&) {
      }
    }
    return exit_code_of(e.code());
  } catch (const std::exception& e) {
    std::cerr << error_json(stage_name, e);
    return 3;
  }
  return 0;
}
