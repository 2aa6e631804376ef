#include <doctest.h>

#include <json.hpp>

#include "msaf/error.hpp"
#include "msaf/pipeline.hpp"
#include "test_util.hpp"

using namespace msaf;
using msaf::testing::TempDir;
namespace fs = std::filesystem;

namespace {

void small_cohort(const fs::path& dir, std::size_t n_per_class, std::uint64_t seed) {
  CohortConfig cfg;
  cfg.n_per_class = n_per_class;
  cfg.base.duration = 12.0;
  cfg.seed = seed;
  write_cohort(make_cohort(cfg), dir);
}

}  // namespace

TEST_CASE("config parsing is strict and fills defaults") {
  const auto cfg = parse_pipeline_config(R"({"input_dir": "in", "explain": {"split": "test"}})", "/base");
  CHECK(cfg.input_dir == fs::path("/base/in"));
  CHECK(cfg.preprocess.size() == 3);
  CHECK(cfg.preprocess[0].name == "bandpass");
  CHECK(cfg.preprocess[0].param("low") == 0.5);
  CHECK(cfg.preprocess[0].param("high") == 40.0);
  CHECK(cfg.preprocess[1].name == "zscore");
  CHECK(cfg.preprocess[2].name == "average_reference");
  CHECK(cfg.microstates.kmeans.k == 4);
  CHECK(cfg.cv_folds == 5);
  CHECK(cfg.explain.split == "test");
  CHECK(cfg.model.kind == ModelKind::Svm);

  CHECK_THROWS_WITH_AS(parse_pipeline_config(R"({"inptu_dir": "x"})"), doctest::Contains("InvalidConfig"), Error);
  CHECK_THROWS_AS(parse_pipeline_config(R"({"microstates": {"k": 4, "kk": 1}})"), Error);
  CHECK_THROWS_AS(parse_pipeline_config(R"({"preprocess": [{"step": "bandpass", "low": 1}]})"), Error);
  CHECK_THROWS_AS(parse_pipeline_config(R"({"preprocess": [{"step": "wavelet"}]})"), Error);
  CHECK_THROWS_AS(parse_pipeline_config(R"({"microstates": {"k": 0}})"), Error);
  CHECK_THROWS_AS(parse_pipeline_config(R"({"stats": ["ttest"]})"), Error);
  CHECK_THROWS_WITH_AS(parse_pipeline_config("{not json"), doctest::Contains("ParseError"), Error);

  const auto grid = parse_pipeline_config(R"({"model": {"kind": "rf", "grid": "default", "params": {"n_estimators": 7}}})");
  CHECK(grid.model.forest.n_estimators == 7);
  REQUIRE(grid.grid.has_value());
  CHECK(grid.grid->size() == 3);

  // the canonical dump parses back to the same canonical dump
  const auto text = pipeline_config_to_json(grid);
  CHECK(pipeline_config_to_json(parse_pipeline_config(text)) == text);
}

TEST_CASE("preprocess steps are validated against the sampling rate") {
  const auto steps = parse_preprocess_steps(R"([{"step": "bandpass", "low": 4, "high": 8}, {"step": "resample", "fs": 20},
                                               {"step": "bandpass", "low": 1, "high": 12}])");
  CHECK_THROWS_WITH_AS(validate_steps(steps, 200.0), doctest::Contains("InvalidBand"), Error);
  CHECK_NOTHROW(validate_steps(default_preprocess(), 200.0));
  CHECK_THROWS_AS(validate_steps(default_preprocess(), 50.0), Error);
}

TEST_CASE("bands and hashing") {
  CHECK(parse_band("theta").low == 4.0);
  CHECK(parse_band("theta").high == 8.0);
  const auto custom = parse_band("slow:0.5-2");
  CHECK(custom.name == "slow");
  CHECK(custom.low == 0.5);
  CHECK(parse_band("3-7").name == "3-7");
  CHECK_THROWS_AS(parse_band("wide"), Error);
  CHECK(default_bands().size() == 4);
  // FNV-1a 64 test vectors
  CHECK(fnv1a_hex("") == "cbf29ce484222325");
  CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
}

TEST_CASE("cohort config parsing") {
  const auto cfg = parse_cohort_config(R"({"n_per_class": 3, "snr": 5, "seed": 9, "duration": 4,
      "profiles": [{"label": "X", "transition_weight": [1, 1, 1, 1], "mean_dwell_ms": [90, 90, 90, 90]},
                   {"label": "Y", "transition_weight": [1, 2, 1, 1], "mean_dwell_ms": [90, 90, 90, 90]}]})");
  CHECK(cfg.n_per_class == 3);
  CHECK(cfg.base.snr == 5.0);
  CHECK(cfg.profiles.size() == 2);
  CHECK(std::isinf(parse_cohort_config(R"({"snr": "inf"})").base.snr));
  CHECK(parse_cohort_config(R"({"preset": "theta"})").base.carrier_hz == 6.0);
  CHECK_THROWS_AS(parse_cohort_config(R"({"n": 3})"), Error);
}

TEST_CASE("full pipeline writes every artifact") {
  TempDir dir;
  small_cohort(dir / "cohort", 5, 4);
  PipelineConfig cfg;
  cfg.input_dir = dir / "cohort";
  cfg.preprocess = default_preprocess();
  cfg.microstates.kmeans.n_inits = 3;
  cfg.explain.split = "test";
  cfg.explain.kernel_samples = 128;
  cfg.explain.background_cap = 10;
  cfg.out_dir = dir / "out";
  cfg.seed = 3;
  const auto summary = run_pipeline(cfg);
  CHECK(summary.cv_accuracy >= 0.0);
  for (const char* name : {"maps.json", "features.csv", "model.json", "eval.json", "shap.json", "ranking.csv",
                           "stats.json", "manifest.json"})
    CHECK(fs::exists(dir / "out" / name));
  CHECK(fs::exists(dir / "out" / "segmentations" / "NC_000.json"));
  CHECK(fs::exists(dir / "out" / "topo" / "map_A.svg"));
  CHECK_FALSE(fs::exists(dir / "out.partial"));

  const auto table = load_feature_table(dir / "out" / "features.csv");
  CHECK(table.n_subjects() == 15);
  CHECK(table.n_features() == 21);
  const auto shap = explanation_from_json(read_text(dir / "out" / "shap.json"));
  CHECK(shap.split == "test");
  CHECK(shap.instance_ids.size() == 3);  // fold 0 of 5 holds one subject per class

  const auto manifest = nlohmann::json::parse(read_text(dir / "out" / "manifest.json"));
  CHECK(manifest["seed"] == 3);
  CHECK(manifest["config_hash"].get<std::string>().size() == 16);
  const auto stats = nlohmann::json::parse(read_text(dir / "out" / "stats.json"));
  CHECK(stats["features"].size() == 21);
  CHECK(stats["features"][0].contains("kruskal_wallis"));

  // a second run with the same seed reproduces the numerical artifacts byte for byte
  cfg.out_dir = dir / "again";
  run_pipeline(cfg);
  for (const char* name : {"features.csv", "eval.json", "shap.json", "model.json", "stats.json", "manifest.json"})
    CHECK(read_text(dir / "out" / name) == read_text(dir / "again" / name));
}

TEST_CASE("pipeline failures") {
  TempDir dir;
  PipelineConfig cfg;
  cfg.preprocess = default_preprocess();
  cfg.input_dir = dir / "missing";
  cfg.explain.split = "all";
  cfg.out_dir = dir / "out";
  CHECK_THROWS_WITH_AS(run_pipeline(cfg), doctest::Contains("[load]"), Error);

  small_cohort(dir / "cohort", 2, 1);
  cfg.input_dir = dir / "cohort";
  cfg.explain.split = "";
  CHECK_THROWS_WITH_AS(run_pipeline(cfg), doctest::Contains("split"), Error);

  // a montage that does not match the recordings fails before any work
  cfg.explain.split = "all";
  cfg.montage = {"Fp1", "Fp2"};
  CHECK_THROWS_WITH_AS(run_pipeline(cfg), doctest::Contains("MontageMismatch"), Error);
  CHECK_FALSE(fs::exists(dir / "out.partial"));

  // a stage failure keeps the partial artifacts
  cfg.montage.clear();
  cfg.cv_folds = 5;  // two subjects per class cannot fill five folds
  CHECK_THROWS_WITH_AS(run_pipeline(cfg), doctest::Contains("ClassTooSmall"), Error);
  CHECK(fs::exists(dir / "out.partial" / "features.csv"));

  const auto doc = nlohmann::json::parse(error_json("run", Error(ErrorCode::ClassTooSmall, "[train] too few")));
  CHECK(doc["error"] == "ClassTooSmall");
  CHECK(doc["category"] == "data");
  CHECK(doc["stage"] == "run/train");
}

TEST_CASE("band sweep writes one row per band") {
  TempDir dir;
  small_cohort(dir / "cohort", 5, 2);
  PipelineConfig cfg;
  cfg.input_dir = dir / "cohort";
  cfg.preprocess = default_preprocess();
  cfg.microstates.kmeans.n_inits = 2;
  cfg.out_dir = dir / "sweep";
  const auto rows = band_sweep(cfg, {parse_band("alpha")});
  CHECK(rows.size() == 1);
  CHECK(fs::exists(dir / "sweep" / "band_sweep.svg"));
  const auto csv = read_text(dir / "sweep" / "band_sweep.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);
  CHECK_THROWS_AS(band_sweep(cfg, {Band{"bad", 50.0, 120.0}}), Error);
}
