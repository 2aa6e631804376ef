#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "msaf/error.hpp"
#include "msaf/features.hpp"
#include "msaf/synth.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace msaf;

namespace {

void check_identities(const FeatureVector& fv) {
  double cov = 0.0;
  for (const auto& m : fv.states) {
    cov += m.time_cov;
    CHECK(std::abs(m.occurrence * m.mean_dur / 1000.0 - m.time_cov) <= 1e-9);
  }
  CHECK(std::abs(cov - 1.0) <= 1e-9);
}

}  // namespace

TEST_CASE("state runs rebuild the sequence") {
  const std::vector<int> s{2, 2, 0, 1, 1, 1, 2};
  const auto runs = state_runs(s);
  CHECK(runs == std::vector<StateRun>{{2, 0, 2}, {0, 2, 1}, {1, 3, 3}, {2, 6, 1}});
  CHECK(state_runs(std::vector<int>{}).empty());
}

TEST_CASE("features match the brute-force oracle bit for bit") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto seg = oracle::random_segmentation(seed);
    const auto fv = extract_features(seg);
    const auto got = fv.values();
    const auto want = oracle::features(seg);
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i) REQUIRE(got[i] == want[i]);
    check_identities(fv);
  }
}

TEST_CASE("identities hold on synthetic ground truth") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    SynthConfig cfg;
    cfg.duration = 8.0;
    cfg.seed = seed;
    cfg.snr = 5.0;
    check_identities(extract_features(generate(cfg).truth));
  }
}

TEST_CASE("feature naming and layout") {
  const auto names = feature_names({"A", "B", "C", "F"});
  REQUIRE(names.size() == 21);
  CHECK(names[0] == "A_gev");
  CHECK(names[1] == "A_meancorr");
  CHECK(names[2] == "A_occurrence");
  CHECK(names[3] == "A_timecov");
  CHECK(names[4] == "A_meandur");
  CHECK(names[19] == "F_meandur");
  CHECK(names[20] == "gfp");
}

TEST_CASE("edge runs, absent states and the median GFP") {
  Segmentation seg;
  seg.fs = 4.0;
  seg.source_maps.labels = {"A", "B", "C"};
  seg.source_maps.maps = Matrix(3, 2);
  seg.states = {0, 0, 1, 1, 1, 0, 0, 1};
  seg.corr.assign(8, 0.5);
  seg.gfp.values = {1, 2, 3, 4, 5, 6, 7, 100};
  const auto full = extract_features(seg);
  CHECK(full.states[0].occurrence == 1.0);  // two runs over two seconds
  CHECK(full.states[0].mean_dur == 500.0);
  CHECK(full.states[2].time_cov == 0.0);
  CHECK(full.states[2].occurrence == 0.0);
  CHECK(full.gfp == 16.0);

  FeatureOptions opt;
  opt.trim_edge_runs = true;
  opt.gfp_aggregate = GfpAggregate::Median;
  const auto trimmed = extract_features(seg, opt);
  CHECK(trimmed.states[0].occurrence == 0.5);  // only the inner A run
  CHECK(trimmed.states[0].mean_dur == 500.0);
  CHECK(trimmed.states[1].occurrence == 0.5);
  CHECK(trimmed.states[1].mean_dur == 750.0);
  CHECK(trimmed.states[0].time_cov == 0.5);  // coverage never trims
  CHECK(trimmed.gfp == 4.5);

  seg.gfp.values.pop_back();
  CHECK_THROWS_AS(extract_features(seg), Error);
  seg.gfp.values.push_back(1.0);
  seg.states[3] = 7;
  CHECK_THROWS_AS(extract_features(seg), Error);
  seg.states = {0, 0, 0};
  seg.corr.resize(3);
  seg.gfp.values.resize(3);
  CHECK_THROWS_WITH_AS(extract_features(seg), doctest::Contains("TooShort"), Error);
}

TEST_CASE("feature table assembly") {
  const auto a = extract_features(oracle::random_segmentation(1));
  auto b = a;
  const auto t = build_feature_table({"s1", "s2"}, {a, b}, {"DEM", "NC"});
  CHECK(t.class_names == std::vector<std::string>{"NC", "DEM"});
  CHECK(t.labels == std::vector<int>{1, 0});
  CHECK(t.feature_names == feature_names(a.state_labels));
  CHECK_THROWS_AS(build_feature_table({"s1", "s1"}, {a, b}, {"NC", "NC"}), Error);
  b.state_labels[0] = "Z";
  CHECK_THROWS_AS(build_feature_table({"s1", "s2"}, {a, b}, {"NC", "NC"}), Error);
  CHECK_THROWS_AS(build_feature_table({"s1"}, {a}, {"X"}, {"NC", "DEM"}), Error);
}
