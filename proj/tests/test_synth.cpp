#include <doctest.h>

#include <cmath>

#include "msaf/error.hpp"
#include "msaf/features.hpp"
#include "msaf/synth.hpp"
#include "test_util.hpp"

using namespace msaf;

TEST_CASE("canonical templates") {
  const auto montage = standard_1020_montage(standard_19_channels());
  const auto t = canonical_templates(montage);
  REQUIRE(t.k() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    double sum = 0.0;
    for (double v : t.maps.row(i)) sum += v;
    CHECK(std::abs(sum) < 1e-12);
    CHECK(squared_norm(t.maps.row(i)) == doctest::Approx(1.0).epsilon(1e-12));
    for (std::size_t j = 0; j < i; ++j) CHECK(std::abs(spatial_correlation(t.maps.row(i), t.maps.row(j))) <= 0.7);
  }
  // B is A mirrored left-right
  const std::vector<std::pair<std::string, std::string>> pairs{{"Fp1", "Fp2"}, {"F7", "F8"}, {"F3", "F4"},
                                                               {"T7", "T8"},   {"C3", "C4"}, {"P7", "P8"},
                                                               {"P3", "P4"},   {"O1", "O2"}};
  std::vector<std::size_t> mirror(19);
  for (std::size_t c = 0; c < 19; ++c) mirror[c] = c;
  for (const auto& [l, r] : pairs) {
    mirror[*montage.index_of(l)] = *montage.index_of(r);
    mirror[*montage.index_of(r)] = *montage.index_of(l);
  }
  for (std::size_t c = 0; c < 19; ++c) CHECK(std::abs(t.maps(0, mirror[c]) - t.maps(1, c)) <= 1e-9);
  // A is positive toward the right frontal scalp
  CHECK(t.maps(0, *montage.index_of("F8")) > 0.0);
  CHECK(t.maps(0, *montage.index_of("O1")) < 0.0);
  CHECK(label_maps(t, t).labels == t.labels);
  CHECK_THROWS_AS(canonical_templates(Montage({"x", "y"}, {})), Error);
}

TEST_CASE("generation is deterministic and average-referenced") {
  SynthConfig cfg;
  cfg.duration = 3.0;
  cfg.snr = 4.0;
  cfg.seed = 21;
  const auto a = generate(cfg);
  const auto b = generate(cfg);
  CHECK(a.rec.data.data().size() == 600 * 19);
  bool same = true;
  for (std::size_t i = 0; i < a.rec.data.data().size(); ++i) same = same && a.rec.data.data()[i] == b.rec.data.data()[i];
  CHECK(same);
  CHECK(a.truth.states == b.truth.states);
  for (std::size_t t = 0; t < 600; ++t) {
    double s = 0.0;
    for (std::size_t c = 0; c < 19; ++c) s += a.rec.data(c, t);
    CHECK(std::abs(s) < 1e-9);
  }
  cfg.seed = 22;
  CHECK(generate(cfg).truth.states != a.truth.states);
}

TEST_CASE("noise level follows the requested SNR") {
  SynthConfig clean;
  clean.duration = 20.0;
  clean.seed = 3;
  SynthConfig noisy = clean;
  noisy.snr = 2.0;
  const auto a = generate(clean), b = generate(noisy);
  double noise = 0.0;
  for (std::size_t i = 0; i < a.rec.data.data().size(); ++i) {
    const double d = b.rec.data.data()[i] - a.rec.data.data()[i];
    noise += d * d;
  }
  // per-sample noise vector norm is amplitude / snr (before the tiny mean-removal loss)
  const double rms = std::sqrt(noise / static_cast<double>(a.rec.n_samples()));
  CHECK(rms == doctest::Approx(30.0 / 2.0 * std::sqrt(18.0 / 19.0)).epsilon(0.02));
}

TEST_CASE("empirical dwell matches the configured mean") {
  SynthConfig cfg;
  cfg.duration = 600.0;
  cfg.mean_dwell_ms = {60.0, 100.0, 150.0, 80.0};
  cfg.seed = 5;
  const auto s = generate(cfg);
  const auto runs = state_runs(s.truth.states);
  std::vector<double> total(4, 0.0), count(4, 0.0);
  for (std::size_t r = 1; r + 1 < runs.size(); ++r) {
    total[static_cast<std::size_t>(runs[r].state)] += static_cast<double>(runs[r].length);
    count[static_cast<std::size_t>(runs[r].state)] += 1.0;
  }
  for (std::size_t k = 0; k < 4; ++k) {
    const double ms = total[k] / count[k] * 1000.0 / cfg.fs;
    CHECK(ms == doctest::Approx(cfg.mean_dwell_ms[k]).epsilon(0.05));
  }
}

TEST_CASE("config validation") {
  SynthConfig cfg;
  cfg.transition = Matrix(4, 4, 0.25);
  CHECK_THROWS_AS(generate(cfg), Error);  // non-zero diagonal
  cfg.transition = transition_from_weights({1, 1, 1, 1});
  for (std::size_t i = 0; i < 4; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < 4; ++j) s += cfg.transition(i, j);
    CHECK(std::abs(s - 1.0) <= 1e-12);
    CHECK(cfg.transition(i, i) == 0.0);
  }
  cfg.mean_dwell_ms = {1.0, 100.0, 100.0, 100.0};
  CHECK_THROWS_AS(generate(cfg), Error);
  cfg.mean_dwell_ms.clear();
  cfg.snr = 0.0;
  CHECK_THROWS_AS(generate(cfg), Error);
}

TEST_CASE("cohort classes move C and F occurrence in opposite directions") {
  CohortConfig cfg;
  cfg.n_per_class = 6;
  cfg.base.duration = 30.0;
  cfg.seed = 2;
  const auto cohort = make_cohort(cfg);
  REQUIRE(cohort.size() == 18);
  CHECK(cohort[0].rec.subject_id == "NC_000");
  double c_nc = 0, c_dem = 0, f_nc = 0, f_dem = 0;
  for (const auto& s : cohort) {
    const auto fv = extract_features(s.truth);
    if (s.rec.label == std::optional<std::string>("NC")) {
      c_nc += fv.states[2].occurrence;
      f_nc += fv.states[3].occurrence;
    } else if (s.rec.label == std::optional<std::string>("DEM")) {
      c_dem += fv.states[2].occurrence;
      f_dem += fv.states[3].occurrence;
    }
  }
  CHECK(c_dem < c_nc);
  CHECK(f_dem > f_nc);
  const auto again = make_cohort(cfg);
  CHECK(again[7].truth.states == cohort[7].truth.states);
}
