#include <doctest.h>

#include <cmath>
#include <numbers>

#include "msaf/error.hpp"
#include "msaf/preprocess.hpp"
#include "test_util.hpp"

using namespace msaf;

namespace {

double db(double gain) { return 20.0 * std::log10(gain); }

Recording sine_recording(double freq, double fs, std::size_t n) {
  Recording rec = msaf::testing::noise_recording(n, fs, 1);
  for (std::size_t c = 0; c < rec.n_channels(); ++c)
    for (std::size_t t = 0; t < n; ++t)
      rec.data(c, t) = (1.0 + 0.1 * static_cast<double>(c)) *
                       std::sin(2.0 * std::numbers::pi * freq * static_cast<double>(t) / fs + 0.3 * static_cast<double>(c));
  return rec;
}

// Amplitude of the `freq` component over [lo, hi) by least-squares projection.
double tone_amplitude(std::span<const double> x, double freq, double fs, std::size_t lo, std::size_t hi) {
  double s = 0, c = 0, ss = 0, cc = 0;
  for (std::size_t t = lo; t < hi; ++t) {
    const double ph = 2.0 * std::numbers::pi * freq * static_cast<double>(t) / fs;
    s += x[t] * std::sin(ph);
    c += x[t] * std::cos(ph);
    ss += std::sin(ph) * std::sin(ph);
    cc += std::cos(ph) * std::cos(ph);
  }
  return std::hypot(s / ss, c / cc);
}

}  // namespace

TEST_CASE("low-pass taps match a scipy.signal.firwin reference") {
  // firwin(101, 13.7, window='hamming', fs=200)
  const auto f = design_fir_lowpass(13.7, 6.6, 200.0);
  REQUIRE(f.taps.size() == 101);
  CHECK(f.taps[50] == doctest::Approx(0.13672529623808258).epsilon(1e-12));
  CHECK(f.taps[45] == doctest::Approx(0.051906908719668646).epsilon(1e-12));
  CHECK(f.taps[10] == doctest::Approx(-0.0013304164527863378).epsilon(1e-10));
  CHECK(f.taps[0] == doctest::Approx(0.00023075184421334814).epsilon(1e-10));
  CHECK(frequency_response(f, 0.0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("band-pass taps are symmetric and odd-length") {
  for (auto [lo, hi] : {std::pair{1.0, 30.0}, {4.0, 8.0}, {8.0, 13.0}, {13.0, 30.0}, {30.0, 45.0}}) {
    const auto f = design_fir_bandpass(lo, hi, 200.0);
    REQUIRE(f.taps.size() % 2 == 1);
    for (std::size_t i = 0; i < f.taps.size(); ++i) REQUIRE(f.taps[i] == f.taps[f.taps.size() - 1 - i]);
    CHECK(std::abs(db(frequency_response(f, 0.5 * (lo + hi)))) < 1.0);
    CHECK(frequency_response(f, 0.0) < 1e-3);
  }
}

TEST_CASE("theta band-pass passes 6 Hz and rejects 0.5 Hz and 30 Hz") {
  const auto f = design_fir_bandpass(4.0, 8.0, 200.0);
  CHECK(std::abs(db(frequency_response(f, 6.0))) <= 1.0);
  CHECK(db(frequency_response(f, 0.5)) <= -30.0);
  CHECK(db(frequency_response(f, 30.0)) <= -30.0);
}

TEST_CASE("invalid bands are rejected") {
  CHECK_THROWS_AS(design_fir_bandpass(8.0, 4.0, 200.0), Error);
  CHECK_THROWS_AS(design_fir_bandpass(0.0, 4.0, 200.0), Error);
  CHECK_THROWS_AS(design_fir_bandpass(4.0, 100.0, 200.0), Error);
  CHECK_THROWS_AS(design_fir_notch(50.0, 120.0, 200.0), Error);
}

TEST_CASE("notch removes the line frequency and keeps the rest") {
  const auto f = design_fir_notch(50.0, 4.0, 250.0);
  CHECK(db(frequency_response(f, 50.0)) < -30.0);
  CHECK(std::abs(db(frequency_response(f, 10.0))) < 0.5);
  CHECK(std::abs(db(frequency_response(f, 0.0))) < 1e-9);
}

TEST_CASE("filter_channel equals zero-padded direct convolution") {
  Rng rng(4);
  std::vector<double> x(57), h(9);
  for (auto& v : x) v = standard_normal(rng);
  for (auto& v : h) v = standard_normal(rng);
  const auto y = filter_channel(x, h);
  REQUIRE(y.size() == x.size());
  const int m = 4;
  for (int t = 0; t < 57; ++t) {
    double acc = 0.0;
    for (int n = 0; n < 9; ++n) {
      const int idx = t + m - n;
      if (idx >= 0 && idx < 57) acc += h[static_cast<std::size_t>(n)] * x[static_cast<std::size_t>(idx)];
    }
    CHECK(y[static_cast<std::size_t>(t)] == doctest::Approx(acc).epsilon(1e-12));
  }
}

TEST_CASE("band-pass keeps an in-band tone with no phase shift") {
  const auto rec = sine_recording(6.0, 200.0, 4000);
  const auto out = bandpass(rec, 4.0, 8.0);
  // away from the edges the tone survives sample by sample
  for (std::size_t t = 1000; t < 3000; t += 37) CHECK(out.data(0, t) == doctest::Approx(rec.data(0, t)).epsilon(0.05));
  const auto off = bandpass(sine_recording(30.0, 200.0, 4000), 4.0, 8.0);
  CHECK(tone_amplitude(off.data.row(0), 30.0, 200.0, 1000, 3000) < 0.03);
  CHECK(out.provenance.back().find("bandpass") != std::string::npos);
}

TEST_CASE("z-score and average reference post-conditions") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto rec = msaf::testing::noise_recording(500, 100.0, seed);
    for (std::size_t c = 0; c < rec.n_channels(); ++c)
      for (double& v : rec.data.row(c)) v = 3.0 * v + static_cast<double>(c) * 7.0 - 2.0;
    const auto z = zscore_channels(rec);
    for (std::size_t c = 0; c < z.n_channels(); ++c) {
      double mean = 0, sq = 0;
      for (double v : z.data.row(c)) mean += v;
      mean /= 500.0;
      for (double v : z.data.row(c)) sq += (v - mean) * (v - mean);
      CHECK(std::abs(mean) < 1e-9);
      CHECK(std::abs(sq / 500.0 - 1.0) < 1e-9);
    }
    const auto a = average_reference(rec);
    for (std::size_t t = 0; t < 500; ++t) {
      double s = 0;
      for (std::size_t c = 0; c < a.n_channels(); ++c) s += a.data(c, t);
      CHECK(std::abs(s) < 1e-9);
    }
  }
  auto flat = msaf::testing::noise_recording(100, 100.0, 1);
  for (double& v : flat.data.row(3)) v = 5.0;
  CHECK_THROWS_AS(zscore_channels(flat), Error);
}

TEST_CASE("laplacian cancels a spatially constant field") {
  auto rec = msaf::testing::noise_recording(20, 100.0, 2);
  for (std::size_t t = 0; t < 20; ++t)
    for (std::size_t c = 0; c < rec.n_channels(); ++c) rec.data(c, t) = static_cast<double>(t);
  const auto l = surface_laplacian(rec);
  for (double v : l.data.data()) CHECK(std::abs(v) < 1e-12);
}

TEST_CASE("crop and resample") {
  const auto rec = sine_recording(5.0, 200.0, 2000);
  const auto c = crop(rec, 1.0, 2.5);
  CHECK(c.n_samples() == 300);
  CHECK(c.data(2, 0) == rec.data(2, 200));
  CHECK_THROWS_AS(crop(rec, 3.0, 2.0), Error);
  CHECK_THROWS_AS(crop(rec, 20.0, 30.0), Error);

  const auto down = resample(rec, 100.0);
  CHECK(down.fs == 100.0);
  CHECK(down.n_samples() == 1000);
  CHECK(tone_amplitude(down.data.row(0), 5.0, 100.0, 100, 900) == doctest::Approx(1.0).epsilon(0.02));
  const auto up = resample(rec, 250.0);
  CHECK(up.n_samples() == 2500);
  CHECK(tone_amplitude(up.data.row(0), 5.0, 250.0, 250, 2250) == doctest::Approx(1.0).epsilon(0.02));
  const auto same = resample(rec, 200.0);
  CHECK(same.data.data()[123] == rec.data.data()[123]);
}
