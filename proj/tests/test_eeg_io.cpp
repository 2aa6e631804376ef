#include <doctest.h>

#include <cmath>
#include <fstream>

#include "msaf/error.hpp"
#include "msaf/eeg_io.hpp"
#include "test_util.hpp"

using namespace msaf;
using msaf::testing::TempDir;

TEST_CASE("10-20 positions lie on the unit sphere with the expected orientation") {
  const auto m = standard_1020_montage(known_1020_channels());
  for (const auto& p : m.positions()) CHECK(std::abs(std::hypot(p[0], p[1], p[2]) - 1.0) < 1e-9);
  auto pos = [&](const std::string& n) { return m.positions()[*m.index_of(n)]; };
  CHECK(pos("Cz")[2] == doctest::Approx(1.0));
  CHECK(pos("Fpz")[1] > 0.9);
  CHECK(pos("Oz")[1] < -0.9);
  CHECK(pos("T8")[0] > 0.9);
  CHECK(pos("T7")[0] < -0.9);
  CHECK(pos("F3")[0] < 0.0);
  CHECK(pos("F4")[0] > 0.0);
  // old temporal names alias the new ones, lookup ignores case
  const auto alias = standard_1020_montage({"t3", "T4", "T5", "t6"});
  CHECK(alias.positions()[0] == pos("T7"));
  CHECK(alias.positions()[3] == pos("P8"));
  CHECK_THROWS_AS(standard_1020_montage({"Cz", "XX9"}), Error);
}

TEST_CASE("montage rejects duplicate names and bad positions") {
  CHECK_THROWS_AS(Montage({"A", "A"}, {}), Error);
  CHECK_THROWS_AS(Montage({"A", ""}, {}), Error);
  CHECK_THROWS_AS(Montage({"A", "B"}, {Vec3{0, 0, 1}, Vec3{0, 0, 2}}), Error);
  CHECK_THROWS_AS(Montage({"Cz"}, {Vec3{0, 0, 1}}), Error);  // K >= 2
  CHECK(standard_19_channels().size() == 19);
}

TEST_CASE("recordings round-trip through the binary format") {
  TempDir dir;
  auto rec = msaf::testing::noise_recording(321, 128.0, 3);
  rec.subject_id = "S01";
  rec.label = "MCI";
  rec.provenance = {"synth"};
  for (auto& v : rec.data.data()) v = static_cast<double>(static_cast<float>(v));
  save_recording(rec, dir / "S01");
  const auto back = load_recording(dir / "S01.eegb");
  CHECK(back.subject_id == "S01");
  CHECK(back.label == rec.label);
  CHECK(back.fs == 128.0);
  CHECK(back.montage == rec.montage);
  CHECK(back.provenance == rec.provenance);
  CHECK(back.data.data().size() == rec.data.data().size());
  bool same = true;
  for (std::size_t i = 0; i < rec.data.data().size(); ++i) same = same && back.data.data()[i] == rec.data.data()[i];
  CHECK(same);
  CHECK(list_recordings(dir.path()).size() == 1);

  // identical input gives identical bytes
  save_recording(rec, dir / "copy");
  CHECK(read_text(dir / "S01.eegb") == read_text(dir / "copy.eegb"));
}

TEST_CASE("loader reports missing sidecars, bad magic and shape errors") {
  TempDir dir;
  auto rec = msaf::testing::noise_recording(50, 100.0, 1);
  save_recording(rec, dir / "a");
  std::filesystem::remove(dir / "a.json");
  CHECK_THROWS_WITH_AS(load_recording(dir / "a"), doctest::Contains("MissingSidecar"), Error);

  save_recording(rec, dir / "b");
  {
    std::ofstream f(dir / "b.eegb", std::ios::binary | std::ios::trunc);
    f << "NOPE0000";
  }
  CHECK_THROWS_WITH_AS(load_recording(dir / "b"), doctest::Contains("BadMagic"), Error);

  save_recording(rec, dir / "c");
  auto payload = read_text(dir / "c.eegb");
  payload.resize(payload.size() - 4);
  write_text_atomic(dir / "c.eegb", payload);
  CHECK_THROWS_WITH_AS(load_recording(dir / "c"), doctest::Contains("ShapeMismatch"), Error);
}

TEST_CASE("feature tables round-trip with exact doubles") {
  TempDir dir;
  FeatureTable t;
  t.subject_ids = {"s1", "s2", "s3"};
  t.class_names = {"NC", "MCI", "DEM"};
  t.labels = {2, 0, 1};
  t.feature_names = {"A_gev", "gfp"};
  t.values = Matrix(3, 2, std::vector<double>{0.1, 1.0 / 3.0, 2.5e-17, -4.0, 1e300, 0.0});
  save_feature_table(t, dir / "f.csv");
  const auto back = load_feature_table(dir / "f.csv");
  CHECK(back.class_names == t.class_names);
  CHECK(back.labels == t.labels);
  CHECK(back.subject_ids == t.subject_ids);
  CHECK(back.feature_names == t.feature_names);
  for (std::size_t i = 0; i < 6; ++i) CHECK(back.values.data()[i] == t.values.data()[i]);

  write_text_atomic(dir / "dup.csv", "subject_id,label,x\na,NC,1\na,DEM,2\n");
  CHECK_THROWS_AS(load_feature_table(dir / "dup.csv"), Error);
  CHECK(default_class_order({"DEM", "NC", "DEM"}) == std::vector<std::string>{"NC", "DEM"});
  CHECK(default_class_order({"b", "a"}) == std::vector<std::string>{"a", "b"});
}

TEST_CASE("format_double is shortest round-trip") {
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(1.0) == "1");
  CHECK(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);
}
