#include <doctest.h>

#include <atomic>
#include <set>
#include <stdexcept>

#include "msaf/error.hpp"
#include "msaf/matrix.hpp"
#include "msaf/parallel.hpp"
#include "msaf/random.hpp"

using namespace msaf;

TEST_CASE("error codes map to exit categories") {
  CHECK(category_of(ErrorCode::InvalidConfig) == ErrorCategory::Config);
  CHECK(category_of(ErrorCode::InvalidBand) == ErrorCategory::Config);
  CHECK(category_of(ErrorCode::ParseError) == ErrorCategory::Config);
  CHECK(category_of(ErrorCode::ShapeMismatch) == ErrorCategory::Data);
  CHECK(category_of(ErrorCode::ClassTooSmall) == ErrorCategory::Data);
  CHECK(category_of(ErrorCode::SingularSystem) == ErrorCategory::Numeric);
  CHECK(category_of(ErrorCode::ZeroGfp) == ErrorCategory::Numeric);
  const Error e(ErrorCode::NoPeaks, "flat");
  CHECK(e.code() == ErrorCode::NoPeaks);
  CHECK(std::string(e.what()) == "NoPeaks: flat");
}

TEST_CASE("matrix shape operations") {
  Matrix m(2, 3, std::vector<double>{1, 2, 3, 4, 5, 6});
  CHECK(m(1, 2) == 6);
  const auto t = m.transposed();
  CHECK(t.rows() == 3);
  CHECK(t(2, 1) == 6);
  CHECK(m.column(1) == std::vector<double>{2, 5});
  const std::vector<std::size_t> pick{1, 1, 0};
  const auto s = m.select_rows(pick);
  CHECK(s.rows() == 3);
  CHECK(s(0, 0) == 4);
  CHECK(s(2, 2) == 3);
  Matrix e;
  const std::vector<double> r{7, 8};
  e.append_row(r);
  e.append_row(r);
  CHECK(e.rows() == 2);
  CHECK(e.cols() == 2);
  const std::vector<double> bad{1, 2, 3};
  CHECK_THROWS_AS(e.append_row(bad), std::invalid_argument);
  CHECK_THROWS_AS(Matrix(2, 2, std::vector<double>{1}), std::invalid_argument);
  CHECK(dot(m.row(0), m.row(1)) == 32);
  CHECK(squared_norm(m.row(0)) == 14);
}

TEST_CASE("random streams are reproducible and well spread") {
  CHECK(derive_seed(1, 2) == derive_seed(1, 2));
  CHECK(derive_seed(1, 2) != derive_seed(1, 3));
  CHECK(derive_seed(1, 2) != derive_seed(2, 2));
  Rng a(5), b(5);
  for (int i = 0; i < 100; ++i) CHECK(uniform01(a) == uniform01(b));

  Rng rng(11);
  double sum = 0.0, sq = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = uniform01(rng);
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    const double z = standard_normal(rng);
    sum += z;
    sq += z * z;
  }
  CHECK(std::abs(sum / n) < 0.01);
  CHECK(std::abs(sq / n - 1.0) < 0.02);

  std::vector<int> counts(7, 0);
  for (int i = 0; i < 70000; ++i) ++counts[uniform_index(rng, 7)];
  for (int c : counts) CHECK(std::abs(c - 10000) < 500);

  const auto pick = sample_without_replacement(rng, 20, 20);
  CHECK(std::set<std::size_t>(pick.begin(), pick.end()).size() == 20);
}

TEST_CASE("parallel_for fills every slot and rethrows") {
  for (unsigned threads : {1u, 3u, 8u}) {
    set_thread_count(threads);
    std::vector<int> out(1000, 0);
    parallel_for(out.size(), [&](std::size_t i) { out[i] = static_cast<int>(i * i % 97); });
    for (std::size_t i = 0; i < out.size(); ++i) REQUIRE(out[i] == static_cast<int>(i * i % 97));

    // nested calls run inline without deadlock
    std::atomic<int> total{0};
    parallel_for(10, [&](std::size_t) { parallel_for(10, [&](std::size_t) { ++total; }); });
    CHECK(total == 100);

    CHECK_THROWS_AS(parallel_for(50,
                                 [](std::size_t i) {
                                   if (i == 17) throw Error(ErrorCode::NoPeaks, "boom");
                                 }),
                    Error);
  }
  set_thread_count(0);
}
