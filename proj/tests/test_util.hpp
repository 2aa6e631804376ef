#pragma once

#include <atomic>
#include <filesystem>
#include <string>

#include <unistd.h>

#include "msaf/eeg_io.hpp"
#include "msaf/random.hpp"

namespace msaf::testing {

/// Fresh directory under the system temp dir, removed on scope exit.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("msaf_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Gaussian white-noise recording on the 19-channel set.
inline Recording noise_recording(std::size_t n_samples, double fs, std::uint64_t seed) {
  Recording rec;
  rec.montage = standard_1020_montage(standard_19_channels());
  rec.fs = fs;
  rec.subject_id = "noise";
  rec.data = Matrix(rec.montage.size(), n_samples);
  Rng rng(seed);
  for (auto& v : rec.data.data()) v = standard_normal(rng);
  return rec;
}

}  // namespace msaf::testing
