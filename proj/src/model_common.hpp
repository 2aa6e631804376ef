#pragma once

#include <cmath>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "msaf/error.hpp"
#include "msaf/matrix.hpp"

namespace msaf::detail {

// Shared checks for every trainer; returns per-class counts. A forest can fit a
// single present class (its trees are leaves), the margin-based trainers cannot.
inline std::vector<std::size_t> check_training_input(const Matrix& x, std::span<const int> y,
                                                     std::size_t n_classes, bool allow_single_class = false) {
  if (x.rows() != y.size()) throw Error(ErrorCode::LengthMismatch, "X rows and y differ in length");
  if (x.rows() < 2) throw Error(ErrorCode::TooFewSamples, "training needs at least 2 samples");
  for (double v : x.data())
    if (!std::isfinite(v)) throw Error(ErrorCode::NonFinite, "training matrix has non-finite values");
  std::vector<std::size_t> counts(n_classes, 0);
  for (int label : y) {
    if (label < 0 || static_cast<std::size_t>(label) >= n_classes)
      throw Error(ErrorCode::InvalidConfig, "label " + std::to_string(label) + " out of range");
    ++counts[static_cast<std::size_t>(label)];
  }
  std::size_t present = 0;
  for (auto c : counts) present += c > 0;
  if (n_classes < 2 || (present < 2 && !allow_single_class)) throw Error(ErrorCode::SingleClass, "training labels contain a single class");
  return counts;
}

// n / (present_classes * n_c) per class, or 1 everywhere when not balanced.
inline std::vector<double> class_weights(const std::vector<std::size_t>& counts, bool balanced) {
  std::vector<double> w(counts.size(), 1.0);
  if (!balanced) return w;
  std::size_t n = 0, present = 0;
  for (auto c : counts) {
    n += c;
    present += c > 0;
  }
  for (std::size_t c = 0; c < counts.size(); ++c)
    if (counts[c] > 0)
      w[c] = static_cast<double>(n) / (static_cast<double>(present) * static_cast<double>(counts[c]));
  return w;
}

inline void check_predict_input(const Matrix& x, std::size_t n_features) {
  if (x.rows() > 0 && x.cols() != n_features)
    throw Error(ErrorCode::DimensionMismatch, "model expects " + std::to_string(n_features) +
                                                  " features, got " + std::to_string(x.cols()));
}

inline void softmax_inplace(std::span<double> v) {
  double mx = v[0];
  for (double a : v) mx = std::max(mx, a);
  double s = 0.0;
  for (double& a : v) {
    a = std::exp(a - mx);
    s += a;
  }
  for (double& a : v) a /= s;
}

}  // namespace msaf::detail
