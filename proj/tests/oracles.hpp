#pragma once

// Independent reference implementations shared by the unit tests and the
// acceptance runner. Nothing here calls the code it checks.

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "msaf/matrix.hpp"
#include "msaf/microstates.hpp"
#include "msaf/random.hpp"

namespace msaf::oracle {

/// Random labelled segmentation: 2..5 states, runs of 1..30 samples, random
/// correlations and GFP; adjacent draws of the same state merge into one run.
inline Segmentation random_segmentation(std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t k = 2 + uniform_index(rng, 4);
  const double fs = 100.0 + 50.0 * static_cast<double>(uniform_index(rng, 4));
  const std::size_t n = static_cast<std::size_t>(fs) * (1 + uniform_index(rng, 4)) + uniform_index(rng, 37);
  Segmentation seg;
  seg.fs = fs;
  seg.gfp.fs = fs;
  seg.source_maps.maps = Matrix(k, 3);
  for (std::size_t s = 0; s < k; ++s) seg.source_maps.labels.push_back(std::string(1, static_cast<char>('A' + s)));
  int state = static_cast<int>(uniform_index(rng, k));
  while (seg.states.size() < n) {
    const std::size_t len = 1 + uniform_index(rng, 30);
    for (std::size_t i = 0; i < len && seg.states.size() < n; ++i) {
      seg.states.push_back(state);
      seg.corr.push_back(uniform01(rng));
      seg.gfp.values.push_back(0.1 + 5.0 * uniform01(rng));
    }
    if (uniform01(rng) < 0.8) state = static_cast<int>(uniform_index(rng, k));
  }
  return seg;
}

/// Per-state scan in the feature-vector layout: gev, meancorr, occurrence,
/// timecov, meandur (ms) per state, then mean GFP.
inline std::vector<double> features(const Segmentation& seg) {
  const std::size_t k = seg.source_maps.labels.size();
  const std::size_t n = seg.states.size();
  const double duration = static_cast<double>(n) / seg.fs;
  double den = 0.0;
  for (std::size_t t = 0; t < n; ++t) den += seg.gfp.values[t] * seg.gfp.values[t];
  std::vector<double> out;
  for (std::size_t s = 0; s < k; ++s) {
    double num = 0.0, csum = 0.0;
    std::size_t count = 0, runs = 0;
    for (std::size_t t = 0; t < n; ++t) {
      if (seg.states[t] != static_cast<int>(s)) continue;
      num += seg.gfp.values[t] * seg.gfp.values[t] * seg.corr[t] * seg.corr[t];
      csum += seg.corr[t];
      ++count;
      if (t == 0 || seg.states[t - 1] != static_cast<int>(s)) ++runs;
    }
    if (count == 0) {
      out.insert(out.end(), 5, 0.0);
      continue;
    }
    out.push_back(num / den);
    out.push_back(csum / static_cast<double>(count));
    out.push_back(static_cast<double>(runs) / duration);
    out.push_back(static_cast<double>(count) / static_cast<double>(n));
    out.push_back(static_cast<double>(count) / static_cast<double>(runs) * 1000.0 / seg.fs);
  }
  double g = 0.0;
  for (double v : seg.gfp.values) g += v;
  out.push_back(g / static_cast<double>(n));
  return out;
}

/// Three classes from thresholds on a nonlinear score of Gaussian features.
inline void three_class_data(std::size_t n, std::size_t d, std::uint64_t seed, Matrix& x, std::vector<int>& y) {
  Rng rng(seed);
  x = Matrix(n, d);
  y.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) x(i, j) = standard_normal(rng);
    const double s = x(i, 0) + 0.5 * x(i, 1 % d) - 0.3 * x(i, 2 % d) * x(i, 0);
    y[i] = s > 0.5 ? 2 : (s > -0.5 ? 1 : 0);
  }
}

inline Matrix first_rows(const Matrix& x, std::size_t n) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  return x.select_rows(idx);
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

/// Best |corr| of each target row against the candidate rows under a brute-force
/// optimal one-to-one matching (k <= 6 keeps the permutation count small).
inline std::vector<double> matched_abs_corr(const Matrix& candidates, const Matrix& targets, std::vector<std::size_t>* match = nullptr) {
  const std::size_t k = targets.rows();
  auto corr = [](std::span<const double> a, std::span<const double> b) {
    const double n = static_cast<double>(a.size());
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) ma += a[i], mb += b[i];
    ma /= n;
    mb /= n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      sab += (a[i] - ma) * (b[i] - mb);
      saa += (a[i] - ma) * (a[i] - ma);
      sbb += (b[i] - mb) * (b[i] - mb);
    }
    return std::abs(sab / std::sqrt(saa * sbb));
  };
  std::vector<std::size_t> perm(candidates.rows());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  std::vector<double> best_vals;
  std::vector<std::size_t> best_perm;
  double best = -1.0;
  do {
    double total = 0.0;
    std::vector<double> vals(k);
    for (std::size_t t = 0; t < k; ++t) total += vals[t] = corr(candidates.row(perm[t]), targets.row(t));
    if (total > best) {
      best = total;
      best_vals = vals;
      best_perm.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(k));
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  if (match) *match = best_perm;
  return best_vals;
}

}  // namespace msaf::oracle
