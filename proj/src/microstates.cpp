#include "msaf/microstates.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "msaf/error.hpp"
#include "msaf/parallel.hpp"
#include "msaf/random.hpp"

namespace msaf {

using nlohmann::json;

namespace {

void remove_mean(std::span<double> v) {
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  for (double& x : v) x -= m;
}

bool normalize(std::span<double> v) {
  const double n = std::sqrt(squared_norm(v));
  if (!(n > 0.0)) return false;
  for (double& x : v) x /= n;
  return true;
}

// Largest-magnitude component positive (first one on ties).
void canonical_sign(std::span<double> v) {
  std::size_t arg = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (std::abs(v[i]) > std::abs(v[arg])) arg = i;
  if (v[arg] < 0.0)
    for (double& x : v) x = -x;
}

// Variance across channels times K, i.e. ||x - mean||^2.
double centered_ss(std::span<const double> x) {
  double m = 0.0;
  for (double v : x) m += v;
  m /= static_cast<double>(x.size());
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return ss;
}

// Dominant eigenvector of the scatter of `rows` by power iteration from `start`.
// For PSD scatter the Rayleigh quotient never decreases along the iteration.
std::vector<double> dominant_eigenvector(const Matrix& samples, const std::vector<std::size_t>& rows,
                                         std::span<const double> start) {
  const std::size_t dim = samples.cols();
  Matrix scatter(dim, dim);
  for (std::size_t r : rows) {
    auto x = samples.row(r);
    for (std::size_t i = 0; i < dim; ++i) {
      const double xi = x[i];
      if (xi == 0.0) continue;
      for (std::size_t j = 0; j < dim; ++j) scatter(i, j) += xi * x[j];
    }
  }
  std::vector<double> v(start.begin(), start.end());
  std::vector<double> next(dim);
  auto apply = [&](const std::vector<double>& in, std::vector<double>& out) {
    for (std::size_t i = 0; i < dim; ++i) out[i] = dot(scatter.row(i), in);
  };
  apply(v, next);
  if (!(squared_norm(next) > 1e-300)) {
    // start orthogonal to every member; restart from the first member
    auto x = samples.row(rows.front());
    v.assign(x.begin(), x.end());
    normalize(v);
    return v;
  }
  for (int it = 0; it < 10000; ++it) {
    normalize(next);
    double diff = 0.0;
    for (std::size_t i = 0; i < dim; ++i) diff = std::max(diff, std::abs(next[i] - v[i]));
    v.swap(next);
    if (diff < 1e-10) break;
    apply(v, next);
  }
  return v;
}

struct RestartResult {
  Matrix maps;
  double gev = -1.0;
  KMeansTrace trace;
};

double explained(const Matrix& samples, const Matrix& maps, const std::vector<int>& labels) {
  double num = 0.0;
  for (std::size_t t = 0; t < samples.rows(); ++t) {
    const double p = dot(samples.row(t), maps.row(static_cast<std::size_t>(labels[t])));
    num += p * p;
  }
  return num;
}

RestartResult run_restart(const Matrix& samples, double total_ss, const KMeansOptions& opt,
                          std::uint64_t seed) {
  const std::size_t n = samples.rows();
  const std::size_t k = opt.k;
  Rng rng(seed);

  RestartResult res;
  res.maps = Matrix(k, samples.cols());
  auto init = sample_without_replacement(rng, n, k);
  for (std::size_t c = 0; c < k; ++c) {
    auto src = samples.row(init[c]);
    std::copy(src.begin(), src.end(), res.maps.row(c).begin());
    normalize(res.maps.row(c));
  }

  std::size_t reseeds = 0;
  double prev = -std::numeric_limits<double>::infinity();
  std::vector<int> labels;
  for (std::size_t iter = 0; iter < opt.max_iter; ++iter) {
    labels = assign_polarity_invariant(samples, res.maps);

    std::vector<std::vector<std::size_t>> members(k);
    for (std::size_t t = 0; t < n; ++t) members[static_cast<std::size_t>(labels[t])].push_back(t);

    bool reseeded = false;
    for (std::size_t c = 0; c < k; ++c) {
      if (!members[c].empty()) continue;
      if (++reseeds > k)
        throw Error(ErrorCode::EmptyCluster, "cluster stayed empty after " + std::to_string(k) + " reseeds");
      // worst-explained sample becomes the new centroid
      std::size_t worst = 0;
      double worst_fit = std::numeric_limits<double>::infinity();
      for (std::size_t t = 0; t < n; ++t) {
        const double nn = squared_norm(samples.row(t));
        if (!(nn > 0.0)) continue;
        const double p = dot(samples.row(t), res.maps.row(static_cast<std::size_t>(labels[t])));
        const double fit = p * p / nn;
        if (fit < worst_fit) {
          worst_fit = fit;
          worst = t;
        }
      }
      auto src = samples.row(worst);
      std::copy(src.begin(), src.end(), res.maps.row(c).begin());
      normalize(res.maps.row(c));
      reseeded = true;
      break;
    }
    if (reseeded) continue;

    for (std::size_t c = 0; c < k; ++c) {
      auto v = dominant_eigenvector(samples, members[c], res.maps.row(c));
      std::copy(v.begin(), v.end(), res.maps.row(c).begin());
    }

    const double g = explained(samples, res.maps, labels) / total_ss;
    res.trace.gev.push_back(g);
    if (g - prev < opt.tol) break;
    prev = g;
  }

  for (std::size_t c = 0; c < k; ++c) {
    auto row = res.maps.row(c);
    remove_mean(row);
    normalize(row);
    canonical_sign(row);
  }
  labels = assign_polarity_invariant(samples, res.maps);
  res.gev = explained(samples, res.maps, labels) / total_ss;
  return res;
}

std::vector<std::string> default_labels(std::size_t k) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < k; ++i) out.push_back(std::to_string(i + 1));
  return out;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

bool same_channels(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  if (a.empty() || b.empty()) return true;
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (lower(a[i]) != lower(b[i])) return false;
  return true;
}

std::vector<std::tuple<int, std::size_t, std::size_t>> runs_of(const std::vector<int>& states) {
  std::vector<std::tuple<int, std::size_t, std::size_t>> runs;
  std::size_t start = 0;
  for (std::size_t t = 1; t <= states.size(); ++t) {
    if (t == states.size() || states[t] != states[start]) {
      runs.emplace_back(states[start], start, t - start);
      start = t;
    }
  }
  return runs;
}

}  // namespace

GfpSeries gfp(const Recording& rec) {
  const std::size_t k = rec.n_channels();
  if (k < 2) throw Error(ErrorCode::InsufficientChannels, "GFP needs K >= 2");
  GfpSeries g;
  g.fs = rec.fs;
  g.values.resize(rec.n_samples());
  std::vector<double> col(k);
  for (std::size_t t = 0; t < rec.n_samples(); ++t) {
    for (std::size_t i = 0; i < k; ++i) col[i] = rec.data(i, t);
    g.values[t] = std::sqrt(centered_ss(col) / static_cast<double>(k));
  }
  return g;
}

std::vector<std::size_t> find_gfp_peaks(const GfpSeries& g, std::size_t min_distance_samples) {
  const auto& v = g.values;
  if (v.size() < 3) throw Error(ErrorCode::TooFewSamples, "peak search needs T >= 3");
  std::vector<std::size_t> peaks;
  for (std::size_t t = 1; t + 1 < v.size(); ++t)
    if (v[t - 1] < v[t] && v[t] > v[t + 1]) peaks.push_back(t);
  if (peaks.empty()) throw Error(ErrorCode::NoPeaks, "GFP has no strict local maxima");
  if (min_distance_samples <= 1) return peaks;

  std::vector<std::size_t> order(peaks.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return v[peaks[a]] > v[peaks[b]]; });
  std::vector<bool> removed(peaks.size(), false);
  for (std::size_t oi : order) {
    if (removed[oi]) continue;
    for (std::size_t j = 0; j < peaks.size(); ++j) {
      if (j == oi || removed[j]) continue;
      const std::size_t d = peaks[j] > peaks[oi] ? peaks[j] - peaks[oi] : peaks[oi] - peaks[j];
      if (d < min_distance_samples) removed[j] = true;
    }
  }
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < peaks.size(); ++i)
    if (!removed[i]) kept.push_back(peaks[i]);
  return kept;
}

std::vector<std::size_t> find_gfp_peaks_ms(const GfpSeries& g, double min_distance_ms) {
  const auto d = static_cast<std::size_t>(std::llround(std::max(0.0, min_distance_ms) * g.fs / 1000.0));
  return find_gfp_peaks(g, d);
}

double spatial_correlation(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty())
    throw Error(ErrorCode::DimensionMismatch, "maps differ in length");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (!(saa > 0.0) || !(sbb > 0.0)) throw Error(ErrorCode::DegenerateMap, "constant topography");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

Matrix topographies_at(const Recording& rec, std::span<const std::size_t> samples) {
  Matrix out(samples.size(), rec.n_channels());
  for (std::size_t i = 0; i < samples.size(); ++i)
    for (std::size_t ch = 0; ch < rec.n_channels(); ++ch) out(i, ch) = rec.data(ch, samples[i]);
  return out;
}

std::vector<int> assign_polarity_invariant(const Matrix& samples, const Matrix& maps) {
  std::vector<int> labels(samples.rows(), 0);
  for (std::size_t t = 0; t < samples.rows(); ++t) {
    double best = -1.0;
    for (std::size_t c = 0; c < maps.rows(); ++c) {
      const double p = dot(samples.row(t), maps.row(c));
      if (p * p > best) {
        best = p * p;
        labels[t] = static_cast<int>(c);
      }
    }
  }
  return labels;
}

MicrostateMaps modified_kmeans(const Matrix& samples, const KMeansOptions& opt,
                               std::vector<KMeansTrace>* traces) {
  const std::size_t n = samples.rows();
  if (opt.k < 1) throw Error(ErrorCode::InvalidConfig, "k must be >= 1");
  if (n < opt.k)
    throw Error(ErrorCode::TooFewSamples,
                std::to_string(n) + " samples for k=" + std::to_string(opt.k));
  if (opt.n_inits < 1) throw Error(ErrorCode::InvalidConfig, "n_inits must be >= 1");

  Matrix centered = samples;
  double total_ss = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    remove_mean(centered.row(t));
    total_ss += squared_norm(centered.row(t));
  }
  if (!(total_ss > 0.0)) throw Error(ErrorCode::ZeroGfp, "all samples are constant across channels");

  std::vector<RestartResult> results(opt.n_inits);
  parallel_for(opt.n_inits, [&](std::size_t r) {
    results[r] = run_restart(centered, total_ss, opt, derive_seed(opt.seed, r));
  });

  std::size_t best = 0;
  for (std::size_t r = 1; r < results.size(); ++r)
    if (results[r].gev > results[best].gev) best = r;
  if (traces) {
    traces->clear();
    for (auto& r : results) traces->push_back(r.trace);
  }

  MicrostateMaps out;
  out.maps = std::move(results[best].maps);
  out.labels = default_labels(opt.k);
  out.gev_total = results[best].gev;
  return out;
}

GevResult gev(const Matrix& samples, const Matrix& maps, std::span<const int> labels) {
  if (labels.size() != samples.rows())
    throw Error(ErrorCode::LengthMismatch, "labels and samples differ in length");
  if (samples.cols() != maps.cols())
    throw Error(ErrorCode::MontageMismatch, "maps and samples differ in channel count");
  GevResult res;
  res.per_state.assign(maps.rows(), 0.0);
  const double k = static_cast<double>(samples.cols());
  double denom = 0.0;
  for (std::size_t t = 0; t < samples.rows(); ++t) {
    auto x = samples.row(t);
    const double g2 = centered_ss(x) / k;
    denom += g2;
    if (labels[t] < 0 || !(g2 > 0.0)) continue;
    const auto s = static_cast<std::size_t>(labels[t]);
    if (s >= maps.rows()) throw Error(ErrorCode::InconsistentStates, "label out of range");
    const double r = spatial_correlation(x, maps.row(s));
    res.per_state[s] += g2 * r * r;
  }
  if (!(denom > 0.0)) throw Error(ErrorCode::ZeroGfp, "all samples are constant across channels");
  for (double& v : res.per_state) {
    v /= denom;
    res.total += v;
  }
  return res;
}

GevResult gev(const Recording& rec, const Segmentation& seg) {
  if (seg.size() != rec.n_samples())
    throw Error(ErrorCode::LengthMismatch, "segmentation and recording differ in length");
  return gev(rec.data.transposed(), seg.source_maps.maps, seg.states);
}

KSelection select_k(const Matrix& samples, const std::vector<std::size_t>& k_range,
                    const KMeansOptions& base, double min_gain) {
  if (k_range.empty()) throw Error(ErrorCode::InvalidConfig, "empty k range");
  KSelection sel;
  sel.ks = k_range;
  std::sort(sel.ks.begin(), sel.ks.end());
  sel.ks.erase(std::unique(sel.ks.begin(), sel.ks.end()), sel.ks.end());
  if (sel.ks.back() > samples.rows())
    throw Error(ErrorCode::TooFewSamples, "largest k exceeds the sample count");
  for (std::size_t k : sel.ks) {
    KMeansOptions opt = base;
    opt.k = k;
    sel.gev_curve.push_back(modified_kmeans(samples, opt).gev_total);
  }
  sel.chosen_k = sel.ks.back();
  for (std::size_t i = 0; i + 1 < sel.ks.size(); ++i) {
    if (sel.gev_curve[i + 1] - sel.gev_curve[i] < min_gain) {
      sel.chosen_k = sel.ks[i];
      break;
    }
  }
  return sel;
}

MicrostateMaps fit_subject_maps(const Recording& rec, const KMeansOptions& opt, double min_peak_distance_ms) {
  auto peaks = find_gfp_peaks_ms(gfp(rec), min_peak_distance_ms);
  auto maps = modified_kmeans(topographies_at(rec, peaks), opt);
  maps.channels = rec.montage.names();
  return maps;
}

MicrostateMaps group_cluster(const std::vector<MicrostateMaps>& subject_maps, const KMeansOptions& opt) {
  if (subject_maps.empty()) throw Error(ErrorCode::TooFewSamples, "no subject maps");
  const auto& first = subject_maps.front();
  Matrix all;
  for (const auto& m : subject_maps) {
    if (m.n_channels() != first.n_channels() || !same_channels(m.channels, first.channels))
      throw Error(ErrorCode::MontageMismatch, "subject maps use different montages");
    for (std::size_t r = 0; r < m.k(); ++r) all.append_row(m.maps.row(r));
  }
  auto out = modified_kmeans(all, opt);
  out.channels = first.channels;
  return out;
}

Segmentation backfit(const Recording& rec, const MicrostateMaps& maps, double min_segment_ms) {
  if (maps.n_channels() != rec.n_channels() || !same_channels(maps.channels, rec.montage.names()))
    throw Error(ErrorCode::MontageMismatch, "maps and recording use different montages");
  if (maps.k() == 0) throw Error(ErrorCode::InvalidConfig, "no maps to fit");

  const std::size_t t_len = rec.n_samples();
  const std::size_t k = maps.k();
  Segmentation seg;
  seg.fs = rec.fs;
  seg.gfp = gfp(rec);
  seg.source_maps = maps;
  seg.states.assign(t_len, 0);
  seg.corr.assign(t_len, 0.0);

  // |corr| of every state at every sample; needed again for short-segment absorption
  std::vector<double> all_corr(t_len * k, 0.0);
  std::vector<double> col(rec.n_channels());
  for (std::size_t t = 0; t < t_len; ++t) {
    for (std::size_t ch = 0; ch < rec.n_channels(); ++ch) col[ch] = rec.data(ch, t);
    if (!(centered_ss(col) > 0.0)) {
      if (t == 0) throw Error(ErrorCode::DegenerateSample, "constant topography at sample 0");
      seg.states[t] = seg.states[t - 1];
      seg.corr[t] = 0.0;
      continue;
    }
    double best = -1.0;
    for (std::size_t c = 0; c < k; ++c) {
      const double r = std::abs(spatial_correlation(col, maps.maps.row(c)));
      all_corr[t * k + c] = r;
      if (r > best) {
        best = r;
        seg.states[t] = static_cast<int>(c);
      }
    }
    seg.corr[t] = best;
  }

  const auto min_len = static_cast<std::size_t>(std::llround(std::max(0.0, min_segment_ms) * rec.fs / 1000.0));
  if (min_len > 1) {
    for (int pass = 0; pass < 1000; ++pass) {
      auto runs = runs_of(seg.states);
      if (runs.size() < 2) break;
      bool changed = false;
      for (std::size_t r = 0; r < runs.size(); ++r) {
        auto [state, start, len] = runs[r];
        if (len >= min_len) continue;
        const int left = r > 0 ? std::get<0>(runs[r - 1]) : -1;
        const int right = r + 1 < runs.size() ? std::get<0>(runs[r + 1]) : -1;
        for (std::size_t t = start; t < start + len; ++t) {
          int pick = left;
          if (pick < 0 || (right >= 0 && all_corr[t * k + static_cast<std::size_t>(right)] >
                                             all_corr[t * k + static_cast<std::size_t>(left)]))
            pick = right;
          seg.states[t] = pick;
          seg.corr[t] = all_corr[t * k + static_cast<std::size_t>(pick)];
        }
        changed = true;
        break;  // runs changed; recompute before touching the next one
      }
      if (!changed) break;
    }
  }
  return seg;
}

std::vector<std::size_t> hungarian_maximize(const Matrix& score) {
  const std::size_t n = score.rows();
  const std::size_t m = score.cols();
  if (n > m) throw Error(ErrorCode::InvalidConfig, "assignment needs rows <= cols");
  // shortest augmenting path formulation on cost = -score, 1-based potentials
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<bool> used(m + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = -score(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> assignment(n, 0);
  for (std::size_t j = 1; j <= m; ++j)
    if (p[j] != 0) assignment[p[j] - 1] = j - 1;
  return assignment;
}

MicrostateMaps label_maps(const MicrostateMaps& maps, const MicrostateMaps& templates) {
  if (templates.k() < maps.k())
    throw Error(ErrorCode::InvalidConfig, "fewer templates than maps");
  if (templates.n_channels() != maps.n_channels())
    throw Error(ErrorCode::MontageMismatch, "templates and maps differ in channel count");
  Matrix score(maps.k(), templates.k());
  for (std::size_t i = 0; i < maps.k(); ++i)
    for (std::size_t j = 0; j < templates.k(); ++j)
      score(i, j) = std::abs(spatial_correlation(maps.maps.row(i), templates.maps.row(j)));
  auto assignment = hungarian_maximize(score);

  std::vector<std::size_t> order(maps.k());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return assignment[a] < assignment[b]; });

  MicrostateMaps out;
  out.maps = Matrix(maps.k(), maps.n_channels());
  out.channels = maps.channels.empty() ? templates.channels : maps.channels;
  out.gev_total = maps.gev_total;
  for (std::size_t r = 0; r < order.size(); ++r) {
    const std::size_t src = order[r];
    const std::size_t tpl = assignment[src];
    const double sign =
        spatial_correlation(maps.maps.row(src), templates.maps.row(tpl)) < 0.0 ? -1.0 : 1.0;
    for (std::size_t ch = 0; ch < maps.n_channels(); ++ch) out.maps(r, ch) = sign * maps.maps(src, ch);
    out.labels.push_back(tpl < templates.labels.size() ? templates.labels[tpl] : std::to_string(tpl + 1));
  }
  return out;
}

MicrostateMaps label_maps(const MicrostateMaps& maps, const std::map<std::size_t, std::string>& names) {
  std::set<std::string> seen;
  for (const auto& [idx, name] : names) {
    if (idx >= maps.k()) throw Error(ErrorCode::InvalidConfig, "label file names map " + std::to_string(idx));
    if (!seen.insert(name).second) throw Error(ErrorCode::AmbiguousLabels, "duplicate label " + name);
  }
  if (names.size() != maps.k())
    throw Error(ErrorCode::InvalidConfig, "label file must name every map");

  std::vector<std::size_t> order(maps.k());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return names.at(a) < names.at(b); });
  MicrostateMaps out;
  out.maps = maps.maps.select_rows(order);
  out.channels = maps.channels;
  out.gev_total = maps.gev_total;
  for (std::size_t idx : order) out.labels.push_back(names.at(idx));
  return out;
}

std::string maps_to_json(const MicrostateMaps& maps) {
  json j;
  j["labels"] = maps.labels;
  j["K"] = maps.n_channels();
  j["k"] = maps.k();
  j["channels"] = maps.channels;
  j["values"] = std::vector<double>(maps.maps.data().begin(), maps.maps.data().end());
  j["gev_total"] = maps.gev_total;
  return j.dump(2) + "\n";
}

MicrostateMaps maps_from_json(const std::string& text) {
  try {
    auto j = json::parse(text);
    MicrostateMaps m;
    m.labels = j.at("labels").get<std::vector<std::string>>();
    const auto big_k = j.at("K").get<std::size_t>();
    m.channels = j.value("channels", std::vector<std::string>{});
    auto values = j.at("values").get<std::vector<double>>();
    if (big_k == 0 || values.size() % big_k != 0)
      throw Error(ErrorCode::ShapeMismatch, "map values do not tile K columns");
    const std::size_t k = values.size() / big_k;
    if (m.labels.size() != k) throw Error(ErrorCode::ShapeMismatch, "labels/map count mismatch");
    m.maps = Matrix(k, big_k, std::move(values));
    m.gev_total = j.value("gev_total", 0.0);
    return m;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("maps json: ") + e.what());
  }
}

void save_maps(const MicrostateMaps& maps, const std::filesystem::path& path) {
  write_text_atomic(path, maps_to_json(maps));
}

MicrostateMaps load_maps(const std::filesystem::path& path) { return maps_from_json(read_text(path)); }

std::map<std::size_t, std::string> load_label_file(const std::filesystem::path& path) {
  std::map<std::size_t, std::string> out;
  try {
    auto j = json::parse(read_text(path));
    std::set<std::string> seen;
    for (auto it = j.begin(); it != j.end(); ++it) {
      const auto name = it.value().get<std::string>();
      if (!seen.insert(name).second) throw Error(ErrorCode::AmbiguousLabels, "duplicate label " + name);
      out[static_cast<std::size_t>(std::stoul(it.key()))] = name;
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("label file: ") + e.what());
  } catch (const std::logic_error&) {
    throw Error(ErrorCode::ParseError, "label file keys must be map indices");
  }
  return out;
}

std::string segmentation_to_json(const Segmentation& seg, const std::string& subject_id,
                                 const std::optional<std::string>& label) {
  json j;
  j["subject_id"] = subject_id;
  if (label) j["label"] = *label;
  j["fs"] = seg.fs;
  j["states"] = seg.states;
  j["corr"] = seg.corr;
  j["gfp"] = seg.gfp.values;
  j["maps"] = json::parse(maps_to_json(seg.source_maps));
  return j.dump() + "\n";
}

SegmentationFile segmentation_from_json(const std::string& text) {
  try {
    auto j = json::parse(text);
    SegmentationFile f;
    f.subject_id = j.at("subject_id").get<std::string>();
    if (j.contains("label")) f.label = j["label"].get<std::string>();
    f.seg.fs = j.at("fs").get<double>();
    f.seg.states = j.at("states").get<std::vector<int>>();
    f.seg.corr = j.at("corr").get<std::vector<double>>();
    f.seg.gfp.values = j.at("gfp").get<std::vector<double>>();
    f.seg.gfp.fs = f.seg.fs;
    f.seg.source_maps = maps_from_json(j.at("maps").dump());
    if (f.seg.corr.size() != f.seg.states.size() || f.seg.gfp.values.size() != f.seg.states.size())
      throw Error(ErrorCode::ShapeMismatch, "segmentation arrays differ in length");
    return f;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("segmentation json: ") + e.what());
  }
}

std::string render_topography_svg(const Montage& montage, std::span<const double> values,
                                  const std::string& title) {
  if (!montage.has_positions()) throw Error(ErrorCode::InvalidConfig, "topography needs positions");
  if (values.size() != montage.size()) throw Error(ErrorCode::DimensionMismatch, "one value per channel");

  constexpr double kSize = 240.0, kCx = 120.0, kCy = 130.0, kRadius = 90.0;
  std::vector<std::pair<double, double>> xy;
  for (const auto& p : montage.positions()) {
    const double polar = std::acos(std::clamp(p[2], -1.0, 1.0)) / (std::numbers::pi / 2.0);
    const double az = std::atan2(p[1], p[0]);
    xy.emplace_back(kCx + kRadius * polar * std::cos(az), kCy - kRadius * polar * std::sin(az));
  }
  double vmax = 0.0;
  for (double v : values) vmax = std::max(vmax, std::abs(v));
  if (!(vmax > 0.0)) vmax = 1.0;

  auto color = [&](double v) {
    const double a = std::clamp(v / vmax, -1.0, 1.0);
    int r = 255, g = 255, b = 255;
    if (a > 0) {
      g = b = static_cast<int>(std::lround(255.0 * (1.0 - a)));
    } else {
      r = g = static_cast<int>(std::lround(255.0 * (1.0 + a)));
    }
    char buf[16];
    std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", r, g, b);
    return std::string(buf);
  };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kSize << "\" height=\"" << kSize + 20
      << "\" viewBox=\"0 0 " << kSize << ' ' << kSize + 20 << "\">\n";
  svg << "<text x=\"" << kCx << "\" y=\"18\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">"
      << title << "</text>\n";
  constexpr double kCell = 4.0;
  for (double y = kCy - kRadius; y < kCy + kRadius; y += kCell) {
    for (double x = kCx - kRadius; x < kCx + kRadius; x += kCell) {
      const double cx = x + kCell / 2.0, cy = y + kCell / 2.0;
      if (std::hypot(cx - kCx, cy - kCy) > kRadius) continue;
      double wsum = 0.0, vsum = 0.0;
      bool exact = false;
      for (std::size_t i = 0; i < xy.size(); ++i) {
        const double d2 = (cx - xy[i].first) * (cx - xy[i].first) + (cy - xy[i].second) * (cy - xy[i].second);
        if (d2 < 1e-9) {
          vsum = values[i];
          wsum = 1.0;
          exact = true;
          break;
        }
        wsum += 1.0 / d2;
        vsum += values[i] / d2;
      }
      const double v = exact ? vsum : vsum / wsum;
      svg << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << kCell << "\" height=\"" << kCell
          << "\" fill=\"" << color(v) << "\"/>\n";
    }
  }
  svg << "<circle cx=\"" << kCx << "\" cy=\"" << kCy << "\" r=\"" << kRadius
      << "\" fill=\"none\" stroke=\"black\" stroke-width=\"2\"/>\n";
  svg << "<polygon points=\"" << kCx - 10 << ',' << kCy - kRadius + 1 << ' ' << kCx << ','
      << kCy - kRadius - 12 << ' ' << kCx + 10 << ',' << kCy - kRadius + 1
      << "\" fill=\"none\" stroke=\"black\" stroke-width=\"2\"/>\n";
  for (std::size_t i = 0; i < xy.size(); ++i) {
    svg << "<circle cx=\"" << xy[i].first << "\" cy=\"" << xy[i].second
        << "\" r=\"2\" fill=\"black\"><title>" << montage.names()[i] << "</title></circle>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace msaf
