#include "msaf/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "msaf/error.hpp"
#include "msaf/parallel.hpp"
#include "msaf/random.hpp"

namespace msaf {

namespace {

std::size_t geometric_dwell(Rng& rng, double mean_samples) {
  const double p = 1.0 / mean_samples;
  const double u = 1.0 - uniform01(rng);  // (0, 1]
  return 1 + static_cast<std::size_t>(std::floor(std::log(u) / std::log1p(-p)));
}

std::size_t next_state(Rng& rng, const Matrix& t, std::size_t from) {
  const double u = uniform01(rng);
  double acc = 0.0;
  std::size_t last = from;
  for (std::size_t j = 0; j < t.cols(); ++j) {
    if (t(from, j) <= 0.0) continue;
    acc += t(from, j);
    last = j;
    if (u < acc) return j;
  }
  return last;
}

struct Sequence {
  std::vector<int> states;
  std::vector<double> polarity;
};

// polarity carries the segment sign times a raised-cosine gain that peaks at the
// segment centre, 1 - depth * (1 - cos(pi (i - c) / len)) / 2, so GFP rises and
// falls once per segment and the centre sample is a strict maximum for len >= 3.
Sequence sample_sequence(Rng& rng, std::size_t n, const Matrix& t, const std::vector<double>& dwell_samples,
                         double peak_depth) {
  Sequence s;
  s.states.reserve(n);
  s.polarity.reserve(n);
  std::size_t state = uniform_index(rng, t.rows());
  while (s.states.size() < n) {
    const std::size_t len = geometric_dwell(rng, dwell_samples[state]);
    const double sign = uniform01(rng) < 0.5 ? -1.0 : 1.0;
    const double centre = static_cast<double>(len / 2);
    for (std::size_t i = 0; i < len && s.states.size() < n; ++i) {
      const double off = (static_cast<double>(i) - centre) / static_cast<double>(len);
      s.states.push_back(static_cast<int>(state));
      s.polarity.push_back(sign * (1.0 - peak_depth * 0.5 * (1.0 - std::cos(std::numbers::pi * off))));
    }
    state = next_state(rng, t, state);
  }
  return s;
}

Matrix uniform_transition(std::size_t k) { return transition_from_weights(std::vector<double>(k, 1.0)); }

}  // namespace

Matrix transition_from_weights(const std::vector<double>& weight) {
  const std::size_t k = weight.size();
  Matrix t(k, k);
  if (k == 1) {
    t(0, 0) = 1.0;
    return t;
  }
  for (std::size_t i = 0; i < k; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j)
      if (j != i) s += weight[j];
    if (!(s > 0.0)) throw Error(ErrorCode::InvalidConfig, "transition weights leave a state with no exit");
    for (std::size_t j = 0; j < k; ++j) t(i, j) = j == i ? 0.0 : weight[j] / s;
  }
  return t;
}

MicrostateMaps canonical_templates(const Montage& montage) {
  if (!montage.has_positions()) throw Error(ErrorCode::UnknownChannel, "canonical templates need 10-20 positions");
  struct Spec {
    const char* label;
    Vec3 axis;
    double omega;
  };
  const double r2 = std::numbers::sqrt2 / 2.0;
  const Spec specs[] = {{"A", {r2, r2, 0.0}, 1.5}, {"B", {-r2, r2, 0.0}, 1.5}, {"C", {0.0, 1.0, 0.0}, 2.0},
                        {"F", {-1.0, 0.0, 0.0}, 1.5}};
  MicrostateMaps maps;
  maps.channels = montage.names();
  maps.maps = Matrix(4, montage.size());
  for (std::size_t s = 0; s < 4; ++s) {
    auto row = maps.maps.row(s);
    for (std::size_t ch = 0; ch < montage.size(); ++ch) {
      const auto& p = montage.positions()[ch];
      const double c = std::clamp(p[0] * specs[s].axis[0] + p[1] * specs[s].axis[1] + p[2] * specs[s].axis[2], -1.0, 1.0);
      row[ch] = std::cos(specs[s].omega * std::acos(c));
    }
    double mean = 0.0;
    for (double v : row) mean += v;
    mean /= static_cast<double>(row.size());
    double norm = 0.0;
    for (double& v : row) {
      v -= mean;
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (double& v : row) v /= norm;
    maps.labels.emplace_back(specs[s].label);
  }
  maps.gev_total = 1.0;
  return maps;
}

void SynthConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::InvalidConfig, m); };
  if (!(fs > 0.0)) fail("fs must be positive");
  if (!(duration > 0.0) || duration * fs < 1.0) fail("duration must cover at least one sample");
  if (k < 1) fail("k must be >= 1");
  if (templates && templates->k() != k) fail("template count differs from k");
  if (!templates && k > 4) fail("built-in templates provide at most 4 states");
  if (!transition.empty()) {
    if (transition.rows() != k || transition.cols() != k) fail("transition matrix must be k x k");
    for (std::size_t i = 0; i < k; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < k; ++j) {
        if (transition(i, j) < 0.0) fail("negative transition probability");
        s += transition(i, j);
      }
      if (k > 1 && transition(i, i) != 0.0) fail("transition matrix needs a zero diagonal");
      if (std::abs(s - 1.0) > 1e-12) fail("transition rows must sum to 1");
    }
  }
  if (!mean_dwell_ms.empty()) {
    if (mean_dwell_ms.size() != k) fail("one mean dwell per state");
    for (double d : mean_dwell_ms)
      if (!(d > 1000.0 / fs)) fail("mean dwell must exceed one sample");
  }
  if (!amplitude.empty() && amplitude.size() != k) fail("one amplitude per state");
  if (!(snr > 0.0)) fail("snr must be positive (inf for noiseless)");
  if (envelope_depth < 0.0 || envelope_depth >= 1.0) fail("envelope depth must lie in [0, 1)");
  if (segment_peak_depth < 0.0 || segment_peak_depth >= 1.0) fail("segment peak depth must lie in [0, 1)");
  for (const auto& b : background)
    if (!(b.mean_dwell_ms > 1000.0 / fs)) fail("background dwell must exceed one sample");
}

SynthOutput generate(const SynthConfig& cfg) {
  cfg.validate();
  SynthOutput out;
  const Montage montage = standard_1020_montage(cfg.channels);
  if (cfg.templates) {
    out.maps = *cfg.templates;
  } else {
    out.maps = canonical_templates(montage);
    if (cfg.k < 4) {
      std::vector<std::size_t> keep(cfg.k);
      for (std::size_t i = 0; i < cfg.k; ++i) keep[i] = i;
      out.maps.maps = out.maps.maps.select_rows(keep);
      out.maps.labels.resize(cfg.k);
    }
  }
  if (out.maps.n_channels() != montage.size())
    throw Error(ErrorCode::InvalidConfig, "templates and channel list differ in size");

  const auto n = static_cast<std::size_t>(std::llround(cfg.duration * cfg.fs));
  const std::size_t big_k = montage.size();
  const Matrix transition = cfg.transition.empty() ? uniform_transition(cfg.k) : cfg.transition;
  std::vector<double> dwell(cfg.k);
  for (std::size_t s = 0; s < cfg.k; ++s)
    dwell[s] = (cfg.mean_dwell_ms.empty() ? 100.0 : cfg.mean_dwell_ms[s]) * cfg.fs / 1000.0;

  Rng rng(derive_seed(cfg.seed, 0));
  const auto main = sample_sequence(rng, n, transition, dwell, cfg.segment_peak_depth);
  const double env_phase = 2.0 * std::numbers::pi * uniform01(rng);
  const double carrier_phase = 2.0 * std::numbers::pi * uniform01(rng);

  Matrix data(big_k, n);
  for (std::size_t t = 0; t < n; ++t) {
    const double time = static_cast<double>(t) / cfg.fs;
    const auto s = static_cast<std::size_t>(main.states[t]);
    double a = cfg.amplitude_uv * (cfg.amplitude.empty() ? 1.0 : cfg.amplitude[s]) * main.polarity[t];
    a *= 1.0 + cfg.envelope_depth * std::sin(2.0 * std::numbers::pi * 0.1 * time + env_phase);
    if (cfg.carrier_hz > 0.0) a *= std::cos(2.0 * std::numbers::pi * cfg.carrier_hz * time + carrier_phase);
    for (std::size_t ch = 0; ch < big_k; ++ch) data(ch, t) = a * out.maps.maps(s, ch);
  }

  for (std::size_t b = 0; b < cfg.background.size(); ++b) {
    const auto& proc = cfg.background[b];
    Rng brng(derive_seed(cfg.seed, 1 + b));
    const auto seq = sample_sequence(brng, n, uniform_transition(cfg.k),
                                     std::vector<double>(cfg.k, proc.mean_dwell_ms * cfg.fs / 1000.0), 0.0);
    const double phase = 2.0 * std::numbers::pi * uniform01(brng);
    for (std::size_t t = 0; t < n; ++t) {
      const double time = static_cast<double>(t) / cfg.fs;
      const double a = cfg.amplitude_uv * proc.amplitude * seq.polarity[t] *
                       std::cos(2.0 * std::numbers::pi * proc.carrier_hz * time + phase);
      const auto s = static_cast<std::size_t>(seq.states[t]);
      for (std::size_t ch = 0; ch < big_k; ++ch) data(ch, t) += a * out.maps.maps(s, ch);
    }
  }

  if (std::isfinite(cfg.snr)) {
    Rng nrng(derive_seed(cfg.seed, 1000));
    const double sd = cfg.amplitude_uv / (cfg.snr * std::sqrt(static_cast<double>(big_k)));
    std::vector<double> e(big_k);
    for (std::size_t t = 0; t < n; ++t) {
      double mean = 0.0;
      for (auto& v : e) {
        v = standard_normal(nrng);
        mean += v;
      }
      mean /= static_cast<double>(big_k);
      for (std::size_t ch = 0; ch < big_k; ++ch) data(ch, t) += sd * (e[ch] - mean);
    }
  }

  out.rec.montage = montage;
  out.rec.fs = cfg.fs;
  out.rec.data = std::move(data);
  out.rec.subject_id = cfg.subject_id;
  out.rec.label = cfg.label;
  out.rec.provenance.push_back("synth seed=" + std::to_string(cfg.seed));

  auto& truth = out.truth;
  truth.fs = cfg.fs;
  truth.states = main.states;
  truth.gfp = gfp(out.rec);
  truth.source_maps = out.maps;
  truth.corr.assign(n, 0.0);
  std::vector<double> col(big_k);
  for (std::size_t t = 0; t < n; ++t) {
    if (!(truth.gfp.values[t] > 0.0)) continue;
    for (std::size_t ch = 0; ch < big_k; ++ch) col[ch] = out.rec.data(ch, t);
    truth.corr[t] = std::abs(spatial_correlation(col, out.maps.maps.row(static_cast<std::size_t>(truth.states[t]))));
  }
  return out;
}

std::vector<ClassProfile> default_profiles() {
  // states in template order A, B, C, F
  return {
      {"NC", {1.0, 1.0, 1.6, 0.5}, {100.0, 100.0, 120.0, 70.0}},
      {"MCI", {1.0, 1.0, 1.0, 1.0}, {100.0, 100.0, 95.0, 95.0}},
      {"DEM", {1.0, 1.0, 0.5, 1.6}, {100.0, 100.0, 70.0, 120.0}},
  };
}

std::vector<SynthOutput> make_cohort(const CohortConfig& cfg) {
  if (cfg.profiles.size() < 2) throw Error(ErrorCode::InvalidConfig, "a cohort needs at least 2 classes");
  if (cfg.n_per_class < 1) throw Error(ErrorCode::InvalidConfig, "n_per_class must be >= 1");
  if (cfg.jitter < 0.0 || cfg.jitter >= 1.0) throw Error(ErrorCode::InvalidConfig, "jitter must lie in [0, 1)");
  for (const auto& p : cfg.profiles)
    if (p.transition_weight.size() != cfg.base.k || p.mean_dwell_ms.size() != cfg.base.k)
      throw Error(ErrorCode::InvalidConfig, "profile " + p.label + " needs one weight and dwell per state");

  const std::size_t total = cfg.profiles.size() * cfg.n_per_class;
  std::vector<SynthOutput> out(total);
  parallel_for(total, [&](std::size_t i) {
    const auto& prof = cfg.profiles[i / cfg.n_per_class];
    Rng rng(derive_seed(cfg.seed, 2 * i));
    auto jitter = [&](double v) { return v * (1.0 + cfg.jitter * (2.0 * uniform01(rng) - 1.0)); };
    SynthConfig sc = cfg.base;
    std::vector<double> w(prof.transition_weight.size()), dwell(prof.mean_dwell_ms.size());
    for (std::size_t s = 0; s < w.size(); ++s) w[s] = jitter(prof.transition_weight[s]);
    for (std::size_t s = 0; s < dwell.size(); ++s) dwell[s] = jitter(prof.mean_dwell_ms[s]);
    sc.transition = transition_from_weights(w);
    sc.mean_dwell_ms = dwell;
    char id[64];
    std::snprintf(id, sizeof(id), "%s_%03zu", prof.label.c_str(), i % cfg.n_per_class);
    sc.subject_id = id;
    sc.label = prof.label;
    sc.seed = derive_seed(cfg.seed, 2 * i + 1);
    out[i] = generate(sc);
  });
  return out;
}

CohortConfig theta_encoded_cohort(std::size_t n_per_class, std::uint64_t seed) {
  CohortConfig cfg;
  cfg.n_per_class = n_per_class;
  cfg.seed = seed;
  cfg.base.duration = 60.0;
  cfg.base.snr = 8.0;
  cfg.base.carrier_hz = 6.0;
  cfg.base.background = {{2.0, 1.0, 250.0}, {11.0, 1.0, 150.0}, {22.0, 1.0, 150.0}};
  return cfg;
}

}  // namespace msaf
