#include "msaf/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "msaf/error.hpp"
#include "msaf/parallel.hpp"

namespace msaf {

namespace {

constexpr double kPi = std::numbers::pi;

double sinc(double x) {
  if (x == 0.0) return 1.0;
  return std::sin(kPi * x) / (kPi * x);
}

// Unit-DC-gain Hamming windowed-sinc low-pass, exactly symmetric.
std::vector<double> lowpass_taps(double cutoff, double fs, std::size_t n_taps) {
  const std::size_t m = (n_taps - 1) / 2;
  const double fc = cutoff / fs;  // cycles per sample
  std::vector<double> h(n_taps);
  for (std::size_t n = 0; n <= m; ++n) {
    const double k = static_cast<double>(n) - static_cast<double>(m);
    const double w =
        n_taps == 1 ? 1.0 : 0.54 - 0.46 * std::cos(2.0 * kPi * static_cast<double>(n) /
                                                   static_cast<double>(n_taps - 1));
    h[n] = 2.0 * fc * sinc(2.0 * fc * k) * w;
    h[n_taps - 1 - n] = h[n];
  }
  // pairwise-symmetric summation keeps the normalized taps exactly mirrored
  double sum = h[m];
  for (std::size_t n = 0; n < m; ++n) sum += 2.0 * h[n];
  for (auto& v : h) v /= sum;
  return h;
}

std::string num(double v) { return format_double(v); }

Recording with_data(const Recording& rec, Matrix data, std::string step) {
  Recording out;
  out.montage = rec.montage;
  out.fs = rec.fs;
  out.data = std::move(data);
  out.subject_id = rec.subject_id;
  out.label = rec.label;
  out.provenance = rec.provenance;
  out.provenance.push_back(std::move(step));
  return out;
}

}  // namespace

double default_transition_width(double edge_hz) {
  return std::min(std::max(0.25 * edge_hz, 2.0), edge_hz);
}

std::size_t hamming_tap_count(double fs, double transition_hz) {
  auto n = static_cast<std::size_t>(std::ceil(3.3 * fs / transition_hz - 1e-9));
  if (n % 2 == 0) ++n;
  return std::max<std::size_t>(n, 3);
}

FirFilter design_fir_bandpass(double low, double high, double fs) {
  if (!(fs > 0.0) || !(low > 0.0) || !(low < high) || !(high < fs / 2.0))
    throw Error(ErrorCode::InvalidBand, "band-pass needs 0 < low < high < fs/2, got (" + num(low) +
                                            ", " + num(high) + ") at fs=" + num(fs));
  const double tb_low = default_transition_width(low);
  const double tb_high = std::min(default_transition_width(high), fs / 2.0 - high);
  const std::size_t n = hamming_tap_count(fs, std::min(tb_low, tb_high));

  auto upper = lowpass_taps(high + tb_high / 2.0, fs, n);
  auto lower = lowpass_taps(low - tb_low / 2.0, fs, n);
  FirFilter f;
  f.fs = fs;
  f.kind = FilterKind::BandPass;
  f.low = low;
  f.high = high;
  f.taps.resize(n);
  for (std::size_t i = 0; i < n; ++i) f.taps[i] = upper[i] - lower[i];
  return f;
}

FirFilter design_fir_lowpass(double cutoff, double transition, double fs) {
  if (!(fs > 0.0) || !(cutoff > 0.0) || !(cutoff < fs / 2.0) || !(transition > 0.0))
    throw Error(ErrorCode::InvalidBand, "low-pass needs 0 < cutoff < fs/2");
  FirFilter f;
  f.fs = fs;
  f.kind = FilterKind::LowPass;
  f.high = cutoff;
  f.taps = lowpass_taps(cutoff, fs, hamming_tap_count(fs, transition));
  return f;
}

FirFilter design_fir_notch(double f0, double bw, double fs) {
  const double lo = f0 - bw / 2.0;
  const double hi = f0 + bw / 2.0;
  if (!(fs > 0.0) || !(bw > 0.0) || !(lo > 0.0) || !(hi < fs / 2.0))
    throw Error(ErrorCode::InvalidBand, "notch needs 0 < f0 - bw/2 and f0 + bw/2 < fs/2");
  const double tb = std::min({bw / 2.0, lo, fs / 2.0 - hi});
  const std::size_t n = hamming_tap_count(fs, tb);
  auto upper = lowpass_taps(hi + tb / 2.0, fs, n);
  auto lower = lowpass_taps(lo - tb / 2.0, fs, n);

  FirFilter f;
  f.fs = fs;
  f.kind = FilterKind::BandStop;
  f.low = lo;
  f.high = hi;
  f.taps.resize(n);
  for (std::size_t i = 0; i < n; ++i) f.taps[i] = -(upper[i] - lower[i]);
  f.taps[(n - 1) / 2] += 1.0;
  return f;
}

double frequency_response(const FirFilter& filt, double freq_hz) {
  // symmetric taps: H(f) = e^{-i w M} * sum h[n] cos(w (n - M))
  const double m = static_cast<double>(filt.group_delay());
  const double w = 2.0 * kPi * freq_hz / filt.fs;
  double acc = 0.0;
  for (std::size_t n = 0; n < filt.taps.size(); ++n)
    acc += filt.taps[n] * std::cos(w * (static_cast<double>(n) - m));
  return std::abs(acc);
}

std::vector<double> filter_channel(std::span<const double> x, std::span<const double> taps) {
  const auto t_len = static_cast<std::ptrdiff_t>(x.size());
  const auto n_taps = static_cast<std::ptrdiff_t>(taps.size());
  const std::ptrdiff_t m = (n_taps - 1) / 2;
  std::vector<double> y(x.size(), 0.0);
  for (std::ptrdiff_t t = 0; t < t_len; ++t) {
    // y[t] = sum_n h[n] x[t + m - n], restricted to valid x indices
    const std::ptrdiff_t n_lo = std::max<std::ptrdiff_t>(0, t + m - (t_len - 1));
    const std::ptrdiff_t n_hi = std::min<std::ptrdiff_t>(n_taps - 1, t + m);
    double acc = 0.0;
    const double* xp = x.data() + (t + m - n_lo);
    for (std::ptrdiff_t n = n_lo; n <= n_hi; ++n, --xp) acc += taps[static_cast<std::size_t>(n)] * *xp;
    y[static_cast<std::size_t>(t)] = acc;
  }
  return y;
}

Recording apply_fir(const Recording& rec, const FirFilter& filt) {
  if (std::abs(filt.fs - rec.fs) > 1e-9 * rec.fs)
    throw Error(ErrorCode::RateMismatch,
                "filter designed for " + num(filt.fs) + " Hz, recording is " + num(rec.fs) + " Hz");
  Matrix out(rec.n_channels(), rec.n_samples());
  parallel_for(rec.n_channels(), [&](std::size_t ch) {
    auto y = filter_channel(rec.data.row(ch), filt.taps);
    std::copy(y.begin(), y.end(), out.row(ch).begin());
  });
  std::string step;
  switch (filt.kind) {
    case FilterKind::LowPass: step = "lowpass(cutoff=" + num(filt.high); break;
    case FilterKind::BandPass: step = "bandpass(low=" + num(filt.low) + ",high=" + num(filt.high); break;
    case FilterKind::BandStop: step = "bandstop(low=" + num(filt.low) + ",high=" + num(filt.high); break;
  }
  step += ",taps=" + std::to_string(filt.taps.size()) + ")";
  return with_data(rec, std::move(out), std::move(step));
}

Recording bandpass(const Recording& rec, double low, double high) {
  return apply_fir(rec, design_fir_bandpass(low, high, rec.fs));
}

Recording notch(const Recording& rec, double f0, double bw) {
  auto out = apply_fir(rec, design_fir_notch(f0, bw, rec.fs));
  out.provenance.back() = "notch(f0=" + num(f0) + ",bw=" + num(bw) + ")";
  return out;
}

Recording zscore_channels(const Recording& rec) {
  const std::size_t t_len = rec.n_samples();
  Matrix out(rec.n_channels(), t_len);
  for (std::size_t ch = 0; ch < rec.n_channels(); ++ch) {
    auto x = rec.data.row(ch);
    const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(t_len);
    double ss = 0.0;
    for (double v : x) ss += (v - mean) * (v - mean);
    const double sample_sd = t_len > 1 ? std::sqrt(ss / static_cast<double>(t_len - 1)) : 0.0;
    if (!(sample_sd > 1e-12))
      throw Error(ErrorCode::DegenerateChannel, "channel " + rec.montage.names()[ch] + " is constant");
    const double sd = std::sqrt(ss / static_cast<double>(t_len));
    auto y = out.row(ch);
    for (std::size_t t = 0; t < t_len; ++t) y[t] = (x[t] - mean) / sd;
  }
  return with_data(rec, std::move(out), "zscore");
}

Recording average_reference(const Recording& rec) {
  const std::size_t k = rec.n_channels();
  Matrix out = rec.data;
  for (std::size_t t = 0; t < rec.n_samples(); ++t) {
    double mean = 0.0;
    for (std::size_t ch = 0; ch < k; ++ch) mean += out(ch, t);
    mean /= static_cast<double>(k);
    for (std::size_t ch = 0; ch < k; ++ch) out(ch, t) -= mean;
  }
  return with_data(rec, std::move(out), "average_reference");
}

Recording surface_laplacian(const Recording& rec) {
  const std::size_t k = rec.n_channels();
  if (k < 5) throw Error(ErrorCode::InsufficientChannels, "Hjorth Laplacian needs K >= 5");
  if (!rec.montage.has_positions())
    throw Error(ErrorCode::InvalidConfig, "surface Laplacian needs electrode positions");
  const auto& pos = rec.montage.positions();

  constexpr std::size_t kNeighbors = 4;
  std::vector<std::vector<std::pair<std::size_t, double>>> weights(k);
  for (std::size_t i = 0; i < k; ++i) {
    std::vector<std::pair<double, std::size_t>> dist;
    for (std::size_t j = 0; j < k; ++j) {
      if (j == i) continue;
      double c = pos[i][0] * pos[j][0] + pos[i][1] * pos[j][1] + pos[i][2] * pos[j][2];
      dist.emplace_back(std::acos(std::clamp(c, -1.0, 1.0)), j);
    }
    std::sort(dist.begin(), dist.end());
    double total = 0.0;
    for (std::size_t n = 0; n < kNeighbors; ++n) total += 1.0 / std::max(dist[n].first, 1e-12);
    for (std::size_t n = 0; n < kNeighbors; ++n)
      weights[i].emplace_back(dist[n].second, (1.0 / std::max(dist[n].first, 1e-12)) / total);
  }

  Matrix out(k, rec.n_samples());
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t t = 0; t < rec.n_samples(); ++t) {
      double v = rec.data(i, t);
      for (const auto& [j, w] : weights[i]) v -= w * rec.data(j, t);
      out(i, t) = v;
    }
  }
  return with_data(rec, std::move(out), "surface_laplacian(hjorth,n=4)");
}

Recording crop(const Recording& rec, double t_start, double t_end) {
  const double dur = rec.duration();
  if (!(t_start >= 0.0) || !(t_end > t_start) || t_end > dur + 1e-9)
    throw Error(ErrorCode::EmptyCrop, "crop bounds [" + num(t_start) + ", " + num(t_end) +
                                          ") outside [0, " + num(dur) + "]");
  const auto i0 = static_cast<std::size_t>(std::llround(t_start * rec.fs));
  const auto i1 = std::min(static_cast<std::size_t>(std::llround(t_end * rec.fs)), rec.n_samples());
  if (i1 <= i0) throw Error(ErrorCode::EmptyCrop, "crop keeps no samples");
  Matrix out(rec.n_channels(), i1 - i0);
  for (std::size_t ch = 0; ch < rec.n_channels(); ++ch) {
    auto src = rec.data.row(ch);
    std::copy(src.begin() + static_cast<std::ptrdiff_t>(i0), src.begin() + static_cast<std::ptrdiff_t>(i1),
              out.row(ch).begin());
  }
  return with_data(rec, std::move(out), "crop(start=" + num(t_start) + ",end=" + num(t_end) + ")");
}

Recording resample(const Recording& rec, double new_fs) {
  if (!(new_fs > 0.0) || !std::isfinite(new_fs))
    throw Error(ErrorCode::InvalidRate, "target rate must be > 0");
  if (new_fs == rec.fs) return with_data(rec, rec.data, "resample(bypass)");

  // rates are rationalized on a millihertz grid
  const double a_f = rec.fs * 1000.0;
  const double b_f = new_fs * 1000.0;
  const auto a = static_cast<long long>(std::llround(a_f));
  const auto b = static_cast<long long>(std::llround(b_f));
  if (std::abs(a_f - static_cast<double>(a)) > 1e-6 || std::abs(b_f - static_cast<double>(b)) > 1e-6)
    throw Error(ErrorCode::InvalidRate, "rates must be multiples of 1 mHz");
  const long long g = std::gcd(a, b);
  const auto up = static_cast<std::size_t>(b / g);
  const auto down = static_cast<std::size_t>(a / g);
  if (up > 4096 || down > 4096)
    throw Error(ErrorCode::InvalidRate, "resampling ratio too complex: " + std::to_string(up) + "/" +
                                            std::to_string(down));

  const double base = std::min(rec.fs, new_fs);
  const double fs_up = rec.fs * static_cast<double>(up);
  auto h = lowpass_taps(0.45 * base, fs_up, hamming_tap_count(fs_up, 0.1 * base));
  const auto n_taps = static_cast<std::ptrdiff_t>(h.size());
  const std::ptrdiff_t delay = (n_taps - 1) / 2;

  const std::size_t t_in = rec.n_samples();
  const auto t_out = static_cast<std::size_t>(
      std::llround(static_cast<double>(t_in) * new_fs / rec.fs));
  if (t_out == 0) throw Error(ErrorCode::InvalidRate, "resampling leaves no samples");

  Matrix out(rec.n_channels(), t_out);
  const auto up_i = static_cast<std::ptrdiff_t>(up);
  parallel_for(rec.n_channels(), [&](std::size_t ch) {
    auto x = rec.data.row(ch);
    auto y = out.row(ch);
    for (std::size_t m = 0; m < t_out; ++m) {
      // upsampled index j = m*down + delay - k must be a multiple of up
      const std::ptrdiff_t j0 = static_cast<std::ptrdiff_t>(m * down) + delay;
      double acc = 0.0;
      for (std::ptrdiff_t k = j0 % up_i; k < n_taps; k += up_i) {
        const std::ptrdiff_t j = j0 - k;
        if (j < 0) break;
        const std::ptrdiff_t src = j / up_i;
        if (src < static_cast<std::ptrdiff_t>(t_in)) acc += h[static_cast<std::size_t>(k)] * x[static_cast<std::size_t>(src)];
      }
      y[m] = acc * static_cast<double>(up);
    }
  });
  Recording res = with_data(rec, std::move(out), "resample(from=" + num(rec.fs) + ",to=" + num(new_fs) + ")");
  res.fs = new_fs;
  return res;
}

}  // namespace msaf
