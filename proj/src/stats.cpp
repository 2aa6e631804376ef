#include "msaf/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "msaf/error.hpp"

namespace msaf {

namespace {

double poly(const double* c, int n, double x) {
  double r = c[0];
  if (n > 1) {
    double p = x * c[n - 1];
    for (int j = n - 2; j > 0; --j) p = (p + c[j]) * x;
    r += p;
  }
  return r;
}

struct RankSummary {
  std::vector<double> rank_sum;
  std::vector<std::size_t> sizes;
  std::size_t n = 0;
  double tie_sum = 0.0;  // sum of t^3 - t over tie groups
};

RankSummary rank_groups(const std::vector<std::vector<double>>& groups) {
  if (groups.size() < 2) throw Error(ErrorCode::TooFewGroups, "rank tests need at least 2 groups");
  RankSummary s;
  std::vector<double> pooled;
  for (const auto& g : groups) {
    if (g.empty()) throw Error(ErrorCode::DegenerateData, "empty group");
    for (double v : g)
      if (!std::isfinite(v)) throw Error(ErrorCode::NonFinite, "non-finite value in group");
    s.sizes.push_back(g.size());
    pooled.insert(pooled.end(), g.begin(), g.end());
  }
  s.n = pooled.size();
  if (s.n < 3) throw Error(ErrorCode::DegenerateData, "rank tests need N >= 3");
  const auto ranks = midranks(pooled);
  std::size_t pos = 0;
  for (const auto& g : groups) {
    double r = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) r += ranks[pos++];
    s.rank_sum.push_back(r);
  }
  std::vector<double> sorted = pooled;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
    const double t = static_cast<double>(j - i);
    s.tie_sum += t * t * t - t;
    i = j;
  }
  const double nd = static_cast<double>(s.n);
  if (s.tie_sum >= nd * nd * nd - nd) throw Error(ErrorCode::DegenerateData, "all values are equal");
  return s;
}

}  // namespace

std::vector<double> midranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && values[order[j]] == values[order[i]]) ++j;
    const double r = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = r;
    i = j;
  }
  return ranks;
}

double normal_sf(double z) { return 0.5 * std::erfc(z / std::numbers::sqrt2); }

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    if (p == 0.0) return -std::numeric_limits<double>::infinity();
    if (p == 1.0) return std::numeric_limits<double>::infinity();
    throw Error(ErrorCode::InvalidDomain, "normal quantile needs p in [0, 1]");
  }
  const double q = p - 0.5;
  if (std::abs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    return q *
           (((((((r * 2509.0809287301226727 + 33430.575583588128105) * r + 67265.770927008700853) * r +
                45921.953931549871457) * r + 13731.693765509461125) * r + 1971.5909503065514427) * r +
             133.14166789178437745) * r + 3.387132872796366608) /
           (((((((r * 5226.495278852545925 + 28729.085735721942674) * r + 39307.89580009271061) * r +
                21213.794301586595867) * r + 5394.1960214247511077) * r + 687.1870074920579083) * r +
             42.313330701600911252) * r + 1.0);
  }
  double r = q < 0 ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double val;
  if (r <= 5.0) {
    r -= 1.6;
    val = (((((((r * 7.7454501427834140764e-4 + 0.0227238449892691845833) * r + 0.24178072517745061177) * r +
               1.27045825245236838258) * r + 3.64784832476320460504) * r + 5.7694972214606914055) * r +
            4.6303378461565452959) * r + 1.42343711074968357734) /
          (((((((r * 1.05075007164441684324e-9 + 5.475938084995344946e-4) * r + 0.0151986665636164571966) * r +
               0.14810397642748007459) * r + 0.68976733498510000455) * r + 1.6763848301838038494) * r +
            2.05319162663775882187) * r + 1.0);
  } else {
    r -= 5.0;
    val = (((((((r * 2.01033439929228813265e-7 + 2.71155556874348757815e-5) * r + 0.0012426609473880784386) * r +
               0.026532189526576123093) * r + 0.29656057182850489123) * r + 1.7848265399172913358) * r +
            5.4637849111641143699) * r + 6.6579046435011037772) /
          (((((((r * 2.04426310338993978564e-15 + 1.4215117583164458887e-7) * r + 1.8463183175100546818e-5) * r +
               7.868691311456132591e-4) * r + 0.0148753612908506148525) * r + 0.13692988092273580531) * r +
            0.59983220655588793769) * r + 1.0);
  }
  return q < 0.0 ? -val : val;
}

double regularized_gamma_q(double a, double x) {
  if (!(a > 0.0) || x < 0.0 || std::isnan(x)) throw Error(ErrorCode::InvalidDomain, "incomplete gamma needs a > 0, x >= 0");
  if (x == 0.0) return 1.0;
  if (std::isinf(x)) return 0.0;
  const double log_prefix = a * std::log(x) - x - std::lgamma(a);
  if (x < a + 1.0) {
    // series for P(a, x)
    double term = 1.0 / a, sum = term;
    for (int n = 1; n < 100000; ++n) {
      term *= x / (a + n);
      sum += term;
      if (std::abs(term) < std::abs(sum) * 1e-17) break;
    }
    return std::clamp(1.0 - sum * std::exp(log_prefix), 0.0, 1.0);
  }
  // modified Lentz continued fraction for Q(a, x)
  constexpr double tiny = 1e-300;
  double b = x + 1.0 - a, c = 1.0 / tiny, d = 1.0 / b, h = d;
  for (int i = 1; i < 100000; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-16) break;
  }
  return std::clamp(std::exp(log_prefix) * h, 0.0, 1.0);
}

double chi_square_sf(double x, double df) {
  if (!(df > 0.0) || x < 0.0 || std::isnan(x))
    throw Error(ErrorCode::InvalidDomain, "chi-square tail needs x >= 0 and df > 0");
  return regularized_gamma_q(df / 2.0, x / 2.0);
}

TestResult shapiro_wilk(std::span<const double> data) {
  const std::size_t n = data.size();
  if (n < 3 || n > 5000) throw Error(ErrorCode::SampleSizeOutOfRange, "Shapiro-Wilk needs 3 <= n <= 5000");
  for (double v : data)
    if (!std::isfinite(v)) throw Error(ErrorCode::NonFinite, "non-finite value in sample");
  std::vector<double> x(data.begin(), data.end());
  std::sort(x.begin(), x.end());
  if (!(x.back() - x.front() > 0.0)) throw Error(ErrorCode::ConstantSample, "all values are equal");

  static const double c1[6] = {0.0, 0.221157, -0.147981, -2.07119, 4.434685, -2.706056};
  static const double c2[6] = {0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633};
  static const double c3[4] = {0.544, -0.39978, 0.025054, -6.714e-4};
  static const double c4[4] = {1.3822, -0.77857, 0.062767, -0.0020322};
  static const double c5[4] = {-1.5861, -0.31082, -0.083751, 0.0038915};
  static const double c6[3] = {-0.4803, -0.082676, 0.0030302};
  static const double g[2] = {-2.273, 0.459};

  const double an = static_cast<double>(n);
  const std::size_t half = n / 2;
  std::vector<double> a(half + 1, 0.0);  // 1-based half coefficients
  if (n == 3) {
    a[1] = std::sqrt(0.5);
  } else {
    std::vector<double> m(half + 1);
    double summ2 = 0.0;
    for (std::size_t i = 1; i <= half; ++i) {
      m[i] = normal_quantile((static_cast<double>(i) - 0.375) / (an + 0.25));
      summ2 += m[i] * m[i];
    }
    summ2 *= 2.0;
    const double ssumm2 = std::sqrt(summ2);
    const double rsn = 1.0 / std::sqrt(an);
    const double a1 = poly(c1, 6, rsn) - m[1] / ssumm2;
    std::size_t first;
    double fac;
    if (n > 5) {
      first = 3;
      const double a2 = -m[2] / ssumm2 + poly(c2, 6, rsn);
      fac = std::sqrt((summ2 - 2.0 * m[1] * m[1] - 2.0 * m[2] * m[2]) / (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2));
      a[2] = a2;
    } else {
      first = 2;
      fac = std::sqrt((summ2 - 2.0 * m[1] * m[1]) / (1.0 - 2.0 * a1 * a1));
    }
    a[1] = a1;
    for (std::size_t i = first; i <= half; ++i) a[i] = -m[i] / fac;
  }

  // W as the squared correlation between the ordered sample and the full
  // antisymmetric coefficient vector.
  std::vector<double> full(n, 0.0);
  for (std::size_t i = 1; i <= half; ++i) {
    full[i - 1] = -a[i];
    full[n - i] = a[i];
  }
  const double xbar = std::accumulate(x.begin(), x.end(), 0.0) / an;
  const double abar = std::accumulate(full.begin(), full.end(), 0.0) / an;
  double sax = 0.0, saa = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double da = full[i] - abar, dx = x[i] - xbar;
    sax += da * dx;
    saa += da * da;
    sxx += dx * dx;
  }
  const double w = std::min(1.0, sax * sax / (saa * sxx));

  TestResult res;
  res.method = "shapiro-wilk";
  res.statistic = w;
  res.group_sizes = {n};
  if (n == 3) {
    const double p = 6.0 / std::numbers::pi * (std::asin(std::sqrt(w)) - std::numbers::pi / 3.0);
    res.p_value = std::clamp(p, 0.0, 1.0);
    return res;
  }
  if (w >= 1.0) {
    res.p_value = 1.0;
    return res;
  }
  double w1 = std::log(1.0 - w);
  double mean, sd;
  if (n <= 11) {
    const double gamma = poly(g, 2, an);
    if (w1 >= gamma) {
      res.p_value = 1e-99;
      return res;
    }
    w1 = -std::log(gamma - w1);
    mean = poly(c3, 4, an);
    sd = std::exp(poly(c4, 4, an));
  } else {
    const double ln = std::log(an);
    mean = poly(c5, 4, ln);
    sd = std::exp(poly(c6, 3, ln));
  }
  res.p_value = std::clamp(normal_sf((w1 - mean) / sd), 0.0, 1.0);
  return res;
}

TestResult kruskal_wallis(const std::vector<std::vector<double>>& groups) {
  const auto s = rank_groups(groups);
  const double n = static_cast<double>(s.n);
  double sum = 0.0;
  for (std::size_t g = 0; g < groups.size(); ++g) sum += s.rank_sum[g] * s.rank_sum[g] / static_cast<double>(s.sizes[g]);
  // One final division keeps H correctly rounded whenever the numerator is exact,
  // e.g. tie-free ranks with rank sums divisible by the group sizes.
  double h = (12.0 * sum - 3.0 * n * (n + 1.0) * (n + 1.0)) / (n * (n + 1.0));
  if (s.tie_sum > 0.0) h /= 1.0 - s.tie_sum / (n * n * n - n);
  h = std::max(h, 0.0);

  TestResult res;
  res.method = "kruskal-wallis";
  res.statistic = h;
  res.df = static_cast<double>(groups.size() - 1);
  res.p_value = chi_square_sf(h, res.df);
  res.group_sizes = s.sizes;
  res.tie_corrected = true;
  res.had_ties = s.tie_sum > 0.0;
  return res;
}

std::vector<PairwiseResult> dunn_posthoc(const std::vector<std::vector<double>>& groups) {
  const auto s = rank_groups(groups);
  const double n = static_cast<double>(s.n);
  const double k = static_cast<double>(groups.size());
  const double var = n * (n + 1.0) / 12.0 - s.tie_sum / (12.0 * (n - 1.0));
  const double n_pairs = k * (k - 1.0) / 2.0;
  std::vector<PairwiseResult> out;
  for (std::size_t a = 0; a < groups.size(); ++a) {
    for (std::size_t b = a + 1; b < groups.size(); ++b) {
      const double na = static_cast<double>(s.sizes[a]), nb = static_cast<double>(s.sizes[b]);
      const double diff = s.rank_sum[a] / na - s.rank_sum[b] / nb;
      PairwiseResult r;
      r.group_a = a;
      r.group_b = b;
      r.z = diff / std::sqrt(var * (1.0 / na + 1.0 / nb));
      r.p_value = std::min(1.0, 2.0 * normal_sf(std::abs(r.z)));
      r.p_adjusted = std::min(1.0, r.p_value * n_pairs);
      out.push_back(r);
    }
  }
  return out;
}

}  // namespace msaf
