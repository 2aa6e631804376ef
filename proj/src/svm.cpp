#include <algorithm>
#include <cmath>
#include <limits>

#include "model_common.hpp"
#include "msaf/models.hpp"
#include "msaf/parallel.hpp"

namespace msaf {

namespace {

constexpr double kTau = 1e-12;

double rbf(std::span<const double> a, std::span<const double> b, double gamma) {
  double d2 = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    d2 += d * d;
  }
  return std::exp(-gamma * d2);
}

class KernelRows {
 public:
  KernelRows(const Matrix& z, double gamma, std::size_t cache_mb) : z_(z), gamma_(gamma) {
    const std::size_t n = z.rows();
    const double bytes = static_cast<double>(n) * static_cast<double>(n) * sizeof(double);
    if (bytes <= static_cast<double>(cache_mb) * 1024.0 * 1024.0) {
      full_ = Matrix(n, n);
      parallel_for(n, [&](std::size_t i) {
        for (std::size_t j = 0; j < n; ++j) full_(i, j) = rbf(z.row(i), z.row(j), gamma);
      });
      cached_ = true;
    }
  }

  // Row i of the kernel matrix; `buf` backs it when nothing is cached.
  std::span<const double> row(std::size_t i, std::vector<double>& buf) const {
    if (cached_) return full_.row(i);
    buf.resize(z_.rows());
    for (std::size_t j = 0; j < z_.rows(); ++j) buf[j] = rbf(z_.row(i), z_.row(j), gamma_);
    return buf;
  }

 private:
  const Matrix& z_;
  double gamma_;
  Matrix full_;
  bool cached_ = false;
};

struct DualSolution {
  std::vector<double> alpha;
  double rho = 0.0;
};

// SMO on  min 1/2 a'Qa - e'a,  0 <= a_t <= C_t,  y'a = 0,  Q_ts = y_t y_s K_ts,
// with the maximal-violating-pair working set.
DualSolution solve_dual(const KernelRows& kernel, const std::vector<double>& yb, const std::vector<double>& cap,
                        double tol, std::size_t max_iter) {
  const std::size_t n = yb.size();
  std::vector<double> alpha(n, 0.0), grad(n, -1.0);
  std::vector<double> buf_i, buf_j;
  auto upper = [&](std::size_t t) { return alpha[t] >= cap[t]; };
  auto lower = [&](std::size_t t) { return alpha[t] <= 0.0; };

  for (std::size_t iter = 0; iter < max_iter; ++iter) {
    double gmax = -std::numeric_limits<double>::infinity();
    double gmin = std::numeric_limits<double>::infinity();
    std::size_t i = n, j = n;
    for (std::size_t t = 0; t < n; ++t) {
      const double v = -yb[t] * grad[t];
      const bool in_up = yb[t] > 0 ? !upper(t) : !lower(t);
      const bool in_low = yb[t] > 0 ? !lower(t) : !upper(t);
      if (in_up && v > gmax) {
        gmax = v;
        i = t;
      }
      if (in_low && v < gmin) {
        gmin = v;
        j = t;
      }
    }
    if (i == n || j == n || gmax - gmin < tol) break;

    auto ki = kernel.row(i, buf_i);
    auto kj = kernel.row(j, buf_j);
    const double qij = yb[i] * yb[j] * ki[j];
    const double ci = cap[i], cj = cap[j];
    const double old_i = alpha[i], old_j = alpha[j];
    if (yb[i] != yb[j]) {
      double quad = ki[i] + kj[j] + 2.0 * qij;
      if (quad <= 0.0) quad = kTau;
      const double delta = (-grad[i] - grad[j]) / quad;
      const double diff = alpha[i] - alpha[j];
      alpha[i] += delta;
      alpha[j] += delta;
      if (diff > 0) {
        if (alpha[j] < 0) {
          alpha[j] = 0;
          alpha[i] = diff;
        }
      } else if (alpha[i] < 0) {
        alpha[i] = 0;
        alpha[j] = -diff;
      }
      if (diff > ci - cj) {
        if (alpha[i] > ci) {
          alpha[i] = ci;
          alpha[j] = ci - diff;
        }
      } else if (alpha[j] > cj) {
        alpha[j] = cj;
        alpha[i] = cj + diff;
      }
    } else {
      double quad = ki[i] + kj[j] - 2.0 * qij;
      if (quad <= 0.0) quad = kTau;
      const double delta = (grad[i] - grad[j]) / quad;
      const double sum = alpha[i] + alpha[j];
      alpha[i] -= delta;
      alpha[j] += delta;
      if (sum > ci) {
        if (alpha[i] > ci) {
          alpha[i] = ci;
          alpha[j] = sum - ci;
        }
      } else if (alpha[j] < 0) {
        alpha[j] = 0;
        alpha[i] = sum;
      }
      if (sum > cj) {
        if (alpha[j] > cj) {
          alpha[j] = cj;
          alpha[i] = sum - cj;
        }
      } else if (alpha[i] < 0) {
        alpha[i] = 0;
        alpha[j] = sum;
      }
    }
    const double di = alpha[i] - old_i, dj = alpha[j] - old_j;
    for (std::size_t t = 0; t < n; ++t) grad[t] += yb[t] * (yb[i] * ki[t] * di + yb[j] * kj[t] * dj);
  }

  double ub = std::numeric_limits<double>::infinity(), lb = -ub, sum = 0.0;
  std::size_t n_free = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const double yg = yb[t] * grad[t];
    if (upper(t)) {
      if (yb[t] < 0) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else if (lower(t)) {
      if (yb[t] > 0) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else {
      ++n_free;
      sum += yg;
    }
  }
  DualSolution sol;
  sol.rho = n_free > 0 ? sum / static_cast<double>(n_free) : (ub + lb) / 2.0;
  sol.alpha = std::move(alpha);
  return sol;
}

}  // namespace

Scaler Scaler::fit(const Matrix& x) {
  Scaler s;
  s.mean.assign(x.cols(), 0.0);
  s.scale.assign(x.cols(), 1.0);
  const double n = static_cast<double>(x.rows());
  for (std::size_t c = 0; c < x.cols(); ++c) {
    double m = 0.0;
    for (std::size_t r = 0; r < x.rows(); ++r) m += x(r, c);
    m /= n;
    double ss = 0.0;
    for (std::size_t r = 0; r < x.rows(); ++r) ss += (x(r, c) - m) * (x(r, c) - m);
    const double sd = std::sqrt(ss / n);
    s.mean[c] = m;
    s.scale[c] = sd > 0.0 ? sd : 1.0;
  }
  return s;
}

Matrix Scaler::apply(const Matrix& x) const {
  Matrix out(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < x.cols(); ++c) out(r, c) = (x(r, c) - mean[c]) / scale[c];
  return out;
}

double svm_decision(const BinarySvm& m, double gamma_rbf, std::span<const double> z) {
  if (!m.trained) return -1e30;
  double f = m.bias;
  for (std::size_t s = 0; s < m.coef.size(); ++s) f += m.coef[s] * rbf(m.support.row(s), z, gamma_rbf);
  return f;
}

SvmOvrModel train_svm_ovr(const Matrix& x, std::span<const int> y, std::size_t n_classes, const SvmParams& p) {
  const auto counts = detail::check_training_input(x, y, n_classes);
  if (!(p.c > 0.0) || !(p.gamma_rbf > 0.0) || !(p.tol > 0.0))
    throw Error(ErrorCode::InvalidConfig, "SVM needs C > 0, gamma > 0, tol > 0");
  const auto weights = detail::class_weights(counts, p.balanced);

  SvmOvrModel model;
  model.params = p;
  model.n_classes = n_classes;
  model.n_features = x.cols();
  model.scaler = Scaler::fit(x);
  const Matrix z = model.scaler.apply(x);
  const KernelRows kernel(z, p.gamma_rbf, p.cache_mb);

  std::vector<double> cap(y.size());
  for (std::size_t t = 0; t < y.size(); ++t) cap[t] = p.c * weights[static_cast<std::size_t>(y[t])];

  model.machines.resize(n_classes);
  parallel_for(n_classes, [&](std::size_t c) {
    if (counts[c] == 0) return;
    std::vector<double> yb(y.size());
    for (std::size_t t = 0; t < y.size(); ++t) yb[t] = static_cast<std::size_t>(y[t]) == c ? 1.0 : -1.0;
    auto sol = solve_dual(kernel, yb, cap, p.tol, p.max_iter);
    BinarySvm m;
    m.trained = true;
    m.bias = -sol.rho;
    for (std::size_t t = 0; t < y.size(); ++t) {
      if (sol.alpha[t] <= 0.0) continue;
      m.support.append_row(z.row(t));
      m.alpha.push_back(sol.alpha[t]);
      m.coef.push_back(sol.alpha[t] * yb[t]);
    }
    if (m.coef.empty()) m.support = Matrix(0, z.cols());
    model.machines[c] = std::move(m);
  });
  return model;
}

}  // namespace msaf
