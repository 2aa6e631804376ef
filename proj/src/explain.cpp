#include "msaf/explain.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "msaf/eeg_io.hpp"
#include "msaf/error.hpp"
#include "msaf/parallel.hpp"
#include "msaf/random.hpp"

namespace msaf {

using nlohmann::json;

namespace {

constexpr std::size_t kBatchRows = 1 << 16;

void check_inputs(const Matrix& background, std::span<const double> x) {
  if (background.rows() == 0) throw Error(ErrorCode::EmptyBackground, "background set is empty");
  if (background.cols() != x.size())
    throw Error(ErrorCode::DimensionMismatch, "background and instance differ in feature count");
}

double binomial(std::size_t n, std::size_t k) {
  double r = 1.0;
  for (std::size_t i = 1; i <= k; ++i) r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
  return r;
}

std::vector<double> column_means(const Matrix& m) {
  std::vector<double> out(m.cols(), 0.0);
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) out[c] += m(r, c);
  for (double& v : out) v /= static_cast<double>(m.rows());
  return out;
}

// v(mask) for every mask, averaged over the background; one row per mask.
Matrix coalition_values(const ScoreFn& f, const Matrix& background, std::span<const double> x,
                        const std::vector<std::uint64_t>& masks) {
  const std::size_t d = x.size();
  const std::size_t nb = background.rows();
  const std::size_t per_batch = std::max<std::size_t>(1, kBatchRows / nb);
  const std::size_t n_batches = (masks.size() + per_batch - 1) / per_batch;
  std::vector<Matrix> parts(n_batches);
  parallel_for(n_batches, [&](std::size_t bi) {
    const std::size_t lo = bi * per_batch;
    const std::size_t hi = std::min(masks.size(), lo + per_batch);
    Matrix rows((hi - lo) * nb, d);
    for (std::size_t m = lo; m < hi; ++m) {
      for (std::size_t b = 0; b < nb; ++b) {
        auto dst = rows.row((m - lo) * nb + b);
        auto bg = background.row(b);
        for (std::size_t i = 0; i < d; ++i) dst[i] = (masks[m] >> i) & 1U ? x[i] : bg[i];
      }
    }
    const Matrix scores = f(rows);
    Matrix v(hi - lo, scores.cols());
    for (std::size_t m = 0; m < hi - lo; ++m) {
      for (std::size_t b = 0; b < nb; ++b)
        for (std::size_t c = 0; c < scores.cols(); ++c) v(m, c) += scores(m * nb + b, c);
      for (std::size_t c = 0; c < scores.cols(); ++c) v(m, c) /= static_cast<double>(nb);
    }
    parts[bi] = std::move(v);
  });
  Matrix out;
  for (const auto& p : parts)
    for (std::size_t r = 0; r < p.rows(); ++r) out.append_row(p.row(r));
  return out;
}

// Solves A z = b in place by Gaussian elimination with partial pivoting.
// Returns false when a pivot is negligible relative to the matrix scale.
bool solve_linear(Matrix a, std::vector<std::vector<double>>& rhs) {
  const std::size_t n = a.rows();
  double scale = 0.0;
  for (double v : a.data()) scale = std::max(scale, std::abs(v));
  if (!(scale > 0.0)) return n == 0;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(a(r, col)) > std::abs(a(piv, col))) piv = r;
    if (std::abs(a(piv, col)) < 1e-12 * scale) return false;
    if (piv != col) {
      for (std::size_t c = 0; c < n; ++c) std::swap(a(col, c), a(piv, c));
      for (auto& b : rhs) std::swap(b[col], b[piv]);
    }
    for (std::size_t r = col + 1; r < n; ++r) {
      const double fac = a(r, col) / a(col, col);
      if (fac == 0.0) continue;
      for (std::size_t c = col; c < n; ++c) a(r, c) -= fac * a(col, c);
      for (auto& b : rhs) b[r] -= fac * b[col];
    }
  }
  for (auto& b : rhs) {
    for (std::size_t r = n; r-- > 0;) {
      double s = b[r];
      for (std::size_t c = r + 1; c < n; ++c) s -= a(r, c) * b[c];
      b[r] = s / a(r, r);
    }
  }
  return true;
}

class InterventionalTreeShap {
 public:
  InterventionalTreeShap(const Tree& tree, std::size_t value_index, double scale, bool normalize, std::size_t d)
      : tree_(tree), index_(value_index), scale_(scale), normalize_(normalize), state_(d, 0), fact_(d + 1, 1.0) {
    for (std::size_t i = 1; i <= d; ++i) fact_[i] = fact_[i - 1] * static_cast<double>(i);
  }

  void run(std::span<const double> x, std::span<const double> b, std::vector<double>& phi) {
    x_ = x;
    b_ = b;
    phi_ = &phi;
    visit(0);
  }

 private:
  double leaf_value(const TreeNode& node) const {
    double v = node.value[index_];
    if (normalize_) v /= std::accumulate(node.value.begin(), node.value.end(), 0.0);
    return v * scale_;
  }

  // A leaf reached with x-only features A and b-only features B pays out on
  // coalitions S with A in S and S disjoint from B.
  void visit(std::size_t id) {
    const TreeNode& node = tree_.nodes[id];
    if (node.feature < 0) {
      const std::size_t a = in_a_.size(), c = in_b_.size();
      if (a + c == 0) return;
      const double v = leaf_value(node);
      if (a > 0) {
        const double w = v * fact_[a - 1] * fact_[c] / fact_[a + c];
        for (std::size_t f : in_a_) (*phi_)[f] += w;
      }
      if (c > 0) {
        const double w = v * fact_[a] * fact_[c - 1] / fact_[a + c];
        for (std::size_t f : in_b_) (*phi_)[f] -= w;
      }
      return;
    }
    const auto f = static_cast<std::size_t>(node.feature);
    const auto x_next = static_cast<std::size_t>(x_[f] <= node.threshold ? node.left : node.right);
    const auto b_next = static_cast<std::size_t>(b_[f] <= node.threshold ? node.left : node.right);
    if (x_next == b_next || state_[f] == 1) {
      visit(x_next);
    } else if (state_[f] == 2) {
      visit(b_next);
    } else {
      state_[f] = 1;
      in_a_.push_back(f);
      visit(x_next);
      in_a_.pop_back();
      state_[f] = 2;
      in_b_.push_back(f);
      visit(b_next);
      in_b_.pop_back();
      state_[f] = 0;
    }
  }

  const Tree& tree_;
  std::size_t index_;
  double scale_;
  bool normalize_;
  std::vector<char> state_;  // 0 unseen, 1 taken from x, 2 taken from b
  std::vector<double> fact_;
  std::vector<std::size_t> in_a_, in_b_;
  std::span<const double> x_, b_;
  std::vector<double>* phi_ = nullptr;
};

}  // namespace

ScoreFn explanation_score_fn(const TrainedModel& model) {
  if (const auto* gbt = std::get_if<BoostedModel>(&model))
    return [gbt](const Matrix& x) { return boosted_margins(*gbt, x, gbt->rounds.size()); };
  return [&model](const Matrix& x) { return decision_scores(model, x); };
}

ShapResult exact_shapley(const ScoreFn& f, const Matrix& background, std::span<const double> x) {
  check_inputs(background, x);
  const std::size_t d = x.size();
  if (d > 20) throw Error(ErrorCode::TooManyFeatures, std::to_string(d) + " features exceed the 2^20 enumeration guard");
  const std::size_t n_masks = std::size_t{1} << d;
  std::vector<std::uint64_t> masks(n_masks);
  std::iota(masks.begin(), masks.end(), std::uint64_t{0});
  const Matrix v = coalition_values(f, background, x, masks);
  const std::size_t nc = v.cols();

  std::vector<double> weight(d, 0.0);
  for (std::size_t s = 0; s < d; ++s) weight[s] = 1.0 / (static_cast<double>(d) * binomial(d - 1, s));

  ShapResult res;
  res.phi = Matrix(d, nc);
  res.phi0.assign(v.row(0).begin(), v.row(0).end());
  for (std::size_t mask = 0; mask < n_masks; ++mask) {
    const auto size = static_cast<std::size_t>(std::popcount(static_cast<std::uint64_t>(mask)));
    if (size == d) continue;
    const double w = weight[size];
    for (std::size_t i = 0; i < d; ++i) {
      if ((mask >> i) & 1U) continue;
      const std::size_t with = mask | (std::size_t{1} << i);
      for (std::size_t c = 0; c < nc; ++c) res.phi(i, c) += w * (v(with, c) - v(mask, c));
    }
  }
  return res;
}

ShapResult kernel_shap(const ScoreFn& f, const Matrix& background, std::span<const double> x,
                       const KernelShapOptions& opt) {
  check_inputs(background, x);
  const std::size_t d = x.size();
  if (d > 62) throw Error(ErrorCode::TooManyFeatures, "kernel SHAP supports at most 62 features");

  ShapResult res;
  const Matrix bg_scores = f(background);
  res.phi0 = column_means(bg_scores);
  const std::size_t nc = res.phi0.size();
  Matrix xm(1, d, std::vector<double>(x.begin(), x.end()));
  const Matrix fx = f(xm);
  std::vector<double> delta(nc);
  for (std::size_t c = 0; c < nc; ++c) delta[c] = fx(0, c) - res.phi0[c];
  res.phi = Matrix(d, nc);
  if (d == 1) {
    for (std::size_t c = 0; c < nc; ++c) res.phi(0, c) = delta[c];
    return res;
  }

  std::vector<std::uint64_t> masks;
  std::vector<double> weights;
  const std::uint64_t full = (std::uint64_t{1} << d) - 1;
  const bool exhaustive = d < 63 && full - 1 <= opt.n_samples;
  if (exhaustive) {
    for (std::uint64_t m = 1; m < full; ++m) {
      const auto s = static_cast<std::size_t>(std::popcount(m));
      masks.push_back(m);
      weights.push_back(static_cast<double>(d - 1) /
                        (binomial(d, s) * static_cast<double>(s) * static_cast<double>(d - s)));
    }
  } else {
    if (opt.n_samples < d + 2) throw Error(ErrorCode::InvalidConfig, "kernel SHAP needs n_samples >= d + 2");
    std::vector<double> cdf(d - 1);
    double acc = 0.0;
    for (std::size_t s = 1; s < d; ++s) {
      acc += 1.0 / (static_cast<double>(s) * static_cast<double>(d - s));
      cdf[s - 1] = acc;
    }
    Rng rng(opt.seed);
    for (std::size_t p = 0; p < opt.n_samples / 2; ++p) {
      const double u = uniform01(rng) * acc;
      const std::size_t s = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin()) + 1;
      std::uint64_t m = 0;
      for (std::size_t i : sample_without_replacement(rng, d, std::min(s, d - 1))) m |= std::uint64_t{1} << i;
      masks.push_back(m);
      masks.push_back(full & ~m);
      weights.push_back(1.0);
      weights.push_back(1.0);
    }
  }
  const Matrix v = coalition_values(f, background, x, masks);

  // phi_{d-1} = delta - sum of the rest; regress on a_i = z_i - z_{d-1}.
  const std::size_t n_free = d - 1;
  Matrix normal(n_free, n_free);
  std::vector<std::vector<double>> rhs(nc, std::vector<double>(n_free, 0.0));
  std::vector<double> a(n_free);
  for (std::size_t k = 0; k < masks.size(); ++k) {
    const double zl = (masks[k] >> (d - 1)) & 1U ? 1.0 : 0.0;
    for (std::size_t i = 0; i < n_free; ++i) a[i] = ((masks[k] >> i) & 1U ? 1.0 : 0.0) - zl;
    const double w = weights[k];
    for (std::size_t i = 0; i < n_free; ++i) {
      if (a[i] == 0.0) continue;
      for (std::size_t j = 0; j < n_free; ++j) normal(i, j) += w * a[i] * a[j];
      for (std::size_t c = 0; c < nc; ++c) rhs[c][i] += w * a[i] * (v(k, c) - res.phi0[c] - zl * delta[c]);
    }
  }
  auto solution = rhs;
  if (!solve_linear(normal, solution)) {
    if (!(opt.ridge > 0.0)) throw Error(ErrorCode::SingularSystem, "kernel SHAP normal equations are singular");
    Matrix ridged = normal;
    for (std::size_t i = 0; i < n_free; ++i) ridged(i, i) += opt.ridge;
    solution = rhs;
    if (!solve_linear(ridged, solution))
      throw Error(ErrorCode::SingularSystem, "kernel SHAP normal equations stay singular under ridge");
    res.ridge_fallback = true;
  }
  for (std::size_t c = 0; c < nc; ++c) {
    double s = 0.0;
    for (std::size_t i = 0; i < n_free; ++i) {
      res.phi(i, c) = solution[c][i];
      s += solution[c][i];
    }
    res.phi(d - 1, c) = delta[c] - s;
  }
  return res;
}

std::vector<double> tree_shap_single(const Tree& tree, std::size_t value_index, double scale,
                                     const Matrix& background, std::span<const double> x, bool normalize_hist) {
  check_inputs(background, x);
  std::vector<double> phi(x.size(), 0.0);
  InterventionalTreeShap engine(tree, value_index, scale, normalize_hist, x.size());
  for (std::size_t b = 0; b < background.rows(); ++b) engine.run(x, background.row(b), phi);
  for (double& p : phi) p /= static_cast<double>(background.rows());
  return phi;
}

ShapResult tree_shap(const TrainedModel& model, const Matrix& background, std::span<const double> x) {
  check_inputs(background, x);
  if (std::holds_alternative<SvmOvrModel>(model))
    throw Error(ErrorCode::UnsupportedModel, "tree SHAP needs a forest or boosted model");
  if (x.size() != n_features_of(model)) throw Error(ErrorCode::DimensionMismatch, "instance width differs from model");
  const std::size_t nc = n_classes_of(model);
  const std::size_t d = x.size();
  ShapResult res;
  res.phi = Matrix(d, nc);
  res.phi0 = column_means(explanation_score_fn(model)(background));

  auto accumulate = [&](std::size_t c, const std::vector<double>& part) {
    for (std::size_t i = 0; i < d; ++i) res.phi(i, c) += part[i];
  };
  if (const auto* rf = std::get_if<ForestModel>(&model)) {
    const double scale = 1.0 / static_cast<double>(rf->trees.size());
    for (std::size_t c = 0; c < nc; ++c)
      for (const auto& t : rf->trees) accumulate(c, tree_shap_single(t, c, scale, background, x, true));
  } else {
    const auto& gbt = std::get<BoostedModel>(model);
    for (std::size_t c = 0; c < nc; ++c)
      for (const auto& round : gbt.rounds) accumulate(c, tree_shap_single(round[c], 0, 1.0, background, x, false));
  }
  return res;
}

ExplainMethod explain_method_from_string(const std::string& name) {
  if (name == "auto") return ExplainMethod::Auto;
  if (name == "exact") return ExplainMethod::Exact;
  if (name == "kernel") return ExplainMethod::Kernel;
  if (name == "tree") return ExplainMethod::Tree;
  throw Error(ErrorCode::InvalidConfig, "unknown SHAP method '" + name + "'");
}

std::string to_string(ExplainMethod m) {
  switch (m) {
    case ExplainMethod::Auto: return "auto";
    case ExplainMethod::Exact: return "exact";
    case ExplainMethod::Kernel: return "kernel";
    case ExplainMethod::Tree: return "tree";
  }
  return "auto";
}

Matrix subsample_background(const Matrix& rows, std::size_t cap, std::uint64_t seed) {
  if (rows.rows() <= cap || cap == 0) return rows;
  Rng rng(seed);
  auto idx = sample_without_replacement(rng, rows.rows(), cap);
  std::sort(idx.begin(), idx.end());
  return rows.select_rows(idx);
}

ShapExplanation explain_model(const TrainedModel& model, const Matrix& background, const Matrix& instances,
                              const ExplainOptions& opt) {
  ExplainMethod method = opt.method;
  if (method == ExplainMethod::Auto)
    method = std::holds_alternative<SvmOvrModel>(model) ? ExplainMethod::Kernel : ExplainMethod::Tree;
  if (instances.rows() > 0 && instances.cols() != n_features_of(model))
    throw Error(ErrorCode::DimensionMismatch, "instances differ in width from the model");
  const Matrix bg = subsample_background(background, opt.background_cap, opt.seed);
  const ScoreFn f = explanation_score_fn(model);

  ShapExplanation e;
  e.method = to_string(method);
  e.background_rows = bg.rows();
  e.phi.resize(instances.rows());
  std::vector<char> ridge(instances.rows(), 0);
  std::vector<std::vector<double>> phi0(instances.rows());
  parallel_for(instances.rows(), [&](std::size_t i) {
    ShapResult r;
    auto x = instances.row(i);
    switch (method) {
      case ExplainMethod::Exact: r = exact_shapley(f, bg, x); break;
      case ExplainMethod::Tree: r = tree_shap(model, bg, x); break;
      default: {
        KernelShapOptions k = opt.kernel;
        k.seed = derive_seed(opt.kernel.seed, i);
        r = kernel_shap(f, bg, x, k);
      }
    }
    e.phi[i] = std::move(r.phi);
    phi0[i] = std::move(r.phi0);
    ridge[i] = r.ridge_fallback;
  });
  e.phi0 = phi0.empty() ? column_means(f(bg)) : phi0.front();
  e.ridge_fallback = std::any_of(ridge.begin(), ridge.end(), [](char c) { return c != 0; });
  const Matrix s = f(instances);
  for (std::size_t i = 0; i < s.rows(); ++i) e.scores.emplace_back(s.row(i).begin(), s.row(i).end());
  return e;
}

std::vector<RankedFeature> global_ranking(const ShapExplanation& e, std::size_t cls) {
  if (e.phi.empty()) throw Error(ErrorCode::TooFewSamples, "no explained instances");
  const std::size_t d = e.phi.front().rows();
  if (cls >= e.phi.front().cols()) throw Error(ErrorCode::InvalidConfig, "class index out of range");
  std::vector<RankedFeature> out(d);
  for (std::size_t f = 0; f < d; ++f) {
    out[f].index = f;
    out[f].feature = f < e.feature_names.size() ? e.feature_names[f] : "f" + std::to_string(f);
    for (const auto& phi : e.phi) out[f].mean_abs += std::abs(phi(f, cls));
    out[f].mean_abs /= static_cast<double>(e.phi.size());
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const RankedFeature& a, const RankedFeature& b) { return a.mean_abs > b.mean_abs; });
  return out;
}

std::string explanation_to_json(const ShapExplanation& e) {
  json phi = json::array();
  for (const auto& m : e.phi) {
    json rows = json::array();
    for (std::size_t f = 0; f < m.rows(); ++f) rows.push_back(std::vector<double>(m.row(f).begin(), m.row(f).end()));
    phi.push_back(rows);
  }
  json j{{"method", e.method},
         {"split", e.split},
         {"features", e.feature_names},
         {"classes", e.class_names},
         {"instances", e.instance_ids},
         {"phi0", e.phi0},
         {"phi", phi},
         {"scores", e.scores},
         {"background_rows", e.background_rows},
         {"background", e.background},
         {"ridge_fallback", e.ridge_fallback}};
  return j.dump() + "\n";
}

ShapExplanation explanation_from_json(const std::string& text) {
  try {
    const auto j = json::parse(text);
    ShapExplanation e;
    e.method = j.at("method").get<std::string>();
    e.split = j.value("split", "");
    e.feature_names = j.at("features").get<std::vector<std::string>>();
    e.class_names = j.at("classes").get<std::vector<std::string>>();
    e.instance_ids = j.value("instances", std::vector<std::string>{});
    e.phi0 = j.at("phi0").get<std::vector<double>>();
    for (const auto& inst : j.at("phi")) {
      auto rows = inst.get<std::vector<std::vector<double>>>();
      Matrix m(rows.size(), rows.empty() ? 0 : rows.front().size());
      for (std::size_t f = 0; f < rows.size(); ++f) {
        if (rows[f].size() != m.cols()) throw Error(ErrorCode::ShapeMismatch, "ragged attribution rows");
        std::copy(rows[f].begin(), rows[f].end(), m.row(f).begin());
      }
      e.phi.push_back(std::move(m));
    }
    e.scores = j.value("scores", std::vector<std::vector<double>>{});
    e.background_rows = j.value("background_rows", std::size_t{0});
    e.background = j.value("background", "");
    e.ridge_fallback = j.value("ridge_fallback", false);
    return e;
  } catch (const json::exception& ex) {
    throw Error(ErrorCode::ParseError, std::string("shap json: ") + ex.what());
  }
}

std::string ranking_csv(const ShapExplanation& e) {
  std::ostringstream os;
  os << "class,rank,feature,mean_abs_shap\n";
  const std::size_t nc = e.phi.empty() ? 0 : e.phi.front().cols();
  for (std::size_t c = 0; c < nc; ++c) {
    const auto ranking = global_ranking(e, c);
    const std::string name = c < e.class_names.size() ? e.class_names[c] : std::to_string(c);
    for (std::size_t r = 0; r < ranking.size(); ++r)
      os << name << ',' << r + 1 << ',' << ranking[r].feature << ',' << format_double(ranking[r].mean_abs) << '\n';
  }
  return os.str();
}

std::string ranking_svg(const std::vector<RankedFeature>& ranking, const std::string& title) {
  constexpr double kLabelW = 130.0, kBarW = 300.0, kRowH = 18.0, kTop = 30.0;
  const double height = kTop + kRowH * static_cast<double>(ranking.size()) + 30.0;
  double vmax = 0.0;
  for (const auto& r : ranking) vmax = std::max(vmax, r.mean_abs);
  if (!(vmax > 0.0)) vmax = 1.0;
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kLabelW + kBarW + 80 << "\" height=\"" << height
      << "\">\n";
  svg << "<text x=\"" << (kLabelW + kBarW) / 2 << "\" y=\"18\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"14\">"
      << title << "</text>\n";
  for (std::size_t i = 0; i < ranking.size(); ++i) {
    const double y = kTop + kRowH * static_cast<double>(i);
    const double w = kBarW * ranking[i].mean_abs / vmax;
    svg << "<text x=\"" << kLabelW - 6 << "\" y=\"" << y + 12
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << ranking[i].feature << "</text>\n";
    svg << "<rect x=\"" << kLabelW << "\" y=\"" << y + 2 << "\" width=\"" << w << "\" height=\"" << kRowH - 4
        << "\" fill=\"#1e88e5\"/>\n";
    svg << "<text x=\"" << kLabelW + w + 4 << "\" y=\"" << y + 12
        << "\" font-family=\"sans-serif\" font-size=\"10\">" << format_double(std::round(ranking[i].mean_abs * 1e4) / 1e4)
        << "</text>\n";
  }
  svg << "<text x=\"" << kLabelW + kBarW / 2 << "\" y=\"" << height - 8
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">mean |SHAP value|</text>\n";
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace msaf
