#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "model_common.hpp"
#include "msaf/models.hpp"
#include "msaf/parallel.hpp"
#include "msaf/random.hpp"

namespace msaf {

namespace {

double split_point(double lo, double hi) {
  const double mid = lo + (hi - lo) / 2.0;
  return mid < hi ? mid : lo;
}

// Second-order regression tree on gradient/hessian statistics.
class BoostTreeBuilder {
 public:
  BoostTreeBuilder(const Matrix& x, const std::vector<double>& g, const std::vector<double>& h, const BoostParams& p)
      : x_(x), g_(g), h_(h), p_(p) {}

  Tree build(std::vector<std::size_t> rows) {
    grow(std::move(rows), 0);
    return std::move(tree_);
  }

 private:
  double score(double gs, double hs) const { return gs * gs / (hs + p_.lambda); }

  std::size_t grow(std::vector<std::size_t> rows, std::size_t depth) {
    const std::size_t id = tree_.nodes.size();
    tree_.nodes.emplace_back();
    double gs = 0.0, hs = 0.0;
    for (std::size_t r : rows) {
      gs += g_[r];
      hs += h_[r];
    }
    tree_.nodes[id].value = {-gs / (hs + p_.lambda) * p_.learning_rate};
    tree_.nodes[id].cover = static_cast<double>(rows.size());
    if (depth >= p_.max_depth || rows.size() < 2) return id;

    const double parent = score(gs, hs);
    double best_gain = p_.gamma_leaf;
    int best_feature = -1;
    double best_threshold = 0.0;
    std::vector<std::pair<double, std::size_t>> order(rows.size());
    for (std::size_t f = 0; f < x_.cols(); ++f) {
      for (std::size_t i = 0; i < rows.size(); ++i) order[i] = {x_(rows[i], f), rows[i]};
      std::sort(order.begin(), order.end());
      double gl = 0.0, hl = 0.0;
      for (std::size_t i = 0; i + 1 < order.size(); ++i) {
        gl += g_[order[i].second];
        hl += h_[order[i].second];
        if (!(order[i].first < order[i + 1].first)) continue;
        const double gr = gs - gl, hr = hs - hl;
        if (hl < p_.min_child_weight || hr < p_.min_child_weight) continue;
        const double gain = 0.5 * (score(gl, hl) + score(gr, hr) - parent);
        if (gain > best_gain) {
          best_gain = gain;
          best_feature = static_cast<int>(f);
          best_threshold = split_point(order[i].first, order[i + 1].first);
        }
      }
    }
    if (best_feature < 0) return id;

    std::vector<std::size_t> ls, rs;
    for (std::size_t r : rows) (x_(r, static_cast<std::size_t>(best_feature)) <= best_threshold ? ls : rs).push_back(r);
    const std::size_t l = grow(std::move(ls), depth + 1);
    const std::size_t r = grow(std::move(rs), depth + 1);
    auto& node = tree_.nodes[id];
    node.feature = best_feature;
    node.threshold = best_threshold;
    node.left = static_cast<int>(l);
    node.right = static_cast<int>(r);
    node.value.clear();
    return id;
  }

  const Matrix& x_;
  const std::vector<double>& g_;
  const std::vector<double>& h_;
  const BoostParams& p_;
  Tree tree_;
};

double mean_log_loss(const Matrix& margins, std::span<const int> y, const std::vector<std::size_t>& rows) {
  if (rows.empty()) return 0.0;
  double loss = 0.0;
  std::vector<double> p(margins.cols());
  for (std::size_t r : rows) {
    auto m = margins.row(r);
    std::copy(m.begin(), m.end(), p.begin());
    detail::softmax_inplace(p);
    loss -= std::log(std::max(p[static_cast<std::size_t>(y[r])], 1e-300));
  }
  return loss / static_cast<double>(rows.size());
}

}  // namespace

BoostedModel train_gbt(const Matrix& x, std::span<const int> y, std::size_t n_classes, const BoostParams& p) {
  auto counts = detail::check_training_input(x, y, n_classes);
  if (!(p.learning_rate > 0.0) || p.lambda < 0.0)
    throw Error(ErrorCode::InvalidConfig, "boosting needs learning_rate > 0 and lambda >= 0");
  const std::size_t n = x.rows();

  std::vector<std::size_t> train_rows(n), valid_rows;
  std::iota(train_rows.begin(), train_rows.end(), std::size_t{0});
  if (p.patience > 0) {
    if (n < 4) throw Error(ErrorCode::TooFewSamplesForValidation, "early stopping needs n >= 4");
    Rng rng(derive_seed(p.seed, 0));
    shuffle(train_rows, rng);
    auto n_valid = static_cast<std::size_t>(std::llround(p.valid_fraction * static_cast<double>(n)));
    n_valid = std::clamp<std::size_t>(n_valid, 1, n - 2);
    valid_rows.assign(train_rows.end() - static_cast<std::ptrdiff_t>(n_valid), train_rows.end());
    train_rows.resize(n - n_valid);
    std::sort(train_rows.begin(), train_rows.end());
    std::sort(valid_rows.begin(), valid_rows.end());
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t r : train_rows) ++counts[static_cast<std::size_t>(y[r])];
    if (std::count_if(counts.begin(), counts.end(), [](std::size_t c) { return c > 0; }) < 2)
      throw Error(ErrorCode::SingleClass, "training split after validation hold-out has a single class");
  }
  const auto class_w = detail::class_weights(counts, p.balanced);

  BoostedModel model;
  model.params = p;
  model.n_classes = n_classes;
  model.n_features = x.cols();
  double wsum = 0.0;
  std::vector<double> prior(n_classes, 0.0);
  for (std::size_t r : train_rows) {
    prior[static_cast<std::size_t>(y[r])] += class_w[static_cast<std::size_t>(y[r])];
    wsum += class_w[static_cast<std::size_t>(y[r])];
  }
  for (std::size_t c = 0; c < n_classes; ++c) model.base_score.push_back(std::log(std::max(prior[c] / wsum, 1e-12)));

  Matrix margins(n, n_classes);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n_classes; ++c) margins(r, c) = model.base_score[c];

  double best_valid = std::numeric_limits<double>::infinity();
  std::size_t best_round = 0;
  Matrix probs(n, n_classes);
  for (std::size_t q = 0; q < p.n_rounds; ++q) {
    for (std::size_t r : train_rows) {
      auto dst = probs.row(r);
      auto src = margins.row(r);
      std::copy(src.begin(), src.end(), dst.begin());
      detail::softmax_inplace(dst);
    }
    std::vector<Tree> round(n_classes);
    parallel_for(n_classes, [&](std::size_t c) {
      std::vector<double> g(n, 0.0), h(n, 0.0);
      for (std::size_t r : train_rows) {
        const double w = class_w[static_cast<std::size_t>(y[r])];
        const double pc = probs(r, c);
        const double target = static_cast<std::size_t>(y[r]) == c ? 1.0 : 0.0;
        g[r] = w * (pc - target);
        h[r] = w * std::max(pc * (1.0 - pc), 1e-16);
      }
      BoostTreeBuilder builder(x, g, h, p);
      round[c] = builder.build(train_rows);
    });
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < n_classes; ++c)
        margins(r, c) += round[c].nodes[round[c].leaf_index(x.row(r))].value[0];
    model.rounds.push_back(std::move(round));
    model.train_loss.push_back(mean_log_loss(margins, y, train_rows));

    if (p.patience == 0) continue;
    const double vl = mean_log_loss(margins, y, valid_rows);
    model.valid_loss.push_back(vl);
    if (vl < best_valid) {
      best_valid = vl;
      best_round = q;
    } else if (q - best_round >= p.patience) {
      break;
    }
  }
  if (p.patience > 0 && !model.rounds.empty()) {
    model.rounds.resize(best_round + 1);
    model.train_loss.resize(best_round + 1);
    model.valid_loss.resize(best_round + 1);
  }
  return model;
}

Matrix boosted_margins(const BoostedModel& m, const Matrix& x, std::size_t n_rounds) {
  detail::check_predict_input(x, m.n_features);
  n_rounds = std::min(n_rounds, m.rounds.size());
  Matrix out(x.rows(), m.n_classes);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto row = x.row(r);
    for (std::size_t c = 0; c < m.n_classes; ++c) {
      double s = m.base_score[c];
      for (std::size_t q = 0; q < n_rounds; ++q) {
        const Tree& t = m.rounds[q][c];
        s += t.nodes[t.leaf_index(row)].value[0];
      }
      out(r, c) = s;
    }
  }
  return out;
}

}  // namespace msaf
