#include <algorithm>
#include <cmath>
#include <numeric>

#include "model_common.hpp"
#include "msaf/models.hpp"
#include "msaf/parallel.hpp"
#include "msaf/random.hpp"

namespace msaf {

std::size_t Tree::leaf_index(std::span<const double> x) const {
  std::size_t n = 0;
  while (nodes[n].feature >= 0) {
    const auto& node = nodes[n];
    n = static_cast<std::size_t>(x[static_cast<std::size_t>(node.feature)] <= node.threshold ? node.left
                                                                                             : node.right);
  }
  return n;
}

std::size_t Tree::depth() const {
  std::vector<std::size_t> d(nodes.size(), 0);
  std::size_t best = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    best = std::max(best, d[i]);
    if (nodes[i].feature >= 0) {
      d[static_cast<std::size_t>(nodes[i].left)] = d[i] + 1;
      d[static_cast<std::size_t>(nodes[i].right)] = d[i] + 1;
    }
  }
  return best;
}

namespace {

double split_point(double lo, double hi) {
  const double mid = lo + (hi - lo) / 2.0;
  return mid < hi ? mid : lo;
}

double gini(const std::vector<double>& hist, double total) {
  if (!(total > 0.0)) return 0.0;
  double s = 0.0;
  for (double h : hist) s += (h / total) * (h / total);
  return 1.0 - s;
}

class ForestTreeBuilder {
 public:
  ForestTreeBuilder(const Matrix& x, std::span<const int> y, const std::vector<double>& class_w,
                    std::size_t n_classes, const ForestParams& p, std::size_t mtry, Rng& rng)
      : x_(x), y_(y), class_w_(class_w), n_classes_(n_classes), p_(p), mtry_(mtry), rng_(rng) {}

  Tree build(std::vector<std::size_t> samples) {
    tree_.nodes.clear();
    grow(std::move(samples), 0);
    return std::move(tree_);
  }

 private:
  std::size_t grow(std::vector<std::size_t> samples, std::size_t depth) {
    const std::size_t id = tree_.nodes.size();
    tree_.nodes.emplace_back();
    std::vector<double> hist(n_classes_, 0.0);
    for (std::size_t s : samples) hist[static_cast<std::size_t>(y_[s])] += class_w_[static_cast<std::size_t>(y_[s])];
    const double total = std::accumulate(hist.begin(), hist.end(), 0.0);
    tree_.nodes[id].value = hist;
    tree_.nodes[id].cover = total;

    const std::size_t nonzero = static_cast<std::size_t>(std::count_if(hist.begin(), hist.end(), [](double h) { return h > 0.0; }));
    if (nonzero <= 1 || samples.size() < std::max<std::size_t>(2, p_.min_samples_split) ||
        (p_.max_depth > 0 && depth >= p_.max_depth))
      return id;

    const double parent = gini(hist, total);
    auto features = sample_without_replacement(rng_, x_.cols(), mtry_);
    double best_gain = -1.0;
    int best_feature = -1;
    double best_threshold = 0.0;
    std::vector<std::pair<double, std::size_t>> order(samples.size());
    std::vector<double> left(n_classes_);
    for (std::size_t f : features) {
      for (std::size_t i = 0; i < samples.size(); ++i) order[i] = {x_(samples[i], f), samples[i]};
      std::sort(order.begin(), order.end());
      std::fill(left.begin(), left.end(), 0.0);
      double wl = 0.0;
      for (std::size_t i = 0; i + 1 < order.size(); ++i) {
        const auto cls = static_cast<std::size_t>(y_[order[i].second]);
        left[cls] += class_w_[cls];
        wl += class_w_[cls];
        if (!(order[i].first < order[i + 1].first)) continue;
        const double wr = total - wl;
        double gl = 0.0, gr = 0.0;
        {
          double sl = 0.0, sr = 0.0;
          for (std::size_t c = 0; c < n_classes_; ++c) {
            const double r = hist[c] - left[c];
            sl += (left[c] / wl) * (left[c] / wl);
            sr += wr > 0.0 ? (r / wr) * (r / wr) : 0.0;
          }
          gl = 1.0 - sl;
          gr = 1.0 - sr;
        }
        const double gain = parent - (wl * gl + wr * gr) / total;
        if (gain > best_gain) {
          best_gain = gain;
          best_feature = static_cast<int>(f);
          best_threshold = split_point(order[i].first, order[i + 1].first);
        }
      }
    }
    if (best_feature < 0) return id;

    std::vector<std::size_t> ls, rs;
    for (std::size_t s : samples) (x_(s, static_cast<std::size_t>(best_feature)) <= best_threshold ? ls : rs).push_back(s);
    samples.clear();
    samples.shrink_to_fit();
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
  std::span<const int> y_;
  const std::vector<double>& class_w_;
  std::size_t n_classes_;
  const ForestParams& p_;
  std::size_t mtry_;
  Rng& rng_;
  Tree tree_;
};

}  // namespace

ForestModel train_rf(const Matrix& x, std::span<const int> y, std::size_t n_classes, const ForestParams& p) {
  const auto counts = detail::check_training_input(x, y, n_classes, true);
  if (p.n_estimators < 1) throw Error(ErrorCode::InvalidConfig, "forest needs n_estimators >= 1");
  const auto class_w = detail::class_weights(counts, p.balanced);
  const std::size_t d = x.cols();
  std::size_t mtry = p.max_features > 0 ? std::min(p.max_features, d)
                                        : static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(d))));
  mtry = std::max<std::size_t>(1, mtry);

  ForestModel model;
  model.params = p;
  model.n_classes = n_classes;
  model.n_features = d;
  model.trees.resize(p.n_estimators);
  parallel_for(p.n_estimators, [&](std::size_t m) {
    Rng rng(derive_seed(p.seed, m));
    std::vector<std::size_t> samples(x.rows());
    if (p.bootstrap) {
      for (auto& s : samples) s = uniform_index(rng, x.rows());
      std::sort(samples.begin(), samples.end());
    } else {
      std::iota(samples.begin(), samples.end(), std::size_t{0});
    }
    ForestTreeBuilder builder(x, y, class_w, n_classes, p, mtry, rng);
    model.trees[m] = builder.build(std::move(samples));
  });
  return model;
}

}  // namespace msaf
