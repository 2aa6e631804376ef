#include "msaf/models.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "model_common.hpp"
#include "msaf/eeg_io.hpp"
#include "msaf/parallel.hpp"
#include "msaf/random.hpp"

namespace msaf {

using nlohmann::json;

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::Svm: return "svm";
    case ModelKind::Forest: return "rf";
    case ModelKind::Boosted: return "gbt";
  }
  return "unknown";
}

ModelKind model_kind_from_string(const std::string& name) {
  if (name == "svm") return ModelKind::Svm;
  if (name == "rf") return ModelKind::Forest;
  if (name == "gbt") return ModelKind::Boosted;
  throw Error(ErrorCode::UnsupportedModel, "unknown model kind '" + name + "'");
}

TrainedModel train(const ModelSpec& spec, const Matrix& x, std::span<const int> y, std::size_t n_classes) {
  switch (spec.kind) {
    case ModelKind::Svm: return train_svm_ovr(x, y, n_classes, spec.svm);
    case ModelKind::Forest: return train_rf(x, y, n_classes, spec.forest);
    case ModelKind::Boosted: return train_gbt(x, y, n_classes, spec.boost);
  }
  throw Error(ErrorCode::UnsupportedModel, "unknown model kind");
}

std::size_t n_features_of(const TrainedModel& model) {
  return std::visit([](const auto& m) { return m.n_features; }, model);
}

std::size_t n_classes_of(const TrainedModel& model) {
  return std::visit([](const auto& m) { return m.n_classes; }, model);
}

ModelKind kind_of(const TrainedModel& model) {
  if (std::holds_alternative<SvmOvrModel>(model)) return ModelKind::Svm;
  if (std::holds_alternative<ForestModel>(model)) return ModelKind::Forest;
  return ModelKind::Boosted;
}

Matrix decision_scores(const TrainedModel& model, const Matrix& x) {
  detail::check_predict_input(x, n_features_of(model));
  const std::size_t nc = n_classes_of(model);
  Matrix out(x.rows(), nc);
  if (x.rows() == 0) return out;

  if (const auto* svm = std::get_if<SvmOvrModel>(&model)) {
    const Matrix z = svm->scaler.apply(x);
    for (std::size_t r = 0; r < z.rows(); ++r)
      for (std::size_t c = 0; c < nc; ++c) out(r, c) = svm_decision(svm->machines[c], svm->params.gamma_rbf, z.row(r));
  } else if (const auto* rf = std::get_if<ForestModel>(&model)) {
    const double m = static_cast<double>(rf->trees.size());
    for (std::size_t r = 0; r < x.rows(); ++r) {
      for (const auto& tree : rf->trees) {
        const auto& leaf = tree.nodes[tree.leaf_index(x.row(r))];
        const double total = std::accumulate(leaf.value.begin(), leaf.value.end(), 0.0);
        for (std::size_t c = 0; c < nc; ++c) out(r, c) += leaf.value[c] / total;
      }
      for (std::size_t c = 0; c < nc; ++c) out(r, c) /= m;
    }
  } else {
    const auto& gbt = std::get<BoostedModel>(model);
    out = boosted_margins(gbt, x, gbt.rounds.size());
    for (std::size_t r = 0; r < out.rows(); ++r) detail::softmax_inplace(out.row(r));
  }
  return out;
}

std::vector<int> predict(const TrainedModel& model, const Matrix& x) {
  const Matrix s = decision_scores(model, x);
  std::vector<int> out(s.rows(), 0);
  for (std::size_t r = 0; r < s.rows(); ++r) {
    auto row = s.row(r);
    out[r] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

// ---- serialization ---------------------------------------------------------

namespace {

json matrix_json(const Matrix& m) {
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::vector<double>(m.data().begin(), m.data().end())}};
}

Matrix matrix_from(const json& j) {
  return Matrix(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>(),
                j.at("data").get<std::vector<double>>());
}

json tree_json(const Tree& t) {
  json feature = json::array(), threshold = json::array(), left = json::array(), right = json::array(),
       value = json::array(), cover = json::array();
  for (const auto& n : t.nodes) {
    feature.push_back(n.feature);
    threshold.push_back(n.threshold);
    left.push_back(n.left);
    right.push_back(n.right);
    value.push_back(n.value);
    cover.push_back(n.cover);
  }
  return json{{"feature", feature}, {"threshold", threshold}, {"left", left},
              {"right", right},     {"value", value},         {"cover", cover}};
}

Tree tree_from(const json& j) {
  Tree t;
  const auto& f = j.at("feature");
  t.nodes.resize(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) {
    auto& n = t.nodes[i];
    n.feature = f[i].get<int>();
    n.threshold = j.at("threshold")[i].get<double>();
    n.left = j.at("left")[i].get<int>();
    n.right = j.at("right")[i].get<int>();
    n.value = j.at("value")[i].get<std::vector<double>>();
    n.cover = j.at("cover")[i].get<double>();
    if (n.feature >= 0 && (n.left <= 0 || n.right <= 0 || static_cast<std::size_t>(n.left) >= f.size() ||
                           static_cast<std::size_t>(n.right) >= f.size()))
      throw Error(ErrorCode::ParseError, "tree node has invalid children");
  }
  if (t.nodes.empty()) throw Error(ErrorCode::ParseError, "empty tree");
  return t;
}

}  // namespace

std::string model_to_json(const TrainedModel& model, const std::vector<std::string>& class_names,
                          const std::vector<std::string>& feature_names) {
  json j;
  j["kind"] = to_string(kind_of(model));
  j["n_classes"] = n_classes_of(model);
  j["n_features"] = n_features_of(model);
  j["class_names"] = class_names;
  j["feature_names"] = feature_names;
  if (const auto* svm = std::get_if<SvmOvrModel>(&model)) {
    const auto& p = svm->params;
    j["params"] = {{"C", p.c}, {"gamma_rbf", p.gamma_rbf}, {"tol", p.tol}, {"max_iter", p.max_iter},
                   {"cache_mb", p.cache_mb}, {"balanced", p.balanced}, {"seed", p.seed}};
    j["scaler"] = {{"mean", svm->scaler.mean}, {"scale", svm->scaler.scale}};
    json machines = json::array();
    for (const auto& m : svm->machines)
      machines.push_back({{"trained", m.trained}, {"bias", m.bias}, {"coef", m.coef}, {"alpha", m.alpha},
                          {"support", matrix_json(m.support)}});
    j["machines"] = machines;
  } else if (const auto* rf = std::get_if<ForestModel>(&model)) {
    const auto& p = rf->params;
    j["params"] = {{"n_estimators", p.n_estimators}, {"max_depth", p.max_depth},
                   {"min_samples_split", p.min_samples_split}, {"max_features", p.max_features},
                   {"bootstrap", p.bootstrap}, {"balanced", p.balanced}, {"seed", p.seed}};
    json trees = json::array();
    for (const auto& t : rf->trees) trees.push_back(tree_json(t));
    j["trees"] = trees;
  } else {
    const auto& gbt = std::get<BoostedModel>(model);
    const auto& p = gbt.params;
    j["params"] = {{"n_rounds", p.n_rounds}, {"learning_rate", p.learning_rate}, {"max_depth", p.max_depth},
                   {"lambda", p.lambda}, {"gamma_leaf", p.gamma_leaf}, {"min_child_weight", p.min_child_weight},
                   {"patience", p.patience}, {"valid_fraction", p.valid_fraction}, {"balanced", p.balanced},
                   {"seed", p.seed}};
    j["base_score"] = gbt.base_score;
    json rounds = json::array();
    for (const auto& round : gbt.rounds) {
      json trees = json::array();
      for (const auto& t : round) trees.push_back(tree_json(t));
      rounds.push_back(trees);
    }
    j["rounds"] = rounds;
    j["train_loss"] = gbt.train_loss;
    j["valid_loss"] = gbt.valid_loss;
  }
  return j.dump() + "\n";
}

LoadedModel model_from_json(const std::string& text) {
  try {
    const auto j = json::parse(text);
    const auto kind = model_kind_from_string(j.at("kind").get<std::string>());
    LoadedModel out;
    out.class_names = j.value("class_names", std::vector<std::string>{});
    out.feature_names = j.value("feature_names", std::vector<std::string>{});
    const auto nc = j.at("n_classes").get<std::size_t>();
    const auto nf = j.at("n_features").get<std::size_t>();
    const auto& p = j.at("params");
    if (kind == ModelKind::Svm) {
      SvmOvrModel m;
      m.n_classes = nc;
      m.n_features = nf;
      m.params.c = p.at("C").get<double>();
      m.params.gamma_rbf = p.at("gamma_rbf").get<double>();
      m.params.tol = p.at("tol").get<double>();
      m.params.max_iter = p.at("max_iter").get<std::size_t>();
      m.params.cache_mb = p.at("cache_mb").get<std::size_t>();
      m.params.balanced = p.at("balanced").get<bool>();
      m.params.seed = p.at("seed").get<std::uint64_t>();
      m.scaler.mean = j.at("scaler").at("mean").get<std::vector<double>>();
      m.scaler.scale = j.at("scaler").at("scale").get<std::vector<double>>();
      for (const auto& mj : j.at("machines")) {
        BinarySvm b;
        b.trained = mj.at("trained").get<bool>();
        b.bias = mj.at("bias").get<double>();
        b.coef = mj.at("coef").get<std::vector<double>>();
        b.alpha = mj.at("alpha").get<std::vector<double>>();
        b.support = matrix_from(mj.at("support"));
        m.machines.push_back(std::move(b));
      }
      if (m.machines.size() != nc || m.scaler.mean.size() != nf)
        throw Error(ErrorCode::ParseError, "svm model shape mismatch");
      out.model = std::move(m);
    } else if (kind == ModelKind::Forest) {
      ForestModel m;
      m.n_classes = nc;
      m.n_features = nf;
      m.params.n_estimators = p.at("n_estimators").get<std::size_t>();
      m.params.max_depth = p.at("max_depth").get<std::size_t>();
      m.params.min_samples_split = p.at("min_samples_split").get<std::size_t>();
      m.params.max_features = p.at("max_features").get<std::size_t>();
      m.params.bootstrap = p.at("bootstrap").get<bool>();
      m.params.balanced = p.at("balanced").get<bool>();
      m.params.seed = p.at("seed").get<std::uint64_t>();
      for (const auto& tj : j.at("trees")) m.trees.push_back(tree_from(tj));
      out.model = std::move(m);
    } else {
      BoostedModel m;
      m.n_classes = nc;
      m.n_features = nf;
      m.params.n_rounds = p.at("n_rounds").get<std::size_t>();
      m.params.learning_rate = p.at("learning_rate").get<double>();
      m.params.max_depth = p.at("max_depth").get<std::size_t>();
      m.params.lambda = p.at("lambda").get<double>();
      m.params.gamma_leaf = p.at("gamma_leaf").get<double>();
      m.params.min_child_weight = p.at("min_child_weight").get<double>();
      m.params.patience = p.at("patience").get<std::size_t>();
      m.params.valid_fraction = p.at("valid_fraction").get<double>();
      m.params.balanced = p.at("balanced").get<bool>();
      m.params.seed = p.at("seed").get<std::uint64_t>();
      m.base_score = j.at("base_score").get<std::vector<double>>();
      for (const auto& rj : j.at("rounds")) {
        std::vector<Tree> round;
        for (const auto& tj : rj) round.push_back(tree_from(tj));
        if (round.size() != nc) throw Error(ErrorCode::ParseError, "boosting round has wrong tree count");
        m.rounds.push_back(std::move(round));
      }
      m.train_loss = j.value("train_loss", std::vector<double>{});
      m.valid_loss = j.value("valid_loss", std::vector<double>{});
      out.model = std::move(m);
    }
    return out;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("model json: ") + e.what());
  }
}

// ---- metrics ---------------------------------------------------------------

EvalReport evaluate(std::span<const int> y_true, std::span<const int> y_pred, std::size_t n_classes) {
  if (y_true.size() != y_pred.size()) throw Error(ErrorCode::LengthMismatch, "y_true and y_pred differ in length");
  EvalReport r;
  r.confusion.assign(n_classes, std::vector<std::size_t>(n_classes, 0));
  std::size_t hits = 0;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const int t = y_true[i], p = y_pred[i];
    if (t < 0 || p < 0 || static_cast<std::size_t>(t) >= n_classes || static_cast<std::size_t>(p) >= n_classes)
      throw Error(ErrorCode::InvalidConfig, "label out of range");
    ++r.confusion[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
    hits += t == p;
  }
  r.accuracy = y_true.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(y_true.size());
  for (std::size_t c = 0; c < n_classes; ++c) {
    std::size_t tp = r.confusion[c][c], fp = 0, fn = 0;
    for (std::size_t o = 0; o < n_classes; ++o) {
      if (o == c) continue;
      fp += r.confusion[o][c];
      fn += r.confusion[c][o];
    }
    const double prec = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    const double rec = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    const double f1 = prec + rec > 0.0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
    r.precision.push_back(prec);
    r.recall.push_back(rec);
    r.f1.push_back(f1);
  }
  const double k = static_cast<double>(std::max<std::size_t>(n_classes, 1));
  r.macro_precision = std::accumulate(r.precision.begin(), r.precision.end(), 0.0) / k;
  r.macro_recall = std::accumulate(r.recall.begin(), r.recall.end(), 0.0) / k;
  r.macro_f1 = std::accumulate(r.f1.begin(), r.f1.end(), 0.0) / k;
  return r;
}

// ---- cross-validation --------------------------------------------------------

std::vector<int> stratified_folds(std::span<const int> y, std::size_t k, std::uint64_t seed) {
  const std::size_t n = y.size();
  if (k < 2 || k > n) throw Error(ErrorCode::InvalidConfig, "fold count must lie in [2, n]");
  int max_label = -1;
  for (int v : y) {
    if (v < 0) throw Error(ErrorCode::InvalidConfig, "negative label");
    max_label = std::max(max_label, v);
  }
  std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(max_label) + 1);
  for (std::size_t i = 0; i < n; ++i) members[static_cast<std::size_t>(y[i])].push_back(i);

  std::vector<int> fold(n, 0);
  if (k == n) {
    std::iota(fold.begin(), fold.end(), 0);
    return fold;
  }
  std::size_t offset = 0;
  for (std::size_t c = 0; c < members.size(); ++c) {
    auto& idx = members[c];
    if (idx.empty()) continue;
    if (idx.size() < k)
      throw Error(ErrorCode::ClassTooSmall, "class " + std::to_string(c) + " has " + std::to_string(idx.size()) +
                                                " samples for " + std::to_string(k) + " folds");
    Rng rng(derive_seed(seed, c));
    shuffle(idx, rng);
    for (std::size_t i = 0; i < idx.size(); ++i) fold[idx[i]] = static_cast<int>((offset + i) % k);
    offset += idx.size();
  }
  return fold;
}

namespace {

MeanStd mean_std(const std::vector<double>& v) {
  MeanStd out;
  if (v.empty()) return out;
  for (double x : v) out.mean += x;
  out.mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - out.mean) * (x - out.mean);
  out.std = std::sqrt(ss / static_cast<double>(v.size()));
  return out;
}

}  // namespace

CvReport stratified_kfold_cv(const ModelSpec& spec, const Matrix& x, std::span<const int> y, std::size_t n_classes,
                             std::size_t k, std::uint64_t seed) {
  if (x.rows() != y.size()) throw Error(ErrorCode::LengthMismatch, "X rows and y differ in length");
  CvReport rep;
  rep.fold_of = stratified_folds(y, k, seed);
  rep.folds.resize(k);
  rep.oof_pred.assign(y.size(), 0);

  parallel_for(k, [&](std::size_t f) {
    std::vector<std::size_t> tr, te;
    for (std::size_t i = 0; i < y.size(); ++i) (static_cast<std::size_t>(rep.fold_of[i]) == f ? te : tr).push_back(i);
    const Matrix xtr = x.select_rows(tr), xte = x.select_rows(te);
    std::vector<int> ytr, yte;
    for (auto i : tr) ytr.push_back(y[i]);
    for (auto i : te) yte.push_back(y[i]);
    ModelSpec fold_spec = spec;
    fold_spec.svm.seed = derive_seed(spec.svm.seed, f);
    fold_spec.forest.seed = derive_seed(spec.forest.seed, f);
    fold_spec.boost.seed = derive_seed(spec.boost.seed, f);
    const auto model = train(fold_spec, xtr, ytr, n_classes);
    const auto pred = predict(model, xte);
    for (std::size_t i = 0; i < te.size(); ++i) rep.oof_pred[te[i]] = pred[i];
    rep.folds[f] = evaluate(yte, pred, n_classes);
  });

  auto collect = [&](auto getter) {
    std::vector<double> v;
    for (const auto& f : rep.folds) v.push_back(getter(f));
    return mean_std(v);
  };
  rep.accuracy = collect([](const EvalReport& r) { return r.accuracy; });
  rep.macro_precision = collect([](const EvalReport& r) { return r.macro_precision; });
  rep.macro_recall = collect([](const EvalReport& r) { return r.macro_recall; });
  rep.macro_f1 = collect([](const EvalReport& r) { return r.macro_f1; });
  for (std::size_t c = 0; c < n_classes; ++c) {
    rep.precision.push_back(collect([c](const EvalReport& r) { return r.precision[c]; }));
    rep.recall.push_back(collect([c](const EvalReport& r) { return r.recall[c]; }));
    rep.f1.push_back(collect([c](const EvalReport& r) { return r.f1[c]; }));
  }
  rep.pooled = evaluate(y, rep.oof_pred, n_classes);
  return rep;
}

// ---- grid search -----------------------------------------------------------

ParamGrid default_grid(ModelKind kind) {
  switch (kind) {
    case ModelKind::Svm: return {{"C", {0.1, 1, 10, 100}}, {"gamma", {0.0001, 0.001, 0.05}}};
    case ModelKind::Forest:
      return {{"n_estimators", {100, 200, 300}}, {"max_depth", {5, 10, 15}}, {"min_samples_split", {2, 4}}};
    case ModelKind::Boosted:
      return {{"n_rounds", {100, 200}}, {"learning_rate", {0.0001, 0.001, 0.05}}, {"max_depth", {3, 6, 10}}};
  }
  return {};
}

void set_param(ModelSpec& spec, const std::string& name, double value) {
  auto as_count = [&](double v) {
    if (!(v >= 0.0) || v != std::floor(v)) throw Error(ErrorCode::InvalidConfig, name + " must be a whole number");
    return static_cast<std::size_t>(v);
  };
  switch (spec.kind) {
    case ModelKind::Svm:
      if (name == "C") spec.svm.c = value;
      else if (name == "gamma" || name == "gamma_rbf") spec.svm.gamma_rbf = value;
      else if (name == "tol") spec.svm.tol = value;
      else throw Error(ErrorCode::InvalidConfig, "unknown svm parameter " + name);
      return;
    case ModelKind::Forest:
      if (name == "n_estimators") spec.forest.n_estimators = as_count(value);
      else if (name == "max_depth") spec.forest.max_depth = as_count(value);
      else if (name == "min_samples_split") spec.forest.min_samples_split = as_count(value);
      else if (name == "max_features") spec.forest.max_features = as_count(value);
      else throw Error(ErrorCode::InvalidConfig, "unknown rf parameter " + name);
      return;
    case ModelKind::Boosted:
      if (name == "n_rounds" || name == "n_estimators") spec.boost.n_rounds = as_count(value);
      else if (name == "learning_rate") spec.boost.learning_rate = value;
      else if (name == "max_depth") spec.boost.max_depth = as_count(value);
      else if (name == "lambda") spec.boost.lambda = value;
      else if (name == "gamma_leaf") spec.boost.gamma_leaf = value;
      else if (name == "min_child_weight") spec.boost.min_child_weight = value;
      else if (name == "patience") spec.boost.patience = as_count(value);
      else throw Error(ErrorCode::InvalidConfig, "unknown gbt parameter " + name);
      return;
  }
}

ParamGrid grid_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::ordered_json::parse(text);
    if (!j.is_object()) throw Error(ErrorCode::InvalidConfig, "grid must be a JSON object");
    ParamGrid grid;
    for (auto it = j.begin(); it != j.end(); ++it) {
      auto values = it.value().is_array() ? it.value().get<std::vector<double>>()
                                          : std::vector<double>{it.value().get<double>()};
      if (values.empty()) throw Error(ErrorCode::InvalidConfig, "grid axis " + it.key() + " is empty");
      grid.emplace_back(it.key(), std::move(values));
    }
    return grid;
  } catch (const nlohmann::ordered_json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("grid json: ") + e.what());
  }
}

GridResult grid_search(const ModelSpec& base, const ParamGrid& grid, const Matrix& x, std::span<const int> y,
                       std::size_t n_classes, std::size_t k, std::uint64_t seed) {
  std::size_t cells = 1;
  for (const auto& [name, values] : grid) {
    if (values.empty()) throw Error(ErrorCode::InvalidConfig, "grid axis " + name + " is empty");
    cells *= values.size();
  }
  GridResult res;
  res.rows.resize(cells);
  std::vector<ModelSpec> specs(cells, base);
  for (std::size_t cell = 0; cell < cells; ++cell) {
    std::size_t rem = cell;
    std::vector<std::size_t> pick(grid.size());
    for (std::size_t a = grid.size(); a-- > 0;) {
      pick[a] = rem % grid[a].second.size();
      rem /= grid[a].second.size();
    }
    for (std::size_t a = 0; a < grid.size(); ++a) {
      const double v = grid[a].second[pick[a]];
      set_param(specs[cell], grid[a].first, v);
      res.rows[cell].params.emplace_back(grid[a].first, v);
    }
  }
  parallel_for(cells, [&](std::size_t cell) {
    const auto rep = stratified_kfold_cv(specs[cell], x, y, n_classes, k, seed);
    res.rows[cell].accuracy = rep.accuracy;
    res.rows[cell].macro_f1 = rep.macro_f1;
  });
  for (std::size_t cell = 1; cell < cells; ++cell)
    if (res.rows[cell].accuracy.mean > res.rows[res.best].accuracy.mean) res.best = cell;
  res.best_spec = specs[res.best];
  return res;
}

// ---- reports ---------------------------------------------------------------

namespace {

json report_json(const EvalReport& r, const std::vector<std::string>& names) {
  json per_class = json::array();
  for (std::size_t c = 0; c < r.precision.size(); ++c)
    per_class.push_back({{"class", c < names.size() ? names[c] : std::to_string(c)},
                         {"precision", r.precision[c]},
                         {"recall", r.recall[c]},
                         {"f1", r.f1[c]}});
  return json{{"accuracy", r.accuracy},       {"macro_precision", r.macro_precision},
              {"macro_recall", r.macro_recall}, {"macro_f1", r.macro_f1},
              {"per_class", per_class},       {"confusion", r.confusion}};
}

json ms_json(const MeanStd& m) { return json{{"mean", m.mean}, {"std", m.std}}; }

}  // namespace

std::string eval_report_to_json(const EvalReport& r, const std::vector<std::string>& class_names) {
  return report_json(r, class_names).dump(2) + "\n";
}

std::string cv_report_to_json(const CvReport& r, const std::vector<std::string>& class_names) {
  json folds = json::array();
  for (const auto& f : r.folds) folds.push_back(report_json(f, class_names));
  json per_class = json::array();
  for (std::size_t c = 0; c < r.precision.size(); ++c)
    per_class.push_back({{"class", c < class_names.size() ? class_names[c] : std::to_string(c)},
                         {"precision", ms_json(r.precision[c])},
                         {"recall", ms_json(r.recall[c])},
                         {"f1", ms_json(r.f1[c])}});
  json j{{"n_folds", r.folds.size()},
         {"accuracy", ms_json(r.accuracy)},
         {"macro_precision", ms_json(r.macro_precision)},
         {"macro_recall", ms_json(r.macro_recall)},
         {"macro_f1", ms_json(r.macro_f1)},
         {"per_class", per_class},
         {"folds", folds},
         {"pooled", report_json(r.pooled, class_names)}};
  return j.dump(2) + "\n";
}

std::string eval_report_table(const EvalReport& r, const std::vector<std::string>& class_names) {
  std::ostringstream os;
  os << "class\tprecision\trecall\tf1\n";
  for (std::size_t c = 0; c < r.precision.size(); ++c)
    os << (c < class_names.size() ? class_names[c] : std::to_string(c)) << '\t' << format_double(r.precision[c])
       << '\t' << format_double(r.recall[c]) << '\t' << format_double(r.f1[c]) << '\n';
  os << "macro\t" << format_double(r.macro_precision) << '\t' << format_double(r.macro_recall) << '\t'
     << format_double(r.macro_f1) << '\n';
  os << "accuracy\t" << format_double(r.accuracy) << '\n';
  return os.str();
}

}  // namespace msaf
