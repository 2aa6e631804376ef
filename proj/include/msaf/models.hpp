#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "msaf/matrix.hpp"

namespace msaf {

/// Per-feature standardization with population std (scale 1 for constant features).
struct Scaler {
  std::vector<double> mean;
  std::vector<double> scale;

  static Scaler fit(const Matrix& x);
  Matrix apply(const Matrix& x) const;
};

/// Binary decision tree node; a leaf has feature == -1. Samples with
/// x[feature] <= threshold go left. `value` holds class weights (forest) or a
/// single leaf weight (boosting); `cover` is the training weight that reached it.
struct TreeNode {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  std::vector<double> value;
  double cover = 0.0;
};

struct Tree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  std::size_t leaf_index(std::span<const double> x) const;
  std::size_t depth() const;
};

enum class ModelKind { Svm, Forest, Boosted };
std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& name);

struct SvmParams {
  double c = 1.0;
  double gamma_rbf = 0.05;
  double tol = 1e-3;
  std::size_t max_iter = 10'000'000;
  std::size_t cache_mb = 256;  // full kernel matrix kept when it fits
  bool balanced = false;       // per-class C scaled by n / (n_classes * n_c)
  std::uint64_t seed = 0;
};

struct BinarySvm {
  Matrix support;             // standardized support vectors
  std::vector<double> coef;   // alpha_i * y_i
  std::vector<double> alpha;  // alpha_i
  double bias = 0.0;          // f(x) = sum coef_i K(sv_i, x) + bias
  bool trained = false;       // false when the class had no training samples
};

struct SvmOvrModel {
  SvmParams params;
  Scaler scaler;
  std::vector<BinarySvm> machines;  // one per class
  std::size_t n_classes = 0;
  std::size_t n_features = 0;
};

struct ForestParams {
  std::size_t n_estimators = 100;
  std::size_t max_depth = 0;  // 0 = unlimited
  std::size_t min_samples_split = 2;
  std::size_t max_features = 0;  // 0 = ceil(sqrt(d))
  bool bootstrap = true;
  bool balanced = false;
  std::uint64_t seed = 0;
};

struct ForestModel {
  ForestParams params;
  std::vector<Tree> trees;
  std::size_t n_classes = 0;
  std::size_t n_features = 0;
};

struct BoostParams {
  std::size_t n_rounds = 100;
  double learning_rate = 0.05;
  std::size_t max_depth = 3;
  double lambda = 1.0;
  double gamma_leaf = 0.0;
  double min_child_weight = 0.0;
  std::size_t patience = 10;  // 0 disables early stopping and the validation split
  double valid_fraction = 0.2;
  bool balanced = false;
  std::uint64_t seed = 0;
};

struct BoostedModel {
  BoostParams params;
  std::vector<double> base_score;        // log class prior, one per class
  std::vector<std::vector<Tree>> rounds;  // rounds[q][c]; leaf weights include the learning rate
  std::size_t n_classes = 0;
  std::size_t n_features = 0;
  std::vector<double> train_loss;  // mean log-loss after each fitted round
  std::vector<double> valid_loss;
};

using TrainedModel = std::variant<SvmOvrModel, ForestModel, BoostedModel>;

struct ModelSpec {
  ModelKind kind = ModelKind::Svm;
  SvmParams svm;
  ForestParams forest;
  BoostParams boost;
};

/// Labels are class indices in [0, n_classes). Throws SingleClass when fewer
/// than two classes occur and NonFinite on NaN/inf features.
SvmOvrModel train_svm_ovr(const Matrix& x, std::span<const int> y, std::size_t n_classes, const SvmParams& p);
ForestModel train_rf(const Matrix& x, std::span<const int> y, std::size_t n_classes, const ForestParams& p);
BoostedModel train_gbt(const Matrix& x, std::span<const int> y, std::size_t n_classes, const BoostParams& p);
TrainedModel train(const ModelSpec& spec, const Matrix& x, std::span<const int> y, std::size_t n_classes);

/// Binary SVM decision value on an already standardized row.
double svm_decision(const BinarySvm& m, double gamma_rbf, std::span<const double> z);

/// Raw boosting margins using only the first `n_rounds` rounds.
Matrix boosted_margins(const BoostedModel& m, const Matrix& x, std::size_t n_rounds);

/// n x n_classes: OvR decision values (SVM), vote proportions (forest) or
/// softmax probabilities (boosting).
Matrix decision_scores(const TrainedModel& model, const Matrix& x);
/// Row-wise argmax of decision_scores, ties to the lowest class.
std::vector<int> predict(const TrainedModel& model, const Matrix& x);

std::size_t n_features_of(const TrainedModel& model);
std::size_t n_classes_of(const TrainedModel& model);
ModelKind kind_of(const TrainedModel& model);

std::string model_to_json(const TrainedModel& model, const std::vector<std::string>& class_names = {},
                          const std::vector<std::string>& feature_names = {});
struct LoadedModel {
  TrainedModel model;
  std::vector<std::string> class_names;
  std::vector<std::string> feature_names;
};
LoadedModel model_from_json(const std::string& text);

struct EvalReport {
  double accuracy = 0.0;
  std::vector<double> precision, recall, f1;
  double macro_precision = 0.0, macro_recall = 0.0, macro_f1 = 0.0;
  std::vector<std::vector<std::size_t>> confusion;  // [true][pred]
};

/// Per-class metrics are 0 wherever their denominator is 0.
EvalReport evaluate(std::span<const int> y_true, std::span<const int> y_pred, std::size_t n_classes);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population std across folds
};

struct CvReport {
  std::vector<EvalReport> folds;
  std::vector<int> fold_of;  // fold index per sample
  MeanStd accuracy, macro_precision, macro_recall, macro_f1;
  std::vector<MeanStd> precision, recall, f1;
  EvalReport pooled;  // out-of-fold predictions of all folds together
  std::vector<int> oof_pred;
};

/// Fold index per sample. Each class is shuffled with its own seeded stream and
/// dealt round-robin, continuing the rotation across classes, so every fold gets
/// floor or ceil of its share of each class. Throws ClassTooSmall when a present
/// class has fewer than k samples, except for leave-one-out (k == n).
std::vector<int> stratified_folds(std::span<const int> y, std::size_t k, std::uint64_t seed);

CvReport stratified_kfold_cv(const ModelSpec& spec, const Matrix& x, std::span<const int> y,
                             std::size_t n_classes, std::size_t k, std::uint64_t seed);

/// Ordered parameter axes; the first axis varies slowest.
using ParamGrid = std::vector<std::pair<std::string, std::vector<double>>>;

ParamGrid default_grid(ModelKind kind);
/// Sets one named hyper-parameter; throws InvalidConfig on unknown names.
void set_param(ModelSpec& spec, const std::string& name, double value);
ParamGrid grid_from_json(const std::string& text);

struct GridRow {
  std::vector<std::pair<std::string, double>> params;
  MeanStd accuracy;
  MeanStd macro_f1;
};

struct GridResult {
  std::vector<GridRow> rows;
  std::size_t best = 0;
  ModelSpec best_spec;
};

GridResult grid_search(const ModelSpec& base, const ParamGrid& grid, const Matrix& x, std::span<const int> y,
                       std::size_t n_classes, std::size_t k, std::uint64_t seed);

std::string eval_report_to_json(const EvalReport& r, const std::vector<std::string>& class_names);
std::string cv_report_to_json(const CvReport& r, const std::vector<std::string>& class_names);
std::string eval_report_table(const EvalReport& r, const std::vector<std::string>& class_names);

}  // namespace msaf
