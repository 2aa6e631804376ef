#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "msaf/matrix.hpp"
#include "msaf/models.hpp"

namespace msaf {

/// Batch scorer: rows of inputs -> rows of per-class scores.
using ScoreFn = std::function<Matrix(const Matrix&)>;

/// Attributions for one instance, all classes at once.
struct ShapResult {
  Matrix phi;                // d x n_classes
  std::vector<double> phi0;  // expected score over the background, per class
  bool ridge_fallback = false;
};

/// Score scale used for explanations: SVM decision values, forest vote
/// proportions, boosting margins (pre-softmax).
ScoreFn explanation_score_fn(const TrainedModel& model);

/// Full 2^d subset enumeration of the interventional game
/// v(S) = mean_b f(x_S, b_notS). Throws TooManyFeatures above 20 features and
/// EmptyBackground.
ShapResult exact_shapley(const ScoreFn& f, const Matrix& background, std::span<const double> x);

struct KernelShapOptions {
  std::size_t n_samples = 2048;  // coalition budget; exhaustive when 2^d - 2 fits
  double ridge = 1e-6;           // only used when the normal equations are singular
  std::uint64_t seed = 0;
};

/// Shapley-kernel weighted least squares with the efficiency constraint
/// substituted out. Sampled coalitions come in complementary pairs.
ShapResult kernel_shap(const ScoreFn& f, const Matrix& background, std::span<const double> x,
                       const KernelShapOptions& opt = {});

/// Interventional TreeSHAP over a forest or boosted model (UnsupportedModel
/// otherwise). Exact for the same game as exact_shapley.
ShapResult tree_shap(const TrainedModel& model, const Matrix& background, std::span<const double> x);

/// Single tree, single output column `value_index`, leaf values multiplied by `scale`.
std::vector<double> tree_shap_single(const Tree& tree, std::size_t value_index, double scale,
                                     const Matrix& background, std::span<const double> x, bool normalize_hist);

enum class ExplainMethod { Auto, Exact, Kernel, Tree };
ExplainMethod explain_method_from_string(const std::string& name);
std::string to_string(ExplainMethod m);

struct ExplainOptions {
  ExplainMethod method = ExplainMethod::Auto;  // tree for tree models, kernel for SVM
  std::size_t background_cap = 100;
  KernelShapOptions kernel;
  std::uint64_t seed = 0;
};

struct ShapExplanation {
  std::string method;
  std::string split;
  std::vector<std::string> feature_names;
  std::vector<std::string> class_names;
  std::vector<std::string> instance_ids;
  std::vector<double> phi0;   // per class
  std::vector<Matrix> phi;    // per instance: d x n_classes
  std::vector<std::vector<double>> scores;  // per instance model score, per class
  std::size_t background_rows = 0;
  std::string background;
  bool ridge_fallback = false;
};

/// Seeded subsample of at most `cap` rows, original order preserved.
Matrix subsample_background(const Matrix& rows, std::size_t cap, std::uint64_t seed);

ShapExplanation explain_model(const TrainedModel& model, const Matrix& background, const Matrix& instances,
                              const ExplainOptions& opt);

struct RankedFeature {
  std::string feature;
  std::size_t index = 0;
  double mean_abs = 0.0;
};

/// Features by mean |phi| over instances, descending, ties by feature index.
std::vector<RankedFeature> global_ranking(const ShapExplanation& e, std::size_t cls);

std::string explanation_to_json(const ShapExplanation& e);
ShapExplanation explanation_from_json(const std::string& text);
std::string ranking_csv(const ShapExplanation& e);
/// Horizontal mean-|phi| bar chart for one class.
std::string ranking_svg(const std::vector<RankedFeature>& ranking, const std::string& title);

}  // namespace msaf
