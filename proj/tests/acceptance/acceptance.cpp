// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <json.hpp>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "msaf/error.hpp"
#include "msaf/explain.hpp"
#include "msaf/features.hpp"
#include "msaf/microstates.hpp"
#include "msaf/models.hpp"
#include "msaf/pipeline.hpp"
#include "msaf/preprocess.hpp"
#include "msaf/stats.hpp"
#include "msaf/synth.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace msaf;
using msaf::testing::TempDir;
namespace fs = std::filesystem;

namespace {

// Collects failed conditions for one criterion; `detail` carries the measured values.
struct Verdict {
  std::vector<std::string> failures;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  }
};

std::string num(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*g", digits, v);
  return buf;
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string("\"") + MSAF_CLI_PATH + "\" " + args + " >\"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

// Maps recovered state indices onto truth indices via the matching found by the oracle.
double label_agreement(const std::vector<int>& states, const std::vector<int>& truth,
                       const std::vector<std::size_t>& match) {
  std::vector<int> to_truth(match.size(), -1);
  for (std::size_t t = 0; t < match.size(); ++t) to_truth[match[t]] = static_cast<int>(t);
  std::size_t same = 0;
  for (std::size_t i = 0; i < states.size(); ++i)
    if (states[i] >= 0 && to_truth[static_cast<std::size_t>(states[i])] == truth[i]) ++same;
  return static_cast<double>(same) / static_cast<double>(states.size());
}

void criterion_noiseless_recovery(Verdict& v) {
  CohortConfig cc;
  cc.n_per_class = 2;
  cc.base.duration = 20.0;
  cc.seed = 11;
  const auto cohort = make_cohort(cc);
  double min_corr = 1.0, min_agree = 1.0, max_gev_err = 0.0;
  std::vector<MicrostateMaps> subject_maps;
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    const auto& s = cohort[i];
    KMeansOptions opt;
    opt.k = 4;
    opt.seed = derive_seed(11, i);
    const auto maps = fit_subject_maps(s.rec, opt);
    std::vector<std::size_t> match;
    for (double c : oracle::matched_abs_corr(maps.maps, s.maps.maps, &match)) min_corr = std::min(min_corr, c);
    const auto seg = backfit(s.rec, maps);
    min_agree = std::min(min_agree, label_agreement(seg.states, s.truth.states, match));
    max_gev_err = std::max({max_gev_err, std::abs(maps.gev_total - 1.0), std::abs(gev(s.rec, seg).total - 1.0)});
    subject_maps.push_back(maps);
  }
  // the group level sees only subject maps and must still land on the generators
  KMeansOptions gopt;
  gopt.k = 4;
  gopt.seed = 5;
  const auto group = group_cluster(subject_maps, gopt);
  std::vector<std::size_t> match;
  for (double c : oracle::matched_abs_corr(group.maps, cohort[0].maps.maps, &match)) min_corr = std::min(min_corr, c);
  for (const auto& s : cohort) {
    const auto seg = backfit(s.rec, group);
    min_agree = std::min(min_agree, label_agreement(seg.states, s.truth.states, match));
    max_gev_err = std::max(max_gev_err, std::abs(gev(s.rec, seg).total - 1.0));
  }
  v.require(min_corr >= 0.999, "template |corr| below 0.999");
  v.require(min_agree == 1.0, "backfit agreement below 100%");
  v.require(max_gev_err <= 1e-9, "GEV differs from 1");
  v.detail << cohort.size() << " subjects + group maps: min matched |corr| " << num(min_corr, 8) << ", agreement "
           << num(100.0 * min_agree, 6) << "%, max |GEV-1| " << num(max_gev_err, 2);
}

void criterion_gev_monotone(Verdict& v) {
  std::size_t iterations = 0;
  double worst_drop = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SynthConfig cfg;
    cfg.duration = 10.0;
    cfg.snr = 2.0;
    cfg.seed = 100 + seed;
    const auto s = generate(cfg);
    const auto peaks = find_gfp_peaks(gfp(s.rec));
    KMeansOptions opt;
    opt.k = 4;
    opt.n_inits = 1;
    opt.seed = seed;
    std::vector<KMeansTrace> traces;
    modified_kmeans(topographies_at(s.rec, peaks), opt, &traces);
    for (const auto& tr : traces)
      for (std::size_t i = 1; i < tr.gev.size(); ++i, ++iterations)
        worst_drop = std::max(worst_drop, tr.gev[i - 1] - tr.gev[i]);
  }
  v.require(worst_drop <= 1e-12, "GEV decreased between accepted iterates");
  v.detail << "20 runs, " << iterations << " accepted iterates, largest decrease " << num(worst_drop, 2);
}

void criterion_feature_identities(Verdict& v) {
  std::vector<Segmentation> segs;
  std::size_t mismatches = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    auto seg = oracle::random_segmentation(seed);
    const auto got = extract_features(seg).values();
    const auto want = oracle::features(seg);
    if (got != want) ++mismatches;
    segs.push_back(std::move(seg));
  }
  // segmentations produced by the library itself: truth, raw backfit and smoothed backfit
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    SynthConfig cfg;
    cfg.duration = 10.0;
    cfg.snr = 3.0;
    cfg.seed = 200 + seed;
    const auto s = generate(cfg);
    segs.push_back(s.truth);
    segs.push_back(backfit(s.rec, s.maps));
    segs.push_back(backfit(s.rec, s.maps, 30.0));
  }
  double cov_err = 0.0, product_err = 0.0;
  for (const auto& seg : segs) {
    const auto fv = extract_features(seg);
    double cov = 0.0;
    for (const auto& m : fv.states) {
      cov += m.time_cov;
      product_err = std::max(product_err, std::abs(m.occurrence * m.mean_dur / 1000.0 - m.time_cov));
    }
    cov_err = std::max(cov_err, std::abs(cov - 1.0));
  }
  v.require(mismatches == 0, "extract_features differs from the oracle");
  v.require(cov_err <= 1e-9, "coverage does not sum to 1");
  v.require(product_err <= 1e-9, "occurrence * mean duration differs from coverage");
  v.detail << "oracle mismatches " << mismatches << "/100, " << segs.size() << " segmentations, max |sum cov - 1| "
           << num(cov_err, 2) << ", max |occ*dur - cov| " << num(product_err, 2);
}

ModelSpec small_spec(ModelKind kind, std::uint64_t seed) {
  ModelSpec s;
  s.kind = kind;
  s.forest.n_estimators = 10;
  s.forest.max_depth = 6;
  s.forest.seed = seed;
  s.boost.n_rounds = 15;
  s.boost.max_depth = 3;
  s.boost.learning_rate = 0.3;
  s.boost.patience = 0;
  s.boost.seed = seed;
  s.svm.gamma_rbf = 0.2;
  return s;
}

// Largest |phi0 + sum phi - f(x)| with f evaluated independently of the explainer.
double local_accuracy_error(const TrainedModel& model, const Matrix& instances, const ShapExplanation& e) {
  const auto scores = explanation_score_fn(model)(instances);
  double worst = 0.0;
  for (std::size_t i = 0; i < instances.rows(); ++i)
    for (std::size_t c = 0; c < scores.cols(); ++c) {
      double total = e.phi0[c];
      for (std::size_t j = 0; j < e.phi[i].rows(); ++j) total += e.phi[i](j, c);
      worst = std::max(worst, std::abs(total - scores(i, c)));
    }
  return worst;
}

void criterion_shap(Verdict& v) {
  double local = 0.0, tree_vs_exact = 0.0, kernel_vs_exact = 0.0;
  std::size_t explained = 0;
  // (a) local accuracy, every method on every model it supports; d = 12 forces sampled Kernel SHAP
  for (std::size_t d : {6u, 12u}) {
    Matrix x;
    std::vector<int> y;
    oracle::three_class_data(80, d, 30 + d, x, y);
    const Matrix bg = oracle::first_rows(x, 10);
    std::vector<std::size_t> rows(10);
    std::iota(rows.begin(), rows.end(), 40);
    const Matrix inst = x.select_rows(rows);
    for (auto kind : {ModelKind::Svm, ModelKind::Forest, ModelKind::Boosted}) {
      const auto model = train(small_spec(kind, d), x, y, 3);
      std::vector<ExplainMethod> methods{ExplainMethod::Exact, ExplainMethod::Kernel};
      if (kind != ModelKind::Svm) methods.push_back(ExplainMethod::Tree);
      for (auto m : methods) {
        ExplainOptions opt;
        opt.method = m;
        opt.kernel.n_samples = 512;
        opt.kernel.seed = 9;
        const auto e = explain_model(model, bg, inst, opt);
        local = std::max(local, local_accuracy_error(model, inst, e));
        explained += inst.rows();
      }
    }
  }
  // (b) tree SHAP against exact enumeration with 10 background rows
  for (std::uint64_t seed = 0; seed < 3; ++seed)
    for (std::size_t d : {3u, 6u, 10u}) {
      Matrix x;
      std::vector<int> y;
      oracle::three_class_data(60, d, seed, x, y);
      const Matrix bg = oracle::first_rows(x, 10);
      for (auto kind : {ModelKind::Forest, ModelKind::Boosted}) {
        const auto model = train(small_spec(kind, seed), x, y, 3);
        const auto f = explanation_score_fn(model);
        for (std::size_t i = 20; i < 25; ++i)
          tree_vs_exact = std::max(tree_vs_exact,
                                   oracle::max_abs_diff(tree_shap(model, bg, x.row(i)).phi, exact_shapley(f, bg, x.row(i)).phi));
      }
    }
  // (c) kernel SHAP with a budget covering all 2^d - 2 coalitions
  for (auto kind : {ModelKind::Svm, ModelKind::Forest, ModelKind::Boosted}) {
    Matrix x;
    std::vector<int> y;
    oracle::three_class_data(50, 7, 4, x, y);
    const auto model = train(small_spec(kind, 4), x, y, 3);
    const auto f = explanation_score_fn(model);
    const Matrix bg = oracle::first_rows(x, 10);
    for (std::size_t i = 30; i < 35; ++i)
      kernel_vs_exact = std::max(kernel_vs_exact,
                                 oracle::max_abs_diff(kernel_shap(f, bg, x.row(i)).phi, exact_shapley(f, bg, x.row(i)).phi));
  }
  v.require(local <= 1e-6, "local accuracy violated");
  v.require(tree_vs_exact <= 1e-9, "tree SHAP differs from exact");
  v.require(kernel_vs_exact <= 1e-6, "enumerating kernel SHAP differs from exact");
  v.detail << "(a) " << explained << " explanations, max local error " << num(local, 2) << "; (b) max |tree-exact| "
           << num(tree_vs_exact, 2) << "; (c) max |kernel-exact| " << num(kernel_vs_exact, 2);
}

void criterion_classifiers(Verdict& v) {
  CohortConfig cc;
  cc.n_per_class = 30;
  cc.seed = 1;
  std::vector<Recording> raw;
  for (auto& s : make_cohort(cc)) raw.push_back(std::move(s.rec));
  PipelineConfig cfg;
  cfg.preprocess = default_preprocess();
  cfg.seed = 1;
  const auto seg = segment_cohort(raw, cfg);
  const std::vector<std::pair<ModelKind, double>> targets{
      {ModelKind::Svm, 0.90}, {ModelKind::Forest, 0.80}, {ModelKind::Boosted, 0.80}};
  v.detail << seg.table.n_subjects() << " subjects, 5-fold CV accuracy:";
  for (auto [kind, threshold] : targets) {
    ModelSpec spec;
    spec.kind = kind;
    const auto outcome = train_and_evaluate(seg.table, spec, std::nullopt, 5, cfg.seed);
    const double acc = outcome.cv.accuracy.mean;
    v.require(acc >= threshold, to_string(kind) + " accuracy below " + num(threshold, 2));
    v.detail << " " << to_string(kind) << " " << num(acc) << "+-" << num(outcome.cv.accuracy.std, 2);
  }
}

void criterion_metrics(Verdict& v) {
  const auto r = evaluate(std::vector<int>{0, 0, 1, 1, 2, 2}, std::vector<int>{0, 1, 1, 1, 2, 0}, 3);
  v.require(std::abs(r.macro_f1 - 0.6556) <= 1e-4, "macro-F1 of the hand example");
  Rng rng(3);
  std::size_t broken = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t k = 2 + uniform_index(rng, 4);
    const std::size_t n = 5 + uniform_index(rng, 40);
    std::vector<int> t(n), p(n), perm(k);
    for (std::size_t i = 0; i < n; ++i) {
      t[i] = static_cast<int>(uniform_index(rng, k));
      p[i] = uniform01(rng) < 0.6 ? t[i] : static_cast<int>(uniform_index(rng, k));
    }
    std::iota(perm.begin(), perm.end(), 0);
    shuffle(perm, rng);
    std::vector<int> tp(n), pp(n);
    for (std::size_t i = 0; i < n; ++i) {
      tp[i] = perm[static_cast<std::size_t>(t[i])];
      pp[i] = perm[static_cast<std::size_t>(p[i])];
    }
    const auto a = evaluate(t, p, k), b = evaluate(tp, pp, k);
    const bool same = a.accuracy == b.accuracy && std::abs(a.macro_f1 - b.macro_f1) <= 1e-12 &&
                      std::abs(a.macro_precision - b.macro_precision) <= 1e-12 &&
                      std::abs(a.macro_recall - b.macro_recall) <= 1e-12;
    if (!same) ++broken;
  }
  v.require(broken == 0, "metrics changed under class relabelling");
  v.detail << "macro-F1 " << num(r.macro_f1, 6) << ", permutation failures " << broken << "/50";
}

void criterion_statistics(Verdict& v) {
  const auto kw = kruskal_wallis({{1, 2, 3}, {4, 5, 6}, {7, 8, 9}});
  v.require(kw.statistic == 7.2, "H is not exactly 7.2");
  v.require(std::abs(kw.p_value - std::exp(-3.6)) <= 1e-9, "KW p differs from e^-3.6");
  const auto sw = shapiro_wilk(std::vector<double>{1, 2, 3});
  v.require(std::abs(sw.statistic - 1.0) <= 1e-9, "Shapiro-Wilk W of [1,2,3]");

  Rng rng(5);
  std::size_t dunn_bad = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t k = 2 + uniform_index(rng, 4);
    std::vector<std::vector<double>> groups(k);
    for (std::size_t g = 0; g < k; ++g) {
      groups[g].resize(3 + uniform_index(rng, 10));
      for (auto& x : groups[g]) x = std::round(4.0 * standard_normal(rng) + static_cast<double>(g));
    }
    for (const auto& p : dunn_posthoc(groups))
      if (!(p.p_adjusted >= p.p_value && p.p_adjusted <= 1.0)) ++dunn_bad;
  }
  v.require(dunn_bad == 0, "Dunn adjusted p outside [p, 1]");

  double mw_err = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n1 = 3 + uniform_index(rng, 15), n2 = 3 + uniform_index(rng, 15);
    std::vector<double> a(n1), b(n2);
    for (auto& x : a) x = standard_normal(rng);
    for (auto& x : b) x = standard_normal(rng) + 0.5;
    double u = 0.0;
    for (double x : a)
      for (double y : b) u += x > y ? 1.0 : 0.0;
    const double m1 = static_cast<double>(n1), m2 = static_cast<double>(n2);
    const double z = (u - m1 * m2 / 2.0) / std::sqrt(m1 * m2 * (m1 + m2 + 1.0) / 12.0);
    mw_err = std::max(mw_err, std::abs(kruskal_wallis({a, b}).statistic - z * z));
  }
  v.require(mw_err <= 1e-9, "two-group H differs from squared Mann-Whitney z");
  v.detail << "H " << num(kw.statistic, 17) << ", |p - e^-3.6| " << num(std::abs(kw.p_value - std::exp(-3.6)), 2)
           << ", W " << num(sw.statistic, 12) << ", Dunn violations " << dunn_bad << ", max |H - z^2| "
           << num(mw_err, 2);
}

void criterion_filters(Verdict& v) {
  const auto f = design_fir_bandpass(4.0, 8.0, 200.0);
  auto db = [&](double hz) { return 20.0 * std::log10(frequency_response(f, hz)); };
  const double pass = db(6.0), low = db(0.5), high = db(30.0);
  v.require(std::abs(pass) <= 1.0, "6 Hz gain outside +-1 dB");
  v.require(low <= -30.0, "0.5 Hz attenuation under 30 dB");
  v.require(high <= -30.0, "30 Hz attenuation under 30 dB");

  double z_err = 0.0, ref_err = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto rec = msaf::testing::noise_recording(300 + 17 * seed, 200.0, seed);
    Rng rng(seed + 50);
    for (std::size_t c = 0; c < rec.n_channels(); ++c)
      for (std::size_t t = 0; t < rec.n_samples(); ++t)
        rec.data(c, t) = 40.0 * rec.data(c, t) + 100.0 * static_cast<double>(c) + uniform01(rng);
    const auto z = zscore_channels(rec);
    const double n = static_cast<double>(z.n_samples());
    for (std::size_t c = 0; c < z.n_channels(); ++c) {
      double mean = 0.0, sq = 0.0;
      for (std::size_t t = 0; t < z.n_samples(); ++t) mean += z.data(c, t);
      mean /= n;
      for (std::size_t t = 0; t < z.n_samples(); ++t) sq += (z.data(c, t) - mean) * (z.data(c, t) - mean);
      z_err = std::max({z_err, std::abs(mean), std::abs(std::sqrt(sq / n) - 1.0)});
    }
    const auto r = average_reference(rec);
    for (std::size_t t = 0; t < r.n_samples(); ++t) {
      double col = 0.0;
      for (std::size_t c = 0; c < r.n_channels(); ++c) col += r.data(c, t);
      ref_err = std::max(ref_err, std::abs(col / static_cast<double>(r.n_channels())));
    }
  }
  v.require(z_err <= 1e-9, "z-score mean/std off by more than 1e-9");
  v.require(ref_err <= 1e-9, "average reference column mean above 1e-9");
  v.detail << "6 Hz " << num(pass, 3) << " dB, 0.5 Hz " << num(low, 3) << " dB, 30 Hz " << num(high, 3)
           << " dB; z-score error " << num(z_err, 2) << ", avg-ref column mean " << num(ref_err, 2);
}

void criterion_band_sweep(Verdict& v) {
  TempDir dir;
  write_cohort(make_cohort(theta_encoded_cohort(10, 3)), dir / "cohort");
  write_text_atomic(dir / "sweep.json", R"({"input_dir": "cohort", "seed": 3})");
  const int code = run_cli("--config " + q(dir / "sweep.json") + " --out " + q(dir / "sweep") +
                               " band-sweep --bands delta,theta,alpha,beta",
                           dir / "log.txt");
  v.require(code == 0, "band-sweep exited with " + std::to_string(code));
  if (code != 0) return;
  const auto j = nlohmann::json::parse(read_text(dir / "sweep" / "band_sweep.json"));
  const auto top = j["ranking"][0].get<std::string>();
  v.require(top == "theta", "top band is " + top);
  v.detail << "ranking";
  for (const auto& b : j["bands"])
    v.detail << " " << b["band"].get<std::string>() << "=" << num(b["accuracy_mean"].get<double>(), 3);
  v.detail << ", first " << top;
}

void criterion_determinism(Verdict& v) {
  TempDir dir;
  CohortConfig cc;
  cc.n_per_class = 6;
  cc.base.duration = 15.0;
  cc.base.snr = 4.0;
  cc.seed = 8;
  write_cohort(make_cohort(cc), dir / "cohort");
  std::size_t compared = 0;
  for (const std::string model : {"svm", "rf", "gbt"}) {
    const auto cfg = dir / (model + ".json");
    write_text_atomic(cfg, R"({"input_dir": "cohort", "seed": 17, "model": {"kind": ")" + model +
                               R"("}, "explain": {"split": "test", "kernel_samples": 256}})");
    std::vector<fs::path> outs;
    for (const char* threads : {"1", "1", "3"}) {
      const auto out = dir / (model + "_" + std::to_string(outs.size()) + "_t" + threads);
      const int code = run_cli("--config " + q(cfg) + " --threads " + threads + " --out " + q(out) + " run",
                               dir / "log.txt");
      v.require(code == 0, model + " run exited with " + std::to_string(code));
      if (code != 0) return;
      outs.push_back(out);
    }
    for (const char* name : {"features.csv", "eval.json", "shap.json"})
      for (std::size_t i = 1; i < outs.size(); ++i, ++compared)
        v.require(read_text(outs[0] / name) == read_text(outs[i] / name),
                  model + " " + name + " differs between runs");
  }
  v.detail << "svm/rf/gbt runs at --threads 1, 1, 3: " << compared << " artifact pairs compared byte for byte";
}

struct Criterion {
  int id;
  std::string name;
  double limit_s;  // 0 = no runtime bound
  std::function<void(Verdict&)> body;
};

}  // namespace

int main() {
  spdlog::set_level(spdlog::level::warn);
  const std::vector<Criterion> criteria{
      {1, "noiseless recovery", 10.0, criterion_noiseless_recovery},
      {2, "GEV monotonicity", 0.0, criterion_gev_monotone},
      {3, "feature identities", 0.0, criterion_feature_identities},
      {4, "SHAP correctness", 60.0, criterion_shap},
      {5, "classifier sanity", 120.0, criterion_classifiers},
      {6, "metrics", 0.0, criterion_metrics},
      {7, "statistics", 0.0, criterion_statistics},
      {8, "filters", 0.0, criterion_filters},
      {9, "band-sweep direction", 0.0, criterion_band_sweep},
      {10, "determinism", 0.0, criterion_determinism},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    Verdict v;
    const auto start = std::chrono::steady_clock::now();
    try {
      c.body(v);
    } catch (const std::exception& e) {
      v.failures.push_back(std::string("threw ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (c.limit_s > 0.0 && secs >= c.limit_s) v.failures.push_back("runtime over " + num(c.limit_s, 3) + " s");
    const bool pass = v.failures.empty();
    if (!pass) ++failed;
    std::printf("criterion %2d %s  %s: %s (%.1f s)", c.id, pass ? "PASS" : "FAIL", c.name.c_str(),
                v.detail.str().c_str(), secs);
    for (const auto& f : v.failures) std::printf(" [%s]", f.c_str());
    std::printf("\n");
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
