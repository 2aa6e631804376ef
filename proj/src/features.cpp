#include "msaf/features.hpp"

#include <algorithm>
#include <set>

#include "msaf/error.hpp"

namespace msaf {

std::vector<StateRun> state_runs(std::span<const int> states) {
  std::vector<StateRun> runs;
  std::size_t start = 0;
  for (std::size_t t = 1; t <= states.size(); ++t) {
    if (t == states.size() || states[t] != states[start]) {
      runs.push_back({states[start], start, t - start});
      start = t;
    }
  }
  return runs;
}

std::vector<double> FeatureVector::values() const {
  std::vector<double> out;
  out.reserve(states.size() * 5 + 1);
  for (const auto& s : states) {
    out.push_back(s.gev);
    out.push_back(s.mean_corr);
    out.push_back(s.occurrence);
    out.push_back(s.time_cov);
    out.push_back(s.mean_dur);
  }
  out.push_back(gfp);
  return out;
}

std::vector<std::string> feature_names(const std::vector<std::string>& state_labels) {
  std::vector<std::string> names;
  for (const auto& l : state_labels)
    for (const char* suffix : {"_gev", "_meancorr", "_occurrence", "_timecov", "_meandur"})
      names.push_back(l + suffix);
  names.push_back("gfp");
  return names;
}

FeatureVector extract_features(const Segmentation& seg, const FeatureOptions& opt) {
  const std::size_t t_len = seg.size();
  if (!(seg.fs > 0.0)) throw Error(ErrorCode::InvalidRate, "segmentation has no sampling rate");
  const double duration = static_cast<double>(t_len) / seg.fs;
  if (t_len == 0 || duration < 1.0)
    throw Error(ErrorCode::TooShort, "segmentation covers " + format_double(duration) + " s, need >= 1 s");
  if (seg.corr.size() != t_len || seg.gfp.values.size() != t_len)
    throw Error(ErrorCode::LengthMismatch, "states, corr and gfp differ in length");

  const std::size_t k = seg.source_maps.k();
  FeatureVector fv;
  fv.state_labels = seg.source_maps.labels;
  fv.states.assign(k, {});

  std::vector<double> gev_num(k, 0.0), corr_sum(k, 0.0);
  std::vector<std::size_t> count(k, 0);
  double gev_den = 0.0;
  for (std::size_t t = 0; t < t_len; ++t) {
    const double g2 = seg.gfp.values[t] * seg.gfp.values[t];
    gev_den += g2;
    const int s = seg.states[t];
    if (s < 0) continue;
    if (static_cast<std::size_t>(s) >= k) throw Error(ErrorCode::InconsistentStates, "state index out of range");
    const auto u = static_cast<std::size_t>(s);
    gev_num[u] += g2 * seg.corr[t] * seg.corr[t];
    corr_sum[u] += seg.corr[t];
    ++count[u];
  }
  if (!(gev_den > 0.0)) throw Error(ErrorCode::ZeroGfp, "GFP is zero throughout");

  std::vector<std::size_t> n_runs(k, 0), run_samples(k, 0);
  auto runs = state_runs(seg.states);
  for (std::size_t r = 0; r < runs.size(); ++r) {
    if (runs[r].state < 0) continue;
    if (opt.trim_edge_runs && (r == 0 || r + 1 == runs.size())) continue;
    const auto u = static_cast<std::size_t>(runs[r].state);
    ++n_runs[u];
    run_samples[u] += runs[r].length;
  }

  for (std::size_t s = 0; s < k; ++s) {
    auto& m = fv.states[s];
    if (count[s] == 0) continue;
    m.gev = gev_num[s] / gev_den;
    m.mean_corr = corr_sum[s] / static_cast<double>(count[s]);
    m.time_cov = static_cast<double>(count[s]) / static_cast<double>(t_len);
    if (n_runs[s] == 0) continue;
    m.occurrence = static_cast<double>(n_runs[s]) / duration;
    m.mean_dur = static_cast<double>(run_samples[s]) / static_cast<double>(n_runs[s]) * 1000.0 / seg.fs;
  }

  if (opt.gfp_aggregate == GfpAggregate::Mean) {
    double sum = 0.0;
    for (double g : seg.gfp.values) sum += g;
    fv.gfp = sum / static_cast<double>(t_len);
  } else {
    std::vector<double> v = seg.gfp.values;
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    fv.gfp = v[mid];
    if (v.size() % 2 == 0) {
      const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
      fv.gfp = 0.5 * (fv.gfp + lower);
    }
  }
  return fv;
}

FeatureTable build_feature_table(const std::vector<std::string>& subject_ids,
                                 const std::vector<FeatureVector>& vectors,
                                 const std::vector<std::string>& class_labels,
                                 std::vector<std::string> class_order) {
  if (subject_ids.size() != vectors.size() || class_labels.size() != vectors.size())
    throw Error(ErrorCode::LengthMismatch, "subject ids, vectors and labels differ in count");
  if (vectors.empty()) throw Error(ErrorCode::TooFewSamples, "no subjects");

  FeatureTable table;
  table.feature_names = feature_names(vectors.front().state_labels);
  if (class_order.empty()) class_order = default_class_order(class_labels);
  table.class_names = class_order;

  std::set<std::string> seen;
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    if (vectors[i].state_labels != vectors.front().state_labels)
      throw Error(ErrorCode::InconsistentStates, "subject " + subject_ids[i] + " uses a different state set");
    if (!seen.insert(subject_ids[i]).second)
      throw Error(ErrorCode::DuplicateSubject, "subject " + subject_ids[i] + " appears twice");
    const int cls = table.class_index(class_labels[i]);
    if (cls < 0) throw Error(ErrorCode::InvalidConfig, "label " + class_labels[i] + " not in class order");
    table.subject_ids.push_back(subject_ids[i]);
    table.labels.push_back(cls);
    table.values.append_row(vectors[i].values());
  }
  return table;
}

}  // namespace msaf
