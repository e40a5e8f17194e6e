#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cttvae/classifiers.hpp"
#include "cttvae/metrics.hpp"

namespace cttvae {

struct EvalOptions {
  ClassifierConfig classifier;
  int repeats = 1;  // classifier refits with seeds seed, seed+1, ...
  PrivacyOptions privacy;
};

/// Per-class F1 of one training table, averaged over classifier repeats.
struct F1Stats {
  std::vector<double> mean, std;
  int repeats = 1;
  std::vector<std::string> degenerate;  // test classes absent from the training table
};

inline double mean_of(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

/// Sample standard deviation (n - 1); 0 for fewer than two values.
inline double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

/// Train on `train`, score per-class F1 on `test`.
inline F1Stats train_test_f1(const Table& train, const Table& test, const TableSchema& schema,
                             const ClassifierConfig& clf, int repeats) {
  if (repeats < 1) throw Error("repeats must be >= 1");
  const int k = static_cast<int>(schema.num_classes());
  auto tr = classifier_features(train, schema);
  auto te = classifier_features(test, schema);
  std::vector<bool> in_train(static_cast<std::size_t>(k)), in_test(in_train);
  for (int y : tr.y) in_train[static_cast<std::size_t>(y)] = true;
  for (int y : te.y) in_test[static_cast<std::size_t>(y)] = true;
  F1Stats out;
  out.repeats = repeats;
  for (int c = 0; c < k; ++c)
    if (in_test[static_cast<std::size_t>(c)] && !in_train[static_cast<std::size_t>(c)])
      out.degenerate.push_back(schema.class_vocab[static_cast<std::size_t>(c)]);
  std::vector<std::vector<double>> runs(static_cast<std::size_t>(k));
  for (int r = 0; r < repeats; ++r) {
    ClassifierConfig cfg = clf;
    cfg.seed = clf.seed + static_cast<std::uint64_t>(r);
    std::vector<double> f1(static_cast<std::size_t>(k), 0.0);
    if (!tr.y.empty()) {
      auto model = make_classifier(cfg);
      model->fit(tr.x, tr.y, k);
      f1 = f1_per_class(te.y, model->predict(te.x), k);
    }
    for (int c = 0; c < k; ++c) {
      const auto cc = static_cast<std::size_t>(c);
      runs[cc].push_back(in_train[cc] ? f1[cc] : 0.0);
    }
  }
  for (const auto& v : runs) {
    out.mean.push_back(mean_of(v));
    out.std.push_back(std_of(v));
  }
  return out;
}

struct UtilityResult {
  F1Stats synthetic;
  F1Stats real;
};

/// Train-on-synthetic / test-on-real F1, next to the train-on-real baseline.
inline UtilityResult mle_utility(const Table& synth, const Table& real_train, const Table& real_test,
                                 const TableSchema& schema, const ClassifierConfig& clf, int repeats) {
  return {train_test_f1(synth, real_test, schema, clf, repeats),
          train_test_f1(real_train, real_test, schema, clf, repeats)};
}

/// Metrics of one synthetic table.
struct GenerationMetrics {
  std::vector<double> f1;
  std::vector<std::string> degenerate;
  std::vector<std::optional<double>> wd, jsd;
  CorrelationResult corr;
  std::vector<PrivacyClass> privacy;
};

inline GenerationMetrics evaluate_generation(const Table& synth, const Table& real_train, const Table& real_test,
                                             const TableSchema& schema, const EvalOptions& opt) {
  GenerationMetrics g;
  auto f1 = train_test_f1(synth, real_test, schema, opt.classifier, opt.repeats);
  g.f1 = f1.mean;
  g.degenerate = f1.degenerate;
  g.wd = wasserstein_per_class(real_train, synth, schema);
  g.jsd = jsd_per_class(real_train, synth, schema);
  g.corr = correlation_error(real_train, synth, schema);
  g.privacy = privacy_scores(real_train, synth, schema, opt.privacy);
  return g;
}

namespace detail {

/// {"mean": m, "std": s} with std only for two or more values; null when every value is N/A.
inline nlohmann::json summary(const std::vector<std::optional<double>>& vals) {
  std::vector<double> v;
  for (const auto& x : vals)
    if (x) v.push_back(*x);
  if (v.empty()) return nullptr;
  nlohmann::json j{{"mean", mean_of(v)}};
  if (v.size() > 1) j["std"] = std_of(v);
  if (v.size() != vals.size()) j["n"] = v.size();
  return j;
}

/// Per-class block with Maj/Min aliases; `get(gen, class)` reads one value.
template <class Get>
nlohmann::json per_class_block(const TableSchema& schema, std::size_t generations, Get get) {
  nlohmann::json out = nlohmann::json::object();
  nlohmann::json per = nlohmann::json::object();
  const std::size_t k = schema.num_classes();
  for (std::size_t c = 0; c < k; ++c) {
    std::vector<std::optional<double>> vals;
    for (std::size_t g = 0; g < generations; ++g) vals.push_back(get(g, c));
    per[schema.class_vocab[c]] = summary(vals);
  }
  out["Maj"] = per[schema.class_vocab.front()];
  out["Min"] = per[schema.class_vocab.back()];
  out["per_class"] = per;
  return out;
}

}  // namespace detail

/// Full report over one or more synthetic generations of the same schema.
inline nlohmann::json evaluation_report(const std::vector<Table>& synths, const Table& real_train,
                                        const Table& real_test, const TableSchema& schema, const EvalOptions& opt,
                                        const std::vector<std::string>& labels = {}) {
  if (synths.empty()) throw Error("evaluate: no synthetic tables");
  std::vector<GenerationMetrics> gens;
  for (const auto& s : synths) gens.push_back(evaluate_generation(s, real_train, real_test, schema, opt));
  auto baseline = train_test_f1(real_train, real_test, schema, opt.classifier, opt.repeats);
  const std::size_t n = gens.size();

  nlohmann::json rep;
  rep["protocol"] = {
      {"classifier", to_json(opt.classifier)},
      {"classifier_repeats", opt.repeats},
      {"generations", n},
      {"privacy",
       {{"subsample_fraction", opt.privacy.subsample_fraction},
        {"percentile", opt.privacy.percentile},
        {"seed", opt.privacy.seed},
        {"normalization", "z-score with real subsample statistics"},
        {"features", "numerical and one-hot categorical, target excluded"},
        {"distance", "euclidean"}}},
      {"wd_scaling", "per-class min-max of real"},
      {"jsd_log_base", 2},
      {"correlation_categoricals", "vocabulary codes"},
      {"percentile_interpolation", "linear"}};
  if (!labels.empty()) rep["protocol"]["synthetic_inputs"] = labels;
  rep["classes"] = {{"order", schema.class_vocab},
                    {"majority", schema.class_vocab.front()},
                    {"minority", schema.class_vocab.back()}};

  nlohmann::json real_per = nlohmann::json::object();
  for (std::size_t c = 0; c < schema.num_classes(); ++c) {
    nlohmann::json j{{"mean", baseline.mean[c]}};
    if (baseline.repeats > 1) j["std"] = baseline.std[c];
    real_per[schema.class_vocab[c]] = j;
  }
  rep["utility"]["real_baseline_f1"] = {{"Maj", real_per[schema.class_vocab.front()]},
                                        {"Min", real_per[schema.class_vocab.back()]},
                                        {"per_class", real_per}};
  rep["utility"]["synthetic_f1"] =
      detail::per_class_block(schema, n, [&](std::size_t g, std::size_t c) -> std::optional<double> { return gens[g].f1[c]; });
  std::vector<std::string> degenerate;
  for (const auto& g : gens)
    for (const auto& d : g.degenerate)
      if (std::find(degenerate.begin(), degenerate.end(), d) == degenerate.end()) degenerate.push_back(d);
  rep["utility"]["degenerate_training_classes"] = degenerate;

  rep["fidelity"]["wd"] = detail::per_class_block(schema, n, [&](std::size_t g, std::size_t c) { return gens[g].wd[c]; });
  bool any_cat = false;
  for (const auto& c : schema.columns)
    if (c.kind == ColumnKind::categorical && c.name != schema.target) any_cat = true;
  if (any_cat)
    rep["fidelity"]["jsd"] = detail::per_class_block(schema, n, [&](std::size_t g, std::size_t c) { return gens[g].jsd[c]; });
  else
    rep["fidelity"]["jsd"] = "N/A";
  std::vector<std::optional<double>> corr;
  std::vector<std::string> zero_var;
  for (const auto& g : gens) {
    corr.push_back(g.corr.percent);
    for (const auto& z : g.corr.zero_variance)
      if (std::find(zero_var.begin(), zero_var.end(), z) == zero_var.end()) zero_var.push_back(z);
  }
  rep["fidelity"]["correlation_error_percent"] = detail::summary(corr);
  rep["fidelity"]["zero_variance_columns"] = zero_var;

  rep["privacy"]["dcr"] =
      detail::per_class_block(schema, n, [&](std::size_t g, std::size_t c) { return gens[g].privacy[c].dcr; });
  rep["privacy"]["nndr"] =
      detail::per_class_block(schema, n, [&](std::size_t g, std::size_t c) { return gens[g].privacy[c].nndr; });
  nlohmann::json flags = nlohmann::json::object();
  for (std::size_t c = 0; c < schema.num_classes(); ++c)
    for (const auto& g : gens)
      if (!g.privacy[c].flag.empty()) flags[schema.class_vocab[c]] = g.privacy[c].flag;
  rep["privacy"]["flags"] = flags;
  return rep;
}

/// Mean |delta rho| matrix over generations as a CSV table with a leading name column.
inline Table correlation_heatmap(const std::vector<Table>& synths, const Table& real, const TableSchema& schema) {
  RowMatrix acc;
  for (const auto& s : synths) {
    auto r = correlation_error(real, s, schema);
    if (acc.size() == 0) acc = r.abs_delta;
    else acc += r.abs_delta;
  }
  acc /= static_cast<double>(synths.size());
  Table t;
  t.header.push_back("column");
  for (const auto& c : schema.columns) t.header.push_back(c.name);
  for (Eigen::Index i = 0; i < acc.rows(); ++i) {
    std::vector<std::string> row{schema.columns[static_cast<std::size_t>(i)].name};
    for (Eigen::Index j = 0; j < acc.cols(); ++j) row.push_back(format_double(acc(i, j)));
    t.rows.push_back(std::move(row));
  }
  return t;
}

}  // namespace cttvae
