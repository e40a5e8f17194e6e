#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <initializer_list>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "cttvae/classifiers.hpp"
#include "cttvae/trainer.hpp"
#include "cttvae/vae.hpp"

namespace cttvae {

struct DataConfig {
  std::string path;
  std::string target;
  double test_fraction = 0.2;
  std::vector<std::string> drop_columns;
  int max_modes = 10;
};

struct GenerationConfig {
  int k = 5;
  double metric_p = 2.0;
  bool balanced = false;
  std::map<std::string, std::size_t> per_class_counts;  // empty = mirror training counts
  std::vector<std::uint64_t> seeds{0, 1, 2};
};

struct EvaluationConfig {
  ClassifierConfig classifier;
  double subsample_fraction = 0.15;
  double percentile = 5.0;
  int repeats = 1;
};

struct RunConfig {
  DataConfig data;
  ModelConfig model;
  LossWeights loss;
  double lambda = 1.0;
  int batch_size = 64;
  int epochs = 50;
  double learning_rate = 1e-3;
  double l2scale = 1e-5;
  std::uint64_t seed = 0;
  SemiHardWindow window = SemiHardWindow::min_positive;
  GenerationConfig generation;
  EvaluationConfig evaluation;

  TrainOptions train_options() const {
    TrainOptions o;
    o.batch_size = batch_size;
    o.epochs = epochs;
    o.learning_rate = learning_rate;
    o.l2scale = l2scale;
    o.seed = seed;
    o.lambda = lambda;
    o.weights = loss;
    o.window = window;
    return o;
  }
};

namespace detail {

inline bool one_of(double v, std::initializer_list<double> set) {
  return std::any_of(set.begin(), set.end(), [&](double s) { return std::abs(v - s) <= 1e-12 * std::max(1.0, std::abs(s)); });
}

inline void check_keys(const nlohmann::json& j, const std::string& where, std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [k, _] : j.items())
    if (std::none_of(keys.begin(), keys.end(), [&](const char* s) { return k == s; }))
      throw ConfigError(where + ": unknown key '" + k + "'");
}

}  // namespace detail

/// Structural checks always; hyperparameter-surface ranges unless `unsafe`.
inline void validate(const RunConfig& c, bool unsafe = false) {
  c.model.validate();
  if (c.batch_size < 2) throw ConfigError("training.batch_size must be >= 2");
  if (c.epochs < 1) throw ConfigError("training.epochs must be >= 1");
  if (!(c.learning_rate > 0)) throw ConfigError("training.learning_rate must be positive");
  if (!(c.l2scale >= 0)) throw ConfigError("training.l2scale must be >= 0");
  if (!(c.lambda >= 0 && c.lambda <= 1)) throw ConfigError("tbs.lambda must lie in [0, 1]");
  if (!(c.loss.margin > 0)) throw ConfigError("loss.margin must be positive");
  if (!(c.loss.alpha >= 0) || !(c.loss.beta >= 0)) throw ConfigError("loss weights must be >= 0");
  if (!(c.data.test_fraction > 0 && c.data.test_fraction < 1)) throw ConfigError("data.test_fraction must lie in (0, 1)");
  if (c.data.max_modes < 1) throw ConfigError("data.max_modes must be >= 1");
  if (c.generation.k < 2) throw ConfigError("generation.k must be >= 2");
  if (!(c.generation.metric_p >= 1)) throw ConfigError("generation.metric_p must be >= 1");
  if (!(c.evaluation.subsample_fraction > 0 && c.evaluation.subsample_fraction <= 1))
    throw ConfigError("evaluation.subsample_fraction must lie in (0, 1]");
  if (!(c.evaluation.percentile > 0 && c.evaluation.percentile < 100))
    throw ConfigError("evaluation.percentile must lie in (0, 100)");
  if (c.evaluation.repeats < 1) throw ConfigError("evaluation.repeats must be >= 1");
  if (unsafe) return;

  using detail::one_of;
  if (!one_of(c.batch_size, {16, 32, 64})) throw ConfigError("training.batch_size must be one of {16, 32, 64}");
  if (!one_of(c.epochs, {10, 50, 100, 150})) throw ConfigError("training.epochs must be one of {10, 50, 100, 150}");
  if (!one_of(c.model.latent_dim, {16, 32, 64})) throw ConfigError("model.latent_dim must be one of {16, 32, 64}");
  if (!attention_shape_allowed(c.model.embedding_dim, c.model.nhead))
    throw ConfigError("model.(embedding_dim, nhead) must be one of (64,4), (128,4), (128,8), (256,8)");
  if (!one_of(c.model.dim_feedforward, {512, 1024, 2048}))
    throw ConfigError("model.dim_feedforward must be one of {512, 1024, 2048}");
  if (!(c.loss.margin >= 0.1 && c.loss.margin <= 1.0)) throw ConfigError("loss.margin must lie in [0.1, 1.0]");
  if (!one_of(c.loss.alpha, {0, 0.5, 1, 2, 5})) throw ConfigError("loss.alpha must be one of {0, 0.5, 1, 2, 5}");
  if (!one_of(c.l2scale, {1e-5, 1e-4, 1e-3})) throw ConfigError("training.l2scale must be one of {1e-5, 1e-4, 1e-3}");
  if (!one_of(c.lambda, {0.3, 0.5, 0.7, 0.9, 1.0})) throw ConfigError("tbs.lambda must be one of {0.3, 0.5, 0.7, 0.9, 1.0}");
  c.evaluation.classifier.validate();
}

inline nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j;
  j["data"] = {{"path", c.data.path},
               {"target", c.data.target},
               {"test_fraction", c.data.test_fraction},
               {"drop_columns", c.data.drop_columns},
               {"max_modes", c.data.max_modes}};
  j["model"] = to_json(c.model);
  j["loss"] = {{"alpha", c.loss.alpha}, {"beta", c.loss.beta}, {"margin", c.loss.margin},
               {"semi_hard_window", c.window == SemiHardWindow::min_positive ? "min_positive" : "chosen_positive"}};
  j["tbs"] = {{"lambda", c.lambda}};
  j["training"] = {{"batch_size", c.batch_size}, {"epochs", c.epochs}, {"learning_rate", c.learning_rate},
                   {"l2scale", c.l2scale},       {"seed", c.seed}};
  j["generation"] = {{"k", c.generation.k},
                     {"metric_p", c.generation.metric_p},
                     {"balanced", c.generation.balanced},
                     {"per_class_counts", c.generation.per_class_counts},
                     {"seeds", c.generation.seeds}};
  j["evaluation"] = {{"classifier", to_json(c.evaluation.classifier)},
                     {"subsample_fraction", c.evaluation.subsample_fraction},
                     {"percentile", c.evaluation.percentile},
                     {"repeats", c.evaluation.repeats}};
  return j;
}

/// Missing keys keep their defaults; unknown keys are rejected.
inline RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig c;
  try {
    detail::check_keys(j, "config", {"data", "model", "loss", "tbs", "training", "generation", "evaluation"});
    if (j.contains("data")) {
      const auto& d = j["data"];
      detail::check_keys(d, "data", {"path", "target", "test_fraction", "drop_columns", "max_modes"});
      c.data.path = d.value("path", c.data.path);
      c.data.target = d.value("target", c.data.target);
      c.data.test_fraction = d.value("test_fraction", c.data.test_fraction);
      c.data.drop_columns = d.value("drop_columns", c.data.drop_columns);
      c.data.max_modes = d.value("max_modes", c.data.max_modes);
    }
    if (j.contains("model")) {
      detail::check_keys(j["model"], "model",
                         {"latent_dim", "embedding_dim", "nhead", "dim_feedforward", "num_layers", "dropout"});
      c.model = model_config_from_json(j["model"]);
    }
    if (j.contains("loss")) {
      const auto& l = j["loss"];
      detail::check_keys(l, "loss", {"alpha", "beta", "margin", "semi_hard_window"});
      c.loss.alpha = l.value("alpha", c.loss.alpha);
      c.loss.beta = l.value("beta", c.loss.beta);
      c.loss.margin = l.value("margin", c.loss.margin);
      auto w = l.value("semi_hard_window", std::string("min_positive"));
      if (w == "min_positive") c.window = SemiHardWindow::min_positive;
      else if (w == "chosen_positive") c.window = SemiHardWindow::chosen_positive;
      else throw ConfigError("loss.semi_hard_window must be min_positive or chosen_positive");
    }
    if (j.contains("tbs")) {
      detail::check_keys(j["tbs"], "tbs", {"lambda"});
      c.lambda = j["tbs"].value("lambda", c.lambda);
    }
    if (j.contains("training")) {
      const auto& t = j["training"];
      detail::check_keys(t, "training", {"batch_size", "epochs", "learning_rate", "l2scale", "seed"});
      c.batch_size = t.value("batch_size", c.batch_size);
      c.epochs = t.value("epochs", c.epochs);
      c.learning_rate = t.value("learning_rate", c.learning_rate);
      c.l2scale = t.value("l2scale", c.l2scale);
      c.seed = t.value("seed", c.seed);
    }
    if (j.contains("generation")) {
      const auto& g = j["generation"];
      detail::check_keys(g, "generation", {"k", "metric_p", "balanced", "per_class_counts", "seeds"});
      c.generation.k = g.value("k", c.generation.k);
      c.generation.metric_p = g.value("metric_p", c.generation.metric_p);
      c.generation.balanced = g.value("balanced", c.generation.balanced);
      c.generation.per_class_counts = g.value("per_class_counts", c.generation.per_class_counts);
      c.generation.seeds = g.value("seeds", c.generation.seeds);
    }
    if (j.contains("evaluation")) {
      const auto& e = j["evaluation"];
      detail::check_keys(e, "evaluation", {"classifier", "subsample_fraction", "percentile", "repeats"});
      if (e.contains("classifier")) {
        detail::check_keys(e["classifier"], "evaluation.classifier",
                           {"kind", "iterations", "depth", "learning_rate", "subsample", "C", "seed"});
        c.evaluation.classifier = classifier_config_from_json(e["classifier"]);
      }
      c.evaluation.subsample_fraction = e.value("subsample_fraction", c.evaluation.subsample_fraction);
      c.evaluation.percentile = e.value("percentile", c.evaluation.percentile);
      c.evaluation.repeats = e.value("repeats", c.evaluation.repeats);
    }
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(std::string("config: ") + ex.what());
  }
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError("config " + path + ": " + ex.what());
  }
  return run_config_from_json(j);
}

}  // namespace cttvae
