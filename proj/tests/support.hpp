#pragma once

// Shared fixtures for the unit and acceptance suites.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "cttvae/pipeline.hpp"

namespace cttvae::testkit {

/// Random mixed table: `num` numerical columns n0.., `cat` categorical columns
/// c0.. (values a..d), and the target "y" with `classes` values k0...
inline Table random_table(Rng& rng, std::size_t rows, int num, int cat, int classes = 2) {
  std::normal_distribution<double> normal;
  std::uniform_int_distribution<int> level(0, 3), cls(0, classes - 1);
  Table t;
  for (int i = 0; i < num; ++i) t.header.push_back("n" + std::to_string(i));
  for (int i = 0; i < cat; ++i) t.header.push_back("c" + std::to_string(i));
  t.header.push_back("y");
  for (std::size_t r = 0; r < rows; ++r) {
    std::vector<std::string> row;
    const int y = r < static_cast<std::size_t>(classes) ? static_cast<int>(r) : cls(rng);
    for (int i = 0; i < num; ++i) row.push_back(format_double(normal(rng) * (i + 1) + y));
    for (int i = 0; i < cat; ++i) row.push_back(std::string(1, static_cast<char>('a' + level(rng))));
    row.push_back("k" + std::to_string(y));
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline TableSchema fitted_schema(const Table& t, const std::string& target, int max_modes = 10) {
  return fit_transforms(t, infer_schema(t, target), max_modes);
}

struct GradcheckResult {
  double max_rel_error = 0;
  std::size_t checked = 0;
  std::size_t below_resolution = 0;  // compared against the floor instead of their own magnitude
  double floor = 0;
  std::string worst;
};

/// Central finite differences of the combined loss against the analytic
/// parameter gradients, with noise, prior batch and triplets frozen.
inline GradcheckResult gradcheck_total_loss(TransformerVae<double>& model, const nn::Mat<double>& x,
                                            const std::vector<int>& labels, const TrainOptions& opt,
                                            std::uint64_t seed, int per_tensor = 6, double step = 1e-6) {
  Rng rng{seed};
  const auto lat = model.config().latent_dim;
  nn::Mat<double> eps = standard_normal<double>(x.rows(), lat, rng);
  nn::Mat<double> prior = standard_normal<double>(x.rows(), lat, rng);
  auto post = model.encode(x);
  Rng mining{seed + 1};
  TripletSet trip = mine_triplets(post.mu, labels, opt.weights.margin, mining, opt.window);
  StepSources<double> src{.eps = &eps, .prior_batch = &prior, .triplets = &trip};

  const double base = loss_and_gradients(model, x, labels, opt, src).total;
  std::vector<nn::Mat<double>> grads;
  for (const auto& p : model.params().all()) grads.push_back(p.grad);

  GradcheckResult res;
  // Central differences resolve gradients only down to ~eps*|L|/step; smaller
  // ones (e.g. key biases, which softmax ignores) cannot show a 1e-3 relative error.
  res.floor = std::max(1e-7, 1e3 * std::numeric_limits<double>::epsilon() * std::abs(base) / step);
  for (std::size_t pi = 0; pi < model.params().all().size(); ++pi) {
    auto& p = model.params().all()[pi];
    std::uniform_int_distribution<Eigen::Index> pick(0, p.value.size() - 1);
    for (int s = 0; s < per_tensor; ++s) {
      const Eigen::Index i = pick(rng);
      double& w = p.value.data()[i];
      const double orig = w;
      w = orig + step;
      const double lp = loss_and_gradients(model, x, labels, opt, src).total;
      w = orig - step;
      const double lm = loss_and_gradients(model, x, labels, opt, src).total;
      w = orig;
      const double numeric = (lp - lm) / (2 * step);
      const double analytic = grads[pi].data()[i];
      const double mag = std::max(std::abs(numeric), std::abs(analytic));
      res.below_resolution += mag < res.floor;
      const double denom = std::max(mag, res.floor);
      const double rel = std::abs(numeric - analytic) / denom;
      ++res.checked;
      if (rel > res.max_rel_error) {
        res.max_rel_error = rel;
        res.worst = p.name + "[" + std::to_string(i) + "] analytic " + format_double(analytic) + " numeric " +
                    format_double(numeric);
      }
    }
  }
  return res;
}

/// Fresh scratch directory under the system temp path.
inline std::string scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("cttvae_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p.string();
}

}  // namespace cttvae::testkit
