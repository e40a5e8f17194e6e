#pragma once

#include <random>
#include <string>

#include "cttvae/core.hpp"
#include "cttvae/csv.hpp"

namespace cttvae {

struct BlobOptions {
  std::size_t majority = 1800;
  std::size_t minority = 200;
  double separation = 3.0;  // per-coordinate mean shift of the minority blob
  std::uint64_t seed = 0;
};

/// Two-class mixed-type table: four numerical features (x1..x4), one
/// categorical feature (color) and the target column "label" with values
/// "0" (majority) and "1" (minority). The majority's x1 is bimodal.
inline Table make_blobs(const BlobOptions& opt = {}) {
  Rng rng{opt.seed};
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif;
  Table t;
  t.header = {"x1", "x2", "x3", "x4", "color", "label"};
  auto pick_color = [&](double pa, double pb) -> std::string {
    double u = unif(rng);
    return u < pa ? "red" : (u < pa + pb ? "green" : "blue");
  };
  auto emit = [&](bool minority) {
    std::vector<std::string> row;
    const double shift = minority ? opt.separation : 0.0;
    double x1 = minority ? shift + normal(rng) : (unif(rng) < 0.5 ? -2.0 : 2.0) + 0.6 * normal(rng);
    if (minority) x1 += 2.0;
    row.push_back(format_double(x1));
    for (int k = 0; k < 3; ++k) row.push_back(format_double(shift + normal(rng)));
    row.push_back(minority ? pick_color(0.1, 0.3) : pick_color(0.7, 0.25));
    row.push_back(minority ? "1" : "0");
    t.rows.push_back(std::move(row));
  };
  std::bernoulli_distribution is_min(static_cast<double>(opt.minority) /
                                     static_cast<double>(opt.majority + opt.minority));
  std::size_t left_maj = opt.majority, left_min = opt.minority;
  while (left_maj + left_min > 0) {
    bool m = left_maj == 0 || (left_min > 0 && is_min(rng));
    emit(m);
    (m ? left_min : left_maj)--;
  }
  return t;
}

}  // namespace cttvae
