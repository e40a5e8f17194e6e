#pragma once

#include <random>
#include <span>
#include <vector>

#include "cttvae/core.hpp"

namespace cttvae {

/// Smoothed class distribution lambda * empirical + (1 - lambda) * uniform.
struct ClassPMF {
  std::vector<double> probs;
  double lambda = 1.0;
  std::vector<std::size_t> class_counts;
};

inline ClassPMF class_pmf(std::span<const std::size_t> class_counts, double lambda) {
  if (class_counts.size() < 2) throw Error("class_pmf: at least 2 classes required");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw Error("class_pmf: lambda must lie in [0, 1]");
  double total = 0.0;
  for (auto c : class_counts) {
    if (c == 0) throw Error("class_pmf: every class needs at least one row");
    total += static_cast<double>(c);
  }
  const double k = static_cast<double>(class_counts.size());
  ClassPMF pmf;
  pmf.lambda = lambda;
  pmf.class_counts.assign(class_counts.begin(), class_counts.end());
  for (auto c : class_counts) pmf.probs.push_back(lambda * (static_cast<double>(c) / total) + (1.0 - lambda) / k);
  return pmf;
}

/// Row indices grouped by class label; lists are disjoint and cover every row.
struct ClassIndex {
  std::vector<std::vector<std::size_t>> rows;

  static ClassIndex from_labels(std::span<const int> labels, std::size_t num_classes) {
    ClassIndex idx;
    idx.rows.resize(num_classes);
    for (std::size_t r = 0; r < labels.size(); ++r) {
      auto c = labels[r];
      if (c < 0 || static_cast<std::size_t>(c) >= num_classes) throw Error("ClassIndex: label out of range");
      idx.rows[static_cast<std::size_t>(c)].push_back(r);
    }
    return idx;
  }

  std::vector<std::size_t> counts() const {
    std::vector<std::size_t> c;
    for (const auto& r : rows) c.push_back(r.size());
    return c;
  }
};

/// Per slot: class ~ pmf, then a row drawn uniformly (with replacement) from that class.
inline std::vector<std::size_t> sample_batch(const ClassIndex& index, const ClassPMF& pmf, std::size_t batch_size,
                                             Rng& rng) {
  if (batch_size < 1) throw Error("sample_batch: batch_size must be >= 1");
  if (pmf.probs.size() != index.rows.size()) throw Error("sample_batch: pmf/index class count mismatch");
  std::discrete_distribution<std::size_t> pick_class(pmf.probs.begin(), pmf.probs.end());
  std::vector<std::size_t> out;
  out.reserve(batch_size);
  for (std::size_t i = 0; i < batch_size; ++i) {
    const auto& members = index.rows[pick_class(rng)];
    if (members.empty()) throw Error("sample_batch: drew a class with no rows");
    std::uniform_int_distribution<std::size_t> pick_row(0, members.size() - 1);
    out.push_back(members[pick_row(rng)]);
  }
  return out;
}

}  // namespace cttvae
