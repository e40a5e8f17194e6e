#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "cttvae/data_model.hpp"
#include "cttvae/generator.hpp"

namespace cttvae {

struct SmoteConfig {
  int k_neighbors = 5;
  std::vector<std::size_t> per_class_counts;  // indexed by class vocabulary
  std::uint64_t seed = 0;
};

/// Interpolated numerical part of one SMOTE row: base + u (neighbor - base).
inline std::vector<double> smote_interpolate(const std::vector<double>& base, const std::vector<double>& neighbor,
                                             double u) {
  std::vector<double> out(base.size());
  for (std::size_t i = 0; i < base.size(); ++i) out[i] = base[i] + u * (neighbor[i] - base[i]);
  return out;
}

/// Majority vote over neighbor categories; ties go to the base value when it is
/// tied, otherwise to the earliest vocabulary entry among the tied values.
inline std::string smote_vote(const ColumnSpec& spec, const std::string& base_value,
                              const std::vector<std::string>& neighbor_values) {
  std::vector<int> votes(spec.vocab.size(), 0);
  for (const auto& v : neighbor_values) {
    int idx = spec.category_index(v);
    if (idx >= 0) ++votes[static_cast<std::size_t>(idx)];
  }
  const int best = *std::max_element(votes.begin(), votes.end());
  int base_idx = spec.category_index(base_value);
  if (base_idx >= 0 && votes[static_cast<std::size_t>(base_idx)] == best) return base_value;
  for (std::size_t i = 0; i < votes.size(); ++i)
    if (votes[i] == best) return spec.vocab[i];
  return base_value;
}

/// Fully synthetic SMOTE/SMOTENC table: every output row interpolates a real
/// row of its class with one of its k nearest same-class neighbors (Euclidean
/// on z-scored numericals); categoricals take the neighborhood majority.
inline SyntheticTable smote_generate(const Table& train, const TableSchema& schema, const SmoteConfig& cfg, Rng& rng) {
  if (cfg.k_neighbors < 1) throw Error("smote: k_neighbors must be >= 1");
  if (cfg.per_class_counts.size() != schema.num_classes()) throw Error("smote: per-class count size mismatch");
  const auto tcol_schema = schema.target_index();
  std::vector<std::size_t> num_cols, cat_cols, src(schema.columns.size());
  for (std::size_t c = 0; c < schema.columns.size(); ++c) {
    src[c] = train.col(schema.columns[c].name);
    if (c == tcol_schema) continue;
    (schema.columns[c].kind == ColumnKind::numerical ? num_cols : cat_cols).push_back(c);
  }
  const std::size_t n = train.rows.size();
  std::vector<std::vector<double>> numv(n, std::vector<double>(num_cols.size()));
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t i = 0; i < num_cols.size(); ++i)
      if (!parse_double(train.rows[r][src[num_cols[i]]], numv[r][i]))
        throw Error("smote: non-numeric value in column " + schema.columns[num_cols[i]].name);
  std::vector<double> mean(num_cols.size(), 0.0), sd(num_cols.size(), 0.0);
  for (std::size_t i = 0; i < num_cols.size(); ++i) {
    for (std::size_t r = 0; r < n; ++r) mean[i] += numv[r][i];
    mean[i] /= static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r) sd[i] += (numv[r][i] - mean[i]) * (numv[r][i] - mean[i]);
    sd[i] = std::sqrt(sd[i] / static_cast<double>(n));
    if (!(sd[i] > 0)) sd[i] = 1.0;
  }
  auto dist2 = [&](std::size_t a, std::size_t b) {
    double s = 0;
    for (std::size_t i = 0; i < num_cols.size(); ++i) {
      double d = (numv[a][i] - numv[b][i]) / sd[i];
      s += d * d;
    }
    return s;
  };

  SyntheticTable out;
  out.provenance.method = "smote";
  out.provenance.seed = cfg.seed;
  out.provenance.k = cfg.k_neighbors;
  for (const auto& c : schema.columns) out.table.header.push_back(c.name);
  auto labels = class_counts(train, schema);  // validates class values
  (void)labels;
  const auto tsrc = train.col(schema.target);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  for (std::size_t c = 0; c < schema.num_classes(); ++c) {
    const auto want = cfg.per_class_counts[c];
    out.provenance.per_class_counts[schema.class_vocab[c]] = want;
    if (want == 0) continue;
    std::vector<std::size_t> members;
    for (std::size_t r = 0; r < n; ++r)
      if (train.rows[r][tsrc] == schema.class_vocab[c]) members.push_back(r);
    if (members.size() <= static_cast<std::size_t>(cfg.k_neighbors))
      throw Error("smote: class '" + schema.class_vocab[c] + "' has " + std::to_string(members.size()) +
                  " rows, needs more than k_neighbors = " + std::to_string(cfg.k_neighbors));
    std::vector<std::vector<std::size_t>> knn(members.size());
    std::uniform_int_distribution<std::size_t> pick_base(0, members.size() - 1);
    std::uniform_int_distribution<std::size_t> pick_nb(0, static_cast<std::size_t>(cfg.k_neighbors) - 1);
    for (std::size_t s = 0; s < want; ++s) {
      const auto bi = pick_base(rng);
      const auto base = members[bi];
      if (knn[bi].empty()) {
        std::vector<std::pair<double, std::size_t>> cand;
        for (auto j : members)
          if (j != base) cand.emplace_back(dist2(base, j), j);
        std::partial_sort(cand.begin(), cand.begin() + cfg.k_neighbors, cand.end());
        for (int q = 0; q < cfg.k_neighbors; ++q) knn[bi].push_back(cand[static_cast<std::size_t>(q)].second);
      }
      const auto nb = knn[bi][pick_nb(rng)];
      const double u = unif(rng);
      auto vals = smote_interpolate(numv[base], numv[nb], u);

      std::vector<std::string> row(schema.columns.size());
      for (std::size_t i = 0; i < num_cols.size(); ++i) row[num_cols[i]] = format_double(vals[i]);
      for (auto cc : cat_cols) {
        std::vector<std::string> nv;
        for (auto j : knn[bi]) nv.push_back(train.rows[j][src[cc]]);
        row[cc] = smote_vote(schema.columns[cc], train.rows[base][src[cc]], nv);
      }
      row[tcol_schema] = schema.class_vocab[c];
      out.table.rows.push_back(std::move(row));
      out.requested_class.push_back(static_cast<int>(c));
    }
  }
  return out;
}

}  // namespace cttvae
