#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "cttvae/data_model.hpp"
#include "cttvae/vae.hpp"

namespace cttvae {

/// Generation provenance written next to every synthetic CSV.
struct Provenance {
  std::string method = "cttvae";
  std::string checkpoint_hash;
  std::uint64_t seed = 0;
  int k = 0;
  double lambda = 1.0;
  double metric_p = 2.0;
  std::map<std::string, std::size_t> per_class_counts;
};

inline nlohmann::json to_json(const Provenance& p) {
  nlohmann::json j{{"method", p.method}, {"seed", p.seed}, {"k", p.k}, {"metric_p", p.metric_p},
                   {"per_class_counts", p.per_class_counts}};
  if (!p.checkpoint_hash.empty()) j["checkpoint_hash"] = p.checkpoint_hash;
  if (p.method == "cttvae") j["lambda"] = p.lambda;
  return j;
}

struct SyntheticTable {
  Table table;
  std::vector<int> requested_class;
  Provenance provenance;
};

/// Inverse-rank interpolation weights as integer numerators over k(k-1)/2.
inline std::vector<long> triangle_weight_numerators(int k) {
  if (k < 2) throw Error("triangle weights: k must be >= 2");
  std::vector<long> num;
  for (int r = 1; r <= k; ++r) num.push_back(k - r);
  return num;
}

inline long triangle_weight_denominator(int k) { return static_cast<long>(k) * (k - 1) / 2; }

/// w_r = (k - r) / (k(k-1)/2), r = 1..k.
inline std::vector<double> triangle_weights(int k) {
  auto num = triangle_weight_numerators(k);
  const double den = static_cast<double>(triangle_weight_denominator(k));
  std::vector<double> w;
  for (long n : num) w.push_back(static_cast<double>(n) / den);
  return w;
}

struct InterpolationSpec {
  int k = 5;
  double metric_p = 2.0;

  std::vector<double> weights() const { return triangle_weights(k); }
};

struct LatentBank {
  nn::Mat<double> z;
  nn::Mat<double> h;
  std::vector<int> y;
  double metric_p = 2.0;
  std::string checkpoint_hash;

  std::size_t size() const { return y.size(); }
  std::vector<std::size_t> members(int c) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < y.size(); ++i)
      if (y[i] == c) out.push_back(i);
    return out;
  }
};

inline bool same_layout(const std::vector<Span>& a, const std::vector<Span>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].start != b[i].start || a[i].width != b[i].width || a[i].kind != b[i].kind) return false;
  return true;
}

/// One posterior draw per training row, with its contextual embedding and label.
inline LatentBank build_latent_bank(const TransformerVae<double>& model, const EncodedMatrix& train, Rng& rng,
                                    double metric_p = 2.0, std::string checkpoint_hash = {}) {
  if (!same_layout(model.layout(), train.layout)) throw Error("latent bank: schema hash mismatch between checkpoint and data");
  LatentBank bank;
  const auto n = train.rows();
  bank.z.resize(n, model.config().latent_dim);
  bank.h.resize(n, model.config().embedding_dim);
  bank.y = train.labels;
  bank.metric_p = metric_p;
  bank.checkpoint_hash = std::move(checkpoint_hash);
  constexpr Eigen::Index chunk = 512;
  for (Eigen::Index s = 0; s < n; s += chunk) {
    const auto len = std::min(chunk, n - s);
    nn::Mat<double> x = train.data.middleRows(s, len);
    auto post = model.encode(x);
    bank.z.middleRows(s, len) = reparameterize(post, rng);
    bank.h.middleRows(s, len) = post.h;
  }
  return bank;
}

inline double minkowski(const Eigen::Ref<const nn::RowVec<double>>& a, const Eigen::Ref<const nn::RowVec<double>>& b,
                        double p) {
  if (p == 2.0) return (a - b).norm();
  if (p == 1.0) return (a - b).cwiseAbs().sum();
  if (std::isinf(p)) return (a - b).cwiseAbs().maxCoeff();
  return std::pow((a - b).cwiseAbs().array().pow(p).sum(), 1.0 / p);
}

/// The k nearest members of `pool` to bank row `base` (base itself excluded
/// once), ordered by (distance, bank index).
inline std::vector<std::size_t> nearest_in_class(const LatentBank& bank, std::size_t base,
                                                 const std::vector<std::size_t>& pool, int k) {
  std::vector<std::pair<double, std::size_t>> cand;
  cand.reserve(pool.size());
  for (auto j : pool) {
    if (j == base) continue;
    cand.emplace_back(minkowski(bank.z.row(static_cast<Eigen::Index>(base)), bank.z.row(static_cast<Eigen::Index>(j)),
                                bank.metric_p),
                      j);
  }
  const auto kk = std::min<std::size_t>(static_cast<std::size_t>(k), cand.size());
  std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(kk), cand.end());
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < kk; ++i) out.push_back(cand[i].second);
  return out;
}

struct LatentSample {
  nn::RowVec<double> z_hat;
  nn::RowVec<double> h;
  std::size_t base = 0;
  std::vector<std::size_t> neighbors;
  std::vector<double> u;
};

/// z_hat = z_i + sum_r w_r u_r (nu_r - z_i) from given neighbors and scalars.
inline nn::RowVec<double> triangle_interpolate(const nn::RowVec<double>& base,
                                               const std::vector<nn::RowVec<double>>& neighbors,
                                               const std::vector<double>& u) {
  const int k = static_cast<int>(neighbors.size());
  if (u.size() != neighbors.size()) throw Error("triangle_interpolate: u/neighbor count mismatch");
  auto w = triangle_weights(k);
  nn::RowVec<double> out = base;
  for (int r = 0; r < k; ++r) out += w[static_cast<std::size_t>(r)] * u[static_cast<std::size_t>(r)] * (neighbors[static_cast<std::size_t>(r)] - base);
  return out;
}

class ClassSampler {
 public:
  ClassSampler(const LatentBank& bank, int cls, InterpolationSpec spec) : bank_(bank), spec_(spec), members_(bank.members(cls)) {
    if (spec.k < 2) throw Error("interpolation: k must be >= 2");
    if (members_.size() < static_cast<std::size_t>(spec.k) + 1)
      throw Error("class " + std::to_string(cls) + " has " + std::to_string(members_.size()) +
                  " latent points; need at least k+1 = " + std::to_string(spec.k + 1) + " (use a smaller k)");
  }

  LatentSample sample(Rng& rng) {
    std::uniform_int_distribution<std::size_t> pick(0, members_.size() - 1);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    LatentSample s;
    s.base = members_[pick(rng)];
    auto it = cache_.find(s.base);
    if (it == cache_.end()) it = cache_.emplace(s.base, nearest_in_class(bank_, s.base, members_, spec_.k)).first;
    s.neighbors = it->second;
    std::vector<nn::RowVec<double>> nb;
    for (auto j : s.neighbors) nb.push_back(bank_.z.row(static_cast<Eigen::Index>(j)));
    for (int r = 0; r < spec_.k; ++r) s.u.push_back(unif(rng));
    s.z_hat = triangle_interpolate(bank_.z.row(static_cast<Eigen::Index>(s.base)), nb, s.u);
    s.h = bank_.h.row(static_cast<Eigen::Index>(s.base));
    return s;
  }

 private:
  const LatentBank& bank_;
  InterpolationSpec spec_;
  std::vector<std::size_t> members_;
  std::map<std::size_t, std::vector<std::size_t>> cache_;
};

/// One latent draw for class `cls` (base point uniform over the class subset).
inline LatentSample sample_latent(const LatentBank& bank, int cls, const InterpolationSpec& spec, Rng& rng) {
  ClassSampler sampler(bank, cls, spec);
  return sampler.sample(rng);
}

/// Decodes class-conditional latent draws into schema-space rows; the target
/// column carries the requested class.
inline SyntheticTable generate_table(const TransformerVae<double>& model, const TableSchema& schema,
                                     const LatentBank& bank, const std::vector<std::size_t>& per_class_counts,
                                     const InterpolationSpec& spec, Rng& rng) {
  if (per_class_counts.size() != schema.num_classes()) throw Error("generate: per-class count size mismatch");
  if (!same_layout(model.layout(), encoded_layout(schema))) throw Error("generate: checkpoint/schema mismatch");
  SyntheticTable out;
  for (const auto& c : schema.columns) out.table.header.push_back(c.name);
  const auto tcol = schema.target_index();
  out.provenance.k = spec.k;
  out.provenance.metric_p = spec.metric_p;
  out.provenance.checkpoint_hash = bank.checkpoint_hash;

  for (std::size_t c = 0; c < per_class_counts.size(); ++c) {
    const auto count = per_class_counts[c];
    out.provenance.per_class_counts[schema.class_vocab[c]] = count;
    if (count == 0) continue;
    ClassSampler sampler(bank, static_cast<int>(c), spec);
    nn::Mat<double> z(static_cast<Eigen::Index>(count), bank.z.cols());
    nn::Mat<double> h(static_cast<Eigen::Index>(count), bank.h.cols());
    for (std::size_t i = 0; i < count; ++i) {
      auto s = sampler.sample(rng);
      z.row(static_cast<Eigen::Index>(i)) = s.z_hat;
      h.row(static_cast<Eigen::Index>(i)) = s.h;
    }
    nn::Mat<double> recon = model.decode(z, h);
    Table part = decode_rows(recon, schema);
    for (auto& row : part.rows) {
      row[tcol] = schema.class_vocab[c];
      out.table.rows.push_back(std::move(row));
      out.requested_class.push_back(static_cast<int>(c));
    }
  }
  return out;
}

/// Per-class counts: mirror of the training distribution, or equal counts when balanced.
inline std::vector<std::size_t> default_class_counts(const std::vector<std::size_t>& train_counts, bool balanced) {
  if (!balanced) return train_counts;
  const auto total = std::accumulate(train_counts.begin(), train_counts.end(), std::size_t{0});
  const auto each = static_cast<std::size_t>(
      std::llround(static_cast<double>(total) / static_cast<double>(train_counts.size())));
  return std::vector<std::size_t>(train_counts.size(), each);
}

/// Latent bank as CSV (z coordinates plus class value) for external projection plots.
inline Table latent_bank_table(const LatentBank& bank, const TableSchema& schema) {
  Table t;
  for (Eigen::Index d = 0; d < bank.z.cols(); ++d) t.header.push_back("z" + std::to_string(d));
  t.header.push_back(schema.target);
  for (std::size_t i = 0; i < bank.size(); ++i) {
    std::vector<std::string> row;
    for (Eigen::Index d = 0; d < bank.z.cols(); ++d) row.push_back(format_double(bank.z(static_cast<Eigen::Index>(i), d)));
    row.push_back(schema.class_vocab[static_cast<std::size_t>(bank.y[i])]);
    t.rows.push_back(std::move(row));
  }
  return t;
}

}  // namespace cttvae
