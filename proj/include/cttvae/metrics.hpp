#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "cttvae/data_model.hpp"

namespace cttvae {

/// Percentile (0..100) with linear interpolation between order statistics.
inline double percentile_linear(std::vector<double> v, double pct) {
  if (v.empty()) throw Error("percentile of an empty sample");
  if (!(pct >= 0.0 && pct <= 100.0)) throw Error("percentile must lie in [0, 100]");
  std::sort(v.begin(), v.end());
  const double pos = pct / 100.0 * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return v[lo] + frac * (v[hi] - v[lo]);
}

/// F1 per class index; a class never predicted and never present scores 0.
inline std::vector<double> f1_per_class(const std::vector<int>& truth, const std::vector<int>& pred, int num_classes) {
  if (truth.size() != pred.size()) throw Error("f1: size mismatch");
  std::vector<double> tp(static_cast<std::size_t>(num_classes)), fp(tp), fn(tp);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] == pred[i]) {
      tp[static_cast<std::size_t>(truth[i])] += 1;
    } else {
      fp[static_cast<std::size_t>(pred[i])] += 1;
      fn[static_cast<std::size_t>(truth[i])] += 1;
    }
  }
  std::vector<double> f1(static_cast<std::size_t>(num_classes), 0.0);
  for (std::size_t c = 0; c < f1.size(); ++c) {
    const double den = 2 * tp[c] + fp[c] + fn[c];
    if (den > 0) f1[c] = 2 * tp[c] / den;
  }
  return f1;
}

/// Exact Wasserstein-1 between two empirical 1-D samples (integral of |F - G|).
inline double wasserstein_1d(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw Error("wasserstein: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double prev = std::min(a[0], b[0]), total = 0.0;
  while (i < a.size() || j < b.size()) {
    double x;
    if (j >= b.size() || (i < a.size() && a[i] <= b[j])) x = a[i];
    else x = b[j];
    total += std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb) * (x - prev);
    while (i < a.size() && a[i] == x) ++i;
    while (j < b.size() && b[j] == x) ++j;
    prev = x;
  }
  return total;
}

namespace detail {

inline std::vector<std::vector<std::size_t>> rows_by_class(const Table& t, const TableSchema& schema) {
  const auto tcol = t.col(schema.target);
  std::vector<std::vector<std::size_t>> out(schema.num_classes());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    int c = schema.columns[schema.target_index()].category_index(t.rows[r][tcol]);
    if (c >= 0) out[static_cast<std::size_t>(c)].push_back(r);
  }
  return out;
}

inline double cell_number(const Table& t, std::size_t r, std::size_t c) {
  double v;
  if (!parse_double(t.rows[r][c], v)) throw Error("non-numeric value '" + t.rows[r][c] + "' in column " + t.header[c]);
  return v;
}

inline void check_same_header(const Table& real, const Table& synth, const TableSchema& schema) {
  for (const auto& c : schema.columns)
    if (!real.has_col(c.name) || !synth.has_col(c.name)) throw Error("tables do not conform to the schema: missing " + c.name);
}

}  // namespace detail

/// Per class: mean over numerical features of W1 after min-max scaling by the
/// real class range (zero range scales by 1). N/A when either side lacks the class
/// or there are no numerical features.
inline std::vector<std::optional<double>> wasserstein_per_class(const Table& real, const Table& synth,
                                                                 const TableSchema& schema) {
  detail::check_same_header(real, synth, schema);
  auto rc = detail::rows_by_class(real, schema), sc = detail::rows_by_class(synth, schema);
  std::vector<std::optional<double>> out(schema.num_classes());
  for (std::size_t k = 0; k < out.size(); ++k) {
    if (rc[k].empty() || sc[k].empty()) continue;
    double sum = 0;
    int nfeat = 0;
    for (const auto& spec : schema.columns) {
      if (spec.kind != ColumnKind::numerical || spec.name == schema.target) continue;
      const auto cr = real.col(spec.name), cs = synth.col(spec.name);
      std::vector<double> a, b;
      for (auto r : rc[k]) a.push_back(detail::cell_number(real, r, cr));
      for (auto r : sc[k]) b.push_back(detail::cell_number(synth, r, cs));
      const auto [mn, mx] = std::minmax_element(a.begin(), a.end());
      const double lo = *mn, range = *mx - *mn > 0 ? *mx - *mn : 1.0;
      for (auto& v : a) v = (v - lo) / range;
      for (auto& v : b) v = (v - lo) / range;
      sum += wasserstein_1d(std::move(a), std::move(b));
      ++nfeat;
    }
    if (nfeat > 0) out[k] = sum / nfeat;
  }
  return out;
}

/// Base-2 Jensen-Shannon divergence between two discrete distributions.
inline double jsd_base2(const std::vector<double>& p, const std::vector<double>& q) {
  if (p.size() != q.size()) throw Error("jsd: support size mismatch");
  auto kl = [](double a, double m) { return a > 0 ? a * std::log2(a / m) : 0.0; };
  double s = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    s += 0.5 * kl(p[i], m) + 0.5 * kl(q[i], m);
  }
  return std::clamp(s, 0.0, 1.0);
}

/// Per class: mean over non-target categorical features of the base-2 JSD of
/// the category frequencies. N/A without categorical features or when either
/// side lacks the class.
inline std::vector<std::optional<double>> jsd_per_class(const Table& real, const Table& synth,
                                                        const TableSchema& schema) {
  detail::check_same_header(real, synth, schema);
  auto rc = detail::rows_by_class(real, schema), sc = detail::rows_by_class(synth, schema);
  std::vector<std::optional<double>> out(schema.num_classes());
  for (std::size_t k = 0; k < out.size(); ++k) {
    if (rc[k].empty() || sc[k].empty()) continue;
    double sum = 0;
    int nfeat = 0;
    for (const auto& spec : schema.columns) {
      if (spec.kind != ColumnKind::categorical || spec.name == schema.target) continue;
      std::map<std::string, std::pair<double, double>> freq;
      for (auto r : rc[k]) freq[real.rows[r][real.col(spec.name)]].first += 1;
      for (auto r : sc[k]) freq[synth.rows[r][synth.col(spec.name)]].second += 1;
      std::vector<double> p, q;
      for (const auto& [_, f] : freq) {
        p.push_back(f.first / static_cast<double>(rc[k].size()));
        q.push_back(f.second / static_cast<double>(sc[k].size()));
      }
      sum += jsd_base2(p, q);
      ++nfeat;
    }
    if (nfeat > 0) out[k] = sum / nfeat;
  }
  return out;
}

/// Columns as numbers: numericals parsed, categoricals as vocabulary codes
/// (values outside the vocabulary get codes after it, in order of appearance).
inline RowMatrix numeric_codes(const Table& t, const TableSchema& schema) {
  RowMatrix m(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(schema.columns.size()));
  for (std::size_t c = 0; c < schema.columns.size(); ++c) {
    const auto& spec = schema.columns[c];
    const auto src = t.col(spec.name);
    std::map<std::string, int> extra;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      double v;
      if (spec.kind == ColumnKind::numerical) {
        v = detail::cell_number(t, r, src);
      } else {
        int idx = spec.category_index(t.rows[r][src]);
        if (idx < 0) {
          auto it = extra.try_emplace(t.rows[r][src], static_cast<int>(spec.vocab.size() + extra.size())).first;
          idx = it->second;
        }
        v = idx;
      }
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v;
    }
  }
  return m;
}

struct CorrelationResult {
  double percent = 0;     // mean off-diagonal |delta rho| * 100
  RowMatrix abs_delta;    // full |delta rho| matrix
  std::vector<std::string> zero_variance;  // flagged columns, "real:" / "synthetic:" prefixed
};

/// Pearson correlation; entries touching a zero-variance column are 0 and the column is reported.
inline RowMatrix pearson(const RowMatrix& m, std::vector<std::size_t>* zero_var = nullptr) {
  const auto d = m.cols();
  RowMatrix centered = m.rowwise() - m.colwise().mean();
  Eigen::VectorXd ss = centered.colwise().squaredNorm().transpose();
  RowMatrix cov = centered.transpose() * centered;
  RowMatrix rho = RowMatrix::Zero(d, d);
  for (Eigen::Index j = 0; j < d; ++j)
    if (!(ss(j) > 0) && zero_var) zero_var->push_back(static_cast<std::size_t>(j));
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) {
      if (!(ss(i) > 0) || !(ss(j) > 0)) continue;
      rho(i, j) = i == j ? 1.0 : std::clamp(cov(i, j) / std::sqrt(ss(i) * ss(j)), -1.0, 1.0);
    }
  return rho;
}

inline CorrelationResult correlation_error(const Table& real, const Table& synth, const TableSchema& schema) {
  detail::check_same_header(real, synth, schema);
  if (schema.columns.size() < 2) throw Error("correlation error needs at least two columns");
  if (real.rows.empty() || synth.rows.empty()) throw Error("correlation error on an empty table");
  std::vector<std::size_t> zr, zs;
  RowMatrix a = pearson(numeric_codes(real, schema), &zr);
  RowMatrix b = pearson(numeric_codes(synth, schema), &zs);
  CorrelationResult res;
  res.abs_delta = (a - b).cwiseAbs();
  const auto d = res.abs_delta.rows();
  double s = 0;
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j)
      if (i != j) s += res.abs_delta(i, j);
  res.percent = 100.0 * s / static_cast<double>(d * (d - 1));
  for (auto c : zr) res.zero_variance.push_back("real:" + schema.columns[c].name);
  for (auto c : zs) res.zero_variance.push_back("synthetic:" + schema.columns[c].name);
  return res;
}

struct PrivacyOptions {
  double subsample_fraction = 0.15;
  double percentile = 5.0;
  std::uint64_t seed = 0;
};

struct PrivacyClass {
  std::optional<double> dcr;
  std::optional<double> nndr;
  std::string flag;  // reason for N/A, empty otherwise
};

/// Privacy features: numericals plus one-hot categoricals, target excluded.
inline RowMatrix privacy_features(const Table& t, const TableSchema& schema, const std::vector<std::size_t>& rows) {
  int width = 0;
  for (const auto& spec : schema.columns)
    if (spec.name != schema.target) width += spec.kind == ColumnKind::numerical ? 1 : static_cast<int>(spec.vocab.size());
  RowMatrix m = RowMatrix::Zero(static_cast<Eigen::Index>(rows.size()), width);
  int off = 0;
  for (const auto& spec : schema.columns) {
    if (spec.name == schema.target) continue;
    const auto src = t.col(spec.name);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      if (spec.kind == ColumnKind::numerical) {
        m(r, off) = detail::cell_number(t, rows[i], src);
      } else {
        int idx = spec.category_index(t.rows[rows[i]][src]);
        if (idx >= 0) m(r, off + idx) = 1.0;
      }
    }
    off += spec.kind == ColumnKind::numerical ? 1 : static_cast<int>(spec.vocab.size());
  }
  return m;
}

/// Row indices kept by the seeded subsample: max(1, round(f * n)) rows chosen
/// without replacement, in ascending order. Tables of equal length draw the
/// same positions for one seed.
inline std::vector<std::size_t> subsample_rows(std::size_t n, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw Error("subsample fraction must lie in (0, 1]");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (n == 0) return idx;
  const auto keep = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n))));
  Rng rng = make_stream(seed, "subsampling");
  for (std::size_t i = 0; i < keep; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(keep);
  std::sort(idx.begin(), idx.end());
  return idx;
}

/// Nearest and second-nearest distances from each query row to the reference rows.
inline std::vector<std::pair<double, double>> two_nearest(const RowMatrix& query, const RowMatrix& ref) {
  std::vector<std::pair<double, double>> out;
  out.reserve(static_cast<std::size_t>(query.rows()));
  for (Eigen::Index i = 0; i < query.rows(); ++i) {
    double d1 = std::numeric_limits<double>::infinity(), d2 = d1;
    for (Eigen::Index j = 0; j < ref.rows(); ++j) {
      const double d = (query.row(i) - ref.row(j)).norm();
      if (d < d1) {
        d2 = d1;
        d1 = d;
      } else if (d < d2) {
        d2 = d;
      }
    }
    out.emplace_back(d1, d2);
  }
  return out;
}

/// Per-class DCR and NNDR at the given percentile on z-scored subsamples.
inline std::vector<PrivacyClass> privacy_scores(const Table& real, const Table& synth, const TableSchema& schema,
                                                const PrivacyOptions& opt) {
  detail::check_same_header(real, synth, schema);
  if (!(opt.percentile > 0.0 && opt.percentile < 100.0)) throw Error("privacy percentile must lie in (0, 100)");
  auto rsub = subsample_rows(real.rows.size(), opt.subsample_fraction, opt.seed);
  auto ssub = subsample_rows(synth.rows.size(), opt.subsample_fraction, opt.seed);
  RowMatrix fr = privacy_features(real, schema, rsub);
  RowMatrix fs = privacy_features(synth, schema, ssub);
  if (fr.rows() > 0) {
    Eigen::RowVectorXd mean = fr.colwise().mean();
    Eigen::RowVectorXd sd = ((fr.rowwise() - mean).colwise().squaredNorm() / static_cast<double>(fr.rows())).cwiseSqrt();
    for (Eigen::Index j = 0; j < sd.size(); ++j)
      if (!(sd(j) > 0)) sd(j) = 1.0;
    fr = (fr.rowwise() - mean).array().rowwise() / sd.array();
    fs = (fs.rowwise() - mean).array().rowwise() / sd.array();
  }
  const auto& tspec = schema.columns[schema.target_index()];
  auto label_of = [&](const Table& t, std::size_t r) { return tspec.category_index(t.rows[r][t.col(schema.target)]); };

  std::vector<PrivacyClass> out(schema.num_classes());
  for (std::size_t k = 0; k < out.size(); ++k) {
    std::vector<Eigen::Index> rr, ss;
    for (std::size_t i = 0; i < rsub.size(); ++i)
      if (label_of(real, rsub[i]) == static_cast<int>(k)) rr.push_back(static_cast<Eigen::Index>(i));
    for (std::size_t i = 0; i < ssub.size(); ++i)
      if (label_of(synth, ssub[i]) == static_cast<int>(k)) ss.push_back(static_cast<Eigen::Index>(i));
    if (rr.size() < 2) {
      out[k].flag = "fewer than 2 real rows after subsampling";
      continue;
    }
    if (ss.empty()) {
      out[k].flag = "no synthetic rows after subsampling";
      continue;
    }
    RowMatrix ref = fr(rr, Eigen::all), query = fs(ss, Eigen::all);
    std::vector<double> dcr, nndr;
    for (auto [d1, d2] : two_nearest(query, ref)) {
      dcr.push_back(d1);
      nndr.push_back(d1 > 0 ? d1 / d2 : 0.0);
    }
    out[k].dcr = percentile_linear(std::move(dcr), opt.percentile);
    out[k].nndr = percentile_linear(std::move(nndr), opt.percentile);
  }
  return out;
}

/// exp(mean log(synth / real)) over (synth, real) utility pairs.
inline double aggregate_utility_ratio(const std::vector<std::pair<double, double>>& pairs) {
  if (pairs.empty()) throw Error("aggregate_utility_ratio: no datasets");
  double s = 0;
  for (auto [synth, real] : pairs) {
    if (!(real > 0)) throw Error("aggregate_utility_ratio: real-data baseline must be positive");
    const double ratio = synth / real;
    if (!(ratio > 0)) throw Error("aggregate_utility_ratio: nonpositive ratio");
    s += std::log(ratio);
  }
  return std::exp(s / static_cast<double>(pairs.size()));
}

}  // namespace cttvae
