#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "cttvae/core.hpp"
#include "cttvae/csv.hpp"
#include "cttvae/mixture.hpp"

namespace cttvae {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class ColumnKind { numerical, categorical };

inline const char* to_string(ColumnKind k) {
  return k == ColumnKind::numerical ? "numerical" : "categorical";
}

struct ColumnSpec {
  std::string name;
  ColumnKind kind = ColumnKind::categorical;
  std::vector<std::string> vocab;  // categorical only
  std::vector<Mode> modes;         // numerical only, filled by fit_transforms
  bool constant = false;

  /// Encoded width: one-hot block, or scalar + mode indicator.
  int width() const {
    return kind == ColumnKind::categorical ? static_cast<int>(vocab.size())
                                           : 1 + static_cast<int>(modes.size());
  }
  int category_index(const std::string& v) const {
    for (std::size_t i = 0; i < vocab.size(); ++i)
      if (vocab[i] == v) return static_cast<int>(i);
    return -1;
  }
};

struct TableSchema {
  std::vector<ColumnSpec> columns;
  std::string target;
  std::vector<std::string> class_vocab;  // index 0 = majority
  double clip = 4.0;
  std::vector<std::string> warnings;

  std::size_t index_of(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
      if (columns[i].name == name) return i;
    throw Error("schema has no column " + name);
  }
  std::size_t target_index() const { return index_of(target); }
  std::size_t num_classes() const { return class_vocab.size(); }
  bool fitted() const {
    for (const auto& c : columns)
      if (c.kind == ColumnKind::numerical && c.modes.empty()) return false;
    return true;
  }
  std::size_t count(ColumnKind k) const {
    return static_cast<std::size_t>(
        std::count_if(columns.begin(), columns.end(), [&](const auto& c) { return c.kind == k; }));
  }
};

/// Position of one column inside the encoded feature axis.
struct Span {
  int start = 0;
  int width = 0;
  std::size_t column = 0;
  ColumnKind kind = ColumnKind::categorical;
};

struct EncodedMatrix {
  RowMatrix data;
  std::vector<int> labels;
  std::vector<Span> layout;

  Eigen::Index rows() const { return data.rows(); }
  int width() const { return layout.empty() ? 0 : layout.back().start + layout.back().width; }
};

struct SchemaOptions {
  std::map<std::string, ColumnKind> overrides;
  std::vector<std::string> drop_columns;
};

inline bool is_missing(const std::string& v) {
  static const std::set<std::string> tokens{"", "NA", "N/A", "NaN", "nan", "null", "NULL", "?", "None"};
  std::string t = v;
  while (!t.empty() && t.back() == ' ') t.pop_back();
  while (!t.empty() && t.front() == ' ') t.erase(t.begin());
  return tokens.count(t) > 0;
}

/// Drops listed columns, rows with a missing cell, and exact duplicate rows (first kept).
inline Table clean_table(const Table& raw, const std::vector<std::string>& drop_columns = {}) {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < raw.header.size(); ++i)
    if (std::find(drop_columns.begin(), drop_columns.end(), raw.header[i]) == drop_columns.end())
      keep.push_back(i);
  Table out;
  for (auto i : keep) out.header.push_back(raw.header[i]);
  std::unordered_set<std::string> seen;
  for (const auto& row : raw.rows) {
    std::vector<std::string> r;
    r.reserve(keep.size());
    bool missing = false;
    std::string key;
    for (auto i : keep) {
      if (is_missing(row[i])) missing = true;
      r.push_back(row[i]);
      key += row[i];
      key.push_back('\x1f');
    }
    if (missing || !seen.insert(key).second) continue;
    out.rows.push_back(std::move(r));
  }
  return out;
}

/// Vocabulary ordered by descending count, ties by first appearance.
inline std::vector<std::string> build_vocab(const Table& t, std::size_t col) {
  std::unordered_map<std::string, std::pair<std::size_t, std::size_t>> stat;  // count, first
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    auto [it, fresh] = stat.try_emplace(t.rows[r][col], 0, r);
    ++it->second.first;
  }
  std::vector<std::pair<std::string, std::pair<std::size_t, std::size_t>>> items(stat.begin(), stat.end());
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
    if (a.second.first != b.second.first) return a.second.first > b.second.first;
    return a.second.second < b.second.second;
  });
  std::vector<std::string> vocab;
  for (auto& it : items) vocab.push_back(it.first);
  return vocab;
}

/// Infers column kinds on the cleaned table. A column is numerical when every
/// value parses as a finite number and it has more than two distinct values;
/// the target is always categorical.
inline TableSchema infer_schema(const Table& raw, const std::string& target, const SchemaOptions& opts = {}) {
  if (raw.rows.empty()) throw Error("infer_schema: empty table");
  if (!raw.has_col(target)) throw Error("infer_schema: missing target column '" + target + "'");
  Table t = clean_table(raw, opts.drop_columns);
  if (t.rows.empty()) throw Error("infer_schema: table is empty after cleaning");

  TableSchema schema;
  schema.target = target;
  std::set<std::string> names;
  for (std::size_t c = 0; c < t.header.size(); ++c) {
    ColumnSpec spec;
    spec.name = t.header[c];
    if (!names.insert(spec.name).second) throw Error("infer_schema: duplicate column name " + spec.name);

    std::unordered_set<std::string> distinct;
    bool numeric = true;
    double tmp;
    for (const auto& row : t.rows) {
      distinct.insert(row[c]);
      if (numeric && !parse_double(row[c], tmp)) numeric = false;
    }
    spec.kind = (numeric && distinct.size() > 2) ? ColumnKind::numerical : ColumnKind::categorical;
    if (auto it = opts.overrides.find(spec.name); it != opts.overrides.end()) spec.kind = it->second;
    if (spec.name == target) spec.kind = ColumnKind::categorical;
    if (spec.kind == ColumnKind::numerical && !numeric)
      throw Error("infer_schema: column " + spec.name + " forced numerical but has non-numeric values");
    if (spec.kind == ColumnKind::categorical) spec.vocab = build_vocab(t, c);
    if (distinct.size() == 1) {
      spec.constant = true;
      schema.warnings.push_back("constant column: " + spec.name);
    }
    schema.columns.push_back(std::move(spec));
  }
  const auto& tspec = schema.columns[schema.target_index()];
  if (tspec.vocab.size() < 2) throw Error("infer_schema: target column needs at least 2 classes");
  schema.class_vocab = tspec.vocab;
  return schema;
}

inline std::vector<double> numeric_column(const Table& t, std::size_t col) {
  std::vector<double> v(t.rows.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r)
    if (!parse_double(t.rows[r][col], v[r]))
      throw Error("non-numeric value '" + t.rows[r][col] + "' in column " + t.header[col]);
  return v;
}

/// Fits per-column mode parameters for every numerical column.
inline TableSchema fit_transforms(const Table& t, TableSchema schema, int max_modes = 10) {
  if (max_modes < 1) throw Error("fit_transforms: max_modes must be >= 1");
  for (auto& spec : schema.columns) {
    if (spec.kind != ColumnKind::numerical) continue;
    auto values = numeric_column(t, t.col(spec.name));
    if (values.empty()) throw Error("fit_transforms: empty column " + spec.name);
    auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    if (*lo == *hi) {
      spec.modes = {Mode{*lo, 1.0, 1.0}};
      spec.constant = true;
      schema.warnings.push_back("zero-variance numerical column: " + spec.name + " (std forced to 1)");
      continue;
    }
    MixtureOptions opt;
    opt.max_modes = max_modes;
    spec.modes = fit_mixture_1d(values, opt);
  }
  return schema;
}

inline std::vector<Span> encoded_layout(const TableSchema& schema) {
  std::vector<Span> layout;
  int start = 0;
  for (std::size_t c = 0; c < schema.columns.size(); ++c) {
    const auto& spec = schema.columns[c];
    layout.push_back(Span{start, spec.width(), c, spec.kind});
    start += spec.width();
  }
  return layout;
}

/// Mode with the highest responsibility weight * N(v | mean, std).
inline int assign_mode(const ColumnSpec& spec, double v) {
  int best = 0;
  double best_lp = -std::numeric_limits<double>::infinity();
  for (std::size_t m = 0; m < spec.modes.size(); ++m) {
    const auto& md = spec.modes[m];
    double d = (v - md.mean) / md.std;
    double lp = std::log(md.weight) - std::log(md.std) - 0.5 * d * d;
    if (lp > best_lp) {
      best_lp = lp;
      best = static_cast<int>(m);
    }
  }
  return best;
}

inline EncodedMatrix encode_rows(const Table& t, const TableSchema& schema) {
  if (!schema.fitted()) throw Error("encode_rows: schema has unfitted numerical columns");
  EncodedMatrix em;
  em.layout = encoded_layout(schema);
  em.data = RowMatrix::Zero(static_cast<Eigen::Index>(t.rows.size()), em.width());
  em.labels.resize(t.rows.size());
  std::vector<std::size_t> src(schema.columns.size());
  for (std::size_t c = 0; c < schema.columns.size(); ++c) src[c] = t.col(schema.columns[c].name);
  const std::size_t tcol = schema.target_index();

  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto row = static_cast<Eigen::Index>(r);
    for (std::size_t c = 0; c < schema.columns.size(); ++c) {
      const auto& spec = schema.columns[c];
      const auto& cell = t.rows[r][src[c]];
      const auto& span = em.layout[c];
      if (spec.kind == ColumnKind::categorical) {
        int idx = spec.category_index(cell);
        if (idx < 0) throw Error("encode_rows: unseen value '" + cell + "' in column " + spec.name);
        em.data(row, span.start + idx) = 1.0;
        if (c == tcol) em.labels[r] = idx;
      } else {
        double v;
        if (!parse_double(cell, v))
          throw Error("encode_rows: non-numeric value '" + cell + "' in column " + spec.name);
        int m = assign_mode(spec, v);
        double s = (v - spec.modes[m].mean) / spec.modes[m].std;
        em.data(row, span.start) = std::clamp(s, -schema.clip, schema.clip);
        em.data(row, span.start + 1 + m) = 1.0;
      }
    }
  }
  return em;
}

/// Argmax decoding of (possibly soft) blocks back into schema-ordered cells.
inline Table decode_rows(const RowMatrix& data, const TableSchema& schema) {
  auto layout = encoded_layout(schema);
  const int width = layout.empty() ? 0 : layout.back().start + layout.back().width;
  if (data.cols() != width)
    throw Error("decode_rows: layout width mismatch (" + std::to_string(data.cols()) + " vs " +
                std::to_string(width) + ")");
  Table t;
  for (const auto& c : schema.columns) t.header.push_back(c.name);
  t.rows.resize(static_cast<std::size_t>(data.rows()));
  for (Eigen::Index r = 0; r < data.rows(); ++r) {
    auto& out = t.rows[static_cast<std::size_t>(r)];
    out.reserve(schema.columns.size());
    for (std::size_t c = 0; c < schema.columns.size(); ++c) {
      const auto& spec = schema.columns[c];
      const auto& span = layout[c];
      if (spec.kind == ColumnKind::categorical) {
        Eigen::Index arg;
        data.row(r).segment(span.start, span.width).maxCoeff(&arg);
        out.push_back(spec.vocab[static_cast<std::size_t>(arg)]);
      } else {
        Eigen::Index arg;
        data.row(r).segment(span.start + 1, span.width - 1).maxCoeff(&arg);
        const auto& md = spec.modes[static_cast<std::size_t>(arg)];
        double s = std::clamp(data(r, span.start), -schema.clip, schema.clip);
        out.push_back(format_double(md.mean + s * md.std));
      }
    }
  }
  return t;
}

inline Table decode_rows(const EncodedMatrix& em, const TableSchema& schema) {
  return decode_rows(em.data, schema);
}

/// Per-class row counts of a table under the schema's class vocabulary.
inline std::vector<std::size_t> class_counts(const Table& t, const TableSchema& schema) {
  std::vector<std::size_t> counts(schema.num_classes(), 0);
  const auto col = t.col(schema.target);
  for (const auto& row : t.rows) {
    auto it = std::find(schema.class_vocab.begin(), schema.class_vocab.end(), row[col]);
    if (it == schema.class_vocab.end()) throw Error("unknown class value '" + row[col] + "'");
    ++counts[static_cast<std::size_t>(it - schema.class_vocab.begin())];
  }
  return counts;
}

inline double imbalance_ratio(const std::vector<std::size_t>& counts) {
  auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
  return *lo == 0 ? std::numeric_limits<double>::infinity()
                  : static_cast<double>(*hi) / static_cast<double>(*lo);
}

struct SplitPair {
  Table train;
  Table test;
  double ir_full = 0, ir_train = 0, ir_test = 0;

  bool ratio_preserved(double tol = 0.02) const {
    return std::abs(ir_train - ir_test) / ir_full <= tol;
  }
};

/// Per-class proportional split (test count = round(n_c * test_fraction)).
inline SplitPair stratified_split(const Table& t, const TableSchema& schema, double test_fraction,
                                  std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw Error("stratified_split: test_fraction must lie in (0, 1)");
  const auto col = t.col(schema.target);
  std::vector<std::vector<std::size_t>> by_class(schema.num_classes());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    auto it = std::find(schema.class_vocab.begin(), schema.class_vocab.end(), t.rows[r][col]);
    if (it == schema.class_vocab.end()) throw Error("stratified_split: unknown class " + t.rows[r][col]);
    by_class[static_cast<std::size_t>(it - schema.class_vocab.begin())].push_back(r);
  }
  Rng rng{seed};
  std::vector<std::size_t> train_idx, test_idx;
  std::vector<std::size_t> full_counts, train_counts, test_counts;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& idx = by_class[c];
    auto n = idx.size();
    auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(n) * test_fraction));
    if (n < 2 || n_test == 0 || n_test == n)
      throw Error("stratified_split: class '" + schema.class_vocab[c] + "' has " + std::to_string(n) +
                  " rows, too few to appear in both splits");
    std::shuffle(idx.begin(), idx.end(), rng);
    test_idx.insert(test_idx.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
    train_idx.insert(train_idx.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_test), idx.end());
    full_counts.push_back(n);
    train_counts.push_back(n - n_test);
    test_counts.push_back(n_test);
  }
  std::shuffle(train_idx.begin(), train_idx.end(), rng);
  std::shuffle(test_idx.begin(), test_idx.end(), rng);
  SplitPair sp;
  sp.train.header = sp.test.header = t.header;
  for (auto i : train_idx) sp.train.rows.push_back(t.rows[i]);
  for (auto i : test_idx) sp.test.rows.push_back(t.rows[i]);
  sp.ir_full = imbalance_ratio(full_counts);
  sp.ir_train = imbalance_ratio(train_counts);
  sp.ir_test = imbalance_ratio(test_counts);
  return sp;
}

// ---- JSON persistence -------------------------------------------------------

inline nlohmann::json to_json(const TableSchema& s) {
  nlohmann::json j;
  j["target"] = s.target;
  j["class_vocab"] = s.class_vocab;
  j["clip"] = s.clip;
  j["warnings"] = s.warnings;
  auto& cols = j["columns"] = nlohmann::json::array();
  for (const auto& c : s.columns) {
    nlohmann::json cj{{"name", c.name}, {"kind", to_string(c.kind)}, {"constant", c.constant}};
    if (c.kind == ColumnKind::categorical) {
      cj["vocab"] = c.vocab;
    } else {
      auto& ms = cj["modes"] = nlohmann::json::array();
      for (const auto& m : c.modes) ms.push_back({{"mean", m.mean}, {"std", m.std}, {"weight", m.weight}});
    }
    cols.push_back(std::move(cj));
  }
  return j;
}

inline TableSchema schema_from_json(const nlohmann::json& j) {
  TableSchema s;
  s.target = j.at("target").get<std::string>();
  s.class_vocab = j.at("class_vocab").get<std::vector<std::string>>();
  s.clip = j.value("clip", 4.0);
  s.warnings = j.value("warnings", std::vector<std::string>{});
  for (const auto& cj : j.at("columns")) {
    ColumnSpec c;
    c.name = cj.at("name").get<std::string>();
    auto kind = cj.at("kind").get<std::string>();
    if (kind == "numerical") {
      c.kind = ColumnKind::numerical;
      for (const auto& m : cj.value("modes", nlohmann::json::array()))
        c.modes.push_back(Mode{m.at("mean").get<double>(), m.at("std").get<double>(), m.at("weight").get<double>()});
    } else if (kind == "categorical") {
      c.kind = ColumnKind::categorical;
      c.vocab = cj.at("vocab").get<std::vector<std::string>>();
    } else {
      throw Error("schema: unknown column kind " + kind);
    }
    c.constant = cj.value("constant", false);
    s.columns.push_back(std::move(c));
  }
  return s;
}

inline std::uint64_t schema_hash(const TableSchema& s) { return fnv1a64(to_json(s).dump()); }

}  // namespace cttvae
