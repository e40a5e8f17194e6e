#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "cttvae/checkpoint.hpp"
#include "cttvae/config.hpp"
#include "cttvae/eval.hpp"
#include "cttvae/generator.hpp"
#include "cttvae/smote.hpp"
#include "cttvae/trainer.hpp"

namespace cttvae {

namespace fs = std::filesystem;

/// Cleaned data, fitted schema and the stratified split of one run.
struct PreparedData {
  TableSchema schema;
  SplitPair split;
  std::uint64_t input_hash = 0;
};

inline PreparedData prepare_data(const RunConfig& cfg, const Table& raw, std::uint64_t input_hash = 0) {
  if (cfg.data.target.empty()) throw ConfigError("data.target is required");
  if (!raw.has_col(cfg.data.target)) throw ConfigError("data.target '" + cfg.data.target + "' is not a column");
  PreparedData p;
  p.input_hash = input_hash;
  Table clean = clean_table(raw, cfg.data.drop_columns);
  TableSchema schema = infer_schema(clean, cfg.data.target, {.overrides = {}, .drop_columns = cfg.data.drop_columns});
  p.split = stratified_split(clean, schema, cfg.data.test_fraction, stream_seed(cfg.seed, "split"));
  p.schema = fit_transforms(p.split.train, schema, cfg.data.max_modes);
  return p;
}

inline std::vector<std::size_t> resolve_class_counts(const GenerationConfig& g, const TableSchema& schema,
                                                     const std::vector<std::size_t>& train_counts, bool balanced) {
  if (!g.per_class_counts.empty() && !balanced) {
    std::vector<std::size_t> out(schema.num_classes(), 0);
    for (const auto& [name, n] : g.per_class_counts) {
      auto it = std::find(schema.class_vocab.begin(), schema.class_vocab.end(), name);
      if (it == schema.class_vocab.end()) throw ConfigError("generation.per_class_counts: unknown class '" + name + "'");
      out[static_cast<std::size_t>(it - schema.class_vocab.begin())] = n;
    }
    return out;
  }
  return default_class_counts(train_counts, balanced);
}

/// One synthetic table per seed; each seed drives its own latent bank draw and sampling.
inline std::vector<SyntheticTable> generate_for_seeds(const TransformerVae<double>& model, const TableSchema& schema,
                                                      const Table& train, const GenerationConfig& g,
                                                      const std::vector<std::uint64_t>& seeds, bool balanced,
                                                      double lambda, const std::string& checkpoint_hash = {}) {
  auto enc = encode_rows(train, schema);
  auto counts = resolve_class_counts(g, schema, class_counts(train, schema), balanced);
  InterpolationSpec spec{g.k, g.metric_p};
  std::vector<SyntheticTable> out;
  for (auto s : seeds) {
    Rng rng = make_stream(s, "generation");
    auto bank = build_latent_bank(model, enc, rng, g.metric_p, checkpoint_hash);
    auto syn = generate_table(model, schema, bank, counts, spec, rng);
    syn.provenance.seed = s;
    syn.provenance.lambda = lambda;
    out.push_back(std::move(syn));
  }
  return out;
}

inline EvalOptions eval_options(const RunConfig& cfg) {
  EvalOptions o;
  o.classifier = cfg.evaluation.classifier;
  o.repeats = cfg.evaluation.repeats;
  o.privacy.subsample_fraction = cfg.evaluation.subsample_fraction;
  o.privacy.percentile = cfg.evaluation.percentile;
  o.privacy.seed = cfg.seed;
  return o;
}

inline Table losses_table(const std::vector<EpochLog>& logs) {
  Table t;
  t.header = {"epoch", "recon", "mmd", "triplet", "total", "triplets"};
  for (const auto& l : logs)
    t.rows.push_back({std::to_string(l.epoch), format_double(l.mean.recon), format_double(l.mean.mmd),
                      format_double(l.mean.triplet), format_double(l.mean.total), std::to_string(l.mean.triplets)});
  return t;
}

inline std::string file_hash(const std::string& path) { return hex64(fnv1a64(read_file(path))); }

inline void write_json_file(const std::string& path, const nlohmann::json& j) { write_file(path, j.dump(2) + "\n"); }

struct TrainArtifacts {
  std::string checkpoint_path;
  std::string checkpoint_hash;
  nlohmann::json manifest;
};

/// Train from `cfg.data.path`; writes model.ckpt, schema.json, train.csv,
/// test.csv, losses.csv and manifest.json under `out_dir`.
inline TrainArtifacts run_train(const RunConfig& cfg, const std::string& out_dir, bool verbose = false) {
  using clock = std::chrono::steady_clock;
  fs::create_directories(out_dir);
  nlohmann::json timings;
  auto t0 = clock::now();
  const std::string raw_bytes = read_file(cfg.data.path);
  std::istringstream in(raw_bytes);
  auto prep = prepare_data(cfg, read_csv(in), fnv1a64(raw_bytes));
  auto enc = encode_rows(prep.split.train, prep.schema);
  timings["prepare_seconds"] = std::chrono::duration<double>(clock::now() - t0).count();

  auto res = train_model(enc, prep.schema.num_classes(), cfg.model, cfg.train_options(), [&](const EpochLog& l) {
    if (verbose)
      std::cerr << "epoch " << l.epoch << " recon " << l.mean.recon << " mmd " << l.mean.mmd << " triplet "
                << l.mean.triplet << " total " << l.mean.total << "\n";
  });
  timings["train_seconds"] = res.seconds;

  const fs::path dir(out_dir);
  TrainArtifacts art;
  art.checkpoint_path = (dir / "model.ckpt").string();
  Checkpoint ck{res.model, prep.schema, cfg.seed, to_json(cfg)};
  art.checkpoint_hash = hex64(save_checkpoint(art.checkpoint_path, ck));
  write_json_file((dir / "schema.json").string(), to_json(prep.schema));
  write_csv_file((dir / "train.csv").string(), prep.split.train);
  write_csv_file((dir / "test.csv").string(), prep.split.test);
  write_csv_file((dir / "losses.csv").string(), losses_table(res.epochs));

  nlohmann::json seeds;
  for (const char* name : {"split", "init", "tbs", "reparameterize", "prior", "mining", "dropout"})
    seeds[name] = hex64(stream_seed(cfg.seed, name));
  art.manifest = {{"config", to_json(cfg)},
                  {"inputs", {{"data", {{"path", cfg.data.path}, {"fnv1a64", hex64(prep.input_hash)}}}}},
                  {"checkpoint", {{"path", "model.ckpt"}, {"fnv1a64", art.checkpoint_hash}}},
                  {"schema_hash", hex64(schema_hash(prep.schema))},
                  {"split",
                   {{"train_rows", prep.split.train.rows.size()},
                    {"test_rows", prep.split.test.rows.size()},
                    {"ir_full", prep.split.ir_full},
                    {"ir_train", prep.split.ir_train},
                    {"ir_test", prep.split.ir_test},
                    {"ratio_preserved", prep.split.ratio_preserved()}}},
                  {"steps", res.steps},
                  {"outputs",
                   {{"train.csv", file_hash((dir / "train.csv").string())},
                    {"test.csv", file_hash((dir / "test.csv").string())},
                    {"losses.csv", file_hash((dir / "losses.csv").string())}}},
                  {"seed_ledger", {{"master", cfg.seed}, {"streams", seeds}}},
                  {"timings", timings},
                  {"schema_warnings", prep.schema.warnings}};
  write_json_file((dir / "manifest.json").string(), art.manifest);
  return art;
}

struct GenerateRequest {
  std::string checkpoint;
  std::vector<std::uint64_t> seeds;
  bool balanced = false;
  std::string out_dir;      // defaults to the checkpoint directory
  std::string train_csv;    // defaults to train.csv next to the checkpoint
  bool export_bank = false;
};

/// Writes synth_seed<s>.csv plus a JSON provenance sidecar per seed; returns the CSV paths.
inline std::vector<std::string> run_generate(const GenerateRequest& req) {
  const std::string bytes = read_file(req.checkpoint);
  Checkpoint ck = deserialize_checkpoint(bytes);
  const std::string hash = hex64(fnv1a64(bytes));
  const fs::path ckdir = fs::path(req.checkpoint).parent_path();
  const fs::path out = req.out_dir.empty() ? ckdir : fs::path(req.out_dir);
  fs::create_directories(out);
  Table train = read_csv_file(req.train_csv.empty() ? (ckdir / "train.csv").string() : req.train_csv);

  RunConfig cfg = ck.run_config.is_null() ? RunConfig{} : run_config_from_json(ck.run_config);
  auto seeds = req.seeds.empty() ? cfg.generation.seeds : req.seeds;
  const bool balanced = req.balanced || cfg.generation.balanced;
  std::vector<std::string> paths;
  auto syns = generate_for_seeds(ck.model, ck.schema, train, cfg.generation, seeds, balanced, cfg.lambda, hash);
  for (std::size_t i = 0; i < syns.size(); ++i) {
    const auto stem = "synth_seed" + std::to_string(seeds[i]);
    const auto csv = (out / (stem + ".csv")).string();
    write_csv_file(csv, syns[i].table);
    auto prov = to_json(syns[i].provenance);
    prov["balanced"] = balanced;
    prov["csv_fnv1a64"] = file_hash(csv);
    write_json_file((out / (stem + ".json")).string(), prov);
    paths.push_back(csv);
  }
  if (req.export_bank) {
    Rng rng = make_stream(seeds.empty() ? 0 : seeds.front(), "generation");
    auto bank = build_latent_bank(ck.model, encode_rows(train, ck.schema), rng, cfg.generation.metric_p, hash);
    write_csv_file((out / "latent_bank.csv").string(), latent_bank_table(bank, ck.schema));
  }
  return paths;
}

/// Every synthetic file must carry exactly the real training header.
inline void check_schema_drift(const Table& reference, const Table& t, const std::string& name) {
  if (t.header != reference.header) throw Error("schema drift: " + name + " header differs from the real training table");
}

struct EvaluateRequest {
  std::string real_train, real_test;
  std::vector<std::string> synth;
  std::string out;
  std::string schema_path;  // schema.json; inferred from the real tables when empty
  std::string target;       // required when no schema is given
  EvalOptions options;
};

inline nlohmann::json run_evaluate(const EvaluateRequest& req) {
  Table train = read_csv_file(req.real_train), test = read_csv_file(req.real_test);
  check_schema_drift(train, test, req.real_test);
  TableSchema schema;
  if (!req.schema_path.empty()) {
    schema = schema_from_json(nlohmann::json::parse(read_file(req.schema_path)));
  } else {
    if (req.target.empty()) throw ConfigError("evaluate: either a schema or a target column is required");
    Table all = train;
    all.rows.insert(all.rows.end(), test.rows.begin(), test.rows.end());
    schema = infer_schema(all, req.target);
  }
  std::vector<Table> synths;
  for (const auto& p : req.synth) {
    synths.push_back(read_csv_file(p));
    check_schema_drift(train, synths.back(), p);
  }
  std::vector<std::string> labels;
  for (const auto& p : req.synth) labels.push_back(fs::path(p).filename().string());
  auto rep = evaluation_report(synths, train, test, schema, req.options, labels);
  if (!req.out.empty()) {
    write_json_file(req.out, rep);
    const fs::path o(req.out);
    write_csv_file((o.parent_path() / (o.stem().string() + "_corr_heatmap.csv")).string(),
                   correlation_heatmap(synths, train, schema));
  }
  return rep;
}

// ---- ablation -----------------------------------------------------------------

struct AblationGrid {
  double alpha_star = 1.0;
  double lambda_star = 0.5;
  std::vector<double> lambda_sweep{0.3, 0.5, 0.7, 0.9, 1.0};
};

inline AblationGrid ablation_grid_from_json(const nlohmann::json& j) {
  AblationGrid g;
  try {
    detail::check_keys(j, "grid", {"alpha", "lambda", "lambda_sweep"});
    g.alpha_star = j.value("alpha", g.alpha_star);
    g.lambda_star = j.value("lambda", g.lambda_star);
    g.lambda_sweep = j.value("lambda_sweep", g.lambda_sweep);
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(std::string("grid: ") + ex.what());
  }
  if (!(g.alpha_star > 0)) throw ConfigError("grid.alpha must be positive");
  for (double l : g.lambda_sweep)
    if (!(l >= 0 && l <= 1)) throw ConfigError("grid.lambda_sweep values must lie in [0, 1]");
  return g;
}

struct AblationCell {
  double alpha = 0, lambda = 1;
  std::string status = "pending";  // ok | failed
  std::string error;
  double maj_f1 = 0, min_f1 = 0;
  double min_f1_std = 0;
  std::vector<double> final_losses;  // recon, mmd, triplet, total of the last epoch
};

inline std::string model_name(double alpha, double lambda) {
  std::string n = alpha == 0 ? "TTVAE" : "CTTVAE";
  return lambda == 1.0 ? n : n + "+TBS";
}

/// Train, generate and evaluate one (alpha, lambda) cell on prepared data.
inline AblationCell run_cell(const RunConfig& base, const PreparedData& prep, double alpha, double lambda) {
  AblationCell cell;
  cell.alpha = alpha;
  cell.lambda = lambda;
  try {
    RunConfig cfg = base;
    cfg.loss.alpha = alpha;
    cfg.lambda = lambda;
    auto enc = encode_rows(prep.split.train, prep.schema);
    auto res = train_model(enc, prep.schema.num_classes(), cfg.model, cfg.train_options());
    const auto& last = res.epochs.back().mean;
    cell.final_losses = {last.recon, last.mmd, last.triplet, last.total};
    auto syns = generate_for_seeds(res.model, prep.schema, prep.split.train, cfg.generation, cfg.generation.seeds,
                                   cfg.generation.balanced, lambda);
    std::vector<double> maj, min;
    for (const auto& s : syns) {
      auto f1 = train_test_f1(s.table, prep.split.test, prep.schema, cfg.evaluation.classifier, cfg.evaluation.repeats);
      maj.push_back(f1.mean.front());
      min.push_back(f1.mean.back());
    }
    cell.maj_f1 = mean_of(maj);
    cell.min_f1 = mean_of(min);
    cell.min_f1_std = std_of(min);
    cell.status = "ok";
  } catch (const std::exception& ex) {
    cell.status = "failed";
    cell.error = ex.what();
  }
  return cell;
}

struct AblationReport {
  std::vector<AblationCell> cells;  // unique (alpha, lambda) pairs
  Table grid;                       // TTVAE / TTVAE+TBS / CTTVAE / CTTVAE+TBS rows
  Table sweep;                      // minority F1 per (model, lambda)
};

/// Runs the 2x2 grid and the lambda sweep for both models; shared cells run once.
inline AblationReport run_ablate(const RunConfig& cfg, const AblationGrid& grid, const std::string& out_dir = {}) {
  const std::string raw_bytes = read_file(cfg.data.path);
  std::istringstream in(raw_bytes);
  auto prep = prepare_data(cfg, read_csv(in), fnv1a64(raw_bytes));

  std::vector<std::pair<double, double>> wanted = {
      {0.0, 1.0}, {0.0, grid.lambda_star}, {grid.alpha_star, 1.0}, {grid.alpha_star, grid.lambda_star}};
  for (double a : {0.0, grid.alpha_star})
    for (double l : grid.lambda_sweep) wanted.emplace_back(a, l);
  AblationReport rep;
  for (auto [a, l] : wanted) {
    bool seen = false;
    for (const auto& c : rep.cells) seen = seen || (c.alpha == a && c.lambda == l);
    if (seen) continue;
    AblationCell c;
    c.alpha = a;
    c.lambda = l;
    rep.cells.push_back(c);
  }

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < rep.cells.size();)
      rep.cells[i] = run_cell(cfg, prep, rep.cells[i].alpha, rep.cells[i].lambda);
  };
  const auto nthreads = std::min<std::size_t>(worker_threads(), rep.cells.size());
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < nthreads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  auto find = [&](double a, double l) -> const AblationCell& {
    for (const auto& c : rep.cells)
      if (c.alpha == a && c.lambda == l) return c;
    throw Error("ablation: missing cell");
  };
  auto f = [](const AblationCell& c, double v) { return c.status == "ok" ? format_double(v) : std::string("NA"); };
  rep.grid.header = {"model", "alpha", "lambda", "maj_f1", "min_f1", "min_f1_std", "status", "error"};
  for (auto [a, l] : std::vector<std::pair<double, double>>(wanted.begin(), wanted.begin() + 4)) {
    const auto& c = find(a, l);
    rep.grid.rows.push_back({model_name(a, l), format_double(a), format_double(l), f(c, c.maj_f1), f(c, c.min_f1),
                             f(c, c.min_f1_std), c.status, c.error});
  }
  rep.sweep.header = {"model", "alpha", "lambda", "min_f1", "status"};
  for (double a : {0.0, grid.alpha_star})
    for (double l : grid.lambda_sweep) {
      const auto& c = find(a, l);
      rep.sweep.rows.push_back({a == 0 ? "TTVAE" : "CTTVAE", format_double(a), format_double(l), f(c, c.min_f1), c.status});
    }
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_csv_file((fs::path(out_dir) / "ablation.csv").string(), rep.grid);
    write_csv_file((fs::path(out_dir) / "lambda_sweep.csv").string(), rep.sweep);
  }
  return rep;
}

}  // namespace cttvae
