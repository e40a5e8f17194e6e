// Command-line front end: train, generate, evaluate, ablate, plus the SMOTE
// baseline and a fixture writer.

#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cttvae/fixtures.hpp"
#include "cttvae/pipeline.hpp"

namespace {

using namespace cttvae;

std::vector<std::uint64_t> parse_seeds(const std::string& s) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    try {
      std::size_t used = 0;
      out.push_back(std::stoull(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw ConfigError("bad seed '" + tok + "'");
    }
  }
  return out;
}

RunConfig config_with_overrides(const std::string& path, const std::string& data, bool unsafe) {
  RunConfig cfg = path.empty() ? RunConfig{} : load_run_config(path);
  if (!data.empty()) cfg.data.path = data;
  if (cfg.data.path.empty()) throw ConfigError("no dataset given (--data or data.path)");
  validate(cfg, unsafe);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conditional transformer VAE for imbalanced tabular data"};
  app.require_subcommand(1);
  bool unsafe = false;
  app.add_flag("--unsafe-config", unsafe, "Accept hyperparameters outside the validated ranges");

  auto* train = app.add_subcommand("train", "Train a model and write a checkpoint");
  std::string train_config, train_data, train_out;
  bool verbose = false;
  train->add_option("--config", train_config, "Run config (JSON)");
  train->add_option("--data", train_data, "Input CSV (overrides data.path)");
  train->add_option("--out", train_out, "Output directory")->required();
  train->add_flag("-v,--verbose", verbose, "Log per-epoch losses");

  auto* gen = app.add_subcommand("generate", "Generate synthetic tables from a checkpoint");
  GenerateRequest greq;
  std::string gen_seeds;
  gen->add_option("--checkpoint", greq.checkpoint, "model.ckpt written by train")->required();
  gen->add_option("--seeds", gen_seeds, "Comma-separated generation seeds");
  gen->add_flag("--balanced", greq.balanced, "Equal counts per class");
  gen->add_option("--out", greq.out_dir, "Output directory (default: checkpoint directory)");
  gen->add_option("--train", greq.train_csv, "Training CSV (default: train.csv next to the checkpoint)");
  gen->add_flag("--export-bank", greq.export_bank, "Also write latent_bank.csv");

  auto* ev = app.add_subcommand("evaluate", "Score synthetic tables against real data");
  EvaluateRequest ereq;
  std::string eval_config;
  ev->add_option("--real-train", ereq.real_train, "Real training CSV")->required();
  ev->add_option("--real-test", ereq.real_test, "Real held-out CSV")->required();
  ev->add_option("--synth", ereq.synth, "Synthetic CSV files")->required();
  ev->add_option("--out", ereq.out, "Report JSON path")->required();
  ev->add_option("--schema", ereq.schema_path, "schema.json written by train");
  ev->add_option("--target", ereq.target, "Target column when no schema is given");
  ev->add_option("--config", eval_config, "Run config supplying evaluation settings");

  auto* ab = app.add_subcommand("ablate", "Run the alpha x lambda ablation and the lambda sweep");
  std::string ab_config, ab_grid, ab_data, ab_out = "ablation";
  ab->add_option("--config", ab_config, "Run config (JSON)")->required();
  ab->add_option("--grid", ab_grid, "Grid JSON {alpha, lambda, lambda_sweep}");
  ab->add_option("--data", ab_data, "Input CSV (overrides data.path)");
  ab->add_option("--out", ab_out, "Output directory");

  auto* sm = app.add_subcommand("smote", "SMOTE baseline on a training CSV");
  std::string sm_train, sm_schema, sm_out;
  SmoteConfig smc;
  bool sm_balanced = false;
  sm->add_option("--train", sm_train, "Training CSV")->required();
  sm->add_option("--schema", sm_schema, "schema.json written by train")->required();
  sm->add_option("--out", sm_out, "Output CSV")->required();
  sm->add_option("--k", smc.k_neighbors, "Neighbors");
  sm->add_option("--seed", smc.seed, "Seed");
  sm->add_flag("--balanced", sm_balanced, "Equal counts per class");

  auto* blobs = app.add_subcommand("make-blobs", "Write the two-class blob fixture");
  BlobOptions bo;
  std::string blob_out;
  blobs->add_option("--out", blob_out, "Output CSV")->required();
  blobs->add_option("--majority", bo.majority, "Majority rows");
  blobs->add_option("--minority", bo.minority, "Minority rows");
  blobs->add_option("--separation", bo.separation, "Minority mean shift");
  blobs->add_option("--seed", bo.seed, "Seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*train) {
      auto cfg = config_with_overrides(train_config, train_data, unsafe);
      auto art = run_train(cfg, train_out, verbose);
      std::cout << art.checkpoint_path << " " << art.checkpoint_hash << "\n";
    } else if (*gen) {
      greq.seeds = parse_seeds(gen_seeds);
      for (const auto& p : run_generate(greq)) std::cout << p << "\n";
    } else if (*ev) {
      if (!eval_config.empty()) {
        auto cfg = load_run_config(eval_config);
        validate(cfg, unsafe);
        ereq.options = eval_options(cfg);
        if (ereq.target.empty()) ereq.target = cfg.data.target;
      }
      run_evaluate(ereq);
      std::cout << ereq.out << "\n";
    } else if (*ab) {
      auto cfg = config_with_overrides(ab_config, ab_data, unsafe);
      AblationGrid grid;
      if (!ab_grid.empty()) grid = ablation_grid_from_json(nlohmann::json::parse(read_file(ab_grid)));
      auto rep = run_ablate(cfg, grid, ab_out);
      write_csv(std::cout, rep.grid);
      for (const auto& c : rep.cells)
        if (c.status != "ok") std::cerr << "cell alpha=" << c.alpha << " lambda=" << c.lambda << " failed: " << c.error << "\n";
    } else if (*sm) {
      Table t = read_csv_file(sm_train);
      auto schema = schema_from_json(nlohmann::json::parse(read_file(sm_schema)));
      smc.per_class_counts = default_class_counts(class_counts(t, schema), sm_balanced);
      Rng rng = make_stream(smc.seed, "generation");
      auto out = smote_generate(t, schema, smc, rng);
      write_csv_file(sm_out, out.table);
      auto prov = to_json(out.provenance);
      prov["balanced"] = sm_balanced;
      prov["csv_fnv1a64"] = file_hash(sm_out);
      write_json_file(fs::path(sm_out).replace_extension(".json").string(), prov);
    } else if (*blobs) {
      write_csv_file(blob_out, make_blobs(bo));
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
