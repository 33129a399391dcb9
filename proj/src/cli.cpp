#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "hkq/cli.hpp"
#include "hkq/envelope_io.hpp"
#include "hkq/eval.hpp"
#include "hkq/parallel.hpp"
#include "hkq/rng.hpp"
#include "hkq/stats.hpp"
#include "hkq/table.hpp"
#include "hkq/uncertainty.hpp"
#include "json.hpp"

namespace hkq {
namespace {

namespace fs = std::filesystem;

std::string fmt17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct GlobalOptions {
  std::uint64_t seed = 0;
  std::size_t threads = 0;
  bool strict = false;
  std::string out;

  std::size_t worker_threads() const { return strict ? 1 : resolve_threads(threads); }
};

FeatureSchema load_schema(const std::string& schema_file) {
  if (schema_file.empty()) return default_schema();
  std::ifstream is(schema_file);
  require(is.good(), errc::configuration, "cannot open schema file: " + schema_file);
  std::stringstream buf;
  buf << is.rdbuf();
  return FeatureSchema::from_json(buf.str());
}

std::ofstream open_output(const std::string& path) {
  std::ofstream os(path);
  require(os.good(), errc::configuration, "cannot open output file: " + path);
  return os;
}

// Writes to --out when set, stdout otherwise.
void emit(const GlobalOptions& g, const std::function<void(std::ostream&)>& writer) {
  if (g.out.empty()) {
    writer(std::cout);
  } else {
    std::ofstream os = open_output(g.out);
    writer(os);
    os.flush();
    require(os.good(), errc::configuration, "failed writing output file: " + g.out);
  }
}

std::vector<std::optional<double>> parse_snr_levels(const std::vector<std::string>& tokens) {
  std::vector<std::optional<double>> levels;
  for (const std::string& token : tokens) {
    if (token == "none") {
      levels.push_back(std::nullopt);
      continue;
    }
    char* end = nullptr;
    const double v = std::strtod(token.c_str(), &end);
    require(!token.empty() && end == token.c_str() + token.size() && std::isfinite(v),
            errc::usage, "bad SNR level '" + token + "' (use 'none' or a dB value)");
    levels.push_back(v);
  }
  return levels;
}

std::vector<double> linspace(double lo, double hi, std::size_t n) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i)
    v[i] = n == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  return v;
}

void cmd_generate(const GlobalOptions& g, const std::vector<double>& alphas,
                  const std::vector<double>& ks, std::size_t n, std::size_t sets, double sigma,
                  const std::optional<double>& snr) {
  require(!alphas.empty() && !ks.empty(), errc::usage, "--alpha and --k must be given");
  const fs::path dir = g.out.empty() ? fs::path(".") : fs::path(g.out);
  fs::create_directories(dir);

  std::size_t written = 0;
  for (std::size_t p = 0; p < alphas.size() * ks.size(); ++p) {
    const HkParams params{alphas[p / ks.size()], ks[p % ks.size()], sigma};
    for (std::size_t r = 0; r < sets; ++r) {
      const std::size_t i = p * sets + r;
      EnvelopeSet set = sample_hk(params, n, derive_seed(g.seed, i, Stream::envelope));
      if (snr) set = add_rayleigh_noise(set, *snr, derive_seed(g.seed, i, Stream::noise));
      char name[64];
      std::snprintf(name, sizeof name, "env_p%03zu_r%03zu.hkqenv", p, r);
      write_envelope_file(set, (dir / name).string());
      ++written;
    }
  }
  std::cout << "wrote " << written << " envelope files to " << dir.string() << '\n';
}

void cmd_features(const GlobalOptions& g, const std::vector<std::string>& paths,
                  const std::string& schema_file) {
  require(!paths.empty(), errc::usage, "no input files");
  const FeatureSchema schema = load_schema(schema_file);
  std::vector<FeatureRow> rows;
  for (const std::string& path : paths) {
    const EnvelopeSet set = read_envelope_file(path);
    FeatureRow row;
    row.set_id = fs::path(path).stem().string();
    row.features = extract_features(set, schema);
    if (set.truth)
      row.truth = std::array<double, 2>{std::log10(set.truth->alpha), set.truth->k};
    rows.push_back(std::move(row));
  }
  emit(g, [&](std::ostream& os) { write_features_csv(os, schema, rows); });
}

void cmd_train(const GlobalOptions& g, const std::string& features_path, const TrainConfig& base,
               const std::vector<std::size_t>& hidden, double prior) {
  require(!g.out.empty(), errc::usage, "train needs --out for the model file");
  const FeatureCsv csv = read_features_file(features_path);

  Dataset dataset;
  dataset.schema = csv.schema;
  for (const FeatureRow& row : csv.rows) {
    require(row.truth.has_value(), errc::insufficient_data,
            "row '" + row.set_id + "' lacks target columns; train needs labeled features");
    dataset.features.push_back(row.features);
    dataset.targets.push_back(*row.truth);
  }

  TrainConfig config = base;
  config.seed = g.seed;
  BnnModel model = init_model(dataset.schema, hidden, prior,
                              derive_seed(config.seed, 0, Stream::model_init));
  auto [trained, log] = train(std::move(model), dataset, config);
  for (const TrainLogEntry& entry : log)
    std::cout << "step " << entry.step << " loss " << entry.loss << '\n';
  save_model(trained, g.out);
  std::cout << "saved model to " << g.out << '\n';
}

void cmd_predict(const GlobalOptions& g, const std::string& model_path,
                 const std::string& features_path, std::size_t draws) {
  const BnnModel model = load_model(model_path);
  const FeatureCsv csv = read_features_file(features_path);
  require(!csv.rows.empty(), errc::empty_set, "features file has no rows");

  DrawsFile file;
  file.schema_id = model.schema_id;
  std::vector<FeatureVector> inputs;
  for (const FeatureRow& row : csv.rows) {
    file.set_ids.push_back(row.set_id);
    inputs.push_back(row.features);
  }
  file.draws = predict_mc(model, inputs, draws, g.seed);
  emit(g, [&](std::ostream& os) { write_draws_file(os, file); });
}

void cmd_table_build(const GlobalOptions& g, std::size_t n_alpha, std::size_t n_k, double la_min,
                     double la_max, double k_min, double k_max, std::size_t n_per_point,
                     std::size_t reps, const std::string& schema_file) {
  require(!g.out.empty(), errc::usage, "table build needs --out for the table file");
  const FeatureSchema schema = load_schema(schema_file);
  std::vector<double> alphas;
  for (double la : linspace(la_min, la_max, n_alpha)) alphas.push_back(std::pow(10.0, la));
  const FeatureTable table = build_table(alphas, linspace(k_min, k_max, n_k), n_per_point, schema,
                                         g.seed, reps, g.worker_threads());
  write_table(table, g.out);
  std::cout << "built table with " << table.grid.size() << " entries at " << g.out << '\n';
}

void cmd_table_query(const GlobalOptions& g, const std::string& table_path,
                     const std::string& features_path) {
  const FeatureTable table = read_table(table_path);
  const FeatureCsv csv = read_features_file(features_path);
  emit(g, [&](std::ostream& os) {
    os << "set_id,alpha,k,log10_alpha\n";
    for (const FeatureRow& row : csv.rows) {
      const HkParams est = table_estimate(table, row.features);
      os << row.set_id << ',' << fmt17(est.alpha) << ',' << fmt17(est.k) << ','
         << fmt17(std::log10(est.alpha)) << '\n';
    }
  });
}

void cmd_decompose(const GlobalOptions& g, const std::string& draws_path, std::size_t group) {
  require(!g.out.empty(), errc::usage, "decompose needs --out for the report file");
  const DrawsFile file = read_draws_path(draws_path);

  const std::size_t realizations = group == 0 ? file.draws.inputs : group;
  require(realizations >= 1 && file.draws.inputs % realizations == 0, errc::usage,
          "--group must divide the input count");
  const std::size_t sets = file.draws.inputs / realizations;
  const PredictionGrid grid = prediction_grid_from_draws(file.draws, sets, realizations);

  const UncertaintyReport proc = decompose_procedural(grid);
  const UncertaintyReport eq3 = decompose_eq3(grid);
  {
    std::ofstream os = open_output(g.out);
    write_uncertainty_csv(os, {proc, eq3});
    os.flush();
    require(os.good(), errc::configuration, "failed writing report file: " + g.out);
  }

  // Table-II-style companion: per-set interquartile range of the predicted
  // log10(alpha), quartiles over per-realization draw means.
  nlohmann::ordered_json summary;
  summary["format"] = "hkq-report-v1";
  summary["kind"] = "decompose-summary";
  summary["schema_id"] = file.schema_id;
  summary["sets"] = nlohmann::ordered_json::array();
  for (std::size_t s = 0; s < sets; ++s) {
    std::vector<double> means(realizations);
    for (std::size_t r = 0; r < realizations; ++r) {
      double acc = 0.0;
      for (std::size_t d = 0; d < grid.draws; ++d) acc += grid.value(s, r, d, 0);
      means[r] = acc / static_cast<double>(grid.draws);
    }
    std::sort(means.begin(), means.end());
    nlohmann::ordered_json sj;
    sj["set_id"] = s;
    sj["realizations"] = realizations;
    sj["median_log10_alpha"] = quantile_sorted(means, 0.5);
    sj["iqr_log10_alpha"] = {quantile_sorted(means, 0.25), quantile_sorted(means, 0.75)};
    for (std::size_t t = 0; t < PredictionGrid::kTargets; ++t) {
      const char* name = t == 0 ? "log10_alpha" : "k";
      sj[std::string("procedural_") + name] = {{"epistemic", proc.rows[s][t].epistemic},
                                               {"aleatoric", proc.rows[s][t].aleatoric},
                                               {"total", proc.rows[s][t].total}};
      sj[std::string("eq3_") + name] = {{"epistemic", eq3.rows[s][t].epistemic},
                                        {"aleatoric", eq3.rows[s][t].aleatoric},
                                        {"total", eq3.rows[s][t].total}};
    }
    summary["sets"].push_back(sj);
  }
  std::ofstream js = open_output(g.out + ".summary.json");
  js << summary.dump(2) << '\n';
  js.flush();
  require(js.good(), errc::configuration, "failed writing summary file");
  std::cout << summary.dump(2) << '\n';
}

void cmd_evaluate(const GlobalOptions& g, const std::string& model_path,
                  const std::string& schema_file, ExperimentConfig config,
                  const std::vector<std::string>& snr_tokens) {
  require(!g.out.empty(), errc::usage, "evaluate needs --out for the report directory");
  const BnnModel model = load_model(model_path);
  const FeatureSchema schema = load_schema(schema_file);
  if (!snr_tokens.empty()) config.snr_levels = parse_snr_levels(snr_tokens);
  config.seed = g.seed;

  const ExperimentReport report = run_experiment(config, model, schema, g.worker_threads());

  fs::create_directories(g.out);
  {
    std::ofstream os = open_output((fs::path(g.out) / "report.csv").string());
    write_experiment_csv(report, os);
    os.flush();
    require(os.good(), errc::configuration, "failed writing report.csv");
  }
  {
    std::ofstream os = open_output((fs::path(g.out) / "summary.json").string());
    write_summary_json(report, os);
    os.flush();
    require(os.good(), errc::configuration, "failed writing summary.json");
  }

  for (const LevelSummary& level : report.summary) {
    std::cout << "snr=" << (level.snr_db ? std::to_string(*level.snr_db) : "none");
    for (std::size_t t = 0; t < BnnModel::kTargets; ++t) {
      const TargetSummary& ts = level.targets[t];
      std::cout << "  " << (t == 0 ? "log10_alpha" : "k") << ": rmse=" << ts.rmse
                << " r_total=" << ts.error_vs_total.r << " (p=" << ts.error_vs_total.p << ')';
      if (ts.error_vs_total.weak) std::cout << " [weak]";
    }
    std::cout << '\n';
  }
  std::cout << "wrote report to " << g.out << '\n';
}

void cmd_ingest(const std::string& dir, const std::string& region) {
  const PatchDirectory patches =
      ingest_patches(dir, region.empty() ? fs::path(dir).filename().string() : region);
  std::size_t min_n = patches.patches.front().samples.size(), max_n = min_n;
  for (const EnvelopeSet& set : patches.patches) {
    min_n = std::min(min_n, set.samples.size());
    max_n = std::max(max_n, set.samples.size());
  }
  nlohmann::ordered_json j;
  j["region"] = patches.region;
  j["patches"] = patches.patches.size();
  j["samples"] = {{"min", min_n}, {"max", max_n}};
  std::cout << j.dump(2) << '\n';
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Homodyned-K envelope simulation, estimation, and uncertainty decomposition"};
  app.require_subcommand(1);

  GlobalOptions g;
  app.add_option("--seed", g.seed, "Master seed; every stream derives from it")
      ->capture_default_str();
  app.add_option("--threads", g.threads, "Worker threads (0 = hardware concurrency)")
      ->capture_default_str();
  app.add_flag("--strict-determinism", g.strict,
               "Force single-threaded execution for bit-stable reductions");
  app.add_option("--out", g.out, "Output file or directory (subcommand-specific)");

  // generate
  auto* generate = app.add_subcommand("generate", "Simulate HK envelope sets over a parameter grid");
  std::vector<double> gen_alphas, gen_ks;
  std::size_t gen_n = 1000, gen_sets = 1;
  double gen_sigma = 1.0;
  double gen_snr = 0.0;
  generate->add_option("--alpha", gen_alphas, "Clustering parameter values (> 0)")->required();
  generate->add_option("--k", gen_ks, "Coherent-to-diffuse ratio values (>= 0)")->required();
  generate->add_option("--n", gen_n, "Samples per set")->capture_default_str();
  generate->add_option("--sets", gen_sets, "Realizations per grid point")->capture_default_str();
  generate->add_option("--sigma", gen_sigma, "Diffuse scale")->capture_default_str();
  auto* gen_snr_opt = generate->add_option("--snr", gen_snr, "Apply Rayleigh noise at this SNR (dB)");
  generate->callback([&] {
    cmd_generate(g, gen_alphas, gen_ks, gen_n, gen_sets, gen_sigma,
                 gen_snr_opt->count() ? std::optional<double>(gen_snr) : std::nullopt);
  });

  // features
  auto* features = app.add_subcommand("features", "Extract envelope-statistics features");
  std::vector<std::string> feat_paths;
  std::string feat_schema;
  features->add_option("paths", feat_paths, "Envelope files (hkq-env-v1)")->required();
  features->add_option("--schema-file", feat_schema, "Schema JSON (default: built-in env-stats-v1)");
  features->callback([&] { cmd_features(g, feat_paths, feat_schema); });

  // train
  auto* train_cmd = app.add_subcommand("train", "Train the variational BNN regressor");
  std::string train_features;
  TrainConfig train_config;
  std::vector<std::size_t> train_hidden = {64, 64};
  double train_prior = 1.0;
  train_cmd->add_option("--features", train_features, "Labeled features CSV")->required();
  train_cmd->add_option("--steps", train_config.steps)->capture_default_str();
  train_cmd->add_option("--batch", train_config.batch_size)->capture_default_str();
  train_cmd->add_option("--lr", train_config.learning_rate)->capture_default_str();
  train_cmd->add_option("--kl-weight", train_config.kl_weight)->capture_default_str();
  train_cmd->add_option("--mc", train_config.mc_samples)->capture_default_str();
  train_cmd->add_option("--log-every", train_config.log_every)->capture_default_str();
  train_cmd->add_option("--hidden", train_hidden, "Hidden layer widths")->capture_default_str();
  train_cmd->add_option("--prior", train_prior, "Prior stddev")->capture_default_str();
  train_cmd->callback([&] { cmd_train(g, train_features, train_config, train_hidden, train_prior); });

  // predict
  auto* predict = app.add_subcommand("predict", "Monte-Carlo weight-draw predictions");
  std::string pred_model, pred_features;
  std::size_t pred_draws = 50;
  predict->add_option("--model", pred_model, "Model file (hkq-bnn-v1)")->required();
  predict->add_option("--features", pred_features, "Features CSV")->required();
  predict->add_option("--draws", pred_draws, "Weight draws per input")->capture_default_str();
  predict->callback([&] { cmd_predict(g, pred_model, pred_features, pred_draws); });

  // table build/query
  auto* table_cmd = app.add_subcommand("table", "Table-search baseline estimator");
  table_cmd->require_subcommand(1);
  auto* tbuild = table_cmd->add_subcommand("build", "Build a feature lookup table");
  std::size_t tb_na = 31, tb_nk = 11, tb_n = 1000, tb_reps = 10;
  double tb_la_min = -0.3, tb_la_max = 1.3, tb_k_min = 0.0, tb_k_max = 1.25;
  std::string tb_schema;
  tbuild->add_option("--n-alpha", tb_na)->capture_default_str();
  tbuild->add_option("--n-k", tb_nk)->capture_default_str();
  tbuild->add_option("--log-alpha-min", tb_la_min)->capture_default_str();
  tbuild->add_option("--log-alpha-max", tb_la_max)->capture_default_str();
  tbuild->add_option("--k-min", tb_k_min)->capture_default_str();
  tbuild->add_option("--k-max", tb_k_max)->capture_default_str();
  tbuild->add_option("--n", tb_n, "Samples per set")->capture_default_str();
  tbuild->add_option("--reps", tb_reps, "Sets averaged per entry")->capture_default_str();
  tbuild->add_option("--schema-file", tb_schema);
  tbuild->callback([&] {
    cmd_table_build(g, tb_na, tb_nk, tb_la_min, tb_la_max, tb_k_min, tb_k_max, tb_n, tb_reps,
                    tb_schema);
  });
  auto* tquery = table_cmd->add_subcommand("query", "Estimate parameters by table search");
  std::string tq_table, tq_features;
  tquery->add_option("--table", tq_table, "Table CSV (with .json sidecar)")->required();
  tquery->add_option("--features", tq_features, "Features CSV")->required();
  tquery->callback([&] { cmd_table_query(g, tq_table, tq_features); });

  // decompose
  auto* decompose = app.add_subcommand("decompose", "Epistemic/aleatoric decomposition of draws");
  std::string dec_draws;
  std::size_t dec_group = 0;
  decompose->add_option("--draws-file", dec_draws, "Draw tensor (hkq-draws-v1)")->required();
  decompose->add_option("--group", dec_group,
                        "Realizations per set (0 = all inputs form one set)")
      ->capture_default_str();
  decompose->callback([&] { cmd_decompose(g, dec_draws, dec_group); });

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Run the full error-uncertainty experiment");
  std::string eval_model, eval_schema;
  ExperimentConfig eval_config;
  std::vector<std::string> eval_snr;
  evaluate->add_option("--model", eval_model, "Model file (hkq-bnn-v1)")->required();
  evaluate->add_option("--schema-file", eval_schema);
  evaluate->add_option("--n-alpha", eval_config.n_alpha)->capture_default_str();
  evaluate->add_option("--n-k", eval_config.n_k)->capture_default_str();
  evaluate->add_option("--realizations", eval_config.realizations)->capture_default_str();
  evaluate->add_option("--n", eval_config.samples_per_set, "Samples per set")
      ->capture_default_str();
  evaluate->add_option("--draws", eval_config.draws)->capture_default_str();
  evaluate->add_option("--snr", eval_snr, "SNR levels: 'none' or dB values")
      ->capture_default_str();
  evaluate->add_option("--log-alpha-min", eval_config.log_alpha_min)->capture_default_str();
  evaluate->add_option("--log-alpha-max", eval_config.log_alpha_max)->capture_default_str();
  evaluate->add_option("--k-min", eval_config.k_min)->capture_default_str();
  evaluate->add_option("--k-max", eval_config.k_max)->capture_default_str();
  evaluate->callback([&] { cmd_evaluate(g, eval_model, eval_schema, eval_config, eval_snr); });

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Validate a directory of envelope patches");
  std::string ing_dir, ing_region;
  ingest->add_option("--dir", ing_dir, "Patch directory")->required();
  ingest->add_option("--region", ing_region, "Region label (default: directory name)");
  ingest->callback([&] { cmd_ingest(ing_dir, ing_region); });

  // Accept the global flags after the subcommand name as well.
  const auto all = [](const CLI::App*) { return true; };
  for (CLI::App* sc : app.get_subcommands(all)) {
    sc->fallthrough();
    for (CLI::App* sub : sc->get_subcommands(all)) sub->fallthrough();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.code() == errc::usage ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace hkq
