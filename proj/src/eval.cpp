#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>

#include "hkq/eval.hpp"
#include "hkq/features.hpp"
#include "hkq/parallel.hpp"
#include "hkq/rng.hpp"
#include "hkq/stats.hpp"
#include "json.hpp"

namespace hkq {
namespace {

const char* kTargetNames[BnnModel::kTargets] = {"log10_alpha", "k"};

std::string fmt17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double median(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  return quantile_sorted(values, 0.5);
}

CorrelationStat correlate(const std::vector<double>& error, const std::vector<double>& unc) {
  const PearsonResult pr = pearson(error, unc);
  return {pr.r, pr.p, std::fabs(pr.r) < 0.1};
}

nlohmann::ordered_json corr_json(const CorrelationStat& c) {
  return {{"r", c.r}, {"p", c.p}, {"weak", c.weak}};
}

nlohmann::ordered_json snr_json(const std::optional<double>& snr) {
  if (snr) return *snr;
  return nullptr;
}

}  // namespace

void ExperimentConfig::validate() const {
  require(n_alpha >= 1 && n_k >= 1, errc::configuration, "grid axes must be >= 1");
  require(realizations >= 2, errc::configuration, "realizations must be >= 2");
  require(samples_per_set >= 8, errc::configuration, "samples_per_set must be >= 8");
  require(draws >= 2, errc::configuration, "draws must be >= 2");
  require(!snr_levels.empty(), errc::configuration, "need at least one SNR level");
  require(log_alpha_min < log_alpha_max, errc::configuration, "bad log10 alpha range");
  require(k_min <= k_max && k_min >= 0.0, errc::configuration, "bad k range");
  for (const auto& level : snr_levels)
    if (level) require(std::isfinite(*level), errc::configuration, "SNR level must be finite");
}

TestGrid build_test_grid(const ExperimentConfig& config, std::size_t threads) {
  config.validate();

  TestGrid grid;
  Rng rng(derive_seed(config.seed, 0, Stream::grid));
  grid.log10_alphas.resize(config.n_alpha);
  for (double& la : grid.log10_alphas)
    la = config.log_alpha_min + (config.log_alpha_max - config.log_alpha_min) * rng.uniform();
  std::sort(grid.log10_alphas.begin(), grid.log10_alphas.end());

  grid.ks.resize(config.n_k);
  for (std::size_t i = 0; i < config.n_k; ++i)
    grid.ks[i] = config.n_k == 1 ? config.k_min
                                 : config.k_min + (config.k_max - config.k_min) *
                                                      static_cast<double>(i) /
                                                      static_cast<double>(config.n_k - 1);

  const std::size_t n_points = config.n_alpha * config.n_k;
  grid.clean_sets.resize(n_points * config.realizations);
  parallel_for(grid.clean_sets.size(), threads, [&](std::size_t i) {
    const std::size_t point = i / config.realizations;
    const HkParams params{std::pow(10.0, grid.log10_alphas[point / config.n_k]),
                          grid.ks[point % config.n_k], 1.0};
    grid.clean_sets[i] =
        sample_hk(params, config.samples_per_set, derive_seed(config.seed, i, Stream::envelope));
  });
  return grid;
}

double rmse(const std::vector<double>& predictions, const std::vector<double>& labels) {
  require(predictions.size() == labels.size(), errc::dimension,
          "prediction/label lengths differ");
  require(!predictions.empty(), errc::empty_set, "rmse of empty sequences");
  double acc = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double d = predictions[i] - labels[i];
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(predictions.size()));
}

PearsonResult pearson(const std::vector<double>& x, const std::vector<double>& y) {
  require(x.size() == y.size(), errc::dimension, "pearson input lengths differ");
  const std::size_t n = x.size();
  require(n >= 3, errc::insufficient_data, "pearson needs at least 3 points");

  const double mx = mean(x), my = mean(y);
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  require(sxx > 0.0 && syy > 0.0, errc::degenerate_input, "pearson input is constant");

  double r = sxy / std::sqrt(sxx * syy);
  r = std::clamp(r, -1.0, 1.0);
  const double nu = static_cast<double>(n - 2);
  double p;
  if (1.0 - r * r <= 0.0) {
    p = 0.0;
  } else {
    const double t = r * std::sqrt(nu / (1.0 - r * r));
    p = student_t_two_sided_p(t, nu);
  }
  return {r, p};
}

ExperimentReport run_experiment(const ExperimentConfig& config, const BnnModel& model,
                                const FeatureSchema& schema, std::size_t threads) {
  config.validate();
  model.validate();
  schema.validate();
  require(schema.id == model.schema_id, errc::configuration,
          "model schema '" + model.schema_id + "' does not match feature schema '" + schema.id +
              "'");

  const TestGrid grid = build_test_grid(config, threads);
  const std::size_t n_points = config.n_alpha * config.n_k;

  ExperimentReport report;
  report.config = config;
  report.schema_id = schema.id;
  report.rows.resize(config.snr_levels.size() * n_points);

  for (std::size_t li = 0; li < config.snr_levels.size(); ++li) {
    const std::optional<double> level = config.snr_levels[li];
    parallel_for(n_points, threads, [&](std::size_t p) {
      const double la = grid.log10_alphas[p / config.n_k];
      const double k = grid.ks[p % config.n_k];

      std::vector<FeatureVector> features(config.realizations);
      for (std::size_t r = 0; r < config.realizations; ++r) {
        const EnvelopeSet& clean = grid.clean_sets[p * config.realizations + r];
        if (level) {
          const EnvelopeSet noisy = add_rayleigh_noise(
              clean, *level,
              derive_seed(config.seed, (li * n_points + p) * config.realizations + r,
                          Stream::noise));
          features[r] = extract_features(noisy, schema);
        } else {
          features[r] = extract_features(clean, schema);
        }
      }

      const InferenceDraws draws = predict_mc(
          model, features, config.draws,
          derive_seed(config.seed, li * n_points + p, Stream::predict_draw));
      const PredictionGrid pgrid = prediction_grid_from_draws(draws, 1, config.realizations);
      const UncertaintyReport proc = decompose_procedural(pgrid);
      const UncertaintyReport eq3 = decompose_eq3(pgrid);

      ExperimentRow row;
      row.point = p;
      row.log10_alpha = la;
      row.k = k;
      row.snr_db = level;
      const double truth[BnnModel::kTargets] = {la, k};
      for (std::size_t t = 0; t < BnnModel::kTargets; ++t) {
        double acc = 0.0;
        for (std::size_t r = 0; r < config.realizations; ++r)
          for (std::size_t d = 0; d < config.draws; ++d) acc += draws.mean_at(r, d, t);
        row.prediction[t] = acc / static_cast<double>(config.realizations * config.draws);
        row.error[t] = std::fabs(row.prediction[t] - truth[t]);
        row.procedural[t] = proc.rows[0][t];
        row.eq3[t] = eq3.rows[0][t];
      }
      report.rows[li * n_points + p] = row;
    });

    LevelSummary summary;
    summary.snr_db = level;
    for (std::size_t t = 0; t < BnnModel::kTargets; ++t) {
      std::vector<double> pred(n_points), truth(n_points), err(n_points), epi(n_points),
          ale(n_points), tot(n_points);
      for (std::size_t p = 0; p < n_points; ++p) {
        const ExperimentRow& row = report.rows[li * n_points + p];
        pred[p] = row.prediction[t];
        truth[p] = t == 0 ? row.log10_alpha : row.k;
        err[p] = row.error[t];
        epi[p] = row.procedural[t].epistemic;
        ale[p] = row.procedural[t].aleatoric;
        tot[p] = row.procedural[t].total;
      }
      TargetSummary& ts = summary.targets[t];
      ts.rmse = rmse(pred, truth);
      ts.error_vs_epistemic = correlate(err, epi);
      ts.error_vs_aleatoric = correlate(err, ale);
      ts.error_vs_total = correlate(err, tot);
      ts.median_epistemic = median(epi);
      ts.median_aleatoric = median(ale);
      ts.median_total = median(tot);
    }
    report.summary.push_back(summary);
  }
  return report;
}

std::vector<EnvelopePoint> lower_envelope(const std::vector<double>& errors,
                                          const std::vector<double>& uncertainties,
                                          std::size_t n_bins) {
  require(errors.size() == uncertainties.size(), errc::dimension,
          "error/uncertainty lengths differ");
  require(!errors.empty(), errc::empty_set, "lower envelope of empty sequences");
  require(n_bins >= 2, errc::configuration, "need at least 2 bins");

  const auto [lo_it, hi_it] = std::minmax_element(uncertainties.begin(), uncertainties.end());
  const double lo = *lo_it, hi = *hi_it;
  const double width = (hi - lo) / static_cast<double>(n_bins);

  std::vector<double> best(n_bins, std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < errors.size(); ++i) {
    std::size_t bin = 0;
    if (width > 0.0)
      bin = std::min(n_bins - 1, static_cast<std::size_t>((uncertainties[i] - lo) / width));
    best[bin] = std::min(best[bin], errors[i]);
  }

  std::vector<EnvelopePoint> envelope;
  for (std::size_t b = 0; b < n_bins; ++b)
    if (std::isfinite(best[b]))
      envelope.push_back({lo + width * (static_cast<double>(b) + 0.5), best[b]});
  return envelope;
}

void write_experiment_csv(const ExperimentReport& report, std::ostream& os) {
  nlohmann::ordered_json manifest;
  manifest["format"] = "hkq-report-v1";
  manifest["kind"] = "experiment-rows";
  manifest["schema_id"] = report.schema_id;
  manifest["error_definition"] = report.error_definition;
  os << manifest.dump() << '\n';

  os << "snr_db,point,log10_alpha,k";
  for (std::size_t t = 0; t < BnnModel::kTargets; ++t) {
    const std::string n = kTargetNames[t];
    os << ",pred_" << n << ",error_" << n << ",epistemic_" << n << ",aleatoric_" << n << ",total_"
       << n << ",eq3_epistemic_" << n << ",eq3_aleatoric_" << n << ",eq3_total_" << n;
  }
  os << '\n';
  for (const ExperimentRow& row : report.rows) {
    os << (row.snr_db ? fmt17(*row.snr_db) : "none") << ',' << row.point << ','
       << fmt17(row.log10_alpha) << ',' << fmt17(row.k);
    for (std::size_t t = 0; t < BnnModel::kTargets; ++t) {
      os << ',' << fmt17(row.prediction[t]) << ',' << fmt17(row.error[t]) << ','
         << fmt17(row.procedural[t].epistemic) << ',' << fmt17(row.procedural[t].aleatoric) << ','
         << fmt17(row.procedural[t].total) << ',' << fmt17(row.eq3[t].epistemic) << ','
         << fmt17(row.eq3[t].aleatoric) << ',' << fmt17(row.eq3[t].total);
    }
    os << '\n';
  }
}

void write_summary_json(const ExperimentReport& report, std::ostream& os) {
  nlohmann::ordered_json j;
  j["format"] = "hkq-report-v1";
  j["kind"] = "experiment-summary";
  j["schema_id"] = report.schema_id;
  j["error_definition"] = report.error_definition;

  nlohmann::ordered_json cfg;
  cfg["n_alpha"] = report.config.n_alpha;
  cfg["n_k"] = report.config.n_k;
  cfg["realizations"] = report.config.realizations;
  cfg["samples_per_set"] = report.config.samples_per_set;
  cfg["draws"] = report.config.draws;
  cfg["log_alpha_min"] = report.config.log_alpha_min;
  cfg["log_alpha_max"] = report.config.log_alpha_max;
  cfg["k_min"] = report.config.k_min;
  cfg["k_max"] = report.config.k_max;
  cfg["seed"] = report.config.seed;
  cfg["snr_levels"] = nlohmann::ordered_json::array();
  for (const auto& level : report.config.snr_levels) cfg["snr_levels"].push_back(snr_json(level));
  j["config"] = cfg;

  j["levels"] = nlohmann::ordered_json::array();
  for (const LevelSummary& level : report.summary) {
    nlohmann::ordered_json lj;
    lj["snr_db"] = snr_json(level.snr_db);
    lj["targets"] = nlohmann::ordered_json::array();
    for (std::size_t t = 0; t < BnnModel::kTargets; ++t) {
      const TargetSummary& ts = level.targets[t];
      nlohmann::ordered_json tj;
      tj["target"] = kTargetNames[t];
      tj["rmse"] = ts.rmse;
      tj["pearson"] = {{"epistemic", corr_json(ts.error_vs_epistemic)},
                       {"aleatoric", corr_json(ts.error_vs_aleatoric)},
                       {"total", corr_json(ts.error_vs_total)}};
      tj["median_epistemic"] = ts.median_epistemic;
      tj["median_aleatoric"] = ts.median_aleatoric;
      tj["median_total"] = ts.median_total;
      lj["targets"].push_back(tj);
    }
    j["levels"].push_back(lj);
  }
  os << j.dump(2) << '\n';
}

}  // namespace hkq
