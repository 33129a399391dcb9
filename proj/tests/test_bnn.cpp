#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "hkq/bnn.hpp"
#include "hkq/rng.hpp"
#include "hkq/stats.hpp"

using namespace hkq;

namespace {

FeatureVector raw_features(std::vector<double> v, const std::string& id = "raw") {
  FeatureVector f;
  f.values = std::move(v);
  f.schema_id = id;
  return f;
}

// 1 input -> hidden {1} -> 4 outputs: exactly 20 variational parameters.
BnnModel tiny_model(std::uint64_t seed = 3) {
  BnnModel m = init_model_dims(1, {1}, 1.0, seed);
  REQUIRE(m.parameter_count() == 20);
  return m;
}

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("hkq_bnn_test_" + std::to_string(::getpid()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

Dataset linear_dataset(std::size_t n, std::uint64_t seed) {
  // y0 = 1.5 x0 - x1 + 0.5 x2, y1 = 0.25 + 0.5 x1 - x2; noiseless lines.
  // Width 3 = the smallest length a schema can declare (one order, no logs).
  Dataset ds;
  ds.schema.id = "raw";
  ds.schema.moment_orders = {1.0};
  ds.schema.include_log_moments = false;
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const double x0 = 2.0 * rng.uniform() - 1.0;
    const double x1 = 2.0 * rng.uniform() - 1.0;
    const double x2 = 2.0 * rng.uniform() - 1.0;
    ds.features.push_back(raw_features({x0, x1, x2}));
    ds.targets.push_back({1.5 * x0 - x1 + 0.5 * x2, 0.25 + 0.5 * x1 - x2});
  }
  return ds;
}

}  // namespace

TEST_CASE("init is deterministic and shaped by the width list") {
  const BnnModel a = init_model_dims(11, {64, 64}, 1.0, 42);
  const BnnModel b = init_model_dims(11, {64, 64}, 1.0, 42);
  const BnnModel c = init_model_dims(11, {64, 64}, 1.0, 43);
  CHECK(a.parameters() == b.parameters());
  CHECK(a.parameters() != c.parameters());
  CHECK(a.widths() == std::vector<std::size_t>{11, 64, 64, 4});
  CHECK(a.parameter_count() == 2 * ((11 * 64 + 64) + (64 * 64 + 64) + (64 * 4 + 4)));
  CHECK_NOTHROW(a.validate());

  // Initial posterior stddev is pinned at 0.05 * prior through softplus.
  const BnnModel t = tiny_model();
  const double rho0 = t.layers[0].weight_rho.at(0, 0);
  CHECK(std::log1p(std::exp(rho0)) == doctest::Approx(0.05).epsilon(1e-12));
}

TEST_CASE("parameter round-trip preserves the model") {
  BnnModel m = tiny_model();
  const auto flat = m.parameters();
  REQUIRE(flat.size() == 20);
  BnnModel m2 = tiny_model(99);
  m2.set_parameters(flat);
  CHECK(m2.parameters() == flat);
  CHECK_THROWS_AS(m2.set_parameters(std::vector<double>(19, 0.0)), Error);
}

TEST_CASE("KL divergence is zero exactly at the prior and positive elsewhere") {
  BnnModel m = tiny_model();
  CHECK(kl_divergence(m) > 0.0);  // posterior stddev 0.05 != prior 1

  // Move the posterior onto the prior: mean 0, softplus(rho) = prior_stddev.
  auto flat = m.parameters();
  const double rho_prior = std::log(std::expm1(m.prior_stddev));
  // Flat order per layer: weight_mean, weight_rho, bias_mean, bias_rho.
  std::size_t i = 0;
  for (const auto& layer : m.layers) {
    for (std::size_t w = 0; w < layer.weight_mean.size(); ++w) flat[i++] = 0.0;
    for (std::size_t w = 0; w < layer.weight_rho.size(); ++w) flat[i++] = rho_prior;
    for (std::size_t b = 0; b < layer.bias_mean.size(); ++b) flat[i++] = 0.0;
    for (std::size_t b = 0; b < layer.bias_rho.size(); ++b) flat[i++] = rho_prior;
  }
  m.set_parameters(flat);
  CHECK(kl_divergence(m) == doctest::Approx(0.0).epsilon(1e-12));

  // Any mean shift strictly increases it.
  flat[0] = 0.3;
  m.set_parameters(flat);
  CHECK(kl_divergence(m) > 0.0);
}

TEST_CASE("elbo is deterministic in the seed and scales KL by dataset size") {
  BnnModel m = tiny_model();
  const std::vector<FeatureVector> x{raw_features({0.3}), raw_features({-0.8})};
  const std::vector<std::array<double, 2>> y{{0.1, 0.4}, {-0.2, 0.9}};

  const auto a = elbo_loss(m, x, y, 3, 1.0, 100, 7);
  const auto b = elbo_loss(m, x, y, 3, 1.0, 100, 7);
  CHECK(a.loss == b.loss);
  CHECK(a.gradient == b.gradient);
  CHECK(a.gradient.size() == m.parameter_count());

  const auto c = elbo_loss(m, x, y, 3, 1.0, 100, 8);
  CHECK(a.loss != c.loss);

  // KL contribution: loss(kl_weight=1, N) - loss(kl_weight=0) == KL/N.
  const auto no_kl = elbo_loss(m, x, y, 3, 0.0, 100, 7);
  CHECK(a.loss - no_kl.loss == doctest::Approx(kl_divergence(m) / 100.0).epsilon(1e-9));
}

TEST_CASE("duplicating a batch row leaves the batch-mean NLL unchanged") {
  BnnModel m = tiny_model();
  const auto one = elbo_loss(m, {raw_features({0.4})}, {{0.2, -0.1}}, 2, 0.0, 50, 11);
  const auto two = elbo_loss(m, {raw_features({0.4}), raw_features({0.4})},
                             {{0.2, -0.1}, {0.2, -0.1}}, 2, 0.0, 50, 11);
  CHECK(one.loss == doctest::Approx(two.loss).epsilon(1e-14));
}

TEST_CASE("gradients match central finite differences on a 20-parameter model") {
  BnnModel m = tiny_model();
  // Push the model into a generic position so no gradient is accidentally 0
  // and the logvar head stays far from the ±10 clamp (where the analytic
  // gradient is deliberately masked).
  auto flat = m.parameters();
  Rng rng(2024);
  for (auto& v : flat) v += 0.3 * rng.normal();
  m.set_parameters(flat);

  const std::vector<FeatureVector> x{raw_features({0.7}), raw_features({-0.4}),
                                     raw_features({1.2})};
  const std::vector<std::array<double, 2>> y{{0.3, 0.1}, {-0.5, 0.8}, {0.0, -0.2}};
  const std::size_t mc = 4;
  const double klw = 0.7;
  const std::size_t n_data = 37;
  const std::uint64_t seed = 5;  // pins the reparameterization noise

  const auto base = elbo_loss(m, x, y, mc, klw, n_data, seed);
  const double h = 1e-5;
  for (std::size_t i = 0; i < flat.size(); ++i) {
    CAPTURE(i);
    auto up = flat, dn = flat;
    up[i] += h;
    dn[i] -= h;
    BnnModel mu = m, md = m;
    mu.set_parameters(up);
    md.set_parameters(dn);
    const double fd =
        (elbo_loss(mu, x, y, mc, klw, n_data, seed).loss -
         elbo_loss(md, x, y, mc, klw, n_data, seed).loss) /
        (2.0 * h);
    const double an = base.gradient[i];
    CHECK(std::abs(fd - an) <= 1e-4 * std::max(std::abs(fd), std::abs(an)) + 1e-6);
  }
}

TEST_CASE("elbo loss variance shrinks like 1/sqrt(mc_samples)") {
  BnnModel m = tiny_model();
  const std::vector<FeatureVector> x{raw_features({0.5})};
  const std::vector<std::array<double, 2>> y{{0.2, 0.3}};
  auto spread = [&](std::size_t s) {
    std::vector<double> losses;
    for (std::uint64_t seed = 0; seed < 40; ++seed)
      losses.push_back(elbo_loss(m, x, y, s, 0.0, 10, seed).loss);
    return population_stddev(losses);
  };
  const double s50 = spread(50);
  const double s200 = spread(200);
  // Expected ratio 2; wide band for 40-seed sampling noise.
  CHECK(s50 / s200 > 1.4);
  CHECK(s50 / s200 < 2.9);
}

TEST_CASE("training fits a linear map and is reproducible") {
  const Dataset ds = linear_dataset(512, 1);
  TrainConfig cfg;
  cfg.steps = 1500;
  cfg.batch_size = 64;
  cfg.learning_rate = 3e-3;
  cfg.kl_weight = 0.0;  // pure fit: KL off isolates the NLL path
  cfg.seed = 9;
  cfg.log_every = 500;

  BnnModel init = init_model_dims(3, {16}, 1.0, 4);
  auto [model, log] = train(init, ds, cfg);
  REQUIRE(!log.empty());
  CHECK(log.front().loss > log.back().loss);
  CHECK(log.back().step == 1500);

  // Reproducibility: same config, same result, bit for bit.
  auto [model2, log2] = train(init, ds, cfg);
  CHECK(model.parameters() == model2.parameters());

  // Held-out accuracy: mean prediction should be close to the clean line.
  const Dataset held = linear_dataset(256, 2);
  const auto draws = predict_mc(model, held.features, 40, 123);
  double se = 0.0, var0 = 0.0;
  std::vector<double> t0;
  for (std::size_t i = 0; i < held.features.size(); ++i) {
    double p = 0.0;
    for (std::size_t d = 0; d < draws.draws; ++d) p += draws.mean_at(i, d, 0);
    p /= static_cast<double>(draws.draws);
    se += (p - held.targets[i][0]) * (p - held.targets[i][0]);
    t0.push_back(held.targets[i][0]);
  }
  const double rmse = std::sqrt(se / static_cast<double>(held.features.size()));
  var0 = population_variance(t0);
  CHECK(rmse < 0.35 * std::sqrt(var0));
}

TEST_CASE("training normalization records dataset statistics and rejects degenerate columns") {
  Dataset ds = linear_dataset(128, 3);
  TrainConfig cfg;
  cfg.steps = 10;
  cfg.batch_size = 16;
  cfg.seed = 1;
  auto [model, log] = train(init_model_dims(3, {4}, 1.0, 8), ds, cfg);

  std::vector<double> col0;
  for (const auto& f : ds.features) col0.push_back(f.values[0]);
  CHECK(model.input_norm.mean[0] == doctest::Approx(mean(col0)).epsilon(1e-12));
  CHECK(model.input_norm.stddev[0] == doctest::Approx(population_stddev(col0)).epsilon(1e-12));

  std::vector<double> t1;
  for (const auto& t : ds.targets) t1.push_back(t[1]);
  CHECK(model.target_norm.mean[1] == doctest::Approx(mean(t1)).epsilon(1e-12));

  // A constant feature column cannot be normalized.
  Dataset bad = ds;
  for (auto& f : bad.features) f.values[1] = 3.0;
  CHECK_THROWS_AS(train(init_model_dims(3, {4}, 1.0, 8), bad, cfg), Error);

  // A constant target cannot be normalized either.
  Dataset bad2 = ds;
  for (auto& t : bad2.targets) t[0] = 0.5;
  CHECK_THROWS_AS(train(init_model_dims(3, {4}, 1.0, 8), bad2, cfg), Error);
}

TEST_CASE("predict_mc shares one weight draw across inputs and de-normalizes") {
  const Dataset ds = linear_dataset(64, 5);
  TrainConfig cfg;
  cfg.steps = 200;
  cfg.batch_size = 32;
  cfg.seed = 2;
  auto [model, log] = train(init_model_dims(3, {8}, 1.0, 6), ds, cfg);

  const std::vector<FeatureVector> x{raw_features({0.25, -0.5, 0.1}), raw_features({0.25, -0.5, 0.1}),
                                     raw_features({0.9, 0.1, -0.3})};
  const auto draws = predict_mc(model, x, 16, 77);
  CHECK(draws.inputs == 3);
  CHECK(draws.draws == 16);
  CHECK(draws.means.size() == 3 * 16 * 2);
  for (std::size_t d = 0; d < 16; ++d) {
    for (std::size_t t = 0; t < 2; ++t) {
      // Identical inputs under the same weight realization agree exactly.
      CHECK(draws.mean_at(0, d, t) == draws.mean_at(1, d, t));
      CHECK(draws.variance_at(0, d, t) == draws.variance_at(1, d, t));
      CHECK(draws.variance_at(2, d, t) > 0.0);
    }
  }

  // Draw d is seeded by (seed, d): reordering/subsetting inputs cannot change it.
  const auto sub = predict_mc(model, {x[2]}, 16, 77);
  for (std::size_t d = 0; d < 16; ++d)
    CHECK(sub.mean_at(0, d, 0) == draws.mean_at(2, d, 0));

  CHECK(predict_mc(model, x, 16, 78).means != draws.means);

  // Schema guard: inputs tagged with a different schema are rejected.
  CHECK_THROWS_AS(predict_mc(model, {raw_features({0.1, 0.2, 0.3}, "other")}, 4, 1), Error);
}

TEST_CASE("save/load round-trips the model bit for bit") {
  TempDir tmp;
  const Dataset ds = linear_dataset(64, 7);
  TrainConfig cfg;
  cfg.steps = 100;
  cfg.batch_size = 32;
  cfg.seed = 3;
  auto [model, log] = train(init_model_dims(3, {8, 8}, 0.7, 6), ds, cfg);

  const std::string path = tmp.file("model.hkqbnn");
  save_model(model, path);
  const BnnModel back = load_model(path);

  CHECK(back.parameters() == model.parameters());
  CHECK(back.schema_id == model.schema_id);
  CHECK(back.prior_stddev == model.prior_stddev);
  CHECK(back.widths() == model.widths());
  CHECK(back.input_norm.mean == model.input_norm.mean);
  CHECK(back.input_norm.stddev == model.input_norm.stddev);
  CHECK(back.target_norm.mean == model.target_norm.mean);

  const std::vector<FeatureVector> x{raw_features({0.4, 0.6, -0.2})};
  const auto d1 = predict_mc(model, x, 8, 5);
  const auto d2 = predict_mc(back, x, 8, 5);
  CHECK(d1.means == d2.means);
  CHECK(d1.variances == d2.variances);
}

TEST_CASE("model loader rejects corrupt files") {
  TempDir tmp;
  BnnModel m = tiny_model();
  m.schema_id = "raw";
  const std::string good = tmp.file("good.hkqbnn");
  save_model(m, good);

  SUBCASE("truncated weight block") {
    std::ifstream in(good, std::ios::binary);
    std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const std::string cut = all.substr(0, all.size() - 16);
    const std::string path = tmp.file("cut.hkqbnn");
    std::ofstream(path, std::ios::binary) << cut;
    CHECK_THROWS_AS(load_model(path), Error);
  }
  SUBCASE("trailing bytes") {
    std::ifstream in(good, std::ios::binary);
    std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const std::string path = tmp.file("extra.hkqbnn");
    std::ofstream(path, std::ios::binary) << all << "XX";
    CHECK_THROWS_AS(load_model(path), Error);
  }
  SUBCASE("unsupported format tag") {
    std::ifstream in(good, std::ios::binary);
    std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const auto pos = all.find("hkq-bnn-v1");
    REQUIRE(pos != std::string::npos);
    all.replace(pos, 10, "hkq-bnn-v9");
    const std::string path = tmp.file("vers.hkqbnn");
    std::ofstream(path, std::ios::binary) << all;
    try {
      (void)load_model(path);
      FAIL("expected format error");
    } catch (const Error& e) {
      CHECK(e.code() == errc::format);
    }
  }
  SUBCASE("missing file") { CHECK_THROWS_AS(load_model(tmp.file("nope.hkqbnn")), Error); }
}

TEST_CASE("train config validation") {
  TrainConfig cfg;
  cfg.steps = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = {};
  cfg.learning_rate = -1.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = {};
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = {};
  cfg.mc_samples = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  CHECK_NOTHROW(TrainConfig{}.validate());
}
