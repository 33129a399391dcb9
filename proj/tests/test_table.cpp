#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "hkq/features.hpp"
#include "hkq/hk_model.hpp"
#include "hkq/table.hpp"

using namespace hkq;

namespace {

std::vector<double> log_alpha_grid(std::size_t n, double lo, double hi) {
  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i)
    g[i] = std::pow(10.0, lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1));
  return g;
}

std::vector<double> linspace(std::size_t n, double lo, double hi) {
  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i)
    g[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  return g;
}

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("hkq_table_test_" + std::to_string(::getpid()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

}  // namespace

TEST_CASE("grid shape, ordering, and determinism") {
  const auto alphas = log_alpha_grid(4, -0.3, 1.3);
  const auto ks = linspace(3, 0.0, 1.25);
  const auto t1 = build_table(alphas, ks, 1000, default_schema(), 17, 2, 2);
  const auto t2 = build_table(alphas, ks, 1000, default_schema(), 17, 2, 1);

  REQUIRE(t1.grid.size() == 12);
  // alpha-major, k-minor ordering.
  CHECK(t1.grid[0].params.alpha == doctest::Approx(alphas[0]));
  CHECK(t1.grid[0].params.k == doctest::Approx(ks[0]));
  CHECK(t1.grid[1].params.k == doctest::Approx(ks[1]));
  CHECK(t1.grid[3].params.alpha == doctest::Approx(alphas[1]));

  // Slot-written parallel build: thread count cannot change a single bit.
  for (std::size_t i = 0; i < t1.grid.size(); ++i)
    CHECK(t1.grid[i].mean_features == t2.grid[i].mean_features);
  CHECK(t1.standardize_mean == t2.standardize_mean);
  CHECK_NOTHROW(t1.validate());
}

TEST_CASE("self-consistency: a stored mean vector returns its own entry") {
  const auto table =
      build_table(log_alpha_grid(5, -0.3, 1.3), linspace(4, 0.0, 1.25), 1000,
                  default_schema(), 23, 2, 2);
  for (const auto& entry : table.grid) {
    FeatureVector f;
    f.values = entry.mean_features;
    f.schema_id = table.schema_id;
    const HkParams est = table_estimate(table, f);
    CHECK(est.alpha == entry.params.alpha);
    CHECK(est.k == entry.params.k);
  }
}

TEST_CASE("ties break toward smaller alpha, then smaller k") {
  // Hand-built table with two entries at the same feature point.
  FeatureTable t;
  t.schema_id = "pair";
  t.feature_names = {"f0", "f1"};
  t.standardize_mean = {0.0, 0.0};
  t.standardize_stddev = {1.0, 1.0};
  t.n_per_point = 1;
  t.reps = 1;
  t.grid.push_back({{5.0, 0.5, 1.0}, {1.0, 2.0}});
  t.grid.push_back({{2.0, 0.8, 1.0}, {1.0, 2.0}});
  t.grid.push_back({{2.0, 0.3, 1.0}, {1.0, 2.0}});

  FeatureVector f;
  f.values = {1.0, 2.0};
  f.schema_id = "pair";
  const HkParams est = table_estimate(t, f);
  CHECK(est.alpha == 2.0);
  CHECK(est.k == 0.3);
}

TEST_CASE("schema and length guards") {
  const auto table = build_table(log_alpha_grid(3, -0.3, 1.3), linspace(2, 0.0, 1.25), 1000,
                                 default_schema(), 29, 1, 2);
  FeatureVector f;
  f.values = std::vector<double>(11, 0.0);
  f.schema_id = "other-schema";
  CHECK_THROWS_AS((void)table_estimate(table, f), Error);
  f.schema_id = table.schema_id;
  f.values.pop_back();
  CHECK_THROWS_AS((void)table_estimate(table, f), Error);
}

TEST_CASE("recovery: fresh sets map to nearby grid nodes") {
  // 5x4 grid; features from 4096-sample sets drawn at exact node parameters
  // should mostly select the true node, and stay within one node otherwise.
  const auto alphas = log_alpha_grid(5, -0.3, 1.3);
  const auto ks = linspace(4, 0.0, 1.25);
  const auto table = build_table(alphas, ks, 4096, default_schema(), 31, 4, 4);

  int exact = 0, total = 0;
  for (std::size_t ia = 0; ia < alphas.size(); ++ia) {
    for (std::size_t ik = 0; ik < ks.size(); ++ik) {
      const auto set = sample_hk({alphas[ia], ks[ik], 1.0}, 4096, 1000 + total);
      const auto f = extract_features(set, default_schema());
      const HkParams est = table_estimate(table, f);
      if (est.alpha == alphas[ia] && est.k == ks[ik]) ++exact;
      ++total;
    }
  }
  CHECK(total == 20);
  CHECK(exact > total / 2);
}

TEST_CASE("estimate error shrinks with sample count") {
  const auto alphas = log_alpha_grid(6, -0.3, 1.3);
  const auto ks = linspace(4, 0.0, 1.25);
  const auto table = build_table(alphas, ks, 4096, default_schema(), 37, 4, 4);

  auto sq_err = [&](std::size_t n) {
    double se = 0.0;
    int idx = 0;
    for (double alpha : {0.8, 3.5, 12.0}) {
      for (double k : {0.2, 0.9}) {
        const auto set = sample_hk({alpha, k, 1.0}, n, 500 + idx++);
        const HkParams est = table_estimate(table, extract_features(set, default_schema()));
        const double da = std::log10(est.alpha) - std::log10(alpha);
        se += da * da + (est.k - k) * (est.k - k);
      }
    }
    return se;
  };
  // Feature noise shrinks with n, so a 16x larger sample cannot do worse.
  CHECK(sq_err(16384) <= sq_err(1024));
}

TEST_CASE("round-trip through CSV + sidecar") {
  TempDir tmp;
  const auto table = build_table(log_alpha_grid(4, -0.3, 1.3), linspace(3, 0.0, 1.25), 1000,
                                 default_schema(), 41, 2, 2);
  const std::string path = tmp.file("grid.hkqtable");
  write_table(table, path);
  const FeatureTable back = read_table(path);

  CHECK(back.schema_id == table.schema_id);
  CHECK(back.feature_names == table.feature_names);
  CHECK(back.n_per_point == table.n_per_point);
  CHECK(back.reps == table.reps);
  CHECK(back.seed == table.seed);
  CHECK(back.standardize_mean == table.standardize_mean);
  CHECK(back.standardize_stddev == table.standardize_stddev);
  REQUIRE(back.grid.size() == table.grid.size());
  for (std::size_t i = 0; i < table.grid.size(); ++i) {
    CHECK(back.grid[i].params.alpha == table.grid[i].params.alpha);
    CHECK(back.grid[i].params.k == table.grid[i].params.k);
    CHECK(back.grid[i].mean_features == table.grid[i].mean_features);
  }

  // Lookups agree after the round-trip.
  const auto set = sample_hk({2.0, 0.5, 1.0}, 2048, 9);
  const auto f = extract_features(set, default_schema());
  const auto e1 = table_estimate(table, f);
  const auto e2 = table_estimate(back, f);
  CHECK(e1.alpha == e2.alpha);
  CHECK(e1.k == e2.k);
}

TEST_CASE("reader rejects mismatched or damaged files") {
  TempDir tmp;
  const auto table = build_table(log_alpha_grid(3, -0.3, 1.3), linspace(2, 0.0, 1.25), 1000,
                                 default_schema(), 43, 1, 2);
  const std::string path = tmp.file("grid.hkqtable");
  write_table(table, path);

  SUBCASE("missing sidecar") {
    std::filesystem::remove(path + ".json");
    CHECK_THROWS_AS((void)read_table(path), Error);
  }
  SUBCASE("corrupt CSV row") {
    std::ofstream out(path, std::ios::app);
    out << "not,a,number\n";
    out.close();
    try {
      (void)read_table(path);
      FAIL("expected format error");
    } catch (const Error& e) {
      CHECK(e.code() == errc::format);
    }
  }
  SUBCASE("wrong version in sidecar") {
    std::ifstream in(path + ".json");
    std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    const auto pos = all.find("hkq-table-v1");
    REQUIRE(pos != std::string::npos);
    all.replace(pos, 12, "hkq-table-v7");
    std::ofstream(path + ".json") << all;
    CHECK_THROWS_AS((void)read_table(path), Error);
  }
}

TEST_CASE("build rejects undersized requests") {
  CHECK_THROWS_AS(build_table({1.0}, {0.0}, 100, default_schema(), 1, 1, 1), Error);
  CHECK_THROWS_AS(build_table({}, {0.0}, 1000, default_schema(), 1, 1, 1), Error);
  CHECK_THROWS_AS(build_table({1.0}, {0.0}, 1000, default_schema(), 1, 0, 1), Error);
}
