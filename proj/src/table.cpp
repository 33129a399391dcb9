#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "hkq/parallel.hpp"
#include "hkq/rng.hpp"
#include "hkq/stats.hpp"
#include "hkq/table.hpp"
#include "json.hpp"

namespace hkq {
namespace {

std::string fmt17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = line.find(',', start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

double parse_number(const std::string& token, std::size_t line_no) {
  char* end = nullptr;
  const double v = std::strtod(token.c_str(), &end);
  if (end != token.c_str() + token.size() || token.empty() || !std::isfinite(v)) {
    std::ostringstream os;
    os << "line " << line_no << ": bad number '" << token << "'";
    raise(errc::format, os.str());
  }
  return v;
}

}  // namespace

void FeatureTable::validate() const {
  require(!grid.empty(), errc::empty_set, "feature table is empty");
  require(!schema_id.empty(), errc::configuration, "table schema_id must be set");
  const std::size_t width = feature_names.size();
  require(width > 0, errc::configuration, "table has no feature columns");
  require(standardize_mean.size() == width && standardize_stddev.size() == width, errc::dimension,
          "table standardization length mismatch");
  for (std::size_t i = 0; i < width; ++i)
    require(std::isfinite(standardize_stddev[i]) && standardize_stddev[i] > 0.0,
            errc::configuration, "table standardization stddev must be > 0");
  for (const TableEntry& e : grid) {
    e.params.validate();
    require(e.mean_features.size() == width, errc::dimension, "table entry width mismatch");
    for (double v : e.mean_features)
      require(std::isfinite(v), errc::degenerate_input, "non-finite table feature");
  }
}

FeatureTable build_table(const std::vector<double>& alpha_grid, const std::vector<double>& k_grid,
                         std::size_t n_per_point, const FeatureSchema& schema, std::uint64_t seed,
                         std::size_t reps, std::size_t threads) {
  schema.validate();
  require(!alpha_grid.empty() && !k_grid.empty(), errc::configuration, "grids must be nonempty");
  require(n_per_point >= 1000, errc::configuration, "n_per_point must be >= 1000");
  require(reps >= 1, errc::configuration, "reps must be >= 1");

  FeatureTable table;
  table.schema_id = schema.id;
  table.feature_names = schema.feature_names();
  table.n_per_point = n_per_point;
  table.reps = reps;
  table.seed = seed;
  table.grid.resize(alpha_grid.size() * k_grid.size());

  const std::size_t width = schema.length();
  parallel_for(table.grid.size(), threads, [&](std::size_t e) {
    const double alpha = alpha_grid[e / k_grid.size()];
    const double k = k_grid[e % k_grid.size()];
    const HkParams params{alpha, k, 1.0};
    std::vector<double> acc(width, 0.0);
    for (std::size_t rep = 0; rep < reps; ++rep) {
      const EnvelopeSet set =
          sample_hk(params, n_per_point, derive_seed(seed, e * reps + rep, Stream::table));
      const FeatureVector f = extract_features(set, schema);
      for (std::size_t i = 0; i < width; ++i) acc[i] += f.values[i];
    }
    for (double& v : acc) v /= static_cast<double>(reps);
    table.grid[e] = {params, std::move(acc)};
  });

  for (std::size_t i = 0; i < width; ++i) {
    std::vector<double> column(table.grid.size());
    for (std::size_t e = 0; e < table.grid.size(); ++e) column[e] = table.grid[e].mean_features[i];
    const double sd = population_stddev(column);
    if (sd <= 0.0)
      raise(errc::table_build,
            "feature '" + table.feature_names[i] + "' is constant across the table");
    table.standardize_mean.push_back(mean(column));
    table.standardize_stddev.push_back(sd);
  }

  table.validate();
  return table;
}

HkParams table_estimate(const FeatureTable& table, const FeatureVector& features) {
  table.validate();
  require(features.schema_id == table.schema_id, errc::configuration,
          "feature schema '" + features.schema_id + "' does not match table schema '" +
              table.schema_id + "'");
  require(features.values.size() == table.feature_names.size(), errc::dimension,
          "feature width does not match table");

  const std::size_t width = features.values.size();
  std::vector<double> q(width);
  for (std::size_t i = 0; i < width; ++i)
    q[i] = (features.values[i] - table.standardize_mean[i]) / table.standardize_stddev[i];

  const TableEntry* best = nullptr;
  double best_d2 = 0.0;
  for (const TableEntry& e : table.grid) {
    double d2 = 0.0;
    for (std::size_t i = 0; i < width; ++i) {
      const double d =
          (e.mean_features[i] - table.standardize_mean[i]) / table.standardize_stddev[i] - q[i];
      d2 += d * d;
    }
    const bool better =
        best == nullptr || d2 < best_d2 ||
        (d2 == best_d2 && (e.params.alpha < best->params.alpha ||
                           (e.params.alpha == best->params.alpha && e.params.k < best->params.k)));
    if (better) {
      best = &e;
      best_d2 = d2;
    }
  }
  return best->params;
}

void write_table(const FeatureTable& table, const std::string& path) {
  table.validate();
  std::ofstream os(path);
  require(os.good(), errc::configuration, "cannot open table file for writing: " + path);
  os << "alpha,k";
  for (const std::string& name : table.feature_names) os << ',' << name;
  os << '\n';
  for (const TableEntry& e : table.grid) {
    os << fmt17(e.params.alpha) << ',' << fmt17(e.params.k);
    for (double v : e.mean_features) os << ',' << fmt17(v);
    os << '\n';
  }
  os.flush();
  require(os.good(), errc::configuration, "failed writing table file: " + path);

  nlohmann::ordered_json sidecar;
  sidecar["format"] = "hkq-table-v1";
  sidecar["schema_id"] = table.schema_id;
  sidecar["feature_names"] = table.feature_names;
  sidecar["standardization"] = {{"mean", table.standardize_mean},
                                {"stddev", table.standardize_stddev}};
  sidecar["n_per_point"] = table.n_per_point;
  sidecar["reps"] = table.reps;
  sidecar["seed"] = table.seed;
  std::ofstream js(path + ".json");
  require(js.good(), errc::configuration, "cannot open table sidecar for writing");
  js << sidecar.dump(2) << '\n';
  js.flush();
  require(js.good(), errc::configuration, "failed writing table sidecar");
}

FeatureTable read_table(const std::string& path) {
  std::ifstream js(path + ".json");
  require(js.good(), errc::configuration, "cannot open table sidecar: " + path + ".json");
  nlohmann::json sidecar;
  try {
    sidecar = nlohmann::json::parse(js);
  } catch (const nlohmann::json::exception& e) {
    raise(errc::format, std::string("bad table sidecar: ") + e.what());
  }

  FeatureTable table;
  try {
    const auto format = sidecar.at("format").get<std::string>();
    require(format == "hkq-table-v1", errc::format, "unsupported table format '" + format + "'");
    table.schema_id = sidecar.at("schema_id").get<std::string>();
    table.feature_names = sidecar.at("feature_names").get<std::vector<std::string>>();
    table.standardize_mean = sidecar.at("standardization").at("mean").get<std::vector<double>>();
    table.standardize_stddev =
        sidecar.at("standardization").at("stddev").get<std::vector<double>>();
    table.n_per_point = sidecar.at("n_per_point").get<std::size_t>();
    table.reps = sidecar.at("reps").get<std::size_t>();
    table.seed = sidecar.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    raise(errc::format, std::string("bad table sidecar: ") + e.what());
  }

  std::ifstream is(path);
  require(is.good(), errc::configuration, "cannot open table file: " + path);
  std::string line;
  require(static_cast<bool>(std::getline(is, line)), errc::format, "table file is empty");
  {
    std::vector<std::string> header = split_csv(line);
    require(header.size() == table.feature_names.size() + 2 && header[0] == "alpha" &&
                header[1] == "k",
            errc::format, "table header does not match sidecar feature names");
    for (std::size_t i = 0; i < table.feature_names.size(); ++i)
      require(header[i + 2] == table.feature_names[i], errc::format,
              "table header does not match sidecar feature names");
  }
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::vector<std::string> cells = split_csv(line);
    if (cells.size() != table.feature_names.size() + 2) {
      std::ostringstream os;
      os << "line " << line_no << ": expected " << table.feature_names.size() + 2
         << " columns, got " << cells.size();
      raise(errc::format, os.str());
    }
    TableEntry e;
    e.params = {parse_number(cells[0], line_no), parse_number(cells[1], line_no), 1.0};
    for (std::size_t i = 2; i < cells.size(); ++i)
      e.mean_features.push_back(parse_number(cells[i], line_no));
    table.grid.push_back(std::move(e));
  }
  table.validate();
  return table;
}

}  // namespace hkq
