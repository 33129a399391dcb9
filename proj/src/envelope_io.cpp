#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "hkq/envelope_io.hpp"
#include "json.hpp"

namespace hkq {
namespace {

std::string fmt17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

[[noreturn]] void fail_line(std::size_t line_no, const std::string& what) {
  std::ostringstream os;
  os << "line " << line_no << ": " << what;
  raise(errc::format, os.str());
}

double parse_number(const std::string& token, std::size_t line_no) {
  char* end = nullptr;
  const double v = std::strtod(token.c_str(), &end);
  if (token.empty() || end != token.c_str() + token.size()) fail_line(line_no, "bad number '" + token + "'");
  return v;
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

}  // namespace

void write_envelope_file(const EnvelopeSet& set, const std::string& path) {
  set.validate();
  nlohmann::ordered_json header;
  header["schema"] = "hkq-env-v1";
  header["n"] = set.samples.size();
  header["source"] = set.source == SetSource::simulated ? "simulated" : "ingested";
  if (set.truth) {
    header["truth"] = {{"alpha", set.truth->alpha}, {"k", set.truth->k},
                       {"sigma", set.truth->sigma}};
  } else {
    header["truth"] = nullptr;
  }
  if (set.seed)
    header["seed"] = *set.seed;
  else
    header["seed"] = nullptr;
  if (set.snr_db)
    header["snr_db"] = *set.snr_db;
  else
    header["snr_db"] = nullptr;

  std::ofstream os(path);
  require(os.good(), errc::configuration, "cannot open envelope file for writing: " + path);
  os << header.dump() << '\n';
  for (double a : set.samples) os << fmt17(a) << '\n';
  os.flush();
  require(os.good(), errc::configuration, "failed writing envelope file: " + path);
}

EnvelopeSet read_envelope_file(const std::string& path) {
  std::ifstream is(path);
  require(is.good(), errc::configuration, "cannot open envelope file: " + path);

  std::string line;
  if (!std::getline(is, line)) fail_line(1, "missing header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    fail_line(1, std::string("bad header JSON: ") + e.what());
  }

  EnvelopeSet set;
  std::size_t n = 0;
  try {
    if (!header.contains("schema")) fail_line(1, "header missing 'schema' key");
    const auto schema = header.at("schema").get<std::string>();
    if (schema != "hkq-env-v1") fail_line(1, "unsupported envelope schema '" + schema + "'");
    n = header.at("n").get<std::size_t>();
    const auto source = header.at("source").get<std::string>();
    if (source == "simulated")
      set.source = SetSource::simulated;
    else if (source == "ingested")
      set.source = SetSource::ingested;
    else
      fail_line(1, "unknown source '" + source + "'");
    if (!header.at("truth").is_null()) {
      const auto& t = header.at("truth");
      set.truth = HkParams{t.at("alpha").get<double>(), t.at("k").get<double>(),
                           t.at("sigma").get<double>()};
    }
    if (!header.at("seed").is_null()) set.seed = header.at("seed").get<std::uint64_t>();
    if (!header.at("snr_db").is_null()) set.snr_db = header.at("snr_db").get<double>();
  } catch (const nlohmann::json::exception& e) {
    fail_line(1, std::string("bad header field: ") + e.what());
  }

  set.samples.reserve(n);
  std::size_t line_no = 1;
  while (set.samples.size() < n) {
    if (!std::getline(is, line)) fail_line(line_no + 1, "unexpected end of file");
    ++line_no;
    const double a = parse_number(line, line_no);
    if (!std::isfinite(a)) fail_line(line_no, "non-finite amplitude");
    if (a < 0.0) fail_line(line_no, "negative amplitude");
    set.samples.push_back(a);
  }
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty()) fail_line(line_no, "expected end of file");
  }
  set.validate();
  return set;
}

void write_features_csv(std::ostream& os, const FeatureSchema& schema,
                        const std::vector<FeatureRow>& rows) {
  schema.validate();
  nlohmann::ordered_json manifest;
  manifest["format"] = "hkq-features-v1";
  manifest["schema"] = nlohmann::ordered_json::parse(schema.to_json());
  os << manifest.dump() << '\n';

  os << "schema_id";
  for (const std::string& name : schema.feature_names()) os << ',' << name;
  os << ",set_id,log10_alpha,k\n";

  for (const FeatureRow& row : rows) {
    require(row.features.schema_id == schema.id, errc::configuration,
            "feature row schema mismatch");
    require(row.features.values.size() == schema.length(), errc::dimension,
            "feature row width mismatch");
    require(row.set_id.find(',') == std::string::npos, errc::configuration,
            "set_id must not contain commas");
    os << schema.id;
    for (double v : row.features.values) os << ',' << fmt17(v);
    os << ',' << row.set_id;
    if (row.truth)
      os << ',' << fmt17((*row.truth)[0]) << ',' << fmt17((*row.truth)[1]);
    else
      os << ",,";
    os << '\n';
  }
}

FeatureCsv read_features_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) fail_line(1, "missing manifest");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    fail_line(1, std::string("bad manifest JSON: ") + e.what());
  }

  FeatureCsv csv;
  try {
    const auto format = manifest.at("format").get<std::string>();
    if (format != "hkq-features-v1") fail_line(1, "unsupported features format '" + format + "'");
    csv.schema = FeatureSchema::from_json(manifest.at("schema").dump());
  } catch (const nlohmann::json::exception& e) {
    fail_line(1, std::string("bad manifest field: ") + e.what());
  }

  if (!std::getline(is, line)) fail_line(2, "missing column header");
  {
    std::ostringstream expected;
    expected << "schema_id";
    for (const std::string& name : csv.schema.feature_names()) expected << ',' << name;
    expected << ",set_id,log10_alpha,k";
    if (line != expected.str()) fail_line(2, "column header does not match schema");
  }

  const std::size_t width = csv.schema.length();
  std::size_t line_no = 2;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::vector<std::string> cells = split_csv(line);
    if (cells.size() != width + 4) {
      std::ostringstream os;
      os << "expected " << width + 4 << " columns, got " << cells.size();
      fail_line(line_no, os.str());
    }
    if (cells[0] != csv.schema.id) fail_line(line_no, "schema_id mismatch '" + cells[0] + "'");
    FeatureRow row;
    row.features.schema_id = csv.schema.id;
    for (std::size_t i = 0; i < width; ++i)
      row.features.values.push_back(parse_number(cells[1 + i], line_no));
    row.set_id = cells[width + 1];
    const std::string& la = cells[width + 2];
    const std::string& k = cells[width + 3];
    if (la.empty() != k.empty()) fail_line(line_no, "partial truth columns");
    if (!la.empty())
      row.truth = std::array<double, 2>{parse_number(la, line_no), parse_number(k, line_no)};
    csv.rows.push_back(std::move(row));
  }
  return csv;
}

FeatureCsv read_features_file(const std::string& path) {
  std::ifstream is(path);
  require(is.good(), errc::configuration, "cannot open features file: " + path);
  return read_features_csv(is);
}

void write_draws_file(std::ostream& os, const DrawsFile& file) {
  require(file.set_ids.size() == file.draws.inputs, errc::dimension,
          "set_id count does not match inputs");
  require(file.draws.means.size() == file.draws.inputs * file.draws.draws * BnnModel::kTargets &&
              file.draws.variances.size() == file.draws.means.size(),
          errc::dimension, "draw tensor size mismatch");
  nlohmann::ordered_json manifest;
  manifest["format"] = "hkq-draws-v1";
  manifest["schema_id"] = file.schema_id;
  manifest["inputs"] = file.draws.inputs;
  manifest["draws"] = file.draws.draws;
  manifest["targets"] = {"log10_alpha", "k"};
  manifest["set_ids"] = file.set_ids;
  os << manifest.dump() << '\n';
  os << "input,draw,mean_log10_alpha,mean_k,var_log10_alpha,var_k\n";
  for (std::size_t i = 0; i < file.draws.inputs; ++i)
    for (std::size_t d = 0; d < file.draws.draws; ++d)
      os << i << ',' << d << ',' << fmt17(file.draws.mean_at(i, d, 0)) << ','
         << fmt17(file.draws.mean_at(i, d, 1)) << ',' << fmt17(file.draws.variance_at(i, d, 0))
         << ',' << fmt17(file.draws.variance_at(i, d, 1)) << '\n';
}

DrawsFile read_draws_file(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) fail_line(1, "missing manifest");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    fail_line(1, std::string("bad manifest JSON: ") + e.what());
  }

  DrawsFile file;
  try {
    const auto format = manifest.at("format").get<std::string>();
    if (format != "hkq-draws-v1") fail_line(1, "unsupported draws format '" + format + "'");
    file.schema_id = manifest.at("schema_id").get<std::string>();
    file.draws.inputs = manifest.at("inputs").get<std::size_t>();
    file.draws.draws = manifest.at("draws").get<std::size_t>();
    file.set_ids = manifest.at("set_ids").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    fail_line(1, std::string("bad manifest field: ") + e.what());
  }
  if (file.set_ids.size() != file.draws.inputs) fail_line(1, "set_ids length mismatch");
  require(file.draws.inputs >= 1 && file.draws.draws >= 1, errc::format, "empty draws tensor");

  if (!std::getline(is, line)) fail_line(2, "missing column header");
  if (line != "input,draw,mean_log10_alpha,mean_k,var_log10_alpha,var_k")
    fail_line(2, "unexpected column header");

  const std::size_t count = file.draws.inputs * file.draws.draws;
  file.draws.means.resize(count * BnnModel::kTargets);
  file.draws.variances.resize(count * BnnModel::kTargets);
  std::vector<bool> seen(count, false);
  std::size_t line_no = 2, rows = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::vector<std::string> cells = split_csv(line);
    if (cells.size() != 6) fail_line(line_no, "expected 6 columns");
    const auto i = static_cast<std::size_t>(parse_number(cells[0], line_no));
    const auto d = static_cast<std::size_t>(parse_number(cells[1], line_no));
    if (i >= file.draws.inputs || d >= file.draws.draws) fail_line(line_no, "index out of range");
    if (seen[i * file.draws.draws + d]) fail_line(line_no, "duplicate (input, draw) row");
    seen[i * file.draws.draws + d] = true;
    file.draws.means[file.draws.index(i, d, 0)] = parse_number(cells[2], line_no);
    file.draws.means[file.draws.index(i, d, 1)] = parse_number(cells[3], line_no);
    file.draws.variances[file.draws.index(i, d, 0)] = parse_number(cells[4], line_no);
    file.draws.variances[file.draws.index(i, d, 1)] = parse_number(cells[5], line_no);
    ++rows;
  }
  if (rows != count) {
    std::ostringstream os;
    os << "expected " << count << " rows, got " << rows;
    raise(errc::format, os.str());
  }
  return file;
}

DrawsFile read_draws_path(const std::string& path) {
  std::ifstream is(path);
  require(is.good(), errc::configuration, "cannot open draws file: " + path);
  return read_draws_file(is);
}

PatchDirectory ingest_patches(const std::string& dir, const std::string& region) {
  namespace fs = std::filesystem;
  require(fs::is_directory(dir), errc::configuration, "not a directory: " + dir);

  PatchDirectory out;
  out.path = dir;
  out.region = region;
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".hkqenv")
      files.push_back(entry.path());
  std::sort(files.begin(), files.end());

  for (const fs::path& file : files) {
    EnvelopeSet set;
    try {
      set = read_envelope_file(file.string());
    } catch (const Error& e) {
      raise(e.code(), file.filename().string() + ": " + e.message());
    }
    out.names.push_back(file.stem().string());
    out.patches.push_back(std::move(set));
  }
  if (out.patches.size() < 2) {
    std::ostringstream os;
    os << "patch directory needs at least 2 patches, found " << out.patches.size();
    raise(errc::insufficient_data, os.str());
  }
  return out;
}

}  // namespace hkq
