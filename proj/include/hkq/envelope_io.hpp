#pragma once

#include <array>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "hkq/bnn.hpp"
#include "hkq/features.hpp"
#include "hkq/hk_model.hpp"

namespace hkq {

// hkq-env-v1: one JSON header line, then one amplitude per line with 17
// significant digits (lossless round-trip).
void write_envelope_file(const EnvelopeSet& set, const std::string& path);
EnvelopeSet read_envelope_file(const std::string& path);

struct FeatureRow {
  std::string set_id;
  FeatureVector features;
  std::optional<std::array<double, 2>> truth;  // (log10_alpha, k) when known
};

// hkq-features-v1: JSON manifest line (embeds the schema), CSV header, then
// one row per set: schema_id, feature values in schema order, set_id, truth.
void write_features_csv(std::ostream& os, const FeatureSchema& schema,
                        const std::vector<FeatureRow>& rows);

struct FeatureCsv {
  FeatureSchema schema;
  std::vector<FeatureRow> rows;
};

FeatureCsv read_features_csv(std::istream& is);
FeatureCsv read_features_file(const std::string& path);

// hkq-draws-v1: JSON manifest line, CSV header, one row per (input, draw)
// with predicted means and variances for both targets.
struct DrawsFile {
  std::string schema_id;
  std::vector<std::string> set_ids;  // one per input
  InferenceDraws draws;
};

void write_draws_file(std::ostream& os, const DrawsFile& file);
DrawsFile read_draws_file(std::istream& is);
DrawsFile read_draws_path(const std::string& path);

struct PatchDirectory {
  std::string path;
  std::string region;
  std::vector<std::string> names;  // file stems, sorted
  std::vector<EnvelopeSet> patches;
};

// Loads every *.hkqenv file under dir; a valid directory holds >= 2 nonempty
// patches (needed downstream for the realization axis).
PatchDirectory ingest_patches(const std::string& dir, const std::string& region);

}  // namespace hkq
