#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "dlm/inject.hpp"
#include "dlm/table.hpp"

namespace dlm {

enum class Family { Normal, LogNormal, Uniform, Categorical, Mixture };

struct ColumnSpec {
  Family family = Family::Normal;
  // Normal: mu/sigma. LogNormal: log-mu/log-sigma. Uniform: lo/hi.
  // Mixture: centers mu1/mu2 with shared sigma in p3.
  double p1 = 0.0, p2 = 1.0, p3 = 0.0;
  std::vector<std::string> vocab;    // Categorical only
  std::vector<double> cat_probs;     // Categorical only, sums to 1
};

struct MissingnessProfile {
  Mechanism mechanism = Mechanism::MCAR;
  double rate_lo = 0.0, rate_hi = 0.0;
  int mar_driver = 0;
  double mnar_quantile = 0.5;
};

struct SchemaTemplate {
  std::vector<ColumnSpec> columns;
  Eigen::MatrixXd coupling;  // lower-triangular, unit row norms
  std::vector<std::string> names;  // drawn from the shared pool, size = columns
  MissingnessProfile missingness;
  int target_col = -1;  // designated categorical target, -1 if none
  int rows_min = 24, rows_max = 56;
};

struct SectorInfo {
  int sector_id = 0;
  std::string name;
  SchemaTemplate schema;
};

struct SectorTaxonomy {
  std::vector<SectorInfo> sectors;
  std::uint64_t seed = 0;
};

using Blocklist = std::set<std::string>;

// Deterministic taxonomy whose sector templates differ by construction in
// family mix, value scale and coupling structure. Name pools are shared
// across sectors so names never leak sector identity.
SectorTaxonomy build_taxonomy(int n_sectors, std::uint64_t seed);

// Correlated columns via a Gaussian copula over the template's coupling
// matrix, then per-family marginal transforms and the template's missingness
// profile. Returned table has provenance synthetic(sector_id).
RawTable sample_dataset(const SectorTaxonomy& taxonomy, int sector_id, int n_rows,
                        std::uint64_t seed);

struct CorpusEntry {
  std::string dataset_id;
  int sector_id = 0;
  std::uint64_t seed = 0;
  int n_rows = 0, n_cols = 0;
  std::string path;  // relative to the manifest directory
};

struct CorpusManifest {
  std::vector<CorpusEntry> entries;
};

// Stable content-independent dataset id (taxonomy seed + sector + index).
std::string dataset_id_for(std::uint64_t taxonomy_seed, int sector_id, int index);

// Writes one CSV per dataset plus manifest.csv; blocklisted ids are skipped.
// index_base offsets dataset indices so held-out corpora are disjoint by
// construction.
CorpusManifest build_corpus(const SectorTaxonomy& taxonomy, int datasets_per_sector,
                            const Blocklist& blocklist, std::uint64_t seed,
                            const std::string& out_dir, int index_base = 0);

void save_manifest(const CorpusManifest& manifest, const std::string& path);
CorpusManifest load_manifest(const std::string& path);

void save_taxonomy_json(const SectorTaxonomy& taxonomy, const std::string& path);

void save_blocklist(const Blocklist& blocklist, const std::string& path);
Blocklist load_blocklist(const std::string& path);

}  // namespace dlm
