#include "dlm/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "dlm/hash.hpp"
#include "dlm/mathutil.hpp"
#include "dlm/parse.hpp"
#include "dlm/rng.hpp"

namespace fs = std::filesystem;

namespace dlm {

namespace {

// Shared pools: names and tokens carry no sector information by design.
const std::vector<std::string> kNamePool = {
    "val_a",  "val_b",  "metric_1", "metric_14", "field_x", "col_7",  "measure",
    "amount", "code",   "flag",     "idx",       "obs",     "q1",     "q2",
    "x1",     "x2",     "x3",       "rate",      "level",   "grp",    "delta",
    "score",  "count_a", "ref"};

const std::vector<std::string> kTokenPool = {"lo",  "mid",   "hi",   "alpha", "beta",
                                             "gamma", "yes", "no",   "l0",    "l1",
                                             "l2",  "typ_a", "typ_b"};

// Unit-row-norm lower-triangular coupling: column j's latent correlates with
// the preceding latents with total strength rho.
Eigen::MatrixXd make_coupling(int n_cols, const std::vector<double>& rho, Rng& rng) {
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(n_cols, n_cols);
  L(0, 0) = 1.0;
  for (int i = 1; i < n_cols; ++i) {
    double ss = 0.0;
    for (int j = 0; j < i; ++j) {
      const double sign = rng.bernoulli(0.5) ? 1.0 : -1.0;
      L(i, j) = sign * rng.uniform(0.3, 1.0);
      ss += L(i, j) * L(i, j);
    }
    const double scale = rho[i] / std::sqrt(ss);
    for (int j = 0; j < i; ++j) L(i, j) *= scale;
    L(i, i) = std::sqrt(std::max(1e-9, 1.0 - rho[i] * rho[i]));
  }
  return L;
}

double mixture_cdf(double x, double m1, double m2, double sigma) {
  return 0.5 * normal_cdf((x - m1) / sigma) + 0.5 * normal_cdf((x - m2) / sigma);
}

double mixture_quantile(double u, double m1, double m2, double sigma) {
  double lo = std::min(m1, m2) - 8.0 * sigma;
  double hi = std::max(m1, m2) + 8.0 * sigma;
  for (int it = 0; it < 80; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mixture_cdf(mid, m1, m2, sigma) < u) lo = mid;
    else hi = mid;
  }
  return 0.5 * (lo + hi);
}

double marginal_transform(const ColumnSpec& spec, double u, double z) {
  switch (spec.family) {
    case Family::Normal:
      return spec.p1 + spec.p2 * z;
    case Family::LogNormal:
      return std::exp(spec.p1 + spec.p2 * z);
    case Family::Uniform:
      return spec.p1 + (spec.p2 - spec.p1) * u;
    case Family::Mixture:
      return mixture_quantile(u, spec.p1, spec.p2, spec.p3);
    case Family::Categorical:
      return 0.0;  // handled by the caller via thresholds
  }
  return 0.0;
}

const char* family_name(Family f) {
  switch (f) {
    case Family::Normal: return "normal";
    case Family::LogNormal: return "lognormal";
    case Family::Uniform: return "uniform";
    case Family::Categorical: return "categorical";
    case Family::Mixture: return "mixture";
  }
  return "?";
}

}  // namespace

SectorTaxonomy build_taxonomy(int n_sectors, std::uint64_t seed) {
  require(n_sectors >= 2 && n_sectors <= 10000, ErrorCode::ConfigError,
          "n_sectors must lie in [2, 10000]");
  SectorTaxonomy tax;
  tax.seed = seed;
  tax.sectors.reserve(n_sectors);

  for (int s = 0; s < n_sectors; ++s) {
    Rng rng(derive_seed(seed, 0x7461786f, static_cast<std::uint64_t>(s)));
    SectorInfo info;
    info.sector_id = s;
    char namebuf[32];
    std::snprintf(namebuf, sizeof(namebuf), "sector_%04d", s);
    info.name = namebuf;

    SchemaTemplate& t = info.schema;
    const int n_cols = rng.range_int(4, 7);

    // Disjoint-by-design strata: each sector owns a value-scale band and a
    // family-mix pattern, so sectors separate in summary space.
    const double scale_exp =
        -2.0 + 5.0 * static_cast<double>(s) / std::max(1, n_sectors - 1) +
        rng.uniform(-0.15, 0.15);
    const double scale = std::pow(10.0, scale_exp);
    const int pattern = s % 4;

    std::vector<double> rho(n_cols, 0.0);
    for (int c = 1; c < n_cols; ++c) rho[c] = rng.uniform(0.55, 0.9);

    // Last column is the categorical target, strongly coupled to the latents
    // of the numeric columns before it.
    const int target = n_cols - 1;
    rho[target] = rng.uniform(0.8, 0.92);

    for (int c = 0; c < n_cols; ++c) {
      ColumnSpec col;
      if (c == target) {
        col.family = Family::Categorical;
        const int vocab_n = rng.range_int(2, 4);
        std::vector<int> token_pick = rng.permutation(static_cast<int>(kTokenPool.size()));
        double remaining = 1.0;
        for (int v = 0; v < vocab_n; ++v) {
          col.vocab.push_back(kTokenPool[token_pick[v]]);
          const double p = (v == vocab_n - 1)
                               ? remaining
                               : remaining * rng.uniform(0.35, 0.55);
          col.cat_probs.push_back(p);
          remaining -= p;
        }
      } else {
        Family fam;
        const int roll = rng.range_int(0, 9);
        switch (pattern) {
          case 0: fam = roll < 7 ? Family::Normal : Family::Uniform; break;
          case 1: fam = roll < 6 ? Family::LogNormal : Family::Normal; break;
          case 2: fam = roll < 6 ? Family::Uniform : Family::Mixture; break;
          default: fam = roll < 5 ? Family::Mixture : Family::LogNormal; break;
        }
        col.family = fam;
        switch (fam) {
          case Family::Normal:
            col.p1 = scale * rng.uniform(-2.0, 2.0);
            col.p2 = scale * rng.uniform(0.4, 1.2);
            break;
          case Family::LogNormal:
            col.p1 = std::log(scale) + rng.uniform(-0.5, 0.5);
            col.p2 = rng.uniform(0.3, 0.8);
            break;
          case Family::Uniform:
            col.p1 = scale * rng.uniform(-2.0, 0.5);
            col.p2 = col.p1 + scale * rng.uniform(0.8, 3.0);
            break;
          case Family::Mixture: {
            const double center = scale * rng.uniform(-1.0, 1.0);
            const double gap = scale * rng.uniform(0.8, 2.0);
            col.p1 = center - gap / 2;
            col.p2 = center + gap / 2;
            col.p3 = scale * rng.uniform(0.2, 0.45);
            break;
          }
          default: break;
        }
      }
      t.columns.push_back(std::move(col));
    }

    t.coupling = make_coupling(n_cols, rho, rng);
    t.target_col = target;
    t.names.resize(n_cols);
    for (int c = 0; c < n_cols; ++c) {
      t.names[c] = kNamePool[rng.below(kNamePool.size())];
    }
    t.missingness.mechanism = static_cast<Mechanism>(s % 3);
    t.missingness.rate_lo = 0.02;
    t.missingness.rate_hi = 0.10;
    t.missingness.mar_driver = 0;
    t.missingness.mnar_quantile = 0.5;
    t.rows_min = 24;
    t.rows_max = 56;

    tax.sectors.push_back(std::move(info));
  }
  return tax;
}

RawTable sample_dataset(const SectorTaxonomy& taxonomy, int sector_id, int n_rows,
                        std::uint64_t seed) {
  require(sector_id >= 0 && sector_id < static_cast<int>(taxonomy.sectors.size()),
          ErrorCode::InvalidSector, "sector_id out of range");
  require(n_rows >= 8 && n_rows <= 4096, ErrorCode::ConfigError,
          "n_rows must lie in [8, 4096]");
  const SchemaTemplate& t = taxonomy.sectors[sector_id].schema;
  const int n_cols = static_cast<int>(t.columns.size());

  Rng rng(derive_seed(taxonomy.seed, 0x64617461, static_cast<std::uint64_t>(sector_id), seed));

  RawTable table;
  table.n_rows = n_rows;
  table.n_cols = n_cols;
  table.column_names = t.names;
  table.provenance = Provenance::synthetic(sector_id);
  table.cells.reserve(static_cast<std::size_t>(n_rows) * n_cols);

  Eigen::VectorXd eps(n_cols);
  for (int r = 0; r < n_rows; ++r) {
    for (int c = 0; c < n_cols; ++c) eps[c] = rng.normal();
    const Eigen::VectorXd z = t.coupling * eps;
    for (int c = 0; c < n_cols; ++c) {
      const double u = std::clamp(normal_cdf(z[c]), 1e-12, 1.0 - 1e-12);
      const ColumnSpec& spec = t.columns[c];
      if (spec.family == Family::Categorical) {
        double cum = 0.0;
        int pick = static_cast<int>(spec.vocab.size()) - 1;
        for (std::size_t v = 0; v < spec.cat_probs.size(); ++v) {
          cum += spec.cat_probs[v];
          if (u < cum) {
            pick = static_cast<int>(v);
            break;
          }
        }
        table.cells.push_back(CellValue::categorical(spec.vocab[pick]));
      } else {
        double value = marginal_transform(spec, u, z[c]);
        if (!std::isfinite(value)) value = 0.0;
        table.cells.push_back(CellValue::numeric(value));
      }
    }
  }

  const double rate = t.missingness.rate_lo +
                      (t.missingness.rate_hi - t.missingness.rate_lo) * rng.uniform01();
  if (rate > 0.0) {
    MissingnessSpec spec;
    spec.mechanism = t.missingness.mechanism;
    spec.rate = rate;
    spec.seed = derive_seed(seed, 0x6d697373, static_cast<std::uint64_t>(sector_id));
    if (spec.mechanism == Mechanism::MAR) spec.mar_driver = t.missingness.mar_driver;
    if (spec.mechanism == Mechanism::MNAR) {
      spec.mnar_threshold_quantile = t.missingness.mnar_quantile;
    }
    table = inject(table, spec).degraded;
  }
  table.validate();
  return table;
}

std::string dataset_id_for(std::uint64_t taxonomy_seed, int sector_id, int index) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "ds_t%08x_s%03d_i%05d",
                static_cast<unsigned>(taxonomy_seed & 0xffffffffu), sector_id, index);
  return buf;
}

CorpusManifest build_corpus(const SectorTaxonomy& taxonomy, int datasets_per_sector,
                            const Blocklist& blocklist, std::uint64_t seed,
                            const std::string& out_dir, int index_base) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  require(!ec, ErrorCode::IoFailure, "cannot create " + out_dir);

  CorpusManifest manifest;
  for (const auto& sector : taxonomy.sectors) {
    for (int i = 0; i < datasets_per_sector; ++i) {
      const int index = index_base + i;
      const std::string id = dataset_id_for(taxonomy.seed, sector.sector_id, index);
      if (blocklist.count(id) > 0) continue;
      const std::uint64_t ds_seed =
          derive_seed(seed, 0x636f7270, static_cast<std::uint64_t>(sector.sector_id),
                      static_cast<std::uint64_t>(index));
      Rng size_rng(derive_seed(ds_seed, 0x726f7773));
      const int n_rows =
          size_rng.range_int(sector.schema.rows_min, sector.schema.rows_max);
      RawTable table = sample_dataset(taxonomy, sector.sector_id, n_rows, ds_seed);
      table.table_id = id;

      const std::string filename = id + ".csv";
      const fs::path path = fs::path(out_dir) / filename;
      std::ofstream f(path, std::ios::binary | std::ios::trunc);
      require(f.good(), ErrorCode::IoFailure, "cannot write " + path.string());
      const std::string csv = serialize_table(table, ',', "");
      f.write(csv.data(), static_cast<std::streamsize>(csv.size()));
      require(f.good(), ErrorCode::IoFailure, "write failed: " + path.string());

      CorpusEntry entry;
      entry.dataset_id = id;
      entry.sector_id = sector.sector_id;
      entry.seed = ds_seed;
      entry.n_rows = table.n_rows;
      entry.n_cols = table.n_cols;
      entry.path = filename;
      manifest.entries.push_back(std::move(entry));
    }
  }
  for (const auto& e : manifest.entries) {
    require(blocklist.count(e.dataset_id) == 0, ErrorCode::Internal,
            "blocklisted id leaked into manifest");
  }
  save_manifest(manifest, (fs::path(out_dir) / "manifest.csv").string());
  return manifest;
}

void save_manifest(const CorpusManifest& manifest, const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  require(f.good(), ErrorCode::IoFailure, "cannot write " + path);
  f << "dataset_id,sector_id,seed,n_rows,n_cols,path\n";
  for (const auto& e : manifest.entries) {
    f << e.dataset_id << ',' << e.sector_id << ',' << e.seed << ',' << e.n_rows << ','
      << e.n_cols << ',' << e.path << '\n';
  }
  require(f.good(), ErrorCode::IoFailure, "write failed: " + path);
}

CorpusManifest load_manifest(const std::string& path) {
  std::ifstream f(path);
  require(f.good(), ErrorCode::IoFailure, "cannot open " + path);
  CorpusManifest manifest;
  std::string line;
  bool header = true;
  while (std::getline(f, line)) {
    if (header) {
      header = false;
      continue;
    }
    if (trim_ascii(line).empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
      if (i == line.size() || line[i] == ',') {
        fields.push_back(line.substr(start, i - start));
        start = i + 1;
      }
    }
    require(fields.size() == 6, ErrorCode::IoFailure, "bad manifest row in " + path);
    CorpusEntry e;
    e.dataset_id = fields[0];
    e.sector_id = std::stoi(fields[1]);
    e.seed = std::stoull(fields[2]);
    e.n_rows = std::stoi(fields[3]);
    e.n_cols = std::stoi(fields[4]);
    e.path = fields[5];
    manifest.entries.push_back(std::move(e));
  }
  return manifest;
}

void save_taxonomy_json(const SectorTaxonomy& taxonomy, const std::string& path) {
  nlohmann::ordered_json root;
  root["seed"] = taxonomy.seed;
  root["n_sectors"] = taxonomy.sectors.size();
  auto& sectors = root["sectors"];
  for (const auto& s : taxonomy.sectors) {
    nlohmann::ordered_json js;
    js["sector_id"] = s.sector_id;
    js["name"] = s.name;
    js["target_col"] = s.schema.target_col;
    js["missingness"] = {
        {"mechanism", mechanism_name(s.schema.missingness.mechanism)},
        {"rate_lo", s.schema.missingness.rate_lo},
        {"rate_hi", s.schema.missingness.rate_hi}};
    auto& cols = js["columns"];
    for (std::size_t c = 0; c < s.schema.columns.size(); ++c) {
      const auto& col = s.schema.columns[c];
      nlohmann::ordered_json jc;
      jc["name"] = s.schema.names[c];
      jc["family"] = family_name(col.family);
      jc["p1"] = col.p1;
      jc["p2"] = col.p2;
      jc["p3"] = col.p3;
      if (!col.vocab.empty()) {
        jc["vocab"] = col.vocab;
        jc["probs"] = col.cat_probs;
      }
      cols.push_back(std::move(jc));
    }
    sectors.push_back(std::move(js));
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  require(f.good(), ErrorCode::IoFailure, "cannot write " + path);
  f << root.dump(2) << '\n';
  require(f.good(), ErrorCode::IoFailure, "write failed: " + path);
}

void save_blocklist(const Blocklist& blocklist, const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  require(f.good(), ErrorCode::IoFailure, "cannot write " + path);
  for (const auto& id : blocklist) f << id << '\n';
  require(f.good(), ErrorCode::IoFailure, "write failed: " + path);
}

Blocklist load_blocklist(const std::string& path) {
  std::ifstream f(path);
  require(f.good(), ErrorCode::IoFailure, "cannot open " + path);
  Blocklist out;
  std::string line;
  while (std::getline(f, line)) {
    const std::string id(trim_ascii(line));
    if (!id.empty()) out.insert(id);
  }
  return out;
}

}  // namespace dlm
