#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dlm/model.hpp"
#include "dlm/parse.hpp"
#include "dlm/rng.hpp"
#include "dlm/synthgen.hpp"

using namespace dlm;

namespace {

ModelDims tiny_dims(int n_sectors = 5) {
  ModelDims d;
  d.d_model = 32;
  d.n_layers = 2;
  d.n_heads = 2;
  d.d_ff = 64;
  d.n_sectors = n_sectors;
  return d;
}

Model<float> tiny_model(std::uint64_t seed = 11, int n_sectors = 5) {
  EncoderConfig enc;
  return init_model<float>(tiny_dims(n_sectors), enc, seed);
}

RawTable random_table(Rng& rng, int rows, int cols, bool with_names, double missing_p = 0.15) {
  RawTable t;
  t.n_rows = rows;
  t.n_cols = cols;
  if (with_names) {
    std::vector<std::string> names;
    for (int c = 0; c < cols; ++c) names.push_back("c" + std::to_string(c));
    t.column_names = names;
  }
  for (int i = 0; i < rows * cols; ++i) {
    if (rng.bernoulli(missing_p)) t.cells.push_back(CellValue::missing());
    else if (rng.bernoulli(0.75)) t.cells.push_back(CellValue::numeric(rng.normal(0, 2)));
    else t.cells.push_back(CellValue::categorical("t" + std::to_string(rng.below(3))));
  }
  return t;
}

}  // namespace

TEST_CASE("parameter count is reported and under the bound at toy defaults") {
  EncoderConfig enc;
  Model<float> model = init_model<float>(ModelDims{}, enc, 1);
  const auto count = model.params.param_set().count();
  CHECK(count > 0);
  CHECK(count < 5'000'000);
}

TEST_CASE("forward produces all heads in one invocation") {
  Model<float> model = tiny_model();
  Rng rng(3);
  RawTable t = random_table(rng, 10, 4, true, 0.2);
  ModelInput input = make_input(t, model.encoder);

  Episode ep;
  ep.n_classes = 2;
  ep.train_rows = {0, 1, 2, 3};
  ep.train_labels = {0, 1, 0, 1};
  ep.query_rows = {4, 5, 6};

  const auto before = model.forward_invocations;
  const JointOutput out = forward(model, input, ep);
  CHECK(model.forward_invocations == before + 1);

  CHECK(out.sector_dist.size() == 5);
  CHECK(out.sector_dist.sum() == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(out.sector_dist.minCoeff() >= 0.0);
  REQUIRE(out.class_probs.rows() == 3);
  for (int i = 0; i < 3; ++i) {
    CHECK(out.class_probs.row(i).sum() == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(out.class_probs.row(i).minCoeff() >= 0.0);
  }
  // Recon covers exactly the missing cells.
  int n_missing = 0;
  for (const auto& cell : t.cells) n_missing += cell.is_missing();
  CHECK(static_cast<int>(out.recon.size()) == n_missing);
}

TEST_CASE("operability holds on adversarial tables without names") {
  Model<float> model = tiny_model();
  ParseOptions opt;
  opt.has_header = false;
  const std::vector<std::string> adversarial = {
      ",,\n1,2,3\n4,5,6",           // all-missing column via first row? no: col-wise mixed
      "5,x,1\n5,x,2\n5,x,3",        // constant + categorical columns
      "1,tok,3.5",                  // single row
      "1,a\n2,3\n,b\nx,4",          // mixed-type columns
  };
  for (const auto& text : adversarial) {
    const RawTable t = parse_table(text, opt);
    const JointOutput out = forward(model, make_input(t, model.encoder));
    CHECK(out.sector_dist.allFinite());
    CHECK(out.sector_dist.sum() == doctest::Approx(1.0).epsilon(1e-6));
  }
  // A table with a fully missing column.
  RawTable t;
  t.n_rows = 3;
  t.n_cols = 2;
  for (int r = 0; r < 3; ++r) {
    t.cells.push_back(CellValue::numeric(r));
    t.cells.push_back(CellValue::missing());
  }
  const JointOutput out = forward(model, make_input(t, model.encoder));
  CHECK(out.sector_dist.allFinite());
  CHECK(out.recon.size() == 3);
  for (const auto& rp : out.recon) CHECK(std::isfinite(rp.numeric_value));
}

TEST_CASE("fully observed table yields empty reconstruction set") {
  Model<float> model = tiny_model();
  ParseOptions opt;
  opt.has_header = false;
  const RawTable t = parse_table("1,2\n3,4", opt);
  const JointOutput out = forward(model, make_input(t, model.encoder));
  CHECK(out.recon.empty());
}

TEST_CASE("row permutation permutes class probs and fixes sector dist") {
  Model<float> model = tiny_model();
  Rng rng(17);
  RawTable t = random_table(rng, 12, 4, true, 0.1);
  ModelInput input = make_input(t, model.encoder);

  Episode ep;
  ep.n_classes = 2;
  ep.train_rows = {0, 1, 2, 3, 4, 5};
  ep.train_labels = {0, 1, 0, 1, 0, 1};
  ep.query_rows = {6, 7, 8, 9};
  const JointOutput a = forward(model, input, ep);

  Episode ep2 = ep;
  ep2.query_rows = {9, 6, 8, 7};
  const JointOutput b = forward(model, input, ep2);
  CHECK((a.class_probs.row(0) - b.class_probs.row(1)).norm() == doctest::Approx(0.0));
  CHECK((a.class_probs.row(3) - b.class_probs.row(0)).norm() == doctest::Approx(0.0));
  CHECK((a.sector_dist - b.sector_dist).norm() == doctest::Approx(0.0));
}

TEST_CASE("column permutation leaves sector dist unchanged") {
  Model<float> model = tiny_model();
  Rng rng(29);
  RawTable t = random_table(rng, 9, 5, true, 0.1);
  const std::vector<int> perm = {3, 0, 4, 1, 2};
  RawTable p = t;
  for (int c = 0; c < t.n_cols; ++c) {
    (*p.column_names)[c] = (*t.column_names)[perm[c]];
    for (int r = 0; r < t.n_rows; ++r) p.at(r, c) = t.at(r, perm[c]);
  }
  const JointOutput a = forward(model, make_input(t, model.encoder));
  const JointOutput b = forward(model, make_input(p, model.encoder));
  // Mean pooling is permutation-symmetric; float32 accumulation order shifts
  // results by a few ulps at most.
  CHECK((a.sector_dist - b.sector_dist).lpNorm<Eigen::Infinity>() < 1e-5);
}

TEST_CASE("identify_sector returns a full normalized ranking at k = n_sectors") {
  Model<float> model = tiny_model(41, 7);
  Rng rng(53);
  const RawTable t = random_table(rng, 10, 4, true);
  const auto top = identify_sector(t, model, 7);
  REQUIRE(top.size() == 7);
  double sum = 0.0;
  std::set<int> ids;
  for (auto [sector, prob] : top) {
    sum += prob;
    ids.insert(sector);
    CHECK(prob >= 0.0);
  }
  CHECK(ids.size() == 7);
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
  for (std::size_t i = 1; i < top.size(); ++i) CHECK(top[i - 1].second >= top[i].second);
}

TEST_CASE("untrained sector accuracy is consistent with chance") {
  const int n_sectors = 5;
  Model<float> model = tiny_model(97, n_sectors);
  Rng rng(111);
  const int trials = 400;
  int hits = 0;
  for (int i = 0; i < trials; ++i) {
    const RawTable t = random_table(rng, 8, 3, false, 0.1);
    const auto top = identify_sector(t, model, 1);
    const int truth = rng.range_int(0, n_sectors - 1);
    hits += (top[0].first == truth);
  }
  // Binomial 99.9% band around p = 0.2 at n = 400: mean 80, sigma = 8.
  CHECK(hits > 80 - 4 * 8);
  CHECK(hits < 80 + 4 * 8);
}

TEST_CASE("reconstruct_missing fills only missing cells") {
  Model<float> model = tiny_model();
  ParseOptions opt;
  opt.has_header = false;
  const RawTable t = parse_table("1,x\n,y\n3,\n4,x", opt);
  const RawTable filled = reconstruct_missing(t, model);
  // Observed cells byte-identical.
  for (int r = 0; r < t.n_rows; ++r) {
    for (int c = 0; c < t.n_cols; ++c) {
      if (!t.at(r, c).is_missing()) {
        CHECK(filled.at(r, c) == t.at(r, c));
      } else {
        CHECK_FALSE(filled.at(r, c).is_missing());
      }
    }
  }
  // Column 1 is categorical-majority: imputed token comes from its vocab.
  CHECK(filled.at(2, 1).is_categorical());
  const std::string tok = filled.at(2, 1).token();
  CHECK((tok == "x" || tok == "y"));

  // Identity on fully observed tables.
  const RawTable full = parse_table("1,2\n3,4", opt);
  const RawTable same = reconstruct_missing(full, model);
  for (std::size_t i = 0; i < full.cells.size(); ++i) CHECK(same.cells[i] == full.cells[i]);
}

TEST_CASE("cross_correlations self-bundle has perfect self-matches") {
  Model<float> model = tiny_model();
  Rng rng(61);
  const RawTable t = random_table(rng, 16, 4, true, 0.1);
  const auto matches = cross_correlations(bundle({t, t}), model);
  REQUIRE(matches.size() == 16);  // 4 x 4 cross pairs
  // For every column i, the best (table0, i) match is (table1, i) at 1.0.
  for (int c = 0; c < 4; ++c) {
    double best = -2.0;
    int best_j = -1;
    for (const auto& m : matches) {
      if (m.col_a != c) continue;
      if (m.score > best) {
        best = m.score;
        best_j = m.col_b;
      }
    }
    CHECK(best_j == c);
    CHECK(best == doctest::Approx(1.0).epsilon(1e-6));
  }
  for (std::size_t i = 1; i < matches.size(); ++i) {
    CHECK(matches[i - 1].score >= matches[i].score);
  }
}

TEST_CASE("cross_correlations rejects single-table bundles") {
  Model<float> model = tiny_model();
  Rng rng(71);
  const RawTable t = random_table(rng, 8, 3, false);
  CHECK_THROWS_AS(cross_correlations(SourceBundle{{t}}, model), Error);
}

TEST_CASE("cross_correlations ranks statistically-shared columns higher") {
  // Tables from the same sector template share generators; an unrelated
  // sector's columns should score lower for the matched pairs.
  const SectorTaxonomy tax = build_taxonomy(6, 2024);
  Model<float> model = tiny_model();
  int wins = 0;
  const int trials = 10;
  for (int i = 0; i < trials; ++i) {
    const RawTable a = sample_dataset(tax, 0, 64, 100 + i);
    const RawTable b = sample_dataset(tax, 0, 64, 200 + i);
    const RawTable c = sample_dataset(tax, 5, 64, 300 + i);
    const auto ab = cross_correlations(bundle({a, b}), model);
    const auto ac = cross_correlations(bundle({a, c}), model);
    // Compare mean of top-3 scores.
    double sab = 0, sac = 0;
    for (int k = 0; k < 3; ++k) {
      sab += ab[k].score;
      sac += ac[k].score;
    }
    wins += (sab > sac);
  }
  CHECK(wins >= 6);
}

TEST_CASE("episode label validation") {
  Model<float> model = tiny_model();
  Rng rng(81);
  RawTable t = random_table(rng, 8, 3, false, 0.0);
  ModelInput input = make_input(t, model.encoder);
  Episode ep;
  ep.n_classes = 2;
  ep.train_rows = {0, 1};
  ep.train_labels = {0, 5};  // out of range
  ep.query_rows = {2};
  CHECK_THROWS_AS(forward(model, input, ep), Error);
}
