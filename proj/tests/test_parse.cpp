#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dlm/parse.hpp"
#include "dlm/rng.hpp"
#include "support/oracles.hpp"

using namespace dlm;

TEST_CASE("basic parse with header") {
  RawTable t = parse_table("a,b\n1,x\n,2.5");
  CHECK(t.n_rows == 2);
  CHECK(t.n_cols == 2);
  REQUIRE(t.column_names.has_value());
  CHECK((*t.column_names)[0] == "a");
  CHECK((*t.column_names)[1] == "b");
  CHECK(t.at(0, 0).is_numeric());
  CHECK(t.at(0, 0).number() == 1.0);
  CHECK(t.at(0, 1).is_categorical());
  CHECK(t.at(0, 1).token() == "x");
  CHECK(t.at(1, 0).is_missing());
  CHECK(t.at(1, 1).number() == 2.5);
}

TEST_CASE("ragged rows error carries the row index") {
  ParseOptions opt;
  opt.has_header = false;
  try {
    parse_table("1,2\n3", opt);
    FAIL("expected RaggedRows");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::RaggedRows);
    CHECK(e.detail() == 1);
  }
}

TEST_CASE("empty input errors") {
  CHECK_THROWS_AS(parse_table(""), Error);
  ParseOptions opt;
  CHECK_THROWS_AS(parse_table("only_header_row", opt), Error);
}

TEST_CASE("numeric grammar is strict") {
  CHECK(lex_numeric("1e3").has_value());
  CHECK(lex_numeric("1e3").value() == 1000.0);
  CHECK(lex_numeric("-2.5E-1").value() == doctest::Approx(-0.25));
  CHECK(lex_numeric(".5").has_value());
  CHECK(lex_numeric("5.").has_value());
  CHECK_FALSE(lex_numeric("1,000").has_value());
  CHECK_FALSE(lex_numeric("0x10").has_value());
  CHECK_FALSE(lex_numeric("inf").has_value());
  CHECK_FALSE(lex_numeric("nan").has_value());
  CHECK_FALSE(lex_numeric("1e").has_value());
  CHECK_FALSE(lex_numeric("").has_value());
  CHECK_FALSE(lex_numeric("1e999").has_value());  // overflows to inf
}

TEST_CASE("default missing tokens are case-sensitive") {
  ParseOptions opt;
  opt.has_header = false;
  RawTable t = parse_table("NA,nan,1e3,null,?,NaN", opt);
  CHECK(t.at(0, 0).is_missing());
  CHECK(t.at(0, 1).is_categorical());  // "nan" not in the default set
  CHECK(t.at(0, 2).number() == 1000.0);
  CHECK(t.at(0, 3).is_missing());
  CHECK(t.at(0, 4).is_missing());
  CHECK(t.at(0, 5).is_missing());
}

TEST_CASE("twenty-line file agrees with the reference lexer") {
  // Pseudo-random mix of numerics, categoricals and missing tokens.
  Rng rng(20240817);
  const std::vector<std::string> pool = {"NA",  "nan", "1e3",  "x9",    "-2.25", "7",
                                         "",    "?",   "null", "3.5e2", "p_q",   ".5",
                                         "5.",  "+8",  "0x1f", "t o k", "1e999", "9e-3"};
  std::string text;
  for (int line = 0; line < 20; ++line) {
    for (int f = 0; f < 5; ++f) {
      if (f) text.push_back(',');
      text += pool[rng.below(pool.size())];
    }
    text.push_back('\n');
  }
  ParseOptions opt;
  opt.has_header = false;
  const RawTable t = parse_table(text, opt);

  const auto ref_rows = oracle::ref_split(text, ',');
  REQUIRE(static_cast<int>(ref_rows.size()) == t.n_rows);
  for (int r = 0; r < t.n_rows; ++r) {
    for (int c = 0; c < t.n_cols; ++c) {
      const auto ref = oracle::ref_classify(ref_rows[r][c], opt.missing_tokens);
      const auto& cell = t.at(r, c);
      switch (ref.kind) {
        case oracle::RefField::Missing:
          CHECK(cell.is_missing());
          break;
        case oracle::RefField::Numeric:
          REQUIRE(cell.is_numeric());
          CHECK(cell.number() == ref.number);
          break;
        case oracle::RefField::Categorical:
          REQUIRE(cell.is_categorical());
          CHECK(cell.token() == ref.raw);
          break;
      }
    }
  }
}

TEST_CASE("parse is deterministic") {
  const std::string text = "a,b,c\n1,x,NA\n2,y,3\n,z,?";
  const RawTable t1 = parse_table(text);
  const RawTable t2 = parse_table(text);
  REQUIRE(t1.cells.size() == t2.cells.size());
  for (std::size_t i = 0; i < t1.cells.size(); ++i) CHECK(t1.cells[i] == t2.cells[i]);
}

TEST_CASE("categorical fields re-serialize byte-identically") {
  Rng rng(99);
  const std::vector<std::string> pool = {"alpha", "b c", "NA", "3.25", "-1e2", "?",
                                         "tok_9", "", "x", "0.125"};
  for (int trial = 0; trial < 30; ++trial) {
    const int rows = rng.range_int(1, 6), cols = rng.range_int(1, 5);
    std::string text;
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) {
        if (c) text.push_back(';');
        text += pool[rng.below(pool.size())];
      }
      text.push_back('\n');
    }
    ParseOptions opt;
    opt.delimiter = ';';
    opt.has_header = false;
    const RawTable t = parse_table(text, opt);
    // Non-empty missing token keeps single-column missing rows visible.
    const std::string round = serialize_table(t, ';', "NA");
    const auto orig_fields = oracle::ref_split(text, ';');
    const auto new_fields = oracle::ref_split(round, ';');
    REQUIRE(static_cast<int>(new_fields.size()) == t.n_rows);
    for (int r = 0; r < t.n_rows; ++r) {
      for (int c = 0; c < cols; ++c) {
        if (t.at(r, c).is_categorical()) {
          CHECK(new_fields[r][c] == orig_fields[r][c]);
        } else if (t.at(r, c).is_numeric()) {
          // Numeric formatting may differ, values may not.
          CHECK(std::strtod(new_fields[r][c].c_str(), nullptr) ==
                std::strtod(oracle::ref_trim(orig_fields[r][c]).c_str(), nullptr));
        } else {
          CHECK(new_fields[r][c] == "NA");
        }
      }
    }
    // The round-tripped text parses back to the same cell grid.
    const RawTable again = parse_table(round, opt);
    REQUIRE(again.cells.size() == t.cells.size());
    for (std::size_t i = 0; i < t.cells.size(); ++i) CHECK(again.cells[i] == t.cells[i]);
  }
}

TEST_CASE("strip_names modes") {
  RawTable t = parse_table("a,b\n1,x\n2,y");
  const RawTable full = strip_names(t, NameMode::Full);
  REQUIRE(full.column_names.has_value());
  CHECK((*full.column_names)[0] == "a");

  const RawTable none = strip_names(t, NameMode::None);
  CHECK_FALSE(none.column_names.has_value());
  for (std::size_t i = 0; i < t.cells.size(); ++i) CHECK(none.cells[i] == t.cells[i]);

  const RawTable r1 = strip_names(t, NameMode::RandomStrings, 7);
  const RawTable r2 = strip_names(t, NameMode::RandomStrings, 7);
  const RawTable r3 = strip_names(t, NameMode::RandomStrings, 8);
  REQUIRE(r1.column_names.has_value());
  CHECK((*r1.column_names)[0].size() == 8);
  CHECK(*r1.column_names == *r2.column_names);
  CHECK(*r1.column_names != *r3.column_names);
  CHECK((*r1.column_names)[0] != "a");
  for (std::size_t i = 0; i < t.cells.size(); ++i) CHECK(r1.cells[i] == t.cells[i]);
}

TEST_CASE("bundle preserves members and rejects empty") {
  RawTable t1 = parse_table("a,b,c\n1,2,3");
  ParseOptions no_header;
  no_header.has_header = false;
  RawTable t2 = parse_table("1,2,3,4,5,6,7\nx,y,z,w,v,u,t", no_header);
  SourceBundle b = bundle({t1, t2});
  CHECK(b.tables.size() == 2);
  CHECK(b.tables[0].n_cols == 3);
  CHECK(b.tables[1].n_cols == 7);
  CHECK_FALSE(b.tables[1].column_names.has_value());
  CHECK_THROWS_AS(bundle({}), Error);
}

TEST_CASE("bundle property: random shapes never error") {
  Rng rng(4242);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<RawTable> tables;
    const int n = rng.range_int(1, 5);
    for (int i = 0; i < n; ++i) {
      RawTable t;
      t.n_rows = rng.range_int(1, 8);
      t.n_cols = rng.range_int(1, 6);
      for (int j = 0; j < t.n_rows * t.n_cols; ++j) {
        const int kind = rng.range_int(0, 2);
        if (kind == 0) t.cells.push_back(CellValue::missing());
        else if (kind == 1) t.cells.push_back(CellValue::numeric(rng.normal()));
        else t.cells.push_back(CellValue::categorical("t" + std::to_string(rng.below(5))));
      }
      tables.push_back(std::move(t));
    }
    const SourceBundle b = bundle(tables);
    CHECK(b.tables.size() == tables.size());
  }
}

TEST_CASE("table size guard") {
  // 2 columns x 500001 rows crosses the 1e6-cell limit.
  std::string text = "a,b\n";
  text.reserve(5u * 500001 + 4);
  for (int i = 0; i < 500001; ++i) text += "1,2\n";
  CHECK_THROWS_AS(parse_table(text), Error);
  try {
    parse_table(text);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::TableTooLarge);
  }
}
