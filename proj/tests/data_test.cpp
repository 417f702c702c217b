#include <pairbounds/data.hpp>

#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <sstream>

namespace pb = pairbounds;

namespace {

std::vector<pb::HouseholdRecord> parse(const std::string& text, pb::CsvSchema schema = {}) {
  std::istringstream in(text);
  return pb::ingest(in, schema);
}

std::vector<pb::HouseholdRecord> random_records(int n, unsigned seed) {
  std::mt19937 rng(seed);
  std::vector<pb::HouseholdRecord> out;
  for (int i = 0; i < n; ++i) {
    pb::HouseholdRecord r;
    r.household_id = "h" + std::to_string(i);
    r.y1 = rng() & 1, r.d1 = rng() & 1, r.z1 = rng() & 1;
    r.y2 = rng() & 1, r.d2 = rng() & 1, r.z2 = rng() & 1;
    out.push_back(r);
  }
  return out;
}

}  // namespace

TEST(Ingest, WideFile) {
  auto recs = parse("household_id,y1,d1,z1,y2,d2,z2\nA,1,0,1,0,0,0\nB,0,0,0,1,1,1\r\nC,1,1,1,1,1,1\n");
  ASSERT_EQ(recs.size(), 3u);
  EXPECT_EQ(recs[0].household_id, "A");
  EXPECT_EQ(recs[0].y1, 1);
  EXPECT_EQ(recs[1].z2, 1);
}

TEST(Ingest, ColumnOrderFollowsHeader) {
  auto recs = parse("z2,d2,y2,z1,d1,y1,household_id\n1,0,1,0,1,0,A\n");
  ASSERT_EQ(recs.size(), 1u);
  EXPECT_EQ(recs[0].z2, 1);
  EXPECT_EQ(recs[0].d1, 1);
  EXPECT_EQ(recs[0].y2, 1);
}

TEST(Ingest, NonBinaryValueReportsLine) {
  try {
    parse("household_id,y1,d1,z1,y2,d2,z2\nA,1,0,1,0,0,0\nB,2,0,0,1,1,1\n");
    FAIL() << "expected ParseError";
  } catch (const pb::ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
    EXPECT_NE(std::string(e.what()).find("y1"), std::string::npos);
  }
}

TEST(Ingest, DuplicateHouseholdInWideMode) {
  EXPECT_THROW(parse("household_id,y1,d1,z1,y2,d2,z2\nA,1,0,1,0,0,0\nA,0,0,0,1,1,1\n"), pb::DuplicateHousehold);
}

TEST(Ingest, MissingColumnAndRaggedRows) {
  EXPECT_THROW(parse("household_id,y1,d1,z1,y2,d2\nA,1,0,1,0,0\n"), pb::ParseError);
  EXPECT_THROW(parse("household_id,y1,d1,z1,y2,d2,z2\nA,1,0,1,0,0\n"), pb::ParseError);
  EXPECT_THROW(parse(""), pb::ParseError);
}

TEST(Ingest, LongFormatMatchesWide) {
  auto recs = random_records(200, 4);
  std::ostringstream wide, lng;
  pb::write_csv(recs, wide, pb::CsvLayout::wide);
  pb::write_csv(recs, lng, pb::CsvLayout::long_format);
  pb::CsvSchema long_schema;
  long_schema.layout = pb::CsvLayout::long_format;
  EXPECT_EQ(parse(wide.str()), recs);
  EXPECT_EQ(parse(lng.str(), long_schema), recs);
}

TEST(Ingest, LongFormatWithNamedRoles) {
  pb::CsvSchema schema;
  schema.layout = pb::CsvLayout::long_format;
  schema.role_column = "sex";
  schema.member1_role = "man";
  schema.member2_role = "woman";
  auto recs = parse("household_id,sex,y,d,z\nA,woman,1,1,1\nA,man,0,0,1\n", schema);
  ASSERT_EQ(recs.size(), 1u);
  EXPECT_EQ(recs[0].y1, 0);
  EXPECT_EQ(recs[0].y2, 1);
  EXPECT_EQ(recs[0].d2, 1);
  EXPECT_THROW(parse("household_id,sex,y,d,z\nA,woman,1,1,1\n", schema), pb::ParseError);
  EXPECT_THROW(parse("household_id,sex,y,d,z\nA,man,1,1,1\nA,man,0,0,1\n", schema), pb::DuplicateHousehold);
  EXPECT_THROW(parse("household_id,sex,y,d,z\nA,child,1,1,1\n", schema), pb::ParseError);
}

TEST(EmpiricalCells, SingleRecord) {
  pb::HouseholdRecord r{"x", 1, 1, 1, 0, 0, 0};  // (y,y',d,d',z,z') = (1,0,1,0,1,0)
  auto obs = pb::empirical_cells({r});
  EXPECT_EQ(obs.active_blocks, pb::ProfileMask::only(2));
  EXPECT_EQ(obs.cell(2, pb::CellIndex::within_of(1, 0, 1, 0)), 1.0);
  EXPECT_EQ(obs.n_z[2], 1u);
  for (int z : {0, 1, 3})
    for (int w = 0; w < 16; ++w) EXPECT_EQ(obs.cell(z, w), 0.0);
  obs.validate();
}

TEST(EmpiricalCells, EmptyInputThrows) { EXPECT_THROW(pb::empirical_cells({}), pb::AllBlocksEmpty); }

TEST(EmpiricalCells, BalancedBlocks) {
  std::vector<pb::HouseholdRecord> recs;
  for (int i = 0; i < 400; ++i) recs.push_back({std::to_string(i), i % 2, 0, (i / 2) % 2, 0, 1, (i / 4) % 2 ? 1 : 0});
  // z1 = (i/2)%2, z2 = (i/4)%2 cycles through all four profiles equally.
  auto obs = pb::empirical_cells(recs);
  EXPECT_EQ(obs.active_blocks, pb::ProfileMask::all());
  for (int z = 0; z < 4; ++z) EXPECT_EQ(obs.n_z[z], 100u);
  obs.validate(1e-12);
}

TEST(EmpiricalCells, PermutationInvariant) {
  auto recs = random_records(500, 8);
  auto a = pb::empirical_cells(recs);
  std::shuffle(recs.begin(), recs.end(), std::mt19937(3));
  auto b = pb::empirical_cells(recs);
  EXPECT_EQ(a.cells, b.cells);
  EXPECT_EQ(a.n_z, b.n_z);
}

TEST(CellIndex, RowLayout) {
  for (int row = 0; row < 64; ++row) {
    pb::CellIndex c = pb::CellIndex::from_row(row);
    EXPECT_EQ(c.row(), row);
    EXPECT_EQ(pb::CellIndex::within_of(c.y(), c.y_other(), c.d(), c.d_other()), c.within);
  }
}
