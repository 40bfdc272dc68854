#include <gtest/gtest.h>

#include <sstream>

#include "cpclean/dataset.hpp"
#include "cpclean/encoding.hpp"
#include "cpclean/table.hpp"
#include "fixtures.hpp"

using namespace cpclean;

namespace {

TableSchema mixed_schema() {
  return schema_from_json(nlohmann::json::parse(R"({
    "columns": [{"name": "age", "kind": "numeric"},
                {"name": "city", "kind": "categorical"},
                {"name": "y", "kind": "categorical"}],
    "label": "y", "missing_marker": "NA"})"));
}

RawTable parse(const std::string& csv, const TableSchema& schema) {
  std::istringstream in(csv);
  return read_csv(in, schema);
}

}  // namespace

TEST(Schema, JsonRoundTrip) {
  auto s = mixed_schema();
  EXPECT_EQ(schema_from_json(schema_to_json(s)), s);
  EXPECT_EQ(s.feature_indices(), (std::vector<std::size_t>{0, 1}));
}

TEST(Schema, RejectsUnknownLabelAndKind) {
  EXPECT_THROW(schema_from_json(nlohmann::json::parse(R"({"columns":[{"name":"a"},{"name":"b"}],"label":"c"})")), Error);
  EXPECT_THROW(
      schema_from_json(nlohmann::json::parse(R"({"columns":[{"name":"a","kind":"text"},{"name":"b"}],"label":"b"})")),
      Error);
}

TEST(Csv, ReadsMissingMarkerAndQuotes) {
  auto t = parse("age,city,y\n31,\"New York, NY\",yes\nNA,Paris,no\n", mixed_schema());
  ASSERT_EQ(t.num_rows(), 2u);
  EXPECT_EQ(*t.rows[0][1], "New York, NY");
  EXPECT_FALSE(t.rows[1][0].has_value());
  EXPECT_EQ(t.count_dirty_rows(), 1u);
}

TEST(Csv, WriteReadRoundTrip) {
  auto t = parse("age,city,y\n31,\"a \"\"b\"\"\",yes\nNA,Paris,no\n", mixed_schema());
  std::ostringstream out;
  write_csv(out, t);
  EXPECT_EQ(parse(out.str(), mixed_schema()), t);
}

TEST(Csv, ReportsUnparseableNumberWithRowAndColumn) {
  try {
    parse("age,city,y\n31,a,yes\nabc,b,no\n", mixed_schema());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(std::string(e.what()), "row 2 column 'age': cannot parse 'abc' as a number");
  }
}

TEST(Csv, RejectsMissingLabelAndBadHeader) {
  EXPECT_THROW(parse("age,city,y\n31,a,NA\n", mixed_schema()), Error);
  EXPECT_THROW(parse("age,town,y\n31,a,yes\n", mixed_schema()), Error);
  EXPECT_THROW(parse("age,city,y\n31,a\n", mixed_schema()), Error);
}

TEST(Real, ParsesAndFormatsShortest) {
  EXPECT_EQ(parse_real(" 2.5 "), 2.5);
  EXPECT_EQ(parse_real("+1e3"), 1000.0);
  EXPECT_FALSE(parse_real("1.5x"));
  EXPECT_FALSE(parse_real("inf"));
  EXPECT_EQ(format_real(0.1), "0.1");
  EXPECT_EQ(*parse_real(format_real(1.0 / 3.0)), 1.0 / 3.0);
}

TEST(Dataset, WorldCountAndDirtyRows) {
  auto d = cpclean::testing::worked_dataset();
  d.rows[0].candidates.resize(1);
  EXPECT_EQ(d.world_count(), 4);
  EXPECT_EQ(d.dirty_rows(), (std::vector<std::size_t>{1, 2}));
  EXPECT_EQ(d.world({0, 1, 1}), (std::vector<FeatureVector>{{0.8}, {0.7}, {0.4}}));
}

TEST(Dataset, JsonRoundTripAndInference) {
  auto d = cpclean::testing::worked_dataset();
  EXPECT_EQ(dataset_from_json(to_json(d)), d);
  auto j = to_json(d);
  j.erase("num_labels");
  j.erase("dimension");
  EXPECT_EQ(dataset_from_json(j), d);
}

TEST(Dataset, ValidationNamesTheField) {
  auto j = nlohmann::json::parse(R"({"rows":[{"label":0,"candidates":[[1,2]]},{"label":1,"candidates":[[1]]}]})");
  try {
    dataset_from_json(j);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.field(), "rows[1].candidates[0]");
  }
  auto empty = nlohmann::json::parse(R"({"rows":[{"label":0,"candidates":[]}]})");
  EXPECT_THROW(dataset_from_json(empty), Error);
  auto bad = nlohmann::json::parse(R"({"rows":[{"label":0,"candidates":[["x"]]}]})");
  try {
    dataset_from_json(bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.field(), "rows[0].candidates[0][0]");
  }
}

TEST(Dataset, PointsAcceptSingleOrMany) {
  EXPECT_EQ(points_from_json(nlohmann::json::parse("[1, 2]")).size(), 1u);
  EXPECT_EQ(points_from_json(nlohmann::json::parse("[[1, 2], [3, 4]]")).size(), 2u);
}

TEST(Encoding, CategoriesByFrequencyThenLexical) {
  auto t = parse("age,city,y\n1,b,p\n2,a,p\n3,b,q\n4,c,q\n5,a,p\n6,NA,q\n", mixed_schema());
  EXPECT_EQ(categories_by_frequency(t, 1), (std::vector<std::string>{"a", "b", "c"}));
  auto enc = Encoder::fit(t);
  EXPECT_EQ(enc.feature(1).encode("b"), 1.0);
  EXPECT_EQ(enc.feature(1).encode("zzz"), 3.0);
  EXPECT_EQ(enc.feature(1).decode(3.0), kOtherCategory);
  EXPECT_EQ(enc.label_values(), (std::vector<std::string>{"p", "q"}));
  EXPECT_EQ(enc.row_label(t.rows[2]), 1u);
  EXPECT_THROW(enc.encode_label("r"), Error);
  EXPECT_THROW(enc.encode_row(t.rows[5]), Error);
}
