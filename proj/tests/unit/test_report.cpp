#include "json.hpp"

#include <gtest/gtest.h>

#include "invdec/error.hpp"
#include "invdec/report.hpp"
#include "test_util.hpp"

namespace report = invdec::report;

namespace {

report::Table sample_table() {
  report::Table t;
  t.rows.push_back({"r0", "lambda", "0", 96, 1, 0.25, 0.375, 1.5, "backbone"});
  t.rows.push_back({"r1", "lambda", "1", 96, 1, 1.0 / 3.0, 0.1, 2.0, ""});
  t.rows.push_back({"r,2", "heads", "4", 192, 2, 1e-17, 123.456, 0.0, "error: \"bad\" cell"});
  return t;
}

}  // namespace

TEST(Report, ColumnOrderIsFixed) {
  const std::vector<std::string> expected{"run_id", "axis", "value", "horizon", "seed",
                                          "mse",    "mae",  "wall_s", "flag"};
  EXPECT_EQ(report::columns(), expected);
  const std::string csv = report::to_csv(sample_table());
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "run_id,axis,value,horizon,seed,mse,mae,wall_s,flag");
  EXPECT_EQ(report::to_csv(report::Table{}).substr(0, csv.find('\n')),
            csv.substr(0, csv.find('\n')));
}

TEST(Report, CsvRoundTrip) {
  const auto t = sample_table();
  EXPECT_EQ(report::parse_csv(report::to_csv(t)).rows, t.rows);
}

TEST(Report, ParseRejectsWrongHeader) {
  EXPECT_THROW(report::parse_csv("a,b\n1,2\n"), invdec::FormatError);
  const std::string csv = report::to_csv(sample_table());
  EXPECT_THROW(report::parse_csv(csv + "x,y\n"), invdec::FormatError);
}

TEST(Report, JsonCarriesLabeledAnnotations) {
  const auto j = nlohmann::json::parse(
      report::to_json(sample_table(), {{"weather avg MSE, lambda=0", 0.259}}));
  EXPECT_EQ(j.at("rows").size(), 3u);
  EXPECT_EQ(j.at("columns").size(), 9u);
  const auto& a = j.at("annotations").at(0);
  EXPECT_EQ(a.at("label").get<std::string>().rfind("published: ", 0), 0u);
  EXPECT_EQ(a.at("value").get<double>(), 0.259);
}

TEST(Report, EmitWritesFiles) {
  testutil::TempDir dir;
  auto paths = report::emit_report(sample_table(), dir / "ablation");
  ASSERT_EQ(paths.size(), 2u);
  EXPECT_EQ(report::parse_csv(testutil::read_file(dir / "ablation.csv")).rows, sample_table().rows);
  EXPECT_NO_THROW(nlohmann::json::parse(testutil::read_file(dir / "ablation.json")));
  EXPECT_EQ(report::emit_report(sample_table(), dir / "only", report::Format::kCsv).size(), 1u);
}

TEST(Report, EmptyTableRejected) {
  testutil::TempDir dir;
  try {
    report::emit_report({}, dir / "x");
    FAIL();
  } catch (const invdec::UsageError& e) {
    EXPECT_NE(std::string(e.what()).find("nothing to emit"), std::string::npos);
  }
}

TEST(Report, UnwritablePath) {
  testutil::TempDir dir;
  EXPECT_THROW(report::emit_report(sample_table(), dir / "no" / "such" / "dir" / "x"),
               invdec::IoError);
}

TEST(Report, SeriesRoundTrip) {
  testutil::TempDir dir;
  std::vector<double> x{4, 8, 16}, y{0.1, -0.25, 1.0 / 3.0};
  report::write_series(dir / "s.dat", x, y, "C improvement");
  auto [rx, ry] = report::read_series(dir / "s.dat");
  EXPECT_EQ(rx, x);
  EXPECT_EQ(ry, y);
  EXPECT_EQ(testutil::read_file(dir / "s.dat").rfind("#", 0), 0u);
}
