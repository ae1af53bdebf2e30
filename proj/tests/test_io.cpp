#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "helpers.hpp"
#include "segpipe/io_util.hpp"
#include "segpipe/radiomics.hpp"
#include "segpipe/rng.hpp"

using namespace segpipe;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() / ("segpipe-io-" + std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

double reparse(const std::string& s) { return std::strtod(s.c_str(), nullptr); }

}  // namespace

TEST_SUITE_BEGIN("io");

TEST_CASE("format_double round-trips exactly") {
  const double specials[] = {0.0,    -0.0,   1.0,          -1.0,       0.1,
                             1.0 / 3.0,      1e308,        5e-324,     -2.5e-17,
                             123456789.0,    0.69444,      0.4722,     1e22};
  for (double v : specials) {
    const std::string s = format_double(v);
    CHECK(reparse(s) == v);
  }
  Rng rng(11);
  for (int t = 0; t < 2000; ++t) {
    double v = (rng.uniform01() * 2.0 - 1.0) * std::pow(10.0, rng.uniform(-20.0, 20.0));
    const std::string s = format_double(v);
    CHECK(reparse(s) == v);
  }
  CHECK(format_double(42.0) == "42.0");  // floats keep a decimal point
  CHECK(format_double(-0.0)[0] == '-');
  CHECK_THROWS_AS(format_double(std::numeric_limits<double>::quiet_NaN()), std::invalid_argument);
  CHECK_THROWS_AS(format_double(std::numeric_limits<double>::infinity()), std::invalid_argument);
}

TEST_CASE("atomic_write_file writes, overwrites and leaves no temp debris") {
  TempDir tmp;
  const fs::path p = tmp.path / "out.txt";
  atomic_write_file(p, "first\n");
  CHECK(read_text_file(p) == "first\n");
  atomic_write_file(p, "second\n");
  CHECK(read_text_file(p) == "second\n");
  int entries = 0;
  for (const auto& e : fs::directory_iterator(tmp.path)) {
    (void)e;
    ++entries;
  }
  CHECK(entries == 1);
  CHECK_THROWS_AS(read_text_file(tmp.path / "nope.txt"), std::runtime_error);
}

TEST_CASE("json file round trip is stable") {
  TempDir tmp;
  nlohmann::json j = {{"alpha", 1.5}, {"names", {"a", "b"}}, {"nested", {{"k", 3}}}};
  const fs::path p = tmp.path / "x.json";
  write_json_file(p, j);
  CHECK(read_json_file(p) == j);
  const std::string text = read_text_file(p);
  CHECK(text.back() == '\n');
  CHECK(text.find("  \"alpha\"") != std::string::npos);  // indent 2
}

TEST_CASE("feature csv round trip preserves every value bit") {
  FeatureTable table;
  table.names = {"f.one", "f.two", "f.three"};
  Rng rng(5);
  for (int r = 0; r < 8; ++r) {
    FeatureVector fv;
    fv.case_id = "case-" + std::to_string(r);
    fv.names = table.names;
    for (int c = 0; c < 3; ++c)
      fv.values.push_back((rng.uniform01() - 0.5) * std::pow(10.0, rng.uniform(-8.0, 8.0)));
    table.rows.push_back(fv);
  }
  table.validate();
  TempDir tmp;
  const fs::path p = tmp.path / "features.csv";
  write_feature_csv(p, table);
  const FeatureTable back = read_feature_csv(p);
  REQUIRE(back.names == table.names);
  REQUIRE(back.rows.size() == table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    CHECK(back.rows[r].case_id == table.rows[r].case_id);
    CHECK(back.rows[r].values == table.rows[r].values);
  }
}

TEST_CASE("csv reader skips comments and strips carriage returns") {
  TempDir tmp;
  const fs::path p = tmp.path / "in.csv";
  atomic_write_file(p,
                    "# produced elsewhere\r\n"
                    "case_id,a,b\r\n"
                    "c1,1.5,2\r\n"
                    "c2,nan,4\r\n");
  FeatureTable t = read_feature_csv(p);
  REQUIRE(t.names == std::vector<std::string>{"a", "b"});
  REQUIRE(t.rows.size() == 2);
  CHECK(t.rows[0].values[0] == 1.5);
  CHECK(std::isnan(t.rows[1].values[0]));

  impute_nan_with_column_median(t);
  CHECK(t.rows[1].values[0] == 1.5);  // single finite value is its own median
}

TEST_CASE("impute fills column medians, all-NaN columns become zero") {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  FeatureTable t;
  t.names = {"x", "y"};
  auto row = [&](const char* id, double x, double y) {
    FeatureVector fv;
    fv.case_id = id;
    fv.names = t.names;
    fv.values = {x, y};
    t.rows.push_back(fv);
  };
  row("a", 1.0, nan);
  row("b", 3.0, nan);
  row("c", nan, nan);
  row("d", 10.0, nan);
  impute_nan_with_column_median(t);
  CHECK(t.rows[2].values[0] == 3.0);  // median of {1,3,10}
  for (const auto& r : t.rows) CHECK(r.values[1] == 0.0);
}

TEST_CASE("csv reader reports malformed input with location") {
  TempDir tmp;
  SUBCASE("wrong header") {
    const fs::path p = tmp.path / "h.csv";
    atomic_write_file(p, "id,a\nc1,1\n");
    CHECK_THROWS_AS(read_feature_csv(p), std::runtime_error);
  }
  SUBCASE("field count") {
    const fs::path p = tmp.path / "f.csv";
    atomic_write_file(p, "case_id,a,b\nc1,1\n");
    try {
      read_feature_csv(p);
      FAIL("expected throw");
    } catch (const std::runtime_error& e) {
      const std::string msg = e.what();
      CHECK(msg.find("f.csv") != std::string::npos);
      CHECK(msg.find(":2:") != std::string::npos);
      CHECK(msg.find("expected 3") != std::string::npos);
    }
  }
  SUBCASE("bad number") {
    const fs::path p = tmp.path / "n.csv";
    atomic_write_file(p, "case_id,a\nc1,zap\n");
    CHECK_THROWS_AS(read_feature_csv(p), std::runtime_error);
  }
  SUBCASE("empty file yields an empty table") {
    const fs::path p = tmp.path / "e.csv";
    atomic_write_file(p, "");
    const FeatureTable t = read_feature_csv(p);
    CHECK(t.names.empty());
    CHECK(t.rows.empty());
  }
}

TEST_SUITE_END();
