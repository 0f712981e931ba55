#include <catch2/catch_amalgamated.hpp>

#include "npresid/cli.hpp"
#include "npresid/csv_io.hpp"

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

using namespace npresid;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome invoke(const std::vector<std::string>& args) {
  std::vector<const char*> argv{"npresid"};
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path workdir() {
  static const fs::path dir = [] {
    const fs::path p = fs::temp_directory_path() / "npresid_cli_tests";
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return dir;
}

std::string path(const std::string& name) { return (workdir() / name).string(); }

void write_text(const std::string& file, const std::string& text) {
  std::ofstream(file) << text;
}

std::string read_text(const std::string& file) {
  std::ifstream in(file);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

std::string gaussian_csv(std::size_t n, std::size_t d, std::uint64_t seed) {
  const std::string file = path("gauss_" + std::to_string(n) + "_" + std::to_string(d) + "_" +
                                std::to_string(seed) + ".csv");
  std::ofstream out(file);
  write_dataset_csv(out, gen_gaussian_latent(n, d, 0.0, 0.3, 0.2, {seed, 0}));
  return file;
}

}  // namespace

TEST_CASE("property: CSV round trip is exact") {
  std::mt19937_64 gen(701);
  std::uniform_int_distribution<int> nsize(2, 30), dsize(1, 4), expo(-300, 300);
  std::uniform_real_distribution<double> mant(-1.0, 1.0);
  for (int c = 0; c < 1000; ++c) {
    const auto n = static_cast<std::size_t>(nsize(gen));
    const auto d = static_cast<std::size_t>(dsize(gen));
    auto draw = [&] { return c % 2 ? mant(gen) * std::pow(10.0, expo(gen)) : mant(gen); };
    std::vector<double> x(n), y(n);
    Matrix z(n, d);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = draw();
      y[i] = draw();
      for (std::size_t j = 0; j < d; ++j) z(i, j) = draw();
    }
    const Dataset ds(x, y, z);
    std::stringstream buf;
    write_dataset_csv(buf, ds);
    const Dataset back = read_dataset_csv(buf);
    REQUIRE(back.x() == ds.x());
    REQUIRE(back.y() == ds.y());
    REQUIRE(back.z() == ds.z());
  }
}

TEST_CASE("CSV parsing errors name the line and column") {
  std::istringstream nan_cell("x,y,z1\n1,2,3\n4,nan,6\n");
  try {
    read_dataset_csv(nan_cell);
    FAIL("expected an error");
  } catch (const ValidationError& e) {
    CHECK_THAT(e.what(), Catch::Matchers::ContainsSubstring("line 3"));
    CHECK_THAT(e.what(), Catch::Matchers::ContainsSubstring("'y'"));
  }
  std::istringstream garbage("x,y,z1\n1,2,abc\n1,2,3\n");
  CHECK_THROWS_WITH(read_dataset_csv(garbage), Catch::Matchers::ContainsSubstring("column 'z1'"));
  std::istringstream missing("x,z1\n1,2\n3,4\n");
  CHECK_THROWS_WITH(read_dataset_csv(missing), Catch::Matchers::ContainsSubstring("missing column 'y'"));
  std::istringstream extra("x,y,z1,w\n1,2,3,4\n5,6,7,8\n");
  CHECK_THROWS_WITH(read_dataset_csv(extra), Catch::Matchers::ContainsSubstring("unexpected column 'w'"));
  std::istringstream ragged("x,y,z1\n1,2,3\n4,5\n");
  CHECK_THROWS_WITH(read_dataset_csv(ragged), Catch::Matchers::ContainsSubstring("line 3"));
  std::istringstream reordered("z1,y,x\n3,2,1\n6,5,4\n");
  const Dataset ds = read_dataset_csv(reordered);
  CHECK(ds.x() == std::vector<double>{1, 4});
  CHECK(ds.z()(1, 0) == 6);
}

TEST_CASE("test subcommand: reproducible JSON") {
  const std::string csv = gaussian_csv(60, 1, 7);
  const auto a = invoke({"test", csv, "--seed", "7", "--B", "99", "--bandwidth", "rule-of-thumb"});
  REQUIRE(a.code == 0);
  const auto j = nlohmann::json::parse(a.out);
  CHECK(j["p_value"].get<double>() > 0.0);
  CHECK(j["p_value"].get<double>() <= 1.0);
  CHECK(j["seed"]["master"] == 7);
  CHECK(j["B"] == 99);
  const auto b = invoke({"test", csv, "--seed", "7", "--B", "99", "--bandwidth", "rule-of-thumb",
                         "--threads", "3"});
  CHECK(a.out == b.out);

  const std::string out_file = path("test_out.json");
  REQUIRE(invoke({"test", csv, "--seed", "7", "--B", "99", "--bandwidth", "rule-of-thumb", "--out",
                  out_file})
              .code == 0);
  CHECK(read_text(out_file) == a.out);
}

TEST_CASE("test subcommand: bandwidth method is plumbed through") {
  const std::string csv = gaussian_csv(60, 1, 8);
  const auto rot = invoke({"test", csv, "--seed", "1", "--B", "99", "--bandwidth", "rule-of-thumb"});
  const auto cv = invoke({"test", csv, "--seed", "1", "--B", "99", "--freeze-bandwidths"});
  REQUIRE(rot.code == 0);
  REQUIRE(cv.code == 0);
  const auto jr = nlohmann::json::parse(rot.out), jc = nlohmann::json::parse(cv.out);
  CHECK(jr["bandwidths"] != jc["bandwidths"]);
  CHECK(jr["statistic"] != jc["statistic"]);
  CHECK(jc["config"]["bandwidth"] == "least-squares-cv");
  CHECK(jc["config"]["refit_bandwidths"] == false);
}

TEST_CASE("test subcommand: omitted seed is drawn and recorded") {
  const std::string csv = gaussian_csv(40, 1, 9);
  const auto a = invoke({"test", csv, "--B", "99", "--bandwidth", "rule-of-thumb"});
  REQUIRE(a.code == 0);
  const auto seed = nlohmann::json::parse(a.out)["seed"]["master"].get<std::uint64_t>();
  const auto again = invoke({"test", csv, "--B", "99", "--bandwidth", "rule-of-thumb", "--seed",
                             std::to_string(seed)});
  CHECK(again.out == a.out);
}

TEST_CASE("validation failures exit with code 2") {
  const std::string nan_csv = path("nan.csv");
  write_text(nan_csv, "x,y,z1\n1,2,3\n4,5,nan\n");
  const auto r = invoke({"test", nan_csv, "--seed", "1"});
  CHECK(r.code == 2);
  CHECK_THAT(r.err, Catch::Matchers::ContainsSubstring("line 3"));
  CHECK_THAT(r.err, Catch::Matchers::ContainsSubstring("z1"));

  const std::string no_y = path("no_y.csv");
  write_text(no_y, "x,z1\n1,2\n3,4\n");
  CHECK(invoke({"test", no_y}).code == 2);
  CHECK(invoke({"test", path("does_not_exist.csv")}).code == 2);
  CHECK(invoke({"test", gaussian_csv(40, 1, 10), "--B", "10"}).code == 2);
  CHECK(invoke({"test", gaussian_csv(40, 1, 10), "--bandwidth", "silverman"}).code == 2);
  CHECK(invoke({"frobnicate"}).code == 2);
  CHECK(invoke({}).code == 2);
  CHECK(invoke({"test"}).code == 2);
  CHECK(invoke({"--help"}).code == 0);
}

TEST_CASE("executable exit codes") {
  const std::string exe = NPRESID_CLI_PATH;
  auto status = [&](const std::string& args) {
    const int raw = std::system((exe + " " + args + " > /dev/null 2>&1").c_str());
    return WEXITSTATUS(raw);
  };
  CHECK(status("gen --n 40 --seed 3 --out " + path("exe.csv")) == 0);
  CHECK(status("test " + path("exe.csv") + " --B 99 --seed 3 --bandwidth rule-of-thumb") == 0);
  CHECK(status("test " + path("missing.csv")) == 2);
  CHECK(status("--no-such-flag") == 2);
}

TEST_CASE("gen subcommand") {
  const auto a = invoke({"gen", "--scenario", "modulo-counterexample", "--n", "25", "--seed", "4"});
  REQUIRE(a.code == 0);
  const auto rows = lines(a.out);
  CHECK(rows.size() == 26);
  CHECK(rows[0] == "x,y,z1");
  CHECK(invoke({"gen", "--scenario", "modulo-counterexample", "--n", "25", "--seed", "4"}).out == a.out);
  const auto g = invoke({"gen", "--n", "10", "--param", "d=3", "--param", "sigma_w=0.2", "--seed", "1"});
  REQUIRE(g.code == 0);
  CHECK(lines(g.out)[0] == "x,y,z1,z2,z3");
  const auto unseeded = invoke({"gen", "--n", "10"});
  CHECK_THAT(unseeded.err, Catch::Matchers::ContainsSubstring("seed: "));
  CHECK(invoke({"gen", "--scenario", "nope"}).code == 2);
  CHECK(invoke({"gen", "--param", "sigma_w"}).code == 2);
}

TEST_CASE("residuals subcommand") {
  const std::string csv = gaussian_csv(100, 2, 11);
  const std::string diag = path("diag.json");
  const auto r = invoke({"residuals", csv, "--bandwidth", "rule-of-thumb", "--diag", diag});
  REQUIRE(r.code == 0);
  const auto rows = lines(r.out);
  REQUIRE(rows.size() == 101);
  CHECK(rows[0] == "u1,u2,u3,u4,t1,t2,t3,t4");
  for (std::size_t i = 1; i < rows.size(); ++i) {
    std::istringstream cells(rows[i]);
    std::string cell;
    int count = 0;
    while (std::getline(cells, cell, ',')) {
      const double v = std::stod(cell);
      if (count < 4) {
        REQUIRE(v > 0.0);
        REQUIRE(v < 1.0);
      }
      ++count;
    }
    REQUIRE(count == 8);
  }
  const auto j = nlohmann::json::parse(read_text(diag));
  CHECK(j["residual_ks"].size() == 4);
  CHECK(j["n"] == 100);
}

TEST_CASE("residuals diagnostics on conditionally independent data, n = 500") {
  const std::string csv = gaussian_csv(500, 1, 12);
  const std::string diag = path("diag500.json");
  const auto r = invoke({"residuals", csv, "--diag", diag, "--out", path("res500.csv")});
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(read_text(diag));
  for (double ks : j["residual_ks"]) CHECK(ks <= 0.15);
}

TEST_CASE("experiment config parsing") {
  const auto c = cli::parse_experiment_config(R"({"sigma_w": [0, 0.1], "dims": [1, 3]})");
  CHECK(c.n == 200);
  CHECK(c.B == 199);
  CHECK(c.replications == 100);
  CHECK(c.sigma_w == std::vector<double>{0.0, 0.1});
  const auto p = cli::parse_experiment_config("{}", true);
  CHECK(p.n == 500);
  CHECK(p.B == 1000);
  CHECK(p.replications == 500);
  CHECK(cli::parse_experiment_config(R"({"n": 300})", true).n == 300);
  try {
    cli::parse_experiment_config(R"({"sigma": 1, "reps": 3, "n": 100})");
    FAIL("expected a schema error");
  } catch (const ValidationError& e) {
    CHECK_THAT(e.what(), Catch::Matchers::ContainsSubstring("'sigma'"));
    CHECK_THAT(e.what(), Catch::Matchers::ContainsSubstring("'reps'"));
  }
  CHECK_THROWS_AS(cli::parse_experiment_config(R"({"n": "many"})"), ValidationError);
  CHECK_THROWS_AS(cli::parse_experiment_config("[1, 2]"), ValidationError);
  CHECK_THROWS_AS(cli::parse_experiment_config("{"), ValidationError);
  CHECK_THROWS_AS(cli::parse_experiment_config(R"({"scenario": "other"})"), ValidationError);
  cli::ExperimentConfig bad;
  bad.alpha = 1.5;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad.alpha = 0.05;
  bad.sigma_w.clear();
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("power subcommand: degenerate averaging, determinism, resume") {
  const std::string cfg = path("power.json");
  write_text(cfg, R"({"sigma_w": [0, 0.5], "dims": [1, 2], "n": 40, "replications": 1, "B": 99,
                      "seed": 5})");
  const auto a = invoke({"power", cfg});
  REQUIRE(a.code == 0);
  const auto rows = lines(a.out);
  REQUIRE(rows.size() == 5);
  CHECK(rows[0] == cli::power_table_header());
  std::istringstream table(a.out);
  const auto parsed = cli::read_power_table(table);
  REQUIRE(parsed.size() == 4);
  for (const auto& r : parsed) {
    CHECK((r.rejection_rate == 0.0 || r.rejection_rate == 1.0));
    CHECK(r.seed == 5);
    CHECK(r.n == 40);
  }
  CHECK(parsed[0].d == 1);
  CHECK(parsed[1].sigma_w == 0.5);
  CHECK(invoke({"power", cfg}).out == a.out);
  CHECK(invoke({"power", cfg, "--threads", "2"}).out == a.out);

  // Resume from a table holding the first row and half of the second.
  const std::string out_file = path("power_out.csv");
  write_text(out_file, rows[0] + "\n" + rows[1] + "\n" + rows[2].substr(0, 5));
  REQUIRE(invoke({"power", cfg, "--out", out_file}).code == 0);
  CHECK(read_text(out_file) == a.out);
  // A completed table is left as is.
  REQUIRE(invoke({"power", cfg, "--out", out_file}).code == 0);
  CHECK(read_text(out_file) == a.out);
  // Tables from another seed are refused.
  CHECK(invoke({"power", cfg, "--out", out_file, "--seed", "6"}).code == 2);

  const std::string bad = path("bad_power.json");
  write_text(bad, R"({"sigma_w": [0], "replicates": 3})");
  const auto e = invoke({"power", bad});
  CHECK(e.code == 2);
  CHECK_THAT(e.err, Catch::Matchers::ContainsSubstring("'replicates'"));
}

TEST_CASE("hist subcommand") {
  const std::string cfg = path("hist.json");
  write_text(cfg, R"({"scenario": "modulo-counterexample", "n": 40, "replications": 4, "B": 99,
                      "seed": 3, "permutations": 99})");
  const auto full = invoke({"hist", cfg});
  REQUIRE(full.code == 0);
  const auto rows = lines(full.out);
  REQUIRE(rows.size() == 5);
  CHECK(rows[0] == "replicate,method,n,seed,p_value");
  CHECK(rows[1].rfind("0,full-test,40,3,", 0) == 0);
  const auto dcov = invoke({"hist", cfg, "--method", "partial-dcov"});
  REQUIRE(dcov.code == 0);
  CHECK(lines(dcov.out).size() == 5);
  CHECK(lines(dcov.out)[1].find("partial-dcov") != std::string::npos);
  CHECK(invoke({"hist", cfg, "--method", "partial-dcov"}).out == dcov.out);
  CHECK(invoke({"hist", cfg, "--method", "bogus"}).code == 2);
  const std::string gauss = path("hist_gauss.json");
  write_text(gauss, R"({"scenario": "gaussian-latent", "replications": 2})");
  CHECK(invoke({"hist", gauss}).code == 2);
}
