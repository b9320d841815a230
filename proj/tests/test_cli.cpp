#include <doctest.h>

#include <sstream>

#include <json.hpp>

#include "cdrsig/pipeline.hpp"
#include "support.hpp"

using namespace cdrsig;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "cdrsig");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Run r;
  r.code = pipeline::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

// Small synthetic city shared by the test cases.
const fs::path& city() {
  static test::TempDir dir("cli_city");
  static bool made = false;
  if (!made) {
    const auto r = cli({"synth", "--out-dir", dir.path().string(), "--synth-districts", "16", "--synth-towers", "40",
                        "--synth-users", "2000", "--seed", "3"});
    REQUIRE(r.code == 0);
    made = true;
  }
  return dir.path();
}

std::vector<std::string> fast(const fs::path& out) {
  return {"--config", (city() / "pipeline.ini").string(), "--out-dir", out.string(), "--min-users", "10",
          "--cv-repeats", "2", "--gp-restarts", "2"};
}

std::vector<std::string> with(std::vector<std::string> head, const std::vector<std::string>& tail) {
  head.insert(head.end(), tail.begin(), tail.end());
  return head;
}

const std::vector<std::string> kArtifacts = {
    "indicators.csv", "ingest_report.json", "quarantine.csv", "geo_districts.csv", "voronoi.geojson",
    "weights.csv",    "voronoi_weights.csv", "districts.csv", "excluded_districts.csv", "correlations.csv",
    "ecdf.csv",       "scaling.csv",        "som.json",      "ols.json",         "ols.txt",
    "cv_report.json", "predictions.csv",    "manifest_indicators.json", "manifest_geo.json",
    "manifest_aggregate.json", "manifest_som.json", "manifest_regress.json", "manifest_predict.json"};

}  // namespace

TEST_CASE("help, version and usage errors") {
  CHECK(cli({"--help"}).code == 0);
  const auto v = cli({"--version"});
  CHECK(v.code == 0);
  CHECK(v.out.find(std::string(pipeline::kVersion)) != std::string::npos);
  CHECK(cli({}).code == 2);
  CHECK(cli({"bogus"}).code == 2);
  CHECK(cli({"run-all", "--no-such-flag"}).code == 2);
  CHECK(cli({"synth", "--synth-effect", "nonsense=1", "--out-dir", "/tmp/unused"}).code == 2);
  CHECK(cli({"synth", "--seed", "abc"}).code == 2);
}

TEST_CASE("run-all writes every artifact") {
  test::TempDir out("cli_out");
  const auto r = cli(with({"run-all"}, fast(out.path())));
  INFO(r.err);
  REQUIRE(r.code == 0);
  for (const auto& a : kArtifacts) CHECK_MESSAGE(fs::exists(out / a), a);
  const auto manifest = nlohmann::json::parse(test::read_file(out / "manifest_regress.json"));
  CHECK(manifest["stage"] == "regress");
  CHECK(manifest["seed"] == 3);
  CHECK(manifest["outputs"].contains("ols.json"));
  CHECK(manifest["outputs"]["ols.json"] == pipeline::sha256_file(out / "ols.json"));
}

TEST_CASE("missing labels is a validation error naming the path") {
  test::TempDir out("cli_labels");
  REQUIRE(cli(with({"run-all"}, fast(out.path()))).code == 0);
  const auto missing = (out / "nowhere" / "labels.csv").string();
  const auto r = cli(with(with({"regress"}, fast(out.path())), {"--labels", missing}));
  CHECK(r.code == 2);
  CHECK(r.err.find(missing) != std::string::npos);
}

TEST_CASE("missing CDR file is a validation error") {
  test::TempDir out("cli_cdr");
  const auto r = cli(with(with({"indicators"}, fast(out.path())), {"--cdr", (out / "absent.csv").string()}));
  CHECK(r.code == 2);
  CHECK(r.err.find("absent.csv") != std::string::npos);
}

TEST_CASE("flags override config file values") {
  test::TempDir out("cli_override");
  test::write_file(out / "extra.ini", test::read_file(city() / "pipeline.ini") + "min-records = 7\n");
  REQUIRE(cli({"indicators", "--config", (out / "extra.ini").string(), "--out-dir", (out / "a").string()}).code == 0);
  REQUIRE(cli({"indicators", "--config", (out / "extra.ini").string(), "--out-dir", (out / "b").string(), "--seed",
               "9", "--min-records", "5"})
              .code == 0);
  const auto a = nlohmann::json::parse(test::read_file(out / "a" / "manifest_indicators.json"));
  const auto b = nlohmann::json::parse(test::read_file(out / "b" / "manifest_indicators.json"));
  CHECK(a["seed"] == 3);
  CHECK(b["seed"] == 9);
  CHECK(a["config_hash"] != b["config_hash"]);
  // Only min-records and seed differ; min-records 5 is the default.
  const auto c = nlohmann::json::parse(
      (cli({"indicators", "--config", (city() / "pipeline.ini").string(), "--out-dir", (out / "c").string(), "--seed", "9"}),
       test::read_file(out / "c" / "manifest_indicators.json")));
  CHECK(b["config_hash"] == c["config_hash"]);
}

TEST_CASE("invalid configuration values exit 2") {
  test::TempDir out("cli_bad");
  CHECK(cli(with(with({"run-all"}, fast(out.path())), {"--cv-folds", "1"})).code == 2);
  CHECK(cli(with(with({"run-all"}, fast(out.path())), {"--timezone", "Mars/Olympus"})).code == 2);
  CHECK(cli(with(with({"run-all"}, fast(out.path())), {"--night-start", "30"})).code == 2);
}

TEST_CASE("runs are deterministic across thread counts") {
  test::TempDir a("cli_det_a"), b("cli_det_b");
  REQUIRE(cli(with(with({"run-all"}, fast(a.path())), {"--threads", "1"})).code == 0);
  REQUIRE(cli(with(with({"run-all"}, fast(b.path())), {"--threads", "3"})).code == 0);
  for (const auto& f : kArtifacts) {
    if (f.rfind("manifest_", 0) == 0) continue;  // manifests record input paths
    CHECK_MESSAGE(test::read_file(a / f) == test::read_file(b / f), f);
  }
  for (const char* m : {"manifest_indicators.json", "manifest_som.json", "manifest_predict.json"}) {
    auto ja = nlohmann::json::parse(test::read_file(a / m));
    auto jb = nlohmann::json::parse(test::read_file(b / m));
    CHECK(ja["outputs"] == jb["outputs"]);
    CHECK(ja["config_hash"] == jb["config_hash"]);
  }
}

TEST_CASE("individual stages compose to run-all") {
  test::TempDir all("cli_all"), staged("cli_staged");
  REQUIRE(cli(with({"run-all"}, fast(all.path()))).code == 0);
  for (const char* stage : {"indicators", "geo", "aggregate", "som", "regress", "predict"}) {
    const auto r = cli(with({stage}, fast(staged.path())));
    INFO(stage << ": " << r.err);
    REQUIRE(r.code == 0);
  }
  for (const auto& f : kArtifacts) CHECK_MESSAGE(test::read_file(all / f) == test::read_file(staged / f), f);
}

TEST_CASE("a stage without its upstream artifacts fails cleanly") {
  test::TempDir out("cli_order");
  const auto r = cli(with({"som"}, fast(out.path())));
  CHECK(r.code == 2);
  CHECK(r.err.find("districts.csv") != std::string::npos);
}

TEST_CASE("validate reports quarantine counts") {
  test::TempDir out("cli_validate");
  std::string cdr = test::read_file(city() / "cdr.csv");
  cdr += "u_bad,call,t_missing,10,2026-03-02T10:00:00+03:00,x,out\n";
  test::write_file(out / "cdr.csv", cdr);
  const auto r = cli(with(with({"validate"}, fast(out.path())), {"--cdr", (out / "cdr.csv").string()}));
  REQUIRE(r.code == 0);
  CHECK(r.out.find("quarantined 1") != std::string::npos);
  CHECK(test::read_file(out / "quarantine.csv").find("UnknownTower") != std::string::npos);
  const auto strict = cli(with(with({"indicators", "--strict"}, fast(out.path())), {"--cdr", (out / "cdr.csv").string()}));
  CHECK(strict.code == 2);
}

TEST_CASE("planted effects flag") {
  test::TempDir out("cli_effects");
  REQUIRE(cli({"synth", "--out-dir", out.path().string(), "--synth-districts", "4", "--synth-towers", "8",
               "--synth-users", "100", "--synth-effect", "none", "--synth-effect", "pct_night_calls=1.5"})
              .code == 0);
  const auto truth = nlohmann::json::parse(test::read_file(out / "ground_truth.json"));
  const auto& effects = truth["config"]["effects"];
  CHECK(effects["pct_night_calls"] == 1.5);
  CHECK(effects["social_entropy"] == 0.0);
}
