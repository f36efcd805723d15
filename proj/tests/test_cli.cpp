#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "fixtures.hpp"
#include "item/cli.hpp"
#include "item/model_io.hpp"
#include "json.hpp"

using namespace item;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    std::string pattern = (fs::temp_directory_path() / "item-cli-XXXXXX").string();
    path = mkdtemp(pattern.data());
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(const std::vector<std::string>& args) {
  std::ostringstream out;
  std::ostringstream err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

void spit(const std::string& path, const std::string& text) { std::ofstream(path, std::ios::binary) << text; }

/// Writes truth.json and a synth spec next to it, then runs synth.
void synthesize(const TempDir& dir, std::int64_t n, std::uint64_t seed) {
  save_model(fixtures::two_curve_truth(), dir / "truth.json");
  spit(dir / "spec.json", R"({"model": "truth.json", "n": )" + std::to_string(n) + R"(, "seed": )" +
                              std::to_string(seed) + R"(,
    "distributions": {"A": {"kind": "uniform", "low": 0, "high": 10},
                      "B": {"kind": "normal", "mean": 0, "sd": 1},
                      "N1": {"kind": "uniform", "low": 0, "high": 1},
                      "N2": {"kind": "normal", "mean": 0, "sd": 1},
                      "N3": {"kind": "uniform", "low": -5, "high": 5}}})");
  const auto r = run({"synth", "--spec", dir / "spec.json", "--out", dir / "data.csv", "--out-schema", dir / "schema.json"});
  REQUIRE(r.code == kExitOk);
}

int count_lines(const std::string& text) { return static_cast<int>(std::count(text.begin(), text.end(), '\n')); }

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("key=value configuration") {
  const auto kv = parse_key_values("# comment\ncriterion = BIC\nmaxCurves=4  # trailing\n\nseed=9\n");
  CHECK(kv.size() == 3);
  const auto c = apply_config(FitConfig{}, kv);
  CHECK(c.criterion == Criterion::BIC);
  CHECK(c.maxCurves == 4);
  CHECK(c.seed == 9);
  CHECK_THROWS_AS(parse_key_values("oops\n"), ParseError);
  CHECK_THROWS_AS(apply_config(FitConfig{}, {{"unknown", "1"}}), Error);
  CHECK_THROWS_AS(apply_config(FitConfig{}, {{"maxCurves", "four"}}), Error);
  const auto round = apply_config(FitConfig{}, config_values(c));
  CHECK(config_values(round) == config_values(c));
}

TEST_CASE("usage errors") {
  CHECK(run({}).code == kExitInput);
  CHECK(run({"--help"}).code == kExitOk);
  CHECK(run({"fit"}).code == kExitInput);
  TempDir dir;
  const auto r = run({"fit", "--data", dir / "missing.csv", "--schema", dir / "missing.json", "--out-model",
                      dir / "m.json", "--out-report", dir / "r.csv"});
  CHECK(r.code == kExitInput);
  CHECK(r.err.find("error") != std::string::npos);
}

TEST_CASE("synth, fit, validate and residuals") {
  TempDir dir;
  synthesize(dir, 6000, 3);
  CHECK(fs::exists(dir / "data.csv.manifest.json"));
  CHECK(count_lines(slurp(dir / "data.csv")) == 6001);

  const auto fitted = run({"fit", "--data", dir / "data.csv", "--schema", dir / "schema.json", "--out-model",
                           dir / "model.json", "--out-report", dir / "report.csv", "--seed", "5"});
  REQUIRE(fitted.code == kExitOk);
  const auto model = load_model(dir / "model.json");
  CHECK(model.curves.size() >= 1);
  const auto report = slurp(dir / "report.csv");
  CHECK(report.rfind("regressor,to_state,type,center,slope,neg_ll,delta_aic,delta_bic\n", 0) == 0);
  CHECK(count_lines(report) == 1 + static_cast<int>(model.curves.size()));

  const auto manifest = nlohmann::json::parse(slurp(dir / "model.json.manifest.json"));
  CHECK(manifest["command"] == "fit");
  CHECK(manifest["rows_processed"] == 6000);
  CHECK(manifest["seed"] == 5);
  CHECK(manifest.contains("wall_clock_seconds"));
  CHECK(manifest["config"]["criterion"] == "AIC");

  CHECK(run({"validate", "--data", dir / "data.csv", "--schema", dir / "schema.json"}).code == kExitOk);
  CHECK(run({"validate", "--data", dir / "data.csv", "--schema", dir / "schema.json", "--model", dir / "model.json"})
            .code == kExitOk);

  const auto none = run({"fit", "--data", dir / "data.csv", "--schema", dir / "schema.json", "--out-model",
                         dir / "none.json", "--out-report", dir / "none.csv", "--max-curves", "0"});
  REQUIRE(none.code == kExitOk);
  CHECK(count_lines(slurp(dir / "none.csv")) == 1);
  CHECK(load_model(dir / "none.json").curves.empty());

  // Residuals of the generating model are pure sampling noise.
  const auto res = run({"report-residuals", "--model", dir / "truth.json", "--data", dir / "data.csv", "--schema",
                        dir / "schema.json", "--regressor", "A", "--buckets", "20", "--out", dir / "res.csv"});
  REQUIRE(res.code == kExitOk);
  std::istringstream lines(slurp(dir / "res.csv"));
  std::string line;
  std::getline(lines, line);
  CHECK(line == "bucket,lower,upper,count,mean_x,to_state,actual,model,std_error");
  int cells = 0;
  int within = 0;
  while (std::getline(lines, line)) {
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string part;
    while (std::getline(ss, part, ',')) f.push_back(part);
    REQUIRE(f.size() == 9);
    ++cells;
    if (std::abs(std::stod(f[6]) - std::stod(f[7])) <= 3.0 * std::stod(f[8])) ++within;
  }
  CHECK(cells == 20 * 3);
  CHECK(within >= 0.95 * cells);

  const auto one = run({"report-residuals", "--model", dir / "truth.json", "--data", dir / "data.csv", "--schema",
                        dir / "schema.json", "--regressor", "B", "--buckets", "1", "--out", dir / "one.csv"});
  CHECK(one.code == kExitOk);
  CHECK(count_lines(slurp(dir / "one.csv")) == 1 + 3);
  CHECK(run({"report-residuals", "--model", dir / "truth.json", "--data", dir / "data.csv", "--schema",
             dir / "schema.json", "--regressor", "Z", "--out", dir / "z.csv"})
            .code == kExitInput);
}

TEST_CASE("constant regressor residuals warn and use one bucket") {
  TempDir dir;
  save_model(fixtures::noise_truth(), dir / "truth.json");
  std::string csv = "A,B,N1,N2,N3,start_status,end_status\n";
  for (int i = 0; i < 50; ++i) csv += std::string("1,0.5,0.2,0.1,0,C,") + (i % 5 ? "C" : "P") + "\n";
  spit(dir / "data.csv", csv);
  const auto truth = fixtures::noise_truth();
  ObservationGrid g;
  g.meta = truth.regressors;
  std::ofstream(dir / "schema.json") << serialize_schema(schema_for(g, truth.space));
  const auto r = run({"report-residuals", "--model", dir / "truth.json", "--data", dir / "data.csv", "--schema",
                      dir / "schema.json", "--regressor", "A", "--out", dir / "res.csv"});
  CHECK_MESSAGE(r.code == kExitOk, r.err);
  CHECK(r.err.find("warning") != std::string::npos);
  CHECK(count_lines(slurp(dir / "res.csv")) == 1 + 3);
}

TEST_CASE("project") {
  TempDir dir;
  const auto truth = fixtures::two_curve_truth();
  ItemModel fromThree = make_empty_model(truth.space, truth.regressors, truth.space.index("3"));
  fromThree.intercepts(fromThree.outcome_position(truth.space.index("C"))) = -1.0;
  fromThree.intercepts(fromThree.outcome_position(truth.space.index("P"))) = -2.0;
  save_model(truth, dir / "c.json");
  save_model(fromThree, dir / "3.json");
  std::string cov = "A,B,N1,N2,N3\n";
  for (int t = 0; t < 30; ++t) cov += std::to_string(t % 10) + "," + std::to_string(0.1 * t - 1.0) + ",0,0,0\n";
  spit(dir / "cov.csv", cov);
  const std::vector<std::string> base = {"project", "--model", dir / "c.json", "--model", dir / "3.json",
                                         "--covariates", dir / "cov.csv", "--horizon", "30"};
  auto with = [&](std::vector<std::string> extra) {
    auto args = base;
    args.insert(args.end(), extra.begin(), extra.end());
    return run(args);
  };
  REQUIRE(with({"--method", "matrix", "--out", dir / "m.csv"}).code == kExitOk);
  REQUIRE(with({"--method", "hybrid", "--paths", "50000", "--seed", "4", "--out", dir / "h.csv"}).code == kExitOk);
  REQUIRE(with({"--method", "hybrid", "--paths", "50000", "--seed", "4", "--out", dir / "h2.csv"}).code == kExitOk);
  CHECK(slurp(dir / "h.csv") == slurp(dir / "h2.csv"));
  CHECK(count_lines(slurp(dir / "m.csv")) == 1 + 31 * 3);

  const auto read = [&](const std::string& path) {
    std::istringstream in(slurp(path));
    std::string line;
    std::getline(in, line);
    std::vector<double> p;
    while (std::getline(in, line)) p.push_back(std::stod(line.substr(line.find(',', line.find(',') + 1) + 1)));
    return p;
  };
  const auto m = read(dir / "m.csv");
  const auto h = read(dir / "h.csv");
  REQUIRE(m.size() == h.size());
  for (std::size_t t = 0; t < m.size(); t += 3) {
    const double tv = 0.5 * (std::abs(m[t] - h[t]) + std::abs(m[t + 1] - h[t + 1]) + std::abs(m[t + 2] - h[t + 2]));
    CHECK(tv < 0.01);
  }

  const auto zero = run({"project", "--model", dir / "c.json", "--model", dir / "3.json", "--covariates",
                         dir / "cov.csv", "--horizon", "0", "--out", dir / "zero.csv"});
  REQUIRE_MESSAGE(zero.code == kExitOk, zero.err);
  CHECK(slurp(dir / "zero.csv") == "time,state,probability,std_error\n0,C,1,0\n0,P,0,0\n0,3,0,0\n");

  CHECK(with({"--method", "matrix", "--time-in-state", "N1", "--out", dir / "bad.csv"}).code == kExitInput);
  CHECK(with({"--method", "simulate", "--time-in-state", "N1", "--paths", "100", "--out", dir / "s.csv"}).code ==
        kExitOk);
  CHECK(with({"--method", "bogus", "--out", dir / "b.csv"}).code == kExitInput);
  CHECK(run({"project", "--model", dir / "c.json", "--out", dir / "x.csv"}).code == kExitInput);
  CHECK(fs::exists(dir / "m.csv.manifest.json"));
}

}  // TEST_SUITE
