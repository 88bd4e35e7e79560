#include <doctest.h>

#include <filesystem>
#include <sstream>

#include "snftm/cli.hpp"
#include "snftm/io.hpp"

using namespace snftm;
namespace fs = std::filesystem;

namespace {

const std::string kData = SNFTM_SOURCE_DIR "/data/";

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result call(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = snftm::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "snftm_test_cli";
  fs::create_directories(dir);
  return (dir / name).string();
}

}  // namespace

TEST_CASE("help and usage errors") {
  const Result help = call({"--help"});
  CHECK(help.code == 0);
  CHECK(help.out.find("simulate") != std::string::npos);
  CHECK(call({}).code == 2);
  CHECK(call({"simulate", "--dgp", kData + "example_dgp.json", "--n", "10", "--out", scratch("x.csv"), "--bogus"})
            .code == 2);
  CHECK(call({"simulate", "--dgp", kData + "missing.json", "--n", "10", "--out", scratch("x.csv")}).code == 2);
  CHECK(call({"simulate", "--dgp", kData + "example_dgp.json", "--n", "10", "--out", "/nonexistent/dir/x.csv"}).code ==
        2);
  CHECK(call({"gcomp", "--laws", kData + "example_dgp.json", "--regime", kData + "regime_never.json", "--t-grid",
              "1:0:1", "--out", scratch("c.csv")})
            .code == 2);
}

TEST_CASE("simulate is reproducible and thread independent") {
  const std::string a = scratch("a.csv"), b = scratch("b.csv");
  const Result r = call({"simulate", "--dgp", kData + "example_dgp.json", "--n", "800", "--out", a});
  CHECK(r.code == 0);
  CHECK(r.err.find("\"command\"") != std::string::npos);
  CHECK(call({"simulate", "--dgp", kData + "example_dgp.json", "--n", "800", "--out", b, "--threads", "5"}).code == 0);
  CHECK(io::read_text(a) == io::read_text(b));
  CHECK(call({"simulate", "--dgp", kData + "example_dgp.json", "--n", "800", "--out", b, "--seed", "3"}).code == 0);
  CHECK(io::read_text(a) != io::read_text(b));
}

TEST_CASE("verify passes on the shipped world") {
  const Result r = call({"verify", "--dgp", kData + "example_dgp.json", "--suite", "all", "--out", scratch("v.json")});
  CHECK(r.code == 0);
  CHECK(r.out.find("FAIL") == std::string::npos);
  CHECK(r.out.find("PASS gcomp.marginal") != std::string::npos);
}

TEST_CASE("exact and Monte Carlo G-computation") {
  const std::string exact = scratch("exact.csv"), mc = scratch("mc.csv");
  CHECK(call({"gcomp", "--laws", kData + "example_dgp.json", "--regime", kData + "regime_threshold.json", "--t-grid",
              "0.5:2:0.5", "--out", exact})
            .code == 0);
  CHECK(io::read_text(exact).rfind("t,survival,stderr\n0.5,", 0) == 0);
  CHECK(call({"gcomp", "--laws", kData + "example_dgp.json", "--regime", kData + "regime_threshold.json", "--t-grid",
              "0.5:2:0.5", "--mc", "2000", "--out", mc})
            .code == 0);
}

TEST_CASE("simulate, estimate, then simulate counterfactuals") {
  const std::string cohort = scratch("cohort.csv"), est = scratch("est.json"), world = scratch("world.json");
  REQUIRE(call({"simulate", "--dgp", kData + "example_dgp.json", "--n", "6000", "--out", cohort, "--threads", "4"})
              .code == 0);
  const Result gt = call({"gtest", "--cohort", cohort, "--spec", kData + "gspec.json", "--out", scratch("g.json")});
  CHECK(gt.code == 0);
  CHECK(io::read_json(scratch("g.json"))["test"]["score_p"].get<double>() < 1e-6);

  const Result e = call({"estimate", "--cohort", cohort, "--spec", kData + "gspec.json", "--box", "-0.5:2", "--out",
                         est, "--world-out", world, "--bins", "0.8,2", "--threads", "4"});
  REQUIRE(e.code == 0);
  const auto j = io::read_json(est);
  const double psi = j["psi_hat"][0].get<double>();
  const double se = j["se"][0].get<double>();
  CHECK(std::abs(psi - 0.7) < 4.0 * se);

  std::map<std::string, double> fitted, exact;
  for (const char* r : {"regime_never.json", "regime_always.json", "regime_threshold.json"}) {
    const Result f = call({"cfsim", "--world", world, "--regime", kData + r, "--n", "20000", "--t-grid", "0:3:1",
                           "--out", scratch(std::string("f_") + r + ".csv")});
    REQUIRE(f.code == 0);
    fitted[r] = io::parse_json(f.out)["mean"].get<double>();
    const Result x = call({"cfsim", "--dgp", kData + "example_dgp.json", "--regime", kData + r, "--n", "20000",
                           "--t-grid", "0:3:1", "--out", scratch(std::string("x_") + r + ".csv")});
    REQUIRE(x.code == 0);
    exact[r] = io::parse_json(x.out)["mean"].get<double>();
  }
  CHECK(exact["regime_never.json"] > exact["regime_threshold.json"]);
  CHECK(exact["regime_threshold.json"] > exact["regime_always.json"]);
  CHECK(fitted["regime_never.json"] > fitted["regime_threshold.json"]);
  CHECK(fitted["regime_threshold.json"] > fitted["regime_always.json"]);
  for (const auto& [r, m] : exact) CHECK(std::abs(fitted[r] - m) < 0.1);
}

TEST_CASE("likelihood subcommand") {
  const std::string cohort = scratch("smooth.csv"), fit = scratch("mle.json");
  REQUIRE(call({"simulate", "--dgp", kData + "smooth_dgp.json", "--n", "1500", "--out", cohort}).code == 0);
  const Result r = call({"mle", "--cohort", cohort, "--model", kData + "mle_model.json", "--out", fit});
  CHECK(r.code == 0);
  const auto j = io::read_json(fit);
  CHECK(j["test"]["lr_p"].get<double>() < 1e-6);
  CHECK(j["model"]["psi"].size() == 3);
  CHECK(j["gradient_max"].get<double>() < 1e-6);
}
