#include <doctest.h>

#include <filesystem>

#include "snftm/io.hpp"
#include "snftm/oracle.hpp"
#include "support/fixtures.hpp"

using namespace snftm;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "snftm_test_io";
  fs::create_directories(dir);
  return dir / name;
}

const TimeGrid kGrid({0.0, 1.0});
const Alphabets kAlph = Alphabets::uniform(kGrid, 2, 2);

}  // namespace

TEST_CASE("dgp json round trip") {
  DgpConfig cfg = fixtures::example_dgp(fixtures::effect());
  cfg.treatment_law.set({1, -1, {1, 1}, {0}}, {0.25, 0.75});
  const DgpConfig back = io::dgp_from_json(io::parse_json(io::to_json(cfg).dump()));
  CHECK(io::to_json(back) == io::to_json(cfg));
  const EnumeratedWorld a(cfg), b(back);
  for (double t : {0.5, 1.5, 3.0})
    CHECK(a.exact_survival(TreatmentRegime::threshold(1, 1), t) == b.exact_survival(TreatmentRegime::threshold(1, 1), t));

  const DgpConfig shipped = io::dgp_from_json(io::read_json(SNFTM_SOURCE_DIR "/data/example_dgp.json"));
  CHECK(io::to_json(shipped) == io::to_json(fixtures::example_dgp(fixtures::effect())));
}

TEST_CASE("cohort csv round trip is exact") {
  const Cohort cohort = sample_cohort(fixtures::example_dgp(fixtures::effect()), 500, 2);
  const std::string csv = io::cohort_to_csv(cohort);
  CHECK(csv.rfind("id,k,tau_k,L1,A,T_event\n1,0,0,", 0) == 0);
  const Cohort back = io::cohort_from_csv(csv, cohort.grid, cohort.alphabets);
  CHECK(back.subjects == cohort.subjects);

  const auto path = scratch("cohort.csv").string();
  io::write_cohort(path, cohort);
  CHECK(fs::exists(path + ".json"));
  const Cohort read = io::read_cohort(path);
  CHECK(read.subjects == cohort.subjects);
  CHECK(read.grid == cohort.grid);
}

TEST_CASE("malformed cohort csv reports line and column") {
  auto error_at = [](const std::string& text) -> std::pair<int, int> {
    try {
      io::cohort_from_csv(text, kGrid, kAlph);
    } catch (const UsageError& e) {
      return {e.line(), e.column()};
    }
    return {-1, -1};
  };
  const std::string head = "id,k,tau_k,L1,A,T_event\n";
  CHECK(error_at("id,k\n") == std::pair{1, 1});
  CHECK(error_at(head + "1,0,0,1,x,\n1,,,,,0.5\n") == std::pair{2, 9});
  CHECK(error_at(head + "1,0,0,1,0,\n1,,,,,abc\n") == std::pair{3, 7});
  CHECK(error_at(head + "1,0,0,1,0\n") == std::pair{2, 1});
  CHECK(error_at(head + "1,0,0.5,1,0,\n1,,,,,0.2\n") == std::pair{2, 5});
  CHECK(error_at(head + "1,0,0,1,0,\n1,,,,,1.5\n") == std::pair{3, 7});
  CHECK(error_at(head + "1,0,0,1,0,\n2,,,,,0.5\n") == std::pair{3, 1});
  CHECK(error_at(head + "1,0,0,1,0,\n") == std::pair{2, 1});
  CHECK(error_at(head + "1,0,0,1,0,\n1,,,,,0.5\n").first == -1);
}

TEST_CASE("malformed json reports line and column") {
  try {
    io::parse_json("{\n  \"a\": 1,\n  \"b\": ]\n}", "doc");
    FAIL("no error");
  } catch (const UsageError& e) {
    CHECK(e.line() == 3);
    CHECK(e.column() >= 7);
  }
  CHECK_THROWS_AS(io::read_json("/nonexistent/file.json"), UsageError);
  CHECK_THROWS_AS(io::dgp_from_json(io::parse_json("{\"taus\": [0, 1]}")), UsageError);
}

TEST_CASE("regime documents") {
  using io::json;
  const auto never = io::regimes_from_json(json{{"type", "never"}}, kGrid, kAlph);
  REQUIRE(never.size() == 1);
  CHECK(never[0].dose(1, History{1, 1}) == 0);
  const auto named = io::regimes_from_json(json{{"type", "threshold"}, {"cut", 1}, {"name", "treat_if_l"}}, kGrid, kAlph);
  CHECK(named[0].name() == "treat_if_l");
  CHECK(named[0].dose(0, History{1}) == 1);
  const auto list = io::regimes_from_json(
      json{{"regimes", {{{"type", "static"}, {"doses", {1, 0}}}, {{"type", "table"}, {"doses", {{0, 1}, {1, 1, 0, 0}}}}}}},
      kGrid, kAlph);
  REQUIRE(list.size() == 2);
  CHECK(apply_regime(list[0], kGrid, History{0, 0}) == History{1, 0});
  CHECK(apply_regime(list[1], kGrid, History{1, 1}) == History{1, 0});
  CHECK_THROWS_AS(io::regimes_from_json(json{{"type", "sometimes"}}, kGrid, kAlph), UsageError);
  CHECK_THROWS_AS(io::regimes_from_json(json{{"type", "table"}, {"doses", {{0, 1}}}}, kGrid, kAlph), UsageError);
  for (const char* f : {"regime_never.json", "regime_always.json", "regime_threshold.json"})
    CHECK(io::regimes_from_json(io::read_json(std::string(SNFTM_SOURCE_DIR "/data/") + f), kGrid, kAlph).size() == 1);
}

TEST_CASE("model, spec, world and law documents round trip") {
  const DgpConfig cfg = fixtures::example_dgp(fixtures::effect());
  const ParametricModel m = ParametricModel::from_dgp(cfg);
  const ParametricModel m2 = io::model_from_json(io::to_json(m), cfg.grid, cfg.alphabets);
  CHECK(m2.pack() == m.pack());
  CHECK(m2.bins == m.bins);

  io::GSpec spec;
  spec.model.g_terms = {"1", "k"};
  spec.model.clip_hi = 10.0;
  spec.shift_features = {"a", "a_l"};
  const io::GSpec s2 = io::gspec_from_json(io::to_json(spec));
  CHECK(s2.model.g_terms == spec.model.g_terms);
  CHECK(s2.model.clip_hi == 10.0);
  CHECK(s2.shift_features == spec.shift_features);

  const FittedWorld w = FittedWorld::from_cohort(sample_cohort(cfg, 200, 1), cfg.model, cfg.thresholds);
  const FittedWorld w2 = io::world_from_json(io::parse_json(io::to_json(w).dump()));
  CHECK(w2.baseline_sample == w.baseline_sample);
  CHECK(w2.bins == w.bins);
  CHECK(w2.model.psi() == w.model.psi());
  const std::vector<double> times{0.5, 1.5};
  CHECK(simulate_counterfactual(w, TreatmentRegime::threshold(1, 1), 500, times, 3).paths ==
        simulate_counterfactual(w2, TreatmentRegime::threshold(1, 1), 500, times, 3).paths);

  const EnumeratedWorld world(cfg);
  const ConditionalLaws laws = io::laws_from_json(io::parse_json(io::to_json(world.laws()).dump()));
  for (double t : {0.3, 1.7})
    CHECK(s_marginal(laws, TreatmentRegime::never(), t) ==
          doctest::Approx(s_marginal(world.laws(), TreatmentRegime::never(), t)).epsilon(1e-15));
}

TEST_CASE("argument parsers") {
  CHECK(io::parse_range("0:1:0.25") == std::vector<double>{0.0, 0.25, 0.5, 0.75, 1.0});
  CHECK(io::parse_range("0:0.3:0.1").size() == 4);
  CHECK_THROWS_AS(io::parse_range("0:1"), UsageError);
  CHECK_THROWS_AS(io::parse_range("1:0:0.1"), UsageError);
  const SearchBox box = io::parse_box("-0.5:2,0:1");
  CHECK(box.dim() == 2);
  CHECK(box.ranges[0] == std::pair{-0.5, 2.0});
  CHECK_THROWS_AS(io::parse_box("x:1"), UsageError);
  CHECK(io::parse_vector("0.7,0,-1") == (Vector(3) << 0.7, 0.0, -1.0).finished());
  CHECK_THROWS_AS(io::parse_vector("0.7,,1"), UsageError);
  CHECK(io::format_number(0.1) == "0.10000000000000001");
  CHECK(io::format_number(kInf) == "inf");
}

TEST_CASE("atomic writes replace the target") {
  const auto path = scratch("atomic.txt").string();
  io::write_atomic(path, "one");
  io::write_atomic(path, "two");
  CHECK(io::read_text(path) == "two");
  CHECK_THROWS_AS(io::write_atomic("/nonexistent/dir/x.txt", "x"), UsageError);
}
