#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "snftm/cfsim.hpp"
#include "snftm/core.hpp"
#include "snftm/dgp.hpp"
#include "snftm/gcomp.hpp"
#include "snftm/gest.hpp"
#include "snftm/laws.hpp"
#include "snftm/mle.hpp"

namespace snftm::io {

using json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

/// Parses JSON text; syntax errors become UsageError with line and column.
json parse_json(const std::string& text, const std::string& source = "input");
json read_json(const std::string& path);
std::string read_text(const std::string& path);

/// Writes through a temporary file and a rename.
void write_atomic(const std::string& path, const std::string& content);
/// %.17g, or "inf".
std::string format_number(double x);

json to_json(const DgpConfig& cfg);
DgpConfig dgp_from_json(const json& j);

json to_json(const TimeGrid& grid, const Alphabets& alphabets);
TimeGrid grid_from_json(const json& j);
Alphabets alphabets_from_json(const json& j, const TimeGrid& grid);

/// {"type": "never" | "static" | "threshold" | "table", ...}; a document with
/// a "regimes" array yields several.
std::vector<TreatmentRegime> regimes_from_json(const json& j, const TimeGrid& grid, const Alphabets& alphabets);

/// Treatment-model spec plus the shift features it is paired with.
struct GSpec {
  TreatmentModelSpec model;
  std::vector<std::string> shift_features{"a"};
};
json to_json(const GSpec& spec);
GSpec gspec_from_json(const json& j);

json to_json(const ParametricModel& model);
/// Grid and alphabets come from the cohort; missing coefficients start at 0.
ParametricModel model_from_json(const json& j, const TimeGrid& grid, const Alphabets& alphabets);

json to_json(const FittedWorld& world);
FittedWorld world_from_json(const json& j);

json to_json(const ConditionalLaws& laws);
ConditionalLaws laws_from_json(const json& j);

/// Long format: one row per visit (id,k,tau_k,L1,A,T_event with T_event
/// empty) and a terminal row per subject carrying only id and T_event.
std::string cohort_to_csv(const Cohort& cohort);
Cohort cohort_from_csv(const std::string& text, const TimeGrid& grid, const Alphabets& alphabets);
/// Writes the CSV and its "<path>.json" sidecar with grid and alphabets.
void write_cohort(const std::string& path, const Cohort& cohort);
Cohort read_cohort(const std::string& path);

std::string curve_to_csv(const CurveEstimate& curve);

/// "a:b:step" -> a, a + step, ..., up to b inclusive.
std::vector<double> parse_range(const std::string& spec);
/// "lo:hi[,lo:hi...]".
SearchBox parse_box(const std::string& spec);
/// Comma-separated reals.
Vector parse_vector(const std::string& spec);

}  // namespace snftm::io
