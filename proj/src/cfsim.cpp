#include "snftm/cfsim.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "snftm/parallel.hpp"

namespace snftm {

FittedWorld FittedWorld::from_dgp(const DgpConfig& cfg) {
  cfg.validate();
  FittedWorld w{cfg.model, cfg.alphabets, cfg.thresholds, cfg.covariate_law, {}, cfg.baseline};
  return w;
}

FittedWorld FittedWorld::from_cohort(const Cohort& cohort, const ShiftModel& model, std::vector<double> bins) {
  cohort.validate();
  if (cohort.subjects.empty()) throw DomainError("cannot fit a world to an empty cohort");
  if (!(model.grid() == cohort.grid)) throw ConfigError("shift model grid differs from the cohort grid");
  FittedWorld w{model, cohort.alphabets, std::move(bins), CategoricalLaw(), {}, std::nullopt};
  const auto cuts = w.bins;
  for (std::size_t i = 0; i < cuts.size(); ++i)
    if (!(cuts[i] > (i == 0 ? 0.0 : cuts[i - 1]))) throw ConfigError("bins must be positive and increasing");
  std::map<CategoricalLaw::Key, std::vector<double>> counts;
  for (const auto& s : cohort.subjects) {
    const double t0 = blip_down(model, s, 0);
    w.baseline_sample.push_back(t0);
    const int bin = static_cast<int>(std::lower_bound(cuts.begin(), cuts.end(), t0) - cuts.begin());
    for (int k = 0; k <= s.last_visit(); ++k) {
      CategoricalLaw::Key key{k, bin, History(s.covariates.begin(), s.covariates.begin() + k),
                              History(s.treatments.begin(), s.treatments.begin() + k)};
      auto& c = counts[key];
      c.resize(static_cast<std::size_t>(cohort.alphabets.covariate[static_cast<std::size_t>(k)]), 0.0);
      c[static_cast<std::size_t>(s.covariates[static_cast<std::size_t>(k)])] += 1.0;
    }
  }
  for (auto& [key, c] : counts) {
    double n = 0.0;
    for (double v : c) n += v;
    for (double& v : c) v /= n;
    w.covariate_law.set(key, c);
  }
  std::sort(w.baseline_sample.begin(), w.baseline_sample.end());
  return w;
}

void FittedWorld::validate() const {
  alphabets.validate(model.grid());
  if (baseline_sample.empty() && !baseline) throw ConfigError("world needs a baseline sample or curve");
  for (double t : baseline_sample)
    if (!(t > 0.0) || !std::isfinite(t)) throw ConfigError("baseline sample must be finite and positive");
  if (baseline && baseline->start() != 0.0) throw ConfigError("baseline curve must start at 0");
}

double FittedWorld::draw_t0(RandomStream& rng) const {
  const double u = rng.uniform();
  if (baseline) return baseline->quantile(u);
  const auto m = baseline_sample.size();
  return baseline_sample[std::min(m - 1, static_cast<std::size_t>(u * static_cast<double>(m)))];
}

CounterfactualSample simulate_counterfactual(const FittedWorld& world, const TreatmentRegime& g, std::size_t n,
                                             std::span<const double> t_grid, std::uint64_t seed, int threads) {
  if (n < 1) throw DomainError("simulate_counterfactual: n must be >= 1");
  world.validate();
  CounterfactualSample out;
  out.t0.resize(n);
  out.paths.resize(n);
  const auto& cuts = world.bins;
  const TreatmentChooser choose = [&g](int k, HistoryView l, HistoryView, RandomStream&) { return g.dose(k, l); };
  parallel_chunks(n, threads, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      RandomStream rng(seed, stream_id("cfsim.replicate"), i);
      const double t0 = world.draw_t0(rng);
      const int bin = static_cast<int>(std::lower_bound(cuts.begin(), cuts.end(), t0) - cuts.begin());
      out.t0[i] = t0;
      out.paths[i] = forward_path(world.model, world.alphabets, world.covariate_law, t0, bin, choose, rng);
    }
  });
  std::vector<double> times(n);
  for (std::size_t i = 0; i < n; ++i) times[i] = out.paths[i].event_time;
  out.curve = empirical_curve(times, t_grid);
  return out;
}

}  // namespace snftm
