#include "snftm/dgp.hpp"

#include <algorithm>
#include <cmath>

#include "snftm/parallel.hpp"

namespace snftm {

PrognosisBins::PrognosisBins(SurvivalCurve baseline, std::vector<double> cuts)
    : baseline_(std::move(baseline)), cuts_(std::move(cuts)) {
  double prev = baseline_.start();
  for (double c : cuts_) {
    if (!(c > prev) || !std::isfinite(c)) throw ConfigError("prognosis thresholds must be finite, increasing and positive");
    prev = c;
  }
}

int PrognosisBins::bin_of(double t0) const {
  return static_cast<int>(std::lower_bound(cuts_.begin(), cuts_.end(), t0) - cuts_.begin());
}

double PrognosisBins::lower(int j) const { return j == 0 ? baseline_.start() : cuts_[static_cast<std::size_t>(j) - 1]; }

double PrognosisBins::upper(int j) const { return j == count() - 1 ? kInf : cuts_[static_cast<std::size_t>(j)]; }

double PrognosisBins::mass(int j) const { return baseline_.clamped(lower(j)) - baseline_.clamped(upper(j)); }

double PrognosisBins::tail(int j, double x) const { return slab(j, x, kInf); }

double PrognosisBins::slab(int j, double lo, double hi) const {
  const double a = std::max(lo, lower(j));
  const double b = std::min(hi, upper(j));
  if (!(b > a)) return 0.0;
  return std::max(0.0, baseline_.clamped(a) - baseline_.clamped(b));
}

IntervalSurvival PrognosisBins::push_through(std::span<const double> w, double thr, double slope, double tau,
                                             double end) const {
  const int m = count();
  if (static_cast<int>(w.size()) != m) throw DomainError("bin weights do not match the prognosis bins");
  double z = 0.0;
  for (int j = 0; j < m; ++j) z += w[static_cast<std::size_t>(j)] * tail(j, thr);
  if (!(z > 0.0)) throw DomainError("history cannot reach this interval");

  const double d_end = end == kInf ? kInf : thr + slope * (end - tau);
  std::vector<double> ds{thr};
  for (double c : cuts_)
    if (c > thr && c < d_end) ds.push_back(c);
  for (double b : baseline_.breakpoints())
    if (b > thr && b < d_end) ds.push_back(b);
  std::sort(ds.begin(), ds.end());
  ds.erase(std::unique(ds.begin(), ds.end()), ds.end());

  // above[j] = sum over bins j' >= j of w_j' P(T0 in bin j').
  std::vector<double> above(static_cast<std::size_t>(m) + 1, 0.0);
  for (int j = m - 1; j >= 0; --j)
    above[static_cast<std::size_t>(j)] = above[static_cast<std::size_t>(j) + 1] + w[static_cast<std::size_t>(j)] * mass(j);

  const auto& breaks = baseline_.breakpoints();
  std::vector<IntervalSurvival::Segment> segs;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const double d = ds[i];
    const int j = static_cast<int>(std::upper_bound(cuts_.begin(), cuts_.end(), d) - cuts_.begin());
    const auto piece = static_cast<std::size_t>(std::upper_bound(breaks.begin(), breaks.end(), d) - breaks.begin());
    const double wj = w[static_cast<std::size_t>(j)];
    const double from = i == 0 ? tau : tau + (d - thr) / slope;
    if (!segs.empty() && !(from > segs.back().from)) continue;
    if (end != kInf && !(from < end)) continue;
    segs.push_back({from, (above[static_cast<std::size_t>(j) + 1] - wj * baseline_.clamped(upper(j))) / z,
                    wj * baseline_.clamped(d) / z, baseline_.rates()[piece] * slope});
  }
  return IntervalSurvival(tau, end, std::move(segs));
}

bool SoftmaxLaw::smooth_prognosis() const {
  return std::any_of(scores.begin(), scores.end(), [](const LinearScore& s) { return s.prognosis != 0.0; });
}

std::vector<double> SoftmaxLaw::probs(int k, int bin, HistoryView l, HistoryView a, double t0) const {
  const auto ku = static_cast<std::size_t>(k);
  const double cur = l.size() > ku ? l[ku] : 0.0;
  const double lprev = k > 0 ? l[ku - 1] : 0.0;
  const double aprev = k > 0 ? a[ku - 1] : 0.0;
  std::vector<double> eta(scores.size() + 1, 0.0);
  for (std::size_t c = 0; c < scores.size(); ++c) {
    const LinearScore& s = scores[c];
    double v = s.intercept + s.time * k + s.covariate * cur + s.prev_covariate * lprev + s.prev_treatment * aprev;
    if (bin >= 0 && static_cast<std::size_t>(bin) < s.bin.size()) v += s.bin[static_cast<std::size_t>(bin)];
    if (s.prognosis != 0.0) v += s.prognosis * std::exp(-prognosis_rate * t0);
    eta[c + 1] = v;
  }
  const double top = *std::max_element(eta.begin(), eta.end());
  double sum = 0.0;
  for (double& e : eta) {
    e = std::exp(e - top);
    sum += e;
  }
  for (double& e : eta) e /= sum;
  return eta;
}

void CategoricalLaw::set(Key key, std::vector<double> probs) {
  double sum = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0)) throw ConfigError("probabilities must be non-negative");
    sum += p;
  }
  if (probs.empty() || std::abs(sum - 1.0) > 1e-12) throw ConfigError("probability vector must sum to 1");
  table_.insert_or_assign(std::move(key), std::move(probs));
}

std::vector<double> CategoricalLaw::probs(int k, int bin, HistoryView l, HistoryView a, double t0) const {
  Key key{k, bin, History(l.begin(), l.end()), History(a.begin(), a.end())};
  if (auto it = table_.find(key); it != table_.end()) return it->second;
  if (bin != -1) {
    key.bin = -1;
    if (auto it = table_.find(key); it != table_.end()) return it->second;
  }
  if (softmax_) return softmax_->probs(k, bin, l, a, t0);
  throw UndefinedCell("no law for visit " + std::to_string(k) + " bin " + std::to_string(bin) + " " +
                      describe_cell(l, a));
}

void DgpConfig::validate() const {
  alphabets.validate(grid);
  if (!(model.grid() == grid)) throw ConfigError("shift model grid differs from the dgp grid");
  if (baseline.start() != 0.0) throw ConfigError("baseline survival must start at 0");
  PrognosisBins check(baseline, thresholds);
  const int nb = check.count();
  const int K = grid.K();

  auto check_table = [&](const CategoricalLaw& law, bool treatment) {
    for (const auto& [key, p] : law.table()) {
      if (key.k < 0 || key.k > K) throw ConfigError("law table visit index outside the grid");
      const auto ku = static_cast<std::size_t>(key.k);
      const auto want_l = treatment ? ku + 1 : ku;
      if (key.l.size() != want_l || key.a.size() != ku) throw ConfigError("law table key has wrong history length");
      if (key.bin < -1 || key.bin >= nb) throw ConfigError("law table bin outside the prognosis bins");
      if (treatment && key.bin != -1) throw ConfigError("treatment laws may not depend on T0");
      const int size = treatment ? alphabets.treatment[ku] : alphabets.covariate[ku];
      if (static_cast<int>(p.size()) != size) throw ConfigError("law table vector does not match the alphabet");
      if (treatment && !(p[0] > 0.0))
        throw ConfigError("treatment law gives P(A_k = 0) = 0 at visit " + std::to_string(key.k) +
                          "; the baseline regime must stay admissible");
    }
  };
  check_table(covariate_law, false);
  check_table(treatment_law, true);

  if (const auto& s = covariate_law.softmax()) {
    for (int k = 0; k <= K; ++k)
      if (s->categories() != alphabets.covariate[static_cast<std::size_t>(k)])
        throw ConfigError("covariate softmax needs the same alphabet size at every visit");
    for (const auto& sc : s->scores) {
      if (sc.covariate != 0.0) throw ConfigError("covariate law cannot depend on the covariate it draws");
      if (static_cast<int>(sc.bin.size()) > nb) throw ConfigError("covariate softmax has more bin terms than bins");
    }
    if (s->smooth_prognosis() && !(s->prognosis_rate > 0.0)) throw ConfigError("prognosis rate must be > 0");
  }
  if (const auto& s = treatment_law.softmax()) {
    for (int k = 0; k <= K; ++k)
      if (s->categories() != alphabets.treatment[static_cast<std::size_t>(k)])
        throw ConfigError("treatment softmax needs the same alphabet size at every visit");
    for (const auto& sc : s->scores)
      if (!sc.bin.empty() || sc.prognosis != 0.0) throw ConfigError("treatment laws may not depend on T0");
  }
}

DgpConfig DgpConfig::with_seed(std::uint64_t s) const {
  DgpConfig c = *this;
  c.seed = s;
  return c;
}

DgpConfig DgpConfig::with_psi(Vector psi) const {
  DgpConfig c = *this;
  c.model = model.with_psi(std::move(psi));
  return c;
}

Trajectory forward_path(const ShiftModel& model, const Alphabets& alphabets, const CategoricalLaw& cov, double t0,
                        int bin, const TreatmentChooser& choose, RandomStream& rng) {
  const auto& grid = model.grid();
  Trajectory tr;
  double v = t0;
  for (int k = 0; k <= grid.K(); ++k) {
    const auto pl = cov.probs(k, bin, tr.covariates, tr.treatments, t0);
    if (static_cast<int>(pl.size()) != alphabets.covariate[static_cast<std::size_t>(k)])
      throw ConfigError("covariate law size differs from the alphabet");
    tr.covariates.push_back(rng.categorical(pl));
    tr.treatments.push_back(choose(k, tr.covariates, HistoryView(tr.treatments.data(), static_cast<std::size_t>(k)), rng));
    v = model.gamma_inv(tr.covariates, tr.treatments, v);
    if (v <= grid.interval_end(k)) break;
  }
  tr.event_time = v;
  return tr;
}

RandomStream subject_stream(std::uint64_t seed, std::size_t i) {
  return RandomStream(seed, stream_id("dgp.subject"), i);
}

SubjectDraw sample_subject(const DgpConfig& cfg, RandomStream& rng) {
  SubjectDraw d;
  d.t0 = cfg.baseline.quantile(rng.uniform());
  d.bin = PrognosisBins(cfg.baseline, cfg.thresholds).bin_of(d.t0);
  const auto choose = [&cfg](int k, HistoryView l, HistoryView a, RandomStream& r) {
    return r.categorical(cfg.treatment_law.probs(k, -1, l, a));
  };
  d.trajectory = forward_path(cfg.model, cfg.alphabets, cfg.covariate_law, d.t0, d.bin, choose, rng);
  return d;
}

Trajectory sample_trajectory(const DgpConfig& cfg, RandomStream& rng) { return sample_subject(cfg, rng).trajectory; }

std::vector<SubjectDraw> sample_subjects(const DgpConfig& cfg, std::size_t n, int threads) {
  if (n < 1) throw DomainError("cohort size must be >= 1");
  cfg.validate();
  std::vector<SubjectDraw> out(n);
  parallel_chunks(n, threads, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      RandomStream rng = subject_stream(cfg.seed, i);
      out[i] = sample_subject(cfg, rng);
    }
  });
  return out;
}

Cohort sample_cohort(const DgpConfig& cfg, std::size_t n, int threads) {
  auto draws = sample_subjects(cfg, n, threads);
  Cohort c{cfg.grid, cfg.alphabets, {}};
  c.subjects.reserve(n);
  for (auto& d : draws) c.subjects.push_back(std::move(d.trajectory));
  return c;
}

std::vector<double> covariate_probs(const DgpConfig& cfg, int k, int bin, HistoryView l_prev, HistoryView a_prev) {
  if (cfg.covariate_law.depends_on_t0())
    throw UnsupportedLaw("covariate law depends on T0 beyond its bin; exact enumeration is unavailable");
  return cfg.covariate_law.probs(k, bin, l_prev, a_prev);
}

std::vector<double> treatment_probs(const DgpConfig& cfg, int k, HistoryView l, HistoryView a_prev) {
  return cfg.treatment_law.probs(k, -1, l, a_prev);
}

namespace {

struct LawBuilder {
  const DgpConfig& cfg;
  PrognosisBins bins;
  ConditionalLaws& laws;
  History l, a;

  void visit(int k, const std::vector<double>& w, double thr) {
    const int nb = bins.count();
    std::vector<double> d(static_cast<std::size_t>(nb));
    double z = 0.0;
    for (int j = 0; j < nb; ++j) z += (d[static_cast<std::size_t>(j)] = w[static_cast<std::size_t>(j)] * bins.tail(j, thr));
    if (!(z > 0.0)) return;

    const auto nl = static_cast<std::size_t>(cfg.alphabets.covariate[static_cast<std::size_t>(k)]);
    std::vector<std::vector<double>> cov(static_cast<std::size_t>(nb));
    std::vector<double> pl(nl, 0.0);
    for (int j = 0; j < nb; ++j) {
      if (!(d[static_cast<std::size_t>(j)] > 0.0)) continue;
      cov[static_cast<std::size_t>(j)] = covariate_probs(cfg, k, j, l, a);
      for (std::size_t c = 0; c < nl; ++c) pl[c] += d[static_cast<std::size_t>(j)] * cov[static_cast<std::size_t>(j)][c] / z;
    }
    laws.set_covariate(l, a, pl);

    const double tau = cfg.grid.tau(k);
    const double end = cfg.grid.interval_end(k);
    for (std::size_t c = 0; c < nl; ++c) {
      if (!(pl[c] > 0.0)) continue;
      std::vector<double> w2(static_cast<std::size_t>(nb), 0.0);
      for (int j = 0; j < nb; ++j)
        if (d[static_cast<std::size_t>(j)] > 0.0) w2[static_cast<std::size_t>(j)] = w[static_cast<std::size_t>(j)] * cov[static_cast<std::size_t>(j)][c];
      l.push_back(static_cast<int>(c));
      const auto pa = treatment_probs(cfg, k, l, a);
      for (std::size_t t = 0; t < pa.size(); ++t) {
        if (!(pa[t] > 0.0)) continue;
        a.push_back(static_cast<int>(t));
        const double slope = std::exp(cfg.model.exponent(l, a));
        laws.set_survival(l, a, bins.push_through(w2, thr, slope, tau, end));
        if (k < cfg.grid.K()) visit(k + 1, w2, thr + (end - tau) * slope);
        a.pop_back();
      }
      l.pop_back();
    }
  }
};

}  // namespace

ConditionalLaws true_conditional_laws(const DgpConfig& cfg) {
  cfg.validate();
  if (cfg.covariate_law.depends_on_t0())
    throw UnsupportedLaw("covariate law depends on T0 beyond its bin; exact laws are unavailable");
  PrognosisBins bins = cfg.bins();
  double cells = 0.0, paths = 1.0;
  for (int k = 0; k <= cfg.grid.K(); ++k) {
    const auto ku = static_cast<std::size_t>(k);
    paths *= static_cast<double>(cfg.alphabets.covariate[ku]) * cfg.alphabets.treatment[ku];
    cells += paths * bins.count();
  }
  if (cells > 1e7) throw InstanceTooLarge("exact law enumeration needs " + std::to_string(cells) + " cells (limit 1e7)");

  ConditionalLaws laws(cfg.grid, cfg.alphabets);
  LawBuilder b{cfg, bins, laws, {}, {}};
  b.visit(0, std::vector<double>(static_cast<std::size_t>(bins.count()), 1.0), 0.0);
  return laws;
}

}  // namespace snftm
