#include "snftm/mle.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "snftm/parallel.hpp"
#include "snftm/stats.hpp"

namespace snftm {

namespace {

constexpr int kStatic = 4;  // 1, k, l_prev, a_prev

int bin_index(const std::vector<double>& bins, double t0) {
  return static_cast<int>(std::lower_bound(bins.begin(), bins.end(), t0) - bins.begin());
}

// Right-limit convention at breakpoints.
int piece_of(const std::vector<double>& breaks, double t0) {
  return static_cast<int>(std::upper_bound(breaks.begin(), breaks.end(), t0) - breaks.begin());
}

}  // namespace

ParametricModel ParametricModel::initial(TimeGrid grid, Alphabets alphabets, std::vector<std::string> shift_features,
                                         std::vector<double> baseline_breaks, std::vector<double> bins,
                                         double prognosis_rate) {
  ParametricModel m{std::move(grid), std::move(alphabets), std::move(shift_features), Vector(), std::move(baseline_breaks),
                    Vector(), std::move(bins), prognosis_rate, Matrix()};
  m.psi = Vector::Zero(static_cast<Eigen::Index>(m.shift_features.size()));
  m.log_rates = Vector::Zero(static_cast<Eigen::Index>(m.baseline_breaks.size()) + 1);
  m.covariate_coef = Matrix::Zero(m.alphabets.covariate.empty() ? 0 : m.categories() - 1, m.covariate_dim());
  m.validate();
  return m;
}

ParametricModel ParametricModel::from_dgp(const DgpConfig& cfg) {
  const auto& sm = cfg.covariate_law.softmax();
  if (!sm || !cfg.covariate_law.table().empty())
    throw UnsupportedLaw("parametric model needs a pure softmax covariate law");
  const SurvivalCurve& b = cfg.baseline;
  if (b.start() != 0.0) throw UnsupportedLaw("baseline must start at 0");
  Vector rates = Eigen::Map<const Vector>(b.rates().data(), static_cast<Eigen::Index>(b.rates().size()));
  const double rho = sm->smooth_prognosis() ? sm->prognosis_rate : 0.0;
  ParametricModel m = initial(cfg.grid, cfg.alphabets, cfg.model.feature_names(), b.breakpoints(), cfg.thresholds, rho);
  m.psi = cfg.model.psi();
  m.log_rates = rates.array().log().matrix();
  const int nb = static_cast<int>(cfg.thresholds.size()) + 1;
  for (std::size_t c = 0; c < sm->scores.size(); ++c) {
    const LinearScore& s = sm->scores[c];
    auto bin = [&](int j) { return static_cast<std::size_t>(j) < s.bin.size() ? s.bin[static_cast<std::size_t>(j)] : 0.0; };
    auto row = m.covariate_coef.row(static_cast<Eigen::Index>(c));
    row[0] = s.intercept + bin(0);
    row[1] = s.time;
    row[2] = s.prev_covariate;
    row[3] = s.prev_treatment;
    for (int j = 1; j < nb; ++j) row[kStatic + j - 1] = bin(j) - bin(0);
    if (rho > 0.0) row[m.covariate_dim() - 1] = s.prognosis;
  }
  return m;
}

void ParametricModel::validate() const {
  alphabets.validate(grid);
  for (int c : alphabets.covariate)
    if (c != alphabets.covariate.front()) throw ConfigError("parametric model needs the same covariate alphabet at every visit");
  if (categories() < 2) throw ConfigError("covariate alphabet needs at least two codes");
  if (psi.size() != static_cast<Eigen::Index>(shift_features.size())) throw ConfigError("psi does not match the shift features");
  for (std::size_t i = 0; i < baseline_breaks.size(); ++i)
    if (!(baseline_breaks[i] > (i == 0 ? 0.0 : baseline_breaks[i - 1])) || !std::isfinite(baseline_breaks[i]))
      throw ConfigError("baseline breaks must be finite, positive and increasing");
  if (log_rates.size() != static_cast<Eigen::Index>(baseline_breaks.size()) + 1)
    throw ConfigError("need one log-rate per baseline piece");
  for (std::size_t i = 0; i < bins.size(); ++i)
    if (!(bins[i] > (i == 0 ? 0.0 : bins[i - 1])) || !std::isfinite(bins[i]))
      throw ConfigError("bins must be finite, positive and increasing");
  if (!(prognosis_rate >= 0.0)) throw ConfigError("prognosis_rate must be >= 0");
  if (covariate_coef.rows() != categories() - 1 || covariate_coef.cols() != covariate_dim())
    throw ConfigError("covariate_coef must be (categories - 1) x " + std::to_string(covariate_dim()));
  shift_model();
}

int ParametricModel::covariate_dim() const {
  return kStatic + static_cast<int>(bins.size()) + (prognosis_rate > 0.0 ? 1 : 0);
}

int ParametricModel::size() const {
  return psi_dim() + static_cast<int>(log_rates.size()) + static_cast<int>(covariate_coef.size());
}

Vector ParametricModel::pack() const {
  Vector theta(size());
  Eigen::Index at = 0;
  theta.segment(at, psi.size()) = psi;
  at += psi.size();
  theta.segment(at, log_rates.size()) = log_rates;
  at += log_rates.size();
  for (Eigen::Index c = 0; c < covariate_coef.rows(); ++c)
    for (Eigen::Index j = 0; j < covariate_coef.cols(); ++j) theta[at++] = covariate_coef(c, j);
  return theta;
}

ParametricModel ParametricModel::unpack(const Vector& theta) const {
  if (theta.size() != size()) throw DomainError("parameter vector has the wrong length");
  ParametricModel m = *this;
  Eigen::Index at = 0;
  m.psi = theta.segment(at, psi.size());
  at += psi.size();
  m.log_rates = theta.segment(at, log_rates.size());
  at += log_rates.size();
  for (Eigen::Index c = 0; c < covariate_coef.rows(); ++c)
    for (Eigen::Index j = 0; j < covariate_coef.cols(); ++j) m.covariate_coef(c, j) = theta[at++];
  return m;
}

std::vector<std::string> ParametricModel::parameter_names() const {
  std::vector<std::string> out;
  for (const auto& f : shift_features) out.push_back("psi." + f);
  for (Eigen::Index i = 0; i < log_rates.size(); ++i) out.push_back("log_rate." + std::to_string(i));
  std::vector<std::string> feat{"intercept", "k", "l_prev", "a_prev"};
  for (std::size_t j = 1; j <= bins.size(); ++j) feat.push_back("bin" + std::to_string(j));
  if (prognosis_rate > 0.0) feat.push_back("prognosis");
  for (Eigen::Index c = 0; c < covariate_coef.rows(); ++c)
    for (const auto& f : feat) out.push_back("cov" + std::to_string(c + 1) + "." + f);
  return out;
}

ShiftModel ParametricModel::shift_model() const { return ShiftModel(grid, psi, shift_features); }

SurvivalCurve ParametricModel::baseline() const {
  std::vector<double> rates(static_cast<std::size_t>(log_rates.size()));
  for (std::size_t i = 0; i < rates.size(); ++i) rates[i] = std::exp(log_rates[static_cast<Eigen::Index>(i)]);
  return SurvivalCurve(0.0, baseline_breaks, rates);
}

void ParametricModel::covariate_features(int k, int l_prev, int a_prev, double t0, double* out) const {
  out[0] = 1.0;
  out[1] = k;
  out[2] = l_prev;
  out[3] = a_prev;
  const int b = bin_index(bins, t0);
  for (std::size_t j = 1; j <= bins.size(); ++j) out[kStatic + j - 1] = static_cast<int>(j) == b ? 1.0 : 0.0;
  if (prognosis_rate > 0.0) out[covariate_dim() - 1] = std::exp(-prognosis_rate * t0);
}

std::vector<double> ParametricModel::covariate_probs(int k, int l_prev, int a_prev, double t0) const {
  Vector x(covariate_dim());
  covariate_features(k, l_prev, a_prev, t0, x.data());
  std::vector<double> eta(static_cast<std::size_t>(categories()), 0.0);
  for (int c = 1; c < categories(); ++c) eta[static_cast<std::size_t>(c)] = covariate_coef.row(c - 1).dot(x);
  const double top = *std::max_element(eta.begin(), eta.end());
  double sum = 0.0;
  for (double& e : eta) sum += (e = std::exp(e - top));
  for (double& e : eta) e /= sum;
  return eta;
}

namespace {

/// Per-subject record with everything that does not depend on the parameters.
struct Record {
  RecordBlip blip;
  std::vector<int> l;
  std::vector<int> l_prev;
  std::vector<int> a_prev;
};

class Likelihood {
 public:
  Likelihood(const Cohort& cohort, const ParametricModel& shape, int threads) : shape_(shape), threads_(threads) {
    if (!(cohort.grid == shape.grid)) throw ConfigError("model grid differs from the cohort grid");
    if (!(cohort.alphabets == shape.alphabets)) throw ConfigError("model alphabets differ from the cohort alphabets");
    const ShiftModel sm = shape.shift_model();
    for (const auto& s : cohort.subjects) {
      Record r{RecordBlip(sm, s), {}, {}, {}};
      for (int k = 0; k <= s.last_visit(); ++k) {
        const auto ku = static_cast<std::size_t>(k);
        if (s.covariates[ku] < 0 || s.covariates[ku] >= shape.categories())
          throw StructuralZero("covariate code outside the model alphabet");
        r.l.push_back(s.covariates[ku]);
        r.l_prev.push_back(k > 0 ? s.covariates[ku - 1] : 0);
        r.a_prev.push_back(k > 0 ? s.treatments[ku - 1] : 0);
      }
      records_.push_back(std::move(r));
    }
    if (records_.empty()) throw DomainError("likelihood needs a non-empty cohort");
  }

  std::size_t n() const { return records_.size(); }
  const std::vector<Record>& records() const { return records_; }

  /// Log-likelihood and, when grad is non-null, its gradient; summed in
  /// subject order so the value does not depend on the thread count.
  double eval(const Vector& theta, Vector* grad) const {
    const ParametricModel m = shape_.unpack(theta);
    const int dim = static_cast<int>(theta.size());
    std::vector<double> ll(records_.size());
    Matrix g;
    if (grad) g.setZero(dim, static_cast<Eigen::Index>(records_.size()));
    parallel_chunks(records_.size(), threads_, [&](std::size_t lo, std::size_t hi) {
      Scratch s(m);
      for (std::size_t i = lo; i < hi; ++i) ll[i] = subject(m, records_[i], s, grad ? g.col(static_cast<Eigen::Index>(i)).data() : nullptr);
    });
    double total = 0.0;
    for (double v : ll) total += v;
    if (grad) {
      grad->setZero(dim);
      for (Eigen::Index i = 0; i < g.cols(); ++i) *grad += g.col(i);
    }
    return total;
  }

  /// t0 per subject at psi.
  std::vector<double> t0(const Vector& psi) const {
    std::vector<double> out(records_.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = records_[i].blip.t0(psi);
    return out;
  }

 private:
  struct Scratch {
    explicit Scratch(const ParametricModel& m) : x(static_cast<std::size_t>(m.covariate_dim())), eta(static_cast<std::size_t>(m.categories())), rates(static_cast<std::size_t>(m.log_rates.size())) {
      for (std::size_t i = 0; i < rates.size(); ++i) rates[i] = std::exp(m.log_rates[static_cast<Eigen::Index>(i)]);
    }
    std::vector<double> x, eta, rates;
  };

  double subject(const ParametricModel& m, const Record& r, Scratch& s, double* grad) const {
    const int d = m.psi_dim();
    const int nr = static_cast<int>(m.log_rates.size());
    const int q = m.covariate_dim();
    const int cats = m.categories();
    const double t0 = r.blip.t0(m.psi);
    const auto& breaks = m.baseline_breaks;
    const int piece = piece_of(breaks, t0);
    double ll = r.blip.log_jacobian(m.psi) + m.log_rates[piece];
    double dll_dt0 = -s.rates[static_cast<std::size_t>(piece)];
    double from = 0.0;
    for (int i = 0; i < nr && t0 > from; ++i) {
      const double to = i < static_cast<int>(breaks.size()) ? breaks[static_cast<std::size_t>(i)] : kInf;
      const double expo = std::min(t0, to) - from;
      ll -= s.rates[static_cast<std::size_t>(i)] * expo;
      if (grad) grad[d + i] -= s.rates[static_cast<std::size_t>(i)] * expo;
      from = to;
    }
    if (grad) grad[d + piece] += 1.0;
    const int phi = m.prognosis_rate > 0.0 ? q - 1 : -1;
    for (std::size_t k = 0; k < r.l.size(); ++k) {
      m.covariate_features(static_cast<int>(k), r.l_prev[k], r.a_prev[k], t0, s.x.data());
      double top = 0.0;
      s.eta[0] = 0.0;
      for (int c = 1; c < cats; ++c) {
        double v = 0.0;
        for (int j = 0; j < q; ++j) v += m.covariate_coef(c - 1, j) * s.x[static_cast<std::size_t>(j)];
        s.eta[static_cast<std::size_t>(c)] = v;
        top = std::max(top, v);
      }
      double sum = 0.0;
      for (int c = 0; c < cats; ++c) sum += std::exp(s.eta[static_cast<std::size_t>(c)] - top);
      const double lse = top + std::log(sum);
      const int obs = r.l[k];
      ll += s.eta[static_cast<std::size_t>(obs)] - lse;
      if (!grad) continue;
      for (int c = 1; c < cats; ++c) {
        const double resid = (c == obs ? 1.0 : 0.0) - std::exp(s.eta[static_cast<std::size_t>(c)] - lse);
        double* gb = grad + d + nr + (c - 1) * q;
        for (int j = 0; j < q; ++j) gb[j] += resid * s.x[static_cast<std::size_t>(j)];
        if (phi >= 0) dll_dt0 += resid * m.covariate_coef(c - 1, phi) * (-m.prognosis_rate) * s.x[static_cast<std::size_t>(phi)];
      }
    }
    if (!std::isfinite(ll)) throw StructuralZero("log-density is not finite for a record");
    if (grad && d > 0) {
      const Vector dt0 = r.blip.dt0_dpsi(m.psi);
      const auto& f = r.blip.features();
      for (int j = 0; j < d; ++j) grad[j] += f(f.rows() - 1, j) + dll_dt0 * dt0[j];
    }
    return ll;
  }

  ParametricModel shape_;
  int threads_;
  std::vector<Record> records_;
};

/// Closed-form rates and Newton multinomial logit for fixed psi.
class Profiler {
 public:
  explicit Profiler(const Likelihood& lik) : lik_(lik) {}

  ParametricModel profile(const ParametricModel& start, const Vector& psi) const {
    ParametricModel m = start;
    m.psi = psi;
    const std::vector<double> t0 = lik_.t0(psi);
    const auto& breaks = m.baseline_breaks;
    const std::size_t nr = breaks.size() + 1;
    std::vector<double> events(nr, 0.0), expo(nr, 0.0);
    for (double t : t0) {
      events[static_cast<std::size_t>(piece_of(breaks, t))] += 1.0;
      double from = 0.0;
      for (std::size_t i = 0; i < nr && t > from; ++i) {
        const double to = i < breaks.size() ? breaks[i] : kInf;
        expo[i] += std::min(t, to) - from;
        from = to;
      }
    }
    for (std::size_t i = 0; i < nr; ++i) {
      if (!(events[i] > 0.0) || !(expo[i] > 0.0))
        throw NonIdentifiable("baseline piece " + std::to_string(i) + " has no events on the blipped scale");
      m.log_rates[static_cast<Eigen::Index>(i)] = std::log(events[i] / expo[i]);
    }
    m.covariate_coef = multinomial(m, t0);
    return m;
  }

 private:
  Matrix multinomial(const ParametricModel& m, const std::vector<double>& t0) const {
    const int q = m.covariate_dim();
    const int cats = m.categories();
    const int dim = (cats - 1) * q;
    Matrix beta = m.covariate_coef;
    auto objective = [&](const Matrix& b, Vector* grad, Matrix* hess) {
      double ll = 0.0;
      if (grad) grad->setZero(dim);
      if (hess) hess->setZero(dim, dim);
      Vector x(q);
      std::vector<double> eta(static_cast<std::size_t>(cats)), pr(static_cast<std::size_t>(cats));
      const auto& recs = lik_.records();
      for (std::size_t i = 0; i < recs.size(); ++i) {
        const Record& r = recs[i];
        for (std::size_t k = 0; k < r.l.size(); ++k) {
          m.covariate_features(static_cast<int>(k), r.l_prev[k], r.a_prev[k], t0[i], x.data());
          double top = 0.0;
          eta[0] = 0.0;
          for (int c = 1; c < cats; ++c) top = std::max(top, eta[static_cast<std::size_t>(c)] = b.row(c - 1).dot(x));
          double sum = 0.0;
          for (int c = 0; c < cats; ++c) sum += (pr[static_cast<std::size_t>(c)] = std::exp(eta[static_cast<std::size_t>(c)] - top));
          for (double& p : pr) p /= sum;
          const int obs = r.l[k];
          ll += eta[static_cast<std::size_t>(obs)] - top - std::log(sum);
          if (grad)
            for (int c = 1; c < cats; ++c)
              grad->segment((c - 1) * q, q) += ((c == obs ? 1.0 : 0.0) - pr[static_cast<std::size_t>(c)]) * x;
          if (hess) {
            const Matrix xx = x * x.transpose();
            for (int c = 1; c < cats; ++c)
              for (int e = 1; e < cats; ++e) {
                const double w = pr[static_cast<std::size_t>(c)] * ((c == e ? 1.0 : 0.0) - pr[static_cast<std::size_t>(e)]);
                hess->block((c - 1) * q, (e - 1) * q, q, q) -= w * xx;
              }
          }
        }
      }
      return ll;
    };
    Vector grad;
    Matrix hess;
    double ll = objective(beta, &grad, &hess);
    for (int it = 0; it < 100; ++it) {
      if (grad.lpNorm<Eigen::Infinity>() < 1e-10) return beta;
      Eigen::LDLT<Matrix> ldlt(-hess);
      if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
          ldlt.vectorD().minCoeff() <= 1e-10 * ldlt.vectorD().maxCoeff())
        throw NonIdentifiable("covariate model information is singular; the cohort does not identify its coefficients");
      const Vector step = ldlt.solve(grad);
      double scale = 1.0;
      Matrix cand;
      double llc = 0.0;
      for (int h = 0; h < 40; ++h, scale *= 0.5) {
        cand = beta + scale * step.reshaped<Eigen::RowMajor>(cats - 1, q);
        llc = objective(cand, nullptr, nullptr);
        if (llc >= ll - 1e-12 * std::abs(ll)) break;
      }
      const bool floor = (scale * step).lpNorm<Eigen::Infinity>() < 1e-13 * (1.0 + beta.lpNorm<Eigen::Infinity>());
      beta = cand;
      ll = objective(beta, &grad, &hess);
      if (floor) return beta;
    }
    throw ConvergenceError("covariate-model Newton did not converge", beta.reshaped<Eigen::RowMajor>());
  }

  const Likelihood& lik_;
};

/// Nelder-Mead minimizer.
Vector nelder_mead(const std::function<double(const Vector&)>& f, Vector x0, double step, int max_evals, int* evals) {
  const auto n = x0.size();
  std::vector<Vector> pts(static_cast<std::size_t>(n) + 1, x0);
  std::vector<double> val(pts.size());
  for (Eigen::Index i = 0; i < n; ++i) pts[static_cast<std::size_t>(i) + 1][i] += step;
  for (std::size_t i = 0; i < pts.size(); ++i) val[i] = f(pts[i]), ++*evals;
  std::vector<std::size_t> order(pts.size());
  while (*evals < max_evals) {
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return val[a] < val[b]; });
    const std::size_t best = order.front(), worst = order.back(), second = order[order.size() - 2];
    double size = 0.0;
    for (const auto& p : pts) size = std::max(size, (p - pts[best]).lpNorm<Eigen::Infinity>());
    if (val[worst] - val[best] < 1e-10 * (1.0 + std::abs(val[best])) && size < 1e-7) break;
    Vector centroid = Vector::Zero(n);
    for (std::size_t i = 0; i < pts.size(); ++i)
      if (i != worst) centroid += pts[i];
    centroid /= static_cast<double>(n);
    const Vector xr = centroid + (centroid - pts[worst]);
    const double fr = f(xr);
    ++*evals;
    if (fr < val[best]) {
      const Vector xe = centroid + 2.0 * (centroid - pts[worst]);
      const double fe = f(xe);
      ++*evals;
      if (fe < fr) pts[worst] = xe, val[worst] = fe;
      else pts[worst] = xr, val[worst] = fr;
    } else if (fr < val[second]) {
      pts[worst] = xr, val[worst] = fr;
    } else {
      const bool outside = fr < val[worst];
      const Vector xc = outside ? Vector(centroid + 0.5 * (xr - centroid)) : Vector(centroid + 0.5 * (pts[worst] - centroid));
      const double fc = f(xc);
      ++*evals;
      if (fc < (outside ? fr : val[worst])) {
        pts[worst] = xc, val[worst] = fc;
      } else {
        for (std::size_t i = 0; i < pts.size(); ++i) {
          if (i == best) continue;
          pts[i] = pts[best] + 0.5 * (pts[i] - pts[best]);
          val[i] = f(pts[i]);
          ++*evals;
        }
      }
    }
  }
  return pts[static_cast<std::size_t>(std::min_element(val.begin(), val.end()) - val.begin())];
}

Matrix fd_hessian(const Likelihood& lik, const Vector& theta) {
  const auto n = theta.size();
  Matrix h(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double step = 1e-5 * std::max(1.0, std::abs(theta[j]));
    Vector up = theta, dn = theta, gu, gd;
    up[j] += step;
    dn[j] -= step;
    lik.eval(up, &gu);
    lik.eval(dn, &gd);
    h.col(j) = (gu - gd) / (2.0 * step);
  }
  return 0.5 * (h + h.transpose());
}

}  // namespace

LogDensityTerms log_density_terms(const ParametricModel& model, const Trajectory& traj) {
  validate_trajectory(traj, model.grid, model.alphabets);
  const ShiftModel sm = model.shift_model();
  const RecordBlip blip(sm, traj);
  LogDensityTerms out;
  out.t0 = blip.t0(model.psi);
  out.jacobian = blip.log_jacobian(model.psi);
  const SurvivalCurve base = model.baseline();
  const int piece = piece_of(model.baseline_breaks, out.t0);
  out.baseline = model.log_rates[piece] - base.cumulative_hazard(out.t0);
  for (int k = 0; k <= traj.last_visit(); ++k) {
    const auto ku = static_cast<std::size_t>(k);
    const auto p = model.covariate_probs(k, k > 0 ? traj.covariates[ku - 1] : 0, k > 0 ? traj.treatments[ku - 1] : 0,
                                         out.t0);
    const double pk = p[static_cast<std::size_t>(traj.covariates[ku])];
    if (!(pk > 0.0)) throw StructuralZero("covariate value has probability 0 at visit " + std::to_string(k));
    out.covariates += std::log(pk);
  }
  return out;
}

double log_density(const ParametricModel& model, const Trajectory& traj) { return log_density_terms(model, traj).total(); }

double log_likelihood(const Cohort& cohort, const ParametricModel& model, int threads) {
  model.validate();
  return Likelihood(cohort, model, threads).eval(model.pack(), nullptr);
}

Vector log_likelihood_gradient(const Cohort& cohort, const ParametricModel& model, int threads) {
  model.validate();
  Vector g;
  Likelihood(cohort, model, threads).eval(model.pack(), &g);
  return g;
}

MleFit fit_mle(const Cohort& cohort, const ParametricModel& init, const MleOptions& opt) {
  init.validate();
  cohort.validate();
  const Likelihood lik(cohort, init, opt.threads);
  const int d = init.psi_dim();
  if (!opt.fix_psi) {
    for (int j = 0; j < d; ++j) {
      bool any = false;
      for (const auto& r : lik.records()) any = any || r.blip.features().col(j).cwiseAbs().maxCoeff() > 0.0;
      if (!any)
        throw NonIdentifiable("shift feature '" + init.shift_features[static_cast<std::size_t>(j)] +
                              "' is zero for every record");
    }
  }
  const Profiler prof(lik);
  MleFit out{init, 0.0, Vector(), Matrix(), Matrix(), Vector(), false, 0, 0};
  out.psi_fixed = opt.fix_psi;

  ParametricModel start = prof.profile(init, init.psi);
  if (!opt.fix_psi && d > 0) {
    ParametricModel warm = start;
    auto negprof = [&](const Vector& psi) {
      try {
        warm = prof.profile(warm, psi);
        return -lik.eval(warm.pack(), nullptr);
      } catch (const NonIdentifiable&) {
        return kInf;
      } catch (const ConvergenceError&) {
        return kInf;
      }
    };
    Vector psi = nelder_mead(negprof, init.psi, 0.1, opt.max_simplex_evals, &out.simplex_evals);
    psi = nelder_mead(negprof, psi, 0.02, opt.max_simplex_evals, &out.simplex_evals);
    start = prof.profile(start, psi);
  }

  // Newton polish on all free parameters with a finite-difference Hessian.
  const int off = opt.fix_psi ? d : 0;
  Vector theta = start.pack();
  const auto nfree = theta.size() - off;
  Vector grad;
  double ll = lik.eval(theta, &grad);
  Vector best = theta;
  int it = 0;
  for (; grad.tail(nfree).lpNorm<Eigen::Infinity>() >= opt.grad_tol; ++it) {
    if (it >= opt.max_newton) throw ConvergenceError("likelihood Newton iterations exhausted", best);
    const Matrix h = fd_hessian(lik, theta).bottomRightCorner(nfree, nfree);
    Eigen::LDLT<Matrix> ldlt(-h);
    Vector step;
    if (ldlt.info() == Eigen::Success && ldlt.isPositive() && ldlt.vectorD().minCoeff() > 0.0) {
      step = ldlt.solve(grad.tail(nfree));
    } else {
      const double lam = 1e-3 * (-h).diagonal().cwiseAbs().maxCoeff() + 1e-8;
      step = (Matrix(-h) + lam * Matrix::Identity(nfree, nfree)).ldlt().solve(grad.tail(nfree));
    }
    double scale = 1.0;
    Vector cand, gc;
    double llc = -kInf;
    for (int hh = 0; hh < 40; ++hh, scale *= 0.5) {
      cand = theta;
      cand.tail(nfree) += scale * step;
      llc = lik.eval(cand, &gc);
      if (llc >= ll - 1e-12 * std::abs(ll)) break;
    }
    if (!(llc >= ll - 1e-12 * std::abs(ll)) || (scale * step).lpNorm<Eigen::Infinity>() < 1e-15) {
      if (grad.tail(nfree).lpNorm<Eigen::Infinity>() < 1e3 * opt.grad_tol) break;
      throw ConvergenceError("likelihood line search failed", best);
    }
    theta = cand;
    grad = gc;
    ll = llc;
    best = theta;
  }
  out.newton_iterations = it;
  out.model = init.unpack(theta);
  out.loglik = ll;
  out.gradient = grad;
  out.information = -fd_hessian(lik, theta);
  const Matrix info_free = out.information.bottomRightCorner(nfree, nfree);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(info_free);
  if (!(eig.eigenvalues().minCoeff() > 1e-10 * eig.eigenvalues().cwiseAbs().maxCoeff()))
    throw NonIdentifiable("observed information is singular at the fit");
  out.covariance = Matrix::Zero(theta.size(), theta.size());
  out.covariance.bottomRightCorner(nfree, nfree) = info_free.inverse();
  out.se = out.covariance.diagonal().cwiseSqrt();
  return out;
}

NullTestReport test_null(const MleFit& full, const MleFit& restricted) {
  const int d = full.model.psi_dim();
  if (d == 0 || full.psi_fixed || !restricted.psi_fixed || restricted.model.psi.lpNorm<Eigen::Infinity>() != 0.0)
    throw ConfigError("test_null needs an unrestricted fit and a fit with psi fixed at 0");
  NullTestReport out;
  out.df = d;
  const double lr = 2.0 * (full.loglik - restricted.loglik);
  if (lr < -1e-8)
    throw OptimizationFailure("likelihood ratio is negative (" + std::to_string(lr) +
                              "); the unrestricted fit is not a maximum");
  out.lr = std::max(0.0, lr);
  out.lr_p = chi2_sf(out.lr, d);
  const Vector psi = full.model.psi;
  const Matrix cov = full.covariance.topLeftCorner(d, d);
  out.wald = psi.dot(cov.ldlt().solve(psi));
  out.wald_p = chi2_sf(out.wald, d);
  const Vector u = restricted.gradient.head(d);
  const Matrix inv = restricted.information.inverse();
  out.score = u.dot(inv.topLeftCorner(d, d) * u);
  out.score_p = chi2_sf(out.score, d);
  return out;
}

}  // namespace snftm
