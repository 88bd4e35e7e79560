#include "snftm/gest.hpp"

#include <algorithm>
#include <cmath>

#include "snftm/parallel.hpp"
#include "snftm/stats.hpp"

namespace snftm {

namespace {

const std::vector<std::string> kFFeatures{"intercept", "k", "l", "l_prev", "a_prev"};
const std::vector<std::string> kGTerms{"1", "k", "l", "a_prev"};

double history_term(const std::string& name, int k, const Trajectory& s) {
  const auto ku = static_cast<std::size_t>(k);
  if (name == "intercept" || name == "1") return 1.0;
  if (name == "k") return k;
  if (name == "l") return s.covariates[ku];
  if (name == "l_prev") return k > 0 ? s.covariates[ku - 1] : 0.0;
  return k > 0 ? s.treatments[ku - 1] : 0.0;  // a_prev
}

double log1pexp(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double expit(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double loglik_of(const Matrix& x, const Vector& y, const Vector& beta) {
  const Vector eta = x * beta;
  double ll = 0.0;
  for (Eigen::Index r = 0; r < eta.size(); ++r) ll += y[r] * eta[r] - log1pexp(eta[r]);
  return ll;
}

Matrix weighted_gram(const Matrix& a, const Vector& w, const Matrix& b) { return a.transpose() * w.asDiagonal() * b; }

}  // namespace

void TreatmentModelSpec::validate() const {
  if (f_features.empty()) throw ConfigError("treatment model needs at least one f feature");
  for (const auto& f : f_features)
    if (std::find(kFFeatures.begin(), kFFeatures.end(), f) == kFFeatures.end())
      throw ConfigError("unknown treatment-model feature '" + f + "'");
  if (g_terms.empty()) throw ConfigError("treatment model needs at least one g term");
  for (const auto& g : g_terms)
    if (std::find(kGTerms.begin(), kGTerms.end(), g) == kGTerms.end())
      throw ConfigError("unknown g term '" + g + "'");
  if (g_transform != "identity" && g_transform != "log") throw ConfigError("g_transform must be identity or log");
  if (!(clip_lo < clip_hi)) throw ConfigError("clip range must satisfy clip_lo < clip_hi");
  if (g_transform == "log" && !(clip_lo > 0.0)) throw ConfigError("log transform needs clip_lo > 0");
}

double TreatmentModelSpec::transform(double t0) const {
  const double c = std::clamp(t0, clip_lo, clip_hi);
  return g_transform == "log" ? std::log(c) : c;
}

LogisticFit fit_logistic(const Matrix& x, const Vector& y, double tol, int max_iter) {
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  if (n == 0 || y.size() != n) throw DomainError("fit_logistic: empty or mismatched design");
  const double ones = y.sum();
  if (ones == 0.0 || ones == static_cast<double>(n))
    throw SeparationError("treatment takes a single value in every record; the logistic fit diverges");
  Eigen::ColPivHouseholderQR<Matrix> qr(x);
  if (qr.rank() < d)
    throw RankDeficient("treatment-model design has rank " + std::to_string(qr.rank()) + " < " + std::to_string(d));

  Vector beta = Vector::Zero(d);
  double ll = loglik_of(x, y, beta);
  LogisticFit out;
  for (int it = 1; it <= max_iter; ++it) {
    const Vector eta = x * beta;
    const Vector p = eta.unaryExpr(&expit);
    const Vector w = (p.array() * (1.0 - p.array())).matrix();
    const Vector score = x.transpose() * (y - p);
    const Matrix info = weighted_gram(x, w, x);
    Eigen::LDLT<Matrix> ldlt(info);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
      throw SeparationError("fitted probabilities reached 0 or 1; the data are (quasi-)separated");
    if (score.lpNorm<Eigen::Infinity>() < tol) {
      out.coef = beta;
      out.covariance = ldlt.solve(Matrix::Identity(d, d));
      out.loglik = ll;
      out.iterations = it - 1;
      return out;
    }
    Vector step = ldlt.solve(score);
    double scale = 1.0;
    double ll_new = loglik_of(x, y, beta + step);
    for (int h = 0; h < 40 && !(ll_new >= ll - 1e-12 * std::abs(ll)); ++h) {
      scale *= 0.5;
      ll_new = loglik_of(x, y, beta + scale * step);
    }
    beta += scale * step;
    ll = ll_new;
    if (beta.lpNorm<Eigen::Infinity>() > 50.0)
      throw SeparationError("logistic coefficients diverge (max |coef| > 50); the data are (quasi-)separated");
    // Steps at the rounding floor: the score cannot shrink further.
    if ((scale * step).lpNorm<Eigen::Infinity>() < 1e-13 * (1.0 + beta.lpNorm<Eigen::Infinity>())) {
      const Vector p2 = (x * beta).unaryExpr(&expit);
      const Vector w2 = (p2.array() * (1.0 - p2.array())).matrix();
      out.coef = beta;
      out.covariance = weighted_gram(x, w2, x).ldlt().solve(Matrix::Identity(d, d));
      out.loglik = ll;
      out.iterations = it;
      return out;
    }
  }
  throw ConvergenceError("logistic Newton-Raphson did not converge", beta);
}

GEstimation::GEstimation(const Cohort& cohort, TreatmentModelSpec spec, const ShiftModel& model)
    : spec_(std::move(spec)) {
  if (!(model.grid() == cohort.grid)) throw ConfigError("shift model grid differs from the cohort grid");
  std::vector<RecordBlip> blips;
  blips.reserve(cohort.subjects.size());
  for (const auto& s : cohort.subjects) blips.emplace_back(model, s);
  blips_ = std::move(blips);
  build(cohort);
}

GEstimation::GEstimation(const Cohort& cohort, TreatmentModelSpec spec) : spec_(std::move(spec)) { build(cohort); }

void GEstimation::build(const Cohort& cohort) {
  spec_.validate();
  if (!cohort.alphabets.binary_treatment())
    throw ConfigError("G-estimation supports binary treatments only");
  if (cohort.subjects.empty()) throw DomainError("G-estimation needs a non-empty cohort");
  std::size_t rows = 0;
  for (const auto& s : cohort.subjects) rows += static_cast<std::size_t>(s.last_visit()) + 1;
  const auto r = static_cast<Eigen::Index>(rows);
  f_.resize(r, spec_.theta_dim());
  terms_.resize(r, spec_.alpha_dim());
  y_.resize(r);
  subject_.resize(rows);
  subject_time_.resize(cohort.subjects.size());
  Eigen::Index row = 0;
  for (std::size_t i = 0; i < cohort.subjects.size(); ++i) {
    const auto& s = cohort.subjects[i];
    subject_time_[i] = s.event_time;
    for (int k = 0; k <= s.last_visit(); ++k, ++row) {
      subject_[static_cast<std::size_t>(row)] = i;
      y_[row] = s.treatments[static_cast<std::size_t>(k)];
      for (int j = 0; j < spec_.theta_dim(); ++j)
        f_(row, j) = history_term(spec_.f_features[static_cast<std::size_t>(j)], k, s);
      for (int j = 0; j < spec_.alpha_dim(); ++j)
        terms_(row, j) = history_term(spec_.g_terms[static_cast<std::size_t>(j)], k, s);
    }
  }
  restricted_ = fit_logistic(f_, y_);
  p_ = (f_ * restricted_.coef).unaryExpr(&expit);
}

int GEstimation::psi_dim() const { return blips_ ? static_cast<int>(blips_->front().features().cols()) : 0; }

std::vector<double> GEstimation::blipped_times(const Vector& psi) const {
  if (!blips_) return subject_time_;
  if (psi.size() != psi_dim()) throw ConfigError("psi has the wrong dimension for the shift model");
  std::vector<double> t0(blips_->size());
  for (std::size_t i = 0; i < t0.size(); ++i) t0[i] = (*blips_)[i].t0(psi);
  return t0;
}

Matrix GEstimation::g_design(const std::vector<double>& t0) const {
  Matrix g = terms_;
  for (Eigen::Index r = 0; r < g.rows(); ++r) g.row(r) *= spec_.transform(t0[subject_[static_cast<std::size_t>(r)]]);
  return g;
}

GEstimation::Parts GEstimation::parts(const Vector& psi) const {
  Parts out;
  out.g = g_design(blipped_times(psi));
  const Vector w = (p_.array() * (1.0 - p_.array())).matrix();
  out.u = out.g.transpose() * (y_ - p_);
  const Matrix itt = weighted_gram(f_, w, f_);
  const Matrix iat = weighted_gram(out.g, w, f_);
  out.gamma = itt.ldlt().solve(iat.transpose()).transpose();
  out.v = weighted_gram(out.g, w, out.g) - out.gamma * iat.transpose();
  return out;
}

Vector GEstimation::score(const Vector& psi) const { return parts(psi).u; }

double GEstimation::score_statistic(const Vector& psi) const {
  const Parts pr = parts(psi);
  Eigen::LDLT<Matrix> ldlt(pr.v);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || ldlt.vectorD().minCoeff() <= 1e-12 * pr.v.trace())
    throw RankDeficient("g features are collinear with the f features at this psi");
  return pr.u.dot(ldlt.solve(pr.u));
}

Matrix GEstimation::contributions(const Vector& psi) const {
  const Parts pr = parts(psi);
  const Vector r = y_ - p_;
  const Matrix resid = pr.g - f_ * pr.gamma.transpose();
  Matrix h = Matrix::Zero(static_cast<Eigen::Index>(subjects()), spec_.alpha_dim());
  for (Eigen::Index row = 0; row < resid.rows(); ++row)
    h.row(static_cast<Eigen::Index>(subject_[static_cast<std::size_t>(row)])) += r[row] * resid.row(row);
  return h;
}

TreatmentFit GEstimation::fit(const Vector& psi) const {
  const Matrix g = g_design(blipped_times(psi));
  Matrix x(f_.rows(), f_.cols() + g.cols());
  x << f_, g;
  const LogisticFit lf = fit_logistic(x, y_);
  TreatmentFit out;
  out.theta = lf.coef.head(f_.cols());
  out.alpha = lf.coef.tail(g.cols());
  out.covariance = lf.covariance;
  out.loglik = lf.loglik;
  out.records = static_cast<int>(records());
  return out;
}

GTestReport GEstimation::test(const Vector& psi) const {
  const TreatmentFit tf = fit(psi);
  const int d = spec_.alpha_dim();
  const Matrix cov = tf.covariance.bottomRightCorner(d, d);
  GTestReport out;
  out.alpha = tf.alpha;
  out.alpha_se = cov.diagonal().cwiseSqrt();
  out.df = d;
  out.records = tf.records;
  out.wald = tf.alpha.dot(cov.ldlt().solve(tf.alpha));
  out.wald_p = chi2_sf(out.wald, d);
  out.score = score_statistic(psi);
  out.score_p = chi2_sf(out.score, d);
  return out;
}

TreatmentFit fit_treatment_model(const Cohort& cohort, const TreatmentModelSpec& spec, const ShiftModel& model) {
  return GEstimation(cohort, spec, model).fit(model.psi());
}

GTestReport g_test(const Cohort& cohort, const TreatmentModelSpec& spec, const ShiftModel& candidate) {
  return GEstimation(cohort, spec, candidate).test(candidate.psi());
}

GTestReport g_null_test(const Cohort& cohort, const TreatmentModelSpec& spec) {
  return GEstimation(cohort, spec).test(Vector());
}

SandwichResult sandwich_variance(const GEstimation& est, const Vector& psi, double fd_step) {
  const int d = static_cast<int>(psi.size());
  if (d != est.spec().alpha_dim()) throw ConfigError("sandwich variance needs dim(alpha) = dim(psi)");
  const double n = static_cast<double>(est.subjects());
  SandwichResult out;
  const Matrix h = est.contributions(psi);
  out.mean_h = h.colwise().mean().transpose();
  out.meat = h.transpose() * h / n;
  out.derivative.resize(d, d);
  for (int j = 0; j < d; ++j) {
    const double step = fd_step * std::max(1.0, std::abs(psi[j]));
    Vector up = psi, dn = psi;
    up[j] += step;
    dn[j] -= step;
    out.derivative.col(j) = (est.score(up) - est.score(dn)) / (2.0 * step * n);
  }
  Eigen::JacobiSVD<Matrix> svd(out.derivative);
  const double smin = svd.singularValues().minCoeff();
  if (!out.derivative.allFinite() || !(smin > 1e-8 * std::sqrt(out.meat.diagonal().maxCoeff())))
    throw WeakIdentification("derivative of the mean estimating function is near zero (smallest singular value " +
                             std::to_string(smin) + ")");
  const Matrix dinv = out.derivative.inverse();
  out.variance = dinv * out.meat * dinv.transpose() / n;
  out.se = out.variance.diagonal().cwiseSqrt();
  return out;
}

namespace {

std::vector<Vector> box_grid(const SearchBox& box, const EstimateOptions& opt) {
  std::vector<std::vector<double>> axes;
  for (const auto& [lo, hi] : box.ranges) {
    if (!(lo < hi)) throw ConfigError("search box ranges need lo < hi");
    const double width = hi - lo;
    int steps = static_cast<int>(std::llround(width / opt.pitch));
    if (box.dim() > 1) steps = std::min(steps, opt.max_points_per_dim - 1);
    steps = std::max(steps, 1);
    std::vector<double> axis;
    for (int i = 0; i <= steps; ++i) axis.push_back(i == steps ? hi : lo + width * i / steps);
    axes.push_back(std::move(axis));
  }
  std::vector<Vector> grid;
  std::vector<std::size_t> idx(axes.size(), 0);
  while (true) {
    Vector p(static_cast<Eigen::Index>(axes.size()));
    for (std::size_t j = 0; j < axes.size(); ++j) p[static_cast<Eigen::Index>(j)] = axes[j][idx[j]];
    grid.push_back(std::move(p));
    std::size_t j = axes.size();
    while (j > 0) {
      --j;
      if (++idx[j] < axes[j].size()) break;
      idx[j] = 0;
      if (j == 0) return grid;
    }
  }
}

Vector bisect(const GEstimation& est, double lo, double hi, double flo) {
  for (int it = 0; it < 200 && hi - lo > 1e-13 * std::max(1.0, std::abs(lo)); ++it) {
    const double mid = 0.5 * (lo + hi);
    const double fm = est.score(Vector::Constant(1, mid))[0];
    if (fm == 0.0) return Vector::Constant(1, mid);
    if ((fm < 0.0) == (flo < 0.0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return Vector::Constant(1, 0.5 * (lo + hi));
}

Vector newton_root(const GEstimation& est, Vector psi, const EstimateOptions& opt) {
  const int d = static_cast<int>(psi.size());
  Vector u = est.score(psi);
  for (int it = 0; it < 60; ++it) {
    if (est.fit(psi).alpha.norm() < opt.root_tol) return psi;
    Matrix jac(d, d);
    for (int j = 0; j < d; ++j) {
      const double step = opt.fd_step * std::max(1.0, std::abs(psi[j]));
      Vector up = psi, dn = psi;
      up[j] += step;
      dn[j] -= step;
      jac.col(j) = (est.score(up) - est.score(dn)) / (2.0 * step);
    }
    const Vector delta = jac.fullPivLu().solve(-u);
    double scale = 1.0;
    Vector cand = psi + delta;
    Vector uc = est.score(cand);
    for (int h = 0; h < 30 && !(uc.norm() < u.norm()); ++h) {
      scale *= 0.5;
      cand = psi + scale * delta;
      uc = est.score(cand);
    }
    psi = cand;
    u = uc;
  }
  if (est.fit(psi).alpha.norm() < opt.root_tol) return psi;
  throw ConvergenceError("root search for alpha-hat(psi) = 0 did not converge", psi);
}

}  // namespace

PsiEstimate estimate_psi(const GEstimation& est, const SearchBox& box, const EstimateOptions& opt) {
  const int d = box.dim();
  if (d < 1 || d != est.psi_dim()) throw ConfigError("search box dimension must match the shift model");
  if (d != est.spec().alpha_dim()) throw ConfigError("G-estimation needs dim(alpha) = dim(psi)");
  if (!(opt.pitch > 0.0)) throw ConfigError("grid pitch must be positive");

  PsiEstimate out;
  out.grid = box_grid(box, opt);
  const std::size_t m = out.grid.size();
  std::vector<Vector> scores(m);
  out.grid_p.assign(m, 0.0);
  parallel_chunks(m, opt.threads, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      scores[i] = est.score(out.grid[i]);
      out.grid_p[i] = chi2_sf(est.score_statistic(out.grid[i]), d);
    }
  });
  out.accepted.resize(m);
  for (std::size_t i = 0; i < m; ++i) out.accepted[i] = out.grid_p[i] > opt.level;

  if (d == 1) {
    for (std::size_t i = 0; i < m; ++i) {
      const double u = scores[i][0];
      if (u == 0.0) {
        out.roots.push_back(out.grid[i]);
      } else if (i + 1 < m && scores[i + 1][0] != 0.0 && (u < 0.0) != (scores[i + 1][0] < 0.0)) {
        out.roots.push_back(bisect(est, out.grid[i][0], out.grid[i + 1][0], u));
      }
    }
    if (out.roots.empty())
      throw BracketError("alpha-hat(psi) has no sign change on [" + std::to_string(box.ranges[0].first) + ", " +
                         std::to_string(box.ranges[0].second) + "]");
  } else {
    std::size_t best = 0;
    for (std::size_t i = 1; i < m; ++i)
      if (out.grid_p[i] > out.grid_p[best]) best = i;
    out.roots.push_back(newton_root(est, out.grid[best], opt));
    for (int j = 0; j < d; ++j) {
      const auto [lo, hi] = box.ranges[static_cast<std::size_t>(j)];
      if (out.roots[0][j] < lo || out.roots[0][j] > hi) throw BracketError("root lies outside the search box");
    }
  }
  out.multiple_roots = out.roots.size() > 1;
  out.psi = out.roots.front();
  out.alpha_at_psi = est.fit(out.psi).alpha;
  if (!(out.alpha_at_psi.norm() < opt.root_tol))
    throw ConvergenceError("alpha-hat at the bracketed root exceeds the tolerance", out.psi);
  out.sandwich = sandwich_variance(est, out.psi, opt.fd_step);

  out.ci.assign(static_cast<std::size_t>(d), {kInf, -kInf});
  for (std::size_t i = 0; i < m; ++i) {
    if (!out.accepted[i]) continue;
    for (int j = 0; j < d; ++j) {
      auto& [lo, hi] = out.ci[static_cast<std::size_t>(j)];
      lo = std::min(lo, out.grid[i][j]);
      hi = std::max(hi, out.grid[i][j]);
      const auto [blo, bhi] = box.ranges[static_cast<std::size_t>(j)];
      if (out.grid[i][j] == blo || out.grid[i][j] == bhi) out.ci_touches_box = true;
    }
  }
  if (opt.trace) {
    out.alpha_trace.resize(m);
    parallel_chunks(m, opt.threads, [&](std::size_t lo, std::size_t hi) {
      for (std::size_t i = lo; i < hi; ++i) out.alpha_trace[i] = est.fit(out.grid[i]).alpha;
    });
  }
  return out;
}

}  // namespace snftm
