#include "raat/theory.hpp"

#include <array>
#include <cmath>
#include <sstream>

namespace raat {

Vector sample_mean_classifier(const Batch& x, const Labels& y) {
  if (x.rows() == 0) throw ValidationError("sample mean needs at least one example");
  if (static_cast<Index>(y.size()) != x.rows()) throw InputContractError("label count mismatch");
  Vector w = Vector::Zero(x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    const int yi = y[static_cast<std::size_t>(i)];
    if (yi != 1 && yi != -1) throw ValidationError("Gaussian-model labels must be -1 or +1");
    w += yi * x.row(i).transpose();
  }
  return w;
}

Vector cr_estimator(const Vector& base, const Batch& unlabeled) {
  if (unlabeled.rows() == 0) throw ValidationError("CR estimator needs unlabeled points");
  if (unlabeled.cols() != base.size()) throw InputContractError("dimension mismatch");
  if (base.isZero(0.0)) throw ValidationError("CR estimator needs a nonzero base classifier");
  Vector w = Vector::Zero(base.size());
  for (Index i = 0; i < unlabeled.rows(); ++i) {
    const double score = unlabeled.row(i).dot(base);
    w += (score >= 0.0 ? 1.0 : -1.0) * unlabeled.row(i).transpose();
  }
  return w;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

namespace {

void check_linear(const Vector& w, const Vector& theta, double sigma) {
  if (w.size() != theta.size()) throw InputContractError("dimension mismatch");
  if (w.isZero(0.0)) throw ValidationError("error formulas need w != 0");
  if (!(sigma > 0.0)) throw ValidationError("sigma must be > 0");
}

// sigma = 0: x = y theta exactly, so the error is an indicator of the margin.
double degenerate_error(const Vector& w, const Vector& theta, double epsilon) {
  const double margin = w.dot(theta) - epsilon * w.lpNorm<1>();
  if (margin > 0.0) return 0.0;
  if (margin < 0.0) return 1.0;
  return 0.5;
}

}  // namespace

double analytic_standard_error(const Vector& w, const Vector& theta, double sigma) {
  return analytic_robust_error(w, theta, sigma, 0.0);
}

double analytic_robust_error(const Vector& w, const Vector& theta, double sigma, double epsilon) {
  check_linear(w, theta, sigma);
  if (!(epsilon >= 0.0)) throw ValidationError("epsilon must be >= 0");
  return normal_cdf(-(w.dot(theta) - epsilon * w.lpNorm<1>()) / (sigma * w.norm()));
}

double monte_carlo_error(const Vector& w, const GaussianModelSpec& spec, double epsilon, Index n,
                         Rng& rng) {
  check_linear(w, spec.theta, spec.sigma);
  const GaussianSample s = sample_gaussian_model(spec, n, rng);
  const double slack = epsilon * w.lpNorm<1>();
  Index errors = 0;
  for (Index i = 0; i < n; ++i) {
    const double signed_score = s.y[static_cast<std::size_t>(i)] * s.x.row(i).dot(w);
    errors += signed_score - slack <= 0.0;
  }
  return double(errors) / double(n);
}

void SweepConfig::validate() const {
  if (dims.empty()) throw ConfigError("sweep needs at least one dimension");
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (dims[i] < 1) throw ConfigError("sweep dimensions must be >= 1");
    if (i > 0 && dims[i] <= dims[i - 1]) throw ConfigError("sweep dimensions must ascend");
  }
  if (labeled < 1) throw ConfigError("sweep needs n >= 1");
  if (!(m_constant > 0.0)) throw ConfigError("m constant must be > 0");
  if (!(epsilon >= 0.0)) throw ConfigError("epsilon must be >= 0");
  if (trials < 1) throw ConfigError("trials must be >= 1");
  if (!(sigma_scale > 0.0)) throw ConfigError("sigma scale must be > 0");
  if (sigma && !(*sigma >= 0.0)) throw ConfigError("sigma must be >= 0");
}

std::vector<SweepRow> complexity_sweep(const SweepConfig& cfg) {
  cfg.validate();
  std::vector<SweepRow> rows;
  for (int d : cfg.dims) {
    SweepRow row;
    row.d = d;
    row.m = static_cast<int>(std::ceil(cfg.m_constant * std::sqrt(double(d))));
    const double sigma = cfg.sigma ? *cfg.sigma : cfg.sigma_scale * std::pow(double(d), 0.25);
    const Vector theta = Vector::Ones(d);
    if (sigma == 0.0) {
      const Vector w = cfg.labeled * theta;
      row.std_err = degenerate_error(w, theta, 0.0);
      row.rob_err = degenerate_error(w, theta, cfg.epsilon);
      row.cr_rob_err = degenerate_error(row.m * theta, theta, cfg.epsilon);
      rows.push_back(row);
      continue;
    }
    const GaussianModelSpec spec{theta, sigma};
    for (int t = 0; t < cfg.trials; ++t) {
      Rng rng = substream(cfg.seed, "sweep", static_cast<std::uint64_t>(d),
                          static_cast<std::uint64_t>(t));
      const GaussianSample labeled = sample_gaussian_model(spec, cfg.labeled, rng);
      const Vector w = sample_mean_classifier(labeled.x, labeled.y);
      row.std_err += analytic_standard_error(w, theta, sigma);
      row.rob_err += analytic_robust_error(w, theta, sigma, cfg.epsilon);
      const GaussianSample unlabeled = sample_gaussian_model(spec, row.m, rng);
      const Vector w_cr = cr_estimator(w, unlabeled.x);
      row.cr_rob_err += analytic_robust_error(w_cr, theta, sigma, cfg.epsilon);
    }
    row.std_err /= cfg.trials;
    row.rob_err /= cfg.trials;
    row.cr_rob_err /= cfg.trials;
    rows.push_back(row);
  }
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out.precision(10);
  out << "d,std_err,rob_err,cr_rob_err,m\n";
  for (const auto& r : rows) {
    out << r.d << ',' << r.std_err << ',' << r.rob_err << ',' << r.cr_rob_err << ',' << r.m << '\n';
  }
  return out.str();
}

int PolynomialModel::degree() const {
  if (!t.empty()) return 3;
  if (h.size() > 0) return 2;
  return 1;
}

void PolynomialModel::validate() const {
  const Index d = dim();
  if (d < 1) throw ValidationError("polynomial needs d >= 1");
  if (h.size() > 0 && (h.rows() != d || h.cols() != d)) {
    throw ValidationError("Hessian shape does not match the gradient");
  }
  const auto sym_tol = [](double a, double b) {
    return std::abs(a - b) <= 1e-12 * std::max({1.0, std::abs(a), std::abs(b)});
  };
  for (Index i = 0; i < h.rows(); ++i)
    for (Index j = 0; j < i; ++j)
      if (!sym_tol(h(i, j), h(j, i))) throw ValidationError("Hessian is not symmetric");
  if (!t.empty()) {
    if (static_cast<Index>(t.size()) != d * d * d) throw ValidationError("third-order tensor size");
    const auto at = [&](Index i, Index j, Index k) {
      return t[static_cast<std::size_t>((i * d + j) * d + k)];
    };
    for (Index i = 0; i < d; ++i)
      for (Index j = 0; j < d; ++j)
        for (Index k = 0; k < d; ++k) {
          const double v = at(i, j, k);
          if (!sym_tol(v, at(j, i, k)) || !sym_tol(v, at(i, k, j)) || !sym_tol(v, at(k, j, i))) {
            throw ValidationError("third-order tensor is not symmetric");
          }
        }
  }
}

double PolynomialModel::value(const Vector& x) const {
  if (x.size() != dim()) throw InputContractError("dimension mismatch");
  double f = c0 + g.dot(x);
  if (h.size() > 0) f += 0.5 * x.dot(h * x);
  if (!t.empty()) f += kron_power(x, 3).dot(Eigen::Map<const Vector>(t.data(), Index(t.size()))) / 6.0;
  return f;
}

Vector PolynomialModel::derivative(const Vector& x, int k) const {
  const Index d = dim();
  if (x.size() != d) throw InputContractError("dimension mismatch");
  const auto third = [&](Index i, Index j, Index l) {
    return t[static_cast<std::size_t>((i * d + j) * d + l)];
  };
  switch (k) {
    case 1: {
      Vector out = g;
      if (h.size() > 0) out += h * x;
      if (!t.empty()) {
        for (Index i = 0; i < d; ++i) {
          double s = 0.0;
          for (Index j = 0; j < d; ++j)
            for (Index l = 0; l < d; ++l) s += third(i, j, l) * x(j) * x(l);
          out(i) += 0.5 * s;
        }
      }
      return out;
    }
    case 2: {
      Vector out = Vector::Zero(d * d);
      for (Index i = 0; i < d; ++i)
        for (Index j = 0; j < d; ++j) {
          double v = h.size() > 0 ? h(i, j) : 0.0;
          if (!t.empty()) {
            for (Index l = 0; l < d; ++l) v += third(i, j, l) * x(l);
          }
          out(i * d + j) = v;
        }
      return out;
    }
    case 3: {
      if (t.empty()) return Vector::Zero(d * d * d);
      return Eigen::Map<const Vector>(t.data(), Index(t.size()));
    }
    default: throw ValidationError("derivative order must be 1, 2 or 3");
  }
}

PolynomialModel polynomial_from_tensors(double c0, const std::vector<Vector>& tensors, Index d) {
  if (tensors.size() > 3) throw ValidationError("polynomial degree > 3 is unsupported");
  if (tensors.empty()) throw ValidationError("polynomial needs a gradient tensor");
  PolynomialModel p;
  p.c0 = c0;
  if (tensors[0].size() != d) throw ValidationError("gradient tensor size");
  p.g = tensors[0];
  if (tensors.size() >= 2) {
    if (tensors[1].size() != d * d) throw ValidationError("second-order tensor size");
    p.h = Matrix(d, d);
    for (Index i = 0; i < d; ++i)
      for (Index j = 0; j < d; ++j) p.h(i, j) = tensors[1](i * d + j);
  }
  if (tensors.size() == 3) p.t.assign(tensors[2].data(), tensors[2].data() + tensors[2].size());
  p.validate();
  return p;
}

Vector kron_power(const Vector& delta, int k) {
  if (k < 1) throw ValidationError("Kronecker power needs k >= 1");
  Vector out = delta;
  for (int i = 1; i < k; ++i) {
    Vector next(out.size() * delta.size());
    for (Index a = 0; a < out.size(); ++a) next.segment(a * delta.size(), delta.size()) = out(a) * delta;
    out = std::move(next);
  }
  return out;
}

TaylorPair taylor_oracle(const PolynomialModel& model, const Vector& x, const Vector& delta,
                         double lambda, int order) {
  if (order < 2) throw ValidationError("Taylor order K must be >= 2");
  if (model.degree() > 3) throw ValidationError("polynomial degree > 3 is unsupported");
  const double lhat = 1.0 - lambda;
  const double gap =
      model.value(x + lhat * delta) - lambda * model.value(x) - lhat * model.value(x + delta);
  double series = 0.0;
  double factorial = 1.0;
  for (int k = 2; k <= order; ++k) {
    factorial *= k;
    if (k > model.degree()) continue;
    const double coeff = (lhat - std::pow(lhat, k)) / factorial;
    series += coeff * model.derivative(x, k).dot(kron_power(delta, k));
  }
  return {gap * gap, series * series};
}

namespace {

Matrix random_symmetric(Index d, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix a(d, d);
  for (Index i = 0; i < d; ++i)
    for (Index j = 0; j < d; ++j) a(i, j) = n(rng);
  return (a + a.transpose()) / 2.0;
}

std::vector<double> random_symmetric3(Index d, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> t(static_cast<std::size_t>(d * d * d), 0.0);
  const auto idx = [d](Index i, Index j, Index k) { return std::size_t((i * d + j) * d + k); };
  for (Index i = 0; i < d; ++i)
    for (Index j = i; j < d; ++j)
      for (Index k = j; k < d; ++k) {
        const double v = n(rng);
        for (auto [a, b, c] : {std::array<Index, 3>{i, j, k}, {i, k, j}, {j, i, k}, {j, k, i},
                               {k, i, j}, {k, j, i}}) {
          t[idx(a, b, c)] = v;
        }
      }
  return t;
}

Vector random_vector(Index d, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vector v(d);
  for (Index i = 0; i < d; ++i) v(i) = n(rng);
  return v;
}

TaylorCase run_case(const std::string& name, const PolynomialModel& model, int points, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  TaylorCase c{name, points, 0.0};
  for (int p = 0; p < points; ++p) {
    const Vector x = random_vector(model.dim(), rng);
    const Vector delta = random_vector(model.dim(), rng);
    const double lambda = unit(rng);
    const TaylorPair r = taylor_oracle(model, x, delta, lambda, 3);
    c.max_abs_diff = std::max(c.max_abs_diff, std::abs(r.lhs - r.rhs));
  }
  return c;
}

}  // namespace

std::vector<TaylorCase> taylor_suite(std::uint64_t seed, int points) {
  Rng rng = substream(seed, "taylor");
  std::vector<TaylorCase> out;
  {
    PolynomialModel linear;
    linear.c0 = 0.5;
    linear.g = random_vector(3, rng);
    out.push_back(run_case("linear-d3", linear, points, rng));
  }
  {
    PolynomialModel square;
    square.g = Vector::Zero(1);
    square.h = Matrix::Constant(1, 1, 2.0);
    out.push_back(run_case("square-d1", square, points, rng));
  }
  for (int q = 0; q < 3; ++q) {
    PolynomialModel quad;
    quad.c0 = random_vector(1, rng)(0);
    quad.g = random_vector(3, rng);
    quad.h = random_symmetric(3, rng);
    out.push_back(run_case("quadratic-d3-" + std::to_string(q), quad, points, rng));
  }
  {
    PolynomialModel cubic;
    cubic.g = random_vector(3, rng);
    cubic.h = random_symmetric(3, rng);
    cubic.t = random_symmetric3(3, rng);
    cubic.validate();
    out.push_back(run_case("cubic-d3", cubic, points, rng));
  }
  return out;
}

}  // namespace raat
