#ifndef RAAT_THEORY_HPP
#define RAAT_THEORY_HPP

#include "raat/common.hpp"
#include "raat/data.hpp"

#include <optional>
#include <string>
#include <vector>

namespace raat {

// Linear classifiers x -> sign(<w, x>) on the binary Gaussian model.

/// w = sum_i y_i x_i with y_i in {-1, +1}.
Vector sample_mean_classifier(const Batch& x, const Labels& y);

/// Pseudo-labels each row by sign(<base, x>) (ties to +1) and returns
/// sum_i pseudo_i x_i.
Vector cr_estimator(const Vector& base, const Batch& unlabeled);

double normal_cdf(double z);

/// Phi(-<w, theta> / (sigma |w|_2)).
double analytic_standard_error(const Vector& w, const Vector& theta, double sigma);

/// Phi(-(<w, theta> - eps |w|_1) / (sigma |w|_2)): the l_inf robust error.
double analytic_robust_error(const Vector& w, const Vector& theta, double sigma, double epsilon);

/// Empirical error of sign(<w, x>) on n fresh draws; an example counts as a
/// robust error when y <w, x> - eps |w|_1 <= 0.
double monte_carlo_error(const Vector& w, const GaussianModelSpec& spec, double epsilon, Index n,
                         Rng& rng);

struct SweepConfig {
  std::vector<int> dims{4, 16, 64, 256};
  int labeled = 1;
  /// m = ceil(m_constant * sqrt(d)) unlabeled points for the CR estimator.
  double m_constant = 4.0;
  double epsilon = 0.75;
  int trials = 2000;
  /// sigma = sigma_scale * d^(1/4) unless sigma is set explicitly.
  double sigma_scale = 0.5;
  std::optional<double> sigma;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Scale 1/32 of the analysed regime.
inline constexpr double kPaperSigmaScale = 1.0 / 32.0;

struct SweepRow {
  int d = 0;
  double std_err = 0;
  double rob_err = 0;
  double cr_rob_err = 0;
  int m = 0;
};

/// Per d: trial-averaged exact errors of the supervised estimator and of
/// the CR estimator built from it. sigma = 0 is evaluated deterministically.
std::vector<SweepRow> complexity_sweep(const SweepConfig& cfg);

/// Header `d,std_err,rob_err,cr_rob_err,m`.
std::string sweep_csv(const std::vector<SweepRow>& rows);

/// Scalar polynomial of degree <= 3:
/// f(x) = c0 + g'x + 1/2 x'Hx + 1/6 T[x, x, x] with symmetric H and T.
struct PolynomialModel {
  double c0 = 0;
  Vector g;
  Matrix h;          // empty for degree < 2
  std::vector<double> t;  // d^3 entries, row-major (i, j, k); empty for degree < 3

  Index dim() const { return g.size(); }
  int degree() const;
  /// Throws ValidationError for asymmetric or misshaped tensors.
  void validate() const;
  double value(const Vector& x) const;
  /// vec of the k-th derivative tensor at x, k in 1..3.
  Vector derivative(const Vector& x, int k) const;
};

/// Builds a model from tensors of arbitrary order; order > 3 is rejected.
PolynomialModel polynomial_from_tensors(double c0, const std::vector<Vector>& tensors, Index d);

/// Delta tensored with itself k times, flattened row-major.
Vector kron_power(const Vector& delta, int k);

struct TaylorPair {
  double lhs = 0;
  double rhs = 0;
};

/// lhs = (f(x + lhat Delta) - lambda f(x) - lhat f(x + Delta))^2 with
/// lhat = 1 - lambda; rhs = (sum_{k=2}^K (lhat - lhat^k)/k! vec[d^k f(x)]' Delta^k)^2.
TaylorPair taylor_oracle(const PolynomialModel& model, const Vector& x, const Vector& delta,
                         double lambda, int order);

struct TaylorCase {
  std::string name;
  int points = 0;
  double max_abs_diff = 0;
};

/// Linear, 1-D x^2, three random symmetric quadratics in d = 3 and one
/// random cubic in d = 3, each on `points` random (x, Delta, lambda).
std::vector<TaylorCase> taylor_suite(std::uint64_t seed, int points = 100);

}  // namespace raat

#endif  // RAAT_THEORY_HPP
