#ifndef RAAT_TESTS_HELPERS_HPP
#define RAAT_TESTS_HELPERS_HPP

#include "raat/common.hpp"
#include "raat/model.hpp"

#include <cmath>
#include <functional>
#include <random>

namespace raat::testing {

inline Batch random_batch(Index rows, Index cols, Rng& rng, double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Batch b(rows, cols);
  for (Index i = 0; i < b.size(); ++i) b.data()[i] = u(rng);
  return b;
}

inline Labels random_labels(Index rows, int classes, Rng& rng) {
  std::uniform_int_distribution<int> u(0, classes - 1);
  Labels y(static_cast<std::size_t>(rows));
  for (int& v : y) v = u(rng);
  return y;
}

/// Linear model with explicit weights (rows = classes) and biases.
inline Classifier linear_model(const Matrix& w, const Vector& b) {
  Classifier m(linear_architecture(static_cast<int>(w.cols()), static_cast<int>(w.rows())));
  Vector p(m.parameter_count());
  Index k = 0;
  for (Index r = 0; r < w.rows(); ++r)
    for (Index c = 0; c < w.cols(); ++c) p(k++) = w(r, c);
  for (Index r = 0; r < b.size(); ++r) p(k++) = b(r);
  m.set_parameters(p);
  return m;
}

inline Classifier initialized(const Architecture& arch, std::uint64_t seed) {
  Classifier m(arch);
  Rng rng(seed);
  m.initialize(rng);
  return m;
}

/// Small conv network on a 2x6x6 input.
inline Architecture tiny_cnn(Activation act = Activation::Tanh) {
  Architecture a;
  a.name = "tiny-cnn";
  a.input = ImageShape{2, 6, 6};
  a.num_classes = 3;
  a.layers = {LayerSpec{LayerKind::Conv3x3, 3, 1, act}, LayerSpec{LayerKind::Conv3x3, 4, 2, act},
              LayerSpec{LayerKind::Dense, 5, 1, act},
              LayerSpec{LayerKind::Dense, 3, 1, Activation::Identity}};
  return a;
}

/// Central differences of a scalar function of a vector.
inline Vector numeric_gradient(const std::function<double(const Vector&)>& f, Vector x,
                               double h = 1e-5) {
  Vector g(x.size());
  for (Index i = 0; i < x.size(); ++i) {
    const double keep = x(i);
    x(i) = keep + h;
    const double up = f(x);
    x(i) = keep - h;
    const double down = f(x);
    x(i) = keep;
    g(i) = (up - down) / (2 * h);
  }
  return g;
}

inline double relative_error(const Vector& a, const Vector& b) {
  const double scale = std::max({a.norm(), b.norm(), 1e-8});
  return (a - b).norm() / scale;
}

inline Vector row(const Batch& b, Index r) { return b.row(r).transpose(); }

inline Batch as_row(const Vector& v) { return v.transpose(); }

}  // namespace raat::testing

#endif  // RAAT_TESTS_HELPERS_HPP
