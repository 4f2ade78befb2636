#ifndef RAAT_COMMON_HPP
#define RAAT_COMMON_HPP

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace raat {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// A batch of flattened inputs or outputs, one example per row.
using Batch = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Labels = std::vector<int>;
using Mask = Eigen::Array<bool, Eigen::Dynamic, 1>;
using Rng = std::mt19937_64;

// Error taxonomy. The CLI maps NumericError to exit code 3 and everything
// else to exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InputContractError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

/// Derives an independent generator from a root seed, a stream name and up
/// to three integer coordinates (epoch, batch, example, ...). The mapping is
/// a fixed hash so the same arguments always yield the same stream.
Rng substream(std::uint64_t seed, std::string_view tag, std::uint64_t a = 0,
              std::uint64_t b = 0, std::uint64_t c = 0);

/// FNV-1a over the raw bytes of a parameter vector.
std::uint64_t checksum(const Vector& values);

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& values) {
  return values.derived().array().isFinite().all();
}

/// Index of the largest entry; ties go to the lowest index.
template <typename Derived>
int argmax(const Eigen::DenseBase<Derived>& row) {
  int best = 0;
  for (Index k = 1; k < row.size(); ++k) {
    if (row(k) > row(best)) best = static_cast<int>(k);
  }
  return best;
}

}  // namespace raat

#endif  // RAAT_COMMON_HPP
