#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace a3t {

template <typename Scalar>
using MatrixT = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using VectorT = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVectorT = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using Real = double;
using Matrix = MatrixT<Real>;
using Vector = VectorT<Real>;
using RowVector = RowVectorT<Real>;

inline constexpr int kMelBins = 80;
inline constexpr int kPhoneVocabSize = 73;
inline constexpr int kMaxSegments = 500;

/// Base of every error the library raises. The category drives CLI exit codes.
class Error : public std::runtime_error {
 public:
  enum class Kind { Usage = 1, Data = 2, Numeric = 3 };
  Error(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

struct UsageError : Error {
  explicit UsageError(const std::string& what) : Error(Kind::Usage, what) {}
};
struct DataError : Error {
  explicit DataError(const std::string& what) : Error(Kind::Data, what) {}
};
struct NumericError : Error {
  explicit NumericError(const std::string& what) : Error(Kind::Numeric, what) {}
};

/// Round half away from zero for non-negative inputs; every count in the
/// library goes through this one rule.
inline long round_half_up(double x) { return static_cast<long>(std::floor(x + 0.5)); }

}  // namespace a3t
