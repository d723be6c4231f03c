#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

namespace dynlearn {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Thrown when vector/matrix shapes do not line up.
class DimensionError : public std::invalid_argument {
 public:
  explicit DimensionError(const std::string& what) : std::invalid_argument(what) {}
};

/// Thrown when a computation produces NaN/Inf or an ill-conditioned solve.
/// `where()` names the primitive or operation that failed.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& where, const std::string& what)
      : std::runtime_error(where + ": " + what), where_(where) {}
  const std::string& where() const noexcept { return where_; }

 private:
  std::string where_;
};

/// Thrown on malformed files, version mismatches and other I/O trouble.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw DimensionError(what);
}

inline void require_finite(const Vec& v, const std::string& where) {
  if (!v.allFinite()) throw NumericalError(where, "non-finite vector entry");
}

inline void require_finite(const Mat& m, const std::string& where) {
  if (!m.allFinite()) throw NumericalError(where, "non-finite matrix entry");
}

inline void require_finite(double x, const std::string& where) {
  if (!std::isfinite(x)) throw NumericalError(where, "non-finite scalar");
}

/// Rank-3 array stored as q-indexed slices: slice(k)(i,j) = dM_ij/dq_k.
class Tensor3 {
 public:
  Tensor3() = default;
  Tensor3(Eigen::Index rows, Eigen::Index cols, Eigen::Index depth)
      : slices_(static_cast<size_t>(depth), Mat::Zero(rows, cols)) {}

  Eigen::Index depth() const { return static_cast<Eigen::Index>(slices_.size()); }
  Mat& slice(Eigen::Index k) { return slices_[static_cast<size_t>(k)]; }
  const Mat& slice(Eigen::Index k) const { return slices_[static_cast<size_t>(k)]; }

  /// sum_k s[k] * slice(k)
  Mat contract(const Vec& s) const {
    Mat out = Mat::Zero(slices_.empty() ? 0 : slices_[0].rows(),
                        slices_.empty() ? 0 : slices_[0].cols());
    for (Eigen::Index k = 0; k < depth(); ++k) out += s[k] * slices_[static_cast<size_t>(k)];
    return out;
  }

 private:
  std::vector<Mat> slices_;
};

}  // namespace dynlearn
