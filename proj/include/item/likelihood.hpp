#pragma once

// Power scores, softmax and its inverse, and the capped cross-entropy
// objective with its analytic gradient.

#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "item/error.hpp"
#include "item/model.hpp"

namespace item {

/// Largest outcome count handled by the per-row kernels without heap use.
inline constexpr int kMaxOutcomes = 16;
using OutcomeVector = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxOutcomes, 1>;

/// Rows are reduced in blocks of this size, in block order.
inline constexpr Eigen::Index kReductionChunk = 4096;

/// exp(v - max v) / sum(exp(v - max v)).
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> softmax(const Eigen::MatrixBase<Derived>& v) {
  using Scalar = typename Derived::Scalar;
  const Scalar mx = v.maxCoeff();
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> e = (v.array() - mx).exp().matrix();
  return e / e.sum();
}

/// log(sum(exp(v))) without overflow.
template <typename Derived>
typename Derived::Scalar log_sum_exp(const Eigen::MatrixBase<Derived>& v) {
  using std::log;
  const auto mx = v.maxCoeff();
  return mx + log((v.array() - mx).exp().sum());
}

/// v[i] = ln(y[i] / y[ref]). Throws ZeroProbability for non-positive entries.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> inverse_logit(const Eigen::MatrixBase<Derived>& y,
                                                                           Eigen::Index refIndex) {
  using Scalar = typename Derived::Scalar;
  if (refIndex < 0 || refIndex >= y.size()) {
    throw Error(ErrorKind::InvalidArgument, "reference index out of range");
  }
  if (!((y.array() > Scalar(0)).all())) {
    throw Error(ErrorKind::ZeroProbability, "inverse logit needs strictly positive probabilities");
  }
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> v = (y.array() / y(refIndex)).log().matrix();
  v(refIndex) = Scalar(0);
  return v;
}

/// Capped cross-entropy of one row: min(cap, -y . ln softmax(v)). When
/// `gradient` is given it receives d(loss)/dv, which is zero for capped rows.
template <typename V, typename Y>
double row_neg_ll(const Eigen::MatrixBase<V>& v, const Eigen::MatrixBase<Y>& y, double cap,
                  OutcomeVector* gradient = nullptr) {
  const double mx = v.maxCoeff();
  OutcomeVector e = (v.array() - mx).exp().matrix();
  const double total = e.sum();
  const double lse = mx + std::log(total);
  const double mass = y.sum();
  const double loss = std::max(0.0, lse * mass - y.dot(v));
  if (loss > cap) {
    if (gradient) gradient->setZero(v.size());
    return cap;
  }
  if (gradient) *gradient = e * (mass / total) - y;
  return loss;
}

/// Scores over model.outcomes() for one regressor row; reference entry is 0.
Eigen::VectorXd power_scores(const ItemModel& model, const Eigen::Ref<const Eigen::RowVectorXd>& row);

/// N x W score matrix for every grid row.
Eigen::MatrixXd score_matrix(const ItemModel& model, const ObservationGrid& grid);

/// y restricted to the model's outcome columns (N x W).
Eigen::MatrixXd outcome_targets(const ItemModel& model, const ObservationGrid& grid);

/// Per-row capped negLL of the model on the grid.
Eigen::VectorXd row_neg_lls(const ObservationGrid& grid, const ItemModel& model, double cap);

/// (1/N) sum_i min(cap, -y_i . ln softmax(v_i)).
double mean_neg_ll(const ObservationGrid& grid, const ItemModel& model, double cap);

/// Gradient of mean_neg_ll with respect to every model parameter. Reference
/// entries are left at zero.
struct ModelGradient {
  Eigen::VectorXd intercepts;  // outcomes
  Eigen::MatrixXd flagBetas;   // outcomes x K
  Eigen::VectorXd curveBeta;
  Eigen::VectorXd curveA;
  Eigen::VectorXd curveB;
};

ModelGradient neg_ll_gradient(const ObservationGrid& grid, const ItemModel& model, double cap);

/// Mean of `values` reduced chunk by chunk in fixed order.
double chunked_mean(const Eigen::Ref<const Eigen::VectorXd>& values);

}  // namespace item
