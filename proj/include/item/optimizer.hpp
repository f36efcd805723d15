#pragma once

// Gradient-based minimization of row-separable objectives where every
// accept/reject decision is made by a subsampled significance test.
//
// For two parameter points a, b the termwise differences
//   d_k = loss_k(a) - loss_k(b)
// are accumulated over prefixes M = M0, 2 M0, 4 M0, ..., N of the row order.
// A decision is returned as soon as
//   |mean_M(d)| > C * sigma_M,   sigma_M = sd(d_0..d_{M-1}) / sqrt(M).
// At M = N the pair is reported indistinguishable when |mean_N(d)| <= sigma_N.

#include <cstdint>
#include <optional>

#include <Eigen/Dense>

namespace item {

/// f(theta) = mean over rows of loss_k(theta). Rows are visited in storage
/// order, so callers shuffle beforehand when the order carries structure.
class RowObjective {
 public:
  virtual ~RowObjective() = default;

  virtual Eigen::Index rows() const = 0;
  virtual Eigen::Index dimension() const = 0;

  /// out(k - begin) = loss_k(theta) for k in [begin, end).
  virtual void row_losses(const Eigen::VectorXd& theta, Eigen::Index begin, Eigen::Index end,
                          Eigen::Ref<Eigen::VectorXd> out) const = 0;

  /// Mean loss over rows [0, m) and its gradient.
  virtual double mean_loss_gradient(const Eigen::VectorXd& theta, Eigen::Index m,
                                    Eigen::Ref<Eigen::VectorXd> gradient) const = 0;
};

/// A parameter point together with the per-row losses evaluated so far.
class Probe {
 public:
  explicit Probe(Eigen::VectorXd theta) : theta_(std::move(theta)) {}

  const Eigen::VectorXd& theta() const { return theta_; }
  Eigen::Index evaluated() const { return filled_; }
  /// Row losses [0, evaluated()).
  Eigen::Ref<const Eigen::VectorXd> losses() const { return losses_.head(filled_); }

  /// Evaluates rows up to `m`; returns how many new rows were evaluated.
  Eigen::Index extend(const RowObjective& objective, Eigen::Index m);

 private:
  Eigen::VectorXd theta_;
  Eigen::VectorXd losses_;
  Eigen::Index filled_ = 0;
};

enum class Ordering { FirstBetter, SecondBetter, IndistinguishableAtFullN };

struct CompareResult {
  Ordering ordering = Ordering::IndistinguishableAtFullN;
  Eigen::Index rowsUsed = 0;
  double sigma = 0.0;
  /// mean_M(loss(a)) - mean_M(loss(b))
  double difference = 0.0;
};

struct ComparatorOptions {
  double c = 5.0;
  /// 0 selects min(1e4, ceil(N/100)).
  Eigen::Index m0 = 0;
  /// Full-data stop when |difference| <= sigma. When off, only an exact tie
  /// is indistinguishable.
  bool sigmaStop = true;
  /// When off, every comparison goes straight to the full grid.
  bool adaptive = true;
};

class AdaptiveComparator {
 public:
  AdaptiveComparator(const RowObjective& objective, ComparatorOptions options);

  CompareResult compare(Probe& a, Probe& b);

  /// loss_k(a) - loss_k(b).
  double termwise_diff(Probe& a, Probe& b, Eigen::Index k);

  /// Full-grid mean loss of `p`.
  double full_mean(Probe& p);

  /// sigma over the full grid for the pair.
  double full_sigma(Probe& a, Probe& b);

  Eigen::Index m0() const { return m0_; }
  std::int64_t rows_evaluated() const { return rowsEvaluated_; }
  const RowObjective& objective() const { return objective_; }

 private:
  const RowObjective& objective_;
  ComparatorOptions options_;
  Eigen::Index m0_;
  std::int64_t rowsEvaluated_ = 0;
};

enum class Termination { Indistinguishable, StepUnderflow, ZeroGradient, MaxIterations, NonFiniteGradient };

struct MinimizeOptions {
  ComparatorOptions comparator;
  int maxIterations = 400;
  int history = 7;
};

struct MinimizeResult {
  Eigen::VectorXd theta;
  int iterations = 0;
  int acceptedSteps = 0;
  Termination termination = Termination::MaxIterations;
  /// Rows evaluated by comparisons plus rows used for gradients.
  std::int64_t rowsTouched = 0;
  /// Largest gradient sample used.
  Eigen::Index gradientRows = 0;
  /// True when the final full-grid check fell back to the start point.
  bool revertedToStart = false;
};

/// Limited-memory quasi-Newton descent. Gradients come from the leading
/// `gradientRows` rows, which grow as comparisons need more data. Throws
/// NonFiniteObjective when the start point evaluates to NaN or infinity.
MinimizeResult minimize(const RowObjective& objective, const Eigen::VectorXd& start,
                        const MinimizeOptions& options = {});

}  // namespace item
