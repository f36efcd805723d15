#pragma once

// Greedy curve discovery: coefficient refits, single-curve candidate fits,
// information-criterion gating, annealing and target-noise injection.

#include <random>

#include <Eigen/Dense>

#include "item/model.hpp"
#include "item/optimizer.hpp"

namespace item {

/// Comparator settings derived from a fit configuration.
MinimizeOptions minimize_options(const FitConfig& config, Eigen::Index rows);

/// Change in AIC or BIC from adding `kAdded` parameters to a model whose mean
/// negLL moves from `negLLBefore` to `negLLAfter` over `n` rows.
double criterion_delta(int kAdded, Eigen::Index n, double negLLBefore, double negLLAfter, Criterion criterion);

/// Mean negLL over the intercepts, FLAG-column betas and curve betas of a
/// model whose curve shapes (and REAL-column betas) are held fixed.
/// Parameter order: non-reference intercepts, then each non-reference
/// outcome's flag betas, then one beta per curve.
class CoefficientObjective final : public RowObjective {
 public:
  CoefficientObjective(const ObservationGrid& grid, const ItemModel& model, double cap);

  Eigen::Index rows() const override { return targets_.rows(); }
  Eigen::Index dimension() const override;
  void row_losses(const Eigen::VectorXd& theta, Eigen::Index begin, Eigen::Index end,
                  Eigen::Ref<Eigen::VectorXd> out) const override;
  double mean_loss_gradient(const Eigen::VectorXd& theta, Eigen::Index m,
                            Eigen::Ref<Eigen::VectorXd> gradient) const override;

  Eigen::VectorXd pack(const ItemModel& model) const;
  /// `model` with the parameters in `theta` written back.
  ItemModel unpack(const Eigen::VectorXd& theta, ItemModel model) const;

 private:
  Eigen::MatrixXd scores(const Eigen::VectorXd& theta, Eigen::Index begin, Eigen::Index end) const;

  Eigen::MatrixXd targets_;
  Eigen::MatrixXd flags_;
  Eigen::MatrixXd curveValues_;
  Eigen::MatrixXd offset_;
  std::vector<Eigen::Index> flagCols_;
  std::vector<int> curvePos_;
  std::vector<int> free_;
  double cap_;
  int ref_;
  int w_ = 0;
};

/// Refits intercepts, flag betas and curve betas with curve shapes frozen.
/// The returned model is never worse on the full grid than the input.
ItemModel fit_coefficients(const ItemModel& model, const ObservationGrid& grid, const FitConfig& config);

struct CandidateResult {
  CurveSpec curve;
  double interceptAdjustment = 0.0;
  double meanNegLL = 0.0;
  double baseNegLL = 0.0;
  double deltaAIC = 0.0;
  double deltaBIC = 0.0;
  MinimizeResult optimizer;
};

/// Optimizes one new curve (a, b, beta) plus an intercept adjustment for
/// `toState` on top of `cachedScores` (N x W, the model's current scores).
/// Throws DegenerateRegressor when the regressor is constant.
CandidateResult fit_candidate_curve(const ObservationGrid& grid, const ItemModel& model,
                                    const Eigen::MatrixXd& cachedScores, Eigen::Index regressor,
                                    StateIndex toState, CurveFamily family, std::mt19937_64& rng,
                                    const FitConfig& config);

/// Model with `candidate` appended and its intercept adjustment folded in.
ItemModel add_curve(const ItemModel& model, const CandidateResult& candidate);

/// Indices of REAL, curve-eligible regressors.
std::vector<Eigen::Index> eligible_regressors(const ObservationGrid& grid);

struct FitResult {
  ItemModel model;
  FitReport report;
};

/// Greedy loop: refit coefficients, try every (regressor, status, family)
/// candidate, keep the best one while the criterion delta is negative.
/// `grid` must hold a single start status and be shuffled already.
FitResult fit(const ObservationGrid& grid, const StatusSpace& space, const FitConfig& config);

/// Same loop continuing from an existing model.
FitResult fit(const ObservationGrid& grid, ItemModel start, const FitConfig& config);

/// Drops and regrows each regressor's curves `config.annealLoops` times,
/// keeping a replacement set only when the full-grid negLL improves.
FitResult anneal(const ItemModel& model, const ObservationGrid& grid, const FitConfig& config,
                 const FitReport& report = {});

/// Adds N(0, sd) to every reachable target entry, clamps at sd * 1e-3 and
/// renormalizes each row. sd = 0 returns the grid unchanged.
ObservationGrid inject_noise(const ObservationGrid& grid, const StatusSpace& space, double sd,
                             std::mt19937_64& rng);

/// Replaces each categorical column of L levels with L - 1 flags, dropping
/// the first level as the baseline.
ObservationGrid expand_categorical(const ObservationGrid& grid);

}  // namespace item
