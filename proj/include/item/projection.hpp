#pragma once

// Forward projection of per-period transition probabilities: exact matrix
// iteration, path simulation, and the hybrid that computes the common
// always-in-start branch exactly and simulates only paths that leave it.

#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "item/model.hpp"

namespace item {

/// Probability over all states of the next state, given the current state,
/// the step index t (t -> t + 1) and the state history [0, t]. Absorbing
/// states return their own indicator.
class TransitionModel {
 public:
  virtual ~TransitionModel() = default;

  virtual const StatusSpace& space() const = 0;
  /// False when some input depends on the path history.
  virtual bool markovian() const = 0;
  virtual Eigen::VectorXd row(StateIndex from, int t, std::span<const StateIndex> history) const = 0;
};

/// Fixed row-stochastic matrices M(t), M(t)(i, j) = P(i -> j). Times beyond
/// the last matrix reuse it.
class MatrixTransitionModel final : public TransitionModel {
 public:
  MatrixTransitionModel(StatusSpace space, std::vector<Eigen::MatrixXd> matrices);

  const StatusSpace& space() const override { return space_; }
  bool markovian() const override { return true; }
  Eigen::VectorXd row(StateIndex from, int t, std::span<const StateIndex> history) const override;

 private:
  StatusSpace space_;
  std::vector<Eigen::MatrixXd> matrices_;
};

/// Fitted models, one per non-absorbing start status, evaluated on a
/// covariate path (row t holds the regressors at step t, the last row is
/// reused beyond the path). Columns listed in `timeInState` are replaced by
/// the number of consecutive steps the history has spent in its current
/// state, which makes the model path dependent.
class ItemTransitionModel final : public TransitionModel {
 public:
  ItemTransitionModel(std::vector<ItemModel> models, Eigen::MatrixXd covariates,
                      std::vector<Eigen::Index> timeInState = {});

  const StatusSpace& space() const override { return models_.front().space; }
  bool markovian() const override { return timeInState_.empty(); }
  Eigen::VectorXd row(StateIndex from, int t, std::span<const StateIndex> history) const override;

 private:
  std::vector<ItemModel> models_;
  std::map<StateIndex, std::size_t> byStart_;
  Eigen::MatrixXd covariates_;
  std::vector<Eigen::Index> timeInState_;
};

struct Projection {
  /// (horizon + 1) x |states|; row t is the state distribution at time t.
  Eigen::MatrixXd probability;
  Eigen::MatrixXd stdError;
  /// Transition rows evaluated in total.
  std::int64_t transitionRows = 0;
  /// Transition rows charged to one path (matrix: m * horizon).
  double rowsPerPath = 0.0;
};

/// s(t + 1) = s(t) M(t). Throws NonMarkovianRegressor for path-dependent
/// models.
Projection project_matrix(const TransitionModel& model, const Eigen::VectorXd& s0, int horizon);

/// Empirical distribution of `nPaths` simulated paths from `start`. Path i
/// draws from its own generator seeded by (seed, i), so the result does not
/// depend on `threads`.
Projection simulate_paths(const TransitionModel& model, StateIndex start, int horizon, std::int64_t nPaths,
                          std::uint64_t seed, int threads = 1);

struct HybridTrace {
  StateIndex start = 0;
  int horizon = 0;
  /// Probability of having stayed in `start` through t, t = 0..horizon.
  Eigen::VectorXd alwaysStart;
  /// (horizon + 1) x |states|: cumulative mass absorbed directly from the
  /// always-in-start path.
  Eigen::MatrixXd absorbed;
  /// (horizon + 1) x |states|: mass first leaving `start` for a
  /// non-absorbing state at time t. Row 0 is zero.
  Eigen::MatrixXd entries;
  /// entries / entryTotal, or all zero when entryTotal is 0.
  Eigen::MatrixXd entryDistribution;
  /// Total probability of entering a non-absorbing state by the horizon.
  double entryTotal = 0.0;
  std::int64_t transitionRows = 0;
};

/// Exact recursion along the always-in-start path, whose history is known.
HybridTrace hybrid_trace(const TransitionModel& model, StateIndex start, int horizon);

/// Exact always-in-start and absorbed branches plus `nSims` simulations
/// started at entry points drawn from the trace's entry distribution.
Projection project_hybrid(const TransitionModel& model, StateIndex start, int horizon, std::int64_t nSims,
                          std::uint64_t seed, int threads = 1);

struct PathAllocation {
  std::vector<std::int64_t> counts;
  double gamma = 0.0;
  double epsilon = 0.0;
  std::int64_t assigned = 0;
};

/// Randomized allocation of n * q simulations over loans with weights `w`:
/// repeated passes assign one simulation to loan n with probability
/// min(1, w(n) / eps) and then lower w(n) by eps, eps = sum(w) / (n q). Stops
/// after n * q assignments or once no weight exceeds eps / 2.
/// Throws AllZeroWeights when no weight is positive.
PathAllocation allocate_paths(std::vector<double> w, int q, std::mt19937_64& rng);

/// ceil(w(n) / eps) simulations per loan.
PathAllocation allocate_paths_deterministic(const std::vector<double>& w, int q);

}  // namespace item
