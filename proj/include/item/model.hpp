#pragma once

// Shared domain types: status space, observation grid, curves, models, fit
// configuration and the fit report.

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "item/error.hpp"

namespace item {

/// Index into StatusSpace::states.
using StateIndex = std::int32_t;

class StatusSpace {
 public:
  StatusSpace() = default;

  /// `reachable` maps a start status name to its ordered list of end statuses.
  /// Start statuses missing from the map are treated as absorbing when they
  /// are listed in `absorbing`, and rejected otherwise.
  StatusSpace(std::vector<std::string> states,
              const std::map<std::string, std::vector<std::string>>& reachable,
              const std::vector<std::string>& absorbing);

  int size() const { return static_cast<int>(states_.size()); }
  const std::vector<std::string>& states() const { return states_; }
  const std::string& name(StateIndex s) const { return states_.at(static_cast<std::size_t>(s)); }
  std::optional<StateIndex> find(const std::string& name) const;
  StateIndex index(const std::string& name) const;

  const std::vector<StateIndex>& reachable(StateIndex from) const {
    return reachable_.at(static_cast<std::size_t>(from));
  }
  bool can_reach(StateIndex from, StateIndex to) const;
  bool is_absorbing(StateIndex s) const { return absorbing_.at(static_cast<std::size_t>(s)); }

  friend bool operator==(const StatusSpace&, const StatusSpace&) = default;

 private:
  std::vector<std::string> states_;
  std::vector<std::vector<StateIndex>> reachable_;
  std::vector<bool> absorbing_;
};

enum class RegressorKind { Flag, Real, Categorical };

struct RegressorMeta {
  std::string name;
  RegressorKind kind = RegressorKind::Real;
  /// Categorical only: level labels; the column stores the level position.
  std::vector<std::string> levels;
  bool curveEligible = true;

  friend bool operator==(const RegressorMeta&, const RegressorMeta&) = default;
};

std::string_view to_string(RegressorKind kind);
RegressorKind parse_regressor_kind(std::string_view text);

/// N observations of K regressors with start/end statuses and target
/// probability rows. `x` is column-major N x K, `y` is N x |states|.
struct ObservationGrid {
  std::vector<RegressorMeta> meta;
  Eigen::MatrixXd x;
  std::vector<StateIndex> startStatus;
  std::vector<StateIndex> endStatus;
  Eigen::MatrixXd y;
  /// Optional (empty or size N).
  std::vector<std::string> loanIds;
  std::vector<std::string> months;

  Eigen::Index rows() const { return x.rows(); }
  Eigen::Index cols() const { return x.cols(); }
  std::optional<Eigen::Index> column(const std::string& name) const;

  /// Resident bytes of the numeric payload (x, y, statuses).
  std::size_t numeric_bytes() const;
};

/// Copy of the rows selected by `rows`, in that order.
ObservationGrid select_rows(const ObservationGrid& grid, const std::vector<Eigen::Index>& rows);

/// Rows whose start status equals `start`.
ObservationGrid select_start(const ObservationGrid& grid, StateIndex start);

/// Builds one-hot target rows from `endStatus`.
Eigen::MatrixXd one_hot(const std::vector<StateIndex>& endStatus, int nStates);

struct GridViolation {
  Eigen::Index row = -1;  // -1 when not tied to a row
  std::string message;
  friend bool operator==(const GridViolation&, const GridViolation&) = default;
};

/// Every broken ObservationGrid invariant, in row order. Empty when valid.
std::vector<GridViolation> validate_grid(const ObservationGrid& grid, const StatusSpace& space);

enum class CurveFamily { Logistic, Gaussian };

std::string_view to_string(CurveFamily family);
CurveFamily parse_curve_family(std::string_view text);

/// One fitted transform. Logistic: `b` is the center and `a*a` the slope.
/// Gaussian: `a` is the center and `b` the width.
struct CurveSpec {
  CurveFamily family = CurveFamily::Logistic;
  double a = 0.0;
  double b = 0.0;
  Eigen::Index regressor = 0;
  StateIndex toState = 0;
  double beta = 0.0;

  double center() const { return family == CurveFamily::Logistic ? b : a; }
  double slope() const { return family == CurveFamily::Logistic ? a * a : std::abs(b); }

  friend bool operator==(const CurveSpec&, const CurveSpec&) = default;
};

/// Throws InvalidArgument / ZeroWidth when a curve breaks its invariants.
void check_curve(const CurveSpec& curve);

/// Multinomial logit for the transitions out of one start status. Score
/// arrays are indexed by outcome position (position in reachable(start));
/// the reference outcome row is pinned at zero.
struct ItemModel {
  StatusSpace space;
  std::vector<RegressorMeta> regressors;
  StateIndex startStatus = 0;
  StateIndex referenceState = 0;
  Eigen::VectorXd intercepts;  // outcomes
  Eigen::MatrixXd flagBetas;   // outcomes x K
  std::vector<CurveSpec> curves;

  const std::vector<StateIndex>& outcomes() const { return space.reachable(startStatus); }
  int outcome_count() const { return static_cast<int>(outcomes().size()); }
  int outcome_position(StateIndex state) const;
  int reference_position() const { return outcome_position(referenceState); }

  friend bool operator==(const ItemModel&, const ItemModel&) = default;
};

/// Self-transition when reachable, otherwise the first reachable status.
StateIndex default_reference_state(const StatusSpace& space, StateIndex start);

/// Zero-parameter model for `start` over regressors `meta`.
ItemModel make_empty_model(const StatusSpace& space, std::vector<RegressorMeta> meta, StateIndex start);

/// Throws InvalidArgument when the model breaks an ItemModel invariant.
void check_model(const ItemModel& model);

enum class Criterion { AIC, BIC };
std::string_view to_string(Criterion c);
Criterion parse_criterion(std::string_view text);

struct FitConfig {
  Criterion criterion = Criterion::AIC;
  int maxCurves = 20;
  double comparatorC = 5.0;
  /// 0 selects min(1e4, ceil(N/100)) at fit time.
  std::int64_t m0 = 0;
  double llCap = 20.0;
  double noiseSd = 0.0;
  int annealLoops = 0;
  std::uint64_t seed = 1;
  /// Stop when a full-data comparison is within one sigma.
  bool sigmaStop = true;
  /// When false every comparison uses the full grid.
  bool adaptive = true;
  /// Parameters charged per accepted curve (intercept adjustment is free).
  int paramsPerCurve = 3;
  int threads = 1;
};

/// Throws InvalidArgument for out-of-range settings.
void check_config(const FitConfig& config);

/// Default prefix size: min(1e4, ceil(N/100)), floored at 2.
std::int64_t default_m0(std::int64_t n);

enum class TerminalReason { MaxCurves, CriterionFailed, NoImprovement };
std::string_view to_string(TerminalReason r);

struct FitReportEntry {
  std::string regressor;
  std::string toState;
  CurveFamily family = CurveFamily::Logistic;
  double center = 0.0;
  double slope = 0.0;
  double meanNegLL = 0.0;
  double deltaAIC = 0.0;
  double deltaBIC = 0.0;
};

struct FitReport {
  std::vector<FitReportEntry> entries;
  TerminalReason reason = TerminalReason::MaxCurves;
  /// Mean negLL of the flags-only model the first curve was measured against.
  double baseNegLL = 0.0;
};

}  // namespace item
