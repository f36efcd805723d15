#include "item/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace item {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::ZeroWidth: return "ZeroWidth";
    case ErrorKind::ZeroProbability: return "ZeroProbability";
    case ErrorKind::NonFiniteObjective: return "NonFiniteObjective";
    case ErrorKind::DegenerateRegressor: return "DegenerateRegressor";
    case ErrorKind::EmptyGrid: return "EmptyGrid";
    case ErrorKind::NoEligibleRegressors: return "NoEligibleRegressors";
    case ErrorKind::SingleLevelCategorical: return "SingleLevelCategorical";
    case ErrorKind::NonMarkovianRegressor: return "NonMarkovianRegressor";
    case ErrorKind::AllZeroWeights: return "AllZeroWeights";
    case ErrorKind::SchemaMismatch: return "SchemaMismatch";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::IoError: return "IoError";
  }
  return "Unknown";
}

// ---------------------------------------------------------------------------
// StatusSpace

StatusSpace::StatusSpace(std::vector<std::string> states,
                         const std::map<std::string, std::vector<std::string>>& reachable,
                         const std::vector<std::string>& absorbing)
    : states_(std::move(states)) {
  if (states_.empty()) throw Error(ErrorKind::InvalidArgument, "status space has no states");
  std::set<std::string> unique(states_.begin(), states_.end());
  if (unique.size() != states_.size()) {
    throw Error(ErrorKind::InvalidArgument, "duplicate status identifier");
  }
  const auto n = states_.size();
  reachable_.assign(n, {});
  absorbing_.assign(n, false);
  for (const auto& a : absorbing) absorbing_[static_cast<std::size_t>(index(a))] = true;

  for (const auto& [from, targets] : reachable) {
    const auto f = static_cast<std::size_t>(index(from));
    for (const auto& t : targets) {
      const StateIndex ti = index(t);
      if (std::find(reachable_[f].begin(), reachable_[f].end(), ti) != reachable_[f].end()) {
        throw Error(ErrorKind::InvalidArgument, "status " + t + " listed twice for " + from);
      }
      reachable_[f].push_back(ti);
    }
  }
  for (std::size_t s = 0; s < n; ++s) {
    if (absorbing_[s]) {
      const auto self = static_cast<StateIndex>(s);
      if (reachable_[s].empty()) reachable_[s] = {self};
      if (reachable_[s].size() != 1 || reachable_[s][0] != self) {
        throw Error(ErrorKind::InvalidArgument,
                    "absorbing status " + states_[s] + " must reach exactly itself");
      }
    } else if (reachable_[s].empty()) {
      throw Error(ErrorKind::InvalidArgument, "status " + states_[s] + " reaches nothing");
    }
  }
}

std::optional<StateIndex> StatusSpace::find(const std::string& name) const {
  const auto it = std::find(states_.begin(), states_.end(), name);
  if (it == states_.end()) return std::nullopt;
  return static_cast<StateIndex>(it - states_.begin());
}

StateIndex StatusSpace::index(const std::string& name) const {
  if (auto s = find(name)) return *s;
  throw Error(ErrorKind::InvalidArgument, "unknown status '" + name + "'");
}

bool StatusSpace::can_reach(StateIndex from, StateIndex to) const {
  if (from < 0 || from >= size()) return false;
  const auto& r = reachable(from);
  return std::find(r.begin(), r.end(), to) != r.end();
}

// ---------------------------------------------------------------------------
// Regressors, curves, criteria

std::string_view to_string(RegressorKind kind) {
  switch (kind) {
    case RegressorKind::Flag: return "flag";
    case RegressorKind::Real: return "real";
    case RegressorKind::Categorical: return "categorical";
  }
  return "real";
}

RegressorKind parse_regressor_kind(std::string_view text) {
  if (text == "flag") return RegressorKind::Flag;
  if (text == "real") return RegressorKind::Real;
  if (text == "categorical") return RegressorKind::Categorical;
  throw Error(ErrorKind::InvalidArgument, "unknown regressor kind '" + std::string(text) + "'");
}

std::string_view to_string(CurveFamily family) {
  return family == CurveFamily::Logistic ? "logistic" : "gaussian";
}

CurveFamily parse_curve_family(std::string_view text) {
  if (text == "logistic") return CurveFamily::Logistic;
  if (text == "gaussian") return CurveFamily::Gaussian;
  throw Error(ErrorKind::InvalidArgument, "unknown curve family '" + std::string(text) + "'");
}

std::string_view to_string(Criterion c) { return c == Criterion::AIC ? "AIC" : "BIC"; }

Criterion parse_criterion(std::string_view text) {
  if (text == "AIC" || text == "aic") return Criterion::AIC;
  if (text == "BIC" || text == "bic") return Criterion::BIC;
  throw Error(ErrorKind::InvalidArgument, "unknown criterion '" + std::string(text) + "'");
}

std::string_view to_string(TerminalReason r) {
  switch (r) {
    case TerminalReason::MaxCurves: return "MAX_CURVES";
    case TerminalReason::CriterionFailed: return "CRITERION_FAILED";
    case TerminalReason::NoImprovement: return "NO_IMPROVEMENT";
  }
  return "MAX_CURVES";
}

void check_curve(const CurveSpec& curve) {
  if (!std::isfinite(curve.a) || !std::isfinite(curve.b) || !std::isfinite(curve.beta)) {
    throw Error(ErrorKind::InvalidArgument, "curve parameters must be finite");
  }
  if (curve.family == CurveFamily::Gaussian && curve.b == 0.0) {
    throw Error(ErrorKind::ZeroWidth, "gaussian curve with zero width");
  }
}

// ---------------------------------------------------------------------------
// Grid

std::optional<Eigen::Index> ObservationGrid::column(const std::string& name) const {
  for (std::size_t k = 0; k < meta.size(); ++k) {
    if (meta[k].name == name) return static_cast<Eigen::Index>(k);
  }
  return std::nullopt;
}

std::size_t ObservationGrid::numeric_bytes() const {
  return static_cast<std::size_t>(x.size() + y.size()) * sizeof(double) +
         (startStatus.size() + endStatus.size()) * sizeof(StateIndex);
}

ObservationGrid select_rows(const ObservationGrid& grid, const std::vector<Eigen::Index>& rows) {
  ObservationGrid out;
  out.meta = grid.meta;
  const auto n = static_cast<Eigen::Index>(rows.size());
  out.x.resize(n, grid.cols());
  out.y.resize(n, grid.y.cols());
  out.startStatus.resize(rows.size());
  out.endStatus.resize(rows.size());
  const bool ids = !grid.loanIds.empty();
  const bool months = !grid.months.empty();
  if (ids) out.loanIds.resize(rows.size());
  if (months) out.months.resize(rows.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto src = rows[static_cast<std::size_t>(i)];
    const auto si = static_cast<std::size_t>(src);
    const auto di = static_cast<std::size_t>(i);
    out.x.row(i) = grid.x.row(src);
    out.y.row(i) = grid.y.row(src);
    out.startStatus[di] = grid.startStatus[si];
    out.endStatus[di] = grid.endStatus[si];
    if (ids) out.loanIds[di] = grid.loanIds[si];
    if (months) out.months[di] = grid.months[si];
  }
  return out;
}

ObservationGrid select_start(const ObservationGrid& grid, StateIndex start) {
  std::vector<Eigen::Index> rows;
  for (Eigen::Index i = 0; i < grid.rows(); ++i) {
    if (grid.startStatus[static_cast<std::size_t>(i)] == start) rows.push_back(i);
  }
  return select_rows(grid, rows);
}

Eigen::MatrixXd one_hot(const std::vector<StateIndex>& endStatus, int nStates) {
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(endStatus.size()), nStates);
  for (std::size_t i = 0; i < endStatus.size(); ++i) {
    y(static_cast<Eigen::Index>(i), endStatus[i]) = 1.0;
  }
  return y;
}

std::vector<GridViolation> validate_grid(const ObservationGrid& grid, const StatusSpace& space) {
  std::vector<GridViolation> out;
  const auto n = grid.rows();
  const auto un = static_cast<std::size_t>(n);
  if (grid.startStatus.size() != un || grid.endStatus.size() != un || grid.y.rows() != n) {
    out.push_back({-1, "row count mismatch between x, y and statuses"});
    return out;
  }
  if (grid.y.cols() != space.size()) {
    out.push_back({-1, "y has " + std::to_string(grid.y.cols()) + " columns, expected " +
                           std::to_string(space.size())});
    return out;
  }
  if (static_cast<Eigen::Index>(grid.meta.size()) != grid.cols()) {
    out.push_back({-1, "regressor metadata does not match x columns"});
  }
  if (!grid.loanIds.empty() && grid.loanIds.size() != un) {
    out.push_back({-1, "loan id count does not match rows"});
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    const StateIndex from = grid.startStatus[ui];
    const StateIndex to = grid.endStatus[ui];
    if (from < 0 || from >= space.size() || to < 0 || to >= space.size()) {
      out.push_back({i, "row " + std::to_string(i) + ": status index out of range"});
      continue;
    }
    if (!space.can_reach(from, to)) {
      out.push_back({i, "row " + std::to_string(i) + ": end status " + space.name(to) +
                            " not reachable from " + space.name(from)});
    }
    const auto yr = grid.y.row(i);
    double sum = 0.0;
    bool negative = false;
    bool offSupport = false;
    for (Eigen::Index w = 0; w < yr.size(); ++w) {
      const double v = yr(w);
      if (!(v >= 0.0)) negative = true;
      if (v != 0.0 && !space.can_reach(from, static_cast<StateIndex>(w))) offSupport = true;
      sum += v;
    }
    if (negative) out.push_back({i, "row " + std::to_string(i) + ": negative or NaN probability"});
    if (!(std::abs(sum - 1.0) <= 1e-12)) {
      std::ostringstream msg;
      msg.precision(17);
      msg << "row " << i << ": y sums to " << sum;
      out.push_back({i, msg.str()});
    }
    if (offSupport) {
      out.push_back({i, "row " + std::to_string(i) + ": probability on an unreachable status"});
    }
    if (!grid.x.row(i).allFinite()) {
      out.push_back({i, "row " + std::to_string(i) + ": non-finite regressor value"});
    }
    for (Eigen::Index k = 0; k < grid.cols() && k < static_cast<Eigen::Index>(grid.meta.size()); ++k) {
      if (grid.meta[static_cast<std::size_t>(k)].kind == RegressorKind::Flag) {
        const double v = grid.x(i, k);
        if (v != 0.0 && v != 1.0) {
          out.push_back({i, "row " + std::to_string(i) + ": flag " +
                                grid.meta[static_cast<std::size_t>(k)].name + " is not 0/1"});
        }
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Model

int ItemModel::outcome_position(StateIndex state) const {
  const auto& o = outcomes();
  const auto it = std::find(o.begin(), o.end(), state);
  if (it == o.end()) {
    throw Error(ErrorKind::InvalidArgument,
                "status " + space.name(state) + " is not reachable from " + space.name(startStatus));
  }
  return static_cast<int>(it - o.begin());
}

StateIndex default_reference_state(const StatusSpace& space, StateIndex start) {
  if (space.can_reach(start, start)) return start;
  return space.reachable(start).front();
}

ItemModel make_empty_model(const StatusSpace& space, std::vector<RegressorMeta> meta, StateIndex start) {
  ItemModel m;
  m.space = space;
  m.regressors = std::move(meta);
  m.startStatus = start;
  m.referenceState = default_reference_state(space, start);
  const auto w = static_cast<Eigen::Index>(space.reachable(start).size());
  m.intercepts = Eigen::VectorXd::Zero(w);
  m.flagBetas = Eigen::MatrixXd::Zero(w, static_cast<Eigen::Index>(m.regressors.size()));
  return m;
}

void check_model(const ItemModel& model) {
  const auto w = model.outcome_count();
  if (!model.space.can_reach(model.startStatus, model.referenceState)) {
    throw Error(ErrorKind::InvalidArgument, "reference status not reachable from start status");
  }
  const auto k = static_cast<Eigen::Index>(model.regressors.size());
  if (model.intercepts.size() != w || model.flagBetas.rows() != w || model.flagBetas.cols() != k) {
    throw Error(ErrorKind::InvalidArgument, "model parameter shapes do not match outcomes/regressors");
  }
  const int ref = model.reference_position();
  if (model.intercepts(ref) != 0.0 || !model.flagBetas.row(ref).isZero(0.0)) {
    throw Error(ErrorKind::InvalidArgument, "reference status must carry no parameters");
  }
  if (!model.intercepts.allFinite() || !model.flagBetas.allFinite()) {
    throw Error(ErrorKind::InvalidArgument, "non-finite model coefficient");
  }
  for (const auto& c : model.curves) {
    check_curve(c);
    if (c.toState == model.referenceState || !model.space.can_reach(model.startStatus, c.toState)) {
      throw Error(ErrorKind::InvalidArgument, "curve targets the reference or an unreachable status");
    }
    if (c.regressor < 0 || c.regressor >= k) {
      throw Error(ErrorKind::InvalidArgument, "curve regressor index out of range");
    }
  }
}

void check_config(const FitConfig& config) {
  if (!(config.comparatorC > 0.0)) throw Error(ErrorKind::InvalidArgument, "comparatorC must be > 0");
  if (config.m0 != 0 && config.m0 < 2) throw Error(ErrorKind::InvalidArgument, "m0 must be >= 2");
  if (!(config.llCap > 0.0)) throw Error(ErrorKind::InvalidArgument, "llCap must be > 0");
  if (!(config.noiseSd >= 0.0 && config.noiseSd <= 1e-3)) {
    throw Error(ErrorKind::InvalidArgument, "noiseSd must lie in [0, 1e-3]");
  }
  if (config.maxCurves < 0) throw Error(ErrorKind::InvalidArgument, "maxCurves must be >= 0");
  if (config.annealLoops < 0) throw Error(ErrorKind::InvalidArgument, "annealLoops must be >= 0");
  if (config.paramsPerCurve < 1) throw Error(ErrorKind::InvalidArgument, "paramsPerCurve must be >= 1");
  if (config.threads < 1) throw Error(ErrorKind::InvalidArgument, "threads must be >= 1");
}

std::int64_t default_m0(std::int64_t n) {
  const std::int64_t pct = (n + 99) / 100;
  return std::max<std::int64_t>(2, std::min<std::int64_t>(10000, pct));
}

}  // namespace item
