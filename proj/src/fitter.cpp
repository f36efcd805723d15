#include "item/fitter.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <set>

#include "item/concurrency.hpp"
#include "item/curves.hpp"
#include "item/likelihood.hpp"

namespace item {

namespace {

constexpr std::array<CurveFamily, 2> kFamilies{CurveFamily::Logistic, CurveFamily::Gaussian};

// One trial curve on a standardized regressor z = (x - mean) / sd:
// theta = (p, q, beta, delta), score[s] += delta + beta * curve_{p,q}(z).
class CandidateObjective final : public RowObjective {
 public:
  CandidateObjective(const Eigen::MatrixXd& cachedScores, Eigen::MatrixXd targets, Eigen::VectorXd z, int position,
                     CurveFamily family, double cap)
      : scores_(cachedScores), targets_(std::move(targets)), z_(std::move(z)), pos_(position), family_(family),
        cap_(cap) {}

  Eigen::Index rows() const override { return z_.size(); }
  Eigen::Index dimension() const override { return 4; }

  void row_losses(const Eigen::VectorXd& theta, Eigen::Index begin, Eigen::Index end,
                  Eigen::Ref<Eigen::VectorXd> out) const override {
    if (!usable(theta)) {
      out.setConstant(std::numeric_limits<double>::quiet_NaN());
      return;
    }
    OutcomeVector v;
    for (Eigen::Index i = begin; i < end; ++i) {
      v = scores_.row(i).transpose();
      v(pos_) += theta(3) + theta(2) * eval_curve(family_, theta(0), theta(1), z_(i));
      out(i - begin) = row_neg_ll(v, targets_.row(i).transpose(), cap_);
    }
  }

  double mean_loss_gradient(const Eigen::VectorXd& theta, Eigen::Index m,
                            Eigen::Ref<Eigen::VectorXd> gradient) const override {
    gradient.setZero();
    if (!usable(theta)) {
      gradient.setConstant(std::numeric_limits<double>::quiet_NaN());
      return std::numeric_limits<double>::quiet_NaN();
    }
    OutcomeVector v;
    OutcomeVector g;
    double total = 0.0;
    for (Eigen::Index begin = 0; begin < m; begin += kReductionChunk) {
      const Eigen::Index end = std::min(m, begin + kReductionChunk);
      double chunk = 0.0;
      Eigen::Vector4d part = Eigen::Vector4d::Zero();
      for (Eigen::Index i = begin; i < end; ++i) {
        const auto cp = curve_point(family_, theta(0), theta(1), z_(i));
        v = scores_.row(i).transpose();
        v(pos_) += theta(3) + theta(2) * cp.value;
        chunk += row_neg_ll(v, targets_.row(i).transpose(), cap_, &g);
        const double gs = g(pos_);
        part += gs * Eigen::Vector4d(theta(2) * cp.da, theta(2) * cp.db, cp.value, 1.0);
      }
      total += chunk;
      gradient += part;
    }
    const double inv = 1.0 / static_cast<double>(m);
    gradient *= inv;
    return total * inv;
  }

  double full_mean(const Eigen::VectorXd& theta) const {
    Eigen::VectorXd losses(rows());
    row_losses(theta, 0, rows(), losses);
    return chunked_mean(losses);
  }

 private:
  bool usable(const Eigen::VectorXd& theta) const {
    return theta.allFinite() && !(family_ == CurveFamily::Gaussian && theta(1) == 0.0);
  }

  const Eigen::MatrixXd& scores_;
  Eigen::MatrixXd targets_;
  Eigen::VectorXd z_;
  int pos_;
  CurveFamily family_;
  double cap_;
};

double mean_of_scores(const Eigen::MatrixXd& scores, const Eigen::MatrixXd& targets, double cap) {
  Eigen::VectorXd losses(scores.rows());
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    losses(i) = row_neg_ll(scores.row(i).transpose(), targets.row(i).transpose(), cap);
  }
  return chunked_mean(losses);
}

ItemModel empirical_start(const ObservationGrid& grid, const StatusSpace& space, StateIndex start) {
  ItemModel model = make_empty_model(space, grid.meta, start);
  const Eigen::MatrixXd t = outcome_targets(model, grid);
  const double n = static_cast<double>(grid.rows());
  const Eigen::VectorXd freq = (t.colwise().sum().transpose().array() + 0.5) / (n + 0.5 * t.cols());
  const int ref = model.reference_position();
  model.intercepts = (freq.array() / freq(ref)).log().matrix();
  model.intercepts(ref) = 0.0;
  return model;
}

struct Cell {
  Eigen::Index regressor;
  StateIndex toState;
  CurveFamily family;
};

// Best candidate over `cells`, ties resolved by cell order.
std::optional<CandidateResult> best_candidate(const ObservationGrid& grid, const ItemModel& model,
                                              const std::vector<Cell>& cells, std::uint64_t seed,
                                              const FitConfig& config) {
  const Eigen::MatrixXd scores = score_matrix(model, grid);
  std::vector<std::optional<CandidateResult>> results(cells.size());
  parallel_for(cells.size(), config.threads, [&](std::size_t i) {
    std::mt19937_64 rng(mix_seed(seed, i));
    try {
      results[i] = fit_candidate_curve(grid, model, scores, cells[i].regressor, cells[i].toState, cells[i].family,
                                       rng, config);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::DegenerateRegressor && e.kind() != ErrorKind::NonFiniteObjective) throw;
    }
  });
  std::optional<CandidateResult> best;
  for (auto& r : results) {
    if (r && (!best || r->meanNegLL < best->meanNegLL)) best = std::move(r);
  }
  return best;
}

std::vector<Cell> cells_for(const ItemModel& model, const std::vector<Eigen::Index>& regressors) {
  std::vector<Cell> cells;
  for (const auto r : regressors) {
    for (const auto s : model.outcomes()) {
      if (s == model.referenceState) continue;
      for (const auto f : kFamilies) cells.push_back({r, s, f});
    }
  }
  return cells;
}

FitReportEntry entry_for(const ItemModel& model, const CurveSpec& curve, double negLL, double dAIC, double dBIC) {
  return {model.regressors[static_cast<std::size_t>(curve.regressor)].name,
          model.space.name(curve.toState),
          curve.family,
          curve.center(),
          curve.slope(),
          negLL,
          dAIC,
          dBIC};
}

}  // namespace

CoefficientObjective::CoefficientObjective(const ObservationGrid& grid, const ItemModel& model, double cap)
    : targets_(outcome_targets(model, grid)), cap_(cap), ref_(model.reference_position()) {
  const auto k = grid.cols();
  for (Eigen::Index c = 0; c < k; ++c) {
    if (grid.meta[static_cast<std::size_t>(c)].kind == RegressorKind::Flag) flagCols_.push_back(c);
  }
  flags_.resize(grid.rows(), static_cast<Eigen::Index>(flagCols_.size()));
  for (std::size_t j = 0; j < flagCols_.size(); ++j) {
    flags_.col(static_cast<Eigen::Index>(j)) = grid.x.col(flagCols_[j]);
  }
  const auto nc = static_cast<Eigen::Index>(model.curves.size());
  curveValues_.resize(grid.rows(), nc);
  for (Eigen::Index c = 0; c < nc; ++c) {
    const auto& curve = model.curves[static_cast<std::size_t>(c)];
    curveValues_.col(c) = eval_curve(curve, grid.x.col(curve.regressor)).matrix();
    curvePos_.push_back(model.outcome_position(curve.toState));
  }
  // Betas of non-flag columns stay fixed as an offset.
  offset_ = grid.x * model.flagBetas.transpose();
  for (const auto c : flagCols_) {
    offset_ -= grid.x.col(c) * model.flagBetas.col(c).transpose();
  }
  w_ = model.outcome_count();
  for (int s = 0; s < w_; ++s) {
    if (s != ref_) free_.push_back(s);
  }
}

Eigen::Index CoefficientObjective::dimension() const {
  const auto nf = static_cast<Eigen::Index>(free_.size());
  return nf * (1 + flags_.cols()) + curveValues_.cols();
}

Eigen::VectorXd CoefficientObjective::pack(const ItemModel& model) const {
  Eigen::VectorXd theta(dimension());
  Eigen::Index p = 0;
  for (const int s : free_) theta(p++) = model.intercepts(s);
  for (const int s : free_) {
    for (const auto c : flagCols_) theta(p++) = model.flagBetas(s, c);
  }
  for (const auto& curve : model.curves) theta(p++) = curve.beta;
  return theta;
}

ItemModel CoefficientObjective::unpack(const Eigen::VectorXd& theta, ItemModel model) const {
  Eigen::Index p = 0;
  for (const int s : free_) model.intercepts(s) = theta(p++);
  for (const int s : free_) {
    for (const auto c : flagCols_) model.flagBetas(s, c) = theta(p++);
  }
  for (auto& curve : model.curves) curve.beta = theta(p++);
  return model;
}

void CoefficientObjective::row_losses(const Eigen::VectorXd& theta, Eigen::Index begin, Eigen::Index end,
                Eigen::Ref<Eigen::VectorXd> out) const {
  const Eigen::MatrixXd v = scores(theta, begin, end);
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    out(i) = row_neg_ll(v.row(i).transpose(), targets_.row(begin + i).transpose(), cap_);
  }
}

double CoefficientObjective::mean_loss_gradient(const Eigen::VectorXd& theta, Eigen::Index m,
                          Eigen::Ref<Eigen::VectorXd> gradient) const {
  gradient.setZero();
  double total = 0.0;
  OutcomeVector g;
  const auto nf = static_cast<Eigen::Index>(free_.size());
  const auto kf = flags_.cols();
  for (Eigen::Index begin = 0; begin < m; begin += kReductionChunk) {
    const Eigen::Index end = std::min(m, begin + kReductionChunk);
    const Eigen::MatrixXd v = scores(theta, begin, end);
    Eigen::MatrixXd rowGrad(v.rows(), w_);
    double chunk = 0.0;
    for (Eigen::Index i = 0; i < v.rows(); ++i) {
      chunk += row_neg_ll(v.row(i).transpose(), targets_.row(begin + i).transpose(), cap_, &g);
      rowGrad.row(i) = g.transpose();
    }
    total += chunk;
    Eigen::Index p = 0;
    for (const int s : free_) gradient(p++) += rowGrad.col(s).sum();
    if (kf > 0) {
      const Eigen::MatrixXd fg = flags_.middleRows(begin, end - begin).transpose() * rowGrad;  // kf x w
      for (Eigen::Index j = 0; j < nf; ++j) {
        gradient.segment(nf + j * kf, kf) += fg.col(free_[static_cast<std::size_t>(j)]);
      }
    }
    const Eigen::Index cb = nf * (1 + kf);
    for (Eigen::Index c = 0; c < curveValues_.cols(); ++c) {
      gradient(cb + c) += rowGrad.col(curvePos_[static_cast<std::size_t>(c)])
                              .dot(curveValues_.col(c).segment(begin, end - begin));
    }
  }
  const double inv = 1.0 / static_cast<double>(m);
  gradient *= inv;
  return total * inv;
}

Eigen::MatrixXd CoefficientObjective::scores(const Eigen::VectorXd& theta, Eigen::Index begin, Eigen::Index end) const {
  const Eigen::Index len = end - begin;
  const auto nf = static_cast<Eigen::Index>(free_.size());
  const auto kf = flags_.cols();
  Eigen::MatrixXd v = offset_.middleRows(begin, len);
  Eigen::Index p = 0;
  for (const int s : free_) v.col(s).array() += theta(p++);
  if (kf > 0) {
    for (Eigen::Index j = 0; j < nf; ++j) {
      v.col(free_[static_cast<std::size_t>(j)]) += flags_.middleRows(begin, len) * theta.segment(nf + j * kf, kf);
    }
  }
  const Eigen::Index cb = nf * (1 + kf);
  for (Eigen::Index c = 0; c < curveValues_.cols(); ++c) {
    v.col(curvePos_[static_cast<std::size_t>(c)]) += theta(cb + c) * curveValues_.col(c).segment(begin, len);
  }
  v.col(ref_).setZero();
  return v;
}

MinimizeOptions minimize_options(const FitConfig& config, Eigen::Index rows) {
  MinimizeOptions o;
  o.comparator.c = config.comparatorC;
  o.comparator.m0 = static_cast<Eigen::Index>(config.m0 > 0 ? config.m0 : default_m0(rows));
  o.comparator.sigmaStop = config.sigmaStop;
  o.comparator.adaptive = config.adaptive;
  return o;
}

double criterion_delta(int kAdded, Eigen::Index n, double negLLBefore, double negLLAfter, Criterion criterion) {
  if (n <= 0) throw Error(ErrorKind::InvalidArgument, "criterion delta needs N > 0");
  const double fit = 2.0 * static_cast<double>(n) * (negLLAfter - negLLBefore);
  const double penalty = criterion == Criterion::AIC ? 2.0 * kAdded : kAdded * std::log(static_cast<double>(n));
  return penalty + fit;
}

ItemModel fit_coefficients(const ItemModel& model, const ObservationGrid& grid, const FitConfig& config) {
  if (grid.rows() == 0) throw Error(ErrorKind::EmptyGrid, "coefficient fit on an empty grid");
  CoefficientObjective objective(grid, model, config.llCap);
  if (objective.dimension() == 0) return model;
  const Eigen::VectorXd start = objective.pack(model);
  const auto result = minimize(objective, start, minimize_options(config, grid.rows()));
  ItemModel fitted = objective.unpack(result.theta, model);
  Eigen::VectorXd before(grid.rows());
  Eigen::VectorXd after(grid.rows());
  objective.row_losses(start, 0, grid.rows(), before);
  objective.row_losses(result.theta, 0, grid.rows(), after);
  return chunked_mean(after) <= chunked_mean(before) ? fitted : model;
}

CandidateResult fit_candidate_curve(const ObservationGrid& grid, const ItemModel& model,
                                    const Eigen::MatrixXd& cachedScores, Eigen::Index regressor,
                                    StateIndex toState, CurveFamily family, std::mt19937_64& rng,
                                    const FitConfig& config) {
  const Eigen::Index n = grid.rows();
  if (n == 0) throw Error(ErrorKind::EmptyGrid, "candidate fit on an empty grid");
  if (regressor < 0 || regressor >= grid.cols()) throw Error(ErrorKind::InvalidArgument, "regressor out of range");
  const auto& meta = grid.meta[static_cast<std::size_t>(regressor)];
  if (meta.kind != RegressorKind::Real || !meta.curveEligible) {
    throw Error(ErrorKind::InvalidArgument, "regressor " + meta.name + " is not curve eligible");
  }
  if (toState == model.referenceState) throw Error(ErrorKind::InvalidArgument, "curve on the reference status");
  const int pos = model.outcome_position(toState);
  if (cachedScores.rows() != n || cachedScores.cols() != model.outcome_count()) {
    throw Error(ErrorKind::InvalidArgument, "cached scores have the wrong shape");
  }

  const Eigen::VectorXd x = grid.x.col(regressor);
  const double mean = x.mean();
  const double sd = n > 1 ? std::sqrt((x.array() - mean).square().sum() / static_cast<double>(n - 1)) : 0.0;
  if (!(sd > 0.0) || !std::isfinite(sd)) {
    throw Error(ErrorKind::DegenerateRegressor, "regressor " + meta.name + " is constant");
  }
  Eigen::VectorXd z = (x.array() - mean) / sd;

  CandidateObjective objective(cachedScores, outcome_targets(model, grid), std::move(z), pos, family,
                               config.llCap);
  const auto options = minimize_options(config, n);

  // Center at a random observation, unit scale in sd units, random beta.
  std::uniform_int_distribution<Eigen::Index> pickRow(0, n - 1);
  std::uniform_real_distribution<double> magnitude(0.1, 1.0);
  std::bernoulli_distribution positive(0.5);
  const Eigen::Index row = pickRow(rng);
  const double centre = (x(row) - mean) / sd;
  const double beta0 = (positive(rng) ? 1.0 : -1.0) * magnitude(rng);
  const auto start_for = [&](double beta) {
    return family == CurveFamily::Logistic ? Eigen::Vector4d(1.0, centre, beta, 0.0)
                                           : Eigen::Vector4d(centre, 1.0, beta, 0.0);
  };

  auto run = minimize(objective, start_for(beta0), options);
  double best = objective.full_mean(run.theta);
  if (std::abs(run.theta(2)) < 1e-8) {
    // Zero beta is a saddle; retry from the other sign.
    auto other = minimize(objective, start_for(-beta0), options);
    const double value = objective.full_mean(other.theta);
    if (value < best) {
      best = value;
      run = std::move(other);
    }
  }

  CandidateResult out;
  const Eigen::Vector4d theta = run.theta;
  CurveSpec curve;
  curve.family = family;
  curve.regressor = regressor;
  curve.toState = toState;
  curve.beta = theta(2);
  if (family == CurveFamily::Logistic) {
    curve.a = theta(0) / std::sqrt(sd);
    curve.b = mean + sd * theta(1);
  } else {
    curve.a = mean + sd * theta(0);
    curve.b = sd * theta(1);
  }
  out.curve = canonical(curve);
  out.interceptAdjustment = theta(3);
  out.meanNegLL = best;
  out.baseNegLL = mean_of_scores(cachedScores, outcome_targets(model, grid), config.llCap);
  out.deltaAIC = criterion_delta(config.paramsPerCurve, n, out.baseNegLL, best, Criterion::AIC);
  out.deltaBIC = criterion_delta(config.paramsPerCurve, n, out.baseNegLL, best, Criterion::BIC);
  out.optimizer = std::move(run);
  return out;
}

ItemModel add_curve(const ItemModel& model, const CandidateResult& candidate) {
  ItemModel out = model;
  out.intercepts(out.outcome_position(candidate.curve.toState)) += candidate.interceptAdjustment;
  out.curves.push_back(candidate.curve);
  return out;
}

std::vector<Eigen::Index> eligible_regressors(const ObservationGrid& grid) {
  std::vector<Eigen::Index> out;
  for (std::size_t k = 0; k < grid.meta.size(); ++k) {
    if (grid.meta[k].kind == RegressorKind::Real && grid.meta[k].curveEligible) {
      out.push_back(static_cast<Eigen::Index>(k));
    }
  }
  return out;
}

FitResult fit(const ObservationGrid& grid, const StatusSpace& space, const FitConfig& config) {
  if (grid.rows() == 0) throw Error(ErrorKind::EmptyGrid, "fit on an empty grid");
  return fit(grid, empirical_start(grid, space, grid.startStatus.front()), config);
}

FitResult fit(const ObservationGrid& grid, ItemModel start, const FitConfig& config) {
  check_config(config);
  const Eigen::Index n = grid.rows();
  if (n == 0) throw Error(ErrorKind::EmptyGrid, "fit on an empty grid");
  const auto eligible = eligible_regressors(grid);
  if (static_cast<int>(start.curves.size()) < config.maxCurves && eligible.empty()) {
    throw Error(ErrorKind::NoEligibleRegressors, "no real, curve-eligible regressors");
  }

  FitResult out{std::move(start), {}};
  ItemModel& model = out.model;
  FitReport& report = out.report;
  const auto cells = cells_for(model, eligible);
  for (std::uint64_t round = 0;; ++round) {
    model = fit_coefficients(model, grid, config);
    const double negLL = mean_neg_ll(grid, model, config.llCap);
    if (round == 0) report.baseNegLL = negLL;
    if (static_cast<int>(model.curves.size()) >= config.maxCurves) {
      report.reason = TerminalReason::MaxCurves;
      break;
    }
    const auto best = best_candidate(grid, model, cells, mix_seed(config.seed, round), config);
    if (!best || !(best->meanNegLL < negLL)) {
      report.reason = TerminalReason::NoImprovement;
      break;
    }
    const double dAIC = criterion_delta(config.paramsPerCurve, n, negLL, best->meanNegLL, Criterion::AIC);
    const double dBIC = criterion_delta(config.paramsPerCurve, n, negLL, best->meanNegLL, Criterion::BIC);
    if ((config.criterion == Criterion::AIC ? dAIC : dBIC) >= 0.0) {
      report.reason = TerminalReason::CriterionFailed;
      break;
    }
    model = add_curve(model, *best);
    report.entries.push_back(entry_for(model, best->curve, best->meanNegLL, dAIC, dBIC));
  }
  return out;
}

FitResult anneal(const ItemModel& model, const ObservationGrid& grid, const FitConfig& config,
                 const FitReport& report) {
  check_config(config);
  FitResult out{model, report};
  if (config.annealLoops == 0 || model.curves.empty()) return out;
  const Eigen::Index n = grid.rows();
  const double inputNegLL = mean_neg_ll(grid, model, config.llCap);

  ItemModel current = model;
  std::uint64_t stream = 0;
  for (int loop = 0; loop < config.annealLoops; ++loop) {
    current = fit_coefficients(current, grid, config);
    double currentNegLL = mean_neg_ll(grid, current, config.llCap);

    std::set<Eigen::Index> withCurves;
    for (const auto& c : current.curves) withCurves.insert(c.regressor);
    for (const auto reg : withCurves) {
      ItemModel trial = current;
      std::erase_if(trial.curves, [reg](const CurveSpec& c) { return c.regressor == reg; });
      const auto count = current.curves.size() - trial.curves.size();
      trial = fit_coefficients(trial, grid, config);
      const auto cells = cells_for(trial, {reg});
      std::vector<CurveSpec> added;
      for (std::size_t j = 0; j < count; ++j) {
        const auto best = best_candidate(grid, trial, cells, mix_seed(config.seed ^ 0xa5a5a5a5ULL, stream++), config);
        if (!best) break;
        trial = fit_coefficients(add_curve(trial, *best), grid, config);
        added.push_back(best->curve);
      }
      const double trialNegLL = mean_neg_ll(grid, trial, config.llCap);
      if (trialNegLL < currentNegLL) {
        const double delta = 2.0 * static_cast<double>(n) * (trialNegLL - currentNegLL);
        for (const auto& c : added) out.report.entries.push_back(entry_for(trial, c, trialNegLL, delta, delta));
        current = std::move(trial);
        currentNegLL = trialNegLL;
      }
    }
  }
  if (mean_neg_ll(grid, current, config.llCap) <= inputNegLL) {
    out.model = std::move(current);
  } else {
    out.report = report;
  }
  return out;
}

ObservationGrid inject_noise(const ObservationGrid& grid, const StatusSpace& space, double sd, std::mt19937_64& rng) {
  if (!(sd >= 0.0 && sd <= 1e-3)) throw Error(ErrorKind::InvalidArgument, "noise sd must lie in [0, 1e-3]");
  ObservationGrid out = grid;
  if (sd == 0.0) return out;
  std::normal_distribution<double> noise(0.0, sd);
  const double floor = sd * 1e-3;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const auto& reach = space.reachable(out.startStatus[static_cast<std::size_t>(i)]);
    double total = 0.0;
    for (const auto s : reach) {
      double& v = out.y(i, s);
      v = std::max(floor, v + noise(rng));
      total += v;
    }
    for (const auto s : reach) out.y(i, s) /= total;
  }
  return out;
}

ObservationGrid expand_categorical(const ObservationGrid& grid) {
  ObservationGrid out;
  out.startStatus = grid.startStatus;
  out.endStatus = grid.endStatus;
  out.y = grid.y;
  out.loanIds = grid.loanIds;
  out.months = grid.months;

  std::vector<Eigen::VectorXd> columns;
  for (std::size_t k = 0; k < grid.meta.size(); ++k) {
    const auto& meta = grid.meta[k];
    const auto col = grid.x.col(static_cast<Eigen::Index>(k));
    if (meta.kind != RegressorKind::Categorical) {
      out.meta.push_back(meta);
      columns.emplace_back(col);
      continue;
    }
    std::set<double> observed(col.data(), col.data() + col.size());
    if (observed.size() < 2) {
      throw Error(ErrorKind::SingleLevelCategorical, "categorical column " + meta.name + " has fewer than 2 levels");
    }
    for (std::size_t level = 1; level < meta.levels.size(); ++level) {
      RegressorMeta flag;
      flag.name = meta.name + "_" + meta.levels[level];
      flag.kind = RegressorKind::Flag;
      flag.curveEligible = false;
      out.meta.push_back(std::move(flag));
      columns.emplace_back((col.array() == static_cast<double>(level)).cast<double>().matrix());
    }
  }
  out.x.resize(grid.rows(), static_cast<Eigen::Index>(columns.size()));
  for (std::size_t k = 0; k < columns.size(); ++k) out.x.col(static_cast<Eigen::Index>(k)) = columns[k];
  return out;
}

}  // namespace item
