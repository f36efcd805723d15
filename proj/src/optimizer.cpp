#include "item/optimizer.hpp"

#include <cmath>
#include <deque>

#include "item/error.hpp"
#include "item/model.hpp"

namespace item {

Eigen::Index Probe::extend(const RowObjective& objective, Eigen::Index m) {
  m = std::min(m, objective.rows());
  if (m <= filled_) return 0;
  if (losses_.size() < m) {
    Eigen::VectorXd grown(objective.rows());
    grown.head(filled_) = losses_.head(filled_);
    losses_.swap(grown);
  }
  objective.row_losses(theta_, filled_, m, losses_.segment(filled_, m - filled_));
  const Eigen::Index added = m - filled_;
  filled_ = m;
  return added;
}

AdaptiveComparator::AdaptiveComparator(const RowObjective& objective, ComparatorOptions options)
    : objective_(objective), options_(options) {
  if (!(options_.c > 0.0)) throw Error(ErrorKind::InvalidArgument, "comparator constant must be > 0");
  m0_ = options_.m0 > 0 ? options_.m0 : static_cast<Eigen::Index>(default_m0(objective.rows()));
  if (m0_ < 2) throw Error(ErrorKind::InvalidArgument, "m0 must be >= 2");
}

CompareResult AdaptiveComparator::compare(Probe& a, Probe& b) {
  const Eigen::Index n = objective_.rows();
  if (n == 0) throw Error(ErrorKind::EmptyGrid, "comparison over an empty grid");

  Eigen::Index m = options_.adaptive ? std::min(m0_, n) : n;
  Eigen::Index count = 0;
  double mean = 0.0;
  double m2 = 0.0;
  for (;;) {
    rowsEvaluated_ += a.extend(objective_, m);
    rowsEvaluated_ += b.extend(objective_, m);
    const auto la = a.losses();
    const auto lb = b.losses();
    for (Eigen::Index k = count; k < m; ++k) {
      const double d = la(k) - lb(k);
      const double delta = d - mean;
      mean += delta / static_cast<double>(k + 1);
      m2 += delta * (d - mean);
    }
    count = m;

    CompareResult r;
    r.rowsUsed = m;
    r.difference = mean;
    r.sigma = count > 1 ? std::sqrt(std::max(0.0, m2) / static_cast<double>(count - 1)) /
                              std::sqrt(static_cast<double>(count))
                        : 0.0;
    const auto decided = [&] {
      r.ordering = mean < 0.0 ? Ordering::FirstBetter : Ordering::SecondBetter;
      return r;
    };
    if (!std::isfinite(mean)) {
      r.ordering = la.head(m).allFinite() ? Ordering::FirstBetter : Ordering::SecondBetter;
      return r;
    }
    if (std::abs(mean) > options_.c * r.sigma) return decided();
    if (m == n) {
      const bool tie = options_.sigmaStop ? std::abs(mean) <= r.sigma : mean == 0.0;
      if (tie) {
        r.ordering = Ordering::IndistinguishableAtFullN;
        return r;
      }
      return decided();
    }
    m = std::min(2 * m, n);
  }
}

double AdaptiveComparator::termwise_diff(Probe& a, Probe& b, Eigen::Index k) {
  if (k < 0 || k >= objective_.rows()) throw Error(ErrorKind::InvalidArgument, "row index out of range");
  rowsEvaluated_ += a.extend(objective_, k + 1);
  rowsEvaluated_ += b.extend(objective_, k + 1);
  return a.losses()(k) - b.losses()(k);
}

double AdaptiveComparator::full_mean(Probe& p) {
  rowsEvaluated_ += p.extend(objective_, objective_.rows());
  return p.losses().mean();
}

double AdaptiveComparator::full_sigma(Probe& a, Probe& b) {
  const Eigen::Index n = objective_.rows();
  rowsEvaluated_ += a.extend(objective_, n);
  rowsEvaluated_ += b.extend(objective_, n);
  if (n < 2) return 0.0;
  const Eigen::ArrayXd d = (a.losses() - b.losses()).array();
  const double var = (d - d.mean()).square().sum() / static_cast<double>(n - 1);
  return std::sqrt(var / static_cast<double>(n));
}

// ---------------------------------------------------------------------------

namespace {

struct CurvaturePair {
  Eigen::VectorXd s;
  Eigen::VectorXd y;
  double rho;
};

Eigen::VectorXd lbfgs_direction(const Eigen::VectorXd& g, const std::deque<CurvaturePair>& history) {
  Eigen::VectorXd q = g;
  std::vector<double> alpha(history.size());
  for (std::size_t i = history.size(); i-- > 0;) {
    alpha[i] = history[i].rho * history[i].s.dot(q);
    q -= alpha[i] * history[i].y;
  }
  if (!history.empty()) {
    const auto& last = history.back();
    q *= last.s.dot(last.y) / last.y.squaredNorm();
  }
  for (std::size_t i = 0; i < history.size(); ++i) {
    const double beta = history[i].rho * history[i].y.dot(q);
    q += (alpha[i] - beta) * history[i].s;
  }
  return -q;
}

}  // namespace

MinimizeResult minimize(const RowObjective& objective, const Eigen::VectorXd& start,
                        const MinimizeOptions& options) {
  const Eigen::Index n = objective.rows();
  if (n == 0) throw Error(ErrorKind::EmptyGrid, "minimize over an empty grid");
  if (start.size() != objective.dimension()) {
    throw Error(ErrorKind::InvalidArgument, "start point has the wrong dimension");
  }
  AdaptiveComparator comparator(objective, options.comparator);

  MinimizeResult result;
  Probe startProbe(start);
  std::int64_t gradientTouched = startProbe.extend(objective, std::min(comparator.m0(), n));
  if (!startProbe.losses().allFinite() || !start.allFinite()) {
    throw Error(ErrorKind::NonFiniteObjective, "objective is not finite at the start point");
  }

  Eigen::Index gradientRows = options.comparator.adaptive ? std::min(comparator.m0(), n) : n;
  Eigen::VectorXd g(objective.dimension());
  const auto gradient_at = [&](const Eigen::VectorXd& theta, Eigen::VectorXd& out) {
    objective.mean_loss_gradient(theta, gradientRows, out);
    gradientTouched += gradientRows;
  };

  Probe current = startProbe;
  gradient_at(current.theta(), g);
  std::deque<CurvaturePair> history;

  const auto widen_sample = [&]() {
    if (gradientRows >= n) return false;
    gradientRows = std::min(2 * gradientRows, n);
    history.clear();
    gradient_at(current.theta(), g);
    return true;
  };

  result.termination = Termination::MaxIterations;
  for (int iter = 0; iter < options.maxIterations; ++iter) {
    result.iterations = iter + 1;
    if (!g.allFinite()) {
      result.termination = Termination::NonFiniteGradient;
      break;
    }
    if (g.squaredNorm() == 0.0) {
      if (widen_sample()) continue;
      result.termination = Termination::ZeroGradient;
      break;
    }
    Eigen::VectorXd d = lbfgs_direction(g, history);
    if (!d.allFinite() || g.dot(d) >= 0.0) {
      history.clear();
      d = -g;
    }
    double t = history.empty() ? std::min(1.0, 1.0 / d.lpNorm<Eigen::Infinity>()) : 1.0;
    const double xScale = 1.0 + current.theta().lpNorm<Eigen::Infinity>();
    const double dScale = d.lpNorm<Eigen::Infinity>();

    std::optional<Probe> accepted;
    CompareResult last;
    bool underflow = false;
    int ties = 0;
    for (;;) {
      if (t * dScale < 1e-13 * xScale) {
        underflow = true;
        break;
      }
      Probe candidate(current.theta() + t * d);
      if (!candidate.theta().allFinite()) {
        t *= 0.5;
        continue;
      }
      last = comparator.compare(candidate, current);
      if (last.ordering == Ordering::FirstBetter && std::isfinite(last.difference)) {
        accepted.emplace(std::move(candidate));
        break;
      }
      // A tie may be an overshoot straddling the minimum; one shorter step
      // tells that apart from having converged.
      if (last.ordering == Ordering::IndistinguishableAtFullN && ++ties == 2) break;
      t *= 0.5;
    }

    if (!accepted) {
      if (widen_sample()) continue;
      result.termination = underflow ? Termination::StepUnderflow : Termination::Indistinguishable;
      break;
    }

    ++result.acceptedSteps;
    const Eigen::Index previousRows = gradientRows;
    gradientRows = std::max(gradientRows, last.rowsUsed);
    Eigen::VectorXd gNew(objective.dimension());
    if (gradientRows == previousRows) {
      gradient_at(accepted->theta(), gNew);
      CurvaturePair pair{accepted->theta() - current.theta(), gNew - g, 0.0};
      const double sy = pair.s.dot(pair.y);
      if (sy > 1e-12 * pair.s.norm() * pair.y.norm() && sy > 0.0) {
        pair.rho = 1.0 / sy;
        history.push_back(std::move(pair));
        if (static_cast<int>(history.size()) > options.history) history.pop_front();
      }
    } else {
      history.clear();
      gradient_at(accepted->theta(), gNew);
    }
    current = std::move(*accepted);
    g = std::move(gNew);
  }

  // Never hand back something measurably worse than the start.
  if (result.acceptedSteps > 0) {
    const auto check = comparator.compare(current, startProbe);
    if (check.ordering == Ordering::SecondBetter) {
      result.revertedToStart = true;
      current = startProbe;
    }
  }
  result.theta = current.theta();
  result.gradientRows = gradientRows;
  result.rowsTouched = comparator.rows_evaluated() + gradientTouched;
  return result;
}

}  // namespace item
