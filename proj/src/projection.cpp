#include "item/projection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "item/concurrency.hpp"
#include "item/likelihood.hpp"

namespace item {

namespace {

constexpr std::int64_t kPathBlock = 1024;

void check_horizon(int horizon) {
  if (horizon < 0) throw Error(ErrorKind::InvalidArgument, "horizon must be >= 0");
}

void check_state(const StatusSpace& space, StateIndex s) {
  if (s < 0 || s >= space.size()) throw Error(ErrorKind::InvalidArgument, "state index out of range");
}

StateIndex draw_state(const Eigen::VectorXd& p, double u) {
  double cumulative = 0.0;
  const auto last = static_cast<StateIndex>(p.size() - 1);
  for (StateIndex s = 0; s < last; ++s) {
    cumulative += p(s);
    if (u < cumulative) return s;
  }
  // Round-off can leave the cumulative sum just under 1.
  StateIndex s = last;
  while (s > 0 && p(s) == 0.0) --s;
  return s;
}

// Runs `history` forward from its last entry to the horizon, writing the
// state at each time into `states`. Returns transition rows evaluated.
std::int64_t run_path(const TransitionModel& model, std::vector<StateIndex>& history, int horizon,
                      std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::int64_t rows = 0;
  const auto& space = model.space();
  while (static_cast<int>(history.size()) <= horizon) {
    const StateIndex current = history.back();
    const int t = static_cast<int>(history.size()) - 1;
    if (space.is_absorbing(current)) {
      history.push_back(current);
      continue;
    }
    const Eigen::VectorXd p = model.row(current, t, history);
    ++rows;
    history.push_back(draw_state(p, uniform(rng)));
  }
  return rows;
}

struct PathCounts {
  Eigen::MatrixXd counts;
  std::int64_t rows = 0;
};

// Simulates paths [0, n) in fixed blocks; `prepare(i, rng)` seeds the
// history of path i. Block results are summed in block order.
template <typename Prepare>
PathCounts simulate_blocks(const TransitionModel& model, int horizon, std::int64_t n, std::uint64_t seed,
                           int threads, Prepare prepare) {
  const int states = model.space().size();
  const auto blocks = static_cast<std::size_t>((n + kPathBlock - 1) / kPathBlock);
  std::vector<PathCounts> partial(blocks);
  parallel_for(blocks, threads, [&](std::size_t b) {
    PathCounts& out = partial[b];
    out.counts = Eigen::MatrixXd::Zero(horizon + 1, states);
    std::vector<StateIndex> history;
    const std::int64_t begin = static_cast<std::int64_t>(b) * kPathBlock;
    const std::int64_t end = std::min(n, begin + kPathBlock);
    for (std::int64_t i = begin; i < end; ++i) {
      std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(i)));
      history.clear();
      prepare(i, rng, history);
      out.rows += run_path(model, history, horizon, rng);
      for (int t = 0; t <= horizon; ++t) out.counts(t, history[static_cast<std::size_t>(t)]) += 1.0;
    }
  });
  PathCounts total{Eigen::MatrixXd::Zero(horizon + 1, states), 0};
  for (const auto& p : partial) {
    total.counts += p.counts;
    total.rows += p.rows;
  }
  return total;
}

}  // namespace

MatrixTransitionModel::MatrixTransitionModel(StatusSpace space, std::vector<Eigen::MatrixXd> matrices)
    : space_(std::move(space)), matrices_(std::move(matrices)) {
  if (matrices_.empty()) throw Error(ErrorKind::InvalidArgument, "at least one transition matrix is needed");
  const int m = space_.size();
  for (const auto& mat : matrices_) {
    if (mat.rows() != m || mat.cols() != m) throw Error(ErrorKind::InvalidArgument, "transition matrix shape");
    if (!mat.allFinite() || (mat.array() < 0.0).any()) {
      throw Error(ErrorKind::InvalidArgument, "transition matrix has negative or non-finite entries");
    }
    for (int i = 0; i < m; ++i) {
      if (std::abs(mat.row(i).sum() - 1.0) > 1e-12) {
        throw Error(ErrorKind::InvalidArgument, "transition matrix row does not sum to 1");
      }
      if (space_.is_absorbing(i) && mat(i, i) != 1.0) {
        throw Error(ErrorKind::InvalidArgument, "absorbing state " + space_.name(i) + " must map to itself");
      }
    }
  }
}

Eigen::VectorXd MatrixTransitionModel::row(StateIndex from, int t, std::span<const StateIndex>) const {
  check_state(space_, from);
  const auto& mat = matrices_[std::min(static_cast<std::size_t>(std::max(t, 0)), matrices_.size() - 1)];
  return mat.row(from).transpose();
}

ItemTransitionModel::ItemTransitionModel(std::vector<ItemModel> models, Eigen::MatrixXd covariates,
                                         std::vector<Eigen::Index> timeInState)
    : models_(std::move(models)), covariates_(std::move(covariates)), timeInState_(std::move(timeInState)) {
  if (models_.empty()) throw Error(ErrorKind::InvalidArgument, "no models given");
  if (covariates_.rows() == 0) throw Error(ErrorKind::InvalidArgument, "covariate path is empty");
  for (std::size_t i = 0; i < models_.size(); ++i) {
    const auto& m = models_[i];
    check_model(m);
    if (!(m.space == models_.front().space)) throw Error(ErrorKind::InvalidArgument, "models disagree on states");
    if (m.regressors != models_.front().regressors) {
      throw Error(ErrorKind::InvalidArgument, "models disagree on regressors");
    }
    if (!byStart_.emplace(m.startStatus, i).second) {
      throw Error(ErrorKind::InvalidArgument, "two models for start status " + m.space.name(m.startStatus));
    }
  }
  if (covariates_.cols() != static_cast<Eigen::Index>(models_.front().regressors.size())) {
    throw Error(ErrorKind::InvalidArgument, "covariate path has the wrong number of columns");
  }
  for (const auto c : timeInState_) {
    if (c < 0 || c >= covariates_.cols()) throw Error(ErrorKind::InvalidArgument, "time-in-state column out of range");
  }
}

Eigen::VectorXd ItemTransitionModel::row(StateIndex from, int t, std::span<const StateIndex> history) const {
  const auto& space = this->space();
  check_state(space, from);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(space.size());
  if (space.is_absorbing(from)) {
    out(from) = 1.0;
    return out;
  }
  const auto it = byStart_.find(from);
  if (it == byStart_.end()) throw Error(ErrorKind::InvalidArgument, "no model for start status " + space.name(from));
  const auto& model = models_[it->second];
  Eigen::RowVectorXd x = covariates_.row(std::min<Eigen::Index>(std::max(t, 0), covariates_.rows() - 1));
  if (!timeInState_.empty()) {
    if (history.empty()) throw Error(ErrorKind::InvalidArgument, "path-dependent model needs a history");
    std::size_t run = 1;
    while (run < history.size() && history[history.size() - 1 - run] == history.back()) ++run;
    for (const auto c : timeInState_) x(c) = static_cast<double>(run - 1);
  }
  const Eigen::VectorXd p = softmax(power_scores(model, x));
  const auto& outcomes = model.outcomes();
  for (std::size_t w = 0; w < outcomes.size(); ++w) out(outcomes[w]) = p(static_cast<Eigen::Index>(w));
  return out;
}

Projection project_matrix(const TransitionModel& model, const Eigen::VectorXd& s0, int horizon) {
  check_horizon(horizon);
  if (!model.markovian()) {
    throw Error(ErrorKind::NonMarkovianRegressor, "matrix projection needs a model without path-dependent inputs");
  }
  const int m = model.space().size();
  if (s0.size() != m) throw Error(ErrorKind::InvalidArgument, "initial distribution has the wrong size");
  if (!s0.allFinite() || (s0.array() < 0.0).any() || std::abs(s0.sum() - 1.0) > 1e-12) {
    throw Error(ErrorKind::InvalidArgument, "initial distribution must be a probability vector");
  }
  Projection out;
  out.probability.resize(horizon + 1, m);
  out.stdError = Eigen::MatrixXd::Zero(horizon + 1, m);
  out.probability.row(0) = s0.transpose();
  Eigen::MatrixXd mat(m, m);
  for (int t = 0; t < horizon; ++t) {
    for (StateIndex i = 0; i < m; ++i) mat.row(i) = model.row(i, t, {}).transpose();
    out.transitionRows += m;
    out.probability.row(t + 1) = out.probability.row(t) * mat;
  }
  out.rowsPerPath = static_cast<double>(out.transitionRows);
  return out;
}

Projection simulate_paths(const TransitionModel& model, StateIndex start, int horizon, std::int64_t nPaths,
                          std::uint64_t seed, int threads) {
  check_horizon(horizon);
  check_state(model.space(), start);
  if (nPaths < 1) throw Error(ErrorKind::InvalidArgument, "nPaths must be >= 1");
  const auto counts = simulate_blocks(model, horizon, nPaths, seed, threads,
                                      [start](std::int64_t, std::mt19937_64&, std::vector<StateIndex>& h) {
                                        h.push_back(start);
                                      });
  const double n = static_cast<double>(nPaths);
  Projection out;
  out.probability = counts.counts / n;
  out.stdError = (out.probability.array() * (1.0 - out.probability.array()) / n).sqrt().matrix();
  out.transitionRows = counts.rows;
  out.rowsPerPath = static_cast<double>(counts.rows) / n;
  return out;
}

HybridTrace hybrid_trace(const TransitionModel& model, StateIndex start, int horizon) {
  check_horizon(horizon);
  const auto& space = model.space();
  check_state(space, start);
  const int m = space.size();
  HybridTrace trace;
  trace.start = start;
  trace.horizon = horizon;
  trace.alwaysStart = Eigen::VectorXd::Zero(horizon + 1);
  trace.absorbed = Eigen::MatrixXd::Zero(horizon + 1, m);
  trace.entries = Eigen::MatrixXd::Zero(horizon + 1, m);
  trace.alwaysStart(0) = 1.0;
  const std::vector<StateIndex> history(static_cast<std::size_t>(horizon + 1), start);
  for (int t = 0; t < horizon; ++t) {
    const double stay = trace.alwaysStart(t);
    trace.absorbed.row(t + 1) = trace.absorbed.row(t);
    if (space.is_absorbing(start)) {
      trace.alwaysStart(t + 1) = stay;
      continue;
    }
    const Eigen::VectorXd p = model.row(start, t, std::span(history).first(static_cast<std::size_t>(t + 1)));
    ++trace.transitionRows;
    for (StateIndex s = 0; s < m; ++s) {
      if (s == start) continue;
      if (space.is_absorbing(s)) {
        trace.absorbed(t + 1, s) += stay * p(s);
      } else {
        trace.entries(t + 1, s) = stay * p(s);
      }
    }
    trace.alwaysStart(t + 1) = stay * p(start);
  }
  trace.entryTotal = trace.entries.sum();
  trace.entryDistribution = trace.entryTotal > 0.0 ? Eigen::MatrixXd(trace.entries / trace.entryTotal)
                                                   : Eigen::MatrixXd::Zero(horizon + 1, m);
  return trace;
}

Projection project_hybrid(const TransitionModel& model, StateIndex start, int horizon, std::int64_t nSims,
                          std::uint64_t seed, int threads) {
  const HybridTrace trace = hybrid_trace(model, start, horizon);
  const int m = model.space().size();
  if (nSims < 0) throw Error(ErrorKind::InvalidArgument, "nSims must be >= 0");
  const double total = trace.entryTotal;
  if (total > 0.0 && nSims == 0) throw Error(ErrorKind::InvalidArgument, "entry mass is positive but nSims is 0");

  // Paths not yet entered count as still in `start`, so the deterministic
  // part holds alwaysStart minus the entry mass still to come.
  Eigen::VectorXd entered(horizon + 1);
  double cumulative = 0.0;
  for (int t = 0; t <= horizon; ++t) {
    cumulative += trace.entries.row(t).sum();
    entered(t) = cumulative;
  }
  Projection out;
  out.probability = trace.absorbed;
  out.probability.col(start) += (trace.alwaysStart.array() - (total - entered.array())).matrix();
  out.stdError = Eigen::MatrixXd::Zero(horizon + 1, m);
  out.transitionRows = trace.transitionRows;
  out.rowsPerPath = static_cast<double>(trace.transitionRows);
  if (total == 0.0) return out;

  // Inverse-CDF table over (entry time, entry state).
  std::vector<double> cdf;
  std::vector<std::pair<int, StateIndex>> cells;
  double running = 0.0;
  for (int t = 1; t <= horizon; ++t) {
    for (StateIndex s = 0; s < m; ++s) {
      if (trace.entryDistribution(t, s) > 0.0) {
        running += trace.entryDistribution(t, s);
        cdf.push_back(running);
        cells.emplace_back(t, s);
      }
    }
  }
  const auto counts = simulate_blocks(
      model, horizon, nSims, seed, threads,
      [&](std::int64_t, std::mt19937_64& rng, std::vector<StateIndex>& h) {
        const double u = std::uniform_real_distribution<double>(0.0, running)(rng);
        const auto k = std::min<std::size_t>(
            static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin()), cells.size() - 1);
        h.assign(static_cast<std::size_t>(cells[k].first), start);
        h.push_back(cells[k].second);
      });
  const double n = static_cast<double>(nSims);
  const Eigen::ArrayXXd f = counts.counts.array() / n;
  out.probability += (total * f).matrix();
  out.stdError = (total * (f * (1.0 - f) / n).sqrt()).matrix();
  out.transitionRows += counts.rows;
  out.rowsPerPath += static_cast<double>(counts.rows) / n;
  return out;
}

PathAllocation allocate_paths(std::vector<double> w, int q, std::mt19937_64& rng) {
  if (q < 1) throw Error(ErrorKind::InvalidArgument, "q must be >= 1");
  if (w.empty()) throw Error(ErrorKind::AllZeroWeights, "no loans to allocate");
  for (const double v : w) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw Error(ErrorKind::InvalidArgument, "weights must be finite and >= 0");
  }
  PathAllocation out;
  out.gamma = std::accumulate(w.begin(), w.end(), 0.0);
  if (!(out.gamma > 0.0)) throw Error(ErrorKind::AllZeroWeights, "every weight is zero");
  const auto n = static_cast<std::int64_t>(w.size());
  const std::int64_t budget = n * q;
  out.epsilon = out.gamma / static_cast<double>(budget);
  out.counts.assign(w.size(), 0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const auto open = [&] {
    return std::any_of(w.begin(), w.end(), [&](double v) { return v > out.epsilon / 2.0; });
  };
  while (out.assigned < budget && open()) {
    for (std::size_t i = 0; i < w.size() && out.assigned < budget; ++i) {
      const double alpha = std::clamp(w[i] / out.epsilon, 0.0, 1.0);
      const double nu = uniform(rng);
      if (nu >= alpha) continue;
      w[i] -= out.epsilon;
      ++out.counts[i];
      ++out.assigned;
    }
  }
  return out;
}

PathAllocation allocate_paths_deterministic(const std::vector<double>& w, int q) {
  if (q < 1) throw Error(ErrorKind::InvalidArgument, "q must be >= 1");
  if (w.empty()) throw Error(ErrorKind::AllZeroWeights, "no loans to allocate");
  PathAllocation out;
  for (const double v : w) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw Error(ErrorKind::InvalidArgument, "weights must be finite and >= 0");
    out.gamma += v;
  }
  if (!(out.gamma > 0.0)) throw Error(ErrorKind::AllZeroWeights, "every weight is zero");
  out.epsilon = out.gamma / (static_cast<double>(w.size()) * q);
  for (const double v : w) {
    // Ratios a few ulps above an integer come from the division, not the data.
    const auto c = static_cast<std::int64_t>(std::ceil(v / out.epsilon * (1.0 - 1e-12)));
    out.counts.push_back(c);
    out.assigned += c;
  }
  return out;
}

}  // namespace item
