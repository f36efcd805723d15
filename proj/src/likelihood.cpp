#include "item/likelihood.hpp"

#include "item/curves.hpp"

namespace item {

namespace {

void check_outcomes(const ItemModel& model) {
  if (model.outcome_count() > kMaxOutcomes) {
    throw Error(ErrorKind::InvalidArgument, "too many reachable statuses for one start status");
  }
}

void check_rows(const ObservationGrid& grid, const ItemModel& model) {
  if (grid.cols() != static_cast<Eigen::Index>(model.regressors.size())) {
    throw Error(ErrorKind::InvalidArgument, "grid and model disagree on the regressor count");
  }
  for (const auto s : grid.startStatus) {
    if (s != model.startStatus) {
      throw Error(ErrorKind::InvalidArgument, "grid row has a start status the model does not cover");
    }
  }
}

}  // namespace

Eigen::VectorXd power_scores(const ItemModel& model, const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  if (row.size() != model.flagBetas.cols()) {
    throw Error(ErrorKind::InvalidArgument, "regressor row has the wrong length");
  }
  Eigen::VectorXd v = model.intercepts + model.flagBetas * row.transpose();
  for (const auto& c : model.curves) {
    v(model.outcome_position(c.toState)) += c.beta * eval_curve(c, row(c.regressor));
  }
  v(model.reference_position()) = 0.0;
  return v;
}

Eigen::MatrixXd score_matrix(const ItemModel& model, const ObservationGrid& grid) {
  check_rows(grid, model);
  Eigen::MatrixXd v = grid.x * model.flagBetas.transpose();
  v.rowwise() += model.intercepts.transpose();
  for (const auto& c : model.curves) {
    v.col(model.outcome_position(c.toState)).array() += c.beta * eval_curve(c, grid.x.col(c.regressor));
  }
  v.col(model.reference_position()).setZero();
  return v;
}

Eigen::MatrixXd outcome_targets(const ItemModel& model, const ObservationGrid& grid) {
  const auto& o = model.outcomes();
  Eigen::MatrixXd t(grid.rows(), static_cast<Eigen::Index>(o.size()));
  for (std::size_t w = 0; w < o.size(); ++w) t.col(static_cast<Eigen::Index>(w)) = grid.y.col(o[w]);
  return t;
}

Eigen::VectorXd row_neg_lls(const ObservationGrid& grid, const ItemModel& model, double cap) {
  check_outcomes(model);
  const Eigen::MatrixXd v = score_matrix(model, grid);
  const Eigen::MatrixXd t = outcome_targets(model, grid);
  Eigen::VectorXd out(grid.rows());
  for (Eigen::Index i = 0; i < grid.rows(); ++i) {
    out(i) = row_neg_ll(v.row(i).transpose(), t.row(i).transpose(), cap);
  }
  return out;
}

double chunked_mean(const Eigen::Ref<const Eigen::VectorXd>& values) {
  const Eigen::Index n = values.size();
  if (n == 0) return 0.0;
  double total = 0.0;
  for (Eigen::Index begin = 0; begin < n; begin += kReductionChunk) {
    const Eigen::Index len = std::min(kReductionChunk, n - begin);
    total += values.segment(begin, len).sum();
  }
  return total / static_cast<double>(n);
}

double mean_neg_ll(const ObservationGrid& grid, const ItemModel& model, double cap) {
  if (grid.rows() == 0) throw Error(ErrorKind::EmptyGrid, "mean negLL of an empty grid");
  return chunked_mean(row_neg_lls(grid, model, cap));
}

ModelGradient neg_ll_gradient(const ObservationGrid& grid, const ItemModel& model, double cap) {
  check_outcomes(model);
  const Eigen::Index n = grid.rows();
  if (n == 0) throw Error(ErrorKind::EmptyGrid, "gradient of an empty grid");
  const Eigen::MatrixXd v = score_matrix(model, grid);
  const Eigen::MatrixXd t = outcome_targets(model, grid);
  const Eigen::Index w = v.cols();

  // Per-row d(loss)/d(score); capped rows stay zero.
  Eigen::MatrixXd g(n, w);
  OutcomeVector row;
  for (Eigen::Index i = 0; i < n; ++i) {
    row_neg_ll(v.row(i).transpose(), t.row(i).transpose(), cap, &row);
    g.row(i) = row.transpose();
  }
  const int ref = model.reference_position();
  g.col(ref).setZero();

  const double inv = 1.0 / static_cast<double>(n);
  ModelGradient out;
  out.intercepts = g.colwise().sum().transpose() * inv;
  out.flagBetas = g.transpose() * grid.x * inv;
  const auto nc = static_cast<Eigen::Index>(model.curves.size());
  out.curveBeta = Eigen::VectorXd::Zero(nc);
  out.curveA = Eigen::VectorXd::Zero(nc);
  out.curveB = Eigen::VectorXd::Zero(nc);
  for (Eigen::Index c = 0; c < nc; ++c) {
    const auto& curve = model.curves[static_cast<std::size_t>(c)];
    const int pos = model.outcome_position(curve.toState);
    double sb = 0.0;
    double sa = 0.0;
    double sbw = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double gi = g(i, pos);
      if (gi == 0.0) continue;
      const auto p = curve_point(curve.family, curve.a, curve.b, grid.x(i, curve.regressor));
      sb += gi * p.value;
      sa += gi * curve.beta * p.da;
      sbw += gi * curve.beta * p.db;
    }
    out.curveBeta(c) = sb * inv;
    out.curveA(c) = sa * inv;
    out.curveB(c) = sbw * inv;
  }
  return out;
}

}  // namespace item
