#include <cmath>
#include <random>

#include "doctest.h"
#include "fixtures.hpp"
#include "item/projection.hpp"

using namespace item;
using doctest::Approx;

namespace {

StatusSpace two_state() { return StatusSpace({"C", "P"}, {{"C", {"C", "P"}}}, {"P"}); }

MatrixTransitionModel three_state_matrix() {
  Eigen::Matrix3d m;
  // Order C, P, 3.
  m << 0.9, 0.04, 0.06,  //
      0.0, 1.0, 0.0,     //
      0.3, 0.1, 0.6;
  return MatrixTransitionModel(fixtures::three_state_space(), {m});
}

double max_tv(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return 0.5 * (a - b).cwiseAbs().rowwise().sum().maxCoeff();
}

/// C and 3 models over one covariate "r" and a time-in-state column "tis".
std::vector<ItemModel> covariate_models() {
  const auto space = fixtures::three_state_space();
  const std::vector<RegressorMeta> meta = {{"r", RegressorKind::Real, {}, true}, {"tis", RegressorKind::Real, {}, true}};
  ItemModel c = make_empty_model(space, meta, space.index("C"));
  c.intercepts(c.outcome_position(space.index("P"))) = -3.0;
  c.intercepts(c.outcome_position(space.index("3"))) = -2.5;
  c.curves.push_back({CurveFamily::Logistic, 1.0, 0.5, 0, space.index("P"), 1.5});
  ItemModel d = make_empty_model(space, meta, space.index("3"));
  d.intercepts(d.outcome_position(space.index("C"))) = -1.0;
  d.intercepts(d.outcome_position(space.index("P"))) = -2.0;
  d.curves.push_back({CurveFamily::Gaussian, 1.0, 1.5, 1, space.index("C"), 1.2});
  return {c, d};
}

Eigen::MatrixXd covariate_path(int length) {
  Eigen::MatrixXd x(length, 2);
  for (int t = 0; t < length; ++t) {
    x(t, 0) = std::sin(0.3 * t);
    x(t, 1) = 0.0;
  }
  return x;
}

}  // namespace

TEST_SUITE("projection") {

TEST_CASE("identity matrix leaves the distribution in place") {
  const MatrixTransitionModel id(two_state(), {Eigen::Matrix2d::Identity()});
  const Eigen::Vector2d s0(0.3, 0.7);
  const auto p = project_matrix(id, s0, 5);
  for (int t = 0; t <= 5; ++t) CHECK((p.probability.row(t).transpose() - s0).norm() == 0.0);
}

TEST_CASE("two-state matrix power") {
  Eigen::Matrix2d m;
  m << 0.9, 0.1, 0.0, 1.0;
  const MatrixTransitionModel model(two_state(), {m});
  const auto p = project_matrix(model, Eigen::Vector2d(1.0, 0.0), 3);
  CHECK(p.probability(3, 0) == Approx(0.729).epsilon(1e-12));
  CHECK(p.probability(3, 1) == Approx(0.271).epsilon(1e-12));
  CHECK(p.rowsPerPath == Approx(2.0 * 3));
}

TEST_CASE("matrix projection conserves probability") {
  const auto model = three_state_matrix();
  const auto p = project_matrix(model, Eigen::Vector3d(0.2, 0.3, 0.5), 50);
  CHECK((p.probability.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-9);
  CHECK((p.probability.array() >= 0.0).all());
}

TEST_CASE("matrix validation") {
  Eigen::Matrix2d bad;
  bad << 0.9, 0.2, 0.0, 1.0;
  CHECK_THROWS_AS(MatrixTransitionModel(two_state(), {bad}), Error);
  Eigen::Matrix2d leaky;
  leaky << 0.9, 0.1, 0.5, 0.5;
  CHECK_THROWS_AS(MatrixTransitionModel(two_state(), {leaky}), Error);
}

TEST_CASE("item transition rows are stochastic and absorbing rows are indicators") {
  const ItemTransitionModel model(covariate_models(), covariate_path(10));
  const std::vector<StateIndex> history{0};
  for (int t = 0; t < 15; ++t) {
    for (StateIndex s = 0; s < 3; ++s) {
      const auto r = model.row(s, t, history);
      CHECK(std::abs(r.sum() - 1.0) < 1e-12);
      CHECK((r.array() >= 0.0).all());
    }
    const auto p = model.row(1, t, history);
    CHECK(p(1) == 1.0);
  }
}

TEST_CASE("path-dependent models are rejected by the matrix method") {
  const ItemTransitionModel model(covariate_models(), covariate_path(10), {1});
  CHECK_FALSE(model.markovian());
  try {
    project_matrix(model, Eigen::Vector3d(1, 0, 0), 4);
    FAIL("expected NonMarkovianRegressor");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NonMarkovianRegressor);
  }
}

TEST_CASE("simulation from an absorbing state stays put") {
  const auto model = three_state_matrix();
  const auto p = simulate_paths(model, 1, 10, 100, 3);
  for (int t = 0; t <= 10; ++t) CHECK(p.probability(t, 1) == 1.0);
}

TEST_CASE("simulation matches the matrix within three standard errors") {
  Eigen::Matrix2d m;
  m << 0.93, 0.07, 0.0, 1.0;
  const MatrixTransitionModel model(two_state(), {m});
  const auto exact = project_matrix(model, Eigen::Vector2d(1, 0), 20);
  const auto sim = simulate_paths(model, 0, 20, 100000, 17);
  for (int t = 1; t <= 20; ++t) {
    const double p = exact.probability(t, 0);
    const double se = std::sqrt(p * (1 - p) / 100000.0);
    CHECK(std::abs(sim.probability(t, 0) - p) < 3.0 * se);
    CHECK(sim.stdError(t, 0) == Approx(se).epsilon(0.05));
  }
}

TEST_CASE("simulation is reproducible and thread independent") {
  const ItemTransitionModel model(covariate_models(), covariate_path(30), {1});
  const auto a = simulate_paths(model, 0, 30, 5000, 99, 1);
  const auto b = simulate_paths(model, 0, 30, 5000, 99, 1);
  const auto c = simulate_paths(model, 0, 30, 5000, 99, 4);
  CHECK(a.probability == b.probability);
  CHECK(a.probability == c.probability);
  CHECK(a.transitionRows == c.transitionRows);
  const auto d = simulate_paths(model, 0, 30, 5000, 100, 1);
  CHECK(a.probability != d.probability);
}

TEST_CASE("hybrid trace by hand") {
  Eigen::Matrix3d m;
  m << 0.9, 0.1, 0.0,  //
      0.0, 1.0, 0.0,   //
      0.3, 0.1, 0.6;
  const MatrixTransitionModel model(fixtures::three_state_space(), {m});
  const auto trace = hybrid_trace(model, 0, 3);
  CHECK(trace.alwaysStart(3) == Approx(0.729).epsilon(1e-12));
  CHECK(trace.absorbed(3, 1) == Approx(0.271).epsilon(1e-12));
  CHECK(trace.entryTotal == 0.0);
  CHECK(trace.entryDistribution.isZero());

  // No entries: the hybrid is the exact two-state trace with zero simulations.
  const auto h = project_hybrid(model, 0, 3, 1000, 5);
  CHECK(h.probability(3, 0) == Approx(0.729).epsilon(1e-12));
  CHECK(h.probability(3, 1) == Approx(0.271).epsilon(1e-12));
  CHECK(h.probability(3, 2) == 0.0);
  CHECK(h.stdError.isZero());
  CHECK(h.transitionRows == trace.transitionRows);
}

TEST_CASE("hybrid trace invariants") {
  const ItemTransitionModel model(covariate_models(), covariate_path(40), {1});
  const auto trace = hybrid_trace(model, 0, 40);
  double entered = 0.0;
  for (int t = 0; t <= 40; ++t) {
    if (t > 0) CHECK(trace.alwaysStart(t) <= trace.alwaysStart(t - 1));
    entered += trace.entries.row(t).sum();
    CHECK(trace.alwaysStart(t) + trace.absorbed.row(t).sum() + entered == Approx(1.0).epsilon(1e-9));
  }
  CHECK(trace.entryTotal == Approx(entered).epsilon(1e-12));
  CHECK(trace.entryDistribution.sum() == Approx(1.0).epsilon(1e-12));
  CHECK(trace.transitionRows == 40);
}

TEST_CASE("hybrid matches the matrix method on a Markovian model") {
  const ItemTransitionModel model(covariate_models(), covariate_path(60));
  const auto exact = project_matrix(model, Eigen::Vector3d(1, 0, 0), 60);
  const auto h = project_hybrid(model, 0, 60, 100000, 7);
  CHECK(max_tv(exact.probability, h.probability) < 0.01);
  CHECK((h.probability.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-9);
  CHECK(h.rowsPerPath < exact.rowsPerPath);
}

TEST_CASE("hybrid estimate of the start state is less noisy than plain simulation") {
  const auto model = three_state_matrix();
  const int reps = 40;
  const int horizon = 24;
  std::vector<double> hybrid;
  std::vector<double> plain;
  for (int r = 0; r < reps; ++r) {
    hybrid.push_back(project_hybrid(model, 0, horizon, 2000, 1000 + r).probability(horizon, 0));
    plain.push_back(simulate_paths(model, 0, horizon, 2000, 1000 + r).probability(horizon, 0));
  }
  const auto variance = [](const std::vector<double>& v) {
    double mean = 0.0;
    for (const double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double s = 0.0;
    for (const double x : v) s += (x - mean) * (x - mean);
    return s / static_cast<double>(v.size() - 1);
  };
  CHECK(variance(hybrid) <= variance(plain));
}

TEST_CASE("hybrid agrees with simulation on a path-dependent model") {
  const ItemTransitionModel model(covariate_models(), covariate_path(24), {1});
  const auto sim = simulate_paths(model, 0, 24, 100000, 3);
  const auto h = project_hybrid(model, 0, 24, 100000, 4);
  for (int t = 0; t <= 24; ++t) {
    for (int s = 0; s < 3; ++s) {
      const double se = std::hypot(sim.stdError(t, s), h.stdError(t, s));
      CHECK(std::abs(sim.probability(t, s) - h.probability(t, s)) <= 4.0 * se + 1e-12);
    }
  }
}

TEST_CASE("hybrid argument checks") {
  const auto model = three_state_matrix();
  CHECK_THROWS_AS(project_hybrid(model, 0, 10, 0, 1), Error);
  const auto zero = project_hybrid(model, 0, 0, 10, 1);
  CHECK(zero.probability.rows() == 1);
  CHECK(zero.probability(0, 0) == 1.0);
}

TEST_CASE("allocation by hand") {
  std::mt19937_64 rng(1);
  const auto a = allocate_paths({1.0, 0.0, 0.0}, 2, rng);
  CHECK(a.epsilon == Approx(1.0 / 6.0));
  CHECK(a.gamma == 1.0);
  CHECK(a.counts == std::vector<std::int64_t>{6, 0, 0});
  CHECK(a.assigned == 6);

  try {
    allocate_paths({0.0, 0.0}, 3, rng);
    FAIL("expected AllZeroWeights");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::AllZeroWeights);
  }
  CHECK_THROWS_AS(allocate_paths({1.0, -1.0}, 3, rng), Error);
  CHECK_THROWS_AS(allocate_paths({1.0}, 0, rng), Error);
}

TEST_CASE("allocation bounds") {
  std::mt19937_64 rng(8);
  const std::vector<double> w{0.5, 3.0, 0.01, 1.2, 0.0};
  for (int r = 0; r < 200; ++r) {
    const auto a = allocate_paths(w, 4, rng);
    std::int64_t total = 0;
    for (const auto c : a.counts) total += c;
    CHECK(total == a.assigned);
    CHECK(a.assigned <= 20);
    CHECK(a.counts[4] == 0);
  }
}

TEST_CASE("deterministic allocation") {
  const auto equal = allocate_paths_deterministic({2.0, 2.0, 2.0, 2.0}, 5);
  CHECK(equal.counts == std::vector<std::int64_t>{5, 5, 5, 5});
  const auto mixed = allocate_paths_deterministic({1.0, 3.0, 0.0}, 2);
  // eps = 4 / 6
  CHECK(mixed.counts == std::vector<std::int64_t>{2, 5, 0});
}

}  // TEST_SUITE
