#pragma once

// Shared synthetic fixtures for the unit and acceptance tests.

#include <cmath>

#include "item/data_io.hpp"
#include "item/model.hpp"

namespace item::fixtures {

/// C -> {C, P, 3}, 3 -> {C, 3, P}, P absorbing.
inline StatusSpace three_state_space() {
  return StatusSpace({"C", "P", "3"}, {{"C", {"C", "P", "3"}}, {"3", {"C", "3", "P"}}}, {"P"});
}

inline std::vector<RegressorMeta> five_regressors() {
  return {{"A", RegressorKind::Real, {}, true},
          {"B", RegressorKind::Real, {}, true},
          {"N1", RegressorKind::Real, {}, true},
          {"N2", RegressorKind::Real, {}, true},
          {"N3", RegressorKind::Real, {}, true}};
}

inline std::vector<RegressorDistribution> five_distributions() {
  using K = RegressorDistribution::Kind;
  return {{K::Uniform, 0.0, 10.0}, {K::Normal, 0.0, 1.0}, {K::Uniform, 0.0, 1.0}, {K::Normal, 0.0, 1.0},
          {K::Uniform, -5.0, 5.0}};
}

/// Two-curve truth: a logistic step on A into P and a Gaussian bump on B
/// into 3. N1..N3 carry no signal.
inline ItemModel two_curve_truth() {
  const auto space = three_state_space();
  ItemModel m = make_empty_model(space, five_regressors(), space.index("C"));
  m.intercepts(m.outcome_position(space.index("P"))) = -2.5;
  m.intercepts(m.outcome_position(space.index("3"))) = -3.0;
  m.curves.push_back({CurveFamily::Logistic, std::sqrt(1.5), 5.0, 0, space.index("P"), 2.0});
  m.curves.push_back({CurveFamily::Gaussian, 0.5, 0.7, 1, space.index("3"), 1.5});
  return m;
}

/// Same regressors, no dependence on them.
inline ItemModel noise_truth() {
  const auto space = three_state_space();
  ItemModel m = make_empty_model(space, five_regressors(), space.index("C"));
  m.intercepts(m.outcome_position(space.index("P"))) = -2.0;
  m.intercepts(m.outcome_position(space.index("3"))) = -2.5;
  return m;
}

inline SyntheticSpec spec_for(ItemModel truth, std::int64_t n, std::uint64_t seed) {
  return {std::move(truth), five_distributions(), n, seed};
}

}  // namespace item::fixtures
