#include <random>

#include "doctest.h"
#include "item/error.hpp"
#include "item/optimizer.hpp"

using namespace item;
using doctest::Approx;

namespace {

// loss_k(theta) = 0.5 |theta - c_k|^2; minimized at the mean of c.
class Quadratic final : public RowObjective {
 public:
  Quadratic(Eigen::Index n, int dim, std::uint64_t seed) : c_(n, dim) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(1.5, 1.0);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (int j = 0; j < dim; ++j) c_(i, j) = noise(rng);
    }
  }
  Eigen::Index rows() const override { return c_.rows(); }
  Eigen::Index dimension() const override { return c_.cols(); }
  void row_losses(const Eigen::VectorXd& theta, Eigen::Index begin, Eigen::Index end,
                  Eigen::Ref<Eigen::VectorXd> out) const override {
    for (Eigen::Index i = begin; i < end; ++i) out(i - begin) = 0.5 * (c_.row(i).transpose() - theta).squaredNorm();
  }
  double mean_loss_gradient(const Eigen::VectorXd& theta, Eigen::Index m,
                            Eigen::Ref<Eigen::VectorXd> gradient) const override {
    const Eigen::VectorXd mean = c_.topRows(m).colwise().mean().transpose();
    gradient = theta - mean;
    double total = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) total += 0.5 * (c_.row(i).transpose() - theta).squaredNorm();
    return total / static_cast<double>(m);
  }
  Eigen::VectorXd minimum() const { return c_.colwise().mean().transpose(); }

 private:
  Eigen::MatrixXd c_;
};

class NanAtOrigin final : public RowObjective {
 public:
  Eigen::Index rows() const override { return 10; }
  Eigen::Index dimension() const override { return 1; }
  void row_losses(const Eigen::VectorXd& theta, Eigen::Index, Eigen::Index,
                  Eigen::Ref<Eigen::VectorXd> out) const override {
    out.setConstant(theta(0) == 0.0 ? std::numeric_limits<double>::quiet_NaN() : theta(0) * theta(0));
  }
  double mean_loss_gradient(const Eigen::VectorXd& theta, Eigen::Index,
                            Eigen::Ref<Eigen::VectorXd> gradient) const override {
    gradient(0) = 2 * theta(0);
    return theta(0) * theta(0);
  }
};

/// loss_k(theta) = theta(0) + noise_k(theta(1)): the second coordinate picks
/// an independent noise stream, so probes with equal theta(0) have equal means.
class NoisyRows final : public RowObjective {
 public:
  NoisyRows(Eigen::Index n, std::uint64_t seed) : n_(n), seed_(seed) {}
  Eigen::Index rows() const override { return n_; }
  Eigen::Index dimension() const override { return 2; }
  void row_losses(const Eigen::VectorXd& theta, Eigen::Index begin, Eigen::Index end,
                  Eigen::Ref<Eigen::VectorXd> out) const override {
    std::mt19937_64 rng(seed_ * 1000003ULL + static_cast<std::uint64_t>(theta(1)));
    std::normal_distribution<double> noise(0.0, 1.0);
    for (Eigen::Index k = 0; k < begin; ++k) noise(rng);
    for (Eigen::Index k = begin; k < end; ++k) out(k - begin) = theta(0) + noise(rng);
  }
  double mean_loss_gradient(const Eigen::VectorXd&, Eigen::Index, Eigen::Ref<Eigen::VectorXd> g) const override {
    g.setZero();
    return 0.0;
  }

 private:
  Eigen::Index n_;
  std::uint64_t seed_;
};

}  // namespace

TEST_SUITE("optimizer") {

TEST_CASE("clear differences are decided on the first prefix") {
  const Quadratic q(20000, 2, 1);
  AdaptiveComparator cmp(q, {});
  CHECK(cmp.m0() == 200);
  Probe near(q.minimum());
  Probe far(Eigen::Vector2d(10.0, -10.0));
  const auto r = cmp.compare(near, far);
  CHECK(r.ordering == Ordering::FirstBetter);
  CHECK(r.rowsUsed == 200);
  CHECK(r.difference < 0.0);
  CHECK(cmp.rows_evaluated() == 400);
  const auto back = cmp.compare(far, near);
  CHECK(back.ordering == Ordering::SecondBetter);
  CHECK(cmp.rows_evaluated() == 400);  // cached losses are reused
}

TEST_CASE("identical points are indistinguishable at full N") {
  const Quadratic q(1000, 2, 2);
  AdaptiveComparator cmp(q, {});
  Probe a(Eigen::Vector2d(0.3, 0.3));
  Probe b(Eigen::Vector2d(0.3, 0.3));
  const auto r = cmp.compare(a, b);
  CHECK(r.ordering == Ordering::IndistinguishableAtFullN);
  CHECK(r.rowsUsed == 1000);
}

TEST_CASE("prefixes double until the test resolves") {
  const Quadratic q(4096, 1, 3);
  ComparatorOptions o;
  o.m0 = 16;
  AdaptiveComparator cmp(q, o);
  const double best = q.minimum()(0);
  Probe a(Eigen::VectorXd::Constant(1, best));
  Probe b(Eigen::VectorXd::Constant(1, best + 0.05));
  const auto r = cmp.compare(a, b);
  CHECK(r.rowsUsed >= 16);
  // rowsUsed is m0 * 2^k or N.
  const auto ratio = r.rowsUsed / 16;
  CHECK((r.rowsUsed == 4096 || (r.rowsUsed % 16 == 0 && (ratio & (ratio - 1)) == 0)));
  if (r.rowsUsed < 4096) {
    CHECK(std::abs(r.difference) > 5.0 * r.sigma);
  } else if (r.ordering != Ordering::IndistinguishableAtFullN) {
    CHECK(std::abs(r.difference) > r.sigma);
  }
}

TEST_CASE("constant differences are decided at m0") {
  const NoisyRows rows(100000, 1);
  AdaptiveComparator cmp(rows, {});
  Probe a(Eigen::Vector2d(0.25, 7.0));
  Probe b(Eigen::Vector2d(0.0, 7.0));
  const auto r = cmp.compare(a, b);
  CHECK(r.ordering == Ordering::SecondBetter);
  CHECK(r.rowsUsed == cmp.m0());
  CHECK(r.sigma < 1e-15);  // zero up to rounding of theta(0) + noise
  CHECK(r.difference == Approx(0.25));
  Probe c(Eigen::Vector2d(0.0, 7.0));
  CHECK(cmp.compare(b, c).ordering == Ordering::IndistinguishableAtFullN);
  CHECK(cmp.termwise_diff(b, c, 12) == 0.0);
}

TEST_CASE("equal-mean noise is almost never ordered significantly") {
  int significant = 0;
  const int trials = 10000;
  for (int i = 0; i < trials; ++i) {
    const NoisyRows rows(2000, static_cast<std::uint64_t>(i));
    ComparatorOptions o;
    o.m0 = 20;
    AdaptiveComparator cmp(rows, o);
    Probe a(Eigen::Vector2d(0.0, 1.0));
    Probe b(Eigen::Vector2d(0.0, 2.0));
    const auto r = cmp.compare(a, b);
    if (r.ordering != Ordering::IndistinguishableAtFullN && std::abs(r.difference) > 5.0 * r.sigma) ++significant;
  }
  CHECK(significant <= trials / 10000);
}

TEST_CASE("termwise differences and full-grid statistics") {
  const Quadratic q(100, 1, 4);
  AdaptiveComparator cmp(q, {});
  Probe a(Eigen::VectorXd::Constant(1, 0.0));
  Probe b(Eigen::VectorXd::Constant(1, 1.0));
  Eigen::VectorXd la(100);
  Eigen::VectorXd lb(100);
  q.row_losses(a.theta(), 0, 100, la);
  q.row_losses(b.theta(), 0, 100, lb);
  CHECK(cmp.termwise_diff(a, b, 17) == Approx(la(17) - lb(17)));
  CHECK(cmp.full_mean(a) == Approx(la.mean()));
  const Eigen::ArrayXd d = (la - lb).array();
  const double sd = std::sqrt((d - d.mean()).square().sum() / 99.0);
  CHECK(cmp.full_sigma(a, b) == Approx(sd / 10.0));
}

TEST_CASE("non-adaptive comparisons always use every row") {
  const Quadratic q(5000, 1, 5);
  ComparatorOptions o;
  o.adaptive = false;
  AdaptiveComparator cmp(q, o);
  Probe a(Eigen::VectorXd::Constant(1, 0.0));
  Probe b(Eigen::VectorXd::Constant(1, 9.0));
  CHECK(cmp.compare(a, b).rowsUsed == 5000);
}

TEST_CASE("without the sigma stop only exact ties are indistinguishable") {
  const Quadratic q(200, 1, 6);
  ComparatorOptions o;
  o.sigmaStop = false;
  o.c = 1e9;
  AdaptiveComparator cmp(q, o);
  Probe a(Eigen::VectorXd::Constant(1, 1.5));
  Probe b(Eigen::VectorXd::Constant(1, 1.5 + 1e-9));
  CHECK(cmp.compare(a, b).ordering != Ordering::IndistinguishableAtFullN);
  o.sigmaStop = true;
  AdaptiveComparator stop(q, o);
  Probe c(Eigen::VectorXd::Constant(1, 1.5));
  Probe d(Eigen::VectorXd::Constant(1, 1.5 + 1e-9));
  CHECK(stop.compare(c, d).ordering == Ordering::IndistinguishableAtFullN);
}

TEST_CASE("minimize reaches the quadratic minimum") {
  const Quadratic q(50000, 3, 7);
  const auto r = minimize(q, Eigen::Vector3d(-4.0, 8.0, 0.0));
  // Differences below one sigma of the mean are not resolvable.
  CHECK((r.theta - q.minimum()).norm() < 0.05);
  CHECK(r.acceptedSteps > 0);
  CHECK_FALSE(r.revertedToStart);
  CHECK(r.rowsTouched > 0);
}

TEST_CASE("adaptive minimize touches fewer rows than full-data minimize") {
  const Quadratic q(200000, 2, 8);
  MinimizeOptions full;
  full.comparator.adaptive = false;
  const auto a = minimize(q, Eigen::Vector2d(5.0, -5.0));
  const auto f = minimize(q, Eigen::Vector2d(5.0, -5.0), full);
  CHECK(a.rowsTouched < f.rowsTouched);
  CHECK(f.gradientRows == 200000);
}

TEST_CASE("minimize from the optimum stays put") {
  const Quadratic q(2000, 2, 9);
  const auto r = minimize(q, q.minimum());
  CHECK((r.theta - q.minimum()).norm() < 1e-6);
  CHECK(r.acceptedSteps == 0);
}

TEST_CASE("non-finite start and bad arguments") {
  const NanAtOrigin f;
  CHECK_THROWS_AS(minimize(f, Eigen::VectorXd::Zero(1)), Error);
  try {
    minimize(f, Eigen::VectorXd::Zero(1));
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NonFiniteObjective);
  }
  CHECK_THROWS_AS(minimize(f, Eigen::VectorXd::Zero(2)), Error);
  ComparatorOptions bad;
  bad.c = 0.0;
  CHECK_THROWS_AS(AdaptiveComparator(f, bad), Error);
}

}  // TEST_SUITE
