#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "support.hpp"
#include "tensegrity/tracker.hpp"

using namespace tensegrity;

namespace {

ExpressionSystem build(std::function<std::vector<Expr>(ExprBuilder&)> f) {
  auto b = std::make_shared<ExprBuilder>();
  auto out = f(*b);
  return ExpressionSystem(b, out);
}

TrackerConfig serial() {
  TrackerConfig cfg;
  cfg.threads = 1;
  return cfg;
}

bool contains_point(const std::vector<TrackedSolution>& sols, const CVector& p, double tol) {
  return std::any_of(sols.begin(), sols.end(), [&](const auto& s) { return (s.point - p).norm() < tol; });
}

CVector cv(std::initializer_list<Complex> xs) {
  CVector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index k = 0;
  for (auto x : xs) v[k++] = x;
  return v;
}

}  // namespace

TEST_CASE("total-degree start system") {
  const auto sys = build([](ExprBuilder& b) {
    const Expr x = b.variable("x"), y = b.variable("y");
    return std::vector<Expr>{b.sub(b.pow(x, 3), y), b.sub(b.mul(x, y), b.one())};
  });
  const StartSystem s = total_degree_start(sys);
  CHECK(s.degrees == std::vector<int>{3, 2});
  CHECK(s.count() == 6);
  for (const auto& p : s.points()) {
    const CVector g = s.system.evaluate(p, CVector());
    CHECK(g.cwiseAbs().maxCoeff() < 1e-12);
  }
  const auto pts = s.points();
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t j = i + 1; j < pts.size(); ++j) CHECK((pts[i] - pts[j]).norm() > 0.1);
}

TEST_CASE("total-degree start rejects non-square systems") {
  const auto sys = build([](ExprBuilder& b) {
    const Expr x = b.variable("x");
    return std::vector<Expr>{x, b.pow(x, 2)};
  });
  CHECK_THROWS_AS(total_degree_start(sys), DimensionError);
}

TEST_CASE("x^5 - 1 has the fifth roots of unity") {
  const auto sys = build([](ExprBuilder& b) { return std::vector<Expr>{b.sub(b.pow(b.variable("x"), 5), b.one())}; });
  const SolveReport r = solve_total_degree(sys, CVector(), serial());
  REQUIRE(r.solutions.size() == 5);
  CHECK(r.paths == 5);
  for (int k = 0; k < 5; ++k) {
    const Complex root = std::polar(1.0, 2.0 * std::numbers::pi * k / 5.0);
    CHECK(contains_point(r.solutions, cv({root}), 1e-9));
  }
}

TEST_CASE("circle meets hyperbola in four real points") {
  const auto sys = build([](ExprBuilder& b) {
    const Expr x = b.variable("x"), y = b.variable("y");
    return std::vector<Expr>{b.sub(b.add(b.pow(x, 2), b.pow(y, 2)), b.constant(5.0)),
                             b.sub(b.mul(x, y), b.constant(2.0))};
  });
  const SolveReport r = solve_total_degree(sys, CVector(), serial());
  REQUIRE(r.solutions.size() == 4);
  for (auto [x, y] : {std::pair{1.0, 2.0}, {2.0, 1.0}, {-1.0, -2.0}, {-2.0, -1.0}})
    CHECK(contains_point(r.solutions, cv({x, y}), 1e-9));
  for (const auto& s : r.solutions) CHECK(s.residual < 1e-10);
}

TEST_CASE("paths to infinity are reported as diverged") {
  // Bezout count 2, one finite solution (2, 1/2)
  const auto sys = build([](ExprBuilder& b) {
    const Expr x = b.variable("x"), y = b.variable("y");
    return std::vector<Expr>{b.sub(b.mul(x, y), b.one()), b.sub(x, b.constant(2.0))};
  });
  const SolveReport r = solve_total_degree(sys, CVector(), serial());
  REQUIRE(r.solutions.size() == 1);
  CHECK(std::abs(r.solutions[0].point[1] - 0.5) < 1e-10);
  CHECK(r.n_diverged + r.n_failed == 1);
}

TEST_CASE("a double root ends singular") {
  const auto sys = build([](ExprBuilder& b) {
    const Expr x = b.variable("x");
    return std::vector<Expr>{b.pow(b.sub(x, b.constant(1.0)), 2)};
  });
  const SolveReport r = solve_total_degree(sys, CVector(), serial());
  CHECK(r.n_regular == 0);
  CHECK(r.n_singular == 2);
  CHECK(r.solutions.empty());
}

TEST_CASE("property: quadratic roots match the closed form") {
  const auto sys = build([](ExprBuilder& b) {
    const Expr x = b.variable("x");
    const Expr p = b.parameter("p"), q = b.parameter("q");
    return std::vector<Expr>{b.add(b.add(b.pow(x, 2), b.mul(p, x)), q)};
  });
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const CVector pq = testing_support::random_complex(rng, 2, 2.0);
    const Complex disc = std::sqrt(pq[0] * pq[0] - 4.0 * pq[1]);
    if (std::abs(disc) < 1e-3) continue;
    TrackerConfig cfg = serial();
    cfg.rng_seed = 100 + static_cast<std::uint64_t>(trial);
    const SolveReport r = solve_total_degree(sys, pq, cfg);
    REQUIRE(r.solutions.size() == 2);
    CHECK(contains_point(r.solutions, cv({(-pq[0] + disc) / 2.0}), 1e-8));
    CHECK(contains_point(r.solutions, cv({(-pq[0] - disc) / 2.0}), 1e-8));
  }
}

TEST_CASE("parameter homotopy keeps the order of its starts") {
  const auto sys = build([](ExprBuilder& b) {
    return std::vector<Expr>{b.sub(b.pow(b.variable("x"), 2), b.parameter("p"))};
  });
  const auto r = parameter_homotopy(sys, cv({1.0}), {cv({1.0}), cv({-1.0})}, cv({4.0}), serial());
  REQUIRE(r.endpoints.size() == 2);
  CHECK(r.failures == 0);
  CHECK(std::abs(r.endpoints[0].point[0] - 2.0) < 1e-10);
  CHECK(std::abs(r.endpoints[1].point[0] + 2.0) < 1e-10);
}

TEST_CASE("monodromy fills the fiber of x^3 = p from one seed") {
  const auto sys = build([](ExprBuilder& b) {
    return std::vector<Expr>{b.sub(b.pow(b.variable("x"), 3), b.parameter("p"))};
  });
  const MonodromyReport r = monodromy_solve(sys, cv({8.0}), {cv({2.0})}, serial());
  REQUIRE(r.solutions.size() == 3);
  CHECK(r.stabilized);
  for (int k = 0; k < 3; ++k) {
    const Complex root = std::polar(2.0, 2.0 * std::numbers::pi * k / 3.0);
    CHECK(std::any_of(r.solutions.begin(), r.solutions.end(),
                      [&](const CVector& s) { return std::abs(s[0] - root) < 1e-8; }));
  }
}

TEST_CASE("dedup merges clusters and counts them") {
  std::vector<TrackedSolution> all(3);
  for (auto& s : all) s.status = PathStatus::regular;
  all[0].point = cv({1.0});
  all[1].point = cv({1.0 + 1e-9});
  all[2].point = cv({-1.0});
  const auto d = dedup_regular(all, 1e-6);
  REQUIRE(d.size() == 2);
  CHECK(d[0].multiplicity == 2);
  CHECK(d[1].multiplicity == 1);
}

TEST_CASE("scaled distance is relative for large points") {
  CHECK(scaled_distance(cv({1000.0}), cv({1001.0})) == Catch::Approx(1e-3));
  CHECK(scaled_distance(cv({0.0}), cv({0.5})) == Catch::Approx(0.5));
}

TEST_CASE("tracker configuration validation") {
  TrackerConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.track_tol = -1.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = TrackerConfig{};
  cfg.min_step = 1.0;
  cfg.max_step = 0.1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("same seed, same endpoints") {
  const auto sys = build([](ExprBuilder& b) {
    const Expr x = b.variable("x"), y = b.variable("y");
    return std::vector<Expr>{b.sub(b.pow(x, 3), b.add(y, b.constant(2.0))), b.sub(b.pow(y, 2), x)};
  });
  TrackerConfig cfg = serial();
  const SolveReport a = solve_total_degree(sys, CVector(), cfg);
  cfg.threads = 0;
  const SolveReport b = solve_total_degree(sys, CVector(), cfg);
  REQUIRE(a.endpoints.size() == b.endpoints.size());
  for (std::size_t k = 0; k < a.endpoints.size(); ++k) CHECK(a.endpoints[k].point == b.endpoints[k].point);
}
