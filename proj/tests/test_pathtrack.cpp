#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "oracles/energy_scans.hpp"
#include "support.hpp"
#include "tensegrity/pathtrack.hpp"

using namespace tensegrity;
using testing_support::load;

namespace {

TrackerConfig serial() {
  TrackerConfig cfg;
  cfg.threads = 1;
  return cfg;
}

struct Zeeman {
  std::shared_ptr<const FrameworkModel> model;
  EquilibriumSeed seed;
  PseudoWitnessSet witness;
  Zeeman() {
    const FrameworkFile f = load("zeeman.json");
    model = std::make_shared<const FrameworkModel>(f.framework, f.partition);
    seed = generic_seed(*model, serial());
    witness = witness_by_monodromy(model, serial());
  }
  LiftContext ctx() const { return {&witness, &seed}; }
};

const Zeeman& zeeman() {
  static const Zeeman z;
  return z;
}

RVector rv(double a, double b) {
  RVector v(2);
  v << a, b;
  return v;
}

ControlPath path(std::initializer_list<std::pair<double, double>> pts) {
  ControlPath p;
  for (auto [a, b] : pts) p.waypoints.push_back(rv(a, b));
  return p;
}

LiftOptions quick() {
  LiftOptions o;
  o.samples_per_segment = 40;
  return o;
}

std::vector<StablePoint> stable_at(const RVector& y) {
  return stability_set(*zeeman().model, y, serial(), &zeeman().seed).stable;
}

// loop around the cusp near (-2.5, 0.4); its two sides cross different fold branches
const ControlPath cusp_loop = path({{-1.8, 1.0}, {-1.8, -0.5}, {-3.2, -0.5}, {-3.2, 1.0}, {-1.8, 1.0}});
const ControlPath interior_loop = path({{-1.8, 1.0}, {-1.6, 1.0}, {-1.6, 1.2}, {-1.8, 1.0}});

}  // namespace

TEST_CASE("control paths validate and round-trip") {
  ControlPath p = path({{0.0, 0.0}, {1.0, 0.0}, {1.0, 2.0}});
  CHECK_NOTHROW(p.validate(2));
  CHECK(p.segments() == 2);
  CHECK(p.at(0.25)[0] == Catch::Approx(0.5));
  CHECK(p.at(0.75)[1] == Catch::Approx(1.0));
  CHECK(p.at(1.0)[1] == Catch::Approx(2.0));
  CHECK_FALSE(p.closed());
  CHECK_THROWS_AS(p.validate(3), LiftError);
  CHECK_THROWS_AS(path({{0.0, 0.0}}).validate(2), LiftError);
  CHECK_THROWS_AS(path({{0.0, 0.0}, {0.0, 0.0}}).validate(2), LiftError);
  CHECK_THROWS_AS(path({{0.0, 0.0}, {std::nan(""), 0.0}}).validate(2), LiftError);
  const ControlPath back = control_path_from_json(to_json(p));
  REQUIRE(back.waypoints.size() == 3);
  for (std::size_t k = 0; k < 3; ++k) CHECK(back.waypoints[k] == p.waypoints[k]);
  CHECK(control_path_from_json(Json::parse("[[0,0],[1,1]]")).segments() == 1);
  CHECK_THROWS_AS(control_path_from_json(Json::parse("{\"waypoints\": 3}")), InputError);
}

TEST_CASE("interior segment lifts without events") {
  const auto& z = zeeman();
  const RVector a = rv(-1.8, 1.0), b = rv(-1.6, 1.2);
  // the oracle count is constant along the segment
  const int n0 = oracles::zeeman_count(a[0], a[1]);
  for (int k = 1; k <= 50; ++k) {
    const RVector y = a + (k / 50.0) * (b - a);
    REQUIRE(oracles::zeeman_count(y[0], y[1]) == n0);
  }
  const auto start = stable_at(a);
  REQUIRE(start.size() == static_cast<std::size_t>(n0));
  for (const auto& s : start) {
    const LiftResult r = lift_path(*z.model, path({{a[0], a[1]}, {b[0], b[1]}}), s.point, serial(), z.ctx(), quick());
    CHECK(r.events.empty());
    CHECK(r.ended_stable);
    CHECK(r.trajectory.front().t == 0.0);
    CHECK(r.trajectory.back().t == 1.0);
    // the endpoint is one of the stable points at b
    const auto end = stable_at(b);
    double best = 1e9;
    for (const auto& e : end) best = std::min(best, (e.point.x - r.final_point().x).norm());
    CHECK(best < 1e-6);
    // and matches an oracle minimum at b
    const auto minima = oracles::zeeman_minima(b[0], b[1]);
    const int k = oracles::nearest_minimum(minima, r.final_point().x);
    REQUIRE(k >= 0);
    CHECK((minima[static_cast<std::size_t>(k)].x - r.final_point().x).norm() < 2e-3);
    // every sample along the way is certified stable
    for (const auto& smp : r.trajectory) CHECK(smp.certificate.verdict == Verdict::stable);
  }
}

TEST_CASE("property: lifting an interior segment is reversible") {
  const auto& z = zeeman();
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(-0.15, 0.15);
  int tried = 0;
  for (int trial = 0; trial < 12 && tried < 4; ++trial) {
    const RVector a = rv(-1.7 + u(rng), 1.1 + u(rng));
    const RVector b = rv(-1.7 + u(rng), 1.1 + u(rng));
    bool constant = true;
    const int n0 = oracles::zeeman_count(a[0], a[1]);
    for (int k = 1; k <= 30 && constant; ++k) {
      const RVector y = a + (k / 30.0) * (b - a);
      constant = oracles::zeeman_count(y[0], y[1]) == n0;
    }
    if (!constant) continue;
    ++tried;
    for (const auto& s : stable_at(a)) {
      const LiftResult fwd = lift_path(*z.model, path({{a[0], a[1]}, {b[0], b[1]}}), s.point, serial(), z.ctx(), quick());
      const LiftResult back =
          lift_path(*z.model, path({{b[0], b[1]}, {a[0], a[1]}}), fwd.final_point(), serial(), z.ctx(), quick());
      CHECK(back.events.empty());
      CHECK((back.final_point().x - s.point.x).norm() < 1e-6);
    }
  }
  CHECK(tried >= 2);
}

TEST_CASE("a loop around the cusp shows hysteresis") {
  const auto& z = zeeman();
  const auto start = stable_at(cusp_loop.waypoints.front());
  REQUIRE(start.size() == 2);
  std::size_t hysteretic = 0;
  for (const auto& s : start) {
    const LiftResult r = lift_path(*z.model, cusp_loop, s.point, serial(), z.ctx(), quick());
    const double dx = (r.final_point().x - s.point.x).norm();
    CHECK(r.ended_stable);
    if (dx > 0.1) {
      ++hysteretic;
      CHECK(r.jumps() >= 1);
    }
    // the minimum stays where it started unless a jump happened
    if (r.jumps() == 0) CHECK(dx < 1e-6);
    // every jump sits where the oracle count drops
    for (const auto& e : r.events) {
      if (!e.jumped) continue;
      const RVector before = cusp_loop.at(std::max(0.0, e.t - 2e-3));
      const RVector after = cusp_loop.at(std::min(1.0, e.t + 2e-3));
      CHECK(oracles::zeeman_count(before[0], before[1]) > oracles::zeeman_count(after[0], after[1]));
    }
    CHECK(hysteresis_probe(*z.model, cusp_loop, s.point, serial(), z.ctx(), quick()) == (dx > 1e-3));
  }
  CHECK(hysteretic >= 1);
}

TEST_CASE("an interior loop returns to its start") {
  const auto& z = zeeman();
  for (const auto& s : stable_at(interior_loop.waypoints.front())) {
    CHECK_FALSE(hysteresis_probe(*z.model, interior_loop, s.point, serial(), z.ctx(), quick()));
    const LiftResult r = lift_path(*z.model, interior_loop, s.point, serial(), z.ctx(), quick());
    CHECK((r.final_point().x - s.point.x).norm() < 1e-6);
    CHECK(r.jumps() == 0);
  }
  ControlPath still;
  still.waypoints = {rv(-1.8, 1.0), rv(-1.8, 1.0)};
  CHECK_FALSE(hysteresis_probe(*z.model, still, stable_at(rv(-1.8, 1.0)).front().point, serial()));
  CHECK_THROWS_AS(hysteresis_probe(*z.model, path({{-1.8, 1.0}, {-1.6, 1.0}}), stable_at(rv(-1.8, 1.0)).front().point,
                                   serial()),
                  LiftError);
}

TEST_CASE("jump times agree with and without the witness") {
  const auto& z = zeeman();
  for (const auto& s : stable_at(cusp_loop.waypoints.front())) {
    const LiftResult with = lift_path(*z.model, cusp_loop, s.point, serial(), z.ctx(), quick());
    const LiftContext local{nullptr, &z.seed};
    const LiftResult without = lift_path(*z.model, cusp_loop, s.point, serial(), local, quick());
    REQUIRE(with.jumps() == without.jumps());
    std::vector<double> ta, tb;
    for (const auto& e : with.events)
      if (e.jumped) ta.push_back(e.t);
    for (const auto& e : without.events)
      if (e.jumped) tb.push_back(e.t);
    for (std::size_t k = 0; k < ta.size(); ++k) CHECK(std::abs(ta[k] - tb[k]) < 1e-3);
    CHECK((with.final_point().x - without.final_point().x).norm() < 1e-6);
  }
}

TEST_CASE("lifting refuses an unstable start") {
  const auto& z = zeeman();
  const RVector y = rv(-1.8, 1.0);
  const StabilityReport rep = stability_set(*z.model, y, serial(), &z.seed);
  bool found = false;
  for (std::size_t k = 0; k < rep.all_critical.size(); ++k) {
    const auto& c = rep.certificates[k];
    if (!c || c->verdict != Verdict::unstable) continue;
    found = true;
    CHECK_THROWS_AS(lift_path(*z.model, path({{-1.8, 1.0}, {-1.7, 1.0}}), rep.all_critical[k], serial()), LiftError);
  }
  CHECK(found);
  // a stable point from elsewhere is not at the first waypoint
  const auto other = stable_at(rv(3.0, 0.0));
  CHECK_THROWS_AS(lift_path(*z.model, path({{-1.8, 1.0}, {-1.7, 1.0}}), other.front().point, serial()), LiftError);
}

TEST_CASE("post-jump settling fixes stable points") {
  const auto& z = zeeman();
  for (const RVector& y : {rv(-1.8, 1.0), rv(3.0, 0.0), rv(0.5, -2.0)}) {
    for (const auto& s : stable_at(y)) {
      const auto landed = post_jump(*z.model, y, s.point, serial(), &z.seed);
      REQUIRE(landed.has_value());
      CHECK((landed->point.x - s.point.x).norm() < 1e-6);
    }
  }
}

TEST_CASE("descent ends at an oracle minimum") {
  const auto& z = zeeman();
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> ang(0.0, 2.0 * std::numbers::pi);
  const RVector y = rv(-1.8, 1.0);
  const auto minima = oracles::zeeman_minima(y[0], y[1]);
  for (int trial = 0; trial < 6; ++trial) {
    const double a = ang(rng);
    const RVector x0 = rv(std::cos(a), std::sin(a));
    const RVector x = descend_true_energy(*z.model, y, x0);
    CHECK(x.norm() == Catch::Approx(1.0).margin(1e-9));
    const int k = oracles::nearest_minimum(minima, x);
    REQUIRE(k >= 0);
    CHECK((minima[static_cast<std::size_t>(k)].x - x).norm() < 2e-3);
    // descent never raises the energy
    const double e0 = oracles::zeeman_energy(a, y[0], y[1]);
    const double e1 = oracles::zeeman_energy(std::atan2(x[1], x[0]), y[0], y[1]);
    CHECK(e1 <= e0 + 1e-12);
  }
}

TEST_CASE("nearest stable point") {
  const auto& z = zeeman();
  const RVector y = rv(-1.8, 1.0);
  for (const auto& s : stable_at(y)) {
    const auto n = nearest_stable(*z.model, y, s.point.x + RVector::Constant(2, 1e-3), serial(), &z.seed);
    REQUIRE(n.has_value());
    CHECK((n->point.x - s.point.x).norm() < 1e-12);
  }
}

TEST_CASE("trajectory JSON and CSV") {
  const auto& z = zeeman();
  const auto s = stable_at(rv(-1.8, 1.0)).front();
  const LiftResult r = lift_path(*z.model, cusp_loop, s.point, serial(), z.ctx(), quick());
  const std::string csv = trajectory_csv(*z.model, r);
  std::istringstream in(csv);
  std::string header;
  std::getline(in, header);
  CHECK(header == "t,p31,p32,p41,p42,min_eig,stable");
  std::size_t rows = 0;
  for (std::string line; std::getline(in, line);) ++rows;
  CHECK(rows == r.trajectory.size());
  const Json j = to_json(r);
  CHECK(j.at("trajectory").at("t").size() == r.trajectory.size());
  CHECK(j.at("events").size() == r.events.size());
  CHECK(j.at("ended_stable").get<bool>() == r.ended_stable);
  for (std::size_t k = 1; k < r.trajectory.size(); ++k) CHECK(r.trajectory[k].t >= r.trajectory[k - 1].t);
  for (std::size_t k = 1; k < r.events.size(); ++k) CHECK(r.events[k].t >= r.events[k - 1].t);
}
