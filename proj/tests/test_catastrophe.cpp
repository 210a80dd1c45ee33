#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <random>

#include "oracles/energy_scans.hpp"
#include "support.hpp"
#include "tensegrity/catastrophe.hpp"

using namespace tensegrity;
using testing_support::load;

namespace {

TrackerConfig serial() {
  TrackerConfig cfg;
  cfg.threads = 1;
  return cfg;
}

std::shared_ptr<const FrameworkModel> model_of(const std::string& name) {
  const FrameworkFile f = load(name);
  return std::make_shared<const FrameworkModel>(f.framework, f.partition);
}

const PseudoWitnessSet& pendulum_witness() {
  static const PseudoWitnessSet w = witness_on_generic_line(model_of("pendulum.json"), serial());
  return w;
}

const PseudoWitnessSet& zeeman_monodromy() {
  static const PseudoWitnessSet w = witness_by_monodromy(model_of("zeeman.json"), serial());
  return w;
}

ControlSlice line2(double bx, double by, double dx, double dy) {
  ControlSlice s;
  s.base.resize(2);
  s.base << bx, by;
  RVector d(2);
  d << dx, dy;
  s.directions.push_back(d);
  return s;
}

}  // namespace

TEST_CASE("pendulum catastrophe degree on a generic line") {
  const auto& w = pendulum_witness();
  CHECK(w.degree() == 2);
  CHECK(w.method == "total_degree");
  // each point is where three paths meet
  for (int m : w.multiplicity) CHECK(m == 3);
}

TEST_CASE("pendulum on a line of controls meets the circle twice") {
  const auto m = model_of("pendulum_line.json");
  const PseudoWitnessSet w = witness_on_generic_line(m, serial());
  REQUIRE(w.degree() == 2);
  ControlSlice s;
  s.base = RVector::Constant(1, -3.0);
  s.directions.push_back(RVector::Constant(1, 6.0));
  const auto hits = intersect_slice(w, s, serial(), true).catastrophe_points();
  REQUIRE(hits.size() == 2);
  const double r = oracles::pendulum_catastrophe_radius;
  const double expect = std::sqrt(r * r - 0.25);  // second control fixed at 0.5
  CHECK(hits[0].y[0] == Catch::Approx(-expect).margin(1e-8));
  CHECK(hits[1].y[0] == Catch::Approx(expect).margin(1e-8));
}

TEST_CASE("pendulum slice intersection matches the circle") {
  const auto& w = pendulum_witness();
  const double r = oracles::pendulum_catastrophe_radius;
  for (double h : {0.1, -0.7, 1.3}) {
    const auto hits = intersect_slice(w, line2(-5.0, h, 1.0, 0.0), serial()).catastrophe_points();
    REQUIRE(hits.size() == 2);
    const double expect = std::sqrt(r * r - h * h);
    CHECK(hits[0].y[0] == Catch::Approx(-expect).margin(1e-8));
    CHECK(hits[1].y[0] == Catch::Approx(expect).margin(1e-8));
    CHECK(hits[0].t < hits[1].t);
    for (const auto& p : hits) {
      CHECK(p.y[1] == Catch::Approx(h).margin(1e-12));
      CHECK(p.delta_nonneg);
      CHECK(p.taut);
      CHECK(p.dl_residual < 1e-6);
    }
  }
  // a line missing the circle has no real points
  CHECK(intersect_slice(w, line2(-5.0, 2.5, 1.0, 0.0), serial()).points.empty());
}

TEST_CASE("property: sampled pendulum catastrophe points lie on the circle") {
  const auto& w = pendulum_witness();
  TrackerConfig cfg = serial();
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(2.2, 4.0);
  std::size_t total = 0;
  for (int trial = 0; trial < 3; ++trial) {
    cfg.rng_seed = 300 + static_cast<std::uint64_t>(trial);
    const double half = u(rng);
    const Rect box{-half, half, -half, half};
    const auto pts = sample_catastrophe(w, box, 3, cfg);
    total += pts.size();
    for (const auto& p : pts) {
      CHECK(std::hypot(p.y[0], p.y[1]) == Catch::Approx(oracles::pendulum_catastrophe_radius).margin(1e-7));
      CHECK(box.contains(p.y[0], p.y[1]));
    }
  }
  CHECK(total >= 4);
}

TEST_CASE("crossing parity agrees with the pendulum closed form") {
  const auto& w = pendulum_witness();
  const auto count = [](const RVector& y) {
    return static_cast<int>(oracles::pendulum_stable_points(y[0], y[1]).size());
  };
  // radial lines; each probe pair is one radial probe and one inside arc
  std::vector<CatastrophePoint> pts;
  std::vector<ProbePair> probes;
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> ang(0.0, 2.0 * std::numbers::pi);
  for (int k = 0; k < 4; ++k) {
    const double a = ang(rng);
    const double c = std::cos(a), s = std::sin(a);
    for (const auto& p : intersect_slice(w, line2(-3.0 * c, -3.0 * s, c, s), serial()).points) pts.push_back(p);
    RVector in(2), out(2), in2(2);
    in << 1.2 * c, 1.2 * s;
    out << 2.9 * c, 2.9 * s;
    in2 << 1.2 * std::cos(a + 0.5), 1.2 * std::sin(a + 0.5);
    probes.push_back({in, out});
    probes.push_back({in, in2});
  }
  // a probe running through two crossings of the sample
  RVector far_a(2), far_b(2);
  far_a << 3.0 * std::cos(0.3), 3.0 * std::sin(0.3);
  far_b = -far_a;
  for (const auto& p : intersect_slice(w, line2(far_a[0], far_a[1], far_b[0] - far_a[0], far_b[1] - far_a[1]), serial())
                           .points)
    pts.push_back(p);
  probes.push_back({far_a, far_b});

  std::vector<std::pair<int, int>> counts;
  for (const auto& p : probes) counts.emplace_back(count(p.a), count(p.b));
  const auto rows = crossing_parity_check(pts, probes, counts, 0.05);
  REQUIRE(rows.size() == probes.size());
  for (std::size_t k = 0; k + 1 < rows.size(); ++k) {
    CHECK(rows[k].consistent);
    CHECK(rows[k].crossings == (k % 2 == 0 ? 1u : 0u));
  }
  CHECK(rows.back().crossings == 2);
  CHECK(rows.back().consistent);
}

TEST_CASE("witness survives a JSON round trip") {
  const auto& w = pendulum_witness();
  const Json j = witness_to_json(w);
  const PseudoWitnessSet back = witness_from_json(j, w.model);
  REQUIRE(back.degree() == w.degree());
  for (std::size_t k = 0; k < w.degree(); ++k) CHECK((back.solutions[k] - w.solutions[k]).norm() == 0.0);
  CHECK(back.multiplicity == w.multiplicity);
  CHECK((back.base - w.base).norm() == 0.0);
  CHECK((back.dir - w.dir).norm() == 0.0);
  CHECK_THROWS_AS(witness_from_json(j, model_of("zeeman.json")), InputError);
}

TEST_CASE("system hash tells frameworks apart") {
  const auto p = model_of("pendulum.json");
  CHECK(system_hash(*p) == system_hash(*model_of("pendulum.json")));
  CHECK(system_hash(*p) != system_hash(*model_of("zeeman.json")));
}

TEST_CASE("constant energy has no finite witness") {
  Json j = framework_to_json(load("pendulum.json"));
  j["cables"] = Json::array();
  const FrameworkFile f = parse_framework(j);
  const auto m = std::make_shared<const FrameworkModel>(f.framework, f.partition);
  CHECK_THROWS_AS(witness_on_generic_line(m, serial()), DegenerateSystemError);
}

TEST_CASE("sampling needs a two-dimensional control") {
  const auto m = model_of("pendulum_line.json");
  const PseudoWitnessSet w = witness_on_generic_line(m, serial());
  CHECK_THROWS_AS(sample_catastrophe(w, Rect{}, 4, serial()), FrameworkError);
}

TEST_CASE("Zeeman monodromy witness moves to another line intact") {
  const auto& w = zeeman_monodromy();
  // the trace test stops the loops only once the set is whole
  CHECK(w.degree() == 72);
  CHECK(w.complete);
  std::mt19937_64 rng(17);
  const CVector base = testing_support::random_complex(rng, 2);
  const CVector dir = testing_support::random_complex(rng, 2);
  const PseudoWitnessSet moved = move_witness(w, base, dir, serial());
  CHECK(moved.degree() == w.degree());
  CHECK(moved.method == "moved");
  // moved points solve the system on the new line
  const Linearization lin(moved.system.system);
  HomotopyWorkspace ws;
  for (const auto& z : moved.solutions) {
    CVector f;
    lin.evaluate(z, moved.parameters(), ws.lin, &f, nullptr, nullptr);
    CHECK(f.cwiseAbs().maxCoeff() < 1e-8 * std::max(1.0, z.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("Zeeman crossings lie where the oracle count changes") {
  const auto& w = zeeman_monodromy();
  const auto hits = intersect_slice(w, line2(-4.0, 0.3, 8.0, 0.0), serial(), true).catastrophe_points();
  REQUIRE(!hits.empty());
  for (const auto& p : hits) {
    if (!p.taut) continue;
    const int before = oracles::zeeman_count(p.y[0] - 2e-3, p.y[1]);
    const int after = oracles::zeeman_count(p.y[0] + 2e-3, p.y[1]);
    CHECK(before != after);
  }
}
