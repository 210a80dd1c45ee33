#include <catch_amalgamated.hpp>

#include <atomic>
#include <chrono>
#include <cmath>
#include <future>
#include <numbers>
#include <thread>

#include "oracles/energy_scans.hpp"
#include "support.hpp"
#include "tensegrity/io.hpp"
#include "tensegrity/service.hpp"

// after Eigen: resolv.h defines a _res macro
#include <httplib.h>

using namespace tensegrity;
using testing_support::data_path;

namespace {

class Running {
 public:
  explicit Running(ServiceOptions opts = {}) : service_(tune(std::move(opts))) {
    port_ = service_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { service_.listen_after_bind(); });
    service_.wait_until_ready();
  }
  ~Running() {
    service_.stop();
    thread_.join();
  }
  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port_);
    c.set_read_timeout(120, 0);
    return c;
  }

 private:
  static ServiceOptions tune(ServiceOptions o) {
    o.cfg.threads = 1;
    return o;
  }
  Service service_;
  int port_ = 0;
  std::thread thread_;
};

std::string framework_text(const std::string& name) { return read_text_file(data_path(name)); }

std::string create(httplib::Client& c, const std::string& name, bool witness = false) {
  const Json body{{"framework", Json::parse(framework_text(name))}, {"build_witness", witness}};
  const auto r = c.Post("/sessions", body.dump(), "application/json");
  REQUIRE(r);
  REQUIRE(r->status == 201);
  return Json::parse(r->body).at("id").get<std::string>();
}

Json drag(httplib::Client& c, const std::string& id, double a, double b) {
  const auto r = c.Post("/sessions/" + id + "/drag", Json{{"y", {a, b}}}.dump(), "application/json");
  REQUIRE(r);
  REQUIRE(r->status == 200);
  return Json::parse(r->body);
}

RVector xs(const Json& point) { return rvector_from_json(point.at("x")); }

}  // namespace

TEST_CASE("service health and sessions") {
  Running s;
  auto c = s.client();
  const auto h = c.Get("/health");
  REQUIRE(h);
  CHECK(h->status == 200);
  CHECK(h->get_header_value("Access-Control-Allow-Origin") == "*");

  const auto made = c.Post("/sessions", framework_text("zeeman.json"), "application/json");
  REQUIRE(made);
  REQUIRE(made->status == 201);
  const Json j = Json::parse(made->body);
  CHECK(j.at("control_names") == Json({"p31", "p32"}));
  CHECK(j.at("internal_names") == Json({"p41", "p42"}));
  CHECK(j.at("equilibrium_degree") == 16);
  CHECK(j.at("seed") == "ready");
  CHECK(j.at("witness") == "idle");
  const std::string id = j.at("id");

  const auto st = c.Get("/sessions/" + id + "/status");
  REQUIRE(st);
  CHECK(st->status == 200);
  CHECK(Json::parse(st->body).at("current").is_null());

  const auto del = c.Delete("/sessions/" + id);
  REQUIRE(del);
  CHECK(del->status == 200);
  CHECK(c.Get("/sessions/" + id)->status == 404);
  CHECK(c.Delete("/sessions/" + id)->status == 404);
  CHECK(c.Get("/sessions/nope/stability?y=0,0")->status == 404);

  const auto bad = c.Post("/sessions", "{not json", "application/json");
  REQUIRE(bad);
  CHECK(bad->status == 400);
  const auto pre = c.Options("/sessions");
  REQUIRE(pre);
  CHECK(pre->status == 204);
  CHECK(pre->get_header_value("Access-Control-Allow-Methods").find("POST") != std::string::npos);
}

TEST_CASE("service stability matches the oracle") {
  Running s;
  auto c = s.client();
  const std::string id = create(c, "zeeman.json");
  for (auto [a, b] : {std::pair{-1.8, 1.0}, {3.0, 0.0}, {0.5, -2.0}}) {
    const auto r = c.Get("/sessions/" + id + "/stability?y=" + format_double(a) + "," + format_double(b));
    REQUIRE(r);
    REQUIRE(r->status == 200);
    CHECK(Json::parse(r->body).at("stable").size() == static_cast<std::size_t>(oracles::zeeman_count(a, b)));
  }
  CHECK(c.Get("/sessions/" + id + "/stability?y=1")->status == 422);
  CHECK(c.Get("/sessions/" + id + "/stability?y=1,1e9")->status == 422);
  CHECK(c.Get("/sessions/" + id + "/stability?y=1,nan")->status == 422);
  CHECK(c.Get("/sessions/" + id + "/stability?y=1,x")->status == 400);
  CHECK(c.Get("/sessions/" + id + "/stability")->status == 400);
}

TEST_CASE("service drag follows the equilibrium") {
  Running s;
  auto c = s.client();
  const std::string id = create(c, "zeeman.json");
  const Json first = drag(c, id, -1.8, 1.0);
  CHECK(first.at("initialized") == true);
  CHECK(first.at("stable") == true);

  // the same y again leaves the point alone
  const Json same = drag(c, id, -1.8, 1.0);
  CHECK((xs(same.at("point")) - xs(first.at("point"))).norm() == 0.0);
  CHECK(same.at("jumped") == false);

  // small steps inside a chamber move x continuously
  RVector prev = xs(first.at("point"));
  double a = -1.8, b = 1.0;
  for (int k = 0; k < 10; ++k) {
    const double na = a + 0.02, nb = b + 0.02;
    const Json r = drag(c, id, na, nb);
    CHECK(r.at("stable") == true);
    CHECK(r.at("jumped") == false);
    const RVector x = xs(r.at("point"));
    CHECK((x - prev).norm() < 10.0 * std::hypot(na - a, nb - b));
    prev = x;
    a = na;
    b = nb;
  }
  const auto st = c.Get("/sessions/" + id + "/status");
  const Json sj = Json::parse(st->body);
  CHECK((rvector_from_json(sj.at("current").at("x")) - prev).norm() == 0.0);

  // moving down across the fold: a jump only where the oracle count drops
  double pb = b;
  drag(c, id, -1.6, pb);
  for (double nb = b - 0.1; nb > -0.6; nb -= 0.1) {
    const Json r = drag(c, id, -1.6, nb);
    CHECK(r.at("stable") == true);
    if (r.at("jumped") == true) {
      CHECK(r.at("event").at("jumped") == true);
      CHECK(oracles::zeeman_count(-1.6, pb) > oracles::zeeman_count(-1.6, nb));
    }
    pb = nb;
  }
  const auto bad = c.Post("/sessions/" + id + "/drag", Json{{"y", {1.0}}}.dump(), "application/json");
  CHECK(bad->status == 422);
  const auto junk = c.Post("/sessions/" + id + "/drag", "[]", "application/json");
  CHECK(junk->status == 400);
}

TEST_CASE("service refuses overlapping drags") {
  std::promise<void> entered;
  std::shared_future<void> release_f;
  std::promise<void> release;
  release_f = release.get_future().share();
  std::atomic<bool> first{true};
  ServiceOptions o;
  o.on_drag_start = [&] {
    if (first.exchange(false)) {
      entered.set_value();
      release_f.wait();
    }
  };
  Running s(o);
  auto c = s.client();
  const std::string id = create(c, "zeeman.json");
  auto slow = std::async(std::launch::async, [&] {
    auto c2 = s.client();
    return c2.Post("/sessions/" + id + "/drag", Json{{"y", {-1.8, 1.0}}}.dump(), "application/json");
  });
  entered.get_future().wait();
  const auto busy = c.Post("/sessions/" + id + "/drag", Json{{"y", {-1.8, 1.0}}}.dump(), "application/json");
  REQUIRE(busy);
  CHECK(busy->status == 409);
  release.set_value();
  const auto done = slow.get();
  REQUIRE(done);
  CHECK(done->status == 200);
}

TEST_CASE("service answers 503 while the witness is built") {
  ServiceOptions o;
  o.deadline_seconds = 0.0;
  Running s(o);
  auto c = s.client();
  const auto made = c.Post("/sessions", framework_text("pendulum.json"), "application/json");
  REQUIRE(made);
  REQUIRE(made->status == 201);
  const std::string id = Json::parse(made->body).at("id");
  const auto r = c.Get("/sessions/" + id + "/catastrophe?rect=-3,3,-3,3&lines=3");
  REQUIRE(r);
  CHECK(r->status == 503);
  CHECK(r->get_header_value("Retry-After") == "5");
  // poll until it is ready
  const auto t0 = std::chrono::steady_clock::now();
  int status = 503;
  while (status == 503 && std::chrono::steady_clock::now() - t0 < std::chrono::seconds(120)) {
    std::this_thread::sleep_for(std::chrono::milliseconds(200));
    status = c.Get("/sessions/" + id + "/catastrophe?rect=-3,3,-3,3&lines=3")->status;
  }
  CHECK(status == 200);
  const Json st = Json::parse(c.Get("/sessions/" + id + "/status")->body);
  CHECK(st.at("witness") == "ready");
  CHECK(st.at("catastrophe_degree") == 2);
}

TEST_CASE("service catastrophe sample on the pendulum") {
  Running s;
  auto c = s.client();
  const std::string id = create(c, "pendulum.json", true);
  const auto r = c.Get("/sessions/" + id + "/catastrophe?rect=-3,3,-3,3&lines=3");
  REQUIRE(r);
  REQUIRE(r->status == 200);
  const Json j = Json::parse(r->body);
  CHECK(j.at("degree") == 2);
  for (const auto& p : j.at("points")) {
    const RVector y = rvector_from_json(p.at("y"));
    CHECK(y.norm() == Catch::Approx(oracles::pendulum_catastrophe_radius).margin(1e-7));
  }
  CHECK(c.Get("/sessions/" + id + "/catastrophe?rect=3,-3,-3,3")->status == 400);
  CHECK(c.Get("/sessions/" + id + "/catastrophe?lines=0")->status == 400);

  Json flat = Json::parse(framework_text("pendulum.json"));
  flat["cables"] = Json::array();
  const auto made = c.Post("/sessions", flat.dump(), "application/json");
  REQUIRE(made);
  const std::string fid = Json::parse(made->body).at("id");
  const auto deg = c.Get("/sessions/" + fid + "/catastrophe?lines=2");
  REQUIRE(deg);
  CHECK(deg->status == 422);
}

TEST_CASE("service energy profile") {
  Running s;
  auto c = s.client();
  const std::string id = create(c, "zeeman.json");
  const auto r = c.Get("/sessions/" + id + "/energy_profile?y=-1.8,1&samples=400");
  REQUIRE(r);
  REQUIRE(r->status == 200);
  const Json j = Json::parse(r->body);
  REQUIRE(j.at("theta").size() == 400);
  REQUIRE(j.at("branches").size() == 1);
  CHECK(j.at("current_theta").is_null());
  double lo = 1e300, hi = -1e300, olo = 1e300, ohi = -1e300;
  for (const auto& e : j.at("branches")[0].at("energy")) {
    lo = std::min(lo, e.get<double>());
    hi = std::max(hi, e.get<double>());
  }
  for (int k = 0; k < 10000; ++k) {
    const double e = oracles::zeeman_energy(2.0 * std::numbers::pi * k / 10000.0, -1.8, 1.0);
    olo = std::min(olo, e);
    ohi = std::max(ohi, e);
  }
  CHECK(lo == Catch::Approx(olo).epsilon(1e-3));
  CHECK(hi == Catch::Approx(ohi).epsilon(1e-3));
  // after a drag to the same y the held point is marked
  drag(c, id, -1.8, 1.0);
  const Json marked = Json::parse(c.Get("/sessions/" + id + "/energy_profile?y=-1.8,1&samples=400")->body);
  CHECK(marked.at("current_theta").is_number());
  CHECK(c.Get("/sessions/" + id + "/energy_profile?y=-1.8,1&samples=1")->status == 400);
  CHECK(c.Get("/sessions/" + id + "/energy_profile?y=-1.8")->status == 422);
}
