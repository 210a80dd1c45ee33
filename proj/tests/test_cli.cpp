#include <catch_amalgamated.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <random>
#include <sstream>

#include "oracles/energy_scans.hpp"
#include "support.hpp"
#include "tensegrity/cli.hpp"

using namespace tensegrity;
using testing_support::data_path;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  Run r;
  r.code = run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

fs::path scratch(const std::string& name) {
  static std::mt19937_64 rng(std::random_device{}());
  const fs::path p = fs::temp_directory_path() / ("tensegrity-cli-" + name + "-" + std::to_string(rng() % 1000000000));
  fs::create_directories(p);
  return p;
}

Json read_json(const fs::path& p) { return Json::parse(read_text_file(p.string())); }

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::istringstream in(read_text_file(p.string()));
  std::vector<std::vector<std::string>> rows;
  for (std::string line; std::getline(in, line);) {
    std::vector<std::string> cells;
    std::istringstream ls(line);
    for (std::string c; std::getline(ls, c, ',');) cells.push_back(c);
    rows.push_back(cells);
  }
  return rows;
}

}  // namespace

TEST_CASE("cli degree without the catastrophe part") {
  const fs::path dir = scratch("degree");
  const Run r = cli({"degree", data_path("pendulum.json"), "--no-catastrophe", "--threads", "1", "--out", dir.string()});
  REQUIRE(r.code == exit_ok);
  CHECK(r.out == "equilibrium_degree: 6\n");
  const Json d = read_json(dir / "degree.json");
  CHECK(d.at("equilibrium_degree") == 6);
  CHECK_FALSE(d.contains("catastrophe_degree"));
  const Json m = read_json(dir / "degree.manifest.json");
  CHECK(m.at("command") == "degree");
  CHECK(m.at("framework").at("hash").get<std::string>().size() == 16);
  CHECK(m.at("config").at("seed") == 42);
  CHECK(m.at("config").at("no_catastrophe") == true);
  CHECK(m.at("outputs").size() == 1);
  CHECK(m.at("timings").at("seconds").get<double>() >= 0.0);
}

TEST_CASE("cli degree of the pendulum") {
  const fs::path dir = scratch("degree2");
  const Run r = cli({"degree", data_path("pendulum_line.json"), "--threads", "1", "--out", dir.string()});
  REQUIRE(r.code == exit_ok);
  CHECK(r.out == "equilibrium_degree: 6, catastrophe_degree: 2\n");
  const Json d = read_json(dir / "degree.json");
  CHECK(d.at("catastrophe").at("cross_check") == 2);
}

TEST_CASE("cli input errors exit with 2") {
  const fs::path dir = scratch("errors");
  for (const auto& args : std::vector<std::vector<std::string>>{
           {"degree", (dir / "missing.json").string(), "--out", dir.string()},
           {"degree", data_path("pendulum.json"), "--bogus"},
           {"frobnicate"},
           {},
           {"stability", data_path("pendulum.json"), "--at", "1", "--out", dir.string()},
           {"chambers", data_path("pendulum.json"), "--rect", "1", "0", "0", "1", "--out", dir.string()},
           {"track", data_path("pendulum.json"), "--out", dir.string()},
           {"degree", data_path("pendulum.json"), "--newton-tol", "-1", "--out", dir.string()}}) {
    const Run r = cli(args);
    CHECK(r.code == exit_input_error);
    const Json e = Json::parse(r.err);
    CHECK(e.at("exit_code") == 2);
    CHECK(e.at("error") == "input_error");
    CHECK_FALSE(e.at("message").get<std::string>().empty());
  }
}

TEST_CASE("cli numerical failures exit with 3") {
  const fs::path dir = scratch("numerical");
  Json j = Json::parse(read_text_file(data_path("pendulum.json")));
  j["cables"] = Json::array();
  write_text_file((dir / "flat.json").string(), j.dump());
  const Run r = cli({"degree", (dir / "flat.json").string(), "--threads", "1", "--out", dir.string()});
  CHECK(r.code == exit_numerical_failure);
  const Json e = Json::parse(r.err);
  CHECK(e.at("exit_code") == 3);
  CHECK(e.at("error") == "numerical_failure");
}

TEST_CASE("cli config file fills options the command line leaves out") {
  const fs::path dir = scratch("config");
  write_text_file((dir / "cfg.json").string(),
                  Json{{"seed", 7}, {"res", 3}, {"rect", {-3, 3, -3, 3}}, {"newton_tol", 1e-11}}.dump());
  const Run r = cli({"chambers", data_path("pendulum.json"), "--config", (dir / "cfg.json").string(), "--res", "2",
                     "--threads", "1", "--out", dir.string()});
  REQUIRE(r.code == exit_ok);
  const Json m = read_json(dir / "chambers.manifest.json");
  CHECK(m.at("config").at("seed") == 7);
  CHECK(m.at("config").at("res") == 2);
  CHECK(m.at("config").at("newton_tol").get<double>() == 1e-11);
  CHECK(m.at("config").at("rect") == Json({-3.0, 3.0, -3.0, 3.0}));
  CHECK(read_csv(dir / "chambers.csv").size() == 5);

  write_text_file((dir / "bad.json").string(), Json{{"sed", 7}}.dump());
  const Run bad = cli({"chambers", data_path("pendulum.json"), "--config", (dir / "bad.json").string(), "--out",
                       dir.string()});
  CHECK(bad.code == exit_input_error);
  CHECK(Json::parse(bad.err).at("message").get<std::string>().find("sed") != std::string::npos);
}

TEST_CASE("cli chambers agree with the pendulum closed form") {
  const fs::path dir = scratch("chambers");
  const Run r = cli({"chambers", data_path("pendulum.json"), "--rect", "-3", "3", "-3", "3", "--res", "4", "--threads",
                     "1", "--out", dir.string()});
  REQUIRE(r.code == exit_ok);
  const auto rows = read_csv(dir / "chambers.csv");
  REQUIRE(rows.size() == 17);
  CHECK(rows[0] == std::vector<std::string>{"p31", "p32", "n_stable"});
  for (std::size_t k = 1; k < rows.size(); ++k) {
    const double a = std::stod(rows[k][0]), b = std::stod(rows[k][1]);
    CHECK(std::stoi(rows[k][2]) == static_cast<int>(oracles::pendulum_stable_points(a, b).size()));
  }
  CHECK(fs::exists(dir / "chambers.svg"));
}

TEST_CASE("cli output is identical across runs") {
  const fs::path a = scratch("det-a"), b = scratch("det-b");
  for (const auto& d : {a, b}) {
    REQUIRE(cli({"chambers", data_path("zeeman.json"), "--rect", "-2", "-1", "0", "1", "--res", "3", "--out",
                 d.string()})
                .code == exit_ok);
    REQUIRE(cli({"sample", data_path("pendulum_line.json"), "--rect", "-3", "3", "-1", "1", "--out", d.string()}).code ==
            exit_ok);
  }
  CHECK(read_text_file((a / "chambers.csv").string()) == read_text_file((b / "chambers.csv").string()));
  CHECK(read_text_file((a / "sample.csv").string()) == read_text_file((b / "sample.csv").string()));
}

TEST_CASE("cli sample on a line of controls") {
  const fs::path dir = scratch("sample");
  const Run r = cli({"sample", data_path("pendulum_line.json"), "--rect", "-3", "3", "-1", "1", "--threads", "1",
                     "--out", dir.string()});
  REQUIRE(r.code == exit_ok);
  const auto rows = read_csv(dir / "sample.csv");
  REQUIRE(rows.size() == 3);
  CHECK(rows[0] == std::vector<std::string>{"p31", "t", "line_id", "is_C", "delta_min", "residual"});
  CHECK(std::stod(rows[1][0]) == Catch::Approx(-std::sqrt(3.75)).margin(1e-8));
  CHECK(std::stod(rows[2][0]) == Catch::Approx(std::sqrt(3.75)).margin(1e-8));
  CHECK(rows[1][3] == "1");
}

TEST_CASE("cli caches the witness between runs") {
  const fs::path dir = scratch("cache");
  const fs::path cache = dir / "cache";
  ::setenv("TENSEGRITY_CACHE_DIR", cache.string().c_str(), 1);
  const Run first = cli({"sample", data_path("pendulum_line.json"), "--rect", "-3", "3", "-1", "1", "--threads", "1",
                         "--out", dir.string()});
  const std::string csv1 = read_text_file((dir / "sample.csv").string());
  const Run second = cli({"sample", data_path("pendulum_line.json"), "--rect", "-3", "3", "-1", "1", "--threads", "1",
                          "--out", dir.string()});
  ::unsetenv("TENSEGRITY_CACHE_DIR");
  REQUIRE(first.code == exit_ok);
  REQUIRE(second.code == exit_ok);
  std::size_t witnesses = 0;
  for (const auto& e : fs::directory_iterator(cache))
    if (e.path().filename().string().rfind("witness-", 0) == 0) ++witnesses;
  CHECK(witnesses == 1);
  CHECK(read_text_file((dir / "sample.csv").string()) == csv1);
}

TEST_CASE("cli stability and track") {
  const fs::path dir = scratch("track");
  const Run s = cli({"stability", data_path("zeeman.json"), "--at", "-1.8", "1.0", "--threads", "1", "--out",
                     dir.string()});
  REQUIRE(s.code == exit_ok);
  const Json rep = read_json(dir / "stability.json");
  CHECK(rep.at("stable").size() == static_cast<std::size_t>(oracles::zeeman_count(-1.8, 1.0)));

  write_text_file((dir / "path.json").string(), R"({"waypoints": [[-1.8, 1.0], [-1.6, 1.2]]})");
  const Run t = cli({"track", data_path("zeeman.json"), "--path", (dir / "path.json").string(), "--samples", "10",
                     "--no-witness", "--threads", "1", "--out", dir.string()});
  REQUIRE(t.code == exit_ok);
  const auto rows = read_csv(dir / "track.csv");
  CHECK(rows[0] == std::vector<std::string>{"t", "p31", "p32", "p41", "p42", "min_eig", "stable"});
  CHECK(rows.size() == 12);
  const Json tj = read_json(dir / "track.json");
  CHECK(tj.at("events").empty());
  CHECK(tj.at("ended_stable") == true);
  const Json m = read_json(dir / "track.manifest.json");
  CHECK(m.at("outputs").size() == 2);

  // a --start far from every stable point is refused
  const Run bad = cli({"track", data_path("zeeman.json"), "--path", (dir / "path.json").string(), "--start", "5", "5",
                       "--no-witness", "--out", dir.string()});
  CHECK(bad.code == exit_input_error);
}
