#include "tensegrity/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "tensegrity/cache.hpp"
#include "tensegrity/catastrophe.hpp"
#include "tensegrity/equilibria.hpp"
#include "tensegrity/pathtrack.hpp"
#include "tensegrity/service.hpp"

namespace tensegrity {

namespace fs = std::filesystem;

Json to_json(const RunManifest& m) {
  return Json{{"command", m.command},
              {"args", m.args},
              {"framework", {{"path", m.framework_path}, {"hash", m.framework_hash}}},
              {"config", m.config},
              {"timings", {{"seconds", m.seconds}}},
              {"outputs", m.outputs}};
}

namespace {

class NumericalFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string framework;
  std::string config;
  unsigned threads = 0;
  std::uint64_t seed = 42;
  std::string out = ".";
  double newton_tol = 1e-10;
  double track_tol = 1e-7;
};

struct Options {
  Common common;
  std::vector<double> at;
  std::vector<double> rect{-4, 4, -4, 4};
  std::size_t res = 80;
  std::size_t lines = 60;
  std::string path;
  std::vector<double> start;
  std::size_t samples = 100;
  bool no_catastrophe = false;
  bool no_witness = false;
  std::string host = "127.0.0.1";
  int port = 8080;
};

void add_common(CLI::App* sub, Common& c, bool framework) {
  if (framework) sub->add_option("framework", c.framework, "framework JSON file");
  sub->add_option("--config", c.config, "JSON file of option defaults; flags take precedence");
  sub->add_option("--threads", c.threads, "worker threads, 0 for all cores");
  sub->add_option("--seed", c.seed, "random seed");
  sub->add_option("--out", c.out, "output directory");
  sub->add_option("--newton-tol", c.newton_tol);
  sub->add_option("--track-tol", c.track_tol);
}

std::vector<std::string> json_tokens(const Json& v) {
  std::vector<std::string> out;
  auto one = [](const Json& e) -> std::string {
    if (e.is_string()) return e.get<std::string>();
    if (e.is_boolean()) return e.get<bool>() ? "true" : "false";
    if (e.is_number_integer() || e.is_number_unsigned()) return e.dump();
    if (e.is_number()) return format_double(e.get<double>());
    throw InputError("unsupported config value " + e.dump());
  };
  if (v.is_array())
    for (const auto& e : v) out.push_back(one(e));
  else
    out.push_back(one(v));
  return out;
}

/// Fills options not given on the command line from the config file.
void merge_config(CLI::App* sub, const std::string& path) {
  Json cfg;
  try {
    cfg = Json::parse(read_text_file(path));
  } catch (const Json::exception& e) {
    throw InputError("config " + path + ": " + e.what());
  }
  if (!cfg.is_object()) throw InputError("config " + path + " must be a JSON object");
  for (const auto& [k, v] : cfg.items()) {
    std::string name = k;
    std::replace(name.begin(), name.end(), '_', '-');
    CLI::Option* opt = sub->get_option_no_throw("--" + name);
    if (opt == nullptr) opt = sub->get_option_no_throw(name);
    if (opt == nullptr) throw InputError("config " + path + ": unknown option '" + k + "'");
    if (opt->count() > 0) continue;
    for (const auto& tok : json_tokens(v)) opt->add_result(tok);
    opt->run_callback();
  }
}

TrackerConfig tracker_config(const Common& c) {
  TrackerConfig cfg;
  cfg.threads = c.threads;
  cfg.rng_seed = c.seed;
  cfg.newton_tol = c.newton_tol;
  cfg.track_tol = c.track_tol;
  cfg.validate();
  return cfg;
}

Json config_json(const Options& o, const std::string& cmd) {
  Json j{{"seed", o.common.seed},
         {"threads", o.common.threads},
         {"newton_tol", o.common.newton_tol},
         {"track_tol", o.common.track_tol},
         {"out", o.common.out}};
  if (cmd == "stability") j["at"] = o.at;
  if (cmd == "chambers" || cmd == "sample") j["rect"] = o.rect;
  if (cmd == "chambers") j["res"] = o.res;
  if (cmd == "sample") j["lines"] = o.lines;
  if (cmd == "degree") j["no_catastrophe"] = o.no_catastrophe;
  if (cmd == "track") {
    j["path"] = o.path;
    j["start"] = o.start;
    j["samples"] = o.samples;
    j["no_witness"] = o.no_witness;
  }
  return j;
}

RVector vec(const std::vector<double>& v) { return Eigen::Map<const RVector>(v.data(), static_cast<Eigen::Index>(v.size())); }

Rect rect_of(const std::vector<double>& r) {
  if (r.size() != 4) throw InputError("--rect takes x0 x1 y0 y1");
  Rect out{r[0], r[1], r[2], r[3]};
  if (!(out.x0 < out.x1) || !(out.y0 < out.y1)) throw InputError("--rect needs x0 < x1 and y0 < y1");
  return out;
}

class Runner {
 public:
  Runner(const Options& o, std::string cmd, std::vector<std::string> args, std::ostream& out)
      : o_(o), cmd_(std::move(cmd)), out_(out) {
    manifest_.command = cmd_;
    manifest_.args = std::move(args);
  }

  void run() {
    const auto t0 = std::chrono::steady_clock::now();
    cfg_ = tracker_config(o_.common);
    if (cmd_ != "serve") load();
    if (cmd_ == "degree") degree();
    else if (cmd_ == "stability") stability();
    else if (cmd_ == "chambers") chambers();
    else if (cmd_ == "sample") sample();
    else if (cmd_ == "track") track();
    else if (cmd_ == "serve") serve();
    manifest_.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    manifest_.config = config_json(o_, cmd_);
    if (cmd_ != "serve") write(cmd_ + ".manifest.json", to_json(manifest_).dump(2) + "\n", false);
  }

 private:
  void load() {
    if (o_.common.framework.empty()) throw InputError("a framework file is required");
    file_ = load_framework_file(o_.common.framework);
    model_ = std::make_shared<FrameworkModel>(file_.framework, file_.partition);
    manifest_.framework_path = o_.common.framework;
    manifest_.framework_hash = file_.source_hash;
  }

  void write(const std::string& name, const std::string& text, bool listed = true) {
    std::error_code ec;
    fs::create_directories(o_.common.out, ec);
    const std::string path = (fs::path(o_.common.out) / name).string();
    write_text_file(path, text);
    if (listed) manifest_.outputs.push_back(path);
  }

  RVector controls(const std::vector<double>& v, const std::string& flag) const {
    if (v.size() != model_->n_control())
      throw InputError(flag + " needs " + std::to_string(model_->n_control()) + " values, got " +
                       std::to_string(v.size()));
    return vec(v);
  }

  void degree() {
    Json j;
    try {
      const EquilibriumDegreeReport e = equilibrium_degree(*model_, cfg_);
      j["equilibrium_degree"] = e.degree;
      j["equilibrium"] = {{"degree", e.degree}, {"second", e.second}, {"paths", e.paths},
                          {"max_residual", e.max_residual}, {"seconds", e.seconds}};
      out_ << "equilibrium_degree: " << e.degree;
      if (!o_.no_catastrophe) {
        const DegreeReport c = catastrophe_degree(model_, cfg_);
        j["catastrophe_degree"] = c.degree;
        j["catastrophe"] = {{"degree", c.degree}, {"cross_check", c.cross_check}, {"first_method", c.first_method},
                            {"second_method", c.second_method}, {"seconds", c.seconds}};
        out_ << ", catastrophe_degree: " << c.degree;
      }
      out_ << "\n";
    } catch (const DegenerateSystemError&) {
      throw;
    } catch (const std::runtime_error& e) {
      throw NumericalFailure(e.what());
    }
    write("degree.json", j.dump(2) + "\n");
  }

  void stability() {
    const RVector y = controls(o_.at, "--at");
    const EquilibriumSeed seed = cached_generic_seed(*model_, cfg_, cache_dir_from_env());
    const StabilityReport r = stability_set(*model_, y, cfg_, &seed);
    const std::string text = to_json(r).dump(2) + "\n";
    out_ << text;
    write("stability.json", text);
  }

  void chambers() {
    const Rect r = rect_of(o_.rect);
    if (o_.res == 0) throw InputError("--res must be positive");
    if (model_->n_control() != 2) throw InputError("chambers needs two control parameters");
    const EquilibriumSeed seed = cached_generic_seed(*model_, cfg_, cache_dir_from_env());
    const ChamberGrid g = chamber_scan(*model_, r.x0, r.x1, r.y0, r.y1, o_.res, o_.res, cfg_, seed);
    std::ostringstream csv;
    csv << model_->control_names()[0] << ',' << model_->control_names()[1] << ",n_stable\n";
    std::vector<std::vector<int>> field(g.ny, std::vector<int>(g.nx));
    std::size_t failed = 0;
    for (std::size_t j = 0; j < g.ny; ++j)
      for (std::size_t i = 0; i < g.nx; ++i) {
        const RVector p = g.point(i, j);
        field[j][i] = g.at(i, j);
        if (g.at(i, j) < 0) ++failed;
        csv << format_double(p[0]) << ',' << format_double(p[1]) << ',' << g.at(i, j) << '\n';
      }
    write("chambers.csv", csv.str());
    write("chambers.svg", svg_heatmap(field, r.x0, r.x1, r.y0, r.y1, file_.name + " stable equilibria"));
    out_ << "chambers: " << g.nx << "x" << g.ny << " grid, " << failed << " failed points\n";
  }

  PseudoWitnessSet witness() {
    try {
      return cached_witness(model_, cfg_, cache_dir_from_env());
    } catch (const DegenerateSystemError&) {
      throw;
    } catch (const std::runtime_error& e) {
      throw NumericalFailure(e.what());
    }
  }

  void sample() {
    const Rect r = rect_of(o_.rect);
    const PseudoWitnessSet w = witness();
    std::vector<CatastrophePoint> pts;
    if (model_->n_control() == 1) {
      ControlSlice line;
      line.base = RVector::Constant(1, r.x0);
      line.directions = {RVector::Constant(1, r.x1 - r.x0)};
      pts = intersect_slice(w, line, cfg_, true).points;
    } else if (model_->n_control() == 2) {
      pts = sample_catastrophe(w, r, o_.lines, cfg_);
    } else {
      throw InputError("sample needs one or two control parameters");
    }
    std::ostringstream csv;
    const auto& names = model_->control_names();
    for (const auto& n : names) csv << n << ',';
    csv << "t,line_id,is_C,delta_min,residual\n";
    std::vector<SvgPoint> svg;
    std::size_t n_c = 0;
    for (const auto& p : pts) {
      for (double v : p.y) csv << format_double(v) << ',';
      csv << format_double(p.t) << ',' << p.line_id << ',' << (p.delta_nonneg ? 1 : 0) << ','
          << format_double(p.delta_min) << ',' << format_double(std::max(p.dl_residual, p.hv_residual)) << '\n';
      svg.push_back({p.y[0], p.y.size() > 1 ? p.y[1] : 0.0, p.delta_nonneg});
      if (p.delta_nonneg) ++n_c;
    }
    write("sample.csv", csv.str());
    const double sy0 = names.size() > 1 ? r.y0 : -1.0, sy1 = names.size() > 1 ? r.y1 : 1.0;
    write("sample.svg", svg_scatter(svg, r.x0, r.x1, sy0, sy1, file_.name + " catastrophe sample"));
    out_ << "sample: " << pts.size() << " real points, " << n_c << " with delta >= 0, witness degree "
         << w.degree() << "\n";
  }

  void track() {
    if (o_.path.empty()) throw InputError("--path is required");
    Json pj;
    try {
      pj = Json::parse(read_text_file(o_.path));
    } catch (const Json::exception& e) {
      throw InputError("path " + o_.path + ": " + e.what());
    }
    const ControlPath path = control_path_from_json(pj);
    path.validate(model_->n_control());
    const EquilibriumSeed seed = cached_generic_seed(*model_, cfg_, cache_dir_from_env());
    const StabilityReport s0 = stability_set(*model_, path.waypoints.front(), cfg_, &seed);
    if (s0.stable.empty()) throw InputError("no stable equilibrium at the first waypoint");
    const StablePoint* start = &s0.stable.front();
    if (!o_.start.empty()) {
      if (o_.start.size() != model_->n_internal())
        throw InputError("--start needs " + std::to_string(model_->n_internal()) + " values");
      const RVector x = vec(o_.start);
      double best = (start->point.x - x).norm();
      for (const auto& sp : s0.stable)
        if ((sp.point.x - x).norm() < best) {
          best = (sp.point.x - x).norm();
          start = &sp;
        }
      if (best > 1e-3 * std::max(1.0, x.norm()))
        throw InputError("--start is not within 1e-3 of a stable equilibrium at the first waypoint");
    }
    std::optional<PseudoWitnessSet> w;
    if (!o_.no_witness) w = witness();
    LiftOptions lo;
    lo.samples_per_segment = o_.samples;
    LiftContext ctx{w ? &*w : nullptr, &seed};
    const LiftResult r = lift_path(*model_, path, start->point, cfg_, ctx, lo);
    write("track.json", to_json(r).dump(2) + "\n");
    write("track.csv", trajectory_csv(*model_, r));
    out_ << "track: " << r.trajectory.size() << " samples, " << r.events.size() << " events, " << r.jumps()
         << " jumps, ended " << (r.ended_stable ? "stable" : "unstable") << "\n";
  }

  void serve() {
    ServiceOptions so;
    so.cfg = cfg_;
    so.cache_dir = cache_dir_from_env();
    Service service(so);
    out_ << "listening on " << o_.host << ":" << o_.port << std::endl;
    if (!service.listen(o_.host, o_.port)) throw InputError("cannot listen on " + o_.host + ":" + std::to_string(o_.port));
  }

  const Options& o_;
  std::string cmd_;
  std::ostream& out_;
  RunManifest manifest_;
  TrackerConfig cfg_;
  FrameworkFile file_;
  std::shared_ptr<FrameworkModel> model_;
};

int fail(std::ostream& err, int code, const std::string& kind, const std::string& message) {
  err << Json{{"error", kind}, {"message", message}, {"exit_code", code}}.dump() << "\n";
  return code;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Stable equilibria and catastrophe sets of elastic tensegrity frameworks", "tensegrity"};
  app.require_subcommand(1);
  std::vector<CLI::App*> subs;

  auto* degree = app.add_subcommand("degree", "equilibrium and catastrophe degrees");
  add_common(degree, o.common, true);
  degree->add_flag("--no-catastrophe", o.no_catastrophe, "skip the catastrophe degree");

  auto* stability = app.add_subcommand("stability", "stable equilibria at one control point");
  add_common(stability, o.common, true);
  stability->add_option("--at", o.at, "control values");

  auto* chambers = app.add_subcommand("chambers", "stable-count heatmap over a control rectangle");
  add_common(chambers, o.common, true);
  chambers->add_option("--rect", o.rect, "x0 x1 y0 y1")->expected(4);
  chambers->add_option("--res", o.res, "cells per side");

  auto* sample = app.add_subcommand("sample", "sample the catastrophe set");
  add_common(sample, o.common, true);
  sample->add_option("--rect", o.rect, "x0 x1 y0 y1")->expected(4);
  sample->add_option("--lines", o.lines, "number of sweep lines");

  auto* track = app.add_subcommand("track", "lift a control path");
  add_common(track, o.common, true);
  track->add_option("--path", o.path, "path JSON {waypoints: [[..], ..]}");
  track->add_option("--start", o.start, "internal coordinates near the starting equilibrium");
  track->add_option("--samples", o.samples, "trajectory samples per segment");
  track->add_flag("--no-witness", o.no_witness, "detect catastrophes by the local monitor only");

  auto* serve = app.add_subcommand("serve", "HTTP service");
  add_common(serve, o.common, false);
  serve->add_option("--host", o.host);
  serve->add_option("--port", o.port);

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return exit_ok;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return exit_ok;
  } catch (const CLI::ParseError& e) {
    return fail(err, exit_input_error, "input_error", e.what());
  }

  CLI::App* sub = app.get_subcommands().front();
  try {
    if (!o.common.config.empty()) merge_config(sub, o.common.config);
    Runner(o, sub->get_name(), args, out).run();
    return exit_ok;
  } catch (const CLI::ParseError& e) {
    return fail(err, exit_input_error, "input_error", e.what());
  } catch (const DegenerateSystemError& e) {
    return fail(err, exit_numerical_failure, "numerical_failure", e.what());
  } catch (const NumericalFailure& e) {
    return fail(err, exit_numerical_failure, "numerical_failure", e.what());
  } catch (const std::invalid_argument& e) {
    return fail(err, exit_input_error, "input_error", e.what());
  } catch (const Json::exception& e) {
    return fail(err, exit_input_error, "input_error", e.what());
  } catch (const std::exception& e) {
    return fail(err, exit_numerical_failure, "numerical_failure", e.what());
  }
}

}  // namespace tensegrity
