#include "tensegrity/service.hpp"

#include <httplib.h>

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <map>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include "tensegrity/cache.hpp"
#include "tensegrity/catastrophe.hpp"
#include "tensegrity/equilibria.hpp"
#include "tensegrity/pathtrack.hpp"

namespace tensegrity {

namespace {

enum class JobState { idle, running, ready, failed };

const char* to_string(JobState s) {
  switch (s) {
    case JobState::idle: return "idle";
    case JobState::running: return "running";
    case JobState::ready: return "ready";
    case JobState::failed: return "failed";
  }
  return "?";
}

/// A write-once value computed on a background thread.
template <class T>
class Job {
 public:
  ~Job() {
    if (thread_.joinable()) thread_.join();
  }

  void start(std::function<T()> fn) {
    std::lock_guard lk(m_);
    if (state_ != JobState::idle) return;
    state_ = JobState::running;
    thread_ = std::thread([this, fn = std::move(fn)] {
      try {
        auto v = std::make_shared<const T>(fn());
        std::lock_guard lk2(m_);
        value_ = std::move(v);
        state_ = JobState::ready;
      } catch (const std::exception& e) {
        std::lock_guard lk2(m_);
        error_ = e.what();
        degenerate_ = dynamic_cast<const DegenerateSystemError*>(&e) != nullptr;
        state_ = JobState::failed;
      }
      cv_.notify_all();
    });
  }

  JobState wait_for(double seconds) {
    std::unique_lock lk(m_);
    cv_.wait_for(lk, std::chrono::duration<double>(seconds), [&] { return state_ != JobState::running; });
    return state_;
  }

  JobState state() const {
    std::lock_guard lk(m_);
    return state_;
  }
  std::shared_ptr<const T> value() const {
    std::lock_guard lk(m_);
    return value_;
  }
  std::string error() const {
    std::lock_guard lk(m_);
    return error_;
  }
  bool degenerate() const {
    std::lock_guard lk(m_);
    return degenerate_;
  }

 private:
  mutable std::mutex m_;
  std::condition_variable cv_;
  JobState state_ = JobState::idle;
  std::shared_ptr<const T> value_;
  std::string error_;
  bool degenerate_ = false;
  std::thread thread_;
};

struct Session {
  std::string id;
  FrameworkFile file;
  std::shared_ptr<const FrameworkModel> model;
  Job<EquilibriumSeed> seed;
  Job<PseudoWitnessSet> witness;

  std::mutex drag;  // held for a whole drag
  std::mutex state;
  std::optional<CriticalPoint> current;
  std::optional<RVector> last_y;

  std::mutex sample_mutex;
  std::map<std::string, Json> samples;
};

struct HttpError : std::runtime_error {
  int status;
  Json body;
  HttpError(int s, const std::string& msg, Json extra = Json::object())
      : std::runtime_error(msg), status(s), body(std::move(extra)) {
    body["error"] = msg;
  }
};

void reply(httplib::Response& res, int status, const Json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

std::vector<double> parse_list(const std::string& text, const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw HttpError(400, what + ": cannot parse '" + item + "'");
    }
  }
  return out;
}

}  // namespace

struct Service::Impl {
  ServiceOptions opts;
  httplib::Server server;
  std::mutex sessions_mutex;
  std::map<std::string, std::shared_ptr<Session>> sessions;
  std::atomic<std::uint64_t> counter{0};
  std::mt19937_64 id_rng{std::random_device{}()};

  explicit Impl(ServiceOptions o) : opts(std::move(o)) {
    opts.cfg.validate();
    server.set_default_headers({{"Access-Control-Allow-Origin", opts.cors_origin},
                                {"Access-Control-Allow-Methods", "GET, POST, DELETE, OPTIONS"},
                                {"Access-Control-Allow-Headers", "Content-Type"}});
    server.Options(".*", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
    server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
      try {
        std::rethrow_exception(ep);
      } catch (const std::exception& e) {
        reply(res, 500, Json{{"error", e.what()}});
      } catch (...) {
        reply(res, 500, Json{{"error", "unknown failure"}});
      }
    });
    route_get("/health", [](const httplib::Request&, httplib::Response& res) { reply(res, 200, Json{{"ok", true}}); });
    route_post("/sessions", [this](const auto& req, auto& res) { create(req, res); });
    route_get(R"(/sessions/([^/]+))", [this](const auto& req, auto& res) { status(*find(req), res); });
    route_delete(R"(/sessions/([^/]+))", [this](const auto& req, auto& res) { remove(req, res); });
    route_get(R"(/sessions/([^/]+)/status)", [this](const auto& req, auto& res) { status(*find(req), res); });
    route_get(R"(/sessions/([^/]+)/stability)", [this](const auto& req, auto& res) { stability(req, res); });
    route_post(R"(/sessions/([^/]+)/drag)", [this](const auto& req, auto& res) { drag(req, res); });
    route_get(R"(/sessions/([^/]+)/catastrophe)", [this](const auto& req, auto& res) { catastrophe(req, res); });
    route_get(R"(/sessions/([^/]+)/energy_profile)", [this](const auto& req, auto& res) { profile(req, res); });
  }

  using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

  static httplib::Server::Handler guarded(Handler h) {
    return [h = std::move(h)](const httplib::Request& req, httplib::Response& res) {
      try {
        h(req, res);
      } catch (const HttpError& e) {
        if (e.body.contains("retry_after")) res.set_header("Retry-After", e.body["retry_after"].dump());
        reply(res, e.status, e.body);
      } catch (const std::invalid_argument& e) {
        reply(res, 400, Json{{"error", e.what()}});
      } catch (const Json::exception& e) {
        reply(res, 400, Json{{"error", e.what()}});
      }
    };
  }
  void route_get(const std::string& p, Handler h) { server.Get(p, guarded(std::move(h))); }
  void route_post(const std::string& p, Handler h) { server.Post(p, guarded(std::move(h))); }
  void route_delete(const std::string& p, Handler h) { server.Delete(p, guarded(std::move(h))); }

  std::shared_ptr<Session> find(const httplib::Request& req) {
    const std::string id = req.matches[1];
    std::lock_guard lk(sessions_mutex);
    const auto it = sessions.find(id);
    if (it == sessions.end()) throw HttpError(404, "no session " + id);
    return it->second;
  }

  RVector controls(const Session& s, const std::vector<double>& v) const {
    if (v.size() != s.model->n_control())
      throw HttpError(422, "expected " + std::to_string(s.model->n_control()) + " control values, got " +
                               std::to_string(v.size()));
    RVector y(static_cast<Eigen::Index>(v.size()));
    for (std::size_t k = 0; k < v.size(); ++k) {
      if (!std::isfinite(v[k]) || std::abs(v[k]) > opts.chart_bound)
        throw HttpError(422, "control value " + std::to_string(k) + " is outside the chart");
      y[static_cast<Eigen::Index>(k)] = v[k];
    }
    return y;
  }

  RVector query_controls(const Session& s, const httplib::Request& req) const {
    if (!req.has_param("y")) throw HttpError(400, "missing query parameter y");
    return controls(s, parse_list(req.get_param_value("y"), "y"));
  }

  std::shared_ptr<const EquilibriumSeed> need_seed(Session& s) const {
    switch (s.seed.wait_for(opts.deadline_seconds)) {
      case JobState::ready: return s.seed.value();
      case JobState::failed: throw HttpError(500, "equilibrium seed failed: " + s.seed.error());
      default: throw HttpError(503, "equilibrium seed is still being computed", Json{{"retry_after", 1}});
    }
  }

  void start_witness(const std::shared_ptr<Session>& s) {
    TrackerConfig cfg = opts.cfg;
    auto dir = opts.cache_dir;
    std::shared_ptr<const FrameworkModel> model = s->model;
    s->witness.start([model, cfg, dir] { return cached_witness(model, cfg, dir); });
  }

  void create(const httplib::Request& req, httplib::Response& res) {
    Json body = Json::parse(req.body);
    const bool witness = body.is_object() && body.value("build_witness", false);
    if (body.is_object() && body.contains("framework")) body = body.at("framework");
    auto s = std::make_shared<Session>();
    s->file = parse_framework(body);
    s->model = std::make_shared<const FrameworkModel>(s->file.framework, s->file.partition);
    std::ostringstream id;
    id << std::hex << ++counter << '-' << (id_rng() & 0xffffffffu);
    s->id = id.str();
    {
      TrackerConfig cfg = opts.cfg;
      auto dir = opts.cache_dir;
      std::shared_ptr<const FrameworkModel> model = s->model;
      s->seed.start([model, cfg, dir] { return cached_generic_seed(*model, cfg, dir); });
    }
    if (witness) start_witness(s);
    {
      std::lock_guard lk(sessions_mutex);
      sessions[s->id] = s;
    }
    s->seed.wait_for(opts.deadline_seconds);
    Json out = status_json(*s);
    out["control_names"] = s->model->control_names();
    out["internal_names"] = s->model->internal_names();
    out["name"] = s->file.name;
    out["system_hash"] = system_hash(*s->model);
    reply(res, 201, out);
  }

  Json status_json(Session& s) const {
    Json j{{"id", s.id}, {"seed", to_string(s.seed.state())}, {"witness", to_string(s.witness.state())}};
    if (s.seed.state() == JobState::failed) j["seed_error"] = s.seed.error();
    if (s.witness.state() == JobState::failed) j["witness_error"] = s.witness.error();
    if (auto w = s.witness.value()) j["catastrophe_degree"] = w->degree();
    if (auto e = s.seed.value()) j["equilibrium_degree"] = e->solutions.size();
    std::lock_guard lk(s.state);
    j["current"] = s.current ? to_json(*s.current) : Json(nullptr);
    j["last_y"] = s.last_y ? to_json(*s.last_y) : Json(nullptr);
    return j;
  }

  void status(Session& s, httplib::Response& res) { reply(res, 200, status_json(s)); }

  void remove(const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1];
    std::shared_ptr<Session> gone;
    {
      std::lock_guard lk(sessions_mutex);
      const auto it = sessions.find(id);
      if (it == sessions.end()) throw HttpError(404, "no session " + id);
      gone = it->second;
      sessions.erase(it);
    }
    reply(res, 200, Json{{"deleted", id}});
  }

  void stability(const httplib::Request& req, httplib::Response& res) {
    auto s = find(req);
    const RVector y = query_controls(*s, req);
    const auto seed = need_seed(*s);
    TrackerConfig cfg = opts.cfg;
    cfg.threads = 1;
    reply(res, 200, to_json(stability_set(*s->model, y, cfg, seed.get())));
  }

  static Json point_reply(const RVector& y, const CriticalPoint& p, const StabilityCertificate& c) {
    return Json{{"y", to_json(y)},
                {"point", to_json(p)},
                {"certificate", to_json(c)},
                {"stable", c.verdict == Verdict::stable},
                {"jumped", false},
                {"event", nullptr},
                {"events", Json::array()}};
  }

  void drag(const httplib::Request& req, httplib::Response& res) {
    auto s = find(req);
    std::unique_lock lock(s->drag, std::try_to_lock);
    if (!lock.owns_lock()) throw HttpError(409, "a drag is already in progress for this session");
    if (opts.on_drag_start) opts.on_drag_start();
    const Json body = Json::parse(req.body);
    const Json& yj = body.contains("y_new") ? body.at("y_new") : body.at("y");
    const RVector y = controls(*s, yj.get<std::vector<double>>());
    const auto seed = need_seed(*s);
    TrackerConfig cfg = opts.cfg;
    cfg.threads = 1;

    std::optional<CriticalPoint> current;
    std::optional<RVector> last_y;
    {
      std::lock_guard lk(s->state);
      current = s->current;
      last_y = s->last_y;
    }
    auto commit = [&](const std::optional<CriticalPoint>& p) {
      std::lock_guard lk(s->state);
      s->current = p;
      s->last_y = y;
    };

    if (!current || !last_y) {
      const StabilityReport r = stability_set(*s->model, y, cfg, seed.get());
      if (r.stable.empty()) {
        commit(std::nullopt);
        reply(res, 200, Json{{"y", to_json(y)}, {"point", nullptr}, {"stable", false}, {"jumped", false},
                             {"event", nullptr}, {"events", Json::array()}, {"initialized", true}});
        return;
      }
      const StablePoint* best = &r.stable.front();
      for (const auto& sp : r.stable)
        if (sp.point.energy < best->point.energy) best = &sp;
      commit(best->point);
      Json out = point_reply(y, best->point, best->certificate);
      out["initialized"] = true;
      reply(res, 200, out);
      return;
    }

    if ((*last_y - y).norm() == 0.0) {
      const StabilityCertificate c = certify_stability(*s->model, *current, y);
      reply(res, 200, point_reply(y, *current, c));
      return;
    }

    ControlPath path{{*last_y, y}};
    LiftOptions lo;
    lo.samples_per_segment = std::max<std::size_t>(1, opts.drag_samples);
    const auto witness = s->witness.state() == JobState::ready ? s->witness.value() : nullptr;
    LiftContext ctx{witness.get(), seed.get()};
    LiftResult r;
    try {
      r = lift_path(*s->model, path, *current, cfg, ctx, lo);
    } catch (const LiftError&) {
      // the held point no longer certifies; restart from the nearest stable one
      const auto p = nearest_stable(*s->model, y, current->x, cfg, seed.get());
      commit(p ? std::optional<CriticalPoint>(p->point) : std::nullopt);
      Json out = p ? point_reply(y, p->point, p->certificate)
                   : Json{{"y", to_json(y)}, {"point", nullptr}, {"stable", false}, {"event", nullptr},
                          {"events", Json::array()}};
      out["jumped"] = true;
      out["reinitialized"] = true;
      reply(res, 200, out);
      return;
    }
    const TrajectorySample& last = r.trajectory.back();
    commit(r.ended_stable ? std::optional<CriticalPoint>(last.point) : std::nullopt);
    Json out = point_reply(y, last.point, last.certificate);
    if (!r.ended_stable) {
      out["stable"] = false;
      out["point"] = nullptr;
    }
    Json events = Json::array();
    for (const auto& e : r.events) events.push_back(to_json(e));
    out["events"] = events;
    out["jumped"] = r.jumps() > 0;
    for (const auto& e : r.events)
      if (e.jumped) {
        out["event"] = to_json(e);
        break;
      }
    out["warnings"] = r.warnings;
    reply(res, 200, out);
  }

  void catastrophe(const httplib::Request& req, httplib::Response& res) {
    auto s = find(req);
    Rect rect;
    if (req.has_param("rect")) {
      const auto r = parse_list(req.get_param_value("rect"), "rect");
      if (r.size() != 4 || !(r[0] < r[1]) || !(r[2] < r[3])) throw HttpError(400, "rect must be x0,x1,y0,y1");
      rect = Rect{r[0], r[1], r[2], r[3]};
    }
    std::size_t lines = 60;
    if (req.has_param("lines")) {
      const auto l = parse_list(req.get_param_value("lines"), "lines");
      if (l.size() != 1 || !(l[0] >= 1 && l[0] <= 10000)) throw HttpError(400, "lines must be in [1, 10000]");
      lines = static_cast<std::size_t>(l[0]);
    }
    if (s->model->n_control() > 2) throw HttpError(422, "sampling needs one or two control parameters");
    start_witness(s);
    switch (s->witness.wait_for(opts.deadline_seconds)) {
      case JobState::ready: break;
      case JobState::failed:
        throw HttpError(s->witness.degenerate() ? 422 : 500, "catastrophe witness failed: " + s->witness.error());
      default:
        throw HttpError(503, "catastrophe witness is still being computed", Json{{"retry_after", 5}});
    }
    const std::string key = format_double(rect.x0) + "," + format_double(rect.x1) + "," + format_double(rect.y0) + "," +
                            format_double(rect.y1) + "/" + std::to_string(lines);
    std::lock_guard lk(s->sample_mutex);
    auto it = s->samples.find(key);
    if (it == s->samples.end()) {
      const auto w = s->witness.value();
      TrackerConfig cfg = opts.cfg;
      std::vector<CatastrophePoint> pts;
      if (s->model->n_control() == 1) {
        ControlSlice line;
        line.base = RVector::Constant(1, rect.x0);
        line.directions = {RVector::Constant(1, rect.x1 - rect.x0)};
        pts = intersect_slice(*w, line, cfg, true).points;
      } else {
        pts = sample_catastrophe(*w, rect, lines, cfg);
      }
      Json arr = Json::array();
      for (const auto& p : pts) arr.push_back(to_json(p));
      it = s->samples
               .emplace(key, Json{{"rect", {rect.x0, rect.x1, rect.y0, rect.y1}},
                                  {"lines", lines},
                                  {"degree", w->degree()},
                                  {"points", arr}})
               .first;
    }
    reply(res, 200, it->second);
  }

  void profile(const httplib::Request& req, httplib::Response& res) {
    auto s = find(req);
    const RVector y = query_controls(*s, req);
    std::size_t samples = 720;
    if (req.has_param("samples")) {
      const auto v = parse_list(req.get_param_value("samples"), "samples");
      if (v.size() != 1 || !(v[0] >= 2 && v[0] <= static_cast<double>(opts.max_profile_samples)))
        throw HttpError(400, "samples must be in [2, " + std::to_string(opts.max_profile_samples) + "]");
      samples = static_cast<std::size_t>(v[0]);
    }
    std::optional<RVector> x;
    {
      std::lock_guard lk(s->state);
      if (s->current && s->last_y && (*s->last_y - y).norm() == 0.0) x = s->current->x;
    }
    try {
      reply(res, 200, to_json(energy_profile(*s->model, y, samples, x)));
    } catch (const FrameworkError& e) {
      throw HttpError(422, e.what());
    }
  }
};

Service::Service(ServiceOptions opts) : impl_(std::make_unique<Impl>(std::move(opts))) {}

Service::~Service() {
  stop();
}

bool Service::listen(const std::string& host, int port) { return impl_->server.listen(host, port); }
int Service::bind_to_any_port(const std::string& host) { return impl_->server.bind_to_any_port(host); }
bool Service::listen_after_bind() { return impl_->server.listen_after_bind(); }
void Service::wait_until_ready() const { impl_->server.wait_until_ready(); }
void Service::stop() {
  if (impl_->server.is_running()) impl_->server.stop();
}

}  // namespace tensegrity
