// HTTP/JSON service for interactive clients: sessions holding a framework,
// its cached equilibrium seed and catastrophe witness, and a current
// equilibrium that follows control drags.
#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>

#include "tensegrity/tracker.hpp"

namespace tensegrity {

struct ServiceOptions {
  TrackerConfig cfg;
  std::optional<std::string> cache_dir;
  double deadline_seconds = 5.0;    // longer waits answer 503 with Retry-After
  std::string cors_origin = "*";
  std::size_t drag_samples = 10;    // trajectory samples per drag segment
  double chart_bound = 1e3;         // |y_i| above this is out of chart
  std::size_t max_profile_samples = 20000;
  /// Called inside a drag while the session's drag lock is held.
  std::function<void()> on_drag_start;
};

/// Endpoints:
///   POST   /sessions                      framework JSON -> {id, ...}
///   GET    /sessions/{id}                 job status
///   DELETE /sessions/{id}
///   GET    /sessions/{id}/stability?y=a,b
///   POST   /sessions/{id}/drag            {"y": [..]}
///   GET    /sessions/{id}/catastrophe?rect=x0,x1,y0,y1&lines=n
///   GET    /sessions/{id}/energy_profile?y=a,b&samples=n
///   GET    /health
class Service {
 public:
  explicit Service(ServiceOptions opts = {});
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Blocks until stop().
  bool listen(const std::string& host, int port);
  /// Binds to a free port and returns it; serve with listen_after_bind().
  int bind_to_any_port(const std::string& host);
  bool listen_after_bind();
  void wait_until_ready() const;
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace tensegrity
