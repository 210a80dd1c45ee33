#include "oracles/energy_scans.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace oracles {

namespace {

double hooke(double c, double rest, double d) {
  const double s = std::max(0.0, d - rest);
  return 0.5 * c * s * s;
}

std::vector<int> strict_minima(const std::vector<double>& e) {
  const int n = static_cast<int>(e.size());
  std::vector<int> out;
  for (int k = 0; k < n; ++k)
    if (e[k] < e[(k + 1) % n] && e[k] < e[(k + n - 1) % n]) out.push_back(k);
  return out;
}

struct FourBarPose {
  Eigen::Vector2d p3, p4;
  bool ok = false;
};

FourBarPose fourbar_pose(double theta, int branch) {
  FourBarPose pose;
  pose.p4 = {-1.0 + 1.5 * std::cos(theta), 1.5 * std::sin(theta)};
  const Eigen::Vector2d p2(1.0, 0.0);
  const Eigen::Vector2d v = p2 - pose.p4;
  const double d = v.norm();
  const double along = (1.0 - 9.0 + d * d) / (2.0 * d);  // from node 4 toward node 2
  const double h2 = 1.0 - along * along;
  if (h2 < 0.0) return pose;
  const Eigen::Vector2d u = v / d;
  const Eigen::Vector2d perp(-u.y(), u.x());
  pose.p3 = pose.p4 + along * u + branch * std::sqrt(h2) * perp;
  pose.ok = true;
  return pose;
}

}  // namespace

double zeeman_energy(double theta, double a, double b) {
  const double x = std::cos(theta), y = std::sin(theta);
  return hooke(0.5, 1.0, std::hypot(x - 2.0, y + 1.0)) + hooke(0.5, 1.0, std::hypot(x - a, y - b));
}

std::vector<ScanMinimum> zeeman_minima(double a, double b, int samples) {
  std::vector<double> e(samples);
  for (int k = 0; k < samples; ++k) e[k] = zeeman_energy(2.0 * std::numbers::pi * k / samples, a, b);
  std::vector<ScanMinimum> out;
  for (int k : strict_minima(e)) {
    ScanMinimum m;
    m.theta = 2.0 * std::numbers::pi * k / samples;
    m.energy = e[k];
    m.x = Eigen::Vector2d(std::cos(m.theta), std::sin(m.theta));
    out.push_back(m);
  }
  return out;
}

double fourbar_energy(double theta, int branch, double a, double b) {
  const FourBarPose p = fourbar_pose(theta, branch);
  if (!p.ok) return std::numeric_limits<double>::quiet_NaN();
  return hooke(1.0, 0.1, (p.p3 - Eigen::Vector2d(4.0, 3.0)).norm()) + hooke(2.0, 0.1, (p.p4 - Eigen::Vector2d(a, b)).norm());
}

std::vector<ScanMinimum> fourbar_minima(double a, double b, int samples) {
  // node 4 must stay within 2 of node 2: cos(theta) <= 3/8
  const double lo = std::acos(0.375), hi = 2.0 * std::numbers::pi - lo;
  std::vector<double> thetas;
  std::vector<int> branches;
  for (int k = 0; k < samples; ++k) {
    thetas.push_back(lo + (hi - lo) * (k + 0.5) / samples);
    branches.push_back(1);
  }
  for (int k = samples - 1; k >= 0; --k) {
    thetas.push_back(lo + (hi - lo) * (k + 0.5) / samples);
    branches.push_back(-1);
  }
  std::vector<double> e(thetas.size());
  for (std::size_t k = 0; k < thetas.size(); ++k) e[k] = fourbar_energy(thetas[k], branches[k], a, b);
  std::vector<ScanMinimum> out;
  for (int k : strict_minima(e)) {
    const FourBarPose p = fourbar_pose(thetas[k], branches[k]);
    ScanMinimum m;
    m.theta = thetas[k];
    m.branch = branches[k];
    m.energy = e[k];
    m.x.resize(4);
    m.x << p.p3.x(), p.p3.y(), p.p4.x(), p.p4.y();
    out.push_back(m);
  }
  return out;
}

int nearest_minimum(const std::vector<ScanMinimum>& minima, const Eigen::VectorXd& x) {
  int best = -1;
  double best_d = 0.0;
  for (std::size_t k = 0; k < minima.size(); ++k) {
    const double d = (minima[k].x - x).norm();
    if (best < 0 || d < best_d) {
      best = static_cast<int>(k);
      best_d = d;
    }
  }
  return best;
}

std::vector<Eigen::Vector2d> pendulum_stable_points(double a, double b) {
  const double r = std::hypot(a, b);
  const double phi = std::atan2(b, a);
  if (r > 2.0) return {Eigen::Vector2d(std::cos(phi), std::sin(phi))};
  // |x - c|^2 = 1 + r^2 - 2 r cos(theta - phi) = 1
  const double off = std::acos(r / 2.0);
  return {Eigen::Vector2d(std::cos(phi + off), std::sin(phi + off)),
          Eigen::Vector2d(std::cos(phi - off), std::sin(phi - off))};
}

}  // namespace oracles
