#pragma once

// Constant-acceleration kinematics under the modified random-waypoint model.
// True positions drive physics; reported positions (possibly spoofed) are what
// the network layer sees.

#include "uavchain/rng.hpp"

#include <algorithm>
#include <cmath>

namespace uavchain::mobility {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  Vec3& operator+=(const Vec3& o) noexcept {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  friend Vec3 operator+(Vec3 a, const Vec3& b) noexcept { return a += b; }
  friend Vec3 operator-(const Vec3& a, const Vec3& b) noexcept { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend Vec3 operator*(const Vec3& a, double s) noexcept { return {a.x * s, a.y * s, a.z * s}; }
  friend Vec3 operator*(double s, const Vec3& a) noexcept { return a * s; }
  friend bool operator==(const Vec3&, const Vec3&) = default;

  double norm() const noexcept { return std::sqrt(x * x + y * y + z * z); }
  bool finite() const noexcept { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }
};

inline double distance(const Vec3& a, const Vec3& b) noexcept { return (a - b).norm(); }

/// Scales `v` down to magnitude `limit` if it exceeds it; direction is kept.
inline Vec3 clamp_norm(const Vec3& v, double limit) noexcept {
  const double n = v.norm();
  if (!(n > limit) || !(n > 0.0)) return v;
  // limit / n can land a few ulp high once re-normed; step the factor down.
  double k = limit / n;
  Vec3 out = v * k;
  while (out.norm() > limit) {
    k = std::nextafter(k, 0.0);
    out = v * k;
  }
  return out;
}

struct Box {
  Vec3 lo;
  Vec3 hi;

  bool contains(const Vec3& p) const noexcept {
    return p.x >= lo.x && p.x <= hi.x && p.y >= lo.y && p.y <= hi.y && p.z >= lo.z && p.z <= hi.z;
  }
  bool non_degenerate() const noexcept { return hi.x > lo.x && hi.y > lo.y && hi.z >= lo.z; }
  Vec3 center() const noexcept { return (lo + hi) * 0.5; }
};

struct KinematicState {
  Vec3 position;
  Vec3 velocity;
  Vec3 acceleration;
  Vec3 reported_position;

  static KinematicState at(const Vec3& p) noexcept { return {p, {}, {}, p}; }
  Vec3 spoof_offset() const noexcept { return reported_position - position; }
};

struct MobilityConfig {
  double v_max = 50.0;
  double a_max = 5.0;
  double dt = 0.1;
  Box area{{0.0, 0.0, 50.0}, {25000.0, 25000.0, 500.0}};
  double waypoint_arrival_radius = 50.0;
  // Both on in every scenario; switched off only to compare against closed-form kinematics.
  bool limit_motion = true;
  bool reflect_at_bounds = true;

  bool valid() const noexcept {
    return v_max > 0 && a_max > 0 && dt > 0 && waypoint_arrival_radius > 0 && area.non_degenerate();
  }
};

namespace detail {
inline void reflect_axis(double& p, double& v, double lo, double hi) noexcept {
  if (hi <= lo) {
    p = lo;
    v = 0.0;
    return;
  }
  for (int i = 0; i < 4 && (p < lo || p > hi); ++i) {
    if (p < lo) {
      p = 2.0 * lo - p;
      v = -v;
    } else if (p > hi) {
      p = 2.0 * hi - p;
      v = -v;
    }
  }
  p = std::clamp(p, lo, hi);
}
}  // namespace detail

/// Advances one time step:
///   p' = p + v dt + a dt^2 / 2,  v' = v + a dt
/// with |a| <= a_max and |v'| <= v_max, reflecting off the area boundary.
inline KinematicState step(const KinematicState& s, const MobilityConfig& cfg) noexcept {
  const double dt = cfg.dt;
  const Vec3 accel = cfg.limit_motion ? clamp_norm(s.acceleration, cfg.a_max) : s.acceleration;
  KinematicState out = s;
  out.acceleration = accel;
  out.position = s.position + s.velocity * dt + accel * (0.5 * dt * dt);
  out.velocity = s.velocity + accel * dt;
  if (cfg.limit_motion) out.velocity = clamp_norm(out.velocity, cfg.v_max);
  if (cfg.reflect_at_bounds) {
    detail::reflect_axis(out.position.x, out.velocity.x, cfg.area.lo.x, cfg.area.hi.x);
    detail::reflect_axis(out.position.y, out.velocity.y, cfg.area.lo.y, cfg.area.hi.y);
    detail::reflect_axis(out.position.z, out.velocity.z, cfg.area.lo.z, cfg.area.hi.z);
  }
  out.reported_position = out.position + s.spoof_offset();
  return out;
}

inline Vec3 sample_waypoint(RngStream& rng, const Box& area) {
  Vec3 w;
  w.x = rng.uniform(area.lo.x, area.hi.x);
  w.y = rng.uniform(area.lo.y, area.hi.y);
  w.z = area.hi.z > area.lo.z ? rng.uniform(area.lo.z, area.hi.z) : area.lo.z;
  return w;
}

/// Acceleration that tracks a braking profile toward `waypoint`: the desired
/// velocity points at the waypoint with the largest speed from which a_max can
/// still stop at the arrival radius. Zero once inside the arrival radius.
inline Vec3 steer_to_waypoint(const KinematicState& s, const Vec3& waypoint, const MobilityConfig& cfg) noexcept {
  const Vec3 to_target = waypoint - s.position;
  const double dist = to_target.norm();
  if (dist <= cfg.waypoint_arrival_radius) return {};
  const Vec3 dir = to_target * (1.0 / dist);
  const double stopping = std::sqrt(2.0 * cfg.a_max * (dist - cfg.waypoint_arrival_radius));
  const double desired_speed = std::min(cfg.v_max, stopping);
  const Vec3 correction = (dir * desired_speed - s.velocity) * (1.0 / cfg.dt);
  return clamp_norm(correction, cfg.a_max);
}

inline KinematicState apply_spoofing(const KinematicState& s, const Vec3& offset) noexcept {
  KinematicState out = s;
  out.reported_position = s.position + offset;
  return out;
}

}  // namespace uavchain::mobility
