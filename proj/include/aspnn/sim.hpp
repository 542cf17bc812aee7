#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "aspnn/common.hpp"
#include "aspnn/data.hpp"

namespace aspnn {

// Rigid circular bodies in a 2-D channel, driven by a per-frame velocity
// increment, with elastic cell-cell collisions and reflecting walls.
struct SimConfig {
  double channel_width = 300.0;   // px
  double channel_height = 100.0;  // px
  int n_cells = 20;
  double radius = 5.0;  // px
  int frames = 100;
  double dvx = 0.05;   // px/frame^2
  double dvy = 0.005;  // px/frame^2
  double noise_fraction = 0.0;  // 0 deterministic, 0.10 noisy case
  std::uint64_t seed = 0;

  // Initial placement box. The defaults keep the default run free of wall
  // contact: from rest, 99 increments of 0.05 px/frame travel 247.5 px, so
  // cells seeded in x <= 45 stay inside the 300 px channel, and 24.75 px of
  // vertical drift keeps y <= 70 starts below the top wall.
  double init_x_max = 45.0;
  double init_y_max = 70.0;
  double init_speed = 0.0;  // random-direction initial speed, px/frame

  double brightness = 128.0;

  void validate() const {
    if (channel_width <= 0 || channel_height <= 0)
      fail_config("channel dimensions must be positive");
    if (n_cells <= 0) fail_config("n_cells must be positive");
    if (radius <= 0) fail_config("radius must be positive");
    if (frames <= 0) fail_config("frames must be positive");
    if (noise_fraction < 0 || noise_fraction > 1)
      fail_config("noise_fraction must lie in [0,1]");
    if (init_speed < 0) fail_config("init_speed must be non-negative");
    if (2 * radius > channel_width || 2 * radius > channel_height)
      fail_config("cell does not fit in the channel");
    if (init_x_max < radius || init_x_max > channel_width - radius ||
        init_y_max < radius || init_y_max > channel_height - radius)
      fail_config("initial placement box outside the channel");
  }
};

struct SimCell {
  int id = 0;
  Vec2 pos = Vec2::Zero();
  Vec2 vel = Vec2::Zero();
  double radius = 0;
  double area = 0;          // pi r^2
  double eccentricity = 0;  // discs
  double brightness = 0;
};

struct CollisionEvent {
  int frame = 0;
  int a = 0, b = 0;
  Vec2 va_pre, vb_pre, va_post, vb_post;
};

struct SimResult {
  SimConfig config;
  std::vector<TrajectoryRecord> records;  // frame-major, cell ascending
  std::vector<CollisionEvent> collisions;
};

// Equal-mass elastic exchange of the normal velocity components along the
// center line; tangential components untouched.
inline std::pair<SimCell, SimCell> resolve_elastic_collision(SimCell a,
                                                             SimCell b) {
  Vec2 d = b.pos - a.pos;
  const double dist = d.norm();
  if (dist == 0.0)
    fail_numeric("coincident centers for cells " + std::to_string(a.id) +
                 " and " + std::to_string(b.id));
  const Vec2 n = d / dist;
  const double pa = a.vel.dot(n);
  const double pb = b.vel.dot(n);
  a.vel += (pb - pa) * n;
  b.vel += (pa - pb) * n;
  return {a, b};
}

namespace detail {

inline void reflect_walls(SimCell& c, const SimConfig& cfg) {
  const double r = c.radius;
  if (c.pos[0] < r) {
    c.pos[0] = 2 * r - c.pos[0];
    if (c.vel[0] < 0) c.vel[0] = -c.vel[0];
    if (c.pos[0] > cfg.channel_width - r) c.pos[0] = r;  // degenerate overshoot
  } else if (c.pos[0] > cfg.channel_width - r) {
    c.pos[0] = 2 * (cfg.channel_width - r) - c.pos[0];
    if (c.vel[0] > 0) c.vel[0] = -c.vel[0];
    if (c.pos[0] < r) c.pos[0] = cfg.channel_width - r;
  }
  if (c.pos[1] < r) {
    c.pos[1] = 2 * r - c.pos[1];
    if (c.vel[1] < 0) c.vel[1] = -c.vel[1];
    if (c.pos[1] > cfg.channel_height - r) c.pos[1] = r;
  } else if (c.pos[1] > cfg.channel_height - r) {
    c.pos[1] = 2 * (cfg.channel_height - r) - c.pos[1];
    if (c.vel[1] > 0) c.vel[1] = -c.vel[1];
    if (c.pos[1] < r) c.pos[1] = cfg.channel_height - r;
  }
}

// Push an overlapping pair apart along the contact normal, split equally.
inline bool separate_pair(SimCell& a, SimCell& b) {
  Vec2 d = b.pos - a.pos;
  double dist = d.norm();
  const double min_dist = a.radius + b.radius;
  if (dist >= min_dist) return false;
  if (dist == 0.0)
    fail_numeric("coincident centers for cells " + std::to_string(a.id) +
                 " and " + std::to_string(b.id));
  const Vec2 n = d / dist;
  const double push = 0.5 * (min_dist - dist) + 1e-12;
  a.pos -= push * n;
  b.pos += push * n;
  return true;
}

}  // namespace detail

// Seeded jittered-grid placement inside the initial box. Grid slots keep a
// guaranteed >= 2.02 r center spacing, so any box that can host the grid is
// feasible by construction.
inline std::vector<SimCell> place_cells(const SimConfig& cfg, Rng& rng) {
  const double span_x = cfg.init_x_max - cfg.radius;
  const double span_y = cfg.init_y_max - cfg.radius;
  const double min_gap = 2.02 * cfg.radius;

  int best_nx = 0, best_ny = 0;
  double best_score = -1;
  for (int nx = 1; nx <= cfg.n_cells; ++nx) {
    const int ny = (cfg.n_cells + nx - 1) / nx;
    const double gx = nx == 1 ? span_x : span_x / (nx - 1);
    const double gy = ny == 1 ? span_y : span_y / (ny - 1);
    if ((nx > 1 && gx < min_gap) || (ny > 1 && gy < min_gap)) continue;
    const double score = std::min(nx == 1 ? 1e18 : gx, ny == 1 ? 1e18 : gy);
    if (score > best_score) {
      best_score = score;
      best_nx = nx;
      best_ny = ny;
    }
  }
  if (best_nx == 0)
    fail_config("infeasible packing: could not place " +
                std::to_string(cfg.n_cells) + " cells of radius " +
                fmt_double(cfg.radius) + " in the initial box");

  const double gx = best_nx == 1 ? 0 : span_x / (best_nx - 1);
  const double gy = best_ny == 1 ? 0 : span_y / (best_ny - 1);
  const double jx = best_nx == 1 ? span_x / 2 : (gx - min_gap) / 2;
  const double jy = best_ny == 1 ? span_y / 2 : (gy - min_gap) / 2;
  std::uniform_real_distribution<double> ujx(-jx, jx), ujy(-jy, jy);

  std::vector<SimCell> cells;
  for (int i = 0; i < cfg.n_cells; ++i) {
    const int col = i % best_nx;
    const int row = i / best_nx;
    SimCell c;
    c.id = i;
    const double cx = best_nx == 1 ? cfg.radius + span_x / 2 : cfg.radius + col * gx;
    const double cy = best_ny == 1 ? cfg.radius + span_y / 2 : cfg.radius + row * gy;
    c.pos = Vec2(std::clamp(cx + (jx > 0 ? ujx(rng) : 0.0), cfg.radius,
                            cfg.init_x_max),
                 std::clamp(cy + (jy > 0 ? ujy(rng) : 0.0), cfg.radius,
                            cfg.init_y_max));
    c.radius = cfg.radius;
    c.area = std::numbers::pi * cfg.radius * cfg.radius;
    c.eccentricity = 0.0;
    c.brightness = cfg.brightness;
    cells.push_back(c);
  }
  if (cfg.init_speed > 0) {
    std::uniform_real_distribution<double> uang(0.0, 2.0 * std::numbers::pi);
    for (auto& c : cells) {
      const double ang = uang(rng);
      c.vel = cfg.init_speed * Vec2(std::cos(ang), std::sin(ang));
    }
  }
  return cells;
}

// Gaussian position perturbation bounded by noise_fraction * |v|, with
// sigma = bound / 3; velocities downstream are re-derived from the perturbed
// positions. Frame-0 records keep |v| = 0 and stay exact.
inline void add_noise(std::vector<TrajectoryRecord>& recs,
                      double noise_fraction, std::uint64_t seed) {
  if (noise_fraction <= 0) return;
  std::vector<TrajectoryRecord> sorted = recs;
  Dataset clean = Dataset::from_records(sorted, 0, 0);
  Rng rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (auto& r : recs) {
    auto row = clean.find(r.frame, r.cell_id);
    if (!row) continue;
    const Vec2 v = clean.velocity_at(*row);
    const double bound = noise_fraction * v.norm();
    if (bound <= 0) continue;
    const double sigma = bound / 3.0;
    for (int axis = 0; axis < 2; ++axis) {
      double delta = sigma * gauss(rng);
      delta = std::clamp(delta, -bound, bound);
      (axis == 0 ? r.x : r.y) += delta;
    }
  }
}

inline SimResult simulate(const SimConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  std::vector<SimCell> cells = place_cells(cfg, rng);

  SimResult res;
  res.config = cfg;
  res.records.reserve(static_cast<std::size_t>(cfg.n_cells) * cfg.frames);

  auto emit_frame = [&](int frame) {
    for (const auto& c : cells) {
      TrajectoryRecord r;
      r.frame = frame;
      r.cell_id = c.id;
      r.x = c.pos[0];
      r.y = c.pos[1];
      r.area = c.area;
      r.eccentricity = c.eccentricity;
      r.brightness = c.brightness;
      res.records.push_back(r);
    }
  };

  emit_frame(0);
  for (int frame = 1; frame < cfg.frames; ++frame) {
    for (auto& c : cells) {
      c.vel += Vec2(cfg.dvx, cfg.dvy);
      c.pos += c.vel;  // dt = 1 frame
    }
    // Single elastic pass in ascending id order, then walls, then a positional
    // cleanup loop until the frame is overlap-free.
    for (std::size_t i = 0; i < cells.size(); ++i)
      for (std::size_t j = i + 1; j < cells.size(); ++j) {
        Vec2 d = cells[j].pos - cells[i].pos;
        if (d.norm() >= cells[i].radius + cells[j].radius) continue;
        if ((cells[j].vel - cells[i].vel).dot(d) < 0) {
          CollisionEvent ev;
          ev.frame = frame;
          ev.a = cells[i].id;
          ev.b = cells[j].id;
          ev.va_pre = cells[i].vel;
          ev.vb_pre = cells[j].vel;
          auto [na, nb] = resolve_elastic_collision(cells[i], cells[j]);
          cells[i] = na;
          cells[j] = nb;
          ev.va_post = cells[i].vel;
          ev.vb_post = cells[j].vel;
          res.collisions.push_back(ev);
        }
        detail::separate_pair(cells[i], cells[j]);
      }
    for (auto& c : cells) detail::reflect_walls(c, cfg);
    for (int pass = 0; pass < 64; ++pass) {
      bool dirty = false;
      for (std::size_t i = 0; i < cells.size(); ++i)
        for (std::size_t j = i + 1; j < cells.size(); ++j)
          dirty |= detail::separate_pair(cells[i], cells[j]);
      for (auto& c : cells) {
        const double r = c.radius;
        const double nx = std::clamp(c.pos[0], r, cfg.channel_width - r);
        const double ny = std::clamp(c.pos[1], r, cfg.channel_height - r);
        if (nx != c.pos[0] || ny != c.pos[1]) {
          c.pos = Vec2(nx, ny);
          dirty = true;
        }
      }
      if (!dirty) break;
    }
    emit_frame(frame);
  }

  if (cfg.noise_fraction > 0)
    add_noise(res.records, cfg.noise_fraction, cfg.seed ^ 0x6e6f697365ULL);
  return res;
}

}  // namespace aspnn
