#include "vqmpt/env2d.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace vqmpt {

namespace {

bool point_in_rect(const RectObstacle& r, double x, double y) {
    return x >= r.x && x <= r.x + r.w && y >= r.y && y <= r.y + r.h;
}

bool point_in_circle(const CircleObstacle& c, double x, double y) {
    double dx = x - c.cx, dy = y - c.cy;
    return dx * dx + dy * dy <= c.r * c.r;
}

// Squared distance from segment ab to point p.
double segment_point_dist_sq(const Config2D& a, const Config2D& b, double px, double py) {
    double vx = b.x - a.x, vy = b.y - a.y;
    double wx = px - a.x, wy = py - a.y;
    double vv = vx * vx + vy * vy;
    double t = vv > 0.0 ? std::clamp((wx * vx + wy * vy) / vv, 0.0, 1.0) : 0.0;
    double dx = wx - t * vx, dy = wy - t * vy;
    return dx * dx + dy * dy;
}

// Slab clip of segment ab against the closed box; true iff they intersect.
bool segment_hits_rect(const Config2D& a, const Config2D& b, const RectObstacle& r) {
    double t0 = 0.0, t1 = 1.0;
    double d[2] = {b.x - a.x, b.y - a.y};
    double p0[2] = {a.x, a.y};
    double lo[2] = {r.x, r.y};
    double hi[2] = {r.x + r.w, r.y + r.h};
    for (int i = 0; i < 2; ++i) {
        if (d[i] == 0.0) {
            if (p0[i] < lo[i] || p0[i] > hi[i]) return false;
        } else {
            double ta = (lo[i] - p0[i]) / d[i];
            double tb = (hi[i] - p0[i]) / d[i];
            if (ta > tb) std::swap(ta, tb);
            t0 = std::max(t0, ta);
            t1 = std::min(t1, tb);
            if (t0 > t1) return false;
        }
    }
    return true;
}

bool segment_hits_circle(const Config2D& a, const Config2D& b, const CircleObstacle& c) {
    return segment_point_dist_sq(a, b, c.cx, c.cy) <= c.r * c.r;
}

}  // namespace

bool point_in_obstacle(const World& world, const Config2D& q) {
    for (const auto& obs : world.obstacles) {
        bool hit = std::visit(
            [&](const auto& o) {
                using T = std::decay_t<decltype(o)>;
                if constexpr (std::is_same_v<T, RectObstacle>)
                    return point_in_rect(o, q.x, q.y);
                else
                    return point_in_circle(o, q.x, q.y);
            },
            obs);
        if (hit) return true;
    }
    return false;
}

bool is_state_valid(const World& world, const Config2D& q) {
    if (!std::isfinite(q.x) || !std::isfinite(q.y)) return false;
    if (q.x < 0.0 || q.x > world.side || q.y < 0.0 || q.y > world.side) return false;
    return !point_in_obstacle(world, q);
}

bool is_edge_valid(const World& world, const Config2D& a, const Config2D& b, double delta) {
    if (!(delta > 0.0)) throw NumericDomainError("is_edge_valid: delta must be positive");
    double dist = distance(a, b);
    int n = std::max(1, static_cast<int>(std::ceil(dist / delta)));
    // Sample points as convex combinations ((n-i)a + ib)/n so traversing the
    // edge in either direction probes the identical point set.
    for (int i = 0; i <= n; ++i) {
        Config2D q{(a.x * (n - i) + b.x * i) / n, (a.y * (n - i) + b.y * i) / n};
        if (!is_state_valid(world, q)) return false;
    }
    return true;
}

bool segment_hits_obstacle(const World& world, const Config2D& a, const Config2D& b) {
    for (const auto& obs : world.obstacles) {
        bool hit = std::visit(
            [&](const auto& o) {
                using T = std::decay_t<decltype(o)>;
                if constexpr (std::is_same_v<T, RectObstacle>)
                    return segment_hits_rect(a, b, o);
                else
                    return segment_hits_circle(a, b, o);
            },
            obs);
        if (hit) return true;
    }
    return false;
}

double free_space_fraction(const World& world, int probe_resolution) {
    int r = probe_resolution;
    std::int64_t free_count = 0;
    double cs = world.side / r;
    for (int iy = 0; iy < r; ++iy)
        for (int ix = 0; ix < r; ++ix) {
            Config2D q{(ix + 0.5) * cs, (iy + 0.5) * cs};
            if (!point_in_obstacle(world, q)) ++free_count;
        }
    return static_cast<double>(free_count) / (static_cast<double>(r) * r);
}

World generate_world(std::uint64_t seed, const WorldGenParams& params) {
    const double s = params.side;
    for (int attempt = 0; attempt < params.max_attempts; ++attempt) {
        Pcg32 rng(derive_seed(seed, 1000 + attempt));
        World w;
        w.side = s;
        w.seed = seed;
        int count = static_cast<int>(
            rng.uniform_int(static_cast<std::uint64_t>(params.min_obstacles),
                            static_cast<std::uint64_t>(params.max_obstacles)));
        for (int i = 0; i < count; ++i) {
            bool circle = rng.uniform() < 0.5;
            double size = rng.uniform(params.min_size * s, params.max_size * s);
            if (circle) {
                CircleObstacle c{rng.uniform(0.0, s), rng.uniform(0.0, s), size * 0.5};
                w.obstacles.emplace_back(c);
            } else {
                double width = size;
                double height = rng.uniform(params.min_size * s, params.max_size * s);
                RectObstacle r{rng.uniform(0.0, s) - width * 0.5,
                               rng.uniform(0.0, s) - height * 0.5, width, height};
                // keep some overlap with the workspace
                r.x = std::clamp(r.x, -width * 0.5, s - width * 0.5);
                r.y = std::clamp(r.y, -height * 0.5, s - height * 0.5);
                w.obstacles.emplace_back(r);
            }
        }
        if (free_space_fraction(w) >= params.min_free_fraction) return w;
    }
    throw WorldGenError("generate_world: free-space fraction " +
                        std::to_string(params.min_free_fraction) + " unreachable after " +
                        std::to_string(params.max_attempts) + " attempts (seed " +
                        std::to_string(seed) + ")");
}

Costmap render_costmap(const World& world, int resolution) {
    if (resolution < 8) throw NumericDomainError("render_costmap: resolution must be >= 8");
    Costmap m;
    m.resolution = resolution;
    m.cell_size = world.side / resolution;
    m.cells.assign(static_cast<std::size_t>(resolution) * resolution, 0);
    for (int iy = 0; iy < resolution; ++iy)
        for (int ix = 0; ix < resolution; ++ix) {
            Config2D center{(ix + 0.5) * m.cell_size, (iy + 0.5) * m.cell_size};
            if (point_in_obstacle(world, center))
                m.cells[static_cast<std::size_t>(iy) * resolution + ix] = 1;
        }
    return m;
}

Config2D sample_uniform(const World& world, Pcg32& rng) {
    return {rng.uniform(0.0, world.side), rng.uniform(0.0, world.side)};
}

ProblemInstance random_problem(const World& world, Pcg32& rng, double goal_radius) {
    const double min_sep = 0.4 * world.side;
    for (int attempt = 0; attempt < 1000; ++attempt) {
        Config2D qs = sample_uniform(world, rng);
        Config2D qg = sample_uniform(world, rng);
        if (!is_state_valid(world, qs) || !is_state_valid(world, qg)) continue;
        if (distance(qs, qg) < min_sep) continue;
        return ProblemInstance{world, qs, qg, goal_radius};
    }
    throw InfeasibleProblemError("random_problem: no valid start/goal pair after 1000 attempts");
}

void write_costmap_pgm(const Costmap& map, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_costmap_pgm: cannot open " + path);
    int r = map.resolution;
    out << "P5\n" << r << " " << r << "\n255\n";
    for (int iy = r - 1; iy >= 0; --iy)
        for (int ix = 0; ix < r; ++ix)
            out.put(map.at(ix, iy) ? '\0' : static_cast<char>(255));
    if (!out) throw std::runtime_error("write_costmap_pgm: write failed for " + path);
}

}  // namespace vqmpt
