#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "vqmpt/errors.hpp"
#include "vqmpt/rng.hpp"

namespace vqmpt {

struct Config2D {
    double x = 0.0;
    double y = 0.0;
};

inline double distance(const Config2D& a, const Config2D& b) {
    return std::hypot(a.x - b.x, a.y - b.y);
}

struct RectObstacle {
    double x, y, w, h;  // lower-left corner + extents
};

struct CircleObstacle {
    double cx, cy, r;
};

using Obstacle = std::variant<RectObstacle, CircleObstacle>;

// Workspace [0, side]^2 with axis-aligned rectangle and circle obstacles.
// Obstacle boundaries count as colliding. Immutable after construction.
struct World {
    double side = 1.0;
    std::vector<Obstacle> obstacles;
    std::uint64_t seed = 0;
};

struct Costmap {
    int resolution = 0;                 // R x R grid
    double cell_size = 0.0;             // side / R
    std::vector<std::uint8_t> cells;    // row-major, cells[iy*R+ix]; 1 = occupied

    std::uint8_t at(int ix, int iy) const {
        return cells[static_cast<std::size_t>(iy) * resolution + ix];
    }
};

struct ProblemInstance {
    World world;
    Config2D start;
    Config2D goal;
    double goal_radius = 0.02;
};

struct WorldGenError : std::runtime_error {
    explicit WorldGenError(const std::string& m) : std::runtime_error(m) {}
};
struct InfeasibleProblemError : std::runtime_error {
    explicit InfeasibleProblemError(const std::string& m) : std::runtime_error(m) {}
};

struct WorldGenParams {
    int min_obstacles = 6;
    int max_obstacles = 12;
    double side = 1.0;
    double min_size = 0.05;   // of side
    double max_size = 0.25;   // of side
    double min_free_fraction = 0.3;
    int max_attempts = 100;
};

// Deterministic in seed. Redraws the obstacle set until the free-space
// fraction (fine-grid estimate) clears min_free_fraction; throws
// WorldGenError when max_attempts draws all fail.
World generate_world(std::uint64_t seed, const WorldGenParams& params = {});

// Estimated free-space fraction from an NxN grid of cell-center probes.
double free_space_fraction(const World& world, int probe_resolution = 256);

// True iff q lies inside or on the boundary of some obstacle.
bool point_in_obstacle(const World& world, const Config2D& q);

// True iff q is inside the workspace and strictly outside every obstacle.
bool is_state_valid(const World& world, const Config2D& q);

// Samples the segment a-b at spacing <= delta (endpoints included) and
// requires every sample to be valid.
bool is_edge_valid(const World& world, const Config2D& a, const Config2D& b, double delta);

// Closed-form segment-vs-obstacle test (boundary-inclusive): true iff the
// segment a-b touches any obstacle. Endpoint workspace containment makes the
// whole segment workspace-contained, so only obstacle overlap is tested.
bool segment_hits_obstacle(const World& world, const Config2D& a, const Config2D& b);

Costmap render_costmap(const World& world, int resolution);

// Uniform draw over the workspace; no validity filtering.
Config2D sample_uniform(const World& world, Pcg32& rng);

// Rejection-samples a valid, well-separated start/goal pair. Throws
// InfeasibleProblemError after 1000 rejected attempts.
ProblemInstance random_problem(const World& world, Pcg32& rng, double goal_radius);

// Binary PGM (P5, maxval 255): occupied cells are 0, free cells 255. The
// top image row is the highest-y costmap row.
void write_costmap_pgm(const Costmap& map, const std::string& path);

}  // namespace vqmpt
