#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "vqmpt/env2d.hpp"
#include "vqmpt/rng.hpp"

namespace vqmpt {

struct Trajectory {
    std::vector<Config2D> waypoints;  // length >= 2 when produced by a planner
};

double path_length(const Trajectory& path);

// True iff candidate is no longer than (1+epsilon) times the reference.
bool termination_met(const Trajectory& candidate, const Trajectory& reference, double epsilon);

struct Tree {
    std::vector<Config2D> nodes;
    std::vector<int> parent;  // -1 for the root

    int add(const Config2D& q, int parent_index) {
        nodes.push_back(q);
        parent.push_back(parent_index);
        return static_cast<int>(nodes.size()) - 1;
    }
    std::size_t size() const { return nodes.size(); }
};

// Exact Euclidean nearest node by linear scan; ties break to the lowest
// index. Throws on an empty tree.
int nearest(const Tree& tree, const Config2D& q);

// Full-segment feasibility between two states (not a bounded extension):
// exactly is_edge_valid at resolution delta.
bool connect(const World& world, const Config2D& a, const Config2D& b, double delta);

struct PlannerResult {
    bool success = false;
    std::optional<Trajectory> path;
    std::int64_t vertices = 0;       // collision-checked tree insertions
    std::int64_t samples_drawn = 0;
    double wall_time = 0.0;          // seconds, planning call only
};

// Sampling source injected into the guided planner. `draw` may propose
// states outside the workspace (Gaussian tails); the planner discards those
// draws while still counting them.
struct SamplerHandle {
    enum class Kind { kUniform, kGmm };
    Kind kind = Kind::kUniform;
    std::function<Config2D(Pcg32&)> draw;
};

SamplerHandle uniform_sampler(const World& world);

struct VqmptPlanOptions {
    int max_iterations = 500;   // K
    double goal_bias_gate = 0.9;  // b: goal connection attempted when rand() > b
    double edge_delta = 0.01;
    double goal_radius = 0.02;
};

// Modified RRT over an injected sampler: each iteration draws one sample and
// tries to connect it to its nearest tree node; with probability (1-b) it
// then tries to connect the node nearest to the goal directly to the goal.
// Success paths are shortcut-simplified and re-verified against the exact
// segment geometry before being returned.
PlannerResult vqmpt_plan(const ProblemInstance& problem, const SamplerHandle& sampler,
                         const VqmptPlanOptions& options, Pcg32& rng);

struct RrtStarOptions {
    double range = 0.1;              // max extension length
    double max_time = 5.0;           // seconds; <= 0 fails immediately
    std::int64_t max_iterations = 20000;
    double edge_delta = 0.01;
    double goal_radius = 0.02;
    double goal_bias = 0.05;
    double gamma = 2.0;              // near radius = gamma * sqrt(log n / n)
    // Early stop once the best path is within (1+epsilon) of reference_length.
    std::optional<double> reference_length;
    double epsilon = 0.1;
    // Deterministic convergence stop: halt when the best cost improved by
    // less than convergence_rtol over the trailing convergence_window
    // iterations. Disabled when window == 0.
    std::int64_t convergence_window = 0;
    double convergence_rtol = 0.005;
    bool use_wall_clock = true;      // off for reproducible dataset generation
};

// Anytime RRT* with bounded extensions, near-neighbour rewiring, and goal
// bias. Returns the best path found within the budget.
PlannerResult rrt_star_plan(const ProblemInstance& problem, const RrtStarOptions& options,
                            Pcg32& rng);

// Shortcutting: a deterministic greedy sweep removes redundant waypoints,
// then `random_passes` random pair attempts replace subchains with single
// valid edges. Output length and path length never increase.
Trajectory simplify(const World& world, const Trajectory& path, double delta, Pcg32& rng,
                    int random_passes);

// Writes `x,y` CSV with 9 significant digits per coordinate.
void write_path_csv(const Trajectory& path, const std::string& out_path);

}  // namespace vqmpt
