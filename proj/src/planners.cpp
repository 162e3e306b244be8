#include "vqmpt/planners.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>

namespace vqmpt {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::vector<Config2D> chain_to_root(const Tree& tree, int leaf) {
    std::vector<Config2D> rev;
    for (int i = leaf; i >= 0; i = tree.parent[i]) rev.push_back(tree.nodes[i]);
    std::reverse(rev.begin(), rev.end());
    return rev;
}

bool in_workspace(const World& world, const Config2D& q) {
    return std::isfinite(q.x) && std::isfinite(q.y) && q.x >= 0.0 && q.x <= world.side &&
           q.y >= 0.0 && q.y <= world.side;
}

// Edge acceptance for tree insertions: the sampled check plus the closed-form
// segment test, so returned paths are sound under exact geometry, not only
// at resolution delta.
bool edge_clear(const World& world, const Config2D& a, const Config2D& b, double delta) {
    return is_edge_valid(world, a, b, delta) && !segment_hits_obstacle(world, a, b);
}

}  // namespace

double path_length(const Trajectory& path) {
    if (path.waypoints.size() < 2)
        throw NumericDomainError("path_length: need at least 2 waypoints");
    double acc = 0.0;
    for (std::size_t i = 1; i < path.waypoints.size(); ++i)
        acc += distance(path.waypoints[i - 1], path.waypoints[i]);
    return acc;
}

bool termination_met(const Trajectory& candidate, const Trajectory& reference, double epsilon) {
    if (epsilon < 0.0) throw NumericDomainError("termination_met: epsilon must be >= 0");
    return path_length(candidate) <= (1.0 + epsilon) * path_length(reference);
}

int nearest(const Tree& tree, const Config2D& q) {
    if (tree.nodes.empty()) throw std::logic_error("nearest: empty tree");
    int best = 0;
    double best_sq = HUGE_VAL;
    for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
        double dx = tree.nodes[i].x - q.x, dy = tree.nodes[i].y - q.y;
        double d = dx * dx + dy * dy;
        if (d < best_sq) {
            best_sq = d;
            best = static_cast<int>(i);
        }
    }
    return best;
}

bool connect(const World& world, const Config2D& a, const Config2D& b, double delta) {
    return is_edge_valid(world, a, b, delta);
}

SamplerHandle uniform_sampler(const World& world) {
    SamplerHandle h;
    h.kind = SamplerHandle::Kind::kUniform;
    double side = world.side;
    h.draw = [side](Pcg32& rng) { return Config2D{rng.uniform(0.0, side), rng.uniform(0.0, side)}; };
    return h;
}

Trajectory simplify(const World& world, const Trajectory& path, double delta, Pcg32& rng,
                    int random_passes) {
    std::vector<Config2D> wp = path.waypoints;
    if (wp.size() < 3) return Trajectory{wp};

    // Greedy sweep to a fixpoint: from each kept waypoint, jump to the
    // farthest waypoint reachable by a single clear edge.
    bool changed = true;
    while (changed && wp.size() > 2) {
        changed = false;
        std::vector<Config2D> kept;
        kept.push_back(wp.front());
        std::size_t i = 0;
        while (i + 1 < wp.size()) {
            std::size_t jump = i + 1;
            for (std::size_t j = wp.size() - 1; j > i + 1; --j) {
                if (edge_clear(world, wp[i], wp[j], delta)) {
                    jump = j;
                    break;
                }
            }
            kept.push_back(wp[jump]);
            if (jump > i + 1) changed = true;
            i = jump;
        }
        wp = std::move(kept);
    }

    for (int pass = 0; pass < random_passes && wp.size() > 2; ++pass) {
        std::size_t i = static_cast<std::size_t>(rng.uniform_int(0, wp.size() - 3));
        std::size_t j = static_cast<std::size_t>(rng.uniform_int(i + 2, wp.size() - 1));
        if (edge_clear(world, wp[i], wp[j], delta))
            wp.erase(wp.begin() + static_cast<std::ptrdiff_t>(i) + 1,
                     wp.begin() + static_cast<std::ptrdiff_t>(j));
    }
    return Trajectory{wp};
}

PlannerResult vqmpt_plan(const ProblemInstance& problem, const SamplerHandle& sampler,
                         const VqmptPlanOptions& options, Pcg32& rng) {
    auto t0 = Clock::now();
    const World& world = problem.world;
    const double delta = options.edge_delta;
    if (!is_state_valid(world, problem.start))
        throw NumericDomainError("vqmpt_plan: invalid start state");

    PlannerResult result;
    Tree tree;
    tree.add(problem.start, -1);

    auto finish_success = [&](int goal_leaf) {
        Trajectory raw{chain_to_root(tree, goal_leaf)};
        Trajectory simple =
            raw.waypoints.size() >= 2
                ? simplify(world, raw, delta, rng, 2 * static_cast<int>(raw.waypoints.size()))
                : raw;
        for (std::size_t i = 1; i < simple.waypoints.size(); ++i)
            if (segment_hits_obstacle(world, simple.waypoints[i - 1], simple.waypoints[i]))
                return false;
        result.success = true;
        result.path = std::move(simple);
        return true;
    };

    for (int k = 0; k < options.max_iterations; ++k) {
        Config2D q_rand = sampler.draw(rng);
        result.samples_drawn += 1;
        if (in_workspace(world, q_rand)) {
            int near = nearest(tree, q_rand);
            if (edge_clear(world, tree.nodes[near], q_rand, delta)) tree.add(q_rand, near);
        }
        if (rng.uniform() > options.goal_bias_gate) {
            int gn = nearest(tree, problem.goal);
            if (gn != 0 && distance(tree.nodes[gn], problem.goal) <= options.goal_radius) {
                if (finish_success(gn)) break;
            } else if (edge_clear(world, tree.nodes[gn], problem.goal, delta)) {
                int leaf = tree.add(problem.goal, gn);
                if (finish_success(leaf)) break;
            }
        }
    }
    result.vertices = static_cast<std::int64_t>(tree.size());
    result.wall_time = seconds_since(t0);
    return result;
}

PlannerResult rrt_star_plan(const ProblemInstance& problem, const RrtStarOptions& options,
                            Pcg32& rng) {
    auto t0 = Clock::now();
    const World& world = problem.world;
    const double delta = options.edge_delta;
    if (!is_state_valid(world, problem.start))
        throw NumericDomainError("rrt_star_plan: invalid start state");

    PlannerResult result;
    Tree tree;
    tree.add(problem.start, -1);
    std::vector<double> cost{0.0};
    std::vector<int> goal_nodes;

    int best_goal = -1;
    double best_cost = HUGE_VAL;
    double window_best = HUGE_VAL;
    std::int64_t window_start = 0;

    auto refresh_best = [&] {
        for (int g : goal_nodes)
            if (cost[g] < best_cost) {
                best_cost = cost[g];
                best_goal = g;
            }
    };

    for (std::int64_t iter = 0; iter < options.max_iterations; ++iter) {
        if (options.use_wall_clock && seconds_since(t0) >= options.max_time) break;
        if (best_goal >= 0 && options.reference_length &&
            best_cost <= (1.0 + options.epsilon) * *options.reference_length)
            break;
        if (options.convergence_window > 0 && best_goal >= 0) {
            if (iter - window_start >= options.convergence_window) {
                if (best_cost > (1.0 - options.convergence_rtol) * window_best) break;
                window_best = best_cost;
                window_start = iter;
            }
        }

        Config2D target = rng.uniform() < options.goal_bias ? problem.goal
                                                            : sample_uniform(world, rng);
        result.samples_drawn += 1;
        int near = nearest(tree, target);
        double d = distance(tree.nodes[near], target);
        Config2D q_new = target;
        if (d > options.range) {
            double t = options.range / d;
            q_new = {tree.nodes[near].x + (target.x - tree.nodes[near].x) * t,
                     tree.nodes[near].y + (target.y - tree.nodes[near].y) * t};
        }
        if (!is_state_valid(world, q_new)) continue;

        // Near set within the shrinking RRT* radius.
        std::size_t n = tree.size();
        double radius = options.gamma * std::sqrt(std::log(static_cast<double>(n) + 1.0) /
                                                  static_cast<double>(n));
        std::vector<int> near_set;
        for (std::size_t i = 0; i < n; ++i)
            if (distance(tree.nodes[i], q_new) <= radius) near_set.push_back(static_cast<int>(i));
        if (near_set.empty()) near_set.push_back(near);

        // Choose the parent minimizing cost-to-come over feasible near edges.
        int parent = -1;
        double parent_cost = HUGE_VAL;
        for (int i : near_set) {
            double c = cost[i] + distance(tree.nodes[i], q_new);
            if (c < parent_cost && edge_clear(world, tree.nodes[i], q_new, delta)) {
                parent = i;
                parent_cost = c;
            }
        }
        if (parent < 0) continue;
        int idx = tree.add(q_new, parent);
        cost.push_back(parent_cost);

        // Rewire near nodes through the new one when that is cheaper.
        bool rewired = false;
        for (int i : near_set) {
            double through = parent_cost + distance(q_new, tree.nodes[i]);
            if (through + 1e-12 < cost[i] && edge_clear(world, q_new, tree.nodes[i], delta)) {
                tree.parent[i] = idx;
                cost[i] = through;
                rewired = true;
            }
        }
        if (rewired) {
            // Propagate cost drops to descendants. Children can precede their
            // (rewired) parent in index order, so sweep until stable.
            bool dirty = true;
            while (dirty) {
                dirty = false;
                for (std::size_t i = 1; i < tree.size(); ++i) {
                    double c = cost[tree.parent[i]] +
                               distance(tree.nodes[tree.parent[i]], tree.nodes[i]);
                    if (c + 1e-12 < cost[i]) {
                        cost[i] = c;
                        dirty = true;
                    }
                }
            }
        }

        if (distance(q_new, problem.goal) <= options.goal_radius) goal_nodes.push_back(idx);
        refresh_best();
        if (best_goal >= 0 && window_best == HUGE_VAL) {
            window_best = best_cost;
            window_start = iter;
        }
    }

    result.vertices = static_cast<std::int64_t>(tree.size());
    if (best_goal >= 0) {
        Trajectory raw{chain_to_root(tree, best_goal)};
        bool sound = true;
        for (std::size_t i = 1; i < raw.waypoints.size(); ++i)
            if (segment_hits_obstacle(world, raw.waypoints[i - 1], raw.waypoints[i])) {
                sound = false;
                break;
            }
        if (sound && raw.waypoints.size() >= 2) {
            result.success = true;
            result.path = std::move(raw);
        }
    }
    result.wall_time = seconds_since(t0);
    return result;
}

void write_path_csv(const Trajectory& path, const std::string& out_path) {
    std::ofstream out(out_path);
    if (!out) throw std::runtime_error("write_path_csv: cannot open " + out_path);
    out << "x,y\n" << std::setprecision(9);
    for (const auto& q : path.waypoints) out << q.x << "," << q.y << "\n";
    if (!out) throw std::runtime_error("write_path_csv: write failed for " + out_path);
}

}  // namespace vqmpt
