#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vqmpt/checkpoint.hpp"
#include "vqmpt/env2d.hpp"
#include "vqmpt/stage1.hpp"
#include "vqmpt/stage2.hpp"

namespace vqmpt {

struct Stage1Record {
    std::vector<Config2D> waypoints;
};

struct Stage2Record {
    std::uint64_t world_seed = 0;
    World world;
    Costmap costmap;
    Config2D start, goal;
    std::vector<Config2D> demo;
    std::vector<int> gt;  // stage-1 index sequence, goal class last
};

struct Stage1DataParams {
    double side = 1.0;
    double spacing = 0.05;      // waypoint gap as a fraction of side
    double jitter_sigma = 0.02; // per-waypoint Gaussian jitter, fraction of side
    double min_separation = 0.4;
};

// Obstacle-free straight-line trajectories with per-waypoint jitter, clamped
// to the workspace. Deterministic in the seed.
std::vector<Stage1Record> gen_stage1_dataset(int count, std::uint64_t seed,
                                             const Stage1DataParams& params = {});

struct Stage2DataParams {
    WorldGenParams world;
    int resolution = 64;
    double goal_radius = 0.02;
    double edge_delta = 0.01;
    std::int64_t demo_budget_iterations = 20000;
    std::int64_t convergence_window = 2500;
    double rrt_range = 0.1;
};

struct Stage2DatasetResult {
    std::vector<Stage2Record> records;
    int skipped_envs = 0;
    int failed_plans = 0;
};

// Randomized worlds with demonstration plans: generate_world, render the
// costmap, then plan/simplify/transduce per demonstration. Failed plans are
// skipped and counted; an environment with no successes after 5x the target
// attempts is skipped entirely. Deterministic in the seed (planning runs on
// iteration budgets, not wall clock).
Stage2DatasetResult gen_stage2_dataset(const Stage1Model& stage1, int env_count,
                                       int trajs_per_env, std::uint64_t seed,
                                       const Stage2DataParams& params = {});

// ---- container I/O ----

void save_stage1_dataset(const std::string& path, const std::vector<Stage1Record>& records,
                         std::uint64_t seed, const Stage1DataParams& params);
std::vector<Stage1Record> load_stage1_dataset(const std::string& path);

void save_stage2_dataset(const std::string& path, const Stage2DatasetResult& data,
                         std::uint64_t seed, const Stage2DataParams& params);
Stage2DatasetResult load_stage2_dataset(const std::string& path);

// ---- model checkpoints ----

Checkpoint stage1_to_checkpoint(const Stage1Model& model);
Stage1Model stage1_from_checkpoint(const Checkpoint& ckpt);

// Combined bundle: frozen stage-1 arrays under "s1.", stage-2 under "s2.".
Checkpoint bundle_to_checkpoint(const Stage1Model& stage1, const Stage2Model& stage2);

struct ModelBundle {
    Stage1Model stage1;
    Stage2Model stage2;
};
ModelBundle bundle_from_checkpoint(const Checkpoint& ckpt);

// Converts stage-2 records into training examples.
std::vector<Stage2Example> to_examples(const std::vector<Stage2Record>& records);

}  // namespace vqmpt
