#include "vqmpt/dataset.hpp"

#include <algorithm>
#include <cmath>

#include "vqmpt/planners.hpp"

namespace vqmpt {

namespace {

NamedArray points_array(const std::string& name, const std::vector<Config2D>& pts) {
    NamedArray a;
    a.name = name;
    a.shape = {static_cast<std::uint32_t>(pts.size()), 2};
    a.values.reserve(pts.size() * 2);
    for (const auto& q : pts) {
        a.values.push_back(static_cast<float>(q.x));
        a.values.push_back(static_cast<float>(q.y));
    }
    return a;
}

std::vector<Config2D> points_from_array(const NamedArray& a) {
    if (a.shape.size() != 2 || a.shape[1] != 2)
        throw CheckpointShapeError("array '" + a.name + "' is not an (n,2) point list");
    std::vector<Config2D> out(a.shape[0]);
    for (std::uint32_t i = 0; i < a.shape[0]; ++i)
        out[i] = {static_cast<double>(a.values[2 * i]), static_cast<double>(a.values[2 * i + 1])};
    return out;
}

std::string record_name(const char* prefix, int i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s_%05d", prefix, i);
    return buf;
}

NamedArray obstacles_array(const std::string& name, const World& w) {
    NamedArray a;
    a.name = name;
    a.shape = {static_cast<std::uint32_t>(w.obstacles.size()), 5};
    for (const auto& obs : w.obstacles) {
        if (const auto* r = std::get_if<RectObstacle>(&obs)) {
            a.values.insert(a.values.end(),
                            {0.0f, static_cast<float>(r->x), static_cast<float>(r->y),
                             static_cast<float>(r->w), static_cast<float>(r->h)});
        } else {
            const auto& c = std::get<CircleObstacle>(obs);
            a.values.insert(a.values.end(), {1.0f, static_cast<float>(c.cx),
                                             static_cast<float>(c.cy), static_cast<float>(c.r),
                                             0.0f});
        }
    }
    return a;
}

nlohmann::json worldgen_to_json(const WorldGenParams& p) {
    return {{"min_obstacles", p.min_obstacles}, {"max_obstacles", p.max_obstacles},
            {"side", p.side},                   {"min_size", p.min_size},
            {"max_size", p.max_size},           {"min_free_fraction", p.min_free_fraction}};
}

WorldGenParams worldgen_from_json(const nlohmann::json& j) {
    WorldGenParams p;
    p.min_obstacles = j.at("min_obstacles");
    p.max_obstacles = j.at("max_obstacles");
    p.side = j.at("side");
    p.min_size = j.at("min_size");
    p.max_size = j.at("max_size");
    p.min_free_fraction = j.at("min_free_fraction");
    return p;
}

nlohmann::json stage1_config_to_json(const Stage1Config& c) {
    return {{"point_dim", c.point_dim},   {"model_dim", c.model_dim},
            {"code_dim", c.code_dim},     {"num_codes", c.num_codes},
            {"layers", c.layers},         {"heads", c.heads},
            {"mlp_dim", c.mlp_dim},       {"decoder_dim", c.decoder_dim},
            {"beta", c.beta},             {"lambda", c.lambda},
            {"entropy_samples", c.entropy_samples}, {"diag_floor", c.diag_floor},
            {"max_len", c.max_len},       {"side", c.side}};
}

Stage1Config stage1_config_from_json(const nlohmann::json& j) {
    Stage1Config c;
    c.point_dim = j.at("point_dim");
    c.model_dim = j.at("model_dim");
    c.code_dim = j.at("code_dim");
    c.num_codes = j.at("num_codes");
    c.layers = j.at("layers");
    c.heads = j.at("heads");
    c.mlp_dim = j.at("mlp_dim");
    c.decoder_dim = j.at("decoder_dim");
    c.beta = j.at("beta");
    c.lambda = j.at("lambda");
    c.entropy_samples = j.at("entropy_samples");
    c.diag_floor = j.at("diag_floor");
    c.max_len = j.at("max_len");
    c.side = j.at("side");
    return c;
}

nlohmann::json stage2_config_to_json(const Stage2Config& c) {
    return {{"model_dim", c.model_dim}, {"heads", c.heads},
            {"layers", c.layers},       {"mlp_dim", c.mlp_dim},
            {"patch", c.patch},         {"resolution", c.resolution},
            {"n_h_max", c.n_h_max},     {"beam_width", c.beam_width}};
}

Stage2Config stage2_config_from_json(const nlohmann::json& j) {
    Stage2Config c;
    c.model_dim = j.at("model_dim");
    c.heads = j.at("heads");
    c.layers = j.at("layers");
    c.mlp_dim = j.at("mlp_dim");
    c.patch = j.at("patch");
    c.resolution = j.at("resolution");
    c.n_h_max = j.at("n_h_max");
    c.beam_width = j.at("beam_width");
    return c;
}

void params_to_arrays(const ParamSet& params, const std::string& prefix, Checkpoint& ckpt) {
    for (std::size_t i = 0; i < params.size(); ++i) {
        NamedArray a;
        a.name = prefix + params.names()[i];
        const Tensor& t = params.tensors()[i];
        for (int e : t.shape()) a.shape.push_back(static_cast<std::uint32_t>(e));
        a.values.reserve(t.size());
        for (double v : t.data()) a.values.push_back(static_cast<float>(v));
        ckpt.arrays.push_back(std::move(a));
    }
}

void arrays_to_params(const Checkpoint& ckpt, const std::string& prefix, ParamSet& params) {
    for (std::size_t i = 0; i < params.size(); ++i) {
        const NamedArray& a = ckpt.require(prefix + params.names()[i]);
        Tensor t = params.tensors()[i];
        if (static_cast<std::uint64_t>(t.size()) != a.count())
            throw CheckpointShapeError("array '" + a.name + "' holds " +
                                       std::to_string(a.count()) + " values, expected " +
                                       std::to_string(t.size()));
        for (std::size_t r = 0; r < a.shape.size(); ++r)
            if (r >= t.shape().size() ||
                static_cast<std::uint32_t>(t.shape()[r]) != a.shape[r])
                throw CheckpointShapeError("array '" + a.name + "' shape mismatch");
        auto& d = t.data();
        for (std::size_t k = 0; k < d.size(); ++k) d[k] = static_cast<double>(a.values[k]);
    }
}

}  // namespace

std::vector<Stage1Record> gen_stage1_dataset(int count, std::uint64_t seed,
                                             const Stage1DataParams& params) {
    if (count < 1) throw NumericDomainError("gen_stage1_dataset: count must be >= 1");
    std::vector<Stage1Record> out;
    out.reserve(count);
    const double side = params.side;
    const double spacing = params.spacing * side;
    for (int i = 0; i < count; ++i) {
        Pcg32 rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
        Config2D a, b;
        do {
            a = {rng.uniform(0.0, side), rng.uniform(0.0, side)};
            b = {rng.uniform(0.0, side), rng.uniform(0.0, side)};
        } while (distance(a, b) < params.min_separation * side);
        int n = std::max(1, static_cast<int>(std::ceil(distance(a, b) / spacing)));
        Stage1Record rec;
        rec.waypoints.reserve(n + 1);
        for (int j = 0; j <= n; ++j) {
            Config2D q{(a.x * (n - j) + b.x * j) / n, (a.y * (n - j) + b.y * j) / n};
            q.x = std::clamp(q.x + params.jitter_sigma * side * rng.gaussian(), 0.0, side);
            q.y = std::clamp(q.y + params.jitter_sigma * side * rng.gaussian(), 0.0, side);
            rec.waypoints.push_back(q);
        }
        out.push_back(std::move(rec));
    }
    return out;
}

Stage2DatasetResult gen_stage2_dataset(const Stage1Model& stage1, int env_count,
                                       int trajs_per_env, std::uint64_t seed,
                                       const Stage2DataParams& params) {
    if (env_count < 1 || trajs_per_env < 1)
        throw NumericDomainError("gen_stage2_dataset: counts must be >= 1");
    Stage2DatasetResult out;
    for (int e = 0; e < env_count; ++e) {
        std::uint64_t world_seed = derive_seed(seed, 0xE000 + static_cast<std::uint64_t>(e));
        World world;
        try {
            world = generate_world(world_seed, params.world);
        } catch (const WorldGenError&) {
            out.skipped_envs += 1;
            continue;
        }
        Costmap costmap = render_costmap(world, params.resolution);
        Pcg32 rng(derive_seed(seed, 0xF000 + static_cast<std::uint64_t>(e)));

        int successes = 0;
        int attempts = 0;
        const int max_attempts = 5 * trajs_per_env;
        while (successes < trajs_per_env && attempts < max_attempts) {
            attempts += 1;
            ProblemInstance problem;
            try {
                problem = random_problem(world, rng, params.goal_radius);
            } catch (const InfeasibleProblemError&) {
                break;
            }
            RrtStarOptions opt;
            opt.range = params.rrt_range * world.side;
            opt.max_iterations = params.demo_budget_iterations;
            opt.use_wall_clock = false;
            opt.convergence_window = params.convergence_window;
            opt.edge_delta = params.edge_delta;
            opt.goal_radius = params.goal_radius;
            PlannerResult plan = rrt_star_plan(problem, opt, rng);
            if (!plan.success) {
                out.failed_plans += 1;
                continue;
            }
            Trajectory demo = simplify(world, *plan.path, params.edge_delta, rng,
                                       2 * static_cast<int>(plan.path->waypoints.size()));
            if (static_cast<int>(demo.waypoints.size()) > stage1.config().max_len) {
                out.failed_plans += 1;
                continue;
            }
            Stage2Record rec;
            rec.world_seed = world_seed;
            rec.world = world;
            rec.costmap = costmap;
            rec.start = problem.start;
            rec.goal = problem.goal;
            rec.demo = demo.waypoints;
            rec.gt = ground_truth_indices(stage1, rec.demo);
            out.records.push_back(std::move(rec));
            successes += 1;
        }
        if (successes == 0) out.skipped_envs += 1;
    }
    return out;
}

void save_stage1_dataset(const std::string& path, const std::vector<Stage1Record>& records,
                         std::uint64_t seed, const Stage1DataParams& params) {
    Checkpoint ckpt;
    ckpt.config = {{"schema", "stage1-dataset"},
                   {"count", records.size()},
                   {"seed", seed},
                   {"side", params.side},
                   {"spacing", params.spacing},
                   {"jitter_sigma", params.jitter_sigma},
                   {"min_separation", params.min_separation}};
    for (std::size_t i = 0; i < records.size(); ++i)
        ckpt.arrays.push_back(points_array(record_name("traj", static_cast<int>(i)),
                                           records[i].waypoints));
    save_container(path, kDatasetMagic, ckpt);
}

std::vector<Stage1Record> load_stage1_dataset(const std::string& path) {
    Checkpoint ckpt = load_container(path, kDatasetMagic);
    if (ckpt.config.value("schema", "") != "stage1-dataset")
        throw CheckpointFormatError("dataset at " + path + " is not a stage-1 dataset");
    std::size_t count = ckpt.config.at("count");
    std::vector<Stage1Record> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i)
        out.push_back({points_from_array(ckpt.require(record_name("traj", static_cast<int>(i))))});
    return out;
}

void save_stage2_dataset(const std::string& path, const Stage2DatasetResult& data,
                         std::uint64_t seed, const Stage2DataParams& params) {
    Checkpoint ckpt;
    nlohmann::json records = nlohmann::json::array();
    for (const auto& r : data.records)
        records.push_back({{"world_seed", r.world_seed}});
    ckpt.config = {{"schema", "stage2-dataset"},
                   {"seed", seed},
                   {"resolution", params.resolution},
                   {"goal_radius", params.goal_radius},
                   {"edge_delta", params.edge_delta},
                   {"worldgen", worldgen_to_json(params.world)},
                   {"skipped_envs", data.skipped_envs},
                   {"failed_plans", data.failed_plans},
                   {"records", records}};
    for (std::size_t i = 0; i < data.records.size(); ++i) {
        const auto& r = data.records[i];
        int idx = static_cast<int>(i);
        ckpt.arrays.push_back(obstacles_array(record_name("obs", idx), r.world));
        NamedArray cm;
        cm.name = record_name("costmap", idx);
        cm.shape = {static_cast<std::uint32_t>(r.costmap.resolution),
                    static_cast<std::uint32_t>(r.costmap.resolution)};
        cm.values.reserve(r.costmap.cells.size());
        for (auto c : r.costmap.cells) cm.values.push_back(static_cast<float>(c));
        ckpt.arrays.push_back(std::move(cm));
        ckpt.arrays.push_back(points_array(record_name("sg", idx), {r.start, r.goal}));
        ckpt.arrays.push_back(points_array(record_name("demo", idx), r.demo));
        NamedArray gt;
        gt.name = record_name("gti", idx);
        gt.shape = {static_cast<std::uint32_t>(r.gt.size())};
        for (int v : r.gt) gt.values.push_back(static_cast<float>(v));
        ckpt.arrays.push_back(std::move(gt));
    }
    save_container(path, kDatasetMagic, ckpt);
}

Stage2DatasetResult load_stage2_dataset(const std::string& path) {
    Checkpoint ckpt = load_container(path, kDatasetMagic);
    if (ckpt.config.value("schema", "") != "stage2-dataset")
        throw CheckpointFormatError("dataset at " + path + " is not a stage-2 dataset");
    Stage2DatasetResult out;
    out.skipped_envs = ckpt.config.value("skipped_envs", 0);
    out.failed_plans = ckpt.config.value("failed_plans", 0);
    WorldGenParams wg = worldgen_from_json(ckpt.config.at("worldgen"));
    const auto& records = ckpt.config.at("records");
    for (std::size_t i = 0; i < records.size(); ++i) {
        int idx = static_cast<int>(i);
        Stage2Record r;
        r.world_seed = records[i].at("world_seed");
        // regenerate the double-precision world from its seed; the stored
        // obstacle rows are for external consumers
        r.world = generate_world(r.world_seed, wg);
        const NamedArray& cm = ckpt.require(record_name("costmap", idx));
        if (cm.shape.size() != 2 || cm.shape[0] != cm.shape[1])
            throw CheckpointShapeError("costmap array has a non-square shape");
        r.costmap.resolution = static_cast<int>(cm.shape[0]);
        r.costmap.cell_size = r.world.side / r.costmap.resolution;
        r.costmap.cells.reserve(cm.values.size());
        for (float v : cm.values) r.costmap.cells.push_back(v != 0.0f ? 1 : 0);
        auto sg = points_from_array(ckpt.require(record_name("sg", idx)));
        if (sg.size() != 2) throw CheckpointShapeError("start/goal array must hold 2 points");
        r.start = sg[0];
        r.goal = sg[1];
        r.demo = points_from_array(ckpt.require(record_name("demo", idx)));
        const NamedArray& gt = ckpt.require(record_name("gti", idx));
        for (float v : gt.values) r.gt.push_back(static_cast<int>(v));
        out.records.push_back(std::move(r));
    }
    return out;
}

Checkpoint stage1_to_checkpoint(const Stage1Model& model) {
    Checkpoint ckpt;
    ckpt.config = {{"schema", "stage1-model"}, {"stage1", stage1_config_to_json(model.config())}};
    params_to_arrays(model.params(), "", ckpt);
    return ckpt;
}

Stage1Model stage1_from_checkpoint(const Checkpoint& ckpt) {
    if (ckpt.config.value("schema", "") != "stage1-model")
        throw CheckpointFormatError("checkpoint is not a stage-1 model");
    Stage1Model model(stage1_config_from_json(ckpt.config.at("stage1")), 0);
    arrays_to_params(ckpt, "", model.params());
    return model;
}

Checkpoint bundle_to_checkpoint(const Stage1Model& stage1, const Stage2Model& stage2) {
    Checkpoint ckpt;
    ckpt.config = {{"schema", "vqmpt-bundle"},
                   {"stage1", stage1_config_to_json(stage1.config())},
                   {"stage2", stage2_config_to_json(stage2.config())}};
    params_to_arrays(stage1.params(), "s1.", ckpt);
    params_to_arrays(stage2.params(), "s2.", ckpt);
    return ckpt;
}

ModelBundle bundle_from_checkpoint(const Checkpoint& ckpt) {
    if (ckpt.config.value("schema", "") != "vqmpt-bundle")
        throw CheckpointFormatError("checkpoint is not a model bundle");
    Stage1Config c1 = stage1_config_from_json(ckpt.config.at("stage1"));
    Stage2Config c2 = stage2_config_from_json(ckpt.config.at("stage2"));
    ModelBundle bundle{Stage1Model(c1, 0), Stage2Model(c2, c1.num_codes, c1.code_dim, 0)};
    arrays_to_params(ckpt, "s1.", bundle.stage1.params());
    arrays_to_params(ckpt, "s2.", bundle.stage2.params());
    bundle.stage2.set_bos_source(bundle.stage1.codebook().z_start);
    return bundle;
}

std::vector<Stage2Example> to_examples(const std::vector<Stage2Record>& records) {
    std::vector<Stage2Example> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back({r.costmap, r.start, r.goal, r.gt});
    return out;
}

}  // namespace vqmpt
