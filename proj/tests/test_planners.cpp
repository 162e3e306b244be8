#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "oracles.hpp"
#include "vqmpt/planners.hpp"

using namespace vqmpt;

namespace {

bool path_exactly_valid(const World& w, const Trajectory& t) {
    if (t.waypoints.size() < 2) return false;
    for (const auto& q : t.waypoints)
        if (!is_state_valid(w, q)) return false;
    for (std::size_t i = 1; i < t.waypoints.size(); ++i)
        if (oracles::segment_hits_world_oracle(w, t.waypoints[i - 1], t.waypoints[i]))
            return false;
    return true;
}

}  // namespace

TEST_CASE("path length basics") {
    Trajectory t{{{0, 0}, {3, 4}}};
    CHECK(path_length(t) == doctest::Approx(5.0));

    Trajectory dup{{{0, 0}, {1, 1}, {1, 1}, {2, 2}}};
    Trajectory straight{{{0, 0}, {2, 2}}};
    CHECK(path_length(dup) == doctest::Approx(path_length(straight)));

    Trajectory rev{{{3, 4}, {0, 0}}};
    CHECK(path_length(rev) == doctest::Approx(path_length(t)));
}

TEST_CASE("termination rule boundary and monotonicity") {
    Trajectory ref{{{0, 0}, {1, 0}}};
    Trajectory same = ref;
    CHECK(termination_met(same, ref, 0.0));

    Trajectory longer{{{0, 0}, {1.4, 0}}};
    CHECK(termination_met(longer, ref, 0.5));
    CHECK_FALSE(termination_met(longer, ref, 0.1));

    Trajectory boundary{{{0, 0}, {1.2, 0}}};
    CHECK(termination_met(boundary, ref, 0.2));  // equality counts as met

    CHECK_THROWS_AS(termination_met(same, ref, -0.1), NumericDomainError);
}

TEST_CASE("nearest: single node, ties, and linear-scan oracle") {
    Tree t;
    t.add({0.5, 0.5}, -1);
    CHECK(nearest(t, {0.9, 0.9}) == 0);

    Tree dup;
    dup.add({0.2, 0.2}, -1);
    dup.add({0.2, 0.2}, 0);
    CHECK(nearest(dup, {0.3, 0.3}) == 0);  // lowest index wins

    Pcg32 rng(41);
    Tree big;
    big.add({rng.uniform(), rng.uniform()}, -1);
    for (int i = 1; i < 1000; ++i)
        big.add({rng.uniform(), rng.uniform()}, i - 1);
    for (int q = 0; q < 10000; ++q) {
        Config2D query{rng.uniform(), rng.uniform()};
        int got = nearest(big, query);
        int expect = 0;
        double best = HUGE_VAL;
        for (std::size_t i = 0; i < big.nodes.size(); ++i) {
            double d = std::hypot(big.nodes[i].x - query.x, big.nodes[i].y - query.y);
            if (d < best) {
                best = d;
                expect = static_cast<int>(i);
            }
        }
        CHECK(got == expect);
    }
}

TEST_CASE("connect equals is_edge_valid") {
    Pcg32 rng(42);
    World empty = generate_world(1, WorldGenParams{0, 0});
    CHECK(connect(empty, {0.1, 0.1}, {0.9, 0.9}, 0.01));

    World w = generate_world(43);
    Config2D inside{};
    // find an obstacle interior point
    bool found = false;
    for (int i = 0; i < 10000 && !found; ++i) {
        Config2D q{rng.uniform(), rng.uniform()};
        if (point_in_obstacle(w, q)) {
            inside = q;
            found = true;
        }
    }
    REQUIRE(found);
    CHECK_FALSE(connect(w, {0.0, 0.0}, inside, 0.01));

    for (int i = 0; i < 10000; ++i) {
        Config2D a{rng.uniform(), rng.uniform()};
        Config2D b{rng.uniform(), rng.uniform()};
        CHECK(connect(w, a, b, 0.01) == is_edge_valid(w, a, b, 0.01));
    }
}

TEST_CASE("simplify leaves two-waypoint paths alone and collapses collinear chains") {
    World empty = generate_world(2, WorldGenParams{0, 0});
    Pcg32 rng(44);

    Trajectory two{{{0.1, 0.1}, {0.8, 0.2}}};
    Trajectory out = simplify(empty, two, 0.01, rng, 10);
    CHECK(out.waypoints.size() == 2);

    Trajectory collinear{{{0.0, 0.0}, {0.5, 0.5}, {1.0, 1.0}}};
    Trajectory reduced = simplify(empty, collinear, 0.01, rng, 0);
    REQUIRE(reduced.waypoints.size() == 2);
    CHECK(reduced.waypoints[0].x == doctest::Approx(0.0));
    CHECK(reduced.waypoints[1].x == doctest::Approx(1.0));
}

TEST_CASE("simplify never lengthens a path and preserves validity") {
    Pcg32 rng(45);
    int audited = 0;
    for (std::uint64_t seed = 600; audited < 100; ++seed) {
        World w = generate_world(seed);
        ProblemInstance prob;
        try {
            prob = random_problem(w, rng, 0.02);
        } catch (const InfeasibleProblemError&) {
            continue;
        }
        Pcg32 prng(derive_seed(seed, 7));
        PlannerResult res = vqmpt_plan(prob, uniform_sampler(w), VqmptPlanOptions{}, prng);
        if (!res.success) continue;
        ++audited;
        Trajectory again = simplify(w, *res.path, 0.01, prng, 16);
        CHECK(path_length(again) <= path_length(*res.path) + 1e-12);
        CHECK(path_exactly_valid(w, again));
    }
}

TEST_CASE("planner on an empty world connects on the first goal check") {
    World empty = generate_world(3, WorldGenParams{0, 0});
    ProblemInstance prob{empty, {0.1, 0.1}, {0.9, 0.9}, 0.02};
    Pcg32 rng(46);
    PlannerResult res = vqmpt_plan(prob, uniform_sampler(empty), VqmptPlanOptions{}, rng);
    REQUIRE(res.success);
    REQUIRE(res.path.has_value());
    CHECK(res.path->waypoints.size() == 2);
    CHECK(res.path->waypoints.front().x == doctest::Approx(0.1));
    CHECK(res.path->waypoints.back().x == doctest::Approx(0.9));
}

TEST_CASE("planner with zero iterations fails with only the root vertex") {
    World empty = generate_world(4, WorldGenParams{0, 0});
    ProblemInstance prob{empty, {0.1, 0.1}, {0.9, 0.9}, 0.02};
    Pcg32 rng(47);
    VqmptPlanOptions opt;
    opt.max_iterations = 0;
    PlannerResult res = vqmpt_plan(prob, uniform_sampler(empty), opt, rng);
    CHECK_FALSE(res.success);
    CHECK(res.vertices == 1);
    CHECK(res.samples_drawn == 0);
}

TEST_CASE("planner rejects an invalid start") {
    World w;
    w.obstacles.emplace_back(RectObstacle{0.0, 0.0, 0.3, 0.3});
    ProblemInstance prob{w, {0.1, 0.1}, {0.9, 0.9}, 0.02};
    Pcg32 rng(48);
    CHECK_THROWS_AS(vqmpt_plan(prob, uniform_sampler(w), VqmptPlanOptions{}, rng),
                    NumericDomainError);
}

TEST_CASE("seeded planner runs on a blocked corridor are sound and deterministic") {
    // wall with a gap: straight line blocked, corridor at the top
    World w;
    w.side = 1.0;
    w.obstacles.emplace_back(RectObstacle{0.45, 0.0, 0.1, 0.8});
    ProblemInstance prob{w, {0.2, 0.4}, {0.8, 0.4}, 0.02};

    int successes = 0;
    for (int run = 0; run < 100; ++run) {
        Pcg32 rng(derive_seed(900, run));
        PlannerResult res = vqmpt_plan(prob, uniform_sampler(w), VqmptPlanOptions{}, rng);
        if (res.success) {
            ++successes;
            REQUIRE(res.path.has_value());
            CHECK(path_exactly_valid(w, *res.path));
            CHECK(distance(res.path->waypoints.front(), prob.start) == 0.0);
            CHECK(distance(res.path->waypoints.back(), prob.goal) <= prob.goal_radius);
            CHECK(res.vertices <= res.samples_drawn + 2);
        }
    }
    CHECK(successes > 60);

    // bit-identical rerun
    Pcg32 r1(derive_seed(900, 5)), r2(derive_seed(900, 5));
    PlannerResult a = vqmpt_plan(prob, uniform_sampler(w), VqmptPlanOptions{}, r1);
    PlannerResult b = vqmpt_plan(prob, uniform_sampler(w), VqmptPlanOptions{}, r2);
    CHECK(a.success == b.success);
    CHECK(a.vertices == b.vertices);
    CHECK(a.samples_drawn == b.samples_drawn);
    if (a.success) {
        REQUIRE(a.path->waypoints.size() == b.path->waypoints.size());
        for (std::size_t i = 0; i < a.path->waypoints.size(); ++i) {
            CHECK(a.path->waypoints[i].x == b.path->waypoints[i].x);
            CHECK(a.path->waypoints[i].y == b.path->waypoints[i].y);
        }
    }
}

TEST_CASE("rrt* converges toward straight-line cost on empty worlds") {
    World empty = generate_world(5, WorldGenParams{0, 0});
    for (int seed = 0; seed < 10; ++seed) {
        Pcg32 rng(derive_seed(1000, seed));
        ProblemInstance prob{empty, {0.1, 0.15}, {0.85, 0.9}, 0.02};
        RrtStarOptions opt;
        opt.max_iterations = 100000;
        opt.use_wall_clock = false;
        opt.reference_length = distance(prob.start, prob.goal);
        opt.epsilon = 0.049;  // stop just inside the 1.05 factor
        PlannerResult res = rrt_star_plan(prob, opt, rng);
        REQUIRE(res.success);
        double straight = distance(prob.start, prob.goal);
        CHECK(path_length(*res.path) <= 1.05 * straight);
    }
}

TEST_CASE("rrt* with zero budget fails") {
    World empty = generate_world(6, WorldGenParams{0, 0});
    ProblemInstance prob{empty, {0.1, 0.1}, {0.9, 0.9}, 0.02};
    Pcg32 rng(49);
    RrtStarOptions opt;
    opt.max_time = 0.0;
    PlannerResult res = rrt_star_plan(prob, opt, rng);
    CHECK_FALSE(res.success);
}

TEST_CASE("rrt* trees stay parent-consistent and paths exactly valid") {
    Pcg32 rng(50);
    for (std::uint64_t seed = 700; seed < 712; ++seed) {
        World w = generate_world(seed);
        ProblemInstance prob;
        try {
            prob = random_problem(w, rng, 0.02);
        } catch (const InfeasibleProblemError&) {
            continue;
        }
        Pcg32 prng(derive_seed(seed, 3));
        RrtStarOptions opt;
        opt.max_iterations = 4000;
        opt.use_wall_clock = false;
        opt.convergence_window = 1500;
        PlannerResult res = rrt_star_plan(prob, opt, prng);
        if (res.success) CHECK(path_exactly_valid(w, *res.path));
    }
}

TEST_CASE("path CSV uses the x,y schema") {
    Trajectory t{{{0.123456789, 0.5}, {1.0 / 3.0, 0.25}}};
    write_path_csv(t, "test_path.csv");
    std::ifstream in("test_path.csv");
    std::string header, row1, row2;
    std::getline(in, header);
    std::getline(in, row1);
    std::getline(in, row2);
    CHECK(header == "x,y");
    CHECK(row1 == "0.123456789,0.5");
    CHECK(row2.substr(0, 11) == "0.333333333");
    std::remove("test_path.csv");
}
