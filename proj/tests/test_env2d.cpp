#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "oracles.hpp"
#include "vqmpt/env2d.hpp"

using namespace vqmpt;

TEST_CASE("empty world accepts everything in the workspace") {
    WorldGenParams params;
    params.min_obstacles = 0;
    params.max_obstacles = 0;
    World w = generate_world(42, params);
    CHECK(w.obstacles.empty());
    CHECK(is_state_valid(w, {0.5, 0.5}));
    CHECK(is_state_valid(w, {0.0, 0.0}));
    CHECK_FALSE(is_state_valid(w, {-0.01, 0.5}));
    CHECK_FALSE(is_state_valid(w, {0.5, 1.01}));
    Costmap m = render_costmap(w, 16);
    for (auto c : m.cells) CHECK(c == 0);
}

TEST_CASE("world generation is deterministic in the seed") {
    World a = generate_world(123);
    World b = generate_world(123);
    REQUIRE(a.obstacles.size() == b.obstacles.size());
    for (std::size_t i = 0; i < a.obstacles.size(); ++i) {
        CHECK(a.obstacles[i].index() == b.obstacles[i].index());
        if (auto* ra = std::get_if<RectObstacle>(&a.obstacles[i])) {
            auto* rb = std::get_if<RectObstacle>(&b.obstacles[i]);
            CHECK(ra->x == rb->x);
            CHECK(ra->w == rb->w);
        } else {
            auto* ca = std::get_if<CircleObstacle>(&a.obstacles[i]);
            auto* cb = std::get_if<CircleObstacle>(&b.obstacles[i]);
            CHECK(ca->cx == cb->cx);
            CHECK(ca->r == cb->r);
        }
    }
    World c = generate_world(124);
    CHECK(free_space_fraction(c) >= 0.3);
}

TEST_CASE("generated worlds keep at least 30% free space (Monte Carlo audit)") {
    // 3-sigma slack for the 10^4-sample estimate against the generator's
    // fine-grid guarantee.
    const int samples = 10000;
    double slack = 3.0 * std::sqrt(0.3 * 0.7 / samples);
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        World w = generate_world(seed);
        Pcg32 rng(derive_seed(seed, 555));
        int free_count = 0;
        for (int i = 0; i < samples; ++i) {
            Config2D q{rng.uniform(0.0, w.side), rng.uniform(0.0, w.side)};
            if (!point_in_obstacle(w, q)) ++free_count;
        }
        double frac = static_cast<double>(free_count) / samples;
        CHECK(frac >= 0.3 - slack);
    }
}

TEST_CASE("full-cover rectangle renders an all-ones costmap") {
    World w;
    w.obstacles.emplace_back(RectObstacle{-0.1, -0.1, 1.2, 1.2});
    Costmap m = render_costmap(w, 8);
    for (auto c : m.cells) CHECK(c == 1);
}

TEST_CASE("costmap cells agree with the point-in-obstacle rule at centers") {
    for (std::uint64_t seed = 200; seed < 250; ++seed) {
        World w = generate_world(seed);
        Costmap m = render_costmap(w, 32);
        for (int iy = 0; iy < 32; ++iy)
            for (int ix = 0; ix < 32; ++ix) {
                Config2D center{(ix + 0.5) * m.cell_size, (iy + 0.5) * m.cell_size};
                CHECK(static_cast<bool>(m.at(ix, iy)) == point_in_obstacle(w, center));
            }
    }
}

TEST_CASE("costmap rendering is a pure function of seed and parameters") {
    World w1 = generate_world(77);
    World w2 = generate_world(77);
    CHECK(render_costmap(w1, 64).cells == render_costmap(w2, 64).cells);
}

TEST_CASE("state validity against a fine raster away from boundaries") {
    World w = generate_world(31);
    const int R = 1024;
    Costmap fine = render_costmap(w, R);
    Pcg32 rng(32);
    for (int i = 0; i < 20000; ++i) {
        Config2D q{rng.uniform(0.0, w.side), rng.uniform(0.0, w.side)};
        int ix = std::min(R - 1, static_cast<int>(q.x / fine.cell_size));
        int iy = std::min(R - 1, static_cast<int>(q.y / fine.cell_size));
        // skip the one-cell boundary band where rasterization is ambiguous
        bool uniform_neighborhood = true;
        for (int dy = -1; dy <= 1 && uniform_neighborhood; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                int nx = ix + dx, ny = iy + dy;
                if (nx < 0 || ny < 0 || nx >= R || ny >= R) continue;
                if (fine.at(nx, ny) != fine.at(ix, iy)) {
                    uniform_neighborhood = false;
                    break;
                }
            }
        if (!uniform_neighborhood) continue;
        CHECK(is_state_valid(w, q) == (fine.at(ix, iy) == 0));
    }
}

TEST_CASE("rect center and boundary both collide") {
    World w;
    w.obstacles.emplace_back(RectObstacle{0.4, 0.4, 0.2, 0.2});
    CHECK_FALSE(is_state_valid(w, {0.5, 0.5}));
    CHECK_FALSE(is_state_valid(w, {0.4, 0.5}));   // boundary counts as collision
    CHECK(is_state_valid(w, {0.39999, 0.5}));
}

TEST_CASE("edge validity basics") {
    World w;
    w.obstacles.emplace_back(RectObstacle{0.45, 0.0, 0.1, 1.0});
    Config2D a{0.1, 0.5}, b{0.9, 0.5};
    CHECK_FALSE(is_edge_valid(w, a, b, 0.04));  // delta < wall width/2
    CHECK(is_edge_valid(w, a, {0.2, 0.9}, 0.01));
    CHECK(is_edge_valid(w, a, a, 0.01));  // zero-length edge at a valid state
    Config2D inside{0.5, 0.5};
    CHECK_FALSE(is_edge_valid(w, inside, inside, 0.01));
}

TEST_CASE("edge validity is symmetric and monotone in delta") {
    Pcg32 rng(33);
    for (std::uint64_t seed = 300; seed < 310; ++seed) {
        World w = generate_world(seed);
        for (int i = 0; i < 300; ++i) {
            Config2D a{rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0)};
            Config2D b{rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0)};
            bool fwd = is_edge_valid(w, a, b, 0.01);
            CHECK(is_edge_valid(w, b, a, 0.01) == fwd);
            if (fwd) {
                CHECK(is_state_valid(w, a));
                CHECK(is_state_valid(w, b));
            } else {
                // shrinking delta can only keep or produce failures
                CHECK_FALSE(is_edge_valid(w, a, b, 0.005));
                CHECK_FALSE(is_edge_valid(w, a, b, 0.0025));
            }
        }
    }
}

TEST_CASE("sampled edge check agrees with the exact segment oracle") {
    Pcg32 rng(34);
    int disagreements = 0;
    for (std::uint64_t seed = 400; seed < 410; ++seed) {
        World w = generate_world(seed);
        Costmap m = render_costmap(w, 64);
        double delta = m.cell_size / 2.0;
        for (int i = 0; i < 1000; ++i) {
            Config2D a{rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0)};
            Config2D b{rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0)};
            bool sampled = is_edge_valid(w, a, b, delta);
            bool exact_hit = oracles::segment_hits_world_oracle(w, a, b);
            bool states_ok = is_state_valid(w, a) && is_state_valid(w, b);
            bool exact_valid = states_ok && !exact_hit;
            if (sampled == exact_valid) continue;
            // A sampled pass over an exact hit is legitimate only when the
            // penetration is shorter than the sampling spacing.
            ++disagreements;
            CHECK(sampled);
            CHECK_FALSE(exact_valid);
            CHECK(oracles::max_penetration_interval(w, a, b) < delta);
        }
    }
    // near-tangent geometry is rare
    CHECK(disagreements < 20);
}

TEST_CASE("uniform sampler moments and range") {
    World w = generate_world(55);
    Pcg32 rng(56);
    const int draws = 100000;
    double sx = 0.0, sy = 0.0;
    for (int i = 0; i < draws; ++i) {
        Config2D q = sample_uniform(w, rng);
        CHECK(q.x >= 0.0);
        CHECK(q.x <= w.side);
        CHECK(q.y >= 0.0);
        CHECK(q.y <= w.side);
        sx += q.x;
        sy += q.y;
    }
    double sigma = w.side / std::sqrt(12.0);
    double tol = 3.0 * sigma / std::sqrt(static_cast<double>(draws));
    CHECK(std::abs(sx / draws - 0.5 * w.side) < tol);
    CHECK(std::abs(sy / draws - 0.5 * w.side) < tol);

    Pcg32 r1(77), r2(77);
    for (int i = 0; i < 10; ++i) {
        Config2D a = sample_uniform(w, r1), b = sample_uniform(w, r2);
        CHECK(a.x == b.x);
        CHECK(a.y == b.y);
    }
}

TEST_CASE("random problems satisfy validity and separation") {
    Pcg32 rng(57);
    int made = 0;
    for (std::uint64_t seed = 500; made < 500; ++seed) {
        World w = generate_world(seed);
        ProblemInstance p = random_problem(w, rng, 0.02);
        CHECK(is_state_valid(w, p.start));
        CHECK(is_state_valid(w, p.goal));
        CHECK(distance(p.start, p.goal) >= 0.4 * w.side);
        ++made;
    }
}

TEST_CASE("random problem reports infeasibility") {
    World w;
    w.obstacles.emplace_back(RectObstacle{-0.1, -0.1, 1.2, 1.2});
    Pcg32 rng(58);
    CHECK_THROWS_AS(random_problem(w, rng, 0.02), InfeasibleProblemError);
}

TEST_CASE("costmap PGM export round-trips header and payload") {
    World w = generate_world(66);
    Costmap m = render_costmap(w, 32);
    std::string path = "test_costmap.pgm";
    write_costmap_pgm(m, path);
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::string magic;
    int width, height, maxval;
    in >> magic >> width >> height >> maxval;
    CHECK(magic == "P5");
    CHECK(width == 32);
    CHECK(height == 32);
    CHECK(maxval == 255);
    in.get();  // single whitespace after header
    std::vector<char> payload(1024);
    in.read(payload.data(), 1024);
    CHECK(in.gcount() == 1024);
    // top row of the image is the highest-y row of the map
    for (int ix = 0; ix < 32; ++ix) {
        unsigned char v = static_cast<unsigned char>(payload[ix]);
        CHECK(v == (m.at(ix, 31) ? 0 : 255));
    }
    std::remove(path.c_str());
}
