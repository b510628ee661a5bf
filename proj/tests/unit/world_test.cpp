#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "fbev/diff/ops.hpp"
#include "fbev/world/dataset.hpp"
#include "fbev/world/world.hpp"

using namespace fbev::world;
using fbev::geometry::BevGridSpec;

namespace {

EgoPose origin_pose() { return {0, 1, 0.0, 0.0, 0.0}; }

WorldScene empty_scene() {
    WorldScene s;
    s.scene_id = 1;
    s.route = {{0.0, 0.0, 0.0}};
    return s;
}

bool same_rect(const Rect& a, const Rect& b) {
    return a.cx == b.cx && a.cz == b.cz && a.yaw == b.yaw && a.half_w == b.half_w && a.half_l == b.half_l;
}

double cells_iou(const std::vector<double>& a, const std::vector<double>& b) {
    double inter = 0, uni = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        inter += a[i] > 0.5 && b[i] > 0.5;
        uni += a[i] > 0.5 || b[i] > 0.5;
    }
    return uni == 0 ? 1.0 : inter / uni;
}

}  // namespace

TEST(Scene, DeterministicPerSeed) {
    const WorldConfig cfg;
    const auto a = generate_scene(17, cfg);
    const auto b = generate_scene(17, cfg);
    ASSERT_EQ(a.layout.size(), b.layout.size());
    ASSERT_EQ(a.agents.size(), b.agents.size());
    for (std::size_t i = 0; i < a.layout.size(); ++i) EXPECT_TRUE(same_rect(a.layout[i].rect, b.layout[i].rect));
    for (std::size_t i = 0; i < a.agents.size(); ++i) {
        EXPECT_TRUE(same_rect(a.agents[i].footprint, b.agents[i].footprint));
        EXPECT_EQ(a.agents[i].vx, b.agents[i].vx);
    }
    const auto c = generate_scene(18, cfg);
    EXPECT_FALSE(a.road_width == c.road_width);
}

TEST(Scene, ZeroDensityIsLayoutOnly) {
    WorldConfig cfg;
    cfg.cars_min = cfg.cars_max = 0;
    cfg.pedestrians_min = cfg.pedestrians_max = 0;
    const auto s = generate_scene(3, cfg);
    EXPECT_TRUE(s.agents.empty());
    EXPECT_FALSE(s.layout.empty());
}

TEST(Scene, AgentCountsWithinBoundsAndOnRoad) {
    WorldConfig cfg;
    cfg.cars_min = 1;
    cfg.cars_max = 4;
    cfg.pedestrians_min = 2;
    cfg.pedestrians_max = 3;
    int seen_min = 100, seen_max = 0;
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        const auto s = generate_scene(seed, cfg);
        int cars = 0, peds = 0;
        for (const auto& a : s.agents) {
            (a.kind == ClassKind::Car ? cars : peds)++;
            EXPECT_TRUE(world_point_has(s, ClassKind::Drivable, a.footprint.cx, a.footprint.cz, 0)) << seed;
        }
        ASSERT_GE(cars, 1);
        ASSERT_LE(cars, 4);
        ASSERT_GE(peds, 2);
        ASSERT_LE(peds, 3);
        seen_min = std::min(seen_min, cars);
        seen_max = std::max(seen_max, cars);
    }
    EXPECT_EQ(seen_min, 1);
    EXPECT_EQ(seen_max, 4);
}

TEST(Scene, InfeasibleConfigFails) {
    WorldConfig cfg;
    cfg.road_width_min = cfg.road_width_max = 0.0;
    EXPECT_THROW(generate_scene(1, cfg), std::invalid_argument);
    WorldConfig none;
    none.classes.clear();
    EXPECT_THROW(generate_scene(1, none), std::invalid_argument);
}

TEST(Render, EmptySceneIsGroundAndSky) {
    const RenderCamera rc;
    std::vector<int> labels;
    const Image img = render_pv(empty_scene(), origin_pose(), rc, &labels);
    for (int v = 0; v < img.height; ++v) {
        for (int u = 0; u < img.width; ++u) {
            const bool below = v > rc.v0;
            EXPECT_EQ(img.pixel(v, u), below ? kGroundColor : kSkyColor);
            EXPECT_EQ(labels[v * img.width + u], below ? kLabelGround : kLabelSky);
        }
    }
}

TEST(Render, ProjectAndProbe) {
    const RenderCamera rc;
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> zd(2.0, 12.0), ud(4.0, 123.0);
    for (int trial = 0; trial < 100; ++trial) {
        const double z = zd(rng);
        const double u = ud(rng);
        const double x = (u - rc.cam.u0) * z / rc.cam.f;
        WorldScene s = empty_scene();
        // A thin strip along the viewing ray, long enough to cover a pixel row.
        const double half_depth = (0.1 + z * z / (rc.cam.f * rc.height)) * std::hypot(x, z) / z;
        s.layout.push_back({ClassKind::Crossing, {x, z, std::atan2(-x, z), 0.15, half_depth}});
        std::vector<int> labels;
        const Image img = render_pv(s, origin_pose(), rc, &labels);
        const double v = rc.v0 + rc.cam.f * rc.height / z;
        bool found = false;
        for (int dv = -1; dv <= 1 && !found; ++dv) {
            for (int du = -1; du <= 1 && !found; ++du) {
                const int pv = static_cast<int>(std::lround(v)) + dv;
                const int pu = static_cast<int>(std::lround(u)) + du;
                if (pv < 0 || pv >= img.height || pu < 0 || pu >= img.width) continue;
                found = img.pixel(pv, pu) == class_color(ClassKind::Crossing);
            }
        }
        EXPECT_TRUE(found) << "x " << x << " z " << z;
    }
}

TEST(Render, NearerBoxOccludesFarther) {
    const RenderCamera rc;
    WorldScene near_only = empty_scene(), far_only = empty_scene(), both = empty_scene();
    Agent a{ClassKind::Pedestrian, {0.3, 4.0, 0.0, 0.6, 0.5}, 1.2, 0.0, 0.0};
    Agent b{ClassKind::Car, {-0.5, 8.0, 0.4, 1.5, 1.0}, 1.8, 0.0, 0.0};
    near_only.agents = {a};
    far_only.agents = {b};
    both.agents = {b, a};
    std::vector<int> la, lb, lab;
    render_pv(near_only, origin_pose(), rc, &la);
    render_pv(far_only, origin_pose(), rc, &lb);
    const Image img = render_pv(both, origin_pose(), rc, &lab);
    const int ped = static_cast<int>(ClassKind::Pedestrian), car = static_cast<int>(ClassKind::Car);
    int overlap = 0;
    for (std::size_t i = 0; i < lab.size(); ++i) {
        if (la[i] == ped) {
            EXPECT_EQ(lab[i], ped);
            overlap += lb[i] == car;
        } else if (lb[i] == car) {
            EXPECT_EQ(lab[i], car);
        } else {
            EXPECT_EQ(lab[i], la[i]);
        }
    }
    EXPECT_GT(overlap, 50);
}

TEST(GroundTruthMaps, AnalyticArea) {
    std::mt19937_64 rng(6);
    const BevGridSpec spec = BevGridSpec{}.upsampled(2);
    WorldConfig cfg;
    for (int trial = 0; trial < 50; ++trial) {
        std::uniform_real_distribution<double> w(0.4, 3.0), cx(-2.0, 2.0), cz(4.0, 9.0);
        const Rect r{cx(rng), cz(rng), 0.0, w(rng), w(rng)};
        WorldScene s = empty_scene();
        s.layout.push_back({ClassKind::Crossing, r});
        const auto gt = make_gt(s, origin_pose(), spec, cfg);
        const std::size_t plane = static_cast<std::size_t>(spec.Z) * spec.X;
        double count = 0;
        for (std::size_t i = 0; i < plane; ++i) count += gt.maps[plane + i];
        const double cell2 = spec.cell_m * spec.cell_m;
        const double perimeter_cells = 4.0 * (r.half_w + r.half_l) / spec.cell_m + 4.0;
        EXPECT_NEAR(count, r.area() / cell2, perimeter_cells);
        // Crossings count as drivable as well.
        for (std::size_t i = 0; i < plane; ++i) EXPECT_EQ(gt.maps[i], gt.maps[plane + i]);
    }
}

TEST(GroundTruthMaps, NoAgentsAllVisible) {
    WorldConfig cfg;
    cfg.cars_min = cfg.cars_max = cfg.pedestrians_min = cfg.pedestrians_max = 0;
    const auto s = generate_scene(9, cfg);
    const auto gt = make_gt(s, origin_pose(), BevGridSpec{}, cfg);
    for (double v : gt.visibility) EXPECT_EQ(v, 1.0);
}

TEST(GroundTruthMaps, SingleAgentShadow) {
    const BevGridSpec spec;  // x in [-5, 5], z in [1, 13]
    WorldScene s = empty_scene();
    s.agents.push_back({ClassKind::Car, {0.0, 10.0, 0.0, 0.5, 0.5}, 1.5, 0.0, 0.0});
    const auto gt = make_gt(s, origin_pose(), spec, WorldConfig{});
    for (int r = 0; r < spec.Z; ++r) {
        for (int c = 0; c < spec.X; ++c) {
            const double x = spec.col_x(c), z = spec.row_depth(r);
            const double vis = gt.visibility[r * spec.X + c];
            if (std::abs(x) < 0.3 && z > 10.5) EXPECT_EQ(vis, 0.0) << x << "," << z;
            if (std::abs(x) > 2.0 || z < 9.5) EXPECT_EQ(vis, 1.0) << x << "," << z;
        }
    }
}

TEST(Trajectory, LengthOne) {
    const auto s = generate_scene(1, WorldConfig{});
    EXPECT_EQ(simulate_trajectory(s, 1, {}, 1).size(), 1u);
    EXPECT_THROW(simulate_trajectory(s, 0, {}, 1), std::invalid_argument);
}

TEST(Trajectory, StepAndYawRateBounds) {
    const WorldConfig cfg;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const auto s = generate_scene(seed, cfg);
        TrajectoryConfig tc;
        tc.speed_max = 1.8;
        tc.lateral_jitter = 0.5;
        const auto poses = simulate_trajectory(s, 40, tc, seed);
        for (std::size_t t = 1; t < poses.size(); ++t) {
            const auto d = fbev::temporal::relative_motion(poses[t - 1], poses[t]);
            EXPECT_LE(std::hypot(d.dx, d.dz), kMaxStep);
            EXPECT_LE(std::abs(d.rotation), kMaxYawRate);
            EXPECT_EQ(poses[t].scene_id, s.scene_id);
            EXPECT_EQ(poses[t].t, static_cast<int>(t));
        }
        const auto again = simulate_trajectory(s, 40, tc, seed);
        for (std::size_t t = 0; t < poses.size(); ++t) EXPECT_EQ(again[t].x, poses[t].x);
    }
}

TEST(Trajectory, StraightLine) {
    const auto s = generate_scene(2, WorldConfig{});
    TrajectoryConfig tc;
    tc.model = MotionModel::Straight;
    const auto poses = simulate_trajectory(s, 10, tc, 3);
    const double step = std::hypot(poses[1].x - poses[0].x, poses[1].z - poses[0].z);
    EXPECT_GT(step, 0.0);
    for (std::size_t t = 1; t < poses.size(); ++t) {
        EXPECT_EQ(poses[t].yaw, poses[0].yaw);
        EXPECT_NEAR(std::hypot(poses[t].x - poses[t - 1].x, poses[t].z - poses[t - 1].z), step, 1e-12);
    }
}

TEST(Consistency, RenderMatchesGroundTruth) {
    DatasetConfig dc;
    dc.gt_spec = BevGridSpec{}.upsampled(2);
    const auto& rc = dc.camera;
    std::size_t checked = 0, agree = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto scene = generate_scene(seed, dc.world);
        const auto poses = simulate_trajectory(scene, 4, dc.trajectory, seed);
        for (const auto& pose : poses) {
            std::vector<int> labels;
            render_pv(scene, pose, rc, &labels);
            const auto gt = make_gt(scene, pose, dc.gt_spec, dc.world);
            const std::size_t plane = static_cast<std::size_t>(gt.rows) * gt.cols;
            for (int r = 0; r < gt.rows; ++r) {
                for (int c = 0; c < gt.cols; ++c) {
                    const std::size_t i = static_cast<std::size_t>(r) * gt.cols + c;
                    if (gt.visibility[i] == 0.0) continue;
                    const double x = dc.gt_spec.col_x(c), z = dc.gt_spec.row_depth(r);
                    const int u = static_cast<int>(std::lround(rc.cam.f * x / z + rc.cam.u0));
                    const int v = static_cast<int>(std::lround(rc.v0 + rc.cam.f * rc.height / z));
                    if (u < 0 || u >= rc.cam.image_w || v < 0 || v >= rc.cam.image_h) continue;
                    const int label = labels[static_cast<std::size_t>(v) * rc.cam.image_w + u];
                    if (label != kLabelGround && label != static_cast<int>(ClassKind::Drivable) &&
                        label != static_cast<int>(ClassKind::Crossing)) {
                        continue;  // an agent covers the pixel
                    }
                    const bool drivable = gt.maps[i] > 0.5, crossing = gt.maps[plane + i] > 0.5;
                    const int expect = crossing   ? static_cast<int>(ClassKind::Crossing)
                                       : drivable ? static_cast<int>(ClassKind::Drivable)
                                                  : kLabelGround;
                    ++checked;
                    agree += label == expect;
                }
            }
        }
    }
    ASSERT_GT(checked, 5000u);
    EXPECT_GE(static_cast<double>(agree) / checked, 0.95);
}

TEST(Consistency, WarpedGroundTruthMatchesNextFrame) {
    DatasetConfig dc;
    dc.gt_spec = BevGridSpec{}.upsampled(2);
    dc.trajectory.speed_max = 1.8;
    dc.trajectory.lateral_jitter = 0.5;
    const auto& spec = dc.gt_spec;
    const std::size_t plane = static_cast<std::size_t>(spec.Z) * spec.X;
    std::vector<double> warped_all[2], target_all[2];
    for (std::uint64_t seed = 100; seed < 120; ++seed) {
        const auto scene = generate_scene(seed, dc.world);
        const auto poses = simulate_trajectory(scene, 6, dc.trajectory, seed);
        for (std::size_t t = 1; t < poses.size(); ++t) {
            const auto prev = make_gt(scene, poses[t - 1], spec, dc.world);
            const auto cur = make_gt(scene, poses[t], spec, dc.world);
            const auto delta = fbev::temporal::relative_motion(poses[t - 1], poses[t]);
            const auto pts = fbev::temporal::warp_sample_points(delta, spec);
            const auto prev_v = fbev::diff::Value::constant({prev.classes, spec.Z, spec.X}, prev.maps);
            const auto warped = fbev::temporal::align_history(prev_v, delta, true, prev_v, spec);
            for (int k = 0; k < 2; ++k) {
                for (std::size_t i = 0; i < plane; ++i) {
                    const auto& p = pts[i];
                    if (p.row < 0 || p.row > spec.Z - 1 || p.col < 0 || p.col > spec.X - 1) continue;
                    const double w = warped.at(k * plane + i), y = cur.maps[k * plane + i];
                    warped_all[k].push_back(w);
                    target_all[k].push_back(y);
                    if ((w > 0.5) == (y > 0.5)) continue;
                    // Disagreements only happen where the previous map changes
                    // class within the bilinear footprint of the sample.
                    const int r0 = static_cast<int>(std::floor(p.row)), c0 = static_cast<int>(std::floor(p.col));
                    bool mixed = false;
                    for (int dr = 0; dr <= 1; ++dr) {
                        for (int dc2 = 0; dc2 <= 1; ++dc2) {
                            const int r = std::min(r0 + dr, spec.Z - 1), c = std::min(c0 + dc2, spec.X - 1);
                            mixed |= (prev.maps[k * plane + r * spec.X + c] > 0.5) != (y > 0.5);
                        }
                    }
                    EXPECT_TRUE(mixed) << "seed " << seed << " t " << t << " cell " << i;
                }
            }
        }
    }
    for (int k = 0; k < 2; ++k) EXPECT_GE(cells_iou(warped_all[k], target_all[k]), 0.95) << "class " << k;
}

TEST(Dataset, DumpLoadRoundTrip) {
    DatasetConfig dc;
    dc.frames_per_sequence = 3;
    dc.gt_spec = BevGridSpec{}.upsampled(2);
    const auto data = generate_dataset(dc, {4, 5});
    const auto dir = std::filesystem::temp_directory_path() / "fbev_dataset_roundtrip";
    std::filesystem::remove_all(dir);
    dump_dataset(dir.string(), data, dc.world);
    const auto back = load_dataset(dir.string());
    ASSERT_EQ(back.sequences.size(), 2u);
    EXPECT_EQ(back.classes, dc.world.classes);
    for (std::size_t s = 0; s < 2; ++s) {
        ASSERT_EQ(back.sequences[s].frames.size(), 3u);
        for (std::size_t f = 0; f < 3; ++f) {
            const auto& a = data[s].frames[f];
            const auto& b = back.sequences[s].frames[f];
            EXPECT_EQ(a.image.rgb, b.image.rgb);
            EXPECT_EQ(a.gt.maps, b.gt.maps);
            EXPECT_EQ(a.gt.visibility, b.gt.visibility);
            EXPECT_EQ(a.pose.x, b.pose.x);
            EXPECT_EQ(a.pose.yaw, b.pose.yaw);
        }
    }
    std::filesystem::remove_all(dir);
}

TEST(Dataset, SeedRanges) {
    EXPECT_EQ(parse_seed_range("3..5"), (std::vector<std::uint64_t>{3, 4, 5}));
    EXPECT_EQ(parse_seed_range("7,1"), (std::vector<std::uint64_t>{7, 1}));
    EXPECT_THROW(parse_seed_range("5..3"), std::invalid_argument);
    EXPECT_THROW(parse_seed_range("x"), std::invalid_argument);
}
