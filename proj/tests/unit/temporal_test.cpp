#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "fbev/diff/grad_check.hpp"
#include "fbev/diff/ops.hpp"
#include "fbev/temporal/fusion.hpp"
#include "test_util.hpp"

using namespace fbev::temporal;
using fbev::diff::Value;
using fbev::geometry::BevGridSpec;

namespace {

constexpr double kPi = std::numbers::pi;

// World position of an ego-frame point.
void to_world(const EgoPose& p, double x, double z, double& wx, double& wz) {
    wx = std::cos(p.yaw) * x - std::sin(p.yaw) * z + p.x;
    wz = std::sin(p.yaw) * x + std::cos(p.yaw) * z + p.z;
}

void to_ego(const EgoPose& p, double wx, double wz, double& x, double& z) {
    const double tx = wx - p.x, tz = wz - p.z;
    x = std::cos(p.yaw) * tx + std::sin(p.yaw) * tz;
    z = -std::sin(p.yaw) * tx + std::cos(p.yaw) * tz;
}

// Square grid centered on the camera origin.
BevGridSpec centered(int n) {
    BevGridSpec s;
    s.Z = n;
    s.X = n;
    s.cell_m = 0.5;
    s.z_min = -n * s.cell_m / 2.0;
    return s;
}

EgoPose random_pose(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> pos(-20.0, 20.0), ang(-kPi, kPi);
    return {0, 1, pos(rng), pos(rng), ang(rng)};
}

Value smooth_field(const BevGridSpec& s, int channels) {
    std::vector<double> d;
    for (int c = 0; c < channels; ++c) {
        for (int r = 0; r < s.Z; ++r) {
            for (int col = 0; col < s.X; ++col) {
                const double x = s.col_x(col), z = s.row_depth(r);
                d.push_back(std::sin(0.11 * x + 0.3 * c) + std::cos(0.07 * z) + 0.02 * x * z);
            }
        }
    }
    return Value::constant({channels, s.Z, s.X}, d);
}

}  // namespace

TEST(RelativeMotion, IdentityPoses) {
    const EgoPose p{3, 7, 4.5, -2.0, 0.3};
    const auto d = relative_motion(p, p);
    EXPECT_EQ(d.rotation, 0.0);
    EXPECT_EQ(d.dx, 0.0);
    EXPECT_EQ(d.dz, 0.0);
}

TEST(RelativeMotion, ForwardMetre) {
    const EgoPose prev{0, 1, 0.0, 0.0, 0.0};
    const EgoPose ref{1, 1, 0.0, 1.0, 0.0};
    const auto d = relative_motion(prev, ref);
    EXPECT_NEAR(d.rotation, 0.0, 1e-15);
    EXPECT_NEAR(d.dx, 0.0, 1e-15);
    EXPECT_NEAR(d.dz, -1.0, 1e-15);
}

TEST(RelativeMotion, QuarterLeftTurnInPlace) {
    const EgoPose prev{0, 1, 2.0, 3.0, 0.0};
    const EgoPose ref{1, 1, 2.0, 3.0, kPi / 2};
    const auto d = relative_motion(prev, ref);
    EXPECT_NEAR(d.rotation, -kPi / 2, 1e-15);
    // A point straight ahead of the old heading lies to the right after turning left.
    double x, z;
    d.apply(0.0, 5.0, x, z);
    EXPECT_NEAR(x, 5.0, 1e-12);
    EXPECT_NEAR(z, 0.0, 1e-12);
}

TEST(RelativeMotion, MatchesPoseMatrices) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> pt(-30.0, 30.0);
    for (int trial = 0; trial < 200; ++trial) {
        const EgoPose a = random_pose(rng), b = random_pose(rng);
        const auto d = relative_motion(a, b);
        const double px = pt(rng), pz = pt(rng);
        double wx, wz, ex, ez, gx, gz;
        to_world(a, px, pz, wx, wz);
        to_ego(b, wx, wz, ex, ez);
        d.apply(px, pz, gx, gz);
        EXPECT_NEAR(gx, ex, 1e-9);
        EXPECT_NEAR(gz, ez, 1e-9);
        EXPECT_GT(d.rotation, -kPi);
        EXPECT_LE(d.rotation, kPi);
    }
}

TEST(RelativeMotion, CompositionWithin1e9) {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 200; ++trial) {
        const EgoPose a = random_pose(rng), b = random_pose(rng), c = random_pose(rng);
        const auto direct = relative_motion(a, c);
        const auto composed = compose(relative_motion(a, b), relative_motion(b, c));
        EXPECT_NEAR(normalize_angle(direct.rotation - composed.rotation), 0.0, 1e-9);
        EXPECT_NEAR(direct.dx, composed.dx, 1e-9);
        EXPECT_NEAR(direct.dz, composed.dz, 1e-9);
    }
}

TEST(NormalizeAngle, HalfOpenRange) {
    EXPECT_DOUBLE_EQ(normalize_angle(kPi), kPi);
    EXPECT_DOUBLE_EQ(normalize_angle(-kPi), kPi);
    EXPECT_NEAR(normalize_angle(3 * kPi / 2), -kPi / 2, 1e-15);
    EXPECT_NEAR(normalize_angle(-7.0), -7.0 + 2 * kPi, 1e-15);
}

TEST(AlignHistory, IdentityIsExact) {
    const BevGridSpec s;
    std::mt19937_64 rng(3);
    const Value prev = fbev::testing::random_const({4, s.Z, s.X}, rng);
    const Value ref = fbev::testing::random_const({4, s.Z, s.X}, rng);
    const Value out = align_history(prev, {}, true, ref, s);
    EXPECT_EQ(out.data(), prev.data());
    EXPECT_EQ(fbev::diff::mean_all(out).item(), fbev::diff::mean_all(prev).item());
}

TEST(AlignHistory, SceneMismatchReturnsReference) {
    const BevGridSpec s;
    std::mt19937_64 rng(4);
    const Value prev = fbev::testing::random_param({2, s.Z, s.X}, rng);
    const Value ref = fbev::testing::random_param({2, s.Z, s.X}, rng);
    const Value out = align_history(prev, {0.3, 1.0, -2.0}, false, ref, s);
    EXPECT_EQ(out.data(), ref.data());
    fbev::diff::sum_all(out).backward();
    for (double g : prev.grad()) EXPECT_EQ(g, 0.0);
}

TEST(AlignHistory, ShapeMismatchFails) {
    const BevGridSpec s;
    EXPECT_THROW(align_history(Value::zeros({2, s.Z, s.X}), {}, true, Value::zeros({3, s.Z, s.X}), s),
                 fbev::diff::ShapeError);
    EXPECT_THROW(align_history(Value::zeros({2, 5, 5}), {}, true, Value::zeros({2, 5, 5}), s),
                 fbev::diff::ShapeError);
}

TEST(AlignHistory, QuarterTurnsArePermutations) {
    for (int n : {6, 7}) {
        const BevGridSpec s = centered(n);
        std::mt19937_64 rng(5);
        const Value prev = fbev::testing::random_const({2, n, n}, rng);
        for (int q = 1; q <= 3; ++q) {
            const MotionDelta d{normalize_angle(q * kPi / 2), 0.0, 0.0};
            const Value out = align_history(prev, d, true, prev, s);
            for (int c = 0; c < 2; ++c) {
                for (int r = 0; r < n; ++r) {
                    for (int col = 0; col < n; ++col) {
                        // Destination metric point, rotated back into the source frame.
                        double sx, sz;
                        MotionDelta{-d.rotation, 0.0, 0.0}.apply(s.col_x(col), s.row_depth(r), sx, sz);
                        const int sr = static_cast<int>(std::lround(s.depth_to_row(sz)));
                        const int sc = static_cast<int>(std::lround(s.x_to_col(sx)));
                        ASSERT_GE(sr, 0);
                        ASSERT_LT(sr, n);
                        EXPECT_EQ(out.at((c * n + r) * n + col), prev.at((c * n + sr) * n + sc));
                    }
                }
            }
        }
    }
}

TEST(AlignHistory, QuarterTurnMovesAheadToRight) {
    const BevGridSpec s = centered(8);
    std::vector<double> d(64, 0.0);
    const int r_ahead = static_cast<int>(std::lround(s.depth_to_row(1.25)));
    const int c_mid = static_cast<int>(std::lround(s.x_to_col(0.25)));
    d[r_ahead * 8 + c_mid] = 1.0;
    const Value prev = Value::constant({1, 8, 8}, d);
    // Left turn: what was ahead now sits to the right.
    const Value out = align_history(prev, {-kPi / 2, 0.0, 0.0}, true, prev, s);
    const int r_new = static_cast<int>(std::lround(s.depth_to_row(-0.25)));
    const int c_new = static_cast<int>(std::lround(s.x_to_col(1.25)));
    EXPECT_EQ(out.at(r_new * 8 + c_new), 1.0);
    EXPECT_DOUBLE_EQ(fbev::diff::sum_all(out).item(), 1.0);
}

TEST(AlignHistory, TranslationByWholeCellsShifts) {
    const BevGridSpec s;
    std::mt19937_64 rng(6);
    const Value prev = fbev::testing::random_const({1, s.Z, s.X}, rng);
    // Ego moved forward 2 cells: content moves toward the near edge (larger row).
    const Value out = align_history(prev, {0.0, 0.0, -2 * s.cell_m}, true, prev, s);
    for (int r = 0; r < s.Z; ++r) {
        for (int c = 0; c < s.X; ++c) {
            const double expect = r >= 2 ? prev.at((r - 2) * s.X + c) : 0.0;
            EXPECT_EQ(out.at(r * s.X + c), expect);
        }
    }
}

TEST(AlignHistory, WarpComposition) {
    const BevGridSpec s = centered(40);
    const Value field = smooth_field(s, 2);
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> ang(-0.15, 0.15), tr(-1.0, 1.0);
    for (int trial = 0; trial < 10; ++trial) {
        const MotionDelta d1{ang(rng), tr(rng), tr(rng)};
        const MotionDelta d2{ang(rng), tr(rng), tr(rng)};
        const Value twice = align_history(align_history(field, d1, true, field, s), d2, true, field, s);
        const Value once = align_history(field, compose(d1, d2), true, field, s);
        // Cells well inside the grid have in-bounds pre-images for both paths.
        double worst = 0.0;
        for (int c = 0; c < 2; ++c) {
            for (int r = 8; r < s.Z - 8; ++r) {
                for (int col = 8; col < s.X - 8; ++col) {
                    const std::size_t k = (static_cast<std::size_t>(c) * s.Z + r) * s.X + col;
                    worst = std::max(worst, std::abs(twice.at(k) - once.at(k)));
                }
            }
        }
        EXPECT_LT(worst, 1e-3) << "trial " << trial;
    }
}

TEST(MemoryBank, FifoAndDetached) {
    MemoryBank bank(2);
    EXPECT_TRUE(bank.read().empty());
    std::mt19937_64 rng(8);
    std::vector<Value> fs;
    for (int t = 0; t < 3; ++t) {
        fs.push_back(fbev::testing::random_param({1, 2, 2}, rng));
        bank.push(fs.back(), {t, 1, 0, 0, 0});
    }
    const auto a = bank.read();
    ASSERT_EQ(a.size(), 2u);
    EXPECT_EQ(a[0].pose.t, 1);
    EXPECT_EQ(a[1].pose.t, 2);
    EXPECT_EQ(a[0].feature.data(), fs[1].data());
    EXPECT_FALSE(a[0].feature.requires_grad());
    const auto b = bank.read();
    ASSERT_EQ(b.size(), 2u);
    EXPECT_EQ(b[1].feature.data(), a[1].feature.data());
    // Later edits of the pushed tensor do not leak into the bank.
    fs[2].mutable_data()[0] += 5.0;
    EXPECT_NE(bank.read()[1].feature.at(0), fs[2].at(0));
}

TEST(Aggregate, ZeroHistoryIdentity) {
    std::mt19937_64 rng(9);
    const Value ref = fbev::testing::random_const({3, 4, 5}, rng);
    std::vector<double> eye(9, 0.0);
    for (int i = 0; i < 3; ++i) eye[i * 3 + i] = 1.0;
    const Value out = aggregate({}, ref, Value::constant({3, 3}, eye), Value::zeros({3}));
    EXPECT_EQ(out.data(), ref.data());
}

TEST(Aggregate, GradCheckWrtPhi) {
    std::mt19937_64 rng(10);
    const Value ref = fbev::testing::random_const({3, 4, 5}, rng);
    const std::vector<Value> hist{fbev::testing::random_const({3, 4, 5}, rng),
                                  fbev::testing::random_const({3, 4, 5}, rng)};
    Value w = fbev::testing::random_param({3, 9}, rng);
    Value b = fbev::testing::random_param({3}, rng);
    auto f = [&] {
        const Value o = aggregate(hist, ref, w, b);
        return fbev::diff::sum_all(fbev::diff::mul(o, o));
    };
    const auto report = fbev::diff::grad_check(f, {{"phi.w", w}, {"phi.b", b}});
    EXPECT_TRUE(report.passed) << report.worst();
}

TEST(Aggregate, ArityMismatchFails) {
    EXPECT_THROW(aggregate({Value::zeros({2, 3, 3})}, Value::zeros({2, 3, 3}), Value::zeros({2, 2}),
                           Value::zeros({2})),
                 fbev::diff::ShapeError);
}

TEST(TemporalFusion, BankEntriesReceiveNoGradient) {
    const BevGridSpec s;
    fbev::model::ParameterSet ps(11);
    TemporalFusion fusion(ps, 2, 4);
    std::mt19937_64 rng(11);
    const Value h1 = fbev::testing::random_param({4, s.Z, s.X}, rng);
    const Value h2 = fbev::testing::random_param({4, s.Z, s.X}, rng);
    const Value ref = fbev::testing::random_param({4, s.Z, s.X}, rng);
    MemoryBank bank(2);
    bank.push(h1, {0, 1, 0.0, 0.0, 0.0});
    bank.push(h2, {1, 1, 0.1, 0.4, 0.02});
    std::vector<Value> aligned;
    const Value out = fusion(ref, {2, 1, 0.1, 0.9, 0.05}, bank.read(), s, &aligned);
    fbev::diff::sum_all(fbev::diff::mul(out, out)).backward();
    EXPECT_FALSE(h1.has_grad());
    EXPECT_FALSE(h2.has_grad());
    for (const auto& a : aligned) EXPECT_FALSE(a.requires_grad());
    double ref_norm = 0.0, phi_norm = 0.0;
    for (double g : ref.grad()) ref_norm += g * g;
    for (double g : fusion.phi_weight().grad()) phi_norm += g * g;
    EXPECT_GT(ref_norm, 0.0);
    EXPECT_GT(phi_norm, 0.0);
}

TEST(TemporalFusion, ShortBankPadsWithReference) {
    const BevGridSpec s;
    fbev::model::ParameterSet ps(12);
    TemporalFusion fusion(ps, 2, 2);
    std::mt19937_64 rng(12);
    const Value ref = fbev::testing::random_const({2, s.Z, s.X}, rng);
    std::vector<Value> aligned;
    fusion(ref, {0, 1, 0, 0, 0}, {}, s, &aligned);
    ASSERT_EQ(aligned.size(), 2u);
    EXPECT_EQ(aligned[0].data(), ref.data());
    EXPECT_EQ(aligned[1].data(), ref.data());
    MemoryBank bank(2);
    const Value h = fbev::testing::random_const({2, s.Z, s.X}, rng);
    bank.push(h, {0, 1, 0, 0, 0});
    fusion(ref, {1, 1, 0, 0, 0}, bank.read(), s, &aligned);
    EXPECT_EQ(aligned[0].data(), ref.data());
    EXPECT_EQ(aligned[1].data(), h.data());
}

TEST(PoseTrace, RoundTrip) {
    std::vector<EgoPose> poses{{0, 3, 1.25, -4.5, 0.125}, {1, 3, 1.0 / 3.0, 2.0, -kPi / 3}};
    std::stringstream ss;
    write_pose_trace(ss, poses);
    const auto back = read_pose_trace(ss);
    ASSERT_EQ(back.size(), 2u);
    for (std::size_t i = 0; i < 2; ++i) {
        EXPECT_EQ(back[i].t, poses[i].t);
        EXPECT_EQ(back[i].scene_id, poses[i].scene_id);
        EXPECT_EQ(back[i].x, poses[i].x);
        EXPECT_EQ(back[i].z, poses[i].z);
        EXPECT_EQ(back[i].yaw, poses[i].yaw);
    }
    std::istringstream bad("0 1 2.0\n");
    EXPECT_THROW(read_pose_trace(bad), std::runtime_error);
}
