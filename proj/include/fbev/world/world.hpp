#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "fbev/geometry/grid.hpp"
#include "fbev/temporal/fusion.hpp"

namespace fbev::world {

using temporal::EgoPose;

enum class ClassKind { Drivable, Crossing, Car, Pedestrian };

std::string class_name(ClassKind k);
ClassKind parse_class(const std::string& name);
bool is_static_class(ClassKind k);

using Rgb = std::array<std::uint8_t, 3>;

// Oriented rectangle on the ground plane. A local point p maps to the world
// as R(yaw) p + (cx, cz); half_w spans local x, half_l local z.
struct Rect {
    double cx = 0.0;
    double cz = 0.0;
    double yaw = 0.0;
    double half_w = 0.5;
    double half_l = 0.5;

    bool contains(double x, double z) const;
    void to_local(double x, double z, double& lx, double& lz) const;
    double area() const { return 4.0 * half_w * half_l; }
    // True when the open segment from (x0, z0) to (x1, z1) crosses the rectangle.
    bool intersects_segment(double x0, double z0, double x1, double z1) const;
};

struct StaticRegion {
    ClassKind kind = ClassKind::Drivable;
    Rect rect;
};

struct Agent {
    ClassKind kind = ClassKind::Car;
    Rect footprint;    // at frame 0
    double height = 1.5;
    double vx = 0.0;   // world displacement per frame
    double vz = 0.0;

    Rect footprint_at(int t) const;
};

struct RoutePoint {
    double x = 0.0;
    double z = 0.0;
    double yaw = 0.0;
};

struct WorldConfig {
    std::vector<ClassKind> classes{ClassKind::Drivable, ClassKind::Crossing, ClassKind::Car,
                                   ClassKind::Pedestrian};
    double road_width_min = 8.0;
    double road_width_max = 12.0;
    double route_length = 90.0;     // meters ahead of the start
    double route_back = 20.0;       // meters behind the start
    double max_curvature = 0.03;    // rad per meter
    bool straight_road = false;
    double side_road_prob = 0.5;
    int crossings_min = 0;
    int crossings_max = 2;
    int cars_min = 2;
    int cars_max = 6;
    int pedestrians_min = 0;
    int pedestrians_max = 4;
    double car_speed_max = 0.8;          // meters per frame
    double pedestrian_speed_max = 0.25;  // meters per frame
    bool lateral_agents = false;  // agents cross the ego route instead of following it
    double agent_zone = 45.0;     // agents are placed within this arclength of the start

    void validate() const;
    int num_classes() const { return static_cast<int>(classes.size()); }
};

struct WorldScene {
    std::int64_t scene_id = 0;
    double road_width = 10.0;
    std::vector<RoutePoint> route;  // 0.5 m spacing, index route_start at the ego start
    int route_start = 0;
    std::vector<StaticRegion> layout;
    std::vector<Agent> agents;
};

WorldScene generate_scene(std::uint64_t seed, const WorldConfig& cfg);

enum class MotionModel { Static, Straight, Follow };
MotionModel parse_motion_model(const std::string& name);
std::string motion_model_name(MotionModel m);

struct TrajectoryConfig {
    MotionModel model = MotionModel::Follow;
    double speed_min = 0.5;  // meters per frame
    double speed_max = 1.5;
    double lateral_jitter = 0.3;  // meters, amplitude of a slow lateral drift
};

inline constexpr double kMaxStep = 2.0;      // meters per frame
inline constexpr double kMaxYawRate = 0.2;   // rad per frame

std::vector<EgoPose> simulate_trajectory(const WorldScene& scene, int length, const TrajectoryConfig& cfg,
                                         std::uint64_t seed);

// Pinhole camera used for rendering: the geometry camera plus the vertical
// principal point and the mounting height above the ground.
struct RenderCamera {
    geometry::CameraModel cam;
    double v0 = 28.0;
    double height = 1.5;
};

// Palette for rendering and map panels.
Rgb class_color(ClassKind k);
inline constexpr Rgb kSkyColor{150, 190, 235};
inline constexpr Rgb kGroundColor{96, 128, 72};

struct Image {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> rgb;  // row-major, interleaved

    Rgb pixel(int row, int col) const;
    // [3, H, W] in [0, 1].
    std::vector<double> planar() const;
};

// Per-pixel label written alongside the render: kLabelSky, kLabelGround, or
// the ClassKind index painted at the pixel.
inline constexpr int kLabelSky = -2;
inline constexpr int kLabelGround = -1;

Image render_pv(const WorldScene& scene, const EgoPose& pose, const RenderCamera& rc,
                std::vector<int>* labels = nullptr);

// Class membership of one world point at frame t, using the scene's own
// layout precedence (used by the renderer and the rasterizer alike).
bool world_point_has(const WorldScene& scene, ClassKind k, double wx, double wz, int t);

struct GroundTruth {
    int classes = 0;
    int rows = 0;
    int cols = 0;
    std::vector<double> maps;        // [N_c, Z, X] binary
    std::vector<double> visibility;  // [Z, X], 1 visible
};

GroundTruth make_gt(const WorldScene& scene, const EgoPose& pose, const geometry::BevGridSpec& spec,
                    const WorldConfig& cfg);

void ego_to_world(const EgoPose& pose, double x, double z, double& wx, double& wz);
void world_to_ego(const EgoPose& pose, double wx, double wz, double& x, double& z);

}  // namespace fbev::world
