#include "fbev/world/world.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>

namespace fbev::world {

namespace {

constexpr double kRouteStep = 0.5;

Rgb shade(Rgb c, double s) {
    return {static_cast<std::uint8_t>(std::lround(c[0] * s)), static_cast<std::uint8_t>(std::lround(c[1] * s)),
            static_cast<std::uint8_t>(std::lround(c[2] * s))};
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

int uniform_int(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

// Route point at arclength s (meters, relative to the ego start), clamped to
// the route and linearly interpolated.
RoutePoint route_at(const WorldScene& scene, double s) {
    const double idx = std::clamp(scene.route_start + s / kRouteStep, 0.0,
                                  static_cast<double>(scene.route.size() - 1));
    const auto i0 = static_cast<std::size_t>(idx);
    const std::size_t i1 = std::min(i0 + 1, scene.route.size() - 1);
    const double a = idx - static_cast<double>(i0);
    const auto& p = scene.route[i0];
    const auto& q = scene.route[i1];
    return {p.x + a * (q.x - p.x), p.z + a * (q.z - p.z), p.yaw + a * (q.yaw - p.yaw)};
}

// World point at lateral offset `o` (meters to the right of travel) from a route point.
void offset_point(const RoutePoint& p, double o, double& x, double& z) {
    // The travel direction is R(yaw) (0, 1); the right-hand side is R(yaw) (1, 0).
    x = p.x + o * std::cos(p.yaw);
    z = p.z + o * std::sin(p.yaw);
}

bool overlaps_any(const Rect& r, const std::vector<Agent>& agents) {
    const double rr = std::hypot(r.half_w, r.half_l);
    for (const auto& a : agents) {
        const double ra = std::hypot(a.footprint.half_w, a.footprint.half_l);
        if (std::hypot(r.cx - a.footprint.cx, r.cz - a.footprint.cz) < rr + ra + 0.3) return true;
    }
    return false;
}

}  // namespace

std::string class_name(ClassKind k) {
    switch (k) {
        case ClassKind::Drivable: return "drivable";
        case ClassKind::Crossing: return "crossing";
        case ClassKind::Car: return "car";
        case ClassKind::Pedestrian: return "pedestrian";
    }
    return "unknown";
}

ClassKind parse_class(const std::string& name) {
    for (auto k : {ClassKind::Drivable, ClassKind::Crossing, ClassKind::Car, ClassKind::Pedestrian}) {
        if (class_name(k) == name) return k;
    }
    throw std::invalid_argument("unknown class '" + name + "' (expected drivable, crossing, car, pedestrian)");
}

bool is_static_class(ClassKind k) { return k == ClassKind::Drivable || k == ClassKind::Crossing; }

Rgb class_color(ClassKind k) {
    switch (k) {
        case ClassKind::Drivable: return {70, 70, 76};
        case ClassKind::Crossing: return {225, 225, 215};
        case ClassKind::Car: return {200, 40, 40};
        case ClassKind::Pedestrian: return {240, 200, 30};
    }
    return {0, 0, 0};
}

void Rect::to_local(double x, double z, double& lx, double& lz) const {
    const double c = std::cos(yaw), s = std::sin(yaw);
    const double dx = x - cx, dz = z - cz;
    lx = c * dx + s * dz;
    lz = -s * dx + c * dz;
}

bool Rect::contains(double x, double z) const {
    double lx, lz;
    to_local(x, z, lx, lz);
    return std::abs(lx) <= half_w && std::abs(lz) <= half_l;
}

bool Rect::intersects_segment(double x0, double z0, double x1, double z1) const {
    double ax, az, bx, bz;
    to_local(x0, z0, ax, az);
    to_local(x1, z1, bx, bz);
    double t0 = 0.0, t1 = 1.0;
    const double d[2] = {bx - ax, bz - az};
    const double o[2] = {ax, az};
    const double h[2] = {half_w, half_l};
    for (int k = 0; k < 2; ++k) {
        if (d[k] == 0.0) {
            if (std::abs(o[k]) > h[k]) return false;
            continue;
        }
        double ta = (-h[k] - o[k]) / d[k];
        double tb = (h[k] - o[k]) / d[k];
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
        if (t0 >= t1) return false;
    }
    return true;
}

Rect Agent::footprint_at(int t) const {
    Rect r = footprint;
    r.cx += t * vx;
    r.cz += t * vz;
    return r;
}

void WorldConfig::validate() const {
    if (classes.empty()) throw std::invalid_argument("world: at least one class is required");
    if (!(road_width_min > 2.0 && road_width_max >= road_width_min)) {
        throw std::invalid_argument("world: road width range must satisfy 2 < min <= max");
    }
    if (!(route_length > 0.0) || route_back < 0.0) throw std::invalid_argument("world: route has zero length");
    if (max_curvature < 0.0 || max_curvature * kMaxStep > kMaxYawRate) {
        throw std::invalid_argument("world: max_curvature must be in [0, 0.1] rad/m");
    }
    if (crossings_min < 0 || crossings_max < crossings_min || cars_min < 0 || cars_max < cars_min ||
        pedestrians_min < 0 || pedestrians_max < pedestrians_min) {
        throw std::invalid_argument("world: agent and crossing counts need 0 <= min <= max");
    }
    if (!(agent_zone > 0.0)) throw std::invalid_argument("world: agent_zone must be positive");
}

WorldScene generate_scene(std::uint64_t seed, const WorldConfig& cfg) {
    cfg.validate();
    std::mt19937_64 rng(seed);
    WorldScene scene;
    scene.scene_id = static_cast<std::int64_t>(seed);
    scene.road_width = uniform(rng, cfg.road_width_min, cfg.road_width_max);
    const double hw = 0.5 * scene.road_width;

    // Straight run-up behind the start, then a piecewise-constant-curvature road.
    const int back = static_cast<int>(std::lround(cfg.route_back / kRouteStep));
    for (int i = back; i > 0; --i) scene.route.push_back({0.0, -i * kRouteStep, 0.0});
    scene.route_start = static_cast<int>(scene.route.size());
    RoutePoint p{0.0, 0.0, 0.0};
    scene.route.push_back(p);
    const int ahead = static_cast<int>(std::lround(cfg.route_length / kRouteStep));
    const int piece = static_cast<int>(std::lround(10.0 / kRouteStep));
    double kappa = 0.0;
    for (int i = 1; i <= ahead; ++i) {
        if ((i - 1) % piece == 0) {
            kappa = cfg.straight_road ? 0.0 : uniform(rng, -cfg.max_curvature, cfg.max_curvature);
        }
        const double mid = p.yaw + 0.5 * kappa * kRouteStep;
        p.x -= kRouteStep * std::sin(mid);
        p.z += kRouteStep * std::cos(mid);
        p.yaw += kappa * kRouteStep;
        scene.route.push_back(p);
    }

    // Road surface: overlapping rectangles along 4 m chords of the route.
    const int chord = static_cast<int>(std::lround(4.0 / kRouteStep));
    for (std::size_t i = 0; i + 1 < scene.route.size(); i += chord) {
        const std::size_t j = std::min(i + chord, scene.route.size() - 1);
        const auto& a = scene.route[i];
        const auto& b = scene.route[j];
        const double len = std::hypot(b.x - a.x, b.z - a.z);
        Rect r{0.5 * (a.x + b.x), 0.5 * (a.z + b.z), std::atan2(-(b.x - a.x), b.z - a.z), hw, 0.5 * len + 1.0};
        scene.layout.push_back({ClassKind::Drivable, r});
    }
    if (uniform(rng, 0.0, 1.0) < cfg.side_road_prob) {
        const RoutePoint q = route_at(scene, uniform(rng, 8.0, 40.0));
        scene.layout.push_back(
            {ClassKind::Drivable, {q.x, q.z, q.yaw + 0.5 * std::numbers::pi, uniform(rng, 2.5, 4.0), 40.0}});
    }
    const int crossings = uniform_int(rng, cfg.crossings_min, cfg.crossings_max);
    for (int k = 0; k < crossings; ++k) {
        const RoutePoint q = route_at(scene, uniform(rng, 3.0, 40.0));
        scene.layout.push_back({ClassKind::Crossing, {q.x, q.z, q.yaw, hw, uniform(rng, 1.5, 2.5)}});
    }

    const int cars = uniform_int(rng, cfg.cars_min, cfg.cars_max);
    const int peds = uniform_int(rng, cfg.pedestrians_min, cfg.pedestrians_max);
    for (int k = 0; k < cars + peds; ++k) {
        const bool car = k < cars;
        Agent a;
        a.kind = car ? ClassKind::Car : ClassKind::Pedestrian;
        a.height = car ? uniform(rng, 1.5, 1.9) : uniform(rng, 1.6, 1.9);
        const double aw = car ? uniform(rng, 0.85, 1.0) : uniform(rng, 0.25, 0.35);
        const double al = car ? uniform(rng, 2.0, 2.4) : uniform(rng, 0.25, 0.35);
        const double lateral_room = std::max(0.0, hw - aw - 0.2);
        for (int attempt = 0; attempt < 60; ++attempt) {
            const double s = cfg.lateral_agents ? uniform(rng, 4.0, std::min(cfg.agent_zone, 14.0))
                                                : uniform(rng, -8.0, cfg.agent_zone);
            const RoutePoint q = route_at(scene, s);
            double o;
            double heading = q.yaw;
            double speed;
            if (car && !cfg.lateral_agents) {
                // Keep clear of the ego lane; pick a side and stay inside the road.
                const double lo = std::min(aw + 1.3, lateral_room);
                o = uniform(rng, lo, std::max(lo, lateral_room)) * (uniform(rng, 0.0, 1.0) < 0.5 ? -1.0 : 1.0);
                if (uniform(rng, 0.0, 1.0) < 0.5) heading += std::numbers::pi;
                speed = uniform(rng, 0.0, cfg.car_speed_max);
            } else {
                o = uniform(rng, -lateral_room, lateral_room);
                heading += 0.5 * std::numbers::pi * (uniform(rng, 0.0, 1.0) < 0.5 ? -1.0 : 1.0);
                speed = uniform(rng, 0.0, car ? cfg.car_speed_max : cfg.pedestrian_speed_max);
            }
            double x, z;
            offset_point(q, o, x, z);
            a.footprint = {x, z, heading, aw, al};
            a.vx = -speed * std::sin(heading);
            a.vz = speed * std::cos(heading);
            if (!overlaps_any(a.footprint, scene.agents)) break;
        }
        scene.agents.push_back(a);
    }
    return scene;
}

MotionModel parse_motion_model(const std::string& name) {
    if (name == "static") return MotionModel::Static;
    if (name == "straight") return MotionModel::Straight;
    if (name == "follow") return MotionModel::Follow;
    throw std::invalid_argument("unknown motion model '" + name + "' (expected static, straight, follow)");
}

std::string motion_model_name(MotionModel m) {
    switch (m) {
        case MotionModel::Static: return "static";
        case MotionModel::Straight: return "straight";
        case MotionModel::Follow: return "follow";
    }
    return "unknown";
}

std::vector<EgoPose> simulate_trajectory(const WorldScene& scene, int length, const TrajectoryConfig& cfg,
                                         std::uint64_t seed) {
    if (length < 1) throw std::invalid_argument("trajectory length must be >= 1");
    if (cfg.speed_min < 0.0 || cfg.speed_max < cfg.speed_min || cfg.speed_max > kMaxStep - 0.1) {
        throw std::invalid_argument("trajectory speed range must satisfy 0 <= min <= max < 1.9 m/frame");
    }
    std::mt19937_64 rng(seed);
    const double speed = uniform(rng, cfg.speed_min, cfg.speed_max);
    const double amp = uniform(rng, 0.0, cfg.lateral_jitter);
    const double period = uniform(rng, 20.0, 40.0);
    const double phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    const RoutePoint start = route_at(scene, 0.0);
    std::vector<EgoPose> poses;
    for (int t = 0; t < length; ++t) {
        EgoPose pose;
        pose.t = t;
        pose.scene_id = scene.scene_id;
        switch (cfg.model) {
            case MotionModel::Static:
                pose.x = start.x;
                pose.z = start.z;
                pose.yaw = start.yaw;
                break;
            case MotionModel::Straight:
                pose.x = start.x - t * speed * std::sin(start.yaw);
                pose.z = start.z + t * speed * std::cos(start.yaw);
                pose.yaw = start.yaw;
                break;
            case MotionModel::Follow: {
                const RoutePoint q = route_at(scene, t * speed);
                offset_point(q, amp * std::sin(2.0 * std::numbers::pi * t / period + phase), pose.x, pose.z);
                pose.yaw = q.yaw;
                break;
            }
        }
        pose.yaw = temporal::normalize_angle(pose.yaw);
        poses.push_back(pose);
    }
    return poses;
}

void ego_to_world(const EgoPose& pose, double x, double z, double& wx, double& wz) {
    const double c = std::cos(pose.yaw), s = std::sin(pose.yaw);
    wx = c * x - s * z + pose.x;
    wz = s * x + c * z + pose.z;
}

void world_to_ego(const EgoPose& pose, double wx, double wz, double& x, double& z) {
    const double c = std::cos(pose.yaw), s = std::sin(pose.yaw);
    const double dx = wx - pose.x, dz = wz - pose.z;
    x = c * dx + s * dz;
    z = -s * dx + c * dz;
}

bool world_point_has(const WorldScene& scene, ClassKind k, double wx, double wz, int t) {
    if (is_static_class(k)) {
        for (const auto& r : scene.layout) {
            // Crossings lie on the road and count as drivable too.
            const bool match = r.kind == k || (k == ClassKind::Drivable && r.kind == ClassKind::Crossing);
            if (match && r.rect.contains(wx, wz)) return true;
        }
        return false;
    }
    for (const auto& a : scene.agents) {
        if (a.kind == k && a.footprint_at(t).contains(wx, wz)) return true;
    }
    return false;
}

Rgb Image::pixel(int row, int col) const {
    const std::size_t i = (static_cast<std::size_t>(row) * width + col) * 3;
    return {rgb[i], rgb[i + 1], rgb[i + 2]};
}

std::vector<double> Image::planar() const {
    const std::size_t plane = static_cast<std::size_t>(height) * width;
    std::vector<double> out(3 * plane);
    for (std::size_t i = 0; i < plane; ++i) {
        for (int c = 0; c < 3; ++c) out[c * plane + i] = rgb[i * 3 + c] / 255.0;
    }
    return out;
}

Image render_pv(const WorldScene& scene, const EgoPose& pose, const RenderCamera& rc, std::vector<int>* labels) {
    const auto& cam = rc.cam;
    Image img;
    img.height = cam.image_h;
    img.width = cam.image_w;
    img.rgb.resize(static_cast<std::size_t>(img.height) * img.width * 3);
    if (labels) labels->assign(static_cast<std::size_t>(img.height) * img.width, kLabelSky);
    const double c = std::cos(pose.yaw), s = std::sin(pose.yaw);

    std::vector<Rect> boxes;
    for (const auto& a : scene.agents) boxes.push_back(a.footprint_at(pose.t));

    for (int v = 0; v < img.height; ++v) {
        const double dy = -(v - rc.v0) / cam.f;
        for (int u = 0; u < img.width; ++u) {
            const double ex = (u - cam.u0) / cam.f;
            // World-frame horizontal direction for a unit forward step.
            const double wdx = c * ex - s;
            const double wdz = s * ex + c;
            double best = std::numeric_limits<double>::infinity();
            if (dy < 0.0) best = rc.height / -dy;
            int hit = -1;
            int face = 0;
            for (std::size_t b = 0; b < boxes.size(); ++b) {
                const Rect& r = boxes[b];
                double ox, oz;
                r.to_local(pose.x, pose.z, ox, oz);
                const double rcs = std::cos(r.yaw), rsn = std::sin(r.yaw);
                const double ldx = rcs * wdx + rsn * wdz;
                const double ldz = -rsn * wdx + rcs * wdz;
                const double o[3] = {ox, rc.height, oz};
                const double d[3] = {ldx, dy, ldz};
                const double lo[3] = {-r.half_w, 0.0, -r.half_l};
                const double hi[3] = {r.half_w, scene.agents[b].height, r.half_l};
                double t0 = -std::numeric_limits<double>::infinity();
                double t1 = std::numeric_limits<double>::infinity();
                int entry = 0;
                bool miss = false;
                for (int k = 0; k < 3 && !miss; ++k) {
                    if (d[k] == 0.0) {
                        miss = o[k] < lo[k] || o[k] > hi[k];
                        continue;
                    }
                    double ta = (lo[k] - o[k]) / d[k];
                    double tb = (hi[k] - o[k]) / d[k];
                    if (ta > tb) std::swap(ta, tb);
                    if (ta > t0) {
                        t0 = ta;
                        entry = k;
                    }
                    t1 = std::min(t1, tb);
                    miss = t0 > t1;
                }
                // A camera inside the box (t0 <= 0) ignores it.
                if (miss || t0 <= 0.0 || t0 >= best) continue;
                best = t0;
                hit = static_cast<int>(b);
                face = entry;
            }
            Rgb color;
            int label;
            if (hit >= 0) {
                const ClassKind k = scene.agents[static_cast<std::size_t>(hit)].kind;
                color = shade(class_color(k), face == 1 ? 1.0 : (face == 0 ? 0.82 : 0.66));
                label = static_cast<int>(k);
            } else if (std::isfinite(best)) {
                const double gx = pose.x + best * wdx;
                const double gz = pose.z + best * wdz;
                if (world_point_has(scene, ClassKind::Crossing, gx, gz, pose.t)) {
                    color = class_color(ClassKind::Crossing);
                    label = static_cast<int>(ClassKind::Crossing);
                } else if (world_point_has(scene, ClassKind::Drivable, gx, gz, pose.t)) {
                    color = class_color(ClassKind::Drivable);
                    label = static_cast<int>(ClassKind::Drivable);
                } else {
                    color = kGroundColor;
                    label = kLabelGround;
                }
            } else {
                color = kSkyColor;
                label = kLabelSky;
            }
            const std::size_t i = static_cast<std::size_t>(v) * img.width + u;
            img.rgb[i * 3] = color[0];
            img.rgb[i * 3 + 1] = color[1];
            img.rgb[i * 3 + 2] = color[2];
            if (labels) (*labels)[i] = label;
        }
    }
    return img;
}

GroundTruth make_gt(const WorldScene& scene, const EgoPose& pose, const geometry::BevGridSpec& spec,
                    const WorldConfig& cfg) {
    spec.validate();
    GroundTruth gt;
    gt.classes = cfg.num_classes();
    gt.rows = spec.Z;
    gt.cols = spec.X;
    const std::size_t plane = static_cast<std::size_t>(spec.Z) * spec.X;
    gt.maps.assign(plane * gt.classes, 0.0);
    gt.visibility.assign(plane, 1.0);

    std::vector<Rect> occluders;
    for (const auto& a : scene.agents) {
        const Rect r = a.footprint_at(pose.t);
        if (!r.contains(pose.x, pose.z)) occluders.push_back(r);
    }
    for (int row = 0; row < spec.Z; ++row) {
        for (int col = 0; col < spec.X; ++col) {
            double wx, wz;
            ego_to_world(pose, spec.col_x(col), spec.row_depth(row), wx, wz);
            const std::size_t i = static_cast<std::size_t>(row) * spec.X + col;
            for (int k = 0; k < gt.classes; ++k) {
                if (world_point_has(scene, cfg.classes[static_cast<std::size_t>(k)], wx, wz, pose.t)) {
                    gt.maps[k * plane + i] = 1.0;
                }
            }
            for (const auto& r : occluders) {
                if (!r.contains(wx, wz) && r.intersects_segment(pose.x, pose.z, wx, wz)) {
                    gt.visibility[i] = 0.0;
                    break;
                }
            }
        }
    }
    return gt;
}

}  // namespace fbev::world
