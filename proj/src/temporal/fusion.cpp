#include "fbev/temporal/fusion.hpp"

#include <cmath>
#include <iomanip>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "fbev/diff/ops.hpp"

namespace fbev::temporal {

using namespace fbev::diff;

double normalize_angle(double a) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    a = std::fmod(a, two_pi);
    if (a <= -std::numbers::pi) a += two_pi;
    if (a > std::numbers::pi) a -= two_pi;
    return a;
}

void MotionDelta::apply(double x, double z, double& out_x, double& out_z) const {
    const double c = std::cos(rotation);
    const double s = std::sin(rotation);
    out_x = c * x - s * z + dx;
    out_z = s * x + c * z + dz;
}

MotionDelta compose(const MotionDelta& first, const MotionDelta& second) {
    MotionDelta out;
    out.rotation = normalize_angle(first.rotation + second.rotation);
    const double c = std::cos(second.rotation);
    const double s = std::sin(second.rotation);
    out.dx = c * first.dx - s * first.dz + second.dx;
    out.dz = s * first.dx + c * first.dz + second.dz;
    return out;
}

MotionDelta relative_motion(const EgoPose& prev, const EgoPose& ref) {
    // p_ref = R(-yaw_ref) (R(yaw_prev) p_prev + t_prev - t_ref)
    MotionDelta d;
    d.rotation = normalize_angle(prev.yaw - ref.yaw);
    const double c = std::cos(-ref.yaw);
    const double s = std::sin(-ref.yaw);
    const double tx = prev.x - ref.x;
    const double tz = prev.z - ref.z;
    d.dx = c * tx - s * tz;
    d.dz = s * tx + c * tz;
    return d;
}

std::vector<SamplePoint> warp_sample_points(const MotionDelta& delta, const geometry::BevGridSpec& spec) {
    // Inverse map: p_prev = R(-r) (p_ref - m)
    const double c = std::cos(delta.rotation);
    const double s = std::sin(delta.rotation);
    auto snap = [](double v) {
        const double r = std::round(v);
        return std::abs(v - r) < 1e-9 ? r : v;
    };
    std::vector<SamplePoint> pts;
    pts.reserve(static_cast<std::size_t>(spec.Z) * spec.X);
    for (int r = 0; r < spec.Z; ++r) {
        for (int col = 0; col < spec.X; ++col) {
            const double x = spec.col_x(col) - delta.dx;
            const double z = spec.row_depth(r) - delta.dz;
            const double px = c * x + s * z;
            const double pz = -s * x + c * z;
            pts.push_back({snap(spec.depth_to_row(pz)), snap(spec.x_to_col(px))});
        }
    }
    return pts;
}

Value align_history(const Value& prev, const MotionDelta& delta, bool scene_match, const Value& ref,
                    const geometry::BevGridSpec& spec) {
    if (prev.shape() != ref.shape()) shape_fail("align_history", prev.shape(), ref.shape());
    if (prev.rank() != 3 || prev.dim(1) != spec.Z || prev.dim(2) != spec.X) {
        shape_fail("align_history", prev.shape(), {spec.Z, spec.X}, "grid does not match the BEV spec");
    }
    if (!scene_match) return ref;
    const auto pts = warp_sample_points(delta, spec);
    return bilinear_sample(prev, pts, spec.Z, spec.X);
}

MemoryBank::MemoryBank(int capacity) : capacity_(capacity) {
    if (capacity < 0) throw std::invalid_argument("memory bank capacity must be >= 0");
}

void MemoryBank::push(const Value& feature, const EgoPose& pose) {
    if (capacity_ == 0) return;
    entries_.push_back({feature.detach(), pose});
    while (static_cast<int>(entries_.size()) > capacity_) entries_.pop_front();
}

std::vector<BankEntry> MemoryBank::read() const {
    std::vector<BankEntry> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back({e.feature.detach(), e.pose});
    return out;
}

Value aggregate(const std::vector<Value>& aligned, const Value& reference, const Value& phi_weight,
                const Value& phi_bias) {
    const int C = reference.dim(0);
    const int expected = static_cast<int>(aligned.size() + 1) * C;
    if (phi_weight.rank() != 2 || phi_weight.dim(1) != expected) {
        shape_fail("aggregate", phi_weight.shape(), {C, expected},
                   std::to_string(aligned.size()) + " history grids plus the reference");
    }
    for (const auto& a : aligned) {
        if (a.shape() != reference.shape()) shape_fail("aggregate", a.shape(), reference.shape());
    }
    std::vector<Value> parts(aligned.begin(), aligned.end());
    parts.push_back(reference);
    const Value stacked = parts.size() == 1 ? reference : concat(parts, 0);
    return conv1x1(stacked, phi_weight, phi_bias);
}

TemporalFusion::TemporalFusion(model::ParameterSet& ps, int history, int channels) : history_(history) {
    if (history < 0) throw std::invalid_argument("temporal fusion: history length must be >= 0");
    const int in = (history + 1) * channels;
    phi_w_ = ps.uniform("fusion.phi.w", {channels, in}, 1.0 / std::sqrt(static_cast<double>(in)));
    phi_b_ = ps.constant("fusion.phi.b", {channels}, 0.0);
}

Value TemporalFusion::operator()(const Value& reference, const EgoPose& pose,
                                 const std::vector<BankEntry>& bank, const geometry::BevGridSpec& spec,
                                 std::vector<Value>* aligned_out) const {
    std::vector<Value> aligned;
    const int available = std::min<int>(history_, static_cast<int>(bank.size()));
    for (int k = 0; k < history_ - available; ++k) aligned.push_back(reference);
    for (std::size_t k = bank.size() - available; k < bank.size(); ++k) {
        const auto& e = bank[k];
        aligned.push_back(align_history(e.feature.detach(), relative_motion(e.pose, pose),
                                        e.pose.scene_id == pose.scene_id, reference, spec));
    }
    if (aligned_out) *aligned_out = aligned;
    return aggregate(aligned, reference, phi_w_, phi_b_);
}

void write_pose_trace(std::ostream& os, const std::vector<EgoPose>& poses) {
    os << std::setprecision(17);
    for (const auto& p : poses) {
        os << p.t << ' ' << p.scene_id << ' ' << p.x << ' ' << p.z << ' ' << p.yaw << '\n';
    }
}

std::vector<EgoPose> read_pose_trace(std::istream& is) {
    std::vector<EgoPose> poses;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        EgoPose p;
        if (!(ls >> p.t >> p.scene_id >> p.x >> p.z >> p.yaw)) {
            throw std::runtime_error("pose trace line " + std::to_string(lineno) +
                                     ": expected 't scene_id x z yaw'");
        }
        p.yaw = normalize_angle(p.yaw);
        poses.push_back(p);
    }
    return poses;
}

}  // namespace fbev::temporal
