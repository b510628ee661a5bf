#pragma once

#include <cstdint>
#include <deque>
#include <iosfwd>
#include <string>
#include <vector>

#include "fbev/geometry/grid.hpp"
#include "fbev/model/params.hpp"

namespace fbev::temporal {

using diff::Value;

// Planar ego pose in a fixed world frame. The ego frame has x to the right
// and z forward; a point p in the ego frame sits at R(yaw) p + (x, z) in the
// world, with R the counter-clockwise rotation (positive yaw turns left).
struct EgoPose {
    int t = 0;
    std::int64_t scene_id = 0;
    double x = 0.0;
    double z = 0.0;
    double yaw = 0.0;
};

// Wraps to (-pi, pi].
double normalize_angle(double a);

// Rigid map from frame (t-i) ego coordinates into frame t ego coordinates:
// p_t = R(rotation) p_prev + (dx, dz).
struct MotionDelta {
    double rotation = 0.0;
    double dx = 0.0;
    double dz = 0.0;

    // Point transform.
    void apply(double x, double z, double& out_x, double& out_z) const;
};

// first: frames a -> b, second: frames b -> c; result a -> c.
MotionDelta compose(const MotionDelta& first, const MotionDelta& second);

MotionDelta relative_motion(const EgoPose& prev, const EgoPose& ref);

// Warps a history grid [C, Z, X] into the reference frame: rotation about the
// camera origin, then translation, as one inverse-mapped bilinear pass with
// zero padding. With a scene mismatch the reference grid is returned as is.
Value align_history(const Value& prev, const MotionDelta& delta, bool scene_match,
                    const Value& ref, const geometry::BevGridSpec& spec);

// Source cell coordinates sampled for every destination cell (row-major).
std::vector<diff::SamplePoint> warp_sample_points(const MotionDelta& delta,
                                                  const geometry::BevGridSpec& spec);

struct BankEntry {
    Value feature;  // detached calibrated BEV feature
    EgoPose pose;
};

// Fixed-capacity FIFO of calibrated BEV features. Entries are stored detached,
// so nothing read from the bank can carry a gradient.
class MemoryBank {
  public:
    explicit MemoryBank(int capacity = 2);

    void push(const Value& feature, const EgoPose& pose);
    // Oldest first; non-destructive.
    std::vector<BankEntry> read() const;
    int capacity() const { return capacity_; }
    std::size_t size() const { return entries_.size(); }
    void clear() { entries_.clear(); }

  private:
    int capacity_;
    std::deque<BankEntry> entries_;
};

// Channel concat (history oldest first, reference last) followed by a 1x1
// convolution. `aligned` must hold exactly the configured history length.
Value aggregate(const std::vector<Value>& aligned, const Value& reference, const Value& phi_weight,
                const Value& phi_bias);

class TemporalFusion {
  public:
    TemporalFusion() = default;
    TemporalFusion(model::ParameterSet& ps, int history, int channels);

    int history() const { return history_; }
    const Value& phi_weight() const { return phi_w_; }
    const Value& phi_bias() const { return phi_b_; }

    // Aligns the newest `history` bank entries to `pose`, pads missing slots
    // with the reference, and aggregates.
    Value operator()(const Value& reference, const EgoPose& pose, const std::vector<BankEntry>& bank,
                     const geometry::BevGridSpec& spec, std::vector<Value>* aligned_out = nullptr) const;

  private:
    int history_ = 0;
    Value phi_w_;  // [C, (history + 1) C]
    Value phi_b_;  // [C]
};

// Pose trace text format: one "t scene_id x z yaw" line per frame.
void write_pose_trace(std::ostream& os, const std::vector<EgoPose>& poses);
std::vector<EgoPose> read_pose_trace(std::istream& is);

}  // namespace fbev::temporal
