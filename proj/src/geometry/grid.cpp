#include "fbev/geometry/grid.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fbev/diff/ops.hpp"

namespace fbev::geometry {

void CameraModel::validate() const {
    if (!(f > 0.0)) throw GeometryError("camera: focal length must be positive");
    if (image_h <= 0 || image_w <= 0) throw GeometryError("camera: image size must be positive");
    if (!(u0 >= 0.0 && u0 < image_w)) {
        throw GeometryError("camera: u0 = " + std::to_string(u0) + " outside [0, " +
                            std::to_string(image_w) + ")");
    }
}

CameraModel CameraModel::scaled(int d) const {
    CameraModel c = *this;
    c.f = f / d;
    c.u0 = u0 / d;
    c.image_h = image_h / d;
    c.image_w = image_w / d;
    return c;
}

void BevGridSpec::validate() const {
    if (Z <= 0 || X <= 0) throw GeometryError("bev grid: Z and X must be positive");
    if (!(cell_m > 0.0)) throw GeometryError("bev grid: cell size must be positive");
}

BevGridSpec BevGridSpec::upsampled(int factor) const {
    BevGridSpec s = *this;
    s.Z = Z * factor;
    s.X = X * factor;
    s.cell_m = cell_m / factor;
    return s;
}

int level_downsample_factor(int level) {
    if (level < 1 || level > 5) {
        throw GeometryError("invalid pyramid level " + std::to_string(level) + " (expected 1..5)");
    }
    return 1 << (level + 2);
}

std::vector<LevelSpec> depth_partition(const BevGridSpec& spec, const CameraModel& cam, int levels) {
    spec.validate();
    cam.validate();
    if (levels < 1 || levels > 5) {
        throw GeometryError("depth_partition: level count " + std::to_string(levels) +
                            " outside 1..5");
    }
    if (spec.Z < levels) {
        throw GeometryError("depth_partition: " + std::to_string(spec.Z) +
                            " depth rows cannot give each of " + std::to_string(levels) +
                            " levels a row");
    }
    // cut[i] = first row of level i+1 (rows counted from the far edge)
    std::vector<int> cut(levels + 1, 0);
    cut[levels] = spec.Z;
    for (int i = 1; i < levels; ++i) {
        const double z = std::clamp(cam.f * spec.cell_m / level_downsample_factor(i), spec.z_min,
                                    spec.z_max());
        const int row = static_cast<int>(std::lround((spec.z_max() - z) / spec.cell_m));
        cut[i] = std::clamp(row, cut[i - 1] + 1, spec.Z - (levels - i));
    }
    std::vector<LevelSpec> out;
    for (int i = 1; i <= levels; ++i) {
        out.push_back({i, level_downsample_factor(i), cut[i - 1], cut[i]});
    }
    return out;
}

double ground_point_to_column(const CameraModel& cam, double x, double z) {
    if (!(z > 0.0)) {
        throw GeometryError("ground_point_to_column: point at z = " + std::to_string(z) +
                            " is behind the camera");
    }
    return cam.f * x / z + cam.u0;
}

std::vector<diff::SamplePoint> polar_sample_points(const CameraModel& cam, int factor,
                                                   const BevGridSpec& spec, const LevelSpec& level) {
    const CameraModel lc = cam.scaled(factor);
    std::vector<diff::SamplePoint> pts;
    pts.reserve(static_cast<std::size_t>(level.rows()) * spec.X);
    for (int r = 0; r < level.rows(); ++r) {
        const double z = spec.row_depth(level.row_begin + r);
        for (int c = 0; c < spec.X; ++c) {
            // Same formula as ground_point_to_column, with scaled intrinsics;
            // rows behind the camera sample nothing.
            const double u = z > 0.0 ? lc.f * spec.col_x(c) / z + lc.u0 : NAN;
            pts.push_back({static_cast<double>(r), u});
        }
    }
    return pts;
}

bool column_in_view(double column, int polar_width) {
    return column >= 0.0 && column <= polar_width - 1;
}

diff::Value polar_to_cartesian(const diff::Value& polar, const CameraModel& cam, int factor,
                               const BevGridSpec& spec, const LevelSpec& level) {
    if (polar.rank() != 3 || polar.dim(1) != level.rows()) {
        diff::shape_fail("polar_to_cartesian", polar.shape(), {level.rows()},
                         "polar depth rows must equal the level's row count");
    }
    const auto pts = polar_sample_points(cam, factor, spec, level);
    return diff::bilinear_sample(polar, pts, level.rows(), spec.X);
}

diff::Value concat_depth(const std::vector<diff::Value>& grids, const std::vector<LevelSpec>& levels,
                         const BevGridSpec& spec) {
    if (grids.size() != levels.size() || grids.empty()) {
        throw diff::ShapeError("concat_depth: " + std::to_string(grids.size()) + " grids for " +
                               std::to_string(levels.size()) + " levels");
    }
    int expected = 0;
    for (std::size_t i = 0; i < grids.size(); ++i) {
        if (levels[i].row_begin != expected) {
            throw diff::ShapeError("concat_depth: level " + std::to_string(levels[i].level) +
                                   " starts at row " + std::to_string(levels[i].row_begin) +
                                   ", expected " + std::to_string(expected) + " (gap or overlap)");
        }
        if (grids[i].rank() != 3 || grids[i].dim(1) != levels[i].rows() || grids[i].dim(2) != spec.X) {
            diff::shape_fail("concat_depth", grids[i].shape(), {levels[i].rows(), spec.X},
                             "grid does not match its level rows");
        }
        expected = levels[i].row_end;
    }
    if (expected != spec.Z) {
        throw diff::ShapeError("concat_depth: levels cover " + std::to_string(expected) + " of " +
                               std::to_string(spec.Z) + " rows");
    }
    return grids.size() == 1 ? grids[0] : diff::concat(grids, 1);
}

}  // namespace fbev::geometry
