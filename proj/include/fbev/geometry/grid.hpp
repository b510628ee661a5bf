#pragma once

#include <stdexcept>
#include <vector>

#include "fbev/diff/ops.hpp"

namespace fbev::geometry {

class GeometryError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

// Pinhole intrinsics. Column coordinates are continuous: u = f * x / z + u0.
struct CameraModel {
    double f = 64.0;
    double u0 = 64.0;
    int image_h = 128;
    int image_w = 128;

    void validate() const;
    // Same camera seen through a level with downsample factor d.
    CameraModel scaled(int d) const;
};

// Metric BEV window in the camera frame: x to the right, z forward.
// Row 0 is the far edge, the last row the near edge; column 0 is leftmost.
struct BevGridSpec {
    int Z = 24;
    int X = 20;
    double cell_m = 0.5;
    double z_min = 1.0;

    void validate() const;
    double z_max() const { return z_min + Z * cell_m; }
    double half_width() const { return 0.5 * X * cell_m; }
    // Metric position of a cell center.
    double row_depth(int row) const { return z_max() - (row + 0.5) * cell_m; }
    double col_x(int col) const { return -half_width() + (col + 0.5) * cell_m; }
    // Fractional cell coordinates of a metric point; inverse of the above.
    double depth_to_row(double z) const { return (z_max() - z) / cell_m - 0.5; }
    double x_to_col(double x) const { return (x + half_width()) / cell_m - 0.5; }
    // The same window at `factor` times the resolution.
    BevGridSpec upsampled(int factor) const;
};

struct LevelSpec {
    int level = 1;   // 1..5
    int factor = 8;  // 2^(level+2)
    int row_begin = 0;
    int row_end = 0;  // exclusive

    int rows() const { return row_end - row_begin; }
};

int level_downsample_factor(int level);

// Splits the BEV rows among `levels` pyramid levels, finest level on the
// farthest rows. The boundary between level i and i+1 sits at the depth where
// one cell spans one level-i pixel at the optical axis, z = f * cell / d_i,
// rounded to whole rows and corrected so every level keeps at least one row.
std::vector<LevelSpec> depth_partition(const BevGridSpec& spec, const CameraModel& cam, int levels);

// Throws when z <= 0 (point behind the camera).
double ground_point_to_column(const CameraModel& cam, double x, double z);

// Level column coordinate sampled for each Cartesian cell of the level's rows,
// row-major over (local row, column). The polar grid's column w sits at
// coordinate w.
std::vector<diff::SamplePoint> polar_sample_points(const CameraModel& cam, int factor,
                                                   const BevGridSpec& spec, const LevelSpec& level);

// A cell is in view when its sample column lies within [0, W_i - 1].
bool column_in_view(double column, int polar_width);

// polar [C, Z_i, W_i] -> cartesian [C, Z_i, X], bilinear along the width of
// the same depth row, zero outside.
diff::Value polar_to_cartesian(const diff::Value& polar, const CameraModel& cam, int factor,
                               const BevGridSpec& spec, const LevelSpec& level);

// Stacks per-level grids along the depth axis in partition order.
diff::Value concat_depth(const std::vector<diff::Value>& grids, const std::vector<LevelSpec>& levels,
                         const BevGridSpec& spec);

}  // namespace fbev::geometry
