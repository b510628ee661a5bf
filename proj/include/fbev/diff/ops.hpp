#pragma once

#include <span>
#include <vector>

#include "fbev/diff/value.hpp"

// Differentiable operations. Every op validates shapes and throws ShapeError
// naming the op and the offending shapes. No implicit broadcasting: the
// only broadcast forms are the explicit *_trailing ops and the shared right
// operand of matmul.
namespace fbev::diff {

// a [..., M, K] x b [K, N]          -> [..., M, N]  (b shared across the batch)
// a [B..., M, K] x b [B..., K, N]   -> [B..., M, N]
Value matmul(const Value& a, const Value& b);

Value add(const Value& a, const Value& b);
Value sub(const Value& a, const Value& b);
Value mul(const Value& a, const Value& b);
Value div(const Value& a, const Value& b);
Value scale(const Value& x, double s);
Value add_scalar(const Value& x, double s);
// y's shape must equal the trailing dims of x; y is repeated over the rest.
Value add_trailing(const Value& x, const Value& y);

Value relu(const Value& x);
Value sigmoid(const Value& x);
Value log(const Value& x);
// Gradient passes only where lo < x < hi.
Value clamp(const Value& x, double lo, double hi);

Value softmax(const Value& x, int axis);
// Normalizes along `axis`; gamma/beta (length dim(axis)) are optional.
Value layer_norm(const Value& x, int axis, const Value& gamma = {}, const Value& beta = {},
                 double eps = 1e-5);

Value concat(const std::vector<Value>& xs, int axis);
Value reshape(const Value& x, Shape shape);
Value permute(const Value& x, const std::vector<int>& axes);
Value transpose(const Value& x, int a, int b);
Value slice(const Value& x, int axis, int begin, int end);

Value sum(const Value& x, int axis);
Value mean(const Value& x, int axis);
Value sum_all(const Value& x);
Value mean_all(const Value& x);

// x [Cin, H, W], w [Cout, Cin], bias [Cout] (optional) -> [Cout, H, W]
Value conv1x1(const Value& x, const Value& w, const Value& bias = {});
// x [Cin, H, W], w [Cout, Cin, k, k] -> [Cout, Ho, Wo] with zero padding.
Value conv2d(const Value& x, const Value& w, const Value& bias, int stride, int pad);

struct SamplePoint {
    double row;
    double col;
};

// Bilinear lookup of grid [C, H, W] at fractional (row, col) positions,
// zero outside the grid. Output is [C, out_rows, out_cols] with the points
// given in row-major order. Gradients reach the grid only.
Value bilinear_sample(const Value& grid, std::span<const SamplePoint> points, int out_rows,
                      int out_cols);

// table [N, D] -> [indices.size(), D]
Value embedding_lookup(const Value& table, std::span<const int> indices);

}  // namespace fbev::diff
