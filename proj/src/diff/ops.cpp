#include "fbev/diff/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Core>

namespace fbev::diff {

namespace {

bool wants(const std::shared_ptr<Node>& p) { return p->requires_grad; }

int norm_axis(int axis, int rank, const std::string& op, const Shape& shape) {
    int a = axis < 0 ? axis + rank : axis;
    if (a < 0 || a >= rank) {
        throw ShapeError(op + ": axis " + std::to_string(axis) + " invalid for shape " +
                         shape_str(shape));
    }
    return a;
}

struct AxisSplit {
    std::size_t outer = 1;
    std::size_t n = 1;
    std::size_t inner = 1;
};

AxisSplit split_at(const Shape& shape, int axis) {
    AxisSplit s;
    for (int i = 0; i < axis; ++i) s.outer *= static_cast<std::size_t>(shape[i]);
    s.n = static_cast<std::size_t>(shape[axis]);
    for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= static_cast<std::size_t>(shape[i]);
    return s;
}

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

// C[M,N] += A[M,K] * B[K,N]
void gemm_nn(std::size_t M, std::size_t K, std::size_t N, const double* A, const double* B,
             double* C) {
    const auto m = static_cast<Eigen::Index>(M), k = static_cast<Eigen::Index>(K),
               n = static_cast<Eigen::Index>(N);
    MutMap(C, m, n).noalias() += ConstMap(A, m, k) * ConstMap(B, k, n);
}

// D[M,K] += G[M,N] * B[K,N]^T
void gemm_nt(std::size_t M, std::size_t N, std::size_t K, const double* G, const double* B,
             double* D) {
    const auto m = static_cast<Eigen::Index>(M), k = static_cast<Eigen::Index>(K),
               n = static_cast<Eigen::Index>(N);
    MutMap(D, m, k).noalias() += ConstMap(G, m, n) * ConstMap(B, k, n).transpose();
}

// D[K,N] += A[M,K]^T * G[M,N]
void gemm_tn(std::size_t M, std::size_t K, std::size_t N, const double* A, const double* G,
             double* D) {
    const auto m = static_cast<Eigen::Index>(M), k = static_cast<Eigen::Index>(K),
               n = static_cast<Eigen::Index>(N);
    MutMap(D, k, n).noalias() += ConstMap(A, m, k).transpose() * ConstMap(G, m, n);
}

void require_same(const std::string& op, const Value& a, const Value& b) {
    if (a.shape() != b.shape()) shape_fail(op, a.shape(), b.shape());
}

template <typename Fwd, typename Bwd>
Value unary(const std::string& op, const Value& x, Fwd fwd, Bwd dydx) {
    const auto& xd = x.data();
    std::vector<double> out(xd.size());
    for (std::size_t i = 0; i < xd.size(); ++i) out[i] = fwd(xd[i]);
    return make_result(op, x.shape(), std::move(out), {x}, [dydx](Node& self) {
        auto& p = self.parents[0];
        auto& g = p->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) {
            g[i] += self.grad[i] * dydx(p->data[i], self.data[i]);
        }
    });
}

}  // namespace

Value matmul(const Value& a, const Value& b) {
    if (a.rank() < 2 || b.rank() < 2) shape_fail("matmul", a.shape(), b.shape(), "rank < 2");
    const int M = a.dim(-2);
    const int K = a.dim(-1);
    const bool shared = b.rank() == 2;
    if (b.dim(-2) != K) shape_fail("matmul", a.shape(), b.shape(), "inner dims differ");
    const int N = b.dim(-1);
    std::size_t batch = numel(a.shape()) / (static_cast<std::size_t>(M) * K);
    if (!shared) {
        if (a.rank() != b.rank() ||
            !std::equal(a.shape().begin(), a.shape().end() - 2, b.shape().begin())) {
            shape_fail("matmul", a.shape(), b.shape(), "batch dims differ");
        }
    }
    Shape out_shape = a.shape();
    out_shape.back() = N;
    std::vector<double> out(batch * M * N, 0.0);
    const std::size_t a_step = static_cast<std::size_t>(M) * K;
    const std::size_t b_step = shared ? 0 : static_cast<std::size_t>(K) * N;
    const std::size_t c_step = static_cast<std::size_t>(M) * N;
    if (shared) {
        gemm_nn(batch * M, K, N, a.data().data(), b.data().data(), out.data());
    } else {
        for (std::size_t s = 0; s < batch; ++s) {
            gemm_nn(M, K, N, a.data().data() + s * a_step, b.data().data() + s * b_step,
                    out.data() + s * c_step);
        }
    }
    return make_result("matmul", std::move(out_shape), std::move(out), {a, b},
                       [=](Node& self) {
                           auto& pa = self.parents[0];
                           auto& pb = self.parents[1];
                           if (shared) {
                               if (wants(pa)) {
                                   gemm_nt(batch * M, N, K, self.grad.data(), pb->data.data(),
                                           pa->grad_buffer().data());
                               }
                               if (wants(pb)) {
                                   gemm_tn(batch * M, K, N, pa->data.data(), self.grad.data(),
                                           pb->grad_buffer().data());
                               }
                               return;
                           }
                           for (std::size_t s = 0; s < batch; ++s) {
                               if (wants(pa)) {
                                   gemm_nt(M, N, K, self.grad.data() + s * c_step,
                                           pb->data.data() + s * b_step,
                                           pa->grad_buffer().data() + s * a_step);
                               }
                               if (wants(pb)) {
                                   gemm_tn(M, K, N, pa->data.data() + s * a_step,
                                           self.grad.data() + s * c_step,
                                           pb->grad_buffer().data() + s * b_step);
                               }
                           }
                       });
}

Value add(const Value& a, const Value& b) {
    require_same("add", a, b);
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) + b.at(i);
    return make_result("add", a.shape(), std::move(out), {a, b}, [](Node& self) {
        for (auto& p : self.parents) {
            if (!wants(p)) continue;
            auto& g = p->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
    });
}

Value sub(const Value& a, const Value& b) {
    require_same("sub", a, b);
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) - b.at(i);
    return make_result("sub", a.shape(), std::move(out), {a, b}, [](Node& self) {
        const double sign[2] = {1.0, -1.0};
        for (std::size_t k = 0; k < 2; ++k) {
            auto& p = self.parents[k];
            if (!wants(p)) continue;
            auto& g = p->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += sign[k] * self.grad[i];
        }
    });
}

Value mul(const Value& a, const Value& b) {
    require_same("mul", a, b);
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * b.at(i);
    return make_result("mul", a.shape(), std::move(out), {a, b}, [](Node& self) {
        auto& pa = self.parents[0];
        auto& pb = self.parents[1];
        if (wants(pa)) {
            auto& g = pa->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb->data[i];
        }
        if (wants(pb)) {
            auto& g = pb->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa->data[i];
        }
    });
}

Value div(const Value& a, const Value& b) {
    require_same("div", a, b);
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) / b.at(i);
    return make_result("div", a.shape(), std::move(out), {a, b}, [](Node& self) {
        auto& pa = self.parents[0];
        auto& pb = self.parents[1];
        if (wants(pa)) {
            auto& g = pa->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] / pb->data[i];
        }
        if (wants(pb)) {
            auto& g = pb->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) {
                g[i] -= self.grad[i] * self.data[i] / pb->data[i];
            }
        }
    });
}

Value scale(const Value& x, double s) {
    return unary("scale", x, [s](double v) { return s * v; },
                 [s](double, double) { return s; });
}

Value add_scalar(const Value& x, double s) {
    return unary("add_scalar", x, [s](double v) { return v + s; },
                 [](double, double) { return 1.0; });
}

Value add_trailing(const Value& x, const Value& y) {
    const auto& xs = x.shape();
    const auto& ys = y.shape();
    if (ys.size() > xs.size() || !std::equal(ys.begin(), ys.end(), xs.end() - ys.size())) {
        shape_fail("add_trailing", xs, ys, "second shape must match trailing dims");
    }
    const std::size_t inner = y.size();
    const std::size_t reps = x.size() / inner;
    std::vector<double> out(x.size());
    for (std::size_t r = 0; r < reps; ++r) {
        for (std::size_t i = 0; i < inner; ++i) out[r * inner + i] = x.at(r * inner + i) + y.at(i);
    }
    return make_result("add_trailing", xs, std::move(out), {x, y}, [=](Node& self) {
        auto& px = self.parents[0];
        auto& py = self.parents[1];
        if (wants(px)) {
            auto& g = px->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (wants(py)) {
            auto& g = py->grad_buffer();
            for (std::size_t r = 0; r < reps; ++r) {
                for (std::size_t i = 0; i < inner; ++i) g[i] += self.grad[r * inner + i];
            }
        }
    });
}

Value relu(const Value& x) {
    return unary("relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
                 [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Value sigmoid(const Value& x) {
    return unary(
        "sigmoid", x,
        [](double v) {
            if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
            const double e = std::exp(v);
            return e / (1.0 + e);
        },
        [](double, double y) { return y * (1.0 - y); });
}

Value log(const Value& x) {
    for (double v : x.data()) {
        if (!(v > 0.0)) throw std::domain_error("log: non-positive input " + std::to_string(v));
    }
    return unary("log", x, [](double v) { return std::log(v); },
                 [](double v, double) { return 1.0 / v; });
}

Value clamp(const Value& x, double lo, double hi) {
    return unary("clamp", x, [=](double v) { return std::clamp(v, lo, hi); },
                 [=](double v, double) { return (v > lo && v < hi) ? 1.0 : 0.0; });
}

Value softmax(const Value& x, int axis) {
    const int ax = norm_axis(axis, x.rank(), "softmax", x.shape());
    const AxisSplit s = split_at(x.shape(), ax);
    std::vector<double> out(x.size());
    const auto& xd = x.data();
    for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t in = 0; in < s.inner; ++in) {
            const std::size_t base = o * s.n * s.inner + in;
            double mx = -INFINITY;
            for (std::size_t k = 0; k < s.n; ++k) mx = std::max(mx, xd[base + k * s.inner]);
            double z = 0.0;
            for (std::size_t k = 0; k < s.n; ++k) {
                const double e = std::exp(xd[base + k * s.inner] - mx);
                out[base + k * s.inner] = e;
                z += e;
            }
            for (std::size_t k = 0; k < s.n; ++k) out[base + k * s.inner] /= z;
        }
    }
    return make_result("softmax", x.shape(), std::move(out), {x}, [s](Node& self) {
        auto& g = self.parents[0]->grad_buffer();
        for (std::size_t o = 0; o < s.outer; ++o) {
            for (std::size_t in = 0; in < s.inner; ++in) {
                const std::size_t base = o * s.n * s.inner + in;
                double dot = 0.0;
                for (std::size_t k = 0; k < s.n; ++k) {
                    const std::size_t i = base + k * s.inner;
                    dot += self.grad[i] * self.data[i];
                }
                for (std::size_t k = 0; k < s.n; ++k) {
                    const std::size_t i = base + k * s.inner;
                    g[i] += self.data[i] * (self.grad[i] - dot);
                }
            }
        }
    });
}

Value layer_norm(const Value& x, int axis, const Value& gamma, const Value& beta, double eps) {
    const int ax = norm_axis(axis, x.rank(), "layer_norm", x.shape());
    const AxisSplit s = split_at(x.shape(), ax);
    const bool affine = gamma.defined();
    if (affine != beta.defined()) {
        throw ShapeError("layer_norm: gamma and beta must be given together");
    }
    if (affine && (gamma.shape() != Shape{static_cast<int>(s.n)} || beta.shape() != gamma.shape())) {
        shape_fail("layer_norm", x.shape(), gamma.shape(), "affine params must match the axis");
    }
    const std::size_t groups = s.outer * s.inner;
    auto xhat = std::make_shared<std::vector<double>>(x.size());
    auto inv_std = std::make_shared<std::vector<double>>(groups);
    std::vector<double> out(x.size());
    const auto& xd = x.data();
    for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t in = 0; in < s.inner; ++in) {
            const std::size_t base = o * s.n * s.inner + in;
            double mu = 0.0;
            for (std::size_t k = 0; k < s.n; ++k) mu += xd[base + k * s.inner];
            mu /= static_cast<double>(s.n);
            double var = 0.0;
            for (std::size_t k = 0; k < s.n; ++k) {
                const double d = xd[base + k * s.inner] - mu;
                var += d * d;
            }
            var /= static_cast<double>(s.n);
            const double is = 1.0 / std::sqrt(var + eps);
            (*inv_std)[o * s.inner + in] = is;
            for (std::size_t k = 0; k < s.n; ++k) {
                const std::size_t i = base + k * s.inner;
                const double h = (xd[i] - mu) * is;
                (*xhat)[i] = h;
                out[i] = affine ? h * gamma.at(k) + beta.at(k) : h;
            }
        }
    }
    std::vector<Value> parents{x};
    if (affine) {
        parents.push_back(gamma);
        parents.push_back(beta);
    }
    return make_result("layer_norm", x.shape(), std::move(out), std::move(parents),
                       [s, affine, xhat, inv_std](Node& self) {
                           auto& px = self.parents[0];
                           const double* gam = affine ? self.parents[1]->data.data() : nullptr;
                           if (affine && wants(self.parents[1])) {
                               auto& gg = self.parents[1]->grad_buffer();
                               for (std::size_t i = 0; i < self.grad.size(); ++i) {
                                   gg[(i / s.inner) % s.n] += self.grad[i] * (*xhat)[i];
                               }
                           }
                           if (affine && wants(self.parents[2])) {
                               auto& gb = self.parents[2]->grad_buffer();
                               for (std::size_t i = 0; i < self.grad.size(); ++i) {
                                   gb[(i / s.inner) % s.n] += self.grad[i];
                               }
                           }
                           if (!wants(px)) return;
                           auto& g = px->grad_buffer();
                           const double inv_n = 1.0 / static_cast<double>(s.n);
                           for (std::size_t o = 0; o < s.outer; ++o) {
                               for (std::size_t in = 0; in < s.inner; ++in) {
                                   const std::size_t base = o * s.n * s.inner + in;
                                   double m1 = 0.0;
                                   double m2 = 0.0;
                                   for (std::size_t k = 0; k < s.n; ++k) {
                                       const std::size_t i = base + k * s.inner;
                                       const double dh = self.grad[i] * (gam ? gam[k] : 1.0);
                                       m1 += dh;
                                       m2 += dh * (*xhat)[i];
                                   }
                                   m1 *= inv_n;
                                   m2 *= inv_n;
                                   const double is = (*inv_std)[o * s.inner + in];
                                   for (std::size_t k = 0; k < s.n; ++k) {
                                       const std::size_t i = base + k * s.inner;
                                       const double dh = self.grad[i] * (gam ? gam[k] : 1.0);
                                       g[i] += is * (dh - m1 - (*xhat)[i] * m2);
                                   }
                               }
                           }
                       });
}

Value concat(const std::vector<Value>& xs, int axis) {
    if (xs.empty()) throw ShapeError("concat: no inputs");
    const int ax = norm_axis(axis, xs[0].rank(), "concat", xs[0].shape());
    Shape out_shape = xs[0].shape();
    out_shape[ax] = 0;
    for (const auto& v : xs) {
        if (v.rank() != xs[0].rank()) shape_fail("concat", xs[0].shape(), v.shape(), "rank differs");
        for (int d = 0; d < v.rank(); ++d) {
            if (d != ax && v.dim(d) != xs[0].dim(d)) {
                shape_fail("concat", xs[0].shape(), v.shape(), "non-concat dims differ");
            }
        }
        out_shape[ax] += v.dim(ax);
    }
    const AxisSplit so = split_at(out_shape, ax);
    std::vector<double> out(numel(out_shape));
    std::vector<std::size_t> offsets;
    std::size_t off = 0;
    for (const auto& v : xs) {
        offsets.push_back(off);
        const std::size_t chunk = static_cast<std::size_t>(v.dim(ax)) * so.inner;
        for (std::size_t o = 0; o < so.outer; ++o) {
            std::copy_n(v.data().begin() + o * chunk, chunk,
                        out.begin() + o * so.n * so.inner + off * so.inner);
        }
        off += static_cast<std::size_t>(v.dim(ax));
    }
    return make_result("concat", std::move(out_shape), std::move(out), xs,
                       [so, offsets](Node& self) {
                           for (std::size_t k = 0; k < self.parents.size(); ++k) {
                               auto& p = self.parents[k];
                               if (!wants(p)) continue;
                               auto& g = p->grad_buffer();
                               const std::size_t chunk = g.size() / so.outer;
                               for (std::size_t o = 0; o < so.outer; ++o) {
                                   const double* src = self.grad.data() + o * so.n * so.inner +
                                                       offsets[k] * so.inner;
                                   double* dst = g.data() + o * chunk;
                                   for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
                               }
                           }
                       });
}

Value reshape(const Value& x, Shape shape) {
    if (numel(shape) != x.size()) shape_fail("reshape", x.shape(), shape, "element count differs");
    return make_result("reshape", std::move(shape), x.data(), {x}, [](Node& self) {
        auto& g = self.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
}

Value permute(const Value& x, const std::vector<int>& axes) {
    const int r = x.rank();
    if (static_cast<int>(axes.size()) != r) {
        throw ShapeError("permute: " + std::to_string(axes.size()) + " axes for shape " +
                         shape_str(x.shape()));
    }
    std::vector<bool> used(r, false);
    Shape out_shape(r);
    for (int i = 0; i < r; ++i) {
        if (axes[i] < 0 || axes[i] >= r || used[axes[i]]) {
            throw ShapeError("permute: invalid axis order for shape " + shape_str(x.shape()));
        }
        used[axes[i]] = true;
        out_shape[i] = x.dim(axes[i]);
    }
    std::vector<std::size_t> in_stride(r, 1);
    for (int i = r - 2; i >= 0; --i) in_stride[i] = in_stride[i + 1] * x.dim(i + 1);
    // map[j] = input flat index of output element j
    auto map = std::make_shared<std::vector<std::size_t>>(x.size());
    std::vector<int> idx(r, 0);
    for (std::size_t j = 0; j < x.size(); ++j) {
        std::size_t src = 0;
        for (int i = 0; i < r; ++i) src += static_cast<std::size_t>(idx[i]) * in_stride[axes[i]];
        (*map)[j] = src;
        for (int i = r - 1; i >= 0; --i) {
            if (++idx[i] < out_shape[i]) break;
            idx[i] = 0;
        }
    }
    std::vector<double> out(x.size());
    for (std::size_t j = 0; j < out.size(); ++j) out[j] = x.at((*map)[j]);
    return make_result("permute", std::move(out_shape), std::move(out), {x}, [map](Node& self) {
        auto& g = self.parents[0]->grad_buffer();
        for (std::size_t j = 0; j < map->size(); ++j) g[(*map)[j]] += self.grad[j];
    });
}

Value transpose(const Value& x, int a, int b) {
    const int aa = norm_axis(a, x.rank(), "transpose", x.shape());
    const int bb = norm_axis(b, x.rank(), "transpose", x.shape());
    std::vector<int> axes(x.rank());
    std::iota(axes.begin(), axes.end(), 0);
    std::swap(axes[aa], axes[bb]);
    return permute(x, axes);
}

Value slice(const Value& x, int axis, int begin, int end) {
    const int ax = norm_axis(axis, x.rank(), "slice", x.shape());
    if (begin < 0 || end > x.dim(ax) || begin >= end) {
        throw ShapeError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") invalid on axis " + std::to_string(ax) + " of " + shape_str(x.shape()));
    }
    const AxisSplit s = split_at(x.shape(), ax);
    Shape out_shape = x.shape();
    out_shape[ax] = end - begin;
    const std::size_t chunk = static_cast<std::size_t>(end - begin) * s.inner;
    const std::size_t off = static_cast<std::size_t>(begin) * s.inner;
    std::vector<double> out(s.outer * chunk);
    for (std::size_t o = 0; o < s.outer; ++o) {
        std::copy_n(x.data().begin() + o * s.n * s.inner + off, chunk, out.begin() + o * chunk);
    }
    return make_result("slice", std::move(out_shape), std::move(out), {x},
                       [s, chunk, off](Node& self) {
                           auto& g = self.parents[0]->grad_buffer();
                           for (std::size_t o = 0; o < s.outer; ++o) {
                               double* dst = g.data() + o * s.n * s.inner + off;
                               const double* src = self.grad.data() + o * chunk;
                               for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
                           }
                       });
}

Value sum(const Value& x, int axis) {
    const int ax = norm_axis(axis, x.rank(), "sum", x.shape());
    const AxisSplit s = split_at(x.shape(), ax);
    Shape out_shape = x.shape();
    out_shape.erase(out_shape.begin() + ax);
    if (out_shape.empty()) out_shape = {1};
    std::vector<double> out(s.outer * s.inner, 0.0);
    for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t k = 0; k < s.n; ++k) {
            for (std::size_t in = 0; in < s.inner; ++in) {
                out[o * s.inner + in] += x.at((o * s.n + k) * s.inner + in);
            }
        }
    }
    return make_result("sum", std::move(out_shape), std::move(out), {x}, [s](Node& self) {
        auto& g = self.parents[0]->grad_buffer();
        for (std::size_t o = 0; o < s.outer; ++o) {
            for (std::size_t k = 0; k < s.n; ++k) {
                for (std::size_t in = 0; in < s.inner; ++in) {
                    g[(o * s.n + k) * s.inner + in] += self.grad[o * s.inner + in];
                }
            }
        }
    });
}

Value mean(const Value& x, int axis) {
    const int ax = norm_axis(axis, x.rank(), "mean", x.shape());
    return scale(sum(x, ax), 1.0 / static_cast<double>(x.dim(ax)));
}

Value sum_all(const Value& x) {
    double acc = 0.0;
    for (double v : x.data()) acc += v;
    return make_result("sum_all", {1}, {acc}, {x}, [](Node& self) {
        auto& g = self.parents[0]->grad_buffer();
        for (double& v : g) v += self.grad[0];
    });
}

Value mean_all(const Value& x) { return scale(sum_all(x), 1.0 / static_cast<double>(x.size())); }

Value conv1x1(const Value& x, const Value& w, const Value& bias) {
    if (x.rank() != 3 || w.rank() != 2 || w.dim(1) != x.dim(0)) {
        shape_fail("conv1x1", x.shape(), w.shape(), "expected x [Cin,H,W], w [Cout,Cin]");
    }
    const int cout = w.dim(0);
    if (bias.defined() && bias.shape() != Shape{cout}) {
        shape_fail("conv1x1", w.shape(), bias.shape(), "bias must be [Cout]");
    }
    const std::size_t cin = static_cast<std::size_t>(x.dim(0));
    const std::size_t hw = static_cast<std::size_t>(x.dim(1)) * x.dim(2);
    std::vector<double> out(static_cast<std::size_t>(cout) * hw, 0.0);
    gemm_nn(cout, cin, hw, w.data().data(), x.data().data(), out.data());
    if (bias.defined()) {
        for (int c = 0; c < cout; ++c) {
            for (std::size_t i = 0; i < hw; ++i) out[c * hw + i] += bias.at(c);
        }
    }
    std::vector<Value> parents{x, w};
    if (bias.defined()) parents.push_back(bias);
    return make_result("conv1x1", {cout, x.dim(1), x.dim(2)}, std::move(out), std::move(parents),
                       [=](Node& self) {
                           auto& px = self.parents[0];
                           auto& pw = self.parents[1];
                           if (wants(px)) {
                               gemm_tn(cout, cin, hw, pw->data.data(), self.grad.data(),
                                       px->grad_buffer().data());
                           }
                           if (wants(pw)) {
                               gemm_nt(cout, hw, cin, self.grad.data(), px->data.data(),
                                       pw->grad_buffer().data());
                           }
                           if (self.parents.size() > 2 && wants(self.parents[2])) {
                               auto& gb = self.parents[2]->grad_buffer();
                               for (int c = 0; c < cout; ++c) {
                                   for (std::size_t i = 0; i < hw; ++i) gb[c] += self.grad[c * hw + i];
                               }
                           }
                       });
}

Value conv2d(const Value& x, const Value& w, const Value& bias, int stride, int pad) {
    if (x.rank() != 3 || w.rank() != 4 || w.dim(1) != x.dim(0) || w.dim(2) != w.dim(3)) {
        shape_fail("conv2d", x.shape(), w.shape(), "expected x [Cin,H,W], w [Cout,Cin,k,k]");
    }
    if (stride < 1 || pad < 0) throw ShapeError("conv2d: stride must be >= 1 and pad >= 0");
    const int cin = x.dim(0);
    const int H = x.dim(1);
    const int W = x.dim(2);
    const int cout = w.dim(0);
    const int k = w.dim(2);
    const int Ho = (H + 2 * pad - k) / stride + 1;
    const int Wo = (W + 2 * pad - k) / stride + 1;
    if (Ho <= 0 || Wo <= 0) shape_fail("conv2d", x.shape(), w.shape(), "empty output");
    if (bias.defined() && bias.shape() != Shape{cout}) {
        shape_fail("conv2d", w.shape(), bias.shape(), "bias must be [Cout]");
    }
    const std::size_t rows = static_cast<std::size_t>(cin) * k * k;
    const std::size_t cols = static_cast<std::size_t>(Ho) * Wo;
    // im2col: col[(c,ky,kx), (oy,ox)]
    auto col = std::make_shared<std::vector<double>>(rows * cols, 0.0);
    const auto& xd = x.data();
    for (int c = 0; c < cin; ++c) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                double* dst = col->data() + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * cols;
                for (int oy = 0; oy < Ho; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= H) continue;
                    const double* src = xd.data() + (static_cast<std::size_t>(c) * H + iy) * W;
                    for (int ox = 0; ox < Wo; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        if (ix >= 0 && ix < W) dst[oy * Wo + ox] = src[ix];
                    }
                }
            }
        }
    }
    std::vector<double> out(static_cast<std::size_t>(cout) * cols, 0.0);
    gemm_nn(cout, rows, cols, w.data().data(), col->data(), out.data());
    if (bias.defined()) {
        for (int c = 0; c < cout; ++c) {
            for (std::size_t i = 0; i < cols; ++i) out[c * cols + i] += bias.at(c);
        }
    }
    std::vector<Value> parents{x, w};
    if (bias.defined()) parents.push_back(bias);
    return make_result(
        "conv2d", {cout, Ho, Wo}, std::move(out), std::move(parents), [=](Node& self) {
            auto& px = self.parents[0];
            auto& pw = self.parents[1];
            if (wants(pw)) {
                gemm_nt(cout, cols, rows, self.grad.data(), col->data(), pw->grad_buffer().data());
            }
            if (self.parents.size() > 2 && wants(self.parents[2])) {
                auto& gb = self.parents[2]->grad_buffer();
                for (int c = 0; c < cout; ++c) {
                    for (std::size_t i = 0; i < cols; ++i) gb[c] += self.grad[c * cols + i];
                }
            }
            if (!wants(px)) return;
            std::vector<double> dcol(rows * cols, 0.0);
            gemm_tn(cout, rows, cols, pw->data.data(), self.grad.data(), dcol.data());
            auto& g = px->grad_buffer();
            for (int c = 0; c < cin; ++c) {
                for (int ky = 0; ky < k; ++ky) {
                    for (int kx = 0; kx < k; ++kx) {
                        const double* src =
                            dcol.data() + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * cols;
                        for (int oy = 0; oy < Ho; ++oy) {
                            const int iy = oy * stride - pad + ky;
                            if (iy < 0 || iy >= H) continue;
                            double* dst = g.data() + (static_cast<std::size_t>(c) * H + iy) * W;
                            for (int ox = 0; ox < Wo; ++ox) {
                                const int ix = ox * stride - pad + kx;
                                if (ix >= 0 && ix < W) dst[ix] += src[oy * Wo + ox];
                            }
                        }
                    }
                }
            }
        });
}

Value bilinear_sample(const Value& grid, std::span<const SamplePoint> points, int out_rows,
                      int out_cols) {
    if (grid.rank() != 3) shape_fail("bilinear_sample", grid.shape(), {out_rows, out_cols}, "grid must be [C,H,W]");
    if (out_rows < 0 || out_cols < 0 ||
        static_cast<std::size_t>(out_rows) * out_cols != points.size()) {
        throw ShapeError("bilinear_sample: " + std::to_string(points.size()) +
                         " points cannot fill a " + std::to_string(out_rows) + "x" +
                         std::to_string(out_cols) + " output");
    }
    const int C = grid.dim(0);
    const int H = grid.dim(1);
    const int W = grid.dim(2);
    struct Taps {
        int idx[4];
        double w[4];
    };
    auto taps = std::make_shared<std::vector<Taps>>(points.size());
    for (std::size_t p = 0; p < points.size(); ++p) {
        const double r = points[p].row;
        const double c = points[p].col;
        Taps& t = (*taps)[p];
        if (!std::isfinite(r) || !std::isfinite(c)) {
            for (int q = 0; q < 4; ++q) {
                t.idx[q] = -1;
                t.w[q] = 0.0;
            }
            continue;
        }
        const double r0f = std::floor(r);
        const double c0f = std::floor(c);
        const double fr = r - r0f;
        const double fc = c - c0f;
        const int r0 = static_cast<int>(r0f);
        const int c0 = static_cast<int>(c0f);
        const int rr[4] = {r0, r0, r0 + 1, r0 + 1};
        const int cc[4] = {c0, c0 + 1, c0, c0 + 1};
        const double ww[4] = {(1 - fr) * (1 - fc), (1 - fr) * fc, fr * (1 - fc), fr * fc};
        for (int q = 0; q < 4; ++q) {
            const bool inside = rr[q] >= 0 && rr[q] < H && cc[q] >= 0 && cc[q] < W && ww[q] != 0.0;
            t.idx[q] = inside ? rr[q] * W + cc[q] : -1;
            t.w[q] = inside ? ww[q] : 0.0;
        }
    }
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    const std::size_t np = points.size();
    std::vector<double> out(static_cast<std::size_t>(C) * np, 0.0);
    const auto& gd = grid.data();
    for (int c = 0; c < C; ++c) {
        const double* src = gd.data() + c * plane;
        double* dst = out.data() + c * np;
        for (std::size_t p = 0; p < np; ++p) {
            const Taps& t = (*taps)[p];
            double acc = 0.0;
            for (int q = 0; q < 4; ++q) {
                if (t.idx[q] >= 0) acc += t.w[q] * src[t.idx[q]];
            }
            dst[p] = acc;
        }
    }
    return make_result("bilinear_sample", {C, out_rows, out_cols}, std::move(out), {grid},
                       [=](Node& self) {
                           auto& g = self.parents[0]->grad_buffer();
                           for (int c = 0; c < C; ++c) {
                               double* dst = g.data() + c * plane;
                               const double* src = self.grad.data() + c * np;
                               for (std::size_t p = 0; p < np; ++p) {
                                   const Taps& t = (*taps)[p];
                                   for (int q = 0; q < 4; ++q) {
                                       if (t.idx[q] >= 0) dst[t.idx[q]] += t.w[q] * src[p];
                                   }
                               }
                           }
                       });
}

Value embedding_lookup(const Value& table, std::span<const int> indices) {
    if (table.rank() != 2) shape_fail("embedding_lookup", table.shape(), {}, "table must be [N,D]");
    const int N = table.dim(0);
    const std::size_t D = static_cast<std::size_t>(table.dim(1));
    std::vector<int> idx(indices.begin(), indices.end());
    std::vector<double> out(idx.size() * D);
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] < 0 || idx[i] >= N) {
            throw ShapeError("embedding_lookup: index " + std::to_string(idx[i]) +
                             " outside table " + shape_str(table.shape()));
        }
        std::copy_n(table.data().begin() + idx[i] * D, D, out.begin() + i * D);
    }
    return make_result("embedding_lookup", {static_cast<int>(idx.size()), static_cast<int>(D)},
                       std::move(out), {table}, [idx, D](Node& self) {
                           auto& g = self.parents[0]->grad_buffer();
                           for (std::size_t i = 0; i < idx.size(); ++i) {
                               for (std::size_t d = 0; d < D; ++d) g[idx[i] * D + d] += self.grad[i * D + d];
                           }
                       });
}

}  // namespace fbev::diff
