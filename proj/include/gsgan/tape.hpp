#pragma once

#include <array>
#include <cmath>
#include <cstring>
#include <functional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "gsgan/tensor.hpp"

namespace gsgan {

// Trainable weight with its accumulated gradient. Names are full paths like
// "g.block1.shortcut.wg.kernel" and must be unique within a model.
template <typename S>
struct Parameter {
    std::string name;
    Tensor<S> value;
    Tensor<S> grad;
    bool trainable = true;

    Parameter() = default;
    Parameter(std::string n, Tensor<S> v)
        : name(std::move(n)), value(std::move(v)), grad(Tensor<S>::zeros(value.shape())) {}

    void zero_grad() { std::fill(grad.raw().begin(), grad.raw().end(), S(0)); }
};

// Handle to a node on a GradTape.
struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

enum class Pad { same, valid };

namespace detail {

// C[m,n] += or = A[m,k] * B[k,n]. Sequential accumulation over k so results
// are reproducible and match a plainly-ordered reference loop.
template <typename S>
void gemm(std::size_t m, std::size_t k, std::size_t n, const S* a, const S* b, S* c,
          bool accumulate) {
    if (!accumulate) std::fill(c, c + m * n, S(0));
    for (std::size_t i = 0; i < m; ++i) {
        const S* arow = a + i * k;
        S* crow = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const S av = arow[p];
            if (av == S(0)) continue;
            const S* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C[m,n] (+)= A[k,m]^T * B[k,n]
template <typename S>
void gemm_ta(std::size_t m, std::size_t k, std::size_t n, const S* a, const S* b, S* c,
             bool accumulate) {
    if (!accumulate) std::fill(c, c + m * n, S(0));
    for (std::size_t p = 0; p < k; ++p) {
        const S* arow = a + p * m;
        const S* brow = b + p * n;
        for (std::size_t i = 0; i < m; ++i) {
            const S av = arow[i];
            if (av == S(0)) continue;
            S* crow = c + i * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C[m,n] (+)= A[m,k] * B[n,k]^T
template <typename S>
void gemm_tb(std::size_t m, std::size_t k, std::size_t n, const S* a, const S* b, S* c,
             bool accumulate) {
    if (!accumulate) std::fill(c, c + m * n, S(0));
    for (std::size_t i = 0; i < m; ++i) {
        const S* arow = a + i * k;
        S* crow = c + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            const S* brow = b + j * k;
            S acc = S(0);
            for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
            crow[j] += acc;
        }
    }
}

// Patch matrix for one image: rows ordered (ci, kh, kw), columns (oh, ow).
template <typename S>
void im2col(const S* x, std::size_t ci, std::size_t h, std::size_t w, std::size_t kh,
            std::size_t kw, std::size_t pad, std::size_t oh, std::size_t ow, S* cols) {
    std::size_t r = 0;
    for (std::size_t c = 0; c < ci; ++c) {
        const S* xc = x + c * h * w;
        for (std::size_t dy = 0; dy < kh; ++dy) {
            for (std::size_t dx = 0; dx < kw; ++dx, ++r) {
                S* row = cols + r * oh * ow;
                for (std::size_t oy = 0; oy < oh; ++oy) {
                    const long iy = static_cast<long>(oy + dy) - static_cast<long>(pad);
                    for (std::size_t ox = 0; ox < ow; ++ox) {
                        const long ix = static_cast<long>(ox + dx) - static_cast<long>(pad);
                        row[oy * ow + ox] = (iy >= 0 && iy < static_cast<long>(h) && ix >= 0 &&
                                             ix < static_cast<long>(w))
                                                ? xc[iy * w + ix]
                                                : S(0);
                    }
                }
            }
        }
    }
}

template <typename S>
void col2im_accum(const S* cols, std::size_t ci, std::size_t h, std::size_t w, std::size_t kh,
                  std::size_t kw, std::size_t pad, std::size_t oh, std::size_t ow, S* x) {
    std::size_t r = 0;
    for (std::size_t c = 0; c < ci; ++c) {
        S* xc = x + c * h * w;
        for (std::size_t dy = 0; dy < kh; ++dy) {
            for (std::size_t dx = 0; dx < kw; ++dx, ++r) {
                const S* row = cols + r * oh * ow;
                for (std::size_t oy = 0; oy < oh; ++oy) {
                    const long iy = static_cast<long>(oy + dy) - static_cast<long>(pad);
                    if (iy < 0 || iy >= static_cast<long>(h)) continue;
                    for (std::size_t ox = 0; ox < ow; ++ox) {
                        const long ix = static_cast<long>(ox + dx) - static_cast<long>(pad);
                        if (ix < 0 || ix >= static_cast<long>(w)) continue;
                        xc[iy * w + ix] += row[oy * ow + ox];
                    }
                }
            }
        }
    }
}

}  // namespace detail

// Recorded computation graph for reverse-mode differentiation. Ops append
// nodes in execution order; backward() replays them in exact reverse
// recording order. A tape is owned by one logical training thread.
template <typename S>
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // ---- leaves -----------------------------------------------------------

    Var constant(Tensor<S> t) { return Var{push(std::move(t), {}, nullptr)}; }

    // Leaf bound to a Parameter; repeated use returns the same node so the
    // gradient accumulates at a single leaf.
    Var param(Parameter<S>& p) {
        auto it = bound_.find(&p);
        if (it != bound_.end()) return Var{it->second};
        int id = push(p.value, {}, nullptr);
        bound_.emplace(&p, id);
        bindings_.emplace_back(id, &p);
        return Var{id};
    }

    // ---- elementwise ------------------------------------------------------

    Var add(Var a, Var b) { return ew("add", a, b, [](S x, S y) { return x + y; }, EwKind::add); }
    Var sub(Var a, Var b) { return ew("sub", a, b, [](S x, S y) { return x - y; }, EwKind::sub); }
    Var mul(Var a, Var b) { return ew("mul", a, b, [](S x, S y) { return x * y; }, EwKind::mul); }

    // out = a*x + b with compile-time constants (no extra leaves).
    Var affine(Var x, S a, S b) {
        const Tensor<S>& xv = val(x);
        Tensor<S> out(xv.shape());
        for (std::size_t i = 0; i < xv.numel(); ++i) out[i] = a * xv[i] + b;
        return Var{push(std::move(out), {x.id}, [a](Tape& t, int self) {
            const Tensor<S>& dy = t.grads_[self];
            Tensor<S>& dx = t.grad_buf(t.nodes_[self].in[0]);
            for (std::size_t i = 0; i < dy.numel(); ++i) dx[i] += a * dy[i];
        })};
    }

    // ---- linear algebra ---------------------------------------------------

    Var matmul(Var a, Var b) {
        const Tensor<S>& av = val(a);
        const Tensor<S>& bv = val(b);
        if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0))
            throw ShapeError("matmul: inner dims of " + shape_str(av.shape()) + " and " +
                             shape_str(bv.shape()) + " do not agree");
        const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
        Tensor<S> out({m, n});
        detail::gemm(m, k, n, av.data(), bv.data(), out.data(), false);
        GSGAN_CHECK_FINITE(out);
        return Var{push(std::move(out), {a.id, b.id}, [m, k, n](Tape& t, int self) {
            const Tensor<S>& dy = t.grads_[self];
            const auto& node = t.nodes_[self];
            const Tensor<S>& avv = t.nodes_[node.in[0]].value;
            const Tensor<S>& bvv = t.nodes_[node.in[1]].value;
            detail::gemm_tb(m, n, k, dy.data(), bvv.data(), t.grad_buf(node.in[0]).data(), true);
            detail::gemm_ta(k, m, n, avv.data(), dy.data(), t.grad_buf(node.in[1]).data(), true);
        })};
    }

    // Cross-correlation, stride 1, zero padding for `same`. Kernels are
    // [co,ci,kh,kw] with kh,kw in {1,3}; resampling is always a separate op.
    Var conv2d(Var x, Var kernel, Var bias, Pad pad) {
        const Tensor<S>& xv = val(x);
        const Tensor<S>& kv = val(kernel);
        const Tensor<S>& biasv = val(bias);
        if (xv.rank() != 4 || kv.rank() != 4)
            throw ShapeError("conv2d: need NCHW input and OIHW kernel, got " +
                             shape_str(xv.shape()) + " and " + shape_str(kv.shape()));
        const std::size_t b = xv.dim(0), ci = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
        const std::size_t co = kv.dim(0), kh = kv.dim(2), kw = kv.dim(3);
        if (kv.dim(1) != ci)
            throw ShapeError("conv2d: kernel expects " + std::to_string(kv.dim(1)) +
                             " input channels, input " + shape_str(xv.shape()) + " has " +
                             std::to_string(ci));
        if (!((kh == 1 && kw == 1) || (kh == 3 && kw == 3)))
            throw ShapeError("conv2d: unsupported kernel size " + shape_str(kv.shape()) +
                             " (only 1x1 and 3x3)");
        if (biasv.numel() != co)
            throw ShapeError("conv2d: bias " + shape_str(biasv.shape()) + " vs " +
                             std::to_string(co) + " output channels");
        const std::size_t p = (pad == Pad::same) ? kh / 2 : 0;
        const std::size_t oh = h + 2 * p - kh + 1, ow = w + 2 * p - kw + 1;
        const std::size_t krows = ci * kh * kw;

        Tensor<S> out({b, co, oh, ow});
        std::vector<S> cols(krows * oh * ow);
        for (std::size_t ib = 0; ib < b; ++ib) {
            detail::im2col(xv.data() + ib * ci * h * w, ci, h, w, kh, kw, p, oh, ow, cols.data());
            S* outb = out.data() + ib * co * oh * ow;
            detail::gemm(co, krows, oh * ow, kv.data(), cols.data(), outb, false);
            for (std::size_t c = 0; c < co; ++c) {
                const S bv2 = biasv[c];
                S* oc = outb + c * oh * ow;
                for (std::size_t i = 0; i < oh * ow; ++i) oc[i] += bv2;
            }
        }
        GSGAN_CHECK_FINITE(out);
        auto bwd = [b, ci, h, w, co, kh, kw, p, oh, ow, krows](Tape& t, int self) {
            const Tensor<S>& dy = t.grads_[self];
            const auto& node = t.nodes_[self];
            const Tensor<S>& xvv = t.nodes_[node.in[0]].value;
            const Tensor<S>& kvv = t.nodes_[node.in[1]].value;
            Tensor<S>& dx = t.grad_buf(node.in[0]);
            Tensor<S>& dk = t.grad_buf(node.in[1]);
            Tensor<S>& db = t.grad_buf(node.in[2]);
            std::vector<S> cols(krows * oh * ow);
            std::vector<S> dcols(krows * oh * ow);
            for (std::size_t ib = 0; ib < b; ++ib) {
                const S* dyb = dy.data() + ib * co * oh * ow;
                detail::im2col(xvv.data() + ib * ci * h * w, ci, h, w, kh, kw, p, oh, ow,
                               cols.data());
                detail::gemm_tb(co, oh * ow, krows, dyb, cols.data(), dk.data(), true);
                detail::gemm_ta(krows, co, oh * ow, kvv.data(), dyb, dcols.data(), false);
                detail::col2im_accum(dcols.data(), ci, h, w, kh, kw, p, oh, ow,
                                     dx.data() + ib * ci * h * w);
                for (std::size_t c = 0; c < co; ++c) {
                    S acc = S(0);
                    const S* dyc = dyb + c * oh * ow;
                    for (std::size_t i = 0; i < oh * ow; ++i) acc += dyc[i];
                    db[c] += acc;
                }
            }
        };
        return Var{push(std::move(out), {x.id, kernel.id, bias.id}, std::move(bwd))};
    }

    // ---- shape ops --------------------------------------------------------

    Var reshape(Var x, Shape shape) {
        Tensor<S> out = val(x).reshaped(std::move(shape));
        return Var{push(std::move(out), {x.id}, [](Tape& t, int self) {
            const Tensor<S>& dy = t.grads_[self];
            Tensor<S>& dx = t.grad_buf(t.nodes_[self].in[0]);
            for (std::size_t i = 0; i < dy.numel(); ++i) dx[i] += dy[i];
        })};
    }

    // Channels of `a` first, then `b`. Callers pass (f_c, f_i) so a gated
    // shortcut sees the concatenation in that fixed order.
    Var concat_channels(Var a, Var b) {
        const Tensor<S>& av = val(a);
        const Tensor<S>& bv = val(b);
        if (av.rank() != 4 || bv.rank() != 4 || av.dim(0) != bv.dim(0) ||
            av.dim(2) != bv.dim(2) || av.dim(3) != bv.dim(3))
            throw_shape_mismatch("concat_channels", av.shape(), bv.shape());
        const std::size_t n = av.dim(0), ca = av.dim(1), cb = bv.dim(1), h = av.dim(2),
                          w = av.dim(3);
        Tensor<S> out({n, ca + cb, h, w});
        const std::size_t plane = h * w;
        for (std::size_t ib = 0; ib < n; ++ib) {
            std::memcpy(out.data() + ib * (ca + cb) * plane, av.data() + ib * ca * plane,
                        ca * plane * sizeof(S));
            std::memcpy(out.data() + (ib * (ca + cb) + ca) * plane, bv.data() + ib * cb * plane,
                        cb * plane * sizeof(S));
        }
        return Var{push(std::move(out), {a.id, b.id}, [n, ca, cb, plane](Tape& t, int self) {
            const Tensor<S>& dy = t.grads_[self];
            const auto& node = t.nodes_[self];
            Tensor<S>& da = t.grad_buf(node.in[0]);
            Tensor<S>& db = t.grad_buf(node.in[1]);
            for (std::size_t ib = 0; ib < n; ++ib) {
                const S* dya = dy.data() + ib * (ca + cb) * plane;
                const S* dyb = dya + ca * plane;
                S* pa = da.data() + ib * ca * plane;
                S* pb = db.data() + ib * cb * plane;
                for (std::size_t i = 0; i < ca * plane; ++i) pa[i] += dya[i];
                for (std::size_t i = 0; i < cb * plane; ++i) pb[i] += dyb[i];
            }
        })};
    }

    Var slice_cols(Var x, std::size_t lo, std::size_t hi) {
        const Tensor<S>& xv = val(x);
        if (xv.rank() != 2 || lo >= hi || hi > xv.dim(1))
            throw ShapeError("slice_cols: [" + std::to_string(lo) + "," + std::to_string(hi) +
                             ") of " + shape_str(xv.shape()));
        const std::size_t b = xv.dim(0), n = xv.dim(1), d = hi - lo;
        Tensor<S> out({b, d});
        for (std::size_t i = 0; i < b; ++i)
            std::memcpy(out.data() + i * d, xv.data() + i * n + lo, d * sizeof(S));
        return Var{push(std::move(out), {x.id}, [b, n, d, lo](Tape& t, int self) {
            const Tensor<S>& dy = t.grads_[self];
            Tensor<S>& dx = t.grad_buf(t.nodes_[self].in[0]);
            for (std::size_t i = 0; i < b; ++i)
                for (std::size_t j = 0; j < d; ++j) dx[i * n + lo + j] += dy[i * d + j];
        })};
    }

    // ---- resampling / pooling --------------------------------------------

    Var upsample_nearest2x(Var x) {
        const Tensor<S>& xv = val(x);
        if (xv.rank() != 4) throw ShapeError("upsample_nearest2x: need NCHW, got " + shape_str(xv.shape()));
        const std::size_t b = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
        Tensor<S> out({b, c, 2 * h, 2 * w});
        for (std::size_t bc = 0; bc < b * c; ++bc) {
            const S* src = xv.data() + bc * h * w;
            S* dst = out.data() + bc * 4 * h * w;
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t x2 = 0; x2 < w; ++x2) {
                    const S v = src[y * w + x2];
                    dst[(2 * y) * 2 * w + 2 * x2] = v;
                    dst[(2 * y) * 2 * w + 2 * x2 + 1] = v;
                    dst[(2 * y + 1) * 2 * w + 2 * x2] = v;
                    dst[(2 * y + 1) * 2 * w + 2 * x2 + 1] = v;
                }
        }
        return Var{push(std::move(out), {x.id}, [b, c, h, w](Tape& t, int self) {
            const Tensor<S>& dy = t.grads_[self];
            Tensor<S>& dx = t.grad_buf(t.nodes_[self].in[0]);
            for (std::size_t bc = 0; bc < b * c; ++bc) {
                const S* g = dy.data() + bc * 4 * h * w;
                S* d = dx.data() + bc * h * w;
                for (std::size_t y = 0; y < h; ++y)
                    for (std::size_t x2 = 0; x2 < w; ++x2)
                        d[y * w + x2] += g[(2 * y) * 2 * w + 2 * x2] +
                                         g[(2 * y) * 2 * w + 2 * x2 + 1] +
                                         g[(2 * y + 1) * 2 * w + 2 * x2] +
                                         g[(2 * y + 1) * 2 * w + 2 * x2 + 1];
            }
        })};
    }

    Var avgpool2x(Var x) {
        const Tensor<S>& xv = val(x);
        if (xv.rank() != 4) throw ShapeError("avgpool2x: need NCHW, got " + shape_str(xv.shape()));
        const std::size_t b = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
        if (h % 2 || w % 2)
            throw ShapeError("avgpool2x: odd spatial extent in " + shape_str(xv.shape()));
        Tensor<S> out({b, c, h / 2, w / 2});
        for (std::size_t bc = 0; bc < b * c; ++bc) {
            const S* src = xv.data() + bc * h * w;
            S* dst = out.data() + bc * (h / 2) * (w / 2);
            for (std::size_t y = 0; y < h / 2; ++y)
                for (std::size_t x2 = 0; x2 < w / 2; ++x2)
                    dst[y * (w / 2) + x2] =
                        (src[2 * y * w + 2 * x2] + src[2 * y * w + 2 * x2 + 1] +
                         src[(2 * y + 1) * w + 2 * x2] + src[(2 * y + 1) * w + 2 * x2 + 1]) /
                        S(4);
        }
        return Var{push(std::move(out), {x.id}, [b, c, h, w](Tape& t, int self) {
            const Tensor<S>& dy = t.grads_[self];
            Tensor<S>& dx = t.grad_buf(t.nodes_[self].in[0]);
            for (std::size_t bc = 0; bc < b * c; ++bc) {
                const S* g = dy.data() + bc * (h / 2) * (w / 2);
                S* d = dx.data() + bc * h * w;
                for (std::size_t y = 0; y < h / 2; ++y)
                    for (std::size_t x2 = 0; x2 < w / 2; ++x2) {
                        const S q = g[y * (w / 2) + x2] / S(4);
                        d[2 * y * w + 2 * x2] += q;
                        d[2 * y * w + 2 * x2 + 1] += q;
                        d[(2 * y + 1) * w + 2 * x2] += q;
                        d[(2 * y + 1) * w + 2 * x2 + 1] += q;
                    }
            }
        })};
    }

    Var global_sum_pool(Var x) {
        const Tensor<S>& xv = val(x);
        if (xv.rank() != 4) throw ShapeError("global_sum_pool: need NCHW, got " + shape_str(xv.shape()));
        const std::size_t b = xv.dim(0), c = xv.dim(1), plane = xv.dim(2) * xv.dim(3);
        Tensor<S> out({b, c});
        for (std::size_t bc = 0; bc < b * c; ++bc) {
            const S* src = xv.data() + bc * plane;
            S acc = S(0);
            for (std::size_t i = 0; i < plane; ++i) acc += src[i];
            out[bc] = acc;
        }
        return Var{push(std::move(out), {x.id}, [b, c, plane](Tape& t, int self) {
            const Tensor<S>& dy = t.grads_[self];
            Tensor<S>& dx = t.grad_buf(t.nodes_[self].in[0]);
            for (std::size_t bc = 0; bc < b * c; ++bc) {
                const S g = dy[bc];
                S* d = dx.data() + bc * plane;
                for (std::size_t i = 0; i < plane; ++i) d[i] += g;
            }
        })};
    }

    // out[i,j] = x[i,j] + bias[j].
    Var add_bias_rows(Var x, Var bias) {
        const Tensor<S>& xv = val(x);
        const Tensor<S>& bv = val(bias);
        if (xv.rank() != 2 || bv.numel() != xv.dim(1))
            throw ShapeError("add_bias_rows: bias " + shape_str(bv.shape()) + " for input " +
                             shape_str(xv.shape()));
        const std::size_t b = xv.dim(0), d = xv.dim(1);
        Tensor<S> out(xv.shape());
        for (std::size_t i = 0; i < b; ++i)
            for (std::size_t j = 0; j < d; ++j) out[i * d + j] = xv[i * d + j] + bv[j];
        return Var{push(std::move(out), {x.id, bias.id}, [b, d](Tape& t, int self) {
            const Tensor<S>& dy = t.grads_[self];
            const auto& node = t.nodes_[self];
            Tensor<S>& dx = t.grad_buf(node.in[0]);
            Tensor<S>& db = t.grad_buf(node.in[1]);
            for (std::size_t i = 0; i < b; ++i)
                for (std::size_t j = 0; j < d; ++j) {
                    dx[i * d + j] += dy[i * d + j];
                    db[j] += dy[i * d + j];
                }
        })};
    }

    // Row sums of a matrix, kept as a column: [b,d] -> [b,1].
    Var sum_axis1(Var x) {
        const Tensor<S>& xv = val(x);
        if (xv.rank() != 2) throw ShapeError("sum_axis1: need matrix, got " + shape_str(xv.shape()));
        const std::size_t b = xv.dim(0), d = xv.dim(1);
        Tensor<S> out({b, 1});
        for (std::size_t i = 0; i < b; ++i) {
            S acc = S(0);
            for (std::size_t j = 0; j < d; ++j) acc += xv[i * d + j];
            out[i] = acc;
        }
        return Var{push(std::move(out), {x.id}, [b, d](Tape& t, int self) {
            const Tensor<S>& dy = t.grads_[self];
            Tensor<S>& dx = t.grad_buf(t.nodes_[self].in[0]);
            for (std::size_t i = 0; i < b; ++i)
                for (std::size_t j = 0; j < d; ++j) dx[i * d + j] += dy[i];
        })};
    }

    Var sum_all(Var x) { return reduce_all(x, false); }
    Var mean_all(Var x) { return reduce_all(x, true); }

    // ---- activations ------------------------------------------------------

    Var relu(Var x) {
        const Tensor<S>& xv = val(x);
        Tensor<S> out(xv.shape());
        for (std::size_t i = 0; i < xv.numel(); ++i) out[i] = xv[i] > S(0) ? xv[i] : S(0);
        return Var{push(std::move(out), {x.id}, [](Tape& t, int self) {
            const Tensor<S>& dy = t.grads_[self];
            const Tensor<S>& xvv = t.nodes_[t.nodes_[self].in[0]].value;
            Tensor<S>& dx = t.grad_buf(t.nodes_[self].in[0]);
            for (std::size_t i = 0; i < dy.numel(); ++i)
                if (xvv[i] > S(0)) dx[i] += dy[i];
        })};
    }

    Var sigmoid(Var x) {
        const Tensor<S>& xv = val(x);
        Tensor<S> out(xv.shape());
        for (std::size_t i = 0; i < xv.numel(); ++i) out[i] = stable_sigmoid(xv[i]);
        return Var{push(std::move(out), {x.id}, [](Tape& t, int self) {
            const Tensor<S>& dy = t.grads_[self];
            const Tensor<S>& y = t.nodes_[self].value;
            Tensor<S>& dx = t.grad_buf(t.nodes_[self].in[0]);
            for (std::size_t i = 0; i < dy.numel(); ++i) dx[i] += dy[i] * y[i] * (S(1) - y[i]);
        })};
    }

    Var tanh(Var x) {
        const Tensor<S>& xv = val(x);
        Tensor<S> out(xv.shape());
        for (std::size_t i = 0; i < xv.numel(); ++i) out[i] = std::tanh(xv[i]);
        return Var{push(std::move(out), {x.id}, [](Tape& t, int self) {
            const Tensor<S>& dy = t.grads_[self];
            const Tensor<S>& y = t.nodes_[self].value;
            Tensor<S>& dx = t.grad_buf(t.nodes_[self].in[0]);
            for (std::size_t i = 0; i < dy.numel(); ++i) dx[i] += dy[i] * (S(1) - y[i] * y[i]);
        })};
    }

    // log(max(x, floor)); gradient is zero on the clamped branch.
    Var log_clamped(Var x, S floor) {
        const Tensor<S>& xv = val(x);
        Tensor<S> out(xv.shape());
        for (std::size_t i = 0; i < xv.numel(); ++i)
            out[i] = std::log(xv[i] > floor ? xv[i] : floor);
        return Var{push(std::move(out), {x.id}, [floor](Tape& t, int self) {
            const Tensor<S>& dy = t.grads_[self];
            const Tensor<S>& xvv = t.nodes_[t.nodes_[self].in[0]].value;
            Tensor<S>& dx = t.grad_buf(t.nodes_[self].in[0]);
            for (std::size_t i = 0; i < dy.numel(); ++i)
                if (xvv[i] > floor) dx[i] += dy[i] / xvv[i];
        })};
    }

    Var clamp_min(Var x, S floor) {
        const Tensor<S>& xv = val(x);
        Tensor<S> out(xv.shape());
        for (std::size_t i = 0; i < xv.numel(); ++i) out[i] = xv[i] > floor ? xv[i] : floor;
        return Var{push(std::move(out), {x.id}, [floor](Tape& t, int self) {
            const Tensor<S>& dy = t.grads_[self];
            const Tensor<S>& xvv = t.nodes_[t.nodes_[self].in[0]].value;
            Tensor<S>& dx = t.grad_buf(t.nodes_[self].in[0]);
            for (std::size_t i = 0; i < dy.numel(); ++i)
                if (xvv[i] > floor) dx[i] += dy[i];
        })};
    }

    // t / s where s is a one-element tensor (the scalar-with-tensor case).
    Var div_by_scalar(Var t2, Var s) {
        const Tensor<S>& tv = val(t2);
        const Tensor<S>& sv = val(s);
        if (sv.numel() != 1)
            throw ShapeError("div_by_scalar: divisor must be scalar, got " + shape_str(sv.shape()));
        const S d = sv[0];
        Tensor<S> out(tv.shape());
        for (std::size_t i = 0; i < tv.numel(); ++i) out[i] = tv[i] / d;
        return Var{push(std::move(out), {t2.id, s.id}, [d](Tape& t, int self) {
            const Tensor<S>& dy = t.grads_[self];
            const auto& node = t.nodes_[self];
            const Tensor<S>& tvv = t.nodes_[node.in[0]].value;
            Tensor<S>& dt = t.grad_buf(node.in[0]);
            Tensor<S>& ds = t.grad_buf(node.in[1]);
            S acc = S(0);
            for (std::size_t i = 0; i < dy.numel(); ++i) {
                dt[i] += dy[i] / d;
                acc += dy[i] * tvv[i];
            }
            ds[0] -= acc / (d * d);
        })};
    }

    // ---- batch norm primitives ---------------------------------------------
    // Pure per-channel standardization; any affine part is a separate op.

    // Train mode: standardize by this batch's statistics. The biased batch
    // mean/var actually used are written to *out_mean / *out_var so the layer
    // can maintain running statistics.
    Var batch_norm_train(Var x, S eps, std::vector<S>* out_mean = nullptr,
                         std::vector<S>* out_var = nullptr) {
        const Tensor<S>& xv = val(x);
        if (xv.rank() != 4) throw ShapeError("batch_norm: need NCHW, got " + shape_str(xv.shape()));
        const std::size_t b = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
        const std::size_t n = b * h * w;
        if (n < 2)
            throw ValueError("batch_norm: train mode needs at least 2 values per channel, got " +
                             shape_str(xv.shape()));
        std::vector<S> mean(c, S(0)), var(c, S(0)), istd(c, S(0));
        for (std::size_t ch = 0; ch < c; ++ch) {
            S m = S(0);
            for (std::size_t ib = 0; ib < b; ++ib) {
                const S* p = xv.data() + (ib * c + ch) * h * w;
                for (std::size_t i = 0; i < h * w; ++i) m += p[i];
            }
            m /= static_cast<S>(n);
            S v = S(0);
            for (std::size_t ib = 0; ib < b; ++ib) {
                const S* p = xv.data() + (ib * c + ch) * h * w;
                for (std::size_t i = 0; i < h * w; ++i) v += (p[i] - m) * (p[i] - m);
            }
            v /= static_cast<S>(n);
            mean[ch] = m;
            var[ch] = v;
            istd[ch] = S(1) / std::sqrt(v + eps);
        }
        if (out_mean) *out_mean = mean;
        if (out_var) *out_var = var;
        Tensor<S> out(xv.shape());
        for (std::size_t ib = 0; ib < b; ++ib)
            for (std::size_t ch = 0; ch < c; ++ch) {
                const S* p = xv.data() + (ib * c + ch) * h * w;
                S* q = out.data() + (ib * c + ch) * h * w;
                for (std::size_t i = 0; i < h * w; ++i) q[i] = (p[i] - mean[ch]) * istd[ch];
            }
        auto bwd = [b, c, h, w, n, mean, istd](Tape& t, int self) {
            const Tensor<S>& dy = t.grads_[self];
            const Tensor<S>& xvv = t.nodes_[t.nodes_[self].in[0]].value;
            Tensor<S>& dx = t.grad_buf(t.nodes_[self].in[0]);
            // dx = istd * (dy - mean(dy) - xhat * mean(dy .* xhat)) per channel
            for (std::size_t ch = 0; ch < c; ++ch) {
                S sum_dy = S(0), sum_dy_xhat = S(0);
                for (std::size_t ib = 0; ib < b; ++ib) {
                    const S* pdy = dy.data() + (ib * c + ch) * h * w;
                    const S* px = xvv.data() + (ib * c + ch) * h * w;
                    for (std::size_t i = 0; i < h * w; ++i) {
                        sum_dy += pdy[i];
                        sum_dy_xhat += pdy[i] * (px[i] - mean[ch]) * istd[ch];
                    }
                }
                const S mdy = sum_dy / static_cast<S>(n);
                const S mdyx = sum_dy_xhat / static_cast<S>(n);
                for (std::size_t ib = 0; ib < b; ++ib) {
                    const S* pdy = dy.data() + (ib * c + ch) * h * w;
                    const S* px = xvv.data() + (ib * c + ch) * h * w;
                    S* pdx = dx.data() + (ib * c + ch) * h * w;
                    for (std::size_t i = 0; i < h * w; ++i) {
                        const S xhat = (px[i] - mean[ch]) * istd[ch];
                        pdx[i] += istd[ch] * (pdy[i] - mdy - xhat * mdyx);
                    }
                }
            }
        };
        return Var{push(std::move(out), {x.id}, std::move(bwd))};
    }

    // Eval mode: fixed affine map from the running statistics.
    Var batch_norm_eval(Var x, const std::vector<S>& mean, const std::vector<S>& var, S eps) {
        const Tensor<S>& xv = val(x);
        if (xv.rank() != 4) throw ShapeError("batch_norm: need NCHW, got " + shape_str(xv.shape()));
        const std::size_t b = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
        if (mean.size() != c || var.size() != c)
            throw ShapeError("batch_norm: running stats for " + std::to_string(mean.size()) +
                             " channels, input " + shape_str(xv.shape()));
        std::vector<S> istd(c);
        for (std::size_t ch = 0; ch < c; ++ch) istd[ch] = S(1) / std::sqrt(var[ch] + eps);
        Tensor<S> out(xv.shape());
        for (std::size_t ib = 0; ib < b; ++ib)
            for (std::size_t ch = 0; ch < c; ++ch) {
                const S* p = xv.data() + (ib * c + ch) * h * w;
                S* q = out.data() + (ib * c + ch) * h * w;
                for (std::size_t i = 0; i < h * w; ++i) q[i] = (p[i] - mean[ch]) * istd[ch];
            }
        return Var{push(std::move(out), {x.id}, [b, c, h, w, istd](Tape& t, int self) {
            const Tensor<S>& dy = t.grads_[self];
            Tensor<S>& dx = t.grad_buf(t.nodes_[self].in[0]);
            for (std::size_t ib = 0; ib < b; ++ib)
                for (std::size_t ch = 0; ch < c; ++ch) {
                    const S* pdy = dy.data() + (ib * c + ch) * h * w;
                    S* pdx = dx.data() + (ib * c + ch) * h * w;
                    for (std::size_t i = 0; i < h * w; ++i) pdx[i] += pdy[i] * istd[ch];
                }
        })};
    }

    // out[b,c,h,w] = gamma[b,c] * x[b,c,h,w] + beta[b,c] (per-sample affine,
    // the conditional-BN application step).
    Var channel_affine(Var x, Var gamma, Var beta) {
        const Tensor<S>& xv = val(x);
        const Tensor<S>& gv = val(gamma);
        const Tensor<S>& bv = val(beta);
        if (xv.rank() != 4) throw ShapeError("channel_affine: need NCHW, got " + shape_str(xv.shape()));
        const std::size_t b = xv.dim(0), c = xv.dim(1), plane = xv.dim(2) * xv.dim(3);
        if (gv.shape() != Shape{b, c} || bv.shape() != Shape{b, c})
            throw ShapeError("channel_affine: gamma " + shape_str(gv.shape()) + ", beta " +
                             shape_str(bv.shape()) + " for input " + shape_str(xv.shape()));
        Tensor<S> out(xv.shape());
        for (std::size_t bc = 0; bc < b * c; ++bc) {
            const S g = gv[bc], be = bv[bc];
            const S* p = xv.data() + bc * plane;
            S* q = out.data() + bc * plane;
            for (std::size_t i = 0; i < plane; ++i) q[i] = g * p[i] + be;
        }
        return Var{push(std::move(out), {x.id, gamma.id, beta.id}, [b, c, plane](Tape& t, int self) {
            const Tensor<S>& dy = t.grads_[self];
            const auto& node = t.nodes_[self];
            const Tensor<S>& xvv = t.nodes_[node.in[0]].value;
            const Tensor<S>& gvv = t.nodes_[node.in[1]].value;
            Tensor<S>& dx = t.grad_buf(node.in[0]);
            Tensor<S>& dg = t.grad_buf(node.in[1]);
            Tensor<S>& db = t.grad_buf(node.in[2]);
            for (std::size_t bc = 0; bc < b * c; ++bc) {
                const S* pdy = dy.data() + bc * plane;
                const S* px = xvv.data() + bc * plane;
                S* pdx = dx.data() + bc * plane;
                S accg = S(0), accb = S(0);
                for (std::size_t i = 0; i < plane; ++i) {
                    pdx[i] += pdy[i] * gvv[bc];
                    accg += pdy[i] * px[i];
                    accb += pdy[i];
                }
                dg[bc] += accg;
                db[bc] += accb;
            }
        })};
    }

    // out[b,c,h,w] = gamma[c] * x + beta[c] (plain affine BN part).
    Var channel_scale_bias(Var x, Var gamma, Var beta) {
        const Tensor<S>& xv = val(x);
        const Tensor<S>& gv = val(gamma);
        const Tensor<S>& bv = val(beta);
        if (xv.rank() != 4) throw ShapeError("channel_scale_bias: need NCHW, got " + shape_str(xv.shape()));
        const std::size_t b = xv.dim(0), c = xv.dim(1), plane = xv.dim(2) * xv.dim(3);
        if (gv.numel() != c || bv.numel() != c)
            throw ShapeError("channel_scale_bias: gamma " + shape_str(gv.shape()) + ", beta " +
                             shape_str(bv.shape()) + " for input " + shape_str(xv.shape()));
        Tensor<S> out(xv.shape());
        for (std::size_t ib = 0; ib < b; ++ib)
            for (std::size_t ch = 0; ch < c; ++ch) {
                const S* p = xv.data() + (ib * c + ch) * plane;
                S* q = out.data() + (ib * c + ch) * plane;
                for (std::size_t i = 0; i < plane; ++i) q[i] = gv[ch] * p[i] + bv[ch];
            }
        return Var{push(std::move(out), {x.id, gamma.id, beta.id}, [b, c, plane](Tape& t, int self) {
            const Tensor<S>& dy = t.grads_[self];
            const auto& node = t.nodes_[self];
            const Tensor<S>& xvv = t.nodes_[node.in[0]].value;
            const Tensor<S>& gvv = t.nodes_[node.in[1]].value;
            Tensor<S>& dx = t.grad_buf(node.in[0]);
            Tensor<S>& dg = t.grad_buf(node.in[1]);
            Tensor<S>& db = t.grad_buf(node.in[2]);
            for (std::size_t ib = 0; ib < b; ++ib)
                for (std::size_t ch = 0; ch < c; ++ch) {
                    const S* pdy = dy.data() + (ib * c + ch) * plane;
                    const S* px = xvv.data() + (ib * c + ch) * plane;
                    S* pdx = dx.data() + (ib * c + ch) * plane;
                    S accg = S(0), accb = S(0);
                    for (std::size_t i = 0; i < plane; ++i) {
                        pdx[i] += pdy[i] * gvv[ch];
                        accg += pdy[i] * px[i];
                        accb += pdy[i];
                    }
                    dg[ch] += accg;
                    db[ch] += accb;
                }
        })};
    }

    // Row lookup: table[K,d] indexed by ids -> [ids.size(), d]. Gradient
    // accumulates only into the selected rows.
    Var embedding(Var table, std::vector<int> ids) {
        const Tensor<S>& tv = val(table);
        if (tv.rank() != 2)
            throw ShapeError("embedding: need [K,d] table, got " + shape_str(tv.shape()));
        const std::size_t k = tv.dim(0), d = tv.dim(1);
        for (int id : ids)
            if (id < 0 || static_cast<std::size_t>(id) >= k)
                throw ValueError("embedding: class id " + std::to_string(id) + " out of range [0," +
                                 std::to_string(k) + ")");
        Tensor<S> out({ids.size(), d});
        for (std::size_t i = 0; i < ids.size(); ++i)
            std::memcpy(out.data() + i * d, tv.data() + static_cast<std::size_t>(ids[i]) * d,
                        d * sizeof(S));
        return Var{push(std::move(out), {table.id}, [ids = std::move(ids), d](Tape& t, int self) {
            const Tensor<S>& dy = t.grads_[self];
            Tensor<S>& dt = t.grad_buf(t.nodes_[self].in[0]);
            for (std::size_t i = 0; i < ids.size(); ++i) {
                S* row = dt.data() + static_cast<std::size_t>(ids[i]) * d;
                const S* g = dy.data() + i * d;
                for (std::size_t j = 0; j < d; ++j) row[j] += g[j];
            }
        })};
    }

    // ---- access / backward -------------------------------------------------

    const Tensor<S>& val(Var v) const { return nodes_.at(v.id).value; }

    // Gradient of a node after backward(); zeros for nodes the loss never
    // reached.
    Tensor<S> grad(Var v) const {
        const Tensor<S>& g = grads_.at(v.id);
        if (g.numel() == 0) return Tensor<S>::zeros(nodes_[v.id].value.shape());
        return g;
    }

    std::size_t size() const { return nodes_.size(); }

    // Seeds d(loss)/d(loss) = 1 and sweeps the tape once in reverse recording
    // order. Every bound Parameter receives its gradient (zeros when the loss
    // does not reach it).
    void backward(Var loss) {
        const Tensor<S>& lv = val(loss);
        if (lv.numel() != 1)
            throw ValueError("backward: loss must be scalar, got " + shape_str(lv.shape()));
        grads_.assign(nodes_.size(), Tensor<S>());
        visit_order_.clear();
        grads_[loss.id] = Tensor<S>::ones(lv.shape());
        for (int id = loss.id; id >= 0; --id) {
            if (grads_[id].numel() == 0 || !nodes_[id].backward) continue;
            nodes_[id].backward(*this, id);
            visit_order_.push_back(id);
        }
        for (auto& [id, p] : bindings_) {
            if (grads_[id].numel() == 0)
                p->grad = Tensor<S>::zeros(p->value.shape());
            else
                p->grad = grads_[id];
        }
    }

    // Node ids whose backward rule ran in the last backward(), in visit order.
    const std::vector<int>& last_backward_order() const { return visit_order_; }

    Tensor<S>& grad_buf(int id) {
        if (grads_[id].numel() == 0) grads_[id] = Tensor<S>::zeros(nodes_[id].value.shape());
        return grads_[id];
    }

private:
    struct Node {
        Tensor<S> value;
        std::array<int, 3> in{-1, -1, -1};
        std::function<void(Tape&, int)> backward;
    };

    enum class EwKind { add, sub, mul };

    static S stable_sigmoid(S x) {
        if (x >= S(0)) {
            const S e = std::exp(-x);
            return S(1) / (S(1) + e);
        }
        const S e = std::exp(x);
        return e / (S(1) + e);
    }

    template <typename F>
    Var ew(const char* name, Var a, Var b, F f, EwKind kind) {
        const Tensor<S>& av = val(a);
        const Tensor<S>& bv = val(b);
        const bool a_scalar = av.numel() == 1 && bv.numel() != 1;
        const bool b_scalar = bv.numel() == 1 && av.numel() != 1;
        if (!a_scalar && !b_scalar && !av.same_shape(bv))
            throw_shape_mismatch(name, av.shape(), bv.shape());
        const Tensor<S>& big = a_scalar ? bv : av;
        Tensor<S> out(big.shape());
        for (std::size_t i = 0; i < big.numel(); ++i)
            out[i] = f(av[a_scalar ? 0 : i], bv[b_scalar ? 0 : i]);
        GSGAN_CHECK_FINITE(out);
        return Var{push(std::move(out), {a.id, b.id},
                        [kind, a_scalar, b_scalar](Tape& t, int self) {
                            const Tensor<S>& dy = t.grads_[self];
                            const auto& node = t.nodes_[self];
                            const Tensor<S>& avv = t.nodes_[node.in[0]].value;
                            const Tensor<S>& bvv = t.nodes_[node.in[1]].value;
                            Tensor<S>& da = t.grad_buf(node.in[0]);
                            Tensor<S>& db = t.grad_buf(node.in[1]);
                            for (std::size_t i = 0; i < dy.numel(); ++i) {
                                const std::size_t ia = a_scalar ? 0 : i;
                                const std::size_t ib = b_scalar ? 0 : i;
                                switch (kind) {
                                    case EwKind::add:
                                        da[ia] += dy[i];
                                        db[ib] += dy[i];
                                        break;
                                    case EwKind::sub:
                                        da[ia] += dy[i];
                                        db[ib] -= dy[i];
                                        break;
                                    case EwKind::mul:
                                        da[ia] += dy[i] * bvv[ib];
                                        db[ib] += dy[i] * avv[ia];
                                        break;
                                }
                            }
                        })};
    }

    Var reduce_all(Var x, bool mean) {
        const Tensor<S>& xv = val(x);
        const std::size_t n = xv.numel();
        S acc = S(0);
        for (std::size_t i = 0; i < n; ++i) acc += xv[i];
        if (mean) acc /= static_cast<S>(n);
        Tensor<S> out({1});
        out[0] = acc;
        return Var{push(std::move(out), {x.id}, [n, mean](Tape& t, int self) {
            const S g = mean ? t.grads_[self][0] / static_cast<S>(n) : t.grads_[self][0];
            Tensor<S>& dx = t.grad_buf(t.nodes_[self].in[0]);
            for (std::size_t i = 0; i < n; ++i) dx[i] += g;
        })};
    }

    int push(Tensor<S> value, std::initializer_list<int> in,
             std::function<void(Tape&, int)> backward) {
        GSGAN_CHECK_FINITE(value);
        std::array<int, 3> ins{-1, -1, -1};
        std::size_t i = 0;
        for (int id : in) ins[i++] = id;
        nodes_.push_back(Node{std::move(value), ins, std::move(backward)});
        return static_cast<int>(nodes_.size()) - 1;
    }

    std::vector<Node> nodes_;
    std::vector<Tensor<S>> grads_;
    std::vector<std::pair<int, Parameter<S>*>> bindings_;
    std::unordered_map<Parameter<S>*, int> bound_;
    std::vector<int> visit_order_;
};

}  // namespace gsgan
