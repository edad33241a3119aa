#pragma once

#include "core/autograd.hpp"

namespace ccd::nn {

// im2col for NCHW input. cols is [C*kh*kw, N*oh*ow] row-major.
template <typename T>
void im2col(const Tensor<T>& x, int kh, int kw, int stride, int pad, Tensor<T>& cols) {
    const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int64_t oh = (H + 2 * pad - kh) / stride + 1;
    const int64_t ow = (W + 2 * pad - kw) / stride + 1;
    const int64_t patch = C * kh * kw;
    const int64_t ncols = N * oh * ow;
    cols = Tensor<T>({patch, ncols});
    for (int64_t c = 0; c < C; ++c) {
        for (int ky = 0; ky < kh; ++ky) {
            for (int kx = 0; kx < kw; ++kx) {
                const int64_t prow = (c * kh + ky) * kw + kx;
                T* dst = cols.ptr() + prow * ncols;
                for (int64_t n = 0; n < N; ++n) {
                    const T* src = x.ptr() + (n * C + c) * H * W;
                    for (int64_t y = 0; y < oh; ++y) {
                        const int64_t iy = y * stride - pad + ky;
                        T* drow = dst + (n * oh + y) * ow;
                        if (iy < 0 || iy >= H) {
                            std::fill(drow, drow + ow, T(0));
                            continue;
                        }
                        for (int64_t xo = 0; xo < ow; ++xo) {
                            const int64_t ix = xo * stride - pad + kx;
                            drow[xo] = (ix >= 0 && ix < W) ? src[iy * W + ix] : T(0);
                        }
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im(const Tensor<T>& cols, int64_t N, int64_t C, int64_t H, int64_t W, int kh, int kw,
            int stride, int pad, Tensor<T>& x) {
    const int64_t oh = (H + 2 * pad - kh) / stride + 1;
    const int64_t ow = (W + 2 * pad - kw) / stride + 1;
    const int64_t ncols = N * oh * ow;
    x = Tensor<T>({N, C, H, W});
    for (int64_t c = 0; c < C; ++c) {
        for (int ky = 0; ky < kh; ++ky) {
            for (int kx = 0; kx < kw; ++kx) {
                const int64_t prow = (c * kh + ky) * kw + kx;
                const T* src = cols.ptr() + prow * ncols;
                for (int64_t n = 0; n < N; ++n) {
                    T* dst = x.ptr() + (n * C + c) * H * W;
                    for (int64_t y = 0; y < oh; ++y) {
                        const int64_t iy = y * stride - pad + ky;
                        if (iy < 0 || iy >= H) continue;
                        const T* srow = src + (n * oh + y) * ow;
                        for (int64_t xo = 0; xo < ow; ++xo) {
                            const int64_t ix = xo * stride - pad + kx;
                            if (ix >= 0 && ix < W) dst[iy * W + ix] += srow[xo];
                        }
                    }
                }
            }
        }
    }
}

// x[N,C,H,W], w[O,C,kh,kw], b[O] -> [N,O,oh,ow]
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int stride, int pad) {
    const auto& xv = x.value();
    const auto& wv = w.value();
    if (xv.ndim() != 4 || wv.ndim() != 4 || xv.dim(1) != wv.dim(1))
        throw std::invalid_argument("conv2d: incompatible shapes");
    const int64_t N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    const int64_t O = wv.dim(0);
    const int kh = static_cast<int>(wv.dim(2)), kw = static_cast<int>(wv.dim(3));
    const int64_t oh = (H + 2 * pad - kh) / stride + 1;
    const int64_t ow = (W + 2 * pad - kw) / stride + 1;
    if (oh <= 0 || ow <= 0) throw std::invalid_argument("conv2d: output would be empty");

    auto cols = std::make_shared<Tensor<T>>();
    im2col(xv, kh, kw, stride, pad, *cols);
    const int64_t patch = C * kh * kw;
    const int64_t ncols = N * oh * ow;

    Tensor<T> ymat({O, ncols});
    ymat.mat(O, ncols).noalias() = wv.mat(O, patch) * cols->mat(patch, ncols);

    Tensor<T> out({N, O, oh, ow});
    const int64_t plane = oh * ow;
    for (int64_t n = 0; n < N; ++n)
        for (int64_t o = 0; o < O; ++o) {
            const T* src = ymat.ptr() + o * ncols + n * plane;
            T* dst = out.ptr() + (n * O + o) * plane;
            const T bias = b.value()[o];
            for (int64_t i = 0; i < plane; ++i) dst[i] = src[i] + bias;
        }

    return make_op<T>(std::move(out), {x, w, b},
                      [=, N = N, C = C, H = H, W = W, O = O](Node<T>& node) {
        // grad -> [O, ncols]
        Tensor<T> gmat({O, ncols});
        for (int64_t n = 0; n < N; ++n)
            for (int64_t o = 0; o < O; ++o) {
                const T* src = node.grad.ptr() + (n * O + o) * plane;
                T* dst = gmat.ptr() + o * ncols + n * plane;
                std::copy(src, src + plane, dst);
            }
        if (node.parents[1]->requires_grad) {
            Tensor<T> gw({O, C, static_cast<int64_t>(kh), static_cast<int64_t>(kw)});
            gw.mat(O, patch).noalias() = gmat.mat(O, ncols) * cols->mat(patch, ncols).transpose();
            accumulate(node.parents[1], gw);
        }
        if (node.parents[2]->requires_grad) {
            Tensor<T> gb({O});
            for (int64_t o = 0; o < O; ++o) {
                T s = 0;
                const T* row = gmat.ptr() + o * ncols;
                for (int64_t i = 0; i < ncols; ++i) s += row[i];
                gb[o] = s;
            }
            accumulate(node.parents[2], gb);
        }
        if (node.parents[0]->requires_grad) {
            Tensor<T> gcols({patch, ncols});
            gcols.mat(patch, ncols).noalias() =
                node.parents[1]->value.mat(O, patch).transpose() * gmat.mat(O, ncols);
            Tensor<T> gx;
            col2im(gcols, N, C, H, W, kh, kw, stride, pad, gx);
            accumulate(node.parents[0], gx);
        }
    });
}

// 2x2 average pooling, stride 2; H and W must be even.
template <typename T>
Var<T> avg_pool2(const Var<T>& x) {
    const auto& xv = x.value();
    const int64_t N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    if (H % 2 || W % 2) throw std::invalid_argument("avg_pool2: odd spatial size");
    const int64_t oh = H / 2, ow = W / 2;
    Tensor<T> out({N, C, oh, ow});
    for (int64_t p = 0; p < N * C; ++p) {
        const T* src = xv.ptr() + p * H * W;
        T* dst = out.ptr() + p * oh * ow;
        for (int64_t y = 0; y < oh; ++y)
            for (int64_t xo = 0; xo < ow; ++xo)
                dst[y * ow + xo] = (src[(2 * y) * W + 2 * xo] + src[(2 * y) * W + 2 * xo + 1] +
                                    src[(2 * y + 1) * W + 2 * xo] +
                                    src[(2 * y + 1) * W + 2 * xo + 1]) *
                                   T(0.25);
    }
    return make_op<T>(std::move(out), {x}, [N, C, H, W, oh, ow](Node<T>& node) {
        Tensor<T> g({N, C, H, W});
        for (int64_t p = 0; p < N * C; ++p) {
            const T* src = node.grad.ptr() + p * oh * ow;
            T* dst = g.ptr() + p * H * W;
            for (int64_t y = 0; y < oh; ++y)
                for (int64_t xo = 0; xo < ow; ++xo) {
                    const T v = src[y * ow + xo] * T(0.25);
                    dst[(2 * y) * W + 2 * xo] = v;
                    dst[(2 * y) * W + 2 * xo + 1] = v;
                    dst[(2 * y + 1) * W + 2 * xo] = v;
                    dst[(2 * y + 1) * W + 2 * xo + 1] = v;
                }
        }
        accumulate(node.parents[0], g);
    });
}

template <typename T>
Var<T> upsample_nearest2(const Var<T>& x) {
    const auto& xv = x.value();
    const int64_t N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    Tensor<T> out({N, C, H * 2, W * 2});
    for (int64_t p = 0; p < N * C; ++p) {
        const T* src = xv.ptr() + p * H * W;
        T* dst = out.ptr() + p * 4 * H * W;
        for (int64_t y = 0; y < H; ++y)
            for (int64_t xo = 0; xo < W; ++xo) {
                const T v = src[y * W + xo];
                dst[(2 * y) * 2 * W + 2 * xo] = v;
                dst[(2 * y) * 2 * W + 2 * xo + 1] = v;
                dst[(2 * y + 1) * 2 * W + 2 * xo] = v;
                dst[(2 * y + 1) * 2 * W + 2 * xo + 1] = v;
            }
    }
    return make_op<T>(std::move(out), {x}, [N, C, H, W](Node<T>& node) {
        Tensor<T> g({N, C, H, W});
        for (int64_t p = 0; p < N * C; ++p) {
            const T* src = node.grad.ptr() + p * 4 * H * W;
            T* dst = g.ptr() + p * H * W;
            for (int64_t y = 0; y < H; ++y)
                for (int64_t xo = 0; xo < W; ++xo)
                    dst[y * W + xo] = src[(2 * y) * 2 * W + 2 * xo] +
                                      src[(2 * y) * 2 * W + 2 * xo + 1] +
                                      src[(2 * y + 1) * 2 * W + 2 * xo] +
                                      src[(2 * y + 1) * 2 * W + 2 * xo + 1];
        }
        accumulate(node.parents[0], g);
    });
}

// Spatial crop of [N,C,H,W].
template <typename T>
Var<T> slice_spatial(const Var<T>& x, int64_t y0, int64_t x0, int64_t h, int64_t w) {
    const auto& xv = x.value();
    const int64_t N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    if (y0 < 0 || x0 < 0 || y0 + h > H || x0 + w > W)
        throw std::invalid_argument("slice_spatial: region out of bounds");
    Tensor<T> out({N, C, h, w});
    for (int64_t p = 0; p < N * C; ++p)
        for (int64_t y = 0; y < h; ++y)
            std::copy(xv.ptr() + p * H * W + (y0 + y) * W + x0,
                      xv.ptr() + p * H * W + (y0 + y) * W + x0 + w,
                      out.ptr() + p * h * w + y * w);
    return make_op<T>(std::move(out), {x}, [N, C, H, W, y0, x0, h, w](Node<T>& node) {
        Tensor<T> g({N, C, H, W});
        for (int64_t p = 0; p < N * C; ++p)
            for (int64_t y = 0; y < h; ++y)
                std::copy(node.grad.ptr() + p * h * w + y * w,
                          node.grad.ptr() + p * h * w + (y + 1) * w,
                          g.ptr() + p * H * W + (y0 + y) * W + x0);
        accumulate(node.parents[0], g);
    });
}

// Global average pool: [N,C,H,W] -> [N,C]
template <typename T>
Var<T> global_avg_pool(const Var<T>& x) {
    const auto& xv = x.value();
    const int64_t N = xv.dim(0), C = xv.dim(1), area = xv.dim(2) * xv.dim(3);
    Tensor<T> out({N, C});
    for (int64_t p = 0; p < N * C; ++p) {
        T s = 0;
        const T* src = xv.ptr() + p * area;
        for (int64_t i = 0; i < area; ++i) s += src[i];
        out[p] = s / static_cast<T>(area);
    }
    return make_op<T>(std::move(out), {x}, [N, C, area](Node<T>& node) {
        Tensor<T> g({N, C, node.parents[0]->value.dim(2), node.parents[0]->value.dim(3)});
        for (int64_t p = 0; p < N * C; ++p) {
            const T v = node.grad[p] / static_cast<T>(area);
            T* dst = g.ptr() + p * area;
            for (int64_t i = 0; i < area; ++i) dst[i] = v;
        }
        accumulate(node.parents[0], g);
    });
}

// Separable symmetric filter with 'valid' extent, applied per channel.
// The kernel is a fixed constant (no gradient to it).
template <typename T>
Var<T> separable_filter_valid(const Var<T>& x, const std::vector<T>& k1d) {
    const auto& xv = x.value();
    const int64_t N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    const int64_t K = static_cast<int64_t>(k1d.size());
    if (H < K || W < K) throw std::invalid_argument("separable_filter_valid: input too small");
    const int64_t oh = H - K + 1, ow = W - K + 1;

    auto pass = [&](const Tensor<T>& in, int64_t h, int64_t w, bool horizontal) {
        // horizontal: output w' = w-K+1; vertical: h' = h-K+1
        const int64_t nh = horizontal ? h : h - K + 1;
        const int64_t nw = horizontal ? w - K + 1 : w;
        Tensor<T> out({N, C, nh, nw});
        for (int64_t p = 0; p < N * C; ++p) {
            const T* src = in.ptr() + p * h * w;
            T* dst = out.ptr() + p * nh * nw;
            if (horizontal) {
                for (int64_t y = 0; y < nh; ++y)
                    for (int64_t xo = 0; xo < nw; ++xo) {
                        T s = 0;
                        for (int64_t t = 0; t < K; ++t) s += k1d[static_cast<size_t>(t)] * src[y * w + xo + t];
                        dst[y * nw + xo] = s;
                    }
            } else {
                for (int64_t y = 0; y < nh; ++y)
                    for (int64_t xo = 0; xo < nw; ++xo) {
                        T s = 0;
                        for (int64_t t = 0; t < K; ++t) s += k1d[static_cast<size_t>(t)] * src[(y + t) * w + xo];
                        dst[y * nw + xo] = s;
                    }
            }
        }
        return out;
    };

    Tensor<T> tmp = pass(xv, H, W, true);
    Tensor<T> out = pass(tmp, H, W - K + 1, false);

    return make_op<T>(std::move(out), {x}, [N, C, H, W, K, oh, ow, k1d](Node<T>& node) {
        // Transposed pass: scatter-add (full correlation with the same kernel,
        // valid because the kernel is symmetric).
        Tensor<T> gtmp({N, C, H, ow});
        for (int64_t p = 0; p < N * C; ++p) {
            const T* src = node.grad.ptr() + p * oh * ow;
            T* dst = gtmp.ptr() + p * H * ow;
            for (int64_t y = 0; y < oh; ++y)
                for (int64_t xo = 0; xo < ow; ++xo) {
                    const T v = src[y * ow + xo];
                    for (int64_t t = 0; t < K; ++t) dst[(y + t) * ow + xo] += k1d[static_cast<size_t>(t)] * v;
                }
        }
        Tensor<T> g({N, C, H, W});
        for (int64_t p = 0; p < N * C; ++p) {
            const T* src = gtmp.ptr() + p * H * ow;
            T* dst = g.ptr() + p * H * W;
            for (int64_t y = 0; y < H; ++y)
                for (int64_t xo = 0; xo < ow; ++xo) {
                    const T v = src[y * ow + xo];
                    for (int64_t t = 0; t < K; ++t) dst[y * W + xo + t] += k1d[static_cast<size_t>(t)] * v;
                }
        }
        accumulate(node.parents[0], g);
    });
}

}  // namespace ccd::nn
