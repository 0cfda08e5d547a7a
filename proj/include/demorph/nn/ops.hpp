// Copyright (c) 2026 demorphlab authors
// All rights reserved.
// Licensed under the Apache License 2.0.

/**
 * @file ops.hpp
 * @brief Differentiable operations on the tape.
 *
 * Convolutions and matrix products run through Eigen GEMM (batched
 * im2col for conv); exp-heavy activations use Eigen's vectorized array
 * kernels. Everything is single-threaded and deterministic. Backward
 * closures capture raw Node pointers; the tape keeps every node alive
 * until it is destroyed.
 */

#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>
#include <vector>

#include "demorph/core/rng.hpp"
#include "demorph/nn/tape.hpp"

namespace demorph::nn {

using MatRM = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using MapCM = Eigen::Map<const MatRM>;
using ArrMap = Eigen::Map<Eigen::ArrayXf>;
using ArrCMap = Eigen::Map<const Eigen::ArrayXf>;

namespace detail {

inline void check_shape(const Var& a, const Var& b, const char* op) {
    if (!a->val().same_shape(b->val()))
        throw ValidationError(std::string(op) + ": shape mismatch " + a->val().shape_str() +
                              " vs " + b->val().shape_str());
}

inline bool rq(const Var& a) { return a->requires_grad; }
inline bool rq(const Var& a, const Var& b) { return a->requires_grad || b->requires_grad; }

} // namespace detail

// ============================================================================
// Elementwise
// ============================================================================

inline Var add(Tape& t, Var a, Var b) {
    detail::check_shape(a, b, "add");
    Tensor out = Tensor::uninit(a->val().shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a->val()[i] + b->val()[i];
    Node *ap = a.get(), *bp = b.get();
    Var o = t.make(std::move(out), detail::rq(a, b), nullptr);
    Node* op = o.get();
    if (o->requires_grad)
        o->backward = [ap, bp, op] {
            if (ap->requires_grad)
                for (std::size_t i = 0; i < op->grd().numel(); ++i) ap->grd()[i] += op->grd()[i];
            if (bp->requires_grad)
                for (std::size_t i = 0; i < op->grd().numel(); ++i) bp->grd()[i] += op->grd()[i];
        };
    return o;
}

inline Var sub(Tape& t, Var a, Var b) {
    detail::check_shape(a, b, "sub");
    Tensor out = Tensor::uninit(a->val().shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a->val()[i] - b->val()[i];
    Node *ap = a.get(), *bp = b.get();
    Var o = t.make(std::move(out), detail::rq(a, b), nullptr);
    Node* op = o.get();
    if (o->requires_grad)
        o->backward = [ap, bp, op] {
            if (ap->requires_grad)
                for (std::size_t i = 0; i < op->grd().numel(); ++i) ap->grd()[i] += op->grd()[i];
            if (bp->requires_grad)
                for (std::size_t i = 0; i < op->grd().numel(); ++i) bp->grd()[i] -= op->grd()[i];
        };
    return o;
}

inline Var mul(Tape& t, Var a, Var b) {
    detail::check_shape(a, b, "mul");
    Tensor out = Tensor::uninit(a->val().shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a->val()[i] * b->val()[i];
    Node *ap = a.get(), *bp = b.get();
    Var o = t.make(std::move(out), detail::rq(a, b), nullptr);
    Node* op = o.get();
    if (o->requires_grad)
        o->backward = [ap, bp, op] {
            if (ap->requires_grad)
                for (std::size_t i = 0; i < op->grd().numel(); ++i)
                    ap->grd()[i] += op->grd()[i] * bp->val()[i];
            if (bp->requires_grad)
                for (std::size_t i = 0; i < op->grd().numel(); ++i)
                    bp->grd()[i] += op->grd()[i] * ap->val()[i];
        };
    return o;
}

inline Var scale(Tape& t, Var a, float c) {
    Tensor out = Tensor::uninit(a->val().shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a->val()[i] * c;
    Node* ap = a.get();
    Var o = t.make(std::move(out), detail::rq(a), nullptr);
    Node* op = o.get();
    if (o->requires_grad)
        o->backward = [ap, op, c] {
            for (std::size_t i = 0; i < op->grd().numel(); ++i) ap->grd()[i] += op->grd()[i] * c;
        };
    return o;
}

/// out = 1 - x
inline Var one_minus(Tape& t, Var a) {
    Tensor out = Tensor::uninit(a->val().shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = 1.0f - a->val()[i];
    Node* ap = a.get();
    Var o = t.make(std::move(out), detail::rq(a), nullptr);
    Node* op = o.get();
    if (o->requires_grad)
        o->backward = [ap, op] {
            for (std::size_t i = 0; i < op->grd().numel(); ++i) ap->grd()[i] -= op->grd()[i];
        };
    return o;
}

inline Var log_op(Tape& t, Var a) {
    Tensor out = Tensor::uninit(a->val().shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::log(a->val()[i]);
    Node* ap = a.get();
    Var o = t.make(std::move(out), detail::rq(a), nullptr);
    Node* op = o.get();
    if (o->requires_grad)
        o->backward = [ap, op] {
            for (std::size_t i = 0; i < op->grd().numel(); ++i)
                ap->grd()[i] += op->grd()[i] / ap->val()[i];
        };
    return o;
}

/// Clamp to [lo,hi]; gradient passes only where the value was not clamped.
inline Var clamp(Tape& t, Var a, float lo, float hi) {
    Tensor out = Tensor::uninit(a->val().shape());
    for (std::size_t i = 0; i < out.numel(); ++i)
        out[i] = std::min(hi, std::max(lo, a->val()[i]));
    Node* ap = a.get();
    Var o = t.make(std::move(out), detail::rq(a), nullptr);
    Node* op = o.get();
    if (o->requires_grad)
        o->backward = [ap, op, lo, hi] {
            for (std::size_t i = 0; i < op->grd().numel(); ++i) {
                float v = ap->val()[i];
                if (v > lo && v < hi) ap->grd()[i] += op->grd()[i];
            }
        };
    return o;
}

inline Var sigmoid(Tape& t, Var a) {
    Tensor out = Tensor::uninit(a->val().shape());
    {
        ArrCMap x(a->val().data(), static_cast<long>(a->val().numel()));
        ArrMap y(out.data(), static_cast<long>(out.numel()));
        y = 1.0f / (1.0f + (-x).exp());
    }
    Node* ap = a.get();
    Var o = t.make(std::move(out), detail::rq(a), nullptr);
    Node* op = o.get();
    if (o->requires_grad)
        o->backward = [ap, op] {
            for (std::size_t i = 0; i < op->grd().numel(); ++i) {
                float y = op->val()[i];
                ap->grd()[i] += op->grd()[i] * y * (1.0f - y);
            }
        };
    return o;
}

inline Var silu(Tape& t, Var a) {
    Tensor out = Tensor::uninit(a->val().shape());
    {
        ArrCMap x(a->val().data(), static_cast<long>(a->val().numel()));
        ArrMap y(out.data(), static_cast<long>(out.numel()));
        y = x / (1.0f + (-x).exp());
    }
    Node* ap = a.get();
    Var o = t.make(std::move(out), detail::rq(a), nullptr);
    Node* op = o.get();
    if (o->requires_grad)
        o->backward = [ap, op] {
            const std::size_t n = op->grd().numel();
            FloatBuf ds;
            ds.resize(n);
            ArrCMap x(ap->val().data(), static_cast<long>(n));
            ArrMap d(ds.data(), static_cast<long>(n));
            d = 1.0f / (1.0f + (-x).exp());
            d = d * (1.0f + x * (1.0f - d));
            for (std::size_t i = 0; i < n; ++i) ap->grd()[i] += op->grd()[i] * ds[i];
        };
    return o;
}

inline Var leaky_relu(Tape& t, Var a, float slope) {
    Tensor out = Tensor::uninit(a->val().shape());
    for (std::size_t i = 0; i < out.numel(); ++i) {
        float x = a->val()[i];
        out[i] = x >= 0.0f ? x : slope * x;
    }
    Node* ap = a.get();
    Var o = t.make(std::move(out), detail::rq(a), nullptr);
    Node* op = o.get();
    if (o->requires_grad)
        o->backward = [ap, op, slope] {
            for (std::size_t i = 0; i < op->grd().numel(); ++i)
                ap->grd()[i] += op->grd()[i] * (ap->val()[i] >= 0.0f ? 1.0f : slope);
        };
    return o;
}

/**
 * @brief Inverted dropout, drawn from the caller's stream.
 *
 * Active whenever p > 0 -- noise is injected at training and test time
 * alike, so inference callers seed the stream explicitly.
 */
inline Var dropout(Tape& t, Var a, float p, Rng& rng) {
    if (p <= 0.0f) return a;
    if (p >= 1.0f) throw ValidationError("dropout: p must be < 1");
    Tensor out = Tensor::uninit(a->val().shape());
    auto mask = std::make_shared<FloatBuf>();
    mask->resize(out.numel());
    const float keep_scale = 1.0f / (1.0f - p);
    for (std::size_t i = 0; i < out.numel(); ++i) {
        float m = (rng.uniform() < p) ? 0.0f : keep_scale;
        (*mask)[i] = m;
        out[i] = a->val()[i] * m;
    }
    Node* ap = a.get();
    Var o = t.make(std::move(out), detail::rq(a), nullptr);
    Node* op = o.get();
    if (o->requires_grad)
        o->backward = [ap, op, mask] {
            for (std::size_t i = 0; i < op->grd().numel(); ++i)
                ap->grd()[i] += op->grd()[i] * (*mask)[i];
        };
    return o;
}

// ============================================================================
// Shape ops
// ============================================================================

inline Var reshape(Tape& t, Var a, std::vector<int> shape) {
    if (Tensor::count(shape) != a->val().numel())
        throw ValidationError("reshape: element count mismatch");
    Tensor out = Tensor::uninit(shape);
    std::memcpy(out.data(), a->val().data(), out.numel() * sizeof(float));
    Node* ap = a.get();
    Var o = t.make(std::move(out), detail::rq(a), nullptr);
    Node* op = o.get();
    if (o->requires_grad)
        o->backward = [ap, op] {
            for (std::size_t i = 0; i < op->grd().numel(); ++i) ap->grd()[i] += op->grd()[i];
        };
    return o;
}

/// Concatenate along the channel axis of NCHW tensors.
inline Var concat_ch(Tape& t, Var a, Var b) {
    const Tensor &ta = a->val(), &tb = b->val();
    if (ta.rank() != 4 || tb.rank() != 4 || ta.dim(0) != tb.dim(0) || ta.dim(2) != tb.dim(2) ||
        ta.dim(3) != tb.dim(3))
        throw ValidationError("concat_ch: incompatible shapes");
    int N = ta.dim(0), Ca = ta.dim(1), Cb = tb.dim(1), H = ta.dim(2), W = ta.dim(3);
    Tensor out = Tensor::uninit({N, Ca + Cb, H, W});
    std::size_t plane = static_cast<std::size_t>(H) * W;
    for (int n = 0; n < N; ++n) {
        std::memcpy(out.data() + (static_cast<std::size_t>(n) * (Ca + Cb)) * plane,
                    ta.data() + (static_cast<std::size_t>(n) * Ca) * plane,
                    Ca * plane * sizeof(float));
        std::memcpy(out.data() + (static_cast<std::size_t>(n) * (Ca + Cb) + Ca) * plane,
                    tb.data() + (static_cast<std::size_t>(n) * Cb) * plane,
                    Cb * plane * sizeof(float));
    }
    Node *ap = a.get(), *bp = b.get();
    Var o = t.make(std::move(out), detail::rq(a, b), nullptr);
    Node* op = o.get();
    if (o->requires_grad)
        o->backward = [ap, bp, op, N, Ca, Cb, plane] {
            for (int n = 0; n < N; ++n) {
                const float* g = op->grd().data() + (static_cast<std::size_t>(n) * (Ca + Cb)) * plane;
                if (ap->requires_grad) {
                    float* ga = ap->grd().data() + (static_cast<std::size_t>(n) * Ca) * plane;
                    for (std::size_t i = 0; i < Ca * plane; ++i) ga[i] += g[i];
                }
                if (bp->requires_grad) {
                    float* gb = bp->grd().data() + (static_cast<std::size_t>(n) * Cb) * plane;
                    for (std::size_t i = 0; i < Cb * plane; ++i) gb[i] += g[Ca * plane + i];
                }
            }
        };
    return o;
}

/// Channels [c0, c1) of an NCHW tensor.
inline Var slice_ch(Tape& t, Var a, int c0, int c1) {
    const Tensor& ta = a->val();
    if (ta.rank() != 4 || c0 < 0 || c1 > ta.dim(1) || c0 >= c1)
        throw ValidationError("slice_ch: bad channel range");
    int N = ta.dim(0), C = ta.dim(1), H = ta.dim(2), W = ta.dim(3), Cs = c1 - c0;
    Tensor out = Tensor::uninit({N, Cs, H, W});
    std::size_t plane = static_cast<std::size_t>(H) * W;
    for (int n = 0; n < N; ++n)
        std::memcpy(out.data() + static_cast<std::size_t>(n) * Cs * plane,
                    ta.data() + (static_cast<std::size_t>(n) * C + c0) * plane,
                    Cs * plane * sizeof(float));
    Node* ap = a.get();
    Var o = t.make(std::move(out), detail::rq(a), nullptr);
    Node* op = o.get();
    if (o->requires_grad)
        o->backward = [ap, op, N, C, c0, Cs, plane] {
            for (int n = 0; n < N; ++n) {
                float* ga = ap->grd().data() + (static_cast<std::size_t>(n) * C + c0) * plane;
                const float* g = op->grd().data() + static_cast<std::size_t>(n) * Cs * plane;
                for (std::size_t i = 0; i < Cs * plane; ++i) ga[i] += g[i];
            }
        };
    return o;
}

/// [N,P,Q] -> [N,Q,P]
inline Var transpose12(Tape& t, Var a) {
    const Tensor& ta = a->val();
    if (ta.rank() != 3) throw ValidationError("transpose12: rank-3 tensor expected");
    int N = ta.dim(0), P = ta.dim(1), Q = ta.dim(2);
    Tensor out = Tensor::uninit({N, Q, P});
    for (int n = 0; n < N; ++n) {
        const float* src = ta.data() + static_cast<std::size_t>(n) * P * Q;
        float* dst = out.data() + static_cast<std::size_t>(n) * P * Q;
        for (int p = 0; p < P; ++p)
            for (int q = 0; q < Q; ++q) dst[q * P + p] = src[p * Q + q];
    }
    Node* ap = a.get();
    Var o = t.make(std::move(out), detail::rq(a), nullptr);
    Node* op = o.get();
    if (o->requires_grad)
        o->backward = [ap, op, N, P, Q] {
            for (int n = 0; n < N; ++n) {
                float* ga = ap->grd().data() + static_cast<std::size_t>(n) * P * Q;
                const float* g = op->grd().data() + static_cast<std::size_t>(n) * P * Q;
                for (int p = 0; p < P; ++p)
                    for (int q = 0; q < Q; ++q) ga[p * Q + q] += g[q * P + p];
            }
        };
    return o;
}

// ============================================================================
// Linear algebra
// ============================================================================

/// Batched matmul: [N,P,Q] x [N,Q,R] -> [N,P,R].
inline Var bmm(Tape& t, Var a, Var b) {
    const Tensor &ta = a->val(), &tb = b->val();
    if (ta.rank() != 3 || tb.rank() != 3 || ta.dim(0) != tb.dim(0) || ta.dim(2) != tb.dim(1))
        throw ValidationError("bmm: incompatible shapes " + ta.shape_str() + " x " + tb.shape_str());
    int N = ta.dim(0), P = ta.dim(1), Q = ta.dim(2), R = tb.dim(2);
    Tensor out = Tensor::uninit({N, P, R});
    for (int n = 0; n < N; ++n) {
        MapCM ma(ta.data() + static_cast<std::size_t>(n) * P * Q, P, Q);
        MapCM mb(tb.data() + static_cast<std::size_t>(n) * Q * R, Q, R);
        MapM mo(out.data() + static_cast<std::size_t>(n) * P * R, P, R);
        mo.noalias() = ma * mb;
    }
    Node *ap = a.get(), *bp = b.get();
    Var o = t.make(std::move(out), detail::rq(a, b), nullptr);
    Node* op = o.get();
    if (o->requires_grad)
        o->backward = [ap, bp, op, N, P, Q, R] {
            for (int n = 0; n < N; ++n) {
                MapCM go(op->grd().data() + static_cast<std::size_t>(n) * P * R, P, R);
                if (ap->requires_grad) {
                    MapCM mb(bp->val().data() + static_cast<std::size_t>(n) * Q * R, Q, R);
                    MapM ga(ap->grd().data() + static_cast<std::size_t>(n) * P * Q, P, Q);
                    ga.noalias() += go * mb.transpose();
                }
                if (bp->requires_grad) {
                    MapCM ma(ap->val().data() + static_cast<std::size_t>(n) * P * Q, P, Q);
                    MapM gb(bp->grd().data() + static_cast<std::size_t>(n) * Q * R, Q, R);
                    gb.noalias() += ma.transpose() * go;
                }
            }
        };
    return o;
}

/// Shared linear over the last axis: [N,L,D] x [D,C] -> [N,L,C].
inline Var matmul_rowwise(Tape& t, Var x, Var w) {
    const Tensor &tx = x->val(), &tw = w->val();
    if (tx.rank() != 3 || tw.rank() != 2 || tx.dim(2) != tw.dim(0))
        throw ValidationError("matmul_rowwise: incompatible shapes");
    int N = tx.dim(0), L = tx.dim(1), D = tx.dim(2), C = tw.dim(1);
    Tensor out = Tensor::uninit({N, L, C});
    {
        MapCM mx(tx.data(), static_cast<long>(N) * L, D);
        MapCM mw(tw.data(), D, C);
        MapM mo(out.data(), static_cast<long>(N) * L, C);
        mo.noalias() = mx * mw;
    }
    Node *xp = x.get(), *wp = w.get();
    Var o = t.make(std::move(out), detail::rq(x, w), nullptr);
    Node* op = o.get();
    if (o->requires_grad)
        o->backward = [xp, wp, op, N, L, D, C] {
            MapCM go(op->grd().data(), static_cast<long>(N) * L, C);
            if (xp->requires_grad) {
                MapCM mw(wp->val().data(), D, C);
                MapM gx(xp->grd().data(), static_cast<long>(N) * L, D);
                gx.noalias() += go * mw.transpose();
            }
            if (wp->requires_grad) {
                MapCM mx(xp->val().data(), static_cast<long>(N) * L, D);
                MapM gw(wp->grd().data(), D, C);
                gw.noalias() += mx.transpose() * go;
            }
        };
    return o;
}

/// Softmax over the last axis of an arbitrary-rank tensor.
inline Var softmax_last(Tape& t, Var a) {
    const Tensor& ta = a->val();
    if (ta.rank() < 1) throw ValidationError("softmax_last: rank >= 1 expected");
    int K = ta.dim(ta.rank() - 1);
    std::size_t rows = ta.numel() / K;
    Tensor out = Tensor::uninit(ta.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        const float* src = ta.data() + r * K;
        float* dst = out.data() + r * K;
        float mx = src[0];
        for (int k = 1; k < K; ++k) mx = std::max(mx, src[k]);
        ArrCMap xs(src, K);
        ArrMap ys(dst, K);
        ys = (xs - mx).exp();
        float sum = ys.sum();
        ys /= sum;
    }
    Node* ap = a.get();
    Var o = t.make(std::move(out), detail::rq(a), nullptr);
    Node* op = o.get();
    if (o->requires_grad)
        o->backward = [ap, op, rows, K] {
            for (std::size_t r = 0; r < rows; ++r) {
                const float* y = op->val().data() + r * K;
                const float* gy = op->grd().data() + r * K;
                float dot = 0.0f;
                for (int k = 0; k < K; ++k) dot += gy[k] * y[k];
                float* gx = ap->grd().data() + r * K;
                for (int k = 0; k < K; ++k) gx[k] += y[k] * (gy[k] - dot);
            }
        };
    return o;
}

// ============================================================================
// Convolution (batched im2col + GEMM)
// ============================================================================

namespace detail {

inline int conv_out_size(int in, int k, int stride, int pad) {
    return (in + 2 * pad - k) / stride + 1;
}

/// Writes sample columns into a [C*K*K x col_stride] matrix slab starting
/// at column offset col (row r begins at col + r*col_stride).
inline void im2col(const float* x, int C, int H, int W, int K, int stride, int pad, float* col,
                   std::size_t col_stride) {
    int OH = conv_out_size(H, K, stride, pad);
    int OW = conv_out_size(W, K, stride, pad);
    for (int c = 0; c < C; ++c)
        for (int ky = 0; ky < K; ++ky)
            for (int kx = 0; kx < K; ++kx) {
                float* row = col + ((static_cast<std::size_t>(c) * K + ky) * K + kx) * col_stride;
                for (int oy = 0; oy < OH; ++oy) {
                    int iy = oy * stride - pad + ky;
                    float* dst = row + static_cast<std::size_t>(oy) * OW;
                    if (iy < 0 || iy >= H) {
                        std::memset(dst, 0, OW * sizeof(float));
                        continue;
                    }
                    const float* src = x + (static_cast<std::size_t>(c) * H + iy) * W;
                    if (stride == 1) {
                        int x0 = std::max(0, pad - kx);
                        int x1 = std::min(OW, W + pad - kx);
                        for (int ox = 0; ox < x0; ++ox) dst[ox] = 0.0f;
                        if (x1 > x0)
                            std::memcpy(dst + x0, src + (x0 - pad + kx),
                                        static_cast<std::size_t>(x1 - x0) * sizeof(float));
                        for (int ox = std::max(x0, x1); ox < OW; ++ox) dst[ox] = 0.0f;
                    } else {
                        for (int ox = 0; ox < OW; ++ox) {
                            int ix = ox * stride - pad + kx;
                            dst[ox] = (ix >= 0 && ix < W) ? src[ix] : 0.0f;
                        }
                    }
                }
            }
}

inline void col2im_acc(const float* col, int C, int H, int W, int K, int stride, int pad, float* x,
                       std::size_t col_stride) {
    int OH = conv_out_size(H, K, stride, pad);
    int OW = conv_out_size(W, K, stride, pad);
    for (int c = 0; c < C; ++c)
        for (int ky = 0; ky < K; ++ky)
            for (int kx = 0; kx < K; ++kx) {
                const float* row =
                    col + ((static_cast<std::size_t>(c) * K + ky) * K + kx) * col_stride;
                for (int oy = 0; oy < OH; ++oy) {
                    int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= H) continue;
                    float* dst = x + (static_cast<std::size_t>(c) * H + iy) * W;
                    const float* src = row + static_cast<std::size_t>(oy) * OW;
                    if (stride == 1) {
                        int x0 = std::max(0, pad - kx);
                        int x1 = std::min(OW, W + pad - kx);
                        const int off = kx - pad;
                        for (int ox = x0; ox < x1; ++ox) dst[ox + off] += src[ox];
                    } else {
                        for (int ox = 0; ox < OW; ++ox) {
                            int ix = ox * stride - pad + kx;
                            if (ix >= 0 && ix < W) dst[ix] += src[ox];
                        }
                    }
                }
            }
}

} // namespace detail

/**
 * @brief 2D convolution, NCHW. Weight [Cout, Cin, K, K], bias [Cout].
 *
 * The whole batch shares one im2col matrix and one GEMM per direction.
 */
inline Var conv2d(Tape& t, Var x, Var w, Var b, int stride, int pad) {
    const Tensor &tx = x->val(), &tw = w->val();
    if (tx.rank() != 4 || tw.rank() != 4)
        throw ValidationError("conv2d: NCHW input and OIHW weight expected");
    if (tx.dim(1) != tw.dim(1))
        throw ValidationError("conv2d: channel mismatch " + tx.shape_str() + " vs " + tw.shape_str());
    if (tw.dim(2) != tw.dim(3)) throw ValidationError("conv2d: square kernels only");
    int N = tx.dim(0), C = tx.dim(1), H = tx.dim(2), W = tx.dim(3);
    int Cout = tw.dim(0), K = tw.dim(2);
    int OH = detail::conv_out_size(H, K, stride, pad);
    int OW = detail::conv_out_size(W, K, stride, pad);
    if (OH <= 0 || OW <= 0) throw ValidationError("conv2d: output collapses to zero size");
    if (b->val().numel() != static_cast<std::size_t>(Cout))
        throw ValidationError("conv2d: bias size mismatch");

    const std::size_t ck2 = static_cast<std::size_t>(C) * K * K;
    const std::size_t ohw = static_cast<std::size_t>(OH) * OW;
    const std::size_t cols = static_cast<std::size_t>(N) * ohw;

    Tensor out = Tensor::uninit({N, Cout, OH, OW});
    {
        FloatBuf col, y;
        col.resize(ck2 * cols);
        y.resize(static_cast<std::size_t>(Cout) * cols);
        for (int n = 0; n < N; ++n)
            detail::im2col(tx.data() + static_cast<std::size_t>(n) * C * H * W, C, H, W, K, stride,
                           pad, col.data() + static_cast<std::size_t>(n) * ohw, cols);
        MapCM mw(tw.data(), Cout, static_cast<long>(ck2));
        MapCM mc(col.data(), static_cast<long>(ck2), static_cast<long>(cols));
        MapM my(y.data(), Cout, static_cast<long>(cols));
        my.noalias() = mw * mc;
        // scatter [Cout x N*ohw] back to NCHW and add bias
        for (int n = 0; n < N; ++n)
            for (int co = 0; co < Cout; ++co) {
                const float* src =
                    y.data() + static_cast<std::size_t>(co) * cols + static_cast<std::size_t>(n) * ohw;
                float* dst = out.data() + (static_cast<std::size_t>(n) * Cout + co) * ohw;
                const float bias = b->val()[static_cast<std::size_t>(co)];
                for (std::size_t i = 0; i < ohw; ++i) dst[i] = src[i] + bias;
            }
    }

    Node *xp = x.get(), *wp = w.get(), *bp = b.get();
    Var o = t.make(std::move(out), xp->requires_grad || wp->requires_grad || bp->requires_grad,
                   nullptr);
    Node* op = o.get();
    if (o->requires_grad)
        o->backward = [xp, wp, bp, op, N, C, H, W, Cout, K, stride, pad, ck2, ohw, cols] {
            FloatBuf go;
            go.resize(static_cast<std::size_t>(Cout) * cols);
            for (int n = 0; n < N; ++n)
                for (int co = 0; co < Cout; ++co)
                    std::memcpy(go.data() + static_cast<std::size_t>(co) * cols +
                                    static_cast<std::size_t>(n) * ohw,
                                op->grd().data() + (static_cast<std::size_t>(n) * Cout + co) * ohw,
                                ohw * sizeof(float));
            MapCM mgo(go.data(), Cout, static_cast<long>(cols));
            if (bp->requires_grad)
                for (int co = 0; co < Cout; ++co) {
                    double acc = 0.0;
                    const float* g = go.data() + static_cast<std::size_t>(co) * cols;
                    for (std::size_t i = 0; i < cols; ++i) acc += g[i];
                    bp->grd()[static_cast<std::size_t>(co)] += static_cast<float>(acc);
                }
            if (wp->requires_grad) {
                FloatBuf col;
                col.resize(ck2 * cols);
                for (int n = 0; n < N; ++n)
                    detail::im2col(xp->val().data() + static_cast<std::size_t>(n) * C * H * W, C, H,
                                   W, K, stride, pad,
                                   col.data() + static_cast<std::size_t>(n) * ohw, cols);
                MapCM mc(col.data(), static_cast<long>(ck2), static_cast<long>(cols));
                MapM gw(wp->grd().data(), Cout, static_cast<long>(ck2));
                gw.noalias() += mgo * mc.transpose();
            }
            if (xp->requires_grad) {
                FloatBuf dcol;
                dcol.resize(ck2 * cols);
                MapCM mw(wp->val().data(), Cout, static_cast<long>(ck2));
                MapM gc(dcol.data(), static_cast<long>(ck2), static_cast<long>(cols));
                gc.noalias() = mw.transpose() * mgo;
                for (int n = 0; n < N; ++n)
                    detail::col2im_acc(dcol.data() + static_cast<std::size_t>(n) * ohw, C, H, W, K,
                                       stride, pad,
                                       xp->grd().data() + static_cast<std::size_t>(n) * C * H * W,
                                       cols);
            }
        };
    return o;
}

/// Nearest-neighbor 2x upsampling of NCHW tensors.
inline Var upsample_nearest2x(Tape& t, Var a) {
    const Tensor& ta = a->val();
    if (ta.rank() != 4) throw ValidationError("upsample_nearest2x: NCHW expected");
    int N = ta.dim(0), C = ta.dim(1), H = ta.dim(2), W = ta.dim(3);
    Tensor out = Tensor::uninit({N, C, H * 2, W * 2});
    for (int nc = 0; nc < N * C; ++nc) {
        const float* src = ta.data() + static_cast<std::size_t>(nc) * H * W;
        float* dst = out.data() + static_cast<std::size_t>(nc) * H * W * 4;
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                float v = src[y * W + x];
                float* d = dst + (2 * y) * (2 * W) + 2 * x;
                d[0] = v;
                d[1] = v;
                d[2 * W] = v;
                d[2 * W + 1] = v;
            }
    }
    Node* ap = a.get();
    Var o = t.make(std::move(out), detail::rq(a), nullptr);
    Node* op = o.get();
    if (o->requires_grad)
        o->backward = [ap, op, N, C, H, W] {
            for (int nc = 0; nc < N * C; ++nc) {
                float* ga = ap->grd().data() + static_cast<std::size_t>(nc) * H * W;
                const float* g = op->grd().data() + static_cast<std::size_t>(nc) * H * W * 4;
                for (int y = 0; y < H; ++y)
                    for (int x = 0; x < W; ++x) {
                        const float* s = g + (2 * y) * (2 * W) + 2 * x;
                        ga[y * W + x] += s[0] + s[1] + s[2 * W] + s[2 * W + 1];
                    }
            }
        };
    return o;
}

// ============================================================================
// Normalization
// ============================================================================

/**
 * @brief GroupNorm over NCHW with per-channel affine.
 *
 * groups == C gives InstanceNorm.
 */
inline Var group_norm(Tape& t, Var x, Var gamma, Var beta, int groups, float eps = 1e-5f) {
    const Tensor& tx = x->val();
    if (tx.rank() != 4) throw ValidationError("group_norm: NCHW expected");
    int N = tx.dim(0), C = tx.dim(1), H = tx.dim(2), W = tx.dim(3);
    if (groups <= 0 || C % groups != 0)
        throw ValidationError("group_norm: groups must divide channels");
    if (gamma->val().numel() != static_cast<std::size_t>(C) ||
        beta->val().numel() != static_cast<std::size_t>(C))
        throw ValidationError("group_norm: affine size mismatch");
    int Cg = C / groups;
    std::size_t gsz = static_cast<std::size_t>(Cg) * H * W;
    std::size_t plane = static_cast<std::size_t>(H) * W;

    Tensor out = Tensor::uninit(tx.shape());
    auto mean = std::make_shared<std::vector<float>>(static_cast<std::size_t>(N) * groups);
    auto istd = std::make_shared<std::vector<float>>(static_cast<std::size_t>(N) * groups);
    for (int n = 0; n < N; ++n)
        for (int g = 0; g < groups; ++g) {
            const float* src = tx.data() + (static_cast<std::size_t>(n) * C + g * Cg) * plane;
            double mu = 0.0;
            for (std::size_t i = 0; i < gsz; ++i) mu += src[i];
            mu /= static_cast<double>(gsz);
            double var = 0.0;
            for (std::size_t i = 0; i < gsz; ++i) {
                double d = src[i] - mu;
                var += d * d;
            }
            var /= static_cast<double>(gsz);
            float is = static_cast<float>(1.0 / std::sqrt(var + eps));
            (*mean)[static_cast<std::size_t>(n) * groups + g] = static_cast<float>(mu);
            (*istd)[static_cast<std::size_t>(n) * groups + g] = is;
            float* dst = out.data() + (static_cast<std::size_t>(n) * C + g * Cg) * plane;
            for (int cg = 0; cg < Cg; ++cg) {
                int c = g * Cg + cg;
                float ga = gamma->val()[static_cast<std::size_t>(c)];
                float be = beta->val()[static_cast<std::size_t>(c)];
                for (std::size_t i = 0; i < plane; ++i) {
                    float xh = (src[cg * plane + i] - static_cast<float>(mu)) * is;
                    dst[cg * plane + i] = ga * xh + be;
                }
            }
        }
    Node *xp = x.get(), *gp = gamma.get(), *bp = beta.get();
    Var o = t.make(std::move(out), xp->requires_grad || gp->requires_grad || bp->requires_grad,
                   nullptr);
    Node* op = o.get();
    if (o->requires_grad)
        o->backward = [xp, gp, bp, op, mean, istd, N, C, groups, Cg, plane, gsz] {
            for (int n = 0; n < N; ++n)
                for (int g = 0; g < groups; ++g) {
                    const float mu = (*mean)[static_cast<std::size_t>(n) * groups + g];
                    const float is = (*istd)[static_cast<std::size_t>(n) * groups + g];
                    const float* xv =
                        xp->val().data() + (static_cast<std::size_t>(n) * C + g * Cg) * plane;
                    const float* gy =
                        op->grd().data() + (static_cast<std::size_t>(n) * C + g * Cg) * plane;

                    double sum_dxh = 0.0, sum_dxh_xh = 0.0;
                    for (int cg = 0; cg < Cg; ++cg) {
                        int c = g * Cg + cg;
                        float ga = gp->val()[static_cast<std::size_t>(c)];
                        double dgamma = 0.0, dbeta = 0.0;
                        for (std::size_t i = 0; i < plane; ++i) {
                            float xh = (xv[cg * plane + i] - mu) * is;
                            float gyv = gy[cg * plane + i];
                            dgamma += static_cast<double>(gyv) * xh;
                            dbeta += gyv;
                            float dxh = gyv * ga;
                            sum_dxh += dxh;
                            sum_dxh_xh += static_cast<double>(dxh) * xh;
                        }
                        if (gp->requires_grad)
                            gp->grd()[static_cast<std::size_t>(c)] += static_cast<float>(dgamma);
                        if (bp->requires_grad)
                            bp->grd()[static_cast<std::size_t>(c)] += static_cast<float>(dbeta);
                    }
                    if (xp->requires_grad) {
                        float* gx =
                            xp->grd().data() + (static_cast<std::size_t>(n) * C + g * Cg) * plane;
                        const float inv_m = 1.0f / static_cast<float>(gsz);
                        for (int cg = 0; cg < Cg; ++cg) {
                            int c = g * Cg + cg;
                            float ga = gp->val()[static_cast<std::size_t>(c)];
                            for (std::size_t i = 0; i < plane; ++i) {
                                float xh = (xv[cg * plane + i] - mu) * is;
                                float dxh = gy[cg * plane + i] * ga;
                                gx[cg * plane + i] +=
                                    is * (dxh - inv_m * static_cast<float>(sum_dxh) -
                                          xh * inv_m * static_cast<float>(sum_dxh_xh));
                            }
                        }
                    }
                }
        };
    return o;
}

/**
 * @brief Fused GroupNorm -> SiLU -> dropout.
 *
 * One tape node instead of three; the resnet blocks run through it on
 * every step, so the saved activations and gradients matter. p = 0 skips
 * the dropout mask entirely. The pre-activation buffer feeds the SiLU
 * derivative in the backward pass, computed with vectorized exp.
 */
inline Var group_norm_silu_dropout(Tape& t, Var x, Var gamma, Var beta, int groups, float p,
                                   Rng& rng, float eps = 1e-5f) {
    const Tensor& tx = x->val();
    if (tx.rank() != 4) throw ValidationError("group_norm_silu_dropout: NCHW expected");
    int N = tx.dim(0), C = tx.dim(1), H = tx.dim(2), W = tx.dim(3);
    if (groups <= 0 || C % groups != 0)
        throw ValidationError("group_norm_silu_dropout: groups must divide channels");
    if (p >= 1.0f) throw ValidationError("group_norm_silu_dropout: p must be < 1");
    int Cg = C / groups;
    std::size_t gsz = static_cast<std::size_t>(Cg) * H * W;
    std::size_t plane = static_cast<std::size_t>(H) * W;
    const bool has_drop = p > 0.0f;

    Tensor out = Tensor::uninit(tx.shape());
    auto mean = std::make_shared<std::vector<float>>(static_cast<std::size_t>(N) * groups);
    auto istd = std::make_shared<std::vector<float>>(static_cast<std::size_t>(N) * groups);
    auto pre = std::make_shared<FloatBuf>(); // affine outputs, pre-SiLU
    pre->resize(tx.numel());
    auto mask = std::make_shared<FloatBuf>();
    const float keep_scale = has_drop ? 1.0f / (1.0f - p) : 1.0f;
    if (has_drop) mask->resize(tx.numel());

    for (int n = 0; n < N; ++n)
        for (int g = 0; g < groups; ++g) {
            const std::size_t base = (static_cast<std::size_t>(n) * C + g * Cg) * plane;
            const float* src = tx.data() + base;
            double mu = 0.0;
            for (std::size_t i = 0; i < gsz; ++i) mu += src[i];
            mu /= static_cast<double>(gsz);
            double var = 0.0;
            for (std::size_t i = 0; i < gsz; ++i) {
                double d = src[i] - mu;
                var += d * d;
            }
            var /= static_cast<double>(gsz);
            float is = static_cast<float>(1.0 / std::sqrt(var + eps));
            float muf = static_cast<float>(mu);
            (*mean)[static_cast<std::size_t>(n) * groups + g] = muf;
            (*istd)[static_cast<std::size_t>(n) * groups + g] = is;
            for (int cg = 0; cg < Cg; ++cg) {
                int c = g * Cg + cg;
                const float ga = gamma->val()[static_cast<std::size_t>(c)] * is;
                const float be =
                    beta->val()[static_cast<std::size_t>(c)] - muf * ga;
                float* dst = pre->data() + base + cg * plane;
                const float* s = src + cg * plane;
                for (std::size_t i = 0; i < plane; ++i) dst[i] = ga * s[i] + be;
            }
        }
    {
        ArrCMap h(pre->data(), static_cast<long>(tx.numel()));
        ArrMap y(out.data(), static_cast<long>(tx.numel()));
        y = h / (1.0f + (-h).exp());
    }
    if (has_drop)
        for (std::size_t i = 0; i < tx.numel(); ++i) {
            float m = (rng.uniform() < p) ? 0.0f : keep_scale;
            (*mask)[i] = m;
            out[i] *= m;
        }

    Node *xp = x.get(), *gp = gamma.get(), *bp = beta.get();
    Var o = t.make(std::move(out), xp->requires_grad || gp->requires_grad || bp->requires_grad,
                   nullptr);
    Node* op = o.get();
    if (o->requires_grad)
        o->backward = [xp, gp, bp, op, mean, istd, pre, mask, has_drop, N, C, groups, Cg, plane,
                       gsz] {
            const std::size_t total = op->grd().numel();
            // dh = (masked) incoming grad * silu'(pre), vectorized once
            FloatBuf dh;
            dh.resize(total);
            {
                ArrCMap h(pre->data(), static_cast<long>(total));
                ArrMap d(dh.data(), static_cast<long>(total));
                d = 1.0f / (1.0f + (-h).exp());
                d = d * (1.0f + h * (1.0f - d));
            }
            if (has_drop)
                for (std::size_t i = 0; i < total; ++i)
                    dh[i] *= op->grd()[i] * (*mask)[i];
            else
                for (std::size_t i = 0; i < total; ++i) dh[i] *= op->grd()[i];

            for (int n = 0; n < N; ++n)
                for (int g = 0; g < groups; ++g) {
                    const float mu = (*mean)[static_cast<std::size_t>(n) * groups + g];
                    const float is = (*istd)[static_cast<std::size_t>(n) * groups + g];
                    const std::size_t base = (static_cast<std::size_t>(n) * C + g * Cg) * plane;
                    const float* xv = xp->val().data() + base;

                    double sum_dxh = 0.0, sum_dxh_xh = 0.0;
                    for (int cg = 0; cg < Cg; ++cg) {
                        int c = g * Cg + cg;
                        float ga = gp->val()[static_cast<std::size_t>(c)];
                        const float* dhc = dh.data() + base + cg * plane;
                        const float* xc = xv + cg * plane;
                        double dgamma = 0.0, dbeta = 0.0;
                        for (std::size_t i = 0; i < plane; ++i) {
                            float xh = (xc[i] - mu) * is;
                            dgamma += static_cast<double>(dhc[i]) * xh;
                            dbeta += dhc[i];
                            float dxh = dhc[i] * ga;
                            sum_dxh += dxh;
                            sum_dxh_xh += static_cast<double>(dxh) * xh;
                        }
                        if (gp->requires_grad)
                            gp->grd()[static_cast<std::size_t>(c)] += static_cast<float>(dgamma);
                        if (bp->requires_grad)
                            bp->grd()[static_cast<std::size_t>(c)] += static_cast<float>(dbeta);
                    }
                    if (xp->requires_grad) {
                        float* gx = xp->grd().data() + base;
                        const float inv_m = 1.0f / static_cast<float>(gsz);
                        const float c1 = inv_m * static_cast<float>(sum_dxh);
                        const float c2 = inv_m * static_cast<float>(sum_dxh_xh);
                        for (int cg = 0; cg < Cg; ++cg) {
                            int c = g * Cg + cg;
                            float ga = gp->val()[static_cast<std::size_t>(c)];
                            const float* dhc = dh.data() + base + cg * plane;
                            const float* xc = xv + cg * plane;
                            float* gxc = gx + cg * plane;
                            for (std::size_t i = 0; i < plane; ++i) {
                                float xh = (xc[i] - mu) * is;
                                gxc[i] += is * (dhc[i] * ga - c1 - xh * c2);
                            }
                        }
                    }
                }
        };
    return o;
}

// ============================================================================
// Reductions
// ============================================================================

/// Mean of all elements -> scalar [1].
inline Var mean_all(Tape& t, Var a) {
    const Tensor& ta = a->val();
    double acc = 0.0;
    for (std::size_t i = 0; i < ta.numel(); ++i) acc += ta[i];
    Tensor out = Tensor::uninit({1});
    out[0] = static_cast<float>(acc / static_cast<double>(ta.numel()));
    Node* ap = a.get();
    Var o = t.make(std::move(out), detail::rq(a), nullptr);
    Node* op = o.get();
    if (o->requires_grad)
        o->backward = [ap, op] {
            float g = op->grd()[0] / static_cast<float>(ap->val().numel());
            for (std::size_t i = 0; i < ap->grd().numel(); ++i) ap->grd()[i] += g;
        };
    return o;
}

/// Per-sample mean over all non-batch axes: [N,...] -> [N].
inline Var mean_per_sample(Tape& t, Var a) {
    const Tensor& ta = a->val();
    if (ta.rank() < 2) throw ValidationError("mean_per_sample: rank >= 2 expected");
    int N = ta.dim(0);
    std::size_t per = ta.numel() / N;
    Tensor out = Tensor::uninit({N});
    for (int n = 0; n < N; ++n) {
        double acc = 0.0;
        const float* src = ta.data() + static_cast<std::size_t>(n) * per;
        for (std::size_t i = 0; i < per; ++i) acc += src[i];
        out[static_cast<std::size_t>(n)] = static_cast<float>(acc / static_cast<double>(per));
    }
    Node* ap = a.get();
    Var o = t.make(std::move(out), detail::rq(a), nullptr);
    Node* op = o.get();
    if (o->requires_grad)
        o->backward = [ap, op, N, per] {
            for (int n = 0; n < N; ++n) {
                float g = op->grd()[static_cast<std::size_t>(n)] / static_cast<float>(per);
                float* ga = ap->grd().data() + static_cast<std::size_t>(n) * per;
                for (std::size_t i = 0; i < per; ++i) ga[i] += g;
            }
        };
    return o;
}

/// Per-sample mean absolute error between same-shape tensors: -> [N].
inline Var l1_per_sample(Tape& t, Var a, Var b) {
    detail::check_shape(a, b, "l1_per_sample");
    const Tensor& ta = a->val();
    if (ta.rank() < 2) throw ValidationError("l1_per_sample: rank >= 2 expected");
    int N = ta.dim(0);
    std::size_t per = ta.numel() / N;
    Tensor out = Tensor::uninit({N});
    for (int n = 0; n < N; ++n) {
        const float* pa = ta.data() + static_cast<std::size_t>(n) * per;
        const float* pb = b->val().data() + static_cast<std::size_t>(n) * per;
        double acc = 0.0;
        for (std::size_t i = 0; i < per; ++i) acc += std::abs(static_cast<double>(pa[i]) - pb[i]);
        out[static_cast<std::size_t>(n)] = static_cast<float>(acc / static_cast<double>(per));
    }
    Node *ap = a.get(), *bp = b.get();
    Var o = t.make(std::move(out), detail::rq(a, b), nullptr);
    Node* op = o.get();
    if (o->requires_grad)
        o->backward = [ap, bp, op, N, per] {
            for (int n = 0; n < N; ++n) {
                float g = op->grd()[static_cast<std::size_t>(n)] / static_cast<float>(per);
                const float* pa = ap->val().data() + static_cast<std::size_t>(n) * per;
                const float* pb = bp->val().data() + static_cast<std::size_t>(n) * per;
                for (std::size_t i = 0; i < per; ++i) {
                    float s = pa[i] > pb[i] ? 1.0f : (pa[i] < pb[i] ? -1.0f : 0.0f);
                    if (ap->requires_grad)
                        ap->grd().data()[static_cast<std::size_t>(n) * per + i] += g * s;
                    if (bp->requires_grad)
                        bp->grd().data()[static_cast<std::size_t>(n) * per + i] -= g * s;
                }
            }
        };
    return o;
}

/// Elementwise minimum; ties route the gradient to the first argument.
inline Var min_ew(Tape& t, Var a, Var b) {
    detail::check_shape(a, b, "min_ew");
    Tensor out = Tensor::uninit(a->val().shape());
    auto pick_a = std::make_shared<std::vector<char>>(out.numel());
    for (std::size_t i = 0; i < out.numel(); ++i) {
        bool fa = a->val()[i] <= b->val()[i];
        (*pick_a)[i] = fa ? 1 : 0;
        out[i] = fa ? a->val()[i] : b->val()[i];
    }
    Node *ap = a.get(), *bp = b.get();
    Var o = t.make(std::move(out), detail::rq(a, b), nullptr);
    Node* op = o.get();
    if (o->requires_grad)
        o->backward = [ap, bp, op, pick_a] {
            for (std::size_t i = 0; i < op->grd().numel(); ++i) {
                if ((*pick_a)[i]) {
                    if (ap->requires_grad) ap->grd()[i] += op->grd()[i];
                } else {
                    if (bp->requires_grad) bp->grd()[i] += op->grd()[i];
                }
            }
        };
    return o;
}

} // namespace demorph::nn
