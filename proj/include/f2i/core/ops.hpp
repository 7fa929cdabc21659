#pragma once

#include <Eigen/Core>
#include <cmath>

#include "f2i/core/autodiff.hpp"

namespace f2i {
namespace ops {

template <class T>
using EMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using EMap = Eigen::Map<EMat<T>>;
template <class T>
using ECMap = Eigen::Map<const EMat<T>>;

template <class T>
EMap<T> mat(TensorT<T>& t, int64_t rows, int64_t cols) {
    return EMap<T>(t.data(), rows, cols);
}
template <class T>
ECMap<T> cmat(const TensorT<T>& t, int64_t rows, int64_t cols) {
    return ECMap<T>(t.data(), rows, cols);
}

// ---------------------------------------------------------------- elementwise

template <class T>
VarT<T> add(GraphT<T>& g, VarT<T> a, VarT<T> b) {
    if (!a->val.same_shape(b->val)) throw ShapeError("add: shape mismatch");
    TensorT<T> out = a->val;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] += b->val[i];
    return g.node(std::move(out), {a, b}, [a, b](NodeT<T>& n) {
        if (a->needs_grad) {
            auto& da = a->g();
            for (int64_t i = 0; i < da.numel(); ++i) da[i] += n.grad[i];
        }
        if (b->needs_grad) {
            auto& db = b->g();
            for (int64_t i = 0; i < db.numel(); ++i) db[i] += n.grad[i];
        }
    });
}

template <class T>
VarT<T> sub(GraphT<T>& g, VarT<T> a, VarT<T> b) {
    if (!a->val.same_shape(b->val)) throw ShapeError("sub: shape mismatch");
    TensorT<T> out = a->val;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] -= b->val[i];
    return g.node(std::move(out), {a, b}, [a, b](NodeT<T>& n) {
        if (a->needs_grad) {
            auto& da = a->g();
            for (int64_t i = 0; i < da.numel(); ++i) da[i] += n.grad[i];
        }
        if (b->needs_grad) {
            auto& db = b->g();
            for (int64_t i = 0; i < db.numel(); ++i) db[i] -= n.grad[i];
        }
    });
}

template <class T>
VarT<T> mul(GraphT<T>& g, VarT<T> a, VarT<T> b) {
    if (!a->val.same_shape(b->val)) throw ShapeError("mul: shape mismatch");
    TensorT<T> out = a->val;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] *= b->val[i];
    return g.node(std::move(out), {a, b}, [a, b](NodeT<T>& n) {
        if (a->needs_grad) {
            auto& da = a->g();
            for (int64_t i = 0; i < da.numel(); ++i) da[i] += n.grad[i] * b->val[i];
        }
        if (b->needs_grad) {
            auto& db = b->g();
            for (int64_t i = 0; i < db.numel(); ++i) db[i] += n.grad[i] * a->val[i];
        }
    });
}

template <class T>
VarT<T> scale(GraphT<T>& g, VarT<T> a, double c) {
    TensorT<T> out = a->val;
    T tc = static_cast<T>(c);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] *= tc;
    return g.node(std::move(out), {a}, [a, tc](NodeT<T>& n) {
        auto& da = a->g();
        for (int64_t i = 0; i < da.numel(); ++i) da[i] += tc * n.grad[i];
    });
}

/// x + b where b's shape is a suffix of x's shape (bias, positional tables).
template <class T>
VarT<T> add_bcast(GraphT<T>& g, VarT<T> x, VarT<T> b) {
    int64_t bn = b->val.numel();
    int64_t xn = x->val.numel();
    if (bn == 0 || xn % bn != 0) throw ShapeError("add_bcast: size mismatch");
    TensorT<T> out = x->val;
    for (int64_t i = 0; i < xn; ++i) out[i] += b->val[i % bn];
    return g.node(std::move(out), {x, b}, [x, b, xn, bn](NodeT<T>& n) {
        if (x->needs_grad) {
            auto& dx = x->g();
            for (int64_t i = 0; i < xn; ++i) dx[i] += n.grad[i];
        }
        if (b->needs_grad) {
            auto& db = b->g();
            for (int64_t i = 0; i < xn; ++i) db[i % bn] += n.grad[i];
        }
    });
}

/// Stack n copies of x along a new leading axis.
template <class T>
VarT<T> bcast_rows(GraphT<T>& g, VarT<T> x, int64_t n_rows) {
    std::vector<int64_t> shape = {n_rows};
    for (int64_t d : x->val.shape()) shape.push_back(d);
    int64_t xn = x->val.numel();
    TensorT<T> out(shape);
    for (int64_t r = 0; r < n_rows; ++r)
        std::copy(x->val.data(), x->val.data() + xn, out.data() + r * xn);
    return g.node(std::move(out), {x}, [x, n_rows, xn](NodeT<T>& n) {
        auto& dx = x->g();
        for (int64_t r = 0; r < n_rows; ++r)
            for (int64_t i = 0; i < xn; ++i) dx[i] += n.grad[r * xn + i];
    });
}

/// [N, 1, D] -> [N, L, D], repeating the single middle row.
template <class T>
VarT<T> repeat_mid(GraphT<T>& g, VarT<T> x, int64_t L) {
    if (x->val.rank() != 3 || x->val.dim(1) != 1) throw ShapeError("repeat_mid: [N,1,D] required");
    int64_t N = x->val.dim(0), D = x->val.dim(2);
    TensorT<T> out({N, L, D});
    for (int64_t n = 0; n < N; ++n)
        for (int64_t l = 0; l < L; ++l)
            std::copy(x->val.data() + n * D, x->val.data() + (n + 1) * D,
                      out.data() + (n * L + l) * D);
    return g.node(std::move(out), {x}, [x, N, L, D](NodeT<T>& n) {
        auto& dx = x->g();
        for (int64_t nn = 0; nn < N; ++nn)
            for (int64_t l = 0; l < L; ++l) {
                const T* src = n.grad.data() + (nn * L + l) * D;
                for (int64_t d = 0; d < D; ++d) dx[nn * D + d] += src[d];
            }
    });
}

// ---------------------------------------------------------------- activations

template <class T>
VarT<T> gelu(GraphT<T>& g, VarT<T> x) {
    TensorT<T> out = x->val;
    for (int64_t i = 0; i < out.numel(); ++i) {
        double v = static_cast<double>(out[i]);
        out[i] = static_cast<T>(0.5 * v * (1.0 + std::erf(v * 0.7071067811865475244)));
    }
    return g.node(std::move(out), {x}, [x](NodeT<T>& n) {
        auto& dx = x->g();
        for (int64_t i = 0; i < dx.numel(); ++i) {
            double v = static_cast<double>(x->val[i]);
            double cdf = 0.5 * (1.0 + std::erf(v * 0.7071067811865475244));
            double pdf = 0.3989422804014326779 * std::exp(-0.5 * v * v);
            dx[i] += n.grad[i] * static_cast<T>(cdf + v * pdf);
        }
    });
}

template <class T>
VarT<T> silu(GraphT<T>& g, VarT<T> x) {
    TensorT<T> out = x->val;
    for (int64_t i = 0; i < out.numel(); ++i) {
        double v = static_cast<double>(out[i]);
        out[i] = static_cast<T>(v / (1.0 + std::exp(-v)));
    }
    return g.node(std::move(out), {x}, [x](NodeT<T>& n) {
        auto& dx = x->g();
        for (int64_t i = 0; i < dx.numel(); ++i) {
            double v = static_cast<double>(x->val[i]);
            double s = 1.0 / (1.0 + std::exp(-v));
            dx[i] += n.grad[i] * static_cast<T>(s * (1.0 + v * (1.0 - s)));
        }
    });
}

// ---------------------------------------------------------------- shape moves

template <class T>
VarT<T> reshape(GraphT<T>& g, VarT<T> x, std::vector<int64_t> shape) {
    TensorT<T> out = x->val.reshaped(std::move(shape));
    return g.node(std::move(out), {x}, [x](NodeT<T>& n) {
        auto& dx = x->g();
        for (int64_t i = 0; i < dx.numel(); ++i) dx[i] += n.grad[i];
    });
}

/// [A,B,C,D] -> [A,C,B,D]; used to split/merge attention heads.
template <class T>
VarT<T> permute_0213(GraphT<T>& g, VarT<T> x) {
    if (x->val.rank() != 4) throw ShapeError("permute_0213: rank-4 required");
    int64_t A = x->val.dim(0), B = x->val.dim(1), C = x->val.dim(2), D = x->val.dim(3);
    TensorT<T> out({A, C, B, D});
    for (int64_t a = 0; a < A; ++a)
        for (int64_t b = 0; b < B; ++b)
            for (int64_t c = 0; c < C; ++c) {
                const T* src = x->val.data() + ((a * B + b) * C + c) * D;
                T* dst = out.data() + ((a * C + c) * B + b) * D;
                std::copy(src, src + D, dst);
            }
    return g.node(std::move(out), {x}, [x, A, B, C, D](NodeT<T>& n) {
        auto& dx = x->g();
        for (int64_t a = 0; a < A; ++a)
            for (int64_t b = 0; b < B; ++b)
                for (int64_t c = 0; c < C; ++c) {
                    const T* src = n.grad.data() + ((a * C + c) * B + b) * D;
                    T* dst = dx.data() + ((a * B + b) * C + c) * D;
                    for (int64_t d = 0; d < D; ++d) dst[d] += src[d];
                }
    });
}

namespace detail {
inline void axis_strides(const std::vector<int64_t>& shape, int axis, int64_t& outer,
                         int64_t& len, int64_t& inner) {
    outer = 1;
    for (int i = 0; i < axis; ++i) outer *= shape[static_cast<size_t>(i)];
    len = shape[static_cast<size_t>(axis)];
    inner = 1;
    for (size_t i = static_cast<size_t>(axis) + 1; i < shape.size(); ++i) inner *= shape[i];
}
}  // namespace detail

template <class T>
VarT<T> slice(GraphT<T>& g, VarT<T> x, int axis, int64_t start, int64_t len) {
    const auto& shape = x->val.shape();
    if (axis < 0 || axis >= x->val.rank()) throw ShapeError("slice: bad axis");
    if (start < 0 || start + len > shape[static_cast<size_t>(axis)])
        throw ShapeError("slice: out of range");
    int64_t outer, alen, inner;
    detail::axis_strides(shape, axis, outer, alen, inner);
    std::vector<int64_t> oshape = shape;
    oshape[static_cast<size_t>(axis)] = len;
    TensorT<T> out(oshape);
    for (int64_t o = 0; o < outer; ++o)
        std::copy(x->val.data() + (o * alen + start) * inner,
                  x->val.data() + (o * alen + start + len) * inner,
                  out.data() + o * len * inner);
    return g.node(std::move(out), {x}, [x, outer, alen, inner, start, len](NodeT<T>& n) {
        auto& dx = x->g();
        for (int64_t o = 0; o < outer; ++o) {
            const T* src = n.grad.data() + o * len * inner;
            T* dst = dx.data() + (o * alen + start) * inner;
            for (int64_t i = 0; i < len * inner; ++i) dst[i] += src[i];
        }
    });
}

template <class T>
VarT<T> concat(GraphT<T>& g, VarT<T> a, VarT<T> b, int axis) {
    const auto& sa = a->val.shape();
    const auto& sb = b->val.shape();
    if (sa.size() != sb.size()) throw ShapeError("concat: rank mismatch");
    for (size_t i = 0; i < sa.size(); ++i)
        if (static_cast<int>(i) != axis && sa[i] != sb[i])
            throw ShapeError("concat: shape mismatch");
    int64_t outer, la, inner;
    detail::axis_strides(sa, axis, outer, la, inner);
    int64_t lb = sb[static_cast<size_t>(axis)];
    std::vector<int64_t> oshape = sa;
    oshape[static_cast<size_t>(axis)] = la + lb;
    TensorT<T> out(oshape);
    for (int64_t o = 0; o < outer; ++o) {
        std::copy(a->val.data() + o * la * inner, a->val.data() + (o + 1) * la * inner,
                  out.data() + o * (la + lb) * inner);
        std::copy(b->val.data() + o * lb * inner, b->val.data() + (o + 1) * lb * inner,
                  out.data() + (o * (la + lb) + la) * inner);
    }
    return g.node(std::move(out), {a, b}, [a, b, outer, la, lb, inner](NodeT<T>& n) {
        if (a->needs_grad) {
            auto& da = a->g();
            for (int64_t o = 0; o < outer; ++o) {
                const T* src = n.grad.data() + o * (la + lb) * inner;
                T* dst = da.data() + o * la * inner;
                for (int64_t i = 0; i < la * inner; ++i) dst[i] += src[i];
            }
        }
        if (b->needs_grad) {
            auto& db = b->g();
            for (int64_t o = 0; o < outer; ++o) {
                const T* src = n.grad.data() + (o * (la + lb) + la) * inner;
                T* dst = db.data() + o * lb * inner;
                for (int64_t i = 0; i < lb * inner; ++i) dst[i] += src[i];
            }
        }
    });
}

// ---------------------------------------------------------------- linear algebra

template <class T>
VarT<T> matmul(GraphT<T>& g, VarT<T> a, VarT<T> b) {
    if (a->val.rank() != 2 || b->val.rank() != 2 || a->val.dim(1) != b->val.dim(0))
        throw ShapeError("matmul: shape mismatch");
    int64_t M = a->val.dim(0), K = a->val.dim(1), N = b->val.dim(1);
    TensorT<T> out({M, N});
    mat(out, M, N).noalias() = cmat(a->val, M, K) * cmat(b->val, K, N);
    return g.node(std::move(out), {a, b}, [a, b, M, K, N](NodeT<T>& n) {
        auto G = cmat(n.grad, M, N);
        if (a->needs_grad) mat(a->g(), M, K).noalias() += G * cmat(b->val, K, N).transpose();
        if (b->needs_grad) mat(b->g(), K, N).noalias() += cmat(a->val, M, K).transpose() * G;
    });
}

/// Batched matmul on rank-3 tensors with optional transposes.
template <class T>
VarT<T> bmm(GraphT<T>& g, VarT<T> a, VarT<T> b, bool ta = false, bool tb = false) {
    if (a->val.rank() != 3 || b->val.rank() != 3 || a->val.dim(0) != b->val.dim(0))
        throw ShapeError("bmm: rank/batch mismatch");
    int64_t B = a->val.dim(0);
    int64_t M = ta ? a->val.dim(2) : a->val.dim(1);
    int64_t K = ta ? a->val.dim(1) : a->val.dim(2);
    int64_t Kb = tb ? b->val.dim(2) : b->val.dim(1);
    int64_t N = tb ? b->val.dim(1) : b->val.dim(2);
    if (K != Kb) throw ShapeError("bmm: inner dim mismatch");
    TensorT<T> out({B, M, N});
    int64_t an = a->val.dim(1) * a->val.dim(2), bn = b->val.dim(1) * b->val.dim(2);
    for (int64_t i = 0; i < B; ++i) {
        ECMap<T> A(a->val.data() + i * an, a->val.dim(1), a->val.dim(2));
        ECMap<T> Bm(b->val.data() + i * bn, b->val.dim(1), b->val.dim(2));
        EMap<T> C(out.data() + i * M * N, M, N);
        if (!ta && !tb)
            C.noalias() = A * Bm;
        else if (!ta && tb)
            C.noalias() = A * Bm.transpose();
        else if (ta && !tb)
            C.noalias() = A.transpose() * Bm;
        else
            C.noalias() = A.transpose() * Bm.transpose();
    }
    return g.node(std::move(out), {a, b}, [a, b, ta, tb, B, M, N, an, bn](NodeT<T>& n) {
        for (int64_t i = 0; i < B; ++i) {
            ECMap<T> A(a->val.data() + i * an, a->val.dim(1), a->val.dim(2));
            ECMap<T> Bm(b->val.data() + i * bn, b->val.dim(1), b->val.dim(2));
            ECMap<T> G(n.grad.data() + i * M * N, M, N);
            if (a->needs_grad) {
                EMap<T> dA(a->g().data() + i * an, a->val.dim(1), a->val.dim(2));
                if (!ta)
                    dA.noalias() += tb ? (G * Bm).eval() : (G * Bm.transpose()).eval();
                else
                    dA.noalias() += tb ? (Bm.transpose() * G.transpose()).eval()
                                       : (Bm * G.transpose()).eval();
            }
            if (b->needs_grad) {
                EMap<T> dB(b->g().data() + i * bn, b->val.dim(1), b->val.dim(2));
                if (!tb)
                    dB.noalias() += ta ? (A * G).eval() : (A.transpose() * G).eval();
                else
                    dB.noalias() += ta ? (G.transpose() * A.transpose()).eval()
                                       : (G.transpose() * A).eval();
            }
        }
    });
}

/// y = x @ W (+ bias); x [..., Din] flattened over leading dims.
template <class T>
VarT<T> linear(GraphT<T>& g, VarT<T> x, VarT<T> w, VarT<T> bias) {
    int64_t din = w->val.dim(0), dout = w->val.dim(1);
    if (x->val.dim(x->val.rank() - 1) != din) throw ShapeError("linear: input dim mismatch");
    int64_t M = x->val.numel() / din;
    std::vector<int64_t> oshape = x->val.shape();
    oshape.back() = dout;
    TensorT<T> out(oshape);
    mat(out, M, dout).noalias() = cmat(x->val, M, din) * cmat(w->val, din, dout);
    if (bias) {
        auto O = mat(out, M, dout);
        O.rowwise() += cmat(bias->val, 1, dout).row(0);
    }
    return g.node(std::move(out), {x, w, bias}, [x, w, bias, M, din, dout](NodeT<T>& n) {
        auto G = cmat(n.grad, M, dout);
        if (x->needs_grad)
            mat(x->g(), M, din).noalias() += G * cmat(w->val, din, dout).transpose();
        if (w->needs_grad)
            mat(w->g(), din, dout).noalias() += cmat(x->val, M, din).transpose() * G;
        if (bias && bias->needs_grad)
            mat(bias->g(), 1, dout).row(0) += G.colwise().sum();
    });
}

// ---------------------------------------------------------------- convolutions

/// 1-D convolution over the token axis. x [N, L, C], w [k*C, Cout], row order
/// of w is (tap, channel).
template <class T>
VarT<T> conv1d(GraphT<T>& g, VarT<T> x, VarT<T> w, VarT<T> bias, int k, int stride, int pad) {
    int64_t N = x->val.dim(0), L = x->val.dim(1), C = x->val.dim(2);
    if (w->val.dim(0) != static_cast<int64_t>(k) * C) throw ShapeError("conv1d: kernel mismatch");
    int64_t cout = w->val.dim(1);
    int64_t lout = (L + 2 * pad - k) / stride + 1;
    if (lout < 1) throw ShapeError("conv1d: empty output");
    auto cols_t = std::make_shared<TensorT<T>>(std::vector<int64_t>{N, lout, static_cast<int64_t>(k) * C});
    for (int64_t n = 0; n < N; ++n)
        for (int64_t j = 0; j < lout; ++j) {
            T* row = cols_t->data() + (n * lout + j) * k * C;
            for (int t = 0; t < k; ++t) {
                int64_t src = j * stride - pad + t;
                if (src >= 0 && src < L) {
                    const T* sp = x->val.data() + (n * L + src) * C;
                    std::copy(sp, sp + C, row + static_cast<int64_t>(t) * C);
                } else {
                    std::fill(row + static_cast<int64_t>(t) * C, row + (t + 1LL) * C, T(0));
                }
            }
        }
    TensorT<T> out({N, lout, cout});
    mat(out, N * lout, cout).noalias() =
        cmat(*cols_t, N * lout, static_cast<int64_t>(k) * C) * cmat(w->val, static_cast<int64_t>(k) * C, cout);
    if (bias) {
        auto O = mat(out, N * lout, cout);
        O.rowwise() += cmat(bias->val, 1, cout).row(0);
    }
    return g.node(std::move(out), {x, w, bias},
                  [x, w, bias, cols_t, N, L, C, k, stride, pad, lout, cout](NodeT<T>& n) {
                      int64_t K = static_cast<int64_t>(k) * C;
                      auto G = cmat(n.grad, N * lout, cout);
                      if (w->needs_grad)
                          mat(w->g(), K, cout).noalias() += cmat(*cols_t, N * lout, K).transpose() * G;
                      if (bias && bias->needs_grad)
                          mat(bias->g(), 1, cout).row(0) += G.colwise().sum();
                      if (x->needs_grad) {
                          EMat<T> dcols = G * cmat(w->val, K, cout).transpose();  // [N*lout, K]
                          auto& dx = x->g();
                          for (int64_t nn = 0; nn < N; ++nn)
                              for (int64_t j = 0; j < lout; ++j) {
                                  const T* row = dcols.data() + (nn * lout + j) * K;
                                  for (int t = 0; t < k; ++t) {
                                      int64_t src = j * stride - pad + t;
                                      if (src < 0 || src >= L) continue;
                                      T* dp = dx.data() + (nn * L + src) * C;
                                      const T* rp = row + static_cast<int64_t>(t) * C;
                                      for (int64_t c = 0; c < C; ++c) dp[c] += rp[c];
                                  }
                              }
                      }
                  });
}

namespace detail {
template <class T>
void im2col(const T* img, int64_t C, int64_t H, int64_t W, int k, int stride, int pad,
            int64_t ho, int64_t wo, T* cols) {
    // cols [ho*wo, C*k*k], column order (c, ky, kx)
    for (int64_t oy = 0; oy < ho; ++oy)
        for (int64_t ox = 0; ox < wo; ++ox) {
            T* row = cols + (oy * wo + ox) * C * k * k;
            for (int64_t c = 0; c < C; ++c)
                for (int ky = 0; ky < k; ++ky) {
                    int64_t iy = oy * stride - pad + ky;
                    for (int kx = 0; kx < k; ++kx) {
                        int64_t ix = ox * stride - pad + kx;
                        row[(c * k + ky) * k + kx] =
                            (iy >= 0 && iy < H && ix >= 0 && ix < W)
                                ? img[(c * H + iy) * W + ix]
                                : T(0);
                    }
                }
        }
}

template <class T>
void col2im_add(const T* cols, int64_t C, int64_t H, int64_t W, int k, int stride, int pad,
                int64_t ho, int64_t wo, T* img) {
    for (int64_t oy = 0; oy < ho; ++oy)
        for (int64_t ox = 0; ox < wo; ++ox) {
            const T* row = cols + (oy * wo + ox) * C * k * k;
            for (int64_t c = 0; c < C; ++c)
                for (int ky = 0; ky < k; ++ky) {
                    int64_t iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= H) continue;
                    for (int kx = 0; kx < k; ++kx) {
                        int64_t ix = ox * stride - pad + kx;
                        if (ix < 0 || ix >= W) continue;
                        img[(c * H + iy) * W + ix] += row[(c * k + ky) * k + kx];
                    }
                }
        }
}
}  // namespace detail

/// 2-D convolution. x [N, Cin, H, W], w [Cout, Cin*k*k] (order c,ky,kx).
template <class T>
VarT<T> conv2d(GraphT<T>& g, VarT<T> x, VarT<T> w, VarT<T> bias, int k, int stride, int pad) {
    int64_t N = x->val.dim(0), C = x->val.dim(1), H = x->val.dim(2), W = x->val.dim(3);
    int64_t K = C * k * k;
    if (w->val.dim(1) != K) throw ShapeError("conv2d: kernel mismatch");
    int64_t cout = w->val.dim(0);
    int64_t ho = (H + 2 * pad - k) / stride + 1;
    int64_t wo = (W + 2 * pad - k) / stride + 1;
    if (ho < 1 || wo < 1) throw ShapeError("conv2d: empty output");
    int64_t P = ho * wo;
    auto cols_t = std::make_shared<TensorT<T>>(std::vector<int64_t>{N, P, K});
    TensorT<T> out({N, cout, ho, wo});
    for (int64_t n = 0; n < N; ++n) {
        T* cols = cols_t->data() + n * P * K;
        detail::im2col(x->val.data() + n * C * H * W, C, H, W, k, stride, pad, ho, wo, cols);
        // out_n [cout, P] = w [cout, K] * cols^T [K, P]
        EMap<T> O(out.data() + n * cout * P, cout, P);
        O.noalias() = cmat(w->val, cout, K) * ECMap<T>(cols, P, K).transpose();
        if (bias)
            O.colwise() += Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>(bias->val.data(), cout);
    }
    return g.node(std::move(out), {x, w, bias},
                  [x, w, bias, cols_t, N, C, H, W, k, stride, pad, ho, wo, cout, K, P](NodeT<T>& n) {
                      for (int64_t nn = 0; nn < N; ++nn) {
                          ECMap<T> G(n.grad.data() + nn * cout * P, cout, P);
                          const T* cols = cols_t->data() + nn * P * K;
                          if (w->needs_grad)
                              mat(w->g(), cout, K).noalias() += G * ECMap<T>(cols, P, K);
                          if (bias && bias->needs_grad)
                              Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>(bias->g().data(), cout) +=
                                  G.rowwise().sum();
                          if (x->needs_grad) {
                              EMat<T> dcols = G.transpose() * cmat(w->val, cout, K);  // [P, K]
                              detail::col2im_add(dcols.data(), C, H, W, k, stride, pad, ho, wo,
                                                 x->g().data() + nn * C * H * W);
                          }
                      }
                  });
}

/// Nearest-neighbour 2x upsample, [N,C,H,W] -> [N,C,2H,2W].
template <class T>
VarT<T> upsample2x(GraphT<T>& g, VarT<T> x) {
    int64_t N = x->val.dim(0), C = x->val.dim(1), H = x->val.dim(2), W = x->val.dim(3);
    TensorT<T> out({N, C, 2 * H, 2 * W});
    for (int64_t nc = 0; nc < N * C; ++nc)
        for (int64_t y = 0; y < H; ++y)
            for (int64_t xx = 0; xx < W; ++xx) {
                T v = x->val[nc * H * W + y * W + xx];
                T* o = out.data() + nc * 4 * H * W + 2 * y * 2 * W + 2 * xx;
                o[0] = v;
                o[1] = v;
                o[2 * W] = v;
                o[2 * W + 1] = v;
            }
    return g.node(std::move(out), {x}, [x, N, C, H, W](NodeT<T>& n) {
        auto& dx = x->g();
        for (int64_t nc = 0; nc < N * C; ++nc)
            for (int64_t y = 0; y < H; ++y)
                for (int64_t xx = 0; xx < W; ++xx) {
                    const T* o = n.grad.data() + nc * 4 * H * W + 2 * y * 2 * W + 2 * xx;
                    dx[nc * H * W + y * W + xx] += o[0] + o[1] + o[2 * W] + o[2 * W + 1];
                }
    });
}

// ---------------------------------------------------------------- normalization

template <class T>
VarT<T> layer_norm(GraphT<T>& g, VarT<T> x, VarT<T> gamma, VarT<T> beta, double eps = 1e-5) {
    int64_t D = x->val.dim(x->val.rank() - 1);
    if (gamma->val.numel() != D || beta->val.numel() != D)
        throw ShapeError("layer_norm: affine dim mismatch");
    int64_t R = x->val.numel() / D;
    auto xhat = std::make_shared<TensorT<T>>(x->val.shape());
    auto istd = std::make_shared<TensorT<T>>(std::vector<int64_t>{R});
    TensorT<T> out(x->val.shape());
    for (int64_t r = 0; r < R; ++r) {
        const T* xp = x->val.data() + r * D;
        double mean = 0;
        for (int64_t i = 0; i < D; ++i) mean += xp[i];
        mean /= static_cast<double>(D);
        double var = 0;
        for (int64_t i = 0; i < D; ++i) {
            double d = xp[i] - mean;
            var += d * d;
        }
        var /= static_cast<double>(D);
        double is = 1.0 / std::sqrt(var + eps);
        (*istd)[r] = static_cast<T>(is);
        T* hp = xhat->data() + r * D;
        T* op = out.data() + r * D;
        for (int64_t i = 0; i < D; ++i) {
            hp[i] = static_cast<T>((xp[i] - mean) * is);
            op[i] = hp[i] * gamma->val[i] + beta->val[i];
        }
    }
    return g.node(std::move(out), {x, gamma, beta}, [x, gamma, beta, xhat, istd, R, D](NodeT<T>& n) {
        for (int64_t r = 0; r < R; ++r) {
            const T* gp = n.grad.data() + r * D;
            const T* hp = xhat->data() + r * D;
            if (gamma->needs_grad) {
                auto& dg = gamma->g();
                for (int64_t i = 0; i < D; ++i) dg[i] += gp[i] * hp[i];
            }
            if (beta->needs_grad) {
                auto& db = beta->g();
                for (int64_t i = 0; i < D; ++i) db[i] += gp[i];
            }
            if (x->needs_grad) {
                double sum_dh = 0, sum_dh_h = 0;
                for (int64_t i = 0; i < D; ++i) {
                    double dh = static_cast<double>(gp[i]) * gamma->val[i];
                    sum_dh += dh;
                    sum_dh_h += dh * hp[i];
                }
                double m1 = sum_dh / static_cast<double>(D);
                double m2 = sum_dh_h / static_cast<double>(D);
                double is = (*istd)[r];
                T* dx = x->g().data() + r * D;
                for (int64_t i = 0; i < D; ++i) {
                    double dh = static_cast<double>(gp[i]) * gamma->val[i];
                    dx[i] += static_cast<T>(is * (dh - m1 - hp[i] * m2));
                }
            }
        }
    });
}

template <class T>
VarT<T> group_norm(GraphT<T>& g, VarT<T> x, VarT<T> gamma, VarT<T> beta, int groups,
                   double eps = 1e-5) {
    int64_t N = x->val.dim(0), C = x->val.dim(1), H = x->val.dim(2), W = x->val.dim(3);
    if (C % groups != 0) throw ShapeError("group_norm: channels not divisible by groups");
    int64_t cg = C / groups, m = cg * H * W;
    auto xhat = std::make_shared<TensorT<T>>(x->val.shape());
    auto istd = std::make_shared<TensorT<T>>(std::vector<int64_t>{N * groups});
    TensorT<T> out(x->val.shape());
    for (int64_t n = 0; n < N; ++n)
        for (int64_t grp = 0; grp < groups; ++grp) {
            const T* xp = x->val.data() + (n * C + grp * cg) * H * W;
            double mean = 0;
            for (int64_t i = 0; i < m; ++i) mean += xp[i];
            mean /= static_cast<double>(m);
            double var = 0;
            for (int64_t i = 0; i < m; ++i) {
                double d = xp[i] - mean;
                var += d * d;
            }
            var /= static_cast<double>(m);
            double is = 1.0 / std::sqrt(var + eps);
            (*istd)[n * groups + grp] = static_cast<T>(is);
            T* hp = xhat->data() + (n * C + grp * cg) * H * W;
            T* op = out.data() + (n * C + grp * cg) * H * W;
            for (int64_t i = 0; i < m; ++i) hp[i] = static_cast<T>((xp[i] - mean) * is);
            for (int64_t c = 0; c < cg; ++c) {
                T ga = gamma->val[grp * cg + c], be = beta->val[grp * cg + c];
                for (int64_t i = 0; i < H * W; ++i)
                    op[c * H * W + i] = hp[c * H * W + i] * ga + be;
            }
        }
    return g.node(std::move(out), {x, gamma, beta},
                  [x, gamma, beta, xhat, istd, N, C, H, W, groups, cg, m](NodeT<T>& n) {
                      int64_t hw = H * W;
                      for (int64_t nn = 0; nn < N; ++nn)
                          for (int64_t grp = 0; grp < groups; ++grp) {
                              const T* gp = n.grad.data() + (nn * C + grp * cg) * hw;
                              const T* hp = xhat->data() + (nn * C + grp * cg) * hw;
                              if (gamma->needs_grad || beta->needs_grad) {
                                  for (int64_t c = 0; c < cg; ++c) {
                                      double sg = 0, sb = 0;
                                      for (int64_t i = 0; i < hw; ++i) {
                                          sg += static_cast<double>(gp[c * hw + i]) * hp[c * hw + i];
                                          sb += gp[c * hw + i];
                                      }
                                      if (gamma->needs_grad)
                                          gamma->g()[grp * cg + c] += static_cast<T>(sg);
                                      if (beta->needs_grad)
                                          beta->g()[grp * cg + c] += static_cast<T>(sb);
                                  }
                              }
                              if (x->needs_grad) {
                                  double sum_dh = 0, sum_dh_h = 0;
                                  for (int64_t c = 0; c < cg; ++c) {
                                      double ga = gamma->val[grp * cg + c];
                                      for (int64_t i = 0; i < hw; ++i) {
                                          double dh = static_cast<double>(gp[c * hw + i]) * ga;
                                          sum_dh += dh;
                                          sum_dh_h += dh * hp[c * hw + i];
                                      }
                                  }
                                  double m1 = sum_dh / static_cast<double>(m);
                                  double m2 = sum_dh_h / static_cast<double>(m);
                                  double is = (*istd)[nn * groups + grp];
                                  T* dx = x->g().data() + (nn * C + grp * cg) * hw;
                                  for (int64_t c = 0; c < cg; ++c) {
                                      double ga = gamma->val[grp * cg + c];
                                      for (int64_t i = 0; i < hw; ++i) {
                                          double dh = static_cast<double>(gp[c * hw + i]) * ga;
                                          dx[c * hw + i] +=
                                              static_cast<T>(is * (dh - m1 - hp[c * hw + i] * m2));
                                      }
                                  }
                              }
                          }
                  });
}

// ---------------------------------------------------------------- reductions etc.

template <class T>
VarT<T> softmax_last(GraphT<T>& g, VarT<T> x) {
    int64_t D = x->val.dim(x->val.rank() - 1);
    int64_t R = x->val.numel() / D;
    TensorT<T> out(x->val.shape());
    for (int64_t r = 0; r < R; ++r) {
        const T* xp = x->val.data() + r * D;
        T* op = out.data() + r * D;
        T mx = xp[0];
        for (int64_t i = 1; i < D; ++i) mx = std::max(mx, xp[i]);
        double sum = 0;
        for (int64_t i = 0; i < D; ++i) {
            double e = std::exp(static_cast<double>(xp[i] - mx));
            op[i] = static_cast<T>(e);
            sum += e;
        }
        double inv = 1.0 / sum;
        for (int64_t i = 0; i < D; ++i) op[i] = static_cast<T>(op[i] * inv);
    }
    auto y = std::make_shared<TensorT<T>>(out);
    return g.node(std::move(out), {x}, [x, y, R, D](NodeT<T>& n) {
        auto& dx = x->g();
        for (int64_t r = 0; r < R; ++r) {
            const T* gp = n.grad.data() + r * D;
            const T* yp = y->data() + r * D;
            double dot = 0;
            for (int64_t i = 0; i < D; ++i) dot += static_cast<double>(gp[i]) * yp[i];
            T* dp = dx.data() + r * D;
            for (int64_t i = 0; i < D; ++i)
                dp[i] += static_cast<T>(yp[i] * (gp[i] - dot));
        }
    });
}

template <class T>
VarT<T> sum_all(GraphT<T>& g, VarT<T> x) {
    double s = 0;
    for (int64_t i = 0; i < x->val.numel(); ++i) s += x->val[i];
    return g.node(TensorT<T>::scalar(static_cast<T>(s)), {x}, [x](NodeT<T>& n) {
        auto& dx = x->g();
        T gv = n.grad[0];
        for (int64_t i = 0; i < dx.numel(); ++i) dx[i] += gv;
    });
}

/// Per-sample per-channel bias: x [N,C,H,W] + b [N,C] (time embeddings).
template <class T>
VarT<T> add_chan_bias(GraphT<T>& g, VarT<T> x, VarT<T> b) {
    int64_t N = x->val.dim(0), C = x->val.dim(1), hw = x->val.dim(2) * x->val.dim(3);
    if (b->val.dim(0) != N || b->val.dim(1) != C) throw ShapeError("add_chan_bias: mismatch");
    TensorT<T> out = x->val;
    for (int64_t nc = 0; nc < N * C; ++nc) {
        T bv = b->val[nc];
        T* op = out.data() + nc * hw;
        for (int64_t i = 0; i < hw; ++i) op[i] += bv;
    }
    return g.node(std::move(out), {x, b}, [x, b, N, C, hw](NodeT<T>& n) {
        if (x->needs_grad) {
            auto& dx = x->g();
            for (int64_t i = 0; i < dx.numel(); ++i) dx[i] += n.grad[i];
        }
        if (b->needs_grad) {
            auto& db = b->g();
            for (int64_t nc = 0; nc < N * C; ++nc) {
                double s = 0;
                const T* gp = n.grad.data() + nc * hw;
                for (int64_t i = 0; i < hw; ++i) s += gp[i];
                db[nc] += static_cast<T>(s);
            }
        }
    });
}

// ---------------------------------------------------------------- patch moves

/// [N, S, S] -> [N, (S/p)^2, p^2]; patches in row-major order, each patch
/// flattened row-major. Exact inverse of unpatchify.
template <class T>
VarT<T> patchify(GraphT<T>& g, VarT<T> x, int p) {
    int64_t N = x->val.dim(0), S = x->val.dim(1);
    if (x->val.rank() != 3 || x->val.dim(2) != S) throw ShapeError("patchify: square input required");
    if (S % p != 0) throw ShapeError("patchify: side not divisible by patch size");
    int64_t q = S / p;
    TensorT<T> out({N, q * q, static_cast<int64_t>(p) * p});
    for (int64_t n = 0; n < N; ++n)
        for (int64_t py = 0; py < q; ++py)
            for (int64_t px = 0; px < q; ++px)
                for (int64_t ky = 0; ky < p; ++ky) {
                    const T* src = x->val.data() + (n * S + py * p + ky) * S + px * p;
                    T* dst = out.data() + ((n * q * q + py * q + px) * p + ky) * p;
                    std::copy(src, src + p, dst);
                }
    return g.node(std::move(out), {x}, [x, N, S, p, q](NodeT<T>& n) {
        auto& dx = x->g();
        for (int64_t nn = 0; nn < N; ++nn)
            for (int64_t py = 0; py < q; ++py)
                for (int64_t px = 0; px < q; ++px)
                    for (int64_t ky = 0; ky < p; ++ky) {
                        const T* src = n.grad.data() + ((nn * q * q + py * q + px) * p + ky) * p;
                        T* dst = dx.data() + (nn * S + py * p + ky) * S + px * p;
                        for (int64_t kx = 0; kx < p; ++kx) dst[kx] += src[kx];
                    }
    });
}

template <class T>
VarT<T> unpatchify(GraphT<T>& g, VarT<T> x, int p) {
    int64_t N = x->val.dim(0), P = x->val.dim(1);
    if (x->val.dim(2) != static_cast<int64_t>(p) * p) throw ShapeError("unpatchify: patch dim mismatch");
    int64_t q = static_cast<int64_t>(std::llround(std::sqrt(static_cast<double>(P))));
    if (q * q != P) throw ShapeError("unpatchify: patch count not square");
    int64_t S = q * p;
    TensorT<T> out({N, S, S});
    for (int64_t n = 0; n < N; ++n)
        for (int64_t py = 0; py < q; ++py)
            for (int64_t px = 0; px < q; ++px)
                for (int64_t ky = 0; ky < p; ++ky) {
                    const T* src = x->val.data() + ((n * P + py * q + px) * p + ky) * p;
                    T* dst = out.data() + (n * S + py * p + ky) * S + px * p;
                    std::copy(src, src + p, dst);
                }
    return g.node(std::move(out), {x}, [x, N, S, p, q, P](NodeT<T>& n) {
        auto& dx = x->g();
        for (int64_t nn = 0; nn < N; ++nn)
            for (int64_t py = 0; py < q; ++py)
                for (int64_t px = 0; px < q; ++px)
                    for (int64_t ky = 0; ky < p; ++ky) {
                        const T* src = n.grad.data() + (nn * S + py * p + ky) * S + px * p;
                        T* dst = dx.data() + ((nn * P + py * q + px) * p + ky) * p;
                        for (int64_t kx = 0; kx < p; ++kx) dst[kx] += src[kx];
                    }
    });
}

// ---------------------------------------------------------------- losses

/// Mean of squared differences over all elements.
template <class T>
VarT<T> mse_mean(GraphT<T>& g, VarT<T> a, VarT<T> b) {
    auto d = sub(g, a, b);
    auto sq = mul(g, d, d);
    return scale(g, sum_all(g, sq), 1.0 / static_cast<double>(a->val.numel()));
}

}  // namespace ops
}  // namespace f2i
