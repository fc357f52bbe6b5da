#include "sparseswin/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

namespace sparseswin {

namespace {

template <typename T>
using StoragePtr = std::shared_ptr<detail::Storage<T>>;

template <typename T>
void check_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
}

int normalize_axis(int axis, int rank, const char* op) {
    const int a = axis < 0 ? axis + rank : axis;
    if (a < 0 || a >= rank) {
        throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for rank " +
                         std::to_string(rank));
    }
    return a;
}

// out[m, n] = x[m, k] * y[k, n], with optional stored-transposed operands:
// tx means x is stored [k, m]; ty means y is stored [n, k]. Accumulates.
template <typename T>
void gemm_acc(const T* x, const T* y, T* out, std::int64_t m, std::int64_t k, std::int64_t n, bool tx,
              bool ty) {
    if (!tx && !ty) {
        for (std::int64_t i = 0; i < m; ++i) {
            T* orow = out + i * n;
            const T* xrow = x + i * k;
            for (std::int64_t l = 0; l < k; ++l) {
                const T xv = xrow[l];
                const T* yrow = y + l * n;
                for (std::int64_t j = 0; j < n; ++j) {
                    orow[j] += xv * yrow[j];
                }
            }
        }
    } else if (!tx && ty) {
        for (std::int64_t i = 0; i < m; ++i) {
            const T* xrow = x + i * k;
            T* orow = out + i * n;
            for (std::int64_t j = 0; j < n; ++j) {
                const T* yrow = y + j * k;
                T acc = T(0);
                for (std::int64_t l = 0; l < k; ++l) {
                    acc += xrow[l] * yrow[l];
                }
                orow[j] += acc;
            }
        }
    } else if (tx && !ty) {
        for (std::int64_t l = 0; l < k; ++l) {
            const T* xrow = x + l * m;
            const T* yrow = y + l * n;
            for (std::int64_t i = 0; i < m; ++i) {
                const T xv = xrow[i];
                T* orow = out + i * n;
                for (std::int64_t j = 0; j < n; ++j) {
                    orow[j] += xv * yrow[j];
                }
            }
        }
    } else {
        for (std::int64_t j = 0; j < n; ++j) {
            const T* yrow = y + j * k;
            for (std::int64_t l = 0; l < k; ++l) {
                const T yv = yrow[l];
                const T* xrow = x + l * m;
                for (std::int64_t i = 0; i < m; ++i) {
                    out[i * n + j] += xrow[i] * yv;
                }
            }
        }
    }
}

// Scatter columns back to the padded image (transpose of im2col).
template <typename T>
void col2im_acc(const T* cols, T* dx, std::int64_t cin, std::int64_t h, std::int64_t w, std::int64_t kk,
                std::int64_t stride, std::int64_t padding, std::int64_t oh, std::int64_t ow) {
    const std::int64_t ohw = oh * ow;
    for (std::int64_t c = 0; c < cin; ++c) {
        for (std::int64_t ki = 0; ki < kk; ++ki) {
            for (std::int64_t kj = 0; kj < kk; ++kj) {
                const T* col = cols + ((c * kk + ki) * kk + kj) * ohw;
                for (std::int64_t oi = 0; oi < oh; ++oi) {
                    const std::int64_t ii = oi * stride + ki - padding;
                    if (ii < 0 || ii >= h) {
                        continue;
                    }
                    for (std::int64_t oj = 0; oj < ow; ++oj) {
                        const std::int64_t jj = oj * stride + kj - padding;
                        if (jj < 0 || jj >= w) {
                            continue;
                        }
                        dx[(c * h + ii) * w + jj] += col[oi * ow + oj];
                    }
                }
            }
        }
    }
}

template <typename T>
void im2col(const T* x, T* cols, std::int64_t cin, std::int64_t h, std::int64_t w, std::int64_t kk,
            std::int64_t stride, std::int64_t padding, std::int64_t oh, std::int64_t ow) {
    const std::int64_t ohw = oh * ow;
    for (std::int64_t c = 0; c < cin; ++c) {
        for (std::int64_t ki = 0; ki < kk; ++ki) {
            for (std::int64_t kj = 0; kj < kk; ++kj) {
                T* col = cols + ((c * kk + ki) * kk + kj) * ohw;
                for (std::int64_t oi = 0; oi < oh; ++oi) {
                    const std::int64_t ii = oi * stride + ki - padding;
                    if (ii < 0 || ii >= h) {
                        std::fill(col + oi * ow, col + (oi + 1) * ow, T(0));
                        continue;
                    }
                    const T* xrow = x + (c * h + ii) * w;
                    for (std::int64_t oj = 0; oj < ow; ++oj) {
                        const std::int64_t jj = oj * stride + kj - padding;
                        col[oi * ow + oj] = (jj < 0 || jj >= w) ? T(0) : xrow[jj];
                    }
                }
            }
        }
    }
}

} // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    check_same_shape("add", a, b);
    auto out = Tensor<T>::zeros(a.shape());
    const auto av = a.data();
    const auto bv = b.data();
    auto ov = out.mutable_data();
    for (std::size_t i = 0; i < ov.size(); ++i) {
        ov[i] = av[i] + bv[i];
    }
    auto* g = Graph<T>::current();
    const bool na = tracked(a);
    const bool nb = tracked(b);
    if (g && (na || nb)) {
        g->record("add", out, [sa = a.storage(), sb = b.storage(), so = out.storage(), na, nb]() {
            const auto& go = so->grad;
            if (na) {
                sa->ensure_grad();
                for (std::size_t i = 0; i < go.size(); ++i) {
                    sa->grad[i] += go[i];
                }
            }
            if (nb) {
                sb->ensure_grad();
                for (std::size_t i = 0; i < go.size(); ++i) {
                    sb->grad[i] += go[i];
                }
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    check_same_shape("sub", a, b);
    auto out = Tensor<T>::zeros(a.shape());
    const auto av = a.data();
    const auto bv = b.data();
    auto ov = out.mutable_data();
    for (std::size_t i = 0; i < ov.size(); ++i) {
        ov[i] = av[i] - bv[i];
    }
    auto* g = Graph<T>::current();
    const bool na = tracked(a);
    const bool nb = tracked(b);
    if (g && (na || nb)) {
        g->record("sub", out, [sa = a.storage(), sb = b.storage(), so = out.storage(), na, nb]() {
            const auto& go = so->grad;
            if (na) {
                sa->ensure_grad();
                for (std::size_t i = 0; i < go.size(); ++i) {
                    sa->grad[i] += go[i];
                }
            }
            if (nb) {
                sb->ensure_grad();
                for (std::size_t i = 0; i < go.size(); ++i) {
                    sb->grad[i] -= go[i];
                }
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    check_same_shape("mul", a, b);
    auto out = Tensor<T>::zeros(a.shape());
    const auto av = a.data();
    const auto bv = b.data();
    auto ov = out.mutable_data();
    for (std::size_t i = 0; i < ov.size(); ++i) {
        ov[i] = av[i] * bv[i];
    }
    auto* g = Graph<T>::current();
    const bool na = tracked(a);
    const bool nb = tracked(b);
    if (g && (na || nb)) {
        g->record("mul", out, [sa = a.storage(), sb = b.storage(), so = out.storage(), na, nb]() {
            const auto& go = so->grad;
            if (na) {
                sa->ensure_grad();
                for (std::size_t i = 0; i < go.size(); ++i) {
                    sa->grad[i] += go[i] * sb->data[i];
                }
            }
            if (nb) {
                sb->ensure_grad();
                for (std::size_t i = 0; i < go.size(); ++i) {
                    sb->grad[i] += go[i] * sa->data[i];
                }
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T s) {
    auto out = Tensor<T>::zeros(x.shape());
    const auto xv = x.data();
    auto ov = out.mutable_data();
    for (std::size_t i = 0; i < ov.size(); ++i) {
        ov[i] = s * xv[i];
    }
    auto* g = Graph<T>::current();
    if (g && tracked(x)) {
        g->record("scale", out, [sx = x.storage(), so = out.storage(), s]() {
            sx->ensure_grad();
            for (std::size_t i = 0; i < so->grad.size(); ++i) {
                sx->grad[i] += s * so->grad[i];
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T c) {
    auto out = Tensor<T>::zeros(x.shape());
    const auto xv = x.data();
    auto ov = out.mutable_data();
    for (std::size_t i = 0; i < ov.size(); ++i) {
        ov[i] = xv[i] + c;
    }
    auto* g = Graph<T>::current();
    if (g && tracked(x)) {
        g->record("add_scalar", out, [sx = x.storage(), so = out.storage()]() {
            sx->ensure_grad();
            for (std::size_t i = 0; i < so->grad.size(); ++i) {
                sx->grad[i] += so->grad[i];
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> absval(const Tensor<T>& x) {
    auto out = Tensor<T>::zeros(x.shape());
    const auto xv = x.data();
    auto ov = out.mutable_data();
    for (std::size_t i = 0; i < ov.size(); ++i) {
        ov[i] = std::abs(xv[i]);
    }
    auto* g = Graph<T>::current();
    if (g && tracked(x)) {
        g->record("absval", out, [sx = x.storage(), so = out.storage()]() {
            sx->ensure_grad();
            for (std::size_t i = 0; i < so->grad.size(); ++i) {
                const T v = sx->data[i];
                const T sign = v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0));
                sx->grad[i] += sign * so->grad[i];
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> sum_all(const Tensor<T>& x) {
    T acc = T(0);
    for (const T v : x.data()) {
        acc += v;
    }
    auto out = Tensor<T>::scalar(acc);
    auto* g = Graph<T>::current();
    if (g && tracked(x)) {
        g->record("sum_all", out, [sx = x.storage(), so = out.storage()]() {
            sx->ensure_grad();
            const T go = so->grad[0];
            for (auto& gv : sx->grad) {
                gv += go;
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> mean_axis(const Tensor<T>& x, int axis) {
    const int ax = normalize_axis(axis, x.rank(), "mean_axis");
    const auto& shape = x.shape();
    Shape out_shape;
    for (int i = 0; i < x.rank(); ++i) {
        if (i != ax) {
            out_shape.push_back(shape[static_cast<std::size_t>(i)]);
        }
    }
    if (out_shape.empty()) {
        out_shape.push_back(1);
    }
    std::int64_t outer = 1;
    std::int64_t inner = 1;
    for (int i = 0; i < ax; ++i) {
        outer *= shape[static_cast<std::size_t>(i)];
    }
    for (int i = ax + 1; i < x.rank(); ++i) {
        inner *= shape[static_cast<std::size_t>(i)];
    }
    const std::int64_t len = shape[static_cast<std::size_t>(ax)];
    auto out = Tensor<T>::zeros(out_shape);
    const auto xv = x.data();
    auto ov = out.mutable_data();
    const T inv = T(1) / static_cast<T>(len);
    for (std::int64_t o = 0; o < outer; ++o) {
        for (std::int64_t j = 0; j < len; ++j) {
            const T* src = xv.data() + (o * len + j) * inner;
            T* dst = ov.data() + o * inner;
            for (std::int64_t i = 0; i < inner; ++i) {
                dst[i] += src[i];
            }
        }
    }
    for (auto& v : ov) {
        v *= inv;
    }
    auto* g = Graph<T>::current();
    if (g && tracked(x)) {
        g->record("mean_axis", out,
                  [sx = x.storage(), so = out.storage(), outer, len, inner, inv]() {
                      sx->ensure_grad();
                      for (std::int64_t o = 0; o < outer; ++o) {
                          const T* go = so->grad.data() + o * inner;
                          for (std::int64_t j = 0; j < len; ++j) {
                              T* dst = sx->grad.data() + (o * len + j) * inner;
                              for (std::int64_t i = 0; i < inner; ++i) {
                                  dst[i] += go[i] * inv;
                              }
                          }
                      }
                  });
    }
    return out;
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape new_shape) {
    if (numel_of(new_shape) != x.numel()) {
        throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(new_shape));
    }
    auto out = Tensor<T>::from(std::move(new_shape), std::vector<T>(x.data().begin(), x.data().end()));
    auto* g = Graph<T>::current();
    if (g && tracked(x)) {
        g->record("reshape", out, [sx = x.storage(), so = out.storage()]() {
            sx->ensure_grad();
            for (std::size_t i = 0; i < so->grad.size(); ++i) {
                sx->grad[i] += so->grad[i];
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<int>& axes) {
    const int rank = x.rank();
    if (static_cast<int>(axes.size()) != rank) {
        throw ShapeError("permute: axes count " + std::to_string(axes.size()) + " != rank " +
                         std::to_string(rank));
    }
    std::vector<bool> seen(static_cast<std::size_t>(rank), false);
    for (const int a : axes) {
        if (a < 0 || a >= rank || seen[static_cast<std::size_t>(a)]) {
            throw ShapeError("permute: invalid axis permutation");
        }
        seen[static_cast<std::size_t>(a)] = true;
    }
    const auto& shape = x.shape();
    Shape out_shape(static_cast<std::size_t>(rank));
    for (int i = 0; i < rank; ++i) {
        out_shape[static_cast<std::size_t>(i)] = shape[static_cast<std::size_t>(axes[static_cast<std::size_t>(i)])];
    }
    const auto in_strides = row_major_strides(shape);
    // stride in the input for each output axis
    std::vector<std::int64_t> gather(static_cast<std::size_t>(rank));
    for (int i = 0; i < rank; ++i) {
        gather[static_cast<std::size_t>(i)] = in_strides[static_cast<std::size_t>(axes[static_cast<std::size_t>(i)])];
    }
    auto out = Tensor<T>::zeros(out_shape);
    const auto xv = x.data();
    auto ov = out.mutable_data();
    const std::int64_t n = x.numel();
    std::vector<std::int64_t> idx(static_cast<std::size_t>(rank), 0);
    std::int64_t src = 0;
    for (std::int64_t lin = 0; lin < n; ++lin) {
        ov[static_cast<std::size_t>(lin)] = xv[static_cast<std::size_t>(src)];
        for (int d = rank - 1; d >= 0; --d) {
            idx[static_cast<std::size_t>(d)]++;
            src += gather[static_cast<std::size_t>(d)];
            if (idx[static_cast<std::size_t>(d)] < out_shape[static_cast<std::size_t>(d)]) {
                break;
            }
            src -= gather[static_cast<std::size_t>(d)] * out_shape[static_cast<std::size_t>(d)];
            idx[static_cast<std::size_t>(d)] = 0;
        }
    }
    auto* g = Graph<T>::current();
    if (g && tracked(x)) {
        g->record("permute", out, [sx = x.storage(), so = out.storage(), gather, out_shape, rank]() {
            sx->ensure_grad();
            const std::int64_t count = static_cast<std::int64_t>(so->grad.size());
            std::vector<std::int64_t> it(static_cast<std::size_t>(rank), 0);
            std::int64_t src = 0;
            for (std::int64_t lin = 0; lin < count; ++lin) {
                sx->grad[static_cast<std::size_t>(src)] += so->grad[static_cast<std::size_t>(lin)];
                for (int d = rank - 1; d >= 0; --d) {
                    it[static_cast<std::size_t>(d)]++;
                    src += gather[static_cast<std::size_t>(d)];
                    if (it[static_cast<std::size_t>(d)] < out_shape[static_cast<std::size_t>(d)]) {
                        break;
                    }
                    src -= gather[static_cast<std::size_t>(d)] * out_shape[static_cast<std::size_t>(d)];
                    it[static_cast<std::size_t>(d)] = 0;
                }
            }
        });
    }
    return out;
}

namespace {

template <typename T>
void roll_copy(const T* src, T* dst, std::int64_t b, std::int64_t h, std::int64_t w, std::int64_t c,
               std::int64_t sh, std::int64_t sw) {
    const auto wrap = [](std::int64_t v, std::int64_t m) { return ((v % m) + m) % m; };
    for (std::int64_t bi = 0; bi < b; ++bi) {
        for (std::int64_t r = 0; r < h; ++r) {
            const std::int64_t sr = wrap(r - sh, h);
            for (std::int64_t col = 0; col < w; ++col) {
                const std::int64_t sc = wrap(col - sw, w);
                const T* s = src + ((bi * h + sr) * w + sc) * c;
                T* d = dst + ((bi * h + r) * w + col) * c;
                for (std::int64_t ch = 0; ch < c; ++ch) {
                    d[ch] += s[ch];
                }
            }
        }
    }
}

} // namespace

template <typename T>
Tensor<T> roll2d(const Tensor<T>& x, std::int64_t shift_h, std::int64_t shift_w) {
    if (x.rank() != 4) {
        throw ShapeError("roll2d expects a rank-4 tensor, got " + shape_str(x.shape()));
    }
    const std::int64_t b = x.dim(0);
    const std::int64_t h = x.dim(1);
    const std::int64_t w = x.dim(2);
    const std::int64_t c = x.dim(3);
    auto out = Tensor<T>::zeros(x.shape());
    roll_copy(x.data().data(), out.mutable_data().data(), b, h, w, c, shift_h, shift_w);
    auto* g = Graph<T>::current();
    if (g && tracked(x)) {
        g->record("roll2d", out, [sx = x.storage(), so = out.storage(), b, h, w, c, shift_h, shift_w]() {
            sx->ensure_grad();
            roll_copy(so->grad.data(), sx->grad.data(), b, h, w, c, -shift_h, -shift_w);
        });
    }
    return out;
}

template <typename T>
Tensor<T> slice_last(const Tensor<T>& x, std::int64_t start, std::int64_t len) {
    const std::int64_t d = x.dim(x.rank() - 1);
    if (start < 0 || len < 1 || start + len > d) {
        throw ShapeError("slice_last: range [" + std::to_string(start) + ", " + std::to_string(start + len) +
                         ") invalid for last extent " + std::to_string(d));
    }
    Shape out_shape = x.shape();
    out_shape.back() = len;
    auto out = Tensor<T>::zeros(out_shape);
    const std::int64_t rows = x.numel() / d;
    const auto xv = x.data();
    auto ov = out.mutable_data();
    for (std::int64_t r = 0; r < rows; ++r) {
        std::memcpy(ov.data() + r * len, xv.data() + r * d + start, sizeof(T) * static_cast<std::size_t>(len));
    }
    auto* g = Graph<T>::current();
    if (g && tracked(x)) {
        g->record("slice_last", out, [sx = x.storage(), so = out.storage(), rows, d, start, len]() {
            sx->ensure_grad();
            for (std::int64_t r = 0; r < rows; ++r) {
                const T* gsrc = so->grad.data() + r * len;
                T* gdst = sx->grad.data() + r * d + start;
                for (std::int64_t j = 0; j < len; ++j) {
                    gdst[j] += gsrc[j];
                }
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias) {
    const std::int64_t d = x.dim(x.rank() - 1);
    if (bias.rank() != 1 || bias.dim(0) != d) {
        throw ShapeError("add_bias: bias " + shape_str(bias.shape()) + " does not match last extent of " +
                         shape_str(x.shape()));
    }
    auto out = Tensor<T>::zeros(x.shape());
    const std::int64_t rows = x.numel() / d;
    const auto xv = x.data();
    const auto bv = bias.data();
    auto ov = out.mutable_data();
    for (std::int64_t r = 0; r < rows; ++r) {
        const T* src = xv.data() + r * d;
        T* dst = ov.data() + r * d;
        for (std::int64_t j = 0; j < d; ++j) {
            dst[j] = src[j] + bv[j];
        }
    }
    auto* g = Graph<T>::current();
    const bool nx = tracked(x);
    const bool nb = tracked(bias);
    if (g && (nx || nb)) {
        g->record("add_bias", out,
                  [sx = x.storage(), sb = bias.storage(), so = out.storage(), rows, d, nx, nb]() {
                      if (nx) {
                          sx->ensure_grad();
                          for (std::size_t i = 0; i < so->grad.size(); ++i) {
                              sx->grad[i] += so->grad[i];
                          }
                      }
                      if (nb) {
                          sb->ensure_grad();
                          for (std::int64_t r = 0; r < rows; ++r) {
                              const T* go = so->grad.data() + r * d;
                              for (std::int64_t j = 0; j < d; ++j) {
                                  sb->grad[j] += go[j];
                              }
                          }
                      }
                  });
    }
    return out;
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, bool transpose_b) {
    if (a.rank() < 2 || b.rank() < 2) {
        throw ShapeError("matmul: operands must have rank >= 2, got " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
    }
    const auto& ashape = a.shape();
    const auto& bshape = b.shape();
    const std::int64_t m = ashape[ashape.size() - 2];
    const std::int64_t k = ashape[ashape.size() - 1];
    const std::int64_t bk = transpose_b ? bshape[bshape.size() - 1] : bshape[bshape.size() - 2];
    const std::int64_t n = transpose_b ? bshape[bshape.size() - 2] : bshape[bshape.size() - 1];
    const bool shared_b = b.rank() == 2 && a.rank() > 2;
    if (bk != k) {
        throw ShapeError("matmul: inner extents differ, " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()) + (transpose_b ? " (rhs transposed)" : ""));
    }
    if (!shared_b) {
        if (a.rank() != b.rank() ||
            !std::equal(ashape.begin(), ashape.end() - 2, bshape.begin(), bshape.end() - 2)) {
            throw ShapeError("matmul: leading dims differ, " + shape_str(a.shape()) + " x " +
                             shape_str(b.shape()));
        }
    }
    Shape out_shape(ashape.begin(), ashape.end() - 2);
    out_shape.push_back(m);
    out_shape.push_back(n);
    auto out = Tensor<T>::zeros(out_shape);
    const std::int64_t batch = a.numel() / (m * k);
    const std::int64_t b_step = shared_b ? 0 : k * n;
    {
        const T* ap = a.data().data();
        const T* bp = b.data().data();
        T* op = out.mutable_data().data();
        for (std::int64_t bi = 0; bi < batch; ++bi) {
            gemm_acc(ap + bi * m * k, bp + bi * b_step, op + bi * m * n, m, k, n, false, transpose_b);
        }
    }
    auto* g = Graph<T>::current();
    const bool na = tracked(a);
    const bool nb = tracked(b);
    if (g && (na || nb)) {
        g->record("matmul", out,
                  [sa = a.storage(), sb = b.storage(), so = out.storage(), m, k, n, batch, b_step,
                   transpose_b, na, nb]() {
                      const T* go = so->grad.data();
                      if (na) {
                          sa->ensure_grad();
                          T* da = sa->grad.data();
                          const T* bp = sb->data.data();
                          for (std::int64_t bi = 0; bi < batch; ++bi) {
                              // dA = dC * B^T (logical)
                              gemm_acc(go + bi * m * n, bp + bi * b_step, da + bi * m * k, m, n, k, false,
                                       !transpose_b);
                          }
                      }
                      if (nb) {
                          sb->ensure_grad();
                          T* db = sb->grad.data();
                          const T* ap = sa->data.data();
                          for (std::int64_t bi = 0; bi < batch; ++bi) {
                              if (!transpose_b) {
                                  // dB = A^T * dC, stored [k, n]
                                  gemm_acc(ap + bi * m * k, go + bi * m * n, db + bi * b_step, k, m, n, true,
                                           false);
                              } else {
                                  // dB = dC^T * A, stored [n, k]
                                  gemm_acc(go + bi * m * n, ap + bi * m * k, db + bi * b_step, n, m, k, true,
                                           false);
                              }
                          }
                      }
                  });
    }
    return out;
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, std::int64_t stride,
                 std::int64_t padding) {
    if (x.rank() != 4 || w.rank() != 4) {
        throw ShapeError("conv2d: expected x [B,C,H,W] and w [O,C,k,k], got " + shape_str(x.shape()) +
                         " and " + shape_str(w.shape()));
    }
    const std::int64_t b = x.dim(0);
    const std::int64_t cin = x.dim(1);
    const std::int64_t h = x.dim(2);
    const std::int64_t wdt = x.dim(3);
    const std::int64_t cout = w.dim(0);
    const std::int64_t kk = w.dim(2);
    if (w.dim(1) != cin || w.dim(3) != kk) {
        throw ShapeError("conv2d: weight " + shape_str(w.shape()) + " incompatible with input " +
                         shape_str(x.shape()));
    }
    if (bias.rank() != 1 || bias.dim(0) != cout) {
        throw ShapeError("conv2d: bias " + shape_str(bias.shape()) + " must be [" + std::to_string(cout) +
                         "]");
    }
    if (stride < 1) {
        throw ConfigError("conv2d: stride must be >= 1");
    }
    const std::int64_t hnum = h + 2 * padding - kk;
    const std::int64_t wnum = wdt + 2 * padding - kk;
    if (hnum < 0 || wnum < 0 || hnum % stride != 0 || wnum % stride != 0) {
        throw ConfigError("conv2d: output extent not integral for input " + shape_str(x.shape()) +
                          ", kernel " + std::to_string(kk) + ", stride " + std::to_string(stride) +
                          ", padding " + std::to_string(padding));
    }
    const std::int64_t oh = hnum / stride + 1;
    const std::int64_t ow = wnum / stride + 1;
    const std::int64_t ohw = oh * ow;
    const std::int64_t ckk = cin * kk * kk;
    auto out = Tensor<T>::zeros({b, cout, oh, ow});
    std::vector<T> cols(static_cast<std::size_t>(ckk * ohw));
    {
        const T* xp = x.data().data();
        const T* wp = w.data().data();
        const T* bp = bias.data().data();
        T* op = out.mutable_data().data();
        for (std::int64_t bi = 0; bi < b; ++bi) {
            im2col(xp + bi * cin * h * wdt, cols.data(), cin, h, wdt, kk, stride, padding, oh, ow);
            T* obatch = op + bi * cout * ohw;
            gemm_acc(wp, cols.data(), obatch, cout, ckk, ohw, false, false);
            for (std::int64_t o = 0; o < cout; ++o) {
                const T bval = bp[o];
                T* orow = obatch + o * ohw;
                for (std::int64_t i = 0; i < ohw; ++i) {
                    orow[i] += bval;
                }
            }
        }
    }
    auto* g = Graph<T>::current();
    const bool nx = tracked(x);
    const bool nw = tracked(w);
    const bool nb = tracked(bias);
    if (g && (nx || nw || nb)) {
        g->record("conv2d", out,
                  [sx = x.storage(), sw = w.storage(), sb = bias.storage(), so = out.storage(), b, cin, h,
                   wdt, cout, kk, stride, padding, oh, ow, nx, nw, nb]() {
                      const std::int64_t ohw = oh * ow;
                      const std::int64_t ckk = cin * kk * kk;
                      const T* go = so->grad.data();
                      if (nb) {
                          sb->ensure_grad();
                          for (std::int64_t bi = 0; bi < b; ++bi) {
                              for (std::int64_t o = 0; o < cout; ++o) {
                                  const T* grow = go + (bi * cout + o) * ohw;
                                  T acc = T(0);
                                  for (std::int64_t i = 0; i < ohw; ++i) {
                                      acc += grow[i];
                                  }
                                  sb->grad[static_cast<std::size_t>(o)] += acc;
                              }
                          }
                      }
                      std::vector<T> cols(static_cast<std::size_t>(ckk * ohw));
                      if (nw) {
                          sw->ensure_grad();
                      }
                      if (nx) {
                          sx->ensure_grad();
                      }
                      std::vector<T> dcols;
                      if (nx) {
                          dcols.assign(static_cast<std::size_t>(ckk * ohw), T(0));
                      }
                      for (std::int64_t bi = 0; bi < b; ++bi) {
                          const T* gbatch = go + bi * cout * ohw;
                          if (nw) {
                              im2col(sx->data.data() + bi * cin * h * wdt, cols.data(), cin, h, wdt, kk,
                                     stride, padding, oh, ow);
                              // dW += dY * cols^T
                              gemm_acc(gbatch, cols.data(), sw->grad.data(), cout, ohw, ckk, false, true);
                          }
                          if (nx) {
                              std::fill(dcols.begin(), dcols.end(), T(0));
                              // dcols = W^T * dY
                              gemm_acc(sw->data.data(), gbatch, dcols.data(), ckk, cout, ohw, true, false);
                              col2im_acc(dcols.data(), sx->grad.data() + bi * cin * h * wdt, cin, h, wdt, kk,
                                         stride, padding, oh, ow);
                          }
                      }
                  });
    }
    return out;
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, T eps) {
    const std::int64_t d = x.dim(x.rank() - 1);
    if (gain.rank() != 1 || gain.dim(0) != d || bias.rank() != 1 || bias.dim(0) != d) {
        throw ShapeError("layer_norm: gain " + shape_str(gain.shape()) + " / bias " +
                         shape_str(bias.shape()) + " must be [" + std::to_string(d) + "]");
    }
    if (!(eps > T(0))) {
        throw ConfigError("layer_norm: eps must be positive");
    }
    const std::int64_t rows = x.numel() / d;
    auto out = Tensor<T>::zeros(x.shape());
    std::vector<T> xhat(static_cast<std::size_t>(x.numel()));
    std::vector<T> inv_std(static_cast<std::size_t>(rows));
    {
        const auto xv = x.data();
        const auto gv = gain.data();
        const auto bv = bias.data();
        auto ov = out.mutable_data();
        for (std::int64_t r = 0; r < rows; ++r) {
            const T* src = xv.data() + r * d;
            T mean = T(0);
            for (std::int64_t j = 0; j < d; ++j) {
                mean += src[j];
            }
            mean /= static_cast<T>(d);
            T var = T(0);
            for (std::int64_t j = 0; j < d; ++j) {
                const T c = src[j] - mean;
                var += c * c;
            }
            var /= static_cast<T>(d);
            const T inv = T(1) / std::sqrt(var + eps);
            inv_std[static_cast<std::size_t>(r)] = inv;
            T* xh = xhat.data() + r * d;
            T* dst = ov.data() + r * d;
            for (std::int64_t j = 0; j < d; ++j) {
                xh[j] = (src[j] - mean) * inv;
                dst[j] = gv[j] * xh[j] + bv[j];
            }
        }
    }
    auto* g = Graph<T>::current();
    const bool nx = tracked(x);
    const bool ng = tracked(gain);
    const bool nb = tracked(bias);
    if (g && (nx || ng || nb)) {
        g->record("layer_norm", out,
                  [sx = x.storage(), sg = gain.storage(), sb = bias.storage(), so = out.storage(),
                   xhat = std::move(xhat), inv_std = std::move(inv_std), rows, d, nx, ng, nb]() {
                      const T* go = so->grad.data();
                      if (ng) {
                          sg->ensure_grad();
                      }
                      if (nb) {
                          sb->ensure_grad();
                      }
                      if (nx) {
                          sx->ensure_grad();
                      }
                      const T* gainv = sg->data.data();
                      for (std::int64_t r = 0; r < rows; ++r) {
                          const T* grow = go + r * d;
                          const T* xh = xhat.data() + r * d;
                          if (ng) {
                              for (std::int64_t j = 0; j < d; ++j) {
                                  sg->grad[static_cast<std::size_t>(j)] += grow[j] * xh[j];
                              }
                          }
                          if (nb) {
                              for (std::int64_t j = 0; j < d; ++j) {
                                  sb->grad[static_cast<std::size_t>(j)] += grow[j];
                              }
                          }
                          if (nx) {
                              T m1 = T(0);
                              T m2 = T(0);
                              for (std::int64_t j = 0; j < d; ++j) {
                                  const T hval = grow[j] * gainv[j];
                                  m1 += hval;
                                  m2 += hval * xh[j];
                              }
                              m1 /= static_cast<T>(d);
                              m2 /= static_cast<T>(d);
                              T* dst = sx->grad.data() + r * d;
                              const T inv = inv_std[static_cast<std::size_t>(r)];
                              for (std::int64_t j = 0; j < d; ++j) {
                                  const T hval = grow[j] * gainv[j];
                                  dst[j] += (hval - m1 - xh[j] * m2) * inv;
                              }
                          }
                      }
                  });
    }
    return out;
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis) {
    const int ax = normalize_axis(axis, x.rank(), "softmax");
    const auto& shape = x.shape();
    std::int64_t outer = 1;
    std::int64_t inner = 1;
    for (int i = 0; i < ax; ++i) {
        outer *= shape[static_cast<std::size_t>(i)];
    }
    for (int i = ax + 1; i < x.rank(); ++i) {
        inner *= shape[static_cast<std::size_t>(i)];
    }
    const std::int64_t len = shape[static_cast<std::size_t>(ax)];
    auto out = Tensor<T>::zeros(shape);
    {
        const auto xv = x.data();
        auto ov = out.mutable_data();
        for (std::int64_t o = 0; o < outer; ++o) {
            for (std::int64_t i = 0; i < inner; ++i) {
                const std::int64_t base = o * len * inner + i;
                T mx = xv[static_cast<std::size_t>(base)];
                for (std::int64_t j = 1; j < len; ++j) {
                    mx = std::max(mx, xv[static_cast<std::size_t>(base + j * inner)]);
                }
                T denom = T(0);
                for (std::int64_t j = 0; j < len; ++j) {
                    const T e = std::exp(xv[static_cast<std::size_t>(base + j * inner)] - mx);
                    ov[static_cast<std::size_t>(base + j * inner)] = e;
                    denom += e;
                }
                const T inv = T(1) / denom;
                for (std::int64_t j = 0; j < len; ++j) {
                    ov[static_cast<std::size_t>(base + j * inner)] *= inv;
                }
            }
        }
    }
    auto* g = Graph<T>::current();
    if (g && tracked(x)) {
        g->record("softmax", out, [sx = x.storage(), so = out.storage(), outer, len, inner]() {
            sx->ensure_grad();
            const T* y = so->data.data();
            const T* go = so->grad.data();
            for (std::int64_t o = 0; o < outer; ++o) {
                for (std::int64_t i = 0; i < inner; ++i) {
                    const std::int64_t base = o * len * inner + i;
                    T dot = T(0);
                    for (std::int64_t j = 0; j < len; ++j) {
                        const std::int64_t p = base + j * inner;
                        dot += go[p] * y[p];
                    }
                    for (std::int64_t j = 0; j < len; ++j) {
                        const std::int64_t p = base + j * inner;
                        sx->grad[static_cast<std::size_t>(p)] += y[p] * (go[p] - dot);
                    }
                }
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
    auto out = Tensor<T>::zeros(x.shape());
    const auto xv = x.data();
    auto ov = out.mutable_data();
    const T inv_sqrt2 = static_cast<T>(0.7071067811865475244);
    for (std::size_t i = 0; i < ov.size(); ++i) {
        const T v = xv[i];
        const T cdf = T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
        ov[i] = v * cdf;
    }
    auto* g = Graph<T>::current();
    if (g && tracked(x)) {
        g->record("gelu", out, [sx = x.storage(), so = out.storage()]() {
            sx->ensure_grad();
            const T inv_sqrt2 = static_cast<T>(0.7071067811865475244);
            const T inv_sqrt2pi = static_cast<T>(0.3989422804014326779);
            for (std::size_t i = 0; i < so->grad.size(); ++i) {
                const T v = sx->data[i];
                const T cdf = T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
                const T pdf = inv_sqrt2pi * std::exp(T(-0.5) * v * v);
                sx->grad[i] += so->grad[i] * (cdf + v * pdf);
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const std::vector<std::int32_t>& labels) {
    if (logits.rank() != 2) {
        throw ShapeError("cross_entropy: logits must be [B, K], got " + shape_str(logits.shape()));
    }
    const std::int64_t b = logits.dim(0);
    const std::int64_t k = logits.dim(1);
    if (static_cast<std::int64_t>(labels.size()) != b) {
        throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for batch " +
                         std::to_string(b));
    }
    for (const auto lbl : labels) {
        if (lbl < 0 || lbl >= k) {
            throw DataError("cross_entropy: label " + std::to_string(lbl) + " out of range [0, " +
                            std::to_string(k) + ")");
        }
    }
    std::vector<T> probs(static_cast<std::size_t>(b * k));
    T total = T(0);
    {
        const auto lv = logits.data();
        for (std::int64_t r = 0; r < b; ++r) {
            const T* row = lv.data() + r * k;
            T mx = row[0];
            for (std::int64_t j = 1; j < k; ++j) {
                mx = std::max(mx, row[j]);
            }
            T denom = T(0);
            T* prow = probs.data() + r * k;
            for (std::int64_t j = 0; j < k; ++j) {
                prow[j] = std::exp(row[j] - mx);
                denom += prow[j];
            }
            const T inv = T(1) / denom;
            for (std::int64_t j = 0; j < k; ++j) {
                prow[j] *= inv;
            }
            const T lse = mx + std::log(denom);
            total += lse - row[labels[static_cast<std::size_t>(r)]];
        }
    }
    auto out = Tensor<T>::scalar(total / static_cast<T>(b));
    auto* g = Graph<T>::current();
    if (g && tracked(logits)) {
        g->record("cross_entropy", out,
                  [sl = logits.storage(), so = out.storage(), probs = std::move(probs), labels, b, k]() {
                      sl->ensure_grad();
                      const T go = so->grad[0] / static_cast<T>(b);
                      for (std::int64_t r = 0; r < b; ++r) {
                          const T* prow = probs.data() + r * k;
                          T* grow = sl->grad.data() + r * k;
                          const std::int64_t lbl = labels[static_cast<std::size_t>(r)];
                          for (std::int64_t j = 0; j < k; ++j) {
                              grow[j] += go * (prow[j] - (j == lbl ? T(1) : T(0)));
                          }
                      }
                  });
    }
    return out;
}

template <typename T>
Tensor<T> merge2x2(const Tensor<T>& x) {
    if (x.rank() != 4) {
        throw ShapeError("merge2x2 expects [B,H,W,C], got " + shape_str(x.shape()));
    }
    const std::int64_t b = x.dim(0);
    const std::int64_t h = x.dim(1);
    const std::int64_t w = x.dim(2);
    const std::int64_t c = x.dim(3);
    if (h % 2 != 0 || w % 2 != 0) {
        throw ConfigError("merge2x2: spatial extents must be even, got " + shape_str(x.shape()));
    }
    const std::int64_t oh = h / 2;
    const std::int64_t ow = w / 2;
    auto out = Tensor<T>::zeros({b, oh, ow, 4 * c});
    static constexpr std::int64_t kQuadRow[4] = {0, 0, 1, 1};
    static constexpr std::int64_t kQuadCol[4] = {0, 1, 0, 1};
    {
        const auto xv = x.data();
        auto ov = out.mutable_data();
        for (std::int64_t bi = 0; bi < b; ++bi) {
            for (std::int64_t i = 0; i < oh; ++i) {
                for (std::int64_t j = 0; j < ow; ++j) {
                    T* dst = ov.data() + ((bi * oh + i) * ow + j) * 4 * c;
                    for (int q = 0; q < 4; ++q) {
                        const T* src =
                            xv.data() + ((bi * h + 2 * i + kQuadRow[q]) * w + 2 * j + kQuadCol[q]) * c;
                        std::memcpy(dst + q * c, src, sizeof(T) * static_cast<std::size_t>(c));
                    }
                }
            }
        }
    }
    auto* g = Graph<T>::current();
    if (g && tracked(x)) {
        g->record("merge2x2", out, [sx = x.storage(), so = out.storage(), b, h, w, c, oh, ow]() {
            sx->ensure_grad();
            for (std::int64_t bi = 0; bi < b; ++bi) {
                for (std::int64_t i = 0; i < oh; ++i) {
                    for (std::int64_t j = 0; j < ow; ++j) {
                        const T* gsrc = so->grad.data() + ((bi * oh + i) * ow + j) * 4 * c;
                        for (int q = 0; q < 4; ++q) {
                            T* gdst = sx->grad.data() +
                                      ((bi * h + 2 * i + kQuadRow[q]) * w + 2 * j + kQuadCol[q]) * c;
                            for (std::int64_t ch = 0; ch < c; ++ch) {
                                gdst[ch] += gsrc[q * c + ch];
                            }
                        }
                    }
                }
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> add_rel_pos_bias(const Tensor<T>& logits, const Tensor<T>& table,
                           const std::vector<std::int32_t>& index) {
    if (logits.rank() != 4) {
        throw ShapeError("add_rel_pos_bias expects [W,h,N,N] logits, got " + shape_str(logits.shape()));
    }
    const std::int64_t wn = logits.dim(0);
    const std::int64_t heads = logits.dim(1);
    const std::int64_t n = logits.dim(2);
    if (logits.dim(3) != n || static_cast<std::int64_t>(index.size()) != n * n) {
        throw ShapeError("add_rel_pos_bias: index size " + std::to_string(index.size()) +
                         " does not match logits " + shape_str(logits.shape()));
    }
    if (table.rank() != 2 || table.dim(1) != heads) {
        throw ShapeError("add_rel_pos_bias: table " + shape_str(table.shape()) + " must be [buckets, " +
                         std::to_string(heads) + "]");
    }
    auto out = Tensor<T>::zeros(logits.shape());
    {
        const auto lv = logits.data();
        const auto tv = table.data();
        auto ov = out.mutable_data();
        for (std::int64_t wi = 0; wi < wn; ++wi) {
            for (std::int64_t hd = 0; hd < heads; ++hd) {
                T* dst = ov.data() + (wi * heads + hd) * n * n;
                const T* src = lv.data() + (wi * heads + hd) * n * n;
                for (std::int64_t ij = 0; ij < n * n; ++ij) {
                    dst[ij] = src[ij] + tv[static_cast<std::size_t>(index[static_cast<std::size_t>(ij)]) *
                                               static_cast<std::size_t>(heads) +
                                           static_cast<std::size_t>(hd)];
                }
            }
        }
    }
    auto* g = Graph<T>::current();
    const bool nl = tracked(logits);
    const bool nt = tracked(table);
    if (g && (nl || nt)) {
        g->record("add_rel_pos_bias", out,
                  [sl = logits.storage(), st = table.storage(), so = out.storage(), index, wn, heads, n, nl,
                   nt]() {
                      const T* go = so->grad.data();
                      if (nl) {
                          sl->ensure_grad();
                          for (std::size_t i = 0; i < so->grad.size(); ++i) {
                              sl->grad[i] += go[i];
                          }
                      }
                      if (nt) {
                          st->ensure_grad();
                          for (std::int64_t wi = 0; wi < wn; ++wi) {
                              for (std::int64_t hd = 0; hd < heads; ++hd) {
                                  const T* grow = go + (wi * heads + hd) * n * n;
                                  for (std::int64_t ij = 0; ij < n * n; ++ij) {
                                      st->grad[static_cast<std::size_t>(
                                                   index[static_cast<std::size_t>(ij)]) *
                                                   static_cast<std::size_t>(heads) +
                                               static_cast<std::size_t>(hd)] += grow[ij];
                                  }
                              }
                          }
                      }
                  });
    }
    return out;
}

template <typename T>
Tensor<T> add_window_mask(const Tensor<T>& logits, const Tensor<T>& mask) {
    if (logits.rank() != 4 || mask.rank() != 3) {
        throw ShapeError("add_window_mask expects [BW,h,N,N] logits and [nW,N,N] mask, got " +
                         shape_str(logits.shape()) + " and " + shape_str(mask.shape()));
    }
    const std::int64_t bw = logits.dim(0);
    const std::int64_t heads = logits.dim(1);
    const std::int64_t n = logits.dim(2);
    const std::int64_t nw = mask.dim(0);
    if (logits.dim(3) != n || mask.dim(1) != n || mask.dim(2) != n || bw % nw != 0) {
        throw ShapeError("add_window_mask: mask " + shape_str(mask.shape()) + " incompatible with logits " +
                         shape_str(logits.shape()));
    }
    auto out = Tensor<T>::zeros(logits.shape());
    {
        const auto lv = logits.data();
        const auto mv = mask.data();
        auto ov = out.mutable_data();
        for (std::int64_t bi = 0; bi < bw; ++bi) {
            const T* mrow = mv.data() + (bi % nw) * n * n;
            for (std::int64_t hd = 0; hd < heads; ++hd) {
                const T* src = lv.data() + (bi * heads + hd) * n * n;
                T* dst = ov.data() + (bi * heads + hd) * n * n;
                for (std::int64_t ij = 0; ij < n * n; ++ij) {
                    dst[ij] = src[ij] + mrow[ij];
                }
            }
        }
    }
    auto* g = Graph<T>::current();
    if (g && tracked(logits)) {
        g->record("add_window_mask", out, [sl = logits.storage(), so = out.storage()]() {
            sl->ensure_grad();
            for (std::size_t i = 0; i < so->grad.size(); ++i) {
                sl->grad[i] += so->grad[i];
            }
        });
    }
    return out;
}

template <typename T>
std::vector<std::int32_t> argmax_rows(const Tensor<T>& x) {
    if (x.rank() != 2) {
        throw ShapeError("argmax_rows expects [B, K], got " + shape_str(x.shape()));
    }
    const std::int64_t b = x.dim(0);
    const std::int64_t k = x.dim(1);
    std::vector<std::int32_t> out(static_cast<std::size_t>(b));
    const auto xv = x.data();
    for (std::int64_t r = 0; r < b; ++r) {
        const T* row = xv.data() + r * k;
        std::int32_t best = 0;
        for (std::int64_t j = 1; j < k; ++j) {
            if (row[j] > row[best]) {
                best = static_cast<std::int32_t>(j);
            }
        }
        out[static_cast<std::size_t>(r)] = best;
    }
    return out;
}

#define SPARSESWIN_INSTANTIATE_OPS(T)                                                                        \
    template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                              \
    template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                              \
    template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                              \
    template Tensor<T> scale(const Tensor<T>&, T);                                                           \
    template Tensor<T> add_scalar(const Tensor<T>&, T);                                                      \
    template Tensor<T> absval(const Tensor<T>&);                                                             \
    template Tensor<T> sum_all(const Tensor<T>&);                                                            \
    template Tensor<T> mean_axis(const Tensor<T>&, int);                                                     \
    template Tensor<T> reshape(const Tensor<T>&, Shape);                                                     \
    template Tensor<T> permute(const Tensor<T>&, const std::vector<int>&);                                   \
    template Tensor<T> roll2d(const Tensor<T>&, std::int64_t, std::int64_t);                                 \
    template Tensor<T> slice_last(const Tensor<T>&, std::int64_t, std::int64_t);                             \
    template Tensor<T> add_bias(const Tensor<T>&, const Tensor<T>&);                                         \
    template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&, bool);                                     \
    template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::int64_t,            \
                              std::int64_t);                                                                 \
    template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);                  \
    template Tensor<T> softmax(const Tensor<T>&, int);                                                       \
    template Tensor<T> gelu(const Tensor<T>&);                                                               \
    template Tensor<T> cross_entropy(const Tensor<T>&, const std::vector<std::int32_t>&);                    \
    template Tensor<T> merge2x2(const Tensor<T>&);                                                           \
    template Tensor<T> add_rel_pos_bias(const Tensor<T>&, const Tensor<T>&,                                  \
                                        const std::vector<std::int32_t>&);                                   \
    template Tensor<T> add_window_mask(const Tensor<T>&, const Tensor<T>&);                                  \
    template std::vector<std::int32_t> argmax_rows(const Tensor<T>&);

SPARSESWIN_INSTANTIATE_OPS(float)
SPARSESWIN_INSTANTIATE_OPS(double)

#undef SPARSESWIN_INSTANTIATE_OPS

} // namespace sparseswin
