#pragma once

#include <algorithm>
#include <cmath>

#include "pldiff/tensor.hpp"

namespace pldiff {

// ---- elementwise ----

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    detail::same_shape(a, b, "add");
    Tensor<T> out = Tensor<T>::raw(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a[i] + b[i];
    detail::attach(out, "add", {a, b}, [an = a.node().get(), bn = b.node().get(), on = out.node().get()] {
        if (an->requires_grad) {
            an->ensure_grad();
            for (std::size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (std::size_t i = 0; i < on->grad.size(); ++i) bn->grad[i] += on->grad[i];
        }
    });
    return out;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    detail::same_shape(a, b, "sub");
    Tensor<T> out = Tensor<T>::raw(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a[i] - b[i];
    detail::attach(out, "sub", {a, b}, [an = a.node().get(), bn = b.node().get(), on = out.node().get()] {
        if (an->requires_grad) {
            an->ensure_grad();
            for (std::size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (std::size_t i = 0; i < on->grad.size(); ++i) bn->grad[i] -= on->grad[i];
        }
    });
    return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    detail::same_shape(a, b, "mul");
    Tensor<T> out = Tensor<T>::raw(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a[i] * b[i];
    detail::attach(out, "mul", {a, b}, [an = a.node().get(), bn = b.node().get(), on = out.node().get()] {
        if (an->requires_grad) {
            an->ensure_grad();
            for (std::size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i] * bn->value[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (std::size_t i = 0; i < on->grad.size(); ++i) bn->grad[i] += on->grad[i] * an->value[i];
        }
    });
    return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, double c) {
    Tensor<T> out = Tensor<T>::raw(a.shape());
    const T cc = static_cast<T>(c);
    for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a[i] * cc;
    detail::attach(out, "scale", {a}, [an = a.node().get(), on = out.node().get(), cc] {
        an->ensure_grad();
        for (std::size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i] * cc;
    });
    return out;
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, double c) {
    Tensor<T> out = Tensor<T>::raw(a.shape());
    const T cc = static_cast<T>(c);
    for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a[i] + cc;
    detail::attach(out, "add_scalar", {a}, [an = a.node().get(), on = out.node().get()] {
        an->ensure_grad();
        for (std::size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i];
    });
    return out;
}

// [n,d] + [d], the one broadcast allowed
template <typename T>
Tensor<T> add_rowvec(const Tensor<T>& x, const Tensor<T>& b) {
    const int n = x.rows(), d = x.cols();
    if (static_cast<int>(b.size()) != d) throw std::invalid_argument("add_rowvec: width mismatch");
    Tensor<T> out = Tensor<T>::raw(x.shape());
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < d; ++c) out.data()[r * d + c] = x[r * d + c] + b[c];
    detail::attach(out, "add_rowvec", {x, b}, [xn = x.node().get(), bn = b.node().get(), on = out.node().get(), n, d] {
        if (xn->requires_grad) {
            xn->ensure_grad();
            for (std::size_t i = 0; i < on->grad.size(); ++i) xn->grad[i] += on->grad[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (int r = 0; r < n; ++r)
                for (int c = 0; c < d; ++c) bn->grad[c] += on->grad[r * d + c];
        }
    });
    return out;
}

template <typename T>
Tensor<T> mul_rowvec(const Tensor<T>& x, const Tensor<T>& g) {
    const int n = x.rows(), d = x.cols();
    if (static_cast<int>(g.size()) != d) throw std::invalid_argument("mul_rowvec: width mismatch");
    Tensor<T> out = Tensor<T>::raw(x.shape());
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < d; ++c) out.data()[r * d + c] = x[r * d + c] * g[c];
    detail::attach(out, "mul_rowvec", {x, g}, [xn = x.node().get(), gn = g.node().get(), on = out.node().get(), n, d] {
        if (xn->requires_grad) {
            xn->ensure_grad();
            for (int r = 0; r < n; ++r)
                for (int c = 0; c < d; ++c) xn->grad[r * d + c] += on->grad[r * d + c] * gn->value[c];
        }
        if (gn->requires_grad) {
            gn->ensure_grad();
            for (int r = 0; r < n; ++r)
                for (int c = 0; c < d; ++c) gn->grad[c] += on->grad[r * d + c] * xn->value[r * d + c];
        }
    });
    return out;
}

// ---- activations ----

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
    Tensor<T> out = Tensor<T>::raw(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out.data()[i] = x[i] > T(0) ? x[i] : T(0);
    detail::attach(out, "relu", {x}, [xn = x.node().get(), on = out.node().get()] {
        xn->ensure_grad();
        for (std::size_t i = 0; i < on->grad.size(); ++i)
            if (xn->value[i] > T(0)) xn->grad[i] += on->grad[i];
    });
    return out;
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, double slope = 0.2) {
    Tensor<T> out = Tensor<T>::raw(x.shape());
    const T s = static_cast<T>(slope);
    for (std::size_t i = 0; i < x.size(); ++i) out.data()[i] = x[i] > T(0) ? x[i] : s * x[i];
    detail::attach(out, "leaky_relu", {x}, [xn = x.node().get(), on = out.node().get(), s] {
        xn->ensure_grad();
        for (std::size_t i = 0; i < on->grad.size(); ++i)
            xn->grad[i] += on->grad[i] * (xn->value[i] > T(0) ? T(1) : s);
    });
    return out;
}

// tanh approximation
template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
    Tensor<T> out = Tensor<T>::raw(x.shape());
    const T k = static_cast<T>(0.7978845608028654);  // sqrt(2/pi)
    for (std::size_t i = 0; i < x.size(); ++i) {
        const T v = x[i];
        out.data()[i] = T(0.5) * v * (T(1) + std::tanh(k * (v + T(0.044715) * v * v * v)));
    }
    detail::attach(out, "gelu", {x}, [xn = x.node().get(), on = out.node().get(), k] {
        xn->ensure_grad();
        for (std::size_t i = 0; i < on->grad.size(); ++i) {
            const T v = xn->value[i];
            const T u = k * (v + T(0.044715) * v * v * v);
            const T th = std::tanh(u);
            const T sech2 = T(1) - th * th;
            const T local = T(0.5) * (T(1) + th) + T(0.5) * v * sech2 * k * (T(1) + T(3) * T(0.044715) * v * v);
            xn->grad[i] += on->grad[i] * local;
        }
    });
    return out;
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    Tensor<T> out = Tensor<T>::raw(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out.data()[i] = T(1) / (T(1) + std::exp(-x[i]));
    detail::attach(out, "sigmoid", {x}, [xn = x.node().get(), on = out.node().get()] {
        xn->ensure_grad();
        for (std::size_t i = 0; i < on->grad.size(); ++i) {
            const T s = on->value[i];
            xn->grad[i] += on->grad[i] * s * (T(1) - s);
        }
    });
    return out;
}

template <typename T>
Tensor<T> exp_(const Tensor<T>& x) {
    Tensor<T> out = Tensor<T>::raw(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out.data()[i] = std::exp(x[i]);
    detail::attach(out, "exp", {x}, [xn = x.node().get(), on = out.node().get()] {
        xn->ensure_grad();
        for (std::size_t i = 0; i < on->grad.size(); ++i) xn->grad[i] += on->grad[i] * on->value[i];
    });
    return out;
}

template <typename T>
Tensor<T> log_(const Tensor<T>& x) {
    Tensor<T> out = Tensor<T>::raw(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out.data()[i] = std::log(x[i]);
    detail::attach(out, "log", {x}, [xn = x.node().get(), on = out.node().get()] {
        xn->ensure_grad();
        for (std::size_t i = 0; i < on->grad.size(); ++i) xn->grad[i] += on->grad[i] / xn->value[i];
    });
    return out;
}

// hard clamp; gradient passes only strictly inside (lo, hi)
template <typename T>
Tensor<T> clamp(const Tensor<T>& x, double lo, double hi) {
    Tensor<T> out = Tensor<T>::raw(x.shape());
    const T l = static_cast<T>(lo), h = static_cast<T>(hi);
    for (std::size_t i = 0; i < x.size(); ++i) out.data()[i] = std::min(std::max(x[i], l), h);
    detail::attach(out, "clamp", {x}, [xn = x.node().get(), on = out.node().get(), l, h] {
        xn->ensure_grad();
        for (std::size_t i = 0; i < on->grad.size(); ++i)
            if (xn->value[i] > l && xn->value[i] < h) xn->grad[i] += on->grad[i];
    });
    return out;
}

// ---- linear algebra ----

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape().size() != 2 || b.shape().size() != 2 || a.cols() != b.rows())
        throw std::invalid_argument("matmul: incompatible shapes");
    const int n = a.rows(), k = a.cols(), m = b.cols();
    Tensor<T> out = Tensor<T>::raw({n, m});
    const T* pa = a.data().data();
    const T* pb = b.data().data();
    T* po = out.data().data();
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < m; ++j) po[i * m + j] = T(0);
        for (int l = 0; l < k; ++l) {
            const T av = pa[i * k + l];
            const T* brow = pb + l * m;
            T* orow = po + i * m;
            for (int j = 0; j < m; ++j) orow[j] += av * brow[j];
        }
    }
    detail::attach(out, "matmul", {a, b}, [an = a.node().get(), bn = b.node().get(), on = out.node().get(), n, k, m] {
        if (an->requires_grad) {
            an->ensure_grad();
            // dA = dO * B^T
            for (int i = 0; i < n; ++i)
                for (int l = 0; l < k; ++l) {
                    T s = T(0);
                    for (int j = 0; j < m; ++j) s += on->grad[i * m + j] * bn->value[l * m + j];
                    an->grad[i * k + l] += s;
                }
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            // dB = A^T * dO
            for (int i = 0; i < n; ++i)
                for (int l = 0; l < k; ++l) {
                    const T av = an->value[i * k + l];
                    for (int j = 0; j < m; ++j) bn->grad[l * m + j] += av * on->grad[i * m + j];
                }
        }
    });
    return out;
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
    if (a.shape().size() != 2) throw std::invalid_argument("transpose: rank-2 only");
    const int n = a.rows(), m = a.cols();
    Tensor<T> out = Tensor<T>::raw({m, n});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) out.data()[j * n + i] = a[i * m + j];
    detail::attach(out, "transpose", {a}, [an = a.node().get(), on = out.node().get(), n, m] {
        an->ensure_grad();
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < m; ++j) an->grad[i * m + j] += on->grad[j * n + i];
    });
    return out;
}

// ---- row-wise normalizations ----

template <typename T>
Tensor<T> softmax(const Tensor<T>& x) {
    const int n = x.rows(), d = x.cols();
    Tensor<T> out = Tensor<T>::raw(x.shape());
    for (int r = 0; r < n; ++r) {
        const T* in = x.data().data() + r * d;
        T* o = out.data().data() + r * d;
        T mx = in[0];
        for (int c = 1; c < d; ++c) mx = std::max(mx, in[c]);
        T sum = T(0);
        for (int c = 0; c < d; ++c) {
            o[c] = std::exp(in[c] - mx);
            sum += o[c];
        }
        for (int c = 0; c < d; ++c) o[c] /= sum;
    }
    detail::attach(out, "softmax", {x}, [xn = x.node().get(), on = out.node().get(), n, d] {
        xn->ensure_grad();
        for (int r = 0; r < n; ++r) {
            const T* y = on->value.data() + r * d;
            const T* dy = on->grad.data() + r * d;
            T* dx = xn->grad.data() + r * d;
            T dot = T(0);
            for (int c = 0; c < d; ++c) dot += y[c] * dy[c];
            for (int c = 0; c < d; ++c) dx[c] += y[c] * (dy[c] - dot);
        }
    });
    return out;
}

// pre-affine layer norm; zero-variance rows come out as zeros via eps
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, double eps = 1e-5) {
    const int n = x.rows(), d = x.cols();
    Tensor<T> out = Tensor<T>::raw(x.shape());
    std::vector<T> rstds(static_cast<std::size_t>(n));
    for (int r = 0; r < n; ++r) {
        const T* in = x.data().data() + r * d;
        T* o = out.data().data() + r * d;
        T mean = T(0);
        for (int c = 0; c < d; ++c) mean += in[c];
        mean /= static_cast<T>(d);
        T var = T(0);
        for (int c = 0; c < d; ++c) {
            const T df = in[c] - mean;
            var += df * df;
        }
        var /= static_cast<T>(d);
        const T rstd = T(1) / std::sqrt(var + static_cast<T>(eps));
        rstds[static_cast<std::size_t>(r)] = rstd;
        for (int c = 0; c < d; ++c) o[c] = (in[c] - mean) * rstd;
    }
    detail::attach(out, "layer_norm", {x},
                   [xn = x.node().get(), on = out.node().get(), n, d, rstds = std::move(rstds)] {
        xn->ensure_grad();
        for (int r = 0; r < n; ++r) {
            const T* y = on->value.data() + r * d;
            const T* dy = on->grad.data() + r * d;
            T* dx = xn->grad.data() + r * d;
            T mean_dy = T(0), mean_dyy = T(0);
            for (int c = 0; c < d; ++c) {
                mean_dy += dy[c];
                mean_dyy += dy[c] * y[c];
            }
            mean_dy /= static_cast<T>(d);
            mean_dyy /= static_cast<T>(d);
            const T rstd = rstds[static_cast<std::size_t>(r)];
            for (int c = 0; c < d; ++c) dx[c] += (dy[c] - mean_dy - y[c] * mean_dyy) * rstd;
        }
    });
    return out;
}

// ---- shape ops ----

template <typename T>
Tensor<T> concat_rows(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.cols() != b.cols()) throw std::invalid_argument("concat_rows: width mismatch");
    const int d = a.cols(), na = a.rows(), nb = b.rows();
    Tensor<T> out = Tensor<T>::raw({na + nb, d});
    std::copy(a.data().begin(), a.data().end(), out.data().begin());
    std::copy(b.data().begin(), b.data().end(), out.data().begin() + a.size());
    detail::attach(out, "concat_rows", {a, b},
                   [an = a.node().get(), bn = b.node().get(), on = out.node().get()] {
        const std::size_t asz = an->value.size();
        if (an->requires_grad) {
            an->ensure_grad();
            for (std::size_t i = 0; i < asz; ++i) an->grad[i] += on->grad[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (std::size_t i = 0; i < bn->value.size(); ++i) bn->grad[i] += on->grad[asz + i];
        }
    });
    return out;
}

template <typename T>
Tensor<T> concat_cols(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rows() != b.rows()) throw std::invalid_argument("concat_cols: row mismatch");
    const int n = a.rows(), da = a.cols(), db = b.cols();
    Tensor<T> out = Tensor<T>::raw({n, da + db});
    for (int r = 0; r < n; ++r) {
        std::copy_n(a.data().begin() + r * da, da, out.data().begin() + r * (da + db));
        std::copy_n(b.data().begin() + r * db, db, out.data().begin() + r * (da + db) + da);
    }
    detail::attach(out, "concat_cols", {a, b},
                   [an = a.node().get(), bn = b.node().get(), on = out.node().get(), n, da, db] {
        for (int r = 0; r < n; ++r) {
            if (an->requires_grad) {
                an->ensure_grad();
                for (int c = 0; c < da; ++c) an->grad[r * da + c] += on->grad[r * (da + db) + c];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (int c = 0; c < db; ++c) bn->grad[r * db + c] += on->grad[r * (da + db) + da + c];
            }
        }
    });
    return out;
}

template <typename T>
Tensor<T> slice_rows(const Tensor<T>& x, int start, int len) {
    const int n = x.rows(), d = x.cols();
    if (start < 0 || len <= 0 || start + len > n) throw std::invalid_argument("slice_rows: out of range");
    Tensor<T> out = Tensor<T>::raw({len, d});
    std::copy_n(x.data().begin() + static_cast<std::size_t>(start) * d, static_cast<std::size_t>(len) * d,
                out.data().begin());
    detail::attach(out, "slice_rows", {x}, [xn = x.node().get(), on = out.node().get(), start, d] {
        xn->ensure_grad();
        for (std::size_t i = 0; i < on->grad.size(); ++i)
            xn->grad[static_cast<std::size_t>(start) * d + i] += on->grad[i];
    });
    return out;
}

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& x, int start, int len) {
    const int n = x.rows(), d = x.cols();
    if (start < 0 || len <= 0 || start + len > d) throw std::invalid_argument("slice_cols: out of range");
    Tensor<T> out = Tensor<T>::raw({n, len});
    for (int r = 0; r < n; ++r)
        std::copy_n(x.data().begin() + r * d + start, len, out.data().begin() + r * len);
    detail::attach(out, "slice_cols", {x}, [xn = x.node().get(), on = out.node().get(), n, d, start, len] {
        xn->ensure_grad();
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < len; ++c) xn->grad[r * d + start + c] += on->grad[r * len + c];
    });
    return out;
}

template <typename T>
Tensor<T> embedding(const Tensor<T>& table, const std::vector<int>& ids) {
    const int v = table.rows(), d = table.cols();
    Tensor<T> out = Tensor<T>::raw({static_cast<int>(ids.size()), d});
    for (std::size_t r = 0; r < ids.size(); ++r) {
        if (ids[r] < 0 || ids[r] >= v) throw std::invalid_argument("embedding: id out of range");
        std::copy_n(table.data().begin() + static_cast<std::size_t>(ids[r]) * d, d,
                    out.data().begin() + r * d);
    }
    detail::attach(out, "embedding", {table}, [tn = table.node().get(), on = out.node().get(), ids, d] {
        tn->ensure_grad();
        for (std::size_t r = 0; r < ids.size(); ++r)
            for (int c = 0; c < d; ++c)
                tn->grad[static_cast<std::size_t>(ids[r]) * d + c] += on->grad[r * d + c];
    });
    return out;
}

// row p repeated counts[p] times; counts are not differentiated
template <typename T>
Tensor<T> repeat_rows(const Tensor<T>& x, const std::vector<int>& counts) {
    if (static_cast<int>(counts.size()) != x.rows())
        throw std::invalid_argument("repeat_rows: counts length mismatch");
    const int d = x.cols();
    int total = 0;
    for (int c : counts) {
        if (c < 0) throw std::invalid_argument("repeat_rows: negative count");
        total += c;
    }
    if (total == 0) throw std::invalid_argument("repeat_rows: all counts zero");
    Tensor<T> out = Tensor<T>::raw({total, d});
    int row = 0;
    for (std::size_t p = 0; p < counts.size(); ++p)
        for (int k = 0; k < counts[p]; ++k, ++row)
            std::copy_n(x.data().begin() + p * d, d, out.data().begin() + static_cast<std::size_t>(row) * d);
    detail::attach(out, "repeat_rows", {x}, [xn = x.node().get(), on = out.node().get(), counts, d] {
        xn->ensure_grad();
        int row = 0;
        for (std::size_t p = 0; p < counts.size(); ++p)
            for (int k = 0; k < counts[p]; ++k, ++row)
                for (int c = 0; c < d; ++c)
                    xn->grad[p * d + c] += on->grad[static_cast<std::size_t>(row) * d + c];
    });
    return out;
}

// ---- reductions / losses ----

template <typename T>
Tensor<T> mean_all(const Tensor<T>& x) {
    Tensor<T> out = Tensor<T>::raw({1});
    T s = T(0);
    for (T v : x.data()) s += v;
    out.data()[0] = s / static_cast<T>(x.size());
    detail::attach(out, "mean", {x}, [xn = x.node().get(), on = out.node().get()] {
        xn->ensure_grad();
        const T g = on->grad[0] / static_cast<T>(xn->value.size());
        for (std::size_t i = 0; i < xn->grad.size(); ++i) xn->grad[i] += g;
    });
    return out;
}

// mean |a-b|; subgradient at 0 is defined as 0
template <typename T>
Tensor<T> l1_loss(const Tensor<T>& a, const Tensor<T>& b) {
    detail::same_shape(a, b, "l1_loss");
    Tensor<T> out = Tensor<T>::raw({1});
    T s = T(0);
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
    out.data()[0] = s / static_cast<T>(a.size());
    detail::attach(out, "l1_loss", {a, b},
                   [an = a.node().get(), bn = b.node().get(), on = out.node().get()] {
        const T g = on->grad[0] / static_cast<T>(an->value.size());
        for (std::size_t i = 0; i < an->value.size(); ++i) {
            const T df = an->value[i] - bn->value[i];
            const T sgn = df > T(0) ? T(1) : (df < T(0) ? T(-1) : T(0));
            if (an->requires_grad) {
                an->ensure_grad();
                an->grad[i] += g * sgn;
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                bn->grad[i] -= g * sgn;
            }
        }
    });
    return out;
}

// mean (a-b)^2
template <typename T>
Tensor<T> mse_loss(const Tensor<T>& a, const Tensor<T>& b) {
    detail::same_shape(a, b, "mse_loss");
    Tensor<T> out = Tensor<T>::raw({1});
    T s = T(0);
    for (std::size_t i = 0; i < a.size(); ++i) {
        const T df = a[i] - b[i];
        s += df * df;
    }
    out.data()[0] = s / static_cast<T>(a.size());
    detail::attach(out, "mse_loss", {a, b},
                   [an = a.node().get(), bn = b.node().get(), on = out.node().get()] {
        const T g = T(2) * on->grad[0] / static_cast<T>(an->value.size());
        for (std::size_t i = 0; i < an->value.size(); ++i) {
            const T df = an->value[i] - bn->value[i];
            if (an->requires_grad) {
                an->ensure_grad();
                an->grad[i] += g * df;
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                bn->grad[i] -= g * df;
            }
        }
    });
    return out;
}

// ---- composites ----

// softmax(q k^T / sqrt(d_k)) v
template <typename T>
Tensor<T> attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v) {
    if (q.cols() != k.cols() || k.rows() != v.rows())
        throw std::invalid_argument("attention: incompatible shapes");
    Tensor<T> scores = scale(matmul(q, transpose(k)), 1.0 / std::sqrt(static_cast<double>(q.cols())));
    return matmul(softmax(scores), v);
}

// 1-D convolution over the row (frame) axis.
// x: [F, Cin], w: [Cout, Cin, kernel], bias: [Cout]  ->  [Fout, Cout]
template <typename T>
Tensor<T> conv1d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, int stride, int pad) {
    if (w.shape().size() != 3) throw std::invalid_argument("conv1d: weight must be [Cout, Cin, k]");
    const int f = x.rows(), cin = x.cols();
    const int cout = w.dim(0), kcin = w.dim(1), kk = w.dim(2);
    if (kcin != cin) throw std::invalid_argument("conv1d: channel mismatch");
    if (static_cast<int>(bias.size()) != cout) throw std::invalid_argument("conv1d: bias size mismatch");
    if (stride < 1) throw std::invalid_argument("conv1d: stride must be >= 1");
    const int fout = (f + 2 * pad - kk) / stride + 1;
    if (fout < 1) throw std::invalid_argument("conv1d: input too short");
    Tensor<T> out = Tensor<T>::raw({fout, cout});
    for (int o = 0; o < fout; ++o) {
        for (int ch = 0; ch < cout; ++ch) {
            T s = bias[static_cast<std::size_t>(ch)];
            for (int t = 0; t < kk; ++t) {
                const int src = o * stride - pad + t;
                if (src < 0 || src >= f) continue;
                const T* xr = x.data().data() + static_cast<std::size_t>(src) * cin;
                const T* wr = w.data().data() + (static_cast<std::size_t>(ch) * kcin * kk);
                for (int c = 0; c < cin; ++c) s += xr[c] * wr[static_cast<std::size_t>(c) * kk + t];
            }
            out.data()[static_cast<std::size_t>(o) * cout + ch] = s;
        }
    }
    detail::attach(out, "conv1d", {x, w, bias},
                   [xn = x.node().get(), wn = w.node().get(), bn = bias.node().get(),
                    on = out.node().get(), f, cin, cout, kk, stride, pad, fout] {
        if (bn->requires_grad) bn->ensure_grad();
        if (wn->requires_grad) wn->ensure_grad();
        if (xn->requires_grad) xn->ensure_grad();
        for (int o = 0; o < fout; ++o) {
            for (int ch = 0; ch < cout; ++ch) {
                const T go = on->grad[static_cast<std::size_t>(o) * cout + ch];
                if (bn->requires_grad) bn->grad[static_cast<std::size_t>(ch)] += go;
                for (int t = 0; t < kk; ++t) {
                    const int src = o * stride - pad + t;
                    if (src < 0 || src >= f) continue;
                    for (int c = 0; c < cin; ++c) {
                        const std::size_t wi = static_cast<std::size_t>(ch) * cin * kk +
                                               static_cast<std::size_t>(c) * kk + t;
                        const std::size_t xi = static_cast<std::size_t>(src) * cin + c;
                        if (wn->requires_grad) wn->grad[wi] += go * xn->value[xi];
                        if (xn->requires_grad) xn->grad[xi] += go * wn->value[wi];
                    }
                }
            }
        }
    });
    return out;
}

}  // namespace pldiff
