#include "dal/kernels.hpp"

#include <cmath>

namespace dal::kern {
namespace {

template <class T>
void axpy_s(int n, T a, const T* x, T* y) {
    for (int i = 0; i < n; ++i) y[i] += a * x[i];
}

template <class T>
T dot_s(int n, const T* x, const T* y) {
    T acc = 0;
    for (int i = 0; i < n; ++i) acc += x[i] * y[i];
    return acc;
}

template <class T>
T dot_stride_s(int n, const T* x, const T* y, int ystride) {
    T acc = 0;
    for (int i = 0; i < n; ++i) acc += x[i] * y[i * ystride];
    return acc;
}

template <class T>
T sum_s(int n, const T* x) {
    T acc = 0;
    for (int i = 0; i < n; ++i) acc += x[i];
    return acc;
}

template <class T>
T sumsq_s(int n, const T* x) {
    T acc = 0;
    for (int i = 0; i < n; ++i) acc += x[i] * x[i];
    return acc;
}

template <class T>
T abs_diff_sum_s(int n, const T* x, const T* y) {
    T acc = 0;
    for (int i = 0; i < n; ++i) acc += std::abs(x[i] - y[i]);
    return acc;
}

template <class T>
T sq_diff_sum_s(int n, const T* x, const T* y) {
    T acc = 0;
    for (int i = 0; i < n; ++i) {
        const T d = x[i] - y[i];
        acc += d * d;
    }
    return acc;
}

template <class T>
void scale_shift_s(int n, T a, T b, const T* x, T* y) {
    for (int i = 0; i < n; ++i) y[i] = a * x[i] + b;
}

template <class T>
void conv_row_s(int ny, const T* x, const T* k, int kw, int stride, T* y) {
    for (int i = 0; i < ny; ++i) {
        const T* xi = x + i * stride;
        T acc = 0;
        for (int t = 0; t < kw; ++t) acc += xi[t] * k[t];
        y[i] += acc;
    }
}

template <class T>
void stamp_row_s(int nx, const T* x, const T* k, int kw, int stride, T* y) {
    for (int i = 0; i < nx; ++i) {
        T* yi = y + i * stride;
        const T xi = x[i];
        for (int t = 0; t < kw; ++t) yi[t] += xi * k[t];
    }
}

template <class T>
void bn_bwd_s(int n, const T* dy, const T* xhat, T a, T b, T c, T* dx) {
    for (int i = 0; i < n; ++i) dx[i] += a * dy[i] + b * xhat[i] + c;
}

template <class T>
Table<T> make_scalar_table() {
    Table<T> t;
    t.axpy = axpy_s<T>;
    t.dot = dot_s<T>;
    t.dot_stride = dot_stride_s<T>;
    t.sum = sum_s<T>;
    t.sumsq = sumsq_s<T>;
    t.abs_diff_sum = abs_diff_sum_s<T>;
    t.sq_diff_sum = sq_diff_sum_s<T>;
    t.scale_shift = scale_shift_s<T>;
    t.conv_row = conv_row_s<T>;
    t.stamp_row = stamp_row_s<T>;
    t.bn_bwd = bn_bwd_s<T>;
    return t;
}

} // namespace

template <>
const Table<float>& scalar<float>() {
    static const Table<float> t = make_scalar_table<float>();
    return t;
}

template <>
const Table<double>& scalar<double>() {
    static const Table<double> t = make_scalar_table<double>();
    return t;
}

} // namespace dal::kern
