// AVX2+FMA kernel variants. This translation unit is the only one compiled
// with -mavx2 -mfma; it must not be entered unless cpu_has_avx2() is true.
#include "dal/kernels.hpp"

#if defined(__AVX2__) && defined(__FMA__)

#include <immintrin.h>
#include <cmath>

namespace dal::kern {
namespace {

// ---------------------------------------------------------------- float ---

inline float hsum8(__m256 v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    lo = _mm_hadd_ps(lo, lo);
    lo = _mm_hadd_ps(lo, lo);
    return _mm_cvtss_f32(lo);
}

void axpy_f(int n, float a, const float* x, float* y) {
    const __m256 va = _mm256_set1_ps(a);
    int i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 vy = _mm256_loadu_ps(y + i);
        vy = _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), vy);
        _mm256_storeu_ps(y + i, vy);
    }
    for (; i < n; ++i) y[i] += a * x[i];
}

float dot_f(int n, const float* x, const float* y) {
    __m256 acc0 = _mm256_setzero_ps(), acc1 = _mm256_setzero_ps();
    int i = 0;
    for (; i + 16 <= n; i += 16) {
        acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i), acc0);
        acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(x + i + 8), _mm256_loadu_ps(y + i + 8), acc1);
    }
    for (; i + 8 <= n; i += 8)
        acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i), acc0);
    float acc = hsum8(_mm256_add_ps(acc0, acc1));
    for (; i < n; ++i) acc += x[i] * y[i];
    return acc;
}

float dot_stride_f(int n, const float* x, const float* y, int ystride) {
    if (ystride == 1) return dot_f(n, x, y);
    float acc = 0.0f;
    for (int i = 0; i < n; ++i) acc += x[i] * y[i * ystride];
    return acc;
}

float sum_f(int n, const float* x) {
    __m256 acc = _mm256_setzero_ps();
    int i = 0;
    for (; i + 8 <= n; i += 8) acc = _mm256_add_ps(acc, _mm256_loadu_ps(x + i));
    float s = hsum8(acc);
    for (; i < n; ++i) s += x[i];
    return s;
}

float sumsq_f(int n, const float* x) {
    __m256 acc = _mm256_setzero_ps();
    int i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 v = _mm256_loadu_ps(x + i);
        acc = _mm256_fmadd_ps(v, v, acc);
    }
    float s = hsum8(acc);
    for (; i < n; ++i) s += x[i] * x[i];
    return s;
}

float abs_diff_sum_f(int n, const float* x, const float* y) {
    const __m256 mask = _mm256_castsi256_ps(_mm256_set1_epi32(0x7fffffff));
    __m256 acc = _mm256_setzero_ps();
    int i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 d = _mm256_sub_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i));
        acc = _mm256_add_ps(acc, _mm256_and_ps(d, mask));
    }
    float s = hsum8(acc);
    for (; i < n; ++i) s += std::abs(x[i] - y[i]);
    return s;
}

float sq_diff_sum_f(int n, const float* x, const float* y) {
    __m256 acc = _mm256_setzero_ps();
    int i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 d = _mm256_sub_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i));
        acc = _mm256_fmadd_ps(d, d, acc);
    }
    float s = hsum8(acc);
    for (; i < n; ++i) {
        const float d = x[i] - y[i];
        s += d * d;
    }
    return s;
}

void scale_shift_f(int n, float a, float b, const float* x, float* y) {
    const __m256 va = _mm256_set1_ps(a), vb = _mm256_set1_ps(b);
    int i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(y + i, _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), vb));
    for (; i < n; ++i) y[i] = a * x[i] + b;
}

void conv_row_f(int ny, const float* x, const float* k, int kw, int stride, float* y) {
    if (stride == 1) {
        int i = 0;
        for (; i + 8 <= ny; i += 8) {
            __m256 acc = _mm256_loadu_ps(y + i);
            for (int t = 0; t < kw; ++t)
                acc = _mm256_fmadd_ps(_mm256_set1_ps(k[t]), _mm256_loadu_ps(x + i + t), acc);
            _mm256_storeu_ps(y + i, acc);
        }
        for (; i < ny; ++i) {
            float acc = 0.0f;
            for (int t = 0; t < kw; ++t) acc += x[i + t] * k[t];
            y[i] += acc;
        }
        return;
    }
    for (int i = 0; i < ny; ++i) {
        const float* xi = x + i * stride;
        float acc = 0.0f;
        for (int t = 0; t < kw; ++t) acc += xi[t] * k[t];
        y[i] += acc;
    }
}

void stamp_row_f(int nx, const float* x, const float* k, int kw, int stride, float* y) {
    // Output windows of consecutive i overlap when stride < kw, so i stays
    // sequential; vectorization is across the kernel taps.
    for (int i = 0; i < nx; ++i) {
        float* yi = y + i * stride;
        const __m256 vx = _mm256_set1_ps(x[i]);
        int t = 0;
        for (; t + 8 <= kw; t += 8) {
            __m256 vy = _mm256_loadu_ps(yi + t);
            vy = _mm256_fmadd_ps(vx, _mm256_loadu_ps(k + t), vy);
            _mm256_storeu_ps(yi + t, vy);
        }
        for (; t < kw; ++t) yi[t] += x[i] * k[t];
    }
}

void bn_bwd_f(int n, const float* dy, const float* xhat, float a, float b, float c, float* dx) {
    const __m256 va = _mm256_set1_ps(a), vb = _mm256_set1_ps(b), vc = _mm256_set1_ps(c);
    int i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 acc = _mm256_fmadd_ps(va, _mm256_loadu_ps(dy + i), vc);
        acc = _mm256_fmadd_ps(vb, _mm256_loadu_ps(xhat + i), acc);
        _mm256_storeu_ps(dx + i, _mm256_add_ps(_mm256_loadu_ps(dx + i), acc));
    }
    for (; i < n; ++i) dx[i] += a * dy[i] + b * xhat[i] + c;
}

// --------------------------------------------------------------- double ---

inline double hsum4(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    lo = _mm_hadd_pd(lo, lo);
    return _mm_cvtsd_f64(lo);
}

void axpy_d(int n, double a, const double* x, double* y) {
    const __m256d va = _mm256_set1_pd(a);
    int i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d vy = _mm256_loadu_pd(y + i);
        vy = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), vy);
        _mm256_storeu_pd(y + i, vy);
    }
    for (; i < n; ++i) y[i] += a * x[i];
}

double dot_d(int n, const double* x, const double* y) {
    __m256d acc0 = _mm256_setzero_pd(), acc1 = _mm256_setzero_pd();
    int i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), acc1);
    }
    for (; i + 4 <= n; i += 4)
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    double acc = hsum4(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) acc += x[i] * y[i];
    return acc;
}

double dot_stride_d(int n, const double* x, const double* y, int ystride) {
    if (ystride == 1) return dot_d(n, x, y);
    double acc = 0.0;
    for (int i = 0; i < n; ++i) acc += x[i] * y[i * ystride];
    return acc;
}

double sum_d(int n, const double* x) {
    __m256d acc = _mm256_setzero_pd();
    int i = 0;
    for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
    double s = hsum4(acc);
    for (; i < n; ++i) s += x[i];
    return s;
}

double sumsq_d(int n, const double* x) {
    __m256d acc = _mm256_setzero_pd();
    int i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d v = _mm256_loadu_pd(x + i);
        acc = _mm256_fmadd_pd(v, v, acc);
    }
    double s = hsum4(acc);
    for (; i < n; ++i) s += x[i] * x[i];
    return s;
}

double abs_diff_sum_d(int n, const double* x, const double* y) {
    const __m256d mask = _mm256_castsi256_pd(_mm256_set1_epi64x(0x7fffffffffffffffLL));
    __m256d acc = _mm256_setzero_pd();
    int i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i));
        acc = _mm256_add_pd(acc, _mm256_and_pd(d, mask));
    }
    double s = hsum4(acc);
    for (; i < n; ++i) s += std::abs(x[i] - y[i]);
    return s;
}

double sq_diff_sum_d(int n, const double* x, const double* y) {
    __m256d acc = _mm256_setzero_pd();
    int i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i));
        acc = _mm256_fmadd_pd(d, d, acc);
    }
    double s = hsum4(acc);
    for (; i < n; ++i) {
        const double d = x[i] - y[i];
        s += d * d;
    }
    return s;
}

void scale_shift_d(int n, double a, double b, const double* x, double* y) {
    const __m256d va = _mm256_set1_pd(a), vb = _mm256_set1_pd(b);
    int i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), vb));
    for (; i < n; ++i) y[i] = a * x[i] + b;
}

void conv_row_d(int ny, const double* x, const double* k, int kw, int stride, double* y) {
    if (stride == 1) {
        int i = 0;
        for (; i + 4 <= ny; i += 4) {
            __m256d acc = _mm256_loadu_pd(y + i);
            for (int t = 0; t < kw; ++t)
                acc = _mm256_fmadd_pd(_mm256_set1_pd(k[t]), _mm256_loadu_pd(x + i + t), acc);
            _mm256_storeu_pd(y + i, acc);
        }
        for (; i < ny; ++i) {
            double acc = 0.0;
            for (int t = 0; t < kw; ++t) acc += x[i + t] * k[t];
            y[i] += acc;
        }
        return;
    }
    for (int i = 0; i < ny; ++i) {
        const double* xi = x + i * stride;
        double acc = 0.0;
        for (int t = 0; t < kw; ++t) acc += xi[t] * k[t];
        y[i] += acc;
    }
}

void stamp_row_d(int nx, const double* x, const double* k, int kw, int stride, double* y) {
    for (int i = 0; i < nx; ++i) {
        double* yi = y + i * stride;
        const __m256d vx = _mm256_set1_pd(x[i]);
        int t = 0;
        for (; t + 4 <= kw; t += 4) {
            __m256d vy = _mm256_loadu_pd(yi + t);
            vy = _mm256_fmadd_pd(vx, _mm256_loadu_pd(k + t), vy);
            _mm256_storeu_pd(yi + t, vy);
        }
        for (; t < kw; ++t) yi[t] += x[i] * k[t];
    }
}

void bn_bwd_d(int n, const double* dy, const double* xhat, double a, double b, double c, double* dx) {
    const __m256d va = _mm256_set1_pd(a), vb = _mm256_set1_pd(b), vc = _mm256_set1_pd(c);
    int i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d acc = _mm256_fmadd_pd(va, _mm256_loadu_pd(dy + i), vc);
        acc = _mm256_fmadd_pd(vb, _mm256_loadu_pd(xhat + i), acc);
        _mm256_storeu_pd(dx + i, _mm256_add_pd(_mm256_loadu_pd(dx + i), acc));
    }
    for (; i < n; ++i) dx[i] += a * dy[i] + b * xhat[i] + c;
}

} // namespace

const Table<float>& avx2_table_f32() {
    static const Table<float> t = [] {
        Table<float> k;
        k.axpy = axpy_f;
        k.dot = dot_f;
        k.dot_stride = dot_stride_f;
        k.sum = sum_f;
        k.sumsq = sumsq_f;
        k.abs_diff_sum = abs_diff_sum_f;
        k.sq_diff_sum = sq_diff_sum_f;
        k.scale_shift = scale_shift_f;
        k.conv_row = conv_row_f;
        k.stamp_row = stamp_row_f;
        k.bn_bwd = bn_bwd_f;
        return k;
    }();
    return t;
}

const Table<double>& avx2_table_f64() {
    static const Table<double> t = [] {
        Table<double> k;
        k.axpy = axpy_d;
        k.dot = dot_d;
        k.dot_stride = dot_stride_d;
        k.sum = sum_d;
        k.sumsq = sumsq_d;
        k.abs_diff_sum = abs_diff_sum_d;
        k.sq_diff_sum = sq_diff_sum_d;
        k.scale_shift = scale_shift_d;
        k.conv_row = conv_row_d;
        k.stamp_row = stamp_row_d;
        k.bn_bwd = bn_bwd_d;
        return k;
    }();
    return t;
}

} // namespace dal::kern

#else
#error "kernels_avx2.cpp must be compiled with -mavx2 -mfma"
#endif
