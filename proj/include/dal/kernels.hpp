#pragma once

#include <cstddef>

// Row-level arithmetic kernels behind the tensor ops. Each kernel has a
// scalar reference implementation and, on x86-64 with AVX2+FMA, a vectorized
// variant selected once at startup. Tests compare the two on random inputs.
//
// Conventions: rows are contiguous unless a stride argument says otherwise,
// conv_row/stamp_row accumulate into the output (callers zero first).
namespace dal::kern {

template <class T>
struct Table {
    // y[i] += a * x[i]
    void (*axpy)(int n, T a, const T* x, T* y);
    // sum x[i] * y[i]
    T (*dot)(int n, const T* x, const T* y);
    // sum x[i] * y[i * ystride]
    T (*dot_stride)(int n, const T* x, const T* y, int ystride);
    T (*sum)(int n, const T* x);
    T (*sumsq)(int n, const T* x);
    T (*abs_diff_sum)(int n, const T* x, const T* y);
    T (*sq_diff_sum)(int n, const T* x, const T* y);
    // y[i] = a * x[i] + b
    void (*scale_shift)(int n, T a, T b, const T* x, T* y);
    // y[i] += sum_t x[i*stride + t] * k[t],  i in [0, ny)
    void (*conv_row)(int ny, const T* x, const T* k, int kw, int stride, T* y);
    // y[i*stride + t] += x[i] * k[t],  i in [0, nx), t in [0, kw)
    void (*stamp_row)(int nx, const T* x, const T* k, int kw, int stride, T* y);
    // dx[i] += a*dy[i] + b*xhat[i] + c
    void (*bn_bwd)(int n, const T* dy, const T* xhat, T a, T b, T c, T* dx);
};

// Scalar reference table (always available; the oracle in equivalence tests).
template <class T>
const Table<T>& scalar();

// Dispatched table: AVX2 when the CPU supports it and scalar is not forced.
template <class T>
const Table<T>& active();

bool cpu_has_avx2();
void set_force_scalar(bool force); // test hook
const char* active_isa();          // "avx2" or "scalar"

} // namespace dal::kern
