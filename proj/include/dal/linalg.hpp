#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dal::lin {

// Dense row-major double matrix, sized for the small symmetric problems the
// spatial-filter and classifier fits need (tens of rows, not thousands).
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<double> a;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), a(static_cast<size_t>(r) * c, 0.0) {}

    double& operator()(int i, int j) { return a[static_cast<size_t>(i) * cols + j]; }
    double operator()(int i, int j) const { return a[static_cast<size_t>(i) * cols + j]; }

    static Mat identity(int n) {
        Mat m(n, n);
        for (int i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }
};

Mat matmul(const Mat& x, const Mat& y);
Mat transpose(const Mat& x);

// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
// Throws std::runtime_error naming the failing pivot when A is not PD.
Mat cholesky(const Mat& a);

// x := L^-1 x and x := L^-T x for a lower-triangular L, column by column.
void solve_lower_inplace(const Mat& l, Mat& x);
void solve_lower_transposed_inplace(const Mat& l, Mat& x);

// Solves (L L^T) x = b given the factor L.
std::vector<double> cholesky_solve(const Mat& l, std::vector<double> b);

struct SymEig {
    std::vector<double> values; // descending
    Mat vectors;                // column k pairs with values[k]
};

// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
// Eigenvalues descend; each eigenvector's largest-magnitude entry is made
// positive so the output is deterministic up to that convention.
SymEig sym_eig(Mat a);

// Solves A v = lambda B v for symmetric A and symmetric positive-definite B
// via B = L L^T whitening and a symmetric eigensolve. Eigenvalues descend and
// the vectors are B-orthonormal: V^T B V = I.
SymEig symmetric_generalized_eig(const Mat& a, const Mat& b);

} // namespace dal::lin
