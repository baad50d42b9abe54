#include "dal/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace dal::lin {

namespace {

void require(bool ok, const std::string& what) {
    if (!ok) throw std::invalid_argument(what);
}

void require_symmetric(const Mat& m, const char* name) {
    require(m.rows == m.cols, std::string(name) + " must be square, got " +
                                  std::to_string(m.rows) + "x" + std::to_string(m.cols));
    double scale = 0.0;
    for (double v : m.a) scale = std::max(scale, std::abs(v));
    const double tol = 1e-9 * std::max(scale, 1.0);
    for (int i = 0; i < m.rows; ++i)
        for (int j = i + 1; j < m.cols; ++j)
            require(std::abs(m(i, j) - m(j, i)) <= tol,
                    std::string(name) + " is not symmetric at (" + std::to_string(i) + "," +
                        std::to_string(j) + ")");
}

} // namespace

Mat matmul(const Mat& x, const Mat& y) {
    require(x.cols == y.rows, "matmul: inner dimensions " + std::to_string(x.cols) + " and " +
                                  std::to_string(y.rows) + " differ");
    Mat out(x.rows, y.cols);
    for (int i = 0; i < x.rows; ++i)
        for (int k = 0; k < x.cols; ++k) {
            const double v = x(i, k);
            if (v == 0.0) continue;
            for (int j = 0; j < y.cols; ++j) out(i, j) += v * y(k, j);
        }
    return out;
}

Mat transpose(const Mat& x) {
    Mat out(x.cols, x.rows);
    for (int i = 0; i < x.rows; ++i)
        for (int j = 0; j < x.cols; ++j) out(j, i) = x(i, j);
    return out;
}

Mat cholesky(const Mat& a) {
    require_symmetric(a, "cholesky: matrix");
    const int n = a.rows;
    Mat l(n, n);
    for (int j = 0; j < n; ++j) {
        double d = a(j, j);
        for (int k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
        if (!(d > 0.0))
            throw std::runtime_error("cholesky: matrix is not positive definite at pivot " +
                                     std::to_string(j) + " (d = " + std::to_string(d) + ")");
        l(j, j) = std::sqrt(d);
        for (int i = j + 1; i < n; ++i) {
            double s = a(i, j);
            for (int k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
            l(i, j) = s / l(j, j);
        }
    }
    return l;
}

void solve_lower_inplace(const Mat& l, Mat& x) {
    require(l.rows == l.cols && l.rows == x.rows, "solve_lower: dimension mismatch");
    for (int c = 0; c < x.cols; ++c)
        for (int i = 0; i < l.rows; ++i) {
            double s = x(i, c);
            for (int k = 0; k < i; ++k) s -= l(i, k) * x(k, c);
            x(i, c) = s / l(i, i);
        }
}

void solve_lower_transposed_inplace(const Mat& l, Mat& x) {
    require(l.rows == l.cols && l.rows == x.rows, "solve_lower_t: dimension mismatch");
    for (int c = 0; c < x.cols; ++c)
        for (int i = l.rows - 1; i >= 0; --i) {
            double s = x(i, c);
            for (int k = i + 1; k < l.rows; ++k) s -= l(k, i) * x(k, c);
            x(i, c) = s / l(i, i);
        }
}

std::vector<double> cholesky_solve(const Mat& l, std::vector<double> b) {
    require(static_cast<int>(b.size()) == l.rows, "cholesky_solve: size mismatch");
    Mat col(l.rows, 1);
    for (int i = 0; i < l.rows; ++i) col(i, 0) = b[static_cast<size_t>(i)];
    solve_lower_inplace(l, col);
    solve_lower_transposed_inplace(l, col);
    for (int i = 0; i < l.rows; ++i) b[static_cast<size_t>(i)] = col(i, 0);
    return b;
}

SymEig sym_eig(Mat a) {
    require_symmetric(a, "sym_eig: matrix");
    const int n = a.rows;
    Mat v = Mat::identity(n);

    auto off_norm = [&]() {
        double s = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) s += 2.0 * a(i, j) * a(i, j);
        return std::sqrt(s);
    };
    double frob = 0.0;
    for (double x : a.a) frob += x * x;
    frob = std::sqrt(frob);
    const double tol = 1e-14 * std::max(frob, 1e-300);

    for (int sweep = 0; sweep < 64 && off_norm() > tol; ++sweep) {
        for (int p = 0; p < n - 1; ++p)
            for (int q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (std::abs(apq) <= 1e-300) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (int k = 0; k < n; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
    }

    std::vector<int> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int x, int y) { return a(x, x) > a(y, y); });

    SymEig out;
    out.values.resize(static_cast<size_t>(n));
    out.vectors = Mat(n, n);
    for (int j = 0; j < n; ++j) {
        const int src = order[static_cast<size_t>(j)];
        out.values[static_cast<size_t>(j)] = a(src, src);
        int peak = 0;
        for (int i = 1; i < n; ++i)
            if (std::abs(v(i, src)) > std::abs(v(peak, src))) peak = i;
        const double sign = v(peak, src) < 0 ? -1.0 : 1.0;
        for (int i = 0; i < n; ++i) out.vectors(i, j) = sign * v(i, src);
    }
    return out;
}

SymEig symmetric_generalized_eig(const Mat& a, const Mat& b) {
    require_symmetric(a, "generalized eig: A");
    require(a.rows == b.rows && a.cols == b.cols,
            "generalized eig: A and B must share a shape");
    const Mat l = cholesky(b); // throws with the pivot named when B is not PD

    // C = L^-1 A L^-T, kept symmetric by construction
    Mat c = a;
    solve_lower_inplace(l, c);                 // L^-1 A
    c = transpose(c);                          // (L^-1 A)^T = A L^-T
    solve_lower_inplace(l, c);                 // L^-1 A L^-T
    for (int i = 0; i < c.rows; ++i)           // clean round-off asymmetry
        for (int j = i + 1; j < c.cols; ++j) {
            const double m = 0.5 * (c(i, j) + c(j, i));
            c(i, j) = c(j, i) = m;
        }

    SymEig eig = sym_eig(std::move(c));
    solve_lower_transposed_inplace(l, eig.vectors); // V = L^-T Q
    return eig;
}

} // namespace dal::lin
