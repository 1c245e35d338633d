#pragma once

#include <cmath>
#include <cstddef>
#include <random>
#include <stdexcept>
#include <vector>

namespace topopack {

// Row-major dense matrix of doubles. All in-memory math runs in 64-bit;
// file formats narrow to 32-bit where their layout says so.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(int r, int c, double fill = 0.0)
        : rows(r), cols(c), data(static_cast<size_t>(r) * static_cast<size_t>(c), fill) {
        if (r < 0 || c < 0) throw std::invalid_argument("negative matrix dims");
    }

    double& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
    double at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }

    double* row_ptr(int r) { return data.data() + static_cast<size_t>(r) * cols; }
    const double* row_ptr(int r) const { return data.data() + static_cast<size_t>(r) * cols; }

    size_t size() const { return data.size(); }
    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

    static Matrix zeros(int r, int c) { return Matrix(r, c, 0.0); }

    static Matrix ones(int r, int c) { return Matrix(r, c, 1.0); }

    static Matrix randn(int r, int c, double stddev, std::mt19937_64& rng) {
        Matrix m(r, c);
        std::normal_distribution<double> dist(0.0, stddev);
        for (auto& v : m.data) v = dist(rng);
        return m;
    }

    static Matrix from_row(const std::vector<double>& v) {
        Matrix m(1, static_cast<int>(v.size()));
        m.data = v;
        return m;
    }
};

inline bool all_finite(const Matrix& m) {
    for (double v : m.data)
        if (!std::isfinite(v)) return false;
    return true;
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) throw std::invalid_argument("matmul shape mismatch");
    Matrix c(a.rows, b.cols);
    for (int i = 0; i < a.rows; ++i) {
        const double* ai = a.row_ptr(i);
        double* ci = c.row_ptr(i);
        for (int k = 0; k < a.cols; ++k) {
            const double aik = ai[k];
            if (aik == 0.0) continue;
            const double* bk = b.row_ptr(k);
            for (int j = 0; j < b.cols; ++j) ci[j] += aik * bk[j];
        }
    }
    return c;
}

inline Matrix transpose(const Matrix& a) {
    Matrix t(a.cols, a.rows);
    for (int i = 0; i < a.rows; ++i)
        for (int j = 0; j < a.cols; ++j) t.at(j, i) = a.at(i, j);
    return t;
}

inline Matrix add(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("add shape mismatch");
    Matrix c = a;
    for (size_t i = 0; i < c.data.size(); ++i) c.data[i] += b.data[i];
    return c;
}

inline Matrix sub(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("sub shape mismatch");
    Matrix c = a;
    for (size_t i = 0; i < c.data.size(); ++i) c.data[i] -= b.data[i];
    return c;
}

inline Matrix hadamard(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("hadamard shape mismatch");
    Matrix c = a;
    for (size_t i = 0; i < c.data.size(); ++i) c.data[i] *= b.data[i];
    return c;
}

inline Matrix scale(const Matrix& a, double s) {
    Matrix c = a;
    for (auto& v : c.data) v *= s;
    return c;
}

inline double dot(const double* a, const double* b, int n) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("shape mismatch");
    double m = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
    return m;
}

}  // namespace topopack
