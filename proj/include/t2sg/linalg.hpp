#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <vector>

namespace t2sg {

using Vec = std::vector<double>;

// Dense row-major matrix. Biases are stored as cols == 1 matrices so model
// tensors can be visited uniformly.
struct Mat {
    int rows = 0;
    int cols = 0;
    Vec v;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), v(size_t(r) * size_t(c), 0.0) {}

    double& operator()(int r, int c) { return v[size_t(r) * cols + c]; }
    double operator()(int r, int c) const { return v[size_t(r) * cols + c]; }

    const double* row(int r) const { return v.data() + size_t(r) * cols; }
    double* row(int r) { return v.data() + size_t(r) * cols; }

    void fill(double x) { std::fill(v.begin(), v.end(), x); }
};

// y = W x + b
inline void affine(const Mat& W, const double* x, const Mat& b, double* y) {
    for (int r = 0; r < W.rows; ++r) {
        const double* wr = W.row(r);
        double acc = b.v[r];
        for (int c = 0; c < W.cols; ++c) acc += wr[c] * x[c];
        y[r] = acc;
    }
}

// y += W x
inline void matvec_add(const Mat& W, const double* x, double* y) {
    for (int r = 0; r < W.rows; ++r) {
        const double* wr = W.row(r);
        double acc = 0.0;
        for (int c = 0; c < W.cols; ++c) acc += wr[c] * x[c];
        y[r] += acc;
    }
}

// y += W^T g
inline void matvec_t_add(const Mat& W, const double* g, double* y) {
    for (int r = 0; r < W.rows; ++r) {
        const double gr = g[r];
        if (gr == 0.0) continue;
        const double* wr = W.row(r);
        for (int c = 0; c < W.cols; ++c) y[c] += wr[c] * gr;
    }
}

// G += g x^T
inline void outer_add(Mat& G, const double* g, const double* x) {
    for (int r = 0; r < G.rows; ++r) {
        double* gr = G.row(r);
        const double grad = g[r];
        if (grad == 0.0) continue;
        for (int c = 0; c < G.cols; ++c) gr[c] += grad * x[c];
    }
}

inline double dot(const double* a, const double* b, int n) {
    double acc = 0.0;
    for (int i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

inline double norm2(const double* a, int n) { return std::sqrt(dot(a, a, n)); }

inline double cosine(const Vec& a, const Vec& b) {
    assert(a.size() == b.size());
    const int n = int(a.size());
    double na = norm2(a.data(), n);
    double nb = norm2(b.data(), n);
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot(a.data(), b.data(), n) / (na * nb);
}

inline bool all_finite(const Vec& v) {
    for (double x : v) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

// In-place softmax with max subtraction.
inline void softmax(double* x, int n) {
    double mx = x[0];
    for (int i = 1; i < n; ++i) mx = std::max(mx, x[i]);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        x[i] = std::exp(x[i] - mx);
        sum += x[i];
    }
    for (int i = 0; i < n; ++i) x[i] /= sum;
}

}  // namespace t2sg
