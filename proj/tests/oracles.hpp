#pragma once

// Reference implementations used only by the tests. They are deliberately
// naive (quadratic ranks, two-pass moments, plain gradient descent) and share
// no code with the library.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

/// rank_i = 1 + #{x_j < x_i} + (#{j != i : x_j == x_i}) / 2
inline std::vector<double> brute_ranks(const std::vector<double>& x) {
    std::vector<double> r(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        std::size_t less = 0, equal = 0;
        for (std::size_t j = 0; j < x.size(); ++j) {
            if (x[j] < x[i]) ++less;
            else if (j != i && x[j] == x[i]) ++equal;
        }
        r[i] = 1.0 + static_cast<double>(less) + 0.5 * static_cast<double>(equal);
    }
    return r;
}

/// Textbook two-pass Pearson in extended precision.
inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    long double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    long double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        long double dx = x[i] - mx, dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    return static_cast<double>(sxy / std::sqrt(sxx * syy));
}

inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    return pearson(brute_ranks(x), brute_ranks(y));
}

inline double rmse(const std::vector<double>& x, const std::vector<double>& y) {
    long double s = 0;
    for (std::size_t i = 0; i < x.size(); ++i) s += (long double)(x[i] - y[i]) * (x[i] - y[i]);
    return static_cast<double>(std::sqrt(s / x.size()));
}

/// Quantile by explicit order statistics: position p = q(n-1) from the
/// smallest, value = x_(lo) + frac * (x_(lo+1) - x_(lo)).
inline double quantile(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    if (v.size() == 1) return v[0];
    const double pos = q * static_cast<double>(v.size() - 1);
    std::size_t lo = 0;
    while (static_cast<double>(lo + 1) <= pos && lo + 1 < v.size()) ++lo;
    const double frac = pos - static_cast<double>(lo);
    if (lo + 1 >= v.size()) return v[lo];
    return v[lo] + frac * (v[lo + 1] - v[lo]);
}

struct Standardized {
    Eigen::MatrixXd z;
    std::vector<bool> active;
};

/// Per-column centering and population-std scaling; constant columns become 0.
inline Standardized standardize(const Eigen::MatrixXd& x) {
    Standardized s{Eigen::MatrixXd::Zero(x.rows(), x.cols()), std::vector<bool>(x.cols(), false)};
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
        double mean = 0;
        for (Eigen::Index r = 0; r < x.rows(); ++r) mean += x(r, c);
        mean /= static_cast<double>(x.rows());
        double var = 0;
        for (Eigen::Index r = 0; r < x.rows(); ++r) var += (x(r, c) - mean) * (x(r, c) - mean);
        var /= static_cast<double>(x.rows());
        const double sd = std::sqrt(var);
        if (sd <= 1e-12 * std::max(1.0, std::abs(mean))) continue;
        s.active[c] = true;
        for (Eigen::Index r = 0; r < x.rows(); ++r) s.z(r, c) = (x(r, c) - mean) / sd;
    }
    return s;
}

struct DescentFit {
    Eigen::VectorXd w;
    double b = 0;
    std::size_t iterations = 0;
    double gradient_norm = 0;
};

/// Full-batch gradient descent on ||Zw + b - y||^2 + lambda ||w||^2 from zero,
/// step 1/L with L the largest eigenvalue of the Hessian (power iteration).
/// Starting at zero keeps the iterate in the row space, so the rank-deficient
/// lambda = 0 case converges to the minimum-norm solution.
inline DescentFit gradient_descent(const Eigen::MatrixXd& z, const Eigen::VectorXd& y, double lambda,
                                   double tol = 1e-13, std::size_t max_iter = 2000000) {
    const Eigen::Index n = z.rows(), d = z.cols();
    Eigen::MatrixXd a(n, d + 1);
    a.leftCols(d) = z;
    a.col(d).setOnes();
    Eigen::VectorXd pen = Eigen::VectorXd::Constant(d + 1, lambda);
    pen(d) = 0;
    Eigen::MatrixXd h = 2.0 * a.transpose() * a;
    h.diagonal() += 2.0 * pen;

    Eigen::VectorXd v = Eigen::VectorXd::Ones(d + 1);
    double top = 0;
    for (int k = 0; k < 500; ++k) {
        Eigen::VectorXd hv = h * v;
        top = hv.norm();
        if (top == 0) break;
        v = hv / top;
    }
    const double step = 1.0 / (1.01 * std::max(top, 1e-300));

    Eigen::VectorXd theta = Eigen::VectorXd::Zero(d + 1);
    const Eigen::VectorXd aty = 2.0 * a.transpose() * y;
    DescentFit fit;
    for (fit.iterations = 0; fit.iterations < max_iter; ++fit.iterations) {
        Eigen::VectorXd g = h * theta - aty;
        fit.gradient_norm = g.norm();
        if (fit.gradient_norm <= tol * (1.0 + y.norm())) break;
        theta -= step * g;
    }
    fit.w = theta.head(d);
    fit.b = theta(d);
    return fit;
}

}  // namespace oracle
