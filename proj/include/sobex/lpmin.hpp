#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <vector>

namespace sobex {

// Minimization of sum_i |c_i + <g_i, w'>|^p over the free variables w', where
// each functional is affine in w'.  Rows are given as an augmented matrix
// [G | c] with the constant column last.  Free variables are eliminated one at
// a time with the closed-form weighted power-mean update; each elimination is
// within a factor 2^{p+1} of optimal, so the full sweep is within 2^{(p+1)k}.
// An optional polish pass runs cyclic 1-D convex line searches to land within
// a small factor of the true optimum.
//
// The result expresses each eliminated variable as an affine function of the
// fixed data: w'_j = solution(j, :) * [w_fixed; 1].  Here the "fixed data" is
// whatever the constant column was built from; callers keep rows symbolic by
// augmenting with extra columns.

struct LpminResult {
    Eigen::MatrixXd solution;    // k x (n_fixed + 1): affine maps for the free vars
    Eigen::MatrixXd residual;    // rows after substitution, over [fixed | 1]
};

namespace detail {

inline double signed_pow(double a, double p) {
    // |a|^p / a for a != 0
    return std::pow(std::abs(a), p) / a;
}

}  // namespace detail

// rows: L x (n_free + n_fixed + 1); the first n_free columns are the free
// variables, then the fixed-data columns, then the constant column.
inline LpminResult lpmin(Eigen::MatrixXd rows, int n_free, double p) {
    const int L = static_cast<int>(rows.rows());
    const int n_rest = static_cast<int>(rows.cols()) - n_free;
    if (n_rest < 1) throw std::invalid_argument("lpmin: missing constant column");
    LpminResult out;
    out.solution = Eigen::MatrixXd::Zero(n_free, n_rest);

    // Eliminate variables from the last free column down to the first.  The
    // expression for variable j may still reference the not-yet-eliminated
    // columns q < j; back-substitution below resolves those.
    std::vector<Eigen::RowVectorXd> exprs(n_free);
    for (int j = n_free - 1; j >= 0; --j) {
        double denom = 0.0;
        for (int i = 0; i < L; ++i) denom += std::pow(std::abs(rows(i, j)), p);
        Eigen::RowVectorXd expr = Eigen::RowVectorXd::Zero(rows.cols());
        if (denom > 0.0) {
            for (int i = 0; i < L; ++i) {
                double a = rows(i, j);
                if (a == 0.0) continue;
                double wgt = std::pow(std::abs(a), p) / denom;
                // lambda_hat_i = row_i without the a*w'_j term; minimizer is
                // the weighted mean of -lambda_hat_i / a over these rows
                expr -= (wgt / a) * rows.row(i);
            }
            expr(j) = 0.0;  // the self term contributed above
        }
        // substitute w'_j = expr * [w; 1] into every row
        for (int i = 0; i < L; ++i) {
            double a = rows(i, j);
            if (a == 0.0) continue;
            rows.row(i) += a * expr;
            rows(i, j) = 0.0;
        }
        exprs[j] = expr;
    }
    // back-substitute: exprs[j] references free columns q < j only
    for (int j = 0; j < n_free; ++j) {
        Eigen::RowVectorXd full = exprs[j];
        for (int q = 0; q < j; ++q) {
            double c = full(q);
            if (c == 0.0) continue;
            full(q) = 0.0;
            full += c * exprs[q];  // exprs[q] already fully resolved
        }
        exprs[j] = full;
        out.solution.row(j) = full.tail(n_rest);
    }
    out.residual = rows.rightCols(n_rest);
    return out;
}

// Evaluate the lp objective for numeric rows over [fixed-part already folded].
inline double lp_objective(const Eigen::VectorXd& values, double p) {
    double s = 0.0;
    for (int i = 0; i < values.size(); ++i) s += std::pow(std::abs(values[i]), p);
    return s;
}

// 1-D minimization of t -> sum_i |c_i + a_i t|^p by golden-section search on a
// bracket containing the minimizer (convex for p >= 1).
inline double line_min(const Eigen::VectorXd& c, const Eigen::VectorXd& a, double p) {
    double lo = 0.0, hi = 0.0;
    bool any = false;
    for (int i = 0; i < c.size(); ++i) {
        if (a[i] == 0.0) continue;
        double r = -c[i] / a[i];
        if (!any) {
            lo = hi = r;
            any = true;
        } else {
            lo = std::min(lo, r);
            hi = std::max(hi, r);
        }
    }
    if (!any) return 0.0;
    auto f = [&](double t) {
        double s = 0.0;
        for (int i = 0; i < c.size(); ++i) s += std::pow(std::abs(c[i] + a[i] * t), p);
        return s;
    };
    const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
    double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
    double f1 = f(x1), f2 = f(x2);
    for (int it = 0; it < 200 && hi - lo > 1e-14 * (1.0 + std::abs(lo) + std::abs(hi)); ++it) {
        if (f1 < f2) {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - gr * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + gr * (hi - lo);
            f2 = f(x2);
        }
    }
    return 0.5 * (lo + hi);
}

// Numeric minimization over k free variables: closed-form elimination start,
// then cyclic coordinate descent.  rows: L x (k + 1) with constant last.
// Returns the minimizing w' (size k).
inline Eigen::VectorXd lpmin_polish(const Eigen::MatrixXd& rows, int n_free, double p,
                                    int max_cycles = 400, double rel_tol = 1e-10) {
    LpminResult cf = lpmin(rows, n_free, p);
    Eigen::VectorXd w = cf.solution.col(cf.solution.cols() - 1);
    auto objective = [&](const Eigen::VectorXd& x) {
        Eigen::VectorXd v = rows.leftCols(n_free) * x + rows.col(rows.cols() - 1);
        return lp_objective(v, p);
    };
    double prev = objective(w);
    for (int cycle = 0; cycle < max_cycles; ++cycle) {
        for (int j = 0; j < n_free; ++j) {
            Eigen::VectorXd c = rows.leftCols(n_free) * w + rows.col(rows.cols() - 1) -
                                rows.col(j) * w[j];
            w[j] = line_min(c, rows.col(j), p);
        }
        double cur = objective(w);
        if (prev - cur <= rel_tol * (1.0 + cur)) break;
        prev = cur;
    }
    return w;
}

}  // namespace sobex
