#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cmath>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "sobex/dyadic.hpp"
#include "sobex/extension.hpp"
#include "sobex/jet.hpp"
#include "sobex/multiindex.hpp"

namespace sobex {

// Uniform B-spline of degree d with integer knots, supported on [0, d+1).
inline double bspline(int d, double t) {
    if (t <= 0.0 || t >= d + 1.0) return (d == 0 && t == 0.0) ? 1.0 : 0.0;
    if (d == 0) return 1.0;
    return (t / d) * bspline(d - 1, t) + ((d + 1.0 - t) / d) * bspline(d - 1, t - 1.0);
}

// r-th derivative of the degree-d uniform B-spline.
inline double bspline_deriv(int d, int r, double t) {
    if (r == 0) return bspline(d, t);
    if (r > d) return 0.0;
    double s = 0.0;
    double c = 1.0;
    for (int j = 0; j <= r; ++j) {
        s += c * bspline(d - r, t - j);
        c *= -(double)(r - j) / (j + 1);
    }
    return s;
}

// Tensor-product spline space of degree m on a uniform grid of `cells`
// subdivisions per axis over a cube [lo, lo + cells*h]^n.
struct SplineSpace {
    int n = 1;
    int m = 1;
    int cells = 1;
    double h = 1.0;
    std::vector<double> lo;

    int per_axis() const { return cells + m; }
    Eigen::Index dof() const {
        Eigen::Index d = 1;
        for (int i = 0; i < n; ++i) d *= per_axis();
        return d;
    }

    // Per-axis local coordinate and containing cell, clamped to the grid.
    void locate(const std::vector<double>& x, std::vector<int>& cell,
                std::vector<double>& u) const {
        cell.resize(n);
        u.resize(n);
        for (int i = 0; i < n; ++i) {
            double ui = (x[i] - lo[i]) / h;
            int k = (int)std::floor(ui);
            k = std::max(0, std::min(cells - 1, k));
            cell[i] = k;
            u[i] = ui;
        }
    }

    // Appends (dof index, coefficient) pairs for evaluating d^alpha at x.
    void deriv_row(const std::vector<double>& x, const MultiIndex& alpha,
                   std::vector<std::pair<Eigen::Index, double>>& out) const {
        std::vector<int> cell;
        std::vector<double> u;
        locate(x, cell, u);
        std::vector<int> j(n, 0);
        while (true) {
            double c = 1.0;
            Eigen::Index idx = 0;
            for (int i = 0; i < n; ++i) {
                int bi = cell[i] + j[i];
                double t = u[i] - (bi - m);
                c *= bspline_deriv(m, alpha[i], t) / std::pow(h, alpha[i]);
                idx = idx * per_axis() + bi;
            }
            if (c != 0.0) out.emplace_back(idx, c);
            int ax = n - 1;
            while (ax >= 0 && ++j[ax] > m) j[ax--] = 0;
            if (ax < 0) break;
        }
    }
};

struct GridFunction {
    SplineSpace space;
    Eigen::VectorXd coeffs;

    double deriv(const std::vector<double>& x, const MultiIndex& alpha) const {
        std::vector<std::pair<Eigen::Index, double>> row;
        space.deriv_row(x, alpha, row);
        double s = 0.0;
        for (auto& [i, c] : row) s += c * coeffs[i];
        return s;
    }
    double value(const std::vector<double>& x) const {
        return deriv(x, MultiIndex(space.n, 0));
    }
};

struct OracleProblem {
    int n = 1;
    int m = 1;
    double p = 2.0;
    Box domain;
    int mesh = 8;
    std::vector<std::pair<std::vector<double>, double>> values;
    std::vector<std::pair<std::vector<double>, Jet>> jets;
    std::vector<std::tuple<std::vector<double>, MultiIndex, double>> derivs;
};

struct OracleResult {
    double value = 0.0;     // max over |alpha| = m of the L^p norm of d^alpha
    double smoothed = 0.0;  // l^{4p} aggregate of the same norms
    int iterations = 0;
    GridFunction minimizer;
};

// Smallest cube containing all points, dilated about its center.
inline Box oracle_domain(const std::vector<std::vector<double>>& pts, double factor = 3.0) {
    if (pts.empty()) throw std::invalid_argument("oracle_domain: no points");
    int n = (int)pts.front().size();
    Box b{pts.front(), pts.front()};
    for (auto& x : pts)
        for (int i = 0; i < n; ++i) {
            b.lo[i] = std::min(b.lo[i], x[i]);
            b.hi[i] = std::max(b.hi[i], x[i]);
        }
    double side = 0.0;
    for (int i = 0; i < n; ++i) side = std::max(side, b.hi[i] - b.lo[i]);
    if (side == 0.0) side = 1.0;
    double half = 0.5 * factor * side;
    Box out{std::vector<double>(n), std::vector<double>(n)};
    for (int i = 0; i < n; ++i) {
        double c = 0.5 * (b.lo[i] + b.hi[i]);
        out.lo[i] = c - half;
        out.hi[i] = c + half;
    }
    return out;
}

namespace detail {

inline void check_problem(const OracleProblem& prob) {
    if (prob.mesh < 1) throw std::invalid_argument("oracle: mesh must be positive");
    std::vector<std::vector<double>> pts;
    for (auto& [x, v] : prob.values) pts.push_back(x);
    for (auto& [x, j] : prob.jets) pts.push_back(x);
    for (auto& [x, b, v] : prob.derivs) pts.push_back(x);
    for (auto& x : pts)
        if (!prob.domain.contains_point(x))
            throw std::invalid_argument("oracle: constraint point outside domain");
    double side = prob.domain.hi[0] - prob.domain.lo[0];
    double minsep = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < pts.size(); ++i)
        for (std::size_t j = i + 1; j < pts.size(); ++j) {
            double d = linf_dist(pts[i], pts[j]);
            if (d > 0.0) minsep = std::min(minsep, d);
        }
    if (std::isfinite(minsep) && prob.mesh * minsep < 8.0 * side * (1.0 - 1e-12))
        throw std::invalid_argument("oracle: mesh too coarse for point separation");
}

struct OracleSystem {
    SplineSpace sp;
    std::vector<MultiIndex> alphas;                 // |alpha| = m
    std::vector<Eigen::SparseMatrix<double>> atoms; // quadrature rows per alpha
    Eigen::VectorXd qw;                             // quadrature weights (shared)
    Eigen::SparseMatrix<double> con;                // equality constraint rows
    Eigen::VectorXd rhs;
};

inline void enumerate_order_m(int n, int m, std::vector<MultiIndex>& out) {
    for (const MultiIndex& a : enumerate_multiindices(n, m))
        if (mi_order(a) == m) out.push_back(a);
}

inline OracleSystem build_system(const OracleProblem& prob) {
    check_problem(prob);
    OracleSystem sys;
    sys.sp.n = prob.n;
    sys.sp.m = prob.m;
    sys.sp.cells = prob.mesh;
    sys.sp.lo = prob.domain.lo;
    sys.sp.h = (prob.domain.hi[0] - prob.domain.lo[0]) / prob.mesh;
    enumerate_order_m(prob.n, prob.m, sys.alphas);

    const int n = prob.n, m = prob.m;
    const int g = m + 2;
    std::vector<double> gx, gw;
    gauss_legendre(g, gx, gw);
    for (int i = 0; i < g; ++i) {
        gx[i] = 0.5 * (gx[i] + 1.0);
        gw[i] = 0.5 * gw[i];
    }

    // Per-axis basis derivative values at each node for each local offset.
    // In cell k the active basis index is k + j, with argument t = node + m - j.
    auto table = [&](int r) {
        std::vector<std::vector<double>> v(g, std::vector<double>(m + 1));
        for (int q = 0; q < g; ++q)
            for (int j = 0; j <= m; ++j)
                v[q][j] = bspline_deriv(m, r, gx[q] + m - j) / std::pow(sys.sp.h, r);
        return v;
    };
    std::vector<std::vector<std::vector<double>>> tabs(m + 1);
    for (int r = 0; r <= m; ++r) tabs[r] = table(r);

    Eigen::Index ncell = 1, nnode = 1;
    for (int i = 0; i < n; ++i) {
        ncell *= prob.mesh;
        nnode *= g;
    }
    Eigen::Index nrows = ncell * nnode;
    sys.qw.resize(nrows);

    double cellvol = std::pow(sys.sp.h, n);
    for (auto& alpha : sys.alphas) {
        Eigen::SparseMatrix<double> A(nrows, sys.sp.dof());
        std::vector<Eigen::Triplet<double>> trips;
        std::vector<int> cell(n, 0), node(n, 0), j(n, 0);
        Eigen::Index row = 0;
        while (true) {
            while (true) {
                double w = cellvol;
                for (int i = 0; i < n; ++i) w *= gw[node[i]];
                sys.qw[row] = w;
                std::fill(j.begin(), j.end(), 0);
                while (true) {
                    double c = 1.0;
                    Eigen::Index idx = 0;
                    for (int i = 0; i < n; ++i) {
                        c *= tabs[alpha[i]][node[i]][j[i]];
                        idx = idx * sys.sp.per_axis() + cell[i] + j[i];
                    }
                    if (c != 0.0) trips.emplace_back((int)row, (int)idx, c);
                    int ax = n - 1;
                    while (ax >= 0 && ++j[ax] > m) j[ax--] = 0;
                    if (ax < 0) break;
                }
                ++row;
                int ax = n - 1;
                while (ax >= 0 && ++node[ax] >= g) node[ax--] = 0;
                if (ax < 0) break;
            }
            int ax = n - 1;
            while (ax >= 0 && ++cell[ax] >= prob.mesh) cell[ax--] = 0;
            if (ax < 0) break;
        }
        A.setFromTriplets(trips.begin(), trips.end());
        sys.atoms.push_back(std::move(A));
    }

    // Equality constraints: interpolation values and jet derivative matches.
    std::vector<Eigen::Triplet<double>> ctrips;
    std::vector<double> rhs;
    std::vector<std::pair<Eigen::Index, double>> rowbuf;
    MultiIndex zero(n, 0);
    auto add_row = [&](const std::vector<double>& x, const MultiIndex& beta, double val) {
        rowbuf.clear();
        sys.sp.deriv_row(x, beta, rowbuf);
        int r = (int)rhs.size();
        for (auto& [i, c] : rowbuf) ctrips.emplace_back(r, (int)i, c);
        rhs.push_back(val);
    };
    for (auto& [x, v] : prob.values) add_row(x, zero, v);
    for (auto& [x, jet] : prob.jets)
        for (const MultiIndex& beta : jet.space->indices)
            add_row(x, beta, jet.eval_deriv(x, beta));
    for (auto& [x, beta, v] : prob.derivs) add_row(x, beta, v);
    sys.con.resize((Eigen::Index)rhs.size(), sys.sp.dof());
    sys.con.setFromTriplets(ctrips.begin(), ctrips.end());
    sys.rhs = Eigen::Map<Eigen::VectorXd>(rhs.data(), (Eigen::Index)rhs.size());
    return sys;
}

// Per-alpha integral of |d^alpha F|^p over the domain.
inline Eigen::VectorXd alpha_integrals(const OracleSystem& sys, const Eigen::VectorXd& c,
                                       double p) {
    Eigen::VectorXd out(sys.alphas.size());
    for (std::size_t a = 0; a < sys.alphas.size(); ++a) {
        Eigen::VectorXd r = sys.atoms[a] * c;
        double s = 0.0;
        for (Eigen::Index i = 0; i < r.size(); ++i)
            s += sys.qw[i] * std::pow(std::abs(r[i]), p);
        out[(Eigen::Index)a] = s;
    }
    return out;
}

}  // namespace detail

// Minimizes max_{|alpha| = m} int |d^alpha F|^p over the spline space subject
// to the interpolation and jet constraints, by iteratively reweighted least
// squares on the l^{4p} smoothing of the max.
inline OracleResult variational_seminorm(const OracleProblem& prob) {
    detail::OracleSystem sys = detail::build_system(prob);
    const double p = prob.p;
    const Eigen::Index N = sys.sp.dof();
    const Eigen::Index C = sys.con.rows();
    const Eigen::Index K = N + C;

    auto kkt = [&](const std::vector<Eigen::VectorXd>& uw, const Eigen::VectorXd& mu,
                   double reg) {
        Eigen::SparseMatrix<double> H(N, N);
        for (std::size_t a = 0; a < sys.atoms.size(); ++a) {
            Eigen::SparseMatrix<double> W(sys.qw.size(), sys.qw.size());
            std::vector<Eigen::Triplet<double>> wt;
            for (Eigen::Index i = 0; i < sys.qw.size(); ++i)
                wt.emplace_back((int)i, (int)i, mu[(Eigen::Index)a] * sys.qw[i] * uw[a][i]);
            W.setFromTriplets(wt.begin(), wt.end());
            H += Eigen::SparseMatrix<double>(sys.atoms[a].transpose() * W * sys.atoms[a]);
        }
        std::vector<Eigen::Triplet<double>> kt;
        for (Eigen::Index k = 0; k < H.outerSize(); ++k)
            for (Eigen::SparseMatrix<double>::InnerIterator it(H, k); it; ++it)
                kt.emplace_back((int)it.row(), (int)it.col(), it.value());
        for (Eigen::Index i = 0; i < N; ++i) kt.emplace_back((int)i, (int)i, reg);
        for (Eigen::Index k = 0; k < sys.con.outerSize(); ++k)
            for (Eigen::SparseMatrix<double>::InnerIterator it(sys.con, k); it; ++it) {
                kt.emplace_back((int)(N + it.row()), (int)it.col(), it.value());
                kt.emplace_back((int)it.col(), (int)(N + it.row()), it.value());
            }
        Eigen::SparseMatrix<double> M(K, K);
        M.setFromTriplets(kt.begin(), kt.end());
        return M;
    };

    const std::size_t na = sys.atoms.size();
    std::vector<Eigen::VectorXd> uw(na, Eigen::VectorXd::Ones(sys.qw.size()));
    Eigen::VectorXd mu = Eigen::VectorXd::Ones((Eigen::Index)na);

    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    Eigen::VectorXd b = Eigen::VectorXd::Zero(K);
    b.tail(C) = sys.rhs;

    Eigen::VectorXd c = Eigen::VectorXd::Zero(N);
    double prev_s = -1.0;
    OracleResult res;
    bool analyzed = false;
    const double rhs_scale = 1.0 + sys.rhs.cwiseAbs().maxCoeff();

    for (int iter = 1; iter <= 500; ++iter) {
        double hscale = 0.0;
        for (std::size_t a = 0; a < na; ++a)
            hscale = std::max(hscale, mu[(Eigen::Index)a] * uw[a].maxCoeff());
        double reg = std::max(hscale, 1e-30) * 1e-11;
        Eigen::SparseMatrix<double> M = kkt(uw, mu, reg);
        if (!analyzed) {
            lu.analyzePattern(M);
            analyzed = true;
        }
        lu.factorize(M);
        if (lu.info() != Eigen::Success)
            throw std::runtime_error("oracle: singular constraint system");
        Eigen::VectorXd sol = lu.solve(b);
        Eigen::VectorXd cstar = sol.head(N);
        if (C > 0) {
            double viol = (sys.con * cstar - sys.rhs).cwiseAbs().maxCoeff();
            if (viol > 1e-6 * rhs_scale)
                throw std::runtime_error("oracle: inconsistent constraints, residual " +
                                         std::to_string(viol));
        }
        c = (iter == 1) ? cstar : Eigen::VectorXd(0.5 * c + 0.5 * cstar);

        Eigen::VectorXd I = detail::alpha_integrals(sys, c, p);
        double smoothed = std::pow(I.array().pow(4.0).sum(), 1.0 / (4.0 * p));
        double value = std::pow(I.maxCoeff(), 1.0 / p);
        res.value = value;
        res.smoothed = smoothed;
        res.iterations = iter;
        double change = (prev_s >= 0.0) ? std::abs(smoothed - prev_s)
                                        : std::numeric_limits<double>::infinity();
        if (change <= 1e-8 * (1.0 + std::max(prev_s, 0.0))) break;
        prev_s = smoothed;
        if (iter == 500) {
            std::ostringstream os;
            os << "oracle: no convergence in 500 iterations, objective " << smoothed
               << ", last change " << change;
            throw std::runtime_error(os.str());
        }

        // Reweighting: |r|^p ~ u r^2 with u = (r^2 + tau^2)^{(p-2)/2}, and the
        // outer fourth power contributes a factor I_alpha^3 per group.
        double imax = std::max(I.maxCoeff(), 1e-300);
        for (std::size_t a = 0; a < na; ++a) {
            Eigen::VectorXd r = sys.atoms[a] * c;
            double tau = 1e-8 * std::sqrt(r.squaredNorm() / std::max<Eigen::Index>(1, r.size())) +
                         1e-300;
            for (Eigen::Index i = 0; i < r.size(); ++i) {
                double target = std::pow(r[i] * r[i] + tau * tau, 0.5 * (p - 2.0));
                uw[a][i] = (iter == 1) ? target : std::sqrt(uw[a][i] * target);
            }
            double ia = std::max(I[(Eigen::Index)a], 1e-3 * imax);
            double target = std::pow(ia / imax, 3.0);
            mu[(Eigen::Index)a] =
                (iter == 1) ? target : std::sqrt(mu[(Eigen::Index)a] * target);
        }
    }

    res.minimizer.space = sys.sp;
    res.minimizer.coeffs = c;
    return res;
}

struct SigmaQuery {
    std::vector<double> x;
    std::vector<std::vector<double>> E;
    Jet P;
    double budget = 1.0;
};

// Membership test for P in budget * sigma(x, E): seeks phi with phi = 0 on E,
// J_x phi = P, and seminorm within the budget up to a 5% tolerance.
inline bool sigma_member(const SigmaQuery& q, int mesh, int m, double p) {
    if (!(q.budget > 0.0)) throw std::invalid_argument("sigma_member: budget must be positive");
    OracleProblem prob;
    prob.n = (int)q.x.size();
    prob.m = m;
    prob.p = p;
    prob.mesh = mesh;
    std::vector<std::vector<double>> pts = q.E;
    pts.push_back(q.x);
    prob.domain = oracle_domain(pts);
    for (auto& e : q.E) prob.values.emplace_back(e, 0.0);
    prob.jets.emplace_back(q.x, q.P);
    OracleResult r = variational_seminorm(prob);
    return r.value <= q.budget * 1.05;
}

struct BasisSearchResult {
    bool feasible = false;
    std::shared_ptr<const JetSpace> space;
    std::vector<Jet> basis;           // aligned with the label's canonical order
    std::vector<double> budgets;      // attained seminorm per basis element
};

// Searches for a polynomial basis witnessing the label at x: for each alpha in
// A, minimizes the seminorm budget of P_alpha subject to the interpolation and
// normalization equalities, clamping the cross-derivative bounds by active-set
// iterations.  Feasible iff every budget fits eps * delta^{n/p + |alpha| - m}.
inline BasisSearchResult basis_feasible(const Label& A, const std::vector<double>& x,
                                        const std::vector<std::vector<double>>& E,
                                        double eps, double delta, int m, double p,
                                        int mesh) {
    int n = (int)x.size();
    BasisSearchResult out;
    out.space = std::make_shared<JetSpace>(n, m, p);
    const JetSpace& sp = *out.space;
    for (const MultiIndex& a : A)
        if ((int)a.size() != n || mi_order(a) > m - 1)
            throw std::invalid_argument("basis_feasible: label outside multi-index set");
    out.feasible = true;

    for (const MultiIndex& alpha : A) {
        OracleProblem prob;
        prob.n = n;
        prob.m = m;
        prob.p = p;
        prob.mesh = mesh;
        std::vector<std::vector<double>> pts = E;
        pts.push_back(x);
        prob.domain = oracle_domain(pts);
        for (auto& e : E) prob.values.emplace_back(e, 0.0);

        // Pinned jet coordinates at x; unpinned coordinates stay free.
        std::map<MultiIndex, double, MiLess> pinned;
        for (const MultiIndex& beta : A) pinned[beta] = (beta == alpha) ? 1.0 : 0.0;

        OracleResult r;
        for (int round = 0;; ++round) {
            OracleProblem sub = prob;
            for (auto& [beta, v] : pinned) sub.derivs.emplace_back(x, beta, v);
            r = variational_seminorm(sub);
            bool clamped = false;
            for (int bi = 0; bi < sp.dim(); ++bi) {
                const MultiIndex& beta = sp.indices[bi];
                if (pinned.count(beta)) continue;
                if (beta == alpha || !mi_less(alpha, beta)) continue;
                double bound = eps * std::pow(delta, mi_order(alpha) - mi_order(beta));
                double got = r.minimizer.deriv(x, beta);
                if (std::abs(got) > bound * (1.0 + 1e-9)) {
                    pinned[beta] = (got > 0.0 ? bound : -bound);
                    clamped = true;
                }
            }
            if (!clamped || round >= sp.dim()) break;
        }

        Jet P(sp, x);
        for (int bi = 0; bi < sp.dim(); ++bi)
            P.coeffs[bi] = r.minimizer.deriv(x, sp.indices[bi]);
        out.basis.push_back(std::move(P));
        double cap = eps * std::pow(delta, (double)n / p + mi_order(alpha) - m);
        out.budgets.push_back(r.value);
        if (!(r.value <= cap * 1.05)) out.feasible = false;
    }
    return out;
}

// Enumerates the monotonic labels strictly below A in the label order.
inline std::vector<Label> labels_below(const Label& A, int n, int m) {
    std::vector<MultiIndex> all = enumerate_multiindices(n, m - 1);
    int D = (int)all.size();
    if (D > 12) throw std::invalid_argument("labels_below: multi-index set too large");
    std::vector<Label> out;
    for (unsigned mask = 0; mask < (1u << D); ++mask) {
        Label cand(MiLess{});
        for (int i = 0; i < D; ++i)
            if (mask & (1u << i)) cand.insert(all[i]);
        if (!is_monotonic(cand, m)) continue;
        if (cand == A || !label_less(cand, A)) continue;
        out.push_back(std::move(cand));
    }
    std::sort(out.begin(), out.end(),
              [](const Label& a, const Label& b) { return label_less(b, a); });
    return out;
}

// Decomposition stopping rule for label mode: a cube is acceptable when every
// point it sees admits a polynomial basis for some strictly smaller label at
// scale 30 * side.  Falls back to subdivision when the basis search would need
// an impractically fine oracle mesh.
inline OkPredicate label_ok_predicate(std::shared_ptr<const std::vector<std::vector<double>>> E,
                                      const Label& A, double eps, int m, double p,
                                      int max_mesh = 256) {
    if (E->empty()) throw std::invalid_argument("label_ok_predicate: empty point set");
    int n = (int)E->front().size();
    auto labels = std::make_shared<std::vector<Label>>(labels_below(A, n, m));
    return [E, labels, eps, m, p, n, max_mesh](const DyadicCube& q,
                                               const std::vector<int>& pts) {
        if (pts.size() <= 1) return true;
        if (pts.size() > 16 || labels->empty()) return false;
        std::vector<std::vector<double>> local;
        for (int i : pts) local.push_back((*E)[i]);
        double minsep = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < local.size(); ++i)
            for (std::size_t j = i + 1; j < local.size(); ++j)
                minsep = std::min(minsep, linf_dist(local[i], local[j]));
        double delta = 30.0 * q.side();
        for (std::size_t xi = 0; xi < local.size(); ++xi) {
            std::vector<std::vector<double>> rest;
            double spread = 0.0;
            for (std::size_t j = 0; j < local.size(); ++j) {
                if (j != xi) rest.push_back(local[j]);
                spread = std::max(spread, linf_dist(local[j], local[xi]));
            }
            int mesh = (int)std::ceil(8.0 * 3.0 * std::max(spread, 1e-300) / minsep) + 1;
            if (mesh > max_mesh) return false;
            bool found = false;
            for (const Label& cand : *labels) {
                auto r = basis_feasible(cand, local[xi], rest, eps, delta, m, p, mesh);
                if (r.feasible) {
                    found = true;
                    break;
                }
            }
            if (!found) return false;
        }
        return true;
    };
}

}  // namespace sobex
