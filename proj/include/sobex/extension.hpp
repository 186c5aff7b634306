#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <utility>
#include <vector>

#include "sobex/geometry.hpp"
#include "sobex/jet.hpp"
#include "sobex/lpmin.hpp"
#include "sobex/paths.hpp"
#include "sobex/pou.hpp"
#include "sobex/wspd.hpp"

namespace sobex {

struct Config {
    int m = 1;
    double p = 2.0;
    Label label = Label(MiLess{});  // coherence label; empty in default mode
};

struct ProblemInstance {
    std::vector<std::vector<double>> E;
    std::vector<double> f;
    std::vector<double> z;
    std::optional<Jet> P;
    Config cfg;
    GeometryConfig gcfg;
};

inline std::vector<double> vdiff(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> d(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
    return d;
}

// Functional linear in the data values f, the jet coefficients of P at z,
// and the outputs of pure-f assist functionals.
struct LinearFunctional {
    std::map<int, double> f_coeffs;       // point index -> weight
    std::map<int, double> jet_coeffs;     // coefficient index of P -> weight
    std::map<int, double> assist_coeffs;  // assist index -> weight

    int depth() const { return static_cast<int>(f_coeffs.size() + jet_coeffs.size()); }

    double evaluate(const std::vector<double>& f, const Eigen::VectorXd& P,
                    const Eigen::VectorXd& assist_values) const {
        double s = 0.0;
        for (auto [i, c] : f_coeffs) s += c * f[i];
        for (auto [i, c] : jet_coeffs) s += c * P[i];
        for (auto [i, c] : assist_coeffs) s += c * assist_values[i];
        return s;
    }
};

struct FunctionalSystem {
    std::vector<LinearFunctional> assists;     // pure-f keystone coefficient maps
    std::vector<LinearFunctional> estimators;  // the system whose l^p norm is M
    // path-aggregated weights per ordered keystone-rank pair, one per multi-index
    std::map<std::pair<int, int>, Eigen::VectorXd> weights;

    Eigen::VectorXd assist_values(const std::vector<double>& f) const {
        Eigen::VectorXd v = Eigen::VectorXd::Zero(assists.size());
        for (std::size_t i = 0; i < assists.size(); ++i)
            for (auto [j, c] : assists[i].f_coeffs) v[i] += c * f[j];
        return v;
    }

    Eigen::VectorXd estimator_values(const std::vector<double>& f,
                                     const Eigen::VectorXd& P) const {
        Eigen::VectorXd av = assist_values(f);
        Eigen::VectorXd v(estimators.size());
        for (std::size_t i = 0; i < estimators.size(); ++i)
            v[i] = estimators[i].evaluate(f, P, av);
        return v;
    }

    double M(const std::vector<double>& f, const Eigen::VectorXd& P, double p) const {
        return std::pow(lp_objective(estimator_values(f, P), p), 1.0 / p);
    }
};

// Keystone jet as a linear map: coefficients of R at the keystone
// representative are f_map * f(data_points) + p_map * (coefficients of P).
struct KeystoneJetMap {
    int leaf = -1;
    std::vector<int> data_points;
    Eigen::MatrixXd f_map;
    Eigen::MatrixXd p_map;
};

// Everything that depends on the geometry of (E, z) but not on data values.
struct Pipeline {
    JetSpace space;
    TaylorSpace tspace = TaylorSpace(1, 1);
    GeometryConfig gcfg;
    Label label = Label(MiLess{});
    std::vector<std::vector<double>> E;  // normalized point set
    std::vector<double> z;
    CZDecomposition cz;
    Representatives reps;
    KeystoneAssignment ka;
    PartitionOfUnity pou;
    std::vector<int> leaf_data;  // point of E in 1.1 Q_nu, or -1
    std::vector<KeystoneJetMap> kmaps;
    FunctionalSystem fs;
};

// Row weights for shifting the jet P from z to the point x: the row r with
// r . coeffs(P) = d^alpha P(x).
inline Eigen::RowVectorXd jet_shift_row(const JetSpace& sp, const std::vector<double>& z,
                                        const std::vector<double>& x, const MultiIndex& alpha) {
    Eigen::RowVectorXd r = Eigen::RowVectorXd::Zero(sp.dim());
    auto d = vdiff(x, z);
    for (int b = 0; b < sp.dim(); ++b) {
        const MultiIndex& beta = sp.indices[b];
        if (!mi_leq(alpha, beta)) continue;
        MultiIndex g = mi_sub(beta, alpha);
        r[b] = mi_power(d, g) / mi_factorial(g);
    }
    return r;
}

// Solve the keystone-local minimization: per data leaf one interpolation
// estimator and per multi-index one scaled jet-coupling row tying the leaf
// jet to the keystone jet; auxiliary leaf jets are eliminated first, the
// keystone jet last, so its coefficients come out as a linear map of the
// data values (and of P for coefficients pinned by the label).
inline KeystoneJetMap build_keystone_jet(const JetSpace& sp, const Label& label,
                                         const CZDecomposition& cz, const Representatives& reps,
                                         const std::vector<double>& z, int kleaf) {
    const int D = sp.dim();
    const double p = sp.p;
    KeystoneJetMap km;
    km.leaf = kleaf;
    cz.points_in_box(cz.leaf(kleaf).dilated(9.0), km.data_points);
    const int L = static_cast<int>(km.data_points.size());
    km.f_map = Eigen::MatrixXd::Zero(D, L);
    km.p_map = Eigen::MatrixXd::Zero(D, D);
    const auto& xs = reps.points[kleaf];
    if (L == 0) return km;

    const int kfree = D * (1 + L);  // keystone jet first, then the leaf jets
    const int cols = kfree + L + D + 1;
    std::vector<Eigen::RowVectorXd> rows;
    auto add_keystone_coeff = [&](Eigen::RowVectorXd& row, int b, double c) {
        if (label.count(sp.indices[b]))
            row.segment(kfree + L, D) += c * jet_shift_row(sp, z, xs, sp.indices[b]);
        else
            row[b] += c;
    };
    for (int i = 0; i < L; ++i) {
        int li = cz.point_leaf[km.data_points[i]];
        const auto& xhat = cz.points[km.data_points[i]];
        const auto& xr = reps.points[li];
        double dist = linf_dist(xr, xhat);
        if (!(dist > 0))
            throw std::runtime_error("build_keystone_jet: representative at data point");
        double scale = std::pow(dist, sp.n / p - sp.m);
        Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(cols);
        auto dh = vdiff(xhat, xr);
        for (int b = 0; b < D; ++b)
            row[D + i * D + b] =
                scale * mi_power(dh, sp.indices[b]) / mi_factorial(sp.indices[b]);
        row[kfree + i] = -scale;
        rows.push_back(row);
        double delta = cz.leaf(li).side();
        auto dr = vdiff(xr, xs);
        for (int a = 0; a < D; ++a) {
            const MultiIndex& alpha = sp.indices[a];
            double w = scaled_norm_weight(sp, alpha, delta);
            Eigen::RowVectorXd crow = Eigen::RowVectorXd::Zero(cols);
            crow[D + i * D + a] = w;
            for (int b = 0; b < D; ++b) {
                const MultiIndex& beta = sp.indices[b];
                if (!mi_leq(alpha, beta)) continue;
                MultiIndex g = mi_sub(beta, alpha);
                add_keystone_coeff(crow, b, -w * mi_power(dr, g) / mi_factorial(g));
            }
            rows.push_back(crow);
        }
    }
    // scaled coherence rows tying the keystone jet to P: they pin the
    // directions the data rows leave free (a consistent polynomial data set
    // keeps them at zero) and keep the elimination well conditioned
    double dks = cz.leaf(kleaf).side();
    for (int a = 0; a < D; ++a) {
        const MultiIndex& alpha = sp.indices[a];
        double w = scaled_norm_weight(sp, alpha, dks);
        Eigen::RowVectorXd arow = Eigen::RowVectorXd::Zero(cols);
        add_keystone_coeff(arow, a, w);
        arow.segment(kfree + L, D) -= w * jet_shift_row(sp, z, xs, alpha);
        rows.push_back(arow);
    }
    Eigen::MatrixXd mat(rows.size(), cols);
    for (std::size_t i = 0; i < rows.size(); ++i) mat.row(i) = rows[i];
    auto res = lpmin(mat, kfree, p);
    for (int b = 0; b < D; ++b) {
        if (label.count(sp.indices[b])) {
            km.p_map.row(b) = jet_shift_row(sp, z, xs, sp.indices[b]);
        } else {
            km.f_map.row(b) = res.solution.row(b).segment(0, L);
            km.p_map.row(b) = res.solution.row(b).segment(L, D);
        }
    }
    return km;
}

inline FunctionalSystem build_functional_system(const Pipeline& pl) {
    FunctionalSystem fs;
    const JetSpace& sp = pl.space;
    const int D = sp.dim(), zl = pl.reps.z_index;
    const double p = sp.p;

    for (const auto& km : pl.kmaps)
        for (int b = 0; b < D; ++b) {
            LinearFunctional w;
            for (std::size_t i = 0; i < km.data_points.size(); ++i)
                if (km.f_map(b, i) != 0.0) w.f_coeffs[km.data_points[i]] = km.f_map(b, i);
            fs.assists.push_back(std::move(w));
        }
    auto add_key_coeff = [&](LinearFunctional& xi, int rank, int b, double c) {
        if (c == 0.0) return;
        xi.assist_coeffs[rank * D + b] += c;
        const auto& pm = pl.kmaps[rank].p_map;
        for (int j = 0; j < D; ++j)
            if (pm(b, j) != 0.0) xi.jet_coeffs[j] += c * pm(b, j);
    };
    auto add_leaf_coeff = [&](LinearFunctional& xi, int li, int b, double c) {
        if (li == zl)
            xi.jet_coeffs[b] += c;
        else
            add_key_coeff(xi, pl.ka.keystone_rank[pl.ka.kappa[li]], b, c);
    };
    auto leaf_base = [&](int li) {
        return li == zl ? pl.z : pl.reps.points[pl.ka.kappa[li]];
    };

    // (a) one interpolation estimator per leaf holding a data point
    for (int li = 0; li < pl.cz.leaf_count(); ++li) {
        int pt = pl.leaf_data[li];
        if (pt < 0) continue;
        const auto& xhat = pl.E[pt];
        double dist = linf_dist(pl.reps.points[li], xhat);
        double scale = std::pow(dist, sp.n / p - sp.m);
        LinearFunctional xi;
        xi.f_coeffs[pt] = -scale;
        auto d = vdiff(xhat, leaf_base(li));
        for (int b = 0; b < D; ++b)
            add_leaf_coeff(xi, li, b,
                           scale * mi_power(d, sp.indices[b]) / mi_factorial(sp.indices[b]));
        fs.estimators.push_back(std::move(xi));
    }

    // (b) jet differences across keystone pairs joined by neighboring leaves,
    // with path-aggregated dyadic weights
    std::map<std::pair<int, int>, Eigen::VectorXd> dsum;
    for (int nu = 0; nu < pl.cz.leaf_count(); ++nu) {
        if (nu == zl) continue;
        int r1 = pl.ka.keystone_rank[pl.ka.kappa[nu]];
        for (int nu2 : pl.cz.neighbor_graph[nu]) {
            if (nu2 == zl) continue;
            int r2 = pl.ka.keystone_rank[pl.ka.kappa[nu2]];
            if (r1 == r2) continue;
            auto& v = dsum[{r1, r2}];
            if (v.size() == 0) v = Eigen::VectorXd::Zero(D);
            double delta = pl.cz.leaf(nu).side();
            for (int a = 0; a < D; ++a)
                v[a] += std::pow(delta, sp.n + (mi_order(sp.indices[a]) - sp.m) * p);
        }
    }
    for (const auto& [key, v] : dsum) {
        auto [r1, r2] = key;
        const auto& x1 = pl.reps.points[pl.ka.keystones[r1]];
        const auto& x2 = pl.reps.points[pl.ka.keystones[r2]];
        Eigen::VectorXd delta = v.array().pow(1.0 / p);
        fs.weights[key] = delta;
        auto d = vdiff(x1, x2);
        for (int a = 0; a < D; ++a) {
            const MultiIndex& alpha = sp.indices[a];
            LinearFunctional xi;
            add_key_coeff(xi, r1, a, delta[a]);
            for (int b = 0; b < D; ++b) {
                const MultiIndex& beta = sp.indices[b];
                if (!mi_leq(alpha, beta)) continue;
                MultiIndex g = mi_sub(beta, alpha);
                add_key_coeff(xi, r2, b, -delta[a] * mi_power(d, g) / mi_factorial(g));
            }
            fs.estimators.push_back(std::move(xi));
        }
    }

    // (c) boundary estimators between the z leaf and its neighbors
    for (int nu : pl.cz.neighbor_graph[zl]) {
        const auto& xr = pl.reps.points[nu];
        double delta = pl.cz.leaf(nu).side();
        auto db = vdiff(xr, leaf_base(nu));
        auto dz = vdiff(xr, pl.z);
        for (int a = 0; a < D; ++a) {
            const MultiIndex& alpha = sp.indices[a];
            double w = scaled_norm_weight(sp, alpha, delta);
            LinearFunctional xi;
            for (int b = 0; b < D; ++b) {
                const MultiIndex& beta = sp.indices[b];
                if (!mi_leq(alpha, beta)) continue;
                MultiIndex g = mi_sub(beta, alpha);
                add_leaf_coeff(xi, nu, b, w * mi_power(db, g) / mi_factorial(g));
                xi.jet_coeffs[b] -= w * mi_power(dz, g) / mi_factorial(g);
            }
            fs.estimators.push_back(std::move(xi));
        }
    }
    return fs;
}

inline Pipeline build_pipeline(const std::vector<std::vector<double>>& E,
                               const std::vector<double>& z, const Config& cfg,
                               const GeometryConfig& gcfg,
                               const OkPredicate& ok = simple_ok_predicate()) {
    Pipeline pl;
    const int n = static_cast<int>(z.size());
    pl.space = JetSpace(n, cfg.m, cfg.p);
    pl.tspace = TaylorSpace(n, cfg.m);
    pl.gcfg = gcfg;
    pl.label = cfg.label;
    pl.E = E;
    pl.z = z;
    pl.cz = cz_decompose(E, ok);
    pl.reps = make_representatives(pl.cz, z, gcfg);
    auto keys = keystones(pl.cz);
    auto pairs = wspd(E, gcfg.sigma_w);
    auto cls = clusters(E, pairs, gcfg.A);
    pl.ka = assign_paths(pl.cz, keys, cls, gcfg);
    pl.pou = build_pou(pl.cz, pl.reps, cfg.m);

    pl.leaf_data.assign(pl.cz.leaf_count(), -1);
    std::vector<int> pts;
    for (int li = 0; li < pl.cz.leaf_count(); ++li) {
        pl.cz.points_in_box(pl.cz.leaf(li).dilated(1.1), pts);
        if (pts.size() > 1)
            throw std::runtime_error("build_pipeline: leaf with several data points");
        if (!pts.empty()) {
            pl.leaf_data[li] = pts[0];
            if (!(linf_dist(pl.reps.points[li], pl.E[pts[0]]) > 0))
                throw std::runtime_error("build_pipeline: representative at data point");
        }
    }
    pl.kmaps.reserve(keys.size());
    for (int k : keys)
        pl.kmaps.push_back(build_keystone_jet(pl.space, pl.label, pl.cz, pl.reps, pl.z, k));
    pl.fs = build_functional_system(pl);
    return pl;
}

// Estimator rows over columns [P coefficients | f values | 1], with assists
// expanded into their f coefficients.
inline Eigen::MatrixXd wrapper_rows(const Pipeline& pl) {
    const int D = pl.space.dim();
    const int N = static_cast<int>(pl.E.size());
    Eigen::MatrixXd rows =
        Eigen::MatrixXd::Zero(pl.fs.estimators.size(), D + N + 1);
    for (std::size_t e = 0; e < pl.fs.estimators.size(); ++e) {
        const auto& xi = pl.fs.estimators[e];
        for (auto [j, c] : xi.jet_coeffs) rows(e, j) += c;
        for (auto [i, c] : xi.f_coeffs) rows(e, D + i) += c;
        for (auto [a, c] : xi.assist_coeffs)
            for (auto [i, cf] : pl.fs.assists[a].f_coeffs) rows(e, D + i) += c * cf;
    }
    return rows;
}

// Polynomial with the given derivative coefficients at base, evaluated at x
// as a truncated Taylor jet.
inline TaylorJet poly_taylor(const TaylorSpace& ts, const JetSpace& sp,
                             const std::vector<double>& base, const Eigen::VectorXd& coeffs,
                             const std::vector<double>& x) {
    std::vector<TaylorJet> u;
    u.reserve(ts.n);
    for (int i = 0; i < ts.n; ++i) u.push_back(TaylorJet::variable(ts, i, x[i] - base[i]));
    TaylorJet r = TaylorJet::constant(ts, 0.0);
    for (int b = 0; b < sp.dim(); ++b) {
        const MultiIndex& beta = sp.indices[b];
        TaylorJet term = TaylorJet::constant(ts, coeffs[b] / mi_factorial(beta));
        for (int i = 0; i < ts.n; ++i)
            for (int k = 0; k < beta[i]; ++k) term = term * u[i];
        r = r + term;
    }
    return r;
}

struct ExtensionResult {
    Config cfg;
    AffineMap to_norm;  // original -> normalized coordinates
    bool degenerate = false;
    double constant = 0.0;  // value of the single-point extension
    Pipeline pl;
    std::vector<double> f;
    Eigen::VectorXd P;  // jet coefficients at z, normalized frame
    std::vector<std::vector<double>> leaf_bases;
    std::vector<Eigen::VectorXd> leaf_jets;
    std::vector<double> leaf_corr;
    std::vector<TensorBump> local_bumps;
    TensorBump outer_bump;
    std::vector<double> y;       // center of the root cube
    Eigen::VectorXd outer_poly;  // jet of the blended field at y
    double query_pad = 0.0;
    double Mhat = 0.0;       // functional norm, original frame
    double Mhat_norm = 0.0;  // functional norm, normalized frame

    // the blended field over the leaves, before the outer patch
    TaylorJet interior_eval(const std::vector<double>& x) const {
        const TaylorSpace& ts = pl.tspace;
        Box qb;
        qb.lo = x;
        qb.hi = x;
        for (auto& v : qb.lo) v -= query_pad;
        for (auto& v : qb.hi) v += query_pad;
        std::vector<int> cand;
        pl.cz.leaves_in_box(qb, cand);
        std::sort(cand.begin(), cand.end());
        TaylorJet num(ts), den(ts);
        for (int li : cand) {
            bool sup = pl.pou.leaf_bumps[li].supports(x) ||
                       (li == pl.pou.z_leaf && pl.pou.z_bump.supports(x));
            if (!sup) continue;
            TaylorJet b = pl.pou.bump(ts, li, x);
            TaylorJet t = poly_taylor(ts, pl.space, leaf_bases[li], leaf_jets[li], x);
            if (pl.leaf_data[li] >= 0 && local_bumps[li].supports(x))
                t = t + local_bumps[li].eval(ts, x, pl.pou.smoothstep) * leaf_corr[li];
            num = num + b * t;
            den = den + b;
        }
        if (den.c.size() == 0 || den.c[0] <= 0.0)
            throw std::runtime_error("ExtensionResult: no bump covers interior point");
        return num / den;
    }

    // full field in normalized coordinates, as a degree-m Taylor jet
    TaylorJet eval_norm(const std::vector<double>& x) const {
        const TaylorSpace& ts = pl.tspace;
        TaylorJet g = poly_taylor(ts, pl.space, y, outer_poly, x);
        for (std::size_t i = 0; i < x.size(); ++i)
            if (!(x[i] > 0.0 && x[i] <= 1.0)) return g;
        TaylorJet f0 = interior_eval(x);
        TaylorJet th = outer_bump.eval(ts, x, pl.pou.smoothstep);
        return th * f0 + g - th * g;
    }

    double value(const std::vector<double>& x) const {
        if (degenerate) return constant;
        return eval_norm(to_norm.apply(x)).value();
    }

    // d^alpha (Tf) at x in original coordinates, any order <= m
    double deriv(const std::vector<double>& x, const MultiIndex& alpha) const {
        if (degenerate) return mi_order(alpha) == 0 ? constant : 0.0;
        double v = eval_norm(to_norm.apply(x)).deriv(alpha);
        return v * std::pow(to_norm.scale, mi_order(alpha));
    }
};

inline void gauss_legendre(int k, std::vector<double>& xs, std::vector<double>& ws) {
    xs.resize(k);
    ws.resize(k);
    for (int i = 0; i < k; ++i) {
        double x = std::cos(M_PI * (i + 0.75) / (k + 0.5));
        double dpn = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            double p0 = 1.0, p1 = x;
            for (int j = 2; j <= k; ++j) {
                double p2 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p0) / j;
                p0 = p1;
                p1 = p2;
            }
            dpn = k * (x * p1 - p0) / (x * x - 1.0);
            double dx = -p1 / dpn;
            x += dx;
            if (std::abs(dx) < 1e-15) break;
        }
        xs[i] = x;
        ws[i] = 2.0 / ((1.0 - x * x) * dpn * dpn);
    }
}

// Homogeneous seminorm of a field over the root cube by per-leaf tensor
// Gauss-Legendre quadrature on subcells delimited by bump breakpoints.
// eval must return a degree-m Taylor jet at a normalized point; extra holds
// additional per-axis breakpoints.  Returns max over |alpha| = m of the
// integral to the power 1/p.
template <class F>
inline double seminorm_quadrature_norm(const Pipeline& pl, F&& eval,
                                       const std::vector<std::vector<double>>& extra) {
    const JetSpace& sp = pl.space;
    const TaylorSpace& ts = pl.tspace;
    const int n = sp.n;
    const double p = sp.p;
    std::vector<int> top;
    for (int i = 0; i < ts.dim(); ++i)
        if (mi_order(ts.indices[i]) == sp.m) top.push_back(i);
    std::vector<double> acc(top.size(), 0.0);
    std::vector<double> gx, gw;
    gauss_legendre(2 * sp.m + 4, gx, gw);

    std::vector<int> cand;
    for (int li = 0; li < pl.cz.leaf_count(); ++li) {
        const DyadicCube& q = pl.cz.leaf(li);
        Box qb = q.dilated(1.0);
        pl.cz.leaves_in_box(q.dilated(1.3), cand);
        std::vector<std::vector<double>> breaks(n);
        for (int ax = 0; ax < n; ++ax) {
            auto& bs = breaks[ax];
            bs.push_back(qb.lo[ax]);
            bs.push_back(qb.hi[ax]);
            auto clip = [&](double v) {
                if (v > qb.lo[ax] + 1e-14 && v < qb.hi[ax] - 1e-14) bs.push_back(v);
            };
            std::vector<double> raw;
            for (int lj : cand) pl.pou.leaf_bumps[lj].breakpoints(ax, raw);
            pl.pou.z_bump.breakpoints(ax, raw);
            for (double v : raw) clip(v);
            for (double v : extra[ax]) clip(v);
            std::sort(bs.begin(), bs.end());
            bs.erase(std::unique(bs.begin(), bs.end(),
                                 [](double a, double b) { return std::abs(a - b) < 1e-14; }),
                     bs.end());
        }
        std::vector<int> cell(n, 0);
        bool done = false;
        while (!done) {
            bool valid = true;
            for (int ax = 0; ax < n; ++ax)
                if (cell[ax] + 1 >= static_cast<int>(breaks[ax].size())) valid = false;
            if (valid) {
                std::vector<int> node(n, 0);
                bool ndone = false;
                while (!ndone) {
                    std::vector<double> x(n);
                    double wt = 1.0;
                    for (int ax = 0; ax < n; ++ax) {
                        double a = breaks[ax][cell[ax]], b = breaks[ax][cell[ax] + 1];
                        x[ax] = 0.5 * (a + b) + 0.5 * (b - a) * gx[node[ax]];
                        wt *= 0.5 * (b - a) * gw[node[ax]];
                    }
                    TaylorJet j = eval(x);
                    for (std::size_t t = 0; t < top.size(); ++t) {
                        double d = j.c[top[t]] * mi_factorial(ts.indices[top[t]]);
                        acc[t] += wt * std::pow(std::abs(d), p);
                    }
                    int ax = n - 1;
                    while (ax >= 0 && ++node[ax] == static_cast<int>(gx.size())) node[ax--] = 0;
                    ndone = ax < 0;
                }
            }
            int ax = n - 1;
            while (ax >= 0 &&
                   ++cell[ax] + 1 >= static_cast<int>(breaks[ax].size())) cell[ax--] = 0;
            done = ax < 0;
        }
    }
    double best = 0.0;
    for (double a : acc) best = std::max(best, a);
    return std::pow(best, 1.0 / p);
}

// Seminorm of the extension over all of space (it is polynomial outside the
// root cube), reported in original coordinates.
inline double seminorm(const ExtensionResult& er) {
    if (er.degenerate) return 0.0;
    const int n = er.pl.space.n;
    std::vector<std::vector<double>> extra(n);
    for (int ax = 0; ax < n; ++ax) {
        er.outer_bump.breakpoints(ax, extra[ax]);
        for (int li = 0; li < er.pl.cz.leaf_count(); ++li)
            if (er.pl.leaf_data[li] >= 0) er.local_bumps[li].breakpoints(ax, extra[ax]);
    }
    double norm = seminorm_quadrature_norm(
        er.pl, [&](const std::vector<double>& x) { return er.eval_norm(x); }, extra);
    return std::pow(er.to_norm.scale, er.pl.space.m - n / er.pl.space.p) * norm;
}

inline ExtensionResult assemble_pipeline(Pipeline pl, const AffineMap& to_norm,
                                         std::vector<double> f, Eigen::VectorXd P,
                                         const Config& cfg) {
    ExtensionResult er;
    er.cfg = cfg;
    er.to_norm = to_norm;
    er.pl = std::move(pl);
    er.f = std::move(f);
    er.P = std::move(P);
    Pipeline& q = er.pl;
    const int Lc = q.cz.leaf_count(), D = q.space.dim(), zl = q.reps.z_index;

    std::vector<Eigen::VectorXd> kjets(q.kmaps.size());
    for (std::size_t r = 0; r < q.kmaps.size(); ++r) {
        const auto& km = q.kmaps[r];
        Eigen::VectorXd fl(km.data_points.size());
        for (std::size_t i = 0; i < km.data_points.size(); ++i) fl[i] = er.f[km.data_points[i]];
        kjets[r] = km.f_map * fl + km.p_map * er.P;
    }
    er.leaf_bases.resize(Lc);
    er.leaf_jets.resize(Lc);
    er.leaf_corr.assign(Lc, 0.0);
    er.local_bumps.resize(Lc);
    double maxside = 0.0;
    for (int li = 0; li < Lc; ++li) {
        maxside = std::max(maxside, q.cz.leaf(li).side());
        if (li == zl) {
            er.leaf_bases[li] = q.z;
            er.leaf_jets[li] = er.P;
        } else {
            int rank = q.ka.keystone_rank[q.ka.kappa[li]];
            er.leaf_bases[li] = q.reps.points[q.ka.kappa[li]];
            er.leaf_jets[li] = kjets[rank];
        }
        int pt = q.leaf_data[li];
        if (pt >= 0) {
            const auto& xhat = q.E[pt];
            Jet rj(q.space, er.leaf_bases[li], er.leaf_jets[li]);
            er.leaf_corr[li] = er.f[pt] - rj.eval(xhat);
            double rho = 0.5 * linf_dist(q.reps.points[li], xhat);
            er.local_bumps[li] = ball_bump(xhat, rho);
        }
    }
    er.query_pad = 0.06 * maxside;
    const int n = q.space.n;
    std::vector<double> plo(n, 0.005), phi(n, 0.995), slo(n, 0.0), shi(n, 1.0);
    er.outer_bump = box_bump(plo, phi, slo, shi);
    er.y.assign(n, 0.5);
    TaylorJet fy = er.interior_eval(er.y);
    er.outer_poly = Eigen::VectorXd(D);
    for (int b = 0; b < D; ++b) er.outer_poly[b] = fy.deriv(q.space.indices[b]);
    er.Mhat_norm = q.fs.M(er.f, er.P, q.space.p);
    er.Mhat = std::pow(to_norm.scale, q.space.m - n / q.space.p) * er.Mhat_norm;
    return er;
}

// Extension for a normalized instance with a prescribed jet P at z.
inline ExtensionResult assemble(const ProblemInstance& inst,
                                const OkPredicate& ok = simple_ok_predicate()) {
    if (!inst.P) throw std::invalid_argument("assemble: instance must carry P");
    for (const auto& x : inst.E)
        if (linf_dist(x, inst.z) == 0.0) throw std::invalid_argument("assemble: z inside E");
    Pipeline pl = build_pipeline(inst.E, inst.z, inst.cfg, inst.gcfg, ok);
    AffineMap id;
    id.scale = 1.0;
    id.shift.assign(inst.z.size(), 0.0);
    return assemble_pipeline(std::move(pl), id, inst.f, inst.P->coeffs, inst.cfg);
}

// Full operator: deterministic z, normalization, and the jet at z solved by
// sequential l^p elimination so the whole map stays linear in f.  Mhat is
// the achieved functional norm in original coordinates.
inline ExtensionResult theorem1_wrapper(const std::vector<std::vector<double>>& E,
                                        const std::vector<double>& f, const Config& cfg,
                                        const GeometryConfig& gcfg = GeometryConfig(),
                                        const OkPredicate& ok = simple_ok_predicate()) {
    if (E.empty()) throw std::invalid_argument("theorem1_wrapper: empty point set");
    if (E.size() != f.size())
        throw std::invalid_argument("theorem1_wrapper: value count mismatch");
    const int n = static_cast<int>(E[0].size());
    if (E.size() == 1) {
        ExtensionResult er;
        er.cfg = cfg;
        er.degenerate = true;
        er.constant = f[0];
        er.to_norm.scale = 1.0;
        er.to_norm.shift.assign(n, 0.0);
        er.f = f;
        return er;
    }
    int lex = 0;
    for (std::size_t i = 1; i < E.size(); ++i)
        if (E[i] < E[lex]) lex = static_cast<int>(i);
    double minsep = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < E.size(); ++i)
        for (std::size_t j = i + 1; j < E.size(); ++j)
            minsep = std::min(minsep, linf_dist(E[i], E[j]));
    if (!(minsep > 0)) throw std::invalid_argument("theorem1_wrapper: duplicate points");
    std::vector<double> z = E[lex];
    z[0] -= 0.5 * minsep;

    auto all = E;
    all.push_back(z);
    AffineMap nm = normalize_map(all);
    std::vector<std::vector<double>> En(E.size());
    for (std::size_t i = 0; i < E.size(); ++i) En[i] = nm.apply(E[i]);
    std::vector<double> zn = nm.apply(z);

    Pipeline pl = build_pipeline(En, zn, cfg, gcfg, ok);
    const int D = pl.space.dim();
    const int N = static_cast<int>(E.size());
    Eigen::MatrixXd rows = wrapper_rows(pl);
    auto sol = lpmin(rows, D, cfg.p);
    Eigen::VectorXd fv(N + 1);
    for (int i = 0; i < N; ++i) fv[i] = f[i];
    fv[N] = 1.0;
    Eigen::VectorXd P = sol.solution * fv;
    return assemble_pipeline(std::move(pl), nm, f, P, cfg);
}

// Inhomogeneous W^{m,p} norm estimate: unit-cube tiling, the wrapper's
// functional rows per cell augmented by the derivative magnitudes of the
// cell jet, cells aggregated by a p-sum.
inline double wmp_estimate(const std::vector<std::vector<double>>& E,
                           const std::vector<double>& f, const Config& cfg,
                           const GeometryConfig& gcfg = GeometryConfig()) {
    if (E.empty()) throw std::invalid_argument("wmp_estimate: empty point set");
    const int n = static_cast<int>(E[0].size());
    JetSpace sp(n, cfg.m, cfg.p);
    const int D = sp.dim();
    const double p = cfg.p;
    std::set<std::vector<long long>> cells;
    for (const auto& x : E) {
        std::vector<long long> c(n);
        for (int i = 0; i < n; ++i) c[i] = static_cast<long long>(std::floor(x[i]));
        cells.insert(c);
    }
    double total = 0.0;
    for (const auto& c : cells) {
        std::vector<int> idx;
        for (std::size_t i = 0; i < E.size(); ++i) {
            bool in = true;
            for (int ax = 0; ax < n; ++ax)
                if (E[i][ax] < c[ax] - 1.0 || E[i][ax] > c[ax] + 2.0) in = false;
            if (in) idx.push_back(static_cast<int>(i));
        }
        Eigen::MatrixXd rows;
        if (idx.size() == 1) {
            const auto& xhat = E[idx[0]];
            std::vector<double> z = xhat;
            z[0] -= 1.0;
            rows = Eigen::MatrixXd::Zero(1 + D, D + 1);
            for (int b = 0; b < D; ++b) {
                const MultiIndex& beta = sp.indices[b];
                rows(0, b) = mi_power(vdiff(xhat, z), beta) / mi_factorial(beta);
            }
            rows(0, D) = -f[idx[0]];
            for (int b = 0; b < D; ++b) rows(1 + b, b) = 1.0;
        } else {
            std::vector<std::vector<double>> Ec;
            std::vector<double> fc;
            for (int i : idx) {
                Ec.push_back(E[i]);
                fc.push_back(f[i]);
            }
            int lex = 0;
            for (std::size_t i = 1; i < Ec.size(); ++i)
                if (Ec[i] < Ec[lex]) lex = static_cast<int>(i);
            double minsep = std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < Ec.size(); ++i)
                for (std::size_t j = i + 1; j < Ec.size(); ++j)
                    minsep = std::min(minsep, linf_dist(Ec[i], Ec[j]));
            if (!(minsep > 0)) throw std::invalid_argument("wmp_estimate: duplicate points");
            std::vector<double> z = Ec[lex];
            z[0] -= 0.5 * minsep;
            auto all = Ec;
            all.push_back(z);
            AffineMap nm = normalize_map(all);
            std::vector<std::vector<double>> En(Ec.size());
            for (std::size_t i = 0; i < Ec.size(); ++i) En[i] = nm.apply(Ec[i]);
            Pipeline pl = build_pipeline(En, nm.apply(z), cfg, gcfg);
            Eigen::MatrixXd sym = wrapper_rows(pl);
            double hom = std::pow(nm.scale, cfg.m - n / p);
            rows = Eigen::MatrixXd::Zero(sym.rows() + D, D + 1);
            for (int r = 0; r < sym.rows(); ++r) {
                rows.row(r).head(D) = hom * sym.row(r).head(D);
                double cst = 0.0;
                for (std::size_t i = 0; i < Ec.size(); ++i) cst += sym(r, D + i) * fc[i];
                rows(r, D) = hom * cst;
            }
            for (int b = 0; b < D; ++b)
                rows(sym.rows() + b, b) = std::pow(nm.scale, mi_order(sp.indices[b]));
        }
        Eigen::VectorXd w = lpmin_polish(rows, D, p);
        Eigen::VectorXd full(D + 1);
        full.head(D) = w;
        full[D] = 1.0;
        total += lp_objective(rows * full, p);
    }
    return std::pow(total, 1.0 / p);
}

}  // namespace sobex
