#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "sobex/extension.hpp"
#include "sobex/oracle.hpp"

using json = nlohmann::ordered_json;
using namespace sobex;

namespace {

constexpr const char* kVersion = "sobex 1.0";

struct InputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Options {
    std::string input = "-";
    std::string output = "-";
    std::string format = "json";
    std::string mode = "simple";
    int m = 1;
    double p = 2.0;
    bool m_set = false, p_set = false;
    double sigma_w = 0.1;
    std::string label_spec;
    int oracle_mesh = 64;
    double budget_ratio = 100.0;
    bool timing = false;
};

struct Instance {
    int n = 0;
    int m = 1;
    double p = 2.0;
    std::vector<std::vector<double>> E;
    std::vector<double> f;
    std::vector<std::vector<double>> queries;
};

std::string slurp(const std::string& path) {
    if (path == "-") {
        std::ostringstream os;
        os << std::cin.rdbuf();
        return os.str();
    }
    std::ifstream in(path);
    if (!in) throw InputError("cannot open input file: " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void emit(const Options& opt, const std::string& text) {
    if (opt.output == "-") {
        std::cout << text << "\n";
        return;
    }
    std::ofstream out(opt.output);
    if (!out) throw std::runtime_error("cannot open output file: " + opt.output);
    out << text << "\n";
}

void check_points(Instance& inst) {
    if (inst.E.empty()) throw InputError("instance has no points");
    inst.n = (int)inst.E[0].size();
    if (inst.n < 1) throw InputError("points need at least one coordinate");
    for (auto& x : inst.E) {
        if ((int)x.size() != inst.n) throw InputError("inconsistent point dimension");
        for (double v : x)
            if (!std::isfinite(v)) throw InputError("non-finite coordinate");
    }
    for (double v : inst.f)
        if (!std::isfinite(v)) throw InputError("non-finite value");
    if (inst.E.size() != inst.f.size()) throw InputError("point/value count mismatch");
    for (std::size_t i = 0; i < inst.E.size(); ++i)
        for (std::size_t j = i + 1; j < inst.E.size(); ++j)
            if (inst.E[i] == inst.E[j]) throw InputError("duplicate points");
    for (auto& q : inst.queries)
        if ((int)q.size() != inst.n) throw InputError("query dimension mismatch");
    if (!(inst.p > inst.n)) throw InputError("need p > n");
    if (inst.m < 1) throw InputError("need m >= 1");
}

Instance load_instance(const Options& opt) {
    std::string text = slurp(opt.input);
    Instance inst;
    inst.m = opt.m;
    inst.p = opt.p;
    bool csv = opt.format == "csv" ||
               (opt.input.size() > 4 && opt.input.substr(opt.input.size() - 4) == ".csv");
    if (csv) {
        std::istringstream lines(text);
        std::string line;
        while (std::getline(lines, line)) {
            if (line.empty()) continue;
            std::istringstream cells(line);
            std::vector<double> row;
            std::string cell;
            while (std::getline(cells, cell, ',')) {
                try {
                    row.push_back(std::stod(cell));
                } catch (...) {
                    throw InputError("csv: bad number: " + cell);
                }
            }
            if (row.size() < 2) throw InputError("csv: need coordinates and a value per row");
            inst.f.push_back(row.back());
            row.pop_back();
            inst.E.push_back(std::move(row));
        }
    } else {
        json doc;
        try {
            doc = json::parse(text);
        } catch (const json::exception& e) {
            throw InputError(std::string("json: ") + e.what());
        }
        try {
            if (doc.contains("m") && !opt.m_set) inst.m = doc["m"].get<int>();
            if (doc.contains("p") && !opt.p_set) inst.p = doc["p"].get<double>();
            if (!doc.contains("points")) throw InputError("json: missing points");
            for (auto& row : doc["points"]) {
                std::vector<double> v = row.get<std::vector<double>>();
                if (v.size() < 2) throw InputError("json: point rows are [coords..., value]");
                inst.f.push_back(v.back());
                v.pop_back();
                inst.E.push_back(std::move(v));
            }
            if (doc.contains("queries"))
                for (auto& row : doc["queries"])
                    inst.queries.push_back(row.get<std::vector<double>>());
            if (doc.contains("n") && !inst.E.empty() &&
                doc["n"].get<int>() != (int)inst.E[0].size())
                throw InputError("json: declared n disagrees with point rows");
        } catch (const json::exception& e) {
            throw InputError(std::string("json schema: ") + e.what());
        }
    }
    check_points(inst);
    return inst;
}

Label parse_label(const std::string& spec, int n, int m) {
    Label A(MiLess{});
    if (spec.empty()) return A;
    std::istringstream groups(spec);
    std::string g;
    while (std::getline(groups, g, ';')) {
        std::istringstream cells(g);
        std::string cell;
        MultiIndex alpha;
        while (std::getline(cells, cell, ',')) {
            try {
                alpha.push_back(std::stoi(cell));
            } catch (...) {
                throw InputError("label: bad entry: " + cell);
            }
        }
        if ((int)alpha.size() != n) throw InputError("label: multi-index dimension mismatch");
        if (mi_order(alpha) > m - 1) throw InputError("label: multi-index order exceeds m-1");
        A.insert(alpha);
    }
    return A;
}

// Mirrors the auxiliary point and normalization chosen inside the extension
// wrapper, so label-mode stopping decisions see the same coordinates.
std::vector<std::vector<double>> normalized_points(const std::vector<std::vector<double>>& E) {
    int lex = 0;
    for (std::size_t i = 1; i < E.size(); ++i)
        if (E[i] < E[lex]) lex = (int)i;
    double minsep = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < E.size(); ++i)
        for (std::size_t j = i + 1; j < E.size(); ++j)
            minsep = std::min(minsep, linf_dist(E[i], E[j]));
    std::vector<double> z = E[lex];
    z[0] -= 0.5 * minsep;
    auto all = E;
    all.push_back(z);
    AffineMap nm = normalize_map(all);
    std::vector<std::vector<double>> En(E.size());
    for (std::size_t i = 0; i < E.size(); ++i) En[i] = nm.apply(E[i]);
    return En;
}

struct Built {
    Config cfg;
    ExtensionResult er;
};

Built build(const Instance& inst, const Options& opt) {
    Built b;
    b.cfg.m = inst.m;
    b.cfg.p = inst.p;
    if (opt.mode == "label") {
        b.cfg.label = parse_label(opt.label_spec, inst.n, inst.m);
        if (inst.E.size() >= 2) {
            auto En = std::make_shared<const std::vector<std::vector<double>>>(
                normalized_points(inst.E));
            OkPredicate ok =
                label_ok_predicate(En, b.cfg.label, opt.sigma_w, inst.m, inst.p);
            b.er = theorem1_wrapper(inst.E, inst.f, b.cfg, GeometryConfig(), ok);
            return b;
        }
    } else if (opt.mode != "simple") {
        throw InputError("mode must be simple or label");
    }
    b.er = theorem1_wrapper(inst.E, inst.f, b.cfg);
    return b;
}

std::string mi_key(const MultiIndex& a) {
    std::string s;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(a[i]);
    }
    return s;
}

json functional_json(const LinearFunctional& xi) {
    json j;
    j["depth"] = xi.depth();
    json f = json::object(), pj = json::object(), as = json::object();
    for (auto [i, c] : xi.f_coeffs) f[std::to_string(i)] = c;
    for (auto [i, c] : xi.jet_coeffs) pj[std::to_string(i)] = c;
    for (auto [i, c] : xi.assist_coeffs) as[std::to_string(i)] = c;
    j["f"] = f;
    j["jet"] = pj;
    j["assists"] = as;
    return j;
}

json base_report(const Instance& inst, const Built& b) {
    json rep;
    rep["version"] = kVersion;
    rep["n"] = inst.n;
    rep["m"] = inst.m;
    rep["p"] = inst.p;
    json nm;
    nm["scale"] = b.er.to_norm.scale;
    nm["shift"] = b.er.to_norm.shift;
    rep["normalization"] = nm;
    rep["degenerate"] = b.er.degenerate;
    rep["seminorm_estimate"] = b.er.Mhat;
    if (!b.er.degenerate) {
        const Pipeline& pl = b.er.pl;
        rep["z"] = b.er.to_norm.invert(pl.z);
        json fs;
        std::size_t depth_total = 0;
        for (auto& xi : pl.fs.estimators) depth_total += (std::size_t)xi.depth();
        fs["estimator_count"] = pl.fs.estimators.size();
        fs["assist_count"] = pl.fs.assists.size();
        fs["total_depth"] = depth_total;
        rep["functionals"] = fs;
        json geo;
        geo["leaf_count"] = pl.cz.leaf_count();
        int keys = 0, maxpath = 0;
        for (int li = 0; li < pl.cz.leaf_count(); ++li) {
            if (pl.ka.keystone_rank[li] >= 0) ++keys;
            maxpath = std::max(maxpath, (int)pl.ka.paths[li].size());
        }
        geo["keystone_count"] = keys;
        geo["max_path_length"] = maxpath;
        auto [C, c] = fit_path_decay(pl.cz, pl.ka);
        geo["k1_decay"] = json{{"C", C}, {"c", c}};
        rep["geometry"] = geo;
    }
    return rep;
}

int cmd_extend(const Instance& inst, const Options& opt) {
    auto t0 = std::chrono::steady_clock::now();
    Built b = build(inst, opt);
    json rep = base_report(inst, b);
    auto deriv = [&](const std::vector<double>& x, const MultiIndex& alpha) {
        if (b.er.degenerate) return mi_order(alpha) == 0 ? b.er.constant : 0.0;
        return b.er.deriv(x, alpha);
    };
    json values = json::array();
    std::vector<MultiIndex> orders = enumerate_multiindices(inst.n, inst.m - 1);
    for (auto& q : inst.queries) {
        json rec;
        rec["point"] = q;
        rec["value"] = b.er.degenerate ? b.er.constant : b.er.value(q);
        json ds = json::object();
        for (auto& alpha : orders)
            if (mi_order(alpha) > 0) ds[mi_key(alpha)] = deriv(q, alpha);
        rec["derivatives"] = ds;
        values.push_back(rec);
    }
    rep["values"] = values;
    if (opt.timing)
        rep["timing_ms"] = std::chrono::duration<double, std::milli>(
                               std::chrono::steady_clock::now() - t0)
                               .count();
    emit(opt, rep.dump(2));
    return 0;
}

int cmd_norm(const Instance& inst, const Options& opt) {
    auto t0 = std::chrono::steady_clock::now();
    Built b = build(inst, opt);
    json rep = base_report(inst, b);
    if (!b.er.degenerate) {
        const FunctionalSystem& fs = b.er.pl.fs;
        json est = json::array(), as = json::array();
        for (auto& xi : fs.estimators) est.push_back(functional_json(xi));
        for (auto& xi : fs.assists) as.push_back(functional_json(xi));
        rep["estimators"] = est;
        rep["assists"] = as;
        std::size_t budget = 64 * (std::size_t)b.er.pl.space.dim() * inst.E.size();
        rep["count_within_budget"] = fs.estimators.size() <= budget;
    }
    if (opt.timing)
        rep["timing_ms"] = std::chrono::duration<double, std::milli>(
                               std::chrono::steady_clock::now() - t0)
                               .count();
    emit(opt, rep.dump(2));
    return 0;
}

std::vector<double> cube_corner(const DyadicCube& q) {
    std::vector<double> c(q.corner.size());
    for (std::size_t i = 0; i < c.size(); ++i) c[i] = q.corner[i] * q.side();
    return c;
}

int cmd_decompose(const Instance& inst, const Options& opt) {
    Built b = build(inst, opt);
    if (b.er.degenerate)
        throw std::runtime_error("decompose: single-point instance has no decomposition");
    const Pipeline& pl = b.er.pl;
    if (opt.format == "svg") {
        if (inst.n != 2) throw InputError("svg output requires n = 2");
        std::ostringstream svg;
        double W = 800.0;
        auto X = [&](double v) { return v * W; };
        auto Y = [&](double v) { return (1.0 - v) * W; };
        svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
            << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\""
            << W << "\" viewBox=\"0 0 " << W << " " << W << "\">\n";
        for (int li = 0; li < pl.cz.leaf_count(); ++li) {
            const DyadicCube& q = pl.cz.leaf(li);
            auto c = cube_corner(q);
            double s = q.side();
            bool key = pl.ka.keystone_rank[li] >= 0;
            svg << "<rect x=\"" << X(c[0]) << "\" y=\"" << Y(c[1] + s) << "\" width=\""
                << s * W << "\" height=\"" << s * W << "\" fill=\""
                << (key ? "#cce5ff" : "none") << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
        }
        for (int li = 0; li < pl.cz.leaf_count(); ++li) {
            const auto& path = pl.ka.paths[li];
            for (std::size_t i = 0; i + 1 < path.size(); ++i) {
                auto a = cube_corner(pl.cz.leaf(path[i]));
                auto bb = cube_corner(pl.cz.leaf(path[i + 1]));
                double sa = pl.cz.leaf(path[i]).side(), sb = pl.cz.leaf(path[i + 1]).side();
                svg << "<line x1=\"" << X(a[0] + sa / 2) << "\" y1=\"" << Y(a[1] + sa / 2)
                    << "\" x2=\"" << X(bb[0] + sb / 2) << "\" y2=\"" << Y(bb[1] + sb / 2)
                    << "\" stroke=\"#d9534f\" stroke-width=\"1.5\"/>\n";
            }
        }
        for (auto& x : pl.E)
            svg << "<circle cx=\"" << X(x[0]) << "\" cy=\"" << Y(x[1])
                << "\" r=\"3\" fill=\"red\"/>\n";
        svg << "</svg>";
        emit(opt, svg.str());
        return 0;
    }
    json rep = base_report(inst, b);
    json leaves = json::array();
    for (int li = 0; li < pl.cz.leaf_count(); ++li) {
        const DyadicCube& q = pl.cz.leaf(li);
        json rec;
        rec["level"] = q.level;
        rec["corner"] = cube_corner(q);
        rec["side"] = q.side();
        rec["is_keystone"] = pl.ka.keystone_rank[li] >= 0;
        rec["kappa"] = pl.ka.kappa[li];
        rec["path"] = pl.ka.paths[li];
        rec["representative"] = pl.reps.points[li];
        leaves.push_back(rec);
    }
    rep["leaves"] = leaves;
    emit(opt, rep.dump(2));
    return 0;
}

int cmd_verify(const Instance& inst, const Options& opt) {
    if (inst.n > 2) throw InputError("verify: oracle runs are limited to n <= 2");
    Built b = build(inst, opt);
    json rep = base_report(inst, b);
    double tnorm = b.er.degenerate ? 0.0 : seminorm(b.er);
    rep["seminorm_quadrature"] = tnorm;
    double scale = 0.0;
    for (double v : inst.f) scale = std::max(scale, std::abs(v));
    bool degenerate_data = b.er.Mhat <= 1e-9 * (1.0 + scale);
    int exit = 0;
    if (degenerate_data) {
        rep["oracle"] = json{{"status", "degenerate"}};
        rep["ratios"] = json{{"seminorm", "degenerate"}, {"estimate", "degenerate"}};
    } else {
        OracleProblem prob;
        prob.n = inst.n;
        prob.m = inst.m;
        prob.p = inst.p;
        prob.domain = oracle_domain(inst.E);
        for (std::size_t i = 0; i < inst.E.size(); ++i)
            prob.values.emplace_back(inst.E[i], inst.f[i]);
        double side = prob.domain.hi[0] - prob.domain.lo[0];
        double minsep = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < inst.E.size(); ++i)
            for (std::size_t j = i + 1; j < inst.E.size(); ++j)
                minsep = std::min(minsep, linf_dist(inst.E[i], inst.E[j]));
        int need = (int)std::ceil(8.0 * side / minsep);
        prob.mesh = std::max(opt.oracle_mesh, need);
        OracleResult r;
        try {
            r = variational_seminorm(prob);
        } catch (const std::runtime_error& e) {
            json orc;
            orc["status"] = "failed";
            orc["error"] = e.what();
            rep["oracle"] = orc;
            emit(opt, rep.dump(2));
            return 4;
        }
        json orc;
        orc["status"] = "ok";
        orc["mesh"] = prob.mesh;
        orc["value"] = r.value;
        orc["smoothed"] = r.smoothed;
        orc["iterations"] = r.iterations;
        rep["oracle"] = orc;
        double rs = tnorm / r.value;
        double re = b.er.Mhat / r.value;
        rep["ratios"] = json{{"seminorm", rs}, {"estimate", re}};
        if (!(rs <= opt.budget_ratio) || !(re <= opt.budget_ratio) || !(r.value <= tnorm * 1.05))
            exit = 4;
    }
    rep["pass"] = exit == 0;
    emit(opt, rep.dump(2));
    return exit;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Linear extension operator for Sobolev trace data"};
    app.set_version_flag("--version", kVersion);
    Options opt;

    auto add_common = [&](CLI::App* c) {
        c->add_option("input", opt.input, "instance file (json or csv), - for stdin");
        c->add_option("-o,--output", opt.output, "output file, - for stdout");
        c->add_option("--m", opt.m, "smoothness order")->check(CLI::PositiveNumber);
        c->add_option("--p", opt.p, "integrability exponent");
        c->add_option("--mode", opt.mode, "decomposition mode: simple|label");
        c->add_option("--sigma-w", opt.sigma_w, "label-mode basis tolerance");
        c->add_option("--A", opt.label_spec, "label as semicolon-separated multi-indices");
        c->add_option("--format", opt.format, "input/output format: json|csv|svg");
        c->add_flag("--timing", opt.timing, "include wall-clock timing in reports");
    };

    CLI::App* extend = app.add_subcommand("extend", "build the extension and evaluate queries");
    CLI::App* norm = app.add_subcommand("norm", "emit the seminorm estimate and functionals");
    CLI::App* decompose = app.add_subcommand("decompose", "dump the stopping-time decomposition");
    CLI::App* verify = app.add_subcommand("verify", "compare against the variational oracle");
    for (CLI::App* c : {extend, norm, decompose, verify}) add_common(c);
    verify->add_option("--oracle-mesh", opt.oracle_mesh, "oracle grid cells per axis");
    verify->add_option("--budget-ratio", opt.budget_ratio, "maximum accepted ratio to the oracle");
    app.require_subcommand(1);

    CLI11_PARSE(app, argc, argv);
    opt.m_set = app.get_subcommands().front()->count("--m") > 0;
    opt.p_set = app.get_subcommands().front()->count("--p") > 0;

    try {
        Instance inst = load_instance(opt);
        if (extend->parsed()) return cmd_extend(inst, opt);
        if (norm->parsed()) return cmd_norm(inst, opt);
        if (decompose->parsed()) return cmd_decompose(inst, opt);
        if (verify->parsed()) return cmd_verify(inst, opt);
    } catch (const InputError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
