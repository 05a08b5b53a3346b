#include "mfr/experiment_config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <initializer_list>
#include <set>

#include "mfr/errors.hpp"
#include "mfr/rng.hpp"

namespace mfr {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& where, const std::string& what) {
    throw ValidationError(where + ": " + what);
}

const json& need_obj(const json& parent, const std::string& key, const std::string& where) {
    if (!parent.contains(key)) fail(where, "missing required block '" + key + "'");
    const json& j = parent.at(key);
    if (!j.is_object()) fail(where, "'" + key + "' must be an object");
    return j;
}

void expect_keys(const json& obj, const std::string& where,
                 std::initializer_list<const char*> allowed) {
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!ok.count(it.key())) fail(where, "unknown key '" + it.key() + "'");
}

double need_num(const json& obj, const std::string& key, const std::string& where) {
    if (!obj.contains(key)) fail(where, "missing '" + key + "'");
    if (!obj.at(key).is_number()) fail(where, "'" + key + "' must be a number");
    return obj.at(key).get<double>();
}

double opt_num(const json& obj, const std::string& key, const std::string& where, double dflt) {
    if (!obj.contains(key)) return dflt;
    if (!obj.at(key).is_number()) fail(where, "'" + key + "' must be a number");
    return obj.at(key).get<double>();
}

int need_int(const json& obj, const std::string& key, const std::string& where) {
    if (!obj.contains(key)) fail(where, "missing '" + key + "'");
    if (!obj.at(key).is_number_integer()) fail(where, "'" + key + "' must be an integer");
    return obj.at(key).get<int>();
}

int opt_int(const json& obj, const std::string& key, const std::string& where, int dflt) {
    if (!obj.contains(key)) return dflt;
    if (!obj.at(key).is_number_integer()) fail(where, "'" + key + "' must be an integer");
    return obj.at(key).get<int>();
}

bool opt_bool(const json& obj, const std::string& key, const std::string& where, bool dflt) {
    if (!obj.contains(key)) return dflt;
    if (!obj.at(key).is_boolean()) fail(where, "'" + key + "' must be a boolean");
    return obj.at(key).get<bool>();
}

std::string need_str(const json& obj, const std::string& key, const std::string& where) {
    if (!obj.contains(key)) fail(where, "missing '" + key + "'");
    if (!obj.at(key).is_string()) fail(where, "'" + key + "' must be a string");
    return obj.at(key).get<std::string>();
}

std::vector<double> need_num_list(const json& obj, const std::string& key,
                                  const std::string& where) {
    if (!obj.contains(key)) fail(where, "missing '" + key + "'");
    const json& j = obj.at(key);
    if (!j.is_array() || j.empty()) fail(where, "'" + key + "' must be a nonempty array");
    std::vector<double> out;
    for (const auto& v : j) {
        if (!v.is_number()) fail(where, "'" + key + "' must contain numbers");
        out.push_back(v.get<double>());
    }
    return out;
}

Point need_vec(const json& obj, const std::string& key, const std::string& where, int size) {
    std::vector<double> vals = need_num_list(obj, key, where);
    if (size >= 0 && static_cast<int>(vals.size()) != size)
        fail(where, "'" + key + "' must have " + std::to_string(size) + " entries");
    return Eigen::Map<const Point>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

Matrix need_mat(const json& obj, const std::string& key, const std::string& where, int rows,
                int cols) {
    if (!obj.contains(key)) fail(where, "missing '" + key + "'");
    const json& j = obj.at(key);
    if (!j.is_array() || static_cast<int>(j.size()) != rows)
        fail(where, "'" + key + "' must be an array of " + std::to_string(rows) + " rows");
    Matrix m(rows, cols);
    for (int r = 0; r < rows; ++r) {
        const json& row = j.at(static_cast<std::size_t>(r));
        if (!row.is_array() || static_cast<int>(row.size()) != cols)
            fail(where, "'" + key + "' rows must have " + std::to_string(cols) + " entries");
        for (int c = 0; c < cols; ++c) {
            const json& v = row.at(static_cast<std::size_t>(c));
            if (!v.is_number()) fail(where, "'" + key + "' must contain numbers");
            m(r, c) = v.get<double>();
        }
    }
    return m;
}

json echo_vec(const Point& p) {
    json out = json::array();
    for (Eigen::Index i = 0; i < p.size(); ++i) out.push_back(p[i]);
    return out;
}

json echo_mat(const Matrix& m) {
    json out = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        out.push_back(row);
    }
    return out;
}

// dense polynomial in one variable, coefficients by ascending degree
struct Poly1 {
    std::vector<double> c;
    double value(double x) const {
        double acc = 0.0;
        for (std::size_t i = c.size(); i-- > 0;) acc = acc * x + c[i];
        return acc;
    }
    double d1(double x) const {
        double acc = 0.0;
        for (std::size_t i = c.size(); i-- > 1;) acc = acc * x + c[i] * static_cast<double>(i);
        return acc;
    }
    double d2(double x) const {
        double acc = 0.0;
        for (std::size_t i = c.size(); i-- > 2;)
            acc = acc * x + c[i] * static_cast<double>(i) * static_cast<double>(i - 1);
        return acc;
    }
};

Poly1 parse_poly(const json& obj, const std::string& where) {
    expect_keys(obj, where, {"coeffs"});
    Poly1 p;
    p.c = need_num_list(obj, "coeffs", where);
    if (p.c.size() > 8) fail(where, "'coeffs' supports degree at most 7");
    return p;
}

CoefficientSpec build_coefficients(const json& drift, const json& diffusion, int l, int d,
                                   json& echo_drift, json& echo_diff) {
    CoefficientSpec coeff;
    coeff.state_dim = l;
    coeff.noise_dim = d;

    std::string dk = need_str(drift, "kind", "problem.drift");
    if (dk == "zero") {
        expect_keys(drift, "problem.drift", {"kind"});
        coeff.drift = [l](double, const Point&) { return Point::Zero(l).eval(); };
        echo_drift = {{"kind", "zero"}};
    } else if (dk == "constant") {
        expect_keys(drift, "problem.drift", {"kind", "value"});
        Point b = need_vec(drift, "value", "problem.drift", l);
        coeff.drift = [b](double, const Point&) { return b; };
        echo_drift = {{"kind", "constant"}, {"value", echo_vec(b)}};
    } else if (dk == "linear") {
        expect_keys(drift, "problem.drift", {"kind", "matrix", "offset"});
        Matrix a = need_mat(drift, "matrix", "problem.drift", l, l);
        Point c = need_vec(drift, "offset", "problem.drift", l);
        coeff.drift = [a, c](double, const Point& x) { return Point(a * x + c); };
        echo_drift = {{"kind", "linear"}, {"matrix", echo_mat(a)}, {"offset", echo_vec(c)}};
    } else {
        fail("problem.drift", "unknown kind '" + dk + "'");
    }

    std::string sk = need_str(diffusion, "kind", "problem.diffusion");
    if (sk == "zero") {
        expect_keys(diffusion, "problem.diffusion", {"kind"});
        coeff.diffusion = [l, d](double, const Point&) { return Matrix::Zero(l, d).eval(); };
        echo_diff = {{"kind", "zero"}};
    } else if (sk == "constant") {
        expect_keys(diffusion, "problem.diffusion", {"kind", "matrix"});
        Matrix s = need_mat(diffusion, "matrix", "problem.diffusion", l, d);
        coeff.diffusion = [s](double, const Point&) { return s; };
        echo_diff = {{"kind", "constant"}, {"matrix", echo_mat(s)}};
    } else if (sk == "diagonal_linear") {
        expect_keys(diffusion, "problem.diffusion", {"kind", "scale"});
        if (l != d) fail("problem.diffusion", "diagonal_linear needs matching state and noise dims");
        Point s = need_vec(diffusion, "scale", "problem.diffusion", l);
        coeff.diffusion = [s, l](double, const Point& x) {
            Matrix m = Matrix::Zero(l, l);
            for (int i = 0; i < l; ++i) m(i, i) = s[i] * x[i];
            return m;
        };
        echo_diff = {{"kind", "diagonal_linear"}, {"scale", echo_vec(s)}};
    } else {
        fail("problem.diffusion", "unknown kind '" + sk + "'");
    }
    coeff.kind = dk + "/" + sk;
    return coeff;
}

DriverSpec build_driver(const json& j, int n, json& echo) {
    DriverSpec drv;
    std::string kind = need_str(j, "kind", "problem.driver");
    if (kind == "zero") {
        expect_keys(j, "problem.driver", {"kind"});
        drv.f = nullptr;
        drv.uses_law_yz = false;
        echo = {{"kind", "zero"}};
    } else if (kind == "constant") {
        expect_keys(j, "problem.driver", {"kind", "value"});
        Point v = need_vec(j, "value", "problem.driver", n);
        drv.f = [v](double, const Point&, const Point&, const Matrix&, const EmpiricalMeasure&,
                    const EmpiricalMeasure&) { return v; };
        drv.uses_law_yz = false;
        echo = {{"kind", "constant"}, {"value", echo_vec(v)}};
    } else if (kind == "linear_y") {
        // f = rate * y + offset
        expect_keys(j, "problem.driver", {"kind", "rate", "offset"});
        double rate = need_num(j, "rate", "problem.driver");
        Point off = need_vec(j, "offset", "problem.driver", n);
        drv.f = [rate, off](double, const Point&, const Point& y, const Matrix&,
                            const EmpiricalMeasure&, const EmpiricalMeasure&) {
            return Point(rate * y + off);
        };
        drv.uses_law_yz = false;
        echo = {{"kind", "linear_y"}, {"rate", rate}, {"offset", echo_vec(off)}};
    } else {
        fail("problem.driver", "unknown kind '" + kind + "'");
    }
    drv.kind = kind;
    return drv;
}

TerminalSpec build_terminal(const json& j, int n, int l, json& echo) {
    TerminalSpec term;
    std::string kind = need_str(j, "kind", "problem.terminal");
    bool project = opt_bool(j, "project", "problem.terminal", true);
    if (kind == "constant") {
        expect_keys(j, "problem.terminal", {"kind", "value", "project"});
        Point v = need_vec(j, "value", "problem.terminal", n);
        term.g = [v](const Point&, const EmpiricalMeasure&) { return v; };
        echo = {{"kind", "constant"}, {"value", echo_vec(v)}};
    } else if (kind == "affine") {
        expect_keys(j, "problem.terminal", {"kind", "matrix", "offset", "project"});
        Matrix a = need_mat(j, "matrix", "problem.terminal", n, l);
        Point c = need_vec(j, "offset", "problem.terminal", n);
        term.g = [a, c](const Point& x, const EmpiricalMeasure&) { return Point(a * x + c); };
        echo = {{"kind", "affine"}, {"matrix", echo_mat(a)}, {"offset", echo_vec(c)}};
    } else if (kind == "call") {
        expect_keys(j, "problem.terminal", {"kind", "strike", "project"});
        if (n != 1 || l != 1) fail("problem.terminal", "call needs scalar state and value");
        double strike = need_num(j, "strike", "problem.terminal");
        term.g = [strike](const Point& x, const EmpiricalMeasure&) {
            Point out(1);
            out[0] = std::max(x[0] - strike, 0.0);
            return out;
        };
        echo = {{"kind", "call"}, {"strike", strike}};
    } else if (kind == "square") {
        expect_keys(j, "problem.terminal", {"kind", "scale", "project"});
        if (n != 1 || l != 1) fail("problem.terminal", "square needs scalar state and value");
        double scale = opt_num(j, "scale", "problem.terminal", 1.0);
        term.g = [scale](const Point& x, const EmpiricalMeasure&) {
            Point out(1);
            out[0] = scale * x[0] * x[0];
            return out;
        };
        echo = {{"kind", "square"}, {"scale", scale}};
    } else {
        fail("problem.terminal", "unknown kind '" + kind + "'");
    }
    term.project_terminal = project;
    term.kind = kind;
    echo["project"] = project;
    return term;
}

ObstacleFunctional build_obstacle(const json& j, int n, json& echo) {
    std::string kind = need_str(j, "kind", "problem.obstacle");
    if (kind == "affine") {
        expect_keys(j, "problem.obstacle", {"kind", "alpha", "a", "alpha_prime", "b", "delta0"});
        Point alpha = need_vec(j, "alpha", "problem.obstacle", n);
        double a = need_num(j, "a", "problem.obstacle");
        Point alpha_prime = need_vec(j, "alpha_prime", "problem.obstacle", n);
        double b = need_num(j, "b", "problem.obstacle");
        std::optional<double> delta0;
        if (j.contains("delta0")) delta0 = need_num(j, "delta0", "problem.obstacle");
        echo = {{"kind", "affine"}, {"alpha", echo_vec(alpha)}, {"a", a},
                {"alpha_prime", echo_vec(alpha_prime)}, {"b", b}};
        if (delta0) echo["delta0"] = *delta0;
        return make_affine(alpha, a, alpha_prime, b, delta0);
    }
    if (kind == "separable") {
        expect_keys(j, "problem.obstacle",
                    {"kind", "outer", "link", "inner", "beta", "bound_m", "lip_l", "delta0"});
        if (n != 1) fail("problem.obstacle", "separable supports scalar y only");
        Poly1 outer = parse_poly(need_obj(j, "outer", "problem.obstacle"), "problem.obstacle.outer");
        Poly1 link = parse_poly(need_obj(j, "link", "problem.obstacle"), "problem.obstacle.link");
        Poly1 inner = parse_poly(need_obj(j, "inner", "problem.obstacle"), "problem.obstacle.inner");
        double beta = need_num(j, "beta", "problem.obstacle");
        double bound_m = need_num(j, "bound_m", "problem.obstacle");
        double lip_l = need_num(j, "lip_l", "problem.obstacle");
        std::optional<double> delta0;
        if (j.contains("delta0")) delta0 = need_num(j, "delta0", "problem.obstacle");
        SmoothScalarField fo{
            [outer](const Point& y) { return outer.value(y[0]); },
            [outer](const Point& y) { Point g(1); g[0] = outer.d1(y[0]); return g; },
            [outer](const Point& y) { Matrix h(1, 1); h(0, 0) = outer.d2(y[0]); return h; }};
        SmoothScalarFunction fl{
            [link](double e) { return link.value(e); },
            [link](double e) { return link.d1(e); },
            [link](double e) { return link.d2(e); }};
        SmoothScalarField fi{
            [inner](const Point& v) { return inner.value(v[0]); },
            [inner](const Point& v) { Point g(1); g[0] = inner.d1(v[0]); return g; },
            [inner](const Point& v) { Matrix h(1, 1); h(0, 0) = inner.d2(v[0]); return h; }};
        echo = {{"kind", "separable"},
                {"outer", {{"coeffs", outer.c}}},
                {"link", {{"coeffs", link.c}}},
                {"inner", {{"coeffs", inner.c}}},
                {"beta", beta},
                {"bound_m", bound_m},
                {"lip_l", lip_l}};
        if (delta0) echo["delta0"] = *delta0;
        return make_separable(fo, fl, fi, 1, beta, bound_m, lip_l, delta0);
    }
    fail("problem.obstacle", "unknown kind '" + kind + "'");
}

std::function<std::vector<Point>(int, std::uint64_t)> build_x0(const json& j, int l,
                                                               json& echo) {
    std::string kind = need_str(j, "kind", "problem.x0");
    if (kind == "constant") {
        expect_keys(j, "problem.x0", {"kind", "value"});
        Point v = need_vec(j, "value", "problem.x0", l);
        echo = {{"kind", "constant"}, {"value", echo_vec(v)}};
        return make_constant_cloud(v);
    }
    if (kind == "gaussian") {
        expect_keys(j, "problem.x0", {"kind", "mean", "std"});
        Point mean = need_vec(j, "mean", "problem.x0", l);
        double sd = need_num(j, "std", "problem.x0");
        if (sd < 0.0) fail("problem.x0", "'std' must be nonnegative");
        echo = {{"kind", "gaussian"}, {"mean", echo_vec(mean)}, {"std", sd}};
        return make_gaussian_cloud(mean, sd);
    }
    fail("problem.x0", "unknown kind '" + kind + "'");
}

EmpiricalMeasure build_lambda(const json& j, json& echo) {
    std::string kind = need_str(j, "kind", "decoupling.lambda");
    if (kind == "gaussian") {
        expect_keys(j, "decoupling.lambda", {"kind", "mean", "std", "count", "seed"});
        Point mean = need_vec(j, "mean", "decoupling.lambda", 1);
        double sd = need_num(j, "std", "decoupling.lambda");
        int count = need_int(j, "count", "decoupling.lambda");
        auto seed = static_cast<std::uint64_t>(opt_int(j, "seed", "decoupling.lambda", 11));
        if (count < 1) fail("decoupling.lambda", "'count' must be >= 1");
        if (sd < 0.0) fail("decoupling.lambda", "'std' must be nonnegative");
        echo = {{"kind", "gaussian"}, {"mean", echo_vec(mean)}, {"std", sd},
                {"count", count}, {"seed", static_cast<long long>(seed)}};
        return EmpiricalMeasure(make_gaussian_cloud(mean, sd)(count, seed));
    }
    if (kind == "atoms") {
        expect_keys(j, "decoupling.lambda", {"kind", "values"});
        std::vector<double> vals = need_num_list(j, "values", "decoupling.lambda");
        echo = {{"kind", "atoms"}, {"values", vals}};
        return empirical_from_scalars(vals);
    }
    fail("decoupling.lambda", "unknown kind '" + kind + "'");
}

} // namespace

ExperimentConfig parse_config(const nlohmann::json& doc) {
    if (!doc.is_object()) throw ValidationError("configuration root must be an object");
    expect_keys(doc, "config", {"problem", "solver", "check", "study", "decoupling", "output"});

    ExperimentConfig cfg;
    json resolved;

    if (doc.contains("problem")) {
        const json& p = need_obj(doc, "problem", "config");
        expect_keys(p, "problem",
                    {"dims", "horizon", "drift", "diffusion", "driver", "terminal", "obstacle",
                     "x0"});
        const json& dims = need_obj(p, "dims", "problem");
        expect_keys(dims, "problem.dims", {"y", "x", "noise"});
        cfg.y_dim = need_int(dims, "y", "problem.dims");
        cfg.x_dim = need_int(dims, "x", "problem.dims");
        cfg.noise_dim = need_int(dims, "noise", "problem.dims");
        if (cfg.y_dim < 1 || cfg.x_dim < 1 || cfg.noise_dim < 1)
            fail("problem.dims", "dimensions must be >= 1");
        cfg.horizon = need_num(p, "horizon", "problem");
        if (!(cfg.horizon > 0.0)) fail("problem", "'horizon' must be positive");

        json e_drift, e_diff, e_driver, e_term, e_obs, e_x0;
        cfg.problem.coeff = build_coefficients(need_obj(p, "drift", "problem"),
                                               need_obj(p, "diffusion", "problem"), cfg.x_dim,
                                               cfg.noise_dim, e_drift, e_diff);
        cfg.problem.driver = build_driver(need_obj(p, "driver", "problem"), cfg.y_dim, e_driver);
        cfg.problem.terminal =
            build_terminal(need_obj(p, "terminal", "problem"), cfg.y_dim, cfg.x_dim, e_term);
        cfg.problem.obstacle = build_obstacle(need_obj(p, "obstacle", "problem"), cfg.y_dim, e_obs);
        cfg.problem.x0_sampler = build_x0(need_obj(p, "x0", "problem"), cfg.x_dim, e_x0);
        cfg.problem_present = true;

        resolved["problem"] = {{"dims", {{"y", cfg.y_dim}, {"x", cfg.x_dim}, {"noise", cfg.noise_dim}}},
                               {"horizon", cfg.horizon},
                               {"drift", e_drift},
                               {"diffusion", e_diff},
                               {"driver", e_driver},
                               {"terminal", e_term},
                               {"obstacle", e_obs},
                               {"x0", e_x0}};
    }

    {
        json s = doc.contains("solver") ? doc.at("solver") : json::object();
        if (!s.is_object()) throw ValidationError("solver: must be an object");
        expect_keys(s, "solver",
                    {"particles", "steps", "penalty", "picard_iters", "picard_tol",
                     "basis_degree", "ridge", "seed", "feas_tol", "flow_dt", "flow_max_t"});
        cfg.solver.particles = opt_int(s, "particles", "solver", 200);
        cfg.solver.grid = TimeGrid{cfg.horizon, opt_int(s, "steps", "solver", 100)};
        cfg.solver.penalty = opt_num(s, "penalty", "solver", 100.0);
        cfg.solver.picard_iters = opt_int(s, "picard_iters", "solver", 8);
        cfg.solver.picard_tol = opt_num(s, "picard_tol", "solver", 1e-10);
        cfg.solver.basis_degree = opt_int(s, "basis_degree", "solver", 2);
        cfg.solver.ridge = opt_num(s, "ridge", "solver", 1e-8);
        cfg.solver.seed = static_cast<std::uint64_t>(opt_int(s, "seed", "solver", 1));
        cfg.solver.feas_tol = opt_num(s, "feas_tol", "solver", 1e-9);
        cfg.solver.flow_dt = opt_num(s, "flow_dt", "solver", 0.0);
        cfg.solver.flow_max_t = opt_num(s, "flow_max_t", "solver", 0.0);
        cfg.solver_present = doc.contains("solver");
        try {
            cfg.solver.validate();
        } catch (const ValidationError& e) {
            throw ValidationError(std::string("solver: ") + e.what());
        }
        resolved["solver"] = {{"particles", cfg.solver.particles},
                              {"steps", cfg.solver.grid.steps},
                              {"penalty", cfg.solver.penalty},
                              {"picard_iters", cfg.solver.picard_iters},
                              {"picard_tol", cfg.solver.picard_tol},
                              {"basis_degree", cfg.solver.basis_degree},
                              {"ridge", cfg.solver.ridge},
                              {"seed", static_cast<long long>(cfg.solver.seed)},
                              {"feas_tol", cfg.solver.feas_tol},
                              {"flow_dt", cfg.solver.flow_dt},
                              {"flow_max_t", cfg.solver.flow_max_t}};
    }

    if (doc.contains("check")) {
        const json& c = need_obj(doc, "check", "config");
        expect_keys(c, "check",
                    {"box_lo", "box_hi", "min_atoms", "max_atoms", "samples", "tol", "seed"});
        cfg.check.present = true;
        cfg.check.box_lo = need_vec(c, "box_lo", "check", cfg.y_dim);
        cfg.check.box_hi = need_vec(c, "box_hi", "check", cfg.y_dim);
        cfg.check.min_atoms = opt_int(c, "min_atoms", "check", 2);
        cfg.check.max_atoms = opt_int(c, "max_atoms", "check", 12);
        cfg.check.samples = opt_int(c, "samples", "check", 200);
        cfg.check.tol = opt_num(c, "tol", "check", 0.0);
        cfg.check.seed = static_cast<std::uint64_t>(opt_int(c, "seed", "check", 7));
        resolved["check"] = {{"box_lo", echo_vec(cfg.check.box_lo)},
                             {"box_hi", echo_vec(cfg.check.box_hi)},
                             {"min_atoms", cfg.check.min_atoms},
                             {"max_atoms", cfg.check.max_atoms},
                             {"samples", cfg.check.samples},
                             {"tol", cfg.check.tol},
                             {"seed", static_cast<long long>(cfg.check.seed)}};
    }

    if (doc.contains("study")) {
        const json& st = need_obj(doc, "study", "config");
        expect_keys(st, "study", {"penalty", "chaos", "stability"});
        json e = json::object();
        if (st.contains("penalty")) {
            const json& ps = need_obj(st, "penalty", "study");
            expect_keys(ps, "study.penalty", {"grid"});
            cfg.penalty_study.present = true;
            cfg.penalty_study.grid = need_num_list(ps, "grid", "study.penalty");
            e["penalty"] = {{"grid", cfg.penalty_study.grid}};
        }
        if (st.contains("chaos")) {
            const json& cs = need_obj(st, "chaos", "study");
            expect_keys(cs, "study.chaos", {"grid", "reference"});
            cfg.chaos.present = true;
            for (double v : need_num_list(cs, "grid", "study.chaos"))
                cfg.chaos.grid.push_back(static_cast<int>(v));
            cfg.chaos.reference = need_int(cs, "reference", "study.chaos");
            if (!cfg.chaos.grid.empty() && cfg.chaos.grid.back() >= cfg.chaos.reference)
                fail("study.chaos", "'reference' must exceed every grid entry");
            e["chaos"] = {{"grid", cfg.chaos.grid}, {"reference", cfg.chaos.reference}};
        }
        if (st.contains("stability")) {
            const json& ss = need_obj(st, "stability", "study");
            expect_keys(ss, "study.stability", {"eps", "terminal_offset", "driver_offset"});
            cfg.stability.present = true;
            cfg.stability.eps = need_num_list(ss, "eps", "study.stability");
            cfg.stability.terminal_offset =
                need_vec(ss, "terminal_offset", "study.stability", cfg.y_dim);
            cfg.stability.driver_offset =
                ss.contains("driver_offset")
                    ? need_vec(ss, "driver_offset", "study.stability", cfg.y_dim)
                    : Point::Zero(cfg.y_dim).eval();
            e["stability"] = {{"eps", cfg.stability.eps},
                              {"terminal_offset", echo_vec(cfg.stability.terminal_offset)},
                              {"driver_offset", echo_vec(cfg.stability.driver_offset)}};
        }
        resolved["study"] = e;
    }

    if (doc.contains("decoupling")) {
        const json& dc = need_obj(doc, "decoupling", "config");
        expect_keys(dc, "decoupling",
                    {"lambda", "queries", "radii", "complementarity", "eps_h", "eps_mass"});
        cfg.decoupling.present = true;
        json e_lambda;
        cfg.decoupling.lambda = build_lambda(need_obj(dc, "lambda", "decoupling"), e_lambda);
        if (!dc.contains("queries") || !dc.at("queries").is_array() || dc.at("queries").empty())
            fail("decoupling", "'queries' must be a nonempty array");
        json e_queries = json::array();
        for (const auto& q : dc.at("queries")) {
            if (!q.is_object()) fail("decoupling.queries", "entries must be objects");
            expect_keys(q, "decoupling.queries", {"t", "x"});
            DecouplingQuery dq;
            dq.t = need_num(q, "t", "decoupling.queries");
            dq.x = need_num(q, "x", "decoupling.queries");
            cfg.decoupling.queries.push_back(dq);
            e_queries.push_back({{"t", dq.t}, {"x", dq.x}});
        }
        json e = {{"lambda", e_lambda}, {"queries", e_queries}};
        if (dc.contains("radii")) {
            const json& r = need_obj(dc, "radii", "decoupling");
            expect_keys(r, "decoupling.radii", {"dt", "dx", "dlambda"});
            cfg.decoupling.have_radii = true;
            cfg.decoupling.dt_radius = need_num(r, "dt", "decoupling.radii");
            cfg.decoupling.dx_radius = need_num(r, "dx", "decoupling.radii");
            cfg.decoupling.dlambda_radius = need_num(r, "dlambda", "decoupling.radii");
            e["radii"] = {{"dt", cfg.decoupling.dt_radius},
                          {"dx", cfg.decoupling.dx_radius},
                          {"dlambda", cfg.decoupling.dlambda_radius}};
        }
        if (dc.contains("complementarity")) {
            const json& cj = need_obj(dc, "complementarity", "decoupling");
            expect_keys(cj, "decoupling.complementarity", {"times", "states", "eps_h", "eps_mass"});
            cfg.decoupling.have_complementarity = true;
            cfg.decoupling.comp_times = need_num_list(cj, "times", "decoupling.complementarity");
            cfg.decoupling.comp_states = need_num_list(cj, "states", "decoupling.complementarity");
            cfg.decoupling.eps_h = opt_num(cj, "eps_h", "decoupling.complementarity", 1e-3);
            cfg.decoupling.eps_mass = opt_num(cj, "eps_mass", "decoupling.complementarity", 1e-8);
            e["complementarity"] = {{"times", cfg.decoupling.comp_times},
                                    {"states", cfg.decoupling.comp_states},
                                    {"eps_h", cfg.decoupling.eps_h},
                                    {"eps_mass", cfg.decoupling.eps_mass}};
        }
        resolved["decoupling"] = e;
    }

    {
        json o = doc.contains("output") ? doc.at("output") : json::object();
        if (!o.is_object()) throw ValidationError("output: must be an object");
        expect_keys(o, "output", {"directory", "formats"});
        if (o.contains("directory")) cfg.out_dir = need_str(o, "directory", "output");
        if (o.contains("formats")) {
            cfg.formats.clear();
            if (!o.at("formats").is_array()) fail("output", "'formats' must be an array");
            for (const auto& f : o.at("formats")) {
                if (!f.is_string()) fail("output", "'formats' must contain strings");
                std::string v = f.get<std::string>();
                if (v != "json" && v != "csv") fail("output", "unknown format '" + v + "'");
                cfg.formats.push_back(v);
            }
            if (cfg.formats.empty()) fail("output", "'formats' must not be empty");
        }
        resolved["output"] = {{"directory", cfg.out_dir}, {"formats", cfg.formats}};
    }

    cfg.resolved = std::move(resolved);
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open configuration file: " + path);
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const std::exception& e) {
        throw ValidationError(std::string("configuration is not valid JSON: ") + e.what());
    }
    return parse_config(doc);
}

std::uint64_t fnv1a64(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string fnv1a64_hex(const std::string& bytes) {
    static const char* digits = "0123456789abcdef";
    std::uint64_t h = fnv1a64(bytes);
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[h & 0xf];
        h >>= 4;
    }
    return out;
}

} // namespace mfr
