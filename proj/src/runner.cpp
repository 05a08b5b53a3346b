#include "mfr/runner.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>

#include <json.hpp>

#include "mfr/decoupling.hpp"
#include "mfr/diagnostics.hpp"
#include "mfr/errors.hpp"
#include "mfr/experiment_config.hpp"

namespace mfr {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr const char* kArtifactVersion = "1.0.0";

std::string fmt(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

// collects written files so the manifest can list their checksums
struct OutputDir {
    fs::path base;
    std::map<std::string, std::string> hashes;

    explicit OutputDir(const std::string& dir) : base(dir) {
        std::error_code ec;
        fs::create_directories(base, ec);
        if (ec) throw ValidationError("cannot create output directory: " + dir);
    }

    void write(const std::string& rel, const std::string& content) {
        fs::path p = base / rel;
        std::error_code ec;
        fs::create_directories(p.parent_path(), ec);
        std::ofstream out(p, std::ios::binary);
        if (!out) throw ValidationError("cannot write output file: " + p.string());
        out << content;
        hashes[rel] = fnv1a64_hex(content);
    }

    void finish(const std::string& command, const std::string& config_hash,
                std::uint64_t seed, double wall_seconds) {
        json manifest;
        manifest["artifact_version"] = kArtifactVersion;
        manifest["command"] = command;
        manifest["config_hash"] = config_hash;
        manifest["seed"] = static_cast<long long>(seed);
        manifest["wall_time_seconds"] = wall_seconds;
        json files = json::object();
        for (const auto& [name, hash] : hashes) files[name] = hash;
        manifest["files"] = files;
        fs::path p = base / "manifest.json";
        std::ofstream out(p, std::ios::binary);
        if (!out) throw ValidationError("cannot write output file: " + p.string());
        out << manifest.dump(2) << "\n";
    }
};

struct Timer {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
};

struct LoadedConfig {
    ExperimentConfig cfg;
    std::string config_hash;
    std::string out_dir;
};

LoadedConfig prepare(const RunOptions& opts, bool need_problem) {
    LoadedConfig lc{load_config(opts.config_path), "", ""};
    if (need_problem && !lc.cfg.problem_present)
        throw ValidationError("configuration needs a 'problem' block for this command");
    if (opts.has_seed) {
        lc.cfg.solver.seed = opts.seed;
        lc.cfg.resolved["solver"]["seed"] = static_cast<long long>(opts.seed);
    }
    lc.cfg.solver.threads = static_cast<unsigned>(opts.threads > 0 ? opts.threads : 0);
    lc.config_hash = fnv1a64_hex(lc.cfg.resolved.dump());
    lc.out_dir = opts.out_dir.empty() ? lc.cfg.out_dir : opts.out_dir;
    return lc;
}

bool wants(const ExperimentConfig& cfg, const std::string& format) {
    return std::find(cfg.formats.begin(), cfg.formats.end(), format) != cfg.formats.end();
}

json study_to_json(const StudyTable& t) {
    json rows = json::array();
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        json row;
        row[t.knob] = t.knob_values[r];
        for (std::size_t c = 0; c < t.columns.size(); ++c) row[t.columns[c]] = t.rows[r][c];
        rows.push_back(row);
    }
    return json{{"knob", t.knob},
                {"columns", t.columns},
                {"rows", rows},
                {"pass", t.pass},
                {"note", t.note}};
}

std::string study_to_csv(const StudyTable& t) {
    std::string out = t.knob;
    for (const auto& c : t.columns) out += "," + c;
    out += "\n";
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        out += fmt(t.knob_values[r]);
        for (double v : t.rows[r]) out += "," + fmt(v);
        out += "\n";
    }
    return out;
}

} // namespace

int cmd_solve(const RunOptions& opts) {
    Timer timer;
    LoadedConfig lc = prepare(opts, true);
    ExperimentConfig& cfg = lc.cfg;

    std::vector<Point> x0 = cfg.problem.x0_sampler(cfg.solver.particles, cfg.solver.seed);
    ParticleSolution sol = solve_penalized(cfg.problem.coeff, cfg.problem.driver,
                                           cfg.problem.terminal, cfg.problem.obstacle, x0,
                                           cfg.solver);
    DiagnosticsReport rep = constraint_metrics(sol, cfg.problem.obstacle, cfg.solver.threads);
    reflection_path(sol, cfg.problem.obstacle, cfg.solver.threads);

    OutputDir out(lc.out_dir);
    out.write("resolved_config.json", cfg.resolved.dump(2) + "\n");

    const int M = sol.steps;
    const int n = sol.y_dim;
    if (wants(cfg, "json")) {
        json summary;
        summary["command"] = "solve";
        summary["config_hash"] = lc.config_hash;
        summary["grid"] = {{"horizon", sol.grid.horizon}, {"steps", sol.grid.steps}};
        summary["particles"] = sol.particles;
        summary["penalty"] = cfg.solver.penalty;
        summary["seed"] = static_cast<long long>(cfg.solver.seed);
        json y0 = json::array(), y0s = json::array(), yT = json::array();
        for (int c = 0; c < n; ++c) {
            y0.push_back(rep.mean_y(0, c));
            y0s.push_back(rep.std_y(0, c));
            yT.push_back(rep.mean_y(M, c));
        }
        summary["y0_mean"] = y0;
        summary["y0_std"] = y0s;
        summary["y_terminal_mean"] = yT;
        summary["k_terminal_mean"] = rep.k_terminal_mean;
        summary["k_terminal_sq_mean"] = rep.k_terminal_sq_mean;
        summary["diagnostics"] = {{"sup_h_minus_sq", rep.sup_h_minus_sq},
                                  {"int_h_minus_sq", rep.int_h_minus_sq},
                                  {"skorokhod_defect", rep.skorokhod_defect},
                                  {"skorokhod_signed", rep.skorokhod_signed},
                                  {"sup_mean_y2", rep.sup_mean_y2},
                                  {"sup_mean_y4", rep.sup_mean_y4},
                                  {"int_mean_z2", rep.int_mean_z2}};
        summary["warnings"] = sol.warnings;
        out.write("summary.json", summary.dump(2) + "\n");
    }
    if (wants(cfg, "csv")) {
        std::string csv = "t";
        for (int c = 0; c < n; ++c) csv += ",mean_y_" + std::to_string(c);
        for (int c = 0; c < n; ++c) csv += ",std_y_" + std::to_string(c);
        csv += ",mean_k,sup_h_minus,mean_h_minus_sq,defect_partial\n";
        for (int k = 0; k <= M; ++k) {
            csv += fmt(rep.t[static_cast<std::size_t>(k)]);
            for (int c = 0; c < n; ++c) csv += "," + fmt(rep.mean_y(k, c));
            for (int c = 0; c < n; ++c) csv += "," + fmt(rep.std_y(k, c));
            csv += "," + fmt(rep.mean_k[static_cast<std::size_t>(k)]);
            csv += "," + fmt(rep.sup_h_minus[static_cast<std::size_t>(k)]);
            csv += "," + fmt(rep.mean_h_minus_sq[static_cast<std::size_t>(k)]);
            csv += "," + fmt(rep.defect_partial[static_cast<std::size_t>(k)]);
            csv += "\n";
        }
        out.write("series.csv", csv);

        auto two_col = [&](const char* name, auto value_at) {
            std::string s = std::string("t,") + name + "\n";
            for (int k = 0; k <= M; ++k)
                s += fmt(rep.t[static_cast<std::size_t>(k)]) + "," + fmt(value_at(k)) + "\n";
            return s;
        };
        out.write("plots/mean_y.csv", two_col("mean_y", [&](int k) { return rep.mean_y(k, 0); }));
        out.write("plots/mean_k.csv",
                  two_col("mean_k", [&](int k) { return rep.mean_k[static_cast<std::size_t>(k)]; }));
        out.write("plots/sup_h_minus.csv", two_col("sup_h_minus", [&](int k) {
                      return rep.sup_h_minus[static_cast<std::size_t>(k)];
                  }));
    }
    out.finish("solve", lc.config_hash, cfg.solver.seed, timer.seconds());
    return 0;
}

int cmd_check_assumptions(const RunOptions& opts) {
    Timer timer;
    LoadedConfig lc = prepare(opts, true);
    ExperimentConfig& cfg = lc.cfg;
    if (!cfg.check.present)
        throw ValidationError("configuration needs a 'check' block for check-assumptions");

    SampleDomain domain{cfg.check.box_lo, cfg.check.box_hi, cfg.check.min_atoms,
                        cfg.check.max_atoms};
    AssumptionReport report = check_assumptions(cfg.problem.obstacle, domain,
                                                cfg.check.samples, cfg.check.seed,
                                                cfg.check.tol);

    OutputDir out(lc.out_dir);
    out.write("resolved_config.json", cfg.resolved.dump(2) + "\n");
    json doc;
    doc["command"] = "check-assumptions";
    doc["config_hash"] = lc.config_hash;
    doc["all_pass"] = report.all_pass();
    json conds = json::array();
    for (const auto& c : report.conditions) {
        json w = json::object();
        for (const auto& [name, vals] : c.witness.items) w[name] = vals;
        conds.push_back({{"id", c.id},
                         {"status", c.status == ConditionStatus::pass
                                        ? "pass"
                                        : (c.status == ConditionStatus::fail ? "fail" : "skipped")},
                         {"margin", c.margin},
                         {"note", c.note},
                         {"witness", w}});
    }
    doc["conditions"] = conds;
    out.write("assumption_report.json", doc.dump(2) + "\n");
    out.finish("check-assumptions", lc.config_hash, cfg.check.seed, timer.seconds());
    return report.all_pass() ? 0 : 1;
}

int cmd_study(const RunOptions& opts, const std::string& kind) {
    Timer timer;
    LoadedConfig lc = prepare(opts, true);
    ExperimentConfig& cfg = lc.cfg;

    StudyTable table;
    if (kind == "penalty") {
        if (!cfg.penalty_study.present)
            throw ValidationError("configuration needs study.penalty for this study");
        table = penalty_rate_study(cfg.problem, cfg.solver, cfg.penalty_study.grid);
    } else if (kind == "chaos") {
        if (!cfg.chaos.present)
            throw ValidationError("configuration needs study.chaos for this study");
        table = chaos_study(cfg.problem, cfg.solver, cfg.chaos.grid, cfg.chaos.reference);
    } else if (kind == "stability") {
        if (!cfg.stability.present)
            throw ValidationError("configuration needs study.stability for this study");
        Perturbation pert{cfg.stability.terminal_offset, cfg.stability.driver_offset};
        table = stability_experiment(cfg.problem, cfg.solver, cfg.stability.eps, pert);
    } else {
        throw ValidationError("unknown study kind: " + kind +
                              " (expected penalty, chaos or stability)");
    }

    OutputDir out(lc.out_dir);
    out.write("resolved_config.json", cfg.resolved.dump(2) + "\n");
    if (wants(cfg, "json")) {
        json doc = study_to_json(table);
        doc["command"] = "study";
        doc["kind"] = kind;
        doc["config_hash"] = lc.config_hash;
        out.write("study_" + kind + ".json", doc.dump(2) + "\n");
    }
    if (wants(cfg, "csv")) out.write("study_" + kind + ".csv", study_to_csv(table));
    out.finish("study " + kind, lc.config_hash, cfg.solver.seed, timer.seconds());
    return table.pass ? 0 : 1;
}

int cmd_decoupling(const RunOptions& opts) {
    Timer timer;
    LoadedConfig lc = prepare(opts, true);
    ExperimentConfig& cfg = lc.cfg;
    if (!cfg.decoupling.present)
        throw ValidationError("configuration needs a 'decoupling' block for this command");

    MarkovProblem prob{cfg.problem.coeff, cfg.problem.driver, cfg.problem.terminal,
                       cfg.problem.obstacle, TimeGrid{cfg.horizon, cfg.solver.grid.steps}};
    const EmpiricalMeasure& lambda = *cfg.decoupling.lambda;

    bool all_ok = true;
    json doc;
    doc["command"] = "decoupling";
    doc["config_hash"] = lc.config_hash;

    std::string field_csv = "t,x,u,constraint_value,penalty_mass,low_confidence\n";
    json field_rows = json::array();
    for (const auto& q : cfg.decoupling.queries) {
        FieldQuery query{q.t, Point::Constant(1, q.x), lambda};
        FieldResult r = eval_u(prob, cfg.solver, query);
        field_csv += fmt(q.t) + "," + fmt(q.x) + "," + fmt(r.u) + "," +
                     fmt(r.constraint_value) + "," + fmt(r.penalty_mass) + "," +
                     (r.low_confidence ? "1" : "0") + "\n";
        field_rows.push_back({{"t", q.t},
                              {"x", q.x},
                              {"u", r.u},
                              {"constraint_value", r.constraint_value},
                              {"penalty_mass", r.penalty_mass},
                              {"low_confidence", r.low_confidence}});
    }
    doc["field"] = field_rows;

    OutputDir out(lc.out_dir);
    out.write("resolved_config.json", cfg.resolved.dump(2) + "\n");
    if (wants(cfg, "csv")) out.write("field.csv", field_csv);

    if (cfg.decoupling.have_radii) {
        const auto& q0 = cfg.decoupling.queries.front();
        FieldQuery base{q0.t, Point::Constant(1, q0.x), lambda};
        ContinuityReport crep =
            continuity_probe(prob, cfg.solver, base, cfg.decoupling.dt_radius,
                             cfg.decoupling.dx_radius, cfg.decoupling.dlambda_radius);
        if (!crep.pass) all_ok = false;
        json rows = json::array();
        std::string csv = "scale,modulus_t,modulus_x,modulus_lambda,modulus_max\n";
        for (const auto& r : crep.rows) {
            csv += fmt(r.scale) + "," + fmt(r.modulus_t) + "," + fmt(r.modulus_x) + "," +
                   fmt(r.modulus_lambda) + "," + fmt(r.modulus_max) + "\n";
            rows.push_back({{"scale", r.scale},
                            {"modulus_t", r.modulus_t},
                            {"modulus_x", r.modulus_x},
                            {"modulus_lambda", r.modulus_lambda},
                            {"modulus_max", r.modulus_max}});
        }
        doc["continuity"] = {{"u_base", crep.u_base}, {"rows", rows}, {"pass", crep.pass}};
        if (wants(cfg, "csv")) out.write("continuity.csv", csv);
    }

    if (cfg.decoupling.have_complementarity) {
        ComplementarityReport crep = complementarity_probe(
            prob, cfg.solver, lambda, cfg.decoupling.comp_times, cfg.decoupling.comp_states,
            cfg.decoupling.eps_h, cfg.decoupling.eps_mass);
        if (!crep.pass) all_ok = false;
        json rows = json::array();
        std::string csv = "t,x,u,h_value,penalty_mass,consistent\n";
        for (const auto& r : crep.rows) {
            csv += fmt(r.t) + "," + fmt(r.x) + "," + fmt(r.u) + "," + fmt(r.h_value) + "," +
                   fmt(r.penalty_mass) + "," + (r.consistent ? "1" : "0") + "\n";
            rows.push_back({{"t", r.t},
                            {"x", r.x},
                            {"u", r.u},
                            {"h_value", r.h_value},
                            {"penalty_mass", r.penalty_mass},
                            {"consistent", r.consistent}});
        }
        doc["complementarity"] = {{"rows", rows},
                                  {"eps_h", crep.eps_h},
                                  {"eps_mass", crep.eps_mass},
                                  {"pass", crep.pass}};
        if (wants(cfg, "csv")) out.write("complementarity.csv", csv);
    }

    doc["pass"] = all_ok;
    if (wants(cfg, "json")) out.write("decoupling.json", doc.dump(2) + "\n");
    out.finish("decoupling", lc.config_hash, cfg.solver.seed, timer.seconds());
    return all_ok ? 0 : 1;
}

} // namespace mfr
