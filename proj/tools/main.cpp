#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "mfr/errors.hpp"
#include "mfr/runner.hpp"

namespace {

void print_error(const std::string& kind, const std::string& message) {
    nlohmann::json err = {{"error", {{"kind", kind}, {"message", message}}}};
    std::cerr << err.dump() << "\n";
}

struct CommonOpts {
    std::string config;
    std::string out;
    int threads = 0;
    long long seed = -1;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config, "configuration file (JSON)")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("--out", opts.out, "output directory (overrides the configuration)");
    cmd->add_option("--threads", opts.threads,
                    "worker count, 0 = auto; results do not depend on it")
        ->check(CLI::NonNegativeNumber);
    cmd->add_option("--seed", opts.seed, "seed override")->check(CLI::NonNegativeNumber);
}

mfr::RunOptions to_run_options(const CommonOpts& o) {
    mfr::RunOptions r;
    r.config_path = o.config;
    r.out_dir = o.out;
    r.threads = o.threads;
    if (o.seed >= 0) {
        r.has_seed = true;
        r.seed = static_cast<std::uint64_t>(o.seed);
    }
    return r;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"penalized particle solver for mean-field reflected backward equations"};
    app.require_subcommand(1);

    CommonOpts solve_opts, check_opts, study_opts, dec_opts;
    std::string study_kind;

    CLI::App* solve = app.add_subcommand("solve", "run the particle solver");
    add_common(solve, solve_opts);

    CLI::App* check = app.add_subcommand("check-assumptions",
                                         "falsify the standing conditions on the obstacle");
    add_common(check, check_opts);

    CLI::App* study = app.add_subcommand("study", "run a convergence or stability study");
    study->add_option("kind", study_kind, "penalty | chaos | stability")->required();
    add_common(study, study_opts);

    CLI::App* dec = app.add_subcommand("decoupling", "evaluate the decoupling field");
    add_common(dec, dec_opts);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e); // --help
        print_error("validation", e.what());
        return 2;
    }

    try {
        if (solve->parsed()) return mfr::cmd_solve(to_run_options(solve_opts));
        if (check->parsed()) return mfr::cmd_check_assumptions(to_run_options(check_opts));
        if (study->parsed()) return mfr::cmd_study(to_run_options(study_opts), study_kind);
        if (dec->parsed()) return mfr::cmd_decoupling(to_run_options(dec_opts));
        print_error("validation", "no command given");
        return 2;
    } catch (const mfr::ValidationError& e) {
        print_error("validation", e.what());
        return 2;
    } catch (const mfr::NumericalError& e) {
        print_error("numerical", e.what());
        return 3;
    } catch (const std::exception& e) {
        print_error("internal", e.what());
        return 3;
    }
}
