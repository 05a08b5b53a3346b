#pragma once

#include <cstdint>
#include <string>

namespace mfr {

struct RunOptions {
    std::string config_path;
    std::string out_dir;    // empty = take from the configuration
    int threads = 0;        // worker count, 0 = auto; never changes results
    bool has_seed = false;  // when set, overrides the configured seed
    std::uint64_t seed = 0;
};

// Each command returns the process exit code: 0 on success, 1 when a study
// or check reports failure. Validation and numerical problems are thrown as
// ValidationError / NumericalError.
int cmd_solve(const RunOptions& opts);
int cmd_check_assumptions(const RunOptions& opts);
int cmd_study(const RunOptions& opts, const std::string& kind);
int cmd_decoupling(const RunOptions& opts);

} // namespace mfr
