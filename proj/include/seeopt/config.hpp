#pragma once

#include <string>
#include <vector>

#include "seeopt/common.hpp"
#include "seeopt/gelfand.hpp"
#include "seeopt/noise.hpp"
#include "seeopt/optimizer.hpp"
#include "seeopt/problem.hpp"
#include "seeopt/verify.hpp"

namespace seeopt {

// Parsed and validated run description. The problem is fully built; the raw
// LQ data is retained alongside it because the verification battery and the
// deterministic oracle need the coefficients, not just the callbacks.
struct RunConfig {
    GalerkinSpace space;
    OperatorPair pair;
    double alpha = 0.0;
    double lambda_shift = 1.0;
    TimeGrid grid;
    MarkSpace marks;
    int n_paths = 0;
    std::uint64_t seed = 0;

    std::string family;  // "lq" or "bilinear"
    ProblemSpec problem;
    LqData lq;           // populated when family == "lq"

    ControlSet box;
    ControlProcess initial;
    OptimizerConfig optimizer;

    VerifySetup verify;  // battery view; requires the lq family
    std::vector<std::string> verify_only;
};

// Parses schema-1 JSON with blocks space, operators, noise, problem, control,
// optimizer, verify. Unknown keys inside a known block are rejected so typos
// fail loudly. All errors carry the offending block and field and throw
// ConfigError; malformed JSON reports the parser's line diagnostics.
RunConfig parse_config(const std::string& text, const std::string& origin);
RunConfig load_config(const std::string& path);

}  // namespace seeopt
