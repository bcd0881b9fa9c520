#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "seeopt/forward.hpp"
#include "seeopt/optimizer.hpp"
#include "seeopt/verify.hpp"

namespace seeopt {

// Run record: what was run, with which inputs, and which files it produced.
// Every artifact a command writes appears in exactly one manifest under a
// stable role name; re-running the snapshot with the same seed reproduces the
// numeric artifacts byte for byte (the manifest itself carries the timestamp).
struct RunManifest {
    std::string command;
    std::string version;
    std::string created;  // ISO 8601 UTC
    std::uint64_t seed = 0;
    int n_paths = 0;
    int n_steps = 0;
    double horizon = 0.0;
    nlohmann::json config;                        // full config snapshot
    std::map<std::string, std::string> artifacts;  // role -> file name in out_dir
};

void write_manifest(const std::string& path, const RunManifest& manifest);
RunManifest read_manifest(const std::string& path);

// Numeric CSV writers. Every floating-point cell is printed with %.17g so a
// reread recovers the exact double; files end with a trailing newline.
void write_state_csv(const std::string& path, const StatePath& states);
void write_control_csv(const std::string& path, const ControlProcess& control,
                       const TimeGrid& grid);
void write_trace_csv(const std::string& inner_path, const std::string& outer_path,
                     const OptimizationTrace& trace);
void write_adjoint_csv(const std::string& path, const AdjointTriple& triple);

void write_cost_json(const std::string& path, const CostReport& cost);
void write_checks_json(const std::string& path, const std::vector<CheckResult>& results);
std::string checks_text(const std::vector<CheckResult>& results);

// Minimal CSV reader for the report command: a header row plus numeric rows.
struct CsvTable {
    std::vector<std::string> header;
    MatrixXd rows;

    int column(const std::string& name) const;  // -1 when absent
};

CsvTable read_csv(const std::string& path);

std::string iso_timestamp_utc();

}  // namespace seeopt
