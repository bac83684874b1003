#pragma once

#include <iosfwd>
#include <string>

#include "aqs/scenario.hpp"

namespace aqs {

struct RunOptions {
    std::string out_dir;        // overrides the scenario's output_dir when non-empty
    bool reproducible = false;  // omit wall-clock metadata so reruns are byte-identical
};

/// Executes one subcommand against a loaded scenario. Artifacts land in
/// <out>/<command>/ next to a manifest.json listing exactly those files, so
/// every artifact belongs to one manifest. Console output (the canonical echo
/// for `validate`, progress summaries otherwise) goes to `out`.
///
/// Returns 0, or 4 when an iterative step failed to converge but the artifacts
/// were still written. Input problems throw ValidationError, execution
/// problems RuntimeFailure; the CLI maps those to exit codes 2 and 3.
int run_command(const LoadedScenario& loaded, const std::string& command, const RunOptions& opts,
                std::ostream& out);

const std::vector<std::string>& known_commands();

}  // namespace aqs
