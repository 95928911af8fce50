#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace chf {

/// Command line front end for the hybrid CHF pipeline.
///
/// Subcommands: synth, prepare, train, suite, report. Run configurations
/// are plain key=value files with [section] headers covering the dataset,
/// method, base model, scenario, seeds, hyperparameters, and output
/// directory; unknown keys or sections are rejected.
///
/// Seeds are either given explicitly or fanned out from one master seed:
///   split  = derive_seed(master, SeedStream::shuffle, 0)
///   train  = derive_seed(master, SeedStream::train, run_index)
///   sample = derive_seed(master, SeedStream::sampling, run_index)
/// with run_index 0 for a single training run and the suite position for
/// suite runs. Ensemble member i then trains with seed train + i.
///
/// Exit codes: 0 success, 1 file IO failure, 2 malformed config or CSV
/// layout, 3 invalid values, 4 training or run failure, 5 report over
/// missing runs. The environment variable CHF_HYBRID_OUT supplies the
/// default output directory. Commands only ever write below their output
/// directory; input files are never modified.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// argv wrapper over std::cout / std::cerr for main().
int run_cli(int argc, char** argv);

}  // namespace chf
