// commands.hpp
// Subcommand drivers behind the qfb executable.

#pragma once

#include "qfb/config.hpp"
#include "qfb/csv.hpp"

#include <iosfwd>
#include <optional>
#include <string>

namespace qfb {

enum ExitCode : int { exit_ok = 0, exit_config = 1, exit_verification = 2, exit_runtime = 3 };

struct CommandOptions {
    Mode mode = Mode::simulate;
    std::optional<std::string> config_path;
    std::optional<std::string> preset;
    std::optional<std::uint64_t> seed;
    std::optional<int> trajectories;
    std::optional<Real> dt;
    std::optional<Real> horizon;
    std::optional<std::string> out_dir;
    bool force = false;
    int workers = 0;
};

/// Config from --config or --preset (default three-level:slow) with the
/// command-line overrides applied.
ExperimentConfig load_experiment(const CommandOptions& opt);

/// Names of the checks that gate a run in `mode`.
std::vector<std::string> required_checks(Mode mode, const ExperimentConfig& cfg);

VerificationReport verify_experiment(const ExperimentConfig& cfg);

int cmd_verify(const ExperimentConfig& cfg, Mode gate, const std::string& out_dir, std::ostream& log);
int cmd_simulate(const ExperimentConfig& cfg, Mode mode, const std::string& out_dir, bool force,
                 int workers, std::ostream& log);
int cmd_deterministic(const ExperimentConfig& cfg, const std::string& out_dir, bool force, std::ostream& log);

struct BenchRow {
    int n = 0;
    Real full_us = 0;
    Real reduced_us = 0;
    Real ratio() const { return full_us / reduced_us; }
};

/// Synthetic QND model: n singleton blocks, diagonal L with distinct real
/// eigenvalues, random Hermitian H1, path-graph Gamma.
ExperimentConfig synthetic_qnd_model(int n, std::uint64_t seed);
std::vector<BenchRow> run_bench(const std::vector<int>& dims, std::uint64_t seed, Real min_seconds = 0.05);
CsvTable bench_table(const std::vector<BenchRow>& rows);
bool bench_ratio_increasing(const std::vector<BenchRow>& rows);
int cmd_bench(const ExperimentConfig& cfg, const std::string& out_dir, std::ostream& log);

/// Full dispatch with exit-code mapping of errors.
int run_command(const CommandOptions& opt, std::ostream& log, std::ostream& err);

}  // namespace qfb
