// config.hpp
// Experiment configuration: the sectioned key/value file format, its
// canonical emitter and hash, and the built-in three-level presets.

#pragma once

#include "qfb/engine.hpp"
#include "qfb/verifier.hpp"

#include <cstdint>
#include <string>

namespace qfb {

enum class Mode { simulate, verify, qsr, deterministic, bench };

const char* to_string(Mode m);
std::optional<Mode> mode_from_string(const std::string& s);

struct OutputConfig {
    std::string dir = "qfb_out";
    bool per_trajectory = true;
    Real limit_threshold = 0.99;
    Real fit_start_fraction = 0.2;
};

struct ExperimentConfig {
    std::string name = "experiment";
    SystemModel model;
    RMatrix gamma;
    Real clamp_eps = 1e-12;
    FeedbackLaw feedback;
    SimulationConfig sim;
    CMatrix rho0;
    RVector q0;
    std::vector<Schedule> controls;  // deterministic-mode v_k(t), one per channel
    std::vector<int> bench_dims{4, 8, 16, 32, 64};
    OutputConfig output;

    /// Reduced filter built from the channels' l-values; throws non-qnd or a
    /// C1 configuration error.
    ReducedFilterConfig reduced_filter() const;
    InitialConditions initial() const;
};

/// Parses the sectioned format. Errors carry a distinct code: parse,
/// missing-section, dimension-mismatch or configuration.
ExperimentConfig parse_config_text(const std::string& text, Mode mode,
                                   const std::string& source = "<config>");
ExperimentConfig parse_config(const std::string& path, Mode mode);

/// Canonical text; parse_config_text(emit_config(c)) reproduces c.
std::string emit_config(const ExperimentConfig& cfg);

/// FNV-1a of the canonical text with the output directory left out.
std::uint64_t config_hash(const ExperimentConfig& cfg);
std::string hash_hex(std::uint64_t h);

enum class Modulation { slow, fast };

/// Characteristic measurement time 1 / (eta_0 gamma_0) of the three-level preset.
Real preset_tau();
ExperimentConfig preset_three_level(Modulation mod, bool feedback_on);
/// Uncontrolled variant: block-diagonal perturbation, rho(0) = I/3,
/// 300 trajectories, horizon 40.
ExperimentConfig preset_three_level_qsr(Modulation mod);
/// "three-level[:slow|:fast][:nofeedback]"; `qsr` selects the QSR variant.
ExperimentConfig preset_from_spec(const std::string& spec, bool qsr = false);

}  // namespace qfb
