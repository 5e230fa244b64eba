#include "qfb/commands.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>

namespace qfb {

namespace fs = std::filesystem;

ExperimentConfig load_experiment(const CommandOptions& opt) {
    if (opt.config_path && opt.preset)
        throw Error(ErrorCode::configuration, "give --config or --preset, not both");
    ExperimentConfig cfg;
    if (opt.config_path) {
        cfg = parse_config(*opt.config_path, opt.mode);
        if (opt.mode == Mode::qsr) cfg.sim.feedback_on = false;
    } else {
        cfg = preset_from_spec(opt.preset.value_or("three-level:slow"), opt.mode == Mode::qsr);
    }
    if (opt.seed) cfg.sim.seed = *opt.seed;
    if (opt.trajectories) cfg.sim.n_trajectories = *opt.trajectories;
    if (opt.dt) cfg.sim.dt = *opt.dt;
    if (opt.horizon) cfg.sim.horizon = *opt.horizon;
    if (opt.out_dir) cfg.output.dir = *opt.out_dir;
    cfg.sim.validate();
    return cfg;
}

std::vector<std::string> required_checks(Mode mode, const ExperimentConfig& cfg) {
    switch (mode) {
        case Mode::qsr: return qsr_checks();
        case Mode::deterministic: return deterministic_checks();
        case Mode::bench: return {};
        case Mode::verify:
        case Mode::simulate:
            if (cfg.sim.feedback_on) return feedback_checks();
            return {"model", "schedules", "A1"};
    }
    return {};
}

VerificationReport verify_experiment(const ExperimentConfig& cfg) {
    const Real horizon = cfg.sim.horizon > 0.0 ? cfg.sim.horizon : cfg.sim.dt;
    return verify(cfg.model, cfg.gamma, cfg.feedback, horizon);
}

namespace {

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error(ErrorCode::io, "cannot create directory " + dir + ": " + ec.message());
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::io, "cannot write " + path);
    out << text;
}

std::vector<std::pair<std::string, std::string>> run_meta(const ExperimentConfig& cfg, Mode mode,
                                                          const VerificationReport& rep) {
    std::vector<std::pair<std::string, std::string>> m;
    m.emplace_back("name", cfg.name);
    m.emplace_back("mode", to_string(mode));
    m.emplace_back("config_hash", hash_hex(config_hash(cfg)));
    m.emplace_back("seed", std::to_string(cfg.sim.seed));
    m.emplace_back("dt", format_real(cfg.sim.dt));
    m.emplace_back("horizon", format_real(cfg.sim.horizon));
    m.emplace_back("trajectories", std::to_string(cfg.sim.n_trajectories));
    m.emplace_back("feedback", cfg.sim.feedback_on ? "true" : "false");
    m.emplace_back("fit_start_fraction", format_real(cfg.output.fit_start_fraction));
    m.emplace_back("limit_threshold", format_real(cfg.output.limit_threshold));
    for (const auto& [k, v] : rep.key_values()) m.emplace_back("verifier." + k, v);
    return m;
}

bool gate(const VerificationReport& rep, const std::vector<std::string>& checks, bool force, std::ostream& log) {
    const auto failed = rep.failed(checks);
    if (failed.empty()) return true;
    for (const auto& f : failed) {
        log << "check " << f << " failed";
        if (rep.has(f) && !rep.get(f).detail.empty()) log << ": " << rep.get(f).detail;
        log << '\n';
    }
    if (force) {
        log << "continuing because of --force\n";
        return true;
    }
    return false;
}

std::string zero_pad(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04zu", i);
    return buf;
}

}  // namespace

int cmd_verify(const ExperimentConfig& cfg, Mode gate_mode, const std::string& out_dir, std::ostream& log) {
    const auto rep = verify_experiment(cfg);
    const auto checks = required_checks(gate_mode, cfg);
    std::string text = "# qfb verification report\n# config_hash = " + hash_hex(config_hash(cfg)) + "\n";
    text += rep.to_text();
    if (!out_dir.empty()) {
        ensure_dir(out_dir);
        write_text((fs::path(out_dir) / "report.txt").string(), text);
    }
    log << text;
    for (const auto& w : rep.warnings) log << "warning: " << w << '\n';
    const auto failed = rep.failed(checks);
    for (const auto& f : failed) {
        log << "FAILED " << f;
        if (rep.has(f) && !rep.get(f).detail.empty()) log << ": " << rep.get(f).detail;
        log << '\n';
    }
    return failed.empty() ? exit_ok : exit_verification;
}

int cmd_simulate(const ExperimentConfig& cfg, Mode mode, const std::string& out_dir, bool force, int workers,
                 std::ostream& log) {
    const auto rep = verify_experiment(cfg);
    if (!gate(rep, required_checks(mode, cfg), force, log)) return exit_verification;

    SimulationConfig sim = cfg.sim;
    sim.n_workers = workers;
    sim.keep_records = cfg.output.per_trajectory;
    const auto filter = cfg.reduced_filter();
    const auto mc = run_monte_carlo(cfg.model, filter, cfg.feedback, sim, cfg.initial(), cfg.output.fit_start_fraction);

    ensure_dir(out_dir);
    const auto meta = run_meta(cfg, mode, rep);
    write_text((fs::path(out_dir) / "report.txt").string(), rep.to_text());
    write_text((fs::path(out_dir) / "config.cfg").string(), emit_config(cfg));

    CsvTable agg = aggregate_table(mc, cfg.output.fit_start_fraction);
    agg.meta = meta;
    agg.meta.emplace_back("completed", std::to_string(mc.completed_indices.size()));
    agg.meta.emplace_back("aborted", std::to_string(mc.n_aborted));
    agg.meta.emplace_back("plant_corrections_over_tol", std::to_string(mc.totals.plant_corrections_over_tol));
    agg.meta.emplace_back("filter_corrections_over_tol", std::to_string(mc.totals.filter_corrections_over_tol));
    agg.meta.emplace_back("total_steps", std::to_string(mc.totals.steps));
    agg.meta.emplace_back("state_failures", std::to_string(mc.totals.state_failures));
    agg.meta.emplace_back("simplex_failures", std::to_string(mc.totals.simplex_failures));

    if (mode == Mode::qsr && !mc.final_occupations.empty()) {
        const Index nb = mc.final_occupations.front().size();
        std::vector<long> counts(static_cast<std::size_t>(nb), 0);
        long classified = 0;
        for (const auto& p : mc.final_occupations)
            if (auto j = classify_limit(p, cfg.output.limit_threshold)) {
                ++counts[*j];
                ++classified;
            }
        const RVector expect = occupations(cfg.rho0, cfg.model.decomposition);
        CsvTable lim;
        lim.meta = meta;
        lim.columns = {"block", "count", "frequency", "expected", "binomial_sigma"};
        const Real n = static_cast<Real>(mc.final_occupations.size());
        for (Index j = 0; j < nb; ++j) {
            const Real pj = expect(j);
            lim.rows.push_back({static_cast<Real>(j), static_cast<Real>(counts[static_cast<std::size_t>(j)]),
                                counts[static_cast<std::size_t>(j)] / n, pj, std::sqrt(pj * (1.0 - pj) / n)});
        }
        lim.meta.emplace_back("classified_fraction", format_real(classified / n));
        write_csv_file((fs::path(out_dir) / "limits.csv").string(), lim);
        agg.meta.emplace_back("classified_fraction", format_real(classified / n));
        log << "classified " << classified << " of " << mc.final_occupations.size() << " trajectories\n";
    }
    write_csv_file((fs::path(out_dir) / "aggregate.csv").string(), agg);

    if (cfg.output.per_trajectory) {
        const auto tdir = fs::path(out_dir) / "trajectories";
        ensure_dir(tdir.string());
        for (std::size_t i = 0; i < mc.records.size(); ++i) {
            if (mc.records[i].diagnostics.aborted) continue;
            CsvTable t = trajectory_table(mc.records[i]);
            t.meta = {{"config_hash", hash_hex(config_hash(cfg))},
                      {"seed", std::to_string(cfg.sim.seed)},
                      {"trajectory", std::to_string(i)}};
            write_csv_file((tdir / ("traj_" + zero_pad(i) + ".csv")).string(), t);
        }
    }

    for (const auto& f : agg.fits)
        if (f.first == "d0_mean" || f.first == "V_qsr_mean")
            log << "fit " << f.first << " slope = " << format_real(f.second[0]) << '\n';
    if (!mc.d0_mean.empty()) log << "final d0_mean = " << format_real(mc.d0_mean.back()) << '\n';
    if (mc.n_aborted > 0) {
        for (const auto& m : mc.abort_messages) log << "aborted " << m << '\n';
        return exit_runtime;
    }
    return exit_ok;
}

int cmd_deterministic(const ExperimentConfig& cfg, const std::string& out_dir, bool force, std::ostream& log) {
    const auto rep = verify_experiment(cfg);
    if (!gate(rep, required_checks(Mode::deterministic, cfg), force, log)) return exit_verification;
    DeterministicConfig dc;
    dc.dt = cfg.sim.dt;
    dc.horizon = cfg.sim.horizon;
    dc.feedback_on = cfg.sim.feedback_on;
    dc.enable_perturbation = cfg.sim.enable_perturbation;
    dc.record_stride = cfg.sim.record_stride;
    const auto tr = run_deterministic(cfg.model, cfg.reduced_filter(), cfg.feedback, cfg.controls,
                                      SimplexVector(cfg.q0), DensityMatrix::checked(cfg.rho0), dc);
    ensure_dir(out_dir);
    CsvTable t = deterministic_table(tr);
    t.meta = run_meta(cfg, Mode::deterministic, rep);
    t.meta.emplace_back("max_trace_defect", format_real(tr.max_trace_defect));
    t.meta.emplace_back("max_simplex_defect", format_real(tr.max_simplex_defect));
    write_csv_file((fs::path(out_dir) / "deterministic.csv").string(), t);
    log << "final d0 = " << format_real(tr.d0.back()) << '\n';
    return exit_ok;
}

int cmd_bench(const ExperimentConfig& cfg, const std::string& out_dir, std::ostream& log) {
    const auto rows = run_bench(cfg.bench_dims, cfg.sim.seed);
    CsvTable t = bench_table(rows);
    ensure_dir(out_dir);
    write_csv_file((fs::path(out_dir) / "bench.csv").string(), t);
    log << "N,full_us,reduced_us,ratio\n";
    for (const auto& r : rows)
        log << r.n << ',' << format_real(r.full_us) << ',' << format_real(r.reduced_us) << ','
            << format_real(r.ratio()) << '\n';
    const bool ok = bench_ratio_increasing(rows);
    log << (ok ? "ratio increases with N\n" : "ratio does not increase with N\n");
    return ok ? exit_ok : exit_runtime;
}

int run_command(const CommandOptions& opt, std::ostream& log, std::ostream& err) {
    ExperimentConfig cfg;
    try {
        cfg = load_experiment(opt);
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return exit_config;
    }
    const std::string out = cfg.output.dir;
    try {
        switch (opt.mode) {
            case Mode::verify: return cmd_verify(cfg, Mode::verify, out, log);
            case Mode::simulate: return cmd_simulate(cfg, Mode::simulate, out, opt.force, opt.workers, log);
            case Mode::qsr: return cmd_simulate(cfg, Mode::qsr, out, opt.force, opt.workers, log);
            case Mode::deterministic: return cmd_deterministic(cfg, out, opt.force, log);
            case Mode::bench: return cmd_bench(cfg, out, log);
        }
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        switch (e.code()) {
            case ErrorCode::configuration:
            case ErrorCode::parse:
            case ErrorCode::missing_section:
            case ErrorCode::dimension_mismatch:
            case ErrorCode::non_qnd:
            case ErrorCode::invalid_decomposition:
            case ErrorCode::index_out_of_range: return exit_config;
            default: return exit_runtime;
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return exit_runtime;
    }
    return exit_runtime;
}

}  // namespace qfb
