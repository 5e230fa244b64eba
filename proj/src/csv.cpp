#include "qfb/csv.hpp"

#include <fstream>
#include <sstream>

namespace qfb {

std::size_t CsvTable::column(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
        if (columns[i] == name) return i;
    throw Error(ErrorCode::parse, "csv: no column '" + name + "'");
}

std::vector<Real> CsvTable::column_values(const std::string& name) const {
    const std::size_t c = column(name);
    std::vector<Real> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(r[c]);
    return out;
}

const std::string* CsvTable::meta_value(const std::string& key) const {
    for (const auto& [k, v] : meta)
        if (k == key) return &v;
    return nullptr;
}

void write_csv(std::ostream& out, const CsvTable& t) {
    for (const auto& [k, v] : t.meta) out << "# " << k << " = " << v << '\n';
    for (std::size_t i = 0; i < t.columns.size(); ++i) out << (i ? "," : "") << t.columns[i];
    out << '\n';
    for (const auto& r : t.rows) {
        require(r.size() == t.columns.size(), ErrorCode::dimension_mismatch, "csv row width");
        for (std::size_t i = 0; i < r.size(); ++i) out << (i ? "," : "") << format_real(r[i]);
        out << '\n';
    }
    if (!t.fits.empty()) {
        out << "# fit,quantity";
        for (const auto& c : t.fit_columns) out << ',' << c;
        out << '\n';
        for (const auto& [label, vals] : t.fits) {
            out << "# fit," << label;
            for (Real v : vals) out << ',' << format_real(v);
            out << '\n';
        }
    }
}

std::string to_csv_text(const CsvTable& t) {
    std::ostringstream ss;
    write_csv(ss, t);
    return ss.str();
}

namespace {
std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream ss(s);
    while (std::getline(ss, cur, sep)) out.push_back(cur);
    if (!s.empty() && s.back() == sep) out.emplace_back();
    return out;
}

Real parse_real(const std::string& s, int line) {
    if (s == "nan") return std::numeric_limits<Real>::quiet_NaN();
    if (s == "inf") return std::numeric_limits<Real>::infinity();
    if (s == "-inf") return -std::numeric_limits<Real>::infinity();
    Real x = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), x);
    if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw Error(ErrorCode::parse, "csv line " + std::to_string(line) + ": bad number '" + s + "'");
    return x;
}
}  // namespace

CsvTable read_csv(std::istream& in) {
    CsvTable t;
    std::string line;
    int no = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line.rfind("# fit,", 0) == 0) {
            auto parts = split(line.substr(6), ',');
            if (parts.empty()) continue;
            if (parts[0] == "quantity") {
                t.fit_columns.assign(parts.begin() + 1, parts.end());
            } else {
                std::vector<Real> vals;
                for (std::size_t i = 1; i < parts.size(); ++i) vals.push_back(parse_real(parts[i], no));
                t.fits.emplace_back(parts[0], std::move(vals));
            }
            continue;
        }
        if (line[0] == '#') {
            const auto eq = line.find(" = ");
            if (eq != std::string::npos && line.size() > 2)
                t.meta.emplace_back(line.substr(2, eq - 2), line.substr(eq + 3));
            continue;
        }
        if (!have_header) {
            t.columns = split(line, ',');
            have_header = true;
            continue;
        }
        const auto parts = split(line, ',');
        if (parts.size() != t.columns.size())
            throw Error(ErrorCode::parse, "csv line " + std::to_string(no) + ": expected " +
                                              std::to_string(t.columns.size()) + " fields");
        std::vector<Real> row;
        row.reserve(parts.size());
        for (const auto& p : parts) row.push_back(parse_real(p, no));
        t.rows.push_back(std::move(row));
    }
    if (!have_header) throw Error(ErrorCode::parse, "csv: missing header row");
    return t;
}

CsvTable parse_csv_text(const std::string& text) {
    std::istringstream ss(text);
    return read_csv(ss);
}

void write_csv_file(const std::string& path, const CsvTable& t) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::io, "cannot write " + path);
    write_csv(out, t);
    if (!out) throw Error(ErrorCode::io, "write failed for " + path);
}

CsvTable read_csv_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::io, "cannot open " + path);
    return read_csv(in);
}

std::string csv_body(const std::string& text) {
    std::istringstream ss(text);
    std::string line, out;
    while (std::getline(ss, line))
        if (line.empty() || line[0] != '#') out += line + '\n';
    return out;
}

CsvTable trajectory_table(const TrajectoryRecord& rec) {
    CsvTable t;
    const Index nb = rec.occupations.empty() ? 0 : rec.occupations.front().size();
    t.columns = {"t", "d0"};
    for (Index j = 0; j < nb; ++j) t.columns.push_back("p" + std::to_string(j));
    for (Index j = 0; j < nb; ++j) t.columns.push_back("qhat" + std::to_string(j));
    t.columns.insert(t.columns.end(), {"u", "purity", "rank"});
    for (std::size_t s = 0; s < rec.size(); ++s) {
        std::vector<Real> r{rec.times[s], rec.d0[s]};
        for (Index j = 0; j < nb; ++j) r.push_back(rec.occupations[s](j));
        for (Index j = 0; j < nb; ++j) r.push_back(rec.q_hat[s][j]);
        r.insert(r.end(), {rec.u[s], rec.purity[s], static_cast<Real>(rec.rank[s])});
        t.rows.push_back(std::move(r));
    }
    return t;
}

CsvTable aggregate_table(const MonteCarloResult& mc, Real fit_start_fraction) {
    CsvTable t;
    t.columns = {"t", "d0_mean", "d0_q10", "d0_q90", "V_qsr_mean"};
    for (std::size_t s = 0; s < mc.times.size(); ++s)
        t.rows.push_back({mc.times[s], mc.d0_mean[s], mc.d0_q10[s], mc.d0_q90[s], mc.v_qsr_mean[s]});
    if (mc.times.empty()) return t;
    t.fit_columns = {"slope", "intercept", "t_start", "t_end", "r_squared", "n_points"};
    const Real t_end = mc.times.back();
    auto add_fit = [&](const std::string& label, const std::vector<Real>& ys) {
        try {
            const auto f = fit_exponent(mc.times, ys, fit_start_fraction * t_end, t_end);
            t.fits.push_back({label, {f.slope, f.intercept, f.t_start, f.t_end, f.r_squared,
                                      static_cast<Real>(f.n_points)}});
        } catch (const Error&) {
            const Real nan = std::numeric_limits<Real>::quiet_NaN();
            t.fits.push_back({label, {nan, nan, fit_start_fraction * t_end, t_end, nan, 0.0}});
        }
    };
    add_fit("d0_mean", mc.d0_mean);
    add_fit("V_qsr_mean", mc.v_qsr_mean);
    std::vector<Real> slopes;
    for (const auto& f : mc.d0_fits)
        if (f) slopes.push_back(f->slope);
    if (!slopes.empty()) {
        const Real nan = std::numeric_limits<Real>::quiet_NaN();
        for (auto [q, name] : {std::pair{0.1, "d0_slope_q10"}, std::pair{0.5, "d0_slope_q50"},
                               std::pair{0.9, "d0_slope_q90"}})
            t.fits.push_back({name, {quantile(slopes, q), nan, fit_start_fraction * t_end, t_end, nan,
                                     static_cast<Real>(slopes.size())}});
    }
    return t;
}

CsvTable deterministic_table(const DeterministicTrajectory& tr) {
    CsvTable t;
    const Index nb = tr.occupations.empty() ? 0 : tr.occupations.front().size();
    t.columns = {"t", "d0"};
    for (Index j = 0; j < nb; ++j) t.columns.push_back("p" + std::to_string(j));
    for (Index j = 0; j < nb; ++j) t.columns.push_back("qhat" + std::to_string(j));
    t.columns.insert(t.columns.end(), {"u", "purity"});
    for (std::size_t s = 0; s < tr.times.size(); ++s) {
        std::vector<Real> r{tr.times[s], tr.d0[s]};
        for (Index j = 0; j < nb; ++j) r.push_back(tr.occupations[s](j));
        for (Index j = 0; j < nb; ++j) r.push_back(tr.q[s](j));
        r.insert(r.end(), {tr.u[s], tr.purity[s]});
        t.rows.push_back(std::move(r));
    }
    return t;
}

}  // namespace qfb
