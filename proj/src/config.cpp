#include "qfb/config.hpp"

#include <fstream>
#include <map>
#include <sstream>

namespace qfb {

const char* to_string(Mode m) {
    switch (m) {
        case Mode::simulate: return "simulate";
        case Mode::verify: return "verify";
        case Mode::qsr: return "qsr";
        case Mode::deterministic: return "deterministic";
        case Mode::bench: return "bench";
    }
    return "simulate";
}

std::optional<Mode> mode_from_string(const std::string& s) {
    for (Mode m : {Mode::simulate, Mode::verify, Mode::qsr, Mode::deterministic, Mode::bench})
        if (s == to_string(m)) return m;
    return std::nullopt;
}

ReducedFilterConfig ExperimentConfig::reduced_filter() const {
    std::vector<std::vector<Complex>> ls;
    std::vector<Real> th;
    for (const auto& ch : model.channels) {
        ls.push_back(ch.l_values ? *ch.l_values : extract_l_values(ch.L, model.decomposition));
        th.push_back(ch.theta_hat());
    }
    require(gamma.rows() == static_cast<Index>(model.decomposition.num_blocks()),
            ErrorCode::dimension_mismatch, "Gamma must be (d+1)x(d+1)");
    return make_reduced_filter_config(gamma, ls, th, clamp_eps);
}

InitialConditions ExperimentConfig::initial() const {
    return {DensityMatrix::checked(rho0), SimplexVector(q0), std::nullopt};
}

// ---------------------------------------------------------------------------
// Value grammar: number | "string" | true/false | [v, ...] | {key = v, ...}
// ---------------------------------------------------------------------------

namespace {

struct Value {
    enum class Type { number, string, boolean, array, table } type = Type::number;
    double num = 0;
    std::string str;
    bool flag = false;
    std::vector<Value> arr;
    std::vector<std::pair<std::string, Value>> tbl;
};

struct Entry {
    Value value;
    int line = 0;
    bool used = false;
};

struct Section {
    std::string name;
    int line = 0;
    std::map<std::string, Entry> entries;
    std::vector<std::string> order;
};

class ValueParser {
public:
    ValueParser(const std::string& text, std::string where) : s_(text), where_(std::move(where)) {}

    Value parse_all() {
        Value v = parse();
        skip_ws();
        if (i_ != s_.size()) fail("trailing characters");
        return v;
    }

private:
    [[noreturn]] void fail(const std::string& what) const {
        throw Error(ErrorCode::parse, where_ + ": " + what);
    }
    void skip_ws() {
        while (i_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[i_]))) ++i_;
    }
    Value parse() {
        skip_ws();
        if (i_ >= s_.size()) fail("missing value");
        const char c = s_[i_];
        if (c == '[') return parse_array();
        if (c == '{') return parse_table();
        if (c == '"') {
            Value v;
            v.type = Value::Type::string;
            v.str = parse_string();
            return v;
        }
        if (s_.compare(i_, 4, "true") == 0) {
            i_ += 4;
            Value v;
            v.type = Value::Type::boolean;
            v.flag = true;
            return v;
        }
        if (s_.compare(i_, 5, "false") == 0) {
            i_ += 5;
            Value v;
            v.type = Value::Type::boolean;
            return v;
        }
        return parse_number();
    }
    std::string parse_string() {
        ++i_;
        std::string out;
        while (i_ < s_.size() && s_[i_] != '"') out += s_[i_++];
        if (i_ >= s_.size()) fail("unterminated string");
        ++i_;
        return out;
    }
    Value parse_number() {
        const std::size_t start = i_;
        while (i_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[i_])) || s_[i_] == '.' ||
                                  s_[i_] == '-' || s_[i_] == '+'))
            ++i_;
        const std::string tok = s_.substr(start, i_ - start);
        Value v;
        if (tok == "nan") v.num = std::numeric_limits<double>::quiet_NaN();
        else if (tok == "inf") v.num = std::numeric_limits<double>::infinity();
        else if (tok == "-inf") v.num = -std::numeric_limits<double>::infinity();
        else {
            const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v.num);
            if (tok.empty() || res.ec != std::errc() || res.ptr != tok.data() + tok.size())
                fail("invalid number '" + tok + "'");
        }
        return v;
    }
    Value parse_array() {
        ++i_;
        Value v;
        v.type = Value::Type::array;
        skip_ws();
        if (i_ < s_.size() && s_[i_] == ']') {
            ++i_;
            return v;
        }
        while (true) {
            v.arr.push_back(parse());
            skip_ws();
            if (i_ >= s_.size()) fail("unterminated array");
            if (s_[i_] == ',') {
                ++i_;
                continue;
            }
            if (s_[i_] == ']') {
                ++i_;
                return v;
            }
            fail("expected ',' or ']'");
        }
    }
    Value parse_table() {
        ++i_;
        Value v;
        v.type = Value::Type::table;
        skip_ws();
        if (i_ < s_.size() && s_[i_] == '}') {
            ++i_;
            return v;
        }
        while (true) {
            skip_ws();
            const std::size_t start = i_;
            while (i_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[i_])) || s_[i_] == '_')) ++i_;
            const std::string key = s_.substr(start, i_ - start);
            if (key.empty()) fail("expected key in inline table");
            skip_ws();
            if (i_ >= s_.size() || s_[i_] != '=') fail("expected '=' after '" + key + "'");
            ++i_;
            v.tbl.emplace_back(key, parse());
            skip_ws();
            if (i_ >= s_.size()) fail("unterminated inline table");
            if (s_[i_] == ',') {
                ++i_;
                continue;
            }
            if (s_[i_] == '}') {
                ++i_;
                return v;
            }
            fail("expected ',' or '}'");
        }
    }

    const std::string& s_;
    std::string where_;
    std::size_t i_ = 0;
};

std::string strip_comment(const std::string& line) {
    bool in_str = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '"') in_str = !in_str;
        if (line[i] == '#' && !in_str) return line.substr(0, i);
    }
    return line;
}

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

int bracket_depth(const std::string& s) {
    int d = 0;
    bool in_str = false;
    for (char c : s) {
        if (c == '"') in_str = !in_str;
        if (in_str) continue;
        if (c == '[' || c == '{') ++d;
        if (c == ']' || c == '}') --d;
    }
    return d;
}

class Document {
public:
    Document(const std::string& text, std::string source) : source_(std::move(source)) {
        std::istringstream in(text);
        std::string raw;
        int line_no = 0;
        Section* cur = nullptr;
        while (std::getline(in, raw)) {
            ++line_no;
            std::string line = trim(strip_comment(raw));
            if (line.empty()) continue;
            if (line.front() == '[' && line.back() == ']' && line.find('=') == std::string::npos) {
                const std::string name = trim(line.substr(1, line.size() - 2));
                if (name.empty()) fail(line_no, "", "empty section name");
                if (sections_.count(name)) fail(line_no, name, "duplicate section");
                sections_[name] = Section{name, line_no, {}, {}};
                order_.push_back(name);
                cur = &sections_[name];
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string::npos) fail(line_no, cur ? cur->name : "", "expected key = value");
            if (!cur) fail(line_no, "", "key outside of any section");
            const std::string key = trim(line.substr(0, eq));
            std::string value = trim(line.substr(eq + 1));
            const int start_line = line_no;
            while (bracket_depth(value) > 0 && std::getline(in, raw)) {
                ++line_no;
                value += " " + trim(strip_comment(raw));
            }
            if (bracket_depth(value) != 0) fail(start_line, cur->name, "unbalanced brackets for '" + key + "'");
            if (key.empty()) fail(start_line, cur->name, "empty key");
            if (cur->entries.count(key)) fail(start_line, cur->name, "duplicate key '" + key + "'");
            ValueParser vp(value, where(start_line, cur->name));
            cur->entries[key] = Entry{vp.parse_all(), start_line, false};
            cur->order.push_back(key);
        }
    }

    std::string where(int line, const std::string& section) const {
        return source_ + ":" + std::to_string(line) + (section.empty() ? "" : " [" + section + "]");
    }
    [[noreturn]] void fail(int line, const std::string& section, const std::string& what) const {
        throw Error(ErrorCode::parse, where(line, section) + ": " + what);
    }

    bool has(const std::string& name) const { return sections_.count(name) > 0; }
    Section* find(const std::string& name) {
        auto it = sections_.find(name);
        return it == sections_.end() ? nullptr : &it->second;
    }
    Section& require_section(const std::string& name) {
        auto* s = find(name);
        if (!s) throw Error(ErrorCode::missing_section, source_ + ": missing section [" + name + "]");
        return *s;
    }
    std::vector<std::string> with_prefix(const std::string& prefix) const {
        std::vector<std::string> out;
        for (const auto& n : order_)
            if (n.rfind(prefix, 0) == 0) out.push_back(n);
        return out;
    }
    const std::vector<std::string>& order() const { return order_; }

    void check_all_used() const {
        for (const auto& [n, s] : sections_)
            for (const auto& [k, e] : s.entries)
                if (!e.used) fail(e.line, n, "unknown key '" + k + "'");
    }

private:
    std::string source_;
    std::map<std::string, Section> sections_;
    std::vector<std::string> order_;
};

// Typed access with positioned errors ----------------------------------------

class Reader {
public:
    Reader(Document& doc, Section& sec) : doc_(doc), sec_(sec) {}

    bool has(const std::string& key) const { return sec_.entries.count(key) > 0; }

    const Value& get(const std::string& key) {
        auto it = sec_.entries.find(key);
        if (it == sec_.entries.end())
            throw Error(ErrorCode::parse, doc_.where(sec_.line, sec_.name) + ": missing key '" + key + "'");
        it->second.used = true;
        line_ = it->second.line;
        return it->second.value;
    }
    [[noreturn]] void fail(const std::string& what, ErrorCode code = ErrorCode::parse) const {
        throw Error(code, doc_.where(line_ ? line_ : sec_.line, sec_.name) + ": " + what);
    }

    Real number(const std::string& key) {
        const Value& v = get(key);
        if (v.type != Value::Type::number) fail("'" + key + "' must be a number");
        return v.num;
    }
    Real number(const std::string& key, Real dflt) { return has(key) ? number(key) : dflt; }
    long integer(const std::string& key) {
        const Real x = number(key);
        if (x != std::floor(x) || std::abs(x) > 9.007199254740992e15) fail("'" + key + "' must be an integer");
        return static_cast<long>(x);
    }
    long integer(const std::string& key, long dflt) { return has(key) ? integer(key) : dflt; }
    bool boolean(const std::string& key, bool dflt) {
        if (!has(key)) return dflt;
        const Value& v = get(key);
        if (v.type != Value::Type::boolean) fail("'" + key + "' must be true or false");
        return v.flag;
    }
    std::string string(const std::string& key, const std::string& dflt) {
        if (!has(key)) return dflt;
        const Value& v = get(key);
        if (v.type != Value::Type::string) fail("'" + key + "' must be a string");
        return v.str;
    }

    std::vector<Real> numbers(const Value& v, const std::string& key) {
        if (v.type != Value::Type::array) fail("'" + key + "' must be an array of numbers");
        std::vector<Real> out;
        for (const auto& x : v.arr) {
            if (x.type != Value::Type::number) fail("'" + key + "' must be an array of numbers");
            out.push_back(x.num);
        }
        return out;
    }
    std::vector<Real> numbers(const std::string& key) { return numbers(get(key), key); }

    Complex pair(const Value& v, const std::string& key) {
        const auto xs = numbers(v, key);
        if (xs.size() != 2) fail("'" + key + "' entries must be [re, im] pairs");
        return {xs[0], xs[1]};
    }

    CMatrix cmatrix(const std::string& key, Index n) {
        const Value& v = get(key);
        if (v.type != Value::Type::array || v.arr.empty()) fail("'" + key + "' must be a matrix");
        std::vector<Complex> flat;
        const Value& first = v.arr.front();
        const bool nested = first.type == Value::Type::array && !first.arr.empty() &&
                            first.arr.front().type == Value::Type::array;
        if (nested) {
            if (static_cast<Index>(v.arr.size()) != n)
                fail("'" + key + "' has " + std::to_string(v.arr.size()) + " rows, expected " + std::to_string(n),
                     ErrorCode::dimension_mismatch);
            for (const auto& row : v.arr) {
                if (row.type != Value::Type::array || static_cast<Index>(row.arr.size()) != n)
                    fail("'" + key + "' rows must have " + std::to_string(n) + " entries", ErrorCode::dimension_mismatch);
                for (const auto& e : row.arr) flat.push_back(pair(e, key));
            }
        } else {
            for (const auto& e : v.arr) flat.push_back(pair(e, key));
            if (static_cast<Index>(flat.size()) != n * n)
                fail("'" + key + "' has " + std::to_string(flat.size()) + " entries, expected " + std::to_string(n * n),
                     ErrorCode::dimension_mismatch);
        }
        CMatrix m(n, n);
        for (Index i = 0; i < n; ++i)
            for (Index j = 0; j < n; ++j) m(i, j) = flat[static_cast<std::size_t>(i * n + j)];
        return m;
    }

    RMatrix rmatrix(const std::string& key, Index n) {
        const Value& v = get(key);
        if (v.type != Value::Type::array || v.arr.empty()) fail("'" + key + "' must be a matrix");
        std::vector<Real> flat;
        if (v.arr.front().type == Value::Type::array) {
            if (static_cast<Index>(v.arr.size()) != n)
                fail("'" + key + "' has " + std::to_string(v.arr.size()) + " rows, expected " + std::to_string(n),
                     ErrorCode::dimension_mismatch);
            for (const auto& row : v.arr) {
                const auto xs = numbers(row, key);
                if (static_cast<Index>(xs.size()) != n)
                    fail("'" + key + "' rows must have " + std::to_string(n) + " entries", ErrorCode::dimension_mismatch);
                flat.insert(flat.end(), xs.begin(), xs.end());
            }
        } else {
            flat = numbers(v, key);
            if (static_cast<Index>(flat.size()) != n * n)
                fail("'" + key + "' has " + std::to_string(flat.size()) + " entries, expected " + std::to_string(n * n),
                     ErrorCode::dimension_mismatch);
        }
        RMatrix m(n, n);
        for (Index i = 0; i < n; ++i)
            for (Index j = 0; j < n; ++j) m(i, j) = flat[static_cast<std::size_t>(i * n + j)];
        return m;
    }

    Schedule schedule(const Value& v, const std::string& key) {
        if (v.type == Value::Type::number) return Schedule::constant(v.num);
        if (v.type != Value::Type::table) fail("'" + key + "' must be a number or a schedule table");
        Schedule s;
        bool have_kind = false;
        for (const auto& [k, x] : v.tbl) {
            if (k == "kind") {
                if (x.type != Value::Type::string) fail("schedule kind must be a string");
                const auto kind = schedule_kind_from_string(x.str);
                if (!kind) fail("unknown schedule kind '" + x.str + "'");
                s.kind = *kind;
                have_kind = true;
                continue;
            }
            if (x.type != Value::Type::number) fail("schedule field '" + k + "' must be a number");
            if (k == "base") s.base = x.num;
            else if (k == "rel_amplitude") s.rel_amplitude = x.num;
            else if (k == "period") s.period = x.num;
            else if (k == "phase") s.phase = x.num;
            else if (k == "drift_rate") s.drift_rate = x.num;
            else fail("unknown schedule field '" + k + "'");
        }
        if (!have_kind) fail("schedule '" + key + "' needs a kind");
        if (!s.is_constant() && !(s.period > 0.0)) fail("schedule '" + key + "' needs period > 0", ErrorCode::configuration);
        return s;
    }
    Schedule schedule(const std::string& key) { return schedule(get(key), key); }

private:
    Document& doc_;
    Section& sec_;
    int line_ = 0;
};

/// Sections named prefix + integer, sorted by index; rejects gaps.
std::vector<std::string> indexed_sections(Document& doc, const std::string& prefix) {
    std::vector<std::pair<long, std::string>> found;
    for (const auto& n : doc.with_prefix(prefix)) {
        const std::string tail = n.substr(prefix.size());
        if (tail.find('.') != std::string::npos) continue;
        char* end = nullptr;
        const long idx = std::strtol(tail.c_str(), &end, 10);
        if (tail.empty() || *end != '\0' || idx < 0)
            doc.fail(doc.find(n)->line, n, "section index must be a non-negative integer");
        found.emplace_back(idx, n);
    }
    std::sort(found.begin(), found.end());
    std::vector<std::string> out;
    for (std::size_t i = 0; i < found.size(); ++i) {
        if (found[i].first != static_cast<long>(i))
            doc.fail(doc.find(found[i].second)->line, found[i].second, "section indices must be 0, 1, 2, ...");
        out.push_back(found[i].second);
    }
    return out;
}

ScheduledMatrix read_scheduled(Document& doc, Reader& r, const std::string& key, const std::string& term_prefix,
                               Index n) {
    ScheduledMatrix m = r.has(key) ? ScheduledMatrix(r.cmatrix(key, n)) : ScheduledMatrix::zero(n);
    for (const auto& name : indexed_sections(doc, term_prefix)) {
        Reader tr(doc, *doc.find(name));
        const Schedule s = tr.schedule("schedule");
        m.add(s, tr.cmatrix("matrix", n));
    }
    return m;
}

// Emission helpers ----------------------------------------------------------

std::string num(Real x) { return format_real(x); }

std::string emit_cmatrix(const CMatrix& m) {
    std::string s = "[";
    for (Index i = 0; i < m.rows(); ++i) {
        s += (i ? ",\n  [" : "\n  [");
        for (Index j = 0; j < m.cols(); ++j)
            s += (j ? ", [" : "[") + num(m(i, j).real()) + ", " + num(m(i, j).imag()) + "]";
        s += "]";
    }
    return s + "]";
}

std::string emit_rmatrix(const RMatrix& m) {
    std::string s = "[";
    for (Index i = 0; i < m.rows(); ++i) {
        s += (i ? ", [" : "[");
        for (Index j = 0; j < m.cols(); ++j) s += (j ? ", " : "") + num(m(i, j));
        s += "]";
    }
    return s + "]";
}

std::string emit_vector(const RVector& v) {
    std::string s = "[";
    for (Index i = 0; i < v.size(); ++i) s += (i ? ", " : "") + num(v(i));
    return s + "]";
}

std::string emit_schedule(const Schedule& s) {
    return std::string("{kind = \"") + to_string(s.kind) + "\", base = " + num(s.base) +
           ", rel_amplitude = " + num(s.rel_amplitude) + ", period = " + num(s.period) +
           ", phase = " + num(s.phase) + ", drift_rate = " + num(s.drift_rate) + "}";
}

std::string emit_bool(bool b) { return b ? "true" : "false"; }

void emit_terms(std::string& out, const ScheduledMatrix& m, const std::string& prefix) {
    for (std::size_t i = 0; i < m.terms.size(); ++i) {
        out += "\n[" + prefix + std::to_string(i) + "]\n";
        out += "schedule = " + emit_schedule(m.terms[i].schedule) + "\n";
        out += "matrix = " + emit_cmatrix(m.terms[i].matrix) + "\n";
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// parse
// ---------------------------------------------------------------------------

ExperimentConfig parse_config_text(const std::string& text, Mode mode, const std::string& source) {
    Document doc(text, source);
    ExperimentConfig cfg;

    Section& sys_sec = doc.require_section("system");
    Reader sys(doc, sys_sec);
    cfg.name = sys.string("name", "experiment");
    std::vector<int> blocks;
    for (Real b : sys.numbers("blocks")) {
        if (b != std::floor(b) || b < 1) sys.fail("block dimensions must be positive integers", ErrorCode::configuration);
        blocks.push_back(static_cast<int>(b));
    }
    if (blocks.empty()) sys.fail("blocks must not be empty", ErrorCode::configuration);
    cfg.model.decomposition = SubspaceDecomposition(blocks);
    const Index n = cfg.model.decomposition.total_dim();
    const auto nb = static_cast<Index>(blocks.size());
    const long target = sys.integer("target", 0);
    if (target < 0 || target >= nb) sys.fail("target index out of range", ErrorCode::configuration);
    cfg.model.target_index = static_cast<std::size_t>(target);
    cfg.model.H1 = sys.has("H1") ? sys.cmatrix("H1", n) : CMatrix::Zero(n, n);
    if (doc.has("system.H0")) {
        Reader h0(doc, *doc.find("system.H0"));
        cfg.model.H0 = read_scheduled(doc, h0, "constant", "system.H0.term.", n);
    } else {
        cfg.model.H0 = ScheduledMatrix::zero(n);
        if (!doc.with_prefix("system.H0.term.").empty())
            throw Error(ErrorCode::missing_section, source + ": H0 terms given without [system.H0]");
    }

    const auto channel_secs = indexed_sections(doc, "channels.");
    if (channel_secs.empty() && mode != Mode::bench)
        throw Error(ErrorCode::missing_section, source + ": missing section [channels.0]");
    for (const auto& name : channel_secs) {
        Reader ch(doc, *doc.find(name));
        MeasurementChannel m;
        m.L = ch.cmatrix("L", n);
        m.gamma = ch.schedule("gamma");
        m.eta = ch.schedule("eta");
        m.gamma_hat = ch.number("gamma_hat");
        m.eta_hat = ch.number("eta_hat");
        cfg.model.channels.push_back(std::move(m));
    }

    cfg.model.perturbation = PerturbationModel::none(n);
    if (doc.has("perturbation")) {
        Reader p(doc, *doc.find("perturbation"));
        cfg.model.perturbation.H_tilde = read_scheduled(doc, p, "H_tilde", "perturbation.H_tilde.term.", n);
        for (const auto& name : indexed_sections(doc, "perturbation.C.")) {
            Reader c(doc, *doc.find(name));
            cfg.model.perturbation.C_ops.push_back({c.schedule("rate"), c.cmatrix("M", n)});
        }
    } else if (!doc.with_prefix("perturbation.").empty()) {
        throw Error(ErrorCode::missing_section, source + ": perturbation subsections without [perturbation]");
    }
    cfg.model.check_dimensions();

    const bool need_filter = mode == Mode::simulate || mode == Mode::verify || mode == Mode::deterministic;
    if (need_filter) doc.require_section("filter");
    if (doc.has("filter")) {
        Reader f(doc, *doc.find("filter"));
        cfg.gamma = f.rmatrix("Gamma", nb);
        cfg.clamp_eps = f.number("clamp_eps", 1e-12);
        if (!(cfg.clamp_eps > 0.0 && cfg.clamp_eps < 1.0 / static_cast<Real>(nb)))
            f.fail("clamp_eps must lie in (0, 1/(d+1))", ErrorCode::configuration);
        const auto rep = c1_report(cfg.gamma);
        if (!rep.pass) f.fail("C1 violated: " + rep.violation, ErrorCode::configuration);
        if (f.has("q0")) {
            const auto q = f.numbers("q0");
            if (static_cast<Index>(q.size()) != nb) f.fail("q0 must have d+1 entries", ErrorCode::dimension_mismatch);
            cfg.q0 = Eigen::Map<const RVector>(q.data(), nb);
            try {
                SimplexVector check(cfg.q0);
            } catch (const Error& e) {
                f.fail(std::string("q0: ") + e.what(), ErrorCode::configuration);
            }
        } else {
            cfg.q0 = RVector::Constant(nb, 1.0 / static_cast<Real>(nb));
        }
    } else {
        // Path-graph rates for runs that never feed the filter back.
        cfg.gamma = RMatrix::Zero(nb, nb);
        for (Index i = 0; i + 1 < nb; ++i) {
            cfg.gamma(i, i + 1) = cfg.gamma(i + 1, i) = 1.0;
            cfg.gamma(i, i) -= 1.0;
            cfg.gamma(i + 1, i + 1) -= 1.0;
        }
        cfg.q0 = RVector::Constant(nb, 1.0 / static_cast<Real>(nb));
    }

    const bool need_feedback = need_filter;
    if (need_feedback) doc.require_section("feedback");
    cfg.feedback.target_index = cfg.model.target_index;
    if (doc.has("feedback")) {
        Reader fb(doc, *doc.find("feedback"));
        const std::string kind = fb.string("kind", "poly");
        if (kind == "poly") {
            cfg.feedback.kind = FeedbackKind::poly;
            cfg.feedback.a = fb.number("a");
            cfg.feedback.b = fb.number("b");
        } else if (kind == "custom_table") {
            cfg.feedback.kind = FeedbackKind::custom_table;
            const Value& t = fb.get("table");
            if (t.type != Value::Type::array) fb.fail("table must be a list of [x, u] pairs");
            for (const auto& e : t.arr) {
                const Complex p = fb.pair(e, "table");
                cfg.feedback.table.emplace_back(p.real(), p.imag());
            }
        } else {
            fb.fail("unknown feedback kind '" + kind + "'", ErrorCode::configuration);
        }
        try {
            cfg.feedback.validate();
        } catch (const Error& e) {
            fb.fail(e.what(), ErrorCode::configuration);
        }
    }

    const bool need_sim = mode == Mode::simulate || mode == Mode::qsr || mode == Mode::deterministic;
    if (need_sim) doc.require_section("simulation");
    cfg.rho0 = DensityMatrix::basis_state(n, n - 1).mat();
    if (doc.has("simulation")) {
        Reader s(doc, *doc.find("simulation"));
        auto& sim = cfg.sim;
        sim.dt = s.number("dt", sim.dt);
        sim.horizon = s.number("horizon", sim.horizon);
        sim.n_trajectories = static_cast<int>(s.integer("trajectories", sim.n_trajectories));
        const long seed = s.integer("seed", 42);
        if (seed < 0) s.fail("seed must be >= 0", ErrorCode::configuration);
        sim.seed = static_cast<std::uint64_t>(seed);
        sim.record_stride = static_cast<int>(s.integer("record_stride", sim.record_stride));
        sim.enable_full_filter = s.boolean("full_filter", sim.enable_full_filter);
        sim.enable_perturbation = s.boolean("perturbation", sim.enable_perturbation);
        sim.feedback_on = s.boolean("feedback", sim.feedback_on);
        sim.record_y = s.boolean("record_y", sim.record_y);
        try {
            sim.validate();
        } catch (const Error& e) {
            s.fail(e.what(), ErrorCode::configuration);
        }
        if (s.has("rho0") && s.has("rho0_diag")) s.fail("give rho0 or rho0_diag, not both");
        if (s.has("rho0")) cfg.rho0 = s.cmatrix("rho0", n);
        if (s.has("rho0_diag")) {
            const auto d = s.numbers("rho0_diag");
            if (static_cast<Index>(d.size()) != n) s.fail("rho0_diag must have N entries", ErrorCode::dimension_mismatch);
            cfg.rho0 = DensityMatrix::diagonal(Eigen::Map<const RVector>(d.data(), n)).mat();
        }
        if (!validate_state(cfg.rho0).pass()) s.fail("rho0 is not a density matrix", ErrorCode::configuration);
        if (s.has("controls")) {
            const Value& v = s.get("controls");
            if (v.type != Value::Type::array) s.fail("controls must be a list of schedules");
            for (const auto& x : v.arr) cfg.controls.push_back(s.schedule(x, "controls"));
        }
        if (s.has("bench_dims")) {
            cfg.bench_dims.clear();
            for (Real d : s.numbers("bench_dims")) {
                if (d != std::floor(d) || d < 2) s.fail("bench_dims must be integers >= 2", ErrorCode::configuration);
                cfg.bench_dims.push_back(static_cast<int>(d));
            }
        }
    }
    if (cfg.controls.empty()) cfg.controls.assign(cfg.model.channels.size(), Schedule::constant(0.0));
    if (cfg.controls.size() != cfg.model.channels.size())
        throw Error(ErrorCode::dimension_mismatch, source + ": one control schedule per channel required");

    if (doc.has("output")) {
        Reader o(doc, *doc.find("output"));
        cfg.output.dir = o.string("dir", cfg.output.dir);
        cfg.output.per_trajectory = o.boolean("per_trajectory", cfg.output.per_trajectory);
        cfg.output.limit_threshold = o.number("limit_threshold", cfg.output.limit_threshold);
        cfg.output.fit_start_fraction = o.number("fit_start_fraction", cfg.output.fit_start_fraction);
        if (!(cfg.output.fit_start_fraction >= 0.0 && cfg.output.fit_start_fraction < 1.0))
            o.fail("fit_start_fraction must lie in [0, 1)", ErrorCode::configuration);
    }

    static const std::vector<std::string> known_roots{"system", "channels.", "perturbation", "filter",
                                                      "feedback", "simulation", "output"};
    for (const auto& name : doc.order()) {
        bool ok = name == "system" || name == "system.H0" || name.rfind("system.H0.term.", 0) == 0 ||
                  name.rfind("channels.", 0) == 0 || name == "perturbation" ||
                  name.rfind("perturbation.H_tilde.term.", 0) == 0 || name.rfind("perturbation.C.", 0) == 0 ||
                  name == "filter" || name == "feedback" || name == "simulation" || name == "output";
        if (!ok) doc.fail(doc.find(name)->line, name, "unknown section");
    }
    doc.check_all_used();
    return cfg;
}

ExperimentConfig parse_config(const std::string& path, Mode mode) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::io, "cannot open config file " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str(), mode, path);
}

// ---------------------------------------------------------------------------
// emit / hash
// ---------------------------------------------------------------------------

namespace {
std::string emit_body(const ExperimentConfig& c, bool with_output_dir) {
    std::string out = "# qfb experiment configuration\n\n[system]\n";
    out += "name = \"" + c.name + "\"\n";
    out += "blocks = [";
    const auto& bd = c.model.decomposition.block_dims();
    for (std::size_t i = 0; i < bd.size(); ++i) out += (i ? ", " : "") + std::to_string(bd[i]);
    out += "]\n";
    out += "target = " + std::to_string(c.model.target_index) + "\n";
    out += "H1 = " + emit_cmatrix(c.model.H1) + "\n";
    out += "\n[system.H0]\nconstant = " + emit_cmatrix(c.model.H0.constant) + "\n";
    emit_terms(out, c.model.H0, "system.H0.term.");
    for (std::size_t k = 0; k < c.model.channels.size(); ++k) {
        const auto& ch = c.model.channels[k];
        out += "\n[channels." + std::to_string(k) + "]\n";
        out += "L = " + emit_cmatrix(ch.L) + "\n";
        out += "gamma = " + emit_schedule(ch.gamma) + "\n";
        out += "eta = " + emit_schedule(ch.eta) + "\n";
        out += "gamma_hat = " + num(ch.gamma_hat) + "\n";
        out += "eta_hat = " + num(ch.eta_hat) + "\n";
    }
    out += "\n[perturbation]\nH_tilde = " + emit_cmatrix(c.model.perturbation.H_tilde.constant) + "\n";
    emit_terms(out, c.model.perturbation.H_tilde, "perturbation.H_tilde.term.");
    for (std::size_t i = 0; i < c.model.perturbation.C_ops.size(); ++i) {
        const auto& op = c.model.perturbation.C_ops[i];
        out += "\n[perturbation.C." + std::to_string(i) + "]\n";
        out += "rate = " + emit_schedule(op.rate) + "\n";
        out += "M = " + emit_cmatrix(op.M) + "\n";
    }
    out += "\n[filter]\nGamma = " + emit_rmatrix(c.gamma) + "\n";
    out += "clamp_eps = " + num(c.clamp_eps) + "\n";
    out += "q0 = " + emit_vector(c.q0) + "\n";
    out += "\n[feedback]\n";
    if (c.feedback.kind == FeedbackKind::poly) {
        out += "kind = \"poly\"\na = " + num(c.feedback.a) + "\nb = " + num(c.feedback.b) + "\n";
    } else {
        out += "kind = \"custom_table\"\ntable = [";
        for (std::size_t i = 0; i < c.feedback.table.size(); ++i)
            out += (i ? ", [" : "[") + num(c.feedback.table[i].first) + ", " + num(c.feedback.table[i].second) + "]";
        out += "]\n";
    }
    const auto& s = c.sim;
    out += "\n[simulation]\n";
    out += "dt = " + num(s.dt) + "\nhorizon = " + num(s.horizon) + "\n";
    out += "trajectories = " + std::to_string(s.n_trajectories) + "\n";
    out += "seed = " + std::to_string(s.seed) + "\n";
    out += "record_stride = " + std::to_string(s.record_stride) + "\n";
    out += "full_filter = " + emit_bool(s.enable_full_filter) + "\n";
    out += "perturbation = " + emit_bool(s.enable_perturbation) + "\n";
    out += "feedback = " + emit_bool(s.feedback_on) + "\n";
    out += "record_y = " + emit_bool(s.record_y) + "\n";
    out += "rho0 = " + emit_cmatrix(c.rho0) + "\n";
    out += "controls = [";
    for (std::size_t i = 0; i < c.controls.size(); ++i) out += (i ? ", " : "") + emit_schedule(c.controls[i]);
    out += "]\n";
    out += "bench_dims = [";
    for (std::size_t i = 0; i < c.bench_dims.size(); ++i) out += (i ? ", " : "") + std::to_string(c.bench_dims[i]);
    out += "]\n";
    out += "\n[output]\n";
    if (with_output_dir) out += "dir = \"" + c.output.dir + "\"\n";
    out += "per_trajectory = " + emit_bool(c.output.per_trajectory) + "\n";
    out += "limit_threshold = " + num(c.output.limit_threshold) + "\n";
    out += "fit_start_fraction = " + num(c.output.fit_start_fraction) + "\n";
    return out;
}
}  // namespace

std::string emit_config(const ExperimentConfig& cfg) { return emit_body(cfg, true); }

std::uint64_t config_hash(const ExperimentConfig& cfg) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : emit_body(cfg, false)) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hash_hex(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// ---------------------------------------------------------------------------
// Presets
// ---------------------------------------------------------------------------

Real preset_tau() { return 1.0 / (0.4 * 1.6); }

ExperimentConfig preset_three_level(Modulation mod, bool feedback_on) {
    const Real tau = preset_tau();
    const Real T = mod == Modulation::slow ? 100.0 * tau : 2.0 * tau;
    const Real h = std::sqrt(2.0) / 2.0;
    ExperimentConfig c;
    c.name = std::string("three-level:") + (mod == Modulation::slow ? "slow" : "fast") +
             (feedback_on ? "" : ":nofeedback");
    c.model.decomposition = SubspaceDecomposition({1, 1, 1});
    c.model.target_index = 0;

    CMatrix Jz = CMatrix::Zero(3, 3);
    Jz(0, 0) = 1.0;
    Jz(2, 2) = -1.0;
    c.model.H0 = ScheduledMatrix::zero(3);
    c.model.H0.add(Schedule::sine(1.5, 0.2, T), Jz);

    CMatrix H1 = CMatrix::Zero(3, 3);
    H1(0, 1) = -kI * h;
    H1(1, 0) = kI * h;
    H1(1, 2) = -kI * h;
    H1(2, 1) = kI * h;
    c.model.H1 = H1;

    MeasurementChannel ch;
    ch.L = Jz;
    ch.gamma = Schedule::sine(1.6, 0.2, T);
    ch.eta = Schedule::triangle(0.4, 0.1, T);
    ch.gamma_hat = 1.2;
    ch.eta_hat = 0.5;
    c.model.channels.push_back(ch);

    CMatrix Ht = CMatrix::Zero(3, 3);
    Ht(0, 0) = 0.2;
    Ht(1, 1) = 0.1;
    Ht(2, 2) = 0.4;
    CMatrix X12 = CMatrix::Zero(3, 3);
    X12(1, 2) = X12(2, 1) = 1.0;
    c.model.perturbation.H_tilde = ScheduledMatrix(Ht);
    // 0.5 + 0.2 sin(2 pi t / T) on the (1,2)/(2,1) entries.
    c.model.perturbation.H_tilde.add(Schedule::sine(0.5, 0.4, T), X12);
    CMatrix E12 = CMatrix::Zero(3, 3);
    E12(1, 2) = 1.0;
    c.model.perturbation.C_ops.push_back({Schedule::sine(1.5, 0.2, T, std::numbers::pi / 2.0), Jz});
    c.model.perturbation.C_ops.push_back({Schedule::linear_drift(1.5, 0.1, T), E12});

    c.gamma = RMatrix(3, 3);
    c.gamma << -1, 1, 0, 1, -2, 1, 0, 1, -1;
    c.feedback.kind = FeedbackKind::poly;
    c.feedback.a = 4.0;
    c.feedback.b = 2.0;
    c.feedback.target_index = 0;

    c.sim.dt = 1e-3;
    c.sim.horizon = 25.0;
    c.sim.n_trajectories = 100;
    c.sim.seed = 42;
    c.sim.record_stride = 10;
    c.sim.feedback_on = feedback_on;
    c.rho0 = DensityMatrix::basis_state(3, 2).mat();
    c.q0 = RVector::Constant(3, 1.0 / 3.0);
    c.controls.assign(1, Schedule::constant(0.0));
    c.output.dir = "qfb_out";
    return c;
}

ExperimentConfig preset_three_level_qsr(Modulation mod) {
    ExperimentConfig c = preset_three_level(mod, false);
    c.name += ":qsr";
    c.model = c.model.with_block_diagonal_perturbation();
    c.rho0 = DensityMatrix::maximally_mixed(3).mat();
    c.sim.horizon = 40.0;
    c.sim.n_trajectories = 300;
    return c;
}

ExperimentConfig preset_from_spec(const std::string& spec, bool qsr) {
    std::vector<std::string> parts;
    std::stringstream ss(spec);
    std::string tok;
    while (std::getline(ss, tok, ':')) parts.push_back(tok);
    if (parts.empty() || parts[0] != "three-level")
        throw Error(ErrorCode::configuration, "unknown preset '" + spec + "'");
    Modulation mod = Modulation::slow;
    bool fb = true;
    for (std::size_t i = 1; i < parts.size(); ++i) {
        if (parts[i] == "slow") mod = Modulation::slow;
        else if (parts[i] == "fast") mod = Modulation::fast;
        else if (parts[i] == "nofeedback") fb = false;
        else throw Error(ErrorCode::configuration, "unknown preset option '" + parts[i] + "'");
    }
    return qsr ? preset_three_level_qsr(mod) : preset_three_level(mod, fb);
}

}  // namespace qfb
