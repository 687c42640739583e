#include "it2mpc/trace_io.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>

#if __has_include(<json.hpp>)
#include <json.hpp>
#else
#include <nlohmann/json.hpp>
#endif

#include "it2mpc/errors.hpp"

namespace it2mpc {

namespace {

std::string name(const char* stem, std::size_t i) { return stem + std::to_string(i + 1); }
std::string name(const char* stem, std::size_t i, std::size_t s) {
    return name(stem, i) + "_" + std::to_string(s + 1);
}

void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw Error("write failed: " + path.string());
}

}  // namespace

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

const std::vector<std::string>& trace_margin_families() {
    static const std::vector<std::string> f{"thm1", "thm2", "input", "input_set", "zbound", "eta_floor", "membership"};
    return f;
}

std::vector<std::string> trace_columns(const LargeScaleSystem& sys) {
    std::vector<std::string> c{"k", "t"};
    for (std::size_t i = 0; i < sys.size(); ++i) {
        const Subsystem& s = sys.subsystems[i];
        for (std::size_t a = 0; a < s.nx(); ++a) c.push_back(name("x", i, a));
        for (std::size_t a = 0; a < s.nu(); ++a) c.push_back(name("u", i, a));
        for (std::size_t a = 0; a < s.nd(); ++a) c.push_back(name("d", i, a));
        for (std::size_t a = 0; a < s.model_mfs.rule_count(); ++a) c.push_back(name("w", i, a));
        for (std::size_t a = 0; a < s.controller_mfs.rule_count(); ++a) c.push_back(name("h", i, a));
        c.push_back(name("V", i));
        c.push_back(name("xi", i));
    }
    c.push_back("psi");
    c.push_back("feasible");
    for (const auto& f : trace_margin_families()) c.push_back("margin_" + f);
    return c;
}

std::string format_trace(const SimulationTrace& trace, const LargeScaleSystem& sys) {
    const auto cols = trace_columns(sys);
    std::string out;
    for (std::size_t c = 0; c < cols.size(); ++c) out += (c ? "," : "") + cols[c];
    out += '\n';
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (const TraceStep& st : trace.steps) {
        std::vector<double> row{static_cast<double>(st.k), st.t};
        auto put = [&](const Vector& v, std::size_t n) {
            for (std::size_t a = 0; a < n; ++a) row.push_back(a < v.size() ? v[a] : nan);
        };
        for (std::size_t i = 0; i < sys.size(); ++i) {
            const Subsystem& s = sys.subsystems[i];
            put(i < st.x.size() ? st.x[i] : Vector{}, s.nx());
            put(i < st.u.size() ? st.u[i] : Vector{}, s.nu());
            put(i < st.d.size() ? st.d[i] : Vector{}, s.nd());
            put(i < st.w.size() ? st.w[i] : Vector{}, s.model_mfs.rule_count());
            put(i < st.h.size() ? st.h[i] : Vector{}, s.controller_mfs.rule_count());
            row.push_back(i < st.V.size() ? st.V[i] : nan);
            row.push_back(i < st.xi.size() ? st.xi[i] : nan);
        }
        row.push_back(st.psi);
        row.push_back(st.feasible ? 1.0 : 0.0);
        for (const auto& f : trace_margin_families()) {
            auto it = st.margins.find(f);
            row.push_back(it == st.margins.end() ? nan : it->second);
        }
        for (std::size_t c = 0; c < row.size(); ++c) out += (c ? "," : "") + format_double(row[c]);
        out += '\n';
    }
    return out;
}

void write_trace(const SimulationTrace& trace, const LargeScaleSystem& sys, const std::filesystem::path& csv) {
    write_file(csv, format_trace(trace, sys));
}

std::string trace_summary(const SimulationTrace& trace, const LargeScaleSystem& sys) {
    using nlohmann::json;
    json j;
    j["steps"] = trace.steps.size();
    j["Ts"] = trace.Ts;
    json norms = json::array(), peaks = json::array();
    for (std::size_t i = 0; i < sys.size(); ++i) {
        norms.push_back(i < trace.x_final.size() ? norm2(trace.x_final[i]) : 0.0);
        double peak = 0.0;
        for (const auto& st : trace.steps) peak = std::max(peak, norm2(st.x[i]));
        peaks.push_back(peak);
    }
    j["final_state_norms"] = std::move(norms);
    j["peak_state_norms"] = std::move(peaks);
    j["input_violations"] = trace.input_violations;
    j["disturbance_warnings"] = trace.disturbance_warnings;
    j["resyntheses"] = trace.resyntheses;
    j["xi_achieved"] = trace.last.xi;
    bool all_feasible = true;
    for (const auto& st : trace.steps) all_feasible = all_feasible && st.feasible;
    j["all_steps_feasible"] = all_feasible;
    return j.dump(2) + "\n";
}

void write_trace_summary(const SimulationTrace& trace, const LargeScaleSystem& sys,
                         const std::filesystem::path& json_path) {
    write_file(json_path, trace_summary(trace, sys));
}

std::size_t TraceTable::column(const std::string& n) const {
    for (std::size_t c = 0; c < columns.size(); ++c)
        if (columns[c] == n) return c;
    throw Error("trace has no column '" + n + "'");
}

TraceTable parse_trace(const std::string& csv_text) {
    TraceTable t;
    std::istringstream in(csv_text);
    std::string line;
    if (!std::getline(in, line) || line.empty()) throw Error("trace is empty (no header)");
    {
        std::istringstream hs(line);
        std::string cell;
        while (std::getline(hs, cell, ',')) t.columns.push_back(cell);
    }
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<double> row;
        std::istringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) {
            char* end = nullptr;
            const double v = std::strtod(cell.c_str(), &end);
            if (cell.empty() || end != cell.c_str() + cell.size())
                throw Error("trace line " + std::to_string(lineno) + ": bad number '" + cell + "'");
            row.push_back(v);
        }
        if (row.size() != t.columns.size())
            throw Error("trace line " + std::to_string(lineno) + ": expected " + std::to_string(t.columns.size()) +
                        " fields");
        t.rows.push_back(std::move(row));
    }
    return t;
}

TraceTable read_trace(const std::filesystem::path& csv) {
    std::ifstream in(csv, std::ios::binary);
    if (!in) throw Error("cannot open " + csv.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_trace(ss.str());
}

}  // namespace it2mpc
