#include "vibeharvest/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>

#include "vibeharvest/errors.hpp"

namespace vibeharvest {

std::string format_scientific(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::scientific, 8);
    return std::string(buf, res.ptr);
}

std::string sweep_to_csv(const SweepResult& sweep) {
    std::string out = sweep.independent_name();
    if (!sweep.independent_unit().empty()) out += "_" + sweep.independent_unit();
    for (const auto& c : sweep.columns()) out += "," + c.name;
    out += "\n";
    for (const auto& row : sweep.rows()) {
        out += format_scientific(row.value);
        for (double m : row.metrics) out += "," + format_scientific(m);
        out += "\n";
    }
    return out;
}

std::string trace_to_csv(const Trace& trace, double storage_capacitance, double window_s) {
    const std::size_t n = trace.size();
    std::vector<double> v_store(n, 0.0);
    std::vector<double> p_inst(n, 0.0);
    const int store_node = trace.storage_node > 0 ? trace.storage_node : trace.node_count();
    if (store_node > 0) v_store = trace.node(store_node);
    if (storage_capacitance > 0.0 && n >= 3) {
        const auto p = instantaneous_charge_power(trace.time, v_store, storage_capacitance, window_s);
        // edge samples without a full window stay at 0
        std::size_t j = 0;
        for (std::size_t i = 0; i < n && j < p.time.size(); ++i) {
            if (trace.time[i] == p.time[j]) p_inst[i] = p.power[j++];
        }
    }

    std::string out = "t_s,x_m,xdot_mps";
    for (int k = 1; k <= trace.node_count(); ++k) out += ",v_node_" + std::to_string(k);
    out += ",v_store_V,p_inst_W,work_in_J,e_diss_total_J\n";
    out.reserve(out.size() + n * (16 * (7 + static_cast<std::size_t>(trace.node_count()))));
    for (std::size_t i = 0; i < n; ++i) {
        out += format_scientific(trace.time[i]);
        out += ',';
        out += format_scientific(trace.x[i]);
        out += ',';
        out += format_scientific(trace.x_dot[i]);
        for (int k = 1; k <= trace.node_count(); ++k) {
            out += ',';
            out += format_scientific(trace.node(k)[i]);
        }
        out += ',';
        out += format_scientific(v_store[i]);
        out += ',';
        out += format_scientific(p_inst[i]);
        out += ',';
        out += format_scientific(trace.energy[i].work_in);
        out += ',';
        out += format_scientific(trace.energy[i].dissipated());
        out += '\n';
    }
    return out;
}

std::string format_meta(const std::vector<std::pair<std::string, std::string>>& entries) {
    std::string out;
    for (const auto& [k, v] : entries) out += k + " = " + v + "\n";
    return out;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::error_code ec;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("io_error", "cannot write " + path.string());
    out << text;
    if (!out) throw Error("io_error", "failed writing " + path.string());
}

}  // namespace vibeharvest
