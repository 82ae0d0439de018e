#include <doctest.h>

#include <clocale>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "support.hpp"
#include "vibeharvest/cli.hpp"
#include "vibeharvest/config.hpp"
#include "vibeharvest/errors.hpp"
#include "vibeharvest/ini.hpp"
#include "vibeharvest/io.hpp"
#include "vibeharvest/plot.hpp"
#include "vibeharvest/presets.hpp"

using namespace vibeharvest;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& tag) {
    static std::mt19937_64 rng(std::random_device{}());
    auto dir = fs::temp_directory_path() / ("vibeharvest-" + tag + "-" + std::to_string(rng()));
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct Run {
    int code;
    std::string out;
    std::string err;
};

Run cli(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = cli_main(args, out, err);
    return {code, out.str(), err.str()};
}

RunConfig parse(const std::string& text) { return parse_config(text, testing::catalog()); }

int config_error_line(const std::string& text) {
    try {
        parse(text);
    } catch (const ConfigError& e) {
        return e.line();
    }
    return -1;
}

}  // namespace

TEST_CASE("ini reader") {
    const auto doc = parse_ini("\xEF\xBB\xBF# top comment\n[a]\nx = 1 ; trailing\n\n; whole line\n[b]\ny=two words\n");
    REQUIRE(doc.sections.size() == 2);
    CHECK(doc.find("a")->find("x")->value == "1");
    CHECK(doc.find("b")->find("y")->value == "two words");
    CHECK(doc.find("b")->find("y")->line == 7);
    CHECK(doc.find("c") == nullptr);

    auto line_of = [](const std::string& t) {
        try {
            parse_ini(t);
        } catch (const ConfigError& e) {
            return e.line();
        }
        return -1;
    };
    CHECK(line_of("x = 1\n") == 1);
    CHECK(line_of("[a]\n[a\n") == 2);
    CHECK(line_of("[a]\nno equals here\n") == 2);
    CHECK(line_of("[a]\nx=1\nx=2\n") == 3);
    CHECK(line_of("[a]\n[a]\n") == 2);
}

TEST_CASE("config units and sections") {
    const auto c = parse(
        "[harvester]\npreset = experimental\n"
        "[topology]\nkind = resistive\nr = 430kohm\n"
        "[excitation]\namplitude = 0.2g\nfrequency = 1495Hz\nduration = 50ms\n"
        "[output]\ndir = runs\n");
    CHECK(c.harvester_preset == "experimental");
    CHECK(std::get<ResistiveLoad>(*c.topology).r == doctest::Approx(4.3e5).epsilon(1e-15));
    CHECK(c.excitation->amplitude_g == 0.2);
    CHECK(c.excitation->acceleration_amplitude() == doctest::Approx(1.96133).epsilon(1e-12));
    CHECK(c.excitation->duration_s == doctest::Approx(0.05));
    CHECK(c.output_dir == "runs");

    const auto v = parse("[topology]\nkind = villard\nstages = 4\nc_stage = 40pF\nload = resistor\nload_r = 2.5Gohm\n");
    const auto& vill = std::get<Villard>(*v.topology);
    CHECK(vill.stages == 4);
    CHECK(vill.c_stage == doctest::Approx(40e-12));
    CHECK(vill.diode == testing::catalog().diode("lowvt").diode);
    CHECK(std::get<ResistorLoad>(vill.load).r == doctest::Approx(2.5e9));

    const auto d = parse("[topology]\nkind = doubler\ndiode = inline\ndiode_i_sat = 10nA\nload = capacitor\nload_c = 1uF\n");
    const auto& dbl = std::get<DoublerRectifier>(*d.topology);
    CHECK(dbl.diode.i_sat == doctest::Approx(1e-8));
    CHECK(std::get<CapacitorLoad>(dbl.load).c == doctest::Approx(1e-6));

    const auto inl = parse("[harvester]\nm_eff = 0.7mg\nf0 = 1.5kHz\nzeta = 0.00145\ntheta = 6e-6\ncp = 40pF\n");
    CHECK(inl.harvester->m_eff == doctest::Approx(7e-7));
    CHECK(inl.harvester->c_par == 0.0);
    CHECK(!inl.harvester_preset);
}

TEST_CASE("config errors carry line numbers") {
    CHECK(config_error_line("[topology]\n") == 1);
    CHECK(config_error_line("[harvester]\npreset = fem\n[bogus]\nx = 1\n") == 3);
    CHECK(config_error_line("[topology]\nkind = resistive\nr = 12 furlongs\n") == 3);
    CHECK(config_error_line("[topology]\nkind = resistive\nr = 10pF\n") == 3);
    CHECK(config_error_line("[topology]\nkind = resistive\nr = 1k\nstages = 3\n") == 4);
    CHECK(config_error_line("[topology]\nkind = resistive\nr=1\ncolour = red\n") == 4);
    CHECK(config_error_line("[harvester]\npreset = nope\n") == 2);
    CHECK(config_error_line("[harvester]\npreset = fem\ncp = 1pF\n") == 1);
    CHECK(config_error_line("[excitation]\nfrequency = 1495\n") == 1);
    CHECK(config_error_line("[experiment]\nwhatever = 3\n") == 2);
    CHECK(config_error_line("[topology]\nkind = doubler\nload = resistor\n") == 1);
}

TEST_CASE("config round trip") {
    const std::vector<std::string> texts{
        "[harvester]\npreset = fem\n[excitation]\namplitude = 0.2g\nfrequency = 1577.5\n",
        "[harvester]\nm_eff = 7e-7\nf0 = 1495\nzeta = 0.00145\ntheta = 6.6e-6\ncp = 40pF\nc_par = 3pF\n"
        "[topology]\nkind = villard\nstages = 6\ndiode = schottky\nload = open\n"
        "[excitation]\namplitude = 1.3 g\nfrequency = 1495\nduration = 2\n"
        "[solver]\nlocal_error_tol = 1e-7\nsamples_per_cycle = 64\n"
        "[experiment]\naccelerations = 1g, 2g\n[output]\ndir = out/x\n",
        "[topology]\nkind = doubler\ndiode = inline\ndiode_i_sat = 3e-9\ndiode_r_series = 5\nload = capacitor\n"
        "load_c = 1uF\nload_v_init = 0.1\n[excitation]\namplitude = 9.80665\nfrequency = 1495\n",
    };
    for (const auto& t : texts) {
        const auto a = parse(t);
        const auto text = serialize_config(a);
        const auto b = parse(text);
        CHECK(a == b);
        CHECK(serialize_config(b) == text);
    }
}

TEST_CASE("overrides") {
    auto doc = parse_ini("[harvester]\npreset = fem\n");
    apply_override(doc, "harvester.theta=1e-6");
    CHECK(doc.find("harvester")->find("preset") == nullptr);
    apply_override(doc, "harvester.preset=experimental");
    CHECK(doc.find("harvester")->find("theta") == nullptr);
    apply_override(doc, "excitation.amplitude = 0.5g");
    CHECK(doc.find("excitation")->find("amplitude")->value == "0.5g");
    CHECK_THROWS_AS(apply_override(doc, "novalue"), ConfigError);
    CHECK_THROWS_AS(apply_override(doc, "nosection=1"), ConfigError);
}

TEST_CASE("presets") {
    const auto cat = testing::catalog();
    std::vector<std::string> names;
    for (const auto& p : cat.list()) names.push_back(p.name);
    for (const char* n : {"experimental", "fem", "ideal", "lowvt", "schottky"}) {
        CHECK(std::find(names.begin(), names.end(), n) != names.end());
    }
    CHECK(cat.hash("fem").size() == 16);
    CHECK(cat.hash("fem") == fnv1a_hex(slurp(cat.locate("fem"))));
    CHECK(fnv1a_hex("") == "cbf29ce484222325");
    CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
    CHECK_THROWS_AS(cat.harvester("lowvt"), PresetError);
    CHECK_THROWS_AS(cat.diode("missing"), PresetError);
    CHECK_THROWS_AS(cat.locate("../fem"), PresetError);

    const auto p = cat.harvester("experimental");
    const auto text = format_harvester_preset(p, {"note"});
    CHECK(text.rfind("# note\n", 0) == 0);
    CHECK(parse_harvester_preset(text) == p);
    const DiodePreset d{{1.5e-10, 1.1, 0.02585, 2.0}, 3e9};
    CHECK(parse_diode_preset(format_diode_preset(d, {})).diode == d.diode);
    CHECK(parse_diode_preset(format_diode_preset(d, {})).probe_load == d.probe_load);
    CHECK_THROWS_AS(parse_harvester_preset("[harvester]\nm_eff_kg = 1\n"), PresetError);
    CHECK_THROWS_AS(parse_harvester_preset(format_harvester_preset(p, {}) + "extra = 1\n"), PresetError);
}

TEST_CASE("csv formatting") {
    CHECK(format_scientific(1.0) == "1.00000000e+00");
    CHECK(format_scientific(-4.3e5) == "-4.30000000e+05");
    CHECK(format_scientific(1.0 / 3.0) == "3.33333333e-01");
    SweepResult s("r_load", "ohm", {{"power_W", "W"}});
    s.add_row(1e3, {2.5e-9});
    s.add_row(1e4, {3.5e-9});
    CHECK(sweep_to_csv(s) == "r_load_ohm,power_W\n1.00000000e+03,2.50000000e-09\n1.00000000e+04,3.50000000e-09\n");
    // the C locale is not consulted
    std::setlocale(LC_ALL, "de_DE.UTF-8");
    CHECK(format_scientific(0.5) == "5.00000000e-01");
    std::setlocale(LC_ALL, "C");
}

TEST_CASE("trace csv columns") {
    Trace t;
    t.period = 1.0;
    t.samples_per_cycle = 2;
    t.storage_node = 2;
    t.time = {0.0, 0.5, 1.0};
    t.x = {0.0, 1e-6, 0.0};
    t.x_dot = {0.0, 0.0, 0.0};
    t.node_voltages = {{0.0, 0.1, 0.2}, {0.0, 1.0, 2.0}};
    t.energy.resize(3);
    const auto csv = trace_to_csv(t, 1e-6, 1.0);
    std::istringstream in(csv);
    std::string header, row0, row1;
    std::getline(in, header);
    std::getline(in, row0);
    std::getline(in, row1);
    CHECK(header == "t_s,x_m,xdot_mps,v_node_1,v_node_2,v_store_V,p_inst_W,work_in_J,e_diss_total_J");
    CHECK(row0.substr(0, 15) == "0.00000000e+00,");
    // p = d(C V^2 / 2)/dt at the middle sample: 0.5e-6 * (4 - 0) / 1
    CHECK(row1.find(",2.00000000e-06,") != std::string::npos);
}

TEST_CASE("svg rendering") {
    const std::vector<PlotSeries> one{{"line", {1.0, 2.0}, {3.0, 4.0}}};
    const auto svg = render_svg(one, {});
    CHECK(svg.rfind("<svg", 0) == 0);
    CHECK(svg.find("</svg>") != std::string::npos);
    std::size_t count = 0;
    for (auto pos = svg.find("<polyline"); pos != std::string::npos; pos = svg.find("<polyline", pos + 1)) ++count;
    CHECK(count == 1);
    CHECK(render_svg(one, {}) == svg);
    const std::vector<PlotSeries> single{{"dot", {1.0}, {1.0}}};
    CHECK_THROWS_AS(render_svg(single, {}), PlotError);
    // nonpositive points are dropped on log axes
    const std::vector<PlotSeries> logbad{{"x", {-1.0, 0.0, 1.0}, {1.0, 1.0, 1.0}}};
    CHECK_THROWS_AS(render_svg(logbad, {.x_log = true}), PlotError);
}

TEST_CASE("cli usage errors exit 2") {
    CHECK(cli({}).code == 2);
    const auto r = cli({"frobnicate"});
    CHECK(r.code == 2);
    CHECK(r.err.rfind("error[usage]:", 0) == 0);
    CHECK(cli({"reproduce"}).code == 2);
    CHECK(cli({"presets"}).code == 2);
    CHECK(cli({"calibrate"}).code == 2);
    CHECK(cli({"--help"}).code == 0);
}

TEST_CASE("cli reproduce fig3") {
    const auto dir = scratch_dir("fig3");
    const auto r = cli({"reproduce", "fig3", "--preset", "fem", "--out", dir.string()});
    CHECK(r.code == 0);
    CHECK(fs::exists(dir / "fig3.csv"));
    CHECK(fs::exists(dir / "fig3.svg"));
    CHECK(fs::exists(dir / "fig3.meta.txt"));
    const auto meta = slurp(dir / "fig3.meta.txt");
    CHECK(meta.find("preset_hash = " + testing::catalog().hash("fem")) != std::string::npos);
    CHECK(meta.find("r_opt_ohm = ") != std::string::npos);
    const auto first = slurp(dir / "fig3.csv");
    CHECK(cli({"reproduce", "fig3", "--preset", "fem", "--out", dir.string()}).code == 0);
    CHECK(slurp(dir / "fig3.csv") == first);
    fs::remove_all(dir);
}

TEST_CASE("cli domain and config errors") {
    const auto dir = scratch_dir("err");
    auto r = cli({"reproduce", "fig5", "--preset", "fem", "--out", dir.string()});
    CHECK(r.code == 1);
    CHECK(r.err.rfind("error[unknown_experiment]:", 0) == 0);

    r = cli({"reproduce", "fig3", "--preset", "nope", "--out", dir.string()});
    CHECK(r.code == 2);
    CHECK(r.err.rfind("error[config_error]:", 0) == 0);

    r = cli({"simulate", "--config", (dir / "missing.ini").string()});
    CHECK(r.code == 2);

    r = cli({"calibrate", "--preset", "fem", "--set", "target.fem_power=1e-3", "--out", dir.string()});
    CHECK(r.code == 1);
    CHECK(r.err.rfind("error[calibration_failed]:", 0) == 0);
    CHECK(!fs::exists(dir / "fem.ini"));

    r = cli({"calibrate", "--preset", "fem", "--set", "target.nothing=1", "--out", dir.string()});
    CHECK(r.code == 2);
    fs::remove_all(dir);
}

TEST_CASE("cli calibrate writes a preset") {
    const auto dir = scratch_dir("cal");
    const auto r = cli({"calibrate", "--preset", "fem", "--out", dir.string()});
    CHECK(r.code == 0);
    const auto p = parse_harvester_preset(slurp(dir / "fem.ini"));
    const auto committed = testing::catalog().harvester("fem");
    CHECK(testing::rel_err(p.theta, committed.theta) < 1e-6);
    fs::remove_all(dir);
}

TEST_CASE("cli simulate and sweep-load") {
    const auto dir = scratch_dir("sim");
    {
        std::ofstream cfg(dir / "run.ini");
        cfg << "[harvester]\npreset = experimental\n[topology]\nkind = resistive\nr = 430kohm\n"
               "[excitation]\namplitude = 0.5g\nfrequency = 1495\nduration = 20ms\n";
    }
    auto r = cli({"simulate", "--config", (dir / "run.ini").string(), "--out", dir.string()});
    CHECK(r.code == 0);
    const auto csv = slurp(dir / "simulate.csv");
    CHECK(csv.rfind("t_s,x_m,xdot_mps,v_node_1,v_store_V,p_inst_W,work_in_J,e_diss_total_J\n", 0) == 0);

    r = cli({"sweep-load", "--config", (dir / "run.ini").string(), "--set", "experiment.points=7", "--out",
             dir.string()});
    CHECK(r.code == 0);
    const auto sweep = slurp(dir / "sweep-load.csv");
    CHECK(std::count(sweep.begin(), sweep.end(), '\n') == 8);

    r = cli({"presets", "list"});
    CHECK(r.code == 0);
    CHECK(r.out.find("lowvt\tdiode") != std::string::npos);
    fs::remove_all(dir);
}
