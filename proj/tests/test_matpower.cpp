#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <numeric>
#include <sstream>
#include <string>

#include "rulopf/errors.hpp"
#include "rulopf/matpower.hpp"

using namespace rulopf;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    REQUIRE(in.good());
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

const std::string kCase39Path = std::string(RULOPF_DATA_DIR) + "/case39.m";

// Smallest complete case: slack feeding one load over one line.
const char* kMinimalCase = R"(function mpc = mini
mpc.version = '2';
mpc.baseMVA = 100;
mpc.bus = [
    1  3  0    0   0  0  1  1.00  0  345  1  1.10  0.90;
    2  1  50  20   0  0  1  1.00  0  345  1  1.10  0.90;
];
mpc.gen = [
    1  0  0  300  -300  1.00  100  1  250  0;
];
mpc.branch = [
    1  2  0.01  0.10  0.02  250  250  250  0  0  1;
];
mpc.gencost = [
    2  0  0  3  0.02  2.0  5.0;
];
)";

NetworkCase mini() { return parse_matpower(kMinimalCase); }

} // namespace

TEST_CASE("minimal two-bus case parses with exact field mapping") {
    const NetworkCase net = mini();
    CHECK(net.base_mva == 100.0);
    REQUIRE(net.buses.size() == 2);
    REQUIRE(net.branches.size() == 1);
    REQUIRE(net.generators.size() == 1);
    REQUIRE(net.gencosts.size() == 1);

    CHECK(net.buses[0].id == 1);
    CHECK(net.buses[0].type == BusType::slack);
    CHECK(net.buses[1].type == BusType::pq);
    CHECK(net.buses[1].pd_mw == 50.0);
    CHECK(net.buses[1].qd_mvar == 20.0);
    CHECK(net.buses[1].v_max_pu == doctest::Approx(1.10));
    CHECK(net.buses[1].v_min_pu == doctest::Approx(0.90));

    const Branch& br = net.branches[0];
    CHECK(br.from_bus == 1);
    CHECK(br.to_bus == 2);
    CHECK(br.r_pu == 0.01);
    CHECK(br.x_pu == 0.10);
    CHECK(br.b_pu == 0.02);
    CHECK(br.rate_a_mva == 250.0);
    CHECK(br.tap_ratio == 0.0);    // 0 = nominal
    CHECK(br.in_service);
    CHECK(br.ang_min_deg == -360.0);  // defaulted: row has 11 columns
    CHECK(br.ang_max_deg == 360.0);

    const Generator& g = net.generators[0];
    CHECK(g.bus == 1);
    CHECK(g.q_max_mvar == 300.0);
    CHECK(g.q_min_mvar == -300.0);
    CHECK(g.p_max_mw == 250.0);
    CHECK(g.in_service);

    const GenCost& c = net.gencosts[0];
    CHECK(c.model == 2);
    REQUIRE(c.coeffs.size() == 3);
    CHECK(c.coeffs[0] == 0.02);
    CHECK(c.coeffs[1] == 2.0);
    CHECK(c.coeffs[2] == 5.0);
}

TEST_CASE("39-bus fixture parses to the full network") {
    const NetworkCase net = parse_matpower(read_file(kCase39Path));
    CHECK(net.base_mva == 100.0);
    REQUIRE(net.buses.size() == 39);
    CHECK(net.branches.size() == 46);
    REQUIRE(net.generators.size() == 10);
    CHECK(net.gencosts.size() == 10);

    // Exactly one slack, and it is bus 31.
    int slack_id = 0, n_slack = 0;
    for (const auto& b : net.buses)
        if (b.type == BusType::slack) { slack_id = b.id; ++n_slack; }
    CHECK(n_slack == 1);
    CHECK(slack_id == 31);

    double total_load = 0;
    for (const auto& b : net.buses) total_load += b.pd_mw;
    CHECK(total_load == doctest::Approx(6254.23).epsilon(1e-12));

    CHECK(net.bus_by_id(4).pd_mw == 500.0);
    CHECK(net.bus_by_id(4).qd_mvar == 184.0);
    CHECK(net.bus_by_id(39).pd_mw == 1104.0);
    CHECK(net.bus_by_id(9).qd_mvar == -66.6);

    // Transformer rows keep their off-nominal taps; lines stay at 0.
    std::size_t tapped = 0;
    for (const auto& br : net.branches)
        if (br.tap_ratio != 0.0) ++tapped;
    CHECK(tapped == 12);
    const Branch& xfmr = net.branches[4];  // 2-30 step-up transformer
    CHECK(xfmr.from_bus == 2);
    CHECK(xfmr.to_bus == 30);
    CHECK(xfmr.x_pu == 0.0181);
    CHECK(xfmr.tap_ratio == 1.025);

    CHECK(net.generators[0].bus == 30);
    CHECK(net.generators[0].q_min_mvar == 140.0);
    CHECK(net.generators[0].p_max_mw == 1040.0);
    CHECK(net.generators[6].bus == 36);
    CHECK(net.generators[6].vg_pu == 1.0636);
    double total_pmax = 0;
    for (const auto& g : net.generators) total_pmax += g.p_max_mw;
    CHECK(total_pmax == doctest::Approx(7367.0));

    for (const auto& c : net.gencosts) {
        CHECK(c.model == 2);
        REQUIRE(c.coeffs.size() == 3);
        CHECK(c.coeffs[0] == 0.01);
        CHECK(c.coeffs[1] == 0.3);
        CHECK(c.coeffs[2] == 0.2);
    }

    // Thermal limits convert to per-unit by dividing by the MVA base.
    CHECK(net.branches[0].rate_a_mva / net.base_mva == doctest::Approx(6.0));
}

TEST_CASE("scientific notation, tabs, and newline-terminated rows parse") {
    const char* text =
        "function mpc = tiny\n"
        "mpc.baseMVA = 1e2\n"
        "mpc.bus = [\n"
        "\t1 3 0 0 0 0 1 1 0 3.45E+2 1 1.1 .9\n"
        "\t2 1 5.0e1 2e1 0 0 1 1 0 345 1 1.1 0.9\n"
        "];\n"
        "mpc.gen = [ 1 0 0 300 -300 1 100 1 2.5e2 0 ];\n"
        "mpc.branch = [ 1 2 1e-2 0.1 0.02 250 250 250 0 0 1 ];\n"
        "mpc.gencost = [ 2 0 0 3 0.02 2 5 ];\n";
    const NetworkCase net = parse_matpower(text);
    CHECK(net.base_mva == 100.0);
    CHECK(net.buses[0].base_kv == 345.0);
    CHECK(net.buses[0].v_min_pu == 0.9);
    CHECK(net.buses[1].pd_mw == 50.0);
    CHECK(net.generators[0].p_max_mw == 250.0);
    CHECK(net.branches[0].r_pu == 0.01);
}

TEST_CASE("comments and blank lines do not change the parse") {
    std::string commented =
        "% leading banner comment\n"
        "function mpc = mini  % trailing comment\n"
        "\n"
        "mpc.version = '2';\n"
        "%% section header\n"
        "mpc.baseMVA = 100;  % MVA base\n"
        "mpc.bus = [  % bus table\n"
        "    1  3  0    0   0  0  1  1.00  0  345  1  1.10  0.90;  % slack\n"
        "\n"
        "    2  1  50  20   0  0  1  1.00  0  345  1  1.10  0.90;\n"
        "];\n"
        "mpc.gen = [\n"
        "    1  0  0  300  -300  1.00  100  1  250  0;\n"
        "];\n"
        "mpc.branch = [\n"
        "    1  2  0.01  0.10  0.02  250  250  250  0  0  1;\n"
        "];\n"
        "mpc.gencost = [\n"
        "    2  0  0  3  0.02  2.0  5.0;\n"
        "];\n";
    CHECK(case_to_json(parse_matpower(commented)) == case_to_json(mini()));
}

TEST_CASE("parse errors carry source line and column") {
    SUBCASE("ragged matrix row") {
        // Second bus row drops the final column (12 entries vs 13).
        const char* text =
            "function mpc = bad\n"                                      // 1
            "mpc.baseMVA = 100;\n"                                      // 2
            "mpc.bus = [\n"                                             // 3
            "    1  3  0   0  0  0  1  1.00  0  345  1  1.10  0.90;\n"  // 4
            "    2  1  50 20  0  0  1  1.00  0  345  1  1.10;\n"        // 5
            "];\n";
        try {
            parse_matpower(text);
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(e.line == 5);
            CHECK(e.column > 1);
            CHECK(std::string(e.what()).find("line 5") != std::string::npos);
        }
    }
    SUBCASE("assignment to a non-mpc name") {
        try {
            parse_matpower("function mpc = bad\nfoo = 3;\n");
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(e.line == 2);
        }
    }
    SUBCASE("malformed number") {
        const char* text =
            "function mpc = bad\n"
            "mpc.baseMVA = oops;\n";
        CHECK_THROWS_AS(parse_matpower(text), ParseError);
    }
    SUBCASE("unterminated matrix") {
        const char* text =
            "function mpc = bad\n"
            "mpc.baseMVA = 100;\n"
            "mpc.bus = [\n"
            "    1  3  0  0  0  0  1  1.00  0  345  1  1.10  0.90;\n";
        CHECK_THROWS_AS(parse_matpower(text), ParseError);
    }
}

TEST_CASE("schema errors for missing or malformed tables") {
    auto drop = [](const std::string& field) {
        std::string text(kMinimalCase);
        const auto pos = text.find("mpc." + field);
        REQUIRE(pos != std::string::npos);
        const auto end = text.find("];", pos);
        REQUIRE(end != std::string::npos);
        return text.substr(0, pos) + text.substr(end + 3);
    };
    CHECK_THROWS_AS(parse_matpower(drop("bus")), SchemaError);
    CHECK_THROWS_AS(parse_matpower(drop("gen")), SchemaError);
    CHECK_THROWS_AS(parse_matpower(drop("branch")), SchemaError);
    CHECK_THROWS_AS(parse_matpower(drop("gencost")), SchemaError);

    SUBCASE("missing MVA base") {
        std::string text(kMinimalCase);
        const auto pos = text.find("mpc.baseMVA = 100;\n");
        text.erase(pos, std::string("mpc.baseMVA = 100;\n").size());
        CHECK_THROWS_AS(parse_matpower(text), SchemaError);
    }
    SUBCASE("uniformly short bus rows") {
        std::string text(kMinimalCase);
        // Drop the trailing Vmin column from both bus rows: still rectangular,
        // so it fails the column-count requirement rather than the row parser.
        size_t n = 0;
        for (auto pos = text.find("  0.90;"); pos != std::string::npos;
             pos = text.find("  0.90;", pos)) {
            text.replace(pos, 7, ";");
            ++n;
        }
        REQUIRE(n == 2);
        CHECK_THROWS_AS(parse_matpower(text), SchemaError);
    }
    SUBCASE("piecewise-linear cost model is rejected") {
        std::string text(kMinimalCase);
        const auto pos = text.find("2  0  0  3");
        text.replace(pos, 1, "1");
        CHECK_THROWS_AS(parse_matpower(text), SchemaError);
    }
    SUBCASE("gencost announcing more coefficients than present") {
        std::string text(kMinimalCase);
        const auto pos = text.find("2  0  0  3");
        text.replace(pos + 9, 1, "4");
        CHECK_THROWS_AS(parse_matpower(text), SchemaError);
    }
}

TEST_CASE("validation errors for broken network invariants") {
    SUBCASE("no slack bus") {
        std::string text(kMinimalCase);
        text.replace(text.find("1  3  0"), 7, "1  1  0");
        CHECK_THROWS_AS(parse_matpower(text), ValidationError);
    }
    SUBCASE("two slack buses") {
        std::string text(kMinimalCase);
        text.replace(text.find("2  1  50"), 8, "2  3  50");
        CHECK_THROWS_AS(parse_matpower(text), ValidationError);
    }
    SUBCASE("duplicate bus ids") {
        std::string text(kMinimalCase);
        text.replace(text.find("2  1  50"), 8, "1  1  50");
        CHECK_THROWS_AS(parse_matpower(text), ValidationError);
    }
    SUBCASE("in-service branch with zero impedance") {
        std::string text(kMinimalCase);
        text.replace(text.find("1  2  0.01  0.10"), 16, "1  2  0.00  0.00");
        CHECK_THROWS_AS(parse_matpower(text), ValidationError);
        // The same branch out of service is tolerated.
        text.replace(text.find("250  0  0  1;"), 13, "250  0  0  0;");
        CHECK_NOTHROW(parse_matpower(text));
    }
    SUBCASE("branch endpoint missing from the bus table") {
        std::string text(kMinimalCase);
        text.replace(text.find("1  2  0.01"), 4, "1  7");
        CHECK_THROWS_AS(parse_matpower(text), ValidationError);
    }
    SUBCASE("generator at a missing bus") {
        std::string text(kMinimalCase);
        text.replace(text.find("1  0  0  300"), 1, "9");
        CHECK_THROWS_AS(parse_matpower(text), ValidationError);
    }
    SUBCASE("cost rows misaligned with generators") {
        NetworkCase net = mini();
        net.gencosts.clear();
        CHECK_THROWS_AS(net.validate(), ValidationError);
    }
    SUBCASE("inverted voltage band") {
        NetworkCase net = mini();
        net.buses[1].v_max_pu = 0.8;
        CHECK_THROWS_AS(net.validate(), ValidationError);
    }
}

TEST_CASE("bus lookup by id") {
    const NetworkCase net = mini();
    CHECK(net.bus_index(1) == 0);
    CHECK(net.bus_index(2) == 1);
    CHECK(net.bus_by_id(2).pd_mw == 50.0);
    CHECK_THROWS_AS(net.bus_index(99), UnknownBus);
}

TEST_CASE("attaching batteries registers devices and tightens voltage") {
    const NetworkCase base = parse_matpower(read_file(kCase39Path));

    BatteryDevice boxed;
    boxed.bus = 36;
    boxed.n_cells = 1500;
    boxed.initial_efc = 100;
    boxed.hi = 0.9;
    boxed.constraints = {40.0, 40.0, 1.02};
    boxed.has_box = true;

    BatteryDevice nameplate;
    nameplate.bus = 37;
    nameplate.n_cells = 1500;
    nameplate.initial_efc = 500;
    nameplate.hi = 0.5;
    nameplate.constraints = {40.0, 40.0, 0.50};  // ignored without a box
    nameplate.has_box = false;

    const NetworkCase out = attach_batteries(base, {boxed, nameplate});
    REQUIRE(out.batteries.size() == 2);
    CHECK(out.batteries[0].bus == 36);
    CHECK(out.batteries[1].hi == 0.5);

    // Ceiling tightened only at the boxed device's bus.
    CHECK(out.bus_by_id(36).v_max_pu == doctest::Approx(1.02));
    CHECK(out.bus_by_id(37).v_max_pu == doctest::Approx(1.06));
    // Input case untouched.
    CHECK(base.bus_by_id(36).v_max_pu == doctest::Approx(1.06));
    CHECK(base.batteries.empty());

    SUBCASE("a looser box bound never widens the case limit") {
        BatteryDevice loose = boxed;
        loose.constraints.v_bus_max_pu = 1.20;
        const NetworkCase kept = attach_batteries(base, {loose});
        CHECK(kept.bus_by_id(36).v_max_pu == doctest::Approx(1.06));
    }
    SUBCASE("empty device list leaves the case unchanged") {
        CHECK(case_to_json(attach_batteries(base, {})) == case_to_json(base));
    }
    SUBCASE("unknown host bus") {
        BatteryDevice lost = boxed;
        lost.bus = 99;
        CHECK_THROWS_AS(attach_batteries(base, {lost}), UnknownBus);
    }
}

TEST_CASE("json round-trip preserves every field") {
    NetworkCase net = parse_matpower(read_file(kCase39Path));
    BatteryDevice dev;
    dev.bus = 38;
    dev.n_cells = 1500;
    dev.initial_efc = 700;
    dev.hi = 0.3;
    dev.constraints = {11.385, 26.7, 1.0599};
    dev.i_charge_max_a = 3.3;
    dev.i_discharge_max_a = 7.7;
    dev.soc_min = 0.0;
    dev.soc_max = 0.95;
    dev.has_box = true;
    dev.p_b_kw = 12.5;
    net = attach_batteries(net, {dev});

    const std::string j1 = case_to_json(net);
    const NetworkCase back = case_from_json(j1);
    CHECK(case_to_json(back) == j1);

    REQUIRE(back.batteries.size() == 1);
    CHECK(back.batteries[0].constraints.p_discharge_max_kw == 26.7);
    CHECK(back.batteries[0].soc_max == 0.95);
    CHECK(back.bus_by_id(38).v_max_pu == doctest::Approx(1.0599));
    CHECK(back.branches.size() == 46);

    CHECK_THROWS_AS(case_from_json("{\"name\": 3}"), ParamError);
    CHECK_THROWS_AS(case_from_json("not json"), ParamError);
}
