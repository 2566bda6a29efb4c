#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <string>

#include "rulopf/cell.hpp"
#include "rulopf/errors.hpp"
#include "rulopf/mc.hpp"
#include "rulopf/presets.hpp"

using namespace rulopf;

namespace {

SamplingSpec small_spec() {
    SamplingSpec spec;
    spec.n_samples = 16;
    spec.soc_min_range = {0.0, 0.4};
    spec.soc_max_range = {0.6, 1.0};
    spec.i_charge_range_a = {2.3, 4.6};
    spec.i_discharge_range_a = {2.3, 11.5};
    spec.initial_efc_range = {100.0, 700.0};
    spec.master_seed = 7;
    return spec;
}

double fraction_within(const std::vector<double>& xs, double lo, double hi) {
    std::size_t n = 0;
    for (double x : xs)
        if (x >= lo && x <= hi) ++n;
    return static_cast<double>(n) / static_cast<double>(xs.size());
}

} // namespace

TEST_CASE("sample_scenario is deterministic per (seed, id)") {
    const SamplingSpec spec = small_spec();
    for (std::size_t id : {0u, 5u, 15u}) {
        const auto a = sample_scenario(spec, id);
        const auto b = sample_scenario(spec, id);
        CHECK(a.first.soc_min == b.first.soc_min);
        CHECK(a.first.soc_max == b.first.soc_max);
        CHECK(a.first.i_charge_a == b.first.i_charge_a);
        CHECK(a.first.i_discharge_a == b.first.i_discharge_a);
        CHECK(a.second == b.second);
    }
    // Neighboring substreams must decorrelate, not shift.
    const auto s0 = sample_scenario(spec, 0);
    const auto s1 = sample_scenario(spec, 1);
    CHECK(s0.first.soc_min != s1.first.soc_min);
    CHECK(substream_seed(7, 0) != substream_seed(7, 1));
    CHECK(substream_seed(7, 0) != substream_seed(8, 0));
}

TEST_CASE("degenerate ranges always return the fixed value") {
    SamplingSpec spec;
    spec.n_samples = 100;
    spec.soc_min_range = {0.1, 0.1};
    spec.soc_max_range = {0.9, 0.9};
    spec.i_charge_range_a = {4.3, 4.3};
    spec.i_discharge_range_a = {11.7, 11.7};
    spec.initial_efc_range = {500.0, 500.0};
    spec.master_seed = 123;
    for (std::size_t id = 0; id < spec.n_samples; ++id) {
        const auto [lim, efc0] = sample_scenario(spec, id);
        CHECK(lim.soc_min == 0.1);
        CHECK(lim.soc_max == 0.9);
        CHECK(lim.i_charge_a == 4.3);
        CHECK(lim.i_discharge_a == 11.7);
        CHECK(efc0 == 500.0);
    }
}

TEST_CASE("invalid scenario ids and specs are rejected") {
    const SamplingSpec spec = small_spec();
    CHECK_THROWS_AS(sample_scenario(spec, 16), IndexError);
    CHECK_THROWS_AS(sample_scenario(spec, 1000000), IndexError);

    SamplingSpec bad = spec;
    bad.n_samples = 0;
    CHECK_THROWS_AS(bad.validate(), ParamError);

    bad = spec;
    bad.soc_max_range = {0.8, 0.7}; // empty interval
    CHECK_THROWS_AS(bad.validate(), ParamError);

    bad = spec;
    bad.soc_min_range = {0.0, 0.7}; // overlaps soc_max_range
    CHECK_THROWS_AS(bad.validate(), ParamError);

    bad = spec;
    bad.i_discharge_range_a = {0.0, 5.0}; // zero current allowed? no
    CHECK_THROWS_AS(bad.validate(), ParamError);

    bad = spec;
    bad.soc_max_range = {0.6, 1.2}; // outside [0,1]
    CHECK_THROWS_AS(bad.validate(), ParamError);
}

TEST_CASE("empirical mean and range containment over 10^4 draws") {
    SamplingSpec spec = small_spec();
    spec.n_samples = 10000;
    spec.soc_max_range = {0.6, 1.0};
    double sum = 0;
    for (std::size_t id = 0; id < spec.n_samples; ++id) {
        const auto [lim, efc0] = sample_scenario(spec, id);
        CHECK(lim.soc_min >= spec.soc_min_range.lo);
        CHECK(lim.soc_min <= spec.soc_min_range.hi);
        CHECK(lim.soc_max >= spec.soc_max_range.lo);
        CHECK(lim.soc_max <= spec.soc_max_range.hi);
        CHECK(lim.i_charge_a >= spec.i_charge_range_a.lo);
        CHECK(lim.i_charge_a <= spec.i_charge_range_a.hi);
        CHECK(lim.i_discharge_a >= spec.i_discharge_range_a.lo);
        CHECK(lim.i_discharge_a <= spec.i_discharge_range_a.hi);
        CHECK(efc0 >= spec.initial_efc_range.lo);
        CHECK(efc0 <= spec.initial_efc_range.hi);
        sum += lim.soc_max;
    }
    const double mean = sum / static_cast<double>(spec.n_samples);
    CHECK(mean == doctest::Approx(0.8).epsilon(0.0125)); // 0.8 +/- 0.01
    CHECK(std::abs(mean - 0.8) < 0.01);
}

TEST_CASE("single-scenario campaign matches a direct simulation") {
    SamplingSpec spec = small_spec();
    spec.n_samples = 1;
    const CellParams params = default_cell_params();
    const auto records = run_campaign(spec, params);
    REQUIRE(records.size() == 1);

    const auto [lim, efc0] = sample_scenario(spec, 0);
    const CellState s0 = state_from_efc(efc0, params);
    const RulResult direct = simulate_to_eol(s0, params, lim);
    CHECK(records[0].scenario_id == 0);
    CHECK(records[0].initial_efc == efc0);
    CHECK(records[0].hi_initial == health_indicator(s0, params));
    CHECK(records[0].rul_hours == direct.rul_hours);
    CHECK(records[0].v_max == direct.v_max_observed);
    CHECK(records[0].v_min == direct.v_min_observed);
}

TEST_CASE("campaign output is independent of thread count") {
    SamplingSpec spec = small_spec();
    spec.n_samples = 64;
    const CellParams params = default_cell_params();
    const auto serial = run_campaign(spec, params, 1);
    const auto threaded = run_campaign(spec, params, 4);
    REQUIRE(serial.size() == threaded.size());
    CHECK(campaign_to_csv(serial) == campaign_to_csv(threaded));
    for (std::size_t i = 0; i < serial.size(); ++i) {
        CHECK(serial[i].scenario_id == i);
        CHECK(serial[i].rul_hours == threaded[i].rul_hours);
    }
}

TEST_CASE("non-terminating fade configuration reports the scenario id") {
    SamplingSpec spec = small_spec();
    spec.n_samples = 3;
    CellParams params = default_cell_params();
    params.stress.k_rate = -200.0; // capacity loss underflows to ~0 at >1C
    try {
        run_campaign(spec, params);
        FAIL("expected NonTerminating");
    } catch (const NonTerminating& e) {
        CHECK(std::string(e.what()).find("scenario") != std::string::npos);
    }
}

TEST_CASE("500-scenario scatter campaign reproduces the expected statistics") {
    const CellParams params = default_cell_params();
    const SamplingSpec spec = preset_fig2(params);
    REQUIRE(spec.n_samples == 500);
    const auto records = run_campaign(spec, params, 2);
    REQUIRE(records.size() == 500);

    std::vector<double> rul, vmax, vmin;
    for (const auto& r : records) {
        CHECK(r.rul_hours > 0.0);
        CHECK(r.v_min < r.v_max);
        CHECK(r.hi_initial == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(r.limits.soc_min >= 0.0);
        CHECK(r.limits.soc_min <= 0.4);
        CHECK(r.limits.soc_max >= 0.6);
        CHECK(r.limits.soc_max <= 1.0);
        rul.push_back(r.rul_hours);
        vmax.push_back(r.v_max);
        vmin.push_back(r.v_min);
    }

    // Life expectancy concentrates in the 60-160 h window for this setting.
    CHECK(fraction_within(rul, 60.0, 160.0) >= 0.90);
    // Observed voltage bounds: discharge-end voltages spread over the low
    // knee of the open-circuit curve; charge-end voltages sit on the plateau
    // and upper knee (bounded by the cell ceiling).
    CHECK(fraction_within(vmin, 2.4, 3.3) >= 0.90);
    CHECK(fraction_within(vmax, 3.3, 3.65) == 1.0);
    for (double v : vmax) CHECK(v < 3.60);
    const auto [vmax_lo, vmax_hi] = std::minmax_element(vmax.begin(), vmax.end());
    CHECK(*vmax_hi - *vmax_lo > 0.05); // bounds vary, they are not clamped flat
    const auto [vmin_lo, vmin_hi] = std::minmax_element(vmin.begin(), vmin.end());
    CHECK(*vmin_hi - *vmin_lo > 0.1);
}

TEST_CASE("soc_min pinned at zero yields a zero column") {
    const CellParams params = default_cell_params();
    SamplingSpec spec = preset_fig3(params);
    REQUIRE(spec.n_samples == 10000);
    REQUIRE(spec.soc_min_range.degenerate());
    spec.n_samples = 50; // sampling behavior is id-wise, a prefix suffices
    const auto records = run_campaign(spec, params);
    for (const auto& r : records) {
        CHECK(r.limits.soc_min == 0.0);
        CHECK(r.limits.i_charge_a >= 2.3);
        CHECK(r.limits.i_charge_a <= 4.6);
        CHECK(r.limits.i_discharge_a >= 2.3);
        CHECK(r.limits.i_discharge_a <= 11.5);
    }
}

TEST_CASE("campaign CSV round-trips exactly") {
    SamplingSpec spec = small_spec();
    spec.n_samples = 20;
    const CellParams params = default_cell_params();
    const auto records = run_campaign(spec, params);
    const std::string csv = campaign_to_csv(records, "manifest 0123abcd");
    CHECK(csv.rfind("# manifest 0123abcd\n", 0) == 0);
    CHECK(csv.find("scenario_id,soc_min,soc_max,i_charge_A,i_discharge_A,"
                   "initial_efc,hi_initial,rul_hours,v_max,v_min\n") !=
          std::string::npos);

    const auto parsed = campaign_from_csv(csv);
    REQUIRE(parsed.size() == records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        CHECK(parsed[i].scenario_id == records[i].scenario_id);
        CHECK(parsed[i].limits.soc_min == records[i].limits.soc_min);
        CHECK(parsed[i].limits.soc_max == records[i].limits.soc_max);
        CHECK(parsed[i].limits.i_charge_a == records[i].limits.i_charge_a);
        CHECK(parsed[i].limits.i_discharge_a == records[i].limits.i_discharge_a);
        CHECK(parsed[i].initial_efc == records[i].initial_efc);
        CHECK(parsed[i].hi_initial == records[i].hi_initial);
        CHECK(parsed[i].rul_hours == records[i].rul_hours);
        CHECK(parsed[i].v_max == records[i].v_max);
        CHECK(parsed[i].v_min == records[i].v_min);
    }
    // Re-serialization is byte-identical (stable round-trip formatting).
    CHECK(campaign_to_csv(parsed, "manifest 0123abcd") == csv);

    CHECK_THROWS_AS(campaign_from_csv("no header here\n1,2,3\n"), ParamError);
    CHECK_THROWS_AS(campaign_from_csv(""), ParamError);
    CHECK_THROWS_AS(
        campaign_from_csv("scenario_id,soc_min,soc_max,i_charge_A,i_discharge_A,"
                          "initial_efc,hi_initial,rul_hours,v_max,v_min\n"
                          "0,0.1,0.9\n"),
        ParamError);
}

TEST_CASE("sampling spec JSON round-trips and accepts C-rate currents") {
    const CellParams params = default_cell_params();
    const SamplingSpec spec = small_spec();
    const std::string js = sampling_spec_to_json(spec);
    const SamplingSpec back = sampling_spec_from_json(js, params);
    CHECK(back.n_samples == spec.n_samples);
    CHECK(back.soc_min_range.lo == spec.soc_min_range.lo);
    CHECK(back.soc_max_range.hi == spec.soc_max_range.hi);
    CHECK(back.i_charge_range_a.lo == spec.i_charge_range_a.lo);
    CHECK(back.i_discharge_range_a.hi == spec.i_discharge_range_a.hi);
    CHECK(back.initial_efc_range.lo == spec.initial_efc_range.lo);
    CHECK(back.master_seed == spec.master_seed);

    const std::string crate = R"({
      "n_samples": 10,
      "soc_min_range": [0.0, 0.0],
      "soc_max_range": [0.6, 1.0],
      "i_charge_range_c": [1.0, 2.0],
      "i_discharge_range_c": [1.0, 5.0],
      "initial_efc_range": [500, 500],
      "master_seed": 9
    })";
    const SamplingSpec conv = sampling_spec_from_json(crate, params);
    CHECK(conv.i_charge_range_a.lo == doctest::Approx(2.3));
    CHECK(conv.i_charge_range_a.hi == doctest::Approx(4.6));
    CHECK(conv.i_discharge_range_a.lo == doctest::Approx(2.3));
    CHECK(conv.i_discharge_range_a.hi == doctest::Approx(11.5));

    CHECK_THROWS_AS(sampling_spec_from_json("{not json", params), ParamError);
    CHECK_THROWS_AS(sampling_spec_from_json("{\"n_samples\": 0}", params),
                    ParamError);
}

TEST_CASE("preset lookup by name") {
    const CellParams params = default_cell_params();
    CHECK(preset_by_name("fig2", params).n_samples == 500);
    CHECK(preset_by_name("fig3", params).n_samples == 10000);
    CHECK(preset_by_name("fig5", params).n_samples == 100);
    CHECK(preset_fig5(params).t_hours == 120.0);
    CHECK(preset_fig5(params).states.initial_efc_range.hi == 1000.0);
    CHECK_THROWS_AS(preset_by_name("fig9", params), ParamError);
}
