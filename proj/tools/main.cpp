// Command-line front end: runs the cell-aging / feasible-region / dispatch
// pipeline end to end and writes plot-ready CSV/JSON artifacts. Every run
// writes a manifest (inputs, hashes, seed) before any output, and all CSVs
// carry the manifest hash so outputs can be traced to the exact run.
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "rulopf/cell.hpp"
#include "rulopf/errors.hpp"
#include "rulopf/matpower.hpp"
#include "rulopf/mc.hpp"
#include "rulopf/opf.hpp"
#include "rulopf/presets.hpp"
#include "rulopf/region.hpp"
#include "rulopf/stats.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace rulopf;

namespace {

constexpr const char* kToolVersion = "rulopf 1.0.0";

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ParamError("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& path, const std::string& content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    out << content;
    if (!out)
        throw Error("cannot write " + path.string());
}

std::string fnv1a64_hex(const std::string& data) {
    std::uint64_t h = 1469598103934665603ull;
    for (const unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(h));
    return buf;
}

json parse_json_text(const std::string& text, const std::string& what) {
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw ParamError("bad JSON in " + what + ": " + e.what());
    }
}

// Run identity written before any output. The same manifest (same inputs,
// config, seed, tool version) always produces byte-identical outputs.
class Manifest {
public:
    Manifest(const std::string& subcommand, const std::string& config,
             std::optional<std::uint64_t> seed, const std::string& out_dir) {
        j_["subcommand"] = subcommand;
        j_["config"] = config;
        if (seed)
            j_["seed"] = *seed;
        else
            j_["seed"] = nullptr;
        j_["out_dir"] = out_dir;
        j_["tool_version"] = kToolVersion;
        j_["inputs"] = json::object();
        stem_ = subcommand;
        for (auto& c : stem_)
            if (c == '-') c = '_';
    }

    void add_input(const std::string& role, const std::string& path,
                   const std::string& content) {
        j_["inputs"][role] = {{"path", path},
                              {"fnv1a64", fnv1a64_hex(content)}};
    }

    /// Records a flag or resolved setting that shapes the run's results.
    void set_param(const std::string& key, json value) {
        j_["params"][key] = std::move(value);
    }

    /// Writes <out>/<subcommand>_manifest.json; returns the run-identity
    /// hash. Identity covers what was computed — subcommand, seed, params,
    /// preset choice, and input *content* hashes — never where it ran, so
    /// the same run from any directory stamps its outputs identically.
    std::string write(const fs::path& out_dir) const {
        const std::string text = j_.dump(2) + "\n";
        write_file(out_dir / (stem_ + "_manifest.json"), text);
        json identity;
        identity["subcommand"] = j_.at("subcommand");
        identity["seed"] = j_.at("seed");
        identity["tool_version"] = j_.at("tool_version");
        const auto& cfg = j_.at("config").get_ref<const std::string&>();
        if (cfg.rfind("preset:", 0) == 0) identity["config"] = cfg;
        if (j_.contains("params")) identity["params"] = j_.at("params");
        json inputs = json::object();
        for (const auto& [role, entry] : j_.at("inputs").items())
            inputs[role] = entry.at("fnv1a64");
        identity["inputs"] = inputs;
        return fnv1a64_hex(identity.dump(2));
    }

private:
    json j_;
    std::string stem_;
};

std::string stamped(const std::string& manifest_hash, const std::string& csv) {
    return "# manifest " + manifest_hash + "\n" + csv;
}

struct GlobalArgs {
    std::string config_path;
    std::string out_dir = ".";
    std::uint64_t seed = 0;
    bool seed_given = false;
    unsigned threads = 1;
};

CellParams params_from_optional_file(const std::string& path,
                                     bool must_exist, Manifest* manifest,
                                     std::string* content_out = nullptr) {
    if (path.empty() || (!must_exist && !fs::exists(path)))
        return default_cell_params();
    const std::string text = read_file(path);
    if (manifest) manifest->add_input("cell", path, text);
    if (content_out) *content_out = text;
    return cell_params_from_json(text);
}

// ---------------------------------------------------------------------------
// cycle-sim: one cell, one operating window, simulated to end of life.

int cmd_cycle_sim(const GlobalArgs& g) {
    CellParams params = default_cell_params();
    double initial_efc = 0.0;
    OperatingLimits limits;  // defaults: full window at 1C

    std::string config_text;
    if (!g.config_path.empty()) config_text = read_file(g.config_path);

    Manifest manifest("cycle-sim", g.config_path, std::nullopt, g.out_dir);
    if (!config_text.empty()) {
        manifest.add_input("config", g.config_path, config_text);
        const json j = parse_json_text(config_text, "config");
        try {
            if (j.contains("cell"))
                params = cell_params_from_json(j.at("cell").dump());
            initial_efc = j.value("initial_efc", 0.0);
            if (j.contains("limits")) {
                const json& jl = j.at("limits");
                limits.soc_min = jl.value("soc_min", limits.soc_min);
                limits.soc_max = jl.value("soc_max", limits.soc_max);
                limits.i_charge_a = jl.value("i_charge_a", limits.i_charge_a);
                limits.i_discharge_a =
                    jl.value("i_discharge_a", limits.i_discharge_a);
            }
        } catch (const json::exception& e) {
            throw ParamError(std::string("bad cycle-sim config: ") + e.what());
        }
    }
    params.validate();
    limits.validate();

    const std::string hash = manifest.write(g.out_dir);
    const CellState start = state_from_efc(initial_efc, params);
    const RulResult result = simulate_to_eol(start, params, limits);

    json out;
    out["manifest"] = hash;
    out["initial_efc"] = initial_efc;
    out["limits"] = {{"soc_min", limits.soc_min},
                     {"soc_max", limits.soc_max},
                     {"i_charge_a", limits.i_charge_a},
                     {"i_discharge_a", limits.i_discharge_a}};
    out["rul_hours"] = result.rul_hours;
    out["v_max_observed"] = result.v_max_observed;
    out["v_min_observed"] = result.v_min_observed;
    out["final_state"] = {{"soc", result.final_state.soc},
                          {"capacity_ah", result.final_state.capacity_ah},
                          {"resistance_ohm", result.final_state.resistance_ohm},
                          {"efc", result.final_state.efc},
                          {"elapsed_h", result.final_state.elapsed_h}};
    write_file(fs::path(g.out_dir) / "cycle_sim_result.json",
               out.dump(2) + "\n");
    return 0;
}

// ---------------------------------------------------------------------------
// mc: Monte Carlo cycling campaign, from a named preset or a config file.

int cmd_mc(const GlobalArgs& g, const std::string& preset) {
    CellParams params = default_cell_params();
    SamplingSpec spec;
    std::string config_display;
    std::string config_text;

    if (!preset.empty() && !g.config_path.empty())
        throw ParamError("give either --preset or --config, not both");
    if (!preset.empty()) {
        spec = preset_by_name(preset, params);
        config_display = "preset:" + preset;
    } else if (!g.config_path.empty()) {
        config_text = read_file(g.config_path);
        const json j = parse_json_text(config_text, "config");
        try {
            if (j.contains("cell"))
                params = cell_params_from_json(j.at("cell").dump());
            const json spec_json = j.contains("spec") ? j.at("spec") : j;
            spec = sampling_spec_from_json(spec_json.dump(), params);
        } catch (const json::exception& e) {
            throw ParamError(std::string("bad mc config: ") + e.what());
        }
        config_display = g.config_path;
    } else {
        throw ParamError("mc needs --preset or --config");
    }
    if (g.seed_given) spec.master_seed = g.seed;
    spec.validate();

    Manifest manifest("mc", config_display, spec.master_seed, g.out_dir);
    if (!config_text.empty())
        manifest.add_input("config", g.config_path, config_text);
    const std::string hash = manifest.write(g.out_dir);

    const std::vector<ScenarioRecord> records =
        run_campaign(spec, params, g.threads);
    write_file(fs::path(g.out_dir) / "campaign.csv",
               campaign_to_csv(records, "manifest " + hash));
    write_file(fs::path(g.out_dir) / "sampling_spec.json",
               sampling_spec_to_json(spec) + "\n");
    write_file(fs::path(g.out_dir) / "cell_params.json",
               cell_params_to_json(params) + "\n");
    return 0;
}

// ---------------------------------------------------------------------------
// analyze: correlation table always; life surfaces when the campaign spec
// spans a non-degenerate current domain.

int cmd_analyze(const GlobalArgs& g, std::string campaign_path,
                std::string spec_path, std::string cell_path) {
    const fs::path out(g.out_dir);
    if (campaign_path.empty()) campaign_path = (out / "campaign.csv").string();
    if (spec_path.empty()) spec_path = (out / "sampling_spec.json").string();
    if (cell_path.empty()) cell_path = (out / "cell_params.json").string();

    Manifest manifest("analyze", campaign_path, std::nullopt, g.out_dir);

    const std::string campaign_text = read_file(campaign_path);
    manifest.add_input("campaign", campaign_path, campaign_text);
    const CellParams params =
        params_from_optional_file(cell_path, false, &manifest);

    std::optional<SamplingSpec> spec;
    if (fs::exists(spec_path)) {
        const std::string spec_text = read_file(spec_path);
        manifest.add_input("spec", spec_path, spec_text);
        spec = sampling_spec_from_json(spec_text, params);
    }

    const std::string hash = manifest.write(g.out_dir);
    const std::vector<ScenarioRecord> records =
        campaign_from_csv(campaign_text);
    const std::vector<CorrelationReport> table = correlation_table(records);
    write_file(out / "correlation.csv",
               stamped(hash, correlation_table_to_csv(table)));

    if (spec && !spec->i_charge_range_a.degenerate() &&
        !spec->i_discharge_range_a.degenerate()) {
        const SurfaceFamily family =
            build_surface_family(records, *spec, params);
        write_file(out / "surfaces.json", family_to_json(family) + "\n");
    }
    return 0;
}

// ---------------------------------------------------------------------------
// box: size a feasible box for a life target, either from stored surfaces
// (at a given health indicator) or by rebuilding a campaign at a given wear.

int cmd_box(const GlobalArgs& g, std::string surfaces_path,
            std::string spec_path, std::string cell_path, double t_hours,
            double hi_arg, bool hi_given, double efc, bool efc_given,
            std::size_t n_rebuild) {
    const fs::path out(g.out_dir);
    if (surfaces_path.empty()) surfaces_path = (out / "surfaces.json").string();
    if (spec_path.empty()) spec_path = (out / "sampling_spec.json").string();
    if (cell_path.empty()) cell_path = (out / "cell_params.json").string();

    const RulTarget target{t_hours};
    target.validate();

    SurfaceFamily family;
    double hi = hi_given ? hi_arg : 1.0;
    std::string hash;
    if (efc_given) {
        const std::string spec_text = read_file(spec_path);
        const std::string cell_text =
            fs::exists(cell_path) ? read_file(cell_path) : std::string();
        const CellParams params = cell_text.empty()
                                      ? default_cell_params()
                                      : cell_params_from_json(cell_text);
        SamplingSpec rebuild = sampling_spec_from_json(spec_text, params);
        if (g.seed_given) rebuild.master_seed = g.seed;
        rebuild.n_samples = n_rebuild;
        rebuild.initial_efc_range = {efc, efc};
        rebuild.validate();
        hi = health_indicator(state_from_efc(efc, params), params);
        Manifest manifest("box", "efc:" + spec_path, rebuild.master_seed,
                          g.out_dir);
        manifest.add_input("spec", spec_path, spec_text);
        if (!cell_text.empty())
            manifest.add_input("cell", cell_path, cell_text);
        manifest.set_param("t_hours", t_hours);
        manifest.set_param("efc", efc);
        manifest.set_param("n_rebuild", n_rebuild);
        hash = manifest.write(g.out_dir);
        const std::vector<ScenarioRecord> records =
            run_campaign(rebuild, params, g.threads);
        family = build_surface_family(records, rebuild, params);
    } else {
        const std::string family_text = read_file(surfaces_path);
        Manifest manifest("box", surfaces_path, std::nullopt, g.out_dir);
        manifest.add_input("surfaces", surfaces_path, family_text);
        params_from_optional_file(cell_path, false, &manifest);
        manifest.set_param("t_hours", t_hours);
        manifest.set_param("hi", hi);
        hash = manifest.write(g.out_dir);
        family = family_from_json(family_text);
    }

    BoxRegion box;
    try {
        box = build_box(family, target, hi);
    } catch (const Infeasible&) {
        // Target unattainable: record an explicit zero-size box.
        box.i_charge_min = box.i_charge_max = family.i_charge_lo;
        box.i_discharge_min = box.i_discharge_max = family.i_discharge_lo;
        box.v_max_bound = box.v_min_domain = family.v_levels.front();
        box.soc_level = family.soc_levels.front();
        box.soc_min = family.soc_min_ref;
        box.level_index = -1;
        box.scale = 0.0;
        box.hi = hi;
        box.t_hours = target.t_hours;
        box.feasible = false;
    }
    write_file(out / "box.json", box_to_json(box) + "\n");
    write_file(out / "contour.csv",
               stamped(hash, contour_csv(family,
                                         box.feasible ? box.level_index : 0,
                                         box)));
    return 0;
}

// ---------------------------------------------------------------------------
// hi-sweep: boxes across the aging axis.

int cmd_hi_sweep(const GlobalArgs& g, std::size_t samples_override,
                 std::size_t rebuild_override, double target_override) {
    CellParams params = default_cell_params();
    HiSweepConfig cfg = preset_fig5(params);
    std::string config_text;
    if (!g.config_path.empty()) {
        config_text = read_file(g.config_path);
        const json j = parse_json_text(config_text, "config");
        try {
            if (j.contains("cell"))
                params = cell_params_from_json(j.at("cell").dump());
            cfg = preset_fig5(params);
            if (j.contains("states"))
                cfg.states =
                    sampling_spec_from_json(j.at("states").dump(), params);
            cfg.n_rebuild = j.value("n_rebuild", cfg.n_rebuild);
            cfg.t_hours = j.value("t_hours", cfg.t_hours);
        } catch (const json::exception& e) {
            throw ParamError(std::string("bad hi-sweep config: ") + e.what());
        }
    }
    if (samples_override > 0) cfg.states.n_samples = samples_override;
    if (rebuild_override > 0) cfg.n_rebuild = rebuild_override;
    if (target_override > 0) cfg.t_hours = target_override;
    if (g.seed_given) cfg.states.master_seed = g.seed;
    cfg.states.validate();
    RulTarget{cfg.t_hours}.validate();

    Manifest manifest("hi-sweep",
                      g.config_path.empty() ? "preset:fig5" : g.config_path,
                      cfg.states.master_seed, g.out_dir);
    if (!config_text.empty())
        manifest.add_input("config", g.config_path, config_text);
    manifest.set_param("n_samples", cfg.states.n_samples);
    manifest.set_param("n_rebuild", cfg.n_rebuild);
    manifest.set_param("t_hours", cfg.t_hours);
    const std::string hash = manifest.write(g.out_dir);

    json resolved;
    resolved["states"] = json::parse(sampling_spec_to_json(cfg.states));
    resolved["n_rebuild"] = cfg.n_rebuild;
    resolved["t_hours"] = cfg.t_hours;
    write_file(fs::path(g.out_dir) / "hi_sweep_config.json",
               resolved.dump(2) + "\n");

    const std::vector<SweepEntry> entries = hi_sweep(params, cfg, g.threads);
    write_file(fs::path(g.out_dir) / "sweep.csv",
               stamped(hash, sweep_to_csv(entries)));
    return 0;
}

// ---------------------------------------------------------------------------
// opf: grid dispatch with batteries under nameplate (case1) or life-target
// (case2) limits.

struct BatteryPlan {
    CellParams params = default_cell_params();
    std::vector<BatteryDevice> devices;
    bool build_boxes = true;
    double t_hours = 120.0;
    std::size_t n_rebuild = 1000;
    SamplingSpec rebuild;
};

BatteryPlan parse_battery_plan(const std::string& text, double t_flag,
                               std::size_t rebuild_flag) {
    BatteryPlan plan;
    plan.t_hours = t_flag;
    plan.n_rebuild = rebuild_flag;
    plan.rebuild = preset_fig3(plan.params);
    if (text.empty()) return plan;

    const json j = parse_json_text(text, "battery config");
    try {
        if (j.contains("cell"))
            plan.params = cell_params_from_json(j.at("cell").dump());
        plan.build_boxes = j.value("build_boxes", true);
        plan.t_hours = j.value("t_hours", plan.t_hours);
        plan.n_rebuild = j.value("n_rebuild", plan.n_rebuild);
        if (j.contains("rebuild_spec"))
            plan.rebuild = sampling_spec_from_json(j.at("rebuild_spec").dump(),
                                                   plan.params);
        else if (j.contains("rebuild_preset"))
            plan.rebuild = preset_by_name(
                j.at("rebuild_preset").get<std::string>(), plan.params);
        else
            plan.rebuild = preset_fig3(plan.params);

        for (const json& jd : j.at("batteries")) {
            BatteryDevice d;
            d.bus = jd.at("bus").get<int>();
            d.n_cells = jd.at("n_cells").get<std::size_t>();
            d.initial_efc = jd.value("initial_efc", 0.0);
            d.soc_min = jd.value("soc_min", 0.0);
            d.soc_max = jd.value("soc_max", 1.0);
            d.i_charge_max_a = jd.value("i_charge_max_a", 0.0);
            d.i_discharge_max_a = jd.value("i_discharge_max_a", 0.0);
            d.hi = health_indicator(
                state_from_efc(d.initial_efc, plan.params), plan.params);
            if (jd.contains("constraints")) {
                const json& jc = jd.at("constraints");
                d.constraints.p_charge_max_kw =
                    jc.at("p_charge_max_kw").get<double>();
                d.constraints.p_discharge_max_kw =
                    jc.at("p_discharge_max_kw").get<double>();
                d.constraints.v_bus_max_pu =
                    jc.at("v_bus_max_pu").get<double>();
                d.has_box = true;
            }
            plan.devices.push_back(d);
        }
    } catch (const json::exception& e) {
        throw ParamError(std::string("bad battery config: ") + e.what());
    }
    return plan;
}

/// Endows each device with trimmed box-derived limits at its aging state.
std::vector<BatteryDevice> devices_with_boxes(const BatteryPlan& plan,
                                              unsigned threads) {
    const RulTarget target{plan.t_hours};
    std::vector<BatteryDevice> out;
    for (const BatteryDevice& d : plan.devices) {
        BoxRegion box;
        try {
            box = box_for_state(plan.params, plan.rebuild, d.initial_efc,
                                target, plan.n_rebuild, threads);
            box = trim_box_to_simulation(box, plan.params, d.initial_efc,
                                         target);
        } catch (const Infeasible&) {
            box = BoxRegion{};  // zero-size: pack stays idle
            box.hi = d.hi;
            box.t_hours = target.t_hours;
        }
        BatteryDevice b = d;
        b.constraints = box_to_grid_constraints(box, plan.params, d.n_cells);
        b.i_charge_max_a = box.i_charge_max;
        b.i_discharge_max_a = box.i_discharge_max;
        b.soc_min = box.soc_min;
        b.soc_max = box.feasible ? box.soc_level : d.soc_max;
        b.has_box = true;
        out.push_back(b);
    }
    return out;
}

int cmd_opf(const GlobalArgs& g, const std::string& case_path,
            const std::string& batteries_path, const std::string& mode,
            double t_flag, std::size_t rebuild_flag) {
    const fs::path out(g.out_dir);
    const std::string case_text = read_file(case_path);
    const NetworkCase net = parse_matpower(case_text);

    std::string battery_text;
    if (!batteries_path.empty()) battery_text = read_file(batteries_path);
    BatteryPlan plan = parse_battery_plan(battery_text, t_flag, rebuild_flag);
    if (g.seed_given) plan.rebuild.master_seed = g.seed;

    const bool want1 = mode == "case1" || mode == "both";
    const bool want2 = mode == "case2" || mode == "both";
    const bool rebuild_runs =
        want2 && plan.build_boxes && !plan.devices.empty();

    Manifest manifest("opf", batteries_path.empty() ? case_path
                                                    : batteries_path,
                      rebuild_runs
                          ? std::optional<std::uint64_t>(
                                plan.rebuild.master_seed)
                          : std::nullopt,
                      g.out_dir);
    manifest.add_input("case", case_path, case_text);
    if (!battery_text.empty())
        manifest.add_input("batteries", batteries_path, battery_text);
    manifest.set_param("mode", mode);
    if (rebuild_runs) {
        manifest.set_param("t_hours", plan.t_hours);
        manifest.set_param("n_rebuild", plan.n_rebuild);
    }
    const std::string hash = manifest.write(g.out_dir);

    bool all_converged = true;
    OpfProblem p1, p2;
    OpfSolution s1, s2;
    if (want1) {
        p1 = build_problem(net, plan.devices, OpfMode::case1);
        s1 = solve_opf(p1);
        all_converged = all_converged && s1.converged;
        write_file(out / "opf_case1.json",
                   opf_solution_to_json(p1.net, s1) + "\n");
        write_file(out / "opf_case1_bus.csv",
                   stamped(hash, opf_bus_csv(p1.net, s1)));
        write_file(out / "opf_case1_gen.csv",
                   stamped(hash, opf_gen_csv(p1.net, s1)));
    }
    if (want2) {
        const std::vector<BatteryDevice> devices2 =
            plan.build_boxes ? devices_with_boxes(plan, g.threads)
                             : plan.devices;
        p2 = build_problem(net, devices2, OpfMode::case2);
        s2 = solve_opf(p2);
        all_converged = all_converged && s2.converged;
        write_file(out / "opf_case2.json",
                   opf_solution_to_json(p2.net, s2) + "\n");
        write_file(out / "opf_case2_bus.csv",
                   stamped(hash, opf_bus_csv(p2.net, s2)));
        write_file(out / "opf_case2_gen.csv",
                   stamped(hash, opf_gen_csv(p2.net, s2)));
    }
    if (want1 && want2) {
        const std::vector<double> rul1 =
            verify_rul(s1, p1.net.batteries, plan.params);
        const std::vector<double> rul2 =
            verify_rul(s2, p2.net.batteries, plan.params);
        write_file(out / "comparison.csv",
                   stamped(hash,
                           comparison_csv(p1, s1, rul1, p2, s2, rul2)));
    }
    if (!all_converged)
        throw Diverged("dispatch solve did not converge within the "
                       "iteration limit");
    return 0;
}

int classify(const std::exception& e) {
    if (dynamic_cast<const ParseError*>(&e) ||
        dynamic_cast<const ParamError*>(&e) ||
        dynamic_cast<const RangeError*>(&e) ||
        dynamic_cast<const SchemaError*>(&e) ||
        dynamic_cast<const ValidationError*>(&e) ||
        dynamic_cast<const UnknownBus*>(&e) ||
        dynamic_cast<const DegenerateInput*>(&e) ||
        dynamic_cast<const RankDeficient*>(&e) ||
        dynamic_cast<const OutOfDomain*>(&e) ||
        dynamic_cast<const MissingConstraints*>(&e))
        return 2;
    return 3;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"battery-health-aware grid dispatch toolkit"};
    app.require_subcommand(1);

    GlobalArgs g;
    app.add_option("--config", g.config_path, "JSON configuration file");
    CLI::Option* seed_opt =
        app.add_option("--seed", g.seed, "master seed override");
    app.add_option("--out", g.out_dir, "output directory (default: .)");
    app.add_option("--threads", g.threads, "worker threads (default: 1)")
        ->check(CLI::Range(1u, 1024u));

    CLI::App* sim = app.add_subcommand(
        "cycle-sim", "simulate one cell to end of life");
    sim->fallthrough();

    std::string mc_preset;
    CLI::App* mc = app.add_subcommand(
        "mc", "run a Monte Carlo cycling campaign");
    mc->fallthrough();
    mc->add_option("--preset", mc_preset,
                   "named campaign: fig2, fig3, or fig5");

    std::string an_campaign, an_spec, an_cell;
    CLI::App* analyze = app.add_subcommand(
        "analyze", "correlations and life surfaces from a campaign");
    analyze->fallthrough();
    analyze->add_option("--campaign", an_campaign,
                        "campaign CSV (default: <out>/campaign.csv)");
    analyze->add_option("--spec", an_spec,
                        "sampling spec JSON (default: <out>/sampling_spec.json)");
    analyze->add_option("--cell", an_cell,
                        "cell params JSON (default: <out>/cell_params.json)");

    std::string bx_surfaces, bx_spec, bx_cell;
    double bx_target = 0, bx_hi = 1.0, bx_efc = 0;
    std::size_t bx_rebuild = 1000;
    CLI::App* box = app.add_subcommand(
        "box", "size a feasible box for a life target");
    box->fallthrough();
    box->add_option("--surfaces", bx_surfaces,
                    "surface family JSON (default: <out>/surfaces.json)");
    box->add_option("--spec", bx_spec,
                    "sampling spec JSON for --efc rebuilds");
    box->add_option("--cell", bx_cell, "cell params JSON");
    box->add_option("--target", bx_target, "life target in hours")
        ->required();
    CLI::Option* hi_opt =
        box->add_option("--hi", bx_hi, "health indicator in [0,1]")
            ->check(CLI::Range(0.0, 1.0));
    CLI::Option* efc_opt = box->add_option(
        "--efc", bx_efc, "rebuild surfaces at this initial wear (EFC)");
    hi_opt->excludes(efc_opt);
    box->add_option("--rebuild", bx_rebuild,
                    "campaign size for --efc rebuilds (default: 1000)");

    std::size_t hs_samples = 0, hs_rebuild = 0;
    double hs_target = 0;
    CLI::App* sweep = app.add_subcommand(
        "hi-sweep", "box metrics across the battery aging axis");
    sweep->fallthrough();
    sweep->add_option("--samples", hs_samples, "number of aging states");
    sweep->add_option("--rebuild", hs_rebuild, "campaign size per state");
    sweep->add_option("--target", hs_target, "life target in hours");

    std::string opf_case, opf_batteries, opf_mode = "both";
    double opf_target = 120.0;
    std::size_t opf_rebuild = 1000;
    CLI::App* opf = app.add_subcommand(
        "opf", "grid dispatch with battery limits (case1/case2)");
    opf->fallthrough();
    opf->add_option("--case", opf_case, "network case file (.m)")
        ->required();
    opf->add_option("--batteries", opf_batteries, "battery config JSON");
    opf->add_option("--mode", opf_mode, "case1, case2, or both")
        ->check(CLI::IsMember({"case1", "case2", "both"}));
    opf->add_option("--target", opf_target,
                    "life target in hours for case2 boxes (default: 120)");
    opf->add_option("--rebuild", opf_rebuild,
                    "campaign size per battery box (default: 1000)");

    try {
        app.parse(argc, argv);
        g.seed_given = seed_opt->count() > 0;
        if (sim->parsed()) return cmd_cycle_sim(g);
        if (mc->parsed()) return cmd_mc(g, mc_preset);
        if (analyze->parsed())
            return cmd_analyze(g, an_campaign, an_spec, an_cell);
        if (box->parsed())
            return cmd_box(g, bx_surfaces, bx_spec, bx_cell, bx_target, bx_hi,
                           hi_opt->count() > 0, bx_efc, efc_opt->count() > 0,
                           bx_rebuild);
        if (sweep->parsed())
            return cmd_hi_sweep(g, hs_samples, hs_rebuild, hs_target);
        if (opf->parsed())
            return cmd_opf(g, opf_case, opf_batteries, opf_mode, opf_target,
                           opf_rebuild);
        return 2;
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return classify(e);
    }
}
