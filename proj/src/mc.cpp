#include "rulopf/mc.hpp"

#include <atomic>
#include <charconv>
#include <cstdio>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "rulopf/errors.hpp"

namespace rulopf {

namespace {

void check_interval(const Interval& iv, const char* name, double lo_bound,
                    double hi_bound) {
    if (!(iv.lo <= iv.hi))
        throw ParamError(std::string(name) + ": empty interval");
    if (iv.lo < lo_bound || iv.hi > hi_bound)
        throw ParamError(std::string(name) + ": interval out of bounds");
}

double uniform_from(std::mt19937_64& rng, const Interval& iv) {
    // Canonical 53-bit mantissa draw; std::uniform_real_distribution is not
    // bit-stable across standard libraries.
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    return iv.lo + u * (iv.hi - iv.lo);
}

} // namespace

void SamplingSpec::validate() const {
    if (n_samples < 1) throw ParamError("n_samples must be >= 1");
    check_interval(soc_min_range, "soc_min_range", 0.0, 1.0);
    check_interval(soc_max_range, "soc_max_range", 0.0, 1.0);
    if (!(soc_min_range.hi < soc_max_range.lo))
        throw ParamError("soc_min_range must lie entirely below soc_max_range");
    check_interval(i_charge_range_a, "i_charge_range_a", 1e-9, 1e9);
    check_interval(i_discharge_range_a, "i_discharge_range_a", 1e-9, 1e9);
    check_interval(initial_efc_range, "initial_efc_range", 0.0, 1e12);
}

std::uint64_t substream_seed(std::uint64_t master_seed,
                             std::uint64_t scenario_id) {
    // SplitMix64 finalizer applied twice; decorrelates consecutive ids.
    auto mix = [](std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    };
    return mix(mix(master_seed) + scenario_id);
}

std::pair<OperatingLimits, double> sample_scenario(const SamplingSpec& spec,
                                                   std::size_t scenario_id) {
    spec.validate();
    if (scenario_id >= spec.n_samples)
        throw IndexError("scenario_id " + std::to_string(scenario_id) +
                         " >= n_samples " + std::to_string(spec.n_samples));
    std::mt19937_64 rng(substream_seed(spec.master_seed, scenario_id));
    OperatingLimits lim;
    lim.soc_min = uniform_from(rng, spec.soc_min_range);
    lim.soc_max = uniform_from(rng, spec.soc_max_range);
    lim.i_charge_a = uniform_from(rng, spec.i_charge_range_a);
    lim.i_discharge_a = uniform_from(rng, spec.i_discharge_range_a);
    const double initial_efc = uniform_from(rng, spec.initial_efc_range);
    return {lim, initial_efc};
}

std::vector<ScenarioRecord> run_campaign(const SamplingSpec& spec,
                                         const CellParams& params,
                                         unsigned n_threads) {
    spec.validate();
    params.validate();
    if (n_threads == 0) n_threads = 1;

    std::vector<ScenarioRecord> records(spec.n_samples);
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::string error_message;
    std::mutex error_mutex;

    auto worker = [&] {
        for (;;) {
            const std::size_t id = next.fetch_add(1);
            if (id >= spec.n_samples || failed.load()) break;
            try {
                const auto [limits, efc0] = sample_scenario(spec, id);
                const CellState s0 = state_from_efc(efc0, params);
                const RulResult r = simulate_to_eol(s0, params, limits);
                ScenarioRecord& rec = records[id];
                rec.scenario_id = id;
                rec.limits = limits;
                rec.initial_efc = efc0;
                rec.hi_initial = health_indicator(s0, params);
                rec.rul_hours = r.rul_hours;
                rec.v_max = r.v_max_observed;
                rec.v_min = r.v_min_observed;
            } catch (const Error& e) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!failed.exchange(true))
                    error_message = "scenario " + std::to_string(id) + ": " + e.what();
            }
        }
    };

    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(n_threads);
        for (unsigned t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    if (failed.load()) throw NonTerminating(error_message);
    return records;
}

namespace {

void append_double(std::string& out, double v) {
    char buf[32];
    const int len = std::snprintf(buf, sizeof buf, "%.17g", v);
    out.append(buf, static_cast<std::size_t>(len));
}

} // namespace

std::string campaign_to_csv(const std::vector<ScenarioRecord>& records,
                            const std::string& comment) {
    std::string out;
    if (!comment.empty()) out += "# " + comment + "\n";
    out += "scenario_id,soc_min,soc_max,i_charge_A,i_discharge_A,initial_efc,"
           "hi_initial,rul_hours,v_max,v_min\n";
    for (const auto& r : records) {
        out += std::to_string(r.scenario_id);
        for (double v : {r.limits.soc_min, r.limits.soc_max, r.limits.i_charge_a,
                         r.limits.i_discharge_a, r.initial_efc, r.hi_initial,
                         r.rul_hours, r.v_max, r.v_min}) {
            out += ',';
            append_double(out, v);
        }
        out += '\n';
    }
    return out;
}

std::vector<ScenarioRecord> campaign_from_csv(const std::string& text) {
    std::vector<ScenarioRecord> records;
    std::istringstream in(text);
    std::string line;
    bool header_seen = false;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (!header_seen) {
            if (line.rfind("scenario_id,", 0) != 0)
                throw ParamError("campaign CSV: unexpected header: " + line);
            header_seen = true;
            continue;
        }
        ScenarioRecord r;
        double fields[10];
        const char* p = line.data();
        const char* end = line.data() + line.size();
        for (int i = 0; i < 10; ++i) {
            if (i > 0) {
                if (p >= end || *p != ',')
                    throw ParamError("campaign CSV: expected 10 columns: " + line);
                ++p;
            }
            auto [next, ec] = std::from_chars(p, end, fields[i]);
            if (ec != std::errc())
                throw ParamError("campaign CSV: bad number in line: " + line);
            p = next;
        }
        r.scenario_id = static_cast<std::size_t>(fields[0]);
        r.limits.soc_min = fields[1];
        r.limits.soc_max = fields[2];
        r.limits.i_charge_a = fields[3];
        r.limits.i_discharge_a = fields[4];
        r.initial_efc = fields[5];
        r.hi_initial = fields[6];
        r.rul_hours = fields[7];
        r.v_max = fields[8];
        r.v_min = fields[9];
        records.push_back(r);
    }
    if (!header_seen) throw ParamError("campaign CSV: missing header");
    return records;
}

std::string sampling_spec_to_json(const SamplingSpec& spec) {
    nlohmann::json j;
    j["n_samples"] = spec.n_samples;
    j["soc_min_range"] = {spec.soc_min_range.lo, spec.soc_min_range.hi};
    j["soc_max_range"] = {spec.soc_max_range.lo, spec.soc_max_range.hi};
    j["i_charge_range_a"] = {spec.i_charge_range_a.lo, spec.i_charge_range_a.hi};
    j["i_discharge_range_a"] = {spec.i_discharge_range_a.lo,
                                spec.i_discharge_range_a.hi};
    j["initial_efc_range"] = {spec.initial_efc_range.lo,
                              spec.initial_efc_range.hi};
    j["master_seed"] = spec.master_seed;
    return j.dump(2);
}

SamplingSpec sampling_spec_from_json(const std::string& text,
                                     const CellParams& params) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ParamError(std::string("bad sampling spec JSON: ") + e.what());
    }
    SamplingSpec spec;
    auto interval = [&](const char* key) {
        return Interval{j[key][0].get<double>(), j[key][1].get<double>()};
    };
    try {
        spec.n_samples = j.at("n_samples").get<std::size_t>();
        if (j.contains("soc_min_range")) spec.soc_min_range = interval("soc_min_range");
        if (j.contains("soc_max_range")) spec.soc_max_range = interval("soc_max_range");
        if (j.contains("i_charge_range_a")) {
            spec.i_charge_range_a = interval("i_charge_range_a");
        } else if (j.contains("i_charge_range_c")) {
            spec.i_charge_range_a = {j["i_charge_range_c"][0].get<double>() *
                                         params.nominal_capacity_ah,
                                     j["i_charge_range_c"][1].get<double>() *
                                         params.nominal_capacity_ah};
        }
        if (j.contains("i_discharge_range_a")) {
            spec.i_discharge_range_a = interval("i_discharge_range_a");
        } else if (j.contains("i_discharge_range_c")) {
            spec.i_discharge_range_a = {j["i_discharge_range_c"][0].get<double>() *
                                            params.nominal_capacity_ah,
                                        j["i_discharge_range_c"][1].get<double>() *
                                            params.nominal_capacity_ah};
        }
        if (j.contains("initial_efc_range"))
            spec.initial_efc_range = interval("initial_efc_range");
        if (j.contains("master_seed"))
            spec.master_seed = j["master_seed"].get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw ParamError(std::string("bad sampling spec JSON: ") + e.what());
    }
    spec.validate();
    return spec;
}

} // namespace rulopf
