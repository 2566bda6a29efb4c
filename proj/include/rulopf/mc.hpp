#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rulopf/cell.hpp"

namespace rulopf {

/// Closed interval [lo, hi]; degenerate (lo == hi) means a fixed value.
struct Interval {
    double lo = 0;
    double hi = 0;
    bool degenerate() const { return lo == hi; }
};

/// What to randomize and how many scenarios to draw.
///
/// All dimensions are sampled i.i.d. uniform from their intervals. Each
/// scenario uses its own RNG substream derived from (master_seed,
/// scenario_id), so results do not depend on execution order.
struct SamplingSpec {
    std::size_t n_samples = 0;
    Interval soc_min_range{0.0, 0.0};
    Interval soc_max_range{1.0, 1.0};
    Interval i_charge_range_a{2.3, 2.3};
    Interval i_discharge_range_a{2.3, 2.3};
    Interval initial_efc_range{0.0, 0.0};
    std::uint64_t master_seed = 0;

    void validate() const;
};

/// One Monte Carlo sample: the drawn operating window plus the simulated
/// RUL and observed voltage bounds.
struct ScenarioRecord {
    std::size_t scenario_id = 0;
    OperatingLimits limits;
    double initial_efc = 0;
    double hi_initial = 0;
    double rul_hours = 0;
    double v_max = 0;
    double v_min = 0;
};

/// Deterministic per-scenario substream seed (SplitMix64 over master ^ id).
std::uint64_t substream_seed(std::uint64_t master_seed, std::uint64_t scenario_id);

/// Draws the inputs of one scenario. Throws IndexError if scenario_id is out
/// of range. Draw order per scenario: soc_min, soc_max, i_charge,
/// i_discharge, initial_efc.
std::pair<OperatingLimits, double> sample_scenario(const SamplingSpec& spec,
                                                   std::size_t scenario_id);

/// Runs every scenario to end of life. Output is sorted by scenario_id and
/// independent of n_threads. A NonTerminating simulation is reported with the
/// offending scenario id attached.
std::vector<ScenarioRecord> run_campaign(const SamplingSpec& spec,
                                         const CellParams& params,
                                         unsigned n_threads = 1);

/// CSV serialization. `comment` lines (if any) are emitted as "# ..." before
/// the header. Numbers are printed with round-trip precision, so output is
/// byte-stable.
std::string campaign_to_csv(const std::vector<ScenarioRecord>& records,
                            const std::string& comment = "");
std::vector<ScenarioRecord> campaign_from_csv(const std::string& text);

std::string sampling_spec_to_json(const SamplingSpec& spec);
/// Accepts current intervals either in amperes (i_*_range_a) or as C-rates
/// (i_*_range_c, converted via the nominal capacity).
SamplingSpec sampling_spec_from_json(const std::string& text,
                                     const CellParams& params);

} // namespace rulopf
