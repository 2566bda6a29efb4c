#include "rulopf/presets.hpp"

#include "rulopf/errors.hpp"

namespace rulopf {

SamplingSpec preset_fig2(const CellParams& params) {
    SamplingSpec spec;
    spec.n_samples = 500;
    spec.soc_min_range = {0.0, 0.4};
    spec.soc_max_range = {0.6, 1.0};
    spec.i_charge_range_a = {4.3, 4.3};
    spec.i_discharge_range_a = {11.7, 11.7};
    spec.initial_efc_range = {500.0, 500.0};
    spec.master_seed = 42;
    (void)params;
    return spec;
}

SamplingSpec preset_fig3(const CellParams& params) {
    const double c = params.nominal_capacity_ah;
    SamplingSpec spec;
    spec.n_samples = 10000;
    spec.soc_min_range = {0.0, 0.0};
    spec.soc_max_range = {0.6, 1.0};
    spec.i_charge_range_a = {1.0 * c, 2.0 * c};
    spec.i_discharge_range_a = {1.0 * c, 5.0 * c};
    spec.initial_efc_range = {500.0, 500.0};
    spec.master_seed = 43;
    return spec;
}

HiSweepConfig preset_fig5(const CellParams& params) {
    HiSweepConfig cfg;
    cfg.states = preset_fig3(params);
    cfg.states.n_samples = 100;
    cfg.states.initial_efc_range = {0.0, 1000.0};
    cfg.states.master_seed = 44;
    cfg.n_rebuild = 1000;
    cfg.t_hours = 120.0;
    return cfg;
}

SamplingSpec preset_by_name(const std::string& name, const CellParams& params) {
    if (name == "fig2") return preset_fig2(params);
    if (name == "fig3") return preset_fig3(params);
    if (name == "fig5") return preset_fig5(params).states;
    throw ParamError("unknown preset: " + name);
}

} // namespace rulopf
