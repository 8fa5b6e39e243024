"""Bundled synthetic instances: a hand-checkable toy and a small plant.

The toy network exists so tests can reason about optima on paper.  The
plant case mirrors a typical byproduct-gas system: three gas kinds with
their own holders (blast furnace, coke oven, converter gas), four
consumers of different sizes, one aggregate product demand and a flare.
``supply_history`` fabricates the kind of slow seasonal series the
forecasting layer is meant to learn.
"""

import numpy as np

from gasflow.network import (
    Arc,
    Converter,
    Demand,
    EnergyNetwork,
    HorizonData,
    Source,
    Storage,
)


def toy_network():
    """One holder, one boiler, one product demand, one flare.

    With the default horizon (two periods, nominal supply 7 then 1,
    steam demand 4 and 4) the optimal objective is exactly 3: writing
    a and b for the boiler draw in each period, the two mid-level
    deviations are |7 - a| and |8 - a - b|, whose sum is at least
    |b - 1| >= 3 by the triangle inequality since b >= 4, and the plan
    a = 4, b = 4 attains it with no flaring and no shortfall.
    """
    units = [
        Source("gas_src"),
        Storage("holder", level_min=0.0, level_max=10.0, level_mid=5.0,
                ramp=10.0, level_init=5.0),
        Converter("boiler", efficiency=1.0, intake_min=0.0, intake_max=10.0,
                  output_min=0.0, output_max=10.0),
        Demand("steam_load", kind="energy", penalty=100.0),
        Demand("flare_stack", kind="emission", penalty=50.0),
    ]
    arcs = [
        Arc("src->holder", "gas_src", "holder"),
        Arc("holder->boiler", "holder", "boiler", capacity=10.0),
        Arc("boiler->steam", "boiler", "steam_load"),
        Arc("holder->flare", "holder", "flare_stack"),
    ]
    network = EnergyNetwork(units, arcs)
    horizon = HorizonData(
        n_periods=2,
        demand={"steam_load": np.array([4.0, 4.0]),
                "flare_stack": np.zeros(2)},
        supply_nominal={"src->holder": np.array([7.0, 1.0])},
        gamma_switch=10.0,
        gamma_level=1.0,
    )
    return network, horizon


TOY_OPTIMUM = 3.0


def case_network(n_periods=4, ramp_scale=1.0, split_min=0.25,
                 min_output_ratio=0.0):
    """Three-holder, four-converter, two-demand plant instance.

    ``ramp_scale`` multiplies every gasholder ramp (the flexibility
    sweep knob); ``min_output_ratio`` forces each running converter to
    emit at least that fraction of its maximum output; ``split_min``
    sets the power plant's minimum share per output arc (0 disables the
    row pair).  Demand penalties follow the package's documented
    placeholder defaults (50 per unserved energy unit, 500 per emitted
    gas unit); they are not calibrated to any real plant.
    """
    def out_min(cap):
        return min_output_ratio * cap

    units = [
        Source("bfg_src"),
        Source("cog_src"),
        Source("ldg_src"),
        Storage("bfg_holder", level_min=20.0, level_max=120.0, level_mid=70.0,
                ramp=10.0 * ramp_scale, level_init=70.0),
        Storage("cog_holder", level_min=10.0, level_max=60.0, level_mid=35.0,
                ramp=8.0 * ramp_scale, level_init=35.0),
        Storage("ldg_holder", level_min=5.0, level_max=40.0, level_mid=22.5,
                ramp=6.0 * ramp_scale, level_init=22.5),
        Converter("boiler_a", efficiency=0.85, intake_min=0.0, intake_max=45.0,
                  output_min=out_min(40.0), output_max=40.0, quality_min=1.0),
        Converter("boiler_b", efficiency=0.80, intake_min=0.0, intake_max=45.0,
                  output_min=out_min(35.0), output_max=35.0, quality_min=0.85),
        Converter("power_plant", efficiency=0.45, intake_min=0.0,
                  intake_max=60.0, output_min=out_min(30.0), output_max=30.0,
                  quality_min=0.0, split_min=split_min),
        Converter("heater", efficiency=0.90, intake_min=0.0, intake_max=10.0,
                  output_min=out_min(18.0), output_max=18.0),
        Demand("site_energy", kind="energy", penalty=50.0),
        Demand("flare", kind="emission", penalty=500.0),
    ]
    arcs = [
        Arc("bfg_src->holder", "bfg_src", "bfg_holder", quality=0.8),
        Arc("cog_src->holder", "cog_src", "cog_holder", quality=1.8),
        Arc("ldg_src->holder", "ldg_src", "ldg_holder", quality=1.0),
        Arc("bfg->boiler_a", "bfg_holder", "boiler_a", quality=0.8,
            capacity=40.0),
        Arc("cog->boiler_a", "cog_holder", "boiler_a", quality=1.8,
            capacity=15.0),
        Arc("bfg->boiler_b", "bfg_holder", "boiler_b", quality=0.8,
            capacity=35.0),
        Arc("ldg->boiler_b", "ldg_holder", "boiler_b", quality=1.0,
            capacity=20.0),
        Arc("bfg->power", "bfg_holder", "power_plant", quality=0.8,
            capacity=50.0),
        Arc("cog->power", "cog_holder", "power_plant", quality=1.8,
            capacity=20.0),
        Arc("cog->heater", "cog_holder", "heater", quality=1.8,
            capacity=10.0),
        Arc("boiler_a->site", "boiler_a", "site_energy"),
        Arc("boiler_b->site", "boiler_b", "site_energy"),
        Arc("power->site_elec", "power_plant", "site_energy"),
        Arc("power->site_steam", "power_plant", "site_energy"),
        Arc("heater->site", "heater", "site_energy"),
        Arc("bfg->flare", "bfg_holder", "flare"),
        Arc("cog->flare", "cog_holder", "flare"),
        Arc("ldg->flare", "ldg_holder", "flare"),
    ]
    network = EnergyNetwork(units, arcs)
    base_supply = {
        "bfg_src->holder": 50.0,
        "cog_src->holder": 18.0,
        "ldg_src->holder": 12.0,
    }
    t = np.arange(n_periods)
    supply = {name: level * (1.0 + 0.06 * np.sin(2 * np.pi * t / 8.0))
              for name, level in base_supply.items()}
    demand_site = 66.0 + 4.0 * np.cos(2 * np.pi * t / 8.0)
    horizon = HorizonData(
        n_periods=n_periods,
        demand={"site_energy": demand_site, "flare": np.zeros(n_periods)},
        supply_nominal=supply,
        gamma_switch=100.0,
        gamma_level=1.0,
    )
    return network, horizon


def supply_history(n_points=1000, seed=7):
    """Synthetic per-arc supply series for the forecasting pipeline.

    Each series is a daily cycle plus a slower drift and mild AR(1)
    noise, clipped away from zero, keyed by the plant case's supply
    arcs.  Returns ``{arc_name: array of length n_points}``.
    """
    rng = np.random.default_rng(seed)
    t = np.arange(n_points, dtype=float)
    base = {
        "bfg_src->holder": (50.0, 6.0, 24.0),
        "cog_src->holder": (18.0, 2.5, 24.0),
        "ldg_src->holder": (12.0, 1.8, 24.0),
    }
    series = {}
    for name, (level, amp, period) in base.items():
        phase = rng.uniform(0.0, 2 * np.pi)
        slow = 0.4 * amp * np.sin(2 * np.pi * t / (period * 7.3) + phase)
        daily = amp * np.sin(2 * np.pi * t / period + phase / 2.0)
        noise = np.zeros(n_points)
        eps = rng.normal(0.0, 0.012 * level, n_points)
        for i in range(1, n_points):
            noise[i] = 0.6 * noise[i - 1] + eps[i]
        series[name] = np.clip(level + daily + slow + noise, 0.05 * level,
                               None)
    return series
