"""Plant network model and its compilation to a mixed-integer program.

A network is a directed graph over four unit kinds: sources inject
byproduct gas (the uncertain quantity), gasholders buffer it, converters
burn gas blends into products (steam, power), and demand nodes consume
products or flare surplus gas.  ``build_deterministic`` turns a network
plus per-horizon data into a single MILP whose decision layout is fixed
and documented by the accompanying :class:`VariableMap`; everything the
robust layers do later (staging, scenario blocks, recourse slacks) is a
rearrangement of that one compile.

Constraint rows carry structured tags ``(kind, entity, period)`` so the
staging code can classify them mechanically instead of by position.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from gasflow.errors import ValidationError
from gasflow.milp import MilpProblem

EQ = "="
LE = "<="
GE = ">="

ENERGY = "energy"
EMISSION = "emission"


@dataclass(frozen=True)
class Source:
    """Gas origin; every outgoing arc carries an uncertain supply series."""
    name: str


@dataclass(frozen=True)
class Storage:
    """Gasholder with level dynamics, hard ramp and soft mid-level target."""
    name: str
    level_min: float
    level_max: float
    level_mid: float
    ramp: float
    level_init: float


@dataclass(frozen=True)
class Converter:
    """Gas consumer that turns a blend into product flows while on.

    ``efficiency`` scales input energy to output energy.  ``quality_min``
    is the minimum calorific value of the blended intake (0 disables the
    row), ``split_min`` the minimum share each output arc must carry when
    the unit runs (0 disables).  ``on_init`` is the commitment state just
    before the horizon.
    """
    name: str
    efficiency: float
    intake_min: float
    intake_max: float
    output_min: float
    output_max: float
    quality_min: float = 0.0
    split_min: float = 0.0
    on_init: int = 1


@dataclass(frozen=True)
class Demand:
    """Product sink (kind 'energy', shortfall penalized) or gas sink
    (kind 'emission', surplus penalized)."""
    name: str
    kind: str
    penalty: float


@dataclass(frozen=True)
class Arc:
    name: str
    tail: str
    head: str
    quality: float = 1.0
    capacity: float = np.inf


class EnergyNetwork:
    """Validated unit/arc graph with convenience lookups."""

    def __init__(self, units, arcs):
        self.units = list(units)
        self.arcs = list(arcs)
        self.unit_by_name = {}
        for u in self.units:
            self.unit_by_name[u.name] = u
        self.arcs_in = {u.name: [] for u in self.units}
        self.arcs_out = {u.name: [] for u in self.units}
        for a in self.arcs:
            if a.head in self.arcs_in:
                self.arcs_in[a.head].append(a)
            if a.tail in self.arcs_out:
                self.arcs_out[a.tail].append(a)
        report = validate_network(self)
        if report:
            raise ValidationError("invalid network", report)

    def of_kind(self, cls):
        return [u for u in self.units if isinstance(u, cls)]

    @property
    def sources(self):
        return self.of_kind(Source)

    @property
    def storages(self):
        return self.of_kind(Storage)

    @property
    def converters(self):
        return self.of_kind(Converter)

    @property
    def demands(self):
        return self.of_kind(Demand)

    @property
    def supply_arcs(self):
        names = {s.name for s in self.sources}
        return [a for a in self.arcs if a.tail in names]


def validate_network(network):
    """Structural checks; returns a list of problem descriptions."""
    problems = []
    seen = set()
    for i, u in enumerate(network.units):
        if u.name in seen:
            problems.append(f"units[{i}]: duplicate name '{u.name}'")
        seen.add(u.name)
    for i, u in enumerate(network.units):
        where = f"units[{i}] '{u.name}'"
        if isinstance(u, Storage):
            if not (u.level_min <= u.level_mid <= u.level_max):
                problems.append(f"{where}: level_mid outside [min, max]")
            if not (u.level_min <= u.level_init <= u.level_max):
                problems.append(f"{where}: level_init outside [min, max]")
            if u.ramp <= 0:
                problems.append(f"{where}: ramp must be positive")
        elif isinstance(u, Converter):
            if u.efficiency <= 0:
                problems.append(f"{where}: efficiency must be positive")
            if not (0 <= u.intake_min <= u.intake_max):
                problems.append(f"{where}: intake bounds disordered")
            if not (0 <= u.output_min <= u.output_max):
                problems.append(f"{where}: output bounds disordered")
            if u.quality_min < 0:
                problems.append(f"{where}: quality_min negative")
            if not (0 <= u.split_min <= 1):
                problems.append(f"{where}: split_min outside [0, 1]")
            n_out = len(network.arcs_out.get(u.name, ()))
            if n_out and u.split_min * n_out > 1 + 1e-9:
                problems.append(f"{where}: split_min infeasible for "
                                f"{n_out} output arcs")
            if u.on_init not in (0, 1):
                problems.append(f"{where}: on_init must be 0 or 1")
        elif isinstance(u, Demand):
            if u.kind not in (ENERGY, EMISSION):
                problems.append(f"{where}: unknown demand kind '{u.kind}'")
            if u.penalty < 0:
                problems.append(f"{where}: penalty negative")

    seen_arcs = set()
    legal = {
        Source: (Storage, Converter, Demand),
        Storage: (Converter, Demand),
        Converter: (Demand,),
    }
    for i, a in enumerate(network.arcs):
        where = f"arcs[{i}] '{a.name}'"
        if a.name in seen_arcs:
            problems.append(f"{where}: duplicate name")
        seen_arcs.add(a.name)
        tail = network.unit_by_name.get(a.tail)
        head = network.unit_by_name.get(a.head)
        if tail is None:
            problems.append(f"{where}: unknown tail '{a.tail}'")
        if head is None:
            problems.append(f"{where}: unknown head '{a.head}'")
        if tail is not None and head is not None:
            allowed = legal.get(type(tail), ())
            if not isinstance(head, allowed):
                problems.append(f"{where}: {type(tail).__name__} may not "
                                f"feed {type(head).__name__}")
        if a.quality < 0:
            problems.append(f"{where}: quality negative")
        if not a.capacity > 0:
            problems.append(f"{where}: capacity must be positive")

    for u in network.converters:
        if not network.arcs_in.get(u.name):
            problems.append(f"converter '{u.name}' has no intake arcs")
        if not network.arcs_out.get(u.name):
            problems.append(f"converter '{u.name}' has no output arcs")
    for u in network.demands:
        if not network.arcs_in.get(u.name):
            problems.append(f"demand '{u.name}' has no incoming arcs")
    return problems


@dataclass
class HorizonData:
    """Per-horizon numbers: demand series, nominal supply, objective weights.

    ``supply_nominal`` is keyed by supply arc name, ``demand`` by demand
    unit name; both hold length-``n_periods`` arrays.  ``gamma_switch``
    prices converter start/stops, ``gamma_level`` gasholder mid-level
    deviation; per-demand penalties live on the Demand units.
    """
    n_periods: int
    demand: dict
    supply_nominal: dict
    gamma_switch: float
    gamma_level: float

    def validate_against(self, network):
        problems = []
        if self.n_periods < 1:
            problems.append("n_periods must be at least 1")
        for d in network.demands:
            series = self.demand.get(d.name)
            if series is None:
                problems.append(f"demand['{d.name}'] missing")
            elif len(np.atleast_1d(series)) != self.n_periods:
                problems.append(f"demand['{d.name}'] has wrong length")
            elif np.any(np.asarray(series, dtype=float) < 0):
                problems.append(f"demand['{d.name}'] has negative entries")
        for a in network.supply_arcs:
            series = self.supply_nominal.get(a.name)
            if series is None:
                problems.append(f"supply_nominal['{a.name}'] missing")
            elif len(np.atleast_1d(series)) != self.n_periods:
                problems.append(f"supply_nominal['{a.name}'] has wrong length")
            elif np.any(np.asarray(series, dtype=float) < 0):
                problems.append(f"supply_nominal['{a.name}'] has negative entries")
        if self.gamma_switch < 0 or self.gamma_level < 0:
            problems.append("objective weights must be nonnegative")
        return problems


@dataclass
class VariableMap:
    """Bijection between model coordinates and flat vector indices.

    ``index[(kind, entity, t)]`` gives the column of a variable and
    ``row_index[(kind, entity, t)]`` the row of a constraint; ``names``
    and ``row_tags`` invert them.  ``cells`` lists the uncertain supply
    coordinates ``(arc_name, t)`` in the canonical order used by every
    uncertainty-facing module.
    """
    names: list
    index: dict
    row_tags: list
    row_index: dict
    cells: list
    x_vars: np.ndarray  # column indices of here-and-now binaries (O and S)

    def n_vars(self):
        return len(self.names)

    def n_rows(self):
        return len(self.row_tags)


def build_deterministic(network, horizon):
    """Compile network + horizon into a MILP at nominal supply.

    Returns ``(problem, varmap)``.  Variable layout, in blocks: flows
    ``f[arc, t]`` for every arc including supply arcs; gasholder levels
    ``u`` and mid-level deviation splits ``v+``/``v-``; demand slacks
    ``w``; converter on-states ``O`` and switch indicators ``S`` (the
    binaries).  Supply-arc flows are pinned to the nominal series by
    equality rows tagged ``supply_pin``; the robust layers retarget
    exactly those right-hand sides.
    """
    problems = horizon.validate_against(network)
    if problems:
        raise ValidationError("horizon data does not match network", problems)
    T = horizon.n_periods
    arcs = network.arcs
    sto = network.storages
    conv = network.converters
    dem = network.demands

    names = []
    index = {}

    def add_var(kind, entity, t):
        index[(kind, entity, t)] = len(names)
        names.append(f"{kind}[{entity},{t}]")

    for a in arcs:
        for t in range(T):
            add_var("f", a.name, t)
    for k in sto:
        for t in range(T):
            add_var("u", k.name, t)
    for k in sto:
        for t in range(T):
            add_var("v+", k.name, t)
    for k in sto:
        for t in range(T):
            add_var("v-", k.name, t)
    for k in dem:
        for t in range(T):
            add_var("w", k.name, t)
    for k in conv:
        for t in range(T):
            add_var("O", k.name, t)
    for k in conv:
        for t in range(T):
            add_var("S", k.name, t)
    n = len(names)

    lower = np.zeros(n)
    upper = np.full(n, np.inf)
    cost = np.zeros(n)
    for a in arcs:
        for t in range(T):
            upper[index[("f", a.name, t)]] = a.capacity
    for k in sto:
        for t in range(T):
            j = index[("u", k.name, t)]
            lower[j], upper[j] = -np.inf, np.inf  # level bounds are rows
            cost[index[("v+", k.name, t)]] = horizon.gamma_level
            cost[index[("v-", k.name, t)]] = horizon.gamma_level
    for k in dem:
        for t in range(T):
            cost[index[("w", k.name, t)]] = k.penalty
    integers = []
    for k in conv:
        for t in range(T):
            jo = index[("O", k.name, t)]
            js = index[("S", k.name, t)]
            upper[jo] = 1.0
            upper[js] = 1.0
            cost[js] = horizon.gamma_switch
            integers.extend((jo, js))

    rows, rels, rhs, row_tags = [], [], [], []
    row_index = {}

    def add_row(coeffs, rel, b, tag):
        row = np.zeros(n)
        for j, v in coeffs.items():
            row[j] += v
        row_index[tag] = len(rows)
        rows.append(row)
        rels.append(rel)
        rhs.append(float(b))
        row_tags.append(tag)

    cells = []
    for a in network.supply_arcs:
        z0 = np.atleast_1d(np.asarray(horizon.supply_nominal[a.name],
                                      dtype=float))
        for t in range(T):
            add_row({index[("f", a.name, t)]: 1.0}, EQ, z0[t],
                    ("supply_pin", a.name, t))
            cells.append((a.name, t))

    for k in sto:
        for t in range(T):
            coeffs = {index[("u", k.name, t)]: 1.0}
            for a in network.arcs_in[k.name]:
                coeffs[index[("f", a.name, t)]] = -1.0
            for a in network.arcs_out[k.name]:
                coeffs[index[("f", a.name, t)]] = 1.0
            b = k.level_init if t == 0 else 0.0
            if t > 0:
                coeffs[index[("u", k.name, t - 1)]] = -1.0
            add_row(coeffs, EQ, b, ("mass", k.name, t))
        for t in range(T):
            add_row({index[("u", k.name, t)]: 1.0,
                     index[("v+", k.name, t)]: -1.0,
                     index[("v-", k.name, t)]: 1.0}, EQ, k.level_mid,
                    ("deviation", k.name, t))
        for t in range(T):
            prev = {} if t == 0 else {index[("u", k.name, t - 1)]: -1.0}
            base = k.level_init if t == 0 else 0.0
            add_row({index[("u", k.name, t)]: 1.0, **prev}, LE,
                    k.ramp + base, ("ramp_up", k.name, t))
            neg_prev = {} if t == 0 else {index[("u", k.name, t - 1)]: 1.0}
            add_row({index[("u", k.name, t)]: -1.0, **neg_prev}, LE,
                    k.ramp - base, ("ramp_down", k.name, t))
        for t in range(T):
            add_row({index[("u", k.name, t)]: 1.0}, GE, k.level_min,
                    ("level_lo", k.name, t))
            add_row({index[("u", k.name, t)]: 1.0}, LE, k.level_max,
                    ("level_hi", k.name, t))

    for k in conv:
        ins = network.arcs_in[k.name]
        outs = network.arcs_out[k.name]
        for t in range(T):
            coeffs = {index[("f", a.name, t)]: k.efficiency * a.quality
                      for a in ins}
            for a in outs:
                coeffs[index[("f", a.name, t)]] = -a.quality
            add_row(coeffs, EQ, 0.0, ("conversion", k.name, t))
        for t in range(T):
            jo = index[("O", k.name, t)]
            fin = {index[("f", a.name, t)]: 1.0 for a in ins}
            add_row({**fin, jo: -k.intake_max}, LE, 0.0,
                    ("intake_hi", k.name, t))
            add_row({**{j: -v for j, v in fin.items()}, jo: k.intake_min},
                    LE, 0.0, ("intake_lo", k.name, t))
            fout = {index[("f", a.name, t)]: 1.0 for a in outs}
            add_row({**fout, jo: -k.output_max}, LE, 0.0,
                    ("output_hi", k.name, t))
            add_row({**{j: -v for j, v in fout.items()}, jo: k.output_min},
                    LE, 0.0, ("output_lo", k.name, t))
        if k.quality_min > 0:
            big_m = sum(min(a.capacity, k.intake_max)
                        * max(k.quality_min - a.quality, 0.0) for a in ins)
            for t in range(T):
                jo = index[("O", k.name, t)]
                coeffs = {index[("f", a.name, t)]: a.quality - k.quality_min
                          for a in ins}
                coeffs[jo] = -big_m
                add_row(coeffs, GE, -big_m, ("quality", k.name, t))
        if k.split_min > 0 and len(outs) >= 2:
            big_m = k.split_min * k.output_max
            for a in outs:
                for t in range(T):
                    jo = index[("O", k.name, t)]
                    coeffs = {index[("f", o.name, t)]: -k.split_min
                              for o in outs}
                    coeffs[index[("f", a.name, t)]] = \
                        coeffs.get(index[("f", a.name, t)], 0.0) + 1.0
                    coeffs[jo] = -big_m
                    add_row(coeffs, GE, -big_m, ("split", a.name, t))
        for a in outs:
            for t in range(T):
                add_row({index[("f", a.name, t)]: 1.0,
                         index[("O", k.name, t)]: -k.output_max}, LE, 0.0,
                        ("output_off", a.name, t))
        for t in range(T):
            jo = index[("O", k.name, t)]
            js = index[("S", k.name, t)]
            prev = {} if t == 0 else {index[("O", k.name, t - 1)]: -1.0}
            base = float(k.on_init) if t == 0 else 0.0
            add_row({jo: 1.0, js: -1.0, **prev}, LE, base,
                    ("switch_up", k.name, t))
            neg_prev = {} if t == 0 else {index[("O", k.name, t - 1)]: 1.0}
            add_row({jo: -1.0, js: -1.0, **neg_prev}, LE, -base,
                    ("switch_down", k.name, t))

    for k in dem:
        series = np.atleast_1d(np.asarray(horizon.demand[k.name], dtype=float))
        ins = network.arcs_in[k.name]
        for t in range(T):
            coeffs = {index[("f", a.name, t)]: 1.0 for a in ins}
            jw = index[("w", k.name, t)]
            if k.kind == ENERGY:
                coeffs[jw] = 1.0
                add_row(coeffs, GE, series[t], ("demand", k.name, t))
            else:
                coeffs[jw] = -1.0
                add_row(coeffs, LE, series[t], ("emission", k.name, t))

    problem = MilpProblem(cost, np.array(rows), rels, np.array(rhs),
                          lower, upper, integers=integers)
    x_vars = np.array(sorted(integers), dtype=int)
    varmap = VariableMap(names=names, index=index, row_tags=row_tags,
                         row_index=row_index, cells=cells, x_vars=x_vars)
    return problem, varmap


def expected_var_count(network, horizon):
    """The documented size formula for the compiled model."""
    T = horizon.n_periods
    return (len(network.arcs) * T
            + 3 * len(network.storages) * T
            + len(network.demands) * T
            + 2 * len(network.converters) * T)


@dataclass
class Schedule:
    """Readable solution of one compiled model."""
    objective: float
    parts: dict
    flows: dict
    levels: dict
    deviations: dict
    on_state: dict
    switches: dict
    shortfalls: dict

    def to_rows(self):
        """Tidy (series, entity, period, value) tuples in a fixed order."""
        out = []
        blocks = (("flow", self.flows), ("level", self.levels),
                  ("deviation", self.deviations), ("on", self.on_state),
                  ("switch", self.switches), ("shortfall", self.shortfalls))
        for series, data in blocks:
            for entity in data:
                for t, v in enumerate(data[entity]):
                    out.append((series, entity, t, float(v)))
        return out


def extract_schedule(network, horizon, varmap, x):
    """Slice a full solution vector into a :class:`Schedule`."""
    T = horizon.n_periods
    idx = varmap.index

    def series(kind, name):
        return np.array([x[idx[(kind, name, t)]] for t in range(T)])

    flows = {a.name: series("f", a.name) for a in network.arcs}
    levels = {k.name: series("u", k.name) for k in network.storages}
    devs = {k.name: series("v+", k.name) + series("v-", k.name)
            for k in network.storages}
    on = {k.name: np.round(series("O", k.name)).astype(int)
          for k in network.converters}
    sw = {k.name: np.round(series("S", k.name)).astype(int)
          for k in network.converters}
    short = {k.name: series("w", k.name) for k in network.demands}

    switching = horizon.gamma_switch * float(sum(s.sum() for s in sw.values()))
    level_dev = horizon.gamma_level * float(sum(d.sum() for d in devs.values()))
    demand_pen = float(sum(k.penalty * short[k.name].sum()
                           for k in network.demands))
    parts = {"switching": switching, "level_deviation": level_dev,
             "demand_penalty": demand_pen}
    return Schedule(objective=switching + level_dev + demand_pen,
                    parts=parts, flows=flows, levels=levels, deviations=devs,
                    on_state=on, switches=sw, shortfalls=short)


_UNIT_FIELDS = {
    "source": (Source, ()),
    "storage": (Storage, ("level_min", "level_max", "level_mid", "ramp",
                          "level_init")),
    "converter": (Converter, ("efficiency", "intake_min", "intake_max",
                              "output_min", "output_max")),
    "demand": (Demand, ("kind", "penalty")),
}


def network_to_dict(network, horizon=None):
    units = []
    for u in network.units:
        kind = {Source: "source", Storage: "storage", Converter: "converter",
                Demand: "demand"}[type(u)]
        entry = {"type": kind}
        for f in u.__dataclass_fields__:
            entry[f] = getattr(u, f)
        units.append(entry)
    arcs = []
    for a in network.arcs:
        entry = {f: getattr(a, f) for f in a.__dataclass_fields__}
        if entry["capacity"] == np.inf:
            entry["capacity"] = None
        arcs.append(entry)
    doc = {"units": units, "arcs": arcs}
    if horizon is not None:
        doc["horizon"] = {
            "n_periods": horizon.n_periods,
            "gamma_switch": horizon.gamma_switch,
            "gamma_level": horizon.gamma_level,
            "demand": {k: list(map(float, v)) for k, v in horizon.demand.items()},
            "supply_nominal": {k: list(map(float, v))
                               for k, v in horizon.supply_nominal.items()},
        }
    return doc


def network_from_dict(doc):
    """Parse a network (and horizon, if present) from plain dict data.

    Raises :class:`ValidationError` whose details point at offending
    entries with paths like ``units[2].ramp``.
    """
    details = []
    units = []
    for i, entry in enumerate(doc.get("units", [])):
        kind = entry.get("type")
        if kind not in _UNIT_FIELDS:
            details.append(f"units[{i}].type: unknown '{kind}'")
            continue
        cls, _ = _UNIT_FIELDS[kind]
        kwargs = {k: v for k, v in entry.items() if k != "type"}
        try:
            units.append(cls(**kwargs))
        except TypeError as exc:
            details.append(f"units[{i}]: {exc}")
    arcs = []
    for i, entry in enumerate(doc.get("arcs", [])):
        kwargs = dict(entry)
        if kwargs.get("capacity") is None:
            kwargs["capacity"] = np.inf
        try:
            arcs.append(Arc(**kwargs))
        except TypeError as exc:
            details.append(f"arcs[{i}]: {exc}")
    if details:
        raise ValidationError("malformed network document", details)
    network = EnergyNetwork(units, arcs)
    horizon = None
    if "horizon" in doc:
        h = doc["horizon"]
        try:
            horizon = HorizonData(
                n_periods=int(h["n_periods"]),
                demand={k: np.asarray(v, dtype=float)
                        for k, v in h.get("demand", {}).items()},
                supply_nominal={k: np.asarray(v, dtype=float)
                                for k, v in h.get("supply_nominal", {}).items()},
                gamma_switch=float(h["gamma_switch"]),
                gamma_level=float(h["gamma_level"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError("malformed horizon section",
                                  [f"horizon: {exc}"])
        problems = horizon.validate_against(network)
        if problems:
            raise ValidationError("horizon data does not match network",
                                  problems)
    return network, horizon


def load_network(path):
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"not valid JSON: {path}", [str(exc)])
    return network_from_dict(doc)


def save_network(path, network, horizon=None):
    with open(path, "w") as fh:
        json.dump(network_to_dict(network, horizon), fh, indent=2,
                  sort_keys=True)
        fh.write("\n")
