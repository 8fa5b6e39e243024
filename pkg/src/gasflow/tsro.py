"""Two-stage robust scheduling over budget uncertainty sets.

The compiled deterministic MILP is split into a first-stage block over
the on/off binaries and a second-stage block over the continuous
recourse (flows, levels, penalties).  The worst scenario for a fixed
first stage is found by dualizing the inner LP and linearizing the
bilinear dual-times-deviation terms with big-M rows, giving a single
maximization MILP.  A column-and-constraint generation loop alternates
that subproblem with a master problem carrying one recourse copy per
scenario discovered so far, until the bounds close.

Every subproblem solve is audited against an independent primal
recourse solve at the realized scenario (strong duality must hold to
1e-5), and big-M linearizations are checked for saturation, so a wrong
bound cannot silently propagate into the schedule.

Level-bound rows get nonnegative elastic slack columns at staging time,
priced far above every real cost, which keeps the recourse feasible for
any scenario and any first stage (relatively complete recourse); the
slacks stay at zero except on deliberately starved instances.
"""

import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from gasflow.errors import NumericalFailure, ValidationError
from gasflow.lp import (EQ, GE, INFEASIBLE, LE, OPTIMAL, UNBOUNDED, LpProblem,
                        LpResolver, solve_lp)
from gasflow.milp import MilpProblem, solve_milp

_SOUNDNESS_CHECKS = 3
_SOUNDNESS_TOL = 1e-6
_DUALITY_TOL = 1e-5
_BIGM_HEADROOM = 0.9


@dataclass
class StagedProblem:
    """Matrix-form split of a compiled deterministic schedule model.

    First stage: ``min c.x  s.t.  A x <= b``, x binary (on-states and
    switch indicators).  Second stage at scenario ``z``:
    ``min d.y  s.t.  G y >= h,  Q y >= r - P x,  W y = Mz z + s`` with
    ``y`` free (every finite variable bound was rewritten as a G row, so
    the inner LP's dual lives on rows only).
    """
    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    d: np.ndarray
    G: np.ndarray
    h: np.ndarray
    Q: np.ndarray
    r: np.ndarray
    P: np.ndarray
    W: np.ndarray
    s: np.ndarray
    Mz: np.ndarray
    x_names: list
    y_names: list
    a_tags: list
    g_tags: list
    q_tags: list
    w_tags: list
    cells: list
    z_nominal: np.ndarray
    slack_cols: np.ndarray
    slack_penalty: float
    _inner_rows: np.ndarray = field(default=None, repr=False)
    _inner_relations: list = field(default=None, repr=False)

    @property
    def n_x(self):
        return self.c.size

    @property
    def n_y(self):
        return self.d.size

    def inner_problem(self, x, z):
        """Recourse LP at a fixed first stage and scenario."""
        x = np.asarray(x, dtype=float)
        z = np.asarray(z, dtype=float)
        if self._inner_rows is None:
            self._inner_rows = np.vstack([self.G, self.Q, self.W])
            self._inner_relations = ([GE] * self.G.shape[0]
                                     + [GE] * self.Q.shape[0]
                                     + [EQ] * self.W.shape[0])
        rhs = np.concatenate([self.h, self.r - self.P @ x,
                              self.Mz @ z + self.s])
        n = self.n_y
        return LpProblem(self.d, self._inner_rows, self._inner_relations,
                         rhs, lower=np.full(n, -np.inf),
                         upper=np.full(n, np.inf))

    def recourse_value(self, x, z, tol=1e-7):
        """Optimal second-stage cost; the solved outcome rides along."""
        out = solve_lp(self.inner_problem(x, z), tol=tol)
        return out.objective, out

    def first_stage_feasible(self, x, tol=1e-7):
        x = np.asarray(x, dtype=float)
        if self.A.shape[0] == 0:
            return True
        return bool(np.all(self.A @ x <= self.b + tol))


def _parse_var(name):
    """Split 'kind[entity,t]' into (kind, entity, t)."""
    kind, rest = name.split("[", 1)
    entity, t = rest[:-1].rsplit(",", 1)
    return kind, entity, int(t)


def _first_stage_sample(staged, rng):
    """A random first stage satisfying the switch-linking rows.

    On-states are drawn independently; switch indicators are then set to
    the state changes they must cover (the linking rows bound S below by
    |O_t - O_{t-1}|), which satisfies every A row by construction.  The
    initial commitment state is read back from the t=0 linking row's
    right-hand side.
    """
    x = np.zeros(staged.n_x)
    pos = {name: i for i, name in enumerate(staged.x_names)}
    on_init = {tag[1]: staged.b[i] for i, tag in enumerate(staged.a_tags)
               if tag[0] == "switch_up" and tag[2] == 0}
    parsed = [(_parse_var(name), i) for name, i in pos.items()]
    for (kind, _, _), i in parsed:
        if kind == "O":
            x[i] = float(rng.integers(0, 2))
    for (kind, unit, t), i in parsed:
        if kind != "S":
            continue
        prev = (on_init[unit] if t == 0
                else x[pos[f"O[{unit},{t - 1}]"]])
        x[i] = abs(x[pos[f"O[{unit},{t}]"]] - prev)
    return x


def stage(problem, vmap, uset):
    """Partition a compiled deterministic MILP into robust blocks.

    Every row lands in exactly one of the A / G / Q / W blocks based on
    which variables it touches; supply-pin equalities carry the
    scenario coupling ``Mz``.  Finite bounds on continuous variables
    become G rows.  Level-bound rows then get elastic slack columns.
    The partition is verified by re-solving the model at random
    first-stage/scenario pairs through both routes before returning.
    """
    if list(uset.cells) != list(vmap.cells):
        raise ValidationError(
            "uncertainty set cells do not match the model's supply cells")
    rows = np.asarray(problem.rows, dtype=float)
    rhs = np.asarray(problem.rhs, dtype=float)
    relations = list(problem.relations)
    n = problem.n_vars

    x_cols = np.asarray(vmap.x_vars, dtype=int)
    is_x = np.zeros(n, dtype=bool)
    is_x[x_cols] = True
    y_cols = np.flatnonzero(~is_x)
    if sorted(problem.integers.tolist()) != sorted(x_cols.tolist()):
        raise ValidationError(
            "first-stage variables must be exactly the integer columns")

    cell_index = {cell: i for i, cell in enumerate(vmap.cells)}
    n_cells = len(vmap.cells)

    a_rows, a_rhs, a_tags = [], [], []
    g_rows, g_rhs, g_tags = [], [], []
    q_rows, q_rhs, p_rows, q_tags = [], [], [], []
    w_rows, w_rhs, mz_rows, w_tags = [], [], [], []

    for i in range(rows.shape[0]):
        row_x = rows[i, x_cols]
        row_y = rows[i, y_cols]
        has_x = bool(np.any(row_x != 0.0))
        has_y = bool(np.any(row_y != 0.0))
        tag = vmap.row_tags[i]
        rel = relations[i]
        if tag[0] == "supply_pin":
            if has_x or rel != EQ:
                raise ValidationError(
                    f"supply pin row {tag} mixes first-stage variables")
            mz = np.zeros(n_cells)
            mz[cell_index[(tag[1], tag[2])]] = 1.0
            w_rows.append(row_y)
            w_rhs.append(rhs[i])
            mz_rows.append(mz)
            w_tags.append(tag)
        elif rel == EQ:
            if has_x:
                raise ValidationError(
                    f"equality row {tag} touches binaries; no block fits it")
            w_rows.append(row_y)
            w_rhs.append(rhs[i])
            mz_rows.append(np.zeros(n_cells))
            w_tags.append(tag)
        elif has_x and not has_y:
            sign = 1.0 if rel == LE else -1.0
            a_rows.append(sign * row_x)
            a_rhs.append(sign * rhs[i])
            a_tags.append(tag)
        elif has_y and not has_x:
            sign = 1.0 if rel == GE else -1.0
            g_rows.append(sign * row_y)
            g_rhs.append(sign * rhs[i])
            g_tags.append(tag)
        elif has_y and has_x:
            sign = 1.0 if rel == GE else -1.0
            q_rows.append(sign * row_y)
            p_rows.append(sign * row_x)
            q_rhs.append(sign * rhs[i])
            q_tags.append(tag)
        else:
            raise ValidationError(f"row {tag} touches no variables")

    if not w_rows:
        raise ValidationError(
            "no equality rows to carry scenarios; model has no uncertain "
            "coupling to stage")

    # finite bounds of second-stage variables become G rows so the inner
    # LP is a pure row-dual problem
    lower = np.asarray(problem.lower, dtype=float)[y_cols]
    upper = np.asarray(problem.upper, dtype=float)[y_cols]
    n_y = y_cols.size
    y_names = [vmap.names[j] for j in y_cols]
    for j in range(n_y):
        if np.isfinite(lower[j]):
            e = np.zeros(n_y)
            e[j] = 1.0
            g_rows.append(e)
            g_rhs.append(lower[j])
            g_tags.append(("bound_lo", y_names[j]))
        if np.isfinite(upper[j]):
            e = np.zeros(n_y)
            e[j] = -1.0
            g_rows.append(e)
            g_rhs.append(-upper[j])
            g_tags.append(("bound_hi", y_names[j]))

    c = np.asarray(problem.objective, dtype=float)[x_cols]
    d = np.asarray(problem.objective, dtype=float)[y_cols]
    x_names = [vmap.names[j] for j in x_cols]

    A = (np.array(a_rows) if a_rows else np.zeros((0, x_cols.size)))
    G = np.array(g_rows) if g_rows else np.zeros((0, n_y))
    Q = np.array(q_rows) if q_rows else np.zeros((0, n_y))
    P = np.array(p_rows) if p_rows else np.zeros((0, x_cols.size))
    W = np.array(w_rows)
    Mz = np.array(mz_rows)
    z0 = np.asarray(uset.nominal, dtype=float)
    s = np.array(w_rhs) - Mz @ z0
    # z is an absolute supply level, so the model's pinned nominal must
    # agree with the set's nominal; otherwise every scenario would be
    # silently shifted by the disagreement
    for i, tag in enumerate(w_tags):
        if tag[0] == "supply_pin" and abs(s[i]) > 1e-7 * (1.0 + abs(w_rhs[i])):
            cell_idx = int(np.flatnonzero(Mz[i] != 0.0)[0])
            raise ValidationError(
                f"pinned supply for cell {vmap.cells[cell_idx]} is "
                f"{w_rhs[i]:.6g} in the model but {z0[cell_idx]:.6g} in the "
                f"uncertainty set; rebuild the model with the set's nominal "
                f"supply so scenarios keep their absolute meaning")

    staged = StagedProblem(
        c=c, A=A, b=np.array(a_rhs), d=d, G=G, h=np.array(g_rhs),
        Q=Q, r=np.array(q_rhs), P=P, W=W, s=s, Mz=Mz,
        x_names=x_names, y_names=list(y_names),
        a_tags=a_tags, g_tags=g_tags, q_tags=q_tags, w_tags=w_tags,
        cells=list(vmap.cells), z_nominal=z0.copy(),
        slack_cols=np.zeros(0, dtype=int), slack_penalty=0.0)

    _check_partition(staged, problem, vmap, uset)
    return _add_level_slacks(staged)


def _check_partition(staged, problem, vmap, uset):
    """Cross-solve the blocks against the original model.

    For a few random (first stage, scenario) pairs, the block assembly
    must reproduce the deterministic optimum computed by pinning the
    binaries and retargeting the supply rows on the original problem.
    """
    rng = np.random.default_rng(20240915)
    pin_rows = [vmap.row_index[tag] for tag in staged.w_tags
                if tag[0] == "supply_pin"]
    pin_cells = [(tag[1], tag[2]) for tag in staged.w_tags
                 if tag[0] == "supply_pin"]
    cell_pos = {cell: k for k, cell in enumerate(staged.cells)}
    for _ in range(_SOUNDNESS_CHECKS):
        x = _first_stage_sample(staged, rng)
        if not staged.first_stage_feasible(x):
            raise NumericalFailure(
                "sampled first stage violates its own linking rows")
        z = uset.sample(1, rng)[0]
        inner, _ = staged.recourse_value(x, z)
        staged_val = float(staged.c @ x) + inner

        rhs = np.asarray(problem.rhs, dtype=float).copy()
        for row, cell in zip(pin_rows, pin_cells):
            rhs[row] = z[cell_pos[cell]]
        lower = np.asarray(problem.lower, dtype=float).copy()
        upper = np.asarray(problem.upper, dtype=float).copy()
        lower[vmap.x_vars] = x
        upper[vmap.x_vars] = x
        det = LpProblem(problem.objective, problem.rows, problem.relations,
                        rhs, lower=lower, upper=upper)
        det_out = solve_lp(det)
        if det_out.status == INFEASIBLE:
            if np.isfinite(staged_val):
                raise NumericalFailure(
                    "partition check: blocks feasible where the original "
                    "model is not")
            continue
        gap = abs(det_out.objective - staged_val)
        if gap > _SOUNDNESS_TOL * (1.0 + abs(det_out.objective)):
            raise NumericalFailure(
                f"partition check failed: block assembly {staged_val!r} vs "
                f"deterministic {det_out.objective!r}")


def _add_level_slacks(staged):
    """Append elastic slack columns to gasholder level rows.

    Each ``level_lo``/``level_hi`` G row gets its own nonnegative slack
    priced at 100x the largest real cost; any optimal solution using one
    signals a physically unavoidable level violation rather than a cheap
    shortcut.
    """
    level_rows = [i for i, tag in enumerate(staged.g_tags)
                  if tag[0] in ("level_lo", "level_hi")]
    if not level_rows:
        return staged
    scale = max(1.0, float(np.max(np.abs(staged.c), initial=0.0)),
                float(np.max(np.abs(staged.d), initial=0.0)))
    penalty = 1e2 * scale
    n_y = staged.n_y
    k = len(level_rows)
    G = np.hstack([staged.G, np.zeros((staged.G.shape[0], k))])
    for slot, row in enumerate(level_rows):
        G[row, n_y + slot] = 1.0
    # nonnegativity rows for the new columns
    eye = np.zeros((k, n_y + k))
    eye[:, n_y:] = np.eye(k)
    G = np.vstack([G, eye])
    h = np.concatenate([staged.h, np.zeros(k)])
    g_tags = list(staged.g_tags)
    slack_names = []
    for slot, row in enumerate(level_rows):
        name = "slack[" + ",".join(str(p) for p in staged.g_tags[row]) + "]"
        slack_names.append(name)
        g_tags.append(("bound_lo", name))
    staged.G = G
    staged.h = h
    staged.g_tags = g_tags
    staged.Q = np.hstack([staged.Q, np.zeros((staged.Q.shape[0], k))])
    staged.W = np.hstack([staged.W, np.zeros((staged.W.shape[0], k))])
    staged.d = np.concatenate([staged.d, np.full(k, penalty)])
    staged.y_names = list(staged.y_names) + slack_names
    staged.slack_cols = np.arange(n_y, n_y + k)
    staged.slack_penalty = penalty
    staged._inner_rows = None
    return staged


@dataclass
class ScenarioIndicators:
    """Worst-case deviation pattern found by a separation solve.

    ``dual_value`` and ``primal_value`` come from the two sides of the
    strong-duality audit when the dual subproblem produced the scenario;
    the enumeration path evaluates only primal recourses and reports the
    same number for both.
    """
    xi_plus: np.ndarray
    xi_minus: np.ndarray
    z: np.ndarray
    dual_value: float
    primal_value: float


@dataclass
class DualSubproblem:
    """Big-M linearized dual of the inner recourse LP at a fixed x."""
    problem: MilpProblem
    big_m: float
    x: np.ndarray
    staged: StagedProblem
    uset: object
    slices: dict


def build_subproblem(staged, x, uset):
    """Dualize the second stage at ``x`` over the budget set.

    Variables: row duals lambda (G), sigma (Q), phi (W), products
    pi+/pi- (one pair per uncertain cell), and binary deviation
    indicators xi+/xi-.  The bilinear phi*xi products are replaced by
    the pi variables tied down with big-M rows; budgets cap the active
    indicators per supply arc.  The returned MILP is a minimization of
    the negated dual objective, so its optimum is -beta'.
    """
    x = np.asarray(x, dtype=float)
    if not staged.first_stage_feasible(x):
        raise ValidationError("x violates the first-stage rows")
    m_g, m_q, m_w = (staged.G.shape[0], staged.Q.shape[0],
                     staged.W.shape[0])
    n_y = staged.n_y
    cells = staged.cells
    n_c = len(cells)

    # one pin row per cell, located through the Mz column pattern
    pin_of_cell = np.full(n_c, -1, dtype=int)
    for c in range(n_c):
        hits = np.flatnonzero(staged.Mz[:, c] != 0.0)
        if hits.size != 1 or staged.Mz[hits[0], c] != 1.0:
            raise ValidationError(
                f"cell {cells[c]} must pin exactly one equality row")
        pin_of_cell[c] = hits[0]

    # pin duals price a marginal unit of pinned supply; a unit injected
    # at period t persists through later periods and can displace at
    # most one unit of elastic level slack in each, so (T+1) times the
    # largest cost coefficient bounds it; take 4x that for headroom.
    # The strong-duality audit in solve_subproblem catches the case
    # where this envelope ever truncates a genuine optimum.
    cost_scale = max(1.0,
                     float(np.max(np.abs(staged.c), initial=0.0)),
                     float(np.max(np.abs(staged.d), initial=0.0)))
    n_periods = 1 + max((t for _, t in staged.cells), default=0)
    big_m = max(1e4, 4.0 * (n_periods + 1) * cost_scale)

    o_l = 0
    o_s = o_l + m_g
    o_p = o_s + m_q
    o_pp = o_p + m_w
    o_pm = o_pp + n_c
    o_xp = o_pm + n_c
    o_xm = o_xp + n_c
    n_var = o_xm + n_c
    slices = {"lambda": slice(o_l, o_s), "sigma": slice(o_s, o_p),
              "phi": slice(o_p, o_pp), "pi_plus": slice(o_pp, o_pm),
              "pi_minus": slice(o_pm, o_xp), "xi_plus": slice(o_xp, o_xm),
              "xi_minus": slice(o_xm, n_var)}

    rows, relations, rhs = [], [], []
    # dual feasibility: G'lambda + Q'sigma + W'phi = d, one row per y
    dual_feas = np.zeros((n_y, n_var))
    if m_g:
        dual_feas[:, o_l:o_s] = staged.G.T
    if m_q:
        dual_feas[:, o_s:o_p] = staged.Q.T
    dual_feas[:, o_p:o_pp] = staged.W.T
    for j in range(n_y):
        rows.append(dual_feas[j])
        relations.append(EQ)
        rhs.append(staged.d[j])

    def add(row_dict, rel, b):
        row = np.zeros(n_var)
        for k, v in row_dict.items():
            row[k] = v
        rows.append(row)
        relations.append(rel)
        rhs.append(b)

    for c in range(n_c):
        pp, pm = o_pp + c, o_pm + c
        xp, xm = o_xp + c, o_xm + c
        q = o_p + pin_of_cell[c]
        # pi+ = phi_pin * xi+ via four envelope rows
        add({pp: 1.0, xp: -big_m}, LE, 0.0)
        add({pp: -1.0, xp: -big_m}, LE, 0.0)
        add({pp: 1.0, q: -1.0, xp: big_m}, LE, big_m)
        add({pp: -1.0, q: 1.0, xp: big_m}, LE, big_m)
        add({pm: 1.0, xm: -big_m}, LE, 0.0)
        add({pm: -1.0, xm: -big_m}, LE, 0.0)
        add({pm: 1.0, q: -1.0, xm: big_m}, LE, big_m)
        add({pm: -1.0, q: 1.0, xm: big_m}, LE, big_m)
        add({xp: 1.0, xm: 1.0}, LE, 1.0)  # a cell deviates one way only

    for arc in uset.arcs():
        idx = uset.cells_of(arc)
        add({o_xp + c: 1.0 for c in idx} | {o_xm + c: 1.0 for c in idx},
            LE, float(uset.budget[arc]))

    # maximize h'lambda + (r-Px)'sigma + (Mz z0 + s)'phi
    #          + sum up_dev*pi+ - sum down_dev*pi-
    obj = np.zeros(n_var)
    obj[o_l:o_s] = staged.h
    obj[o_s:o_p] = staged.r - staged.P @ x
    obj[o_p:o_pp] = staged.Mz @ staged.z_nominal + staged.s
    obj[o_pp:o_pm] = uset.up_dev
    obj[o_pm:o_xp] = -uset.down_dev

    lower = np.concatenate([np.zeros(m_g + m_q),
                            np.full(m_w, -np.inf),
                            np.full(2 * n_c, -big_m),
                            np.zeros(2 * n_c)])
    upper = np.concatenate([np.full(m_g + m_q, np.inf),
                            np.full(m_w, np.inf),
                            np.full(2 * n_c, big_m),
                            np.ones(2 * n_c)])
    prob = MilpProblem(-obj, rows, relations, rhs, lower=lower, upper=upper,
                       integers=np.arange(o_xp, n_var))
    return DualSubproblem(problem=prob, big_m=big_m, x=x.copy(),
                          staged=staged, uset=uset, slices=slices)


def solve_subproblem(sub, rel_gap=1e-7, node_limit=200_000):
    """Worst-case second-stage cost at the subproblem's first stage.

    Returns ``(beta, indicators)`` where beta is the max-min recourse
    cost.  Before being trusted the value is audited against an
    independent primal recourse solve at the realized scenario, which
    must agree with the dual optimum to strong-duality tolerance.  Pin
    duals parked on the big-M envelope are not an error by themselves:
    degenerate alternative optima can slide them to the bound with zero
    objective effect (a cell whose downward deviation exactly cancels
    the nominal supply is objective-flat along that ray), so envelope
    crowding is only reported as a likely cause when duality fails.
    """
    out = solve_milp(sub.problem, rel_gap=rel_gap, node_limit=node_limit)
    if out.status == UNBOUNDED:
        raise NumericalFailure(
            "dual subproblem unbounded: the recourse is infeasible for "
            "some scenario in the set; level slacks should prevent this")
    if out.status != OPTIMAL:
        raise NumericalFailure(f"dual subproblem ended {out.status}")
    beta = -out.objective
    xi_p = np.round(out.x[sub.slices["xi_plus"]]).astype(float)
    xi_m = np.round(out.x[sub.slices["xi_minus"]]).astype(float)
    phi = out.x[sub.slices["phi"]]

    z = sub.uset.realize(xi_p, xi_m)
    primal, p_out = sub.staged.recourse_value(sub.x, z)
    if p_out.status != OPTIMAL:
        raise NumericalFailure(
            f"audit recourse solve ended {p_out.status} at the realized "
            f"worst scenario")
    if abs(primal - beta) > _DUALITY_TOL * (1.0 + abs(beta)):
        pin_duals = np.empty(len(sub.staged.cells))
        for c in range(len(sub.staged.cells)):
            hit = np.flatnonzero(sub.staged.Mz[:, c] != 0.0)[0]
            pin_duals[c] = phi[hit]
        crowd = float(np.max(np.abs(pin_duals), initial=0.0))
        hint = ""
        if crowd > _BIGM_HEADROOM * sub.big_m:
            hint = (f"; a pin dual of {crowd:.3e} crowds the big-M "
                    f"envelope {sub.big_m:.3e}, which likely truncated "
                    f"the bilinear product")
        raise NumericalFailure(
            f"strong duality audit failed: dual {beta!r} vs primal "
            f"{primal!r} at the realized scenario{hint}")
    return beta, ScenarioIndicators(xi_plus=xi_p, xi_minus=xi_m, z=z,
                                    dual_value=beta, primal_value=primal)


def solve_subproblem_enum(staged, x, uset):
    """Worst-case second-stage cost by checking every extreme scenario.

    The recourse value is the optimum of a linear program whose
    right-hand side moves linearly with the scenario, so it is convex in
    ``z``; a convex function maximized over a polytope peaks at a
    vertex, which makes sweeping the budget set's extreme points exact.
    The constraint matrix never changes between scenarios, so each
    solve warm-starts from the previous optimal basis and typically
    repairs in a handful of pivots.

    Exact like the dual subproblem but with opposite scaling: cost grows
    linearly with the vertex count instead of with the big-M search
    tree, which makes it the better tool whenever the count is modest.
    """
    x = np.asarray(x, dtype=float)
    resolver = LpResolver(staged.inner_problem(x, uset.nominal))
    m_w = staged.W.shape[0]
    rhs = resolver.template.rhs.copy()
    best = -np.inf
    best_pair = None
    token = None
    for xp, xm in uset.iter_vertex_indicators():
        z = uset.realize(xp, xm)
        rhs[-m_w:] = staged.Mz @ z + staged.s
        try:
            out = resolver.solve(rhs=rhs, start=token)
        except NumericalFailure:
            # a drifted token is recoverable; a cold failure is not
            out = resolver.solve(rhs=rhs)
        if out.status != OPTIMAL:
            raise NumericalFailure(
                f"recourse solve ended {out.status} during scenario "
                f"enumeration; level slacks should prevent this")
        token = out.start
        if out.objective > best:
            best = float(out.objective)
            best_pair = (xp.copy(), xm.copy(), z.copy())
    if best_pair is None:
        raise ValidationError("uncertainty set yielded no vertices")
    xp, xm, z = best_pair
    return best, ScenarioIndicators(xi_plus=xp, xi_minus=xm, z=z,
                                    dual_value=best, primal_value=best)


def build_master(staged, scenarios):
    """Scenario-expanded master: min c.x + beta over pooled recourses.

    One full second-stage copy per scenario, each tied to the shared
    first stage; beta dominates every copy's cost.  Duplicate scenarios
    are dropped with a warning since they cannot tighten the bound.
    """
    if len(scenarios) == 0:
        raise ValidationError("master needs at least one scenario")
    kept = []
    for z in scenarios:
        z = np.asarray(z, dtype=float)
        if any(np.allclose(z, seen, atol=1e-9) for seen in kept):
            warnings.warn("duplicate scenario dropped from master",
                          stacklevel=2)
            continue
        kept.append(z)
    n_x, n_y = staged.n_x, staged.n_y
    k = len(kept)
    m_g, m_q, m_w = (staged.G.shape[0], staged.Q.shape[0],
                     staged.W.shape[0])
    n_var = n_x + 1 + k * n_y
    beta_col = n_x

    def y_slice(i):
        return slice(n_x + 1 + i * n_y, n_x + 1 + (i + 1) * n_y)

    rows, relations, rhs = [], [], []
    for i in range(staged.A.shape[0]):
        row = np.zeros(n_var)
        row[:n_x] = staged.A[i]
        rows.append(row)
        relations.append(LE)
        rhs.append(staged.b[i])
    for i, z in enumerate(kept):
        ys = y_slice(i)
        row = np.zeros(n_var)
        row[beta_col] = -1.0
        row[ys] = staged.d
        rows.append(row)
        relations.append(LE)
        rhs.append(0.0)
        for jg in range(m_g):
            row = np.zeros(n_var)
            row[ys] = staged.G[jg]
            rows.append(row)
            relations.append(GE)
            rhs.append(staged.h[jg])
        for jq in range(m_q):
            row = np.zeros(n_var)
            row[ys] = staged.Q[jq]
            row[:n_x] = staged.P[jq]
            rows.append(row)
            relations.append(GE)
            rhs.append(staged.r[jq])
        wz = staged.Mz @ z + staged.s
        for jw in range(m_w):
            row = np.zeros(n_var)
            row[ys] = staged.W[jw]
            rows.append(row)
            relations.append(EQ)
            rhs.append(wz[jw])

    obj = np.zeros(n_var)
    obj[:n_x] = staged.c
    obj[beta_col] = 1.0
    lower = np.concatenate([np.zeros(n_x + 1),
                            np.full(k * n_y, -np.inf)])
    upper = np.concatenate([np.ones(n_x), np.full(1 + k * n_y, np.inf)])
    prob = MilpProblem(obj, rows, relations, rhs, lower=lower, upper=upper,
                       integers=np.arange(n_x))
    maps = {"x": slice(0, n_x), "beta": beta_col,
            "y": [y_slice(i) for i in range(k)], "scenarios": kept}
    return prob, maps


@dataclass
class CcgIteration:
    """One master/subproblem round of the generation loop."""
    index: int
    lower_bound: float
    upper_bound: float
    master_objective: float
    subproblem_objective: float
    candidate_objective: float
    scenario: np.ndarray
    master_nodes: int
    seconds: float
    master_seconds: float = 0.0
    subproblem_seconds: float = 0.0


@dataclass
class CcgResult:
    x: np.ndarray
    objective: float
    lower_bound: float
    upper_bound: float
    iterations: int
    converged: bool
    trace: list
    scenarios: list
    x_names: list

    def gap(self):
        return self.upper_bound - self.lower_bound


def ccg_solve(staged, uset, delta=1e-6, max_iter=20, separation="auto",
              enum_limit=200_000, delta_rel=0.0):
    """Column-and-constraint generation over the budget set.

    Starts from the nominal-scenario master (whose solution doubles as
    the deterministic schedule), then alternates worst-case separation
    and master re-solves, growing one recourse block per round.  Stops
    when UB - LB falls to ``max(delta, delta_rel * (1 + |UB|))``, when
    the worst scenario repeats (no new column can tighten the master),
    or at ``max_iter``.

    ``separation`` picks the worst-case solver: ``"enumerate"`` sweeps
    the budget set's extreme points with warm-started recourse solves,
    ``"dual"`` solves the big-M dual subproblem, and ``"auto"``
    enumerates whenever the vertex count stays within ``enum_limit``.
    Both paths are exact; they differ only in how their cost scales.
    """
    if separation == "auto":
        use_enum = uset.n_vertices() <= enum_limit
    elif separation == "enumerate":
        use_enum = True
    elif separation == "dual":
        use_enum = False
    else:
        raise ValidationError(
            f"unknown separation '{separation}'; use auto, enumerate or dual")
    scenarios = [np.asarray(uset.nominal, dtype=float).copy()]
    lb, ub = -np.inf, np.inf
    best_x = None
    trace = []
    converged = False
    for it in range(1, max_iter + 1):
        t0 = time.perf_counter()
        master, maps = build_master(staged, scenarios)
        m_out = solve_milp(master)
        t1 = time.perf_counter()
        if m_out.status == INFEASIBLE:
            raise ValidationError(
                "master infeasible: first-stage constraints unsatisfiable")
        if m_out.status != OPTIMAL:
            raise NumericalFailure(f"master solve ended {m_out.status}")
        if m_out.objective < lb - 1e-7 * (1.0 + abs(lb)):
            raise NumericalFailure(
                f"master bound regressed: {m_out.objective!r} < {lb!r}")
        lb = max(lb, m_out.objective)
        x = np.round(m_out.x[maps["x"]]).astype(float)

        if use_enum:
            beta, ind = solve_subproblem_enum(staged, x, uset)
        else:
            beta, ind = solve_subproblem(build_subproblem(staged, x, uset))
        t2 = time.perf_counter()
        candidate = float(staged.c @ x) + beta
        if candidate < ub:
            ub = candidate
            best_x = x
        if lb > ub + 1e-6 * (1.0 + abs(ub)):
            raise NumericalFailure(
                f"bound crossing: LB {lb!r} above UB {ub!r}")
        trace.append(CcgIteration(
            index=it, lower_bound=lb, upper_bound=ub,
            master_objective=m_out.objective, subproblem_objective=beta,
            candidate_objective=candidate, scenario=ind.z.copy(),
            master_nodes=m_out.nodes,
            seconds=time.perf_counter() - t0,
            master_seconds=t1 - t0, subproblem_seconds=t2 - t1))
        gap_tol = max(delta, delta_rel * (1.0 + abs(ub)))
        if ub - lb <= gap_tol:
            converged = True
            break
        repeat = any(np.allclose(ind.z, z, atol=1e-9) for z in scenarios)
        if repeat:
            # the separating scenario is already in the master; the
            # remaining gap is numerical residue, not missing columns
            converged = ub - lb <= max(gap_tol, 1e-6 * (1.0 + abs(ub)))
            break
        scenarios.append(ind.z.copy())
    return CcgResult(x=best_x, objective=ub, lower_bound=lb,
                     upper_bound=ub, iterations=len(trace),
                     converged=converged, trace=trace, scenarios=scenarios,
                     x_names=list(staged.x_names))


@dataclass
class PolicyEvaluation:
    """Second-stage cost distribution of a fixed first stage."""
    first_stage_cost: float
    costs: np.ndarray
    total_costs: np.ndarray
    mean_cost: float
    max_cost: float
    worst_index: int
    slack_activations: np.ndarray


def evaluate_policy(staged, x, trajectories):
    """Price a first-stage schedule against sampled scenarios.

    Solves the recourse LP per trajectory and reports the cost spread
    plus how often the elastic level slacks fired (any activation marks
    a scenario the physical system could not absorb).
    """
    x = np.asarray(x, dtype=float)
    trajectories = np.atleast_2d(np.asarray(trajectories, dtype=float))
    n = trajectories.shape[0]
    costs = np.empty(n)
    slacks = np.zeros(n, dtype=int)
    for i in range(n):
        value, out = staged.recourse_value(x, trajectories[i])
        if out.status != OPTIMAL:
            raise NumericalFailure(
                f"recourse solve ended {out.status} on trajectory {i}")
        costs[i] = value
        if staged.slack_cols.size:
            slacks[i] = int(np.sum(out.x[staged.slack_cols] > 1e-6))
    fs = float(staged.c @ x)
    return PolicyEvaluation(
        first_stage_cost=fs, costs=costs, total_costs=fs + costs,
        mean_cost=float(np.mean(costs)), max_cost=float(np.max(costs)),
        worst_index=int(np.argmax(costs)), slack_activations=slacks)
