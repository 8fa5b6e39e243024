"""Dense linear programming by a bounded-variable revised simplex method.

The solver handles problems of the form

    min  c'x   subject to   a_i'x {<=,>=,=} b_i,   lo <= x <= up,

with +-inf bounds allowed.  Internally every >= row is negated to <=, a
slack column is appended per inequality, and a phase-1 pass over one
artificial column per row finds a feasible basis before the true
objective is optimized.  Slacks with a nonnegative starting residual
enter the crash basis directly, so phase 1 only has to clear the
equality rows and the violated inequalities.  The basis inverse is kept
explicitly and updated by the product-form (eta) rule, with a periodic
refactorization from scratch to bound drift.

Optimal outcomes carry an opaque ``start`` token.  Passing it back via
``solve_lp(..., start=token)`` warm-starts the solve from that basis,
which pays off when the same constraint matrix is re-solved under
different variable bounds (branch and bound does exactly this).  A
short penalty pass repairs any basic variables the new bounds push out
of range; if the repair does not converge the solver silently restarts
cold, so a stale or mismatched token costs time but never correctness.

Design choices that matter for callers:

* infinite bounds are represented by +-inf, never by a large constant;
* entering variables are priced by the Dantzig rule, switching to
  Bland's rule for the rest of the phase after a run of degenerate
  pivots, which guarantees termination;
* duals follow the convention of ``y = c_B B^-1``: for a minimization,
  <= rows get duals <= 0, >= rows get duals >= 0, = rows are free;
* infeasible problems return a Farkas-style certificate built from the
  phase-1 duals, unbounded problems return an improving ray.
"""

from dataclasses import dataclass

import numpy as np

from gasflow.errors import NumericalFailure, ValidationError

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

LE = "<="
GE = ">="
EQ = "="

PIVOT_TOL = 1e-7
FEAS_TOL = 1e-6

_AT_LO, _AT_UP, _FREE, _BASIC = 0, 1, 2, 3
_BLAND_AFTER = 40
_REFACTOR_EVERY = 100
_RATIO_TOL = 1e-12
_BOUND_SLACK = 1e-7
_MIN_PIVOT = 1e-9
# how many times a token's basis inverse may be handed down a warm-start
# chain before it is recomputed from the basis; drift across eta updates
# is also caught per solve by the final residual check, so this only has
# to keep the common path honest, not be the last line of defense
_TOKEN_REINVERT = 48


class LpProblem:
    """Immutable-by-convention container for a dense LP.

    Parameters
    ----------
    objective : array_like, shape (n,)
        Minimization coefficients.
    rows : array_like, shape (m, n), optional
        Constraint coefficient rows.  Omit for a box-only problem.
    relations : sequence of str, optional
        One of ``"<="``, ``">="``, ``"="`` per row (``"=="`` is accepted
        and normalized).
    rhs : array_like, shape (m,), optional
        Right-hand sides.
    lower, upper : array_like, shape (n,), optional
        Variable bounds; default free.  ``-inf``/``+inf`` are allowed.
    """

    def __init__(self, objective, rows=None, relations=None, rhs=None,
                 lower=None, upper=None):
        self.objective = np.atleast_1d(np.asarray(objective, dtype=float))
        n = self.objective.shape[0]
        if rows is None:
            rows = np.zeros((0, n))
            relations = []
            rhs = np.zeros(0)
        self.rows = np.asarray(rows, dtype=float)
        if self.rows.ndim == 1:
            self.rows = self.rows.reshape(1, -1)
        if self.rows.size == 0:
            self.rows = self.rows.reshape(-1, n)
        self.relations = tuple(EQ if r == "==" else r for r in relations)
        self.rhs = np.atleast_1d(np.asarray(rhs, dtype=float))
        if self.rhs.size == 0:
            self.rhs = self.rhs.reshape(0)
        self.lower = (np.full(n, -np.inf) if lower is None
                      else np.atleast_1d(np.asarray(lower, dtype=float)))
        self.upper = (np.full(n, np.inf) if upper is None
                      else np.atleast_1d(np.asarray(upper, dtype=float)))
        self._validate()

    def _validate(self):
        details = []
        n, m = self.n_vars, self.n_rows
        if self.objective.ndim != 1:
            details.append("objective must be one-dimensional")
        if not np.all(np.isfinite(self.objective)):
            details.append("objective coefficients must be finite")
        if self.rows.shape != (m, n):
            details.append(f"rows has shape {self.rows.shape}, expected ({m}, {n})")
        if self.rows.size and not np.all(np.isfinite(self.rows)):
            details.append("constraint coefficients must be finite")
        if len(self.relations) != m:
            details.append(f"{len(self.relations)} relations for {m} rows")
        bad = [r for r in self.relations if r not in (LE, GE, EQ)]
        if bad:
            details.append(f"unknown relations {sorted(set(bad))}")
        if self.rhs.shape != (m,):
            details.append(f"rhs has shape {self.rhs.shape}, expected ({m},)")
        if self.rhs.size and not np.all(np.isfinite(self.rhs)):
            details.append("rhs must be finite")
        for name, arr in (("lower", self.lower), ("upper", self.upper)):
            if arr.shape != (n,):
                details.append(f"{name} has shape {arr.shape}, expected ({n},)")
            elif np.any(np.isnan(arr)):
                details.append(f"{name} contains nan")
        if (self.lower.shape == (n,) and self.upper.shape == (n,)
                and np.any(self.lower > self.upper)):
            j = int(np.argmax(self.lower > self.upper))
            details.append(f"lower > upper at variable {j}")
        if details:
            raise ValidationError("invalid linear program", details)

    @property
    def n_vars(self):
        return self.objective.shape[0]

    @property
    def n_rows(self):
        return self.rows.shape[0]


@dataclass
class LpOutcome:
    """Result of a single LP solve.

    ``x``, ``duals`` and ``reduced_costs`` are populated for optimal
    outcomes.  ``certificate`` holds a dict for the other statuses:
    ``{"kind": "infeasibility", "y": ..., "gap": ...}`` with phase-1
    duals proving no feasible point exists, or ``{"kind": "ray",
    "d": ...}`` with a feasible direction of unbounded descent.
    ``start`` is an opaque warm-start token on optimal outcomes; feed it
    to a later ``solve_lp`` call on a problem with the same rows to skip
    most of the work.
    """

    status: str
    objective: float = np.nan
    x: np.ndarray | None = None
    duals: np.ndarray | None = None
    reduced_costs: np.ndarray | None = None
    certificate: dict | None = None
    iterations: int = 0
    start: dict | None = None


def solve_lp(problem, tol=PIVOT_TOL, max_iter=None, start=None):
    """Solve a dense LP to optimality, infeasibility or unboundedness.

    Parameters
    ----------
    problem : LpProblem
    tol : float
        Pivot tolerance; entries below it are treated as zero when
        pricing and ratio-testing.
    max_iter : int, optional
        Hard cap on simplex iterations per phase.  Defaults to a
        generous multiple of the problem size.
    start : dict, optional
        Warm-start token from a previous optimal outcome on a problem
        with identical rows (bounds and objective may differ).  Invalid
        or unusable tokens are ignored.

    Returns
    -------
    LpOutcome

    Raises
    ------
    NumericalFailure
        If the iteration cap is hit, a refactorization meets a singular
        basis, or the final point violates feasibility beyond tolerance.

    One-shot convenience over :class:`LpResolver`; callers re-solving
    the same constraint matrix under changing data should hold a
    resolver instead and skip the per-call setup.
    """
    return LpResolver(problem).solve(tol=tol, max_iter=max_iter, start=start)


@dataclass
class _ProblemView:
    """Just enough of the LpProblem surface for checks and reporting."""
    objective: np.ndarray
    rows: np.ndarray
    relations: tuple
    rhs: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    @property
    def n_vars(self):
        return self.objective.shape[0]

    @property
    def n_rows(self):
        return self.rows.shape[0]


class LpResolver:
    """Repeated solves against one frozen constraint matrix.

    Normalization (>= flips, zero-row removal), equilibration and the
    slack/artificial padding depend only on the rows, so they are
    computed once here; each :meth:`solve` call then accepts a fresh
    right-hand side, bounds or objective.  Combined with warm-start
    tokens this turns a re-solve under slightly different data into a
    short repair instead of a full two-phase run.  Instances reuse
    internal buffers and are not safe for concurrent solves.
    """

    def __init__(self, problem):
        self.template = problem
        n = problem.n_vars
        m0 = problem.n_rows
        A = problem.rows.copy()
        flip = np.ones(m0)
        is_eq0 = np.zeros(m0, dtype=bool)
        for i, rel in enumerate(problem.relations):
            if rel == GE:
                A[i] = -A[i]
                flip[i] = -1.0
            elif rel == EQ:
                is_eq0[i] = True
        zero = (~np.any(np.abs(A) > 0.0, axis=1) if m0
                else np.zeros(0, dtype=bool))
        kept = np.flatnonzero(~zero)
        A = A[kept]
        m = A.shape[0]

        # equilibrate so pivoting sees O(1) entries regardless of the
        # caller's units (big-M rows are the worst offenders);
        # power-of-two factors keep the rescaling exact in binary
        # floating point
        row_scale, col_scale = _equilibrate(A)
        A = A * row_scale[:, None] * col_scale[None, :]

        is_eq = is_eq0[kept]
        n_le = int(np.sum(~is_eq))
        N = n + n_le + m  # structural + slacks + artificials
        A_pad = np.zeros((m, N))
        A_pad[:, :n] = A
        slack_of_row = np.full(m, -1, dtype=int)
        col = n
        for i in range(m):
            if not is_eq[i]:
                A_pad[i, col] = 1.0
                slack_of_row[i] = col
                col += 1

        self.n, self.m0, self.m, self.N = n, m0, m, N
        self.art0 = n + n_le
        self.A = A_pad
        self.flip, self.zero, self.kept = flip, zero, kept
        self.is_eq0, self.is_eq = is_eq0, is_eq
        self.slack_of_row = slack_of_row
        self.row_scale, self.col_scale = row_scale, col_scale

    def solve(self, rhs=None, lower=None, upper=None, objective=None,
              tol=PIVOT_TOL, max_iter=None, start=None):
        """Solve with the frozen rows and the given per-call data.

        Omitted arguments default to the template problem's values.  No
        shape or finiteness validation happens here beyond what the
        template saw; callers own the contract that replacement data
        matches the template's dimensions.
        """
        t = self.template
        rhs = t.rhs if rhs is None else np.asarray(rhs, dtype=float)
        lower = t.lower if lower is None else np.asarray(lower, dtype=float)
        upper = t.upper if upper is None else np.asarray(upper, dtype=float)
        objective = (t.objective if objective is None
                     else np.asarray(objective, dtype=float))
        if np.any(lower > upper):
            raise ValidationError("lower bound exceeds upper bound")
        view = _ProblemView(objective, t.rows, t.relations, rhs, lower, upper)
        n, m, N, art0 = self.n, self.m, self.N, self.art0

        # rows without variables are decided by their rhs alone
        for i in np.flatnonzero(self.zero):
            bv = float(rhs[i]) * self.flip[i]
            bad = (abs(bv) > FEAS_TOL) if self.is_eq0[i] else (bv < -FEAS_TOL)
            if bad:
                y = np.zeros(self.m0)
                y[i] = (np.sign(bv) if self.is_eq0[i] else -1.0) * self.flip[i]
                return LpOutcome(status=INFEASIBLE,
                                 certificate={"kind": "infeasibility",
                                              "y": y, "gap": abs(bv)})

        if max_iter is None:
            max_iter = max(10_000, 100 * (m + n))
        b_norm = (rhs * self.flip)[self.kept] * self.row_scale
        A = self.A
        lo = np.empty(N)
        up = np.empty(N)
        lo[:n] = lower / self.col_scale
        up[:n] = upper / self.col_scale
        lo[n:] = 0.0
        up[n:] = np.inf
        scale_b = 1.0 + (float(np.max(np.abs(b_norm))) if m else 0.0)

        warm = None
        if (isinstance(start, dict) and m
                and start.get("m") == m and start.get("N") == N):
            warm = _warm_start(A, b_norm, lo, up, start, art0, tol,
                               max_iter, scale_b)
        if warm is not None:
            x, bstat, basis, Binv, it1, age = warm
        else:
            age = 0
            # a failed warm attempt may have pinned the artificials; undo
            lo[art0:] = 0.0
            up[art0:] = np.inf
            x = np.zeros(N)
            bstat = np.full(N, _AT_LO, dtype=np.int8)
            for j in range(n):
                if np.isfinite(lo[j]):
                    x[j] = lo[j]
                elif np.isfinite(up[j]):
                    x[j] = up[j]
                    bstat[j] = _AT_UP
                else:
                    bstat[j] = _FREE

            # Crash basis: slacks cover their own rows wherever the
            # starting residual allows, artificials take the equality
            # rows and any inequality started on the wrong side.
            resid = b_norm - A[:, :art0] @ x[:art0]
            basis = np.arange(art0, art0 + m)
            for i in range(m):
                if not self.is_eq[i] and resid[i] >= 0.0:
                    basis[i] = self.slack_of_row[i]
                    x[self.slack_of_row[i]] = resid[i]
                    A[i, art0 + i] = 1.0
                else:
                    A[i, art0 + i] = 1.0 if resid[i] >= 0 else -1.0
                    x[art0 + i] = abs(resid[i])
            bstat[basis] = _BASIC
            Binv = (np.diag(1.0 / A[np.arange(m), basis]) if m
                    else np.zeros((0, 0)))

            # Phase 1: minimize the artificial mass.
            c1 = np.zeros(N)
            c1[art0:] = 1.0
            status, _, it1 = _run_simplex(A, b_norm, c1, lo, up, x, bstat,
                                          basis, Binv, tol, max_iter)
            if status != OPTIMAL:
                raise NumericalFailure(f"phase 1 ended with status {status}")
            p1 = float(np.sum(x[art0:]))
            if p1 > FEAS_TOL * scale_b:
                y1 = c1[basis] @ Binv if m else np.zeros(0)
                duals = np.zeros(self.m0)
                duals[self.kept] = self.flip[self.kept] * self.row_scale * y1
                return LpOutcome(status=INFEASIBLE, iterations=it1,
                                 certificate={"kind": "infeasibility",
                                              "y": duals, "gap": p1})

            # Pin the artificials at zero and try to drive basic ones out.
            lo[art0:] = 0.0
            up[art0:] = 0.0
            x[art0:] = np.where(np.abs(x[art0:]) < FEAS_TOL * scale_b,
                                0.0, x[art0:])
            _drive_out_artificials(A, lo, up, x, bstat, basis, Binv, art0,
                                   tol)

        c2 = np.zeros(N)
        c2[:n] = objective * self.col_scale
        status, ray_info, it2 = _run_simplex(A, b_norm, c2, lo, up, x, bstat,
                                             basis, Binv, tol, max_iter)
        iters = it1 + it2
        if status == UNBOUNDED:
            j, direction, w = ray_info
            d = np.zeros(N)
            d[j] = direction
            if m:
                d[basis] = -direction * w
            return LpOutcome(status=UNBOUNDED, objective=-np.inf,
                             iterations=iters,
                             certificate={"kind": "ray",
                                          "d": d[:n] * self.col_scale})
        if status != OPTIMAL:
            raise NumericalFailure(f"phase 2 ended with status {status}")

        xs = np.clip(x[:n] * self.col_scale, lower, upper)
        viol = constraint_violation(view, xs)
        scale_orig = 1.0 + (float(np.max(np.abs(rhs))) if self.m0 else 0.0)
        if viol > 1e3 * FEAS_TOL * scale_orig:
            raise NumericalFailure(
                f"solution violates constraints by {viol:.3e}")
        y_int = c2[basis] @ Binv if m else np.zeros(0)
        duals = np.zeros(self.m0)
        duals[self.kept] = self.flip[self.kept] * self.row_scale * y_int
        rc = objective - t.rows.T @ duals
        token = ({"m": m, "N": N, "basis": basis.copy(),
                  "bstat": bstat.copy(), "Binv": Binv.copy(),
                  "age": age + 1} if m else None)
        return LpOutcome(status=OPTIMAL,
                         objective=float(objective @ xs),
                         x=xs, duals=duals, reduced_costs=rc,
                         iterations=iters, start=token)


def _equilibrate(A, passes=2):
    """Geometric-mean row/column scaling factors for the matrix ``A``.

    Returns positive (row_scale, col_scale) vectors, each rounded to a
    power of two so applying them introduces no rounding error.  Scaling
    by them brings every nonzero entry toward unit magnitude, which
    keeps ratio tests and pivot selection meaningful when callers mix
    unit-scale rows with big-M rows.
    """
    m, n = A.shape
    row_scale = np.ones(m)
    col_scale = np.ones(n)
    if m == 0 or n == 0:
        return row_scale, col_scale
    M = np.abs(A)

    def factors(mx, mn):
        with np.errstate(divide="ignore", invalid="ignore"):
            f = 1.0 / np.sqrt(mx * mn)
        f = np.where(np.isfinite(f) & (f > 0), f, 1.0)
        return np.exp2(np.rint(np.log2(f)))

    for _ in range(passes):
        nz = M > 0.0
        rmax = M.max(axis=1)
        rmin = np.where(nz, M, np.inf).min(axis=1)
        r = factors(rmax, rmin)
        M *= r[:, None]
        row_scale *= r
        nz = M > 0.0
        cmax = M.max(axis=0)
        cmin = np.where(nz, M, np.inf).min(axis=0)
        c = factors(cmax, cmin)
        M *= c[None, :]
        col_scale *= c
    return row_scale, col_scale


def _warm_start(A, b, lo, up, start, art0, tol, max_iter, scale_b):
    """Rebuild solver state from a warm-start token, or return None.

    Mutates ``A`` (artificial column signs) and pins the artificial
    bounds at zero, so a caller falling back to the cold path must
    restore those.  On success returns ``(x, bstat, basis, Binv,
    iterations, age)`` with a basic point feasible for the current
    bounds; ``age`` counts solves since the basis inverse was last
    computed fresh, so drift from the incremental eta updates stays
    bounded across long token chains.

    When the new bounds cut off the token's basic values, the violated
    variables get their box widened to the current value and a penalty
    pass pays one unit per unit of remaining violation; the fix
    direction is capped at a real bound so the pass cannot diverge.
    Any wrinkle (singular basis, unfinished repair, a nonbasic variable
    off its bound) abandons the token rather than risking a bad start.
    """
    m, N = A.shape
    if not (isinstance(start.get("basis"), np.ndarray)
            and isinstance(start.get("bstat"), np.ndarray)):
        return None
    basis = start["basis"].astype(int, copy=True)
    bstat = start["bstat"].astype(np.int8, copy=True)
    if basis.shape != (m,) or bstat.shape != (N,):
        return None
    if basis.min() < 0 or basis.max() >= N:
        return None
    if (np.count_nonzero(bstat == _BASIC) != m
            or not np.all(bstat[basis] == _BASIC)):
        return None
    for i in range(m):
        A[i, art0 + i] = 1.0
    lo[art0:] = 0.0
    up[art0:] = 0.0

    x = np.zeros(N)
    at_lo = bstat == _AT_LO
    at_up = bstat == _AT_UP
    if np.any(at_lo & ~np.isfinite(lo)) or np.any(at_up & ~np.isfinite(up)):
        return None
    x[at_lo] = lo[at_lo]
    x[at_up] = up[at_up]
    binv_tok = start.get("Binv")
    age = int(start.get("age", 0))
    if (isinstance(binv_tok, np.ndarray) and binv_tok.shape == (m, m)
            and age < _TOKEN_REINVERT):
        Binv = binv_tok.copy()
        xnb = x.copy()
        xnb[basis] = 0.0
        x[basis] = Binv @ (b - A @ xnb)
    else:
        age = 0
        Binv = np.empty((m, m))
        try:
            _refactor(A, b, x, basis, Binv)
        except NumericalFailure:
            return None

    eps = FEAS_TOL * scale_b
    below = x < lo - eps
    above = x > up + eps
    iters = 0
    if np.any(below) or np.any(above):
        lo_w = np.where(below, x, lo)
        up_w = np.where(above, x, up)
        up_w = np.where(below, np.where(np.isfinite(up), up, lo), up_w)
        lo_w = np.where(above, np.where(np.isfinite(lo), lo, up), lo_w)
        c1 = np.zeros(N)
        c1[below] = -1.0
        c1[above] = 1.0
        status, _, iters = _run_simplex(A, b, c1, lo_w, up_w, x, bstat,
                                        basis, Binv, tol, max_iter)
        if status != OPTIMAL:
            return None
        if np.any(x < lo - eps) or np.any(x > up + eps):
            return None
        for j in np.flatnonzero(bstat != _BASIC):
            if np.isfinite(lo[j]) and abs(x[j] - lo[j]) <= eps:
                x[j] = lo[j]
                bstat[j] = _AT_LO
            elif np.isfinite(up[j]) and abs(x[j] - up[j]) <= eps:
                x[j] = up[j]
                bstat[j] = _AT_UP
            elif not np.isfinite(lo[j]) and not np.isfinite(up[j]):
                bstat[j] = _FREE
            else:
                return None
    return x, bstat, basis, Binv, iters, age


def _run_simplex(A, b, c, lo, up, x, bstat, basis, Binv, tol, max_iter):
    """Optimize ``c`` over the current state, mutating it in place.

    Returns (status, ray_info, iterations); ray_info is (entering column,
    direction, w) when status is unbounded, else None.
    """
    m, N = A.shape
    use_bland = False
    degenerate_run = 0
    since_refactor = 0
    movable = (up - lo) > 0.0

    for it in range(1, max_iter + 1):
        y = c[basis] @ Binv if m else np.zeros(0)
        rc = c - y @ A if m else c.copy()
        at_lo = bstat == _AT_LO
        at_up = bstat == _AT_UP
        free = bstat == _FREE
        eligible = movable & ((at_lo & (rc < -tol)) | (at_up & (rc > tol))
                              | (free & (np.abs(rc) > tol)))
        idx = np.flatnonzero(eligible)
        if idx.size == 0:
            return OPTIMAL, None, it - 1
        if use_bland:
            j = int(idx[0])
        else:
            j = int(idx[np.argmax(np.abs(rc[idx]))])
        direction = 1.0
        if at_up[j] or (free[j] and rc[j] > 0):
            direction = -1.0

        w = Binv @ A[:, j] if m else np.zeros(0)
        wb = direction * w
        t_basic = np.full(m, np.inf)
        # the ratio test admits entries far below the pivot tolerance:
        # the update applies the full w, so a sub-tolerance entry times a
        # large step (big-M scale) would push a basic variable well past
        # its bound if the test ignored it; pivot-quality selection below
        # still steers the pivot onto a well-conditioned element
        dec = wb > _RATIO_TOL
        inc = wb < -_RATIO_TOL
        if m:
            xb, lob, upb = x[basis], lo[basis], up[basis]
            with np.errstate(invalid="ignore"):
                t_basic[dec] = np.where(np.isfinite(lob[dec]),
                                        (xb[dec] - lob[dec]) / wb[dec], np.inf)
                t_basic[inc] = np.where(np.isfinite(upb[inc]),
                                        (upb[inc] - xb[inc]) / (-wb[inc]), np.inf)
            np.maximum(t_basic, 0.0, out=t_basic)
        t_min = float(np.min(t_basic)) if m else np.inf
        t_span = up[j] - lo[j]

        if t_span <= t_min:
            if not np.isfinite(t_span):
                return UNBOUNDED, (j, direction, w), it
            # The entering variable flips to its other bound; no pivot.
            x[basis] -= direction * t_span * w
            x[j] = up[j] if direction > 0 else lo[j]
            bstat[j] = _AT_UP if direction > 0 else _AT_LO
            degenerate_run = degenerate_run + 1 if t_span <= 1e-10 else 0
        else:
            if not np.isfinite(t_min):
                return UNBOUNDED, (j, direction, w), it
            if use_bland:
                near = np.flatnonzero(t_basic <= t_min + 1e-9)
                r = int(near[np.argmin(basis[near])])
            else:
                # two-pass ratio test: a small bound cushion widens the
                # pool of admissible leaving rows so the pivot can land
                # on a well-conditioned element; each bypassed row then
                # overshoots its bound by at most the cushion
                t_relax = np.full(m, np.inf)
                with np.errstate(invalid="ignore"):
                    t_relax[dec] = np.where(
                        np.isfinite(lob[dec]),
                        (xb[dec] - lob[dec] + _BOUND_SLACK) / wb[dec], np.inf)
                    t_relax[inc] = np.where(
                        np.isfinite(upb[inc]),
                        (upb[inc] - xb[inc] + _BOUND_SLACK) / (-wb[inc]),
                        np.inf)
                t_max = max(float(np.min(t_relax)), t_min)
                cand = np.flatnonzero(t_basic <= t_max)
                strong = cand[np.abs(w[cand]) >= _MIN_PIVOT]
                pool = strong if strong.size else cand
                r = int(pool[np.argmax(np.abs(w[pool]))])
            t_star = float(t_basic[r])
            leaving = int(basis[r])
            x[basis] -= direction * t_star * w
            x[j] = x[j] + direction * t_star
            if wb[r] > 0:
                x[leaving] = lo[leaving]
                bstat[leaving] = _AT_LO
            else:
                x[leaving] = up[leaving]
                bstat[leaving] = _AT_UP
            basis[r] = j
            bstat[j] = _BASIC
            _eta_update(Binv, w, r)
            since_refactor += 1
            degenerate_run = degenerate_run + 1 if t_star <= 1e-10 else 0

        if degenerate_run > _BLAND_AFTER:
            use_bland = True
        if since_refactor >= _REFACTOR_EVERY:
            _refactor(A, b, x, basis, Binv)
            since_refactor = 0
    raise NumericalFailure(f"simplex iteration cap {max_iter} exhausted")


def _eta_update(Binv, w, r):
    """Product-form update of the basis inverse after a pivot in row r."""
    wr = w[r]
    if abs(wr) < 1e-12:
        raise NumericalFailure("pivot element vanished during eta update")
    row = Binv[r] / wr
    # rank-1 downdate written as a broadcast so no intermediate is built
    # beyond the one product matrix; np.outer ravels and re-wraps both
    # operands on every pivot, which dominates runtime at these sizes
    np.subtract(Binv, w[:, None] * row, out=Binv)
    Binv[r] = row


def _refactor(A, b, x, basis, Binv):
    """Recompute the basis inverse and basic values from scratch."""
    m = A.shape[0]
    if m == 0:
        return
    try:
        Binv[...] = np.linalg.inv(A[:, basis])
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure("singular basis during refactorization") from exc
    xnb = x.copy()
    xnb[basis] = 0.0
    x[basis] = Binv @ (b - A @ xnb)


def _drive_out_artificials(A, lo, up, x, bstat, basis, Binv, art0, tol):
    """Pivot basic artificials out on any nonzero row entry, if possible."""
    m = A.shape[0]
    for r in range(m):
        if basis[r] < art0:
            continue
        row = Binv[r] @ A[:, :art0]
        candidates = np.flatnonzero((np.abs(row) > max(tol, 1e-9))
                                    & (bstat[:art0] != _BASIC)
                                    & ((up[:art0] - lo[:art0]) > 0))
        if candidates.size == 0:
            continue  # redundant row; the pinned artificial stays basic
        j = int(candidates[np.argmax(np.abs(row[candidates]))])
        w = Binv @ A[:, j]
        leaving = int(basis[r])
        basis[r] = j
        bstat[leaving] = _AT_LO
        x[leaving] = 0.0
        bstat[j] = _BASIC
        _eta_update(Binv, w, r)


def constraint_violation(problem, x):
    """Worst absolute violation of rows and bounds at the point ``x``."""
    worst = 0.0
    if problem.n_rows:
        ax = problem.rows @ x
        for i, rel in enumerate(problem.relations):
            if rel == LE:
                worst = max(worst, ax[i] - problem.rhs[i])
            elif rel == GE:
                worst = max(worst, problem.rhs[i] - ax[i])
            else:
                worst = max(worst, abs(ax[i] - problem.rhs[i]))
    finite_lo = np.isfinite(problem.lower)
    finite_up = np.isfinite(problem.upper)
    if np.any(finite_lo):
        worst = max(worst, float(np.max(problem.lower[finite_lo] - x[finite_lo])))
    if np.any(finite_up):
        worst = max(worst, float(np.max(x[finite_up] - problem.upper[finite_up])))
    return max(worst, 0.0)


def dual_objective(problem, outcome, zero_tol=1e-9):
    """Evaluate the dual bound implied by an optimal outcome's duals.

    Computes ``y'b`` plus the bound terms contributed by nonzero reduced
    costs: a positive reduced cost multiplies the lower bound, a negative
    one the upper bound.  At a true optimum this equals the primal
    objective, which makes the function an independent audit of strong
    duality (it never reuses the primal objective value).
    """
    val = float(outcome.duals @ problem.rhs) if problem.n_rows else 0.0
    rc = outcome.reduced_costs
    for j in range(problem.n_vars):
        if rc[j] > zero_tol:
            val += rc[j] * problem.lower[j]
        elif rc[j] < -zero_tol:
            val += rc[j] * problem.upper[j]
    return val


def dump_tableau(problem, precision=6):
    """Render the problem as fixed-point text, one constraint per line.

    The format is stable across runs for identical data, which makes it
    usable for golden-file diffs in tests.
    """
    fmt = f"% .{precision}f"
    lines = ["min  " + "  ".join(fmt % v for v in problem.objective)]
    for i in range(problem.n_rows):
        coeffs = "  ".join(fmt % v for v in problem.rows[i])
        lines.append(f"{coeffs}  {problem.relations[i]:>2s}  "
                     + (fmt % problem.rhs[i]))
    bounds = "  ".join(
        f"[{problem.lower[j]:g},{problem.upper[j]:g}]"
        for j in range(problem.n_vars))
    lines.append("bounds  " + bounds)
    return "\n".join(lines)
