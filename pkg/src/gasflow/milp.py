"""Branch-and-bound for mixed-integer linear programs.

Builds directly on the LP kernel in :mod:`gasflow.lp`: every node is an
LP relaxation with tightened variable bounds, branched on the most
fractional integer variable (lowest index on ties).  Node selection is
best-bound once an incumbent exists; before that the search dives
depth-first so a feasible point appears early.  No cutting planes, no
presolve beyond integer bound rounding: the point of this module is a
small, auditable kernel, not speed on large instances.
"""

import itertools
from dataclasses import dataclass, field

import numpy as np

from gasflow.errors import ResourceLimit, ValidationError
from gasflow.lp import (
    INFEASIBLE,
    OPTIMAL,
    UNBOUNDED,
    LpProblem,
    LpResolver,
    solve_lp,
)

NODE_LIMIT = 200_000
INT_TOL = 1e-6
REL_GAP = 1e-6


class MilpProblem(LpProblem):
    """An LP plus a set of integer-constrained variable indices.

    Integer variables must carry finite bounds; the network builder only
    ever produces binaries in [0, 1], but any finite integer box works.
    """

    def __init__(self, objective, rows=None, relations=None, rhs=None,
                 lower=None, upper=None, integers=()):
        super().__init__(objective, rows, relations, rhs, lower, upper)
        idx = np.unique(np.asarray(list(integers), dtype=int))
        details = []
        if idx.size and (idx.min() < 0 or idx.max() >= self.n_vars):
            details.append("integer index out of range")
        else:
            for j in idx:
                if not (np.isfinite(self.lower[j]) and np.isfinite(self.upper[j])):
                    details.append(f"integer variable {j} needs finite bounds")
        if details:
            raise ValidationError("invalid mixed-integer program", details)
        self.integers = idx

    def relaxation(self, lower=None, upper=None):
        """The LP relaxation, optionally with overridden bounds."""
        return LpProblem(self.objective, self.rows, self.relations, self.rhs,
                         self.lower if lower is None else lower,
                         self.upper if upper is None else upper)


@dataclass
class MilpOutcome:
    status: str
    objective: float = np.nan
    x: np.ndarray | None = None
    best_bound: float = np.nan
    gap: float = np.nan
    nodes: int = 0
    node_log: list = field(default_factory=list)


def _fractionality(x, integers, int_tol):
    """Distance of each integer variable from its nearest integer."""
    v = x[integers]
    return np.abs(v - np.round(v)), v


def solve_milp(problem, tol=1e-7, int_tol=INT_TOL, rel_gap=REL_GAP,
               node_limit=NODE_LIMIT):
    """Solve a MILP by LP-based branch and bound.

    Returns a :class:`MilpOutcome` whose ``node_log`` records one tuple
    ``(node_id, depth, bound, branch_var)`` per explored node, with
    ``branch_var`` None when the node was not branched.

    Raises
    ------
    ResourceLimit
        If ``node_limit`` nodes are explored without closing the gap.
    """
    lo0 = problem.lower.copy()
    up0 = problem.upper.copy()
    ints = problem.integers
    # Round integer bounds inward before searching.
    lo0[ints] = np.ceil(lo0[ints] - int_tol)
    up0[ints] = np.floor(up0[ints] + int_tol)
    if np.any(lo0 > up0):
        return MilpOutcome(status=INFEASIBLE)

    incumbent_x = None
    incumbent_obj = np.inf
    node_log = []
    pending = [(-np.inf, 0, lo0, up0, 0, None)]
    next_id = 1
    explored = 0
    resolver = LpResolver(problem.relaxation())

    while pending:
        if incumbent_x is None:
            # Dive: newest node first until something integral turns up.
            bound, node_id, lo, up, depth, warm = pending.pop()
        else:
            k = min(range(len(pending)), key=lambda i: (pending[i][0], pending[i][1]))
            bound, node_id, lo, up, depth, warm = pending.pop(k)
        gap_tol = rel_gap * max(1.0, abs(incumbent_obj))
        if bound >= incumbent_obj - gap_tol:
            continue
        explored += 1
        if explored > node_limit:
            raise ResourceLimit(f"branch-and-bound node limit {node_limit} hit "
                                f"with incumbent {incumbent_obj:.6g}")

        # Children restart the simplex from the parent's optimal basis;
        # only the branched bound differs, so the repair is a few pivots.
        out = resolver.solve(lower=lo, upper=up, tol=tol, start=warm)
        if out.status == INFEASIBLE:
            node_log.append((node_id, depth, np.inf, None))
            continue
        if out.status == UNBOUNDED:
            # Integers are boxed, so the ray lives in the continuous part
            # and survives any assignment: the MILP itself is unbounded.
            return MilpOutcome(status=UNBOUNDED, objective=-np.inf,
                               nodes=explored, node_log=node_log)
        if out.objective >= incumbent_obj - gap_tol:
            node_log.append((node_id, depth, out.objective, None))
            continue

        frac, vals = _fractionality(out.x, ints, int_tol)
        if ints.size == 0 or np.all(frac <= int_tol):
            x = out.x.copy()
            x[ints] = np.round(x[ints])
            incumbent_x, incumbent_obj = x, out.objective
            node_log.append((node_id, depth, out.objective, None))
            continue

        # Most fractional = fractional part closest to one half; np.argmax
        # resolves ties toward the lowest variable index.
        score = 0.5 - np.abs(vals - np.floor(vals) - 0.5)
        score[frac <= int_tol] = -1.0
        j = int(ints[np.argmax(score)])
        node_log.append((node_id, depth, out.objective, j))
        vj = out.x[j]
        lo_hi = lo.copy()
        lo_hi[j] = np.ceil(vj)
        up_lo = up.copy()
        up_lo[j] = np.floor(vj)
        # keep only the basis itself: storing the inverse on every
        # pending node would cost O(m^2) memory apiece
        tok = (None if out.start is None else
               {k: out.start[k] for k in ("m", "N", "basis", "bstat")})
        down = (out.objective, next_id, lo, up_lo, depth + 1, tok)
        upn = (out.objective, next_id + 1, lo_hi, up, depth + 1, tok)
        next_id += 2
        # Push the child on the side of the fraction first when diving.
        if vj - np.floor(vj) > 0.5:
            pending.append(down)
            pending.append(upn)
        else:
            pending.append(upn)
            pending.append(down)

    if incumbent_x is None:
        return MilpOutcome(status=INFEASIBLE, nodes=explored, node_log=node_log)
    best_bound = incumbent_obj
    gap = 0.0
    return MilpOutcome(status=OPTIMAL, objective=incumbent_obj, x=incumbent_x,
                       best_bound=best_bound, gap=gap, nodes=explored,
                       node_log=node_log)


def enumerate_oracle(problem, tol=1e-7, assignment_cap=1 << 20):
    """Exhaustive reference solver: try every integer assignment.

    Solves one LP per assignment of the integer variables and keeps the
    best.  Deliberately independent of the branch-and-bound search so the
    two can cross-check each other in tests.  Refuses instances whose
    assignment count exceeds ``assignment_cap``.
    """
    ints = problem.integers
    lo = problem.lower.copy()
    up = problem.upper.copy()
    ranges = []
    for j in ints:
        a = int(np.ceil(lo[j] - INT_TOL))
        b = int(np.floor(up[j] + INT_TOL))
        if a > b:
            return MilpOutcome(status=INFEASIBLE)
        ranges.append(range(a, b + 1))
    total = 1
    for r in ranges:
        total *= len(r)
        if total > assignment_cap:
            raise ValidationError(
                f"enumeration oracle refuses {total}+ assignments")

    best = None
    for combo in itertools.product(*ranges) if ints.size else [()]:
        l2, u2 = lo.copy(), up.copy()
        for j, v in zip(ints, combo):
            l2[j] = u2[j] = float(v)
        out = solve_lp(problem.relaxation(l2, u2), tol=tol)
        if out.status == UNBOUNDED:
            return MilpOutcome(status=UNBOUNDED, objective=-np.inf)
        if out.status == OPTIMAL and (best is None or out.objective < best.objective):
            best = out
    if best is None:
        return MilpOutcome(status=INFEASIBLE)
    x = best.x.copy()
    x[ints] = np.round(x[ints])
    return MilpOutcome(status=OPTIMAL, objective=best.objective, x=x,
                       best_bound=best.objective, gap=0.0)
