"""Reference implementations used to cross-check the solvers.

Everything here is deliberately independent of the simplex and
branch-and-bound code paths: the LP oracle enumerates basic points
geometrically, generators build random instances around a known anchor
point, and the validators re-derive certificate math from first
principles.  Tests compare objective values, never solution vectors,
because degenerate instances have many optima.
"""

import itertools

import numpy as np

from gasflow.lp import EQ, GE, LE

FEAS_TOL = 1e-6


def vertex_oracle(problem, feas_tol=FEAS_TOL):
    """Solve a finitely-boxed LP by enumerating candidate vertices.

    Every vertex of a bounded polytope is the intersection of n active
    constraints drawn from the rows (equalities always active) and the
    variable bounds.  Requires all bounds finite so the feasible set is
    bounded and 'no vertex' means 'infeasible'.

    Returns (status, objective, x) with status 'optimal' or 'infeasible'.
    """
    n = problem.n_vars
    if not (np.all(np.isfinite(problem.lower))
            and np.all(np.isfinite(problem.upper))):
        raise ValueError("vertex oracle needs finite bounds")
    # All-zero rows would make every active-set matrix singular, so decide
    # them here: contradictory ones settle the instance, vacuous ones drop.
    rows_keep = []
    for i in range(problem.n_rows):
        if np.any(problem.rows[i] != 0.0):
            rows_keep.append(i)
            continue
        b, rel = problem.rhs[i], problem.relations[i]
        if ((rel == LE and b < -feas_tol) or (rel == GE and b > feas_tol)
                or (rel == EQ and abs(b) > feas_tol)):
            return "infeasible", np.nan, None
    rows = problem.rows[rows_keep]
    rels = [problem.relations[i] for i in rows_keep]
    brow = problem.rhs[rows_keep]
    eye = np.eye(n)
    cand = np.vstack([rows, eye, eye])
    rhs = np.concatenate([brow, problem.lower, problem.upper])
    eq_idx = [i for i, r in enumerate(rels) if r == EQ]
    others = [k for k in range(cand.shape[0]) if k not in eq_idx]
    need = n - len(eq_idx)
    if need < 0:
        raise ValueError("more equalities than variables; widen the generator")

    sel = np.array([eq_idx + list(cmb)
                    for cmb in itertools.combinations(others, need)], dtype=int)
    M = cand[sel]
    r = rhs[sel]
    with np.errstate(all="ignore"):
        det = np.linalg.det(M)
    ok = np.abs(det) > 1e-9
    if not np.any(ok):
        return "infeasible", np.nan, None
    X = np.linalg.solve(M[ok], r[ok][..., None])[..., 0]
    resid = np.max(np.abs(np.einsum("kij,kj->ki", M[ok], X) - r[ok]), axis=1)
    X = X[resid < 1e-7]
    if X.size == 0:
        return "infeasible", np.nan, None

    feas = np.all(X >= problem.lower - feas_tol, axis=1)
    feas &= np.all(X <= problem.upper + feas_tol, axis=1)
    if problem.n_rows:
        ax = X @ problem.rows.T
        for i, rel in enumerate(problem.relations):
            if rel == LE:
                feas &= ax[:, i] <= problem.rhs[i] + feas_tol
            elif rel == GE:
                feas &= ax[:, i] >= problem.rhs[i] - feas_tol
            else:
                feas &= np.abs(ax[:, i] - problem.rhs[i]) <= feas_tol
    if not np.any(feas):
        return "infeasible", np.nan, None
    vals = X[feas] @ problem.objective
    k = int(np.argmin(vals))
    return "optimal", float(vals[k]), X[feas][k]


def random_boxed_lp(rng, max_vars=6, max_rows=7, with_anchor=False):
    """A random LP with finite boxes, anchored so feasibility is common.

    Roughly a quarter of the draws shift right-hand sides against the
    anchor point, which yields a healthy mix of infeasible instances;
    the oracle, not the generator, decides the true status.
    """
    from gasflow.lp import LpProblem

    n = int(rng.integers(2, max_vars + 1))
    m = int(rng.integers(1, max_rows + 1))
    A = rng.uniform(-3.0, 3.0, (m, n))
    A[rng.random((m, n)) < 0.25] = 0.0
    x0 = rng.uniform(-2.0, 2.0, n)
    lower = x0 - rng.uniform(0.5, 3.0, n)
    upper = x0 + rng.uniform(0.5, 3.0, n)
    rels = []
    b = np.zeros(m)
    n_eq = 0
    for i in range(m):
        u = rng.random()
        if u < 0.2 and n_eq < n - 1:
            rels.append(EQ)
            n_eq += 1
            b[i] = A[i] @ x0
            if rng.random() < 0.15:
                b[i] += rng.uniform(2.0, 6.0) * rng.choice([-1.0, 1.0])
        elif u < 0.6:
            rels.append(LE)
            b[i] = A[i] @ x0 + rng.uniform(0.0, 2.0)
            if rng.random() < 0.2:
                b[i] = A[i] @ x0 - rng.uniform(0.5, 4.0)
        else:
            rels.append(GE)
            b[i] = A[i] @ x0 - rng.uniform(0.0, 2.0)
            if rng.random() < 0.2:
                b[i] = A[i] @ x0 + rng.uniform(0.5, 4.0)
    c = rng.uniform(-2.0, 2.0, n)
    problem = LpProblem(c, A, rels, b, lower, upper)
    return (problem, x0) if with_anchor else problem


def random_boxed_milp(rng, max_vars=6, max_rows=6, max_ints=None):
    """A random MILP built on top of :func:`random_boxed_lp`."""
    from gasflow.milp import MilpProblem

    lp, x0 = random_boxed_lp(rng, max_vars=max_vars, max_rows=max_rows,
                             with_anchor=True)
    n = lp.n_vars
    k = int(rng.integers(1, n + 1 if max_ints is None else min(n, max_ints) + 1))
    ints = rng.choice(n, size=k, replace=False)
    lower = lp.lower.copy()
    upper = lp.upper.copy()
    # Integer boxes stay small so enumeration is cheap, and they contain
    # the rounded anchor so instances are not infeasible by construction.
    for j in ints:
        a = int(np.round(x0[j])) - (1 if rng.random() < 0.3 else 0)
        lower[j] = a
        upper[j] = a + (1 if rng.random() < 0.75 else 2)
    return MilpProblem(lp.objective, lp.rows, lp.relations, lp.rhs,
                       lower, upper, integers=ints)


def check_farkas_certificate(problem, certificate, tol=1e-7):
    """Verify an infeasibility certificate from first principles.

    The multiplier vector y must respect the row-sign convention and
    make sup over the box of (A'y)'x fall short of y'b, proving the
    aggregated constraint unsatisfiable.  Returns the positive margin.
    """
    y = certificate["y"]
    for i, rel in enumerate(problem.relations):
        if rel == LE:
            assert y[i] <= tol, f"<= row {i} has dual {y[i]}"
        elif rel == GE:
            assert y[i] >= -tol, f">= row {i} has dual {y[i]}"
    g = problem.rows.T @ y
    sup = 0.0
    for j in range(problem.n_vars):
        if g[j] > tol:
            sup += g[j] * problem.upper[j]
        elif g[j] < -tol:
            sup += g[j] * problem.lower[j]
    margin = float(y @ problem.rhs) - sup
    assert margin > tol, f"certificate margin {margin} not positive"
    return margin


def check_ray_certificate(problem, certificate, tol=1e-6):
    """Verify an unboundedness ray: feasible direction, negative cost."""
    d = certificate["d"]
    assert problem.objective @ d < -tol, "ray does not improve the objective"
    if problem.n_rows:
        ad = problem.rows @ d
        for i, rel in enumerate(problem.relations):
            if rel == LE:
                assert ad[i] <= tol
            elif rel == GE:
                assert ad[i] >= -tol
            else:
                assert abs(ad[i]) <= tol
    for j in range(problem.n_vars):
        if np.isfinite(problem.lower[j]):
            assert d[j] >= -tol
        if np.isfinite(problem.upper[j]):
            assert d[j] <= tol
