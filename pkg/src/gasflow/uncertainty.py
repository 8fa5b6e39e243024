"""Budgeted interval uncertainty for supply cells.

A cell is one (supply arc, period) coordinate.  Supply realizations
live in

    z_c = z0_c + xi+_c * up_c - xi-_c * down_c,   0 <= xi <= 1,

with at most ``budget[arc]`` total deviation weight per arc summed over
its periods.  Budget 0 collapses the set to the nominal point; budget
equal to the horizon length makes it a plain box.  Worst cases of the
robust problem sit at vertices, where each cell either rests at nominal
or deviates fully in one direction.
"""

from dataclasses import dataclass, field
import itertools
from math import comb

import numpy as np

from gasflow.errors import ValidationError


@dataclass
class UncertaintySet:
    cells: list
    nominal: np.ndarray
    up_dev: np.ndarray
    down_dev: np.ndarray
    budget: dict
    clipped: int = 0

    def __post_init__(self):
        n = len(self.cells)
        details = []
        for name, arr in (("nominal", self.nominal), ("up_dev", self.up_dev),
                          ("down_dev", self.down_dev)):
            if np.asarray(arr).shape != (n,):
                details.append(f"{name} must have one entry per cell")
        if not details:
            if np.any(self.nominal < 0):
                details.append("nominal supply must be nonnegative")
            if np.any(self.up_dev < 0) or np.any(self.down_dev < 0):
                details.append("deviations must be nonnegative")
            if np.any(self.nominal - self.down_dev < -1e-9):
                details.append("down deviation exceeds nominal; clip first")
        for arc in self.arcs():
            if arc not in self.budget:
                details.append(f"budget missing for arc '{arc}'")
            elif self.budget[arc] < 0:
                details.append(f"budget negative for arc '{arc}'")
        if details:
            raise ValidationError("invalid uncertainty set", details)

    def arcs(self):
        seen = []
        for arc, _ in self.cells:
            if arc not in seen:
                seen.append(arc)
        return seen

    @property
    def n_cells(self):
        return len(self.cells)

    def cells_of(self, arc):
        return [i for i, (a, _) in enumerate(self.cells) if a == arc]

    def realize(self, xi_plus, xi_minus):
        """Supply vector for given deviation weights in [0, 1]."""
        xp = np.clip(np.asarray(xi_plus, dtype=float), 0.0, 1.0)
        xm = np.clip(np.asarray(xi_minus, dtype=float), 0.0, 1.0)
        return self.nominal + xp * self.up_dev - xm * self.down_dev

    def contains(self, z, tol=1e-7):
        """Membership test, inferring deviation weights from ``z``."""
        z = np.asarray(z, dtype=float)
        dev = z - self.nominal
        xi = np.zeros(self.n_cells)
        up_pos = self.up_dev > 0
        dn_pos = self.down_dev > 0
        xi[(dev > 0) & up_pos] = (dev / np.where(up_pos, self.up_dev, 1.0)
                                  )[(dev > 0) & up_pos]
        xi[(dev < 0) & dn_pos] = (-dev / np.where(dn_pos, self.down_dev, 1.0)
                                  )[(dev < 0) & dn_pos]
        if np.any((dev > tol) & ~up_pos) or np.any((dev < -tol) & ~dn_pos):
            return False
        if np.any(xi > 1 + tol):
            return False
        for arc in self.arcs():
            idx = self.cells_of(arc)
            if float(np.sum(xi[idx])) > self.budget[arc] + tol:
                return False
        return True

    def sample(self, n, rng):
        """Draw ``n`` scenarios inside the set: half vertices, half
        interior points, deterministically from ``rng``."""
        out = np.empty((n, self.n_cells))
        for i in range(n):
            xp = np.zeros(self.n_cells)
            xm = np.zeros(self.n_cells)
            vertex = i % 2 == 0
            for arc in self.arcs():
                idx = np.array(self.cells_of(arc))
                gamma = self.budget[arc]
                if vertex:
                    k = min(int(np.floor(gamma + 1e-9)), idx.size)
                    if k > 0:
                        chosen = rng.choice(idx, size=k, replace=False)
                        signs = rng.random(k) < 0.5
                        xp[chosen[signs]] = 1.0
                        xm[chosen[~signs]] = 1.0
                else:
                    raw = rng.uniform(0.0, 1.0, idx.size)
                    total = float(np.sum(raw))
                    if total > gamma:
                        raw *= 0.0 if gamma == 0 else gamma / total
                    signs = rng.random(idx.size) < 0.5
                    xp[idx[signs]] = raw[signs]
                    xm[idx[~signs]] = raw[~signs]
            out[i] = self.realize(xp, xm)
        return out

    def _arc_options(self, arc):
        """Per-arc deviation choices: up to floor(budget) cells, each
        pushed fully one way, as tuples of (cell index, sign)."""
        idx = self.cells_of(arc)
        k_max = min(int(np.floor(self.budget[arc] + 1e-9)), len(idx))
        options = []
        for k in range(k_max + 1):
            for subset in itertools.combinations(idx, k):
                for signs in itertools.product((1, -1), repeat=k):
                    options.append(tuple(zip(subset, signs)))
        return options

    def n_vertices(self):
        """Number of extreme scenarios, counted without building them."""
        total = 1
        for arc in self.arcs():
            idx = len(self.cells_of(arc))
            k_max = min(int(np.floor(self.budget[arc] + 1e-9)), idx)
            total *= sum(comb(idx, k) * 2 ** k for k in range(k_max + 1))
        return total

    def iter_vertex_indicators(self):
        """Yield (xi_plus, xi_minus) for every extreme scenario.

        The product order varies the last arc fastest, so consecutive
        vertices differ in few cells; callers replaying them against a
        warm-started solver benefit from that locality.  Arrays are
        reused across iterations; copy them to keep one.
        """
        per_arc = [self._arc_options(arc) for arc in self.arcs()]
        xp = np.zeros(self.n_cells)
        xm = np.zeros(self.n_cells)
        for combo in itertools.product(*per_arc):
            xp[:] = 0.0
            xm[:] = 0.0
            for assignment in combo:
                for c, sign in assignment:
                    if sign > 0:
                        xp[c] = 1.0
                    else:
                        xm[c] = 1.0
            yield xp, xm

    def vertices(self, max_count=200_000):
        """All extreme scenarios as one array of supply vectors.

        Intended for small instances; refuses to build more than
        ``max_count`` points.
        """
        if self.n_vertices() > max_count:
            raise ValidationError(
                f"vertex enumeration would produce over {max_count} points")
        return np.array([self.realize(xp, xm)
                         for xp, xm in self.iter_vertex_indicators()])


def from_forecast(cells, quantiles, budget):
    """Build a budgeted set from central interval forecasts.

    Parameters
    ----------
    cells : list of (arc_name, period)
        Canonical cell order, matching the compiled model's.
    quantiles : dict
        Per arc, an array of shape (T, 3) with columns (lower, median,
        upper).
    budget : float or dict
        Deviation budget per arc; a scalar applies to every arc.

    The median becomes the nominal supply; deviations are the interval
    half-widths.  Lower deviations reaching below zero are clipped to
    keep supply physical, and the number of clipped cells is reported on
    the result's ``clipped`` field.
    """
    n = len(cells)
    nominal = np.zeros(n)
    up_dev = np.zeros(n)
    down_dev = np.zeros(n)
    clipped = 0
    details = []
    for i, (arc, t) in enumerate(cells):
        q = quantiles.get(arc)
        if q is None:
            details.append(f"quantiles missing for arc '{arc}'")
            continue
        q = np.asarray(q, dtype=float)
        if q.ndim != 2 or q.shape[1] != 3 or t >= q.shape[0]:
            details.append(f"quantiles for '{arc}' need shape (T, 3) "
                           f"covering period {t}")
            continue
        lo, mid, hi = q[t]
        if not (lo <= mid <= hi):
            details.append(f"quantiles for '{arc}' period {t} are not "
                           f"ordered: {lo}, {mid}, {hi}")
            continue
        nominal[i] = mid
        up_dev[i] = hi - mid
        down = mid - lo
        if down > mid:
            down = mid
            clipped += 1
        down_dev[i] = down
    if details:
        raise ValidationError("cannot build uncertainty set", details)
    arcs = []
    for arc, _ in cells:
        if arc not in arcs:
            arcs.append(arc)
    if isinstance(budget, dict):
        budget_map = {arc: float(budget.get(arc, 0.0)) for arc in arcs}
    else:
        budget_map = {arc: float(budget) for arc in arcs}
    return UncertaintySet(cells=list(cells), nominal=nominal, up_dev=up_dev,
                          down_dev=down_dev, budget=budget_map,
                          clipped=clipped)
