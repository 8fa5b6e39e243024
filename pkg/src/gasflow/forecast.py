"""Interval forecasting of supply series by quantile gradient boosting.

Each horizon step gets its own direct model (no recursive feeding of
predictions), and each quantile level its own ensemble, all trained on
lag features of the raw series.  Trees are grown level-wise by greedy
variance-reduction splits of the pinball pseudo-residuals over binned
feature values; leaf values are the level-quantile of the in-leaf
residuals, which is the exact per-leaf minimizer of pinball loss, so
every boosting round can only decrease training loss (the recorded
``loss_trace`` is non-increasing).

Everything is deterministic: no subsampling, stable sorts, first-hit
tie-breaking.
"""

from dataclasses import dataclass, field

import numpy as np

from gasflow.errors import ValidationError


def make_supervised(history, n_lags, n_ahead):
    """Lag-matrix view of a series for direct multi-step training.

    Row ``i`` holds the ``n_lags`` most recent values before some anchor
    (most recent first) and targets the next ``n_ahead`` values.  A
    series of length N yields ``N - n_lags - n_ahead + 1`` rows.
    """
    y = np.asarray(history, dtype=float).ravel()
    n = y.size
    rows = n - n_lags - n_ahead + 1
    if n_lags < 1 or n_ahead < 1:
        raise ValidationError("n_lags and n_ahead must be positive")
    if rows < 1:
        raise ValidationError(
            f"series of length {n} too short for {n_lags} lags and "
            f"{n_ahead} steps ahead; need at least {n_lags + n_ahead}")
    X = np.empty((rows, n_lags))
    Y = np.empty((rows, n_ahead))
    for i in range(rows):
        anchor = n_lags + i
        X[i] = y[anchor - 1::-1][:n_lags]
        Y[i] = y[anchor:anchor + n_ahead]
    return X, Y


def pinball_loss(y, pred, level):
    """Mean pinball (quantile) loss at the given level."""
    e = np.asarray(y, dtype=float) - np.asarray(pred, dtype=float)
    return float(np.mean(np.maximum(level * e, (level - 1.0) * e)))


@dataclass
class _Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def predict(self, X):
        idx = np.zeros(X.shape[0], dtype=int)
        # depth is tiny; route all rows level by level
        for _ in range(64):
            feat = self.feature[idx]
            live = feat >= 0
            if not np.any(live):
                break
            rows = np.flatnonzero(live)
            f = feat[rows]
            go_left = X[rows, f] <= self.threshold[idx[rows]]
            idx[rows] = np.where(go_left, self.left[idx[rows]],
                                 self.right[idx[rows]])
        return self.value[idx]


_MAX_BINS = 64


def _bin_features(X):
    """Per-feature cut points and integer codes for histogram splits.

    Columns with few distinct values keep every midpoint as a candidate
    cut (exact splits); wide columns fall back to a quantile grid of at
    most ``_MAX_BINS`` bins.  ``code <= b`` is equivalent to
    ``x <= cuts[b]``, which is the predicate trees store.
    """
    n, p = X.shape
    cuts = []
    codes = np.empty((n, p), dtype=np.int64)
    for f in range(p):
        col = X[:, f]
        uq = np.unique(col)
        if uq.size <= _MAX_BINS:
            c = 0.5 * (uq[:-1] + uq[1:])
        else:
            qs = np.quantile(col, np.linspace(0.0, 1.0, _MAX_BINS + 1)[1:-1])
            c = np.unique(qs)
        cuts.append(c)
        codes[:, f] = np.searchsorted(c, col, side="left")
    return cuts, codes


def _grow_tree(codes, cuts, grad, resid, level, max_depth, min_leaf):
    """Level-wise histogram CART on ``grad`` with quantile leaf values.

    Splits minimize the summed child variance of the gradient.  Returns
    the tree and the leaf assignment of every training row, which lets
    the boosting loop update train predictions without a predict pass.
    """
    n, p = codes.shape
    nb = _MAX_BINS
    min_leaf = max(1, int(min_leaf))
    feature = [-1]
    threshold = [0.0]
    left = [-1]
    right = [-1]
    value = [0.0]

    node_of_row = np.zeros(n, dtype=np.int64)
    live_nodes = [0]
    for _ in range(max_depth):
        if not live_nodes:
            break
        live_ids = np.array(live_nodes)
        local = np.full(len(feature), -1, dtype=np.int64)
        local[live_ids] = np.arange(live_ids.size)
        row_local = local[node_of_row]
        live_rows = row_local >= 0
        rows = np.flatnonzero(live_rows)
        L = live_ids.size
        key = ((row_local[rows, None] * p + np.arange(p)) * nb
               + codes[rows])
        flat = key.ravel()
        size = L * p * nb
        wrep = np.repeat(grad[rows], p)
        cnt = np.bincount(flat, minlength=size).reshape(L, p, nb)
        sg = np.bincount(flat, weights=wrep, minlength=size).reshape(L, p, nb)
        sq = np.bincount(flat, weights=wrep * wrep,
                         minlength=size).reshape(L, p, nb)
        c_cnt = np.cumsum(cnt, axis=2)
        c_sg = np.cumsum(sg, axis=2)
        c_sq = np.cumsum(sq, axis=2)
        tot_cnt = c_cnt[:, :, -1:]
        tot_sg = c_sg[:, :, -1:]
        tot_sq = c_sq[:, :, -1:]
        ln = c_cnt
        rn = tot_cnt - c_cnt
        with np.errstate(invalid="ignore", divide="ignore"):
            ss = (c_sq - c_sg ** 2 / ln) + ((tot_sq - c_sq)
                                            - (tot_sg - c_sg) ** 2 / rn)
        valid = (ln >= min_leaf) & (rn >= min_leaf)
        ss = np.where(valid, ss, np.inf)
        best_flat = np.argmin(ss.reshape(L, -1), axis=1)
        best_score = ss.reshape(L, -1)[np.arange(L), best_flat]
        next_live = []
        split_f = np.full(L, -1, dtype=np.int64)
        split_b = np.zeros(L, dtype=np.int64)
        for k in range(L):
            if not np.isfinite(best_score[k]):
                continue
            f, b = divmod(int(best_flat[k]), nb)
            if b >= len(cuts[f]):
                continue  # boundary after the last bin never splits
            node = int(live_ids[k])
            split_f[k] = f
            split_b[k] = b
            feature[node] = f
            threshold[node] = float(cuts[f][b])
            left[node] = len(feature)
            right[node] = len(feature) + 1
            for _ in range(2):
                feature.append(-1)
                threshold.append(0.0)
                left.append(-1)
                right.append(-1)
                value.append(0.0)
            next_live.extend((left[node], right[node]))
        did_split = split_f[row_local[rows]] >= 0
        srows = rows[did_split]
        loc = row_local[srows]
        go_left = codes[srows, split_f[loc]] <= split_b[loc]
        parents = node_of_row[srows]
        node_of_row[srows] = np.where(
            go_left, np.array(left)[parents], np.array(right)[parents])
        live_nodes = next_live

    leaf_ids = np.unique(node_of_row)
    vals = np.array(value)
    for leaf in leaf_ids:
        vals[leaf] = float(np.quantile(resid[node_of_row == leaf], level))
    tree = _Tree(np.array(feature), np.array(threshold), np.array(left),
                 np.array(right), vals)
    return tree, node_of_row


@dataclass
class GbdtModel:
    """One boosted quantile ensemble: F = init + lr * sum(trees)."""
    level: float
    init: float
    learning_rate: float
    n_features: int
    trees: list
    loss_trace: np.ndarray

    def predict(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValidationError(
                f"expected rows of {self.n_features} lag values, got "
                f"shape {X.shape}")
        out = np.full(X.shape[0], self.init)
        for tree in self.trees:
            out += self.learning_rate * tree.predict(X)
        return out


def fit_quantile_gbdt(X, y, level, n_rounds=200, max_depth=2,
                      learning_rate=0.05, min_leaf=50):
    """Boost regression trees under pinball loss at ``level``.

    The model is initialized at the empirical level-quantile of ``y``
    (with zero rounds the prediction is exactly that constant).  The
    returned ``loss_trace`` has ``n_rounds + 1`` entries starting at the
    init loss; it is non-increasing by construction of the leaf values.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim != 2 or X.shape[0] != y.size:
        raise ValidationError("X and y disagree on the number of rows")
    if not 0.0 < level < 1.0:
        raise ValidationError(f"quantile level {level} outside (0, 1)")
    if not 0.0 < learning_rate <= 1.0:
        raise ValidationError("learning_rate must be in (0, 1]")
    init = float(np.quantile(y, level))
    pred = np.full(y.size, init)
    trees = []
    trace = [pinball_loss(y, pred, level)]
    if n_rounds > 0:
        cuts, codes = _bin_features(X)
    for _ in range(n_rounds):
        resid = y - pred
        grad = np.where(resid > 0, level, level - 1.0)
        tree, leaf_of_row = _grow_tree(codes, cuts, grad, resid, level,
                                       max_depth, min_leaf)
        pred += learning_rate * tree.value[leaf_of_row]
        trees.append(tree)
        trace.append(pinball_loss(y, pred, level))
    return GbdtModel(level=level, init=init, learning_rate=learning_rate,
                     n_features=X.shape[1], trees=trees,
                     loss_trace=np.array(trace))


@dataclass
class IntervalForecaster:
    """Direct multi-step interval forecaster for one series.

    Trains one :class:`GbdtModel` per (horizon step, quantile level).
    ``levels`` must be ordered (lower, median, upper); use
    ``levels_for_alpha`` for central intervals of nominal coverage
    1 - alpha.
    """
    levels: tuple = (0.025, 0.5, 0.975)
    n_lags: int = 20
    n_ahead: int = 8
    n_rounds: int = 200
    max_depth: int = 2
    learning_rate: float = 0.05
    min_leaf: int = 50
    models: dict = field(default_factory=dict)
    crossings_fixed: int = 0

    def fit(self, history):
        if len(self.levels) != 3 or not (self.levels[0] < self.levels[1]
                                         < self.levels[2]):
            raise ValidationError("levels must be an ordered triple")
        X, Y = make_supervised(history, self.n_lags, self.n_ahead)
        for step in range(self.n_ahead):
            for level in self.levels:
                self.models[(step, level)] = fit_quantile_gbdt(
                    X, Y[:, step], level, n_rounds=self.n_rounds,
                    max_depth=self.max_depth,
                    learning_rate=self.learning_rate,
                    min_leaf=self.min_leaf)
        return self

    def predict_raw(self, X):
        """Per-model predictions, shape (rows, n_ahead, 3), no fixing."""
        X = np.asarray(X, dtype=float)
        out = np.empty((X.shape[0], self.n_ahead, 3))
        for step in range(self.n_ahead):
            for k, level in enumerate(self.levels):
                out[:, step, k] = self.models[(step, level)].predict(X)
        return out

    def predict_intervals(self, X):
        """Monotone-rearranged intervals; counts quantile crossings fixed.

        Independently trained quantile models can cross; sorting the
        three values per (row, step) restores a valid interval.  The
        number of crossings repaired accumulates on ``crossings_fixed``.
        """
        raw = self.predict_raw(X)
        fixed = np.sort(raw, axis=2)
        self.crossings_fixed += int(np.sum(np.any(raw != fixed, axis=2)))
        return fixed

    def forecast(self, history):
        """Intervals for the ``n_ahead`` steps after the series end."""
        y = np.asarray(history, dtype=float).ravel()
        if y.size < self.n_lags:
            raise ValidationError(
                f"need at least {self.n_lags} points, got {y.size}")
        X = y[-1:-self.n_lags - 1:-1][None, :]
        return self.predict_intervals(X)[0]


def levels_for_alpha(alpha):
    """Central interval levels (alpha/2, 0.5, 1 - alpha/2)."""
    if not 0.0 < alpha < 1.0:
        raise ValidationError(f"alpha {alpha} outside (0, 1)")
    return (alpha / 2.0, 0.5, 1.0 - alpha / 2.0)


def model_to_dict(forecaster):
    """Plain-data dump of a fitted forecaster, JSON-ready.

    Trees flatten to parallel node lists; model keys become
    ``"step/level"`` strings because JSON objects cannot key on tuples.
    """
    doc = {
        "levels": list(forecaster.levels),
        "n_lags": forecaster.n_lags,
        "n_ahead": forecaster.n_ahead,
        "n_rounds": forecaster.n_rounds,
        "max_depth": forecaster.max_depth,
        "learning_rate": forecaster.learning_rate,
        "min_leaf": forecaster.min_leaf,
        "crossings_fixed": forecaster.crossings_fixed,
        "models": {},
    }
    for (step, level), m in forecaster.models.items():
        doc["models"][f"{step}/{level!r}"] = {
            "level": m.level,
            "init": m.init,
            "learning_rate": m.learning_rate,
            "n_features": m.n_features,
            "loss_trace": m.loss_trace.tolist(),
            "trees": [{
                "feature": t.feature.tolist(),
                "threshold": t.threshold.tolist(),
                "left": t.left.tolist(),
                "right": t.right.tolist(),
                "value": t.value.tolist(),
            } for t in m.trees],
        }
    return doc


def model_from_dict(doc):
    """Rebuild an :class:`IntervalForecaster` from :func:`model_to_dict`.

    The round trip is exact: every threshold and leaf value is stored at
    full precision, so predictions agree bit for bit.
    """
    try:
        fc = IntervalForecaster(
            levels=tuple(doc["levels"]),
            n_lags=int(doc["n_lags"]),
            n_ahead=int(doc["n_ahead"]),
            n_rounds=int(doc["n_rounds"]),
            max_depth=int(doc["max_depth"]),
            learning_rate=float(doc["learning_rate"]),
            min_leaf=int(doc["min_leaf"]),
            crossings_fixed=int(doc.get("crossings_fixed", 0)),
        )
        for key, entry in doc["models"].items():
            step_s, level_s = key.split("/", 1)
            trees = [_Tree(np.asarray(t["feature"], dtype=int),
                           np.asarray(t["threshold"], dtype=float),
                           np.asarray(t["left"], dtype=int),
                           np.asarray(t["right"], dtype=int),
                           np.asarray(t["value"], dtype=float))
                     for t in entry["trees"]]
            fc.models[(int(step_s), float(level_s))] = GbdtModel(
                level=float(entry["level"]),
                init=float(entry["init"]),
                learning_rate=float(entry["learning_rate"]),
                n_features=int(entry["n_features"]),
                trees=trees,
                loss_trace=np.asarray(entry["loss_trace"], dtype=float))
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"malformed forecaster document: {exc}")
    return fc


def mape(actual, predicted):
    """Mean absolute percentage error as a fraction (0.05 means 5%)."""
    a = np.asarray(actual, dtype=float)
    p = np.asarray(predicted, dtype=float)
    if a.shape != p.shape:
        raise ValidationError("actual and predicted shapes differ")
    if np.any(a == 0):
        raise ValidationError("MAPE undefined for zero actuals")
    return float(np.mean(np.abs(p - a) / np.abs(a)))


def picp(actual, lower, upper):
    """Prediction interval coverage: fraction strictly inside (lo, hi)."""
    a = np.asarray(actual, dtype=float)
    lo = np.asarray(lower, dtype=float)
    hi = np.asarray(upper, dtype=float)
    if not (a.shape == lo.shape == hi.shape):
        raise ValidationError("coverage inputs must share a shape")
    return float(np.mean((a > lo) & (a < hi)))
