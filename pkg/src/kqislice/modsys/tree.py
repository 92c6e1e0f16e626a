"""CART regression tree grown by variance reduction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

LEAF = -1
_TIE_RTOL = 1e-12


def best_split(x: np.ndarray, y: np.ndarray, min_leaf: int) -> tuple[int, float, float] | None:
    """Exhaustive search for the split minimizing the children's summed squared error.

    Candidate thresholds are midpoints between consecutive distinct sorted
    values of each feature. Returns ``(feature, threshold, sse)`` or None when
    no split leaves ``min_leaf`` rows on both sides. Ties go to the lower
    feature index, then the lower threshold.
    """
    n, d = x.shape
    if n < 2 * min_leaf:
        return None
    yc = y - y.mean()
    # SSEs equal in exact arithmetic can differ by rounding; treat them as ties.
    tol = _TIE_RTOL * max(float(np.dot(yc, yc)), 1.0)
    best: tuple[int, float, float] | None = None
    pos = np.arange(min_leaf - 1, n - min_leaf)
    n_left = pos + 1.0
    n_right = n - n_left
    for j in range(d):
        order = np.argsort(x[:, j], kind="stable")
        xs = x[order, j]
        ys = yc[order]
        valid = xs[pos] < xs[pos + 1]
        if not valid.any():
            continue
        csum = np.cumsum(ys)
        csq = np.cumsum(ys * ys)
        s_left = csum[pos]
        s_right = csum[-1] - s_left
        q_left = csq[pos]
        q_right = csq[-1] - q_left
        sse = (q_left - s_left**2 / n_left) + (q_right - s_right**2 / n_right)
        sse = np.where(valid, sse, np.inf)
        i = int(np.flatnonzero(sse <= sse.min() + tol)[0])
        if best is None or sse[i] < best[2] - tol:
            p = pos[i]
            thr = 0.5 * (xs[p] + xs[p + 1])
            if thr >= xs[p + 1]:  # adjacent floats: the midpoint rounds up
                thr = xs[p]
            best = (j, float(thr), float(sse[i]))
    return best


@dataclass
class RegressionTree:
    """Array-backed binary tree; ``feature[i] == LEAF`` marks a leaf."""

    feature: list[int] = field(default_factory=list)
    threshold: list[float] = field(default_factory=list)
    left: list[int] = field(default_factory=list)
    right: list[int] = field(default_factory=list)
    value: list[float] = field(default_factory=list)

    @classmethod
    def fit(
        cls, x: np.ndarray, y: np.ndarray, max_depth: int | None = 8, min_leaf: int = 5
    ) -> "RegressionTree":
        if min_leaf < 1:
            raise ValueError("min_leaf must be >= 1")
        if max_depth is not None and max_depth < 0:
            raise ValueError("max_depth must be >= 0 or None")
        tree = cls()
        root = tree._new_node(float(np.mean(y)))
        stack = [(root, np.arange(len(y)), 0)]
        while stack:
            node, idx, depth = stack.pop()
            ys = y[idx]
            if (max_depth is not None and depth >= max_depth) or np.ptp(ys) == 0.0:
                continue
            split = best_split(x[idx], ys, min_leaf)
            if split is None:
                continue
            j, thr, sse = split
            parent_sse = float(np.sum((ys - ys.mean()) ** 2))
            if not sse < parent_sse:
                continue
            go_left = x[idx, j] <= thr
            li, ri = idx[go_left], idx[~go_left]
            tree.feature[node] = j
            tree.threshold[node] = float(thr)
            tree.left[node] = tree._new_node(float(np.mean(y[li])))
            tree.right[node] = tree._new_node(float(np.mean(y[ri])))
            stack.append((tree.right[node], ri, depth + 1))
            stack.append((tree.left[node], li, depth + 1))
        return tree

    def _new_node(self, value: float) -> int:
        self.feature.append(LEAF)
        self.threshold.append(0.0)
        self.left.append(LEAF)
        self.right.append(LEAF)
        self.value.append(value)
        return len(self.value) - 1

    def leaf_index(self, x) -> int:
        node = 0
        feature, threshold, left, right = self.feature, self.threshold, self.left, self.right
        while feature[node] != LEAF:
            node = left[node] if x[feature[node]] <= threshold[node] else right[node]
        return node

    def predict_one(self, x) -> float:
        return self.value[self.leaf_index(x)]

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.array([self.predict_one(row) for row in x.tolist()])

    @property
    def n_leaves(self) -> int:
        return sum(1 for f in self.feature if f == LEAF)

    def depth(self) -> int:
        deepest = 0
        stack = [(0, 0)]
        while stack:
            node, d = stack.pop()
            if self.feature[node] == LEAF:
                deepest = max(deepest, d)
            else:
                stack.extend([(self.left[node], d + 1), (self.right[node], d + 1)])
        return deepest

    def to_dict(self) -> dict:
        return {
            "feature": list(self.feature),
            "threshold": list(self.threshold),
            "left": list(self.left),
            "right": list(self.right),
            "value": list(self.value),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RegressionTree":
        return cls(
            [int(v) for v in d["feature"]],
            [float(v) for v in d["threshold"]],
            [int(v) for v in d["left"]],
            [int(v) for v in d["right"]],
            [float(v) for v in d["value"]],
        )
