"""CART regression forest with exact midpoint split search (numba kernels)."""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from ..errors import DataError

NO_DEPTH_LIMIT = 1 << 30


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 200
    max_depth: int | None = 12
    min_leaf: int = 5
    feature_fraction: float = 1.0 / 3.0
    bootstrap: bool = True


@dataclass
class ForestModel:
    """Trees packed into flat arrays; tree t occupies rows offsets[t]:offsets[t+1]."""

    config: ForestConfig
    n_features: int
    feature: np.ndarray  # -1 marks a leaf
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    leaf_count: np.ndarray
    offsets: np.ndarray

    @property
    def n_trees(self) -> int:
        return len(self.offsets) - 1

    def tree(self, t: int) -> dict[str, np.ndarray]:
        s, e = self.offsets[t], self.offsets[t + 1]
        return {
            "feature": self.feature[s:e],
            "threshold": self.threshold[s:e],
            "left": self.left[s:e],
            "right": self.right[s:e],
            "value": self.value[s:e],
            "leaf_count": self.leaf_count[s:e],
        }

    def predict(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise DataError(f"expected {self.n_features} features, got shape {X.shape}")
        return _predict(X, self.feature, self.threshold, self.left, self.right, self.value, self.offsets)


@numba.njit(cache=True)
def _predict(X, feature, threshold, left, right, value, offsets):
    n = X.shape[0]
    n_trees = offsets.shape[0] - 1
    out = np.empty(n)
    per_tree = np.empty(n_trees)
    for i in range(n):
        for t in range(n_trees):
            base = offsets[t]
            node = 0
            while feature[base + node] >= 0:
                if X[i, feature[base + node]] <= threshold[base + node]:
                    node = left[base + node]
                else:
                    node = right[base + node]
            per_tree[t] = value[base + node]
        # sorted summation: result independent of tree order
        per_tree.sort()
        s = 0.0
        for t in range(n_trees):
            s += per_tree[t]
        out[i] = s / n_trees
    return out


@numba.njit(cache=True)
def _grow_tree(X, y, seed, max_depth, min_leaf, mtry, bootstrap):
    np.random.seed(seed)
    n, p = X.shape
    if bootstrap:
        idx = np.empty(n, dtype=np.int64)
        for k in range(n):
            idx[k] = np.random.randint(0, n)
        idx.sort()
    else:
        idx = np.arange(n)

    cap = 2 * n + 1
    feature = -np.ones(cap, dtype=np.int64)
    threshold = np.zeros(cap)
    left = -np.ones(cap, dtype=np.int64)
    right = -np.ones(cap, dtype=np.int64)
    value = np.zeros(cap)
    leaf_count = np.zeros(cap, dtype=np.int64)

    # stack of (node id, start, end, depth)
    st_node = np.empty(cap, dtype=np.int64)
    st_start = np.empty(cap, dtype=np.int64)
    st_end = np.empty(cap, dtype=np.int64)
    st_depth = np.empty(cap, dtype=np.int64)
    top = 0
    st_node[0] = 0
    st_start[0] = 0
    st_end[0] = n
    st_depth[0] = 0
    top = 1
    n_nodes = 1
    order = np.arange(p)

    while top > 0:
        top -= 1
        node = st_node[top]
        s = st_start[top]
        e = st_end[top]
        depth = st_depth[top]
        m = e - s

        ysum = 0.0
        y0 = y[idx[s]]
        constant = True
        for k in range(s, e):
            yk = y[idx[k]]
            ysum += yk
            if yk != y0:
                constant = False
        mean = ysum / m
        value[node] = y0 if constant else mean
        leaf_count[node] = m
        if constant or depth >= max_depth or m < 2 * min_leaf:
            continue
        parent_sse = 0.0
        for k in range(s, e):
            d = y[idx[k]] - mean
            parent_sse += d * d

        # random feature order; the first mtry are candidates, later ones are
        # tried only while no valid split has been found
        for k in range(p - 1, 0, -1):
            j = np.random.randint(0, k + 1)
            tmp = order[k]
            order[k] = order[j]
            order[j] = tmp

        best_sse = np.inf
        best_f = -1
        best_thr = 0.0
        xs = np.empty(m)
        ys = np.empty(m)
        for fi in range(p):
            if fi >= mtry and best_f >= 0:
                break
            f = order[fi]
            for k in range(m):
                xs[k] = X[idx[s + k], f]
            perm = np.argsort(xs, kind="mergesort")
            for k in range(m):
                ys[k] = y[idx[s + perm[k]]]
            xsorted = xs[perm]
            sum_l = 0.0
            sq_l = 0.0
            sum_t = 0.0
            sq_t = 0.0
            for k in range(m):
                sum_t += ys[k]
                sq_t += ys[k] * ys[k]
            for k in range(m - 1):
                sum_l += ys[k]
                sq_l += ys[k] * ys[k]
                nl = k + 1
                nr = m - nl
                if nl < min_leaf:
                    continue
                if nr < min_leaf:
                    break
                if xsorted[k] == xsorted[k + 1]:
                    continue
                sum_r = sum_t - sum_l
                sq_r = sq_t - sq_l
                sse = (sq_l - sum_l * sum_l / nl) + (sq_r - sum_r * sum_r / nr)
                if sse < best_sse:
                    best_sse = sse
                    best_f = f
                    thr = 0.5 * (xsorted[k] + xsorted[k + 1])
                    if thr >= xsorted[k + 1]:
                        thr = xsorted[k]
                    best_thr = thr
        if best_f < 0 or not (best_sse <= parent_sse + 1e-12 * (1.0 + parent_sse)):
            continue

        # partition idx[s:e] in place, stable
        tmp_idx = idx[s:e].copy()
        lo = s
        for k in range(m):
            if X[tmp_idx[k], best_f] <= best_thr:
                idx[lo] = tmp_idx[k]
                lo += 1
        mid = lo
        for k in range(m):
            if X[tmp_idx[k], best_f] > best_thr:
                idx[lo] = tmp_idx[k]
                lo += 1

        feature[node] = best_f
        threshold[node] = best_thr
        left[node] = n_nodes
        right[node] = n_nodes + 1
        # push right first so left is processed next (depth-first, left to right)
        st_node[top] = n_nodes + 1
        st_start[top] = mid
        st_end[top] = e
        st_depth[top] = depth + 1
        top += 1
        st_node[top] = n_nodes
        st_start[top] = s
        st_end[top] = mid
        st_depth[top] = depth + 1
        top += 1
        n_nodes += 2

    return (
        feature[:n_nodes].copy(),
        threshold[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        value[:n_nodes].copy(),
        leaf_count[:n_nodes].copy(),
    )


def fit_random_forest(X, y, config: ForestConfig | None = None, seed: int = 0) -> ForestModel:
    """Bagged CART regressors; tree t draws from the RNG stream ``seed + t``."""
    config = config or ForestConfig()
    X = np.ascontiguousarray(X, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise DataError(f"incompatible shapes X{X.shape}, y{y.shape}")
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise DataError("non-finite values in forest input")
    n, p = X.shape
    if config.min_leaf < 1 or config.n_trees < 1:
        raise ValueError("min_leaf and n_trees must be positive")
    if n < 2 * config.min_leaf:
        raise DataError(f"need at least {2 * config.min_leaf} rows, got {n}")
    mtry = max(1, min(p, int(round(config.feature_fraction * p))))
    depth = NO_DEPTH_LIMIT if config.max_depth is None else int(config.max_depth)

    parts = [
        _grow_tree(X, y, (seed + t) % (2**32), depth, config.min_leaf, mtry, config.bootstrap)
        for t in range(config.n_trees)
    ]
    offsets = np.zeros(len(parts) + 1, dtype=np.int64)
    offsets[1:] = np.cumsum([len(pt[0]) for pt in parts])
    cat = [np.concatenate([pt[k] for pt in parts]) for k in range(6)]
    return ForestModel(config, p, *cat, offsets)
