"""Shared synthetic data for the test suite."""

import itertools

import numpy as np

from ampcausal.tabular import ColumnRole, dataset_from_columns


def confounded_linear(n=20_000, seed=3, theta=2.0):
    """X ~ N(0,1), T = 1 + 0.8X + N(0, 0.3), Y = theta*T + 3X + N(0, 0.1)."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal(n)
    T = 1.0 + 0.8 * X + rng.normal(0.0, 0.3, n)
    Y = theta * T + 3.0 * X + rng.normal(0.0, 0.1, n)
    return dataset_from_columns(
        {"T": T, "X": X, "Y": Y}, {"T": "parameter", "X": "parameter", "Y": "outcome"}
    )


def random_tiered_scm(seed, n=20_000):
    """Random tiered linear-Gaussian SCM. Returns (dataset, true edge set by name).

    Parameters are independent roots, intermediates are ordered among
    themselves, and a single outcome closes the graph.
    """
    rng = np.random.default_rng(seed)
    size = int(rng.integers(6, 10))
    n_par = int(rng.integers(2, size - 2))
    n_mid = size - n_par - 1
    names = [f"P{k}" for k in range(n_par)] + [f"M{k}" for k in range(n_mid)] + ["Y"]
    roles = {nm: ColumnRole.PARAMETER for nm in names[:n_par]}
    roles |= {nm: ColumnRole.INTERMEDIATE for nm in names[n_par:-1]}
    roles["Y"] = ColumnRole.OUTCOME

    edges = set()
    for b in range(n_par, size):
        for a in range(b):
            if rng.random() < 0.35:
                edges.add((a, b))
        if not any(e[1] == b for e in edges):
            edges.add((int(rng.integers(0, b)), b))

    cols = np.zeros((n, size))
    for b in range(size):
        parents = sorted(a for a, c in edges if c == b)
        x = rng.standard_normal(n)
        for a in parents:
            coef = rng.uniform(0.5, 1.2) * rng.choice([-1.0, 1.0])
            x = x + coef * cols[:, a]
        cols[:, b] = x
    data = dataset_from_columns({nm: cols[:, k] for k, nm in enumerate(names)}, roles)
    return data, {(names[a], names[b]) for a, b in edges}


def shd(true_edges, found_edges):
    """Structural Hamming distance: missing, extra and reversed edges each count 1."""
    true_adj = {frozenset(e) for e in true_edges}
    found_adj = {frozenset(e) for e in found_edges}
    dist = len(true_adj ^ found_adj)
    for a, b in true_edges:
        if (b, a) in found_edges:
            dist += 1
    return dist


def all_dags(p):
    """Every labelled DAG on p nodes as a frozenset of (a, b) index pairs."""
    pairs = [(a, b) for a in range(p) for b in range(a + 1, p)]
    for states in itertools.product((0, 1, 2), repeat=len(pairs)):
        edges = set()
        for (a, b), s in zip(pairs, states):
            if s == 1:
                edges.add((a, b))
            elif s == 2:
                edges.add((b, a))
        if _acyclic(p, edges):
            yield frozenset(edges)


def _acyclic(p, edges):
    indeg = [0] * p
    for _, b in edges:
        indeg[b] += 1
    ready = [k for k in range(p) if indeg[k] == 0]
    seen = 0
    while ready:
        u = ready.pop()
        seen += 1
        for a, b in edges:
            if a == u:
                indeg[b] -= 1
                if indeg[b] == 0:
                    ready.append(b)
    return seen == p


def dsep_by_paths(p, edges):
    """Path-enumeration d-separation for every (x, y, Z) at once.

    Returns {(x, y): bool array over Z bitmasks}, True meaning separated.
    A path is active given Z when none of its non-colliders is in Z and every
    collider is in Z or has a descendant in Z.
    """
    nbr = {k: set() for k in range(p)}
    for a, b in edges:
        nbr[a].add(b)
        nbr[b].add(a)
    desc = []
    for k in range(p):
        mask, stack = 1 << k, [k]
        while stack:
            u = stack.pop()
            for a, b in edges:
                if a == u and not mask >> b & 1:
                    mask |= 1 << b
                    stack.append(b)
        desc.append(mask)
    zs = np.arange(1 << p)
    out = {}
    for x in range(p):
        for y in range(p):
            if x == y:
                continue
            active = np.zeros(1 << p, dtype=bool)
            stack = [(x, (x,))]
            while stack:
                u, path = stack.pop()
                if u == y:
                    ok = np.ones(1 << p, dtype=bool)
                    for k in range(1, len(path) - 1):
                        a, m, b = path[k - 1], path[k], path[k + 1]
                        if (a, m) in edges and (b, m) in edges:
                            ok &= (zs & desc[m]) != 0
                        else:
                            ok &= (zs >> m & 1) == 0
                    active |= ok
                    continue
                for v in nbr[u]:
                    if v not in path:
                        stack.append((v, path + (v,)))
            out[(x, y)] = ~active
    return out
