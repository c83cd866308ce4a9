"""Hybrid structure learning: PC skeleton, orientation rules, BIC hill climb."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.special import erfc

from .errors import DegenerateDataError, OrientationConflictError, SampleSizeError
from .graph import Dag, check_tiers, find_cycle
from .tabular import ColumnRole, Dataset, standardize

R_CLAMP = 1.0 - 1e-12


@dataclass(frozen=True)
class CiResult:
    i: int
    j: int
    cond_set: tuple[int, ...]
    partial_corr: float
    statistic: float
    p_value: float
    n: int


def _correlation(values: np.ndarray) -> np.ndarray:
    centred = values - values.mean(axis=0)
    cov = centred.T @ centred / values.shape[0]
    sd = np.sqrt(np.diag(cov))
    if np.any(sd == 0):
        raise DegenerateDataError("constant column in conditional-independence data")
    return cov / np.outer(sd, sd)


class FisherZ:
    """Fisher-z partial-correlation tests over a precomputed correlation matrix."""

    def __init__(self, values: np.ndarray, names: Sequence[str] | None = None):
        self.n = values.shape[0]
        self.corr = _correlation(np.asarray(values, dtype=float))
        self.names = list(names) if names is not None else [str(k) for k in range(values.shape[1])]

    def __call__(self, i: int, j: int, cond_set: Iterable[int] = ()) -> CiResult:
        cond = tuple(sorted(cond_set))
        if i == j or i in cond or j in cond:
            raise ValueError("i, j must differ and lie outside the conditioning set")
        dof = self.n - len(cond) - 3
        if dof <= 0:
            raise SampleSizeError(f"n={self.n} too small for conditioning set of size {len(cond)}")
        a, b = min(i, j), max(i, j)
        if not cond:
            r = self.corr[a, b]
        else:
            idx = [a, b, *cond]
            sub = self.corr[np.ix_(idx, idx)]
            eig = np.linalg.eigvalsh(sub)
            if eig[0] <= 1e-12 * eig[-1]:
                cols = ", ".join(self.names[k] for k in idx)
                raise DegenerateDataError(f"singular correlation submatrix over {cols}")
            prec = np.linalg.inv(sub)
            r = -prec[0, 1] / math.sqrt(prec[0, 0] * prec[1, 1])
        r = float(np.clip(r, -R_CLAMP, R_CLAMP))
        stat = math.sqrt(dof) * math.atanh(r)
        p = float(erfc(abs(stat) / math.sqrt(2.0)))
        return CiResult(a, b, cond, r, stat, min(max(p, 0.0), 1.0), self.n)


def fisher_z_test(data: Dataset | np.ndarray, i: int, j: int, cond_set: Iterable[int] = ()) -> CiResult:
    values = data.values if isinstance(data, Dataset) else np.asarray(data, dtype=float)
    names = data.column_names if isinstance(data, Dataset) else None
    return FisherZ(values, names)(i, j, cond_set)


# --- background knowledge -------------------------------------------------------


@dataclass(frozen=True)
class BackgroundKnowledge:
    """Role tiers: parameter=0, intermediate=1, outcome=2 (None = unconstrained).

    Edges may not point to a strictly lower tier, outcomes have no children,
    and with ``exogenous_parameters`` tier-0 nodes are never joined.
    """

    tiers: tuple[int | None, ...]
    exogenous_parameters: bool = True

    @classmethod
    def from_roles(cls, roles: Sequence[ColumnRole], exogenous_parameters: bool = True):
        tiers = tuple(r.tier if r.tier >= 0 else None for r in roles)
        return cls(tiers, exogenous_parameters)

    @classmethod
    def none(cls, p: int):
        return cls((None,) * p, False)

    def allowed(self, a: int, b: int) -> bool:
        ta, tb = self.tiers[a], self.tiers[b]
        if ta is None or tb is None:
            return True
        if ta == 2 or ta > tb:
            return False
        if self.exogenous_parameters and ta == 0 and tb == 0:
            return False
        return True

    def forced(self, a: int, b: int) -> tuple[int, int] | None:
        """The only admissible direction for pair (a, b), if exactly one is allowed."""
        ab, ba = self.allowed(a, b), self.allowed(b, a)
        if ab and not ba:
            return (a, b)
        if ba and not ab:
            return (b, a)
        return None


# --- skeleton ---------------------------------------------------------------------


@dataclass
class Skeleton:
    p: int
    adjacency: set[frozenset[int]]
    sepsets: dict[frozenset[int], tuple[int, ...]]
    removed: list[CiResult] = field(default_factory=list)

    def adjacent(self, i: int, j: int) -> bool:
        return frozenset((i, j)) in self.adjacency

    def neighbors(self, i: int) -> list[int]:
        return sorted(j for e in self.adjacency if i in e for j in e if j != i)

    def edges(self) -> list[tuple[int, int]]:
        return sorted(tuple(sorted(e)) for e in self.adjacency)


def pc_skeleton(
    data: Dataset,
    alpha: float = 0.01,
    bk: BackgroundKnowledge | None = None,
    max_cond: int = 3,
    test: FisherZ | None = None,
) -> Skeleton:
    """PC edge removal with per-depth batched deletions (order independent).

    Edges are visited in ascending (i, j); conditioning sets are drawn first
    from adj(i) minus j, then from adj(j) minus i, in lexicographic order.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    p = data.col_count
    bk = bk or BackgroundKnowledge.from_roles(data.roles)
    test = test or FisherZ(data.values, data.column_names)
    adjacency = {
        frozenset((i, j))
        for i, j in itertools.combinations(range(p), 2)
        if bk.allowed(i, j) or bk.allowed(j, i)
    }
    sk = Skeleton(p, adjacency, {})
    params = [k for k in range(p) if bk.exogenous_parameters and bk.tiers[k] == 0]
    for depth in range(max_cond + 1):
        nbrs = {i: sk.neighbors(i) for i in range(p)}
        if all(len(v) - 1 < depth for v in nbrs.values()):
            break
        to_remove: list[tuple[frozenset[int], CiResult]] = []
        for i, j in sk.edges():
            # exogenous parameters are roots: conditioning on the other ones
            # never opens a path and blocks their shared sampling coupling
            fixed = [k for k in params if k not in (i, j)] if (i in params) != (j in params) else []
            found = None
            for a, b in ((i, j), (j, i)):
                pool = [k for k in nbrs[a] if k != b and k not in fixed]
                for cond in itertools.combinations(pool, depth):
                    res = test(i, j, (*fixed, *cond))
                    if res.p_value > alpha:
                        found = res
                        break
                if found:
                    break
            if found:
                to_remove.append((frozenset((i, j)), found))
        for edge, res in to_remove:
            sk.adjacency.discard(edge)
            sk.sepsets[edge] = res.cond_set
            sk.removed.append(res)
    return sk


# --- orientation ------------------------------------------------------------------


@dataclass
class Pdag:
    p: int
    directed: set[tuple[int, int]]
    undirected: set[frozenset[int]]
    notes: list[str] = field(default_factory=list)

    def adjacent(self, a: int, b: int) -> bool:
        return (a, b) in self.directed or (b, a) in self.directed or frozenset((a, b)) in self.undirected

    def orient(self, a: int, b: int) -> None:
        self.undirected.discard(frozenset((a, b)))
        self.directed.add((a, b))

    def undirected_edges(self) -> list[tuple[int, int]]:
        return sorted(tuple(sorted(e)) for e in self.undirected)


def _meek(pdag: Pdag, bk: BackgroundKnowledge) -> None:
    p = pdag.p

    def is_dir(a, b):
        return (a, b) in pdag.directed

    def is_und(a, b):
        return frozenset((a, b)) in pdag.undirected

    changed = True
    while changed:
        changed = False
        for a, b in pdag.undirected_edges():
            for x, y in ((a, b), (b, a)):
                if not is_und(x, y) or not bk.allowed(x, y):
                    continue
                others = [k for k in range(p) if k not in (x, y)]
                fire = False
                # R1: k -> x - y, k and y nonadjacent
                if any(is_dir(k, x) and not pdag.adjacent(k, y) for k in others):
                    fire = True
                # R2: x -> k -> y
                elif any(is_dir(x, k) and is_dir(k, y) for k in others):
                    fire = True
                else:
                    # R3: x - k1 -> y <- k2 - x, k1 and k2 nonadjacent
                    ks = [k for k in others if is_und(x, k) and is_dir(k, y)]
                    if any(not pdag.adjacent(k1, k2) for k1, k2 in itertools.combinations(ks, 2)):
                        fire = True
                    else:
                        # R4: x - k1 -> k2 -> y, x adjacent to k2, k1 nonadjacent to y
                        for k1 in others:
                            if not is_und(x, k1) or pdag.adjacent(k1, y):
                                continue
                            if any(
                                is_dir(k1, k2) and is_dir(k2, y) and pdag.adjacent(x, k2)
                                for k2 in others
                                if k2 != k1
                            ):
                                fire = True
                                break
                if fire and _creates_cycle(pdag.directed, x, y):
                    note = f"orientation {x}->{y} skipped: would close a directed cycle"
                    if note not in pdag.notes:
                        pdag.notes.append(note)
                    fire = False
                if fire:
                    pdag.orient(x, y)
                    changed = True
                    break


def orient(skeleton: Skeleton, bk: BackgroundKnowledge, sepsets=None) -> Pdag:
    sepsets = skeleton.sepsets if sepsets is None else sepsets
    p = skeleton.p
    pdag = Pdag(p, set(), set(skeleton.adjacency))

    for i, j in skeleton.edges():
        forced = bk.forced(i, j)
        if forced:
            pdag.orient(*forced)
        elif not bk.allowed(i, j) and not bk.allowed(j, i):
            raise OrientationConflictError(f"edge {i}-{j} admits no direction")

    for i, j in itertools.combinations(range(p), 2):
        # pairs excluded a priori by tiers were never tested and carry no sepset
        if skeleton.adjacent(i, j) or frozenset((i, j)) not in sepsets:
            continue
        sep = set(sepsets[frozenset((i, j))])
        for k in range(p):
            if k in (i, j) or k in sep:
                continue
            if not (skeleton.adjacent(i, k) and skeleton.adjacent(j, k)):
                continue
            if not (bk.allowed(i, k) and bk.allowed(j, k)):
                continue  # tiers rule k out as a collider
            for a in (i, j):
                if (k, a) in pdag.directed:
                    pdag.notes.append(f"v-structure {i}->{k}<-{j} conflicts with {k}->{a}; kept {k}->{a}")
                elif (a, k) not in pdag.directed and _creates_cycle(pdag.directed, a, k):
                    pdag.notes.append(f"v-structure arrow {a}->{k} skipped: would close a directed cycle")
                else:
                    pdag.orient(a, k)

    _meek(pdag, bk)
    cycle = find_cycle(list(range(p)), pdag.directed)
    if cycle:
        raise OrientationConflictError("orientation forces a cycle through " + "->".join(map(str, cycle)))
    return pdag


def consistent_extension(pdag: Pdag) -> set[tuple[int, int]]:
    """Dor-Tarsi extension of a PDAG to a DAG with the same v-structures."""
    directed = set(pdag.directed)
    und = {tuple(sorted(e)) for e in pdag.undirected}
    alive = set(range(pdag.p))
    out = set(directed)

    def adjacent(u):
        return {k for k in alive if k != u and (
            (u, k) in directed or (k, u) in directed or tuple(sorted((u, k))) in und)}

    while alive:
        chosen = None
        for x in sorted(alive):
            if any(a == x for a, _ in directed):
                continue
            adj_x = adjacent(x)
            und_nbrs = [b if a == x else a for a, b in und if x in (a, b)]
            if all(adj_x - {y} <= adjacent(y) for y in und_nbrs):
                chosen = x
                break
        if chosen is None:
            raise OrientationConflictError(
                "PDAG has no consistent extension; undirected edges: "
                + ", ".join(f"{a}-{b}" for a, b in sorted(und))
            )
        for a, b in sorted(und):
            if chosen in (a, b):
                out.add((b if a == chosen else a, chosen))
        und = {e for e in und if chosen not in e}
        directed = {e for e in directed if chosen not in e}
        alive.discard(chosen)
    return out


# --- score-based refinement -------------------------------------------------------


class GaussianBic:
    """Node-decomposed Gaussian BIC from a (population) covariance matrix."""

    def __init__(self, values: np.ndarray):
        self.n = values.shape[0]
        centred = values - values.mean(axis=0)
        self.cov = centred.T @ centred / self.n
        self._cache: dict[tuple[int, frozenset[int]], float] = {}

    def local(self, node: int, parents: Iterable[int]) -> float:
        key = (node, frozenset(parents))
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        pa = sorted(key[1])
        rss_n = self.cov[node, node]
        if pa:
            s_pp = self.cov[np.ix_(pa, pa)]
            s_py = self.cov[pa, node]
            rss_n = rss_n - s_py @ np.linalg.solve(s_pp, s_py)
        rss_n = max(float(rss_n), 1e-300)
        k = len(pa) + 1
        score = -0.5 * self.n * math.log(rss_n) - 0.5 * k * math.log(self.n)
        self._cache[key] = score
        return score

    def total(self, p: int, edges: Iterable[tuple[int, int]]) -> float:
        parents: dict[int, set[int]] = {i: set() for i in range(p)}
        for a, b in edges:
            parents[b].add(a)
        return sum(self.local(i, parents[i]) for i in range(p))


def _creates_cycle(edges: set[tuple[int, int]], a: int, b: int) -> bool:
    """True if adding a->b closes a cycle, i.e. b already reaches a."""
    stack, seen = [b], {b}
    while stack:
        u = stack.pop()
        if u == a:
            return True
        for x, y in edges:
            if x == u and y not in seen:
                seen.add(y)
                stack.append(y)
    return False


@dataclass
class RefineResult:
    edges: set[tuple[int, int]]
    start_score: float
    score: float
    trajectory: list[tuple[str, int, int, float]]


def refine_score(
    data: Dataset,
    pdag: Pdag,
    bk: BackgroundKnowledge,
    max_indegree: int = 6,
    skeleton: Skeleton | None = None,
    scorer: GaussianBic | None = None,
) -> RefineResult:
    """Greedy best-improvement hill climb on BIC, starting from a consistent extension.

    Additions are restricted to pairs adjacent in ``skeleton`` (the PDAG's own
    adjacencies when none is given).
    """
    p = pdag.p
    scorer = scorer or GaussianBic(data.values)
    edges = consistent_extension(pdag)
    for a, b in edges:
        if not bk.allowed(a, b):
            raise OrientationConflictError(f"extension orients {a}->{b} against tiers")
    if skeleton is not None:
        pairs = skeleton.edges()
    else:
        pairs = sorted({tuple(sorted(e)) for e in edges})

    parents = {i: {a for a, b in edges if b == i} for i in range(p)}
    start = scorer.total(p, edges)
    current = start
    trajectory = [("start", -1, -1, start)]
    while True:
        best = None
        for i, j in pairs:
            for a, b in ((i, j), (j, i)):
                if (a, b) in edges:
                    # delete
                    delta = scorer.local(b, parents[b] - {a}) - scorer.local(b, parents[b])
                    cand = ("delete", a, b, delta)
                    if best is None or delta > best[3]:
                        best = cand
                    # reverse
                    if bk.allowed(b, a) and len(parents[a]) < max_indegree:
                        rest = edges - {(a, b)}
                        if not _creates_cycle(rest, b, a):
                            delta = (
                                scorer.local(b, parents[b] - {a}) - scorer.local(b, parents[b])
                                + scorer.local(a, parents[a] | {b}) - scorer.local(a, parents[a])
                            )
                            if best is None or delta > best[3]:
                                best = ("reverse", a, b, delta)
                elif (b, a) not in edges:
                    if bk.allowed(a, b) and len(parents[b]) < max_indegree and not _creates_cycle(edges, a, b):
                        delta = scorer.local(b, parents[b] | {a}) - scorer.local(b, parents[b])
                        if best is None or delta > best[3]:
                            best = ("add", a, b, delta)
        if best is None or best[3] <= 1e-9 * max(1.0, abs(current)):
            break
        kind, a, b, delta = best
        if kind == "add":
            edges.add((a, b))
            parents[b].add(a)
        elif kind == "delete":
            edges.discard((a, b))
            parents[b].discard(a)
        else:
            edges.discard((a, b))
            parents[b].discard(a)
            edges.add((b, a))
            parents[a].add(b)
        current = scorer.total(p, edges)
        trajectory.append((kind, a, b, current))
    return RefineResult(edges, start, current, trajectory)


# --- pipeline ---------------------------------------------------------------------


@dataclass
class DiscoveryConfig:
    alpha: float = 0.01
    max_cond: int = 3
    max_indegree: int = 6


@dataclass
class DiscoveryResult:
    dag: Dag
    skeleton: Skeleton
    pdag: Pdag
    refine: RefineResult
    names: tuple[str, ...]

    def report(self) -> dict:
        names = self.names
        kinds = {}
        for a, b in self.dag.sorted_edges():
            ia, ib = names.index(a), names.index(b)
            was = "directed" if (ia, ib) in self.pdag.directed else "refined"
            kinds[(a, b)] = was
        return {
            "nodes": list(names),
            "edges": [{"from": a, "to": b, "kind": kinds[(a, b)]} for a, b in self.dag.sorted_edges()],
            "removed": [
                {
                    "i": names[r.i],
                    "j": names[r.j],
                    "sepset": [names[k] for k in r.cond_set],
                    "p_value": r.p_value,
                }
                for r in sorted(self.skeleton.removed, key=lambda r: (r.i, r.j))
            ],
            "score_trajectory": [
                {"move": m, "from": names[a] if a >= 0 else None, "to": names[b] if b >= 0 else None, "bic": s}
                for m, a, b, s in self.refine.trajectory
            ],
            "notes": list(self.pdag.notes),
        }


def discover(data: Dataset, config: DiscoveryConfig | None = None) -> DiscoveryResult:
    config = config or DiscoveryConfig()
    std, _ = standardize(data)
    bk = BackgroundKnowledge.from_roles(std.roles)
    test = FisherZ(std.values, std.column_names)
    sk = pc_skeleton(std, config.alpha, bk, config.max_cond, test=test)
    pdag = orient(sk, bk)
    ref = refine_score(std, pdag, bk, config.max_indegree, skeleton=sk)
    names = std.column_names
    dag = Dag(names, [(names[a], names[b]) for a, b in ref.edges], dict(zip(names, std.roles)))
    bad = check_tiers(dag)
    if bad:
        raise OrientationConflictError(f"tier violations in discovered graph: {bad}")
    return DiscoveryResult(dag, sk, pdag, ref, names)
