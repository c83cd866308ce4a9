"""DAG container and the graph queries the effect estimators lean on."""

from __future__ import annotations

import heapq
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .errors import AcyclicityError, RoleError, UnknownNodeError
from .tabular import ColumnRole


@dataclass(frozen=True)
class Dag:
    nodes: tuple[str, ...]
    edges: frozenset[tuple[str, str]]
    roles: Mapping[str, ColumnRole] = field(default_factory=dict, compare=False)

    def __init__(self, nodes: Iterable[str], edges: Iterable[tuple[str, str]] = (), roles=None):
        nodes = tuple(nodes)
        if len(set(nodes)) != len(nodes):
            raise ValueError("duplicate node names")
        edges = frozenset((a, b) for a, b in edges)
        known = set(nodes)
        for a, b in edges:
            if a not in known or b not in known:
                raise UnknownNodeError(f"edge {a}->{b} references an unknown node")
            if a == b:
                raise AcyclicityError(f"self loop on {a}")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "roles", {n: ColumnRole(r) for n, r in (roles or {}).items()})
        par: dict[str, list[str]] = {n: [] for n in nodes}
        chi: dict[str, list[str]] = {n: [] for n in nodes}
        for a, b in edges:
            par[b].append(a)
            chi[a].append(b)
        object.__setattr__(self, "_par", {n: tuple(sorted(v)) for n, v in par.items()})
        object.__setattr__(self, "_chi", {n: tuple(sorted(v)) for n, v in chi.items()})
        cycle = find_cycle(self)
        if cycle:
            raise AcyclicityError("cycle: " + " -> ".join(cycle + [cycle[0]]))

    def parents(self, node: str) -> list[str]:
        return list(self._par[node])

    def children(self, node: str) -> list[str]:
        return list(self._chi[node])

    def has_edge(self, a: str, b: str) -> bool:
        return (a, b) in self.edges

    def role(self, node: str) -> ColumnRole | None:
        return self.roles.get(node)

    def descendants(self, node: str) -> set[str]:
        self._check(node)
        seen: set[str] = set()
        stack = [node]
        while stack:
            for c in self._chi[stack.pop()]:
                if c not in seen:
                    seen.add(c)
                    stack.append(c)
        return seen

    def ancestors(self, node: str) -> set[str]:
        self._check(node)
        seen: set[str] = set()
        stack = [node]
        while stack:
            for p in self._par[stack.pop()]:
                if p not in seen:
                    seen.add(p)
                    stack.append(p)
        return seen

    def without_edges(self, drop: Iterable[tuple[str, str]]) -> "Dag":
        return Dag(self.nodes, self.edges - frozenset(drop), self.roles)

    def sorted_edges(self) -> list[tuple[str, str]]:
        order = {n: i for i, n in enumerate(self.nodes)}
        return sorted(self.edges, key=lambda e: (order[e[0]], order[e[1]]))

    def _check(self, *names: str) -> None:
        for n in names:
            if n not in self.nodes:
                raise UnknownNodeError(f"unknown node '{n}'")


def find_cycle(dag_or_nodes, edges=None) -> list[str]:
    """Return one directed cycle as a node list, or [] when the graph is acyclic."""
    if edges is None:
        nodes, edges = dag_or_nodes.nodes, dag_or_nodes.edges
    else:
        nodes = dag_or_nodes
    succ: dict[str, list[str]] = {n: [] for n in nodes}
    for a, b in edges:
        succ[a].append(b)
    color = {n: 0 for n in nodes}
    for root in nodes:
        if color[root]:
            continue
        path = [root]
        iters = [iter(sorted(succ[root]))]
        color[root] = 1
        while iters:
            nxt = next(iters[-1], None)
            if nxt is None:
                color[path.pop()] = 2
                iters.pop()
            elif color[nxt] == 1:
                return path[path.index(nxt):]
            elif color[nxt] == 0:
                color[nxt] = 1
                path.append(nxt)
                iters.append(iter(sorted(succ[nxt])))
    return []


def topological_order(dag: Dag) -> list[str]:
    """Kahn's algorithm, lexicographically smallest ready node first."""
    indeg = {n: 0 for n in dag.nodes}
    succ: dict[str, list[str]] = {n: [] for n in dag.nodes}
    for a, b in dag.edges:
        indeg[b] += 1
        succ[a].append(b)
    ready = [n for n, d in indeg.items() if d == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        n = heapq.heappop(ready)
        order.append(n)
        for c in succ[n]:
            indeg[c] -= 1
            if indeg[c] == 0:
                heapq.heappush(ready, c)
    if len(order) != len(dag.nodes):
        cycle = find_cycle(dag.nodes, dag.edges)
        raise AcyclicityError("cycle: " + " -> ".join(cycle + cycle[:1]))
    return order


def d_separated(dag: Dag, x: str, y: str, given: Iterable[str] = ()) -> bool:
    """Reachability ("Bayes ball") test for x ⫫ y | given."""
    given = set(given)
    dag._check(x, y, *given)
    if x == y:
        raise ValueError("x and y must differ")
    if x in given or y in given:
        raise ValueError("x and y must not be in the conditioning set")

    # nodes that are in `given` or have a descendant in it: colliders there are open
    opens_collider = set(given)
    for z in given:
        opens_collider |= dag.ancestors(z)

    # state: (node, arrived_from_child) -- True means we came up an edge into node
    visited: set[tuple[str, bool]] = set()
    stack = [(x, True)]
    while stack:
        node, up = stack.pop()
        if (node, up) in visited:
            continue
        visited.add((node, up))
        if node == y:
            return False
        if up and node not in given:
            stack.extend((p, True) for p in dag._par[node])
            stack.extend((c, False) for c in dag._chi[node])
        elif not up:
            if node not in given:
                stack.extend((c, False) for c in dag._chi[node])
            if node in opens_collider:
                stack.extend((p, True) for p in dag._par[node])
    return True


@dataclass
class AdjustmentResult:
    treatment: str
    outcome: str
    canonical: list[str]
    minimal: list[str]
    valid: bool
    report: list[str]

    @property
    def covariates(self) -> list[str]:
        return self.canonical


def satisfies_backdoor(dag: Dag, treatment: str, outcome: str, adjust: Iterable[str]) -> bool:
    adjust = set(adjust)
    if adjust & dag.descendants(treatment):
        return False
    cut = dag.without_edges((treatment, c) for c in dag.children(treatment))
    return d_separated(cut, treatment, outcome, adjust)


def backdoor_adjustment_set(dag: Dag, treatment: str, outcome: str) -> AdjustmentResult:
    """Validate the canonical covariate set and greedily shrink it.

    The canonical candidate is every parameter node other than the treatment
    (every non-descendant when the graph carries no roles). ``canonical`` is
    what the estimators adjust for; ``minimal`` is the greedy reduction kept
    for reporting.
    """
    dag._check(treatment, outcome)
    if treatment == outcome:
        raise ValueError("treatment and outcome must differ")
    if outcome in dag.ancestors(treatment):
        raise RoleError(f"outcome '{outcome}' is an ancestor of treatment '{treatment}'")

    desc = dag.descendants(treatment)
    if dag.roles:
        candidate = [n for n in dag.nodes if dag.role(n) is ColumnRole.PARAMETER and n != treatment]
    else:
        candidate = [n for n in dag.nodes if n not in desc and n not in (treatment, outcome)]
    candidate = sorted(candidate)

    report = []
    bad = sorted(set(candidate) & desc)
    if bad:
        report.append(f"canonical set contains descendants of {treatment}: {', '.join(bad)}")
    valid = satisfies_backdoor(dag, treatment, outcome, candidate)
    if valid:
        report.append("criterion satisfied")
    else:
        candidate = dag.parents(treatment)
        valid = satisfies_backdoor(dag, treatment, outcome, candidate)
        report.append(
            "canonical set fails the backdoor criterion; fell back to parents of treatment"
            + ("" if valid else " (no valid set found)")
        )

    minimal = list(candidate)
    if valid:
        for node in list(candidate):
            trial = [m for m in minimal if m != node]
            if satisfies_backdoor(dag, treatment, outcome, trial):
                minimal = trial
    return AdjustmentResult(treatment, outcome, candidate, minimal, valid, report)


# --- DOT ------------------------------------------------------------------------

_SHAPES = {
    ColumnRole.PARAMETER: "shape=box",
    ColumnRole.INTERMEDIATE: "shape=ellipse",
    ColumnRole.OUTCOME: "shape=ellipse, peripheries=2",
}
_IDENT = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


def _q(name: str) -> str:
    if _IDENT.match(name):
        return name
    return '"' + name.replace("\\", "\\\\").replace('"', '\\"') + '"'


def to_dot(dag: Dag, name: str = "causal") -> str:
    lines = [f"digraph {_q(name)} {{"]
    for n in dag.nodes:
        style = _SHAPES.get(dag.role(n), "shape=ellipse")
        lines.append(f"  {_q(n)} [{style}];")
    for a, b in dag.sorted_edges():
        lines.append(f"  {_q(a)} -> {_q(b)};")
    lines.append("}")
    return "\n".join(lines) + "\n"


_EDGE_LINE = re.compile(r'^\s*("(?:[^"\\]|\\.)*"|\w+)\s*->\s*("(?:[^"\\]|\\.)*"|\w+)\s*;\s*$')


def parse_dot_edges(text: str) -> list[tuple[str, str]]:
    def unq(tok: str) -> str:
        if tok.startswith('"'):
            return re.sub(r"\\(.)", r"\1", tok[1:-1])
        return tok

    out = []
    for line in text.splitlines():
        m = _EDGE_LINE.match(line)
        if m:
            out.append((unq(m.group(1)), unq(m.group(2))))
    return out


def check_tiers(dag: Dag) -> list[tuple[str, str]]:
    """Edges that violate role tiers (empty list when the graph is consistent)."""
    bad = []
    for a, b in dag.edges:
        ra, rb = dag.role(a), dag.role(b)
        if ra is None or rb is None:
            continue
        if ra is ColumnRole.OUTCOME or ra.tier > rb.tier:
            bad.append((a, b))
        elif ra is ColumnRole.PARAMETER and rb is ColumnRole.PARAMETER:
            bad.append((a, b))
    return sorted(bad)
