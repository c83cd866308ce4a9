"""Structural causal models standing in for transistor-level simulation.

Parameters (design knobs) are drawn by a ``SamplingPolicy`` in log space so
that every knob stays strictly positive; a shared latent "design intent"
draw couples them, which is what confounds naive regressions. Random draws
come from fixed 1024-row blocks, each with its own seed stream, so any row
is reproducible regardless of ``n``, intervention, or how work is split.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .errors import UnknownNodeError
from .estimates import AteEstimate, TreatmentSpec
from .graph import Dag, topological_order
from .tabular import ColumnRole, Dataset

BLOCK = 1024

StructuralFn = Callable[[Mapping[str, np.ndarray], np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Node:
    name: str
    role: ColumnRole
    parents: tuple[str, ...] = ()
    func: StructuralFn | None = None
    noise_scale: float = 0.0


@dataclass(frozen=True)
class ScmModel:
    name: str
    nodes: tuple[Node, ...]
    nominal: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        names = [nd.name for nd in self.nodes]
        if len(set(names)) != len(names):
            raise ValueError("duplicate node names")
        for nd in self.nodes:
            if nd.noise_scale < 0:
                raise ValueError(f"negative noise scale on {nd.name}")
            if nd.role is ColumnRole.PARAMETER:
                if nd.parents or nd.func is not None:
                    raise ValueError(f"parameter {nd.name} must be parentless and policy driven")
            elif nd.func is None:
                raise ValueError(f"node {nd.name} needs a structural function")
        dag = self.graph()  # validates acyclicity and parent names
        for nd in self.nodes:
            if nd.role is ColumnRole.OUTCOME and dag.children(nd.name):
                raise ValueError(f"outcome {nd.name} may not have children")
        object.__setattr__(self, "_order", tuple(topological_order(dag)))

    @property
    def node_names(self) -> list[str]:
        return [nd.name for nd in self.nodes]

    @property
    def parameters(self) -> list[str]:
        return [nd.name for nd in self.nodes if nd.role is ColumnRole.PARAMETER]

    @property
    def outcomes(self) -> list[str]:
        return [nd.name for nd in self.nodes if nd.role is ColumnRole.OUTCOME]

    @property
    def topological(self) -> tuple[str, ...]:
        return self._order

    def node(self, name: str) -> Node:
        for nd in self.nodes:
            if nd.name == name:
                return nd
        raise UnknownNodeError(f"model {self.name} has no node '{name}'")

    def graph(self) -> Dag:
        edges = [(p, nd.name) for nd in self.nodes for p in nd.parents]
        return Dag(self.node_names, edges, {nd.name: nd.role for nd in self.nodes})


@dataclass(frozen=True)
class SamplingPolicy:
    """Log-uniform knob sweep with a shared latent coupling of strength ``rho``.

    log(x) = log(nominal) + spread * (rho*(2u-1) + (1-rho)*(2v-1)),
    u shared across knobs, v per knob, both Uniform(0, 1).
    """

    nominal: Mapping[str, float]
    spread: Mapping[str, float]
    rho: float = 0.9

    def __post_init__(self):
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError("rho must lie in [0, 1]")
        for k, v in self.nominal.items():
            if not v > 0:
                raise ValueError(f"nominal value of {k} must be positive")

    @classmethod
    def default(cls, model: ScmModel, spread: float = 0.25, rho: float = 0.9) -> "SamplingPolicy":
        return cls(
            {p: model.nominal[p] for p in model.parameters},
            {p: spread for p in model.parameters},
            rho,
        )


@dataclass(frozen=True)
class Intervention:
    assignments: Mapping[str, float]


def _check_intervention(model: ScmModel, do: Intervention | Mapping[str, float] | None) -> dict[str, float]:
    if do is None:
        return {}
    assign = dict(do.assignments if isinstance(do, Intervention) else do)
    params = set(model.parameters)
    for name in assign:
        if name not in params:
            raise UnknownNodeError(f"intervention names unknown parameter '{name}' in model {model.name}")
    return assign


def _block_draws(model: ScmModel, seed: int, block: int):
    """Uniform and normal draws for one block, in a fixed order independent of n."""
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(block,)))
    u = rng.random(BLOCK)
    v = {p: rng.random(BLOCK) for p in model.parameters}
    eps = {nd.name: rng.standard_normal(BLOCK) for nd in model.nodes if nd.role is not ColumnRole.PARAMETER}
    return u, v, eps


def _simulate(model: ScmModel, policy: SamplingPolicy, n: int, seed: int, do: Mapping[str, float]) -> dict[str, np.ndarray]:
    if n < 1:
        raise ValueError("n must be at least 1")
    chunks: dict[str, list[np.ndarray]] = {name: [] for name in model.node_names}
    n_blocks = -(-n // BLOCK)
    for b in range(n_blocks):
        rows = min(BLOCK, n - b * BLOCK)
        u, v, eps = _block_draws(model, seed, b)
        vals: dict[str, np.ndarray] = {}
        for p in model.parameters:
            if p in do:
                vals[p] = np.full(BLOCK, float(do[p]))
            else:
                shift = policy.spread[p] * (policy.rho * (2 * u - 1) + (1 - policy.rho) * (2 * v[p] - 1))
                vals[p] = policy.nominal[p] * np.exp(shift)
        for name in model.topological:
            nd = model.node(name)
            if nd.role is ColumnRole.PARAMETER:
                continue
            vals[name] = np.asarray(nd.func(vals, nd.noise_scale * eps[name]), dtype=float)
        for name in model.node_names:
            chunks[name].append(vals[name][:rows])
    return {k: np.concatenate(v) for k, v in chunks.items()}


def _to_dataset(model: ScmModel, cols: dict[str, np.ndarray]) -> Dataset:
    names = tuple(model.node_names)
    return Dataset(names, tuple(model.node(n).role for n in names), np.column_stack([cols[n] for n in names]))


def sample_observational(model: ScmModel, policy: SamplingPolicy, n: int, seed: int) -> Dataset:
    return _to_dataset(model, _simulate(model, policy, n, seed, {}))


def sample_interventional(
    model: ScmModel,
    policy: SamplingPolicy,
    do: Intervention | Mapping[str, float],
    n: int,
    seed: int,
) -> Dataset:
    """Like ``sample_observational`` with the named knobs forced (common random numbers)."""
    return _to_dataset(model, _simulate(model, policy, n, seed, _check_intervention(model, do)))


def oracle_ate(model: ScmModel, policy: SamplingPolicy, treatment: TreatmentSpec, n: int, seed: int) -> AteEstimate:
    """Paired Monte-Carlo ground truth: mean of Y(do(t_ref*(1+delta))) - Y(do(t_ref))."""
    t = treatment.parameter
    if t not in model.parameters:
        raise UnknownNodeError(f"'{t}' is not a parameter of model {model.name}")
    if treatment.outcome not in model.node_names:
        raise UnknownNodeError(f"model {model.name} has no node '{treatment.outcome}'")
    if treatment.delta == 0.0:
        return AteEstimate(0.0, 0.0, "oracle", treatment, {"n": n, "seed": seed})
    lo = _simulate(model, policy, n, seed, {t: treatment.t_ref})[treatment.outcome]
    hi = _simulate(model, policy, n, seed, {t: treatment.t_ref * (1.0 + treatment.delta)})[treatment.outcome]
    diff = hi - lo
    se = float(diff.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return AteEstimate(float(diff.mean()), se, "oracle", treatment, {"n": n, "seed": seed})


def interventional_mean(model: ScmModel, policy: SamplingPolicy, do: Mapping[str, float], outcome: str, n: int, seed: int) -> tuple[float, float]:
    """Mean outcome under ``do`` and its Monte-Carlo standard error."""
    y = _simulate(model, policy, n, seed, _check_intervention(model, do))[outcome]
    se = float(y.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return float(y.mean()), se


# --- device primitives (first-order square law) --------------------------------

KP_N = 200e-6  # A/V^2
KP_P = 100e-6  # A/V^2
VA_PER_M = 2e7  # V/m, channel-length Early voltage
VTH_N = 0.4
VTH_P = 0.4
VDD = 1.2
VCM_IN = 0.6
IDC0 = 20e-6
W0 = 2e-6
L0 = 120e-9

NOISE_NODE_V = 5e-3
NOISE_GAIN_DB = 0.2
# dB of gain per volt of saturation margin on the internal nodes
MARGIN_GAIN_DB_PER_V = 2.0


def gm(w, l, i_d, kp=KP_N):
    return np.sqrt(2.0 * kp * (w / l) * i_d)


def r_out(l, i_d):
    return VA_PER_M * l / i_d


def v_ov(w, l, i_d, kp=KP_N):
    return np.sqrt(2.0 * i_d / (kp * (w / l)))


def parallel(a, b):
    return a * b / (a + b)


def db(x):
    return 20.0 * np.log10(x)


def _nominal_margins(source_v: Callable, drain_v: Callable) -> tuple[float, float]:
    nom = {"Idc": IDC0, "W_DP": W0, "W_PMOS": W0, "W_CM": W0, "W_NML": W0, "L": L0}
    return float(source_v(nom)), float(drain_v(nom))


def _margin_term(v, s0, d0):
    return MARGIN_GAIN_DB_PER_V * ((v["diff_s_v"] - s0) + (v["diff_d_v"] - d0))


def _knobs(names):
    return tuple(Node(n, ColumnRole.PARAMETER) for n in names)


def _nominals(names):
    return {n: (IDC0 if n == "Idc" else L0 if n == "L" else W0) for n in names}


def ota_current_mirror() -> ScmModel:
    """Five-transistor OTA with a current-mirror load."""

    def i_branch(v):
        return v["Idc"] / 2.0 * (v["W_CM"] / W0)

    def s_node(v):
        return VCM_IN - (VTH_N + v_ov(v["W_DP"], v["L"], i_branch(v), KP_N))

    def d_node(v):
        return VDD - (VTH_P + v_ov(v["W_PMOS"], v["L"], i_branch(v), KP_P))

    s0, d0 = _nominal_margins(s_node, d_node)

    def gain(v, e):
        i_d = i_branch(v)
        core = gm(v["W_DP"], v["L"], i_d, KP_N) * parallel(r_out(v["L"], i_d), r_out(v["L"], i_d))
        return db(core * (v["W_PMOS"] / W0) ** 0.1) + _margin_term(v, s0, d0) + e

    knobs = ("Idc", "W_DP", "W_PMOS", "W_CM", "L")
    nodes = _knobs(knobs) + (
        Node("diff_s_v", ColumnRole.INTERMEDIATE, ("Idc", "W_DP", "W_CM", "L"), lambda v, e: s_node(v) + e, NOISE_NODE_V),
        Node("diff_d_v", ColumnRole.INTERMEDIATE, ("Idc", "W_PMOS", "W_CM", "L"), lambda v, e: d_node(v) + e, NOISE_NODE_V),
        Node("AC_Gain", ColumnRole.OUTCOME, knobs + ("diff_s_v", "diff_d_v"), gain, NOISE_GAIN_DB),
    )
    return ScmModel("ota", nodes, _nominals(knobs))


def telescopic() -> ScmModel:
    """Single-ended telescopic cascode; W_CM sizes the NMOS cascode and the tail mirror."""

    def i_branch(v):
        return v["Idc"] / 2.0 * (v["W_CM"] / W0)

    def s_node(v):
        return VCM_IN - (VTH_N + v_ov(v["W_DP"], v["L"], i_branch(v), KP_N))

    def d_node(v):
        return VDD - (VTH_P + v_ov(v["W_PMOS"], v["L"], i_branch(v), KP_P))

    s0, d0 = _nominal_margins(s_node, d_node)

    def gain(v, e):
        i_d, l = i_branch(v), v["L"]
        ro = r_out(l, i_d)
        r_down = gm(v["W_CM"], l, i_d, KP_N) * ro * ro
        r_up = gm(v["W_PMOS"], l, i_d, KP_P) * ro * ro
        core = gm(v["W_DP"], l, i_d, KP_N) * parallel(r_down, r_up)
        return db(core) + _margin_term(v, s0, d0) + e

    knobs = ("Idc", "W_DP", "W_PMOS", "W_CM", "L")
    nodes = _knobs(knobs) + (
        Node("diff_s_v", ColumnRole.INTERMEDIATE, ("Idc", "W_DP", "W_CM", "L"), lambda v, e: s_node(v) + e, NOISE_NODE_V),
        Node("diff_d_v", ColumnRole.INTERMEDIATE, ("Idc", "W_PMOS", "W_CM", "L"), lambda v, e: d_node(v) + e, NOISE_NODE_V),
        Node("AC_Gain", ColumnRole.OUTCOME, knobs + ("diff_s_v", "diff_d_v"), gain, NOISE_GAIN_DB),
    )
    return ScmModel("telescopic", nodes, _nominals(knobs))


def folded_cascode() -> ScmModel:
    """NMOS-input folded cascode; W_NML sets the folding-branch current and its NMOS loads."""

    def i_in(v):
        return v["Idc"] / 2.0

    def i_fold(v):
        return i_in(v) * (v["W_NML"] / W0)

    def s_node(v):
        return VCM_IN - (VTH_N + v_ov(v["W_DP"], v["L"], i_in(v), KP_N))

    def d_node(v):
        return VDD - (VTH_P + v_ov(v["W_PMOS"], v["L"], i_in(v) + i_fold(v), KP_P))

    s0, d0 = _nominal_margins(s_node, d_node)

    def gain(v, e):
        l, i1, i2 = v["L"], i_in(v), i_fold(v)
        source_side = parallel(r_out(l, i1), r_out(l, i1 + i2))
        r_up = gm(v["W_PMOS"], l, i2, KP_P) * r_out(l, i2) * source_side
        r_down = gm(v["W_NML"], l, i2, KP_N) * r_out(l, i2) * r_out(l, i2)
        core = gm(v["W_DP"], l, i1, KP_N) * parallel(r_up, r_down)
        return db(core) + _margin_term(v, s0, d0) + e

    knobs = ("Idc", "W_DP", "W_PMOS", "W_NML", "L")
    nodes = _knobs(knobs) + (
        Node("diff_s_v", ColumnRole.INTERMEDIATE, ("Idc", "W_DP", "L"), lambda v, e: s_node(v) + e, NOISE_NODE_V),
        Node("diff_d_v", ColumnRole.INTERMEDIATE, ("Idc", "W_PMOS", "W_NML", "L"), lambda v, e: d_node(v) + e, NOISE_NODE_V),
        Node("AC_Gain", ColumnRole.OUTCOME, knobs + ("diff_s_v", "diff_d_v"), gain, NOISE_GAIN_DB),
    )
    return ScmModel("folded", nodes, _nominals(knobs))


MODELS: dict[str, Callable[[], ScmModel]] = {
    "ota": ota_current_mirror,
    "telescopic": telescopic,
    "folded": folded_cascode,
}

DEFAULT_SAMPLES = {"ota": 20_000, "telescopic": 20_000, "folded": 38_000}


def build_model(name: str) -> ScmModel:
    try:
        return MODELS[name]()
    except KeyError:
        raise UnknownNodeError(f"unknown model '{name}' (choose from {', '.join(MODELS)})") from None


def linear_model(
    name: str,
    parameters: Mapping[str, float],
    equations: Mapping[str, tuple[ColumnRole, Mapping[str, float], float, float]],
) -> ScmModel:
    """Linear-Gaussian SCM: ``equations[node] = (role, {parent: coef}, intercept, noise_sd)``.

    Parameters map to their nominal values and are sampled by the policy.
    """

    def make(coefs, intercept):
        coefs = dict(coefs)

        def f(v, e):
            out = np.full_like(e, intercept)
            for p, c in coefs.items():
                out = out + c * v[p]
            return out + e

        return f

    nodes = list(_knobs(parameters))
    for node, (role, coefs, intercept, sd) in equations.items():
        nodes.append(Node(node, ColumnRole(role), tuple(coefs), make(coefs, intercept), sd))
    return ScmModel(name, tuple(nodes), dict(parameters))
