"""Treatment-effect estimation: cross-fitted DML, the S-learner baseline,
what-if prediction, and the comparison arithmetic for impact tables."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import DataError, RoleError, UnidentifiableEffectError
from .estimates import AteEstimate, TreatmentSpec
from .learners import (
    ForestConfig,
    LinearModel,
    MlpConfig,
    MlpModel,
    fit_elastic_net,
    fit_mlp,
    fit_random_forest,
)
from .tabular import ColumnRole, Dataset

DEFAULT_OUTCOME_MLP = MlpConfig(hidden=(64,), epochs=200, step_size=1e-2, momentum=0.9, weight_decay=1e-4)
DEFAULT_SLEARNER_MLP = MlpConfig(hidden=(128, 64), epochs=300, step_size=1e-2, momentum=0.9, weight_decay=1e-4)


@dataclass(frozen=True)
class DmlConfig:
    folds: int = 5
    treatment_forest: ForestConfig = ForestConfig(min_leaf=20)
    outcome_mlp: MlpConfig = DEFAULT_OUTCOME_MLP
    final_lam: float = 1e-3
    final_alpha_mix: float = 0.5
    seed: int = 0


@dataclass(frozen=True)
class SLearnerConfig:
    mlp: MlpConfig = DEFAULT_SLEARNER_MLP
    seed: int = 0


@dataclass
class DmlFit:
    fold_of_row: np.ndarray
    t_resid: np.ndarray
    y_resid: np.ndarray
    treatment_models: list
    outcome_models: list
    final: LinearModel
    theta: float


def make_spec(
    data: Dataset,
    parameter: str,
    outcome: str,
    covariates: Sequence[str] | None = None,
    delta: float = 0.10,
    t_ref: float | None = None,
) -> TreatmentSpec:
    """TreatmentSpec with t_ref defaulting to the column median and covariates
    to every other parameter column."""
    if data.role(parameter) is not ColumnRole.PARAMETER:
        raise RoleError(f"treatment '{parameter}' is not a parameter column")
    if data.role(outcome) is not ColumnRole.OUTCOME:
        raise RoleError(f"'{outcome}' is not an outcome column")
    if covariates is None:
        covariates = [c for c in data.names_with_role(ColumnRole.PARAMETER) if c != parameter]
    if t_ref is None:
        t_ref = float(np.median(data.column(parameter)))
    return TreatmentSpec(parameter, outcome, t_ref, delta, tuple(covariates))


def _check_spec(data: Dataset, spec: TreatmentSpec) -> None:
    for name in (spec.parameter, spec.outcome, *spec.covariates):
        data.index(name)
    if data.role(spec.parameter) is not ColumnRole.PARAMETER:
        raise RoleError(f"treatment '{spec.parameter}' is not a parameter column")


def _standardized(M: np.ndarray) -> np.ndarray:
    sd = M.std(axis=0)
    return (M - M.mean(axis=0)) / np.where(sd > 0, sd, 1.0)


def fold_assignment(n: int, k: int, seed: int) -> np.ndarray:
    perm = np.random.default_rng([seed, 7]).permutation(n)
    folds = np.empty(n, dtype=np.int64)
    folds[perm] = np.arange(n) % k
    return folds


def dml_ate(data: Dataset, spec: TreatmentSpec, config: DmlConfig | None = None) -> tuple[AteEstimate, DmlFit]:
    """Partially linear DML, Y = theta*T + g(X) + e, with K-fold cross-fitting.

    Nuisances: forest for E[T|X], MLP for E[Y|X], both trained out of fold.
    The final stage regresses pooled outcome residuals on treatment residuals
    (elastic net, one regressor, no intercept, both sides rescaled to unit
    RMS). The per-unit slope is reported as theta * delta * t_ref.
    """
    config = config or DmlConfig()
    _check_spec(data, spec)
    n, K = data.row_count, config.folds
    if K < 2:
        raise ValueError("need at least two folds")
    if n < 10 * K:
        raise DataError(f"need at least {10 * K} rows for {K} folds, got {n}")

    T = data.column(spec.parameter)
    Y = data.column(spec.outcome)
    X = _standardized(data.matrix(spec.covariates)) if spec.covariates else np.zeros((n, 0))
    t_mu, t_sd = T.mean(), T.std()
    if not t_sd > 0:
        raise UnidentifiableEffectError(f"treatment '{spec.parameter}' is constant")
    Tz = (T - t_mu) / t_sd

    folds = fold_assignment(n, K, config.seed)
    t_hat = np.empty(n)
    y_hat = np.empty(n)
    t_models, y_models = [], []
    for k in range(K):
        tr, te = folds != k, folds == k
        if X.shape[1] == 0:
            t_hat[te] = Tz[tr].mean()
            y_hat[te] = Y[tr].mean()
            t_models.append(None)
            y_models.append(None)
            continue
        fm = fit_random_forest(X[tr], Tz[tr], config.treatment_forest, seed=config.seed * 7919 + 1000 * (k + 1))
        gm_ = fit_mlp(X[tr], Y[tr], config.outcome_mlp, seed=config.seed * 7919 + 2000 * (k + 1))
        t_hat[te] = fm.predict(X[te])
        y_hat[te] = gm_.predict(X[te])
        t_models.append(fm)
        y_models.append(gm_)

    t_res = (Tz - t_hat) * t_sd
    y_res = Y - y_hat
    t_rms = math.sqrt(float(np.mean(t_res**2)))
    if t_rms**2 < 1e-12 * t_sd**2:
        raise UnidentifiableEffectError(
            f"treatment '{spec.parameter}' is fully explained by {', '.join(spec.covariates)}"
        )
    y_rms = math.sqrt(float(np.mean(y_res**2))) or 1.0
    final = fit_elastic_net(
        (t_res / t_rms)[:, None],
        y_res / y_rms,
        lam=config.final_lam,
        alpha_mix=config.final_alpha_mix,
        fit_intercept=False,
    )
    theta = float(final.coefficients[0]) * y_rms / t_rms

    psi = (y_res - theta * t_res) * t_res
    J = float(np.mean(t_res**2))
    se_theta = math.sqrt(float(np.mean(psi**2)) / (J * J * n))
    step = spec.delta * spec.t_ref
    fit = DmlFit(folds, t_res, y_res, t_models, y_models, final, theta)
    est = AteEstimate(
        theta * step,
        se_theta * abs(step),
        "dml",
        spec,
        {"folds": K, "theta": theta, "final_converged": final.converged, "n": n},
    )
    return est, fit


@dataclass
class SLearnerFit:
    model: MlpModel
    features: tuple[str, ...]
    outcome: str

    def design(self, data: Dataset, override: Mapping[str, np.ndarray | float] | None = None) -> np.ndarray:
        cols = []
        for f in self.features:
            if override and f in override:
                cols.append(np.broadcast_to(np.asarray(override[f], dtype=float), (data.row_count,)))
            else:
                cols.append(data.column(f))
        return np.column_stack(cols)

    def predict(self, data: Dataset, override=None) -> np.ndarray:
        return self.model.predict(self.design(data, override))


def fit_slearner(data: Dataset, features: Sequence[str], outcome: str, config: SLearnerConfig | None = None) -> SLearnerFit:
    """One MLP on the listed features (kept in dataset column order) -> outcome."""
    config = config or SLearnerConfig()
    order = [c for c in data.column_names if c in set(features)]
    if len(order) != len(set(features)):
        missing = sorted(set(features) - set(order))
        raise DataError(f"unknown feature columns: {', '.join(missing)}")
    X = data.matrix(order)
    model = fit_mlp(X, data.column(outcome), config.mlp, seed=config.seed)
    return SLearnerFit(model, tuple(order), outcome)


def slearner_ate(
    data: Dataset,
    spec: TreatmentSpec,
    config: SLearnerConfig | None = None,
    fit: SLearnerFit | None = None,
) -> AteEstimate:
    """Mean over rows of f(t_i*(1+delta), x_i) - f(t_i, x_i)."""
    _check_spec(data, spec)
    wanted = {spec.parameter, *spec.covariates}
    if fit is None or set(fit.features) != wanted or fit.outcome != spec.outcome:
        fit = fit_slearner(data, sorted(wanted), spec.outcome, config)
    if spec.delta == 0.0:
        return AteEstimate(0.0, 0.0, "slearner", spec, {"n": data.row_count})
    t = data.column(spec.parameter)
    base = fit.predict(data)
    moved = fit.predict(data, {spec.parameter: t * (1.0 + spec.delta)})
    contrast = moved - base
    n = contrast.shape[0]
    se = float(contrast.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return AteEstimate(float(contrast.mean()), se, "slearner", spec, {"n": n})


@dataclass
class WhatIfResult:
    parameter: str
    value: float
    expected: float
    sd: float
    n: int
    warning: str | None = None


def extrapolation_warning(observed: np.ndarray, value: float) -> str | None:
    lo, hi = float(observed.min()), float(observed.max())
    centre, width = 0.5 * (lo + hi), hi - lo
    if abs(value - centre) > 1.5 * width:
        return (
            f"extrapolation: {value:.4g} lies outside 3x the observed range [{lo:.4g}, {hi:.4g}]"
        )
    return None


def whatif(
    data: Dataset,
    spec_base: TreatmentSpec,
    assignment: Mapping[str, float],
    config: SLearnerConfig | None = None,
    fit: SLearnerFit | None = None,
) -> WhatIfResult:
    """E[Y | do(T = t*)] by the adjustment formula: average f(t*, x_i) over rows."""
    if set(assignment) != {spec_base.parameter}:
        raise DataError(f"assignment must set exactly '{spec_base.parameter}'")
    _check_spec(data, spec_base)
    t_star = float(assignment[spec_base.parameter])
    wanted = {spec_base.parameter, *spec_base.covariates}
    if fit is None or set(fit.features) != wanted or fit.outcome != spec_base.outcome:
        fit = fit_slearner(data, sorted(wanted), spec_base.outcome, config)
    pred = fit.predict(data, {spec_base.parameter: t_star})
    return WhatIfResult(
        spec_base.parameter,
        t_star,
        float(pred.mean()),
        float(pred.std(ddof=1)) if pred.shape[0] > 1 else 0.0,
        int(pred.shape[0]),
        extrapolation_warning(data.column(spec_base.parameter), t_star),
    )


# --- comparison arithmetic ----------------------------------------------------------


def pct_diff(model_ate: float, ref_ate: float) -> float:
    """Percent deviation of a model ATE from the reference: 100*(ref - model)/|ref|."""
    if ref_ate == 0:
        raise DataError("percent difference undefined for a zero reference ATE")
    return 100.0 * (ref_ate - model_ate) / abs(ref_ate)


def avg_abs(diffs: Sequence[float]) -> float:
    diffs = list(diffs)
    if not diffs:
        raise DataError("average of an empty list")
    return sum(abs(d) for d in diffs) / len(diffs)


def sign_flip(model_ate: float, ref_ate: float) -> bool:
    return model_ate != 0 and ref_ate != 0 and (model_ate > 0) != (ref_ate > 0)


def rank_effects(estimates: Sequence[AteEstimate]) -> list[AteEstimate]:
    """Descending |ATE|, ties broken by parameter name."""
    outcomes = {e.treatment.outcome for e in estimates}
    if len(outcomes) > 1:
        raise DataError(f"estimates span several outcomes: {sorted(outcomes)}")
    return sorted(estimates, key=lambda e: (-abs(e.value), e.parameter))


@dataclass
class EffectReportRow:
    parameter: str
    reference: float
    model: float
    pct_diff: float
    sign_flip: bool


@dataclass
class Comparison:
    parameters: list[str]
    reference: dict[str, float]
    methods: dict[str, dict[str, EffectReportRow]] = field(default_factory=dict)
    summary: dict[str, float] = field(default_factory=dict)

    def records(self) -> list[dict]:
        out = []
        for p in self.parameters:
            dml = self.methods.get("dml", {}).get(p)
            nn = self.methods.get("slearner", {}).get(p)
            out.append(
                {
                    "parameter": p,
                    "oracle_ate": self.reference[p],
                    "dml_ate": dml.model if dml else None,
                    "slearner_ate": nn.model if nn else None,
                    "pct_diff_dml": dml.pct_diff if dml else None,
                    "pct_diff_nn": nn.pct_diff if nn else None,
                    "sign_flip_dml": dml.sign_flip if dml else None,
                    "sign_flip_nn": nn.sign_flip if nn else None,
                }
            )
        return out


def _as_map(items) -> dict[str, float]:
    if isinstance(items, Mapping):
        return {k: float(v) for k, v in items.items()}
    return {e.parameter: float(e.value) for e in items}


def compare_methods(oracle, dml, slearner) -> Comparison:
    """Per-parameter percent deviations from the reference plus avg-abs summaries.

    Each argument is a list of AteEstimate or a {parameter: ATE} mapping.
    """
    ref = _as_map(oracle)
    cmp = Comparison(list(ref), ref)
    for tag, items in (("dml", dml), ("slearner", slearner)):
        vals = _as_map(items)
        if set(vals) != set(ref):
            raise DataError(
                f"{tag} parameters {sorted(vals)} do not match reference parameters {sorted(ref)}"
            )
        rows = {
            p: EffectReportRow(p, ref[p], vals[p], pct_diff(vals[p], ref[p]), sign_flip(vals[p], ref[p]))
            for p in ref
        }
        cmp.methods[tag] = rows
        cmp.summary[tag] = avg_abs(r.pct_diff for r in rows.values())
    return cmp
