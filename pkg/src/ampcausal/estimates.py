"""Value types shared by the oracle and the estimators."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any


@dataclass(frozen=True)
class TreatmentSpec:
    """Intervention being measured: move ``parameter`` from ``t_ref`` to ``t_ref*(1+delta)``."""

    parameter: str
    outcome: str
    t_ref: float
    delta: float = 0.10
    covariates: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "covariates", tuple(self.covariates))
        if not self.delta > -1.0:
            raise ValueError(f"delta must exceed -1, got {self.delta}")
        if self.parameter in self.covariates or self.outcome in self.covariates:
            raise ValueError("treatment and outcome may not be covariates")
        if self.parameter == self.outcome:
            raise ValueError("treatment and outcome must differ")

    @property
    def step(self) -> float:
        return self.delta * self.t_ref

    def with_delta(self, delta: float) -> "TreatmentSpec":
        return replace(self, delta=delta)


@dataclass(frozen=True)
class AteEstimate:
    value: float
    se: float
    method: str
    treatment: TreatmentSpec
    diagnostics: dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.method not in ("oracle", "dml", "slearner", "external"):
            raise ValueError(f"unknown method tag {self.method!r}")
        if not math.isfinite(self.value):
            raise ValueError("ATE value must be finite")
        if not self.se >= 0.0:
            raise ValueError("standard error must be non-negative")

    @property
    def parameter(self) -> str:
        return self.treatment.parameter

    @property
    def sign(self) -> int:
        return (self.value > 0) - (self.value < 0)
