"""Causal discovery and treatment-effect analysis for analog circuit sweeps."""

from .discovery import DiscoveryConfig, discover
from .effects import (
    DmlConfig,
    SLearnerConfig,
    compare_methods,
    dml_ate,
    fit_slearner,
    make_spec,
    rank_effects,
    slearner_ate,
    whatif,
)
from .errors import AmpCausalError
from .estimates import AteEstimate, TreatmentSpec
from .graph import Dag, backdoor_adjustment_set, d_separated
from .tabular import ColumnRole, Dataset, load_csv, preprocess

__version__ = "0.1.0"

__all__ = [
    "AmpCausalError",
    "AteEstimate",
    "ColumnRole",
    "Dag",
    "Dataset",
    "DiscoveryConfig",
    "DmlConfig",
    "SLearnerConfig",
    "TreatmentSpec",
    "backdoor_adjustment_set",
    "compare_methods",
    "d_separated",
    "discover",
    "dml_ate",
    "fit_slearner",
    "load_csv",
    "make_spec",
    "preprocess",
    "rank_effects",
    "slearner_ate",
    "whatif",
]
