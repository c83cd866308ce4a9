"""Command-line front end: generate, discover, estimate, whatif, rank.

Every command is deterministic for fixed inputs and seed. Trained artifacts
live under ``<out>/.cache/<key>`` where the key hashes the input files and
every setting that influences them, so ``rank`` and ``whatif`` reuse what
``estimate`` trained.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import warnings
from dataclasses import dataclass, fields, replace
from pathlib import Path

from . import report, scm
from .discovery import DiscoveryConfig, discover
from .effects import (
    DEFAULT_OUTCOME_MLP,
    DEFAULT_SLEARNER_MLP,
    DmlConfig,
    SLearnerConfig,
    SLearnerFit,
    compare_methods,
    dml_ate,
    fit_slearner,
    make_spec,
    rank_effects,
    slearner_ate,
    whatif,
)
from .errors import AmpCausalError, ConfigError, DataError, UnidentifiableEffectError
from .estimates import AteEstimate, TreatmentSpec
from .graph import Dag, backdoor_adjustment_set, to_dot
from .learners import ForestConfig, model_from_dict, model_to_dict
from .tabular import ColumnRole, load_csv, preprocess, write_csv, write_manifest

CACHE_VERSION = 1
FORMATS = ("text", "json", "dot")


@dataclass
class RunConfig:
    data: str | None = None
    manifest: str | None = None
    outcome: str | None = None
    alpha: float = 0.01
    max_cond: int = 3
    max_indegree: int = 6
    folds: int = 5
    delta: float = 0.10
    seed: int = 0
    out: str = "ampcausal-out"
    format: str = "text"
    threads: int = 0
    no_cache: bool = False
    treatments: str | None = None
    digits: int = 4
    forest_trees: int = 200
    forest_min_leaf: int = 20
    forest_max_depth: int = 12
    outcome_epochs: int = DEFAULT_OUTCOME_MLP.epochs
    slearner_epochs: int = DEFAULT_SLEARNER_MLP.epochs
    oracle_n: int = 20_000

    def validate(self, need_data: bool = True) -> None:
        if need_data:
            for key in ("data", "manifest"):
                path = getattr(self, key)
                if path is None:
                    raise ConfigError(f"--{key} is required")
                if not Path(path).is_file():
                    raise ConfigError(f"{key} file not found: {path}")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not self.delta > -1.0:
            raise ConfigError(f"delta must exceed -1, got {self.delta}")
        if self.format not in FORMATS:
            raise ConfigError(f"format must be one of {', '.join(FORMATS)}")
        if self.folds < 2:
            raise ConfigError("folds must be at least 2")
        if self.digits < 1:
            raise ConfigError("digits must be positive")

    def dml(self) -> DmlConfig:
        forest = ForestConfig(
            n_trees=self.forest_trees, max_depth=self.forest_max_depth, min_leaf=self.forest_min_leaf
        )
        return DmlConfig(
            folds=self.folds,
            treatment_forest=forest,
            outcome_mlp=replace(DEFAULT_OUTCOME_MLP, epochs=self.outcome_epochs),
            seed=self.seed,
        )

    def slearner(self) -> SLearnerConfig:
        return SLearnerConfig(replace(DEFAULT_SLEARNER_MLP, epochs=self.slearner_epochs), seed=self.seed)


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, raw: str):
    kind = _TYPES[key]
    try:
        if kind == "bool":
            if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return raw.lower() in ("true", "1", "yes")
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None
    return raw


def read_config(path: str | Path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment; keys use underscores."""
    values = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, raw = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _TYPES:
            raise ConfigError(f"{path}:{lineno}: unknown key '{key}'")
        values[key] = _coerce(key, raw)
    return values


def build_config(args: argparse.Namespace) -> RunConfig:
    values = read_config(args.config) if getattr(args, "config", None) else {}
    for key in _TYPES:
        flag = getattr(args, key, None)
        if flag is not None and flag is not False:
            values[key] = flag
    return RunConfig(**values)


# --- helpers ---------------------------------------------------------------------


def _sha(*chunks: bytes) -> str:
    h = hashlib.sha256()
    for c in chunks:
        h.update(len(c).to_bytes(8, "little"))
        h.update(c)
    return h.hexdigest()[:20]


def sidecar_path(data_path: str | Path) -> Path:
    return Path(data_path).with_suffix(".provenance")


def read_sidecar(path: Path) -> dict | None:
    if not path.is_file():
        return None
    rec = {}
    for line in path.read_text(encoding="utf-8").splitlines():
        if "=" in line:
            k, v = (s.strip() for s in line.split("=", 1))
            rec[k] = v
    try:
        return {
            "model": rec["model"],
            "seed": int(rec["seed"]),
            "n": int(rec["n"]),
            "rho": float(rec["rho"]),
            "spread": float(rec["spread"]),
        }
    except (KeyError, ValueError):
        raise ConfigError(f"malformed provenance sidecar {path}") from None


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, ensure_ascii=False) + "\n"


class Workspace:
    """Loaded inputs plus the artifact cache for one configuration."""

    def __init__(self, cfg: RunConfig):
        cfg.validate()
        self.cfg = cfg
        self.out = Path(cfg.out)
        self.raw_bytes = Path(cfg.data).read_bytes()
        self.manifest_bytes = Path(cfg.manifest).read_bytes()
        side = sidecar_path(cfg.data)
        self.sidecar = read_sidecar(side)
        self.sidecar_bytes = side.read_bytes() if self.sidecar else b""
        self.data = preprocess(load_csv(cfg.data, cfg.manifest))
        outcomes = self.data.names_with_role(ColumnRole.OUTCOME)
        if cfg.outcome is None:
            if len(outcomes) != 1:
                raise ConfigError(f"--outcome is required when several outcomes exist: {', '.join(outcomes)}")
            self.outcome = outcomes[0]
        elif cfg.outcome not in outcomes:
            raise ConfigError(f"'{cfg.outcome}' is not an outcome column")
        else:
            self.outcome = cfg.outcome
        params = self.data.names_with_role(ColumnRole.PARAMETER)
        if cfg.treatments:
            wanted = [t.strip() for t in cfg.treatments.split(",") if t.strip()]
            unknown = [t for t in wanted if t not in params]
            if unknown:
                raise ConfigError(f"unknown treatment parameter(s): {', '.join(unknown)}")
            self.treatments = [p for p in params if p in wanted]
        else:
            self.treatments = params

    def key(self, stage: str) -> str:
        c = self.cfg
        parts = {"v": CACHE_VERSION, "stage": stage, "alpha": c.alpha, "max_cond": c.max_cond, "max_indegree": c.max_indegree}
        if stage != "discovery":
            parts |= {
                "outcome": self.outcome,
                "seed": c.seed,
                "slearner_epochs": c.slearner_epochs,
            }
        if stage == "estimates":
            parts |= {
                "folds": c.folds,
                "delta": c.delta,
                "treatments": self.treatments,
                "forest": [c.forest_trees, c.forest_min_leaf, c.forest_max_depth],
                "outcome_epochs": c.outcome_epochs,
                "oracle_n": c.oracle_n,
            }
        blob = json.dumps(parts, sort_keys=True).encode()
        return _sha(self.raw_bytes, self.manifest_bytes, self.sidecar_bytes, blob)

    def cache_file(self, stage: str, suffix: str = ".json") -> Path:
        return self.out / ".cache" / f"{stage}-{self.key(stage)}{suffix}"

    def load(self, stage: str):
        path = self.cache_file(stage)
        if self.cfg.no_cache or not path.is_file():
            return None
        return json.loads(path.read_text(encoding="utf-8"))

    def store(self, stage: str, obj) -> None:
        if not self.cfg.no_cache:
            _write(self.cache_file(stage), json.dumps(obj))

    # pipeline stages, each cached

    def discovery(self) -> dict:
        rep = self.load("discovery")
        if rep is None:
            cfg = DiscoveryConfig(self.cfg.alpha, self.cfg.max_cond, self.cfg.max_indegree)
            rep = discover(self.data, cfg).report()
            self.store("discovery", rep)
        return rep

    def dag(self) -> Dag:
        rep = self.discovery()
        names = rep["nodes"]
        roles = {n: self.data.role(n) for n in names}
        return Dag(names, [(e["from"], e["to"]) for e in rep["edges"]], roles)

    def covariates(self, parameter: str) -> list[str]:
        res = backdoor_adjustment_set(self.dag(), parameter, self.outcome)
        if not res.valid:
            raise UnidentifiableEffectError(f"no valid adjustment set for {parameter} -> {self.outcome}")
        return res.canonical

    def slearner_fit(self, features: list[str]) -> SLearnerFit:
        stage = "slearner-" + _sha(",".join(sorted(features)).encode())
        cached = self.load(stage)
        if cached is not None:
            return SLearnerFit(model_from_dict(cached["model"]), tuple(cached["features"]), cached["outcome"])
        fit = fit_slearner(self.data, features, self.outcome, self.cfg.slearner())
        self.store(stage, {"model": model_to_dict(fit.model), "features": list(fit.features), "outcome": fit.outcome})
        return fit

    def oracle_model(self):
        if self.sidecar is None:
            return None, None
        model = scm.build_model(self.sidecar["model"])
        policy = scm.SamplingPolicy.default(model, self.sidecar["spread"], self.sidecar["rho"])
        return model, policy

    def estimates(self) -> dict:
        eff = self.load("estimates")
        if eff is not None:
            return eff
        model, policy = self.oracle_model()
        rows, oracle, dml, nn = [], {}, {}, {}
        for p in self.treatments:
            cov = self.covariates(p)
            spec = make_spec(self.data, p, self.outcome, cov, self.cfg.delta)
            d_est, _ = dml_ate(self.data, spec, self.cfg.dml())
            fit = self.slearner_fit([p, *cov])
            s_est = slearner_ate(self.data, spec, fit=fit)
            row = {
                "parameter": p,
                "covariates": list(cov),
                "t_ref": spec.t_ref,
                "dml_ate": d_est.value,
                "dml_se": d_est.se,
                "slearner_ate": s_est.value,
                "slearner_se": s_est.se,
            }
            dml[p], nn[p] = d_est.value, s_est.value
            if model is not None:
                o_est = scm.oracle_ate(model, policy, spec, self.cfg.oracle_n, self.cfg.seed + 1)
                row |= {"oracle_ate": o_est.value, "oracle_se": o_est.se}
                oracle[p] = o_est.value
            rows.append(row)
        eff = {
            "outcome": self.outcome,
            "delta": self.cfg.delta,
            "oracle": model is not None,
            "notice": None if model is not None else "no provenance sidecar found; oracle columns omitted",
            "parameters": rows,
            "summary": None,
        }
        if model is not None:
            cmp = compare_methods(oracle, dml, nn)
            by_name = {r["parameter"]: r for r in cmp.records()}
            for row in rows:
                rec = by_name[row["parameter"]]
                for k in ("pct_diff_dml", "pct_diff_nn", "sign_flip_dml", "sign_flip_nn"):
                    row[k] = rec[k]
            eff["summary"] = cmp.summary
        self.store("estimates", eff)
        return eff


# --- commands ---------------------------------------------------------------------


def cmd_generate(args, out) -> None:
    model = scm.build_model(args.model)
    n = args.n if args.n is not None else scm.DEFAULT_SAMPLES[args.model]
    if n < 1:
        raise ConfigError("n must be at least 1")
    if not 0.0 <= args.rho <= 1.0:
        raise ConfigError("rho must lie in [0, 1]")
    policy = scm.SamplingPolicy.default(model, args.spread, args.rho)
    data = scm.sample_observational(model, policy, n, args.seed)
    dest = Path(args.out)
    try:
        dest.mkdir(parents=True, exist_ok=True)
        csv = dest / f"{args.model}.csv"
        write_csv(csv, data)
        write_manifest(dest / f"{args.model}.manifest", data)
        _write(
            sidecar_path(csv),
            f"model = {args.model}\nseed = {args.seed}\nn = {n}\nrho = {args.rho!r}\nspread = {args.spread!r}\n",
        )
    except OSError as exc:
        raise ConfigError(f"cannot write to {dest}: {exc.strerror}") from None
    out.write(f"wrote {n} rows x {data.col_count} columns to {csv}\n")


def cmd_discover(cfg: RunConfig, out) -> None:
    ws = Workspace(cfg)
    rep = ws.discovery()
    dag = ws.dag()
    dot = to_dot(dag)
    _write(ws.out / "dag.dot", dot)
    _write(ws.out / "dag.json", _dump({"nodes": rep["nodes"], "edges": rep["edges"]}))
    _write(ws.out / "discovery.json", _dump(rep))
    text = report.discovery_text(rep)
    _write(ws.out / "discovery.txt", text)
    out.write({"text": text, "json": _dump(rep), "dot": dot}[cfg.format])


def cmd_estimate(cfg: RunConfig, out) -> None:
    if cfg.format == "dot":
        raise ConfigError("estimate supports text or json output")
    ws = Workspace(cfg)
    eff = ws.estimates()
    text = report.effects_text(eff, cfg.digits)
    _write(ws.out / "effects.json", _dump(eff))
    _write(ws.out / "effects.txt", text)
    out.write(text if cfg.format == "text" else _dump(eff))


def _estimates_from_file(path: str) -> tuple[str, list[dict]]:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc.msg})") from None
    if isinstance(obj, dict) and "parameters" in obj:
        return obj.get("outcome", "outcome"), [
            {"parameter": r["parameter"], "ate": r["dml_ate"], "se": r.get("dml_se")} for r in obj["parameters"]
        ]
    if isinstance(obj, dict):
        return "outcome", [{"parameter": k, "ate": float(v), "se": None} for k, v in obj.items()]
    raise ConfigError(f"{path}: expected an effects report or a {{parameter: ate}} object")


def cmd_rank(cfg: RunConfig, out, estimates_file: str | None = None) -> None:
    if cfg.format == "dot":
        raise ConfigError("rank supports text or json output")
    if estimates_file:
        cfg.validate(need_data=False)
        outcome, items = _estimates_from_file(estimates_file)
    else:
        ws = Workspace(cfg)
        eff = ws.load("estimates")
        if eff is None:
            if not cfg.no_cache:
                raise DataError("no cached estimates for this configuration; run 'estimate' first")
            eff = ws.estimates()
        outcome = eff["outcome"]
        items = [{"parameter": r["parameter"], "ate": r["dml_ate"], "se": r["dml_se"]} for r in eff["parameters"]]
    if not items:
        raise DataError("no estimates to rank")
    ests = [AteEstimate(i["ate"], i["se"] or 0.0, "external", TreatmentSpec(i["parameter"], outcome, 1.0)) for i in items]
    se_of = {i["parameter"]: i["se"] for i in items}
    ranked = [
        {"parameter": e.parameter, "ate": e.value, "se": se_of[e.parameter], "sign": e.sign}
        for e in rank_effects(ests)
    ]
    out.write(report.rank_text(ranked, outcome, cfg.digits) if cfg.format == "text" else _dump(ranked))


def cmd_whatif(cfg: RunConfig, out, parameter: str, value: float) -> None:
    if cfg.format == "dot":
        raise ConfigError("whatif supports text or json output")
    ws = Workspace(cfg)
    if parameter not in ws.data.names_with_role(ColumnRole.PARAMETER):
        raise ConfigError(f"unknown parameter '{parameter}'")
    cov = ws.covariates(parameter)
    spec = make_spec(ws.data, parameter, ws.outcome, cov, cfg.delta)
    fit = ws.slearner_fit([parameter, *cov])
    res = whatif(ws.data, spec, {parameter: value}, fit=fit)
    rec = {
        "parameter": parameter,
        "value": value,
        "outcome": ws.outcome,
        "expected": res.expected,
        "sd": res.sd,
        "n": res.n,
        "warning": res.warning,
    }
    model, policy = ws.oracle_model()
    if model is not None:
        mean, se = scm.interventional_mean(model, policy, {parameter: value}, ws.outcome, cfg.oracle_n, cfg.seed + 1)
        rec |= {"oracle_mean": mean, "oracle_se": se}
    out.write(report.whatif_text(rec, cfg.digits) if cfg.format == "text" else _dump(rec))


# --- argument parsing -----------------------------------------------------------------


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="flat key = value settings file (flags override it)")
    p.add_argument("--data")
    p.add_argument("--manifest")
    p.add_argument("--outcome")
    p.add_argument("--alpha", type=float)
    p.add_argument("--max-cond", dest="max_cond", type=int)
    p.add_argument("--max-indegree", dest="max_indegree", type=int)
    p.add_argument("--folds", type=int)
    p.add_argument("--delta", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--format", choices=FORMATS)
    p.add_argument("--threads", type=int)
    p.add_argument("--no-cache", dest="no_cache", action="store_true")
    p.add_argument("--treatments", help="comma-separated parameter subset")
    p.add_argument("--digits", type=int)
    return p


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ampcausal", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    common = _common()

    g = sub.add_parser("generate", help="sample a synthetic circuit sweep")
    g.add_argument("model", choices=sorted(scm.MODELS))
    g.add_argument("--n", type=int)
    g.add_argument("--rho", type=float, default=0.9)
    g.add_argument("--spread", type=float, default=0.25)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", default=".")

    sub.add_parser("discover", parents=[common], help="learn the causal graph")
    sub.add_parser("estimate", parents=[common], help="estimate per-parameter effects")
    w = sub.add_parser("whatif", parents=[common], help="predict the outcome under do(parameter = value)")
    w.add_argument("parameter")
    w.add_argument("value", type=float)
    r = sub.add_parser("rank", parents=[common], help="rank parameters by effect size")
    r.add_argument("--estimates", help="rank an effects JSON or {parameter: ate} file instead of the cache")
    return parser


def _set_threads(n: int) -> None:
    if n and n > 0:
        import numba

        # an outdated TBB install only costs a fallback threading layer
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", numba.NumbaWarning)
            numba.set_num_threads(max(1, min(n, numba.config.NUMBA_NUM_THREADS)))


def main(argv: list[str] | None = None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        args = build_parser().parse_args(argv)
        if args.command == "generate":
            cmd_generate(args, stdout)
            return 0
        cfg = build_config(args)
        _set_threads(cfg.threads or os.cpu_count() or 1)
        if args.command == "discover":
            cmd_discover(cfg, stdout)
        elif args.command == "estimate":
            cmd_estimate(cfg, stdout)
        elif args.command == "whatif":
            cmd_whatif(cfg, stdout, args.parameter, args.value)
        else:
            cmd_rank(cfg, stdout, args.estimates)
        return 0
    except AmpCausalError as exc:
        detail = " ".join(str(exc).split())
        stderr.write(f"error:{exc.category}:{detail}\n")
        return 2
    except OSError as exc:
        stderr.write(f"error:io:{exc.filename or ''} {exc.strerror}\n")
        return 2
    except ValueError as exc:
        stderr.write(f"error:value:{' '.join(str(exc).split())}\n")
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
