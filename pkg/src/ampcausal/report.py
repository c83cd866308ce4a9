"""Plain-text rendering of discovery, effect and ranking results."""

from __future__ import annotations

from typing import Sequence


def fmt(x: float | None, digits: int = 4) -> str:
    if x is None:
        return "-"
    return format(float(x), f".{digits}g")


def pct(x: float | None, digits: int = 4) -> str:
    return "-" if x is None else fmt(x, digits) + "%"


def table(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    widths = [max(len(h), *(len(r[k]) for r in rows)) if rows else len(h) for k, h in enumerate(header)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip()]
    lines.append("  ".join("-" * w for w in widths))
    for r in rows:
        lines.append("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip())
    return "\n".join(lines)


def discovery_text(report: dict) -> str:
    edges = report["edges"]
    lines = [f"{len(edges)} edges over {len(report['nodes'])} nodes"]
    lines += [f"  {e['from']} -> {e['to']}" for e in edges]
    lines.append(f"{len(report['removed'])} pairs separated")
    for r in report["removed"]:
        sep = ", ".join(r["sepset"]) or "{}"
        lines.append(f"  {r['i']} _||_ {r['j']} | {sep}")
    lines += [f"note: {n}" for n in report["notes"]]
    return "\n".join(lines) + "\n"


def effects_text(effects: dict, digits: int = 4) -> str:
    rows = effects["parameters"]
    has_oracle = effects["oracle"]
    out = [f"Effects on {effects['outcome']} of a {fmt(100 * effects['delta'], digits)}% step in each parameter"]
    if has_oracle:
        header = ["Parameter", "Oracle ATE", "DML ATE", "NN ATE", "(%) Diff. DML", "(%) Diff. NN"]
        body = [
            [
                r["parameter"],
                fmt(r["oracle_ate"], digits),
                fmt(r["dml_ate"], digits),
                fmt(r["slearner_ate"], digits),
                pct(r["pct_diff_dml"], digits) + (" (sign flip)" if r["sign_flip_dml"] else ""),
                pct(r["pct_diff_nn"], digits) + (" (sign flip)" if r["sign_flip_nn"] else ""),
            ]
            for r in rows
        ]
        s = effects["summary"]
        body.append(["Avg. of Absolute Values", "", "", "", pct(s["dml"], digits), pct(s["slearner"], digits)])
    else:
        header = ["Parameter", "DML ATE", "DML SE", "NN ATE", "NN SE"]
        body = [
            [r["parameter"], fmt(r["dml_ate"], digits), fmt(r["dml_se"], digits), fmt(r["slearner_ate"], digits), fmt(r["slearner_se"], digits)]
            for r in rows
        ]
    out.append(table(header, body))
    if effects.get("notice"):
        out.append(f"notice: {effects['notice']}")
    return "\n".join(out) + "\n"


def rank_text(ranked: Sequence[dict], outcome: str, digits: int = 4) -> str:
    lines = [f"Parameters ranked by |ATE| on {outcome}"]
    for k, r in enumerate(ranked, 1):
        arrow = "↑ knob raises outcome" if r["ate"] > 0 else "↓ lowers" if r["ate"] < 0 else "no effect"
        se = f" (se {fmt(r['se'], digits)})" if r.get("se") is not None else ""
        lines.append(f"{k}. {r['parameter']}  {fmt(r['ate'], digits)}{se}  {arrow}")
    return "\n".join(lines) + "\n"


def whatif_text(rec: dict, digits: int = 4) -> str:
    lines = [
        f"what-if {rec['parameter']} = {fmt(rec['value'], digits)}",
        f"expected {rec['outcome']}: {fmt(rec['expected'], digits)} (row sd {fmt(rec['sd'], digits)}, n {rec['n']})",
    ]
    if rec.get("oracle_mean") is not None:
        lines.append(f"oracle mean: {fmt(rec['oracle_mean'], digits)} (se {fmt(rec['oracle_se'], digits)})")
    if rec.get("warning"):
        lines.append(f"warning: {rec['warning']}")
    return "\n".join(lines) + "\n"
