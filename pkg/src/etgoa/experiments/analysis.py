"""Summaries of experiment output: delivery rates, ANOVA and pairwise tests."""
from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np

from .harness import CONDITIONS, SNAPSHOTS, ConfidenceTrace, TrialResult
from .stats import DegenerateSampleError, anova_f, pairwise_welch, pooled_t, welch_t


def deliveries(results: Sequence[TrialResult]) -> np.ndarray:
    return np.array([float(r.delivered) for r in results])


def summarize_exp1(by_env: Mapping[str, Mapping[str, Sequence[TrialResult]]]) -> dict:
    """``by_env[environment][condition]`` -> per-environment statistics.

    Includes the pooled static-vs-dynamic comparison when both are present.
    """
    out: dict = {}
    for env, groups in by_env.items():
        samples = {c: deliveries(groups[c]) for c in CONDITIONS if c in groups}
        entry: dict = {"mean": {c: float(s.mean()) for c, s in samples.items()},
                       "delivered": {c: int(s.sum()) for c, s in samples.items()}}
        if len(samples) >= 2:
            try:
                entry["anova"] = anova_f(list(samples.values()))
            except DegenerateSampleError:
                entry["anova"] = None
            entry["pairwise"] = pairwise_welch(samples)
        out[env] = entry
    if {"static", "dynamic"} <= set(by_env):
        a = np.concatenate([deliveries(v) for v in by_env["static"].values()])
        b = np.concatenate([deliveries(v) for v in by_env["dynamic"].values()])
        out["environment_effect"] = pooled_t(a, b)
    return out


def trace_confidences(traces: Sequence[ConfidenceTrace], snapshot: str) -> np.ndarray:
    return np.array([tr.snapshots[snapshot][1] for tr in traces])


def summarize_exp2(by_schedule: Mapping[str, Sequence[ConfidenceTrace]]) -> dict:
    out = {}
    for name in SNAPSHOTS:
        ehe = trace_confidences(by_schedule["ehe"], name)
        heh = trace_confidences(by_schedule["heh"], name)
        try:
            test = welch_t(ehe, heh)
        except DegenerateSampleError:
            test = None
        out[name] = {"ehe": float(ehe.mean()), "heh": float(heh.mean()),
                     "ehe_sd": float(ehe.std(ddof=1)), "heh_sd": float(heh.std(ddof=1)),
                     "test": test}
    return out


def format_exp1(summary: dict) -> str:
    lines = []
    for env, entry in summary.items():
        if env == "environment_effect":
            t = entry
            lines.append(f"static vs dynamic (pooled): t({t.df:.0f})={t.t:.2f}, p={t.p:.3g}")
            continue
        means = ", ".join(f"{c}={m:.2f}" for c, m in entry["mean"].items())
        lines.append(f"[{env}] delivery rate: {means}")
        if entry.get("anova") is not None:
            f = entry["anova"]
            lines.append(f"  ANOVA F({f.df_between},{f.df_within})={f.f:.2f}, p={f.p:.3g}")
        for (a, b), (t, p_adj) in entry.get("pairwise", {}).items():
            lines.append(f"  {a} vs {b}: t={t.t:.2f}, df={t.df:.1f}, p={t.p:.3g}, "
                         f"holm p={p_adj:.3g}")
    return "\n".join(lines)


def format_exp2(summary: dict) -> str:
    lines = []
    for name, e in summary.items():
        t = e["test"]
        stat = "degenerate" if t is None else f"t({t.df:.1f})={t.t:.2f}, p={t.p:.3g}"
        lines.append(f"{name:>8}: ehe={e['ehe']:.3f}±{e['ehe_sd']:.3f} "
                     f"heh={e['heh']:.3f}±{e['heh_sd']:.3f}  {stat}")
    return "\n".join(lines)
