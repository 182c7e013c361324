"""Welch t-test, pooled t-test, one-way ANOVA and Holm-corrected pairwise tests."""
from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Mapping, Sequence

import numpy as np
from scipy import special


class DegenerateSampleError(ValueError):
    pass


@dataclass(frozen=True)
class TTest:
    t: float
    df: float
    p: float


@dataclass(frozen=True)
class FTest:
    f: float
    df_between: int
    df_within: int
    p: float


def _as_sample(x: Sequence[float], name: str) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    if a.ndim != 1 or a.size < 2:
        raise DegenerateSampleError(f"{name} needs at least two observations")
    if not np.all(np.isfinite(a)):
        raise DegenerateSampleError(f"{name} contains non-finite values")
    return a


def _two_sided_p(t: float, df: float) -> float:
    return float(2.0 * special.stdtr(df, -abs(t)))


def welch_t(sample_a: Sequence[float], sample_b: Sequence[float]) -> TTest:
    """Unequal-variance t-test with Welch-Satterthwaite degrees of freedom.

    Two samples that are each constant with the same value give ``t=0, p=1``.
    """
    a, b = _as_sample(sample_a, "sample_a"), _as_sample(sample_b, "sample_b")
    na, nb = a.size, b.size
    va, vb = a.var(ddof=1) / na, b.var(ddof=1) / nb
    diff = a.mean() - b.mean()
    se2 = va + vb
    if se2 == 0.0:
        if diff == 0.0:
            return TTest(0.0, float(na + nb - 2), 1.0)
        raise DegenerateSampleError("both samples have zero variance but different means")
    t = diff / math.sqrt(se2)
    df = se2 ** 2 / (va ** 2 / (na - 1) + vb ** 2 / (nb - 1))
    return TTest(float(t), float(df), _two_sided_p(t, df))


def pooled_t(sample_a: Sequence[float], sample_b: Sequence[float]) -> TTest:
    """Student's equal-variance two-sample t-test."""
    a, b = _as_sample(sample_a, "sample_a"), _as_sample(sample_b, "sample_b")
    na, nb = a.size, b.size
    df = na + nb - 2
    sp2 = ((na - 1) * a.var(ddof=1) + (nb - 1) * b.var(ddof=1)) / df
    diff = a.mean() - b.mean()
    if sp2 == 0.0:
        if diff == 0.0:
            return TTest(0.0, float(df), 1.0)
        raise DegenerateSampleError("zero pooled variance with different means")
    t = diff / math.sqrt(sp2 * (1.0 / na + 1.0 / nb))
    return TTest(float(t), float(df), _two_sided_p(t, df))


def anova_f(samples: Sequence[Sequence[float]]) -> FTest:
    groups = [_as_sample(s, f"group {i}") for i, s in enumerate(samples)]
    k = len(groups)
    if k < 2:
        raise DegenerateSampleError("ANOVA needs at least two groups")
    n = sum(g.size for g in groups)
    grand = np.concatenate(groups).mean()
    ss_between = sum(g.size * (g.mean() - grand) ** 2 for g in groups)
    ss_within = sum(((g - g.mean()) ** 2).sum() for g in groups)
    df_b, df_w = k - 1, n - k
    if ss_within == 0.0:
        raise DegenerateSampleError("zero within-group variance; F is undefined")
    f = (ss_between / df_b) / (ss_within / df_w)
    return FTest(float(f), df_b, df_w, float(special.fdtrc(df_b, df_w, f)))


def holm(p_values: Sequence[float]) -> list[float]:
    """Holm step-down adjusted p-values, in input order."""
    m = len(p_values)
    order = sorted(range(m), key=lambda i: p_values[i])
    adjusted = [0.0] * m
    running = 0.0
    for rank, i in enumerate(order):
        running = max(running, min(1.0, (m - rank) * p_values[i]))
        adjusted[i] = running
    return adjusted


def pairwise_welch(groups: Mapping[str, Sequence[float]]) -> dict[tuple[str, str], tuple[TTest, float]]:
    """All pairwise Welch tests with Holm-adjusted p-values."""
    pairs = list(combinations(groups, 2))
    tests = []
    for a, b in pairs:
        try:
            tests.append(welch_t(groups[a], groups[b]))
        except DegenerateSampleError:
            # two constant, different samples: perfectly separated
            diff = float(np.mean(groups[a]) - np.mean(groups[b]))
            tests.append(TTest(math.copysign(math.inf, diff), math.nan, 0.0))
    adj = holm([t.p for t in tests])
    return {pair: (t, p) for pair, t, p in zip(pairs, tests, adj)}
