"""Rank statistics and arm comparison for campaign results.

Small-sample comparisons (the usual 5-repetition design) use exact
Mann-Whitney enumeration; larger samples fall back to the normal
approximation with tie correction.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

from .errors import BaselineNotFound, EmptySample

_ALTERNATIVES = ("two-sided", "greater", "less")

_EXACT_LIMIT = 64  # enumerate when |xs|*|ys| <= this


def _doubled_midranks(pooled: list[float]) -> list[int]:
    """Midranks of the pooled sample, doubled so ties stay integral."""
    order = sorted(range(len(pooled)), key=lambda i: pooled[i])
    ranks2 = [0] * len(pooled)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and pooled[order[j + 1]] == pooled[order[i]]:
            j += 1
        doubled = (i + 1) + (j + 1)  # 2 * average rank of the tie group
        for k in range(i, j + 1):
            ranks2[order[k]] = doubled
        i = j + 1
    return ranks2


def _tie_group_sizes(pooled: list[float]) -> list[int]:
    sizes = []
    for _, group in itertools.groupby(sorted(pooled)):
        sizes.append(sum(1 for _ in group))
    return sizes


def _normal_cdf(z: float) -> float:
    return 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))


def mann_whitney_u(
    xs: list[float], ys: list[float], alternative: str = "two-sided"
) -> tuple[float, float]:
    """Mann-Whitney U for xs versus ys; returns (U of xs, p-value).

    Ties share midranks.  When |xs|*|ys| <= 64 the p-value is exact over
    all label assignments; otherwise the normal approximation with tie
    correction and continuity correction is used.  "greater" asks whether
    xs tends larger than ys.
    """
    if alternative not in _ALTERNATIVES:
        raise ValueError(f"alternative must be one of {_ALTERNATIVES}")
    if not xs or not ys:
        raise EmptySample("mann_whitney_u needs non-empty samples")

    m, n = len(xs), len(ys)
    pooled = [float(v) for v in xs] + [float(v) for v in ys]
    ranks2 = _doubled_midranks(pooled)
    u2_obs = sum(ranks2[:m]) - m * (m + 1)  # doubled U statistic
    u_obs = u2_obs / 2.0

    if m * n <= _EXACT_LIMIT:
        total = math.comb(m + n, m)
        le = ge = 0
        for combo in itertools.combinations(range(m + n), m):
            u2 = sum(ranks2[i] for i in combo) - m * (m + 1)
            if u2 <= u2_obs:
                le += 1
            if u2 >= u2_obs:
                ge += 1
        p_le = le / total
        p_ge = ge / total
    else:
        big_n = m + n
        tie_term = sum(t**3 - t for t in _tie_group_sizes(pooled))
        variance = (m * n / 12.0) * (
            (big_n + 1) - tie_term / (big_n * (big_n - 1))
        )
        if variance <= 0:  # every pooled value identical
            p_le = p_ge = 1.0
        else:
            sd = math.sqrt(variance)
            mean = m * n / 2.0
            p_ge = 1.0 - _normal_cdf((u_obs - 0.5 - mean) / sd)
            p_le = _normal_cdf((u_obs + 0.5 - mean) / sd)

    if alternative == "greater":
        p = p_ge
    elif alternative == "less":
        p = p_le
    else:
        p = min(1.0, 2.0 * min(p_le, p_ge))
    return u_obs, min(1.0, max(0.0, p))


@dataclass
class ArmComparison:
    arm: str
    u_stat: float
    p_value: float
    significant: bool


@dataclass
class ComparisonReport:
    benchmark: str
    baseline: str
    arms: dict[str, list[float]]
    normalized: dict[str, float]
    pairs: list[ArmComparison] = field(default_factory=list)
    alpha: float = 0.05

    def to_obj(self) -> dict:
        return {
            "benchmark": self.benchmark,
            "baseline": self.baseline,
            "alpha": self.alpha,
            "arms": {k: list(v) for k, v in sorted(self.arms.items())},
            "normalized": {k: v for k, v in sorted(self.normalized.items())},
            "pairs": [
                {
                    "arm": p.arm,
                    "u_stat": p.u_stat,
                    "p_value": p.p_value,
                    "significant": p.significant,
                }
                for p in self.pairs
            ],
        }

    def render(self) -> str:
        lines = [f"benchmark {self.benchmark} (baseline {self.baseline})"]
        for name in sorted(self.arms):
            values = self.arms[name]
            mean = sum(values) / len(values)
            star = ""
            for p in self.pairs:
                if p.arm == name and p.significant:
                    star = " *"
            lines.append(
                f"  {name:12s} mean {mean:10.2f}  "
                f"normalized {self.normalized[name]:6.3f}{star}"
            )
        for p in self.pairs:
            lines.append(
                f"  {p.arm} vs {self.baseline}: U={p.u_stat:.1f} p={p.p_value:.4f}"
                + ("  (significant)" if p.significant else "")
            )
        return "\n".join(lines) + "\n"


def _coverage_values(results: list) -> list[float]:
    values = []
    for r in results:
        if hasattr(r, "coverage"):
            values.append(float(len(r.coverage)))
        else:
            values.append(float(r))
    return values


def compare_arms(
    results: dict[str, list],
    baseline: str,
    benchmark: str = "",
    alpha: float = 0.05,
    alternative: str = "two-sided",
) -> ComparisonReport:
    """Build a normalized comparison of named arms against a baseline arm.

    Each arm maps to a list of campaign results (or plain coverage values,
    one per repetition).  Arm means are normalized by the baseline mean and
    every non-baseline arm is tested against the baseline.
    """
    if baseline not in results:
        raise BaselineNotFound(f"baseline arm {baseline!r} not in results")
    arms = {name: _coverage_values(lst) for name, lst in results.items()}
    for name, values in arms.items():
        if not values:
            raise EmptySample(f"arm {name!r} has no repetitions")

    if not benchmark:
        for lst in results.values():
            for r in lst:
                if hasattr(r, "target_id"):
                    benchmark = r.target_id
                    break
            if benchmark:
                break

    base_mean = sum(arms[baseline]) / len(arms[baseline])
    normalized = {
        name: (sum(vals) / len(vals)) / base_mean if base_mean else float("nan")
        for name, vals in arms.items()
    }
    pairs = []
    for name in sorted(arms):
        if name == baseline:
            continue
        u, p = mann_whitney_u(arms[name], arms[baseline], alternative)
        pairs.append(ArmComparison(name, u, p, p < alpha))
    return ComparisonReport(
        benchmark=benchmark or "unknown",
        baseline=baseline,
        arms=arms,
        normalized=normalized,
        pairs=pairs,
        alpha=alpha,
    )
