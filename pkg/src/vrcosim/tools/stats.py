"""Wilcoxon signed-rank test and KS normality test."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats as sps
from statsmodels.stats.diagnostic import lilliefors

EXACT_MAX_N = 25
ALTERNATIVES = ("less", "greater", "two_sided")


@dataclass(frozen=True)
class WilcoxonResult:
    statistic: float  # W+, sum of ranks of positive differences x - y
    z_score: float
    p_value: float
    n: int  # after discarding zero differences
    method: str  # "exact" or "normal"
    degenerate: bool = False


def _signed_rank_counts(doubled_ranks: np.ndarray) -> np.ndarray:
    """Number of sign assignments giving each value of 2*W+ (subset-sum DP)."""
    total = int(doubled_ranks.sum())
    counts = np.zeros(total + 1, dtype=np.int64)
    counts[0] = 1
    for r in doubled_ranks:
        r = int(r)
        counts[r:] = counts[r:] + counts[: total + 1 - r].copy()
    return counts


def wilcoxon_signed_rank(x, y, alternative: str = "two_sided") -> WilcoxonResult:
    """Paired signed-rank test of ``x`` against ``y``.

    Zero differences are discarded and tied magnitudes get mid-ranks. For
    ``n <= 25`` the p-value comes from the exact permutation distribution of
    W+ (ties included, via doubled ranks); above that from the normal
    approximation with tie correction. ``z_score`` is always the normal
    approximation (no continuity correction). ``less`` tests x < y.
    """
    if alternative not in ALTERNATIVES:
        raise ValueError(f"alternative must be one of {ALTERNATIVES}")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-D and of equal length")
    d = x - y
    d = d[d != 0.0]
    n = len(d)
    if n == 0:
        return WilcoxonResult(0.0, 0.0, 1.0, 0, "exact", degenerate=True)
    ranks = sps.rankdata(np.abs(d))
    w_plus = float(ranks[d > 0].sum())

    mean = n * (n + 1) / 4.0
    _, tie_counts = np.unique(ranks, return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24.0 - float(np.sum(tie_counts ** 3 - tie_counts)) / 48.0
    z = (w_plus - mean) / math.sqrt(var) if var > 0 else 0.0

    if n <= EXACT_MAX_N:
        doubled = np.rint(2.0 * ranks).astype(np.int64)
        counts = _signed_rank_counts(doubled)
        w2 = int(round(2.0 * w_plus))
        denom = 2 ** n
        p_le = float(counts[: w2 + 1].sum()) / denom
        p_ge = float(counts[w2:].sum()) / denom
        method = "exact"
    else:
        p_le = float(sps.norm.cdf(z))
        p_ge = float(sps.norm.sf(z))
        method = "normal"
    if alternative == "less":
        p = p_le
    elif alternative == "greater":
        p = p_ge
    else:
        p = min(1.0, 2.0 * min(p_le, p_ge))
    return WilcoxonResult(w_plus, float(z), p, n, method)


@dataclass(frozen=True)
class KsResult:
    statistic: float
    p_value: float  # asymptotic Kolmogorov distribution
    lilliefors_p: float  # null distribution accounting for estimated mean/std
    n: int
    parameters_estimated: bool = True
    degenerate: bool = False


def ks_normality_test(sample) -> KsResult:
    """One-sample KS test against a normal with the sample's mean and std.

    Because the parameters are estimated, the asymptotic Kolmogorov p-value is
    conservative; the Lilliefors p-value is reported alongside it.
    """
    x = np.asarray(sample, dtype=float).ravel()
    n = len(x)
    if n < 3:
        raise ValueError("need at least 3 observations")
    std = x.std(ddof=1)
    if not std > 0:
        return KsResult(0.0, 1.0, 1.0, n, degenerate=True)
    z = np.sort((x - x.mean()) / std)
    cdf = sps.norm.cdf(z)
    i = np.arange(1, n + 1)
    d = float(max(np.max(i / n - cdf), np.max(cdf - (i - 1) / n)))
    p = float(sps.kstwobign.sf(math.sqrt(n) * d))
    lp = float(lilliefors(x, dist="norm", pvalmethod="approx")[1])
    return KsResult(d, p, lp, n)
