"""Evaluation metrics: per-class Dice score, Hausdorff distance, and the
Wilcoxon signed-rank test (exact by enumeration for small n, normal
approximation with tie correction for larger n)."""

import math
from dataclasses import dataclass

import numpy as np


def dice_score(pred, gt, k):
    """Hard Dice overlap 2|A∩B|/(|A|+|B|) for class k.

    Both masks empty for k -> 1.0 (nothing to get wrong); one empty -> 0.0.
    """
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"extent mismatch: {pred.shape} vs {gt.shape}")
    a = pred == k
    b = gt == k
    na, nb = int(a.sum()), int(b.sum())
    if na + nb == 0:
        return 1.0
    return 2.0 * int((a & b).sum()) / (na + nb)


def hausdorff(pred, gt, k):
    """Symmetric Hausdorff distance between class-k pixel sets, in pixels.

    Returns None (undefined) when either set is empty; callers exclude
    undefined entries from aggregates and report the count.
    """
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"extent mismatch: {pred.shape} vs {gt.shape}")
    pa = np.argwhere(pred == k).astype(np.float64)
    pb = np.argwhere(gt == k).astype(np.float64)
    if len(pa) == 0 or len(pb) == 0:
        return None
    d2 = ((pa[:, None, :] - pb[None, :, :]) ** 2).sum(axis=2)
    fwd = np.sqrt(d2.min(axis=1)).max()
    bwd = np.sqrt(d2.min(axis=0)).max()
    return float(max(fwd, bwd))


class DegeneratePairs(ValueError):
    pass


@dataclass(frozen=True)
class WilcoxonResult:
    statistic: float  # W+: sum of ranks of positive differences
    p_value: float  # two-sided
    n: int  # pairs remaining after discarding zero differences
    exact: bool


EXACT_LIMIT = 20


def _midranks(values):
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values))
    i = 0
    sv = values[order]
    while i < len(sv):
        j = i
        while j + 1 < len(sv) and sv[j + 1] == sv[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def wilcoxon_signed_rank(a, b):
    """Two-sided Wilcoxon signed-rank test on paired samples.

    Zero differences are discarded; |differences| are ranked with midranks
    for ties. Exact p-value by enumerating all 2^n sign assignments for
    n <= 20 (via a subset-sum count), normal approximation with tie
    correction above.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("paired samples must have equal length")
    d = a - b
    d = d[d != 0]
    n = len(d)
    if n == 0:
        raise DegeneratePairs("all paired differences are zero")
    if n < 5:
        raise ValueError(f"need >= 5 nonzero differences, got {n}")
    ranks = _midranks(np.abs(d))
    w_plus = float(ranks[d > 0].sum())

    if n <= EXACT_LIMIT:
        # midranks are multiples of 0.5: scale by 2 for integer subset sums
        scaled = np.round(ranks * 2).astype(np.int64)
        total = int(scaled.sum())
        counts = np.zeros(total + 1, dtype=np.float64)
        counts[0] = 1.0
        for r in scaled:
            counts[r:] += counts[: total + 1 - r].copy()
        counts /= 2.0**n
        w2 = int(round(w_plus * 2))
        p_low = counts[: w2 + 1].sum()
        p_high = counts[w2:].sum()
        p = min(1.0, 2.0 * min(p_low, p_high))
        return WilcoxonResult(w_plus, float(p), n, True)

    mean = n * (n + 1) / 4.0
    # tie correction: subtract sum(t^3 - t)/48 from the null variance
    _, tie_counts = np.unique(np.abs(d), return_counts=True)
    correction = float(((tie_counts**3 - tie_counts).sum()) / 48.0)
    var = n * (n + 1) * (2 * n + 1) / 24.0 - correction
    z = (w_plus - mean) / math.sqrt(var)
    p = 2.0 * (1.0 - 0.5 * (1.0 + math.erf(abs(z) / math.sqrt(2.0))))
    return WilcoxonResult(w_plus, min(1.0, float(p)), n, False)
