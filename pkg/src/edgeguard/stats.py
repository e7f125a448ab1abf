"""Cluster-level statistics: ANOVA, Tukey HSD, Welch's t, Pearson, KS,
Cohen's d and a histogram separability index.

p-values come from an in-house regularized incomplete beta function
(modified Lentz continued fraction, accurate to ~1e-10 in double precision),
so no statistics package is needed at runtime.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import DegenerateInputError, DimensionError, ParameterError, SampleSizeError

# -- special functions ------------------------------------------------------------

_TINY = 1e-300


def _betacf(a: float, b: float, x: float, max_iter: int = 500, tol: float = 1e-15) -> float:
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = _TINY if abs(d) < _TINY else d
        c = 1.0 + aa / c
        c = _TINY if abs(c) < _TINY else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = _TINY if abs(d) < _TINY else d
        c = 1.0 + aa / c
        c = _TINY if abs(c) < _TINY else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < tol:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if a <= 0 or b <= 0:
        raise ParameterError("betainc needs a, b > 0")
    if not 0.0 <= x <= 1.0:
        raise ParameterError("betainc needs 0 <= x <= 1")
    if x == 0.0 or x == 1.0:
        return x
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(log_front)
    # the continued fraction converges fast on this side of the mean
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def f_sf(F: float, d1: float, d2: float) -> float:
    """Survival function of the F(d1, d2) distribution."""
    if F <= 0:
        return 1.0
    if math.isinf(F):
        return 0.0
    return betainc(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * F))


def t_sf_two_sided(t: float, df: float) -> float:
    if math.isinf(t):
        return 0.0
    return betainc(df / 2.0, 0.5, df / (df + t * t))


# -- ANOVA --------------------------------------------------------------------------


@dataclass(frozen=True)
class AnovaResult:
    ss_between: float
    ss_within: float
    ss_total: float
    df_between: int
    df_within: int
    ms_between: float
    ms_within: float
    F: float
    p: float
    eta_squared: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _groups(groups) -> list[np.ndarray]:
    out = [np.asarray(g, dtype=float).ravel() for g in groups]
    if len(out) < 2:
        raise SampleSizeError("need at least two groups")
    for i, g in enumerate(out):
        if g.size < 2:
            raise SampleSizeError(f"group {i} has {g.size} observation(s); at least 2 required")
        if not np.all(np.isfinite(g)):
            raise DimensionError(f"group {i} contains non-finite values")
    return out


def one_way_anova(groups: Sequence) -> AnovaResult:
    gs = _groups(groups)
    allv = np.concatenate(gs)
    grand = allv.mean()
    ssb = math.fsum(g.size * (g.mean() - grand) ** 2 for g in gs)
    ssw = math.fsum(float(np.sum((g - g.mean()) ** 2)) for g in gs)
    sst = float(np.sum((allv - grand) ** 2))
    if ssw == 0 and ssb == 0:
        raise DegenerateInputError("all observations are identical")
    dfb, dfw = len(gs) - 1, allv.size - len(gs)
    msb, msw = ssb / dfb, ssw / dfw
    F = msb / msw if msw > 0 else math.inf
    return AnovaResult(ssb, ssw, sst, dfb, dfw, msb, msw, float(F), float(f_sf(F, dfb, dfw)), ssb / (ssb + ssw))


# -- Tukey HSD ----------------------------------------------------------------------

# Studentized range critical values q(0.05; k, df), k = 2..12
Q_DF = (2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 19, 20, 24, 30, 40, 60, 120, math.inf)
Q_05 = {
    2: (6.0849, 8.3308, 9.7980, 10.8811, 11.7343, 12.4349, 13.0273, 13.5390, 13.9885, 14.3886, 14.7487),
    3: (4.5007, 5.9096, 6.8245, 7.5017, 8.0371, 8.4783, 8.8525, 9.1766, 9.4620, 9.7166, 9.9460),
    4: (3.9265, 5.0402, 5.7571, 6.2870, 6.7064, 7.0526, 7.3465, 7.6015, 7.8263, 8.0271, 8.2083),
    5: (3.6354, 4.6017, 5.2183, 5.6731, 6.0329, 6.3299, 6.5823, 6.8014, 6.9947, 7.1674, 7.3234),
    6: (3.4605, 4.3392, 4.8956, 5.3049, 5.6284, 5.8953, 6.1222, 6.3192, 6.4931, 6.6485, 6.7890),
    7: (3.3441, 4.1649, 4.6813, 5.0601, 5.3591, 5.6057, 5.8153, 5.9973, 6.1579, 6.3016, 6.4314),
    8: (3.2612, 4.0410, 4.5288, 4.8858, 5.1672, 5.3991, 5.5962, 5.7673, 5.9183, 6.0533, 6.1753),
    9: (3.1992, 3.9485, 4.4149, 4.7554, 5.0235, 5.2444, 5.4319, 5.5947, 5.7384, 5.8669, 5.9830),
    10: (3.1511, 3.8768, 4.3266, 4.6543, 4.9120, 5.1242, 5.3042, 5.4605, 5.5984, 5.7217, 5.8331),
    11: (3.1127, 3.8196, 4.2561, 4.5736, 4.8230, 5.0281, 5.2021, 5.3531, 5.4863, 5.6054, 5.7130),
    12: (3.0813, 3.7729, 4.1987, 4.5077, 4.7502, 4.9496, 5.1187, 5.2653, 5.3946, 5.5102, 5.6146),
    13: (3.0552, 3.7341, 4.1509, 4.4529, 4.6897, 4.8842, 5.0491, 5.1921, 5.3181, 5.4308, 5.5326),
    14: (3.0332, 3.7014, 4.1105, 4.4066, 4.6385, 4.8290, 4.9903, 5.1301, 5.2534, 5.3636, 5.4631),
    15: (3.0143, 3.6734, 4.0760, 4.3670, 4.5947, 4.7816, 4.9399, 5.0770, 5.1979, 5.3059, 5.4034),
    16: (2.9980, 3.6491, 4.0461, 4.3327, 4.5568, 4.7406, 4.8962, 5.0310, 5.1498, 5.2559, 5.3517),
    17: (2.9837, 3.6280, 4.0200, 4.3027, 4.5237, 4.7048, 4.8580, 4.9907, 5.1077, 5.2121, 5.3064),
    18: (2.9712, 3.6093, 3.9970, 4.2763, 4.4944, 4.6731, 4.8243, 4.9552, 5.0705, 5.1735, 5.2664),
    19: (2.9600, 3.5927, 3.9766, 4.2528, 4.4685, 4.6450, 4.7944, 4.9236, 5.0375, 5.1391, 5.2308),
    20: (2.9500, 3.5779, 3.9583, 4.2319, 4.4452, 4.6199, 4.7676, 4.8954, 5.0079, 5.1083, 5.1990),
    24: (2.9188, 3.5317, 3.9013, 4.1663, 4.3727, 4.5413, 4.6838, 4.8069, 4.9152, 5.0119, 5.0991),
    30: (2.8882, 3.4864, 3.8454, 4.1021, 4.3015, 4.4642, 4.6014, 4.7199, 4.8241, 4.9170, 5.0008),
    40: (2.8582, 3.4421, 3.7907, 4.0391, 4.2316, 4.3885, 4.5205, 4.6345, 4.7345, 4.8236, 4.9039),
    60: (2.8288, 3.3987, 3.7371, 3.9774, 4.1632, 4.3141, 4.4411, 4.5504, 4.6463, 4.7317, 4.8085),
    120: (2.8000, 3.3561, 3.6846, 3.9169, 4.0960, 4.2412, 4.3630, 4.4678, 4.5595, 4.6411, 4.7144),
    math.inf: (2.7718, 3.3145, 3.6332, 3.8577, 4.0301, 4.1696, 4.2863, 4.3865, 4.4741, 4.5519, 4.6217),
}


def q_critical(k: int, df: float) -> float:
    """q(0.05; k, df) from the bundled table, linear in 1/df between rows."""
    if not 2 <= k <= 12:
        raise ParameterError(f"bundled table covers 2..12 groups, got {k}")
    if df < 2:
        raise SampleSizeError(f"within-group df must be >= 2, got {df}")
    col = k - 2
    if df in Q_05:
        return Q_05[df][col]
    hi = next(d for d in Q_DF if d > df)
    lo = Q_DF[Q_DF.index(hi) - 1]
    x, x_lo, x_hi = 1.0 / df, 1.0 / lo, (0.0 if math.isinf(hi) else 1.0 / hi)
    t = (x - x_lo) / (x_hi - x_lo)
    return Q_05[lo][col] + t * (Q_05[hi][col] - Q_05[lo][col])


@dataclass(frozen=True)
class TukeyGrouping:
    names: tuple
    means: tuple
    significant: np.ndarray
    letters: dict
    q_alpha: float

    def subsets(self) -> dict:
        out: dict = {}
        for name, letters in self.letters.items():
            for letter in letters:
                out.setdefault(letter, []).append(name)
        return out


def tukey_hsd(groups: Sequence, q_alpha: float | None = None, names: Sequence | None = None) -> TukeyGrouping:
    """Pairwise HSD comparisons and homogeneous subsets.

    Groups are sorted by mean; every maximal run of consecutive groups that
    are pairwise non-significant becomes one subset, lettered A, B, ... in
    order of ascending mean.
    """
    gs = _groups(groups)
    res = one_way_anova(gs)
    k = len(gs)
    names = tuple(names) if names is not None else tuple(str(i) for i in range(k))
    if len(names) != k:
        raise DimensionError("one name per group required")
    q = q_critical(k, res.df_within) if q_alpha is None else q_alpha
    means = np.array([g.mean() for g in gs])
    sizes = np.array([g.size for g in gs])
    sig = np.zeros((k, k), dtype=bool)
    for i in range(k):
        for j in range(i + 1, k):
            hsd = q * math.sqrt(res.ms_within / 2.0 * (1.0 / sizes[i] + 1.0 / sizes[j]))
            sig[i, j] = sig[j, i] = abs(means[i] - means[j]) > hsd

    order = list(np.argsort(means, kind="mergesort"))
    runs = []
    for start in range(k):
        end = start
        while end + 1 < k and not any(sig[order[end + 1], order[m]] for m in range(start, end + 1)):
            end += 1
        if not runs or end > runs[-1][1]:
            runs.append((start, end))
    letters = {name: "" for name in names}
    for r, (start, end) in enumerate(runs):
        letter = _letter(r)
        for pos in range(start, end + 1):
            letters[names[order[pos]]] += letter
    return TukeyGrouping(names, tuple(float(m) for m in means), sig, letters, q)


def _letter(i: int) -> str:
    out = ""
    i += 1
    while i:
        i, rem = divmod(i - 1, 26)
        out = chr(ord("A") + rem) + out
    return out


# -- two-sample tests ---------------------------------------------------------------


@dataclass(frozen=True)
class WelchResult:
    t: float
    df: float
    p: float


def welch_t(a, b) -> WelchResult:
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size < 2 or b.size < 2:
        raise SampleSizeError("Welch's t needs at least two observations per sample")
    va, vb = a.var(ddof=1) / a.size, b.var(ddof=1) / b.size
    diff = a.mean() - b.mean()
    se2 = va + vb
    if se2 == 0:
        if diff == 0:
            return WelchResult(0.0, float(a.size + b.size - 2), 1.0)
        return WelchResult(math.copysign(math.inf, diff), float(a.size + b.size - 2), 0.0)
    t = diff / math.sqrt(se2)
    df = se2 ** 2 / (va ** 2 / (a.size - 1) + vb ** 2 / (b.size - 1))
    return WelchResult(float(t), float(df), float(t_sf_two_sided(t, df)))


def pearson(x, y) -> float:
    """Sample correlation, accumulated in exact rational arithmetic.

    Exact sums make the coefficient of an exactly proportional pair of
    series come out as exactly +/-1.0 instead of drifting by an ulp.
    """
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise DimensionError("x and y differ in length")
    if x.size < 2:
        raise SampleSizeError("need at least two points")
    fx = [Fraction(v) for v in x.tolist()]
    fy = [Fraction(v) for v in y.tolist()]
    n = len(fx)
    mx, my = sum(fx) / n, sum(fy) / n
    dx = [v - mx for v in fx]
    dy = [v - my for v in fy]
    sxx = sum(v * v for v in dx)
    syy = sum(v * v for v in dy)
    if sxx == 0 or syy == 0:
        raise DegenerateInputError("correlation is undefined for a constant series")
    sxy = sum(u * v for u, v in zip(dx, dy))
    r = math.sqrt(float(sxy * sxy / (sxx * syy)))
    return math.copysign(min(r, 1.0), float(sxy))


def ks_statistic(a, b) -> float:
    """sup |F_b - F_a| over the merged support."""
    a = np.sort(np.asarray(a, dtype=float).ravel())
    b = np.sort(np.asarray(b, dtype=float).ravel())
    if a.size == 0 or b.size == 0:
        raise SampleSizeError("both samples must be non-empty")
    support = np.concatenate([a, b])
    fa = np.searchsorted(a, support, side="right") / a.size
    fb = np.searchsorted(b, support, side="right") / b.size
    return float(np.max(np.abs(fb - fa)))


def cohens_d_from_moments(mean_a: float, sd_a: float, mean_b: float, sd_b: float) -> float:
    """``(mean_b - mean_a) / sqrt((sd_a^2 + sd_b^2) / 2)`` (unweighted pooling)."""
    sp = math.sqrt((sd_a ** 2 + sd_b ** 2) / 2.0)
    if sp == 0:
        raise DegenerateInputError("pooled standard deviation is zero")
    return (mean_b - mean_a) / sp


def cohens_d(a, b) -> float:
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size < 2 or b.size < 2:
        raise SampleSizeError("Cohen's d needs at least two observations per sample")
    return cohens_d_from_moments(a.mean(), a.std(ddof=1), b.mean(), b.std(ddof=1))


def separability_delta_i(scores_a, scores_b, bin_count: int = 32) -> float:
    """Histogram estimate of the integral of (p_b - p_a)^2 over shared bins."""
    a = np.asarray(scores_a, dtype=float).ravel()
    b = np.asarray(scores_b, dtype=float).ravel()
    if a.size == 0 or b.size == 0:
        raise SampleSizeError("both samples must be non-empty")
    if bin_count < 1:
        raise ParameterError("bin_count must be >= 1")
    lo = min(a.min(), b.min())
    hi = max(a.max(), b.max())
    if hi == lo:
        raise DegenerateInputError("combined score range is zero")
    edges = np.linspace(lo, hi, bin_count + 1)
    pa, _ = np.histogram(a, edges, density=True)
    pb, _ = np.histogram(b, edges, density=True)
    return float(np.sum((pb - pa) ** 2 * np.diff(edges)))


def describe(values) -> dict:
    v = np.asarray(values, dtype=float).ravel()
    return {"n": int(v.size), "mean": float(v.mean()) if v.size else math.nan,
            "sd": float(v.std(ddof=1)) if v.size > 1 else math.nan,
            "min": float(v.min()) if v.size else math.nan, "max": float(v.max()) if v.size else math.nan}
