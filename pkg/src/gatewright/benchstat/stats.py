"""Statistical tests used to compare benchmark outcomes.

Everything here is self-contained: the normal quantile comes from a rational
approximation refined with one Halley step, the chi-squared survival function
from the regularized incomplete gamma, and the exact Mann-Whitney branch from
full enumeration of index assignments. No external numerics dependency.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

from gatewright.errors import GatewrightError


class InvalidCounts(GatewrightError):
    """Counts are not a valid set of trial/success integers."""


class OutOfRange(GatewrightError):
    """A proportion or p-value lies outside [0, 1]."""


class MissingCell(GatewrightError):
    """The method-by-task matrix is ragged or has empty cells."""


class TooFewMethods(GatewrightError):
    """The comparison needs at least 3 methods and 2 tasks."""


class EmptySample(GatewrightError):
    """Both samples must contain at least one observation."""


SIDEDNESS = ("two-sided", "greater", "less")


@dataclass(frozen=True)
class StatResult:
    """Outcome of a statistical test.

    ``effect`` carries a test-specific companion number (e.g. the odds ratio
    for Fisher's exact test); ``ranks`` is populated only by ``friedman`` and
    holds the per-method average rank, aligned with the input rows.
    """

    statistic: float
    p_value: float
    effect: float | None = None
    ranks: tuple[float, ...] | None = None


# ---------------------------------------------------------------------------
# Normal distribution helpers


def normal_quantile(p: float) -> float:
    """Inverse standard normal CDF.

    Rational approximation (relative error below 1.15e-9) followed by one
    Halley refinement against the exact CDF, giving near machine precision.
    """
    if not 0.0 < p < 1.0:
        raise OutOfRange(f"quantile argument must lie in (0, 1), got {p}")
    # Refinement via erfc is only well-conditioned in the lower tail; mirror
    # the upper half (1 - p is exact for p >= 0.5).
    if p > 0.5:
        return -normal_quantile(1.0 - p)

    a = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
         1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
    b = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
         6.680131188771972e+01, -1.328068155288572e+01)
    c = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
         -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
    d = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
         3.754408661907416e+00)

    p_low = 0.02425
    if p < p_low:
        q = math.sqrt(-2.0 * math.log(p))
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / \
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0)
    elif p <= 1.0 - p_low:
        q = p - 0.5
        r = q * q
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q / \
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0)
    else:
        q = math.sqrt(-2.0 * math.log(1.0 - p))
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / \
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0)

    err = 0.5 * math.erfc(-x / math.sqrt(2.0)) - p
    u = err * math.sqrt(2.0 * math.pi) * math.exp(x * x / 2.0)
    return x - u / (1.0 + x * u / 2.0)


def normal_sf(z: float) -> float:
    """Standard normal survival function P(Z > z)."""
    return 0.5 * math.erfc(z / math.sqrt(2.0))


# ---------------------------------------------------------------------------
# Chi-squared survival function via the regularized incomplete gamma


def _gamma_p_series(a: float, x: float) -> float:
    term = 1.0 / a
    total = term
    n = a
    for _ in range(500):
        n += 1.0
        term *= x / n
        total += term
        if abs(term) < abs(total) * 1e-16:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_q_contfrac(a: float, x: float) -> float:
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 500):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return h * math.exp(-x + a * math.log(x) - math.lgamma(a))


def chi2_sf(x: float, df: int) -> float:
    """Survival function of the chi-squared distribution with df degrees."""
    if df < 1:
        raise OutOfRange(f"degrees of freedom must be >= 1, got {df}")
    if x <= 0.0:
        return 1.0
    a = df / 2.0
    half = x / 2.0
    if half < a + 1.0:
        return max(0.0, min(1.0, 1.0 - _gamma_p_series(a, half)))
    return max(0.0, min(1.0, _gamma_q_contfrac(a, half)))


# ---------------------------------------------------------------------------
# Tests


def wilson_ci(k: int, n: int, confidence: float = 0.95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if not (isinstance(k, int) and isinstance(n, int)) or n < 1 or not 0 <= k <= n:
        raise InvalidCounts(f"need integers 0 <= k <= n with n >= 1, got k={k}, n={n}")
    if not 0.0 < confidence < 1.0:
        raise OutOfRange(f"confidence must lie in (0, 1), got {confidence}")
    z = normal_quantile((1.0 + confidence) / 2.0)
    phat = k / n
    z2n = z * z / n
    denom = 1.0 + z2n
    center = (phat + z2n / 2.0) / denom
    half = z * math.sqrt(phat * (1.0 - phat) / n + z2n / (4.0 * n)) / denom
    # The score equation's roots are exactly 0 (k=0) and 1 (k=n); snap them
    # so boundary cases are not polluted by rounding noise.
    low = 0.0 if k == 0 else max(0.0, center - half)
    high = 1.0 if k == n else min(1.0, center + half)
    return (low, high)


def fisher_exact(k1: int, n1: int, k2: int, n2: int) -> StatResult:
    """Two-sided Fisher exact test on successes k1/n1 vs k2/n2.

    The two-sided p-value sums the hypergeometric probabilities of every
    table (with the same margins) at most as probable as the observed one.
    Probabilities are exact rationals, so no tolerance fudge is needed.
    """
    for k, n in ((k1, n1), (k2, n2)):
        if not (isinstance(k, int) and isinstance(n, int)) or n < 0 or not 0 <= k <= n:
            raise InvalidCounts(f"need integers 0 <= k <= n, got k={k}, n={n}")
    if n1 + n2 < 1:
        raise InvalidCounts("at least one trial required")

    m = k1 + k2
    total = math.comb(n1 + n2, m)
    lo = max(0, m - n2)
    hi = min(n1, m)
    probs = {a: Fraction(math.comb(n1, a) * math.comb(n2, m - a), total)
             for a in range(lo, hi + 1)}
    observed = probs[k1]
    p = float(sum(q for q in probs.values() if q <= observed))

    misses1, misses2 = n1 - k1, n2 - k2
    if k2 == 0 or misses1 == 0:
        odds = math.inf if (k1 > 0 and misses2 > 0) else math.nan
    else:
        odds = (k1 * misses2) / (misses1 * k2)
    return StatResult(statistic=odds, p_value=min(1.0, p))


def cohens_h(p1: float, p2: float) -> float:
    """Effect size for the difference between two proportions."""
    for p in (p1, p2):
        if not 0.0 <= p <= 1.0:
            raise OutOfRange(f"proportions must lie in [0, 1], got {p}")
    return 2.0 * math.asin(math.sqrt(p1)) - 2.0 * math.asin(math.sqrt(p2))


def _average_ranks(values: list[float]) -> list[float]:
    """Ranks 1..n with tied values sharing their average rank."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = (i + j) / 2.0 + 1.0
        for idx in order[i:j + 1]:
            ranks[idx] = avg
        i = j + 1
    return ranks


def _tie_term(values: list[float]) -> float:
    """Sum of t^3 - t over groups of tied values."""
    counts: dict[float, int] = {}
    for v in values:
        counts[v] = counts.get(v, 0) + 1
    return float(sum(t ** 3 - t for t in counts.values() if t > 1))


def friedman(matrix: list[list[float]]) -> StatResult:
    """Friedman test over a methods-by-tasks matrix of scores.

    Within each task the methods are ranked (rank 1 = best, i.e. highest
    score; ties share average ranks), the chi-squared statistic uses the
    standard tie-correction denominator, and the per-method average ranks
    come back in ``ranks`` aligned with the input rows.
    """
    k = len(matrix)
    if k < 3:
        raise TooFewMethods(f"need at least 3 methods, got {k}")
    widths = {len(row) for row in matrix}
    if len(widths) != 1:
        raise MissingCell("ragged matrix: rows have differing task counts")
    n = widths.pop()
    if n < 2:
        raise TooFewMethods(f"need at least 2 tasks, got {n}")
    for row in matrix:
        for cell in row:
            if cell is None or (isinstance(cell, float) and math.isnan(cell)):
                raise MissingCell("matrix contains an empty cell")

    rank_sums = [0.0] * k
    ties = 0.0
    for task in range(n):
        column = [matrix[method][task] for method in range(k)]
        # Rank 1 is the best method, so rank the negated scores ascending.
        col_ranks = _average_ranks([-v for v in column])
        ties += _tie_term(column)
        for method in range(k):
            rank_sums[method] += col_ranks[method]

    avg_ranks = tuple(s / n for s in rank_sums)
    correction = 1.0 - ties / (k * (k * k - 1) * n)
    if correction <= 0.0:
        return StatResult(statistic=0.0, p_value=1.0, ranks=avg_ranks)
    ssbn = sum(s * s for s in rank_sums)
    chisq = (12.0 / (k * n * (k + 1)) * ssbn - 3.0 * n * (k + 1)) / correction
    chisq = max(0.0, chisq)
    return StatResult(statistic=chisq, p_value=chi2_sf(chisq, k - 1), ranks=avg_ranks)


EXACT_ENUMERATION_LIMIT = 400


def _exact_mwu_p(ranks: list[float], n_a: int, u_obs: float, sidedness: str) -> float:
    """Permutation p-value by enumerating all assignments of group A indices."""
    offset = n_a * (n_a + 1) / 2.0
    total = 0
    count_ge = 0
    count_le = 0
    eps = 1e-9
    for subset in itertools.combinations(range(len(ranks)), n_a):
        u = sum(ranks[i] for i in subset) - offset
        total += 1
        if u >= u_obs - eps:
            count_ge += 1
        if u <= u_obs + eps:
            count_le += 1
    p_greater = count_ge / total
    p_less = count_le / total
    if sidedness == "greater":
        return p_greater
    if sidedness == "less":
        return p_less
    return min(1.0, 2.0 * min(p_greater, p_less))


def mann_whitney(a: list[float], b: list[float], sidedness: str = "two-sided") -> StatResult:
    """Mann-Whitney U test with tie-adjusted ranks.

    The U statistic is reported for sample ``a`` ("greater" means a tends to
    exceed b). When n_a*n_b <= 400 the p-value is exact, from full
    enumeration of the permutation distribution of the observed ranks;
    otherwise the normal approximation with tie correction and a 0.5
    continuity correction is used.
    """
    if not a or not b:
        raise EmptySample("both samples must be non-empty")
    if sidedness not in SIDEDNESS:
        raise OutOfRange(f"sidedness must be one of {SIDEDNESS}, got {sidedness!r}")

    n_a, n_b = len(a), len(b)
    pooled = list(a) + list(b)
    ranks = _average_ranks(pooled)
    r_a = sum(ranks[:n_a])
    u_a = r_a - n_a * (n_a + 1) / 2.0

    if n_a * n_b <= EXACT_ENUMERATION_LIMIT:
        p = _exact_mwu_p(ranks, n_a, u_a, sidedness)
        return StatResult(statistic=u_a, p_value=p)

    total = n_a + n_b
    mu = n_a * n_b / 2.0
    tie = _tie_term(pooled)
    var = n_a * n_b / 12.0 * ((total + 1) - tie / (total * (total - 1)))
    if var <= 0.0:
        return StatResult(statistic=u_a, p_value=1.0)
    sd = math.sqrt(var)
    if sidedness == "greater":
        p = normal_sf((u_a - mu - 0.5) / sd)
    elif sidedness == "less":
        p = 1.0 - normal_sf((u_a - mu + 0.5) / sd)
    else:
        z = (abs(u_a - mu) - 0.5) / sd
        p = min(1.0, 2.0 * normal_sf(z))
    return StatResult(statistic=u_a, p_value=min(1.0, max(0.0, p)))


def adjust_pvalues(ps: list[float], method: str) -> list[float]:
    """Multiplicity adjustment: Bonferroni or Benjamini-Hochberg step-up."""
    for p in ps:
        if not 0.0 <= p <= 1.0:
            raise OutOfRange(f"p-values must lie in [0, 1], got {p}")
    name = method.lower()
    if name not in ("bonferroni", "bh"):
        raise OutOfRange(f"method must be 'Bonferroni' or 'BH', got {method!r}")
    m = len(ps)
    if m == 0:
        return []
    if name == "bonferroni":
        return [min(1.0, m * p) for p in ps]

    order = sorted(range(m), key=lambda i: ps[i])
    adjusted = [0.0] * m
    running = 1.0
    for pos in range(m - 1, -1, -1):
        idx = order[pos]
        running = min(running, m * ps[idx] / (pos + 1))
        adjusted[idx] = min(1.0, running)
    return adjusted
