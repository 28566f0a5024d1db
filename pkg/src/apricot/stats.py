"""Group summaries, one-way ANOVA, Tukey HSD letter display and agreement R^2."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from string import ascii_lowercase

import numpy as np
from scipy import integrate, optimize, special


@dataclass(frozen=True)
class GroupSummary:
    label: str
    n: int
    mean: float
    std: float
    letters: str = ""


# -- special functions --------------------------------------------------------

def _beta_cf(a: float, b: float, x: float, max_iter: int = 500, eps: float = 1e-15) -> float:
    # modified Lentz evaluation of the incomplete beta continued fraction
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c, d = 1.0, 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > tiny else tiny)
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            break
    return h


def betainc_regularized(a: float, b: float, x: float) -> float:
    """I_x(a, b), the regularized incomplete beta function."""
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be positive")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_cf(a, b, x) / a
    return 1.0 - front * _beta_cf(b, a, 1.0 - x) / b


def f_sf(F: float, d1: float, d2: float) -> float:
    """Upper tail P(X > F) of the F(d1, d2) distribution."""
    if F <= 0:
        return 1.0
    if math.isinf(F):
        return 0.0
    return betainc_regularized(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * F))


# studentized range: inner integral over z on a fixed Gauss-Legendre grid
_GL_X, _GL_W = np.polynomial.legendre.leggauss(200)
_Z_LO, _Z_HI = -9.0, 9.0
_Z = 0.5 * (_Z_HI - _Z_LO) * _GL_X + 0.5 * (_Z_HI + _Z_LO)
_ZW = 0.5 * (_Z_HI - _Z_LO) * _GL_W * np.exp(-0.5 * _Z ** 2) / math.sqrt(2 * math.pi)


def _range_cdf(w, k: int):
    """P(range of k iid standard normals <= w), vectorized over w."""
    w = np.atleast_1d(np.asarray(w, dtype=float))
    inner = special.ndtr(_Z[None, :]) - special.ndtr(_Z[None, :] - w[:, None])
    return np.clip(k * (np.clip(inner, 0, 1) ** (k - 1)) @ _ZW, 0.0, 1.0)


def studentized_range_cdf(q: float, k: int, df: float) -> float:
    """P(Q <= q) for the studentized range with k means and df error dof.

    Q = range / s with s^2 ~ chi2(df)/df; the outer integral over s is done
    adaptively, the inner range integral on a fixed grid.
    """
    if q <= 0:
        return 0.0
    if math.isinf(df):
        return float(_range_cdf(q, k)[0])
    log_norm = (df / 2.0) * math.log(df) - math.lgamma(df / 2.0) - (df / 2.0 - 1.0) * math.log(2.0)

    def integrand(s):
        if s <= 0:
            return 0.0
        log_f = log_norm + (df - 1.0) * math.log(s) - df * s * s / 2.0
        return math.exp(log_f) * float(_range_cdf(q * s, k)[0])

    # s concentrates near 1 with spread ~ 1/sqrt(2 df)
    spread = 1.0 / math.sqrt(2.0 * df)
    hi = 1.0 + 40.0 * spread
    mid = max(1.0 - 8.0 * spread, 1e-6)
    a, _ = integrate.quad(integrand, 0.0, mid, limit=200, epsabs=1e-11)
    b, _ = integrate.quad(integrand, mid, hi, limit=200, epsabs=1e-11, points=[1.0])
    return min(1.0, a + b)


@lru_cache(maxsize=256)
def studentized_range_ppf(p: float, k: int, df: float) -> float:
    """Quantile of the studentized range, by root finding on the cdf."""
    if not 0 < p < 1:
        raise ValueError("p must lie in (0, 1)")
    hi = 10.0
    while studentized_range_cdf(hi, k, df) < p:
        hi *= 2.0
    return optimize.brentq(lambda q: studentized_range_cdf(q, k, df) - p, 1e-9, hi, xtol=1e-8)


# -- tests ---------------------------------------------------------------------

def _as_groups(groups) -> list[np.ndarray]:
    gs = [np.asarray(g, dtype=float) for g in groups]
    if len(gs) < 2 or min(g.size for g in gs) < 2:
        raise ValueError("need at least two groups of size >= 2")
    return gs


def anova_oneway(groups) -> tuple[float, float]:
    """(F, p) for a one-way fixed-effects ANOVA.

    Zero within-group variance gives F = inf, p = 0 when the means differ and
    F = 0, p = 1 when they do not.
    """
    gs = _as_groups(groups)
    k = len(gs)
    N = sum(g.size for g in gs)
    grand = np.concatenate(gs).mean()
    ss_between = sum(g.size * (g.mean() - grand) ** 2 for g in gs)
    ss_within = sum(((g - g.mean()) ** 2).sum() for g in gs)
    df_b, df_w = k - 1, N - k
    scale = max(1.0, float(np.abs(np.concatenate(gs)).max())) ** 2
    if ss_between <= 1e-24 * scale * N:
        return 0.0, 1.0
    if ss_within <= 1e-24 * scale * N:
        return math.inf, 0.0
    F = (ss_between / df_b) / (ss_within / df_w)
    return float(F), f_sf(F, df_b, df_w)


def tukey_hsd(groups, alpha: float = 0.01) -> np.ndarray:
    """Boolean k x k matrix: True where the pair differs significantly (Tukey-Kramer)."""
    gs = _as_groups(groups)
    k = len(gs)
    N = sum(g.size for g in gs)
    df = N - k
    mse = sum(((g - g.mean()) ** 2).sum() for g in gs) / df
    q_crit = studentized_range_ppf(1.0 - alpha, k, float(df))
    means = [g.mean() for g in gs]
    sig = np.zeros((k, k), dtype=bool)
    for i in range(k):
        for j in range(i + 1, k):
            diff = abs(means[i] - means[j])
            se = math.sqrt(mse / 2.0 * (1.0 / gs[i].size + 1.0 / gs[j].size))
            if se == 0.0:
                sig[i, j] = sig[j, i] = diff > 0
            else:
                sig[i, j] = sig[j, i] = diff / se > q_crit
    return sig


def _maximal_cliques(adj: np.ndarray) -> list[frozenset]:
    """Bron-Kerbosch with pivoting on a small dense adjacency matrix."""
    n = adj.shape[0]
    nbrs = [set(np.flatnonzero(adj[i])) - {i} for i in range(n)]
    out = []

    def expand(r, p, x):
        if not p and not x:
            out.append(frozenset(r))
            return
        pivot = max(p | x, key=lambda u: len(nbrs[u] & p))
        for v in list(p - nbrs[pivot]):
            expand(r | {v}, p & nbrs[v], x & nbrs[v])
            p = p - {v}
            x = x | {v}

    expand(set(), set(range(n)), set())
    return out


def letters_from_significance(means, sig: np.ndarray) -> list[str]:
    """Compact letter display from a significance matrix.

    Each maximal set of mutually non-different groups gets one letter, so two
    groups share a letter exactly when they are not significantly different.
    Letters are handed out walking the groups from the largest mean down.
    """
    k = len(means)
    order = sorted(range(k), key=lambda i: (-means[i], i))
    rank = {g: r for r, g in enumerate(order)}
    cliques = _maximal_cliques(~sig)
    cliques.sort(key=lambda c: sorted(rank[g] for g in c))
    letters = [""] * k
    for idx, clique in enumerate(cliques):
        ch = _letter(idx)
        for g in clique:
            letters[g] += ch
    return letters


def _letter(i: int) -> str:
    return ascii_lowercase[i] if i < 26 else f"{ascii_lowercase[i % 26]}{i // 26}"


def letter_groups(groups, alpha: float = 0.01) -> list[str]:
    gs = _as_groups(groups)
    return letters_from_significance([g.mean() for g in gs], tukey_hsd(gs, alpha))


def summarize(groups: dict, alpha: float = 0.01) -> list[GroupSummary]:
    """Mean, n-1 std and letters for a mapping label -> observations."""
    labels = list(groups)
    gs = _as_groups([groups[k] for k in labels])
    letters = letter_groups(gs, alpha)
    return [GroupSummary(lab, int(g.size), float(g.mean()), float(g.std(ddof=1)), let)
            for lab, g, let in zip(labels, gs, letters)]


def agreement(estimated, actual) -> float:
    """Squared Pearson correlation between paired measurements."""
    e, a = np.asarray(estimated, float), np.asarray(actual, float)
    if e.size != a.size or e.size < 2:
        raise ValueError("need at least two pairs of equal length")
    if np.ptp(e) == 0 or np.ptp(a) == 0:
        raise ValueError("agreement is undefined for constant input")
    r = np.corrcoef(e, a)[0, 1]
    return float(r * r)
