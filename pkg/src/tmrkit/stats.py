"""Inferential statistics: ANOVA, t-tests, correlations, multiple-comparison
corrections and a cluster-based permutation test for time series.

Sums of squares and test statistics are computed here; only the reference
distributions (F, t) come from `scipy.stats`.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats as _st


@dataclass(frozen=True)
class AnovaRow:
    ss: float
    df: int
    ms: float
    F: float = float("nan")
    p: float = float("nan")


@dataclass(frozen=True)
class AnovaTable:
    rows: dict

    def __getitem__(self, key) -> AnovaRow:
        return self.rows[key]

    def to_dict(self) -> dict:
        return {k: vars(v) for k, v in self.rows.items()}


@dataclass(frozen=True)
class TTest:
    t: float
    df: int
    p: float
    flag: Optional[str] = None


@dataclass(frozen=True)
class Correlation:
    coefficient: float
    p: float
    n: int
    defined: bool = True


def _f_row(ss, df, ms_err, df_err):
    ms = ss / df
    F = ms / ms_err if ms_err > 0 else (np.inf if ms > 0 else np.nan)
    p = float(_st.f.sf(F, df, df_err)) if np.isfinite(F) else (0.0 if F == np.inf else np.nan)
    return AnovaRow(float(ss), int(df), float(ms), float(F), p)


def anova_oneway(groups: Sequence[Sequence[float]]) -> AnovaTable:
    """Between-subjects one-way ANOVA."""
    groups = [np.asarray(g, dtype=float) for g in groups]
    if len(groups) < 2:
        raise ValueError("need at least two groups")
    if any(g.size < 1 for g in groups):
        raise ValueError("every group needs at least one observation")
    allv = np.concatenate(groups)
    grand = allv.mean()
    ss_b = sum(g.size * (g.mean() - grand) ** 2 for g in groups)
    ss_w = sum(((g - g.mean()) ** 2).sum() for g in groups)
    df_b = len(groups) - 1
    df_w = allv.size - len(groups)
    if df_w < 1:
        raise ValueError("no residual degrees of freedom")
    ms_w = ss_w / df_w
    return AnovaTable({
        "between": _f_row(ss_b, df_b, ms_w, df_w),
        "within": AnovaRow(float(ss_w), int(df_w), float(ms_w)),
    })


def anova_twoway(values, factor_a, factor_b) -> AnovaTable:
    """Balanced two-way between-subjects ANOVA with interaction."""
    y = np.asarray(values, dtype=float)
    a = np.asarray(factor_a)
    b = np.asarray(factor_b)
    if not (y.shape == a.shape == b.shape) or y.ndim != 1:
        raise ValueError("values and factors must be equal-length vectors")
    la, lb = list(dict.fromkeys(a.tolist())), list(dict.fromkeys(b.tolist()))
    if len(la) < 2 or len(lb) < 2:
        raise ValueError("each factor needs at least two levels")
    counts = {(i, j): int(np.sum((a == i) & (b == j))) for i in la for j in lb}
    n = set(counts.values())
    if len(n) != 1:
        raise ValueError(f"unbalanced design: cell counts {sorted(n)}")
    n = n.pop()
    if n < 2:
        raise ValueError("need at least two observations per cell")
    grand = y.mean()
    mean_a = {i: y[a == i].mean() for i in la}
    mean_b = {j: y[b == j].mean() for j in lb}
    cell = {(i, j): y[(a == i) & (b == j)].mean() for i in la for j in lb}
    ss_a = n * len(lb) * sum((mean_a[i] - grand) ** 2 for i in la)
    ss_b = n * len(la) * sum((mean_b[j] - grand) ** 2 for j in lb)
    ss_ab = n * sum((cell[i, j] - mean_a[i] - mean_b[j] + grand) ** 2 for i in la for j in lb)
    ss_e = sum(((y[(a == i) & (b == j)] - cell[i, j]) ** 2).sum() for i in la for j in lb)
    df_a, df_b = len(la) - 1, len(lb) - 1
    df_ab = df_a * df_b
    df_e = len(la) * len(lb) * (n - 1)
    ms_e = ss_e / df_e
    return AnovaTable({
        "A": _f_row(ss_a, df_a, ms_e, df_e),
        "B": _f_row(ss_b, df_b, ms_e, df_e),
        "AxB": _f_row(ss_ab, df_ab, ms_e, df_e),
        "residual": AnovaRow(float(ss_e), int(df_e), float(ms_e)),
    })


def _t_result(num, se, df):
    if se > 0:
        t = num / se
        return TTest(float(t), int(df), float(2 * _st.t.sf(abs(t), df)))
    if num == 0:
        return TTest(0.0, int(df), 1.0, "zero variance")
    return TTest(float(np.copysign(np.inf, num)), int(df), 0.0, "zero variance")


def ttest_paired(x, y) -> TTest:
    d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    if d.ndim != 1 or d.size < 2:
        raise ValueError("paired samples must be equal-length vectors with n >= 2")
    return _t_result(d.mean(), d.std(ddof=1) / np.sqrt(d.size), d.size - 1)


def ttest_two_sample(x, y) -> TTest:
    """Student's two-sample t-test with pooled variance."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2 or y.size < 2:
        raise ValueError("each sample needs n >= 2")
    df = x.size + y.size - 2
    sp2 = (((x - x.mean()) ** 2).sum() + ((y - y.mean()) ** 2).sum()) / df
    return _t_result(x.mean() - y.mean(), np.sqrt(sp2 * (1 / x.size + 1 / y.size)), df)


def bonferroni(pvec, m: Optional[int] = None) -> np.ndarray:
    p = np.asarray(pvec, dtype=float)
    m = p.size if m is None else m
    return np.minimum(1.0, m * p)


def bh_fdr(pvec, q: float = 0.05):
    """Benjamini-Hochberg adjusted p-values and the rejection mask at ``q``."""
    p = np.asarray(pvec, dtype=float)
    m = p.size
    order = np.argsort(p, kind="stable")
    scaled = p[order] * m / np.arange(1, m + 1)
    adj_sorted = np.minimum.accumulate(scaled[::-1])[::-1]
    adj = np.empty(m)
    adj[order] = np.minimum(adj_sorted, 1.0)
    return adj, adj <= q


def pearson(x, y) -> Correlation:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.size
    if n < 3 or y.size != n:
        raise ValueError("need equal-length samples with n >= 3")
    dx, dy = x - x.mean(), y - y.mean()
    sxx, syy = (dx * dx).sum(), (dy * dy).sum()
    if sxx == 0 or syy == 0:
        return Correlation(float("nan"), float("nan"), n, defined=False)
    r = float(np.clip((dx * dy).sum() / np.sqrt(sxx * syy), -1.0, 1.0))
    df = n - 2
    if abs(r) == 1.0:
        return Correlation(r, 0.0, n)
    t = r * np.sqrt(df / (1 - r * r))
    return Correlation(r, float(2 * _st.t.sf(abs(t), df)), n)


def spearman(x, y) -> Correlation:
    """Rank correlation with average ranks for ties; t approximation for p."""
    return pearson(_st.rankdata(x), _st.rankdata(y))


# --- cluster-based permutation ----------------------------------------------

@dataclass(frozen=True)
class Cluster:
    start: int
    stop: int  # inclusive
    statistic: float
    p: float

    @property
    def frames(self) -> range:
        return range(self.start, self.stop + 1)


@dataclass(frozen=True)
class ClusterResult:
    clusters: tuple
    pointwise_p: np.ndarray
    null_distribution: np.ndarray
    alpha: float = 0.05
    n_permutations: int = 1000
    sidedness: str = "two-sided"

    @property
    def significant(self) -> tuple:
        return tuple(c for c in self.clusters if c.p < self.alpha)

    def to_dict(self, frame_times=None) -> dict:
        out = {"alpha": self.alpha, "n_permutations": self.n_permutations,
               "sidedness": self.sidedness, "clusters": []}
        for c in self.clusters:
            d = {"start": c.start, "stop": c.stop, "statistic": c.statistic, "p": c.p,
                 "significant": c.p < self.alpha}
            if frame_times is not None:
                d["start_s"] = float(frame_times[c.start])
                d["stop_s"] = float(frame_times[c.stop])
            out["clusters"].append(d)
        return out


def _pointwise(obs, rest_sorted, rest_mean, rest_sd):
    """Two-sided rank p-values and standardized deviations vs a reference set."""
    n = rest_sorted.shape[0]
    T = obs.shape[-1]
    n_le = np.empty(obs.shape, dtype=np.int64)
    n_ge = np.empty(obs.shape, dtype=np.int64)
    for t in range(T):
        col = rest_sorted[:, t]
        n_le[..., t] = np.searchsorted(col, obs[..., t], side="right")
        n_ge[..., t] = n - np.searchsorted(col, obs[..., t], side="left")
    p = np.minimum(1.0, 2.0 * (np.minimum(n_le, n_ge) + 1) / (n + 1))
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(rest_sd > 0, (obs - rest_mean) / np.where(rest_sd > 0, rest_sd, 1), 0.0)
    return p, z


def find_clusters(p, z, alpha):
    """Contiguous runs of frames with p < alpha and equal sign of z."""
    out = []
    T = len(p)
    t = 0
    while t < T:
        if p[t] < alpha and z[t] != 0:
            s = np.sign(z[t])
            u = t
            while u + 1 < T and p[u + 1] < alpha and np.sign(z[u + 1]) == s:
                u += 1
            out.append((t, u, float(np.sum(z[t:u + 1]))))
            t = u + 1
        else:
            t += 1
    return out


def cluster_permutation(observed, ensemble, alpha: float = 0.05, n_perm: int = 1000,
                        seed: int = 0) -> ClusterResult:
    """Cluster-corrected comparison of one curve against a surrogate ensemble.

    Frames where the observed value is extreme relative to the ensemble
    (two-sided rank p < alpha) are grouped into contiguous same-sign
    clusters; a cluster's statistic is the sum of (observed - mean) / sd
    over its frames. The null distribution of the largest |cluster sum| is
    built by letting randomly drawn ensemble members play the observed
    curve against the remaining members.
    """
    obs = np.asarray(observed, dtype=float)
    ens = np.asarray(ensemble, dtype=float)
    if ens.ndim != 2 or ens.shape[1] != obs.shape[0]:
        raise ValueError("ensemble must be members x frames matching observed")
    N = ens.shape[0]
    if N < int(np.ceil(1.0 / alpha)):
        raise ValueError(f"ensemble of {N} cannot resolve alpha={alpha}; "
                         f"need at least {int(np.ceil(1 / alpha))} members")

    srt = np.sort(ens, axis=0)
    p_obs, z_obs = _pointwise(obs, srt, ens.mean(axis=0), ens.std(axis=0, ddof=1))
    observed_clusters = find_clusters(p_obs, z_obs, alpha)

    # leave-one-out: member j against the other N-1 members
    s1 = ens.sum(axis=0)
    s2 = (ens ** 2).sum(axis=0)
    m_rest = (s1 - ens) / (N - 1)
    var_rest = (s2 - ens ** 2 - (N - 1) * m_rest ** 2) / (N - 2)
    sd_rest = np.sqrt(np.maximum(var_rest, 0.0))
    n_le = np.empty(ens.shape, dtype=np.int64)
    n_ge = np.empty(ens.shape, dtype=np.int64)
    for t in range(ens.shape[1]):
        n_le[:, t] = np.searchsorted(srt[:, t], ens[:, t], side="right") - 1
        n_ge[:, t] = N - np.searchsorted(srt[:, t], ens[:, t], side="left") - 1
    p_loo = np.minimum(1.0, 2.0 * (np.minimum(n_le, n_ge) + 1) / N)
    with np.errstate(divide="ignore", invalid="ignore"):
        z_loo = np.where(sd_rest > 0, (ens - m_rest) / np.where(sd_rest > 0, sd_rest, 1), 0.0)
    member_max = np.zeros(N)
    for j in range(N):
        cl = find_clusters(p_loo[j], z_loo[j], alpha)
        if cl:
            member_max[j] = max(abs(c[2]) for c in cl)

    rng = np.random.default_rng(seed)
    null = member_max[rng.integers(0, N, size=n_perm)]
    clusters = tuple(
        Cluster(int(s), int(u), stat, float((1 + np.sum(null >= abs(stat))) / (n_perm + 1)))
        for s, u, stat in observed_clusters)
    return ClusterResult(clusters, p_obs, null, alpha, n_perm)
