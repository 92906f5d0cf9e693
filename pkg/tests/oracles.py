"""Independent reference implementations used only by the tests.

Each oracle is written from the defining formula with plain loops so that
it shares no code path with the library routine it checks.
"""
from __future__ import annotations

import itertools
import math

import numpy as np


def circular_linear_direct(phases, amps) -> float:
    """Circular-linear correlation from explicit Pearson sums.

    rho = sqrt((r_sa^2 + r_ca^2 - 2 r_sa r_ca r_sc) / (1 - r_sc^2)),
    each r a plain Pearson coefficient accumulated term by term.
    """
    n = len(phases)
    s = [math.sin(p) for p in phases]
    c = [math.cos(p) for p in phases]
    a = [float(x) for x in amps]

    def pearson(x, y):
        mx = math.fsum(x) / n
        my = math.fsum(y) / n
        sxy = math.fsum((xi - mx) * (yi - my) for xi, yi in zip(x, y))
        sxx = math.fsum((xi - mx) ** 2 for xi in x)
        syy = math.fsum((yi - my) ** 2 for yi in y)
        return sxy / math.sqrt(sxx * syy)

    r_sa, r_ca, r_sc = pearson(s, a), pearson(c, a), pearson(s, c)
    return math.sqrt((r_sa ** 2 + r_ca ** 2 - 2 * r_sa * r_ca * r_sc) / (1 - r_sc ** 2))


def dft_power(frame, window, nfft):
    """|sum_n x[n] w[n] exp(-2 pi i k n / nfft)|^2 for k = 0..nfft/2."""
    out = []
    for k in range(nfft // 2 + 1):
        re = im = 0.0
        for n, (x, w) in enumerate(zip(frame, window)):
            ang = -2.0 * math.pi * k * n / nfft
            re += x * w * math.cos(ang)
            im += x * w * math.sin(ang)
        out.append(re * re + im * im)
    return np.array(out)


def svm_dual_exhaustive(K, y, C):
    """Solve max sum(a) - 1/2 a'Qa, 0 <= a <= C, y'a = 0 by enumerating
    every assignment of points to {at 0, at C, free}.

    For each pattern the free coordinates solve the KKT linear system
    [Q_ff y_f; y_f' 0][a_f; b] = [1 - Q_fc a_c; -y_c' a_c]; feasible
    solutions are compared by objective. Exponential in n; n <= 9.
    """
    y = np.asarray(y, dtype=float)
    n = len(y)
    Q = (y[:, None] * y[None, :]) * K
    best, best_a = -np.inf, None
    for pattern in itertools.product((0, 1, 2), repeat=n):
        a = np.zeros(n)
        free = [i for i, p in enumerate(pattern) if p == 2]
        for i, p in enumerate(pattern):
            if p == 1:
                a[i] = C
        if free:
            fixed = [i for i in range(n) if i not in free]
            m = len(free)
            A = np.zeros((m + 1, m + 1))
            A[:m, :m] = Q[np.ix_(free, free)]
            A[:m, m] = y[free]
            A[m, :m] = y[free]
            rhs = np.zeros(m + 1)
            rhs[:m] = 1.0 - Q[np.ix_(free, fixed)] @ a[fixed]
            rhs[m] = -y[fixed] @ a[fixed]
            try:
                sol = np.linalg.solve(A, rhs)
            except np.linalg.LinAlgError:
                continue
            a[free] = sol[:m]
        if np.any(a < -1e-9) or np.any(a > C + 1e-9) or abs(y @ a) > 1e-7:
            continue
        obj = a.sum() - 0.5 * a @ Q @ a
        if obj > best:
            best, best_a = obj, a.copy()
    return best, best_a


def rbf(A, B, gamma):
    out = np.empty((len(A), len(B)))
    for i, x in enumerate(A):
        for j, z in enumerate(B):
            out[i, j] = math.exp(-gamma * sum((xi - zi) ** 2 for xi, zi in zip(x, z)))
    return out


def replay_violations(hypnogram, log, stability=10, spacing_ms=8000, epoch_ms=30000):
    """Check a cue log against the delivery rules from first principles.

    Every onset must fall in an N2/N3 epoch preceded by at least
    ``stability`` consecutive N2/N3 epochs; consecutive cues in one
    uninterrupted eligible run must be exactly ``spacing_ms`` apart.
    """
    stages = [s.value for s in hypnogram.stages]
    ok = [s in ("N2", "N3") for s in stages]
    problems = []
    onsets = [e.onset_ms for e in log]
    for t in onsets:
        k = t // epoch_ms
        if k >= len(stages) or not ok[k]:
            problems.append(("stage", t))
            continue
        if k < stability or not all(ok[k - stability:k]):
            problems.append(("stability", t))

    # start epoch of the uninterrupted eligible run containing each epoch
    run_start, start = [], 0
    for k, good in enumerate(ok):
        if not good or k == 0 or not ok[k - 1]:
            start = k
        run_start.append(start)

    for a, b in zip(onsets, onsets[1:]):
        ka, kb = a // epoch_ms, b // epoch_ms
        if kb < len(ok) and ka < len(ok) and run_start[ka] == run_start[kb] and b - a != spacing_ms:
            problems.append(("spacing", a, b))
    return problems
