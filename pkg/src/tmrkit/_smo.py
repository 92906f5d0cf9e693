"""Compiled kernels for the RBF support-vector classifier.

The binary solver follows the sequential-minimal-optimization scheme with
second-order working-set selection: at every iteration the maximal
violating index i is paired with the j that maximizes the guaranteed
decrease of the dual objective, and the pair is solved analytically
inside the box [0, C].
"""
from __future__ import annotations

import numpy as np
from numba import njit

TAU = 1e-12
OK = 0
NOT_CONVERGED = 1


@njit(cache=True)
def rbf_gram(A, B, gamma):
    n, m, d = A.shape[0], B.shape[0], A.shape[1]
    K = np.empty((n, m))
    for i in range(n):
        for j in range(m):
            s = 0.0
            for k in range(d):
                t = A[i, k] - B[j, k]
                s += t * t
            K[i, j] = np.exp(-gamma * s)
    return K


@njit(cache=True)
def smo_binary(K, idx, y, C, eps, max_iter):
    """Solve the C-SVC dual on the points ``idx`` of the Gram matrix ``K``.

    Returns (alpha, rho, iterations, gap, status). The decision value of a
    point x is sum_k alpha_k y_k K(x_k, x) - rho.
    """
    n = idx.shape[0]
    Q = np.empty((n, n))
    for a in range(n):
        for b in range(n):
            Q[a, b] = y[a] * y[b] * K[idx[a], idx[b]]
    alpha = np.zeros(n)
    G = -np.ones(n)
    it = 0
    gap = np.inf
    status = NOT_CONVERGED
    while it < max_iter:
        # maximal violating index
        gmax = -np.inf
        gi = -1
        for t in range(n):
            if y[t] > 0:
                if alpha[t] < C and -G[t] >= gmax:
                    gmax = -G[t]
                    gi = t
            else:
                if alpha[t] > 0 and G[t] >= gmax:
                    gmax = G[t]
                    gi = t
        gmax2 = -np.inf
        gj = -1
        best = np.inf
        if gi >= 0:
            qii = Q[gi, gi]
            yi = y[gi]
            for t in range(n):
                if y[t] > 0:
                    if alpha[t] > 0:
                        diff = gmax + G[t]
                        if G[t] >= gmax2:
                            gmax2 = G[t]
                        if diff > 0:
                            quad = qii + Q[t, t] - 2.0 * yi * y[t] * Q[gi, t]
                            if quad <= 0:
                                quad = TAU
                            obj = -(diff * diff) / quad
                            if obj <= best:
                                gj = t
                                best = obj
                else:
                    if alpha[t] < C:
                        diff = gmax - G[t]
                        if -G[t] >= gmax2:
                            gmax2 = -G[t]
                        if diff > 0:
                            quad = qii + Q[t, t] - 2.0 * yi * y[t] * Q[gi, t]
                            if quad <= 0:
                                quad = TAU
                            obj = -(diff * diff) / quad
                            if obj <= best:
                                gj = t
                                best = obj
        gap = gmax + gmax2
        if gi < 0 or gj < 0 or gap < eps:
            status = OK
            break
        i, j = gi, gj
        qij = Q[i, j]
        ai, aj = alpha[i], alpha[j]
        if y[i] != y[j]:
            quad = Q[i, i] + Q[j, j] + 2.0 * qij
            if quad <= 0:
                quad = TAU
            delta = (-G[i] - G[j]) / quad
            diff = ai - aj
            alpha[i] += delta
            alpha[j] += delta
            if diff > 0:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = diff
            else:
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = -diff
            if diff > 0:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = C - diff
            else:
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = C + diff
        else:
            quad = Q[i, i] + Q[j, j] - 2.0 * qij
            if quad <= 0:
                quad = TAU
            delta = (G[i] - G[j]) / quad
            s = ai + aj
            alpha[i] -= delta
            alpha[j] += delta
            if s > C:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = s - C
            else:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = s
            if s > C:
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = s - C
            else:
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = s
        di = alpha[i] - ai
        dj = alpha[j] - aj
        for t in range(n):
            G[t] += Q[i, t] * di + Q[j, t] * dj
        it += 1

    # offset
    ub = np.inf
    lb = -np.inf
    nfree = 0
    sfree = 0.0
    for t in range(n):
        yg = y[t] * G[t]
        if alpha[t] >= C:
            if y[t] < 0:
                ub = min(ub, yg)
            else:
                lb = max(lb, yg)
        elif alpha[t] <= 0:
            if y[t] > 0:
                ub = min(ub, yg)
            else:
                lb = max(lb, yg)
        else:
            nfree += 1
            sfree += yg
    if nfree > 0:
        rho = sfree / nfree
    else:
        rho = (ub + lb) / 2
    return alpha, rho, it, gap, status


@njit(cache=True)
def _pair_auc(scores, pos):
    """Mann-Whitney AUC of ``scores`` for positives vs negatives, ties count 1/2."""
    n_pos = 0
    n_neg = 0
    for k in range(scores.shape[0]):
        if pos[k]:
            n_pos += 1
        else:
            n_neg += 1
    if n_pos == 0 or n_neg == 0:
        return np.nan
    s = 0.0
    for a in range(scores.shape[0]):
        if not pos[a]:
            continue
        for b in range(scores.shape[0]):
            if pos[b]:
                continue
            if scores[a] > scores[b]:
                s += 1.0
            elif scores[a] == scores[b]:
                s += 0.5
    return s / (n_pos * n_neg)


@njit(cache=True)
def ovo_fit_predict(Ktr, ytr, Kte, n_classes, C, eps, max_iter):
    """One-vs-one training on a precomputed Gram matrix and decision values
    for the test rows. Returns (decision m x n_pairs, predicted labels,
    status, worst gap)."""
    m = Kte.shape[0]
    n_pairs = n_classes * (n_classes - 1) // 2
    dec = np.zeros((m, n_pairs))
    status = OK
    worst = 0.0
    p = 0
    for a in range(n_classes):
        for b in range(a + 1, n_classes):
            cnt = 0
            for t in range(ytr.shape[0]):
                if ytr[t] == a or ytr[t] == b:
                    cnt += 1
            idx = np.empty(cnt, dtype=np.int64)
            yy = np.empty(cnt)
            c = 0
            for t in range(ytr.shape[0]):
                if ytr[t] == a or ytr[t] == b:
                    idx[c] = t
                    yy[c] = 1.0 if ytr[t] == a else -1.0
                    c += 1
            alpha, rho, it, gap, st = smo_binary(Ktr, idx, yy, C, eps, max_iter)
            if st != OK:
                status = st
                worst = max(worst, gap)
            for r in range(m):
                s = 0.0
                for k in range(cnt):
                    if alpha[k] > 0:
                        s += alpha[k] * yy[k] * Kte[r, idx[k]]
                dec[r, p] = s - rho
            p += 1
    pred = np.empty(m, dtype=np.int64)
    votes = np.zeros(n_classes)
    score = np.zeros(n_classes)
    for r in range(m):
        votes[:] = 0.0
        score[:] = 0.0
        p = 0
        for a in range(n_classes):
            for b in range(a + 1, n_classes):
                if dec[r, p] > 0:
                    votes[a] += 1
                else:
                    votes[b] += 1
                score[a] += dec[r, p]
                score[b] -= dec[r, p]
                p += 1
        best = 0
        for c in range(1, n_classes):
            if votes[c] > votes[best] or (votes[c] == votes[best] and score[c] > score[best]):
                best = c
        pred[r] = best
    return dec, pred, status, worst


@njit(cache=True)
def mean_pairwise_auc(dec, yte, n_classes):
    total = 0.0
    count = 0
    p = 0
    for a in range(n_classes):
        for b in range(a + 1, n_classes):
            cnt = 0
            for r in range(yte.shape[0]):
                if yte[r] == a or yte[r] == b:
                    cnt += 1
            sc = np.empty(cnt)
            pos = np.empty(cnt, dtype=np.bool_)
            c = 0
            for r in range(yte.shape[0]):
                if yte[r] == a or yte[r] == b:
                    sc[c] = dec[r, p]
                    pos[c] = yte[r] == a
                    c += 1
            v = _pair_auc(sc, pos)
            if not np.isnan(v):
                total += v
                count += 1
            p += 1
    if count == 0:
        return np.nan
    return total / count


@njit(cache=True)
def decode_frame(Xtr, ytr, Xte, yte, perms, n_classes, C, gamma, eps, max_iter):
    """Accuracy and AUC for the true training labels (row 0) and for each
    row of ``perms`` applied to the training labels (rows 1..)."""
    Ktr = rbf_gram(Xtr, Xtr, gamma)
    Kte = rbf_gram(Xte, Xtr, gamma)
    S = perms.shape[0]
    acc = np.empty(S + 1)
    auc = np.empty(S + 1)
    status = OK
    worst = 0.0
    for s in range(S + 1):
        if s == 0:
            yy = ytr
        else:
            yy = ytr[perms[s - 1]]
        dec, pred, st, gap = ovo_fit_predict(Ktr, yy, Kte, n_classes, C, eps, max_iter)
        if st != OK:
            status = st
            worst = max(worst, gap)
        correct = 0
        for r in range(yte.shape[0]):
            if pred[r] == yte[r]:
                correct += 1
        acc[s] = correct / yte.shape[0]
        auc[s] = mean_pairwise_auc(dec, yte, n_classes)
    return acc, auc, status, worst
