"""Time-resolved group decoding with an RBF support-vector classifier.

At every spectrogram frame a one-vs-one SVM is trained on a standardized
training split and scored on the held-out split, over repeated stratified
k-fold partitions. Surrogate curves repeat the procedure with the
training labels permuted (the same permutation at every frame, so the
surrogates keep the temporal smoothness of real curves).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import _smo
from .stats import ClusterResult, cluster_permutation

logger = logging.getLogger(__name__)

KKT_TOL = 1e-3
MAX_ITER = 100_000


class ConvergenceError(RuntimeError):
    """SMO did not reach the KKT tolerance within the iteration cap."""

    def __init__(self, residual: float, max_iter: int = MAX_ITER):
        self.residual = residual
        super().__init__(f"SMO did not converge after {max_iter} iterations "
                         f"(KKT residual {residual:.3g})")


# --- features -------------------------------------------------------------------

def _pair_names(labels):
    return [f"{p}->{q}" for p in labels for q in labels]


@dataclass
class FeatureTensor:
    """Per-frame feature vectors for a set of labelled trials.

    ``power`` holds the band-power features (trials x features x frames).
    The coupling block depends on the training split (its reference phase
    is estimated from training trials only), so it is stored as the raw
    phase and amplitude samples and built per split by :meth:`features`.
    """

    power: np.ndarray
    labels: np.ndarray
    frame_times: np.ndarray
    feature_names: list
    phase: Optional[np.ndarray] = None       # trials x channels x frames
    amplitude: Optional[np.ndarray] = None   # trials x channels x frames
    channel_labels: tuple = ()
    dropped: list = field(default_factory=list)

    def __post_init__(self):
        self.labels = np.asarray(self.labels)
        self.classes = tuple(sorted(set(self.labels.tolist())))
        if len(self.classes) < 2:
            raise ValueError("single class: decoding needs at least two labels")
        self.codes = np.array([self.classes.index(v) for v in self.labels], dtype=np.int64)

    @property
    def n_trials(self) -> int:
        return len(self.labels)

    @property
    def n_frames(self) -> int:
        return len(self.frame_times)

    @property
    def has_coupling(self) -> bool:
        return self.phase is not None

    @property
    def n_features(self) -> int:
        n = self.power.shape[1]
        if self.has_coupling:
            n += self.phase.shape[1] * self.amplitude.shape[1]
        return n

    @property
    def all_feature_names(self) -> list:
        names = list(self.feature_names)
        if self.has_coupling:
            names += ["coupling " + n for n in _pair_names(self.channel_labels)]
        return names

    def subset(self, idx) -> "FeatureTensor":
        idx = np.asarray(idx, dtype=int)
        return FeatureTensor(self.power[idx], self.labels[idx], self.frame_times,
                             self.feature_names,
                             None if self.phase is None else self.phase[idx],
                             None if self.amplitude is None else self.amplitude[idx],
                             self.channel_labels, list(self.dropped))

    def block(self, name: str) -> "FeatureTensor":
        """Restrict to one feature block: 'sw', 'spindle' or 'coupling'."""
        if name == "coupling":
            if not self.has_coupling:
                raise ValueError("tensor has no coupling block")
            return FeatureTensor(self.power[:, :0], self.labels, self.frame_times, [],
                                 self.phase, self.amplitude, self.channel_labels)
        keep = [i for i, n in enumerate(self.feature_names) if n.startswith(name + " ")]
        if not keep:
            raise ValueError(f"no features in block {name!r}")
        return FeatureTensor(self.power[:, keep], self.labels, self.frame_times,
                             [self.feature_names[i] for i in keep])

    def balanced_subset(self, max_per_class: Optional[int], seed: int = 0) -> "FeatureTensor":
        """At most ``max_per_class`` randomly chosen trials of every class."""
        if max_per_class is None:
            return self
        rng = np.random.default_rng(seed)
        keep = []
        for c in range(len(self.classes)):
            idx = np.flatnonzero(self.codes == c)
            if len(idx) > max_per_class:
                idx = np.sort(rng.choice(idx, max_per_class, replace=False))
            keep.extend(idx.tolist())
        return self.subset(sorted(keep))

    def features(self, train_idx=None) -> np.ndarray:
        """Full trials x features x frames array.

        The coupling projection of trial n for pair (p, q) at frame t is
        z(a_q) * cos(phi_p - mu_pq), where the amplitude z-score and the
        amplitude-weighted mean phase mu_pq use training trials only.
        """
        if not self.has_coupling:
            return self.power
        tr = np.arange(self.n_trials) if train_idx is None else np.asarray(train_idx)
        return np.concatenate([self.power, coupling_projection(self.phase, self.amplitude, tr)],
                              axis=1)


def coupling_projection(phase, amplitude, train_idx) -> np.ndarray:
    """trials x (P*Q) x frames single-trial coupling features."""
    a_tr = amplitude[train_idx]
    mu_a = a_tr.mean(axis=0)
    sd_a = a_tr.std(axis=0, ddof=1) if len(train_idx) > 1 else np.ones_like(mu_a)
    sd_a = np.where(sd_a > 0, sd_a, 1.0)
    z = (amplitude - mu_a) / sd_a                               # n x Q x T
    e = np.exp(1j * phase[train_idx])                           # n x P x T
    mu = np.angle(np.einsum("nqt,npt->pqt", a_tr, e))           # P x Q x T
    c, s = np.cos(phase), np.sin(phase)                         # N x P x T
    proj = (c[:, :, None] * np.cos(mu)[None] + s[:, :, None] * np.sin(mu)[None])
    out = z[:, None, :, :] * proj                               # N x P x Q x T
    return out.reshape(out.shape[0], -1, out.shape[-1])


def sample_at_frames(analytic_values, times, frame_times) -> np.ndarray:
    """Pick the samples nearest to each frame centre (last axis)."""
    times = np.asarray(times)
    idx = np.array([int(np.argmin(np.abs(times - t))) for t in frame_times])
    return np.asarray(analytic_values)[..., idx]


def assemble_features(band_series: Sequence, analytic_series=None, labels=None) -> FeatureTensor:
    """Stack band-power series and (optionally) phase/amplitude samples.

    ``band_series`` is a list of BandPowerSeries (trials x channels x
    frames, dB). ``analytic_series`` is ``(phase, amplitude)`` sampled at
    the frame centres, each trials x channels x frames. Features whose
    variance across trials is zero at every frame are dropped with a
    notice.
    """
    if labels is None:
        raise ValueError("labels are required")
    labels = np.asarray(labels)
    n = len(labels)
    blocks, names, frame_times = [], [], None
    for series in band_series:
        v = np.asarray(series.values, dtype=float)
        if v.shape[0] != n:
            raise ValueError(f"misaligned trials: band series has {v.shape[0]} trials, "
                             f"labels have {n}")
        frame_times = series.frame_times if frame_times is None else frame_times
        if v.shape[2] != len(frame_times):
            raise ValueError("band series disagree on the frame grid")
        tag = "sw" if tuple(series.band)[1] <= 4.0 + 1e-9 else "spindle"
        chans = series.channel_labels or tuple(f"ch{i}" for i in range(v.shape[1]))
        blocks.append(v)
        names += [f"{tag} {c}" for c in chans]
    power = np.concatenate(blocks, axis=1) if blocks else np.zeros((n, 0, 0))
    phase = amp = None
    chans = ()
    if analytic_series is not None:
        phase, amp = (np.asarray(a, dtype=float) for a in analytic_series)
        if phase.shape[0] != n or amp.shape[0] != n:
            raise ValueError(f"misaligned trials: analytic series has {phase.shape[0]} trials, "
                             f"labels have {n}")
        if frame_times is None:
            raise ValueError("coupling block needs the frame grid of a band series")
        if power.shape[2] == 0:
            power = np.zeros((n, 0, phase.shape[2]))
        chans = band_series[0].channel_labels or tuple(f"ch{i}" for i in range(phase.shape[1]))
    if not np.all(np.isfinite(power)) or (phase is not None and not (
            np.all(np.isfinite(phase)) and np.all(np.isfinite(amp)))):
        raise ValueError("non-finite feature values")
    if power.shape[1]:
        # relative to magnitude: identical trials leave rounding-level spread
        scale = 1e-12 * (1.0 + np.abs(power).max(axis=(0, 2)))
        flat = power.std(axis=0).max(axis=-1) / scale
    else:
        flat = np.zeros(0)
    zero = np.flatnonzero(flat <= 1)
    dropped = [names[i] for i in zero]
    if dropped:
        logger.warning("dropping %d zero-variance feature(s): %s", len(dropped), dropped)
        keep = np.flatnonzero(flat > 1)
        power = power[:, keep]
        names = [names[i] for i in keep]
    return FeatureTensor(power, labels, np.asarray(frame_times), names, phase, amp, chans,
                         dropped)


# --- classifier -----------------------------------------------------------------

def standardize(train, test=None):
    """z-score with statistics of ``train`` (last-but-one axis = features)."""
    mu = train.mean(axis=0)
    sd = train.std(axis=0, ddof=1)
    sd = np.where(sd > 0, sd, 1.0)
    out = (train - mu) / sd
    if test is None:
        return out, mu, sd
    return out, (test - mu) / sd, mu, sd


def gamma_scale(n_features: int) -> float:
    """1 / (n_features * feature variance); features are unit-variance after scaling."""
    return 1.0 / max(n_features, 1)


@dataclass
class BinarySvm:
    support: np.ndarray     # standardized support vectors
    coef: np.ndarray        # alpha_k * y_k
    rho: float
    alpha: np.ndarray       # full dual vector over the pair's training points
    iterations: int
    gap: float


@dataclass
class SvmModel:
    classes: tuple
    machines: list
    gamma: float
    C: float
    mean: np.ndarray
    sd: np.ndarray

    def decision_function(self, X) -> np.ndarray:
        """n x n_pairs decision values; positive favours the lower class of the pair."""
        Z = (np.asarray(X, dtype=float) - self.mean) / self.sd
        out = np.empty((Z.shape[0], len(self.machines)))
        for p, m in enumerate(self.machines):
            if m.support.shape[0]:
                K = _smo.rbf_gram(Z, m.support, self.gamma)
                out[:, p] = K @ m.coef - m.rho
            else:
                out[:, p] = -m.rho
        return out

    def predict(self, X) -> np.ndarray:
        dec = self.decision_function(X)
        k = len(self.classes)
        votes = np.zeros((dec.shape[0], k))
        score = np.zeros((dec.shape[0], k))
        p = 0
        for a in range(k):
            for b in range(a + 1, k):
                votes[:, a] += dec[:, p] > 0
                votes[:, b] += dec[:, p] <= 0
                score[:, a] += dec[:, p]
                score[:, b] -= dec[:, p]
                p += 1
        best = np.zeros(dec.shape[0], dtype=int)
        for c in range(1, k):
            better = (votes[:, c] > votes[np.arange(len(best)), best]) | (
                (votes[:, c] == votes[np.arange(len(best)), best])
                & (score[:, c] > score[np.arange(len(best)), best]))
            best = np.where(better, c, best)
        return np.asarray(self.classes, dtype=object)[best]


def dual_objective(alpha, y, K) -> float:
    """sum(alpha) - 1/2 alpha' Q alpha with Q_ij = y_i y_j K_ij."""
    v = alpha * y
    return float(alpha.sum() - 0.5 * v @ K @ v)


def train_svm(X, y, C: float = 1.0, gamma: Optional[float] = None, tol: float = KKT_TOL,
              max_iter: int = MAX_ITER) -> SvmModel:
    """Fit a one-vs-one RBF SVM on training-standardized features."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if X.ndim != 2 or X.shape[0] != len(y):
        raise ValueError("X must be trials x features with one label per row")
    if not np.all(np.isfinite(X)):
        raise ValueError("non-finite feature values")
    classes = tuple(sorted(set(y.tolist())))
    if len(classes) < 2:
        raise ValueError("single class: need at least two labels")
    Z, mu, sd = standardize(X)
    gamma = gamma_scale(X.shape[1]) if gamma is None else float(gamma)
    K = _smo.rbf_gram(Z, Z, gamma)
    machines = []
    for a in range(len(classes)):
        for b in range(a + 1, len(classes)):
            idx = np.flatnonzero((y == classes[a]) | (y == classes[b])).astype(np.int64)
            yy = np.where(y[idx] == classes[a], 1.0, -1.0)
            alpha, rho, it, gap, status = _smo.smo_binary(K, idx, yy, float(C), tol, max_iter)
            if status != _smo.OK:
                raise ConvergenceError(gap, max_iter)
            sv = alpha > 0
            machines.append(BinarySvm(Z[idx[sv]], alpha[sv] * yy[sv], float(rho), alpha,
                                      int(it), float(gap)))
    return SvmModel(classes, machines, gamma, float(C), mu, sd)


# --- cross-validation ------------------------------------------------------------------

@dataclass(frozen=True)
class CvConfig:
    folds: int = 5
    repetitions: int = 2
    seed: int = 0
    C: float = 1.0
    gamma: Optional[float] = None   # None -> 1 / n_features
    tol: float = KKT_TOL
    max_iter: int = MAX_ITER

    def __post_init__(self):
        if self.folds < 2 or self.repetitions < 1:
            raise ValueError("need folds >= 2 and repetitions >= 1")


def stratified_folds(codes, folds: int, rng) -> np.ndarray:
    """Fold index per trial; classes are dealt round-robin after shuffling so
    every fold holds each class's share to within one trial."""
    codes = np.asarray(codes)
    out = np.empty(len(codes), dtype=np.int64)
    start = 0
    for c in np.unique(codes):
        idx = np.flatnonzero(codes == c)
        if len(idx) < folds:
            raise ValueError(f"class {c} has {len(idx)} trial(s), fewer than {folds} folds")
        idx = idx[rng.permutation(len(idx))]
        out[idx] = (start + np.arange(len(idx))) % folds
        start = (start + len(idx)) % folds
    return out


def partitions(tensor: FeatureTensor, cv: CvConfig) -> list:
    """[(repetition, fold, train_idx, test_idx)] for every split."""
    out = []
    for r in range(cv.repetitions):
        rng = np.random.default_rng(np.random.SeedSequence(cv.seed, spawn_key=(r,)))
        f = stratified_folds(tensor.codes, cv.folds, rng)
        for k in range(cv.folds):
            out.append((r, k, np.flatnonzero(f != k), np.flatnonzero(f == k)))
    return out


@dataclass
class DecodingCurve:
    frame_times: np.ndarray
    accuracy: np.ndarray
    accuracy_se: np.ndarray
    auc: np.ndarray
    auc_se: np.ndarray
    chance: float
    classes: tuple
    n_trials: int
    split_accuracy: Optional[np.ndarray] = field(default=None, repr=False)

    def to_csv(self) -> str:
        rows = ["frame_time,accuracy,auc,se,auc_se"]
        for t, a, u, s, us in zip(self.frame_times, self.accuracy, self.auc,
                                  self.accuracy_se, self.auc_se):
            rows.append(f"{t:.6f},{a:.10g},{u:.10g},{s:.10g},{us:.10g}")
        return "\n".join(rows) + "\n"

    def to_dict(self) -> dict:
        return {"frame_times": self.frame_times, "accuracy": self.accuracy,
                "accuracy_se": self.accuracy_se, "auc": self.auc, "auc_se": self.auc_se,
                "chance": self.chance, "classes": list(self.classes),
                "n_trials": self.n_trials}


@dataclass
class SurrogateEnsemble:
    accuracy: np.ndarray   # n x frames
    auc: np.ndarray
    seed: int

    def __len__(self) -> int:
        return self.accuracy.shape[0]


def _mean_se(split_values):
    """Mean over folds within each repetition, then over repetitions; SE over splits."""
    v = np.asarray(split_values)          # reps x folds x frames
    mean = v.mean(axis=1).mean(axis=0)
    flat = v.reshape(-1, v.shape[-1])
    se = flat.std(axis=0, ddof=1) / np.sqrt(flat.shape[0]) if flat.shape[0] > 1 else \
        np.zeros(v.shape[-1])
    return mean, se


def _decode(tensor: FeatureTensor, cv: CvConfig, n_surrogates: int, surrogate_seed: int):
    counts = np.bincount(tensor.codes)
    if counts.min() < cv.folds:
        raise ValueError(f"insufficient trials per class: smallest class has {counts.min()}, "
                         f"need >= {cv.folds}")
    k = len(tensor.classes)
    T = tensor.n_frames
    splits = partitions(tensor, cv)
    acc = np.zeros((cv.repetitions, cv.folds, n_surrogates + 1, T))
    auc = np.zeros_like(acc)
    for r, f, tr, te in splits:
        F = tensor.features(tr)
        d = F.shape[1]
        if d == 0:
            raise ValueError("no features to decode")
        gamma = gamma_scale(d) if cv.gamma is None else cv.gamma
        perms = np.empty((n_surrogates, len(tr)), dtype=np.int64)
        for s in range(n_surrogates):
            rng = np.random.default_rng(np.random.SeedSequence(surrogate_seed,
                                                               spawn_key=(s, r, f)))
            perms[s] = rng.permutation(len(tr))
        ytr = tensor.codes[tr]
        yte = tensor.codes[te]
        for t in range(T):
            Xtr, Xte, _, _ = standardize(F[tr, :, t], F[te, :, t])
            a, u, status, gap = _smo.decode_frame(
                np.ascontiguousarray(Xtr), ytr, np.ascontiguousarray(Xte), yte, perms, k,
                float(cv.C), float(gamma), cv.tol, cv.max_iter)
            if status != _smo.OK:
                raise ConvergenceError(gap, cv.max_iter)
            acc[r, f, :, t] = a
            auc[r, f, :, t] = u
    return acc, auc


def _curve(tensor, acc, auc):
    am, ase = _mean_se(acc)
    um, use = _mean_se(auc)
    return DecodingCurve(np.asarray(tensor.frame_times), am, ase, um, use,
                         1.0 / len(tensor.classes), tensor.classes, tensor.n_trials,
                         acc.reshape(-1, acc.shape[-1]))


def crossval_decode(tensor: FeatureTensor, cv: CvConfig = CvConfig()) -> DecodingCurve:
    acc, auc = _decode(tensor, cv, 0, 0)
    return _curve(tensor, acc[:, :, 0], auc[:, :, 0])


def surrogate_decode(tensor: FeatureTensor, cv: CvConfig = CvConfig(), n: int = 250,
                     seed: int = 0) -> SurrogateEnsemble:
    return decode_with_surrogates(tensor, cv, n, seed)[1]


def decode_with_surrogates(tensor: FeatureTensor, cv: CvConfig = CvConfig(), n: int = 250,
                           seed: int = 0):
    """Observed curve and label-shuffled ensemble in one pass (shared kernels)."""
    acc, auc = _decode(tensor, cv, n, seed)
    curve = _curve(tensor, acc[:, :, 0], auc[:, :, 0])
    s_acc = acc[:, :, 1:].mean(axis=1).mean(axis=0)
    s_auc = auc[:, :, 1:].mean(axis=1).mean(axis=0)
    return curve, SurrogateEnsemble(s_acc, s_auc, int(seed))


def decoding_clusters(curve: DecodingCurve, ensemble: SurrogateEnsemble, metric: str = "accuracy",
                      alpha: float = 0.05, n_perm: int = 1000, seed: int = 0) -> ClusterResult:
    obs = getattr(curve, metric)
    ens = getattr(ensemble, metric)
    return cluster_permutation(obs, ens, alpha=alpha, n_perm=n_perm, seed=seed)
