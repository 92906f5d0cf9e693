"""Signal conditioning and cue-locked epoching.

Fixed order: resample -> bandpass -> channel repair -> epoch -> amplitude
rejection -> baseline correction.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np
from scipy import signal
from scipy.stats import kurtosis

from .core import CANONICAL_CHANNELS, Recording

logger = logging.getLogger(__name__)

NEIGHBORS = {
    "F3": ("F4", "C3"),
    "F4": ("F3", "C4"),
    "C3": ("F3", "C4", "O1"),
    "C4": ("F4", "C3", "O2"),
    "O1": ("C3", "O2"),
    "O2": ("C4", "O1"),
}

EPOCH_TMIN_S = -0.5
EPOCH_TMAX_S = 4.0
REJECT_UV = 500.0


# --- resampling -------------------------------------------------------------

def antialias_fir(source_hz: float, target_hz: float, atten_db: float = 80.0) -> np.ndarray:
    """Kaiser low-pass for decimation: flat to 0.2*target, stop from 0.3*target.

    With a 100 Hz target the passband reaches the 20 Hz analysis edge and
    everything above 30 Hz is suppressed by ``atten_db``.
    """
    edge_pass = 0.2 * target_hz
    edge_stop = 0.3 * target_hz
    width = (edge_stop - edge_pass) / (source_hz / 2)
    numtaps, beta = signal.kaiserord(atten_db, width)
    numtaps |= 1
    return signal.firwin(numtaps, (edge_pass + edge_stop) / 2, window=("kaiser", beta),
                         fs=source_hz)


def resample(recording: Recording, target_hz: float = 100.0) -> Recording:
    """Anti-aliased rational rate conversion (polyphase FIR)."""
    src = float(recording.sample_rate_hz)
    if target_hz > src:
        raise ValueError("upsampling unsupported")
    if target_hz == src:
        return recording
    ratio = Fraction(target_hz / src).limit_denominator(1000)
    if abs(float(ratio) - target_hz / src) > 1e-12:
        raise ValueError(f"rate ratio {target_hz}/{src} is not a simple rational")
    up, down = ratio.numerator, ratio.denominator
    # design at the upsampled rate, where the polyphase filter runs
    h = antialias_fir(src * up, target_hz)
    out = signal.resample_poly(np.asarray(recording.samples, dtype=float), up, down,
                               axis=1, window=h)
    return recording.with_samples(out, sample_rate_hz=float(target_hz))


# --- filtering --------------------------------------------------------------

@dataclass(frozen=True)
class FilterSpec:
    low_hz: float = 1.0
    high_hz: float = 20.0
    order: int = 4

    def sos(self, fs: float) -> np.ndarray:
        if not 0 < self.low_hz < self.high_hz < fs / 2:
            raise ValueError(f"need 0 < low < high < Nyquist ({fs / 2} Hz)")
        return signal.butter(self.order, [self.low_hz, self.high_hz], btype="bandpass",
                             fs=fs, output="sos")


def zero_phase(x, sos, axis=-1):
    """Forward-backward SOS filtering; raises when the input is too short."""
    x = np.asarray(x, dtype=float)
    padlen = 3 * (2 * len(sos) + 1 - min((sos[:, 2] == 0).sum(), (sos[:, 5] == 0).sum()))
    if x.shape[axis] <= padlen:
        raise ValueError(f"signal of {x.shape[axis]} samples is shorter than the filter "
                         f"startup length ({padlen} samples)")
    return signal.sosfiltfilt(sos, x, axis=axis, padlen=padlen)


def bandpass(recording: Recording, spec: FilterSpec = FilterSpec()) -> Recording:
    sos = spec.sos(recording.sample_rate_hz)
    return recording.with_samples(zero_phase(recording.samples, sos, axis=1))


# --- bad channels -------------------------------------------------------------

@dataclass(frozen=True)
class BadChannelReport:
    kurtosis: np.ndarray
    z: np.ndarray
    flagged: tuple
    sources: dict = field(default_factory=dict)


def detect_and_repair_channels(recording: Recording, z_threshold: float = 5.0,
                               min_scale: float = 0.5, max_bad: int = 2):
    """Flag channels with outlying kurtosis and replace them by neighbor means.

    The z-score is robust: (k - median) / max(1.4826 * MAD, min_scale),
    one-sided since artifacts raise kurtosis. A plain mean/sd z-score
    cannot exceed (n - 1)/sqrt(n) ~ 2.04 with six channels.
    """
    labels = tuple(recording.channel_labels)
    x = np.asarray(recording.samples, dtype=float)
    k = kurtosis(x, axis=1, fisher=True, bias=True)
    med = np.median(k)
    scale = max(1.4826 * np.median(np.abs(k - med)), min_scale)
    z = (k - med) / scale
    flagged = tuple(labels[i] for i in np.flatnonzero(z > z_threshold))
    if len(flagged) > max_bad:
        raise ValueError(f"too many bad channels: {list(flagged)}")
    if len(labels) - len(flagged) < 4:
        raise ValueError("fewer than 4 clean channels remain")
    if not flagged:
        return recording, BadChannelReport(k, z, (), {})
    out = x.copy()
    sources = {}
    for ch in flagged:
        nb = tuple(n for n in NEIGHBORS.get(ch, ()) if n in labels and n not in flagged)
        if not nb:
            raise ValueError(f"no clean neighbors available to repair {ch}")
        out[labels.index(ch)] = x[[labels.index(n) for n in nb]].mean(axis=0)
        sources[ch] = nb
        logger.info("repaired channel %s from %s", ch, nb)
    return recording.with_samples(out), BadChannelReport(k, z, flagged, sources)


# --- epochs -------------------------------------------------------------------

@dataclass
class EpochSet:
    """Cue-locked trials, trials x channels x samples.

    ``metadata`` maps column names (item_id, pres_index, block_id,
    block_size, level, group, ...) to per-trial lists.
    """

    data: np.ndarray
    fs: float = 100.0
    t_start_s: float = EPOCH_TMIN_S
    channel_labels: tuple = CANONICAL_CHANNELS
    metadata: dict = field(default_factory=dict)
    n_dropped_bounds: int = 0

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.data.ndim != 3:
            raise ValueError("epoch data must be trials x channels x samples")
        for k, v in self.metadata.items():
            if len(v) != self.n_trials:
                raise ValueError(f"metadata column {k!r} has {len(v)} rows for "
                                 f"{self.n_trials} trials")

    @property
    def n_trials(self) -> int:
        return self.data.shape[0]

    @property
    def times(self) -> np.ndarray:
        return self.t_start_s + np.arange(self.data.shape[2]) / self.fs

    def subset(self, idx) -> "EpochSet":
        idx = np.asarray(idx, dtype=int)
        meta = {k: [v[i] for i in idx] for k, v in self.metadata.items()}
        return EpochSet(self.data[idx], self.fs, self.t_start_s, self.channel_labels, meta,
                        self.n_dropped_bounds)

    def where(self, **conditions) -> "EpochSet":
        keep = [i for i in range(self.n_trials)
                if all(self.metadata[k][i] == v for k, v in conditions.items())]
        return self.subset(keep)

    @classmethod
    def concat(cls, sets) -> "EpochSet":
        sets = [s for s in sets if s is not None]
        if not sets:
            raise ValueError("nothing to concatenate")
        keys = set(sets[0].metadata)
        for s in sets[1:]:
            keys &= set(s.metadata)
        data = np.concatenate([s.data for s in sets], axis=0)
        meta = {k: [v for s in sets for v in s.metadata[k]] for k in sorted(keys)}
        return cls(data, sets[0].fs, sets[0].t_start_s, sets[0].channel_labels, meta,
                   sum(s.n_dropped_bounds for s in sets))


def epoch(recording: Recording, cue_log, levels: Optional[dict] = None,
          group: Optional[str] = None, extra: Optional[dict] = None) -> EpochSet:
    """Cut [-0.5, 4.0) s windows around every cue onset.

    Trials whose window leaves the record are dropped and counted in
    ``n_dropped_bounds``.
    """
    fs = recording.sample_rate_hz
    if abs(fs - 100.0) > 1e-9:
        raise ValueError(f"epoching expects 100 Hz data, got {fs} Hz")
    pre = int(round(-EPOCH_TMIN_S * fs))
    post = int(round(EPOCH_TMAX_S * fs))
    n_ch, n = recording.samples.shape
    events = list(cue_log)
    block_size = {}
    for e in events:
        block_size[e.block_id] = max(block_size.get(e.block_id, 0), e.pres_index)
    trials, kept = [], []
    for e in events:
        onset = int(round(e.onset_ms * fs / 1000.0 - recording.t0_s * fs))
        lo, hi = onset - pre, onset + post
        if lo < 0 or hi > n:
            continue
        trials.append(recording.samples[:, lo:hi])
        kept.append(e)
    dropped = len(events) - len(kept)
    if dropped:
        logger.warning("dropped %d cue(s) whose epoch window leaves the record", dropped)
    data = np.stack(trials) if trials else np.zeros((0, n_ch, pre + post))
    meta = {
        "onset_ms": [e.onset_ms for e in kept],
        "item_id": [e.item_id for e in kept],
        "pres_index": [e.pres_index for e in kept],
        "block_id": [e.block_id for e in kept],
        "block_size": [block_size[e.block_id] for e in kept],
        "level": [None if levels is None else _level_str(levels.get(e.item_id)) for e in kept],
        "group": [group] * len(kept),
    }
    for k, v in (extra or {}).items():
        meta[k] = [v] * len(kept)
    return EpochSet(data, fs, EPOCH_TMIN_S, tuple(recording.channel_labels), meta, dropped)


def _level_str(lv):
    return None if lv is None else getattr(lv, "value", lv)


@dataclass(frozen=True)
class RejectionReport:
    kept: tuple
    dropped: tuple
    peak_abs: np.ndarray
    threshold: float = REJECT_UV


def reject_amplitude(epochs: EpochSet, threshold: float = REJECT_UV):
    """Drop trials where any sample exceeds +/- threshold (strictly)."""
    peak = np.abs(epochs.data).max(axis=(1, 2)) if epochs.n_trials else np.zeros(0)
    keep = np.flatnonzero(peak <= threshold)
    drop = np.flatnonzero(peak > threshold)
    return epochs.subset(keep), RejectionReport(tuple(keep.tolist()), tuple(drop.tolist()),
                                                peak, threshold)


def baseline_correct(epochs: EpochSet) -> EpochSet:
    n_base = int(round(-epochs.t_start_s * epochs.fs))
    base = epochs.data[:, :, :n_base].mean(axis=2, keepdims=True)
    out = EpochSet(epochs.data - base, epochs.fs, epochs.t_start_s, epochs.channel_labels,
                   dict(epochs.metadata), epochs.n_dropped_bounds)
    return out


# --- ERP ----------------------------------------------------------------------

@dataclass(frozen=True)
class Erp:
    mean: np.ndarray
    se: np.ndarray
    n_trials: int
    times: np.ndarray


def _erp_cell(data, scope, times, name):
    if data.shape[0] < 2:
        raise ValueError(f"ERP cell {name!r} has {data.shape[0]} trial(s); need >= 2")
    if scope == "all-channels-mean":
        data = data.mean(axis=1)
    elif scope != "per-channel":
        raise ValueError(f"unknown scope {scope!r}")
    n = data.shape[0]
    return Erp(data.mean(axis=0), data.std(axis=0, ddof=1) / np.sqrt(n), n, times)


def erp(epochs: EpochSet, scope: str = "all-channels-mean", grouping: str = "condition",
        conditions=("All", "L3"), block_size: int = 4) -> dict:
    """Trial-averaged waveforms with across-trial standard errors.

    ``grouping='condition'`` returns one ERP per condition name ('All' or a
    level); ``'first_vs_last_pres'`` compares presentation 1 against the
    final presentation within blocks of ``block_size`` presentations.
    """
    times = epochs.times
    out = {}
    if grouping == "condition":
        for cond in conditions:
            if cond == "All":
                idx = np.arange(epochs.n_trials)
            else:
                idx = [i for i, lv in enumerate(epochs.metadata.get("level", []))
                       if lv == cond]
            out[cond] = _erp_cell(epochs.data[np.asarray(idx, dtype=int)], scope, times, cond)
    elif grouping == "first_vs_last_pres":
        pres = np.asarray(epochs.metadata["pres_index"])
        size = np.asarray(epochs.metadata["block_size"])
        in_blocks = size == block_size
        out["first"] = _erp_cell(epochs.data[in_blocks & (pres == 1)], scope, times, "first")
        out["last"] = _erp_cell(epochs.data[in_blocks & (pres == block_size)], scope, times,
                                "last")
    else:
        raise ValueError(f"unknown grouping {grouping!r}")
    return out


def preprocess_recording(recording: Recording, target_hz: float = 100.0,
                         spec: FilterSpec = FilterSpec(), z_threshold: float = 5.0):
    """Resample, bandpass and repair; returns (recording, bad-channel report)."""
    rec = resample(recording.canonical(), target_hz)
    rec = bandpass(rec, spec)
    return detect_and_repair_channels(rec, z_threshold)
