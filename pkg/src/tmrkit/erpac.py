"""Event-related phase-amplitude coupling.

For every time point the circular-linear correlation between slow-wave
phase and spindle-band amplitude is computed across trials:

    rho = sqrt((r_sx^2 + r_cx^2 - 2 r_sx r_cx r_sc) / (1 - r_sc^2))

with r_sx = corr(sin phi, a), r_cx = corr(cos phi, a) and
r_sc = corr(sin phi, cos phi).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import signal, special

from .preprocess import zero_phase

PHASE_BAND = (1.0, 4.0)


@dataclass(frozen=True)
class AnalyticSeries:
    """Instantaneous phase (radians, (-pi, pi]) and envelope per sample."""

    phase: np.ndarray
    amplitude: np.ndarray
    reliable: np.ndarray  # False for the edge samples distorted by filtering
    band: tuple

    @property
    def defined(self) -> np.ndarray:
        return self.amplitude > 0


def analytic(epochs, band, fs: Optional[float] = None, order: int = 3,
             edge: int = 25) -> AnalyticSeries:
    """Band-limit each trace with a zero-phase Butterworth filter and take
    the analytic signal built in the frequency domain."""
    data = np.asarray(getattr(epochs, "data", epochs), dtype=float)
    fs = fs if fs is not None else getattr(epochs, "fs", 100.0)
    lo, hi = band
    duration = data.shape[-1] / fs
    if lo < 2.0 / duration:
        raise ValueError(f"epoch too short for band: {duration:.2f} s epochs need a low "
                         f"edge >= {2.0 / duration:.2f} Hz, got {lo} Hz")
    if not 0 < lo < hi < fs / 2:
        raise ValueError(f"band {band} must lie inside (0, {fs / 2}) Hz")
    sos = signal.butter(order, [lo, hi], btype="bandpass", fs=fs, output="sos")
    filt = zero_phase(data, sos, axis=-1)
    z = signal.hilbert(filt, axis=-1)
    amp = np.abs(z)
    phase = np.angle(z)
    phase[phase <= -np.pi] = np.pi
    reliable = np.ones(data.shape[-1], dtype=bool)
    reliable[:edge] = False
    reliable[data.shape[-1] - edge:] = False
    return AnalyticSeries(phase, amp, reliable, tuple(band))


def _center(x, axis):
    return x - x.mean(axis=axis, keepdims=True)


def circular_linear(phase, amp, axis: int = 0) -> np.ndarray:
    """Vectorized circular-linear correlation along ``axis`` (the trial axis).

    Broadcasting is allowed between ``phase`` and ``amp``. Cells where the
    amplitude does not vary across trials are 0; a degenerate phase
    distribution (|r_sc| ~ 1 or constant sin/cos) raises.
    """
    phase = np.asarray(phase, dtype=float)
    amp = np.asarray(amp, dtype=float)
    n = np.broadcast_shapes(phase.shape, amp.shape)[axis]
    if n < 3:
        raise ValueError(f"need at least 3 trials, got {n}")
    s = _center(np.sin(phase), axis)
    c = _center(np.cos(phase), axis)
    a = _center(amp, axis)
    ss = (s * s).sum(axis=axis)
    cc = (c * c).sum(axis=axis)
    aa = (a * a).sum(axis=axis)
    if np.any(ss <= 0) or np.any(cc <= 0):
        raise ValueError("degenerate phase distribution: sin or cos of phase is constant")
    r_sc = (s * c).sum(axis=axis) / np.sqrt(ss * cc)
    denom = 1.0 - r_sc ** 2
    if np.any(denom < 1e-12):
        raise ValueError("degenerate phase distribution: |r_sc| ~ 1")
    ok = aa > 0
    safe = np.where(ok, aa, 1.0)
    r_sx = (s * a).sum(axis=axis) / np.sqrt(ss * safe)
    r_cx = (c * a).sum(axis=axis) / np.sqrt(cc * safe)
    rad = (r_sx ** 2 + r_cx ** 2 - 2 * r_sx * r_cx * r_sc) / denom
    rho = np.sqrt(np.clip(rad, 0.0, 1.0))
    return np.where(ok, rho, 0.0)


def erpac_at(phases, amps) -> float:
    """Circular-linear correlation of one time point across trials."""
    phases = np.ravel(phases)
    amps = np.ravel(amps)
    if phases.shape != amps.shape:
        raise ValueError("phases and amplitudes must have one value per trial")
    return float(circular_linear(phases, amps, axis=0))


def _pair_rho(phase, amp):
    """rho for all (phase-channel, amplitude-channel) pairs.

    phase, amp: trials x channels x time. Returns channels x channels x time.
    """
    n = phase.shape[0]
    if n < 3:
        raise ValueError(f"need at least 3 trials, got {n}")
    s = _center(np.sin(phase), 0)
    c = _center(np.cos(phase), 0)
    a = _center(amp, 0)
    ss = (s * s).sum(0)
    cc = (c * c).sum(0)
    aa = (a * a).sum(0)
    if np.any(ss <= 0) or np.any(cc <= 0):
        raise ValueError("degenerate phase distribution: sin or cos of phase is constant")
    r_sc = (s * c).sum(0) / np.sqrt(ss * cc)
    denom = 1.0 - r_sc ** 2
    if np.any(denom < 1e-12):
        raise ValueError("degenerate phase distribution: |r_sc| ~ 1")
    sa = np.einsum("npt,nqt->pqt", s, a, optimize=True)
    ca = np.einsum("npt,nqt->pqt", c, a, optimize=True)
    ok = aa > 0
    safe = np.where(ok, aa, 1.0)[None]
    r_sx = sa / np.sqrt(ss[:, None] * safe)
    r_cx = ca / np.sqrt(cc[:, None] * safe)
    rs = r_sc[:, None]
    rad = (r_sx ** 2 + r_cx ** 2 - 2 * r_sx * r_cx * rs) / denom[:, None]
    return np.where(ok[None], np.sqrt(np.clip(rad, 0.0, 1.0)), 0.0)


def smooth(values, window: int = 20, axis: int = -1) -> np.ndarray:
    """Centered moving average; near the edges only available samples count."""
    x = np.moveaxis(np.asarray(values, dtype=float), axis, -1)
    T = x.shape[-1]
    lo = np.arange(T) - window // 2
    hi = lo + window
    lo = np.clip(lo, 0, T)
    hi = np.clip(hi, 0, T)
    csum = np.concatenate([np.zeros(x.shape[:-1] + (1,)), np.cumsum(x, axis=-1)], axis=-1)
    out = (csum[..., hi] - csum[..., lo]) / (hi - lo)
    return np.moveaxis(out, -1, axis)


@dataclass(frozen=True)
class ErpacConfig:
    phase_band: tuple = PHASE_BAND
    amp_freqs: tuple = tuple(float(f) for f in range(4, 21))
    # phase-locked envelope modulation puts sidebands at +-f_phase around the
    # carrier; +-2 Hz keeps them for slow waves up to 2 Hz
    amp_halfwidth: float = 2.0
    smoothing: int = 20
    filter_order: int = 3

    def __post_init__(self):
        if self.smoothing < 1:
            raise ValueError("smoothing window must be >= 1 sample")
        if any(not 4.0 <= f <= 20.0 for f in self.amp_freqs):
            raise ValueError("amplitude centre frequencies must lie in 4-20 Hz")

    def amp_band(self, f):
        return (f - self.amp_halfwidth, f + self.amp_halfwidth)


@dataclass(frozen=True)
class ErpacMap:
    """Pair-averaged, time-smoothed rho over amplitude frequency x time."""

    amp_freqs: np.ndarray
    times: np.ndarray
    values: np.ndarray
    pairs: Optional[np.ndarray] = field(default=None, repr=False)


def decompose(epochs, config: ErpacConfig = ErpacConfig()):
    """Phase series and one amplitude series per configured frequency."""
    ph = analytic(epochs, config.phase_band, order=config.filter_order)
    amps = [analytic(epochs, config.amp_band(f), order=config.filter_order).amplitude
            for f in config.amp_freqs]
    return ph.phase, np.stack(amps, axis=-2)  # trials x ch x F x T


def erpac_map(epochs, config: ErpacConfig = ErpacConfig(), keep_pairs: bool = False,
              decomposition=None) -> ErpacMap:
    """Across-trial coupling for every directed channel pair, frequency and
    time, averaged over pairs and smoothed over time."""
    data = getattr(epochs, "data", epochs)
    fs = getattr(epochs, "fs", 100.0)
    t0 = getattr(epochs, "t_start_s", -0.5)
    if data.shape[0] < 3:
        raise ValueError(f"need at least 3 trials, got {data.shape[0]}")
    phase, amps = decomposition if decomposition is not None else decompose(epochs, config)
    pairs = np.stack([_pair_rho(phase, amps[:, :, k]) for k in range(amps.shape[2])], axis=2)
    raw = pairs.mean(axis=(0, 1))
    times = t0 + np.arange(data.shape[-1]) / fs
    return ErpacMap(np.asarray(config.amp_freqs, dtype=float), times,
                    smooth(raw, config.smoothing, axis=-1), pairs if keep_pairs else None)


def coupling_strength(emap: ErpacMap, band=(12.0, 16.0), window=(0.0, 4.0)) -> float:
    """Mean rho over the amplitude frequencies in ``band`` and times in ``window``
    (half-open in time)."""
    f = np.asarray(emap.amp_freqs)
    t = np.asarray(emap.times)
    fm = (f >= band[0] - 1e-9) & (f <= band[1] + 1e-9)
    if not fm.any():
        raise ValueError(f"band {band} outside map frequencies")
    dt = t[1] - t[0] if t.size > 1 else 0.0
    if window[0] < t[0] - 1e-9 or window[1] > t[-1] + dt + 1e-9 or window[0] >= window[1]:
        raise ValueError(f"window {window} outside map times [{t[0]}, {t[-1] + dt})")
    # half-open [start, stop): a 0-4 s window covers the whole post-cue epoch
    tm = (t >= window[0] - 1e-9) & (t < window[1] - 1e-9)
    return float(emap.values[fm][:, tm].mean())


def shuffle_null(epochs, config: ErpacConfig = ErpacConfig(), n_shuffles: int = 200,
                 seed: int = 0, band=(12.0, 16.0), window=(0.0, 4.0),
                 decomposition=None) -> np.ndarray:
    """Coupling-strength values with the phase-to-trial pairing shuffled."""
    phase, amps = decomposition if decomposition is not None else decompose(epochs, config)
    rng = np.random.default_rng(seed)
    out = np.empty(n_shuffles)
    for i in range(n_shuffles):
        perm = rng.permutation(phase.shape[0])
        emap = erpac_map(epochs, config, decomposition=(phase[perm], amps))
        out[i] = coupling_strength(emap, band, window)
    return out


def null_expectation(n_trials: int) -> float:
    """Expected rho for n independent trials with no coupling.

    With uniform phase and Gaussian-like amplitude, rho^2 is the R^2 of a
    regression on (sin, cos) and follows Beta(1, (n - 3) / 2), so
    E[rho] = Gamma(3/2) Gamma((n - 1) / 2) / Gamma(n / 2).
    """
    if n_trials < 4:
        raise ValueError("null expectation needs at least 4 trials")
    n = float(n_trials)
    return float(np.exp(special.gammaln(1.5) + special.gammaln((n - 1) / 2)
                        - special.gammaln(n / 2)))


def coupling_excess(emap: ErpacMap, n_trials: int, band=(12.0, 16.0),
                    window=(0.0, 4.0)) -> float:
    """Coupling strength minus its no-coupling expectation for ``n_trials``.

    Raw rho shrinks like 1/sqrt(n) under the null, so raw strengths of
    participants with different trial counts are not comparable; the
    excess is.
    """
    return coupling_strength(emap, band, window) - null_expectation(n_trials)
