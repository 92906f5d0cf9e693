"""Short-time Fourier analysis of epoched EEG.

Power is |S(f, t)|^2 of a Hamming-windowed, zero-padded FFT. Time-frequency
maps are expressed in dB relative to the mean power of the pre-stimulus
frames (those whose window centre lies before cue onset).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SW_BAND = (0.5, 4.0)
SPINDLE_BAND = (12.0, 16.0)


@dataclass(frozen=True)
class SpectrogramConfig:
    window_length: int = 32
    overlap: int = 24
    nfft: int = 200
    fs: float = 100.0

    def __post_init__(self):
        if not 0 <= self.overlap < self.window_length:
            raise ValueError("overlap must be smaller than the window length")
        if self.nfft < self.window_length:
            raise ValueError("nfft must be >= window length")

    @property
    def hop(self) -> int:
        return self.window_length - self.overlap

    @property
    def resolution_hz(self) -> float:
        return self.fs / self.nfft

    @property
    def freqs(self) -> np.ndarray:
        return np.arange(self.nfft // 2 + 1) * self.resolution_hz

    def window(self) -> np.ndarray:
        """Symmetric Hamming window, 0.54 - 0.46 cos(2 pi n / (N - 1))."""
        n = np.arange(self.window_length)
        return 0.54 - 0.46 * np.cos(2 * np.pi * n / (self.window_length - 1))

    def n_frames(self, n_samples: int) -> int:
        return (n_samples - self.window_length) // self.hop + 1

    def frame_times(self, n_samples: int, t_start_s: float = 0.0) -> np.ndarray:
        i = np.arange(self.n_frames(n_samples))
        return (i * self.hop + self.window_length // 2) / self.fs + t_start_s


def frame_starts(n_samples: int, config: SpectrogramConfig) -> np.ndarray:
    return np.arange(config.n_frames(n_samples)) * config.hop


def stft(x, config: SpectrogramConfig = SpectrogramConfig()) -> np.ndarray:
    """Complex spectra of windowed frames along the last axis.

    Returns an array shaped ``x.shape[:-1] + (n_freqs, n_frames)`` holding
    the one-sided spectrum (bins 0 .. nfft/2).
    """
    x = np.asarray(x, dtype=float)
    L = config.window_length
    if x.shape[-1] < L:
        raise ValueError(f"input of {x.shape[-1]} samples is shorter than the {L}-sample window")
    frames = np.lib.stride_tricks.sliding_window_view(x, L, axis=-1)[..., ::config.hop, :]
    spec = np.fft.rfft(frames * config.window(), n=config.nfft, axis=-1)
    return np.swapaxes(spec, -1, -2)


def power(x, config: SpectrogramConfig = SpectrogramConfig()) -> np.ndarray:
    s = stft(x, config)
    return s.real ** 2 + s.imag ** 2


@dataclass(frozen=True)
class TFR:
    """Time-frequency map; ``power`` is (..., freq, frame)."""

    freqs: np.ndarray
    frame_times: np.ndarray
    power: np.ndarray

    def select(self, fmin: float, fmax: float) -> "TFR":
        m = (self.freqs >= fmin - 1e-9) & (self.freqs <= fmax + 1e-9)
        return TFR(self.freqs[m], self.frame_times, self.power[..., m, :])


@dataclass(frozen=True)
class TrialTFR:
    """Raw single-trial power, trials x channels x freq x frame."""

    freqs: np.ndarray
    frame_times: np.ndarray
    power: np.ndarray
    channel_labels: tuple = ()

    @property
    def baseline_mask(self) -> np.ndarray:
        return self.frame_times < 0

    def baseline(self) -> np.ndarray:
        base = self.power[..., self.baseline_mask].mean(axis=-1)
        if np.any(base <= 0):
            raise ValueError("degenerate baseline: zero baseline power")
        return base

    def db(self) -> TFR:
        """Per-trial dB relative to that trial's own baseline spectrum."""
        return TFR(self.freqs, self.frame_times,
                   10 * np.log10(self.power / self.baseline()[..., None]))

    def average_map(self, channels=None, fmin: float = 1.0, fmax: float = 20.0) -> TFR:
        """Condition map: trial-averaged power over the trial-averaged
        baseline per channel, in dB, then averaged across channels."""
        p = self.power if channels is None else self.power[:, channels]
        mean_p = p.mean(axis=0)
        base = mean_p[..., self.baseline_mask].mean(axis=-1)
        if np.any(base <= 0):
            raise ValueError("degenerate baseline: zero baseline power")
        db = 10 * np.log10(mean_p / base[..., None])
        return TFR(self.freqs, self.frame_times, db.mean(axis=0)).select(fmin, fmax)

    def channel_maps(self, fmin: float = 1.0, fmax: float = 20.0) -> TFR:
        mean_p = self.power.mean(axis=0)
        base = mean_p[..., self.baseline_mask].mean(axis=-1)
        return TFR(self.freqs, self.frame_times,
                   10 * np.log10(mean_p / base[..., None])).select(fmin, fmax)


def tfr(epochs, config: SpectrogramConfig = None, fmin: float = 0.5,
        fmax: float = 20.0) -> TrialTFR:
    """Single-trial spectrogram power of an EpochSet (or trials x ch x samples array)."""
    data = getattr(epochs, "data", epochs)
    fs = getattr(epochs, "fs", 100.0)
    t0 = getattr(epochs, "t_start_s", -0.5)
    config = config or SpectrogramConfig(fs=fs)
    if abs(config.fs - fs) > 1e-9:
        raise ValueError(f"config fs {config.fs} does not match epochs fs {fs}")
    times = config.frame_times(data.shape[-1], t0)
    if not np.any(times < 0):
        raise ValueError("no baseline frames: every window centre is at or after onset")
    freqs = config.freqs
    m = (freqs >= fmin - 1e-9) & (freqs <= fmax + 1e-9)
    p = power(data, config)[..., m, :]
    return TrialTFR(freqs[m], times, p, tuple(getattr(epochs, "channel_labels", ())))


@dataclass(frozen=True)
class BandPowerSeries:
    values: np.ndarray  # trials x channels x frames, dB
    band: tuple
    frame_times: np.ndarray
    channel_labels: tuple = ()


def band_power(trial_tfr, band) -> BandPowerSeries:
    """Unweighted mean of single-trial dB values over the bins in ``band``."""
    lo, hi = band
    db = trial_tfr.db() if isinstance(trial_tfr, TrialTFR) else trial_tfr
    if lo < db.freqs[0] - 1e-9 or hi > db.freqs[-1] + 1e-9:
        raise ValueError(f"band {band} outside frequency grid "
                         f"[{db.freqs[0]}, {db.freqs[-1]}]")
    m = (db.freqs >= lo - 1e-9) & (db.freqs <= hi + 1e-9)
    if not m.any():
        raise ValueError(f"band {band} contains no frequency bins")
    return BandPowerSeries(db.power[..., m, :].mean(axis=-2), tuple(band), db.frame_times,
                           tuple(getattr(trial_tfr, "channel_labels", ())))


def window_mean(series_or_map, times, tmin: float, tmax: float, axis: int = -1):
    m = (np.asarray(times) >= tmin) & (np.asarray(times) <= tmax)
    if not m.any():
        raise ValueError(f"window [{tmin}, {tmax}] s contains no frames")
    return np.compress(m, series_or_map, axis=axis).mean(axis=axis)
