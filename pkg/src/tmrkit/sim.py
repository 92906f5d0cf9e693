"""Synthetic cohorts: hypnograms, behavioral fixtures and multichannel EEG.

The EEG generator sums four components per channel:

* a 1/f background whose RMS follows the sleep stage of each epoch,
* a slow-wave (SW) narrowband Gaussian process, common to all channels and
  gated by stage,
* spindle bursts (Hann-enveloped 12-16 Hz sinusoids with Poisson onsets)
  whose envelope is scaled by ``(1 + kappa * cos(phi_sw - phi0)) / 2``,
* cue-locked responses: an ERP template at each word onset and SW/spindle
  power gains in the 0-4 s window after each cue, decaying with the
  presentation index.

Every component is a pure function of its parameters and seed.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache
from typing import Mapping, Optional

import numpy as np
from scipy import fft as sp_fft

from . import config as cfg
from .core import (CANONICAL_CHANNELS, N_ITEMS, STAGES, BehavioralRecord, CueLog, Hypnogram,
                   Level, Recording, SleepStage, WordPairItem)

ALLOWED_FS = (100, 200, 500, 1000)
GROUPS = ("PTMR", "TMR", "CNT")
DEFAULT_POLICIES = {"PTMR": "personalized", "TMR": "fixed", "CNT": "nostim"}


def _stage_map(values: Mapping, path: str = "") -> dict:
    out = {}
    for k, v in dict(values).items():
        out[SleepStage.parse(k)] = float(v)
    missing = [s.value for s in STAGES if s not in out]
    if missing:
        raise cfg.ConfigError(path, f"missing stages {missing}")
    return out


def _stage_dict(values: Mapping) -> dict:
    return {s.value: values[s] for s in STAGES}


def child_seed(master: int, *key: int) -> int:
    """64-bit seed derived from ``master`` and an integer key path."""
    ss = np.random.SeedSequence(int(master), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, np.uint64)[0])


# --- hypnograms ---------------------------------------------------------------

def default_transition_matrix() -> np.ndarray:
    """Per-epoch stage transitions (rows/columns ordered W, R, N1, N2, N3)."""
    return np.array([
        [0.850, 0.000, 0.150, 0.000, 0.000],
        [0.030, 0.900, 0.040, 0.030, 0.000],
        [0.050, 0.010, 0.740, 0.200, 0.000],
        [0.014, 0.028, 0.016, 0.924, 0.018],
        [0.008, 0.000, 0.006, 0.056, 0.930],
    ])


@dataclass(frozen=True)
class HypnogramModel:
    initial_stage: SleepStage = SleepStage.WAKE
    transition_matrix: np.ndarray = field(default_factory=default_transition_matrix)
    duration_epochs: int = 240
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "initial_stage", SleepStage.parse(self.initial_stage))
        m = np.array(self.transition_matrix, dtype=float)
        if m.shape != (5, 5):
            raise ValueError(f"transition matrix must be 5x5, got {m.shape}")
        for i, row in enumerate(m):
            if np.any(row < 0) or abs(row.sum() - 1.0) > 1e-12:
                raise ValueError(f"transition matrix row {i} ({STAGES[i].value}) is not "
                                 f"stochastic: sum={row.sum()!r}")
        m.setflags(write=False)
        object.__setattr__(self, "transition_matrix", m)
        if self.duration_epochs < 1:
            raise ValueError("duration_epochs must be >= 1")

    def stationary(self) -> np.ndarray:
        w, v = np.linalg.eig(self.transition_matrix.T)
        p = np.real(v[:, np.argmin(np.abs(w - 1))])
        return p / p.sum()


def gen_hypnogram(model: HypnogramModel) -> Hypnogram:
    """Draw a stage sequence from the Markov chain."""
    rng = np.random.default_rng(model.seed)
    cum = np.cumsum(model.transition_matrix, axis=1)
    u = rng.random(model.duration_epochs - 1)
    s = model.initial_stage.index
    seq = [s]
    for x in u:
        s = min(int(np.searchsorted(cum[s], x, side="right")), 4)
        seq.append(s)
    return Hypnogram(tuple(STAGES[i] for i in seq))


# --- behavior -----------------------------------------------------------------

_ONSETS = "b d f g k l m n p r s t v z".split()
_VOWELS = "a e i o u".split()


@lru_cache(maxsize=8)
def word_corpus(n_items: int = N_ITEMS, seed: int = 20240) -> tuple:
    """Cue/target pseudo-word pairs with pairwise edit distance >= 3 among targets."""
    from .behavior import edit_distance

    rng = np.random.default_rng(seed)
    words = []
    while len(words) < 2 * n_items:
        w = "".join(rng.choice(_ONSETS) + rng.choice(_VOWELS) for _ in range(3))
        if all(edit_distance(w, o) >= 3 for o in words):
            words.append(w)
    return tuple(WordPairItem(i + 1, words[2 * i], words[2 * i + 1]) for i in range(n_items))


def _default_consolidation():
    # P(post correct | pre correct), P(post correct | pre incorrect) per level
    return {
        "PTMR": {"L1": [0.95, 0.20], "L2": [0.92, 0.25], "L3": [0.88, 0.25]},
        "TMR": {"L1": [0.95, 0.20], "L2": [0.90, 0.20], "L3": [0.80, 0.15]},
        "CNT": {"L1": [0.93, 0.15], "L2": [0.85, 0.15], "L3": [0.75, 0.10]},
    }


@dataclass(frozen=True)
class CohortSpec:
    n_per_group: int = 6
    policies: Mapping = field(default_factory=lambda: dict(DEFAULT_POLICIES))
    level_proportions: tuple = (0.3, 0.35, 0.35)
    pre_correct_prob: tuple = (0.9, 0.6, 0.3)
    consolidation: Mapping = field(default_factory=_default_consolidation)
    master_seed: int = 0

    def __post_init__(self):
        if self.n_per_group < 1:
            raise ValueError("n_per_group must be >= 1")
        p = np.asarray(self.level_proportions, dtype=float)
        if p.shape != (3,) or np.any(p < 0) or abs(p.sum() - 1) > 1e-9:
            raise ValueError("level proportions must be three non-negative values summing to 1")
        q = np.asarray(self.pre_correct_prob, dtype=float)
        if q.shape != (3,) or np.any((q < 0) | (q > 1)):
            raise ValueError("pre-sleep correctness probabilities must be three values in [0, 1]")
        for g in self.policies:
            if g not in self.consolidation:
                raise ValueError(f"no consolidation probabilities for group {g!r}")

    @property
    def groups(self) -> tuple:
        return tuple(self.policies)

    def participants(self) -> list:
        """(index, participant id, group) in a fixed order."""
        out = []
        for g in self.groups:
            for k in range(self.n_per_group):
                out.append((len(out), f"{g}-{k + 1:02d}", g))
        return out


def gen_behavior(spec: CohortSpec, participant_seed: int, group: str,
                 n_items: int = N_ITEMS):
    """Pre- and post-sleep records for one participant.

    Levels are assigned by exact proportional counts and shuffled; the
    post-sleep outcome depends on (group, level, pre-sleep correctness).
    """
    rng = np.random.default_rng(participant_seed)
    counts = np.floor(np.asarray(spec.level_proportions) * n_items).astype(int)
    rem = n_items - counts.sum()
    frac = np.asarray(spec.level_proportions) * n_items - counts
    for i in np.argsort(-frac, kind="stable")[:rem]:
        counts[i] += 1
    ranks = np.repeat([1, 2, 3], counts)[rng.permutation(n_items)]
    levels = [Level(f"L{r}") for r in ranks]
    corpus = word_corpus(n_items)
    cons = spec.consolidation[group]
    pre, post = [], []
    for item, lv in zip(corpus, levels):
        c0 = bool(rng.random() < spec.pre_correct_prob[lv.rank - 1])
        p_keep, p_gain = cons[lv.value]
        c1 = bool(rng.random() < (p_keep if c0 else p_gain))
        wrong = corpus[(item.item_id + 7) % n_items].target_word
        pre.append(BehavioralRecord(item.item_id, "pre", c0, lv,
                                    item.target_word if c0 else wrong))
        post.append(BehavioralRecord(item.item_id, "post", c1, lv,
                                     item.target_word if c1 else ""))
    return pre, post


# --- EEG parameters -------------------------------------------------------------

def _per_stage(**kw):
    return lambda: {s.value: kw[s.name if s.name in kw else s.value] for s in STAGES}


@dataclass(frozen=True)
class OscillatorParams:
    background_exponent: float = 1.0
    background_rms_uv: Mapping = field(default_factory=_per_stage(
        WAKE=12.0, REM=10.0, N1=10.0, N2=8.0, N3=8.0))
    sw_center_hz: float = 1.2
    sw_bandwidth_hz: float = 0.35
    sw_amplitude_uv: Mapping = field(default_factory=_per_stage(
        WAKE=0.0, REM=0.0, N1=5.0, N2=30.0, N3=60.0))
    spindle_center_hz: float = 13.5
    spindle_rate_per_min: Mapping = field(default_factory=_per_stage(
        WAKE=0.0, REM=0.0, N1=0.5, N2=12.0, N3=6.0))
    spindle_duration_s: float = 1.0
    spindle_amplitude_uv: float = 20.0
    channel_gains: tuple = (1.0, 1.0, 0.9, 0.9, 0.5, 0.5)

    def __post_init__(self):
        for name in ("background_rms_uv", "sw_amplitude_uv", "spindle_rate_per_min"):
            m = _stage_map(getattr(self, name), name)
            if any(v < 0 for v in m.values()):
                raise ValueError(f"{name} must be >= 0")
            object.__setattr__(self, name, _stage_dict(m))
        if not 0.5 <= self.sw_center_hz <= 2.0:
            raise ValueError("SW centre frequency must lie in 0.5-2 Hz")
        if not 12.0 <= self.spindle_center_hz <= 16.0:
            raise ValueError("spindle centre frequency must lie in 12-16 Hz")
        if self.spindle_amplitude_uv < 0 or self.spindle_duration_s <= 0:
            raise ValueError("spindle amplitude must be >= 0 and duration > 0")
        if len(self.channel_gains) != len(CANONICAL_CHANNELS) or min(self.channel_gains) < 0:
            raise ValueError("channel_gains needs one non-negative gain per channel")
        object.__setattr__(self, "channel_gains", tuple(float(g) for g in self.channel_gains))


@dataclass(frozen=True)
class CouplingParams:
    kappa: float = 0.0
    phi0: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.kappa <= 1.0:
            raise ValueError("kappa must lie in [0, 1]")
        if not -np.pi < self.phi0 <= np.pi:
            raise ValueError("phi0 must lie in (-pi, pi]")


@dataclass(frozen=True)
class GroupEvoked:
    erp_amplitude_uv: float = 0.0
    erp_latency_s: float = 0.45
    sw_power_gain: float = 1.0
    spindle_power_gain: float = 1.0
    second_word_gain: float = 1.0
    habituation: float = 1.0

    def __post_init__(self):
        if min(self.sw_power_gain, self.spindle_power_gain, self.second_word_gain) < 0:
            raise ValueError("gains must be >= 0")
        if self.erp_amplitude_uv < 0:
            raise ValueError("ERP amplitude must be >= 0")
        if not 0.0 < self.habituation <= 1.0:
            raise ValueError("habituation must lie in (0, 1]")

    def decay(self, pres_index) -> np.ndarray:
        """Fraction of the evoked response left at each presentation index."""
        return self.habituation ** (np.asarray(pres_index, dtype=float) - 1)

    def erp_kernel(self, t) -> np.ndarray:
        """Biphasic template: negative peak at the latency, positive rebound after."""
        t = np.asarray(t, dtype=float)
        lat = self.erp_latency_s
        neg = np.exp(-0.5 * ((t - lat) / 0.10) ** 2)
        pos = np.exp(-0.5 * ((t - lat - 0.40) / 0.18) ** 2)
        return self.erp_amplitude_uv * (-neg + 0.6 * pos)


def _default_evoked():
    return {
        "PTMR": GroupEvoked(40.0, 0.45, 4.0, 3.0, 2.0, 0.9),
        "TMR": GroupEvoked(40.0, 0.45, 3.0, 2.5, 1.8, 0.9),
        "CNT": GroupEvoked(),
    }


def _default_coupling():
    return {"PTMR": CouplingParams(0.8, 0.0), "TMR": CouplingParams(0.8, 0.0),
            "CNT": CouplingParams(0.2, 0.0)}


@dataclass(frozen=True)
class EvokedModel:
    groups: Mapping = field(default_factory=_default_evoked)

    def __getitem__(self, group) -> GroupEvoked:
        return self.groups.get(group, GroupEvoked())


# --- EEG synthesis ------------------------------------------------------------

RAMP_S = 0.2
RESPONSE_WINDOW_S = (0.0, 4.0)


def _colored_noise(rng, n_channels, n, fs, exponent, fmin=0.1):
    """Unit-variance noise with power spectrum ~ 1/f^exponent.

    Spectral coefficients have independent uniform real and imaginary
    parts; the time series is a sum of many independent sinusoids and so
    is Gaussian to a very good approximation, at a fraction of the cost of
    drawing normal deviates.
    """
    n_bins = n // 2 + 1
    f = np.arange(n_bins) * (fs / n)
    shape = np.zeros(n_bins, dtype=np.float32)
    m = f >= fmin
    shape[m] = f[m] ** (-exponent / 2.0)
    shape /= np.sqrt(np.sum(shape.astype(float) ** 2))
    z = rng.random((n_channels, 2 * n_bins), dtype=np.float32)
    z -= 0.5
    z = z.view(np.complex64)
    z *= shape
    x = sp_fft.irfft(z, n=n, axis=-1, overwrite_x=True)
    x /= x.std(axis=-1, keepdims=True)
    return x


def _narrowband(rng, n, fs, center, bandwidth):
    """Narrowband process with amplitude ~1 and its quadrature (Hilbert) pair."""
    n_bins = n // 2 + 1
    f = np.arange(n_bins) * (fs / n)
    m = (np.abs(f - center) <= 4 * bandwidth) & (f > 0)
    g = np.exp(-0.5 * ((f[m] - center) / bandwidth) ** 2)
    z = np.zeros(n, dtype=complex)
    # one-sided spectrum -> analytic signal x + i*y in a single transform
    z[np.flatnonzero(m)] = 2 * g * (rng.standard_normal(m.sum()) + 1j * rng.standard_normal(m.sum()))
    a = sp_fft.ifft(z, overwrite_x=True)
    x, y = a.real, a.imag
    scale = np.sqrt(np.mean(x ** 2) * 2.0)  # amplitude 1 <=> RMS 1/sqrt(2)
    return x / scale, y / scale


def _stage_series(hypnogram, values: Mapping, fs, n):
    per_epoch = np.array([values[s.value] for s in hypnogram.stages], dtype=float)
    spe = int(round(hypnogram.epoch_length_s * fs))
    out = np.repeat(per_epoch, spe)
    if out.size < n:
        out = np.concatenate([out, np.full(n - out.size, per_epoch[-1])])
    return out[:n]


def _spindle_train(rng, hypnogram, osc, fs, n):
    """Sum of Hann-enveloped bursts with Poisson onsets per epoch."""
    epoch_s = hypnogram.epoch_length_s
    rates = np.array([osc.spindle_rate_per_min[s.value] for s in hypnogram.stages])
    counts = rng.poisson(rates * epoch_s / 60.0)
    total = int(counts.sum())
    out = np.zeros(n)
    if total == 0 or osc.spindle_amplitude_uv == 0:
        return out
    starts_s = np.repeat(np.arange(len(counts)) * epoch_s, counts) + rng.random(total) * epoch_s
    freqs = np.clip(osc.spindle_center_hz + 0.3 * rng.standard_normal(total), 12.0, 16.0)
    phases = rng.uniform(-np.pi, np.pi, total)
    D = max(int(round(osc.spindle_duration_s * fs)), 3)
    env = np.hanning(D + 2)[1:-1] * osc.spindle_amplitude_uv
    k = np.arange(D)
    start = np.round(starts_s * fs).astype(np.int64)
    idx = start[:, None] + k[None, :]
    burst = env[None, :] * np.cos(2 * np.pi * freqs[:, None] * (k[None, :] / fs) + phases[:, None])
    ok = idx < n
    np.add.at(out, idx[ok], burst[ok])
    return out


def _window(tau, t0, t1, ramp=RAMP_S):
    """Zero before t0, raised-cosine rise over ``ramp`` s, 1 up to t1, then a
    raised-cosine fall. The response never starts before its trigger."""
    w = np.zeros_like(tau)
    w[(tau >= t0 + ramp) & (tau <= t1)] = 1.0
    up = (tau >= t0) & (tau < t0 + ramp)
    w[up] = 0.5 - 0.5 * np.cos(np.pi * (tau[up] - t0) / ramp)
    down = (tau > t1) & (tau < t1 + ramp)
    w[down] = 0.5 + 0.5 * np.cos(np.pi * (tau[down] - t1) / ramp)
    return w


def _evoked(cue_log, model: GroupEvoked, fs, n):
    """Power-gain series for SW and spindles plus the summed ERP waveform."""
    p_sw = np.ones(n)
    p_sp = np.ones(n)
    erp = np.zeros(n)
    if not len(cue_log):
        return p_sw, p_sp, erp
    lo = int(np.floor(-RAMP_S * fs))
    hi = int(np.ceil((RESPONSE_WINDOW_S[1] + RAMP_S + 1.0) * fs))
    tau = np.arange(lo, hi) / fs
    w1 = _window(tau, *RESPONSE_WINDOW_S)
    templates = {}
    for ev in cue_log:
        off = ev.second_word_offset_ms / 1000.0
        if off not in templates:
            w2 = _window(tau, off, RESPONSE_WINDOW_S[1])
            templates[off] = (
                (model.sw_power_gain - 1.0) * w1
                + model.sw_power_gain * (model.second_word_gain - 1.0) * w2,
                (model.spindle_power_gain - 1.0) * w1
                + model.spindle_power_gain * (model.second_word_gain - 1.0) * w2,
                model.erp_kernel(tau) + model.second_word_gain * model.erp_kernel(tau - off))
        ex_sw, ex_sp, kern = templates[off]
        h = float(model.decay(ev.pres_index))
        onset = int(round(ev.onset_ms * fs / 1000.0))
        a, b = onset + lo, onset + hi
        ca, cb = max(a, 0), min(b, n)
        if ca >= cb:
            continue
        sl = slice(ca - a, cb - a)
        p_sw[ca:cb] += h * ex_sw[sl]
        p_sp[ca:cb] += h * ex_sp[sl]
        erp[ca:cb] += h * kern[sl]
    return np.maximum(p_sw, 0.0), np.maximum(p_sp, 0.0), erp


def check_cues(hypnogram: Hypnogram, cue_log) -> None:
    for ev in cue_log:
        t = ev.onset_ms / 1000.0
        if t >= hypnogram.duration_s:
            raise ValueError(f"cue at {ev.onset_ms} ms is beyond the hypnogram "
                             f"({hypnogram.duration_s} s)")
        stage = hypnogram.stage_at(t)
        if not stage.eligible:
            raise ValueError(f"cue outside eligible stage: onset {ev.onset_ms} ms falls in "
                             f"{stage.value}")


def synth_components(hypnogram: Hypnogram, osc: OscillatorParams, coupling: CouplingParams,
                     evoked: GroupEvoked, cue_log: Optional[CueLog], fs_hz: int, seed: int) -> dict:
    """Individual signal components (all in µV, channel gains applied where noted).

    Keys: ``background`` (ch x n), ``sw`` and ``spindles`` (n, before channel
    gains), ``erp`` (n), ``sw_phase`` (n), ``t`` (n).
    """
    if fs_hz not in ALLOWED_FS:
        raise ValueError(f"fs_hz must be one of {ALLOWED_FS}, got {fs_hz}")
    cue_log = cue_log if cue_log is not None else CueLog()
    check_cues(hypnogram, cue_log)
    n = int(round(hypnogram.duration_s * fs_hz))
    ss = np.random.SeedSequence(int(seed))
    r_bg, r_sw, r_sp = (np.random.default_rng(s) for s in ss.spawn(3))

    bg = _colored_noise(r_bg, len(CANONICAL_CHANNELS), n, fs_hz, osc.background_exponent)
    bg *= _stage_series(hypnogram, osc.background_rms_uv, fs_hz, n)

    x, y = _narrowband(r_sw, n, fs_hz, osc.sw_center_hz, osc.sw_bandwidth_hz)
    phase = np.arctan2(y, x)
    sw_amp = _stage_series(hypnogram, osc.sw_amplitude_uv, fs_hz, n)

    spindles = _spindle_train(r_sp, hypnogram, osc, fs_hz, n)
    spindles *= 0.5 * (1.0 + coupling.kappa * np.cos(phase - coupling.phi0))

    p_sw, p_sp, erp = _evoked(cue_log, evoked, fs_hz, n)
    return {
        "background": bg,
        "sw": sw_amp * x * np.sqrt(p_sw),
        "spindles": spindles * np.sqrt(p_sp),
        "erp": erp,
        "sw_phase": phase,
        "t": np.arange(n) / fs_hz,
    }


def synth_eeg(hypnogram: Hypnogram, osc: OscillatorParams, coupling: CouplingParams,
              evoked, cue_log: Optional[CueLog], group: str, fs_hz: int, seed: int) -> Recording:
    """Six-channel synthetic sleep EEG in µV.

    ``evoked`` is either an EvokedModel (looked up by ``group``) or the
    GroupEvoked parameters to use directly.
    """
    model = evoked[group] if isinstance(evoked, EvokedModel) else evoked
    c = synth_components(hypnogram, osc, coupling, model, cue_log, fs_hz, seed)
    common = c["sw"] + c["spindles"] + c["erp"]
    gains = np.asarray(osc.channel_gains)[:, None]
    data = c["background"] + gains * common[None, :]
    return Recording(float(fs_hz), CANONICAL_CHANNELS, data)


# --- simulation spec ----------------------------------------------------------------

@dataclass(frozen=True)
class SimulationSpec:
    """Everything needed to simulate a cohort, as one JSON-serializable value."""

    cohort: CohortSpec = field(default_factory=CohortSpec)
    hypnogram: HypnogramModel = field(default_factory=HypnogramModel)
    oscillators: OscillatorParams = field(default_factory=OscillatorParams)
    coupling: Mapping = field(default_factory=_default_coupling)
    evoked: EvokedModel = field(default_factory=EvokedModel)
    fs_hz: int = 100

    def __post_init__(self):
        if self.fs_hz not in ALLOWED_FS:
            raise ValueError(f"fs_hz must be one of {ALLOWED_FS}")
        for g in self.cohort.groups:
            if g not in self.coupling:
                raise ValueError(f"no coupling parameters for group {g!r}")

    def with_seed(self, seed: int) -> "SimulationSpec":
        return replace(self, cohort=replace(self.cohort, master_seed=int(seed)))

    def to_dict(self) -> dict:
        c = self.cohort
        return {
            "cohort": {"n_per_group": c.n_per_group, "policies": dict(c.policies),
                       "level_proportions": list(c.level_proportions),
                       "pre_correct_prob": list(c.pre_correct_prob),
                       "consolidation": {g: {lv: list(v) for lv, v in d.items()}
                                         for g, d in c.consolidation.items()},
                       "master_seed": int(c.master_seed)},
            "hypnogram": {"initial_stage": self.hypnogram.initial_stage.value,
                          "transition_matrix": self.hypnogram.transition_matrix.tolist(),
                          "duration_epochs": self.hypnogram.duration_epochs},
            "oscillators": {k: (list(v) if isinstance(v, tuple) else v)
                            for k, v in asdict(self.oscillators).items()},
            "coupling": {g: asdict(v) for g, v in self.coupling.items()},
            "evoked": {g: asdict(v) for g, v in self.evoked.groups.items()},
            "fs_hz": self.fs_hz,
        }

    @classmethod
    def from_dict(cls, d: Mapping, path: str = "") -> "SimulationSpec":
        cfg.check_keys(d, ("cohort", "hypnogram", "oscillators", "coupling", "evoked", "fs_hz"),
                       path)
        base = cls()
        cohort = _build(CohortSpec, cfg.get(d, "cohort", path), cfg.join(path, "cohort"),
                        seeds=("master_seed",), tuples=("level_proportions", "pre_correct_prob"))
        hyp = _build(HypnogramModel, cfg.get(d, "hypnogram", path, default={}),
                     cfg.join(path, "hypnogram"), drop=("seed",))
        osc = _build(OscillatorParams, cfg.get(d, "oscillators", path, default={}),
                     cfg.join(path, "oscillators"), tuples=("channel_gains",))
        cp = cfg.join(path, "coupling")
        coupling = dict(base.coupling)
        for g, v in cfg.get(d, "coupling", path, default={}).items():
            coupling[g] = _build(CouplingParams, v, cfg.join(cp, g))
        ep = cfg.join(path, "evoked")
        groups = dict(base.evoked.groups)
        for g, v in cfg.get(d, "evoked", path, default={}).items():
            groups[g] = _build(GroupEvoked, v, cfg.join(ep, g))
        fs = cfg.get(d, "fs_hz", path, int, default=100)
        try:
            return cls(cohort, hyp, osc, coupling, EvokedModel(groups), fs)
        except ValueError as exc:
            raise cfg.ConfigError(path, str(exc)) from None


def _build(klass, data, path, seeds=(), tuples=(), drop=()):
    names = [f.name for f in klass.__dataclass_fields__.values() if f.name not in drop]
    cfg.check_keys(data, names, path)
    kwargs = {}
    for k, v in data.items():
        here = cfg.join(path, k)
        if k in seeds:
            try:
                v = cfg.seed_value(v)
            except (TypeError, ValueError) as exc:
                raise cfg.ConfigError(here, str(exc)) from None
        elif k in tuples:
            v = tuple(v)
        kwargs[k] = v
    for k in seeds:
        if k not in kwargs:
            raise cfg.ConfigError(cfg.join(path, k), "missing required field")
    try:
        return klass(**kwargs)
    except (TypeError, ValueError) as exc:
        raise cfg.ConfigError(path, str(exc)) from None


@dataclass(frozen=True)
class Participant:
    index: int
    participant_id: str
    group: str
    seed: int

    def stream(self, name: str) -> int:
        keys = {"behavior": 0, "hypnogram": 1, "schedule": 2, "eeg": 3}
        return child_seed(self.seed, keys[name])


def participants(spec: SimulationSpec) -> list:
    return [Participant(i, pid, g, child_seed(spec.cohort.master_seed, i))
            for i, pid, g in spec.cohort.participants()]


def simulate_participant(spec: SimulationSpec, participant: Participant, scheduler_config=None):
    """Hypnogram, behavior, cue log, sham log and recording of one participant.

    Unstimulated groups get a sham log: the markers a fixed-order schedule
    would have produced, with no evoked response in the EEG.
    """
    from . import scheduler as sch

    scheduler_config = scheduler_config or sch.SchedulerConfig()
    hyp = gen_hypnogram(replace(spec.hypnogram, seed=participant.stream("hypnogram")))
    pre, post = gen_behavior(spec.cohort, participant.stream("behavior"), participant.group)
    policy = sch.Policy.parse(spec.cohort.policies[participant.group])
    plan_seed = participant.stream("schedule")
    plan = sch.compile_plan(policy, pre, plan_seed)
    log = sch.run(hyp, plan, scheduler_config)
    sham = None
    if policy.kind == "nostim":
        sham = sch.run(hyp, sch.compile_plan(sch.Policy.fixed(), pre, plan_seed), scheduler_config)
    rec = synth_eeg(hyp, spec.oscillators, spec.coupling[participant.group], spec.evoked,
                    log, participant.group, spec.fs_hz, participant.stream("eeg"))
    return {"hypnogram": hyp, "pre": pre, "post": post, "plan": plan, "cue_log": log,
            "sham_log": sham, "recording": rec}
