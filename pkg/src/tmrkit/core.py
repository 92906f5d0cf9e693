"""Domain types shared across the toolkit.

Hypnograms, recordings, behavioral records and cue events are immutable
values. Validation of recordings is report-based (`validate_recording`)
rather than raising, so malformed input can be inspected before repair.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

CANONICAL_CHANNELS = ("F3", "F4", "C3", "C4", "O1", "O2")
N_ITEMS = 104
EPOCH_LENGTH_S = 30.0


class SleepStage(enum.Enum):
    WAKE = "W"
    REM = "R"
    N1 = "N1"
    N2 = "N2"
    N3 = "N3"

    @property
    def eligible(self) -> bool:
        """True for the stages in which cues may be delivered."""
        return self in (SleepStage.N2, SleepStage.N3)

    @property
    def index(self) -> int:
        return _STAGE_ORDER.index(self)

    @classmethod
    def parse(cls, value) -> "SleepStage":
        if isinstance(value, SleepStage):
            return value
        key = str(value).strip().upper()
        aliases = {"WAKE": "W", "REM": "R", "NREM1": "N1", "NREM2": "N2",
                   "NREM3": "N3", "S1": "N1", "S2": "N2", "S3": "N3"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown sleep stage {value!r}") from None


_STAGE_ORDER = (SleepStage.WAKE, SleepStage.REM, SleepStage.N1,
                SleepStage.N2, SleepStage.N3)
STAGES = _STAGE_ORDER


class Level(str, enum.Enum):
    L1 = "L1"
    L2 = "L2"
    L3 = "L3"

    @property
    def rank(self) -> int:
        return int(self.value[1])


@dataclass(frozen=True)
class Hypnogram:
    """Sequence of 30-s sleep-stage epochs.

    ``lights_off_s`` and ``lights_on_s`` delimit time in bed and must fall
    on epoch boundaries. ``lights_on_s`` defaults to the end of the record.
    """

    stages: tuple
    epoch_length_s: float = EPOCH_LENGTH_S
    lights_off_s: float = 0.0
    lights_on_s: Optional[float] = None

    def __post_init__(self):
        stages = tuple(SleepStage.parse(s) for s in self.stages)
        if not stages:
            raise ValueError("hypnogram must contain at least one epoch")
        object.__setattr__(self, "stages", stages)
        if self.lights_on_s is None:
            object.__setattr__(self, "lights_on_s", self.duration_s)
        if not 0 <= self.lights_off_s <= self.lights_on_s <= self.duration_s:
            raise ValueError("require 0 <= lights_off_s <= lights_on_s <= duration")
        for name in ("lights_off_s", "lights_on_s"):
            q = getattr(self, name) / self.epoch_length_s
            if abs(q - round(q)) > 1e-9:
                raise ValueError(f"{name} must lie on an epoch boundary")

    def __len__(self) -> int:
        return len(self.stages)

    @property
    def duration_s(self) -> float:
        return self.epoch_length_s * len(self.stages)

    @cached_property
    def codes(self) -> np.ndarray:
        """Stage indices in ``STAGES`` order, one per epoch."""
        out = np.array([s.index for s in self.stages], dtype=np.int8)
        out.flags.writeable = False
        return out

    def stage_at(self, t_s: float) -> SleepStage:
        i = int(t_s // self.epoch_length_s)
        if not 0 <= i < len(self.stages):
            raise IndexError(f"time {t_s} s outside hypnogram")
        return self.stages[i]


@dataclass(frozen=True)
class Recording:
    """Multichannel EEG in microvolts, channels x samples.

    Construction does not enforce the six-channel layout; use
    `validate_recording` to check it and `canonical` to reorder rows.
    """

    sample_rate_hz: float
    channel_labels: tuple
    samples: np.ndarray
    t0_s: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "channel_labels", tuple(self.channel_labels))
        arr = np.asarray(self.samples)
        if arr.ndim != 2:
            raise ValueError("samples must be a channels x time matrix")
        arr = arr.view()
        arr.flags.writeable = False
        object.__setattr__(self, "samples", arr)

    @property
    def n_channels(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.sample_rate_hz

    def with_samples(self, samples, sample_rate_hz=None) -> "Recording":
        return Recording(self.sample_rate_hz if sample_rate_hz is None else sample_rate_hz,
                         self.channel_labels, samples, self.t0_s)

    def canonical(self) -> "Recording":
        """Reorder rows to F3,F4,C3,C4,O1,O2 when the labels are a permutation."""
        labels = self.channel_labels
        if labels == CANONICAL_CHANNELS or sorted(labels) != sorted(CANONICAL_CHANNELS):
            return self
        order = [labels.index(ch) for ch in CANONICAL_CHANNELS]
        return Recording(self.sample_rate_hz, CANONICAL_CHANNELS,
                         np.ascontiguousarray(self.samples[order]), self.t0_s)


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple = ()

    @property
    def valid(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.valid


def validate_recording(recording: Recording) -> ValidationReport:
    """Check a recording against the six-channel, finite-sample layout."""
    problems = []
    labels = tuple(recording.channel_labels)
    if recording.n_channels != len(CANONICAL_CHANNELS):
        problems.append(f"channel count: expected {len(CANONICAL_CHANNELS)}, "
                        f"got {recording.n_channels}")
    if len(labels) != recording.n_channels:
        problems.append(f"length mismatch: {len(labels)} labels for "
                        f"{recording.n_channels} channel rows")
    elif labels != CANONICAL_CHANNELS and len(labels) == len(CANONICAL_CHANNELS):
        problems.append(f"label order: expected {CANONICAL_CHANNELS}, got {labels}")
    if not recording.sample_rate_hz > 0:
        problems.append("sample rate must be positive")
    if not np.all(np.isfinite(recording.samples)):
        bad = np.argwhere(~np.isfinite(recording.samples))[0]
        problems.append(f"non-finite sample at channel {bad[0]}, index {bad[1]}")
    return ValidationReport(tuple(problems))


@dataclass(frozen=True)
class WordPairItem:
    item_id: int
    cue_word: str
    target_word: str


@dataclass(frozen=True)
class BehavioralRecord:
    item_id: int
    session: str
    correct: bool
    level: Level
    response_text: Optional[str] = None

    def __post_init__(self):
        if self.session not in ("pre", "post"):
            raise ValueError(f"session must be 'pre' or 'post', got {self.session!r}")
        object.__setattr__(self, "level", Level(self.level))
        object.__setattr__(self, "correct", bool(self.correct))
        object.__setattr__(self, "item_id", int(self.item_id))


def check_unique_records(records: Iterable[BehavioralRecord]) -> None:
    seen = set()
    for r in records:
        key = (r.item_id, r.session)
        if key in seen:
            raise ValueError(f"duplicate record for item {r.item_id} ({r.session})")
        seen.add(key)


@dataclass(frozen=True)
class CueEvent:
    onset_ms: int
    item_id: int
    pres_index: int
    block_id: int
    second_word_offset_ms: int = 2000

    def __post_init__(self):
        if self.onset_ms < 0:
            raise ValueError("onset_ms must be >= 0")
        if self.pres_index < 1:
            raise ValueError("pres_index must be >= 1")
        if not 1800 <= self.second_word_offset_ms <= 2200:
            raise ValueError("second_word_offset_ms must lie in [1800, 2200]")


@dataclass(frozen=True)
class CueLog:
    """Cue events sorted by onset, plus a delivery summary."""

    events: tuple = ()
    summary: Mapping = field(default_factory=dict)

    def __post_init__(self):
        events = tuple(sorted(self.events, key=lambda e: e.onset_ms))
        object.__setattr__(self, "events", events)

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self):
        return iter(self.events)

    @property
    def onsets_ms(self) -> np.ndarray:
        return np.array([e.onset_ms for e in self.events], dtype=np.int64)


@dataclass(frozen=True)
class SleepArchitecture:
    time_in_bed_min: float
    tst_min: float
    sol_min: float
    waso_min: float
    terminal_wake_min: float
    se_pct: float
    stage_min: Mapping
    stage_pct: Mapping
    sol_defined: bool = True


def score_architecture(hypnogram: Hypnogram) -> SleepArchitecture:
    """Standard sleep-architecture summary over the lights-off interval.

    Time in bed partitions exactly into sleep-onset latency, total sleep
    time, wake after sleep onset and terminal wake. For an all-wake night
    the latency is undefined; it is reported as the whole time in bed and
    ``sol_defined`` is False.
    """
    ep = hypnogram.epoch_length_s
    i0 = int(round(hypnogram.lights_off_s / ep))
    i1 = int(round(hypnogram.lights_on_s / ep))
    codes = np.asarray(hypnogram.codes[i0:i1])
    n = len(codes)
    to_min = ep / 60.0
    wake = SleepStage.WAKE.index
    asleep = np.flatnonzero(codes != wake)
    if asleep.size:
        first, last = asleep[0], asleep[-1]
        sol_ep = first
        tst_ep = asleep.size
        waso_ep = int(np.sum(codes[first:last + 1] == wake))
        term_ep = n - 1 - last
        sol_defined = True
    else:
        sol_ep, tst_ep, waso_ep, term_ep = n, 0, 0, 0
        sol_defined = False
    stage_min = {}
    stage_pct = {}
    for st in STAGES:
        k = int(np.sum(codes == st.index))
        stage_min[st.value] = k * to_min
        stage_pct[st.value] = 100.0 * k / n if n else 0.0
    return SleepArchitecture(
        time_in_bed_min=n * to_min,
        tst_min=tst_ep * to_min,
        sol_min=sol_ep * to_min,
        waso_min=waso_ep * to_min,
        terminal_wake_min=term_ep * to_min,
        se_pct=100.0 * tst_ep / n if n else 0.0,
        stage_min=stage_min,
        stage_pct=stage_pct,
        sol_defined=sol_defined,
    )


def records_by_item(records: Sequence[BehavioralRecord]) -> dict:
    return {r.item_id: r for r in records}
