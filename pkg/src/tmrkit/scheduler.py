"""Closed-loop cue scheduling against a staged hypnogram.

The scheduler is a small deterministic state machine fed one 30-s epoch
at a time. Cues are delivered only after a run of consecutive N2/N3
epochs; any Wake, REM or N1 epoch pauses delivery and resets the run.

Example
-------
>>> plan = compile_plan(Policy.personalized(), pre_records, seed=7)
>>> log = run(hypnogram, plan, SchedulerConfig())
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Sequence

import numpy as np

from .core import N_ITEMS, CueEvent, CueLog, Hypnogram, Level, SleepStage


DEFAULT_PRES = {
    (Level.L1, True): 0, (Level.L1, False): 0,
    (Level.L2, True): 1, (Level.L2, False): 2,
    (Level.L3, True): 4, (Level.L3, False): 4,
}


@dataclass(frozen=True)
class PresRule:
    """Number of consecutive presentations per (level, pre-sleep correct)."""

    table: Mapping = field(default_factory=lambda: dict(DEFAULT_PRES))

    def __post_init__(self):
        table = {(Level(k[0]), bool(k[1])): int(v) for k, v in dict(self.table).items()}
        missing = [k for k in DEFAULT_PRES if k not in table]
        if missing:
            raise ValueError(f"PresRule missing entries for {missing}")
        if any(v < 0 for v in table.values()):
            raise ValueError("repetitions must be >= 0")
        object.__setattr__(self, "table", table)

    def reps(self, level, correct: bool) -> int:
        return self.table[(Level(level), bool(correct))]


@dataclass(frozen=True)
class Policy:
    kind: str
    rule: Optional[PresRule] = None

    def __post_init__(self):
        if self.kind not in ("nostim", "fixed", "personalized"):
            raise ValueError(f"unknown policy {self.kind!r}")
        if self.kind == "personalized" and self.rule is None:
            object.__setattr__(self, "rule", PresRule())

    @classmethod
    def no_stim(cls):
        return cls("nostim")

    @classmethod
    def fixed(cls):
        return cls("fixed")

    @classmethod
    def personalized(cls, rule: Optional[PresRule] = None):
        return cls("personalized", rule)

    @classmethod
    def parse(cls, name: str) -> "Policy":
        key = name.strip().lower()
        aliases = {"cnt": "nostim", "none": "nostim", "no_stim": "nostim",
                   "tmr": "fixed", "ptmr": "personalized"}
        return cls(aliases.get(key, key))


@dataclass(frozen=True)
class SchedulerConfig:
    cue_window_ms: int = 4000
    isi_ms: int = 4000
    stability_epochs: int = 10
    eligible_stages: frozenset = frozenset({SleepStage.N2, SleepStage.N3})
    epoch_ms: int = 30000
    # When True an onset is admitted only if the whole cue window ends
    # inside the current epoch; the skipped slot keeps the 8-s grid.
    window_must_fit: bool = False
    second_word_offset_ms: int = 2000

    @property
    def spacing_ms(self) -> int:
        return self.cue_window_ms + self.isi_ms


@dataclass(frozen=True)
class Block:
    item_id: int
    reps: int
    level: Optional[Level] = None


@dataclass(frozen=True)
class CuePlan:
    """Shuffled blocks of consecutive presentations.

    ``blocks`` holds the first-pass order. When ``cycling`` is set, each
    later pass reshuffles the same blocks with a seed derived from
    (``seed``, pass index).
    """

    policy: str
    blocks: tuple
    seed: int
    cycling: bool = True

    def __post_init__(self):
        object.__setattr__(self, "_orders", {0: self.blocks})

    def __len__(self):
        return len(self.blocks)

    @property
    def cues_per_pass(self) -> int:
        return sum(b.reps for b in self.blocks)

    def pass_order(self, pass_index: int) -> tuple:
        order = self._orders.get(pass_index)
        if order is None:
            base = sorted(self.blocks, key=lambda b: b.item_id)
            rng = np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=(pass_index,)))
            order = tuple(base[i] for i in rng.permutation(len(base)))
            self._orders[pass_index] = order
        return order

    def to_dict(self) -> dict:
        return {"policy": self.policy, "seed": int(self.seed),
                "blocks": [{"item_id": b.item_id, "reps": b.reps} for b in self.blocks]}


def compile_plan(policy: Policy, pre_records: Sequence, seed: int,
                 n_items: int = N_ITEMS, cycling: bool = True) -> CuePlan:
    """Build the cue plan for one participant from pre-sleep records."""
    pre = {r.item_id: r for r in pre_records if r.session == "pre"}
    missing = [i for i in range(1, n_items + 1) if i not in pre]
    if missing and policy.kind != "nostim":
        raise ValueError(f"missing pre-sleep records for items {missing}")
    if policy.kind == "nostim":
        blocks = []
    elif policy.kind == "fixed":
        blocks = [Block(i, 1, pre[i].level) for i in range(1, n_items + 1)]
    else:
        blocks = []
        for i in range(1, n_items + 1):
            k = policy.rule.reps(pre[i].level, pre[i].correct)
            if k > 0:
                blocks.append(Block(i, k, pre[i].level))
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0,)))
    order = tuple(blocks[i] for i in rng.permutation(len(blocks)))
    return CuePlan(policy.kind, order, int(seed), cycling)


class Mode(enum.Enum):
    AWAITING = "awaiting_stability"
    DELIVERING = "delivering"
    EXHAUSTED = "exhausted"


@dataclass(frozen=True)
class SchedulerState:
    plan: CuePlan
    mode: Mode = Mode.AWAITING
    consecutive_eligible: int = 0
    next_onset_ms: Optional[int] = None
    pass_index: int = 0
    block_index: int = 0
    pres_done: int = 0
    block_id: int = 1
    n_emitted: int = 0


def initial_state(plan: CuePlan) -> SchedulerState:
    mode = Mode.EXHAUSTED if plan.cues_per_pass == 0 else Mode.AWAITING
    return SchedulerState(plan, mode)


def step(state: SchedulerState, config: SchedulerConfig, epoch_stage: SleepStage,
         epoch_start_ms: int):
    """Advance the scheduler by one epoch.

    Returns the new state and the cue events whose onsets fall in this
    epoch.
    """
    stage = SleepStage.parse(epoch_stage)
    if stage not in config.eligible_stages:
        if state.mode is Mode.EXHAUSTED:
            return replace(state, consecutive_eligible=0), []
        return replace(state, mode=Mode.AWAITING, consecutive_eligible=0,
                       next_onset_ms=None), []

    count = state.consecutive_eligible + 1
    if state.mode is Mode.EXHAUSTED:
        return replace(state, consecutive_eligible=count), []
    if state.mode is Mode.AWAITING:
        if count >= config.stability_epochs:
            return replace(state, mode=Mode.DELIVERING, consecutive_eligible=count,
                           next_onset_ms=epoch_start_ms + config.epoch_ms), []
        return replace(state, consecutive_eligible=count), []

    plan = state.plan
    epoch_end = epoch_start_ms + config.epoch_ms
    onset = max(state.next_onset_ms, epoch_start_ms)
    order = plan.pass_order(state.pass_index)
    p, b, done, bid = state.pass_index, state.block_index, state.pres_done, state.block_id
    mode = Mode.DELIVERING
    events = []
    while onset < epoch_end:
        if config.window_must_fit and onset + config.cue_window_ms > epoch_end:
            onset += config.spacing_ms
            continue
        block = order[b]
        events.append(CueEvent(int(onset), block.item_id, done + 1, bid,
                               config.second_word_offset_ms))
        onset += config.spacing_ms
        done += 1
        if done == block.reps:
            done, b, bid = 0, b + 1, bid + 1
            if b == len(order):
                if not plan.cycling:
                    mode = Mode.EXHAUSTED
                    break
                p, b = p + 1, 0
                order = plan.pass_order(p)
    new = replace(state, mode=mode, consecutive_eligible=count, next_onset_ms=onset,
                  pass_index=p, block_index=b, pres_done=done, block_id=bid,
                  n_emitted=state.n_emitted + len(events))
    return new, events


def run(hypnogram: Hypnogram, plan: CuePlan, config: SchedulerConfig = SchedulerConfig()) -> CueLog:
    """Replay the scheduler over every epoch of ``hypnogram``."""
    if abs(hypnogram.epoch_length_s * 1000 - config.epoch_ms) > 1e-6:
        raise ValueError("hypnogram epoch length does not match scheduler config")
    state = initial_state(plan)
    events = []
    for i, stage in enumerate(hypnogram.stages):
        state, new = step(state, config, stage, i * config.epoch_ms)
        events.extend(new)
    return CueLog(tuple(events), summarize(events, plan, config, state))


def summarize(events, plan: CuePlan, config: SchedulerConfig, state=None) -> dict:
    levels = {b.item_id: b.level for b in plan.blocks}
    reps = {b.item_id: b.reps for b in plan.blocks}
    per_level = {lv.value: 0 for lv in Level}
    per_reps = {}
    for e in events:
        lv = levels.get(e.item_id)
        if lv is not None:
            per_level[lv.value] += 1
        k = reps.get(e.item_id)
        per_reps[str(k)] = per_reps.get(str(k), 0) + 1
    # a delivery run ends wherever the onset grid is broken
    delivery_ms = 0
    if events:
        start = prev = events[0].onset_ms
        for e in events[1:]:
            if e.onset_ms - prev != config.spacing_ms:
                delivery_ms += prev + config.cue_window_ms - start
                start = e.onset_ms
            prev = e.onset_ms
        delivery_ms += prev + config.cue_window_ms - start
    out = {
        "policy": plan.policy,
        "total_cues": len(events),
        "per_level": per_level,
        "per_reps": dict(sorted(per_reps.items())),
        "delivery_min": delivery_ms / 60000.0,
    }
    if state is not None:
        out["passes_started"] = state.pass_index + (1 if events else 0)
    return out
