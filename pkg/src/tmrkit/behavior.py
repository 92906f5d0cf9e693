"""Memory accuracy, pre/post transitions and difficulty-rating validity."""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional, Sequence

import numpy as np

from .core import Level


LEVEL_FILTERS = ("All", "L1", "L2", "L3")


def _matches(record, level_filter) -> bool:
    if level_filter in (None, "All"):
        return True
    return record.level == Level(level_filter)


@dataclass(frozen=True)
class AccuracyRow:
    level: str
    n_correct: int
    n_total: int

    @property
    def present(self) -> bool:
        return self.n_total > 0

    @property
    def percent(self) -> Optional[float]:
        """Percentage correct, or None when no item has this level."""
        if not self.n_total:
            return None
        return 100.0 * self.n_correct / self.n_total

    @property
    def fraction(self) -> Optional[Fraction]:
        """Exact proportion correct."""
        return Fraction(self.n_correct, self.n_total) if self.n_total else None


def accuracy(records: Iterable, level_filter="All") -> AccuracyRow:
    sel = [r for r in records if _matches(r, level_filter)]
    return AccuracyRow(str(level_filter), sum(r.correct for r in sel), len(sel))


@dataclass(frozen=True)
class TransitionRow:
    level: str
    cc: int
    ci: int
    ic: int
    ii: int

    @property
    def n(self) -> int:
        return self.cc + self.ci + self.ic + self.ii

    def ratios(self) -> Optional[dict]:
        if not self.n:
            return None
        n = self.n
        return {"CC": self.cc / n, "CI": self.ci / n, "IC": self.ic / n, "II": self.ii / n}

    def fractions(self) -> Optional[dict]:
        """Exact ratios; CC + IC and CC + CI equal the post and pre accuracies."""
        if not self.n:
            return None
        n = self.n
        return {"CC": Fraction(self.cc, n), "CI": Fraction(self.ci, n),
                "IC": Fraction(self.ic, n), "II": Fraction(self.ii, n)}


def transitions(pre_records: Sequence, post_records: Sequence, level_filter="All") -> TransitionRow:
    """Count correct/incorrect transitions between sessions.

    Items are selected by their pre-sleep level, which is never re-rated.
    """
    pre = {r.item_id: r for r in pre_records}
    post = {r.item_id: r for r in post_records}
    unmatched = sorted(set(pre) ^ set(post))
    if unmatched:
        raise ValueError(f"items present in one session only: {unmatched}")
    counts = {"cc": 0, "ci": 0, "ic": 0, "ii": 0}
    for item, r0 in pre.items():
        if not _matches(r0, level_filter):
            continue
        key = ("c" if r0.correct else "i") + ("c" if post[item].correct else "i")
        counts[key] += 1
    return TransitionRow(str(level_filter), **counts)


def edit_distance(a: str, b: str) -> int:
    """Levenshtein distance (unit-cost insert, delete, substitute)."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def match_answer(response_text: Optional[str], target_word: str, max_distance: int = 1) -> bool:
    if response_text is None:
        return False
    a = response_text.strip().casefold()
    b = target_word.strip().casefold()
    if not a:
        return False
    return edit_distance(a, b) <= max_distance


@dataclass(frozen=True)
class DifficultyValidity:
    rho: float
    p: float
    n_points: int
    defined: bool = True


def difficulty_validity(participant_records: Sequence[Sequence]) -> DifficultyValidity:
    """Spearman correlation between difficulty level and accuracy.

    ``participant_records`` holds one record list per participant, all from
    the same group and session. Each participant contributes one point per
    represented level (level rank, accuracy percent).
    """
    from .stats import spearman

    xs, ys = [], []
    for records in participant_records:
        for lv in Level:
            row = accuracy(records, lv.value)
            if row.present:
                xs.append(lv.rank)
                ys.append(row.percent)
    if len(set(xs)) < 3:
        raise ValueError("difficulty validity needs all three levels represented")
    res = spearman(xs, ys)
    return DifficultyValidity(res.coefficient, res.p, len(xs), res.defined)


def accuracy_table(pre_records, post_records) -> list:
    """Rows of (level, pre %, post %, post - pre) for All and L1..L3."""
    rows = []
    for lv in LEVEL_FILTERS:
        a0 = accuracy(pre_records, lv)
        # post items are selected by their pre-sleep level
        pre_lv = {r.item_id for r in pre_records if _matches(r, lv)}
        a1 = accuracy([r for r in post_records if r.item_id in pre_lv])
        diff = None if a0.percent is None else a1.percent - a0.percent
        rows.append({"level": lv, "pre": a0.percent, "post": a1.percent, "diff": diff,
                     "n": a0.n_total})
    return rows


def transition_table(pre_records, post_records) -> list:
    rows = []
    for lv in LEVEL_FILTERS:
        t = transitions(pre_records, post_records, lv)
        rows.append({"level": lv, "n": t.n, **(t.ratios() or
                    {"CC": None, "CI": None, "IC": None, "II": None})})
    return rows
