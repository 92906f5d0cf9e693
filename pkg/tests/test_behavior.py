import pytest

from tmrkit import behavior as bh
from tmrkit.core import BehavioralRecord, Level


def _pair(levels, pre_ok, post_ok):
    pre = [BehavioralRecord(i + 1, "pre", c, lv) for i, (lv, c) in enumerate(zip(levels, pre_ok))]
    post = [BehavioralRecord(i + 1, "post", c, lv) for i, (lv, c) in enumerate(zip(levels, post_ok))]
    return pre, post


def test_accuracy_by_level():
    pre, _ = _pair(["L1", "L1", "L2", "L3"], [True, False, True, True], [True] * 4)
    assert bh.accuracy(pre).percent == 75.0
    assert bh.accuracy(pre, "L1").percent == 50.0
    row = bh.accuracy([r for r in pre if r.level != Level.L3], "L3")
    assert not row.present and row.percent is None


def test_transition_counts_and_identities():
    pre, post = _pair(["L2"] * 5, [True, True, False, False, True], [True, False, True, False, True])
    t = bh.transitions(pre, post)
    assert (t.cc, t.ci, t.ic, t.ii) == (2, 1, 1, 1)
    f = t.fractions()
    assert f["CC"] + f["IC"] == bh.accuracy(post).fraction
    assert f["CC"] + f["CI"] == bh.accuracy(pre).fraction
    assert sum(t.ratios().values()) == pytest.approx(1.0, abs=1e-12)


def test_unmatched_items_rejected():
    pre, post = _pair(["L1", "L2"], [True, True], [True, True])
    with pytest.raises(ValueError, match="one session only"):
        bh.transitions(pre, post[:1])


def test_level_filter_uses_pre_sleep_level():
    pre, post = _pair(["L1", "L3", "L3"], [True, False, False], [True, True, False])
    t = bh.transitions(pre, post, "L3")
    assert (t.ic, t.ii, t.n) == (1, 1, 2)


def test_edit_distance_and_matching():
    assert bh.edit_distance("kitten", "sitting") == 3
    assert bh.edit_distance("", "abc") == 3
    assert bh.match_answer(" Fabiko ", "fabiko")
    assert bh.match_answer("fabika", "fabiko")
    assert not bh.match_answer("fabuka", "fabiko")
    assert not bh.match_answer("", "fabiko")
    assert not bh.match_answer(None, "fabiko")


def test_difficulty_validity_is_negative_when_hard_items_fail():
    parts = []
    for k in range(4):
        recs = []
        for i, (lv, ok) in enumerate([("L1", True), ("L1", True), ("L2", True), ("L2", k % 2 == 0),
                                      ("L3", False), ("L3", k == 0)]):
            recs.append(BehavioralRecord(i + 1, "pre", ok, lv))
        parts.append(recs)
    res = bh.difficulty_validity(parts)
    assert res.n_points == 12 and res.rho < -0.7


def test_difficulty_validity_needs_all_levels():
    recs = [BehavioralRecord(1, "pre", True, "L1"), BehavioralRecord(2, "pre", False, "L2")]
    with pytest.raises(ValueError, match="all three levels"):
        bh.difficulty_validity([recs])


def test_tables_have_all_rows():
    pre, post = _pair(["L1", "L2", "L3"], [True, False, True], [True, True, False])
    acc = bh.accuracy_table(pre, post)
    assert [r["level"] for r in acc] == ["All", "L1", "L2", "L3"]
    assert acc[0]["diff"] == pytest.approx(0.0)
    tr = bh.transition_table(pre, post)
    assert tr[2]["IC"] == 1.0
