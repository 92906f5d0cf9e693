"""Property-based checks of the invariants each module promises."""
from fractions import Fraction

import numpy as np
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tmrkit import behavior as bh
from tmrkit import decoding as dc
from tmrkit import erpac as ep
from tmrkit import preprocess as pp
from tmrkit import scheduler as sch
from tmrkit import spectral as spc
from tmrkit import stats
from tmrkit.core import BehavioralRecord, Hypnogram, Level

from conftest import make_pre
from oracles import circular_linear_direct, replay_violations

FAST = settings(max_examples=60, deadline=None,
                suppress_health_check=[HealthCheck.too_slow])
finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
stage = st.sampled_from(["W", "R", "N1", "N2", "N3"])


@st.composite
def hypnograms(draw):
    # runs of stages, so long N2/N3 stretches occur often enough to matter
    runs = draw(st.lists(st.tuples(stage, st.integers(1, 30)), min_size=1, max_size=12))
    return Hypnogram(tuple(s for s, n in runs for _ in range(n)))


@st.composite
def pre_records(draw, n=104):
    levels = draw(st.lists(st.sampled_from(list(Level)), min_size=n, max_size=n))
    correct = draw(st.lists(st.booleans(), min_size=n, max_size=n))
    return make_pre(levels, correct)


@FAST
@given(hypnograms(), pre_records(), st.sampled_from(["fixed", "personalized"]),
       st.integers(0, 2 ** 32))
def test_scheduler_never_breaks_delivery_rules(hyp, pre, policy, seed):
    plan = sch.compile_plan(sch.Policy.parse(policy), pre, seed)
    log = sch.run(hyp, plan)
    assert replay_violations(hyp, log) == []
    onsets = [e.onset_ms for e in log]
    assert onsets == sorted(set(onsets))


@FAST
@given(pre_records(), st.integers(0, 2 ** 32))
def test_plan_repetitions_follow_the_rule(pre, seed):
    plan = sch.compile_plan(sch.Policy.personalized(), pre, seed)
    rule = sch.PresRule()
    want = {r.item_id: rule.reps(r.level, r.correct) for r in pre}
    assert {b.item_id: b.reps for b in plan.blocks} == {k: v for k, v in want.items() if v}


@FAST
@given(st.integers(3, 40).flatmap(lambda n: st.tuples(
    arrays(float, n, elements=st.floats(-np.pi, np.pi)),
    arrays(float, n, elements=finite))))
def test_circular_linear_bounded_and_matches_oracle(pa):
    ph, a = pa
    try:
        r = ep.erpac_at(ph, a)
    except ValueError:
        return  # degenerate phase sets are rejected, not scored
    assert 0.0 <= r <= 1.0 + 1e-12
    if np.ptp(a) == 0:
        assert r == 0.0  # constant amplitude carries no coupling
    else:
        assert abs(r - circular_linear_direct(ph, a)) < 1e-8


@FAST
@given(arrays(float, st.integers(1, 40), elements=st.floats(0, 1)))
def test_adjusted_p_values_are_valid(p):
    adj, rej = stats.bh_fdr(p)
    order = np.argsort(p, kind="stable")
    assert np.all(np.diff(adj[order]) >= -1e-15)
    assert np.all(adj >= p - 1e-15) and np.all(adj <= 1)
    bon = stats.bonferroni(p)
    assert np.all(bon >= adj - 1e-12) and np.all(bon <= 1)


@FAST
@given(arrays(float, st.integers(5, 30), elements=st.floats(-5, 5)), st.integers(0, 1000))
def test_clusters_disjoint_and_ordered(obs, seed):
    ens = np.random.default_rng(seed).standard_normal((40, len(obs)))
    res = stats.cluster_permutation(obs, ens, 0.05, 50, seed=seed)
    prev = -1
    for c in res.clusters:
        assert prev < c.start <= c.stop and 0 <= c.p <= 1
        prev = c.stop


@FAST
@given(st.lists(st.integers(0, 3), min_size=20, max_size=120), st.integers(2, 5),
       st.integers(0, 2 ** 32))
def test_folds_partition_and_balance(codes, k, seed):
    codes = np.array(codes)
    if np.bincount(codes).min(initial=0) < k or len(np.unique(codes)) < 2:
        return
    folds = dc.stratified_folds(codes, k, np.random.default_rng(seed))
    assert set(folds) == set(range(k))
    for c in np.unique(codes):
        share = np.sum(codes == c) / k
        per_fold = np.bincount(folds[codes == c], minlength=k)
        assert np.all(np.abs(per_fold - share) <= 1)


@FAST
@given(arrays(float, (2, 450), elements=st.floats(-100, 100)))
def test_parseval_per_frame(x):
    cfg = spc.SpectrogramConfig()
    p = spc.power(x)
    frames = np.lib.stride_tricks.sliding_window_view(x, 32, axis=-1)[..., ::8, :]
    direct = 200 * ((frames * cfg.window()) ** 2).sum(-1)
    one_sided = p[..., 0, :] + p[..., 100, :] + 2 * p[..., 1:100, :].sum(axis=-2)
    np.testing.assert_allclose(one_sided, direct, rtol=1e-9, atol=1e-9)


@FAST
@given(arrays(float, (3, 6, 450), elements=st.floats(-400, 400)), st.floats(-50, 50))
def test_baseline_correction_zeroes_the_baseline(data, offset):
    out = pp.baseline_correct(pp.EpochSet(data + offset))
    np.testing.assert_allclose(out.data[:, :, :50].mean(axis=2), 0.0, atol=1e-9)


@FAST
@given(arrays(float, (8, 6, 450), elements=st.floats(-700, 700)))
def test_rejection_conserves_trials(data):
    kept, rep = pp.reject_amplitude(pp.EpochSet(data))
    over = np.abs(data).max(axis=(1, 2)) > 500
    assert kept.n_trials + len(rep.dropped) == 8
    assert list(rep.dropped) == list(np.flatnonzero(over))


@FAST
@given(st.lists(st.tuples(st.sampled_from(list(Level)), st.booleans(), st.booleans()),
                min_size=1, max_size=104))
def test_behavior_identities_are_exact(items):
    pre = [BehavioralRecord(i + 1, "pre", c0, lv) for i, (lv, c0, _) in enumerate(items)]
    post = [BehavioralRecord(i + 1, "post", c1, lv) for i, (lv, _, c1) in enumerate(items)]
    for level in (None, Level.L1, Level.L2, Level.L3):
        t = bh.transitions(pre, post, level)
        if t.n == 0:
            continue
        f = t.fractions()
        assert f["CC"] + f["IC"] == bh.accuracy(post, level).fraction
        assert f["CC"] + f["CI"] == bh.accuracy(pre, level).fraction
        assert sum(f.values()) == Fraction(1)
        assert abs(sum(t.ratios().values()) - 1.0) <= 1e-12
