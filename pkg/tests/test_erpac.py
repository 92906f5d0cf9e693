import numpy as np
import pytest

from tmrkit import erpac as ep
from tmrkit.preprocess import EpochSet

from oracles import circular_linear_direct


def test_matches_direct_summation():
    rng = np.random.default_rng(0)
    for _ in range(200):
        n = int(rng.integers(5, 60))
        ph = rng.uniform(-np.pi, np.pi, n)
        a = rng.gamma(2.0, size=n) + rng.uniform(0, 1) * np.cos(ph - rng.uniform(-3, 3))
        assert ep.erpac_at(ph, a) == pytest.approx(circular_linear_direct(ph, a), abs=1e-10)


def test_vectorized_equals_scalar_per_cell():
    rng = np.random.default_rng(1)
    ph = rng.uniform(-np.pi, np.pi, (30, 4, 7))
    a = rng.random((30, 4, 7))
    rho = ep.circular_linear(ph, a, axis=0)
    for c in range(4):
        for t in range(7):
            assert rho[c, t] == pytest.approx(circular_linear_direct(ph[:, c, t], a[:, c, t]),
                                              abs=1e-10)


def test_sine_amplitude_is_fully_coupled():
    rng = np.random.default_rng(2)
    ph = rng.uniform(-np.pi, np.pi, 1000)
    assert ep.erpac_at(ph, np.sin(ph)) >= 0.99
    assert ep.erpac_at(ph, 3 + 2 * np.cos(ph - 1.0)) == pytest.approx(1.0, abs=1e-9)


def test_rho_is_bounded_and_rotation_invariant():
    rng = np.random.default_rng(3)
    ph = rng.uniform(-np.pi, np.pi, 50)
    a = rng.random(50) + np.cos(ph)
    r = ep.erpac_at(ph, a)
    assert 0 <= r <= 1
    assert ep.erpac_at(np.angle(np.exp(1j * (ph + 0.7))), a) == pytest.approx(r, abs=1e-10)
    assert ep.erpac_at(ph, 5 * a + 2) == pytest.approx(r, abs=1e-10)


def test_constant_amplitude_gives_zero_and_degenerate_phase_raises():
    ph = np.linspace(-3, 3, 20)
    assert ep.erpac_at(ph, np.ones(20)) == 0.0
    with pytest.raises(ValueError, match="degenerate phase"):
        ep.erpac_at(np.full(20, 0.5), np.arange(20.0))
    with pytest.raises(ValueError, match="at least 3"):
        ep.erpac_at([0.1, 0.2], [1, 2])


def test_null_expectation_matches_simulation():
    rng = np.random.default_rng(4)
    for n in (20, 100):
        sims = [ep.erpac_at(rng.uniform(-np.pi, np.pi, n), rng.standard_normal(n))
                for _ in range(4000)]
        assert np.mean(sims) == pytest.approx(ep.null_expectation(n), rel=0.03)


def test_smooth_is_edge_truncated_centered_mean():
    x = np.arange(10.0)
    s = ep.smooth(x, window=4)
    # window covers offsets -2..+1
    assert s[0] == pytest.approx(np.mean([0, 1]))
    assert s[5] == pytest.approx(np.mean([3, 4, 5, 6]))
    assert s[9] == pytest.approx(np.mean([7, 8, 9]))
    np.testing.assert_allclose(ep.smooth(x, 1), x)


def test_analytic_of_pure_tone():
    t = np.arange(450) / 100.0
    x = 3 * np.cos(2 * np.pi * 2.0 * t)
    an = ep.analytic(np.broadcast_to(x, (2, 6, 450)).copy(), (1.0, 4.0))
    core = an.reliable
    assert core.sum() == 400 and not core[:25].any() and not core[-25:].any()
    ph = np.unwrap(an.phase[0, 0, core])
    slope = np.polyfit(t[core], ph, 1)[0]
    assert slope * 0.5 == pytest.approx(2 * np.pi, rel=0.01)
    # the 1 Hz filter rings for ~1.5 s near the edges; the middle is clean
    np.testing.assert_allclose(an.amplitude[0, 0, 175:275], 3.0, rtol=0.05)
    assert np.all(an.phase > -np.pi) and np.all(an.phase <= np.pi)


def test_analytic_rejects_too_short_epochs():
    with pytest.raises(ValueError, match="too short for band"):
        ep.analytic(np.zeros((2, 6, 100)), (1.0, 4.0))


def _coupled_epochs(kappa, n_trials=80, seed=0):
    """Spindle-band bursts whose amplitude follows the slow-wave phase."""
    rng = np.random.default_rng(seed)
    t = np.arange(450) / 100.0 - 0.5
    f_sw = 1.2
    phi = 2 * np.pi * f_sw * t[None, :] + rng.uniform(-np.pi, np.pi, (n_trials, 1))
    sw = 30 * np.cos(phi)
    env = 1 + kappa * np.cos(phi)
    sp = 8 * env * np.cos(2 * np.pi * 14 * t[None, :] + rng.uniform(-np.pi, np.pi, (n_trials, 1)))
    x = (sw + sp)[:, None, :] + 2 * rng.standard_normal((n_trials, 6, 450))
    return EpochSet(x)


def test_map_shape_and_coupling_order():
    cfg = ep.ErpacConfig(amp_freqs=(8.0, 14.0))
    strong = ep.erpac_map(_coupled_epochs(1.0), cfg)
    weak = ep.erpac_map(_coupled_epochs(0.0), cfg)
    assert strong.values.shape == (2, 450)
    s1 = ep.coupling_strength(strong, (14, 14), (0, 4))
    s0 = ep.coupling_strength(weak, (14, 14), (0, 4))
    assert s1 > 0.5 > s0
    assert ep.coupling_excess(weak, 80, (14, 14)) == pytest.approx(
        s0 - ep.null_expectation(80))


def test_keep_pairs_has_all_directed_pairs():
    cfg = ep.ErpacConfig(amp_freqs=(14.0,))
    m = ep.erpac_map(_coupled_epochs(0.5, 20), cfg, keep_pairs=True)
    assert m.pairs.shape == (6, 6, 1, 450)
    np.testing.assert_allclose(ep.smooth(m.pairs.mean(axis=(0, 1)), 20), m.values)


def test_coupling_window_validation():
    m = ep.erpac_map(_coupled_epochs(0.5, 10), ep.ErpacConfig(amp_freqs=(14.0,)))
    with pytest.raises(ValueError, match="outside map times"):
        ep.coupling_strength(m, (12, 16), (0, 5))
    with pytest.raises(ValueError, match="outside map frequencies"):
        ep.coupling_strength(m, (4, 6))


def test_amp_freqs_validated():
    with pytest.raises(ValueError):
        ep.ErpacConfig(amp_freqs=(30.0,))


def test_shuffle_null_breaks_coupling():
    e = _coupled_epochs(1.0, 60, seed=3)
    cfg = ep.ErpacConfig(amp_freqs=(14.0,))
    obs = ep.coupling_strength(ep.erpac_map(e, cfg), (14, 14))
    null = ep.shuffle_null(e, cfg, n_shuffles=20, seed=1, band=(14, 14))
    assert obs > null.max()
