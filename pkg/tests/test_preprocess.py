import numpy as np
import pytest
from scipy import signal

from tmrkit import preprocess as pp
from tmrkit.core import CANONICAL_CHANNELS, CueEvent, CueLog, Level, Recording

from conftest import noise_recording, regular_log


def gain_db(spec, f, fs=100.0):
    sos = spec.sos(fs)
    _, h = signal.sosfreqz(sos, worN=[f], fs=fs)
    # forward-backward filtering squares the magnitude response
    return 20 * np.log10(np.abs(h[0]) ** 2)


def test_bandpass_attenuation():
    spec = pp.FilterSpec()
    assert gain_db(spec, 0.2) <= -30
    assert gain_db(spec, 40.0, fs=100.0) <= -30
    assert abs(gain_db(spec, 10.0)) <= 1


def test_zero_phase_has_no_lag():
    t = np.arange(3000) / 100.0
    x = np.sin(2 * np.pi * 8 * t)
    rec = Recording(100.0, CANONICAL_CHANNELS, np.tile(x, (6, 1)))
    y = pp.bandpass(rec).samples[0]
    mid = slice(500, 2500)
    lags = np.arange(-10, 11)
    xc = [np.dot(x[mid], np.roll(y, -k)[mid]) for k in lags]
    assert lags[int(np.argmax(xc))] == 0


def test_short_signal_rejected():
    with pytest.raises(ValueError, match="startup"):
        pp.zero_phase(np.zeros(20), pp.FilterSpec().sos(100.0))


def test_resample_sine_accuracy():
    fs = 1000.0
    t = np.arange(int(20 * fs)) / fs
    rec = Recording(fs, CANONICAL_CHANNELS, np.tile(np.sin(2 * np.pi * 5 * t), (6, 1)))
    out = pp.resample(rec, 100.0)
    assert out.sample_rate_hz == 100.0 and out.n_samples == 2000
    tt = np.arange(2000) / 100.0
    err = np.abs(out.samples[0] - np.sin(2 * np.pi * 5 * tt))[200:-200]
    assert err.max() < 1e-3


def test_resample_suppresses_aliases():
    fs = 500.0
    t = np.arange(int(20 * fs)) / fs
    # 70 Hz folds to 30 Hz at 100 Hz
    rec = Recording(fs, CANONICAL_CHANNELS, np.tile(np.sin(2 * np.pi * 70 * t), (6, 1)))
    out = pp.resample(rec, 100.0).samples[0][200:-200]
    assert np.abs(out).max() < 1e-3


def test_resample_rejects_upsampling():
    with pytest.raises(ValueError):
        pp.resample(noise_recording(1.0), 200.0)


def test_bad_channel_repaired_from_neighbors():
    rec = noise_recording(60.0, seed=2)
    x = np.array(rec.samples)
    rng = np.random.default_rng(3)
    spikes = rng.choice(x.shape[1], 30, replace=False)
    x[3, spikes] += 400.0
    fixed, rep = pp.detect_and_repair_channels(rec.with_samples(x))
    assert rep.flagged == ("C4",)
    nb = [CANONICAL_CHANNELS.index(c) for c in rep.sources["C4"]]
    np.testing.assert_allclose(fixed.samples[3], x[nb].mean(axis=0))


def test_clean_recording_untouched():
    rec = noise_recording(30.0, seed=4)
    out, rep = pp.detect_and_repair_channels(rec)
    assert rep.flagged == () and out is rec


def _sine_recording(seconds=120.0):
    t = np.arange(int(seconds * 100)) / 100.0
    return Recording(100.0, CANONICAL_CHANNELS, np.tile(np.sin(2 * np.pi * 3 * t) * 10, (6, 1)))


def test_epoch_geometry_and_metadata():
    rec = _sine_recording()
    log = CueLog((CueEvent(1000, 5, 1, 1), CueEvent(9000, 5, 2, 1), CueEvent(17000, 8, 1, 2)))
    ep = pp.epoch(rec, log, levels={5: Level.L3, 8: Level.L2}, group="PTMR")
    assert ep.data.shape == (3, 6, 450)
    assert ep.times[0] == pytest.approx(-0.5) and ep.times[-1] == pytest.approx(3.99)
    assert ep.metadata["block_size"] == [2, 2, 1]
    assert ep.metadata["level"] == ["L3", "L3", "L2"]
    np.testing.assert_array_equal(ep.data[0], rec.samples[:, 50:500])


def test_epoch_count_conservation():
    rec = _sine_recording(60.0)
    log = regular_log([0, 200, 8000, 56000, 57000, 58000])
    ep = pp.epoch(rec, log)
    assert ep.n_trials + ep.n_dropped_bounds == len(log)
    assert ep.n_dropped_bounds == 4
    kept, rej = pp.reject_amplitude(ep)
    assert kept.n_trials + len(rej.dropped) == ep.n_trials


def test_epoch_requires_100_hz():
    with pytest.raises(ValueError, match="100 Hz"):
        pp.epoch(noise_recording(10.0, fs=200.0), regular_log([1000]))


def test_rejection_drops_exactly_injected_trials():
    rng = np.random.default_rng(0)
    data = 20 * rng.standard_normal((40, 6, 450))
    bad = [3, 17, 30]
    for k in bad:
        data[k, rng.integers(6), rng.integers(450)] = 501.0 * rng.choice([-1, 1])
    data[5, 0, 0] = 500.0  # at threshold: kept
    kept, rep = pp.reject_amplitude(pp.EpochSet(data))
    assert list(rep.dropped) == bad
    assert kept.n_trials == 37


def test_baseline_window_mean_is_zero():
    rng = np.random.default_rng(1)
    ep = pp.baseline_correct(pp.EpochSet(5 + rng.standard_normal((10, 6, 450))))
    np.testing.assert_allclose(ep.data[:, :, :50].mean(axis=2), 0.0, atol=1e-9)


def test_erp_conditions_and_first_vs_last():
    rng = np.random.default_rng(2)
    n = 16
    data = rng.standard_normal((n, 6, 450))
    meta = {"level": ["L3"] * 8 + ["L2"] * 8,
            "pres_index": [1, 2, 3, 4] * 2 + [1] * 8,
            "block_size": [4] * 8 + [1] * 8}
    ep = pp.EpochSet(data, metadata=meta)
    out = pp.erp(ep, conditions=("All", "L3"))
    assert out["All"].n_trials == 16 and out["L3"].n_trials == 8
    np.testing.assert_allclose(out["All"].mean, data.mean(axis=1).mean(axis=0))
    fl = pp.erp(ep, grouping="first_vs_last_pres")
    assert fl["first"].n_trials == 2 and fl["last"].n_trials == 2
    with pytest.raises(ValueError, match="need >= 2"):
        pp.erp(ep.subset([0]), conditions=("All",))


def test_concat_and_subset():
    ep = pp.EpochSet(np.zeros((3, 6, 450)), metadata={"item_id": [1, 2, 3]})
    both = pp.EpochSet.concat([ep, ep.subset([2])])
    assert both.n_trials == 4 and both.metadata["item_id"] == [1, 2, 3, 3]
    assert ep.where(item_id=2).n_trials == 1
