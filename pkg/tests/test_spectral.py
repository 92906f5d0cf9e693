import numpy as np
import pytest

from tmrkit import spectral as spc
from tmrkit.preprocess import EpochSet

from oracles import dft_power

CFG = spc.SpectrogramConfig()


def one_sided_energy(p, nfft):
    return p[..., 0, :] + p[..., nfft // 2, :] + 2 * p[..., 1:nfft // 2, :].sum(axis=-2)


def test_geometry():
    assert CFG.hop == 8 and CFG.resolution_hz == 0.5
    assert CFG.n_frames(450) == 53
    t = CFG.frame_times(450, -0.5)
    assert t[0] == pytest.approx(-0.34) and t[-1] == pytest.approx(3.82)
    assert np.sum(t < 0) == 5


def test_window_is_symmetric_hamming():
    w = CFG.window()
    assert w[0] == pytest.approx(0.08) and w[-1] == pytest.approx(0.08)
    np.testing.assert_allclose(w, w[::-1], atol=1e-15)


def test_stft_matches_direct_dft():
    rng = np.random.default_rng(0)
    x = rng.standard_normal(450)
    p = spc.power(x)
    w = CFG.window()
    for k in (0, 17, 52):
        frame = x[k * 8:k * 8 + 32]
        np.testing.assert_allclose(p[:, k], dft_power(frame, w, 200), rtol=1e-9, atol=1e-12)


def test_sine_peak_bin():
    t = np.arange(450) / 100.0
    p = spc.power(np.sin(2 * np.pi * 10 * t))
    assert np.all(CFG.freqs[np.argmax(p, axis=0)] == 10.0)


def test_parseval_per_frame():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((3, 450))
    p = spc.power(x)
    frames = np.lib.stride_tricks.sliding_window_view(x, 32, axis=-1)[..., ::8, :]
    direct = 200 * ((frames * CFG.window()) ** 2).sum(-1)
    np.testing.assert_allclose(one_sided_energy(p, 200), direct, rtol=1e-9)


def test_short_input_rejected():
    with pytest.raises(ValueError, match="shorter"):
        spc.stft(np.zeros(10))


def test_config_validation():
    with pytest.raises(ValueError):
        spc.SpectrogramConfig(window_length=32, overlap=32)
    with pytest.raises(ValueError):
        spc.SpectrogramConfig(nfft=16)


def _periodic_epochs(n_trials=4):
    # a 12.5 Hz cosine has exactly 4 cycles per 32 samples -> every frame identical
    t = np.arange(450) / 100.0
    x = np.cos(2 * np.pi * 12.5 * t)
    data = np.broadcast_to(x, (n_trials, 6, 450)).copy()
    return EpochSet(data)


def test_identical_baseline_gives_zero_db():
    tt = spc.tfr(_periodic_epochs())
    np.testing.assert_allclose(tt.db().power, 0.0, atol=1e-9)
    np.testing.assert_allclose(tt.average_map().power, 0.0, atol=1e-9)


def test_band_power_averages_bins():
    tt = spc.tfr(_periodic_epochs())
    s = spc.band_power(tt, (12.0, 16.0))
    assert s.values.shape == (4, 6, 53)
    with pytest.raises(ValueError, match="outside"):
        spc.band_power(tt, (15.0, 30.0))


def test_doubling_amplitude_post_onset_adds_six_db():
    t = np.arange(450) / 100.0
    x = np.cos(2 * np.pi * 12.5 * t)
    x[t >= 1.0] *= 2
    tt = spc.tfr(EpochSet(np.broadcast_to(x, (2, 6, 450)).copy()))
    db = tt.db().select(12.5, 12.5).power[0, 0, 0]
    late = tt.frame_times > 1.2
    np.testing.assert_allclose(db[late], 10 * np.log10(4), atol=1e-9)


def test_zero_baseline_is_degenerate():
    data = np.zeros((2, 6, 450))
    data[..., 100:] = 1.0
    with pytest.raises(ValueError, match="degenerate baseline"):
        spc.tfr(EpochSet(data)).db()


def test_window_mean():
    vals = np.arange(10.0)
    assert spc.window_mean(vals, np.arange(10) * 0.5, 1.0, 2.0) == pytest.approx(3.0)
    with pytest.raises(ValueError):
        spc.window_mean(vals, np.arange(10.0), 20, 30)
