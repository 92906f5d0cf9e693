import numpy as np
import pytest

from tmrkit import io as tio
from tmrkit.core import (CANONICAL_CHANNELS, BehavioralRecord, CueEvent, CueLog, Hypnogram,
                         Level, Recording, SleepStage, check_unique_records,
                         score_architecture, validate_recording)

from conftest import noise_recording


def test_stage_parse_aliases():
    assert SleepStage.parse("nrem2") is SleepStage.N2
    assert SleepStage.parse("wake") is SleepStage.WAKE
    assert SleepStage.parse(SleepStage.N3) is SleepStage.N3
    with pytest.raises(ValueError, match="unknown sleep stage"):
        SleepStage.parse("N4")


def test_hypnogram_lights_must_fall_on_epoch_boundaries():
    with pytest.raises(ValueError, match="epoch boundary"):
        Hypnogram(("W", "N2", "N2"), lights_off_s=15.0)
    with pytest.raises(ValueError):
        Hypnogram(())


def test_stage_at_and_codes():
    h = Hypnogram(("W", "N1", "N2", "N3", "R"))
    assert h.stage_at(61.0) is SleepStage.N2
    assert list(h.codes) == [0, 2, 3, 4, 1]
    with pytest.raises(IndexError):
        h.stage_at(150.0)


def test_recording_is_read_only_and_canonicalizes():
    labels = ("O2", "O1", "C4", "C3", "F4", "F3")
    x = np.arange(12.0).reshape(6, 2)
    rec = Recording(100.0, labels, x)
    with pytest.raises(ValueError):
        rec.samples[0, 0] = 1.0
    can = rec.canonical()
    assert can.channel_labels == CANONICAL_CHANNELS
    np.testing.assert_array_equal(can.samples[0], x[5])


def test_validate_recording_reports_each_violation():
    bad = np.ones((5, 10))
    bad[2, 3] = np.nan
    rep = validate_recording(Recording(100.0, CANONICAL_CHANNELS[:5], bad))
    assert not rep.valid
    assert any("channel count" in v for v in rep.violations)
    assert any("non-finite" in v for v in rep.violations)
    swapped = ("F4", "F3") + CANONICAL_CHANNELS[2:]
    rep = validate_recording(Recording(100.0, swapped, np.zeros((6, 4))))
    assert any("label order" in v for v in rep.violations)
    assert validate_recording(noise_recording(1.0)).valid


def test_cue_event_bounds():
    with pytest.raises(ValueError):
        CueEvent(-1, 1, 1, 1)
    with pytest.raises(ValueError):
        CueEvent(0, 1, 0, 1)
    with pytest.raises(ValueError):
        CueEvent(0, 1, 1, 1, 2500)


def test_cue_log_sorts_events():
    log = CueLog((CueEvent(8000, 2, 1, 2), CueEvent(0, 1, 1, 1)))
    assert list(log.onsets_ms) == [0, 8000]


def test_duplicate_records_rejected():
    recs = [BehavioralRecord(1, "pre", True, "L1"), BehavioralRecord(1, "pre", False, "L1")]
    with pytest.raises(ValueError, match="duplicate"):
        check_unique_records(recs)


def test_architecture_partitions_time_in_bed():
    h = Hypnogram(("W", "W", "N1", "N2", "W", "N3", "R", "W"))
    a = score_architecture(h)
    assert a.sol_min == 1.0
    assert a.tst_min == 2.0
    assert a.waso_min == 0.5
    assert a.terminal_wake_min == 0.5
    assert a.sol_min + a.tst_min + a.waso_min + a.terminal_wake_min == a.time_in_bed_min
    assert a.se_pct == pytest.approx(50.0)
    assert sum(a.stage_pct.values()) == pytest.approx(100.0)


def test_architecture_all_wake():
    a = score_architecture(Hypnogram(("W",) * 4))
    assert not a.sol_defined
    assert a.tst_min == 0 and a.sol_min == a.time_in_bed_min


def test_recording_roundtrip_is_float32_exact(tmp_path):
    rec = noise_recording(2.0)
    tio.write_recording(rec, tmp_path / "rec")
    back = tio.read_recording(tmp_path / "rec.json")
    np.testing.assert_array_equal(back.samples, rec.samples.astype(np.float32))
    assert back.channel_labels == CANONICAL_CHANNELS
    assert (tmp_path / "rec.f32").stat().st_size == 6 * 200 * 4


def test_blob_shape_mismatch_detected(tmp_path):
    tio.write_blob(tmp_path / "b", {}, np.zeros((2, 3)))
    (tmp_path / "b.f32").write_bytes(b"\0" * 8)
    with pytest.raises(ValueError, match="payload"):
        tio.read_blob(tmp_path / "b")


def test_table_roundtrips(tmp_path):
    h = Hypnogram(("W", "N2", "N3", "R"))
    tio.write_hypnogram(h, tmp_path / "h.csv")
    assert tio.read_hypnogram(tmp_path / "h.csv") == h
    recs = [BehavioralRecord(1, "pre", True, Level.L2, "fabiko"),
            BehavioralRecord(1, "post", False, Level.L2, None)]
    tio.write_behavior(recs, tmp_path / "b.csv")
    assert tio.read_behavior(tmp_path / "b.csv") == recs
    log = CueLog((CueEvent(0, 3, 1, 1), CueEvent(8000, 3, 2, 1, 1900)))
    tio.write_cue_log(log, tmp_path / "c.csv")
    assert tio.read_cue_log(tmp_path / "c.csv").events == log.events


def test_hypnogram_csv_gaps_rejected(tmp_path):
    p = tmp_path / "h.csv"
    p.write_text("epoch_index,stage\n0,W\n2,N2\n")
    with pytest.raises(ValueError, match="without gaps"):
        tio.read_hypnogram(p)
