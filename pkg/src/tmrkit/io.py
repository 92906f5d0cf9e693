"""File formats.

Binary arrays are stored as a JSON header next to a raw little-endian
float32 payload (``<stem>.json`` + ``<stem>.f32``). Tabular data is CSV
with a mandatory header row.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .core import (CANONICAL_CHANNELS, BehavioralRecord, CueEvent, CueLog,
                   Hypnogram, Recording, SleepStage)

F32LE = np.dtype("<f4")


def _paths(path):
    path = Path(path)
    if path.suffix in (".json", ".f32"):
        path = path.with_suffix("")
    return path.with_suffix(".json"), path.with_suffix(".f32")


def write_blob(path, header: dict, array) -> Path:
    """Write ``array`` as float32 LE with a JSON header; returns header path."""
    hpath, bpath = _paths(path)
    hpath.parent.mkdir(parents=True, exist_ok=True)
    data = np.ascontiguousarray(array, dtype=F32LE)
    header = dict(header)
    header["payload"] = bpath.name
    header["shape"] = list(data.shape)
    hpath.write_text(json.dumps(header, indent=1, sort_keys=True))
    bpath.write_bytes(data.tobytes(order="C"))
    return hpath


def read_blob(path):
    hpath, bpath = _paths(path)
    header = json.loads(hpath.read_text())
    raw = np.frombuffer(bpath.read_bytes(), dtype=F32LE)
    shape = tuple(header["shape"])
    if raw.size != int(np.prod(shape)):
        raise ValueError(f"{bpath}: payload has {raw.size} values, header says {shape}")
    return header, raw.reshape(shape)


# --- recordings -----------------------------------------------------------

def write_recording(recording: Recording, path) -> Path:
    header = {
        "sample_rate_hz": recording.sample_rate_hz,
        "channel_labels": list(recording.channel_labels),
        "t0_s": recording.t0_s,
        "n_samples": recording.n_samples,
    }
    return write_blob(path, header, recording.samples)


def read_recording(path) -> Recording:
    """Read a recording; permuted canonical channels are reordered."""
    header, data = read_blob(path)
    if data.shape[1] != header["n_samples"]:
        raise ValueError("n_samples does not match payload")
    rec = Recording(header["sample_rate_hz"], tuple(header["channel_labels"]),
                    data.copy(), header.get("t0_s", 0.0))
    return rec.canonical()


# --- hypnograms -----------------------------------------------------------

def write_hypnogram(hypnogram: Hypnogram, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch_index", "stage"])
        for i, st in enumerate(hypnogram.stages):
            w.writerow([i, st.value])
    return path


def read_hypnogram(path, epoch_length_s: float = 30.0) -> Hypnogram:
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0]] != ["epoch_index", "stage"]:
        raise ValueError(f"{path}: missing 'epoch_index,stage' header")
    body = [r for r in rows[1:] if r]
    idx = [int(r[0]) for r in body]
    if idx != list(range(len(idx))):
        raise ValueError(f"{path}: epoch indices must run 0..n-1 without gaps")
    return Hypnogram(tuple(SleepStage.parse(r[1]) for r in body), epoch_length_s)


# --- behavior -------------------------------------------------------------

BEHAVIOR_FIELDS = ["item_id", "session", "level", "correct", "response_text"]


def write_behavior(records, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(BEHAVIOR_FIELDS)
        for r in records:
            w.writerow([r.item_id, r.session, r.level.value, int(r.correct),
                        "" if r.response_text is None else r.response_text])
    return path


def _parse_bool(s: str) -> bool:
    s = s.strip().lower()
    if s in ("1", "true", "t", "yes"):
        return True
    if s in ("0", "false", "f", "no"):
        return False
    raise ValueError(f"cannot parse boolean {s!r}")


def read_behavior(path) -> list:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != BEHAVIOR_FIELDS:
            raise ValueError(f"{path}: expected header {','.join(BEHAVIOR_FIELDS)}")
        return [BehavioralRecord(int(row["item_id"]), row["session"],
                                 _parse_bool(row["correct"]), row["level"],
                                 row["response_text"] or None)
                for row in reader]


# --- cue logs -------------------------------------------------------------

CUE_FIELDS = ["onset_ms", "item_id", "pres_index", "block_id", "second_word_offset_ms"]


def cue_log_to_csv(log: CueLog) -> str:
    lines = [",".join(CUE_FIELDS)]
    for e in log.events:
        lines.append(f"{e.onset_ms},{e.item_id},{e.pres_index},{e.block_id},"
                     f"{e.second_word_offset_ms}")
    return "\n".join(lines) + "\n"


def write_cue_log(log: CueLog, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(cue_log_to_csv(log))
    return path


def read_cue_log(path) -> CueLog:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CUE_FIELDS:
            raise ValueError(f"{path}: expected header {','.join(CUE_FIELDS)}")
        events = [CueEvent(*(int(row[k]) for k in CUE_FIELDS)) for row in reader]
    return CueLog(tuple(events))


# --- analysis artifacts -----------------------------------------------------

def write_epochs(epochs, path) -> Path:
    header = {
        "n_trials": epochs.n_trials,
        "n_channels": len(epochs.channel_labels),
        "n_samples": epochs.data.shape[2],
        "fs": epochs.fs,
        "t_start_s": epochs.t_start_s,
        "channel_labels": list(epochs.channel_labels),
        "metadata": {k: [None if v is None else (v if isinstance(v, str) else int(v))
                         for v in col]
                     for k, col in epochs.metadata.items()},
    }
    return write_blob(path, header, epochs.data)


def read_epochs(path):
    from .preprocess import EpochSet
    header, data = read_blob(path)
    return EpochSet(data.copy(), header["fs"], header["t_start_s"],
                    tuple(header.get("channel_labels", CANONICAL_CHANNELS)),
                    {k: list(v) for k, v in header.get("metadata", {}).items()})


def write_tfr(tfr, path) -> Path:
    header = {"freqs": [float(f) for f in tfr.freqs],
              "frame_times": [float(t) for t in tfr.frame_times]}
    return write_blob(path, header, tfr.power)


def read_tfr(path):
    from .spectral import TFR
    header, data = read_blob(path)
    return TFR(np.asarray(header["freqs"]), np.asarray(header["frame_times"]), data.copy())


def write_erpac_map(emap, path) -> Path:
    header = {"amp_freqs": [float(f) for f in emap.amp_freqs],
              "times": [float(t) for t in emap.times],
              "pairs_averaged": True}
    return write_blob(path, header, emap.values)


def read_erpac_map(path):
    from .erpac import ErpacMap
    header, data = read_blob(path)
    return ErpacMap(np.asarray(header["amp_freqs"]), np.asarray(header["times"]), data.copy())


def write_band_series(series, path) -> Path:
    """Band-power series (trials x channels x frames) as long-form CSV."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    values = np.asarray(series.values)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["trial", "channel", "frame", "value"])
        for (i, c, k), v in np.ndenumerate(values):
            w.writerow([i, series.channel_labels[c], k, repr(float(v))])
    return path


def write_rejection_report(report, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    kept = set(report.kept)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["trial", "peak_abs_uv", "kept", "threshold_uv"])
        for i, peak in enumerate(report.peak_abs):
            w.writerow([i, repr(float(peak)), int(i in kept), report.threshold])
    return path


def write_json(obj, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=1, sort_keys=True, default=_json_default))
    return path


def read_json(path):
    return json.loads(Path(path).read_text())


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if hasattr(o, "value"):
        return o.value
    raise TypeError(f"not JSON serializable: {type(o).__name__}")
