"""End-to-end runs: simulate, schedule, analyze, decode, report.

Each stage reads only files written by earlier stages and records input
and output digests in ``manifest.json`` so any stage can be re-run on its
own and checked for byte-identical output.
"""
from __future__ import annotations

import csv
import hashlib
import io as _io
import json
import logging
import shutil
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from . import behavior as bh
from . import config as cfg
from . import decoding as dc
from . import erpac as ep
from . import io as tio
from . import preprocess as pp
from . import scheduler as sch
from . import sim
from . import spectral as spc
from . import stats as st
from .core import Level, score_architecture

logger = logging.getLogger(__name__)

CONDITIONS = ("All", "L3")
BLOCKS = ("sw", "spindle", "coupling")
SCALARS = ("sw_power", "spindle_power", "coupling", "coupling_excess")


# --- errors ---------------------------------------------------------------------

class DataError(RuntimeError):
    """Missing or unusable input data."""


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage {stage!r} failed: {cause}")


# --- configuration -----------------------------------------------------------------

@dataclass(frozen=True)
class PreprocessConfig:
    target_hz: float = 100.0
    low_hz: float = 1.0
    high_hz: float = 20.0
    order: int = 4
    reject_uv: float = pp.REJECT_UV
    z_threshold: float = 5.0


@dataclass(frozen=True)
class SpectralConfig:
    window_length: int = 32
    overlap: int = 24
    nfft: int = 200


@dataclass(frozen=True)
class ErpacSettings:
    amp_freqs: tuple = tuple(float(f) for f in range(4, 21))
    amp_halfwidth: float = 2.0
    smoothing: int = 20
    band: tuple = (12.0, 16.0)
    window: tuple = (0.0, 4.0)

    def erpac_config(self, amp_freqs=None) -> ep.ErpacConfig:
        return ep.ErpacConfig(amp_freqs=tuple(amp_freqs or self.amp_freqs),
                              amp_halfwidth=self.amp_halfwidth, smoothing=self.smoothing)

    def band_freqs(self) -> tuple:
        lo, hi = self.band
        return tuple(f for f in self.amp_freqs if lo - 1e-9 <= f <= hi + 1e-9)


@dataclass(frozen=True)
class DecodingConfig:
    folds: int = 5
    repetitions: int = 2
    C: float = 1.0
    gamma: Optional[float] = None
    n_surrogates: int = 250
    max_trials_per_class: Optional[int] = 40
    n_permutations: int = 1000
    alpha: float = 0.05
    blocks: tuple = BLOCKS
    seed: int = 0


@dataclass(frozen=True)
class RunConfig:
    simulation: sim.SimulationSpec
    master_seed: int
    scheduler: sch.SchedulerConfig = field(default_factory=sch.SchedulerConfig)
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    spectral: SpectralConfig = field(default_factory=SpectralConfig)
    erpac: ErpacSettings = field(default_factory=ErpacSettings)
    decoding: DecodingConfig = field(default_factory=DecodingConfig)
    output_dir: Optional[str] = None
    conditions: tuple = CONDITIONS

    def __post_init__(self):
        object.__setattr__(self, "simulation", self.simulation.with_seed(self.master_seed))
        bad = [c for c in self.conditions if c not in CONDITIONS]
        if bad or not self.conditions:
            raise cfg.ConfigError("conditions", f"conditions must be drawn from {CONDITIONS}")

    def with_condition(self, selector: Optional[str]) -> "RunConfig":
        if selector is None:
            return self
        sel = {"all": "All", "l3": "L3"}.get(str(selector).lower())
        if sel is None:
            raise cfg.ConfigError("condition", f"unknown condition {selector!r}")
        return replace(self, conditions=(sel,))

    def with_seed(self, seed: Optional[int]) -> "RunConfig":
        return self if seed is None else replace(self, master_seed=cfg.seed_value(seed))

    def spectrogram(self) -> spc.SpectrogramConfig:
        s = self.spectral
        return spc.SpectrogramConfig(s.window_length, s.overlap, s.nfft,
                                     self.preprocess.target_hz)

    def filter_spec(self) -> pp.FilterSpec:
        p = self.preprocess
        return pp.FilterSpec(p.low_hz, p.high_hz, p.order)

    def cv_config(self) -> dc.CvConfig:
        d = self.decoding
        return dc.CvConfig(d.folds, d.repetitions, cfg_seed(self.master_seed, d.seed, 1),
                           d.C, d.gamma)

    def to_dict(self) -> dict:
        return {
            "master_seed": int(self.master_seed),
            "simulation": self.simulation.to_dict(),
            "scheduler": {k: (sorted(s.value for s in v) if k == "eligible_stages" else v)
                          for k, v in asdict(self.scheduler).items()},
            "preprocess": asdict(self.preprocess),
            "spectral": asdict(self.spectral),
            "erpac": {k: list(v) if isinstance(v, tuple) else v
                      for k, v in asdict(self.erpac).items()},
            "decoding": {k: list(v) if isinstance(v, tuple) else v
                         for k, v in asdict(self.decoding).items()},
            "conditions": list(self.conditions),
            "output_dir": self.output_dir,
        }

    def digest(self) -> str:
        d = self.to_dict()
        d.pop("output_dir", None)
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()

    @classmethod
    def from_dict(cls, d, path: str = "", base_dir: Optional[Path] = None) -> "RunConfig":
        allowed = ("master_seed", "simulation", "scheduler", "preprocess", "spectral", "erpac",
                   "decoding", "conditions", "output_dir", "scale")
        cfg.check_keys(d, allowed, path)
        seed = cfg.get(d, "master_seed", path, cfg.seed_value)
        simd = cfg.get(d, "simulation", path)
        sp = cfg.join(path, "simulation")
        if isinstance(simd, str):
            ref = Path(simd)
            if not ref.is_absolute() and base_dir is not None:
                ref = base_dir / ref
            try:
                simd = json.loads(ref.read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise cfg.ConfigError(sp, f"cannot read simulation spec {simd!r}: {exc}") from None
        if not isinstance(simd, dict):
            raise cfg.ConfigError(sp, "expected an object or a path to a JSON file")
        simd = dict(simd)
        cohort = simd.get("cohort", {})
        if isinstance(cohort, dict) and "master_seed" not in cohort:
            simd["cohort"] = {**cohort, "master_seed": seed}
        spec = sim.SimulationSpec.from_dict(simd, sp)
        scale = cfg.get(d, "scale", path, str, default="desk")
        if scale == "full":
            spec = full_scale(spec)
        elif scale != "desk":
            raise cfg.ConfigError(cfg.join(path, "scale"), "scale must be 'desk' or 'full'")

        def section(name, klass, tuples=(), convert=None):
            data = cfg.get(d, name, path, default={})
            here = cfg.join(path, name)
            cfg.check_keys(data, klass.__dataclass_fields__, here)
            kw = {}
            for k, v in data.items():
                if convert and k in convert:
                    v = convert[k](v)
                elif k in tuples:
                    v = tuple(v)
                kw[k] = v
            try:
                return klass(**kw)
            except (TypeError, ValueError) as exc:
                raise cfg.ConfigError(here, str(exc)) from None

        stage_set = lambda v: frozenset(sch.SleepStage.parse(s) for s in v)  # noqa: E731
        out = cls(
            simulation=spec,
            master_seed=seed,
            scheduler=section("scheduler", sch.SchedulerConfig,
                              convert={"eligible_stages": stage_set}),
            preprocess=section("preprocess", PreprocessConfig),
            spectral=section("spectral", SpectralConfig),
            erpac=section("erpac", ErpacSettings, tuples=("amp_freqs", "band", "window")),
            decoding=section("decoding", DecodingConfig, tuples=("blocks",)),
            output_dir=cfg.get(d, "output_dir", path, str, default=None),
            conditions=tuple(cfg.get(d, "conditions", path, default=list(CONDITIONS))),
        )
        for b in out.decoding.blocks:
            if b not in BLOCKS:
                raise cfg.ConfigError(cfg.join(path, "decoding.blocks"), f"unknown block {b!r}")
        return out


def cfg_seed(master: int, *key) -> int:
    return sim.child_seed(master, 1_000_003, *key)


def full_scale(spec: sim.SimulationSpec) -> sim.SimulationSpec:
    """8-h nights at 500 Hz with 12 participants per group."""
    return replace(spec, cohort=replace(spec.cohort, n_per_group=12),
                   hypnogram=replace(spec.hypnogram, duration_epochs=960), fs_hz=500)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise cfg.ConfigError("", f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise cfg.ConfigError("", f"invalid JSON in {path}: {exc}") from None
    return RunConfig.from_dict(data, base_dir=path.parent)


def default_config(master_seed: int = 0, **overrides) -> RunConfig:
    return RunConfig(simulation=sim.SimulationSpec(), master_seed=master_seed, **overrides)


# --- manifest --------------------------------------------------------------------

def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def tree_digests(root: Path) -> dict:
    root = Path(root)
    if not root.exists():
        return {}
    return {str(p.relative_to(root.parent)): sha256_file(p)
            for p in sorted(root.rglob("*")) if p.is_file()}


class Manifest:
    """Per-run provenance: config hash, versions, per-stage digests and timings."""

    def __init__(self, out: Path):
        self.path = Path(out) / "manifest.json"
        self.data = tio.read_json(self.path) if self.path.exists() else {"stages": {}}

    def record(self, stage: str, config: RunConfig, inputs: dict, outputs: dict, wall_s: float):
        import numba
        import scipy

        self.data["config_sha256"] = config.digest()
        self.data["versions"] = {"tmrkit": __version__, "numpy": np.__version__,
                                 "scipy": scipy.__version__, "numba": numba.__version__}
        self.data["stages"][stage] = {"inputs": inputs, "outputs": outputs,
                                      "wall_clock_s": round(wall_s, 3)}
        tio.write_json(self.data, self.path)

    def verify(self) -> list:
        """Paths whose current digest differs from the recorded one."""
        bad = []
        base = self.path.parent
        for stage in self.data.get("stages", {}).values():
            for rel, digest in stage["outputs"].items():
                p = base / rel
                if not p.exists() or sha256_file(p) != digest:
                    bad.append(rel)
        return bad


def _prepare_dir(path: Path, force: bool):
    if path.exists() and any(path.iterdir()):
        if not force:
            raise cfg.ConfigError("output_dir", f"{path} exists and is not empty "
                                                f"(use --force to overwrite)")
        shutil.rmtree(path)
    path.mkdir(parents=True, exist_ok=True)


def _stage(name):
    def wrap(fn):
        def run(*args, **kwargs):
            try:
                return fn(*args, **kwargs)
            except (cfg.ConfigError, StageError):
                raise
            except Exception as exc:  # noqa: BLE001 - re-raised with the stage name
                raise StageError(name, exc) from exc
        run.__name__ = fn.__name__
        run.__doc__ = fn.__doc__
        return run
    return wrap


# --- simulate ------------------------------------------------------------------------

@_stage("simulate")
def cmd_simulate(config: RunConfig, out, force: bool = False) -> Path:
    """Write hypnograms, behavior, recordings and ground truth per participant."""
    t0 = time.perf_counter()
    out = Path(out)
    cohort = out / "cohort"
    # a new cohort invalidates every downstream artifact, so the whole run dir is claimed
    _prepare_dir(out, force)
    cohort.mkdir()
    tio.write_json(config.to_dict(), out / "config.json")
    spec = config.simulation
    truth = {"master_seed": int(config.master_seed),
             "coupling": {g: asdict(v) for g, v in spec.coupling.items()},
             "evoked": {g: asdict(v) for g, v in spec.evoked.groups.items()},
             "participants": []}
    for p in sim.participants(spec):
        res = sim.simulate_participant(spec, p, config.scheduler)
        d = cohort / p.participant_id
        d.mkdir()
        tio.write_hypnogram(res["hypnogram"], d / "hypnogram.csv")
        tio.write_behavior(res["pre"] + res["post"], d / "behavior.csv")
        tio.write_recording(res["recording"], d / "recording")
        cue_digest = hashlib.sha256(tio.cue_log_to_csv(res["cue_log"]).encode()).hexdigest()
        info = {"participant_id": p.participant_id, "group": p.group,
                "policy": spec.cohort.policies[p.group], "seed": str(p.seed),
                "streams": {k: str(p.stream(k)) for k in ("behavior", "hypnogram",
                                                          "schedule", "eeg")},
                "stimulated_cue_log_sha256": cue_digest, "n_cues": len(res["cue_log"])}
        tio.write_json(info, d / "participant.json")
        truth["participants"].append(info)
    tio.write_json(truth, cohort / "ground_truth.json")
    Manifest(out).record("simulate", config, {}, tree_digests(cohort), time.perf_counter() - t0)
    return cohort


def _participant_dirs(cohort: Path) -> list:
    dirs = sorted(p for p in Path(cohort).iterdir() if (p / "participant.json").exists()) \
        if Path(cohort).exists() else []
    if not dirs:
        raise DataError(f"no participants found under {cohort}; run `simulate` first")
    return dirs


# --- schedule ------------------------------------------------------------------------

def schedule_participant(pdir: Path, config: RunConfig):
    """Recompute the cue log (and sham log for unstimulated groups) from files."""
    for name in ("hypnogram.csv", "behavior.csv", "participant.json"):
        if not (pdir / name).exists():
            raise DataError(f"missing input {pdir / name}")
    info = tio.read_json(pdir / "participant.json")
    hyp = tio.read_hypnogram(pdir / "hypnogram.csv")
    pre = [r for r in tio.read_behavior(pdir / "behavior.csv") if r.session == "pre"]
    policy = sch.Policy.parse(info["policy"])
    seed = int(info["streams"]["schedule"])
    plan = sch.compile_plan(policy, pre, seed)
    log = sch.run(hyp, plan, config.scheduler)
    sham = None
    if policy.kind == "nostim":
        sham = sch.run(hyp, sch.compile_plan(sch.Policy.fixed(), pre, seed), config.scheduler)
    return plan, log, sham


@_stage("schedule")
def cmd_schedule(config: RunConfig, out, participant: Optional[str] = None) -> list:
    t0 = time.perf_counter()
    out = Path(out)
    cohort = out / "cohort"
    dirs = _participant_dirs(cohort)
    if participant is not None:
        dirs = [d for d in dirs if d.name == participant]
        if not dirs:
            raise DataError(f"unknown participant {participant!r}")
    inputs, outputs, logs = {}, {}, []
    for d in dirs:
        plan, log, sham = schedule_participant(d, config)
        info = tio.read_json(d / "participant.json")
        digest = hashlib.sha256(tio.cue_log_to_csv(log).encode()).hexdigest()
        if digest != info["stimulated_cue_log_sha256"]:
            raise DataError(f"{d.name}: recomputed cue log differs from the one used to "
                            f"synthesize the recording")
        tio.write_cue_log(log, d / "cue_log.csv")
        tio.write_json({**plan.to_dict(), "summary": dict(log.summary)}, d / "plan.json")
        if sham is not None:
            tio.write_cue_log(sham, d / "sham_log.csv")
        for name in ("hypnogram.csv", "behavior.csv"):
            inputs[str((d / name).relative_to(out))] = sha256_file(d / name)
        for name in ("cue_log.csv", "plan.json", "sham_log.csv"):
            if (d / name).exists():
                outputs[str((d / name).relative_to(out))] = sha256_file(d / name)
        logs.append(log)
    Manifest(out).record("schedule", config, inputs, outputs, time.perf_counter() - t0)
    return logs


# --- analyze -------------------------------------------------------------------------

@dataclass
class ParticipantAnalysis:
    participant_id: str
    group: str
    cue_locked: bool
    epochs: pp.EpochSet
    sw: Optional[spc.BandPowerSeries] = None
    spindle: Optional[spc.BandPowerSeries] = None
    phase: Optional[np.ndarray] = None
    amplitude: Optional[np.ndarray] = None
    scalars: dict = field(default_factory=dict)      # condition -> name -> value
    maps: dict = field(default_factory=dict)         # condition -> {"tfr", "erpac", "erp"}
    rejection: Optional[pp.RejectionReport] = None
    bad_channels: Optional[pp.BadChannelReport] = None


def _condition_index(epochs: pp.EpochSet, condition: str) -> np.ndarray:
    if condition == "All":
        return np.arange(epochs.n_trials)
    return np.array([i for i, lv in enumerate(epochs.metadata["level"]) if lv == condition],
                    dtype=int)


def analyze_participant(recording, cue_log, pre_records, group: str, participant_id: str,
                        config: RunConfig, cue_locked: bool = True,
                        full_maps: bool = True) -> ParticipantAnalysis:
    """Preprocess one recording and compute features, scalars and maps.

    With ``full_maps`` false only the quantities needed for the group
    scalars are computed: ERPAC is restricted to the coupling band and no
    maps or single-trial coupling features are kept.
    """
    p = config.preprocess
    rec, bad = pp.preprocess_recording(recording, p.target_hz, config.filter_spec(),
                                       p.z_threshold)
    levels = {r.item_id: r.level for r in pre_records}
    epochs = pp.epoch(rec, cue_log, levels=levels, group=group)
    epochs, rej = pp.reject_amplitude(epochs, p.reject_uv)
    epochs = pp.baseline_correct(epochs)
    res = ParticipantAnalysis(participant_id, group, cue_locked, epochs, rejection=rej,
                              bad_channels=bad)
    if epochs.n_trials == 0:
        return res
    scfg = config.spectrogram()
    ttfr = spc.tfr(epochs, scfg, fmin=0.5, fmax=20.0)
    res.sw = spc.band_power(ttfr, spc.SW_BAND)
    res.spindle = spc.band_power(ttfr, spc.SPINDLE_BAND)
    band_cfg = config.erpac.erpac_config(config.erpac.band_freqs())
    map_cfg = config.erpac.erpac_config() if full_maps else band_cfg
    phase, amps = ep.decompose(epochs, map_cfg)
    if full_maps:
        # spindle-band amplitude for the single-trial coupling features
        sp_amp = ep.analytic(epochs, spc.SPINDLE_BAND).amplitude
        res.phase = dc.sample_at_frames(phase, epochs.times, ttfr.frame_times)
        res.amplitude = dc.sample_at_frames(sp_amp, epochs.times, ttfr.frame_times)
    lo, hi = config.erpac.window
    band_idx = [i for i, f in enumerate(map_cfg.amp_freqs) if f in band_cfg.amp_freqs]
    for cond in config.conditions:
        idx = _condition_index(epochs, cond)
        scal = {"n_trials": int(len(idx))}
        res.scalars[cond] = scal
        if len(idx) < 4:
            continue
        tm = (ttfr.frame_times >= lo) & (ttfr.frame_times < hi)
        scal["sw_power"] = float(res.sw.values[idx][:, :, tm].mean())
        scal["spindle_power"] = float(res.spindle.values[idx][:, :, tm].mean())
        sub = epochs.subset(idx)
        if full_maps:
            emap = ep.erpac_map(sub, map_cfg, decomposition=(phase[idx], amps[idx]))
        else:
            emap = ep.erpac_map(sub, band_cfg,
                                decomposition=(phase[idx], amps[idx][:, :, band_idx]))
        scal["coupling"] = ep.coupling_strength(emap, config.erpac.band, config.erpac.window)
        scal["coupling_excess"] = scal["coupling"] - ep.null_expectation(len(idx))
        if full_maps:
            sub_tfr = spc.TrialTFR(ttfr.freqs, ttfr.frame_times, ttfr.power[idx],
                                   ttfr.channel_labels)
            erp = pp.erp(sub, "all-channels-mean", "condition", ("All",))["All"] \
                if len(idx) >= 2 else None
            res.maps[cond] = {"tfr": sub_tfr.average_map(), "erpac": emap, "erp": erp}
    return res


def _group_stats(table: list, scalars=SCALARS) -> dict:
    """One-way ANOVA across groups and Bonferroni-corrected pairwise t-tests."""
    out = {}
    groups = sorted({r["group"] for r in table})
    for name in scalars:
        samples = {g: [r[name] for r in table if r["group"] == g and r.get(name) is not None]
                   for g in groups}
        samples = {g: v for g, v in samples.items() if len(v) >= 2}
        if len(samples) < 2:
            out[name] = {"skipped": "fewer than two groups with >= 2 participants"}
            continue
        anova = st.anova_oneway(list(samples.values()))
        pairs = []
        names = sorted(samples)
        m = len(names) * (len(names) - 1) // 2
        for i in range(len(names)):
            for j in range(i + 1, len(names)):
                t = st.ttest_two_sample(samples[names[i]], samples[names[j]])
                pairs.append({"a": names[i], "b": names[j], "t": t.t, "df": t.df, "p": t.p,
                              "p_bonferroni": float(st.bonferroni([t.p], m)[0])})
        out[name] = {"anova": anova.to_dict(),
                     "means": {g: float(np.mean(v)) for g, v in samples.items()},
                     "posthoc": pairs}
    return out


def _behavior_change(pre, post, condition):
    rows = {r["level"]: r for r in bh.accuracy_table(pre, post)}
    r = rows["All" if condition == "All" else condition]
    return r["diff"]


def _correlations(table: list, condition: str) -> list:
    """Behavior (post - pre accuracy) vs EEG scalars across participants, BH-adjusted."""
    res = []
    for name in ("sw_power", "spindle_power", "coupling_excess"):
        pairs = [(r["behavior_change"], r[name]) for r in table
                 if r.get(name) is not None and r.get("behavior_change") is not None]
        if len(pairs) < 3:
            continue
        x, y = zip(*pairs)
        c = st.pearson(x, y)
        res.append({"feature": name, "r": c.coefficient, "p": c.p, "n": c.n,
                    "defined": c.defined})
    ps = [r["p"] for r in res if r["defined"]]
    if ps:
        adj, rej = st.bh_fdr(ps)
        k = 0
        for r in res:
            if r["defined"]:
                r["p_fdr"] = float(adj[k])
                r["significant"] = bool(rej[k])
                k += 1
    return res


def _load_participant(d: Path):
    info = tio.read_json(d / "participant.json")
    rec = tio.read_recording(d / "recording")
    records = tio.read_behavior(d / "behavior.csv")
    pre = [r for r in records if r.session == "pre"]
    post = [r for r in records if r.session == "post"]
    if not (d / "cue_log.csv").exists():
        raise DataError(f"{d.name}: cue_log.csv missing; run `schedule` first")
    log = tio.read_cue_log(d / "cue_log.csv")
    cue_locked = len(log) > 0
    if not cue_locked and (d / "sham_log.csv").exists():
        log = tio.read_cue_log(d / "sham_log.csv")
    return info, rec, pre, post, log, cue_locked


def _save_features(res: ParticipantAnalysis, d: Path):
    d.mkdir(parents=True, exist_ok=True)
    n = res.epochs.n_trials
    if n == 0:
        arr = np.zeros((4, 0, 6, 0), dtype=np.float32)
        frame_times = []
    else:
        arr = np.stack([res.sw.values, res.spindle.values, res.phase, res.amplitude])
        frame_times = res.sw.frame_times.tolist()
    meta = {k: v for k, v in res.epochs.metadata.items()}
    tio.write_blob(d / "features", {"kind": "trial_features",
                                    "blocks": ["sw_db", "spindle_db", "sw_phase",
                                               "spindle_amplitude"],
                                    "frame_times": frame_times,
                                    "channel_labels": list(res.epochs.channel_labels),
                                    "metadata": meta, "group": res.group,
                                    "cue_locked": res.cue_locked}, arr)
    if res.rejection is not None:
        tio.write_rejection_report(res.rejection, d / "rejection.csv")


def _mean_maps(maps: list):
    return np.mean(np.stack(maps), axis=0)


@_stage("analyze")
def cmd_analyze(config: RunConfig, out) -> Path:
    """Per-participant features and scalars, group maps and group statistics."""
    t0 = time.perf_counter()
    out = Path(out)
    cohort = out / "cohort"
    dirs = _participant_dirs(cohort)
    adir = out / "analysis"
    if adir.exists():
        shutil.rmtree(adir)
    adir.mkdir(parents=True)
    inputs = {}
    table = {c: [] for c in config.conditions}
    group_maps = {}
    flags = {"groups_without_cues": [], "sham_locked_groups": []}
    for d in dirs:
        info, rec, pre, post, log, cue_locked = _load_participant(d)
        for name in ("recording.json", "recording.f32", "behavior.csv", "cue_log.csv"):
            inputs[str((d / name).relative_to(out))] = sha256_file(d / name)
        res = analyze_participant(rec, log, pre, info["group"], info["participant_id"],
                                  config, cue_locked=cue_locked, full_maps=True)
        if not cue_locked:
            if info["group"] not in flags["groups_without_cues"]:
                flags["groups_without_cues"].append(info["group"])
            if len(log) and info["group"] not in flags["sham_locked_groups"]:
                flags["sham_locked_groups"].append(info["group"])
        _save_features(res, adir / "participants" / info["participant_id"])
        for cond in config.conditions:
            row = {"participant_id": info["participant_id"], "group": info["group"],
                   "cue_locked": cue_locked,
                   "behavior_change": _behavior_change(pre, post, cond)}
            row.update(res.scalars.get(cond, {"n_trials": 0}))
            table[cond].append(row)
            m = res.maps.get(cond)
            if m:
                gm = group_maps.setdefault((info["group"], cond), {"tfr": [], "erpac": [],
                                                                   "erp": []})
                gm["tfr"].append(m["tfr"])
                gm["erpac"].append(m["erpac"])
                if m["erp"] is not None:
                    gm["erp"].append(m["erp"])
    for (g, cond), gm in sorted(group_maps.items()):
        gd = adir / "groups" / g / cond
        gd.mkdir(parents=True, exist_ok=True)
        t = gm["tfr"][0]
        tio.write_tfr(spc.TFR(t.freqs, t.frame_times, _mean_maps([x.power for x in gm["tfr"]])),
                      gd / "tfr")
        e = gm["erpac"][0]
        tio.write_erpac_map(ep.ErpacMap(e.amp_freqs, e.times,
                                        _mean_maps([x.values for x in gm["erpac"]])),
                            gd / "erpac")
        if gm["erp"]:
            mean = _mean_maps([x.mean for x in gm["erp"]])
            buf = ["time_s,mean_uv"] + [f"{t_:.4f},{v:.10g}"
                                         for t_, v in zip(gm["erp"][0].times, mean)]
            (gd / "erp.csv").write_text("\n".join(buf) + "\n")
    cue_groups = {r["group"] for rows in table.values() for r in rows if r["cue_locked"]}
    flags["cue_locked_epochs_absent"] = not cue_groups
    summary = {"flags": flags, "conditions": {}}
    for cond, rows in table.items():
        _write_rows(rows, adir / f"scalars_{cond}.csv")
        summary["conditions"][cond] = {"group_stats": _group_stats(rows),
                                       "correlations": _correlations(rows, cond)}
    tio.write_json(summary, adir / "summary.json")
    Manifest(out).record("analyze", config, inputs, tree_digests(adir), time.perf_counter() - t0)
    return adir


def _write_rows(rows: list, path: Path):
    keys = []
    for r in rows:
        for k in r:
            if k not in keys:
                keys.append(k)
    buf = _io.StringIO()
    w = csv.DictWriter(buf, fieldnames=keys, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: _fmt(r.get(k)) for k in keys})
    Path(path).write_text(buf.getvalue())


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.10g}"
    return v


# --- decode --------------------------------------------------------------------------

def load_features(adir: Path, condition: str):
    """Pool persisted per-participant features into one tensor per condition."""
    pdirs = sorted((Path(adir) / "participants").glob("*/features.json"))
    if not pdirs:
        raise DataError(f"no trial features under {adir}; run `analyze` first")
    parts = {"sw": [], "spindle": [], "phase": [], "amp": [], "labels": []}
    frame_times = channels = None
    for p in pdirs:
        header, arr = tio.read_blob(p.with_suffix(""))
        if arr.shape[1] == 0:
            continue
        meta = header["metadata"]
        if condition == "All":
            idx = np.arange(arr.shape[1])
        else:
            idx = np.array([i for i, lv in enumerate(meta["level"]) if lv == condition],
                           dtype=int)
        if idx.size == 0:
            continue
        parts["sw"].append(arr[0, idx])
        parts["spindle"].append(arr[1, idx])
        parts["phase"].append(arr[2, idx])
        parts["amp"].append(arr[3, idx])
        parts["labels"] += [header["group"]] * len(idx)
        frame_times = np.asarray(header["frame_times"])
        channels = tuple(header["channel_labels"])
    if not parts["labels"]:
        raise DataError(f"insufficient trials per class: no {condition} trials in the cohort")
    sw = spc.BandPowerSeries(np.concatenate(parts["sw"]).astype(float), spc.SW_BAND,
                             frame_times, channels)
    sp = spc.BandPowerSeries(np.concatenate(parts["spindle"]).astype(float),
                             spc.SPINDLE_BAND, frame_times, channels)
    analytic = (np.concatenate(parts["phase"]).astype(float),
                np.concatenate(parts["amp"]).astype(float))
    labels = np.array(parts["labels"])
    if len(set(labels.tolist())) < 2:
        raise DataError(f"insufficient trials per class: {condition} trials come from a "
                        f"single group")
    return dc.assemble_features([sw, sp], analytic, labels)


@_stage("decode")
def cmd_decode(config: RunConfig, out) -> Path:
    t0 = time.perf_counter()
    out = Path(out)
    adir = out / "analysis"
    if not (adir / "summary.json").exists():
        raise DataError(f"no analysis under {out}; run `analyze` first")
    ddir = out / "decoding"
    if ddir.exists():
        shutil.rmtree(ddir)
    ddir.mkdir(parents=True)
    d = config.decoding
    cv = config.cv_config()
    summary = {}
    for cond in config.conditions:
        tensor = load_features(adir, cond)
        counts = {c: int((tensor.labels == c).sum()) for c in tensor.classes}
        tensor = tensor.balanced_subset(d.max_trials_per_class,
                                        cfg_seed(config.master_seed, d.seed, 2))
        summary[cond] = {"trials_per_class": counts,
                         "trials_used": {c: int((tensor.labels == c).sum())
                                         for c in tensor.classes}, "blocks": {}}
        for bi, block in enumerate(d.blocks):
            sub = tensor.block(block)
            curve, ens = dc.decode_with_surrogates(
                sub, cv, d.n_surrogates, cfg_seed(config.master_seed, d.seed, 3, bi))
            clusters = dc.decoding_clusters(curve, ens, "accuracy", d.alpha, d.n_permutations,
                                            cfg_seed(config.master_seed, d.seed, 4, bi))
            bd = ddir / cond / block
            bd.mkdir(parents=True)
            (bd / "curve.csv").write_text(curve.to_csv())
            tio.write_json(curve.to_dict(), bd / "curve.json")
            tio.write_blob(bd / "surrogates", {"kind": "surrogate_accuracy", "seed": ens.seed,
                                               "frame_times": curve.frame_times.tolist()},
                           ens.accuracy)
            cdict = clusters.to_dict(curve.frame_times)
            tio.write_json(cdict, bd / "clusters.json")
            summary[cond]["blocks"][block] = {
                "peak_accuracy": float(curve.accuracy.max()),
                "peak_time_s": float(curve.frame_times[int(np.argmax(curve.accuracy))]),
                "chance": curve.chance,
                "significant_clusters": [c for c in cdict["clusters"] if c["significant"]]}
    tio.write_json(summary, ddir / "summary.json")
    inputs = {k: v for k, v in tree_digests(adir).items() if k.endswith("features.f32")}
    Manifest(out).record("decode", config, inputs, tree_digests(ddir), time.perf_counter() - t0)
    return ddir


# --- report --------------------------------------------------------------------------

@_stage("report")
def cmd_report(out, config: Optional[RunConfig] = None) -> Path:
    """Tables and plot-ready files gathered from the cohort, analysis and decoding."""
    t0 = time.perf_counter()
    out = Path(out)
    adir = out / "analysis"
    if not adir.exists() or not (adir / "summary.json").exists():
        raise DataError(f"analysis directory {adir} is empty or missing; run `analyze` "
                        f"(and `decode`) before `report`")
    rdir = out / "report"
    if rdir.exists():
        shutil.rmtree(rdir)
    rdir.mkdir(parents=True)
    acc_rows, tr_rows, arch_rows = [], [], []
    for d in _participant_dirs(out / "cohort"):
        info = tio.read_json(d / "participant.json")
        records = tio.read_behavior(d / "behavior.csv")
        pre = [r for r in records if r.session == "pre"]
        post = [r for r in records if r.session == "post"]
        base = {"participant_id": info["participant_id"], "group": info["group"]}
        for r in bh.accuracy_table(pre, post):
            acc_rows.append({**base, **r})
        for r in bh.transition_table(pre, post):
            tr_rows.append({**base, **r})
        arch = score_architecture(tio.read_hypnogram(d / "hypnogram.csv"))
        arch_rows.append({**base, **{k: v for k, v in asdict(arch).items()
                                     if not isinstance(v, dict)}})
    _write_rows(acc_rows, rdir / "accuracy.csv")
    _write_rows(tr_rows, rdir / "transitions.csv")
    _write_rows(arch_rows, rdir / "sleep_architecture.csv")
    for p in sorted(adir.glob("scalars_*.csv")):
        shutil.copyfile(p, rdir / p.name.replace("scalars_", "feature_scalars_"))
    shutil.copyfile(adir / "summary.json", rdir / "eeg_statistics.json")
    for p in sorted((adir / "groups").rglob("*")) if (adir / "groups").exists() else []:
        if p.is_file():
            dst = rdir / "maps" / p.relative_to(adir / "groups")
            dst.parent.mkdir(parents=True, exist_ok=True)
            shutil.copyfile(p, dst)
    ddir = out / "decoding"
    curves, clusters = [], []
    if (ddir / "summary.json").exists():
        for cpath in sorted(ddir.glob("*/*/curve.json")):
            cond, block = cpath.parent.parent.name, cpath.parent.name
            c = tio.read_json(cpath)
            for i, t in enumerate(c["frame_times"]):
                curves.append({"condition": cond, "block": block, "frame_time": t,
                               "accuracy": c["accuracy"][i], "accuracy_se": c["accuracy_se"][i],
                               "auc": c["auc"][i], "auc_se": c["auc_se"][i],
                               "chance": c["chance"]})
            for cl in tio.read_json(cpath.parent / "clusters.json")["clusters"]:
                clusters.append({"condition": cond, "block": block, **cl})
        shutil.copyfile(ddir / "summary.json", rdir / "decoding_summary.json")
    _write_rows(curves, rdir / "decoding_curves.csv")
    _write_rows(clusters, rdir / "clusters.csv")
    if config is not None:
        Manifest(out).record("report", config, {}, tree_digests(rdir), time.perf_counter() - t0)
    return rdir


def run_all(config: RunConfig, out, force: bool = False) -> Path:
    cmd_simulate(config, out, force)
    cmd_schedule(config, out)
    cmd_analyze(config, out)
    cmd_decode(config, out)
    return cmd_report(out, config)


# --- in-memory helpers ---------------------------------------------------------------

def cohort_scalars(config: RunConfig, condition: str = "All") -> list:
    """Per-participant EEG scalars for one simulated cohort, without touching disk."""
    rows = []
    cfg_ = replace(config, conditions=(condition,))
    for p in sim.participants(config.simulation):
        r = sim.simulate_participant(config.simulation, p, config.scheduler)
        log = r["cue_log"]
        if not len(log) and r["sham_log"] is not None:
            log = r["sham_log"]
        res = analyze_participant(r["recording"], log, r["pre"], p.group, p.participant_id,
                                  cfg_, cue_locked=len(r["cue_log"]) > 0, full_maps=False)
        rows.append({"participant_id": p.participant_id, "group": p.group,
                     **res.scalars.get(condition, {"n_trials": 0})})
    return rows
