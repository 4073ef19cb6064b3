"""Trial datasets: CSV I/O, run splitting, benchmark torques and synthesis."""
import csv
import json
import re
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import dynamics, signals
from .errors import ConfigError, InsufficientRuns, NonUniformSampling, SchemaError

SCHEMA_VERSION = 1
EMG_COLUMNS = ("emg_bic_long", "emg_bic_short", "emg_tri_long", "emg_tri_lat")
ANGLE_COLUMNS = ("q_shoulder", "q_elbow")
COMPUTED_COLUMNS = ("qd_shoulder", "qd_elbow", "qdd_shoulder", "qdd_elbow",
                   "tau_shoulder", "tau_elbow")
BASE_COLUMNS = ("t",) + EMG_COLUMNS + ANGLE_COLUMNS
EMG_MAX = 1.5
RUN_DIR = re.compile(r"^run_(?P<load>\d+(?:\.\d+)?)kg_(?P<idx>\d+)$")
_TRIAL_FILE = re.compile(r"^trial_(?P<k>\d+)\.csv$")


@dataclass
class Trial:
    t: np.ndarray
    emg: np.ndarray
    q: np.ndarray
    load_kg: float = 0.0
    rate: float = signals.ANGLE_RATE
    qd: Optional[np.ndarray] = None
    qdd: Optional[np.ndarray] = None
    tau: Optional[np.ndarray] = None

    def __len__(self):
        return len(self.t)

    @property
    def duration(self):
        return float(self.t[-1] - self.t[0])

    @property
    def has_tau(self):
        return self.tau is not None

    def normalized_time(self):
        return (self.t - self.t[0]) / self.duration

    def validate(self, path=None, row_offset=0):
        """Check invariants; reported rows are data indices plus ``row_offset``."""
        n = len(self.t)
        if n < 3:
            raise SchemaError(f"trial has {n} rows, need at least 3", path=path)
        for name, arr, width in (("emg", self.emg, 4), ("q", self.q, 2)):
            if arr.shape != (n, width):
                raise SchemaError(f"{name} has shape {arr.shape}, expected ({n}, {width})", path=path)
        table = self.table()
        bad = ~np.isfinite(table)
        if bad.any():
            r, c = np.argwhere(bad)[0]
            raise SchemaError("non-finite value", row=int(r) + row_offset, column=self.columns()[c], path=path)
        dt = np.diff(self.t)
        if np.any(dt <= 0):
            r = int(np.flatnonzero(dt <= 0)[0]) + 1
            raise NonUniformSampling("time is not strictly increasing", row=r + row_offset, column="t", path=path)
        expected = 1.0 / self.rate
        off = np.abs(dt - expected) > 1e-9
        if off.any():
            r = int(np.flatnonzero(off)[0]) + 1
            raise NonUniformSampling(f"sample spacing {dt[r - 1]!r} differs from 1/{self.rate}",
                                     row=r + row_offset, column="t", path=path)
        out = (self.emg < 0) | (self.emg > EMG_MAX)
        if out.any():
            r, c = np.argwhere(out)[0]
            raise SchemaError(f"EMG value {self.emg[r, c]!r} outside [0, {EMG_MAX}]",
                              row=int(r) + row_offset, column=EMG_COLUMNS[c], path=path)
        return self

    def columns(self):
        cols = list(BASE_COLUMNS)
        if self.tau is not None:
            cols += list(COMPUTED_COLUMNS)
        return cols

    def table(self):
        parts = [self.t[:, None], self.emg, self.q]
        if self.tau is not None:
            parts += [self.qd, self.qdd, self.tau]
        return np.hstack(parts)


@dataclass
class Run:
    load_kg: float
    index: int
    trials: list

    @property
    def name(self):
        return f"run_{self.load_kg:g}kg_{self.index}"


@dataclass
class RunSet:
    runs: list = field(default_factory=list)
    manifest: dict = field(default_factory=dict)

    def loads(self):
        return sorted({r.load_kg for r in self.runs})

    def by_load(self, load):
        return [r for r in self.runs if r.load_kg == load]

    def trials(self, load=None):
        runs = self.runs if load is None else self.by_load(load)
        return [t for r in runs for t in r.trials]

    def __len__(self):
        return len(self.runs)


# --- CSV I/O ---------------------------------------------------------------

def write_trial_csv(trial, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(trial.columns())
        for row in trial.table():
            w.writerow([repr(float(v)) for v in row])
    return path


def read_trial_csv(path, load_kg=0.0, rate=None):
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError("empty file", path=path) from None
        rows = list(reader)
    missing = [c for c in BASE_COLUMNS if c not in header]
    if missing:
        raise SchemaError(f"missing columns {missing}", row=0, path=path)
    known = set(BASE_COLUMNS) | set(COMPUTED_COLUMNS)
    unknown = [c for c in header if c not in known]
    if unknown:
        raise SchemaError(f"unknown columns {unknown}", row=0, path=path)
    has_derived = [c in header for c in COMPUTED_COLUMNS]
    if any(has_derived) and not all(has_derived):
        raise SchemaError("derived columns must be all present or all absent", row=0, path=path)

    data = np.empty((len(rows), len(header)))
    for i, row in enumerate(rows, start=1):
        if len(row) != len(header):
            raise SchemaError(f"expected {len(header)} fields, got {len(row)}", row=i, path=path)
        for j, cell in enumerate(row):
            try:
                v = float(cell)
            except ValueError:
                raise SchemaError(f"cannot parse {cell!r} as a number", row=i,
                                  column=header[j], path=path) from None
            if not np.isfinite(v):
                raise SchemaError(f"non-finite value {cell!r}", row=i, column=header[j], path=path)
            data[i - 1, j] = v
    col = {c: data[:, header.index(c)] for c in header}
    t = col["t"]
    if rate is None:
        if len(t) < 2:
            raise SchemaError("cannot infer sampling rate from fewer than 2 rows", path=path)
        rate = 1.0 / float(np.median(np.diff(t)))
        rate = float(np.round(rate, 6))
    trial = Trial(
        t=t,
        emg=np.column_stack([col[c] for c in EMG_COLUMNS]),
        q=np.column_stack([col[c] for c in ANGLE_COLUMNS]),
        load_kg=float(load_kg),
        rate=float(rate),
    )
    if all(has_derived):
        trial.qd = np.column_stack([col["qd_shoulder"], col["qd_elbow"]])
        trial.qdd = np.column_stack([col["qdd_shoulder"], col["qdd_elbow"]])
        trial.tau = np.column_stack([col["tau_shoulder"], col["tau_elbow"]])
    # header is row 0, first data row is row 1
    return trial.validate(path=path, row_offset=1)


def save_runset(runs, root, manifest=None):
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    for run in runs.runs:
        for k, trial in enumerate(run.trials):
            write_trial_csv(trial, root / run.name / f"trial_{k}.csv")
    doc = {
        "schema_version": SCHEMA_VERSION,
        "columns": list(BASE_COLUMNS + COMPUTED_COLUMNS),
        "loads": runs.loads(),
        "runs": [r.name for r in runs.runs],
        "rates": {"angles": signals.ANGLE_RATE, "emg": signals.EMG_RATE},
    }
    doc.update(runs.manifest)
    doc.update(manifest or {})
    (root / "manifest.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return root


def load_trials(path):
    """Read a dataset directory (``run_<load>kg_<idx>/trial_<k>.csv``)."""
    root = Path(path)
    if not root.is_dir():
        raise SchemaError("dataset directory does not exist", path=root)
    manifest = {}
    mpath = root / "manifest.json"
    if mpath.exists():
        manifest = json.loads(mpath.read_text())
        if manifest.get("schema_version", SCHEMA_VERSION) != SCHEMA_VERSION:
            raise SchemaError(f"unsupported schema version {manifest.get('schema_version')}", path=mpath)
    runs = []
    for d in sorted(p for p in root.iterdir() if p.is_dir()):
        m = RUN_DIR.match(d.name)
        if not m:
            continue
        files = sorted((int(_TRIAL_FILE.match(f.name)["k"]), f)
                       for f in d.iterdir() if _TRIAL_FILE.match(f.name))
        load = float(m["load"])
        trials = [read_trial_csv(f, load_kg=load) for _, f in files]
        runs.append(Run(load, int(m["idx"]), trials))
    runs.sort(key=lambda r: (r.load_kg, r.index))
    if not runs:
        raise SchemaError("no run_<load>kg_<idx> directories found", path=root)
    return RunSet(runs, manifest)


def row_counts(runs):
    return {r.name: sum(len(t) for t in r.trials) for r in runs.runs}


# --- splitting -------------------------------------------------------------

@dataclass(frozen=True)
class SplitSpec:
    train_runs: int = 2
    val_runs: int = 1
    test_runs: int = 1


def split(runs, spec=SplitSpec(), seed=0):
    """Per-load deterministic permutation of runs into train/val/test."""
    rng = np.random.default_rng(seed)
    need = spec.train_runs + spec.val_runs + spec.test_runs
    out = {"train": [], "val": [], "test": []}
    for load in runs.loads():
        group = runs.by_load(load)
        if len(group) < need:
            raise InsufficientRuns(f"load {load:g} kg has {len(group)} runs, split needs {need}")
        order = rng.permutation(len(group))
        picks = [group[i] for i in order]
        a, b = spec.train_runs, spec.train_runs + spec.val_runs
        out["train"] += picks[:a]
        out["val"] += picks[a:b]
        out["test"] += picks[b:]
    return {k: RunSet(sorted(v, key=lambda r: (r.load_kg, r.index)), dict(runs.manifest))
            for k, v in out.items()}


# --- benchmark torque ------------------------------------------------------

def benchmark_torque(trial, model, sigma_samples=10.0, half_width_samples=None):
    """Smooth angles, differentiate twice, and run inverse dynamics per row.

    The trial's load is folded into ``model`` as the hand mass.
    """
    series = signals.UniformSeries(trial.rate, trial.q, float(trial.t[0]))
    smooth = signals.gaussian_smooth(series, sigma_samples, half_width_samples)
    qd = signals.central_difference(smooth, 1).values
    qdd = signals.central_difference(smooth, 2).values
    tau = dynamics.inverse_dynamics(model.with_load(trial.load_kg), smooth.values, qd, qdd)
    return replace(trial, qd=qd, qdd=qdd, tau=tau)


# --- synthesis -------------------------------------------------------------

def min_jerk_segment(s):
    """Normalized min-jerk position, velocity, acceleration for s in [0, 1]."""
    s = np.clip(s, 0.0, 1.0)
    pos = 10 * s ** 3 - 15 * s ** 4 + 6 * s ** 5
    vel = 30 * s ** 2 - 60 * s ** 3 + 30 * s ** 4
    acc = 60 * s - 180 * s ** 2 + 120 * s ** 3
    return pos, vel, acc


def piecewise_min_jerk(t, waypoints):
    """Rest-to-rest min-jerk moves through ``waypoints`` [(time, value), ...]."""
    t = np.asarray(t, dtype=float)
    x = np.full_like(t, waypoints[0][1])
    xd = np.zeros_like(t)
    xdd = np.zeros_like(t)
    for (t0, v0), (t1, v1) in zip(waypoints[:-1], waypoints[1:]):
        if t1 <= t0:
            continue
        dur = t1 - t0
        mask = t >= t0
        p, v, a = min_jerk_segment((t[mask] - t0) / dur)
        x[mask] = v0 + (v1 - v0) * p
        xd[mask] = (v1 - v0) * v / dur
        xdd[mask] = (v1 - v0) * a / dur ** 2
    return x, xd, xdd


@dataclass(frozen=True)
class TrajectoryConfig:
    rate: float = signals.ANGLE_RATE
    reps: int = 1
    rest: float = 0.3
    flex_duration: float = 1.5
    extend_duration: float = 1.5
    elbow_offset: float = 0.2
    elbow_amplitude: float = 1.6
    shoulder_offset: float = 0.05
    shoulder_amplitude: float = 0.15
    shoulder_lead: float = 0.7
    jitter: float = 0.0
    seed: int = 0

    def validate(self):
        if self.reps < 1:
            raise ConfigError("reps must be >= 1", "reps")
        if not self.rate > 0:
            raise ConfigError("rate must be > 0", "rate")
        for name in ("flex_duration", "extend_duration"):
            if not getattr(self, name) > 0:
                raise ConfigError("must be > 0", name)
        if self.rest < 0:
            raise ConfigError("must be >= 0", "rest")
        if not 0 <= self.jitter < 1:
            raise ConfigError("must lie in [0, 1)", "jitter")
        if not 0 < self.shoulder_lead <= 1:
            raise ConfigError("must lie in (0, 1]", "shoulder_lead")
        top = self.elbow_offset + self.elbow_amplitude * (1 + self.jitter)
        if self.elbow_offset < 0 or top > 2.6 or self.elbow_amplitude < 0:
            raise ConfigError("elbow range must stay within [0, 2.6] rad", "elbow_amplitude")
        if abs(self.shoulder_amplitude) > 1.0:
            raise ConfigError("shoulder amplitude must be within 1 rad", "shoulder_amplitude")
        return self


@dataclass
class SynthTrajectory:
    t: np.ndarray
    q: np.ndarray
    qd: np.ndarray
    qdd: np.ndarray
    waypoints: dict


def synth_trajectory(cfg=TrajectoryConfig()):
    """Elbow flexion-extension cycles with a smaller, leading shoulder motion.

    Each repetition moves the elbow offset -> offset + amplitude -> offset
    with rest-to-rest minimum-jerk profiles. The shoulder flexes over the
    first ``shoulder_lead`` fraction of the elbow flexion and returns over the
    last fraction of the extension. ``jitter`` scales durations and
    amplitudes by a seeded factor in ``[1 - jitter, 1 + jitter]``.
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)

    def jit():
        return 1.0 + (rng.uniform(-cfg.jitter, cfg.jitter) if cfg.jitter else 0.0)

    elbow = [(0.0, cfg.elbow_offset), (cfg.rest, cfg.elbow_offset)]
    shoulder = [(0.0, cfg.shoulder_offset), (cfg.rest, cfg.shoulder_offset)]
    t0 = cfg.rest
    for _ in range(cfg.reps):
        tf = cfg.flex_duration * jit()
        te = cfg.extend_duration * jit()
        amp = cfg.elbow_amplitude * jit()
        samp = cfg.shoulder_amplitude * jit()
        lead = cfg.shoulder_lead
        elbow += [(t0 + tf, cfg.elbow_offset + amp), (t0 + tf + te, cfg.elbow_offset)]
        shoulder += [(t0 + lead * tf, cfg.shoulder_offset + samp),
                     (t0 + tf + (1 - lead) * te, cfg.shoulder_offset + samp),
                     (t0 + tf + te, cfg.shoulder_offset)]
        t0 += tf + te
    end = t0 + cfg.rest
    n = int(np.floor(end * cfg.rate + 1e-9)) + 1
    t = np.arange(n) / cfg.rate
    se, sed, sedd = piecewise_min_jerk(t, shoulder)
    ee, eed, eedd = piecewise_min_jerk(t, elbow)
    return SynthTrajectory(t, np.column_stack([se, ee]), np.column_stack([sed, eed]),
                           np.column_stack([sedd, eedd]),
                           {"shoulder": shoulder, "elbow": elbow})


@dataclass(frozen=True)
class EmgSynthConfig:
    noise_std: float = 0.0
    activation_gain: float = 1.0
    channel_gains: tuple = (1.0, 0.8, 1.0, 0.7)
    lowpass_hz: float = 7.0
    torque_ref: Optional[float] = None
    seed: int = 0

    def validate(self):
        if self.noise_std < 0:
            raise ConfigError("must be >= 0", "noise_std")
        if not self.activation_gain > 0:
            raise ConfigError("must be > 0", "activation_gain")
        if len(self.channel_gains) != 4 or min(self.channel_gains) < 0:
            raise ConfigError("need four nonnegative gains", "channel_gains")
        if self.torque_ref is not None and not self.torque_ref > 0:
            raise ConfigError("must be > 0", "torque_ref")
        return self


def synth_emg(trial, cfg=EmgSynthConfig()):
    """Torque-driven EMG envelopes: biceps from flexor, triceps from extensor torque."""
    cfg.validate()
    if trial.tau is None:
        raise ConfigError("trial has no torque columns; run benchmark_torque first", "tau")
    tau_e = trial.tau[:, 1]
    ref = cfg.torque_ref or float(np.max(np.abs(tau_e))) or 1.0
    flex = np.maximum(tau_e, 0.0) / ref
    ext = np.maximum(-tau_e, 0.0) / ref
    drive = np.column_stack([flex, flex, ext, ext]) * np.asarray(cfg.channel_gains) * cfg.activation_gain
    if np.any(drive > 0):
        spec = signals.FilterSpec("lowpass", (cfg.lowpass_hz,), 4)
        drive = signals.butterworth_filter(signals.UniformSeries(trial.rate, drive), spec).values
    env = np.clip(drive, 0.0, 1.0)
    if cfg.noise_std > 0:
        rng = np.random.default_rng(cfg.seed)
        env = env + rng.normal(0.0, cfg.noise_std, size=env.shape)
    return np.clip(env, 0.0, EMG_MAX)


def trial_seed(seed, *keys):
    return int(np.random.SeedSequence([int(seed)] + [int(k) for k in keys]).generate_state(1)[0])


@dataclass(frozen=True)
class SynthDatasetConfig:
    loads: tuple = (0.0, 2.0, 4.0)
    runs_per_load: int = 4
    trials_per_run: int = 10
    seed: int = 0
    trajectory: TrajectoryConfig = TrajectoryConfig(jitter=0.15)
    emg: EmgSynthConfig = EmgSynthConfig()

    def to_dict(self):
        return asdict(self)


def make_synthetic_dataset(model, cfg=SynthDatasetConfig()):
    """Synthetic RunSet: min-jerk kinematics -> benchmark torque -> EMG.

    The EMG torque reference is the largest elbow torque magnitude over the
    whole dataset, so envelope amplitude grows with the hand load.
    """
    if cfg.runs_per_load < 1 or cfg.trials_per_run < 1:
        raise ConfigError("runs_per_load and trials_per_run must be >= 1")
    staged = []
    for li, load in enumerate(cfg.loads):
        for r in range(cfg.runs_per_load):
            trials = []
            for k in range(cfg.trials_per_run):
                s = trial_seed(cfg.seed, li, r, k)
                traj = synth_trajectory(replace(cfg.trajectory, seed=s))
                trial = Trial(traj.t, np.zeros((len(traj.t), 4)), traj.q,
                              load_kg=float(load), rate=cfg.trajectory.rate)
                trials.append((benchmark_torque(trial, model), s))
            staged.append((float(load), r, trials))
    ref = cfg.emg.torque_ref or max(float(np.max(np.abs(tr.tau[:, 1])))
                                    for _, _, ts in staged for tr, _ in ts)
    runs = []
    for load, r, trials in staged:
        out = []
        for trial, s in trials:
            emg = synth_emg(trial, replace(cfg.emg, torque_ref=ref, seed=s))
            out.append(replace(trial, emg=emg).validate())
        runs.append(Run(load, r, out))
    manifest = {"synth": cfg.to_dict(), "emg_torque_ref": ref, "seed": cfg.seed}
    return RunSet(runs, manifest)
