"""Experiment runner: sweeps, seeded train / evaluate loops, raw metrics and aggregates.

Layout of an output directory::

    raw/<point>/<POLICY>/seed<s>.csv         one row per decision event
    training/<point>/seed<s>.csv             per-episode training log
    checkpoints/<point>/seed<s>/*.npz        trained networks
    summary.csv                              per (point, policy, seed) aggregates
    per_vehicle.csv                          per-vehicle mean delay and energy
    reward_ma.csv                            reward moving averages of every training run
    manifest.json                            what ran, fingerprints, failures

Aggregates are always recomputed from the raw files.
"""

from __future__ import annotations

import csv
import dataclasses
import itertools
import json
import logging
import math
import os
import statistics
import traceback
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np
import yaml

from vecoffload import __version__
from vecoffload.baselines import POLICY_NAMES, Learned, Policy, make_policy
from vecoffload.config import ConfigError, EnvConfig, env_config_from_mapping, env_config_to_mapping
from vecoffload.domain import KMH_TO_MPS
from vecoffload.environment import METRICS_COLUMNS, METRICS_SCHEMA_VERSION, MetricRecord, VecEnv
from vecoffload.learner import EVAL_STREAM, TrainerConfig, TrainingLog, episode_seed, train

log = logging.getLogger(__name__)

OUTPUT_ROOT_ENV = "VECOFFLOAD_OUTPUT_ROOT"
LEARNED = "LEARNED"
# policy randomness (RD's coins) is kept apart from the environment's draws
POLICY_STREAM = 2

SUMMARY_COLUMNS = (
    "point", "n_vehicles", "speed_lo_kmh", "speed_hi_kmh", "policy", "seed", "decisions", "executed",
    "mean_delay_ms", "mean_energy_j", "total_energy_j", "violation_rate", "hold_rate", "mean_reward",
)
PER_VEHICLE_COLUMNS = ("point", "policy", "seed", "vehicle", "executed", "mean_delay_ms", "mean_energy_j")
REWARD_MA_COLUMNS = ("point", "seed", "episode", "avg_reward", "reward_moving_avg")
COMPARISON_COLUMNS = (
    "point", "policy", "reference", "seeds", "mean_energy_j", "reference_energy_j", "energy_delta_mean",
    "energy_delta_std", "mean_delay_ms", "reference_delay_ms", "delay_delta_mean", "delay_delta_std",
    "violation_delta_mean", "share_seeds_energy_le",
)


class MissingRun(LookupError):
    pass


# --------------------------------------------------------------------------- spec


_TRAINER_KEYS = {
    "episodes": ("episodes", int),
    "steps_per_episode": ("steps_per_episode", int),
    "hidden_sizes": ("hidden_sizes", lambda v: tuple(int(x) for x in v)),
    "discount_factor": ("gamma", float),
    "soft_update": ("delta", float),
    "actor_learning_rate": ("actor_lr", float),
    "critic_learning_rate": ("critic_lr", float),
    "batch_size": ("batch_size", int),
    "update_every": ("update_every", int),
    "replay_buffer_size": ("buffer_size", int),
    "noise_start": ("noise_start", float),
    "noise_end": ("noise_end", float),
    "noise_decay_fraction": ("noise_decay_fraction", float),
    "grad_clip": ("grad_clip", lambda v: None if v is None else float(v)),
    "moving_average_window": ("ma_window", int),
}


def trainer_config_from_mapping(data: Mapping[str, Any] | None, paper_scale: bool = False) -> TrainerConfig:
    data = dict(data or {})
    preset = data.pop("preset", "paper" if paper_scale else "desk")
    if paper_scale:
        preset = "paper"
    unknown = sorted(set(data) - set(_TRAINER_KEYS))
    if unknown:
        raise ConfigError(f"unknown trainer keys: {', '.join(unknown)}")
    overrides = {}
    for key, value in data.items():
        name, cast = _TRAINER_KEYS[key]
        overrides[name] = None if value is None and name == "steps_per_episode" else cast(value)
    if preset == "desk":
        return TrainerConfig.desk(**overrides)
    if preset == "paper":
        return TrainerConfig.paper(**overrides)
    raise ConfigError(f"unknown trainer preset {preset!r}; expected 'desk' or 'paper'")


def trainer_config_to_mapping(cfg: TrainerConfig) -> dict[str, Any]:
    out = {}
    for key, (name, _) in _TRAINER_KEYS.items():
        value = getattr(cfg, name)
        out[key] = list(value) if isinstance(value, tuple) else value
    return out


@dataclass(frozen=True)
class SweepPoint:
    n_vehicles: int
    speed_kmh: tuple[float, float]

    @property
    def label(self) -> str:
        lo, hi = self.speed_kmh
        return f"K{self.n_vehicles}_v{lo:g}-{hi:g}"

    def apply(self, base: EnvConfig) -> EnvConfig:
        lo, hi = self.speed_kmh
        cfg = base.replace(n_vehicles=self.n_vehicles, speed_range_mps=(lo * KMH_TO_MPS, hi * KMH_TO_MPS))
        cfg.validate()
        return cfg


@dataclass(frozen=True)
class ExperimentSpec:
    name: str = "experiment"
    env: EnvConfig = field(default_factory=EnvConfig)
    # "train" trains per point and seed, then evaluates the learned actors
    mode: str = "evaluate"
    policies: tuple[str, ...] = ()
    trainer: TrainerConfig = field(default_factory=TrainerConfig.desk)
    vehicle_counts: tuple[int, ...] = ()
    speed_ranges_kmh: tuple[tuple[float, float], ...] = ()
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    eval_episodes: int = 50
    eval_steps: int | None = None
    # may contain {point} and {seed}
    checkpoint: str | None = None
    output_dir: str | None = None

    def __post_init__(self):
        if self.mode not in ("train", "evaluate"):
            raise ConfigError(f"mode must be 'train' or 'evaluate', got {self.mode!r}")
        if self.eval_episodes < 0:
            raise ConfigError("eval_episodes must be non-negative")
        for p in self.policies:
            if p.upper() not in POLICY_NAMES + (LEARNED,):
                raise ConfigError(f"unknown policy {p!r}")
        if self.mode == "evaluate" and not self.policies:
            raise ConfigError("an evaluate run needs at least one policy")

    def points(self) -> list[SweepPoint]:
        lo, hi = self.env.speed_range_mps
        counts = self.vehicle_counts or (self.env.n_vehicles,)
        speeds = self.speed_ranges_kmh or ((round(lo / KMH_TO_MPS, 9), round(hi / KMH_TO_MPS, 9)),)
        return [SweepPoint(int(k), (float(s[0]), float(s[1]))) for k, s in itertools.product(counts, speeds)]

    def replace(self, **changes) -> "ExperimentSpec":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "mode": self.mode,
            "policies": list(self.policies),
            "seeds": list(self.seeds),
            "evaluation_episodes": self.eval_episodes,
            "evaluation_steps": self.eval_steps,
            "checkpoint": self.checkpoint,
            "sweep": {
                "number_of_vehicles": list(self.vehicle_counts),
                "vehicle_speed_kmh": [list(s) for s in self.speed_ranges_kmh],
            },
            "environment": env_config_to_mapping(self.env),
            "trainer": trainer_config_to_mapping(self.trainer),
        }


_SPEC_KEYS = {
    "name", "mode", "policies", "seeds", "evaluation_episodes", "evaluation_steps", "checkpoint",
    "sweep", "environment", "trainer", "output_dir",
}


def experiment_spec_from_mapping(data: Mapping[str, Any] | None, paper_scale: bool = False) -> ExperimentSpec:
    data = dict(data or {})
    unknown = sorted(set(data) - _SPEC_KEYS)
    if unknown:
        raise ConfigError(f"unknown experiment keys: {', '.join(unknown)}")
    sweep = dict(data.get("sweep") or {})
    bad = sorted(set(sweep) - {"number_of_vehicles", "vehicle_speed_kmh"})
    if bad:
        raise ConfigError(f"unknown sweep axes: {', '.join(bad)}")
    env = env_config_from_mapping(data.get("environment"))
    env.validate()
    return ExperimentSpec(
        name=str(data.get("name", "experiment")),
        env=env,
        mode=str(data.get("mode", "evaluate")),
        policies=tuple(str(p).upper() for p in data.get("policies") or ()),
        trainer=trainer_config_from_mapping(data.get("trainer"), paper_scale),
        vehicle_counts=tuple(int(k) for k in sweep.get("number_of_vehicles") or ()),
        speed_ranges_kmh=tuple((float(a), float(b)) for a, b in sweep.get("vehicle_speed_kmh") or ()),
        seeds=tuple(int(s) for s in data.get("seeds", (0, 1, 2, 3, 4))),
        eval_episodes=int(data.get("evaluation_episodes", 50)),
        eval_steps=None if data.get("evaluation_steps") is None else int(data["evaluation_steps"]),
        checkpoint=data.get("checkpoint"),
        output_dir=data.get("output_dir"),
    )


def load_experiment_spec(
    path: str | Path, paper_scale: bool = False, overrides: Mapping[str, Any] | None = None
) -> ExperimentSpec:
    """Read an experiment YAML file; top-level ``overrides`` replace the file's values."""
    with open(path, encoding="utf-8") as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping at the top level")
    data.update(overrides or {})
    return experiment_spec_from_mapping(data, paper_scale)


# --------------------------------------------------------------------------- evaluation


def policy_rng(seed: int, episode: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, POLICY_STREAM, episode]))


def evaluate_policy(
    policy: Policy, config: EnvConfig, seed: int, episodes: int, steps: int | None = None
) -> list[MetricRecord]:
    """Roll ``policy`` out on evaluation-stream episodes; one record per decision event.

    Environment draws depend only on (seed, episode), so different policies
    see the same vehicles, tasks and channel fades.
    """
    env = VecEnv(config)
    steps = steps or config.steps_per_episode
    records: list[MetricRecord] = []
    for ep in range(episodes):
        env.reset(seed=episode_seed(seed, EVAL_STREAM, ep), episode=ep)
        rng = policy_rng(seed, ep)
        for _ in range(steps):
            result = env.step_decisions(policy.decide(env.state, config, rng))
            records.extend(result.records)
    return records


def write_records(path: Path, records: Iterable[MetricRecord]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRICS_COLUMNS)
        for r in records:
            w.writerow(r.to_row())
    return path


def read_records(path: Path) -> list[dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        if row.get("schema_version") != str(METRICS_SCHEMA_VERSION):
            raise ValueError(f"{path}: unsupported metrics schema {row.get('schema_version')!r}")
    return rows


def _mean(xs: Sequence[float]) -> float:
    return math.fsum(xs) / len(xs) if xs else float("nan")


@dataclass(frozen=True)
class RunSummary:
    point: str
    n_vehicles: int
    speed_lo_kmh: float
    speed_hi_kmh: float
    policy: str
    seed: int
    decisions: int
    executed: int
    mean_delay_ms: float
    mean_energy_j: float
    total_energy_j: float
    violation_rate: float
    hold_rate: float
    mean_reward: float

    def row(self) -> list[str]:
        return [
            v if isinstance(v, str) else repr(v) if isinstance(v, float) else str(v)
            for v in dataclasses.astuple(self)
        ]

    @classmethod
    def from_row(cls, row: Mapping[str, str]) -> "RunSummary":
        kw = {}
        for f in dataclasses.fields(cls):
            raw = row[f.name]
            kw[f.name] = raw if f.type == "str" else int(raw) if f.type == "int" else float(raw)
        return cls(**kw)


def summarize(rows: Sequence[Mapping[str, str]], point: SweepPoint, policy: str, seed: int, tti_s: float) -> RunSummary:
    """Aggregate raw metric rows. Delay and energy are per executed (local or VEC) task."""
    executed = [r for r in rows if r["decision"] in ("vec", "local")]
    delays = [int(r["delay_ttis"]) * tti_s * 1e3 for r in executed]
    energies = [float(r["energy_j"]) for r in executed]
    return RunSummary(
        point=point.label,
        n_vehicles=point.n_vehicles,
        speed_lo_kmh=point.speed_kmh[0],
        speed_hi_kmh=point.speed_kmh[1],
        policy=policy,
        seed=seed,
        decisions=len(rows),
        executed=len(executed),
        mean_delay_ms=_mean(delays),
        mean_energy_j=_mean(energies),
        total_energy_j=math.fsum(float(r["energy_j"]) for r in rows),
        violation_rate=_mean([1.0 if r["violated_constraints"] else 0.0 for r in rows]),
        hold_rate=_mean([1.0 if r["decision"] == "hold" else 0.0 for r in rows]),
        mean_reward=_mean([float(r["reward"]) for r in rows]),
    )


def per_vehicle(rows: Sequence[Mapping[str, str]], point: str, policy: str, seed: int, tti_s: float) -> list[list[str]]:
    by: dict[int, list[Mapping[str, str]]] = {}
    for r in rows:
        if r["decision"] in ("vec", "local"):
            by.setdefault(int(r["vehicle"]), []).append(r)
    out = []
    for k in sorted(by):
        rs = by[k]
        out.append([
            point, policy, str(seed), str(k), str(len(rs)),
            repr(_mean([int(r["delay_ttis"]) * tti_s * 1e3 for r in rs])),
            repr(_mean([float(r["energy_j"]) for r in rs])),
        ])
    return out


# --------------------------------------------------------------------------- experiment


@dataclass
class RunRecord:
    point: str
    policy: str
    seed: int
    fingerprint: str
    status: str = "ok"
    metrics: str | None = None
    training_log: str | None = None
    checkpoint: str | None = None
    error: str | None = None


@dataclass
class Manifest:
    name: str
    output_dir: str
    version: str
    spec: dict[str, Any]
    runs: list[RunRecord] = field(default_factory=list)
    artifacts: dict[str, str] = field(default_factory=dict)

    @property
    def failures(self) -> list[RunRecord]:
        return [r for r in self.runs if r.status != "ok"]

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "output_dir": self.output_dir,
            "version": self.version,
            "metrics_schema_version": METRICS_SCHEMA_VERSION,
            "spec": self.spec,
            "runs": [dataclasses.asdict(r) for r in self.runs],
            "failures": len(self.failures),
            "artifacts": self.artifacts,
        }


def resolve_output_dir(spec: ExperimentSpec, out: str | Path | None = None) -> Path:
    """Explicit ``out`` wins, then the spec, then ``$VECOFFLOAD_OUTPUT_ROOT/<name>``, then ``runs/<name>``."""
    if out is not None:
        return Path(out)
    if spec.output_dir:
        return Path(spec.output_dir)
    return Path(os.environ.get(OUTPUT_ROOT_ENV, "runs")) / spec.name


def _rel(path: Path, root: Path) -> str:
    return path.relative_to(root).as_posix()


def run_experiment(spec: ExperimentSpec, out: str | Path | None = None, progress=None) -> Manifest:
    """Run every (sweep point x seed x policy) cell, isolating failures per cell."""
    root = resolve_output_dir(spec, out)
    root.mkdir(parents=True, exist_ok=True)
    manifest = Manifest(spec.name, str(root), __version__, spec.to_dict())
    summaries: list[RunSummary] = []
    vehicle_rows: list[list[str]] = []
    ma_rows: list[list[str]] = []

    for point in spec.points():
        try:
            cfg = point.apply(spec.env)
        except (ConfigError, ValueError) as exc:
            for seed in spec.seeds:
                manifest.runs.append(RunRecord(point.label, "*", seed, "", "failed", error=str(exc)))
            continue
        fp = cfg.fingerprint()
        tti = cfg.compute.tti_seconds
        for seed in spec.seeds:
            cells = [LEARNED] if spec.mode == "train" else []
            cells.extend(p for p in spec.policies if not (spec.mode == "train" and p == LEARNED))
            for policy_name in cells:
                rec = RunRecord(point.label, policy_name, seed, fp)
                manifest.runs.append(rec)
                try:
                    if policy_name == LEARNED and spec.mode == "train":
                        ckpt_dir = root / "checkpoints" / point.label / f"seed{seed}"
                        ckpt_dir.mkdir(parents=True, exist_ok=True)
                        tlog = train(VecEnv(cfg), spec.trainer.replace(seed=seed), checkpoint_dir=ckpt_dir)
                        tpath = _write_training_log(root / "training" / point.label / f"seed{seed}.csv", tlog)
                        rec.training_log = _rel(tpath, root)
                        rec.checkpoint = _rel(Path(tlog.checkpoints[-1]), root)
                        ma_rows.extend(
                            [point.label, str(seed), str(i), repr(r), repr(m)]
                            for i, (r, m) in enumerate(zip(tlog.episode_rewards, tlog.moving_average))
                        )
                        policy: Policy = Learned(tlog.agent, rec.checkpoint)
                    elif policy_name == LEARNED:
                        if not spec.checkpoint:
                            raise ConfigError("evaluating the learned policy needs a checkpoint")
                        policy = make_policy(LEARNED, spec.checkpoint.format(point=point.label, seed=seed))
                    else:
                        policy = make_policy(policy_name)
                    records = evaluate_policy(policy, cfg, seed, spec.eval_episodes, spec.eval_steps)
                    mpath = write_records(root / "raw" / point.label / policy_name / f"seed{seed}.csv", records)
                    rec.metrics = _rel(mpath, root)
                    rows = read_records(mpath)
                    summaries.append(summarize(rows, point, policy_name, seed, tti))
                    vehicle_rows.extend(per_vehicle(rows, point.label, policy_name, seed, tti))
                except Exception as exc:  # isolate the failing cell, keep going
                    rec.status = "failed"
                    rec.error = f"{type(exc).__name__}: {exc}"
                    log.error("%s / %s / seed %d failed:\n%s", point.label, policy_name, seed, traceback.format_exc())
                if progress is not None:
                    progress(rec)

    manifest.artifacts["summary"] = _write_table(root / "summary.csv", SUMMARY_COLUMNS, [s.row() for s in summaries])
    manifest.artifacts["per_vehicle"] = _write_table(root / "per_vehicle.csv", PER_VEHICLE_COLUMNS, vehicle_rows)
    if spec.mode == "train":
        manifest.artifacts["reward_ma"] = _write_table(root / "reward_ma.csv", REWARD_MA_COLUMNS, ma_rows)
    for key in manifest.artifacts:
        manifest.artifacts[key] = _rel(Path(manifest.artifacts[key]), root)
    with open(root / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def _write_table(path: Path, header: Sequence[str], rows: Iterable[Sequence[str]]) -> str:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return str(path)


def _write_training_log(path: Path, tlog: TrainingLog) -> Path:
    _write_table(path, TrainingLog.ROW_HEADER, tlog.rows())
    return path


def load_summaries(root: str | Path) -> list[RunSummary]:
    path = Path(root) / "summary.csv"
    if not path.exists():
        raise MissingRun(f"no summary.csv under {root}")
    with open(path, newline="", encoding="utf-8") as fh:
        return [RunSummary.from_row(r) for r in csv.DictReader(fh)]


# --------------------------------------------------------------------------- comparison


@dataclass(frozen=True)
class Comparison:
    point: str
    policy: str
    reference: str
    seeds: tuple[int, ...]
    mean_energy_j: float
    reference_energy_j: float
    energy_delta_mean: float
    energy_delta_std: float
    mean_delay_ms: float
    reference_delay_ms: float
    delay_delta_mean: float
    delay_delta_std: float
    violation_delta_mean: float
    share_seeds_energy_le: float

    def row(self) -> list[str]:
        out = []
        for v in dataclasses.astuple(self):
            if isinstance(v, tuple):
                out.append(" ".join(str(s) for s in v))
            elif isinstance(v, float):
                out.append(repr(v))
            else:
                out.append(str(v))
        return out


def _std(xs: Sequence[float]) -> float:
    return statistics.stdev(xs) if len(xs) > 1 else 0.0


def compare_policies(
    summaries: Sequence[RunSummary],
    policies: Sequence[str],
    reference: str,
    seeds: Sequence[int] | None = None,
    points: Sequence[str] | None = None,
) -> list[Comparison]:
    """Paired per-seed comparison of each policy against ``reference``.

    Deltas are policy minus reference. Raises :class:`MissingRun` when any
    (point, policy, seed) cell needed for the pairing is absent.
    """
    index = {(s.point, s.policy, s.seed): s for s in summaries}
    all_points = points or sorted({s.point for s in summaries})
    if seeds is None:
        seeds = sorted({s.seed for s in summaries if s.policy == reference})
    if not seeds:
        raise MissingRun(f"no runs of reference policy {reference!r}")
    out = []
    for point in all_points:
        for policy in policies:
            pairs = []
            for seed in seeds:
                for name in (policy, reference):
                    if (point, name, seed) not in index:
                        raise MissingRun(f"missing run: point {point}, policy {name}, seed {seed}")
                pairs.append((index[(point, policy, seed)], index[(point, reference, seed)]))
            de = [a.mean_energy_j - b.mean_energy_j for a, b in pairs]
            dd = [a.mean_delay_ms - b.mean_delay_ms for a, b in pairs]
            dv = [a.violation_rate - b.violation_rate for a, b in pairs]
            out.append(
                Comparison(
                    point=point,
                    policy=policy,
                    reference=reference,
                    seeds=tuple(seeds),
                    mean_energy_j=_mean([a.mean_energy_j for a, _ in pairs]),
                    reference_energy_j=_mean([b.mean_energy_j for _, b in pairs]),
                    energy_delta_mean=_mean(de),
                    energy_delta_std=_std(de),
                    mean_delay_ms=_mean([a.mean_delay_ms for a, _ in pairs]),
                    reference_delay_ms=_mean([b.mean_delay_ms for _, b in pairs]),
                    delay_delta_mean=_mean(dd),
                    delay_delta_std=_std(dd),
                    violation_delta_mean=_mean(dv),
                    share_seeds_energy_le=_mean([1.0 if a.mean_energy_j <= b.mean_energy_j else 0.0 for a, b in pairs]),
                )
            )
    return out


def write_comparison(path: str | Path, rows: Sequence[Comparison]) -> Path:
    path = Path(path)
    _write_table(path, COMPARISON_COLUMNS, [r.row() for r in rows])
    return path
