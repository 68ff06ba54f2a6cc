"""Synthetic MapReduce logs drawn from a known causal model.

Job duration is driven by the number of map waves::

    map_tasks = ceil(inputsize / blocksize)
    waves     = ceil(map_tasks / (slots_per_instance * numinstances))
    duration  = waves * per_block_time[script] * (1 + N(0, noise))

Everything else in a record (reduce settings, io sort factor, nuisance
columns) has no effect on duration, so a good explanation can be checked
against the planted causes.  Sizes are binary: 1 GB = 2**30 bytes.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .logmodel import ExecutionLog, ExecutionRecord, FeatureSchema

KB, MB, GB = 2**10, 2**20, 2**30

CAUSAL_FEATURES = ("inputsize", "blocksize", "numinstances", "pig_script")


def _default_grid() -> dict:
    return {
        "numinstances": [1, 2, 4, 8, 16],
        "inputsize": [1.3 * GB, 2.6 * GB],
        "blocksize": [64 * MB, 256 * MB, 1024 * MB],
        "reducefactor": [1.0, 1.5, 2.0],
        "iosortfactor": [10, 50, 100],
        "pig_script": ["simple-filter.pig", "simple-groupby.pig"],
    }


@dataclass
class WorkloadSpec:
    grid: dict = field(default_factory=_default_grid)
    noise: float = 0.0
    nuisance_numeric: int = 1
    nuisance_nominal: int = 1
    slots_per_instance: int = 2
    per_block_time: dict = field(default_factory=lambda: {
        "simple-filter.pig": 60.0, "simple-groupby.pig": 90.0})
    repeats: int = 1
    max_jobs: int | None = None
    last_task_speedup: float = 0.7
    rng_seed: int = 0

    def __post_init__(self):
        for key in ("numinstances", "inputsize", "blocksize", "pig_script"):
            if not self.grid.get(key):
                raise ValueError(f"grid needs at least one value for {key!r}")
        for key, values in self.grid.items():
            if not values:
                raise ValueError(f"grid for {key!r} is empty")
        if self.noise < 0:
            raise ValueError("noise must be >= 0")
        if self.slots_per_instance < 1:
            raise ValueError("slots_per_instance must be >= 1")
        if not 0 < self.last_task_speedup <= 1:
            raise ValueError("last_task_speedup must lie in (0, 1]")
        missing = set(self.grid["pig_script"]) - set(self.per_block_time)
        if missing:
            raise ValueError(f"no per_block_time for script(s) {sorted(missing)}")

    @classmethod
    def from_dict(cls, doc: dict) -> "WorkloadSpec":
        doc = dict(doc)
        if "grid" in doc:
            grid = _default_grid()
            grid.update(doc["grid"])
            doc["grid"] = grid
        return cls(**doc)

    @classmethod
    def from_file(cls, path: str | Path) -> "WorkloadSpec":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_dict(self) -> dict:
        return asdict(self)


def num_map_tasks(inputsize: float, blocksize: float) -> int:
    return math.ceil(inputsize / blocksize)


def waves(map_tasks: int, numinstances: int, slots_per_instance: int = 2) -> int:
    return math.ceil(map_tasks / (slots_per_instance * numinstances))


def job_duration(spec: WorkloadSpec, inputsize: float, blocksize: float, numinstances: int,
                 script: str, noise: float = 0.0) -> float:
    w = waves(num_map_tasks(inputsize, blocksize), numinstances, spec.slots_per_instance)
    return w * spec.per_block_time[script] * max(0.05, 1.0 + noise)


def _nominal_levels(i: int) -> list[str]:
    return [f"level{j}" for j in range(3)]


def job_schema(spec: WorkloadSpec) -> list[FeatureSchema]:
    g = spec.grid
    feats = [
        FeatureSchema("numinstances", "numeric", role="config"),
        FeatureSchema("inputsize", "numeric", role="data"),
        FeatureSchema("blocksize", "numeric", role="config"),
    ]
    if "reducefactor" in g:
        feats.append(FeatureSchema("reducefactor", "numeric", role="config"))
        feats.append(FeatureSchema("num_reduce_tasks", "numeric", role="config"))
    if "iosortfactor" in g:
        feats.append(FeatureSchema("iosortfactor", "numeric", role="config"))
    feats.append(FeatureSchema("pig_script", "nominal", tuple(g["pig_script"]), role="app"))
    for i in range(spec.nuisance_numeric):
        feats.append(FeatureSchema(f"nuisance_num{i}", "numeric", role="metric"))
    for i in range(spec.nuisance_nominal):
        feats.append(FeatureSchema(f"nuisance_cat{i}", "nominal", tuple(_nominal_levels(i)), role="metric"))
    feats.append(FeatureSchema("duration", "numeric", role="outcome"))
    return feats


def _grid_points(spec: WorkloadSpec) -> list[dict]:
    keys = list(spec.grid)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(spec.grid[k] for k in keys))]


def generate_job_log(spec: WorkloadSpec) -> ExecutionLog:
    rng = np.random.default_rng([spec.rng_seed, 0])
    points = _grid_points(spec) * spec.repeats
    if spec.max_jobs is not None and spec.max_jobs < len(points):
        chosen = np.sort(rng.choice(len(points), size=spec.max_jobs, replace=False))
        points = [points[i] for i in chosen]
    schema = job_schema(spec)
    names = {f.name for f in schema}
    records = []
    for n, p in enumerate(points):
        values = {}
        inst = float(p["numinstances"])
        values["numinstances"] = inst
        values["inputsize"] = float(p["inputsize"])
        values["blocksize"] = float(p["blocksize"])
        if "reducefactor" in names:
            values["reducefactor"] = float(p["reducefactor"])
            values["num_reduce_tasks"] = float(math.ceil(inst * p["reducefactor"]))
        if "iosortfactor" in names:
            values["iosortfactor"] = float(p["iosortfactor"])
        values["pig_script"] = p["pig_script"]
        for i in range(spec.nuisance_numeric):
            values[f"nuisance_num{i}"] = float(rng.integers(0, 100))
        for i in range(spec.nuisance_nominal):
            levels = _nominal_levels(i)
            values[f"nuisance_cat{i}"] = levels[int(rng.integers(len(levels)))]
        eps = float(rng.normal(0.0, spec.noise)) if spec.noise > 0 else 0.0
        values["duration"] = job_duration(spec, p["inputsize"], p["blocksize"], int(inst),
                                          p["pig_script"], eps)
        records.append(ExecutionRecord(f"job_{n:04d}", values))
    return ExecutionLog(tuple(schema), tuple(records), "job")


def task_schema(spec: WorkloadSpec, job_log: ExecutionLog) -> list[FeatureSchema]:
    max_hosts = int(max(r.values["numinstances"] for r in job_log.records))
    return [
        FeatureSchema("jobID", "nominal", tuple(r.id for r in job_log.records), role="app"),
        FeatureSchema("hostname", "nominal", tuple(f"host{h:02d}" for h in range(max_hosts)), role="metric"),
        FeatureSchema("numinstances", "numeric", role="config"),
        FeatureSchema("blocksize", "numeric", role="config"),
        FeatureSchema("pig_script", "nominal", tuple(spec.grid["pig_script"]), role="app"),
        FeatureSchema("inputsize", "numeric", role="data"),
        FeatureSchema("wave", "numeric", role="metric"),
        FeatureSchema("avg_load_one", "numeric", role="metric"),
        FeatureSchema("avg_cpu_user", "numeric", role="metric"),
        FeatureSchema("nuisance_num0", "numeric", role="metric"),
        FeatureSchema("duration", "numeric", role="outcome"),
    ]


def task_layout(map_tasks: int, numinstances: int, slots: int) -> list[tuple[int, int, bool]]:
    """(host, wave, runs_alone) for each map task, filling all slots wave by wave."""
    per_wave = slots * numinstances
    out = []
    for t in range(map_tasks):
        wave, q = divmod(t, per_wave)
        host = q // slots
        in_wave = min(per_wave, map_tasks - wave * per_wave)
        on_host = min(slots, max(0, in_wave - host * slots))
        out.append((host, wave, on_host == 1 and slots > 1))
    return out


def generate_task_log(spec: WorkloadSpec, job_log: ExecutionLog) -> ExecutionLog:
    """Map-task records for every job; a task alone on its host runs faster and sees less load."""
    rng = np.random.default_rng([spec.rng_seed, 1])
    schema = task_schema(spec, job_log)
    records = []
    slots = spec.slots_per_instance
    for job in job_log.records:
        v = job.values
        inst = int(v["numinstances"])
        maps = num_map_tasks(v["inputsize"], v["blocksize"])
        split = v["inputsize"] / maps
        for t, (host, wave, alone) in enumerate(task_layout(maps, inst, slots)):
            eps = float(rng.normal(0.0, spec.noise)) if spec.noise > 0 else 0.0
            base = spec.per_block_time[v["pig_script"]]
            factor = spec.last_task_speedup if alone else 1.0
            co_running = 1 if alone else slots
            load_jitter = float(rng.normal(0.0, 0.05)) if spec.noise > 0 else 0.0
            values = {
                "jobID": job.id,
                "hostname": f"host{host:02d}",
                "numinstances": float(inst),
                "blocksize": v["blocksize"],
                "pig_script": v["pig_script"],
                "inputsize": float(split),
                "wave": float(wave),
                "avg_load_one": round(co_running * (1.0 + load_jitter), 6),
                "avg_cpu_user": round(50.0 * co_running / slots * (1.0 + load_jitter), 6),
                "nuisance_num0": float(rng.integers(0, 100)),
                "duration": base * factor * max(0.05, 1.0 + eps),
            }
            records.append(ExecutionRecord(f"{job.id}_m{t:04d}", values, parent_job_id=job.id))
    return ExecutionLog(tuple(schema), tuple(records), "task")


def split_log(log: ExecutionLog, fraction: float, rng: np.random.Generator,
              keep_in_both=()) -> tuple[ExecutionLog, ExecutionLog]:
    """Independent Bernoulli(fraction) assignment of each record to the training half.

    Records whose ids are in ``keep_in_both`` are placed in both halves.
    """
    if not 0 < fraction < 1:
        raise ValueError("fraction must lie strictly between 0 and 1")
    draws = rng.random(len(log.records)) < fraction
    both = set(keep_in_both)
    train = [r for r, d in zip(log.records, draws) if d or r.id in both]
    test = [r for r, d in zip(log.records, draws) if not d or r.id in both]
    return log.subset(train), log.subset(test)
