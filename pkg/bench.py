import json
import logging
import math
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import cvxpy
import numpy as np
import pandas as pd
import psutil
import scipy
import yaml

from pnorms.conic import DEFAULT_SOLVER, DEFAULT_TOL
from pnorms.covering import EXPERIMENT_ALPHA, CoveringConstants, build_H1, build_H2, build_H3
from pnorms.tensor import as_exponent
from pnorms.tensor_norms import (
    DEFAULT_PROGRAM_BUDGET,
    SCALES,
    alg3_unfold_nuclear,
    alg4_partition_nuclear,
    alg6_cover_nuclear,
    alg7_randomized,
    asymptotic_bound,
    gen_known_nuclear_instance,
    theoretical_bound,
    vector_estimate,
)
from pnorms.utils.cache import cache
from pnorms.utils.errors import ValidationError
from pnorms.utils.stopwatch import StopWatch

log = logging.getLogger("pnorms.bench")

METHODS = ("vector", "unfold", "partition", "cover-h1", "cover-h2", "random")
CSV_COLUMNS = ["method", "n", "r", "min_ratio", "avg_ratio", "max_ratio", "avg_time_s", "theoretical_bound"]

# spawn keys for the per-instance streams
_INSTANCE_STREAM = 0
_HITSET_STREAM = 1


@dataclass
class ExperimentConfig:
    p: str = "3"
    d: int = 3
    n: list = field(default_factory=lambda: [3])
    r: list = field(default_factory=lambda: [1, 2, 3, 4, 5, 10])
    instances: int = 20
    methods: list = field(default_factory=lambda: list(METHODS))
    eps: float = 0.05
    seed: int = 0
    tol: float = DEFAULT_TOL
    solver: str = DEFAULT_SOLVER
    alpha: float = EXPERIMENT_ALPHA
    beta: float = None
    constants: dict = field(default_factory=lambda: CoveringConstants().to_dict())
    scale: str = "probed"
    probes: int = 10_000
    program_budget: int = DEFAULT_PROGRAM_BUDGET
    workers: int = 1

    def __post_init__(self):
        self.p = str(self.p)
        self.n = [int(n) for n in np.atleast_1d(self.n)]
        self.r = [int(r) for r in np.atleast_1d(self.r)]
        self.methods = list(self.methods)
        if self.beta is None:
            self.beta = self.alpha + 1

        # known nuclear values exist only at p = d
        if as_exponent(self.p) != self.d:
            raise ValidationError(f"experiments use known-nuclear instances, which need p = d; got p={self.p}, d={self.d}")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise ValidationError(f"unknown methods {unknown}; choose from {list(METHODS)}")
        if self.scale not in SCALES:
            raise ValidationError(f"scale must be one of {list(SCALES)}, got {self.scale!r}")
        if self.instances < 1:
            raise ValidationError("need at least one instance per cell")
        if not self.n or not self.r:
            raise ValidationError("need at least one n and one r")

    @property
    def covering_constants(self):
        return CoveringConstants(**self.constants)

    @classmethod
    def from_dict(cls, data):
        known = {f for f in cls.__dataclass_fields__}
        data = {k.replace("-", "_"): v for k, v in (data or {}).items()}
        extra = set(data) - known
        if extra:
            raise ValidationError(f"unknown experiment keys: {sorted(extra)}")
        return cls(**data)

    @classmethod
    def load(cls, path):
        # JSON documents are valid YAML
        try:
            with open(path, "r") as f:
                data = yaml.safe_load(f)
        except yaml.YAMLError as e:
            raise ValidationError(f"malformed experiment config {path}: {e}") from None
        if not isinstance(data, dict):
            raise ValidationError(f"experiment config {path} must be a mapping")
        return cls.from_dict(data)

    def to_dict(self):
        return asdict(self)


@dataclass
class ResultRow:
    method: str
    n: int
    r: int
    min_ratio: float
    avg_ratio: float
    max_ratio: float
    avg_time_s: float
    theoretical_bound: float

    def __post_init__(self):
        slack = 1e-12 * max(1.0, abs(self.max_ratio))
        if not (self.min_ratio - slack <= self.avg_ratio <= self.max_ratio + slack):
            raise ValueError("ratios must satisfy min <= avg <= max")


@cache(maxsize=64)
def cover_sets(kind, n, p, alpha, beta):
    builder = {"cover-h1": build_H1, "cover-h2": build_H2}[kind]
    return builder(n, p, alpha, beta)


def _stream(config, n, r, index, kind):
    return np.random.default_rng([config.seed, n, r, index, kind])


def run_method(method, T, config, rng=None):
    """One estimate of the nuclear p-norm with the method's theoretical bound."""
    p, shape = config.p, T.shape
    common = {"tol": config.tol, "solver": config.solver}

    if method == "vector":
        est = vector_estimate(T, p)
    elif method == "unfold":
        est = alg3_unfold_nuclear(T, p, **common)
    elif method == "partition":
        est = alg4_partition_nuclear(T, p, **common)
    elif method in ("cover-h1", "cover-h2"):
        sets = [cover_sets(method, shape[k], p, config.alpha, config.beta) for k in range(len(shape) - 2)]
        est = alg6_cover_nuclear(
            T,
            p,
            sets,
            budget=config.program_budget,
            scale=config.scale,
            probes=config.probes,
            method=method,
            **common,
        )
    elif method == "random":
        est = alg7_randomized(
            T,
            p,
            config.eps,
            rng=rng,
            constants=config.covering_constants,
            budget=config.program_budget,
            scale=config.scale,
            probes=config.probes,
            **common,
        )
    else:
        raise ValidationError(f"unknown method {method!r}")

    # guarantees come from the certified ratios whatever scale is reported
    taus = est.stats.get("certified_taus", est.taus)
    return est, theoretical_bound(method, shape, p, taus)


def run_instance(task):
    """Every configured method on one known-nuclear instance."""
    config, n, r, index = task
    T, true = gen_known_nuclear_instance(n, config.d, r, _stream(config, n, r, index, _INSTANCE_STREAM), config.p)

    out = []
    for method in config.methods:
        watch = StopWatch()
        with watch:
            est, bound = run_method(method, T, config, _stream(config, n, r, index, _HITSET_STREAM))
        out.append(
            {
                "method": method,
                "n": n,
                "r": r,
                "instance": index,
                "true": true,
                "value": est.value,
                "ratio": est.value / true if true > 0 else 1.0,
                "lower": est.lower,
                "upper": _finite(est.upper),
                "certified": est.certified,
                "taus": list(est.taus),
                "bound": bound,
                "time_s": watch.elapsed,
            }
        )
    return out


class Bench:
    """Runs the known-nuclear experiment grid."""

    def __init__(self, config, *, workers=None):
        self.config = config
        self.workers = workers or config.workers

    def tasks(self):
        for n in self.config.n:
            for r in self.config.r:
                for index in range(self.config.instances):
                    yield self.config, n, r, index

    def run(self):
        tasks = list(self.tasks())
        log.info(f"running {len(tasks)} instances with {self.workers} worker(s)")

        if self.workers > 1:
            with ProcessPoolExecutor(max_workers=self.workers) as pool:
                results = list(pool.map(run_instance, tasks))
        else:
            results = []
            for task in tasks:
                results.append(run_instance(task))
                _, n, r, index = task
                if index == self.config.instances - 1:
                    log.info(f"finished cell n={n} r={r}")

        detail = [record for batch in results for record in batch]
        order = {m: i for i, m in enumerate(self.config.methods)}
        detail.sort(key=lambda rec: (order[rec["method"]], rec["n"], rec["r"], rec["instance"]))
        return self.aggregate(detail), detail

    def aggregate(self, detail):
        frame = pd.DataFrame(detail)
        rows = []
        for method in self.config.methods:
            for n in self.config.n:
                for r in self.config.r:
                    cell = frame[(frame["method"] == method) & (frame["n"] == n) & (frame["r"] == r)]
                    rows.append(
                        ResultRow(
                            method=method,
                            n=n,
                            r=r,
                            min_ratio=float(cell["ratio"].min()),
                            avg_ratio=float(cell["ratio"].mean()),
                            max_ratio=float(cell["ratio"].max()),
                            avg_time_s=float(cell["time_s"].mean()),
                            theoretical_bound=float(cell["bound"].min()),
                        )
                    )
        return rows

    def asymptotics(self):
        out = {}
        for method in self.config.methods:
            out[method] = {str(n): asymptotic_bound(method, n, self.config.d, self.config.p) for n in self.config.n}
        return out


def provenance():
    memory = psutil.virtual_memory()
    return {
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "cvxpy": cvxpy.__version__,
        "pandas": pd.__version__,
        "cpus": psutil.cpu_count(logical=True),
        "memory_bytes": memory.total,
    }


def load_reference(path):
    """Published result rows, in the bench CSV layout."""
    frame = pd.read_csv(path)
    missing = [c for c in CSV_COLUMNS if c not in frame.columns]
    if missing:
        raise ValidationError(f"reference table {path} lacks columns {missing}")
    return [ResultRow(**row) for row in frame[CSV_COLUMNS].to_dict("records")]


def strip_timing(payload):
    """Drop every key ending in ``_s``, recursively."""
    if isinstance(payload, dict):
        return {k: strip_timing(v) for k, v in payload.items() if not k.endswith("_s")}
    if isinstance(payload, list):
        return [strip_timing(v) for v in payload]
    return payload


def _finite(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def emit_report(rows, csv_path, json_path=None, *, detail=None, extra=None):
    """Writes the aggregated rows as CSV and, optionally, everything as JSON."""
    frame = pd.DataFrame([asdict(row) for row in rows], columns=CSV_COLUMNS)
    frame.to_csv(csv_path, index=False, float_format="%.4f")

    if json_path is not None:
        payload = dict(extra or {})
        payload["rows"] = [{k: _finite(v) for k, v in asdict(row).items()} for row in rows]
        payload["instances"] = detail or []
        Path(json_path).write_text(json.dumps(payload, indent=2, sort_keys=True), encoding="utf-8")
    return frame
