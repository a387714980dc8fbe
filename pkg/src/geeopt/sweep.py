"""Monte Carlo parameter sweeps with deterministic CSV output.

A sweep runs every (value, QoS mode, seed) cell, possibly in parallel, and
averages the per-cell metrics in a fixed order so that the CSV bytes do not
depend on scheduling. Seeds are ``base_seed + i`` for ``i < seeds``, the
same draws for every swept value.
"""

from __future__ import annotations

import csv
import io
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .brd import BrdOptions
from .learning import LearningParams
from .model import ScenarioError
from .optimizer import SolverOptions, maximize_gee
from .qos import MODES, QosMode
from .scenario_gen import GenConfig, generate

PARAMS = ("p_max_dbw", "xi_ratio", "rho", "r_min")
COLUMNS = (
    "sweep_param", "value", "qos_mode", "seed_count", "mean_gee", "mean_sum_rate",
    "mean_user_rate", "satisfied_ratio", "mean_I_D", "mean_I_B", "mean_I_L",
    "nonconverged_count",
)
THREADS_ENV = "GEEOPT_THREADS"


class ConfigError(ValueError):
    """Invalid sweep configuration; ``field`` is the dotted path of the culprit."""

    def __init__(self, message, field=None):
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field


def _sub(cls, d, path):
    if not isinstance(d, dict):
        raise ConfigError("expected an object", path)
    known = {f.name for f in fields(cls)}
    for key in d:
        if key not in known:
            raise ConfigError("unknown field", f"{path}.{key}")
    try:
        return cls(**d)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), path) from None


@dataclass(frozen=True)
class SolverSpec:
    """Solver settings shared by every cell; ``rho`` and ``C`` apply to barrier mode."""

    tol: float = 1e-4
    max_outer: int = 50
    rho: float = 1.0
    C: float = -1e3
    brd: BrdOptions = BrdOptions()
    learning: LearningParams = LearningParams()

    def options(self, mode: str, rho: float | None = None) -> SolverOptions:
        if mode == "barrier":
            qos = QosMode.barrier(self.rho if rho is None else rho, self.C)
        else:
            qos = QosMode(mode)
        return SolverOptions(tol=self.tol, max_outer=self.max_outer, brd=self.brd,
                             learning=self.learning, qos=qos)


@dataclass(frozen=True)
class SweepConfig:
    """One swept parameter over ``values`` for each QoS mode in ``modes``.

    ``base`` holds the remaining scenario parameters (powers in dBW).
    """

    param: str
    values: tuple
    seeds: int
    modes: tuple = ("none",)
    base_seed: int = 0
    base: GenConfig = GenConfig()
    solver: SolverSpec = SolverSpec()
    out: str | None = None

    def __post_init__(self):
        if self.param not in PARAMS:
            raise ConfigError(f"must be one of {PARAMS}", "param")
        if len(self.values) < 1:
            raise ConfigError("at least one value is required", "values")
        if self.seeds < 1:
            raise ConfigError("at least one seed is required", "seeds")
        if not self.modes:
            raise ConfigError("at least one mode is required", "modes")
        for i, m in enumerate(self.modes):
            if m not in MODES:
                raise ConfigError(f"unknown mode {m!r}", f"modes[{i}]")

    @classmethod
    def from_dict(cls, d) -> "SweepConfig":
        if not isinstance(d, dict):
            raise ConfigError("sweep config must be a JSON object")
        for key in ("param", "values", "seeds"):
            if key not in d:
                raise ConfigError("missing field", key)
        known = {f.name for f in fields(cls)}
        for key in d:
            if key not in known:
                raise ConfigError("unknown field", key)
        values = d["values"]
        if not isinstance(values, list) or not all(isinstance(v, (int, float)) for v in values):
            raise ConfigError("expected a list of numbers", "values")
        if not isinstance(d["seeds"], int):
            raise ConfigError("expected an integer", "seeds")
        modes = d.get("modes", ["none"])
        if isinstance(modes, str) or not isinstance(modes, list):
            raise ConfigError("expected a list of mode names", "modes")
        base = _sub(GenConfig, d.get("base", {}), "base")
        s = dict(d.get("solver", {}))
        if not isinstance(s, dict):
            raise ConfigError("expected an object", "solver")
        brd = _sub(BrdOptions, s.pop("brd", {}), "solver.brd")
        learning = _sub(LearningParams, s.pop("learning", {}), "solver.learning")
        solver = _sub(SolverSpec, s, "solver")
        solver = SolverSpec(solver.tol, solver.max_outer, solver.rho, solver.C, brd, learning)
        return cls(
            param=d["param"],
            values=tuple(float(v) for v in values),
            seeds=d["seeds"],
            modes=tuple(modes),
            base_seed=int(d.get("base_seed", 0)),
            base=base,
            solver=solver,
            out=d.get("out"),
        )

    @classmethod
    def load(cls, path) -> "SweepConfig":
        try:
            d = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from None
        return cls.from_dict(d)


@dataclass(frozen=True)
class Cell:
    value_index: int
    mode_index: int
    seed: int


@dataclass
class CellResult:
    cell: Cell
    ok: bool
    gee: float = float("nan")
    sum_rate: float = float("nan")
    user_rate: float = float("nan")
    satisfied: float = float("nan")
    I_D: float = float("nan")
    I_B: float = float("nan")
    I_L: float = float("nan")
    converged: bool = False
    error: str = ""


def cells(cfg: SweepConfig) -> list:
    return [
        Cell(v, m, cfg.base_seed + i)
        for v in range(len(cfg.values))
        for m in range(len(cfg.modes))
        for i in range(cfg.seeds)
    ]


def cell_inputs(cfg: SweepConfig, cell: Cell):
    """Scenario configuration and solver options of one cell."""
    value = cfg.values[cell.value_index]
    mode = cfg.modes[cell.mode_index]
    gen = cfg.base.with_(seed=cell.seed)
    rho = None
    if cfg.param == "rho":
        rho = value
    else:
        gen = gen.with_(**{cfg.param: value})
    return gen, cfg.solver.options(mode, rho)


def run_cell(cfg: SweepConfig, cell: Cell) -> CellResult:
    gen, opts = cell_inputs(cfg, cell)
    s = generate(gen)
    try:
        r = maximize_gee(s, opts)
    except ScenarioError as exc:
        return CellResult(cell, False, error=str(exc))
    return CellResult(
        cell, True, gee=r.gee, sum_rate=r.sum_rate, user_rate=r.sum_rate / s.K,
        satisfied=r.satisfied_ratio, I_D=r.I_D, I_B=r.mean_I_B, I_L=r.mean_I_L,
        converged=r.converged,
    )


def _run_chunk(args):
    cfg, chunk = args
    return [run_cell(cfg, c) for c in chunk]


def thread_count() -> int:
    """Worker processes allowed by ``GEEOPT_THREADS`` (default: CPU count)."""
    raw = os.environ.get(THREADS_ENV)
    if raw is None or raw.strip() == "":
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    return max(1, n)


def run_cells(cfg: SweepConfig, workers: int | None = None) -> list:
    todo = cells(cfg)
    workers = min(thread_count() if workers is None else workers, len(todo))
    if workers <= 1:
        results = [run_cell(cfg, c) for c in todo]
    else:
        chunks = [todo[i::workers] for i in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = [r for part in ex.map(_run_chunk, [(cfg, ch) for ch in chunks]) for r in part]
    return sorted(results, key=lambda r: (r.cell.value_index, r.cell.mode_index, r.cell.seed))


def _mean(xs):
    return float(np.mean(xs)) if xs else float("nan")


def aggregate(cfg: SweepConfig, results) -> list:
    """One row per (value, mode), averaging successful cells in seed order."""
    rows = []
    for v, value in enumerate(cfg.values):
        for m, mode in enumerate(cfg.modes):
            group = [r for r in results if r.cell.value_index == v and r.cell.mode_index == m]
            group.sort(key=lambda r: r.cell.seed)
            ok = [r for r in group if r.ok]
            rows.append({
                "sweep_param": cfg.param,
                "value": value,
                "qos_mode": mode,
                "seed_count": len(group),
                "mean_gee": _mean([r.gee for r in ok]),
                "mean_sum_rate": _mean([r.sum_rate for r in ok]),
                "mean_user_rate": _mean([r.user_rate for r in ok]),
                "satisfied_ratio": _mean([r.satisfied for r in ok]),
                "mean_I_D": _mean([r.I_D for r in ok]),
                "mean_I_B": _mean([r.I_B for r in ok]),
                "mean_I_L": _mean([r.I_L for r in ok]),
                "nonconverged_count": sum(1 for r in group if not (r.ok and r.converged)),
            })
    return rows


def _fmt(x):
    if isinstance(x, float):
        return repr(x)
    return str(x)


def to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for row in rows:
        w.writerow([_fmt(row[c]) for c in COLUMNS])
    return buf.getvalue()


def run_sweep(cfg: SweepConfig, out=None, workers: int | None = None) -> list:
    """Run all cells, write the CSV to ``out`` (or ``cfg.out``) if given, return the rows."""
    rows = aggregate(cfg, run_cells(cfg, workers))
    out = out if out is not None else cfg.out
    if out is not None:
        Path(out).write_text(to_csv(rows))
    return rows
