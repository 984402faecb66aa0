"""Experiment orchestration: configure a problem, generate or load samples,
train the regressor, evaluate on the reporting grid, persist artifacts and
aggregate repeated runs.

Determinism contract: everything semantic is derived from the resolved
configuration (problem constants, N, M, P, learning rate, architecture,
seed); execution details such as the worker count or output paths never
affect any emitted number.  report.json and the CSV outputs are therefore
byte-identical across re-runs and worker counts; volatile wall-clock data
goes to a separate timings.json.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import network
from .problems import Problem, get_problem
from .sampler import (
    SampleBatch,
    SamplerConfig,
    batch_estimate,
    points_stream,
    read_samples,
    sample_points,
    write_samples,
)

GRID_POINTS = 101


@dataclass
class RunConfig:
    """User-facing knobs; unset fields resolve against the problem registry
    and the chosen preset."""

    problem: str
    d: int | None = None
    T: float | None = None
    n_points: int | None = None       # N
    m_samples: int | None = None      # M
    steps: int | None = None          # P
    learning_rate: float | None = None
    l: int | None = None
    m: int | None = None
    seed: int = 0
    runs: int = 1
    preset: str = "desk"
    activation: str | None = None
    lifetime_rate: float | None = None
    nonfinite_policy: str = "propagate"
    tree_node_budget: int = 1_000_000
    # execution-only knobs; excluded from provenance
    outdir: str | None = None
    workers: int = 1
    figures: bool = True
    samples_path: str | None = None   # reuse a cached batch instead of sampling

    def __post_init__(self) -> None:
        if self.preset not in ("desk", "paper"):
            raise ValueError("preset must be 'desk' or 'paper'")
        if self.runs < 1:
            raise ValueError("runs must be >= 1")


_PAPER_DEFAULTS = {"n_points": 1000, "steps": 3000, "learning_rate": 0.01, "l": 6, "m": 20}
_DESK_DEFAULTS = {"n_points": 200, "steps": 600, "learning_rate": 0.01, "l": 6, "m": 20}


@dataclass(frozen=True)
class ResolvedConfig:
    """Fully resolved semantic configuration; embedded in every report."""

    problem: str
    d: int
    T: float
    n_points: int
    m_samples: int
    steps: int
    learning_rate: float
    l: int
    m: int
    seed: int
    runs: int
    preset: str
    activation: str
    lifetime_rate: float | None
    nonfinite_policy: str
    tree_node_budget: int

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


def resolve(config: RunConfig) -> tuple[Problem, ResolvedConfig]:
    problem = get_problem(config.problem, d=config.d, T=config.T)
    base = _DESK_DEFAULTS if config.preset == "desk" else _PAPER_DEFAULTS
    default_m = problem.desk_m_samples() if config.preset == "desk" else problem.default_m_samples()
    resolved = ResolvedConfig(
        problem=problem.name,
        d=problem.d,
        T=problem.T,
        n_points=config.n_points if config.n_points is not None else base["n_points"],
        m_samples=config.m_samples if config.m_samples is not None else default_m,
        steps=config.steps if config.steps is not None else base["steps"],
        learning_rate=config.learning_rate if config.learning_rate is not None else base["learning_rate"],
        l=config.l if config.l is not None else base["l"],
        m=config.m if config.m is not None else base["m"],
        seed=config.seed,
        runs=config.runs,
        preset=config.preset,
        activation=config.activation if config.activation is not None else problem.default_activation,
        lifetime_rate=config.lifetime_rate,
        nonfinite_policy=config.nonfinite_policy,
        tree_node_budget=config.tree_node_budget,
    )
    return problem, resolved


def evaluation_grid(problem: Problem) -> np.ndarray:
    """The 101-point reporting grid: t = 0, first coordinate sweeps the
    problem interval in steps of (x_max - x_min)/100, others sit at x_mid."""
    step = (problem.x_max - problem.x_min) / (GRID_POINTS - 1)
    grid = np.full((GRID_POINTS, problem.d), problem.x_mid)
    grid[:, 0] = problem.x_min + step * np.arange(GRID_POINTS)
    return grid


def lp_error(true_values, predicted_values, p: int) -> float:
    """sum |true - predicted|^p over the grid, divided by 100 (the grid has
    101 points; the normalization is kept as published)."""
    true_values = np.asarray(true_values, dtype=float)
    predicted_values = np.asarray(predicted_values, dtype=float)
    if true_values.shape != predicted_values.shape:
        raise ValueError("value arrays must have equal length")
    if p not in (1, 2):
        raise ValueError("p must be 1 or 2")
    return float(np.sum(np.abs(true_values - predicted_values) ** p) / (GRID_POINTS - 1))


@dataclass
class RunResult:
    seed: int
    l1_error: float
    l2_error: float
    sampling_seconds: float
    training_seconds: float
    grid_x: np.ndarray
    grid_true: np.ndarray
    grid_predicted: np.ndarray
    grid_mc_mean: np.ndarray
    grid_mc_stderr: np.ndarray
    diagnostics: dict
    final_loss: float


@dataclass
class EvaluationReport:
    problem: str
    config: ResolvedConfig
    runs: list[RunResult] = field(default_factory=list)

    def aggregate(self) -> dict:
        l1 = np.array([r.l1_error for r in self.runs])
        l2 = np.array([r.l2_error for r in self.runs])

        def stats(v: np.ndarray) -> dict:
            return {
                "mean": float(v.mean()),
                "stdev": float(v.std(ddof=1)) if v.size > 1 else None,
            }

        return {"l1_error": stats(l1), "l2_error": stats(l2), "runs": len(self.runs)}


def _nearest_mc_columns(grid: np.ndarray, batch: SampleBatch):
    """For each grid point, the Monte Carlo mean and standard error of the
    sampled point nearest in the first coordinate (the consistency view)."""
    means = batch.means()
    stderrs = batch.stderrs()
    sample_x = batch.points[:, 0]
    idx = np.abs(grid[:, 0][:, None] - sample_x[None, :]).argmin(axis=1)
    return means[idx], stderrs[idx]


def _write_grid_csv(path, result: RunResult) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x_1", "true", "predicted", "mc_mean", "mc_stderr"])
        for k in range(result.grid_x.shape[0]):
            writer.writerow([repr(float(v)) for v in (
                result.grid_x[k], result.grid_true[k], result.grid_predicted[k],
                result.grid_mc_mean[k], result.grid_mc_stderr[k])])


def _run_once(problem: Problem, resolved: ResolvedConfig, run_seed: int,
              workers: int, outdir: Path | None, figures: bool,
              cached: SampleBatch | None = None) -> RunResult:
    sampler_cfg = SamplerConfig(
        seed=run_seed,
        tree_node_budget=resolved.tree_node_budget,
        nonfinite_policy=resolved.nonfinite_policy,
        workers=workers,
        lifetime_rate=resolved.lifetime_rate,
    )
    t0 = time.perf_counter()
    if cached is None:
        taus, points = sample_points(problem, resolved.n_points, points_stream(run_seed))
        batch = batch_estimate(problem, taus, points, resolved.m_samples, sampler_cfg)
    else:
        batch = cached
    sampling_seconds = time.perf_counter() - t0

    inputs = np.column_stack([batch.taus, batch.points])
    targets = batch.means()
    train_cfg = network.TrainConfig(
        steps=resolved.steps, learning_rate=resolved.learning_rate,
        l=resolved.l, m=resolved.m, activation=resolved.activation, seed=run_seed)
    t0 = time.perf_counter()
    outcome = network.train(inputs, targets, train_cfg)
    training_seconds = time.perf_counter() - t0

    grid = evaluation_grid(problem)
    grid_inputs = np.column_stack([np.zeros(grid.shape[0]), grid])
    predicted = network.forward(outcome.params, grid_inputs, "eval")
    true_values = np.array([problem.exact_solution(0.0, x) for x in grid])
    mc_mean, mc_stderr = _nearest_mc_columns(grid, batch)

    result = RunResult(
        seed=run_seed,
        l1_error=lp_error(true_values, predicted, 1),
        l2_error=lp_error(true_values, predicted, 2),
        sampling_seconds=sampling_seconds,
        training_seconds=training_seconds,
        grid_x=grid[:, 0].copy(),
        grid_true=true_values,
        grid_predicted=predicted,
        grid_mc_mean=mc_mean,
        grid_mc_stderr=mc_stderr,
        diagnostics=batch.diagnostics,
        final_loss=outcome.losses[-1] if outcome.losses else float("nan"),
    )

    if outdir is not None:
        outdir.mkdir(parents=True, exist_ok=True)
        provenance = {"config": resolved.as_dict(), "run_seed": run_seed}
        if cached is None:
            write_samples(batch, outdir / "samples.csv", outdir / "samples.json",
                          seed=run_seed, config=resolved.as_dict())
        network.save(outcome.params, outdir / "model.json", provenance=provenance)
        outcome.write_log(outdir / "training_log.csv")
        _write_grid_csv(outdir / "grid.csv", result)
        with open(outdir / "report.json", "w") as fh:
            json.dump(run_report_document(result, resolved), fh, indent=2, sort_keys=True)
            fh.write("\n")
        if figures:
            from . import figures as fig
            fig.render_grid_figure(result.grid_x, result.grid_true, result.grid_predicted,
                                   result.grid_mc_mean, result.grid_mc_stderr,
                                   problem.name, outdir / "grid.png")
            fig.render_training_figure(outcome.losses, outdir / "training.png")
    return result


def run_report_document(result: RunResult, resolved: ResolvedConfig) -> dict:
    return {
        "config": resolved.as_dict(),
        "run_seed": result.seed,
        "l1_error": result.l1_error,
        "l2_error": result.l2_error,
        "final_training_loss": result.final_loss,
        "diagnostics": result.diagnostics,
    }


def run(config: RunConfig) -> EvaluationReport:
    """Full pipeline: sample (or re-ingest), train, evaluate, persist; one
    repetition per derived seed (base seed + run index)."""
    problem, resolved = resolve(config)
    outdir = Path(config.outdir) if config.outdir else None

    cached: SampleBatch | None = None
    if config.samples_path is not None:
        if config.runs != 1:
            raise ValueError("a cached sample batch supports a single run")
        sidecar = Path(config.samples_path).with_suffix(".json")
        cached, _ = read_samples(config.samples_path, sidecar if sidecar.exists() else None)

    report = EvaluationReport(problem=problem.name, config=resolved)
    for rep in range(resolved.runs):
        run_seed = resolved.seed + rep
        run_dir = outdir / f"run_{rep:02d}" if outdir else None
        report.runs.append(_run_once(problem, resolved, run_seed,
                                     config.workers, run_dir, config.figures, cached))

    if outdir is not None:
        outdir.mkdir(parents=True, exist_ok=True)
        doc = {
            "config": resolved.as_dict(),
            "aggregate": report.aggregate(),
            "runs": [run_report_document(r, resolved) for r in report.runs],
        }
        with open(outdir / "report.json", "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
        timings = {
            "runs": [{"sampling_seconds": r.sampling_seconds,
                      "training_seconds": r.training_seconds} for r in report.runs],
            "total_seconds": sum(r.sampling_seconds + r.training_seconds for r in report.runs),
        }
        with open(outdir / "timings.json", "w") as fh:
            json.dump(timings, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return report
