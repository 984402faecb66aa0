"""Coding-tree Monte Carlo sampling.

One tree realization starts from a code at (t, x), draws an exponential
lifetime, and either evaluates the code's terminal value at a Gaussian
endpoint (weighted by the survival probability) or branches into the child
codes of a uniformly drawn mechanism element (weighted by q over the
lifetime density), multiplying the recursive values of all children.

Batches are embarrassingly parallel over the (point, sample) grid; each
(i, j) cell owns a counter-derived Philox stream, so results are
bit-identical for a fixed seed regardless of the worker count.
"""

from __future__ import annotations

import csv
import json
import math
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .codes import IDENTITY, Code, FDeriv, Identity, MechanismTable, PhiDeriv
from .jets import DomainError, JetOrderError
from .multiindex import zero
from .problems import Problem

DEFAULT_TREE_NODE_BUDGET = 1_000_000


class BudgetExceededError(RuntimeError):
    """A single tree grew past the configured node budget."""


class SamplingError(RuntimeError):
    """A batch contained failed or non-finite samples under the propagate policy."""

    def __init__(self, message: str, failures: list[tuple[int, int, str]]):
        super().__init__(message)
        self.failures = failures


def default_lifetime_rate(T: float) -> float:
    return -math.log(0.95) / T


@dataclass(frozen=True)
class LifetimeDistribution:
    """Exponential branching-time law; density rate*exp(-rate*s), tail exp(-rate*s)."""

    rate: float

    def __post_init__(self) -> None:
        if not self.rate > 0:
            raise ValueError("lifetime rate must be positive")

    def density(self, s: float) -> float:
        return self.rate * math.exp(-self.rate * s)

    def tail(self, s: float) -> float:
        return math.exp(-self.rate * s)

    @classmethod
    def for_horizon(cls, T: float) -> "LifetimeDistribution":
        return cls(default_lifetime_rate(T))


@dataclass(frozen=True)
class SamplerConfig:
    seed: int = 0
    tree_node_budget: int = DEFAULT_TREE_NODE_BUDGET
    nonfinite_policy: str = "propagate"  # or "discard"
    workers: int = 1
    lifetime_rate: float | None = None

    def __post_init__(self) -> None:
        if self.tree_node_budget < 1:
            raise ValueError("tree node budget must be >= 1")
        if self.nonfinite_policy not in ("propagate", "discard"):
            raise ValueError("nonfinite_policy must be 'propagate' or 'discard'")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass
class TreeTrace:
    """Instrumentation record of one tree realization."""

    branch_weights: list[float] = field(default_factory=list)
    branch_qs: list[tuple[Code, int]] = field(default_factory=list)
    leaf_values: list[float] = field(default_factory=list)
    node_count: int = 0


_KEY_MASK = (1 << 64) - 1
_CELL_BIT = 1 << 62


def stream(seed: int, i: int, j: int) -> np.random.Generator:
    """The dedicated random stream of cell (i, j): a Philox generator whose
    128-bit key encodes (seed, i, j) directly.  Distinct keys give
    statistically independent streams, so the layout of work over threads or
    processes cannot change any draw."""
    if not (0 <= i < (1 << 31) and 0 <= j < (1 << 31)):
        raise ValueError("cell indices must fit in 31 bits")
    key = np.empty(2, dtype=np.uint64)
    key[0] = seed & _KEY_MASK
    key[1] = _CELL_BIT | (i << 31) | j
    return np.random.Generator(np.random.Philox(key=key))


def points_stream(seed: int) -> np.random.Generator:
    """Stream used to draw the regression points, disjoint from all cell streams."""
    key = np.empty(2, dtype=np.uint64)
    key[0] = seed & _KEY_MASK
    key[1] = 0
    return np.random.Generator(np.random.Philox(key=key))


def terminal_value(problem: Problem, code: Code, x) -> float:
    """c(u)(T, x): phi for the identity, a * d^nu f of the terminal gradient
    arguments for f-derivative codes, d^mu phi for derivative codes."""
    if isinstance(code, Identity):
        return problem.phi_value(x)
    if isinstance(code, FDeriv):
        return float(code.coeff) * problem.f_partial(code.nu, problem.phi_lambda_args(x))
    if isinstance(code, PhiDeriv):
        return problem.phi_partial(code.mu, x)
    raise TypeError(f"not a code: {code!r}")


def tree_sample(problem: Problem, t: float, x, code: Code,
                rng: np.random.Generator, lifetime: LifetimeDistribution,
                node_budget: int = DEFAULT_TREE_NODE_BUDGET,
                table: MechanismTable | None = None,
                trace: TreeTrace | None = None) -> float:
    """One draw of the tree functional started at (t, x, code).

    Iterative with an explicit work stack: tree depth is unbounded with
    positive probability.
    """
    if table is None:
        table = problem.mechanism_table()
    T = problem.T
    nu = problem.nu_diff
    d = problem.d
    x0 = np.asarray(x, dtype=float)
    if x0.shape != (d,):
        raise ValueError(f"point must have shape ({d},), got {x0.shape}")

    product = 1.0
    nodes = 0
    stack: list[tuple[float, np.ndarray, Code]] = [(float(t), x0, code)]
    while stack:
        t_node, x_node, c = stack.pop()
        nodes += 1
        if nodes > node_budget:
            raise BudgetExceededError(f"tree exceeded the node budget of {node_budget}")
        tau = rng.exponential(1.0 / lifetime.rate)
        if t_node + tau > T:
            dt = T - t_node
            x_leaf = x_node + rng.standard_normal(d) * math.sqrt(nu * dt) if dt > 0 else x_node
            value = terminal_value(problem, c, x_leaf) / lifetime.tail(dt)
            product *= value
            if trace is not None:
                trace.leaf_values.append(value)
        else:
            mech = table.mechanism(c)
            q = mech.size
            element = mech.elements[int(rng.integers(q))]
            weight = q / lifetime.density(tau)
            product *= weight
            if trace is not None:
                trace.branch_weights.append(weight)
                trace.branch_qs.append((c, q))
            t_child = t_node + tau
            scale = math.sqrt(nu * tau)
            for cc in element.codes:
                stack.append((t_child, x_node + rng.standard_normal(d) * scale, cc))
    if trace is not None:
        trace.node_count = nodes
    return product


@dataclass
class SampleBatch:
    """The regression dataset of one experiment: points (tau_i, X_i) and the
    matrix of tree draws H[i, j]."""

    taus: np.ndarray          # (N,)
    points: np.ndarray        # (N, d)
    values: np.ndarray        # (N, M)
    diagnostics: dict

    @property
    def n_points(self) -> int:
        return self.values.shape[0]

    @property
    def m_samples(self) -> int:
        return self.values.shape[1]

    def means(self) -> np.ndarray:
        if self.diagnostics.get("discarded_count", 0) > 0:
            return np.nanmean(self.values, axis=1)
        return self.values.mean(axis=1)

    def stderrs(self) -> np.ndarray:
        if self.m_samples < 2:
            return np.zeros(self.n_points)
        if self.diagnostics.get("discarded_count", 0) > 0:
            counts = np.sum(np.isfinite(self.values), axis=1)
            std = np.nanstd(self.values, axis=1, ddof=1)
            return std / np.sqrt(np.maximum(counts, 1))
        return self.values.std(axis=1, ddof=1) / math.sqrt(self.m_samples)


def sample_points(problem: Problem, n_points: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Regression points: tau = 0, first coordinate uniform on the problem
    interval, remaining coordinates pinned at the midpoint."""
    if n_points < 1:
        raise ValueError("need at least one point")
    taus = np.zeros(n_points)
    points = np.full((n_points, problem.d), problem.x_mid)
    points[:, 0] = rng.uniform(problem.x_min, problem.x_max, n_points)
    return taus, points


def _sample_row(problem: Problem, table: MechanismTable, lifetime: LifetimeDistribution,
                cfg: SamplerConfig, i: int, t: float, x: np.ndarray, m_samples: int):
    values = np.empty(m_samples)
    sizes: Counter = Counter()
    failures: list[tuple[int, int, str]] = []
    for j in range(m_samples):
        rng = stream(cfg.seed, i, j)
        trace = TreeTrace()
        try:
            values[j] = tree_sample(problem, t, x, IDENTITY, rng, lifetime,
                                    node_budget=cfg.tree_node_budget, table=table,
                                    trace=trace)
        except (DomainError, JetOrderError) as exc:
            values[j] = np.nan
            failures.append((i, j, f"{type(exc).__name__}: {exc}"))
        sizes[trace.node_count] += 1
    return values, sizes, failures


def batch_estimate(problem: Problem, taus: np.ndarray, points: np.ndarray,
                   m_samples: int, cfg: SamplerConfig) -> SampleBatch:
    """Monte Carlo estimation at every point: values[i, j] are independent
    tree draws; identical results for a fixed seed at any worker count."""
    if m_samples < 1:
        raise ValueError("need at least one sample per point")
    taus = np.asarray(taus, dtype=float)
    points = np.asarray(points, dtype=float)
    n_points = points.shape[0]
    lifetime = LifetimeDistribution(cfg.lifetime_rate if cfg.lifetime_rate is not None
                                    else default_lifetime_rate(problem.T))
    table = problem.mechanism_table()

    rows: list = [None] * n_points
    if cfg.workers == 1 or n_points == 1:
        for i in range(n_points):
            rows[i] = _sample_row(problem, table, lifetime, cfg, i, taus[i], points[i], m_samples)
    else:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            futures = [pool.submit(_sample_row, problem, table, lifetime, cfg,
                                   i, taus[i], points[i], m_samples)
                       for i in range(n_points)]
            for i, fut in enumerate(futures):
                rows[i] = fut.result()

    values = np.empty((n_points, m_samples))
    sizes: Counter = Counter()
    failures: list[tuple[int, int, str]] = []
    for i, (row_values, row_sizes, row_failures) in enumerate(rows):
        values[i] = row_values
        sizes.update(row_sizes)
        failures.extend(row_failures)

    nonfinite = int(np.sum(~np.isfinite(values)))
    diagnostics = {
        "tree_size_histogram": {str(k): sizes[k] for k in sorted(sizes)},
        "max_tree_nodes": max(sizes) if sizes else 0,
        "nonfinite_count": nonfinite,
        "failure_count": len(failures),
        "discarded_count": 0,
    }
    if nonfinite or failures:
        if cfg.nonfinite_policy == "propagate":
            detail = "; ".join(msg for _, _, msg in failures[:5])
            raise SamplingError(
                f"{nonfinite} non-finite samples ({len(failures)} oracle failures) "
                f"under the propagate policy{': ' + detail if detail else ''}",
                failures)
        diagnostics["discarded_count"] = nonfinite
        diagnostics["discarded_fraction"] = nonfinite / values.size
        values[~np.isfinite(values)] = np.nan
    return SampleBatch(taus=taus, points=points, values=values, diagnostics=diagnostics)


# -- persistence ----------------------------------------------------------------


def write_samples(batch: SampleBatch, csv_path, sidecar_path, seed: int,
                  config: dict | None = None) -> None:
    """Columnar text dump (one row per tree draw) plus a JSON sidecar holding
    seed, configuration and diagnostics."""
    d = batch.points.shape[1]
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["i", "j", "tau"] + [f"x_{k + 1}" for k in range(d)] + ["H"])
        for i in range(batch.n_points):
            tau = repr(float(batch.taus[i]))
            coords = [repr(float(c)) for c in batch.points[i]]
            for j in range(batch.m_samples):
                writer.writerow([i, j, tau] + coords + [repr(float(batch.values[i, j]))])
    sidecar = {
        "seed": seed,
        "n_points": batch.n_points,
        "m_samples": batch.m_samples,
        "config": config or {},
        "diagnostics": batch.diagnostics,
    }
    with open(sidecar_path, "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_samples(csv_path, sidecar_path=None) -> tuple[SampleBatch, dict]:
    """Re-ingest a persisted batch; exact float round trip."""
    with open(csv_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        d = len(header) - 4
        cells: dict[tuple[int, int], float] = {}
        point_rows: dict[int, tuple[float, tuple[float, ...]]] = {}
        for row in reader:
            i, j = int(row[0]), int(row[1])
            point_rows[i] = (float(row[2]), tuple(float(c) for c in row[3:3 + d]))
            cells[(i, j)] = float(row[-1])
    n = max(i for i, _ in cells) + 1
    m = max(j for _, j in cells) + 1
    taus = np.empty(n)
    points = np.empty((n, d))
    values = np.full((n, m), np.nan)
    for i in range(n):
        taus[i], coords = point_rows[i]
        points[i] = coords
    for (i, j), v in cells.items():
        values[i, j] = v
    meta: dict = {}
    if sidecar_path is not None:
        with open(sidecar_path) as fh:
            meta = json.load(fh)
    diagnostics = meta.get("diagnostics", {"discarded_count": 0})
    return SampleBatch(taus=taus, points=points, values=values, diagnostics=diagnostics), meta
