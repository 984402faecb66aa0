"""Branching Monte Carlo + neural regression solver for fully nonlinear PDEs.

The solution of du/dt + (nu/2) Lap u + f(gradient terms) = 0, u(T,.) = phi,
is represented as the expectation of a functional of a random coding tree;
a feed-forward network is then fit to the Monte Carlo samples by least
squares, giving a functional estimate with a built-in consistency check
against the raw samples.
"""

from .harness import EvaluationReport, RunConfig, evaluation_grid, lp_error, run
from .multiindex import MultiIndex
from .problems import REGISTRY, Problem, get_problem
from .sampler import SampleBatch, SamplerConfig, batch_estimate, sample_points, tree_sample

__all__ = [
    "EvaluationReport",
    "MultiIndex",
    "Problem",
    "REGISTRY",
    "RunConfig",
    "SampleBatch",
    "SamplerConfig",
    "batch_estimate",
    "evaluation_grid",
    "get_problem",
    "lp_error",
    "run",
    "sample_points",
    "tree_sample",
]

__version__ = "0.1.0"
