"""Command-line interface.

Subcommands:
  solve      sample, train and evaluate a problem end to end
  sample     generate and cache a sample batch only
  eval       evaluate a saved model on the reporting grid
  mechanism  dump the branching outcomes M(c) of a code as a text table

A JSON config file may supply any `solve`/`sample` option; explicit flags
win.  The process exits nonzero whenever an invariant fails.
"""

from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import network
from .codes import FDeriv, IDENTITY, Code, f_star, format_mechanism, phi_deriv
from .harness import (
    RunConfig,
    evaluation_grid,
    lp_error,
    resolve,
    run,
)
from .multiindex import MultiIndex
from .problems import REGISTRY, get_problem
from .sampler import SamplerConfig, batch_estimate, points_stream, read_samples, sample_points, write_samples


def _add_common_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--problem", required=True, choices=sorted(REGISTRY),
                        help="benchmark problem name")
    parser.add_argument("--d", type=int, default=None, help="space dimension override")
    parser.add_argument("--T", type=float, default=None, help="time horizon override")
    parser.add_argument("--N", dest="n_points", type=int, default=None,
                        help="number of regression points")
    parser.add_argument("--M", dest="m_samples", type=int, default=None,
                        help="tree samples per point")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--preset", choices=("desk", "paper"), default="desk",
                        help="desk: minutes-scale defaults; paper: published-scale defaults")
    parser.add_argument("--lifetime-rate", type=float, default=None,
                        help="branching-time rate (default -log(0.95)/T)")
    parser.add_argument("--nonfinite-policy", choices=("propagate", "discard"),
                        default="propagate")
    parser.add_argument("--budget", dest="tree_node_budget", type=int, default=1_000_000,
                        help="node budget per tree")
    parser.add_argument("--workers", type=int, default=1,
                        help="parallel workers for sampling (results are worker-count independent)")
    parser.add_argument("--outdir", type=str, default=None)
    parser.add_argument("--config", type=str, default=None,
                        help="JSON file supplying any of the above options; flags win")


def _add_train_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--P", dest="steps", type=int, default=None, help="training steps")
    parser.add_argument("--eta", dest="learning_rate", type=float, default=None)
    parser.add_argument("--l", type=int, default=None, help="hidden layer count")
    parser.add_argument("--m", type=int, default=None, help="hidden layer width")
    parser.add_argument("--runs", type=int, default=1, help="independent repetitions")
    parser.add_argument("--activation", choices=("tanh", "relu", "identity"), default=None)
    parser.add_argument("--no-figures", dest="figures", action="store_false",
                        help="skip figure rendering")
    parser.add_argument("--samples", dest="samples_path", type=str, default=None,
                        help="train from a cached samples.csv instead of re-simulating")


def _apply_config_file(args: argparse.Namespace, parser: argparse.ArgumentParser,
                       subparser: argparse.ArgumentParser, argv: list[str]) -> None:
    if not getattr(args, "config", None):
        return
    with open(args.config) as fh:
        overrides = json.load(fh)
    if not isinstance(overrides, dict):
        parser.error("config file must contain a JSON object")
    explicit = set()
    for action in subparser._actions:
        for option in action.option_strings:
            if any(arg == option or arg.startswith(option + "=") for arg in argv):
                explicit.add(action.dest)
    for key, value in overrides.items():
        if not hasattr(args, key):
            parser.error(f"unknown config key {key!r}")
        if key in explicit:
            continue  # a flag given on the command line wins over the file
        setattr(args, key, value)


def _run_config_from_args(args: argparse.Namespace) -> RunConfig:
    return RunConfig(
        problem=args.problem,
        d=args.d,
        T=args.T,
        n_points=args.n_points,
        m_samples=args.m_samples,
        steps=getattr(args, "steps", None),
        learning_rate=getattr(args, "learning_rate", None),
        l=getattr(args, "l", None),
        m=getattr(args, "m", None),
        seed=args.seed,
        runs=getattr(args, "runs", 1),
        preset=args.preset,
        activation=getattr(args, "activation", None),
        lifetime_rate=args.lifetime_rate,
        nonfinite_policy=args.nonfinite_policy,
        tree_node_budget=args.tree_node_budget,
        outdir=args.outdir,
        workers=args.workers,
        figures=getattr(args, "figures", True),
        samples_path=getattr(args, "samples_path", None),
    )


def _cmd_solve(args: argparse.Namespace) -> int:
    report = run(_run_config_from_args(args))
    agg = report.aggregate()
    print(f"problem: {report.problem}")
    for r in report.runs:
        print(f"  run seed={r.seed}: L1={r.l1_error:.6g}  L2={r.l2_error:.6g}  "
              f"(sampling {r.sampling_seconds:.1f}s, training {r.training_seconds:.1f}s)")
    mean = agg["l1_error"]["mean"]
    stdev = agg["l1_error"]["stdev"]
    line = f"mean L1 error: {mean:.6g}"
    if stdev is not None:
        line += f" (stdev {stdev:.3g})"
    print(line)
    if args.outdir:
        print(f"artifacts written to {args.outdir}")
    return 0


def _cmd_sample(args: argparse.Namespace) -> int:
    config = _run_config_from_args(args)
    problem, resolved = resolve(config)
    if not args.outdir:
        raise SystemExit("sample requires --outdir")
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    sampler_cfg = SamplerConfig(seed=resolved.seed, tree_node_budget=resolved.tree_node_budget,
                                nonfinite_policy=resolved.nonfinite_policy, workers=args.workers,
                                lifetime_rate=resolved.lifetime_rate)
    taus, points = sample_points(problem, resolved.n_points, points_stream(resolved.seed))
    batch = batch_estimate(problem, taus, points, resolved.m_samples, sampler_cfg)
    write_samples(batch, outdir / "samples.csv", outdir / "samples.json",
                  seed=resolved.seed, config=resolved.as_dict())
    print(f"wrote {batch.n_points} x {batch.m_samples} samples to {outdir/'samples.csv'}")
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    params = network.load(args.model)
    problem = get_problem(args.problem, d=args.d, T=args.T)
    if params.input_dim != problem.d + 1:
        raise SystemExit(f"model expects input dimension {params.input_dim}, "
                         f"problem needs {problem.d + 1}")
    grid = evaluation_grid(problem)
    inputs = np.column_stack([np.zeros(grid.shape[0]), grid])
    predicted = network.forward(params, inputs, "eval")
    true_values = np.array([problem.exact_solution(0.0, x) for x in grid])
    if args.samples:
        from .harness import _nearest_mc_columns
        batch, _ = read_samples(args.samples)
        mc_mean, mc_stderr = _nearest_mc_columns(grid, batch)
    else:
        mc_mean = np.full(grid.shape[0], np.nan)
        mc_stderr = np.full(grid.shape[0], np.nan)
    l1 = lp_error(true_values, predicted, 1)
    l2 = lp_error(true_values, predicted, 2)
    print(f"L1 error: {l1:.6g}")
    print(f"L2 error: {l2:.6g}")
    if args.outdir:
        outdir = Path(args.outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        import csv as _csv
        with open(outdir / "grid.csv", "w", newline="") as fh:
            writer = _csv.writer(fh)
            writer.writerow(["x_1", "true", "predicted", "mc_mean", "mc_stderr"])
            for k in range(grid.shape[0]):
                writer.writerow([repr(float(v)) for v in (
                    grid[k, 0], true_values[k], predicted[k], mc_mean[k], mc_stderr[k])])
        if args.figures:
            from . import figures as fig
            fig.render_grid_figure(grid[:, 0], true_values, predicted, mc_mean, mc_stderr,
                                   problem.name, outdir / "grid.png")
        print(f"grid written to {outdir/'grid.csv'}")
    return 0


def parse_code(text: str, n: int, d: int) -> Code:
    """Parse a code spec: 'Id', 'f*', 'f:NU[:COEFF]' or 'phi:MU', where NU/MU
    are comma-separated naturals and COEFF is a rational like -1/2."""
    text = text.strip()
    if text == "Id":
        return IDENTITY
    if text == "f*":
        return f_star(n)
    kind, _, rest = text.partition(":")
    if not rest:
        raise ValueError(f"cannot parse code spec {text!r}")
    if kind == "f":
        idx_text, _, coeff_text = rest.partition(":")
        nu = MultiIndex(tuple(int(v) for v in idx_text.split(",")))
        if len(nu) != n:
            raise ValueError(f"f-code index must have length n={n}")
        coeff = Fraction(coeff_text) if coeff_text else Fraction(1)
        return FDeriv(coeff, nu)
    if kind == "phi":
        mu = MultiIndex(tuple(int(v) for v in rest.split(",")))
        if len(mu) != d:
            raise ValueError(f"phi-code index must have length d={d}")
        return phi_deriv(mu)
    raise ValueError(f"cannot parse code spec {text!r}")


def _cmd_mechanism(args: argparse.Namespace) -> int:
    problem = get_problem(args.problem, d=args.d, T=args.T)
    code = parse_code(args.code, problem.n, problem.d)
    table = problem.mechanism_table()
    text = format_mechanism(code, table.mechanism(code))
    header = (f"problem: {problem.name} (d={problem.d}, n={problem.n}, "
              f"diffusivity={problem.nu_diff:g})\n"
              f"signature: {', '.join(str(lam) for lam in problem.lambdas)}")
    output = header + "\n" + text
    print(output)
    if args.outfile:
        Path(args.outfile).write_text(output + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="branchpde",
                                     description="Branching Monte Carlo + neural "
                                                 "regression solver for fully nonlinear PDEs")
    sub = parser.add_subparsers(dest="command", required=True)
    parser.subcommands = {}

    p_solve = sub.add_parser("solve", help="sample, train and evaluate end to end")
    _add_common_options(p_solve)
    _add_train_options(p_solve)
    p_solve.set_defaults(func=_cmd_solve)
    parser.subcommands["solve"] = p_solve

    p_sample = sub.add_parser("sample", help="generate and cache a sample batch")
    _add_common_options(p_sample)
    p_sample.set_defaults(func=_cmd_sample)
    parser.subcommands["sample"] = p_sample

    p_eval = sub.add_parser("eval", help="evaluate a saved model on the grid")
    p_eval.add_argument("--model", required=True)
    p_eval.add_argument("--problem", required=True, choices=sorted(REGISTRY))
    p_eval.add_argument("--d", type=int, default=None)
    p_eval.add_argument("--T", type=float, default=None)
    p_eval.add_argument("--samples", type=str, default=None,
                        help="optional samples.csv for the consistency columns")
    p_eval.add_argument("--outdir", type=str, default=None)
    p_eval.add_argument("--no-figures", dest="figures", action="store_false")
    p_eval.set_defaults(func=_cmd_eval)

    p_mech = sub.add_parser("mechanism", help="dump the branching outcomes of a code")
    p_mech.add_argument("--problem", required=True, choices=sorted(REGISTRY))
    p_mech.add_argument("--d", type=int, default=None)
    p_mech.add_argument("--T", type=float, default=None)
    p_mech.add_argument("--code", required=True,
                        help="'Id', 'f*', 'f:NU[:COEFF]' or 'phi:MU' (e.g. phi:2 or f:0,1)")
    p_mech.add_argument("--outfile", type=str, default=None)
    p_mech.set_defaults(func=_cmd_mechanism)
    return parser


def main(argv: list[str] | None = None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    parser = build_parser()
    args = parser.parse_args(argv)
    if hasattr(args, "config") and args.command in parser.subcommands:
        _apply_config_file(args, parser, parser.subcommands[args.command], argv)
    try:
        return args.func(args)
    except (ValueError, KeyError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
