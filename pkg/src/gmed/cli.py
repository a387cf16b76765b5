"""Command-line front-end: ``gmed estimate``, ``gmed test``, ``gmed simulate``.

Exit codes: 0 success, 2 usage/input error, 3 numerical non-convergence.
Results are JSON (schema "gmed/1", floats at 17 significant digits) on
stdout or ``--out``; errors are machine-readable JSON on stderr.
"""

from __future__ import annotations

import argparse
import sys
from typing import Optional

from .data import ColumnMap, Dataset, ModelConfig, load_csv
from .estimation import bootstrap_variance, g_estimate
from .exceptions import GmedError, NonConvergence, SeparationDetected, SingularJacobian
from .inference import (
    HypothesisSpec,
    ols_sobel_lr,
    robust_sobel,
    robust_wald_direct,
    score_test_cue,
    score_test_two_step,
)
from .moments import TargetParams
from .serialize import dumps
from .simulation import DgpSpec, emit_table, run_experiment

SCHEMA = "gmed/1"

_FAMILY = {"gaussian": "gaussian-identity", "binomial": "bernoulli-logit"}
_NUISANCE = {"ml": "maximum-likelihood", "bias-reduced": "bias-reduced"}


def _error_json(kind: str, message: str) -> str:
    return dumps({"schema": SCHEMA, "error": {"kind": kind, "message": message}})


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text if text.endswith("\n") else text + "\n")
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _add_data_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--data", required=True, help="CSV file with a header row")
    sub.add_argument("--outcome", required=True)
    sub.add_argument("--mediator", required=True)
    sub.add_argument("--exposure", required=True)
    sub.add_argument("--confounders", default="", help="comma-separated column names")
    sub.add_argument("--weights", default=None, help="observation-weight column")
    sub.add_argument("--missing", choices=("error", "drop-rows"), default="error")
    sub.add_argument("--exposure-family", choices=tuple(_FAMILY), default="gaussian")
    sub.add_argument("--nuisance", choices=tuple(_NUISANCE), default="bias-reduced")
    sub.add_argument("--interaction", action="store_true")
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--out", default=None, help="write output to this path")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gmed",
        description="G-estimation of natural direct and indirect mediation effects",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    est = commands.add_parser("estimate", help="fit mediated effects from a CSV file")
    _add_data_flags(est)
    est.add_argument("--boot", type=int, default=0, help="bootstrap replicates (0 = skip)")

    tst = commands.add_parser("test", help="run a hypothesis test")
    _add_data_flags(tst)
    tst.add_argument(
        "--hypothesis",
        default="no-mediation",
        help="no-mediation | no-direct | alpha=<value in [0,1]>",
    )
    tst.add_argument(
        "--method",
        required=True,
        choices=(
            "sobel-ols", "lr-ols", "robust-sobel", "robust-wald-direct",
            "score-two-step", "score-cue",
        ),
    )

    sim = commands.add_parser("simulate", help="run a Monte Carlo experiment")
    sim.add_argument("--dgp", choices=("A", "B", "C"), required=True)
    sim.add_argument("--beta", required=True, help="b1,b2,b3 or b1,b2,b3,theta")
    sim.add_argument("--n", type=int, required=True)
    sim.add_argument("--reps", type=int, required=True)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--misspec", default="0,0,0", help="s_x,s_m,s_y in {0,1}")
    sim.add_argument("--estimators", default="g", help="comma list from {g, ols}")
    sim.add_argument("--tests", default="", help="comma list, e.g. score-cue,lr-ols")
    sim.add_argument("--level", type=float, default=0.05)
    sim.add_argument("--boot", type=int, default=0, help="bootstrap replicates per dataset")
    sim.add_argument("--nuisance", choices=tuple(_NUISANCE), default="bias-reduced")
    sim.add_argument("--format", choices=("csv", "json", "markdown"), default="json")
    sim.add_argument("--out", default=None)
    return parser


def _load_dataset(args) -> tuple[Dataset, ModelConfig]:
    confounders = [c for c in args.confounders.split(",") if c]
    cmap = ColumnMap(
        outcome=args.outcome,
        mediator=args.mediator,
        exposure=args.exposure,
        confounders=confounders,
        weight=args.weights,
    )
    dataset = load_csv(args.data, cmap, missing_policy=args.missing)
    config = ModelConfig(
        exposure_family=_FAMILY[args.exposure_family],
        interaction_enabled=args.interaction,
        nuisance_strategy=_NUISANCE[args.nuisance],
    )
    return dataset, config


def _effect_entry(value: float, se: float) -> dict:
    return {
        "estimate": value,
        "se": se,
        "ci": [value - 1.96 * se, value + 1.96 * se],
    }


def cmd_estimate(args) -> int:
    dataset, config = _load_dataset(args)
    try:
        est = g_estimate(dataset, config)
    except NonConvergence as exc:
        payload = {
            "schema": SCHEMA,
            "command": "estimate",
            "n": dataset.n,
            "converged": False,
            "diagnostics": {"final_residual_norm": exc.residual_norm},
        }
        _emit(dumps(payload), args.out)
        return 3

    ses = est.beta_se
    estimates = {
        "nide": _effect_entry(est.nide, est.nide_se),
        "nde": _effect_entry(est.nde, est.nde_se),
        "beta1": _effect_entry(est.beta_hat.beta1, float(ses[0])),
        "beta2": _effect_entry(est.beta_hat.beta2, float(ses[1])),
        "beta3": _effect_entry(est.beta_hat.beta3, float(ses[2])),
    }
    if est.beta_hat.theta is not None:
        estimates["theta"] = _effect_entry(est.beta_hat.theta, float(ses[3]))
    diagnostics = {
        "iterations": est.solver_report.iterations,
        "final_residual_norm": est.solver_report.final_residual_norm,
        "near_singular_nide": est.near_singular_nide,
        "nuisance_strategy": config.nuisance_strategy,
        "exposure_family": config.exposure_family,
        "bootstrap": None,
    }
    if args.boot:
        boot = bootstrap_variance(dataset, config, args.boot, args.seed)
        diagnostics["bootstrap"] = {
            "replicates": boot.replicates,
            "failures": boot.failures,
            "nide_se": boot.nide_se_boot,
            "nde_se": boot.nde_se_boot,
        }
    payload = {
        "schema": SCHEMA,
        "command": "estimate",
        "n": dataset.n,
        "converged": True,
        "estimates": estimates,
        "diagnostics": diagnostics,
    }
    _emit(dumps(payload), args.out)
    return 0


def _parse_hypothesis(text: str) -> HypothesisSpec:
    if text == "no-mediation":
        return HypothesisSpec(0.0)
    if text in ("no-direct", "no-direct-effect"):
        return HypothesisSpec(1.0)
    if text.startswith("alpha="):
        return HypothesisSpec(float(text[len("alpha="):]))
    raise ValueError(f"unknown hypothesis {text!r}")


def cmd_test(args) -> int:
    dataset, config = _load_dataset(args)
    hyp = _parse_hypothesis(args.hypothesis)
    method = args.method
    if method in ("sobel-ols", "lr-ols", "robust-sobel") and hyp.alpha != 0.0:
        raise ValueError(f"{method} tests the no-mediation hypothesis only")
    if method == "robust-wald-direct" and hyp.alpha != 1.0:
        raise ValueError("robust-wald-direct tests the no-direct-effect hypothesis only")
    if method == "sobel-ols":
        outcome = ols_sobel_lr(dataset)[0]
    elif method == "lr-ols":
        outcome = ols_sobel_lr(dataset)[1]
    elif method == "robust-sobel":
        outcome = robust_sobel(g_estimate(dataset, config))
    elif method == "robust-wald-direct":
        outcome = robust_wald_direct(g_estimate(dataset, config))
    elif method == "score-two-step":
        outcome = score_test_two_step(dataset, config, hyp)
    else:
        outcome = score_test_cue(dataset, config, hyp)
    payload = {
        "schema": SCHEMA,
        "command": "test",
        "method": outcome.method,
        "alpha": hyp.alpha,
        "statistic": outcome.statistic,
        "df": outcome.df,
        "p_value": outcome.p_value,
        "branch": outcome.branch,
        "constrained_beta": (
            list(outcome.constrained_beta.as_vector())
            if outcome.constrained_beta is not None
            else None
        ),
    }
    _emit(dumps(payload), args.out)
    return 0


def cmd_simulate(args) -> int:
    beta_parts = [float(v) for v in args.beta.split(",")]
    if len(beta_parts) not in (3, 4):
        raise ValueError("--beta needs 3 or 4 comma-separated values")
    beta = TargetParams(*beta_parts)
    flags = [int(v) for v in args.misspec.split(",")]
    if len(flags) != 3:
        raise ValueError("--misspec needs s_x,s_m,s_y")
    spec = DgpSpec(
        process=args.dgp,
        beta_true=beta,
        n=args.n,
        s_x=flags[0],
        s_m=flags[1],
        s_y=flags[2],
        seed=args.seed,
    )
    config = ModelConfig(
        "bernoulli-logit", beta.theta is not None, _NUISANCE[args.nuisance]
    )
    result = run_experiment(
        spec,
        args.reps,
        estimators=[e for e in args.estimators.split(",") if e],
        tests=[t for t in args.tests.split(",") if t],
        level=args.level,
        config=config,
        bootstrap_replicates=args.boot,
    )
    _emit(emit_table(result, args.format), args.out)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "estimate":
            return cmd_estimate(args)
        if args.command == "test":
            return cmd_test(args)
        return cmd_simulate(args)
    except (NonConvergence, SeparationDetected, SingularJacobian) as exc:
        # numerical failures: exit 3, input/usage problems: exit 2
        sys.stderr.write(_error_json(type(exc).__name__, str(exc)) + "\n")
        return 3
    except GmedError as exc:
        sys.stderr.write(_error_json(type(exc).__name__, str(exc)) + "\n")
        return 2
    except (ValueError, OSError) as exc:
        sys.stderr.write(_error_json(type(exc).__name__, str(exc)) + "\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
