"""Hierarchical data-generating processes and the Monte Carlo experiment
runner.

Process A draws a standard-normal confounder, a logistic exposure, and
Gaussian mediator/outcome; process B gives the mediator Student-t(5) noise;
process C makes the mediator Bernoulli. Misspecification indicators
(s_x, s_m, s_y) add a Z^2 term to the corresponding generating model while
the analysis design stays linear in Z, so a nonzero indicator means the
fitted working model is wrong.

Random number streams are keyed by (seed, replicate, variable), so results
are independent of execution order and parallelism degree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, Optional, Tuple

import numpy as np

from .data import Dataset, ModelConfig
from .estimation import bootstrap_variance, g_estimate
from .exceptions import GmedError
from .inference import (
    HypothesisSpec,
    ols_product_fit,
    ols_sobel_lr,
    robust_sobel,
    robust_wald_direct,
    score_test_cue,
    score_test_two_step,
)
from .linalg import expit
from .moments import TargetParams
from .serialize import dumps

_STREAM = {"z": 0, "x": 1, "m": 2, "y": 3}

TEST_METHODS = (
    "sobel-ols",
    "lr-ols",
    "robust-sobel",
    "robust-wald-direct",
    "score-two-step",
    "score-cue",
)


@dataclass(frozen=True)
class DgpSpec:
    """Configuration of one simulated scenario."""

    process: str
    beta_true: TargetParams
    n: int
    s_x: int = 0
    s_m: int = 0
    s_y: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.process not in ("A", "B", "C"):
            raise ValueError(f"unknown process {self.process!r}")
        if self.n < 20:
            raise ValueError("need n >= 20")
        for name in ("s_x", "s_m", "s_y"):
            if getattr(self, name) not in (0, 1):
                raise ValueError(f"{name} must be 0 or 1")

    @property
    def mediator_model_structurally_misspecified(self) -> bool:
        """Process C satisfies the partially linear mediator model only at
        beta1 = 0, regardless of the misspecification flags."""
        return self.process == "C" and self.beta_true.beta1 != 0.0

    @property
    def nide_true(self) -> float:
        """True natural indirect effect of the generating process.

        For the linear-mediator processes this is beta1*beta2. The Bernoulli
        mediator of process C puts beta1 on the logit scale, so the true
        NIDE is beta2 * E_Z[expit(b1 + Z + s_m Z^2) - expit(Z + s_m Z^2)],
        evaluated by Gauss-Hermite quadrature.
        """
        b = self.beta_true
        if self.process != "C":
            return b.beta1 * b.beta2
        nodes, weights = np.polynomial.hermite.hermgauss(201)
        z = nodes * math.sqrt(2.0)
        wgt = weights / math.sqrt(math.pi)
        curve = z + self.s_m * z * z
        return float(b.beta2 * np.sum(wgt * (expit(b.beta1 + curve) - expit(curve))))

    @property
    def nde_true(self) -> float:
        # the outcome model stays linear in X, so the NDE is beta3 under
        # every process and flag combination
        return self.beta_true.beta3


def _rng(spec: DgpSpec, replicate: int, var: str) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence(entropy=spec.seed, spawn_key=(replicate, _STREAM[var]))
    )


def generate(spec: DgpSpec, replicate: int = 0) -> Dataset:
    """Draw one dataset from the configured process."""
    b = spec.beta_true
    n = spec.n
    z = _rng(spec, replicate, "z").normal(size=n)
    zsq = z * z
    x = _rng(spec, replicate, "x").binomial(
        1, expit(z + spec.s_x * zsq)
    ).astype(float)
    m_lin = b.beta1 * x + z + spec.s_m * zsq
    rng_m = _rng(spec, replicate, "m")
    if spec.process == "A":
        m = m_lin + rng_m.normal(size=n)
    elif spec.process == "B":
        m = m_lin + rng_m.standard_t(df=5, size=n)
    else:
        m = rng_m.binomial(1, expit(m_lin)).astype(float)
    y_lin = b.beta2 * m + b.beta3 * x + z + spec.s_y * zsq
    if b.theta is not None:
        y_lin = y_lin + b.theta * x * m
    y = y_lin + _rng(spec, replicate, "y").normal(size=n)
    return Dataset.build(y, m, x, z)


def parse_test_label(label: str) -> Tuple[str, HypothesisSpec]:
    """Parse "method" or "method@hypothesis" where hypothesis is
    no-mediation, no-direct, or alpha=<value>."""
    method, _, hyp = label.partition("@")
    if method not in TEST_METHODS:
        raise ValueError(f"unknown test method {method!r}")
    if not hyp:
        hyp = "no-direct" if method == "robust-wald-direct" else "no-mediation"
    if hyp == "no-mediation":
        spec = HypothesisSpec(0.0)
    elif hyp == "no-direct":
        spec = HypothesisSpec(1.0)
    elif hyp.startswith("alpha="):
        spec = HypothesisSpec(float(hyp[len("alpha="):]))
    else:
        raise ValueError(f"unknown hypothesis {hyp!r}")
    if method in ("sobel-ols", "lr-ols", "robust-sobel") and spec.alpha != 0.0:
        raise ValueError(f"{method} tests the no-mediation hypothesis only")
    if method == "robust-wald-direct" and spec.alpha != 1.0:
        raise ValueError("robust-wald-direct tests the no-direct-effect hypothesis only")
    return method, spec


@dataclass(frozen=True)
class EffectCells:
    """Aggregated Monte Carlo summaries for one estimator and effect; all
    variances are scaled by the sample size n."""

    bias: float
    bias_se: float
    emp_var: float
    emp_var_se: float
    theory_var: Optional[float] = None
    theory_var_se: Optional[float] = None
    boot_var: Optional[float] = None
    boot_var_se: Optional[float] = None


@dataclass(frozen=True)
class RateCell:
    rate: float
    se: float


@dataclass(frozen=True)
class ExperimentResult:
    spec: DgpSpec
    replicates: int
    used_replicates: int
    failures: int
    level: float
    effects: Dict[str, EffectCells] = field(default_factory=dict)
    rejection_rates: Dict[str, RateCell] = field(default_factory=dict)


def _effect_cells(draws, theory_vars, boot_vars, truth, n) -> EffectCells:
    draws = np.asarray(draws)
    reps = draws.size
    bias = float(np.mean(draws) - truth)
    bias_se = float(np.std(draws, ddof=1) / math.sqrt(reps))
    emp_var = float(n * np.var(draws, ddof=1))
    emp_var_se = float(emp_var * math.sqrt(2.0 / (reps - 1)))
    cells = {"bias": bias, "bias_se": bias_se, "emp_var": emp_var, "emp_var_se": emp_var_se}
    if theory_vars:
        tv = n * np.asarray(theory_vars)
        cells["theory_var"] = float(np.mean(tv))
        cells["theory_var_se"] = float(np.std(tv, ddof=1) / math.sqrt(reps))
    if boot_vars:
        bv = n * np.asarray(boot_vars)
        cells["boot_var"] = float(np.mean(bv))
        cells["boot_var_se"] = float(np.std(bv, ddof=1) / math.sqrt(reps))
    return EffectCells(**cells)


def run_experiment(
    spec: DgpSpec,
    replicates: int,
    estimators: Iterable[str] = ("g",),
    tests: Iterable[str] = (),
    level: float = 0.05,
    config: Optional[ModelConfig] = None,
    bootstrap_replicates: int = 0,
) -> ExperimentResult:
    """Generate ``replicates`` datasets, fit the requested estimators, run
    the requested tests, and aggregate bias/variance/rejection summaries.

    Replicates where fitting fails are excluded from all aggregates and
    counted in ``failures``. Results are deterministic given the spec.
    """
    if replicates < 100:
        raise ValueError("need at least 100 replicates")
    estimators = list(estimators)
    test_specs = [(label, *parse_test_label(label)) for label in tests]
    config = config or ModelConfig("bernoulli-logit", False, "bias-reduced")
    need_g = "g" in estimators or any(
        m != "sobel-ols" and m != "lr-ols" for _, m, _ in test_specs
    )

    draws: Dict[str, list] = {}
    rejections: Dict[str, int] = {label: 0 for label, _, _ in test_specs}
    failures = 0
    used = 0
    for r in range(replicates):
        dataset = generate(spec, r)
        try:
            row: Dict[str, float] = {}
            est = None
            if need_g:
                est = g_estimate(dataset, config)
            if "g" in estimators:
                row["g:nide"] = est.nide
                row["g:nide:theory"] = est.nide_se**2
                row["g:nde"] = est.nde
                row["g:nde:theory"] = est.nde_se**2
                if bootstrap_replicates:
                    boot = bootstrap_variance(
                        dataset, config, bootstrap_replicates, seed=spec.seed + 7919 * r
                    )
                    row["g:nide:boot"] = boot.nide_se_boot**2
                    row["g:nde:boot"] = boot.nde_se_boot**2
            if "ols" in estimators:
                (b1, se1), (b2, se2), (b3, se3) = ols_product_fit(dataset)
                row["ols:nide"] = b1 * b2
                row["ols:nide:theory"] = b1 * b1 * se2 * se2 + b2 * b2 * se1 * se1
                row["ols:nde"] = b3
                row["ols:nde:theory"] = se3 * se3
            pvals: Dict[str, float] = {}
            for label, method, hyp in test_specs:
                if method == "sobel-ols":
                    pvals[label] = ols_sobel_lr(dataset)[0].p_value
                elif method == "lr-ols":
                    pvals[label] = ols_sobel_lr(dataset)[1].p_value
                elif method == "robust-sobel":
                    pvals[label] = robust_sobel(est).p_value
                elif method == "robust-wald-direct":
                    pvals[label] = robust_wald_direct(est).p_value
                elif method == "score-two-step":
                    pvals[label] = score_test_two_step(dataset, config, hyp, estimate=est).p_value
                else:
                    pvals[label] = score_test_cue(dataset, config, hyp, estimate=est).p_value
        except (GmedError, np.linalg.LinAlgError):
            failures += 1
            continue
        used += 1
        for key, val in row.items():
            draws.setdefault(key, []).append(val)
        for label, p in pvals.items():
            rejections[label] += p < level

    effects: Dict[str, EffectCells] = {}
    for name in estimators:
        for effect, truth in (("nide", spec.nide_true), ("nde", spec.nde_true)):
            key = f"{name}:{effect}"
            if key not in draws:
                continue
            effects[key] = _effect_cells(
                draws[key],
                draws.get(f"{key}:theory"),
                draws.get(f"{key}:boot"),
                truth,
                spec.n,
            )
    rates = {
        label: RateCell(
            rate=rejections[label] / used if used else math.nan,
            se=math.sqrt(
                max(rejections[label] / used * (1 - rejections[label] / used), 0.0) / used
            )
            if used
            else math.nan,
        )
        for label, _, _ in test_specs
    }
    return ExperimentResult(
        spec=spec,
        replicates=replicates,
        used_replicates=used,
        failures=failures,
        level=level,
        effects=effects,
        rejection_rates=rates,
    )


def _sig3(x: Optional[float]) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return format(x, ".3g")


def _cell(value: Optional[float], se: Optional[float]) -> str:
    if value is None:
        return ""
    return f"{_sig3(value)}({_sig3(se)})"


def _result_rows(result: ExperimentResult):
    rows = []
    for key, cells in result.effects.items():
        estimator, effect = key.split(":")
        rows.append(
            {
                "kind": "effect",
                "name": estimator,
                "effect": effect,
                "bias": cells.bias,
                "bias_se": cells.bias_se,
                "emp_var": cells.emp_var,
                "emp_var_se": cells.emp_var_se,
                "theory_var": cells.theory_var,
                "theory_var_se": cells.theory_var_se,
                "boot_var": cells.boot_var,
                "boot_var_se": cells.boot_var_se,
            }
        )
    for label, cell in result.rejection_rates.items():
        rows.append(
            {"kind": "rejection", "name": label, "effect": "", "rate": cell.rate,
             "rate_se": cell.se}
        )
    return rows


def emit_table(result: ExperimentResult, format: str = "markdown") -> str:
    """Render an ExperimentResult as csv, json, or markdown text.

    The markdown cells follow the value(se) convention with three
    significant digits; csv and json are lossless (17 significant digits).
    """
    spec = result.spec
    header_meta = {
        "process": spec.process,
        "beta": list(spec.beta_true.as_vector()),
        "n": spec.n,
        "spec_flags": {"s_x": spec.s_x, "s_m": spec.s_m, "s_y": spec.s_y},
        "seed": spec.seed,
        "replicates": result.replicates,
        "used_replicates": result.used_replicates,
        "failures": result.failures,
        "level": result.level,
    }
    if format == "json":
        payload = {"schema": "gmed/1", "experiment": header_meta, "rows": _result_rows(result)}
        return dumps(payload) + "\n"
    if format == "csv":
        cols = [
            "kind", "name", "effect", "bias", "bias_se", "emp_var", "emp_var_se",
            "theory_var", "theory_var_se", "boot_var", "boot_var_se", "rate", "rate_se",
        ]
        lines = [",".join(cols)]
        for row in _result_rows(result):
            cells = []
            for c in cols:
                val = row.get(c)
                if val is None or val == "":
                    cells.append("")
                elif isinstance(val, str):
                    cells.append(val)
                else:
                    cells.append(format_float_17(val))
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"
    if format == "markdown":
        lines = [
            f"Process {spec.process}, beta=({_sig3(spec.beta_true.beta1)},"
            f"{_sig3(spec.beta_true.beta2)},{_sig3(spec.beta_true.beta3)}), "
            f"n={spec.n}, flags=(s_x={spec.s_x},s_m={spec.s_m},s_y={spec.s_y}), "
            f"replicates={result.used_replicates}/{result.replicates}, "
            f"failures={result.failures}",
            "",
            "| Estimator | Effect | Bias | Var | Theory_Var | Boot_Var |",
            "|---|---|---|---|---|---|",
        ]
        for key, cells in result.effects.items():
            estimator, effect = key.split(":")
            lines.append(
                f"| {estimator} | {effect.upper()} | {_cell(cells.bias, cells.bias_se)} "
                f"| {_cell(cells.emp_var, cells.emp_var_se)} "
                f"| {_cell(cells.theory_var, cells.theory_var_se)} "
                f"| {_cell(cells.boot_var, cells.boot_var_se)} |"
            )
        if result.rejection_rates:
            lines += ["", f"| Test | Rejection rate at {result.level:g} |", "|---|---|"]
            for label, cell in result.rejection_rates.items():
                lines.append(f"| {label} | {_cell(cell.rate, cell.se)} |")
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown table format {format!r}")


def format_float_17(x: float) -> str:
    if isinstance(x, float) and math.isnan(x):
        return ""
    return format(float(x), ".17g")
