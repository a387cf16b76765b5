"""Immutable dataset container, CSV ingestion, and confounder standardization.

The confounder matrix always carries an explicit intercept as its first
column, so nuisance coefficient blocks include intercepts. Observation
weights default to one; user-supplied weights (e.g. inverse-probability
weights for missingness) enter every empirical average multiplicatively.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .exceptions import (
    ConstantColumn,
    DimensionMismatch,
    EmptyAfterFiltering,
    MissingColumn,
    NonNumericCell,
)

_NA_TOKENS = {"", "na", "nan", "n/a", "null"}


def _frozen(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Dataset:
    """Rectangular mediation data: outcome, mediator, exposure, confounders.

    ``confounders`` includes the intercept as column 0. Instances are
    deep-immutable (arrays are non-writeable) and safe to share.
    """

    outcome: np.ndarray
    mediator: np.ndarray
    exposure: np.ndarray
    confounders: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "outcome", _frozen(self.outcome))
        object.__setattr__(self, "mediator", _frozen(self.mediator))
        object.__setattr__(self, "exposure", _frozen(self.exposure))
        object.__setattr__(self, "confounders", _frozen(np.atleast_2d(self.confounders)))
        object.__setattr__(self, "weights", _frozen(self.weights))
        n = self.outcome.shape[0]
        for name in ("mediator", "exposure", "weights"):
            if getattr(self, name).shape != (n,):
                raise DimensionMismatch(f"{name} length does not match outcome")
        if self.confounders.shape[0] != n:
            raise DimensionMismatch("confounder rows do not match outcome")
        # bound counts the non-intercept confounders plus the three variables
        min_rows = (self.confounders.shape[1] - 1) + 3
        if n < min_rows:
            raise DimensionMismatch(f"need at least {min_rows} rows, got {n}")
        for name in ("outcome", "mediator", "exposure", "confounders", "weights"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"{name} contains non-finite values")
        if np.any(self.weights < 0) or self.weights.sum() <= 0:
            raise ValueError("weights must be nonnegative with positive sum")

    @property
    def n(self) -> int:
        return self.outcome.shape[0]

    @property
    def n_confounder_cols(self) -> int:
        return self.confounders.shape[1]

    @classmethod
    def build(
        cls,
        outcome: Sequence[float],
        mediator: Sequence[float],
        exposure: Sequence[float],
        confounders: Optional[np.ndarray] = None,
        weights: Optional[Sequence[float]] = None,
    ) -> "Dataset":
        """Assemble a dataset, prepending the intercept column.

        ``confounders`` here excludes the intercept (it may be None or an
        (n, q) matrix of covariates).
        """
        outcome = np.asarray(outcome, dtype=float)
        n = outcome.shape[0]
        ones = np.ones((n, 1))
        if confounders is None:
            z = ones
        else:
            conf = np.asarray(confounders, dtype=float)
            if conf.ndim == 1:
                conf = conf[:, None]
            z = np.hstack([ones, conf])
        if weights is None:
            weights = np.ones(n)
        return cls(
            outcome=outcome,
            mediator=np.asarray(mediator, dtype=float),
            exposure=np.asarray(exposure, dtype=float),
            confounders=z,
            weights=np.asarray(weights, dtype=float),
        )

    def replace_rows(self, idx: np.ndarray) -> "Dataset":
        """Row-subset/resample view (used by bootstrap)."""
        return Dataset(
            outcome=self.outcome[idx],
            mediator=self.mediator[idx],
            exposure=self.exposure[idx],
            confounders=self.confounders[idx],
            weights=self.weights[idx],
        )

    def write_csv(self, path, column_map: Optional["ColumnMap"] = None) -> None:
        """Serialize to RFC-4180 CSV; floats use shortest round-trip form."""
        cmap = column_map or ColumnMap(
            outcome="y",
            mediator="m",
            exposure="x",
            confounders=[f"z{j}" for j in range(1, self.n_confounder_cols)],
            weight="w",
        )
        header = (
            [cmap.outcome, cmap.mediator, cmap.exposure]
            + list(cmap.confounders)
            + ([cmap.weight] if cmap.weight else [])
        )
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for i in range(self.n):
                row = [self.outcome[i], self.mediator[i], self.exposure[i]]
                row += list(self.confounders[i, 1:])
                if cmap.weight:
                    row.append(self.weights[i])
                writer.writerow([repr(float(v)) for v in row])


@dataclass(frozen=True)
class ColumnMap:
    """Names of the CSV columns holding each model variable."""

    outcome: str
    mediator: str
    exposure: str
    confounders: Sequence[str] = field(default_factory=tuple)
    weight: Optional[str] = None


@dataclass(frozen=True)
class ModelConfig:
    """Working-model configuration.

    exposure_family : "gaussian-identity" or "bernoulli-logit"
    interaction_enabled : include the exposure-mediator interaction term
    nuisance_strategy : "maximum-likelihood" or "bias-reduced"
    """

    exposure_family: str = "gaussian-identity"
    interaction_enabled: bool = False
    nuisance_strategy: str = "bias-reduced"

    def __post_init__(self):
        if self.exposure_family not in ("gaussian-identity", "bernoulli-logit"):
            raise ValueError(f"unknown exposure family {self.exposure_family!r}")
        if self.nuisance_strategy not in ("maximum-likelihood", "bias-reduced"):
            raise ValueError(f"unknown nuisance strategy {self.nuisance_strategy!r}")

    def validate_exposure(self, exposure: np.ndarray) -> None:
        if self.exposure_family == "bernoulli-logit":
            if np.any((exposure != 0.0) & (exposure != 1.0)):
                raise ValueError("bernoulli-logit exposure must be coded 0/1")


def _parse_cell(raw: str, row: int, column: str) -> float:
    text = raw.strip()
    if text.lower() in _NA_TOKENS:
        return math.nan
    try:
        return float(text)
    except ValueError:
        raise NonNumericCell(row=row, column=column, value=raw) from None


def load_csv(
    path,
    column_map: ColumnMap,
    missing_policy: str = "error",
) -> Dataset:
    """Read a header-bearing RFC-4180 CSV into a Dataset.

    ``missing_policy`` is "error" (default: any NA cell in a mapped column
    raises) or "drop-rows" (complete-case). The intercept column is
    prepended to the confounders; weights default to one.
    """
    if missing_policy not in ("error", "drop-rows"):
        raise ValueError(f"unknown missing policy {missing_policy!r}")
    wanted = [column_map.outcome, column_map.mediator, column_map.exposure]
    wanted += list(column_map.confounders)
    if column_map.weight:
        wanted.append(column_map.weight)

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyAfterFiltering("CSV file has no header row") from None
        header = [h.strip() for h in header]
        missing_cols = [c for c in wanted if c not in header]
        if missing_cols:
            raise MissingColumn(f"columns not found in CSV header: {missing_cols}")
        pos = {c: header.index(c) for c in wanted}

        rows = []
        for i, record in enumerate(reader, start=2):  # 1-based, after header
            if not record or all(cell.strip() == "" for cell in record):
                continue
            vals = {}
            for c in wanted:
                if pos[c] >= len(record):
                    vals[c] = math.nan
                else:
                    vals[c] = _parse_cell(record[pos[c]], row=i, column=c)
            if any(math.isnan(v) for v in vals.values()):
                if missing_policy == "error":
                    bad = next(c for c, v in vals.items() if math.isnan(v))
                    raise NonNumericCell(row=i, column=bad, value="NA")
                continue
            rows.append([vals[c] for c in wanted])

    if not rows:
        raise EmptyAfterFiltering("no complete rows remain after filtering")
    arr = np.asarray(rows, dtype=float)
    q = len(column_map.confounders)
    weights = arr[:, 3 + q] if column_map.weight else None
    return Dataset.build(
        outcome=arr[:, 0],
        mediator=arr[:, 1],
        exposure=arr[:, 2],
        confounders=arr[:, 3 : 3 + q] if q else None,
        weights=weights,
    )


@dataclass(frozen=True)
class StandardizationRecord:
    """Per-column centering/scale used by :func:`standardize`.

    Maps confounder-model coefficients fitted on the standardized scale back
    to the original scale. Column 0 (intercept) is never touched.
    """

    means: np.ndarray
    scales: np.ndarray

    def unscale_gamma(self, gamma: np.ndarray) -> np.ndarray:
        gamma = np.asarray(gamma, dtype=float)
        out = gamma / self.scales
        out[0] = gamma[0] - np.sum(gamma[1:] * self.means[1:] / self.scales[1:])
        return out


def standardize(dataset: Dataset) -> tuple[Dataset, StandardizationRecord]:
    """Center and scale non-intercept confounder columns to mean 0, SD 1.

    The target parameters are untouched (they multiply the exposure and
    mediator, which are never rescaled); only nuisance coefficients change
    scale, recoverable via the returned record.
    """
    z = np.array(dataset.confounders)
    means = np.zeros(z.shape[1])
    scales = np.ones(z.shape[1])
    for j in range(1, z.shape[1]):
        mu = float(np.mean(z[:, j]))
        sd = float(np.std(z[:, j], ddof=0))
        if sd == 0.0:
            raise ConstantColumn(f"confounder column {j} has zero variance")
        means[j] = mu
        scales[j] = sd
        z[:, j] = (z[:, j] - mu) / sd
    std = Dataset(
        outcome=dataset.outcome,
        mediator=dataset.mediator,
        exposure=dataset.exposure,
        confounders=z,
        weights=dataset.weights,
    )
    return std, StandardizationRecord(means=_frozen(means), scales=_frozen(scales))
