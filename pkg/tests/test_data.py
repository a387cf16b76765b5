import numpy as np
import pytest

from gmed.data import ColumnMap, Dataset, ModelConfig, load_csv, standardize
from gmed.estimation import g_estimate
from gmed.exceptions import (
    ConstantColumn,
    EmptyAfterFiltering,
    MissingColumn,
    NonNumericCell,
)


def write(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


CMAP = ColumnMap(outcome="y", mediator="m", exposure="x", confounders=["z"])


def test_load_csv_four_rows(tmp_path):
    path = write(tmp_path, "y,m,x,z\n1,2,0,0.5\n2,1,1,-0.5\n0,0,0,1.5\n3,2,1,0.0\n")
    ds = load_csv(path, CMAP)
    assert ds.n == 4
    assert ds.n_confounder_cols == 2  # intercept + z
    assert np.all(ds.confounders[:, 0] == 1.0)
    assert ds.outcome == pytest.approx([1, 2, 0, 3])
    assert np.all(ds.weights == 1.0)


def test_load_csv_missing_column(tmp_path):
    path = write(tmp_path, "y,m,x\n1,2,0\n")
    with pytest.raises(MissingColumn):
        load_csv(path, CMAP)


def test_load_csv_non_numeric_cell_reports_location(tmp_path):
    path = write(tmp_path, "y,m,x,z\n1,2,0,0.5\n2,oops,1,1\n0,0,0,1\n1,1,1,1\n")
    with pytest.raises(NonNumericCell) as err:
        load_csv(path, CMAP)
    assert err.value.row == 3
    assert err.value.column == "m"


def test_load_csv_drop_rows_policy(tmp_path):
    path = write(
        tmp_path,
        "y,m,x,z\n1,2,0,0.5\n2,NA,1,-0.5\n0,0,0,1.5\n3,2,1,0.0\n1,0,1,0.3\n",
    )
    with pytest.raises(NonNumericCell):
        load_csv(path, CMAP)  # default policy errors
    ds = load_csv(path, CMAP, missing_policy="drop-rows")
    assert ds.n == 4


def test_load_csv_empty_after_filtering(tmp_path):
    path = write(tmp_path, "y,m,x,z\nNA,1,0,1\n")
    with pytest.raises(EmptyAfterFiltering):
        load_csv(path, CMAP, missing_policy="drop-rows")


def test_weight_column_scale_invariance(tmp_path):
    rng = np.random.default_rng(0)
    n = 80
    z = rng.normal(size=n)
    x = rng.binomial(1, 0.5, size=n).astype(float)
    m = x + z + rng.normal(size=n)
    y = m + x + z + rng.normal(size=n)
    rows = "\n".join(
        f"{float(y[i])!r},{float(m[i])!r},{float(x[i])!r},{float(z[i])!r},0.5"
        for i in range(n)
    )
    path = write(tmp_path, "y,m,x,z,w\n" + rows + "\n")
    cmap_w = ColumnMap("y", "m", "x", ["z"], weight="w")
    cfg = ModelConfig("bernoulli-logit", False, "bias-reduced")
    est_weighted = g_estimate(load_csv(path, cmap_w), cfg)
    est_plain = g_estimate(load_csv(path, CMAP), cfg)
    assert est_weighted.beta_hat.as_vector() == pytest.approx(
        est_plain.beta_hat.as_vector(), abs=1e-10
    )
    assert est_weighted.nide_se == pytest.approx(est_plain.nide_se, rel=1e-9)


def test_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(1)
    ds = Dataset.build(
        outcome=rng.normal(size=12),
        mediator=rng.normal(size=12),
        exposure=rng.binomial(1, 0.5, 12).astype(float),
        confounders=rng.normal(size=(12, 2)),
        weights=rng.uniform(0.5, 2.0, size=12),
    )
    path = tmp_path / "roundtrip.csv"
    ds.write_csv(path)
    back = load_csv(
        path,
        ColumnMap("y", "m", "x", ["z1", "z2"], weight="w"),
    )
    assert np.array_equal(back.outcome, ds.outcome)
    assert np.array_equal(back.mediator, ds.mediator)
    assert np.array_equal(back.confounders, ds.confounders)
    assert np.array_equal(back.weights, ds.weights)


def test_dataset_immutable():
    ds = Dataset.build([1.0, 2, 3, 4, 5], [0.0, 1, 0, 1, 0], [0.0, 1, 0, 1, 1], None)
    with pytest.raises(ValueError):
        ds.outcome[0] = 9.0


def test_dataset_rejects_nonfinite():
    with pytest.raises(ValueError):
        Dataset.build([np.nan, 2, 3, 4, 5], [0.0] * 5, [0.0, 1, 0, 1, 1], None)


def test_model_config_validates_binary_exposure():
    cfg = ModelConfig("bernoulli-logit")
    with pytest.raises(ValueError):
        cfg.validate_exposure(np.array([0.0, 0.5, 1.0]))
    cfg.validate_exposure(np.array([0.0, 1.0, 1.0]))


def test_standardize_basic_and_idempotent():
    ds = Dataset.build(
        [1.0, 2, 3, 1, 2, 3],
        [0.0, 1, 0, 1, 0, 1],
        [0.0, 1, 1, 0, 1, 0],
        np.array([1.0, 2, 3, 1, 2, 3])[:, None],
    )
    std, record = standardize(ds)
    col = std.confounders[:, 1]
    assert np.mean(col) == pytest.approx(0.0, abs=1e-12)
    assert np.std(col) == pytest.approx(1.0, abs=1e-12)
    again, second = standardize(std)
    assert np.allclose(again.confounders, std.confounders, atol=1e-12)
    assert second.means[1] == pytest.approx(0.0, abs=1e-12)
    assert second.scales[1] == pytest.approx(1.0, abs=1e-12)


def test_standardize_constant_column():
    ds = Dataset.build(
        [1.0, 2, 3, 1, 2, 3],
        [0.0, 1, 0, 1, 0, 1],
        [0.0, 1, 1, 0, 1, 0],
        np.full((6, 1), 2.0),
    )
    with pytest.raises(ConstantColumn):
        standardize(ds)


def test_standardize_gamma_unscaling_round_trip():
    rng = np.random.default_rng(3)
    z = rng.normal(loc=5.0, scale=3.0, size=(60, 2))
    ds = Dataset.build(
        rng.normal(size=60), rng.normal(size=60), rng.binomial(1, 0.5, 60).astype(float), z
    )
    std, record = standardize(ds)
    gamma_std = np.array([0.7, -1.2, 0.4])
    # the unscaled coefficients must reproduce the same linear predictor
    eta_std = std.confounders @ gamma_std
    eta_orig = ds.confounders @ record.unscale_gamma(gamma_std)
    assert eta_orig == pytest.approx(eta_std, abs=1e-10)


def test_standardize_leaves_beta_invariant():
    rng = np.random.default_rng(4)
    n = 400
    z = rng.normal(loc=2.0, scale=4.0, size=n)
    x = rng.binomial(1, 0.5, size=n).astype(float)
    m = 0.8 * x + 0.3 * z + rng.normal(size=n)
    y = 0.5 * m + 0.2 * x + 0.1 * z + rng.normal(size=n)
    ds = Dataset.build(y, m, x, z[:, None])
    std, _ = standardize(ds)
    cfg = ModelConfig("bernoulli-logit", False, "bias-reduced")
    est_raw = g_estimate(ds, cfg)
    est_std = g_estimate(std, cfg)
    assert est_std.beta_hat.as_vector() == pytest.approx(
        est_raw.beta_hat.as_vector(), abs=1e-8
    )
