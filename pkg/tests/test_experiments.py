import math

import numpy as np
import pandas as pd
import pytest

from mixedeig.constants import LSHAPE_REFERENCE_EIGENVALUE, ROUNDING_FLOOR
from mixedeig.experiments import (
    ConvergenceRow,
    format_table,
    loglog_slope,
    mark,
    observed_rates,
    rows_to_frame,
    run_lshape_adaptive,
    run_square_study,
    run_superconvergence_check,
    tail_slopes,
    write_csv,
    write_dat,
)


def synthetic_rows(count=5, rate=3.0):
    rows = []
    for level in range(count):
        h = 2.0**-level
        rows.append(
            ConvergenceRow(
                level=level,
                n_elements=32 * 4**level,
                n_dofs=100 * 4**level,
                lambda_h=19.7 + h,
                lambda_star=19.74 + h**2,
                err_lambda_star=h ** (2 * rate),
                eta=h**rate,
                eta_lambda=h ** (2 * rate),
            )
        )
    return rows


def test_observed_rates_of_geometric_sequence():
    values = [0.5 * 2.0 ** (-3 * i) for i in range(5)]
    rates = observed_rates(values)
    assert rates[0] is None
    for rate in rates[1:]:
        assert rate == pytest.approx(3.0, abs=1e-12)


def test_observed_rates_skip_missing_and_floored_values():
    rates = observed_rates([1.0, None, 0.25, 1e-13, 1e-14], floor=ROUNDING_FLOOR)
    assert rates == [None, None, None, None, None]
    assert observed_rates([1.0, 0.25]) == [None, 2.0]


def test_loglog_slope():
    n = [10.0, 100.0, 1000.0]
    assert loglog_slope(n, [1.0, 0.1, 0.01]) == pytest.approx(-1.0, abs=1e-12)
    assert loglog_slope(n, [1.0, 0.0, 0.01]) == pytest.approx(-1.0, abs=1e-12)
    assert math.isnan(loglog_slope(n, [1.0, None, 0.0]))


def test_mark_uses_fraction_of_maximum():
    eta_K = np.array([1.0, 0.2, 0.25, 0.3, 0.1])
    np.testing.assert_array_equal(mark(eta_K), [0, 2, 3])
    np.testing.assert_array_equal(mark(np.zeros(3)), [0, 1, 2])
    np.testing.assert_array_equal(mark(eta_K, fraction=1.0), [0])


def test_rows_to_frame_inserts_rate_columns():
    frame = rows_to_frame(synthetic_rows(), with_rates=True)
    columns = list(frame.columns)
    assert columns.index("rate_eta") == columns.index("eta") + 1
    assert np.isnan(frame["rate_eta"].iloc[0])
    np.testing.assert_allclose(frame["rate_eta"].iloc[1:], 3.0, atol=1e-12)
    np.testing.assert_allclose(frame["rate_err_lambda_star"].iloc[1:], 6.0, atol=1e-12)
    assert "rate_level" not in frame
    assert rows_to_frame([]).empty


def test_csv_output_is_deterministic(tmp_path):
    frame = rows_to_frame(synthetic_rows(), with_rates=True)
    first = write_csv(frame, tmp_path / "a" / "study.csv")
    second = write_csv(rows_to_frame(synthetic_rows(), with_rates=True), tmp_path / "b.csv")
    assert first.read_bytes() == second.read_bytes()
    loaded = pd.read_csv(first)
    np.testing.assert_array_equal(loaded["eta"], frame["eta"])


def test_dat_file_layout(tmp_path):
    path = write_dat(synthetic_rows(3), tmp_path / "adaptive.dat")
    lines = path.read_text().splitlines()
    assert lines[0] == "# n_dofs n_elements err_lambda_star eta eta_lambda"
    assert len(lines) == 4
    assert lines[1].split()[:2] == ["100", "32"]


def test_format_table_shows_rates():
    frame = rows_to_frame(synthetic_rows(3), with_rates=True)
    text = format_table(frame, ["n_elements", "lambda_h", "eta", "missing"])
    assert "(3.00)" in text
    assert "missing" not in text
    assert "20.7" in text
    assert "-" in format_table(rows_to_frame(synthetic_rows(2)), ["hot"])


def test_tail_slopes():
    rows = synthetic_rows(6)
    slopes = tail_slopes(rows)
    # n_dofs grows by 4 per level while eta drops by 8
    assert slopes["eta"] == pytest.approx(-1.5, abs=1e-12)
    assert slopes["err_lambda_star"] == pytest.approx(-3.0, abs=1e-12)


def test_quick_square_study():
    rows = run_square_study(1, 2)
    assert [row.n_elements for row in rows] == [32, 128]
    assert rows[1].eta < rows[0].eta
    assert rows[1].err_lambda_star < rows[0].err_lambda_star
    assert all(row.superconv_proj_err is not None for row in rows)
    assert all(0.5 < row.eff < 1.5 for row in rows)


def test_quick_superconvergence_check():
    rows = run_superconvergence_check(1, 2)
    assert len(rows) == 2
    for row in rows:
        assert row.aux_identity_residual < 1e-9
        assert row.aux_diff <= 10 * row.aux_proj_err
    assert rows[1].superconv_proj_err < rows[0].superconv_proj_err


def test_small_adaptive_run():
    rows = run_lshape_adaptive(2, max_dofs=1500)
    elements = [row.n_elements for row in rows]
    assert elements[0] == 24
    assert all(b > a for a, b in zip(elements, elements[1:]))
    assert rows[-1].n_dofs > 1500
    assert all(row.n_dofs <= 1500 for row in rows[:-1])
    assert all(row.err_lambda is not None and row.err_grad_u2 is None for row in rows)


@pytest.mark.slow
@pytest.mark.parametrize("k,levels,window", [(1, 5, 0.2), (2, 4, 0.25)])
def test_square_convergence_rates(k, levels, window):
    rows = run_square_study(k, levels)
    frame = rows_to_frame(rows, with_rates=True)
    last = frame.iloc[-1]
    for column in ("err_grad_u2", "err_sigma_star", "eta"):
        assert last[f"rate_{column}"] == pytest.approx(k + 2, abs=window)
    for column in ("hot", "err_u2_L2"):
        assert last[f"rate_{column}"] == pytest.approx(k + 3, abs=window)
    lambda_rates = frame["rate_err_lambda_star"].dropna()
    assert lambda_rates.iloc[-1] == pytest.approx(2 * (k + 2), abs=window)
    if k == 1:
        assert 0.97 <= frame["eff"].iloc[-1] <= 1.03
    for row in rows:
        assert row.eta <= row.err_grad_u2 + row.err_sigma_star + 1e-10
        assert row.err_grad_u2**2 + row.err_sigma_star**2 <= row.eta**2 + row.hot_remainder + 1e-10
        assert row.eta_lambda >= row.eta**2
        assert row.iterations <= 60


@pytest.mark.slow
def test_superconvergence_rate():
    frame = rows_to_frame(run_superconvergence_check(1, 4), with_rates=True)
    assert frame["rate_superconv_proj_err"].iloc[-1] == pytest.approx(4.0, abs=0.3)


@pytest.mark.slow
def test_adaptive_lshape_slopes():
    k = 2
    rows = run_lshape_adaptive(k, max_dofs=200_000)
    assert abs(rows[-1].lambda_star - LSHAPE_REFERENCE_EIGENVALUE) <= 1e-7
    slopes = tail_slopes(rows)
    assert -2.4 <= slopes["eta"] <= -1.6
    assert -4.6 <= slopes["err_lambda_star"] <= -3.4
