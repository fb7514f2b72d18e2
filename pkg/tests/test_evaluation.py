import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mimopred.errors import (DataError, DimensionError, NumericError,
                             SingularMatrixError)
from mimopred.evaluation import (RESULT_COLUMNS, EvalReport, FlopsReport, flops_dip,
                                 flops_maml, nmse, sum_rate, to_db, write_results_csv,
                                 zf_combiner)


def random_channel(rng, m, k):
    return (rng.normal(size=(m, k)) + 1j * rng.normal(size=(m, k))) / np.sqrt(2.0)


# ---- nmse / to_db ----

def test_nmse_examples():
    h = np.array([[1.0 + 1.0j, 2.0], [0.5j, 1.0]])
    assert nmse(h, h) == 0.0
    assert nmse(np.zeros_like(h), h) == pytest.approx(1.0)
    assert nmse(2.0 * h, h) == pytest.approx(1.0)


@given(st.floats(min_value=-3.0, max_value=3.0, allow_nan=False))
@settings(max_examples=25, deadline=None)
def test_nmse_scaling_law(alpha):
    rng = np.random.default_rng(5)
    h = random_channel(rng, 4, 6).T
    assert nmse(alpha * h, h) == pytest.approx(abs(alpha - 1.0) ** 2, abs=1e-12)


def test_nmse_validation():
    h = np.ones((2, 3), dtype=complex)
    with pytest.raises(DimensionError):
        nmse(h, np.ones((3, 2), dtype=complex))
    with pytest.raises(DataError):
        nmse(np.empty((0, 3)), np.empty((0, 3)))
    bad = h.copy()
    bad[1] = 0.0
    with pytest.raises(NumericError):
        nmse(h, bad)


def test_to_db():
    assert to_db(100.0) == pytest.approx(20.0)
    assert to_db(1.0) == 0.0
    for x in (0.0, -1.0):
        with pytest.raises(NumericError):
            to_db(x)


# ---- zero-forcing combiners ----

def test_zf_single_user_is_matched_filter():
    rng = np.random.default_rng(2)
    h = random_channel(rng, 6, 1)
    f = zf_combiner(h)
    np.testing.assert_allclose(f, h.conj() / np.linalg.norm(h), atol=1e-12)


def test_zf_orthogonal_columns():
    h = np.array([[2.0, 0.0], [0.0, 3.0], [0.0, 0.0]], dtype=complex)
    f = zf_combiner(h)
    np.testing.assert_allclose(f, [[1, 0], [0, 1], [0, 0]], atol=1e-12)


def test_zf_nulls_cross_channels():
    rng = np.random.default_rng(7)
    for _ in range(50):
        h = random_channel(rng, 8, 4)
        f = zf_combiner(h)
        cross = f.T @ h
        off = cross - np.diag(np.diag(cross))
        assert np.max(np.abs(off)) <= 1e-9
        np.testing.assert_allclose(np.linalg.norm(f, axis=0), 1.0, atol=1e-12)


def test_zf_validation():
    with pytest.raises(DimensionError):
        zf_combiner(np.ones(4, dtype=complex))
    with pytest.raises(DimensionError):
        zf_combiner(np.ones((2, 3), dtype=complex))  # more users than antennas
    bad = np.ones((3, 2), dtype=complex)
    bad[0, 0] = np.nan
    with pytest.raises(NumericError):
        zf_combiner(bad)
    dup = np.ones((3, 2), dtype=complex)  # identical columns
    with pytest.raises(SingularMatrixError):
        zf_combiner(dup)


# ---- rates ----

def test_sum_rate_hand_case():
    h = np.array([[1.0, 1.0], [0.0, 1.0]], dtype=complex)
    rates, total = sum_rate(h, h, 10.0 * np.log10(4.0))
    assert rates == pytest.approx([np.log2(3.0), np.log2(5.0)], rel=1e-12)
    assert total == pytest.approx(np.log2(15.0), rel=1e-12)


def test_sum_rate_single_user_closed_form():
    rng = np.random.default_rng(3)
    h = random_channel(rng, 8, 1)
    snr_db = 12.0
    rho = 10.0 ** (snr_db / 10.0)
    _, total = sum_rate(h, h, snr_db)
    assert total == pytest.approx(np.log2(1.0 + rho * np.linalg.norm(h) ** 2), rel=1e-9)


def test_sum_rate_zero_power():
    rng = np.random.default_rng(4)
    h = random_channel(rng, 4, 2)
    rates, total = sum_rate(h, h, -np.inf)
    assert rates == [0.0, 0.0] and total == 0.0


def test_sum_rate_shape_mismatch():
    with pytest.raises(DimensionError):
        sum_rate(np.ones((4, 2), dtype=complex), np.ones((4, 3), dtype=complex), 10.0)


def test_perfect_csi_beats_noisy_csi():
    rng = np.random.default_rng(11)
    diffs = []
    for _ in range(20):
        h = random_channel(rng, 8, 3)
        noisy = h + 0.3 * random_channel(rng, 8, 3)
        _, r_perfect = sum_rate(h, h, 20.0)
        _, r_noisy = sum_rate(h, noisy, 20.0)
        diffs.append(r_perfect - r_noisy)
    assert np.median(diffs) > 0.0


# ---- operation counts ----

def test_flops_maml_reference_point():
    rep = flops_maml(n_epoch=20, n_tasks=4096, samples_per_task=20, adapt_steps=10,
                     n_adapt=20, n_test=100, width_ratio=8, order=3, hidden_layers=4,
                     n_antennas=64)
    per_pass = 8 * (3 + 3 * 8 + 1) * 64**2
    assert per_pass == 917_504
    assert rep.train == 20 * 4096 * 20 * per_pass
    assert rep.adapt == 10 * 20 * per_pass
    assert rep.test == 100 * per_pass
    assert rep.total == rep.train + rep.adapt + rep.test
    assert rep.grand_total == rep.total  # no denoiser cost by default
    assert rep.train // rep.adapt == 8192 and rep.train / rep.adapt > 1e3
    assert all(isinstance(v, int) for v in (rep.train, rep.adapt, rep.test, rep.total))


def test_flops_maml_linearity():
    base = flops_maml(1, 1, 1, 1, 1, 1, width_ratio=2, order=3, hidden_layers=3,
                      n_antennas=4)
    doubled = flops_maml(2, 1, 1, 1, 1, 1, width_ratio=2, order=3, hidden_layers=3,
                         n_antennas=4)
    assert doubled.train == 2 * base.train
    assert doubled.adapt == base.adapt and doubled.test == base.test


def test_flops_maml_validation():
    with pytest.raises(DataError):
        flops_maml(-1, 1, 1, 1, 1, 1, 2, 3, 3, 4)
    with pytest.raises(DataError):
        flops_maml(1.5, 1, 1, 1, 1, 1, 2, 3, 3, 4)


def test_flops_dip():
    assert flops_dip(0, 128, 64, 64) == 0
    assert flops_dip(2000, 128, 64, 64) == 3_145_728_000
    # with the antenna term zeroed the count is quadratic in filters
    assert flops_dip(1, 8, 4, 0) == 4 * flops_dip(1, 8, 2, 0)
    with pytest.raises(DataError):
        flops_dip(10, 128, -2, 4)


# ---- results files ----

def _report(method, nmse_db, rate, flops, echo):
    return EvalReport(method=method, nmse_linear=10 ** (nmse_db / 10), nmse_db=nmse_db,
                      sum_rate_bits=rate, per_ue_rates=[rate], flops=flops,
                      config_echo=echo)


def test_write_results_csv(tmp_path):
    echo = {"seed": 0, "snr_db": 10.0, "n_ad": 4, "t_ad": 10}
    reports = [
        _report("maml", -2.5, 11.25, FlopsReport(100, 10, 5), echo),
        _report("maml-dip", -3.5, 12.0, FlopsReport(100, 10, 5, dip=7), echo),
    ]
    path = tmp_path / "results.csv"
    write_results_csv(path, reports)
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(RESULT_COLUMNS)
    assert lines[1] == "0,10.0,4,10,maml,-2.5,11.25,115"
    assert lines[2].endswith(",122")  # denoiser cost folded into the total
    twin = tmp_path / "again.csv"
    write_results_csv(twin, reports)
    assert twin.read_bytes() == path.read_bytes()


def test_write_results_csv_refuses_empty(tmp_path):
    with pytest.raises(DataError):
        write_results_csv(tmp_path / "empty.csv", [])
