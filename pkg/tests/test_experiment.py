import dataclasses
import json

import numpy as np
import pytest

from mimopred.config import config_hash, load_manifest
from mimopred.datasets import SamplePair, TargetSet
from mimopred.errors import ConfigurationError, DataError
from mimopred.evaluation import to_db
from mimopred.experiment import (_check_aligned, apply_sweep_value, default_methods,
                                 run_experiment, run_point)

from conftest import small_experiment


def test_default_methods():
    cfg = small_experiment()
    assert default_methods(cfg) == ("mlp", "maml", "persistence")
    with_dip = small_experiment(dip=dataclasses.replace(cfg.dip, enabled=True))
    assert default_methods(with_dip) == ("mlp", "maml", "mlp-dip", "maml-dip",
                                         "persistence")


def test_run_point_rejects_unknown_method(small_cfg):
    with pytest.raises(ConfigurationError, match="unknown methods"):
        run_point(small_cfg, 0, methods=("maml", "oracle"))


@pytest.fixture(scope="module")
def point_reports():
    return run_point(small_experiment(), 0)


def test_run_point_report_contents(point_reports):
    cfg = small_experiment()
    assert [r.method for r in point_reports] == ["mlp", "maml", "persistence"]
    for r in point_reports:
        assert r.nmse_db == pytest.approx(to_db(r.nmse_linear))
        assert len(r.per_ue_rates) == cfg.dataset.n_target_ue
        assert np.isfinite(r.sum_rate_bits)
        assert r.config_echo["seed"] == 0
        assert r.config_echo["snr_db"] == cfg.sim.snr_db
        assert r.config_echo["n_ad"] == cfg.dataset.n_adapt
        assert r.config_echo["t_ad"] == cfg.meta.adapt_steps
        assert r.config_echo["config_hash"] == config_hash(cfg)
    by_method = {r.method: r for r in point_reports}
    assert by_method["persistence"].flops.grand_total == 0
    assert by_method["maml"].flops.train > 0
    assert by_method["maml"].flops.dip == 0


def test_run_point_deterministic(point_reports):
    again = run_point(small_experiment(), 0)
    for a, b in zip(point_reports, again):
        assert a.method == b.method
        assert a.nmse_linear == b.nmse_linear
        assert a.sum_rate_bits == b.sum_rate_bits
        assert a.per_ue_rates == b.per_ue_rates


def test_denoised_methods_carry_dip_cost():
    base = small_experiment()
    cfg = small_experiment(dip=dataclasses.replace(base.dip, enabled=True))
    reports = run_point(cfg, 0, methods=("maml", "maml-dip"))
    by_method = {r.method: r for r in reports}
    assert by_method["maml"].flops.dip == 0
    assert by_method["maml-dip"].flops.dip > 0
    assert by_method["maml-dip"].flops.grand_total > by_method["maml"].flops.grand_total
    # predictor-stage counts do not depend on the denoiser
    assert by_method["maml-dip"].flops.total == by_method["maml"].flops.total


def test_cache_reuse_leaves_results_unchanged():
    cfg = small_experiment()
    cache = {}
    first = run_point(cfg, 0, methods=("maml",), _cache=cache)
    n_entries = len(cache)
    assert n_entries == 1  # one simulation entry, no denoiser needed
    second = run_point(cfg, 0, methods=("maml",), _cache=cache)
    assert len(cache) == n_entries
    assert first[0].nmse_linear == second[0].nmse_linear


def test_apply_sweep_value():
    cfg = small_experiment()
    assert apply_sweep_value(cfg, "tasks_per_ue", 6).dataset.tasks_per_ue == 6
    assert apply_sweep_value(cfg, "order", 3).dataset.order == 3
    assert apply_sweep_value(cfg, "n_adapt", 2).dataset.n_adapt == 2
    assert apply_sweep_value(cfg, "adapt_steps", 7).meta.adapt_steps == 7
    swept = apply_sweep_value(cfg, "snr_db", 0)
    assert swept.sim.snr_db == 0.0 and isinstance(swept.sim.snr_db, float)
    with pytest.raises(ConfigurationError):
        apply_sweep_value(cfg, "paths", 8)
    # re-validation still applies to swept configs
    with pytest.raises(ConfigurationError):
        apply_sweep_value(cfg, "n_adapt", 100)


def test_check_aligned_rejects_mismatched_schedules():
    def pair(slot):
        v = np.zeros(4)
        return SamplePair(inputs=v, label=v, slot=slot, ue_id=0)

    good = TargetSet(ue_id=0, adapt=[], test=[pair(5), pair(9)])
    bad = TargetSet(ue_id=1, adapt=[], test=[pair(5), pair(11)])
    _check_aligned([good, good])
    with pytest.raises(DataError, match="schedules"):
        _check_aligned([good, bad])


def test_run_experiment_single_point(tmp_path):
    cfg = small_experiment()
    out = tmp_path / "run"
    reports = run_experiment(cfg, master_seed=0, methods=("maml", "mlp"), out_dir=out)
    # rows sorted by method name within the single seed
    assert [r.method for r in reports] == ["maml", "mlp"]
    assert all("sweep_value" not in r.config_echo for r in reports)
    results = out / "results.csv"
    manifest = load_manifest(out / "manifest.json")
    assert results.exists()
    assert manifest.config_hash == config_hash(cfg)
    assert manifest.seed == 0
    assert manifest.artifacts["results"].endswith("results.csv")


def test_run_experiment_sweep_and_replay(tmp_path):
    cfg = small_experiment(sweep=dataclasses.replace(
        small_experiment().sweep, variable="n_adapt", values=(0, 4), n_seeds=2))
    out1, out2 = tmp_path / "a", tmp_path / "b"
    reports = run_experiment(cfg, master_seed=3, methods=("maml",), out_dir=out1)
    assert len(reports) == 2 * 2  # two sweep values, two seeds
    keys = [(r.config_echo["sweep_value"], r.config_echo["seed"]) for r in reports]
    assert keys == [(0, 3), (0, 4), (4, 3), (4, 4)]
    assert all(r.config_echo["sweep_variable"] == "n_adapt" for r in reports)
    run_experiment(cfg, master_seed=3, methods=("maml",), out_dir=out2)
    assert (out1 / "results.csv").read_bytes() == (out2 / "results.csv").read_bytes()
    one = json.loads((out1 / "manifest.json").read_text())
    two = json.loads((out2 / "manifest.json").read_text())
    assert one["config_hash"] == two["config_hash"] and one["seed"] == two["seed"]
