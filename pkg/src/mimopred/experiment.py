"""End-to-end experiment orchestration.

One experiment point: simulate traces for source and target users,
optionally denoise every trace, build source tasks and per-target-user
adaptation/test sets, train the requested predictors, adapt them to each
target user, and evaluate prediction error and sum rate.  A sweep
repeats this over one swept variable and several master seeds and
writes a deterministic CSV.

Cost accounting in reports: the training term covers the whole source
corpus, the adaptation and test terms cover one target user (mirroring
the complexity model), and the denoiser term sums every trace actually
denoised in the run.
"""

from __future__ import annotations

import dataclasses
import os

import numpy as np

from . import __version__
from .channel import gen_trace, observe
from .config import ExperimentConfig, RunManifest, config_hash
from .datasets import build_source_tasks, build_target_set, decode, pairs_to_arrays
from .denoise import denoise
from .errors import ConfigurationError, DataError, SingularMatrixError
from .evaluation import (EvalReport, FlopsReport, flops_dip, flops_maml, nmse, sum_rate,
                         to_db, write_results_csv)
from .models import MlpSpec
from .seeding import derive_seed
from .training import adapt, meta_train, predict, train_mlp_baseline

METHODS = ("mlp", "maml", "mlp-dip", "maml-dip")
REFERENCE_METHOD = "persistence"


def default_methods(cfg: ExperimentConfig) -> tuple:
    if cfg.dip.enabled:
        return METHODS + (REFERENCE_METHOD,)
    return ("mlp", "maml", REFERENCE_METHOD)


def source_ids(cfg: ExperimentConfig) -> range:
    return range(cfg.dataset.n_source_ue)


def target_ids(cfg: ExperimentConfig) -> range:
    start = cfg.dataset.n_source_ue
    return range(start, start + cfg.dataset.n_target_ue)


def mlp_spec(cfg: ExperimentConfig) -> MlpSpec:
    m = cfg.sim.n_antennas
    return MlpSpec(input_dim=2 * m * cfg.dataset.order, hidden_layers=cfg.mlp.hidden_layers,
                   hidden_width=cfg.mlp.hidden_width, output_dim=2 * m)


def simulate_ues(cfg: ExperimentConfig, seed: int) -> tuple:
    """True and estimated traces for every user, keyed by user id."""
    sim = cfg.sim.with_seed(seed)
    true_by_ue, ls_by_ue = {}, {}
    for ue in range(sim.n_ue):
        trace = gen_trace(sim, ue)
        true_by_ue[ue] = trace
        ls_by_ue[ue] = observe(trace, sim)
    return true_by_ue, ls_by_ue


def denoise_all(ls_by_ue: dict, cfg: ExperimentConfig, seed: int) -> tuple:
    """Denoise every trace; returns (traces, summed denoiser cost)."""
    cleaned, total = {}, 0
    for ue in sorted(ls_by_ue):
        trace, run = denoise(ls_by_ue[ue], depth=cfg.dip.depth, filters=cfg.dip.filters,
                             n_iter=cfg.dip.n_iter, lr=cfg.dip.lr,
                             seed=derive_seed(seed, "dip", ue))
        cleaned[ue] = trace
        total += flops_dip(cfg.dip.n_iter, run.spec.out_len, cfg.dip.filters,
                           cfg.sim.n_antennas)
    return cleaned, total


def build_all_datasets(ls_by_ue: dict, true_by_ue: dict, cfg: ExperimentConfig,
                       data_seed: int) -> tuple:
    tasks = build_source_tasks([ls_by_ue[u] for u in source_ids(cfg)],
                               cfg.dataset.tasks_per_ue, cfg.dataset.n_support,
                               cfg.dataset.n_query, cfg.dataset.order, data_seed)
    targets = [build_target_set(ls_by_ue[u], true_by_ue[u], cfg.dataset.n_adapt,
                                cfg.dataset.n_test, cfg.dataset.order, data_seed)
               for u in target_ids(cfg)]
    return tasks, targets


def _check_aligned(targets) -> None:
    schedules = [[p.slot for p in t.test] for t in targets]
    if any(s != schedules[0] for s in schedules[1:]):
        raise DataError("target users have mismatched test slot schedules")


def _truth_matrix(targets, n_antennas: int) -> np.ndarray:
    """(n_ue, n_test, M) true channels decoded from the test labels."""
    return np.stack([
        np.stack([decode(p.label, n_antennas)[:, 0] for p in t.test]) for t in targets
    ])


def _persistence_predictions(targets, n_antennas: int) -> np.ndarray:
    """Repeat each window's most recent estimate as the prediction."""
    return np.stack([
        np.stack([decode(p.inputs, n_antennas)[:, -1] for p in t.test]) for t in targets
    ])


def _rates_over_slots(pred: np.ndarray, truth: np.ndarray, snr_db: float) -> tuple:
    """Average per-user and total rates across shared test slots.

    A slot whose predicted channel matrix is effectively singular
    supports no zero-forcing transmission and counts as zero rate
    rather than aborting the whole run.
    """
    n_ue, n_test, _ = pred.shape
    per_ue = np.zeros(n_ue)
    total = 0.0
    for j in range(n_test):
        h_hat = pred[:, j, :].T
        h_true = truth[:, j, :].T
        try:
            rates, slot_total = sum_rate(h_true, h_hat, snr_db)
        except SingularMatrixError:
            continue
        per_ue += np.asarray(rates)
        total += slot_total
    return list(per_ue / n_test), total / n_test


def _train_method(method: str, tasks_raw, tasks_dip, spec: MlpSpec, meta_cfg):
    tasks = tasks_dip if method.endswith("-dip") else tasks_raw
    trainer = meta_train if method.startswith("maml") else train_mlp_baseline
    return trainer(tasks, spec, meta_cfg)


def _predict_method(params, targets, meta_cfg) -> np.ndarray:
    rows = []
    for t in targets:
        tuned = adapt(params, t.adapt, meta_cfg.inner_lr, meta_cfg.adapt_steps) \
            if t.adapt else params
        x, _ = pairs_to_arrays(t.test)
        rows.append(predict(tuned, x))
    return np.stack(rows)


def run_point(cfg: ExperimentConfig, seed: int, methods=None, _cache=None) -> list:
    """Evaluate the requested methods at a single experiment point.

    ``_cache`` (a dict) lets a sweep reuse simulation and denoising
    results across points whose channel data is identical; reuse is
    keyed by everything those stages depend on, so it never changes
    results.
    """
    methods = tuple(methods) if methods is not None else default_methods(cfg)
    unknown = [m for m in methods if m not in METHODS + (REFERENCE_METHOD,)]
    if unknown:
        raise ConfigurationError(f"unknown methods: {unknown}")
    m = cfg.sim.n_antennas
    spec = mlp_spec(cfg)
    meta_cfg = dataclasses.replace(cfg.meta, seed=seed)
    data_seed = derive_seed(seed, "data")
    cache = _cache if _cache is not None else {}

    sim_key = ("sim", seed, cfg.sim.with_seed(0))
    if sim_key not in cache:
        cache[sim_key] = simulate_ues(cfg, seed)
    true_by_ue, ls_by_ue = cache[sim_key]
    need_dip = any(x.endswith("-dip") for x in methods)
    dip_by_ue, dip_cost = {}, 0
    if need_dip:
        dip_key = ("dip", seed, cfg.sim.with_seed(0), cfg.dip)
        if dip_key not in cache:
            cache[dip_key] = denoise_all(ls_by_ue, cfg, seed)
        dip_by_ue, dip_cost = cache[dip_key]

    tasks_raw, targets_raw = build_all_datasets(ls_by_ue, true_by_ue, cfg, data_seed)
    tasks_dip, targets_dip = (build_all_datasets(dip_by_ue, true_by_ue, cfg, data_seed)
                              if need_dip else (None, None))
    _check_aligned(targets_raw)
    truth = _truth_matrix(targets_raw, m)

    predictor_flops = flops_maml(
        n_epoch=cfg.meta.n_epoch, n_tasks=len(tasks_raw),
        samples_per_task=cfg.dataset.n_support + cfg.dataset.n_query,
        adapt_steps=cfg.meta.adapt_steps, n_adapt=cfg.dataset.n_adapt,
        n_test=cfg.dataset.n_test, width_ratio=cfg.mlp.hidden_width // m,
        order=cfg.dataset.order, hidden_layers=cfg.mlp.hidden_layers, n_antennas=m)

    reports = []
    for method in methods:
        if method == REFERENCE_METHOD:
            pred = _persistence_predictions(targets_raw, m)
            flops = FlopsReport(train=0, adapt=0, test=0)
        else:
            targets = targets_dip if method.endswith("-dip") else targets_raw
            params, _ = _train_method(method, tasks_raw, tasks_dip, spec, meta_cfg)
            pred = _predict_method(params, targets, meta_cfg)
            flops = dataclasses.replace(predictor_flops,
                                        dip=dip_cost if method.endswith("-dip") else 0)
        nmse_linear = nmse(pred.reshape(-1, m), truth.reshape(-1, m))
        per_ue, total_rate = _rates_over_slots(pred, truth, cfg.sim.snr_db)
        reports.append(EvalReport(
            method=method, nmse_linear=nmse_linear, nmse_db=to_db(nmse_linear),
            sum_rate_bits=total_rate, per_ue_rates=per_ue, flops=flops,
            config_echo={"seed": seed, "snr_db": cfg.sim.snr_db,
                         "n_ad": cfg.dataset.n_adapt, "t_ad": cfg.meta.adapt_steps,
                         "method": method, "config_hash": config_hash(cfg)},
        ))
    return reports


def apply_sweep_value(cfg: ExperimentConfig, variable: str, value) -> ExperimentConfig:
    """Rebuild the config with one swept variable changed (and re-validated)."""
    if variable in ("tasks_per_ue", "order", "n_adapt"):
        dataset = dataclasses.replace(cfg.dataset, **{variable: int(value)})
        return dataclasses.replace(cfg, dataset=dataset)
    if variable == "adapt_steps":
        return dataclasses.replace(cfg, meta=dataclasses.replace(cfg.meta, adapt_steps=int(value)))
    if variable == "snr_db":
        return dataclasses.replace(cfg, sim=dataclasses.replace(cfg.sim, snr_db=float(value)))
    raise ConfigurationError(f"cannot sweep variable {variable!r}")


def run_experiment(cfg: ExperimentConfig, master_seed: int, methods=None,
                   out_dir=None) -> list:
    """Run a sweep (or a single point) and optionally write CSV + manifest.

    Master seeds for the sweep's repetitions are master_seed, +1, +2, …;
    rows are ordered by (sweep value, seed, method) so reruns are byte
    identical.
    """
    points = ([(None, cfg)] if cfg.sweep.variable is None else
              [(v, apply_sweep_value(cfg, cfg.sweep.variable, v)) for v in cfg.sweep.values])
    seeds = [master_seed + i for i in range(cfg.sweep.n_seeds)]
    reports = []
    cache: dict = {}
    for value, point_cfg in points:
        for seed in seeds:
            for report in run_point(point_cfg, seed, methods, _cache=cache):
                if value is not None:
                    report.config_echo["sweep_variable"] = cfg.sweep.variable
                    report.config_echo["sweep_value"] = value
                reports.append(report)
    reports.sort(key=lambda r: (r.config_echo.get("sweep_value", 0),
                                r.config_echo["seed"], r.method))
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        csv_path = os.path.join(out_dir, "results.csv")
        write_results_csv(csv_path, reports)
        manifest = RunManifest(config_hash=config_hash(cfg), seed=master_seed,
                               artifacts={"results": csv_path}, version=__version__)
        manifest.write(os.path.join(out_dir, "manifest.json"))
    return reports
