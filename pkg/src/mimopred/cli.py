"""Command line front end.

Subcommands mirror the pipeline stages: ``simulate`` writes channel
traces, ``denoise`` cleans a trace file, ``meta-train`` produces a
predictor checkpoint plus its training log, ``adapt`` fine-tunes a
checkpoint per target user, ``evaluate`` scores methods at one
experiment point, ``sweep`` runs the configured sweep, and ``flops``
prints the cost model.  Errors exit with category codes: configuration
2, data 3, numeric 4.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import os
import sys

from . import __version__
from .channel import LsTrace, load_traces, save_traces
from .config import RunManifest, config_hash, desk_config, load_config
from .datasets import pairs_to_arrays
from .denoise import denoise
from .errors import WorkbenchError
from .evaluation import flops_dip, flops_maml, write_results_csv
from .experiment import (METHODS, build_all_datasets, default_methods, mlp_spec,
                         run_experiment, run_point, simulate_ues, target_ids)
from .models import load_checkpoint, save_checkpoint
from .seeding import derive_seed
from .training import adapt, meta_train
from .denoise import padded_len


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mimopred",
                                     description="Few-shot adaptive channel prediction workbench")
    parser.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="config file (default: desk preset)")
    common.add_argument("--seed", type=int, default=0, metavar="N", help="master seed")
    common.add_argument("--out", metavar="DIR", help="output directory")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("simulate", parents=[common], help="write true and estimated traces")
    p = sub.add_parser("denoise", parents=[common], help="denoise a trace file")
    p.add_argument("traces", help="input trace container")
    sub.add_parser("meta-train", parents=[common], help="meta-train and checkpoint the predictor")
    p = sub.add_parser("adapt", parents=[common], help="fine-tune a checkpoint per target user")
    p.add_argument("checkpoint", help="predictor checkpoint")
    p = sub.add_parser("evaluate", parents=[common], help="score methods at one point")
    p.add_argument("--method", choices=METHODS, help="restrict to one method")
    sub.add_parser("sweep", parents=[common], help="run the configured sweep")
    sub.add_parser("flops", parents=[common], help="print the cost model")
    return parser


def _config(args):
    return load_config(args.config) if args.config else desk_config()


def _out_dir(args, cfg) -> str:
    out = args.out if args.out else cfg.output_dir
    os.makedirs(out, exist_ok=True)
    return out


def _write_manifest(out: str, cfg, seed: int, artifacts: dict) -> None:
    manifest = RunManifest(config_hash=config_hash(cfg), seed=seed, artifacts=artifacts,
                           version=__version__)
    manifest.write(os.path.join(out, "manifest.json"))


def _write_log(path: str, history) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("iteration", "support_loss", "query_loss"))
        for it, sup, que in history:
            writer.writerow((it, repr(sup), repr(que)))


def _cmd_simulate(args) -> int:
    cfg = _config(args)
    out = _out_dir(args, cfg)
    true_by_ue, ls_by_ue = simulate_ues(cfg, args.seed)
    order = sorted(true_by_ue)
    true_path = os.path.join(out, "traces_true.mch")
    ls_path = os.path.join(out, "traces_ls.mch")
    save_traces(true_path, [true_by_ue[u].h for u in order])
    save_traces(ls_path, [ls_by_ue[u].h_ls for u in order])
    _write_manifest(out, cfg, args.seed, {"traces_true": true_path, "traces_ls": ls_path})
    print(f"wrote {len(order)} traces to {true_path} and {ls_path}")
    return 0


def _cmd_denoise(args) -> int:
    cfg = _config(args)
    out = _out_dir(args, cfg)
    matrices = load_traces(args.traces)
    cleaned, artifacts = [], {}
    for idx, mat in enumerate(matrices):
        trace = LsTrace(ue_id=idx, h_ls=mat, snr_db=cfg.sim.snr_db)
        result, run = denoise(trace, depth=cfg.dip.depth, filters=cfg.dip.filters,
                              n_iter=cfg.dip.n_iter, lr=cfg.dip.lr,
                              seed=derive_seed(args.seed, "dip", idx))
        cleaned.append(result.h_ls)
        log_path = os.path.join(out, f"dip_loss_ue{idx}.csv")
        with open(log_path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(("iteration", "objective"))
            for i, value in enumerate(run.loss_history, start=1):
                writer.writerow((i, repr(value)))
        artifacts[f"dip_loss_ue{idx}"] = log_path
    out_path = os.path.join(out, "traces_denoised.mch")
    save_traces(out_path, cleaned)
    artifacts["traces_denoised"] = out_path
    _write_manifest(out, cfg, args.seed, artifacts)
    print(f"denoised {len(cleaned)} traces into {out_path}")
    return 0


def _cmd_meta_train(args) -> int:
    cfg = _config(args)
    out = _out_dir(args, cfg)
    true_by_ue, ls_by_ue = simulate_ues(cfg, args.seed)
    tasks, _ = build_all_datasets(ls_by_ue, true_by_ue, cfg, derive_seed(args.seed, "data"))
    meta_cfg = dataclasses.replace(cfg.meta, seed=args.seed)
    params, history = meta_train(tasks, mlp_spec(cfg), meta_cfg)
    ckpt_path = os.path.join(out, "maml.mpr")
    log_path = os.path.join(out, "training_log.csv")
    save_checkpoint(ckpt_path, params)
    _write_log(log_path, history)
    _write_manifest(out, cfg, args.seed, {"checkpoint": ckpt_path, "training_log": log_path})
    print(f"meta-trained on {len(tasks)} tasks; checkpoint at {ckpt_path}")
    return 0


def _cmd_adapt(args) -> int:
    cfg = _config(args)
    out = _out_dir(args, cfg)
    params = load_checkpoint(args.checkpoint, expected_spec=mlp_spec(cfg))
    true_by_ue, ls_by_ue = simulate_ues(cfg, args.seed)
    _, targets = build_all_datasets(ls_by_ue, true_by_ue, cfg, derive_seed(args.seed, "data"))
    artifacts = {}
    for target in targets:
        tuned = adapt(params, target.adapt, cfg.meta.inner_lr, cfg.meta.adapt_steps) \
            if target.adapt else params.clone()
        path = os.path.join(out, f"adapted_ue{target.ue_id}.mpr")
        save_checkpoint(path, tuned)
        artifacts[f"adapted_ue{target.ue_id}"] = path
    _write_manifest(out, cfg, args.seed, artifacts)
    print(f"adapted to {len(targets)} target users in {out}")
    return 0


def _cmd_evaluate(args) -> int:
    cfg = _config(args)
    out = _out_dir(args, cfg)
    methods = (args.method,) if args.method else None
    reports = run_point(cfg, args.seed, methods)
    csv_path = os.path.join(out, "results.csv")
    write_results_csv(csv_path, reports)
    _write_manifest(out, cfg, args.seed, {"results": csv_path})
    for r in reports:
        print(f"{r.method}: nmse {r.nmse_db:+.2f} dB, sum rate {r.sum_rate_bits:.2f} b/s/Hz")
    return 0


def _cmd_sweep(args) -> int:
    cfg = _config(args)
    out = _out_dir(args, cfg)
    reports = run_experiment(cfg, args.seed, out_dir=out)
    print(f"wrote {len(reports)} rows to {os.path.join(out, 'results.csv')}")
    return 0


def _cmd_flops(args) -> int:
    cfg = _config(args)
    m = cfg.sim.n_antennas
    n_tasks = cfg.dataset.tasks_per_ue * cfg.dataset.n_source_ue
    report = flops_maml(n_epoch=cfg.meta.n_epoch, n_tasks=n_tasks,
                        samples_per_task=cfg.dataset.n_support + cfg.dataset.n_query,
                        adapt_steps=cfg.meta.adapt_steps, n_adapt=cfg.dataset.n_adapt,
                        n_test=cfg.dataset.n_test, width_ratio=cfg.mlp.hidden_width // m,
                        order=cfg.dataset.order, hidden_layers=cfg.mlp.hidden_layers,
                        n_antennas=m)
    time_len = padded_len(cfg.sim.n_slots, cfg.dip.depth)
    dip = flops_dip(cfg.dip.n_iter, time_len, cfg.dip.filters, m)
    print(f"train: {report.train}")
    print(f"adapt: {report.adapt}")
    print(f"test:  {report.test}")
    print(f"total: {report.total}")
    print(f"dip (per trace): {dip}")
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "denoise": _cmd_denoise,
    "meta-train": _cmd_meta_train,
    "adapt": _cmd_adapt,
    "evaluate": _cmd_evaluate,
    "sweep": _cmd_sweep,
    "flops": _cmd_flops,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except WorkbenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
