"""Command-line surface: dataset preparation, synthesis, training,
evaluation, online fine-tuning, the ablation matrix, and gradient checking.

Config files are line-oriented ``key = value``; command-line flags override
file values. Every run writes its manifest before doing work, and every CSV
report carries the manifest hash as a comment line, with a rendered figure
saved next to it. Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import plots
from .config import RunManifest, file_hash, parse_config_file, resolve_config, write_csv
from .data import (
    add_inverse_relations,
    check_against_known,
    load_quadruples,
    save_dataset,
    summarize,
)
from .errors import CenError, DataError
from .evaluator import evaluate
from .gradcheck import run_checks
from .model import CenModel
from .online import OnlineConfig, run_online
from .synth import SynthConfig, default_templates, synth_generate
from .trainer import TrainConfig, run_curriculum

log = logging.getLogger(__name__)

DEFAULTS = {
    # model
    "dim": 200,
    "max_len": 10,
    "min_len": 3,
    "num_kernels": 50,
    "kernel_width": 3,
    "layers": 2,
    "dropout": 0.2,
    "rgcn_activation": "relu",
    "fcn_activation": "relu",
    "normalize_embed": True,
    # offline training
    "lr": 0.001,
    "epochs_per_stage": 30,
    "patience": 3,
    "grad_clip": 1.0,
    # online fine-tuning
    "online_epochs": 30,
    "online_lr": 0.001,
    "tr_weight": 0.01,
    "valid_offset": 2,
    # shared
    "seed": 0,
    "data_dir": None,
    # synthetic generator
    "entities": 200,
    "relations": 10,
    "timestamps": 120,
    "lengths": [1, 2, 3, 4],
    "instances": 2,
    "instance_prob": 1.0,
    "noise": 0.2,
    "drift": 80,
    "t1": None,
    "t2": None,
}


def _load_config(args) -> dict:
    file_cfg = parse_config_file(args.config) if getattr(args, "config", None) else {}
    overrides = {}
    for key in ("seed",):
        if getattr(args, key, None) is not None:
            overrides[key] = getattr(args, key)
    if getattr(args, "data_dir", None):
        overrides["data_dir"] = args.data_dir
    return resolve_config(DEFAULTS, file_cfg, overrides)


def _dataset_from(cfg: dict, args, augment: bool = True):
    data_dir = getattr(args, "data_dir", None) or cfg.get("data_dir")
    if not data_dir:
        raise DataError("no dataset: pass --data-dir or set data_dir in the config")
    d = Path(data_dir)
    stat = d / "stat.txt"
    data = load_quadruples(
        d / "train.txt", d / "valid.txt", d / "test.txt",
        stat_path=stat if stat.exists() else None,
    )
    return add_inverse_relations(data) if augment else data


def _input_hashes(cfg: dict, args) -> dict[str, str]:
    hashes = {}
    if getattr(args, "config", None):
        hashes[str(args.config)] = file_hash(args.config)
    data_dir = getattr(args, "data_dir", None) or cfg.get("data_dir")
    if data_dir:
        for name in ("train.txt", "valid.txt", "test.txt", "stat.txt"):
            p = Path(data_dir) / name
            if p.exists():
                hashes[str(p)] = file_hash(p)
    if getattr(args, "checkpoint", None):
        hashes[str(args.checkpoint)] = file_hash(args.checkpoint)
    return hashes


def _train_config(cfg: dict, no_curriculum: bool, single_channel: bool) -> TrainConfig:
    return TrainConfig(
        dim=cfg["dim"], max_len=cfg["max_len"], min_len=cfg["min_len"],
        num_kernels=cfg["num_kernels"], kernel_width=cfg["kernel_width"],
        layers=cfg["layers"], dropout=cfg["dropout"], lr=cfg["lr"],
        epochs_per_stage=cfg["epochs_per_stage"], patience=cfg["patience"],
        grad_clip=cfg["grad_clip"], seed=cfg["seed"],
        rgcn_activation=cfg["rgcn_activation"], fcn_activation=cfg["fcn_activation"],
        normalize_embed=cfg["normalize_embed"],
        no_curriculum=no_curriculum, single_channel=single_channel,
    )


def _online_config(cfg: dict, no_tr: bool, tr_weight: float | None) -> OnlineConfig:
    return OnlineConfig(
        epochs=cfg["online_epochs"],
        tr_weight=cfg["tr_weight"] if tr_weight is None else tr_weight,
        lr=cfg["online_lr"], valid_offset=cfg["valid_offset"],
        grad_clip=cfg["grad_clip"], no_tr=no_tr,
    )


def _synth_config(cfg: dict) -> SynthConfig:
    lengths = cfg["lengths"] if isinstance(cfg["lengths"], list) else [cfg["lengths"]]
    drift = cfg["drift"]
    templates = default_templates(
        lengths,
        instances_per_time=cfg["instances"],
        instance_prob=cfg["instance_prob"],
        with_drift=drift is not None,
        num_relations=cfg["relations"],
    )
    return SynthConfig(
        num_entities=cfg["entities"], num_relations=cfg["relations"],
        num_timestamps=cfg["timestamps"], templates=templates,
        drift_time=drift, noise_rate=cfg["noise"], seed=cfg["seed"],
        t1=cfg["t1"], t2=cfg["t2"],
    )


# ---------------------------------------------------------------------------
# commands

def cmd_prepare(args) -> int:
    cfg = _load_config(args)
    data = _dataset_from(cfg, args, augment=False)
    augmented = add_inverse_relations(data)
    print(summarize(data))
    print(f"augmented relations={augmented.num_relations_total}")
    if args.expect:
        for warning in check_against_known(data, args.expect):
            print(f"warning: {warning}", file=sys.stderr)
    return 0


def cmd_synth(args) -> int:
    cfg = _load_config(args)
    out = Path(args.out)
    manifest = RunManifest("synth", cfg, cfg["seed"], _input_hashes(cfg, args))
    scfg = _synth_config(cfg)
    dataset, pattern_log = synth_generate(scfg)
    out.mkdir(parents=True, exist_ok=True)
    manifest.outputs = [str(out / n) for n in
                        ("train.txt", "valid.txt", "test.txt", "stat.txt", "pattern_log.txt")]
    manifest.write(out / "manifest.json")
    save_dataset(dataset, out)
    pattern_log.write(out / "pattern_log.txt")
    print(summarize(dataset))
    print(f"planted instances={len(pattern_log.instances)}")
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(args)
    out = Path(args.out)
    tcfg = _train_config(cfg, args.no_curriculum, args.single_channel)
    data = _dataset_from(cfg, args)
    manifest = RunManifest("train", cfg, cfg["seed"], _input_hashes(cfg, args))
    manifest.outputs = [str(out / "checkpoint.cen"), str(out / "train_log.csv"),
                        str(out / "train_curve.png")]
    mhash = manifest.write(out / "manifest.json")

    rows: list[dict] = []
    model, state = run_curriculum(data, tcfg, log_rows=rows)
    model.save(out / "checkpoint.cen")
    write_csv(out / "train_log.csv", rows, mhash,
              columns=["stage", "k", "epoch", "train_loss", "valid_mrr"])
    if rows:
        plots.save_training_curves(rows, out / "train_curve.png")
    print(f"chosen_len={state.chosen_len} best_valid_mrr={state.best_mrr:.4f}")
    for k, mrr in sorted(state.stage_history.items()):
        print(f"stage k={k}: valid_mrr={mrr:.4f}")
    return 0


def cmd_eval(args) -> int:
    cfg = _load_config(args)
    out = Path(args.out)
    data = _dataset_from(cfg, args)
    tcfg = _train_config(cfg, False, args.single_channel)
    model = CenModel.load(args.checkpoint, tcfg.model_config(data),
                          num_channels=args.channels)
    manifest = RunManifest("eval", cfg, cfg["seed"], _input_hashes(cfg, args))
    manifest.outputs = [str(out / "eval_metrics.csv"), str(out / "eval_metrics.png")]
    mhash = manifest.write(out / "manifest.json")

    threads = 1 if args.deterministic else None
    report = evaluate(model, data, split=args.split, mode=args.mode,
                      tie_rule=args.tie_rule, threads=threads)
    print(report.table())
    rows = [{"split": args.split, "mode": args.mode, **report.row()}]
    for name, sub in report.directions.items():
        rows.append({"split": f"{args.split}/{name}", "mode": args.mode, **sub.row()})
    write_csv(out / "eval_metrics.csv", rows, mhash,
              columns=["split", "mode", "mrr", "h1", "h3", "h10", "count"])
    plots.save_metric_bars(report.row(), out / "eval_metrics.png",
                           title=f"{args.split} ({args.mode})")
    return 0


def cmd_online(args) -> int:
    cfg = _load_config(args)
    out = Path(args.out)
    data = _dataset_from(cfg, args)
    tcfg = _train_config(cfg, False, args.single_channel)
    ocfg = _online_config(cfg, args.no_tr, getattr(args, "tr_weight", None))
    model = CenModel.load(args.checkpoint, tcfg.model_config(data),
                          num_channels=args.channels)
    manifest = RunManifest("online", cfg, cfg["seed"], _input_hashes(cfg, args))
    manifest.outputs = [str(out / "online_log.csv"), str(out / "online_metrics.png")]
    mhash = manifest.write(out / "manifest.json")

    rows: list[dict] = []
    report = run_online(model, data, ocfg, rows=rows)
    print(report.table())
    write_csv(out / "online_log.csv", rows, mhash,
              columns=["t", "mrr", "h1", "h3", "h10", "epochs_used"])
    if rows:
        plots.save_online_timeline(rows, out / "online_metrics.png")
    write_csv(out / "online_aggregate.csv",
              [{"split": "test-online", **report.row()}], mhash,
              columns=["split", "mrr", "h1", "h3", "h10", "count"])
    return 0


def cmd_ablate(args) -> int:
    cfg = _load_config(args)
    out = Path(args.out)
    data = _dataset_from(cfg, args)
    manifest = RunManifest("ablate", cfg, cfg["seed"], _input_hashes(cfg, args))
    manifest.outputs = [str(out / "ablation.csv"), str(out / "ablation.png")]
    mhash = manifest.write(out / "manifest.json")

    def pretrain(no_curriculum: bool, single_channel: bool) -> CenModel:
        tcfg = _train_config(cfg, no_curriculum, single_channel)
        model, _ = run_curriculum(data, tcfg)
        return model

    def online_of(model: CenModel, no_tr: bool):
        snapshot = model.state()
        report = run_online(model, data, _online_config(cfg, no_tr, None))
        model.load_state(snapshot)
        return report

    rows = []
    full_model = pretrain(False, False)
    for variant, report in (
        ("full", online_of(full_model, no_tr=False)),
        ("-TR", online_of(full_model, no_tr=True)),
        ("-CL", online_of(pretrain(True, False), no_tr=False)),
        ("-LA", online_of(pretrain(False, True), no_tr=False)),
    ):
        rows.append({"variant": variant, **report.row()})
        print(f"{variant:5s} mrr={report.mrr:.4f} h1={report.hits1:.4f} "
              f"h3={report.hits3:.4f} h10={report.hits10:.4f}")
    write_csv(out / "ablation.csv", rows, mhash,
              columns=["variant", "mrr", "h1", "h3", "h10", "count"])
    plots.save_ablation_bars(rows, out / "ablation.png")
    return 0


def cmd_gradcheck(args) -> int:
    worst = run_checks(base_seed=args.seed or 0, trials=args.trials)
    print(f"max relative gradient error over {args.trials} instances: {worst:.3e}")
    return 0 if worst <= 1e-4 else 1


# ---------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cen",
        description="Temporal KG reasoning: length-aware history encoding, "
                    "curriculum training, online fine-tuning.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data=True, run_out=True):
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--deterministic", action="store_true",
                       help="force single-threaded evaluation")
        if data:
            p.add_argument("--data-dir", help="directory with train/valid/test.txt")
        if run_out:
            p.add_argument("--out", default="runs/latest", help="output directory")

    p = sub.add_parser("prepare", help="load, validate, and summarize a dataset")
    common(p, run_out=False)
    p.add_argument("--expect", choices=["icews14", "icews18", "wiki"],
                   help="warn if statistics differ from this public dataset")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("synth", help="generate a synthetic planted-pattern dataset")
    common(p, data=False)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="curriculum-train an offline model")
    common(p)
    p.add_argument("--no-curriculum", action="store_true")
    p.add_argument("--single-channel", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", default="test", choices=["train", "valid", "test"])
    p.add_argument("--mode", default="time-filtered", choices=["raw", "time-filtered"])
    p.add_argument("--tie-rule", default="optimistic",
                   choices=["optimistic", "mean", "pessimistic"])
    p.add_argument("--single-channel", action="store_true")
    p.add_argument("--channels", type=int, default=None,
                   help="decoded history lengths (needed for single-channel checkpoints)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("online", help="online fine-tuning over the post-training range")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--no-tr", action="store_true")
    p.add_argument("--lambda", dest="tr_weight", type=float, default=None,
                   help="anchor penalty weight")
    p.add_argument("--single-channel", action="store_true")
    p.add_argument("--channels", type=int, default=None)
    p.set_defaults(func=cmd_online)

    p = sub.add_parser("ablate", help="compare {full, -CL, -LA, -TR} on one dataset")
    common(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("gradcheck", help="randomized end-to-end gradient check")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=10)
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CenError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
