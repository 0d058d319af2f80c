"""Command-line entry point: ``compass <subcommand> --config FILE [--set section.key=value ...]``.

Exit status 0 on success, 1 on usage or configuration errors, 2 when the
pipeline itself fails.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
import time

from . import config as C
from .evaluator import ablation_csv, ablation_markdown, geometry_metrics, sweep_ablation, sweep_subsets
from .gradcheck_suite import CHECKS, TOL, run_all
from .losses import LossWeights
from .model import CompassModel
from .numerics import checkpoint
from .synthdata import Dataset, generate, read_dataset, write_dataset
from .trainer import train

log = logging.getLogger("compass")

SUBCOMMANDS = ("gen-data", "train", "eval", "ablate", "geometry", "gradcheck")
RESOLVED_NAME = "resolved_config.ini"
SPEC_STAMP = "dataset.ini"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse exits 2 by default; usage problems are validation errors here
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="compass", description="Slot-complete missing-modality fusion on synthetic data.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = parser.add_subparsers(dest="command", metavar="{" + ",".join(SUBCOMMANDS) + "}", parser_class=_Parser)

    def with_config(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="run file, or preset:NAME (" + ", ".join(C.PRESETS) + ")")
        p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE", dest="overrides")
        return p

    with_config("gen-data", "write the cached train/val/test splits")
    with_config("train", "train and keep the best-validation checkpoint")
    p = with_config("eval", "accuracy for every observed subset")
    p.add_argument("--fill", choices=("proxy", "zero"), default="proxy")
    p.add_argument("--split", choices=("val", "test"), default="test")
    p.add_argument("--checkpoint", help="defaults to <checkpoints>/best.cmps")
    p = with_config("ablate", "full vs zero-fill vs no-auxiliary-loss reports")
    p.add_argument("--split", choices=("val", "test"), default="test")
    p = with_config("geometry", "class compactness and separation of global tokens")
    p.add_argument("--split", choices=("val", "test"), default="test")
    p.add_argument("--checkpoint")
    p = sub.add_parser("gradcheck", help="finite-difference checks of every primitive and loss")
    p.add_argument("--tol", type=float, default=TOL)
    p.add_argument("--only", action="append", choices=sorted(CHECKS), metavar="NAME")
    p.add_argument("--seed", type=int, default=0)
    return parser


# -- helpers ------------------------------------------------------------------------
def _dataset_stamp(cfg: C.RunConfig) -> str:
    return C.RunConfig(dataset=cfg.dataset, model=cfg.model, masking=cfg.masking).to_ini().split("\n\n")[0] + "\n"


def prepare_data(cfg: C.RunConfig, force: bool = False) -> Dataset:
    """Read the cached splits, (re)writing them first when absent or stale.

    Training always reads back from the float32 cache so a run behaves the
    same whether or not ``gen-data`` ran first.
    """
    directory = cfg.paths.path("data")
    stamp_path = os.path.join(directory, SPEC_STAMP)
    stamp = _dataset_stamp(cfg)
    current = None
    if os.path.isfile(stamp_path):
        with open(stamp_path) as fh:
            current = fh.read()
    if force or current != stamp:
        write_dataset(generate(cfg.dataset), directory)
        with open(stamp_path, "w") as fh:
            fh.write(stamp)
        log.info("wrote dataset cache to %s", directory)
    return read_dataset(cfg.dataset, directory)


def _load_model(cfg: C.RunConfig, path: str) -> CompassModel:
    if not os.path.isfile(path):
        raise FileNotFoundError(f"checkpoint not found: {path} (run 'train' first)")
    model = CompassModel(cfg.model)
    model.load_state_dict(checkpoint.load(path))
    return model


def _write(directory: str, name: str, text: str) -> str:
    os.makedirs(directory, exist_ok=True)
    path = os.path.join(directory, name)
    with open(path, "w") as fh:
        fh.write(text)
    return path


def _train_variant(cfg: C.RunConfig, data: Dataset, weights: LossWeights, ckpt_dir: str, log_name: str):
    model = CompassModel(cfg.model)
    tcfg = cfg.train_config(ckpt_dir, os.path.join(cfg.paths.resolved_root(), log_name))
    result = train(data, model, tcfg, weights, cfg.masking)
    return model, result


# -- subcommands -------------------------------------------------------------------
def cmd_gen_data(cfg, args) -> None:
    ds = prepare_data(cfg, force=True)
    for name in ("train", "val", "test"):
        print(f"{name}: {len(getattr(ds, name))} samples")
    print(f"cache: {cfg.paths.path('data')}")


def cmd_train(cfg, args) -> None:
    data = prepare_data(cfg)
    start = time.perf_counter()
    _, result = _train_variant(cfg, data, cfg.losses, cfg.paths.path("checkpoints"), cfg.paths.log)
    print(f"best val acc {result.best_val_acc:.4f} at epoch {result.best_epoch} ({time.perf_counter() - start:.1f}s)")
    print(f"checkpoints: {cfg.paths.path('checkpoints')}")


def cmd_eval(cfg, args) -> None:
    data = prepare_data(cfg)
    model = _load_model(cfg, args.checkpoint or os.path.join(cfg.paths.path("checkpoints"), "best.cmps"))
    report = sweep_subsets(getattr(data, args.split), model, fill=args.fill, label=args.fill)
    out = cfg.paths.path("reports")
    stem = f"subsets_{args.split}_{args.fill}"
    _write(out, stem + ".csv", report.to_csv())
    _write(out, stem + ".md", report.to_markdown())
    print(report.to_markdown(), end="")
    print(f"report: {os.path.join(out, stem)}.{{csv,md}}")


def cmd_ablate(cfg, args) -> None:
    data = prepare_data(cfg)
    full = _load_model(cfg, os.path.join(cfg.paths.path("checkpoints"), "best.cmps"))
    aux_dir = cfg.paths.path("ablation_checkpoints")
    aux_path = os.path.join(aux_dir, "best.cmps")
    if os.path.isfile(aux_path):
        no_aux = _load_model(cfg, aux_path)
    else:
        log.info("training the no-auxiliary-loss variant into %s", aux_dir)
        weights = dataclasses.replace(cfg.losses, lambda_a=0.0, lambda_s=0.0, lambda_p=0.0)
        no_aux, _ = _train_variant(cfg, data, weights, aux_dir, "train_log_no_aux.csv")
    reports = sweep_ablation(getattr(data, args.split), {"full": full, "proxy_no_align": no_aux})
    out = cfg.paths.path("reports")
    _write(out, f"ablation_{args.split}.csv", ablation_csv(reports))
    md = ablation_markdown(reports)
    _write(out, f"ablation_{args.split}.md", md)
    print(md, end="")


def cmd_geometry(cfg, args) -> None:
    data = prepare_data(cfg)
    model = _load_model(cfg, args.checkpoint or os.path.join(cfg.paths.path("checkpoints"), "best.cmps"))
    report = geometry_metrics(getattr(data, args.split), model)
    out = cfg.paths.path("reports")
    _write(out, f"geometry_{args.split}.csv", report.to_csv())
    _write(out, f"geometry_{args.split}.md", report.to_markdown())
    print(report.to_markdown(), end="")


def cmd_gradcheck(args) -> int:
    failed = 0
    total = time.perf_counter()
    for res, secs in run_all(seed=args.seed, tol=args.tol, names=args.only):
        status = "PASS" if res.passed else "FAIL"
        failed += not res.passed
        print(f"{status}  {res.name:<32} max rel err {res.max_rel_error:.2e}  ({secs:.2f}s)")
    print(f"{'all checks passed' if not failed else f'{failed} check(s) failed'} in {time.perf_counter() - total:.1f}s")
    return 0 if not failed else 2


_COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "geometry": cmd_geometry,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_usage() + "compass: error: a subcommand is required")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
        if args.command == "gradcheck":
            return cmd_gradcheck(args)
        cfg = C.load(args.config, args.overrides)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except C.ConfigError as exc:
        print(f"compass: config error: {exc}", file=sys.stderr)
        return 1
    try:
        cfg.write(os.path.join(cfg.paths.resolved_root(), RESOLVED_NAME))
        _COMMANDS[args.command](cfg, args)
    except Exception as exc:  # noqa: BLE001 - any pipeline failure maps to exit 2
        print(f"compass {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


def main() -> None:
    sys.exit(run())
