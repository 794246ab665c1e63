"""Command-line entry point: ``heavytail <subcommand>``.

Exit status: 0 on success, 1 for usage/config errors, 2 for runtime errors.
"""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from .config import ConfigError, Settings, dump_settings, load_settings
from .data import DatasetError, LongTailDataset, generate_balanced, generate_synthetic, load_dataset, save_dataset
from .evaluate import EvalReport, Table, ablation_table, compare, evaluate, export_embeddings
from .model import CheckpointError, load_checkpoint, save_checkpoint
from .trainer import ABLATION_ARMS, METHODS, TrainConfig, arm_config, resolve_partition, train

log = logging.getLogger("heavytail")

CHECKPOINT = "checkpoint.ckpt"
RUN_RECORD = "run_record.jsonl"
REPORT = "report.json"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _seed_list(text: str) -> list[int]:
    try:
        return [int(s) for s in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"seeds must be integers: {text!r}") from None


def _common(p: argparse.ArgumentParser, out_required: bool = True) -> None:
    p.add_argument("--config", help="key=value config file with [sections]")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override a config value (repeatable)")
    p.add_argument("--out", required=out_required, help="output directory")
    p.add_argument("--seed", dest="seeds", action="append", type=_seed_list, metavar="N[,N...]",
                   help="run seed(s); repeatable or comma-separated")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="heavytail", description="Single-stage long-tailed classification toolkit")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="write a synthetic long-tailed train set and a balanced test set")
    _common(p)

    p = sub.add_parser("train", help="train one method per seed")
    _common(p)
    p.add_argument("--method", choices=METHODS, help="training method (default from config)")

    p = sub.add_parser("eval", help="evaluate trained runs on the test set")
    _common(p)
    p.add_argument("--method", help="run label under --out to evaluate (default: config method)")
    p.add_argument("--checkpoint", help="evaluate this checkpoint instead of discovering one")

    p = sub.add_parser("compare", help="train and evaluate baseline_ce, ros, rus and ours")
    _common(p)
    p.add_argument("--method", dest="methods", action="append", choices=METHODS,
                   help="restrict to these methods (repeatable)")
    p.add_argument("--jobs", type=int, help="parallel runs")

    p = sub.add_parser("ablation", help="train and evaluate the five component arms")
    _common(p)
    p.add_argument("--jobs", type=int, help="parallel runs")

    p = sub.add_parser("export-embeddings", help="write normalized features for plotting")
    _common(p, out_required=False)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", help="dataset file (default: the configured test set)")
    p.add_argument("--classes", type=_seed_list, help="comma-separated class filter")
    p.add_argument("--output", required=True, help="embedding file to write")
    return parser


# --- helpers --------------------------------------------------------------

def _settings(args) -> Settings:
    s = load_settings(args.config, args.overrides)
    if getattr(args, "seeds", None):
        s = replace(s, seeds=tuple(x for group in args.seeds for x in group))
    if getattr(args, "jobs", None):
        s = replace(s, jobs=args.jobs)
    if s.jobs < 1:
        raise ConfigError("jobs must be >= 1")
    return s


def load_data(s: Settings) -> tuple[LongTailDataset, LongTailDataset]:
    d = s.data
    if d.train:
        tr = load_dataset(d.train)
    else:
        tr = generate_synthetic(d.num_classes, d.n_max, d.imbalance_factor, d.feature_dim, d.seed, d.separation)
    if d.test:
        te = load_dataset(d.test)
    elif d.train:
        raise ConfigError("data.test is required when data.train is a file")
    else:
        te = generate_balanced(d.num_classes, d.test_per_class, d.feature_dim, d.seed, d.separation)
    return tr, te


def run_dir(out, label: str, seed: int) -> Path:
    return Path(out) / label / str(seed)


def _train_one(tr: LongTailDataset, te: LongTailDataset, cfg: TrainConfig, out) -> EvalReport:
    d = run_dir(out, cfg.label, cfg.seed)
    d.mkdir(parents=True, exist_ok=True)
    model, record = train(tr, cfg)
    save_checkpoint(model, d / CHECKPOINT)
    record.checkpoint = CHECKPOINT
    record.save(d / RUN_RECORD)
    part = resolve_partition(tr, cfg)
    report = evaluate(model, te, part, cfg.label, [cfg.seed])
    eis, cn, il = cfg.components
    report.toggles = {"eis": eis, "cn": cn, "iloss": il}
    report.save(d / REPORT)
    log.info("%s seed=%d overall=%.2f head=%.2f tail=%.2f", cfg.label, cfg.seed, report.overall, report.head, report.tail)
    return report


def _run_many(tr, te, cfgs: Sequence[TrainConfig], out, jobs: int) -> list[EvalReport]:
    if jobs == 1:
        return [_train_one(tr, te, c, out) for c in cfgs]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(lambda c: _train_one(tr, te, c, out), cfgs))


def _prepare_out(out, s: Settings) -> Path:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(dump_settings(s), encoding="utf-8")
    return out


def _write_table(table: Table, out, stem: str) -> None:
    Path(out, f"{stem}.txt").write_text(table.to_text() + "\n", encoding="utf-8")
    Path(out, f"{stem}.jsonl").write_text(table.to_jsonl(), encoding="utf-8")
    print(table.to_text())


# --- subcommands ----------------------------------------------------------

def cmd_generate(args) -> int:
    s = _settings(args)
    if args.seeds:
        s = replace(s, data=replace(s.data, seed=s.seeds[0]))
    d = s.data
    tr = generate_synthetic(d.num_classes, d.n_max, d.imbalance_factor, d.feature_dim, d.seed, d.separation)
    te = generate_balanced(d.num_classes, d.test_per_class, d.feature_dim, d.seed, d.separation)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_dataset(tr, out / "train.ltds")
    save_dataset(te, out / "test.ltds")
    print(f"train: {len(tr)} examples, {tr.num_classes} classes, N_max={tr.n_max}, N_min={tr.n_min}")
    print(tr.histogram())
    return 0


def cmd_train(args) -> int:
    s = _settings(args)
    base = s.train if args.method is None else replace(s.train, method=args.method)
    tr, te = load_data(s)
    if base.components[2]:
        resolve_partition(tr, base)
    out = _prepare_out(args.out, replace(s, train=base))
    for seed in s.seeds:
        cfg = replace(base, seed=seed)
        d = run_dir(out, cfg.label, seed)
        d.mkdir(parents=True, exist_ok=True)
        model, record = train(tr, cfg)
        save_checkpoint(model, d / CHECKPOINT)
        record.checkpoint = CHECKPOINT
        record.save(d / RUN_RECORD)
        print(f"{cfg.label} seed={seed}: final ce={record.epochs[-1].ce:.4f} -> {d}")
    return 0


def cmd_eval(args) -> int:
    s = _settings(args)
    tr, te = load_data(s)
    part = resolve_partition(tr, s.train)
    label = args.method or s.train.label
    if args.checkpoint:
        targets = [(Path(args.checkpoint), None)]
    else:
        targets = [(run_dir(args.out, label, seed) / CHECKPOINT, seed) for seed in s.seeds]
    reports = []
    for path, seed in targets:
        if not path.exists():
            raise FileNotFoundError(f"no checkpoint at {path}; run `heavytail train` first")
        model = load_checkpoint(path)
        meta = model.meta or {}
        seed = seed if seed is not None else int(meta.get("seed", 0))
        report = evaluate(model, te, part, meta.get("label", label), [seed])
        report.save(path.parent / REPORT)
        reports.append(report)
    table = compare(reports)
    print(table.to_text())
    return 0


def cmd_compare(args) -> int:
    s = _settings(args)
    tr, te = load_data(s)
    methods = args.methods or list(METHODS)
    cfgs = [replace(s.train, method=m, eis=True, cn=True, iloss=True, seed=seed) for m in methods for seed in s.seeds]
    if "ours" in methods:
        resolve_partition(tr, s.train)
    out = _prepare_out(args.out, s)
    reports = _run_many(tr, te, cfgs, out, s.jobs)
    _write_table(compare(reports), out, "compare")
    return 0


def cmd_ablation(args) -> int:
    s = _settings(args)
    tr, te = load_data(s)
    cfgs = [replace(arm_config(s.train, e, c, i), seed=seed) for _, e, c, i in ABLATION_ARMS for seed in s.seeds]
    resolve_partition(tr, s.train)
    out = _prepare_out(args.out, s)
    reports = _run_many(tr, te, cfgs, out, s.jobs)
    _write_table(ablation_table(reports), out, "ablation")
    return 0


def cmd_export_embeddings(args) -> int:
    s = _settings(args)
    model = load_checkpoint(args.checkpoint)
    ds = load_dataset(args.data) if args.data else load_data(s)[1]
    n = export_embeddings(model, ds, args.output, args.classes)
    print(f"wrote {n} embeddings to {args.output}")
    return 0


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "eval": cmd_eval,
    "compare": cmd_compare,
    "ablation": cmd_ablation,
    "export-embeddings": cmd_export_embeddings,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"heavytail: error: {e}", file=sys.stderr)
        return 1
    except SystemExit as e:  # --help
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as e:
        print(f"heavytail: config error: {e}", file=sys.stderr)
        return 1
    except (DatasetError, CheckpointError, FileNotFoundError, ValueError, ArithmeticError, OSError) as e:
        print(f"heavytail: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
