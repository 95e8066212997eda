"""Command-line entry point (``mdtk``)."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import datasets
from .config import TrainConfig
from .errors import ConfigError, FormatError
from .grid import HyperGrid, grid_search, report
from .nn import load_network, save_network
from .probe import GridSpec, boundary_metrics, export, probe, region_confidence
from .teachers import build_teacher, load_teacher, save_teacher
from .training import train

log = logging.getLogger("mdtk")


def _load_config(path, epochs=None) -> tuple[TrainConfig, dict]:
    raw = json.loads(Path(path).read_text())
    data = raw.pop("data", {"kind": "toy"})
    cfg = TrainConfig.from_dict(raw)
    if epochs is not None:
        cfg = replace(cfg, epochs=epochs)
    return cfg, data


def _load_data(data: dict, args):
    kind = args.data or data.get("kind", "toy")
    if kind == "toy":
        return datasets.generate_toy(datasets.ToySpec(**data.get("toy", {})))
    if kind == "mnist":
        directory = args.mnist_dir or data.get("dir")
        if not directory:
            raise ConfigError("MNIST data needs --mnist-dir or data.dir in the config")
        return datasets.load_mnist_dir(directory)
    if kind == "csv":
        train_csv = args.train_csv or data.get("train")
        test_csv = args.test_csv or data.get("test")
        if not train_csv:
            raise ConfigError("csv data needs --train-csv")
        test = datasets.read_toy_csv(test_csv, "test") if test_csv else None
        return datasets.read_toy_csv(train_csv, "train"), test
    raise ConfigError(f"unknown data kind {kind!r}")


def _write_record(rec, args) -> None:
    line = json.dumps(rec.to_dict(), sort_keys=True)
    if getattr(args, "record", None):
        Path(args.record).write_text(line + "\n")
    if getattr(args, "log", None):
        with open(args.log, "a") as f:
            f.write(line + "\n")
    print(f"{rec.method}: train_acc={rec.train_accuracy:.4f} test_acc={rec.test_accuracy} "
          f"epochs={rec.epochs_run} wall={rec.wall_time:.1f}s")


def cmd_gen_toy(args) -> None:
    spec = datasets.ToySpec(n_train=args.n_train, n_unseen=args.n_unseen, margin=args.margin,
                            amplitude=args.amplitude, seed=args.seed)
    tr, un = datasets.generate_toy(spec)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    datasets.write_toy_csv(tr, out / "train.csv")
    datasets.write_toy_csv(un, out / "unseen.csv")
    print(f"wrote {len(tr)} train and {len(un)} unseen points to {out}")


def cmd_train(args) -> None:
    cfg, data = _load_config(args.config, args.epochs)
    tr, te = _load_data(data, args)
    teacher = None
    if cfg.distill is not None and cfg.distill.teacher.kind != "self_snapshot":
        teacher = build_teacher(cfg.distill.teacher, tr, cfg)
    net, rec = train(cfg, tr, te, teacher=teacher)
    if args.out:
        save_network(net, args.out)
    _write_record(rec, args)


def cmd_build_teacher(args) -> None:
    cfg, data = _load_config(args.config, args.epochs)
    if cfg.distill is None:
        raise ConfigError("config has no distill.teacher section")
    tr, _ = _load_data(data, args)
    t = build_teacher(cfg.distill.teacher, tr, cfg)
    save_teacher(t, args.out)
    print(f"{cfg.distill.teacher.kind} teacher: {t.epochs} epochs, final loss {t.final_loss:.6g} -> {args.out}")


def cmd_distill(args) -> None:
    cfg, data = _load_config(args.config, args.epochs)
    if cfg.distill is None:
        raise ConfigError("config has no distill section")
    tr, te = _load_data(data, args)
    teacher = load_teacher(args.teacher)
    net, rec = train(cfg, tr, te, teacher=teacher)
    if args.out:
        save_network(net, args.out)
    _write_record(rec, args)


def cmd_probe(args) -> None:
    net = load_network(args.model)
    x0, x1, y0, y1 = args.range
    gs = GridSpec((x0, x1), (y0, y1), args.resolution)
    cg = probe(net, gs, workers=args.workers)
    for path in args.out:
        fmt = args.format or Path(path).suffix.lstrip(".")
        export(cg, fmt, path)
    metrics = boundary_metrics(cg, args.tube_threshold)
    metrics.update(region_confidence(cg, args.inner_box))
    print(json.dumps(metrics, indent=2, sort_keys=True))


def cmd_grid(args) -> None:
    cfg, data = _load_config(args.config, args.epochs)
    grid = HyperGrid.from_dict(json.loads(Path(args.grid).read_text()))
    tr, te = _load_data(data, args)
    recs = grid_search(grid, cfg, tr, te, args.log, workers=args.workers)
    print(f"{len(recs)} records in {args.log}")


def cmd_report(args) -> None:
    rows = report(args.log, args.metric)
    if args.json:
        out = [{k: (v.to_dict() if k == "best" else v) for k, v in r.items()} for r in rows]
        print(json.dumps(out, indent=2, sort_keys=True))
        return
    print(f"{'method':<16} {'mean':>8} {'std':>8} {'n':>3}  config")
    for r in rows:
        print(f"{r['method']:<16} {r['mean']:8.4f} {r['std']:8.4f} {r['n']:3d}  {r['config_hash']}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mdtk", description="Self-distillation experiments with matured dumb teachers.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def data_opts(sp):
        sp.add_argument("--data", choices=["toy", "mnist", "csv"], help="override the config's data kind")
        sp.add_argument("--mnist-dir")
        sp.add_argument("--train-csv")
        sp.add_argument("--test-csv")
        sp.add_argument("--epochs", type=int, help="override the config's epoch count")

    sp = sub.add_parser("gen-toy", help="write the toy train/unseen sets as CSV")
    sp.add_argument("--out-dir", required=True)
    sp.add_argument("--n-train", type=int, default=1000)
    sp.add_argument("--n-unseen", type=int, default=760)
    sp.add_argument("--margin", type=float, default=0.1)
    sp.add_argument("--amplitude", type=float, default=0.4)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_gen_toy)

    sp = sub.add_parser("train", help="train one configuration (builds its teacher if any)")
    sp.add_argument("--config", required=True)
    sp.add_argument("--out", help="network container output path")
    sp.add_argument("--record", help="write the TrialRecord JSON here")
    sp.add_argument("--log", help="append the TrialRecord to this JSONL log")
    data_opts(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("build-teacher", help="build and save the config's teacher")
    sp.add_argument("--config", required=True)
    sp.add_argument("--out", required=True)
    data_opts(sp)
    sp.set_defaults(func=cmd_build_teacher)

    sp = sub.add_parser("distill", help="train a student from a saved teacher")
    sp.add_argument("--config", required=True)
    sp.add_argument("--teacher", required=True)
    sp.add_argument("--out")
    sp.add_argument("--record")
    sp.add_argument("--log")
    data_opts(sp)
    sp.set_defaults(func=cmd_distill)

    sp = sub.add_parser("probe", help="decision-boundary / confidence map of a 2-D network")
    sp.add_argument("--model", required=True)
    sp.add_argument("--out", nargs="+", required=True, help="output files (.csv/.pgm/.ppm)")
    sp.add_argument("--format", choices=["csv", "pgm", "ppm"])
    sp.add_argument("--resolution", type=int, default=200)
    sp.add_argument("--range", type=float, nargs=4, default=[-2.0, 2.0, -2.0, 2.0],
                    metavar=("X0", "X1", "Y0", "Y1"))
    sp.add_argument("--inner-box", type=float, nargs=4, default=[-1.0, 1.0, -1.0, 1.0])
    sp.add_argument("--tube-threshold", type=float, default=0.9)
    sp.add_argument("--workers", type=int, default=1)
    sp.set_defaults(func=cmd_probe)

    sp = sub.add_parser("grid", help="grid search with seed repetition (resumable)")
    sp.add_argument("--config", required=True, help="base TrainConfig JSON")
    sp.add_argument("--grid", required=True, help='{"params": {...}, "seeds": [...]}')
    sp.add_argument("--log", required=True)
    sp.add_argument("--workers", type=int, help="concurrent trials (default MDTK_THREADS or CPU count)")
    data_opts(sp)
    sp.set_defaults(func=cmd_grid)

    sp = sub.add_parser("report", help="best configuration per method from a JSONL log")
    sp.add_argument("--log", required=True)
    sp.add_argument("--metric", default="test_accuracy")
    sp.add_argument("--json", action="store_true")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (ConfigError, FormatError, FileNotFoundError) as exc:
        print(f"mdtk: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
