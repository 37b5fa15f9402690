"""Command-line entry point: ``lmselab {train,grid,table,surface,verify}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import data as D
from . import harness as H
from . import verify as V
from .losses import DEFAULT_EPS, LOSS_KINDS, LossSpec, surface_grid
from .model import CaeConfig


def _common(p: argparse.ArgumentParser, multi: bool = False) -> None:
    many = {"nargs": "+"} if multi else {}
    p.add_argument("--config", help="JSON file with grid/model/loss sections")
    p.add_argument("--dataset", choices=("mnist", "fmnist"), default="mnist")
    p.add_argument("--normal-class", type=int, default=0)
    p.add_argument("--loss", choices=LOSS_KINDS, **({"nargs": "+"} if multi else {}))
    p.add_argument("--latent", type=int, **many)
    p.add_argument("--lr", type=float, **many)
    p.add_argument("--seed", type=int, **many)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--scale", choices=("desk", "full"), default="desk")
    p.add_argument("--max-train", type=int, help="cap on normal-class training images")
    p.add_argument("--optimizer", choices=("adam", "sgd"))
    p.add_argument("--score", choices=("mse", "lmse"), default="mse", help="anomaly score for AUROC")
    p.add_argument("--data-dir", default=None)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default="results")


def _as_tuple(v):
    return tuple(v) if isinstance(v, (list, tuple)) else (v,)


def _resolve(args) -> tuple[H.HyperGrid, CaeConfig, LossSpec]:
    if args.config:
        grid, config, loss = H.load_config(args.config)
    else:
        grid, config, loss = H.SCALES[args.scale], CaeConfig(), LossSpec("mse")
    upd = {}
    if args.latent is not None:
        upd["latent_dims"] = _as_tuple(args.latent)
    if args.lr is not None:
        upd["learning_rates"] = _as_tuple(args.lr)
    if args.seed is not None:
        upd["seeds"] = _as_tuple(args.seed)
    if args.epochs is not None:
        upd["epochs"] = args.epochs
    if args.batch is not None:
        upd["batch_size"] = args.batch
    if args.max_train is not None:
        upd["max_train"] = args.max_train
    if args.optimizer is not None:
        upd["optimizer"] = args.optimizer
    grid = replace(grid, **upd)
    if args.eps is not None:
        loss = replace(loss, eps=args.eps)
    return grid, config, loss


def _losses(args, base: LossSpec) -> list[LossSpec]:
    kinds = args.loss if args.loss else (base.kind,)
    return [replace(base, kind=k) for k in _as_tuple(kinds)]


def _task(args, grid: H.HyperGrid) -> D.AnomalyTask:
    train = D.load_split(args.dataset, "train", args.data_dir)
    test = D.load_split(args.dataset, "test", args.data_dir)
    return D.make_task(train, test, args.normal_class, grid.max_train, seed=0, dataset=args.dataset)


def cmd_train(args) -> int:
    grid, config, loss = _resolve(args)
    loss = _losses(args, loss)[0]
    point = grid.points()[0]
    task = _task(args, grid)
    result = H.train(task, loss, config, point, args.score, checkpoint=args.checkpoint)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result.write_json(out / "metrics.json")
    final = result.epoch_losses[-1] if result.epoch_losses else float("nan")
    print(f"{task.task_id} {loss.name} latent={point.latent_dim} lr={point.lr:g} "
          f"seed={point.seed} auroc={result.auroc:.4f} final_loss={final:.6g}")
    return 0


def cmd_grid(args) -> int:
    grid, config, loss = _resolve(args)
    losses = _losses(args, loss) if args.loss else [replace(loss, kind="mse"), replace(loss, kind="lmse")]
    task = _task(args, grid)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    arms = H.paired_grid_search(task, losses, grid, config, args.score, args.workers)
    with open(out / "runs.jsonl", "w") as fh:
        for name, results in arms.items():
            for r in results:
                fh.write(json.dumps(r.to_dict()) + "\n")
            m, s, n = H.summarize(results)
            print(f"{task.task_id} {name}: auroc {m:.4f} ± {s:.4f} over {n} runs")
    H.emit_convergence(arms, out / "convergence.csv")
    return 0 if all(r.ok for rs in arms.values() for r in rs) else 1


def cmd_table(args) -> int:
    grid, config, loss = _resolve(args)
    losses = _losses(args, loss) if args.loss else [replace(loss, kind="mse"), replace(loss, kind="lmse")]
    classes = args.classes if args.classes else range(10)
    rows = H.reproduce_table(args.dataset, args.scale, args.out, args.data_dir, classes, losses,
                             grid, config, args.score, args.workers)
    print(H.format_table(rows, [s.name for s in losses], args.dataset), end="")
    return 0


def cmd_surface(args) -> int:
    clip = args.clip
    if clip is None and args.quantity == "gradient":
        clip = 10.0
    grid = surface_grid(args.loss, args.quantity, args.resolution, clip, args.eps)
    out = Path(args.out)
    if out.suffix != ".csv":
        out.mkdir(parents=True, exist_ok=True)
        out = out / f"surface_{args.loss}_{args.quantity}.csv"
    grid.to_csv(out)
    print(f"wrote {out} ({grid.z.size} cells, {int(grid.clipped.sum())} clipped)")
    return 0


def cmd_verify(args) -> int:
    reports = V.run_suite(args.suite, seed=args.seed)
    print(V.format_reports(reports))
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        with open(args.out, "w") as fh:
            json.dump([r.to_dict() for r in reports], fh, indent=2)
            fh.write("\n")
    return 0 if all(r.passed for r in reports) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lmselab", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one CAE and report test AUROC")
    _common(p)
    p.add_argument("--checkpoint", help="also write the trained parameters here")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("grid", help="paired grid search on one normal class")
    _common(p, multi=True)
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("table", help="grid search over all classes, write table.csv")
    _common(p, multi=True)
    p.add_argument("--classes", type=int, nargs="+")
    p.set_defaults(func=cmd_table)

    p = sub.add_parser("surface", help="loss / gradient surface over the unit square as CSV")
    p.add_argument("--loss", choices=LOSS_KINDS, default="lmse")
    p.add_argument("--quantity", choices=("loss", "gradient"), default="loss")
    p.add_argument("--resolution", type=int, default=51)
    p.add_argument("--clip", type=float, default=None, help="default 10 for gradient surfaces")
    p.add_argument("--eps", type=float, default=DEFAULT_EPS)
    p.add_argument("--out", default="results")
    p.set_defaults(func=cmd_surface)

    p = sub.add_parser("verify", help="numeric checks; nonzero exit on any failure")
    p.add_argument("--suite", choices=V.SUITES + ("all",), default="all")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write the JSON report here")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
