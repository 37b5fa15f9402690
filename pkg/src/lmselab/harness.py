"""Training loop, paired grid search, and table / convergence emitters."""
from __future__ import annotations

import csv
import itertools
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import data as D
from .losses import LossSpec
from .metrics import ScoreSet, anomaly_score, auroc, convergence_stats
from .model import CaeConfig, build_cae, save_checkpoint
from .optim import make_optimizer, optimizer_step
from .rng import Xoshiro256
from .tensor import Tensor, no_grad

log = logging.getLogger(__name__)

ORDER_STREAM = 3
TIMING_FIELDS = ("wall_time",)


class NonFiniteLossError(FloatingPointError):
    def __init__(self, step: int, value: float):
        super().__init__(f"non-finite training loss {value!r} at step {step}")
        self.step = step
        self.value = value


@dataclass(frozen=True)
class GridPoint:
    latent_dim: int
    lr: float
    seed: int
    epochs: int = 5
    batch_size: int = 64
    optimizer: str = "adam"


@dataclass(frozen=True)
class HyperGrid:
    latent_dims: tuple[int, ...] = (4, 16)
    learning_rates: tuple[float, ...] = (1e-4, 1e-3)
    seeds: tuple[int, ...] = (1, 2)
    epochs: int = 5
    batch_size: int = 64
    max_train: int | None = 2000
    optimizer: str = "adam"

    def __post_init__(self):
        for name in ("latent_dims", "learning_rates", "seeds"):
            vals = tuple(getattr(self, name))
            if not vals:
                raise ValueError(f"{name} must be non-empty")
            object.__setattr__(self, name, vals)
        if any(d < 1 for d in self.latent_dims):
            raise ValueError("latent dims must be positive")
        if any(not lr > 0 for lr in self.learning_rates):
            raise ValueError("learning rates must be positive")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")

    def points(self) -> list[GridPoint]:
        return [
            GridPoint(d, lr, s, self.epochs, self.batch_size, self.optimizer)
            for d, lr, s in itertools.product(self.latent_dims, self.learning_rates, self.seeds)
        ]

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("latent_dims", "learning_rates", "seeds"):
            d[k] = list(d[k])
        return d


DESK = HyperGrid()
FULL = HyperGrid(
    latent_dims=(2, 4, 8, 16, 32),
    learning_rates=(1e-4, 5e-4, 1e-3, 5e-3),
    seeds=(1, 2, 3),
    epochs=30,
    batch_size=64,
    max_train=None,
)
SCALES = {"desk": DESK, "full": FULL}


@dataclass
class RunResult:
    task_id: str
    loss: dict
    config: dict
    hyper: dict
    seed: int
    epoch_losses: list[float] = field(default_factory=list)
    auroc: float | None = None
    score_kind: str = "mse"
    n_train: int = 0
    n_test: int = 0
    wall_time: float = 0.0
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None and self.auroc is not None

    @property
    def loss_name(self) -> str:
        return LossSpec(**self.loss).name

    def to_dict(self, timing: bool = True) -> dict:
        d = asdict(self)
        if not timing:
            for k in TIMING_FIELDS:
                d.pop(k)
        return d

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def from_dict(cls, d: dict) -> RunResult:
        return cls(**d)


def reconstruct(model, images: np.ndarray, batch: int = 500) -> np.ndarray:
    out = []
    with no_grad():
        for i in range(0, len(images), batch):
            out.append(model(Tensor(images[i : i + batch])).data)
    return np.concatenate(out) if out else np.zeros_like(images)


def evaluate(model, task: D.AnomalyTask, score_kind: str = "mse", eps: float = 1e-7) -> float:
    x = task.test_all.images
    scores = anomaly_score(x, reconstruct(model, x), score_kind, eps)
    return auroc(ScoreSet.from_labels(scores, task.test_binary))


def train(
    task: D.AnomalyTask,
    loss: LossSpec,
    config: CaeConfig,
    point: GridPoint,
    score_kind: str = "mse",
    checkpoint=None,
) -> RunResult:
    """Train one CAE on ``task.train_normal`` and score the full test split.

    Parameters and batch order come only from ``point.seed``, so the MSE and
    LMSE runs at one grid point see identical init and data order. Raises
    :class:`NonFiniteLossError` if a batch loss is NaN or infinite.
    ``checkpoint`` names a file to receive the trained parameters.
    """
    start = time.perf_counter()
    config = replace(config, latent_dim=point.latent_dim)
    model = build_cae(config, point.seed)
    params = model.parameters()
    opt = make_optimizer(params, point.optimizer, point.lr)
    order_rng = Xoshiro256(point.seed, stream=ORDER_STREAM)
    x = task.train_normal.images
    n = len(x)
    epoch_losses = []
    step = 0
    for epoch in range(point.epochs):
        order = order_rng.permutation(n)
        total = 0.0
        for i in range(0, n, point.batch_size):
            idx = order[i : i + point.batch_size]
            batch = Tensor(x[idx])
            model.zero_grad()
            value = loss(batch, model(batch))
            if not math.isfinite(float(value)):
                raise NonFiniteLossError(step, float(value))
            value.backward()
            optimizer_step(params, opt)
            total += float(value) * len(idx)
            step += 1
        epoch_losses.append(total / n)
        log.debug("%s %s epoch %d loss %.6g", task.task_id, loss.name, epoch + 1, epoch_losses[-1])
    score = evaluate(model, task, score_kind, loss.eps)
    if checkpoint is not None:
        save_checkpoint(model, checkpoint)
    return RunResult(
        task_id=task.task_id,
        loss=loss.to_dict(),
        config=config.to_dict(),
        hyper=asdict(point),
        seed=point.seed,
        epoch_losses=epoch_losses,
        auroc=score,
        score_kind=score_kind,
        n_train=n,
        n_test=len(task.test_all),
        wall_time=time.perf_counter() - start,
    )


def _run_point(args) -> RunResult:
    task, loss, config, point, score_kind = args
    try:
        return train(task, loss, config, point, score_kind)
    except (NonFiniteLossError, FloatingPointError, ValueError) as exc:
        log.warning("run %s %s %s failed: %s", task.task_id, loss.name, point, exc)
        return RunResult(
            task_id=task.task_id,
            loss=loss.to_dict(),
            config=replace(config, latent_dim=point.latent_dim).to_dict(),
            hyper=asdict(point),
            seed=point.seed,
            score_kind=score_kind,
            error=str(exc),
        )


def grid_search(
    task: D.AnomalyTask,
    loss: LossSpec,
    grid: HyperGrid,
    config: CaeConfig | None = None,
    score_kind: str = "mse",
    workers: int = 1,
) -> list[RunResult]:
    """One :class:`RunResult` per (latent, lr, seed); failed runs carry ``error``."""
    config = config or CaeConfig()
    jobs = [(task, loss, config, p, score_kind) for p in grid.points()]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_point, jobs))
    else:
        results = [_run_point(j) for j in jobs]
    failed = sum(not r.ok for r in results)
    if failed:
        log.warning("%s %s: %d of %d runs failed", task.task_id, loss.name, failed, len(results))
    return results


def paired_grid_search(task, losses, grid, config=None, score_kind="mse", workers=1):
    """Run every loss over the same grid points and seeds."""
    return {spec.name: grid_search(task, spec, grid, config, score_kind, workers) for spec in losses}


# -- aggregation and output -----------------------------------------------

def summarize(results: list[RunResult]) -> tuple[float, float, int]:
    """(mean, population std, n) of AUROC over successful runs."""
    vals = np.array([r.auroc for r in results if r.ok], dtype=np.float64)
    if vals.size == 0:
        return float("nan"), float("nan"), 0
    return float(vals.mean()), float(vals.std()), int(vals.size)


TABLE_COLUMNS = ["class", "loss", "auroc_mean", "auroc_std", "n_runs"]


def table_rows(by_class: dict[int, dict[str, list[RunResult]]], loss_names) -> list[dict]:
    rows = []
    for cls in sorted(by_class):
        for name in loss_names:
            m, s, n = summarize(by_class[cls][name])
            rows.append({"class": str(cls), "loss": name, "auroc_mean": m, "auroc_std": s, "n_runs": n})
    for name in loss_names:
        pooled = [r for cls in by_class for r in by_class[cls][name]]
        m, s, n = summarize(pooled)
        rows.append({"class": "Total", "loss": name, "auroc_mean": m, "auroc_std": s, "n_runs": n})
    return rows


def write_table_csv(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=TABLE_COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow({**r, "auroc_mean": f"{r['auroc_mean']:.6f}", "auroc_std": f"{r['auroc_std']:.6f}"})


def format_table(rows: list[dict], loss_names, dataset: str = "mnist") -> str:
    """Markdown table with one ``mean ± std`` cell per loss."""
    cells = {(r["class"], r["loss"]): r for r in rows}
    classes = list(dict.fromkeys(r["class"] for r in rows))
    head = "| Normal | " + " | ".join(n.upper() for n in loss_names) + " |"
    lines = [head, "|" + "---|" * (len(loss_names) + 1)]
    for c in classes:
        label = c
        if dataset == "fmnist" and c != "Total":
            label = D.FMNIST_CLASSES[int(c)]
        vals = [f"{cells[c, n]['auroc_mean']:.3f} ± {cells[c, n]['auroc_std']:.3f}" for n in loss_names]
        lines.append(f"| {label} | " + " | ".join(vals) + " |")
    return "\n".join(lines) + "\n"


CONVERGENCE_COLUMNS = ["epoch", "loss_kind", "mean", "std", "min", "max"]


def emit_convergence(results_by_loss: dict[str, list[RunResult]], out_path) -> None:
    """Per-epoch mean/std/min/max of the training loss for each loss arm."""
    with open(out_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CONVERGENCE_COLUMNS)
        for name, results in results_by_loss.items():
            curves = [r.epoch_losses for r in results if r.ok and r.epoch_losses]
            if not curves:
                continue
            st = convergence_stats(curves)
            for e in range(st.epochs):
                w.writerow([e + 1, name, f"{st.mean[e]:.17g}", f"{st.std[e]:.17g}",
                            f"{st.min[e]:.17g}", f"{st.max[e]:.17g}"])


def reproduce_table(
    dataset: str = "mnist",
    scale: str = "desk",
    out_dir="results",
    data_dir=None,
    classes=range(10),
    losses=None,
    grid: HyperGrid | None = None,
    config: CaeConfig | None = None,
    score_kind: str = "mse",
    workers: int = 1,
    test_limit: int | None = None,
) -> list[dict]:
    """Paired grid search for every normal class; writes the AUROC table.

    Outputs in ``out_dir``: ``table.csv``, ``table.md``, ``convergence.csv``
    and ``runs/<task>/<loss>/<latent>_<lr>_<seed>/metrics.json``.
    ``test_limit`` keeps only a prefix of the test split (smoke runs).
    """
    grid = grid or SCALES[scale]
    losses = losses or [LossSpec("mse"), LossSpec("lmse")]
    names = [s.name for s in losses]
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    train_set = D.load_split(dataset, "train", data_dir)
    test_set = D.load_split(dataset, "test", data_dir)
    if test_limit is not None:
        test_set = test_set.subset(slice(0, test_limit))
    by_class: dict[int, dict[str, list[RunResult]]] = {}
    pooled: dict[str, list[RunResult]] = {n: [] for n in names}
    for cls in classes:
        task = D.make_task(train_set, test_set, cls, grid.max_train, seed=0, dataset=dataset)
        arms = paired_grid_search(task, losses, grid, config, score_kind, workers)
        by_class[cls] = arms
        for name, results in arms.items():
            pooled[name].extend(results)
            for r in results:
                h = r.hyper
                run_dir = out_dir / "runs" / task.task_id / name / f"{h['latent_dim']}_{h['lr']:g}_{h['seed']}"
                run_dir.mkdir(parents=True, exist_ok=True)
                r.write_json(run_dir / "metrics.json")
        log.info("class %s done: %s", cls, {n: summarize(r)[0] for n, r in arms.items()})
    rows = table_rows(by_class, names)
    write_table_csv(rows, out_dir / "table.csv")
    (out_dir / "table.md").write_text(format_table(rows, names, dataset))
    emit_convergence(pooled, out_dir / "convergence.csv")
    return rows


# -- config files -----------------------------------------------------------

def load_config(path) -> tuple[HyperGrid, CaeConfig, LossSpec]:
    """Read ``{"grid": {...}, "model": {...}, "loss": {...}}``; missing keys use defaults."""
    with open(path) as fh:
        raw = json.load(fh)
    return (
        HyperGrid(**raw.get("grid", {})),
        CaeConfig(**raw.get("model", {})),
        LossSpec(**raw.get("loss", {})),
    )


def dump_config(grid: HyperGrid, config: CaeConfig, loss: LossSpec, path) -> None:
    with open(path, "w") as fh:
        json.dump({"grid": grid.to_dict(), "model": config.to_dict(), "loss": loss.to_dict()}, fh, indent=2)
        fh.write("\n")
