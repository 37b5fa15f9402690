"""Reconstruction losses: MSE, MAE, MSLE, LMSE and the flip-and-log wrapper.

LMSE replaces each squared error ``e = (y - yhat)**2`` with
``-log(1 + eps - e)``, which equals ``e`` to first order near zero error and
climbs to the finite ceiling ``-log(eps)`` as ``e -> 1``. The flip-and-log
(FL) transform applies the same ``-log(1 - L)`` map to any non-negative
per-element base loss, optionally rescaling by the batch maximum first so the
log argument stays positive.

All loss functions accept numpy arrays or :class:`~lmselab.tensor.Tensor`
objects and return a scalar ``Tensor`` that can be backpropagated.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import Tensor

DEFAULT_EPS = 1e-7
LOSS_KINDS = ("mse", "mae", "msle", "lmse")


class LossDomainError(ValueError):
    """An input lies outside the loss's domain."""

    def __init__(self, message: str, index=None):
        super().__init__(message)
        self.index = index


def _pair(y, yhat) -> tuple[Tensor, Tensor]:
    y = y if isinstance(y, Tensor) else Tensor(y)
    yhat = yhat if isinstance(yhat, Tensor) else Tensor(yhat)
    if y.shape != yhat.shape:
        raise T.DimensionError(f"target shape {y.shape} != prediction shape {yhat.shape}")
    return y, yhat


def _first_bad(mask: np.ndarray):
    return tuple(int(i) for i in np.argwhere(mask)[0])


def mse(y, yhat) -> Tensor:
    y, yhat = _pair(y, yhat)
    return ((y - yhat) ** 2).mean()


def mae(y, yhat) -> Tensor:
    y, yhat = _pair(y, yhat)
    return T.absolute(y - yhat).mean()


def msle(y, yhat) -> Tensor:
    y, yhat = _pair(y, yhat)
    bad = (y.data <= -1) | (yhat.data <= -1)
    if bad.any():
        idx = _first_bad(bad)
        raise LossDomainError(f"msle needs elements > -1; element {idx} violates it", idx)
    return ((T.log(y + 1.0) - T.log(yhat + 1.0)) ** 2).mean()


def lmse(y, yhat, eps: float = DEFAULT_EPS) -> Tensor:
    """Mean of ``-log(1 + eps - (y - yhat)**2)``.

    Raises :class:`LossDomainError` if any squared error exceeds 1; inputs in
    ``[0, 1]`` always satisfy this.
    """
    y, yhat = _pair(y, yhat)
    sq = (y - yhat) ** 2
    bad = sq.data > 1.0
    if bad.any():
        idx = _first_bad(bad)
        raise LossDomainError(
            f"lmse needs (y - yhat)**2 <= 1; element {idx} has {sq.data[idx]:.6g}", idx
        )
    return (-T.log((1.0 + eps) - sq)).mean()


def base_elements(kind: str, y, yhat) -> Tensor:
    """Per-element base loss fed into the FL transform."""
    y, yhat = _pair(y, yhat)
    kind = kind.lower()
    if kind == "mse":
        return (y - yhat) ** 2
    if kind == "mae":
        return T.absolute(y - yhat)
    if kind == "msle":
        return (T.log(y + 1.0) - T.log(yhat + 1.0)) ** 2
    raise ValueError(f"FL transform has no base loss {kind!r}")


def fl_transform(base, eps: float = DEFAULT_EPS, scale_trick: bool = False) -> Tensor:
    """Flip-and-log: mean of ``-log(1 - L)`` over per-element base values.

    Without ``scale_trick`` the argument is ``1 + eps - L`` (so FL of squared
    errors is exactly :func:`lmse`) and base values must be <= 1. With it,
    values are first mapped to ``L / max(L) * (1 - eps)``; the maximum is
    treated as a constant for differentiation. The result then lies in
    ``[0, -log(eps)]`` for any non-negative input.
    """
    base = base if isinstance(base, Tensor) else Tensor(base)
    d = base.data
    neg = d < 0
    if neg.any():
        idx = _first_bad(neg)
        raise LossDomainError(f"FL base values must be >= 0; element {idx} is {d[idx]:.6g}", idx)
    if not scale_trick:
        over = d > 1.0
        if over.any():
            idx = _first_bad(over)
            raise LossDomainError(
                f"FL without scale trick needs base values <= 1; element {idx} is {d[idx]:.6g}",
                idx,
            )
        return (-T.log((1.0 + eps) - base)).mean()
    peak = float(d.max()) if d.size else 0.0
    if peak == 0.0:
        return (base * 0.0).mean()
    # 1 - s * (1 - eps) written so the peak element gives exactly eps
    s = base / peak
    out = (-T.log((1.0 - s) + eps * s)).mean()
    ceiling = -np.log(eps)
    if out.data > ceiling:
        # summation rounding only; shift the value, keep the gradient
        out = out - float(out.data - ceiling)
    return out


@dataclass(frozen=True)
class LossSpec:
    """Which loss to train with. ``kind='fl'`` wraps ``inner`` in flip-and-log."""

    kind: str = "mse"
    eps: float = DEFAULT_EPS
    scale_trick: bool = False
    inner: str = "mse"

    def __post_init__(self):
        object.__setattr__(self, "kind", self.kind.lower())
        object.__setattr__(self, "inner", self.inner.lower())
        if self.kind not in LOSS_KINDS + ("fl",):
            raise ValueError(f"unknown loss kind {self.kind!r}")
        if self.kind == "fl" and self.inner not in ("mse", "mae", "msle"):
            raise ValueError(f"FL cannot wrap {self.inner!r}")
        if not 0.0 < self.eps < 1.0:
            raise ValueError("eps must lie in (0, 1)")

    @property
    def ceiling(self) -> float:
        return -np.log(self.eps)

    @property
    def name(self) -> str:
        return f"fl-{self.inner}" if self.kind == "fl" else self.kind

    def __call__(self, y, yhat) -> Tensor:
        if self.kind == "mse":
            return mse(y, yhat)
        if self.kind == "mae":
            return mae(y, yhat)
        if self.kind == "msle":
            return msle(y, yhat)
        if self.kind == "lmse":
            return lmse(y, yhat, self.eps)
        return fl_transform(base_elements(self.inner, y, yhat), self.eps, self.scale_trick)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "eps": self.eps, "scale_trick": self.scale_trick, "inner": self.inner}


# -- closed-form gradients with respect to the prediction -----------------

def grad_mse(y, yhat) -> np.ndarray:
    y, yhat = np.asarray(y, dtype=np.float64), np.asarray(yhat, dtype=np.float64)
    if y.shape != yhat.shape:
        raise T.DimensionError(f"target shape {y.shape} != prediction shape {yhat.shape}")
    return (-2.0 * y + 2.0 * yhat) / y.size


def grad_lmse(y, yhat, eps: float = DEFAULT_EPS) -> np.ndarray:
    y, yhat = np.asarray(y, dtype=np.float64), np.asarray(yhat, dtype=np.float64)
    if y.shape != yhat.shape:
        raise T.DimensionError(f"target shape {y.shape} != prediction shape {yhat.shape}")
    sq = (y - yhat) ** 2
    if (sq > 1.0).any():
        idx = _first_bad(sq > 1.0)
        raise LossDomainError(f"lmse needs (y - yhat)**2 <= 1; element {idx} violates it", idx)
    return (-2.0 * y + 2.0 * yhat) / (y.size * (1.0 + eps - sq))


# -- surfaces over the unit square ----------------------------------------

@dataclass
class SurfaceGrid:
    """Loss or gradient values on a ``resolution x resolution`` grid.

    ``z[i, j]`` is evaluated at ``y = y[i]`` and ``yhat = yhat[j]``.
    """

    kind: str
    quantity: str
    y: np.ndarray
    yhat: np.ndarray
    z: np.ndarray
    clipped: np.ndarray
    clip: float | None

    def rows(self):
        for i, yv in enumerate(self.y):
            for j, pv in enumerate(self.yhat):
                yield yv, pv, self.z[i, j], bool(self.clipped[i, j])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["y", "yhat", "z", "clipped"])
            for yv, pv, zv, c in self.rows():
                w.writerow([f"{yv:.17g}", f"{pv:.17g}", f"{zv:.17g}", int(c)])


def _pointwise(kind: str, quantity: str, y: np.ndarray, p: np.ndarray, eps: float) -> np.ndarray:
    d = y - p
    if quantity == "loss":
        if kind == "mse":
            return d * d
        if kind == "mae":
            return np.abs(d)
        if kind == "msle":
            return (np.log1p(y) - np.log1p(p)) ** 2
        if kind == "lmse":
            return -np.log(1.0 + eps - d * d)
    elif quantity == "gradient":
        if kind == "mse":
            return -2.0 * d
        if kind == "mae":
            return np.sign(-d)
        if kind == "msle":
            return -2.0 * (np.log1p(y) - np.log1p(p)) / (1.0 + p)
        if kind == "lmse":
            return -2.0 * d / (1.0 + eps - d * d)
    else:
        raise ValueError(f"quantity must be 'loss' or 'gradient', got {quantity!r}")
    raise ValueError(f"unknown loss kind {kind!r}")


def surface_grid(
    loss_kind: str,
    quantity: str = "loss",
    resolution: int = 51,
    clip: float | None = None,
    eps: float = DEFAULT_EPS,
) -> SurfaceGrid:
    """Evaluate one element's loss (or d loss / d yhat) over ``[0, 1]**2``.

    Cells with ``|z| > clip`` are replaced by ``sign(z) * clip`` and flagged.
    The CLI uses ``clip=10`` for gradient surfaces.
    """
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    kind = loss_kind.lower()
    axis = np.linspace(0.0, 1.0, resolution)
    yy, pp = np.meshgrid(axis, axis, indexing="ij")
    z = _pointwise(kind, quantity, yy, pp, eps) + 0.0  # no negative zeros in the CSV
    if clip is None:
        flags = np.zeros(z.shape, dtype=bool)
    else:
        flags = np.abs(z) > clip
        z = np.where(flags, np.sign(z) * clip, z)
    return SurfaceGrid(kind, quantity, axis, axis.copy(), z, flags, clip)
