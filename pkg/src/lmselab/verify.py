"""Numeric checks of the LMSE claims on linear least-squares problems.

Each check returns a :class:`CheckReport`; violations are data, not
exceptions. ``run_suite`` groups them the way the ``verify`` CLI exposes them.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .losses import DEFAULT_EPS, fl_transform, grad_lmse, grad_mse, lmse, mse
from .tensor import Tensor, numeric_grad

RESIDUAL_CEILING = 0.9
MAX_CONDITION = 1e6
LAMBDAS = (0.25, 0.5, 0.75)


@dataclass
class CheckReport:
    name: str
    trials: int
    violations: int
    worst: float
    tol: float
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        return d


class SingularDesignError(np.linalg.LinAlgError):
    """X^T X is (numerically) singular; draw a new instance."""


@dataclass
class LinearInstance:
    """Least-squares problem ``Y ~ X W`` with ``X`` (N, f) and ``Y`` (N, k)."""

    X: np.ndarray
    Y: np.ndarray

    @property
    def dims(self) -> tuple[int, int, int]:
        n, f = self.X.shape
        return n, f, self.Y.shape[1]

    def residual(self, W: np.ndarray) -> np.ndarray:
        return self.Y - self.X @ W

    def mse(self, W) -> float:
        r = self.residual(W)
        return float(np.mean(r * r))

    def lmse(self, W, eps: float = DEFAULT_EPS) -> float:
        r = self.residual(W)
        return float(np.mean(-np.log(1.0 + eps - r * r)))

    def grad_mse(self, W) -> np.ndarray:
        r = self.residual(W)
        return -2.0 * self.X.T @ r / r.size

    def grad_lmse(self, W, eps: float = DEFAULT_EPS) -> np.ndarray:
        r = self.residual(W)
        return -2.0 * self.X.T @ (r / (1.0 + eps - r * r)) / r.size

    def loss(self, kind: str, W, eps: float = DEFAULT_EPS) -> float:
        return self.mse(W) if kind == "mse" else self.lmse(W, eps)


def random_instance(rng: np.random.Generator, n: int = 50, f: int = 5, k: int = 3,
                    noise: float = 0.0) -> LinearInstance:
    """Well-conditioned random instance with targets in [-0.5, 0.5] plus noise.

    With ``noise=0`` the targets lie exactly in the column space of ``X``.
    """
    while True:
        X = rng.uniform(-1.0, 1.0, (n, f))
        if np.linalg.cond(X) < MAX_CONDITION:
            break
    W = rng.uniform(-1.0, 1.0, (f, k))
    Y = X @ W
    Y *= 0.5 / max(np.abs(Y).max(), 1e-12)
    if noise:
        Y = Y + rng.uniform(-noise, noise, Y.shape)
    return LinearInstance(X, Y)


def closed_form_solution(inst: LinearInstance) -> np.ndarray:
    """Solve the normal equations ``X^T X W = X^T Y``."""
    gram = inst.X.T @ inst.X
    if np.linalg.cond(gram) > MAX_CONDITION**2:
        raise SingularDesignError("X^T X is singular")
    return np.linalg.solve(gram, inst.X.T @ inst.Y)


def _in_domain_weight(rng, inst: LinearInstance, center: np.ndarray) -> np.ndarray:
    """A weight matrix whose residuals all stay within the domain ceiling."""
    direction = rng.uniform(-1.0, 1.0, center.shape)
    scale = rng.uniform(0.0, 3.0)
    W = center + scale * direction
    while np.abs(inst.residual(W)).max() > RESIDUAL_CEILING:
        scale *= 0.5
        W = center + scale * direction
    return W


def check_convexity(loss_kind: str = "mse", trials: int = 1000, tol: float = 1e-9,
                    seed: int = 0, eps: float = DEFAULT_EPS, noise: float = 0.1) -> CheckReport:
    """Jensen's inequality along random segments, lambda in {0.25, 0.5, 0.75}.

    Endpoints keep every residual within 0.9, so the whole segment does too.
    """
    kind = loss_kind.lower()
    if kind not in ("mse", "lmse"):
        raise ValueError("convexity check covers mse and lmse")
    rng = np.random.default_rng(seed)
    violations, worst = 0, -math.inf
    for _ in range(trials):
        inst = random_instance(rng, n=20, f=4, k=2, noise=noise)
        center = closed_form_solution(inst)
        W1 = _in_domain_weight(rng, inst, center)
        W2 = _in_domain_weight(rng, inst, center)
        L1, L2 = inst.loss(kind, W1, eps), inst.loss(kind, W2, eps)
        bad = False
        for lam in LAMBDAS:
            gap = inst.loss(kind, lam * W1 + (1 - lam) * W2, eps) - (lam * L1 + (1 - lam) * L2)
            worst = max(worst, gap)
            bad |= gap > tol
        violations += bad
    return CheckReport(f"convexity-{kind}", trials, violations, worst, tol)


def check_closed_form(inst: LinearInstance, tol: float = 1e-8, eps: float = DEFAULT_EPS,
                      W: np.ndarray | None = None) -> CheckReport:
    """Gradient inf-norms of both losses at the normal-equation solution.

    Pass ``W`` to evaluate at some other point instead (e.g. a perturbation).
    """
    W_star = closed_form_solution(inst) if W is None else W
    g_mse = float(np.abs(inst.grad_mse(W_star)).max())
    g_lmse = float(np.abs(inst.grad_lmse(W_star, eps)).max())
    worst = max(g_mse, g_lmse)
    return CheckReport("closed-form", 1, int(g_mse >= tol) + int(g_lmse >= tol), worst, tol,
                       {"grad_mse_inf": g_mse, "grad_lmse_inf": g_lmse})


def check_closed_form_suite(instances: int = 50, tol: float = 1e-8, seed: int = 0,
                            eps: float = DEFAULT_EPS) -> CheckReport:
    rng = np.random.default_rng(seed)
    violations, worst = 0, 0.0
    for _ in range(instances):
        rep = check_closed_form(random_instance(rng), tol, eps)
        violations += rep.violations > 0
        worst = max(worst, rep.worst)
    return CheckReport("closed-form", instances, violations, worst, tol)


def taylor_partial_sum(x: float, n_terms: int) -> float:
    """Partial sum of ``sum_{n>=1} (-1)**n (x - 1)**n / n``, which tends to ``-log(x)``."""
    if not 0.0 < x <= 2.0:
        warnings.warn(f"series for -log(x) diverges at x={x}", RuntimeWarning, stacklevel=2)
    d = x - 1.0
    total, power = 0.0, 1.0
    for n in range(1, n_terms + 1):
        power *= -d
        total += power / n
    return total


def check_taylor(xs=(0.5, 0.75, 1.25, 1.5), n_terms: int = 60, tol: float = 1e-6) -> CheckReport:
    errors = {x: abs(taylor_partial_sum(x, n_terms) + math.log(x)) for x in xs}
    bad = sum(e >= tol for e in errors.values())
    return CheckReport("taylor", len(xs), bad, max(errors.values()), tol,
                       {"errors": {str(k): v for k, v in errors.items()}})


def _rel(a: np.ndarray, b: np.ndarray) -> float:
    denom = max(np.linalg.norm(a), np.linalg.norm(b))
    return 0.0 if denom == 0 else float(np.linalg.norm(a - b) / denom)


GRADIENT_TOLS = {"mse": 1e-6, "lmse": 1e-4}


def check_gradients(loss_kinds=("mse", "lmse"), samples: int = 100, h: float = 1e-5,
                    tol=None, dim: int = 8, seed: int = 0, eps: float = DEFAULT_EPS,
                    agree_tol: float = 1e-12) -> list[CheckReport]:
    """Closed-form and autodiff gradients versus central differences.

    Points are drawn from ``[0.05, 0.95]**dim``. A sample violates if either
    route misses the finite-difference gradient by ``tol`` (relative, 2-norm)
    or the two routes disagree by more than ``agree_tol``.
    """
    rng = np.random.default_rng(seed)
    reports = []
    for kind in loss_kinds:
        kind = kind.lower()
        if kind not in GRADIENT_TOLS:
            raise ValueError(f"no closed-form gradient for {kind!r}")
        t = tol[kind] if isinstance(tol, dict) else (tol if tol is not None else GRADIENT_TOLS[kind])
        if kind == "mse":
            value, closed = (lambda y, p: mse(y, p)), grad_mse
        else:
            value, closed = (lambda y, p: lmse(y, p, eps)), (lambda y, p: grad_lmse(y, p, eps))
        violations, worst_fd, worst_agree = 0, 0.0, 0.0
        for _ in range(samples):
            y = rng.uniform(0.05, 0.95, dim)
            p = rng.uniform(0.05, 0.95, dim)
            analytic = closed(y, p)
            pt = Tensor(p, requires_grad=True)
            value(y, pt).backward()
            auto = pt.grad
            numeric = numeric_grad(lambda q: value(y, q), p, h)
            fd = max(_rel(analytic, numeric), _rel(auto, numeric))
            agree = _rel(auto, analytic)
            worst_fd, worst_agree = max(worst_fd, fd), max(worst_agree, agree)
            violations += fd >= t or agree > agree_tol
        reports.append(CheckReport(f"gradients-{kind}", samples, violations, worst_fd, t,
                                   {"autodiff_vs_closed_form": worst_agree, "h": h}))
    return reports


def check_dominance(n: int = 100_000, seed: int = 0) -> CheckReport:
    """``-log(1 - e) >= e`` on [0, 1), equal only at 0; slope ratio ``1/(1-e) >= 1``."""
    rng = np.random.default_rng(seed)
    e = np.concatenate([[0.0], rng.uniform(0.0, 1.0, n - 1)])
    lm = -np.log1p(-e)
    ratio = 1.0 / (1.0 - e)
    bad = (lm < e) | ((lm == e) & (e != 0.0)) | ((e == 0.0) & (lm != 0.0)) | (ratio < 1.0)
    return CheckReport("dominance", n, int(bad.sum()), float(np.max(e - lm)), 0.0,
                       {"min_ratio": float(ratio.min())})


def check_fl_safety(trials: int = 1000, eps: float = DEFAULT_EPS, seed: int = 0,
                    peak: float = 1e6) -> CheckReport:
    """Scaled FL output stays within ``[0, -log(eps)]`` for arbitrary non-negative bases."""
    rng = np.random.default_rng(seed)
    ceiling = -math.log(eps)
    violations, worst = 0, 0.0
    for i in range(trials):
        size = int(rng.integers(1, 64))
        base = rng.uniform(0.0, 1.0, size) * 10.0 ** rng.uniform(-12, 6)
        if i % 4 == 0:
            base[rng.integers(size)] = peak
        if i % 7 == 0:
            base[:] = 0.0
        out = float(fl_transform(base, eps, scale_trick=True))
        violations += not (math.isfinite(out) and 0.0 <= out <= ceiling)
        worst = max(worst, out)
    return CheckReport("fl-safety", trials, violations, worst, ceiling)


SUITES = ("gradients", "convexity", "closed-form", "taylor", "dominance", "fl-safety")


def run_suite(name: str = "all", seed: int = 0) -> list[CheckReport]:
    names = SUITES if name == "all" else (name,)
    reports = []
    for n in names:
        if n == "gradients":
            reports += check_gradients(seed=seed)
        elif n == "convexity":
            reports += [check_convexity("mse", seed=seed), check_convexity("lmse", seed=seed)]
        elif n == "closed-form":
            reports.append(check_closed_form_suite(seed=seed))
        elif n == "taylor":
            reports.append(check_taylor())
        elif n == "dominance":
            reports.append(check_dominance(seed=seed))
        elif n == "fl-safety":
            reports.append(check_fl_safety(seed=seed))
        else:
            raise ValueError(f"unknown suite {n!r}; choose from {', '.join(SUITES)} or all")
    return reports


def format_reports(reports: list[CheckReport]) -> str:
    lines = [f"{'check':<20} {'trials':>7} {'viol':>5} {'worst':>12} {'tol':>10}  result"]
    for r in reports:
        lines.append(f"{r.name:<20} {r.trials:>7} {r.violations:>5} {r.worst:>12.3e} "
                     f"{r.tol:>10.1e}  {'PASS' if r.passed else 'FAIL'}")
    return "\n".join(lines)
