"""Derivative-free optimizers used to train the ansatz angles."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .simcore import SeedLike, make_rng

CostFn = Callable[[np.ndarray], float]


@dataclass
class OptimizeResult:
    x: np.ndarray
    fun: float
    trace: list = field(default_factory=list)
    nit: int = 0
    nfev: int = 0
    converged: bool = False
    message: str = ""

    @property
    def best_trace(self) -> np.ndarray:
        return np.minimum.accumulate(np.asarray(self.trace, dtype=float)) if self.trace else np.array([])


def _validated_start(x0) -> np.ndarray:
    x0 = np.array(x0, dtype=float).ravel()
    if x0.size == 0:
        raise ValueError("cannot optimize over zero parameters")
    if not np.all(np.isfinite(x0)):
        raise ValueError("initial point must be finite")
    return x0


def nelder_mead(
    fun: CostFn,
    x0,
    step: float = 0.5,
    tol: float = 1e-6,
    max_iter: int = 5000,
    target: Optional[float] = None,
    callback: Optional[Callable[[int, np.ndarray, float], bool]] = None,
    reflect: float = 1.0,
    expand: float = 2.0,
    contract: float = 0.5,
    shrink: float = 0.5,
) -> OptimizeResult:
    """Minimize ``fun`` with the simplex method.

    The initial simplex is ``x0`` plus ``step`` along each coordinate.
    Iteration stops when the spread of cost values over the simplex drops
    below ``tol`` (``converged=True``), when the best cost reaches
    ``target``, when ``callback(it, x_best, f_best)`` returns True, or after
    ``max_iter`` iterations (``converged=False``).  ``trace[k]`` is the best
    cost after iteration ``k + 1``.
    """
    x0 = _validated_start(x0)
    dim = x0.size
    nfev = 0

    def f(x):
        nonlocal nfev
        nfev += 1
        return float(fun(x))

    simplex = np.vstack([x0] + [x0 + step * e for e in np.eye(dim)])
    values = np.array([f(p) for p in simplex])
    trace = []
    converged, message = False, "maximum iterations reached"
    it = 0
    while True:
        order = np.argsort(values, kind="stable")
        simplex, values = simplex[order], values[order]
        if values[-1] - values[0] < tol:
            converged, message = True, "simplex cost spread below tolerance"
            break
        if target is not None and values[0] <= target:
            converged, message = True, "target reached"
            break
        if it >= max_iter:
            break
        it += 1

        centroid = simplex[:-1].mean(axis=0)
        worst = simplex[-1]
        xr = centroid + reflect * (centroid - worst)
        fr = f(xr)
        if fr < values[0]:
            xe = centroid + expand * (xr - centroid)
            fe = f(xe)
            if fe < fr:
                simplex[-1], values[-1] = xe, fe
            else:
                simplex[-1], values[-1] = xr, fr
        elif fr < values[-2]:
            simplex[-1], values[-1] = xr, fr
        else:
            if fr < values[-1]:
                xc = centroid + contract * (xr - centroid)
                fc = f(xc)
                accept = fc <= fr
            else:
                xc = centroid + contract * (worst - centroid)
                fc = f(xc)
                accept = fc < values[-1]
            if accept:
                simplex[-1], values[-1] = xc, fc
            else:
                best = simplex[0]
                simplex[1:] = best + shrink * (simplex[1:] - best)
                values[1:] = [f(p) for p in simplex[1:]]
        best_idx = int(np.argmin(values))
        trace.append(float(values[best_idx]))
        if callback is not None and callback(it, simplex[best_idx], values[best_idx]):
            converged, message = True, "stopped by callback"
            break

    best_idx = int(np.argmin(values))
    return OptimizeResult(simplex[best_idx].copy(), float(values[best_idx]), trace, it, nfev, converged, message)


@dataclass(frozen=True)
class SPSAGains:
    """Gain schedules ``a_k = a / (k + 1 + A)**alpha`` and ``c_k = c / (k + 1)**gamma``.

    ``A = None`` means one tenth of the iteration budget.
    """

    a: float = 0.2
    c: float = 0.1
    alpha: float = 0.602
    gamma: float = 0.101
    A: Optional[float] = None

    def __post_init__(self):
        for name in ("a", "c", "alpha", "gamma"):
            if getattr(self, name) <= 0:
                raise ValueError(f"SPSA gain {name} must be positive")
        if self.A is not None and self.A < 0:
            raise ValueError("stability constant A must be >= 0")


def spsa(
    fun: CostFn,
    x0,
    max_iter: int = 300,
    gains: SPSAGains = SPSAGains(),
    seed: SeedLike = None,
    callback: Optional[Callable[[int, np.ndarray, float], bool]] = None,
) -> OptimizeResult:
    """Simultaneous-perturbation stochastic approximation.

    Each iteration evaluates ``fun`` at ``x +- c_k * delta`` with a
    Rademacher ``delta`` and steps ``x -= a_k * (y+ - y-) / (2 c_k) * delta``.
    ``trace[k]`` is ``(y+ + y-) / 2``, the cost estimate around iterate
    ``k``; the last iterate is returned.  Perturbations come from a PCG64
    stream seeded by ``seed`` and are independent of any noise inside
    ``fun``.
    """
    x = _validated_start(x0)
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    rng = make_rng(seed)
    stability = max_iter / 10 if gains.A is None else gains.A
    trace = []
    nfev = 0
    converged, message = True, "iteration budget used"
    for k in range(max_iter):
        ak = gains.a / (k + 1 + stability) ** gains.alpha
        ck = gains.c / (k + 1) ** gains.gamma
        delta = rng.choice((-1.0, 1.0), size=x.size)
        y_plus = float(fun(x + ck * delta))
        y_minus = float(fun(x - ck * delta))
        nfev += 2
        x = x - ak * (y_plus - y_minus) / (2 * ck) * delta
        trace.append(0.5 * (y_plus + y_minus))
        if callback is not None and callback(k + 1, x, trace[-1]):
            message = "stopped by callback"
            break
    return OptimizeResult(x, trace[-1], trace, len(trace), nfev, converged, message)
