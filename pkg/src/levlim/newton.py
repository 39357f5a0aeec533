"""Damped Newton iteration for small square systems with a finite-difference Jacobian."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ConvergenceError, DomainError


@dataclass
class NewtonResult:
    x: np.ndarray
    residual: np.ndarray
    residual_norm: float
    iterations: int


def fd_jacobian(func, x, fx=None, rel_step=1e-6):
    """Central differences with step rel_step * (1 + |x_j|) per coordinate."""
    x = np.asarray(x, dtype=float)
    n = x.size
    jac = np.empty((len(fx) if fx is not None else n, n))
    for j in range(n):
        step = rel_step * (1.0 + abs(x[j]))
        xp = x.copy()
        xm = x.copy()
        xp[j] += step
        xm[j] -= step
        jac[:, j] = (np.asarray(func(xp)) - np.asarray(func(xm))) / (2.0 * step)
    return jac


def damped_newton(
    func: Callable[[np.ndarray], np.ndarray],
    x0,
    tol: float = 1e-11,
    max_iter: int = 100,
    max_halvings: int = 8,
    rel_step: float = 1e-6,
    admissible: Optional[Callable[[np.ndarray], bool]] = None,
) -> NewtonResult:
    """Solve func(x) = 0 from x0.

    Each Newton step is halved until the residual infinity norm decreases and the
    trial point is admissible; after ``max_halvings`` the smallest admissible trial
    is accepted so the iteration can leave shallow plateaus.  Convergence is
    declared when the infinity norm of the residual drops below ``tol``.
    """
    x = np.asarray(x0, dtype=float).copy()
    if admissible is not None and not admissible(x):
        raise DomainError(f"Newton start {x} is outside the admissible domain")
    fx = np.asarray(func(x), dtype=float)
    norm = float(np.max(np.abs(fx)))
    for it in range(max_iter + 1):
        if not np.all(np.isfinite(fx)):
            raise ConvergenceError("non-finite residual", last_iterate=x, residual_norm=norm, iterations=it)
        if norm < tol:
            return NewtonResult(x, fx, norm, it)
        if it == max_iter:
            break
        jac = fd_jacobian(func, x, fx, rel_step)
        try:
            dx = np.linalg.solve(jac, -fx)
        except np.linalg.LinAlgError:
            raise ConvergenceError("singular Jacobian", last_iterate=x, residual_norm=norm, iterations=it)
        t = 1.0
        fallback = None
        for _ in range(max_halvings + 1):
            trial = x + t * dx
            if admissible is None or admissible(trial):
                f_trial = np.asarray(func(trial), dtype=float)
                n_trial = float(np.max(np.abs(f_trial)))
                if np.isfinite(n_trial):
                    fallback = (trial, f_trial, n_trial)
                    if n_trial < norm:
                        break
            t *= 0.5
        if fallback is None:
            raise ConvergenceError(
                "every damped step left the admissible domain",
                last_iterate=x,
                residual_norm=norm,
                iterations=it,
            )
        x, fx, norm = fallback
    raise ConvergenceError(
        f"no convergence after {max_iter} iterations (residual {norm:.3e})",
        last_iterate=x,
        residual_norm=norm,
        iterations=max_iter,
    )
