"""Damped least-squares (Levenberg-style) fitting with analytic Jacobians.

Small, self-contained Gauss-Newton iteration with multiplicative damping.
Parameter uncertainties come from the unscaled inverse normal matrix, which is
the right covariance when residuals are pre-weighted by known measurement
errors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, FitNonConvergenceError

__all__ = ["FitResult", "damped_least_squares", "finite_difference_jacobian"]

MAX_ITERATIONS = 200
REL_STEP_TOL = 1e-10


@dataclass(frozen=True)
class FitResult:
    """Converged fit: parameter values, 1-sigma errors, and diagnostics."""

    names: tuple[str, ...]
    values: tuple[float, ...]
    sigmas: tuple[float, ...]
    covariance: np.ndarray
    residual_norm: float
    iterations: int
    converged: bool
    at_boundary: bool = False

    def value(self, name: str) -> float:
        return self.values[self.names.index(name)]

    def sigma(self, name: str) -> float:
        return self.sigmas[self.names.index(name)]

    def to_dict(self) -> dict:
        return {
            "parameters": {
                name: {"value": v, "sigma": s}
                for name, v, s in zip(self.names, self.values, self.sigmas)
            },
            "residual_norm": self.residual_norm,
            "iterations": self.iterations,
            "converged": self.converged,
            "at_boundary": self.at_boundary,
        }


def finite_difference_jacobian(residual_fn, x: np.ndarray, step: float = 1e-7) -> np.ndarray:
    """Forward-difference Jacobian for models without an analytic one."""
    r0 = np.asarray(residual_fn(x), dtype=float)
    jac = np.empty((r0.size, x.size))
    for j in range(x.size):
        xs = x.copy()
        h = step * max(abs(xs[j]), 1.0)
        xs[j] += h
        jac[:, j] = (np.asarray(residual_fn(xs), dtype=float) - r0) / h
    return jac


def _covariance(jac: np.ndarray) -> np.ndarray:
    jtj = jac.T @ jac
    try:
        return np.linalg.inv(jtj)
    except np.linalg.LinAlgError:
        return np.linalg.pinv(jtj)


def damped_least_squares(
    residual_fn,
    x0,
    jacobian_fn=None,
    names=None,
    bounds=None,
    max_iterations: int = MAX_ITERATIONS,
    rel_step_tol: float = REL_STEP_TOL,
) -> FitResult:
    """Minimize ||residual_fn(x)||^2 from x0.

    Parameters
    ----------
    residual_fn : callable
        Maps a parameter vector to the residual vector (already weighted).
    x0 : array_like
        Starting parameter vector.
    jacobian_fn : callable, optional
        Analytic Jacobian d residual / d x; finite differences when omitted.
    names : sequence of str, optional
        Parameter names for the FitResult; defaults to p0, p1, ...
    bounds : sequence of (lo, hi), optional
        Box constraints enforced by clipping trial steps.  A solution pinned
        to a bound is reported with at_boundary=True.

    Raises
    ------
    FitNonConvergenceError
        If the relative step never falls below rel_step_tol within
        max_iterations.
    """
    x = np.asarray(x0, dtype=float).copy()
    if x.ndim != 1 or x.size == 0:
        raise DomainError("x0 must be a non-empty 1-d parameter vector")
    if names is None:
        names = tuple(f"p{i}" for i in range(x.size))
    names = tuple(names)
    if jacobian_fn is None:
        jacobian_fn = lambda xv: finite_difference_jacobian(residual_fn, xv)

    lo = hi = None
    if bounds is not None:
        lo = np.array([b[0] for b in bounds], dtype=float)
        hi = np.array([b[1] for b in bounds], dtype=float)
        x = np.clip(x, lo, hi)

    def clip(v: np.ndarray) -> np.ndarray:
        return np.clip(v, lo, hi) if bounds is not None else v

    r = np.asarray(residual_fn(x), dtype=float)
    cost = float(r @ r)
    lam = 1e-3
    converged = False
    iterations = 0

    for iterations in range(1, max_iterations + 1):
        jac = np.asarray(jacobian_fn(x), dtype=float)
        jtj = jac.T @ jac
        grad = jac.T @ r
        step_accepted = False
        for _ in range(50):
            damped = jtj + lam * np.diag(np.clip(np.diag(jtj), 1e-30, None))
            try:
                delta = np.linalg.solve(damped, -grad)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            trial = clip(x + delta)
            r_trial = np.asarray(residual_fn(trial), dtype=float)
            cost_trial = float(r_trial @ r_trial)
            if cost_trial <= cost + 1e-15:
                step_size = float(np.linalg.norm(trial - x))
                x, r, cost = trial, r_trial, cost_trial
                lam = max(lam / 3.0, 1e-12)
                step_accepted = True
                break
            lam *= 10.0
        if not step_accepted:
            # damping saturated: no downhill direction left, treat as converged
            converged = True
            break
        if step_size <= rel_step_tol * (np.linalg.norm(x) + rel_step_tol):
            converged = True
            break

    if not converged:
        raise FitNonConvergenceError(
            f"no convergence after {max_iterations} iterations "
            f"(residual norm {np.sqrt(cost):.6g})",
            iterations=max_iterations,
            residual_norm=float(np.sqrt(cost)),
        )

    jac = np.asarray(jacobian_fn(x), dtype=float)
    cov = _covariance(jac)
    sigmas = tuple(float(s) for s in np.sqrt(np.clip(np.diag(cov), 0.0, None)))
    at_boundary = bool(
        bounds is not None and (np.any(np.isclose(x, lo)) or np.any(np.isclose(x, hi)))
    )
    return FitResult(
        names=names,
        values=tuple(float(v) for v in x),
        sigmas=sigmas,
        covariance=cov,
        residual_norm=float(np.sqrt(cost)),
        iterations=iterations,
        converged=True,
        at_boundary=at_boundary,
    )
