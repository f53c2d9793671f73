"""The non-adaptive program ``max_v (lambda + shift) . v - log Z(v)``.

``Z(v) = sum_r exp(r . v)`` over the feasible vectors.  The objective is
strictly concave with gradient ``lambda + shift - s_v`` and Hessian equal to
minus the covariance of ``r`` under ``pi_v``, so a damped Newton ascent
converges to the unique maximizer ``v*`` whenever the target lies strictly
inside the convex hull of the feasible vectors.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import ContractError, ConvergenceError
from .region import hull_margin

HULL_LP_GATE = 4096


@dataclass(frozen=True, eq=False)
class ProgramSpec:
    """``grid``, arrival rates ``lam`` and the uniform target shift (``eps/4``)."""

    grid: object
    lam: np.ndarray
    epsilon_shift: float = 0.0

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=float).ravel()
        if lam.shape != (self.grid.n,):
            raise ContractError(f"lambda must have {self.grid.n} entries")
        if np.any(lam <= 0):
            raise ContractError("lambda must be strictly positive")
        if self.epsilon_shift < 0:
            raise ContractError("epsilon_shift must be nonnegative")
        object.__setattr__(self, "lam", lam)

    @classmethod
    def shifted(cls, grid, lam, epsilon):
        """The epsilon-shifted program: target ``lam + eps/4``."""
        return cls(grid, lam, epsilon / 4.0)

    @property
    def target(self):
        return self.lam + self.epsilon_shift

    @property
    def vectors(self):
        return self.grid.vectors


def _pi(vectors, v):
    lw = vectors @ v
    lz = logsumexp(lw)
    return np.exp(lw - lz), lz


def objective(spec, v):
    v = _vec(spec, v)
    return float(spec.target @ v - logsumexp(spec.vectors @ v))


def gradient(spec, v):
    v = _vec(spec, v)
    pi, _ = _pi(spec.vectors, v)
    return spec.target - pi @ spec.vectors


def hessian(spec, v):
    v = _vec(spec, v)
    pi, _ = _pi(spec.vectors, v)
    R = spec.vectors
    mean = pi @ R
    C = R - mean
    return -((C * pi[:, None]).T @ C)


def _vec(spec, v):
    v = np.asarray(v, dtype=float).ravel()
    if v.shape != (spec.grid.n,):
        raise ContractError(f"v must have {spec.grid.n} entries")
    return v


def vstar_norm_bound(grid, epsilon):
    """``(16 K_hi / K_lo) (n / eps) log ceil(2 K_hi / eps)``."""
    k_hi, k_lo, n = grid.k_hi, grid.k_lo, grid.n
    return 16.0 * k_hi / k_lo * n / epsilon * math.log(math.ceil(2.0 * k_hi / epsilon - 1e-12))


def vstar_box(grid, lam, delta):
    """Box ``(v_min_lo, v_max_hi)`` containing ``v*`` given ``lam + delta K_hi 1`` in the hull.

    ``v*_max <= 4 log|R| / (K_lo m)`` and ``v*_min >= -4 log|R| / (K_hi m)``
    with ``m = min(delta, lam_min / K_hi)``.
    """
    lam = np.asarray(lam, dtype=float)
    m = min(delta, float(lam.min()) / grid.k_hi)
    logR = math.log(grid.size)
    return -4.0 * logR / (grid.k_hi * m), 4.0 * logR / (grid.k_lo * m)


@dataclass
class SolveReport:
    v_star: np.ndarray
    objective: float
    grad_norm: float
    iterations: int
    s_at_vstar: np.ndarray
    bound_check: bool | None = None
    bound_value: float | None = None
    interior_margin: float | None = None
    warnings: list = field(default_factory=list)

    def to_dict(self):
        return {
            "v_star": self.v_star.tolist(),
            "objective": self.objective,
            "grad_norm": self.grad_norm,
            "iterations": self.iterations,
            "s_at_vstar": self.s_at_vstar.tolist(),
            "bound_check": self.bound_check,
            "bound_value": self.bound_value,
            "interior_margin": self.interior_margin,
            "warnings": list(self.warnings),
        }


def solve_vstar(spec, tol=1e-8, max_iter=500, v0=None, newton=True, check_interior=True):
    """Maximize the program by damped Newton (or gradient) ascent.

    Each step is accepted only under an Armijo condition, so the objective
    never decreases.  Convergence means ``||grad||_inf <= tol``, which is
    the same as ``||s_v - target||_inf <= tol``.  Raises
    :class:`ConvergenceError` with the last iterate otherwise; a target on
    or outside the hull boundary is the usual cause.
    """
    R = spec.vectors
    n = spec.grid.n
    target = spec.target
    notes = []
    margin = None
    if check_interior:
        if spec.grid.size <= HULL_LP_GATE:
            margin = hull_margin(R, target)
            if margin <= 0:
                notes.append(f"target is not strictly inside the hull (margin {margin:.3g})")
                warnings.warn(notes[-1], RuntimeWarning, stacklevel=2)
        else:
            notes.append("interior check skipped above the LP gate")
            warnings.warn(notes[-1], RuntimeWarning, stacklevel=2)

    v = np.zeros(n) if v0 is None else np.asarray(v0, dtype=float).copy()
    use_newton = newton and spec.grid.size <= 4096

    def evaluate(v):
        pi, lz = _pi(R, v)
        mean = pi @ R
        return float(target @ v - lz), target - mean, pi, mean

    f, g, pi, mean = evaluate(v)
    it = 0
    while it < max_iter:
        gnorm = float(np.abs(g).max())
        if gnorm <= tol:
            break
        it += 1
        direction = g
        if use_newton:
            C = R - mean
            cov = (C * pi[:, None]).T @ C
            try:
                direction = np.linalg.solve(cov + 1e-14 * np.eye(n), g)
            except np.linalg.LinAlgError:
                direction = g
            if not np.all(np.isfinite(direction)) or direction @ g <= 0:
                direction = g
        slope = float(direction @ g)
        step = 1.0
        while True:
            cand = v + step * direction
            f_new, g_new, pi_new, mean_new = evaluate(cand)
            if f_new >= f + 1e-4 * step * slope or step < 1e-12:
                break
            step *= 0.5
        if step < 1e-12 and f_new < f:
            break
        v, f, g, pi, mean = cand, f_new, g_new, pi_new, mean_new
        if not np.all(np.isfinite(v)):
            break

    gnorm = float(np.abs(g).max())
    if not gnorm <= tol:
        raise ConvergenceError(
            f"ascent stopped after {it} iterations with ||grad||_inf = {gnorm:.3g}",
            v_last=v,
            grad_norm=gnorm,
            iterations=it,
        )

    report = SolveReport(
        v_star=v,
        objective=f,
        grad_norm=gnorm,
        iterations=it,
        s_at_vstar=mean,
        interior_margin=margin,
        warnings=notes,
    )
    if spec.epsilon_shift > 0:
        eps = 4.0 * spec.epsilon_shift
        if eps <= 4.0 * spec.lam.min():
            report.bound_value = vstar_norm_bound(spec.grid, eps)
            report.bound_check = bool(np.abs(v).max() <= report.bound_value)
    return report
