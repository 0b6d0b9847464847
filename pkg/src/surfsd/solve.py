"""Linear solvers and 2-norm condition-number estimation."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import NoConvergence, SingularSystem

log = logging.getLogger(__name__)

DENSE_LIMIT = 2000


@dataclass
class SolveReport:
    solution: np.ndarray
    iterations: int
    final_residual: float
    method: str


def relative_residual(a, x, b) -> float:
    nb = np.linalg.norm(b)
    r = np.linalg.norm(b - a @ x)
    return float(r / nb) if nb > 0 else float(r)


def _as_operator(system):
    if hasattr(system, "full_matrix"):
        return system.full_matrix, system.full_rhs
    a, b = system
    return sp.csr_matrix(a), np.asarray(b, dtype=float)


def _jacobi(a):
    d = a.diagonal().copy()
    d[d == 0] = 1.0
    inv = 1.0 / d
    return spla.LinearOperator(a.shape, matvec=lambda v: inv * v, dtype=float)


REFINE_STEPS = 3


def _refine(a, b, x, back, tol):
    """A few steps of iterative refinement with an existing factorization."""
    res = relative_residual(a, x, b)
    steps = 0
    while res > tol and steps < REFINE_STEPS:
        x = x + back(b - a @ x)
        res = relative_residual(a, x, b)
        steps += 1
    return x, res, steps


def solve(system, tol: float = 1e-10, max_iter: int = 2000, method: str = "auto") -> SolveReport:
    """Solve ``system`` (a ``LinearSystem`` or an ``(A, b)`` pair).

    ``auto`` factorizes densely up to ``DENSE_LIMIT`` unknowns and uses a
    sparse LU beyond.  ``gmres`` runs Jacobi-preconditioned restarted GMRES
    and falls back to the sparse LU when it misses ``tol`` within
    ``max_iter`` restarts; ``dense`` and ``splu`` force one factorization.
    For a constrained system the returned solution excludes the multiplier.
    """
    a, b = _as_operator(system)
    n = a.shape[0]
    n_keep = system.n_dofs if hasattr(system, "n_dofs") else n
    if not 0 < tol < 1:
        raise ValueError("tol must lie in (0, 1)")
    if method == "auto":
        method = "dense" if n <= DENSE_LIMIT else "splu"

    if method == "dense":
        dense = a.toarray()
        try:
            lu, piv = sla.lu_factor(dense, check_finite=False)
        except (ValueError, sla.LinAlgError) as exc:
            raise SingularSystem(str(exc)) from exc
        if np.any(np.abs(np.diag(lu)) <= np.finfo(float).eps * np.abs(dense).max() * n):
            raise SingularSystem("zero pivot in dense LU factorization")
        back = lambda r: sla.lu_solve((lu, piv), r)
        x, res, steps = _refine(a, b, back(b), back, tol)
        return SolveReport(x[:n_keep], 1 + steps, res, "dense-lu")

    if method == "gmres":
        count = [0]

        def _cb(_):
            count[0] += 1

        x, info = spla.gmres(a, b, rtol=tol, atol=0.0, restart=min(200, n), maxiter=max_iter,
                             M=_jacobi(a), callback=_cb, callback_type="pr_norm")
        res = relative_residual(a, x, b)
        if info == 0 and res <= tol:
            return SolveReport(x[:n_keep], count[0], res, "gmres-jacobi")
        log.info("GMRES stopped at residual %.3e after %d iterations; using sparse LU", res, count[0])
        report = solve((a, b), tol, max_iter, "splu")
        report.solution = report.solution[:n_keep]
        report.iterations += count[0]
        report.method = "gmres-jacobi+splu"
        return report

    if method == "splu":
        try:
            lu = spla.splu(a.tocsc())
        except RuntimeError as exc:
            raise SingularSystem(str(exc)) from exc
        x = lu.solve(b)
        if not np.all(np.isfinite(x)):
            raise SingularSystem("sparse LU produced non-finite values")
        x, res, steps = _refine(a, b, x, lu.solve, tol)
        if res > tol:
            raise NoConvergence(f"sparse LU residual {res:.3e} above {tol:.1e}",
                                SolveReport(x[:n_keep], 1 + steps, res, "splu"))
        return SolveReport(x[:n_keep], 1 + steps, res, "splu")

    raise ValueError(f"unknown method {method!r}")


@dataclass
class ConditionEstimate:
    sigma_max: float
    sigma_min: float
    iterations: int
    augmented: bool = False

    @property
    def kappa(self) -> float:
        return self.sigma_max / self.sigma_min


def _start_vector(n, seed):
    v = np.random.default_rng(seed).standard_normal(n)
    return v / np.linalg.norm(v)


def power_sigma_max(a, tol=1e-3, max_iter=20000, seed=0):
    """Largest singular value by power iteration on ``A^T A``.

    Stops when the Rayleigh estimate changes by less than ``tol**2`` relative
    per step; the Rayleigh value never exceeds the true ``sigma_max``.
    """
    v = _start_vector(a.shape[1], seed)
    est = 0.0
    for it in range(1, max_iter + 1):
        w = a.T @ (a @ v)
        lam = float(v @ w)
        nw = np.linalg.norm(w)
        if nw == 0:
            return 0.0, it
        v = w / nw
        new = np.sqrt(lam)
        if it > 1 and abs(new - est) <= tol * tol * new:
            return new, it
        est = new
    raise NoConvergence(f"power iteration did not converge in {max_iter} steps", est)


def inverse_sigma_min(a, tol=1e-3, max_iter=20000, seed=1):
    """Smallest singular value by inverse iteration on ``A^T A``.

    One sparse LU factorization of ``A`` serves every application of
    ``(A^T A)^{-1}``.
    """
    try:
        lu = spla.splu(sp.csc_matrix(a))
    except RuntimeError as exc:
        raise SingularSystem(str(exc)) from exc
    v = _start_vector(a.shape[1], seed)
    est = np.inf
    for it in range(1, max_iter + 1):
        y = lu.solve(v)
        w = lu.solve(y, trans="T")
        mu = float(v @ w)  # Rayleigh quotient of (A^T A)^{-1}
        if not np.isfinite(mu) or mu <= 0:
            raise SingularSystem("inverse iteration broke down")
        v = w / np.linalg.norm(w)
        new = 1.0 / np.sqrt(mu)
        if it > 1 and abs(new - est) <= tol * tol * new:
            return new, it
        est = new
    raise NoConvergence(f"inverse iteration did not converge in {max_iter} steps", est)


def estimate_condition_number(system, tol: float = 1e-3, seed: int = 0) -> ConditionEstimate:
    """2-norm condition number of the solved matrix."""
    if hasattr(system, "full_matrix"):
        a = system.full_matrix
        augmented = system.constraint is not None
    else:
        a = sp.csr_matrix(system)
        augmented = False
    smax, it1 = power_sigma_max(a, tol, seed=seed)
    smin, it2 = inverse_sigma_min(a, tol, seed=seed + 1)
    return ConditionEstimate(smax, smin, it1 + it2, augmented)


def dense_singular_values(a) -> np.ndarray:
    a = a.toarray() if sp.issparse(a) else np.asarray(a)
    return np.linalg.svd(a, compute_uv=False)
