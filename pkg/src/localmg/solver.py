"""Conjugate gradient solvers with energy-norm increment stopping.

The stopping test is relative: iterate until

    ||u_k - u_{k-1}||_A / ||u_k||_A <= tol,

which the CG recurrence provides for free as |alpha_k| * ||p_k||_A.  A
residual-based escape hatch (``||r|| <= 100 eps ||b||``) terminates runs
that hit machine precision before the increment ratio can fall below the
tolerance -- an exact-inverse preconditioner, for example, produces the
solution in one step with increment ratio 1.
"""

import csv
import json
import time
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "BreakdownError",
    "SolveReport",
    "cg",
    "pcg",
    "stationary_iterate",
]

_RESIDUAL_FLOOR = 100.0 * np.finfo(float).eps


class BreakdownError(RuntimeError):
    """The Krylov recurrence hit nonpositive curvature or a vanishing
    inner product; the operator or preconditioner is not SPD."""


@dataclass
class SolveReport:
    """Telemetry for one linear solve.

    ``history`` holds one ``(increment_ratio, residual_norm)`` pair per
    iteration performed.
    """

    iterations: int = 0
    converged: bool = False
    wall_time: float = 0.0
    history: list = field(default_factory=list)

    def to_json(self, path):
        payload = {
            "iterations": self.iterations,
            "converged": self.converged,
            "wall_time": self.wall_time,
            "history": [{"increment_ratio": a, "residual_norm": b}
                        for a, b in self.history],
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2)

    def history_to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["k", "increment_ratio", "residual_norm"])
            for k, (ratio, rnorm) in enumerate(self.history, start=1):
                writer.writerow([k, repr(ratio), repr(rnorm)])


def _check_finite(value, what):
    if not np.isfinite(value):
        raise BreakdownError(f"{what} became non-finite")


def pcg(A, b, B=None, x0=None, tol=1e-10, maxit=1000):
    """Preconditioned conjugate gradients.

    Parameters
    ----------
    A : sparse matrix or LinearOperator-like with ``@`` support; SPD.
    b : right-hand side vector.
    B : callable applying the (SPD) preconditioner, or None for plain CG.
    x0 : initial guess, default zero.
    tol : increment-ratio tolerance.
    maxit : iteration cap.

    Returns ``(x, SolveReport)``.
    """
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    t0 = time.perf_counter()
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    report = SolveReport()

    Ax = A @ x
    r = b - Ax
    bnorm = np.linalg.norm(b)
    floor = _RESIDUAL_FLOOR * max(bnorm, 1e-300)
    if np.linalg.norm(r) <= floor:
        report.converged = True
        report.wall_time = time.perf_counter() - t0
        return x, report

    z = B(r) if B is not None else r
    p = z.copy()
    rz = float(r @ z)
    for k in range(1, maxit + 1):
        Ap = A @ p
        pAp = float(p @ Ap)
        _check_finite(pAp, "curvature")
        if pAp <= 0.0:
            raise BreakdownError(
                f"nonpositive curvature p^T A p = {pAp:.3e} at iteration {k}")
        alpha = rz / pAp
        x += alpha * p
        Ax += alpha * Ap
        r -= alpha * Ap
        increment = abs(alpha) * np.sqrt(pAp)
        xnorm_a = np.sqrt(max(float(x @ Ax), 0.0))
        ratio = increment / xnorm_a if xnorm_a > 0.0 else np.inf
        rnorm = float(np.linalg.norm(r))
        _check_finite(rnorm, "residual norm")
        report.history.append((ratio, rnorm))
        report.iterations = k
        if ratio <= tol or rnorm <= floor:
            report.converged = True
            break
        z = B(r) if B is not None else r
        rz_next = float(r @ z)
        _check_finite(rz_next, "preconditioned inner product")
        if rz_next <= 0.0:
            raise BreakdownError(
                f"nonpositive inner product (r, Br) = {rz_next:.3e}; "
                "preconditioner is not SPD")
        if abs(rz) < 1e-300:
            raise BreakdownError("vanishing denominator in the CG recurrence")
        beta = rz_next / rz
        p = z + beta * p
        rz = rz_next
    report.wall_time = time.perf_counter() - t0
    return x, report


def cg(A, b, x0=None, tol=1e-10, maxit=1000):
    """Unpreconditioned conjugate gradients (identity preconditioner)."""
    return pcg(A, b, B=None, x0=x0, tol=tol, maxit=maxit)


def stationary_iterate(A, b, B, x0=None, tol=1e-10, maxit=1000):
    """Stationary iteration ``u <- u + B(b - Au)`` with the same stopping
    rule as :func:`pcg`.

    Requires ``||I - BA||_A < 1`` to converge; a divergence guard reports
    failure once the increment grows tenfold over its initial size.
    """
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    t0 = time.perf_counter()
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    report = SolveReport()

    Ax = A @ x
    r = b - Ax
    bnorm = np.linalg.norm(b)
    floor = _RESIDUAL_FLOOR * max(bnorm, 1e-300)
    if np.linalg.norm(r) <= floor:
        report.converged = True
        report.wall_time = time.perf_counter() - t0
        return x, report

    first_increment = None
    for k in range(1, maxit + 1):
        c = B(r)
        Ac = A @ c
        x += c
        Ax += Ac
        r -= Ac
        increment = np.sqrt(max(float(c @ Ac), 0.0))
        _check_finite(increment, "increment norm")
        xnorm_a = np.sqrt(max(float(x @ Ax), 0.0))
        ratio = increment / xnorm_a if xnorm_a > 0.0 else np.inf
        rnorm = float(np.linalg.norm(r))
        _check_finite(rnorm, "residual norm")
        report.history.append((ratio, rnorm))
        report.iterations = k
        if first_increment is None:
            first_increment = increment
        if ratio <= tol or rnorm <= floor:
            report.converged = True
            break
        if increment > 10.0 * first_increment:
            break
    report.wall_time = time.perf_counter() - t0
    return x, report
