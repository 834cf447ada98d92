"""Eigenvalue analysis of preconditioned operators.

For SPD ``A`` and ``B`` the product ``BA`` is symmetric in the inner
products induced by either factor, so its spectrum is real and positive.
Small problems get the full spectrum through a dense congruence
(``eig(BA) = eig(L^T B L)`` with ``A = L L^T``); larger ones get extreme
Ritz values from a Lanczos recurrence run in the A-inner product.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

__all__ = [
    "SpectrumReport",
    "condition_numbers",
    "dense_spectrum",
    "lanczos_extremes",
    "pcg_bound",
]

GAP_RATIO = 10.0


@dataclass(frozen=True)
class SpectrumReport:
    """Ascending eigenvalues of a preconditioned operator.

    ``m_candidates`` counts eigenvalues sitting below the largest
    consecutive gap found in the lower half of the spectrum, or 0 when no
    gap reaches a factor of ``GAP_RATIO``.
    """

    eigenvalues: np.ndarray
    method: str
    m_candidates: int

    def to_csv(self, path):
        with open(path, "w") as fh:
            for ev in self.eigenvalues:
                fh.write(f"{float(ev)!r}\n")


def _detect_gap(eigenvalues):
    n = len(eigenvalues)
    half = n // 2
    if half < 1:
        return 0
    ratios = eigenvalues[1:half + 1] / eigenvalues[:half]
    j = int(np.argmax(ratios))
    return j + 1 if ratios[j] >= GAP_RATIO else 0


def _as_dense(A):
    if sp.issparse(A):
        return A.toarray()
    return np.asarray(A, dtype=float)


def dense_spectrum(A, B_explicit):
    """Full spectrum of ``BA`` from the dense matrices of both factors."""
    Ad = _as_dense(A)
    try:
        L = sla.cholesky(Ad, lower=True)
    except sla.LinAlgError as exc:
        raise ValueError(f"operator is not SPD: {exc}") from exc
    M = L.T @ _as_dense(B_explicit) @ L
    eigenvalues = sla.eigvalsh(0.5 * (M + M.T))
    return SpectrumReport(eigenvalues=eigenvalues, method="dense",
                          m_candidates=_detect_gap(eigenvalues))


def lanczos_extremes(A, B_apply, k, iters=200, seed=0):
    """Extreme eigenvalues of ``BA`` by Lanczos in the A-inner product.

    Runs ``iters`` steps with full reorthogonalization against the stored
    basis and returns the ``k`` smallest and ``k`` largest Ritz values.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    n = A.shape[0]
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n)

    basis = []      # A-orthonormal Lanczos vectors
    a_basis = []    # A @ v for each, reused in reorthogonalization
    alphas = []
    betas = []

    Av = A @ v
    norm = np.sqrt(Av @ v)
    v /= norm
    Av /= norm
    for _ in range(max(1, iters)):
        basis.append(v)
        a_basis.append(Av)
        w = B_apply(Av)
        alphas.append(float(w @ Av))
        # full reorthogonalization (two passes for safety)
        for _ in range(2):
            for u, Au in zip(basis, a_basis):
                w = w - (w @ Au) * u
        Aw = A @ w
        beta = np.sqrt(max(float(Aw @ w), 0.0))
        if beta <= 1e-13 * max(abs(a) for a in alphas):
            break  # happy breakdown: invariant subspace found
        betas.append(beta)
        v = w / beta
        Av = Aw / beta
    ritz = sla.eigvalsh_tridiagonal(np.array(alphas),
                                    np.array(betas[:len(alphas) - 1]))
    if len(ritz) > 2 * k:
        ritz = np.concatenate([ritz[:k], ritz[-k:]])
    eigenvalues = np.sort(ritz)
    return SpectrumReport(eigenvalues=eigenvalues, method="lanczos",
                          m_candidates=_detect_gap(eigenvalues))


def condition_numbers(report, m):
    """Condition number and the m-th effective condition number.

    With eigenvalues ascending, ``kappa_m`` discards the ``m`` smallest:
    ``kappa_m = lambda_max / lambda_{m+1}``; ``m = 0`` reproduces the
    plain condition number.
    """
    ev = report.eigenvalues
    if not 0 <= m < len(ev):
        raise ValueError(f"m = {m} out of range for {len(ev)} eigenvalues")
    kappa = float(ev[-1] / ev[0])
    kappa_m = float(ev[-1] / ev[m])
    return kappa, kappa_m


def pcg_bound(report, m, k, variant="kappa"):
    """Upper bound on the PCG energy-error ratio after ``k`` iterations
    when ``m`` small outliers are excluded.

    ``variant="kappa"`` uses the coarse outlier factor ``(kappa - 1)^m``;
    ``variant="kfactor"`` sharpens it to ``prod_i |1 - lambda_max /
    lambda_i|`` over the outliers.
    """
    if k <= m:
        raise ValueError("bound requires k > m")
    ev = report.eigenvalues
    kappa, kappa_m = condition_numbers(report, m)
    if variant == "kappa":
        factor = (kappa - 1.0) ** m
    elif variant == "kfactor":
        factor = float(np.prod([abs(1.0 - ev[-1] / ev[i]) for i in range(m)]))
    else:
        raise ValueError(f"unknown variant {variant!r}")
    root = np.sqrt(kappa_m)
    return 2.0 * factor * ((root - 1.0) / (root + 1.0)) ** (k - m)
