"""Symmetric/PSD linear-algebra kernels.

Every matrix consumed by the beamforming and index code is symmetric (most
are positive definite), so all decompositions here go through ``eigh`` with
a fixed ordering and sign convention.  Generic LU inverses are deliberately
avoided: eigendecomposition-based inverses preserve symmetry exactly and
make results reproducible across BLAS builds.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ContractViolation(ValueError):
    """An input broke a numerical precondition (asymmetry, indefiniteness, ...)."""


@dataclass(frozen=True)
class SymEig:
    """Eigendecomposition of a symmetric matrix, eigenvalues non-increasing.

    Attributes
    ----------
    eigenvalues : ndarray, shape (n,)
        Sorted in non-increasing order.
    eigenvectors : ndarray, shape (n, n)
        Orthogonal; column ``i`` pairs with ``eigenvalues[i]``.  Each column
        is sign-canonicalized (largest-magnitude entry positive) and tied
        eigenvalue groups are ordered lexicographically by coordinates, so
        the decomposition is deterministic.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


@dataclass(frozen=True)
class SpectralProjector:
    """Orthogonal projector onto a leading eigenspace.

    ``matrix`` is symmetric idempotent with ``trace == rank``.
    """

    matrix: np.ndarray
    rank: int


def _as_symmetric(a: np.ndarray, rel_tol: float = 1e-12) -> np.ndarray:
    """Symmetrize ``a`` as (A + A^t)/2, rejecting genuinely asymmetric input.

    Sample covariances accumulate asymmetric rounding, so asymmetry up to
    ``rel_tol`` (relative to the largest magnitude entry) is repaired
    silently; anything larger is a contract violation.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ContractViolation(f"expected a square matrix, got shape {a.shape}")
    scale = max(np.abs(a).max(), 1.0)
    asym = np.abs(a - a.T).max()
    if asym > rel_tol * scale:
        raise ContractViolation(
            f"matrix is not symmetric: max |A - A^t| = {asym:.3e} "
            f"exceeds {rel_tol:.1e} * {scale:.3e}"
        )
    return 0.5 * (a + a.T)


def sym_eig(a: np.ndarray) -> SymEig:
    """Eigendecomposition of a symmetric matrix with a deterministic layout.

    Eigenvalues are returned in non-increasing order.  Each eigenvector is
    sign-canonicalized so that its largest-magnitude entry is positive, and
    within groups of (numerically) equal eigenvalues the columns are sorted
    lexicographically by their coordinates.  For degenerate spectra the
    individual eigenvectors are basis-dependent, but the output is a
    deterministic function of the input.

    Raises
    ------
    ContractViolation
        If the input is not symmetric within a 1e-12 relative tolerance.
    """
    a = _as_symmetric(a)
    w, v = np.linalg.eigh(a)
    w = w[::-1]
    v = v[:, ::-1]
    # Sign convention: largest-magnitude entry of each column positive.
    pivots = np.abs(v).argmax(axis=0)
    signs = np.sign(v[pivots, np.arange(v.shape[1])])
    signs[signs == 0] = 1.0
    v = v * signs
    # Canonical order inside tied groups.
    scale = max(np.abs(w[0]), np.abs(w[-1]), 1.0)
    tie_tol = 1e-12 * scale
    i = 0
    n = len(w)
    while i < n:
        j = i + 1
        while j < n and abs(w[j] - w[i]) <= tie_tol:
            j += 1
        if j - i > 1:
            block = v[:, i:j]
            order = np.lexsort(block[::-1])
            v[:, i:j] = block[:, order]
        i = j
    w = w.copy()
    w.flags.writeable = False
    v.flags.writeable = False
    return SymEig(eigenvalues=w, eigenvectors=v)


def _clamped_psd_eigenvalues(eig: SymEig, context: str) -> np.ndarray:
    """Clamp slightly negative eigenvalues to zero; reject indefinite input."""
    w = eig.eigenvalues
    lam_max = max(w[0], 0.0)
    floor = -1e-10 * max(lam_max, 1.0)
    if w[-1] < floor:
        raise ContractViolation(
            f"{context}: matrix is not PSD, smallest eigenvalue {w[-1]:.6e} "
            f"is below the clamp threshold {floor:.6e}"
        )
    return np.maximum(w, 0.0)


def psd_sqrt(a: np.ndarray) -> np.ndarray:
    """Unique PSD square root of a PSD matrix.

    Eigenvalues within ``-1e-10 * lambda_max`` of zero are clamped to zero;
    more negative spectra raise, naming the offending eigenvalue.
    """
    eig = sym_eig(a)
    w = _clamped_psd_eigenvalues(eig, "psd_sqrt")
    v = eig.eigenvectors
    root = (v * np.sqrt(w)) @ v.T
    return 0.5 * (root + root.T)


def psd_inv(a: np.ndarray) -> np.ndarray:
    """Inverse of a symmetric positive definite matrix via eigendecomposition."""
    eig = sym_eig(a)
    w = eig.eigenvalues
    if w[-1] <= 0.0:
        raise ContractViolation(
            f"psd_inv: matrix is singular or indefinite, "
            f"smallest eigenvalue {w[-1]:.6e}"
        )
    v = eig.eigenvectors
    inv = (v / w) @ v.T
    return 0.5 * (inv + inv.T)


def psd_inv_sqrt(a: np.ndarray) -> np.ndarray:
    """Inverse PSD square root A^{-1/2} of a positive definite matrix."""
    eig = sym_eig(a)
    w = eig.eigenvalues
    if w[-1] <= 0.0:
        raise ContractViolation(
            f"psd_inv_sqrt: matrix is singular or indefinite, "
            f"smallest eigenvalue {w[-1]:.6e}"
        )
    v = eig.eigenvectors
    out = (v / np.sqrt(w)) @ v.T
    return 0.5 * (out + out.T)


def top_r_projector(a: np.ndarray, r: int) -> SpectralProjector:
    """Orthogonal projector onto the span of the ``r`` leading eigenvectors.

    Ties at the r/(r+1) eigenvalue boundary are resolved by the canonical
    eigenvector order of :func:`sym_eig`, so the projector is deterministic
    (though basis-dependent for degenerate spectra).

    Parameters
    ----------
    a : ndarray
        Symmetric positive definite matrix.
    r : int
        Target rank, ``1 <= r <= a.shape[0]``.
    """
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    if not 1 <= r <= n:
        raise ContractViolation(f"projector rank {r} out of range [1, {n}]")
    eig = sym_eig(a)
    vr = eig.eigenvectors[:, :r]
    p = vr @ vr.T
    return SpectralProjector(matrix=0.5 * (p + p.T), rank=r)


def loewner_geq(a: np.ndarray, b: np.ndarray, tol: float = 0.0) -> bool:
    """Check the Loewner ordering ``A >= B`` (A - B positive semidefinite).

    Returns True iff the smallest eigenvalue of ``A - B`` is ``>= -tol``.
    ``tol`` is absolute; callers working at scale should pass something like
    ``rel * lambda_max(A)``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ContractViolation(
            f"loewner_geq: shape mismatch {a.shape} vs {b.shape}"
        )
    diff = _as_symmetric(a - b, rel_tol=np.inf)
    return bool(np.linalg.eigvalsh(diff)[0] >= -tol)


def eigvals_product(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Eigenvalues of ``A B^{-1}`` for symmetric A and PD B, non-increasing.

    ``A B^{-1}`` is similar to the symmetric congruence
    ``B^{-1/2} A B^{-1/2}``, which is what actually gets decomposed; the
    spectra agree but the symmetric route is numerically stable.
    """
    binv_sqrt = psd_inv_sqrt(b)
    m = binv_sqrt @ _as_symmetric(a) @ binv_sqrt
    w = np.linalg.eigvalsh(0.5 * (m + m.T))
    return w[::-1]
