"""Core quadratic forms and spatial filters for a candidate source tuple.

For a leadfield matrix H and covariances R (data) and N (noise), everything
downstream is built from three positive definite l x l matrices:

    S = H^t R^{-1} H,   G = H^t N^{-1} H,   T = H^t R^{-1} N R^{-1} H.

When a source covariance Q is supplied, H is first whitened to
H' = H Q^{1/2}, giving the primed versions S', G', T'.  The
minimum-variance distortionless filter is W = S^{-1} H^t R^{-1} (unit gain:
W H = I), its noise-only counterpart is W_N = G^{-1} H^t N^{-1}, and the
reduced-rank variant projects W onto the top-r eigenspace of S (or S' when
whitened).  All inversions go through eigendecompositions of symmetrized
matrices — never generic LU — so repeated evaluation is bit-reproducible
and symmetry is preserved.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .matcore import (
    ContractViolation,
    _as_symmetric,
    psd_inv,
    psd_sqrt,
    sym_eig,
    top_r_projector,
)

#: Condition number of S above which a filter is flagged as ill-conditioned.
#: Flag, not error: strongly correlated close sources are the regime of
#: interest and must remain computable.
COND_WARN_THRESHOLD = 1e12


@dataclass(frozen=True)
class CoreMatrices:
    """The triple (S, G, T) for one candidate tuple, plus what built it.

    ``whitened`` records whether H already absorbed the source covariance
    (H' = H Q^{1/2}); index formulas that depend on whitening check this
    flag instead of guessing.  ``R_inv``/``N_inv`` are kept for filter
    construction so a scan can share them read-only.
    """

    S: np.ndarray
    G: np.ndarray
    T: np.ndarray
    H: np.ndarray
    R_inv: np.ndarray
    N_inv: np.ndarray
    whitened: bool = False

    @property
    def l(self) -> int:
        return self.S.shape[0]


@dataclass(frozen=True)
class SpatialFilter:
    """Weight matrix W (l x m) with its effective rank and provenance.

    ``kind`` is "lcmv" (full rank, unit gain W H = I) or "mvpure" (rank-r
    spectral projection of the LCMV weights).  ``ill_conditioned`` is set
    when cond(S) exceeded the warning threshold during construction.
    """

    W: np.ndarray
    rank: int
    kind: str
    ill_conditioned: bool = False


def core_matrices(
    h: np.ndarray,
    r: np.ndarray,
    n: np.ndarray,
    q: np.ndarray | None = None,
) -> CoreMatrices:
    """Compute S, G, T (or S', G', T' when a source covariance is given).

    Parameters
    ----------
    h : ndarray, shape (m, l)
        Leadfield block; must be tall with full column rank.
    r, n : ndarray, shape (m, m)
        Data and noise covariances, symmetric positive definite.
    q : ndarray, shape (l, l), optional
        Source covariance; when given, H is whitened to H Q^{1/2} and the
        result's ``whitened`` flag is set.
    """
    h = np.asarray(h, dtype=float)
    if h.ndim != 2 or h.shape[0] < h.shape[1]:
        raise ContractViolation(f"H must be tall (m >= l), got {h.shape}")
    sv = np.linalg.svd(h, compute_uv=False)
    if sv[-1] <= 1e-10 * sv[0]:
        raise ContractViolation(
            f"H is rank deficient: smallest singular value {sv[-1]:.3e} "
            f"(largest {sv[0]:.3e})"
        )
    whitened = q is not None
    if whitened:
        h = h @ psd_sqrt(_as_symmetric(np.asarray(q, dtype=float)))
    n = np.asarray(n, dtype=float)
    r_inv = psd_inv(_as_symmetric(np.asarray(r, dtype=float)))
    n_inv = psd_inv(_as_symmetric(n))
    rh = r_inv @ h
    s = h.T @ rh
    g = h.T @ n_inv @ h
    t = rh.T @ n @ rh
    return CoreMatrices(
        S=0.5 * (s + s.T),
        G=0.5 * (g + g.T),
        T=0.5 * (t + t.T),
        H=h,
        R_inv=r_inv,
        N_inv=n_inv,
        whitened=whitened,
    )


def _check_condition(s: np.ndarray, what: str) -> bool:
    eig = sym_eig(s)
    cond = eig.eigenvalues[0] / eig.eigenvalues[-1]
    if cond > COND_WARN_THRESHOLD:
        warnings.warn(
            f"{what} condition number {cond:.3e} exceeds "
            f"{COND_WARN_THRESHOLD:.0e}; filter may be unstable",
            RuntimeWarning,
            stacklevel=3,
        )
        return True
    return False


def lcmv(h: np.ndarray, r: np.ndarray) -> SpatialFilter:
    """Minimum-variance distortionless filter W = S^{-1} H^t R^{-1}.

    Satisfies W H = I exactly and minimizes tr{W R W^t} = tr{S^{-1}} over
    all unit-gain filters.  An ill-conditioned S sets a warning flag on the
    result instead of aborting.
    """
    h = np.asarray(h, dtype=float)
    r_inv = psd_inv(_as_symmetric(np.asarray(r, dtype=float)))
    s = _as_symmetric(h.T @ r_inv @ h)
    flagged = _check_condition(s, "S")
    w = psd_inv(s) @ h.T @ r_inv
    return SpatialFilter(W=w, rank=h.shape[1], kind="lcmv", ill_conditioned=flagged)


def lcmv_noise(h: np.ndarray, n: np.ndarray) -> SpatialFilter:
    """Noise-optimal unit-gain filter W_N = G^{-1} H^t N^{-1}.

    Minimizes output power against the noise covariance instead of the data
    covariance; its noise output covariance is W_N N W_N^t = G^{-1}.
    """
    h = np.asarray(h, dtype=float)
    n_inv = psd_inv(_as_symmetric(np.asarray(n, dtype=float)))
    g = _as_symmetric(h.T @ n_inv @ h)
    flagged = _check_condition(g, "G")
    w = psd_inv(g) @ h.T @ n_inv
    return SpatialFilter(W=w, rank=h.shape[1], kind="lcmv", ill_conditioned=flagged)


def mvpure(
    h: np.ndarray,
    r: np.ndarray,
    rank: int,
    q: np.ndarray | None = None,
) -> SpatialFilter:
    """Reduced-rank minimum-variance filter: top-``rank`` projection of W.

    W_rr = P^(r) S^{-1} H^t R^{-1}, where P^(r) projects onto the span of
    the leading ``rank`` eigenvectors of S (of S' = Q^{1/2} S Q^{1/2} built
    from the whitened leadfield when ``q`` is given).  With ``rank == l``
    the projector is the identity and the filter reduces exactly to the
    full-rank one.  The output covariance obeys
    W_rr R W_rr^t = P S^{-1} P = S^{-1} P because P commutes with S.
    """
    h = np.asarray(h, dtype=float)
    if q is not None:
        h = h @ psd_sqrt(_as_symmetric(np.asarray(q, dtype=float)))
    l = h.shape[1]
    if not 1 <= rank <= l:
        raise ContractViolation(f"rank {rank} outside [1, {l}]")
    r_inv = psd_inv(_as_symmetric(np.asarray(r, dtype=float)))
    s = _as_symmetric(h.T @ r_inv @ h)
    flagged = _check_condition(s, "S")
    proj = top_r_projector(s, rank).matrix
    w = proj @ psd_inv(s) @ h.T @ r_inv
    return SpatialFilter(W=w, rank=rank, kind="mvpure", ill_conditioned=flagged)
