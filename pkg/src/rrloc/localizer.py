"""Sequential source discovery, rank selection, and source-count estimation.

The localizer grows a source tuple greedily: at iteration l it evaluates the
configured activity index on (found sources + candidate) for every remaining
candidate and keeps the argmax.  While l is at most the selected rank r the
full-rank index is used; beyond that the rank-limited branch takes over.

The inner scan is the hot loop, so a :class:`ScanContext` precomputes the
Gram tables L^t R^{-1} L, L^t N^{-1} L, L^t R^{-1} N R^{-1} L once per
covariance pair; any candidate tuple's core matrices are then plain
submatrix gathers, and whole candidate sweeps run through batched symmetric
eigendecompositions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .matcore import ContractViolation, _as_symmetric, eigvals_product, psd_inv
from .filters import CoreMatrices
from .forward import LeadfieldSet
from .indices import IndexFamily, IndexSpec, clamp_rank


@dataclass(frozen=True)
class LocalizationConfig:
    """What to scan with: assumed source count, rank rule threshold, index.

    ``exclusion`` controls whether found sources leave the candidate pool.
    With it off, already-found candidates are still never re-selected (a
    duplicate column would make H rank-deficient); they are merely skipped
    in place, so the scan cost stays s per iteration instead of s - (l-1).
    """

    l0: int
    spec: IndexSpec
    delta: float = 0.8
    exclusion: bool = True

    def __post_init__(self):
        if self.l0 < 1:
            raise ContractViolation(f"l0 must be >= 1, got {self.l0}")
        if not 0.0 < self.delta <= 1.0:
            raise ContractViolation(f"delta must be in (0, 1], got {self.delta}")


@dataclass(frozen=True)
class LocalizationResult:
    """Ordered discoveries with their per-iteration best index values."""

    found: tuple[int, ...]
    index_trace: tuple[float, ...]
    r_used: int
    errors_mm: tuple[float, ...] | None = None
    n_evaluated: int = 0

    def __post_init__(self):
        if len(set(self.found)) != len(self.found):
            raise ContractViolation("found sources must be distinct")


@dataclass(frozen=True)
class SourceCountEstimate:
    """Saturation-based source-count estimate with diagnostic flags.

    ``plateaued`` is False when no plateau appeared by ``l_max`` (the
    estimate is then l_max itself); ``near_zero`` marks a pure-noise-like
    best value at the estimate.
    """

    estimate: int
    values: tuple[float, ...]
    plateaued: bool
    near_zero: bool


def rank_from_eigenmass(eigenvalues, l0: int, delta: float) -> int:
    """Smallest l whose cumulative share of the top-l0 eigenmass exceeds delta.

    Shares are the leading l0 eigenvalues normalized by their sum; the
    comparison is strictly greater-than, so with five equal eigenvalues and
    delta = 0.8 the cumulative share 4/5 = 0.8 does not qualify and the
    rule returns 5.  If no prefix qualifies (delta = 1), the fallback is l0.
    """
    if not 0.0 < delta <= 1.0:
        raise ContractViolation(f"delta must be in (0, 1], got {delta}")
    lam = np.asarray(eigenvalues, dtype=float)
    if lam.ndim != 1 or len(lam) < l0 or l0 < 1:
        raise ContractViolation(
            f"need at least l0 = {l0} eigenvalues, got shape {lam.shape}"
        )
    top = lam[:l0]
    if top.sum() <= 0:
        raise ContractViolation("top-l0 eigenmass must be positive")
    cum = np.cumsum(top / top.sum())
    hits = np.nonzero(cum > delta)[0]
    return int(hits[0]) + 1 if len(hits) else l0


def select_rank(r_cov: np.ndarray, n_cov: np.ndarray, l0: int, delta: float) -> int:
    """Rank for the reduced-rank indices from the spectrum of R N^{-1}.

    Eigenvalues of R N^{-1} are computed through the symmetric congruence
    N^{-1/2} R N^{-1/2} and fed to :func:`rank_from_eigenmass`.
    """
    if l0 > r_cov.shape[0]:
        raise ContractViolation(f"l0 = {l0} exceeds sensor count {r_cov.shape[0]}")
    lam = eigvals_product(_as_symmetric(np.asarray(r_cov, dtype=float)),
                          _as_symmetric(np.asarray(n_cov, dtype=float)))
    return rank_from_eigenmass(lam, l0, delta)


class ScanContext:
    """Precomputed Gram tables for repeated index evaluation over one (R, N).

    For any tuple theta the core matrices are submatrices of the three
    s x s tables, so a full candidate sweep at iteration l costs one
    (n_candidates, l, l) gather plus batched eigendecompositions instead of
    n_candidates separate solves.
    """

    def __init__(self, leads: LeadfieldSet, r_cov: np.ndarray, n_cov: np.ndarray):
        r_cov = _as_symmetric(np.asarray(r_cov, dtype=float))
        n_cov = _as_symmetric(np.asarray(n_cov, dtype=float))
        if r_cov.shape != (leads.m,) * 2 or n_cov.shape != (leads.m,) * 2:
            raise ContractViolation("covariance shape does not match sensor count")
        self.leads = leads
        self.r_inv = psd_inv(r_cov)
        self.n_inv = psd_inv(n_cov)
        lmat = leads.columns
        a = self.r_inv @ lmat
        b = self.n_inv @ lmat
        c = self.r_inv @ (n_cov @ a)
        self.SL = _as_symmetric(lmat.T @ a, rel_tol=1e-8)
        self.GL = _as_symmetric(lmat.T @ b, rel_tol=1e-8)
        self.TL = _as_symmetric(lmat.T @ c, rel_tol=1e-8)
        self._rn_eigs = eigvals_product(r_cov, n_cov)

    @property
    def rn_eigenvalues(self) -> np.ndarray:
        """Descending eigenvalues of R N^{-1} (for rank selection)."""
        return self._rn_eigs

    def core_for(self, thetas) -> CoreMatrices:
        """Exact CoreMatrices for one tuple (slow path, for verification)."""
        idx = list(int(t) for t in thetas)
        if len(set(idx)) != len(idx):
            raise ContractViolation(f"duplicate candidate index in {thetas}")
        sub = np.ix_(idx, idx)
        return CoreMatrices(
            S=self.SL[sub].copy(),
            G=self.GL[sub].copy(),
            T=self.TL[sub].copy(),
            H=self.leads.columns[:, idx].copy(),
            R_inv=self.r_inv,
            N_inv=self.n_inv,
            whitened=False,
        )

    def sweep(self, spec: IndexSpec, found, candidates, rank: int | None = None
              ) -> np.ndarray:
        """Index values for (found + candidate) over a whole candidate array.

        ``rank`` overrides ``spec.rank``; it is clamped to the tuple size
        l = len(found) + 1.  Candidates duplicating a found source yield
        -inf (their tuple is rank-deficient by construction).
        """
        found = list(int(t) for t in found)
        cand = np.asarray(list(candidates), dtype=int)
        if cand.ndim != 1 or len(cand) == 0:
            raise ContractViolation("candidate sweep needs a nonempty index array")
        l = len(found) + 1
        fam = spec.family
        r = l if not fam.uses_rank else clamp_rank(
            spec.rank if rank is None else rank, l)

        rows = np.concatenate(
            [np.tile(np.array(found, dtype=int), (len(cand), 1)),
             cand[:, None]], axis=1) if found else cand[:, None]
        take = (rows[:, :, None], rows[:, None, :])
        s_b = self.SL[take]
        dup = np.isin(cand, np.array(found, dtype=int)) if found else \
            np.zeros(len(cand), dtype=bool)

        # duplicated candidates make the batch's S singular; their rows are
        # overwritten with -inf below, so the divide noise is expected
        with np.errstate(divide="ignore", invalid="ignore"):
            if fam in (IndexFamily.MAI, IndexFamily.MAI_EXT, IndexFamily.MAI_RR_I):
                vals = self._mai_like(fam, s_b, self.GL[take], l, r)
            else:
                vals = self._mpz_like(fam, s_b, self.TL[take], l, r)
        vals[dup] = -np.inf
        return vals

    @staticmethod
    def _mai_like(fam, s_b, g_b, l, r):
        w, v = np.linalg.eigh(s_b)
        if l <= r or fam is not IndexFamily.MAI_EXT:
            # tr{G S^{-1} P} = sum over kept eigenpairs of (v^t G v) / w.
            diag = np.einsum("naj,nab,nbj->nj", v, g_b, v)
            keep = slice(None) if l <= r else slice(l - r, None)
            rank_used = l if l <= r else r
            return (diag[:, keep] / w[:, keep]).sum(axis=1) - rank_used
        inv_sqrt = np.einsum("naj,nj,nbj->nab", v, 1.0 / np.sqrt(w), v)
        lam = np.linalg.eigvalsh(inv_sqrt @ g_b @ inv_sqrt)
        return lam[:, l - r:].sum(axis=1) - r

    @staticmethod
    def _mpz_like(fam, s_b, t_b, l, r):
        mu, u = np.linalg.eigh(t_b)
        if l <= r or fam is IndexFamily.MPZ:
            diag = np.einsum("naj,nab,nbj->nj", u, s_b, u)
            return (diag / mu).sum(axis=1) - l
        if fam is IndexFamily.MPZ_EXT:
            inv_sqrt = np.einsum("naj,nj,nbj->nab", u, 1.0 / np.sqrt(mu), u)
            lam = np.linalg.eigvalsh(inv_sqrt @ s_b @ inv_sqrt)
            return lam[:, l - r:].sum(axis=1) - r
        # MPZ_RR_I, l > r: tr{S T^{-1} P_S} with the projector from S.
        t_inv = np.einsum("naj,nj,nbj->nab", u, 1.0 / mu, u)
        w, v = np.linalg.eigh(s_b)
        vt = v[:, :, l - r:]
        diag = np.einsum("naj,nab,nbj->nj", vt, t_inv, vt)
        return (w[:, l - r:] * diag).sum(axis=1) - r


def localize(
    config: LocalizationConfig,
    r_cov: np.ndarray,
    n_cov: np.ndarray,
    leads: LeadfieldSet,
    q_hint: np.ndarray | None = None,
    rank: int | None = None,
    true_positions: np.ndarray | None = None,
    scale_mm: float = 1000.0,
    context: ScanContext | None = None,
) -> LocalizationResult:
    """Greedy sequential discovery of ``config.l0`` sources.

    At each iteration the configured index is evaluated on the found tuple
    extended by every remaining candidate; the argmax joins the tuple (ties
    resolve to the lowest candidate index, deterministically).  ``rank``
    overrides the spec's rank (the harness passes the data-driven
    selection).  ``q_hint`` is accepted for exact-covariance studies; the
    full-rank branch values are invariant under source-covariance whitening
    (traces of similar matrices) and the rank-limited branch deliberately
    uses unwhitened matrices, so the hint never changes the trajectory —
    it is validated and otherwise inert.  When ``true_positions`` is given,
    per-iteration Chebyshev errors (in mm via ``scale_mm``) are attached.
    """
    if q_hint is not None:
        q_hint = np.asarray(q_hint, dtype=float)
        if q_hint.ndim != 2 or q_hint.shape[0] != q_hint.shape[1]:
            raise ContractViolation(f"q_hint must be square, got {q_hint.shape}")
    ctx = context if context is not None else ScanContext(leads, r_cov, n_cov)
    spec = config.spec
    r_eff = None
    if spec.family.uses_rank:
        r_eff = clamp_rank(spec.rank if rank is None else rank, config.l0)

    pool = np.arange(leads.s)
    found: list[int] = []
    trace: list[float] = []
    n_eval = 0
    for _ in range(config.l0):
        if len(pool) == 0:
            raise ContractViolation("candidate pool exhausted before reaching l0")
        vals = ctx.sweep(spec, found, pool, rank=r_eff)
        n_eval += int(np.isfinite(vals).sum())
        best = int(np.argmax(vals))  # first max = lowest candidate index on ties
        if not np.isfinite(vals[best]):
            raise ContractViolation("no evaluable candidate remains")
        found.append(int(pool[best]))
        trace.append(float(vals[best]))
        if config.exclusion:
            pool = np.delete(pool, best)

    errors = None
    if true_positions is not None:
        true_positions = np.asarray(true_positions, dtype=float).reshape(-1, 3)
        errors = tuple(
            chebyshev_error(ctx.leads.positions[i], true_positions) * scale_mm
            for i in found
        )
    return LocalizationResult(
        found=tuple(found),
        index_trace=tuple(trace),
        r_used=r_eff if r_eff is not None else config.l0,
        errors_mm=errors,
        n_evaluated=n_eval,
    )


def estimate_source_count(
    r_cov: np.ndarray,
    n_cov: np.ndarray,
    leads: LeadfieldSet,
    l_max: int,
    plateau_tol: float = 1e-6,
    spec: IndexSpec | None = None,
) -> SourceCountEstimate:
    """Source count from saturation of the best index value.

    Runs the greedy scan out to ``l_max`` and returns the smallest l whose
    best value grows by less than ``plateau_tol * max(|value|, 1)`` at the
    next step (the floor keeps the rule meaningful for pure noise, where
    the values sit at zero).  Without a plateau the estimate is ``l_max``
    with ``plateaued = False``.
    """
    if l_max < 1 or l_max > leads.m:
        raise ContractViolation(f"l_max must be in [1, m={leads.m}], got {l_max}")
    if spec is None:
        spec = IndexSpec(IndexFamily.MAI)
    cfg = LocalizationConfig(l0=l_max, spec=spec)
    res = localize(cfg, r_cov, n_cov, leads)
    values = res.index_trace
    estimate, plateaued = l_max, False
    for l in range(1, l_max):
        current, nxt = values[l - 1], values[l]
        if nxt - current < plateau_tol * max(abs(current), 1.0):
            estimate, plateaued = l, True
            break
    near_zero = abs(values[estimate - 1]) < 1e-6
    return SourceCountEstimate(
        estimate=estimate,
        values=tuple(values),
        plateaued=plateaued,
        near_zero=near_zero,
    )


def chebyshev_error(found_pos: np.ndarray, true_positions: np.ndarray) -> float:
    """Chebyshev distance from one found position to the closest true source.

    The metric is max absolute coordinate difference, minimized over the
    (nonempty) set of true positions; units follow the inputs.
    """
    found_pos = np.asarray(found_pos, dtype=float).reshape(3)
    true_positions = np.asarray(true_positions, dtype=float).reshape(-1, 3)
    if len(true_positions) == 0:
        raise ContractViolation("true position set must be nonempty")
    return float(np.abs(true_positions - found_pos).max(axis=1).min())
