"""Activity indices: scalar, multi-source, eigenvalue-truncated, reduced-rank.

Every index compares the data covariance against the noise covariance
through the core matrices S, G, T of a candidate tuple and is calibrated to
vanish when the tuple contains no activity:

* ``nai_single`` / ``pseudo_z_single`` - the classical scalar indices
  G/S - 1 and S/T - 1 for a single candidate.
* ``mai`` / ``mpz`` - multi-source traces tr{G S^{-1}} - l and
  tr{S T^{-1}} - l.
* ``mai_ext`` / ``mpz_ext`` - keep only the r largest eigenvalues of the
  respective products, subtracting r.
* ``mai_rr`` / ``mpz_rr`` - reduced-rank forms evaluated through the
  rank-r spectral projector of S'; defined on covariance-whitened matrices
  (H' = H Q^{1/2}), so unwhitened input is refused unless the caller
  explicitly asserts uncorrelated unit-power sources (Q = I).

``iterative_index`` is the dispatch used during sequential localization: it
clamps the rank to the current tuple size and switches each family between
its full-rank branch (l <= r) and its truncated/projected branch (l > r).
Eigenvalues of the nonsymmetric products G S^{-1} and S T^{-1} are computed
from symmetric congruences (S^{-1/2} G S^{-1/2} and likewise for T), which
have identical spectra and stay in symmetric-eigensolver territory.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .matcore import ContractViolation, eigvals_product, psd_inv, top_r_projector
from .filters import CoreMatrices


class IndexFamily(Enum):
    """The index families the localizer can scan with."""

    MAI = "mai"
    MPZ = "mpz"
    MAI_EXT = "mai_ext"
    MPZ_EXT = "mpz_ext"
    MAI_RR_I = "mai_rr_i"
    MPZ_RR_I = "mpz_rr_i"

    @property
    def uses_rank(self) -> bool:
        return self not in (IndexFamily.MAI, IndexFamily.MPZ)


@dataclass(frozen=True)
class IndexSpec:
    """An index family plus the rank parameter for its truncated branches.

    The clamp rule (a requested rank above the current tuple size falls
    back to the tuple size) is applied centrally at evaluation time, so a
    single spec serves every iteration of a sequential scan.
    """

    family: IndexFamily
    rank: int | None = None

    def __post_init__(self):
        if self.family.uses_rank:
            if self.rank is None or self.rank < 1:
                raise ContractViolation(
                    f"{self.family.value} requires a positive rank, got {self.rank}"
                )
        # Plain MAI/MPZ ignore rank; tolerate but normalize it away.
        elif self.rank is not None:
            object.__setattr__(self, "rank", None)

    @property
    def label(self) -> str:
        return self.family.value


@dataclass(frozen=True)
class IndexValue:
    """One index evaluation with the effective rank that produced it."""

    value: float
    family: IndexFamily
    l: int
    r_effective: int


def clamp_rank(rank: int, l: int) -> int:
    """Central clamp: a requested rank above the tuple size falls back to l."""
    if rank < 1:
        raise ContractViolation(f"rank must be >= 1, got {rank}")
    if l < 1:
        raise ContractViolation(f"tuple size must be >= 1, got {l}")
    return min(rank, l)


def _check_l(core: CoreMatrices, l: int | None) -> int:
    if l is not None and l != core.l:
        raise ContractViolation(f"stated l = {l} does not match core size {core.l}")
    return core.l


def nai_single(s: float, g: float) -> float:
    """Neural activity index G/S - 1 from the scalar core values."""
    if s <= 0 or g <= 0:
        raise ContractViolation(f"S and G must be positive, got S={s}, G={g}")
    return float(g) / float(s) - 1.0


def pseudo_z_single(s: float, t: float) -> float:
    """Pseudo-Z index S/T - 1 from the scalar core values."""
    if s <= 0 or t <= 0:
        raise ContractViolation(f"S and T must be positive, got S={s}, T={t}")
    return float(s) / float(t) - 1.0


def mai(core: CoreMatrices, l: int | None = None) -> IndexValue:
    """Multi-source activity index tr{G S^{-1}} - l.

    Invariant under whitening of H (trace of similar matrices), so plain
    and whitened cores give the same value.
    """
    l = _check_l(core, l)
    val = float(np.trace(core.G @ psd_inv(core.S)) - l)
    return IndexValue(value=val, family=IndexFamily.MAI, l=l, r_effective=l)


def mpz(core: CoreMatrices, l: int | None = None) -> IndexValue:
    """Multi-source pseudo-Z tr{S T^{-1}} - l; whitening-invariant like mai."""
    l = _check_l(core, l)
    val = float(np.trace(core.S @ psd_inv(core.T)) - l)
    return IndexValue(value=val, family=IndexFamily.MPZ, l=l, r_effective=l)


def mai_ext(core: CoreMatrices, rank: int) -> IndexValue:
    """Sum of the ``rank`` largest eigenvalues of G S^{-1}, minus rank.

    The eigenvalues are whitening-invariant; ranks above l clamp to l,
    where the value coincides with :func:`mai`.
    """
    r = clamp_rank(rank, core.l)
    lam = eigvals_product(core.G, core.S)
    return IndexValue(value=float(lam[:r].sum() - r), family=IndexFamily.MAI_EXT,
                      l=core.l, r_effective=r)


def mpz_ext(core: CoreMatrices, rank: int) -> IndexValue:
    """Sum of the ``rank`` largest eigenvalues of S T^{-1}, minus rank."""
    r = clamp_rank(rank, core.l)
    lam = eigvals_product(core.S, core.T)
    return IndexValue(value=float(lam[:r].sum() - r), family=IndexFamily.MPZ_EXT,
                      l=core.l, r_effective=r)


def _require_whitened(core: CoreMatrices, assume_uncorrelated: bool, what: str):
    if not core.whitened and not assume_uncorrelated:
        raise ContractViolation(
            f"{what} requires whitened matrices (H' = H Q^(1/2)); pass "
            "assume_uncorrelated=True to assert Q = I instead"
        )


def mai_rr(core: CoreMatrices, rank: int, assume_uncorrelated: bool = False) -> IndexValue:
    """Reduced-rank activity index tr{G' S'^{-1} P^(r)} - r.

    The projector comes from the whitened S'; at rank = l it is the
    identity and the value reduces to :func:`mai`.
    """
    _require_whitened(core, assume_uncorrelated, "mai_rr")
    r = clamp_rank(rank, core.l)
    proj = top_r_projector(core.S, r).matrix
    val = float(np.trace(core.G @ psd_inv(core.S) @ proj) - r)
    return IndexValue(value=val, family=IndexFamily.MAI_RR_I, l=core.l, r_effective=r)


def mpz_rr(core: CoreMatrices, rank: int, assume_uncorrelated: bool = False) -> IndexValue:
    """Reduced-rank pseudo-Z tr{S' T'^{-1} P^(r)} - r (whitened matrices)."""
    _require_whitened(core, assume_uncorrelated, "mpz_rr")
    r = clamp_rank(rank, core.l)
    proj = top_r_projector(core.S, r).matrix
    val = float(np.trace(core.S @ psd_inv(core.T) @ proj) - r)
    return IndexValue(value=val, family=IndexFamily.MPZ_RR_I, l=core.l, r_effective=r)


def iterative_index(
    spec: IndexSpec,
    core: CoreMatrices,
    l: int | None = None,
    r: int | None = None,
) -> IndexValue:
    """Evaluate one index family on the current candidate tuple.

    Sequential localization grows the tuple one source at a time, so the
    effective rank is clamped to the current size l.  While l <= r every
    family evaluates its full-rank form; for the reduced-rank families this
    follows from the projector being the identity, which also makes the
    value independent of whitening.  Once l > r, the truncated families
    switch to their rank-limited branches; the reduced-rank branch projects
    on the unwhitened S, matching the practical setting where Q is unknown
    and sources are modeled as uncorrelated.

    ``l``/``r`` optionally restate the tuple size and rank for validation
    and override of ``spec.rank``.
    """
    l = _check_l(core, l)
    fam = spec.family
    if not fam.uses_rank:
        return mai(core) if fam is IndexFamily.MAI else mpz(core)
    r = clamp_rank(spec.rank if r is None else r, l)
    if l <= r:
        if fam in (IndexFamily.MAI_EXT, IndexFamily.MAI_RR_I):
            base = mai(core)
        else:
            base = mpz(core)
        return IndexValue(value=base.value, family=fam, l=l, r_effective=l)
    if fam is IndexFamily.MAI_EXT:
        base = mai_ext(core, r)
    elif fam is IndexFamily.MPZ_EXT:
        base = mpz_ext(core, r)
    elif fam is IndexFamily.MAI_RR_I:
        proj = top_r_projector(core.S, r).matrix
        val = float(np.trace(core.G @ psd_inv(core.S) @ proj) - r)
        return IndexValue(value=val, family=fam, l=l, r_effective=r)
    else:
        proj = top_r_projector(core.S, r).matrix
        val = float(np.trace(core.S @ psd_inv(core.T) @ proj) - r)
        return IndexValue(value=val, family=fam, l=l, r_effective=r)
    return IndexValue(value=base.value, family=fam, l=l, r_effective=r)
